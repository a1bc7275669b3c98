//! Cross-validates theta, selects a fixed number of interactions and reports
//! their leave-one-out selection frequencies.

use gxe_robust::eval::{cv_theta, stability_loo, ExperimentOptions, Method};
use gxe_robust::sim::{gen_dataset, ScenarioConfig};

fn main() -> gxe_robust::Result<()> {
    let config = ScenarioConfig {
        n: 200,
        p: 30,
        seed: 5,
        ..ScenarioConfig::default()
    };
    let (ds, truth) = gen_dataset(&config)?;
    let options = ExperimentOptions {
        n_lambda: 30,
        n_theta: 6,
        ..ExperimentOptions::default()
    };
    let k = 6;
    let (theta, errors) = cv_theta(&ds, k, &options)?;
    for (t, err) in &errors {
        println!("theta {t:>11.4e}  cv error {err:.4}");
    }
    let report = stability_loo(&ds, Method::Robust, k, Some(theta), &options)?;
    println!("theta {theta:.4e}, lambda {:.4e}", report.full.lambda.unwrap_or(f64::NAN));
    for (s, f) in report.full.interactions.iter().zip(&report.frequency) {
        let tag = if truth.is_interaction(s.gene, s.env) { "true" } else { "null" };
        println!("gene {:>2} x env {}  coef {:+.3}  frequency {f:.3}  ({tag})", s.gene + 1, s.env + 1, s.coef);
    }
    if report.failures > 0 {
        println!("{} of {} reduced fits failed", report.failures, report.n);
    }
    Ok(())
}
