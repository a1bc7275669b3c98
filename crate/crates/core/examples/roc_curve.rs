//! Scores the robust surface of one replicate slice by slice and prints the
//! ROC points of the best slice as CSV.

use gxe_robust::eval::{score_method, ExperimentOptions, Method};
use gxe_robust::robust::working_designs;
use gxe_robust::sim::{gen_dataset, ScenarioConfig};

fn main() -> gxe_robust::Result<()> {
    let (ds, truth) = gen_dataset(&ScenarioConfig {
        seed: 11,
        ..ScenarioConfig::default()
    })?;
    let designs = working_designs(&ds)?;
    let options = ExperimentOptions::default();
    let score = score_method(&designs, &truth, Method::Robust, &options)?;
    for (t, auc) in score.per_theta.iter().enumerate() {
        eprintln!("theta slice {t}: AUC {auc:.3}");
    }
    eprintln!("best slice AUC {:.3}, {} fits not converged", score.auc, score.nonconverged);
    print!("{}", score.roc.to_csv_string());
    Ok(())
}
