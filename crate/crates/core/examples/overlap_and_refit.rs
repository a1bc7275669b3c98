//! Selects 10 interactions with every method, tabulates the overlaps and
//! refits the robust selections under the main-effect hierarchy.

use gxe_robust::eval::{cv_theta, overlap_table, select_fixed_count, ExperimentOptions, Method, MethodSelection};
use gxe_robust::robust::{cd_mm_fit, refit_hierarchy, working_designs, RobustTuning, SolverOptions};
use gxe_robust::sim::{gen_dataset, ScenarioConfig};

fn main() -> gxe_robust::Result<()> {
    let config = ScenarioConfig {
        p: 60,
        correlation: "band:0.3".parse()?,
        error: "mix:cauchy:0.2".parse()?,
        seed: 8,
        ..ScenarioConfig::default()
    };
    let (ds, _) = gen_dataset(&config)?;
    let designs = working_designs(&ds)?;
    let options = ExperimentOptions {
        n_theta: 6,
        ..ExperimentOptions::default()
    };
    let k = 10;
    let (theta, _) = cv_theta(&ds, k, &options)?;

    let mut selections = Vec::new();
    for method in Method::ALL {
        let t = (method == Method::Robust).then_some(theta);
        selections.push(select_fixed_count(&designs, method, t, k, &options)?);
    }
    let table = overlap_table(&selections.iter().map(MethodSelection::from).collect::<Vec<_>>())?;
    print!("{}", table.to_table());
    println!("(genes, interactions in parentheses)\n");

    let robust = &selections[0];
    let lambda = robust.lambda.expect("robust selection has a lambda");
    let solver = SolverOptions::default();
    for gene in robust.genes() {
        let fit = cd_mm_fit(&designs[gene], RobustTuning::new(theta, lambda)?, &vec![0.0; designs[gene].dim()], &solver)?;
        let refit = refit_hierarchy(&fit, &designs[gene], &solver)?;
        let gamma: Vec<String> = refit
            .selected
            .iter()
            .map(|&e| format!("env {} {:+.3}", e + 1, refit.zeta[gxe_robust::data::interaction_column(ds.q(), e)]))
            .collect();
        println!(
            "gene {:>2}: beta {:+.3}; {}; loss {:.4} -> {:.4}",
            gene + 1,
            refit.zeta[ds.q() + 1],
            gamma.join(", "),
            refit.penalized_objective,
            refit.objective
        );
    }
    Ok(())
}
