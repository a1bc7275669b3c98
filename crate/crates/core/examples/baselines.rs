//! Fits the three comparators to one dataset and lists each method's top-ranked interactions.

use gxe_robust::baselines::{quantile_lasso_surface_designs, stute_fit, wls_lasso_surface_designs, QuantileOptions, WlsOptions};
use gxe_robust::eval::{rank_interactions, rank_stute, roc_auc, InteractionPath, InteractionRanking};
use gxe_robust::robust::working_designs;
use gxe_robust::sim::{gen_dataset, GroundTruth, ScenarioConfig};

fn show(ranking: &InteractionRanking, truth: &GroundTruth) -> gxe_robust::Result<()> {
    let auc = roc_auc(ranking, truth)?.auc;
    let top: Vec<String> = ranking
        .top(10)
        .iter()
        .map(|p| {
            let mark = if truth.is_interaction(p.gene, p.env) { "*" } else { "" };
            format!("{}x{}{mark}", p.gene + 1, p.env + 1)
        })
        .collect();
    println!("{:>9}  AUC {auc:.3}  top 10: {}", ranking.method, top.join(" "));
    Ok(())
}

fn main() -> gxe_robust::Result<()> {
    let config = ScenarioConfig {
        error: "mix:t3:0.2".parse()?,
        seed: 3,
        ..ScenarioConfig::default()
    };
    let (ds, truth) = gen_dataset(&config)?;
    let designs = working_designs(&ds)?;

    let wls = wls_lasso_surface_designs(&designs, 50, &WlsOptions::default())?;
    show(&rank_interactions(&InteractionPath::from_surface(&wls), 0, "unrobust")?, &truth)?;

    let fits: Vec<_> = designs.iter().map(stute_fit).collect();
    show(&rank_stute(&fits, ds.q())?, &truth)?;

    for tau in [0.25, 0.5, 0.75] {
        let options = QuantileOptions {
            tau,
            ..QuantileOptions::default()
        };
        let surface = quantile_lasso_surface_designs(&designs, 50, &options)?;
        let name = format!("q{tau}");
        show(&rank_interactions(&InteractionPath::from_surface(&surface), 0, &name)?, &truth)?;
    }
    println!("(* marks a true interaction)");
    Ok(())
}
