//! Simulates one scenario and fits the robust solution surface over the default grid.

use std::time::Instant;

use gxe_robust::robust::{fit_surface, grid_from_data, SolverOptions, DEFAULT_N_LAMBDA, DEFAULT_N_THETA};
use gxe_robust::sim::{gen_dataset, ScenarioConfig};

fn main() -> gxe_robust::Result<()> {
    let config = ScenarioConfig {
        correlation: "ar:0.2".parse()?,
        error: "mix:cauchy:0.3".parse()?,
        seed: 1,
        ..ScenarioConfig::default()
    };
    let (ds, truth) = gen_dataset(&config)?;
    println!(
        "n = {}, p = {}, q = {}, censored {:.1}%",
        ds.n(),
        ds.p(),
        ds.q(),
        100.0 * ds.censoring_fraction()
    );

    let grid = grid_from_data(&ds, DEFAULT_N_LAMBDA, DEFAULT_N_THETA)?;
    let start = Instant::now();
    let surface = fit_surface(&ds, &grid, &SolverOptions::default())?;
    let elapsed = start.elapsed();

    let total = surface.fits().count();
    let converged = surface.fits().filter(|f| f.converged).count();
    let sweeps: usize = surface.fits().map(|f| f.iterations).sum();
    println!(
        "{total} fits in {elapsed:.2?}: {converged} converged, {:.1} sweeps on average",
        sweeps as f64 / total as f64
    );

    // true interactions recovered at the end of the path, per theta
    let last = surface.n_lambda() - 1;
    for (t, theta) in grid.thetas.iter().enumerate() {
        let hits = truth
            .interactions
            .iter()
            .filter(|&&(g, e, _)| {
                surface
                    .get(g, last, t)
                    .is_some_and(|f| f.zeta[gxe_robust::data::interaction_column(ds.q(), e)] != 0.0)
            })
            .count();
        let selected: usize = (0..ds.p())
            .filter_map(|g| surface.get(g, last, t))
            .map(|f| (0..ds.q()).filter(|&e| f.zeta[gxe_robust::data::interaction_column(ds.q(), e)] != 0.0).count())
            .sum();
        println!("theta {theta:>12.4e}: {hits}/10 true interactions active at lambda_min, {selected} selected in total");
    }
    Ok(())
}
