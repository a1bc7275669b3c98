//! Generates a contaminated AR(0.2) scenario, writes the dataset and truth
//! CSVs to a temporary directory and reads them back.

use gxe_robust::data::{load_csv, sort_and_weight, CsvSchema};
use gxe_robust::sim::{simulate, GroundTruth, ScenarioConfig};

fn main() -> gxe_robust::Result<()> {
    let config = ScenarioConfig {
        n: 300,
        p: 500,
        correlation: "ar:0.2".parse()?,
        error: "mix:cauchy:0.3".parse()?,
        seed: 7,
        ..ScenarioConfig::default()
    };
    let sim = simulate(&config)?;
    let contaminated = sim.contaminated.iter().filter(|c| **c).count();
    println!("{}: censoring rate {:.4}, {contaminated} contaminated errors", config.label(), sim.censoring_rate);

    let dir = std::env::temp_dir().join(format!("gxe_simulate_{}", std::process::id()));
    std::fs::create_dir_all(&dir).expect("temp dir");
    let data_path = dir.join("dataset.csv");
    let truth_path = dir.join("truth.csv");
    gxe_robust::data::write_csv(&sim.raw, &data_path)?;
    sim.truth.write_csv(&truth_path)?;

    let ds = sort_and_weight(load_csv(&data_path, CsvSchema { q: Some(3), p: Some(500) })?)?;
    let truth = GroundTruth::load_csv(&truth_path)?;
    assert_eq!(truth, sim.truth);
    println!(
        "reloaded {} x ({} + {}) with {:.1}% censored; sum of KM weights {:.4}",
        ds.n(),
        ds.q(),
        ds.p(),
        100.0 * ds.censoring_fraction(),
        ds.weights().sum()
    );
    for (g, e, coef) in &truth.interactions {
        println!("  interaction gene {:>3} x env {}: {coef:+.3}", g + 1, e + 1);
    }
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}
