//! Simulation scenarios: correlated covariates, sparse true effects,
//! contaminated errors, AFT responses and calibrated exponential censoring.

mod config;

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution, Exp1, StandardNormal, StudentT, Uniform};

pub use config::{Contaminant, Correlation, ErrorLaw, ScenarioConfig};

use crate::data::{sort_and_weight, RawObservations, SurvivalDataset};
use crate::error::{GxeError, Result};

pub const PILOT_DRAWS: usize = 10_000;
pub const CALIBRATION_TOLERANCE: f64 = 0.02;

const STREAM_TRUTH: u64 = 1;
const STREAM_COVARIATES: u64 = 2;
const STREAM_ERRORS: u64 = 3;
const STREAM_PILOT: u64 = 4;
const STREAM_CENSORING: u64 = 5;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// True nonzero effects; gene and env indices are 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub env_main: Vec<f64>,
    /// `(gene, coefficient)`
    pub gene_main: Vec<(usize, f64)>,
    /// `(gene, env, coefficient)`
    pub interactions: Vec<(usize, usize, f64)>,
}

impl GroundTruth {
    pub fn n_effects(&self) -> usize {
        self.env_main.len() + self.gene_main.len() + self.interactions.len()
    }

    pub fn is_interaction(&self, gene: usize, env: usize) -> bool {
        self.interactions.iter().any(|&(g, e, _)| g == gene && e == env)
    }

    /// All coefficients multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> GroundTruth {
        GroundTruth {
            env_main: self.env_main.iter().map(|a| a * factor).collect(),
            gene_main: self.gene_main.iter().map(|&(g, b)| (g, b * factor)).collect(),
            interactions: self.interactions.iter().map(|&(g, e, c)| (g, e, c * factor)).collect(),
        }
    }

    /// Log event time without error, `T - eps`.
    pub fn linear_predictor(&self, x: &Array2<f64>, z: &Array2<f64>) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| {
                let env: f64 = self.env_main.iter().enumerate().map(|(k, a)| a * x[[i, k]]).sum();
                let genes: f64 = self.gene_main.iter().map(|&(g, b)| b * z[[i, g]]).sum();
                let inter: f64 = self.interactions.iter().map(|&(g, e, c)| c * z[[i, g]] * x[[i, e]]).sum();
                env + genes + inter
            })
            .collect()
    }

    /// `effect_type,gene,env,coef` with 1-based indices and blanks where not applicable.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("effect_type,gene,env,coef\n");
        for (k, a) in self.env_main.iter().enumerate() {
            writeln!(out, "env,,{},{a:.16e}", k + 1).unwrap();
        }
        for (g, b) in &self.gene_main {
            writeln!(out, "gene,{},,{b:.16e}", g + 1).unwrap();
        }
        for (g, e, c) in &self.interactions {
            writeln!(out, "interaction,{},{},{c:.16e}", g + 1, e + 1).unwrap();
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv_string()).map_err(|source| GxeError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<GroundTruth> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| GxeError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let parse_err = |line: usize, message: String| GxeError::Parse {
            path: path.to_path_buf(),
            line: line as u64,
            message,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "effect_type,gene,env,coef" => {}
            _ => return Err(parse_err(1, "expected header `effect_type,gene,env,coef`".into())),
        }
        let mut truth = GroundTruth {
            env_main: Vec::new(),
            gene_main: Vec::new(),
            interactions: Vec::new(),
        };
        let mut env_main = Vec::new();
        for (idx, line) in lines {
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != 4 {
                return Err(parse_err(lineno, format!("expected 4 cells, found {}", cells.len())));
            }
            let index = |cell: &str, what: &str| -> Result<usize> {
                cell.parse::<usize>()
                    .ok()
                    .filter(|&v| v >= 1)
                    .map(|v| v - 1)
                    .ok_or_else(|| parse_err(lineno, format!("invalid {what} index `{cell}`")))
            };
            let coef: f64 = cells[3]
                .parse()
                .map_err(|_| parse_err(lineno, format!("invalid coefficient `{}`", cells[3])))?;
            match cells[0] {
                "env" => env_main.push((index(cells[2], "env")?, coef)),
                "gene" => truth.gene_main.push((index(cells[1], "gene")?, coef)),
                "interaction" => truth
                    .interactions
                    .push((index(cells[1], "gene")?, index(cells[2], "env")?, coef)),
                other => return Err(parse_err(lineno, format!("unknown effect type `{other}`"))),
            }
        }
        let q = env_main.iter().map(|&(k, _)| k + 1).max().unwrap_or(0);
        truth.env_main = vec![0.0; q];
        for (k, a) in env_main {
            truth.env_main[k] = a;
        }
        Ok(truth)
    }
}

/// Lower Cholesky factor of the `dim x dim` correlation matrix.
pub fn correlation_factor(correlation: Correlation, dim: usize) -> Result<DMatrix<f64>> {
    let sigma = DMatrix::from_fn(dim, dim, |i, j| correlation.at(i, j));
    sigma
        .cholesky()
        .map(|c| c.unpack())
        .ok_or_else(|| GxeError::NotPositiveDefinite(format!("{correlation} covariance of dimension {dim}")))
}

/// `n` rows of a zero-mean normal vector with covariance `L L'`.
fn correlated_normals(rng: &mut ChaCha8Rng, n: usize, factor: &DMatrix<f64>) -> Array2<f64> {
    let d = factor.nrows();
    let white = Array2::from_shape_fn((n, d), |_| rng.sample::<f64, _>(StandardNormal));
    let lt = Array2::from_shape_fn((d, d), |(i, j)| factor[(j, i)]);
    white.dot(&lt)
}

/// `(X, Z)` with the configured correlation inside each block and none across.
pub fn gen_covariates(config: &ScenarioConfig) -> Result<(Array2<f64>, Array2<f64>)> {
    config.validate()?;
    let fx = correlation_factor(config.correlation, config.q)?;
    let fz = correlation_factor(config.correlation, config.p)?;
    let mut rng = stream(config.seed, STREAM_COVARIATES);
    let x = correlated_normals(&mut rng, config.n, &fx);
    let z = correlated_normals(&mut rng, config.n, &fz);
    Ok((x, z))
}

/// Evenly spaced effect positions with Uniform(0.5, 1.5) coefficients.
pub fn gen_truth(config: &ScenarioConfig) -> Result<GroundTruth> {
    config.validate()?;
    let p = config.p;
    let q = config.q;
    let position = |num: usize, den: usize| num.div_ceil(den).max(1) - 1;
    let mains: Vec<usize> = (1..=5).map(|t| position(p * (2 * t - 1), 10)).collect();
    let pairs: Vec<(usize, usize)> = (1..=10).map(|t| (position(p * (2 * t - 1), 20), (t - 1) % q)).collect();
    if mains.iter().collect::<HashSet<_>>().len() != mains.len()
        || pairs.iter().collect::<HashSet<_>>().len() != pairs.len()
    {
        return Err(GxeError::Parameter(format!(
            "p = {p}, q = {q} is too small to place 5 distinct gene effects and 10 distinct interactions"
        )));
    }
    let mut rng = stream(config.seed, STREAM_TRUTH);
    let coef = Uniform::new_inclusive(0.5, 1.5).unwrap();
    Ok(GroundTruth {
        env_main: (0..q).map(|_| coef.sample(&mut rng)).collect(),
        gene_main: mains.into_iter().map(|g| (g, coef.sample(&mut rng))).collect(),
        interactions: pairs.into_iter().map(|(g, e)| (g, e, coef.sample(&mut rng))).collect(),
    })
}

/// Error draws with the mixture component of each draw.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorDraws {
    pub values: Vec<f64>,
    pub contaminated: Vec<bool>,
}

fn draw_errors(law: ErrorLaw, n: usize, rng: &mut ChaCha8Rng) -> ErrorDraws {
    let cauchy = Cauchy::new(0.0, 1.0).unwrap();
    let t3 = StudentT::new(3.0).unwrap();
    let mut values = Vec::with_capacity(n);
    let mut contaminated = Vec::with_capacity(n);
    for _ in 0..n {
        let (v, c) = match law {
            ErrorLaw::Normal => (rng.sample(StandardNormal), false),
            ErrorLaw::Mixture { contaminant, pi } => {
                if rng.random::<f64>() < pi {
                    let v = match contaminant {
                        Contaminant::Cauchy => cauchy.sample(rng),
                        Contaminant::StudentT3 => t3.sample(rng),
                    };
                    (v, true)
                } else {
                    (rng.sample(StandardNormal), false)
                }
            }
        };
        values.push(v);
        contaminated.push(c);
    }
    ErrorDraws { values, contaminated }
}

/// `n` i.i.d. errors from the configured law.
pub fn gen_error(config: &ScenarioConfig, n: usize) -> ErrorDraws {
    draw_errors(config.error, n, &mut stream(config.seed, STREAM_ERRORS))
}

/// Covariates the truth involves, drawn jointly from their covariance sub-blocks.
fn pilot_predictor(config: &ScenarioConfig, truth: &GroundTruth, rng: &mut ChaCha8Rng, draws: usize) -> Result<Vec<f64>> {
    let mut genes: Vec<usize> = truth
        .gene_main
        .iter()
        .map(|g| g.0)
        .chain(truth.interactions.iter().map(|i| i.0))
        .collect();
    genes.sort_unstable();
    genes.dedup();
    let q = truth.env_main.len().max(config.q);
    let sub = DMatrix::from_fn(genes.len(), genes.len(), |a, b| config.correlation.at(genes[a], genes[b]));
    let fz = sub
        .cholesky()
        .map(|c| c.unpack())
        .ok_or_else(|| GxeError::NotPositiveDefinite(format!("{} covariance of the true genes", config.correlation)))?;
    let fx = correlation_factor(config.correlation, q)?;
    let x = correlated_normals(rng, draws, &fx);
    let zs = correlated_normals(rng, draws, &fz);
    let local = |g: usize| genes.binary_search(&g).unwrap();
    let remapped = GroundTruth {
        env_main: truth.env_main.clone(),
        gene_main: truth.gene_main.iter().map(|&(g, b)| (local(g), b)).collect(),
        interactions: truth.interactions.iter().map(|&(g, e, c)| (local(g), e, c)).collect(),
    };
    Ok(remapped.linear_predictor(&x, &zs))
}

/// Exponential censoring rate hitting `target_censoring` on the log scale.
///
/// Censoring fractions are evaluated on a fixed pilot sample of `PILOT_DRAWS`
/// event times and unit exponentials (common random numbers), so the fraction
/// is monotone in the rate and bisection on `log c` over `[-20, 20]` applies.
pub fn calibrate_censoring(config: &ScenarioConfig, truth: &GroundTruth) -> Result<f64> {
    config.validate()?;
    let mut rng = stream(config.seed, STREAM_PILOT);
    let eta = pilot_predictor(config, truth, &mut rng, PILOT_DRAWS)?;
    let eps = draw_errors(config.error, PILOT_DRAWS, &mut rng);
    let t: Vec<f64> = eta.iter().zip(&eps.values).map(|(a, b)| a + b).collect();
    let log_e: Vec<f64> = (0..PILOT_DRAWS).map(|_| rng.sample::<f64, _>(Exp1).ln()).collect();
    let fraction = |log_rate: f64| {
        let censored = t.iter().zip(&log_e).filter(|(&t, &le)| le - log_rate < t).count();
        censored as f64 / PILOT_DRAWS as f64
    };
    let target = config.target_censoring;
    let (mut lo, mut hi) = (-20.0f64, 20.0f64);
    let (f_lo, f_hi) = (fraction(lo), fraction(hi));
    if !(f_lo <= target && target <= f_hi) {
        return Err(GxeError::Calibration {
            target,
            low: f_lo,
            high: f_hi,
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f = fraction(mid);
        if (f - target).abs() <= 0.25 / PILOT_DRAWS as f64 {
            return Ok(mid.exp());
        }
        if f < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    let mid = 0.5 * (lo + hi);
    let f = fraction(mid);
    if (f - target).abs() <= CALIBRATION_TOLERANCE {
        Ok(mid.exp())
    } else {
        Err(GxeError::Calibration {
            target,
            low: f_lo,
            high: f_hi,
        })
    }
}

/// A generated replicate before sorting, with its censoring rate.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub raw: RawObservations,
    pub truth: GroundTruth,
    pub censoring_rate: f64,
    pub contaminated: Vec<bool>,
}

/// Draws responses under `truth` for the configured scenario.
pub fn simulate_with_truth(config: &ScenarioConfig, truth: GroundTruth) -> Result<Simulated> {
    let (x, z) = gen_covariates(config)?;
    let eps = gen_error(config, config.n);
    let rate = calibrate_censoring(config, &truth)?;
    let log_rate = rate.ln();
    let mut rng = stream(config.seed, STREAM_CENSORING);
    let eta = truth.linear_predictor(&x, &z);
    let mut y = Vec::with_capacity(config.n);
    let mut delta = Vec::with_capacity(config.n);
    for (e, v) in eta.iter().zip(&eps.values) {
        let t = e + v;
        let log_c = rng.sample::<f64, _>(Exp1).ln() - log_rate;
        y.push(t.min(log_c));
        delta.push(t <= log_c);
    }
    Ok(Simulated {
        raw: RawObservations { y, delta, x, z },
        truth,
        censoring_rate: rate,
        contaminated: eps.contaminated,
    })
}

pub fn simulate(config: &ScenarioConfig) -> Result<Simulated> {
    let truth = gen_truth(config)?;
    simulate_with_truth(config, truth)
}

/// Sorted, weighted dataset and its ground truth; deterministic in the seed.
pub fn gen_dataset(config: &ScenarioConfig) -> Result<(SurvivalDataset, GroundTruth)> {
    let sim = simulate(config)?;
    Ok((sort_and_weight(sim.raw)?, sim.truth))
}

pub fn gen_dataset_with_truth(config: &ScenarioConfig, truth: GroundTruth) -> Result<(SurvivalDataset, GroundTruth)> {
    let sim = simulate_with_truth(config, truth)?;
    Ok((sort_and_weight(sim.raw)?, sim.truth))
}
