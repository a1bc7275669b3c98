//! The `gxe` command line: `simulate`, `fit`, `evaluate`, `stability` and `compare`.
//!
//! Every subcommand accepts `--config FILE`, a flat `key=value` file whose
//! keys are flag names. Flags given on the command line win over the file.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::baselines::{
    quantile_lasso_surface_designs, stute_fit, wls_lasso_surface_designs, QuantileOptions, StuteFit,
};
use crate::data::{load_csv, sort_and_weight, CsvSchema, ResponseScale, SurvivalDataset, WorkingDesign};
use crate::error::{GxeError, Result};
use crate::eval::{
    cv_theta, overlap_table, rank_interactions, reports_to_csv, reports_to_table, roc_auc,
    run_experiment, select_fixed_count, stability_loo, ExperimentOptions, InteractionPath, InteractionRanking,
    Method, MethodSelection, RocCurve, Selection,
};
use crate::robust::{
    fit_surface_designs, grid_from_designs, working_designs_with, SolutionSurface, DEFAULT_N_LAMBDA,
    DEFAULT_N_THETA,
};
use crate::sim::{simulate, Correlation, ErrorLaw, GroundTruth, ScenarioConfig};

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "gxe", version, about = "Robust G x E interaction identification for censored survival data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a dataset and its ground truth.
    #[command(args_override_self = true)]
    Simulate(SimulateArgs),
    /// Fit one method's solution path to a dataset.
    #[command(args_override_self = true)]
    Fit(FitArgs),
    /// Score a fitted path against a truth file, or run a simulation experiment.
    #[command(args_override_self = true)]
    Evaluate(EvaluateArgs),
    /// Leave-one-out stability of a fixed-count selection.
    #[command(args_override_self = true)]
    Stability(StabilityArgs),
    /// Overlap of the fixed-count selections of several methods.
    #[command(args_override_self = true)]
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    verbose: bool,
    /// Flat key=value file of flag values.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Tuning {
    #[arg(long, default_value_t = DEFAULT_N_LAMBDA)]
    n_lambda: usize,
    #[arg(long, default_value_t = DEFAULT_N_THETA)]
    n_theta: usize,
    /// Quantile level of the check-loss comparator.
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    /// Response scaling before fitting: `unit` or `centred`.
    #[arg(long, default_value_t = ResponseScale::default())]
    response_scale: ResponseScale,
}

impl Tuning {
    fn options(&self) -> ExperimentOptions {
        ExperimentOptions {
            n_lambda: self.n_lambda,
            n_theta: self.n_theta,
            quantile: QuantileOptions {
                tau: self.tau,
                ..QuantileOptions::default()
            },
            response: self.response_scale,
            ..ExperimentOptions::default()
        }
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    #[arg(long, default_value_t = 3)]
    q: usize,
    #[arg(long, default_value_t = Correlation::Independent)]
    corr: Correlation,
    #[arg(long, default_value_t = ErrorLaw::Normal)]
    error: ErrorLaw,
    #[arg(long, default_value_t = 0.25)]
    censoring: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dataset CSV.
    #[arg(long, default_value = "dataset.csv")]
    out: PathBuf,
    /// Ground-truth CSV.
    #[arg(long, default_value = "truth.csv")]
    truth_out: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = Method::Robust)]
    method: Method,
    /// Surface CSV (a p-value table for `stute`).
    #[arg(long, default_value = "surface.csv")]
    out: PathBuf,
    #[command(flatten)]
    tuning: Tuning,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Clone)]
struct List<T>(Vec<T>);

impl<T: FromStr<Err = GxeError>> FromStr for List<T> {
    type Err = GxeError;

    fn from_str(s: &str) -> Result<Self> {
        let items = s
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(T::from_str)
            .collect::<Result<Vec<_>>>()?;
        if items.is_empty() {
            return Err(GxeError::Parameter("empty list".into()));
        }
        Ok(List(items))
    }
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Fitted surface or Stute table; switches to file mode.
    #[arg(long, requires = "truth")]
    surface: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Method tag for an untagged surface file.
    #[arg(long)]
    method: Option<Method>,
    #[arg(long, default_value_t = 300)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    p: usize,
    #[arg(long, default_value_t = 3)]
    q: usize,
    /// Comma-separated; one scenario per (corr, error) combination.
    #[arg(long, default_value = "independent")]
    corr: List<Correlation>,
    #[arg(long, default_value = "normal")]
    error: List<ErrorLaw>,
    #[arg(long, default_value_t = 0.25)]
    censoring: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    replicates: usize,
    #[arg(long, default_value = "robust,unrobust,stute,quantile")]
    methods: List<Method>,
    /// Directory for report.csv, report.txt and the ROC files.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[command(flatten)]
    tuning: Tuning,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct StabilityArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = Method::Robust)]
    method: Method,
    /// Number of interactions selected per fit.
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Fixed theta for the robust method; chosen by cross-validation when absent.
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long, default_value = "stability.csv")]
    out: PathBuf,
    #[command(flatten)]
    tuning: Tuning,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "robust,unrobust,stute,quantile")]
    methods: List<Method>,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long)]
    theta: Option<f64>,
    /// Directory for overlap.csv, overlap.txt and selections.csv.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[command(flatten)]
    tuning: Tuning,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(GxeError),
}

impl From<GxeError> for Failure {
    fn from(e: GxeError) -> Self {
        Failure::Runtime(e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Turns `key=value` lines into flags. `true` enables a switch and `false`
/// leaves it off; blank lines and `#` comments are skipped.
fn config_tokens(path: &Path) -> CliResult<Vec<OsString>> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut tokens = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Failure::Usage(format!("{}: line {}: expected key=value", path.display(), no + 1))
        })?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key == "config" {
            return Err(Failure::Usage(format!("{}: line {}: nested config", path.display(), no + 1)));
        }
        match value {
            "true" => tokens.push(format!("--{key}").into()),
            "false" => {}
            _ => {
                tokens.push(format!("--{key}").into());
                tokens.push(value.into());
            }
        }
    }
    Ok(tokens)
}

/// Splices config-file flags in right after the subcommand so that explicit
/// flags, which come later, override them.
fn expand_config(args: Vec<OsString>) -> CliResult<Vec<OsString>> {
    let mut path = None;
    for (i, a) in args.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = args.get(i + 1).map(PathBuf::from);
        } else if let Some(rest) = s.strip_prefix("--config=") {
            path = Some(PathBuf::from(rest));
        }
    }
    let Some(path) = path else { return Ok(args) };
    let tokens = config_tokens(&path)?;
    let at = 2.min(args.len());
    let mut out = args[..at].to_vec();
    out.extend(tokens);
    out.extend_from_slice(&args[at..]);
    Ok(out)
}

fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("input file {} does not exist", path.display())))
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| GxeError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| GxeError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn usage_check(result: Result<()>) -> CliResult<()> {
    result.map_err(|e| Failure::Usage(e.to_string()))
}

fn load_dataset(path: &Path) -> CliResult<SurvivalDataset> {
    require_file(path)?;
    Ok(sort_and_weight(load_csv(path, CsvSchema::default())?)?)
}

fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let config = ScenarioConfig {
        n: args.n,
        p: args.p,
        q: args.q,
        correlation: args.corr,
        error: args.error,
        target_censoring: args.censoring,
        seed: args.seed,
    };
    usage_check(config.validate())?;
    let sim = simulate(&config)?;
    crate::data::write_csv(&sim.raw, &args.out)?;
    sim.truth.write_csv(&args.truth_out)?;
    let censored = sim.raw.delta.iter().filter(|d| !**d).count() as f64 / sim.raw.n() as f64;
    println!(
        "wrote {} ({} x {} genes, {} envs) and {}; censored fraction {censored:.3}",
        args.out.display(),
        config.n,
        config.p,
        config.q,
        args.truth_out.display()
    );
    if args.common.verbose {
        println!("censoring rate {:.6e}", sim.censoring_rate);
        println!(
            "contaminated errors: {}",
            sim.contaminated.iter().filter(|c| **c).count()
        );
    }
    Ok(())
}

/// `gene,env,coef,se,wald,p_value`, 1-based; genes whose fit failed have blank numbers.
fn stute_table(fits: &[Result<StuteFit>], q: usize) -> String {
    let mut out = String::from("gene,env,coef,se,wald,p_value\n");
    for (gene, fit) in fits.iter().enumerate() {
        for e in 0..q {
            match fit {
                Ok(f) => writeln!(
                    out,
                    "{},{},{:.16e},{:.16e},{:.16e},{:.16e}",
                    gene + 1,
                    e + 1,
                    f.zeta[q + 2 + e],
                    f.standard_errors[e],
                    f.wald[e],
                    f.p_values[e]
                ),
                Err(_) => writeln!(out, "{},{},,,,", gene + 1, e + 1),
            }
            .unwrap();
        }
    }
    out
}

fn load_stute_ranking(path: &Path) -> Result<InteractionRanking> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |message: String| GxeError::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let index = |i: usize| -> Result<usize> {
            record
                .get(i)
                .and_then(|v| v.trim().parse::<usize>().ok())
                .filter(|v| *v >= 1)
                .ok_or_else(|| bad(format!("bad index in column {}", i + 1)))
        };
        let (gene, env) = (index(0)? - 1, index(1)? - 1);
        let number = |i: usize| record.get(i).map(str::trim).filter(|v| !v.is_empty()).map(str::parse::<f64>);
        let score = match (number(5), number(4)) {
            (Some(Ok(p)), Some(Ok(w))) => [1.0 - p, w.abs()],
            (None, None) => [-1.0, 0.0],
            _ => return Err(bad("bad p_value or wald".into())),
        };
        rows.push((gene, env, score));
    }
    let n_genes = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    let q = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
    let mut scores = vec![[f64::NAN; 2]; n_genes * q];
    for (g, e, s) in rows {
        scores[g * q + e] = s;
    }
    if scores.iter().any(|s| s[0].is_nan()) {
        return Err(GxeError::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: "table does not cover every (gene, env) pair".into(),
        });
    }
    InteractionRanking::from_scores("stute", n_genes, q, &scores)
}

fn diagnostics(surface: &SolutionSurface) -> String {
    let total = surface.fits().count() + surface.failures.len();
    let nonconverged = surface.fits().filter(|f| !f.converged).count();
    let worst = surface.fits().map(|f| f.kkt_residual).fold(0.0, f64::max);
    let mut out = format!(
        "{total} fits: {nonconverged} not converged, {} failed; max KKT residual {worst:.3e}\n",
        surface.failures.len()
    );
    for (g, l, t, msg) in surface.failures.iter().take(5) {
        writeln!(out, "  gene {} lambda {l} theta {t}: {msg}", g + 1).unwrap();
    }
    out
}

fn fit_designs(designs: &[WorkingDesign], method: Method, options: &ExperimentOptions) -> Result<SolutionSurface> {
    match method {
        Method::Robust => {
            let grid = grid_from_designs(designs, options.n_lambda, options.n_theta)?;
            fit_surface_designs(designs, &grid, &options.solver, true)
        }
        Method::Unrobust => wls_lasso_surface_designs(designs, options.n_lambda, &options.wls),
        Method::Quantile => quantile_lasso_surface_designs(designs, options.n_lambda, &options.quantile),
        Method::Stute => Err(GxeError::Parameter("stute has no penalized path".into())),
    }
}

fn cmd_fit(args: &FitArgs) -> CliResult<()> {
    let options = args.tuning.options();
    let ds = load_dataset(&args.data)?;
    let designs = working_designs_with(&ds, options.response)?;
    if args.method == Method::Stute {
        let fits: Vec<_> = designs.iter().map(stute_fit).collect();
        let failed = fits.iter().filter(|f| f.is_err()).count();
        write_file(&args.out, &stute_table(&fits, ds.q()))?;
        println!("wrote {} ({} genes, {failed} failed)", args.out.display(), ds.p());
        return Ok(());
    }
    let surface = fit_designs(&designs, args.method, &options)?;
    surface.write_csv(&args.out, Some(args.method.name()))?;
    println!(
        "wrote {} ({} genes x {} lambdas x {} thetas)",
        args.out.display(),
        surface.n_genes,
        surface.n_lambda(),
        surface.grid.thetas.len()
    );
    if !surface.failures.is_empty() {
        eprintln!("{} of the fits failed", surface.failures.len());
    }
    if args.common.verbose {
        let g = &surface.grid.provenance;
        println!(
            "lambda {:.6e} .. {:.6e}; theta {:.6e} .. {:.6e}",
            g.lambda_max, g.lambda_min, g.theta_min, g.theta_max
        );
        print!("{}", diagnostics(&surface));
    }
    Ok(())
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map_or("surface".into(), |s| s.to_string_lossy().into_owned())
}

fn best_roc(path: &InteractionPath, method: &str, truth: &GroundTruth) -> Result<(RocCurve, Vec<f64>)> {
    let mut per_theta = Vec::new();
    let mut best: Option<RocCurve> = None;
    for t in 0..path.n_slices {
        let roc = roc_auc(&rank_interactions(path, t, method)?, truth)?;
        per_theta.push(roc.auc);
        if best.as_ref().is_none_or(|b| roc.auc > b.auc) {
            best = Some(roc);
        }
    }
    let best = best.ok_or_else(|| GxeError::Evaluation("surface has no theta slices".into()))?;
    Ok((best, per_theta))
}

fn evaluate_files(args: &EvaluateArgs, surface: &Path, truth: &Path) -> CliResult<()> {
    require_file(surface)?;
    require_file(truth)?;
    let truth = GroundTruth::load_csv(truth)?;
    let header = fs::read_to_string(surface)
        .map_err(|source| GxeError::Io {
            path: surface.to_path_buf(),
            source,
        })?
        .lines()
        .next()
        .unwrap_or_default()
        .to_string();
    let (method, roc, per_theta) = if header.trim().starts_with("gene,env,") {
        let roc = roc_auc(&load_stute_ranking(surface)?, &truth)?;
        (Method::Stute.name().to_string(), roc, Vec::new())
    } else {
        let (tag, path) = InteractionPath::load_csv(surface)?;
        let method = match (args.method, tag) {
            (Some(m), _) => m.name().to_string(),
            (None, Some(t)) => t,
            (None, None) => "unknown".to_string(),
        };
        let (roc, per_theta) = best_roc(&path, &method, &truth)?;
        (method, roc, per_theta)
    };
    let label = file_stem(surface);
    let csv = format!(
        "scenario,method,mean_auc,sd_auc,replicates\n{label},{method},{:.16e},{:.16e},1\n",
        roc.auc, 0.0
    );
    let mut text = format!("{label}: {method} AUC x 100 = {:.1}\n", 100.0 * roc.auc);
    if per_theta.len() > 1 {
        text.push_str("per-theta AUC x 100:");
        for a in &per_theta {
            write!(text, " {:.1}", 100.0 * a).unwrap();
        }
        text.push('\n');
    }
    write_file(&args.out_dir.join("report.csv"), &csv)?;
    write_file(&args.out_dir.join("report.txt"), &text)?;
    write_file(&args.out_dir.join("roc.csv"), &roc.to_csv_string())?;
    print!("{text}");
    Ok(())
}

fn evaluate_scenarios(args: &EvaluateArgs) -> CliResult<()> {
    let options = args.tuning.options();
    let mut scenarios = Vec::new();
    for &correlation in &args.corr.0 {
        for &error in &args.error.0 {
            let config = ScenarioConfig {
                n: args.n,
                p: args.p,
                q: args.q,
                correlation,
                error,
                target_censoring: args.censoring,
                seed: args.seed,
            };
            usage_check(config.validate())?;
            scenarios.push(config);
        }
    }
    if args.replicates < 2 {
        return Err(Failure::Usage(format!("need --replicates >= 2, got {}", args.replicates)));
    }
    let mut reports = Vec::new();
    for scenario in &scenarios {
        let report = run_experiment(scenario, &args.methods.0, args.replicates, &options)?;
        if !report.failures.is_empty() {
            eprintln!("{}: {} failed replicate fits excluded", report.label, report.failures.len());
        }
        for m in &report.methods {
            if let Some(roc) = &m.first_roc {
                let name = format!("roc_{}_{}.csv", report.label.replace(':', "-"), m.method);
                write_file(&args.out_dir.join(name), &roc.to_csv_string())?;
            }
            if args.common.verbose {
                print!("{} {}: nonconverged {}", report.label, m.method, m.nonconverged);
                if m.per_theta_mean.len() > 1 {
                    print!("; per-theta mean AUC x 100:");
                    for a in &m.per_theta_mean {
                        print!(" {:.1}", 100.0 * a);
                    }
                }
                println!();
            }
        }
        reports.push(report);
    }
    let table = reports_to_table(&reports);
    write_file(&args.out_dir.join("report.csv"), &reports_to_csv(&reports))?;
    write_file(&args.out_dir.join("report.txt"), &table)?;
    print!("{table}");
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs) -> CliResult<()> {
    match (&args.surface, &args.truth) {
        (Some(s), Some(t)) => evaluate_files(args, s, t),
        (None, Some(_)) => Err(Failure::Usage("--truth needs --surface".into())),
        _ => evaluate_scenarios(args),
    }
}

fn robust_theta(
    ds: &SurvivalDataset,
    method: Method,
    k: usize,
    theta: Option<f64>,
    options: &ExperimentOptions,
    verbose: bool,
) -> Result<Option<f64>> {
    if method != Method::Robust {
        return Ok(None);
    }
    if let Some(t) = theta {
        if !(t > 0.0 && t.is_finite()) {
            return Err(GxeError::Parameter(format!("theta must be positive, got {t}")));
        }
        return Ok(Some(t));
    }
    let (best, errors) = cv_theta(ds, k, options)?;
    if verbose {
        for (t, e) in &errors {
            println!("cv theta {t:.6e}: error {e:.6e}");
        }
    }
    Ok(Some(best))
}

fn cmd_stability(args: &StabilityArgs) -> CliResult<()> {
    let options = args.tuning.options();
    let ds = load_dataset(&args.data)?;
    let theta = robust_theta(&ds, args.method, args.k, args.theta, &options, args.common.verbose)?;
    let report = stability_loo(&ds, args.method, args.k, theta, &options)?;
    write_file(&args.out, &report.to_csv_string())?;
    let mean = report.frequency.iter().sum::<f64>() / report.frequency.len().max(1) as f64;
    println!(
        "wrote {}: {} interactions, mean frequency {mean:.3} over {} reduced fits",
        args.out.display(),
        report.full.interactions.len(),
        report.n
    );
    if report.failures > 0 {
        eprintln!("{} of {} reduced fits failed", report.failures, report.n);
    }
    if args.common.verbose && !report.full.exact {
        println!("no lambda selected exactly {}; the nearest larger set was trimmed", args.k);
    }
    Ok(())
}

fn selections_csv(selections: &[Selection]) -> String {
    let mut out = String::from("method,gene,env,coef\n");
    for s in selections {
        for i in &s.interactions {
            writeln!(out, "{},{},{},{:.16e}", s.method, i.gene + 1, i.env + 1, i.coef).unwrap();
        }
    }
    out
}

fn cmd_compare(args: &CompareArgs) -> CliResult<()> {
    if args.methods.0.len() < 2 {
        return Err(Failure::Usage("compare needs at least 2 methods".into()));
    }
    let options = args.tuning.options();
    let ds = load_dataset(&args.data)?;
    let designs = working_designs_with(&ds, options.response)?;
    let mut selections = Vec::new();
    for &method in &args.methods.0 {
        let theta = robust_theta(&ds, method, args.k, args.theta, &options, args.common.verbose)?;
        selections.push(select_fixed_count(&designs, method, theta, args.k, &options)?);
    }
    let table = overlap_table(&selections.iter().map(MethodSelection::from).collect::<Vec<_>>())?;
    write_file(&args.out_dir.join("overlap.csv"), &table.to_csv_string())?;
    write_file(&args.out_dir.join("overlap.txt"), &table.to_table())?;
    write_file(&args.out_dir.join("selections.csv"), &selections_csv(&selections))?;
    print!("{}", table.to_table());
    Ok(())
}

fn thread_pool(threads: Option<usize>) -> CliResult<rayon::ThreadPool> {
    if threads == Some(0) {
        return Err(Failure::Usage("--threads must be >= 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Failure::Usage(format!("cannot start thread pool: {e}")))
}

fn dispatch(command: &Command) -> CliResult<()> {
    let common = match command {
        Command::Simulate(a) => &a.common,
        Command::Fit(a) => &a.common,
        Command::Evaluate(a) => &a.common,
        Command::Stability(a) => &a.common,
        Command::Compare(a) => &a.common,
    };
    thread_pool(common.threads)?.install(|| match command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Stability(a) => cmd_stability(a),
        Command::Compare(a) => cmd_compare(a),
    })
}

/// Parses `args` (program name first), runs the subcommand and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let outcome = expand_config(args).and_then(|args| match Cli::try_parse_from(args) {
        Ok(cli) => dispatch(&cli.command),
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            Ok(())
        }
        Err(e) => {
            let _ = e.print();
            Err(Failure::Usage(String::new()))
        }
    });
    match outcome {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            if !msg.is_empty() {
                eprintln!("error: {msg}");
                eprintln!("run `gxe help` for usage");
            }
            EXIT_USAGE
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::rank_stute;

    #[test]
    fn config_file_flags_precede_explicit_ones() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        fs::write(&cfg, "# scenario\nn = 50\np=7\nverbose=true\nthreads=false\n").unwrap();
        let args: Vec<OsString> = ["gxe", "simulate", "--config", cfg.to_str().unwrap(), "--p", "9"]
            .iter()
            .map(OsString::from)
            .collect();
        let expanded = expand_config(args).unwrap();
        let cli = Cli::try_parse_from(expanded).unwrap();
        let Command::Simulate(a) = cli.command else { panic!("wrong subcommand") };
        assert_eq!((a.n, a.p), (50, 9));
        assert!(a.common.verbose);
    }

    #[test]
    fn unknown_config_key_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("bad.cfg");
        fs::write(&cfg, "n=50\np=7\nbogus=1\n").unwrap();
        let code = run(["gxe", "simulate", "--config", cfg.to_str().unwrap()]);
        assert_eq!(code, EXIT_USAGE);
    }

    #[test]
    fn lists_parse() {
        let l: List<Method> = "robust, stute".parse().unwrap();
        assert_eq!(l.0, vec![Method::Robust, Method::Stute]);
        assert!("".parse::<List<Method>>().is_err());
        let c: List<Correlation> = "independent,ar:0.2".parse().unwrap();
        assert_eq!(c.0.len(), 2);
    }

    #[test]
    fn stute_table_round_trips_to_ranking() {
        let config = ScenarioConfig {
            n: 60,
            p: 6,
            seed: 4,
            ..ScenarioConfig::default()
        };
        let (ds, _) = crate::sim::gen_dataset(&config).unwrap();
        let designs = working_designs_with(&ds, ResponseScale::default()).unwrap();
        let fits: Vec<_> = designs.iter().map(stute_fit).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stute.csv");
        fs::write(&path, stute_table(&fits, 3)).unwrap();
        let loaded = load_stute_ranking(&path).unwrap();
        let direct = rank_stute(&fits, 3).unwrap();
        let key = |r: &InteractionRanking| r.pairs.iter().map(|p| (p.gene, p.env)).collect::<Vec<_>>();
        assert_eq!(key(&loaded), key(&direct));
    }
}
