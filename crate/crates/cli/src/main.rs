//! Command-line driver for sparse functional data classification.
//!
//! Subcommands: `simulate` runs Monte Carlo scenario experiments, `realdata`
//! runs repeated-split experiments on a long CSV, `generate` dumps a
//! synthetic dataset, `fpca` fits and dumps one score model, `train` fits an
//! ensemble and saves it, `predict` scores new curves with a saved ensemble.
//!
//! Every experiment flag can also come from a `key = value` config file
//! (`--config`); explicit flags win.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fpcbag::classifiers::{ClassifierKind, TuningConfig};
use fpcbag::data::{self, LongCsvSchema};
use fpcbag::ensemble::{
    self, bootstrap_fit, fit_calibration, predict_bayesian, training_aggregated_probs,
    AggregationRule, CalibrationMode, CalibrationModel, EnsembleModel,
};
use fpcbag::error::Error;
use fpcbag::experiment::{run_experiment, ExperimentConfig, ExperimentSource};
use fpcbag::fpca::{fit_fpca, FpcaConfig};
use fpcbag::simgen;

#[derive(Parser)]
#[command(name = "fpcbag", version, about = "Sparse functional data classification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo experiment on a synthetic scenario (1-9).
    Simulate(SimulateArgs),
    /// Run a repeated-split experiment on a long CSV dataset.
    Realdata(RealdataArgs),
    /// Generate a synthetic scenario dataset as long CSV.
    Generate(GenerateArgs),
    /// Fit one score model on a dataset and dump it as CSV blocks.
    Fpca(FpcaArgs),
    /// Fit one ensemble (plus calibration) on a labeled dataset and save it.
    Train(TrainArgs),
    /// Score new curves with a saved ensemble.
    Predict(PredictArgs),
}

#[derive(Args, Debug)]
struct ExperimentFlags {
    /// Comma-separated classifiers: logit,lda,qda,naive_bayes,rf,gbm (or
    /// `all`).
    #[arg(long)]
    classifiers: Option<String>,
    /// Comma-separated rules: single,majority_vote,oob_weight,bayesian (or
    /// `all`).
    #[arg(long)]
    rules: Option<String>,
    /// Monte Carlo repetitions.
    #[arg(long)]
    reps: Option<usize>,
    /// Bootstrap replicas per ensemble.
    #[arg(long = "B")]
    b: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for summary.csv, errors_long.csv, trace.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    grid_size: Option<usize>,
    /// Mean-smoother bandwidth (absolute, in time units).
    #[arg(long)]
    mean_bw: Option<f64>,
    /// Covariance-smoother bandwidth (absolute, in time units).
    #[arg(long)]
    cov_bw: Option<f64>,
    /// Proportion-of-variance-explained threshold for K.
    #[arg(long)]
    pve: Option<f64>,
    #[arg(long)]
    k_min: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
    /// Calibration probabilities: all_replicas or oob_only.
    #[arg(long)]
    calibration_mode: Option<String>,
    /// Cauchy prior scale for the calibration intercept.
    #[arg(long)]
    prior_scale0: Option<f64>,
    /// Cauchy prior scale for the calibration slope.
    #[arg(long)]
    prior_scale1: Option<f64>,
    /// Key = value config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Scenario id, 1-9.
    #[arg(long)]
    scenario: Option<usize>,
    /// Curves per generated dataset (split equally between groups).
    #[arg(long)]
    n: Option<usize>,
    /// Per-curve observation count range, e.g. 5,10.
    #[arg(long)]
    obs_range: Option<String>,
    #[command(flatten)]
    flags: ExperimentFlags,
}

#[derive(Args, Debug)]
struct RealdataArgs {
    /// Long CSV with header id,time,value,label.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Artificial sparsification range, e.g. 12,15 (omit to keep all
    /// observations).
    #[arg(long)]
    sparsify: Option<String>,
    /// Fraction of curves in the training split.
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Domain override lo,hi (default: observed time range).
    #[arg(long)]
    domain: Option<String>,
    #[arg(long, default_value = "id")]
    id_col: String,
    #[arg(long, default_value = "time")]
    time_col: String,
    #[arg(long, default_value = "value")]
    value_col: String,
    #[arg(long, default_value = "label")]
    label_col: String,
    #[command(flatten)]
    flags: ExperimentFlags,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    scenario: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Per-curve observation count range, e.g. 5,10.
    #[arg(long, default_value = "5,10")]
    obs_range: String,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FpcaArgs {
    #[arg(long)]
    data: PathBuf,
    /// Output path for the model dump.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    grid_size: Option<usize>,
    #[arg(long)]
    mean_bw: Option<f64>,
    #[arg(long)]
    cov_bw: Option<f64>,
    #[arg(long)]
    pve: Option<f64>,
    #[arg(long)]
    k_min: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
    /// Domain override lo,hi.
    #[arg(long)]
    domain: Option<String>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Labeled long CSV training data.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "rf")]
    classifier: String,
    #[arg(long = "B", default_value_t = 100)]
    b: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path for the saved model (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Optional ensemble diagnostics CSV (per-replica K, OOB error,
    /// calibration coefficients).
    #[arg(long)]
    summary: Option<PathBuf>,
    #[arg(long)]
    grid_size: Option<usize>,
    #[arg(long)]
    mean_bw: Option<f64>,
    #[arg(long)]
    cov_bw: Option<f64>,
    #[arg(long)]
    pve: Option<f64>,
    #[arg(long)]
    k_min: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long, default_value = "all_replicas")]
    calibration_mode: String,
    #[arg(long, default_value_t = 10.0)]
    prior_scale0: f64,
    #[arg(long, default_value_t = 2.5)]
    prior_scale1: f64,
    /// Domain override lo,hi.
    #[arg(long)]
    domain: Option<String>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    /// Saved model from `train`.
    #[arg(long)]
    model: PathBuf,
    /// Long CSV with curves to score (labels optional, ignored).
    #[arg(long)]
    data: PathBuf,
    /// Output CSV: id,rule,probability,label.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated rules among majority_vote,oob_weight,bayesian.
    #[arg(long, default_value = "majority_vote,oob_weight,bayesian")]
    rules: String,
}

/// Everything `predict` needs, serialized by `train`.
#[derive(serde::Serialize, serde::Deserialize)]
struct SavedModel {
    ensemble: EnsembleModel,
    calibration: CalibrationModel,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Realdata(args) => cmd_realdata(args),
        Command::Generate(args) => cmd_generate(args),
        Command::Fpca(args) => cmd_fpca(args),
        Command::Train(args) => cmd_train(args),
        Command::Predict(args) => cmd_predict(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

type CliResult = Result<(), Box<dyn std::error::Error>>;

/// Parse a `key = value` config file (# starts a comment).
fn load_config_file(path: &Path) -> Result<HashMap<String, String>, Box<dyn std::error::Error>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let mut map = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {} is not `key = value`", lineno + 1))?;
        map.insert(
            key.trim().replace('-', "_").to_string(),
            value.trim().to_string(),
        );
    }
    Ok(map)
}

/// Flag-over-config-over-default resolution.
struct Resolver {
    file: HashMap<String, String>,
}

impl Resolver {
    fn new(config: Option<&PathBuf>) -> Result<Self, Box<dyn std::error::Error>> {
        let file = match config {
            Some(path) => load_config_file(path)?,
            None => HashMap::new(),
        };
        Ok(Resolver { file })
    }

    fn get_opt<T: std::str::FromStr>(
        &self,
        flag: Option<T>,
        key: &str,
    ) -> Result<Option<T>, Box<dyn std::error::Error>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| format!("config key `{key}`: {e}").into()),
            None => Ok(None),
        }
    }

    fn get_or<T: std::str::FromStr>(
        &self,
        flag: Option<T>,
        key: &str,
        default: T,
    ) -> Result<T, Box<dyn std::error::Error>>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get_opt(flag, key)?.unwrap_or(default))
    }
}

fn parse_pair<T: std::str::FromStr>(raw: &str, what: &str) -> Result<(T, T), Box<dyn std::error::Error>>
where
    T::Err: std::fmt::Display,
{
    let (a, b) = raw
        .split_once(',')
        .ok_or_else(|| format!("{what} must be two comma-separated values, got `{raw}`"))?;
    let lo = a.trim().parse::<T>().map_err(|e| format!("{what}: {e}"))?;
    let hi = b.trim().parse::<T>().map_err(|e| format!("{what}: {e}"))?;
    Ok((lo, hi))
}

fn parse_classifiers(raw: &str) -> Result<Vec<ClassifierKind>, Error> {
    if raw.trim().eq_ignore_ascii_case("all") {
        return Ok(ClassifierKind::ALL.to_vec());
    }
    raw.split(',')
        .map(|s| ClassifierKind::parse(s.trim()))
        .collect()
}

fn parse_rules(raw: &str) -> Result<Vec<AggregationRule>, Error> {
    if raw.trim().eq_ignore_ascii_case("all") {
        return Ok(AggregationRule::ALL.to_vec());
    }
    raw.split(',')
        .map(|s| AggregationRule::parse(s.trim()))
        .collect()
}

fn build_fpca_config(
    resolver: &Resolver,
    grid_size: Option<usize>,
    mean_bw: Option<f64>,
    cov_bw: Option<f64>,
    pve: Option<f64>,
    k_min: Option<usize>,
    k_max: Option<usize>,
) -> Result<FpcaConfig, Box<dyn std::error::Error>> {
    let defaults = FpcaConfig::default();
    Ok(FpcaConfig {
        grid_size: resolver.get_or(grid_size, "grid_size", defaults.grid_size)?,
        mean_bandwidth: resolver.get_opt(mean_bw, "mean_bw")?,
        cov_bandwidth: resolver.get_opt(cov_bw, "cov_bw")?,
        pve_threshold: resolver.get_or(pve, "pve", defaults.pve_threshold)?,
        k_min: resolver.get_opt(k_min, "k_min")?,
        k_max: resolver.get_opt(k_max, "k_max")?,
    })
}

fn build_experiment_config(
    flags: ExperimentFlags,
    source: ExperimentSource,
    resolver: &Resolver,
) -> Result<(ExperimentConfig, PathBuf), Box<dyn std::error::Error>> {
    let mut config = ExperimentConfig::new(source);
    let classifiers_raw = resolver.get_or(flags.classifiers, "classifiers", "rf".to_string())?;
    config.classifiers = parse_classifiers(&classifiers_raw)?;
    let rules_raw = resolver.get_or(flags.rules, "rules", "all".to_string())?;
    config.rules = parse_rules(&rules_raw)?;
    config.repetitions = resolver.get_or(flags.reps, "reps", 100)?;
    config.ensemble_size = resolver.get_or(flags.b, "B", 100)?;
    config.seed = resolver.get_or(flags.seed, "seed", 0)?;
    config.workers = resolver.get_or(flags.workers, "workers", 0)?;
    config.fpca = build_fpca_config(
        resolver,
        flags.grid_size,
        flags.mean_bw,
        flags.cov_bw,
        flags.pve,
        flags.k_min,
        flags.k_max,
    )?;
    let mode_raw = resolver.get_or(
        flags.calibration_mode,
        "calibration_mode",
        "all_replicas".to_string(),
    )?;
    config.calibration_mode = CalibrationMode::parse(&mode_raw)?;
    config.prior_scales = (
        resolver.get_or(flags.prior_scale0, "prior_scale0", 10.0)?,
        resolver.get_or(flags.prior_scale1, "prior_scale1", 2.5)?,
    );
    let out = resolver
        .get_opt(flags.out, "out")?
        .ok_or("missing --out output directory")?;
    Ok((config, out))
}

fn cmd_simulate(args: SimulateArgs) -> CliResult {
    let resolver = Resolver::new(args.flags.config.as_ref())?;
    let scenario = resolver
        .get_opt(args.scenario, "scenario")?
        .ok_or("missing --scenario id")?;
    let n = resolver.get_or(args.n, "n", 200)?;
    let obs_raw = resolver.get_or(args.obs_range, "obs_range", "5,10".to_string())?;
    let n_obs_range = parse_pair::<usize>(&obs_raw, "obs_range")?;
    let source = ExperimentSource::Scenario {
        id: scenario,
        n,
        n_obs_range,
    };
    let (config, out) = build_experiment_config(args.flags, source, &resolver)?;
    let table = run_experiment(&config)?;
    table.emit_outputs(&out)?;
    report_table(&table);
    Ok(())
}

fn cmd_realdata(args: RealdataArgs) -> CliResult {
    let resolver = Resolver::new(args.flags.config.as_ref())?;
    let path = resolver
        .get_opt(args.data, "data")?
        .ok_or("missing --data CSV path")?;
    let sparsify = match resolver.get_opt(args.sparsify, "sparsify")? {
        Some(raw) => Some(parse_pair::<usize>(&raw, "sparsify")?),
        None => None,
    };
    let train_fraction = resolver.get_or(args.train_fraction, "train_fraction", 2.0 / 3.0)?;
    let domain = match resolver.get_opt(args.domain, "domain")? {
        Some(raw) => Some(parse_pair::<f64>(&raw, "domain")?),
        None => None,
    };
    let schema = LongCsvSchema {
        id: args.id_col,
        time: args.time_col,
        value: args.value_col,
        label: args.label_col,
    };
    let source = ExperimentSource::RealData {
        path,
        schema,
        sparsify,
        train_fraction,
        domain,
    };
    let (config, out) = build_experiment_config(args.flags, source, &resolver)?;
    let table = run_experiment(&config)?;
    table.emit_outputs(&out)?;
    report_table(&table);
    Ok(())
}

fn report_table(table: &fpcbag::experiment::ResultsTable) {
    if !table.failures.is_empty() {
        eprintln!(
            "warning: {} of {} repetitions failed and were excluded",
            table.failures.len(),
            table.requested_repetitions
        );
    }
    for kind in &table.classifiers {
        for rule in &table.rules {
            if let (Some(mean), Some(sd)) =
                (table.mean_error(*kind, *rule), table.sd_error(*kind, *rule))
            {
                println!("{kind:>12} {rule:<13} {mean:6.2}% ({sd:.2})");
            }
        }
    }
}

fn cmd_generate(args: GenerateArgs) -> CliResult {
    let mut config = simgen::scenario(args.scenario)?;
    config.n = args.n;
    config.n_obs_range = parse_pair::<usize>(&args.obs_range, "obs_range")?;
    config.seed = args.seed;
    let dataset = simgen::generate(&config)?;
    data::write_long_csv(&dataset, &args.out)?;
    println!(
        "wrote {} curves ({} observations) to {}",
        dataset.len(),
        dataset.n_obs(),
        args.out.display()
    );
    Ok(())
}

fn parse_domain_arg(raw: &Option<String>) -> Result<Option<(f64, f64)>, Box<dyn std::error::Error>> {
    Ok(match raw {
        Some(r) => Some(parse_pair::<f64>(r, "domain")?),
        None => None,
    })
}

fn load_dataset(
    path: &Path,
    domain: Option<(f64, f64)>,
) -> Result<fpcbag::data::FunctionalDataset, Box<dyn std::error::Error>> {
    let mut ds = data::load_long_csv(path, &LongCsvSchema::default())?;
    if let Some(d) = domain {
        ds = fpcbag::data::FunctionalDataset::new(ds.curves, d)?;
    }
    Ok(ds)
}

fn cmd_fpca(args: FpcaArgs) -> CliResult {
    let resolver = Resolver::new(None)?;
    let config = build_fpca_config(
        &resolver,
        args.grid_size,
        args.mean_bw,
        args.cov_bw,
        args.pve,
        args.k_min,
        args.k_max,
    )?;
    let ds = load_dataset(&args.data, parse_domain_arg(&args.domain)?)?;
    let model = fit_fpca(&ds, &config)?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(&args.out)?);
    model.write_dump(&mut out)?;
    println!(
        "fitted K = {} components (PVE {:.4}, noise variance {:.4}); dump at {}",
        model.k,
        model.achieved_pve,
        model.noise_variance,
        args.out.display()
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> CliResult {
    let ds = load_dataset(&args.data, parse_domain_arg(&args.domain)?)?;
    let kind = ClassifierKind::parse(&args.classifier)?;
    let mode = CalibrationMode::parse(&args.calibration_mode)?;
    let resolver = Resolver::new(None)?;
    let fpca_config = build_fpca_config(
        &resolver,
        args.grid_size,
        args.mean_bw,
        args.cov_bw,
        args.pve,
        args.k_min,
        args.k_max,
    )?;
    let tuning = TuningConfig::default();

    let model = bootstrap_fit(&ds, kind, args.b, &fpca_config, &tuning, args.seed)?;
    let probs = training_aggregated_probs(&model, &ds, mode)?;
    let pairs: Vec<(f64, u8)> = probs.iter().map(|p| (p.probability, p.label)).collect();
    let calibration = fit_calibration(&pairs, args.prior_scale0, args.prior_scale1)?;

    if let Some(summary_path) = &args.summary {
        let mut out = std::io::BufWriter::new(std::fs::File::create(summary_path)?);
        model.write_summary_csv(Some(&calibration), &mut out)?;
    }

    let saved = SavedModel {
        ensemble: model,
        calibration,
    };
    let file = std::io::BufWriter::new(std::fs::File::create(&args.out)?);
    serde_json::to_writer(file, &saved)?;
    println!(
        "trained {} ensemble with B = {} replicas; model at {}",
        kind,
        saved.ensemble.b(),
        args.out.display()
    );
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> CliResult {
    let raw = std::fs::read(&args.model)?;
    let saved: SavedModel = serde_json::from_slice(&raw)
        .map_err(|e| Error::ModelFormat(format!("{}: {e}", args.model.display())))?;
    let rules = parse_rules(&args.rules)?;
    if rules.contains(&AggregationRule::Single) {
        return Err("predict scores through a saved ensemble; the single rule does not apply".into());
    }
    let ds = load_dataset(&args.data, None)?;

    let mut out = String::from("id,rule,probability,label\n");
    for curve in &ds.curves {
        for rule in &rules {
            let (probability, label) = match rule {
                AggregationRule::MajorityVote => {
                    let votes = ensemble::replica_votes(&saved.ensemble, curve)?;
                    let share = votes.iter().map(|&v| v as f64).sum::<f64>() / votes.len() as f64;
                    (share, u8::from(share > 0.5))
                }
                AggregationRule::OobWeight => {
                    let votes = ensemble::replica_votes(&saved.ensemble, curve)?;
                    let share = ensemble::oob_weighted_share(&votes, &saved.ensemble.oob_errors);
                    (share, u8::from(share > 0.5))
                }
                AggregationRule::Bayesian => {
                    predict_bayesian(&saved.ensemble, &saved.calibration, curve)?
                }
                AggregationRule::Single => unreachable!(),
            };
            out.push_str(&format!("{},{},{},{}\n", curve.id, rule, probability, label));
        }
    }
    std::fs::write(&args.out, out)?;
    println!(
        "wrote predictions for {} curves to {}",
        ds.len(),
        args.out.display()
    );
    Ok(())
}
