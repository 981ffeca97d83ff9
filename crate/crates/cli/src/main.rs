//! Command-line front end: simulate datasets, dump bout features, fit the
//! classifier roster, run cross-validated comparisons, and apply saved
//! models.
//!
//! Conventions shared by every subcommand:
//!
//! * all randomness flows from a single `--seed` flag;
//! * output files are written atomically (temp file + rename), and every
//!   run leaves its fully resolved configuration as JSON next to its
//!   primary output (`model.json` → `model.config.json`);
//! * exit code 0 means success, 2 means the configuration or input data
//!   was invalid, 1 means a runtime failure (I/O, non-convergence).

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use rescore::data::{read_nights, simulate, write_nights_to, EpochSeries, SimConfig};
use rescore::features::{
    columns, edge_adjacent_borders, feature_frame, features_by_scan, BorderValues, ScoreSequence,
};
use rescore::joint::TrainConfig;
use rescore::models::{EdgeMode, WindowSpec};
use rescore::pipeline::{
    evaluate_methods, fit_method, score_nights, window_label, EvaluateConfig, FitSettings, Method,
    SavedModel,
};
use rescore::webster::RuleParams;
use rescore::{Error, Real, Result};

#[derive(Parser)]
#[command(
    name = "rescore",
    version,
    about = "Interpretable sleep-wake classification from actigraphy",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled actigraphy dataset.
    Simulate(SimulateArgs),
    /// Compute per-epoch bout features for every night of a dataset.
    Features(FeaturesArgs),
    /// Fit one classifier and save it as JSON.
    Fit(FitArgs),
    /// Compare methods with participant-level cross-validation.
    Evaluate(EvaluateArgs),
    /// Apply a saved model to a dataset, writing per-epoch wake scores.
    Rescore(RescoreArgs),
}

fn main() -> ExitCode {
    match run(&Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_invalid_input() { 2 } else { 1 })
        }
    }
}

fn run(command: &Command) -> Result<()> {
    match command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Features(args) => cmd_features(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Rescore(args) => cmd_rescore(args),
    }
}

// ---------------------------------------------------------------- simulate

#[derive(Args)]
struct SimulateArgs {
    /// Simulator configuration JSON; the flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of participants to generate, one night each.
    #[arg(long, allow_hyphen_values = true)]
    nights: Option<i64>,
    /// Master seed; per-participant streams are derived from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Epoch length in minutes.
    #[arg(long)]
    epoch_len: Option<f64>,
    /// Mean night length in epochs.
    #[arg(long, allow_hyphen_values = true)]
    mean_epochs: Option<i64>,
    /// Output dataset CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct SimulateRunConfig<'a> {
    command: &'static str,
    out: &'a Path,
    sim: &'a SimConfig,
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => SimConfig::from_json(&fs::read_to_string(path)?)?,
        None => SimConfig::default(),
    };
    if let Some(n) = args.nights {
        config.n_participants = positive_count(n, "--nights")?;
    }
    if let Some(n) = args.mean_epochs {
        config.mean_night_epochs = positive_count(n, "--mean-epochs")?;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(epoch_len) = args.epoch_len {
        config.epoch_len = epoch_len;
    }

    let nights = simulate(&config)?;
    write_atomic(&args.out, |w| write_nights_to(w, &nights))?;
    write_run_config(
        &args.out,
        &SimulateRunConfig { command: "simulate", out: &args.out, sim: &config },
    )?;
    let epochs: usize = nights.iter().map(EpochSeries::len).sum();
    println!("wrote {} nights ({epochs} epochs) to {}", nights.len(), args.out.display());
    Ok(())
}

// ---------------------------------------------------------------- features

/// Which column of the dataset provides the score sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ScoreSource {
    /// The 0/1 label column.
    #[default]
    Label,
    /// The activity column, interpreted as wake probabilities in [0, 1].
    Activity,
}

#[derive(Args)]
struct FeaturesArgs {
    /// Input dataset CSV.
    #[arg(long)]
    data: PathBuf,
    /// Epoch length of the dataset in minutes.
    #[arg(long)]
    epoch_len: f64,
    /// Which column provides the score sequence.
    #[arg(long, value_enum, default_value_t)]
    source: ScoreSource,
    /// Border values JSON; defaults to edge-adjacent borders.
    #[arg(long)]
    borders: Option<PathBuf>,
    /// Compute by literal scan instead of the recursion (binary scores
    /// only); output is identical where both apply.
    #[arg(long)]
    oracle: bool,
    /// Output feature CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct FeaturesRunConfig<'a> {
    command: &'static str,
    data: &'a Path,
    epoch_len: f64,
    source: ScoreSource,
    borders: &'a BorderValues<Real>,
    oracle: bool,
    out: &'a Path,
}

fn cmd_features(args: &FeaturesArgs) -> Result<()> {
    let nights = read_nights(&args.data, args.epoch_len)?;
    let borders = match &args.borders {
        Some(path) => read_borders(path)?,
        None => edge_adjacent_borders(args.epoch_len),
    };

    write_atomic(&args.out, |w| {
        let mut csv = csv::Writer::from_writer(w);
        let mut header = vec!["participant_id".to_string(), "epoch".to_string()];
        header.extend(columns::NAMES.iter().map(|s| s.to_string()));
        csv.write_record(&header)?;
        for night in &nights {
            let values = match args.source {
                ScoreSource::Label => night.require_labels()?.to_vec(),
                ScoreSource::Activity => night.activity.clone(),
            };
            let seq = ScoreSequence::new(values, args.epoch_len)?;
            let frame = if args.oracle {
                features_by_scan(&seq, &borders)?
            } else {
                feature_frame(&seq, &borders)?
            };
            for t in 0..frame.len() {
                let mut record = vec![night.participant_id.clone(), (t + 1).to_string()];
                record.extend(frame.row(t).iter().map(|v| format!("{v}")));
                csv.write_record(&record)?;
            }
        }
        csv.flush()?;
        Ok(())
    })?;
    write_run_config(
        &args.out,
        &FeaturesRunConfig {
            command: "features",
            data: &args.data,
            epoch_len: args.epoch_len,
            source: args.source,
            borders: &borders,
            oracle: args.oracle,
            out: &args.out,
        },
    )?;
    println!("wrote features for {} nights to {}", nights.len(), args.out.display());
    Ok(())
}

// --------------------------------------------------------------------- fit

#[derive(Args)]
struct FitArgs {
    /// Classifier to fit: glm-window, glm-continuous, glm-binary,
    /// webster, tree, or rescore-nn.
    #[arg(long, value_parser = parse_method)]
    method: Method,
    /// Labeled dataset CSV (not needed for webster).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Epoch length of the dataset in minutes (not needed for webster).
    #[arg(long)]
    epoch_len: Option<f64>,
    /// Activity window as past..future epochs, e.g. -5..2.
    #[arg(long, value_parser = parse_window, allow_hyphen_values = true, default_value = "-5..2")]
    window: WindowSpec,
    /// Window edge handling: replicate or zero-fill.
    #[arg(long, value_parser = parse_edge, default_value = "replicate")]
    edge: EdgeMode,
    /// Ridge strength for the regression stages.
    #[arg(long, default_value_t = 1e-4)]
    l2: f64,
    /// Border values JSON; defaults to edge-adjacent borders.
    #[arg(long)]
    borders: Option<PathBuf>,
    /// Rescoring rule constants JSON for the webster method.
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Maximum rule-tree depth.
    #[arg(long, default_value_t = 3)]
    tree_depth: usize,
    /// Minimum epochs per rule-tree leaf.
    #[arg(long, default_value_t = 20)]
    tree_min_leaf: usize,
    /// Training passes over the data for rescore-nn.
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    /// Epochs per gradient step for rescore-nn.
    #[arg(long, default_value_t = 100)]
    batch_size: usize,
    /// Step size for rescore-nn.
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    /// Seed for batch shuffling in rescore-nn training.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Saved glm-continuous model JSON to initialize rescore-nn from.
    #[arg(long)]
    init_from: Option<PathBuf>,
    /// Where to write the rescore-nn loss trace as JSON lines.
    #[arg(long)]
    train_log: Option<PathBuf>,
    /// Output model JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct FitRunConfig<'a> {
    command: &'static str,
    method: Method,
    data: Option<&'a Path>,
    epoch_len: Option<f64>,
    window: &'a WindowSpec,
    edge: EdgeMode,
    l2: f64,
    borders: Option<&'a BorderValues<Real>>,
    rules: &'a RuleParams<Real>,
    tree_depth: usize,
    tree_min_leaf: usize,
    train: &'a TrainConfig<Real>,
    init_from: Option<&'a Path>,
    out: &'a Path,
}

fn cmd_fit(args: &FitArgs) -> Result<()> {
    let nights = match (&args.data, args.method) {
        (Some(path), _) => read_nights(path, require_epoch_len(args.epoch_len)?)?,
        (None, Method::Webster) => Vec::new(),
        (None, method) => {
            return Err(Error::InvalidConfig(format!("--data is required to fit {method}")));
        }
    };
    let settings = FitSettings {
        window: args.window,
        edge: args.edge,
        borders: args.borders.as_deref().map(read_borders).transpose()?,
        l2: args.l2,
        rule_params: match &args.rules {
            Some(path) => read_rules(path)?,
            None => RuleParams::default(),
        },
        tree_max_depth: args.tree_depth,
        tree_min_leaf: args.tree_min_leaf,
        train: TrainConfig {
            batch_size: args.batch_size,
            epochs: args.epochs,
            learning_rate: args.learning_rate,
            seed: args.seed,
        },
        init_from: args.init_from.as_deref().map(read_model).transpose()?,
    };

    let artifacts = fit_method(args.method, &nights, &settings)?;
    if let Some(log) = &args.train_log {
        let trace = artifacts.train_trace.as_ref().ok_or_else(|| {
            Error::InvalidConfig(format!("--train-log only applies to rescore-nn, not {}", args.method))
        })?;
        write_atomic(log, |w| {
            for (epoch, loss) in trace.iter().enumerate() {
                writeln!(w, "{}", serde_json::json!({ "epoch": epoch, "loss": loss }))?;
            }
            Ok(())
        })?;
    }
    write_atomic(&args.out, |w| {
        w.write_all(artifacts.model.to_json()?.as_bytes())?;
        writeln!(w)?;
        Ok(())
    })?;
    // Record the borders actually used, which need the dataset's epoch
    // length when none were given explicitly.
    let resolved_borders = settings
        .borders
        .clone()
        .or_else(|| args.epoch_len.map(edge_adjacent_borders));
    write_run_config(
        &args.out,
        &FitRunConfig {
            command: "fit",
            method: args.method,
            data: args.data.as_deref(),
            epoch_len: args.epoch_len,
            window: &args.window,
            edge: args.edge,
            l2: args.l2,
            borders: resolved_borders.as_ref(),
            rules: &settings.rule_params,
            tree_depth: args.tree_depth,
            tree_min_leaf: args.tree_min_leaf,
            train: &settings.train,
            init_from: args.init_from.as_deref(),
            out: &args.out,
        },
    )?;
    println!("fit {} on {} nights, model in {}", args.method, nights.len(), args.out.display());
    Ok(())
}

// ---------------------------------------------------------------- evaluate

#[derive(Args)]
struct EvaluateArgs {
    /// Labeled dataset CSV.
    #[arg(long)]
    data: PathBuf,
    /// Epoch length of the dataset in minutes.
    #[arg(long)]
    epoch_len: f64,
    /// Comma-separated methods to compare.
    #[arg(
        long,
        value_parser = parse_method,
        value_delimiter = ',',
        default_value = "glm-window,glm-continuous,glm-binary,webster,tree,rescore-nn"
    )]
    methods: Vec<Method>,
    /// Comma-separated activity windows, each past..future.
    #[arg(
        long,
        value_parser = parse_window,
        value_delimiter = ',',
        allow_hyphen_values = true,
        default_value = "-5..2,-10..5,-30..20"
    )]
    windows: Vec<WindowSpec>,
    /// Cross-validation folds.
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Seed for the fold plan and rescore-nn training.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Window edge handling: replicate or zero-fill.
    #[arg(long, value_parser = parse_edge, default_value = "replicate")]
    edge: EdgeMode,
    /// Ridge strength for the regression stages.
    #[arg(long, default_value_t = 1e-4)]
    l2: f64,
    /// Rescoring rule constants JSON for the webster sweep.
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Maximum rule-tree depth.
    #[arg(long, default_value_t = 3)]
    tree_depth: usize,
    /// Minimum epochs per rule-tree leaf.
    #[arg(long, default_value_t = 20)]
    tree_min_leaf: usize,
    /// Training passes over the data for rescore-nn.
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    /// Epochs per gradient step for rescore-nn.
    #[arg(long, default_value_t = 100)]
    batch_size: usize,
    /// Step size for rescore-nn.
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    /// Output AUC summary CSV (method, window, auc).
    #[arg(long)]
    auc_out: PathBuf,
    /// Optional output CSV with every ROC point.
    #[arg(long)]
    roc_out: Option<PathBuf>,
}

#[derive(Serialize)]
struct EvaluateRunConfig<'a> {
    command: &'static str,
    data: &'a Path,
    epoch_len: f64,
    methods: Vec<String>,
    windows: Vec<String>,
    k: usize,
    seed: u64,
    edge: EdgeMode,
    l2: f64,
    rules: &'a RuleParams<Real>,
    tree_depth: usize,
    tree_min_leaf: usize,
    train: &'a TrainConfig<Real>,
    auc_out: &'a Path,
    roc_out: Option<&'a Path>,
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let nights = read_nights(&args.data, args.epoch_len)?;
    let config = EvaluateConfig {
        methods: args.methods.clone(),
        windows: args.windows.clone(),
        k: args.k,
        seed: args.seed,
        edge: args.edge,
        l2: args.l2,
        rule_params: match &args.rules {
            Some(path) => read_rules(path)?,
            None => RuleParams::default(),
        },
        tree_max_depth: args.tree_depth,
        tree_min_leaf: args.tree_min_leaf,
        train: TrainConfig {
            batch_size: args.batch_size,
            epochs: args.epochs,
            learning_rate: args.learning_rate,
            seed: args.seed,
        },
        ..EvaluateConfig::default()
    };

    let report = evaluate_methods(&nights, &config)?;
    write_atomic(&args.auc_out, |w| report.write_auc_table(w))?;
    if let Some(roc_out) = &args.roc_out {
        write_atomic(roc_out, |w| report.write_roc_points(w))?;
    }
    write_run_config(
        &args.auc_out,
        &EvaluateRunConfig {
            command: "evaluate",
            data: &args.data,
            epoch_len: args.epoch_len,
            methods: config.methods.iter().map(|m| m.name().to_string()).collect(),
            windows: config.windows.iter().map(window_label).collect(),
            k: args.k,
            seed: args.seed,
            edge: args.edge,
            l2: args.l2,
            rules: &config.rule_params,
            tree_depth: args.tree_depth,
            tree_min_leaf: args.tree_min_leaf,
            train: &config.train,
            auc_out: &args.auc_out,
            roc_out: args.roc_out.as_deref(),
        },
    )?;
    for entry in &report.entries {
        println!(
            "{:<16} {:>9}  auc {:.4}",
            entry.method.name(),
            window_label(&entry.window),
            entry.curve.auc
        );
    }
    println!("wrote AUC table to {}", args.auc_out.display());
    Ok(())
}

// ----------------------------------------------------------------- rescore

#[derive(Args)]
struct RescoreArgs {
    /// Saved model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Dataset CSV to score.
    #[arg(long)]
    data: PathBuf,
    /// Epoch length of the dataset in minutes.
    #[arg(long)]
    epoch_len: f64,
    /// Output CSV of per-epoch wake scores.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct RescoreRunConfig<'a> {
    command: &'static str,
    model: &'a Path,
    method: Method,
    data: &'a Path,
    epoch_len: f64,
    out: &'a Path,
}

fn cmd_rescore(args: &RescoreArgs) -> Result<()> {
    let saved = read_model(&args.model)?;
    let nights = read_nights(&args.data, args.epoch_len)?;
    let scores = score_nights(&saved, &nights)?;

    write_atomic(&args.out, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["participant_id", "epoch_index", "score"])?;
        for (night, night_scores) in nights.iter().zip(&scores) {
            for (t, score) in night_scores.iter().enumerate() {
                csv.write_record([
                    night.participant_id.clone(),
                    (t + 1).to_string(),
                    format!("{score}"),
                ])?;
            }
        }
        csv.flush()?;
        Ok(())
    })?;
    write_run_config(
        &args.out,
        &RescoreRunConfig {
            command: "rescore",
            model: &args.model,
            method: saved.method(),
            data: &args.data,
            epoch_len: args.epoch_len,
            out: &args.out,
        },
    )?;
    println!(
        "scored {} nights with {}, scores in {}",
        nights.len(),
        saved.method(),
        args.out.display()
    );
    Ok(())
}

// ----------------------------------------------------------------- helpers

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    Method::from_str(s).map_err(|e| e.to_string())
}

fn parse_window(s: &str) -> std::result::Result<WindowSpec, String> {
    let (past, future) = s
        .split_once("..")
        .ok_or_else(|| format!("expected past..future, e.g. -5..2, got {s:?}"))?;
    let past: i32 =
        past.trim().parse().map_err(|_| format!("window start {past:?} is not an integer"))?;
    let future: i32 =
        future.trim().parse().map_err(|_| format!("window end {future:?} is not an integer"))?;
    WindowSpec::new(past, future).map_err(|e| e.to_string())
}

fn parse_edge(s: &str) -> std::result::Result<EdgeMode, String> {
    match s {
        "replicate" => Ok(EdgeMode::Replicate),
        "zero-fill" => Ok(EdgeMode::ZeroFill),
        other => Err(format!("unknown edge mode {other:?} (expected replicate or zero-fill)")),
    }
}

fn positive_count(value: i64, flag: &str) -> Result<usize> {
    usize::try_from(value)
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidConfig(format!("{flag} must be a positive count, got {value}")))
}

fn require_epoch_len(epoch_len: Option<f64>) -> Result<f64> {
    epoch_len.ok_or_else(|| Error::InvalidConfig("--epoch-len is required with --data".into()))
}

fn read_borders(path: &Path) -> Result<BorderValues<Real>> {
    let borders: BorderValues<Real> = serde_json::from_str(&fs::read_to_string(path)?)
        .map_err(|e| Error::InvalidConfig(format!("bad borders file {}: {e}", path.display())))?;
    borders.validate()?;
    Ok(borders)
}

fn read_rules(path: &Path) -> Result<RuleParams<Real>> {
    let rules: RuleParams<Real> = serde_json::from_str(&fs::read_to_string(path)?)
        .map_err(|e| Error::InvalidConfig(format!("bad rules file {}: {e}", path.display())))?;
    rules.validate()?;
    Ok(rules)
}

fn read_model(path: &Path) -> Result<SavedModel> {
    SavedModel::from_json(&fs::read_to_string(path)?)
}

/// Writes through a sibling temp file and renames into place, so readers
/// never observe a partially written output.
fn write_atomic<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let mut name = path.file_name().map(|n| n.to_os_string()).ok_or_else(|| {
        Error::InvalidConfig(format!("output path {} has no file name", path.display()))
    })?;
    name.push(".tmp");
    let tmp = path.with_file_name(name);
    let result = (|| {
        let mut file = BufWriter::new(File::create(&tmp)?);
        write(&mut file)?;
        file.flush()?;
        Ok(())
    })();
    match result {
        Ok(()) => {
            fs::rename(&tmp, path)?;
            Ok(())
        }
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}

/// `model.json` → `model.config.json`, next to the primary output.
fn run_config_path(out: &Path) -> PathBuf {
    out.with_extension("config.json")
}

fn write_run_config<C: Serialize>(out: &Path, config: &C) -> Result<()> {
    let text = serde_json::to_string_pretty(config)
        .map_err(|e| Error::InvalidConfig(format!("cannot serialize run config: {e}")))?;
    write_atomic(&run_config_path(out), |w| {
        w.write_all(text.as_bytes())?;
        writeln!(w)?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows_parse_and_reject() {
        assert_eq!(parse_window("-5..2").unwrap(), WindowSpec { past: -5, future: 2 });
        assert_eq!(parse_window("0..0").unwrap(), WindowSpec { past: 0, future: 0 });
        assert!(parse_window("5..2").is_err());
        assert!(parse_window("-5").is_err());
        assert!(parse_window("-5..x").is_err());
    }

    #[test]
    fn edge_modes_parse() {
        assert_eq!(parse_edge("replicate").unwrap(), EdgeMode::Replicate);
        assert_eq!(parse_edge("zero-fill").unwrap(), EdgeMode::ZeroFill);
        assert!(parse_edge("mirror").is_err());
    }

    #[test]
    fn run_configs_sit_next_to_outputs() {
        assert_eq!(run_config_path(Path::new("out/model.json")), Path::new("out/model.config.json"));
        assert_eq!(run_config_path(Path::new("d.csv")), Path::new("d.config.json"));
    }

    #[test]
    fn counts_must_be_positive() {
        assert_eq!(positive_count(50, "--nights").unwrap(), 50);
        assert!(positive_count(0, "--nights").is_err());
        assert!(positive_count(-3, "--nights").is_err());
    }

    #[test]
    fn cli_declares_a_consistent_interface() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
