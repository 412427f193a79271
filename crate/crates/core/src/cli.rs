//! The `gspnet` experiment runner.
//!
//! Subcommands: `eigs`, `synth`, `train`, `band-scan`, `prune`, `report`.
//! Every failure prints one machine-readable JSON line on stderr
//! (`{"module", "code", "message"}`); exit codes are 0 success, 1 numerical
//! failure, 2 usage/IO error. Repetitions run with seeds
//! `seed_base .. seed_base + reps` and aggregate as mean +/- 95% CI; the
//! worker pool size is capped by the `GSPNET_THREADS` environment variable.
//! Rerunning a command with identical inputs and seeds reproduces its output
//! artifacts byte for byte; wall-clock timings go to `*.log` files only.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::{ArchKind, ArchSpec, SpectralModel};
use crate::prune::{
    band_scan, occurrence_histogram, prune_pipeline, KeptSet, PruneReport, SwdSchedule,
};
use crate::spectral::SpectralBasis;
use crate::train::{
    mean_ci95, split_dataset, standardize_apply, standardize_fit, train_model, RunHistory,
    Splits, TrainConfig,
};

pub const SPLIT_FRACTIONS: (f64, f64, f64) = (0.70, 0.15, 0.15);

#[derive(Debug, Parser)]
#[command(name = "gspnet", version, about = "Graph-spectral networks with frequency pruning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Diagonalize a graph's normalized Laplacian into a basis cache
    Eigs {
        /// Graph file (dense CSV or "i,j,w" edge list)
        #[arg(long)]
        graph: PathBuf,
        /// Output basis file (GSPB)
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a planted-band synthetic dataset
    Synth {
        /// Basis file the plant is defined on
        #[arg(long)]
        basis: PathBuf,
        /// Number of classes
        #[arg(long)]
        classes: u32,
        /// Planted frequencies, e.g. "0:8" or "0:4,20:24"
        #[arg(long)]
        band: String,
        /// Signal-to-noise ratio of the class means
        #[arg(long)]
        snr: f64,
        /// Samples per class
        #[arg(long = "per-class")]
        per_class: usize,
        #[arg(long)]
        seed: u64,
        /// Output dataset directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Train baseline models and write checkpoints, histories and a summary
    Train(TrainArgs),
    /// Train one model per frequency-band offset and write the accuracy curve
    BandScan {
        /// Number of contiguous frequencies per band
        #[arg(long)]
        bandwidth: usize,
        /// Offsets, e.g. "0:300:5" (start:stop:step) or "0,60,120"
        #[arg(long)]
        offsets: String,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Selective-weight-decay pruning, truncation and LR-rewinding retrain
    Prune {
        /// Number of frequencies to keep
        #[arg(long)]
        keep: usize,
        #[arg(long = "alpha-min")]
        alpha_min: f64,
        #[arg(long = "alpha-max")]
        alpha_max: f64,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Aggregate run artifacts from a directory into a summary
    Report {
        /// Directory holding history_seed*.json / report_seed*.json files
        #[arg(long)]
        runs: PathBuf,
        /// Output summary JSON path
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Architecture; overrides the config file's "arch" when given
    #[arg(long, value_enum)]
    pub arch: Option<ArchKind>,
    /// JSON config with arch/width/depth and the training recipe
    #[arg(long)]
    pub config: PathBuf,
    /// Basis file (GSPB)
    #[arg(long)]
    pub basis: PathBuf,
    /// Dataset manifest path
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Number of repetitions (seeds seed..seed+reps)
    #[arg(long, default_value_t = 1)]
    pub reps: usize,
    /// Base seed; defaults to the config's seed
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Experiment config file: architecture plus the training recipe.
/// Unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub arch: ArchKind,
    pub width: usize,
    pub depth: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_lr0")]
    pub lr0: f64,
    #[serde(default = "default_milestones")]
    pub lr_milestones: Vec<usize>,
    #[serde(default = "default_lr_gamma")]
    pub lr_gamma: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_mixup_alpha")]
    pub mixup_alpha: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_epochs() -> usize {
    TrainConfig::default().epochs
}
fn default_batch_size() -> usize {
    TrainConfig::default().batch_size
}
fn default_lr0() -> f64 {
    TrainConfig::default().lr0
}
fn default_milestones() -> Vec<usize> {
    TrainConfig::default().lr_milestones
}
fn default_lr_gamma() -> f64 {
    TrainConfig::default().lr_gamma
}
fn default_momentum() -> f64 {
    TrainConfig::default().momentum
}
fn default_weight_decay() -> f64 {
    TrainConfig::default().weight_decay
}
fn default_mixup_alpha() -> f64 {
    TrainConfig::default().mixup_alpha
}

impl ExperimentConfig {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr0: self.lr0,
            lr_milestones: self.lr_milestones.clone(),
            lr_gamma: self.lr_gamma,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            mixup_alpha: self.mixup_alpha,
            seed: self.seed,
        }
    }

    pub fn arch_spec(&self, override_kind: Option<ArchKind>) -> ArchSpec {
        ArchSpec {
            kind: override_kind.unwrap_or(self.arch),
            width: self.width,
            depth: self.depth,
        }
    }
}

/// A fully parsed experiment invocation.
#[derive(Debug)]
pub enum ExperimentSpec {
    Eigs {
        graph: PathBuf,
        out: PathBuf,
    },
    Synth {
        basis: PathBuf,
        classes: u32,
        band: Vec<usize>,
        snr: f64,
        per_class: usize,
        seed: u64,
        out: PathBuf,
    },
    Train(TrainSpec),
    BandScan {
        bandwidth: usize,
        offsets: Vec<usize>,
        train: TrainSpec,
    },
    Prune {
        keep: usize,
        alpha_min: f64,
        alpha_max: f64,
        train: TrainSpec,
    },
    Report {
        runs: PathBuf,
        out: PathBuf,
    },
}

#[derive(Debug, Clone)]
pub struct TrainSpec {
    pub arch_override: Option<ArchKind>,
    pub config_path: PathBuf,
    pub basis_path: PathBuf,
    pub data_path: PathBuf,
    pub out_dir: PathBuf,
    pub repetitions: usize,
    pub seed_base: Option<u64>,
}

impl TrainSpec {
    fn from_args(args: TrainArgs) -> Result<Self> {
        if args.reps == 0 {
            return Err(Error::Usage {
                detail: "--reps must be at least 1".into(),
            });
        }
        Ok(Self {
            arch_override: args.arch,
            config_path: args.config,
            basis_path: args.basis,
            data_path: args.data,
            out_dir: args.out,
            repetitions: args.reps,
            seed_base: args.seed,
        })
    }
}

impl ExperimentSpec {
    pub fn from_cli(cli: Cli) -> Result<Self> {
        Ok(match cli.command {
            CliCommand::Eigs { graph, out } => ExperimentSpec::Eigs { graph, out },
            CliCommand::Synth {
                basis,
                classes,
                band,
                snr,
                per_class,
                seed,
                out,
            } => ExperimentSpec::Synth {
                basis,
                classes,
                band: parse_index_spec(&band)?,
                snr,
                per_class,
                seed,
                out,
            },
            CliCommand::Train(args) => ExperimentSpec::Train(TrainSpec::from_args(args)?),
            CliCommand::BandScan {
                bandwidth,
                offsets,
                train,
            } => ExperimentSpec::BandScan {
                bandwidth,
                offsets: parse_index_spec(&offsets)?,
                train: TrainSpec::from_args(train)?,
            },
            CliCommand::Prune {
                keep,
                alpha_min,
                alpha_max,
                train,
            } => ExperimentSpec::Prune {
                keep,
                alpha_min,
                alpha_max,
                train: TrainSpec::from_args(train)?,
            },
            CliCommand::Report { runs, out } => ExperimentSpec::Report { runs, out },
        })
    }

    pub fn run(&self) -> Result<()> {
        match self {
            ExperimentSpec::Eigs { graph, out } => run_eigs(graph, out),
            ExperimentSpec::Synth {
                basis,
                classes,
                band,
                snr,
                per_class,
                seed,
                out,
            } => run_synth(basis, *classes, band, *snr, *per_class, *seed, out),
            ExperimentSpec::Train(spec) => run_train(spec),
            ExperimentSpec::BandScan {
                bandwidth,
                offsets,
                train,
            } => run_band_scan(*bandwidth, offsets, train),
            ExperimentSpec::Prune {
                keep,
                alpha_min,
                alpha_max,
                train,
            } => run_prune(*keep, *alpha_min, *alpha_max, train),
            ExperimentSpec::Report { runs, out } => run_report(runs, out),
        }
    }
}

/// Index spec grammar: comma-separated values or ranges. A range is
/// "start:stop" (step 1) or "start:stop:step", start inclusive, stop
/// exclusive.
pub fn parse_index_spec(spec: &str) -> Result<Vec<usize>> {
    let usage = |detail: String| Error::Usage { detail };
    let mut out = Vec::new();
    for part in spec.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let fields: Vec<&str> = part.split(':').collect();
        let parse = |s: &str| -> Result<usize> {
            s.trim()
                .parse::<usize>()
                .map_err(|_| usage(format!("bad index {s:?} in {spec:?}")))
        };
        match fields.len() {
            1 => out.push(parse(fields[0])?),
            2 | 3 => {
                let start = parse(fields[0])?;
                let stop = parse(fields[1])?;
                let step = if fields.len() == 3 { parse(fields[2])? } else { 1 };
                if step == 0 {
                    return Err(usage(format!("zero step in {spec:?}")));
                }
                if stop <= start {
                    return Err(usage(format!("empty range {part:?} in {spec:?}")));
                }
                let mut i = start;
                while i < stop {
                    out.push(i);
                    i += step;
                }
            }
            _ => return Err(usage(format!("cannot parse {part:?} in {spec:?}"))),
        }
    }
    if out.is_empty() {
        return Err(usage(format!("no indices in {spec:?}")));
    }
    Ok(out)
}

/// Mean and CI of test accuracy over runs, plus a kept-frequency histogram
/// when kept sets are present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub runs: usize,
    pub mean_test_acc: f64,
    pub ci95_test_acc: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub histogram: Option<Vec<u32>>,
}

pub fn aggregate_runs(
    histories: &[RunHistory],
    kept_sets: &[KeptSet],
    n_freqs: usize,
) -> Result<Summary> {
    if histories.is_empty() {
        return Err(Error::Usage {
            detail: "no run histories to aggregate".into(),
        });
    }
    let accs: Vec<f64> = histories.iter().map(|h| h.test_acc).collect();
    let (mean_test_acc, ci95_test_acc) = mean_ci95(&accs);
    let histogram = if kept_sets.is_empty() {
        None
    } else {
        Some(occurrence_histogram(kept_sets, n_freqs)?)
    };
    Ok(Summary {
        runs: histories.len(),
        mean_test_acc,
        ci95_test_acc,
        histogram,
    })
}

fn run_eigs(graph_path: &Path, out: &Path) -> Result<()> {
    let graph = Graph::load(graph_path)?;
    let laplacian = graph.normalized_laplacian()?;
    let basis = SpectralBasis::build(&laplacian)?;
    basis.save(out)?;
    println!("wrote basis (n = {}) to {}", basis.n(), out.display());
    Ok(())
}

fn run_synth(
    basis_path: &Path,
    classes: u32,
    band: &[usize],
    snr: f64,
    per_class: usize,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let basis = SpectralBasis::load(basis_path)?;
    let kept = KeptSet::new(band.to_vec())?;
    let ds = Dataset::synth_planted_band(&basis, classes, &kept, snr, per_class, seed)?;
    // command reruns must reproduce artifacts, so the runner always overwrites
    let manifest = ds.save(out, true)?;
    println!(
        "wrote dataset ({} samples, {} classes, n = {}) to {}",
        ds.n_samples(),
        ds.n_classes(),
        ds.n_vertices(),
        manifest.display()
    );
    Ok(())
}

struct TrainContext {
    config: ExperimentConfig,
    arch: ArchSpec,
    basis: SpectralBasis,
    dataset: Dataset,
    seed_base: u64,
}

fn load_train_context(spec: &TrainSpec) -> Result<TrainContext> {
    if !spec.config_path.exists() {
        return Err(Error::Usage {
            detail: format!("config not found: {}", spec.config_path.display()),
        });
    }
    let config: ExperimentConfig = serde_json::from_slice(&fs::read(&spec.config_path)?)?;
    let arch = config.arch_spec(spec.arch_override);
    let basis = SpectralBasis::load(&spec.basis_path)?;
    let dataset = Dataset::load(&spec.data_path)?;
    if dataset.n_vertices() != basis.n() {
        return Err(Error::DimensionMismatch {
            module: "cli",
            detail: format!(
                "dataset has {} vertices but basis has {}",
                dataset.n_vertices(),
                basis.n()
            ),
        });
    }
    let seed_base = spec.seed_base.unwrap_or(config.seed);
    Ok(TrainContext {
        config,
        arch,
        basis,
        dataset,
        seed_base,
    })
}

/// Seeded split + standardization: each repetition gets its own stratified
/// split and train-split statistics.
fn prepare_run(ctx: &TrainContext, seed: u64) -> Result<(Dataset, Splits, TrainConfig)> {
    let splits = split_dataset(&ctx.dataset, SPLIT_FRACTIONS, seed)?;
    let (mean, std) = standardize_fit(&ctx.dataset, &splits.train)?;
    let ds = standardize_apply(&ctx.dataset, &mean, &std)?;
    let mut cfg = ctx.config.train_config();
    cfg.seed = seed;
    Ok((ds, splits, cfg))
}

fn run_train(spec: &TrainSpec) -> Result<()> {
    let ctx = load_train_context(spec)?;
    fs::create_dir_all(&spec.out_dir)?;
    let seeds: Vec<u64> = (0..spec.repetitions as u64).map(|r| ctx.seed_base + r).collect();

    let results = run_seeded(&seeds, |seed| {
        let (ds, splits, cfg) = prepare_run(&ctx, seed)?;
        let model: SpectralModel<f32> = ctx.arch.build(
            &ctx.basis,
            (0..ctx.basis.n()).collect(),
            ds.n_classes() as usize,
            seed,
        )?;
        let (best, history) = train_model(model, &ds, &splits, &cfg)?;
        best.save(&spec.out_dir.join(format!("checkpoint_seed{seed:06}.gspm")))?;
        write_json(
            &spec.out_dir.join(format!("history_seed{seed:06}.json")),
            &history,
        )?;
        Ok(history)
    })?;

    let histories: Vec<RunHistory> = results.iter().map(|(_, h)| h.clone()).collect();
    let summary = aggregate_runs(&histories, &[], ctx.basis.n())?;
    write_json(&spec.out_dir.join("summary.json"), &summary)?;
    append_log(
        &spec.out_dir.join("train.log"),
        &results
            .iter()
            .map(|(seed, h)| format!("seed={seed} wall={:.3}s test_acc={}", h.wall_time, h.test_acc))
            .collect::<Vec<_>>(),
    )?;
    println!(
        "trained {} run(s): test accuracy {:.4} +/- {:.4}",
        summary.runs, summary.mean_test_acc, summary.ci95_test_acc
    );
    Ok(())
}

fn run_band_scan(bandwidth: usize, offsets: &[usize], spec: &TrainSpec) -> Result<()> {
    let ctx = load_train_context(spec)?;
    fs::create_dir_all(&spec.out_dir)?;
    let (ds, splits, mut cfg) = prepare_run(&ctx, ctx.seed_base)?;
    cfg.seed = ctx.seed_base;
    let curve = band_scan(
        &ctx.arch,
        &ctx.basis,
        &ds,
        &splits,
        &cfg,
        bandwidth,
        offsets,
        spec.repetitions,
    )?;
    let mut csv = String::from("offset,mean_acc,ci95\n");
    for point in &curve {
        writeln!(csv, "{},{},{}", point.offset, point.mean_acc, point.ci95)
            .expect("writing to string");
    }
    fs::write(spec.out_dir.join("band_scan.csv"), csv)?;
    write_json(&spec.out_dir.join("band_scan.json"), &curve)?;
    println!(
        "scanned {} offset(s) x {} rep(s), bandwidth {bandwidth}",
        offsets.len(),
        spec.repetitions
    );
    Ok(())
}

fn run_prune(keep: usize, alpha_min: f64, alpha_max: f64, spec: &TrainSpec) -> Result<()> {
    let ctx = load_train_context(spec)?;
    fs::create_dir_all(&spec.out_dir)?;
    let seeds: Vec<u64> = (0..spec.repetitions as u64).map(|r| ctx.seed_base + r).collect();

    let results = run_seeded(&seeds, |seed| {
        let (ds, splits, cfg) = prepare_run(&ctx, seed)?;
        let sched = SwdSchedule::for_run(alpha_min, alpha_max, keep, &cfg, splits.train.len())?;
        let outcome = prune_pipeline(&ctx.arch, &ctx.basis, &ds, &splits, &cfg, &sched)?;
        outcome
            .model
            .save(&spec.out_dir.join(format!("checkpoint_seed{seed:06}.gspm")))?;
        write_json(
            &spec.out_dir.join(format!("history_seed{seed:06}.json")),
            &outcome.retrain_history,
        )?;
        write_json(
            &spec.out_dir.join(format!("report_seed{seed:06}.json")),
            &outcome.report,
        )?;
        Ok(outcome)
    })?;

    let histories: Vec<RunHistory> = results.iter().map(|(_, o)| o.retrain_history.clone()).collect();
    let kept_sets: Vec<KeptSet> = results.iter().map(|(_, o)| o.kept.clone()).collect();
    let summary = aggregate_runs(&histories, &kept_sets, ctx.basis.n())?;
    write_json(&spec.out_dir.join("summary.json"), &summary)?;
    if let Some(histogram) = &summary.histogram {
        fs::write(
            spec.out_dir.join("histogram.csv"),
            histogram_csv(histogram),
        )?;
    }
    append_log(
        &spec.out_dir.join("prune.log"),
        &results
            .iter()
            .map(|(seed, o)| {
                format!(
                    "seed={seed} wall={:.3}s pre={} post={} kept={:?}",
                    o.swd_history.wall_time + o.retrain_history.wall_time,
                    o.report.pre_test_acc,
                    o.retrain_history.test_acc,
                    o.kept.indices()
                )
            })
            .collect::<Vec<_>>(),
    )?;
    println!(
        "pruned {} run(s) to K = {keep}: post-retrain accuracy {:.4} +/- {:.4}",
        summary.runs, summary.mean_test_acc, summary.ci95_test_acc
    );
    Ok(())
}

fn run_report(runs_dir: &Path, out: &Path) -> Result<()> {
    if !runs_dir.is_dir() {
        return Err(Error::Usage {
            detail: format!("runs directory not found: {}", runs_dir.display()),
        });
    }
    let mut names: Vec<String> = fs::read_dir(runs_dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();

    let mut histories = Vec::new();
    let mut kept_sets = Vec::new();
    let mut n_freqs = 0usize;
    for name in &names {
        let path = runs_dir.join(name);
        if name.starts_with("history_seed") && name.ends_with(".json") {
            let history: RunHistory = serde_json::from_slice(&fs::read(&path)?)?;
            histories.push(history);
        } else if name.starts_with("report_seed") && name.ends_with(".json") {
            let report: PruneReport = serde_json::from_slice(&fs::read(&path)?)?;
            if let Some(sample) = report.importance_trace.first() {
                n_freqs = n_freqs.max(sample.scores.len());
            }
            n_freqs = n_freqs.max(report.kept.indices().last().map_or(0, |&l| l + 1));
            kept_sets.push(report.kept);
        }
    }
    let summary = aggregate_runs(&histories, &kept_sets, n_freqs)?;
    write_json(out, &summary)?;
    if let Some(histogram) = &summary.histogram {
        fs::write(out.with_extension("histogram.csv"), histogram_csv(histogram))?;
    }
    println!(
        "aggregated {} run(s): test accuracy {:.4} +/- {:.4}",
        summary.runs, summary.mean_test_acc, summary.ci95_test_acc
    );
    Ok(())
}

fn histogram_csv(histogram: &[u32]) -> String {
    let mut csv = String::from("frequency,count\n");
    for (freq, count) in histogram.iter().enumerate() {
        writeln!(csv, "{freq},{count}").expect("writing to string");
    }
    csv
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

/// Timestamps live here and only here.
fn append_log(path: &Path, lines: &[String]) -> Result<()> {
    use std::io::Write;
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut file = fs::OpenOptions::new().create(true).append(true).open(path)?;
    for line in lines {
        writeln!(file, "[{stamp}] {line}")?;
    }
    Ok(())
}

/// Worker count for fan-out: GSPNET_THREADS caps the hardware parallelism.
fn worker_count(jobs: usize) -> usize {
    let hw = std::thread::available_parallelism().map(|v| v.get()).unwrap_or(1);
    let cap = std::env::var("GSPNET_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v >= 1)
        .unwrap_or(hw);
    cap.min(jobs.max(1))
}

/// Runs `f` over every seed on a small worker pool and returns results
/// sorted by seed, so aggregation order never depends on scheduling.
fn run_seeded<T: Send>(
    seeds: &[u64],
    f: impl Fn(u64) -> Result<T> + Sync,
) -> Result<Vec<(u64, T)>> {
    let workers = worker_count(seeds.len());
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(u64, T)>> = Mutex::new(Vec::with_capacity(seeds.len()));
    let failure: Mutex<Option<Error>> = Mutex::new(None);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= seeds.len() {
                    break;
                }
                let seed = seeds[i];
                match f(seed) {
                    Ok(value) => results.lock().unwrap().push((seed, value)),
                    Err(err) => {
                        let mut slot = failure.lock().unwrap();
                        if slot.is_none() {
                            *slot = Some(err);
                        }
                        break;
                    }
                }
            });
        }
    });

    if let Some(err) = failure.into_inner().unwrap() {
        return Err(err);
    }
    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|(seed, _)| *seed);
    Ok(results)
}

fn report_error(err: &Error) {
    let line = serde_json::json!({
        "module": err.module(),
        "code": err.code(),
        "message": err.to_string(),
    });
    eprintln!("{line}");
}

/// Parses argv, runs the command, prints machine-readable errors and returns
/// the process exit code.
pub fn main_from_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    let spec = match ExperimentSpec::from_cli(cli) {
        Ok(spec) => spec,
        Err(err) => {
            report_error(&err);
            return err.exit_code();
        }
    };
    match spec.run() {
        Ok(()) => 0,
        Err(err) => {
            report_error(&err);
            err.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_spec_forms() {
        assert_eq!(parse_index_spec("0:300:5").unwrap().len(), 60);
        assert_eq!(parse_index_spec("0:300:5").unwrap()[..3], [0, 5, 10]);
        assert_eq!(parse_index_spec("0,60,120").unwrap(), vec![0, 60, 120]);
        assert_eq!(parse_index_spec("0:8").unwrap(), (0..8).collect::<Vec<_>>());
        assert_eq!(
            parse_index_spec("0:4,20:24").unwrap(),
            vec![0, 1, 2, 3, 20, 21, 22, 23]
        );
        assert_eq!(parse_index_spec("7").unwrap(), vec![7]);
        assert!(parse_index_spec("").is_err());
        assert!(parse_index_spec("5:5").is_err());
        assert!(parse_index_spec("1:10:0").is_err());
        assert!(parse_index_spec("a:b").is_err());
    }

    #[test]
    fn aggregate_mean_and_ci() {
        let mk = |acc: f64| RunHistory {
            train_loss: vec![],
            train_acc: vec![],
            val_acc: vec![],
            best_val_epoch: 0,
            test_acc: acc,
            wall_time: 0.0,
        };
        let s = aggregate_runs(&[mk(0.5), mk(0.7)], &[], 4).unwrap();
        assert!((s.mean_test_acc - 0.6).abs() < 1e-12);
        assert!(s.histogram.is_none());
        let single = aggregate_runs(&[mk(0.5)], &[], 4).unwrap();
        assert_eq!(single.ci95_test_acc, 0.0);
        let kept = vec![KeptSet::new(vec![0, 1]).unwrap(), KeptSet::new(vec![1, 3]).unwrap()];
        let s = aggregate_runs(&[mk(0.5)], &kept, 4).unwrap();
        let hist = s.histogram.unwrap();
        assert_eq!(hist, vec![1, 2, 0, 1]);
        let total: u32 = hist.iter().sum();
        assert_eq!(total as usize, kept.iter().map(|k| k.k()).sum::<usize>());
        assert!(aggregate_runs(&[], &[], 4).is_err());
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let json = r#"{"arch":"mlp","width":4,"depth":1,"bogus":3}"#;
        let parsed: std::result::Result<ExperimentConfig, _> = serde_json::from_str(json);
        assert!(parsed.is_err());
        let ok = r#"{"arch":"resnet","width":4,"depth":1,"epochs":3}"#;
        let cfg: ExperimentConfig = serde_json::from_str(ok).unwrap();
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.batch_size, TrainConfig::default().batch_size);
        assert_eq!(cfg.arch_spec(None).kind, ArchKind::Resnet);
        assert_eq!(cfg.arch_spec(Some(ArchKind::Mlp)).kind, ArchKind::Mlp);
    }

    #[test]
    fn worker_count_respects_env_floor() {
        // only sanity: never zero, never above job count
        assert!(worker_count(1) == 1);
        assert!(worker_count(4) >= 1 && worker_count(4) <= 4);
    }
}
