//! Command-line front end.
//!
//! [`run`] parses arguments, executes one subcommand, and maps the outcome
//! to an exit status: 0 success, 1 usage or configuration error, 2 data
//! error, 3 runtime failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{gen_synthetic, load_manifest, validate_dataset, write_manifest, Manifest, Severity, SyntheticSpec};
use crate::error::{Error, Result};
use crate::harness::{
    evenly_spaced_rois, export_report, loso_accuracy_repeated, model_comparison, rank_single_roi, topk_sweep, train,
    Direction, RankingResult, Report, ReportFormat, TrainConfig,
};
use crate::model::{build_model, save_checkpoint, ModelConfig, Variant};
use crate::seed;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Environment variable consulted when `--jobs` is absent.
pub const JOBS_ENV: &str = "ROIRANKNET_JOBS";

#[derive(Debug, Parser)]
#[command(name = "roiranknet", version, about = "ROI time-series classifiers and ROI ranking experiments")]
pub struct Cli {
    /// Experiment configuration file with `key = value` lines
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override one configuration key (repeatable)
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Directory receiving reports, datasets and checkpoints
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    pub out_dir: PathBuf,
    /// Seed for all randomness; overrides the configuration seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (falls back to ROIRANKNET_JOBS, then the core count)
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic multi-site dataset with planted discriminative ROIs
    GenSynthetic(GenArgs),
    /// Check a dataset manifest and its series files
    Validate(ManifestArg),
    /// Leave-one-site-out evaluation of one ROI subset
    Train(TrainArgs),
    /// Rank ROIs by single-ROI leave-one-site-out accuracy
    RankRoi(RankArgs),
    /// Evaluate growing prefixes of a ROI ranking
    Sweep(SweepArgs),
    /// Run top-direction sweeps for several model variants
    Compare(CompareArgs),
    /// Re-render a saved JSON report
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Number of acquisition sites
    #[arg(long, default_value_t = 3)]
    pub sites: usize,
    /// Subjects per class at each site
    #[arg(long, default_value_t = 20)]
    pub per_class: usize,
    /// Samples per series
    #[arg(long, default_value_t = 32)]
    pub time_len: usize,
    /// ROIs per subject
    #[arg(long, default_value_t = 116)]
    pub rois: usize,
    /// Comma-separated indices of ROIs carrying the class signal
    #[arg(long, value_delimiter = ',', default_value = "5,40,99")]
    pub planted: Vec<usize>,
    /// Amplitude of the class signal
    #[arg(long, default_value_t = 1.0)]
    pub effect: f64,
    /// Scale of per-site amplitude and offset shifts
    #[arg(long, default_value_t = 1.0)]
    pub site_shift: f64,
}

#[derive(Debug, Args)]
pub struct ManifestArg {
    /// Dataset manifest CSV
    #[arg(long, value_name = "PATH")]
    pub manifest: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: ManifestArg,
    /// Comma-separated ROI indices in feed order (default: all)
    #[arg(long, value_delimiter = ',')]
    pub rois: Vec<usize>,
    /// Number of seeds, starting at the configured seed
    #[arg(long, default_value_t = 1)]
    pub repeats: u64,
    /// Also train on every record and write model.ckpt
    #[arg(long)]
    pub save_model: bool,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[command(flatten)]
    pub data: ManifestArg,
    /// Rank this many evenly spaced ROIs instead of the whole atlas
    #[arg(long)]
    pub atlas_size: Option<usize>,
    /// Comma-separated candidate ROIs (takes precedence over --atlas-size)
    #[arg(long, value_delimiter = ',')]
    pub rois: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: ManifestArg,
    /// Ranking JSON written by rank-roi
    #[arg(long, value_name = "PATH")]
    pub ranking: PathBuf,
    /// `top` grows from the best ROI, `reverse` from the worst
    #[arg(long, default_value = "top")]
    pub direction: String,
    /// Largest ROI count evaluated
    #[arg(long, default_value_t = 20)]
    pub k_max: usize,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub data: ManifestArg,
    /// Ranking JSON written by rank-roi
    #[arg(long, value_name = "PATH")]
    pub ranking: PathBuf,
    /// Comma-separated variants (default: all four)
    #[arg(long, value_delimiter = ',')]
    pub variants: Vec<String>,
    /// Largest ROI count evaluated
    #[arg(long, default_value_t = 20)]
    pub k_max: usize,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// JSON report written by train, rank-roi, sweep or compare
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,
    /// Output format: table, plotdata or json
    #[arg(long, default_value = "table")]
    pub format: String,
    /// Output file (default: standard output)
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

/// Exit status for an error, by category.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_data_error() {
        EXIT_DATA
    } else if matches!(err, Error::ExperimentConfig(_) | Error::Config(_) | Error::InvalidSlicing(_)) {
        EXIT_USAGE
    } else {
        EXIT_RUNTIME
    }
}

fn error_category(code: i32) -> &'static str {
    match code {
        EXIT_USAGE => "usage error",
        EXIT_DATA => "data error",
        _ => "runtime error",
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run_command(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("roiranknet: {}: {e}", error_category(code));
            code
        }
    }
}

fn resolve_jobs(flag: Option<usize>) -> Result<usize> {
    let jobs = match flag {
        Some(j) => j,
        None => match std::env::var(JOBS_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| Error::ExperimentConfig(format!("{JOBS_ENV}={v:?} is not a thread count")))?,
            Err(_) => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        },
    };
    if jobs == 0 {
        return Err(Error::ExperimentConfig("--jobs must be at least 1".into()));
    }
    Ok(jobs)
}

/// Builds the training configuration: file, then overrides, then `--seed`.
pub fn resolve_config(cli: &Cli) -> Result<TrainConfig> {
    let mut config = match &cli.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    for kv in &cli.overrides {
        config.apply_override(kv)?;
    }
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    config.validate()?;
    Ok(config)
}

/// Executes a parsed command line on a worker pool of the requested size.
pub fn run_command(cli: &Cli) -> Result<()> {
    let jobs = resolve_jobs(cli.jobs)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::ExperimentConfig(e.to_string()))?;
    pool.install(|| dispatch(cli))
}

fn write_reports(report: &Report, dir: &Path, stem: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    for format in [ReportFormat::Json, ReportFormat::Table, ReportFormat::Plotdata] {
        let path = dir.join(format!("{stem}.{}", format.extension()));
        export_report(report, &path, format)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn read_ranking(path: &Path) -> Result<RankingResult> {
    match Report::read_json(path)? {
        Report::Ranking(r) => Ok(r),
        other => Err(Error::load(path, format!("expected a ranking report, found {}", other.kind()))),
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    let out = &cli.out_dir;
    match &cli.command {
        Command::GenSynthetic(a) => {
            let spec = SyntheticSpec {
                n_sites: a.sites,
                subjects_per_site_per_class: a.per_class,
                time_len: a.time_len,
                n_rois: a.rois,
                planted_rois: a.planted.clone(),
                effect_strength: a.effect,
                site_shift_scale: a.site_shift,
                seed: cli.seed.unwrap_or(0),
            };
            let manifest = gen_synthetic(&spec)?;
            let path = write_manifest(&manifest, out)?;
            println!("wrote {} subjects to {}", manifest.len(), path.display());
        }
        Command::Validate(a) => {
            let manifest = load_manifest(&a.manifest)?;
            let report = validate_dataset(&manifest);
            for v in &report.violations {
                println!("{v}");
            }
            let errors = report.violations.iter().filter(|v| v.severity == Severity::Error).count();
            println!(
                "{} subjects, {} sites, {} errors, {} warnings",
                manifest.len(),
                manifest.sites().len(),
                errors,
                report.violations.len() - errors
            );
            if report.has_errors() {
                return Err(Error::Validation {
                    subject: "<dataset>".into(),
                    message: format!("{errors} validation errors"),
                });
            }
        }
        Command::Train(a) => {
            let config = resolve_config(cli)?;
            let manifest = load_manifest(&a.data.manifest)?;
            let rois = if a.rois.is_empty() { (0..manifest.n_rois()).collect() } else { a.rois.clone() };
            if a.repeats == 0 {
                return Err(Error::ExperimentConfig("--repeats must be at least 1".into()));
            }
            let seeds: Vec<u64> = (0..a.repeats).map(|i| config.seed.wrapping_add(i)).collect();
            let report = loso_accuracy_repeated(&manifest, &rois, &config, &seeds)?;
            println!("mean LOSO accuracy {:.4}", report.mean_accuracy);
            write_reports(&report.into(), out, "loso")?;
            if a.save_model {
                save_full_model(&manifest, &rois, &config, out)?;
            }
        }
        Command::RankRoi(a) => {
            let config = resolve_config(cli)?;
            let manifest = load_manifest(&a.data.manifest)?;
            let candidates = match (a.rois.is_empty(), a.atlas_size) {
                (false, _) => a.rois.clone(),
                (true, Some(n)) => evenly_spaced_rois(manifest.n_rois(), n)?,
                (true, None) => (0..manifest.n_rois()).collect(),
            };
            eprintln!(
                "ranking {} ROIs over {} sites",
                candidates.len(),
                manifest.sites().len()
            );
            let ranking = rank_single_roi(&manifest, &config, &candidates)?;
            let top: Vec<String> = ranking.rank_order.iter().take(10).map(usize::to_string).collect();
            println!("top ROIs: {}", top.join(","));
            write_reports(&ranking.into(), out, "ranking")?;
        }
        Command::Sweep(a) => {
            let config = resolve_config(cli)?;
            let direction: Direction = a.direction.parse()?;
            let manifest = load_manifest(&a.data.manifest)?;
            let ranking = read_ranking(&a.ranking)?;
            let sweep = topk_sweep(&manifest, &ranking, a.k_max, &config, direction)?;
            let (k, acc) = sweep.best();
            println!("best mean LOSO accuracy {acc:.4} at k = {k}");
            write_reports(&sweep.into(), out, &format!("sweep_{direction}"))?;
        }
        Command::Compare(a) => {
            let config = resolve_config(cli)?;
            let variants: Vec<ModelConfig> = if a.variants.is_empty() {
                Variant::ALL.iter().map(|&v| ModelConfig::new(v)).collect()
            } else {
                a.variants
                    .iter()
                    .map(|s| s.parse::<Variant>().map(ModelConfig::new))
                    .collect::<Result<_>>()?
            };
            let manifest = load_manifest(&a.data.manifest)?;
            let ranking = read_ranking(&a.ranking)?;
            let result = model_comparison(&manifest, &ranking, &variants, a.k_max, &config)?;
            let report: Report = result.into();
            print!("{}", report.table());
            write_reports(&report, out, "comparison")?;
        }
        Command::Report(a) => {
            let format: ReportFormat = a.format.parse()?;
            let report = Report::read_json(&a.input)?;
            match &a.output {
                Some(path) => export_report(&report, path, format)?,
                None => print!("{}", report.render(format)?),
            }
        }
    }
    Ok(())
}

fn save_full_model(manifest: &Manifest, rois: &[usize], config: &TrainConfig, out: &Path) -> Result<()> {
    let records: Vec<_> = manifest.records().iter().collect();
    let model_seed = seed::derive(config.seed, "full-model");
    let model = build_model(&config.model, &mut ChaCha8Rng::seed_from_u64(seed::derive(model_seed, "init")))?;
    let (model, _) = train(model, &records, rois, &TrainConfig { seed: model_seed, ..config.clone() })?;
    let path = out.join("model.ckpt");
    save_checkpoint(&path, &model, config.seed, rois)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

/// Long flag names of every argument of `subcommand` (global flags included).
pub fn flag_registry(subcommand: &str) -> Vec<String> {
    let mut root = Cli::command();
    root.build();
    let mut flags: Vec<String> = root
        .get_arguments()
        .filter(|a| a.is_global_set())
        .filter_map(|a| a.get_long().map(str::to_string))
        .collect();
    if let Some(sub) = root.find_subcommand(subcommand) {
        flags.extend(sub.get_arguments().filter_map(|a| a.get_long().map(str::to_string)));
    }
    flags.sort();
    flags.dedup();
    flags
}

/// Rendered `--help` text of `subcommand`.
pub fn help_text(subcommand: &str) -> Option<String> {
    let mut root = Cli::command();
    root.build();
    let sub = root.find_subcommand_mut(subcommand)?;
    Some(sub.render_long_help().to_string())
}

/// Names of all subcommands.
pub fn subcommand_names() -> Vec<String> {
    Cli::command().get_subcommands().map(|s| s.get_name().to_string()).collect()
}
