use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use metriscope_core::featstore::{ExtractorKind, ExtractorSpec};
use metriscope_core::metrics::MetricConfig;
use metriscope_core::perturb::PerturbationSpec;
use metriscope::config::RunConfig;
use metriscope::heatmap::HeatmapFormat;
use metriscope::pipeline::{self, parse_condition};
use metriscope::{CliError, Result};
use serde::Deserialize;

/// Stress tests for no-reference image quality metrics.
#[derive(Parser)]
#[command(name = "metriscope", version)]
struct Cli {
    /// Root seed; overrides the config's.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (a file for `embed`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads, 0 for one per core.
    #[arg(long, global = true, env = "METRISCOPE_THREADS", default_value_t = 0)]
    threads: usize,
    /// Run configuration JSON.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic phantom image set.
    GenPhantoms(GenPhantoms),
    /// Apply one perturbation to an image set.
    Perturb(Perturb),
    /// Extract features from an image set into a FEMB (or .csv) file.
    Embed(Embed),
    /// Evaluate the metric suite on a reference/candidate pair.
    Metrics(Metrics),
    /// Build a sensitivity table and heatmaps from metric reports.
    Analyze(Analyze),
    /// Run the full pipeline described by --config.
    Run,
}

#[derive(Args)]
struct GenPhantoms {
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.4, 0.4, 0.2])]
    class_mix: Vec<f64>,
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [0.5, 0.5])]
    source_mix: Vec<f64>,
    /// Omit the lesion and its mask.
    #[arg(long)]
    no_lesion: bool,
}

#[derive(Args)]
struct Perturb {
    /// Image-set directory.
    #[arg(long = "in")]
    input: PathBuf,
    /// Perturbation as inline JSON, or `@path` to a JSON file.
    #[arg(long)]
    spec: String,
    /// Set that external duplication copies from.
    #[arg(long)]
    reference: Option<PathBuf>,
}

#[derive(Args)]
struct Embed {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "global64", value_parser = ["global64", "spatial48"])]
    extractor: String,
    #[arg(long, default_value_t = 4)]
    grid: usize,
}

#[derive(Args)]
struct Metrics {
    /// Reference image set or feature file.
    #[arg(long)]
    real: PathBuf,
    /// Candidate image set or feature file.
    #[arg(long)]
    gen: PathBuf,
    /// Reference spatial features for sFID.
    #[arg(long)]
    real_spatial: Option<PathBuf>,
    /// Candidate spatial features for sFID.
    #[arg(long)]
    gen_spatial: Option<PathBuf>,
    /// Held-out reference sample for the Ct score.
    #[arg(long)]
    heldout: Option<PathBuf>,
    /// Candidate class-probability CSV for the inception score.
    #[arg(long)]
    probs: Option<PathBuf>,
    /// Metric settings JSON; defaults to the config's `metrics` section.
    #[arg(long)]
    metrics_config: Option<PathBuf>,
    /// Report file stem.
    #[arg(long, default_value = "report")]
    name: String,
}

#[derive(Args)]
struct Analyze {
    #[arg(long)]
    baseline: PathBuf,
    /// `name=report.json`, repeatable, in column order.
    #[arg(long = "condition")]
    conditions: Vec<String>,
    /// Directory of condition reports; uses its conditions.json order when present.
    #[arg(long)]
    reports: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "csv,json,svg")]
    formats: Vec<HeatmapFormat>,
    /// Heatmap file stem.
    #[arg(long, default_value = "heatmap")]
    name: String,
}

fn require_out(out: Option<PathBuf>) -> Result<PathBuf> {
    out.ok_or_else(|| CliError::Config("--out is required".into()))
}

fn load_config(path: Option<&Path>) -> Result<Option<RunConfig>> {
    path.map(RunConfig::load).transpose()
}

fn seed_of(cli_seed: Option<u64>, cfg: Option<&RunConfig>) -> u64 {
    cli_seed.or(cfg.map(|c| c.seed)).unwrap_or(0)
}

fn read_json_arg(arg: &str) -> Result<String> {
    match arg.strip_prefix('@') {
        Some(path) => fs::read_to_string(path).map_err(|e| CliError::io(Path::new(path), e)),
        None => Ok(arg.to_string()),
    }
}

#[derive(Deserialize)]
struct ConditionEntry {
    label: String,
    file: String,
}

fn report_conditions(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let listing = dir.join("conditions.json");
    if listing.exists() {
        let text = fs::read_to_string(&listing).map_err(|e| CliError::io(&listing, e))?;
        let entries: Vec<ConditionEntry> = serde_json::from_str(&text).map_err(|e| CliError::format(&listing, e.to_string()))?;
        return Ok(entries
            .into_iter()
            .map(|c| (c.label, dir.join(format!("{}.json", c.file))))
            .collect());
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    Ok(paths.iter().map(|p| parse_condition(&p.to_string_lossy())).collect())
}

fn dispatch(cli: Cli) -> Result<()> {
    let cfg = load_config(cli.config.as_deref())?;
    let seed = seed_of(cli.seed, cfg.as_ref());
    match cli.command {
        Command::GenPhantoms(a) => {
            let args = pipeline::GenPhantomsArgs {
                count: a.count,
                size: a.size,
                class_mix: [a.class_mix[0], a.class_mix[1], a.class_mix[2]],
                source_mix: [a.source_mix[0], a.source_mix[1]],
                lesion: !a.no_lesion,
                seed,
                out: require_out(cli.out)?,
            };
            pipeline::cmd_gen_phantoms(&args).map(drop)
        }
        Command::Perturb(a) => {
            let spec: PerturbationSpec =
                serde_json::from_str(&read_json_arg(&a.spec)?).map_err(|e| CliError::Config(format!("--spec: {e}")))?;
            let args = pipeline::PerturbArgs {
                input: a.input,
                spec,
                reference: a.reference,
                seed,
                out: require_out(cli.out)?,
            };
            pipeline::cmd_perturb(&args).map(drop)
        }
        Command::Embed(a) => {
            let extractor = match a.extractor.as_str() {
                "spatial48" => ExtractorSpec::spatial(a.grid),
                _ => ExtractorSpec::global64(),
            };
            let args = pipeline::EmbedArgs {
                input: a.input,
                extractor,
                out: require_out(cli.out)?,
            };
            pipeline::cmd_embed(&args).map(drop)
        }
        Command::Metrics(a) => {
            let metrics = match (&a.metrics_config, &cfg) {
                (Some(p), _) => {
                    let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                    serde_json::from_str::<MetricConfig>(&text).map_err(|e| CliError::format(p, e.to_string()))?
                }
                (None, Some(c)) => c.metrics.clone(),
                (None, None) => MetricConfig::default(),
            };
            let (extractor, spatial_grid) = match &cfg {
                Some(c) if c.extractor.kind != ExtractorKind::External => (c.extractor.clone(), c.spatial_grid),
                _ => (ExtractorSpec::global64(), 4),
            };
            let args = pipeline::MetricsArgs {
                real: a.real,
                gen: a.gen,
                real_spatial: a.real_spatial,
                gen_spatial: a.gen_spatial,
                heldout: a.heldout,
                probs: a.probs,
                metrics,
                extractor,
                spatial_grid,
                seed,
                out: require_out(cli.out)?,
                name: a.name,
            };
            pipeline::cmd_metrics(&args).map(drop)
        }
        Command::Analyze(a) => {
            let mut conditions: Vec<(String, PathBuf)> = match &a.reports {
                Some(dir) => report_conditions(dir)?,
                None => Vec::new(),
            };
            conditions.extend(a.conditions.iter().map(|c| parse_condition(c)));
            if conditions.is_empty() {
                return Err(CliError::Config("analyze needs --condition or --reports".into()));
            }
            let args = pipeline::AnalyzeArgs {
                baseline: a.baseline,
                conditions,
                formats: a.formats,
                out: require_out(cli.out)?,
                stem: a.name,
            };
            pipeline::cmd_analyze(&args).map(drop)
        }
        Command::Run => {
            let mut cfg = cfg.ok_or_else(|| CliError::Config("run needs --config".into()))?;
            cfg.seed = seed;
            let out = cli
                .out
                .or_else(|| cfg.out.clone())
                .ok_or_else(|| CliError::Config("no output directory: pass --out or set `out`".into()))?;
            pipeline::cmd_run(&cfg, &out).map(drop)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            let e = CliError::Config(e.to_string().trim_end().to_string());
            eprintln!("{}", e.to_json());
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let threads = cli.threads;
    let result = pipeline::with_threads(threads, move || dispatch(cli)).and_then(|r| r);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
