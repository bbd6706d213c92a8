//! The subcommands as library functions, and the full experiment pipeline.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use metriscope_core::analysis::{build_sensitivity, SensitivityTable};
use metriscope_core::featstore::{global64_row, spatial_row, ExtractorKind, ExtractorSpec, GLOBAL64_TAG};
use metriscope_core::metrics::{check_inputs, evaluate_all, FeatureFamily, Metric, MetricConfig, MetricReport};
use metriscope_core::perturb::{PerturbationSpec, Perturbed};
use metriscope_core::phantom::{generate_phantom_set, PhantomSpec};
use metriscope_core::{partition_dataset, ClassProbMatrix, FeatureMatrix, ImageSet, RngStream};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{slug, DataSource, DupSource, RunConfig};
use crate::error::{CliError, Result};
use crate::femb::{read_features, read_probs_csv, write_femb, write_femb_csv};
use crate::heatmap::{emit_heatmap, HeatmapFormat};
use crate::imageset::{quantize_set, read_set, write_set, SIDECAR};
use crate::report::{read_report_json, write_report_csv, write_report_json};

/// Child indices of the run seed's stream.
pub const STREAM_PARTITION: u64 = 1;
pub const STREAM_METRICS: u64 = 3;
pub const STREAM_PERTURB: u64 = 4;

pub const MANIFEST: &str = "manifest.json";

fn log(msg: impl AsRef<str>) {
    println!("[metriscope] {}", msg.as_ref());
}

/// Runs `f` on a pool of `threads` workers (0 = one per core).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Primary features for `set`, rows extracted in parallel.
pub fn extract_features(set: &ImageSet, extractor: &ExtractorSpec) -> Result<FeatureMatrix> {
    if set.is_empty() {
        return Err(CliError::Config(format!("image set `{}` is empty", set.name())));
    }
    let ids: Vec<String> = set.ids().map(String::from).collect();
    match extractor.kind {
        ExtractorKind::Global64 => {
            let rows: Vec<Vec<f64>> = set.images().par_iter().map(global64_row).collect();
            Ok(FeatureMatrix::from_rows(&rows, ids, GLOBAL64_TAG)?)
        }
        ExtractorKind::Spatial48 => extract_spatial(set, extractor.grid()?),
        ExtractorKind::External => Err(CliError::Config(
            "external embeddings are read from files, not extracted".into(),
        )),
    }
}

pub fn extract_spatial(set: &ImageSet, grid: usize) -> Result<FeatureMatrix> {
    if set.is_empty() {
        return Err(CliError::Config(format!("image set `{}` is empty", set.name())));
    }
    let rows = set
        .images()
        .par_iter()
        .map(|img| spatial_row(img, grid))
        .collect::<metriscope_core::Result<Vec<_>>>()?;
    let ids: Vec<String> = set.ids().map(String::from).collect();
    Ok(FeatureMatrix::from_rows(&rows, ids, format!("spatial{}:g{grid}", 3 * grid * grid))?)
}

/// The stream a perturbation draws from in a run seeded with `seed`.
pub fn perturb_stream(seed: u64, spec: &PerturbationSpec) -> RngStream {
    RngStream::new(seed).descend(&[STREAM_PERTURB, spec.seed])
}

pub fn metric_stream(seed: u64) -> RngStream {
    RngStream::new(seed).child(STREAM_METRICS)
}

fn is_image_set(path: &Path) -> bool {
    path.is_dir() || path.file_name().is_some_and(|n| n == SIDECAR)
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

// ---------------------------------------------------------------- gen-phantoms

#[derive(Debug, Clone)]
pub struct GenPhantomsArgs {
    pub count: usize,
    pub size: usize,
    pub class_mix: [f64; 3],
    pub source_mix: [f64; 2],
    pub lesion: bool,
    pub seed: u64,
    pub out: PathBuf,
}

pub fn cmd_gen_phantoms(args: &GenPhantomsArgs) -> Result<ImageSet> {
    let spec = PhantomSpec::new(args.count, args.size, args.seed)?
        .with_class_mix(args.class_mix)?
        .with_source_mix(args.source_mix)?
        .with_lesion(args.lesion);
    let set = quantize_set(&generate_phantom_set(&spec)?.renamed(file_stem(&args.out)))?;
    write_set(&set, &args.out)?;
    log(format!("wrote {} phantoms to {}", set.len(), args.out.display()));
    Ok(set)
}

// -------------------------------------------------------------------- perturb

#[derive(Debug, Clone)]
pub struct PerturbArgs {
    pub input: PathBuf,
    pub spec: PerturbationSpec,
    pub reference: Option<PathBuf>,
    pub seed: u64,
    pub out: PathBuf,
}

#[derive(Serialize)]
struct PerturbRecord<'a> {
    label: String,
    spec: &'a PerturbationSpec,
    flags: &'a [String],
}

/// Applies one perturbation to an image set on disk. Draws from the same
/// stream as the run pipeline, so `--seed` reproduces the run's sets.
pub fn cmd_perturb(args: &PerturbArgs) -> Result<Perturbed> {
    let set = read_set(&args.input)?;
    let reference = args.reference.as_deref().map(read_set).transpose()?;
    let out = perturb(&set, &args.spec, reference.as_ref(), args.seed)?;
    write_set(&out.set, &args.out)?;
    let record = PerturbRecord {
        label: args.spec.label(),
        spec: &args.spec,
        flags: &out.flags,
    };
    let path = args.out.join("perturbation.json");
    fs::write(&path, serde_json::to_string_pretty(&record).expect("record serialises") + "\n")
        .map_err(|e| CliError::io(&path, e))?;
    log(format!("{} -> {} ({} images)", args.spec.label(), args.out.display(), out.set.len()));
    Ok(out)
}

fn perturb(set: &ImageSet, spec: &PerturbationSpec, reference: Option<&ImageSet>, seed: u64) -> Result<Perturbed> {
    let mut out = spec.apply_with(set, reference, &perturb_stream(seed, spec))?;
    out.set = quantize_set(&out.set)?;
    Ok(out)
}

// ---------------------------------------------------------------------- embed

#[derive(Debug, Clone)]
pub struct EmbedArgs {
    pub input: PathBuf,
    pub extractor: ExtractorSpec,
    pub out: PathBuf,
}

/// Extracts features from an image set; `.csv` output selects the text format.
pub fn cmd_embed(args: &EmbedArgs) -> Result<FeatureMatrix> {
    let set = read_set(&args.input)?;
    let fm = extract_features(&set, &args.extractor)?;
    write_features(&fm, &args.out)?;
    log(format!("{} features ({} x {}) -> {}", fm.extractor_tag(), fm.n(), fm.d(), args.out.display()));
    Ok(fm)
}

fn write_features(fm: &FeatureMatrix, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        write_femb_csv(fm, path)
    } else {
        write_femb(fm, path)
    }
}

// -------------------------------------------------------------------- metrics

#[derive(Debug, Clone)]
pub struct MetricsArgs {
    /// Image-set directory (or its sidecar) or a feature file.
    pub real: PathBuf,
    pub gen: PathBuf,
    pub real_spatial: Option<PathBuf>,
    pub gen_spatial: Option<PathBuf>,
    pub heldout: Option<PathBuf>,
    /// Candidate class probabilities; switches the inception score to them.
    pub probs: Option<PathBuf>,
    pub metrics: MetricConfig,
    pub extractor: ExtractorSpec,
    pub spatial_grid: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub name: String,
}

struct Loaded {
    name: String,
    global: FeatureMatrix,
    spatial: Option<FeatureMatrix>,
}

fn load_side(path: &Path, spatial: Option<&Path>, extractor: &ExtractorSpec, grid: usize, want_spatial: bool) -> Result<Loaded> {
    if is_image_set(path) {
        let set = read_set(path)?;
        let global = extract_features(&set, extractor)?;
        let spatial = match spatial {
            Some(p) => Some(read_features(p)?),
            None if want_spatial => Some(extract_spatial(&set, grid)?),
            None => None,
        };
        Ok(Loaded {
            name: set.name().to_string(),
            global,
            spatial,
        })
    } else {
        Ok(Loaded {
            name: file_stem(path),
            global: read_features(path)?,
            spatial: spatial.map(read_features).transpose()?,
        })
    }
}

fn load_heldout(path: &Path, extractor: &ExtractorSpec) -> Result<FeatureMatrix> {
    if is_image_set(path) {
        extract_features(&read_set(path)?, extractor)
    } else {
        read_features(path)
    }
}

/// Evaluates one (reference, candidate) pair from image sets or feature files.
/// Metrics whose inputs are absent are skipped with a log line.
pub fn cmd_metrics(args: &MetricsArgs) -> Result<MetricReport> {
    let mut config = args.metrics.clone();
    let want_spatial = config.enabled(Metric::Sfid);
    let real = load_side(&args.real, args.real_spatial.as_deref(), &args.extractor, args.spatial_grid, want_spatial)?;
    let gen = load_side(&args.gen, args.gen_spatial.as_deref(), &args.extractor, args.spatial_grid, want_spatial)?;
    let heldout = args.heldout.as_deref().map(|p| load_heldout(p, &args.extractor)).transpose()?;
    let probs: Option<ClassProbMatrix> = args.probs.as_deref().map(read_probs_csv).transpose()?;
    if probs.is_some() {
        config.is_probs = metriscope_core::metrics::ProbSource::External;
    }
    if config.enabled(Metric::Sfid) && (real.spatial.is_none() || gen.spatial.is_none()) {
        log("skipping sfid: no spatial features for both sides");
        config.disabled.insert(Metric::Sfid);
    }
    if config.enabled(Metric::Ct) && heldout.is_none() {
        log("skipping ct: no held-out features");
        config.disabled.insert(Metric::Ct);
    }
    let mut real_family = FeatureFamily::new(real.name, real.global);
    real_family.spatial = real.spatial;
    real_family.heldout = heldout;
    let mut gen_family = FeatureFamily::new(gen.name, gen.global);
    gen_family.spatial = gen.spatial;
    gen_family.probs = probs;
    let report = evaluate(&real_family, &gen_family, &config, args.seed)?;
    fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    write_report_json(&report, &args.out.join(format!("{}.json", args.name)))?;
    write_report_csv(&report, &args.out.join(format!("{}.csv", args.name)))?;
    log(format!("{} metrics -> {}", report.entries.len(), args.out.display()));
    Ok(report)
}

fn evaluate(real: &FeatureFamily, gen: &FeatureFamily, config: &MetricConfig, seed: u64) -> Result<MetricReport> {
    if real.global.d() != gen.global.d() {
        return Err(CliError::Config(format!(
            "feature dimensions differ: reference {} vs candidate {}",
            real.global.d(),
            gen.global.d()
        )));
    }
    Ok(evaluate_all(real, gen, config, &metric_stream(seed))?)
}

// -------------------------------------------------------------------- analyze

#[derive(Debug, Clone)]
pub struct AnalyzeArgs {
    pub baseline: PathBuf,
    /// Condition name and report path, in column order.
    pub conditions: Vec<(String, PathBuf)>,
    pub formats: Vec<HeatmapFormat>,
    pub out: PathBuf,
    pub stem: String,
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<SensitivityTable> {
    let baseline = read_report_json(&args.baseline)?;
    let reports = args
        .conditions
        .iter()
        .map(|(name, p)| Ok((name.clone(), read_report_json(p)?)))
        .collect::<Result<Vec<_>>>()?;
    let table = build_sensitivity(&baseline, &reports)?;
    let written = emit_heatmap(&table, &args.formats, &args.out, &args.stem)?;
    for p in written {
        log(format!("wrote {}", p.display()));
    }
    Ok(table)
}

/// Condition arguments as `name=path` or a bare path named by its file stem.
pub fn parse_condition(arg: &str) -> (String, PathBuf) {
    match arg.split_once('=') {
        Some((name, path)) if !name.is_empty() => (name.to_string(), PathBuf::from(path)),
        _ => (file_stem(Path::new(arg)), PathBuf::from(arg)),
    }
}

// ------------------------------------------------------------------------ run

/// The reference, held-out and candidate sets, quantised as on disk.
#[derive(Debug, Clone)]
pub struct Sets {
    pub reference: ImageSet,
    pub heldout: Option<ImageSet>,
    pub candidate: ImageSet,
}

pub fn prepare_sets(cfg: &RunConfig) -> Result<Sets> {
    let pool = match &cfg.data {
        DataSource::Phantom {
            count,
            size,
            class_mix,
            source_mix,
            lesion,
        } => {
            let spec = PhantomSpec::new(*count, *size, cfg.seed)?
                .with_class_mix(*class_mix)?
                .with_source_mix(*source_mix)?
                .with_lesion(*lesion);
            quantize_set(&generate_phantom_set(&spec)?)?
        }
        DataSource::Pool { path } => read_set(path)?,
        DataSource::Sets {
            reference,
            candidate,
            heldout,
        } => {
            return Ok(Sets {
                reference: read_set(reference)?.renamed(cfg.reference_name.clone()),
                heldout: heldout.as_deref().map(read_set).transpose()?.map(|s| s.renamed("heldout")),
                candidate: read_set(candidate)?.renamed("candidate"),
            })
        }
    };
    let mut parts = partition_dataset(&pool, &cfg.split, &RngStream::new(cfg.seed).child(STREAM_PARTITION))?.into_iter();
    let reference = parts.next().unwrap().renamed(cfg.reference_name.clone());
    let heldout = parts.next().unwrap();
    let candidate = parts.next().unwrap().renamed("candidate");
    if reference.is_empty() || candidate.is_empty() {
        return Err(CliError::Config("split leaves the reference or candidate set empty".into()));
    }
    Ok(Sets {
        reference,
        heldout: (!heldout.is_empty()).then(|| heldout.renamed("heldout")),
        candidate,
    })
}

/// Reference-side features plus the settings every condition shares.
pub struct Evaluator {
    pub reference: FeatureFamily,
    pub config: MetricConfig,
    pub extractor: ExtractorSpec,
    pub spatial_grid: usize,
    pub seed: u64,
}

impl Evaluator {
    pub fn new(cfg: &RunConfig, sets: &Sets) -> Result<Self> {
        let mut reference = FeatureFamily::new(sets.reference.name(), extract_features(&sets.reference, &cfg.extractor)?);
        if cfg.metrics.enabled(Metric::Sfid) {
            reference.spatial = Some(extract_spatial(&sets.reference, cfg.spatial_grid)?);
        }
        if let Some(h) = &sets.heldout {
            reference.heldout = Some(extract_features(h, &cfg.extractor)?);
        }
        Ok(Self {
            reference,
            config: cfg.metrics.clone(),
            extractor: cfg.extractor.clone(),
            spatial_grid: cfg.spatial_grid,
            seed: cfg.seed,
        })
    }

    pub fn family(&self, set: &ImageSet) -> Result<FeatureFamily> {
        let mut f = FeatureFamily::new(set.name(), extract_features(set, &self.extractor)?);
        if self.config.enabled(Metric::Sfid) {
            f.spatial = Some(extract_spatial(set, self.spatial_grid)?);
        }
        Ok(f)
    }

    pub fn evaluate(&self, gen: &FeatureFamily) -> Result<MetricReport> {
        check_inputs(&self.reference, gen, &self.config)?;
        evaluate(&self.reference, gen, &self.config, self.seed)
    }
}

/// One evaluated perturbation condition.
pub struct ConditionResult {
    pub label: String,
    pub slug: String,
    pub spec: PerturbationSpec,
    pub flags: Vec<String>,
    pub set: ImageSet,
    pub features: FeatureFamily,
    pub report: MetricReport,
}

pub fn run_condition(eval: &Evaluator, sets: &Sets, dup: DupSource, spec: &PerturbationSpec) -> Result<ConditionResult> {
    let source = match dup {
        DupSource::Reference => Some(&sets.reference),
        DupSource::Heldout => sets.heldout.as_ref(),
    };
    let out = perturb(&sets.candidate, spec, source, eval.seed)?;
    let features = eval.family(&out.set)?;
    let report = eval.evaluate(&features)?;
    Ok(ConditionResult {
        label: spec.label(),
        slug: slug(&spec.label()),
        spec: spec.clone(),
        flags: out.flags,
        set: out.set,
        features,
        report,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub created_unix: u64,
    pub artifacts: BTreeMap<String, String>,
}

#[derive(Serialize)]
struct ConditionRecord<'a> {
    label: &'a str,
    file: &'a str,
    spec: &'a PerturbationSpec,
    flags: &'a [String],
}

fn write_family(f: &FeatureFamily, dir: &Path, stem: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    write_femb(&f.global, &dir.join(format!("{stem}.{}.femb", slug(f.global.extractor_tag()))))?;
    if let Some(s) = &f.spatial {
        write_femb(s, &dir.join(format!("{stem}.spatial.femb")))?;
    }
    Ok(())
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value).expect("value serialises") + "\n").map_err(|e| CliError::io(path, e))
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else if path != root.join(MANIFEST) {
            out.push(path);
        }
    }
    Ok(())
}

/// SHA-256 of every file under `root` except the manifest, keyed by `/`-joined relative path.
pub fn checksum_tree(root: &Path) -> Result<BTreeMap<String, String>> {
    let mut files = Vec::new();
    collect_files(root, root, &mut files)?;
    let mut map = BTreeMap::new();
    for f in files {
        let rel = f.strip_prefix(root).expect("walked under root");
        let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        map.insert(key, sha256_file(&f)?);
    }
    Ok(map)
}

/// The whole pipeline: data, features, baseline and per-condition reports,
/// heatmaps and the manifest, all under `out`.
pub fn cmd_run(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    cfg.validate()?;
    let hash = cfg.hash();
    log(format!("config_hash {hash}"));
    if out.join(MANIFEST).exists() || out.join("reports").exists() {
        return Err(CliError::Config(format!("{} already holds a run; choose an empty directory", out.display())));
    }
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    fs::write(out.join("config.json"), cfg.canonical_json() + "\n").map_err(|e| CliError::io(out, e))?;

    let sets = prepare_sets(cfg)?;
    log(format!(
        "sets: {} reference, {} held-out, {} candidate",
        sets.reference.len(),
        sets.heldout.as_ref().map_or(0, |s| s.len()),
        sets.candidate.len()
    ));
    let data = out.join("data");
    write_set(&sets.reference, &data.join("reference"))?;
    if let Some(h) = &sets.heldout {
        write_set(h, &data.join("heldout"))?;
    }
    write_set(&sets.candidate, &data.join("candidate"))?;

    let eval = Evaluator::new(cfg, &sets)?;
    let features = out.join("features");
    write_family(&eval.reference, &features, "reference")?;
    if let Some(h) = &eval.reference.heldout {
        write_femb(h, &features.join(format!("heldout.{}.femb", slug(h.extractor_tag()))))?;
    }
    let baseline_features = eval.family(&sets.candidate)?;
    write_family(&baseline_features, &features, "candidate")?;
    let baseline = eval.evaluate(&baseline_features)?;
    let reports = out.join("reports");
    fs::create_dir_all(&reports).map_err(|e| CliError::io(&reports, e))?;
    write_report_json(&baseline, &reports.join("baseline.json"))?;
    write_report_csv(&baseline, &reports.join("baseline.csv"))?;
    log(format!("baseline: {} metrics", baseline.entries.len()));

    let jobs: Vec<(usize, &PerturbationSpec)> = cfg
        .experiments
        .iter()
        .enumerate()
        .flat_map(|(i, e)| e.conditions.iter().map(move |c| (i, c)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|(i, spec)| {
            let r = run_condition(&eval, &sets, cfg.dup_source, spec)?;
            let exp = &cfg.experiments[*i].name;
            write_family(&r.features, &features.join(exp), &r.slug)?;
            let dir = reports.join(exp);
            fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
            write_report_json(&r.report, &dir.join(format!("{}.json", r.slug)))?;
            write_report_csv(&r.report, &dir.join(format!("{}.csv", r.slug)))?;
            if cfg.write_perturbed_images {
                write_set(&r.set, &data.join(exp).join(&r.slug))?;
            }
            log(format!("{exp}/{}: done", r.label));
            Ok((*i, r))
        })
        .collect::<Result<Vec<_>>>()?;

    let heatmaps = out.join("heatmaps");
    for (i, exp) in cfg.experiments.iter().enumerate() {
        let mine: Vec<&ConditionResult> = results.iter().filter(|(j, _)| *j == i).map(|(_, r)| r).collect();
        let records: Vec<ConditionRecord> = mine
            .iter()
            .map(|r| ConditionRecord {
                label: &r.label,
                file: &r.slug,
                spec: &r.spec,
                flags: &r.flags,
            })
            .collect();
        write_json(&records, &reports.join(&exp.name).join("conditions.json"))?;
        let named: Vec<(String, MetricReport)> = mine.iter().map(|r| (r.label.clone(), r.report.clone())).collect();
        let table = build_sensitivity(&baseline, &named)?;
        emit_heatmap(&table, &cfg.heatmap_formats, &heatmaps, &exp.name)?;
        log(format!("heatmap {}", exp.name));
    }

    let manifest = Manifest {
        config_hash: hash,
        seed: cfg.seed,
        created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        artifacts: checksum_tree(out)?,
    };
    write_json(&manifest, &out.join(MANIFEST))?;
    log(format!("{} artifacts, manifest at {}", manifest.artifacts.len(), out.join(MANIFEST).display()));
    Ok(manifest)
}
