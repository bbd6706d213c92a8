//! Run configuration: one JSON document describing data, features, metrics
//! and perturbation experiments.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use metriscope_core::featstore::{ExtractorKind, ExtractorSpec};
use metriscope_core::metrics::MetricConfig;
use metriscope_core::perturb::PerturbationSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};
use crate::heatmap::HeatmapFormat;

/// Where the images come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Synthetic phantoms seeded by the run seed, then partitioned by `split`.
    Phantom {
        count: usize,
        size: usize,
        #[serde(default = "default_class_mix")]
        class_mix: [f64; 3],
        #[serde(default = "default_source_mix")]
        source_mix: [f64; 2],
        #[serde(default = "yes")]
        lesion: bool,
    },
    /// One image-set directory, partitioned by `split`.
    Pool { path: PathBuf },
    /// Pre-split image-set directories; `split` is ignored.
    Sets {
        reference: PathBuf,
        candidate: PathBuf,
        #[serde(default)]
        heldout: Option<PathBuf>,
    },
}

fn default_class_mix() -> [f64; 3] {
    [0.4, 0.4, 0.2]
}

fn default_source_mix() -> [f64; 2] {
    [0.5, 0.5]
}

fn yes() -> bool {
    true
}

/// Which set external duplication copies from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DupSource {
    #[default]
    Reference,
    Heldout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub name: String,
    pub conditions: Vec<PerturbationSpec>,
}

/// A sweep file holds either experiments or a bare list of conditions.
#[derive(Deserialize)]
#[serde(untagged)]
enum SweepFile {
    Experiments(Vec<Experiment>),
    Wrapped { experiments: Vec<Experiment> },
    Conditions(Vec<PerturbationSpec>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataSource,
    /// Reference, held-out and candidate fractions.
    #[serde(default = "default_split")]
    pub split: Vec<f64>,
    #[serde(default = "default_reference_name")]
    pub reference_name: String,
    /// Features every metric except sFID consumes.
    #[serde(default = "ExtractorSpec::global64")]
    pub extractor: ExtractorSpec,
    /// Grid for the sFID features.
    #[serde(default = "default_grid")]
    pub spatial_grid: usize,
    #[serde(default)]
    pub metrics: MetricConfig,
    #[serde(default)]
    pub experiments: Vec<Experiment>,
    /// Extra experiments read from a JSON file, appended after `experiments`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_file: Option<PathBuf>,
    #[serde(default)]
    pub dup_source: DupSource,
    #[serde(default = "default_formats")]
    pub heatmap_formats: Vec<HeatmapFormat>,
    #[serde(default)]
    pub write_perturbed_images: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn default_split() -> Vec<f64> {
    vec![0.4, 0.2, 0.4]
}

fn default_reference_name() -> String {
    "reference".into()
}

fn default_grid() -> usize {
    4
}

fn default_formats() -> Vec<HeatmapFormat> {
    HeatmapFormat::ALL.to_vec()
}

/// File-name-safe form of a condition label.
pub fn slug(label: &str) -> String {
    let mut s: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' })
        .collect();
    while s.ends_with('_') {
        s.pop();
    }
    if s.starts_with('.') {
        s.insert(0, '_');
    }
    s
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads, resolves relative paths against the file's directory, inlines the
    /// sweep file and validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.inline_sweep()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.data {
            DataSource::Phantom { .. } => {}
            DataSource::Pool { path } => fix(path),
            DataSource::Sets {
                reference,
                candidate,
                heldout,
            } => {
                fix(reference);
                fix(candidate);
                if let Some(h) = heldout {
                    fix(h);
                }
            }
        }
        if let Some(p) = &mut self.sweep_file {
            fix(p);
        }
        if self.extractor.kind == ExtractorKind::External {
            if let Some(p) = self.extractor.params.get_mut("path") {
                if Path::new(p).is_relative() {
                    *p = base.join(&*p).to_string_lossy().into_owned();
                }
            }
        }
    }

    /// Moves the sweep file's experiments into `experiments`.
    pub fn inline_sweep(&mut self) -> Result<()> {
        let Some(path) = self.sweep_file.take() else {
            return Ok(());
        };
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let sweep: SweepFile = serde_json::from_str(&text).map_err(|e| CliError::format(&path, e.to_string()))?;
        match sweep {
            SweepFile::Experiments(v) | SweepFile::Wrapped { experiments: v } => self.experiments.extend(v),
            SweepFile::Conditions(conditions) => {
                let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "sweep".into());
                self.experiments.push(Experiment { name, conditions });
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        match &self.data {
            DataSource::Phantom { count, size, class_mix, source_mix, .. } => {
                metriscope_core::phantom::PhantomSpec::new(*count, *size, self.seed)?
                    .with_class_mix(*class_mix)?
                    .with_source_mix(*source_mix)?;
            }
            DataSource::Pool { path } => require(path)?,
            DataSource::Sets {
                reference,
                candidate,
                heldout,
            } => {
                require(reference)?;
                require(candidate)?;
                if let Some(h) = heldout {
                    require(h)?;
                }
            }
        }
        if !matches!(self.data, DataSource::Sets { .. }) {
            if self.split.len() != 3 {
                return bad(format!("split needs three fractions, got {}", self.split.len()));
            }
            if self.split.iter().any(|f| !(f.is_finite() && *f >= 0.0)) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return bad("split fractions must be non-negative and sum to 1".into());
            }
            if self.split[0] == 0.0 || self.split[2] == 0.0 {
                return bad("reference and candidate fractions must be positive".into());
            }
        }
        match self.extractor.kind {
            ExtractorKind::External => {
                return bad("the run pipeline extracts features itself; pass external embeddings to `metrics`".into())
            }
            _ => self.extractor.validate()?,
        }
        if self.spatial_grid < 2 {
            return bad("spatial_grid must be at least 2".into());
        }
        if self.heatmap_formats.is_empty() {
            return bad("heatmap_formats is empty".into());
        }
        if self.reference_name.is_empty() {
            return bad("reference_name is empty".into());
        }
        let mut names = BTreeSet::new();
        for exp in &self.experiments {
            if exp.name.is_empty() || slug(&exp.name) != exp.name {
                return bad(format!("experiment name `{}` must use only letters, digits, `.`, `-` and `_`", exp.name));
            }
            if !names.insert(exp.name.as_str()) {
                return bad(format!("duplicate experiment `{}`", exp.name));
            }
            if exp.conditions.is_empty() {
                return bad(format!("experiment `{}` has no conditions", exp.name));
            }
            let mut slugs = BTreeSet::new();
            for c in &exp.conditions {
                let s = slug(&c.label());
                if s.is_empty() || !slugs.insert(s.clone()) {
                    return bad(format!("experiment `{}`: condition `{}` collides with another", exp.name, c.label()));
                }
            }
        }
        Ok(())
    }

    /// The configuration as compact JSON with sorted keys, minus the output directory.
    pub fn canonical_json(&self) -> String {
        let mut cfg = self.clone();
        cfg.out = None;
        let value = serde_json::to_value(&cfg).expect("config serialises");
        serde_json::to_string(&value).expect("value serialises")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingInput(format!("{} does not exist", path.display())))
    }
}
