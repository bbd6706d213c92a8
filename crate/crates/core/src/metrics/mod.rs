//! The upstream metric suite and the report that binds it together.
//!
//! Every metric consumes [`FeatureMatrix`] inputs (plus class probabilities
//! for the inception score). Randomised metrics draw from their own child of
//! the caller's [`RngStream`], so results do not depend on evaluation order.

mod copying;
mod frechet;
mod inception;
mod kernel;
mod likelihood;
mod manifold;
mod sliced;

pub use copying::{ct_score, mann_whitney_z, CtScore, CELL_FLOOR};
pub use frechet::{
    default_fd_inf_sizes, fd_inf, fid, fid_features, fit_line, matrix_sqrt_psd, sfid, GaussianMoments,
};
pub use inception::inception_score;
pub use kernel::{cosine_kernel, default_kid_subset, kid, mmd_rbf, vendi, KernelKind, KernelMatrix};
pub use likelihood::fls;
pub use manifold::{
    authpct, default_k, dreamsim_score, exact_copies, perceptual_intra_distance, perceptual_nn_distance,
    prdc, realism, ManifoldIndex, Prdc, Realism, REALISM_CAP,
};
pub use sliced::{asw, wasserstein_1d, ProjectionSet};

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::featstore::{fit_kmeans, pseudo_class_probs};
use crate::{ClassProbMatrix, Error, FeatureMatrix, Result, RngStream};

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Direction {
    LowerBetter,
    HigherBetter,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::LowerBetter => "lower-better",
            Direction::HigherBetter => "higher-better",
        }
    }
}

impl core::str::FromStr for Direction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lower-better" => Ok(Direction::LowerBetter),
            "higher-better" => Ok(Direction::HigherBetter),
            other => Err(Error::InvalidInput(format!("unknown direction `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricEntry {
    pub name: String,
    pub value: f64,
    pub direction: Direction,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub std: Option<f64>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub flags: Vec<String>,
}

/// Named metric values for one (reference, candidate) pair.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricReport {
    pub real: String,
    pub gen: String,
    pub entries: Vec<MetricEntry>,
}

impl MetricReport {
    pub fn new(real: impl Into<String>, gen: impl Into<String>) -> Self {
        Self {
            real: real.into(),
            gen: gen.into(),
            entries: Vec::new(),
        }
    }

    /// Appends an entry; names must be unique.
    pub fn push(&mut self, entry: MetricEntry) -> Result<()> {
        if self.get(&entry.name).is_some() {
            return Err(Error::InvalidInput(format!("duplicate metric `{}`", entry.name)));
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&MetricEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.get(name).map(|e| e.value)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }
}

/// Toggleable metrics, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Metric {
    Fid,
    Sfid,
    Kid,
    MmdRbf,
    #[cfg_attr(feature = "serde", serde(rename = "is", alias = "inception_score"))]
    InceptionScore,
    PerceptualNn,
    PerceptualIntra,
    Dreamsim,
    /// Precision, recall, density and coverage together.
    Prdc,
    Realism,
    Vendi,
    Fls,
    Asw,
    #[cfg_attr(feature = "serde", serde(rename = "authpct"))]
    AuthPct,
    Ct,
    FdInf,
}

impl Metric {
    pub const ALL: [Metric; 16] = [
        Metric::Fid,
        Metric::Sfid,
        Metric::Kid,
        Metric::MmdRbf,
        Metric::InceptionScore,
        Metric::PerceptualNn,
        Metric::PerceptualIntra,
        Metric::Dreamsim,
        Metric::Prdc,
        Metric::Realism,
        Metric::Vendi,
        Metric::Fls,
        Metric::Asw,
        Metric::AuthPct,
        Metric::Ct,
        Metric::FdInf,
    ];

    /// Toggle name.
    pub fn id(self) -> &'static str {
        match self {
            Metric::Fid => "fid",
            Metric::Sfid => "sfid",
            Metric::Kid => "kid",
            Metric::MmdRbf => "mmd_rbf",
            Metric::InceptionScore => "is",
            Metric::PerceptualNn => "perceptual_nn",
            Metric::PerceptualIntra => "perceptual_intra",
            Metric::Dreamsim => "dreamsim",
            Metric::Prdc => "prdc",
            Metric::Realism => "realism",
            Metric::Vendi => "vendi",
            Metric::Fls => "fls",
            Metric::Asw => "asw",
            Metric::AuthPct => "authpct",
            Metric::Ct => "ct",
            Metric::FdInf => "fd_inf",
        }
    }

    /// Name used in error messages.
    pub fn long_name(self) -> &'static str {
        match self {
            Metric::InceptionScore => "inception_score",
            other => other.id(),
        }
    }

    pub fn from_id(s: &str) -> Option<Metric> {
        match s {
            "inception_score" => Some(Metric::InceptionScore),
            _ => Metric::ALL.into_iter().find(|m| m.id() == s),
        }
    }
}

impl core::fmt::Display for Metric {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.id())
    }
}

/// Where the inception score gets its class probabilities.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "source", rename_all = "snake_case"))]
pub enum ProbSource {
    /// Use the candidate family's `probs` matrix.
    External,
    /// Soft k-means memberships against clusters fitted on the reference.
    PseudoLabels { k: usize, temperature: f64 },
}

impl Default for ProbSource {
    fn default() -> Self {
        ProbSource::PseudoLabels { k: 10, temperature: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct MetricConfig {
    pub disabled: BTreeSet<Metric>,
    /// `None` means `min(100, n_r, n_g)`.
    pub kid_subset_size: Option<usize>,
    pub kid_subsets: usize,
    /// `None` means 5, or 3 below 50 samples.
    pub prdc_k: Option<usize>,
    pub realism_k: Option<usize>,
    pub asw_projections: usize,
    /// `None` means five geometric steps from n/5 to n.
    pub fd_inf_sizes: Option<Vec<usize>>,
    pub fd_inf_reps: usize,
    pub is_splits: usize,
    pub is_probs: ProbSource,
    pub ct_cells: usize,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            disabled: BTreeSet::new(),
            kid_subset_size: None,
            kid_subsets: 100,
            prdc_k: None,
            realism_k: None,
            asw_projections: 128,
            fd_inf_sizes: None,
            fd_inf_reps: 3,
            is_splits: 10,
            is_probs: ProbSource::default(),
            ct_cells: 3,
        }
    }
}

impl MetricConfig {
    pub fn enabled(&self, m: Metric) -> bool {
        !self.disabled.contains(&m)
    }

    pub fn disable(mut self, m: Metric) -> Self {
        self.disabled.insert(m);
        self
    }
}

/// The feature views of one image set that the metrics may need.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFamily {
    pub name: String,
    pub global: FeatureMatrix,
    pub spatial: Option<FeatureMatrix>,
    pub probs: Option<ClassProbMatrix>,
    /// Held-out sample from the reference distribution (Ct test set).
    pub heldout: Option<FeatureMatrix>,
}

impl FeatureFamily {
    pub fn new(name: impl Into<String>, global: FeatureMatrix) -> Self {
        Self {
            name: name.into(),
            global,
            spatial: None,
            probs: None,
            heldout: None,
        }
    }

    pub fn with_spatial(mut self, spatial: FeatureMatrix) -> Self {
        self.spatial = Some(spatial);
        self
    }

    pub fn with_probs(mut self, probs: ClassProbMatrix) -> Self {
        self.probs = Some(probs);
        self
    }

    pub fn with_heldout(mut self, heldout: FeatureMatrix) -> Self {
        self.heldout = Some(heldout);
        self
    }
}

fn entry(name: &str, value: f64, direction: Direction) -> MetricEntry {
    MetricEntry {
        name: name.to_string(),
        value,
        direction,
        std: None,
        flags: Vec::new(),
    }
}

fn check_finite(metric: Metric, e: &MetricEntry) -> Result<()> {
    if e.value.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric {
            metric: metric.long_name(),
            reason: format!("{} evaluated to {}", e.name, e.value),
        })
    }
}

/// Verifies every input an enabled metric needs is present.
pub fn check_inputs(real: &FeatureFamily, gen: &FeatureFamily, config: &MetricConfig) -> Result<()> {
    use Metric::*;
    let missing = |m: Metric, artifact: &'static str| Error::MissingInput {
        metric: m.long_name(),
        artifact,
    };
    if config.enabled(Sfid) {
        if real.spatial.is_none() {
            return Err(missing(Sfid, "reference spatial features"));
        }
        if gen.spatial.is_none() {
            return Err(missing(Sfid, "candidate spatial features"));
        }
    }
    if config.enabled(Ct) && real.heldout.is_none() {
        return Err(missing(Ct, "held-out test features"));
    }
    if config.enabled(InceptionScore) && config.is_probs == ProbSource::External && gen.probs.is_none() {
        return Err(missing(InceptionScore, "class probability matrix"));
    }
    Ok(())
}

/// Runs every enabled metric on one (reference, candidate) pair.
///
/// Each metric uses the child stream `rng.child(position in Metric::ALL)`.
pub fn evaluate_all(real: &FeatureFamily, gen: &FeatureFamily, config: &MetricConfig, rng: &RngStream) -> Result<MetricReport> {
    use Direction::*;
    use Metric::*;

    check_inputs(real, gen, config)?;
    let (r, g) = (&real.global, &gen.global);
    let mut report = MetricReport::new(real.name.clone(), gen.name.clone());
    let stream = |m: Metric| rng.child(Metric::ALL.iter().position(|x| *x == m).unwrap() as u64);
    let tag = |m: Metric| {
        move |e: Error| match e {
            Error::Numeric { .. } | Error::MissingInput { .. } => e,
            other => Error::Numeric {
                metric: m.long_name(),
                reason: other.to_string(),
            },
        }
    };

    for m in Metric::ALL.into_iter().filter(|m| config.enabled(*m)) {
        let mut produced: Vec<MetricEntry> = Vec::new();
        match m {
            Fid => produced.push(entry("fid", fid_features(r, g).map_err(tag(m))?, LowerBetter)),
            Sfid => {
                let (rs, gs) = (real.spatial.as_ref().unwrap(), gen.spatial.as_ref().unwrap());
                produced.push(entry("sfid", sfid(rs, gs).map_err(tag(m))?, LowerBetter));
            }
            Kid => {
                let s = config.kid_subset_size.unwrap_or_else(|| default_kid_subset(r.n(), g.n()));
                let (mean, std) = kid(r, g, s, config.kid_subsets, &stream(m)).map_err(tag(m))?;
                let mut e = entry("kid", mean, LowerBetter);
                e.std = Some(std);
                produced.push(e);
            }
            MmdRbf => produced.push(entry("mmd_rbf", mmd_rbf(r, g).map_err(tag(m))?, LowerBetter)),
            InceptionScore => {
                let probs = match (&config.is_probs, &gen.probs) {
                    (ProbSource::External, Some(p)) => p.clone(),
                    (ProbSource::External, None) => {
                        return Err(Error::MissingInput {
                            metric: m.long_name(),
                            artifact: "class probability matrix",
                        })
                    }
                    (ProbSource::PseudoLabels { k, temperature }, _) => {
                        let model = fit_kmeans(r, *k, &stream(m)).map_err(tag(m))?;
                        pseudo_class_probs(&model, g, *temperature).map_err(tag(m))?
                    }
                };
                let (mean, std) = inception_score(&probs, config.is_splits).map_err(tag(m))?;
                let mut e = entry("is", mean, HigherBetter);
                e.std = Some(std);
                if matches!(config.is_probs, ProbSource::PseudoLabels { .. }) {
                    e.flags.push("pseudo-labels".into());
                }
                produced.push(e);
            }
            PerceptualNn => produced.push(entry("perceptual_nn", perceptual_nn_distance(r, g).map_err(tag(m))?, LowerBetter)),
            PerceptualIntra => {
                let mut e = entry("perceptual_intra", perceptual_intra_distance(g).map_err(tag(m))?, LowerBetter);
                e.flags.push("diversity-caveat".into());
                produced.push(e);
            }
            Dreamsim => {
                let mut e = entry("dreamsim", dreamsim_score(r, g).map_err(tag(m))?, HigherBetter);
                e.flags.push("surrogate".into());
                produced.push(e);
            }
            Prdc => {
                let k = config.prdc_k.unwrap_or_else(|| default_k(r.n().min(g.n())));
                let p = prdc(r, g, k).map_err(tag(m))?;
                produced.push(entry("precision", p.precision, HigherBetter));
                produced.push(entry("recall", p.recall, HigherBetter));
                produced.push(entry("density", p.density, HigherBetter));
                produced.push(entry("coverage", p.coverage, HigherBetter));
            }
            Realism => {
                let k = config.realism_k.unwrap_or_else(|| default_k(r.n()));
                produced.push(entry("realism", realism(r, g, k).map_err(tag(m))?.median, HigherBetter));
            }
            Vendi => produced.push(entry("vendi", vendi(g).map_err(tag(m))?, HigherBetter)),
            Fls => produced.push(entry("fls", fls(r, g).map_err(tag(m))?, HigherBetter)),
            Asw => produced.push(entry("asw", asw(r, g, config.asw_projections, &stream(m)).map_err(tag(m))?, LowerBetter)),
            AuthPct => {
                let mut e = entry("authpct", authpct(r, g).map_err(tag(m))?, HigherBetter);
                let copies = exact_copies(r, g);
                if copies > 0 {
                    e.flags.push(format!("exact-copies={copies}"));
                }
                produced.push(e);
            }
            Ct => {
                let test = real.heldout.as_ref().unwrap();
                let ct = ct_score(r, test, g, config.ct_cells, &stream(m)).map_err(tag(m))?;
                let mut e = entry("ct", ct.value.abs(), LowerBetter);
                e.flags.push(format!("signed={}", ct.value));
                produced.push(e);
            }
            FdInf => {
                let sizes = config
                    .fd_inf_sizes
                    .clone()
                    .unwrap_or_else(|| default_fd_inf_sizes(r.n().min(g.n())));
                produced.push(entry("fd_inf", fd_inf(r, g, &sizes, config.fd_inf_reps, &stream(m)).map_err(tag(m))?, LowerBetter));
            }
        }
        for e in produced {
            check_finite(m, &e)?;
            report.push(e)?;
        }
    }
    Ok(report)
}
