//! Controlled manipulations of image sets.
//!
//! Every operation maps an [`ImageSet`] to a new set of the same size and
//! image shape and is the identity at its null level. Per-image randomness
//! comes from `rng.child(image index)`.

mod invention;
mod morph;
mod noise;
mod resample;

pub use invention::{invent_contrast_mode, InventionSpec};
pub use morph::{
    apply_radial_gradient, blur_tumour_boundary, boundary_band, default_amplitude_map, distance_transform, gaussian_blur,
    MorphKind, MorphSpec, DEFAULT_BAND_WIDTH,
};
pub use noise::{add_gaussian_noise, add_poisson_noise, add_rician_noise, NoiseKind, NoiseSpec};
pub use resample::{duplicate_external, duplicate_internal, replaced_count, resample_proportions, LabelKind};

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::{Error, ImageSet, ImageVolume, Result, RngStream};

/// A perturbed set plus notes about degenerate cases hit along the way.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbed {
    pub set: ImageSet,
    pub flags: Vec<String>,
}

impl Perturbed {
    pub fn new(set: ImageSet) -> Self {
        Self { set, flags: Vec::new() }
    }

    pub fn identity(set: &ImageSet) -> Self {
        Self::new(set.clone())
    }
}

pub(crate) fn map_images<F>(set: &ImageSet, rng: &RngStream, f: F) -> Result<Perturbed>
where
    F: Fn(&ImageVolume, &RngStream) -> Result<Vec<f64>>,
{
    let images = set
        .images()
        .iter()
        .enumerate()
        .map(|(i, img)| img.with_pixels(f(img, &rng.child(i as u64))?))
        .collect::<Result<Vec<_>>>()?;
    Ok(Perturbed::new(ImageSet::new(set.name(), images)?))
}

#[cfg(feature = "serde")]
fn default_band_width() -> f64 {
    DEFAULT_BAND_WIDTH
}

#[cfg(feature = "serde")]
fn default_smooth() -> f64 {
    0.5
}

#[cfg(feature = "serde")]
fn default_gm() -> (f64, f64) {
    (40.0, 70.0)
}

#[cfg(feature = "serde")]
fn default_wm() -> (f64, f64) {
    (70.0, 95.0)
}

/// Label-keyed maps accept both `"1"` and `1` as keys; JSON object keys are
/// always strings and the flattened spec defeats serde_json's key coercion.
#[cfg(feature = "serde")]
mod label_keys {
    use alloc::collections::BTreeMap;
    use core::fmt;

    use serde::de::{self, Deserializer, Visitor};
    use serde::Deserialize;

    struct Key(u32);

    impl<'de> Deserialize<'de> for Key {
        fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
            struct V;
            impl Visitor<'_> for V {
                type Value = Key;
                fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                    f.write_str("a non-negative integer label")
                }
                fn visit_u64<E: de::Error>(self, v: u64) -> Result<Key, E> {
                    u32::try_from(v).map(Key).map_err(|_| E::custom("label out of range"))
                }
                fn visit_str<E: de::Error>(self, v: &str) -> Result<Key, E> {
                    v.parse().map(Key).map_err(|_| E::custom(alloc::format!("`{v}` is not a label")))
                }
            }
            d.deserialize_any(V)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<u32, f64>, D::Error> {
        let raw = BTreeMap::<Key, f64>::deserialize(d)?;
        Ok(raw.into_iter().map(|(k, v)| (k.0, v)).collect())
    }

    impl PartialEq for Key {
        fn eq(&self, o: &Self) -> bool {
            self.0 == o.0
        }
    }
    impl Eq for Key {}
    impl PartialOrd for Key {
        fn partial_cmp(&self, o: &Self) -> Option<core::cmp::Ordering> {
            Some(self.cmp(o))
        }
    }
    impl Ord for Key {
        fn cmp(&self, o: &Self) -> core::cmp::Ordering {
            self.0.cmp(&o.0)
        }
    }
}

/// One manipulation and its level. Serialises as `{"kind": .., "params": {..}}`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", content = "params", rename_all = "snake_case"))]
pub enum Perturbation {
    Identity,
    Gaussian {
        sigma: f64,
    },
    Rician {
        sigma: f64,
    },
    Poisson {
        sigma: f64,
    },
    BoundaryBlur {
        sigma: f64,
        #[cfg_attr(feature = "serde", serde(default = "default_band_width"))]
        band_width: f64,
    },
    RadialGradient {
        level: u32,
        #[cfg_attr(feature = "serde", serde(default = "default_amplitude_map", deserialize_with = "label_keys::deserialize"))]
        amplitude_map: BTreeMap<u32, f64>,
    },
    ExternalDup {
        rate: f64,
    },
    InternalDup {
        rate: f64,
    },
    ClassProportions {
        #[cfg_attr(feature = "serde", serde(deserialize_with = "label_keys::deserialize"))]
        targets: BTreeMap<u32, f64>,
    },
    SourceProportions {
        #[cfg_attr(feature = "serde", serde(deserialize_with = "label_keys::deserialize"))]
        targets: BTreeMap<u32, f64>,
    },
    ModeInvention {
        sigma: f64,
        #[cfg_attr(feature = "serde", serde(default = "default_gm"))]
        gm_band: (f64, f64),
        #[cfg_attr(feature = "serde", serde(default = "default_wm"))]
        wm_band: (f64, f64),
        #[cfg_attr(feature = "serde", serde(default = "default_smooth"))]
        smooth_sigma: f64,
    },
}

fn fmt_targets(t: &BTreeMap<u32, f64>) -> String {
    let parts: Vec<String> = t.iter().map(|(k, v)| format!("{k}:{v}")).collect();
    parts.join("/")
}

impl Perturbation {
    pub fn kind(&self) -> &'static str {
        match self {
            Perturbation::Identity => "identity",
            Perturbation::Gaussian { .. } => "gaussian",
            Perturbation::Rician { .. } => "rician",
            Perturbation::Poisson { .. } => "poisson",
            Perturbation::BoundaryBlur { .. } => "boundary_blur",
            Perturbation::RadialGradient { .. } => "radial_gradient",
            Perturbation::ExternalDup { .. } => "external_dup",
            Perturbation::InternalDup { .. } => "internal_dup",
            Perturbation::ClassProportions { .. } => "class_proportions",
            Perturbation::SourceProportions { .. } => "source_proportions",
            Perturbation::ModeInvention { .. } => "mode_invention",
        }
    }

    /// Short condition name such as `gaussian(0.05)`.
    pub fn label(&self) -> String {
        let level = match self {
            Perturbation::Identity => return "identity".into(),
            Perturbation::Gaussian { sigma }
            | Perturbation::Rician { sigma }
            | Perturbation::Poisson { sigma }
            | Perturbation::BoundaryBlur { sigma, .. }
            | Perturbation::ModeInvention { sigma, .. } => format!("{sigma}"),
            Perturbation::RadialGradient { level, .. } => format!("{level}"),
            Perturbation::ExternalDup { rate } | Perturbation::InternalDup { rate } => format!("{rate}"),
            Perturbation::ClassProportions { targets } | Perturbation::SourceProportions { targets } => fmt_targets(targets),
        };
        format!("{}({level})", self.kind())
    }

    /// Whether the operation draws copies from a second image set.
    pub fn needs_reference(&self) -> bool {
        matches!(self, Perturbation::ExternalDup { .. })
    }
}

/// A perturbation plus its seed and an optional display name.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PerturbationSpec {
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub name: Option<String>,
    #[cfg_attr(feature = "serde", serde(flatten))]
    pub perturbation: Perturbation,
    #[cfg_attr(feature = "serde", serde(default))]
    pub seed: u64,
}

impl PerturbationSpec {
    pub fn new(perturbation: Perturbation, seed: u64) -> Self {
        Self {
            name: None,
            perturbation,
            seed,
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.perturbation.label())
    }

    /// Applies the perturbation with the stream `RngStream::new(seed)`.
    /// `reference` supplies copies for external duplication.
    pub fn apply(&self, set: &ImageSet, reference: Option<&ImageSet>) -> Result<Perturbed> {
        self.apply_with(set, reference, &RngStream::new(self.seed))
    }

    /// Applies the perturbation drawing from `rng`; `seed` is ignored.
    pub fn apply_with(&self, set: &ImageSet, reference: Option<&ImageSet>, rng: &RngStream) -> Result<Perturbed> {
        let rng = rng.clone();
        let mut out = match &self.perturbation {
            Perturbation::Identity => Ok(Perturbed::identity(set)),
            Perturbation::Gaussian { sigma } => add_gaussian_noise(set, &NoiseSpec::new(NoiseKind::Gaussian, *sigma)?, &rng),
            Perturbation::Rician { sigma } => add_rician_noise(set, &NoiseSpec::new(NoiseKind::Rician, *sigma)?, &rng),
            Perturbation::Poisson { sigma } => add_poisson_noise(set, &NoiseSpec::new(NoiseKind::Poisson, *sigma)?, &rng),
            Perturbation::BoundaryBlur { sigma, band_width } => {
                let mut spec = MorphSpec::boundary_blur(*sigma);
                spec.band_width = *band_width;
                blur_tumour_boundary(set, &spec)
            }
            Perturbation::RadialGradient { level, amplitude_map } => {
                let mut spec = MorphSpec::radial_gradient(*level);
                spec.amplitude_map = amplitude_map.clone();
                apply_radial_gradient(set, &spec)
            }
            Perturbation::ExternalDup { rate } => {
                let reference = reference.ok_or(Error::MissingInput {
                    metric: "external_dup",
                    artifact: "reference image set",
                })?;
                duplicate_external(set, reference, *rate, &rng)
            }
            Perturbation::InternalDup { rate } => duplicate_internal(set, *rate, &rng),
            Perturbation::ClassProportions { targets } => resample_proportions(set, LabelKind::Class, targets, &rng),
            Perturbation::SourceProportions { targets } => resample_proportions(set, LabelKind::Source, targets, &rng),
            Perturbation::ModeInvention {
                sigma,
                gm_band,
                wm_band,
                smooth_sigma,
            } => invent_contrast_mode(
                set,
                &InventionSpec {
                    sigma: *sigma,
                    gm_band: *gm_band,
                    wm_band: *wm_band,
                    smooth_sigma: *smooth_sigma,
                },
            ),
        }?;
        out.set = out.set.renamed(format!("{}|{}", set.name(), self.label()));
        Ok(out)
    }
}
