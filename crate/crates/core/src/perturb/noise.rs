//! Additive and signal-dependent noise.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use super::{map_images, Perturbed};
use crate::{Error, ImageSet, Result, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum NoiseKind {
    Gaussian,
    Rician,
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub sigma: f64,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::param("sigma", "must be finite and non-negative"));
        }
        Ok(Self { kind, sigma })
    }
}

fn check(spec: &NoiseSpec, expected: NoiseKind) -> Result<()> {
    if spec.kind != expected {
        return Err(Error::param("kind", alloc::format!("expected {expected:?}, got {:?}", spec.kind)));
    }
    NoiseSpec::new(spec.kind, spec.sigma).map(|_| ())
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample::<f64, _>(StandardNormal)
}

/// `I' = clamp(I + n)`, `n ~ N(0, sigma^2)`, one stream per image.
pub fn add_gaussian_noise(set: &ImageSet, spec: &NoiseSpec, rng: &RngStream) -> Result<Perturbed> {
    check(spec, NoiseKind::Gaussian)?;
    if spec.sigma == 0.0 {
        return Ok(Perturbed::identity(set));
    }
    let s = spec.sigma;
    map_images(set, rng, |img, r| {
        let mut g = r.rng();
        Ok(img.pixels().iter().map(|&p| (p + s * normal(&mut g)).clamp(0.0, 1.0)).collect::<Vec<_>>())
    })
}

/// Magnitude of a complex signal with Gaussian noise on both channels:
/// `sqrt((I + n1)^2 + n2^2)`, clamped at 1.
pub fn add_rician_noise(set: &ImageSet, spec: &NoiseSpec, rng: &RngStream) -> Result<Perturbed> {
    check(spec, NoiseKind::Rician)?;
    if spec.sigma == 0.0 {
        return Ok(Perturbed::identity(set));
    }
    let s = spec.sigma;
    map_images(set, rng, |img, r| {
        let mut g = r.rng();
        Ok(img
            .pixels()
            .iter()
            .map(|&p| {
                let re = p + s * normal(&mut g);
                let im = s * normal(&mut g);
                (re * re + im * im).sqrt().min(1.0)
            })
            .collect::<Vec<_>>())
    })
}

/// Photon-count noise at rate `lambda = 1 / sigma^2`: `Poisson(I * lambda) / lambda`.
///
/// `sigma = 0` leaves the set unchanged and raises a flag.
pub fn add_poisson_noise(set: &ImageSet, spec: &NoiseSpec, rng: &RngStream) -> Result<Perturbed> {
    check(spec, NoiseKind::Poisson)?;
    if spec.sigma == 0.0 {
        let mut out = Perturbed::identity(set);
        out.flags.push("poisson-sigma-zero-identity".into());
        return Ok(out);
    }
    let lambda = 1.0 / (spec.sigma * spec.sigma);
    map_images(set, rng, |img, r| {
        let mut g = r.rng();
        img.pixels()
            .iter()
            .map(|&p| {
                let rate = p * lambda;
                if rate <= 0.0 {
                    return Ok(0.0);
                }
                let dist = Poisson::new(rate).map_err(|e| Error::image(img.id(), alloc::format!("{e}")))?;
                let k: f64 = dist.sample(&mut g);
                Ok((k / lambda).clamp(0.0, 1.0))
            })
            .collect::<Result<Vec<_>>>()
    })
}
