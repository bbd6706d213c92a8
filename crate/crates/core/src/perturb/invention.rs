//! Contrast-mode invention: brighten the mid band, darken the upper band.

use alloc::format;
use alloc::vec::Vec;

use super::morph::gaussian_blur;
use super::Perturbed;
use crate::dataset::normalize_buffer;
use crate::stats::percentile_sorted;
use crate::{Error, ImageSet, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InventionSpec {
    pub sigma: f64,
    /// Percentile interval `[lo, hi)` of the brightened band.
    pub gm_band: (f64, f64),
    /// Percentile interval `[lo, hi)` of the darkened band.
    pub wm_band: (f64, f64),
    pub smooth_sigma: f64,
}

impl InventionSpec {
    pub fn new(sigma: f64) -> Self {
        Self {
            sigma,
            gm_band: (40.0, 70.0),
            wm_band: (70.0, 95.0),
            smooth_sigma: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.sigma) {
            return Err(Error::param("sigma", "must lie in [0, 1)"));
        }
        let ok = |(lo, hi): (f64, f64)| (0.0..=100.0).contains(&lo) && (0.0..=100.0).contains(&hi) && lo < hi;
        if !ok(self.gm_band) || !ok(self.wm_band) {
            return Err(Error::param("gm_band/wm_band", "percentile bands need 0 <= lo < hi <= 100"));
        }
        if self.gm_band.1 > self.wm_band.0 && self.wm_band.1 > self.gm_band.0 {
            return Err(Error::param("gm_band/wm_band", "bands overlap"));
        }
        if !(self.smooth_sigma >= 0.0 && self.smooth_sigma.is_finite()) {
            return Err(Error::param("smooth_sigma", "must be non-negative"));
        }
        Ok(())
    }
}

/// Band scaling before smoothing. `None` when a band is empty or has no mass.
pub(crate) fn scale_bands(pixels: &[f64], spec: &InventionSpec) -> Option<Vec<f64>> {
    let mut sorted = pixels.to_vec();
    sorted.sort_by(f64::total_cmp);
    let bounds = |(lo, hi): (f64, f64)| (percentile_sorted(&sorted, lo), percentile_sorted(&sorted, hi));
    let (g0, g1) = bounds(spec.gm_band);
    let (w0, w1) = bounds(spec.wm_band);
    let in_gm = |p: f64| p >= g0 && p < g1;
    let in_wm = |p: f64| p >= w0 && p < w1;
    let gm_mass: f64 = pixels.iter().filter(|&&p| in_gm(p)).sum();
    let wm_mass: f64 = pixels.iter().filter(|&&p| in_wm(p)).sum();
    let gm_count = pixels.iter().filter(|&&p| in_gm(p)).count();
    let wm_count = pixels.iter().filter(|&&p| in_wm(p)).count();
    if gm_count == 0 || wm_count == 0 || wm_mass <= 0.0 {
        return None;
    }
    // sigma * mu_gm * |gm| / (mu_wm * |wm|) keeps total intensity fixed
    let wm_factor = (1.0 - spec.sigma * gm_mass / wm_mass).max(0.0);
    Some(
        pixels
            .iter()
            .map(|&p| {
                if in_gm(p) {
                    p * (1.0 + spec.sigma)
                } else if in_wm(p) {
                    p * wm_factor
                } else {
                    p
                }
            })
            .collect(),
    )
}

pub fn invent_contrast_mode(set: &ImageSet, spec: &InventionSpec) -> Result<Perturbed> {
    spec.validate()?;
    if spec.sigma == 0.0 && spec.smooth_sigma == 0.0 {
        return Ok(Perturbed::identity(set));
    }
    let mut skipped = 0usize;
    let images = set
        .images()
        .iter()
        .map(|img| {
            let Some(scaled) = scale_bands(img.pixels(), spec) else {
                skipped += 1;
                return Ok(img.clone());
            };
            let mut px = gaussian_blur(&scaled, img.width(), img.height(), spec.smooth_sigma);
            normalize_buffer(&mut px).map_err(|_| Error::image(img.id(), "non-finite intensity"))?;
            img.with_pixels(px)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Perturbed::new(ImageSet::new(set.name(), images)?);
    if skipped > 0 {
        out.flags.push(format!("empty-band-identity={skipped}"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ImageVolume;
    use alloc::vec;

    fn ramp(side: usize) -> ImageVolume {
        let n = side * side;
        ImageVolume::new("r", side, side, (0..n).map(|i| 0.1 + 0.8 * ((i * 37) % n) as f64 / n as f64).collect()).unwrap()
    }

    fn band_means(px: &[f64], reference: &[f64], spec: &InventionSpec) -> (f64, f64) {
        let mut sorted = reference.to_vec();
        sorted.sort_by(f64::total_cmp);
        let p = |q| percentile_sorted(&sorted, q);
        let (mut g, mut gn, mut w, mut wn) = (0.0, 0.0, 0.0, 0.0);
        for (&v, &r) in px.iter().zip(reference) {
            if r >= p(spec.gm_band.0) && r < p(spec.gm_band.1) {
                g += v;
                gn += 1.0;
            } else if r >= p(spec.wm_band.0) && r < p(spec.wm_band.1) {
                w += v;
                wn += 1.0;
            }
        }
        (g / gn, w / wn)
    }

    #[test]
    fn band_means_move_apart_and_mass_is_kept() {
        let img = ramp(32);
        let spec = InventionSpec::new(0.1);
        let scaled = scale_bands(img.pixels(), &spec).unwrap();
        let (g0, w0) = band_means(img.pixels(), img.pixels(), &spec);
        let (g1, w1) = band_means(&scaled, img.pixels(), &spec);
        assert!(g1 > g0 && w1 < w0);
        let before: f64 = img.pixels().iter().sum();
        let after: f64 = scaled.iter().sum();
        assert!((before - after).abs() < 1e-9);
    }

    #[test]
    fn null_level_is_identity() {
        let set = ImageSet::new("s", vec![ramp(16)]).unwrap();
        let mut spec = InventionSpec::new(0.0);
        spec.smooth_sigma = 0.0;
        assert_eq!(invent_contrast_mode(&set, &spec).unwrap().set, set);
    }

    #[test]
    fn output_is_normalised() {
        let set = ImageSet::new("s", vec![ramp(16)]).unwrap();
        let out = invent_contrast_mode(&set, &InventionSpec::new(0.07)).unwrap();
        let px = out.set.images()[0].pixels();
        let lo = px.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = px.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!((lo, hi), (0.0, 1.0));
    }

    #[test]
    fn constant_image_is_flagged() {
        let img = ImageVolume::new("c", 8, 8, vec![0.5; 64]).unwrap();
        let set = ImageSet::new("s", vec![img]).unwrap();
        let out = invent_contrast_mode(&set, &InventionSpec::new(0.1)).unwrap();
        assert_eq!(out.set, set);
        assert_eq!(out.flags, vec![alloc::string::String::from("empty-band-identity=1")]);
    }

    #[test]
    fn validation() {
        assert!(InventionSpec::new(1.0).validate().is_err());
        let mut s = InventionSpec::new(0.1);
        s.wm_band = (60.0, 90.0);
        assert!(s.validate().is_err());
    }
}
