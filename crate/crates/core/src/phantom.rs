//! Deterministic synthetic brain-slice phantoms.
//!
//! Each phantom is a textured elliptical "head" on a dark background. The
//! anatomy class is encoded by the number of bright curvilinear arcs
//! (class 1: two, class 2: one, class 3: none), an optional elliptical lesion
//! carries an exact binary mask, and the acquisition source changes the
//! intensity response (gamma) and noise floor.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::rng::StreamRng;
use crate::stats::{apportion, check_fractions};
use crate::{Error, ImageSet, ImageVolume, Result, RngStream};

/// Smallest edge length at which arcs and lesions stay representable.
pub const MIN_SIZE: usize = 16;

/// Intensity presets for the two simulated scanners, indexed by `source_label - 1`.
const SOURCE_GAMMA: [f64; 2] = [1.0, 1.15];
const SOURCE_NOISE_FLOOR: [f64; 2] = [0.0, 0.01];

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PhantomSpec {
    pub count: usize,
    pub size: usize,
    pub class_mix: [f64; 3],
    pub source_mix: [f64; 2],
    pub lesion: bool,
    pub seed: u64,
}

impl PhantomSpec {
    /// Spec with the default 0.4/0.4/0.2 class mix, balanced sources and lesions on.
    pub fn new(count: usize, size: usize, seed: u64) -> Result<Self> {
        let spec = Self {
            count,
            size,
            class_mix: [0.4, 0.4, 0.2],
            source_mix: [0.5, 0.5],
            lesion: true,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_class_mix(mut self, mix: [f64; 3]) -> Result<Self> {
        self.class_mix = mix;
        self.validate()?;
        Ok(self)
    }

    pub fn with_source_mix(mut self, mix: [f64; 2]) -> Result<Self> {
        self.source_mix = mix;
        self.validate()?;
        Ok(self)
    }

    pub fn with_lesion(mut self, lesion: bool) -> Self {
        self.lesion = lesion;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::param("count", "must be at least 1"));
        }
        if self.size < MIN_SIZE {
            return Err(Error::param("size", format!("must be at least {MIN_SIZE} pixels")));
        }
        check_fractions("class_mix", &self.class_mix)?;
        check_fractions("source_mix", &self.source_mix)?;
        Ok(())
    }
}

fn shuffled_labels(mix: &[f64], count: usize, rng: &mut StreamRng) -> Vec<u32> {
    let sizes = apportion(mix, count);
    let mut labels: Vec<u32> = sizes
        .iter()
        .enumerate()
        .flat_map(|(k, &n)| core::iter::repeat(k as u32 + 1).take(n))
        .collect();
    labels.shuffle(rng);
    labels
}

struct Arc {
    cx: f64,
    cy: f64,
    radius: f64,
    start: f64,
    span: f64,
}

impl Arc {
    fn distance(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.cx;
        let dy = y - self.cy;
        let mut ang = dy.atan2(dx) - self.start;
        ang = num_traits::Euclid::rem_euclid(&ang, &(2.0 * PI));
        if ang <= self.span {
            ((dx * dx + dy * dy).sqrt() - self.radius).abs()
        } else {
            let end = |a: f64| {
                let ex = self.cx + self.radius * a.cos();
                let ey = self.cy + self.radius * a.sin();
                ((x - ex).powi(2) + (y - ey).powi(2)).sqrt()
            };
            end(self.start).min(end(self.start + self.span))
        }
    }
}

fn render(size: usize, class: u32, source: u32, lesion: bool, rng: &mut StreamRng) -> (Vec<f64>, Option<Vec<bool>>) {
    let s = size as f64;
    let mid = 0.5 * (s - 1.0);
    let hx = mid + rng.random_range(-0.03..0.03) * s;
    let hy = mid + rng.random_range(-0.03..0.03) * s;
    let ha = 0.42 * s * rng.random_range(0.95..1.05);
    let hb = 0.36 * s * rng.random_range(0.95..1.05);

    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            let freq = rng.random_range(1.0..3.0) * 2.0 * PI / s;
            let dir = rng.random_range(0.0..PI);
            let phase = rng.random_range(0.0..2.0 * PI);
            (freq * dir.cos(), freq * dir.sin(), phase, rng.random_range(0.02..0.05))
        })
        .collect();

    let arc_count = match class {
        1 => 2,
        2 => 1,
        _ => 0,
    };
    let first_side = if rng.random_bool(0.5) { -1.0 } else { 1.0 };
    let arcs: Vec<Arc> = (0..arc_count)
        .map(|k| {
            let side = if k == 0 { first_side } else { -first_side };
            let radius = 0.15 * s * rng.random_range(0.9..1.1);
            // arcs open towards the midline
            let facing = if side < 0.0 { 0.0 } else { PI };
            let span = rng.random_range(0.55..0.75) * PI;
            Arc {
                cx: hx + side * 0.2 * s,
                cy: hy + rng.random_range(-0.05..0.05) * s,
                radius,
                start: facing - 0.5 * span + rng.random_range(-0.1..0.1),
                span,
            }
        })
        .collect();
    let arc_width = (s / 64.0).max(0.8);
    let arc_gain = rng.random_range(0.3..0.38);

    let lesion_geom = lesion.then(|| {
        let off_r = rng.random_range(0.0..0.18) * s;
        let off_a = rng.random_range(0.0..2.0 * PI);
        let a = (s * rng.random_range(0.08..0.13)).max(2.0);
        let b = (s * rng.random_range(0.06..0.11)).max(2.0);
        let rot = rng.random_range(0.0..PI);
        (hx + off_r * off_a.cos(), hy + off_r * off_a.sin(), a, b, rot)
    });

    let mut pixels = vec![0.0; size * size];
    let mut mask = lesion.then(|| vec![false; size * size]);
    for r in 0..size {
        for c in 0..size {
            let x = c as f64;
            let y = r as f64;
            let e = ((x - hx) / ha).powi(2) + ((y - hy) / hb).powi(2);
            // soft skull edge over roughly a pixel and a half
            let inside = (1.0 - (e.sqrt() - 1.0) * ha / 1.5).clamp(0.0, 1.0);
            let texture: f64 = waves.iter().map(|&(kx, ky, ph, amp)| amp * (kx * x + ky * y + ph).cos()).sum();
            let mut v = 0.03 + inside * (0.29 + texture);
            for arc in &arcs {
                let d = arc.distance(x, y);
                v += inside * arc_gain * (-(d * d) / (2.0 * arc_width * arc_width)).exp();
            }
            if let Some((lx, ly, a, b, rot)) = lesion_geom {
                let (sn, cs) = rot.sin_cos();
                let u = (x - lx) * cs + (y - ly) * sn;
                let w = -(x - lx) * sn + (y - ly) * cs;
                let rho2 = (u / a).powi(2) + (w / b).powi(2);
                if rho2 <= 1.0 {
                    v = 0.68 + 0.22 * (1.0 - rho2);
                    if let Some(m) = mask.as_mut() {
                        m[r * size + c] = true;
                    }
                }
            }
            pixels[r * size + c] = v.clamp(0.0, 1.0);
        }
    }

    let preset = (source as usize).saturating_sub(1).min(1);
    let gamma = SOURCE_GAMMA[preset];
    let floor = SOURCE_NOISE_FLOOR[preset];
    for p in pixels.iter_mut() {
        let mut v = p.powf(gamma);
        if floor > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            v += floor * z;
        }
        *p = v.clamp(0.0, 1.0);
    }
    (pixels, mask)
}

/// Generates `spec.count` phantoms. Class and source labels match the mixes
/// exactly under the floor-plus-remainder rounding rule.
pub fn generate_phantom_set(spec: &PhantomSpec) -> Result<ImageSet> {
    spec.validate()?;
    let root = RngStream::new(spec.seed);
    let classes = shuffled_labels(&spec.class_mix, spec.count, &mut root.child(0).rng());
    let sources = shuffled_labels(&spec.source_mix, spec.count, &mut root.child(1).rng());
    let per_image = root.child(2);

    let mut images = Vec::with_capacity(spec.count);
    for i in 0..spec.count {
        let mut rng = per_image.child(i as u64).rng();
        let (pixels, mask) = render(spec.size, classes[i], sources[i], spec.lesion, &mut rng);
        let img = ImageVolume::new(format!("p{i:05}"), spec.size, spec.size, pixels)?
            .with_mask(mask)?
            .with_class_label(Some(classes[i]))
            .with_source_label(Some(sources[i]));
        images.push(img);
    }
    ImageSet::new(format!("phantom-s{}", spec.seed), images)
}

/// Area and centre of mass of one lesion mask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LesionStats {
    pub area: usize,
    /// `(row, col)`
    pub centroid: (f64, f64),
}

pub(crate) fn mask_stats(id: &str, width: usize, mask: Option<&[bool]>) -> Result<LesionStats> {
    let mask = mask.ok_or_else(|| Error::image(id, "missing mask"))?;
    let (mut area, mut sr, mut sc) = (0usize, 0.0, 0.0);
    for (i, _) in mask.iter().enumerate().filter(|(_, m)| **m) {
        area += 1;
        sr += (i / width) as f64;
        sc += (i % width) as f64;
    }
    if area == 0 {
        return Err(Error::image(id, "empty mask"));
    }
    Ok(LesionStats {
        area,
        centroid: (sr / area as f64, sc / area as f64),
    })
}

pub fn lesion_mask_stats(set: &ImageSet) -> Result<Vec<LesionStats>> {
    set.images()
        .iter()
        .map(|img| mask_stats(img.id(), img.width(), img.mask()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_validation() {
        assert!(PhantomSpec::new(0, 32, 1).is_err());
        assert!(PhantomSpec::new(5, 8, 1).is_err());
        assert!(PhantomSpec::new(5, 32, 1).unwrap().with_class_mix([0.5, 0.5, 0.5]).is_err());
    }

    #[test]
    fn class_histogram_follows_mix() {
        let set = generate_phantom_set(&PhantomSpec::new(100, 16, 7).unwrap()).unwrap();
        let mut hist = [0; 3];
        let mut src = [0; 2];
        for img in set.images() {
            hist[img.class_label().unwrap() as usize - 1] += 1;
            src[img.source_label().unwrap() as usize - 1] += 1;
        }
        assert_eq!(hist, [40, 40, 20]);
        assert_eq!(src, [50, 50]);
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = PhantomSpec::new(6, 32, 3).unwrap();
        assert_eq!(generate_phantom_set(&spec).unwrap(), generate_phantom_set(&spec).unwrap());
        let other = PhantomSpec { seed: 4, ..spec };
        assert_ne!(generate_phantom_set(&spec).unwrap(), generate_phantom_set(&other).unwrap());
    }

    #[test]
    fn lesions_are_hyperintense_and_nonempty() {
        let set = generate_phantom_set(&PhantomSpec::new(40, 32, 11).unwrap()).unwrap();
        for img in set.images() {
            let mask = img.mask().unwrap();
            let bg: Vec<f64> = img.pixels().iter().zip(mask).filter(|(_, m)| !**m).map(|(p, _)| *p).collect();
            let bg_mean = bg.iter().sum::<f64>() / bg.len() as f64;
            let inside: Vec<f64> = img.pixels().iter().zip(mask).filter(|(_, m)| **m).map(|(p, _)| *p).collect();
            assert!(!inside.is_empty());
            assert!(inside.iter().all(|&p| p >= bg_mean), "{}", img.id());
            assert!(img.pixels().iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }

    #[test]
    fn no_mask_without_lesion() {
        let spec = PhantomSpec::new(3, 16, 1).unwrap().with_lesion(false);
        let set = generate_phantom_set(&spec).unwrap();
        assert!(set.images().iter().all(|i| i.mask().is_none()));
    }

    #[test]
    fn arcs_brighten_by_class() {
        // more arcs, more bright mass inside the head
        let spec = PhantomSpec::new(60, 48, 5).unwrap().with_lesion(false);
        let set = generate_phantom_set(&spec).unwrap();
        let mut sums = [0.0; 3];
        let mut counts = [0.0; 3];
        for img in set.images().iter().filter(|i| i.source_label() == Some(1)) {
            let k = img.class_label().unwrap() as usize - 1;
            sums[k] += img.pixels().iter().filter(|&&p| p > 0.45).count() as f64;
            counts[k] += 1.0;
        }
        let avg: Vec<f64> = (0..3).map(|k| sums[k] / counts[k]).collect();
        assert!(avg[0] > avg[1] && avg[1] > avg[2], "{avg:?}");
    }

    #[test]
    fn mask_stats_examples() {
        let mut m = vec![false; 9];
        m[4] = true;
        let s = mask_stats("a", 3, Some(&m)).unwrap();
        assert_eq!(s.area, 1);
        assert_eq!(s.centroid, (1.0, 1.0));

        let full = vec![true; 16];
        let s = mask_stats("b", 4, Some(&full)).unwrap();
        assert_eq!(s.area, 16);
        assert_eq!(s.centroid, (1.5, 1.5));

        assert!(mask_stats("c", 3, Some(&[false; 9])).is_err());
        assert!(mask_stats("d", 3, None).is_err());
    }
}
