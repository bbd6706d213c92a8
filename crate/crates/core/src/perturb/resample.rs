//! Composition changes: duplication and label-proportion resampling.
//!
//! Duplication slots are a prefix of one seeded permutation and each slot's
//! copy source depends only on the slot, so a higher rate replaces a superset
//! of the images a lower rate replaces, with the same copies.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::Rng;

use super::Perturbed;
use crate::stats::{apportion, check_fractions};
use crate::{Error, ImageSet, ImageVolume, Result, RngStream};

/// Which per-image label a proportion target refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum LabelKind {
    Class,
    Source,
}

impl LabelKind {
    fn of(self, img: &ImageVolume) -> Option<u32> {
        match self {
            LabelKind::Class => img.class_label(),
            LabelKind::Source => img.source_label(),
        }
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::param("rate", "must lie in [0, 1]"));
    }
    Ok(())
}

/// `floor(rate * n)`, tolerant of binary representation error (0.3 * 100).
pub fn replaced_count(rate: f64, n: usize) -> usize {
    (rate * n as f64 + 1e-9).floor() as usize
}

fn slots(n: usize, m: usize, rng: &RngStream) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng.child(0).rng());
    order.truncate(m);
    order
}

/// Replaces `floor(rate * n)` candidate images with exact copies of reference images.
pub fn duplicate_external(candidate: &ImageSet, reference: &ImageSet, rate: f64, rng: &RngStream) -> Result<Perturbed> {
    check_rate(rate)?;
    let m = replaced_count(rate, candidate.len());
    if m == 0 {
        return Ok(Perturbed::identity(candidate));
    }
    if reference.is_empty() {
        return Err(Error::Empty("duplication reference set"));
    }
    let mut images = candidate.images().to_vec();
    for slot in slots(candidate.len(), m, rng) {
        let src = rng.child(1).child(slot as u64).rng().random_range(0..reference.len());
        let copy = &reference.images()[src];
        images[slot] = copy.clone().with_id(format!("{}#x{slot}", copy.id()));
    }
    Ok(Perturbed::new(ImageSet::new(candidate.name(), images)?))
}

/// Replaces `floor(rate * n)` images with copies of images that were not replaced.
pub fn duplicate_internal(candidate: &ImageSet, rate: f64, rng: &RngStream) -> Result<Perturbed> {
    check_rate(rate)?;
    let n = candidate.len();
    let m = replaced_count(rate, n);
    if m == 0 {
        return Ok(Perturbed::identity(candidate));
    }
    if n < 2 || m >= n {
        return Err(Error::param("rate", "internal duplication needs at least one surviving image"));
    }
    let replaced = slots(n, m, rng);
    let mut is_replaced = alloc::vec![false; n];
    for &s in &replaced {
        is_replaced[s] = true;
    }
    let survivors: Vec<usize> = (0..n).filter(|&i| !is_replaced[i]).collect();
    let mut images = candidate.images().to_vec();
    for slot in replaced {
        let pick = rng.child(1).child(slot as u64).rng().random_range(0..survivors.len());
        let src = &candidate.images()[survivors[pick]];
        images[slot] = src.clone().with_id(format!("{}#d{slot}", src.id()));
    }
    Ok(Perturbed::new(ImageSet::new(candidate.name(), images)?))
}

/// Resamples the set so label counts follow `targets` at the same total size.
///
/// Counts are apportioned over labels in ascending order. A label with enough
/// images is subsampled without replacement; otherwise every image is kept
/// once and the shortfall is drawn with replacement.
pub fn resample_proportions(set: &ImageSet, by: LabelKind, targets: &BTreeMap<u32, f64>, rng: &RngStream) -> Result<Perturbed> {
    if targets.is_empty() {
        return Err(Error::param("targets", "no target labels"));
    }
    let fractions: Vec<f64> = targets.values().copied().collect();
    check_fractions("targets", &fractions)?;
    let mut pools: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, img) in set.images().iter().enumerate() {
        let label = by.of(img).ok_or_else(|| Error::image(img.id(), format!("missing {by:?} label")))?;
        pools.entry(label).or_default().push(i);
    }
    let counts = apportion(&fractions, set.len());
    let mut images = Vec::with_capacity(set.len());
    let mut with_replacement = 0usize;
    for ((&label, _), &count) in targets.iter().zip(&counts) {
        if count == 0 {
            continue;
        }
        let pool = pools
            .get(&label)
            .ok_or_else(|| Error::InvalidInput(format!("target label {label} absent from set `{}`", set.name())))?;
        let mut g = rng.child(label as u64).rng();
        if count <= pool.len() {
            let mut picks = pool.clone();
            picks.shuffle(&mut g);
            picks.truncate(count);
            images.extend(picks.into_iter().map(|i| set.images()[i].clone()));
        } else {
            with_replacement += 1;
            images.extend(pool.iter().map(|&i| set.images()[i].clone()));
            for k in 0..count - pool.len() {
                let src = &set.images()[pool[g.random_range(0..pool.len())]];
                images.push(src.clone().with_id(format!("{}#r{k}", src.id())));
            }
        }
    }
    let mut out = Perturbed::new(ImageSet::new(set.name(), images)?);
    if with_replacement > 0 {
        out.flags.push(format!("sampled-with-replacement={with_replacement}"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::String;
    use alloc::vec;

    fn set(n: usize, prefix: &str, label: impl Fn(usize) -> u32) -> ImageSet {
        let images = (0..n)
            .map(|i| {
                ImageVolume::new(format!("{prefix}{i}"), 2, 2, vec![i as f64 / n as f64; 4])
                    .unwrap()
                    .with_class_label(Some(label(i)))
                    .with_source_label(Some(1 + (i % 2) as u32))
            })
            .collect();
        ImageSet::new(prefix, images).unwrap()
    }

    fn counts(s: &ImageSet) -> BTreeMap<u32, usize> {
        let mut m = BTreeMap::new();
        for img in s.images() {
            *m.entry(img.class_label().unwrap()).or_insert(0) += 1;
        }
        m
    }

    #[test]
    fn external_rate_zero_and_exact_count() {
        let cand = set(100, "c", |_| 1);
        let refs = set(50, "r", |_| 2);
        let rng = RngStream::new(9);
        assert_eq!(duplicate_external(&cand, &refs, 0.0, &rng).unwrap().set, cand);
        let out = duplicate_external(&cand, &refs, 0.45, &rng).unwrap().set;
        assert_eq!(out.len(), 100);
        let copies = out
            .images()
            .iter()
            .filter(|img| refs.images().iter().any(|r| r.pixels() == img.pixels() && r.class_label() == img.class_label()))
            .count();
        assert_eq!(copies, 45);
        for rate in [0.05, 0.15, 0.30] {
            assert_eq!(replaced_count(rate, 100), (rate * 100.0).round() as usize);
        }
    }

    #[test]
    fn external_sweep_is_nested() {
        let cand = set(60, "c", |_| 1);
        let refs = set(20, "r", |_| 2);
        let rng = RngStream::new(2);
        let low = duplicate_external(&cand, &refs, 0.15, &rng).unwrap().set;
        let high = duplicate_external(&cand, &refs, 0.45, &rng).unwrap().set;
        for (a, b) in low.images().iter().zip(high.images()) {
            if a.id().contains("#x") {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn external_needs_reference() {
        let cand = set(10, "c", |_| 1);
        let empty = ImageSet::new("e", vec![]).unwrap();
        assert!(duplicate_external(&cand, &empty, 0.5, &RngStream::new(0)).is_err());
        assert!(duplicate_external(&cand, &empty, 0.0, &RngStream::new(0)).is_ok());
        assert!(duplicate_external(&cand, &cand, 1.5, &RngStream::new(0)).is_err());
    }

    #[test]
    fn internal_copies_only_survivors() {
        let cand = set(100, "c", |_| 1);
        let out = duplicate_internal(&cand, 0.30, &RngStream::new(4)).unwrap().set;
        let ids: Vec<&str> = out.ids().collect();
        let copies: Vec<&str> = ids.iter().filter(|i| i.contains("#d")).copied().collect();
        assert_eq!(copies.len(), 30);
        let with_twin = out
            .images()
            .iter()
            .filter(|a| out.images().iter().filter(|b| b.pixels() == a.pixels()).count() > 1)
            .count();
        assert!(with_twin >= 30);
        for c in copies {
            let source = c.split('#').next().unwrap();
            assert!(ids.contains(&source), "{source} was replaced but copied");
        }
        assert_eq!(duplicate_internal(&cand, 0.0, &RngStream::new(4)).unwrap().set, cand);
        assert!(duplicate_internal(&set(1, "x", |_| 1), 0.5, &RngStream::new(4)).is_ok());
        assert!(duplicate_internal(&set(1, "x", |_| 1), 1.0, &RngStream::new(4)).is_err());
    }

    #[test]
    fn class_removal_gives_even_split() {
        let s = set(100, "p", |i| if i < 40 { 1 } else if i < 80 { 2 } else { 3 });
        let t: BTreeMap<u32, f64> = [(1, 0.5), (2, 0.5), (3, 0.0)].into_iter().collect();
        let out = resample_proportions(&s, LabelKind::Class, &t, &RngStream::new(1)).unwrap();
        assert_eq!(counts(&out.set), [(1, 50), (2, 50)].into_iter().collect());
        assert_eq!(out.flags, vec![String::from("sampled-with-replacement=2")]);
    }

    #[test]
    fn five_to_one_imbalance_counts() {
        let s = set(120, "p", |i| if i < 60 { 1 } else { 2 + (i % 2) as u32 });
        let t: BTreeMap<u32, f64> = [(1, 5.0 / 6.0), (2, 1.0 / 6.0), (3, 0.0)].into_iter().collect();
        let out = resample_proportions(&s, LabelKind::Class, &t, &RngStream::new(1)).unwrap().set;
        assert_eq!(counts(&out), [(1, 100), (2, 20)].into_iter().collect());
        let unique: alloc::collections::BTreeSet<&str> = out.ids().collect();
        assert_eq!(unique.len(), 120);
    }

    #[test]
    fn matching_targets_keep_composition() {
        let s = set(10, "p", |i| 1 + (i % 2) as u32);
        let t: BTreeMap<u32, f64> = [(1, 0.5), (2, 0.5)].into_iter().collect();
        let out = resample_proportions(&s, LabelKind::Class, &t, &RngStream::new(3)).unwrap();
        let mut a: Vec<&str> = out.set.ids().collect();
        let mut b: Vec<&str> = s.ids().collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
        assert!(out.flags.is_empty());
    }

    #[test]
    fn source_targets_and_missing_label() {
        let s = set(100, "p", |_| 1);
        let t: BTreeMap<u32, f64> = [(1, 0.1), (2, 0.9)].into_iter().collect();
        let out = resample_proportions(&s, LabelKind::Source, &t, &RngStream::new(3)).unwrap().set;
        assert_eq!(out.images().iter().filter(|i| i.source_label() == Some(1)).count(), 10);
        let t: BTreeMap<u32, f64> = [(1, 0.5), (4, 0.5)].into_iter().collect();
        assert!(resample_proportions(&s, LabelKind::Class, &t, &RngStream::new(3)).is_err());
        let t: BTreeMap<u32, f64> = [(1, 1.0), (4, 0.0)].into_iter().collect();
        assert!(resample_proportions(&s, LabelKind::Class, &t, &RngStream::new(3)).is_ok());
    }
}
