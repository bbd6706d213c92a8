//! Extractor, k-means and partition invariants.

use metriscope_core::featstore::{extract_global64, extract_spatial48, fit_kmeans, pseudo_class_probs};
use metriscope_core::phantom::{generate_phantom_set, PhantomSpec};
use metriscope_core::{partition_dataset, FeatureMatrix, ImageSet, ImageVolume, RngStream};
use proptest::prelude::*;
use std::collections::BTreeSet;

fn image_strategy(side: usize) -> impl Strategy<Value = Vec<f64>> {
    prop_oneof![
        prop::collection::vec(0.0f64..=1.0, side * side),
        (0.0f64..=1.0).prop_map(move |v| vec![v; side * side]),
        prop::collection::vec(prop::bool::ANY, side * side).prop_map(|b| b.into_iter().map(|x| if x { 1.0 } else { 0.0 }).collect()),
    ]
}

fn set_of(images: &[Vec<f64>], side: usize) -> ImageSet {
    let imgs = images
        .iter()
        .enumerate()
        .map(|(i, px)| ImageVolume::new(format!("i{i}"), side, side, px.clone()).unwrap())
        .collect();
    ImageSet::new("s", imgs).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn extractors_are_finite_and_permutation_equivariant(images in prop::collection::vec(image_strategy(16), 1..6), shift in 0usize..6) {
        let set = set_of(&images, 16);
        let mut order: Vec<usize> = (0..images.len()).collect();
        order.rotate_left(shift % images.len());
        let permuted = ImageSet::new("p", order.iter().map(|&i| set.images()[i].clone()).collect()).unwrap();
        for (a, b) in [
            (extract_global64(&set).unwrap(), extract_global64(&permuted).unwrap()),
            (extract_spatial48(&set, 4).unwrap(), extract_spatial48(&permuted, 4).unwrap()),
        ] {
            prop_assert!(a.values().iter().all(|v| v.is_finite()));
            for (j, &i) in order.iter().enumerate() {
                prop_assert_eq!(a.row(i), b.row(j));
                prop_assert_eq!(&a.ids()[i], &b.ids()[j]);
            }
        }
    }

    #[test]
    fn pseudo_probs_rows_sum_to_one(points in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 3), 4..30), tau in 0.01f64..10.0, seed in any::<u64>()) {
        let fm = FeatureMatrix::from_rows_anon(&points).unwrap();
        let model = fit_kmeans(&fm, 2, &RngStream::new(seed)).unwrap();
        let probs = pseudo_class_probs(&model, &fm, tau).unwrap();
        for i in 0..probs.n() {
            let s: f64 = probs.row(i).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
            prop_assert!(probs.row(i).iter().all(|p| *p >= 0.0));
        }
    }

    #[test]
    fn partition_is_a_disjoint_cover(n in 1usize..40, a in 0.0f64..1.0, seed in any::<u64>()) {
        let images: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / n as f64; 16 * 16]).collect();
        let set = set_of(&images, 16);
        let parts = partition_dataset(&set, &[a, 1.0 - a], &RngStream::new(seed)).unwrap();
        let mut seen = BTreeSet::new();
        for p in &parts {
            for id in p.ids() {
                prop_assert!(seen.insert(id.to_string()), "duplicate {}", id);
            }
        }
        let all: BTreeSet<String> = set.ids().map(String::from).collect();
        prop_assert_eq!(seen, all);
    }
}

#[test]
fn phantom_intensities_stay_in_range() {
    for seed in 0..4 {
        let set = generate_phantom_set(&PhantomSpec::new(12, 24, seed).unwrap()).unwrap();
        for img in set.images() {
            assert!(img.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
            assert!(img.mask().unwrap().iter().any(|&m| m));
        }
    }
}
