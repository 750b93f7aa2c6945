use proptest::prelude::*;
use pyramid_core::metrics::{hausdorff95, rand_error, Connectivity, SegmentationPair};
use pyramid_core::oracle::{brute_hausdorff95, brute_rand_error};
use pyramid_core::LabelVolume;

fn labels(max: usize, classes: u8) -> impl Strategy<Value = (LabelVolume, LabelVolume)> {
    (1..=max, 1..=max, 1..=max).prop_flat_map(move |(w, h, d)| {
        let n = w * h * d;
        (
            prop::collection::vec(0..classes, n),
            prop::collection::vec(0..classes, n),
        )
            .prop_map(move |(a, b)| {
                (
                    LabelVolume::new([w, h, d], classes as usize, a).unwrap(),
                    LabelVolume::new([w, h, d], classes as usize, b).unwrap(),
                )
            })
    })
}

fn same(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => x.to_bits() == y.to_bits(),
        (None, None) => true,
        _ => false,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hausdorff_matches_all_pairs(
        (p, r) in labels(8, 3),
        class in 0u8..3,
        sx in 0.5f64..2.0, sz in 0.5f64..3.0,
    ) {
        let spacing = [sx, 1.0, sz];
        let pair = SegmentationPair::new(&p, &r, spacing).unwrap();
        prop_assert!(same(hausdorff95(&pair, class), brute_hausdorff95(&p, &r, class, spacing)));
    }

    #[test]
    fn rand_error_matches_pair_enumeration((p, r) in labels(5, 3), fg in 0u8..3) {
        let pair = SegmentationPair::new(&p, &r, [1.0; 3]).unwrap();
        prop_assert_eq!(rand_error(&pair, fg, Connectivity::Face3d), brute_rand_error(&p, &r, fg, false));
        prop_assert_eq!(rand_error(&pair, fg, Connectivity::Slice2d), brute_rand_error(&p, &r, fg, true));
    }
}
