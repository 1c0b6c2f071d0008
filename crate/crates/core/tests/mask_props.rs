mod common;

use nucleitk_core::io::{load_labelmap, save_labelmap};
use nucleitk_core::mask::{
    connected_components, count_objects, instance_ids, labelmap_to_binary, mask_difference,
    mask_union, BinaryMask, Connectivity, LabelMap,
};
use proptest::prelude::*;

fn mask_strategy(max: usize) -> impl Strategy<Value = BinaryMask> {
    (1..=max, 1..=max, 0.05f64..0.7).prop_flat_map(|(w, h, p)| {
        proptest::collection::vec(proptest::bool::weighted(p), w * h)
            .prop_map(move |data| BinaryMask::new(w, h, data).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn component_count_matches_flood_fill(m in mask_strategy(64)) {
        for (c, eight) in [(Connectivity::Four, false), (Connectivity::Eight, true)] {
            let lm = connected_components(&m, c).unwrap();
            prop_assert_eq!(count_objects(&lm), common::flood_fill_count(&m, eight));
        }
    }

    #[test]
    fn ids_are_contiguous(m in mask_strategy(40)) {
        let lm = connected_components(&m, Connectivity::Eight).unwrap();
        let k = count_objects(&lm) as u16;
        prop_assert_eq!(instance_ids(&lm), (1..=k).collect::<Vec<_>>());
        prop_assert_eq!(labelmap_to_binary(&lm), m);
    }

    #[test]
    fn sizes_are_translation_invariant(m in mask_strategy(24), dx in 0usize..6, dy in 0usize..6) {
        let (w, h) = m.dims();
        let shifted = BinaryMask::from_fn(w + dx, h + dy, |x, y| {
            x >= dx && y >= dy && m.get(x - dx, y - dy)
        }).unwrap();
        for c in [Connectivity::Four, Connectivity::Eight] {
            let sizes = |mask: &BinaryMask| {
                let lm = connected_components(mask, c).unwrap();
                let mut counts = vec![0usize; count_objects(&lm)];
                for &id in lm.as_slice() {
                    if id > 0 { counts[id as usize - 1] += 1; }
                }
                counts.sort_unstable();
                counts
            };
            prop_assert_eq!(sizes(&m), sizes(&shifted));
            prop_assert_eq!(sizes(&m), common::component_sizes(&m, c == Connectivity::Eight));
        }
    }

    #[test]
    fn difference_clears_subtrahend(a in mask_strategy(16)) {
        let (w, h) = a.dims();
        let b = BinaryMask::from_fn(w, h, |x, y| (x * 7 + y * 3) % 5 == 0).unwrap();
        let d = mask_difference(&mask_union(&a, &b).unwrap(), &b).unwrap();
        prop_assert!(d.as_slice().iter().zip(b.as_slice()).all(|(&x, &y)| !(x && y)));
    }

    #[test]
    fn relabel_preserves_support(data in proptest::collection::vec(0u16..5, 12 * 9)) {
        let lm = LabelMap::new(12, 9, data).unwrap();
        let again = connected_components(&labelmap_to_binary(&lm), Connectivity::Eight).unwrap();
        prop_assert_eq!(labelmap_to_binary(&again), labelmap_to_binary(&lm));
    }

    #[test]
    fn labelmap_io_round_trip(w in 1usize..30, h in 1usize..30, seed in any::<u64>()) {
        let lm = LabelMap::from_fn(w, h, |x, y| ((x as u64 * 2654435761 + y as u64 * 40503 + seed) % 65536) as u16).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.png");
        save_labelmap(&lm, &p).unwrap();
        prop_assert_eq!(load_labelmap(&p).unwrap(), lm);
    }
}

#[test]
fn three_hundred_generated_components_round_trip() {
    // 300 isolated dots on a 60x60 grid (every other pixel of every other row)
    let mut count = 0;
    let mask = BinaryMask::from_fn(60, 60, |x, y| {
        let on = x % 2 == 0 && y % 2 == 0 && count < 300;
        if on {
            count += 1;
        }
        on
    })
    .unwrap();
    let lm = connected_components(&mask, Connectivity::Eight).unwrap();
    assert_eq!(count_objects(&lm), 300);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("many.png");
    save_labelmap(&lm, &p).unwrap();
    let back = load_labelmap(&p).unwrap();
    assert_eq!(count_objects(&back), 300);
    assert_eq!(back, lm);
}
