mod common;

use nucleitk_core::binarize::Polarity;
use nucleitk_core::inpaint::InpaintConfig;
use nucleitk_core::mask::{count_objects, GrayImage};
use nucleitk_core::pipeline::{
    compute_aux_mask, extract_patches, filter_patches, normalize_image, nuclei_inpaint,
    AugmentationSpec, PatchSampler, PatchSource,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn aux_mask_avoids_annotation_and_fill_stays_inside(seed in any::<u64>(), w in 2usize..40, h in 2usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = common::random_image(&mut rng, w, h);
        let m = common::random_mask(&mut rng, w, h, 0.3);
        for pol in [Polarity::BrightForeground, Polarity::DarkForeground] {
            let aux = match compute_aux_mask(&img, &m, pol) {
                Ok(a) => a,
                Err(_) => continue, // constant image
            };
            prop_assert!(aux.as_slice().iter().zip(m.as_slice()).all(|(&a, &b)| !(a && b)));
            if aux.all() {
                continue;
            }
            let (out, aux2) = nuclei_inpaint(&img, &m, &InpaintConfig::default(), pol).unwrap();
            prop_assert_eq!(&aux, &aux2);
            for ((&o, &i), &a) in out.as_slice().iter().zip(img.as_slice()).zip(aux.as_slice()) {
                if !a {
                    prop_assert_eq!(o, i);
                }
            }
        }
    }

    #[test]
    fn normalize_spans_full_range(data in proptest::collection::vec(-1e6f64..1e6, 2..200)) {
        let n = data.len();
        let out = normalize_image(n, 1, &data).unwrap();
        let (lo, hi) = data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        if hi > lo {
            prop_assert_eq!(*out.as_slice().iter().min().unwrap(), 0);
            prop_assert_eq!(*out.as_slice().iter().max().unwrap(), 255);
        } else {
            prop_assert!(out.as_slice().iter().all(|&v| v == 0));
        }
    }

    #[test]
    fn crops_stay_inside_scaled_source(seed in any::<u64>(), w in 24usize..60, h in 24usize..60, size in 4usize..16) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = common::random_image(&mut rng, w, h);
        let labels = common::random_labelmap(&mut rng, w, h, 8);
        let aug = AugmentationSpec { seed, ..AugmentationSpec::default() };
        for p in extract_patches(&img, &labels, size, 20, &aug).unwrap() {
            let s = p.provenance.augmentation.scale;
            let (sw, sh) = ((w as f64 * s).floor() as usize, (h as f64 * s).floor() as usize);
            let (ox, oy) = p.provenance.offset;
            prop_assert!(ox + size <= sw && oy + size <= sh);
            prop_assert!((0.75..=1.25).contains(&s));
            prop_assert_eq!(p.image.dims(), (size, size));
            prop_assert_eq!(p.object_count, count_objects(&p.labels));
        }
    }

    #[test]
    fn unaugmented_crop_is_a_window(seed in any::<u64>(), size in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = common::random_image(&mut rng, 20, 17);
        let labels = common::random_labelmap(&mut rng, 20, 17, 4);
        for p in extract_patches(&img, &labels, size, 10, &AugmentationSpec::none(seed)).unwrap() {
            let (ox, oy) = p.provenance.offset;
            let window = GrayImage::from_fn(size, size, |x, y| img.get(ox + x, oy + y)).unwrap();
            prop_assert_eq!(&p.image, &window);
            // labels keep their partition, under compacted ids
            for y in 0..size {
                for x in 0..size {
                    prop_assert_eq!(p.labels.get(x, y) == 0, labels.get(ox + x, oy + y) == 0);
                }
            }
        }
    }

    #[test]
    fn filter_is_an_ordered_subsequence(seed in any::<u64>(), min_objects in 0usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = common::random_image(&mut rng, 40, 40);
        let labels = common::random_labelmap(&mut rng, 40, 40, 10);
        let all: Vec<_> = extract_patches(&img, &labels, 16, 30, &AugmentationSpec { seed, ..Default::default() })
            .unwrap()
            .collect();
        let kept: Vec<_> = filter_patches(all.clone(), min_objects).collect();
        prop_assert!(kept.windows(2).all(|w| w[0].index < w[1].index));
        prop_assert!(kept.iter().all(|p| p.object_count >= min_objects && all[p.index] == *p));
        prop_assert_eq!(kept.len(), all.iter().filter(|p| p.object_count >= min_objects).count());
    }
}

#[test]
fn patches_are_random_access() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let src = PatchSource::new(
        "a",
        common::random_image(&mut rng, 50, 50),
        common::random_labelmap(&mut rng, 50, 50, 6),
    )
    .unwrap();
    let sampler = PatchSampler::new(
        vec![src],
        16,
        40,
        AugmentationSpec {
            seed: 77,
            ..Default::default()
        },
    )
    .unwrap();
    let forward: Vec<_> = sampler.iter().collect();
    for i in (0..40).rev() {
        assert_eq!(sampler.patch(i), forward[i]);
    }
}
