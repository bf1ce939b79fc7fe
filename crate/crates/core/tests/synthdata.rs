use proptest::prelude::*;
use urcdm_core::cascade::{center_context_crop, expected_conditioning, map_center, ContextAlignment};
use urcdm_core::rng::NoiseStream;
use urcdm_core::synthdata::{
    area_resample, background_fraction, crop_or_pad, dihedral, extract_training_set, gen_pyramid, ExtractParams,
    GeneratorParams, Image8, Magnification, ModelSlot, Pyramid,
};
use urcdm_core::tiler::Rect;
use urcdm_core::{Error, Tensor};

fn small() -> GeneratorParams {
    GeneratorParams { sizes: [32, 60, 116], ..Default::default() }
}

fn band_fixture() -> (f64, f64) {
    let text = include_str!("fixtures/background_band.txt");
    let get = |key: &str| -> f64 {
        text.lines()
            .find_map(|l| l.strip_prefix(key))
            .and_then(|v| v.trim().parse().ok())
            .expect("fixture key")
    };
    (get("min="), get("max="))
}

#[test]
fn pyramids_are_deterministic_per_seed() {
    let a = gen_pyramid(3, &small()).unwrap();
    let b = gen_pyramid(3, &small()).unwrap();
    let c = gen_pyramid(4, &small()).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.levels[2], c.levels[2]);
    assert_ne!(a.id, c.id);
    assert_eq!(a.sizes(), [32, 60, 116]);
}

#[test]
fn background_fraction_stays_in_recorded_band() {
    let (lo, hi) = band_fixture();
    assert!(lo >= 0.2 && hi <= 0.6);
    let p = GeneratorParams { sizes: [8, 50, 344], ..Default::default() };
    let fractions: Vec<f64> = (0..100).map(|s| background_fraction(&gen_pyramid(s, &p).unwrap())).collect();
    let min = fractions.iter().copied().fold(1.0, f64::min);
    let max = fractions.iter().copied().fold(0.0, f64::max);
    assert!((min - lo).abs() < 0.005 && (max - hi).abs() < 0.005, "band {min}..{max}");
    let mean = fractions.iter().sum::<f64>() / 100.0;
    assert!(mean >= 0.3, "mean {mean}");
}

#[test]
fn coarse_levels_are_area_averages_of_the_fine_level() {
    let p = gen_pyramid(9, &small()).unwrap();
    let fine = p.levels[2].to_tensor();
    for k in 0..2 {
        let s = p.levels[k].width();
        let oracle = area_resample(&fine, s, s).unwrap();
        let diff = oracle.max_abs_diff(&p.levels[k].to_tensor()).unwrap();
        assert!(diff <= 1.0 / 255.0, "level {k}: {diff}");
    }
}

#[test]
fn crops_and_contexts_line_up_with_the_pyramid() {
    let pyramids: Vec<Pyramid> = (0..2).map(|s| gen_pyramid(s, &small()).unwrap()).collect();
    let params = ExtractParams::default();
    let set = extract_training_set(&pyramids, Magnification::Mid, &params).unwrap();
    assert!(!set.is_empty());
    let c = set.crops()[set.len() / 2];
    let rect = Rect { y: c.y, x: c.x, h: 32, w: 32 };
    assert_eq!(set.crop(c), pyramids[c.pyramid].levels[1].crop_tensor(rect));
    let low = pyramids[c.pyramid].levels[0].to_tensor();
    let oracle = center_context_crop(&low, map_center(rect, 60, 32), 32, ContextAlignment::Snap).unwrap();
    assert_eq!(set.context(c).unwrap(), oracle);
    for crop in set.crops() {
        let t = set.crop(*crop);
        assert!(!params.white_rule.is_white(&t));
    }
}

#[test]
fn low_stage_uses_whole_images_without_context() {
    let pyramids: Vec<Pyramid> = (0..3).map(|s| gen_pyramid(s, &small()).unwrap()).collect();
    let set = extract_training_set(&pyramids, Magnification::Low, &ExtractParams::default()).unwrap();
    assert_eq!(set.len(), 3);
    assert!(set.context(set.crops()[0]).is_err());
    let batch = set.batch(ModelSlot::Base, 4, &mut NoiseStream::new(0)).unwrap();
    assert_eq!(batch.x0.shape(), [4, 3, 8, 8]);
    assert!(batch.cond.is_none());
}

#[test]
fn examples_carry_consistent_conditioning() {
    let pyramids = vec![gen_pyramid(5, &small()).unwrap()];
    let set = extract_training_set(&pyramids, Magnification::High, &ExtractParams::default()).unwrap();
    let mut rng = NoiseStream::new(1);
    for _ in 0..20 {
        let ex = set.example(rng.below(set.len()), ModelSlot::Sr2, &mut rng).unwrap();
        assert_eq!(ex.target.shape(), [3, 32, 32]);
        assert_eq!(ex.cond.images.len(), 2);
        assert_eq!(ex.cond.images[0].shape(), [3, 16, 16]);
        let mask = ex.cond.mask.as_ref().unwrap();
        let known = ex.cond.known.as_ref().unwrap();
        let ones = mask.data().iter().filter(|&&m| m == 1.0).count();
        assert!([0, 4 * 32, 2 * 4 * 32 - 16].contains(&ones), "{ones}");
        for (k, v) in known.data().iter().enumerate() {
            let m = mask.data()[k % 1024];
            assert_eq!(*v, m * ex.target.data()[k]);
        }
    }
    let ex = set.example(0, ModelSlot::Base, &mut rng).unwrap();
    let ones = ex.cond.mask.unwrap().data().iter().filter(|&&m| m == 1.0).count();
    assert!([0, 8, 15].contains(&ones));
    let batch = set.batch(ModelSlot::Sr1, 3, &mut rng).unwrap();
    let cc = expected_conditioning(1, true).channels(3);
    assert_eq!(batch.cond.unwrap().shape(), [3, cc, 16, 16]);
    assert!(batch.x0.data().iter().all(|v| (-1.0..=1.0).contains(v)));
}

#[test]
fn all_white_corpus_has_no_training_crops() {
    let white = |s: usize| Image8::new(s, s, 3, vec![255; s * s * 3]).unwrap();
    let p = Pyramid { id: "blank".into(), seed: 0, levels: vec![white(32), white(60), white(116)] };
    let pyramids = [p];
    for stage in [Magnification::Low, Magnification::Mid, Magnification::High] {
        let e = extract_training_set(&pyramids, stage, &ExtractParams::default()).unwrap_err();
        assert!(matches!(e, Error::Dataset(_)));
    }
}

#[test]
fn crop_or_pad_centres_and_pads_white() {
    let t = Tensor::from_fn(&[1, 5, 5], |k| k as f64 / 100.0);
    let p = crop_or_pad(&t, 8).unwrap();
    assert_eq!(p.shape(), [1, 8, 8]);
    // One row/column before, two after.
    assert_eq!(p.data()[0], 1.0);
    assert_eq!(p.data()[8 + 1], t.data()[0]);
    assert_eq!(p.data()[6 * 8 + 6], 1.0);
    assert_eq!(crop_or_pad(&p, 5).unwrap(), t);
    let c = crop_or_pad(&t, 3).unwrap();
    assert_eq!(c.data()[0], t.data()[6]);
    assert_eq!(crop_or_pad(&t, 5).unwrap(), t);
}

proptest! {
    #[test]
    fn dihedral_ops_form_the_square_group(seed in 0u64..1000) {
        let t = NoiseStream::new(seed).normal_tensor(&[2, 5, 5]);
        let images: Vec<Tensor> = (0..8).map(|op| dihedral(&t, op).unwrap()).collect();
        for (i, a) in images.iter().enumerate() {
            for b in &images[i + 1..] {
                prop_assert_ne!(a, b);
            }
            let mut x: Vec<u64> = a.data().iter().map(|v| v.to_bits()).collect();
            let mut y: Vec<u64> = t.data().iter().map(|v| v.to_bits()).collect();
            x.sort_unstable();
            y.sort_unstable();
            prop_assert_eq!(x, y);
        }
        // Every op has an inverse among the eight.
        for a in &images {
            prop_assert!((0..8).any(|op| dihedral(a, op).unwrap() == t));
        }
    }

    #[test]
    fn area_resample_preserves_the_mean(seed in 0u64..1000, out in 1usize..12) {
        let t = NoiseStream::new(seed).normal_tensor(&[1, 9, 9]);
        let r = area_resample(&t, out, out).unwrap();
        prop_assert!((r.mean() - t.mean()).abs() < 1e-9);
    }
}
