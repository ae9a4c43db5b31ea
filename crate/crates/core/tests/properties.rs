use dipfill::engine::{Graph, Tensor};
use dipfill::eval::{r2, region_pixels, rmse, Region};
use dipfill::io::{decode_srf, encode_srf};
use dipfill::mask::{
    apply_mask, corruption_fraction, mask_for_fraction, slc_wedge_mask, GapMask, StripeGeometry,
    WidthProfile, FRACTION_TOLERANCE,
};
use dipfill::raster::{default_band_names, Raster};
use dipfill::restore::splice;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn raster_strategy() -> impl Strategy<Value = Raster> {
    (1usize..5, 1usize..9, 1usize..9, any::<u64>(), any::<bool>()).prop_map(
        |(b, h, w, seed, nodata)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // raw bit patterns exercise subnormals and extreme exponents too
            let data = (0..b * h * w)
                .map(|_| loop {
                    let v = f64::from_bits(rng.random::<u64>());
                    if v.is_finite() {
                        break v;
                    }
                })
                .collect();
            let mut r = Raster::new(default_band_names(b), h, w, data).unwrap();
            if nodata {
                r.nodata = Some(-1.0);
            }
            r
        },
    )
}

fn mask_strategy(h: usize, w: usize) -> impl Strategy<Value = GapMask> {
    proptest::collection::vec(any::<bool>(), h * w)
        .prop_map(move |obs| GapMask::from_observed(h, w, obs).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn srf_round_trip_is_bit_exact(r in raster_strategy()) {
        let bytes = encode_srf(&r).unwrap();
        let back = decode_srf(&bytes).unwrap();
        prop_assert_eq!(back.names(), r.names());
        prop_assert_eq!(back.nodata, r.nodata);
        let same = back.data().iter().zip(r.data()).all(|(a, b)| a.to_bits() == b.to_bits());
        prop_assert!(same);
        prop_assert_eq!(encode_srf(&back).unwrap(), bytes);
    }

    #[test]
    fn metrics_match_loop_oracles(seed in any::<u64>(), n in 2usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pred: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let truth: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let region: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.7)).collect();
        prop_assume!(region.len() >= 2);
        let mut sse = 0.0;
        let mut mean = 0.0;
        for &i in &region {
            sse += (pred[i] - truth[i]) * (pred[i] - truth[i]);
            mean += truth[i];
        }
        mean /= region.len() as f64;
        let mut sst = 0.0;
        for &i in &region {
            sst += (truth[i] - mean) * (truth[i] - mean);
        }
        let want_rmse = (sse / region.len() as f64).sqrt();
        prop_assert!((rmse(&pred, &truth, &region).unwrap() - want_rmse).abs() < 1e-12);
        prop_assert!((r2(&pred, &truth, &region).unwrap() - (1.0 - sse / sst)).abs() < 1e-12);
    }

    #[test]
    fn masked_mse_with_full_mask_is_plain_mse(seed in any::<u64>(), c in 1usize..3, h in 1usize..6, w in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = [c, h, w];
        let p = Tensor::from_fn(&shape, |_| rng.random());
        let t = Tensor::from_fn(&shape, |_| rng.random());
        let mut g = Graph::new();
        let pv = g.constant(p.clone());
        let loss = g.masked_mse(pv, &t, &Tensor::full(&shape, 1.0)).unwrap();
        let mut sum = 0.0;
        for i in 0..p.len() {
            sum += (p.data()[i] - t.data()[i]).powi(2);
        }
        prop_assert!((g.value(loss).item().unwrap() - sum / p.len() as f64).abs() < 1e-12);
    }

    #[test]
    fn avg_pool_inverts_upsample(seed in any::<u64>(), c in 1usize..3, h in 1usize..5, w in 1usize..5, f in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::from_fn(&[c, h, w], |_| rng.random());
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let up = g.upsample_nearest(xv, f).unwrap();
        let back = g.value(up).avg_pool(f).unwrap();
        prop_assert_eq!(back.shape(), x.shape());
        for (a, b) in back.data().iter().zip(x.data()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn apply_mask_is_idempotent(seed in any::<u64>(), m in mask_strategy(5, 7)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..2 * 35).map(|_| rng.random()).collect();
        let r = Raster::new(default_band_names(2), 5, 7, data).unwrap();
        let once = apply_mask(&r, &m, 0.0).unwrap();
        prop_assert_eq!(apply_mask(&once, &m, 0.0).unwrap(), once.clone());
        for b in 0..2 {
            for (i, &o) in m.observed().iter().enumerate() {
                prop_assert_eq!(once.band(b)[i], if o { r.band(b)[i] } else { 0.0 });
            }
        }
    }

    #[test]
    fn splice_is_exact_on_observed(seed in any::<u64>(), m in mask_strategy(6, 4)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut random = || Raster::new(default_band_names(3), 6, 4, (0..72).map(|_| rng.random()).collect()).unwrap();
        let (restored, truth) = (random(), random());
        let out = splice(&restored, &truth, &m).unwrap();
        let observed = region_pixels(&m, Region::Observed);
        for b in 0..3 {
            for &i in &observed {
                prop_assert_eq!(out.band(b)[i], truth.band(b)[i]);
            }
            for &i in &region_pixels(&m, Region::Hidden) {
                prop_assert_eq!(out.band(b)[i], restored.band(b)[i]);
            }
        }
    }

    #[test]
    fn pbm_round_trip(m in mask_strategy(9, 13)) {
        let back = GapMask::from_pbm(&m.to_pbm()).unwrap();
        prop_assert_eq!(back.observed(), m.observed());
    }

    #[test]
    fn wedge_phase_is_periodic(phase in -40i64..40, period in 4usize..20, slope in -1.0f64..1.0) {
        let a = slc_wedge_mask(12, 20, period, period - 2, phase, slope).unwrap();
        let b = slc_wedge_mask(12, 20, period, period - 2, phase + period as i64, slope).unwrap();
        prop_assert_eq!(a.observed(), b.observed());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn targeted_fraction_within_tolerance(
        size in prop::sample::select(vec![64usize, 96, 128]),
        target in 0.02f64..0.6,
        phase in 0i64..16,
        slope in -0.5f64..0.5,
    ) {
        let geometry = StripeGeometry { period: 16, slope, phase, profile: WidthProfile::Wedge };
        let m = mask_for_fraction(size, size, target, geometry).unwrap();
        let f = corruption_fraction(&m);
        prop_assert!((f - target).abs() <= FRACTION_TOLERANCE, "{} vs {}", f, target);
        prop_assert_eq!(m.missing_count() + m.observed_count(), size * size);
    }
}

#[test]
fn unreachable_fraction_reports_range() {
    let geometry = StripeGeometry {
        profile: WidthProfile::Constant,
        ..StripeGeometry::default()
    };
    let err = mask_for_fraction(32, 32, 0.99, geometry).unwrap_err();
    assert!(err.to_string().contains("achievable range"), "{err}");
}
