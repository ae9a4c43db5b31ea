use dipfill::config::HourglassConfig;
use dipfill::eval::{evaluate, Region};
use dipfill::mask::{slc_wedge_mask, GapMask};
use dipfill::net::{make_input, Network};
use dipfill::raster::{default_band_names, Raster};
use dipfill::restore::{
    restore, run_separate_vs_composite, Mode, OutputMode, RestorationJob, Trainer,
};
use dipfill::synth::gaussian_bumps;

/// Parameter count from the layer list, written out independently of the builder.
fn count_params(c: &HourglassConfig) -> usize {
    let conv = |cin: usize, cout: usize, k: usize| cout * cin * k * k + cout;
    let norm = |ch: usize| 2 * ch;
    let mut total = 0;
    for i in 0..c.depth {
        let cin = if i == 0 { c.in_channels } else { c.n_d[i - 1] };
        total += conv(cin, c.n_d[i], c.k_d[i]) + norm(c.n_d[i]);
        total += conv(c.n_d[i], c.n_d[i], c.k_d[i]) + norm(c.n_d[i]);
        if c.n_s[i] > 0 {
            total += conv(cin, c.n_s[i], c.k_s[i]) + norm(c.n_s[i]);
        }
        let deeper = if i + 1 == c.depth {
            c.n_d[i]
        } else {
            c.n_u[i + 1]
        };
        total += norm(c.n_s[i] + deeper);
        total += conv(c.n_s[i] + deeper, c.n_u[i], c.k_u[i]) + norm(c.n_u[i]);
        total += conv(c.n_u[i], c.n_u[i], 1) + norm(c.n_u[i]);
    }
    total + conv(c.n_u[0], c.out_channels, 1)
}

#[test]
fn parameter_count_matches_layer_list() {
    let reference = HourglassConfig::reference();
    assert_eq!(
        Network::build(&reference, 0).unwrap().num_params(),
        2_966_916
    );
    assert_eq!(count_params(&reference), 2_966_916);
    let mut odd = HourglassConfig::uniform(3, 5);
    odd.n_s = vec![0, 2, 3];
    odd.n_u = vec![4, 6, 7];
    odd.k_d = vec![3, 5, 3];
    for c in [
        odd,
        HourglassConfig::uniform(1, 2),
        HourglassConfig::uniform(4, 3),
    ] {
        assert_eq!(
            Network::build(&c, 1).unwrap().num_params(),
            count_params(&c)
        );
    }
}

#[test]
fn network_is_deterministic_in_seed() {
    let c = HourglassConfig::uniform(3, 4);
    let z = make_input(c.input_kind, c.in_channels, 16, 16, 0.1, 5).unwrap();
    let a = Network::build(&c, 9).unwrap();
    let b = Network::build(&c, 9).unwrap();
    assert_eq!(a.params(), b.params());
    assert_eq!(a.forward(&z).unwrap(), b.forward(&z).unwrap());
    assert_ne!(a.params(), Network::build(&c, 10).unwrap().params());
}

#[test]
fn missing_pixels_do_not_influence_gradients() {
    let c = HourglassConfig::uniform(2, 3);
    let m = slc_wedge_mask(8, 8, 4, 3, 0, 0.0).unwrap();
    let truth = gaussian_bumps(2, 8, 8, 3, 1).unwrap();
    let mut other = truth.clone();
    for b in 0..2 {
        for (v, &o) in other.band_mut(b).iter_mut().zip(m.observed()) {
            if !o {
                *v = 1.0 - *v;
            }
        }
    }
    let ta = Trainer::new(&truth, &m, &c, 4).unwrap();
    let tb = Trainer::new(&other, &m, &c, 4).unwrap();
    let (la, ga) = ta.gradients(ta.base_input()).unwrap();
    let (lb, gb) = tb.gradients(tb.base_input()).unwrap();
    assert_eq!(la, lb);
    assert_eq!(ga, gb);
}

fn toy_config(iters: usize) -> HourglassConfig {
    let mut c = HourglassConfig::uniform(2, 4);
    c.in_channels = 4;
    c.num_iter = iters;
    c
}

#[test]
fn constant_raster_is_recovered() {
    let truth = Raster::filled(1, 16, 16, 0.5).unwrap();
    let m = slc_wedge_mask(16, 16, 8, 6, 0, 0.25).unwrap();
    let mut trainer = Trainer::new(&truth, &m, &toy_config(300), 3).unwrap();
    trainer.run(300, 100).unwrap();
    let last = *trainer.trace().losses.last().unwrap();
    assert!(last < 1e-4, "final loss {last}");
    let pred = trainer.reconstruct().unwrap();
    let hidden = dipfill::eval::region_pixels(&m, Region::Hidden);
    let rmse = dipfill::eval::rmse(pred.band(0), truth.band(0), &hidden).unwrap();
    assert!(rmse < 0.02, "hidden rmse {rmse}");
}

#[test]
fn all_observed_mask_has_no_hidden_metrics() {
    let truth = gaussian_bumps(2, 8, 8, 3, 2).unwrap();
    let m = GapMask::all_observed(8, 8);
    let job = RestorationJob {
        corrupted: truth.clone(),
        mask: m.clone(),
        config: toy_config(20),
        mode: Mode::Composite,
        output_mode: OutputMode::Full,
        seed: 1,
    };
    let out = restore(&job).unwrap();
    assert_eq!(out.traces[0].losses.len(), 20);
    let report = evaluate(&out.raster, &truth, &m).unwrap();
    for b in &report.bands {
        assert_eq!(b.hidden.count, 0);
        assert_eq!(b.hidden.rmse, None);
        assert!(b.all.rmse.is_some());
    }
}

#[test]
fn restoration_is_reproducible() {
    let truth = gaussian_bumps(2, 12, 12, 3, 3).unwrap();
    let m = slc_wedge_mask(12, 12, 6, 4, 1, 0.25).unwrap();
    let job = |seed| RestorationJob {
        corrupted: truth.clone(),
        mask: m.clone(),
        config: toy_config(15),
        mode: Mode::PerBand,
        output_mode: OutputMode::Splice,
        seed,
    };
    let a = restore(&job(7)).unwrap();
    let b = restore(&job(7)).unwrap();
    assert_eq!(a.raster, b.raster);
    assert_eq!(a.traces.len(), 2);
    for (x, y) in a.traces.iter().zip(&b.traces) {
        assert_eq!(x.losses, y.losses);
    }
    assert_ne!(a.raster, restore(&job(8)).unwrap().raster);
}

#[test]
fn separate_vs_composite_counts_optimizations() {
    let truth = gaussian_bumps(3, 8, 8, 3, 4).unwrap();
    let m = slc_wedge_mask(8, 8, 4, 3, 0, 0.0).unwrap();
    let cmp = run_separate_vs_composite(&truth, &m, &toy_config(5), &[1, 2]).unwrap();
    assert_eq!(cmp.optimizations, (6, 2));
    assert_eq!(cmp.rows.len(), 2 * 2 * 3);
    let csv = cmp.to_csv().to_csv_string();
    assert_eq!(csv.lines().count(), 1 + 2 * 4);
    let single = Raster::new(default_band_names(1), 8, 8, truth.band(0).to_vec()).unwrap();
    assert!(run_separate_vs_composite(&single, &m, &toy_config(5), &[1]).is_err());
}
