//! Fitting `f_θ(z)` to the observed pixels of one corrupted raster.

use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::HourglassConfig;
use crate::engine::{Adam, AdamParams, Graph, Tensor};
use crate::error::{Error, Result};
use crate::eval::{evaluate, median, Region};
use crate::io::{fmt_f64, fmt_opt, CsvTable};
use crate::mask::{apply_mask, GapMask};
use crate::net::{make_input, perturb_input, Network};
use crate::raster::Raster;
use crate::seed::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// One independent optimization per band.
    PerBand,
    /// One optimization over all bands stacked as channels.
    Composite,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::PerBand => "per_band",
            Mode::Composite => "composite",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputMode {
    /// The network output everywhere, observed pixels included.
    #[default]
    Full,
    /// Observed pixels copied back from the input.
    Splice,
}

#[derive(Debug, Clone)]
pub struct RestorationJob {
    pub corrupted: Raster,
    pub mask: GapMask,
    pub config: HourglassConfig,
    pub mode: Mode,
    pub output_mode: OutputMode,
    pub seed: u64,
}

/// Masked loss per iteration, recorded before the optimizer step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossTrace {
    pub losses: Vec<f64>,
    /// (iterations completed, seconds elapsed)
    pub checkpoints: Vec<(usize, f64)>,
}

impl LossTrace {
    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&["iteration", "loss"]);
        for (i, l) in self.losses.iter().enumerate() {
            t.push(vec![(i + 1).to_string(), fmt_f64(*l)]);
        }
        t
    }
}

#[derive(Debug, Clone)]
pub struct Restoration {
    pub raster: Raster,
    /// One per optimization: a single trace in composite mode, one per band otherwise.
    pub traces: Vec<LossTrace>,
}

/// One optimization of a network against one (possibly multi-band) target.
///
/// The target is mirror-padded to a multiple of `2^depth`; padded cells
/// inherit the mask of the pixels they mirror.
#[derive(Debug, Clone)]
pub struct Trainer {
    net: Network,
    adam: Adam,
    z0: Tensor,
    target: Tensor,
    mask: Tensor,
    rng: ChaCha8Rng,
    sigma_p: f64,
    names: Vec<String>,
    extent: (usize, usize),
    trace: LossTrace,
}

impl Trainer {
    pub fn new(
        target: &Raster,
        mask: &GapMask,
        config: &HourglassConfig,
        seed: u64,
    ) -> Result<Self> {
        mask.check_extent(target)?;
        if mask.observed_count() == 0 {
            return Err(Error::DegenerateMask);
        }
        for b in 0..target.bands() {
            let outside = target
                .band(b)
                .iter()
                .zip(mask.observed())
                .find(|&(v, &o)| o && !(0.0..=1.0).contains(v));
            if let Some((v, _)) = outside {
                return Err(Error::Contract(format!(
                    "observed raster values must lie in [0, 1], found {v}"
                )));
            }
        }
        let config = HourglassConfig {
            out_channels: target.bands(),
            ..config.clone()
        };
        let net = Network::build(&config, seed)?;
        let d = config.spatial_divisor();
        let (h, w) = (target.height(), target.width());
        let (ph, pw) = (h.div_ceil(d) * d, w.div_ceil(d) * d);
        let padded = target.pad_reflect(ph, pw)?;
        let padded_mask = mask.pad_reflect(ph, pw)?;
        let z0 = make_input(
            config.input_kind,
            config.in_channels,
            ph,
            pw,
            config.input_amplitude,
            seed,
        )?;
        let adam = Adam::new(
            AdamParams {
                lr: config.lr,
                ..AdamParams::default()
            },
            net.params(),
        );
        Ok(Self {
            adam,
            z0,
            target: padded.to_tensor(),
            mask: padded_mask.to_tensor(target.bands()),
            rng: seed::rng(seed, Stream::Perturbation),
            sigma_p: config.sigma_p,
            names: target.names().to_vec(),
            extent: (h, w),
            trace: LossTrace::default(),
            net,
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn iteration(&self) -> usize {
        self.trace.losses.len()
    }

    pub fn trace(&self) -> &LossTrace {
        &self.trace
    }

    pub fn into_trace(self) -> LossTrace {
        self.trace
    }

    pub fn base_input(&self) -> &Tensor {
        &self.z0
    }

    /// Masked loss and `∂loss/∂θ` for input `z`, without updating θ.
    pub fn gradients(&self, z: &Tensor) -> Result<(f64, Vec<Tensor>)> {
        let mut g = Graph::new();
        let theta = self.net.bind(&mut g);
        let zv = g.constant(z.clone());
        let out = self.net.forward_graph(&mut g, zv, &theta)?;
        let loss = g.masked_mse(out, &self.target, &self.mask)?;
        let value = g.value(loss).item()?;
        g.backward(loss)?;
        let grads = theta
            .iter()
            .map(|&v| g.take_grad(v).expect("parameter gradient"))
            .collect();
        Ok((value, grads))
    }

    /// perturb → forward → masked loss → backward → Adam. Returns the loss.
    pub fn step(&mut self) -> Result<f64> {
        let z = perturb_input(&self.z0, self.sigma_p, &mut self.rng)?;
        let (loss, grads) = self.gradients(&z)?;
        let iteration = self.iteration() + 1;
        if !loss.is_finite() {
            return Err(Error::Numeric {
                iteration,
                value: loss,
            });
        }
        self.trace.losses.push(loss);
        self.adam.step(self.net.params_mut(), &grads)?;
        Ok(loss)
    }

    /// `f_θ(z0)` cropped to the original extent.
    pub fn reconstruct(&self) -> Result<Raster> {
        let out = self.net.forward(&self.z0)?;
        let full = Raster::from_tensor(&out, self.names.clone())?;
        full.crop(self.extent.0, self.extent.1)
    }

    /// Runs `iterations` steps, recording wall-clock every `every` iterations.
    pub fn run(&mut self, iterations: usize, every: usize) -> Result<()> {
        let start = Instant::now();
        for _ in 0..iterations {
            self.step()?;
            let done = self.iteration();
            if every > 0 && (done.is_multiple_of(every) || done == iterations) {
                self.trace
                    .checkpoints
                    .push((done, start.elapsed().as_secs_f64()));
            }
        }
        Ok(())
    }
}

const CHECKPOINT_EVERY: usize = 100;

fn fit(
    target: &Raster,
    mask: &GapMask,
    config: &HourglassConfig,
    seed: u64,
) -> Result<(Raster, LossTrace)> {
    let mut trainer = Trainer::new(target, mask, config, seed)?;
    trainer.run(config.num_iter, CHECKPOINT_EVERY)?;
    let raster = trainer.reconstruct()?;
    Ok((raster, trainer.into_trace()))
}

/// Minimizes the masked data term over θ for `config.num_iter` iterations and
/// returns `f_θ(z0)` evaluated at the unperturbed input.
pub fn restore(job: &RestorationJob) -> Result<Restoration> {
    let x0 = &job.corrupted;
    job.mask.check_extent(x0)?;
    if job.mask.observed_count() == 0 {
        return Err(Error::DegenerateMask);
    }
    let (raster, traces) = match job.mode {
        Mode::Composite => {
            let (r, t) = fit(x0, &job.mask, &job.config, seed::derive(job.seed, 0))?;
            (r, vec![t])
        }
        Mode::PerBand => {
            let parts: Vec<(Raster, LossTrace)> = (0..x0.bands())
                .into_par_iter()
                .map(|b| {
                    let band = x0.select_band(b)?;
                    fit(
                        &band,
                        &job.mask,
                        &job.config,
                        seed::derive(job.seed, b as u64 + 1),
                    )
                    .map_err(|e| e.context(format!("band {}", b + 1)))
                })
                .collect::<Result<_>>()?;
            let (rasters, traces): (Vec<_>, Vec<_>) = parts.into_iter().unzip();
            (Raster::stack(&rasters)?, traces)
        }
    };
    let raster = match job.output_mode {
        OutputMode::Full => raster,
        OutputMode::Splice => splice(&raster, x0, &job.mask)?,
    };
    Ok(Restoration { raster, traces })
}

/// Observed cells from `corrupted`, missing cells from `restored`.
pub fn splice(restored: &Raster, corrupted: &Raster, m: &GapMask) -> Result<Raster> {
    restored.check_same_shape(corrupted)?;
    m.check_extent(restored)?;
    let mut out = restored.clone();
    for b in 0..out.bands() {
        let src = corrupted.band(b);
        for ((v, &o), &s) in out.band_mut(b).iter_mut().zip(m.observed()).zip(src) {
            if o {
                *v = s;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeRow {
    pub mode: Mode,
    pub seed: u64,
    /// 1-based band number
    pub band: usize,
    pub rmse_hidden: Option<f64>,
    pub r2_hidden: Option<f64>,
    pub rmse_all: Option<f64>,
    pub r2_all: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ModeComparison {
    pub rows: Vec<ModeRow>,
    /// optimizations run per mode, summed over seeds: (per_band, composite)
    pub optimizations: (usize, usize),
}

impl ModeComparison {
    /// Median over seeds of the band-averaged hidden r².
    pub fn median_mean_r2(&self, mode: Mode) -> Option<f64> {
        self.seed_median(mode, None, |r| r.r2_hidden)
    }

    pub fn median_mean_rmse(&self, mode: Mode) -> Option<f64> {
        self.seed_median(mode, None, |r| r.rmse_hidden)
    }

    /// Median over seeds of `metric`, averaged over `band` (or all bands).
    pub fn seed_median(
        &self,
        mode: Mode,
        band: Option<usize>,
        metric: impl Fn(&ModeRow) -> Option<f64>,
    ) -> Option<f64> {
        let mut seeds: Vec<u64> = self.rows.iter().map(|r| r.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        let per_seed: Option<Vec<f64>> = seeds
            .iter()
            .map(|&s| {
                let vals: Option<Vec<f64>> = self
                    .rows
                    .iter()
                    .filter(|r| r.mode == mode && r.seed == s && band.is_none_or(|b| r.band == b))
                    .map(&metric)
                    .collect();
                vals.filter(|v| !v.is_empty())
                    .map(|v| v.iter().sum::<f64>() / v.len() as f64)
            })
            .collect();
        median(&per_seed?)
    }

    /// Per-mode medians over seeds, one row per band plus a band-mean row.
    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&[
            "mode",
            "band",
            "rmse_hidden",
            "r2_hidden",
            "rmse_all",
            "r2_all",
        ]);
        let bands = self.rows.iter().map(|r| r.band).max().unwrap_or(0);
        for mode in [Mode::PerBand, Mode::Composite] {
            for band in (1..=bands).map(Some).chain([None]) {
                t.push(vec![
                    mode.label().to_string(),
                    band.map_or("mean".to_string(), |b| b.to_string()),
                    fmt_opt(self.seed_median(mode, band, |r| r.rmse_hidden)),
                    fmt_opt(self.seed_median(mode, band, |r| r.r2_hidden)),
                    fmt_opt(self.seed_median(mode, band, |r| r.rmse_all)),
                    fmt_opt(self.seed_median(mode, band, |r| r.r2_all)),
                ]);
            }
        }
        t
    }
}

/// Runs per-band and composite restoration of `truth` under mask `m` for every
/// seed and scores both on hidden and on all pixels.
pub fn run_separate_vs_composite(
    truth: &Raster,
    m: &GapMask,
    config: &HourglassConfig,
    seeds: &[u64],
) -> Result<ModeComparison> {
    if truth.bands() < 2 {
        return Err(Error::Dimension(
            "separate-vs-composite needs at least two bands".into(),
        ));
    }
    let corrupted = apply_mask(truth, m, 0.0)?;
    let jobs: Vec<(u64, Mode)> = seeds
        .iter()
        .flat_map(|&s| [(s, Mode::PerBand), (s, Mode::Composite)])
        .collect();
    let results: Vec<(u64, Mode, Restoration)> = jobs
        .par_iter()
        .map(|&(seed, mode)| {
            let job = RestorationJob {
                corrupted: corrupted.clone(),
                mask: m.clone(),
                config: config.clone(),
                mode,
                output_mode: OutputMode::Full,
                seed,
            };
            restore(&job)
                .map(|r| (seed, mode, r))
                .map_err(|e| e.context(format!("{} restoration, seed {seed}", mode.label())))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut optimizations = (0, 0);
    for (seed, mode, res) in results {
        match mode {
            Mode::PerBand => optimizations.0 += res.traces.len(),
            Mode::Composite => optimizations.1 += res.traces.len(),
        }
        let report = evaluate(&res.raster, truth, m)?;
        for (i, b) in report.bands.iter().enumerate() {
            rows.push(ModeRow {
                mode,
                seed,
                band: i + 1,
                rmse_hidden: b.region(Region::Hidden).rmse,
                r2_hidden: b.region(Region::Hidden).r2,
                rmse_all: b.region(Region::All).rmse,
                r2_all: b.region(Region::All).r2,
            });
        }
    }
    Ok(ModeComparison {
        rows,
        optimizations,
    })
}
