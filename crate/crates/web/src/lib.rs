//! WebAssembly bindings for the browser demo: mask preview, step-by-step
//! restoration of a synthetic scene, and live metrics.

use dipfill::config::HourglassConfig;
use dipfill::eval::{evaluate, nearest_fill, similarity_map, Region};
use dipfill::mask::{apply_mask, corruption_fraction, mask_for_fraction, GapMask, StripeGeometry};
use dipfill::raster::Raster;
use dipfill::restore::Trainer;
use dipfill::synth::gaussian_bumps;
use wasm_bindgen::prelude::*;

fn js(e: dipfill::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn geometry(period: usize, slope: f64, phase: i32) -> StripeGeometry {
    StripeGeometry {
        period,
        slope,
        phase: phase as i64,
        ..StripeGeometry::default()
    }
}

fn byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// RGBA from the first three bands (or grey for fewer), gaps tinted if a mask is given.
fn rgba(r: &Raster, mask: Option<&GapMask>) -> Vec<u8> {
    let chans: Vec<usize> = if r.bands() >= 3 {
        vec![0, 1, 2]
    } else {
        vec![0; 3]
    };
    let mut out = Vec::with_capacity(r.pixels() * 4);
    for i in 0..r.pixels() {
        if mask.is_some_and(|m| !m.observed()[i]) {
            out.extend_from_slice(&[40, 0, 0, 255]);
            continue;
        }
        for &c in &chans {
            out.push(byte(r.band(c)[i]));
        }
        out.push(255);
    }
    out
}

/// RGBA preview of a stripe mask (white observed, black missing).
#[wasm_bindgen]
pub fn mask_preview(
    height: usize,
    width: usize,
    fraction: f64,
    period: usize,
    slope: f64,
    phase: i32,
) -> Result<Vec<u8>, JsValue> {
    let m =
        mask_for_fraction(height, width, fraction, geometry(period, slope, phase)).map_err(js)?;
    Ok(m.observed()
        .iter()
        .flat_map(|&o| {
            if o {
                [255, 255, 255, 255]
            } else {
                [0, 0, 0, 255]
            }
        })
        .collect())
}

/// Realized corruption fraction of the mask [`mask_preview`] would draw.
#[wasm_bindgen]
pub fn mask_fraction(
    height: usize,
    width: usize,
    fraction: f64,
    period: usize,
    slope: f64,
    phase: i32,
) -> Result<f64, JsValue> {
    let m =
        mask_for_fraction(height, width, fraction, geometry(period, slope, phase)).map_err(js)?;
    Ok(corruption_fraction(&m))
}

/// A synthetic 4-band scene, its gap mask, and a network being fitted to it.
#[wasm_bindgen]
pub struct Demo {
    truth: Raster,
    corrupted: Raster,
    mask: GapMask,
    trainer: Trainer,
    last_loss: f64,
}

#[wasm_bindgen]
impl Demo {
    /// `size` must be a multiple of 32; `channels` sets the network width.
    #[wasm_bindgen(constructor)]
    pub fn new(
        size: usize,
        fraction: f64,
        period: usize,
        slope: f64,
        phase: i32,
        channels: usize,
        seed: u32,
    ) -> Result<Demo, JsValue> {
        let truth = gaussian_bumps(4, size, size, 12, seed as u64).map_err(js)?;
        let mask =
            mask_for_fraction(size, size, fraction, geometry(period, slope, phase)).map_err(js)?;
        let corrupted = apply_mask(&truth, &mask, 0.0).map_err(js)?;
        let mut config = HourglassConfig::uniform(5, channels);
        config.n_s = vec![4; 5];
        config.in_channels = channels;
        let trainer = Trainer::new(&corrupted, &mask, &config, seed as u64).map_err(js)?;
        Ok(Demo {
            truth,
            corrupted,
            mask,
            trainer,
            last_loss: f64::NAN,
        })
    }

    /// Runs `n` optimizer steps and returns the last masked loss.
    pub fn step(&mut self, n: usize) -> Result<f64, JsValue> {
        for _ in 0..n {
            self.last_loss = self.trainer.step().map_err(js)?;
        }
        Ok(self.last_loss)
    }

    pub fn iteration(&self) -> usize {
        self.trainer.iteration()
    }

    pub fn loss(&self) -> f64 {
        self.last_loss
    }

    pub fn size(&self) -> usize {
        self.truth.height()
    }

    pub fn corruption(&self) -> f64 {
        corruption_fraction(&self.mask)
    }

    pub fn truth_rgba(&self) -> Vec<u8> {
        rgba(&self.truth, None)
    }

    pub fn corrupted_rgba(&self) -> Vec<u8> {
        rgba(&self.corrupted, Some(&self.mask))
    }

    pub fn reconstruction_rgba(&self) -> Result<Vec<u8>, JsValue> {
        Ok(rgba(&self.trainer.reconstruct().map_err(js)?, None))
    }

    /// Band-mean similarity `1 − |pred − truth|` as a grey ramp.
    pub fn similarity_rgba(&self) -> Result<Vec<u8>, JsValue> {
        let pred = self.trainer.reconstruct().map_err(js)?;
        let sim = similarity_map(&pred, &self.truth).map_err(js)?;
        let mean = sim.band(sim.bands() - 1);
        // stretch [0.8, 1] so small errors stay visible
        Ok(mean
            .iter()
            .flat_map(|&v| {
                let g = byte((v - 0.8) / 0.2);
                [g, g, g, 255]
            })
            .collect())
    }

    /// Band-mean hidden-pixel metrics of the current reconstruction and of
    /// nearest-pixel filling: `[r2, rmse, fill_r2, fill_rmse]`.
    pub fn metrics(&self) -> Result<Vec<f64>, JsValue> {
        let pred = self.trainer.reconstruct().map_err(js)?;
        let net = evaluate(&pred, &self.truth, &self.mask).map_err(js)?;
        let filled = nearest_fill(&self.corrupted, &self.mask).map_err(js)?;
        let base = evaluate(&filled, &self.truth, &self.mask).map_err(js)?;
        let get = |v: Option<f64>| v.unwrap_or(f64::NAN);
        Ok(vec![
            get(net.mean_r2(Region::Hidden)),
            get(net.mean_rmse(Region::Hidden)),
            get(base.mean_r2(Region::Hidden)),
            get(base.mean_rmse(Region::Hidden)),
        ])
    }
}
