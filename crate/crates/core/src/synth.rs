//! Synthetic smooth test scenes.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::raster::{default_band_names, Raster};

/// Sum of `bumps` random isotropic Gaussians per band, rescaled to `[0.1, 0.9]`.
///
/// Bands share bump centres and widths with band-specific amplitudes, so they
/// are correlated like neighbouring spectral bands.
pub fn gaussian_bumps(
    bands: usize,
    height: usize,
    width: usize,
    bumps: usize,
    seed: u64,
) -> Result<Raster> {
    if bumps == 0 {
        return Err(Error::config("bumps", "must be ≥ 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = height.min(width) as f64;
    let shapes: Vec<(f64, f64, f64)> = (0..bumps)
        .map(|_| {
            let cy = rng.random::<f64>() * height as f64;
            let cx = rng.random::<f64>() * width as f64;
            let sigma = scale * rng.random_range(0.1..0.3);
            (cy, cx, sigma)
        })
        .collect();
    let mut data = Vec::with_capacity(bands * height * width);
    for _ in 0..bands {
        let amps: Vec<f64> = (0..bumps).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut band: Vec<f64> = (0..height * width)
            .map(|i| {
                let (y, x) = ((i / width) as f64, (i % width) as f64);
                shapes
                    .iter()
                    .zip(&amps)
                    .map(|(&(cy, cx, s), a)| {
                        let d2 = (y - cy).powi(2) + (x - cx).powi(2);
                        a * (-d2 / (2.0 * s * s)).exp()
                    })
                    .sum()
            })
            .collect();
        let lo = band.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = band.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        for v in &mut band {
            *v = 0.1 + 0.8 * (*v - lo) / span;
        }
        data.extend(band);
    }
    Raster::new(default_band_names(bands), height, width, data)
}
