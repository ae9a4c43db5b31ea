//! The encoder–decoder network `f_θ` and its fixed input `z`.
//!
//! Per scale `i` the encoder applies a strided and a plain convolution, the
//! skip branch applies a `k_s[i]` convolution to the same scale input, and the
//! decoder normalizes `[skip, upsample(deeper)]`, then applies a `k_u[i]` and a
//! 1×1 convolution. Every convolution except the head is followed by
//! per-channel normalization and LeakyReLU. A 1×1 head with a sigmoid maps to
//! `out_channels` in `(0, 1)`.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{HourglassConfig, InputKind};
use crate::engine::{Graph, Padding, Tensor, Var};
use crate::error::{Error, Result};
use crate::seed::{self, Stream};

pub const NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy)]
struct Conv {
    weight: usize,
    bias: usize,
    stride: usize,
    pad: usize,
}

#[derive(Debug, Clone, Copy)]
struct Norm {
    gamma: usize,
    beta: usize,
}

#[derive(Debug, Clone)]
struct Scale {
    down: [(Conv, Norm); 2],
    skip: Option<(Conv, Norm)>,
    merge_norm: Norm,
    up: [(Conv, Norm); 2],
}

#[derive(Debug, Clone)]
pub struct Network {
    config: HourglassConfig,
    params: Vec<Tensor>,
    scales: Vec<Scale>,
    head: Conv,
}

struct Builder<'a, R: Rng> {
    params: Vec<Tensor>,
    rng: &'a mut R,
}

impl<R: Rng> Builder<'_, R> {
    /// Weights and bias uniform on `[-a, a]`, `a = 1/sqrt(fan_in)`.
    fn conv(&mut self, c_in: usize, c_out: usize, k: usize, stride: usize) -> Conv {
        let bound = 1.0 / ((c_in * k * k) as f64).sqrt();
        let rng = &mut *self.rng;
        let weight = Tensor::from_fn(&[c_out, c_in, k, k], |_| rng.random_range(-bound..=bound));
        let bias = Tensor::from_fn(&[c_out], |_| rng.random_range(-bound..=bound));
        self.params.push(weight);
        self.params.push(bias);
        Conv {
            weight: self.params.len() - 2,
            bias: self.params.len() - 1,
            stride,
            pad: (k - 1) / 2,
        }
    }

    fn norm(&mut self, channels: usize) -> Norm {
        self.params.push(Tensor::full(&[channels], 1.0));
        self.params.push(Tensor::zeros(&[channels]));
        Norm {
            gamma: self.params.len() - 2,
            beta: self.params.len() - 1,
        }
    }

    fn conv_norm(&mut self, c_in: usize, c_out: usize, k: usize, stride: usize) -> (Conv, Norm) {
        let conv = self.conv(c_in, c_out, k, stride);
        (conv, self.norm(c_out))
    }
}

impl Network {
    /// Deterministic in `(config, seed)`.
    pub fn build(config: &HourglassConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seed::rng(seed, Stream::Weights);
        let mut b = Builder {
            params: Vec::new(),
            rng: &mut rng,
        };
        let c = config;
        let mut scales = Vec::with_capacity(c.depth);
        let mut c_in = c.in_channels;
        for i in 0..c.depth {
            let down = [
                b.conv_norm(c_in, c.n_d[i], c.k_d[i], 2),
                b.conv_norm(c.n_d[i], c.n_d[i], c.k_d[i], 1),
            ];
            let skip = (c.n_s[i] > 0).then(|| b.conv_norm(c_in, c.n_s[i], c.k_s[i], 1));
            let deeper = if i + 1 == c.depth {
                c.n_d[i]
            } else {
                c.n_u[i + 1]
            };
            let merged = c.n_s[i] + deeper;
            let merge_norm = b.norm(merged);
            let up = [
                b.conv_norm(merged, c.n_u[i], c.k_u[i], 1),
                b.conv_norm(c.n_u[i], c.n_u[i], 1, 1),
            ];
            scales.push(Scale {
                down,
                skip,
                merge_norm,
                up,
            });
            c_in = c.n_d[i];
        }
        let head = b.conv(c.n_u[0], c.out_channels, 1, 1);
        let params = b.params;
        Ok(Self {
            config: config.clone(),
            params,
            scales,
            head,
        })
    }

    pub fn config(&self) -> &HourglassConfig {
        &self.config
    }

    /// θ, in construction order.
    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Adds θ to `g` as differentiable leaves.
    pub fn bind(&self, g: &mut Graph) -> Vec<Var> {
        self.params.iter().map(|p| g.param(p.clone())).collect()
    }

    /// Adds θ to `g` as constants.
    pub fn bind_constant(&self, g: &mut Graph) -> Vec<Var> {
        self.params.iter().map(|p| g.constant(p.clone())).collect()
    }

    pub fn check_input(&self, z: &Tensor) -> Result<()> {
        let (c, h, w) = z.chw()?;
        if c != self.config.in_channels {
            return Err(Error::Dimension(format!(
                "network expects {} input channels, got {c}",
                self.config.in_channels
            )));
        }
        let d = self.config.spatial_divisor();
        if h % d != 0 || w % d != 0 || h == 0 || w == 0 {
            return Err(Error::Dimension(format!(
                "input {h}×{w} must have both sides divisible by {d} (2^{})",
                self.config.depth
            )));
        }
        Ok(())
    }

    /// Records `f_θ(z)` on `g` using parameter handles from [`Network::bind`].
    pub fn forward_graph(&self, g: &mut Graph, z: Var, theta: &[Var]) -> Result<Var> {
        self.check_input(g.value(z))?;
        if theta.len() != self.params.len() {
            return Err(Error::Dimension(format!(
                "expected {} parameter handles, got {}",
                self.params.len(),
                theta.len()
            )));
        }
        let out = self.scale_forward(g, 0, z, theta)?;
        let head = apply_conv(g, self.head, out, theta)?;
        Ok(g.sigmoid(head))
    }

    fn scale_forward(&self, g: &mut Graph, i: usize, x: Var, theta: &[Var]) -> Result<Var> {
        let slope = self.config.leaky_slope;
        let s = &self.scales[i];
        let mut deeper = x;
        for &(conv, norm) in &s.down {
            deeper = conv_block(g, conv, norm, deeper, theta, slope)?;
        }
        if i + 1 < self.scales.len() {
            deeper = self.scale_forward(g, i + 1, deeper, theta)?;
        }
        let up = g.upsample_nearest(deeper, 2)?;
        let merged = match s.skip {
            Some((conv, norm)) => {
                let skip = conv_block(g, conv, norm, x, theta, slope)?;
                g.concat_channels(skip, up)?
            }
            None => up,
        };
        let mut y = apply_norm(g, s.merge_norm, merged, theta)?;
        for &(conv, norm) in &s.up {
            y = conv_block(g, conv, norm, y, theta, slope)?;
        }
        Ok(y)
    }

    /// Evaluates `f_θ(z)` without recording gradients.
    pub fn forward(&self, z: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let theta = self.bind_constant(&mut g);
        let zv = g.constant(z.clone());
        let out = self.forward_graph(&mut g, zv, &theta)?;
        Ok(g.value(out).clone())
    }
}

fn apply_conv(g: &mut Graph, c: Conv, x: Var, theta: &[Var]) -> Result<Var> {
    g.conv2d(
        x,
        theta[c.weight],
        theta[c.bias],
        c.stride,
        Padding::Reflect,
        c.pad,
    )
}

fn apply_norm(g: &mut Graph, n: Norm, x: Var, theta: &[Var]) -> Result<Var> {
    g.channel_norm(x, theta[n.gamma], theta[n.beta], NORM_EPS)
}

fn conv_block(g: &mut Graph, c: Conv, n: Norm, x: Var, theta: &[Var], slope: f64) -> Result<Var> {
    let y = apply_conv(g, c, x, theta)?;
    let y = apply_norm(g, n, y, theta)?;
    Ok(g.leaky_relu(y, slope))
}

/// The fixed network input `z`.
pub fn make_input(
    kind: InputKind,
    channels: usize,
    height: usize,
    width: usize,
    amplitude: f64,
    seed: u64,
) -> Result<Tensor> {
    match kind {
        InputKind::Noise => {
            if channels == 0 {
                return Err(Error::config(
                    "in_channels",
                    "noise input needs ≥ 1 channel",
                ));
            }
            let mut rng = seed::rng(seed, Stream::Input);
            Ok(Tensor::from_fn(&[channels, height, width], |_| {
                rng.random::<f64>() * amplitude
            }))
        }
        InputKind::Meshgrid => {
            if channels != 2 {
                return Err(Error::config(
                    "in_channels",
                    "meshgrid input has exactly 2 channels",
                ));
            }
            let norm = |i: usize, n: usize| {
                if n > 1 {
                    i as f64 / (n - 1) as f64
                } else {
                    0.0
                }
            };
            let plane = height * width;
            Ok(Tensor::from_fn(&[2, height, width], |idx| {
                let (ch, rem) = (idx / plane, idx % plane);
                let (row, col) = (rem / width, rem % width);
                if ch == 0 {
                    norm(col, width)
                } else {
                    norm(row, height)
                }
            }))
        }
    }
}

/// `z0 + N(0, sigma_p²)` elementwise; `z0` is left untouched.
pub fn perturb_input<R: Rng + ?Sized>(z0: &Tensor, sigma_p: f64, rng: &mut R) -> Result<Tensor> {
    if sigma_p == 0.0 {
        return Ok(z0.clone());
    }
    let normal = Normal::new(0.0, sigma_p).map_err(|e| Error::config("sigma_p", e.to_string()))?;
    let mut z = z0.clone();
    for v in z.data_mut() {
        *v += normal.sample(rng);
    }
    Ok(z)
}
