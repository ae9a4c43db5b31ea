//! Gradient checks on every differentiable operator plus a few closed-form
//! operator oracles, reported as a pass/fail table.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::HourglassConfig;
use crate::engine::{grad_check, Adam, AdamParams, GradCheckReport, Graph, Padding, Tensor, Var};
use crate::error::Result;
use crate::eval::r2;
use crate::net::{make_input, Network, NORM_EPS};

/// Finite-difference step used by every check.
pub const GRAD_EPS: f64 = 1e-5;
/// Bound on the relative error for single operators.
pub const OP_TOLERANCE: f64 = 1e-6;
/// Bound on the relative error for the end-to-end network loss.
pub const NETWORK_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub name: String,
    /// relative error for gradient checks, absolute deviation for oracles
    pub error: f64,
    pub tolerance: f64,
    pub checked: usize,
}

impl CheckRow {
    pub fn passed(&self) -> bool {
        self.error < self.tolerance
    }
}

#[derive(Debug, Clone)]
pub struct SelftestReport {
    pub rows: Vec<CheckRow>,
    pub seconds: f64,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(CheckRow::passed)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{:<28}{:>8}{:>14}{:>12}  result\n",
            "check", "coords", "error", "tolerance"
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{:<28}{:>8}{:>14.3e}{:>12.0e}  {}\n",
                r.name,
                r.checked,
                r.error,
                r.tolerance,
                if r.passed() { "pass" } else { "FAIL" }
            ));
        }
        s.push_str(&format!(
            "{} of {} checks passed in {:.2}s\n",
            self.rows.iter().filter(|r| r.passed()).count(),
            self.rows.len(),
            self.seconds
        ));
        s
    }
}

/// Uniform values in `[lo, hi)` kept at least `gap` away from zero.
fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64, gap: f64) -> Tensor {
    Tensor::from_fn(shape, |_| loop {
        let v = rng.random_range(lo..hi);
        if v.abs() >= gap {
            break v;
        }
    })
}

fn grad_row(name: &str, tolerance: f64, report: Result<GradCheckReport>) -> Result<CheckRow> {
    let r = report?;
    Ok(CheckRow {
        name: name.into(),
        error: r.max_rel_error,
        tolerance,
        checked: r.checked,
    })
}

fn oracle_row(name: &str, got: f64, want: f64, tolerance: f64) -> CheckRow {
    CheckRow {
        name: name.into(),
        error: (got - want).abs(),
        tolerance,
        checked: 1,
    }
}

pub fn run_selftest() -> Result<SelftestReport> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e1f);
    let mut rows = Vec::new();
    let op = |name: &str, r| grad_row(name, OP_TOLERANCE, r);

    let x = random(&mut rng, &[2, 5, 6], -1.0, 1.0, 0.0);
    let w = random(&mut rng, &[3, 2, 3, 3], -0.5, 0.5, 0.0);
    let b = random(&mut rng, &[3], -0.5, 0.5, 0.0);
    let conv_inputs = [x.clone(), w, b];
    rows.push(op(
        "conv2d reflect 3x3",
        grad_check(&conv_inputs, GRAD_EPS, |g, v| {
            g.conv2d(v[0], v[1], v[2], 1, Padding::Reflect, 1)
        }),
    )?);
    rows.push(op(
        "conv2d zero stride 2",
        grad_check(&conv_inputs, GRAD_EPS, |g, v| {
            g.conv2d(v[0], v[1], v[2], 2, Padding::Zero, 1)
        }),
    )?);
    // keep inputs off the kink so central differences stay on one branch
    let xr = random(&mut rng, &[2, 4, 4], -1.0, 1.0, 1e-3);
    rows.push(op(
        "leaky_relu",
        grad_check(std::slice::from_ref(&xr), GRAD_EPS, |g, v| {
            Ok(g.leaky_relu(v[0], 0.2))
        }),
    )?);
    rows.push(op(
        "upsample_nearest",
        grad_check(std::slice::from_ref(&xr), GRAD_EPS, |g, v| {
            g.upsample_nearest(v[0], 2)
        }),
    )?);
    let gamma = random(&mut rng, &[2], 0.5, 1.5, 0.0);
    let beta = random(&mut rng, &[2], -0.5, 0.5, 0.0);
    rows.push(op(
        "channel_norm",
        grad_check(&[xr.clone(), gamma, beta], GRAD_EPS, |g, v| {
            g.channel_norm(v[0], v[1], v[2], NORM_EPS)
        }),
    )?);
    let other = random(&mut rng, &[3, 4, 4], -1.0, 1.0, 0.0);
    rows.push(op(
        "concat_channels",
        grad_check(&[xr.clone(), other], GRAD_EPS, |g, v| {
            g.concat_channels(v[0], v[1])
        }),
    )?);
    rows.push(op(
        "sigmoid",
        grad_check(std::slice::from_ref(&x), GRAD_EPS, |g, v| {
            Ok(g.sigmoid(v[0]))
        }),
    )?);
    let target = random(&mut rng, &[2, 4, 4], 0.0, 1.0, 0.0);
    let mask = Tensor::from_fn(&[2, 4, 4], |i| if i % 3 == 0 { 0.0 } else { 1.0 });
    rows.push(op(
        "masked_mse",
        grad_check(std::slice::from_ref(&xr), GRAD_EPS, |g, v| {
            g.masked_mse(v[0], &target, &mask)
        }),
    )?);
    let y = random(&mut rng, &[2, 4, 4], -1.0, 1.0, 0.0);
    rows.push(op(
        "add, mul, sum",
        grad_check(&[xr.clone(), y], GRAD_EPS, |g, v| {
            let s = g.add(v[0], v[1])?;
            let p = g.mul(s, v[0])?;
            Ok(g.sum(p))
        }),
    )?);
    rows.push(network_check()?);

    rows.push(conv_oracle()?);
    let mut params = [Tensor::scalar(1.0)];
    let mut adam = Adam::new(AdamParams::default(), &params);
    adam.step(&mut params, &[Tensor::scalar(1.0)])?;
    rows.push(oracle_row(
        "adam first step",
        params[0].item()? - 1.0,
        -0.00999999990,
        1e-12,
    ));
    let r = r2(&[0.0, 1.0, 2.0], &[0.0, 1.0, 4.0], &[0, 1, 2])?;
    rows.push(oracle_row("r2 hand case", r, 42.0 / 78.0, 1e-12));

    Ok(SelftestReport {
        rows,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Masked loss of a depth-2 hourglass, differentiated with respect to every
/// parameter.
fn network_check() -> Result<CheckRow> {
    let mut config = HourglassConfig::uniform(2, 3);
    config.in_channels = 2;
    config.out_channels = 2;
    let net = Network::build(&config, 11)?;
    let z = make_input(config.input_kind, 2, 8, 8, 0.1, 12)?;
    let target = Tensor::from_fn(&[2, 8, 8], |i| ((i * 37) % 11) as f64 / 11.0);
    let mask = Tensor::from_fn(&[2, 8, 8], |i| if (i / 3) % 4 == 0 { 0.0 } else { 1.0 });
    let build = |g: &mut Graph, theta: &[Var]| {
        let zv = g.constant(z.clone());
        let out = net.forward_graph(g, zv, theta)?;
        g.masked_mse(out, &target, &mask)
    };
    grad_row(
        "hourglass depth-2 loss",
        NETWORK_TOLERANCE,
        grad_check(net.params(), GRAD_EPS, build),
    )
}

fn conv_oracle() -> Result<CheckRow> {
    let mut g = Graph::new();
    let x = g.constant(Tensor::new(&[1, 3, 3], (1..=9).map(f64::from).collect())?);
    let w = g.constant(Tensor::full(&[1, 1, 2, 2], 1.0));
    let b = g.constant(Tensor::zeros(&[1]));
    let y = g.conv2d(x, w, b, 1, Padding::Zero, 0)?;
    let want = [12.0, 16.0, 24.0, 28.0];
    let err = g
        .value(y)
        .data()
        .iter()
        .zip(want)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(oracle_row("conv2d window sums", err, 0.0, 1e-12))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        let report = run_selftest().unwrap();
        assert!(report.passed(), "{}", report.to_text());
    }
}
