//! Central-difference verification of analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Outcome of a gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// max over checked coordinates of `|a − n| / max(1, |a|, |n|)`
    pub max_rel_error: f64,
    /// (input index, flat coordinate) where the maximum occurred
    pub worst: (usize, usize),
    pub checked: usize,
}

/// Checks every coordinate of every input. See [`grad_check_coords`].
pub fn grad_check<F>(inputs: &[Tensor], eps: f64, build: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let coords: Vec<(usize, usize)> = inputs
        .iter()
        .enumerate()
        .flat_map(|(i, t)| (0..t.len()).map(move |j| (i, j)))
        .collect();
    grad_check_coords(inputs, eps, &coords, build)
}

/// Compares backpropagated gradients of `build(inputs)` with central
/// differences `(f(x+eps) − f(x−eps)) / 2eps` at the listed coordinates.
///
/// Non-scalar outputs are reduced to a scalar by a fixed pseudo-random
/// linear projection, so every output coordinate contributes.
pub fn grad_check_coords<F>(
    inputs: &[Tensor],
    eps: f64,
    coords: &[(usize, usize)],
    build: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::Contract(format!(
            "finite-difference step {eps} outside [1e-7, 1e-3]"
        )));
    }
    if inputs.iter().any(|t| !t.is_finite()) {
        return Err(Error::Contract("grad_check inputs must be finite".into()));
    }

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let loss = scalarize(&mut g, &vars, &build)?;
    g.backward(loss)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .map(|&v| g.grad(v).cloned().expect("param leaf has a gradient"))
        .collect();

    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| g.constant(t.clone())).collect();
        let loss = scalarize(&mut g, &vars, &build)?;
        g.value(loss).item()
    };

    let mut work = inputs.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        checked: 0,
    };
    for &(i, j) in coords {
        if i >= work.len() || j >= work[i].len() {
            return Err(Error::Dimension(format!(
                "coordinate ({i}, {j}) outside the inputs"
            )));
        }
        let x0 = work[i].data()[j];
        work[i].data_mut()[j] = x0 + eps;
        let plus = eval(&work)?;
        work[i].data_mut()[j] = x0 - eps;
        let minus = eval(&work)?;
        work[i].data_mut()[j] = x0;

        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic[i].data()[j];
        let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
        if err > report.max_rel_error || report.checked == 0 {
            report.max_rel_error = err;
            report.worst = (i, j);
        }
        report.checked += 1;
    }
    Ok(report)
}

fn scalarize<F>(g: &mut Graph, vars: &[Var], build: &F) -> Result<Var>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let out = build(g, vars)?;
    let shape = g.value(out).shape().to_vec();
    if g.value(out).len() == 1 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e37_79b9);
    let proj = Tensor::from_fn(&shape, |_| rng.random_range(-1.0..1.0));
    let w = g.constant(proj);
    let weighted = g.mul(out, w)?;
    Ok(g.sum(weighted))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_a_wrong_gradient() {
        let x = Tensor::new(&[3], vec![0.3, -0.2, 1.5]).unwrap();
        let ok = grad_check(std::slice::from_ref(&x), 1e-5, |g, v| Ok(g.sum(v[0]))).unwrap();
        assert!(ok.max_rel_error < 1e-9);
        assert_eq!(ok.checked, 3);

        let bad = grad_check(&[x], 1e-5, |g, v| {
            let sq = g.mul(v[0], v[0])?;
            // cut the record: analytic gradient is zero, numeric is 2x
            let copy = g.value(sq).clone();
            let detached = g.constant(copy);
            Ok(g.sum(detached))
        })
        .unwrap();
        assert!(bad.max_rel_error > 0.1);
    }

    #[test]
    fn rejects_bad_step() {
        let x = Tensor::scalar(1.0);
        assert!(grad_check(&[x], 1e-2, |g, v| Ok(g.sum(v[0]))).is_err());
    }
}
