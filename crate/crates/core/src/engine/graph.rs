//! Reverse-mode differentiation over an append-only operation record.
//!
//! Nodes are pushed in evaluation order, so the node list is already a
//! topological order and `backward` is a single reverse sweep.

use super::conv::{col2im, gemm, im2col, ConvGeom, Padding};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Var,
        geom: ConvGeom,
        /// Lowered input; `None` for pointwise convolutions, which read the input directly.
        cols: Option<Vec<f64>>,
    },
    LeakyRelu {
        input: Var,
        slope: f64,
    },
    UpsampleNearest {
        input: Var,
        factor: usize,
    },
    ChannelNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Concat {
        a: Var,
        b: Var,
    },
    Sigmoid {
        input: Var,
    },
    MaskedMse {
        pred: Var,
        /// `2·mask·(pred − target) / count`, the full gradient w.r.t. `pred`.
        dpred: Vec<f64>,
    },
    Sum {
        input: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// One forward evaluation and its differentiation record.
///
/// Gradients of leaves accumulate across `backward` calls until
/// [`Graph::zero_grad`] is called.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf excluded from differentiation.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// 2-D cross-correlation of a `C_in×H×W` input with `C_out×C_in×k×k` weights.
    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Var,
        stride: usize,
        padding: Padding,
        pad: usize,
    ) -> Result<Var> {
        let x = self.value(input);
        let wt = self.value(weight);
        let geom = ConvGeom::new(x.chw()?, wt.shape(), stride, pad, padding)?;
        let b = self.value(bias);
        if b.len() != geom.c_out {
            return Err(Error::Dimension(format!(
                "conv bias has {} entries, expected {}",
                b.len(),
                geom.c_out
            )));
        }
        let n = geom.out_pixels();
        let mut out = Vec::with_capacity(geom.c_out * n);
        for &bv in b.data() {
            out.extend(std::iter::repeat_n(bv, n));
        }
        let cols = (!geom.is_pointwise()).then(|| im2col(x.data(), &geom));
        let lowered = cols.as_deref().unwrap_or(x.data());
        gemm(
            geom.c_out,
            geom.patch_len(),
            n,
            wt.data(),
            false,
            lowered,
            false,
            &mut out,
            true,
        );
        let value = Tensor::new(&[geom.c_out, geom.h_out, geom.w_out], out)?;
        let rg = self.any_grad(&[input, weight, bias]);
        Ok(self.push(
            value,
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
                cols,
            },
            rg,
        ))
    }

    /// `x` where `x ≥ 0`, `slope·x` elsewhere.
    pub fn leaky_relu(&mut self, input: Var, slope: f64) -> Var {
        let x = self.value(input);
        let data = x
            .data()
            .iter()
            .map(|&v| if v >= 0.0 { v } else { slope * v })
            .collect();
        let value = Tensor::new(x.shape(), data).expect("same shape");
        let rg = self.any_grad(&[input]);
        self.push(value, Op::LeakyRelu { input, slope }, rg)
    }

    /// Replicates every pixel of a `C×H×W` input into a `factor×factor` block.
    pub fn upsample_nearest(&mut self, input: Var, factor: usize) -> Result<Var> {
        if factor == 0 {
            return Err(Error::Dimension(
                "upsampling factor must be positive".into(),
            ));
        }
        let x = self.value(input);
        let (c, h, w) = x.chw()?;
        let (ho, wo) = (h * factor, w * factor);
        let mut out = Vec::with_capacity(c * ho * wo);
        for ch in 0..c {
            for y in 0..h {
                let src = &x.data()[(ch * h + y) * w..(ch * h + y + 1) * w];
                let start = out.len();
                for &v in src {
                    out.extend(std::iter::repeat_n(v, factor));
                }
                for _ in 1..factor {
                    out.extend_from_within(start..start + wo);
                }
            }
        }
        let value = Tensor::new(&[c, ho, wo], out)?;
        let rg = self.any_grad(&[input]);
        Ok(self.push(value, Op::UpsampleNearest { input, factor }, rg))
    }

    /// Per-channel standardization over the spatial extent, then `gamma·x̂ + beta`.
    pub fn channel_norm(&mut self, input: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let x = self.value(input);
        let (c, h, w) = x.chw()?;
        let (g, b) = (self.value(gamma), self.value(beta));
        if g.len() != c || b.len() != c {
            return Err(Error::Dimension(format!(
                "norm over {c} channels got gamma/beta of length {}/{}",
                g.len(),
                b.len()
            )));
        }
        let n = h * w;
        let mut normalized = vec![0.0; c * n];
        let mut inv_std = vec![0.0; c];
        let mut out = vec![0.0; c * n];
        for ch in 0..c {
            let plane = &x.data()[ch * n..(ch + 1) * n];
            let mean = plane.iter().sum::<f64>() / n as f64;
            let var = plane.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let istd = 1.0 / (var + eps).sqrt();
            inv_std[ch] = istd;
            let (gc, bc) = (g.data()[ch], b.data()[ch]);
            for i in 0..n {
                let xh = (plane[i] - mean) * istd;
                normalized[ch * n + i] = xh;
                out[ch * n + i] = gc * xh + bc;
            }
        }
        let value = Tensor::new(&[c, h, w], out)?;
        let rg = self.any_grad(&[input, gamma, beta]);
        Ok(self.push(
            value,
            Op::ChannelNorm {
                input,
                gamma,
                beta,
                normalized,
                inv_std,
            },
            rg,
        ))
    }

    /// Stacks the channels of `a` followed by those of `b`.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (ca, ha, wa) = ta.chw()?;
        let (cb, hb, wb) = tb.chw()?;
        if (ha, wa) != (hb, wb) {
            return Err(Error::Dimension(format!(
                "cannot concatenate {ha}×{wa} with {hb}×{wb}"
            )));
        }
        let mut data = Vec::with_capacity(ta.len() + tb.len());
        data.extend_from_slice(ta.data());
        data.extend_from_slice(tb.data());
        let value = Tensor::new(&[ca + cb, ha, wa], data)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Concat { a, b }, rg))
    }

    pub fn sigmoid(&mut self, input: Var) -> Var {
        let x = self.value(input);
        let data = x.data().iter().map(|&v| logistic(v)).collect();
        let value = Tensor::new(x.shape(), data).expect("same shape");
        let rg = self.any_grad(&[input]);
        self.push(value, Op::Sigmoid { input }, rg)
    }

    /// Mean squared error over positions where `mask` is 1.
    ///
    /// `target` and `mask` are plain tensors, so no gradient reaches them.
    pub fn masked_mse(&mut self, pred: Var, target: &Tensor, mask: &Tensor) -> Result<Var> {
        let p = self.value(pred);
        p.check_same_shape(target)?;
        p.check_same_shape(mask)?;
        let count: f64 = mask.data().iter().sum();
        if count <= 0.0 {
            return Err(Error::DegenerateMask);
        }
        let mut sse = 0.0;
        let mut dpred = vec![0.0; p.len()];
        for (i, ((&pv, &tv), &mv)) in p
            .data()
            .iter()
            .zip(target.data())
            .zip(mask.data())
            .enumerate()
        {
            if mv != 0.0 {
                let r = pv - tv;
                sse += mv * r * r;
                dpred[i] = 2.0 * mv * r / count;
            }
        }
        let rg = self.any_grad(&[pred]);
        Ok(self.push(
            Tensor::scalar(sse / count),
            Op::MaskedMse { pred, dpred },
            rg,
        ))
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let s = self.value(input).data().iter().sum();
        let rg = self.any_grad(&[input]);
        self.push(Tensor::scalar(s), Op::Sum { input }, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b))?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Add { a, b }, rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        ta.check_same_shape(tb)?;
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| x * y)
            .collect();
        let value = Tensor::new(ta.shape(), data)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Mul { a, b }, rg))
    }

    /// Populates `∂loss/∂p` for every differentiable leaf `p`, adding to any
    /// gradient already held from earlier calls.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut upstream: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        upstream[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));
        for idx in (0..=loss.0).rev() {
            let Some(gy) = upstream[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                match &mut self.grads[idx] {
                    Some(acc) => acc.add_assign(&gy)?,
                    slot => *slot = Some(gy),
                }
                continue;
            }
            for (parent, g) in self.local_grads(idx, gy)? {
                if !self.nodes[parent.0].requires_grad {
                    continue;
                }
                match &mut upstream[parent.0] {
                    Some(acc) => acc.add_assign(&g)?,
                    slot => *slot = Some(g),
                }
            }
        }
        for (idx, node) in self.nodes[..=loss.0].iter().enumerate() {
            if node.requires_grad && matches!(node.op, Op::Leaf) && self.grads[idx].is_none() {
                self.grads[idx] = Some(Tensor::zeros(node.value.shape()));
            }
        }
        Ok(())
    }

    /// Vector-Jacobian products of node `idx` with upstream gradient `gy`.
    fn local_grads(&self, idx: usize, gy: Tensor) -> Result<Vec<(Var, Tensor)>> {
        let node = &self.nodes[idx];
        let y = &node.value;
        let wants = |v: &Var| self.nodes[v.0].requires_grad;
        let mut out = Vec::with_capacity(3);
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
                cols,
            } => {
                let n = geom.out_pixels();
                let kdim = geom.patch_len();
                let x = self.value(*input);
                let lowered = cols.as_deref().unwrap_or(x.data());
                if wants(bias) {
                    let db = gy.data().chunks_exact(n).map(|r| r.iter().sum()).collect();
                    out.push((*bias, Tensor::new(&[geom.c_out], db)?));
                }
                if wants(weight) {
                    let mut dw = vec![0.0; geom.c_out * kdim];
                    gemm(
                        geom.c_out,
                        n,
                        kdim,
                        gy.data(),
                        false,
                        lowered,
                        true,
                        &mut dw,
                        false,
                    );
                    out.push((*weight, Tensor::new(self.value(*weight).shape(), dw)?));
                }
                if wants(input) {
                    let w = self.value(*weight);
                    let mut dcols = vec![0.0; kdim * n];
                    gemm(
                        kdim,
                        geom.c_out,
                        n,
                        w.data(),
                        true,
                        gy.data(),
                        false,
                        &mut dcols,
                        false,
                    );
                    let dx = if geom.is_pointwise() {
                        dcols
                    } else {
                        col2im(&dcols, geom)
                    };
                    out.push((*input, Tensor::new(x.shape(), dx)?));
                }
            }
            Op::LeakyRelu { input, slope } => {
                let x = self.value(*input);
                let dx = x
                    .data()
                    .iter()
                    .zip(gy.data())
                    .map(|(&xv, &g)| if xv >= 0.0 { g } else { slope * g })
                    .collect();
                out.push((*input, Tensor::new(x.shape(), dx)?));
            }
            Op::UpsampleNearest { input, factor } => {
                let x = self.value(*input);
                let (c, h, w) = x.chw()?;
                let wo = w * factor;
                let mut dx = vec![0.0; c * h * w];
                for ch in 0..c {
                    for yy in 0..h * factor {
                        let row = &gy.data()[(ch * h * factor + yy) * wo..][..wo];
                        let dst = &mut dx[(ch * h + yy / factor) * w..][..w];
                        for (xx, g) in row.iter().enumerate() {
                            dst[xx / factor] += g;
                        }
                    }
                }
                out.push((*input, Tensor::new(x.shape(), dx)?));
            }
            Op::ChannelNorm {
                input,
                gamma,
                beta,
                normalized,
                inv_std,
            } => {
                let (c, h, w) = y.chw()?;
                let n = h * w;
                let g = self.value(*gamma);
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                let mut dx = vec![0.0; c * n];
                for ch in 0..c {
                    let gyc = &gy.data()[ch * n..(ch + 1) * n];
                    let xh = &normalized[ch * n..(ch + 1) * n];
                    let sum_g: f64 = gyc.iter().sum();
                    let sum_gx: f64 = gyc.iter().zip(xh).map(|(a, b)| a * b).sum();
                    dbeta[ch] = sum_g;
                    dgamma[ch] = sum_gx;
                    let scale = g.data()[ch] * inv_std[ch] / n as f64;
                    for i in 0..n {
                        dx[ch * n + i] = scale * (n as f64 * gyc[i] - sum_g - xh[i] * sum_gx);
                    }
                }
                if wants(input) {
                    out.push((*input, Tensor::new(&[c, h, w], dx)?));
                }
                if wants(gamma) {
                    out.push((*gamma, Tensor::new(g.shape(), dgamma)?));
                }
                if wants(beta) {
                    out.push((*beta, Tensor::new(self.value(*beta).shape(), dbeta)?));
                }
            }
            Op::Concat { a, b } => {
                let split = self.value(*a).len();
                let mut data = gy.into_data();
                let tail = data.split_off(split);
                out.push((*a, Tensor::new(self.value(*a).shape(), data)?));
                out.push((*b, Tensor::new(self.value(*b).shape(), tail)?));
            }
            Op::Sigmoid { input } => {
                let dx = y
                    .data()
                    .iter()
                    .zip(gy.data())
                    .map(|(s, g)| g * s * (1.0 - s))
                    .collect();
                out.push((*input, Tensor::new(y.shape(), dx)?));
            }
            Op::MaskedMse { pred, dpred } => {
                let g = gy.data()[0];
                let dx = dpred.iter().map(|d| d * g).collect();
                out.push((*pred, Tensor::new(self.value(*pred).shape(), dx)?));
            }
            Op::Sum { input } => {
                let shape = self.value(*input).shape();
                out.push((*input, Tensor::full(shape, gy.data()[0])));
            }
            Op::Add { a, b } => {
                out.push((*a, gy.clone()));
                out.push((*b, gy));
            }
            Op::Mul { a, b } => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let da = gy
                    .data()
                    .iter()
                    .zip(tb.data())
                    .map(|(g, v)| g * v)
                    .collect();
                let db = gy
                    .data()
                    .iter()
                    .zip(ta.data())
                    .map(|(g, v)| g * v)
                    .collect();
                out.push((*a, Tensor::new(ta.shape(), da)?));
                out.push((*b, Tensor::new(tb.shape(), db)?));
            }
        }
        Ok(out)
    }
}

/// Overflow-free logistic function.
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn conv_window_sums() {
        let mut g = Graph::new();
        let x = g.constant(t(&[1, 3, 3], &[1., 2., 3., 4., 5., 6., 7., 8., 9.]));
        let w = g.constant(Tensor::full(&[1, 1, 2, 2], 1.0));
        let b = g.constant(Tensor::zeros(&[1]));
        let y = g.conv2d(x, w, b, 1, Padding::Zero, 0).unwrap();
        assert_eq!(g.value(y), &t(&[1, 2, 2], &[12., 16., 24., 28.]));

        let x = g.constant(Tensor::full(&[1, 4, 4], 1.0));
        let y = g.conv2d(x, w, b, 2, Padding::Zero, 0).unwrap();
        assert_eq!(g.value(y), &Tensor::full(&[1, 2, 2], 4.0));
    }

    #[test]
    fn conv_channel_mismatch() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[2, 4, 4]));
        let w = g.constant(Tensor::zeros(&[1, 3, 1, 1]));
        let b = g.constant(Tensor::zeros(&[1]));
        assert!(matches!(
            g.conv2d(x, w, b, 1, Padding::Reflect, 0),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn leaky_relu_branches() {
        let mut g = Graph::new();
        let x = g.param(t(&[3], &[5.0, -1.0, 0.0]));
        let y = g.leaky_relu(x, 0.2);
        assert_eq!(g.value(y).data(), &[5.0, -0.2, 0.0]);
        let s = g.sum(y);
        g.backward(s).unwrap();
        // derivative at exactly zero takes the positive branch
        assert_eq!(g.grad(x).unwrap().data(), &[1.0, 0.2, 1.0]);
    }

    #[test]
    fn upsample_blocks() {
        let mut g = Graph::new();
        let x = g.param(t(&[1, 2, 2], &[1., 2., 3., 4.]));
        let y = g.upsample_nearest(x, 2).unwrap();
        assert_eq!(
            g.value(y).data(),
            &[1., 1., 2., 2., 1., 1., 2., 2., 3., 3., 4., 4., 3., 3., 4., 4.]
        );
        let s = g.sum(y);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[4.0; 4]);

        let ones = g.constant(Tensor::full(&[1, 2, 2], 1.0));
        let y3 = g.upsample_nearest(ones, 3).unwrap();
        assert_eq!(g.value(y3), &Tensor::full(&[1, 6, 6], 1.0));
        let y1 = g.upsample_nearest(x, 1).unwrap();
        assert_eq!(g.value(y1), g.value(x));
    }

    #[test]
    fn channel_norm_cases() {
        let mut g = Graph::new();
        let x = g.constant(t(&[1, 1, 2], &[1.0, 3.0]));
        let one = g.constant(t(&[1], &[1.0]));
        let zero = g.constant(t(&[1], &[0.0]));
        let y = g.channel_norm(x, one, zero, 0.0).unwrap();
        assert_eq!(g.value(y).data(), &[-1.0, 1.0]);

        let c = g.constant(Tensor::full(&[1, 2, 2], 0.3));
        let gamma = g.constant(t(&[1], &[2.5]));
        let beta = g.constant(t(&[1], &[0.7]));
        let y = g.channel_norm(c, gamma, beta, 1e-5).unwrap();
        assert!(g.value(y).data().iter().all(|&v| v == 0.7));

        let gz = g.constant(t(&[1], &[0.0]));
        let y = g.channel_norm(x, gz, beta, 1e-5).unwrap();
        assert!(g.value(y).data().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn concat_and_slice() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::full(&[1, 2, 2], 1.0));
        let b = g.constant(Tensor::zeros(&[1, 2, 2]));
        let c = g.concat_channels(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[1., 1., 1., 1., 0., 0., 0., 0.]);
        assert_eq!(&g.value(c).slice_channels(0, 1).unwrap(), g.value(a));

        let a = g.constant(Tensor::zeros(&[3, 4, 4]));
        let b = g.constant(Tensor::zeros(&[2, 4, 4]));
        let c = g.concat_channels(a, b).unwrap();
        assert_eq!(g.value(c).shape(), &[5, 4, 4]);

        let bad = g.constant(Tensor::zeros(&[2, 4, 3]));
        assert!(matches!(
            g.concat_channels(a, bad),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn sigmoid_values() {
        let mut g = Graph::new();
        let x = g.param(t(&[3], &[0.0, 800.0, -800.0]));
        let y = g.sigmoid(x);
        let v = g.value(y).data();
        assert_eq!(v[0], 0.5);
        assert_eq!(v[1], 1.0);
        assert!(v[2] >= 0.0 && v[2].is_finite());
        let s = g.sum(y);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data()[0], 0.25);
    }

    #[test]
    fn masked_mse_cases() {
        let mut g = Graph::new();
        let target = t(&[2], &[0.0, 0.0]);
        let p = g.param(t(&[2], &[1.0, 0.0]));
        let l = g.masked_mse(p, &target, &t(&[2], &[1.0, 0.0])).unwrap();
        assert_eq!(g.value(l).item().unwrap(), 1.0);
        let l = g.masked_mse(p, &target, &t(&[2], &[1.0, 1.0])).unwrap();
        assert_eq!(g.value(l).item().unwrap(), 0.5);
        let l = g
            .masked_mse(p, &t(&[2], &[1.0, 0.0]), &t(&[2], &[1.0, 1.0]))
            .unwrap();
        assert_eq!(g.value(l).item().unwrap(), 0.0);
        assert!(matches!(
            g.masked_mse(p, &target, &t(&[2], &[0.0, 0.0])),
            Err(Error::DegenerateMask)
        ));
    }

    #[test]
    fn backward_basics() {
        let mut g = Graph::new();
        let x = g.param(t(&[2, 2], &[1., -2., 3., 0.5]));
        let s = g.sum(x);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[1.0; 4]);

        let mut g = Graph::new();
        let x = g.param(t(&[3], &[1., 2., 3.]));
        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[2., 4., 6.]);

        // x feeds two branches: d/dx [sum(x) + sum(2x)] = 3
        let mut g = Graph::new();
        let x = g.param(t(&[2], &[0.3, 0.4]));
        let two = g.constant(t(&[2], &[2.0, 2.0]));
        let b = g.mul(x, two).unwrap();
        let y = g.add(x, b).unwrap();
        let s = g.sum(y);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[3.0, 3.0]);

        // a second backward accumulates; zero_grad clears
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[6.0, 6.0]);
        g.zero_grad();
        assert!(g.grad(x).is_none());

        let v = g.param(t(&[2], &[1., 2.]));
        assert!(matches!(g.backward(v), Err(Error::Contract(_))));
    }

    #[test]
    fn unused_param_gets_zero_grad() {
        let mut g = Graph::new();
        let x = g.param(t(&[2], &[1., 2.]));
        let unused = g.param(t(&[3], &[1., 2., 3.]));
        let s = g.sum(x);
        g.backward(s).unwrap();
        assert_eq!(g.grad(unused).unwrap(), &Tensor::zeros(&[3]));
    }

    #[test]
    fn identity_pointwise_conv() {
        let mut g = Graph::new();
        let data: Vec<f64> = (0..18).map(|i| i as f64 * 0.37 - 2.0).collect();
        let x = g.param(t(&[2, 3, 3], &data));
        let mut eye = vec![0.0; 4];
        eye[0] = 1.0;
        eye[3] = 1.0;
        let w = g.constant(t(&[2, 2, 1, 1], &eye));
        let b = g.constant(Tensor::zeros(&[2]));
        let y = g.conv2d(x, w, b, 1, Padding::Reflect, 0).unwrap();
        assert_eq!(g.value(y), g.value(x));
        let up = g.constant(Tensor::from_fn(&[2, 3, 3], |i| (i as f64).sin()));
        let prod = g.mul(y, up).unwrap();
        let s = g.sum(prod);
        g.backward(s).unwrap();
        // backward passes the upstream gradient through unchanged
        assert_eq!(g.grad(x).unwrap(), g.value(up));
    }
}
