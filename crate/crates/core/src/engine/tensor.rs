use crate::error::{Error, Result};

/// Dense row-major array of `f64`. Images use channel-major `C×H×W` layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Dimension(format!(
                "shape {:?} needs {} values, got {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.data.len() != 1 {
            return Err(Error::Contract(format!(
                "expected a scalar, got shape {:?}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }

    /// Interprets the tensor as `C×H×W`.
    pub fn chw(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::Dimension(format!(
                "expected a C×H×W tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::Dimension(format!(
                "cannot reshape {:?} into {:?}",
                self.shape, shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn check_same_shape(&self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Dimension(format!(
                "shape mismatch: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    /// Channels `start..end` of a `C×H×W` tensor.
    pub fn slice_channels(&self, start: usize, end: usize) -> Result<Tensor> {
        let (c, h, w) = self.chw()?;
        if start > end || end > c {
            return Err(Error::Dimension(format!(
                "channel range {start}..{end} out of bounds for {c} channels"
            )));
        }
        let plane = h * w;
        Tensor::new(
            &[end - start, h, w],
            self.data[start * plane..end * plane].to_vec(),
        )
    }

    /// Non-overlapping `factor×factor` mean pooling of a `C×H×W` tensor.
    pub fn avg_pool(&self, factor: usize) -> Result<Tensor> {
        let (c, h, w) = self.chw()?;
        if factor == 0 || h % factor != 0 || w % factor != 0 {
            return Err(Error::Dimension(format!(
                "{h}×{w} is not divisible by pooling factor {factor}"
            )));
        }
        let (ho, wo) = (h / factor, w / factor);
        let norm = (factor * factor) as f64;
        let mut out = vec![0.0; c * ho * wo];
        for ch in 0..c {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = 0.0;
                    for dy in 0..factor {
                        let row = (ch * h + oy * factor + dy) * w + ox * factor;
                        acc += self.data[row..row + factor].iter().sum::<f64>();
                    }
                    out[(ch * ho + oy) * wo + ox] = acc / norm;
                }
            }
        }
        Tensor::new(&[c, ho, wo], out)
    }
}
