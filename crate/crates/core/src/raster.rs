use crate::engine::{conv::reflect_index, Tensor};
use crate::error::{Error, Result};

/// Multi-band image, values nominally in `[0, 1]`, band-major row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    height: usize,
    width: usize,
    names: Vec<String>,
    data: Vec<f64>,
    pub nodata: Option<f64>,
}

pub fn default_band_names(bands: usize) -> Vec<String> {
    (1..=bands).map(|i| format!("band{i}")).collect()
}

impl Raster {
    pub fn new(names: Vec<String>, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::Dimension("a raster needs at least one band".into()));
        }
        if height == 0 || width == 0 {
            return Err(Error::Dimension(format!("empty raster {height}×{width}")));
        }
        let expected = names.len() * height * width;
        if data.len() != expected {
            return Err(Error::Dimension(format!(
                "{} bands of {height}×{width} need {expected} values, got {}",
                names.len(),
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Format(format!("raster value {v} is not finite")));
        }
        Ok(Self {
            height,
            width,
            names,
            data,
            nodata: None,
        })
    }

    pub fn filled(bands: usize, height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(
            default_band_names(bands),
            height,
            width,
            vec![value; bands * height * width],
        )
    }

    pub fn from_tensor(t: &Tensor, names: Vec<String>) -> Result<Self> {
        let (c, h, w) = t.chw()?;
        if names.len() != c {
            return Err(Error::Dimension(format!(
                "{} band names for {c} channels",
                names.len()
            )));
        }
        Self::new(names, h, w, t.data().to_vec())
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(&[self.bands(), self.height, self.width], self.data.clone())
            .expect("raster invariants")
    }

    pub fn bands(&self) -> usize {
        self.names.len()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn band(&self, b: usize) -> &[f64] {
        let n = self.pixels();
        &self.data[b * n..(b + 1) * n]
    }

    pub fn band_mut(&mut self, b: usize) -> &mut [f64] {
        let n = self.pixels();
        &mut self.data[b * n..(b + 1) * n]
    }

    /// A single-band raster holding band `b`.
    pub fn select_band(&self, b: usize) -> Result<Raster> {
        if b >= self.bands() {
            return Err(Error::Dimension(format!(
                "band {b} out of range for {} bands",
                self.bands()
            )));
        }
        let mut r = Raster::new(
            vec![self.names[b].clone()],
            self.height,
            self.width,
            self.band(b).to_vec(),
        )?;
        r.nodata = self.nodata;
        Ok(r)
    }

    /// Stacks single- or multi-band rasters of equal extent.
    pub fn stack(parts: &[Raster]) -> Result<Raster> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Dimension("nothing to stack".into()))?;
        let mut names = Vec::new();
        let mut data = Vec::new();
        for p in parts {
            first.check_same_extent(p)?;
            names.extend(p.names.iter().cloned());
            data.extend_from_slice(&p.data);
        }
        Raster::new(names, first.height, first.width, data)
    }

    pub fn check_same_extent(&self, other: &Raster) -> Result<()> {
        if (self.height, self.width) != (other.height, other.width) {
            return Err(Error::Dimension(format!(
                "raster extents differ: {}×{} vs {}×{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(())
    }

    pub fn check_same_shape(&self, other: &Raster) -> Result<()> {
        self.check_same_extent(other)?;
        if self.bands() != other.bands() {
            return Err(Error::Dimension(format!(
                "band counts differ: {} vs {}",
                self.bands(),
                other.bands()
            )));
        }
        Ok(())
    }

    /// Mirror-pads on the bottom and right up to `height × width`.
    pub fn pad_reflect(&self, height: usize, width: usize) -> Result<Raster> {
        if height < self.height || width < self.width {
            return Err(Error::Dimension(format!(
                "cannot pad {}×{} down to {height}×{width}",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(self.bands() * height * width);
        for b in 0..self.bands() {
            let band = self.band(b);
            for y in 0..height {
                let sy = reflect_index(y as isize, self.height);
                for x in 0..width {
                    data.push(band[sy * self.width + reflect_index(x as isize, self.width)]);
                }
            }
        }
        let mut r = Raster::new(self.names.clone(), height, width, data)?;
        r.nodata = self.nodata;
        Ok(r)
    }

    /// Top-left `height × width` window.
    pub fn crop(&self, height: usize, width: usize) -> Result<Raster> {
        if height > self.height || width > self.width {
            return Err(Error::Dimension(format!(
                "cannot crop {}×{} to {height}×{width}",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(self.bands() * height * width);
        for b in 0..self.bands() {
            let band = self.band(b);
            for y in 0..height {
                data.extend_from_slice(&band[y * self.width..y * self.width + width]);
            }
        }
        let mut r = Raster::new(self.names.clone(), height, width, data)?;
        r.nodata = self.nodata;
        Ok(r)
    }
}
