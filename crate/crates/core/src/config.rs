//! Hourglass network and training configuration, with a flat `key = value`
//! text serialization (lists comma-separated, `#` starts a comment).

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKind {
    /// i.i.d. uniform noise on `[0, input_amplitude)`.
    Noise,
    /// Two channels of normalized column / row coordinates.
    Meshgrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpsampleMode {
    Nearest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HourglassConfig {
    pub depth: usize,
    pub n_d: Vec<usize>,
    pub n_u: Vec<usize>,
    pub k_d: Vec<usize>,
    pub k_u: Vec<usize>,
    /// Skip filters per scale; 0 disables the skip branch at that scale.
    pub n_s: Vec<usize>,
    pub k_s: Vec<usize>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub leaky_slope: f64,
    /// Std of the fresh gaussian perturbation added to the base input each iteration.
    pub sigma_p: f64,
    pub lr: f64,
    pub num_iter: usize,
    pub upsample_mode: UpsampleMode,
    pub input_kind: InputKind,
    pub input_amplitude: f64,
    pub seed: u64,
}

impl Default for HourglassConfig {
    fn default() -> Self {
        Self::reference()
    }
}

impl HourglassConfig {
    /// Five scales of 128 filters, 3×3 down/up kernels, 1×1 skips, 1500 Adam
    /// iterations at lr 0.01, four noise input channels on `[0, 0.1)`.
    pub fn reference() -> Self {
        Self {
            depth: 5,
            n_d: vec![128; 5],
            n_u: vec![128; 5],
            k_d: vec![3; 5],
            k_u: vec![3; 5],
            n_s: vec![128; 5],
            k_s: vec![1; 5],
            in_channels: 4,
            out_channels: 4,
            leaky_slope: 0.2,
            sigma_p: 0.1,
            lr: 0.01,
            num_iter: 1500,
            upsample_mode: UpsampleMode::Nearest,
            input_kind: InputKind::Noise,
            input_amplitude: 0.1,
            seed: 0,
        }
    }

    /// Same topology and schedule with `width` filters everywhere.
    pub fn uniform(depth: usize, width: usize) -> Self {
        Self {
            depth,
            n_d: vec![width; depth],
            n_u: vec![width; depth],
            k_d: vec![3; depth],
            k_u: vec![3; depth],
            n_s: vec![width; depth],
            k_s: vec![1; depth],
            ..Self::reference()
        }
    }

    /// Spatial extents must be multiples of this.
    pub fn spatial_divisor(&self) -> usize {
        1 << self.depth
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::config("depth", "must be at least 1"));
        }
        if self.depth > 16 {
            return Err(Error::config("depth", "must be at most 16"));
        }
        let lists: [(&str, &Vec<usize>); 6] = [
            ("n_d", &self.n_d),
            ("n_u", &self.n_u),
            ("k_d", &self.k_d),
            ("k_u", &self.k_u),
            ("n_s", &self.n_s),
            ("k_s", &self.k_s),
        ];
        for (name, list) in lists {
            if list.len() != self.depth {
                return Err(Error::config(
                    name,
                    format!("has {} entries, depth is {}", list.len(), self.depth),
                ));
            }
        }
        for (name, list) in [("k_d", &self.k_d), ("k_u", &self.k_u), ("k_s", &self.k_s)] {
            if let Some(k) = list.iter().find(|&&k| k == 0 || k % 2 == 0) {
                return Err(Error::config(
                    name,
                    format!("kernel size {k} must be odd and ≥ 1"),
                ));
            }
        }
        for (name, list) in [("n_d", &self.n_d), ("n_u", &self.n_u)] {
            if list.contains(&0) {
                return Err(Error::config(name, "filter counts must be ≥ 1"));
            }
        }
        if self.in_channels == 0 {
            return Err(Error::config("in_channels", "must be ≥ 1"));
        }
        if self.out_channels == 0 {
            return Err(Error::config("out_channels", "must be ≥ 1"));
        }
        if self.input_kind == InputKind::Meshgrid && self.in_channels != 2 {
            return Err(Error::config(
                "in_channels",
                "meshgrid input has exactly 2 channels",
            ));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::config("leaky_slope", "must lie in (0, 1)"));
        }
        if !(self.sigma_p >= 0.0 && self.sigma_p.is_finite()) {
            return Err(Error::config("sigma_p", "must be finite and ≥ 0"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("lr", "must be finite and > 0"));
        }
        if self.num_iter == 0 {
            return Err(Error::config("num_iter", "must be ≥ 1"));
        }
        if !(self.input_amplitude >= 0.0 && self.input_amplitude.is_finite()) {
            return Err(Error::config("input_amplitude", "must be finite and ≥ 0"));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        std::fs::read_to_string(path)?.parse()
    }

    pub fn to_kv_string(&self) -> String {
        let list = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let _ = writeln!(s, "depth = {}", self.depth);
        let _ = writeln!(s, "n_d = {}", list(&self.n_d));
        let _ = writeln!(s, "n_u = {}", list(&self.n_u));
        let _ = writeln!(s, "k_d = {}", list(&self.k_d));
        let _ = writeln!(s, "k_u = {}", list(&self.k_u));
        let _ = writeln!(s, "n_s = {}", list(&self.n_s));
        let _ = writeln!(s, "k_s = {}", list(&self.k_s));
        let _ = writeln!(s, "in_channels = {}", self.in_channels);
        let _ = writeln!(s, "out_channels = {}", self.out_channels);
        let _ = writeln!(s, "leaky_slope = {}", self.leaky_slope);
        let _ = writeln!(s, "sigma_p = {}", self.sigma_p);
        let _ = writeln!(s, "lr = {}", self.lr);
        let _ = writeln!(s, "num_iter = {}", self.num_iter);
        let _ = writeln!(s, "upsample_mode = nearest");
        let _ = writeln!(
            s,
            "input_kind = {}",
            match self.input_kind {
                InputKind::Noise => "noise",
                InputKind::Meshgrid => "meshgrid",
            }
        );
        let _ = writeln!(s, "input_amplitude = {}", self.input_amplitude);
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{value}`")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|item| parse_value(key, item.trim()))
        .collect()
}

impl FromStr for HourglassConfig {
    type Err = Error;

    /// Keys not present keep their reference values.
    fn from_str(text: &str) -> Result<Self> {
        let mut cfg = Self::reference();
        let mut depth_set = false;
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::config(line, "expected `key = value`"));
            };
            let (key, value) = (key.trim(), value.trim());
            match key {
                "depth" => {
                    cfg.depth = parse_value(key, value)?;
                    depth_set = true;
                }
                "n_d" => cfg.n_d = parse_list(key, value)?,
                "n_u" => cfg.n_u = parse_list(key, value)?,
                "k_d" => cfg.k_d = parse_list(key, value)?,
                "k_u" => cfg.k_u = parse_list(key, value)?,
                "n_s" => cfg.n_s = parse_list(key, value)?,
                "k_s" => cfg.k_s = parse_list(key, value)?,
                "in_channels" => cfg.in_channels = parse_value(key, value)?,
                "out_channels" => cfg.out_channels = parse_value(key, value)?,
                "leaky_slope" => cfg.leaky_slope = parse_value(key, value)?,
                "sigma_p" => cfg.sigma_p = parse_value(key, value)?,
                "lr" => cfg.lr = parse_value(key, value)?,
                "num_iter" => cfg.num_iter = parse_value(key, value)?,
                "upsample_mode" => {
                    cfg.upsample_mode = match value {
                        "nearest" => UpsampleMode::Nearest,
                        _ => return Err(Error::config(key, "only `nearest` is supported")),
                    }
                }
                "input_kind" => {
                    cfg.input_kind = match value {
                        "noise" => InputKind::Noise,
                        "meshgrid" => InputKind::Meshgrid,
                        _ => return Err(Error::config(key, "expected `noise` or `meshgrid`")),
                    }
                }
                "input_amplitude" => cfg.input_amplitude = parse_value(key, value)?,
                "seed" => cfg.seed = parse_value(key, value)?,
                _ => return Err(Error::config(key, "unknown key")),
            }
        }
        // a bare `depth` override resizes per-scale lists that were left at defaults
        if depth_set && cfg.depth != 5 {
            let defaults = Self::reference();
            for (list, default) in [
                (&mut cfg.n_d, &defaults.n_d),
                (&mut cfg.n_u, &defaults.n_u),
                (&mut cfg.k_d, &defaults.k_d),
                (&mut cfg.k_u, &defaults.k_u),
                (&mut cfg.n_s, &defaults.n_s),
                (&mut cfg.k_s, &defaults.k_s),
            ] {
                if list == default {
                    *list = vec![default[0]; cfg.depth];
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_config_is_valid_and_round_trips() {
        let cfg = HourglassConfig::reference();
        cfg.validate().unwrap();
        let back: HourglassConfig = cfg.to_kv_string().parse().unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn shipped_reference_file_matches() {
        let text = include_str!("../../../configs/reference.cfg");
        let cfg: HourglassConfig = text.parse().unwrap();
        assert_eq!(cfg, HourglassConfig::reference());
        assert_eq!(cfg.n_u, vec![128; 5]);
        assert_eq!(cfg.k_s, vec![1; 5]);
        assert_eq!(cfg.sigma_p, 0.1);
        assert_eq!(cfg.lr, 0.01);
        assert_eq!(cfg.num_iter, 1500);
    }

    #[test]
    fn errors_name_the_field() {
        let err = "n_d = 8,8".parse::<HourglassConfig>().unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "n_d"));
        let err = "k_u = 3,3,4,3,3".parse::<HourglassConfig>().unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "k_u"));
        let err = "lr = 0".parse::<HourglassConfig>().unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "lr"));
        let err = "input_kind = meshgrid"
            .parse::<HourglassConfig>()
            .unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "in_channels"));
        let err = "bogus = 1".parse::<HourglassConfig>().unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "bogus"));
    }

    #[test]
    fn depth_override_resizes_default_lists() {
        let cfg: HourglassConfig = "depth = 3\nn_s = 4,4,0".parse().unwrap();
        assert_eq!(cfg.n_d, vec![128; 3]);
        assert_eq!(cfg.n_s, vec![4, 4, 0]);
    }
}
