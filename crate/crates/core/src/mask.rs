//! Simulated scan-line-corrector gaps: periodic diagonal stripes whose width
//! grows from zero at the centre column to a maximum at the image edges.
//!
//! Convention: `true` / 1 = observed, `false` / 0 = missing.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::engine::Tensor;
use crate::error::{Error, Result};
use crate::raster::Raster;

/// Per-pixel observed/missing grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GapMask {
    height: usize,
    width: usize,
    observed: Vec<bool>,
    /// Free-form generator description, kept through file round trips.
    pub comment: String,
}

impl GapMask {
    pub fn from_observed(height: usize, width: usize, observed: Vec<bool>) -> Result<Self> {
        if observed.len() != height * width {
            return Err(Error::Dimension(format!(
                "mask {height}×{width} needs {} cells, got {}",
                height * width,
                observed.len()
            )));
        }
        Ok(Self {
            height,
            width,
            observed,
            comment: String::new(),
        })
    }

    pub fn all_observed(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            observed: vec![true; height * width],
            comment: String::new(),
        }
    }

    pub fn all_missing(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            observed: vec![false; height * width],
            comment: String::new(),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn is_observed(&self, row: usize, col: usize) -> bool {
        self.observed[row * self.width + col]
    }

    /// Row-major observed flags.
    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    pub fn missing_count(&self) -> usize {
        self.observed.iter().filter(|&&o| !o).count()
    }

    pub fn observed_count(&self) -> usize {
        self.observed.len() - self.missing_count()
    }

    /// The same mask repeated over `bands` channels, 1.0 where observed.
    pub fn to_tensor(&self, bands: usize) -> Tensor {
        let plane: Vec<f64> = self
            .observed
            .iter()
            .map(|&o| if o { 1.0 } else { 0.0 })
            .collect();
        Tensor::new(&[bands, self.height, self.width], plane.repeat(bands)).expect("mask extent")
    }

    pub fn check_extent(&self, r: &Raster) -> Result<()> {
        if (self.height, self.width) != (r.height(), r.width()) {
            return Err(Error::Dimension(format!(
                "mask is {}×{} but raster is {}×{}",
                self.height,
                self.width,
                r.height(),
                r.width()
            )));
        }
        Ok(())
    }

    /// Mirror-pads like [`Raster::pad_reflect`].
    pub fn pad_reflect(&self, height: usize, width: usize) -> Result<GapMask> {
        use crate::engine::conv::reflect_index;
        if height < self.height || width < self.width {
            return Err(Error::Dimension("mask padding must not shrink".into()));
        }
        let mut observed = Vec::with_capacity(height * width);
        for y in 0..height {
            let sy = reflect_index(y as isize, self.height);
            for x in 0..width {
                observed.push(self.is_observed(sy, reflect_index(x as isize, self.width)));
            }
        }
        Ok(GapMask {
            height,
            width,
            observed,
            comment: self.comment.clone(),
        })
    }

    /// Writes a plain `P1` bitmap in which 1 marks a missing pixel.
    pub fn to_pbm(&self) -> String {
        let mut s = String::from("P1\n");
        if !self.comment.is_empty() {
            let _ = writeln!(s, "# {}", self.comment);
        }
        let _ = writeln!(s, "{} {}", self.width, self.height);
        for row in self.observed.chunks(self.width) {
            let bits: Vec<u8> = row.iter().map(|&o| if o { b'0' } else { b'1' }).collect();
            for chunk in bits.chunks(70) {
                s.push_str(std::str::from_utf8(chunk).expect("ascii"));
                s.push('\n');
            }
        }
        s
    }

    pub fn from_pbm(text: &str) -> Result<GapMask> {
        let bytes = text.as_bytes();
        if !text.starts_with("P1") {
            return Err(Error::parse(0, "missing P1 magic"));
        }
        let mut pos = 2;
        let mut comment = None;
        let mut next_token = |pos: &mut usize| -> Option<(usize, &str)> {
            loop {
                while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                    *pos += 1;
                }
                if *pos < bytes.len() && bytes[*pos] == b'#' {
                    let end = text[*pos..].find('\n').map_or(bytes.len(), |e| *pos + e);
                    if comment.is_none() {
                        comment = Some(text[*pos + 1..end].trim().to_string());
                    }
                    *pos = end;
                    continue;
                }
                break;
            }
            let start = *pos;
            while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
                *pos += 1;
            }
            (start < *pos).then(|| (start, &text[start..*pos]))
        };
        let mut dim = |pos: &mut usize, what: &str| -> Result<usize> {
            let (at, tok) =
                next_token(pos).ok_or_else(|| Error::parse(*pos, format!("missing {what}")))?;
            tok.parse()
                .map_err(|_| Error::parse(at, format!("bad {what} `{tok}`")))
        };
        let width = dim(&mut pos, "width")?;
        let height = dim(&mut pos, "height")?;
        let mut observed = Vec::with_capacity(width * height);
        while observed.len() < width * height {
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    pos = text[pos..].find('\n').map_or(bytes.len(), |e| pos + e);
                } else {
                    pos += 1;
                }
            }
            match bytes.get(pos) {
                Some(b'0') => observed.push(true),
                Some(b'1') => observed.push(false),
                Some(&c) => {
                    return Err(Error::parse(
                        pos,
                        format!("unexpected byte {:?}", c as char),
                    ))
                }
                None => {
                    return Err(Error::parse(
                        pos,
                        format!("truncated: {} of {} cells", observed.len(), width * height),
                    ))
                }
            }
            pos += 1;
        }
        let mut mask = GapMask::from_observed(height, width, observed)?;
        mask.comment = comment.unwrap_or_default();
        Ok(mask)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_atomic(path.as_ref(), |f| f.write_all(self.to_pbm().as_bytes()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<GapMask> {
        GapMask::from_pbm(&std::fs::read_to_string(path)?)
    }
}

/// Missing pixels over all pixels.
pub fn corruption_fraction(m: &GapMask) -> f64 {
    if m.observed.is_empty() {
        return 0.0;
    }
    m.missing_count() as f64 / m.observed.len() as f64
}

/// How stripe width varies across columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WidthProfile {
    /// Zero at the centre column, growing linearly toward both edges.
    #[default]
    Wedge,
    Constant,
}

/// Stripe layout shared by all masks of one simulated scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StripeGeometry {
    pub period: usize,
    /// Column shift per row; stripes run diagonally when nonzero.
    pub slope: f64,
    pub phase: i64,
    pub profile: WidthProfile,
}

impl Default for StripeGeometry {
    fn default() -> Self {
        Self {
            period: 16,
            slope: 0.25,
            phase: 0,
            profile: WidthProfile::Wedge,
        }
    }
}

impl StripeGeometry {
    fn validate(&self) -> Result<()> {
        if self.period < 2 {
            return Err(Error::config("period", "must be ≥ 2"));
        }
        if self.slope.is_nan() || self.slope.abs() > 1.0 {
            return Err(Error::config("slope", "must satisfy |slope| ≤ 1"));
        }
        Ok(())
    }

    /// Relative stripe width at `col` in `[0, 1]`.
    fn profile_at(&self, col: usize, width: usize) -> f64 {
        match self.profile {
            WidthProfile::Constant => 1.0,
            WidthProfile::Wedge if width <= 1 => 0.0,
            WidthProfile::Wedge => {
                let half = (width - 1) as f64 / 2.0;
                (col as f64 - half).abs() / half
            }
        }
    }

    /// Builds the mask for stripe width `scale·profile(col)`, capped at
    /// `period − 1` so each period keeps one observed column.
    ///
    /// Fractional widths are realized by a per-row offset in `[0, 1)`: a cell
    /// at stripe position `p` is missing iff `p + offset(row) < width(col)`,
    /// which averages to the fractional width over rows and is exact for
    /// integer widths.
    pub fn render(&self, height: usize, width: usize, scale: f64) -> Result<GapMask> {
        self.validate()?;
        let cap = (self.period - 1) as f64;
        let widths: Vec<f64> = (0..width)
            .map(|c| (scale * self.profile_at(c, width)).min(cap))
            .collect();
        let period = self.period as i64;
        let mut observed = Vec::with_capacity(height * width);
        for r in 0..height {
            let shift = (self.slope * r as f64).round() as i64;
            let offset = row_offset(r);
            for (c, &w) in widths.iter().enumerate() {
                let pos = (c as i64 + shift + self.phase).rem_euclid(period) as f64;
                observed.push(pos + offset >= w);
            }
        }
        let mut mask = GapMask::from_observed(height, width, observed)?;
        mask.comment = format!(
            "stripes period={} slope={} phase={} profile={} width={}",
            self.period,
            self.slope,
            self.phase,
            match self.profile {
                WidthProfile::Wedge => "wedge",
                WidthProfile::Constant => "constant",
            },
            scale
        );
        Ok(mask)
    }
}

/// Low-discrepancy offsets (golden-ratio sequence).
fn row_offset(row: usize) -> f64 {
    const PHI: f64 = 0.618_033_988_749_894_9;
    (0.5 + row as f64 * PHI).fract()
}

/// Wedge-shaped stripes reaching `max_width` pixels at the edges.
pub fn slc_wedge_mask(
    height: usize,
    width: usize,
    period: usize,
    max_width: usize,
    phase: i64,
    slope: f64,
) -> Result<GapMask> {
    if max_width >= period {
        return Err(Error::config(
            "max_width",
            format!("{max_width} must be below the period {period} or stripes merge"),
        ));
    }
    StripeGeometry {
        period,
        slope,
        phase,
        profile: WidthProfile::Wedge,
    }
    .render(height, width, max_width as f64)
}

/// Allowed deviation of the realized corruption from its target.
pub const FRACTION_TOLERANCE: f64 = 0.01;

/// Searches the stripe width scale so the corruption fraction lands within
/// [`FRACTION_TOLERANCE`] of `target`.
///
/// For wedges the scale may exceed `period − 1`; widths then saturate from the
/// edges inward, which is how fractions above one half are reached.
pub fn mask_for_fraction(
    height: usize,
    width: usize,
    target: f64,
    geometry: StripeGeometry,
) -> Result<GapMask> {
    geometry.validate()?;
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::config(
            "fraction",
            format!("{target} must lie in (0, 1)"),
        ));
    }
    let cap = (geometry.period - 1) as f64;
    let max_scale = match geometry.profile {
        WidthProfile::Constant => cap,
        // every non-centre column saturates once scale·profile ≥ cap
        WidthProfile::Wedge => cap * width.max(2) as f64,
    };
    let frac =
        |s: f64| -> Result<f64> { Ok(corruption_fraction(&geometry.render(height, width, s)?)) };
    let reachable = frac(max_scale)?;
    if target > reachable + FRACTION_TOLERANCE {
        return Err(Error::config(
            "fraction",
            format!(
                "{target} is not achievable with period {} on {height}×{width}; achievable range is [0, {reachable:.4}]",
                geometry.period
            ),
        ));
    }
    // smallest scale reaching the target, and the largest one below it
    let (mut lo, mut hi) = (0.0, max_scale);
    if frac(hi)? < target {
        lo = hi;
    } else {
        for _ in 0..64 {
            let mid = 0.5 * (lo + hi);
            if frac(mid)? >= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    let (f_lo, f_hi) = (frac(lo)?, frac(hi)?);
    let best = if (f_hi - target).abs() <= (target - f_lo).abs() {
        hi
    } else {
        lo
    };
    let mask = geometry.render(height, width, best)?;
    let realized = corruption_fraction(&mask);
    if (realized - target).abs() > FRACTION_TOLERANCE {
        return Err(Error::config(
            "fraction",
            format!("closest achievable corruption is {realized:.4}, target {target}"),
        ));
    }
    Ok(mask)
}

/// Sets missing cells of every band to `fill` and records `fill` as nodata.
pub fn apply_mask(r: &Raster, m: &GapMask, fill: f64) -> Result<Raster> {
    m.check_extent(r)?;
    let mut out = r.clone();
    for b in 0..out.bands() {
        for (v, &o) in out.band_mut(b).iter_mut().zip(&m.observed) {
            if !o {
                *v = fill;
            }
        }
    }
    out.nodata = Some(fill);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_width_observes_everything() {
        let m = slc_wedge_mask(32, 32, 16, 0, 0, 0.3).unwrap();
        assert_eq!(corruption_fraction(&m), 0.0);
        assert!(slc_wedge_mask(8, 8, 8, 8, 0, 0.0).is_err());
    }

    #[test]
    fn default_maximum_width_reaches_fourteen_at_edges() {
        // stripe positions 0..14 are missing at the edge column, position 14 is not
        let at = |phase| slc_wedge_mask(64, 96, 16, 14, phase, 0.0).unwrap();
        assert!((0..64).all(|r| !at(13).is_observed(r, 0)));
        assert!((0..64).all(|r| at(14).is_observed(r, 0)));
        let m = at(0);
        for r in 0..64 {
            let mut run = 0;
            for c in 0..96 {
                run = if m.is_observed(r, c) { 0 } else { run + 1 };
                assert!(run <= 14);
            }
        }
        // near-zero width at the centre leaves those columns mostly observed
        for c in [47, 48] {
            let seen = (0..64).filter(|&r| m.is_observed(r, c)).count();
            assert!(seen >= 54, "column {c}: {seen}");
        }
    }

    #[test]
    fn constant_width_half_coverage() {
        let g = StripeGeometry {
            period: 8,
            slope: 0.0,
            phase: 0,
            profile: WidthProfile::Constant,
        };
        let m = g.render(16, 16, 4.0).unwrap();
        let zeros = m.observed().iter().filter(|&&o| !o).count();
        assert_eq!(zeros, 128);
        assert_eq!(corruption_fraction(&m), 0.5);
    }

    #[test]
    fn fraction_of_small_masks() {
        let m = GapMask::from_observed(2, 3, vec![false, true, false, true, false, true]).unwrap();
        assert_eq!(corruption_fraction(&m), 0.5);
        assert_eq!(corruption_fraction(&GapMask::all_observed(3, 3)), 0.0);
        assert_eq!(corruption_fraction(&GapMask::all_missing(3, 3)), 1.0);
    }

    #[test]
    fn phase_is_periodic() {
        let a = slc_wedge_mask(20, 40, 10, 6, 3, 0.5).unwrap();
        let b = slc_wedge_mask(20, 40, 10, 6, 13, 0.5).unwrap();
        assert_eq!(a.observed(), b.observed());
    }

    #[test]
    fn unachievable_target_reports_range() {
        let g = StripeGeometry {
            period: 4,
            ..StripeGeometry::default()
        };
        let err = mask_for_fraction(32, 32, 0.9, g).unwrap_err();
        assert!(
            matches!(&err, Error::Config { reason, .. } if reason.contains("achievable range"))
        );
    }

    #[test]
    fn apply_mask_semantics() {
        let r = Raster::filled(3, 4, 4, 0.7).unwrap();
        let all = GapMask::all_observed(4, 4);
        let same = apply_mask(&r, &all, 0.0).unwrap();
        assert_eq!(same.data(), r.data());

        let half = GapMask::from_observed(4, 4, (0..16).map(|i| i % 2 == 0).collect()).unwrap();
        let c = apply_mask(&r, &half, 0.0).unwrap();
        for b in 0..3 {
            let mean = c.band(b).iter().sum::<f64>() / 16.0;
            assert!((mean - 0.35).abs() < 1e-12);
        }
        assert_eq!(c.nodata, Some(0.0));
        assert!(apply_mask(&r, &GapMask::all_observed(3, 4), 0.0).is_err());
    }

    #[test]
    fn pbm_round_trip_and_errors() {
        let m = slc_wedge_mask(9, 100, 12, 7, 2, -0.4).unwrap();
        let text = m.to_pbm();
        assert!(text.starts_with("P1\n# stripes"));
        let back = GapMask::from_pbm(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_pbm(), text);

        let loose = "P1\n# hand written\n3 2\n1 0 1\n0 0 0\n";
        let m = GapMask::from_pbm(loose).unwrap();
        assert_eq!(m.missing_count(), 2);
        assert_eq!(m.comment, "hand written");

        assert!(matches!(
            GapMask::from_pbm("P4\n"),
            Err(Error::Parse { offset: 0, .. })
        ));
        assert!(matches!(
            GapMask::from_pbm("P1\n3 2\n101\n"),
            Err(Error::Parse { offset: 11, .. })
        ));
    }
}
