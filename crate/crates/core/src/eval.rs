//! Reconstruction metrics, similarity maps, reference baselines, and the
//! corruption-level sweep.

use rayon::prelude::*;

use crate::config::HourglassConfig;
use crate::error::{Error, Result};
use crate::io::{fmt_f64, fmt_opt, CsvTable};
use crate::mask::{apply_mask, corruption_fraction, mask_for_fraction, GapMask, StripeGeometry};
use crate::raster::Raster;
use crate::restore::{restore, Mode, OutputMode, RestorationJob};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Hidden,
    Observed,
    All,
}

impl Region {
    pub const ALL: [Region; 3] = [Region::Hidden, Region::Observed, Region::All];

    pub fn label(self) -> &'static str {
        match self {
            Region::Hidden => "hidden",
            Region::Observed => "observed",
            Region::All => "all",
        }
    }
}

/// Flat pixel indices belonging to `region` of `m`.
pub fn region_pixels(m: &GapMask, region: Region) -> Vec<usize> {
    m.observed()
        .iter()
        .enumerate()
        .filter(|&(_, &o)| match region {
            Region::Hidden => !o,
            Region::Observed => o,
            Region::All => true,
        })
        .map(|(i, _)| i)
        .collect()
}

fn check_inputs(pred: &[f64], truth: &[f64], region: &[usize]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "prediction has {} pixels, truth {}",
            pred.len(),
            truth.len()
        )));
    }
    if region.is_empty() {
        return Err(Error::DegenerateRegion("empty evaluation region".into()));
    }
    if let Some(&i) = region.iter().find(|&&i| i >= pred.len()) {
        return Err(Error::Dimension(format!("region index {i} out of range")));
    }
    Ok(())
}

/// Root mean squared error over `region`.
pub fn rmse(pred: &[f64], truth: &[f64], region: &[usize]) -> Result<f64> {
    check_inputs(pred, truth, region)?;
    let sse: f64 = region
        .iter()
        .map(|&i| (pred[i] - truth[i]) * (pred[i] - truth[i]))
        .sum();
    Ok((sse / region.len() as f64).sqrt())
}

/// Coefficient of determination `1 − SS_res/SS_tot`, with `SS_tot` taken
/// about the truth mean over `region`.
pub fn r2(pred: &[f64], truth: &[f64], region: &[usize]) -> Result<f64> {
    check_inputs(pred, truth, region)?;
    let n = region.len() as f64;
    let mean = region.iter().map(|&i| truth[i]).sum::<f64>() / n;
    let ss_tot: f64 = region.iter().map(|&i| (truth[i] - mean).powi(2)).sum();
    if region.len() < 2 || ss_tot == 0.0 {
        return Err(Error::DegenerateRegion(
            "truth has zero variance over the region".into(),
        ));
    }
    let ss_res: f64 = region.iter().map(|&i| (pred[i] - truth[i]).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionMetrics {
    pub count: usize,
    /// `None` for an empty region
    pub rmse: Option<f64>,
    /// `None` for an empty or constant-truth region
    pub r2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandMetrics {
    pub name: String,
    pub hidden: RegionMetrics,
    pub observed: RegionMetrics,
    pub all: RegionMetrics,
}

impl BandMetrics {
    pub fn region(&self, region: Region) -> &RegionMetrics {
        match region {
            Region::Hidden => &self.hidden,
            Region::Observed => &self.observed,
            Region::All => &self.all,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub bands: Vec<BandMetrics>,
}

impl MetricsReport {
    /// Band average of a metric; `None` if any band lacks it.
    pub fn mean(&self, region: Region, f: impl Fn(&RegionMetrics) -> Option<f64>) -> Option<f64> {
        let vals: Option<Vec<f64>> = self.bands.iter().map(|b| f(b.region(region))).collect();
        vals.filter(|v| !v.is_empty())
            .map(|v| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn mean_rmse(&self, region: Region) -> Option<f64> {
        self.mean(region, |m| m.rmse)
    }

    pub fn mean_r2(&self, region: Region) -> Option<f64> {
        self.mean(region, |m| m.r2)
    }

    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&["band", "region", "count", "rmse", "r2"]);
        for b in &self.bands {
            for region in Region::ALL {
                let m = b.region(region);
                t.push(vec![
                    b.name.clone(),
                    region.label().into(),
                    m.count.to_string(),
                    fmt_opt(m.rmse),
                    fmt_opt(m.r2),
                ]);
            }
        }
        t
    }
}

/// RMSE and r² per band over hidden, observed and all pixels of `m`.
pub fn evaluate(pred: &Raster, truth: &Raster, m: &GapMask) -> Result<MetricsReport> {
    pred.check_same_shape(truth)?;
    m.check_extent(truth)?;
    let regions: Vec<Vec<usize>> = Region::ALL.iter().map(|&r| region_pixels(m, r)).collect();
    let bands = (0..truth.bands())
        .map(|b| {
            let (p, t) = (pred.band(b), truth.band(b));
            let metrics = |idx: &[usize]| RegionMetrics {
                count: idx.len(),
                rmse: rmse(p, t, idx).ok(),
                r2: r2(p, t, idx).ok(),
            };
            BandMetrics {
                name: truth.names()[b].clone(),
                hidden: metrics(&regions[0]),
                observed: metrics(&regions[1]),
                all: metrics(&regions[2]),
            }
        })
        .collect();
    Ok(MetricsReport { bands })
}

/// Per-pixel `1 − |pred − truth|` for every band, plus the band mean as a final band.
pub fn similarity_map(pred: &Raster, truth: &Raster) -> Result<Raster> {
    pred.check_same_shape(truth)?;
    let n = truth.pixels();
    let bands = truth.bands();
    let mut data = Vec::with_capacity((bands + 1) * n);
    for b in 0..bands {
        data.extend(
            pred.band(b)
                .iter()
                .zip(truth.band(b))
                .map(|(p, t)| 1.0 - (p - t).abs().min(1.0)),
        );
    }
    let mean: Vec<f64> = (0..n)
        .map(|i| (0..bands).map(|b| data[b * n + i]).sum::<f64>() / bands as f64)
        .collect();
    data.extend(mean);
    let mut names: Vec<String> = truth.names().iter().map(|s| format!("sim_{s}")).collect();
    names.push("sim_mean".into());
    Raster::new(names, truth.height(), truth.width(), data)
}

/// Fills each missing pixel with the value of its Euclidean-nearest observed
/// pixel (ties resolved by scan order within the search ring).
pub fn nearest_fill(corrupted: &Raster, m: &GapMask) -> Result<Raster> {
    m.check_extent(corrupted)?;
    if m.observed_count() == 0 {
        return Err(Error::DegenerateMask);
    }
    let (h, w) = (m.height() as isize, m.width() as isize);
    let source: Vec<usize> = (0..h * w)
        .map(|idx| {
            let (y, x) = (idx / w, idx % w);
            if m.observed()[idx as usize] {
                return idx as usize;
            }
            let mut best: Option<(isize, usize)> = None;
            for r in 1..=h.max(w) {
                if best.is_some_and(|(d2, _)| d2 < r * r) {
                    break;
                }
                for dy in -r..=r {
                    let step = if dy.abs() == r { 1 } else { 2 * r };
                    let mut dx = -r;
                    while dx <= r {
                        let (yy, xx) = (y + dy, x + dx);
                        if (0..h).contains(&yy) && (0..w).contains(&xx) {
                            let j = (yy * w + xx) as usize;
                            let d2 = dy * dy + dx * dx;
                            if m.observed()[j] && best.is_none_or(|(b, _)| d2 < b) {
                                best = Some((d2, j));
                            }
                        }
                        dx += step;
                    }
                }
            }
            best.expect("at least one observed pixel").1
        })
        .collect();
    let mut out = corrupted.clone();
    for b in 0..out.bands() {
        let src = corrupted.band(b).to_vec();
        for (v, &j) in out.band_mut(b).iter_mut().zip(&source) {
            *v = src[j];
        }
    }
    out.nodata = None;
    Ok(out)
}

/// Median ignoring nothing; `None` for an empty slice.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    })
}

/// Published per-band (1–4) results of a gap-filling method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineRow {
    pub method: &'static str,
    pub rmse: [f64; 4],
    pub r2: [f64; 4],
}

/// Kriging, weighted linear regression and direct sampling on Landsat-7 bands 1–4.
pub const REFERENCE_BASELINES: [BaselineRow; 3] = [
    BaselineRow {
        method: "Kriging",
        rmse: [0.010, 0.015, 0.023, 0.063],
        r2: [0.610, 0.627, 0.728, 0.690],
    },
    BaselineRow {
        method: "WLR",
        rmse: [0.010, 0.014, 0.023, 0.055],
        r2: [0.622, 0.694, 0.742, 0.765],
    },
    BaselineRow {
        method: "DS",
        rmse: [0.009, 0.012, 0.020, 0.052],
        r2: [0.685, 0.755, 0.792, 0.780],
    },
];

/// Published per-band results of the network prior at 55% corruption.
pub const REPORTED_DIP: BaselineRow = BaselineRow {
    method: "DIP (reported)",
    rmse: [0.020, 0.024, 0.043, 0.052],
    r2: [0.812, 0.853, 0.874, 0.832],
};

/// Published band-mean r² at 55% corruption: (per-band training, composite).
pub const REPORTED_MODE_R2: (f64, f64) = (0.842, 0.880);
/// Published band-mean RMSE at 55% corruption: (per-band training, composite).
pub const REPORTED_MODE_RMSE: (f64, f64) = (0.034, 0.030);

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub method: String,
    /// 1-based
    pub band: usize,
    pub rmse: f64,
    pub r2: f64,
    /// measured − this row
    pub rmse_diff: f64,
    pub r2_diff: f64,
    pub best_rmse: bool,
    pub best_r2: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineComparison {
    pub rows: Vec<ComparisonRow>,
}

impl BaselineComparison {
    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&[
            "method",
            "band",
            "rmse",
            "r2",
            "rmse_diff",
            "r2_diff",
            "best_rmse",
            "best_r2",
        ]);
        for r in &self.rows {
            t.push(vec![
                r.method.clone(),
                r.band.to_string(),
                fmt_f64(r.rmse),
                fmt_f64(r.r2),
                fmt_f64(r.rmse_diff),
                fmt_f64(r.r2_diff),
                (r.best_rmse as u8).to_string(),
                (r.best_r2 as u8).to_string(),
            ]);
        }
        t
    }

    /// Aligned text table with `*` marking the best value per band.
    pub fn to_text(&self) -> String {
        let mut s = format!("{:<16}{:>6}{:>10}{:>10}\n", "method", "band", "rmse", "r2");
        for r in &self.rows {
            let mark = |best: bool| if best { "*" } else { " " };
            s.push_str(&format!(
                "{:<16}{:>6}{:>9.4}{}{:>9.4}{}\n",
                r.method,
                r.band,
                r.rmse,
                mark(r.best_rmse),
                r.r2,
                mark(r.best_r2)
            ));
        }
        s
    }
}

/// Measured hidden-pixel metrics of bands 1–4 beside the published rows.
pub fn compare_to_baselines(report: &MetricsReport) -> Result<BaselineComparison> {
    if report.bands.len() < 4 {
        return Err(Error::IncompleteReport(format!(
            "need bands 1-4, report has {}",
            report.bands.len()
        )));
    }
    let mut measured = BaselineRow {
        method: "measured",
        rmse: [0.0; 4],
        r2: [0.0; 4],
    };
    for b in 0..4 {
        let m = &report.bands[b].hidden;
        let (Some(rmse), Some(r2)) = (m.rmse, m.r2) else {
            return Err(Error::IncompleteReport(format!(
                "band {} lacks hidden-region rmse or r2",
                b + 1
            )));
        };
        measured.rmse[b] = rmse;
        measured.r2[b] = r2;
    }
    let table: Vec<BaselineRow> = std::iter::once(measured)
        .chain([REPORTED_DIP])
        .chain(REFERENCE_BASELINES)
        .collect();
    let mut rows = Vec::new();
    for b in 0..4 {
        let min_rmse = table
            .iter()
            .map(|r| r.rmse[b])
            .fold(f64::INFINITY, f64::min);
        let max_r2 = table
            .iter()
            .map(|r| r.r2[b])
            .fold(f64::NEG_INFINITY, f64::max);
        for r in &table {
            rows.push(ComparisonRow {
                method: r.method.to_string(),
                band: b + 1,
                rmse: r.rmse[b],
                r2: r.r2[b],
                rmse_diff: measured.rmse[b] - r.rmse[b],
                r2_diff: measured.r2[b] - r.r2[b],
                best_rmse: r.rmse[b] == min_rmse,
                best_r2: r.r2[b] == max_r2,
            });
        }
    }
    Ok(BaselineComparison { rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub fraction: f64,
    pub realized_fraction: f64,
    pub seed: u64,
    /// 1-based
    pub band: usize,
    pub rmse_hidden: Option<f64>,
    pub r2_hidden: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub fraction: f64,
    /// median over seeds of the band-mean hidden RMSE
    pub rmse_med: Option<f64>,
    pub r2_med: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub summary: Vec<SweepSummary>,
}

impl SweepTable {
    pub fn rows_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&["fraction", "seed", "band", "rmse_hidden", "r2_hidden"]);
        for r in &self.rows {
            t.push(vec![
                fmt_f64(r.fraction),
                r.seed.to_string(),
                r.band.to_string(),
                fmt_opt(r.rmse_hidden),
                fmt_opt(r.r2_hidden),
            ]);
        }
        t
    }

    pub fn summary_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&["fraction", "rmse_med", "r2_med"]);
        for s in &self.summary {
            t.push(vec![
                fmt_f64(s.fraction),
                fmt_opt(s.rmse_med),
                fmt_opt(s.r2_med),
            ]);
        }
        t
    }

    pub fn summary_for(&self, fraction: f64) -> Option<&SweepSummary> {
        self.summary.iter().find(|s| s.fraction == fraction)
    }
}

/// For each corruption fraction and seed: build a stripe mask, corrupt
/// `truth`, restore all bands jointly, and score the hidden pixels.
pub fn corruption_sweep(
    truth: &Raster,
    fractions: &[f64],
    config: &HourglassConfig,
    seeds: &[u64],
    geometry: StripeGeometry,
) -> Result<SweepTable> {
    let masks: Vec<GapMask> = fractions
        .iter()
        .map(|&f| {
            mask_for_fraction(truth.height(), truth.width(), f, geometry)
                .map_err(|e| e.context(format!("fraction {f}")))
        })
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, u64)> = (0..fractions.len())
        .flat_map(|fi| seeds.iter().map(move |&s| (fi, s)))
        .collect();
    let per_job: Vec<Vec<SweepRow>> = jobs
        .par_iter()
        .map(|&(fi, seed)| {
            let (fraction, mask) = (fractions[fi], &masks[fi]);
            let tag = |e: Error| e.context(format!("fraction {fraction}, seed {seed}"));
            let job = RestorationJob {
                corrupted: apply_mask(truth, mask, 0.0).map_err(tag)?,
                mask: mask.clone(),
                config: config.clone(),
                mode: Mode::Composite,
                output_mode: OutputMode::Full,
                seed,
            };
            let restored = restore(&job).map_err(tag)?;
            let report = evaluate(&restored.raster, truth, mask).map_err(tag)?;
            Ok(report
                .bands
                .iter()
                .enumerate()
                .map(|(b, m)| SweepRow {
                    fraction,
                    realized_fraction: corruption_fraction(mask),
                    seed,
                    band: b + 1,
                    rmse_hidden: m.hidden.rmse,
                    r2_hidden: m.hidden.r2,
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let rows: Vec<SweepRow> = per_job.into_iter().flatten().collect();
    let summary = fractions
        .iter()
        .map(|&fraction| {
            let med = |f: &dyn Fn(&SweepRow) -> Option<f64>| -> Option<f64> {
                let per_seed: Option<Vec<f64>> = seeds
                    .iter()
                    .map(|&s| {
                        let v: Option<Vec<f64>> = rows
                            .iter()
                            .filter(|r| r.fraction == fraction && r.seed == s)
                            .map(f)
                            .collect();
                        v.map(|v| v.iter().sum::<f64>() / v.len() as f64)
                    })
                    .collect();
                per_seed.and_then(|v| median(&v))
            };
            SweepSummary {
                fraction,
                rmse_med: med(&|r| r.rmse_hidden),
                r2_med: med(&|r| r.r2_hidden),
            }
        })
        .collect();
    Ok(SweepTable { rows, summary })
}
