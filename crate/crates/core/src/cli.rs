//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::HourglassConfig;
use crate::error::{Error, Result};
use crate::eval::{compare_to_baselines, corruption_sweep, evaluate, similarity_map, Region};
use crate::io::{read_raster, write_raster};
use crate::mask::{
    apply_mask, corruption_fraction, mask_for_fraction, GapMask, StripeGeometry, WidthProfile,
};
use crate::restore::{restore, run_separate_vs_composite, Mode, OutputMode, RestorationJob};
use crate::selftest::run_selftest;
use crate::synth::gaussian_bumps;

#[derive(Parser, Debug)]
#[command(
    name = "dipfill",
    version,
    about = "Gap filling for multi-band rasters with an untrained hourglass network"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    PerBand,
    Composite,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OutputArg {
    Full,
    Splice,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProfileArg {
    Wedge,
    Constant,
}

#[derive(clap::Args, Debug)]
struct GeometryArgs {
    /// Stripe repeat in pixels
    #[arg(long, default_value_t = 16)]
    period: usize,
    /// Column shift per row
    #[arg(long, default_value_t = 0.25, allow_negative_numbers = true)]
    slope: f64,
    #[arg(long, value_enum, default_value = "wedge")]
    profile: ProfileArg,
}

impl GeometryArgs {
    fn geometry(&self, phase: i64) -> StripeGeometry {
        StripeGeometry {
            period: self.period,
            slope: self.slope,
            phase,
            profile: match self.profile {
                ProfileArg::Wedge => WidthProfile::Wedge,
                ProfileArg::Constant => WidthProfile::Constant,
            },
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a striped gap mask (PBM, 1 = missing)
    Mask {
        #[arg(long)]
        height: usize,
        #[arg(long)]
        width: usize,
        /// Target corruption fraction in (0, 1)
        #[arg(
            long,
            conflicts_with = "max_width",
            required_unless_present = "max_width"
        )]
        fraction: Option<f64>,
        /// Stripe width at the image edges in pixels
        #[arg(long)]
        max_width: Option<usize>,
        #[command(flatten)]
        geometry: GeometryArgs,
        #[arg(long, allow_negative_numbers = true)]
        phase: Option<i64>,
        /// Picks the stripe phase when --phase is not given
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Blank the missing pixels of a raster
    Corrupt {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        fill: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fill gaps by fitting the network to the observed pixels
    Restore {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        /// key=value network configuration; defaults to the reference setup
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "composite")]
        mode: ModeArg,
        #[arg(long, value_enum, default_value = "full")]
        output_mode: OutputArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Overrides the configured iteration count
        #[arg(long)]
        num_iter: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Loss trace CSV; per-band runs get a `_bandN` suffix
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Score a prediction against ground truth
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        out_csv: PathBuf,
        #[arg(long)]
        similarity_out: Option<PathBuf>,
        /// Also compare hidden-pixel metrics of bands 1-4 with published baselines
        #[arg(long)]
        baselines_csv: Option<PathBuf>,
    },
    /// Restore at several corruption levels and seeds
    Sweep {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "0.03,0.06,0.15,0.35,0.55"
        )]
        fractions: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        seeds: Vec<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        num_iter: Option<usize>,
        #[command(flatten)]
        geometry: GeometryArgs,
        #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
        phase: i64,
        #[arg(long)]
        out_csv: PathBuf,
        #[arg(long)]
        summary_csv: Option<PathBuf>,
    },
    /// Per-band versus composite restoration on the same mask
    Compare {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        num_iter: Option<usize>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        seeds: Vec<u64>,
        #[arg(long)]
        out_csv: PathBuf,
    },
    /// Write a smooth synthetic raster (sum of Gaussian bumps per band)
    Synth {
        #[arg(long, default_value_t = 4)]
        bands: usize,
        #[arg(long, default_value_t = 64)]
        height: usize,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 12)]
        bumps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Gradient checks and operator oracles
    Selftest,
}

/// Runs the CLI and returns the process exit code.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::Numeric { .. } => 3,
        _ => 2,
    }
}

fn load_config(path: Option<&Path>, num_iter: Option<usize>) -> Result<HourglassConfig> {
    let mut config = match path {
        Some(p) => HourglassConfig::load(p).map_err(|e| e.context(p.display().to_string()))?,
        None => HourglassConfig::reference(),
    };
    if let Some(n) = num_iter {
        config.num_iter = n;
    }
    config.validate()?;
    Ok(config)
}

fn read(path: &Path) -> Result<crate::raster::Raster> {
    read_raster(path).map_err(|e| e.context(path.display().to_string()))
}

fn read_mask(path: &Path) -> Result<GapMask> {
    GapMask::load(path).map_err(|e| e.context(path.display().to_string()))
}

fn band_path(path: &Path, band: usize) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_band{band}.{}", ext.to_string_lossy()),
        None => format!("{stem}_band{band}"),
    };
    path.with_file_name(name)
}

fn run(command: Command) -> Result<i32> {
    match command {
        Command::Mask {
            height,
            width,
            fraction,
            max_width,
            geometry,
            phase,
            seed,
            out,
        } => {
            let phase = phase.unwrap_or_else(|| {
                seed.map_or(0, |s| {
                    (crate::seed::derive(s, 0) % geometry.period.max(1) as u64) as i64
                })
            });
            let geometry = geometry.geometry(phase);
            let mask = match (fraction, max_width) {
                (Some(f), _) => mask_for_fraction(height, width, f, geometry)?,
                (None, Some(w)) => crate::mask::slc_wedge_mask(
                    height,
                    width,
                    geometry.period,
                    w,
                    phase,
                    geometry.slope,
                )?,
                (None, None) => unreachable!("clap requires one of the two"),
            };
            mask.save(&out)?;
            println!("corruption {:.4}", corruption_fraction(&mask));
        }
        Command::Corrupt {
            input,
            mask,
            fill,
            out,
        } => {
            let r = read(&input)?;
            let m = read_mask(&mask)?;
            write_raster(&apply_mask(&r, &m, fill)?, &out)?;
        }
        Command::Restore {
            input,
            mask,
            config,
            mode,
            output_mode,
            seed,
            num_iter,
            out,
            trace,
        } => {
            let job = RestorationJob {
                corrupted: read(&input)?,
                mask: read_mask(&mask)?,
                config: load_config(config.as_deref(), num_iter)?,
                mode: match mode {
                    ModeArg::PerBand => Mode::PerBand,
                    ModeArg::Composite => Mode::Composite,
                },
                output_mode: match output_mode {
                    OutputArg::Full => OutputMode::Full,
                    OutputArg::Splice => OutputMode::Splice,
                },
                seed,
            };
            let result = restore(&job)?;
            write_raster(&result.raster, &out)?;
            for (i, t) in result.traces.iter().enumerate() {
                for &(it, secs) in &t.checkpoints {
                    eprintln!(
                        "optimization {}: iteration {it}, loss {:.6e}, {secs:.1}s",
                        i + 1,
                        t.losses[it - 1]
                    );
                }
            }
            if let Some(path) = trace {
                match result.traces.as_slice() {
                    [t] => t.to_csv().save(&path)?,
                    traces => {
                        for (b, t) in traces.iter().enumerate() {
                            t.to_csv().save(band_path(&path, b + 1))?;
                        }
                    }
                }
            }
        }
        Command::Eval {
            pred,
            truth,
            mask,
            out_csv,
            similarity_out,
            baselines_csv,
        } => {
            let (p, t, m) = (read(&pred)?, read(&truth)?, read_mask(&mask)?);
            let report = evaluate(&p, &t, &m)?;
            report.to_csv().save(&out_csv)?;
            for b in &report.bands {
                let h = b.region(Region::Hidden);
                println!(
                    "{}: hidden rmse {} r2 {}",
                    b.name,
                    h.rmse.map_or("n/a".into(), |v| format!("{v:.4}")),
                    h.r2.map_or("n/a".into(), |v| format!("{v:.4}"))
                );
            }
            if let Some(path) = similarity_out {
                write_raster(&similarity_map(&p, &t)?, &path)?;
            }
            if let Some(path) = baselines_csv {
                let cmp = compare_to_baselines(&report)?;
                print!("{}", cmp.to_text());
                cmp.to_csv().save(&path)?;
            }
        }
        Command::Sweep {
            input,
            fractions,
            seeds,
            config,
            num_iter,
            geometry,
            phase,
            out_csv,
            summary_csv,
        } => {
            let truth = read(&input)?;
            let config = load_config(config.as_deref(), num_iter)?;
            let table = corruption_sweep(
                &truth,
                &fractions,
                &config,
                &seeds,
                geometry.geometry(phase),
            )?;
            table.rows_csv().save(&out_csv)?;
            if let Some(path) = summary_csv {
                table.summary_csv().save(&path)?;
            }
            for s in &table.summary {
                println!(
                    "fraction {}: median hidden r2 {}",
                    s.fraction,
                    s.r2_med.map_or("n/a".into(), |v| format!("{v:.4}"))
                );
            }
        }
        Command::Compare {
            input,
            mask,
            config,
            num_iter,
            seeds,
            out_csv,
        } => {
            let truth = read(&input)?;
            let m = read_mask(&mask)?;
            let config = load_config(config.as_deref(), num_iter)?;
            let cmp = run_separate_vs_composite(&truth, &m, &config, &seeds)?;
            cmp.to_csv().save(&out_csv)?;
            for mode in [Mode::PerBand, Mode::Composite] {
                println!(
                    "{}: median band-mean hidden r2 {}",
                    mode.label(),
                    cmp.median_mean_r2(mode)
                        .map_or("n/a".into(), |v| format!("{v:.4}"))
                );
            }
        }
        Command::Synth {
            bands,
            height,
            width,
            bumps,
            seed,
            out,
        } => {
            write_raster(&gaussian_bumps(bands, height, width, bumps, seed)?, &out)?;
        }
        Command::Selftest => {
            let report = run_selftest()?;
            print!("{}", report.to_text());
            return Ok(if report.passed() { 0 } else { 3 });
        }
    }
    Ok(0)
}
