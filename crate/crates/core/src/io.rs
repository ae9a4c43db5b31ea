//! Raster files and CSV reports.
//!
//! SRF layout: the line `SRF1`, then `bands=<n>`, `height=<h>`, `width=<w>`,
//! `names=<comma list>` and, only when set, `nodata=<v>`, each ending in `\n`;
//! a blank line; then `bands·height·width` little-endian `f64`, band-major and
//! row-major.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::{default_band_names, Raster};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasterFormat {
    Srf,
    Pgm,
    Ppm,
}

impl RasterFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        match ext.as_deref() {
            Some("srf") => Ok(Self::Srf),
            Some("pgm") => Ok(Self::Pgm),
            Some("ppm") => Ok(Self::Ppm),
            _ => Err(Error::Format(format!(
                "cannot infer raster format of {} (expected .srf, .pgm or .ppm)",
                path.display()
            ))),
        }
    }
}

/// Writes through a temporary file in the destination directory, then renames.
pub fn write_atomic(
    path: &Path,
    write: impl FnOnce(&mut BufWriter<&mut File>) -> std::io::Result<()>,
) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        write(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn read_raster(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    match RasterFormat::from_path(path)? {
        RasterFormat::Srf => decode_srf(&bytes),
        RasterFormat::Pgm | RasterFormat::Ppm => decode_pnm(&bytes),
    }
}

pub fn write_raster(r: &Raster, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = match RasterFormat::from_path(path)? {
        RasterFormat::Srf => encode_srf(r)?,
        RasterFormat::Pgm => encode_pnm(r, 1)?,
        RasterFormat::Ppm => encode_pnm(r, 3)?,
    };
    write_atomic(path, |w| w.write_all(&bytes))
}

pub fn encode_srf(r: &Raster) -> Result<Vec<u8>> {
    if let Some(bad) = r
        .names()
        .iter()
        .find(|n| n.contains([',', '\n', '\r']) || n.is_empty())
    {
        return Err(Error::Format(format!(
            "band name {bad:?} cannot be stored in SRF"
        )));
    }
    let mut out = format!(
        "SRF1\nbands={}\nheight={}\nwidth={}\nnames={}\n",
        r.bands(),
        r.height(),
        r.width(),
        r.names().join(",")
    );
    if let Some(nd) = r.nodata {
        out.push_str(&format!("nodata={nd:?}\n"));
    }
    out.push('\n');
    let mut bytes = out.into_bytes();
    bytes.reserve(r.data().len() * 8);
    for v in r.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    Ok(bytes)
}

pub fn decode_srf(bytes: &[u8]) -> Result<Raster> {
    let mut pos = 0;
    let line = |pos: &mut usize| -> Result<(usize, &str)> {
        let start = *pos;
        let end = bytes[start..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|e| start + e)
            .ok_or_else(|| Error::parse(start, "unterminated header line"))?;
        *pos = end + 1;
        let text = std::str::from_utf8(&bytes[start..end])
            .map_err(|_| Error::parse(start, "header is not UTF-8"))?;
        Ok((start, text))
    };
    let (_, magic) = line(&mut pos).map_err(|_| Error::parse(0, "missing SRF1 magic"))?;
    if magic != "SRF1" {
        return Err(Error::parse(0, "bad magic, expected SRF1"));
    }
    let (mut bands, mut height, mut width) = (None, None, None);
    let mut names: Option<Vec<String>> = None;
    let mut nodata = None;
    loop {
        let (at, text) = line(&mut pos)?;
        if text.is_empty() {
            break;
        }
        let (key, value) = text
            .split_once('=')
            .ok_or_else(|| Error::parse(at, format!("expected key=value, got {text:?}")))?;
        let num = |v: &str| -> Result<usize> {
            v.parse()
                .map_err(|_| Error::parse(at, format!("bad {key} value {v:?}")))
        };
        match key {
            "bands" => bands = Some(num(value)?),
            "height" => height = Some(num(value)?),
            "width" => width = Some(num(value)?),
            "names" => names = Some(value.split(',').map(str::to_string).collect()),
            "nodata" => {
                nodata = Some(
                    value
                        .parse::<f64>()
                        .map_err(|_| Error::parse(at, format!("bad nodata {value:?}")))?,
                )
            }
            _ => return Err(Error::parse(at, format!("unknown header key {key:?}"))),
        }
    }
    let header_end = pos;
    let missing = |k: &str| Error::parse(header_end, format!("header lacks {k}"));
    let bands = bands.ok_or_else(|| missing("bands"))?;
    let height = height.ok_or_else(|| missing("height"))?;
    let width = width.ok_or_else(|| missing("width"))?;
    let names = names.unwrap_or_else(|| default_band_names(bands));
    if names.len() != bands {
        return Err(Error::parse(
            header_end,
            format!("{} names for {bands} bands", names.len()),
        ));
    }
    let count = bands
        .checked_mul(height)
        .and_then(|n| n.checked_mul(width))
        .ok_or_else(|| Error::parse(header_end, "raster size overflows"))?;
    let payload = &bytes[header_end..];
    if payload.len() != count * 8 {
        let offset = header_end + payload.len().min(count * 8);
        return Err(Error::parse(
            offset,
            format!(
                "payload has {} bytes, header implies {}",
                payload.len(),
                count * 8
            ),
        ));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let mut r = Raster::new(names, height, width, data)
        .map_err(|e| Error::parse(header_end, e.to_string()))?;
    r.nodata = nodata;
    Ok(r)
}

/// Reads `P2`/`P5` (one band) and `P3`/`P6` (three bands), scaling by maxval.
pub fn decode_pnm(bytes: &[u8]) -> Result<Raster> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(Error::parse(0, "missing PNM magic"));
    }
    let (bands, raw) = match bytes[1] {
        b'2' => (1, false),
        b'3' => (3, false),
        b'5' => (1, true),
        b'6' => (3, true),
        _ => return Err(Error::parse(1, "unsupported PNM variant")),
    };
    let mut pos = 2;
    let mut header = [0usize; 3];
    for (i, slot) in header.iter_mut().enumerate() {
        let (at, tok) =
            pnm_token(bytes, &mut pos).ok_or_else(|| Error::parse(pos, "truncated PNM header"))?;
        *slot = tok
            .parse()
            .map_err(|_| Error::parse(at, format!("bad header field {i}: {tok:?}")))?;
    }
    let [width, height, maxval] = header;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::parse(
            pos,
            format!("maxval {maxval} outside 1..=65535"),
        ));
    }
    let count = width * height * bands;
    let mut samples = Vec::with_capacity(count);
    if raw {
        // exactly one whitespace byte separates maxval from the payload
        pos += 1;
        let width_bytes = if maxval > 255 { 2 } else { 1 };
        let need = count * width_bytes;
        if bytes.len() < pos + need {
            return Err(Error::parse(
                bytes.len(),
                format!("payload truncated: need {need} bytes after offset {pos}"),
            ));
        }
        let payload = &bytes[pos..pos + need];
        if width_bytes == 1 {
            samples.extend(payload.iter().map(|&b| b as usize));
        } else {
            samples.extend(
                payload
                    .chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]) as usize),
            );
        }
    } else {
        while samples.len() < count {
            let (at, tok) = pnm_token(bytes, &mut pos).ok_or_else(|| {
                Error::parse(
                    bytes.len(),
                    format!("truncated: {} of {count} samples", samples.len()),
                )
            })?;
            let v: usize = tok
                .parse()
                .map_err(|_| Error::parse(at, format!("bad sample {tok:?}")))?;
            samples.push(v);
        }
    }
    if let Some(v) = samples.iter().find(|&&v| v > maxval) {
        return Err(Error::parse(
            pos,
            format!("sample {v} exceeds maxval {maxval}"),
        ));
    }
    // interleaved RGB to band-major
    let plane = width * height;
    let mut data = vec![0.0; count];
    for (i, &s) in samples.iter().enumerate() {
        let (pixel, band) = (i / bands, i % bands);
        data[band * plane + pixel] = s as f64 / maxval as f64;
    }
    let names = if bands == 3 {
        vec!["red".into(), "green".into(), "blue".into()]
    } else {
        default_band_names(1)
    };
    Raster::new(names, height, width, data).map_err(|e| Error::parse(pos, e.to_string()))
}

fn pnm_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<(usize, &'a str)> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let tok = std::str::from_utf8(&bytes[start..*pos]).ok()?;
    (start < *pos).then_some((start, tok))
}

/// Raw 8-bit `P5` (one band) or `P6` (three bands); values clamp to `[0, 1]`.
pub fn encode_pnm(r: &Raster, bands: usize) -> Result<Vec<u8>> {
    if r.bands() != bands {
        return Err(Error::Format(format!(
            "{} holds {bands} band(s), raster has {}",
            if bands == 1 { "PGM" } else { "PPM" },
            r.bands()
        )));
    }
    let magic = if bands == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", r.width(), r.height()).into_bytes();
    for p in 0..r.pixels() {
        for b in 0..bands {
            let v = r.band(b)[p].clamp(0.0, 1.0);
            out.push((v * 255.0).round() as u8);
        }
    }
    Ok(out)
}

/// Comma-separated table with a mandatory header row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in &self.rows {
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = self.to_csv_string();
        write_atomic(path.as_ref(), |w| w.write_all(text.as_bytes()))
    }
}

/// Shortest round-trip representation with `.` as decimal separator.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_else(|| "nan".into())
}
