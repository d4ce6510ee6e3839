//! Readers and writers for the on-disk formats.
//!
//! * `spec-csv v1`: optional `#` comment lines, then `wavelength_nm,intensity`
//!   rows with strictly increasing wavelengths. Writers emit `# spec-csv v1`.
//! * `plmap v1`: a JSON sidecar `<stem>.json` holding
//!   `{"format":"plmap","version":1,"width":W,"height":H,"pixel_pitch_um":p}`
//!   and `<stem>.csv` with H rows of W comma-separated values.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so
//! `load(save(x)) == x` bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::basis_fit::{CoefficientTable, FSurface};
use crate::error::{Error, Result};
use crate::filter::TabulatedFilter;
use crate::map::PLMap;
use crate::spectrum::Spectrum;

pub const SPEC_CSV_HEADER: &str = "# spec-csv v1";

/// How loaders treat negative values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NegativePolicy {
    /// Reject with a parse error naming the line.
    #[default]
    Reject,
    /// Replace with zero.
    Clamp,
    /// Keep as is (for computed components and difference spectra).
    Allow,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn parse_f64(field: &str, line: usize, what: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::parse(line, format!("invalid {what} {:?}", field.trim())))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("non-finite {what}")));
    }
    Ok(v)
}

fn check_header_comment(line_no: usize, comment: &str, format: &str, version: &str) -> Result<()> {
    let body = comment.trim_start_matches('#').trim();
    if let Some(rest) = body.strip_prefix(format) {
        let v = rest.trim();
        if v != version {
            return Err(Error::parse(
                line_no,
                format!("unsupported {format} version {v:?}, expected {version}"),
            ));
        }
    }
    Ok(())
}

/// Parses spec-csv text.
pub fn parse_spectrum(text: &str, negatives: NegativePolicy) -> Result<Spectrum> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut seen_data = false;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if seen_data {
                return Err(Error::parse(line_no, "comment after data rows"));
            }
            check_header_comment(line_no, line, "spec-csv", "v1")?;
            continue;
        }
        seen_data = true;
        let mut fields = line.split(',');
        let (Some(w), Some(v), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::parse(line_no, "expected `wavelength_nm,intensity`"));
        };
        let w = parse_f64(w, line_no, "wavelength")?;
        let mut v = parse_f64(v, line_no, "intensity")?;
        if let Some(&prev) = xs.last() {
            if w <= prev {
                return Err(Error::parse(
                    line_no,
                    format!("wavelength {w} not greater than previous {prev}"),
                ));
            }
        }
        if v < 0.0 {
            match negatives {
                NegativePolicy::Reject => {
                    return Err(Error::parse(line_no, format!("negative intensity {v}")))
                }
                NegativePolicy::Clamp => v = 0.0,
                NegativePolicy::Allow => {}
            }
        }
        xs.push(w);
        ys.push(v);
    }
    if xs.len() < 2 {
        return Err(Error::parse(
            text.lines().count().max(1),
            "need at least 2 data rows",
        ));
    }
    Spectrum::new(xs, ys)
}

pub fn format_spectrum(s: &Spectrum) -> String {
    let mut out = String::with_capacity(s.len() * 24 + 16);
    out.push_str(SPEC_CSV_HEADER);
    out.push('\n');
    for (w, v) in s.wavelengths().iter().zip(s.intensities()) {
        let _ = writeln!(out, "{w},{v}");
    }
    out
}

pub fn load_spectrum(path: impl AsRef<Path>, negatives: NegativePolicy) -> Result<Spectrum> {
    parse_spectrum(&read_text(path.as_ref())?, negatives)
}

pub fn save_spectrum(path: impl AsRef<Path>, s: &Spectrum) -> Result<()> {
    write_text(path.as_ref(), &format_spectrum(s))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PlmapSidecar {
    format: String,
    version: u32,
    width: usize,
    height: usize,
    pixel_pitch_um: f64,
}

/// `(sidecar, csv)` paths for a map given either file or the bare stem.
pub fn plmap_paths(path: impl AsRef<Path>) -> (PathBuf, PathBuf) {
    let p = path.as_ref();
    match p.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("csv") => (p.with_extension("json"), p.with_extension("csv")),
        _ => {
            let mut json = p.as_os_str().to_owned();
            json.push(".json");
            let mut csv = p.as_os_str().to_owned();
            csv.push(".csv");
            (PathBuf::from(json), PathBuf::from(csv))
        }
    }
}

/// Parses a plmap from its sidecar JSON and CSV body.
pub fn parse_map(sidecar: &str, body: &str, negatives: NegativePolicy) -> Result<PLMap> {
    let meta: PlmapSidecar = serde_json::from_str(sidecar)
        .map_err(|e| Error::parse(e.line(), format!("sidecar: {e}")))?;
    if meta.format != "plmap" || meta.version != 1 {
        return Err(Error::parse(
            1,
            format!(
                "unsupported format {:?} version {}",
                meta.format, meta.version
            ),
        ));
    }
    let mut values = Vec::with_capacity(meta.width * meta.height);
    let mut rows = 0;
    for (i, raw) in body.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        rows += 1;
        if rows > meta.height {
            return Err(Error::parse(
                line_no,
                format!("more than {} rows", meta.height),
            ));
        }
        let before = values.len();
        for cell in line.split(',') {
            let mut v = parse_f64(cell, line_no, "value")?;
            if v < 0.0 {
                match negatives {
                    NegativePolicy::Reject => {
                        return Err(Error::parse(line_no, format!("negative value {v}")))
                    }
                    NegativePolicy::Clamp => v = 0.0,
                    NegativePolicy::Allow => {}
                }
            }
            values.push(v);
        }
        let n = values.len() - before;
        if n != meta.width {
            return Err(Error::parse(
                line_no,
                format!("{n} cells, expected width {}", meta.width),
            ));
        }
    }
    if rows != meta.height {
        return Err(Error::parse(
            body.lines().count().max(1),
            format!("{rows} rows, expected height {}", meta.height),
        ));
    }
    PLMap::new(meta.width, meta.height, meta.pixel_pitch_um, values)
        .map_err(|e| Error::parse(1, e.to_string()))
}

pub fn format_map(m: &PLMap) -> (String, String) {
    let meta = PlmapSidecar {
        format: "plmap".into(),
        version: 1,
        width: m.width(),
        height: m.height(),
        pixel_pitch_um: m.pixel_pitch(),
    };
    let sidecar = serde_json::to_string(&meta).expect("sidecar serializes") + "\n";
    let mut body = String::with_capacity(m.values().len() * 20);
    for row in m.values().chunks(m.width()) {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                body.push(',');
            }
            let _ = write!(body, "{v}");
        }
        body.push('\n');
    }
    (sidecar, body)
}

pub fn load_map(path: impl AsRef<Path>, negatives: NegativePolicy) -> Result<PLMap> {
    let (json, csv) = plmap_paths(path);
    parse_map(&read_text(&json)?, &read_text(&csv)?, negatives)
}

/// Writes both files; returns `(sidecar, csv)` paths.
pub fn save_map(path: impl AsRef<Path>, m: &PLMap) -> Result<(PathBuf, PathBuf)> {
    let (json, csv) = plmap_paths(path);
    let (sidecar, body) = format_map(m);
    write_text(&json, &sidecar)?;
    write_text(&csv, &body)?;
    Ok((json, csv))
}

/// Filter datasheet CSV: `wavelength_nm,transmission` rows, `#` comments.
pub fn parse_filter_table(text: &str) -> Result<TabulatedFilter> {
    let s = parse_spectrum(text, NegativePolicy::Reject)?;
    let (w, v) = s.into_parts();
    TabulatedFilter::new(w, v)
}

pub fn load_filter_table(path: impl AsRef<Path>) -> Result<TabulatedFilter> {
    parse_filter_table(&read_text(path.as_ref())?)
}

/// One field-sweep entry; `path` is relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub b_field_gauss: f64,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum ManifestDoc {
    Wrapped { entries: Vec<ManifestEntry> },
    Bare(Vec<ManifestEntry>),
}

/// Reads a sweep manifest, either `[{...}]` or `{"entries":[{...}]}`, and
/// resolves entry paths against the manifest location.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let doc: ManifestDoc = serde_json::from_str(&read_text(path)?)
        .map_err(|e| Error::parse(e.line(), format!("manifest: {e}")))?;
    let entries = match doc {
        ManifestDoc::Wrapped { entries } | ManifestDoc::Bare(entries) => entries,
    };
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    Ok(entries
        .into_iter()
        .map(|e| ManifestEntry {
            b_field_gauss: e.b_field_gauss,
            path: if e.path.is_absolute() {
                e.path
            } else {
                base.join(e.path)
            },
        })
        .collect())
}

pub fn format_manifest(entries: &[ManifestEntry]) -> String {
    #[derive(Serialize)]
    struct Doc<'a> {
        entries: &'a [ManifestEntry],
    }
    serde_json::to_string_pretty(&Doc { entries }).expect("manifest serializes") + "\n"
}

/// `b_gauss,c0,cminus,residual`
pub fn format_coefficients(t: &CoefficientTable) -> String {
    let mut out = String::from("b_gauss,c0,cminus,residual\n");
    for r in &t.rows {
        let _ = writeln!(out, "{},{},{},{}", r.b_gauss, r.c0, r.cminus, r.residual);
    }
    out
}

/// `b1,b2,f`
pub fn format_f_surface(s: &FSurface) -> String {
    let mut out = String::from("b1,b2,f\n");
    for p in &s.points {
        let _ = writeln!(out, "{},{},{}", p.b1, p.b2, p.f);
    }
    out
}

/// Rounds to `digits` significant digits for human-readable output.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 {
            format!("{:.*}", digits.saturating_sub(1), 0.0)
        } else {
            x.to_string()
        };
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = digits as i32 - 1 - mag;
    if decimals >= 0 && mag > -5 {
        format!("{:.*}", decimals as usize, x)
    } else if decimals < 0 && mag < 15 {
        let p = 10f64.powi(-decimals);
        format!("{}", (x / p).round() * p)
    } else {
        format!("{:.*e}", digits.saturating_sub(1), x)
    }
}
