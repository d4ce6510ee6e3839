//! Two-component fits of measured spectra against a normalized basis pair,
//! field-sweep coefficient tables, and the scaling factor `f(B1; B2)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Flagged, Result, Warning};
use crate::spectrum::{self, BasisPair, Spectrum};

/// Smallest angle (radians) between basis vectors accepted as independent.
pub const MIN_BASIS_ANGLE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    /// Least squares with `c0, cminus >= 0`.
    #[default]
    NonNegative,
    /// Plain least squares; coefficients may come out negative.
    Unconstrained,
}

/// `s ≈ c0·Ŝ₀ + cminus·Ŝ₋`, with `residual` the RMS misfit per sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoefficientFit {
    pub c0: f64,
    pub cminus: f64,
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rms_residual(s: &[f64], a: &[f64], b: &[f64], c0: f64, cm: f64) -> f64 {
    let ss: f64 = s
        .iter()
        .zip(a.iter().zip(b))
        .map(|(&y, (&p, &q))| {
            let r = y - c0 * p - cm * q;
            r * r
        })
        .sum();
    (ss / s.len() as f64).sqrt()
}

/// Nonnegative least-squares fit of `s` on the basis pair.
pub fn fit_coefficients(s: &Spectrum, basis: &BasisPair) -> Result<CoefficientFit> {
    fit_coefficients_with(s, basis, FitMode::NonNegative)
}

/// Two-variable least squares via the 2×2 normal equations. In
/// [`FitMode::NonNegative`], an infeasible unconstrained optimum is replaced
/// by the best of the two single-coefficient boundary solutions.
pub fn fit_coefficients_with(
    s: &Spectrum,
    basis: &BasisPair,
    mode: FitMode,
) -> Result<CoefficientFit> {
    if !s.same_grid(basis.s0()) {
        return Err(Error::GridMismatch(
            "spectrum and basis are on different grids; resample first".into(),
        ));
    }
    let y = s.intensities();
    let a = basis.s0().intensities();
    let b = basis.sminus().intensities();

    let aa = dot(a, a);
    let bb = dot(b, b);
    let ab = dot(a, b);
    let det = aa * bb - ab * ab;
    let sin2 = if aa > 0.0 && bb > 0.0 {
        (det / (aa * bb)).max(0.0)
    } else {
        0.0
    };
    if sin2.sqrt().asin() <= MIN_BASIS_ANGLE {
        return Err(Error::Identifiability(
            "basis spectra are (nearly) collinear".into(),
        ));
    }

    let ay = dot(a, y);
    let by = dot(b, y);
    let c0 = (bb * ay - ab * by) / det;
    let cm = (aa * by - ab * ay) / det;

    if mode == FitMode::Unconstrained || (c0 >= 0.0 && cm >= 0.0) {
        return Ok(CoefficientFit {
            c0,
            cminus: cm,
            residual: rms_residual(y, a, b, c0, cm),
        });
    }

    // Boundary candidates: one coefficient pinned at zero, the other projected.
    let candidates = [((ay / aa).max(0.0), 0.0), (0.0, (by / bb).max(0.0))];
    let best = candidates
        .into_iter()
        .map(|(p, q)| CoefficientFit {
            c0: p,
            cminus: q,
            residual: rms_residual(y, a, b, p, q),
        })
        .min_by(|x, y| x.residual.total_cmp(&y.residual))
        .expect("two candidates");
    Ok(best)
}

/// Spectra measured at a sequence of field strengths (gauss), ascending.
#[derive(Debug, Clone)]
pub struct FieldSeries {
    entries: Vec<(f64, Spectrum)>,
}

impl FieldSeries {
    /// Sorts by field and resamples every spectrum onto the grid of the
    /// lowest-field entry.
    pub fn new(mut entries: Vec<(f64, Spectrum)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::validation("field series is empty"));
        }
        if let Some((b, _)) = entries.iter().find(|(b, _)| !(*b > 0.0 && b.is_finite())) {
            return Err(Error::validation(format!("field {b} G is not positive")));
        }
        entries.sort_by(|x, y| x.0.total_cmp(&y.0));
        if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::validation(format!("duplicate field {} G", w[0].0)));
        }
        let grid = entries[0].1.wavelengths().to_vec();
        for e in entries.iter_mut().skip(1) {
            if e.1.wavelengths() != grid.as_slice() {
                e.1 = spectrum::resample(&e.1, &grid)?;
            }
        }
        Ok(FieldSeries { entries })
    }

    pub fn entries(&self) -> &[(f64, Spectrum)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub b_gauss: f64,
    pub c0: f64,
    pub cminus: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CoefficientTable {
    pub rows: Vec<CoefficientRow>,
}

impl CoefficientTable {
    pub fn from_rows(rows: Vec<CoefficientRow>) -> Self {
        CoefficientTable { rows }
    }
}

/// Fits every spectrum in the series; row order follows the series.
pub fn fit_series(
    series: &FieldSeries,
    basis: &BasisPair,
    mode: FitMode,
) -> Result<CoefficientTable> {
    if series.is_empty() {
        return Err(Error::validation("field series is empty"));
    }
    let rows = series
        .entries()
        .par_iter()
        .map(|(b, s)| {
            let s = if s.same_grid(basis.s0()) {
                s.clone()
            } else {
                spectrum::resample(s, basis.grid())?
            };
            let fit = fit_coefficients_with(&s, basis, mode)?;
            Ok(CoefficientRow {
                b_gauss: *b,
                c0: fit.c0,
                cminus: fit.cminus,
                residual: fit.residual,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CoefficientTable { rows })
}

fn flag_nonphysical(f: f64) -> Flagged<f64> {
    if f > 0.0 {
        Flagged::clean(f)
    } else {
        Flagged::with(f, vec![Warning::NonPhysical { f }])
    }
}

/// Scaling factor for a field change B1 → B2 from both charge-state
/// coefficients: `cm_1 / (c0_1 + cm_1 - c0_2 - cm_2)`.
pub fn f_general(c0_1: f64, cm_1: f64, c0_2: f64, cm_2: f64) -> Result<Flagged<f64>> {
    if ![c0_1, cm_1, c0_2, cm_2].iter().all(|v| v.is_finite()) {
        return Err(Error::validation("coefficients must be finite"));
    }
    // Grouped so that equal c0 values cancel exactly and the result matches f_reduced.
    let den = (cm_1 - cm_2) + (c0_1 - c0_2);
    if den == 0.0 {
        return Err(Error::Singularity(
            "total PL identical at both fields; f undefined".into(),
        ));
    }
    Ok(flag_nonphysical(cm_1 / den))
}

/// Scaling factor when the NV⁰ coefficient does not change with field:
/// `cm_1 / (cm_1 - cm_2)`.
pub fn f_reduced(cm_1: f64, cm_2: f64) -> Result<Flagged<f64>> {
    if !(cm_1.is_finite() && cm_2.is_finite()) {
        return Err(Error::validation("coefficients must be finite"));
    }
    let den = cm_1 - cm_2;
    if den == 0.0 {
        return Err(Error::Singularity(
            "NV- coefficient unchanged; f undefined".into(),
        ));
    }
    Ok(flag_nonphysical(cm_1 / den))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FPoint {
    pub b1: f64,
    pub b2: f64,
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FSurface {
    pub points: Vec<FPoint>,
    /// Pairs skipped because `f` was undefined there.
    pub singular: Vec<(f64, f64)>,
}

/// Closed field ranges for the two ends of a field change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldRanges {
    pub b1: (f64, f64),
    pub b2: (f64, f64),
}

impl Default for FieldRanges {
    /// B1 in 170–550 G, B2 in 248–975 G.
    fn default() -> Self {
        FieldRanges {
            b1: (170.0, 550.0),
            b2: (248.0, 975.0),
        }
    }
}

impl FieldRanges {
    pub fn unbounded() -> Self {
        FieldRanges {
            b1: (f64::NEG_INFINITY, f64::INFINITY),
            b2: (f64::NEG_INFINITY, f64::INFINITY),
        }
    }
}

/// `f_reduced` for every row pair with `b2 > b1`.
pub fn f_surface(table: &CoefficientTable) -> Result<FSurface> {
    f_surface_in(table, &FieldRanges::unbounded())
}

pub fn f_surface_in(table: &CoefficientTable, ranges: &FieldRanges) -> Result<FSurface> {
    if table.rows.len() < 2 {
        return Err(Error::validation("f surface needs at least 2 rows"));
    }
    let within = |v: f64, r: (f64, f64)| r.0 <= v && v <= r.1;
    let mut out = FSurface::default();
    for r1 in &table.rows {
        if !within(r1.b_gauss, ranges.b1) {
            continue;
        }
        for r2 in &table.rows {
            if r2.b_gauss <= r1.b_gauss || !within(r2.b_gauss, ranges.b2) {
                continue;
            }
            match f_reduced(r1.cminus, r2.cminus) {
                Ok(f) => out.points.push(FPoint {
                    b1: r1.b_gauss,
                    b2: r2.b_gauss,
                    f: f.value,
                }),
                Err(Error::Singularity(_)) => out.singular.push((r1.b_gauss, r2.b_gauss)),
                Err(e) => return Err(e),
            }
        }
    }
    Ok(out)
}

/// Field of minimum NV⁻ coefficient, i.e. full spin mixing.
///
/// Ties go to the lowest field. A minimum on either end of the sweep is not
/// bracketed and is reported as [`Error::NoMinimum`]; a completely flat
/// column returns the lowest field with [`Warning::Flat`]. With `refine`, the
/// minimum is moved to the vertex of the parabola through it and its two
/// neighbours.
pub fn find_full_mixing_field(table: &CoefficientTable, refine: bool) -> Result<Flagged<f64>> {
    let rows = &table.rows;
    if rows.len() < 3 {
        return Err(Error::validation(
            "need at least 3 rows to locate a minimum",
        ));
    }
    let first = rows[0].cminus;
    if rows.iter().all(|r| r.cminus == first) {
        return Ok(Flagged::with(rows[0].b_gauss, vec![Warning::Flat]));
    }
    let mut k = 0;
    for (i, r) in rows.iter().enumerate() {
        if r.cminus < rows[k].cminus {
            k = i;
        }
    }
    if k == 0 || k == rows.len() - 1 {
        return Err(Error::NoMinimum(format!(
            "NV- coefficient is smallest at the sweep edge ({} G)",
            rows[k].b_gauss
        )));
    }
    if !refine {
        return Ok(Flagged::clean(rows[k].b_gauss));
    }
    let (x0, y0) = (rows[k - 1].b_gauss, rows[k - 1].cminus);
    let (x1, y1) = (rows[k].b_gauss, rows[k].cminus);
    let (x2, y2) = (rows[k + 1].b_gauss, rows[k + 1].cminus);
    let num = (x1 - x0).powi(2) * (y1 - y2) - (x1 - x2).powi(2) * (y1 - y0);
    let den = (x1 - x0) * (y1 - y2) - (x1 - x2) * (y1 - y0);
    let vertex = if den != 0.0 { x1 - 0.5 * num / den } else { x1 };
    Ok(Flagged::clean(vertex.clamp(x0, x2)))
}
