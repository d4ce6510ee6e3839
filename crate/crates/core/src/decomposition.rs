//! Magnetic-field difference decomposition of a low-field spectrum into its
//! NV⁰ and NV⁻ parts.
//!
//! A field that enhances spin mixing lowers only the NV⁻ emission, so
//! `diff = lowB - highB` is a pure (scaled-down) NV⁻ spectrum. The full NV⁻
//! contribution is `f * diff` for a wavelength-independent `f`, and the
//! NV⁰ part is what remains. `f` is chosen so the NV⁰ estimate shows no
//! residual NV⁻ zero-phonon line at 637 nm; the residual is scored by
//! [`zpl_artifact`], an L1 distance to a straight baseline across the line.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Warning};
use crate::spectrum::{self, Spectrum, WavelengthWindow};

/// Window geometry for scoring a zero-phonon-line feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZplArtifactConfig {
    pub center: f64,
    pub inner_lo: f64,
    pub inner_hi: f64,
    pub edge_width: f64,
}

impl Default for ZplArtifactConfig {
    /// NV⁻ line at 637 nm, inner window [630, 644], 4 nm edge bands.
    fn default() -> Self {
        ZplArtifactConfig {
            center: 637.0,
            inner_lo: 630.0,
            inner_hi: 644.0,
            edge_width: 4.0,
        }
    }
}

impl ZplArtifactConfig {
    /// NV⁰ line at 575 nm, same geometry as the default.
    pub fn nv0() -> Self {
        ZplArtifactConfig {
            center: 575.0,
            inner_lo: 568.0,
            inner_hi: 582.0,
            edge_width: 4.0,
        }
    }

    pub fn inner(&self) -> Result<WavelengthWindow> {
        WavelengthWindow::new(self.inner_lo, self.inner_hi)
    }

    fn left_band(&self) -> Result<WavelengthWindow> {
        WavelengthWindow::new(self.inner_lo - self.edge_width, self.inner_lo)
    }

    fn right_band(&self) -> Result<WavelengthWindow> {
        WavelengthWindow::new(self.inner_hi, self.inner_hi + self.edge_width)
    }

    pub fn validate(&self) -> Result<()> {
        let inner = self.inner()?;
        if !inner.contains(self.center) {
            return Err(Error::validation(format!(
                "ZPL center {} outside inner window [{}, {}]",
                self.center, self.inner_lo, self.inner_hi
            )));
        }
        if !(self.edge_width > 0.0 && self.edge_width.is_finite()) {
            return Err(Error::validation("edge width must be positive"));
        }
        Ok(())
    }

    /// Full span `[inner_lo - edge, inner_hi + edge]` touched by the metric.
    pub fn span(&self) -> Result<WavelengthWindow> {
        WavelengthWindow::new(
            self.inner_lo - self.edge_width,
            self.inner_hi + self.edge_width,
        )
    }
}

/// Bracket and resolution of the scaling-factor search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FSearch {
    pub f_min: f64,
    pub f_max: f64,
    pub coarse_steps: usize,
    pub tolerance: f64,
}

impl Default for FSearch {
    fn default() -> Self {
        FSearch {
            f_min: 1.0,
            f_max: 50.0,
            coarse_steps: 200,
            tolerance: 1e-4,
        }
    }
}

/// Threshold on the NV⁰ line score above which the difference spectrum is
/// considered contaminated by an NV⁰ change.
pub const NV0_SCORE_THRESHOLD: f64 = 0.005;

/// The samples of one spectrum that the ZPL metric reads. The metric is
/// linear in the spectrum before the absolute value, so a combination
/// `a - f*b` can be scored from the two precomputed sample sets.
#[derive(Debug, Clone)]
struct ZplSamples {
    xs: Vec<f64>,
    /// Inner-window samples minus the edge-band baseline.
    detrended: Vec<f64>,
}

impl ZplSamples {
    fn new(s: &Spectrum, cfg: &ZplArtifactConfig) -> Result<Self> {
        cfg.validate()?;
        let left = cfg.left_band()?;
        let right = cfg.right_band()?;
        let mean_left = spectrum::area(s, left)? / left.width();
        let mean_right = spectrum::area(s, right)? / right.width();
        let x_left = 0.5 * (left.lo() + left.hi());
        let x_right = 0.5 * (right.lo() + right.hi());
        let slope = (mean_right - mean_left) / (x_right - x_left);
        let (xs, ys) = spectrum::window_samples(s, cfg.inner()?)?;
        let detrended = xs
            .iter()
            .zip(&ys)
            .map(|(&x, &y)| y - (mean_left + slope * (x - x_left)))
            .collect();
        Ok(ZplSamples { xs, detrended })
    }

    /// Metric of `self - f * other`; both must come from the same grid.
    fn combined(&self, other: &ZplSamples, f: f64) -> f64 {
        let r: Vec<f64> = self
            .detrended
            .iter()
            .zip(&other.detrended)
            .map(|(a, b)| (a - f * b).abs())
            .collect();
        spectrum::trapezoid(&self.xs, &r)
    }

    fn alone(&self) -> f64 {
        let r: Vec<f64> = self.detrended.iter().map(|v| v.abs()).collect();
        spectrum::trapezoid(&self.xs, &r)
    }
}

/// L1 distance between `candidate` and the straight line joining the mean
/// intensities of the two edge bands, integrated over the inner window.
///
/// Zero exactly when the candidate is that line across the inner window, and
/// blind to the sign of the feature.
pub fn zpl_artifact(candidate: &Spectrum, cfg: &ZplArtifactConfig) -> Result<f64> {
    Ok(ZplSamples::new(candidate, cfg)?.alone())
}

/// Difference spectrum together with the NV⁰ line check.
#[derive(Debug, Clone)]
pub struct DiffSpectrum {
    pub diff: Spectrum,
    /// Fraction of the low-field NV⁰ line feature that survives in `diff`.
    /// `None` when the grid does not cover the NV⁰ window.
    pub nv0_zpl_score: Option<f64>,
    pub warnings: Vec<Warning>,
}

/// `lowB - highB`, plus a score for any NV⁰ zero-phonon line left in the
/// difference. A score above [`NV0_SCORE_THRESHOLD`] attaches a
/// [`Warning::ModelViolation`].
pub fn compute_diff(low: &Spectrum, high: &Spectrum) -> Result<DiffSpectrum> {
    compute_diff_with(low, high, &ZplArtifactConfig::nv0(), NV0_SCORE_THRESHOLD)
}

pub fn compute_diff_with(
    low: &Spectrum,
    high: &Spectrum,
    nv0_cfg: &ZplArtifactConfig,
    threshold: f64,
) -> Result<DiffSpectrum> {
    let diff = spectrum::subtract(low, high)?;
    let nv0_zpl_score = match (zpl_artifact(&diff, nv0_cfg), zpl_artifact(low, nv0_cfg)) {
        (Ok(in_diff), Ok(in_low)) => Some(if in_diff == 0.0 {
            0.0
        } else {
            in_diff / in_low
        }),
        (Err(Error::Range(_)), _) | (_, Err(Error::Range(_))) => None,
        (Err(e), _) | (_, Err(e)) => return Err(e),
    };
    let mut warnings = Vec::new();
    if let Some(score) = nv0_zpl_score {
        if !(score <= threshold) {
            warnings.push(Warning::ModelViolation {
                nv0_zpl_score: score,
                threshold,
            });
        }
    }
    Ok(DiffSpectrum {
        diff,
        nv0_zpl_score,
        warnings,
    })
}

/// Optimal scaling factor and the metric there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FOptimum {
    pub f: f64,
    pub zpl_metric: f64,
}

/// Finds the `f` minimizing `zpl_artifact(low - f*diff)`.
///
/// The metric is convex and piecewise-linear in `f`, so a coarse scan
/// locates the basin and golden-section search refines it to
/// `search.tolerance`.
pub fn optimize_f(
    low: &Spectrum,
    diff: &Spectrum,
    cfg: &ZplArtifactConfig,
    search: &FSearch,
) -> Result<FOptimum> {
    if !low.same_grid(diff) {
        return Err(Error::GridMismatch(
            "low-field and difference spectra differ in grid".into(),
        ));
    }
    if !(search.f_min > 0.0 && search.f_max > search.f_min && search.f_max.is_finite()) {
        return Err(Error::validation(format!(
            "invalid f range [{}, {}]",
            search.f_min, search.f_max
        )));
    }
    if search.coarse_steps < 2 || !(search.tolerance > 0.0) {
        return Err(Error::validation(
            "need >= 2 coarse steps and a positive tolerance",
        ));
    }

    let inner = cfg.inner()?;
    let diff_area = spectrum::area(diff, inner)?;
    let low_samples = ZplSamples::new(low, cfg)?;
    let diff_samples = ZplSamples::new(diff, cfg)?;
    let feature = diff_samples.alone();
    let scale: f64 = {
        let (xs, ys) = spectrum::window_samples(diff, inner)?;
        let abs: Vec<f64> = ys.iter().map(|v| v.abs()).collect();
        spectrum::trapezoid(&xs, &abs)
    };
    if !(diff_area > 0.0) || !(feature > 1e-12 * scale) {
        return Err(Error::Identifiability(format!(
            "difference spectrum has no usable feature at {} nm (area {diff_area}, feature {feature})",
            cfg.center
        )));
    }

    let metric = |f: f64| low_samples.combined(&diff_samples, f);

    let n = search.coarse_steps;
    let step = (search.f_max - search.f_min) / n as f64;
    let at = |k: usize| search.f_min + k as f64 * step;
    let (mut best_k, mut best_j) = (0, metric(at(0)));
    for k in 1..=n {
        let j = metric(at(k));
        if j < best_j {
            best_k = k;
            best_j = j;
        }
    }

    let lo = at(best_k.saturating_sub(1));
    let hi = at((best_k + 1).min(n));
    let (f, j) = golden_section(&metric, lo, hi, search.tolerance);
    let (f, zpl_metric) = if j <= best_j {
        (f, j)
    } else {
        (at(best_k), best_j)
    };
    if !zpl_metric.is_finite() {
        return Err(Error::validation("metric is not finite; check inputs"));
    }
    Ok(FOptimum { f, zpl_metric })
}

/// Minimizes a unimodal `g` on `[a, b]` until the bracket is narrower than `tol`.
/// Returns the best point evaluated and its value.
pub fn golden_section(g: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut gc = g(c);
    let mut gd = g(d);
    while (b - a).abs() > tol {
        if gc <= gd {
            b = d;
            d = c;
            gd = gc;
            c = b - inv_phi * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + inv_phi * (b - a);
            gd = g(d);
        }
    }
    let mid = 0.5 * (a + b);
    let gm = g(mid);
    [(c, gc), (d, gd), (mid, gm)]
        .into_iter()
        .fold((mid, gm), |best, p| if p.1 < best.1 { p } else { best })
}

/// Output of [`decompose`].
#[derive(Debug, Clone)]
pub struct DecompositionResult {
    pub f: f64,
    /// NV⁰ component, `lowB - f*diff`. Not clipped.
    pub nv0: Spectrum,
    /// NV⁻ component at low field, `f*diff`.
    pub nvminus: Spectrum,
    pub diff: Spectrum,
    pub zpl_metric: f64,
    pub nv0_zpl_score: Option<f64>,
    pub warnings: Vec<Warning>,
}

/// Difference → scaling-factor search → component assembly.
pub fn decompose(
    low: &Spectrum,
    high: &Spectrum,
    cfg: &ZplArtifactConfig,
    search: &FSearch,
) -> Result<DecompositionResult> {
    let DiffSpectrum {
        diff,
        nv0_zpl_score,
        mut warnings,
    } = compute_diff(low, high)?;
    let FOptimum { f, zpl_metric } = optimize_f(low, &diff, cfg, search)?;
    let nvminus = spectrum::scale(&diff, f)?;
    let nv0 = spectrum::subtract(low, &nvminus)?;
    for s in [&nv0, &nvminus] {
        let count = s.intensities().iter().filter(|&&v| v < 0.0).count();
        if count > 0 {
            warnings.push(Warning::NegativeExcursion {
                count,
                min: s.min_intensity(),
            });
        }
    }
    Ok(DecompositionResult {
        f,
        nv0,
        nvminus,
        diff,
        zpl_metric,
        nv0_zpl_score,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
        let n = ((hi - lo) / step).round() as usize;
        (0..=n).map(|i| lo + i as f64 * step).collect()
    }

    fn gauss(x: f64, c: f64, s: f64) -> f64 {
        (-0.5 * ((x - c) / s).powi(2)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
    }

    #[test]
    fn affine_candidate_scores_zero() {
        let s = Spectrum::from_fn(grid(600.0, 680.0, 0.2), |x| 3.0 + 0.25 * x).unwrap();
        let j = zpl_artifact(&s, &ZplArtifactConfig::default()).unwrap();
        assert!(j.abs() < 1e-12, "{j}");
    }

    #[test]
    fn config_validation() {
        let cfg = ZplArtifactConfig {
            center: 650.0,
            ..ZplArtifactConfig::default()
        };
        assert!(cfg.validate().is_err());
        let s = Spectrum::from_fn(grid(628.0, 680.0, 0.2), |x| x).unwrap();
        assert!(matches!(
            zpl_artifact(&s, &ZplArtifactConfig::default()),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn bump_and_dip_score_the_same() {
        let g = grid(600.0, 680.0, 0.05);
        let bump = Spectrum::from_fn(g.clone(), |x| 10.0 + 0.1 * x + gauss(x, 637.0, 1.0)).unwrap();
        let dip = Spectrum::from_fn(g, |x| 10.0 + 0.1 * x - gauss(x, 637.0, 1.0)).unwrap();
        let cfg = ZplArtifactConfig::default();
        let a = zpl_artifact(&bump, &cfg).unwrap();
        let b = zpl_artifact(&dip, &cfg).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn identical_fields_give_zero_diff() {
        let s = Spectrum::from_fn(grid(540.0, 700.0, 0.5), |x| 1.0 + gauss(x, 575.0, 2.0)).unwrap();
        let d = compute_diff(&s, &s).unwrap();
        assert!(d.diff.intensities().iter().all(|&v| v == 0.0));
        assert_eq!(d.nv0_zpl_score, Some(0.0));
        assert!(d.warnings.is_empty());
    }

    #[test]
    fn flat_diff_is_unidentifiable() {
        let g = grid(600.0, 680.0, 0.2);
        let low = Spectrum::from_fn(g.clone(), |x| 5.0 + gauss(x, 637.0, 2.0)).unwrap();
        let diff = Spectrum::from_fn(g, |x| 1.0 + 0.01 * x).unwrap();
        let r = optimize_f(
            &low,
            &diff,
            &ZplArtifactConfig::default(),
            &FSearch::default(),
        );
        assert!(matches!(r, Err(Error::Identifiability(_))));
    }

    #[test]
    fn unit_scaling_recovered() {
        let g = grid(600.0, 680.0, 0.2);
        let a0 = |x: f64| 40.0 - 0.05 * x;
        let am = |x: f64| 30.0 * gauss(x, 637.0, 1.5) + 0.02 * x;
        let low = Spectrum::from_fn(g.clone(), |x| a0(x) + am(x)).unwrap();
        let diff = Spectrum::from_fn(g, am).unwrap();
        let opt = optimize_f(
            &low,
            &diff,
            &ZplArtifactConfig::default(),
            &FSearch::default(),
        )
        .unwrap();
        assert!((opt.f - 1.0).abs() < 1e-3, "{}", opt.f);
        assert!(opt.zpl_metric < 1e-6);
    }

    #[test]
    fn no_suppression_is_an_error() {
        let g = grid(540.0, 700.0, 0.2);
        let low = Spectrum::from_fn(g, |x| 2.0 + gauss(x, 637.0, 1.5)).unwrap();
        let r = decompose(
            &low,
            &low,
            &ZplArtifactConfig::default(),
            &FSearch::default(),
        );
        assert!(matches!(r, Err(Error::Identifiability(_))));
    }

    #[test]
    fn bad_search_rejected() {
        let g = grid(600.0, 680.0, 0.2);
        let s = Spectrum::from_fn(g, |x| gauss(x, 637.0, 1.5)).unwrap();
        let cfg = ZplArtifactConfig::default();
        let search = FSearch {
            f_min: 0.0,
            ..FSearch::default()
        };
        assert!(matches!(
            optimize_f(&s, &s, &cfg, &search),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn golden_section_finds_minimum() {
        let (x, _) = golden_section(&|x: f64| (x - 2.5).abs(), 0.0, 10.0, 1e-8);
        assert!((x - 2.5).abs() < 1e-8);
    }
}
