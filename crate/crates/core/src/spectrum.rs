//! Spectrum values, resampling, pointwise arithmetic and trapezoid quadrature.
//!
//! Every routine accepts irregular wavelength grids. Interpolation is
//! piecewise-linear and quadrature is the trapezoid rule on the native grid,
//! with window edges that fall between samples handled by linearly
//! interpolating the integrand. The two schemes are therefore consistent:
//! integrating a resampled spectrum over its own grid reproduces the
//! piecewise-linear integral exactly.

use crate::error::{Error, Result};

/// Integration window used for transmissivities; covers essentially all NV emission.
pub const EMISSION_WINDOW: WavelengthWindow = WavelengthWindow {
    lo: 550.0,
    hi: 850.0,
};

/// A sampled 1-D signal: intensities (counts/s) on a strictly increasing
/// wavelength grid (nm).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    wavelengths: Vec<f64>,
    intensities: Vec<f64>,
}

/// Closed wavelength interval `[lo, hi]` in nm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WavelengthWindow {
    lo: f64,
    hi: f64,
}

impl WavelengthWindow {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::validation("window bounds must be finite"));
        }
        if lo >= hi {
            return Err(Error::validation(format!(
                "window lo ({lo}) must be < hi ({hi})"
            )));
        }
        Ok(WavelengthWindow { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

impl Spectrum {
    /// Builds a spectrum, checking shape, ordering and finiteness. Negative
    /// intensities are accepted; use [`Spectrum::measured`] for raw data.
    pub fn new(wavelengths: Vec<f64>, intensities: Vec<f64>) -> Result<Self> {
        if wavelengths.len() != intensities.len() {
            return Err(Error::validation(format!(
                "{} wavelengths but {} intensities",
                wavelengths.len(),
                intensities.len()
            )));
        }
        check_grid(&wavelengths)?;
        if let Some(i) = intensities.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "non-finite intensity at index {i}"
            )));
        }
        Ok(Spectrum {
            wavelengths,
            intensities,
        })
    }

    /// Like [`Spectrum::new`] but also rejects negative intensities.
    pub fn measured(wavelengths: Vec<f64>, intensities: Vec<f64>) -> Result<Self> {
        let s = Spectrum::new(wavelengths, intensities)?;
        if let Some(i) = s.intensities.iter().position(|&v| v < 0.0) {
            return Err(Error::validation(format!(
                "negative intensity {} at {} nm",
                s.intensities[i], s.wavelengths[i]
            )));
        }
        Ok(s)
    }

    /// All-zero spectrum on `grid`.
    pub fn zeros(grid: Vec<f64>) -> Result<Self> {
        let n = grid.len();
        Spectrum::new(grid, vec![0.0; n])
    }

    /// Evaluates `f` at every grid point.
    pub fn from_fn(grid: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.iter().map(|&x| f(x)).collect();
        Spectrum::new(grid, values)
    }

    pub fn wavelengths(&self) -> &[f64] {
        &self.wavelengths
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }

    pub fn len(&self) -> usize {
        self.wavelengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wavelengths.is_empty()
    }

    /// The window spanned by the whole grid.
    pub fn full_window(&self) -> WavelengthWindow {
        WavelengthWindow {
            lo: self.wavelengths[0],
            hi: self.wavelengths[self.len() - 1],
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        self.intensities.iter().all(|&v| v >= 0.0)
    }

    pub fn max_intensity(&self) -> f64 {
        self.intensities
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_intensity(&self) -> f64 {
        self.intensities
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn same_grid(&self, other: &Spectrum) -> bool {
        self.wavelengths == other.wavelengths
    }

    /// Piecewise-linear value at `x`; exact at grid points.
    pub fn value_at(&self, x: f64) -> Result<f64> {
        let w = &self.wavelengths;
        if !(x >= w[0] && x <= w[w.len() - 1]) {
            return Err(Error::Range(format!(
                "{x} nm outside grid [{}, {}]",
                w[0],
                w[w.len() - 1]
            )));
        }
        Ok(interp_unchecked(w, &self.intensities, x))
    }

    /// Applies `f(wavelength, intensity)` pointwise.
    pub fn map(&self, f: impl Fn(f64, f64) -> f64) -> Result<Spectrum> {
        let values = self
            .wavelengths
            .iter()
            .zip(&self.intensities)
            .map(|(&x, &y)| f(x, y))
            .collect();
        Spectrum::new(self.wavelengths.clone(), values)
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<f64>) {
        (self.wavelengths, self.intensities)
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::validation(format!(
            "a grid needs at least 2 points, got {}",
            grid.len()
        )));
    }
    if let Some(i) = grid.iter().position(|v| !v.is_finite()) {
        return Err(Error::validation(format!(
            "non-finite wavelength at index {i}"
        )));
    }
    if let Some(i) = grid.windows(2).position(|p| p[1] <= p[0]) {
        return Err(Error::validation(format!(
            "wavelengths not strictly increasing at index {}",
            i + 1
        )));
    }
    Ok(())
}

/// Caller guarantees `xs[0] <= x <= xs[last]`.
fn interp_unchecked(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let i = xs.partition_point(|&v| v < x);
    if xs[i] == x {
        return ys[i];
    }
    let (x0, x1) = (xs[i - 1], xs[i]);
    let (y0, y1) = (ys[i - 1], ys[i]);
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

fn check_window(s: &Spectrum, w: WavelengthWindow) -> Result<()> {
    let full = s.full_window();
    if w.lo < full.lo || w.hi > full.hi {
        return Err(Error::Range(format!(
            "window [{}, {}] outside grid [{}, {}]",
            w.lo, w.hi, full.lo, full.hi
        )));
    }
    Ok(())
}

/// Samples of `s` restricted to `w`: the two interpolated edge points plus
/// every grid point strictly inside.
pub fn window_samples(s: &Spectrum, w: WavelengthWindow) -> Result<(Vec<f64>, Vec<f64>)> {
    check_window(s, w)?;
    let xs = &s.wavelengths;
    let ys = &s.intensities;
    let start = xs.partition_point(|&v| v <= w.lo);
    let end = xs.partition_point(|&v| v < w.hi);
    let mut wx = Vec::with_capacity(end.saturating_sub(start) + 2);
    let mut wy = Vec::with_capacity(wx.capacity());
    wx.push(w.lo);
    wy.push(interp_unchecked(xs, ys, w.lo));
    for i in start..end {
        wx.push(xs[i]);
        wy.push(ys[i]);
    }
    wx.push(w.hi);
    wy.push(interp_unchecked(xs, ys, w.hi));
    Ok((wx, wy))
}

/// Trapezoid rule over paired samples.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

/// Trapezoid integral of `s` over `w`.
pub fn area(s: &Spectrum, w: WavelengthWindow) -> Result<f64> {
    let (xs, ys) = window_samples(s, w)?;
    Ok(trapezoid(&xs, &ys))
}

/// Trapezoid integral over the full grid.
pub fn total_area(s: &Spectrum) -> f64 {
    trapezoid(&s.wavelengths, &s.intensities)
}

/// Linear interpolation of `s` onto `grid`.
pub fn resample(s: &Spectrum, grid: &[f64]) -> Result<Spectrum> {
    check_grid(grid)?;
    let full = s.full_window();
    if grid[0] < full.lo || grid[grid.len() - 1] > full.hi {
        return Err(Error::Range(format!(
            "target grid [{}, {}] exceeds source range [{}, {}]",
            grid[0],
            grid[grid.len() - 1],
            full.lo,
            full.hi
        )));
    }
    let values = grid
        .iter()
        .map(|&x| interp_unchecked(&s.wavelengths, &s.intensities, x))
        .collect();
    Spectrum::new(grid.to_vec(), values)
}

fn require_same_grid(a: &Spectrum, b: &Spectrum) -> Result<()> {
    if !a.same_grid(b) {
        return Err(Error::GridMismatch(format!(
            "grids differ ({} vs {} points); resample first",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

fn zip_with(a: &Spectrum, b: &Spectrum, f: impl Fn(f64, f64) -> f64) -> Result<Spectrum> {
    require_same_grid(a, b)?;
    let values = a
        .intensities
        .iter()
        .zip(&b.intensities)
        .map(|(&x, &y)| f(x, y))
        .collect();
    Spectrum::new(a.wavelengths.clone(), values)
}

/// Pointwise `a - b`. The result may be negative.
pub fn subtract(a: &Spectrum, b: &Spectrum) -> Result<Spectrum> {
    zip_with(a, b, |x, y| x - y)
}

/// Pointwise `a + b`.
pub fn add(a: &Spectrum, b: &Spectrum) -> Result<Spectrum> {
    zip_with(a, b, |x, y| x + y)
}

/// Pointwise `k * s`.
pub fn scale(s: &Spectrum, k: f64) -> Result<Spectrum> {
    if !k.is_finite() {
        return Err(Error::validation(format!("scale factor {k} is not finite")));
    }
    s.map(|_, y| k * y)
}

/// Rescales a nonnegative spectrum to unit area over its full grid.
pub fn normalize_area(s: &Spectrum) -> Result<Spectrum> {
    if !s.is_nonnegative() {
        return Err(Error::validation(
            "cannot normalize a spectrum with negative intensities",
        ));
    }
    let a = total_area(s);
    if !(a > 0.0) {
        return Err(Error::validation(format!(
            "spectrum area {a} is not positive"
        )));
    }
    s.map(|_, y| y / a)
}

/// Unit-area NV⁰ and NV⁻ basis spectra on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisPair {
    s0: Spectrum,
    sminus: Spectrum,
}

impl BasisPair {
    /// Tolerance on the unit-area invariant.
    pub const AREA_TOL: f64 = 1e-9;

    /// Accepts spectra that are already normalized.
    pub fn new(s0: Spectrum, sminus: Spectrum) -> Result<Self> {
        require_same_grid(&s0, &sminus)?;
        for (name, s) in [("NV0", &s0), ("NV-", &sminus)] {
            if !s.is_nonnegative() {
                return Err(Error::validation(format!(
                    "{name} basis has negative intensities"
                )));
            }
            let a = total_area(s);
            if (a - 1.0).abs() > Self::AREA_TOL {
                return Err(Error::validation(format!(
                    "{name} basis area is {a}, expected 1"
                )));
            }
        }
        Ok(BasisPair { s0, sminus })
    }

    /// Normalizes both spectra, resampling the NV⁻ one onto the NV⁰ grid if needed.
    pub fn from_spectra(s0: &Spectrum, sminus: &Spectrum) -> Result<Self> {
        let sminus = if s0.same_grid(sminus) {
            sminus.clone()
        } else {
            resample(sminus, s0.wavelengths())?
        };
        BasisPair::new(normalize_area(s0)?, normalize_area(&sminus)?)
    }

    pub fn s0(&self) -> &Spectrum {
        &self.s0
    }

    pub fn sminus(&self) -> &Spectrum {
        &self.sminus
    }

    pub fn grid(&self) -> &[f64] {
        self.s0.wavelengths()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
        let n = ((hi - lo) / step).round() as usize;
        (0..=n).map(|i| lo + i as f64 * step).collect()
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(Spectrum::new(vec![1.0], vec![1.0]).is_err());
        assert!(Spectrum::new(vec![1.0, 2.0], vec![1.0]).is_err());
        assert!(Spectrum::new(vec![2.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(Spectrum::new(vec![1.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(Spectrum::new(vec![1.0, 2.0], vec![f64::NAN, 1.0]).is_err());
        assert!(Spectrum::measured(vec![1.0, 2.0], vec![-1.0, 1.0]).is_err());
        assert!(Spectrum::new(vec![1.0, 2.0], vec![-1.0, 1.0]).is_ok());
        assert!(WavelengthWindow::new(3.0, 3.0).is_err());
    }

    #[test]
    fn resample_identity_and_midpoint() {
        let s = Spectrum::from_fn(grid(550.0, 850.0, 1.0), |x| (x / 17.0).sin()).unwrap();
        assert_eq!(resample(&s, s.wavelengths()).unwrap(), s);

        let two = Spectrum::new(vec![600.0, 700.0], vec![0.0, 100.0]).unwrap();
        let r = resample(&two, &[650.0]);
        // a one-point grid is degenerate
        assert!(matches!(r, Err(Error::Validation(_))));
        let r = resample(&two, &[600.0, 650.0]).unwrap();
        assert_eq!(r.intensities()[1], 50.0);
    }

    #[test]
    fn resample_fine_grid_matches_analytic() {
        let f = |x: f64| (x / 40.0).sin();
        let s = Spectrum::from_fn(grid(550.0, 850.0, 1.0), f).unwrap();
        let fine = grid(550.0, 850.0, 0.5);
        let r = resample(&s, &fine).unwrap();
        let err = fine
            .iter()
            .zip(r.intensities())
            .map(|(&x, &y)| (y - f(x)).abs())
            .fold(0.0, f64::max);
        // linear interpolation error bound h^2/8 * max|f''| = 1/8 * 1/1600
        assert!(err < 1e-4, "max error {err}");
    }

    #[test]
    fn resample_out_of_range() {
        let s = Spectrum::from_fn(grid(550.0, 850.0, 1.0), |x| x).unwrap();
        assert!(matches!(
            resample(&s, &[540.0, 600.0]),
            Err(Error::Range(_))
        ));
        assert!(matches!(
            resample(&s, &[600.0, 851.0]),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn subtract_examples() {
        let a = Spectrum::from_fn(grid(630.0, 640.0, 1.0), |x| {
            if x == 637.0 {
                100.0
            } else {
                1.0
            }
        })
        .unwrap();
        let b = Spectrum::from_fn(
            grid(630.0, 640.0, 1.0),
            |x| if x == 637.0 { 90.0 } else { 1.0 },
        )
        .unwrap();
        let d = subtract(&a, &b).unwrap();
        assert_eq!(d.value_at(637.0).unwrap(), 10.0);
        assert!(subtract(&a, &a)
            .unwrap()
            .intensities()
            .iter()
            .all(|&v| v == 0.0));

        let c = Spectrum::from_fn(grid(630.0, 641.0, 1.0), |_| 1.0).unwrap();
        assert!(matches!(subtract(&a, &c), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn scale_examples() {
        let s = Spectrum::from_fn(grid(550.0, 850.0, 0.7), |x| (x - 500.0).sqrt()).unwrap();
        assert_eq!(scale(&s, 1.0).unwrap(), s);
        assert!(scale(&s, 0.0)
            .unwrap()
            .intensities()
            .iter()
            .all(|&v| v == 0.0));
        let a = total_area(&s);
        let a62 = total_area(&scale(&s, 6.2).unwrap());
        assert!(((a62 - 6.2 * a) / (6.2 * a)).abs() < 1e-12);
        assert!(scale(&s, f64::INFINITY).is_err());
    }

    #[test]
    fn area_examples() {
        let g = grid(500.0, 900.0, 0.3);
        let w = WavelengthWindow::new(550.0, 850.0).unwrap();
        let c = Spectrum::from_fn(g.clone(), |_| 2.0).unwrap();
        assert!((area(&c, w).unwrap() - 600.0).abs() < 1e-9);

        let ramp = Spectrum::from_fn(g, |x| (x - 550.0) / 3.0).unwrap();
        assert!((area(&ramp, w).unwrap() - 15000.0).abs() < 1e-7);

        let out = WavelengthWindow::new(450.0, 600.0).unwrap();
        assert!(matches!(area(&c, out), Err(Error::Range(_))));
    }

    #[test]
    fn normalize_examples() {
        let c = Spectrum::from_fn(grid(550.0, 850.0, 1.0), |_| 5.0).unwrap();
        let n = normalize_area(&c).unwrap();
        for &v in n.intensities() {
            assert!((v - 1.0 / 300.0).abs() < 1e-15);
        }
        let nn = normalize_area(&n).unwrap();
        for (a, b) in n.intensities().iter().zip(nn.intensities()) {
            assert!((a - b).abs() <= 1e-12 * a.abs());
        }
        assert!(normalize_area(&Spectrum::zeros(vec![1.0, 2.0]).unwrap()).is_err());
    }

    #[test]
    fn basis_pair_checks_area() {
        let g = grid(550.0, 850.0, 1.0);
        let a = Spectrum::from_fn(g.clone(), |x| x - 500.0).unwrap();
        let b = Spectrum::from_fn(g, |x| 900.0 - x).unwrap();
        assert!(BasisPair::new(a.clone(), b.clone()).is_err());
        let pair = BasisPair::from_spectra(&a, &b).unwrap();
        assert!((total_area(pair.s0()) - 1.0).abs() < 1e-12);
        assert!((total_area(pair.sminus()) - 1.0).abs() < 1e-12);
    }
}
