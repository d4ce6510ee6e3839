//! Long-pass filter transmission and intensity-weighted transmissivities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Warning};
use crate::spectrum::{self, Spectrum, WavelengthWindow};

/// Transmissivity gap below which the 2×2 inversion is flagged as poorly
/// conditioned.
pub const CONDITIONING_GAP: f64 = 0.05;

/// A wavelength-dependent transmission curve.
pub trait Transmission {
    /// Fraction of light transmitted at `lambda` nm.
    fn transmission(&self, lambda: f64) -> f64;
}

/// Sigmoid long-pass filter `t_max / (1 + exp(-(λ - center) / width))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterModel {
    pub t_max: f64,
    pub center: f64,
    pub width: f64,
}

impl Default for FilterModel {
    /// 645 nm long-pass: `t_max` 0.9, width 6.9 nm.
    fn default() -> Self {
        FilterModel {
            t_max: 0.9,
            center: 645.0,
            width: 6.9,
        }
    }
}

impl FilterModel {
    pub fn new(t_max: f64, center: f64, width: f64) -> Result<Self> {
        if !(t_max > 0.0 && t_max <= 1.0) {
            return Err(Error::validation(format!("t_max {t_max} not in (0, 1]")));
        }
        if !center.is_finite() {
            return Err(Error::validation("filter center must be finite"));
        }
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::validation(format!(
                "filter width {width} must be positive"
            )));
        }
        Ok(FilterModel {
            t_max,
            center,
            width,
        })
    }
}

impl Transmission for FilterModel {
    fn transmission(&self, lambda: f64) -> f64 {
        let x = (lambda - self.center) / self.width;
        // exp of a non-positive argument only, so nothing overflows
        if x >= 0.0 {
            self.t_max / (1.0 + (-x).exp())
        } else {
            let e = x.exp();
            self.t_max * e / (1.0 + e)
        }
    }
}

/// Transmission curve tabulated from a datasheet, linearly interpolated and
/// held constant beyond the first and last entries.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedFilter {
    wavelengths: Vec<f64>,
    values: Vec<f64>,
}

impl TabulatedFilter {
    pub fn new(wavelengths: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0 && **v <= 1.0)) {
            return Err(Error::validation(format!("transmission {v} not in [0, 1]")));
        }
        // reuse the spectrum grid checks
        let s = Spectrum::new(wavelengths, values)?;
        let (wavelengths, values) = s.into_parts();
        Ok(TabulatedFilter {
            wavelengths,
            values,
        })
    }

    pub fn wavelengths(&self) -> &[f64] {
        &self.wavelengths
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl Transmission for TabulatedFilter {
    fn transmission(&self, lambda: f64) -> f64 {
        let xs = &self.wavelengths;
        let n = xs.len();
        if lambda <= xs[0] {
            return self.values[0];
        }
        if lambda >= xs[n - 1] {
            return self.values[n - 1];
        }
        let i = xs.partition_point(|&v| v < lambda);
        if xs[i] == lambda {
            return self.values[i];
        }
        let t = (lambda - xs[i - 1]) / (xs[i] - xs[i - 1]);
        self.values[i - 1] + t * (self.values[i] - self.values[i - 1])
    }
}

/// Pointwise `s(λ)·F(λ)`.
pub fn apply_filter(s: &Spectrum, filter: &impl Transmission) -> Spectrum {
    s.map(|x, y| y * filter.transmission(x))
        .expect("product of finite values is finite")
}

/// Ratio of filtered to unfiltered area over `w`: the intensity-weighted
/// mean transmission of the emission.
pub fn transmissivity(
    s: &Spectrum,
    filter: &impl Transmission,
    w: WavelengthWindow,
) -> Result<f64> {
    if !s.is_nonnegative() {
        return Err(Error::validation(
            "transmissivity needs a nonnegative spectrum",
        ));
    }
    let total = spectrum::area(s, w)?;
    if !(total > 0.0) {
        return Err(Error::validation(format!(
            "spectrum has no area in [{}, {}]",
            w.lo(),
            w.hi()
        )));
    }
    // Filter the window samples directly so interpolated edges see F at the edge.
    let (xs, ys) = spectrum::window_samples(s, w)?;
    let filtered: Vec<f64> = xs
        .iter()
        .zip(&ys)
        .map(|(&x, &y)| y * filter.transmission(x))
        .collect();
    Ok(spectrum::trapezoid(&xs, &filtered) / total)
}

/// Transmissivities of the NV⁰ and NV⁻ emission.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransmissivityPair {
    pub t0: f64,
    pub tminus: f64,
}

impl TransmissivityPair {
    pub fn new(t0: f64, tminus: f64) -> Result<Self> {
        for t in [t0, tminus] {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::validation(format!(
                    "transmissivity {t} not in [0, 1]"
                )));
            }
        }
        Ok(TransmissivityPair { t0, tminus })
    }

    pub fn gap(&self) -> f64 {
        (self.t0 - self.tminus).abs()
    }
}

/// Both transmissivities, with a [`Warning::Conditioning`] when they are
/// closer than [`CONDITIONING_GAP`].
pub fn transmissivity_pair(
    nv0: &Spectrum,
    nvminus: &Spectrum,
    filter: &impl Transmission,
    w: WavelengthWindow,
) -> Result<(TransmissivityPair, Vec<Warning>)> {
    let t0 = transmissivity(nv0, filter, w)?;
    let tminus = transmissivity(nvminus, filter, w)?;
    let pair = TransmissivityPair { t0, tminus };
    let mut warnings = Vec::new();
    if pair.gap() < CONDITIONING_GAP {
        warnings.push(Warning::Conditioning { t0, tminus });
    }
    Ok((pair, warnings))
}
