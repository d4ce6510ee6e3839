//! Per-pixel charge-state decomposition of photoluminescence maps.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::filter::TransmissivityPair;

/// Smallest `|t0 - tminus|` accepted by [`filter_unmix`].
pub const MIN_TRANSMISSIVITY_GAP: f64 = 1e-6;

/// Row-major 2-D intensity grid (counts/s) with square pixels of
/// `pixel_pitch` µm.
#[derive(Debug, Clone, PartialEq)]
pub struct PLMap {
    width: usize,
    height: usize,
    pixel_pitch: f64,
    values: Vec<f64>,
}

impl PLMap {
    /// Checks shape, pitch and finiteness. Negative values are allowed
    /// because unmixed components can dip below zero.
    pub fn new(width: usize, height: usize, pixel_pitch: f64, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::validation("map dimensions must be positive"));
        }
        if width.checked_mul(height) != Some(values.len()) {
            return Err(Error::validation(format!(
                "{width}x{height} map needs {} values, got {}",
                width.saturating_mul(height),
                values.len()
            )));
        }
        if !(pixel_pitch > 0.0 && pixel_pitch.is_finite()) {
            return Err(Error::validation(format!(
                "pixel pitch {pixel_pitch} must be positive"
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!("non-finite value at pixel {i}")));
        }
        Ok(PLMap {
            width,
            height,
            pixel_pitch,
            values,
        })
    }

    /// As [`PLMap::new`] but also rejects negative values.
    pub fn measured(
        width: usize,
        height: usize,
        pixel_pitch: f64,
        values: Vec<f64>,
    ) -> Result<Self> {
        let m = PLMap::new(width, height, pixel_pitch, values)?;
        if let Some(i) = m.values.iter().position(|&v| v < 0.0) {
            return Err(Error::validation(format!(
                "negative value {} at pixel ({}, {})",
                m.values[i],
                i % width,
                i / width
            )));
        }
        Ok(m)
    }

    pub fn zeros(width: usize, height: usize, pixel_pitch: f64) -> Result<Self> {
        PLMap::new(width, height, pixel_pitch, vec![0.0; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_pitch(&self) -> f64 {
        self.pixel_pitch
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn same_shape(&self, other: &PLMap) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn negative_count(&self) -> usize {
        self.values.iter().filter(|&&v| v < 0.0).count()
    }

    /// New map with the same geometry; `f` must return finite values.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Result<PLMap> {
        PLMap::new(
            self.width,
            self.height,
            self.pixel_pitch,
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }

    fn zip_with(&self, other: &PLMap, f: impl Fn(f64, f64) -> f64) -> Result<PLMap> {
        require_same_shape(self, other)?;
        PLMap::new(
            self.width,
            self.height,
            self.pixel_pitch,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }
}

fn require_same_shape(a: &PLMap, b: &PLMap) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::GridMismatch(format!(
            "map dimensions differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

/// NV⁰ and NV⁻ component maps.
#[derive(Debug, Clone, PartialEq)]
pub struct UnmixedMaps {
    pub nv0: PLMap,
    pub nvminus: PLMap,
    /// Negative entries summed over both component maps.
    pub negative_pixel_count: usize,
}

impl UnmixedMaps {
    fn new(nv0: PLMap, nvminus: PLMap) -> Self {
        let negative_pixel_count = nv0.negative_count() + nvminus.negative_count();
        UnmixedMaps {
            nv0,
            nvminus,
            negative_pixel_count,
        }
    }
}

/// Field-difference unmixing: `nvminus = f·(low - high)`,
/// `nv0 = low - nvminus`. Negative outputs are kept.
pub fn field_unmix(low: &PLMap, high: &PLMap, f: f64) -> Result<UnmixedMaps> {
    require_same_shape(low, high)?;
    if !(f > 0.0 && f.is_finite()) {
        return Err(Error::validation(format!(
            "scaling factor {f} must be positive"
        )));
    }
    let nvminus = low.zip_with(high, |l, h| f * (l - h) + 0.0)?;
    let nv0 = low.zip_with(&nvminus, |l, m| l - m + 0.0)?;
    Ok(UnmixedMaps::new(nv0, nvminus))
}

/// Filter-based unmixing. Solves, per pixel,
/// `m0 = nv0 + nvm` and `mlpf = t0·nv0 + tminus·nvm`.
pub fn filter_unmix(m0: &PLMap, mlpf: &PLMap, t: &TransmissivityPair) -> Result<UnmixedMaps> {
    require_same_shape(m0, mlpf)?;
    let gap = t.t0 - t.tminus;
    if !(gap.abs() >= MIN_TRANSMISSIVITY_GAP) {
        return Err(Error::Singularity(format!(
            "transmissivities {} and {} are too close to invert",
            t.t0, t.tminus
        )));
    }
    let nv0 = m0.zip_with(mlpf, |m, l| (l - t.tminus * m) / gap + 0.0)?;
    let nvminus = m0.zip_with(mlpf, |m, l| (t.t0 * m - l) / gap + 0.0)?;
    Ok(UnmixedMaps::new(nv0, nvminus))
}

/// Per-component fractions of a total map.
#[derive(Debug, Clone, PartialEq)]
pub struct FractionMaps {
    pub frac0: PLMap,
    pub fracminus: PLMap,
    /// Indices of pixels whose total was at or below the cutoff; both
    /// fractions are 0 there.
    pub zero_total: Vec<usize>,
}

/// `component / total` per pixel. Pixels with `total <= 1e-12·max(total)`
/// get fraction 0 and are listed in `zero_total`. No clipping is applied.
pub fn fraction_maps(unmixed: &UnmixedMaps, total: &PLMap) -> Result<FractionMaps> {
    require_same_shape(&unmixed.nv0, total)?;
    require_same_shape(&unmixed.nvminus, total)?;
    let eps = 1e-12 * total.max().max(0.0);
    let mut zero_total = Vec::new();
    let n = total.values.len();
    let mut f0 = Vec::with_capacity(n);
    let mut fm = Vec::with_capacity(n);
    for (i, &t) in total.values.iter().enumerate() {
        if t > eps {
            f0.push(unmixed.nv0.values[i] / t);
            fm.push(unmixed.nvminus.values[i] / t);
        } else {
            zero_total.push(i);
            f0.push(0.0);
            fm.push(0.0);
        }
    }
    Ok(FractionMaps {
        frac0: PLMap::new(total.width, total.height, total.pixel_pitch, f0)?,
        fracminus: PLMap::new(total.width, total.height, total.pixel_pitch, fm)?,
        zero_total,
    })
}

/// Pixelwise sum of repeated scans.
pub fn accumulate(scans: &[PLMap]) -> Result<PLMap> {
    let (first, rest) = scans
        .split_first()
        .ok_or_else(|| Error::validation("no maps to accumulate"))?;
    rest.iter()
        .try_fold(first.clone(), |acc, m| acc.zip_with(m, |a, b| a + b))
}

/// Reconstruction checks for an unmixing result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Reconstruction {
    /// max |nv0 + nvminus - total|
    pub sum_residual: f64,
    /// max |t0·nv0 + tminus·nvminus - filtered|, when a filtered map exists
    pub filtered_residual: Option<f64>,
}

pub fn reconstruction(
    unmixed: &UnmixedMaps,
    total: &PLMap,
    filtered: Option<(&PLMap, &TransmissivityPair)>,
) -> Result<Reconstruction> {
    require_same_shape(&unmixed.nv0, total)?;
    let max_abs = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0f64, |m, v| m.max(v.abs()));
    let sum_residual = max_abs(
        &mut (0..total.values.len())
            .map(|i| unmixed.nv0.values[i] + unmixed.nvminus.values[i] - total.values[i]),
    );
    let filtered_residual = match filtered {
        Some((m, t)) => {
            require_same_shape(m, total)?;
            Some(max_abs(&mut (0..total.values.len()).map(|i| {
                t.t0 * unmixed.nv0.values[i] + t.tminus * unmixed.nvminus.values[i] - m.values[i]
            })))
        }
        None => None,
    };
    Ok(Reconstruction {
        sum_residual,
        filtered_residual,
    })
}
