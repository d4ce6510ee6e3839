//! Forward-model generators for spectra, field sweeps and PL maps.
//!
//! Everything here is deterministic given its parameters and seed, and is
//! used as ground truth for the decomposition routines. Lineshapes are
//! Gaussian mixtures; all magnitudes are synthetic (peak rates of order
//! 10⁴ counts/s are an order-of-magnitude guess, not measured data).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::basis_fit::FieldSeries;
use crate::error::{Error, Result};
use crate::filter::TransmissivityPair;
use crate::map::PLMap;
use crate::spectrum::{self, BasisPair, Spectrum};

/// One Gaussian of a lineshape; `width` is the standard deviation in nm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub center: f64,
    pub width: f64,
    pub weight: f64,
}

/// Zero-phonon line plus phonon sideband, as a Gaussian mixture whose
/// weights sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralShapeModel {
    pub zpl_center: f64,
    pub zpl_width: f64,
    pub zpl_weight: f64,
    pub sideband_components: Vec<Component>,
}

impl SpectralShapeModel {
    /// NV⁰: ZPL at 575 nm, sideband peaking near 610 nm. The sideband is
    /// nearly affine across 626–648 nm, so it leaves no feature under the
    /// NV⁻ line window.
    pub fn nv0_default() -> Self {
        SpectralShapeModel {
            zpl_center: 575.0,
            zpl_width: 2.5,
            zpl_weight: 0.03,
            sideband_components: vec![
                Component {
                    center: 608.0,
                    width: 27.0,
                    weight: 0.57,
                },
                Component {
                    center: 655.0,
                    width: 55.0,
                    weight: 0.40,
                },
            ],
        }
    }

    /// NV⁻: ZPL at 637 nm, sideband peaking near 690 nm with negligible
    /// emission below 600 nm.
    pub fn nvminus_default() -> Self {
        SpectralShapeModel {
            zpl_center: 637.0,
            zpl_width: 2.0,
            zpl_weight: 0.04,
            sideband_components: vec![
                Component {
                    center: 662.0,
                    width: 10.0,
                    weight: 0.22,
                },
                Component {
                    center: 690.0,
                    width: 16.0,
                    weight: 0.44,
                },
                Component {
                    center: 728.0,
                    width: 22.0,
                    weight: 0.30,
                },
            ],
        }
    }

    fn components(&self) -> impl Iterator<Item = Component> + '_ {
        std::iter::once(Component {
            center: self.zpl_center,
            width: self.zpl_width,
            weight: self.zpl_weight,
        })
        .chain(self.sideband_components.iter().copied())
    }

    pub fn validate(&self) -> Result<()> {
        let mut sum = 0.0;
        for c in self.components() {
            if !(c.width > 0.0 && c.width.is_finite()) || !c.center.is_finite() {
                return Err(Error::validation(format!("invalid component {c:?}")));
            }
            if !(c.weight >= 0.0) {
                return Err(Error::validation(format!("negative weight in {c:?}")));
            }
            sum += c.weight;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::validation(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }

    /// Mixture density at `x` (unit area over the real line).
    pub fn density(&self, x: f64) -> f64 {
        self.components()
            .map(|c| {
                let z = (x - c.center) / c.width;
                c.weight * (-0.5 * z * z).exp() / (c.width * (2.0 * std::f64::consts::PI).sqrt())
            })
            .sum()
    }
}

/// Uniform wavelength grid `start, start+step, …, stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            start: 500.0,
            stop: 900.0,
            step: 0.2,
        }
    }
}

impl GridSpec {
    pub fn points(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0
            && self.stop > self.start
            && self.start.is_finite()
            && self.stop.is_finite())
        {
            return Err(Error::validation(format!("invalid grid {self:?}")));
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| self.start + i as f64 * self.step).collect())
    }
}

/// Renders `model` on `grid`, scaled so the trapezoid area is `total_counts`.
pub fn make_spectrum(
    model: &SpectralShapeModel,
    grid: &[f64],
    total_counts: f64,
) -> Result<Spectrum> {
    model.validate()?;
    if !(total_counts >= 0.0 && total_counts.is_finite()) {
        return Err(Error::validation(format!(
            "total counts {total_counts} must be >= 0"
        )));
    }
    let raw = Spectrum::from_fn(grid.to_vec(), |x| model.density(x))?;
    if total_counts == 0.0 {
        return Spectrum::zeros(grid.to_vec());
    }
    let a = spectrum::total_area(&raw);
    if !(a > 0.0) {
        return Err(Error::validation("model has no weight on this grid"));
    }
    spectrum::scale(&raw, total_counts / a)
}

/// Unit-area basis pair rendered from two shape models.
pub fn make_basis(
    nv0: &SpectralShapeModel,
    nvminus: &SpectralShapeModel,
    grid: &[f64],
) -> Result<BasisPair> {
    BasisPair::new(
        make_spectrum(nv0, grid, 1.0)?,
        make_spectrum(nvminus, grid, 1.0)?,
    )
}

/// Field-independent NV⁰ coefficient and a piecewise-linear NV⁻
/// coefficient curve over field (gauss).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldResponseModel {
    pub c0_const: f64,
    pub cminus_curve: Vec<(f64, f64)>,
}

impl Default for FieldResponseModel {
    /// NV⁻ falls from 170 G to a minimum at 829 G and rises 3% by 975 G;
    /// the 170 G → 975 G drop corresponds to `f = 6.2`.
    fn default() -> Self {
        let c170 = 1.0e6;
        let c975 = c170 * (1.0 - 1.0 / 6.2);
        FieldResponseModel {
            c0_const: 4.0e5,
            cminus_curve: vec![
                (170.0, c170),
                (300.0, 9.75e5),
                (450.0, 9.35e5),
                (600.0, 8.9e5),
                (700.0, 8.6e5),
                (829.0, c975 / 1.03),
                (975.0, c975),
            ],
        }
    }
}

impl FieldResponseModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.c0_const >= 0.0 && self.c0_const.is_finite()) {
            return Err(Error::validation("c0_const must be >= 0"));
        }
        if self.cminus_curve.is_empty() {
            return Err(Error::validation("cminus_curve has no knots"));
        }
        if self
            .cminus_curve
            .iter()
            .any(|&(b, c)| !b.is_finite() || !(c >= 0.0 && c.is_finite()))
        {
            return Err(Error::validation(
                "cminus_curve values must be finite and >= 0",
            ));
        }
        if self.cminus_curve.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::validation(
                "cminus_curve fields must be strictly increasing",
            ));
        }
        Ok(())
    }

    /// NV⁻ coefficient at field `b`, linearly interpolated between knots.
    pub fn cminus_at(&self, b: f64) -> Result<f64> {
        self.validate()?;
        let k = &self.cminus_curve;
        let (lo, hi) = (k[0].0, k[k.len() - 1].0);
        if !(b >= lo && b <= hi) {
            return Err(Error::Range(format!(
                "field {b} G outside knot range [{lo}, {hi}]"
            )));
        }
        let i = k.partition_point(|&(x, _)| x < b);
        if k[i].0 == b {
            return Ok(k[i].1);
        }
        let (x0, y0) = k[i - 1];
        let (x1, y1) = k[i];
        Ok(y0 + (y1 - y0) * (b - x0) / (x1 - x0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    None,
    Poisson,
    Gaussian,
}

/// Shot noise on `scans` repeated acquisitions of `dwell` seconds each,
/// averaged back to a rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub scans: u32,
    pub dwell: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            kind: NoiseKind::None,
            scans: 1,
            dwell: 0.01,
        }
    }
}

impl NoiseModel {
    pub fn poisson(scans: u32) -> Self {
        NoiseModel {
            kind: NoiseKind::Poisson,
            scans,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scans == 0 {
            return Err(Error::validation("scans must be >= 1"));
        }
        if !(self.dwell > 0.0 && self.dwell.is_finite()) {
            return Err(Error::validation("dwell must be positive"));
        }
        Ok(())
    }

    /// Noisy version of a nonnegative rate (counts/s). The sum of `scans`
    /// independent Poisson draws is drawn directly as one Poisson variate.
    pub fn sample_rate<R: Rng + ?Sized>(&self, rate: f64, rng: &mut R) -> f64 {
        let exposure = self.dwell * self.scans as f64;
        match self.kind {
            NoiseKind::None => rate,
            _ if rate <= 0.0 => 0.0,
            NoiseKind::Poisson => {
                let n: f64 = Poisson::new(rate * exposure)
                    .expect("positive finite mean")
                    .sample(rng);
                n / exposure
            }
            NoiseKind::Gaussian => {
                let sd = (rate / exposure).sqrt();
                let v = rate + sd * Normal::new(0.0, 1.0).expect("unit normal").sample(rng);
                v.max(0.0)
            }
        }
    }

    pub fn apply<R: Rng + ?Sized>(&self, s: &Spectrum, rng: &mut R) -> Result<Spectrum> {
        self.validate()?;
        if self.kind == NoiseKind::None {
            return Ok(s.clone());
        }
        let values = s
            .intensities()
            .iter()
            .map(|&v| self.sample_rate(v, rng))
            .collect();
        Spectrum::new(s.wavelengths().to_vec(), values)
    }
}

/// Generator seeded from `seed`, on an independent stream per `stream`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Shape models for both charge states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapePair {
    pub nv0: SpectralShapeModel,
    pub nvminus: SpectralShapeModel,
}

impl Default for ShapePair {
    fn default() -> Self {
        ShapePair {
            nv0: SpectralShapeModel::nv0_default(),
            nvminus: SpectralShapeModel::nvminus_default(),
        }
    }
}

/// `C0·Ŝ0 + C-(b)·Ŝ-` on `grid`, with noise drawn from stream 0 of `seed`.
pub fn make_field_spectrum(
    b: f64,
    response: &FieldResponseModel,
    shapes: &ShapePair,
    grid: &[f64],
    noise: &NoiseModel,
    seed: u64,
) -> Result<Spectrum> {
    let basis = make_basis(&shapes.nv0, &shapes.nvminus, grid)?;
    field_spectrum_from_basis(b, response, &basis, noise, &mut rng_for(seed, 0))
}

fn field_spectrum_from_basis<R: Rng + ?Sized>(
    b: f64,
    response: &FieldResponseModel,
    basis: &BasisPair,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<Spectrum> {
    let cm = response.cminus_at(b)?;
    let c0 = response.c0_const;
    let clean = Spectrum::new(
        basis.grid().to_vec(),
        basis
            .s0()
            .intensities()
            .iter()
            .zip(basis.sminus().intensities())
            .map(|(p, q)| c0 * p + cm * q)
            .collect(),
    )?;
    noise.apply(&clean, rng)
}

/// Fields used by the default sweep: 19 evenly spaced from 170 G to 975 G
/// plus 829 G.
pub fn default_sweep_fields() -> Vec<f64> {
    let mut f: Vec<f64> = (0..19)
        .map(|k| 170.0 + k as f64 * (975.0 - 170.0) / 18.0)
        .collect();
    f.push(829.0);
    f.sort_by(f64::total_cmp);
    f
}

/// One spectrum per field; field `i` draws its noise from stream `i`.
pub fn make_sweep(
    fields: &[f64],
    response: &FieldResponseModel,
    shapes: &ShapePair,
    grid: &[f64],
    noise: &NoiseModel,
    seed: u64,
) -> Result<FieldSeries> {
    let basis = make_basis(&shapes.nv0, &shapes.nvminus, grid)?;
    let entries = fields
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            let s = field_spectrum_from_basis(
                b,
                response,
                &basis,
                noise,
                &mut rng_for(seed, i as u64),
            )?;
            Ok((b, s))
        })
        .collect::<Result<Vec<_>>>()?;
    FieldSeries::new(entries)
}

/// Boolean pixel mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

const GLYPH_W: usize = 5;
const GLYPH_H: usize = 7;

fn glyph(c: char) -> Option<[&'static str; GLYPH_H]> {
    Some(match c {
        'N' => [
            "10001", "11001", "10101", "10011", "10001", "10001", "10001",
        ],
        'V' => [
            "10001", "10001", "10001", "10001", "10001", "01010", "00100",
        ],
        '0' => [
            "01110", "10001", "10011", "10101", "11001", "10001", "01110",
        ],
        '-' => [
            "00000", "00000", "00000", "11111", "00000", "00000", "00000",
        ],
        ' ' => ["00000"; GLYPH_H],
        _ => return None,
    })
}

impl Mask {
    pub fn empty(width: usize, height: usize) -> Self {
        Mask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Mask {
            width,
            height,
            bits: vec![true; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::validation("mask size does not match dimensions"));
        }
        Ok(Mask {
            width,
            height,
            bits,
        })
    }

    /// `text` drawn in a 5×7 bitmap font with its top-left corner at
    /// `(x0, y0)`, each font pixel `scale`×`scale` map pixels. Glyphs are
    /// one font column apart; anything outside the map is clipped.
    /// Supported characters: `N`, `V`, `0`, `-`, space.
    pub fn text(
        width: usize,
        height: usize,
        text: &str,
        x0: usize,
        y0: usize,
        scale: usize,
    ) -> Result<Self> {
        if scale == 0 {
            return Err(Error::validation("text scale must be >= 1"));
        }
        let mut m = Mask::empty(width, height);
        for (gi, ch) in text.chars().enumerate() {
            let rows =
                glyph(ch).ok_or_else(|| Error::validation(format!("no glyph for {ch:?}")))?;
            let gx = x0 + gi * (GLYPH_W + 1) * scale;
            for (ry, row) in rows.iter().enumerate() {
                for (rx, bit) in row.bytes().enumerate() {
                    if bit != b'1' {
                        continue;
                    }
                    for dy in 0..scale {
                        for dx in 0..scale {
                            let x = gx + rx * scale + dx;
                            let y = y0 + ry * scale + dy;
                            if x < width && y < height {
                                m.bits[y * width + x] = true;
                            }
                        }
                    }
                }
            }
        }
        Ok(m)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn overlaps(&self, other: &Mask) -> bool {
        self.bits.iter().zip(&other.bits).any(|(&a, &b)| a && b)
    }
}

/// Width in font columns of `n` glyphs set one column apart.
fn text_columns(n: usize) -> usize {
    n * (GLYPH_W + 1) - 1
}

/// "NV0" above "NV-", scaled to fill the frame with a margin.
pub fn default_letter_masks(width: usize, height: usize) -> Result<(Mask, Mask)> {
    let cols = text_columns(3);
    let rows = 2 * GLYPH_H + 3;
    let scale = ((width / (cols + 2)).min(height / (rows + 2))).max(1);
    let x0 = width.saturating_sub(cols * scale) / 2;
    let block = rows * scale;
    let top = height.saturating_sub(block) / 2;
    let nv0 = Mask::text(width, height, "NV0", x0, top, scale)?;
    let nvm = Mask::text(width, height, "NV-", x0, top + (GLYPH_H + 3) * scale, scale)?;
    Ok((nv0, nvm))
}

/// Ground-truth component maps: `pl_nv0` inside the first mask, `pl_nvm`
/// inside the second, zero elsewhere.
pub fn make_letter_map(
    nv0_mask: &Mask,
    nvm_mask: &Mask,
    pl_nv0: f64,
    pl_nvm: f64,
    pixel_pitch: f64,
) -> Result<(PLMap, PLMap)> {
    let (w, h) = (nv0_mask.width, nv0_mask.height);
    if w == 0 || h == 0 {
        return Err(Error::validation("map dimensions must be positive"));
    }
    if nvm_mask.width != w || nvm_mask.height != h {
        return Err(Error::GridMismatch("masks differ in size".into()));
    }
    if nv0_mask.overlaps(nvm_mask) {
        return Err(Error::validation("NV0 and NV- masks overlap"));
    }
    if !(pl_nv0 >= 0.0 && pl_nvm >= 0.0 && pl_nv0.is_finite() && pl_nvm.is_finite()) {
        return Err(Error::validation("PL levels must be finite and >= 0"));
    }
    let fill = |m: &Mask, v: f64| m.bits.iter().map(|&b| if b { v } else { 0.0 }).collect();
    Ok((
        PLMap::new(w, h, pixel_pitch, fill(nv0_mask, pl_nv0))?,
        PLMap::new(w, h, pixel_pitch, fill(nvm_mask, pl_nvm))?,
    ))
}

/// Unfiltered and filtered maps seen by the detector:
/// `m0 = nv0 + nvm`, `mlpf = t0·nv0 + tminus·nvm`.
pub fn compose_filter_maps(
    nv0: &PLMap,
    nvm: &PLMap,
    t: &TransmissivityPair,
) -> Result<(PLMap, PLMap)> {
    Ok((
        combine(nv0, nvm, 1.0, 1.0)?,
        combine(nv0, nvm, t.t0, t.tminus)?,
    ))
}

fn combine(a: &PLMap, b: &PLMap, ka: f64, kb: f64) -> Result<PLMap> {
    if !a.same_shape(b) {
        return Err(Error::GridMismatch("truth maps differ in size".into()));
    }
    PLMap::new(
        a.width(),
        a.height(),
        a.pixel_pitch(),
        a.values()
            .iter()
            .zip(b.values())
            .map(|(&x, &y)| ka * x + kb * y)
            .collect(),
    )
}

/// Low- and high-field maps: the high field removes a fraction
/// `suppression` of the NV⁻ signal, so the implied `f` is `1/suppression`.
pub fn make_field_map_pair(nv0: &PLMap, nvm: &PLMap, suppression: f64) -> Result<(PLMap, PLMap)> {
    if !(suppression > 0.0 && suppression <= 1.0) {
        return Err(Error::validation(format!(
            "suppression {suppression} not in (0, 1]"
        )));
    }
    Ok((
        combine(nv0, nvm, 1.0, 1.0)?,
        combine(nv0, nvm, 1.0, 1.0 - suppression)?,
    ))
}

/// Adds seeded Poisson shot noise to a rate map (`exposure` seconds per pixel).
pub fn poisson_map(mean: &PLMap, exposure: f64, seed: u64, stream: u64) -> Result<PLMap> {
    let noise = NoiseModel {
        kind: NoiseKind::Poisson,
        scans: 1,
        dwell: exposure,
    };
    noise.validate()?;
    let mut rng = rng_for(seed, stream);
    let values = mean
        .values()
        .iter()
        .map(|&v| noise.sample_rate(v, &mut rng))
        .collect();
    PLMap::new(mean.width(), mean.height(), mean.pixel_pitch(), values)
}

// Parameter documents for the `simulate` subcommands. Every field has a
// default, so `{}` is a valid document for each.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumParams {
    pub model: SpectralShapeModel,
    pub grid: GridSpec,
    pub total_counts: f64,
    pub noise: NoiseModel,
}

impl Default for SpectrumParams {
    fn default() -> Self {
        SpectrumParams {
            model: SpectralShapeModel::nvminus_default(),
            grid: GridSpec::default(),
            total_counts: 1.0e6,
            noise: NoiseModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepParams {
    pub fields: Vec<f64>,
    pub response: FieldResponseModel,
    pub shapes: ShapePair,
    pub grid: GridSpec,
    pub noise: NoiseModel,
}

impl Default for SweepParams {
    fn default() -> Self {
        SweepParams {
            fields: default_sweep_fields(),
            response: FieldResponseModel::default(),
            shapes: ShapePair::default(),
            grid: GridSpec::default(),
            noise: NoiseModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LetterMapParams {
    pub width: usize,
    pub height: usize,
    pub pixel_pitch_um: f64,
    pub pl_nv0: f64,
    pub pl_nvm: f64,
    pub t0: f64,
    pub tminus: f64,
    /// Seconds per pixel for Poisson noise on the detected maps; noiseless when absent.
    pub exposure_s: Option<f64>,
}

impl Default for LetterMapParams {
    fn default() -> Self {
        LetterMapParams {
            width: 128,
            height: 128,
            pixel_pitch_um: 0.1,
            pl_nv0: 1.0e4,
            pl_nvm: 2.0e4,
            t0: 0.3,
            tminus: 0.8,
            exposure_s: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldMapParams {
    pub width: usize,
    pub height: usize,
    pub pixel_pitch_um: f64,
    pub pl_nv0: f64,
    pub pl_nvm: f64,
    pub suppression: f64,
    /// Seconds per pixel for Poisson noise on the detected maps; noiseless when absent.
    pub exposure_s: Option<f64>,
}

impl Default for FieldMapParams {
    fn default() -> Self {
        FieldMapParams {
            width: 128,
            height: 128,
            pixel_pitch_um: 0.1,
            pl_nv0: 1.0e4,
            pl_nvm: 2.0e4,
            suppression: 1.0 / 6.2,
            exposure_s: None,
        }
    }
}
