//! Charge-state decomposition of NV-center photoluminescence.
//!
//! Two routes separate the NV⁰ and NV⁻ contributions:
//!
//! * **Field difference** ([`decomposition`], [`map::field_unmix`]): a
//!   magnetic field that enhances spin mixing dims only NV⁻ emission, so the
//!   low/high-field difference is a scaled NV⁻ signal.
//! * **Filter inversion** ([`filter`], [`map::filter_unmix`]): a long-pass
//!   filter transmits the two emissions with different efficiencies, giving
//!   a 2×2 linear system per pixel.
//!
//! [`basis_fit`] fits spectra against unit-area basis spectra across a field
//! sweep, and [`synth`] generates ground-truth data for all of the above.

// `!(x > 0.0)` style checks are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis_fit;
pub mod decomposition;
pub mod error;
pub mod filter;
pub mod io;
pub mod map;
pub mod render;
pub mod spectrum;
pub mod synth;

pub use error::{Error, Flagged, Result, Warning};
pub use filter::{FilterModel, TransmissivityPair};
pub use map::{PLMap, UnmixedMaps};
pub use spectrum::{BasisPair, Spectrum, WavelengthWindow};
