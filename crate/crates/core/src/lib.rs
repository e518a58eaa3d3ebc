//! Fractional perimeters, the fractional Allen–Cahn functional and min-max
//! sweepouts on flat tori.

pub mod allen_cahn;
pub mod error;
pub mod extension;
pub mod fractional_ops;
pub mod kernel;
pub mod manifold;
pub mod minmax;
pub mod perimeter;
pub mod special;

mod fft;

pub use error::{Error, Result};
pub use manifold::{Domain, FlatTorus, GridField, GridSpec, SpectralField, WaveVector};
