//! Spectral toolkit for stochastic transport on periodic domains.
//!
//! The crate is organised bottom-up: [`grid`] holds periodic scalar fields
//! with spectral calculus, [`forms`] builds differential forms and the Lie
//! derivative algebra on top of them, [`noise`] supplies Brownian drivers and
//! noise bases, [`pod`] extracts bases from data, [`sqg`] integrates the
//! stochastic quasigeostrophic model and [`transport`] advects forms, loops
//! and tracers under prescribed stochastic flows.

pub mod error;
mod fft;
pub mod forms;
pub mod grid;
pub mod interp;
pub mod io;
pub mod noise;
pub mod pod;
pub mod sqg;
pub mod synth;
pub mod transport;

pub use error::{Error, Result};
pub use forms::{DifferentialForm, DualForm, Grade, VectorFieldOnGrid};
pub use grid::{Field, PeriodicGrid};
pub use noise::{NoiseBasis, NoiseMode, WienerPath};
pub use rustfft::num_complex::Complex64;
