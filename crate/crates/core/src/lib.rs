//! Frequency-domain ultrasound computed tomography toolkit.
//!
//! The crate simulates ring-array USCT acquisitions over synthetic tissue
//! phantoms and reconstructs sound-speed maps three ways: adjoint-state full
//! waveform inversion driven by a convergent Born series Helmholtz solver,
//! refraction-corrected time-of-flight tomography, and delay-and-sum
//! beamforming. Everything is 2D, acoustic, and CPU-only.

pub mod acquisition;
pub mod config;
pub mod container;
pub mod das;
pub mod eikonal;
pub mod error;
pub mod fft;
pub mod fwi;
pub mod grid;
pub mod helmholtz;
pub mod metrics;
pub mod optim;
pub mod phantom;
pub mod pipeline;
pub mod smooth;
pub mod toft;

pub use grid::{ComplexField, Grid2D, PadMode, RealField, SpectralCoords};
