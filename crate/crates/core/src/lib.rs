//! Linear and weakly nonlinear stability of plane shear flows in a channel.
//!
//! The crate covers base profiles and their diffusive drift, a
//! Sturm–Liouville instability certificate, inviscid (Rayleigh) and viscous
//! (Orr–Sommerfeld) normal modes, bifurcating cat's-eye travelling waves,
//! and growing modes of z-dependent shear flows written in a
//! velocity–vorticity form.

pub mod catseye;
pub mod error;
pub mod linalg;
pub mod orrsommerfeld;
pub mod profiles;
pub mod rayleigh;
pub mod shear3d;
pub mod spectral;
pub mod sturm;

pub use error::{Error, Result};
pub use nalgebra::Complex;

pub type C64 = Complex<f64>;
