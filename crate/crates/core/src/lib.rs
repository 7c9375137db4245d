//! Multi-frequency electrical impedance tomography on a 2D disk.
//!
//! The crate simulates boundary current-voltage data for phantoms containing
//! thin insulating strips and small conductive disks, solves the forward
//! problem both with resolved strips and with an effective zero-thickness
//! interface model, evaluates high- and low-frequency asymptotic predictions
//! of the boundary perturbation, recovers inclusion geometry from the poles
//! and residues of meromorphic boundary functionals, reconstructs
//! spectroscopic admittivity images with a linearized sensitivity method, and
//! fuses the multi-frequency image stack by principal component analysis.
//!
//! Module map:
//! - [`geometry`]: phantom definition, validation and crack-conforming meshing
//! - [`admittivity`]: frequency-dependent complex material model
//! - [`forward`]: finite element forward solvers and jump-profile extraction
//! - [`protocol`]: electrode protocol simulation and dataset handling
//! - [`asymptotics`]: boundary operators, polarization tensors, meromorphic
//!   identification and pole recovery
//! - [`reconstruct`]: linearized sensitivity-matrix reconstruction
//! - [`fusion`]: PCA fusion of multi-frequency image stacks
//! - [`io`]: CSV / PGM / JSON artifact formats

pub mod admittivity;
pub mod asymptotics;
pub mod forward;
pub mod fusion;
pub mod geometry;
pub mod io;
pub mod numeric;
pub mod protocol;
pub mod reconstruct;

/// 2D point in domain units.
pub type Point = nalgebra::Point2<f64>;
/// 2D vector in domain units.
pub type Vec2 = nalgebra::Vector2<f64>;
/// Complex scalar used throughout (admittivities, potentials, coefficients).
pub type Complex = num_complex::Complex64;

/// Identify a point of `R^2` with a complex number.
#[inline]
pub fn to_complex(p: Point) -> Complex {
    Complex::new(p.x, p.y)
}

/// Inverse of [`to_complex`].
#[inline]
pub fn from_complex(z: Complex) -> Point {
    Point::new(z.re, z.im)
}
