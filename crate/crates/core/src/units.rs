//! Shared numeric types and physical constants.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Standard noise reference temperature in kelvin.
pub const T0: f64 = 290.0;

/// Reference impedance shared by every port, in ohms.
pub const Z0: f64 = 50.0;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// `mag ∠ deg`.
pub fn polar_deg(mag: f64, deg: f64) -> Complex64 {
    Complex64::from_polar(mag, deg.to_radians())
}

/// Phase of `z` in degrees, in (-180, 180].
pub fn arg_deg(z: Complex64) -> f64 {
    z.arg().to_degrees()
}

/// Free-space wavelength in metres at `freq_hz`.
pub fn wavelength(freq_hz: f64) -> f64 {
    SPEED_OF_LIGHT / freq_hz
}

/// `(X + X^H) / 2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Largest absolute entry.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}
