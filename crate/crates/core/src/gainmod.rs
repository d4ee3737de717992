//! Signal response, gain and correlation gain for source waves applied at
//! the network ports, and the isotropic-scene excitation of an antenna
//! array.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::network::{AssembledSystem, FactoredSystem};
use crate::units::{CMatrix, CVector};

/// Excitation covariance `<a_s a_s^H>` in kelvin over all global ports.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceExcitation {
    pub covariance: CMatrix,
}

impl SourceExcitation {
    /// Embeds a block covariance at the given global ports of a `dim`-port
    /// system.
    pub fn embed(dim: usize, ports: &[usize], block: &CMatrix) -> Self {
        assert_eq!(block.nrows(), ports.len());
        let mut covariance = CMatrix::zeros(dim, dim);
        for (r, &i) in ports.iter().enumerate() {
            for (c, &j) in ports.iter().enumerate() {
                covariance[(i, j)] = block[(r, c)];
            }
        }
        Self { covariance }
    }

    /// Rank-one covariance of a deterministic source vector.
    pub fn from_wave(a_s: &CVector) -> Self {
        Self {
            covariance: a_s * a_s.adjoint(),
        }
    }
}

/// Outgoing waves `b = Q S a_s` with all noise sources silent.
pub fn response(sys: &AssembledSystem, a_s: &CVector) -> Result<CVector> {
    let factored = sys.factor()?;
    Ok(factored.propagate(&(&sys.s * a_s)))
}

/// `S^H Q^H w`, the adjoint path from an output selector back to the source
/// slots.
fn adjoint_path(sys: &AssembledSystem, factored: &FactoredSystem, w: &CVector) -> CVector {
    sys.s.adjoint() * factored.back_propagate(w)
}

/// Denominator of the correlation gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// `delta_k^H A delta_l`, the input cross-correlation.
    #[default]
    CrossTerm,
    /// `sqrt(delta_k^H A delta_k * delta_l^H A delta_l)`, the input powers.
    Diagonal,
}

/// `(w_i^H Q S A S^H Q^H w_j) / (delta_k^H A delta_l)`.
pub fn correlation_gain(
    sys: &AssembledSystem,
    excitation: &SourceExcitation,
    w_i: &CVector,
    w_j: &CVector,
    delta_k: &CVector,
    delta_l: &CVector,
) -> Result<Complex64> {
    correlation_gain_normalized(sys, excitation, w_i, w_j, delta_k, delta_l, Normalization::CrossTerm)
}

/// Correlation gain with a chosen denominator.
pub fn correlation_gain_normalized(
    sys: &AssembledSystem,
    excitation: &SourceExcitation,
    w_i: &CVector,
    w_j: &CVector,
    delta_k: &CVector,
    delta_l: &CVector,
    normalization: Normalization,
) -> Result<Complex64> {
    let factored = sys.factor()?;
    correlation_gain_factored(sys, &factored, excitation, w_i, w_j, delta_k, delta_l, normalization)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn correlation_gain_factored(
    sys: &AssembledSystem,
    factored: &FactoredSystem,
    excitation: &SourceExcitation,
    w_i: &CVector,
    w_j: &CVector,
    delta_k: &CVector,
    delta_l: &CVector,
    normalization: Normalization,
) -> Result<Complex64> {
    let a = &excitation.covariance;
    let den = match normalization {
        Normalization::CrossTerm => delta_k.dotc(&(a * delta_l)),
        Normalization::Diagonal => {
            let pk = delta_k.dotc(&(a * delta_k)).re;
            let pl = delta_l.dotc(&(a * delta_l)).re;
            Complex64::new((pk * pl).max(0.0).sqrt(), 0.0)
        }
    };
    if den.norm() == 0.0 {
        return Err(Error::DegenerateRatio(
            "input correlation in the denominator is zero".into(),
        ));
    }
    let u_i = adjoint_path(sys, factored, w_i);
    let u_j = adjoint_path(sys, factored, w_j);
    let num = u_i.dotc(&(a * u_j));
    Ok(num / den)
}

/// Power gain `(w^H Q S A S^H Q^H w) / (delta^H A delta)`.
pub fn gain(sys: &AssembledSystem, excitation: &SourceExcitation, w: &CVector, delta: &CVector) -> Result<f64> {
    Ok(correlation_gain(sys, excitation, w, w, delta, delta)?.re)
}

/// Antenna-port source covariance for an isotropic scene at `t_sky` seen
/// by an array whose own physical temperature is `t_a`.
///
/// With radiation efficiency `eta`, the radiation part is
/// `C_ext(T) = eta (I - S S^H) T` and the ohmic part is
/// `(1 - eta)(I - S S^H) T_a`. Lossless antennas (`eta = 1`) make the ohmic
/// part vanish.
pub fn external_excitation_correlation_lossy(s_a: &CMatrix, t_sky: f64, t_a: f64, eta: f64) -> Result<CMatrix> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidParameter(format!(
            "radiation efficiency must be in [0, 1], got {eta}"
        )));
    }
    let n = s_a.nrows();
    let base = CMatrix::identity(n, n) - s_a * s_a.adjoint();
    let bosma_a = base.scale(t_a);
    let c_ext = |t: f64| base.scale(eta * t);
    let ohmic = bosma_a - c_ext(t_a);
    Ok(ohmic + c_ext(t_sky))
}

/// Lossless form of [`external_excitation_correlation_lossy`]:
/// `(I - S_A S_A^H) T_sky`.
pub fn external_excitation_correlation(s_a: &CMatrix, t_sky: f64, t_a: f64) -> CMatrix {
    external_excitation_correlation_lossy(s_a, t_sky, t_a, 1.0).expect("eta = 1 is valid")
}

/// The source covariance the interconnected network sees when the physical
/// antenna temperature is already accounted for by its Bosma noise:
/// `C_ext(T_sky) - C_ext(T_a)`.
pub fn sky_excess_correlation(s_a: &CMatrix, t_sky: f64, t_a: f64) -> CMatrix {
    let n = s_a.nrows();
    (CMatrix::identity(n, n) - s_a * s_a.adjoint()).scale(t_sky - t_a)
}
