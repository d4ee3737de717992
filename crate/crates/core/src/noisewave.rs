//! Noise-correlation matrices: Bosma's theorem for passive blocks, the
//! noise-wave form of amplifier noise parameters, propagation through the
//! interconnection, beam-equivalent receiver temperature and mutual
//! coherence.
//!
//! All correlations are in kelvin, i.e. `<c c^H> / (k B)`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::network::{assemble, AssembledSystem, ComponentKind, FactoredSystem, SystemTopology};
use crate::units::{hermitian_part, CMatrix, CVector, T0};

/// Hermitian tolerance, relative to the largest entry.
pub const HERMITIAN_TOLERANCE: f64 = 1e-12;

/// Eigenvalues above `-PSD_FLOOR * trace` count as non-negative.
pub const PSD_FLOOR: f64 = 1e-9;

/// Amplifier noise parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    /// Minimum noise temperature, K.
    pub t_min: f64,
    /// Lange invariant.
    pub lange_n: f64,
    /// Source reflection giving `t_min`.
    pub gamma_opt: Complex64,
}

impl NoiseParams {
    pub fn new(t_min: f64, lange_n: f64, gamma_opt: Complex64) -> Result<Self> {
        if !(t_min >= 0.0) {
            return Err(Error::InvalidParameter(format!("T_min must be >= 0, got {t_min}")));
        }
        if !(lange_n >= 0.0) {
            return Err(Error::InvalidParameter(format!("N must be >= 0, got {lange_n}")));
        }
        if !(gamma_opt.norm() < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "|Gamma_opt| must be < 1, got {}",
                gamma_opt.norm()
            )));
        }
        Ok(Self {
            t_min,
            lange_n,
            gamma_opt,
        })
    }

    pub fn noiseless() -> Self {
        Self {
            t_min: 0.0,
            lange_n: 0.0,
            gamma_opt: Complex64::new(0.0, 0.0),
        }
    }

    /// Noise temperature for source reflection `gamma_s`.
    pub fn noise_temperature(&self, gamma_s: Complex64) -> f64 {
        let d = gamma_s - self.gamma_opt;
        self.t_min
            + 4.0 * self.lange_n * T0 * d.norm_sqr() / ((1.0 - gamma_s.norm_sqr()) * (1.0 - self.gamma_opt.norm_sqr()))
    }
}

/// Hermitian positive-semidefinite correlation matrix in kelvin.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseCorrelationMatrix(pub CMatrix);

#[derive(Debug, Clone, Copy)]
pub struct PsdReport {
    pub hermitian_error: f64,
    pub min_eigenvalue: f64,
    pub trace: f64,
}

impl PsdReport {
    pub fn is_hermitian(&self) -> bool {
        self.hermitian_error <= HERMITIAN_TOLERANCE
    }

    pub fn is_psd(&self) -> bool {
        self.min_eigenvalue >= -PSD_FLOOR * self.trace.abs().max(f64::MIN_POSITIVE)
    }

    pub fn is_physical(&self) -> bool {
        self.is_hermitian() && self.is_psd()
    }
}

impl NoiseCorrelationMatrix {
    pub fn zeros(n: usize) -> Self {
        Self(CMatrix::zeros(n, n))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// Hermitian and eigenvalue diagnostics.
    pub fn report(&self) -> PsdReport {
        let m = &self.0;
        let scale = crate::units::max_abs(m).max(f64::MIN_POSITIVE);
        let hermitian_error = crate::units::max_abs(&(m - m.adjoint())) / scale;
        let trace = m.diagonal().iter().map(|z| z.re).sum::<f64>();
        let min_eigenvalue = if m.nrows() == 0 {
            0.0
        } else {
            hermitian_part(m)
                .symmetric_eigenvalues()
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min)
        };
        PsdReport {
            hermitian_error,
            min_eigenvalue,
            trace,
        }
    }

    /// `v^H C u`.
    pub fn form(&self, v: &CVector, u: &CVector) -> Complex64 {
        v.dotc(&(&self.0 * u))
    }

    /// Sub-matrix over `indices`.
    pub fn select(&self, indices: &[usize]) -> NoiseCorrelationMatrix {
        let n = indices.len();
        NoiseCorrelationMatrix(CMatrix::from_fn(n, n, |r, c| self.0[(indices[r], indices[c])]))
    }
}

/// `(I - S S^H) T` for a passive block with per-port temperatures.
pub fn bosma_correlation(s: &CMatrix, temperatures: &[f64]) -> NoiseCorrelationMatrix {
    let n = s.nrows();
    assert_eq!(temperatures.len(), n, "one temperature per port");
    let mut c = CMatrix::identity(n, n) - s * s.adjoint();
    for (j, &t) in temperatures.iter().enumerate() {
        c.column_mut(j).scale_mut(t);
    }
    let c = NoiseCorrelationMatrix(c);
    if n > 0 && temperatures.iter().any(|&t| t > 0.0) {
        let report = c.report();
        if !report.is_psd() {
            log::warn!(
                "passive block is not passive: Bosma correlation has eigenvalue {:.3e} K",
                report.min_eigenvalue
            );
        }
    }
    c
}

/// Uniform-temperature convenience form of [`bosma_correlation`].
pub fn bosma_uniform(s: &CMatrix, temperature: f64) -> NoiseCorrelationMatrix {
    bosma_correlation(s, &vec![temperature; s.nrows()])
}

/// Noise-wave correlation of a two-port amplifier at physical temperature
/// `t_l`, with noise scaled linearly from its value at `T0`.
pub fn lna_noise_correlation(s_l: &CMatrix, p: &NoiseParams, t_l: f64) -> Result<NoiseCorrelationMatrix> {
    if s_l.nrows() != 2 || s_l.ncols() != 2 {
        return Err(Error::InvalidParameter("amplifier S matrix must be 2x2".into()));
    }
    let s11 = s_l[(0, 0)];
    let s21 = s_l[(1, 0)];
    if s21.norm() == 0.0 {
        return Err(Error::InvalidParameter("amplifier S21 must be nonzero".into()));
    }
    let g = p.gamma_opt;
    let denom = 1.0 - g.norm_sqr();
    let four_n = 4.0 * p.lange_n;
    let tmin_ratio = p.t_min / T0;

    let c11 = tmin_ratio * (s11.norm_sqr() - 1.0) + four_n * (1.0 - s11 * g).norm_sqr() / denom;
    let c22 = s21.norm_sqr() * (tmin_ratio + four_n * g.norm_sqr() / denom);
    let c12 = s11 / s21 * c22 - s21.conj() * g.conj() * (four_n / denom);

    let m = CMatrix::from_row_slice(
        2,
        2,
        &[Complex64::new(c11, 0.0), c12, c12.conj(), Complex64::new(c22, 0.0)],
    );
    Ok(NoiseCorrelationMatrix(m.scale(t_l)))
}

/// Per-component source temperatures used when forming the system noise
/// correlation. Passive entries are Bosma temperatures; active entries are
/// amplifier physical temperatures (0 silences the amplifier).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSources {
    temperatures: Vec<f64>,
}

impl NoiseSources {
    /// Every component at its configured physical temperature.
    pub fn physical(topology: &SystemTopology) -> Self {
        Self {
            temperatures: topology.components().iter().map(|c| c.kind.temperature()).collect(),
        }
    }

    /// Every source silent.
    pub fn silent(topology: &SystemTopology) -> Self {
        Self {
            temperatures: vec![0.0; topology.components().len()],
        }
    }

    pub fn with(mut self, component: usize, temperature: f64) -> Self {
        self.temperatures[component] = temperature;
        self
    }

    pub fn set(&mut self, component: usize, temperature: f64) {
        self.temperatures[component] = temperature;
    }

    pub fn temperature(&self, component: usize) -> f64 {
        self.temperatures[component]
    }
}

/// Block-diagonal noise correlation of every component's noise waves.
pub fn system_noise_correlation(
    topology: &SystemTopology,
    sys: &AssembledSystem,
    sources: &NoiseSources,
) -> Result<NoiseCorrelationMatrix> {
    let p = sys.dim();
    let mut c = CMatrix::zeros(p, p);
    for (i, comp) in topology.components().iter().enumerate() {
        let t = sources.temperature(i);
        if t == 0.0 {
            continue;
        }
        let block = &sys.blocks[i];
        let local = match &comp.kind {
            ComponentKind::Passive { .. } => bosma_uniform(block, t),
            ComponentKind::Active { noise, .. } => lna_noise_correlation(block, noise, t)?,
        };
        let o = sys.block_offset(i);
        let n = block.nrows();
        c.view_mut((o, o), (n, n)).copy_from(&local.0);
    }
    Ok(NoiseCorrelationMatrix(c))
}

/// `Q C Q^H`, symmetrized.
pub fn output_noise_correlation(sys: &AssembledSystem, c: &NoiseCorrelationMatrix) -> Result<NoiseCorrelationMatrix> {
    let q = crate::network::compute_q(sys)?;
    let out = &q * &c.0 * q.adjoint();
    Ok(NoiseCorrelationMatrix(hermitian_part(&out)))
}

/// A topology assembled and factored at one frequency, ready for noise
/// quadratic forms.
#[derive(Debug, Clone)]
pub struct NoiseEvaluator<'a> {
    pub topology: &'a SystemTopology,
    pub system: AssembledSystem,
    pub factored: FactoredSystem,
}

impl<'a> NoiseEvaluator<'a> {
    pub fn new(topology: &'a SystemTopology, f: f64) -> Result<Self> {
        let system = assemble(topology, f)?;
        let factored = system.factor()?;
        Ok(Self {
            topology,
            system,
            factored,
        })
    }

    pub fn correlation(&self, sources: &NoiseSources) -> Result<NoiseCorrelationMatrix> {
        system_noise_correlation(self.topology, &self.system, sources)
    }

    /// `w_i^H Q C Q^H w_j` for the given sources.
    pub fn coherence(&self, w_i: &CVector, w_j: &CVector, sources: &NoiseSources) -> Result<Complex64> {
        let c = self.correlation(sources)?;
        let u_i = self.factored.back_propagate(w_i);
        let u_j = self.factored.back_propagate(w_j);
        Ok(c.form(&u_i, &u_j))
    }

    /// Beam-equivalent receiver temperature for beam weights `w`, with the
    /// antenna components listed in `antennas`.
    pub fn receiver_temperature(&self, w: &CVector, antennas: &[usize]) -> Result<f64> {
        let u = self.factored.back_propagate(w);
        let mut receiver = NoiseSources::physical(self.topology);
        let mut reference = NoiseSources::silent(self.topology);
        for &a in antennas {
            receiver.set(a, 0.0);
            reference.set(a, T0);
        }
        let num = self.correlation(&receiver)?.form(&u, &u).re;
        let den = self.correlation(&reference)?.form(&u, &u).re;
        if !(den > 0.0) {
            return Err(Error::DegenerateRatio(
                "beam weights receive no antenna noise (denominator <= 0)".into(),
            ));
        }
        Ok(T0 * num / den)
    }
}

/// Beam-equivalent receiver noise temperature, K.
pub fn beam_noise_temperature(topology: &SystemTopology, f: f64, w: &CVector, antennas: &[usize]) -> Result<f64> {
    NoiseEvaluator::new(topology, f)?.receiver_temperature(w, antennas)
}

/// Cross-correlation of outputs `w_i` and `w_j` in kelvin with every
/// component at its physical temperature.
pub fn mutual_coherence(topology: &SystemTopology, f: f64, w_i: &CVector, w_j: &CVector) -> Result<Complex64> {
    let eval = NoiseEvaluator::new(topology, f)?;
    eval.coherence(w_i, w_j, &NoiseSources::physical(topology))
}
