//! Component models and the two-element replica-array coupling canceler.
//!
//! Each channel `i` of the canceler has a 90° hybrid whose common port
//! feeds amplifier `i` (optionally through a matching network), whose 90°
//! port goes to main antenna `i` (through an optional phase shifter) and
//! whose 0° port goes to replica antenna `i`. A wave leaving an amplifier
//! input reaches the neighbouring channel once through the main array and
//! once through the replica array; with identical arrays and a 90° hybrid
//! the two paths differ by 180° and cancel.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::network::{assemble, reduce_to_external, ComponentSpec, FrequencyResponse, PortRef, SystemTopology};
use crate::noisewave::NoiseParams;
use crate::units::{polar_deg, CMatrix, T0, Z0};

fn cx(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Ideal 90° hybrid: port 0 common, port 1 the `phase_deg` arm, port 2 the
/// 0° arm.
pub fn ideal_hybrid_s(phase_deg: f64) -> CMatrix {
    ideal_hybrid_s_with_reflection(phase_deg, cx(0.0, 0.0))
}

/// Ideal hybrid with a reflection placed on the common port.
pub fn ideal_hybrid_s_with_reflection(phase_deg: f64, common_reflection: Complex64) -> CMatrix {
    let e = polar_deg(FRAC_1_SQRT_2, phase_deg);
    let r = cx(FRAC_1_SQRT_2, 0.0);
    let z = cx(0.0, 0.0);
    CMatrix::from_row_slice(3, 3, &[common_reflection, e, r, e, z, z, r, z, z])
}

/// Lossless matched phase shifter delaying by `delta_deg`.
pub fn phase_shifter_s(delta_deg: f64) -> CMatrix {
    let t = polar_deg(1.0, -delta_deg);
    CMatrix::from_row_slice(2, 2, &[cx(0.0, 0.0), t, t, cx(0.0, 0.0)])
}

/// Folds a shifter of `delta_deg` into port `port` of `s`.
pub fn compose_shifter(s: &CMatrix, port: usize, delta_deg: f64) -> CMatrix {
    let t = polar_deg(1.0, -delta_deg);
    let mut out = s.clone();
    for j in 0..s.ncols() {
        out[(port, j)] *= t;
    }
    for i in 0..s.nrows() {
        out[(i, port)] *= t;
    }
    out
}

/// Series transmission line followed by a shunt capacitor, seen from the
/// line side (port 0) to the capacitor side (port 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StubMatchSpec {
    /// Electrical length in wavelengths at the analysis frequency.
    pub line_length: f64,
    /// Farads.
    pub shunt_capacitance: f64,
    /// Ohms.
    pub characteristic_impedance: f64,
}

impl StubMatchSpec {
    pub fn new(line_length: f64, shunt_capacitance: f64) -> Result<Self> {
        let spec = Self {
            line_length,
            shunt_capacitance,
            characteristic_impedance: Z0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.line_length >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "line length must be >= 0, got {}",
                self.line_length
            )));
        }
        if !(self.shunt_capacitance > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "shunt capacitance must be > 0, got {}",
                self.shunt_capacitance
            )));
        }
        if !(self.characteristic_impedance > 0.0) {
            return Err(Error::InvalidParameter("characteristic impedance must be > 0".into()));
        }
        Ok(())
    }
}

fn abcd_to_s(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> CMatrix {
    let b_n = b / Z0;
    let c_n = c * Z0;
    let delta = a + b_n + c_n + d;
    CMatrix::from_row_slice(
        2,
        2,
        &[
            (a + b_n - c_n - d) / delta,
            (a * d - b * c) * 2.0 / delta,
            cx(2.0, 0.0) / delta,
            (-a + b_n - c_n + d) / delta,
        ],
    )
}

/// Two-port S matrix of a single-stub match at `f`.
pub fn stub_match_s(spec: &StubMatchSpec, f: f64) -> Result<CMatrix> {
    spec.validate()?;
    if !(f > 0.0) {
        return Err(Error::InvalidParameter(format!("frequency must be > 0, got {f}")));
    }
    let theta = 2.0 * PI * spec.line_length;
    let zc = spec.characteristic_impedance;
    let (sin, cos) = theta.sin_cos();
    let y = cx(0.0, 2.0 * PI * f * spec.shunt_capacitance);
    // Line ABCD times shunt-admittance ABCD [[1, 0], [Y, 1]].
    let la = cx(cos, 0.0);
    let lb = cx(0.0, zc * sin);
    let lc = cx(0.0, sin / zc);
    let ld = cx(cos, 0.0);
    Ok(abcd_to_s(la + lb * y, lb, lc + ld * y, ld))
}

/// Which hybrid port plays which role (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HybridPorts {
    pub common: usize,
    /// The arm feeding the main antenna.
    pub quadrature: usize,
    /// The arm feeding the replica antenna.
    pub in_phase: usize,
    /// Fourth port of a four-port part, terminated internally.
    pub isolated: Option<usize>,
}

impl HybridPorts {
    pub const THREE_PORT: HybridPorts = HybridPorts {
        common: 0,
        quadrature: 1,
        in_phase: 2,
        isolated: None,
    };

    pub fn validate(&self, n_ports: usize) -> Result<()> {
        let mut roles = vec![self.common, self.quadrature, self.in_phase];
        roles.extend(self.isolated);
        if roles.len() != n_ports {
            return Err(Error::InvalidParameter(format!(
                "hybrid port map names {} ports but the part has {n_ports}",
                roles.len()
            )));
        }
        let mut sorted = roles.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != roles.len() || sorted.iter().any(|&p| p >= n_ports) {
            return Err(Error::InvalidParameter(
                "hybrid port map must cover every port exactly once".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum HybridSpec {
    Ideal {
        phase_deg: f64,
        common_reflection: Complex64,
    },
    Measured {
        response: FrequencyResponse,
        ports: HybridPorts,
    },
}

impl HybridSpec {
    pub fn ideal(phase_deg: f64) -> Self {
        HybridSpec::Ideal {
            phase_deg,
            common_reflection: cx(0.0, 0.0),
        }
    }

    pub fn measured(response: FrequencyResponse, ports: HybridPorts) -> Result<Self> {
        ports.validate(response.n_ports())?;
        Ok(HybridSpec::Measured { response, ports })
    }

    pub fn ports(&self) -> HybridPorts {
        match self {
            HybridSpec::Ideal { .. } => HybridPorts::THREE_PORT,
            HybridSpec::Measured { ports, .. } => *ports,
        }
    }

    pub fn s_at(&self, f: f64) -> Result<CMatrix> {
        match self {
            HybridSpec::Ideal {
                phase_deg,
                common_reflection,
            } => Ok(ideal_hybrid_s_with_reflection(*phase_deg, *common_reflection)),
            HybridSpec::Measured { response, .. } => response.at(f),
        }
    }

    /// `1 / |S(quadrature, common)|^2`.
    pub fn loss(&self, f: f64) -> Result<f64> {
        let ports = self.ports();
        let s = self.s_at(f)?;
        Ok(1.0 / s[(ports.quadrature, ports.common)].norm_sqr())
    }

    /// Common-port reflection.
    pub fn common_reflection(&self, f: f64) -> Result<Complex64> {
        let ports = self.ports();
        Ok(self.s_at(f)?[(ports.common, ports.common)])
    }

    fn resolved_at(&self, f: f64) -> Result<Self> {
        Ok(match self {
            HybridSpec::Ideal { .. } => self.clone(),
            HybridSpec::Measured { response, ports } => HybridSpec::Measured {
                response: FrequencyResponse::Fixed(response.at(f)?),
                ports: *ports,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MatchNetwork {
    Stub(StubMatchSpec),
    Response(FrequencyResponse),
}

impl MatchNetwork {
    pub fn s_at(&self, f: f64) -> Result<CMatrix> {
        match self {
            MatchNetwork::Stub(spec) => stub_match_s(spec, f),
            MatchNetwork::Response(r) => {
                let s = r.at(f)?;
                if s.nrows() != 2 {
                    return Err(Error::InvalidParameter("matching network must be a two-port".into()));
                }
                Ok(s)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LnaSpec {
    pub response: FrequencyResponse,
    pub noise: NoiseParams,
}

/// Physical temperatures, K.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CancelerTemperatures {
    pub antenna: f64,
    pub replica: f64,
    pub hybrid: f64,
    pub lna: f64,
    /// Isolated-port terminations of four-port hybrids; follows `hybrid`
    /// when unset.
    pub termination: Option<f64>,
}

impl CancelerTemperatures {
    pub fn uniform(t: f64) -> Self {
        Self {
            antenna: t,
            replica: t,
            hybrid: t,
            lna: t,
            termination: None,
        }
    }
}

/// Two-element array with replica array, 90° hybrids, optional phase
/// shifters and matching networks, and two amplifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct CancelerSystemSpec {
    pub antenna: FrequencyResponse,
    /// `None` terminates the hybrids' 0° arms in matched loads.
    pub replica: Option<FrequencyResponse>,
    pub hybrids: [HybridSpec; 2],
    /// Shifter delays in the 90° arms, degrees.
    pub phase_shifts_deg: [f64; 2],
    pub matches: [Option<MatchNetwork>; 2],
    pub lnas: [LnaSpec; 2],
    pub temperatures: CancelerTemperatures,
    /// Beamformer weights on the two amplifier outputs.
    pub weights: [Complex64; 2],
}

/// Amplifier S matrix used for the two-element studies.
pub fn reference_lna_s() -> CMatrix {
    CMatrix::from_row_slice(
        2,
        2,
        &[
            polar_deg(0.2, -75.0),
            polar_deg(0.01, 150.0),
            polar_deg(3.0, -150.0),
            polar_deg(0.3, -100.0),
        ],
    )
}

/// Scaled two-element array used for the two-element studies.
pub fn reference_array_s() -> CMatrix {
    let s11 = polar_deg(0.3, 100.0);
    let s12 = polar_deg(0.2, -60.0);
    CMatrix::from_row_slice(2, 2, &[s11, s12, s12, s11])
}

impl CancelerSystemSpec {
    /// The two-element reference design: identical arrays, ideal hybrids at
    /// `P_H = 90°`, amplifiers with `T_min = 25 K`, `N = 0.03`,
    /// `Γopt = 0.2∠100°`, everything at 290 K and equal beam weights.
    pub fn reference() -> Self {
        let noise = NoiseParams::new(25.0, 0.03, polar_deg(0.2, 100.0)).expect("valid reference noise");
        let lna = LnaSpec {
            response: FrequencyResponse::Fixed(reference_lna_s()),
            noise,
        };
        Self {
            antenna: FrequencyResponse::Fixed(reference_array_s()),
            replica: Some(FrequencyResponse::Fixed(reference_array_s())),
            hybrids: [HybridSpec::ideal(90.0), HybridSpec::ideal(90.0)],
            phase_shifts_deg: [0.0, 0.0],
            matches: [None, None],
            lnas: [lna.clone(), lna],
            temperatures: CancelerTemperatures::uniform(T0),
            weights: [cx(1.0, 0.0), cx(1.0, 0.0)],
        }
    }

    /// Sets the phase of both ideal hybrids.
    pub fn with_hybrid_phase(mut self, phase_deg: f64) -> Self {
        for h in &mut self.hybrids {
            if let HybridSpec::Ideal { phase_deg: p, .. } = h {
                *p = phase_deg;
            }
        }
        self
    }

    /// Sets the common-port reflection of both ideal hybrids.
    pub fn with_hybrid_reflection(mut self, gamma: Complex64) -> Self {
        for h in &mut self.hybrids {
            if let HybridSpec::Ideal { common_reflection, .. } = h {
                *common_reflection = gamma;
            }
        }
        self
    }

    pub fn with_hybrids(mut self, hybrid: HybridSpec) -> Self {
        self.hybrids = [hybrid.clone(), hybrid];
        self
    }

    pub fn with_phase_shift(mut self, delta_deg: f64) -> Self {
        self.phase_shifts_deg = [delta_deg, delta_deg];
        self
    }

    pub fn with_phase_shifts(mut self, d1: f64, d2: f64) -> Self {
        self.phase_shifts_deg = [d1, d2];
        self
    }

    pub fn with_gamma_opt(mut self, gamma: Complex64) -> Self {
        for l in &mut self.lnas {
            l.noise.gamma_opt = gamma;
        }
        self
    }

    /// Replaces `S11` of both amplifiers (fixed responses only).
    pub fn with_lna_s11(mut self, s11: Complex64) -> Self {
        for l in &mut self.lnas {
            if let FrequencyResponse::Fixed(m) = &mut l.response {
                m[(0, 0)] = s11;
            }
        }
        self
    }

    /// Replaces `S11 = S22` of both arrays (fixed responses only).
    pub fn with_array_reflection(mut self, s11: Complex64) -> Self {
        let set = |r: &mut FrequencyResponse| {
            if let FrequencyResponse::Fixed(m) = r {
                for i in 0..m.nrows() {
                    m[(i, i)] = s11;
                }
            }
        };
        set(&mut self.antenna);
        if let Some(r) = &mut self.replica {
            set(r);
        }
        self
    }

    pub fn with_temperatures(mut self, t: CancelerTemperatures) -> Self {
        self.temperatures = t;
        self
    }

    pub fn with_matches(mut self, m: Option<MatchNetwork>) -> Self {
        self.matches = [m.clone(), m];
        self
    }

    /// Copy with every frequency-dependent part evaluated at `f`.
    pub fn resolved_at(&self, f: f64) -> Result<Self> {
        let fixed = |r: &FrequencyResponse| -> Result<FrequencyResponse> { Ok(FrequencyResponse::Fixed(r.at(f)?)) };
        let mut out = self.clone();
        out.antenna = fixed(&self.antenna)?;
        out.replica = self.replica.as_ref().map(fixed).transpose()?;
        for i in 0..2 {
            out.hybrids[i] = self.hybrids[i].resolved_at(f)?;
            out.lnas[i].response = fixed(&self.lnas[i].response)?;
            out.matches[i] = match &self.matches[i] {
                None => None,
                Some(m) => Some(MatchNetwork::Response(FrequencyResponse::Fixed(m.s_at(f)?))),
            };
        }
        Ok(out)
    }
}

/// A built canceler with handles to its components and ports.
#[derive(Debug, Clone)]
pub struct CancelerTopology {
    pub topology: SystemTopology,
    pub antenna: usize,
    pub replica: Vec<usize>,
    pub hybrids: [usize; 2],
    pub matches: Option<[usize; 2]>,
    pub terminations: Vec<usize>,
    /// Amplifier components, absent when built for reflection analysis.
    pub lnas: Option<[usize; 2]>,
    /// Global ports carrying waves to the beamformer / correlator: the
    /// amplifier outputs, or the amplifier-facing ports when built without
    /// amplifiers.
    pub outputs: [usize; 2],
    /// Global antenna ports.
    pub antenna_ports: [usize; 2],
    /// Global ports that face the amplifier inputs from the network side.
    pub lna_facing: [usize; 2],
}

impl CancelerTopology {
    pub fn dim(&self) -> usize {
        self.topology.total_ports()
    }

    pub fn output_selector(&self, channel: usize) -> crate::CVector {
        crate::network::selector(self.dim(), self.outputs[channel])
    }

    pub fn beam_weights(&self, weights: &[Complex64; 2]) -> crate::CVector {
        crate::network::weighted_selector(self.dim(), &self.outputs, weights)
    }

    pub fn antenna_selector(&self, channel: usize) -> crate::CVector {
        crate::network::selector(self.dim(), self.antenna_ports[channel])
    }
}

/// Builds the canceler topology at `f`.
pub fn build_canceler_topology(spec: &CancelerSystemSpec, f: f64) -> Result<CancelerTopology> {
    build(spec, f, true)
}

fn build(spec: &CancelerSystemSpec, f: f64, with_lnas: bool) -> Result<CancelerTopology> {
    let temps = spec.temperatures;
    let s_a = spec.antenna.at(f)?;
    if s_a.nrows() != 2 {
        return Err(Error::InvalidParameter(format!(
            "antenna array must be a two-port, has {} ports",
            s_a.nrows()
        )));
    }
    let mut components = Vec::new();
    let mut connections = Vec::new();

    components.push(ComponentSpec::passive("antenna", s_a, temps.antenna));
    let antenna = 0;

    let replica: Vec<usize> = match &spec.replica {
        Some(r) => {
            let s_r = r.at(f)?;
            if s_r.nrows() != 2 {
                return Err(Error::InvalidParameter("replica array must be a two-port".into()));
            }
            components.push(ComponentSpec::passive("replica", s_r, temps.replica));
            vec![1]
        }
        None => {
            for i in 0..2 {
                components.push(ComponentSpec::passive(
                    format!("replica_load{}", i + 1),
                    CMatrix::zeros(1, 1),
                    temps.replica,
                ));
            }
            vec![1, 2]
        }
    };

    let mut hybrids = [0; 2];
    for i in 0..2 {
        let h = &spec.hybrids[i];
        let ports = h.ports();
        let s = h.s_at(f)?;
        ports.validate(s.nrows())?;
        let s = compose_shifter(&s, ports.quadrature, spec.phase_shifts_deg[i]);
        hybrids[i] = components.len();
        components.push(ComponentSpec::passive(format!("hybrid{}", i + 1), s, temps.hybrid));
    }

    let matches = if spec.matches.iter().any(Option::is_some) {
        let mut idx = [0; 2];
        for i in 0..2 {
            let s = match &spec.matches[i] {
                Some(m) => m.s_at(f)?,
                None => phase_shifter_s(0.0),
            };
            idx[i] = components.len();
            components.push(ComponentSpec::passive(format!("match{}", i + 1), s, temps.hybrid));
        }
        Some(idx)
    } else {
        None
    };

    let mut terminations = Vec::new();
    for i in 0..2 {
        if let Some(iso) = spec.hybrids[i].ports().isolated {
            let t = components.len();
            components.push(ComponentSpec::passive(
                format!("termination{}", i + 1),
                CMatrix::zeros(1, 1),
                temps.termination.unwrap_or(temps.hybrid),
            ));
            connections.push((PortRef::new(hybrids[i], iso), PortRef::new(t, 0)));
            terminations.push(t);
        }
    }

    let mut lnas = [0; 2];
    if with_lnas {
        for i in 0..2 {
            let l = &spec.lnas[i];
            let s = l.response.at(f)?;
            if s.nrows() != 2 {
                return Err(Error::InvalidParameter("amplifier must be a two-port".into()));
            }
            lnas[i] = components.len();
            components.push(ComponentSpec::active(format!("lna{}", i + 1), s, l.noise, temps.lna));
        }
    }

    let mut facing_refs = [PortRef::new(0, 0); 2];
    for i in 0..2 {
        let ports = spec.hybrids[i].ports();
        connections.push((PortRef::new(antenna, i), PortRef::new(hybrids[i], ports.quadrature)));
        let replica_port = if replica.len() == 1 {
            PortRef::new(replica[0], i)
        } else {
            PortRef::new(replica[i], 0)
        };
        connections.push((replica_port, PortRef::new(hybrids[i], ports.in_phase)));
        let common = PortRef::new(hybrids[i], ports.common);
        facing_refs[i] = match matches {
            Some(m) => {
                connections.push((common, PortRef::new(m[i], 0)));
                PortRef::new(m[i], 1)
            }
            None => common,
        };
        if with_lnas {
            connections.push((facing_refs[i], PortRef::new(lnas[i], 0)));
        }
    }

    let topology = SystemTopology::new(components, connections)?;
    let lna_facing = [
        topology.global_index(facing_refs[0]),
        topology.global_index(facing_refs[1]),
    ];
    let outputs = if with_lnas {
        [
            topology.global_index(PortRef::new(lnas[0], 1)),
            topology.global_index(PortRef::new(lnas[1], 1)),
        ]
    } else {
        lna_facing
    };
    let antenna_ports = [
        topology.global_index(PortRef::new(antenna, 0)),
        topology.global_index(PortRef::new(antenna, 1)),
    ];
    Ok(CancelerTopology {
        topology,
        antenna,
        replica,
        hybrids,
        matches,
        terminations,
        lnas: with_lnas.then_some(lnas),
        outputs,
        antenna_ports,
        lna_facing,
    })
}

/// Reflection seen from each amplifier input into the network when the
/// amplifier inputs are driven with relative amplitudes `excitation`:
/// `Γ_i = Σ_j S_ext[i][j] x_j / x_i`.
pub fn active_reflection_with(spec: &CancelerSystemSpec, f: f64, excitation: [Complex64; 2]) -> Result<[Complex64; 2]> {
    let built = build(spec, f, false)?;
    let sys = assemble(&built.topology, f)?;
    let ext = reduce_to_external(&sys)?;
    let positions: Vec<usize> = built
        .lna_facing
        .iter()
        .map(|g| {
            sys.external_ports()
                .iter()
                .position(|e| e == g)
                .expect("amplifier-facing ports are external without amplifiers")
        })
        .collect();
    let mut out = [cx(0.0, 0.0); 2];
    for i in 0..2 {
        if excitation[i].norm() == 0.0 {
            return Err(Error::InvalidParameter("excitation of a channel is zero".into()));
        }
        let mut acc = cx(0.0, 0.0);
        for j in 0..2 {
            acc += ext[(positions[i], positions[j])] * excitation[j];
        }
        out[i] = acc / excitation[i];
    }
    Ok(out)
}

/// Active reflection at the amplifier inputs under the spec's beam weights.
pub fn active_reflection_at_lna(spec: &CancelerSystemSpec, f: f64) -> Result<[Complex64; 2]> {
    active_reflection_with(spec, f, spec.weights)
}

/// `Γ = (1 - Z0 Y) / (1 + Z0 Y)`.
pub fn gamma_from_admittance(y: Complex64) -> Complex64 {
    let zy = y * Z0;
    (1.0 - zy) / (1.0 + zy)
}

/// Upper frequency of the low-frequency amplifier noise-parameter
/// extrapolation, GHz.
pub const EXTRAPOLATION_LIMIT_GHZ: f64 = 0.8;

/// Wideband amplifier noise parameters extrapolated linearly below 0.8 GHz.
pub fn extrapolated_lna_noise_params(f_ghz: f64) -> Result<NoiseParams> {
    if !(f_ghz > 0.0 && f_ghz <= EXTRAPOLATION_LIMIT_GHZ) {
        return Err(Error::InvalidParameter(format!(
            "extrapolated noise parameters cover 0 < f <= {EXTRAPOLATION_LIMIT_GHZ} GHz, got {f_ghz}"
        )));
    }
    let t_min = T0 * 0.06 * f_ghz;
    let n = 0.34 - 0.3 * f_ghz;
    NoiseParams::new(t_min, n, gamma_from_admittance(extrapolated_y_opt(f_ghz)))
}

/// Optimum source admittance of the extrapolation, siemens.
pub fn extrapolated_y_opt(f_ghz: f64) -> Complex64 {
    cx(0.01 * f_ghz + 0.004, -0.005 * f_ghz)
}

/// Diffuse sky temperature `60 λ^2.55` K for wavelength `lambda_m`.
pub fn sky_temperature(lambda_m: f64) -> Result<f64> {
    if !(lambda_m > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "wavelength must be > 0, got {lambda_m}"
        )));
    }
    Ok(60.0 * lambda_m.powf(2.55))
}
