//! Run configuration: JSON schema types and conversion into core specs.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use nwave::canceler::{
    reference_lna_s, CancelerSystemSpec, CancelerTemperatures, HybridPorts, HybridSpec, LnaSpec, MatchNetwork,
    StubMatchSpec,
};
use nwave::network::{ComponentSpec, FrequencyResponse, PortRef, SystemTopology};
use nwave::noisewave::NoiseParams;
use nwave::touchstone::read_touchstone;
use nwave::units::polar_deg;
use nwave::{CMatrix, T0, Z0};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Complex number, read as `{mag, deg}`, `{re, im}` or a bare real.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(from = "ComplexRepr")]
pub struct C(pub Complex64);

#[derive(Deserialize)]
#[serde(untagged)]
enum ComplexRepr {
    Polar { mag: f64, deg: f64 },
    Rect { re: f64, im: f64 },
    Real(f64),
}

impl From<ComplexRepr> for C {
    fn from(r: ComplexRepr) -> Self {
        C(match r {
            ComplexRepr::Polar { mag, deg } => polar_deg(mag, deg),
            ComplexRepr::Rect { re, im } => Complex64::new(re, im),
            ComplexRepr::Real(x) => Complex64::new(x, 0.0),
        })
    }
}

/// Canonical output form of a complex value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Polar {
    pub mag: f64,
    pub deg: f64,
}

impl From<Complex64> for Polar {
    fn from(z: Complex64) -> Self {
        Polar {
            mag: z.norm(),
            deg: z.arg().to_degrees(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrTwo<T> {
    Two([T; 2]),
    One(T),
}

impl<T: Clone> OneOrTwo<T> {
    fn pair(&self) -> [T; 2] {
        match self {
            OneOrTwo::Two(p) => p.clone(),
            OneOrTwo::One(x) => [x.clone(), x.clone()],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseConfig {
    /// Touchstone v1 file, relative to the config file.
    Touchstone(PathBuf),
    /// Row-major S matrix.
    Matrix(Vec<Vec<C>>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Analysis frequency, Hz.
    #[serde(default = "default_frequency")]
    pub frequency_hz: f64,
    pub system: SystemConfig,
    #[serde(default)]
    pub sweep_phase: SweepPhaseParams,
    #[serde(default)]
    pub contour: ContourParams,
    #[serde(default)]
    pub null_search: NullSearchParams,
    #[serde(default)]
    pub match_search: MatchSearchParams,
    #[serde(default)]
    pub monte_carlo: MonteCarloParams,
    #[serde(default)]
    pub wideband: WidebandParams,
}

fn default_frequency() -> f64 {
    100e6
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemConfig {
    Canceler(Box<CancelerConfig>),
    Generic(GenericConfig),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CancelerConfig {
    pub antenna: Option<ResponseConfig>,
    pub replica: Option<ReplicaConfig>,
    pub hybrid: Option<OneOrTwo<HybridConfig>>,
    pub phase_shifts_deg: Option<[f64; 2]>,
    #[serde(rename = "match")]
    pub matching: Option<OneOrTwo<MatchConfig>>,
    pub lna: Option<OneOrTwo<LnaConfig>>,
    pub temperatures: Option<TemperatureConfig>,
    pub weights: Option<[C; 2]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplicaConfig {
    /// A copy of the antenna array.
    SameAsAntenna,
    /// Matched loads on the hybrids' 0° arms.
    Matched,
    Response(ResponseConfig),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HybridConfig {
    Ideal {
        #[serde(default = "default_hybrid_phase")]
        phase_deg: f64,
        common_reflection: Option<C>,
    },
    Measured {
        response: ResponseConfig,
        ports: PortMapConfig,
    },
}

fn default_hybrid_phase() -> f64 {
    90.0
}

/// 1-based port numbers as in the Touchstone file.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortMapConfig {
    pub common: usize,
    pub quadrature: usize,
    pub in_phase: usize,
    pub isolated: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchConfig {
    Stub {
        line_length_wl: f64,
        shunt_capacitance_pf: f64,
        characteristic_impedance_ohm: Option<f64>,
    },
    Response(ResponseConfig),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LnaConfig {
    pub s: Option<ResponseConfig>,
    #[serde(default = "default_t_min")]
    pub t_min_k: f64,
    #[serde(default = "default_n")]
    pub n: f64,
    pub gamma_opt: Option<C>,
}

fn default_t_min() -> f64 {
    25.0
}

fn default_n() -> f64 {
    0.03
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemperatureConfig {
    #[serde(default = "default_t")]
    pub antenna: f64,
    #[serde(default = "default_t")]
    pub replica: f64,
    #[serde(default = "default_t")]
    pub hybrid: f64,
    #[serde(default = "default_t")]
    pub lna: f64,
    pub termination: Option<f64>,
}

fn default_t() -> f64 {
    T0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenericConfig {
    pub components: Vec<GenericComponent>,
    /// Pairs of `"name:port"` references, ports 1-based.
    #[serde(default)]
    pub connections: Vec<[String; 2]>,
    /// Components treated as antennas for the receiver temperature.
    #[serde(default)]
    pub antennas: Vec<String>,
    /// Beamformer taps on external ports.
    #[serde(default)]
    pub outputs: Vec<OutputTap>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenericComponent {
    pub name: String,
    pub response: ResponseConfig,
    #[serde(default = "default_t")]
    pub temperature_k: f64,
    /// Present for two-port amplifiers.
    pub noise: Option<NoiseConfig>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub t_min_k: f64,
    pub n: f64,
    pub gamma_opt: C,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputTap {
    pub port: String,
    pub weight: Option<C>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParameterName {
    HybridPhase,
    ShifterPhase,
    ShifterPhase1,
    ShifterPhase2,
    Frequency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputName {
    Trec,
    T12,
    G12,
    GammaAct,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepPhaseParams {
    pub parameter: ParameterName,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
    pub outputs: Vec<OutputName>,
}

impl Default for SweepPhaseParams {
    fn default() -> Self {
        Self {
            parameter: ParameterName::HybridPhase,
            start: 0.0,
            stop: 180.0,
            step: 0.1,
            outputs: vec![OutputName::Trec, OutputName::T12, OutputName::G12],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    Trec,
    T12,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContourParams {
    pub metric: MetricName,
    pub radius_step: f64,
    pub phase_step_deg: f64,
    pub max_radius: f64,
}

impl Default for ContourParams {
    fn default() -> Self {
        Self {
            metric: MetricName::Trec,
            radius_step: 0.05,
            phase_step_deg: 5.0,
            max_radius: 0.95,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NullSearchParams {
    pub parameter: ParameterName,
    pub metric: MetricName,
    pub lo: f64,
    pub hi: f64,
    pub coarse_step: f64,
    pub refine_step: f64,
    pub depth_ratio: f64,
    pub periodic: bool,
}

impl Default for NullSearchParams {
    fn default() -> Self {
        Self {
            parameter: ParameterName::ShifterPhase,
            metric: MetricName::T12,
            lo: 0.0,
            hi: 180.0,
            coarse_step: 1.0,
            refine_step: nwave::sweep::REFINE_STEP_DEG,
            depth_ratio: nwave::sweep::DEFAULT_DEPTH_RATIO,
            periodic: true,
        }
    }
}

/// Either an inclusive `{start, stop, step}` range or an explicit list.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Values {
    Range { start: f64, stop: f64, step: f64 },
    List(Vec<f64>),
}

impl Values {
    pub fn expand(&self) -> Result<Vec<f64>, CliError> {
        match self {
            Values::Range { start, stop, step } => nwave::sweep::grid(*start, *stop, *step).map_err(CliError::from),
            Values::List(v) => Ok(v.clone()),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatchSearchParams {
    pub line_lengths_wl: Values,
    pub shunt_capacitances_pf: Values,
    pub tolerance_deg: f64,
    pub coarse_step: f64,
}

impl Default for MatchSearchParams {
    fn default() -> Self {
        Self {
            line_lengths_wl: Values::Range {
                start: 0.0,
                stop: 1.0,
                step: 0.1,
            },
            shunt_capacitances_pf: Values::Range {
                start: 1.0,
                stop: 991.0,
                step: 10.0,
            },
            tolerance_deg: 4.0,
            coarse_step: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuningName {
    None,
    Joint,
    Independent,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonteCarloParams {
    pub relative_fraction: f64,
    pub iterations: usize,
    pub seed: u64,
    pub phase_jitter_deg: f64,
    pub coarse_step_deg: f64,
    pub tuning: TuningName,
    pub threshold_k: f64,
    pub histogram_bin_k: f64,
    pub histogram_cutoff_k: f64,
}

impl Default for MonteCarloParams {
    fn default() -> Self {
        Self {
            relative_fraction: 0.05,
            iterations: 1000,
            seed: 2024,
            phase_jitter_deg: 0.0,
            coarse_step_deg: 3.0,
            tuning: TuningName::Independent,
            threshold_k: 0.01,
            histogram_bin_k: 0.01,
            histogram_cutoff_k: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WidebandParams {
    pub frequencies_hz: Values,
    pub extrapolate_noise: bool,
    pub coarse_step: f64,
}

impl Default for WidebandParams {
    fn default() -> Self {
        Self {
            frequencies_hz: Values::Range {
                start: 50e6,
                stop: 100e6,
                step: 5e6,
            },
            extrapolate_noise: true,
            coarse_step: 1.0,
        }
    }
}

/// Parsed config plus the raw bytes it came from.
pub struct LoadedConfig {
    pub config: RunConfig,
    pub raw: Vec<u8>,
    pub base_dir: PathBuf,
}

pub fn load(path: &Path) -> Result<LoadedConfig, CliError> {
    let raw =
        std::fs::read(path).map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let config: RunConfig = serde_json::from_slice(&raw)
        .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))?;
    if !config.frequency_hz.is_finite() || config.frequency_hz <= 0.0 {
        return Err(CliError::Config(format!(
            "frequency_hz must be > 0, got {}",
            config.frequency_hz
        )));
    }
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(LoadedConfig { config, raw, base_dir })
}

fn square(rows: &[Vec<C>]) -> Result<CMatrix, CliError> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::Config(format!(
            "S matrix must be square and non-empty, got {n} rows"
        )));
    }
    Ok(CMatrix::from_fn(n, n, |r, c| rows[r][c].0))
}

impl ResponseConfig {
    pub fn resolve(&self, base: &Path) -> Result<FrequencyResponse, CliError> {
        match self {
            ResponseConfig::Matrix(rows) => Ok(FrequencyResponse::Fixed(square(rows)?)),
            ResponseConfig::Touchstone(p) => {
                let path = base.join(p);
                if !path.is_file() {
                    return Err(CliError::Config(format!(
                        "touchstone file not found: {}",
                        path.display()
                    )));
                }
                let doc =
                    read_touchstone(&path, None).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                FrequencyResponse::from_touchstone(doc)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
            }
        }
    }
}

fn port_index(port: usize, what: &str) -> Result<usize, CliError> {
    port.checked_sub(1)
        .ok_or_else(|| CliError::Config(format!("{what} port numbers are 1-based, got 0")))
}

impl HybridConfig {
    fn resolve(&self, base: &Path) -> Result<HybridSpec, CliError> {
        match self {
            HybridConfig::Ideal {
                phase_deg,
                common_reflection,
            } => Ok(HybridSpec::Ideal {
                phase_deg: *phase_deg,
                common_reflection: common_reflection.map(|c| c.0).unwrap_or_default(),
            }),
            HybridConfig::Measured { response, ports } => {
                let ports = HybridPorts {
                    common: port_index(ports.common, "hybrid")?,
                    quadrature: port_index(ports.quadrature, "hybrid")?,
                    in_phase: port_index(ports.in_phase, "hybrid")?,
                    isolated: ports.isolated.map(|p| port_index(p, "hybrid")).transpose()?,
                };
                Ok(HybridSpec::measured(response.resolve(base)?, ports)?)
            }
        }
    }
}

impl MatchConfig {
    fn resolve(&self, base: &Path) -> Result<MatchNetwork, CliError> {
        match self {
            MatchConfig::Stub {
                line_length_wl,
                shunt_capacitance_pf,
                characteristic_impedance_ohm,
            } => {
                let spec = StubMatchSpec {
                    line_length: *line_length_wl,
                    shunt_capacitance: shunt_capacitance_pf * 1e-12,
                    characteristic_impedance: characteristic_impedance_ohm.unwrap_or(Z0),
                };
                spec.validate()?;
                Ok(MatchNetwork::Stub(spec))
            }
            MatchConfig::Response(r) => Ok(MatchNetwork::Response(r.resolve(base)?)),
        }
    }
}

impl LnaConfig {
    fn resolve(&self, base: &Path) -> Result<LnaSpec, CliError> {
        let gamma_opt = self.gamma_opt.map(|c| c.0).unwrap_or(polar_deg(0.2, 100.0));
        Ok(LnaSpec {
            response: match &self.s {
                Some(r) => r.resolve(base)?,
                None => FrequencyResponse::Fixed(reference_lna_s()),
            },
            noise: NoiseParams::new(self.t_min_k, self.n, gamma_opt)?,
        })
    }
}

impl CancelerConfig {
    /// Spec with unset fields taken from the reference design.
    pub fn resolve(&self, base: &Path) -> Result<CancelerSystemSpec, CliError> {
        let mut spec = CancelerSystemSpec::reference();
        if let Some(a) = &self.antenna {
            spec.antenna = a.resolve(base)?;
        }
        spec.replica = match &self.replica {
            None | Some(ReplicaConfig::SameAsAntenna) => Some(spec.antenna.clone()),
            Some(ReplicaConfig::Matched) => None,
            Some(ReplicaConfig::Response(r)) => Some(r.resolve(base)?),
        };
        if let Some(h) = &self.hybrid {
            let [h1, h2] = h.pair();
            spec.hybrids = [h1.resolve(base)?, h2.resolve(base)?];
        }
        if let Some(d) = self.phase_shifts_deg {
            spec.phase_shifts_deg = d;
        }
        if let Some(m) = &self.matching {
            let [m1, m2] = m.pair();
            spec.matches = [Some(m1.resolve(base)?), Some(m2.resolve(base)?)];
        }
        if let Some(l) = &self.lna {
            let [l1, l2] = l.pair();
            spec.lnas = [l1.resolve(base)?, l2.resolve(base)?];
        }
        if let Some(t) = self.temperatures {
            spec.temperatures = CancelerTemperatures {
                antenna: t.antenna,
                replica: t.replica,
                hybrid: t.hybrid,
                lna: t.lna,
                termination: t.termination,
            };
        }
        if let Some([w1, w2]) = self.weights {
            spec.weights = [w1.0, w2.0];
        }
        Ok(spec)
    }
}

/// A generic topology with its beamformer and antenna handles.
pub struct GenericSystem {
    pub topology: SystemTopology,
    pub antennas: Vec<usize>,
    pub output_ports: Vec<usize>,
    pub weights: Vec<Complex64>,
}

impl GenericConfig {
    pub fn resolve(&self, base: &Path) -> Result<GenericSystem, CliError> {
        // Passive components must precede amplifiers.
        let mut order: Vec<&GenericComponent> = self.components.iter().filter(|c| c.noise.is_none()).collect();
        order.extend(self.components.iter().filter(|c| c.noise.is_some()));
        let mut components = Vec::with_capacity(order.len());
        for c in &order {
            let response = c.response.resolve(base)?;
            components.push(match c.noise {
                None => ComponentSpec::passive(c.name.clone(), response, c.temperature_k),
                Some(n) => ComponentSpec::active(
                    c.name.clone(),
                    response,
                    NoiseParams::new(n.t_min_k, n.n, n.gamma_opt.0)?,
                    c.temperature_k,
                ),
            });
        }
        let lookup = |name: &str| -> Result<usize, CliError> {
            order
                .iter()
                .position(|c| c.name == name)
                .ok_or_else(|| CliError::Config(format!("unknown component {name:?}")))
        };
        let port = |s: &str| -> Result<PortRef, CliError> {
            let (name, p) = s
                .rsplit_once(':')
                .ok_or_else(|| CliError::Config(format!("port reference {s:?} must be \"name:port\"")))?;
            let p: usize = p
                .parse()
                .map_err(|_| CliError::Config(format!("bad port number in {s:?}")))?;
            Ok(PortRef::new(lookup(name)?, port_index(p, name)?))
        };
        let connections = self
            .connections
            .iter()
            .map(|[a, b]| Ok((port(a)?, port(b)?)))
            .collect::<Result<Vec<_>, CliError>>()?;
        let topology = SystemTopology::new(components, connections)?;
        let antennas = self.antennas.iter().map(|a| lookup(a)).collect::<Result<Vec<_>, _>>()?;
        let mut output_ports = Vec::new();
        let mut weights = Vec::new();
        for tap in &self.outputs {
            let p = port(&tap.port)?;
            if p.port >= topology.components()[p.component].n_ports() {
                return Err(CliError::Config(format!(
                    "output {:?} names a port the component lacks",
                    tap.port
                )));
            }
            output_ports.push(topology.global_index(p));
            weights.push(tap.weight.map(|w| w.0).unwrap_or(Complex64::new(1.0, 0.0)));
        }
        Ok(GenericSystem {
            topology,
            antennas,
            output_ports,
            weights,
        })
    }
}
