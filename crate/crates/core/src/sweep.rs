//! Parameter sweeps, Smith-chart contour grids, null search, matching
//! network search and Monte-Carlo mismatch studies over the canceler.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::canceler::{
    active_reflection_at_lna, build_canceler_topology, extrapolated_lna_noise_params, CancelerSystemSpec,
    CancelerTopology, HybridPorts, HybridSpec, MatchNetwork, StubMatchSpec,
};
use crate::error::{Error, Result};
use crate::gainmod::{correlation_gain_factored, Normalization, SourceExcitation};
use crate::network::FrequencyResponse;
use crate::noisewave::{bosma_uniform, NoiseEvaluator, NoiseSources};
use crate::units::{polar_deg, CMatrix, T0};

/// Null refinement resolution, degrees.
pub const REFINE_STEP_DEG: f64 = 0.005;

/// Default ratio of a null's depth to the scan peak.
pub const DEFAULT_DEPTH_RATIO: f64 = 1e-2;

/// Inclusive grid `start, start + step, ..., stop`.
///
/// `stop` is included when it lies within a millionth of a step of the
/// lattice.
pub fn grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !start.is_finite() || !stop.is_finite() {
        return Err(Error::InvalidParameter(format!("grid step must be > 0, got {step}")));
    }
    if start > stop {
        return Err(Error::InvalidParameter(format!(
            "grid start {start} exceeds stop {stop}"
        )));
    }
    let n = ((stop - start) / step + 1e-6).floor() as usize;
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}

/// Quantities evaluated at a sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Output {
    Trec,
    T12,
    G12,
    GammaAct,
}

impl Output {
    pub const ALL: [Output; 4] = [Output::Trec, Output::T12, Output::G12, Output::GammaAct];
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PointMetrics {
    /// Beam-equivalent receiver temperature, K.
    pub trec: Option<f64>,
    /// Mutual coherence of the two amplifier outputs, K.
    pub t12: Option<Complex64>,
    /// Correlation gain for antenna-array thermal excitation.
    pub g12: Option<Complex64>,
    /// Active reflection at each amplifier input.
    pub gamma_act: Option<[Complex64; 2]>,
}

/// Evaluates the requested outputs at frequency `f`.
///
/// `G12` uses the antenna array's own Bosma correlation as the excitation,
/// with the two antenna ports as the input slots.
pub fn evaluate_point(spec: &CancelerSystemSpec, f: f64, outputs: &[Output]) -> Result<PointMetrics> {
    let built = build_canceler_topology(spec, f)?;
    let eval = NoiseEvaluator::new(&built.topology, f)?;
    let mut m = PointMetrics::default();
    if outputs.contains(&Output::Trec) {
        let w = built.beam_weights(&spec.weights);
        m.trec = Some(eval.receiver_temperature(&w, &[built.antenna])?);
    }
    if outputs.contains(&Output::T12) {
        m.t12 = Some(coherence(&built, &eval)?);
    }
    if outputs.contains(&Output::G12) {
        m.g12 = Some(antenna_correlation_gain(&built, &eval, f)?);
    }
    if outputs.contains(&Output::GammaAct) {
        m.gamma_act = Some(active_reflection_at_lna(spec, f)?);
    }
    Ok(m)
}

fn coherence(built: &CancelerTopology, eval: &NoiseEvaluator<'_>) -> Result<Complex64> {
    eval.coherence(
        &built.output_selector(0),
        &built.output_selector(1),
        &NoiseSources::physical(&built.topology),
    )
}

fn antenna_correlation_gain(built: &CancelerTopology, eval: &NoiseEvaluator<'_>, f: f64) -> Result<Complex64> {
    let s_a = built.topology.components()[built.antenna].response.at(f)?;
    let a = bosma_uniform(&s_a, T0);
    let exc = SourceExcitation::embed(built.dim(), &built.antenna_ports, a.matrix());
    correlation_gain_factored(
        &eval.system,
        &eval.factored,
        &exc,
        &built.output_selector(0),
        &built.output_selector(1),
        &built.antenna_selector(0),
        &built.antenna_selector(1),
        Normalization::CrossTerm,
    )
}

/// `|T12|` at `f`, K.
pub fn coherence_magnitude(spec: &CancelerSystemSpec, f: f64) -> Result<f64> {
    let built = build_canceler_topology(spec, f)?;
    let eval = NoiseEvaluator::new(&built.topology, f)?;
    Ok(coherence(&built, &eval)?.norm())
}

/// Receiver temperature at `f`, K.
pub fn receiver_temperature(spec: &CancelerSystemSpec, f: f64) -> Result<f64> {
    Ok(evaluate_point(spec, f, &[Output::Trec])?.trec.expect("requested"))
}

/// What a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    /// Phase of both ideal hybrids, degrees.
    HybridPhase,
    /// Both shifter delays together, degrees.
    ShifterPhase,
    /// Shifter delay of channel 1 or 2 alone, degrees.
    ShifterPhase1,
    ShifterPhase2,
    /// Analysis frequency, Hz.
    Frequency,
}

impl SweepParameter {
    /// Spec and frequency for parameter value `x`.
    pub fn apply(&self, spec: &CancelerSystemSpec, f: f64, x: f64) -> (CancelerSystemSpec, f64) {
        let mut s = spec.clone();
        match self {
            SweepParameter::HybridPhase => s = s.with_hybrid_phase(x),
            SweepParameter::ShifterPhase => s.phase_shifts_deg = [x, x],
            SweepParameter::ShifterPhase1 => s.phase_shifts_deg[0] = x,
            SweepParameter::ShifterPhase2 => s.phase_shifts_deg[1] = x,
            SweepParameter::Frequency => return (s, x),
        }
        (s, f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
    pub outputs: Vec<Output>,
    /// Frequency for non-frequency sweeps, Hz.
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub metrics: PointMetrics,
    /// Set when the point failed; metrics are then empty.
    pub error: Option<String>,
}

/// Evaluates every grid point. Failing points come back as flagged rows.
pub fn run_sweep(spec: &CancelerSystemSpec, sweep: &SweepSpec) -> Result<Vec<SweepRow>> {
    let xs = grid(sweep.start, sweep.stop, sweep.step)?;
    Ok(xs
        .par_iter()
        .map(|&x| {
            let (s, f) = sweep.parameter.apply(spec, sweep.frequency, x);
            match evaluate_point(&s, f, &sweep.outputs) {
                Ok(metrics) => SweepRow {
                    value: x,
                    metrics,
                    error: None,
                },
                Err(e) => {
                    log::warn!("sweep point {x} failed: {e}");
                    SweepRow {
                        value: x,
                        metrics: PointMetrics::default(),
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect())
}

/// Row with the smallest value of `key`, ignoring failed rows.
pub fn argmin_row(rows: &[SweepRow], key: impl Fn(&PointMetrics) -> Option<f64>) -> Option<&SweepRow> {
    rows.iter()
        .filter_map(|r| key(&r.metrics).map(|v| (r, v)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(r, _)| r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContourMetric {
    Trec,
    T12,
}

/// Polar sampling of the Smith chart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmithGrid {
    pub radius_step: f64,
    pub phase_step_deg: f64,
    /// Largest sampled radius, < 1.
    pub max_radius: f64,
}

impl SmithGrid {
    /// Sample points: the centre once, then rings at every radius step.
    pub fn points(&self) -> Result<Vec<Complex64>> {
        if !(self.max_radius < 1.0) {
            return Err(Error::InvalidParameter("Smith grid radius must stay below 1".into()));
        }
        let radii = grid(0.0, self.max_radius, self.radius_step)?;
        let phases = grid(0.0, 360.0 - self.phase_step_deg * 0.5, self.phase_step_deg)?;
        let mut out = vec![Complex64::new(0.0, 0.0)];
        for &r in radii.iter().skip(1) {
            out.extend(phases.iter().map(|&p| polar_deg(r, p)));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContourResult {
    pub points: Vec<(Complex64, f64)>,
    pub argmin: Complex64,
    pub min: f64,
}

/// Evaluates `metric` with both amplifiers' `Γopt` set to each grid point.
pub fn gamma_contour_grid(
    spec: &CancelerSystemSpec,
    f: f64,
    smith: &SmithGrid,
    metric: ContourMetric,
) -> Result<ContourResult> {
    let gammas = smith.points()?;
    let values: Vec<f64> = gammas
        .par_iter()
        .map(|&g| {
            let s = spec.clone().with_gamma_opt(g);
            match metric {
                ContourMetric::Trec => receiver_temperature(&s, f),
                ContourMetric::T12 => coherence_magnitude(&s, f),
            }
        })
        .collect::<Result<_>>()?;
    let (i, &min) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("grid is never empty");
    Ok(ContourResult {
        argmin: gammas[i],
        min,
        points: gammas.into_iter().zip(values).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullSearchConfig {
    pub lo: f64,
    /// Exclusive when `periodic`, inclusive otherwise.
    pub hi: f64,
    pub coarse_step: f64,
    pub refine_step: f64,
    /// A local minimum counts as a null when it is at most this fraction of
    /// the scan peak.
    pub depth_ratio: f64,
    /// Whether the range wraps (`hi - lo` is one period).
    pub periodic: bool,
}

impl NullSearchConfig {
    /// Periodic search over `[0, period)`.
    pub fn periodic(period: f64, coarse_step: f64) -> Self {
        Self {
            lo: 0.0,
            hi: period,
            coarse_step,
            refine_step: REFINE_STEP_DEG,
            depth_ratio: DEFAULT_DEPTH_RATIO,
            periodic: true,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.coarse_step > 0.0 && self.refine_step > 0.0 && self.refine_step <= self.coarse_step) {
            return Err(Error::InvalidParameter("need 0 < refine_step <= coarse_step".into()));
        }
        if !(self.lo < self.hi) {
            return Err(Error::InvalidParameter("null search range is empty".into()));
        }
        if !(self.depth_ratio > 0.0) {
            return Err(Error::InvalidParameter("depth ratio must be > 0".into()));
        }
        Ok(())
    }

    fn wrap(&self, x: f64) -> f64 {
        if self.periodic {
            self.lo + (x - self.lo).rem_euclid(self.hi - self.lo)
        } else {
            x
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Null {
    pub location: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NullSearchResult {
    /// Nulls sorted by value, deepest first.
    pub nulls: Vec<Null>,
    /// Every refined local minimum, nulls included.
    pub minima: Vec<Null>,
    pub resolution: f64,
    pub peak: f64,
    /// The metric is identically zero over the scan.
    pub degenerate: bool,
}

impl NullSearchResult {
    pub fn deepest(&self) -> Option<Null> {
        self.minima.first().copied()
    }
}

/// Coarse scan followed by refinement on the `refine_step` lattice within
/// one coarse step of each coarse local minimum.
pub fn find_minima<F>(metric: F, cfg: &NullSearchConfig) -> Result<NullSearchResult>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    cfg.validate()?;
    let xs = if cfg.periodic {
        let n = ((cfg.hi - cfg.lo) / cfg.coarse_step - 1e-9).ceil() as usize;
        (0..n).map(|i| cfg.lo + i as f64 * cfg.coarse_step).collect()
    } else {
        grid(cfg.lo, cfg.hi, cfg.coarse_step)?
    };
    let ys: Vec<f64> = xs.par_iter().map(|&x| metric(x)).collect::<Result<_>>()?;
    let peak = ys.iter().cloned().fold(0.0, f64::max);
    let n = xs.len();
    if peak == 0.0 {
        return Ok(NullSearchResult {
            nulls: Vec::new(),
            minima: Vec::new(),
            resolution: cfg.refine_step,
            peak,
            degenerate: true,
        });
    }
    let mut coarse = Vec::new();
    for i in 0..n {
        let (left, right) = if cfg.periodic {
            (Some(ys[(i + n - 1) % n]), Some(ys[(i + 1) % n]))
        } else {
            (i.checked_sub(1).map(|j| ys[j]), ys.get(i + 1).copied())
        };
        let le = left.is_none_or(|l| ys[i] <= l);
        let re = right.is_none_or(|r| ys[i] < r);
        if le && re && n > 1 {
            coarse.push(xs[i]);
        }
    }
    if coarse.is_empty() {
        return Err(Error::NoMinimum { lo: cfg.lo, hi: cfg.hi });
    }
    let steps = (cfg.coarse_step / cfg.refine_step).ceil() as i64;
    let mut minima: Vec<Null> = Vec::new();
    for &xc in &coarse {
        // Refine on the lattice lo + k * refine_step.
        let k0 = ((xc - cfg.lo) / cfg.refine_step).round() as i64;
        let ks: Vec<i64> = (k0 - steps..=k0 + steps).collect();
        let vals: Vec<(f64, f64)> = ks
            .par_iter()
            .filter_map(|&k| {
                let x = cfg.lo + k as f64 * cfg.refine_step;
                if !cfg.periodic && (x < cfg.lo - 1e-12 || x > cfg.hi + 1e-12) {
                    return None;
                }
                Some(metric(cfg.wrap(x)).map(|v| (cfg.wrap(x), v)))
            })
            .collect::<Result<_>>()?;
        let best = vals
            .iter()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("refine window is never empty");
        let candidate = Null {
            location: best.0,
            value: best.1,
        };
        let dup = minima
            .iter()
            .any(|m| separation(m.location, candidate.location, cfg) < cfg.refine_step * 0.5);
        if !dup {
            minima.push(candidate);
        }
    }
    minima.sort_by(|a, b| a.value.total_cmp(&b.value));
    let nulls = minima
        .iter()
        .filter(|m| m.value <= cfg.depth_ratio * peak)
        .copied()
        .collect();
    Ok(NullSearchResult {
        nulls,
        minima,
        resolution: cfg.refine_step,
        peak,
        degenerate: false,
    })
}

fn separation(a: f64, b: f64, cfg: &NullSearchConfig) -> f64 {
    let d = (a - b).abs();
    if cfg.periodic {
        d.min((cfg.hi - cfg.lo) - d)
    } else {
        d
    }
}

/// Distance between two angles modulo `period`.
pub fn circular_separation(a: f64, b: f64, period: f64) -> f64 {
    let d = (a - b).rem_euclid(period);
    d.min(period - d)
}

/// `|T12|` nulls versus `parameter`.
pub fn find_coherence_nulls(
    spec: &CancelerSystemSpec,
    f: f64,
    parameter: SweepParameter,
    cfg: &NullSearchConfig,
) -> Result<NullSearchResult> {
    find_minima(
        |x| {
            let (s, f) = parameter.apply(spec, f, x);
            coherence_magnitude(&s, f)
        },
        cfg,
    )
}

/// Receiver temperature minima versus `parameter`.
pub fn find_trec_minima(
    spec: &CancelerSystemSpec,
    f: f64,
    parameter: SweepParameter,
    cfg: &NullSearchConfig,
) -> Result<NullSearchResult> {
    find_minima(
        |x| {
            let (s, f) = parameter.apply(spec, f, x);
            receiver_temperature(&s, f)
        },
        cfg,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchCandidate {
    pub matching: StubMatchSpec,
    /// The two deepest `|T12|` nulls versus joint shifter phase, degrees.
    pub nulls: [f64; 2],
    /// Circular separation of the two nulls modulo the search period.
    pub separation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchSearchSpec {
    /// Line lengths in wavelengths.
    pub lengths: Vec<f64>,
    /// Shunt capacitances in farads.
    pub capacitances: Vec<f64>,
    pub coincidence_tolerance_deg: f64,
    pub null_search: NullSearchConfig,
}

impl MatchSearchSpec {
    /// Lines 0 to 1 λ in 0.1 λ steps and capacitors 1 pF to 1 nF in 10 pF
    /// steps.
    pub fn default_grid(coincidence_tolerance_deg: f64, null_search: NullSearchConfig) -> Self {
        Self {
            lengths: (0..=10).map(|i| i as f64 * 0.1).collect(),
            capacitances: (0..100).map(|i| (1.0 + 10.0 * i as f64) * 1e-12).collect(),
            coincidence_tolerance_deg,
            null_search,
        }
    }
}

/// Stub matches whose two `|T12|` nulls versus joint shifter phase lie
/// within the coincidence tolerance, closest first.
pub fn matching_search(spec: &CancelerSystemSpec, f: f64, search: &MatchSearchSpec) -> Result<Vec<MatchCandidate>> {
    let period = search.null_search.hi - search.null_search.lo;
    let mut grid_points = Vec::new();
    for &l in &search.lengths {
        for &c in &search.capacitances {
            grid_points.push(StubMatchSpec::new(l, c)?);
        }
    }
    let mut out: Vec<MatchCandidate> = grid_points
        .into_par_iter()
        .filter_map(|m| {
            let s = spec.clone().with_matches(Some(MatchNetwork::Stub(m)));
            let r = match find_coherence_nulls(&s, f, SweepParameter::ShifterPhase, &search.null_search) {
                Ok(r) => r,
                Err(e) => {
                    log::debug!("match {m:?} skipped: {e}");
                    return None;
                }
            };
            if r.nulls.len() < 2 {
                return None;
            }
            let (a, b) = (r.nulls[0].location, r.nulls[1].location);
            let separation = circular_separation(a, b, period);
            (separation < search.coincidence_tolerance_deg).then_some(MatchCandidate {
                matching: m,
                nulls: [a, b],
                separation,
            })
        })
        .collect();
    out.sort_by(|a, b| a.separation.total_cmp(&b.separation));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tuning {
    /// Keep the spec's shifter settings.
    None,
    /// One delay shared by both shifters.
    Joint,
    /// Each shifter tuned on its own.
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloSpec {
    /// Each perturbed quantity `q` becomes `q (1 + u)`, `u ~ U(-fraction, fraction)`.
    pub relative_fraction: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Extra absolute phase jitter `U(-j, j)` degrees; 0 disables it.
    pub phase_jitter_deg: f64,
    /// Coarse step of the tuning scans, degrees.
    pub coarse_step_deg: f64,
}

impl MonteCarloSpec {
    pub fn new(relative_fraction: f64, iterations: usize, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&relative_fraction) {
            return Err(Error::InvalidParameter(format!(
                "relative fraction must be in [0, 1), got {relative_fraction}"
            )));
        }
        if iterations == 0 {
            return Err(Error::InvalidParameter("iterations must be positive".into()));
        }
        Ok(Self {
            relative_fraction,
            iterations,
            seed,
            phase_jitter_deg: 0.0,
            coarse_step_deg: 3.0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloRow {
    pub iteration: usize,
    pub min_t12: f64,
    pub phase_shifts_deg: [f64; 2],
}

/// Generator for iteration `iteration`: a ChaCha8 stream keyed by `seed`
/// with the iteration index as stream number.
pub fn iteration_rng(seed: u64, iteration: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration as u64);
    rng
}

struct Perturber<'a> {
    rng: &'a mut ChaCha8Rng,
    fraction: f64,
    jitter: f64,
}

impl Perturber<'_> {
    fn factor(&mut self) -> f64 {
        1.0 + self.fraction * self.rng.random_range(-1.0..1.0)
    }

    fn jitter(&mut self) -> f64 {
        if self.jitter > 0.0 {
            self.jitter * self.rng.random_range(-1.0..1.0)
        } else {
            0.0
        }
    }

    fn complex(&mut self, z: Complex64) -> Complex64 {
        let mag = z.norm() * self.factor();
        let deg = z.arg().to_degrees() * self.factor() + self.jitter();
        if z.norm() == 0.0 {
            return z;
        }
        polar_deg(mag, deg)
    }

    fn matrix(&mut self, m: &CMatrix) -> CMatrix {
        let mut out = m.clone();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out[(i, j)] = self.complex(m[(i, j)]);
            }
        }
        out
    }

    fn response(&mut self, r: &FrequencyResponse, f: f64) -> Result<FrequencyResponse> {
        Ok(FrequencyResponse::Fixed(self.matrix(&r.at(f)?)))
    }
}

/// Spec at `f` with every S-parameter element of every component and each
/// amplifier `Γopt` perturbed. Shifters are not perturbed.
pub fn perturb_spec(
    spec: &CancelerSystemSpec,
    f: f64,
    fraction: f64,
    phase_jitter_deg: f64,
    rng: &mut ChaCha8Rng,
) -> Result<CancelerSystemSpec> {
    let mut p = Perturber {
        rng,
        fraction,
        jitter: phase_jitter_deg,
    };
    let mut out = spec.clone();
    out.antenna = p.response(&spec.antenna, f)?;
    out.replica = match &spec.replica {
        Some(r) => Some(p.response(r, f)?),
        None => None,
    };
    for i in 0..2 {
        let ports = spec.hybrids[i].ports();
        let s = p.matrix(&spec.hybrids[i].s_at(f)?);
        out.hybrids[i] = HybridSpec::Measured {
            response: FrequencyResponse::Fixed(s),
            ports: if matches!(spec.hybrids[i], HybridSpec::Ideal { .. }) {
                HybridPorts::THREE_PORT
            } else {
                ports
            },
        };
    }
    for i in 0..2 {
        if let Some(m) = &spec.matches[i] {
            out.matches[i] = Some(MatchNetwork::Response(FrequencyResponse::Fixed(p.matrix(&m.s_at(f)?))));
        }
    }
    for i in 0..2 {
        out.lnas[i].response = p.response(&spec.lnas[i].response, f)?;
        let g = p.complex(spec.lnas[i].noise.gamma_opt);
        if g.norm() >= 1.0 {
            return Err(Error::InvalidParameter("perturbed Gamma_opt left the unit disk".into()));
        }
        out.lnas[i].noise.gamma_opt = g;
    }
    Ok(out)
}

/// Best joint shifter delay over `[0, 180)`.
pub fn tune_joint(spec: &CancelerSystemSpec, f: f64, coarse_step: f64) -> Result<Null> {
    let cfg = NullSearchConfig::periodic(180.0, coarse_step);
    let r = find_coherence_nulls(spec, f, SweepParameter::ShifterPhase, &cfg)?;
    r.deepest().ok_or(Error::NoMinimum { lo: 0.0, hi: 180.0 })
}

/// Best independent shifter delays over `[0, 180) x [0, 360)`, which
/// covers every distinct setting since shifting both by 180° leaves `|T12|`
/// unchanged. The joint optimum is always a candidate.
pub fn tune_independent(spec: &CancelerSystemSpec, f: f64, coarse_step: f64) -> Result<([f64; 2], f64)> {
    let eval = |d1: f64, d2: f64| -> Result<f64> {
        let mut s = spec.clone();
        s.phase_shifts_deg = [d1, d2];
        coherence_magnitude(&s, f)
    };
    let joint = tune_joint(spec, f, coarse_step)?;
    let n1 = (180.0 / coarse_step).round() as usize;
    let n2 = (360.0 / coarse_step).round() as usize;
    let coarse: Vec<((f64, f64), f64)> = (0..n1 * n2)
        .into_par_iter()
        .map(|k| {
            let (d1, d2) = ((k / n2) as f64 * coarse_step, (k % n2) as f64 * coarse_step);
            eval(d1, d2).map(|v| ((d1, d2), v))
        })
        .collect::<Result<_>>()?;
    // Keep coarse local minima (8-neighbour, wrapped).
    let at = |i: usize, j: usize| coarse[(i % n1) * n2 + (j % n2)].1;
    let mut seeds: Vec<((f64, f64), f64)> = Vec::new();
    for i in 0..n1 {
        for j in 0..n2 {
            let v = at(i, j);
            let mut is_min = true;
            for di in [n1 - 1, 0, 1] {
                for dj in [n2 - 1, 0, 1] {
                    if (di, dj) != (0, 0) && at(i + di, j + dj) < v {
                        is_min = false;
                    }
                }
            }
            if is_min {
                seeds.push(coarse[i * n2 + j]);
            }
        }
    }
    seeds.sort_by(|a, b| a.1.total_cmp(&b.1));
    seeds.truncate(4);
    seeds.push(((joint.location, joint.location), joint.value));

    let mut best = ((joint.location, joint.location), joint.value);
    let levels = [(coarse_step, 0.2), (0.2, 0.02), (0.02, REFINE_STEP_DEG)];
    for seed in seeds {
        let mut centre = seed.0;
        let mut value = seed.1;
        for &(half, step) in &levels {
            let r = (half / step).ceil() as i64;
            let c1 = (centre.0 / step).round() as i64;
            let c2 = (centre.1 / step).round() as i64;
            let side = (2 * r + 1) as usize;
            let level: Vec<((f64, f64), f64)> = (0..side * side)
                .into_par_iter()
                .map(|k| {
                    let d1 = (c1 - r + (k / side) as i64) as f64 * step;
                    let d2 = (c2 - r + (k % side) as i64) as f64 * step;
                    eval(d1, d2).map(|v| ((d1, d2), v))
                })
                .collect::<Result<_>>()?;
            let (p, v) = level
                .into_iter()
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("non-empty level");
            if v <= value {
                centre = p;
                value = v;
            }
        }
        if value < best.1 {
            best = (centre, value);
        }
    }
    let wrap = |x: f64, p: f64| x.rem_euclid(p);
    Ok(([wrap(best.0 .0, 360.0), wrap(best.0 .1, 360.0)], best.1))
}

/// Minimum `|T12|` after tuning, with the shifter delays used.
pub fn tuned_min_coherence(
    spec: &CancelerSystemSpec,
    f: f64,
    tuning: Tuning,
    coarse_step: f64,
) -> Result<([f64; 2], f64)> {
    match tuning {
        Tuning::None => Ok((spec.phase_shifts_deg, coherence_magnitude(spec, f)?)),
        Tuning::Joint => {
            let n = tune_joint(spec, f, coarse_step)?;
            Ok(([n.location, n.location], n.value))
        }
        Tuning::Independent => tune_independent(spec, f, coarse_step),
    }
}

/// Monte-Carlo study of `min |T12|` under random component mismatch.
///
/// Iteration `k` draws from [`iteration_rng`]`(seed, k)`, so results do not
/// depend on scheduling.
pub fn monte_carlo(
    spec: &CancelerSystemSpec,
    f: f64,
    mc: &MonteCarloSpec,
    tuning: Tuning,
) -> Result<Vec<MonteCarloRow>> {
    let base = spec.resolved_at(f)?;
    (0..mc.iterations)
        .into_par_iter()
        .map(|k| {
            let mut rng = iteration_rng(mc.seed, k);
            let s = perturb_spec(&base, f, mc.relative_fraction, mc.phase_jitter_deg, &mut rng)?;
            let (phase_shifts_deg, min_t12) = tuned_min_coherence(&s, f, tuning, mc.coarse_step_deg)?;
            Ok(MonteCarloRow {
                iteration: k,
                min_t12,
                phase_shifts_deg,
            })
        })
        .collect()
}

/// Share of rows with `min_t12 < threshold`.
pub fn success_share(rows: &[MonteCarloRow], threshold: f64) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    rows.iter().filter(|r| r.min_t12 < threshold).count() as f64 / rows.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Counts per `bin_width` bin from 0 up to the highest occupied bin;
/// values above `cutoff` are left out.
pub fn histogram(values: &[f64], bin_width: f64, cutoff: f64) -> Result<Vec<Bin>> {
    if !(bin_width > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "bin width must be > 0, got {bin_width}"
        )));
    }
    let kept: Vec<usize> = values
        .iter()
        .filter(|&&v| v >= 0.0 && v <= cutoff)
        .map(|&v| (v / bin_width).floor() as usize)
        .collect();
    let Some(&top) = kept.iter().max() else {
        return Ok(Vec::new());
    };
    let mut bins: Vec<Bin> = (0..=top)
        .map(|i| Bin {
            lo: i as f64 * bin_width,
            hi: (i + 1) as f64 * bin_width,
            count: 0,
        })
        .collect();
    for i in kept {
        bins[i].count += 1;
    }
    Ok(bins)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WidebandRow {
    pub frequency: f64,
    /// The two deepest `|T12|` minima versus joint shifter phase.
    pub coherence_nulls: Vec<Null>,
    pub trec_optimum: Option<Null>,
}

/// Per-frequency optimal joint shifter settings. When `extrapolate_noise`
/// is set the amplifiers take the low-frequency noise-parameter
/// extrapolation at each frequency.
pub fn wideband_scan(
    spec: &CancelerSystemSpec,
    frequencies: &[f64],
    extrapolate_noise: bool,
    cfg: &NullSearchConfig,
) -> Result<Vec<WidebandRow>> {
    frequencies
        .iter()
        .map(|&f| {
            let mut s = spec.clone();
            if extrapolate_noise {
                let p = extrapolated_lna_noise_params(f * 1e-9)?;
                for l in &mut s.lnas {
                    l.noise = p;
                }
            }
            let s = s.resolved_at(f)?;
            let nulls = find_coherence_nulls(&s, f, SweepParameter::ShifterPhase, cfg)?;
            let trec = find_trec_minima(&s, f, SweepParameter::ShifterPhase, cfg)?;
            Ok(WidebandRow {
                frequency: f,
                coherence_nulls: nulls.minima.into_iter().take(2).collect(),
                trec_optimum: trec.deepest(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_inclusive() {
        let g = grid(0.0, 180.0, 0.1).unwrap();
        assert_eq!(g.len(), 1801);
        assert_eq!(g[0], 0.0);
        assert!((g[1800] - 180.0).abs() < 1e-9);
        assert_eq!(grid(1.0, 1.0, 0.5).unwrap(), vec![1.0]);
        assert!(grid(1.0, 0.0, 0.5).is_err());
        assert!(grid(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn histogram_cases() {
        assert!(histogram(&[], 0.01, 1.0).unwrap().is_empty());
        let h = histogram(&[0.005, 0.015], 0.01, 1.0).unwrap();
        assert_eq!(h.iter().map(|b| b.count).collect::<Vec<_>>(), vec![1, 1]);
        assert!(histogram(&[2.0, 3.0], 0.01, 1.0).unwrap().is_empty());
        assert!(histogram(&[0.1], 0.0, 1.0).is_err());
    }

    #[test]
    fn minima_of_cosine() {
        let cfg = NullSearchConfig::periodic(360.0, 5.0);
        let r = find_minima(|x: f64| Ok(1.0 + (x.to_radians()).cos()), &cfg).unwrap();
        assert_eq!(r.nulls.len(), 1);
        assert!((r.nulls[0].location - 180.0).abs() < 1e-9);
    }

    #[test]
    fn minima_flat_zero_is_degenerate() {
        let cfg = NullSearchConfig::periodic(180.0, 1.0);
        let r = find_minima(|_| Ok(0.0), &cfg).unwrap();
        assert!(r.degenerate);
        assert!(r.nulls.is_empty());
    }

    #[test]
    fn minima_refined_on_lattice() {
        let cfg = NullSearchConfig::periodic(180.0, 1.0);
        let r = find_minima(|x: f64| Ok((x - 37.1234).abs()), &cfg).unwrap();
        assert!((r.nulls[0].location - 37.125).abs() < 1e-9);
    }

    #[test]
    fn wrap_around_minimum() {
        let cfg = NullSearchConfig::periodic(180.0, 1.0);
        let r = find_minima(|x: f64| Ok(circular_separation(x, 179.6, 180.0)), &cfg).unwrap();
        assert_eq!(r.nulls.len(), 1);
        assert!((r.nulls[0].location - 179.6).abs() < 1e-9);
    }

    #[test]
    fn circular() {
        assert!((circular_separation(1.0, 179.0, 180.0) - 2.0).abs() < 1e-12);
        assert!((circular_separation(10.0, 20.0, 180.0) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn rng_streams_are_distinct_and_repeatable() {
        let a: f64 = iteration_rng(7, 0).random();
        let b: f64 = iteration_rng(7, 1).random();
        let c: f64 = iteration_rng(7, 0).random();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn zero_fraction_is_identity() {
        let spec = CancelerSystemSpec::reference().resolved_at(1e8).unwrap();
        let mut rng = iteration_rng(1, 0);
        let p = perturb_spec(&spec, 1e8, 0.0, 0.0, &mut rng).unwrap();
        let a = coherence_magnitude(&spec, 1e8).unwrap();
        let b = coherence_magnitude(&p, 1e8).unwrap();
        assert!((a - b).abs() <= 1e-12 * a.max(1.0));
    }
}
