//! System assembly: block scattering matrix, connection matrix and the
//! interconnection solve `Q = (I - S K)^-1`.

use std::collections::HashSet;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{inf_norm, DenseLu};
use crate::noisewave::NoiseParams;
use crate::touchstone::{interpolate_at, TouchstoneDocument};
use crate::units::{CMatrix, CVector};

/// Condition estimate above which an interconnection is rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// Residual bound on `(I - S K) Q - I` (infinity norm).
pub const Q_RESIDUAL_TOLERANCE: f64 = 1e-10;

/// A port addressed by component and 0-based port number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PortRef {
    pub component: usize,
    pub port: usize,
}

impl PortRef {
    pub fn new(component: usize, port: usize) -> Self {
        Self { component, port }
    }
}

/// Scattering data of one component over frequency.
#[derive(Debug, Clone, PartialEq)]
pub enum FrequencyResponse {
    /// Frequency-independent matrix.
    Fixed(CMatrix),
    /// Tabulated data, linearly interpolated.
    Sampled(TouchstoneDocument),
}

impl FrequencyResponse {
    /// Wraps a Touchstone document after checking it holds 50-ohm S data.
    pub fn from_touchstone(doc: TouchstoneDocument) -> Result<Self> {
        doc.ensure_analysis_ready()?;
        doc.validate()?;
        Ok(FrequencyResponse::Sampled(doc))
    }

    pub fn n_ports(&self) -> usize {
        match self {
            FrequencyResponse::Fixed(m) => m.nrows(),
            FrequencyResponse::Sampled(doc) => doc.n_ports,
        }
    }

    pub fn at(&self, f: f64) -> Result<CMatrix> {
        match self {
            FrequencyResponse::Fixed(m) => Ok(m.clone()),
            FrequencyResponse::Sampled(doc) => interpolate_at(doc, f),
        }
    }

    /// Frequency span covered, or `None` for fixed data.
    pub fn range(&self) -> Option<(f64, f64)> {
        match self {
            FrequencyResponse::Fixed(_) => None,
            FrequencyResponse::Sampled(doc) => Some(doc.frequency_range()),
        }
    }
}

impl From<CMatrix> for FrequencyResponse {
    fn from(m: CMatrix) -> Self {
        FrequencyResponse::Fixed(m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ComponentKind {
    Passive {
        temperature: f64,
    },
    /// Two-port amplifier described by its noise parameters.
    Active {
        noise: NoiseParams,
        temperature: f64,
    },
}

impl ComponentKind {
    pub fn temperature(&self) -> f64 {
        match *self {
            ComponentKind::Passive { temperature } | ComponentKind::Active { temperature, .. } => temperature,
        }
    }

    pub fn is_active(&self) -> bool {
        matches!(self, ComponentKind::Active { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSpec {
    pub name: String,
    pub response: FrequencyResponse,
    pub kind: ComponentKind,
}

impl ComponentSpec {
    pub fn passive(name: impl Into<String>, response: impl Into<FrequencyResponse>, temperature: f64) -> Self {
        Self {
            name: name.into(),
            response: response.into(),
            kind: ComponentKind::Passive { temperature },
        }
    }

    pub fn active(
        name: impl Into<String>,
        response: impl Into<FrequencyResponse>,
        noise: NoiseParams,
        temperature: f64,
    ) -> Self {
        Self {
            name: name.into(),
            response: response.into(),
            kind: ComponentKind::Active { noise, temperature },
        }
    }

    pub fn n_ports(&self) -> usize {
        self.response.n_ports()
    }
}

/// Components, their port-to-port connections and the derived global port
/// numbering. Passive components always precede active ones.
#[derive(Debug, Clone)]
pub struct SystemTopology {
    components: Vec<ComponentSpec>,
    connections: Vec<(PortRef, PortRef)>,
    offsets: Vec<usize>,
    total_ports: usize,
    /// Connection partner of each global port.
    partner: Vec<Option<usize>>,
}

impl SystemTopology {
    pub fn new(components: Vec<ComponentSpec>, connections: Vec<(PortRef, PortRef)>) -> Result<Self> {
        let mut offsets = Vec::with_capacity(components.len());
        let mut total = 0;
        let mut seen_active = false;
        for (i, comp) in components.iter().enumerate() {
            if let FrequencyResponse::Fixed(m) = &comp.response {
                if m.nrows() != m.ncols() {
                    return Err(Error::Topology(format!(
                        "component {:?} has a non-square S matrix",
                        comp.name
                    )));
                }
            }
            let n = comp.n_ports();
            if n == 0 {
                return Err(Error::Topology(format!("component {:?} has no ports", comp.name)));
            }
            let temperature = comp.kind.temperature();
            if !(temperature >= 0.0) || !temperature.is_finite() {
                return Err(Error::Topology(format!(
                    "component {:?} has invalid temperature {temperature}",
                    comp.name
                )));
            }
            match comp.kind {
                ComponentKind::Active { .. } => {
                    if n != 2 {
                        return Err(Error::Topology(format!(
                            "active component {:?} must be a two-port, has {n} ports",
                            comp.name
                        )));
                    }
                    seen_active = true;
                }
                ComponentKind::Passive { .. } if seen_active => {
                    return Err(Error::Topology(format!(
                        "passive component {} ({:?}) listed after an active component",
                        i, comp.name
                    )));
                }
                ComponentKind::Passive { .. } => {}
            }
            offsets.push(total);
            total += n;
        }

        let mut partner = vec![None; total];
        let mut used = HashSet::new();
        for &(p, q) in &connections {
            for r in [p, q] {
                if r.component >= components.len() || r.port >= components[r.component].n_ports() {
                    return Err(Error::Topology(format!(
                        "dangling port reference (component {}, port {})",
                        r.component, r.port
                    )));
                }
            }
            if p == q {
                return Err(Error::Topology(format!(
                    "port {} of component {} connected to itself",
                    p.port, p.component
                )));
            }
            for r in [p, q] {
                if !used.insert(r) {
                    return Err(Error::Topology(format!(
                        "port {} of component {} used in more than one connection",
                        r.port, r.component
                    )));
                }
            }
            let gp = offsets[p.component] + p.port;
            let gq = offsets[q.component] + q.port;
            partner[gp] = Some(gq);
            partner[gq] = Some(gp);
        }

        Ok(Self {
            components,
            connections,
            offsets,
            total_ports: total,
            partner,
        })
    }

    pub fn components(&self) -> &[ComponentSpec] {
        &self.components
    }

    pub fn connections(&self) -> &[(PortRef, PortRef)] {
        &self.connections
    }

    pub fn total_ports(&self) -> usize {
        self.total_ports
    }

    pub fn offset(&self, component: usize) -> usize {
        self.offsets[component]
    }

    pub fn global_index(&self, port: PortRef) -> usize {
        self.offsets[port.component] + port.port
    }

    /// Global indices of the ports of `component`.
    pub fn component_ports(&self, component: usize) -> std::ops::Range<usize> {
        let start = self.offsets[component];
        start..start + self.components[component].n_ports()
    }

    pub fn port_ref(&self, global: usize) -> PortRef {
        let component = self.offsets.partition_point(|&o| o <= global) - 1;
        PortRef::new(component, global - self.offsets[component])
    }

    pub fn partner(&self, global: usize) -> Option<usize> {
        self.partner[global]
    }

    /// Ports not taking part in any connection, ascending.
    pub fn external_ports(&self) -> Vec<usize> {
        (0..self.total_ports).filter(|&g| self.partner[g].is_none()).collect()
    }

    /// Number of ports belonging to passive components; they form the
    /// leading block of the global numbering.
    pub fn passive_ports(&self) -> usize {
        self.components
            .iter()
            .take_while(|c| !c.kind.is_active())
            .map(ComponentSpec::n_ports)
            .sum()
    }

    /// The symmetric 0/1 connection matrix `K` with `a = K b`.
    pub fn build_k(&self) -> DMatrix<f64> {
        let mut k = DMatrix::zeros(self.total_ports, self.total_ports);
        for (i, p) in self.partner.iter().enumerate() {
            if let Some(j) = *p {
                k[(i, j)] = 1.0;
            }
        }
        k
    }

    pub fn find_component(&self, name: &str) -> Option<usize> {
        self.components.iter().position(|c| c.name == name)
    }
}

/// The topology evaluated at one frequency.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub frequency: f64,
    /// Block-diagonal scattering matrix.
    pub s: CMatrix,
    /// Per-component blocks in topology order.
    pub blocks: Vec<CMatrix>,
    pub k: DMatrix<f64>,
    partner: Vec<Option<usize>>,
    offsets: Vec<usize>,
    external: Vec<usize>,
}

pub fn assemble(topology: &SystemTopology, f: f64) -> Result<AssembledSystem> {
    let p = topology.total_ports();
    let mut s = CMatrix::zeros(p, p);
    let mut blocks = Vec::with_capacity(topology.components().len());
    for (i, comp) in topology.components().iter().enumerate() {
        let block = comp.response.at(f).map_err(|e| match e {
            Error::FrequencyOutOfRange { .. } => e,
            other => Error::Topology(format!("component {:?}: {other}", comp.name)),
        })?;
        let n = comp.n_ports();
        if block.nrows() != n || block.ncols() != n {
            return Err(Error::Topology(format!(
                "component {:?} returned a mis-sized block",
                comp.name
            )));
        }
        let o = topology.offset(i);
        s.view_mut((o, o), (n, n)).copy_from(&block);
        blocks.push(block);
    }
    Ok(AssembledSystem {
        frequency: f,
        s,
        blocks,
        k: topology.build_k(),
        partner: topology.partner.clone(),
        offsets: topology.offsets.clone(),
        external: topology.external_ports(),
    })
}

impl AssembledSystem {
    pub fn dim(&self) -> usize {
        self.s.nrows()
    }

    pub fn external_ports(&self) -> &[usize] {
        &self.external
    }

    pub fn block_offset(&self, component: usize) -> usize {
        self.offsets[component]
    }

    /// `S K`, formed by column moves since `K` only swaps connected ports.
    pub fn s_times_k(&self) -> CMatrix {
        let p = self.dim();
        let mut sk = CMatrix::zeros(p, p);
        for (j, partner) in self.partner.iter().enumerate() {
            if let Some(i) = *partner {
                sk.set_column(j, &self.s.column(i));
            }
        }
        sk
    }

    /// `I - S K`.
    pub fn system_matrix(&self) -> CMatrix {
        let p = self.dim();
        CMatrix::identity(p, p) - self.s_times_k()
    }

    /// Factors `I - S K`, rejecting ill-conditioned interconnections.
    pub fn factor(&self) -> Result<FactoredSystem> {
        let a = self.system_matrix();
        let lu = DenseLu::factor(&a);
        let condition = lu.condition_estimate();
        if !(condition <= MAX_CONDITION) {
            return Err(Error::UnstableInterconnection {
                freq: self.frequency,
                condition,
            });
        }
        Ok(FactoredSystem { lu, condition })
    }
}

/// LU factors of `I - S K` for repeated propagation solves.
#[derive(Debug, Clone)]
pub struct FactoredSystem {
    lu: DenseLu,
    pub condition: f64,
}

impl FactoredSystem {
    /// `Q x`.
    pub fn propagate(&self, x: &CVector) -> CVector {
        self.lu.solve(x)
    }

    /// `Q^H w`; the quadratic form `w^H Q C Q^H v` equals `u^H C u'` with
    /// `u = Q^H w`, `u' = Q^H v`.
    pub fn back_propagate(&self, w: &CVector) -> CVector {
        self.lu.solve_adjoint(w)
    }

    pub fn q(&self) -> CMatrix {
        self.lu.inverse()
    }
}

/// `Q = (I - S K)^-1`, checked against the residual bound.
pub fn compute_q(sys: &AssembledSystem) -> Result<CMatrix> {
    let factored = sys.factor()?;
    let q = factored.q();
    let p = sys.dim();
    let residual = inf_norm(&(sys.system_matrix() * &q - CMatrix::identity(p, p)));
    if !(residual <= Q_RESIDUAL_TOLERANCE) {
        return Err(Error::UnstableInterconnection {
            freq: sys.frequency,
            condition: factored.condition,
        });
    }
    Ok(q)
}

/// Composite scattering matrix seen at the external ports, ordered as
/// [`AssembledSystem::external_ports`].
pub fn reduce_to_external(sys: &AssembledSystem) -> Result<CMatrix> {
    let factored = sys.factor()?;
    let ext = sys.external_ports();
    let mut out = CMatrix::zeros(ext.len(), ext.len());
    let p = sys.dim();
    for (c, &j) in ext.iter().enumerate() {
        // Column j of Q S is Q applied to column j of S.
        let col = factored.propagate(&sys.s.column(j).into_owned());
        for (r, &i) in ext.iter().enumerate() {
            out[(r, c)] = col[i];
        }
        debug_assert_eq!(col.len(), p);
    }
    Ok(out)
}

/// Unit vector selecting global port `index` in a `dim`-port system.
pub fn selector(dim: usize, index: usize) -> CVector {
    let mut v = CVector::zeros(dim);
    v[index] = Complex64::new(1.0, 0.0);
    v
}

/// Weight vector with `weights[k]` at global port `ports[k]`.
pub fn weighted_selector(dim: usize, ports: &[usize], weights: &[Complex64]) -> CVector {
    assert_eq!(ports.len(), weights.len());
    let mut v = CVector::zeros(dim);
    for (&p, &w) in ports.iter().zip(weights) {
        v[p] += w;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::polar_deg;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn one_port(gamma: Complex64) -> ComponentSpec {
        ComponentSpec::passive("load", CMatrix::from_element(1, 1, gamma), 290.0)
    }

    fn attenuator(alpha: f64) -> ComponentSpec {
        ComponentSpec::passive(
            "att",
            CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(alpha, 0.0), c(alpha, 0.0), c(0.0, 0.0)]),
            290.0,
        )
    }

    #[test]
    fn no_connections_gives_zero_k() {
        let topo = SystemTopology::new(vec![attenuator(0.5), one_port(c(0.1, 0.0))], vec![]).unwrap();
        assert_eq!(topo.build_k(), DMatrix::zeros(3, 3));
        assert_eq!(topo.external_ports(), vec![0, 1, 2]);
    }

    #[test]
    fn two_one_ports_connected() {
        let topo = SystemTopology::new(
            vec![one_port(c(0.0, 0.0)), one_port(c(0.3, 0.0))],
            vec![(PortRef::new(0, 0), PortRef::new(1, 0))],
        )
        .unwrap();
        assert_eq!(topo.build_k(), DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        assert!(topo.external_ports().is_empty());
    }

    #[test]
    fn topology_errors() {
        let dup = SystemTopology::new(
            vec![attenuator(0.5), one_port(c(0.0, 0.0)), one_port(c(0.0, 0.0))],
            vec![
                (PortRef::new(0, 0), PortRef::new(1, 0)),
                (PortRef::new(0, 0), PortRef::new(2, 0)),
            ],
        );
        assert!(dup.unwrap_err().to_string().contains("more than one connection"));
        let dangling = SystemTopology::new(vec![attenuator(0.5)], vec![(PortRef::new(0, 0), PortRef::new(0, 5))]);
        assert!(dangling.unwrap_err().to_string().contains("dangling"));
        let missing = SystemTopology::new(vec![attenuator(0.5)], vec![(PortRef::new(0, 0), PortRef::new(3, 0))]);
        assert!(missing.unwrap_err().to_string().contains("dangling"));
        let own = SystemTopology::new(vec![attenuator(0.5)], vec![(PortRef::new(0, 1), PortRef::new(0, 1))]);
        assert!(own.unwrap_err().to_string().contains("itself"));
    }

    #[test]
    fn passive_after_active_rejected() {
        let lna = ComponentSpec::active(
            "lna",
            CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 0.0), c(2.0, 0.0), c(0.0, 0.0)]),
            NoiseParams::new(25.0, 0.03, c(0.0, 0.0)).unwrap(),
            290.0,
        );
        let err = SystemTopology::new(vec![lna, attenuator(0.5)], vec![]).unwrap_err();
        assert!(err.to_string().contains("after an active"));
    }

    #[test]
    fn block_diagonal_assembly() {
        let three = ComponentSpec::passive(
            "h",
            CMatrix::from_fn(3, 3, |i, j| c((i + 3 * j) as f64 * 0.01, 0.0)),
            0.0,
        );
        let topo = SystemTopology::new(vec![attenuator(0.5), three], vec![]).unwrap();
        let sys = assemble(&topo, 1e8).unwrap();
        assert_eq!(sys.s.nrows(), 5);
        for i in 0..2 {
            for j in 2..5 {
                assert_eq!(sys.s[(i, j)], c(0.0, 0.0));
                assert_eq!(sys.s[(j, i)], c(0.0, 0.0));
            }
        }
        assert_eq!(sys.s[(4, 3)], c(0.05, 0.0));
        assert_eq!(topo.port_ref(3), PortRef::new(1, 1));
    }

    #[test]
    fn q_is_identity_without_connections() {
        let topo = SystemTopology::new(vec![attenuator(0.5)], vec![]).unwrap();
        let sys = assemble(&topo, 1.0).unwrap();
        assert!((compute_q(&sys).unwrap() - CMatrix::identity(2, 2)).norm() < 1e-15);
        let ext = reduce_to_external(&sys).unwrap();
        assert_eq!(ext, sys.s);
    }

    #[test]
    fn load_on_matched_port_q_entries() {
        // Port 0: matched one-port (S = 0); port 1: load with reflection gamma.
        // I - S K = [[1, 0], [-gamma, 1]] so Q = [[1, 0], [gamma, 1]].
        let gamma = polar_deg(0.4, 30.0);
        let topo = SystemTopology::new(
            vec![one_port(c(0.0, 0.0)), one_port(gamma)],
            vec![(PortRef::new(0, 0), PortRef::new(1, 0))],
        )
        .unwrap();
        let q = compute_q(&assemble(&topo, 1.0).unwrap()).unwrap();
        let expected = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), gamma, c(1.0, 0.0)]);
        assert!((q - expected).norm() < 1e-15);
    }

    #[test]
    fn cascaded_attenuators_multiply() {
        let topo = SystemTopology::new(
            vec![attenuator(0.5), attenuator(0.3)],
            vec![(PortRef::new(0, 1), PortRef::new(1, 0))],
        )
        .unwrap();
        let sys = assemble(&topo, 1.0).unwrap();
        assert_eq!(sys.external_ports(), &[0, 3]);
        let ext = reduce_to_external(&sys).unwrap();
        assert!((ext[(1, 0)] - c(0.15, 0.0)).norm() < 1e-15);
        assert!(ext[(0, 0)].norm() < 1e-15);
    }

    #[test]
    fn lossless_loop_is_unstable() {
        // Two perfect reflectors facing each other: I - S K is singular.
        let topo = SystemTopology::new(
            vec![one_port(c(1.0, 0.0)), one_port(c(1.0, 0.0))],
            vec![(PortRef::new(0, 0), PortRef::new(1, 0))],
        )
        .unwrap();
        let err = compute_q(&assemble(&topo, 42.0).unwrap()).unwrap_err();
        assert!(matches!(err, Error::UnstableInterconnection { freq, .. } if freq == 42.0));
    }

    #[test]
    fn sampled_response_out_of_range() {
        use crate::touchstone::parse_touchstone;
        let doc = parse_touchstone("# MHz S RI R 50\n90 0.1 0\n110 0.2 0\n", 1).unwrap();
        let comp = ComponentSpec::passive("m", FrequencyResponse::from_touchstone(doc).unwrap(), 290.0);
        let topo = SystemTopology::new(vec![comp], vec![]).unwrap();
        assert!(matches!(assemble(&topo, 200e6), Err(Error::FrequencyOutOfRange { .. })));
        let sys = assemble(&topo, 100e6).unwrap();
        assert!((sys.s[(0, 0)] - c(0.15, 0.0)).norm() < 1e-15);
    }
}
