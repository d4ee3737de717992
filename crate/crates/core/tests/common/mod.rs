#![allow(dead_code)]

use std::path::PathBuf;

use num_complex::Complex64;
use nwave::canceler::{CancelerSystemSpec, CancelerTemperatures, HybridPorts, HybridSpec};
use nwave::network::FrequencyResponse;
use nwave::touchstone::read_touchstone;
use nwave::units::polar_deg;

pub const F: f64 = 1e8;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

pub fn temps(antenna: f64, replica: f64, hybrid: f64, lna: f64) -> CancelerTemperatures {
    CancelerTemperatures {
        antenna,
        replica,
        hybrid,
        lna,
        termination: None,
    }
}

/// `Γopt = 0`, `S_L11 = 0`, ideal hybrids, cold replica and hybrids.
pub fn baseline() -> CancelerSystemSpec {
    CancelerSystemSpec::reference()
        .with_gamma_opt(c(0.0, 0.0))
        .with_lna_s11(c(0.0, 0.0))
        .with_temperatures(temps(290.0, 0.0, 0.0, 290.0))
}

/// Baseline with the amplifier's own input reflection.
pub fn with_lna_reflection() -> CancelerSystemSpec {
    baseline().with_lna_s11(polar_deg(0.2, -75.0))
}

pub fn with_gamma(deg: f64) -> CancelerSystemSpec {
    with_lna_reflection().with_gamma_opt(polar_deg(0.2, deg))
}

pub fn all_warm(spec: CancelerSystemSpec) -> CancelerSystemSpec {
    spec.with_temperatures(CancelerTemperatures::uniform(290.0))
}

/// Amplifier noise only.
pub fn lna_only(spec: CancelerSystemSpec) -> CancelerSystemSpec {
    spec.with_temperatures(temps(0.0, 0.0, 0.0, 290.0))
}

/// The synthetic three-port 90° splitter; port 3 is the 90° output.
pub fn measured_hybrid() -> HybridSpec {
    let doc = read_touchstone(&data("splitter_90deg.s3p"), None).expect("fixture parses");
    HybridSpec::measured(
        FrequencyResponse::from_touchstone(doc).expect("fixture is valid"),
        HybridPorts {
            common: 0,
            in_phase: 1,
            quadrature: 2,
            isolated: None,
        },
    )
    .expect("port map is valid")
}

/// Reference amplifiers with the measured splitter and amplifier noise only.
pub fn measured_system() -> CancelerSystemSpec {
    lna_only(CancelerSystemSpec::reference().with_hybrids(measured_hybrid()))
}
