mod common;

use approx::assert_relative_eq;
use num_complex::Complex64;
use nwave::canceler::{
    active_reflection_with, build_canceler_topology, ideal_hybrid_s, stub_match_s, CancelerSystemSpec, StubMatchSpec,
};
use nwave::gainmod::{correlation_gain, gain, SourceExcitation};
use nwave::network::{
    assemble, selector, weighted_selector, ComponentSpec, FrequencyResponse, PortRef, SystemTopology,
};
use nwave::noisewave::{beam_noise_temperature, bosma_uniform, NoiseEvaluator, NoiseParams, NoiseSources};
use nwave::sweep::{
    find_minima, grid, histogram, iteration_rng, perturb_spec, tune_independent, tune_joint, NullSearchConfig,
};
use nwave::touchstone::{parse_touchstone, write_touchstone, DataFormat, Sample, TouchstoneDocument};
use nwave::units::polar_deg;
use nwave::{CMatrix, CVector, T0};
use proptest::prelude::*;

use common::{c, temps, F};

fn zero2() -> FrequencyResponse {
    FrequencyResponse::Fixed(CMatrix::zeros(2, 2))
}

/// Independent evaluation of the amplifier noise temperature.
fn te_oracle(t_min: f64, n: f64, g_opt: Complex64, g_s: Complex64) -> f64 {
    let num = 4.0 * n * T0 * (g_s - g_opt).norm_sqr();
    let den = (1.0 - g_s.norm_sqr()) * (1.0 - g_opt.norm_sqr());
    t_min + num / den
}

fn one_port_source(gs: Complex64, p: NoiseParams, s_l: CMatrix) -> SystemTopology {
    SystemTopology::new(
        vec![
            ComponentSpec::passive("source", CMatrix::from_element(1, 1, gs), T0),
            ComponentSpec::active("lna", s_l, p, T0),
        ],
        vec![(PortRef::new(0, 0), PortRef::new(1, 0))],
    )
    .unwrap()
}

#[test]
fn single_amplifier_temperature_matches_formula() {
    let p = NoiseParams::new(25.0, 0.03, polar_deg(0.2, 100.0)).unwrap();
    let s_l = nwave::canceler::reference_lna_s();
    for gs in [
        c(0.0, 0.0),
        polar_deg(0.2, 100.0),
        polar_deg(0.2, -100.0),
        polar_deg(0.5, 30.0),
        polar_deg(0.9, -170.0),
    ] {
        let topo = one_port_source(gs, p, s_l.clone());
        let t = beam_noise_temperature(&topo, F, &selector(3, 2), &[0]).unwrap();
        assert_relative_eq!(t, te_oracle(25.0, 0.03, p.gamma_opt, gs), max_relative = 1e-10);
    }
}

#[test]
fn amplifier_minimum_is_at_gamma_opt() {
    let p = NoiseParams::new(25.0, 0.03, polar_deg(0.2, 100.0)).unwrap();
    let at_opt = beam_noise_temperature(
        &one_port_source(p.gamma_opt, p, nwave::canceler::reference_lna_s()),
        F,
        &selector(3, 2),
        &[0],
    )
    .unwrap();
    assert_relative_eq!(at_opt, 25.0, max_relative = 1e-10);
    for deg in (0..360).step_by(15) {
        let gs = p.gamma_opt + polar_deg(0.05, deg as f64);
        let t = beam_noise_temperature(
            &one_port_source(gs, p, nwave::canceler::reference_lna_s()),
            F,
            &selector(3, 2),
            &[0],
        )
        .unwrap();
        assert!(t > at_opt);
    }
}

/// Matched, decoupled canceler: no loops, so waves follow single paths.
fn decoupled() -> CancelerSystemSpec {
    let mut spec = CancelerSystemSpec::reference()
        .with_lna_s11(c(0.0, 0.0))
        .with_gamma_opt(polar_deg(0.2, 100.0));
    spec.antenna = zero2();
    spec.replica = Some(zero2());
    spec
}

#[test]
fn path_trace_antenna_to_amplifier_output() {
    for (phase, shift) in [(90.0, 0.0), (90.0, 37.0), (60.0, 150.0)] {
        let spec = decoupled().with_hybrid_phase(phase).with_phase_shifts(shift, 0.0);
        let built = build_canceler_topology(&spec, F).unwrap();
        let sys = assemble(&built.topology, F).unwrap();
        let q = sys.factor().unwrap();
        let b = q.propagate(&selector(built.dim(), built.antenna_ports[0]));
        let s21 = polar_deg(3.0, -150.0);
        let expected = s21 * polar_deg(std::f64::consts::FRAC_1_SQRT_2, phase - shift);
        assert!((b[built.outputs[0]] - expected).norm() < 1e-12);
        assert!(b[built.outputs[1]].norm() < 1e-15);
        assert_relative_eq!(b[built.outputs[0]].norm_sqr(), 4.5, max_relative = 1e-12);
    }
}

#[test]
fn decoupled_receiver_temperature_closed_form() {
    let p = decoupled().lnas[0].noise;
    let te = te_oracle(p.t_min, p.lange_n, p.gamma_opt, c(0.0, 0.0));
    for t_r in [0.0, 100.0, 290.0] {
        let spec = decoupled().with_temperatures(temps(290.0, t_r, 290.0, 290.0));
        let m =
            nwave::sweep::evaluate_point(&spec, F, &[nwave::sweep::Output::Trec, nwave::sweep::Output::T12]).unwrap();
        assert_relative_eq!(m.trec.unwrap(), 2.0 * te + t_r, max_relative = 1e-10);
        assert!(m.t12.unwrap().norm() < 1e-9);
    }
}

/// Active reflection by hand: a wave leaving amplifier input `i` splits
/// through the hybrid, reflects once off each array and recombines.
fn gamma_act_oracle(s_a: &CMatrix, s_r: &CMatrix, phase: f64, shifts: [f64; 2], x: [Complex64; 2]) -> [Complex64; 2] {
    let e = polar_deg(std::f64::consts::FRAC_1_SQRT_2, phase);
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let t = [polar_deg(1.0, -shifts[0]), polar_deg(1.0, -shifts[1])];
    let mut out = [c(0.0, 0.0); 2];
    for i in 0..2 {
        let mut acc = c(0.0, 0.0);
        for j in 0..2 {
            acc += e * t[i] * s_a[(i, j)] * e * t[j] * x[j];
            acc += r * s_r[(i, j)] * r * x[j];
        }
        out[i] = acc / x[i];
    }
    out
}

#[test]
fn in_phase_hybrid_averages_arrays() {
    let s_a = nwave::canceler::reference_array_s();
    let mut spec = CancelerSystemSpec::reference().with_hybrid_phase(0.0);
    spec.replica = Some(FrequencyResponse::Fixed(s_a.clone()));
    let g = active_reflection_with(&spec, F, [c(1.0, 0.0), c(1.0, 0.0)]).unwrap();
    let expected = s_a[(0, 0)] + s_a[(0, 1)];
    assert!((g[0] - expected).norm() < 1e-12);
    assert!((g[1] - expected).norm() < 1e-12);
}

fn arb_complex(max: f64) -> impl Strategy<Value = Complex64> {
    (0.0..max, -180.0..180.0f64).prop_map(|(m, d)| polar_deg(m, d))
}

fn arb_matrix(n: usize) -> impl Strategy<Value = CMatrix> {
    proptest::collection::vec(arb_complex(1.0), n * n).prop_map(move |v| CMatrix::from_row_slice(n, n, &v))
}

/// Scales `m` so its largest singular value is `sigma`.
fn contract(m: CMatrix, sigma: f64) -> CMatrix {
    let s = m.clone().svd(false, false).singular_values[0];
    if s == 0.0 {
        m
    } else {
        m.scale(sigma / s)
    }
}

fn arb_passive(n: usize) -> impl Strategy<Value = CMatrix> {
    (arb_matrix(n), 0.0..0.99f64).prop_map(|(m, s)| contract(m, s))
}

fn arb_reciprocal_passive() -> impl Strategy<Value = CMatrix> {
    arb_passive(2).prop_map(|m| {
        let sym = (&m + m.transpose()).scale(0.5);
        let s = sym.clone().svd(false, false).singular_values[0];
        if s >= 0.99 {
            contract(sym, 0.99)
        } else {
            sym
        }
    })
}

/// Antenna array, a line feeding the second amplifier, two amplifiers.
fn chain_topology(s_a: &CMatrix, line: &CMatrix, permuted: bool) -> (SystemTopology, Vec<usize>, usize) {
    let p = NoiseParams::new(25.0, 0.03, polar_deg(0.2, 100.0)).unwrap();
    let lna = || ComponentSpec::active("lna", nwave::canceler::reference_lna_s(), p, T0);
    let ant = ComponentSpec::passive("antenna", s_a.clone(), T0);
    let ln = ComponentSpec::passive("line", line.clone(), T0);
    // Logical ids: antenna 0, line 1, lna1 2, lna2 3.
    let order: [usize; 4] = if permuted { [1, 0, 3, 2] } else { [0, 1, 2, 3] };
    let mut slot = [0usize; 4];
    for (pos, &id) in order.iter().enumerate() {
        slot[id] = pos;
    }
    let mut components = Vec::new();
    for &id in &order {
        components.push(match id {
            0 => ant.clone(),
            1 => ln.clone(),
            _ => lna(),
        });
    }
    let pr = |id: usize, port: usize| PortRef::new(slot[id], port);
    let topo = SystemTopology::new(
        components,
        vec![(pr(0, 0), pr(2, 0)), (pr(0, 1), pr(1, 0)), (pr(1, 1), pr(3, 0))],
    )
    .unwrap();
    let outs = vec![topo.global_index(pr(2, 1)), topo.global_index(pr(3, 1))];
    (topo, outs, slot[0])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn passive_bosma_is_physical(s in arb_passive(3), t in 0.0..1000.0f64) {
        prop_assert!(bosma_uniform(&s, t).report().is_physical());
    }

    #[test]
    fn ideal_hybrid_structure(phase in -360.0..360.0f64) {
        let s = ideal_hybrid_s(phase);
        prop_assert!((&s - s.transpose()).iter().all(|z| z.norm() < 1e-15));
        prop_assert!((0..3).all(|i| s[(i, i)].norm() == 0.0));
        let col0: f64 = (0..3).map(|i| s[(i, 0)].norm_sqr()).sum();
        prop_assert!((col0 - 1.0).abs() < 1e-12);
        let sv = s.svd(false, false).singular_values;
        prop_assert!(sv.iter().all(|&x| x <= 1.0 + 1e-12));
    }

    #[test]
    fn stub_match_is_lossless(len in 0.0..2.0f64, cap in 1e-13..1e-9f64, f in 1e7..1e9f64) {
        let s = stub_match_s(&StubMatchSpec::new(len, cap).unwrap(), f).unwrap();
        let g = s.adjoint() * &s;
        prop_assert!((g - CMatrix::identity(2, 2)).iter().all(|z| z.norm() < 1e-9));
        prop_assert!((s[(0, 1)] - s[(1, 0)]).norm() < 1e-12);
    }

    #[test]
    fn active_reflection_matches_single_bounce(
        s_a in arb_reciprocal_passive(),
        s_r in arb_reciprocal_passive(),
        phase in 0.0..180.0f64,
        d1 in 0.0..360.0f64,
        d2 in 0.0..360.0f64,
        x1 in arb_complex(2.0),
        x2 in arb_complex(2.0),
    ) {
        prop_assume!(x1.norm() > 1e-3 && x2.norm() > 1e-3);
        let mut spec = CancelerSystemSpec::reference().with_hybrid_phase(phase).with_phase_shifts(d1, d2);
        spec.antenna = FrequencyResponse::Fixed(s_a.clone());
        spec.replica = Some(FrequencyResponse::Fixed(s_r.clone()));
        let got = active_reflection_with(&spec, F, [x1, x2]).unwrap();
        let want = gamma_act_oracle(&s_a, &s_r, phase, [d1, d2], [x1, x2]);
        for i in 0..2 {
            prop_assert!((got[i] - want[i]).norm() < 1e-9 * (1.0 + want[i].norm()));
        }
    }

    #[test]
    fn coherence_is_hermitian(s_a in arb_reciprocal_passive(), phase in 0.0..180.0f64) {
        let mut spec = CancelerSystemSpec::reference().with_hybrid_phase(phase);
        spec.antenna = FrequencyResponse::Fixed(s_a);
        let built = build_canceler_topology(&spec, F).unwrap();
        let eval = NoiseEvaluator::new(&built.topology, F).unwrap();
        let src = NoiseSources::physical(&built.topology);
        let w1 = built.output_selector(0);
        let w2 = built.output_selector(1);
        let t12 = eval.coherence(&w1, &w2, &src).unwrap();
        let t21 = eval.coherence(&w2, &w1, &src).unwrap();
        prop_assert!((t12 - t21.conj()).norm() <= 1e-10 * (1.0 + t12.norm()));
        let t11 = eval.coherence(&w1, &w1, &src).unwrap();
        let t22 = eval.coherence(&w2, &w2, &src).unwrap();
        prop_assert!(t11.im.abs() < 1e-9 * t11.re && t11.re > 0.0);
        prop_assert!(t12.norm_sqr() <= t11.re * t22.re * (1.0 + 1e-9));
    }

    #[test]
    fn receiver_temperature_ignores_weight_scale(
        s_a in arb_reciprocal_passive(),
        w in arb_complex(1.0),
        alpha in arb_complex(10.0),
    ) {
        prop_assume!(alpha.norm() > 1e-3);
        let mut spec = CancelerSystemSpec::reference();
        spec.antenna = FrequencyResponse::Fixed(s_a);
        let built = build_canceler_topology(&spec, F).unwrap();
        let eval = NoiseEvaluator::new(&built.topology, F).unwrap();
        let weights = [c(1.0, 0.0), w];
        let scaled = [alpha, alpha * w];
        let t1 = eval.receiver_temperature(&built.beam_weights(&weights), &[built.antenna]).unwrap();
        let t2 = eval.receiver_temperature(&built.beam_weights(&scaled), &[built.antenna]).unwrap();
        prop_assert!((t1 - t2).abs() <= 1e-9 * t1.abs());
        prop_assert!(t1 > 0.0);
    }

    #[test]
    fn receiver_temperature_ignores_component_order(
        s_a in arb_reciprocal_passive(),
        line in arb_passive(2),
        w in arb_complex(1.0),
    ) {
        let weights = [c(1.0, 0.0), w];
        let (t0, o0, a0) = chain_topology(&s_a, &line, false);
        let (t1, o1, a1) = chain_topology(&s_a, &line, true);
        let r0 = beam_noise_temperature(&t0, F, &weighted_selector(t0.total_ports(), &o0, &weights), &[a0]);
        let r1 = beam_noise_temperature(&t1, F, &weighted_selector(t1.total_ports(), &o1, &weights), &[a1]);
        match (r0, r1) {
            (Ok(x), Ok(y)) => prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0)),
            (Err(_), Err(_)) => {}
            (x, y) => prop_assert!(false, "{x:?} vs {y:?}"),
        }
    }

    #[test]
    fn correlation_gain_ignores_excitation_scale(
        s_a in arb_reciprocal_passive(),
        k in 1e-3..1e3f64,
    ) {
        let mut spec = CancelerSystemSpec::reference();
        spec.antenna = FrequencyResponse::Fixed(s_a.clone());
        let built = build_canceler_topology(&spec, F).unwrap();
        let sys = assemble(&built.topology, F).unwrap();
        let a = bosma_uniform(&s_a, T0).0;
        prop_assume!((a[(0, 1)]).norm() > 1e-6);
        let g = |scale: f64| {
            let exc = SourceExcitation::embed(built.dim(), &built.antenna_ports, &a.scale(scale));
            correlation_gain(&sys, &exc, &built.output_selector(0), &built.output_selector(1),
                &built.antenna_selector(0), &built.antenna_selector(1)).unwrap()
        };
        let (g1, g2) = (g(1.0), g(k));
        prop_assert!((g1 - g2).norm() <= 1e-9 * g1.norm().max(1e-12));
    }

    #[test]
    fn passive_cascade_gain_at_most_one(s1 in arb_passive(2), s2 in arb_passive(2), a in arb_complex(1.0)) {
        prop_assume!(a.norm() > 1e-6);
        let topo = SystemTopology::new(
            vec![ComponentSpec::passive("a", s1, T0), ComponentSpec::passive("b", s2, T0)],
            vec![(PortRef::new(0, 1), PortRef::new(1, 0))],
        ).unwrap();
        let sys = assemble(&topo, F).unwrap();
        let mut a_s = CVector::zeros(4);
        a_s[0] = a;
        let exc = SourceExcitation::from_wave(&a_s);
        let g = gain(&sys, &exc, &selector(4, 3), &selector(4, 0)).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&g));
    }

    #[test]
    fn grid_is_inclusive(start in -500.0..500.0f64, step in 0.001..10.0f64, n in 0usize..500) {
        let stop = start + n as f64 * step;
        let g = grid(start, stop, step).unwrap();
        prop_assert_eq!(g.len(), n + 1);
        prop_assert_eq!(g[0], start);
        prop_assert!((g[n] - stop).abs() <= 1e-9 * stop.abs().max(1.0));
    }

    #[test]
    fn histogram_conserves_counts(
        values in proptest::collection::vec(-5.0..200.0f64, 0..300),
        width in 0.1..20.0f64,
        cutoff in 0.0..150.0f64,
    ) {
        let bins = histogram(&values, width, cutoff).unwrap();
        let kept = values.iter().filter(|&&v| (0.0..=cutoff).contains(&v)).count();
        prop_assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), kept);
        for (i, b) in bins.iter().enumerate() {
            prop_assert!((b.lo - i as f64 * width).abs() < 1e-9);
        }
    }

    #[test]
    fn touchstone_round_trip(
        n in 1usize..5,
        seed in proptest::collection::vec((0.01..3.0f64, -179.0..179.0f64), 4 * 16),
        step in 1.0..1e6f64,
        fmt in prop_oneof![Just(DataFormat::RI), Just(DataFormat::MA), Just(DataFormat::DB)],
    ) {
        let samples: Vec<Sample> = (0..4)
            .map(|k| Sample {
                frequency: 1e6 + k as f64 * step,
                matrix: CMatrix::from_fn(n, n, |r, col| {
                    let (m, d) = seed[k * 16 + r * n + col];
                    polar_deg(m, d)
                }),
            })
            .collect();
        let doc = TouchstoneDocument::new(n, 50.0, samples).unwrap();
        let text = write_touchstone(&doc, fmt).unwrap();
        let back = parse_touchstone(&text, n).unwrap();
        prop_assert_eq!(back.samples.len(), doc.samples.len());
        for (x, y) in doc.samples.iter().zip(&back.samples) {
            prop_assert!((x.frequency - y.frequency).abs() <= 1e-9 * x.frequency);
            prop_assert!((&x.matrix - &y.matrix).iter().all(|z| z.norm() < 1e-9));
        }
    }

    #[test]
    fn refinement_never_worse_than_scan(
        amps in proptest::collection::vec(0.1..1.0f64, 3),
        phases in proptest::collection::vec(0.0..360.0f64, 3),
        coarse in 1.0..10.0f64,
    ) {
        let metric = |x: f64| -> nwave::Result<f64> {
            let mut z = c(0.2, 0.0);
            for k in 0..3 {
                z += polar_deg(amps[k], (k as f64 + 1.0) * 2.0 * x + phases[k]);
            }
            Ok(z.norm())
        };
        let cfg = NullSearchConfig::periodic(180.0, coarse);
        let r = find_minima(metric, &cfg).unwrap();
        let n = (180.0 / coarse).ceil() as usize;
        let scan_min = (0..n).map(|i| metric(i as f64 * coarse).unwrap()).fold(f64::INFINITY, f64::min);
        let best = r.deepest().unwrap();
        prop_assert!(best.value <= scan_min + 1e-12);
        prop_assert!((0.0..180.0).contains(&best.location));
        prop_assert!((metric(best.location).unwrap() - best.value).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn independent_tuning_never_worse_than_joint(iteration in 0usize..1000) {
        let spec = common::measured_system();
        let mut rng = iteration_rng(7, iteration);
        let p = perturb_spec(&spec, F, 0.05, 0.0, &mut rng).unwrap();
        let joint = tune_joint(&p, F, 6.0).unwrap();
        let (_, independent) = tune_independent(&p, F, 6.0).unwrap();
        prop_assert!(independent <= joint.value + 1e-12);
    }
}
