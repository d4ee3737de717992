//! One function per analysis, each turning a resolved system into tables.

use num_complex::Complex64;
use nwave::canceler::CancelerSystemSpec;
use nwave::network::{selector, weighted_selector};
use nwave::noisewave::{NoiseEvaluator, NoiseSources};
use nwave::sweep::{
    argmin_row, evaluate_point, find_coherence_nulls, find_trec_minima, gamma_contour_grid, histogram, matching_search,
    monte_carlo, run_sweep, success_share, wideband_scan, ContourMetric, MatchSearchSpec, MonteCarloSpec,
    NullSearchConfig, Output, PointMetrics, SmithGrid, SweepParameter, SweepSpec, Tuning,
};
use serde_json::json;

use crate::config::{
    ContourParams, GenericSystem, MatchSearchParams, MetricName, MonteCarloParams, NullSearchParams, OutputName,
    ParameterName, Polar, SweepPhaseParams, TuningName, WidebandParams,
};
use crate::error::CliError;
use crate::output::{Artifacts, Row, Table};

fn parameter(p: ParameterName) -> (SweepParameter, &'static str) {
    match p {
        ParameterName::HybridPhase => (SweepParameter::HybridPhase, "P_H_deg"),
        ParameterName::ShifterPhase => (SweepParameter::ShifterPhase, "dP_H_deg"),
        ParameterName::ShifterPhase1 => (SweepParameter::ShifterPhase1, "dP_H1_deg"),
        ParameterName::ShifterPhase2 => (SweepParameter::ShifterPhase2, "dP_H2_deg"),
        ParameterName::Frequency => (SweepParameter::Frequency, "frequency_Hz"),
    }
}

fn output(o: OutputName) -> Output {
    match o {
        OutputName::Trec => Output::Trec,
        OutputName::T12 => Output::T12,
        OutputName::G12 => Output::G12,
        OutputName::GammaAct => Output::GammaAct,
    }
}

fn columns_for(outputs: &[Output]) -> Vec<&'static str> {
    let mut cols = Vec::new();
    for o in Output::ALL {
        if !outputs.contains(&o) {
            continue;
        }
        cols.extend_from_slice(match o {
            Output::Trec => &["Trec_K"][..],
            Output::T12 => &["|T12|_K", "arg_T12_deg"],
            Output::G12 => &["|G12|", "arg_G12_deg"],
            Output::GammaAct => &[
                "|Gamma_act1|",
                "arg_Gamma_act1_deg",
                "|Gamma_act2|",
                "arg_Gamma_act2_deg",
            ],
        });
    }
    cols
}

fn polar_cells(z: Option<Complex64>) -> [Option<f64>; 2] {
    [z.map(|z| z.norm()), z.map(|z| z.arg().to_degrees())]
}

fn metric_cells(m: &PointMetrics, outputs: &[Output]) -> Vec<Option<f64>> {
    let mut cells = Vec::new();
    for o in Output::ALL {
        if !outputs.contains(&o) {
            continue;
        }
        match o {
            Output::Trec => cells.push(m.trec),
            Output::T12 => cells.extend(polar_cells(m.t12)),
            Output::G12 => cells.extend(polar_cells(m.g12)),
            Output::GammaAct => {
                cells.extend(polar_cells(m.gamma_act.map(|g| g[0])));
                cells.extend(polar_cells(m.gamma_act.map(|g| g[1])));
            }
        }
    }
    cells
}

/// Every output at the configured frequency. Outputs that fail on their
/// own are flagged; the run fails only when all of them do.
pub fn analyze(spec: &CancelerSystemSpec, f: f64) -> Result<Artifacts, CliError> {
    let mut metrics = PointMetrics::default();
    let mut errors = Vec::new();
    let mut first_error = None;
    for o in Output::ALL {
        match evaluate_point(spec, f, &[o]) {
            Ok(m) => {
                metrics.trec = metrics.trec.or(m.trec);
                metrics.t12 = metrics.t12.or(m.t12);
                metrics.g12 = metrics.g12.or(m.g12);
                metrics.gamma_act = metrics.gamma_act.or(m.gamma_act);
            }
            Err(e) => {
                log::warn!("{o:?} failed: {e}");
                errors.push(format!("{o:?}: {e}"));
                first_error.get_or_insert(e);
            }
        }
    }
    if errors.len() == Output::ALL.len() {
        return Err(first_error.expect("an error was recorded").into());
    }
    let mut table = Table::new(std::iter::once("frequency_Hz").chain(columns_for(&Output::ALL)));
    let mut values = vec![Some(f)];
    values.extend(metric_cells(&metrics, &Output::ALL));
    table.rows.push(Row {
        values,
        error: (!errors.is_empty()).then(|| errors.join("; ")),
    });
    let summary = json!({
        "trec_k": metrics.trec,
        "t12_k": metrics.t12.map(Polar::from),
        "g12": metrics.g12.map(Polar::from),
        "gamma_act": metrics.gamma_act.map(|g| [Polar::from(g[0]), Polar::from(g[1])]),
    });
    Ok(Artifacts {
        tables: vec![(String::new(), table)],
        summary,
        seed: None,
    })
}

pub fn analyze_generic(sys: &GenericSystem, f: f64) -> Result<Artifacts, CliError> {
    let eval = NoiseEvaluator::new(&sys.topology, f)?;
    let dim = sys.topology.total_ports();
    let trec = if !sys.antennas.is_empty() && !sys.output_ports.is_empty() {
        let w = weighted_selector(dim, &sys.output_ports, &sys.weights);
        Some(eval.receiver_temperature(&w, &sys.antennas)?)
    } else {
        None
    };
    let t12 = if sys.output_ports.len() >= 2 {
        let w1 = selector(dim, sys.output_ports[0]);
        let w2 = selector(dim, sys.output_ports[1]);
        Some(eval.coherence(&w1, &w2, &NoiseSources::physical(&sys.topology))?)
    } else {
        None
    };
    let mut table = Table::new(["frequency_Hz", "Trec_K", "|T12|_K", "arg_T12_deg"]);
    let [m, a] = polar_cells(t12);
    table.rows.push(Row::ok(vec![Some(f), trec, m, a]));
    Ok(Artifacts {
        tables: vec![(String::new(), table)],
        summary: json!({ "trec_k": trec, "t12_k": t12.map(Polar::from) }),
        seed: None,
    })
}

pub fn sweep_phase(spec: &CancelerSystemSpec, f: f64, p: &SweepPhaseParams) -> Result<Artifacts, CliError> {
    let (param, column) = parameter(p.parameter);
    if param != SweepParameter::Frequency {
        spec.resolved_at(f)?;
    }
    let outputs: Vec<Output> = p.outputs.iter().map(|&o| output(o)).collect();
    if outputs.is_empty() {
        return Err(CliError::Config("sweep_phase.outputs is empty".into()));
    }
    let sweep = SweepSpec {
        parameter: param,
        start: p.start,
        stop: p.stop,
        step: p.step,
        outputs: outputs.clone(),
        frequency: f,
    };
    let rows = run_sweep(spec, &sweep)?;
    if let Some(e) = rows
        .iter()
        .find_map(|r| r.error.as_ref())
        .filter(|_| rows.iter().all(|r| r.error.is_some()))
    {
        return Err(CliError::Numerical(format!("every sweep point failed, first: {e}")));
    }
    let mut table = Table::new(std::iter::once(column).chain(columns_for(&outputs)));
    for r in &rows {
        let mut values = vec![Some(r.value)];
        values.extend(metric_cells(&r.metrics, &outputs));
        table.rows.push(Row {
            values,
            error: r.error.clone(),
        });
    }
    let best = |key: fn(&PointMetrics) -> Option<f64>| {
        argmin_row(&rows, key).map(|r| json!({ "at": r.value, "value": key(&r.metrics) }))
    };
    let summary = json!({
        "parameter": column,
        "argmin_trec": best(|m| m.trec),
        "argmin_abs_t12": best(|m| m.t12.map(|z| z.norm())),
    });
    Ok(Artifacts {
        tables: vec![(String::new(), table)],
        summary,
        seed: None,
    })
}

pub fn contour(spec: &CancelerSystemSpec, f: f64, p: &ContourParams) -> Result<Artifacts, CliError> {
    let (metric, column) = match p.metric {
        MetricName::Trec => (ContourMetric::Trec, "Trec_K"),
        MetricName::T12 => (ContourMetric::T12, "|T12|_K"),
    };
    let grid = SmithGrid {
        radius_step: p.radius_step,
        phase_step_deg: p.phase_step_deg,
        max_radius: p.max_radius,
    };
    let r = gamma_contour_grid(&spec.resolved_at(f)?, f, &grid, metric)?;
    let mut table = Table::new(["Gamma_opt_mag", "Gamma_opt_deg", column]);
    for (g, v) in &r.points {
        table
            .rows
            .push(Row::ok(vec![Some(g.norm()), Some(g.arg().to_degrees()), Some(*v)]));
    }
    Ok(Artifacts {
        tables: vec![(String::new(), table)],
        summary: json!({ "metric": column, "argmin_gamma_opt": Polar::from(r.argmin), "min": r.min }),
        seed: None,
    })
}

pub fn null_search(spec: &CancelerSystemSpec, f: f64, p: &NullSearchParams) -> Result<Artifacts, CliError> {
    let (param, column) = parameter(p.parameter);
    let cfg = NullSearchConfig {
        lo: p.lo,
        hi: p.hi,
        coarse_step: p.coarse_step,
        refine_step: p.refine_step,
        depth_ratio: p.depth_ratio,
        periodic: p.periodic,
    };
    let resolved = if param == SweepParameter::Frequency {
        spec.clone()
    } else {
        spec.resolved_at(f)?
    };
    let (r, value_col) = match p.metric {
        MetricName::T12 => (find_coherence_nulls(&resolved, f, param, &cfg)?, "|T12|_K"),
        MetricName::Trec => (find_trec_minima(&resolved, f, param, &cfg)?, "Trec_K"),
    };
    let mut table = Table::new([column, value_col, "is_null"]);
    let mut minima = r.minima.clone();
    minima.sort_by(|a, b| a.location.total_cmp(&b.location));
    for m in &minima {
        let is_null = r.nulls.iter().any(|n| n.location == m.location);
        table.rows.push(Row::ok(vec![
            Some(m.location),
            Some(m.value),
            Some(f64::from(u8::from(is_null))),
        ]));
    }
    let summary = json!({
        "parameter": column,
        "metric": value_col,
        "nulls": r.nulls.iter().map(|n| json!({ "at": n.location, "value": n.value })).collect::<Vec<_>>(),
        "peak": r.peak,
        "resolution": r.resolution,
        "degenerate": r.degenerate,
    });
    Ok(Artifacts {
        tables: vec![(String::new(), table)],
        summary,
        seed: None,
    })
}

pub fn match_search(spec: &CancelerSystemSpec, f: f64, p: &MatchSearchParams) -> Result<Artifacts, CliError> {
    let search = MatchSearchSpec {
        lengths: p.line_lengths_wl.expand()?,
        capacitances: p
            .shunt_capacitances_pf
            .expand()?
            .into_iter()
            .map(|c| c * 1e-12)
            .collect(),
        coincidence_tolerance_deg: p.tolerance_deg,
        null_search: NullSearchConfig::periodic(180.0, p.coarse_step),
    };
    let found = matching_search(&spec.resolved_at(f)?, f, &search)?;
    let mut table = Table::new([
        "line_length_wl",
        "shunt_capacitance_pF",
        "null1_dP_H_deg",
        "null2_dP_H_deg",
        "separation_deg",
    ]);
    for c in &found {
        table.rows.push(Row::ok(vec![
            Some(c.matching.line_length),
            Some(c.matching.shunt_capacitance * 1e12),
            Some(c.nulls[0]),
            Some(c.nulls[1]),
            Some(c.separation),
        ]));
    }
    let summary = json!({
        "candidates": found.len(),
        "grid_points": search.lengths.len() * search.capacitances.len(),
        "tolerance_deg": p.tolerance_deg,
        "best": found.first().map(|c| json!({
            "line_length_wl": c.matching.line_length,
            "shunt_capacitance_pf": c.matching.shunt_capacitance * 1e12,
            "separation_deg": c.separation,
        })),
    });
    Ok(Artifacts {
        tables: vec![(String::new(), table)],
        summary,
        seed: None,
    })
}

pub fn monte_carlo_run(spec: &CancelerSystemSpec, f: f64, p: &MonteCarloParams) -> Result<Artifacts, CliError> {
    let mut mc = MonteCarloSpec::new(p.relative_fraction, p.iterations, p.seed)?;
    mc.phase_jitter_deg = p.phase_jitter_deg;
    mc.coarse_step_deg = p.coarse_step_deg;
    let tuning = match p.tuning {
        TuningName::None => Tuning::None,
        TuningName::Joint => Tuning::Joint,
        TuningName::Independent => Tuning::Independent,
    };
    let rows = monte_carlo(spec, f, &mc, tuning)?;
    let mut table = Table::new(["iteration", "dP_H1_deg", "dP_H2_deg", "min_|T12|_K"]);
    for r in &rows {
        table.rows.push(Row::ok(vec![
            Some(r.iteration as f64),
            Some(r.phase_shifts_deg[0]),
            Some(r.phase_shifts_deg[1]),
            Some(r.min_t12),
        ]));
    }
    let values: Vec<f64> = rows.iter().map(|r| r.min_t12).collect();
    let bins = histogram(&values, p.histogram_bin_k, p.histogram_cutoff_k)?;
    let mut hist = Table::new(["bin_lo_K", "bin_hi_K", "count"]);
    for b in &bins {
        hist.rows
            .push(Row::ok(vec![Some(b.lo), Some(b.hi), Some(b.count as f64)]));
    }
    let summary = json!({
        "iterations": p.iterations,
        "relative_fraction": p.relative_fraction,
        "tuning": format!("{tuning:?}").to_lowercase(),
        "threshold_k": p.threshold_k,
        "success_share": success_share(&rows, p.threshold_k),
    });
    Ok(Artifacts {
        tables: vec![(String::new(), table), ("_histogram".into(), hist)],
        summary,
        seed: Some(p.seed),
    })
}

pub fn wideband(spec: &CancelerSystemSpec, p: &WidebandParams) -> Result<Artifacts, CliError> {
    let freqs = p.frequencies_hz.expand()?;
    let cfg = NullSearchConfig::periodic(180.0, p.coarse_step);
    let rows = wideband_scan(spec, &freqs, p.extrapolate_noise, &cfg)?;
    let mut table = Table::new([
        "frequency_Hz",
        "null1_dP_H_deg",
        "null1_|T12|_K",
        "null2_dP_H_deg",
        "null2_|T12|_K",
        "trec_opt_dP_H_deg",
        "Trec_min_K",
    ]);
    for r in &rows {
        let mut nulls = r.coherence_nulls.clone();
        nulls.sort_by(|a, b| a.location.total_cmp(&b.location));
        let at = |i: usize| nulls.get(i).map(|n| (n.location, n.value));
        let missing = nulls.len() < 2;
        table.rows.push(Row {
            values: vec![
                Some(r.frequency),
                at(0).map(|x| x.0),
                at(0).map(|x| x.1),
                at(1).map(|x| x.0),
                at(1).map(|x| x.1),
                r.trec_optimum.map(|n| n.location),
                r.trec_optimum.map(|n| n.value),
            ],
            error: missing.then(|| format!("{} |T12| minima found", nulls.len())),
        });
    }
    Ok(Artifacts {
        tables: vec![(String::new(), table)],
        summary: json!({ "frequencies": freqs.len(), "extrapolate_noise": p.extrapolate_noise }),
        seed: None,
    })
}
