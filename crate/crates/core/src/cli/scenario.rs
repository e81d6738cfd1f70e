use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::config::{ScenarioConfig, ScenarioKind};
use crate::diagnostics::{self, DECAY_R};
use crate::elliptic::{
    resolvent_lhs, solve_resolvent, solve_steady_state, stationarity_residual, stationary_energy, EllipticProblem,
};
use crate::error::{Error, Result};
use crate::evolution::{self, contraction_gap, t_star, Event, EvolutionConfig, Trajectory};
use crate::grid::linf;
use crate::model::Discretization;
use crate::nonlocal_op::Field;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_BLOWUP: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

pub const SERIES_HEADER: &str = "t,l1,l2,linf,seminorm_p,energy_E,Y,M_r,lqm1,iters,event";

pub fn exit_code(event: &Event) -> i32 {
    match event {
        Event::Completed | Event::Extinct { .. } => EXIT_OK,
        Event::Blowup { .. } => EXIT_BLOWUP,
        Event::SolverFailure { .. } => EXIT_SOLVER,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub scenario: ScenarioKind,
    pub event: Option<Event>,
    pub exit_code: i32,
    /// `key = value` lines of `summary.txt`, in order.
    pub summary: Vec<(String, String)>,
}

impl RunReport {
    fn new(scenario: ScenarioKind) -> Self {
        Self {
            scenario,
            event: None,
            exit_code: EXIT_OK,
            summary: vec![("scenario".into(), scenario.as_str().into())],
        }
    }

    fn put(&mut self, key: &str, value: impl ToString) {
        self.summary.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.summary.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

fn num(x: f64) -> String {
    format!("{x:.14e}")
}

pub fn series_csv(traj: &Trajectory) -> String {
    let mut out = String::from(SERIES_HEADER);
    out.push('\n');
    let last = traj.len().saturating_sub(1);
    for (k, r) in traj.series.iter().enumerate() {
        let event = if k == last { traj.event.label() } else { "-" };
        let cols = [r.t, r.l1, r.l2, r.linf, r.seminorm_p, r.energy_e, r.y, r.m_r, r.lqm1];
        for c in cols {
            out.push_str(&num(c));
            out.push(',');
        }
        let _ = writeln!(out, "{},{}", traj.iterations[k], event);
    }
    out
}

fn profile_csv(disc: &Discretization, columns: &[(&str, &[f64])]) -> String {
    let mut out = String::from("x");
    for (name, _) in columns {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (i, x) in disc.grid.nodes.iter().enumerate() {
        out.push_str(&num(*x));
        for (_, col) in columns {
            out.push(',');
            out.push_str(&num(col[i]));
        }
        out.push('\n');
    }
    out
}

fn write_summary(out: &Path, report: &RunReport) -> Result<()> {
    let mut text = String::new();
    for (k, v) in &report.summary {
        let _ = writeln!(text, "{k} = {v}");
    }
    fs::write(out.join("summary.txt"), text)?;
    Ok(())
}

fn relative_l2(disc: &Discretization, v: &[f64], reference: &[f64]) -> f64 {
    let diff: Vec<f64> = v.iter().zip(reference).map(|(a, b)| a - b).collect();
    disc.grid.l2(&diff) / disc.grid.l2(reference)
}

/// Runs `cfg.scenario`, writing `series.csv`, `profile.csv` and `summary.txt`
/// into `out`. Solver failures are reported through the exit code; only
/// configuration and I/O problems are errors.
pub fn run_scenario(cfg: &ScenarioConfig, out: &Path) -> Result<RunReport> {
    fs::create_dir_all(out)?;
    let disc = cfg.discretization()?;
    let mut report = RunReport::new(cfg.scenario);
    report.put("regime", disc.params.regime().as_str());
    report.put("subhomogeneous", disc.params.is_subhomogeneous());
    report.put("superhomogeneous", disc.params.is_superhomogeneous());
    for w in &cfg.warnings {
        report.put("warning", w);
    }
    let outcome = match cfg.scenario {
        ScenarioKind::Elliptic => run_elliptic(cfg, &disc, out, &mut report),
        ScenarioKind::SteadyState => run_steady(cfg, &disc, out, &mut report),
        ScenarioKind::Contraction => run_contraction(cfg, &disc, out, &mut report),
        _ => run_evolution(cfg, &disc, out, &mut report),
    };
    match outcome {
        Ok(()) => {}
        Err(e @ (Error::NoConvergence { .. } | Error::TrivialMinimizer { .. })) => {
            report.exit_code = EXIT_SOLVER;
            report.put("error", e);
        }
        Err(e) => return Err(e),
    }
    report.put("exit_code", report.exit_code);
    write_summary(out, &report)?;
    Ok(report)
}

fn run_elliptic(cfg: &ScenarioConfig, disc: &Discretization, out: &Path, report: &mut RunReport) -> Result<()> {
    let rhs = cfg.elliptic.rhs.build(disc, &cfg.solver, cfg.seed)?;
    let prob = EllipticProblem::new(disc, cfg.elliptic.lambda, rhs.clone())?;
    let sol = solve_resolvent(&prob, &cfg.solver, None)?;
    let lhs = resolvent_lhs(disc, cfg.elliptic.lambda, &sol.v);
    fs::write(out.join("profile.csv"), profile_csv(disc, &[("f", &rhs), ("v", &sol.v), ("lhs", &lhs)]))?;
    report.put("lambda", num(cfg.elliptic.lambda));
    report.put("iterations", sol.iterations);
    report.put("kkt_residual", num(sol.residual));
    report.put("energy_J", num(prob.energy(&sol.v)));
    Ok(())
}

fn run_steady(cfg: &ScenarioConfig, disc: &Discretization, out: &Path, report: &mut RunReport) -> Result<()> {
    let sol = solve_steady_state(disc, &cfg.solver)?;
    fs::write(out.join("profile.csv"), profile_csv(disc, &[("v_inf", &sol.v)]))?;
    report.put("iterations", sol.iterations);
    report.put("J_stat", num(stationary_energy(disc, &sol.v)));
    report.put("energy_E", num(diagnostics::energy_e(disc, &sol.v)));
    report.put("stationarity_residual", num(stationarity_residual(disc, 0.0, &sol.v)));
    report.put("linf", num(linf(&sol.v)));
    Ok(())
}

fn evolution_config(cfg: &ScenarioConfig, disc: &Discretization, v0: Field, source: &super::config::SourceSection) -> Result<EvolutionConfig> {
    let mut ec = EvolutionConfig::new(cfg.evolution.dt, cfg.evolution.t_end, v0, source.build(disc)?);
    ec.events = cfg.events;
    ec.solver = cfg.solver;
    ec.record_every = cfg.evolution.record_every;
    Ok(ec)
}

fn report_event(report: &mut RunReport, traj: &Trajectory) {
    report.event = Some(traj.event);
    report.exit_code = exit_code(&traj.event);
    report.put("event", traj.event.label());
    report.put("event_time", traj.event.time().map_or("none".to_string(), num));
    report.put("final_time", num(*traj.times.last().unwrap_or(&0.0)));
    report.put("records", traj.len());
    report.put("inner_iterations", traj.iterations.iter().sum::<usize>());
}

fn run_evolution(cfg: &ScenarioConfig, disc: &Discretization, out: &Path, report: &mut RunReport) -> Result<()> {
    let v0 = cfg.initial.build(disc, &cfg.solver, cfg.seed)?;
    let ec = evolution_config(cfg, disc, v0.clone(), &cfg.source)?;
    let pr = &disc.params;
    let traj = evolution::run(disc, &ec)?;
    fs::write(out.join("series.csv"), series_csv(&traj))?;
    report_event(report, &traj);
    report.put("t_star", num(t_star(linf(&v0), ec.source.c_h, pr.q, pr.m)));
    report.put("energy_E0", num(diagnostics::energy_e(disc, &v0)));

    let mut columns: Vec<(&str, &[f64])> = vec![("v0", &v0), ("v_final", traj.last())];
    let steady;
    match cfg.scenario {
        ScenarioKind::Stabilization => {
            steady = solve_steady_state(disc, &cfg.solver)?.v;
            report.put("relative_l2_distance_to_steady", num(relative_l2(disc, traj.last(), &steady)));
            columns.push(("v_inf", &steady));
        }
        ScenarioKind::Extinction => {
            let ex = diagnostics::extinction_exponents(pr, DECAY_R);
            report.put("alpha", num(ex.alpha));
            report.put("gamma", num(ex.gamma));
            report.put("extinction_regime", ex.valid);
            report.put(
                "measured_t0",
                match traj.event {
                    Event::Extinct { t0 } => num(t0),
                    _ => "none".into(),
                },
            );
        }
        ScenarioKind::Blowup => {
            report.put("nu", num(diagnostics::blowup_exponent(pr)));
            report.put(
                "measured_blowup_time",
                match traj.event {
                    Event::Blowup { t } => num(t),
                    _ => "none".into(),
                },
            );
        }
        _ => {}
    }
    fs::write(out.join("profile.csv"), profile_csv(disc, &columns))?;
    Ok(())
}

fn run_contraction(cfg: &ScenarioConfig, disc: &Discretization, out: &Path, report: &mut RunReport) -> Result<()> {
    let u0 = cfg.initial.build(disc, &cfg.solver, cfg.seed)?;
    let v0 = cfg.contraction.initial.build(disc, &cfg.solver, cfg.seed.wrapping_add(1))?;
    let src_v_section = cfg.contraction.source.as_ref().unwrap_or(&cfg.source);
    let mut eu = evolution_config(cfg, disc, u0.clone(), &cfg.source)?;
    let mut ev = evolution_config(cfg, disc, v0.clone(), src_v_section)?;
    eu.record_every = 1;
    ev.record_every = 1;
    let (tu, tv) = std::thread::scope(|s| {
        let a = s.spawn(|| evolution::run(disc, &eu));
        let b = evolution::run(disc, &ev);
        (a.join().expect("contraction worker panicked"), b)
    });
    let (tu, tv) = (tu?, tv?);
    fs::write(out.join("series.csv"), series_csv(&tu))?;
    fs::write(out.join("series_second.csv"), series_csv(&tv))?;
    report_event(report, &tu);
    report.put("event_second", tv.event.label());
    if tv.event != Event::Completed && report.exit_code == EXIT_OK {
        report.exit_code = exit_code(&tv.event);
    }
    let n = tu.len().min(tv.len());
    let trim = |t: &Trajectory| Trajectory {
        times: t.times[..n].to_vec(),
        fields: t.fields[..n].to_vec(),
        series: t.series[..n].to_vec(),
        iterations: t.iterations[..n].to_vec(),
        residuals: t.residuals[..n].to_vec(),
        ..t.clone()
    };
    let gaps = contraction_gap(disc, &trim(&tu), &trim(&tv), &eu.source, &ev.source)?;
    let mut csv = String::from("t,gap\n");
    for (t, g) in tu.times.iter().zip(&gaps) {
        let _ = writeln!(csv, "{},{}", num(*t), num(*g));
    }
    fs::write(out.join("gap.csv"), csv)?;
    let max_gap = gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    report.put("max_contraction_gap", num(max_gap));
    report.put("contraction_tolerance", num(cfg.contraction.tolerance));
    report.put("contraction_holds", max_gap <= cfg.contraction.tolerance);
    fs::write(out.join("profile.csv"), profile_csv(disc, &[("u_final", tu.last()), ("v_final", tv.last())]))?;
    Ok(())
}
