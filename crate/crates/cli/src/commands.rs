use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use onepflow_core::checkpoint::{write_checkpoint, write_field_csv};
use onepflow_core::diagnostics::{
    delta_sweep, eps_convergence_study, facet_measure, holder_seminorm, max_principle_check,
    sup_v_eps, superlevel_measure, DeltaRow,
};
use onepflow_core::scenarios::exact_radial;
use onepflow_core::solver::{run_with_observer, steady_state, write_step_log, RunOutput};
use onepflow_core::{Cylinder, DiagnosticsReport, Provenance, ReportEntry, Trajectory};
use serde::Serialize;

use crate::config::Experiment;
use crate::CliError;

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(onepflow_core::Error::from)?;
    text.push('\n');
    fs::write(dir.join(name), text)?;
    Ok(())
}

/// An informational entry, or a checked one when the plan sets a bound.
fn bounded(key: &str, value: f64, bound: Option<f64>) -> ReportEntry {
    match bound {
        Some(b) => ReportEntry::check(key, value, b, value <= b),
        None => ReportEntry::info(key, value),
    }
}

fn provenance(ex: &Experiment) -> Provenance {
    let sc = &ex.scenario;
    Provenance {
        scenario_hash: sc.hash(),
        mesh: sc.mesh.descriptor().clone(),
        eps: sc.params.eps,
        delta: sc.params.delta,
        seed: ex.seed,
    }
}

fn finish(report: &DiagnosticsReport, what: &str) -> Result<(), CliError> {
    if report.all_pass() {
        return Ok(());
    }
    let failed: Vec<&str> = report
        .entries
        .iter()
        .filter(|e| e.pass == Some(false))
        .map(|e| e.key.as_str())
        .collect();
    Err(CliError::Assertion(format!(
        "{what}: failed checks {failed:?}"
    )))
}

/// Runs the scenario, writing a checkpoint for every kept state.
fn run_and_checkpoint(ex: &Experiment, out: &Path) -> Result<RunOutput, CliError> {
    let dir = out.join("checkpoints");
    fs::create_dir_all(&dir)?;
    let descriptor = ex.scenario.mesh.descriptor().clone();
    let mut index = 0usize;
    let output = run_with_observer(&ex.scenario, &ex.solver, |state, _| {
        let file = File::create(dir.join(format!("state_{index:05}.bin")))?;
        write_checkpoint(BufWriter::new(file), &descriptor, state)?;
        index += 1;
        Ok(())
    })?;
    write_step_log(create(out, "step_log.csv")?, &output.log)?;
    Ok(output)
}

pub fn cmd_run(ex: &Experiment, out: &Path) -> Result<(), CliError> {
    let output = run_and_checkpoint(ex, out)?;
    let traj = &output.trajectory;
    write_field_csv(
        create(out, "final_field.csv")?,
        &ex.scenario.mesh,
        traj.last(),
    )?;
    let mut report = DiagnosticsReport::new(provenance(ex));
    report.push(ReportEntry::info("run.steps", output.log.len() as f64))?;
    report.push(ReportEntry::info("run.final_time", traj.end_time()))?;
    for e in max_principle_check(traj, &ex.scenario) {
        report.push(e)?;
    }
    write_json(out, "run.json", &report)?;
    finish(&report, "run")
}

#[derive(Serialize)]
struct ErrorRow {
    metric: &'static str,
    value: f64,
}

pub fn cmd_steady(ex: &Experiment, out: &Path) -> Result<(), CliError> {
    let sc = &ex.scenario;
    let outcome = steady_state(sc, &ex.solver)?;
    write_step_log(create(out, "step_log.csv")?, &outcome.log)?;
    write_field_csv(create(out, "steady_field.csv")?, &sc.mesh, &outcome.field)?;
    write_checkpoint(
        create(out, "steady.bin")?,
        sc.mesh.descriptor(),
        &outcome.field,
    )?;

    let mut report = DiagnosticsReport::new(provenance(ex));
    report.push(ReportEntry::info("steady.steps", outcome.steps as f64))?;
    report.push(ReportEntry::info("steady.rate", outcome.rate))?;
    if sc.name == "radial-steady" {
        let p = sc.params.p;
        let err: Vec<f64> = (0..sc.mesh.node_count())
            .map(|i| (outcome.field.values[i] - exact_radial(p, sc.mesh.node(i)).0).abs())
            .collect();
        let linf = err.iter().cloned().fold(0.0, f64::max);
        let l2 = err
            .iter()
            .zip(sc.mesh.lumped_mass())
            .map(|(e, m)| m * e * e)
            .sum::<f64>()
            .sqrt();
        let facet = facet_measure(
            &sc.mesh,
            &sc.model,
            sc.params.eps,
            &outcome.field,
            sc.params.delta,
        )?;
        let rows = [
            ErrorRow {
                metric: "linf_error",
                value: linf,
            },
            ErrorRow {
                metric: "l2_error",
                value: l2,
            },
            ErrorRow {
                metric: "facet_measure",
                value: facet,
            },
            ErrorRow {
                metric: "facet_measure_over_pi",
                value: facet / std::f64::consts::PI,
            },
        ];
        let mut w = csv::Writer::from_writer(create(out, "error_vs_exact.csv")?);
        for r in &rows {
            w.serialize(r).map_err(onepflow_core::Error::from)?;
        }
        w.flush()?;
        report.push(bounded("steady.linf_error", linf, ex.plan.linf_error_max))?;
        for r in &rows[1..] {
            report.push(ReportEntry::info(&format!("steady.{}", r.metric), r.value))?;
        }
    }
    write_json(out, "steady.json", &report)?;
    finish(&report, "steady")
}

/// The configured cylinder, or the largest admissible one centered in the
/// domain at the final time.
fn cylinder(ex: &Experiment, traj: &Trajectory) -> Cylinder {
    let d = ex.scenario.mesh.domain();
    let center = ex.plan.cylinder_center.clone().unwrap_or_else(|| {
        d.lower
            .iter()
            .zip(&d.upper)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    });
    let t0 = ex.plan.cylinder_time.unwrap_or(traj.end_time());
    let rho = ex.plan.cylinder_radius.unwrap_or_else(|| {
        let width = d
            .lower
            .iter()
            .zip(&d.upper)
            .map(|(a, b)| b - a)
            .fold(f64::INFINITY, f64::min);
        (0.45 * width).min((t0 - traj.start_time()).max(0.0).sqrt())
    });
    Cylinder::new(center, t0, rho)
}

fn write_delta_rows(out: &Path, rows: &[DeltaRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(out, "delta_sweep.csv")?);
    for r in rows {
        w.serialize(r).map_err(onepflow_core::Error::from)?;
    }
    w.flush()?;
    Ok(())
}

fn push_delta_rows(report: &mut DiagnosticsReport, rows: &[DeltaRow]) -> Result<(), CliError> {
    for r in rows {
        report.push(
            ReportEntry::check(
                &format!("delta_sweep.{}", r.delta),
                r.distance,
                r.bound,
                r.pass,
            )
            .with_refs(&["truncation-distance"]),
        )?;
    }
    Ok(())
}

pub fn cmd_sweep_eps(ex: &Experiment, out: &Path) -> Result<(), CliError> {
    let study = eps_convergence_study(&ex.scenario, &ex.solver, &ex.plan.eps_list)?;
    study.write_csv(create(out, "eps_sweep.csv")?)?;
    let mut report = DiagnosticsReport::new(provenance(ex));
    let worst = study
        .rows
        .windows(2)
        .map(|w| w[1].gradient_distance / w[0].gradient_distance)
        .filter(|r| r.is_finite())
        .fold(0.0, f64::max);
    report.push(
        ReportEntry::check("eps_sweep.cauchy", worst, 1.0, study.cauchy)
            .with_refs(&["eps-convergence"]),
    )?;
    for r in &study.rows {
        report.push(ReportEntry::info(
            &format!("eps_sweep.distance.{}", r.eps_b),
            r.gradient_distance,
        ))?;
    }
    write_json(out, "eps_sweep.json", &report)?;
    finish(&report, "eps sweep")
}

pub fn cmd_sweep_delta(ex: &Experiment, out: &Path) -> Result<(), CliError> {
    let output = run_and_checkpoint(ex, out)?;
    let traj = &output.trajectory;
    let rows = delta_sweep(traj, &ex.plan.delta_list, &cylinder(ex, traj))?;
    write_delta_rows(out, &rows)?;
    let mut report = DiagnosticsReport::new(provenance(ex));
    push_delta_rows(&mut report, &rows)?;
    write_json(out, "delta_sweep.json", &report)?;
    finish(&report, "delta sweep")
}

pub fn cmd_diagnose(ex: &Experiment, out: &Path) -> Result<(), CliError> {
    let sc = &ex.scenario;
    let output = run_and_checkpoint(ex, out)?;
    let traj = &output.trajectory;
    let cyl = cylinder(ex, traj);
    let delta = sc.params.delta;
    let mut report = DiagnosticsReport::new(provenance(ex));

    let e = &ex.exponents;
    for (k, v) in [
        ("exponents.beta", e.beta),
        ("exponents.pi", e.pi()),
        ("exponents.d", e.d()),
        ("exponents.e", e.e()),
        ("exponents.p_c", e.p_c),
    ] {
        report.push(ReportEntry::info(k, v))?;
    }
    for c in &ex.structure.checks {
        report.push(ReportEntry::check(
            &format!("structure.{}", c.name),
            c.margin,
            0.0,
            c.pass,
        ))?;
    }
    for entry in max_principle_check(traj, sc) {
        report.push(entry)?;
    }
    report.push(
        bounded("sup_v_eps", sup_v_eps(traj, &cyl)?, ex.plan.sup_v_eps_max)
            .with_refs(&["gradient-bound"]),
    )?;
    let facet = facet_measure(&sc.mesh, &sc.model, sc.params.eps, traj.last(), delta)?;
    report.push(ReportEntry::info("facet_measure", facet).with_refs(&["facet"]))?;
    let holder = holder_seminorm(
        traj,
        delta,
        &cyl,
        ex.plan.alpha,
        ex.plan.holder_samples,
        ex.seed,
    )?;
    report.push(
        bounded("holder_seminorm", holder.value, ex.plan.holder_max)
            .with_refs(&["truncated-gradient-holder"]),
    )?;
    report.push(ReportEntry::info(
        "holder_seminorm.pairs",
        holder.pairs as f64,
    ))?;
    if let Some(mu) = ex.plan.mu {
        let s = superlevel_measure(traj, &cyl, mu, ex.plan.nu, delta)?;
        report.push(ReportEntry::info("superlevel.measure", s.measure))?;
        report.push(ReportEntry::info("superlevel.ratio", s.ratio))?;
    }
    if !ex.plan.delta_list.is_empty() {
        let rows = delta_sweep(traj, &ex.plan.delta_list, &cyl)?;
        write_delta_rows(out, &rows)?;
        push_delta_rows(&mut report, &rows)?;
    }
    write_json(out, "diagnostics.json", &report)?;
    finish(&report, "diagnose")
}
