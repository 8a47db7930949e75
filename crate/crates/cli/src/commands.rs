//! `run-sqg`, `pod-extract` and `transport`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use stochflow_core::io::write_path_csv;
use stochflow_core::pod::{compute_pod, PodOptions};
use stochflow_core::sqg::{self, Diagnostics, RunConfig, SQGState, Scheme};
use stochflow_core::transport::{
    advect_form, helicity_check, kelvin_check, vorticity_flux_check, ConservationReport, FlowSpec, MaterialLoop,
};
use stochflow_core::{DifferentialForm, NoiseBasis, WienerPath};

use crate::config::{load_json, SqgConfig, TransportCheck, TransportConfig};
use crate::formats::{self, num, Sidecar};
use crate::suites::{self, Check, Suite};
use crate::tolerances::Tolerances;
use crate::CliError;

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn config_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_path(dir: &Path, path: &WienerPath) -> Result<(), CliError> {
    let p = dir.join("path.csv");
    let mut f = std::io::BufWriter::new(fs::File::create(&p).map_err(|e| io_err(&p, e))?);
    write_path_csv(&mut f, path).map_err(|e| io_err(&p, e))
}

pub fn write_diagnostics_csv(path: &Path, diags: &[Diagnostics]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record([
        "time",
        "energy",
        "casimir_q1",
        "casimir_q2",
        "casimir_q3",
        "casimir_q4",
        "mean_mu",
        "max_abs_q",
    ])
    .map_err(|e| io_err(path, e))?;
    for d in diags {
        let mut row = vec![num(d.time), num(d.energy)];
        row.extend(d.casimirs.iter().map(|&c| num(c)));
        row.push(num(d.mean_mu));
        row.push(num(d.max_abs_q));
        w.write_record(&row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

#[derive(Debug, Clone, Serialize)]
pub struct SqgSummary {
    pub scheme: String,
    pub seed: u64,
    pub components: usize,
    pub dt: f64,
    pub steps: usize,
    pub final_time: f64,
    pub cfl_drift: f64,
    pub cfl_noise: f64,
    pub snapshots: usize,
}

#[derive(Debug, Clone, Serialize)]
struct BlowupReport {
    error: String,
    scheme: String,
    seed: u64,
    dt: f64,
}

fn sqg_sidecar(state: &SQGState, cfg: &SqgConfig, step: usize) -> Sidecar {
    let mut meta = Sidecar::new(state.grid(), "mu", state.time);
    meta.parameters.insert("step".into(), step.into());
    meta.parameters.insert("F".into(), cfg.params.f.into());
    meta.parameters.insert("beta".into(), cfg.params.beta.into());
    meta.parameters.insert("f0".into(), cfg.params.f0.into());
    meta.parameters.insert("scheme".into(), cfg.scheme.clone().into());
    meta
}

/// Runs the SQG model described by the config at `config_path`.
pub fn run_sqg(config_path: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<SqgSummary, CliError> {
    let mut cfg: SqgConfig = load_json(config_path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let base = config_dir(config_path);
    let out = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let grid = cfg.grid.build()?;
    let params = cfg.params()?;
    let scheme = cfg.scheme()?;
    let basis = cfg.noise_basis(&grid, &base)?;
    let initial = SQGState::new(cfg.initial.build(&grid, &base)?)?;
    let stochastic = scheme != Scheme::Deterministic && !basis.is_empty();
    let path = if stochastic && cfg.steps > 0 {
        Some(WienerPath::sample_increments(cfg.seed, basis.len(), cfg.dt, cfg.steps)?)
    } else {
        None
    };
    prepare_out(&out)?;
    if let Some(p) = &path {
        write_path(&out, p)?;
    }
    log::info!(
        "run-sqg: {} steps of {} at dt = {}, K = {}, seed = {}",
        cfg.steps,
        scheme.name(),
        cfg.dt,
        basis.len(),
        cfg.seed
    );
    let run_cfg = RunConfig {
        params,
        scheme,
        dt: cfg.dt,
        steps: cfg.steps,
        basis,
        path,
        diagnostic_every: cfg.diagnostic_every,
        snapshot_every: cfg.snapshot_every,
    };
    let output = match sqg::run(&initial, &run_cfg) {
        Ok(o) => o,
        Err(e @ stochflow_core::Error::Blowup { .. }) => {
            let report = BlowupReport {
                error: e.to_string(),
                scheme: cfg.scheme.clone(),
                seed: cfg.seed,
                dt: cfg.dt,
            };
            formats::write_json(&out.join("blowup.json"), &report)?;
            return Err(CliError::Numerical(e.to_string()));
        }
        Err(e) => return Err(e.into()),
    };
    if output.cfl.noise > 1.0 || output.cfl.drift > 1.0 {
        log::warn!(
            "Courant numbers are large (drift {:.3}, noise {:.3}); consider a smaller dt",
            output.cfl.drift,
            output.cfl.noise
        );
    }
    write_diagnostics_csv(&out.join("diagnostics.csv"), &output.diagnostics)?;
    if !output.snapshots.is_empty() {
        let dir = out.join("snapshots");
        prepare_out(&dir)?;
        for (i, s) in output.snapshots.iter().enumerate() {
            let step = i * cfg.snapshot_every;
            formats::write_field(&dir.join(format!("mu_{step:06}.gfsf")), &s.mu, &sqg_sidecar(s, &cfg, step))?;
        }
    }
    formats::write_field(
        &out.join("mu_final.gfsf"),
        &output.state.mu,
        &sqg_sidecar(&output.state, &cfg, cfg.steps),
    )?;
    let summary = SqgSummary {
        scheme: scheme.name().into(),
        seed: cfg.seed,
        components: run_cfg.basis.len(),
        dt: cfg.dt,
        steps: cfg.steps,
        final_time: output.state.time,
        cfl_drift: output.cfl.drift,
        cfl_noise: output.cfl.noise,
        snapshots: output.snapshots.len(),
    };
    formats::write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct PodSummary {
    pub snapshots: usize,
    pub eigenvalues: Vec<f64>,
    pub total_energy: f64,
    pub degenerate: bool,
}

/// Extracts `k` POD modes from a directory of snapshots into `out`.
pub fn pod_extract(dir: &Path, k: usize, out: &Path, options: PodOptions) -> Result<PodSummary, CliError> {
    if k == 0 {
        return Err(CliError::Config("K must be at least 1".into()));
    }
    let data = formats::read_snapshot_dir(dir)?;
    if k > data.len() {
        return Err(CliError::Config(format!(
            "K = {k} exceeds the number of snapshots ({})",
            data.len()
        )));
    }
    let basis = compute_pod(&data, k, options)?;
    if basis.degenerate {
        log::warn!("snapshots carry no energy; the basis is empty");
    }
    formats::write_pod_basis(out, &basis.eigenvalues, &basis.modes, basis.total_energy)?;
    let summary = PodSummary {
        snapshots: data.len(),
        eigenvalues: basis.eigenvalues.clone(),
        total_energy: basis.total_energy,
        degenerate: basis.degenerate,
    };
    formats::write_json(&out.join("pod_summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckSummary {
    pub check: String,
    /// Loop index for loop-based checks.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<usize>,
    pub interpretation: String,
    pub initial: f64,
    pub final_value: f64,
    pub max_relative_drift: f64,
    pub final_change: f64,
    pub paper_prediction: f64,
    pub ito_wentzell_prediction: f64,
    pub resamples: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TransportSummary {
    pub interpretation: String,
    pub seed: u64,
    pub dt: f64,
    pub steps: usize,
    pub checks: Vec<CheckSummary>,
}

fn write_series(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for r in rows {
        w.write_record(r.iter().map(|&v| num(v))).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn summarize(check: &str, target: Option<usize>, r: &ConservationReport) -> CheckSummary {
    CheckSummary {
        check: check.into(),
        target,
        interpretation: r.interpretation.name().into(),
        initial: r.values.first().copied().unwrap_or(0.0),
        final_value: r.values.last().copied().unwrap_or(0.0),
        max_relative_drift: r.max_relative_drift,
        final_change: r.final_change,
        paper_prediction: r.paper_prediction,
        ito_wentzell_prediction: r.ito_wentzell_prediction,
        resamples: r.resamples,
    }
}

fn form_stats(q: &DifferentialForm, q0: &DifferentialForm) -> Result<Vec<f64>, CliError> {
    let first = &q.components()[0];
    Ok(vec![q.norm(), q.max_abs(), first.integral(), q.sub(q0)?.max_abs()])
}

/// Runs the kinematic transport experiments of the config at `config_path`.
pub fn transport(config_path: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<TransportSummary, CliError> {
    let mut cfg: TransportConfig = load_json(config_path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let out = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let grid = cfg.grid.build()?;
    let interpretation = cfg.interpretation()?;
    let drift = cfg.drift.build(&grid)?;
    let noise = cfg
        .noise
        .iter()
        .map(|n| n.build(&grid))
        .collect::<Result<Vec<_>, _>>()?;
    let weights = vec![1.0; noise.len()];
    let basis = if noise.is_empty() {
        NoiseBasis::empty()
    } else if noise.iter().all(|v| v.is_divergence_free()) {
        NoiseBasis::vector(noise.clone(), weights)?
    } else {
        NoiseBasis::vector_unchecked(noise.clone(), weights)
    };
    let flow = FlowSpec::new(drift, basis, interpretation)?;
    let q0 = cfg.form.build(&grid)?;
    let path = WienerPath::sample_increments(cfg.seed, noise.len().max(1), cfg.dt, cfg.steps)?;
    let t_final = cfg.steps as f64 * cfg.dt;
    prepare_out(&out)?;
    write_path(&out, &path)?;
    let loops = cfg
        .loops
        .iter()
        .map(|l| {
            let mut c = [0.0; 3];
            c[..l.center.len()].copy_from_slice(&l.center);
            MaterialLoop::circle(c, l.radius, l.points, grid.dims(), (l.plane[0], l.plane[1]))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut checks = Vec::new();
    for check in &cfg.checks {
        match check {
            TransportCheck::Advect => {
                let traj = advect_form(&q0, &flow, &path, t_final, cfg.record_every)?;
                let mut rows = Vec::with_capacity(traj.len());
                for (t, q) in &traj {
                    let mut r = vec![*t];
                    r.extend(form_stats(q, &q0)?);
                    rows.push(r);
                }
                write_series(
                    &out.join("advect.csv"),
                    &["time", "norm", "max_abs", "integral_c0", "max_change"],
                    &rows,
                )?;
                let (t, q) = traj.last().expect("final state is always recorded");
                let n = q.components().len();
                for (j, c) in q.components().iter().enumerate() {
                    let mut meta = Sidecar::new(&grid, "form", *t).component(j, n);
                    meta.grade = Some(q.grade().name().into());
                    meta.parameters.insert("interpretation".into(), interpretation.name().into());
                    formats::write_field(&out.join(format!("form_final_c{j}.gfsf")), c, &meta)?;
                }
                let norms: Vec<f64> = rows.iter().map(|r| r[1]).collect();
                let n0 = norms[0];
                checks.push(CheckSummary {
                    check: "advect".into(),
                    target: None,
                    interpretation: interpretation.name().into(),
                    initial: n0,
                    final_value: *norms.last().expect("nonempty"),
                    max_relative_drift: norms.iter().map(|n| (n - n0).abs()).fold(0.0, f64::max)
                        / if n0 != 0.0 { n0 } else { 1.0 },
                    final_change: rows.last().expect("nonempty")[4],
                    paper_prediction: 0.0,
                    ito_wentzell_prediction: 0.0,
                    resamples: 0,
                });
            }
            TransportCheck::Kelvin | TransportCheck::VorticityFlux => {
                if loops.is_empty() {
                    return Err(CliError::Config("kelvin and vorticity_flux checks need loops".into()));
                }
                let name = if *check == TransportCheck::Kelvin { "kelvin" } else { "vorticity_flux" };
                for (i, l) in loops.iter().enumerate() {
                    let r = if *check == TransportCheck::Kelvin {
                        kelvin_check(&q0, l, &flow, &path, t_final, cfg.record_every)?
                    } else {
                        vorticity_flux_check(&q0, l, &flow, &path, t_final, cfg.record_every)?
                    };
                    let rows: Vec<Vec<f64>> = r.times.iter().zip(&r.values).map(|(t, v)| vec![*t, *v]).collect();
                    write_series(&out.join(format!("{name}_{i}.csv")), &["time", "circulation"], &rows)?;
                    checks.push(summarize(name, Some(i), &r));
                }
            }
            TransportCheck::Helicity => {
                let r = helicity_check(&q0, &flow, &path, t_final, cfg.record_every)?;
                let rows: Vec<Vec<f64>> = r.times.iter().zip(&r.values).map(|(t, v)| vec![*t, *v]).collect();
                write_series(&out.join("helicity.csv"), &["time", "helicity"], &rows)?;
                checks.push(summarize("helicity", None, &r));
            }
        }
    }
    let summary = TransportSummary {
        interpretation: interpretation.name().into(),
        seed: cfg.seed,
        dt: cfg.dt,
        steps: cfg.steps,
        checks,
    };
    formats::write_json(&out.join("report.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
struct VerifySummary<'a> {
    suites: Vec<&'static str>,
    passed: bool,
    checks: &'a [Check],
}

/// Runs the named suites and writes `checks.csv` and `verify_summary.json`
/// into `out`. Failing checks are returned, not raised.
pub fn verify(selected: &[Suite], tol: &Tolerances, serial: bool, out: &Path) -> Result<Vec<Check>, CliError> {
    prepare_out(out)?;
    let mut checks = Vec::new();
    for &s in selected {
        log::info!("running suite {}", s.name());
        let found = suites::run_suite(s, tol, serial)?;
        for c in &found {
            log::info!("{}", c.describe());
        }
        checks.extend(found);
    }
    let p = out.join("checks.csv");
    let mut w = csv::Writer::from_path(&p).map_err(|e| io_err(&p, e))?;
    w.write_record(["suite", "check", "property", "measured", "relation", "bound", "passed"])
        .map_err(|e| io_err(&p, e))?;
    for c in &checks {
        let rel = match c.relation {
            suites::Relation::AtMost => "<=",
            suites::Relation::AtLeast => ">=",
        };
        w.write_record([
            c.suite.to_string(),
            c.name.clone(),
            c.property.clone(),
            num(c.measured),
            rel.to_string(),
            num(c.bound),
            c.passed.to_string(),
        ])
        .map_err(|e| io_err(&p, e))?;
    }
    w.flush().map_err(|e| io_err(&p, e))?;
    let summary = VerifySummary {
        suites: selected.iter().map(|s| s.name()).collect(),
        passed: checks.iter().all(|c| c.passed),
        checks: &checks,
    };
    formats::write_json(&out.join("verify_summary.json"), &summary)?;
    Ok(checks)
}
