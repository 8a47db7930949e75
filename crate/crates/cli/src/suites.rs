//! Verification suites at pinned desk-scale settings.
//!
//! Each `*_study` function runs one experiment and returns raw measurements;
//! [`run_suite`] compares them with the tolerances and names the property
//! behind every check. The acceptance tests call the same studies.

use std::f64::consts::TAU;
use std::sync::Mutex;

use serde::Serialize;
use stochflow_core::forms::{
    check_lemma22, diamond, exterior_derivative, lie_derivative, lie_derivative_closed, lie_derivative_transpose,
    lie_laplacian,
};
use stochflow_core::grid::laplacian;
use stochflow_core::noise::{estimate_covariation, member_seed};
use stochflow_core::pod::{compute_pod, correlation_residual, PodOptions, SnapshotSet};
use stochflow_core::sqg::{self, mode_phase, RunConfig, SQGParams, SQGState, Scheme};
use stochflow_core::synth::{band_limited, band_limited_zero_mean, solenoidal_field, vector_field};
use stochflow_core::transport::{
    helicity_check, kelvin_check, pv_along_paths, FlowSpec, Interpretation, MaterialLoop, TracerEnsemble,
};
use stochflow_core::{DifferentialForm, DualForm, Field, Grade, NoiseBasis, PeriodicGrid, VectorFieldOnGrid, WienerPath};

use crate::tolerances::Tolerances;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Operators,
    StratIto,
    Kelvin,
    Helicity,
    PvPaths,
    Casimirs,
    Pod,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Operators,
        Suite::Pod,
        Suite::StratIto,
        Suite::Casimirs,
        Suite::Kelvin,
        Suite::Helicity,
        Suite::PvPaths,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Operators => "operators",
            Suite::StratIto => "strat-ito",
            Suite::Kelvin => "kelvin",
            Suite::Helicity => "helicity",
            Suite::PvPaths => "pv-paths",
            Suite::Casimirs => "casimirs",
            Suite::Pod => "pod",
        }
    }

    /// `all` expands to every suite.
    pub fn parse_list(s: &str) -> Option<Vec<Suite>> {
        if s == "all" {
            return Some(Suite::ALL.to_vec());
        }
        Suite::ALL.iter().find(|x| x.name() == s).map(|x| vec![*x])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    AtMost,
    AtLeast,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    /// The property of the model that the check exercises.
    pub property: String,
    pub measured: f64,
    pub relation: Relation,
    pub bound: f64,
    pub passed: bool,
}

impl Check {
    fn new(suite: Suite, name: &str, property: &str, measured: f64, relation: Relation, bound: f64) -> Self {
        let passed = match relation {
            Relation::AtMost => measured <= bound,
            Relation::AtLeast => measured >= bound,
        };
        Self {
            suite: suite.name(),
            name: name.into(),
            property: property.into(),
            measured,
            relation,
            bound,
            passed,
        }
    }

    pub fn describe(&self) -> String {
        let op = match self.relation {
            Relation::AtMost => "<=",
            Relation::AtLeast => ">=",
        };
        format!(
            "{} {}/{}: {} (measured {:.3e}, required {op} {:.3e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.suite,
            self.name,
            self.property,
            self.measured,
            self.bound
        )
    }
}

/// Maps `f` over `items`, on scoped threads unless `serial`. Results keep
/// the input order, so the output does not depend on scheduling.
pub fn map_maybe_parallel<T: Sync, R: Send>(items: &[T], serial: bool, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if serial || items.len() < 2 {
        return items.iter().map(f).collect();
    }
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(items.len());
    let next = Mutex::new(0usize);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = {
                    let mut n = next.lock().expect("counter lock");
                    let i = *n;
                    *n += 1;
                    i
                };
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                *slots[i].lock().expect("slot lock") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot lock").expect("every item mapped"))
        .collect()
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}

fn grid(shape: &[usize]) -> PeriodicGrid {
    PeriodicGrid::new(shape).expect("pinned grid shapes are valid")
}

// ---------------------------------------------------------------- operators

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSettings {
    pub samples: usize,
    pub shape_2d: [usize; 2],
    pub shape_3d: [usize; 3],
    /// Input bandwidths; triple products stay inside the two-thirds cutoff.
    pub kmax_2d: usize,
    pub kmax_3d: usize,
    pub probes: usize,
    pub seed: u64,
}

impl Default for OperatorSettings {
    fn default() -> Self {
        Self {
            samples: 50,
            shape_2d: [64, 64],
            shape_3d: [32, 32, 32],
            kmax_2d: 5,
            kmax_3d: 3,
            probes: 3,
            seed: 2024,
        }
    }
}

/// Largest relative residual of each identity over all samples and grades.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct OperatorResiduals {
    pub d_squared: f64,
    pub cartan_vs_closed: f64,
    pub diamond_duality: f64,
    pub transpose_adjoint: f64,
    pub lemma: f64,
    pub lie_laplacian_commutes_with_d: f64,
}

impl OperatorResiduals {
    fn merge(&mut self, o: &OperatorResiduals) {
        self.d_squared = self.d_squared.max(o.d_squared);
        self.cartan_vs_closed = self.cartan_vs_closed.max(o.cartan_vs_closed);
        self.diamond_duality = self.diamond_duality.max(o.diamond_duality);
        self.transpose_adjoint = self.transpose_adjoint.max(o.transpose_adjoint);
        self.lemma = self.lemma.max(o.lemma);
        self.lie_laplacian_commutes_with_d = self.lie_laplacian_commutes_with_d.max(o.lie_laplacian_commutes_with_d);
    }
}

fn rel(a: &DifferentialForm, b: &DifferentialForm) -> Result<f64, CliError> {
    let scale = a.norm().max(b.norm());
    Ok(if scale == 0.0 { 0.0 } else { a.sub(b)?.norm() / scale })
}

fn random_form(g: &PeriodicGrid, grade: Grade, seed: u64, kmax: usize) -> DifferentialForm {
    let comps = (0..grade.components(g.dims()))
        .map(|i| band_limited(g, seed.wrapping_mul(7919).wrapping_add(i as u64), kmax, 1.0))
        .collect();
    DifferentialForm::new(grade, comps).expect("component count matches grade")
}

fn random_vector(g: &PeriodicGrid, seed: u64, kmax: usize, solenoidal: bool) -> VectorFieldOnGrid {
    if solenoidal {
        VectorFieldOnGrid::divergence_free(solenoidal_field(g, seed, kmax, 1.0)).expect("projected field")
    } else {
        VectorFieldOnGrid::new(vector_field(g, seed, kmax, 1.0)).expect("components share the grid")
    }
}

const GRADES: [Grade; 4] = [Grade::Scalar, Grade::OneForm, Grade::TwoForm, Grade::Density];

fn operator_sample(g: &PeriodicGrid, kmax: usize, seed: u64, probes: usize) -> Result<OperatorResiduals, CliError> {
    let mut r = OperatorResiduals::default();
    let x = random_vector(g, seed, kmax, seed % 2 == 0);
    let probe_fields: Vec<VectorFieldOnGrid> =
        (0..probes).map(|j| random_vector(g, seed + 100 + j as u64, kmax, j % 2 == 1)).collect();
    let basis = NoiseBasis::vector_unchecked(
        vec![random_vector(g, seed + 200, kmax, false), random_vector(g, seed + 201, kmax, true)],
        vec![1.0, 1.0],
    );
    for (gi, &grade) in GRADES.iter().enumerate() {
        let s = seed * 10 + gi as u64;
        let q = random_form(g, grade, s, kmax);
        let p = DualForm::new(grade, random_form(g, grade, s + 5, kmax).into_components())?;
        if q.degree() + 2 <= g.dims() {
            let dq = exterior_derivative(&q)?;
            let ddq = exterior_derivative(&dq)?;
            r.d_squared = r.d_squared.max(ddq.norm() / dq.norm().max(f64::MIN_POSITIVE));
        }
        let cartan = lie_derivative(&x, &q)?;
        let closed = lie_derivative_closed(&x, &q)?;
        r.cartan_vs_closed = r.cartan_vs_closed.max(rel(&cartan, &closed)?);

        let p_lq = p.pair(&closed)?;
        let bound = p.norm() * closed.norm();
        if bound > 0.0 {
            let lt = lie_derivative_transpose(&x, &p)?.pair(&q)?;
            r.transpose_adjoint = r.transpose_adjoint.max((lt - p_lq).abs() / bound);
            let xd = x.pair(&diamond(&p, &q)?)?;
            r.diamond_duality = r.diamond_duality.max((xd + p_lq).abs() / bound);
        }
        r.lemma = r.lemma.max(check_lemma22(&p, &q, &x, &probe_fields)?);
        if !q.is_top() {
            let a = exterior_derivative(&lie_laplacian(&basis, &q)?)?;
            let b = lie_laplacian(&basis, &exterior_derivative(&q)?)?;
            r.lie_laplacian_commutes_with_d = r.lie_laplacian_commutes_with_d.max(rel(&a, &b)?);
        }
    }
    Ok(r)
}

pub fn operator_study(s: &OperatorSettings, serial: bool) -> Result<OperatorResiduals, CliError> {
    let grids = [grid(&s.shape_2d), grid(&s.shape_3d)];
    let cases: Vec<(usize, u64)> = (0..2)
        .flat_map(|d| (0..s.samples as u64).map(move |i| (d, i)))
        .collect();
    let results = map_maybe_parallel(&cases, serial, |&(d, i)| {
        let kmax = if d == 0 { s.kmax_2d } else { s.kmax_3d };
        operator_sample(&grids[d], kmax, s.seed + 1000 * d as u64 + i, s.probes)
    });
    let mut out = OperatorResiduals::default();
    for r in results {
        out.merge(&r?);
    }
    Ok(out)
}

/// `‖Δ_Lie f − Δf‖ / ‖Δf‖` for the constant orthonormal basis `ξ_i = e_i`,
/// worst of a 2D and a 3D random scalar.
pub fn metric_laplacian_study() -> Result<f64, CliError> {
    let mut worst = 0.0f64;
    for shape in [&[64usize, 64][..], &[32, 32, 32][..]] {
        let g = grid(shape);
        let d = g.dims();
        let fields = (0..d)
            .map(|i| {
                let mut e = vec![0.0; d];
                e[i] = 1.0;
                VectorFieldOnGrid::constant(&g, &e)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let basis = NoiseBasis::vector(fields, vec![1.0; d])?;
        let f = band_limited(&g, 99, 6, 1.0);
        let lap = laplacian(&f);
        let lie = lie_laplacian(&basis, &DifferentialForm::scalar(f))?;
        worst = worst.max((&lie.components()[0] - &lap).norm() / lap.norm());
    }
    Ok(worst)
}

// ----------------------------------------------------------------- strat-ito

#[derive(Debug, Clone, PartialEq)]
pub struct StratItoSettings {
    pub shape: [usize; 2],
    pub initial_seed: u64,
    pub path_seed: u64,
    pub final_time: f64,
    /// Step sizes, coarsest first; each must divide the next coarser one.
    pub dts: Vec<f64>,
}

impl Default for StratItoSettings {
    fn default() -> Self {
        Self {
            shape: [128, 128],
            initial_seed: 11,
            path_seed: 2024,
            final_time: 0.1,
            dts: vec![4e-4, 2e-4, 1e-4, 5e-5],
        }
    }
}

/// Two stream-function noise fields with spatially varying velocity.
pub fn sqg_noise(g: &PeriodicGrid) -> Result<NoiseBasis, CliError> {
    let xi1 = Field::from_fn(g, |x| 0.1 * x[0].sin() * (2.0 * x[1]).cos());
    let xi2 = Field::from_fn(g, |x| 0.08 * (x[0] + x[1]).cos() + 0.04 * (2.0 * x[0]).sin());
    Ok(NoiseBasis::qg(vec![xi1, xi2], vec![1.0, 1.0])?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratItoReport {
    pub dts: Vec<f64>,
    /// `‖μ_Heun − μ_EM+correction‖` at `T`.
    pub errors: Vec<f64>,
    /// `‖μ_Heun − μ_EM‖` at `T` without the drift correction.
    pub gaps: Vec<f64>,
    pub corrected_slope: f64,
    pub uncorrected_slope: f64,
}

fn fine_path(seed: u64, k: usize, dts: &[f64], t: f64) -> Result<(WienerPath, Vec<usize>), CliError> {
    let finest = dts.iter().copied().fold(f64::INFINITY, f64::min);
    let steps = (t / finest).round() as usize;
    let path = WienerPath::sample_increments(seed, k, finest, steps)?;
    let factors = dts.iter().map(|dt| (dt / finest).round() as usize).collect();
    Ok((path, factors))
}

fn integrate(s0: &SQGState, p: &SQGParams, b: &NoiseBasis, path: &WienerPath, scheme: Scheme) -> Result<SQGState, CliError> {
    let mut s = s0.clone();
    for n in 0..path.steps() {
        s = sqg::step(scheme, &s, p, b, path.increment(n), path.dt())?;
    }
    if !s.mu.is_finite() {
        return Err(CliError::Numerical(format!("{} run blew up", scheme.name())));
    }
    Ok(s)
}

pub fn strat_ito_study(s: &StratItoSettings, serial: bool) -> Result<StratItoReport, CliError> {
    let g = grid(&s.shape);
    let p = SQGParams::default();
    let s0 = SQGState::new(band_limited_zero_mean(&g, s.initial_seed, 4, 1.0))?;
    let b = sqg_noise(&g)?;
    let (fine, factors) = fine_path(s.path_seed, b.len(), &s.dts, s.final_time)?;
    let runs = map_maybe_parallel(&factors, serial, |&f| -> Result<(f64, f64), CliError> {
        let path = fine.coarsen(f)?;
        let a = integrate(&s0, &p, &b, &path, Scheme::Stratonovich)?;
        let i = integrate(&s0, &p, &b, &path, Scheme::Ito)?;
        let u = integrate(&s0, &p, &b, &path, Scheme::ItoUncorrected)?;
        Ok(((&a.mu - &i.mu).norm(), (&a.mu - &u.mu).norm()))
    });
    let mut errors = Vec::new();
    let mut gaps = Vec::new();
    for r in runs {
        let (e, gap) = r?;
        errors.push(e);
        gaps.push(gap);
    }
    Ok(StratItoReport {
        corrected_slope: loglog_slope(&s.dts, &errors),
        uncorrected_slope: loglog_slope(&s.dts, &gaps),
        dts: s.dts.clone(),
        errors,
        gaps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovariationReport {
    pub components: usize,
    pub steps: usize,
    pub horizon: f64,
    pub matrix: Vec<Vec<f64>>,
    /// `max_ij |[W_i, W_j](T) − δ_ij T|`.
    pub max_deviation: f64,
    /// `T √(2/N)`, the standard deviation of a diagonal entry.
    pub sigma: f64,
    /// Bit patterns of the first three and the last increment.
    pub pinned_bits: [u64; 4],
}

pub const COVARIATION_SEED: u64 = 20_240_601;

pub fn covariation_study(seed: u64, k: usize, n: usize, horizon: f64) -> Result<CovariationReport, CliError> {
    let dt = horizon / n as f64;
    let path = WienerPath::sample_increments(seed, k, dt, n)?;
    let matrix = estimate_covariation(&path);
    let mut max_deviation = 0.0f64;
    for (i, row) in matrix.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            let expect = if i == j { horizon } else { 0.0 };
            max_deviation = max_deviation.max((c - expect).abs());
        }
    }
    let inc = path.increments();
    Ok(CovariationReport {
        components: k,
        steps: n,
        horizon,
        matrix,
        max_deviation,
        sigma: horizon * (2.0 / n as f64).sqrt(),
        pinned_bits: [inc[0].to_bits(), inc[1].to_bits(), inc[2].to_bits(), inc[inc.len() - 1].to_bits()],
    })
}

// ------------------------------------------------------------------ casimirs

#[derive(Debug, Clone, PartialEq)]
pub struct CasimirSettings {
    pub shape: [usize; 2],
    pub initial_seed: u64,
    pub path_seeds: Vec<u64>,
    pub final_time: f64,
    /// Coarse and fine step; the fine one must divide the coarse one.
    pub dt: f64,
    pub diagnostic_every: usize,
}

impl Default for CasimirSettings {
    fn default() -> Self {
        Self {
            shape: [128, 128],
            initial_seed: 11,
            path_seeds: vec![1, 2, 3],
            final_time: 0.2,
            dt: 2e-4,
            diagnostic_every: 10,
        }
    }
}

/// Pathwise Casimir drift `max_t |C(t) − C(0)| / ∫|Q₀|ⁿ` for `n = 2, 3`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CasimirRun {
    pub seed: u64,
    pub dt: f64,
    pub q2: f64,
    pub q3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CasimirReport {
    /// Per seed: the run at `dt` followed by the run at `dt/2`.
    pub runs: Vec<[CasimirRun; 2]>,
}

impl CasimirReport {
    pub fn worst_ratio(&self) -> f64 {
        self.runs
            .iter()
            .flat_map(|[a, b]| [b.q2 / a.q2, b.q3 / a.q3])
            .fold(0.0, f64::max)
    }

    pub fn worst_finest(&self) -> f64 {
        self.runs.iter().flat_map(|[_, b]| [b.q2, b.q3]).fold(0.0, f64::max)
    }
}

pub fn casimir_study(s: &CasimirSettings, serial: bool) -> Result<CasimirReport, CliError> {
    let g = grid(&s.shape);
    let p = SQGParams::default();
    let s0 = SQGState::new(band_limited_zero_mean(&g, s.initial_seed, 4, 1.0))?;
    let b = sqg_noise(&g)?;
    let q0 = s0.q_values(&p);
    let scale = |n: i32| q0.iter().map(|v| v.abs().powi(n)).sum::<f64>() / g.len() as f64 * g.volume();
    let (s2, s3) = (scale(2), scale(3));
    let cases: Vec<(u64, usize)> = s.path_seeds.iter().flat_map(|&seed| [(seed, 2usize), (seed, 1)]).collect();
    let runs = map_maybe_parallel(&cases, serial, |&(seed, f)| -> Result<CasimirRun, CliError> {
        let fine_dt = s.dt / 2.0;
        let steps = (s.final_time / fine_dt).round() as usize;
        let path = WienerPath::sample_increments(seed, b.len(), fine_dt, steps)?.coarsen(f)?;
        let cfg = RunConfig {
            params: p,
            scheme: Scheme::Stratonovich,
            dt: path.dt(),
            steps: path.steps(),
            basis: b.clone(),
            path: Some(path.clone()),
            // same recording times at both step sizes
            diagnostic_every: s.diagnostic_every * 2 / f,
            snapshot_every: 0,
        };
        let out = sqg::run(&s0, &cfg)?;
        let d0 = out.diagnostics[0];
        let drift = |i: usize| out.diagnostics.iter().map(|d| (d.casimirs[i] - d0.casimirs[i]).abs()).fold(0.0, f64::max);
        Ok(CasimirRun {
            seed,
            dt: path.dt(),
            q2: drift(1) / s2,
            q3: drift(2) / s3,
        })
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(CasimirReport {
        runs: runs
            .chunks(2)
            .map(|c| [c[0].clone(), c[1].clone()])
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RossbyRun {
    pub f_number: f64,
    pub measured: f64,
    pub theory: f64,
}

/// Frequency of a small-amplitude `cos(x₁ + x₂)` wave on the β-plane,
/// measured from the phase drift of that mode.
pub fn rossby_study(f_numbers: &[f64]) -> Result<Vec<RossbyRun>, CliError> {
    let g = grid(&[32, 32]);
    let beta = 1.0;
    let k = [1.0f64, 1.0];
    f_numbers
        .iter()
        .map(|&f| {
            let p = SQGParams {
                f,
                beta,
                ..Default::default()
            };
            let eps = 1e-3;
            let s0 = SQGState::new(Field::from_fn(&g, |x| eps * (x[0] + x[1]).cos()))?;
            let dt = 0.01;
            let mut s = s0;
            for _ in 0..100 {
                s = sqg::step(Scheme::Deterministic, &s, &p, &NoiseBasis::empty(), &[], dt)?;
            }
            Ok(RossbyRun {
                f_number: f,
                measured: mode_phase(&s.mu, [1, 1]) / s.time,
                theory: -beta * k[0] / (k[0] * k[0] + k[1] * k[1] + f),
            })
        })
        .collect()
}

// -------------------------------------------------------------------- kelvin

#[derive(Debug, Clone, PartialEq)]
pub struct KelvinSettings {
    pub shape: [usize; 2],
    pub loop_points: usize,
    pub path_seed: u64,
    pub final_time: f64,
    /// Coarsest first; the last one is the reference step.
    pub dts: Vec<f64>,
    pub record_every: usize,
}

impl Default for KelvinSettings {
    fn default() -> Self {
        Self {
            shape: [128, 128],
            loop_points: 256,
            path_seed: 77,
            final_time: 0.1,
            dts: vec![4e-4, 2e-4, 1e-4],
            record_every: 10,
        }
    }
}

pub struct KelvinSetup {
    pub v0: DifferentialForm,
    pub drift: VectorFieldOnGrid,
    pub basis: NoiseBasis,
    pub loop0: MaterialLoop,
}

pub fn kelvin_setup(s: &KelvinSettings) -> Result<KelvinSetup, CliError> {
    let g = grid(&s.shape);
    let drift = VectorFieldOnGrid::from_stream_function(&Field::from_fn(&g, |x| 0.5 * x[0].sin() * x[1].sin()))?;
    let xi = VectorFieldOnGrid::from_stream_function(&Field::from_fn(&g, |x| {
        0.3 * x[0].cos() * (2.0 * x[1]).cos() + 0.2 * x[1].sin()
    }))?;
    let basis = NoiseBasis::vector(vec![xi], vec![1.0])?;
    let v0 = DifferentialForm::one_form(vec![
        Field::from_fn(&g, |x| -x[1].sin() + 0.3 * (x[0] + 2.0 * x[1]).cos()),
        Field::from_fn(&g, |x| x[0].sin() + 0.2 * (2.0 * x[0]).sin()),
    ])?;
    let loop0 = MaterialLoop::circle([1.0, 1.2, 0.0], 0.8, s.loop_points, 2, (0, 1))?;
    Ok(KelvinSetup { v0, drift, basis, loop0 })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KelvinReport {
    pub dts: Vec<f64>,
    pub stratonovich_drifts: Vec<f64>,
    pub slope: f64,
    pub ito_change: f64,
    pub ito_paper_prediction: f64,
    pub ito_wentzell_prediction: f64,
    pub initial_circulation: f64,
}

impl KelvinReport {
    pub fn reference_drift(&self) -> f64 {
        *self.stratonovich_drifts.last().expect("at least one step size")
    }

    pub fn paper_mismatch(&self) -> f64 {
        (self.ito_change - self.ito_paper_prediction).abs() / self.ito_paper_prediction.abs()
    }

    pub fn ito_wentzell_mismatch(&self) -> f64 {
        (self.ito_change - self.ito_wentzell_prediction).abs() / self.ito_wentzell_prediction.abs()
    }
}

pub fn kelvin_study(s: &KelvinSettings, serial: bool) -> Result<KelvinReport, CliError> {
    let setup = kelvin_setup(s)?;
    let (fine, factors) = fine_path(s.path_seed, 1, &s.dts, s.final_time)?;
    // the Itô run uses the reference (finest) step
    let mut cases: Vec<(Interpretation, usize)> =
        factors.iter().map(|&f| (Interpretation::Stratonovich, f)).collect();
    cases.push((Interpretation::Ito, *factors.last().expect("at least one step size")));
    let runs = map_maybe_parallel(&cases, serial, |&(interp, f)| {
        let flow = FlowSpec::incompressible(setup.drift.clone(), setup.basis.clone(), interp)?;
        let path = fine.coarsen(f)?;
        kelvin_check(&setup.v0, &setup.loop0, &flow, &path, s.final_time, s.record_every).map_err(CliError::from)
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>, _>>()?;
    let (strat, ito) = runs.split_at(factors.len());
    let drifts: Vec<f64> = strat.iter().map(|r| r.max_relative_drift).collect();
    let ito = &ito[0];
    Ok(KelvinReport {
        slope: loglog_slope(&s.dts, &drifts),
        dts: s.dts.clone(),
        stratonovich_drifts: drifts,
        ito_change: ito.final_change,
        ito_paper_prediction: ito.paper_prediction,
        ito_wentzell_prediction: ito.ito_wentzell_prediction,
        initial_circulation: ito.values[0],
    })
}

// ------------------------------------------------------------------ helicity

#[derive(Debug, Clone, PartialEq)]
pub struct HelicitySettings {
    pub shape: [usize; 3],
    pub path_seed: u64,
    pub final_time: f64,
    /// Coarsest first; the middle one is the reference step and the Itô step.
    pub dts: Vec<f64>,
    pub record_every: usize,
}

impl Default for HelicitySettings {
    fn default() -> Self {
        Self {
            shape: [32, 32, 32],
            path_seed: 11,
            final_time: 0.5,
            dts: vec![2e-3, 1e-3, 5e-4],
            record_every: 10,
        }
    }
}

pub fn abc_one_form(g: &PeriodicGrid, a: f64, b: f64, c: f64) -> Result<DifferentialForm, CliError> {
    Ok(DifferentialForm::one_form(vec![
        Field::from_fn(g, |x| a * x[2].sin() + c * x[1].cos()),
        Field::from_fn(g, |x| b * x[0].sin() + a * x[2].cos()),
        Field::from_fn(g, |x| c * x[1].sin() + b * x[0].cos()),
    ])?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HelicityReport {
    pub dts: Vec<f64>,
    pub stratonovich_drifts: Vec<f64>,
    pub slope: f64,
    pub constant_noise_drift: f64,
    pub initial_helicity: f64,
    pub ito_dt: f64,
    pub ito_change: f64,
    pub ito_paper_prediction: f64,
    /// The Itô–Wentzell prediction for the helicity change, which is zero.
    pub ito_wentzell_prediction: f64,
}

impl HelicityReport {
    pub fn reference_drift(&self) -> f64 {
        self.stratonovich_drifts[self.stratonovich_drifts.len() / 2]
    }

    pub fn paper_mismatch(&self) -> f64 {
        (self.ito_change - self.ito_paper_prediction).abs() / self.ito_paper_prediction.abs()
    }

    /// Distance of the measured Itô change from the Itô–Wentzell value, in
    /// units of the paper's predicted change.
    pub fn ito_wentzell_mismatch(&self) -> f64 {
        (self.ito_change - self.ito_wentzell_prediction).abs() / self.ito_paper_prediction.abs()
    }

    pub fn monotone(&self) -> bool {
        self.stratonovich_drifts.windows(2).all(|w| w[1] < w[0])
    }
}

pub fn helicity_study(s: &HelicitySettings, serial: bool) -> Result<HelicityReport, CliError> {
    let g = grid(&s.shape);
    let drift = VectorFieldOnGrid::divergence_free(vec![
        Field::from_fn(&g, |x| 0.3 * x[1].sin()),
        Field::from_fn(&g, |x| 0.3 * x[2].sin()),
        Field::from_fn(&g, |x| 0.3 * x[0].sin()),
    ])?;
    let xi = VectorFieldOnGrid::divergence_free(vec![
        Field::from_fn(&g, |x| 0.3 * x[2].cos()),
        Field::from_fn(&g, |x| 0.2 * x[0].cos()),
        Field::from_fn(&g, |x| 0.25 * x[1].sin()),
    ])?;
    let basis = NoiseBasis::vector(vec![xi], vec![1.0])?;
    let constant = NoiseBasis::vector(vec![VectorFieldOnGrid::constant(&g, &[0.3, -0.2, 0.1])?], vec![1.0])?;
    let v0 = abc_one_form(&g, 1.0, 0.8, 0.6)?;
    let (fine, factors) = fine_path(s.path_seed, 1, &s.dts, s.final_time)?;
    let reference = factors[factors.len() / 2];
    #[derive(Clone, Copy)]
    enum Case {
        Strat(usize),
        Constant,
        Ito,
    }
    let mut cases: Vec<Case> = factors.iter().map(|&f| Case::Strat(f)).collect();
    cases.push(Case::Constant);
    cases.push(Case::Ito);
    let runs = map_maybe_parallel(&cases, serial, |case| {
        let (b, interp, f) = match *case {
            Case::Strat(f) => (&basis, Interpretation::Stratonovich, f),
            // rigid translation: no drift either, so the solution is exact
            Case::Constant => (&constant, Interpretation::Stratonovich, reference),
            Case::Ito => (&basis, Interpretation::Ito, reference),
        };
        let u = match *case {
            Case::Constant => VectorFieldOnGrid::zeros(&g),
            _ => drift.clone(),
        };
        let flow = FlowSpec::incompressible(u, b.clone(), interp)?;
        let path = fine.coarsen(f)?;
        helicity_check(&v0, &flow, &path, s.final_time, s.record_every).map_err(CliError::from)
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>, _>>()?;
    let n = factors.len();
    let drifts: Vec<f64> = runs[..n].iter().map(|r| r.max_relative_drift).collect();
    let ito = &runs[n + 1];
    Ok(HelicityReport {
        slope: loglog_slope(&s.dts, &drifts),
        dts: s.dts.clone(),
        stratonovich_drifts: drifts,
        constant_noise_drift: runs[n].max_relative_drift,
        initial_helicity: ito.values[0],
        ito_dt: s.dts[n / 2],
        ito_change: ito.final_change,
        ito_paper_prediction: ito.paper_prediction,
        ito_wentzell_prediction: ito.ito_wentzell_prediction,
    })
}

// ------------------------------------------------------------------ pv-paths

#[derive(Debug, Clone, PartialEq)]
pub struct PvSettings {
    pub shape: [usize; 2],
    pub initial_seed: u64,
    pub tracers_per_axis: usize,
    pub final_time: f64,
    pub dt: f64,
    /// Paths averaged for the Stratonovich strong error.
    pub stratonovich_paths: usize,
    pub ito_realizations: usize,
    /// Stratonovich path `r` uses seed `stratonovich_seed + r`.
    pub stratonovich_seed: u64,
    /// Itô realization `m` uses `member_seed(ito_seed, m)`.
    pub ito_seed: u64,
}

impl Default for PvSettings {
    fn default() -> Self {
        Self {
            shape: [64, 64],
            initial_seed: 5,
            tracers_per_axis: 8,
            final_time: 0.2,
            dt: 1e-3,
            stratonovich_paths: 8,
            ito_realizations: 32,
            stratonovich_seed: 10,
            ito_seed: 900,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PvReport {
    /// Mean over paths of `max_tracers |ΔQ|` at `dt` and `dt/2`.
    pub stratonovich_errors: [f64; 2],
    pub ratio: f64,
    /// Ensemble mean of `ΔQ/T − paper rate` and its standard error.
    pub paper_difference: f64,
    pub paper_standard_error: f64,
    pub ito_wentzell_difference: f64,
    pub ito_wentzell_standard_error: f64,
    pub mean_rate: f64,
    pub mean_paper_rate: f64,
    pub mean_ito_wentzell_rate: f64,
}

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

pub fn pv_study(s: &PvSettings, serial: bool) -> Result<PvReport, CliError> {
    let g = grid(&s.shape);
    let p = SQGParams::default();
    let s0 = SQGState::new(band_limited_zero_mean(&g, s.initial_seed, 4, 1.0))?;
    let xi = Field::from_fn(&g, |x| 0.15 * x[0].sin() * x[1].cos() + 0.1 * x[1].sin());
    let basis = NoiseBasis::qg(vec![xi], vec![1.0])?;
    let m = s.tracers_per_axis;
    let h = [TAU / m as f64; 2];
    let positions: Vec<[f64; 3]> = (0..m * m)
        .map(|i| [((i % m) as f64 + 0.5) * h[0], ((i / m) as f64 + 0.3) * h[1], 0.0])
        .collect();
    let tracers = TracerEnsemble::from_pv(&s0, &p, positions)?;
    let steps = (s.final_time / s.dt).round() as usize;

    let strat_cases: Vec<(u64, usize)> = (0..s.stratonovich_paths as u64)
        .flat_map(|r| [(r, 1usize), (r, 2)])
        .collect();
    let strat = map_maybe_parallel(&strat_cases, serial, |&(r, refine)| -> Result<f64, CliError> {
        let seed = s.stratonovich_seed + r;
        let fine = WienerPath::sample_increments(seed, 1, s.dt / 2.0, 2 * steps)?;
        let path = if refine == 2 { fine } else { fine.coarsen(2)? };
        let rep = pv_along_paths(&s0, &p, &basis, Scheme::Stratonovich, Interpretation::Stratonovich, &tracers, &path, path.steps())?;
        Ok(rep.max_abs_dq)
    });
    let strat = strat.into_iter().collect::<Result<Vec<_>, _>>()?;
    let coarse = strat.iter().step_by(2).sum::<f64>() / s.stratonovich_paths as f64;
    let finer = strat.iter().skip(1).step_by(2).sum::<f64>() / s.stratonovich_paths as f64;

    let ito_seeds: Vec<u64> = (0..s.ito_realizations as u64)
        .map(|r| member_seed(s.ito_seed, r))
        .collect();
    let ito = map_maybe_parallel(&ito_seeds, serial, |&seed| -> Result<[f64; 3], CliError> {
        let path = WienerPath::sample_increments(seed, 1, s.dt, steps)?;
        let rep = pv_along_paths(&s0, &p, &basis, Scheme::Ito, Interpretation::Ito, &tracers, &path, steps)?;
        Ok([rep.mean_rate(), rep.mean_paper_rate(), rep.mean_ito_wentzell_rate()])
    });
    let ito = ito.into_iter().collect::<Result<Vec<_>, _>>()?;
    let paper: Vec<f64> = ito.iter().map(|r| r[0] - r[1]).collect();
    let iw: Vec<f64> = ito.iter().map(|r| r[0] - r[2]).collect();
    let (pd, pse) = mean_and_se(&paper);
    let (wd, wse) = mean_and_se(&iw);
    let avg = |i: usize| ito.iter().map(|r| r[i]).sum::<f64>() / ito.len() as f64;
    Ok(PvReport {
        stratonovich_errors: [coarse, finer],
        ratio: finer / coarse,
        paper_difference: pd,
        paper_standard_error: pse,
        ito_wentzell_difference: wd,
        ito_wentzell_standard_error: wse,
        mean_rate: avg(0),
        mean_paper_rate: avg(1),
        mean_ito_wentzell_rate: avg(2),
    })
}

// ----------------------------------------------------------------------- pod

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PodReport {
    pub eigenvalue_errors: [f64; 2],
    pub mode_errors: [f64; 2],
    /// Worst `‖Rξ_i − λ_i²ξ_i‖ / λ₁²`.
    pub residual: f64,
}

/// Unit-norm divergence-free shear modes `φ₁ ∝ (sin x₂, 0)` and
/// `φ₂ ∝ (0, cos 2x₁)`, and snapshots `a_m φ₁ + b_m φ₂` whose coefficient
/// series have mean squares 4 and 1 and no cross-correlation.
pub fn two_mode_snapshots(g: &PeriodicGrid) -> Result<(SnapshotSet, [Vec<Field>; 2]), CliError> {
    let s = (1.0 / (0.5 * g.volume())).sqrt();
    let phi1 = vec![Field::from_fn(g, |x| s * x[1].sin()), Field::zeros(g)];
    let phi2 = vec![Field::zeros(g), Field::from_fn(g, |x| s * (2.0 * x[0]).cos())];
    let a = [2.0, -2.0, 2.0, -2.0];
    let b = [1.0, 1.0, -1.0, -1.0];
    let snaps = (0..4)
        .map(|m| (0..2).map(|c| Field::combination(&[(a[m], &phi1[c]), (b[m], &phi2[c])])).collect())
        .collect();
    Ok((SnapshotSet::new(g, snaps)?, [phi1, phi2]))
}

fn distance_up_to_sign(a: &[Field], b: &[Field]) -> f64 {
    let d = |s: f64| a.iter().zip(b).map(|(x, y)| x.axpy(-s, y).max_abs()).fold(0.0, f64::max);
    d(1.0).min(d(-1.0))
}

pub fn pod_study() -> Result<PodReport, CliError> {
    let g = grid(&[32, 32]);
    let (data, phi) = two_mode_snapshots(&g)?;
    let basis = compute_pod(&data, 2, PodOptions::default())?;
    if basis.len() != 2 {
        return Err(CliError::Numerical(format!("expected two modes, got {}", basis.len())));
    }
    let expect = [4.0, 1.0];
    let l1 = basis.eigenvalues[0];
    Ok(PodReport {
        eigenvalue_errors: [
            (basis.eigenvalues[0] - expect[0]).abs(),
            (basis.eigenvalues[1] - expect[1]).abs(),
        ],
        mode_errors: [
            distance_up_to_sign(&basis.modes[0], &phi[0]),
            distance_up_to_sign(&basis.modes[1], &phi[1]),
        ],
        residual: (0..2).map(|i| correlation_residual(&data, &basis, i)).fold(0.0, f64::max) / l1,
    })
}

// ------------------------------------------------------------------- driver

/// Runs one suite and turns its measurements into checks.
pub fn run_suite(suite: Suite, tol: &Tolerances, serial: bool) -> Result<Vec<Check>, CliError> {
    use Relation::{AtLeast, AtMost};
    let c = |name: &str, property: &str, measured: f64, rel: Relation, bound: f64| {
        Check::new(suite, name, property, measured, rel, bound)
    };
    let mut out = Vec::new();
    match suite {
        Suite::Operators => {
            let t = &tol.operators;
            let r = operator_study(&OperatorSettings::default(), serial)?;
            out.push(c("d_squared", "d∘d = 0", r.d_squared, AtMost, t.relative_residual));
            out.push(c("cartan", "£_X = d i_X + i_X d matches the closed forms", r.cartan_vs_closed, AtMost, t.relative_residual));
            out.push(c("diamond_duality", "⟨p⋄q, X⟩ = −⟨p, £_X q⟩", r.diamond_duality, AtMost, t.relative_residual));
            out.push(c("transpose", "⟨£ᵀ_X p, q⟩ = ⟨p, £_X q⟩", r.transpose_adjoint, AtMost, t.relative_residual));
            out.push(c("lemma", "(£ᵀ_X p)⋄q − p⋄£_X q + £_X(p⋄q) = 0", r.lemma, AtMost, t.relative_residual));
            out.push(c("lie_laplacian_d", "[Δ_Lie, d] = 0", r.lie_laplacian_commutes_with_d, AtMost, t.relative_residual));
            out.push(c(
                "metric_laplacian",
                "Δ_Lie reduces to Δ for ξ_i = e_i",
                metric_laplacian_study()?,
                AtMost,
                t.metric_laplacian,
            ));
        }
        Suite::StratIto => {
            let t = &tol.strat_ito;
            let cov = covariation_study(COVARIATION_SEED, 3, 100_000, 1.0)?;
            out.push(c(
                "covariation",
                "[W_i, W_j](T) = δ_ij T (deviation in standard deviations)",
                cov.max_deviation / cov.sigma,
                AtMost,
                t.covariation_sigmas,
            ));
            let r = strat_ito_study(&StratItoSettings::default(), serial)?;
            out.push(c(
                "corrected_slope",
                "Heun-Stratonovich and drift-corrected EM-Itô converge to one solution",
                r.corrected_slope,
                AtLeast,
                t.min_corrected_slope,
            ));
            out.push(c(
                "uncorrected_slope",
                "EM-Itô without the ½Σ[ξ,[ξ,Q]] drift does not converge to it",
                r.uncorrected_slope,
                AtMost,
                t.max_uncorrected_slope,
            ));
        }
        Suite::Casimirs => {
            let t = &tol.casimirs;
            let r = casimir_study(&CasimirSettings::default(), serial)?;
            out.push(c(
                "halving_ratio",
                "Casimirs are conserved along Stratonovich paths (drift halves with dt)",
                r.worst_ratio(),
                AtMost,
                t.max_halving_ratio,
            ));
            out.push(c("finest_drift", "Casimir drift at the finest dt", r.worst_finest(), AtMost, t.max_finest_drift));
            let worst = rossby_study(&[0.0, 1.0])?
                .iter()
                .map(|w| (w.measured - w.theory).abs() / w.theory.abs())
                .fold(0.0, f64::max);
            out.push(c("rossby", "linear Rossby waves have ω = −βk₁/(|k|²+F)", worst, AtMost, t.rossby_relative));
        }
        Suite::Kelvin => {
            let t = &tol.kelvin;
            let r = kelvin_study(&KelvinSettings::default(), serial)?;
            out.push(c("reference_drift", "Stratonovich circulation is conserved", r.reference_drift(), AtMost, t.max_reference_drift));
            out.push(c("slope", "Stratonovich circulation drift vanishes with dt", r.slope, AtLeast, t.min_slope));
            out.push(c(
                "ito_paper",
                "Itô circulation change equals ½∮Δ_Lie v (paper's Itô Kelvin law)",
                r.paper_mismatch(),
                AtMost,
                t.ito_relative,
            ));
            out.push(c(
                "ito_wentzell",
                "Itô circulation change equals ∮£_w v, w = −½Σ(ξ·∇)ξ (Itô–Wentzell)",
                r.ito_wentzell_mismatch(),
                AtMost,
                t.ito_relative,
            ));
        }
        Suite::Helicity => {
            let t = &tol.helicity;
            let r = helicity_study(&HelicitySettings::default(), serial)?;
            out.push(c("reference_drift", "Stratonovich transport preserves helicity", r.reference_drift(), AtMost, t.max_reference_drift));
            out.push(c(
                "monotone",
                "helicity drift decreases under refinement (1 if monotone)",
                if r.monotone() { 1.0 } else { 0.0 },
                AtLeast,
                1.0,
            ));
            out.push(c("slope", "helicity drift vanishes with dt", r.slope, AtLeast, t.min_slope));
            out.push(c("constant_noise", "constant ξ translates rigidly", r.constant_noise_drift, AtMost, t.constant_noise));
            out.push(c(
                "ito_paper",
                "Itô helicity change equals ∫v·Δ_Lie ω (paper's Itô helicity law)",
                r.paper_mismatch(),
                AtMost,
                t.ito_relative,
            ));
            out.push(c(
                "ito_wentzell",
                "Itô helicity change is zero (Itô–Wentzell), relative to the paper's value",
                r.ito_wentzell_mismatch(),
                AtMost,
                t.ito_relative,
            ));
        }
        Suite::PvPaths => {
            let t = &tol.pv_paths;
            let r = pv_study(&PvSettings::default(), serial)?;
            out.push(c("halving_ratio", "PV is conserved along Stratonovich paths", r.ratio, AtMost, t.max_halving_ratio));
            out.push(c(
                "ito_paper",
                "Itô mean dQ/dt equals ½Δ_Lie Q at the tracers (standard errors)",
                r.paper_difference.abs() / r.paper_standard_error,
                AtMost,
                t.ito_standard_errors,
            ));
            out.push(c(
                "ito_wentzell",
                "Itô mean dQ/dt equals w·∇Q at the tracers (standard errors)",
                r.ito_wentzell_difference.abs() / r.ito_wentzell_standard_error,
                AtMost,
                t.ito_standard_errors,
            ));
        }
        Suite::Pod => {
            let t = &tol.pod;
            let r = pod_study()?;
            let e = r.eigenvalue_errors[0].max(r.eigenvalue_errors[1]);
            let m = r.mode_errors[0].max(r.mode_errors[1]);
            out.push(c("eigenvalues", "POD eigenvalues equal the snapshot energies 4 and 1", e, AtMost, t.eigenvalue));
            out.push(c("modes", "POD modes equal the generating fields up to sign", m, AtMost, t.mode));
            out.push(c(
                "correlation_residual",
                "POD modes are eigenfunctions of the correlation operator",
                r.residual,
                AtMost,
                t.residual_over_lambda1_sq,
            ));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 0.5, 0.25];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.5)).collect();
        assert!((loglog_slope(&x, &y) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn parallel_map_keeps_order() {
        let items: Vec<u64> = (0..37).collect();
        let a = map_maybe_parallel(&items, false, |x| x * x);
        let b = map_maybe_parallel(&items, true, |x| x * x);
        assert_eq!(a, b);
        assert_eq!(a[36], 36 * 36);
    }

    #[test]
    fn suite_names_roundtrip() {
        for s in Suite::ALL {
            assert_eq!(Suite::parse_list(s.name()), Some(vec![s]));
        }
        assert_eq!(Suite::parse_list("all").unwrap().len(), 7);
        assert!(Suite::parse_list("bogus").is_none());
    }
}
