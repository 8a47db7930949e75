//! Stochastic quasigeostrophic model on the doubly periodic β-plane.
//!
//! State is the potential-vorticity anomaly `μ = Q − f` with
//! `Q = Δψ − Fψ + f` and `f = f₀ + βx₂`, so `ψ = (Δ − F)⁻¹ μ`.
//! The dynamics is
//!
//! ```text
//! dμ = −[ψ, Q] dt + Σ_i [ξ_i, Q] ∘ dW_i
//! ```
//!
//! with `[a, b] = ∂₁a ∂₂b − ∂₂a ∂₁b`. Because `x₂` is not periodic,
//! `[a, f]` is applied analytically as `β ∂₁a`.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::forms::VectorFieldOnGrid;
use crate::grid::{dealias, invert_helmholtz, partial, Field, PeriodicGrid};
use crate::noise::{NoiseBasis, NoiseMode, WienerPath};

/// Hyperviscous filter `−ν(−Δ)^s μ`, applied as an exact integrating factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Filter {
    pub nu: f64,
    pub order: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SQGParams {
    pub f: f64,
    pub beta: f64,
    pub f0: f64,
    pub filter: Option<Filter>,
}

impl Default for SQGParams {
    fn default() -> Self {
        Self {
            f: 0.0,
            beta: 0.0,
            f0: 0.0,
            filter: None,
        }
    }
}

impl SQGParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.f.is_finite() && self.f >= 0.0) {
            return Err(Error::InvalidParameter(format!("F must be >= 0, got {}", self.f)));
        }
        if !self.beta.is_finite() || !self.f0.is_finite() {
            return Err(Error::InvalidParameter("beta and f0 must be finite".into()));
        }
        if let Some(filter) = self.filter {
            if !(filter.nu.is_finite() && filter.nu >= 0.0) || filter.order == 0 {
                return Err(Error::InvalidParameter(
                    "filter needs nu >= 0 and order >= 1".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SQGState {
    pub mu: Field,
    pub time: f64,
}

impl SQGState {
    /// Initial state; `μ` is dealiased on entry.
    pub fn new(mu: Field) -> Result<Self> {
        let dims = mu.grid().dims();
        if dims != 2 {
            return Err(Error::Dimension {
                required: 2,
                found: dims,
            });
        }
        Ok(Self {
            mu: dealias(&mu),
            time: 0.0,
        })
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.mu.grid()
    }

    pub fn psi(&self, params: &SQGParams) -> Result<Field> {
        invert_helmholtz(&self.mu, params.f)
    }

    /// Samples of `Q = μ + f₀ + βx₂` at the grid nodes.
    pub fn q_values(&self, params: &SQGParams) -> Vec<f64> {
        let grid = self.grid();
        self.mu
            .values()
            .iter()
            .enumerate()
            .map(|(i, m)| m + params.f0 + params.beta * grid.point(i)[1])
            .collect()
    }

    /// Geostrophic velocity `ẑ × ∇ψ`.
    pub fn velocity(&self, params: &SQGParams) -> Result<VectorFieldOnGrid> {
        VectorFieldOnGrid::from_stream_function(&self.psi(params)?)
    }
}

fn require_2d(grid: &PeriodicGrid) -> Result<()> {
    if grid.dims() != 2 {
        return Err(Error::Dimension {
            required: 2,
            found: grid.dims(),
        });
    }
    Ok(())
}

/// Jacobian `[a, b] = ∂₁a ∂₂b − ∂₂a ∂₁b`, dealiased.
pub fn jacobi_bracket(a: &Field, b: &Field) -> Result<Field> {
    require_2d(a.grid())?;
    a.grid().check_same(b.grid())?;
    Ok(bracket(a, b))
}

fn bracket(a: &Field, b: &Field) -> Field {
    let (a1, a2) = (partial(a, 0), partial(a, 1));
    let (b1, b2) = (partial(b, 0), partial(b, 1));
    let v: Vec<f64> = a1
        .values()
        .iter()
        .zip(b2.values())
        .zip(a2.values().iter().zip(b1.values()))
        .map(|((x1, y2), (x2, y1))| x1 * y2 - x2 * y1)
        .collect();
    dealias(&Field::from_values(a.grid(), v).expect("same grid"))
}

/// `[a, Q] = [a, μ] + β ∂₁a` (`f₀` drops out).
pub fn bracket_with_q(a: &Field, mu: &Field, params: &SQGParams) -> Field {
    let b = bracket(a, mu);
    if params.beta == 0.0 {
        b
    } else {
        b.axpy(params.beta, &partial(a, 0))
    }
}

/// `∂μ/∂t = −[ψ, Q] = −[ψ, μ] − β ∂₁ψ`.
pub fn rhs_deterministic(state: &SQGState, params: &SQGParams) -> Result<Field> {
    let psi = state.psi(params)?;
    Ok(-&bracket_with_q(&psi, &state.mu, params))
}

fn drift(mu: &Field, params: &SQGParams) -> Result<Field> {
    let psi = invert_helmholtz(mu, params.f)?;
    Ok(-&bracket_with_q(&psi, mu, params))
}

fn stream_functions(basis: &NoiseBasis) -> Result<&[Field]> {
    if basis.is_empty() {
        return Ok(&[]);
    }
    if basis.mode() != NoiseMode::QgStreamFunction {
        return Err(Error::Basis("SQG noise must be given as stream functions".into()));
    }
    Ok(basis.stream_functions())
}

fn check_increments(basis: &NoiseBasis, dw: &[f64]) -> Result<()> {
    if dw.len() != basis.len() {
        return Err(Error::Basis(format!(
            "{} increments for {} noise fields",
            dw.len(),
            basis.len()
        )));
    }
    if dw.iter().any(|d| !d.is_finite()) {
        return Err(Error::InvalidParameter("non-finite Brownian increment".into()));
    }
    Ok(())
}

fn apply_filter(mu: Field, params: &SQGParams, dt: f64) -> Field {
    match params.filter {
        Some(Filter { nu, order }) if nu > 0.0 => {
            let grid = mu.grid().clone();
            mu.map_modes(|i, c| {
                let k = grid.wavevector(i);
                let k2 = k[0] * k[0] + k[1] * k[1];
                c * (-nu * k2.powi(order as i32) * dt).exp()
            })
        }
        _ => mu,
    }
}

fn advance(state: &SQGState, mu: Field, params: &SQGParams, dt: f64) -> SQGState {
    SQGState {
        mu: apply_filter(mu, params, dt),
        time: state.time + dt,
    }
}

/// Stochastic Heun step for the Stratonovich equation.
pub fn strat_step(
    state: &SQGState,
    params: &SQGParams,
    basis: &NoiseBasis,
    dw: &[f64],
    dt: f64,
) -> Result<SQGState> {
    let xis = stream_functions(basis)?;
    check_increments(basis, dw)?;
    let mu = &state.mu;
    let a0 = drift(mu, params)?;
    let b0: Vec<Field> = xis.iter().map(|x| bracket_with_q(x, mu, params)).collect();
    let mut terms: Vec<(f64, &Field)> = vec![(1.0, mu), (dt, &a0)];
    terms.extend(b0.iter().zip(dw).map(|(b, &w)| (w, b)));
    let pred = Field::combination(&terms);
    let a1 = drift(&pred, params)?;
    let b1: Vec<Field> = xis.iter().map(|x| bracket_with_q(x, &pred, params)).collect();
    let mut terms: Vec<(f64, &Field)> = vec![(1.0, mu), (0.5 * dt, &a0), (0.5 * dt, &a1)];
    for ((p, q), &w) in b0.iter().zip(&b1).zip(dw) {
        terms.push((0.5 * w, p));
        terms.push((0.5 * w, q));
    }
    Ok(advance(state, Field::combination(&terms), params, dt))
}

/// Euler–Maruyama step for the Itô equation, with the drift
/// `½ Σ_j [ξ_j, [ξ_j, Q]]` included when `corrected` is set.
fn ito_like_step(
    state: &SQGState,
    params: &SQGParams,
    basis: &NoiseBasis,
    dw: &[f64],
    dt: f64,
    corrected: bool,
) -> Result<SQGState> {
    let xis = stream_functions(basis)?;
    check_increments(basis, dw)?;
    let mu = &state.mu;
    let a = drift(mu, params)?;
    let b: Vec<Field> = xis.iter().map(|x| bracket_with_q(x, mu, params)).collect();
    let c: Vec<Field> = if corrected {
        xis.iter().zip(&b).map(|(x, bi)| bracket(x, bi)).collect()
    } else {
        Vec::new()
    };
    let mut terms: Vec<(f64, &Field)> = vec![(1.0, mu), (dt, &a)];
    terms.extend(b.iter().zip(dw).map(|(bi, &w)| (w, bi)));
    terms.extend(c.iter().map(|ci| (0.5 * dt, ci)));
    Ok(advance(state, Field::combination(&terms), params, dt))
}

pub fn ito_step(
    state: &SQGState,
    params: &SQGParams,
    basis: &NoiseBasis,
    dw: &[f64],
    dt: f64,
) -> Result<SQGState> {
    ito_like_step(state, params, basis, dw, dt, true)
}

/// Euler–Maruyama without the double-bracket drift.
pub fn ito_uncorrected_step(
    state: &SQGState,
    params: &SQGParams,
    basis: &NoiseBasis,
    dw: &[f64],
    dt: f64,
) -> Result<SQGState> {
    ito_like_step(state, params, basis, dw, dt, false)
}

/// `½ Σ_j [ξ_j, [ξ_j, Q]]`.
pub fn ito_drift_correction(state: &SQGState, params: &SQGParams, basis: &NoiseBasis) -> Result<Field> {
    let xis = stream_functions(basis)?;
    let mut out = Field::zeros(state.grid());
    for x in xis {
        let inner = bracket_with_q(x, &state.mu, params);
        out = out.axpy(0.5, &bracket(x, &inner));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Deterministic,
    Stratonovich,
    Ito,
    ItoUncorrected,
}

impl Scheme {
    pub fn parse(s: &str) -> Option<Scheme> {
        match s {
            "deterministic" => Some(Scheme::Deterministic),
            "stratonovich" => Some(Scheme::Stratonovich),
            "ito" => Some(Scheme::Ito),
            "ito_uncorrected" => Some(Scheme::ItoUncorrected),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Deterministic => "deterministic",
            Scheme::Stratonovich => "stratonovich",
            Scheme::Ito => "ito",
            Scheme::ItoUncorrected => "ito_uncorrected",
        }
    }
}

/// One step of the chosen scheme. Deterministic steps ignore the basis.
pub fn step(
    scheme: Scheme,
    state: &SQGState,
    params: &SQGParams,
    basis: &NoiseBasis,
    dw: &[f64],
    dt: f64,
) -> Result<SQGState> {
    match scheme {
        Scheme::Deterministic => strat_step(state, params, &NoiseBasis::empty(), &[], dt),
        Scheme::Stratonovich => strat_step(state, params, basis, dw, dt),
        Scheme::Ito => ito_step(state, params, basis, dw, dt),
        Scheme::ItoUncorrected => ito_uncorrected_step(state, params, basis, dw, dt),
    }
}

/// Integrand of a Casimir `C_Φ = ∫ Φ(Q)`.
#[derive(Debug, Clone, PartialEq)]
pub enum CasimirSpec {
    /// `Φ(Q) = Qⁿ`, `n ≤ 4`.
    Power(u32),
    /// Piecewise-linear `Φ` through increasing nodes `q`.
    Tabulated { q: Vec<f64>, phi: Vec<f64> },
}

fn tabulated(q: &[f64], phi: &[f64], x: f64) -> Result<f64> {
    if q.len() < 2 || q.len() != phi.len() || q.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Unsupported(
            "tabulated Casimir needs at least two increasing nodes".into(),
        ));
    }
    if x < q[0] || x > q[q.len() - 1] {
        return Err(Error::Unsupported(format!(
            "Q = {x} lies outside the tabulated range [{}, {}]",
            q[0],
            q[q.len() - 1]
        )));
    }
    let j = q.partition_point(|&v| v <= x).clamp(1, q.len() - 1);
    let t = (x - q[j - 1]) / (q[j] - q[j - 1]);
    Ok(phi[j - 1] + t * (phi[j] - phi[j - 1]))
}

pub fn casimir(state: &SQGState, params: &SQGParams, spec: &CasimirSpec) -> Result<f64> {
    let q = state.q_values(params);
    let grid = state.grid();
    let sum: f64 = match spec {
        CasimirSpec::Power(n) if *n <= 4 => q.iter().map(|v| v.powi(*n as i32)).sum(),
        CasimirSpec::Power(n) => {
            return Err(Error::Unsupported(format!("power {n} Casimir (at most 4)")))
        }
        CasimirSpec::Tabulated { q: nodes, phi } => {
            let mut s = 0.0;
            for v in &q {
                s += tabulated(nodes, phi, *v)?;
            }
            s
        }
    };
    Ok(sum / grid.len() as f64 * grid.volume())
}

/// `H = ½ ∫ (|∇ψ|² + F ψ²)`.
pub fn energy(state: &SQGState, params: &SQGParams) -> Result<f64> {
    let psi = state.psi(params)?;
    let (p1, p2) = (partial(&psi, 0), partial(&psi, 1));
    let n = psi.values().len() as f64;
    let s: f64 = psi
        .values()
        .iter()
        .zip(p1.values().iter().zip(p2.values()))
        .map(|(p, (a, b))| a * a + b * b + params.f * p * p)
        .sum();
    Ok(0.5 * s / n * state.grid().volume())
}

/// Advisory Courant numbers: `max|u| dt/h` and `Σ_i max|ẑ×∇ξ_i| √dt / h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CflAdvisory {
    pub drift: f64,
    pub noise: f64,
}

pub fn cfl_advisory(state: &SQGState, params: &SQGParams, basis: &NoiseBasis, dt: f64) -> Result<CflAdvisory> {
    let grid = state.grid();
    let h = grid.spacing(0).min(grid.spacing(1));
    let u = state.velocity(params)?;
    let speed = |v: &VectorFieldOnGrid| -> f64 {
        let (a, b) = (&v.components()[0], &v.components()[1]);
        a.values()
            .iter()
            .zip(b.values())
            .fold(0.0f64, |m, (x, y)| m.max(x.hypot(*y)))
    };
    let mut noise = 0.0;
    for x in stream_functions(basis)? {
        noise += speed(&VectorFieldOnGrid::from_stream_function(x)?) * dt.sqrt() / h;
    }
    Ok(CflAdvisory {
        drift: speed(&u) * dt / h,
        noise,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    pub time: f64,
    pub energy: f64,
    /// `∫Q, ∫Q², ∫Q³, ∫Q⁴`.
    pub casimirs: [f64; 4],
    pub mean_mu: f64,
    pub max_abs_q: f64,
}

pub fn diagnostics(state: &SQGState, params: &SQGParams) -> Result<Diagnostics> {
    let mut casimirs = [0.0; 4];
    for (n, c) in casimirs.iter_mut().enumerate() {
        *c = casimir(state, params, &CasimirSpec::Power(n as u32 + 1))?;
    }
    let q = state.q_values(params);
    Ok(Diagnostics {
        time: state.time,
        energy: energy(state, params)?,
        casimirs,
        mean_mu: state.mu.mean(),
        max_abs_q: q.iter().fold(0.0f64, |m, v| m.max(v.abs())),
    })
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub params: SQGParams,
    pub scheme: Scheme,
    pub dt: f64,
    pub steps: usize,
    pub basis: NoiseBasis,
    /// Brownian path; required for stochastic schemes, with `dt` matching.
    pub path: Option<WienerPath>,
    /// Diagnostics every this many steps (0 disables; the final state is always recorded).
    pub diagnostic_every: usize,
    /// Snapshots every this many steps (0 disables).
    pub snapshot_every: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub state: SQGState,
    pub diagnostics: Vec<Diagnostics>,
    pub snapshots: Vec<SQGState>,
    pub cfl: CflAdvisory,
}

pub fn run(initial: &SQGState, config: &RunConfig) -> Result<RunOutput> {
    config.params.validate()?;
    if !(config.dt.is_finite() && config.dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {}", config.dt)));
    }
    let stochastic = config.scheme != Scheme::Deterministic && !config.basis.is_empty();
    let path = if stochastic {
        let p = config
            .path
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("stochastic run needs a Brownian path".into()))?;
        if p.components() != config.basis.len() {
            return Err(Error::Basis(format!(
                "path has {} components, basis has {}",
                p.components(),
                config.basis.len()
            )));
        }
        if p.steps() < config.steps || (p.dt() - config.dt).abs() > 1e-12 * config.dt {
            return Err(Error::InvalidParameter(
                "Brownian path does not cover the run at the configured dt".into(),
            ));
        }
        Some(p)
    } else {
        None
    };
    let cfl = cfl_advisory(initial, &config.params, &config.basis, config.dt)?;
    let mut state = initial.clone();
    let mut diags = Vec::new();
    let mut snaps = Vec::new();
    let due = |every: usize, n: usize| every > 0 && n % every == 0;
    if due(config.diagnostic_every, 0) {
        diags.push(diagnostics(&state, &config.params)?);
    }
    if due(config.snapshot_every, 0) {
        snaps.push(state.clone());
    }
    for n in 0..config.steps {
        let dw = path.map(|p| p.increment(n)).unwrap_or(&[]);
        let next = if stochastic {
            step(config.scheme, &state, &config.params, &config.basis, dw, config.dt)?
        } else {
            step(Scheme::Deterministic, &state, &config.params, &config.basis, &[], config.dt)?
        };
        if !next.mu.is_finite() {
            return Err(Error::Blowup {
                time: next.time,
                last_good_time: state.time,
            });
        }
        state = next;
        if due(config.diagnostic_every, n + 1) {
            diags.push(diagnostics(&state, &config.params)?);
        }
        if due(config.snapshot_every, n + 1) {
            snaps.push(state.clone());
        }
    }
    if diags.last().map(|d| d.time) != Some(state.time) {
        diags.push(diagnostics(&state, &config.params)?);
    }
    Ok(RunOutput {
        state,
        diagnostics: diags,
        snapshots: snaps,
        cfl,
    })
}

/// Phase of the `cos(k·x)` mode of a field: `atan2(⟨f, sin k·x⟩, ⟨f, cos k·x⟩)`.
pub fn mode_phase(f: &Field, k: [i64; 2]) -> f64 {
    let grid = f.grid();
    let idx = [k[0].rem_euclid(grid.shape()[0] as i64) as usize, k[1].rem_euclid(grid.shape()[1] as i64) as usize];
    // c_k = Σ f e^{-ik·x}; for f = A cos(k·x − θ), c_k = (N A / 2) e^{-iθ}
    let c: Complex64 = f.spectrum()[grid.ravel(&idx)];
    (-c.im).atan2(c.re)
}

/// Linear Rossby frequency `−βk₁ / (|k|² + F)` on the 2π torus.
pub fn rossby_frequency(k: [f64; 2], params: &SQGParams) -> f64 {
    -params.beta * k[0] / (k[0] * k[0] + k[1] * k[1] + params.f)
}
