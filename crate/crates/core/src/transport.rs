//! Advection of forms, material loops and tracers by prescribed stochastic
//! flows `dx_t = u dt − Σ_i ξ_i ∘ dW_i`, plus the conservation checks built
//! on them (Kelvin circulation, helicity, vorticity flux, PV on paths).
//!
//! All objects of one realization consume the same [`WienerPath`]. When the
//! flow carries no noise the path only supplies the time step.

use std::f64::consts::TAU;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::forms::{exterior_derivative, helicity, lie_derivative_closed, DifferentialForm, Grade, VectorFieldOnGrid};
use crate::grid::{dealias, dot_unchecked, partial, translate, Field, PeriodicGrid};
use crate::interp::SpectralInterpolator;
use crate::noise::{NoiseBasis, WienerPath};
use crate::sqg::{self, SQGParams, SQGState, Scheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpretation {
    Stratonovich,
    Ito,
}

impl Interpretation {
    pub fn name(self) -> &'static str {
        match self {
            Interpretation::Stratonovich => "stratonovich",
            Interpretation::Ito => "ito",
        }
    }
}

/// Steady drift and noise fields with a stochastic interpretation.
#[derive(Debug, Clone)]
pub struct FlowSpec {
    drift: VectorFieldOnGrid,
    basis: NoiseBasis,
    noise: Vec<VectorFieldOnGrid>,
    interpretation: Interpretation,
}

impl FlowSpec {
    pub fn new(drift: VectorFieldOnGrid, basis: NoiseBasis, interpretation: Interpretation) -> Result<Self> {
        let noise = basis.velocity_fields()?;
        for xi in &noise {
            drift.grid().check_same(xi.grid())?;
            if xi.dims() != drift.dims() {
                return Err(Error::ShapeMismatch {
                    expected: drift.dims(),
                    found: xi.dims(),
                });
            }
        }
        Ok(Self {
            drift,
            basis,
            noise,
            interpretation,
        })
    }

    /// Like [`FlowSpec::new`] but requires every field to be divergence-free.
    pub fn incompressible(drift: VectorFieldOnGrid, basis: NoiseBasis, interpretation: Interpretation) -> Result<Self> {
        let flow = Self::new(drift, basis, interpretation)?;
        for v in std::iter::once(&flow.drift).chain(&flow.noise) {
            let residual = v.divergence_residual();
            let tolerance = 1e-10 * v.norm().max(1.0);
            if residual > tolerance {
                return Err(Error::NotDivergenceFree { residual, tolerance });
            }
        }
        Ok(flow)
    }

    pub fn with_interpretation(&self, interpretation: Interpretation) -> Self {
        Self {
            interpretation,
            ..self.clone()
        }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.drift.grid()
    }

    pub fn dims(&self) -> usize {
        self.drift.dims()
    }

    pub fn drift(&self) -> &VectorFieldOnGrid {
        &self.drift
    }

    pub fn basis(&self) -> &NoiseBasis {
        &self.basis
    }

    pub fn noise_fields(&self) -> &[VectorFieldOnGrid] {
        &self.noise
    }

    pub fn interpretation(&self) -> Interpretation {
        self.interpretation
    }

    /// Itô drift `−½ Σ_i (ξ_i·∇)ξ_i` that turns Itô paths `dx = u dt − Σξ dW`
    /// into Stratonovich paths of the shifted drift `u + w`.
    pub fn ito_path_drift(&self) -> VectorFieldOnGrid {
        let grid = self.grid();
        let d = self.dims();
        let mut w = vec![Field::zeros(grid); d];
        for xi in &self.noise {
            let xs = xi.components();
            for (i, wi) in w.iter_mut().enumerate() {
                for (j, xj) in xs.iter().enumerate() {
                    let term = dealias(&xj.mul(&partial(&xs[i], j)));
                    *wi = wi.axpy(-0.5, &term);
                }
            }
        }
        VectorFieldOnGrid::new(w).expect("components share the flow grid")
    }

    fn check_path(&self, path: &WienerPath) -> Result<()> {
        if !self.noise.is_empty() && path.components() != self.noise.len() {
            return Err(Error::Basis(format!(
                "path has {} components, flow has {} noise fields",
                path.components(),
                self.noise.len()
            )));
        }
        Ok(())
    }
}

/// Number of steps of `path` covering `[0, t_final]`.
pub fn steps_for(path: &WienerPath, t_final: f64) -> Result<usize> {
    if !(t_final.is_finite() && t_final >= 0.0) {
        return Err(Error::InvalidParameter(format!("final time {t_final} is invalid")));
    }
    let n = (t_final / path.dt()).round();
    if (n * path.dt() - t_final).abs() > 1e-9 * t_final.max(path.dt()) {
        return Err(Error::InvalidParameter(format!(
            "final time {t_final} is not a multiple of dt = {}",
            path.dt()
        )));
    }
    let n = n as usize;
    if n > path.steps() {
        return Err(Error::InvalidParameter(format!(
            "path has {} steps, {n} needed",
            path.steps()
        )));
    }
    Ok(n)
}

fn increments<'a>(flow: &FlowSpec, path: &'a WienerPath, n: usize) -> &'a [f64] {
    if flow.noise.is_empty() {
        &[]
    } else {
        path.increment(n)
    }
}

fn nonzero(v: VectorFieldOnGrid) -> Option<VectorFieldOnGrid> {
    (v.max_abs() > 0.0).then_some(v)
}

fn mean3(v: &VectorFieldOnGrid) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (o, m) in out.iter_mut().zip(v.mean()) {
        *o = m;
    }
    out
}

/// Strang splitting of one field step: the uniform parts of the flow act as
/// an exact spectral translation by half a step on either side of the scheme
/// applied to the fluctuating parts.
struct FormStepper {
    interpretation: Interpretation,
    drift_mean: [f64; 3],
    noise_mean: Vec<[f64; 3]>,
    drift: Option<VectorFieldOnGrid>,
    noise: Vec<Option<VectorFieldOnGrid>>,
}

impl FormStepper {
    fn new(flow: &FlowSpec) -> Self {
        Self {
            interpretation: flow.interpretation,
            drift_mean: mean3(&flow.drift),
            noise_mean: flow.noise.iter().map(mean3).collect(),
            drift: nonzero(flow.drift.fluctuation()),
            noise: flow.noise.iter().map(|x| nonzero(x.fluctuation())).collect(),
        }
    }

    fn shift(&self, dw: &[f64], dt: f64) -> [f64; 3] {
        let mut s = self.drift_mean.map(|u| u * dt);
        for (m, w) in self.noise_mean.iter().zip(dw) {
            for a in 0..3 {
                s[a] -= m[a] * w;
            }
        }
        s
    }

    /// `−£_ũ q dt + Σ £_ξ̃ q ΔW`.
    fn tendency(&self, q: &DifferentialForm, dw: &[f64], dt: f64) -> Result<DifferentialForm> {
        let mut out = DifferentialForm::zeros(q.grid(), q.grade());
        if let Some(u) = &self.drift {
            out = out.axpy(-dt, &lie_derivative_closed(u, q)?)?;
        }
        for (xi, &w) in self.noise.iter().zip(dw) {
            if let Some(xi) = xi {
                out = out.axpy(w, &lie_derivative_closed(xi, q)?)?;
            }
        }
        Ok(out)
    }

    fn scheme(&self, q: &DifferentialForm, dw: &[f64], dt: f64) -> Result<DifferentialForm> {
        let k0 = self.tendency(q, dw, dt)?;
        match self.interpretation {
            Interpretation::Stratonovich => {
                let pred = q.add(&k0)?;
                let k1 = self.tendency(&pred, dw, dt)?;
                q.axpy(0.5, &k0)?.axpy(0.5, &k1)
            }
            Interpretation::Ito => {
                let mut out = q.add(&k0)?;
                for xi in self.noise.iter().flatten() {
                    let once = lie_derivative_closed(xi, q)?;
                    out = out.axpy(0.5 * dt, &lie_derivative_closed(xi, &once)?)?;
                }
                Ok(out)
            }
        }
    }

    fn step(&self, q: &DifferentialForm, dw: &[f64], dt: f64) -> Result<DifferentialForm> {
        let half = self.shift(dw, dt).map(|s| 0.5 * s);
        let moved = q.map(|c| translate(c, half));
        let stepped = self.scheme(&moved, dw, dt)?;
        Ok(stepped.map(|c| translate(c, half)))
    }
}

/// Advects `q0` by `dq + £_{dx_t} q = 0` (Stratonovich, stochastic Heun) or
/// its Itô form with the `½ Σ £_ξ £_ξ q dt` drift (Euler–Maruyama). Returns
/// `(t, q)` every `record_every` steps plus the final state.
pub fn advect_form(
    q0: &DifferentialForm,
    flow: &FlowSpec,
    path: &WienerPath,
    t_final: f64,
    record_every: usize,
) -> Result<Vec<(f64, DifferentialForm)>> {
    flow.grid().check_same(q0.grid())?;
    flow.check_path(path)?;
    let steps = steps_for(path, t_final)?;
    let stepper = FormStepper::new(flow);
    let dt = path.dt();
    let mut q = q0.dealiased();
    let mut out = vec![(0.0, q.clone())];
    for n in 0..steps {
        q = stepper.step(&q, increments(flow, path, n), dt)?;
        if (record_every > 0 && (n + 1) % record_every == 0) || n + 1 == steps {
            out.push(((n + 1) as f64 * dt, q.clone()));
        }
    }
    Ok(out)
}

/// Drift and noise velocities at a point.
type PointVelocity = ([f64; 3], Vec<[f64; 3]>);

/// Off-grid sampler for a steady flow.
struct FlowSampler {
    interp: SpectralInterpolator,
    dims: usize,
    k: usize,
}

impl FlowSampler {
    fn new(drift: &VectorFieldOnGrid, noise: &[VectorFieldOnGrid]) -> Result<Self> {
        let mut fields: Vec<&Field> = drift.components().iter().collect();
        for xi in noise {
            fields.extend(xi.components());
        }
        Ok(Self {
            interp: SpectralInterpolator::new(&fields)?,
            dims: drift.dims(),
            k: noise.len(),
        })
    }

    fn sample(&self, x: [f64; 3]) -> Result<PointVelocity> {
        let v = self.interp.eval(x)?;
        let d = self.dims;
        let mut u = [0.0; 3];
        u[..d].copy_from_slice(&v[..d]);
        let xi = (0..self.k)
            .map(|i| {
                let mut e = [0.0; 3];
                e[..d].copy_from_slice(&v[d * (i + 1)..d * (i + 2)]);
                e
            })
            .collect();
        Ok((u, xi))
    }
}

fn displacement(v: &PointVelocity, dw: &[f64], dt: f64) -> [f64; 3] {
    let mut out = v.0.map(|u| u * dt);
    for (xi, w) in v.1.iter().zip(dw) {
        for a in 0..3 {
            out[a] -= xi[a] * w;
        }
    }
    out
}

fn add3(a: [f64; 3], b: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]]
}

/// One point-SDE step: Heun for Stratonovich, Euler–Maruyama for Itô. `v0`
/// samples the flow at the start of the step and `v1` at its end.
fn point_step(
    x: [f64; 3],
    dw: &[f64],
    dt: f64,
    interpretation: Interpretation,
    v0: impl Fn([f64; 3]) -> Result<PointVelocity>,
    v1: impl Fn([f64; 3]) -> Result<PointVelocity>,
) -> Result<[f64; 3]> {
    let d0 = displacement(&v0(x)?, dw, dt);
    let pred = add3(x, d0, 1.0);
    let next = match interpretation {
        Interpretation::Ito => pred,
        Interpretation::Stratonovich => {
            let d1 = displacement(&v1(pred)?, dw, dt);
            add3(add3(x, d0, 0.5), d1, 0.5)
        }
    };
    if next.iter().any(|c| !c.is_finite()) {
        return Err(Error::Interpolation(next));
    }
    Ok(next)
}

/// Closed polyline of vertices in unwrapped coordinates. The loop is treated
/// as a periodic curve in its parameter, so line integrals and resampling use
/// its trigonometric interpolant.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialLoop {
    points: Vec<[f64; 3]>,
    dims: usize,
    initial_spacing: f64,
    resample_threshold: f64,
    resamples: usize,
}

pub const MIN_LOOP_POINTS: usize = 16;

impl MaterialLoop {
    /// Loop through `points` (first vertex not repeated); resampled when a
    /// segment exceeds twice the initial mean spacing.
    pub fn new(points: Vec<[f64; 3]>, dims: usize) -> Result<Self> {
        if !(2..=3).contains(&dims) {
            return Err(Error::InvalidParameter(format!("loops live in 2 or 3 dimensions, not {dims}")));
        }
        if points.len() < MIN_LOOP_POINTS {
            return Err(Error::InvalidParameter(format!(
                "a loop needs at least {MIN_LOOP_POINTS} points, got {}",
                points.len()
            )));
        }
        if points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("loop vertex is not finite".into()));
        }
        let mut l = Self {
            points,
            dims,
            initial_spacing: 0.0,
            resample_threshold: 2.0,
            resamples: 0,
        };
        l.initial_spacing = l.perimeter() / l.points.len() as f64;
        if l.initial_spacing == 0.0 {
            return Err(Error::InvalidParameter("degenerate loop".into()));
        }
        Ok(l)
    }

    /// Circle of radius `r` about `center` in the plane of axes `plane`.
    pub fn circle(center: [f64; 3], r: f64, p: usize, dims: usize, plane: (usize, usize)) -> Result<Self> {
        if plane.0 >= dims || plane.1 >= dims || plane.0 == plane.1 {
            return Err(Error::InvalidParameter("circle plane axes are invalid".into()));
        }
        let points = (0..p)
            .map(|j| {
                let t = TAU * j as f64 / p as f64;
                let mut x = center;
                x[plane.0] += r * t.cos();
                x[plane.1] += r * t.sin();
                x
            })
            .collect();
        Self::new(points, dims)
    }

    pub fn with_resample_threshold(mut self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 1.0) {
            return Err(Error::InvalidParameter("resample threshold must exceed 1".into()));
        }
        self.resample_threshold = factor;
        Ok(self)
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn initial_spacing(&self) -> f64 {
        self.initial_spacing
    }

    pub fn resamples(&self) -> usize {
        self.resamples
    }

    fn segment(&self, j: usize) -> f64 {
        let a = self.points[j];
        let b = self.points[(j + 1) % self.points.len()];
        (0..self.dims).map(|i| (b[i] - a[i]).powi(2)).sum::<f64>().sqrt()
    }

    /// Length of the polyline.
    pub fn perimeter(&self) -> f64 {
        (0..self.points.len()).map(|j| self.segment(j)).sum()
    }

    pub fn max_segment(&self) -> f64 {
        (0..self.points.len()).map(|j| self.segment(j)).fold(0.0, f64::max)
    }

    pub fn needs_resampling(&self) -> bool {
        self.max_segment() > self.resample_threshold * self.initial_spacing
    }

    /// Unnormalised DFT of each coordinate.
    fn coefficients(&self) -> Vec<Vec<Complex64>> {
        let p = self.points.len();
        let fft = FftPlanner::new().plan_fft_forward(p);
        (0..self.dims)
            .map(|a| {
                let mut c: Vec<Complex64> = self.points.iter().map(|x| Complex64::new(x[a], 0.0)).collect();
                fft.process(&mut c);
                c
            })
            .collect()
    }

    /// Tangent `dX/ds` at the vertices, `s ∈ [0, 1)`.
    pub fn tangents(&self) -> Vec<[f64; 3]> {
        let p = self.points.len();
        let inv = FftPlanner::new().plan_fft_inverse(p);
        let mut out = vec![[0.0; 3]; p];
        for (a, mut c) in self.coefficients().into_iter().enumerate() {
            for (j, cj) in c.iter_mut().enumerate() {
                let m = signed_mode(j, p);
                *cj *= if 2 * j == p { Complex64::new(0.0, 0.0) } else { Complex64::new(0.0, TAU * m as f64 / p as f64) };
            }
            inv.process(&mut c);
            for (o, v) in out.iter_mut().zip(&c) {
                o[a] = v.re;
            }
        }
        out
    }

    /// Redistributes vertices uniformly in arc length along the interpolating
    /// curve, doubling their number until the spacing is at most the initial one.
    pub fn resample(&mut self) {
        let p = self.points.len();
        let coeffs = self.coefficients();
        let fine = 16 * p;
        // speed |X'(s)| on a fine parameter grid by zero-padded inverse FFT
        let inv = FftPlanner::new().plan_fft_inverse(fine);
        let mut speed2 = vec![0.0; fine];
        for c in &coeffs {
            let mut padded = vec![Complex64::new(0.0, 0.0); fine];
            for (j, cj) in c.iter().enumerate() {
                if 2 * j == p {
                    continue;
                }
                let m = signed_mode(j, p);
                let slot = m.rem_euclid(fine as i64) as usize;
                padded[slot] = *cj * Complex64::new(0.0, TAU * m as f64) / p as f64;
            }
            inv.process(&mut padded);
            for (s, v) in speed2.iter_mut().zip(&padded) {
                *s += v.re * v.re;
            }
        }
        let speed: Vec<f64> = speed2.iter().map(|s| s.sqrt()).collect();
        let h = 1.0 / fine as f64;
        let mut arc = vec![0.0; fine + 1];
        for j in 0..fine {
            arc[j + 1] = arc[j] + 0.5 * h * (speed[j] + speed[(j + 1) % fine]);
        }
        let length = arc[fine];
        let mut p_new = p;
        while length / p_new as f64 > self.initial_spacing * (1.0 + 1e-12) {
            p_new *= 2;
        }
        let params: Vec<f64> = (0..p_new)
            .map(|j| {
                let target = length * j as f64 / p_new as f64;
                let i = arc.partition_point(|&a| a <= target).clamp(1, fine) - 1;
                let span = arc[i + 1] - arc[i];
                let frac = if span > 0.0 { (target - arc[i]) / span } else { 0.0 };
                (i as f64 + frac) * h
            })
            .collect();
        self.points = params.iter().map(|&s| eval_curve(&coeffs, p, s)).collect();
        self.resamples += 1;
    }
}

fn signed_mode(j: usize, p: usize) -> i64 {
    if j <= p / 2 {
        j as i64
    } else {
        j as i64 - p as i64
    }
}

fn eval_curve(coeffs: &[Vec<Complex64>], p: usize, s: f64) -> [f64; 3] {
    let mut x = [0.0; 3];
    for (a, c) in coeffs.iter().enumerate() {
        let mut v = 0.0;
        for (j, cj) in c.iter().enumerate() {
            let m = signed_mode(j, p) as f64;
            let phase = TAU * m * s;
            v += if 2 * j == p {
                cj.re * phase.cos()
            } else {
                cj.re * phase.cos() - cj.im * phase.sin()
            };
        }
        x[a] = v / p as f64;
    }
    x
}

/// Moves every vertex by the point SDE of the flow. Returns `(t, loop)` every
/// `record_every` steps plus the final loop.
pub fn advect_loop(
    loop0: &MaterialLoop,
    flow: &FlowSpec,
    path: &WienerPath,
    t_final: f64,
    record_every: usize,
) -> Result<Vec<(f64, MaterialLoop)>> {
    check_loop(loop0, flow)?;
    flow.check_path(path)?;
    let steps = steps_for(path, t_final)?;
    let sampler = FlowSampler::new(&flow.drift, &flow.noise)?;
    let dt = path.dt();
    let mut c = loop0.clone();
    let mut out = vec![(0.0, c.clone())];
    for n in 0..steps {
        step_loop(&mut c, &sampler, increments(flow, path, n), dt, flow.interpretation)?;
        if (record_every > 0 && (n + 1) % record_every == 0) || n + 1 == steps {
            out.push(((n + 1) as f64 * dt, c.clone()));
        }
    }
    Ok(out)
}

fn check_loop(c: &MaterialLoop, flow: &FlowSpec) -> Result<()> {
    if c.dims != flow.dims() {
        return Err(Error::Dimension {
            required: flow.dims(),
            found: c.dims,
        });
    }
    Ok(())
}

fn step_loop(
    c: &mut MaterialLoop,
    sampler: &FlowSampler,
    dw: &[f64],
    dt: f64,
    interpretation: Interpretation,
) -> Result<()> {
    let v = |x| sampler.sample(x);
    for x in c.points.iter_mut() {
        *x = point_step(*x, dw, dt, interpretation, v, v)?;
    }
    if c.needs_resampling() {
        c.resample();
    }
    Ok(())
}

/// `∮ (v/D)·dx` by the trapezoid rule in the loop parameter, with `v` and `D`
/// interpolated spectrally and the tangent from the loop's Fourier series.
pub fn circulation(c: &MaterialLoop, v: &DifferentialForm, density: Option<&Field>) -> Result<f64> {
    check_one_form(v, c.dims)?;
    let mut fields: Vec<&Field> = v.components().iter().collect();
    if let Some(d) = density {
        fields.push(d);
    }
    let interp = SpectralInterpolator::new(&fields)?;
    Ok(circulations(c, &interp, v.dims(), density.is_some())?[0])
}

fn check_one_form(v: &DifferentialForm, dims: usize) -> Result<()> {
    if v.grade() != Grade::OneForm {
        return Err(Error::Unsupported(format!("circulation of a {}", v.grade().name())));
    }
    if v.dims() != dims {
        return Err(Error::Dimension {
            required: dims,
            found: v.dims(),
        });
    }
    Ok(())
}

/// Circulations of consecutive blocks of `dims` interpolated components,
/// optionally divided by a trailing density.
fn circulations(c: &MaterialLoop, interp: &SpectralInterpolator, dims: usize, density: bool) -> Result<Vec<f64>> {
    let blocks = (interp.fields() - usize::from(density)) / dims;
    let tangents = c.tangents();
    let mut sums = vec![0.0; blocks];
    let mut vals = vec![0.0; interp.fields()];
    for (x, t) in c.points.iter().zip(&tangents) {
        interp.eval_into(*x, &mut vals)?;
        let d = if density { vals[interp.fields() - 1] } else { 1.0 };
        for (b, s) in sums.iter_mut().enumerate() {
            let dot: f64 = (0..dims).map(|a| vals[b * dims + a] * t[a]).sum();
            *s += dot / d;
        }
    }
    let p = c.points.len() as f64;
    Ok(sums.into_iter().map(|s| s / p).collect())
}

/// Time series of a conserved-quantity experiment together with the change
/// predicted by the paper's Itô formula and by the Itô–Wentzell calculation.
#[derive(Debug, Clone, PartialEq)]
pub struct ConservationReport {
    pub interpretation: Interpretation,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// `max_t |value(t) − value(0)| / |value(0)|`.
    pub max_relative_drift: f64,
    /// `value(T) − value(0)`.
    pub final_change: f64,
    /// Time integral of the double-Lie source term; zero for Stratonovich runs.
    pub paper_prediction: f64,
    /// Time integral of the source obtained with the Itô–Wentzell formula;
    /// zero for Stratonovich runs.
    pub ito_wentzell_prediction: f64,
    pub resamples: usize,
}

impl ConservationReport {
    fn new(interpretation: Interpretation) -> Self {
        Self {
            interpretation,
            times: Vec::new(),
            values: Vec::new(),
            max_relative_drift: 0.0,
            final_change: 0.0,
            paper_prediction: 0.0,
            ito_wentzell_prediction: 0.0,
            resamples: 0,
        }
    }

    fn push(&mut self, t: f64, v: f64) {
        if let Some(&v0) = self.values.first() {
            let scale = if v0 != 0.0 { v0.abs() } else { 1.0 };
            self.max_relative_drift = self.max_relative_drift.max((v - v0).abs() / scale);
            self.final_change = v - v0;
        }
        self.times.push(t);
        self.values.push(v);
    }
}

fn half_lie_laplacian(noise: &[VectorFieldOnGrid], q: &DifferentialForm) -> Result<DifferentialForm> {
    let mut out = DifferentialForm::zeros(q.grid(), q.grade());
    for xi in noise {
        let once = lie_derivative_closed(xi, q)?;
        out = out.axpy(0.5, &lie_derivative_closed(xi, &once)?)?;
    }
    Ok(out)
}

/// Co-advects the one-form `v0` and the loop `loop0` with one Brownian path
/// and records the circulation `∮ v` every `record_every` steps.
///
/// For Itô flows both predictions are integrated in time with the trapezoid
/// rule at every step: the paper's `½ ∮ Σ £_ξ £_ξ v` and the Itô–Wentzell
/// rate `∮ £_w v` with `w = −½ Σ (ξ·∇)ξ`.
pub fn kelvin_check(
    v0: &DifferentialForm,
    loop0: &MaterialLoop,
    flow: &FlowSpec,
    path: &WienerPath,
    t_final: f64,
    record_every: usize,
) -> Result<ConservationReport> {
    flow.grid().check_same(v0.grid())?;
    check_one_form(v0, flow.dims())?;
    check_loop(loop0, flow)?;
    flow.check_path(path)?;
    let steps = steps_for(path, t_final)?;
    let dims = flow.dims();
    let ito = flow.interpretation == Interpretation::Ito && !flow.noise.is_empty();
    let stepper = FormStepper::new(flow);
    let sampler = FlowSampler::new(&flow.drift, &flow.noise)?;
    let w = flow.ito_path_drift();
    let dt = path.dt();

    // circulation of v and, for Itô runs, of the two predicted source terms
    let measure = |v: &DifferentialForm, c: &MaterialLoop, with_sources: bool| -> Result<Vec<f64>> {
        let mut blocks = vec![v.clone()];
        if with_sources {
            blocks.push(half_lie_laplacian(&flow.noise, v)?);
            blocks.push(lie_derivative_closed(&w, v)?);
        }
        let fields: Vec<&Field> = blocks.iter().flat_map(|b| b.components()).collect();
        circulations(c, &SpectralInterpolator::new(&fields)?, dims, false)
    };

    let mut report = ConservationReport::new(flow.interpretation);
    let mut v = v0.dealiased();
    let mut c = loop0.clone();
    let mut last = measure(&v, &c, ito)?;
    report.push(0.0, last[0]);
    for n in 0..steps {
        let dw = increments(flow, path, n);
        v = stepper.step(&v, dw, dt)?;
        step_loop(&mut c, &sampler, dw, dt, flow.interpretation)?;
        let record = (record_every > 0 && (n + 1) % record_every == 0) || n + 1 == steps;
        if ito || record {
            let now = measure(&v, &c, ito)?;
            if ito {
                report.paper_prediction += 0.5 * dt * (last[1] + now[1]);
                report.ito_wentzell_prediction += 0.5 * dt * (last[2] + now[2]);
            }
            if record {
                report.push((n + 1) as f64 * dt, now[0]);
            }
            last = now;
        }
    }
    report.resamples = c.resamples;
    Ok(report)
}

/// Flux of vorticity `dv` through a surface spanning `loop0`, tracked as the
/// circulation of `v` around the advected boundary (Stokes).
pub fn vorticity_flux_check(
    v0: &DifferentialForm,
    loop0: &MaterialLoop,
    flow: &FlowSpec,
    path: &WienerPath,
    t_final: f64,
    record_every: usize,
) -> Result<ConservationReport> {
    if flow.dims() != 3 {
        return Err(Error::Dimension {
            required: 3,
            found: flow.dims(),
        });
    }
    kelvin_check(v0, loop0, flow, path, t_final, record_every)
}

/// Transports a 3D one-form and records the helicity `Λ = ∫ v·curl v`.
///
/// For Itô flows the paper's source `∫ v·Δ_Lie ω` is integrated in time. The
/// Itô–Wentzell prediction is zero: `Λ` is an Eulerian functional and the
/// drift-corrected Itô field coincides with the Stratonovich one.
pub fn helicity_check(
    v0: &DifferentialForm,
    flow: &FlowSpec,
    path: &WienerPath,
    t_final: f64,
    record_every: usize,
) -> Result<ConservationReport> {
    if flow.dims() != 3 {
        return Err(Error::Dimension {
            required: 3,
            found: flow.dims(),
        });
    }
    flow.grid().check_same(v0.grid())?;
    check_one_form(v0, 3)?;
    flow.check_path(path)?;
    let steps = steps_for(path, t_final)?;
    let ito = flow.interpretation == Interpretation::Ito && !flow.noise.is_empty();
    let stepper = FormStepper::new(flow);
    let dt = path.dt();
    let source = |v: &DifferentialForm| -> Result<f64> {
        let omega = exterior_derivative(v)?;
        let lap = half_lie_laplacian(&flow.noise, &omega)?;
        Ok(2.0
            * v.components()
                .iter()
                .zip(lap.components())
                .map(|(a, b)| dot_unchecked(a, b))
                .sum::<f64>())
    };
    let mut report = ConservationReport::new(flow.interpretation);
    let mut v = v0.dealiased();
    report.push(0.0, helicity(&v)?);
    let mut last = if ito { source(&v)? } else { 0.0 };
    for n in 0..steps {
        v = stepper.step(&v, increments(flow, path, n), dt)?;
        if ito {
            let now = source(&v)?;
            report.paper_prediction += 0.5 * dt * (last + now);
            last = now;
        }
        if (record_every > 0 && (n + 1) % record_every == 0) || n + 1 == steps {
            report.push((n + 1) as f64 * dt, helicity(&v)?);
        }
    }
    Ok(report)
}

/// Lagrangian markers carrying one scalar each. Positions are kept unwrapped
/// so that non-periodic parts of a carried field (such as `βx₂`) stay
/// continuous along a path; [`TracerEnsemble::wrapped_positions`] maps them
/// into the box.
#[derive(Debug, Clone, PartialEq)]
pub struct TracerEnsemble {
    positions: Vec<[f64; 3]>,
    values: Vec<f64>,
}

impl TracerEnsemble {
    pub fn new(positions: Vec<[f64; 3]>, values: Vec<f64>) -> Result<Self> {
        if positions.len() != values.len() {
            return Err(Error::ShapeMismatch {
                expected: positions.len(),
                found: values.len(),
            });
        }
        if positions.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("tracer position is not finite".into()));
        }
        Ok(Self { positions, values })
    }

    /// Tracers at `positions` carrying the initial PV of `state`.
    pub fn from_pv(state: &SQGState, params: &SQGParams, positions: Vec<[f64; 3]>) -> Result<Self> {
        let interp = SpectralInterpolator::new(&[&state.mu])?;
        let values = positions
            .iter()
            .map(|x| Ok(interp.eval(*x)?[0] + params.f0 + params.beta * x[1]))
            .collect::<Result<Vec<f64>>>()?;
        Self::new(positions, values)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn wrapped_positions(&self, grid: &PeriodicGrid) -> Vec<[f64; 3]> {
        self.positions
            .iter()
            .map(|x| {
                let mut y = *x;
                for (a, l) in grid.lengths().iter().enumerate() {
                    y[a] = x[a].rem_euclid(*l);
                }
                y
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct PvReport {
    pub interpretation: Interpretation,
    pub duration: f64,
    /// `Q(x_T, T) − Q(x_0, 0)` per tracer.
    pub dq: Vec<f64>,
    pub max_abs_dq: f64,
    /// Time average along each path of `½ Σ [ξ,[ξ,Q]]`, the paper's Itô rate.
    pub paper_rate: Vec<f64>,
    /// Time average along each path of `w·∇Q`, the Itô–Wentzell rate.
    pub ito_wentzell_rate: Vec<f64>,
    pub tracers: TracerEnsemble,
    pub state: SQGState,
}

impl PvReport {
    /// Tracer mean of `ΔQ / T`.
    pub fn mean_rate(&self) -> f64 {
        self.dq.iter().sum::<f64>() / (self.dq.len().max(1) as f64 * self.duration)
    }

    pub fn mean_paper_rate(&self) -> f64 {
        mean(&self.paper_rate)
    }

    pub fn mean_ito_wentzell_rate(&self) -> f64 {
        mean(&self.ito_wentzell_rate)
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Integrates an SQG run and tracers on the same Brownian path and measures
/// the PV change along each tracer. The field scheme must match the path
/// interpretation (`Stratonovich` with Heun, `Ito` with either Itô scheme);
/// deterministic runs pair with either.
pub fn pv_along_paths(
    initial: &SQGState,
    params: &SQGParams,
    basis: &NoiseBasis,
    scheme: Scheme,
    interpretation: Interpretation,
    tracers: &TracerEnsemble,
    path: &WienerPath,
    steps: usize,
) -> Result<PvReport> {
    let matched = matches!(
        (scheme, interpretation),
        (Scheme::Deterministic, _)
            | (Scheme::Stratonovich, Interpretation::Stratonovich)
            | (Scheme::Ito | Scheme::ItoUncorrected, Interpretation::Ito)
    );
    if !matched {
        return Err(Error::InvalidParameter(format!(
            "field scheme {} does not match {} tracer paths",
            scheme.name(),
            interpretation.name()
        )));
    }
    params.validate()?;
    let grid = initial.grid().clone();
    let noisy = scheme != Scheme::Deterministic && !basis.is_empty();
    let noise = if noisy { basis.velocity_fields()? } else { Vec::new() };
    if noisy && path.components() != noise.len() {
        return Err(Error::Basis(format!(
            "path has {} components, basis has {}",
            path.components(),
            noise.len()
        )));
    }
    if steps > path.steps() {
        return Err(Error::InvalidParameter(format!("path has {} steps, {steps} needed", path.steps())));
    }
    let dt = path.dt();
    let zero = VectorFieldOnGrid::zeros(&grid);
    let noise_sampler = FlowSampler::new(&zero, &noise)?;
    let w = if noisy {
        FlowSpec::new(zero.clone(), basis.clone(), Interpretation::Ito)?.ito_path_drift()
    } else {
        zero.clone()
    };
    let sampler_for = |state: &SQGState| -> Result<SpectralInterpolator> {
        let u = state.velocity(params)?;
        SpectralInterpolator::new(&[&u.components()[0], &u.components()[1]])
    };
    // interpolator of μ, ½Σ[ξ,[ξ,Q]] and w·∇Q for one state
    let rates_for = |state: &SQGState| -> Result<SpectralInterpolator> {
        let mu = &state.mu;
        let half_lap = if noisy {
            sqg::ito_drift_correction(state, params, basis)?
        } else {
            Field::zeros(&grid)
        };
        let wc = w.components();
        let w_grad_q = dealias(
            &wc[0]
                .mul(&partial(mu, 0))
                .zip(&wc[1].mul(&partial(mu, 1)), |a, b| a + b)
                .axpy(params.beta, &wc[1]),
        );
        SpectralInterpolator::new(&[mu, &half_lap, &w_grad_q])
    };
    let velocity = |interp: &SpectralInterpolator, x: [f64; 3]| -> Result<PointVelocity> {
        let u = interp.eval(x)?;
        let (_, xi) = noise_sampler.sample(x)?;
        Ok(([u[0], u[1], 0.0], xi))
    };

    let m = tracers.len();
    let mut positions = tracers.positions.clone();
    let mut state = initial.clone();
    let mut u_now = sampler_for(&state)?;
    let mut paper = vec![0.0; m];
    let mut iw = vec![0.0; m];
    let mut rates = rates_for(&state)?;
    let mut last: Vec<[f64; 2]> = positions
        .iter()
        .map(|x| rates.eval(*x).map(|r| [r[1], r[2]]))
        .collect::<Result<_>>()?;
    let empty: [f64; 0] = [];
    for n in 0..steps {
        let dw: &[f64] = if noisy { path.increment(n) } else { &empty };
        let next = sqg::step(scheme, &state, params, basis, dw, dt)?;
        if !next.mu.is_finite() {
            return Err(Error::Blowup {
                time: next.time,
                last_good_time: state.time,
            });
        }
        let u_next = sampler_for(&next)?;
        for x in positions.iter_mut() {
            *x = point_step(
                *x,
                dw,
                dt,
                interpretation,
                |y| velocity(&u_now, y),
                |y| velocity(&u_next, y),
            )?;
        }
        state = next;
        u_now = u_next;
        rates = rates_for(&state)?;
        for (j, x) in positions.iter().enumerate() {
            let r = rates.eval(*x)?;
            paper[j] += 0.5 * dt * (last[j][0] + r[1]);
            iw[j] += 0.5 * dt * (last[j][1] + r[2]);
            last[j] = [r[1], r[2]];
        }
    }
    let duration = steps as f64 * dt;
    let mut dq = Vec::with_capacity(m);
    for (x, q0) in positions.iter().zip(&tracers.values) {
        let q = rates.eval(*x)?[0] + params.f0 + params.beta * x[1];
        dq.push(q - q0);
    }
    let scale = if duration > 0.0 { 1.0 / duration } else { 0.0 };
    let values = dq.iter().zip(&tracers.values).map(|(d, q0)| q0 + d).collect();
    Ok(PvReport {
        interpretation,
        duration,
        max_abs_dq: dq.iter().fold(0.0, |a: f64, d| a.max(d.abs())),
        dq,
        paper_rate: paper.iter().map(|p| p * scale).collect(),
        ito_wentzell_rate: iw.iter().map(|p| p * scale).collect(),
        tracers: TracerEnsemble::new(positions, values)?,
        state,
    })
}
