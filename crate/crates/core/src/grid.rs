//! Periodic grids and spectrally represented scalar fields.
//!
//! Fields are stored as real samples in row-major order (axis 0 slowest),
//! and carry a lazily computed complex spectrum. The forward transform is
//! unnormalized, `c_k = Σ_x f(x) e^{-ik·x}`, and the inverse carries the
//! `1/N`, so `f(x) = (1/N) Σ_k c_k e^{ik·x}`.
//!
//! Every spectral operator acts diagonally on modes. Wavenumbers are the
//! signed integer mode indices scaled by `2π/length` per axis. For odd
//! derivatives the Nyquist wavenumber is treated as zero so real fields
//! stay real; even operators use its full magnitude.

use std::f64::consts::TAU;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, OnceLock};

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::FftPlans;

struct GridData {
    plans: FftPlans,
    /// Scaled wavenumbers per axis, Nyquist kept.
    wavenumbers: Vec<Vec<f64>>,
    /// Scaled wavenumbers per axis, Nyquist zeroed (first derivatives).
    deriv_wavenumbers: Vec<Vec<f64>>,
    /// Signed integer mode index per axis.
    modes: Vec<Vec<i64>>,
    /// Per axis, the index along that axis of every flat index.
    axis_index: Vec<Vec<u32>>,
    /// |k|² of every flat index.
    k2: Vec<f64>,
    /// Whether every flat index survives the two-thirds rule.
    retained: Vec<bool>,
}

/// Uniform periodic grid in two or three dimensions.
#[derive(Clone)]
pub struct PeriodicGrid {
    shape: Vec<usize>,
    lengths: Vec<f64>,
    data: Arc<GridData>,
}

impl PartialEq for PeriodicGrid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.data, &other.data)
            || (self.shape == other.shape && self.lengths == other.lengths)
    }
}

impl fmt::Debug for PeriodicGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PeriodicGrid")
            .field("shape", &self.shape)
            .field("lengths", &self.lengths)
            .finish()
    }
}

impl PeriodicGrid {
    /// Grid on the 2π-periodic torus.
    pub fn new(shape: &[usize]) -> Result<Self> {
        Self::with_lengths(shape, &vec![TAU; shape.len()])
    }

    pub fn with_lengths(shape: &[usize], lengths: &[f64]) -> Result<Self> {
        if !(2..=3).contains(&shape.len()) {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 2 or 3, got {}",
                shape.len()
            )));
        }
        if lengths.len() != shape.len() {
            return Err(Error::InvalidGrid(
                "one length per axis is required".into(),
            ));
        }
        for &n in shape {
            if n < 8 || !n.is_power_of_two() {
                return Err(Error::InvalidGrid(format!(
                    "points per axis must be a power of two >= 8, got {n}"
                )));
            }
        }
        for &l in lengths {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::InvalidGrid(format!("edge length {l} is not positive")));
            }
        }
        let mut wavenumbers: Vec<Vec<f64>> = Vec::new();
        let mut deriv_wavenumbers = Vec::new();
        let mut modes: Vec<Vec<i64>> = Vec::new();
        for (&n, &l) in shape.iter().zip(lengths) {
            let scale = TAU / l;
            let m: Vec<i64> = (0..n)
                .map(|j| if j <= n / 2 { j as i64 } else { j as i64 - n as i64 })
                .collect();
            wavenumbers.push(m.iter().map(|&k| k as f64 * scale).collect());
            deriv_wavenumbers.push(
                m.iter()
                    .map(|&k| if k as usize == n / 2 { 0.0 } else { k as f64 * scale })
                    .collect(),
            );
            modes.push(m);
        }
        let total: usize = shape.iter().product();
        let dims = shape.len();
        let mut axis_index = vec![Vec::with_capacity(total); dims];
        let mut k2 = Vec::with_capacity(total);
        let mut retained = Vec::with_capacity(total);
        for flat in 0..total {
            let mut rest = flat;
            let mut idx = [0usize; 3];
            for a in (0..dims).rev() {
                idx[a] = rest % shape[a];
                rest /= shape[a];
            }
            let mut sq = 0.0;
            let mut keep = true;
            for a in 0..dims {
                axis_index[a].push(idx[a] as u32);
                let k: f64 = wavenumbers[a][idx[a]];
                sq += k * k;
                keep &= modes[a][idx[a]].unsigned_abs() as usize <= shape[a] / 3;
            }
            k2.push(sq);
            retained.push(keep);
        }
        Ok(Self {
            shape: shape.to_vec(),
            lengths: lengths.to_vec(),
            data: Arc::new(GridData {
                plans: FftPlans::new(shape),
                wavenumbers,
                deriv_wavenumbers,
                modes,
                axis_index,
                k2,
                retained,
            }),
        })
    }

    pub fn dims(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    /// Total number of grid points.
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.lengths[axis] / self.shape[axis] as f64
    }

    /// Largest retained integer mode per axis under the two-thirds rule.
    pub fn cutoff(&self, axis: usize) -> usize {
        self.shape[axis] / 3
    }

    /// Per-axis indices of a flat (row-major) index.
    pub fn unravel(&self, mut flat: usize) -> [usize; 3] {
        let mut idx = [0usize; 3];
        for axis in (0..self.dims()).rev() {
            idx[axis] = flat % self.shape[axis];
            flat /= self.shape[axis];
        }
        idx
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &n)| acc * n + i)
    }

    /// Physical coordinates of a grid node; unused axes are zero.
    pub fn point(&self, flat: usize) -> [f64; 3] {
        let idx = self.unravel(flat);
        let mut x = [0.0; 3];
        for axis in 0..self.dims() {
            x[axis] = idx[axis] as f64 * self.spacing(axis);
        }
        x
    }

    /// Scaled wavevector of a flat spectral index (Nyquist kept).
    pub fn wavevector(&self, flat: usize) -> [f64; 3] {
        let idx = self.unravel(flat);
        let mut k = [0.0; 3];
        for axis in 0..self.dims() {
            k[axis] = self.data.wavenumbers[axis][idx[axis]];
        }
        k
    }

    /// Signed integer mode indices of a flat spectral index.
    pub fn mode(&self, flat: usize) -> [i64; 3] {
        let idx = self.unravel(flat);
        let mut m = [0i64; 3];
        for axis in 0..self.dims() {
            m[axis] = self.data.modes[axis][idx[axis]];
        }
        m
    }

    pub(crate) fn axis_wavenumbers(&self, axis: usize) -> &[f64] {
        &self.data.wavenumbers[axis]
    }

    pub(crate) fn axis_deriv_wavenumbers(&self, axis: usize) -> &[f64] {
        &self.data.deriv_wavenumbers[axis]
    }

    pub(crate) fn axis_modes(&self, axis: usize) -> &[i64] {
        &self.data.modes[axis]
    }

    /// |k|² for every flat spectral index.
    fn squared_wavenumbers(&self) -> &[f64] {
        &self.data.k2
    }

    fn is_retained(&self, flat: usize) -> bool {
        self.data.retained[flat]
    }

    /// Index along `axis` of every flat index.
    pub(crate) fn axis_index(&self, axis: usize) -> &[u32] {
        &self.data.axis_index[axis]
    }

    pub(crate) fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        self.data.plans.forward_real(values)
    }

    pub(crate) fn inverse(&self, coeffs: &[Complex64]) -> Vec<f64> {
        self.data.plans.inverse_real(coeffs)
    }

    pub(crate) fn check_same(&self, other: &PeriodicGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// Real scalar field sampled on a periodic grid, with a cached spectrum.
#[derive(Clone)]
pub struct Field {
    grid: PeriodicGrid,
    values: Vec<f64>,
    spectrum: OnceLock<Arc<Vec<Complex64>>>,
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Field")
            .field("grid", &self.grid)
            .field("max_abs", &self.max_abs())
            .finish()
    }
}

impl Field {
    pub fn zeros(grid: &PeriodicGrid) -> Self {
        Self::from_vec_unchecked(grid, vec![0.0; grid.len()])
    }

    pub fn constant(grid: &PeriodicGrid, value: f64) -> Self {
        Self::from_vec_unchecked(grid, vec![value; grid.len()])
    }

    pub fn from_values(grid: &PeriodicGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        Ok(Self::from_vec_unchecked(grid, values))
    }

    pub(crate) fn from_vec_unchecked(grid: &PeriodicGrid, values: Vec<f64>) -> Self {
        Self {
            grid: grid.clone(),
            values,
            spectrum: OnceLock::new(),
        }
    }

    /// Samples `f(x)` at every grid node; `x` always has three entries.
    pub fn from_fn(grid: &PeriodicGrid, f: impl Fn([f64; 3]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        Self::from_vec_unchecked(grid, values)
    }

    /// Builds a real field from spectral coefficients (imaginary residue dropped).
    pub fn from_spectrum(grid: &PeriodicGrid, mut coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::ShapeMismatch {
                expected: grid.len(),
                found: coeffs.len(),
            });
        }
        Ok(Self::from_spectrum_unchecked(grid, &mut coeffs))
    }

    pub(crate) fn from_spectrum_unchecked(grid: &PeriodicGrid, coeffs: &mut [Complex64]) -> Self {
        Self::from_spectrum_vec(grid, coeffs.to_vec())
    }

    fn from_spectrum_vec(grid: &PeriodicGrid, spec: Vec<Complex64>) -> Self {
        let values = grid.inverse(&spec);
        let field = Self::from_vec_unchecked(grid, values);
        let _ = field.spectrum.set(Arc::new(spec));
        field
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Unnormalized spectral coefficients, computed once per field.
    pub fn spectrum(&self) -> &[Complex64] {
        self.spectrum
            .get_or_init(|| Arc::new(self.grid.forward(&self.values)))
    }

    /// New field with each coefficient mapped by `op(flat_index, coefficient)`.
    pub fn map_modes(&self, op: impl Fn(usize, Complex64) -> Complex64) -> Field {
        let coeffs: Vec<Complex64> = self
            .spectrum()
            .iter()
            .enumerate()
            .map(|(i, &c)| op(i, c))
            .collect();
        Self::from_spectrum_vec(&self.grid, coeffs)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// L² norm `sqrt(∫ f²)`.
    pub fn norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() / self.values.len() as f64
            * self.grid.volume())
        .sqrt()
    }

    /// Quadrature `∫ f` over the domain.
    pub fn integral(&self) -> f64 {
        self.mean() * self.grid.volume()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Pointwise map in physical space.
    pub fn map(&self, op: impl Fn(f64) -> f64) -> Field {
        Self::from_vec_unchecked(&self.grid, self.values.iter().map(|&v| op(v)).collect())
    }

    /// Pointwise product (no dealiasing).
    pub fn mul(&self, other: &Field) -> Field {
        self.zip(other, |a, b| a * b)
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &Field) -> Field {
        self.zip(other, |a, b| a + alpha * b)
    }

    pub fn zip(&self, other: &Field, op: impl Fn(f64, f64) -> f64) -> Field {
        assert!(self.grid == other.grid, "pointwise operation across grids");
        Self::from_vec_unchecked(
            &self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| op(a, b))
                .collect(),
        )
    }

    /// Linear combination `Σ c_i f_i` of fields on one grid.
    pub fn combination(terms: &[(f64, &Field)]) -> Field {
        let (_, first) = terms[0];
        let mut out = vec![0.0; first.values.len()];
        for &(c, f) in terms {
            assert!(f.grid == first.grid, "linear combination across grids");
            for (o, v) in out.iter_mut().zip(&f.values) {
                *o += c * v;
            }
        }
        Self::from_vec_unchecked(&first.grid, out)
    }
}

impl Add<&Field> for &Field {
    type Output = Field;
    fn add(self, rhs: &Field) -> Field {
        self.zip(rhs, |a, b| a + b)
    }
}

impl Sub<&Field> for &Field {
    type Output = Field;
    fn sub(self, rhs: &Field) -> Field {
        self.zip(rhs, |a, b| a - b)
    }
}

impl Mul<f64> for &Field {
    type Output = Field;
    fn mul(self, rhs: f64) -> Field {
        self.map(|v| v * rhs)
    }
}

impl Neg for &Field {
    type Output = Field;
    fn neg(self) -> Field {
        self.map(|v| -v)
    }
}

/// Spectral coefficients of a field together with their grid.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub grid: PeriodicGrid,
    pub coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn to_field(&self) -> Field {
        let mut c = self.coeffs.clone();
        Field::from_spectrum_unchecked(&self.grid, &mut c)
    }
}

/// Forward transform of a field (unnormalized).
pub fn transform_forward(f: &Field) -> Spectrum {
    Spectrum {
        grid: f.grid.clone(),
        coeffs: f.spectrum().to_vec(),
    }
}

/// Spectral partial derivative along one axis.
pub fn partial(f: &Field, axis: usize) -> Field {
    let grid = f.grid();
    let k = grid.axis_deriv_wavenumbers(axis);
    let index = grid.axis_index(axis);
    f.map_modes(|i, c| {
        let ka = k[index[i] as usize];
        Complex64::new(-ka * c.im, ka * c.re)
    })
}

pub fn gradient(f: &Field) -> Vec<Field> {
    (0..f.grid().dims()).map(|a| partial(f, a)).collect()
}

pub fn laplacian(f: &Field) -> Field {
    let k2 = f.grid().squared_wavenumbers();
    f.map_modes(|i, c| -k2[i] * c)
}

/// Solves `(Δ − F) ψ = μ`. For `F = 0` the mean of `ψ` is pinned to zero and
/// `μ` must have zero mean.
pub fn invert_helmholtz(mu: &Field, f_number: f64) -> Result<Field> {
    if !(f_number.is_finite() && f_number >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "Helmholtz parameter F must be >= 0, got {f_number}"
        )));
    }
    if f_number == 0.0 {
        let mean = mu.mean();
        let rms = (mu.values().iter().map(|v| v * v).sum::<f64>() / mu.values().len() as f64).sqrt();
        if mean.abs() > 1e-12 * rms.max(f64::MIN_POSITIVE) && mean != 0.0 {
            return Err(Error::Solvability {
                mean,
                norm: mu.norm(),
            });
        }
    }
    let k2 = mu.grid().squared_wavenumbers();
    Ok(mu.map_modes(|i, c| {
        let denom = -(k2[i] + f_number);
        if denom == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            c / denom
        }
    }))
}

/// Two-thirds rule: zeroes every mode with some `|k_i| > n_i/3`.
pub fn dealias(f: &Field) -> Field {
    let grid = f.grid();
    f.map_modes(|i, c| if grid.is_retained(i) { c } else { Complex64::new(0.0, 0.0) })
}

/// True when no energy lives outside the two-thirds band (relative `tol`).
pub fn is_dealiased(f: &Field, tol: f64) -> bool {
    let grid = f.grid();
    let spec = f.spectrum();
    let total: f64 = spec.iter().map(|c| c.norm_sqr()).sum();
    let outside: f64 = spec
        .iter()
        .enumerate()
        .filter(|(i, _)| !grid.is_retained(*i))
        .map(|(_, c)| c.norm_sqr())
        .sum();
    outside <= tol * tol * total.max(f64::MIN_POSITIVE)
}

/// Uniform-grid quadrature of `∫ f g`.
pub fn inner_l2(f: &Field, g: &Field) -> Result<f64> {
    f.grid().check_same(g.grid())?;
    Ok(dot_unchecked(f, g))
}

pub(crate) fn dot_unchecked(f: &Field, g: &Field) -> f64 {
    let s: f64 = f.values().iter().zip(g.values()).map(|(a, b)| a * b).sum();
    s / f.values().len() as f64 * f.grid().volume()
}

/// Shifts a field by `s`: returns `f(x − s)` exactly via spectral phases.
pub fn translate(f: &Field, shift: [f64; 3]) -> Field {
    if shift.iter().all(|&s| s == 0.0) {
        return f.clone();
    }
    let grid = f.grid();
    let dims = grid.dims();
    // per-axis phase tables keep this O(N)
    let phases: Vec<Vec<Complex64>> = (0..dims)
        .map(|a| {
            let m = grid.axis_modes(a);
            let scale = TAU / grid.lengths()[a];
            let n = grid.shape()[a];
            m.iter()
                .map(|&k| {
                    if k.unsigned_abs() as usize == n / 2 {
                        // Nyquist mode is not shift-representable for real fields
                        Complex64::new((k as f64 * scale * shift[a]).cos(), 0.0)
                    } else {
                        Complex64::from_polar(1.0, -(k as f64) * scale * shift[a])
                    }
                })
                .collect()
        })
        .collect();
    f.map_modes(|i, c| {
        let idx = grid.unravel(i);
        let mut p = Complex64::new(1.0, 0.0);
        for a in 0..dims {
            p *= phases[a][idx[a]];
        }
        c * p
    })
}

/// Multiplies every mode by `factor(|k|²)`.
pub fn spectral_filter(f: &Field, factor: impl Fn(f64) -> f64) -> Field {
    let k2 = f.grid().squared_wavenumbers();
    f.map_modes(|i, c| c * factor(k2[i]))
}

/// Leray projection of a vector field onto its divergence-free part
/// (the mean flow is kept).
pub fn leray_project(components: &[Field]) -> Vec<Field> {
    let grid = components[0].grid().clone();
    let dims = grid.dims();
    let specs: Vec<&[Complex64]> = components.iter().map(|c| c.spectrum()).collect();
    let n = grid.len();
    let mut out: Vec<Vec<Complex64>> = vec![vec![Complex64::new(0.0, 0.0); n]; dims];
    for i in 0..n {
        let idx = grid.unravel(i);
        let k: Vec<f64> = (0..dims)
            .map(|a| grid.axis_deriv_wavenumbers(a)[idx[a]])
            .collect();
        let k2: f64 = k.iter().map(|v| v * v).sum();
        let kdotu: Complex64 = (0..dims).map(|a| specs[a][i] * k[a]).sum();
        for a in 0..dims {
            out[a][i] = if k2 > 0.0 {
                specs[a][i] - kdotu * (k[a] / k2)
            } else {
                specs[a][i]
            };
        }
    }
    out.into_iter()
        .map(|mut c| Field::from_spectrum_unchecked(&grid, &mut c))
        .collect()
}

pub fn divergence(components: &[Field]) -> Field {
    let terms: Vec<Field> = components
        .iter()
        .enumerate()
        .map(|(a, c)| partial(c, a))
        .collect();
    let refs: Vec<(f64, &Field)> = terms.iter().map(|t| (1.0, t)).collect();
    Field::combination(&refs)
}
