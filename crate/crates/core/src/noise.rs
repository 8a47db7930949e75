//! Brownian drivers, quadratic covariation and noise bases.
//!
//! Paths use ChaCha20 (20 rounds) keyed by the little-endian seed in the
//! first eight key bytes, zero elsewhere, stream 0. Standard normal variates
//! come from the `rand_distr` ziggurat sampler and are drawn row-major
//! (step by step, component by component), then scaled by `√dt`.
//! Ensemble member `m` uses seed `base ^ m`.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::forms::VectorFieldOnGrid;
use crate::grid::{dot_unchecked, Field, PeriodicGrid};

/// Seed of ensemble member `m` derived from a base seed.
pub fn member_seed(base: u64, member: u64) -> u64 {
    base ^ member
}

/// Brownian increments `ΔW_i(n)` for `n < N`, `i < K`.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerPath {
    seed: u64,
    k: usize,
    dt: f64,
    increments: Vec<f64>,
}

fn rng_for(seed: u64) -> ChaCha20Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    ChaCha20Rng::from_seed(key)
}

impl WienerPath {
    pub fn sample_increments(seed: u64, k: usize, dt: f64, n: usize) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
        }
        if n == 0 || k == 0 {
            return Err(Error::InvalidParameter(format!(
                "a path needs at least one step and one component (N = {n}, K = {k})"
            )));
        }
        let mut rng = rng_for(seed);
        let s = dt.sqrt();
        let increments = (0..n * k)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * s
            })
            .collect();
        Ok(Self { seed, k, dt, increments })
    }

    /// Path built from explicit increments, row-major `N × K`.
    pub fn from_increments(k: usize, dt: f64, increments: Vec<f64>) -> Result<Self> {
        if k == 0 || increments.is_empty() || increments.len() % k != 0 {
            return Err(Error::InvalidParameter(
                "increments must form a nonempty N x K array".into(),
            ));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
        }
        Ok(Self { seed: 0, k, dt, increments })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn components(&self) -> usize {
        self.k
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.increments.len() / self.k
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.steps() as f64
    }

    /// The `K` increments of step `n`.
    pub fn increment(&self, n: usize) -> &[f64] {
        &self.increments[n * self.k..(n + 1) * self.k]
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// `W(n·dt)` for every component.
    pub fn value_at(&self, n: usize) -> Vec<f64> {
        let mut w = vec![0.0; self.k];
        for step in 0..n {
            for (wi, d) in w.iter_mut().zip(self.increment(step)) {
                *wi += d;
            }
        }
        w
    }

    /// Same realization on a coarser step `factor·dt`, by summing blocks.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.steps() % factor != 0 {
            return Err(Error::InvalidParameter(format!(
                "cannot coarsen {} steps by {factor}",
                self.steps()
            )));
        }
        let n = self.steps() / factor;
        let mut out = vec![0.0; n * self.k];
        for step in 0..self.steps() {
            let c = step / factor;
            for i in 0..self.k {
                out[c * self.k + i] += self.increments[step * self.k + i];
            }
        }
        Ok(Self {
            seed: self.seed,
            k: self.k,
            dt: self.dt * factor as f64,
            increments: out,
        })
    }

    /// First `n` steps of the path.
    pub fn truncate(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.steps() {
            return Err(Error::InvalidParameter(format!("cannot keep {n} of {} steps", self.steps())));
        }
        Ok(Self {
            seed: self.seed,
            k: self.k,
            dt: self.dt,
            increments: self.increments[..n * self.k].to_vec(),
        })
    }
}

/// `[W_i, W_j](T) ≈ Σ_n ΔW_i(n) ΔW_j(n)`, as a `K × K` matrix.
pub fn estimate_covariation(path: &WienerPath) -> Vec<Vec<f64>> {
    let k = path.components();
    let mut m = vec![vec![0.0; k]; k];
    for n in 0..path.steps() {
        let d = path.increment(n);
        for i in 0..k {
            for j in 0..k {
                m[i][j] += d[i] * d[j];
            }
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    /// Velocity fields `ξ_i` given directly.
    Vector,
    /// 2D stream functions `ξ_i`, with velocities `ẑ × ∇ξ_i`.
    QgStreamFunction,
}

/// Ordered correlation fields with descending nonnegative weights.
///
/// Fields already include their weight; the weights are kept for reporting
/// and ordering.
#[derive(Debug, Clone)]
pub struct NoiseBasis {
    mode: NoiseMode,
    vectors: Vec<VectorFieldOnGrid>,
    streams: Vec<Field>,
    weights: Vec<f64>,
}

fn check_weights(weights: &[f64], count: usize) -> Result<()> {
    if weights.len() != count {
        return Err(Error::Basis(format!("{count} fields but {} weights", weights.len())));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::Basis("weights must be finite and nonnegative".into()));
    }
    if weights.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::Basis("weights must be sorted in descending order".into()));
    }
    Ok(())
}

fn check_grids<'a>(mut grids: impl Iterator<Item = &'a PeriodicGrid>) -> Result<()> {
    if let Some(first) = grids.next() {
        for g in grids {
            first.check_same(g)?;
        }
    }
    Ok(())
}

impl NoiseBasis {
    pub fn empty() -> Self {
        Self {
            mode: NoiseMode::Vector,
            vectors: Vec::new(),
            streams: Vec::new(),
            weights: Vec::new(),
        }
    }

    /// Vector-mode basis; every field must be divergence-free.
    pub fn vector(fields: Vec<VectorFieldOnGrid>, weights: Vec<f64>) -> Result<Self> {
        check_weights(&weights, fields.len())?;
        check_grids(fields.iter().map(|f| f.grid()))?;
        let fields = fields
            .into_iter()
            .map(|f| {
                if f.is_divergence_free() {
                    Ok(f)
                } else {
                    VectorFieldOnGrid::divergence_free(f.components().to_vec())
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            mode: NoiseMode::Vector,
            vectors: fields,
            streams: Vec::new(),
            weights,
        })
    }

    /// Vector-mode basis without any validation (general `ξ_i`).
    pub fn vector_unchecked(fields: Vec<VectorFieldOnGrid>, weights: Vec<f64>) -> Self {
        Self {
            mode: NoiseMode::Vector,
            vectors: fields,
            streams: Vec::new(),
            weights,
        }
    }

    /// Stream-function basis on a 2D grid.
    pub fn qg(streams: Vec<Field>, weights: Vec<f64>) -> Result<Self> {
        check_weights(&weights, streams.len())?;
        check_grids(streams.iter().map(|f| f.grid()))?;
        if let Some(s) = streams.first() {
            if s.grid().dims() != 2 {
                return Err(Error::Dimension {
                    required: 2,
                    found: s.grid().dims(),
                });
            }
        }
        Ok(Self {
            mode: NoiseMode::QgStreamFunction,
            vectors: Vec::new(),
            streams,
            weights,
        })
    }

    pub fn mode(&self) -> NoiseMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.weights.len().max(self.vectors.len()).max(self.streams.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn stream_functions(&self) -> &[Field] {
        &self.streams
    }

    pub fn grid(&self) -> Option<&PeriodicGrid> {
        self.vectors
            .first()
            .map(|v| v.grid())
            .or_else(|| self.streams.first().map(|s| s.grid()))
    }

    /// Velocity fields of the basis (converted from stream functions in QG mode).
    pub fn velocity_fields(&self) -> Result<Vec<VectorFieldOnGrid>> {
        match self.mode {
            NoiseMode::Vector => Ok(self.vectors.clone()),
            NoiseMode::QgStreamFunction => self
                .streams
                .iter()
                .map(VectorFieldOnGrid::from_stream_function)
                .collect(),
        }
    }
}

/// Vector-mode basis of `ẑ × ∇ξ_i` from 2D stream functions.
pub fn qg_velocity_fields(streams: &[Field], weights: Vec<f64>) -> Result<NoiseBasis> {
    let fields = streams
        .iter()
        .map(VectorFieldOnGrid::from_stream_function)
        .collect::<Result<Vec<_>>>()?;
    NoiseBasis::vector(fields, weights)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisReport {
    pub passed: bool,
    /// Relative divergence residual `‖div ξ_i‖ / ‖ξ_i‖` per field.
    pub divergence_residuals: Vec<f64>,
    pub weights_sorted: bool,
    pub grids_consistent: bool,
    pub failures: Vec<String>,
}

/// Checks incompressibility (vector mode), weight ordering and grid consistency.
pub fn validate_basis(basis: &NoiseBasis) -> BasisReport {
    let mut failures = Vec::new();
    let weights_sorted = basis.weights.windows(2).all(|w| w[0] >= w[1])
        && basis.weights.iter().all(|w| *w >= 0.0)
        && basis.weights.len() == basis.len();
    if !weights_sorted {
        failures.push("weights are not nonnegative and descending".to_string());
    }
    let grids_consistent = match basis.mode {
        NoiseMode::Vector => check_grids(basis.vectors.iter().map(|v| v.grid())).is_ok(),
        NoiseMode::QgStreamFunction => check_grids(basis.streams.iter().map(|s| s.grid())).is_ok(),
    };
    if !grids_consistent {
        failures.push("fields live on different grids".to_string());
    }
    let mut divergence_residuals = Vec::new();
    if grids_consistent {
        match basis.velocity_fields() {
            Ok(fields) => {
                for (i, f) in fields.iter().enumerate() {
                    let norm = f.norm();
                    let r = if norm > 0.0 { f.divergence_residual() / norm } else { 0.0 };
                    if basis.mode == NoiseMode::Vector && r > crate::forms::DIVERGENCE_TOLERANCE {
                        failures.push(format!("field {i} has divergence residual {r:e}"));
                    }
                    divergence_residuals.push(r);
                }
            }
            Err(e) => failures.push(e.to_string()),
        }
    }
    BasisReport {
        passed: failures.is_empty(),
        divergence_residuals,
        weights_sorted,
        grids_consistent,
        failures,
    }
}

/// `∫ ξ_i · ξ_j` Gram matrix of the basis velocities.
pub fn basis_gram(basis: &NoiseBasis) -> Result<Vec<Vec<f64>>> {
    let fields = basis.velocity_fields()?;
    Ok(fields
        .iter()
        .map(|a| {
            fields
                .iter()
                .map(|b| {
                    a.components()
                        .iter()
                        .zip(b.components())
                        .map(|(x, y)| dot_unchecked(x, y))
                        .sum()
                })
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::band_limited;
    use proptest::prelude::*;

    #[test]
    fn rejects_empty_and_bad_steps() {
        assert!(WienerPath::sample_increments(1, 1, 1e-3, 0).is_err());
        assert!(WienerPath::sample_increments(1, 1, 0.0, 10).is_err());
        assert!(WienerPath::sample_increments(1, 1, -1.0, 10).is_err());
        assert!(WienerPath::sample_increments(1, 0, 1e-3, 10).is_err());
    }

    #[test]
    fn deterministic_replay() {
        let a = WienerPath::sample_increments(42, 3, 1e-3, 1000).unwrap();
        let b = WienerPath::sample_increments(42, 3, 1e-3, 1000).unwrap();
        assert_eq!(a, b);
        let c = WienerPath::sample_increments(43, 3, 1e-3, 1000).unwrap();
        assert_ne!(a.increments(), c.increments());
        assert_eq!(member_seed(42, 1), 43);
    }

    #[test]
    fn variance_within_chi_square_bound() {
        // var estimate of N normals has relative std √(2/N) ≈ 1.4e-3; 1% is ~7σ
        let dt = 1e-3;
        let n = 1_000_000;
        let p = WienerPath::sample_increments(7, 1, dt, n).unwrap();
        let mean = p.increments().iter().sum::<f64>() / n as f64;
        let var = p.increments().iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var / dt - 1.0).abs() < 0.01, "variance ratio {}", var / dt);
        assert!(mean.abs() < 4.0 * (dt / n as f64).sqrt());
    }

    #[test]
    fn mean_of_components_is_small() {
        let dt = 1e-2;
        let n = 20_000;
        let p = WienerPath::sample_increments(11, 3, dt, n).unwrap();
        for i in 0..3 {
            let m = (0..n).map(|s| p.increment(s)[i]).sum::<f64>() / n as f64;
            assert!(m.abs() <= 4.0 * (dt / n as f64).sqrt());
        }
    }

    #[test]
    fn covariation_examples() {
        let n = 100_000;
        let p = WienerPath::sample_increments(5, 1, 1.0 / n as f64, n).unwrap();
        let c = estimate_covariation(&p);
        assert!((c[0][0] - 1.0).abs() < 0.02);
        let p = WienerPath::sample_increments(5, 2, 1.0 / n as f64, n).unwrap();
        let c = estimate_covariation(&p);
        assert!(c[0][1].abs() <= 4.0 * (2.0 / n as f64).sqrt());
        assert_eq!(c[0][1], c[1][0]);
        let one = WienerPath::sample_increments(9, 1, 0.5, 1).unwrap();
        let d = one.increment(0)[0];
        assert_eq!(estimate_covariation(&one)[0][0], d * d);
    }

    #[test]
    fn coarsening_preserves_endpoint() {
        let p = WienerPath::sample_increments(3, 2, 1e-3, 64).unwrap();
        let c = p.coarsen(4).unwrap();
        assert_eq!(c.steps(), 16);
        assert!((c.dt() - 4e-3).abs() < 1e-18);
        let (a, b) = (p.value_at(64), c.value_at(16));
        for i in 0..2 {
            assert!((a[i] - b[i]).abs() < 1e-14);
        }
        assert!(p.coarsen(3).is_err());
        assert_eq!(p.truncate(10).unwrap().steps(), 10);
    }

    #[test]
    fn qg_velocity_examples() {
        let g = PeriodicGrid::new(&[32, 32]).unwrap();
        let b = qg_velocity_fields(&[Field::constant(&g, 2.0)], vec![1.0]).unwrap();
        assert!(b.velocity_fields().unwrap()[0].max_abs() < 1e-14);
        let b = qg_velocity_fields(&[Field::from_fn(&g, |x| x[1].sin())], vec![1.0]).unwrap();
        let v = &b.velocity_fields().unwrap()[0];
        assert!((&v.components()[0] + &Field::from_fn(&g, |x| x[1].cos())).max_abs() < 1e-13);
        assert!(v.components()[1].max_abs() < 1e-13);
        let g3 = PeriodicGrid::new(&[8, 8, 8]).unwrap();
        assert!(qg_velocity_fields(&[Field::zeros(&g3)], vec![1.0]).is_err());
    }

    #[test]
    fn validation_reports() {
        let g = PeriodicGrid::new(&[16, 16]).unwrap();
        let e1 = VectorFieldOnGrid::constant(&g, &[1.0, 0.0]).unwrap();
        let e2 = VectorFieldOnGrid::constant(&g, &[0.0, 1.0]).unwrap();
        let ok = NoiseBasis::vector(vec![e1, e2], vec![1.0, 1.0]).unwrap();
        assert!(validate_basis(&ok).passed);

        let bad = VectorFieldOnGrid::new(vec![Field::from_fn(&g, |x| x[0].sin()), Field::zeros(&g)]).unwrap();
        assert!(NoiseBasis::vector(vec![bad.clone()], vec![1.0]).is_err());
        let report = validate_basis(&NoiseBasis::vector_unchecked(vec![bad], vec![1.0]));
        assert!(!report.passed);
        assert!(report.divergence_residuals[0] > 0.1);

        let streams = vec![band_limited(&g, 1, 4, 1.0), band_limited(&g, 2, 4, 0.5)];
        let qg = qg_velocity_fields(&streams, vec![1.0, 0.5]).unwrap();
        assert!(validate_basis(&qg).passed);
        assert!(validate_basis(&NoiseBasis::qg(streams, vec![1.0, 0.5]).unwrap()).passed);

        assert!(NoiseBasis::qg(vec![Field::zeros(&g)], vec![-1.0]).is_err());
        assert!(NoiseBasis::qg(vec![Field::zeros(&g); 2], vec![0.5, 1.0]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn prop_replay_and_coarsen(seed in any::<u64>(), k in 1usize..4, n in 1usize..64) {
            let a = WienerPath::sample_increments(seed, k, 0.01, 2 * n).unwrap();
            let b = WienerPath::sample_increments(seed, k, 0.01, 2 * n).unwrap();
            prop_assert_eq!(a.increments(), b.increments());
            let c = a.coarsen(2).unwrap();
            let wa = a.value_at(2 * n);
            let wc = c.value_at(n);
            for i in 0..k {
                prop_assert!((wa[i] - wc[i]).abs() < 1e-12);
            }
        }
    }
}
