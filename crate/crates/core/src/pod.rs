//! Proper orthogonal decomposition of velocity snapshots (method of snapshots).
//!
//! With `M` snapshots `u_m`, the Gram matrix `G_mn = ⟨u_m, u_n⟩ / M` shares its
//! nonzero spectrum with the two-point correlation operator
//! `R ξ = (1/M) Σ_m u_m ⟨u_m, ξ⟩`. An eigenpair `(λ², a)` of `G` lifts to the
//! unit-norm mode `ξ = Σ_m a_m u_m / √(M λ²)`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::forms::VectorFieldOnGrid;
use crate::grid::{dot_unchecked, leray_project, Field, PeriodicGrid};
use crate::noise::NoiseBasis;

/// Eigenvalues below this fraction of the largest are treated as zero.
const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SnapshotSet {
    grid: PeriodicGrid,
    snapshots: Vec<Vec<Field>>,
}

impl SnapshotSet {
    /// Snapshots are vector fields with one component per axis.
    pub fn new(grid: &PeriodicGrid, snapshots: Vec<Vec<Field>>) -> Result<Self> {
        for s in &snapshots {
            if s.len() != grid.dims() {
                return Err(Error::ShapeMismatch {
                    expected: grid.dims(),
                    found: s.len(),
                });
            }
            for c in s {
                grid.check_same(c.grid())?;
            }
        }
        Ok(Self {
            grid: grid.clone(),
            snapshots,
        })
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn snapshots(&self) -> &[Vec<Field>] {
        &self.snapshots
    }

    /// Mean energy `(1/M) Σ_m ‖u_m‖²`.
    pub fn mean_energy(&self) -> f64 {
        if self.snapshots.is_empty() {
            return 0.0;
        }
        self.snapshots.iter().map(|u| inner(u, u)).sum::<f64>() / self.len() as f64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PodOptions {
    /// Subtract the snapshot mean before decomposing.
    pub center: bool,
    /// Leray-project the snapshots so every mode is divergence-free.
    pub divergence_free: bool,
}

#[derive(Debug, Clone)]
pub struct PodBasis {
    grid: PeriodicGrid,
    /// `λ_i²`, descending.
    pub eigenvalues: Vec<f64>,
    /// Unit-norm modes, one vector field each.
    pub modes: Vec<Vec<Field>>,
    /// Set when the data carry no energy; the basis is then empty.
    pub degenerate: bool,
    /// Trace of the Gram matrix, `Σ` of all eigenvalues.
    pub total_energy: f64,
}

impl PodBasis {
    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }
}

fn inner(a: &[Field], b: &[Field]) -> f64 {
    a.iter().zip(b).map(|(x, y)| dot_unchecked(x, y)).sum()
}

fn combine(snapshots: &[Vec<Field>], coeffs: &[f64]) -> Vec<Field> {
    let dims = snapshots[0].len();
    (0..dims)
        .map(|a| {
            let terms: Vec<(f64, &Field)> = snapshots
                .iter()
                .zip(coeffs)
                .map(|(u, &c)| (c, &u[a]))
                .collect();
            Field::combination(&terms)
        })
        .collect()
}

/// Flips a mode so its first clearly nonzero sample is positive.
fn fix_sign(mode: &mut [Field]) {
    let max = mode.iter().fold(0.0f64, |m, c| m.max(c.max_abs()));
    if max == 0.0 {
        return;
    }
    let n = mode[0].values().len();
    for i in 0..n {
        for c in mode.iter() {
            let v = c.values()[i];
            if v.abs() > 1e-8 * max {
                if v < 0.0 {
                    for c in mode.iter_mut() {
                        *c = -&*c;
                    }
                }
                return;
            }
        }
    }
}

/// Leading `k` POD modes of a snapshot set.
pub fn compute_pod(data: &SnapshotSet, k: usize, options: PodOptions) -> Result<PodBasis> {
    let m = data.len();
    let empty = |total_energy| PodBasis {
        grid: data.grid.clone(),
        eigenvalues: Vec::new(),
        modes: Vec::new(),
        degenerate: true,
        total_energy,
    };
    if m == 0 {
        return Ok(empty(0.0));
    }
    if k == 0 || k > m {
        return Err(Error::InvalidParameter(format!(
            "requested {k} modes from {m} snapshots"
        )));
    }
    let mut snaps: Vec<Vec<Field>> = data.snapshots.clone();
    if options.center {
        let weights = vec![1.0 / m as f64; m];
        let mean = combine(&snaps, &weights);
        for s in &mut snaps {
            for (c, mc) in s.iter_mut().zip(&mean) {
                *c = &*c - mc;
            }
        }
    }
    if options.divergence_free {
        for s in &mut snaps {
            *s = leray_project(s);
        }
    }
    let mut gram = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = inner(&snaps[i], &snaps[j]) / m as f64;
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    let total_energy = gram.trace();
    if total_energy <= 0.0 {
        return Ok(empty(total_energy));
    }
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]];
    let mut eigenvalues = Vec::new();
    let mut modes = Vec::new();
    for &idx in order.iter().take(k) {
        let lam2 = eig.eigenvalues[idx];
        if lam2 <= RANK_TOLERANCE * top {
            break;
        }
        let a: Vec<f64> = eig
            .eigenvectors
            .column(idx)
            .iter()
            .map(|v| v / (m as f64 * lam2).sqrt())
            .collect();
        let mut mode = combine(&snaps, &a);
        fix_sign(&mut mode);
        eigenvalues.push(lam2);
        modes.push(mode);
    }
    Ok(PodBasis {
        grid: data.grid.clone(),
        eigenvalues,
        modes,
        degenerate: false,
        total_energy,
    })
}

/// `‖R ξ_i − λ_i² ξ_i‖` for mode `i` against the snapshot correlation operator.
pub fn correlation_residual(data: &SnapshotSet, basis: &PodBasis, i: usize) -> f64 {
    let m = data.len();
    let xi = &basis.modes[i];
    let coeffs: Vec<f64> = data
        .snapshots
        .iter()
        .map(|u| inner(u, xi) / m as f64)
        .collect();
    let r = combine(&data.snapshots, &coeffs);
    let diff: Vec<Field> = r
        .iter()
        .zip(xi)
        .map(|(a, b)| a.axpy(-basis.eigenvalues[i], b))
        .collect();
    inner(&diff, &diff).sqrt()
}

/// Noise basis with fields `λ_i ξ_i` and weights `λ_i`.
///
/// Divergence-free modes give a validated vector basis; otherwise the
/// fields are kept as general (unvalidated) correlation fields.
pub fn scale_modes(basis: &PodBasis) -> NoiseBasis {
    if basis.modes.is_empty() {
        return NoiseBasis::empty();
    }
    let weights: Vec<f64> = basis.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).collect();
    let fields: Vec<VectorFieldOnGrid> = basis
        .modes
        .iter()
        .zip(&weights)
        .map(|(mode, &w)| {
            let mut mode = mode.clone();
            fix_sign(&mut mode);
            VectorFieldOnGrid::new(mode.iter().map(|c| c * w).collect())
                .expect("modes share the basis grid")
        })
        .collect();
    NoiseBasis::vector(fields.clone(), weights.clone())
        .unwrap_or_else(|_| NoiseBasis::vector_unchecked(fields, weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn grid() -> PeriodicGrid {
        PeriodicGrid::new(&[16, 16]).unwrap()
    }

    /// Unit-norm divergence-free shear modes.
    fn phi1(g: &PeriodicGrid) -> Vec<Field> {
        let s = (2.0 / (TAU * TAU)).sqrt();
        vec![Field::from_fn(g, |x| s * x[1].sin()), Field::zeros(g)]
    }

    fn phi2(g: &PeriodicGrid) -> Vec<Field> {
        let s = (2.0 / (TAU * TAU)).sqrt();
        vec![Field::zeros(g), Field::from_fn(g, |x| s * (2.0 * x[0]).cos())]
    }

    fn scaled(v: &[Field], a: f64) -> Vec<Field> {
        v.iter().map(|c| c * a).collect()
    }

    fn add(a: &[Field], b: &[Field]) -> Vec<Field> {
        a.iter().zip(b).map(|(x, y)| x + y).collect()
    }

    fn dist_up_to_sign(a: &[Field], b: &[Field]) -> f64 {
        let d = |s: f64| {
            a.iter()
                .zip(b)
                .map(|(x, y)| x.axpy(-s, y).max_abs())
                .fold(0.0, f64::max)
        };
        d(1.0).min(d(-1.0))
    }

    #[test]
    fn single_direction_snapshots() {
        let g = grid();
        let phi = phi1(&g);
        let coeffs = [1.0, -2.0, 3.0, 0.5];
        let snaps = coeffs.iter().map(|&a| scaled(&phi, a)).collect();
        let data = SnapshotSet::new(&g, snaps).unwrap();
        let basis = compute_pod(&data, 4, PodOptions::default()).unwrap();
        // 1x1 oracle: λ² = mean(a²)
        let expect = coeffs.iter().map(|a| a * a).sum::<f64>() / 4.0;
        assert_eq!(basis.len(), 1);
        assert!((basis.eigenvalues[0] - expect).abs() < 1e-10 * expect);
        assert!(dist_up_to_sign(&basis.modes[0], &phi) < 1e-10);
    }

    #[test]
    fn two_modes_with_energies_four_and_one() {
        let g = grid();
        let (p1, p2) = (phi1(&g), phi2(&g));
        // coefficient series with mean squares 4 and 1 and zero cross-correlation
        let a = [2.0, -2.0, 2.0, -2.0];
        let b = [1.0, 1.0, -1.0, -1.0];
        let snaps = (0..4).map(|m| add(&scaled(&p1, a[m]), &scaled(&p2, b[m]))).collect();
        let data = SnapshotSet::new(&g, snaps).unwrap();
        let basis = compute_pod(&data, 2, PodOptions::default()).unwrap();
        // analytic 2x2 Gram matrix diag(4, 1) in the (φ₁, φ₂) basis
        let gram = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]);
        let oracle = SymmetricEigen::new(gram).eigenvalues;
        let mut oracle: Vec<f64> = oracle.iter().copied().collect();
        oracle.sort_by(|a, b| b.total_cmp(a));
        for i in 0..2 {
            assert!((basis.eigenvalues[i] - oracle[i]).abs() < 1e-8);
        }
        assert!(dist_up_to_sign(&basis.modes[0], &p1) < 1e-7);
        assert!(dist_up_to_sign(&basis.modes[1], &p2) < 1e-7);
        for i in 0..2 {
            assert!(correlation_residual(&data, &basis, i) <= 1e-7 * basis.eigenvalues[0]);
        }
    }

    #[test]
    fn energy_sum_and_orthonormality_on_random_data() {
        let g = grid();
        let snaps: Vec<Vec<Field>> = (0..6).map(|s| crate::synth::vector_field(&g, s, 4, 1.0)).collect();
        let data = SnapshotSet::new(&g, snaps).unwrap();
        let basis = compute_pod(&data, 6, PodOptions::default()).unwrap();
        let sum: f64 = basis.eigenvalues.iter().sum();
        assert!((sum - data.mean_energy()).abs() <= 1e-8 * sum);
        assert!(basis.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        for i in 0..basis.len() {
            for j in 0..basis.len() {
                let ip = inner(&basis.modes[i], &basis.modes[j]);
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((ip - expect).abs() < 1e-8);
            }
            assert!(correlation_residual(&data, &basis, i) <= 1e-7 * basis.eigenvalues[0]);
        }
    }

    #[test]
    fn degenerate_and_invalid_requests() {
        let g = grid();
        let none = SnapshotSet::new(&g, Vec::new()).unwrap();
        let b = compute_pod(&none, 1, PodOptions::default()).unwrap();
        assert!(b.degenerate && b.is_empty());
        let zeros = SnapshotSet::new(&g, vec![vec![Field::zeros(&g), Field::zeros(&g)]; 2]).unwrap();
        let b = compute_pod(&zeros, 1, PodOptions::default()).unwrap();
        assert!(b.degenerate && b.is_empty());
        assert!(compute_pod(&zeros, 3, PodOptions::default()).is_err());
        assert!(scale_modes(&b).is_empty());
    }

    #[test]
    fn centering_and_projection() {
        let g = grid();
        let p1 = phi1(&g);
        let offset = vec![Field::constant(&g, 0.3), Field::zeros(&g)];
        let snaps = [1.0, -1.0].iter().map(|&a| add(&scaled(&p1, a), &offset)).collect();
        let data = SnapshotSet::new(&g, snaps).unwrap();
        let centered = compute_pod(&data, 2, PodOptions { center: true, divergence_free: false }).unwrap();
        assert_eq!(centered.len(), 1);
        assert!((centered.eigenvalues[0] - 1.0).abs() < 1e-10);

        let raw: Vec<Vec<Field>> = (0..3).map(|s| crate::synth::vector_field(&g, s + 10, 4, 1.0)).collect();
        let data = SnapshotSet::new(&g, raw).unwrap();
        let b = compute_pod(&data, 3, PodOptions { center: false, divergence_free: true }).unwrap();
        for mode in &b.modes {
            let v = VectorFieldOnGrid::new(mode.clone()).unwrap();
            assert!(v.divergence_residual() <= 1e-10 * v.norm());
        }
        let noise = scale_modes(&b);
        assert!(crate::noise::validate_basis(&noise).passed);
    }

    #[test]
    fn scaling_examples() {
        let g = grid();
        let p1 = phi1(&g);
        let data = SnapshotSet::new(&g, vec![scaled(&p1, 2.0)]).unwrap();
        let b = compute_pod(&data, 1, PodOptions::default()).unwrap();
        assert!((b.eigenvalues[0] - 4.0).abs() < 1e-12);
        let noise = scale_modes(&b);
        assert!((noise.weights()[0] - 2.0).abs() < 1e-12);
        assert!((noise.velocity_fields().unwrap()[0].norm() - 2.0).abs() < 1e-12);

        let unit = SnapshotSet::new(&g, vec![scaled(&p1, -1.0)]).unwrap();
        let b = compute_pod(&unit, 1, PodOptions::default()).unwrap();
        let noise = scale_modes(&b);
        let f = &noise.velocity_fields().unwrap()[0];
        assert!(dist_up_to_sign(f.components(), &p1) < 1e-12);
        // first clearly nonzero sample is positive
        let first = f.components()[0].values().iter().find(|v| v.abs() > 1e-8).unwrap();
        assert!(*first > 0.0);
    }
}
