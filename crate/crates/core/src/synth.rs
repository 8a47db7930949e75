//! Seeded synthetic fields for tests, examples and demonstrations.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;

use crate::grid::{leray_project, Field, PeriodicGrid};

/// Independent standard normal samples at every node.
pub fn white_noise(grid: &PeriodicGrid, seed: u64) -> Field {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let values = (0..grid.len())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    Field::from_values(grid, values).expect("length matches grid")
}

/// Random real field whose modes satisfy `|m_i| <= kmax` on every axis,
/// scaled to the given root-mean-square value. `kmax` is clamped to the
/// two-thirds cutoff so results are already dealiased.
pub fn band_limited(grid: &PeriodicGrid, seed: u64, kmax: usize, rms: f64) -> Field {
    let noise = white_noise(grid, seed);
    let f = noise.map_modes(|i, c| {
        let m = grid.mode(i);
        let keep = (0..grid.dims()).all(|a| {
            let lim = kmax.min(grid.cutoff(a)) as u64;
            m[a].unsigned_abs() <= lim
        });
        if keep {
            c
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let cur = (f.values().iter().map(|v| v * v).sum::<f64>() / f.values().len() as f64).sqrt();
    if cur == 0.0 {
        f
    } else {
        &f * (rms / cur)
    }
}

/// Band-limited field with zero mean.
pub fn band_limited_zero_mean(grid: &PeriodicGrid, seed: u64, kmax: usize, rms: f64) -> Field {
    let f = band_limited(grid, seed, kmax, 1.0);
    let m = f.mean();
    let g = f.map(|v| v - m);
    let cur = (g.values().iter().map(|v| v * v).sum::<f64>() / g.values().len() as f64).sqrt();
    &g * (rms / cur)
}

/// Random band-limited vector field, one component per axis.
pub fn vector_field(grid: &PeriodicGrid, seed: u64, kmax: usize, rms: f64) -> Vec<Field> {
    (0..grid.dims())
        .map(|a| band_limited(grid, seed.wrapping_mul(31).wrapping_add(a as u64 + 1), kmax, rms))
        .collect()
}

/// Random band-limited divergence-free vector field.
pub fn solenoidal_field(grid: &PeriodicGrid, seed: u64, kmax: usize, rms: f64) -> Vec<Field> {
    leray_project(&vector_field(grid, seed, kmax, rms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{divergence, is_dealiased};

    #[test]
    fn band_limited_is_seeded_and_dealiased() {
        let g = PeriodicGrid::new(&[32, 32]).unwrap();
        let a = band_limited(&g, 4, 6, 2.0);
        let b = band_limited(&g, 4, 6, 2.0);
        assert_eq!(a.values(), b.values());
        assert!(is_dealiased(&a, 1e-12));
        let rms = (a.values().iter().map(|v| v * v).sum::<f64>() / g.len() as f64).sqrt();
        assert!((rms - 2.0).abs() < 1e-12);
        assert!(band_limited_zero_mean(&g, 1, 4, 1.0).mean().abs() < 1e-14);
    }

    #[test]
    fn solenoidal_has_no_divergence() {
        let g = PeriodicGrid::new(&[16, 16, 16]).unwrap();
        let u = solenoidal_field(&g, 2, 4, 1.0);
        assert!(divergence(&u).max_abs() < 1e-12);
    }
}
