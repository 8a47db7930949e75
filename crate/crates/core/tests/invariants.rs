//! Cross-module invariants on randomly generated inputs.

use proptest::prelude::*;
use stochflow_core::grid::{invert_helmholtz, laplacian, translate};
use stochflow_core::io::{read_snapshot, write_snapshot};
use stochflow_core::pod::{compute_pod, PodOptions, SnapshotSet};
use stochflow_core::sqg::{self, jacobi_bracket, SQGParams, SQGState, Scheme};
use stochflow_core::synth::{band_limited, band_limited_zero_mean};
use stochflow_core::{Field, NoiseBasis, PeriodicGrid, WienerPath};

fn grid() -> PeriodicGrid {
    PeriodicGrid::new(&[32, 32]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn helmholtz_inversion_is_a_right_inverse(seed in 0u64..1000, f in 0.0f64..5.0) {
        let g = grid();
        let mu = band_limited_zero_mean(&g, seed, 6, 1.0);
        let psi = invert_helmholtz(&mu, f).unwrap();
        let back = laplacian(&psi).axpy(-f, &psi);
        prop_assert!((&back - &mu).norm() <= 1e-12 * mu.norm());
    }

    #[test]
    fn jacobian_is_antisymmetric_with_zero_integral(sa in 0u64..1000, sb in 0u64..1000) {
        let g = grid();
        let a = band_limited(&g, sa, 5, 1.0);
        let b = band_limited(&g, sb + 5000, 5, 1.0);
        let ab = jacobi_bracket(&a, &b).unwrap();
        let ba = jacobi_bracket(&b, &a).unwrap();
        prop_assert!((&ab + &ba).max_abs() <= 1e-12 * ab.max_abs().max(1e-300));
        prop_assert!(ab.integral().abs() <= 1e-12 * ab.norm().max(1e-300));
        // ∫ a [a, b] = 0
        let aab = a.mul(&ab).integral();
        prop_assert!(aab.abs() <= 1e-11 * a.norm() * ab.norm());
    }

    #[test]
    fn coarsening_keeps_the_endpoint(seed in 0u64..10_000, k in 1usize..4, blocks in 1usize..20, f in 1usize..5) {
        let path = WienerPath::sample_increments(seed, k, 1e-3, blocks * f).unwrap();
        let coarse = path.coarsen(f).unwrap();
        prop_assert_eq!(coarse.steps(), blocks);
        prop_assert!((coarse.dt() - f as f64 * 1e-3).abs() < 1e-15);
        let a = path.value_at(path.steps());
        let b = coarse.value_at(coarse.steps());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn snapshots_roundtrip_bit_exactly(ex in 3u32..6, ey in 3u32..6, seed in 0u64..100) {
        let g = PeriodicGrid::new(&[1 << ex, 1 << ey]).unwrap();
        let f = Field::from_fn(&g, |x| (seed as f64 * 0.37 + x[0] * 1.3 - x[1]).sin() * 1e3);
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &f).unwrap();
        let back = read_snapshot(&mut buf.as_slice(), &g).unwrap();
        prop_assert_eq!(back.values(), f.values());
    }

    #[test]
    fn translation_is_an_isometry(seed in 0u64..1000, sx in -7.0f64..7.0, sy in -7.0f64..7.0) {
        let g = grid();
        let f = band_limited(&g, seed, 8, 1.0);
        let t = translate(&f, [sx, sy, 0.0]);
        prop_assert!((t.norm() - f.norm()).abs() <= 1e-12 * f.norm());
        prop_assert!((t.integral() - f.integral()).abs() <= 1e-12 * f.norm());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn pod_spectrum_is_ordered_and_bounded(seed in 0u64..1000, m in 2usize..7) {
        let g = PeriodicGrid::new(&[16, 16]).unwrap();
        let snaps: Vec<Vec<Field>> = (0..m)
            .map(|i| vec![band_limited(&g, seed * 31 + i as u64, 3, 1.0), band_limited(&g, seed * 31 + 100 + i as u64, 3, 1.0)])
            .collect();
        let data = SnapshotSet::new(&g, snaps).unwrap();
        let basis = compute_pod(&data, m, PodOptions::default()).unwrap();
        let sum: f64 = basis.eigenvalues.iter().sum();
        prop_assert!(sum <= basis.total_energy * (1.0 + 1e-12));
        prop_assert!(basis.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        for (i, a) in basis.modes.iter().enumerate() {
            for (j, b) in basis.modes.iter().enumerate() {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x.mul(y).integral()).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                prop_assert!((dot - expect).abs() <= 1e-9, "<{i},{j}> = {dot}");
            }
        }
    }

    #[test]
    fn every_scheme_conserves_mean_potential_vorticity(
        seed in 0u64..1000,
        scheme in prop::sample::select(vec![Scheme::Deterministic, Scheme::Stratonovich, Scheme::Ito, Scheme::ItoUncorrected]),
        beta in 0.0f64..2.0,
        f in 0.5f64..2.0,
    ) {
        // F > 0 so that a nonzero mean of μ is admissible
        let g = grid();
        let mu = &band_limited_zero_mean(&g, seed, 4, 1.0) + &Field::constant(&g, 0.3);
        let params = SQGParams { f, beta, ..Default::default() };
        let basis = NoiseBasis::qg(
            vec![Field::from_fn(&g, |x| 0.05 * (x[0] + 2.0 * x[1]).cos())],
            vec![1.0],
        ).unwrap();
        let path = WienerPath::sample_increments(seed, 1, 1e-3, 10).unwrap();
        let mut s = SQGState::new(mu.clone()).unwrap();
        for n in 0..path.steps() {
            s = sqg::step(scheme, &s, &params, &basis, path.increment(n), path.dt()).unwrap();
        }
        prop_assert!((s.mu.mean() - mu.mean()).abs() <= 1e-12);
    }
}
