//! Multi-dimensional FFT of real data on row-major arrays: a real-to-complex
//! transform along the contiguous last axis, complex transforms along the
//! others, and Hermitian symmetry to fill in the redundant half.

use std::sync::Arc;

use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub(crate) struct FftPlans {
    shape: Vec<usize>,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    /// Complex plans for every axis except the last.
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
    /// Flat index of `−k` for every flat index `k`.
    mirror: Vec<usize>,
}

impl FftPlans {
    pub(crate) fn new(shape: &[usize]) -> Self {
        let last = *shape.last().expect("grid has at least one axis");
        let mut real = RealFftPlanner::<f64>::new();
        let mut planner = FftPlanner::new();
        let head = &shape[..shape.len() - 1];
        let total: usize = shape.iter().product();
        Self {
            mirror: (0..total).map(|i| mirror_index(shape, i)).collect(),
            shape: shape.to_vec(),
            r2c: real.plan_fft_forward(last),
            c2r: real.plan_fft_inverse(last),
            forward: head.iter().map(|&n| planner.plan_fft_forward(n)).collect(),
            inverse: head.iter().map(|&n| planner.plan_fft_inverse(n)).collect(),
        }
    }

    fn last(&self) -> usize {
        *self.shape.last().expect("nonempty shape")
    }

    fn half_len(&self) -> usize {
        self.last() / 2 + 1
    }

    /// Unnormalized spectrum of real samples (all `N` coefficients).
    pub(crate) fn forward_real(&self, values: &[f64]) -> Vec<Complex64> {
        let total: usize = self.shape.iter().product();
        assert_eq!(values.len(), total, "fft buffer does not match grid shape");
        let n = self.last();
        let h = self.half_len();
        let rows = total / n;
        let mut half = vec![Complex64::default(); rows * h];
        let mut row = vec![0.0; n];
        let mut scratch = self.r2c.make_scratch_vec();
        for r in 0..rows {
            row.copy_from_slice(&values[r * n..(r + 1) * n]);
            self.r2c
                .process_with_scratch(&mut row, &mut half[r * h..(r + 1) * h], &mut scratch)
                .expect("buffer sizes match the plan");
        }
        self.head_axes(&mut half, false);
        let mut full = vec![Complex64::default(); total];
        for r in 0..rows {
            full[r * n..r * n + h].copy_from_slice(&half[r * h..(r + 1) * h]);
        }
        for r in 0..rows {
            for k in h..n {
                let flat = r * n + k;
                let m = self.mirror[flat];
                full[flat] = full[m].conj();
            }
        }
        full
    }

    /// `Re(ifft(c))` including the `1/N` factor.
    pub(crate) fn inverse_real(&self, coeffs: &[Complex64]) -> Vec<f64> {
        let total: usize = self.shape.iter().product();
        assert_eq!(coeffs.len(), total, "fft buffer does not match grid shape");
        let n = self.last();
        let h = self.half_len();
        let rows = total / n;
        // the real part of the inverse only sees the Hermitian part of `c`
        let mut half = vec![Complex64::default(); rows * h];
        for r in 0..rows {
            for k in 0..h {
                let flat = r * n + k;
                half[r * h + k] = 0.5 * (coeffs[flat] + coeffs[self.mirror[flat]].conj());
            }
        }
        self.head_axes(&mut half, true);
        let mut out = vec![0.0; total];
        let mut scratch = self.c2r.make_scratch_vec();
        let scale = 1.0 / total as f64;
        for r in 0..rows {
            let line = &mut half[r * h..(r + 1) * h];
            line[0].im = 0.0;
            if n % 2 == 0 {
                line[h - 1].im = 0.0;
            }
            let dst = &mut out[r * n..(r + 1) * n];
            self.c2r
                .process_with_scratch(line, dst, &mut scratch)
                .expect("buffer sizes match the plan");
            for v in dst.iter_mut() {
                *v *= scale;
            }
        }
        out
    }

    /// Complex transforms along every axis but the last of a half-spectrum
    /// array whose last extent is `n/2 + 1`.
    fn head_axes(&self, data: &mut [Complex64], inverse: bool) {
        let plans = if inverse { &self.inverse } else { &self.forward };
        let dims = self.shape.len();
        let mut extents = self.shape.clone();
        extents[dims - 1] = self.half_len();
        let mut line = Vec::new();
        let mut scratch = Vec::new();
        for (axis, plan) in plans.iter().enumerate() {
            let n = extents[axis];
            let stride: usize = extents[axis + 1..].iter().product();
            let outer: usize = extents[..axis].iter().product();
            scratch.resize(plan.get_inplace_scratch_len(), Complex64::default());
            // gather `stride` lines at once into contiguous storage
            line.resize(n * stride, Complex64::default());
            for o in 0..outer {
                let block = &mut data[o * n * stride..(o + 1) * n * stride];
                for j in 0..n {
                    for s in 0..stride {
                        line[s * n + j] = block[j * stride + s];
                    }
                }
                plan.process_with_scratch(&mut line, &mut scratch);
                for j in 0..n {
                    for s in 0..stride {
                        block[j * stride + s] = line[s * n + j];
                    }
                }
            }
        }
    }
}

fn mirror_index(shape: &[usize], mut flat: usize) -> usize {
    let mut out = 0;
    let mut stride = 1;
    for &n in shape.iter().rev() {
        let i = flat % n;
        flat /= n;
        out += ((n - i) % n) * stride;
        stride *= n;
    }
    out
}
