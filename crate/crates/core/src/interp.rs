//! Trigonometric interpolation of band-limited fields at arbitrary points.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Field, PeriodicGrid};

/// Evaluates several fields on one grid at off-grid points by summing their
/// Fourier series. Only modes that are non-negligible in some field are kept,
/// so the cost scales with the bandwidth actually present.
#[derive(Debug, Clone)]
pub struct SpectralInterpolator {
    grid: PeriodicGrid,
    /// Per retained mode: grid index per axis.
    modes: Vec<[usize; 3]>,
    /// `coeffs[f * modes.len() + j]`, already divided by the point count.
    coeffs: Vec<Complex64>,
    fields: usize,
}

impl SpectralInterpolator {
    pub fn new(fields: &[&Field]) -> Result<Self> {
        let grid = fields
            .first()
            .ok_or_else(|| Error::InvalidParameter("nothing to interpolate".into()))?
            .grid()
            .clone();
        for f in fields {
            grid.check_same(f.grid())?;
        }
        let n = grid.len();
        let spectra: Vec<&[Complex64]> = fields.iter().map(|f| f.spectrum()).collect();
        let mut keep = vec![false; n];
        for s in &spectra {
            let max = s.iter().fold(0.0f64, |m, c| m.max(c.norm()));
            if max == 0.0 {
                continue;
            }
            for (k, c) in keep.iter_mut().zip(s.iter()) {
                *k |= c.norm() > 1e-14 * max;
            }
        }
        let flat: Vec<usize> = (0..n).filter(|&i| keep[i]).collect();
        let scale = 1.0 / n as f64;
        let mut coeffs = Vec::with_capacity(flat.len() * fields.len());
        for s in &spectra {
            coeffs.extend(flat.iter().map(|&i| s[i] * scale));
        }
        Ok(Self {
            modes: flat.iter().map(|&i| grid.unravel(i)).collect(),
            grid,
            coeffs,
            fields: fields.len(),
        })
    }

    pub fn fields(&self) -> usize {
        self.fields
    }

    pub fn retained_modes(&self) -> usize {
        self.modes.len()
    }

    /// Values of every field at `x` (unused trailing coordinates are ignored).
    pub fn eval(&self, x: [f64; 3]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.fields];
        self.eval_into(x, &mut out)?;
        Ok(out)
    }

    pub fn eval_into(&self, x: [f64; 3], out: &mut [f64]) -> Result<()> {
        let dims = self.grid.dims();
        if x[..dims].iter().any(|v| !v.is_finite()) {
            return Err(Error::Interpolation(x));
        }
        let tables: Vec<Vec<Complex64>> = (0..dims)
            .map(|a| {
                let n = self.grid.shape()[a];
                self.grid
                    .axis_wavenumbers(a)
                    .iter()
                    .enumerate()
                    .map(|(j, &k)| {
                        if j == n / 2 {
                            // the real interpolant of the Nyquist mode is a cosine
                            Complex64::new((k * x[a]).cos(), 0.0)
                        } else {
                            Complex64::from_polar(1.0, k * x[a])
                        }
                    })
                    .collect()
            })
            .collect();
        let m = self.modes.len();
        let phases: Vec<Complex64> = self
            .modes
            .iter()
            .map(|idx| {
                let mut p = tables[0][idx[0]];
                for a in 1..dims {
                    p *= tables[a][idx[a]];
                }
                p
            })
            .collect();
        for (f, o) in out.iter_mut().enumerate().take(self.fields) {
            let c = &self.coeffs[f * m..(f + 1) * m];
            *o = c.iter().zip(&phases).map(|(c, p)| c.re * p.re - c.im * p.im).sum();
        }
        Ok(())
    }
}
