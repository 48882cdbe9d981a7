//! Small dense linear solves.
//!
//! The boundary-value systems in this crate are 4×4 per arc, so plain Gaussian
//! elimination with partial pivoting is all that is needed.

use crate::error::{Error, Result};

/// Row-major square matrix with a right-hand side, solved in place.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    n: usize,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl LinearSystem {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            a: vec![0.0; n * n],
            b: vec![0.0; n],
        }
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.a[row * self.n + col] = value;
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.a[row * self.n + col]
    }

    pub fn set_rhs(&mut self, row: usize, value: f64) {
        self.b[row] = value;
    }

    /// Copy `coeffs` into `row` starting at `col`.
    pub fn set_row_slice(&mut self, row: usize, col: usize, coeffs: &[f64]) {
        let start = row * self.n + col;
        self.a[start..start + coeffs.len()].copy_from_slice(coeffs);
    }

    /// Solve by Gaussian elimination with partial pivoting, consuming the system.
    ///
    /// Columns are scaled by their largest entry before pivoting so that
    /// coefficients of very different physical units (t³ next to 1) do not
    /// trip the singularity test.
    pub fn solve(mut self) -> Result<Vec<f64>> {
        let n = self.n;
        let mut scale = vec![0.0_f64; n];
        for (col, s) in scale.iter_mut().enumerate() {
            *s = (0..n).map(|r| self.a[r * n + col].abs()).fold(0.0, f64::max);
            if *s == 0.0 || !s.is_finite() {
                return Err(Error::Singular("zero or non-finite column"));
            }
        }
        for r in 0..n {
            for (c, s) in scale.iter().enumerate() {
                self.a[r * n + c] /= s;
            }
        }

        for k in 0..n {
            let (pivot_row, pivot_abs) = (k..n)
                .map(|r| (r, self.a[r * n + k].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot_abs < 1e-13 {
                return Err(Error::Singular("pivot below threshold"));
            }
            if pivot_row != k {
                for c in 0..n {
                    self.a.swap(k * n + c, pivot_row * n + c);
                }
                self.b.swap(k, pivot_row);
            }
            let pivot = self.a[k * n + k];
            for r in (k + 1)..n {
                let factor = self.a[r * n + k] / pivot;
                if factor == 0.0 {
                    continue;
                }
                for c in k..n {
                    self.a[r * n + c] -= factor * self.a[k * n + c];
                }
                self.b[r] -= factor * self.b[k];
            }
        }

        let mut x = vec![0.0; n];
        for k in (0..n).rev() {
            let tail: f64 = ((k + 1)..n).map(|c| self.a[k * n + c] * x[c]).sum();
            x[k] = (self.b[k] - tail) / self.a[k * n + k];
        }
        for (xi, s) in x.iter_mut().zip(&scale) {
            *xi /= s;
        }
        if x.iter().all(|v| v.is_finite()) {
            Ok(x)
        } else {
            Err(Error::Singular("non-finite solution"))
        }
    }
}
