//! Small dense linear algebra: Hermitian covariance factorization and a
//! pivoted real solve for the KKT system.

use crate::prelude::*;
use crate::{Complex, Error, Result};

/// Square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    n: usize,
    data: Vec<Complex>,
}

impl CMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![Complex::default(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = Complex::new(1.0, 0.0);
        }
        m
    }

    pub fn from_rows(n: usize, data: Vec<Complex>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::InvalidInput(format!(
                "{} entries for a {n}x{n} matrix",
                data.len()
            )));
        }
        Ok(Self { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[Complex] {
        &self.data
    }

    pub fn trace(&self) -> Complex {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    /// Largest `|A_ij - conj(A_ji)|`.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for j in i..self.n {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn mul_vec(&self, x: &[Complex]) -> Vec<Complex> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self[(i, j)] * x[j]).sum())
            .collect()
    }

    /// `xᴴ A x`.
    pub fn quadratic_form(&self, x: &[Complex]) -> Complex {
        self.mul_vec(x)
            .iter()
            .zip(x)
            .map(|(ax, xi)| xi.conj() * ax)
            .sum()
    }

    pub fn matmul(&self, other: &CMatrix) -> CMatrix {
        let n = self.n;
        let mut out = CMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                for j in 0..n {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn adjoint(&self) -> CMatrix {
        let mut out = CMatrix::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                out[(i, j)] = self[(j, i)].conj();
            }
        }
        out
    }
}

impl core::ops::Index<(usize, usize)> for CMatrix {
    type Output = Complex;
    fn index(&self, (i, j): (usize, usize)) -> &Complex {
        &self.data[i * self.n + j]
    }
}

impl core::ops::IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex {
        &mut self.data[i * self.n + j]
    }
}

/// Cholesky factor `A = L Lᴴ` of a Hermitian positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: CMatrix,
}

impl Cholesky {
    /// Returns `None` when a pivot is not strictly positive.
    pub fn new(a: &CMatrix) -> Option<Self> {
        let n = a.n;
        let mut l = CMatrix::zeros(n);
        for j in 0..n {
            let mut d = a[(j, j)].re;
            for k in 0..j {
                d -= l[(j, k)].norm_sqr();
            }
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            let d = d.sqrt();
            l[(j, j)] = Complex::new(d, 0.0);
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = s / d;
            }
        }
        Some(Self { l })
    }

    pub fn log_det(&self) -> f64 {
        (0..self.l.n).map(|i| 2.0 * self.l[(i, i)].re.ln()).sum()
    }

    pub fn solve(&self, b: &[Complex]) -> Vec<Complex> {
        let n = self.l.n;
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                let t = self.l[(i, k)] * y[k];
                y[i] -= t;
            }
            y[i] /= self.l[(i, i)];
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                let t = self.l[(k, i)].conj() * y[k];
                y[i] -= t;
            }
            y[i] /= self.l[(i, i)];
        }
        y
    }

    /// Explicit inverse, Hermitian-symmetrized.
    pub fn inverse(&self) -> CMatrix {
        let n = self.l.n;
        let mut inv = CMatrix::zeros(n);
        let mut e = vec![Complex::default(); n];
        for j in 0..n {
            e.fill(Complex::default());
            e[j] = Complex::new(1.0, 0.0);
            for (i, v) in self.solve(&e).into_iter().enumerate() {
                inv[(i, j)] = v;
            }
        }
        for i in 0..n {
            inv[(i, i)].im = 0.0;
            for j in i + 1..n {
                let avg = (inv[(i, j)] + inv[(j, i)].conj()) * 0.5;
                inv[(i, j)] = avg;
                inv[(j, i)] = avg.conj();
            }
        }
        inv
    }
}

/// Covariance prepared for likelihood evaluation: `V + c·I` with
/// `c = loading · trace(V) / M`, its inverse and log-determinant.
#[derive(Debug, Clone)]
pub struct LoadedCovariance {
    pub inverse: CMatrix,
    pub log_det: f64,
    /// Absolute amount `c` added to the diagonal.
    pub shift: f64,
    /// Relative loading that succeeded.
    pub loading: f64,
}

/// Relative diagonal loading applied before every covariance inversion.
pub const DEFAULT_LOADING: f64 = 1e-6;
/// Loading is raised ×10 on factorization failure up to this value.
pub const MAX_LOADING: f64 = 1e-2;

impl LoadedCovariance {
    pub fn new(v: &CMatrix, bin: usize, loading: f64) -> Result<Self> {
        let m = v.n.max(1) as f64;
        let scale = v.trace().re / m;
        let mut delta = loading;
        loop {
            let shift = delta * scale;
            let mut a = v.clone();
            for i in 0..v.n {
                a[(i, i)] += shift;
            }
            if let Some(ch) = Cholesky::new(&a) {
                return Ok(Self {
                    inverse: ch.inverse(),
                    log_det: ch.log_det(),
                    shift,
                    loading: delta,
                });
            }
            delta *= 10.0;
            if delta > MAX_LOADING * (1.0 + 1e-9) {
                return Err(Error::SingularCovariance {
                    bin,
                    loading: delta / 10.0,
                });
            }
        }
    }
}

/// Solves `A x = b` for a dense row-major real matrix by Gaussian elimination
/// with partial pivoting. Returns the solution and the smallest pivot
/// magnitude, or `None` if a pivot vanishes.
pub fn solve_real(mut a: Vec<f64>, mut b: Vec<f64>) -> (Option<Vec<f64>>, f64) {
    let n = b.len();
    assert_eq!(a.len(), n * n);
    let mut min_pivot = f64::INFINITY;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .unwrap();
        let p = a[piv * n + col];
        min_pivot = min_pivot.min(p.abs());
        if p == 0.0 || !p.is_finite() {
            return (None, min_pivot);
        }
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            b.swap(col, piv);
        }
        for row in col + 1..n {
            let factor = a[row * n + col] / p;
            if factor != 0.0 {
                for k in col..n {
                    a[row * n + k] -= factor * a[col * n + k];
                }
                b[row] -= factor * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= a[i * n + k] * x[k];
        }
        x[i] = s / a[i * n + i];
    }
    (Some(x), min_pivot)
}
