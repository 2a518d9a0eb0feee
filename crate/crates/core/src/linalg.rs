//! Symmetric positive-definite factorization with diagonal jitter escalation,
//! and eigenvalues of a symmetric matrix together with the eigen-coordinates of
//! one vector.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricTridiagonal};

use crate::error::{Error, Result};

const JITTER_STEPS: [f64; 5] = [1e-12, 1e-11, 1e-10, 1e-9, 1e-8];

/// Cholesky factor of `M + jitter * (trace(M)/n) * I`.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
    /// Relative jitter actually added (0 when the plain factorization succeeded).
    pub jitter: f64,
}

impl SpdFactor {
    /// Factors `m`, escalating the jitter from 1e-12 to 1e-8 of the mean diagonal on failure.
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if n == 0 {
            return Err(Error::Data("cannot factor an empty matrix".into()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::IllConditioned { condition: f64::INFINITY });
        }
        if let Some(chol) = m.clone().cholesky() {
            return Ok(SpdFactor { chol, jitter: 0.0 });
        }
        let scale = m.trace() / n as f64;
        if !(scale > 0.0) {
            return Err(Error::IllConditioned { condition: f64::INFINITY });
        }
        for delta in JITTER_STEPS {
            let mut shifted = m.clone();
            for i in 0..n {
                shifted[(i, i)] += delta * scale;
            }
            if let Some(chol) = shifted.cholesky() {
                return Ok(SpdFactor { chol, jitter: delta });
            }
        }
        Err(Error::IllConditioned { condition: diagonal_condition_estimate(m) })
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    /// `L^{-1} b` for the lower factor `L`.
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        let l = self.chol.l_dirty();
        let mut x = b.clone();
        l.solve_lower_triangular_mut(&mut x);
        x
    }

    /// `log det` from the factor diagonal.
    pub fn log_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }

    /// Squared ratio of the extreme factor diagonals; a cheap lower bound on the condition number.
    pub fn condition_estimate(&self) -> f64 {
        let l = self.chol.l_dirty();
        let (lo, hi) = (0..l.nrows()).fold((f64::INFINITY, 0.0f64), |(lo, hi), i| {
            let d = l[(i, i)].abs();
            (lo.min(d), hi.max(d))
        });
        (hi / lo).powi(2)
    }
}

fn diagonal_condition_estimate(m: &DMatrix<f64>) -> f64 {
    let (lo, hi) = m.diagonal().iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| {
        (lo.min(d.abs()), hi.max(d.abs()))
    });
    if lo > 0.0 {
        // diagonal ratio understates it; the factorization failed regardless
        (hi / lo).max(1e16)
    } else {
        f64::INFINITY
    }
}

/// Eigenvalues `d` of symmetric `m` and the coordinates `z = V^T y` of `y` in
/// the matching eigenvectors, without forming `V`.
///
/// Householder tridiagonalization followed by implicit QL sweeps whose
/// rotations are applied to `z` only.
pub fn spectral_projection(m: DMatrix<f64>, y: &DVector<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = m.nrows();
    if n == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let (q, diag, off) = SymmetricTridiagonal::new(m).unpack();
    let mut z: Vec<f64> = q.tr_mul(y).iter().copied().collect();
    let mut d: Vec<f64> = diag.iter().copied().collect();
    let mut e: Vec<f64> = off.iter().copied().chain(std::iter::once(0.0)).collect();
    for l in 0..n {
        let mut iterations = 0;
        loop {
            let mut mm = l;
            while mm + 1 < n {
                let dd = d[mm].abs() + d[mm + 1].abs();
                if e[mm].abs() <= f64::EPSILON * dd {
                    break;
                }
                mm += 1;
            }
            if mm == l {
                break;
            }
            iterations += 1;
            if iterations > 60 {
                return Err(Error::IllConditioned { condition: f64::INFINITY });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[mm] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            for i in (l..mm).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[mm] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let zf = z[i + 1];
                z[i + 1] = s * z[i] + c * zf;
                z[i] = c * z[i] - s * zf;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[mm] = 0.0;
        }
    }
    Ok((d, z))
}
