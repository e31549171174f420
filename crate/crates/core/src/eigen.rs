//! Symmetric band matrices, band LU, and shift-invert subspace iteration.

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EigenError {
    #[error("zero pivot at row {row} for shift {shift}")]
    ZeroPivot { row: usize, shift: f64 },
    #[error("no convergence after {iterations} iterations, residual {residual}")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("requested {requested} eigenpairs from a matrix of size {size}")]
    TooMany { requested: usize, size: usize },
}

/// Square band matrix; row `i` stores columns `i - bw ..= i + bw`.
#[derive(Clone, Debug)]
pub struct BandMatrix {
    pub n: usize,
    pub bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        BandMatrix { n, bw, data: vec![0.0; n * (2 * bw + 1)] }
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.bw >= i && j <= i + self.bw);
        i * (2 * self.bw + 1) + (j + self.bw - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.bw < i || j > i + self.bw || j >= self.n {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (i..(i + self.bw + 1).min(self.n)).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let hi = (i + self.bw + 1).min(self.n);
            let row = &self.data[i * (2 * self.bw + 1)..];
            let mut s = 0.0;
            for j in lo..hi {
                s += row[j + self.bw - i] * x[j];
            }
            y[i] = s;
        }
    }

    /// Gershgorin lower bound on the spectrum.
    pub fn lower_bound(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.bw);
                let hi = (i + self.bw + 1).min(self.n);
                let off: f64 = (lo..hi).filter(|&j| j != i).map(|j| self.get(i, j).abs()).sum();
                self.get(i, i) - off
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// LU factorization of `self - shift·I` without pivoting.
    pub fn factor_shifted(&self, shift: f64) -> Result<BandLu, EigenError> {
        let mut a = self.clone();
        for i in 0..a.n {
            a.add(i, i, -shift);
        }
        let (n, bw) = (a.n, a.bw);
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let w = 2 * bw + 1;
        for k in 0..n {
            let pivot = a.data[k * w + bw];
            if pivot.abs() < 1e-14 * scale {
                return Err(EigenError::ZeroPivot { row: k, shift });
            }
            let hi = (k + bw + 1).min(n);
            for i in (k + 1)..hi {
                let ik = i * w + (k + bw - i);
                let l = a.data[ik] / pivot;
                a.data[ik] = l;
                if l == 0.0 {
                    continue;
                }
                for j in (k + 1)..hi {
                    let kj = k * w + (j + bw - k);
                    let ij = i * w + (j + bw - i);
                    a.data[ij] -= l * a.data[kj];
                }
            }
        }
        Ok(BandLu { lu: a })
    }
}

pub struct BandLu {
    lu: BandMatrix,
}

impl BandLu {
    pub fn solve(&self, b: &mut [f64]) {
        let (n, bw) = (self.lu.n, self.lu.bw);
        let w = 2 * bw + 1;
        let d = &self.lu.data;
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut s = b[i];
            for j in lo..i {
                s -= d[i * w + (j + bw - i)] * b[j];
            }
            b[i] = s;
        }
        for i in (0..n).rev() {
            let hi = (i + bw + 1).min(n);
            let mut s = b[i];
            for j in (i + 1)..hi {
                s -= d[i * w + (j + bw - i)] * b[j];
            }
            b[i] = s / d[i * w + bw];
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn orthonormalize(vs: &mut [Vec<f64>]) {
    for i in 0..vs.len() {
        for _ in 0..2 {
            for j in 0..i {
                let c = dot(&vs[i], &vs[j]);
                let (head, tail) = vs.split_at_mut(i);
                for (a, b) in tail[0].iter_mut().zip(&head[j]) {
                    *a -= c * b;
                }
            }
        }
        let nrm = dot(&vs[i], &vs[i]).sqrt();
        if nrm > 0.0 {
            vs[i].iter_mut().for_each(|v| *v /= nrm);
        }
    }
}

/// Deterministic smooth start block.
fn start_block(n: usize, m: usize) -> Vec<Vec<f64>> {
    (0..m)
        .map(|j| {
            (0..n)
                .map(|i| {
                    let t = (i as f64 + 0.5) / n as f64;
                    (std::f64::consts::PI * (j as f64 + 1.0) * t).sin() + 0.1 * ((i * 7919 + j * 104_729) % 997) as f64 / 997.0
                })
                .collect()
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

/// The `k` eigenpairs of a symmetric band matrix closest to `shift`.
pub fn eigs_near(a: &BandMatrix, shift: f64, k: usize, tol: f64, max_iter: usize) -> Result<EigenPairs, EigenError> {
    let n = a.n;
    let m = (k + 6).min(n);
    if k == 0 || k > n {
        return Err(EigenError::TooMany { requested: k, size: n });
    }
    let mut sigma = shift;
    let lu = loop {
        match a.factor_shifted(sigma) {
            Ok(lu) => break lu,
            Err(EigenError::ZeroPivot { .. }) if (sigma - shift).abs() < 1e-3 * (1.0 + shift.abs()) => {
                sigma += 1e-7 * (1.0 + shift.abs());
            }
            Err(e) => return Err(e),
        }
    };
    let mut x = start_block(n, m);
    orthonormalize(&mut x);
    let mut worst = f64::INFINITY;
    for it in 1..=max_iter {
        for v in x.iter_mut() {
            lu.solve(v);
        }
        orthonormalize(&mut x);
        let sx: Vec<Vec<f64>> = x
            .iter()
            .map(|v| {
                let mut y = vec![0.0; n];
                a.matvec(v, &mut y);
                y
            })
            .collect();
        let h = DMatrix::from_fn(m, m, |i, j| 0.5 * (dot(&x[i], &sx[j]) + dot(&x[j], &sx[i])));
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&p, &q| {
            let dp = (eig.eigenvalues[p] - shift).abs();
            let dq = (eig.eigenvalues[q] - shift).abs();
            dp.partial_cmp(&dq).expect("finite Ritz values")
        });
        let mut nx = vec![vec![0.0; n]; m];
        let mut nsx = vec![vec![0.0; n]; m];
        for (slot, &o) in order.iter().enumerate() {
            for (c, (v, sv)) in x.iter().zip(&sx).enumerate() {
                let coef = eig.eigenvectors[(c, o)];
                for i in 0..n {
                    nx[slot][i] += coef * v[i];
                    nsx[slot][i] += coef * sv[i];
                }
            }
        }
        let values: Vec<f64> = order.iter().map(|&o| eig.eigenvalues[o]).collect();
        let residuals: Vec<f64> = (0..k)
            .map(|j| {
                nsx[j].iter().zip(&nx[j]).map(|(s, v)| (s - values[j] * v).powi(2)).sum::<f64>().sqrt()
            })
            .collect();
        x = nx;
        worst = residuals
            .iter()
            .zip(&values)
            .map(|(r, v)| r / v.abs().max(1.0))
            .fold(0.0, f64::max);
        if worst <= tol {
            let mut idx: Vec<usize> = (0..k).collect();
            idx.sort_by(|&p, &q| values[p].partial_cmp(&values[q]).expect("finite"));
            return Ok(EigenPairs {
                values: idx.iter().map(|&i| values[i]).collect(),
                vectors: idx.iter().map(|&i| x[i].clone()).collect(),
                residuals: idx.iter().map(|&i| residuals[i]).collect(),
                iterations: it,
            });
        }
    }
    Err(EigenError::NoConvergence { iterations: max_iter, residual: worst })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> BandMatrix {
        let mut a = BandMatrix::zeros(n, 1);
        for i in 0..n {
            a.set(i, i, 2.0);
            if i + 1 < n {
                a.set(i, i + 1, -1.0);
                a.set(i + 1, i, -1.0);
            }
        }
        a
    }

    #[test]
    fn band_lu_solves() {
        let a = laplacian_1d(50);
        let lu = a.factor_shifted(0.0).unwrap();
        let x: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let mut b = vec![0.0; 50];
        a.matvec(&x, &mut b);
        lu.solve(&mut b);
        for (p, q) in b.iter().zip(&x) {
            assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn smallest_eigenvalues_of_dirichlet_laplacian() {
        let n = 200;
        let a = laplacian_1d(n);
        let e = eigs_near(&a, a.lower_bound() - 0.1, 3, 1e-10, 500).unwrap();
        for (k, v) in e.values.iter().enumerate() {
            let exact = 2.0 - 2.0 * (std::f64::consts::PI * (k + 1) as f64 / (n + 1) as f64).cos();
            assert!((v - exact).abs() < 1e-9, "{v} vs {exact}");
        }
        assert!(a.is_symmetric());
    }
}
