//! Banded LU factorization with partial pivoting.
//!
//! Row `i` stores columns `i - kl ..= i + kl + ku`. Row interchanges confined
//! to the `kl` rows below the pivot never push entries outside that window.

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

/// Largest relative residual accepted after refinement.
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    ab: Vec<f64>,
    piv: Vec<usize>,
}

impl BandedLu {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.n_rows();
        if a.n_cols() != n {
            return Err(Error::ShapeMismatch(format!(
                "cannot factor a {}x{} matrix",
                n,
                a.n_cols()
            )));
        }
        let (mut kl, mut ku) = (0, 0);
        let mut scale = 0.0_f64;
        for (r, c, v) in a.triplets() {
            if v != 0.0 {
                kl = kl.max(r.saturating_sub(c));
                ku = ku.max(c.saturating_sub(r));
                scale = scale.max(v.abs());
            }
        }
        let width = 2 * kl + ku + 1;
        let mut lu = Self {
            n,
            kl,
            ku,
            width,
            ab: vec![0.0; n * width],
            piv: vec![0; n],
        };
        for (r, c, v) in a.triplets() {
            if v != 0.0 {
                let k = lu.at(r, c);
                lu.ab[k] = v;
            }
        }
        lu.eliminate(scale)?;
        Ok(lu)
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        i * self.width + j + self.kl - i
    }

    fn eliminate(&mut self, scale: f64) -> Result<()> {
        let n = self.n;
        let tiny = scale * 1e-14;
        for k in 0..n {
            let last_row = (k + self.kl).min(n - 1);
            let last_col = (k + self.kl + self.ku).min(n - 1);
            let mut p = k;
            let mut best = self.ab[self.at(k, k)].abs();
            for i in k + 1..=last_row {
                let v = self.ab[self.at(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > tiny) {
                return Err(Error::NumericalFailure(format!(
                    "matrix is singular to working precision at column {k}"
                )));
            }
            self.piv[k] = p;
            if p != k {
                for j in k..=last_col {
                    let (x, y) = (self.at(k, j), self.at(p, j));
                    self.ab.swap(x, y);
                }
            }
            let pivot = self.ab[self.at(k, k)];
            let span = last_col - k;
            let krow = self.at(k, k + 1);
            for i in k + 1..=last_row {
                let ik = self.at(i, k);
                let l = self.ab[ik] / pivot;
                self.ab[ik] = l;
                if l == 0.0 {
                    continue;
                }
                let irow = ik + 1;
                // rows k and i never overlap in storage
                let (head, tail) = self.ab.split_at_mut(irow);
                let src = &head[krow..krow + span];
                for (dst, s) in tail[..span].iter_mut().zip(src) {
                    *dst -= l * s;
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Lower and upper bandwidths of the original matrix.
    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let mut y = b.to_vec();
        for k in 0..n {
            y.swap(k, self.piv[k]);
            let yk = y[k];
            if yk != 0.0 {
                for i in k + 1..=(k + self.kl).min(n - 1) {
                    y[i] -= self.ab[self.at(i, k)] * yk;
                }
            }
        }
        for k in (0..n).rev() {
            let last = (k + self.kl + self.ku).min(n - 1);
            let base = self.at(k, k);
            let mut s = y[k];
            for (off, yj) in y[k + 1..=last].iter().enumerate() {
                s -= self.ab[base + 1 + off] * yj;
            }
            y[k] = s / self.ab[base];
        }
        y
    }

    /// Solves `a x = b` with one step of iterative refinement and checks the
    /// relative residual against [`RESIDUAL_TOLERANCE`].
    pub fn solve_refined(&self, a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
        let mut x = self.solve(b);
        let r: Vec<f64> = a.mul_vec(&x).iter().zip(b).map(|(ax, bi)| bi - ax).collect();
        let dx = self.solve(&r);
        for (xi, d) in x.iter_mut().zip(dx) {
            *xi += d;
        }
        let bnorm = norm(b);
        let res = a
            .mul_vec(&x)
            .iter()
            .zip(b)
            .map(|(ax, bi)| (bi - ax).powi(2))
            .sum::<f64>()
            .sqrt();
        let rel = if bnorm > 0.0 { res / bnorm } else { res };
        if !(rel <= RESIDUAL_TOLERANCE) {
            return Err(Error::NumericalFailure(format!(
                "relative residual {rel:e} exceeds {RESIDUAL_TOLERANCE:e}"
            )));
        }
        Ok(x)
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
