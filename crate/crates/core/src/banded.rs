//! Symmetric positive-definite band matrices and their Cholesky factors.
//!
//! Both the macro mesh (row-major node numbering) and the periodic unit cell
//! (folded numbering) produce matrices whose nonzeros sit within a narrow
//! band around the diagonal, so a dense-band factorization is exact and
//! cheap at the sizes used here.

use crate::error::{Error, Result};

/// Lower band of a symmetric matrix. Row `i` stores columns
/// `i - bandwidth ..= i`, with the diagonal at offset `bandwidth`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    bandwidth: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        let bandwidth = bandwidth.min(n.saturating_sub(1));
        Self {
            n,
            bandwidth,
            data: vec![0.0; n * (bandwidth + 1)],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bandwidth);
        i * (self.bandwidth + 1) + (j + self.bandwidth - i)
    }

    /// Adds `value` to entry `(i, j)` (and implicitly `(j, i)`).
    ///
    /// Panics if the entry falls outside the band.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        assert!(
            r - c <= self.bandwidth,
            "entry ({i}, {j}) outside bandwidth {}",
            self.bandwidth
        );
        let k = self.offset(r, c);
        self.data[k] += value;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if r - c > self.bandwidth {
            0.0
        } else {
            self.data[self.offset(r, c)]
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        let w = self.bandwidth;
        for i in 0..self.n {
            let lo = i.saturating_sub(w);
            let row = &self.data[i * (w + 1)..(i + 1) * (w + 1)];
            let first = w - (i - lo);
            y[i] += row[w] * x[i];
            for (k, j) in (lo..i).enumerate() {
                let a = row[first + k];
                y[i] += a * x[j];
                y[j] += a * x[i];
            }
        }
        y
    }

    /// `b − A x` with error-free products and compensated sums, accurate
    /// to about one rounding of the exact residual.
    pub fn residual(&self, x: &[f64], b: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        assert_eq!(b.len(), self.n);
        let mut sum = b.to_vec();
        let mut comp = vec![0.0; self.n];
        let sub = |i: usize, a: f64, v: f64, sum: &mut [f64], comp: &mut [f64]| {
            let p = a * v;
            let e = a.mul_add(v, -p);
            let s = sum[i] - p;
            let bv = s - sum[i];
            comp[i] += (sum[i] - (s - bv)) + (-p - bv) - e;
            sum[i] = s;
        };
        let w = self.bandwidth;
        for i in 0..self.n {
            let lo = i.saturating_sub(w);
            let row = &self.data[i * (w + 1)..(i + 1) * (w + 1)];
            let first = w - (i - lo);
            sub(i, row[w], x[i], &mut sum, &mut comp);
            for (k, j) in (lo..i).enumerate() {
                let a = row[first + k];
                sub(i, a, x[j], &mut sum, &mut comp);
                sub(j, a, x[i], &mut sum, &mut comp);
            }
        }
        sum.iter().zip(&comp).map(|(s, c)| s + c).collect()
    }

    /// In-place Cholesky factorization `A = L Lᵀ`.
    pub fn factor(mut self) -> Result<BandCholesky> {
        let n = self.n;
        let w = self.bandwidth;
        let stride = w + 1;
        for i in 0..n {
            let lo_i = i.saturating_sub(w);
            for j in lo_i..=i {
                let lo = lo_i.max(j.saturating_sub(w));
                // row i columns lo..j and row j columns lo..j are contiguous
                let ri = i * stride + (lo + w - i);
                let rj = j * stride + (lo + w - j);
                let len = j - lo;
                let mut dot = 0.0;
                for k in 0..len {
                    dot += self.data[ri + k] * self.data[rj + k];
                }
                let idx = i * stride + (j + w - i);
                let s = self.data[idx] - dot;
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::SolverFailure {
                            row: i,
                            size: n,
                            pivot: s,
                        });
                    }
                    self.data[idx] = s.sqrt();
                } else {
                    let djj = self.data[j * stride + w];
                    self.data[idx] = s / djj;
                }
            }
        }
        Ok(BandCholesky { factor: self })
    }
}

/// Cholesky factor of a [`BandMatrix`]; reusable for any number of
/// right-hand sides (forward and adjoint solves share one factorization).
#[derive(Debug, Clone)]
pub struct BandCholesky {
    factor: BandMatrix,
}

impl BandCholesky {
    pub fn size(&self) -> usize {
        self.factor.n
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.factor.n;
        let w = self.factor.bandwidth;
        let stride = w + 1;
        let d = &self.factor.data;
        assert_eq!(x.len(), n);
        // L y = b
        for i in 0..n {
            let lo = i.saturating_sub(w);
            let row = &d[i * stride + (lo + w - i)..i * stride + w];
            let mut s = x[i];
            for (a, xj) in row.iter().zip(&x[lo..i]) {
                s -= a * xj;
            }
            x[i] = s / d[i * stride + w];
        }
        // Lᵀ x = y
        for i in (0..n).rev() {
            x[i] /= d[i * stride + w];
            let xi = x[i];
            let lo = i.saturating_sub(w);
            let row = &d[i * stride + (lo + w - i)..i * stride + w];
            for (a, xj) in row.iter().zip(&mut x[lo..i]) {
                *xj -= a * xi;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiagonal(n: usize) -> BandMatrix {
        let mut a = BandMatrix::zeros(n, 1);
        for i in 0..n {
            a.add(i, i, 2.0);
            if i + 1 < n {
                a.add(i + 1, i, -1.0);
            }
        }
        a
    }

    #[test]
    fn solves_tridiagonal_system() {
        let a = tridiagonal(6);
        let x_true: Vec<f64> = (0..6).map(|i| (i as f64).sin() + 1.0).collect();
        let b = a.matvec(&x_true);
        let x = a.clone().factor().unwrap().solve(&b);
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_dense_solve_for_wide_band() {
        // Random SPD band matrix: diagonally dominant.
        let n = 40;
        let w = 7;
        let mut a = BandMatrix::zeros(n, w);
        let mut seed = 12345u64;
        let mut next = || {
            seed = seed
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((seed >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        for i in 0..n {
            for j in i.saturating_sub(w)..i {
                a.add(i, j, next());
            }
            a.add(i, i, 2.0 * w as f64);
        }
        let x_true: Vec<f64> = (0..n).map(|i| i as f64 * 0.1 - 1.0).collect();
        let b = a.matvec(&x_true);
        let x = a.factor().unwrap().solve(&b);
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn indefinite_matrix_reports_pivot() {
        let mut a = BandMatrix::zeros(2, 1);
        a.add(0, 0, 1.0);
        a.add(1, 0, 2.0);
        a.add(1, 1, 1.0);
        match a.factor() {
            Err(Error::SolverFailure { row, size, .. }) => {
                assert_eq!(row, 1);
                assert_eq!(size, 2);
            }
            other => panic!("expected solver failure, got {other:?}"),
        }
    }

    #[test]
    fn residual_matches_matvec() {
        let mut a = BandMatrix::zeros(5, 2);
        for i in 0..5 {
            a.add(i, i, 4.0 + i as f64);
            if i > 0 {
                a.add(i, i - 1, -1.0 / 3.0);
            }
            if i > 1 {
                a.add(i, i - 2, 0.1);
            }
        }
        let x = [1.0, -2.0, 0.5, 3.0, 1e-3];
        let b = [0.2, 0.4, -1.0, 7.0, 2.0];
        let ax = a.matvec(&x);
        for (r, (bi, axi)) in a.residual(&x, &b).iter().zip(b.iter().zip(&ax)) {
            assert!((r - (bi - axi)).abs() < 1e-14);
        }
    }

    #[test]
    fn symmetric_access() {
        let mut a = BandMatrix::zeros(3, 2);
        a.add(0, 2, 4.0);
        assert_eq!(a.get(2, 0), 4.0);
        assert_eq!(a.get(0, 2), 4.0);
    }
}
