//! Small dense row-major matrices and the handful of factorizations the
//! moment and Lax code needs.

use std::ops::{Index, IndexMut};

#[derive(Debug, Clone, PartialEq)]
pub struct DMat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        Self::from_fn(r, c, |i, j| rows[i][j])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Leading `n`×`n` block.
    pub fn leading(&self, n: usize) -> DMat {
        DMat::from_fn(n, n, |i, j| self[(i, j)])
    }

    pub fn transpose(&self) -> DMat {
        DMat::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &DMat) -> DMat {
        assert_eq!(self.cols, other.rows);
        let mut out = DMat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for p in 0..self.cols {
                let a = self[(i, p)];
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(p);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `uᵀ A v`.
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        let n = u.len().min(self.rows);
        let m = v.len().min(self.cols);
        let mut s = 0.0;
        for i in 0..n {
            if u[i] == 0.0 {
                continue;
            }
            let row = self.row(i);
            let mut r = 0.0;
            for j in 0..m {
                r += row[j] * v[j];
            }
            s += u[i] * r;
        }
        s
    }

    pub fn sub(&self, other: &DMat) -> DMat {
        DMat::from_fn(self.rows, self.cols, |i, j| self[(i, j)] - other[(i, j)])
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Largest |a_ij + a_ji|.
    pub fn antisymmetry_defect(&self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols.min(self.rows) {
                d = d.max((self[(i, j)] + self[(j, i)]).abs());
            }
        }
        d
    }

    pub fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }

    pub fn swap_cols(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for i in 0..self.rows {
            self.data.swap(i * self.cols + a, i * self.cols + b);
        }
    }
}

impl Index<(usize, usize)> for DMat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
/// On failure returns the index of the first non-positive pivot.
pub fn cholesky(a: &DMat) -> Result<DMat, usize> {
    let n = a.rows();
    let mut l = DMat::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(j);
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// LU factorization with partial pivoting.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: DMat,
    perm: Vec<usize>,
    sign: f64,
}

impl Lu {
    pub fn new(a: &DMat) -> Option<Self> {
        let n = a.rows();
        assert_eq!(n, a.cols(), "LU needs a square matrix");
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for k in 0..n {
            let (p, pv) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if pv == 0.0 || !pv.is_finite() {
                return None;
            }
            if p != k {
                lu.swap_rows(p, k);
                perm.swap(p, k);
                sign = -sign;
            }
            let piv = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / piv;
                lu[(i, k)] = f;
                if f == 0.0 {
                    continue;
                }
                for j in k + 1..n {
                    let v = lu[(k, j)];
                    lu[(i, j)] -= f * v;
                }
            }
        }
        Some(Self { lu, perm, sign })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.rows();
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s / self.lu[(i, i)];
        }
        x
    }

    pub fn det(&self) -> f64 {
        (0..self.lu.rows()).fold(self.sign, |d, i| d * self.lu[(i, i)])
    }
}

/// Solve `a x = b`; `None` if `a` is singular.
pub fn solve(a: &DMat, b: &[f64]) -> Option<Vec<f64>> {
    Lu::new(a).map(|lu| lu.solve(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_reconstructs() {
        let a = DMat::from_rows(&[vec![4.0, 2.0, 0.4], vec![2.0, 5.0, 1.0], vec![0.4, 1.0, 3.0]]);
        let l = cholesky(&a).unwrap();
        let back = l.matmul(&l.transpose());
        assert!(back.sub(&a).max_abs() < 1e-14);
    }

    #[test]
    fn cholesky_reports_failing_pivot() {
        let a = DMat::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert_eq!(cholesky(&a), Err(1));
    }

    #[test]
    fn lu_solves_and_determinant() {
        let a = DMat::from_rows(&[vec![0.0, 2.0, 1.0], vec![1.0, 1.0, 0.0], vec![3.0, 0.0, 1.0]]);
        let lu = Lu::new(&a).unwrap();
        let x = lu.solve(&[3.0, 2.0, 4.0]);
        let r = a.matvec(&x);
        for (ri, bi) in r.iter().zip([3.0, 2.0, 4.0]) {
            assert!((ri - bi).abs() < 1e-14);
        }
        assert!((lu.det() - (-5.0)).abs() < 1e-14);
    }
}
