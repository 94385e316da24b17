//! Symmetric and skew-symmetric moments, and polynomial bases orthonormal for
//! a weight discretized on a quadrature grid.
//!
//! Skew products are `⟨f, g⟩ = ½ ∬ f(x) g(y) sgn(y − x) ρ(x) ρ(y) dx dy`.

use crate::error::{Error, Result};
use crate::linalg::DMat;
use crate::weight::{build_quadrature_for_degree, CouplingVector, QuadratureGrid, Weight};

/// Hankel degree cap for double precision.
pub const MAX_HANKEL_DEGREE: usize = 40;

/// `μ_k = ∫ z^k ρ(z; t) dz` for `k = 0..=2N`.
#[derive(Debug, Clone)]
pub struct SymmetricMomentTable {
    pub mu: Vec<f64>,
    pub couplings: CouplingVector,
}

impl SymmetricMomentTable {
    /// Hankel matrix `{μ_{i+j}}` of size `n`.
    pub fn hankel(&self, n: usize) -> DMat {
        DMat::from_fn(n, n, |i, j| self.mu[i + j])
    }
}

pub fn symmetric_moment_table(t: &CouplingVector, max_degree: usize, tol: f64) -> Result<SymmetricMomentTable> {
    if max_degree > MAX_HANKEL_DEGREE {
        return Err(Error::DegreeCap { degree: max_degree, cap: MAX_HANKEL_DEGREE });
    }
    let grid = build_quadrature_for_degree(t, tol, max_degree)?;
    let w = Weight::new(t);
    let even = t.parity_even_only();
    let mut mu = vec![0.0; max_degree + 1];
    for (&x, &wx) in grid.nodes.iter().zip(&grid.weights) {
        let r = wx * w.eval(x);
        let mut p = 1.0;
        for m in mu.iter_mut() {
            *m += r * p;
            p *= x;
        }
    }
    if even {
        for k in (1..=max_degree).step_by(2) {
            mu[k] = 0.0;
        }
    }
    Ok(SymmetricMomentTable { mu, couplings: t.clone() })
}

/// Polynomials `π_0, π_1, …` orthonormal for a weight `ω`, stored through
/// their three-term recurrence
/// `z π_j = β_{j+1} π_{j+1} + α_j π_j + β_j π_{j−1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrenceBasis {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    pi0: f64,
}

impl RecurrenceBasis {
    /// Discretized Stieltjes procedure on the grid for `ω(z) = exp(log_weight(z))`.
    /// Produces `π_0..=π_{degree+1}`, one past `degree`.
    pub fn stieltjes(
        grid: &QuadratureGrid,
        log_weight: &dyn Fn(f64) -> f64,
        degree: usize,
        even: bool,
    ) -> Result<Self> {
        let om: Vec<f64> = grid
            .nodes
            .iter()
            .zip(&grid.weights)
            .map(|(&x, &w)| w * log_weight(x).exp())
            .collect();
        let mass: f64 = om.iter().sum();
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::IllConditioned(0));
        }
        let pi0 = 1.0 / mass.sqrt();
        let n = grid.len();
        let mut prev = vec![0.0; n];
        let mut cur = vec![pi0; n];
        let mut alpha = Vec::with_capacity(degree + 2);
        let mut beta = vec![0.0];
        for j in 0..=degree {
            let a = if even {
                0.0
            } else {
                (0..n).map(|i| om[i] * grid.nodes[i] * cur[i] * cur[i]).sum()
            };
            alpha.push(a);
            let bj = beta[j];
            let mut next: Vec<f64> = (0..n)
                .map(|i| (grid.nodes[i] - a) * cur[i] - bj * prev[i])
                .collect();
            // One re-orthogonalization pass against the two previous vectors.
            for (v, c) in [(&cur, 0), (&prev, 1)] {
                if j == 0 && c == 1 {
                    continue;
                }
                let proj: f64 = (0..n).map(|i| om[i] * next[i] * v[i]).sum();
                for i in 0..n {
                    next[i] -= proj * v[i];
                }
            }
            let b = (0..n).map(|i| om[i] * next[i] * next[i]).sum::<f64>().sqrt();
            if !(b > 0.0) || !b.is_finite() {
                return Err(Error::IllConditioned(j + 1));
            }
            beta.push(b);
            for x in next.iter_mut() {
                *x /= b;
            }
            prev = std::mem::replace(&mut cur, next);
        }
        Ok(Self { alpha, beta, pi0 })
    }

    /// Basis for `ρ(z; t)^power` on the grid (power 1 or 2).
    pub fn for_weight_power(grid: &QuadratureGrid, t: &CouplingVector, power: f64, degree: usize) -> Result<Self> {
        let w = Weight::new(t);
        Self::stieltjes(grid, &|z| power * w.log(z), degree, t.parity_even_only())
    }

    /// Highest degree whose recurrence row is available.
    pub fn degree(&self) -> usize {
        self.alpha.len() - 1
    }

    pub fn alpha(&self, j: usize) -> f64 {
        self.alpha[j]
    }

    /// `β_j` for `j ≥ 1` (`β_0 = 0`).
    pub fn beta(&self, j: usize) -> f64 {
        self.beta[j]
    }

    /// Values `π_0(x)..π_{out.len()-1}(x)`.
    pub fn eval_all(&self, x: f64, out: &mut [f64]) {
        if out.is_empty() {
            return;
        }
        out[0] = self.pi0;
        if out.len() > 1 {
            out[1] = (x - self.alpha[0]) * self.pi0 / self.beta[1];
        }
        for j in 1..out.len().saturating_sub(1) {
            out[j + 1] = ((x - self.alpha[j]) * out[j] - self.beta[j] * out[j - 1]) / self.beta[j + 1];
        }
    }

    /// Leading coefficient of `π_j`.
    pub fn lead(&self, j: usize) -> f64 {
        (1..=j).fold(self.pi0, |l, i| l / self.beta[i])
    }

    /// `log` of the leading coefficient of `π_j`.
    pub fn log_lead(&self, j: usize) -> f64 {
        (1..=j).fold(self.pi0.ln(), |l, i| l - self.beta[i].ln())
    }

    /// `[z^{j−1}] π_j / [z^j] π_j = −Σ_{m<j} α_m`.
    pub fn sub_ratio(&self, j: usize) -> f64 {
        -self.alpha[..j].iter().sum::<f64>()
    }

    /// Monic norms `h_k = ∫ p_k² ω` for `k < n`.
    pub fn monic_norms(&self, n: usize) -> Vec<f64> {
        (0..n).map(|k| (-2.0 * self.log_lead(k)).exp()).collect()
    }

    /// Rows of monomial coefficients of `π_0..π_{n−1}`.
    pub fn monomial_coefficients(&self, n: usize) -> DMat {
        let mut c = DMat::zeros(n, n);
        if n == 0 {
            return c;
        }
        c[(0, 0)] = self.pi0;
        for j in 0..n - 1 {
            for k in 0..n {
                let mut v = -self.alpha[j] * c[(j, k)];
                if k > 0 {
                    v += c[(j, k - 1)];
                }
                if j > 0 {
                    v -= self.beta[j] * c[(j - 1, k)];
                }
                c[(j + 1, k)] = v / self.beta[j + 1];
            }
        }
        c
    }
}

/// Polynomial basis in which skew moments are expressed.
#[derive(Debug, Clone, PartialEq)]
pub enum PolyBasis {
    Monomial,
    Orthonormal(RecurrenceBasis),
}

impl PolyBasis {
    pub fn eval_all(&self, x: f64, out: &mut [f64]) {
        match self {
            PolyBasis::Monomial => {
                let mut p = 1.0;
                for o in out.iter_mut() {
                    *o = p;
                    p *= x;
                }
            }
            PolyBasis::Orthonormal(b) => b.eval_all(x, out),
        }
    }

    pub fn lead(&self, j: usize) -> f64 {
        match self {
            PolyBasis::Monomial => 1.0,
            PolyBasis::Orthonormal(b) => b.lead(j),
        }
    }

    pub fn log_lead(&self, j: usize) -> f64 {
        match self {
            PolyBasis::Monomial => 0.0,
            PolyBasis::Orthonormal(b) => b.log_lead(j),
        }
    }

    pub fn sub_ratio(&self, j: usize) -> f64 {
        match self {
            PolyBasis::Monomial => 0.0,
            PolyBasis::Orthonormal(b) => b.sub_ratio(j),
        }
    }

    /// Coefficients of `z·f` given those of `f` (one longer).
    pub fn times_z(&self, c: &[f64]) -> Vec<f64> {
        let mut e = vec![0.0; c.len() + 1];
        match self {
            PolyBasis::Monomial => e[1..].copy_from_slice(c),
            PolyBasis::Orthonormal(b) => {
                for (j, &cj) in c.iter().enumerate() {
                    if cj == 0.0 {
                        continue;
                    }
                    e[j + 1] += b.beta(j + 1) * cj;
                    e[j] += b.alpha(j) * cj;
                    if j > 0 {
                        e[j - 1] += b.beta(j) * cj;
                    }
                }
            }
        }
        e
    }

    /// Convert coefficients in this basis to monomial coefficients.
    pub fn to_monomial(&self, c: &[f64]) -> Vec<f64> {
        match self {
            PolyBasis::Monomial => c.to_vec(),
            PolyBasis::Orthonormal(b) => {
                let m = b.monomial_coefficients(c.len());
                let mut out = vec![0.0; c.len()];
                for (j, &cj) in c.iter().enumerate() {
                    for (k, o) in out.iter_mut().enumerate() {
                        *o += cj * m[(j, k)];
                    }
                }
                out
            }
        }
    }
}

/// Skew moments `m[i][j] = ⟨f_i, f_j⟩_t` in a polynomial basis.
#[derive(Debug, Clone)]
pub struct SkewMomentMatrix {
    pub m: DMat,
    pub couplings: CouplingVector,
    pub basis: PolyBasis,
}

impl SkewMomentMatrix {
    pub fn size(&self) -> usize {
        self.m.rows()
    }
}

/// Skew matrix of `size` basis functions, integrated on `grid` against ρ(·; t).
pub fn skew_matrix_on_grid(grid: &QuadratureGrid, t: &CouplingVector, basis: &PolyBasis, size: usize) -> DMat {
    skew_products(grid, t, size, &|x, out| basis.eval_all(x, out))
}

/// `⟨f_i, f_j⟩_t` for the functions `funcs(x) = (f_0(x), …, f_{dim−1}(x))`,
/// antisymmetrized. At even couplings `f_i` is assumed to have the parity
/// of `i`, and entries with `i + j` even are set to zero.
pub fn skew_products(grid: &QuadratureGrid, t: &CouplingVector, dim: usize, funcs: &dyn Fn(f64, &mut [f64])) -> DMat {
    let w = Weight::new(t);
    let f = |y: f64, out: &mut [f64]| {
        funcs(y, out);
        let r = w.eval(y);
        for o in out.iter_mut() {
            *o *= r;
        }
    };
    let (total, cum) = grid.cumulative(dim, &f);
    let mut m = DMat::zeros(dim, dim);
    let mut fx = vec![0.0; dim];
    let mut g = vec![0.0; dim];
    for (k, (&x, &wx)) in grid.nodes.iter().zip(&grid.weights).enumerate() {
        f(x, &mut fx);
        for (gj, (t, c)) in g.iter_mut().zip(total.iter().zip(&cum[k])) {
            *gj = t - 2.0 * c;
        }
        for i in 0..dim {
            let a = 0.5 * wx * fx[i];
            if a == 0.0 {
                continue;
            }
            for j in 0..dim {
                m[(i, j)] += a * g[j];
            }
        }
    }
    let even = t.parity_even_only();
    DMat::from_fn(dim, dim, |i, j| {
        if i == j || (even && (i + j) % 2 == 0) {
            0.0
        } else {
            0.5 * (m[(i, j)] - m[(j, i)])
        }
    })
}

/// Monomial skew moments `⟨x^i, y^j⟩_t`, `0 ≤ i, j < size`.
pub fn skew_moment_matrix(t: &CouplingVector, size: usize, tol: f64) -> Result<SkewMomentMatrix> {
    let grid = build_quadrature_for_degree(t, tol, size)?;
    let m = skew_matrix_on_grid(&grid, t, &PolyBasis::Monomial, size);
    Ok(SkewMomentMatrix { m, couplings: t.clone(), basis: PolyBasis::Monomial })
}

/// Reference basis for skew computations: orthonormal for ρ², built on `grid`.
pub fn reference_basis(grid: &QuadratureGrid, t: &CouplingVector, size: usize) -> Result<RecurrenceBasis> {
    RecurrenceBasis::for_weight_power(grid, t, 2.0, size)
}

/// Skew Gram matrix in the ρ²-orthonormal reference basis. Much better
/// conditioned than [`skew_moment_matrix`] at large sizes.
pub fn skew_gram_matrix(t: &CouplingVector, size: usize, tol: f64) -> Result<SkewMomentMatrix> {
    let grid = build_quadrature_for_degree(t, tol, size)?;
    skew_gram_on_grid(&grid, t, size)
}

pub fn skew_gram_on_grid(grid: &QuadratureGrid, t: &CouplingVector, size: usize) -> Result<SkewMomentMatrix> {
    let basis = PolyBasis::Orthonormal(reference_basis(grid, t, size)?);
    let m = skew_matrix_on_grid(grid, t, &basis, size);
    Ok(SkewMomentMatrix { m, couplings: t.clone(), basis })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn gaussian_moments() {
        let tab = symmetric_moment_table(&CouplingVector::zero(), 8, 1e-12).unwrap();
        let s = (2.0 * PI).sqrt();
        assert!((tab.mu[0] / s - 1.0).abs() < 1e-12);
        assert!((tab.mu[2] / s - 1.0).abs() < 1e-12);
        assert!((tab.mu[4] / (3.0 * s) - 1.0).abs() < 1e-12);
        assert!((tab.mu[8] / (105.0 * s) - 1.0).abs() < 1e-12);
        assert_eq!(tab.mu[1], 0.0);
        assert_eq!(tab.mu[3], 0.0);
        let t = CouplingVector::from_pairs(&[(2, 0.1)]);
        let tab = symmetric_moment_table(&t, 2, 1e-12).unwrap();
        assert!((tab.mu[2] / (s * 0.8f64.powf(-1.5)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degree_cap() {
        let r = symmetric_moment_table(&CouplingVector::zero(), 42, 1e-12);
        assert_eq!(r.unwrap_err(), Error::DegreeCap { degree: 42, cap: 40 });
    }

    #[test]
    fn stieltjes_recovers_hermite() {
        let t = CouplingVector::zero();
        let g = build_quadrature_for_degree(&t, 1e-12, 44).unwrap();
        let b = RecurrenceBasis::for_weight_power(&g, &t, 1.0, 20).unwrap();
        for j in 1..=20 {
            assert!((b.beta(j) - (j as f64).sqrt()).abs() < 1e-10, "beta_{j} = {}", b.beta(j));
        }
        let b2 = RecurrenceBasis::for_weight_power(&g, &t, 2.0, 20).unwrap();
        for j in 1..=20 {
            assert!((b2.beta(j) - (j as f64 / 2.0).sqrt()).abs() < 1e-10);
        }
    }

    #[test]
    fn monomial_skew_examples() {
        let s = skew_moment_matrix(&CouplingVector::zero(), 6, 1e-12).unwrap();
        assert!((s.m[(0, 1)] - PI.sqrt()).abs() < 1e-12);
        assert_eq!(s.m[(0, 2)], 0.0);
        for k in 0..6 {
            assert_eq!(s.m[(k, k)], 0.0);
        }
        assert_eq!(s.m.antisymmetry_defect(), 0.0);
    }

    #[test]
    fn gram_matches_monomial_after_change_of_basis() {
        let t = CouplingVector::from_pairs(&[(1, 0.2), (2, -0.1), (4, -0.02)]);
        let mono = skew_moment_matrix(&t, 6, 1e-12).unwrap();
        let gram = skew_gram_matrix(&t, 6, 1e-12).unwrap();
        let PolyBasis::Orthonormal(b) = &gram.basis else { panic!() };
        let c = b.monomial_coefficients(6);
        let back = c.matmul(&mono.m).matmul(&c.transpose());
        assert!(back.sub(&gram.m).max_abs() < 1e-11);
    }
}
