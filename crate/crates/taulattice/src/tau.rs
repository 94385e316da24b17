//! τ-functions of the unitary (Hankel determinant) and orthogonal
//! (Pfaffian of skew moments) ensembles, and their coupling derivatives.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fd::{richardson_partial, FdEstimate};
use crate::linalg::cholesky;
use crate::moments::{
    reference_basis, skew_matrix_on_grid, skew_moment_matrix, symmetric_moment_table, PolyBasis,
    RecurrenceBasis,
};
use crate::pfaffian::log_pfaffian;
use crate::weight::{build_quadrature_for_degree, CouplingVector, QuadratureGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ensemble {
    Unitary,
    Orthogonal,
}

/// `τ_n(t)` for consecutive `n` (unitary) or consecutive even `2n`
/// (orthogonal, stored at index `n`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauSequence {
    pub ensemble: Ensemble,
    pub values: Vec<f64>,
}

/// `τ_n = det{μ_{i+j}}_{i,j<n}` by Cholesky of the Hankel matrix.
pub fn tau_unitary(t: &CouplingVector, n: usize) -> Result<f64> {
    if n == 0 {
        return Ok(1.0);
    }
    let table = symmetric_moment_table(t, 2 * n - 2, crate::weight::DEFAULT_TOL)?;
    let l = cholesky(&table.hankel(n)).map_err(Error::IllConditioned)?;
    Ok((0..n).map(|i| l[(i, i)] * l[(i, i)]).product())
}

/// `τ_{2n}` as the Pfaffian of the leading `2n × 2n` skew moments, formed in
/// the ρ²-orthonormal basis and divided by the product of its leading
/// coefficients.
pub fn tau_orthogonal(t: &CouplingVector, two_n: usize) -> Result<f64> {
    if two_n % 2 == 1 {
        return Err(Error::OddDimension(two_n));
    }
    if two_n == 0 {
        return Ok(1.0);
    }
    let ev = TauEvaluator::new(Ensemble::Orthogonal, t, two_n, crate::weight::DEFAULT_TOL)?;
    Ok(ev.log_tau(t, two_n)?.exp())
}

/// `τ_{2n}` straight from the Pfaffian of monomial skew moments.
pub fn tau_orthogonal_monomial(t: &CouplingVector, two_n: usize) -> Result<f64> {
    if two_n == 0 {
        return Ok(1.0);
    }
    let m = skew_moment_matrix(t, two_n, crate::weight::DEFAULT_TOL)?;
    crate::pfaffian::pfaffian(&m.m)
}

pub fn tau_sequence(ensemble: Ensemble, t: &CouplingVector, count: usize) -> Result<TauSequence> {
    let size = match ensemble {
        Ensemble::Unitary => count.saturating_sub(1),
        Ensemble::Orthogonal => 2 * count.saturating_sub(1),
    };
    let ev = TauEvaluator::new(ensemble, t, size.max(2), crate::weight::DEFAULT_TOL)?;
    let logs = ev.log_tau_sequence(t, count)?;
    Ok(TauSequence { ensemble, values: logs.into_iter().map(f64::exp).collect() })
}

/// Evaluates τ at couplings near a base point on a grid fixed by the base
/// point, so finite differences in the couplings see a smooth integrand.
#[derive(Debug, Clone)]
pub struct TauEvaluator {
    ensemble: Ensemble,
    grid: QuadratureGrid,
}

/// Extra polynomial degree covered by the evaluator's grid radius, so the
/// integrals stay accurate under moderate coupling perturbations.
const EVALUATOR_MARGIN: usize = 24;

impl TauEvaluator {
    /// `max_size` is the largest `n` (unitary) or `2n` (orthogonal) needed.
    pub fn new(ensemble: Ensemble, base: &CouplingVector, max_size: usize, tol: f64) -> Result<Self> {
        let degree = 2 * max_size + EVALUATOR_MARGIN;
        let grid = build_quadrature_for_degree(base, tol, degree)?;
        Ok(Self { ensemble, grid })
    }

    pub fn ensemble(&self) -> Ensemble {
        self.ensemble
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    /// `log τ_size(t)`; `size` is `n` or `2n`.
    pub fn log_tau(&self, t: &CouplingVector, size: usize) -> Result<f64> {
        match self.ensemble {
            Ensemble::Unitary => {
                if size == 0 {
                    return Ok(0.0);
                }
                let b = RecurrenceBasis::for_weight_power(&self.grid, t, 1.0, size)?;
                Ok(-2.0 * (0..size).map(|k| b.log_lead(k)).sum::<f64>())
            }
            Ensemble::Orthogonal => {
                if size % 2 == 1 {
                    return Err(Error::OddDimension(size));
                }
                if size == 0 {
                    return Ok(0.0);
                }
                let basis = PolyBasis::Orthonormal(reference_basis(&self.grid, t, size)?);
                let m = skew_matrix_on_grid(&self.grid, t, &basis, size);
                let (sign, log_abs) = log_pfaffian(&m)?;
                if sign <= 0.0 {
                    return Err(Error::SingularMinor(size));
                }
                Ok(log_abs - (0..size).map(|j| basis.log_lead(j)).sum::<f64>())
            }
        }
    }

    /// `log τ` for the first `count` members: `τ_0..τ_{count−1}` (unitary) or
    /// `τ_0, τ_2, …, τ_{2count−2}` (orthogonal).
    pub fn log_tau_sequence(&self, t: &CouplingVector, count: usize) -> Result<Vec<f64>> {
        match self.ensemble {
            Ensemble::Unitary => {
                let b = RecurrenceBasis::for_weight_power(&self.grid, t, 1.0, count.max(1))?;
                let mut acc = 0.0;
                let mut out = Vec::with_capacity(count);
                for k in 0..count {
                    out.push(acc);
                    acc -= 2.0 * b.log_lead(k);
                }
                Ok(out)
            }
            Ensemble::Orthogonal => {
                let size = 2 * count.saturating_sub(1);
                if size == 0 {
                    return Ok(vec![0.0; count]);
                }
                let basis = PolyBasis::Orthonormal(reference_basis(&self.grid, t, size)?);
                let m = skew_matrix_on_grid(&self.grid, t, &basis, size);
                let mut out = vec![0.0];
                let mut leads = 0.0;
                for n in 1..count {
                    leads += basis.log_lead(2 * n - 2) + basis.log_lead(2 * n - 1);
                    let (sign, log_abs) = log_pfaffian(&m.leading(2 * n))?;
                    if sign <= 0.0 {
                        return Err(Error::SingularMinor(2 * n));
                    }
                    out.push(log_abs - leads);
                }
                Ok(out)
            }
        }
    }
}

/// Derivative of `τ_size` in the couplings: `multi_index` maps `k` to the
/// derivative order in `t_k` (total order ≤ 4). Central differences with step
/// `step` and one Richardson level; fails with `StepTooLarge` when the
/// estimate exceeds `tol`.
pub fn tau_coupling_derivative(
    ensemble: Ensemble,
    size: usize,
    t: &CouplingVector,
    multi_index: &BTreeMap<u32, usize>,
    step: f64,
    tol: Option<f64>,
) -> Result<FdEstimate> {
    let total: usize = multi_index.values().sum();
    if total > 4 {
        return Err(Error::InvalidInput(format!("derivative order {total} exceeds 4")));
    }
    let ev = TauEvaluator::new(ensemble, t, size.max(2), crate::weight::DEFAULT_TOL)?;
    ev.derivative(size, t, multi_index, step, tol, false)
}

impl TauEvaluator {
    /// Finite-difference derivative of `τ_size` (or of `log τ_size` when
    /// `log` is set) at `t`.
    pub fn derivative(
        &self,
        size: usize,
        t: &CouplingVector,
        multi_index: &BTreeMap<u32, usize>,
        step: f64,
        tol: Option<f64>,
        log: bool,
    ) -> Result<FdEstimate> {
        let keys: Vec<u32> = multi_index.iter().filter(|(_, &p)| p > 0).map(|(&k, _)| k).collect();
        if keys.is_empty() {
            let v = self.log_tau(t, size)?;
            let value = if log { v } else { v.exp() };
            return Ok(FdEstimate { value, error: 0.0 });
        }
        let orders: Vec<usize> = keys.iter().map(|k| multi_index[k]).collect();
        let x0: Vec<f64> = keys.iter().map(|&k| t.get(k)).collect();
        let steps = vec![step; keys.len()];
        let mut f = |x: &[f64]| {
            let mut c = t.clone();
            for (&k, &v) in keys.iter().zip(x) {
                c.set(k, v);
            }
            let v = self.log_tau(&c, size)?;
            Ok(if log { v } else { v.exp() })
        };
        richardson_partial(&mut f, &x0, &orders, &steps, tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn unitary_examples() {
        let t = CouplingVector::zero();
        assert_eq!(tau_unitary(&t, 0).unwrap(), 1.0);
        assert!((tau_unitary(&t, 1).unwrap() / (2.0 * PI).sqrt() - 1.0).abs() < 1e-12);
        assert!((tau_unitary(&t, 2).unwrap() / (2.0 * PI) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_examples() {
        let t = CouplingVector::zero();
        assert_eq!(tau_orthogonal(&t, 0).unwrap(), 1.0);
        assert!((tau_orthogonal(&t, 2).unwrap() / PI.sqrt() - 1.0).abs() < 1e-12);
        assert!((tau_orthogonal(&t, 4).unwrap() / (PI / 2.0) - 1.0).abs() < 1e-12);
        assert!((tau_orthogonal_monomial(&t, 4).unwrap() / (PI / 2.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_multi_index_is_tau() {
        let t = CouplingVector::zero();
        let d = tau_coupling_derivative(Ensemble::Unitary, 2, &t, &BTreeMap::new(), 5e-3, None).unwrap();
        assert!((d.value / (2.0 * PI) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn order_above_four_is_rejected() {
        let mi = BTreeMap::from([(1, 3), (2, 2)]);
        let r = tau_coupling_derivative(Ensemble::Unitary, 2, &CouplingVector::zero(), &mi, 5e-3, None);
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }
}
