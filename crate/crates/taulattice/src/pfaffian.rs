//! Pfaffians of real antisymmetric matrices by Parlett–Reid skew elimination.
//!
//! Convention: the block-diagonal form with `[[0, 1], [-1, 0]]` blocks has
//! Pfaffian +1.

use crate::error::{Error, Result};
use crate::linalg::DMat;

/// Pfaffian of an even-dimensional antisymmetric matrix.
pub fn pfaffian(a: &DMat) -> Result<f64> {
    let (sign, log_abs) = log_pfaffian(a)?;
    if sign == 0.0 {
        return Ok(0.0);
    }
    Ok(sign * log_abs.exp())
}

/// `(sign, log|pf|)`; sign is 0 when the Pfaffian vanishes.
pub fn log_pfaffian(a: &DMat) -> Result<(f64, f64)> {
    let n = a.rows();
    if n != a.cols() {
        return Err(Error::InvalidInput(format!("Pfaffian of a {}x{} matrix", n, a.cols())));
    }
    if n % 2 == 1 {
        return Err(Error::OddDimension(n));
    }
    let scale = a.max_abs().max(1.0);
    let defect = a.antisymmetry_defect();
    if defect > 1e-14 * scale {
        return Err(Error::NotAntisymmetric(defect));
    }
    let mut m = a.clone();
    let mut sign = 1.0;
    let mut log_abs = 0.0;
    let mut k = 0;
    while k + 1 < n {
        let (kp, pv) = (k + 1..n)
            .map(|i| (i, m[(i, k)].abs()))
            .fold((k + 1, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if kp != k + 1 {
            m.swap_rows(k + 1, kp);
            m.swap_cols(k + 1, kp);
            sign = -sign;
        }
        if pv == 0.0 {
            return Ok((0.0, f64::NEG_INFINITY));
        }
        let piv = m[(k, k + 1)];
        sign *= piv.signum();
        log_abs += piv.abs().ln();
        if k + 2 < n {
            let tau: Vec<f64> = (k + 2..n).map(|j| m[(k, j)] / piv).collect();
            let col: Vec<f64> = (k + 2..n).map(|i| m[(i, k + 1)]).collect();
            for (ii, i) in (k + 2..n).enumerate() {
                for (jj, j) in (k + 2..n).enumerate() {
                    m[(i, j)] += tau[ii] * col[jj] - col[ii] * tau[jj];
                }
            }
        }
        k += 2;
    }
    Ok((sign, log_abs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two() {
        let a = DMat::from_rows(&[vec![0.0, 3.5], vec![-3.5, 0.0]]);
        assert_eq!(pfaffian(&a).unwrap(), 3.5);
    }

    #[test]
    fn four_by_four_cofactor() {
        let a = DMat::from_rows(&[
            vec![0.0, 1.0, 2.0, 3.0],
            vec![-1.0, 0.0, 4.0, 5.0],
            vec![-2.0, -4.0, 0.0, 6.0],
            vec![-3.0, -5.0, -6.0, 0.0],
        ]);
        assert!((pfaffian(&a).unwrap() - 8.0).abs() < 1e-13);
    }

    #[test]
    fn canonical_form_is_plus_one() {
        let mut j = DMat::zeros(6, 6);
        for b in 0..3 {
            j[(2 * b, 2 * b + 1)] = 1.0;
            j[(2 * b + 1, 2 * b)] = -1.0;
        }
        assert_eq!(pfaffian(&j).unwrap(), 1.0);
    }

    #[test]
    fn odd_dimension_is_an_error() {
        assert_eq!(pfaffian(&DMat::zeros(3, 3)), Err(Error::OddDimension(3)));
    }

    #[test]
    fn rejects_non_antisymmetric() {
        let a = DMat::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert!(matches!(pfaffian(&a), Err(Error::NotAntisymmetric(_))));
    }

    #[test]
    fn zero_pivot_gives_zero() {
        assert_eq!(pfaffian(&DMat::zeros(4, 4)).unwrap(), 0.0);
    }
}
