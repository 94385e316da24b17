//! Central finite differences with one Richardson level, for scalar
//! functions of several variables.

use crate::error::{Error, Result};

/// A Richardson-extrapolated derivative and its error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdEstimate {
    pub value: f64,
    pub error: f64,
}

/// Fornberg weights for the `order`-th derivative at 0 on the given offsets.
pub fn fornberg_weights(order: usize, offsets: &[f64]) -> Vec<f64> {
    let n = offsets.len();
    assert!(n > order, "stencil too short for derivative order {order}");
    let mut c = vec![vec![0.0; order + 1]; n];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = offsets[0];
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = offsets[i];
        for j in 0..i {
            let c3 = offsets[i] - offsets[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.iter().map(|row| row[order]).collect()
}

/// Central stencil for derivative order `p`: half-width `⌊(p+3)/2⌋`, so at
/// least `p + 3` points and fourth-order accuracy. Returns `(offset, weight)`
/// pairs with zero weights dropped; order 0 is the identity.
pub fn central_stencil(p: usize) -> Vec<(i32, f64)> {
    if p == 0 {
        return vec![(0, 1.0)];
    }
    let m = ((p + 3) / 2) as i32;
    let offs: Vec<f64> = (-m..=m).map(f64::from).collect();
    let w = fornberg_weights(p, &offs);
    (-m..=m)
        .zip(w)
        .filter(|(_, w)| w.abs() > 1e-14)
        .collect()
}

/// Tensor-product central difference of `f` at `x0` with per-axis derivative
/// `orders` and `steps`.
pub fn mixed_partial(
    f: &mut dyn FnMut(&[f64]) -> Result<f64>,
    x0: &[f64],
    orders: &[usize],
    steps: &[f64],
) -> Result<f64> {
    assert_eq!(x0.len(), orders.len());
    assert_eq!(x0.len(), steps.len());
    let stencils: Vec<Vec<(i32, f64)>> = orders.iter().map(|&p| central_stencil(p)).collect();
    let mut idx = vec![0usize; x0.len()];
    let mut x = x0.to_vec();
    let mut sum = 0.0;
    loop {
        let mut coef = 1.0;
        for (a, st) in stencils.iter().enumerate() {
            let (off, w) = st[idx[a]];
            coef *= w;
            x[a] = x0[a] + off as f64 * steps[a];
        }
        sum += coef * f(&x)?;
        let mut a = 0;
        loop {
            if a == idx.len() {
                let scale: f64 = orders
                    .iter()
                    .zip(steps)
                    .map(|(&p, &h)| h.powi(p as i32))
                    .product();
                return Ok(sum / scale);
            }
            idx[a] += 1;
            if idx[a] < stencils[a].len() {
                break;
            }
            idx[a] = 0;
            a += 1;
        }
    }
}

/// [`mixed_partial`] at steps `h` and `h/2`, combined by one Richardson
/// level for a fourth-order stencil. Fails with `StepTooLarge` when the
/// error estimate exceeds `tol`.
pub fn richardson_partial(
    f: &mut dyn FnMut(&[f64]) -> Result<f64>,
    x0: &[f64],
    orders: &[usize],
    steps: &[f64],
    tol: Option<f64>,
) -> Result<FdEstimate> {
    let coarse = mixed_partial(f, x0, orders, steps)?;
    let half: Vec<f64> = steps.iter().map(|h| 0.5 * h).collect();
    let fine = mixed_partial(f, x0, orders, &half)?;
    let value = (16.0 * fine - coarse) / 15.0;
    let error = (fine - coarse).abs() / 15.0;
    if let Some(tol) = tol {
        if error > tol {
            return Err(Error::StepTooLarge { disagreement: error, tol });
        }
    }
    Ok(FdEstimate { value, error })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classic_weights() {
        let w = fornberg_weights(2, &[-1.0, 0.0, 1.0]);
        assert!((w[0] - 1.0).abs() < 1e-14 && (w[1] + 2.0).abs() < 1e-14 && (w[2] - 1.0).abs() < 1e-14);
        let w = fornberg_weights(1, &[-2.0, -1.0, 0.0, 1.0, 2.0]);
        let expect = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn stencil_sizes() {
        assert_eq!(central_stencil(1).len(), 4);
        assert_eq!(central_stencil(2).len(), 5);
        assert_eq!(central_stencil(3).len(), 6);
        assert_eq!(central_stencil(4).len(), 7);
    }

    #[test]
    fn derivatives_of_exp() {
        for p in 1..=6 {
            let mut f = |x: &[f64]| Ok((0.5 * x[0]).exp());
            let h = if p <= 4 { 0.05 } else { 0.2 };
            let est = richardson_partial(&mut f, &[0.3], &[p], &[h], None).unwrap();
            let exact = 0.5f64.powi(p as i32) * 0.15f64.exp();
            let tol = if p <= 4 { 1e-8 } else { 1e-7 };
            assert!((est.value - exact).abs() < tol, "order {p}");
        }
    }

    #[test]
    fn mixed_polynomial_is_exact() {
        let mut f = |x: &[f64]| Ok(x[0].powi(3) * x[1].powi(2) + x[0] * x[1]);
        let d = mixed_partial(&mut f, &[0.7, -0.4], &[2, 1], &[0.1, 0.1]).unwrap();
        assert!((d - 6.0 * 0.7 * 2.0 * -0.4).abs() < 1e-11);
    }

    #[test]
    fn step_too_large_is_reported() {
        let mut f = |x: &[f64]| Ok((20.0 * x[0]).sin());
        let r = richardson_partial(&mut f, &[0.0], &[1], &[0.5], Some(1e-8));
        assert!(matches!(r, Err(Error::StepTooLarge { .. })));
    }
}
