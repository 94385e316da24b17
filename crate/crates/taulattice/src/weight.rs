//! The weight ρ(z; t) = exp(−z²/2 + Σ t_k z^k) and its coupling vectors.
//!
//! Every moment computation runs on the composite Gauss–Legendre grids built
//! here.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss::gauss_legendre;

/// Default relative quadrature tolerance.
pub const DEFAULT_TOL: f64 = 1e-12;

const GL_ORDER: usize = 20;
const INITIAL_PANELS: usize = 8;
const MAX_PANELS: usize = 1 << 15;
const INITIAL_RADIUS: f64 = 10.0;

/// Finite set of couplings `t_k`, `k ≥ 1`.
///
/// Serializes as `{"t": {"2": -0.05, "4": -0.01}}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CouplingVector {
    #[serde(rename = "t", default)]
    entries: BTreeMap<u32, f64>,
}

impl CouplingVector {
    /// The Gaussian point `t = 0`.
    pub fn zero() -> Self {
        Self::default()
    }

    /// Build from `(k, t_k)` pairs; zero entries are dropped.
    pub fn from_pairs(pairs: &[(u32, f64)]) -> Self {
        let mut c = Self::zero();
        for &(k, v) in pairs {
            c.set(k, v);
        }
        c
    }

    pub fn get(&self, k: u32) -> f64 {
        self.entries.get(&k).copied().unwrap_or(0.0)
    }

    /// Set `t_k`. Index 0 is rejected since it would only rescale ρ.
    pub fn set(&mut self, k: u32, v: f64) {
        assert!(k >= 1, "coupling indices start at 1");
        if v == 0.0 {
            self.entries.remove(&k);
        } else {
            self.entries.insert(k, v);
        }
    }

    /// Copy with `t_k` shifted by `dv`.
    pub fn shifted(&self, k: u32, dv: f64) -> Self {
        let mut c = self.clone();
        c.set(k, self.get(k) + dv);
        c
    }

    pub fn entries(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.entries.iter().map(|(&k, &v)| (k, v))
    }

    /// Highest index carrying a nonzero coupling (0 for `t = 0`).
    pub fn max_index(&self) -> u32 {
        self.entries.keys().next_back().copied().unwrap_or(0)
    }

    /// True when every odd-index coupling vanishes, so ρ is even.
    pub fn parity_even_only(&self) -> bool {
        self.entries.keys().all(|k| k % 2 == 0)
    }

    /// Check that ∫ρ is finite.
    pub fn check_integrable(&self) -> Result<()> {
        for (k, v) in self.entries() {
            if !v.is_finite() {
                return Err(Error::NonIntegrableWeight(format!("t_{k} = {v} is not finite")));
            }
        }
        let top = self.max_index();
        if top <= 2 {
            let t2 = self.get(2);
            if t2 < 0.5 {
                return Ok(());
            }
            return Err(Error::NonIntegrableWeight(format!(
                "t_2 = {t2} makes the Gaussian part non-decaying (need t_2 < 1/2)"
            )));
        }
        let lead = self.get(top);
        if top % 2 == 1 {
            return Err(Error::NonIntegrableWeight(format!(
                "highest coupling t_{top} = {lead} has odd index"
            )));
        }
        if lead > 0.0 {
            return Err(Error::NonIntegrableWeight(format!(
                "highest coupling t_{top} = {lead} is positive"
            )));
        }
        Ok(())
    }

    /// Exponent coefficients `c_k` of `log ρ = Σ c_k z^k`.
    pub fn exponent_coefficients(&self) -> Vec<f64> {
        let deg = (self.max_index() as usize).max(2);
        let mut c = vec![0.0; deg + 1];
        c[2] = -0.5;
        for (k, v) in self.entries() {
            c[k as usize] += v;
        }
        c
    }

    /// `log ρ(z; t)`.
    pub fn exponent(&self, z: f64) -> f64 {
        horner(&self.exponent_coefficients(), z)
    }
}

fn horner(c: &[f64], z: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ck| acc * z + ck)
}

/// ρ(z; t).
pub fn weight_eval(z: f64, t: &CouplingVector) -> f64 {
    t.exponent(z).exp()
}

/// Weight evaluator with cached exponent coefficients.
#[derive(Debug, Clone)]
pub struct Weight {
    coeffs: Vec<f64>,
}

impl Weight {
    pub fn new(t: &CouplingVector) -> Self {
        Self { coeffs: t.exponent_coefficients() }
    }

    pub fn log(&self, z: f64) -> f64 {
        horner(&self.coeffs, z)
    }

    pub fn eval(&self, z: f64) -> f64 {
        self.log(z).exp()
    }
}

/// Composite Gauss–Legendre rule on `[-R, R]` with equal panels.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub radius: f64,
    pub target_tol: f64,
    panels: usize,
    ref_nodes: Vec<f64>,
    ref_weights: Vec<f64>,
}

impl QuadratureGrid {
    /// Equal-panel composite rule without any adaptivity.
    pub fn uniform(radius: f64, panels: usize, target_tol: f64) -> Self {
        let (ref_nodes, ref_weights) = gauss_legendre(GL_ORDER);
        let width = 2.0 * radius / panels as f64;
        let mut nodes = Vec::with_capacity(panels * GL_ORDER);
        let mut weights = Vec::with_capacity(panels * GL_ORDER);
        for p in 0..panels {
            let a = -radius + p as f64 * width;
            let mid = a + 0.5 * width;
            for (x, w) in ref_nodes.iter().zip(&ref_weights) {
                nodes.push(mid + 0.5 * width * x);
                weights.push(0.5 * width * w);
            }
        }
        Self { nodes, weights, radius, target_tol, panels, ref_nodes, ref_weights }
    }

    pub fn panels(&self) -> usize {
        self.panels
    }

    pub fn order(&self) -> usize {
        self.ref_nodes.len()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn panel_start(&self, p: usize) -> f64 {
        -self.radius + p as f64 * self.panel_width()
    }

    fn panel_width(&self) -> f64 {
        2.0 * self.radius / self.panels as f64
    }

    /// `Σ w f(x)` over the grid.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    /// Integral of a vector-valued integrand over `[a, b]` with one
    /// Gauss–Legendre rule of the grid's order, accumulated into `out`.
    fn accumulate_segment(
        &self,
        a: f64,
        b: f64,
        f: &dyn Fn(f64, &mut [f64]),
        buf: &mut [f64],
        out: &mut [f64],
    ) {
        if b <= a {
            return;
        }
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (x, w) in self.ref_nodes.iter().zip(&self.ref_weights) {
            f(mid + half * x, buf);
            for (o, v) in out.iter_mut().zip(buf.iter()) {
                *o += half * w * v;
            }
        }
    }

    /// For a vector integrand `f(y) ∈ R^dim`, returns `(total, cum)` where
    /// `total = ∫_{-R}^{R} f` and `cum[k] = ∫_{-R}^{x_k} f` at every node.
    ///
    /// Partial panels are integrated with a fresh rule on `[a_p, x_k]`, so
    /// `f` is evaluated off-grid.
    pub fn cumulative(&self, dim: usize, f: &dyn Fn(f64, &mut [f64])) -> (Vec<f64>, Vec<Vec<f64>>) {
        let order = self.order();
        let mut buf = vec![0.0; dim];
        let mut base = vec![0.0; dim];
        let mut cum = Vec::with_capacity(self.len());
        for p in 0..self.panels {
            let a = self.panel_start(p);
            for k in 0..order {
                let idx = p * order + k;
                let mut c = base.clone();
                self.accumulate_segment(a, self.nodes[idx], f, &mut buf, &mut c);
                cum.push(c);
            }
            for k in 0..order {
                let idx = p * order + k;
                f(self.nodes[idx], &mut buf);
                for (b, v) in base.iter_mut().zip(&buf) {
                    *b += self.weights[idx] * v;
                }
            }
        }
        (base, cum)
    }

    /// `∫_{-R}^{x} f` for a scalar integrand and arbitrary `x ∈ [-R, R]`.
    pub fn integral_up_to(&self, x: f64, f: impl Fn(f64) -> f64) -> f64 {
        let x = x.clamp(-self.radius, self.radius);
        let width = self.panel_width();
        let full = (((x + self.radius) / width).floor() as usize).min(self.panels);
        let order = self.order();
        let mut s: f64 = self.nodes[..full * order]
            .iter()
            .zip(&self.weights[..full * order])
            .map(|(&y, &w)| w * f(y))
            .sum();
        let g = |y: f64, out: &mut [f64]| out[0] = f(y);
        let mut buf = [0.0];
        let mut acc = [0.0];
        self.accumulate_segment(self.panel_start(full), x, &g, &mut buf, &mut acc);
        s += acc[0];
        s
    }
}

/// Grid for integrals of `ρ(z; t)` to relative accuracy `tol`.
pub fn build_quadrature(t: &CouplingVector, tol: f64) -> Result<QuadratureGrid> {
    build_quadrature_for_degree(t, tol, 0)
}

/// Grid accurate for `p(z) ρ(z; t)` with `deg p ≤ degree`: the radius covers
/// `ρ(z)·(1 + z²)^(degree/2)` and the refinement probe uses that envelope.
pub fn build_quadrature_for_degree(t: &CouplingVector, tol: f64, degree: usize) -> Result<QuadratureGrid> {
    t.check_integrable()?;
    if !(tol > 0.0 && tol <= 1e-6) {
        return Err(Error::InvalidInput(format!("quadrature tolerance {tol:e} outside (0, 1e-6]")));
    }
    let w = Weight::new(t);
    let d = degree as f64;
    let envelope = |z: f64| w.log(z) + 0.5 * d * (1.0 + z * z).ln();
    let radius = solve_radius(&envelope, tol.ln())?;

    // The oscillating probe stands in for degree-`degree` polynomials,
    // which have at most `degree` sign changes on [-R, R].
    let omega = std::f64::consts::PI * d / radius;
    let probe = |g: &QuadratureGrid| {
        let mut s = [0.0, 0.0];
        for (&z, &wz) in g.nodes.iter().zip(&g.weights) {
            let e = envelope(z).exp();
            s[0] += wz * e;
            s[1] += wz * e * (omega * z).cos();
        }
        s
    };
    let mut panels = INITIAL_PANELS;
    let mut grid = QuadratureGrid::uniform(radius, panels, tol);
    let mut prev = probe(&grid);
    while panels < MAX_PANELS {
        panels *= 2;
        let next = QuadratureGrid::uniform(radius, panels, tol);
        let val = probe(&next);
        let change = (val[0] - prev[0]).abs().max((val[1] - prev[1]).abs()) / val[0].abs();
        grid = next;
        if change < tol {
            return Ok(grid);
        }
        prev = val;
    }
    Err(Error::ToleranceUnreachable { tol, panels: grid.panels() })
}

/// Symmetric radius `R` beyond which `phi` stays below `max φ + log_tol`.
fn solve_radius(phi: &dyn Fn(f64) -> f64, log_tol: f64) -> Result<f64> {
    const SCAN: usize = 4000;
    let mut r = INITIAL_RADIUS;
    for _ in 0..12 {
        let step = 2.0 * r / SCAN as f64;
        let samples: Vec<(f64, f64)> = (0..=SCAN)
            .map(|i| {
                let z = -r + i as f64 * step;
                (z, phi(z))
            })
            .collect();
        let peak = samples.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
        if !peak.is_finite() {
            return Err(Error::NonIntegrableWeight("weight overflows on the search interval".into()));
        }
        let level = peak + log_tol;
        if samples[0].1 >= level || samples[SCAN].1 >= level {
            r *= 2.0;
            continue;
        }
        let first = samples.iter().position(|s| s.1 >= level).unwrap_or(SCAN / 2);
        let last = samples.iter().rposition(|s| s.1 >= level).unwrap_or(SCAN / 2);
        let left = bisect(phi, level, samples[first - 1].0, samples[first].0);
        let right = bisect(phi, level, samples[last].0, samples[last + 1].0);
        return Ok(left.abs().max(right.abs()));
    }
    Err(Error::NonIntegrableWeight("tail does not decay within the radius search".into()))
}

/// Crossing of `phi = level` on `[lo, hi]` where `phi(lo) - level` and
/// `phi(hi) - level` have opposite signs.
fn bisect(phi: &dyn Fn(f64) -> f64, level: f64, mut lo: f64, mut hi: f64) -> f64 {
    let lo_above = phi(lo) >= level;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (phi(mid) >= level) == lo_above {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 * (1.0 + mid.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// `G_j(x) = ∫ sgn(y − x) y^j ρ(y) dy` at every grid node.
pub fn cumulative_weighted_moment(grid: &QuadratureGrid, t: &CouplingVector, j: u32) -> Vec<f64> {
    let w = Weight::new(t);
    let f = |y: f64, out: &mut [f64]| out[0] = y.powi(j as i32) * w.eval(y);
    let (total, cum) = grid.cumulative(1, &f);
    cum.iter().map(|c| total[0] - 2.0 * c[0]).collect()
}

/// `G_j(x)` at an arbitrary point of `[-R, R]`.
pub fn weighted_sign_moment_at(grid: &QuadratureGrid, t: &CouplingVector, j: u32, x: f64) -> f64 {
    let w = Weight::new(t);
    let f = |y: f64| y.powi(j as i32) * w.eval(y);
    let total = grid.integrate(f);
    total - 2.0 * grid.integral_up_to(x, f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn weight_examples() {
        let t0 = CouplingVector::zero();
        assert_eq!(weight_eval(0.0, &t0), 1.0);
        assert!((weight_eval(1.0, &t0) - (-0.5f64).exp()).abs() < 1e-16);
        let t2 = CouplingVector::from_pairs(&[(2, 0.1)]);
        assert!((weight_eval(2.0, &t2) - (-1.6f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn gaussian_normalizations() {
        let g = build_quadrature(&CouplingVector::zero(), 1e-12).unwrap();
        let s = g.integrate(|z| weight_eval(z, &CouplingVector::zero()));
        assert!((s / (2.0 * PI).sqrt() - 1.0).abs() < 1e-12);

        let t = CouplingVector::from_pairs(&[(2, 0.1)]);
        let g = build_quadrature(&t, 1e-12).unwrap();
        let s = g.integrate(|z| weight_eval(z, &t));
        assert!((s / (2.0 * PI / 0.8).sqrt() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn integrability_rules() {
        let bad = CouplingVector::from_pairs(&[(4, 0.1)]);
        assert!(matches!(build_quadrature(&bad, 1e-12), Err(Error::NonIntegrableWeight(_))));
        let odd = CouplingVector::from_pairs(&[(3, -0.1)]);
        assert!(odd.check_integrable().is_err());
        assert!(CouplingVector::from_pairs(&[(2, 0.5)]).check_integrable().is_err());
        assert!(CouplingVector::from_pairs(&[(2, 0.7), (4, -0.1)]).check_integrable().is_ok());
        assert!(CouplingVector::from_pairs(&[(1, 0.3), (3, 0.1), (6, -0.01)]).check_integrable().is_ok());
    }

    #[test]
    fn tolerance_range() {
        let t = CouplingVector::zero();
        assert!(matches!(build_quadrature(&t, 1e-3), Err(Error::InvalidInput(_))));
        assert!(matches!(build_quadrature(&t, 0.0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn sign_moment_examples() {
        let t = CouplingVector::zero();
        let g = build_quadrature_for_degree(&t, 1e-12, 4).unwrap();
        assert!(weighted_sign_moment_at(&g, &t, 0, 0.0).abs() < 1e-12);
        let g1 = weighted_sign_moment_at(&g, &t, 1, 0.0);
        assert!((g1 - 2.0).abs() < 1e-11, "G_1(0) = {g1}");
        let at_left = weighted_sign_moment_at(&g, &t, 1, -g.radius);
        assert!(at_left.abs() < 1e-12);
        let mu2 = (2.0 * PI).sqrt();
        assert!((weighted_sign_moment_at(&g, &t, 2, -g.radius) - mu2).abs() < 1e-11);
        assert!((weighted_sign_moment_at(&g, &t, 2, g.radius) + mu2).abs() < 1e-11);
    }

    #[test]
    fn serde_format() {
        let t: CouplingVector = serde_json::from_str(r#"{"t":{"2":-0.05,"4":-0.01}}"#).unwrap();
        assert_eq!(t.get(2), -0.05);
        assert_eq!(t.get(4), -0.01);
        assert!(t.parity_even_only());
        assert_eq!(serde_json::to_string(&t).unwrap(), r#"{"t":{"2":-0.05,"4":-0.01}}"#);
    }
}
