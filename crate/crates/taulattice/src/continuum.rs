//! Continuum limits of the lattices.
//!
//! The Hopf equation is solved by characteristics and the dispersionless
//! Toda system is available as a right-hand side. The hydrodynamic chain of
//! the even Pfaff lattice gets a method-of-lines solver along with its
//! Nijenhuis and Haantjes tensors. ε-convergence harnesses compare lattice
//! and continuum solutions.
//!
//! The chain is `∂_{t₂} u^i = Σ_j A^i_j(u) ∂_x u^j` for `i ∈ ℤ`. Every entry
//! of `A` is a small polynomial in the `u^ℓ`, stored as a list of monomials
//! with exact partial derivatives.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fd::fornberg_weights;
use crate::flows::{evolve, Lattice, ReducedChainState, VOLTERRA_GHOSTS};
use crate::identities::{IdentityReport, Measure};
use crate::lax::goe_lax_init;
use crate::ode::{integrate, Stepper};

// ---------------------------------------------------------------------------
// Hopf equation

/// Initial profile for the Hopf solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "coefficients")]
pub enum Profile {
    /// `Σ c_j x^j`.
    Polynomial(Vec<f64>),
    /// `√x`.
    Sqrt,
}

impl Profile {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Profile::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &a| acc * x + a),
            Profile::Sqrt => x.sqrt(),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Profile::Polynomial(c) => c
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (j, &a)| acc * x + j as f64 * a),
            Profile::Sqrt => 0.5 / x.sqrt(),
        }
    }
}

/// Solve `∂_t u = c u^k ∂_x u`, `u(x, 0) = u0(x)`, through the implicit
/// relation `u = u0(x + c u^k t)` at every grid point.
pub fn hopf_solve(u0: &Profile, c: f64, k: u32, x: &[f64], t: f64) -> Result<Vec<f64>> {
    let speed = |xi: f64| c * u0.eval(xi).powi(k as i32) * t;
    let slope = |xi: f64| {
        let u = u0.eval(xi);
        let du = if k == 0 { 0.0 } else { k as f64 * u.powi(k as i32 - 1) * u0.derivative(xi) };
        1.0 - c * du * t
    };
    let mut out = Vec::with_capacity(x.len());
    for &xv in x {
        if slope(xv) <= 0.0 {
            return Err(Error::PreBreakingViolated { x: xv });
        }
        // Foot of the characteristic: ξ − c u0(ξ)^k t = x.
        let f = |xi: f64| xi - speed(xi) - xv;
        let mut xi = xv + speed(xv);
        let mut converged = false;
        for _ in 0..60 {
            let s = slope(xi);
            if s <= 0.0 || !s.is_finite() {
                break;
            }
            let step = f(xi) / s;
            xi -= step;
            if step.abs() <= 1e-15 * (1.0 + xi.abs()) {
                converged = true;
                break;
            }
        }
        if !converged {
            xi = bisect_foot(&f, xv)?;
        }
        if slope(xi) <= 0.0 {
            return Err(Error::PreBreakingViolated { x: xv });
        }
        out.push(u0.eval(xi));
    }
    Ok(out)
}

fn bisect_foot(f: &dyn Fn(f64) -> f64, x: f64) -> Result<f64> {
    let mut w = 1.0 + x.abs();
    let (mut lo, mut hi) = (x - w, x + w);
    while f(lo) * f(hi) > 0.0 {
        w *= 2.0;
        lo = x - w;
        hi = x + w;
        if w > 1e12 {
            return Err(Error::PreBreakingViolated { x });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(lo) * f(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

// ---------------------------------------------------------------------------
// Spatial derivatives

/// Fourth-order first derivative on a uniform grid: five-point central
/// stencil inside, one-sided five-point stencils at the two nearest points
/// of each edge.
pub fn d_dx(f: &[f64], dx: f64) -> Vec<f64> {
    let n = f.len();
    assert!(n >= 5, "need at least five grid points");
    let c = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
    let left0 = fornberg_weights(1, &[0.0, 1.0, 2.0, 3.0, 4.0]);
    let left1 = fornberg_weights(1, &[-1.0, 0.0, 1.0, 2.0, 3.0]);
    let mut out = vec![0.0; n];
    for i in 2..n - 2 {
        out[i] = (0..5).map(|j| c[j] * f[i + j - 2]).sum::<f64>() / dx;
    }
    out[0] = (0..5).map(|j| left0[j] * f[j]).sum::<f64>() / dx;
    out[1] = (0..5).map(|j| left1[j] * f[j]).sum::<f64>() / dx;
    out[n - 1] = -(0..5).map(|j| left0[j] * f[n - 1 - j]).sum::<f64>() / dx;
    out[n - 2] = -(0..5).map(|j| left1[j] * f[n - 1 - j]).sum::<f64>() / dx;
    out
}

/// Dispersionless Toda: returns `(∂v, ∂u) = (2u ∂_x u, ½ u ∂_x v)`.
pub fn dtl_rhs(u: &[f64], v: &[f64], dx: f64) -> (Vec<f64>, Vec<f64>) {
    let ux = d_dx(u, dx);
    let vx = d_dx(v, dx);
    let dv = u.iter().zip(&ux).map(|(a, b)| 2.0 * a * b).collect();
    let du = u.iter().zip(&vx).map(|(a, b)| 0.5 * a * b).collect();
    (dv, du)
}

// ---------------------------------------------------------------------------
// The chain matrix A(u)

/// `coef · Π u^{vars}`.
#[derive(Debug, Clone, PartialEq)]
struct Monomial {
    coef: f64,
    vars: Vec<i32>,
}

/// Polynomial in the chain variables.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Poly(Vec<Monomial>);

impl Poly {
    fn term(coef: f64, vars: &[i32]) -> Self {
        Poly(vec![Monomial { coef, vars: vars.to_vec() }])
    }

    fn plus(mut self, other: Poly) -> Self {
        self.0.extend(other.0);
        self
    }

    pub fn eval(&self, u: &dyn Fn(i32) -> f64) -> f64 {
        self.0.iter().map(|m| m.coef * m.vars.iter().map(|&v| u(v)).product::<f64>()).sum()
    }

    /// Exact partial derivative in `u^p`.
    pub fn diff(&self, p: i32) -> Poly {
        let mut out = Vec::new();
        for m in &self.0 {
            let count = m.vars.iter().filter(|&&v| v == p).count();
            if count == 0 {
                continue;
            }
            let mut vars = m.vars.clone();
            let pos = vars.iter().position(|&v| v == p).expect("variable present");
            vars.remove(pos);
            out.push(Monomial { coef: m.coef * count as f64, vars });
        }
        Poly(out)
    }

    pub fn variables(&self) -> Vec<i32> {
        let mut v: Vec<i32> = self.0.iter().flat_map(|m| m.vars.iter().copied()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// Nonzero entries `(j, A^i_j)` of row `i` of the chain matrix.
pub fn chain_row(i: i32) -> Vec<(i32, Poly)> {
    let t = Poly::term;
    match i {
        0 => vec![(0, t(1.0, &[0, 1])), (1, t(1.0, &[0, 0]))],
        1 => vec![
            (0, t(2.0, &[2]).plus(t(-1.0, &[1, 1]))),
            (1, t(-1.0, &[0, 1])),
            (2, t(1.0, &[0])),
        ],
        k if k > 1 => {
            let kf = k as f64;
            vec![
                (0, t(kf + 1.0, &[k + 1]).plus(t(-(kf - 1.0), &[k - 1])).plus(t(-1.0, &[k, 1]))),
                (1, t(-1.0, &[0, k])),
                (k + 1, t(1.0, &[0])),
                (k - 1, t(1.0, &[0])),
            ]
        }
        -1 => vec![
            (0, t(1.0, &[-1, 1]).plus(t(1.0, &[-2]))),
            (1, t(1.0, &[0, -1])),
            (-2, t(1.0, &[0])),
        ],
        -2 => vec![
            (0, t(1.0, &[-2, 1]).plus(t(2.0, &[-3]))),
            (1, t(1.0, &[0, -2])),
            (-3, t(1.0, &[0])),
            (-1, t(2.0, &[0])),
        ],
        i => {
            let k = -i;
            let kf = k as f64;
            vec![
                (0, t(kf, &[-(k + 1)]).plus(t(-(kf - 2.0), &[-(k - 1)])).plus(t(1.0, &[-k, 1]))),
                (1, t(1.0, &[0, -k])),
                (-(k + 1), t(1.0, &[0])),
                (-(k - 1), t(1.0, &[0])),
            ]
        }
    }
}

// ---------------------------------------------------------------------------
// Hydrodynamic chain fields and solver

/// Ghost rule for `u^{K_pos+1}`; `u^{−K_neg−1}` is always zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase", tag = "kind", content = "value")]
pub enum ChainClosure {
    /// `u^{K+1} = u^K`.
    #[default]
    Repeat,
    /// `u^{K+1}` held at a constant.
    Constant(f64),
}

/// Fields `u^ℓ(x)` for `ℓ ∈ [−K_neg, K_pos]` and `v(x)` on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HydroChainField {
    pub x: Vec<f64>,
    pub kneg: usize,
    pub kpos: usize,
    /// `u[ℓ + K_neg]` is the field `u^ℓ`.
    pub u: Vec<Vec<f64>>,
    pub v: Vec<f64>,
    pub t: f64,
}

impl HydroChainField {
    /// Uniform grid of `nx` points on `[x_lo, x_hi]`, `x_lo > 0`, with the
    /// Gaussian data `u^{−1} = ½`, `u⁰ = x`, `u^k = 2`, `u^{−k} = 0`, `v = −¼`.
    pub fn goe_initial(x_lo: f64, x_hi: f64, nx: usize, kneg: usize, kpos: usize) -> Result<Self> {
        Self::scaling_exact(x_lo, x_hi, nx, kneg, kpos, 0.0)
    }

    /// The exact `t₂`-scaling solution at time `t`.
    pub fn scaling_exact(x_lo: f64, x_hi: f64, nx: usize, kneg: usize, kpos: usize, t: f64) -> Result<Self> {
        if !(x_lo > 0.0) || !(x_hi > x_lo) || nx < 5 {
            return Err(Error::InvalidInput(format!("grid [{x_lo}, {x_hi}] with {nx} points")));
        }
        if kneg < 2 || kpos < 1 {
            return Err(Error::InvalidInput("chain window needs K_neg ≥ 2 and K_pos ≥ 1".into()));
        }
        let dx = (x_hi - x_lo) / (nx - 1) as f64;
        let x: Vec<f64> = (0..nx).map(|i| x_lo + i as f64 * dx).collect();
        let s = 1.0 / (1.0 - 2.0 * t);
        let u = (-(kneg as i32)..=kpos as i32)
            .map(|l| match l {
                -1 => vec![0.5 * s; nx],
                0 => x.iter().map(|xv| xv * s).collect(),
                l if l > 0 => vec![2.0; nx],
                _ => vec![0.0; nx],
            })
            .collect();
        Ok(Self { x, kneg, kpos, u, v: vec![-0.25 * s; nx], t })
    }

    pub fn dx(&self) -> f64 {
        self.x[1] - self.x[0]
    }

    pub fn field(&self, l: i32) -> &[f64] {
        &self.u[(l + self.kneg as i32) as usize]
    }

    fn to_vec(&self) -> Vec<f64> {
        self.u.iter().flatten().chain(&self.v).copied().collect()
    }

    fn with_vec(&self, y: &[f64], t: f64) -> Self {
        let nx = self.x.len();
        let u = y[..self.u.len() * nx].chunks(nx).map(<[f64]>::to_vec).collect();
        Self { u, v: y[self.u.len() * nx..].to_vec(), t, ..self.clone() }
    }
}

/// Time derivatives of a [`HydroChainField`].
#[derive(Debug, Clone, PartialEq)]
pub struct HydroChainRhs {
    pub du: Vec<Vec<f64>>,
    pub dv: Vec<f64>,
    /// `u⁰ ∂_x(u⁰ U¹₁)` with `U¹₁ = 1/(2u⁰)`, evaluated numerically.
    pub v_third_source: Vec<f64>,
}

/// Chain right-hand side `∂u^i = A^i_j ∂_x u^j` for the window, plus
/// `∂v = ∂_x(u⁰u¹v) + u⁰∂_x u^{−1} + u⁰∂_x(u⁰U¹₁)`.
pub fn hydro_chain_rhs(field: &HydroChainField, closure: ChainClosure, bound: f64) -> Result<HydroChainRhs> {
    let nx = field.x.len();
    let dx = field.dx();
    let (lo, hi) = (-(field.kneg as i32), field.kpos as i32);
    for (idx, f) in field.u.iter().enumerate() {
        for &val in f {
            if !(val.abs() <= bound) {
                return Err(Error::DivergedField {
                    field: format!("u[{}]", idx as i32 + lo),
                    value: val.abs(),
                    bound,
                });
            }
        }
    }
    if let Some(&val) = field.v.iter().find(|v| !(v.abs() <= bound)) {
        return Err(Error::DivergedField { field: "v".into(), value: val.abs(), bound });
    }
    let value = |l: i32, p: usize| -> f64 {
        if l < lo {
            0.0
        } else if l > hi {
            match closure {
                ChainClosure::Repeat => field.field(hi)[p],
                ChainClosure::Constant(c) => c,
            }
        } else {
            field.field(l)[p]
        }
    };
    let ghost_hi: Vec<f64> = (0..nx).map(|p| value(hi + 1, p)).collect();
    let derivs: Vec<Vec<f64>> = field.u.iter().map(|f| d_dx(f, dx)).collect();
    let dghost = d_dx(&ghost_hi, dx);
    let deriv = |l: i32, p: usize| -> f64 {
        if l < lo {
            0.0
        } else if l > hi {
            dghost[p]
        } else {
            derivs[(l - lo) as usize][p]
        }
    };
    let rows: Vec<Vec<(i32, Poly)>> = (lo..=hi).map(chain_row).collect();
    let mut du = vec![vec![0.0; nx]; field.u.len()];
    for (r, row) in rows.iter().enumerate() {
        for p in 0..nx {
            let u = |l: i32| value(l, p);
            du[r][p] = row.iter().map(|(j, a)| a.eval(&u) * deriv(*j, p)).sum();
        }
    }
    let u0 = field.field(0);
    let flux: Vec<f64> = (0..nx).map(|p| u0[p] * value(1, p) * field.v[p]).collect();
    let dflux = d_dx(&flux, dx);
    let ratio: Vec<f64> = u0.iter().map(|&a| a * (1.0 / (2.0 * a))).collect();
    let dratio = d_dx(&ratio, dx);
    let v_third_source: Vec<f64> = (0..nx).map(|p| u0[p] * dratio[p]).collect();
    let dv = (0..nx).map(|p| dflux[p] + u0[p] * deriv(-1, p) + v_third_source[p]).collect();
    Ok(HydroChainRhs { du, dv, v_third_source })
}

/// Method-of-lines solution with RK4 and the step bound
/// `h ≤ cfl · dx / max|u⁰u¹|` taken from the initial field.
pub fn solve_hydro_chain(
    field: &HydroChainField,
    t_end: f64,
    closure: ChainClosure,
    cfl: f64,
    bound: f64,
) -> Result<HydroChainField> {
    let speed = field
        .field(0)
        .iter()
        .zip(field.field(1))
        .map(|(a, b)| (a * b).abs())
        .fold(0.0, f64::max)
        .max(1e-12);
    let h = cfl * field.dx() / speed;
    let mut failure: Option<Error> = None;
    let mut rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
        if failure.is_some() {
            dy.iter_mut().for_each(|d| *d = 0.0);
            return;
        }
        let f = field.with_vec(y, 0.0);
        match hydro_chain_rhs(&f, closure, bound) {
            Ok(r) => {
                let flat: Vec<f64> = r.du.into_iter().flatten().chain(r.dv).collect();
                dy.copy_from_slice(&flat);
            }
            Err(e) => {
                failure = Some(e);
                dy.iter_mut().for_each(|d| *d = 0.0);
            }
        }
    };
    let sol = integrate(&mut rhs, &field.to_vec(), field.t, &[t_end], Stepper::Rk4 { h })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(field.with_vec(sol.last(), t_end))
}

/// Evaluate the chain right-hand side on the reduced fields
/// `u^{−1} = W^{−1}`, `u⁰ = 2xW^{−1}`, `u^k = W^k`, `u^{−k} = 0` (k ≥ 2) and
/// read back the time derivatives of `(W^{−1}, W¹..W^K)` at the interior
/// grid point nearest `x`.
pub fn reduced_from_chain(state: &ReducedChainState, x: f64, closure: ChainClosure) -> Result<ReducedChainState> {
    let k = state.w.len();
    let nx = 9;
    let dx = 0.05;
    let x0 = x - 4.0 * dx;
    let xs: Vec<f64> = (0..nx).map(|i| x0 + i as f64 * dx).collect();
    let kneg = 3;
    let u = (-(kneg as i32)..=k as i32)
        .map(|l| match l {
            -1 => vec![state.wm1; nx],
            0 => xs.iter().map(|xv| 2.0 * xv * state.wm1).collect(),
            l if l > 0 => vec![state.w[l as usize - 1]; nx],
            _ => vec![0.0; nx],
        })
        .collect();
    let field = HydroChainField { x: xs, kneg, kpos: k, u, v: vec![0.0; nx], t: 0.0 };
    let r = hydro_chain_rhs(&field, closure, f64::INFINITY)?;
    let mid = nx / 2;
    Ok(ReducedChainState {
        wm1: r.du[kneg - 1][mid],
        w: (1..=k).map(|l| r.du[kneg + l][mid]).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HydroScalingConfig {
    pub x_lo: f64,
    pub x_hi: f64,
    pub nx: usize,
    pub kneg: usize,
    pub kpos: usize,
    pub times: Vec<f64>,
    pub closure: ChainClosure,
    pub cfl: f64,
    pub bound: f64,
    /// Grid points dropped at each end before comparing.
    pub margin: usize,
    pub tolerance: f64,
}

impl Default for HydroScalingConfig {
    fn default() -> Self {
        Self {
            x_lo: 0.5,
            x_hi: 2.0,
            nx: 61,
            kneg: 6,
            kpos: 8,
            times: vec![0.05, 0.1, 0.15],
            closure: ChainClosure::Repeat,
            cfl: 0.2,
            bound: 1e6,
            margin: 2,
            tolerance: 1e-6,
        }
    }
}

/// Method-of-lines chain solution from the Gaussian data against the exact
/// `t₂`-scaling fields, at each requested time, on interior grid points.
/// Returns the report and the solved field at the last time.
pub fn hydro_scaling_check(cfg: &HydroScalingConfig) -> Result<(IdentityReport, HydroChainField)> {
    if cfg.nx < 2 * cfg.margin + 1 {
        return Err(Error::InvalidInput(format!("{} grid points leave no interior", cfg.nx)));
    }
    let mut f = HydroChainField::goe_initial(cfg.x_lo, cfg.x_hi, cfg.nx, cfg.kneg, cfg.kpos)?;
    let mut errors = Vec::new();
    let mut scale: f64 = 0.0;
    for &t in &cfg.times {
        f = solve_hydro_chain(&f, t, cfg.closure, cfg.cfl, cfg.bound)?;
        let ex = HydroChainField::scaling_exact(cfg.x_lo, cfg.x_hi, cfg.nx, cfg.kneg, cfg.kpos, t)?;
        let interior = cfg.margin..cfg.nx - cfg.margin;
        let mut e: f64 = 0.0;
        for (a, b) in f.u.iter().chain(std::iter::once(&f.v)).zip(ex.u.iter().chain(std::iter::once(&ex.v))) {
            for p in interior.clone() {
                e = e.max((a[p] - b[p]).abs());
                scale = scale.max(b[p].abs());
            }
        }
        errors.push(e);
    }
    let worst = errors.iter().fold(0.0f64, |m, e| if e.is_nan() { f64::NAN } else { m.max(*e) });
    let mut r = IdentityReport::from_terms("hydro-scaling", worst, scale, cfg.tolerance, Measure::Abs);
    r.meta_set("times", &cfg.times);
    r.meta_set("errors", &errors);
    r.meta_set("nx", &cfg.nx);
    Ok((r, f))
}

// ---------------------------------------------------------------------------
// ε-convergence

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvergenceConfig {
    pub eps: Vec<f64>,
    pub t: f64,
    pub x_query: f64,
    pub x_hi: f64,
    /// Initial profile for the Volterra-vs-Hopf comparison.
    pub profile: Profile,
    pub tolerance_low: f64,
    pub tolerance_high: f64,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            eps: vec![1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0],
            t: 0.1,
            x_query: 0.5,
            x_hi: 2.0,
            profile: Profile::Polynomial(vec![0.0, 1.0, 0.5]),
            tolerance_low: 1.7,
            tolerance_high: 2.3,
        }
    }
}

/// Volterra `t₂` flow from `B_n(0) = u0(εn)/ε` against the Hopf solution
/// `u = u0(x + 2ut)` at `x_query`, over a halving sequence of ε. The
/// report's residual is the distance of the last error ratio from the
/// first-order band `[tolerance_low, tolerance_high]`. The Pfaff `εw⁰_n`
/// is recorded alongside, both against the hydro-chain value
/// `u⁰ = x/(1−2t)` and against `ε` times the lattice closed form.
pub fn continuum_convergence(cfg: &ConvergenceConfig) -> Result<IdentityReport> {
    if cfg.eps.len() < 2 {
        return Err(Error::InvalidInput("need at least two ε values".into()));
    }
    let exact = hopf_solve(&cfg.profile, 2.0, 1, &[cfg.x_query], cfg.t)?[0];
    let mut errors = Vec::new();
    let mut pfaff_errors = Vec::new();
    let mut pfaff_lattice_errors = Vec::new();
    for &eps in &cfg.eps {
        let n = (cfg.x_hi / eps).round() as usize;
        let site = (cfg.x_query / eps).round() as usize;
        if site == 0 || site > n || ((site as f64) * eps - cfg.x_query).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("x_query {} is not a lattice point at ε = {eps}", cfg.x_query)));
        }
        let y0: Vec<f64> = (1..=n + VOLTERRA_GHOSTS).map(|m| cfg.profile.eval(eps * m as f64) / eps).collect();
        let r = evolve(
            &Lattice::Volterra { flow: 2, n },
            &y0,
            &[cfg.t],
            Stepper::Adaptive { rtol: 1e-12, atol: 1e-12 },
            false,
        )?;
        errors.push((eps * r.last()[site - 1] - exact).abs());

        let kk = 4;
        let w0 = goe_lax_init(n, kk);
        let lat = Lattice::Pfaff { template: w0.clone() };
        let rp = evolve(&lat, w0.as_slice(), &[cfg.t], Stepper::Adaptive { rtol: 1e-12, atol: 1e-12 }, false)?;
        let w = w0.from_slice(rp.last());
        let s = 1.0 / (1.0 - 2.0 * cfg.t);
        pfaff_errors.push((eps * w.get(0, site) - cfg.x_query * s).abs());
        pfaff_lattice_errors.push((eps * w.get(0, site) - eps * 0.5 * crate::lax::c_n(site) * s).abs());
    }
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    let pfaff_ratios: Vec<f64> = pfaff_errors.windows(2).map(|w| w[0] / w[1]).collect();
    let last = *ratios.last().expect("at least one ratio");
    let distance = if last < cfg.tolerance_low {
        cfg.tolerance_low - last
    } else if last > cfg.tolerance_high {
        last - cfg.tolerance_high
    } else {
        0.0
    };
    let slope = last.log2();
    let mut rep = IdentityReport::new("volterra-hopf-convergence", distance, distance, 0.0, Measure::Abs);
    rep.meta_set("eps", &cfg.eps);
    rep.meta_set("errors", &errors);
    rep.meta_set("ratios", &ratios);
    rep.meta_set("observed_order", &slope);
    rep.meta_set("band", &[cfg.tolerance_low, cfg.tolerance_high]);
    rep.meta_set("pfaff_w0_errors", &pfaff_errors);
    rep.meta_set("pfaff_w0_ratios", &pfaff_ratios);
    rep.meta_set("pfaff_w0_vs_scaled_closed_form", &pfaff_lattice_errors);
    rep.meta_set("t", &cfg.t);
    rep.meta_set("x_query", &cfg.x_query);
    Ok(rep)
}

// ---------------------------------------------------------------------------
// Nijenhuis and Haantjes tensors

/// A point `u^{−K..K}` of the truncated chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorPoint {
    pub k: usize,
    /// `u[ℓ + K]` is `u^ℓ`.
    pub u: Vec<f64>,
}

impl TensorPoint {
    pub fn new(k: usize, u: Vec<f64>) -> Result<Self> {
        if u.len() != 2 * k + 1 {
            return Err(Error::InvalidInput(format!("expected {} values, got {}", 2 * k + 1, u.len())));
        }
        Ok(Self { k, u })
    }

    pub fn get(&self, l: i32) -> f64 {
        let k = self.k as i32;
        if l < -k || l > k {
            0.0
        } else {
            self.u[(l + k) as usize]
        }
    }

    /// Largest admissible `|index|` for tensor components.
    pub fn guard(&self) -> i32 {
        self.k as i32 - 3
    }

    /// Seeded random point with `|u^ℓ| ≤ amp` and `u⁰ ∈ [u0_lo, u0_hi]`.
    pub fn random(k: usize, rng: &mut ChaCha8Rng, amp: f64, u0_lo: f64, u0_hi: f64) -> Self {
        let mut u: Vec<f64> = (0..2 * k + 1).map(|_| rng.random_range(-amp..=amp)).collect();
        u[k] = rng.random_range(u0_lo..=u0_hi);
        Self { k, u }
    }
}

/// `A`, `∂_p A` and the full Nijenhuis tensor on the truncated window.
#[derive(Debug, Clone)]
pub struct TensorTables {
    k: usize,
    a: Vec<f64>,
    da: Vec<f64>,
    nij: Vec<f64>,
}

impl TensorTables {
    pub fn new(point: &TensorPoint) -> Self {
        let k = point.k as i32;
        let n = (2 * k + 1) as usize;
        let at = |i: i32| (i + k) as usize;
        let mut a = vec![0.0; n * n];
        let mut da = vec![0.0; n * n * n];
        let u = |l: i32| point.get(l);
        for i in -k..=k {
            for (j, poly) in chain_row(i) {
                if j < -k || j > k {
                    continue;
                }
                a[at(i) * n + at(j)] += poly.eval(&u);
                for p in poly.variables() {
                    if p < -k || p > k {
                        continue;
                    }
                    da[(at(i) * n + at(j)) * n + at(p)] += poly.diff(p).eval(&u);
                }
            }
        }
        let mut nij = vec![0.0; n * n * n];
        for i in 0..n {
            for j in 0..n {
                for kk in 0..n {
                    let mut s = 0.0;
                    for p in 0..n {
                        s += a[p * n + j] * da[(i * n + kk) * n + p] - a[p * n + kk] * da[(i * n + j) * n + p]
                            - a[i * n + p] * (da[(p * n + kk) * n + j] - da[(p * n + j) * n + kk]);
                    }
                    nij[(i * n + j) * n + kk] = s;
                }
            }
        }
        Self { k: point.k, a, da, nij }
    }

    fn n(&self) -> usize {
        2 * self.k + 1
    }

    fn at(&self, i: i32) -> usize {
        (i + self.k as i32) as usize
    }

    fn check(&self, i: i32, j: i32, k: i32) -> Result<()> {
        let g = self.k as i32 - 3;
        if i.abs() > g || j.abs() > g || k.abs() > g {
            return Err(Error::IndexOutOfWindow { i, j, k, limit: g });
        }
        Ok(())
    }

    /// `A^i_j`.
    pub fn a(&self, i: i32, j: i32) -> f64 {
        self.a[self.at(i) * self.n() + self.at(j)]
    }

    /// `∂A^i_j/∂u^p`.
    pub fn da(&self, i: i32, j: i32, p: i32) -> f64 {
        let n = self.n();
        self.da[(self.at(i) * n + self.at(j)) * n + self.at(p)]
    }

    pub fn nijenhuis(&self, i: i32, j: i32, k: i32) -> Result<f64> {
        self.check(i, j, k)?;
        Ok(self.nij_raw(self.at(i), self.at(j), self.at(k)))
    }

    fn nij_raw(&self, i: usize, j: usize, k: usize) -> f64 {
        let n = self.n();
        self.nij[(i * n + j) * n + k]
    }

    pub fn haantjes(&self, i: i32, j: i32, k: i32) -> Result<f64> {
        self.check(i, j, k)?;
        let n = self.n();
        let (i, j, k) = (self.at(i), self.at(j), self.at(k));
        let a = |r: usize, c: usize| self.a[r * n + c];
        let mut h = 0.0;
        for p in 0..n {
            for r in 0..n {
                let apj = a(p, j);
                let ark = a(r, k);
                let aip = a(i, p);
                h += self.nij_raw(i, p, r) * apj * ark - self.nij_raw(p, j, r) * aip * ark
                    - self.nij_raw(p, r, k) * aip * a(r, j)
                    + self.nij_raw(p, j, k) * a(i, r) * a(r, p);
            }
        }
        Ok(h)
    }
}

pub fn nijenhuis(i: i32, j: i32, k: i32, point: &TensorPoint) -> Result<f64> {
    TensorTables::new(point).nijenhuis(i, j, k)
}

pub fn haantjes(i: i32, j: i32, k: i32, point: &TensorPoint) -> Result<f64> {
    TensorTables::new(point).haantjes(i, j, k)
}

/// The listed nonzero Nijenhuis components `𝒩^i_{jk}` with `j < k`
/// reachable for row `i`, each with its closed form.
pub fn nijenhuis_closed_forms(i: i32, point: &TensorPoint) -> Vec<((i32, i32), f64)> {
    let u = |l: i32| point.get(l);
    let (u0, u1) = (u(0), u(1));
    let mut out = Vec::new();
    let mut push = |j: i32, k: i32, v: f64| {
        if j < k {
            out.push(((j, k), v));
        } else {
            out.push(((k, j), -v));
        }
    };
    if i.abs() > 2 {
        let n01 = if i > 2 {
            u0 * ((i - 1) as f64 * u(i - 1) - (i + 1) as f64 * u(i + 1))
        } else {
            u0 * (i as f64 * u(i - 1) - (i + 2) as f64 * u(i + 1))
        };
        push(0, 1, n01);
        push(0, i, -4.0 * u0);
        push(0, i + 1, u0 * u1);
        push(0, i - 1, u0 * u1);
        push(1, i + 1, u0 * u0);
        push(1, i - 1, u0 * u0);
        return out;
    }
    match i {
        2 => {
            push(0, 1, u0 * (2.0 * u1 - 3.0 * u(3)));
            push(0, 2, -4.0 * u0);
            push(0, 3, u0 * u1);
            push(1, 3, u0 * u0);
        }
        1 => {
            push(0, 2, u0 * u1);
            push(1, 2, u0 * u0);
            push(0, 1, -2.0 * u0 * (2.0 + u(2)));
        }
        -1 => {
            push(0, -1, -4.0 * u0);
            push(0, -2, u0 * u1);
            push(1, -2, u0 * u0);
            push(0, 1, -u0 * u(-2));
        }
        -2 => {
            push(0, -2, -4.0 * u0);
            push(0, -3, u0 * u1);
            push(1, -3, u0 * u0);
            push(0, 1, -2.0 * u0 * u(-3));
            push(-1, 1, -2.0 * u0 * u0);
            push(0, -1, 2.0 * u0 * u1);
        }
        _ => {}
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HaantjesScanConfig {
    pub k: usize,
    pub points: usize,
    pub seed: u64,
    pub amplitude: f64,
    pub u0_range: [f64; 2],
    pub tolerance: f64,
    pub closed_form_tolerance: f64,
}

impl Default for HaantjesScanConfig {
    fn default() -> Self {
        Self {
            k: 10,
            points: 100,
            seed: 20240607,
            amplitude: 3.0,
            u0_range: [0.5, 2.0],
            tolerance: 1e-9,
            closed_form_tolerance: 1e-10,
        }
    }
}

/// Scan `ℋ^i_{jk}` over the guarded window at seeded random points, and
/// compare every listed nonzero `𝒩^i_{jk}` with its closed form. Returns the
/// Haantjes report followed by the Nijenhuis closed-form report, which also
/// records the largest component outside the list and the antisymmetry
/// defect.
pub fn haantjes_scan(cfg: &HaantjesScanConfig) -> Result<Vec<IdentityReport>> {
    if cfg.k < 10 {
        return Err(Error::InvalidInput(format!("haantjes scan needs K ≥ 10, got {}", cfg.k)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let g = cfg.k as i32 - 3;
    let mut max_h: f64 = 0.0;
    let mut max_n: f64 = 0.0;
    let mut closed_err: f64 = 0.0;
    let mut closed_scale: f64 = 0.0;
    let mut closed_checked = 0usize;
    let mut unlisted: f64 = 0.0;
    let mut antisym: f64 = 0.0;
    let mut n0: f64 = 0.0;
    for _ in 0..cfg.points {
        let pt = TensorPoint::random(cfg.k, &mut rng, cfg.amplitude, cfg.u0_range[0], cfg.u0_range[1]);
        let tab = TensorTables::new(&pt);
        for i in -g..=g {
            let listed = nijenhuis_closed_forms(i, &pt);
            for ((j, k), v) in &listed {
                if j.abs() <= g && k.abs() <= g {
                    closed_err = closed_err.max((tab.nijenhuis(i, *j, *k)? - v).abs());
                    closed_scale = closed_scale.max(v.abs());
                    closed_checked += 1;
                }
            }
            for j in -g..=g {
                for k in -g..=g {
                    let nv = tab.nijenhuis(i, j, k)?;
                    antisym = antisym.max((nv + tab.nijenhuis(i, k, j)?).abs());
                    if i == 0 {
                        n0 = n0.max(nv.abs());
                    }
                    if j < k {
                        if !listed.iter().any(|((a, b), _)| *a == j && *b == k) {
                            unlisted = unlisted.max(nv.abs());
                        }
                        max_h = max_h.max(tab.haantjes(i, j, k)?.abs());
                        max_n = max_n.max(nv.abs());
                    }
                }
            }
        }
    }
    let rel = if max_n > 0.0 { max_h / max_n } else { max_h };
    let mut h = IdentityReport::new("haantjes-vanishing", max_h, rel, cfg.tolerance, Measure::Abs);
    h.meta_set("K", &cfg.k);
    h.meta_set("guard", &g);
    h.meta_set("points", &cfg.points);
    h.meta_set("seed", &cfg.seed);
    h.meta_set("max_nijenhuis", &max_n);
    let crel = if closed_scale > 0.0 { closed_err / closed_scale } else { closed_err };
    let mut nrep =
        IdentityReport::new("nijenhuis-closed-forms", closed_err, crel, cfg.closed_form_tolerance, Measure::Abs);
    nrep.meta_set("checked", &closed_checked);
    nrep.meta_set("unlisted_max", &unlisted);
    nrep.meta_set("row0_max", &n0);
    nrep.meta_set("antisymmetry_defect", &antisym);
    nrep.meta_set("points", &cfg.points);
    nrep.meta_set("seed", &cfg.seed);
    Ok(vec![h, nrep])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hopf_linear_profile() {
        let x = [0.5, 1.0, 2.0];
        let u = hopf_solve(&Profile::Polynomial(vec![0.0, 1.0]), 2.0, 1, &x, 0.2).unwrap();
        for (a, b) in u.iter().zip(&x) {
            assert!((a - b / 0.6).abs() < 1e-13);
        }
        let c = hopf_solve(&Profile::Polynomial(vec![1.5]), 2.0, 1, &x, 0.3).unwrap();
        assert!(c.iter().all(|v| *v == 1.5));
        let r = hopf_solve(&Profile::Polynomial(vec![0.0, 1.0]), 2.0, 1, &x, 0.6);
        assert!(matches!(r, Err(Error::PreBreakingViolated { .. })));
    }

    #[test]
    fn dtl_example() {
        let x: Vec<f64> = (0..41).map(|i| 1.0 + 0.025 * i as f64).collect();
        let u: Vec<f64> = x.iter().map(|v| v.sqrt()).collect();
        let (dv, du) = dtl_rhs(&u, &vec![0.0; 41], 0.025);
        assert!(dv.iter().all(|d| (d - 1.0).abs() < 1e-6));
        assert!(du.iter().all(|d| *d == 0.0));
    }

    #[test]
    fn chain_on_scaling_solution() {
        let t = 0.1;
        let f = HydroChainField::scaling_exact(0.5, 2.0, 31, 4, 6, t).unwrap();
        let r = hydro_chain_rhs(&f, ChainClosure::Constant(2.0), 1e6).unwrap();
        let s = 1.0 / (1.0 - 2.0 * t);
        for (p, x) in f.x.iter().enumerate() {
            assert!((r.du[4][p] - 2.0 * x * s * s).abs() < 1e-12);
            assert!((r.du[3][p] - s * s).abs() < 1e-12);
            for k in 1..=6 {
                assert!(r.du[4 + k][p].abs() < 1e-12);
            }
            assert!((r.dv[p] - 2.0 * f.v[p] * s).abs() < 1e-12);
        }
    }

    #[test]
    fn reduced_system_from_chain() {
        let st = ReducedChainState { wm1: 0.7, w: vec![1.9, 2.3, 2.1, 1.7] };
        let a = reduced_from_chain(&st, 1.0, ChainClosure::Constant(2.0)).unwrap();
        let b = crate::flows::reduced_chain_rhs(&st, crate::flows::ReducedClosure::Constant(2.0)).unwrap();
        assert!((a.wm1 - b.wm1).abs() < 1e-12);
        for (x, y) in a.w.iter().zip(&b.w) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn nijenhuis_examples() {
        let mut u = vec![0.0; 21];
        u[10] = 0.5;
        let p = TensorPoint::new(10, u).unwrap();
        assert!((nijenhuis(4, 0, 4, &p).unwrap() + 2.0).abs() < 1e-14);
        let mut u = vec![0.0; 21];
        u[10] = 1.0;
        u[11] = 1.0;
        u[13] = 1.0;
        let p = TensorPoint::new(10, u).unwrap();
        assert!((nijenhuis(2, 0, 1, &p).unwrap() + 1.0).abs() < 1e-14);
        assert!(matches!(nijenhuis(8, 0, 1, &p), Err(Error::IndexOutOfWindow { .. })));
    }
}
