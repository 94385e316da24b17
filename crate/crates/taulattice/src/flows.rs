//! Right-hand sides of the lattice flows and a common evolution driver.
//!
//! Every lattice is semi-infinite to the right. States carry a few ghost
//! sites past the active window; ghosts have zero time derivative, so they
//! stay pinned at their initial values. [`evolve`] can rerun the system with
//! perturbed ghosts to locate the sites the pinned boundary has reached.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lax::{PfaffLax, TodaLax};
use crate::linalg::DMat;
use crate::ode::{integrate, StepStats, Stepper};

/// Toda flow `t₁` or `t₂` on the tridiagonal data. The last diagonal entry
/// `a_N` and the last off-diagonal entry `b_{N−1}` are boundary data with
/// zero derivative; `b_0 = 0`.
pub fn toda_rhs(state: &TodaLax, flow: u8) -> Result<TodaLax> {
    let n = state.len();
    let a = |k: usize| if k >= 1 && k <= n { state.a[k - 1] } else { 0.0 };
    let b = |k: usize| if k >= 1 && k < n { state.b[k - 1] } else { 0.0 };
    let mut da = vec![0.0; n];
    let mut db = vec![0.0; n.saturating_sub(1)];
    match flow {
        1 => {
            for k in 1..n {
                da[k - 1] = b(k).powi(2) - b(k - 1).powi(2);
            }
            for k in 1..n.saturating_sub(1) {
                db[k - 1] = 0.5 * b(k) * (a(k + 1) - a(k));
            }
        }
        2 => {
            for k in 1..n {
                da[k - 1] = (a(k) + a(k + 1)) * b(k).powi(2) - (a(k - 1) + a(k)) * b(k - 1).powi(2);
            }
            for k in 1..n.saturating_sub(1) {
                db[k - 1] = 0.5
                    * b(k)
                    * (b(k + 1).powi(2) - b(k - 1).powi(2) + a(k + 1).powi(2) - a(k).powi(2));
            }
        }
        f => return Err(Error::InvalidInput(format!("Toda flow {f} is not available (use 1 or 2)"))),
    }
    Ok(TodaLax { a: da, b: db })
}

/// Ghost sites stored past the active Volterra window, enough for flow 6.
pub const VOLTERRA_GHOSTS: usize = 3;

/// Volterra variables `B_1..B_{N+3}`, of which the last three are ghosts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolterraState {
    #[serde(rename = "B")]
    pub b: Vec<f64>,
    #[serde(rename = "N")]
    pub n: usize,
}

impl VolterraState {
    /// `B_n = f(n)` on the active window and the ghosts.
    pub fn from_fn(n: usize, f: impl Fn(usize) -> f64) -> Self {
        Self { b: (1..=n + VOLTERRA_GHOSTS).map(f).collect(), n }
    }

    pub fn from_toda(lax: &TodaLax) -> Self {
        let b = lax.volterra();
        let n = b.len().saturating_sub(VOLTERRA_GHOSTS);
        Self { b, n }
    }

    pub fn get(&self, k: i64) -> f64 {
        if k >= 1 && (k as usize) <= self.b.len() {
            self.b[k as usize - 1]
        } else {
            0.0
        }
    }
}

fn volterra_v(b: &dyn Fn(i64) -> f64, flow: u8, k: i64) -> f64 {
    if k < 1 {
        return 0.0;
    }
    let v4 = |m: i64| if m < 1 { 0.0 } else { b(m) * (b(m - 1) + b(m) + b(m + 1)) };
    match flow {
        2 => b(k),
        4 => v4(k),
        _ => b(k) * (b(k - 1) * b(k + 1) + v4(k - 1) + v4(k) + v4(k + 1)),
    }
}

/// `∂B_n = B_n (V_{n+1} − V_{n−1})` for flow `2`, `4` or `6`, with `B_0 = 0`.
pub fn volterra_rhs(state: &VolterraState, flow: u8) -> Result<Vec<f64>> {
    let mut out = vec![0.0; state.b.len()];
    volterra_rhs_into(&state.b, state.n, flow, &mut out)?;
    Ok(out)
}

fn volterra_rhs_into(b: &[f64], n: usize, flow: u8, out: &mut [f64]) -> Result<()> {
    if !matches!(flow, 2 | 4 | 6) {
        return Err(Error::InvalidInput(format!("Volterra flow {flow} is not available (use 2, 4 or 6)")));
    }
    let get = |k: i64| if k >= 1 && (k as usize) <= b.len() { b[k as usize - 1] } else { 0.0 };
    for (i, o) in out.iter_mut().enumerate() {
        let k = i as i64 + 1;
        *o = if i < n {
            get(k) * (volterra_v(&get, flow, k + 1) - volterra_v(&get, flow, k - 1))
        } else {
            0.0
        };
    }
    Ok(())
}

/// Right-hand side of the reduced even Pfaff chain under `t₂`, for one entry.
pub fn pfaff_chain_entry(w: &PfaffLax, l: i32, n: usize) -> f64 {
    let g = |l: i32, m: usize| w.get(l, m);
    let p = |m: usize| g(0, m) * g(1, m);
    let nm1 = n.saturating_sub(1);
    match l {
        l if l <= -2 => {
            let k = (-l) as usize;
            0.5 * g(l, n) * (p(n) - p(nm1) + p(n + k - 1) - p(n + k - 2))
                + g(l + 1, n + 1) * g(0, n)
                - g(l + 1, n) * g(0, n + k - 2)
                + g(l - 1, n) * g(0, n + k - 1)
                - g(l - 1, nm1) * g(0, nm1)
        }
        -1 => {
            g(-1, n) * (p(n) - p(nm1)) + g(0, n) * (g(0, n) + g(-2, n))
                - g(0, nm1) * (g(0, nm1) + g(-2, nm1))
        }
        0 => 0.5 * g(0, n) * (p(n + 1) - p(nm1)) + g(0, n) * (g(-1, n + 1) - g(-1, n)),
        1 => 0.5 * g(1, n) * (p(nm1) - p(n + 1)) + g(0, n + 1) * g(2, n) - g(0, nm1) * g(2, nm1),
        k => {
            let k = k as usize;
            0.5 * g(l, n) * (p(nm1) - p(n) + p(n + k - 1) - p(n + k))
                + g(l + 1, n) * g(0, n + k)
                - g(l + 1, nm1) * g(0, nm1)
                + g(l - 1, n + 1) * g(0, n)
                - g(l - 1, n) * g(0, n + k - 1)
        }
    }
}

/// The `ℓ = −1` entry with the sign of the last term flipped
/// (`+ w⁰_{n−1}(…)`). Kept only to show that this variant disagrees with the
/// commutator form.
pub fn pfaff_chain_entry_m1_flipped(w: &PfaffLax, n: usize) -> f64 {
    let g = |l: i32, m: usize| w.get(l, m);
    let p = |m: usize| g(0, m) * g(1, m);
    let nm1 = n.saturating_sub(1);
    g(-1, n) * (p(n) - p(nm1)) + g(0, n) * (g(0, n) + g(-2, n)) + g(0, nm1) * (g(0, nm1) + g(-2, nm1))
}

/// Derivative of every stored entry: the chain on the active window, zero on
/// ghosts.
pub fn pfaff_chain_rhs(state: &PfaffLax) -> PfaffLax {
    let mut d = PfaffLax::zeros(state.n(), state.kpos(), state.kneg());
    for (l, n) in state.active_indices() {
        d.set(l, n, pfaff_chain_entry(state, l, n));
    }
    d
}

fn pfaff_chain_rhs_into(template: &PfaffLax, y: &[f64], out: &mut [f64]) {
    let w = template.from_slice(y);
    out.iter_mut().for_each(|o| *o = 0.0);
    for (l, n) in w.active_indices() {
        let i = w.flat_index(l, n).expect("active entries are stored");
        out[i] = pfaff_chain_entry(&w, l, n);
    }
}

/// Skew block projection `A_− − J A_+ᵀ J + ½(A₀ − J A₀ᵀ J)` on 2×2 blocks.
pub fn t_projection(a: &DMat) -> DMat {
    let d = a.rows();
    let j = |i: usize, k: usize| -> f64 {
        if i / 2 != k / 2 || i == k {
            0.0
        } else if i % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    };
    // (J Bᵀ J)[r][c] = Σ J[r][p] B[q][p] J[q][c] with J nonzero only on the
    // partner index, so it is a signed transpose with partner swaps.
    let partner = |i: usize| i ^ 1;
    let jbtj = |b: &dyn Fn(usize, usize) -> f64, r: usize, c: usize| -> f64 {
        let (p, q) = (partner(r), partner(c));
        if p >= d || q >= d {
            return 0.0;
        }
        j(r, p) * b(q, p) * j(q, c)
    };
    let blk = |i: usize, k: usize| (i / 2) as i64 - (k / 2) as i64;
    let ap = |i: usize, k: usize| if blk(i, k) < 0 { a[(i, k)] } else { 0.0 };
    let a0 = |i: usize, k: usize| if blk(i, k) == 0 { a[(i, k)] } else { 0.0 };
    DMat::from_fn(d, d, |r, c| {
        let lower = if blk(r, c) > 0 { a[(r, c)] } else { 0.0 };
        lower - jbtj(&ap, r, c) + 0.5 * (a0(r, c) - jbtj(&a0, r, c))
    })
}

/// Derivative read back from the dense commutator form.
#[derive(Debug, Clone)]
pub struct CommutatorRhs {
    pub derivative: PfaffLax,
    /// Entries whose dense position lies in the interior of the truncation.
    pub covered: Vec<(i32, usize)>,
    /// Largest commutator entry off the Pfaff structure in the interior.
    pub off_structure: f64,
}

/// `−[(L²)_𝔱, L]` on the dense `size × size` embedding of the state.
pub fn pfaff_commutator_rhs(state: &PfaffLax, size: usize) -> Result<CommutatorRhs> {
    if size % 2 != 0 {
        return Err(Error::OddDimension(size));
    }
    let l = state.dense(size);
    let l2 = l.matmul(&l);
    let p = t_projection(&l2);
    let dl = l.matmul(&p).sub(&p.matmul(&l));
    let band = 2 * (state.kpos().max(state.kneg()) + 1) + 1;
    let limit = size.saturating_sub(2 * band);
    let scale = 1.0 + l.max_abs().powi(3);
    let mut off_structure: f64 = 0.0;
    for r in 1..=limit {
        for c in 1..=limit {
            let structural = (r > c && (r - c) % 2 == 1) || (c == r + 1 && r % 2 == 0);
            if structural {
                continue;
            }
            let v = dl[(r - 1, c - 1)];
            off_structure = off_structure.max(v.abs());
            if v.abs() > 1e-11 * scale {
                return Err(Error::StructureViolation { row: r, col: c, value: v });
            }
        }
    }
    let mut derivative = PfaffLax::zeros(state.n(), state.kpos(), state.kneg());
    let mut covered = Vec::new();
    for (lv, n) in state.active_indices() {
        let (r, c) = PfaffLax::dense_position(lv, n);
        if r <= limit && c <= limit {
            derivative.set(lv, n, dl[(r - 1, c - 1)]);
            covered.push((lv, n));
        }
    }
    Ok(CommutatorRhs { derivative, covered, off_structure })
}

/// Ghost rule for the top moment of the reduced chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase", tag = "kind", content = "value")]
pub enum ReducedClosure {
    /// `W^{K+1} = W^K`.
    #[default]
    Repeat,
    /// `W^{K+1}` held at a fixed value.
    Constant(f64),
}

/// Reduced one-dimensional chain: `W^{−1}` followed by `W¹..W^K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedChainState {
    #[serde(rename = "Wm1")]
    pub wm1: f64,
    #[serde(rename = "W")]
    pub w: Vec<f64>,
}

impl ReducedChainState {
    /// Gaussian data `W^{−1} = ½`, `W^k = 2`.
    pub fn goe(k: usize) -> Self {
        Self { wm1: 0.5, w: vec![2.0; k] }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        std::iter::once(self.wm1).chain(self.w.iter().copied()).collect()
    }

    pub fn from_slice(y: &[f64]) -> Self {
        Self { wm1: y[0], w: y[1..].to_vec() }
    }
}

/// `∂W^{−1} = 2(W^{−1})² W¹`, `∂W^k = 2W^{−1}((k+1)W^{k+1} − W¹W^k − (k−1)W^{k−1})`.
pub fn reduced_chain_rhs(state: &ReducedChainState, closure: ReducedClosure) -> Result<ReducedChainState> {
    if state.w.len() < 2 {
        return Err(Error::InvalidInput("reduced chain needs K ≥ 2".into()));
    }
    let y = state.to_vec();
    let mut dy = vec![0.0; y.len()];
    reduced_rhs_into(&y, closure, &mut dy);
    Ok(ReducedChainState::from_slice(&dy))
}

fn reduced_rhs_into(y: &[f64], closure: ReducedClosure, out: &mut [f64]) {
    let kmax = y.len() - 1;
    let wm1 = y[0];
    let w = |k: usize| -> f64 {
        if k == 0 {
            0.0
        } else if k <= kmax {
            y[k]
        } else {
            match closure {
                ReducedClosure::Repeat => y[kmax],
                ReducedClosure::Constant(c) => c,
            }
        }
    };
    out[0] = 2.0 * wm1 * wm1 * w(1);
    for k in 1..=kmax {
        let kf = k as f64;
        out[k] = 2.0 * wm1 * ((kf + 1.0) * w(k + 1) - w(1) * w(k) - (kf - 1.0) * w(k - 1));
    }
}

/// Geometry of an evolvable lattice. The flat state layouts are:
/// Toda `[a_1..a_N, b_1..b_{N−1}]`, Volterra `B_1..B_{N+3}`, Pfaff the
/// stored entries of the template (ℓ-major), reduced `[W^{−1}, W¹..W^K]`.
#[derive(Debug, Clone)]
pub enum Lattice {
    Toda { flow: u8, n: usize },
    Volterra { flow: u8, n: usize },
    Pfaff { template: PfaffLax },
    Reduced { k: usize, closure: ReducedClosure },
}

impl Lattice {
    pub fn dim(&self) -> usize {
        match self {
            Lattice::Toda { n, .. } => 2 * n - 1,
            Lattice::Volterra { n, .. } => n + VOLTERRA_GHOSTS,
            Lattice::Pfaff { template } => template.as_slice().len(),
            Lattice::Reduced { k, .. } => k + 1,
        }
    }

    /// Column names of the state components.
    pub fn labels(&self) -> Vec<String> {
        match self {
            Lattice::Toda { n, .. } => (1..=*n)
                .map(|k| format!("a[{k}]"))
                .chain((1..*n).map(|k| format!("b[{k}]")))
                .collect(),
            Lattice::Volterra { n, .. } => (1..=n + VOLTERRA_GHOSTS).map(|k| format!("B[{k}]")).collect(),
            Lattice::Pfaff { template } => {
                template.stored_indices().iter().map(|(l, n)| format!("w[{l}][{n}]")).collect()
            }
            Lattice::Reduced { k, .. } => {
                std::iter::once("W[-1]".to_string()).chain((1..=*k).map(|j| format!("W[{j}]"))).collect()
            }
        }
    }

    /// Site index `n` of each component and whether it is a right-boundary
    /// ghost. The reduced chain has no sites.
    pub fn sites(&self) -> Vec<Option<(usize, bool)>> {
        match self {
            Lattice::Toda { n, .. } => (1..=*n)
                .map(|k| Some((k, k == *n)))
                .chain((1..*n).map(|k| Some((k, k == n - 1))))
                .collect(),
            Lattice::Volterra { n, .. } => (1..=n + VOLTERRA_GHOSTS).map(|k| Some((k, k > *n))).collect(),
            Lattice::Pfaff { template } => {
                template.stored_indices().iter().map(|&(_, m)| Some((m, m > template.n()))).collect()
            }
            Lattice::Reduced { .. } => vec![None; self.dim()],
        }
    }

    /// Time derivative of the flat state.
    pub fn rhs(&self, y: &[f64], out: &mut [f64]) {
        match self {
            Lattice::Toda { flow, n } => {
                let lax = TodaLax { a: y[..*n].to_vec(), b: y[*n..].to_vec() };
                let d = toda_rhs(&lax, *flow).expect("flow validated by Lattice::validate");
                out[..*n].copy_from_slice(&d.a);
                out[*n..].copy_from_slice(&d.b);
            }
            Lattice::Volterra { flow, n } => {
                volterra_rhs_into(y, *n, *flow, out).expect("flow validated by Lattice::validate")
            }
            Lattice::Pfaff { template } => pfaff_chain_rhs_into(template, y, out),
            Lattice::Reduced { closure, .. } => reduced_rhs_into(y, *closure, out),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Lattice::Toda { flow, n } if !matches!(flow, 1 | 2) || *n < 2 => {
                Err(Error::InvalidInput(format!("Toda flow {flow} with N = {n}")))
            }
            Lattice::Volterra { flow, n } if !matches!(flow, 2 | 4 | 6) || *n < 1 => {
                Err(Error::InvalidInput(format!("Volterra flow {flow} with N = {n}")))
            }
            Lattice::Reduced { k, .. } if *k < 2 => Err(Error::InvalidInput("reduced chain needs K ≥ 2".into())),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvolutionResult {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub labels: Vec<String>,
    pub stats: StepStats,
    /// Lowest non-ghost site whose value moved by more than `1e-12·(1+|v|)`
    /// when the ghosts were perturbed, over all samples. `None` if no site
    /// was reached or tracking was off.
    pub boundary_front: Option<usize>,
}

impl EvolutionResult {
    pub fn last(&self) -> &[f64] {
        self.states.last().expect("result always holds the initial state")
    }

    /// Largest site index untouched by the right boundary.
    pub fn clean_sites(&self, n: usize) -> usize {
        self.boundary_front.map_or(n, |f| f.saturating_sub(1).min(n))
    }
}

/// Evolve `lattice` from `y0` and sample at `samples` (monotone, may run
/// backward). With `track_boundary` the run is repeated with every ghost `g`
/// replaced by `2g + 1` to locate [`EvolutionResult::boundary_front`].
pub fn evolve(
    lattice: &Lattice,
    y0: &[f64],
    samples: &[f64],
    stepper: Stepper,
    track_boundary: bool,
) -> Result<EvolutionResult> {
    lattice.validate()?;
    if y0.len() != lattice.dim() {
        return Err(Error::InvalidInput(format!(
            "state has {} components, lattice expects {}",
            y0.len(),
            lattice.dim()
        )));
    }
    let mut f = |_t: f64, y: &[f64], dy: &mut [f64]| lattice.rhs(y, dy);
    let sol = integrate(&mut f, y0, 0.0, samples, stepper)?;
    let sites = lattice.sites();
    let mut boundary_front = None;
    if track_boundary && sites.iter().any(|s| matches!(s, Some((_, true)))) {
        let shadow0: Vec<f64> = y0
            .iter()
            .zip(&sites)
            .map(|(&v, s)| if matches!(s, Some((_, true))) { 2.0 * v + 1.0 } else { v })
            .collect();
        let shadow = integrate(&mut f, &shadow0, 0.0, samples, stepper)?;
        for (a, b) in sol.states.iter().zip(&shadow.states) {
            for ((x, y), s) in a.iter().zip(b).zip(&sites) {
                if let Some((n, false)) = s {
                    if !((x - y).abs() <= 1e-12 * (1.0 + x.abs())) {
                        boundary_front = Some(boundary_front.map_or(*n, |f: usize| f.min(*n)));
                    }
                }
            }
        }
    }
    Ok(EvolutionResult {
        times: sol.times,
        states: sol.states,
        labels: lattice.labels(),
        stats: sol.stats,
        boundary_front,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lax::{c_n, goe_entry, goe_lax_init, gue_lax_init};

    #[test]
    fn toda_gue_translation() {
        let d = toda_rhs(&gue_lax_init(10), 1).unwrap();
        for k in 0..9 {
            assert!((d.a[k] - 1.0).abs() < 1e-14);
        }
        assert!(d.b.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn volterra_examples() {
        let s = VolterraState::from_fn(20, |k| k as f64);
        let d2 = volterra_rhs(&s, 2).unwrap();
        let d4 = volterra_rhs(&s, 4).unwrap();
        for k in 1..=20 {
            let n = k as f64;
            assert!((d2[k - 1] - 2.0 * n).abs() < 1e-12);
            assert!((d4[k - 1] - 12.0 * n * n).abs() < 1e-9);
        }
        assert!(volterra_rhs(&s, 3).is_err());
    }

    #[test]
    fn pfaff_goe_examples() {
        let w = goe_lax_init(10, 6);
        for n in 1..=10 {
            assert!((pfaff_chain_entry(&w, -1, n) - 1.0).abs() < 1e-12);
            assert!((pfaff_chain_entry(&w, 0, n) - c_n(n)).abs() < 1e-11);
        }
        assert!(pfaff_chain_entry(&w, 1, 1).abs() < 1e-12);
        assert!((goe_entry(1, 1) - 2.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn commutator_matches_chain_at_goe() {
        let w = goe_lax_init(20, 4);
        let c = pfaff_commutator_rhs(&w, 40).unwrap();
        assert!(!c.covered.is_empty());
        for &(l, n) in &c.covered {
            let a = c.derivative.get(l, n);
            let b = pfaff_chain_entry(&w, l, n);
            assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()), "({l},{n}): {a} vs {b}");
        }
    }

    #[test]
    fn reduced_goe() {
        let d = reduced_chain_rhs(&ReducedChainState::goe(6), ReducedClosure::Constant(2.0)).unwrap();
        assert!((d.wm1 - 1.0).abs() < 1e-15);
        assert!(d.w.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn volterra_scaling_with_front() {
        let n = 64;
        let s = VolterraState::from_fn(n, |k| k as f64);
        let r = evolve(&Lattice::Volterra { flow: 2, n }, &s.b, &[0.2], Stepper::Rk4 { h: 1e-3 }, true).unwrap();
        let front = r.boundary_front.unwrap();
        assert!(front > 10 && front < n, "front {front}");
        for k in 1..r.clean_sites(n) {
            assert!((r.last()[k - 1] - k as f64 / 0.6).abs() < 1e-8, "site {k}");
        }
    }
}
