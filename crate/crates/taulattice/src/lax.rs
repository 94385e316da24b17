//! Toda and Pfaff Lax data, from moments and from the closed-form Gaussian
//! initial data.
//!
//! Pfaff entries `w^ℓ_n` sit in the dense Lax matrix (1-based) at
//! `(2n−1, 2n) = 1`, `(2n, 2n+1) = w⁰_n`, `(2n+2k−1, 2n) = w^k_n` and
//! `(2n+2k−2, 2n−1) = w^{−k}_n` for `k ≥ 1`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, solve, DMat};
use crate::moments::{
    skew_gram_on_grid, skew_products, PolyBasis, SkewMomentMatrix, SymmetricMomentTable,
};
use crate::tau::{Ensemble, TauEvaluator};
use crate::weight::{build_quadrature_for_degree, CouplingVector, QuadratureGrid};

/// Tridiagonal Toda Lax data: diagonal `a_1..a_N`, off-diagonal `b_1..b_{N−1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TodaLax {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl TodaLax {
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// Volterra variables `B_n = b_n²`.
    pub fn volterra(&self) -> Vec<f64> {
        self.b.iter().map(|b| b * b).collect()
    }
}

/// Recurrence coefficients from the Cholesky factor of the Hankel matrix of
/// size `N + 1`: `b_n = L_nn / L_{n−1,n−1}` and
/// `a_n = L_{n,n−1}/L_{n−1,n−1} − L_{n−1,n−2}/L_{n−2,n−2}` (0-based `L`).
pub fn toda_lax_from_moments(table: &SymmetricMomentTable, n: usize) -> Result<TodaLax> {
    if table.mu.len() < 2 * n + 1 {
        return Err(Error::InvalidInput(format!(
            "moment table holds degree {} but N = {n} needs degree {}",
            table.mu.len() - 1,
            2 * n
        )));
    }
    let l = cholesky(&table.hankel(n + 1)).map_err(Error::IllConditioned)?;
    let ratio = |k: usize| if k == 0 { 0.0 } else { l[(k, k - 1)] / l[(k - 1, k - 1)] };
    let a = (1..=n).map(|k| ratio(k) - ratio(k - 1)).collect();
    let b = (1..n).map(|k| l[(k, k)] / l[(k - 1, k - 1)]).collect();
    Ok(TodaLax { a, b })
}

/// Same data from the Stieltjes recurrence for ρ on a quadrature grid; not
/// limited by the Hankel degree cap.
pub fn toda_lax_stieltjes(t: &CouplingVector, n: usize, tol: f64) -> Result<TodaLax> {
    let grid = build_quadrature_for_degree(t, tol, 2 * n + 2)?;
    let b = crate::moments::RecurrenceBasis::for_weight_power(&grid, t, 1.0, n)?;
    Ok(TodaLax {
        a: (0..n).map(|k| b.alpha(k)).collect(),
        b: (1..n).map(|k| b.beta(k)).collect(),
    })
}

/// Gaussian data `a_n = 0`, `b_n = √n`.
pub fn gue_lax_init(n: usize) -> TodaLax {
    TodaLax { a: vec![0.0; n], b: (1..n).map(|k| (k as f64).sqrt()).collect() }
}

/// `c_n = √(2n(2n−1))`.
pub fn c_n(n: usize) -> f64 {
    let m = 2.0 * n as f64;
    (m * (m - 1.0)).sqrt()
}

/// `ν_n = √π (2n)! / 4^n`.
pub fn nu_n(n: usize) -> f64 {
    (0.5 * PI.ln() + ln_factorial(2 * n) - 2.0 * n as f64 * 2f64.ln()).exp()
}

pub fn ln_factorial(m: usize) -> f64 {
    (2..=m).map(|i| (i as f64).ln()).sum()
}

/// Closed-form GOE entry `w^ℓ_n(0)`.
pub fn goe_entry(l: i32, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    match l {
        0 => 0.5 * c_n(n),
        -1 => 0.5,
        -2 => -0.5 * c_n(n),
        l if l < -2 => 0.0,
        k => {
            let k = k as usize;
            let ln = (k + 1) as f64 * 2f64.ln() + ln_factorial(k + n - 1) - ln_factorial(n - 1)
                + 0.5 * (ln_factorial(2 * n - 2) - ln_factorial(2 * k + 2 * n - 2));
            ln.exp()
        }
    }
}

/// Banded storage of the reduced even Pfaff Lax entries `w^ℓ_n`.
///
/// The active window is `ℓ ∈ [−K_neg, K_pos]`, `n ∈ [1, N]`. Around it the
/// store keeps ghost entries for `ℓ = −K_neg−1`, `ℓ = K_pos+1` and
/// `n ∈ (N, N + max(K_pos, K_neg) + 2]`, which flows treat as boundary data.
/// Entries at `n = 0` or outside the store read as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PfaffLax {
    n: usize,
    kpos: usize,
    kneg: usize,
    n_store: usize,
    data: Vec<f64>,
}

impl PfaffLax {
    pub fn zeros(n: usize, kpos: usize, kneg: usize) -> Self {
        let n_store = n + kpos.max(kneg) + 2;
        let width = kpos + kneg + 3;
        Self { n, kpos, kneg, n_store, data: vec![0.0; width * n_store] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kpos(&self) -> usize {
        self.kpos
    }

    pub fn kneg(&self) -> usize {
        self.kneg
    }

    /// Largest stored site index.
    pub fn n_store(&self) -> usize {
        self.n_store
    }

    pub fn l_min(&self) -> i32 {
        -(self.kneg as i32) - 1
    }

    pub fn l_max(&self) -> i32 {
        self.kpos as i32 + 1
    }

    fn slot(&self, l: i32, n: usize) -> Option<usize> {
        if n == 0 || n > self.n_store || l < self.l_min() || l > self.l_max() {
            return None;
        }
        Some((l - self.l_min()) as usize * self.n_store + (n - 1))
    }

    pub fn get(&self, l: i32, n: usize) -> f64 {
        self.slot(l, n).map_or(0.0, |s| self.data[s])
    }

    pub fn set(&mut self, l: i32, n: usize, v: f64) {
        let s = self
            .slot(l, n)
            .unwrap_or_else(|| panic!("entry ({l}, {n}) outside the stored window"));
        self.data[s] = v;
    }

    pub fn is_stored(&self, l: i32, n: usize) -> bool {
        self.slot(l, n).is_some()
    }

    pub fn is_active(&self, l: i32, n: usize) -> bool {
        n >= 1 && n <= self.n && l >= -(self.kneg as i32) && l <= self.kpos as i32
    }

    /// All stored `(ℓ, n)` pairs, ℓ-major.
    pub fn stored_indices(&self) -> Vec<(i32, usize)> {
        let mut v = Vec::with_capacity(self.data.len());
        for l in self.l_min()..=self.l_max() {
            for n in 1..=self.n_store {
                v.push((l, n));
            }
        }
        v
    }

    pub fn active_indices(&self) -> Vec<(i32, usize)> {
        self.stored_indices().into_iter().filter(|&(l, n)| self.is_active(l, n)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn from_slice(&self, data: &[f64]) -> Self {
        assert_eq!(data.len(), self.data.len());
        Self { data: data.to_vec(), ..self.clone() }
    }

    /// Flat position of a stored entry.
    pub fn flat_index(&self, l: i32, n: usize) -> Option<usize> {
        self.slot(l, n)
    }

    /// Dense `size × size` Lax matrix (0-based storage of the 1-based layout).
    pub fn dense(&self, size: usize) -> DMat {
        let mut m = DMat::zeros(size, size);
        let put = |m: &mut DMat, r: usize, c: usize, v: f64| {
            if r >= 1 && c >= 1 && r <= size && c <= size {
                m[(r - 1, c - 1)] = v;
            }
        };
        for n in 1..=size / 2 + 1 {
            put(&mut m, 2 * n - 1, 2 * n, 1.0);
            put(&mut m, 2 * n, 2 * n + 1, self.get(0, n));
            for k in 1..=self.l_max() as usize {
                put(&mut m, 2 * n + 2 * k - 1, 2 * n, self.get(k as i32, n));
            }
            for k in 1..=(-self.l_min()) as usize {
                put(&mut m, 2 * n + 2 * k - 2, 2 * n - 1, self.get(-(k as i32), n));
            }
        }
        m
    }

    /// Position `(row, col)` (1-based) of `w^ℓ_n` in the dense matrix.
    pub fn dense_position(l: i32, n: usize) -> (usize, usize) {
        match l {
            0 => (2 * n, 2 * n + 1),
            l if l > 0 => (2 * n + 2 * l as usize - 1, 2 * n),
            l => (2 * n + 2 * (-l) as usize - 2, 2 * n - 1),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct PfaffLaxJson {
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "Kpos")]
    kpos: usize,
    #[serde(rename = "Kneg", default)]
    kneg: Option<usize>,
    w: BTreeMap<String, f64>,
}

impl Serialize for PfaffLax {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let w = self
            .stored_indices()
            .into_iter()
            .map(|(l, n)| (format!("{l},{n}"), self.get(l, n)))
            .collect();
        PfaffLaxJson { n: self.n, kpos: self.kpos, kneg: Some(self.kneg), w }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for PfaffLax {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let j = PfaffLaxJson::deserialize(d)?;
        let mut p = PfaffLax::zeros(j.n, j.kpos, j.kneg.unwrap_or(j.kpos));
        for (key, v) in j.w {
            let (l, n) = key
                .split_once(',')
                .and_then(|(l, n)| Some((l.trim().parse::<i32>().ok()?, n.trim().parse::<usize>().ok()?)))
                .ok_or_else(|| D::Error::custom(format!("bad entry key {key:?}")))?;
            if !p.is_stored(l, n) {
                return Err(D::Error::custom(format!("entry ({l}, {n}) outside the window")));
            }
            p.set(l, n, v);
        }
        Ok(p)
    }
}

/// Closed-form GOE data on the full stored window (ghosts included).
pub fn goe_lax_init(n: usize, kpos: usize) -> PfaffLax {
    goe_lax_init_window(n, kpos, kpos)
}

pub fn goe_lax_init_window(n: usize, kpos: usize, kneg: usize) -> PfaffLax {
    let mut p = PfaffLax::zeros(n, kpos, kneg);
    for (l, m) in p.stored_indices() {
        p.set(l, m, goe_entry(l, m));
    }
    p
}

/// Skew-orthonormal polynomials `q_0..q_{2N−1}` as coefficient rows in a
/// polynomial basis, with monic norms `h_{2n} = ⟨Q_{2n}, Q_{2n+1}⟩`.
#[derive(Debug, Clone)]
pub struct SkewOrthoBasis {
    pub basis: PolyBasis,
    pub rows: DMat,
    pub h: Vec<f64>,
}

impl SkewOrthoBasis {
    pub fn len(&self) -> usize {
        self.rows.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.rows() == 0
    }

    /// Coefficients of `q_m` in the monomial basis.
    pub fn monomial_row(&self, m: usize) -> Vec<f64> {
        self.basis.to_monomial(self.rows.row(m))
    }

    /// `⟨q_i, q_j⟩` from the skew matrix the basis was built from.
    pub fn skew_product(&self, m: &SkewMomentMatrix, i: usize, j: usize) -> f64 {
        m.m.bilinear(self.rows.row(i), self.rows.row(j))
    }
}

/// Monic-first skew Gram–Schmidt on the first `2N` functions of `m`'s basis.
///
/// `Q_{2n}` solves `⟨Q_{2n}, f_i⟩ = 0` for `i < 2n`; `Q_{2n+1}` does the same
/// with its `z^{2n}` coefficient pinned to zero. The pair is then scaled to
/// `⟨q_{2n}, q_{2n+1}⟩ = 1`.
pub fn skew_orthonormal_basis(m: &SkewMomentMatrix, n_pairs: usize) -> Result<SkewOrthoBasis> {
    let s = 2 * n_pairs;
    if m.size() < s {
        return Err(Error::InvalidInput(format!("skew matrix of size {} cannot hold {s} polynomials", m.size())));
    }
    let mm = &m.m;
    let basis = &m.basis;
    let mut rows = DMat::zeros(s, s);
    let mut h = Vec::with_capacity(n_pairs);
    for n in 0..n_pairs {
        let e = 2 * n;
        let mut c = vec![0.0; s];
        c[e] = 1.0;
        let mut d = vec![0.0; s];
        d[e + 1] = 1.0;
        d[e] = -basis.lead(e + 1) * basis.sub_ratio(e + 1) / basis.lead(e);
        if n > 0 {
            let a = mm.leading(e);
            let rc: Vec<f64> = (0..e).map(|i| -mm[(i, e)]).collect();
            let rd: Vec<f64> = (0..e).map(|i| -(mm[(i, e + 1)] + d[e] * mm[(i, e)])).collect();
            let xc = solve(&a, &rc).ok_or(Error::SingularMinor(e))?;
            let xd = solve(&a, &rd).ok_or(Error::SingularMinor(e))?;
            c[..e].copy_from_slice(&xc);
            d[..e].copy_from_slice(&xd);
        }
        let hh = mm.bilinear(&c, &d);
        let hm = hh / (basis.lead(e) * basis.lead(e + 1));
        if !(hm > 0.0) || !hm.is_finite() {
            return Err(Error::SingularMinor(e + 2));
        }
        let sc = 1.0 / (basis.lead(e) * hm.sqrt());
        let sd = 1.0 / (basis.lead(e + 1) * hm.sqrt());
        for j in 0..s {
            rows[(e, j)] = c[j] * sc;
            rows[(e + 1, j)] = d[j] * sd;
        }
        h.push(hm);
    }
    Ok(SkewOrthoBasis { basis: basis.clone(), rows, h })
}

/// Number of basis functions needed for [`pfaff_lax_from_basis`] to fill the
/// full stored window of a `PfaffLax` with these bounds.
pub fn basis_size_for(n: usize, kpos: usize, kneg: usize) -> usize {
    let n_store = n + kpos.max(kneg) + 2;
    2 * (n_store + kpos.max(kneg) + 2)
}

/// Expansion coefficients `z q_m = Σ_j λ_{mj} q_j` for `m ≤ 2N − 2`.
pub fn multiplication_matrix(basis: &SkewOrthoBasis) -> Result<DMat> {
    let s = basis.len();
    let ct = basis.rows.transpose();
    let mut lq = DMat::zeros(s - 1, s);
    for m in 0..s - 1 {
        let e = basis.basis.times_z(&basis.rows.row(m)[..=m]);
        let mut rhs = vec![0.0; s];
        rhs[..e.len().min(s)].copy_from_slice(&e[..e.len().min(s)]);
        // rows is lower triangular, so its transpose is upper triangular.
        let mut lam = vec![0.0; s];
        for i in (0..s).rev() {
            let mut v = rhs[i];
            for j in i + 1..s {
                v -= ct[(i, j)] * lam[j];
            }
            let piv = ct[(i, i)];
            if piv == 0.0 {
                return Err(Error::SingularMinor(i));
            }
            lam[i] = v / piv;
        }
        for j in 0..s {
            lq[(m, j)] = lam[j];
        }
    }
    Ok(lq)
}

/// Read the Pfaff entries off the multiplication matrix of the basis.
/// Fails if the basis is too small for the requested stored window.
pub fn pfaff_lax_from_basis(basis: &SkewOrthoBasis, n: usize, kpos: usize, kneg: usize) -> Result<PfaffLax> {
    let need = basis_size_for(n, kpos, kneg);
    if basis.len() < need {
        return Err(Error::InvalidInput(format!(
            "basis of {} polynomials cannot fill the window (need {need})",
            basis.len()
        )));
    }
    let lq = multiplication_matrix(basis)?;
    let mut p = PfaffLax::zeros(n, kpos, kneg);
    for (l, m) in p.stored_indices() {
        p.set(l, m, read_entry(&lq, l, m));
    }
    Ok(p)
}

fn read_entry(lq: &DMat, l: i32, n: usize) -> f64 {
    match l {
        0 => lq[(2 * n - 1, 2 * n)],
        l if l > 0 => lq[(2 * (n + l as usize - 1), 2 * n - 1)],
        l => {
            let k = (-l) as usize;
            lq[(2 * n + 2 * k - 3, 2 * n - 2)]
        }
    }
}

/// Skew-orthonormal basis at couplings `t`, sized for a Pfaff window.
pub fn skew_basis_at(t: &CouplingVector, size: usize, tol: f64) -> Result<SkewOrthoBasis> {
    let grid = build_quadrature_for_degree(t, tol, size + 2)?;
    skew_basis_on_grid(&grid, t, size)
}

pub fn skew_basis_on_grid(grid: &QuadratureGrid, t: &CouplingVector, size: usize) -> Result<SkewOrthoBasis> {
    let m = skew_gram_on_grid(grid, t, size)?;
    skew_orthonormal_basis(&m, size / 2)
}

/// Pfaff Lax entries at couplings `t` built from the skew-orthonormal basis.
pub fn pfaff_lax_at(t: &CouplingVector, n: usize, kpos: usize, kneg: usize, tol: f64) -> Result<PfaffLax> {
    let basis = skew_basis_at(t, basis_size_for(n, kpos, kneg), tol)?;
    pfaff_lax_from_basis(&basis, n, kpos, kneg)
}

/// `(w⁰_n, w¹_n, w⁻¹_n)` from τ-function formulas with finite differences in
/// `t₁` and `t₂` of step `step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TauPfaffEntries {
    pub w0: f64,
    pub w1: f64,
    pub wm1: f64,
    /// Largest Richardson error estimate among the derivatives used.
    pub fd_error: f64,
}

pub fn pfaff_entries_from_tau(t: &CouplingVector, n: usize, step: f64, tol: f64) -> Result<TauPfaffEntries> {
    if n == 0 {
        return Err(Error::InvalidInput("site index starts at 1".into()));
    }
    if !t.parity_even_only() {
        return Err(Error::InvalidInput("τ formulas for w need even couplings".into()));
    }
    let ev = TauEvaluator::new(Ensemble::Orthogonal, t, 2 * n + 2, tol)?;
    pfaff_entries_with(&ev, t, n, step)
}

pub fn pfaff_entries_with(ev: &TauEvaluator, t: &CouplingVector, n: usize, step: f64) -> Result<TauPfaffEntries> {
    let tau = |size: usize| -> Result<f64> { Ok(ev.log_tau(t, size)?.exp()) };
    let (tm, t0, tp) = (tau(2 * n - 2)?, tau(2 * n)?, tau(2 * n + 2)?);
    let d11 = BTreeMap::from([(1, 2)]);
    let d2 = BTreeMap::from([(2, 1)]);
    let mut err: f64 = 0.0;
    let mut deriv = |size: usize, mi: &BTreeMap<u32, usize>| -> Result<f64> {
        if size == 0 {
            return Ok(0.0);
        }
        let e = ev.derivative(size, t, mi, step, None, false)?;
        err = err.max(e.error);
        Ok(e.value)
    };
    let a11 = deriv(2 * n, &d11)?;
    let a2 = deriv(2 * n, &d2)?;
    let b11 = deriv(2 * n - 2, &d11)?;
    let b2 = deriv(2 * n - 2, &d2)?;
    let root = (tm * tp).sqrt();
    Ok(TauPfaffEntries {
        w0: root / t0,
        w1: a11 / root,
        wm1: (a2 - a11) / (2.0 * t0) - (b2 + b11) / (2.0 * tm),
        fd_error: err,
    })
}

/// Monic Hermite polynomials for `e^{−z²}` as monomial coefficient rows,
/// from `P_{k+1} = z P_k − (k/2) P_{k−1}`.
pub fn monic_hermite(count: usize) -> Vec<Vec<f64>> {
    let mut p: Vec<Vec<f64>> = Vec::with_capacity(count);
    for k in 0..count {
        let mut row = vec![0.0; count];
        if k == 0 {
            row[0] = 1.0;
        } else {
            for j in 0..k {
                row[j + 1] += p[k - 1][j];
            }
            if k >= 2 {
                for j in 0..k - 1 {
                    row[j] -= (k - 1) as f64 / 2.0 * p[k - 2][j];
                }
            }
        }
        p.push(row);
    }
    p
}

/// Result of checking the Hermite construction of the Gaussian skew-orthogonal
/// polynomials.
#[derive(Debug, Clone, Serialize)]
pub struct SkewHermiteReport {
    pub n: usize,
    /// `⟨Q_{2k}, Q_{2k+1}⟩` for `k < N`.
    pub pair_products: Vec<f64>,
    /// Largest `|⟨Q_i, Q_j⟩ − ν δ|` over all pairs.
    pub max_violation: f64,
}

/// `Q_{2n} = P_{2n}`, `Q_{2n+1} = P_{2n+1} − n P_{2n−1}` at `t = 0`, checked
/// for `⟨Q_{2n}, Q_{2m+1}⟩ = ν_n δ_{mn}` and vanishing same-parity products.
pub fn skew_hermite_map_check(n: usize) -> Result<SkewHermiteReport> {
    let s = 2 * n;
    let t = CouplingVector::zero();
    let p = monic_hermite(s + 1);
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(s);
    for k in 0..n {
        q.push(p[2 * k][..s].to_vec());
        let mut odd = p[2 * k + 1][..s].to_vec();
        if k >= 1 {
            for (o, v) in odd.iter_mut().zip(&p[2 * k - 1][..s]) {
                *o -= k as f64 * v;
            }
        }
        q.push(odd);
    }
    let grid = build_quadrature_for_degree(&t, crate::weight::DEFAULT_TOL, s + 2)?;
    let funcs = |x: f64, out: &mut [f64]| {
        for (o, c) in out.iter_mut().zip(&q) {
            *o = c.iter().rev().fold(0.0, |acc, &ck| acc * x + ck);
        }
    };
    let m = skew_products(&grid, &t, s, &funcs);
    let mut pair_products = Vec::with_capacity(n);
    let mut max_violation: f64 = 0.0;
    for i in 0..s {
        for j in 0..s {
            let expect = if i % 2 == 0 && j == i + 1 {
                nu_n(i / 2)
            } else if j % 2 == 0 && i == j + 1 {
                -nu_n(j / 2)
            } else {
                0.0
            };
            max_violation = max_violation.max((m[(i, j)] - expect).abs());
        }
        if i % 2 == 0 {
            pair_products.push(m[(i, i + 1)]);
        }
    }
    Ok(SkewHermiteReport { n, pair_products, max_violation })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn goe_closed_form_values() {
        assert!((goe_entry(0, 1) - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((goe_entry(1, 1) - 2.0 * 2f64.sqrt()).abs() < 1e-14);
        assert!((goe_entry(2, 1) - 8.0 / 6f64.sqrt()).abs() < 1e-14);
        assert!((goe_entry(1, 2) - 4.0 / 3f64.sqrt()).abs() < 1e-14);
        assert_eq!(goe_entry(-3, 4), 0.0);
        assert_eq!(goe_entry(-1, 7), 0.5);
    }

    #[test]
    fn gue_init() {
        let l = gue_lax_init(3);
        assert_eq!(l.a, vec![0.0; 3]);
        assert!((l.b[1] - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(l.volterra()[0], 1.0);
    }

    #[test]
    fn storage_roundtrip() {
        let p = goe_lax_init_window(4, 3, 3);
        assert_eq!(p.get(0, 0), 0.0);
        assert_eq!(p.get(2, 1), goe_entry(2, 1));
        assert!(p.is_stored(4, p.n_store()) && !p.is_stored(5, 1));
        let js = serde_json::to_string(&p).unwrap();
        let back: PfaffLax = serde_json::from_str(&js).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn dense_layout() {
        let p = goe_lax_init_window(3, 2, 3);
        let d = p.dense(6);
        assert_eq!(d[(0, 1)], 1.0);
        assert_eq!(d[(1, 2)], p.get(0, 1));
        assert_eq!(d[(2, 1)], p.get(1, 1));
        assert_eq!(d[(3, 0)], p.get(-2, 1));
        assert_eq!(d[(1, 0)], p.get(-1, 1));
        for l in -3..=2 {
            let (r, c) = PfaffLax::dense_position(l, 1);
            if r <= 6 {
                assert_eq!(d[(r - 1, c - 1)], p.get(l, 1));
            }
        }
    }

    #[test]
    fn hermite_recurrence() {
        let p = monic_hermite(4);
        assert_eq!(p[3][..4], [0.0, -1.5, 0.0, 1.0]);
    }

    #[test]
    fn basis_reproduces_goe_data() {
        let p = pfaff_lax_at(&CouplingVector::zero(), 8, 6, 6, 1e-12).unwrap();
        let mut worst: f64 = 0.0;
        for n in 1..=8 {
            for l in -6..=6 {
                worst = worst.max((p.get(l, n) - goe_entry(l, n)).abs());
            }
        }
        assert!(worst < 1e-9, "max diff {worst}");
    }
}
