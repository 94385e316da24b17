//! Property tests for structural invariants of the library.

use approx::assert_relative_eq;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use taulattice::continuum::{hydro_chain_rhs, nijenhuis, ChainClosure, HydroChainField, TensorPoint};
use taulattice::export::fmt_f64;
use taulattice::flows::{volterra_rhs, VolterraState};
use taulattice::identities::{IdentityReport, Measure, OracleKind};
use taulattice::lax::{goe_lax_init_window, PfaffLax};
use taulattice::linalg::DMat;
use taulattice::pfaffian::pfaffian;
use taulattice::CouplingVector;

fn skew(dim: usize, entries: &[f64]) -> DMat {
    let mut m = DMat::zeros(dim, dim);
    let mut it = entries.iter().copied();
    for i in 0..dim {
        for j in i + 1..dim {
            let v = it.next().unwrap_or(0.0);
            m[(i, j)] = v;
            m[(j, i)] = -v;
        }
    }
    m
}

fn random_field(seed: u64, nx: usize, kneg: usize, kpos: usize) -> HydroChainField {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = HydroChainField::goe_initial(0.5, 2.0, nx, kneg, kpos).unwrap();
    for (idx, u) in f.u.iter_mut().enumerate() {
        let l = idx as i32 - kneg as i32;
        let (a, b, c) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.5..3.0));
        for (p, x) in f.x.iter().enumerate() {
            let base = if l == 0 { 1.0 + 0.5 * x } else { 0.0 };
            u[p] = base + 0.3 * (a * (c * x).sin() + b * x * x);
        }
    }
    for (p, x) in f.x.iter().enumerate() {
        f.v[p] = -0.25 + 0.1 * (2.0 * x).cos();
    }
    f
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pfaffian_squared_is_determinant(half in 1usize..7, entries in prop::collection::vec(-2.0f64..2.0, 66)) {
        let dim = 2 * half;
        let m = skew(dim, &entries);
        let pf = pfaffian(&m).unwrap();
        let det = DMatrix::from_fn(dim, dim, |i, j| m[(i, j)]).determinant();
        prop_assert!((pf * pf - det).abs() <= 1e-9 * (1.0 + det.abs()), "pf² = {} det = {}", pf * pf, det);
    }

    #[test]
    fn pfaffian_sign_under_row_col_swap(half in 1usize..5, entries in prop::collection::vec(-2.0f64..2.0, 28)) {
        let dim = 2 * half;
        let mut m = skew(dim, &entries);
        let pf = pfaffian(&m).unwrap();
        m.swap_rows(0, 1);
        m.swap_cols(0, 1);
        let swapped = pfaffian(&m).unwrap();
        prop_assert!((pf + swapped).abs() <= 1e-12 * (1.0 + pf.abs()));
    }

    #[test]
    fn nijenhuis_antisymmetric(seed in any::<u64>(), i in -7i32..=7, j in -7i32..=7, k in -7i32..=7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let point = TensorPoint::random(10, &mut rng, 3.0, 0.5, 2.0);
        let a = nijenhuis(i, j, k, &point).unwrap();
        let b = nijenhuis(i, k, j, &point).unwrap();
        prop_assert!((a + b).abs() <= 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn hydro_nonnegative_rows_ignore_negative_fields(seed in any::<u64>(), shift in -1.0f64..1.0) {
        let f = random_field(seed, 21, 4, 5);
        let mut g = f.clone();
        for l in 0..f.kneg {
            for u in g.u[l].iter_mut() {
                *u += shift * (1.0 + l as f64);
            }
        }
        let a = hydro_chain_rhs(&f, ChainClosure::Repeat, 1e6).unwrap();
        let b = hydro_chain_rhs(&g, ChainClosure::Repeat, 1e6).unwrap();
        for r in f.kneg..f.u.len() {
            prop_assert_eq!(&a.du[r], &b.du[r]);
        }
    }

    #[test]
    fn v_third_source_vanishes(seed in any::<u64>()) {
        let f = random_field(seed, 41, 3, 3);
        let r = hydro_chain_rhs(&f, ChainClosure::Repeat, 1e6).unwrap();
        let worst = r.v_third_source.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(worst <= 1e-12, "{worst}");
    }

    #[test]
    fn constant_volterra_state_is_stationary(c in 0.1f64..5.0, n in 8usize..40, flow in prop::sample::select(vec![2u8, 4, 6])) {
        let s = VolterraState::from_fn(n, |_| c);
        let d = volterra_rhs(&s, flow).unwrap();
        for site in (flow as usize / 2 + 1)..=n {
            prop_assert!(d[site - 1].abs() <= 1e-12 * c.powi(flow as i32), "site {site}: {}", d[site - 1]);
        }
    }

    #[test]
    fn report_pass_is_tolerance_comparison(abs in prop::num::f64::ANY, rel in prop::num::f64::ANY, tol in 1e-16f64..1.0, rel_measure in any::<bool>()) {
        let measure = if rel_measure { Measure::Rel } else { Measure::Abs };
        let r = IdentityReport::new("p", abs, rel, tol, measure);
        let judged = if rel_measure { rel } else { abs };
        prop_assert_eq!(r.pass, judged <= tol);
        if judged.is_nan() {
            prop_assert!(!r.pass);
        }
    }

    #[test]
    fn unknown_oracle_kinds_rejected(s in "[a-z0-9-]{0,16}") {
        let parsed = s.parse::<OracleKind>();
        prop_assert_eq!(parsed.is_ok(), s == "t1-translation" || s == "t2-scaling");
    }

    #[test]
    fn float_format_round_trips(x in prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO) {
        prop_assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn coupling_json_round_trip(pairs in prop::collection::vec((1u32..9, -1.0f64..1.0), 0..5)) {
        let t = CouplingVector::from_pairs(&pairs);
        let back: CouplingVector = serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
        prop_assert_eq!(back, t);
    }

    #[test]
    fn pfaff_lax_json_round_trip(n in 1usize..8, kpos in 1usize..5, kneg in 2usize..5) {
        let w = goe_lax_init_window(n, kpos, kneg);
        let back: PfaffLax = serde_json::from_str(&serde_json::to_string(&w).unwrap()).unwrap();
        prop_assert_eq!(back.as_slice(), w.as_slice());
    }
}

#[test]
fn pfaffian_of_block_form_is_one() {
    let m = skew(6, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    assert_relative_eq!(pfaffian(&m).unwrap(), 1.0, epsilon = 1e-15);
}
