//! Fixed-step RK4 and adaptive Dormand–Prince 5(4) integrators for systems
//! `y' = f(t, y)` on flat `f64` state vectors. Both integrate forward or
//! backward in time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Stepper {
    /// Classical RK4 with the largest step `≤ h` that lands on every sample.
    Rk4 { h: f64 },
    /// Dormand–Prince 5(4) with mixed error control `atol + rtol·|y|`.
    Adaptive { rtol: f64, atol: f64 },
}

impl Default for Stepper {
    fn default() -> Self {
        Stepper::Rk4 { h: 1e-3 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub h_min: f64,
    pub h_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeSolution {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub stats: StepStats,
}

impl OdeSolution {
    pub fn last(&self) -> &[f64] {
        self.states.last().expect("solution always holds the initial state")
    }
}

pub type Rhs<'a> = dyn FnMut(f64, &[f64], &mut [f64]) + 'a;

/// Integrate from `t0` and record the state at `t0` and at each of
/// `samples`, which must be strictly monotone in the direction of travel.
pub fn integrate(rhs: &mut Rhs<'_>, y0: &[f64], t0: f64, samples: &[f64], stepper: Stepper) -> Result<OdeSolution> {
    let dir = match samples.last() {
        Some(&te) if te < t0 => -1.0,
        _ => 1.0,
    };
    let mut prev = t0;
    for &s in samples {
        if (s - prev) * dir <= 0.0 {
            return Err(Error::InvalidInput("sample times must be strictly monotone".into()));
        }
        prev = s;
    }
    let mut times = vec![t0];
    let mut states = vec![y0.to_vec()];
    let mut stats = StepStats { h_min: f64::INFINITY, h_max: 0.0, ..Default::default() };
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut work = Work::new(y.len());
    let mut h_adapt: Option<f64> = None;
    for &ts in samples {
        match stepper {
            Stepper::Rk4 { h } => {
                if !(h > 0.0) {
                    return Err(Error::InvalidInput(format!("step {h} must be positive")));
                }
                let span = ts - t;
                let steps = (span.abs() / h - 1e-9).ceil().max(1.0) as usize;
                let hs = span / steps as f64;
                for i in 0..steps {
                    let ti = t + i as f64 * hs;
                    rk4_step(rhs, ti, &mut y, hs, &mut work);
                }
                stats.accepted += steps;
                stats.h_min = stats.h_min.min(hs.abs());
                stats.h_max = stats.h_max.max(hs.abs());
            }
            Stepper::Adaptive { rtol, atol } => {
                if !(rtol > 0.0 || atol > 0.0) {
                    return Err(Error::InvalidInput("adaptive tolerances must be positive".into()));
                }
                dopri_to(rhs, t, ts, &mut y, rtol, atol, &mut h_adapt, &mut stats, &mut work)?;
            }
        }
        t = ts;
        times.push(ts);
        states.push(y.clone());
    }
    if stats.h_min.is_infinite() {
        stats.h_min = 0.0;
    }
    Ok(OdeSolution { times, states, stats })
}

struct Work {
    k: Vec<Vec<f64>>,
    tmp: Vec<f64>,
}

impl Work {
    fn new(n: usize) -> Self {
        Self { k: vec![vec![0.0; n]; 7], tmp: vec![0.0; n] }
    }
}

fn rk4_step(rhs: &mut Rhs<'_>, t: f64, y: &mut [f64], h: f64, w: &mut Work) {
    let n = y.len();
    let (k, tmp) = (&mut w.k, &mut w.tmp);
    rhs(t, y, &mut k[0]);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k[0][i];
    }
    rhs(t + 0.5 * h, tmp, &mut k[1]);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k[1][i];
    }
    rhs(t + 0.5 * h, tmp, &mut k[2]);
    for i in 0..n {
        tmp[i] = y[i] + h * k[2][i];
    }
    rhs(t + h, tmp, &mut k[3]);
    for i in 0..n {
        y[i] += h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

#[allow(clippy::too_many_arguments)]
fn dopri_to(
    rhs: &mut Rhs<'_>,
    t0: f64,
    t_end: f64,
    y: &mut Vec<f64>,
    rtol: f64,
    atol: f64,
    h_state: &mut Option<f64>,
    stats: &mut StepStats,
    w: &mut Work,
) -> Result<()> {
    let n = y.len();
    let dir = (t_end - t0).signum();
    let span = (t_end - t0).abs();
    let mut t = t0;
    let mut h = h_state.unwrap_or(span.min(1e-3)).min(span);
    let mut y_new = vec![0.0; n];
    let mut fsal_valid = false;
    loop {
        let remaining = (t_end - t).abs();
        if remaining <= 1e-14 * (1.0 + t_end.abs()) {
            break;
        }
        let last = h >= remaining;
        let hs = if last { remaining } else { h };
        if hs < 1e-14 * (1.0 + t.abs()) {
            return Err(Error::StepUnderflow { t, h: hs });
        }
        let hd = dir * hs;
        if !fsal_valid {
            rhs(t, y, &mut w.k[0]);
        }
        for s in 1..7 {
            for i in 0..n {
                let mut acc = y[i];
                for (j, a) in A[s][..s].iter().enumerate() {
                    if *a != 0.0 {
                        acc += hd * a * w.k[j][i];
                    }
                }
                w.tmp[i] = acc;
            }
            rhs(t + C[s] * hd, &w.tmp, &mut w.k[s]);
            if s == 6 {
                y_new.copy_from_slice(&w.tmp);
            }
        }
        let mut err: f64 = 0.0;
        for i in 0..n {
            let mut e = 0.0;
            for s in 0..7 {
                e += (B5[s] - B4[s]) * w.k[s][i];
            }
            let sc = atol + rtol * y[i].abs().max(y_new[i].abs());
            err = err.max((hd * e).abs() / sc);
        }
        if err <= 1.0 {
            t = if last { t_end } else { t + hd };
            std::mem::swap(y, &mut y_new);
            let (first, rest) = w.k.split_at_mut(6);
            first[0].copy_from_slice(&rest[0]);
            fsal_valid = true;
            stats.accepted += 1;
            stats.h_min = stats.h_min.min(hs);
            stats.h_max = stats.h_max.max(hs);
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if !last {
                h = hs * fac;
            }
        } else {
            stats.rejected += 1;
            let fac = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.1, 0.5) } else { 0.1 };
            h = hs * fac;
            fsal_valid = true;
        }
    }
    *h_state = Some(h);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rk4_exponential() {
        let mut f = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = y[0];
        let sol = integrate(&mut f, &[1.0], 0.0, &[0.5, 1.0], Stepper::Rk4 { h: 1e-3 }).unwrap();
        assert!((sol.last()[0] - 1f64.exp()).abs() < 1e-12);
        assert_eq!(sol.times, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let run = |h: f64| {
            let mut f = |t: f64, y: &[f64], dy: &mut [f64]| dy[0] = -2.0 * t * y[0] + y[0].cos();
            integrate(&mut f, &[0.3], 0.0, &[2.0], Stepper::Rk4 { h }).unwrap().last()[0]
        };
        let exact = run(1e-4);
        let e1 = (run(0.1) - exact).abs();
        let e2 = (run(0.05) - exact).abs();
        assert!((e1 / e2 - 16.0).abs() < 2.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn adaptive_backward() {
        let mut f = |_t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[1];
            dy[1] = -y[0];
        };
        let sol = integrate(&mut f, &[0.0, 1.0], 0.0, &[-1.0, -3.0], Stepper::Adaptive { rtol: 1e-12, atol: 1e-12 }).unwrap();
        assert!((sol.last()[0] - (-3f64).sin()).abs() < 1e-10);
        assert!((sol.states[1][1] - (-1f64).cos()).abs() < 1e-10);
    }

    #[test]
    fn adaptive_underflow_on_blowup() {
        let mut f = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = y[0] * y[0];
        let r = integrate(&mut f, &[1.0], 0.0, &[2.0], Stepper::Adaptive { rtol: 1e-10, atol: 1e-10 });
        assert!(matches!(r, Err(Error::StepUnderflow { .. })));
    }

    #[test]
    fn non_monotone_samples_rejected() {
        let mut f = |_t: f64, _y: &[f64], dy: &mut [f64]| dy[0] = 0.0;
        assert!(integrate(&mut f, &[1.0], 0.0, &[0.5, 0.2], Stepper::Rk4 { h: 0.1 }).is_err());
    }
}
