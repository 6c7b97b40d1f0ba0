//! Mean values of periodic and quasi-periodic functions, and two-scale
//! pairings of oscillating test functions.
//!
//! The mean value of an admissible function is approximated by midpoint
//! quadrature over growing boxes `[0, R]^d`; for genuinely quasi-periodic
//! functions the box averages converge at rate `O(1/R)`, so the schedule of
//! `R` values doubles until the requested range is covered.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct MeanValueResult {
    pub rs: Vec<f64>,
    pub means: Vec<f64>,
}

impl MeanValueResult {
    pub fn final_mean(&self) -> f64 {
        *self.means.last().unwrap()
    }

    /// Successive differences `|m_{k+1} - m_k|`: a practical convergence
    /// indicator for functions whose true mean is unknown.
    pub fn increments(&self) -> Vec<f64> {
        self.means.windows(2).map(|w| (w[1] - w[0]).abs()).collect()
    }
}

/// Midpoint-quadrature average of `f` over `[0, R]^dim` for each `R` in the
/// schedule, sampling `pts_per_unit` points per unit length per axis.
pub fn mean_value(
    f: impl Fn(&[f64]) -> f64,
    dim: usize,
    r_schedule: &[f64],
    pts_per_unit: usize,
) -> Result<MeanValueResult> {
    if !(dim == 1 || dim == 2) {
        return Err(Error::InvalidParam { key: "dim".into(), msg: "must be 1 or 2".into() });
    }
    if pts_per_unit == 0 {
        return Err(Error::InvalidParam {
            key: "pts_per_unit".into(),
            msg: "must be positive".into(),
        });
    }
    if r_schedule.is_empty() || r_schedule.iter().any(|r| *r <= 0.0) {
        return Err(Error::InvalidParam {
            key: "r_schedule".into(),
            msg: "need at least one positive radius".into(),
        });
    }
    let mut rs = Vec::new();
    let mut means = Vec::new();
    for &r in r_schedule {
        let n = ((r * pts_per_unit as f64).ceil() as usize).max(1);
        let h = r / n as f64;
        let mut acc = 0.0;
        match dim {
            1 => {
                for i in 0..n {
                    acc += f(&[(i as f64 + 0.5) * h]);
                }
                acc /= n as f64;
            }
            _ => {
                for i in 0..n {
                    let x = (i as f64 + 0.5) * h;
                    for j in 0..n {
                        acc += f(&[x, (j as f64 + 0.5) * h]);
                    }
                }
                acc /= (n * n) as f64;
            }
        }
        rs.push(r);
        means.push(acc);
    }
    Ok(MeanValueResult { rs, means })
}

/// Doubling schedule `r0, 2 r0, 4 r0, ... <= r_max` (always includes `r_max`).
pub fn doubling_schedule(r0: f64, r_max: f64) -> Vec<f64> {
    let mut rs = Vec::new();
    let mut r = r0;
    while r < r_max {
        rs.push(r);
        r *= 2.0;
    }
    rs.push(r_max);
    rs
}

/// One oscillating term
/// `amp * t^pt * x1^p1 * x2^p2 * cos(w_tau tau + w . y + phase)`,
/// where `(t, x)` are slow and `(tau, y)` fast variables.
#[derive(Debug, Clone)]
pub struct OscTerm {
    pub amp: f64,
    pub pt: u32,
    pub p1: u32,
    pub p2: u32,
    pub w_tau: f64,
    pub w: [f64; 2],
    pub phase: f64,
}

impl OscTerm {
    fn slow(&self, t: f64, x: [f64; 2]) -> f64 {
        self.amp * t.powi(self.pt as i32) * x[0].powi(self.p1 as i32) * x[1].powi(self.p2 as i32)
    }

    fn fast(&self, tau: f64, y: [f64; 2]) -> f64 {
        (self.w_tau * tau + self.w[0] * y[0] + self.w[1] * y[1] + self.phase).cos()
    }
}

/// A sum of oscillating terms: the admissible test functions for two-scale
/// pairings.
#[derive(Debug, Clone)]
pub struct TestFunction {
    pub terms: Vec<OscTerm>,
}

impl TestFunction {
    pub fn eval(&self, t: f64, x: [f64; 2], tau: f64, y: [f64; 2]) -> f64 {
        self.terms.iter().map(|c| c.slow(t, x) * c.fast(tau, y)).sum()
    }

    /// Evaluate at the oscillation scale: `tau = t/eps^2`, `y = x/eps`.
    pub fn eval_eps(&self, eps: f64, t: f64, x: [f64; 2]) -> f64 {
        self.eval(t, x, t / (eps * eps), [x[0] / eps, x[1] / eps])
    }
}

/// Space-time quadrature of `a_eps * b_eps` over `[0, t_end] x [0,lx] x [0,ly]`:
/// trapezoid in time, midpoint in space. This is the pairing whose `eps -> 0`
/// limit factorizes into slow integrals times fast mean values.
pub fn two_scale_pairing(
    a: &TestFunction,
    b: &TestFunction,
    eps: f64,
    t_end: f64,
    lx: f64,
    ly: f64,
    nt: usize,
    nx: usize,
) -> f64 {
    let dt = t_end / nt as f64;
    let (hx, hy) = (lx / nx as f64, ly / nx as f64);
    let mut acc = 0.0;
    for k in 0..=nt {
        let t = k as f64 * dt;
        let wt = if k == 0 || k == nt { 0.5 } else { 1.0 };
        let mut s = 0.0;
        for i in 0..nx {
            let x0 = (i as f64 + 0.5) * hx;
            for j in 0..nx {
                let x = [x0, (j as f64 + 0.5) * hy];
                s += a.eval_eps(eps, t, x) * b.eval_eps(eps, t, x);
            }
        }
        acc += wt * s;
    }
    acc * dt * hx * hy
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    #[test]
    fn periodic_mean_over_whole_periods_is_exact() {
        let r = mean_value(
            |y| (TAU * y[0]).cos() * (TAU * y[1]).cos() + 3.0,
            2,
            &[4.0],
            16,
        )
        .unwrap();
        assert!((r.final_mean() - 3.0).abs() < 1e-12, "{}", r.final_mean());
    }

    #[test]
    fn one_dimensional_laminate_mean() {
        // abar + da tanh(sin(2 pi y)/w): mean = abar by half-period symmetry.
        let f = |y: &[f64]| 1.5 + 0.5 * ((TAU * y[0]).sin() / 0.5).tanh();
        let r = mean_value(f, 1, &[10.0], 64).unwrap();
        assert!((r.final_mean() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn quasi_periodic_mean_converges_with_box_size() {
        let f = |y: &[f64]| {
            1.0 + 0.3 * (TAU * y[0]).cos() * (TAU * std::f64::consts::SQRT_2 * y[1]).cos()
        };
        let r = mean_value(f, 2, &doubling_schedule(4.0, 32.0), 16).unwrap();
        let errs: Vec<f64> = r.means.iter().map(|m| (m - 1.0).abs()).collect();
        assert!(
            errs.last().unwrap() < &0.02,
            "box averages {:?} should approach 1",
            r.means
        );
        assert!(
            errs.last().unwrap() <= &(errs[0] + 1e-12),
            "errors should not grow: {errs:?}"
        );
    }

    #[test]
    fn schedule_and_validation() {
        assert_eq!(doubling_schedule(4.0, 32.0), vec![4.0, 8.0, 16.0, 32.0]);
        assert_eq!(doubling_schedule(5.0, 12.0), vec![5.0, 10.0, 12.0]);
        assert!(mean_value(|_| 0.0, 3, &[1.0], 4).is_err());
        assert!(mean_value(|_| 0.0, 2, &[], 4).is_err());
        assert!(mean_value(|_| 0.0, 2, &[1.0], 0).is_err());
    }

    #[test]
    fn self_pairing_approaches_half_the_envelope_integral() {
        // psi = t x1 x2 cos(2 pi y1 + 2 pi y2); the eps -> 0 limit of the
        // self-pairing is <cos^2> = 1/2 times int t^2 x1^2 x2^2 = 1/27, i.e.
        // 1/54.
        let psi = TestFunction {
            terms: vec![OscTerm {
                amp: 1.0,
                pt: 1,
                p1: 1,
                p2: 1,
                w_tau: 0.0,
                w: [TAU, TAU],
                phase: 0.0,
            }],
        };
        let q = two_scale_pairing(&psi, &psi, 1.0 / 32.0, 1.0, 1.0, 1.0, 32, 512);
        let want = 0.5 / 27.0;
        let rel = (q - want).abs() / want;
        assert!(rel < 0.05, "pairing {q:.6e} vs {want:.6e}, rel {rel:.3e}");
    }

    #[test]
    fn time_oscillating_pairing() {
        // Pure fast-time oscillation: psi = x1 cos(2 pi tau). Self-pairing
        // limit: 1/2 int x1^2 = 1/6.
        let psi = TestFunction {
            terms: vec![OscTerm {
                amp: 1.0,
                pt: 0,
                p1: 1,
                p2: 0,
                w_tau: TAU,
                w: [0.0, 0.0],
                phase: 0.3,
            }],
        };
        let eps = 1.0 / 8.0; // tau period eps^2 = 1/64
        let q = two_scale_pairing(&psi, &psi, eps, 1.0, 1.0, 1.0, 4096, 24);
        let want = 0.5 / 3.0;
        let rel = (q - want).abs() / want;
        assert!(rel < 0.05, "pairing {q:.6e} vs {want:.6e}, rel {rel:.3e}");
    }

    #[test]
    fn cross_pairing_of_orthogonal_oscillations_decays() {
        // cos(2 pi y1) against cos(4 pi y1): fast mean of the product is 0.
        let a = TestFunction {
            terms: vec![OscTerm {
                amp: 1.0,
                pt: 0,
                p1: 0,
                p2: 0,
                w_tau: 0.0,
                w: [TAU, 0.0],
                phase: 0.0,
            }],
        };
        let b = TestFunction {
            terms: vec![OscTerm {
                amp: 1.0,
                pt: 0,
                p1: 0,
                p2: 0,
                w_tau: 0.0,
                w: [2.0 * TAU, 0.0],
                phase: 0.0,
            }],
        };
        let q = two_scale_pairing(&a, &b, 1.0 / 32.0, 1.0, 1.0, 1.0, 8, 512);
        assert!(q.abs() < 0.01, "cross pairing should vanish, got {q:.3e}");
    }
}
