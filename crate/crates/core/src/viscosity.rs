//! Oscillating viscosity models.
//!
//! A model evaluates a symmetric positive definite 2x2 tensor
//! `a(tau, x, y)` where `y` is the fast spatial variable on the unit
//! periodicity cell, `tau` the fast time, and `x` the slow position (used
//! only by the separable macro modulation). In the heterogeneous problem the
//! fast variables are `y = x/eps`, `tau = t/eps^2`.
//!
//! Every constructor derives a rigorous ellipticity constant `gamma` from the
//! model parameters: all eigenvalues lie in `[gamma, 1/gamma]`. The declared
//! interval can be cross-checked by quasi-random probing
//! ([`ViscosityModel::verify_ellipticity`]).

use crate::error::{Error, Result};
use crate::grid::{CoeffField, GridSpec};

use std::f64::consts::{PI, TAU};

/// Symmetric 2x2 tensor value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sym2 {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
}

impl Sym2 {
    pub fn scalar(v: f64) -> Self {
        Sym2 { a11: v, a12: 0.0, a22: v }
    }

    /// Eigenvalues (min, max).
    pub fn eig(&self) -> (f64, f64) {
        let mid = 0.5 * (self.a11 + self.a22);
        let rad = (0.25 * (self.a11 - self.a22).powi(2) + self.a12 * self.a12).sqrt();
        (mid - rad, mid + rad)
    }

    pub fn scale(&self, s: f64) -> Self {
        Sym2 { a11: s * self.a11, a12: s * self.a12, a22: s * self.a22 }
    }
}

/// The oscillation pattern. All patterns are 1-periodic in `y` (and in `tau`
/// where time-dependent) except the quasi-periodic one, which has no spatial
/// period.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    /// `a = nu I`.
    Constant { nu: f64 },
    /// Scalar part `nu (1 + amplitude cos(2 pi tau) cos(2 pi y1) cos(2 pi y2))`
    /// plus an optional off-diagonal `nu anisotropy sin(2 pi y1) sin(2 pi y2)`.
    /// Needs `amplitude + anisotropy < 1`.
    SmoothPeriodic { nu: f64, amplitude: f64, anisotropy: f64 },
    /// Scalar laminate in `y1`: smoothed two-phase profile
    /// `abar + da tanh(sin(2 pi y1)/width)` with `abar = (a_minus+a_plus)/2`,
    /// `da = (a_plus-a_minus)/2`. Time-independent.
    Layered { a_minus: f64, a_plus: f64, width: f64 },
    /// Scalar `nu (1 + amplitude cos(2 pi f0 y1) cos(2 pi f1 y2))`. With an
    /// irrational frequency ratio this is quasi-periodic: it has a mean value
    /// over large boxes but no period.
    QuasiPeriodic { nu: f64, amplitude: f64, freqs: [f64; 2] },
    /// Slow spatial modulation of a base pattern:
    /// `m(x) a_base(tau, y)` with `m(x) = 1 + amplitude sin(pi x1) sin(pi x2)`
    /// (nonnegative modulation on the unit square for `amplitude > -1`).
    SeparableMacro { base: Box<ModelKind>, amplitude: f64 },
}

impl ModelKind {
    pub fn name(&self) -> String {
        match self {
            ModelKind::Constant { .. } => "constant".into(),
            ModelKind::SmoothPeriodic { .. } => "smooth_periodic".into(),
            ModelKind::Layered { .. } => "layered".into(),
            ModelKind::QuasiPeriodic { .. } => "quasi_periodic".into(),
            ModelKind::SeparableMacro { base, .. } => {
                format!("separable_macro({})", base.name())
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| {
            Err(Error::InvalidParam { key: key.into(), msg: msg.into() })
        };
        match self {
            ModelKind::Constant { nu } => {
                if *nu <= 0.0 {
                    return bad("nu", "must be positive");
                }
            }
            ModelKind::SmoothPeriodic { nu, amplitude, anisotropy } => {
                if *nu <= 0.0 {
                    return bad("nu", "must be positive");
                }
                if *amplitude < 0.0 || *anisotropy < 0.0 {
                    return bad("amplitude", "amplitude and anisotropy must be nonnegative");
                }
                if amplitude + anisotropy >= 1.0 {
                    return bad("amplitude", "amplitude + anisotropy must be < 1 for ellipticity");
                }
            }
            ModelKind::Layered { a_minus, a_plus, width } => {
                if *a_minus <= 0.0 {
                    return bad("a_minus", "must be positive");
                }
                if a_plus < a_minus {
                    return bad("a_plus", "must be >= a_minus");
                }
                if *width <= 0.0 {
                    return bad("width", "must be positive");
                }
            }
            ModelKind::QuasiPeriodic { nu, amplitude, freqs } => {
                if *nu <= 0.0 {
                    return bad("nu", "must be positive");
                }
                if *amplitude < 0.0 || *amplitude >= 1.0 {
                    return bad("amplitude", "must be in [0, 1) for ellipticity");
                }
                if freqs[0] <= 0.0 || freqs[1] <= 0.0 {
                    return bad("freqs", "must be positive");
                }
            }
            ModelKind::SeparableMacro { base, amplitude } => {
                if *amplitude <= -1.0 {
                    return bad("amplitude", "must be > -1");
                }
                if matches!(**base, ModelKind::SeparableMacro { .. }) {
                    return bad("base", "macro modulation cannot be nested");
                }
                base.validate()?;
            }
        }
        Ok(())
    }

    /// Analytic eigenvalue range over all arguments.
    fn eig_range(&self) -> (f64, f64) {
        match self {
            ModelKind::Constant { nu } => (*nu, *nu),
            ModelKind::SmoothPeriodic { nu, amplitude, anisotropy } => {
                (nu * (1.0 - amplitude - anisotropy), nu * (1.0 + amplitude + anisotropy))
            }
            ModelKind::Layered { a_minus, a_plus, width } => {
                let abar = 0.5 * (a_minus + a_plus);
                let da = 0.5 * (a_plus - a_minus);
                let r = (1.0 / width).tanh();
                (abar - da * r, abar + da * r)
            }
            ModelKind::QuasiPeriodic { nu, amplitude, .. } => {
                (nu * (1.0 - amplitude), nu * (1.0 + amplitude))
            }
            ModelKind::SeparableMacro { base, amplitude } => {
                let (lo, hi) = base.eig_range();
                let m_lo = 1.0 + amplitude.min(0.0);
                let m_hi = 1.0 + amplitude.max(0.0);
                (lo * m_lo, hi * m_hi)
            }
        }
    }

    /// Whether the pattern depends on the fast time.
    pub fn tau_dependent(&self) -> bool {
        match self {
            ModelKind::SmoothPeriodic { amplitude, .. } => *amplitude != 0.0,
            ModelKind::SeparableMacro { base, .. } => base.tau_dependent(),
            _ => false,
        }
    }

    /// Largest frequency of the fast pattern, in oscillations per unit of
    /// `y` (zero when nothing oscillates). Sets how many grid cells an
    /// `eps`-problem needs per period.
    pub fn max_spatial_freq(&self) -> f64 {
        match self {
            ModelKind::Constant { .. } => 0.0,
            ModelKind::SmoothPeriodic { .. } | ModelKind::Layered { .. } => 1.0,
            ModelKind::QuasiPeriodic { freqs, .. } => freqs[0].max(freqs[1]),
            ModelKind::SeparableMacro { base, .. } => base.max_spatial_freq(),
        }
    }

    /// Raw tensor value (before any ellipticity bookkeeping).
    fn eval(&self, tau: f64, x: [f64; 2], y: [f64; 2]) -> Sym2 {
        match self {
            ModelKind::Constant { nu } => Sym2::scalar(*nu),
            ModelKind::SmoothPeriodic { nu, amplitude, anisotropy } => {
                let osc = (TAU * tau).cos() * (TAU * y[0]).cos() * (TAU * y[1]).cos();
                let diag = nu * (1.0 + amplitude * osc);
                let off = nu * anisotropy * (TAU * y[0]).sin() * (TAU * y[1]).sin();
                Sym2 { a11: diag, a12: off, a22: diag }
            }
            ModelKind::Layered { a_minus, a_plus, width } => {
                let abar = 0.5 * (a_minus + a_plus);
                let da = 0.5 * (a_plus - a_minus);
                Sym2::scalar(abar + da * ((TAU * y[0]).sin() / width).tanh())
            }
            ModelKind::QuasiPeriodic { nu, amplitude, freqs } => {
                let osc = (TAU * freqs[0] * y[0]).cos() * (TAU * freqs[1] * y[1]).cos();
                Sym2::scalar(nu * (1.0 + amplitude * osc))
            }
            ModelKind::SeparableMacro { base, amplitude } => {
                let m = 1.0 + amplitude * (PI * x[0]).sin() * (PI * x[1]).sin();
                base.eval(tau, x, y).scale(m)
            }
        }
    }
}

/// A validated model together with its ellipticity constant.
#[derive(Debug, Clone)]
pub struct ViscosityModel {
    kind: ModelKind,
    gamma: f64,
}

impl ViscosityModel {
    /// Validate parameters and derive `gamma` from the analytic eigenvalue
    /// range: the smallest constant with spectrum inside `[gamma, 1/gamma]`.
    pub fn new(kind: ModelKind) -> Result<Self> {
        kind.validate()?;
        let (lo, hi) = kind.eig_range();
        if lo <= 0.0 {
            return Err(Error::Ellipticity(format!(
                "model `{}` loses ellipticity: eigenvalue lower bound {lo:.3e}",
                kind.name()
            )));
        }
        let gamma = lo.min(1.0 / hi);
        Ok(ViscosityModel { kind, gamma })
    }

    /// Same, but with a caller-declared `gamma` (must still contain the
    /// analytic range).
    pub fn with_gamma(kind: ModelKind, gamma: f64) -> Result<Self> {
        kind.validate()?;
        if gamma <= 0.0 || gamma > 1.0 {
            return Err(Error::InvalidParam {
                key: "gamma".into(),
                msg: "must lie in (0, 1]".into(),
            });
        }
        let (lo, hi) = kind.eig_range();
        if lo < gamma - 1e-12 || hi > 1.0 / gamma + 1e-12 {
            return Err(Error::Ellipticity(format!(
                "declared gamma {gamma:.3e} does not contain the spectrum [{lo:.3e}, {hi:.3e}] of `{}`",
                kind.name()
            )));
        }
        Ok(ViscosityModel { kind, gamma })
    }

    pub fn constant(nu: f64) -> Result<Self> {
        Self::new(ModelKind::Constant { nu })
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn tau_dependent(&self) -> bool {
        self.kind.tau_dependent()
    }

    /// Analytic eigenvalue range over all arguments.
    pub fn eig_range(&self) -> (f64, f64) {
        self.kind.eig_range()
    }

    /// Tensor at fast time `tau`, slow position `x`, fast position `y`.
    pub fn sample(&self, tau: f64, x: [f64; 2], y: [f64; 2]) -> Sym2 {
        self.kind.eval(tau, x, y)
    }

    /// Slow spatial factor (1 unless the model is separable-macro).
    pub fn macro_factor(&self, x: [f64; 2]) -> f64 {
        match &self.kind {
            ModelKind::SeparableMacro { amplitude, .. } => {
                1.0 + amplitude * (PI * x[0]).sin() * (PI * x[1]).sin()
            }
            _ => 1.0,
        }
    }

    /// The purely fast part: what the cell problems see. For separable-macro
    /// models this strips the slow factor; otherwise it is the model itself.
    pub fn micro_model(&self) -> Result<ViscosityModel> {
        match &self.kind {
            ModelKind::SeparableMacro { base, .. } => ViscosityModel::new((**base).clone()),
            _ => Ok(self.clone()),
        }
    }

    /// Sample the fast tensor on a periodic cell grid: `y` runs over the
    /// grid's own coordinates (centers and corners). `x` is fixed slow
    /// position (irrelevant unless separable-macro — cell problems pass the
    /// micro model).
    pub fn sample_cell_coeffs(&self, g: &GridSpec, tau: f64) -> CoeffField {
        let mut a = CoeffField::identity(g);
        for i in 0..g.nx {
            for j in 0..g.ny {
                let s = self.sample(tau, [0.0, 0.0], [g.xc(i), g.yc(j)]);
                a.a11_c[[i, j]] = s.a11;
                a.a12_c[[i, j]] = s.a12;
                a.a22_c[[i, j]] = s.a22;
            }
        }
        for i in 0..g.ncx() {
            for j in 0..g.ncy() {
                let s = self.sample(tau, [0.0, 0.0], [i as f64 * g.hx(), j as f64 * g.hy()]);
                a.a11_k[[i, j]] = s.a11;
                a.a12_k[[i, j]] = s.a12;
                a.a22_k[[i, j]] = s.a22;
            }
        }
        a
    }

    /// Sample the heterogeneous coefficient `a(t/eps^2, x, x/eps)` on the
    /// macroscopic grid at time `t`.
    pub fn sample_eps_coeffs(&self, g: &GridSpec, t: f64, eps: f64) -> CoeffField {
        let tau = t / (eps * eps);
        let at = |x: [f64; 2]| self.sample(tau, x, [x[0] / eps, x[1] / eps]);
        let mut a = CoeffField::identity(g);
        for i in 0..g.nx {
            for j in 0..g.ny {
                let s = at([g.xc(i), g.yc(j)]);
                a.a11_c[[i, j]] = s.a11;
                a.a12_c[[i, j]] = s.a12;
                a.a22_c[[i, j]] = s.a22;
            }
        }
        for i in 0..g.ncx() {
            for j in 0..g.ncy() {
                let s = at([i as f64 * g.hx(), j as f64 * g.hy()]);
                a.a11_k[[i, j]] = s.a11;
                a.a12_k[[i, j]] = s.a12;
                a.a22_k[[i, j]] = s.a22;
            }
        }
        a
    }

    /// Probe eigenvalues at `n` Halton points of `(tau, x, y)` and compare
    /// with the declared interval `[gamma, 1/gamma]`.
    pub fn verify_ellipticity(&self, n: usize) -> EllipticityReport {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for k in 1..=n {
            let tau = halton(k, 2);
            let x = [halton(k, 3), halton(k, 5)];
            let y = [50.0 * halton(k, 7), 50.0 * halton(k, 11)];
            let (emin, emax) = self.sample(tau, x, y).eig();
            lo = lo.min(emin);
            hi = hi.max(emax);
        }
        EllipticityReport {
            gamma: self.gamma,
            lambda_min: lo,
            lambda_max: hi,
            samples: n,
            ok: lo >= self.gamma - 1e-12 && hi <= 1.0 / self.gamma + 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EllipticityReport {
    pub gamma: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub samples: usize,
    pub ok: bool,
}

/// Halton low-discrepancy sequence member `index` in the given prime base.
pub fn halton(mut index: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn models() -> Vec<ViscosityModel> {
        vec![
            ViscosityModel::constant(2.0).unwrap(),
            ViscosityModel::new(ModelKind::SmoothPeriodic {
                nu: 1.0,
                amplitude: 0.5,
                anisotropy: 0.2,
            })
            .unwrap(),
            ViscosityModel::new(ModelKind::Layered {
                a_minus: 1.0,
                a_plus: 2.0,
                width: 0.5,
            })
            .unwrap(),
            ViscosityModel::new(ModelKind::QuasiPeriodic {
                nu: 1.0,
                amplitude: 0.3,
                freqs: [1.0, std::f64::consts::SQRT_2],
            })
            .unwrap(),
            ViscosityModel::new(ModelKind::SeparableMacro {
                base: Box::new(ModelKind::Layered { a_minus: 1.0, a_plus: 2.0, width: 0.5 }),
                amplitude: 0.5,
            })
            .unwrap(),
        ]
    }

    #[test]
    fn probed_spectrum_stays_in_declared_interval() {
        for m in models() {
            let rep = m.verify_ellipticity(4000);
            assert!(rep.ok, "{}: {:?}", m.kind().name(), rep);
            assert!(rep.lambda_min >= rep.gamma - 1e-12);
            assert!(rep.lambda_max <= 1.0 / rep.gamma + 1e-12);
        }
    }

    #[test]
    fn over_tight_gamma_is_rejected_or_flagged() {
        // Declaring gamma = 0.99 for a model with spectrum [0.5, 1.5] must
        // fail at construction.
        let kind = ModelKind::SmoothPeriodic { nu: 1.0, amplitude: 0.5, anisotropy: 0.0 };
        assert!(matches!(
            ViscosityModel::with_gamma(kind, 0.99),
            Err(Error::Ellipticity(_))
        ));
    }

    #[test]
    fn degenerate_parameters_rejected() {
        assert!(ViscosityModel::constant(0.0).is_err());
        assert!(ViscosityModel::new(ModelKind::SmoothPeriodic {
            nu: 1.0,
            amplitude: 0.9,
            anisotropy: 0.2
        })
        .is_err());
        assert!(ViscosityModel::new(ModelKind::Layered {
            a_minus: 2.0,
            a_plus: 1.0,
            width: 0.5
        })
        .is_err());
    }

    #[test]
    fn layered_range_matches_tanh_bounds() {
        let m = ViscosityModel::new(ModelKind::Layered {
            a_minus: 1.0,
            a_plus: 2.0,
            width: 0.5,
        })
        .unwrap();
        let r = (1.0f64 / 0.5).tanh();
        let (lo_want, hi_want) = (1.5 - 0.5 * r, 1.5 + 0.5 * r);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for k in 0..20000 {
            let v = m.sample(0.0, [0.0; 2], [k as f64 / 20000.0, 0.0]).a11;
            lo = lo.min(v);
            hi = hi.max(v);
        }
        assert!((lo - lo_want).abs() < 1e-6, "{lo} vs {lo_want}");
        assert!((hi - hi_want).abs() < 1e-6, "{hi} vs {hi_want}");
    }

    #[test]
    fn separable_macro_factors() {
        let base = ModelKind::Layered { a_minus: 1.0, a_plus: 2.0, width: 0.5 };
        let m = ViscosityModel::new(ModelKind::SeparableMacro {
            base: Box::new(base.clone()),
            amplitude: 0.5,
        })
        .unwrap();
        let micro = m.micro_model().unwrap();
        let x = [0.3, 0.7];
        let y = [0.12, 0.9];
        let s_full = m.sample(0.1, x, y);
        let s_micro = micro.sample(0.1, x, y);
        let f = m.macro_factor(x);
        assert!((s_full.a11 - f * s_micro.a11).abs() < 1e-14);
        assert!((f - (1.0 + 0.5 * (PI * 0.3).sin() * (PI * 0.7).sin())).abs() < 1e-14);
    }

    #[test]
    fn cell_sampling_hits_expected_points() {
        let m = ViscosityModel::new(ModelKind::QuasiPeriodic {
            nu: 1.0,
            amplitude: 0.3,
            freqs: [1.0, 2.0],
        })
        .unwrap();
        let g = GridSpec::unit_cell(8);
        let a = m.sample_cell_coeffs(&g, 0.0);
        let want = m.sample(0.0, [0.0; 2], [g.xc(2), g.yc(5)]).a11;
        assert_eq!(a.a11_c[[2, 5]], want);
        let wantk = m.sample(0.0, [0.0; 2], [3.0 * g.hx(), 4.0 * g.hy()]).a11;
        assert_eq!(a.a11_k[[3, 4]], wantk);
    }

    #[test]
    fn tau_dependence_flags() {
        assert!(!ViscosityModel::constant(1.0).unwrap().tau_dependent());
        assert!(ViscosityModel::new(ModelKind::SmoothPeriodic {
            nu: 1.0,
            amplitude: 0.5,
            anisotropy: 0.0
        })
        .unwrap()
        .tau_dependent());
        assert!(!ViscosityModel::new(ModelKind::Layered {
            a_minus: 1.0,
            a_plus: 2.0,
            width: 0.5
        })
        .unwrap()
        .tau_dependent());
    }
}
