//! Periodic vector-valued cell problems and the effective viscosity tensor.
//!
//! For each unit strain `r^{(j,l)}` (component `l` given unit gradient in
//! direction `j`) we solve on the unit periodicity cell:
//!
//! ```text
//! -div( A (r + grad eta) ) + grad pi = 0,   div eta = 0,   eta periodic, mean zero,
//! ```
//!
//! where the 2x2 tensor `A(tau, y)` acts on the gradient of each velocity
//! component separately. The effective tensor is the 4-index array
//!
//! ```text
//! ahat_{ij}^{kl} = < A (r^{(j,l)} + grad eta^{(j,l)}) : (r^{(i,k)} + grad eta^{(i,k)}) >_Y
//! ```
//!
//! (cell mean), averaged over the fast time when `A` depends on it. Entries
//! are stored as a 4x4 matrix over slots `s(dir, comp) = 2 dir + comp`.
//!
//! The solver is an Uzawa iteration: the momentum solve decouples into two
//! scalar variable-coefficient elliptic solves (preconditioned CG with an
//! exact constant-coefficient FFT preconditioner), and the pressure is
//! corrected with the divergence residual scaled by the optimal constant
//! Schur preconditioner `2/(1/a_min + 1/a_max)`. Constant coefficients
//! converge in a single outer iteration with `eta = 0`.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{
    self, avg_corner_to_center, corner_weight, divergence, dot_vec, grad_ux, grad_uy, gradient,
    l2_cell, l2_vec, scatter_center_to_corner, scatter_dc_ux, scatter_dc_uy, scatter_dk_ux,
    scatter_dk_uy, CellField, CoeffField, GridSpec, VecField,
};
use crate::spectral::Solver;
use crate::viscosity::ViscosityModel;

/// Unit strain: component `comp` has unit gradient in direction `dir`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitStrain {
    pub dir: usize,
    pub comp: usize,
}

impl UnitStrain {
    pub fn slot(&self) -> usize {
        2 * self.dir + self.comp
    }
}

/// All four strains in slot order.
pub const STRAINS: [UnitStrain; 4] = [
    UnitStrain { dir: 0, comp: 0 },
    UnitStrain { dir: 0, comp: 1 },
    UnitStrain { dir: 1, comp: 0 },
    UnitStrain { dir: 1, comp: 1 },
];

#[derive(Debug, Clone, Copy)]
pub struct CellProblemCfg {
    /// Cells per axis on the unit periodicity cell.
    pub n: usize,
    /// Fast-time quadrature points (midpoint rule); 1 for time-independent
    /// coefficients.
    pub n_tau: usize,
    /// Absolute tolerance on the momentum and divergence residuals
    /// (area-weighted L2).
    pub tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
}

impl Default for CellProblemCfg {
    fn default() -> Self {
        CellProblemCfg { n: 64, n_tau: 8, tol: 1e-10, max_outer: 400, max_inner: 800 }
    }
}

/// Solution of one cell problem.
#[derive(Debug, Clone)]
pub struct Corrector {
    pub strain: UnitStrain,
    pub eta: VecField,
    pub pi: CellField,
    pub momentum_residual: f64,
    pub divergence_residual: f64,
    pub outer_iters: usize,
}

/// Divergence of the flux of the affine part: `div(A r)` assembled with the
/// same scatter stencils as the diffusion operator, so constant coefficients
/// give exactly zero.
fn affine_flux_divergence(g: &GridSpec, a: &CoeffField, strain: UnitStrain) -> VecField {
    let mut out = VecField::zeros(g);
    // Slot values of the affine field: natural center slot and corner slot of
    // the strained component are constant 0/1.
    let (dc_const, dk_const) = match (strain.dir, strain.comp) {
        (0, 0) => (1.0, 0.0), // d(ux)/dx = 1
        (1, 0) => (0.0, 1.0), // d(ux)/dy = 1
        (1, 1) => (1.0, 0.0), // d(uy)/dy = 1
        (0, 1) => (0.0, 1.0), // d(uy)/dx = 1
        _ => unreachable!(),
    };
    if strain.comp == 0 {
        let mut sc = g.zeros_cell();
        let mut sk = Array2::zeros((g.ncx(), g.ncy()));
        for i in 0..g.nx {
            for j in 0..g.ny {
                sc[[i, j]] = a.a11_c[[i, j]] * dc_const + a.a12_c[[i, j]] * dk_const;
            }
        }
        for i in 0..g.ncx() {
            for j in 0..g.ncy() {
                sk[[i, j]] = corner_weight(g, i, j) * a.a22_k[[i, j]] * dk_const;
            }
        }
        let mut mixed = g.zeros_cell();
        for i in 0..g.nx {
            for j in 0..g.ny {
                mixed[[i, j]] = a.a12_c[[i, j]] * dc_const;
            }
        }
        scatter_center_to_corner(g, &mixed, &mut sk);
        let mut acc = Array2::zeros(out.ux.raw_dim());
        scatter_dc_ux(g, &sc, &mut acc);
        scatter_dk_ux(g, &sk, &mut acc);
        out.ux = -acc;
    } else {
        let mut sc = g.zeros_cell();
        let mut sk = Array2::zeros((g.ncx(), g.ncy()));
        for i in 0..g.nx {
            for j in 0..g.ny {
                sc[[i, j]] = a.a22_c[[i, j]] * dc_const + a.a12_c[[i, j]] * dk_const;
            }
        }
        for i in 0..g.ncx() {
            for j in 0..g.ncy() {
                sk[[i, j]] = corner_weight(g, i, j) * a.a11_k[[i, j]] * dk_const;
            }
        }
        let mut mixed = g.zeros_cell();
        for i in 0..g.nx {
            for j in 0..g.ny {
                mixed[[i, j]] = a.a12_c[[i, j]] * dc_const;
            }
        }
        scatter_center_to_corner(g, &mixed, &mut sk);
        let mut acc = Array2::zeros(out.uy.raw_dim());
        scatter_dc_uy(g, &sc, &mut acc);
        scatter_dk_uy(g, &sk, &mut acc);
        out.uy = -acc;
    }
    out
}

/// Coefficient eigenvalue range over all sample points.
fn coeff_range(a: &CoeffField) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut scan = |a11: &Array2<f64>, a12: &Array2<f64>, a22: &Array2<f64>| {
        for ((x, y), z) in a11.iter().zip(a12.iter()).zip(a22.iter()) {
            let mid = 0.5 * (x + z);
            let rad = (0.25 * (x - z) * (x - z) + y * y).sqrt();
            lo = lo.min(mid - rad);
            hi = hi.max(mid + rad);
        }
    };
    scan(&a.a11_c, &a.a12_c, &a.a22_c);
    scan(&a.a11_k, &a.a12_k, &a.a22_k);
    (lo, hi)
}

fn remove_mean_vec(g: &GridSpec, u: &mut VecField) {
    let mx = u.ux.sum() / u.ux.len() as f64;
    let my = u.uy.sum() / u.uy.len() as f64;
    u.ux.mapv_inplace(|v| v - mx);
    u.uy.mapv_inplace(|v| v - my);
    let _ = g;
}

/// Preconditioned CG for `(-div(A grad)) eta = rhs` on the fully periodic
/// cell, in the zero-mean-per-component subspace. The preconditioner is the
/// exact inverse of `-abar laplacian` per component via FFT.
fn pcg_momentum(
    g: &GridSpec,
    a: &CoeffField,
    rhs: &VecField,
    eta0: VecField,
    fft: &Solver,
    abar: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(VecField, f64, usize)> {
    let apply = |v: &VecField| {
        let mut t = grid::tensor_diffusion(g, v, a);
        t.scale(-1.0);
        t
    };
    let precond = |r: &VecField| {
        let zx = fft.apply_symbol(&r.ux, |s| if s <= 0.0 { 0.0 } else { 1.0 / (abar * s) });
        let zy = fft.apply_symbol(&r.uy, |s| if s <= 0.0 { 0.0 } else { 1.0 / (abar * s) });
        VecField { ux: zx, uy: zy }
    };

    let mut eta = eta0;
    remove_mean_vec(g, &mut eta);
    let mut r = rhs.clone();
    r.scaled_add(-1.0, &apply(&eta));
    remove_mean_vec(g, &mut r);
    let mut res = l2_vec(g, &r);
    if res <= tol {
        return Ok((eta, res, 0));
    }
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot_vec(g, &r, &z);
    for it in 1..=max_iter {
        let q = apply(&p);
        let pq = dot_vec(g, &p, &q);
        if pq <= 0.0 {
            return Err(Error::NonConvergence {
                context: "cell momentum PCG lost positivity".into(),
                iterations: it,
                residual: res,
                tol,
            });
        }
        let alpha = rz / pq;
        eta.scaled_add(alpha, &p);
        r.scaled_add(-alpha, &q);
        remove_mean_vec(g, &mut r);
        res = l2_vec(g, &r);
        if res <= tol {
            remove_mean_vec(g, &mut eta);
            return Ok((eta, res, it));
        }
        z = precond(&r);
        let rz_new = dot_vec(g, &r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        let mut pnew = z.clone();
        pnew.scaled_add(beta, &p);
        p = pnew;
    }
    Err(Error::NonConvergence {
        context: "cell momentum PCG".into(),
        iterations: max_iter,
        residual: res,
        tol,
    })
}

/// Solve one cell problem for the given sampled coefficients.
pub fn solve_cell_problem(
    g: &GridSpec,
    a: &CoeffField,
    strain: UnitStrain,
    cfg: &CellProblemCfg,
) -> Result<Corrector> {
    solve_cell_problem_from(g, a, strain, cfg, VecField::zeros(g))
}

/// Same, but starting the iteration from a caller-supplied velocity (used to
/// check that the discrete solution is independent of the initial iterate).
pub fn solve_cell_problem_from(
    g: &GridSpec,
    a: &CoeffField,
    strain: UnitStrain,
    cfg: &CellProblemCfg,
    init: VecField,
) -> Result<Corrector> {
    assert!(g.periodic == [true, true], "cell problems are periodic");
    let fft = Solver::new(g);
    let (amin, amax) = coeff_range(a);
    if amin <= 0.0 {
        return Err(Error::Ellipticity(format!(
            "sampled cell coefficients lose positivity: min eigenvalue {amin:.3e}"
        )));
    }
    let abar = 0.5 * (amin + amax);
    let sbar = 2.0 / (1.0 / amin + 1.0 / amax);

    let d = affine_flux_divergence(g, a, strain);
    let mut eta = init;
    let mut pi = g.zeros_cell();
    let mut rho = 1.0f64;
    let mut prev_div = f64::INFINITY;
    let inner_tol = 0.25 * cfg.tol;

    for outer in 1..=cfg.max_outer {
        let mut rhs = d.clone();
        rhs.scaled_add(-1.0, &gradient(g, &pi));
        let (eta_new, mom_res, _iters) =
            pcg_momentum(g, a, &rhs, eta, &fft, abar, inner_tol, cfg.max_inner)?;
        eta = eta_new;
        let dv = divergence(g, &eta);
        let div_res = l2_cell(g, &dv);
        if div_res <= cfg.tol && mom_res <= cfg.tol {
            return Ok(Corrector {
                strain,
                eta,
                pi,
                momentum_residual: mom_res,
                divergence_residual: div_res,
                outer_iters: outer,
            });
        }
        if div_res > prev_div && rho > 1.0 / 64.0 {
            rho *= 0.5;
        }
        prev_div = div_res;
        pi.scaled_add(-rho * sbar, &dv);
    }
    Err(Error::NonConvergence {
        context: format!("cell problem Uzawa, strain ({},{})", strain.dir, strain.comp),
        iterations: cfg.max_outer,
        residual: prev_div,
        tol: cfg.tol,
    })
}

/// Per-component slot gradients of a velocity field with an optional affine
/// strain folded in.
struct SlotGrads {
    ux_dc: Array2<f64>,
    ux_dk: Array2<f64>,
    uy_dc: Array2<f64>,
    uy_dk: Array2<f64>,
}

fn slot_grads(g: &GridSpec, u: &VecField, strain: Option<UnitStrain>) -> SlotGrads {
    let gx = grad_ux(g, &u.ux);
    let gy = grad_uy(g, &u.uy);
    let mut s = SlotGrads { ux_dc: gx.dc, ux_dk: gx.dk, uy_dc: gy.dc, uy_dk: gy.dk };
    if let Some(st) = strain {
        let target = match (st.dir, st.comp) {
            (0, 0) => &mut s.ux_dc,
            (1, 0) => &mut s.ux_dk,
            (1, 1) => &mut s.uy_dc,
            (0, 1) => &mut s.uy_dk,
            _ => unreachable!(),
        };
        target.mapv_inplace(|v| v + 1.0);
    }
    s
}

/// Cell mean of `A grad(u) : grad(v)` with the operator's own quadrature.
fn pair_energy(g: &GridSpec, a: &CoeffField, su: &SlotGrads, sv: &SlotGrads) -> f64 {
    let mut q = 0.0;
    let dku_avg = avg_corner_to_center(g, &su.ux_dk);
    let dkv_avg = avg_corner_to_center(g, &sv.ux_dk);
    for i in 0..g.nx {
        for j in 0..g.ny {
            q += a.a11_c[[i, j]] * su.ux_dc[[i, j]] * sv.ux_dc[[i, j]]
                + a.a12_c[[i, j]]
                    * (su.ux_dc[[i, j]] * dkv_avg[[i, j]] + dku_avg[[i, j]] * sv.ux_dc[[i, j]]);
        }
    }
    for i in 0..g.ncx() {
        for j in 0..g.ncy() {
            q += corner_weight(g, i, j) * a.a22_k[[i, j]] * su.ux_dk[[i, j]] * sv.ux_dk[[i, j]];
        }
    }
    let dku_avg = avg_corner_to_center(g, &su.uy_dk);
    let dkv_avg = avg_corner_to_center(g, &sv.uy_dk);
    for i in 0..g.nx {
        for j in 0..g.ny {
            q += a.a22_c[[i, j]] * su.uy_dc[[i, j]] * sv.uy_dc[[i, j]]
                + a.a12_c[[i, j]]
                    * (su.uy_dc[[i, j]] * dkv_avg[[i, j]] + dku_avg[[i, j]] * sv.uy_dc[[i, j]]);
        }
    }
    for i in 0..g.ncx() {
        for j in 0..g.ncy() {
            q += corner_weight(g, i, j) * a.a11_k[[i, j]] * su.uy_dk[[i, j]] * sv.uy_dk[[i, j]];
        }
    }
    q * g.cell_area() / g.area()
}

/// Cell mean of the flux `A (r + grad eta)` per (direction, component) slot.
fn flux_mean(g: &GridSpec, a: &CoeffField, su: &SlotGrads) -> [f64; 4] {
    let area = g.cell_area() / g.area();
    let mut f = [0.0f64; 4];
    // Component ux: F_x at centers, F_y at corners (plus the a12 center part).
    let dk_avg = avg_corner_to_center(g, &su.ux_dk);
    for i in 0..g.nx {
        for j in 0..g.ny {
            f[UnitStrain { dir: 0, comp: 0 }.slot()] +=
                (a.a11_c[[i, j]] * su.ux_dc[[i, j]] + a.a12_c[[i, j]] * dk_avg[[i, j]]) * area;
            f[UnitStrain { dir: 1, comp: 0 }.slot()] +=
                a.a12_c[[i, j]] * su.ux_dc[[i, j]] * area;
        }
    }
    for i in 0..g.ncx() {
        for j in 0..g.ncy() {
            f[UnitStrain { dir: 1, comp: 0 }.slot()] +=
                corner_weight(g, i, j) * a.a22_k[[i, j]] * su.ux_dk[[i, j]] * area;
        }
    }
    // Component uy.
    let dk_avg = avg_corner_to_center(g, &su.uy_dk);
    for i in 0..g.nx {
        for j in 0..g.ny {
            f[UnitStrain { dir: 1, comp: 1 }.slot()] +=
                (a.a22_c[[i, j]] * su.uy_dc[[i, j]] + a.a12_c[[i, j]] * dk_avg[[i, j]]) * area;
            f[UnitStrain { dir: 0, comp: 1 }.slot()] +=
                a.a12_c[[i, j]] * su.uy_dc[[i, j]] * area;
        }
    }
    for i in 0..g.ncx() {
        for j in 0..g.ncy() {
            f[UnitStrain { dir: 0, comp: 1 }.slot()] +=
                corner_weight(g, i, j) * a.a11_k[[i, j]] * su.uy_dk[[i, j]] * area;
        }
    }
    f
}

/// The effective 4-index tensor stored over slots `s(dir, comp) = 2 dir + comp`:
/// `m[s(i,k)][s(j,l)] = ahat_{ij}^{kl}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveTensor {
    pub m: [[f64; 4]; 4],
}

impl EffectiveTensor {
    pub fn zero() -> Self {
        EffectiveTensor { m: [[0.0; 4]; 4] }
    }

    /// `nu * delta_ij delta_kl` (the tensor of a constant scalar viscosity).
    pub fn isotropic(nu: f64) -> Self {
        let mut t = Self::zero();
        for s in 0..4 {
            t.m[s][s] = nu;
        }
        t
    }

    pub fn entry(&self, i: usize, k: usize, j: usize, l: usize) -> f64 {
        self.m[2 * i + k][2 * j + l]
    }

    /// Row-major flattening of the slot matrix.
    pub fn flat(&self) -> [f64; 16] {
        let mut f = [0.0; 16];
        for (s, row) in self.m.iter().enumerate() {
            for (t, v) in row.iter().enumerate() {
                f[4 * s + t] = *v;
            }
        }
        f
    }

    pub fn from_flat(f: &[f64]) -> Result<Self> {
        if f.len() != 16 {
            return Err(Error::ShapeMismatch(format!(
                "effective tensor needs 16 entries, got {}",
                f.len()
            )));
        }
        let mut m = [[0.0; 4]; 4];
        for s in 0..4 {
            for t in 0..4 {
                m[s][t] = f[4 * s + t];
            }
        }
        Ok(EffectiveTensor { m })
    }

    pub fn major_symmetry_defect(&self) -> f64 {
        let mut d = 0.0f64;
        for s in 0..4 {
            for t in 0..4 {
                d = d.max((self.m[s][t] - self.m[t][s]).abs());
            }
        }
        d
    }

    pub fn symmetrized(&self) -> Self {
        let mut m = [[0.0; 4]; 4];
        for s in 0..4 {
            for t in 0..4 {
                m[s][t] = 0.5 * (self.m[s][t] + self.m[t][s]);
            }
        }
        EffectiveTensor { m }
    }

    /// Eigenvalues of the symmetrized slot matrix, ascending.
    pub fn eigenvalues(&self) -> [f64; 4] {
        sym4_eigenvalues(self.symmetrized().m)
    }

    /// Largest relative deviation from `nu I` if the tensor is (numerically)
    /// a scalar multiple of the identity on slots.
    pub fn isotropy_defect(&self) -> (f64, f64) {
        let nu = (self.m[0][0] + self.m[1][1] + self.m[2][2] + self.m[3][3]) / 4.0;
        let mut d = 0.0f64;
        for s in 0..4 {
            for t in 0..4 {
                let want = if s == t { nu } else { 0.0 };
                d = d.max((self.m[s][t] - want).abs());
            }
        }
        (nu, d)
    }
}

/// Jacobi eigenvalue iteration for a symmetric 4x4 matrix.
pub fn sym4_eigenvalues(mut m: [[f64; 4]; 4]) -> [f64; 4] {
    let scale = m
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |s, v| s.max(v.abs()))
        .max(1e-300);
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..4 {
            for q in (p + 1)..4 {
                off = off.max(m[p][q].abs());
            }
        }
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..4 {
            for q in (p + 1)..4 {
                if m[p][q].abs() <= 1e-18 * scale {
                    continue;
                }
                let theta = 0.5 * (m[q][q] - m[p][p]) / m[p][q];
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..4 {
                    let (mrp, mrq) = (m[r][p], m[r][q]);
                    m[r][p] = c * mrp - s * mrq;
                    m[r][q] = s * mrp + c * mrq;
                }
                for r in 0..4 {
                    let (mpr, mqr) = (m[p][r], m[q][r]);
                    m[p][r] = c * mpr - s * mqr;
                    m[q][r] = s * mpr + c * mqr;
                }
            }
        }
    }
    let mut ev = [m[0][0], m[1][1], m[2][2], m[3][3]];
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// Full output of an effective-tensor computation.
#[derive(Debug, Clone)]
pub struct TensorComputation {
    /// Energy-pairing tensor (canonical).
    pub tensor: EffectiveTensor,
    /// Flux-average tensor (cross-check route).
    pub flux_tensor: EffectiveTensor,
    /// Max absolute entry difference between the two routes.
    pub route_diff: f64,
    /// Worst residuals over all strains and time slices.
    pub max_momentum_residual: f64,
    pub max_divergence_residual: f64,
    /// The correctors of the last time slice, slot order.
    pub correctors: Vec<Corrector>,
}

fn tensor_for_coeffs(
    g: &GridSpec,
    a: &CoeffField,
    cfg: &CellProblemCfg,
) -> Result<(EffectiveTensor, EffectiveTensor, f64, f64, Vec<Corrector>)> {
    let correctors: Vec<Corrector> = STRAINS
        .par_iter()
        .map(|s| solve_cell_problem(g, a, *s, cfg))
        .collect::<Result<Vec<_>>>()?;
    let grads: Vec<SlotGrads> =
        correctors.iter().map(|c| slot_grads(g, &c.eta, Some(c.strain))).collect();
    let mut energy = EffectiveTensor::zero();
    let mut flux = EffectiveTensor::zero();
    for (col, sg) in grads.iter().enumerate() {
        let fm = flux_mean(g, a, sg);
        for row in 0..4 {
            energy.m[row][col] = pair_energy(g, a, sg, &grads[row]);
            flux.m[row][col] = fm[row];
        }
    }
    let mom = correctors.iter().map(|c| c.momentum_residual).fold(0.0f64, f64::max);
    let div = correctors.iter().map(|c| c.divergence_residual).fold(0.0f64, f64::max);
    Ok((energy, flux, mom, div, correctors))
}

/// Compute the effective tensor of a model's fast part on the unit cell,
/// averaging over the fast time when the model needs it.
pub fn effective_tensor(model: &ViscosityModel, cfg: &CellProblemCfg) -> Result<TensorComputation> {
    let micro = model.micro_model()?;
    let g = GridSpec::unit_cell(cfg.n);
    let n_tau = if micro.tau_dependent() { cfg.n_tau.max(2) } else { 1 };
    let slices: Vec<(EffectiveTensor, EffectiveTensor, f64, f64, Vec<Corrector>)> = (0..n_tau)
        .map(|q| {
            let tau = (q as f64 + 0.5) / n_tau as f64;
            let a = micro.sample_cell_coeffs(&g, tau);
            tensor_for_coeffs(&g, &a, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut energy = EffectiveTensor::zero();
    let mut flux = EffectiveTensor::zero();
    let mut mom = 0.0f64;
    let mut div = 0.0f64;
    for (e, f, m, d, _) in &slices {
        for s in 0..4 {
            for t in 0..4 {
                energy.m[s][t] += e.m[s][t] / n_tau as f64;
                flux.m[s][t] += f.m[s][t] / n_tau as f64;
            }
        }
        mom = mom.max(*m);
        div = div.max(*d);
    }
    let mut route_diff = 0.0f64;
    for s in 0..4 {
        for t in 0..4 {
            route_diff = route_diff.max((energy.m[s][t] - flux.m[s][t]).abs());
        }
    }
    let correctors = slices.into_iter().next_back().unwrap().4;
    Ok(TensorComputation {
        tensor: energy,
        flux_tensor: flux,
        route_diff,
        max_momentum_residual: mom,
        max_divergence_residual: div,
        correctors,
    })
}

/// Effective tensor by periodization on the box `[0, R]^2`: for spatial
/// patterns with no unit period (quasi-periodic models) this converges to the
/// mean-value tensor as `R` grows. `cells_per_unit` fixes the resolution
/// density.
pub fn effective_tensor_truncated(
    model: &ViscosityModel,
    r_box: usize,
    cells_per_unit: usize,
    cfg: &CellProblemCfg,
) -> Result<TensorComputation> {
    if r_box == 0 {
        return Err(Error::InvalidParam { key: "r_box".into(), msg: "must be >= 1".into() });
    }
    let micro = model.micro_model()?;
    let n = r_box * cells_per_unit;
    let g = GridSpec::periodic_cell(n, r_box as f64);
    let n_tau = if micro.tau_dependent() { cfg.n_tau.max(2) } else { 1 };
    let mut energy = EffectiveTensor::zero();
    let mut flux = EffectiveTensor::zero();
    let mut mom = 0.0f64;
    let mut div = 0.0f64;
    let mut last = Vec::new();
    for q in 0..n_tau {
        let tau = (q as f64 + 0.5) / n_tau as f64;
        let a = micro.sample_cell_coeffs(&g, tau);
        let (e, f, m, d, corr) = tensor_for_coeffs(&g, &a, cfg)?;
        for s in 0..4 {
            for t in 0..4 {
                energy.m[s][t] += e.m[s][t] / n_tau as f64;
                flux.m[s][t] += f.m[s][t] / n_tau as f64;
            }
        }
        mom = mom.max(m);
        div = div.max(d);
        last = corr;
    }
    let mut route_diff = 0.0f64;
    for s in 0..4 {
        for t in 0..4 {
            route_diff = route_diff.max((energy.m[s][t] - flux.m[s][t]).abs());
        }
    }
    Ok(TensorComputation {
        tensor: energy,
        flux_tensor: flux,
        route_diff,
        max_momentum_residual: mom,
        max_divergence_residual: div,
        correctors: last,
    })
}

// ---------------------------------------------------------------------------
// Corrector interpolation (for two-scale reconstruction diagnostics)
// ---------------------------------------------------------------------------

/// Periodic bilinear interpolation of samples at `origin + index * h` on a
/// length-`l` torus axis pair.
fn bilinear_periodic(
    arr: &Array2<f64>,
    l: [f64; 2],
    origin: [f64; 2],
    h: [f64; 2],
    p: [f64; 2],
) -> f64 {
    let (n0, n1) = (arr.nrows(), arr.ncols());
    let mut out_acc = 0.0;
    let t0 = ((p[0] - origin[0]) / h[0]).rem_euclid(l[0] / h[0]);
    let t1 = ((p[1] - origin[1]) / h[1]).rem_euclid(l[1] / h[1]);
    let i0 = t0.floor() as usize % n0;
    let j0 = t1.floor() as usize % n1;
    let fx = t0 - t0.floor();
    let fy = t1 - t1.floor();
    let i1 = (i0 + 1) % n0;
    let j1 = (j0 + 1) % n1;
    out_acc += arr[[i0, j0]] * (1.0 - fx) * (1.0 - fy);
    out_acc += arr[[i1, j0]] * fx * (1.0 - fy);
    out_acc += arr[[i0, j1]] * (1.0 - fx) * fy;
    out_acc += arr[[i1, j1]] * fx * fy;
    out_acc
}

impl Corrector {
    /// Corrector velocity at an arbitrary point of the torus.
    pub fn eta_at(&self, g: &GridSpec, y: [f64; 2]) -> [f64; 2] {
        let (hx, hy) = (g.hx(), g.hy());
        let vx = bilinear_periodic(&self.eta.ux, [g.lx, g.ly], [0.0, 0.5 * hy], [hx, hy], y);
        let vy = bilinear_periodic(&self.eta.uy, [g.lx, g.ly], [0.5 * hx, 0.0], [hx, hy], y);
        [vx, vy]
    }

    /// Corrector gradient `G[dir][comp] = d eta^comp / d y_dir` at a point.
    pub fn grad_eta_at(&self, g: &GridSpec, y: [f64; 2]) -> [[f64; 2]; 2] {
        let (hx, hy) = (g.hx(), g.hy());
        let gx = grad_ux(g, &self.eta.ux);
        let gy = grad_uy(g, &self.eta.uy);
        let c_org = [0.5 * hx, 0.5 * hy];
        let k_org = [0.0, 0.0];
        let l = [g.lx, g.ly];
        [
            [
                bilinear_periodic(&gx.dc, l, c_org, [hx, hy], y),
                bilinear_periodic(&gy.dk, l, k_org, [hx, hy], y),
            ],
            [
                bilinear_periodic(&gx.dk, l, k_org, [hx, hy], y),
                bilinear_periodic(&gy.dc, l, c_org, [hx, hy], y),
            ],
        ]
    }
}

// ---------------------------------------------------------------------------
// Macroscopic operator built from the effective tensor
// ---------------------------------------------------------------------------

/// Effective coefficient for the macroscopic momentum equation: a constant
/// slot matrix, optionally modulated by a slow scalar factor sampled at cell
/// centers and corners.
#[derive(Debug, Clone)]
pub struct EffectiveCoeff {
    m: [[f64; 4]; 4],
    mod_c: Option<Array2<f64>>,
    mod_k: Option<Array2<f64>>,
}

impl EffectiveCoeff {
    pub fn new(t: &EffectiveTensor) -> Self {
        EffectiveCoeff { m: t.symmetrized().m, mod_c: None, mod_k: None }
    }

    /// Attach a slow modulation factor `m(x)` sampled on the macro grid.
    pub fn with_modulation(
        t: &EffectiveTensor,
        g: &GridSpec,
        factor: impl Fn([f64; 2]) -> f64,
    ) -> Self {
        let mut mc = g.zeros_cell();
        for i in 0..g.nx {
            for j in 0..g.ny {
                mc[[i, j]] = factor([g.xc(i), g.yc(j)]);
            }
        }
        let mut mk = Array2::zeros((g.ncx(), g.ncy()));
        for i in 0..g.ncx() {
            for j in 0..g.ncy() {
                mk[[i, j]] = factor([i as f64 * g.hx(), j as f64 * g.hy()]);
            }
        }
        EffectiveCoeff { m: t.symmetrized().m, mod_c: Some(mc), mod_k: Some(mk) }
    }

    #[inline]
    fn mc(&self, i: usize, j: usize) -> f64 {
        self.mod_c.as_ref().map_or(1.0, |m| m[[i, j]])
    }

    #[inline]
    fn mk(&self, i: usize, j: usize) -> f64 {
        self.mod_k.as_ref().map_or(1.0, |m| m[[i, j]])
    }
}

/// `div( Ahat grad u )` where the 4-index effective tensor couples all four
/// gradient slots. Exact negative gradient of the quadratic form below, hence
/// symmetric; reduces to `tensor_diffusion` with scalar coefficients when the
/// tensor is `nu delta delta`.
pub fn effective_diffusion(g: &GridSpec, u: &VecField, c: &EffectiveCoeff) -> VecField {
    let m = &c.m;
    // Slot samples: s0 = dx(ux) centers, s1 = dx(uy) corners,
    //               s2 = dy(ux) corners, s3 = dy(uy) centers.
    let gx = grad_ux(g, &u.ux);
    let gy = grad_uy(g, &u.uy);
    let (g0, g2k, g1k, g3) = (&gx.dc, &gx.dk, &gy.dk, &gy.dc);
    let g1 = avg_corner_to_center(g, g1k);
    let g2 = avg_corner_to_center(g, g2k);

    // Center-slot cofactors (paired with s0 and s3).
    let mut s0 = g.zeros_cell();
    let mut s3 = g.zeros_cell();
    // Center contributions to the averaged corner slots.
    let mut c1 = g.zeros_cell();
    let mut c2 = g.zeros_cell();
    for i in 0..g.nx {
        for j in 0..g.ny {
            let f = c.mc(i, j);
            s0[[i, j]] = f
                * (m[0][0] * g0[[i, j]]
                    + m[0][3] * g3[[i, j]]
                    + m[0][1] * g1[[i, j]]
                    + m[0][2] * g2[[i, j]]);
            s3[[i, j]] = f
                * (m[3][3] * g3[[i, j]]
                    + m[0][3] * g0[[i, j]]
                    + m[3][1] * g1[[i, j]]
                    + m[3][2] * g2[[i, j]]);
            c1[[i, j]] = f * (m[0][1] * g0[[i, j]] + m[3][1] * g3[[i, j]]);
            c2[[i, j]] = f * (m[0][2] * g0[[i, j]] + m[3][2] * g3[[i, j]]);
        }
    }
    // Corner-slot cofactors.
    let mut k1 = Array2::zeros((g.ncx(), g.ncy()));
    let mut k2 = Array2::zeros((g.ncx(), g.ncy()));
    for i in 0..g.ncx() {
        for j in 0..g.ncy() {
            let w = corner_weight(g, i, j) * c.mk(i, j);
            k1[[i, j]] = w * (m[1][1] * g1k[[i, j]] + m[1][2] * g2k[[i, j]]);
            k2[[i, j]] = w * (m[2][2] * g2k[[i, j]] + m[1][2] * g1k[[i, j]]);
        }
    }
    scatter_center_to_corner(g, &c1, &mut k1);
    scatter_center_to_corner(g, &c2, &mut k2);

    let mut out = VecField::zeros(g);
    let mut acc = Array2::zeros(u.ux.raw_dim());
    scatter_dc_ux(g, &s0, &mut acc);
    scatter_dk_ux(g, &k2, &mut acc);
    out.ux = -acc;
    let mut acc = Array2::zeros(u.uy.raw_dim());
    scatter_dc_uy(g, &s3, &mut acc);
    scatter_dk_uy(g, &k1, &mut acc);
    out.uy = -acc;
    out.pin_walls(g);
    out
}

/// Diagonal of `-effective_diffusion` (wall-pinned faces get 1).
pub fn effective_diffusion_diag(g: &GridSpec, c: &EffectiveCoeff) -> VecField {
    // Reuse the scalar-coefficient diagonal with the slot-diagonal entries:
    // ux couples to m[0][0] at centers and m[2][2] at corners; uy to m[3][3]
    // and m[1][1].
    let mut a = CoeffField::identity(g);
    for i in 0..g.nx {
        for j in 0..g.ny {
            let f = c.mc(i, j);
            a.a11_c[[i, j]] = f * c.m[0][0];
            a.a22_c[[i, j]] = f * c.m[3][3];
        }
    }
    for i in 0..g.ncx() {
        for j in 0..g.ncy() {
            let f = c.mk(i, j);
            a.a22_k[[i, j]] = f * c.m[2][2];
            a.a11_k[[i, j]] = f * c.m[1][1];
        }
    }
    grid::tensor_diffusion_diag(g, &a)
}

/// Quadratic form of `effective_diffusion` (the macroscopic viscous
/// dissipation): `<-effective_diffusion(u), u>`.
pub fn effective_dissipation(g: &GridSpec, u: &VecField, c: &EffectiveCoeff) -> f64 {
    let m = &c.m;
    let gx = grad_ux(g, &u.ux);
    let gy = grad_uy(g, &u.uy);
    let (g0, g2k, g1k, g3) = (&gx.dc, &gx.dk, &gy.dk, &gy.dc);
    let g1 = avg_corner_to_center(g, g1k);
    let g2 = avg_corner_to_center(g, g2k);
    let mut q = 0.0;
    for i in 0..g.nx {
        for j in 0..g.ny {
            let f = c.mc(i, j);
            let (a, b, x, y) = (g0[[i, j]], g1[[i, j]], g2[[i, j]], g3[[i, j]]);
            q += f
                * (m[0][0] * a * a
                    + m[3][3] * y * y
                    + 2.0 * m[0][3] * a * y
                    + 2.0 * (m[0][1] * a * b + m[0][2] * a * x + m[3][1] * y * b + m[3][2] * y * x));
        }
    }
    for i in 0..g.ncx() {
        for j in 0..g.ncy() {
            let w = corner_weight(g, i, j) * c.mk(i, j);
            let (b, x) = (g1k[[i, j]], g2k[[i, j]]);
            q += w * (m[1][1] * b * b + m[2][2] * x * x + 2.0 * m[1][2] * b * x);
        }
    }
    q * g.cell_area()
}
