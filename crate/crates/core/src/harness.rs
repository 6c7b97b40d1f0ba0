//! Verification harness: grid transfer between refinement levels, space-time
//! error norms, the heterogeneous-vs-homogenized sweep, and grid
//! self-convergence with Richardson extrapolation.

use crate::cell::{effective_tensor, CellProblemCfg, Corrector, EffectiveTensor};
use crate::chns::{CoeffSpec, Forcing, PhiInit, PhysParams, SimConfig, Simulator, TimeParams, VelInit};
use crate::error::{Error, Result};
use crate::grid::{
    dot_cell, h1_seminorm_sq_cell, l2_cell, l2_vec, CellField, GridSpec, VecField,
};
use crate::viscosity::{ModelKind, ViscosityModel};

fn refinement_ratio(gf: &GridSpec, gc: &GridSpec) -> Result<usize> {
    if gf.periodic != gc.periodic || gf.lx != gc.lx || gf.ly != gc.ly {
        return Err(Error::ShapeMismatch(format!(
            "restriction needs matching domains: {:?} vs {:?}",
            (gf.lx, gf.ly, gf.periodic),
            (gc.lx, gc.ly, gc.periodic)
        )));
    }
    let r = gf.nx / gc.nx;
    if r == 0 || gf.nx != r * gc.nx || gf.ny != r * gc.ny {
        return Err(Error::ShapeMismatch(format!(
            "fine grid {}x{} is not a multiple of coarse {}x{}",
            gf.nx, gf.ny, gc.nx, gc.ny
        )));
    }
    Ok(r)
}

/// Block average of cell values: the coarse cell takes the mean of the
/// `r x r` fine cells it covers. Preserves means exactly.
pub fn restrict_cell(gf: &GridSpec, gc: &GridSpec, f: &CellField) -> Result<CellField> {
    let r = refinement_ratio(gf, gc)?;
    let mut out = gc.zeros_cell();
    let inv = 1.0 / (r * r) as f64;
    for i in 0..gc.nx {
        for j in 0..gc.ny {
            let mut s = 0.0;
            for a in 0..r {
                for b in 0..r {
                    s += f[[i * r + a, j * r + b]];
                }
            }
            out[[i, j]] = s * inv;
        }
    }
    Ok(out)
}

/// Face average of a staggered velocity: the coarse face takes the mean of
/// the `r` fine faces on the same grid line. Commutes with the discrete
/// divergence, so divergence-free fields restrict to divergence-free fields.
pub fn restrict_vec(gf: &GridSpec, gc: &GridSpec, u: &VecField) -> Result<VecField> {
    let r = refinement_ratio(gf, gc)?;
    let mut out = VecField::zeros(gc);
    let inv = 1.0 / r as f64;
    for i in 0..gc.nux() {
        for j in 0..gc.ny {
            let mut s = 0.0;
            for b in 0..r {
                s += u.ux[[i * r, j * r + b]];
            }
            out.ux[[i, j]] = s * inv;
        }
    }
    for i in 0..gc.nx {
        for j in 0..gc.nuy() {
            let mut s = 0.0;
            for a in 0..r {
                s += u.uy[[i * r + a, j * r]];
            }
            out.uy[[i, j]] = s * inv;
        }
    }
    Ok(out)
}

/// All four velocity-gradient components at cell centers, component-major:
/// `[d(ux)/dx, d(ux)/dy, d(uy)/dx, d(uy)/dy]`. Note this is NOT the cell
/// problem's strain-slot order (direction-major, `2*dir + comp`): slots 1
/// and 2 are transposed relative to this array; see `STRAIN_SLOT_TO_GRAD`.
/// The normal derivatives sit naturally between the bracketing faces; the
/// tangential ones interpolate the component to centers first and close
/// walls with the same mirror ghost (`u_ghost = -u_in`) the viscous stencil
/// uses.
pub fn cell_center_gradient(g: &GridSpec, u: &VecField) -> [CellField; 4] {
    let (hx, hy) = (g.hx(), g.hy());
    let (nx, ny) = (g.nx, g.ny);
    let mut dux_dx = g.zeros_cell();
    let mut dux_dy = g.zeros_cell();
    let mut duy_dx = g.zeros_cell();
    let mut duy_dy = g.zeros_cell();

    // ux at cell centers.
    let mut uc = g.zeros_cell();
    for i in 0..nx {
        let ip = if g.periodic[0] { (i + 1) % nx } else { i + 1 };
        for j in 0..ny {
            dux_dx[[i, j]] = (u.ux[[ip, j]] - u.ux[[i, j]]) / hx;
            uc[[i, j]] = 0.5 * (u.ux[[ip, j]] + u.ux[[i, j]]);
        }
    }
    for i in 0..nx {
        for j in 0..ny {
            let up = if j + 1 < ny {
                uc[[i, j + 1]]
            } else if g.periodic[1] {
                uc[[i, 0]]
            } else {
                -uc[[i, j]]
            };
            let dn = if j > 0 {
                uc[[i, j - 1]]
            } else if g.periodic[1] {
                uc[[i, ny - 1]]
            } else {
                -uc[[i, j]]
            };
            dux_dy[[i, j]] = (up - dn) / (2.0 * hy);
        }
    }

    // uy at cell centers.
    let mut vc = g.zeros_cell();
    for i in 0..nx {
        for j in 0..ny {
            let jp = if g.periodic[1] { (j + 1) % ny } else { j + 1 };
            duy_dy[[i, j]] = (u.uy[[i, jp]] - u.uy[[i, j]]) / hy;
            vc[[i, j]] = 0.5 * (u.uy[[i, jp]] + u.uy[[i, j]]);
        }
    }
    for i in 0..nx {
        for j in 0..ny {
            let rt = if i + 1 < nx {
                vc[[i + 1, j]]
            } else if g.periodic[0] {
                vc[[0, j]]
            } else {
                -vc[[i, j]]
            };
            let lf = if i > 0 {
                vc[[i - 1, j]]
            } else if g.periodic[0] {
                vc[[nx - 1, j]]
            } else {
                -vc[[i, j]]
            };
            duy_dx[[i, j]] = (rt - lf) / (2.0 * hx);
        }
    }
    [dux_dx, dux_dy, duy_dx, duy_dy]
}

/// Piecewise-constant prolongation: every fine cell takes the value of the
/// coarse cell containing it.
pub fn prolong_cell(gc: &GridSpec, gf: &GridSpec, c: &CellField) -> Result<CellField> {
    let r = refinement_ratio(gf, gc)?;
    let mut out = gf.zeros_cell();
    for i in 0..gf.nx {
        for j in 0..gf.ny {
            out[[i, j]] = c[[i / r, j / r]];
        }
    }
    Ok(out)
}

/// Bilinear interpolation of a periodic cell-centered field at an arbitrary
/// point (coordinates wrapped into the domain).
fn sample_periodic(g: &GridSpec, c: &CellField, x: f64, y: f64) -> f64 {
    let (nx, ny) = (g.nx as isize, g.ny as isize);
    let tx = (x / g.hx() - 0.5).rem_euclid(g.nx as f64);
    let ty = (y / g.hy() - 0.5).rem_euclid(g.ny as f64);
    let (i0, j0) = (tx.floor() as isize, ty.floor() as isize);
    let (fx, fy) = (tx - i0 as f64, ty - j0 as f64);
    let at = |i: isize, j: isize| c[[(i.rem_euclid(nx)) as usize, (j.rem_euclid(ny)) as usize]];
    (1.0 - fx) * (1.0 - fy) * at(i0, j0)
        + fx * (1.0 - fy) * at(i0 + 1, j0)
        + (1.0 - fx) * fy * at(i0, j0 + 1)
        + fx * fy * at(i0 + 1, j0 + 1)
}

/// Gradient comparison between a heterogeneous solve and the homogenized
/// one at a single instant: the plain squared defect `|grad u_eps - grad u0|^2`
/// against the corrector-augmented version where each homogenized gradient
/// slot is corrected by the cell-problem gradient response sampled at
/// `x/eps`. Squared `L2` over the interior (a margin of two coarse cells is
/// dropped near walls, where the oscillation ansatz does not apply); the
/// sweep accumulates these in time.
pub struct GradientDefects {
    pub plain: f64,
    pub corrected: f64,
}

/// Maps a cell-problem strain slot (`2*dir + comp`) to the index of the
/// matching component in the `cell_center_gradient` array (`2*comp + dir`).
pub const STRAIN_SLOT_TO_GRAD: [usize; 4] = [0, 2, 1, 3];

/// Cell-centered gradients of the corrector velocities, indexed by strain
/// slot; each entry's four components are in `cell_center_gradient` order.
pub fn corrector_gradient_tables(cell_g: &GridSpec, correctors: &[Corrector]) -> Vec<[CellField; 4]> {
    correctors.iter().map(|c| cell_center_gradient(cell_g, &c.eta)).collect()
}

pub fn gradient_defects_sq(
    gf: &GridSpec,
    u_het: &VecField,
    gc: &GridSpec,
    u_hom: &VecField,
    cell_g: &GridSpec,
    tables: &[[CellField; 4]],
    eps: f64,
) -> Result<GradientDefects> {
    let r = refinement_ratio(gf, gc)?;
    let g_eps = cell_center_gradient(gf, u_het);
    let g0c = cell_center_gradient(gc, u_hom);
    let mut g0 = Vec::with_capacity(4);
    for c in &g0c {
        g0.push(prolong_cell(gc, gf, c)?);
    }
    if tables.len() != 4 {
        return Err(Error::ShapeMismatch(format!(
            "need 4 corrector tables in slot order, got {}",
            tables.len()
        )));
    }
    let trim = 2 * r;
    let area = gf.cell_area();
    let (mut plain2, mut corr2) = (0.0, 0.0);
    for i in trim..gf.nx - trim {
        for j in trim..gf.ny - trim {
            let y = (gf.xc(i) / eps, gf.yc(j) / eps);
            for comp in 0..4 {
                let d = g_eps[comp][[i, j]] - g0[comp][[i, j]];
                plain2 += d * d * area;
                let mut corr = 0.0;
                for (slot, t) in tables.iter().enumerate() {
                    // The corrector for strain slot s scales with the
                    // matching component of the macroscopic gradient.
                    let coeff = g0[STRAIN_SLOT_TO_GRAD[slot]][[i, j]];
                    corr += sample_periodic(cell_g, &t[comp], y.0, y.1) * coeff;
                }
                let dc = d - corr;
                corr2 += dc * dc * area;
            }
        }
    }
    Ok(GradientDefects { plain: plain2, corrected: corr2 })
}

/// One epsilon of the sweep: space-time `L2` distances between the restricted
/// heterogeneous solution and the homogenized one, the norms of both (for
/// scale sanity checks), the weak-pairing defects of pressure and chemical
/// potential against a fixed smooth window, and the bounded-family norms of
/// the heterogeneous run.
#[derive(Debug, Clone, Copy)]
pub struct SweepRow {
    pub epsilon: f64,
    pub err_u: f64,
    pub err_phi: f64,
    pub norm_u_het: f64,
    pub norm_u_hom: f64,
    pub norm_phi_het: f64,
    pub norm_phi_hom: f64,
    /// `int_0^T |<p_het - p0, psi>| dt` for the smooth window `psi`, with
    /// `<p0, psi>` evaluated from a homogenized run on the same fine grid so
    /// the defect is not floored by coarse-grid quadrature bias.
    pub pair_p: f64,
    /// Same for the chemical potential.
    pub pair_mu: f64,
    /// sup-in-time `L2` of the heterogeneous velocity.
    pub u_linf_l2: f64,
    /// Space-time `H1` norm of the heterogeneous velocity.
    pub u_l2_h1: f64,
    /// sup-in-time `H1` of the heterogeneous phase field.
    pub phi_linf_h1: f64,
    /// Space-time `H1` norm of the heterogeneous chemical potential.
    pub mu_l2_h1: f64,
    /// Space-time `L2` of the heterogeneous pressure.
    pub p_l2: f64,
}

impl SweepRow {
    pub fn rel_err_u(&self) -> f64 {
        self.err_u / self.norm_u_hom.max(f64::MIN_POSITIVE)
    }

    pub fn rel_err_phi(&self) -> f64 {
        self.err_phi / self.norm_phi_hom.max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub model: ViscosityModel,
    pub epsilons: Vec<f64>,
    pub n_fine: usize,
    pub n_coarse: usize,
    pub phys: PhysParams,
    pub time: TimeParams,
    pub forcing: Forcing,
    pub phi_init: PhiInit,
    pub vel_init: VelInit,
    pub cell: CellProblemCfg,
}

impl SweepConfig {
    /// The sweep used throughout the test suite: droplet in a confined
    /// vortex on the walled unit square.
    pub fn standard(model: ViscosityModel, epsilons: Vec<f64>, n_fine: usize, n_coarse: usize) -> Self {
        SweepConfig {
            model,
            epsilons,
            n_fine,
            n_coarse,
            phys: PhysParams::default(),
            time: TimeParams::new(6.25e-4, 0.25),
            forcing: Forcing::Zero,
            phi_init: PhiInit::TanhBlob { center: [0.5, 0.5], radius: 0.25, width: 0.06 },
            vel_init: VelInit::ConfinedVortex { amplitude: 0.5 },
            cell: CellProblemCfg::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub tensor: EffectiveTensor,
    pub route_diff: f64,
    pub rows: Vec<SweepRow>,
    /// Space-time gradient defects at the smallest epsilon: plain
    /// `|grad u_eps - grad u0|_{L2(QT)}` vs the corrector-augmented version.
    pub grad_defect_plain: f64,
    pub grad_defect_corrected: f64,
}

impl SweepReport {
    /// `log2` ratios of successive velocity errors (positive = improving).
    pub fn observed_rates_u(&self) -> Vec<f64> {
        self.rows.windows(2).map(|w| (w[0].err_u / w[1].err_u).log2()).collect()
    }

    pub fn observed_rates_phi(&self) -> Vec<f64> {
        self.rows.windows(2).map(|w| (w[0].err_phi / w[1].err_phi).log2()).collect()
    }
}

/// `H1` norm squared of a staggered velocity: component `L2` plus all four
/// cell-centered gradient components.
fn h1_sq_vec(g: &GridSpec, u: &VecField) -> f64 {
    let grads = cell_center_gradient(g, u);
    let mut s = l2_vec(g, u).powi(2);
    for c in &grads {
        s += l2_cell(g, c).powi(2);
    }
    s
}

/// The fixed smooth window for weak pairings: `sin(pi x / lx) sin(pi y / ly)`
/// at cell centers.
fn smooth_window(g: &GridSpec) -> CellField {
    let mut w = g.zeros_cell();
    for i in 0..g.nx {
        for j in 0..g.ny {
            w[[i, j]] = (std::f64::consts::PI * g.xc(i) / g.lx).sin()
                * (std::f64::consts::PI * g.yc(j) / g.ly).sin();
        }
    }
    w
}

/// Run the heterogeneous problem at each epsilon on the fine grid and the
/// homogenized problem on the coarse grid, stepping in lockstep and
/// accumulating space-time errors of the restricted fields (trapezoid rule
/// in time).
pub fn homogenization_sweep(
    cfg: &SweepConfig,
    mut progress: impl FnMut(&str),
) -> Result<SweepReport> {
    let micro = cfg.model.micro_model()?;
    progress(&format!("cell problems for `{}`", micro.kind().name()));
    let comp = effective_tensor(&micro, &cfg.cell)?;
    progress(&format!(
        "effective tensor ready (route difference {:.2e})",
        comp.route_diff
    ));
    let modulation = if matches!(cfg.model.kind(), ModelKind::SeparableMacro { .. }) {
        Some(cfg.model.clone())
    } else {
        None
    };

    let gf = GridSpec::walled(cfg.n_fine, cfg.n_fine, 1.0, 1.0);
    let gc = GridSpec::walled(cfg.n_coarse, cfg.n_coarse, 1.0, 1.0);
    refinement_ratio(&gf, &gc)?;
    let window_f = smooth_window(&gf);
    let n = cfg.time.n_steps();
    let dt = cfg.time.dt;
    let mk = |grid: GridSpec, coeff: CoeffSpec| SimConfig {
        grid,
        phys: cfg.phys,
        time: cfg.time,
        coeff,
        forcing: cfg.forcing.clone(),
        phi_init: cfg.phi_init.clone(),
        vel_init: cfg.vel_init.clone(),
    };

    // Weak pairings must not be floored by coarse-grid quadrature bias, so
    // <p0, psi> and <mu0, psi> come from a homogenized run on the fine grid.
    // Only the two scalar series are kept.
    progress(&format!(
        "homogenized reference on the fine {0}x{0} grid (pairing series)",
        cfg.n_fine
    ));
    let (mut ref_p, mut ref_mu) = (Vec::with_capacity(n + 1), Vec::with_capacity(n + 1));
    {
        let mut hom_f = Simulator::new(mk(
            gf,
            CoeffSpec::Homogenized { tensor: comp.tensor, modulation: modulation.clone() },
        ))?;
        ref_p.push(dot_cell(&gf, &hom_f.state.p, &window_f));
        ref_mu.push(dot_cell(&gf, &hom_f.state.mu, &window_f));
        for _ in 1..=n {
            hom_f.step()?;
            ref_p.push(dot_cell(&gf, &hom_f.state.p, &window_f));
            ref_mu.push(dot_cell(&gf, &hom_f.state.mu, &window_f));
        }
    }

    let cell_g = GridSpec::unit_cell(cfg.cell.n);
    let tables = corrector_gradient_tables(&cell_g, &comp.correctors);

    let mut rows = Vec::new();
    let (mut grad_plain, mut grad_corr) = (0.0, 0.0);
    for (ie, &eps) in cfg.epsilons.iter().enumerate() {
        progress(&format!("epsilon = {eps}: heterogeneous {0}x{0} vs homogenized {1}x{1}", cfg.n_fine, cfg.n_coarse));
        let mut het = Simulator::new(mk(
            gf,
            CoeffSpec::Heterogeneous { model: cfg.model.clone(), epsilon: eps },
        ))?;
        let mut hom = Simulator::new(mk(
            gc,
            CoeffSpec::Homogenized { tensor: comp.tensor, modulation: modulation.clone() },
        ))?;

        let last = ie + 1 == cfg.epsilons.len();
        // err_u^2, err_phi^2, |u_het|^2, |u_hom|^2, |phi_het|^2, |phi_hom|^2,
        // int |<p_het - p0, psi>|, int |<mu_het - mu0, psi>|,
        // |u_het|_H1^2, |mu_het|_H1^2, |p_het|^2, grad defect^2 (plain, corrected)
        let mut acc = [0.0f64; 13];
        let (mut u_linf_l2, mut phi_linf_h1) = (0.0f64, 0.0f64);
        let mut sample = |het: &Simulator, hom: &Simulator, k: usize, w: f64| -> Result<()> {
            let ru = restrict_vec(&gf, &gc, &het.state.u)?;
            let rphi = restrict_cell(&gf, &gc, &het.state.phi)?;
            let mut du = ru.clone();
            du.scaled_add(-1.0, &hom.state.u);
            let mut dphi = rphi.clone();
            dphi.scaled_add(-1.0, &hom.state.phi);
            let wdt = w * dt;
            acc[0] += wdt * l2_vec(&gc, &du).powi(2);
            acc[1] += wdt * l2_cell(&gc, &dphi).powi(2);
            acc[2] += wdt * l2_vec(&gc, &ru).powi(2);
            acc[3] += wdt * l2_vec(&gc, &hom.state.u).powi(2);
            acc[4] += wdt * l2_cell(&gc, &rphi).powi(2);
            acc[5] += wdt * l2_cell(&gc, &hom.state.phi).powi(2);
            acc[6] += wdt * (dot_cell(&gf, &het.state.p, &window_f) - ref_p[k]).abs();
            acc[7] += wdt * (dot_cell(&gf, &het.state.mu, &window_f) - ref_mu[k]).abs();
            acc[8] += wdt * h1_sq_vec(&gf, &het.state.u);
            acc[9] += wdt
                * (l2_cell(&gf, &het.state.mu).powi(2)
                    + h1_seminorm_sq_cell(&gf, &het.state.mu));
            acc[10] += wdt * l2_cell(&gf, &het.state.p).powi(2);
            u_linf_l2 = u_linf_l2.max(l2_vec(&gf, &het.state.u));
            phi_linf_h1 = phi_linf_h1.max(
                (l2_cell(&gf, &het.state.phi).powi(2)
                    + h1_seminorm_sq_cell(&gf, &het.state.phi))
                .sqrt(),
            );
            if last {
                let d = gradient_defects_sq(
                    &gf, &het.state.u, &gc, &hom.state.u, &cell_g, &tables, eps,
                )?;
                acc[11] += wdt * d.plain;
                acc[12] += wdt * d.corrected;
            }
            Ok(())
        };
        sample(&het, &hom, 0, 0.5)?;
        for k in 1..=n {
            het.step()?;
            hom.step()?;
            sample(&het, &hom, k, if k == n { 0.5 } else { 1.0 })?;
        }
        let row = SweepRow {
            epsilon: eps,
            err_u: acc[0].sqrt(),
            err_phi: acc[1].sqrt(),
            norm_u_het: acc[2].sqrt(),
            norm_u_hom: acc[3].sqrt(),
            norm_phi_het: acc[4].sqrt(),
            norm_phi_hom: acc[5].sqrt(),
            pair_p: acc[6],
            pair_mu: acc[7],
            u_linf_l2,
            u_l2_h1: acc[8].sqrt(),
            phi_linf_h1,
            mu_l2_h1: acc[9].sqrt(),
            p_l2: acc[10].sqrt(),
        };
        progress(&format!(
            "epsilon = {eps}: err_u = {:.4e}, err_phi = {:.4e}, pair_p = {:.3e}, pair_mu = {:.3e}",
            row.err_u, row.err_phi, row.pair_p, row.pair_mu
        ));
        rows.push(row);

        if last {
            grad_plain = acc[11].sqrt();
            grad_corr = acc[12].sqrt();
            progress(&format!(
                "gradient defect at epsilon = {eps}: plain {:.4e}, corrected {:.4e}",
                grad_plain, grad_corr
            ));
        }
    }
    Ok(SweepReport {
        tensor: comp.tensor,
        route_diff: comp.route_diff,
        rows,
        grad_defect_plain: grad_plain,
        grad_defect_corrected: grad_corr,
    })
}

pub fn write_sweep_csv(path: &std::path::Path, report: &SweepReport) -> Result<()> {
    let mut s = String::from(
        "epsilon,err_u,err_phi,rel_err_u,rel_err_phi,norm_u_het,norm_u_hom,norm_phi_het,norm_phi_hom,pair_p,pair_mu,u_linf_l2,u_l2_h1,phi_linf_h1,mu_l2_h1,p_l2\n",
    );
    for r in &report.rows {
        s.push_str(&format!(
            "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
            r.epsilon,
            r.err_u,
            r.err_phi,
            r.rel_err_u(),
            r.rel_err_phi(),
            r.norm_u_het,
            r.norm_u_hom,
            r.norm_phi_het,
            r.norm_phi_hom,
            r.pair_p,
            r.pair_mu,
            r.u_linf_l2,
            r.u_l2_h1,
            r.phi_linf_h1,
            r.mu_l2_h1,
            r.p_l2
        ));
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// Grid self-convergence of final-time states at three resolutions
/// (`n`, `2n`, `4n` style; any nested triple works). The observed order
/// comes from successive differences; Richardson extrapolation turns the
/// finest difference into an error estimate for the finest solve.
#[derive(Debug, Clone, Copy)]
pub struct SelfConvergence {
    pub ns: [usize; 3],
    /// `|R(state_mid) - state_coarse|` on the coarse grid (u and phi combined).
    pub d_coarse: f64,
    /// `|R(state_fine) - state_mid|` on the middle grid.
    pub d_fine: f64,
    /// `log2(d_coarse / d_fine)`.
    pub rate: f64,
    /// Estimated relative error of the finest solve:
    /// `d_fine / (2^rate - 1) / |state_fine|`.
    pub extrapolated_rel_err: f64,
}

/// Run the same problem at three nested resolutions. `make` maps a grid size
/// to the full configuration (time step and physics should not depend on it).
pub fn self_convergence(
    ns: [usize; 3],
    make: impl Fn(usize) -> SimConfig,
    mut progress: impl FnMut(&str),
) -> Result<SelfConvergence> {
    if ns[1] % ns[0] != 0 || ns[2] % ns[1] != 0 || ns[1] <= ns[0] || ns[2] <= ns[1] {
        return Err(Error::InvalidParam {
            key: "self_convergence.ns".into(),
            msg: format!("need nested increasing sizes, got {ns:?}"),
        });
    }
    let mut sims = Vec::new();
    for &n in &ns {
        progress(&format!("resolution {n}x{n}"));
        let mut sim = Simulator::new(make(n))?;
        sim.run(|_, _| {})?;
        sims.push(sim);
    }
    let dist = |fine: &Simulator, coarse: &Simulator| -> Result<f64> {
        let gc = coarse.g;
        let mut du = restrict_vec(&fine.g, &gc, &fine.state.u)?;
        du.scaled_add(-1.0, &coarse.state.u);
        let mut dphi = restrict_cell(&fine.g, &gc, &fine.state.phi)?;
        dphi.scaled_add(-1.0, &coarse.state.phi);
        Ok((l2_vec(&gc, &du).powi(2) + l2_cell(&gc, &dphi).powi(2)).sqrt())
    };
    let d_coarse = dist(&sims[1], &sims[0])?;
    let d_fine = dist(&sims[2], &sims[1])?;
    let rate = (d_coarse / d_fine).log2();
    let fine = &sims[2];
    let norm_fine = (l2_vec(&fine.g, &fine.state.u).powi(2)
        + l2_cell(&fine.g, &fine.state.phi).powi(2))
    .sqrt();
    let err_fine = d_fine / (2f64.powf(rate) - 1.0).max(f64::MIN_POSITIVE);
    Ok(SelfConvergence {
        ns,
        d_coarse,
        d_fine,
        rate,
        extrapolated_rel_err: err_fine / norm_fine.max(f64::MIN_POSITIVE),
    })
}
