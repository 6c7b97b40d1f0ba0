//! Staggered (MAC) grid primitives on a rectangle, with per-axis periodic or
//! wall boundaries.
//!
//! Layout: scalars (pressure, phase field, potential) live at cell centers
//! `((i+1/2)hx, (j+1/2)hy)`; the x-velocity lives at vertical faces
//! `(i hx, (j+1/2)hy)`; the y-velocity at horizontal faces `((i+1/2)hx, j hy)`.
//! On a periodic axis the wrap identifies face `0` with face `n`, so staggered
//! arrays have `n` entries per axis instead of `n+1`.
//!
//! Wall axes carry no-slip data for velocities (normal faces pinned to zero,
//! tangential ghosts by reflection `u_ghost = -u_in`) and zero-flux data for
//! scalars (boundary-face gradients are zero). These conventions make the
//! discrete gradient the negative adjoint of the discrete divergence, which
//! the projection step and the pressure Poisson solve both rely on.

use ndarray::Array2;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Scalar field at cell centers, shape `(nx, ny)`, index `[i, j]` with `i`
/// along x. Stored row-major with `j` fastest.
pub type CellField = Array2<f64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    /// `[x-axis, y-axis]`; `false` means wall boundary on that axis.
    pub periodic: [bool; 2],
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64, periodic: [bool; 2]) -> Self {
        assert!(nx >= 2 && ny >= 2, "grid needs at least 2 cells per axis");
        assert!(lx > 0.0 && ly > 0.0);
        GridSpec { nx, ny, lx, ly, periodic }
    }

    /// Square periodic cell `(0, l)^2`, n cells per axis.
    pub fn periodic_cell(n: usize, l: f64) -> Self {
        Self::new(n, n, l, l, [true, true])
    }

    /// Unit periodic cell, n cells per axis.
    pub fn unit_cell(n: usize) -> Self {
        Self::periodic_cell(n, 1.0)
    }

    /// Rectangle with wall boundaries on both axes.
    pub fn walled(nx: usize, ny: usize, lx: f64, ly: f64) -> Self {
        Self::new(nx, ny, lx, ly, [false, false])
    }

    #[inline]
    pub fn hx(&self) -> f64 {
        self.lx / self.nx as f64
    }
    #[inline]
    pub fn hy(&self) -> f64 {
        self.ly / self.ny as f64
    }
    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.hx() * self.hy()
    }
    #[inline]
    pub fn min_h(&self) -> f64 {
        self.hx().min(self.hy())
    }
    #[inline]
    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    /// Number of x-faces along x (columns of `ux`).
    #[inline]
    pub fn nux(&self) -> usize {
        self.nx + if self.periodic[0] { 0 } else { 1 }
    }
    /// Number of y-faces along y (rows of `uy`).
    #[inline]
    pub fn nuy(&self) -> usize {
        self.ny + if self.periodic[1] { 0 } else { 1 }
    }
    /// Corner counts per axis.
    #[inline]
    pub fn ncx(&self) -> usize {
        self.nx + if self.periodic[0] { 0 } else { 1 }
    }
    #[inline]
    pub fn ncy(&self) -> usize {
        self.ny + if self.periodic[1] { 0 } else { 1 }
    }

    pub fn zeros_cell(&self) -> CellField {
        Array2::zeros((self.nx, self.ny))
    }

    /// Cell-center coordinate.
    #[inline]
    pub fn xc(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.hx()
    }
    #[inline]
    pub fn yc(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.hy()
    }
}

/// Velocity on the staggered grid. `ux` has shape `(nux, ny)`, `uy` has shape
/// `(nx, nuy)`. On wall axes the normal boundary faces are part of the array
/// and are kept at zero by the solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct VecField {
    pub ux: Array2<f64>,
    pub uy: Array2<f64>,
}

impl VecField {
    pub fn zeros(g: &GridSpec) -> Self {
        VecField {
            ux: Array2::zeros((g.nux(), g.ny)),
            uy: Array2::zeros((g.nx, g.nuy())),
        }
    }

    pub fn scaled_add(&mut self, a: f64, other: &VecField) {
        self.ux.scaled_add(a, &other.ux);
        self.uy.scaled_add(a, &other.uy);
    }

    pub fn scale(&mut self, a: f64) {
        self.ux.mapv_inplace(|v| a * v);
        self.uy.mapv_inplace(|v| a * v);
    }

    pub fn linf(&self) -> f64 {
        let m1 = self.ux.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let m2 = self.uy.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        m1.max(m2)
    }

    /// Zero the wall-normal boundary faces (no-slip data).
    pub fn pin_walls(&mut self, g: &GridSpec) {
        if !g.periodic[0] {
            let last = g.nux() - 1;
            for j in 0..g.ny {
                self.ux[[0, j]] = 0.0;
                self.ux[[last, j]] = 0.0;
            }
        }
        if !g.periodic[1] {
            let last = g.nuy() - 1;
            for i in 0..g.nx {
                self.uy[[i, 0]] = 0.0;
                self.uy[[i, last]] = 0.0;
            }
        }
    }
}

#[inline]
fn wrap_inc(i: usize, n: usize) -> usize {
    if i + 1 == n {
        0
    } else {
        i + 1
    }
}

#[inline]
fn wrap_dec(i: usize, n: usize) -> usize {
    if i == 0 {
        n - 1
    } else {
        i - 1
    }
}

// ---------------------------------------------------------------------------
// First-order operators
// ---------------------------------------------------------------------------

/// Discrete divergence, faces -> cell centers. Exact for affine fields.
pub fn divergence(g: &GridSpec, u: &VecField) -> CellField {
    let (hx, hy) = (g.hx(), g.hy());
    let mut out = g.zeros_cell();
    for i in 0..g.nx {
        let ip = if g.periodic[0] { wrap_inc(i, g.nx) } else { i + 1 };
        for j in 0..g.ny {
            let jp = if g.periodic[1] { wrap_inc(j, g.ny) } else { j + 1 };
            out[[i, j]] = (u.ux[[ip, j]] - u.ux[[i, j]]) / hx + (u.uy[[i, jp]] - u.uy[[i, j]]) / hy;
        }
    }
    out
}

/// Discrete gradient, cell centers -> faces. On wall axes the boundary faces
/// get zero (homogeneous Neumann data for the scalar), so that
/// `<grad p, u> = -<p, div u>` holds for any `u` with zero wall-normal faces.
pub fn gradient(g: &GridSpec, p: &CellField) -> VecField {
    let (hx, hy) = (g.hx(), g.hy());
    let mut out = VecField::zeros(g);
    if g.periodic[0] {
        for i in 0..g.nx {
            let im = wrap_dec(i, g.nx);
            for j in 0..g.ny {
                out.ux[[i, j]] = (p[[i, j]] - p[[im, j]]) / hx;
            }
        }
    } else {
        for i in 1..g.nx {
            for j in 0..g.ny {
                out.ux[[i, j]] = (p[[i, j]] - p[[i - 1, j]]) / hx;
            }
        }
    }
    if g.periodic[1] {
        for i in 0..g.nx {
            for j in 0..g.ny {
                let jm = wrap_dec(j, g.ny);
                out.uy[[i, j]] = (p[[i, j]] - p[[i, jm]]) / hy;
            }
        }
    } else {
        for i in 0..g.nx {
            for j in 1..g.ny {
                out.uy[[i, j]] = (p[[i, j]] - p[[i, j - 1]]) / hy;
            }
        }
    }
    out
}

/// Composition `div(grad c)`: the 5-point Laplacian with periodic or zero-flux
/// closures per axis. This is the exact stencil the spectral solvers invert.
pub fn laplacian_cell(g: &GridSpec, c: &CellField) -> CellField {
    divergence(g, &gradient(g, c))
}

// ---------------------------------------------------------------------------
// Inner products and norms
// ---------------------------------------------------------------------------

pub fn dot_cell(g: &GridSpec, a: &CellField, b: &CellField) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        s += x * y;
    }
    s * g.cell_area()
}

pub fn l2_cell(g: &GridSpec, a: &CellField) -> f64 {
    dot_cell(g, a, a).sqrt()
}

pub fn integral_cell(g: &GridSpec, a: &CellField) -> f64 {
    a.sum() * g.cell_area()
}

pub fn mean_cell(g: &GridSpec, a: &CellField) -> f64 {
    integral_cell(g, a) / g.area()
}

pub fn linf_cell(a: &CellField) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

pub fn dot_vec(g: &GridSpec, a: &VecField, b: &VecField) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.ux.iter().zip(b.ux.iter()) {
        s += x * y;
    }
    for (x, y) in a.uy.iter().zip(b.uy.iter()) {
        s += x * y;
    }
    s * g.cell_area()
}

pub fn l2_vec(g: &GridSpec, a: &VecField) -> f64 {
    dot_vec(g, a, a).sqrt()
}

/// `int |grad c|^2` with the same discrete gradient used everywhere else.
pub fn h1_seminorm_sq_cell(g: &GridSpec, c: &CellField) -> f64 {
    let gr = gradient(g, c);
    dot_vec(g, &gr, &gr)
}

// ---------------------------------------------------------------------------
// Advection
// ---------------------------------------------------------------------------

/// Conservative advection `div(u c)` of a cell scalar with centered face
/// averages. Wall-normal `u` faces are zero, so the total over the domain
/// telescopes to zero exactly: mass is conserved to roundoff.
pub fn advect_scalar(g: &GridSpec, u: &VecField, c: &CellField) -> CellField {
    let mut flux = VecField::zeros(g);
    if g.periodic[0] {
        for i in 0..g.nx {
            let im = wrap_dec(i, g.nx);
            for j in 0..g.ny {
                flux.ux[[i, j]] = u.ux[[i, j]] * 0.5 * (c[[im, j]] + c[[i, j]]);
            }
        }
    } else {
        for i in 1..g.nx {
            for j in 0..g.ny {
                flux.ux[[i, j]] = u.ux[[i, j]] * 0.5 * (c[[i - 1, j]] + c[[i, j]]);
            }
        }
    }
    if g.periodic[1] {
        for i in 0..g.nx {
            for j in 0..g.ny {
                let jm = wrap_dec(j, g.ny);
                flux.uy[[i, j]] = u.uy[[i, j]] * 0.5 * (c[[i, jm]] + c[[i, j]]);
            }
        }
    } else {
        for i in 0..g.nx {
            for j in 1..g.ny {
                flux.uy[[i, j]] = u.uy[[i, j]] * 0.5 * (c[[i, j - 1]] + c[[i, j]]);
            }
        }
    }
    divergence(g, &flux)
}

/// Convection `(u . grad) v` in divergence form `div(u v)` per component,
/// with the advecting velocity averaged onto each component's shifted control
/// volumes. When `div u = 0` discretely, `<adv(u, v), v> = 0` to roundoff:
/// the centered products telescope and the wall fluxes vanish.
pub fn advect_velocity(g: &GridSpec, u: &VecField, v: &VecField) -> VecField {
    let (hx, hy) = (g.hx(), g.hy());
    let mut out = VecField::zeros(g);

    // x-component: control volumes centered at x-faces.
    {
        let nux = g.nux();
        // x-fluxes at cell centers.
        let mut fx = g.zeros_cell();
        for i in 0..g.nx {
            let ip = if g.periodic[0] { wrap_inc(i, g.nx) } else { i + 1 };
            for j in 0..g.ny {
                let adv = 0.5 * (u.ux[[i, j]] + u.ux[[ip, j]]);
                let val = 0.5 * (v.ux[[i, j]] + v.ux[[ip, j]]);
                fx[[i, j]] = adv * val;
            }
        }
        // y-fluxes at corners shared with the x-face columns.
        let mut fy = Array2::zeros((nux, g.ncy()));
        for i in 0..nux {
            let (im_c, i_c) = if g.periodic[0] {
                (wrap_dec(i, g.nx), i)
            } else {
                // Interior corner columns only; walls are handled by the
                // output loop never reading fluxes that straddle them.
                if i == 0 || i == g.nx {
                    continue;
                }
                (i - 1, i)
            };
            for j in 0..g.ncy() {
                if !g.periodic[1] && (j == 0 || j == g.ny) {
                    // Wall corner: advecting normal velocity is exactly zero.
                    continue;
                }
                let jm = if g.periodic[1] { wrap_dec(j, g.ny) } else { j - 1 };
                let adv = 0.5 * (u.uy[[im_c, j]] + u.uy[[i_c, j]]);
                let val = 0.5 * (v.ux[[i, jm]] + v.ux[[i, j]]);
                fy[[i, j]] = adv * val;
            }
        }
        let irange: Box<dyn Iterator<Item = usize>> = if g.periodic[0] {
            Box::new(0..g.nx)
        } else {
            Box::new(1..g.nx)
        };
        for i in irange {
            let im = if g.periodic[0] { wrap_dec(i, g.nx) } else { i - 1 };
            for j in 0..g.ny {
                let jp = if g.periodic[1] { wrap_inc(j, g.ny) } else { j + 1 };
                out.ux[[i, j]] =
                    (fx[[i, j]] - fx[[im, j]]) / hx + (fy[[i, jp]] - fy[[i, j]]) / hy;
            }
        }
    }

    // y-component: mirror of the above.
    {
        let nuy = g.nuy();
        let mut fy = g.zeros_cell();
        for i in 0..g.nx {
            for j in 0..g.ny {
                let jp = if g.periodic[1] { wrap_inc(j, g.ny) } else { j + 1 };
                let adv = 0.5 * (u.uy[[i, j]] + u.uy[[i, jp]]);
                let val = 0.5 * (v.uy[[i, j]] + v.uy[[i, jp]]);
                fy[[i, j]] = adv * val;
            }
        }
        let mut fx = Array2::zeros((g.ncx(), nuy));
        for j in 0..nuy {
            let (jm_c, j_c) = if g.periodic[1] {
                (wrap_dec(j, g.ny), j)
            } else {
                if j == 0 || j == g.ny {
                    continue;
                }
                (j - 1, j)
            };
            for i in 0..g.ncx() {
                if !g.periodic[0] && (i == 0 || i == g.nx) {
                    continue;
                }
                let im = if g.periodic[0] { wrap_dec(i, g.nx) } else { i - 1 };
                let adv = 0.5 * (u.ux[[i, jm_c]] + u.ux[[i, j_c]]);
                let val = 0.5 * (v.uy[[im, j]] + v.uy[[i, j]]);
                fx[[i, j]] = adv * val;
            }
        }
        let jrange: Box<dyn Iterator<Item = usize>> = if g.periodic[1] {
            Box::new(0..g.ny)
        } else {
            Box::new(1..g.ny)
        };
        for j in jrange {
            let jm = if g.periodic[1] { wrap_dec(j, g.ny) } else { j - 1 };
            for i in 0..g.nx {
                let ip = if g.periodic[0] { wrap_inc(i, g.nx) } else { i + 1 };
                out.uy[[i, j]] =
                    (fy[[i, j]] - fy[[i, jm]]) / hy + (fx[[ip, j]] - fx[[i, j]]) / hx;
            }
        }
    }

    out
}

/// Capillary force at faces in conservative form: `-phibar * grad(mu)`.
/// This equals `mu grad(phi)` up to the gradient `grad(mu phi)`, which the
/// pressure projection absorbs (shifting the reported pressure by
/// `kappa mu phi`). The point of this form is the exact discrete identity
///
/// ```text
/// <advect_scalar(u, phi), mu> + <u, capillary_force(phi, mu)> = 0
/// ```
///
/// (because the face average of `phi` is shared and `gradient` is minus the
/// adjoint of `divergence`), so the capillary energy transfer between the
/// flow and the phase field cancels exactly in the discrete energy budget.
pub fn capillary_force(g: &GridSpec, phi: &CellField, mu: &CellField) -> VecField {
    let gmu = gradient(g, mu);
    let mut out = VecField::zeros(g);
    if g.periodic[0] {
        for i in 0..g.nx {
            let im = wrap_dec(i, g.nx);
            for j in 0..g.ny {
                out.ux[[i, j]] = -0.5 * (phi[[im, j]] + phi[[i, j]]) * gmu.ux[[i, j]];
            }
        }
    } else {
        for i in 1..g.nx {
            for j in 0..g.ny {
                out.ux[[i, j]] = -0.5 * (phi[[i - 1, j]] + phi[[i, j]]) * gmu.ux[[i, j]];
            }
        }
    }
    if g.periodic[1] {
        for i in 0..g.nx {
            for j in 0..g.ny {
                let jm = wrap_dec(j, g.ny);
                out.uy[[i, j]] = -0.5 * (phi[[i, jm]] + phi[[i, j]]) * gmu.uy[[i, j]];
            }
        }
    } else {
        for i in 0..g.nx {
            for j in 1..g.ny {
                out.uy[[i, j]] = -0.5 * (phi[[i, j - 1]] + phi[[i, j]]) * gmu.uy[[i, j]];
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Variable-tensor diffusion
// ---------------------------------------------------------------------------

/// Symmetric 2x2 coefficient samples at the flux evaluation points: cell
/// centers `(nx, ny)` and corners `(ncx, ncy)`.
#[derive(Debug, Clone)]
pub struct CoeffField {
    pub a11_c: Array2<f64>,
    pub a12_c: Array2<f64>,
    pub a22_c: Array2<f64>,
    pub a11_k: Array2<f64>,
    pub a12_k: Array2<f64>,
    pub a22_k: Array2<f64>,
}

impl CoeffField {
    pub fn constant(g: &GridSpec, a11: f64, a12: f64, a22: f64) -> Self {
        CoeffField {
            a11_c: Array2::from_elem((g.nx, g.ny), a11),
            a12_c: Array2::from_elem((g.nx, g.ny), a12),
            a22_c: Array2::from_elem((g.nx, g.ny), a22),
            a11_k: Array2::from_elem((g.ncx(), g.ncy()), a11),
            a12_k: Array2::from_elem((g.ncx(), g.ncy()), a12),
            a22_k: Array2::from_elem((g.ncx(), g.ncy()), a22),
        }
    }

    pub fn identity(g: &GridSpec) -> Self {
        Self::constant(g, 1.0, 0.0, 1.0)
    }
}

/// Derivative samples of one velocity component: the natural derivative at
/// cell centers and the transverse derivative at corners (wall ghosts by
/// reflection). These are the building blocks of the diffusion operator, its
/// quadratic form, and the gradient-based diagnostics.
pub(crate) struct CompGrad {
    /// d(comp)/d(own axis) at cell centers, shape (nx, ny).
    pub dc: Array2<f64>,
    /// d(comp)/d(other axis) at corners, shape (ncx, ncy).
    pub dk: Array2<f64>,
}

/// Gradient samples for `ux`: `dc = d(ux)/dx` at centers, `dk = d(ux)/dy` at
/// corners.
pub(crate) fn grad_ux(g: &GridSpec, ux: &Array2<f64>) -> CompGrad {
    let (hx, hy) = (g.hx(), g.hy());
    let mut dc = g.zeros_cell();
    for i in 0..g.nx {
        let ip = if g.periodic[0] { wrap_inc(i, g.nx) } else { i + 1 };
        for j in 0..g.ny {
            dc[[i, j]] = (ux[[ip, j]] - ux[[i, j]]) / hx;
        }
    }
    let mut dk = Array2::zeros((g.ncx(), g.ncy()));
    for i in 0..g.ncx() {
        for j in 0..g.ncy() {
            dk[[i, j]] = if g.periodic[1] {
                (ux[[i, j]] - ux[[i, wrap_dec(j, g.ny)]]) / hy
            } else if j == 0 {
                2.0 * ux[[i, 0]] / hy
            } else if j == g.ny {
                -2.0 * ux[[i, g.ny - 1]] / hy
            } else {
                (ux[[i, j]] - ux[[i, j - 1]]) / hy
            };
        }
    }
    CompGrad { dc, dk }
}

/// Gradient samples for `uy`: `dc = d(uy)/dy` at centers, `dk = d(uy)/dx` at
/// corners.
pub(crate) fn grad_uy(g: &GridSpec, uy: &Array2<f64>) -> CompGrad {
    let (hx, hy) = (g.hx(), g.hy());
    let mut dc = g.zeros_cell();
    for i in 0..g.nx {
        for j in 0..g.ny {
            let jp = if g.periodic[1] { wrap_inc(j, g.ny) } else { j + 1 };
            dc[[i, j]] = (uy[[i, jp]] - uy[[i, j]]) / hy;
        }
    }
    let mut dk = Array2::zeros((g.ncx(), g.ncy()));
    for j in 0..g.ncy() {
        for i in 0..g.ncx() {
            dk[[i, j]] = if g.periodic[0] {
                (uy[[i, j]] - uy[[wrap_dec(i, g.nx), j]]) / hx
            } else if i == 0 {
                2.0 * uy[[0, j]] / hx
            } else if i == g.nx {
                -2.0 * uy[[g.nx - 1, j]] / hx
            } else {
                (uy[[i, j]] - uy[[i - 1, j]]) / hx
            };
        }
    }
    CompGrad { dk, dc }
}

/// Adjoint of `grad_ux.dc`: accumulate center values back onto `ux` faces.
pub(crate) fn scatter_dc_ux(g: &GridSpec, s: &Array2<f64>, out: &mut Array2<f64>) {
    let hx = g.hx();
    for i in 0..g.nx {
        let ip = if g.periodic[0] { wrap_inc(i, g.nx) } else { i + 1 };
        for j in 0..g.ny {
            let v = s[[i, j]] / hx;
            out[[ip, j]] += v;
            out[[i, j]] -= v;
        }
    }
}

/// Adjoint of `grad_ux.dk`.
pub(crate) fn scatter_dk_ux(g: &GridSpec, s: &Array2<f64>, out: &mut Array2<f64>) {
    let hy = g.hy();
    for i in 0..g.ncx() {
        for j in 0..g.ncy() {
            let v = s[[i, j]] / hy;
            if g.periodic[1] {
                out[[i, j]] += v;
                out[[i, wrap_dec(j, g.ny)]] -= v;
            } else if j == 0 {
                out[[i, 0]] += 2.0 * v;
            } else if j == g.ny {
                out[[i, g.ny - 1]] -= 2.0 * v;
            } else {
                out[[i, j]] += v;
                out[[i, j - 1]] -= v;
            }
        }
    }
}

pub(crate) fn scatter_dc_uy(g: &GridSpec, s: &Array2<f64>, out: &mut Array2<f64>) {
    let hy = g.hy();
    for i in 0..g.nx {
        for j in 0..g.ny {
            let jp = if g.periodic[1] { wrap_inc(j, g.ny) } else { j + 1 };
            let v = s[[i, j]] / hy;
            out[[i, jp]] += v;
            out[[i, j]] -= v;
        }
    }
}

pub(crate) fn scatter_dk_uy(g: &GridSpec, s: &Array2<f64>, out: &mut Array2<f64>) {
    let hx = g.hx();
    for i in 0..g.ncx() {
        for j in 0..g.ncy() {
            let v = s[[i, j]] / hx;
            if g.periodic[0] {
                out[[i, j]] += v;
                out[[wrap_dec(i, g.nx), j]] -= v;
            } else if i == 0 {
                out[[0, j]] += 2.0 * v;
            } else if i == g.nx {
                out[[g.nx - 1, j]] -= 2.0 * v;
            } else {
                out[[i, j]] += v;
                out[[i - 1, j]] -= v;
            }
        }
    }
}

/// Average a corner array onto cell centers (4-point mean).
pub(crate) fn avg_corner_to_center(g: &GridSpec, k: &Array2<f64>) -> Array2<f64> {
    let mut c = g.zeros_cell();
    for i in 0..g.nx {
        let ip = if g.periodic[0] { wrap_inc(i, g.nx) } else { i + 1 };
        for j in 0..g.ny {
            let jp = if g.periodic[1] { wrap_inc(j, g.ny) } else { j + 1 };
            c[[i, j]] = 0.25 * (k[[i, j]] + k[[ip, j]] + k[[i, jp]] + k[[ip, jp]]);
        }
    }
    c
}

/// Adjoint of `avg_corner_to_center`.
pub(crate) fn scatter_center_to_corner(g: &GridSpec, s: &Array2<f64>, out: &mut Array2<f64>) {
    for i in 0..g.nx {
        let ip = if g.periodic[0] { wrap_inc(i, g.nx) } else { i + 1 };
        for j in 0..g.ny {
            let jp = if g.periodic[1] { wrap_inc(j, g.ny) } else { j + 1 };
            let v = 0.25 * s[[i, j]];
            out[[i, j]] += v;
            out[[ip, j]] += v;
            out[[i, jp]] += v;
            out[[ip, jp]] += v;
        }
    }
}

/// Corner quadrature weight: 1 interior, 1/2 on a wall edge, 1/4 at a wall
/// corner. Periodic axes contribute 1. These weights make the wall stencil
/// agree with ghost-cell reflection.
#[inline]
pub(crate) fn corner_weight(g: &GridSpec, i: usize, j: usize) -> f64 {
    let wx = if !g.periodic[0] && (i == 0 || i == g.nx) { 0.5 } else { 1.0 };
    let wy = if !g.periodic[1] && (j == 0 || j == g.ny) { 0.5 } else { 1.0 };
    wx * wy
}

/// `div(A grad u)` applied componentwise: the 2x2 tensor `A` acts on the
/// gradient of each velocity component separately. Assembled as the exact
/// (negative) gradient of the quadratic form
///
/// ```text
/// Q(u) = sum_centers [a11 (dux/dx)^2 + 2 a12 (dux/dx) avg(dux/dy)] + sum_corners w a22 (dux/dy)^2
///      + sum_centers [a22 (duy/dy)^2 + 2 a12 (duy/dy) avg(duy/dx)] + sum_corners w a11 (duy/dx)^2
/// ```
///
/// so the operator is symmetric by construction, negative semidefinite for
/// elliptic `A`, and reduces to the 5-point vector Laplacian when `A = I`.
/// Output at wall-normal boundary faces is zero (those dofs are pinned).
pub fn tensor_diffusion(g: &GridSpec, u: &VecField, a: &CoeffField) -> VecField {
    let mut out = VecField::zeros(g);

    // x-component.
    {
        let gr = grad_ux(g, &u.ux);
        let dk_avg = avg_corner_to_center(g, &gr.dk);
        // Slot paired with d/dx at centers.
        let mut sc = g.zeros_cell();
        // Slot paired with d/dy at corners.
        let mut sk = Array2::zeros((g.ncx(), g.ncy()));
        for i in 0..g.nx {
            for j in 0..g.ny {
                sc[[i, j]] = a.a11_c[[i, j]] * gr.dc[[i, j]] + a.a12_c[[i, j]] * dk_avg[[i, j]];
            }
        }
        for i in 0..g.ncx() {
            for j in 0..g.ncy() {
                sk[[i, j]] = corner_weight(g, i, j) * a.a22_k[[i, j]] * gr.dk[[i, j]];
            }
        }
        // Mixed term: a12 * (d/dx) enters the corner slot through the average.
        let mut mixed = g.zeros_cell();
        for i in 0..g.nx {
            for j in 0..g.ny {
                mixed[[i, j]] = a.a12_c[[i, j]] * gr.dc[[i, j]];
            }
        }
        scatter_center_to_corner(g, &mixed, &mut sk);
        let mut acc = Array2::zeros(u.ux.raw_dim());
        scatter_dc_ux(g, &sc, &mut acc);
        scatter_dk_ux(g, &sk, &mut acc);
        out.ux = -acc;
    }

    // y-component.
    {
        let gr = grad_uy(g, &u.uy);
        let dk_avg = avg_corner_to_center(g, &gr.dk);
        let mut sc = g.zeros_cell();
        let mut sk = Array2::zeros((g.ncx(), g.ncy()));
        for i in 0..g.nx {
            for j in 0..g.ny {
                sc[[i, j]] = a.a22_c[[i, j]] * gr.dc[[i, j]] + a.a12_c[[i, j]] * dk_avg[[i, j]];
            }
        }
        for i in 0..g.ncx() {
            for j in 0..g.ncy() {
                sk[[i, j]] = corner_weight(g, i, j) * a.a11_k[[i, j]] * gr.dk[[i, j]];
            }
        }
        let mut mixed = g.zeros_cell();
        for i in 0..g.nx {
            for j in 0..g.ny {
                mixed[[i, j]] = a.a12_c[[i, j]] * gr.dc[[i, j]];
            }
        }
        scatter_center_to_corner(g, &mixed, &mut sk);
        let mut acc = Array2::zeros(u.uy.raw_dim());
        scatter_dc_uy(g, &sc, &mut acc);
        scatter_dk_uy(g, &sk, &mut acc);
        out.uy = -acc;
    }

    out.pin_walls(g);
    out
}

/// Diagonal of `-tensor_diffusion` (for Jacobi preconditioning). The mixed
/// `a12` term has zero interior diagonal and is ignored here. Wall-pinned
/// faces get 1.0 (identity rows: those dofs are constrained to zero).
pub fn tensor_diffusion_diag(g: &GridSpec, a: &CoeffField) -> VecField {
    let (hx2, hy2) = (g.hx() * g.hx(), g.hy() * g.hy());
    let mut d = VecField::zeros(g);
    for i in 0..g.nux() {
        // Centers left/right of face i: (i-1, i) with wrap.
        for j in 0..g.ny {
            let mut v = 0.0;
            if g.periodic[0] {
                v += (a.a11_c[[wrap_dec(i, g.nx), j]] + a.a11_c[[i, j]]) / hx2;
            } else {
                if i > 0 {
                    v += a.a11_c[[i - 1, j]] / hx2;
                }
                if i < g.nx {
                    v += a.a11_c[[i, j]] / hx2;
                }
            }
            // Corners below/above: (i, j) and (i, j+1).
            let jp = if g.periodic[1] { wrap_inc(j, g.ny) } else { j + 1 };
            let c_lo = if !g.periodic[1] && j == 0 { 4.0 } else { 1.0 };
            let c_hi = if !g.periodic[1] && j == g.ny - 1 { 4.0 } else { 1.0 };
            v += corner_weight(g, i, j) * a.a22_k[[i, j]] * c_lo / hy2;
            v += corner_weight(g, i, jp) * a.a22_k[[i, jp]] * c_hi / hy2;
            d.ux[[i, j]] = v;
        }
    }
    for j in 0..g.nuy() {
        for i in 0..g.nx {
            let mut v = 0.0;
            if g.periodic[1] {
                v += (a.a22_c[[i, wrap_dec(j, g.ny)]] + a.a22_c[[i, j]]) / hy2;
            } else {
                if j > 0 {
                    v += a.a22_c[[i, j - 1]] / hy2;
                }
                if j < g.ny {
                    v += a.a22_c[[i, j]] / hy2;
                }
            }
            let ip = if g.periodic[0] { wrap_inc(i, g.nx) } else { i + 1 };
            let c_lo = if !g.periodic[0] && i == 0 { 4.0 } else { 1.0 };
            let c_hi = if !g.periodic[0] && i == g.nx - 1 { 4.0 } else { 1.0 };
            v += corner_weight(g, i, j) * a.a11_k[[i, j]] * c_lo / hx2;
            v += corner_weight(g, ip, j) * a.a11_k[[ip, j]] * c_hi / hx2;
            d.uy[[i, j]] = v;
        }
    }
    if !g.periodic[0] {
        let last = g.nux() - 1;
        for j in 0..g.ny {
            d.ux[[0, j]] = 1.0;
            d.ux[[last, j]] = 1.0;
        }
    }
    if !g.periodic[1] {
        let last = g.nuy() - 1;
        for i in 0..g.nx {
            d.uy[[i, 0]] = 1.0;
            d.uy[[i, last]] = 1.0;
        }
    }
    d
}

/// The quadratic form `sum A grad(u) : grad(u)` behind `tensor_diffusion`
/// (midpoint quadrature at the flux points, times cell area). This is the
/// viscous dissipation integrand; it is nonnegative for elliptic `A` up to
/// the mixed-term averaging.
pub fn tensor_dissipation(g: &GridSpec, u: &VecField, a: &CoeffField) -> f64 {
    let area = g.cell_area();
    let mut q = 0.0;
    {
        let gr = grad_ux(g, &u.ux);
        let dk_avg = avg_corner_to_center(g, &gr.dk);
        for i in 0..g.nx {
            for j in 0..g.ny {
                q += a.a11_c[[i, j]] * gr.dc[[i, j]] * gr.dc[[i, j]]
                    + 2.0 * a.a12_c[[i, j]] * gr.dc[[i, j]] * dk_avg[[i, j]];
            }
        }
        for i in 0..g.ncx() {
            for j in 0..g.ncy() {
                q += corner_weight(g, i, j) * a.a22_k[[i, j]] * gr.dk[[i, j]] * gr.dk[[i, j]];
            }
        }
    }
    {
        let gr = grad_uy(g, &u.uy);
        let dk_avg = avg_corner_to_center(g, &gr.dk);
        for i in 0..g.nx {
            for j in 0..g.ny {
                q += a.a22_c[[i, j]] * gr.dc[[i, j]] * gr.dc[[i, j]]
                    + 2.0 * a.a12_c[[i, j]] * gr.dc[[i, j]] * dk_avg[[i, j]];
            }
        }
        for i in 0..g.ncx() {
            for j in 0..g.ncy() {
                q += corner_weight(g, i, j) * a.a11_k[[i, j]] * gr.dk[[i, j]] * gr.dk[[i, j]];
            }
        }
    }
    q * area
}

// ---------------------------------------------------------------------------
// Field dumps: raw little-endian f64 plus a JSON sidecar
// ---------------------------------------------------------------------------

fn write_raw_f64(path: &Path, data: &Array2<f64>) -> Result<()> {
    let mut buf = Vec::with_capacity(data.len() * 8);
    for v in data.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

fn write_sidecar(path: &Path, name: &str, g: &GridSpec, t: f64, stagger: &str) -> Result<()> {
    let meta = serde_json::json!({
        "field": name,
        "nx": g.nx,
        "ny": g.ny,
        "lx": g.lx,
        "ly": g.ly,
        "t": t,
        "stagger": stagger,
    });
    let mut f = std::fs::File::create(path)?;
    f.write_all(serde_json::to_string_pretty(&meta).unwrap().as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Dump a cell field as `<dir>/<name>.f64` (row-major, `j` fastest, little
/// endian) with sidecar `<dir>/<name>.json`.
pub fn dump_cell(dir: &Path, name: &str, g: &GridSpec, t: f64, f: &CellField) -> Result<()> {
    write_raw_f64(&dir.join(format!("{name}.f64")), f)?;
    write_sidecar(&dir.join(format!("{name}.json")), name, g, t, "center")
}

/// Dump both components of a staggered field (`<name>_ux`, `<name>_uy`).
pub fn dump_vec(dir: &Path, name: &str, g: &GridSpec, t: f64, u: &VecField) -> Result<()> {
    let nx_name = format!("{name}_ux");
    let ny_name = format!("{name}_uy");
    write_raw_f64(&dir.join(format!("{nx_name}.f64")), &u.ux)?;
    write_sidecar(&dir.join(format!("{nx_name}.json")), &nx_name, g, t, "face_x")?;
    write_raw_f64(&dir.join(format!("{ny_name}.f64")), &u.uy)?;
    write_sidecar(&dir.join(format!("{ny_name}.json")), &ny_name, g, t, "face_y")
}

/// Read back a dump written by `dump_cell`/`dump_vec`. Array dims are derived
/// from the sidecar's `nx`/`ny`, the stagger tag and the file length.
pub fn load_field(dir: &Path, name: &str) -> Result<(serde_json::Value, Array2<f64>)> {
    let meta_s = std::fs::read_to_string(dir.join(format!("{name}.json")))?;
    let meta: serde_json::Value =
        serde_json::from_str(&meta_s).map_err(|e| Error::Config(format!("bad sidecar: {e}")))?;
    let mut raw = Vec::new();
    std::fs::File::open(dir.join(format!("{name}.f64")))?.read_to_end(&mut raw)?;
    if raw.len() % 8 != 0 {
        return Err(Error::ShapeMismatch(format!("{name}.f64 not a multiple of 8 bytes")));
    }
    let vals: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let nx = meta["nx"].as_u64().ok_or_else(|| Error::Config("sidecar missing nx".into()))? as usize;
    let ny = meta["ny"].as_u64().ok_or_else(|| Error::Config("sidecar missing ny".into()))? as usize;
    let cols = match meta["stagger"].as_str() {
        Some("face_y") => vals.len() / nx,
        _ => ny,
    };
    let rows = vals.len() / cols;
    let arr = Array2::from_shape_vec((rows, cols), vals)
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    Ok((meta, arr))
}
