//! Exact spectral solvers for the constant-coefficient stencils on the cell
//! grid: the 5-point Laplacian with per-axis periodic (FFT) or zero-flux
//! (DCT-II) closures, and polynomials of it.
//!
//! These invert the *discrete* operators from [`crate::grid`] to roundoff,
//! which is what makes the projection step exactly divergence-free and the
//! phase-field update mass-conserving.

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

use crate::grid::{CellField, GridSpec, VecField};

type C64 = Complex<f64>;

/// Forward DCT-II of `x` through a length-`2n` complex FFT of the even
/// extension: `C_k = sum_j x_j cos(pi k (j+1/2)/n)`.
fn dct2_line(fft2n: &Arc<dyn Fft<f64>>, x: &mut [f64], buf: &mut Vec<C64>) {
    let n = x.len();
    buf.clear();
    buf.extend((0..2 * n).map(|j| {
        let v = if j < n { x[j] } else { x[2 * n - 1 - j] };
        C64::new(v, 0.0)
    }));
    fft2n.process(buf);
    for (k, xv) in x.iter_mut().enumerate() {
        let th = -PI * k as f64 / (2.0 * n as f64);
        *xv = 0.5 * (C64::from_polar(1.0, th) * buf[k]).re;
    }
}

/// Inverse of [`dct2_line`] (exact roundtrip): rebuild the even-extension
/// spectrum and run one inverse FFT.
fn idct2_line(ifft2n: &Arc<dyn Fft<f64>>, c: &mut [f64], buf: &mut Vec<C64>) {
    let n = c.len();
    buf.clear();
    buf.resize(2 * n, C64::new(0.0, 0.0));
    for k in 0..n {
        // E_k = 2 e^{i pi k/(2n)} C_k.
        let th = PI * k as f64 / (2.0 * n as f64);
        buf[k] = C64::from_polar(1.0, th) * C64::new(2.0 * c[k], 0.0);
    }
    // E_n = 0; conjugate symmetry for the rest.
    for k in n + 1..2 * n {
        buf[k] = buf[2 * n - k].conj();
    }
    ifft2n.process(buf);
    let scale = 1.0 / (2.0 * n as f64);
    for (j, cv) in c.iter_mut().enumerate() {
        *cv = buf[j].re * scale;
    }
}

/// Per-axis transform plans and `-laplacian` eigenvalues for one grid.
pub struct Solver {
    g: GridSpec,
    fx_f: Arc<dyn Fft<f64>>,
    fx_b: Arc<dyn Fft<f64>>,
    fy_f: Arc<dyn Fft<f64>>,
    fy_b: Arc<dyn Fft<f64>>,
    /// Eigenvalues of `-laplacian` contributed by each axis.
    sx: Vec<f64>,
    sy: Vec<f64>,
}

impl Solver {
    pub fn new(g: &GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        let (nx, ny) = (g.nx, g.ny);
        let lx_len = if g.periodic[0] { nx } else { 2 * nx };
        let ly_len = if g.periodic[1] { ny } else { 2 * ny };
        let (hx, hy) = (g.hx(), g.hy());
        let sx = (0..nx)
            .map(|i| {
                let s = if g.periodic[0] {
                    (PI * i as f64 / nx as f64).sin()
                } else {
                    (PI * i as f64 / (2.0 * nx as f64)).sin()
                };
                4.0 / (hx * hx) * s * s
            })
            .collect();
        let sy = (0..ny)
            .map(|j| {
                let s = if g.periodic[1] {
                    (PI * j as f64 / ny as f64).sin()
                } else {
                    (PI * j as f64 / (2.0 * ny as f64)).sin()
                };
                4.0 / (hy * hy) * s * s
            })
            .collect();
        Solver {
            g: *g,
            fx_f: planner.plan_fft_forward(lx_len),
            fx_b: planner.plan_fft_inverse(lx_len),
            fy_f: planner.plan_fft_forward(ly_len),
            fy_b: planner.plan_fft_inverse(ly_len),
            sx,
            sy,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.g
    }

    fn dct_x(&self, w: &mut Array2<f64>, inverse: bool) {
        let (nx, ny) = (self.g.nx, self.g.ny);
        let mut line = vec![0.0; nx];
        let mut buf = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                line[i] = w[[i, j]];
            }
            if inverse {
                idct2_line(&self.fx_b, &mut line, &mut buf);
            } else {
                dct2_line(&self.fx_f, &mut line, &mut buf);
            }
            for i in 0..nx {
                w[[i, j]] = line[i];
            }
        }
    }

    fn dct_y(&self, w: &mut Array2<f64>, inverse: bool) {
        let (nx, ny) = (self.g.nx, self.g.ny);
        let mut line = vec![0.0; ny];
        let mut buf = Vec::new();
        for i in 0..nx {
            for j in 0..ny {
                line[j] = w[[i, j]];
            }
            if inverse {
                idct2_line(&self.fy_b, &mut line, &mut buf);
            } else {
                dct2_line(&self.fy_f, &mut line, &mut buf);
            }
            for j in 0..ny {
                w[[i, j]] = line[j];
            }
        }
    }

    fn fft_x(&self, c: &mut Array2<C64>, inverse: bool) {
        let (nx, ny) = (self.g.nx, self.g.ny);
        let fft = if inverse { &self.fx_b } else { &self.fx_f };
        let mut line = vec![C64::new(0.0, 0.0); nx];
        for j in 0..ny {
            for i in 0..nx {
                line[i] = c[[i, j]];
            }
            fft.process(&mut line);
            for i in 0..nx {
                c[[i, j]] = line[i];
            }
        }
    }

    fn fft_y(&self, c: &mut Array2<C64>, inverse: bool) {
        let (nx, ny) = (self.g.nx, self.g.ny);
        let fft = if inverse { &self.fy_b } else { &self.fy_f };
        let mut line = vec![C64::new(0.0, 0.0); ny];
        for i in 0..nx {
            for j in 0..ny {
                line[j] = c[[i, j]];
            }
            fft.process(&mut line);
            for j in 0..ny {
                c[[i, j]] = line[j];
            }
        }
    }

    /// Apply `f` to the `-laplacian` eigenvalue of every mode: the output is
    /// the field whose transform is `f(sigma_i + sigma_j)` times the input's.
    pub fn apply_symbol(&self, rhs: &CellField, f: impl Fn(f64) -> f64) -> CellField {
        let g = &self.g;
        let mut w = rhs.clone();
        if !g.periodic[0] {
            self.dct_x(&mut w, false);
        }
        if !g.periodic[1] {
            self.dct_y(&mut w, false);
        }
        if g.periodic[0] || g.periodic[1] {
            let mut c = w.mapv(|v| C64::new(v, 0.0));
            if g.periodic[0] {
                self.fft_x(&mut c, false);
            }
            if g.periodic[1] {
                self.fft_y(&mut c, false);
            }
            for i in 0..g.nx {
                for j in 0..g.ny {
                    c[[i, j] ] *= f(self.sx[i] + self.sy[j]);
                }
            }
            let mut norm = 1.0;
            if g.periodic[1] {
                self.fft_y(&mut c, true);
                norm *= g.ny as f64;
            }
            if g.periodic[0] {
                self.fft_x(&mut c, true);
                norm *= g.nx as f64;
            }
            let inv = 1.0 / norm;
            w = c.mapv(|z| z.re * inv);
        } else {
            for i in 0..g.nx {
                for j in 0..g.ny {
                    w[[i, j]] *= f(self.sx[i] + self.sy[j]);
                }
            }
        }
        if !g.periodic[1] {
            self.dct_y(&mut w, true);
        }
        if !g.periodic[0] {
            self.dct_x(&mut w, true);
        }
        w
    }

    /// Solve `laplacian q = rhs` for the zero-mean `q`; the rhs mean (zero up
    /// to roundoff for projection right-hand sides) is discarded.
    pub fn solve_poisson_mean_zero(&self, rhs: &CellField) -> CellField {
        self.apply_symbol(rhs, |s| if s <= 0.0 { 0.0 } else { -1.0 / s })
    }

    /// Solve `(c0 + c1 (-lap) + c2 (-lap)^2) phi = rhs`. Requires a positive
    /// symbol, which holds whenever `c0 > 0` and `c1, c2 >= 0`.
    pub fn solve_helmholtz(&self, c0: f64, c1: f64, c2: f64, rhs: &CellField) -> CellField {
        debug_assert!(c0 > 0.0 && c1 >= 0.0 && c2 >= 0.0);
        self.apply_symbol(rhs, |s| 1.0 / (c0 + c1 * s + c2 * s * s))
    }
}

/// Forward DST-I over the interior of a node line (`x[0]` and `x[n]` are the
/// walls, kept zero): `S_k = sum_{i=1}^{n-1} x_i sin(pi k i / n)` via a
/// length-`2n` FFT of the odd extension. Its own inverse up to a `2/n` factor.
fn dst1_line(fft2n: &Arc<dyn Fft<f64>>, x: &mut [f64], buf: &mut Vec<C64>, scale: f64) {
    let n = x.len() - 1;
    buf.clear();
    buf.resize(2 * n, C64::new(0.0, 0.0));
    for i in 1..n {
        buf[i] = C64::new(x[i], 0.0);
        buf[2 * n - i] = C64::new(-x[i], 0.0);
    }
    fft2n.process(buf);
    x[0] = 0.0;
    x[n] = 0.0;
    for (k, xv) in x.iter_mut().enumerate().take(n).skip(1) {
        *xv = -0.5 * buf[k].im * scale;
    }
}

/// Forward DST-II on half-sample points: `S_m = sum_j x_j sin(pi m (j+1/2)/n)`
/// for modes `m = 1..n`, stored at `m-1`. Uses the identity
/// `sin(pi m (j+1/2)/n) = (-1)^j cos(pi (n-m) (j+1/2)/n)` to route through the
/// DCT-II.
fn dst2_line(fft2n: &Arc<dyn Fft<f64>>, x: &mut [f64], buf: &mut Vec<C64>) {
    for (j, v) in x.iter_mut().enumerate() {
        if j % 2 == 1 {
            *v = -*v;
        }
    }
    dct2_line(fft2n, x, buf);
    x.reverse();
    // After reversal index k holds C_{n-1-k} = S_{k+1}.
}

/// Inverse of [`dst2_line`] (exact roundtrip through the DCT pair).
fn idst2_line(ifft2n: &Arc<dyn Fft<f64>>, s: &mut [f64], buf: &mut Vec<C64>) {
    s.reverse();
    idct2_line(ifft2n, s, buf);
    for (j, v) in s.iter_mut().enumerate() {
        if j % 2 == 1 {
            *v = -*v;
        }
    }
}

/// How one axis of one velocity component closes at the domain edge.
#[derive(Debug, Clone, Copy, PartialEq)]
enum AxisKind {
    /// Wrap-around: complex FFT.
    Per,
    /// Component normal to the wall, stored on nodes, zero at both ends:
    /// DST-I on the interior.
    Nodes,
    /// Component tangential to the wall, stored at half-sample points with
    /// the odd ghost reflection `u(-h/2) = -u(h/2)`: DST-II.
    Half,
}

fn axis_eigs(kind: AxisKind, len: usize, n: usize, h: f64) -> Vec<f64> {
    let s2 = |t: f64| {
        let s = t.sin();
        4.0 / (h * h) * s * s
    };
    (0..len)
        .map(|k| match kind {
            AxisKind::Per => s2(PI * k as f64 / n as f64),
            // Wall entries (k = 0 and k = n) carry no data; eigenvalue 0 is a
            // harmless placeholder there.
            AxisKind::Nodes => s2(PI * k as f64 / (2.0 * n as f64)),
            AxisKind::Half => s2(PI * (k + 1) as f64 / (2.0 * n as f64)),
        })
        .collect()
}

/// Exact solver for `(c0 + c1 (-lap)) u = rhs` per velocity component, with
/// the same wall closures as the constant-coefficient viscous stencil
/// (zero at node walls, odd ghost reflection at tangential walls). Used as
/// the momentum preconditioner; for a constant scalar viscosity it *is* the
/// implicit momentum matrix.
pub struct VelSolver {
    g: GridSpec,
    fx_f: Arc<dyn Fft<f64>>,
    fx_b: Arc<dyn Fft<f64>>,
    fy_f: Arc<dyn Fft<f64>>,
    fy_b: Arc<dyn Fft<f64>>,
    ux_kinds: [AxisKind; 2],
    uy_kinds: [AxisKind; 2],
    ux_sx: Vec<f64>,
    ux_sy: Vec<f64>,
    uy_sx: Vec<f64>,
    uy_sy: Vec<f64>,
}

impl VelSolver {
    pub fn new(g: &GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        let lx_len = if g.periodic[0] { g.nx } else { 2 * g.nx };
        let ly_len = if g.periodic[1] { g.ny } else { 2 * g.ny };
        let pick = |p: bool, nodes: bool| {
            if p {
                AxisKind::Per
            } else if nodes {
                AxisKind::Nodes
            } else {
                AxisKind::Half
            }
        };
        let ux_kinds = [pick(g.periodic[0], true), pick(g.periodic[1], false)];
        let uy_kinds = [pick(g.periodic[0], false), pick(g.periodic[1], true)];
        VelSolver {
            g: *g,
            fx_f: planner.plan_fft_forward(lx_len),
            fx_b: planner.plan_fft_inverse(lx_len),
            fy_f: planner.plan_fft_forward(ly_len),
            fy_b: planner.plan_fft_inverse(ly_len),
            ux_kinds,
            uy_kinds,
            ux_sx: axis_eigs(ux_kinds[0], g.nux(), g.nx, g.hx()),
            ux_sy: axis_eigs(ux_kinds[1], g.ny, g.ny, g.hy()),
            uy_sx: axis_eigs(uy_kinds[0], g.nx, g.nx, g.hx()),
            uy_sy: axis_eigs(uy_kinds[1], g.nuy(), g.ny, g.hy()),
        }
    }

    fn real_pass_x(&self, kind: AxisKind, w: &mut Array2<f64>, inverse: bool) {
        let (m, n) = w.dim();
        let mut line = vec![0.0; m];
        let mut buf = Vec::new();
        for j in 0..n {
            for i in 0..m {
                line[i] = w[[i, j]];
            }
            match (kind, inverse) {
                (AxisKind::Nodes, false) => dst1_line(&self.fx_f, &mut line, &mut buf, 1.0),
                (AxisKind::Nodes, true) => {
                    dst1_line(&self.fx_f, &mut line, &mut buf, 2.0 / (m - 1) as f64)
                }
                (AxisKind::Half, false) => dst2_line(&self.fx_f, &mut line, &mut buf),
                (AxisKind::Half, true) => idst2_line(&self.fx_b, &mut line, &mut buf),
                (AxisKind::Per, _) => unreachable!("periodic axes use the complex path"),
            }
            for i in 0..m {
                w[[i, j]] = line[i];
            }
        }
    }

    fn real_pass_y(&self, kind: AxisKind, w: &mut Array2<f64>, inverse: bool) {
        let (m, n) = w.dim();
        let mut line = vec![0.0; n];
        let mut buf = Vec::new();
        for i in 0..m {
            for j in 0..n {
                line[j] = w[[i, j]];
            }
            match (kind, inverse) {
                (AxisKind::Nodes, false) => dst1_line(&self.fy_f, &mut line, &mut buf, 1.0),
                (AxisKind::Nodes, true) => {
                    dst1_line(&self.fy_f, &mut line, &mut buf, 2.0 / (n - 1) as f64)
                }
                (AxisKind::Half, false) => dst2_line(&self.fy_f, &mut line, &mut buf),
                (AxisKind::Half, true) => idst2_line(&self.fy_b, &mut line, &mut buf),
                (AxisKind::Per, _) => unreachable!("periodic axes use the complex path"),
            }
            for j in 0..n {
                w[[i, j]] = line[j];
            }
        }
    }

    fn solve_component(
        &self,
        a: &Array2<f64>,
        kinds: [AxisKind; 2],
        sx: &[f64],
        sy: &[f64],
        c0: f64,
        c1: f64,
    ) -> Array2<f64> {
        let (m, n) = a.dim();
        let mut w = a.clone();
        if kinds[0] != AxisKind::Per {
            self.real_pass_x(kinds[0], &mut w, false);
        }
        if kinds[1] != AxisKind::Per {
            self.real_pass_y(kinds[1], &mut w, false);
        }
        let sym = |i: usize, j: usize| 1.0 / (c0 + c1 * (sx[i] + sy[j]));
        if kinds[0] == AxisKind::Per || kinds[1] == AxisKind::Per {
            let mut c = w.mapv(|v| C64::new(v, 0.0));
            let mut norm = 1.0;
            if kinds[0] == AxisKind::Per {
                fft_lines_x(&self.fx_f, &mut c);
            }
            if kinds[1] == AxisKind::Per {
                fft_lines_y(&self.fy_f, &mut c);
            }
            for i in 0..m {
                for j in 0..n {
                    c[[i, j]] *= sym(i, j);
                }
            }
            if kinds[1] == AxisKind::Per {
                fft_lines_y(&self.fy_b, &mut c);
                norm *= n as f64;
            }
            if kinds[0] == AxisKind::Per {
                fft_lines_x(&self.fx_b, &mut c);
                norm *= m as f64;
            }
            let inv = 1.0 / norm;
            w = c.mapv(|z| z.re * inv);
        } else {
            for i in 0..m {
                for j in 0..n {
                    w[[i, j]] *= sym(i, j);
                }
            }
        }
        if kinds[1] != AxisKind::Per {
            self.real_pass_y(kinds[1], &mut w, true);
        }
        if kinds[0] != AxisKind::Per {
            self.real_pass_x(kinds[0], &mut w, true);
        }
        w
    }

    /// Solve `(c0 + c1 (-lap)) u = rhs` componentwise. `c0 > 0`, `c1 >= 0`.
    /// Wall values of the output are exactly zero.
    pub fn solve(&self, c0: f64, c1: f64, rhs: &VecField) -> VecField {
        debug_assert!(c0 > 0.0 && c1 >= 0.0);
        let mut out = VecField {
            ux: self.solve_component(&rhs.ux, self.ux_kinds, &self.ux_sx, &self.ux_sy, c0, c1),
            uy: self.solve_component(&rhs.uy, self.uy_kinds, &self.uy_sx, &self.uy_sy, c0, c1),
        };
        out.pin_walls(&self.g);
        out
    }
}

fn fft_lines_x(fft: &Arc<dyn Fft<f64>>, c: &mut Array2<C64>) {
    let (m, n) = c.dim();
    let mut line = vec![C64::new(0.0, 0.0); m];
    for j in 0..n {
        for i in 0..m {
            line[i] = c[[i, j]];
        }
        fft.process(&mut line);
        for i in 0..m {
            c[[i, j]] = line[i];
        }
    }
}

fn fft_lines_y(fft: &Arc<dyn Fft<f64>>, c: &mut Array2<C64>) {
    let (m, n) = c.dim();
    let mut line = vec![C64::new(0.0, 0.0); n];
    for i in 0..m {
        for j in 0..n {
            line[j] = c[[i, j]];
        }
        fft.process(&mut line);
        for j in 0..n {
            c[[i, j]] = line[j];
        }
    }
}
