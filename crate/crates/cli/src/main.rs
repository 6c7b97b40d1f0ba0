//! Command-line driver. Subcommands cover the homogenization pipeline:
//! effective-tensor computation, time integration of the coupled system with
//! either coefficient, the heterogeneous-vs-homogenized sweep, mean values of
//! the viscosity pattern over growing boxes, and an ellipticity probe.
//!
//! Errors print one JSON line to stderr; configuration problems exit with
//! code 2, runtime failures with 1.

mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chns_core::cell::{effective_tensor, CellProblemCfg};
use chns_core::chns::{CoeffSpec, SimConfig, Simulator};
use chns_core::error::{Error, Result};
use chns_core::grid::{
    advect_velocity, divergence, dot_cell, dot_vec, dump_cell, dump_vec, gradient, l2_cell,
    l2_vec, GridSpec, VecField,
};
use chns_core::harness::{homogenization_sweep, write_sweep_csv, SweepConfig};
use chns_core::meanvalue::{doubling_schedule, mean_value};
use chns_core::viscosity::{ModelKind, ViscosityModel};
use clap::{Parser, Subcommand};

use config::Config;

#[derive(Parser)]
#[command(
    name = "chns",
    about = "Homogenization toolkit for a two-phase flow with oscillating viscosity",
    version
)]
struct Cli {
    /// Print a fully commented configuration template and exit.
    #[arg(long)]
    config_schema: bool,
    /// Cap the number of worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Option<Cmd>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the periodic cell problems and write the effective tensor.
    Cell {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
    },
    /// Integrate the coupled system; write the energy series and final fields.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Heterogeneous-vs-homogenized error sweep over epsilon.
    Converge {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mean values of the viscosity pattern over boxes of doubling size.
    Meanvalue {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in invariant suite (ellipticity probe, operator
    /// adjointness, trivial cell tensor); pass/fail table plus a JSON summary.
    Verify {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    if cli.config_schema {
        print!("{}", config::SCHEMA);
        return;
    }
    if let Some(j) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global()
            .ok();
    }
    let Some(cmd) = cli.cmd else {
        eprintln!("{}", serde_json::json!({"error": {"type": "usage", "message": "no subcommand; try --help"}}));
        std::process::exit(2);
    };
    if let Err(e) = run(cmd) {
        let (code, kind) = match &e {
            Error::Config(_) | Error::InvalidParam { .. } => (2, "config"),
            _ => (1, "runtime"),
        };
        eprintln!("{}", serde_json::json!({"error": {"type": kind, "message": e.to_string()}}));
        std::process::exit(code);
    }
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Cell { config, out } => cmd_cell(&load(config.as_deref())?, &out),
        Cmd::Simulate { config, out } => cmd_simulate(&load(config.as_deref())?, &out),
        Cmd::Converge { config, out } => cmd_converge(&load(config.as_deref())?, &out),
        Cmd::Meanvalue { config, out } => cmd_meanvalue(&load(config.as_deref())?, &out),
        Cmd::Verify { config } => cmd_verify(&load(config.as_deref())?),
    }
}

fn load(path: Option<&Path>) -> Result<Config> {
    config::load(path)
}

fn ensure_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    Ok(())
}

fn phase(msg: &str) {
    eprintln!("[chns] {msg}");
}

fn tensor_json(cfg: &Config, comp: &chns_core::cell::TensorComputation) -> serde_json::Value {
    serde_json::json!({
        "model": cfg.model.kind,
        "cell_n": cfg.cell.n,
        "n_tau": cfg.cell.n_tau,
        // Row-major over slots (2*direction + component): entry (s, s') is
        // the coefficient pairing unit strain s' against test strain s.
        "tensor_flat": comp.tensor.flat().to_vec(),
        "flux_tensor_flat": comp.flux_tensor.flat().to_vec(),
        "route_diff": comp.route_diff,
        "major_symmetry_defect": comp.tensor.major_symmetry_defect(),
        "eigenvalues": comp.tensor.eigenvalues().to_vec(),
        "max_momentum_residual": comp.max_momentum_residual,
        "max_divergence_residual": comp.max_divergence_residual,
        "config_sha256": config::config_sha256(cfg),
    })
}

fn write_json(path: &Path, v: &serde_json::Value) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(serde_json::to_string_pretty(v).unwrap().as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}

fn cmd_cell(cfg: &Config, out: &Path) -> Result<()> {
    ensure_dir(out)?;
    let model = cfg.model.to_model()?;
    let micro = model.micro_model()?;
    phase(&format!(
        "cell problems: model `{}`, {}x{} cell grid, {} time slice(s)",
        micro.kind().name(),
        cfg.cell.n,
        cfg.cell.n,
        if micro.tau_dependent() { cfg.cell.n_tau.max(2) } else { 1 }
    ));
    let comp = effective_tensor(&micro, &cfg.cell.to_cfg())?;
    write_json(&out.join("tensor.json"), &tensor_json(cfg, &comp))?;
    let m = comp.tensor.flat();
    println!("effective tensor (slot matrix, row-major):");
    for r in 0..4 {
        println!(
            "  [{:+.6e} {:+.6e} {:+.6e} {:+.6e}]",
            m[4 * r],
            m[4 * r + 1],
            m[4 * r + 2],
            m[4 * r + 3]
        );
    }
    println!(
        "route difference {:.3e}, symmetry defect {:.3e}",
        comp.route_diff,
        comp.tensor.major_symmetry_defect()
    );
    Ok(())
}

fn energy_csv(path: &Path, hist: &[chns_core::chns::EnergyRecord]) -> Result<()> {
    let mut s = String::from(
        "t,kinetic,interfacial,potential,total,visc_dissipation,mixing_dissipation,work,mass,div_linf\n",
    );
    for r in hist {
        s.push_str(&format!(
            "{:.9e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.3e}\n",
            r.t,
            r.kinetic,
            r.interfacial,
            r.potential,
            r.total,
            r.visc_dissipation,
            r.mixing_dissipation,
            r.work,
            r.mass,
            r.div_linf
        ));
    }
    fs::write(path, s)?;
    Ok(())
}

fn cmd_simulate(cfg: &Config, out: &Path) -> Result<()> {
    ensure_dir(out)?;
    let model = cfg.model.to_model()?;
    let grid = GridSpec::walled(cfg.grid.n, cfg.grid.n, cfg.grid.lx, cfg.grid.ly);
    let mut tensor_info = None;
    let coeff = match cfg.simulate.mode.as_str() {
        "heterogeneous" => CoeffSpec::Heterogeneous {
            model: model.clone(),
            epsilon: cfg.simulate.epsilon,
        },
        "homogenized" => {
            let micro = model.micro_model()?;
            phase("computing effective tensor for the homogenized run");
            let comp = effective_tensor(&micro, &cfg.cell.to_cfg())?;
            let modulation = if matches!(
                model.kind(),
                chns_core::viscosity::ModelKind::SeparableMacro { .. }
            ) {
                Some(model.clone())
            } else {
                None
            };
            tensor_info = Some(comp.tensor.flat().to_vec());
            CoeffSpec::Homogenized { tensor: comp.tensor, modulation }
        }
        other => {
            return Err(Error::Config(format!(
                "unknown simulate.mode `{other}` (expected heterogeneous or homogenized)"
            )))
        }
    };
    let sim_cfg = SimConfig {
        grid,
        phys: cfg.physics.to_params(),
        time: cfg.time.to_params(),
        coeff,
        forcing: config::forcing_of(cfg.forcing),
        phi_init: cfg.init.phi_init()?,
        vel_init: cfg.init.vel_init()?,
    };
    let mut sim = Simulator::new(sim_cfg)?;
    let n = sim.time.n_steps();
    phase(&format!(
        "simulate: {} mode, {}x{} grid, {} steps to t = {}",
        cfg.simulate.mode, cfg.grid.n, cfg.grid.n, n, sim.time.t_end
    ));
    let stride = cfg.simulate.snapshot_stride;
    let report_every = (n / 10).max(1);
    let mut snap_err = None;
    sim.run(|s, k| {
        if k > 0 && k % report_every == 0 {
            let rec = s.history().last().unwrap();
            phase(&format!(
                "step {k}/{n}: t = {:.4}, E = {:.6e}, mass = {:.6e}",
                rec.t, rec.total, rec.mass
            ));
        }
        if stride > 0 && k % stride == 0 && snap_err.is_none() {
            let name = format!("phi_{k:06}");
            if let Err(e) = dump_cell(out, &name, &s.g, s.state.t, &s.state.phi) {
                snap_err = Some(e);
            }
        }
    })?;
    if let Some(e) = snap_err {
        return Err(e);
    }

    energy_csv(&out.join("energy.csv"), sim.history())?;
    dump_cell(out, "phi", &sim.g, sim.state.t, &sim.state.phi)?;
    dump_cell(out, "mu", &sim.g, sim.state.t, &sim.state.mu)?;
    dump_cell(out, "p", &sim.g, sim.state.t, &sim.state.p)?;
    dump_vec(out, "vel", &sim.g, sim.state.t, &sim.state.u)?;

    let hist = sim.history();
    let first = &hist[0];
    let last = hist.last().unwrap();
    let max_div = hist.iter().map(|r| r.div_linf).fold(0.0f64, f64::max);
    let summary = serde_json::json!({
        "mode": cfg.simulate.mode,
        "model": cfg.model.kind,
        "epsilon": if cfg.simulate.mode == "heterogeneous" { Some(cfg.simulate.epsilon) } else { None },
        "steps": n,
        "t_end": last.t,
        "mass_initial": first.mass,
        "mass_final": last.mass,
        "mass_drift_rel": (last.mass - first.mass).abs() / first.mass.abs().max(1.0),
        "energy_initial": first.total,
        "energy_final": last.total,
        "max_div_linf": max_div,
        "tensor_flat": tensor_info,
        "config_sha256": config::config_sha256(cfg),
    });
    write_json(&out.join("run.json"), &summary)?;
    println!(
        "done: E {:.6e} -> {:.6e}, mass drift {:.2e}, max divergence {:.2e}",
        first.total,
        last.total,
        (last.mass - first.mass).abs(),
        max_div
    );
    Ok(())
}

fn cmd_converge(cfg: &Config, out: &Path) -> Result<()> {
    ensure_dir(out)?;
    let model = cfg.model.to_model()?;
    let mut sweep = SweepConfig::standard(
        model,
        cfg.converge.epsilons.clone(),
        cfg.converge.n_fine,
        cfg.converge.n_coarse,
    );
    sweep.phys = cfg.physics.to_params();
    sweep.time = cfg.time.to_params();
    sweep.forcing = config::forcing_of(cfg.forcing);
    sweep.phi_init = cfg.init.phi_init()?;
    sweep.vel_init = cfg.init.vel_init()?;
    sweep.cell = cfg.cell.to_cfg();
    let report = homogenization_sweep(&sweep, |m| phase(m))?;
    write_sweep_csv(&out.join("report.csv"), &report)?;
    write_json(
        &out.join("tensor.json"),
        &serde_json::json!({
            "model": cfg.model.kind,
            "tensor_flat": report.tensor.flat().to_vec(),
            "route_diff": report.route_diff,
            "config_sha256": config::config_sha256(cfg),
        }),
    )?;
    println!("epsilon  rel_err_u    rel_err_phi");
    for r in &report.rows {
        println!("{:<8} {:.6e} {:.6e}", r.epsilon, r.rel_err_u(), r.rel_err_phi());
    }
    if let Some(last) = report.rows.last() {
        println!(
            "gradient defect at eps = {}: plain {:.3e}, corrector-augmented {:.3e}",
            last.epsilon, report.grad_defect_plain, report.grad_defect_corrected
        );
    }
    Ok(())
}

fn cmd_meanvalue(cfg: &Config, out: &Path) -> Result<()> {
    ensure_dir(out)?;
    let model = cfg.model.to_model()?;
    let mv = &cfg.meanvalue;
    let schedule = doubling_schedule(mv.r0, mv.r_max);
    phase(&format!(
        "mean values of a11 over {} boxes up to R = {}",
        schedule.len(),
        mv.r_max
    ));
    let f = |y: &[f64]| {
        let p = if y.len() == 1 { [y[0], 0.0] } else { [y[0], y[1]] };
        model.sample(0.0, [0.0, 0.0], p).a11
    };
    let res = mean_value(f, mv.dim, &schedule, mv.pts_per_unit)?;
    let mut s = String::from("r,mean,increment\n");
    let incs = res.increments();
    for (i, (r, m)) in res.rs.iter().zip(res.means.iter()).enumerate() {
        let inc = if i == 0 { 0.0 } else { incs[i - 1] };
        s.push_str(&format!("{r},{m:.12e},{inc:.3e}\n"));
    }
    fs::write(out.join("means.csv"), s)?;
    println!("mean over R = {}: {:.12e}", res.rs.last().unwrap(), res.final_mean());
    Ok(())
}

/// Deterministic generator for the operator-identity checks.
struct Lcg(u64);

impl Lcg {
    fn next_f64(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    }
}

fn random_cell(g: &GridSpec, rng: &mut Lcg) -> chns_core::grid::CellField {
    let mut c = g.zeros_cell();
    for x in c.iter_mut() {
        *x = rng.next_f64();
    }
    c
}

fn random_vec(g: &GridSpec, rng: &mut Lcg) -> VecField {
    let mut v = VecField::zeros(g);
    for x in v.ux.iter_mut() {
        *x = rng.next_f64();
    }
    for x in v.uy.iter_mut() {
        *x = rng.next_f64();
    }
    v.pin_walls(g);
    v
}

/// Divergence-free field: discrete curl of a random streamfunction shaped to
/// vanish at the walls.
fn random_div_free(g: &GridSpec, rng: &mut Lcg) -> VecField {
    let (ncx, ncy) = (g.ncx(), g.ncy());
    let mut psi = vec![0.0f64; ncx * ncy];
    for i in 0..ncx {
        let wx = (std::f64::consts::PI * i as f64 * g.hx() / g.lx).sin().powi(2);
        for j in 0..ncy {
            let wy = (std::f64::consts::PI * j as f64 * g.hy() / g.ly).sin().powi(2);
            psi[i * ncy + j] = rng.next_f64() * wx * wy;
        }
    }
    let at = |i: usize, j: usize| psi[(i % ncx) * ncy + j % ncy];
    let mut u = VecField::zeros(g);
    for i in 0..g.nux() {
        for j in 0..g.ny {
            u.ux[[i, j]] = (at(i, j + 1) - at(i, j)) / g.hy();
        }
    }
    for i in 0..g.nx {
        for j in 0..g.nuy() {
            u.uy[[i, j]] = -(at(i + 1, j) - at(i, j)) / g.hx();
        }
    }
    u.pin_walls(g);
    u
}

fn cmd_verify(cfg: &Config) -> Result<()> {
    let model = cfg.model.to_model()?;

    // Ellipticity probe over low-discrepancy arguments; the measured value is
    // how far the sampled spectrum escapes [gamma, 1/gamma].
    let rep = model.verify_ellipticity(cfg.verify.samples);
    let escape = (rep.gamma - rep.lambda_min)
        .max(rep.lambda_max - 1.0 / rep.gamma)
        .max(0.0);

    // Discrete duality <grad p, u> = -<p, div u> and skew-symmetry of the
    // advection term against a divergence-free advecting field, on walled and
    // fully periodic grids.
    let mut rng = Lcg(0x5eed);
    let mut adjoint = 0.0f64;
    let mut skew = 0.0f64;
    for g in [
        GridSpec::walled(24, 20, 1.0, 0.8),
        GridSpec::new(20, 24, 1.0, 1.2, [true, true]),
    ] {
        for _ in 0..4 {
            let p = random_cell(&g, &mut rng);
            let u = random_vec(&g, &mut rng);
            let defect = dot_vec(&g, &gradient(&g, &p), &u) + dot_cell(&g, &p, &divergence(&g, &u));
            adjoint = adjoint.max(defect.abs() / (l2_cell(&g, &p) * l2_vec(&g, &u) + 1e-30));
            let w = random_div_free(&g, &mut rng);
            let v = random_vec(&g, &mut rng);
            let q = dot_vec(&g, &advect_velocity(&g, &w, &v), &v).abs();
            skew = skew.max(q / (l2_vec(&g, &w) * l2_vec(&g, &v).powi(2) + 1e-30));
        }
    }

    // Constant unit viscosity must reproduce the identity on the strain slots.
    let trivial = ViscosityModel::new(ModelKind::Constant { nu: 1.0 })?;
    let comp = effective_tensor(&trivial, &CellProblemCfg { n: 16, ..Default::default() })?;
    let flat = comp.tensor.flat();
    let mut trivial_dev = 0.0f64;
    for s in 0..4 {
        for t in 0..4 {
            let want = if s == t { 1.0 } else { 0.0 };
            trivial_dev = trivial_dev.max((flat[4 * s + t] - want).abs());
        }
    }

    let checks: [(&str, f64, f64); 4] = [
        ("ellipticity probe", escape, 1e-12),
        ("grad/div adjointness", adjoint, 1e-13),
        ("advection skew-symmetry", skew, 1e-12),
        ("trivial cell tensor", trivial_dev, 1e-10),
    ];
    println!("{:<26} {:>12} {:>12}  result", "check", "measured", "tolerance");
    let mut failed: Vec<&str> = Vec::new();
    for (name, measured, tol) in checks {
        let ok = measured <= tol;
        if !ok {
            failed.push(name);
        }
        println!(
            "{:<26} {:>12.3e} {:>12.1e}  {}",
            name,
            measured,
            tol,
            if ok { "PASS" } else { "FAIL" }
        );
    }
    println!(
        "{}",
        serde_json::json!({
            "model": cfg.model.kind,
            "gamma": rep.gamma,
            "lambda_min": rep.lambda_min,
            "lambda_max": rep.lambda_max,
            "samples": rep.samples,
            "adjointness": adjoint,
            "advection_skew": skew,
            "trivial_tensor_dev": trivial_dev,
            "ok": failed.is_empty(),
        })
    );
    if !failed.is_empty() {
        return Err(Error::Verify(failed.join(", ")));
    }
    Ok(())
}
