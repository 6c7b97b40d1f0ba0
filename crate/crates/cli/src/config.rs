//! TOML configuration. Every key has a default, so an empty file (or no
//! file) is a valid configuration; unknown keys are rejected.

use chns_core::cell::CellProblemCfg;
use chns_core::chns::{Forcing, PhiInit, PhysParams, TimeParams, VelInit};
use chns_core::error::{Error, Result};
use chns_core::viscosity::{ModelKind, ViscosityModel};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub model: ModelCfg,
    pub grid: GridCfg,
    pub physics: PhysicsCfg,
    pub time: TimeCfg,
    pub init: InitCfg,
    pub forcing: [f64; 2],
    pub cell: CellCfg,
    pub simulate: SimulateCfg,
    pub converge: ConvergeCfg,
    pub meanvalue: MeanvalueCfg,
    pub verify: VerifyCfg,
}

/// Viscosity model. `kind` selects which of the other keys matter; the rest
/// are ignored. `separable_macro` wraps the `base` table in a slow spatial
/// modulation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelCfg {
    /// One of: constant, smooth_periodic, layered, quasi_periodic,
    /// separable_macro.
    pub kind: String,
    pub nu: f64,
    pub amplitude: f64,
    pub anisotropy: f64,
    pub a_minus: f64,
    pub a_plus: f64,
    pub width: f64,
    pub freqs: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base: Option<Box<ModelCfg>>,
}

impl Default for ModelCfg {
    fn default() -> Self {
        ModelCfg {
            kind: "layered".into(),
            nu: 1.0,
            amplitude: 0.5,
            anisotropy: 0.0,
            a_minus: 1.0,
            a_plus: 2.0,
            width: 0.5,
            freqs: [1.0, 1.618_033_988_749_895],
            base: None,
        }
    }
}

impl ModelCfg {
    fn to_kind(&self) -> Result<ModelKind> {
        Ok(match self.kind.as_str() {
            "constant" => ModelKind::Constant { nu: self.nu },
            "smooth_periodic" => ModelKind::SmoothPeriodic {
                nu: self.nu,
                amplitude: self.amplitude,
                anisotropy: self.anisotropy,
            },
            "layered" => ModelKind::Layered {
                a_minus: self.a_minus,
                a_plus: self.a_plus,
                width: self.width,
            },
            "quasi_periodic" => ModelKind::QuasiPeriodic {
                nu: self.nu,
                amplitude: self.amplitude,
                freqs: self.freqs,
            },
            "separable_macro" => {
                let base = self.base.as_ref().ok_or_else(|| {
                    Error::Config("model.kind = separable_macro needs a [model.base] table".into())
                })?;
                ModelKind::SeparableMacro {
                    base: Box::new(base.to_kind()?),
                    amplitude: self.amplitude,
                }
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown model.kind `{other}` (expected constant, smooth_periodic, \
                     layered, quasi_periodic, or separable_macro)"
                )))
            }
        })
    }

    pub fn to_model(&self) -> Result<ViscosityModel> {
        ViscosityModel::new(self.to_kind()?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridCfg {
    pub n: usize,
    pub lx: f64,
    pub ly: f64,
}

impl Default for GridCfg {
    fn default() -> Self {
        GridCfg { n: 64, lx: 1.0, ly: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsCfg {
    pub kappa: f64,
    pub lambda: f64,
    pub alpha: f64,
    /// Phase-update stabilization constant; omit for the default `2 alpha`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stabilization: Option<f64>,
}

impl Default for PhysicsCfg {
    fn default() -> Self {
        let p = PhysParams::default();
        PhysicsCfg { kappa: p.kappa, lambda: p.lambda, alpha: p.alpha, stabilization: None }
    }
}

impl PhysicsCfg {
    pub fn to_params(&self) -> PhysParams {
        PhysParams {
            kappa: self.kappa,
            lambda: self.lambda,
            alpha: self.alpha,
            stabilization: self.stabilization,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeCfg {
    pub dt: f64,
    pub t_end: f64,
    pub kappa_safety: f64,
    pub solver_tol: f64,
}

impl Default for TimeCfg {
    fn default() -> Self {
        TimeCfg { dt: 6.25e-4, t_end: 0.25, kappa_safety: 100.0, solver_tol: 1e-12 }
    }
}

impl TimeCfg {
    pub fn to_params(&self) -> TimeParams {
        let mut t = TimeParams::new(self.dt, self.t_end);
        t.kappa_safety = self.kappa_safety;
        t.solver_tol = self.solver_tol;
        t
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitCfg {
    /// `blob` or `uniform`.
    pub phi: String,
    pub center: [f64; 2],
    pub radius: f64,
    pub width: f64,
    /// Value for `phi = "uniform"`.
    pub value: f64,
    /// `vortex` or `zero`.
    pub vel: String,
    pub amplitude: f64,
}

impl Default for InitCfg {
    fn default() -> Self {
        InitCfg {
            phi: "blob".into(),
            center: [0.5, 0.5],
            radius: 0.25,
            width: 0.06,
            value: -1.0,
            vel: "vortex".into(),
            amplitude: 0.5,
        }
    }
}

impl InitCfg {
    pub fn phi_init(&self) -> Result<PhiInit> {
        Ok(match self.phi.as_str() {
            "blob" => PhiInit::TanhBlob {
                center: self.center,
                radius: self.radius,
                width: self.width,
            },
            "uniform" => PhiInit::Uniform(self.value),
            other => {
                return Err(Error::Config(format!(
                    "unknown init.phi `{other}` (expected blob or uniform)"
                )))
            }
        })
    }

    pub fn vel_init(&self) -> Result<VelInit> {
        Ok(match self.vel.as_str() {
            "vortex" => VelInit::ConfinedVortex { amplitude: self.amplitude },
            "zero" => VelInit::Zero,
            other => {
                return Err(Error::Config(format!(
                    "unknown init.vel `{other}` (expected vortex or zero)"
                )))
            }
        })
    }
}

pub fn forcing_of(f: [f64; 2]) -> Forcing {
    if f == [0.0, 0.0] {
        Forcing::Zero
    } else {
        Forcing::Constant(f)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CellCfg {
    pub n: usize,
    pub n_tau: usize,
    pub tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
}

impl Default for CellCfg {
    fn default() -> Self {
        let c = CellProblemCfg::default();
        CellCfg { n: c.n, n_tau: c.n_tau, tol: c.tol, max_outer: c.max_outer, max_inner: c.max_inner }
    }
}

impl CellCfg {
    pub fn to_cfg(&self) -> CellProblemCfg {
        CellProblemCfg {
            n: self.n,
            n_tau: self.n_tau,
            tol: self.tol,
            max_outer: self.max_outer,
            max_inner: self.max_inner,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateCfg {
    /// `heterogeneous` (oscillating coefficient at `epsilon`) or
    /// `homogenized` (effective tensor from the cell problems).
    pub mode: String,
    pub epsilon: f64,
    /// Dump phase-field snapshots every this many steps (0 = final only).
    pub snapshot_stride: usize,
}

impl Default for SimulateCfg {
    fn default() -> Self {
        SimulateCfg { mode: "heterogeneous".into(), epsilon: 0.0625, snapshot_stride: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergeCfg {
    pub epsilons: Vec<f64>,
    pub n_fine: usize,
    pub n_coarse: usize,
}

impl Default for ConvergeCfg {
    fn default() -> Self {
        ConvergeCfg { epsilons: vec![0.25, 0.125, 0.0625], n_fine: 256, n_coarse: 64 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeanvalueCfg {
    pub r0: f64,
    pub r_max: f64,
    pub pts_per_unit: usize,
    pub dim: usize,
}

impl Default for MeanvalueCfg {
    fn default() -> Self {
        MeanvalueCfg { r0: 1.0, r_max: 64.0, pts_per_unit: 16, dim: 2 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyCfg {
    pub samples: usize,
}

impl Default for VerifyCfg {
    fn default() -> Self {
        VerifyCfg { samples: 4096 }
    }
}

impl Config {
    /// Range checks that deserialization cannot express. Errors name the
    /// offending key.
    pub fn validate(&self) -> Result<()> {
        fn require(ok: bool, key: &str, why: &str) -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(format!("{key} {why}")))
            }
        }
        require(self.grid.n >= 2, "grid.n", "must be at least 2")?;
        require(self.grid.lx > 0.0, "grid.lx", "must be positive")?;
        require(self.grid.ly > 0.0, "grid.ly", "must be positive")?;
        require(self.physics.kappa > 0.0, "physics.kappa", "must be positive")?;
        require(self.physics.lambda > 0.0, "physics.lambda", "must be positive")?;
        require(self.physics.alpha > 0.0, "physics.alpha", "must be positive")?;
        if let Some(s) = self.physics.stabilization {
            require(s >= 0.0, "physics.stabilization", "must be non-negative")?;
        }
        require(self.time.dt > 0.0, "time.dt", "must be positive")?;
        require(self.time.t_end >= self.time.dt, "time.t_end", "must be at least time.dt")?;
        require(self.time.kappa_safety > 0.0, "time.kappa_safety", "must be positive")?;
        require(self.time.solver_tol > 0.0, "time.solver_tol", "must be positive")?;
        require(self.init.radius > 0.0, "init.radius", "must be positive")?;
        require(self.init.width > 0.0, "init.width", "must be positive")?;
        require(self.cell.n >= 2, "cell.n", "must be at least 2")?;
        require(self.cell.n_tau >= 1, "cell.n_tau", "must be at least 1")?;
        require(self.cell.tol > 0.0, "cell.tol", "must be positive")?;
        require(self.simulate.epsilon > 0.0, "simulate.epsilon", "must be positive")?;
        require(!self.converge.epsilons.is_empty(), "converge.epsilons", "must not be empty")?;
        require(
            self.converge.epsilons.iter().all(|&e| e > 0.0),
            "converge.epsilons",
            "must all be positive",
        )?;
        require(
            self.converge.epsilons.windows(2).all(|w| w[1] < w[0]),
            "converge.epsilons",
            "must be strictly decreasing",
        )?;
        require(self.converge.n_coarse >= 2, "converge.n_coarse", "must be at least 2")?;
        require(
            self.converge.n_fine >= self.converge.n_coarse
                && self.converge.n_fine % self.converge.n_coarse == 0,
            "converge.n_fine",
            "must be a multiple of converge.n_coarse",
        )?;
        require(self.meanvalue.r0 > 0.0, "meanvalue.r0", "must be positive")?;
        require(
            self.meanvalue.r_max >= self.meanvalue.r0,
            "meanvalue.r_max",
            "must be at least meanvalue.r0",
        )?;
        require(self.meanvalue.pts_per_unit >= 1, "meanvalue.pts_per_unit", "must be at least 1")?;
        require(
            self.meanvalue.dim == 1 || self.meanvalue.dim == 2,
            "meanvalue.dim",
            "must be 1 or 2",
        )?;
        require(self.verify.samples >= 1, "verify.samples", "must be at least 1")?;
        Ok(())
    }
}

pub fn load(path: Option<&std::path::Path>) -> Result<Config> {
    let cfg: Config = match path {
        None => Config::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Hash of the effective configuration (after defaults), so artifacts can be
/// traced back to the exact inputs regardless of file formatting.
pub fn config_sha256(cfg: &Config) -> String {
    use sha2::{Digest, Sha256};
    let canon = toml::to_string(cfg).expect("config serializes");
    let mut h = Sha256::new();
    h.update(canon.as_bytes());
    let out = h.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

/// A fully commented configuration template; parses back into `Config` and
/// matches the defaults.
pub const SCHEMA: &str = r#"# Configuration template. Every key shown here is optional and set to its
# default; unknown keys are rejected.

forcing = [0.0, 0.0]     # constant body force

[model]
# One of: constant, smooth_periodic, layered, quasi_periodic, separable_macro.
# Only the keys used by the chosen kind matter.
kind = "layered"
nu = 1.0                 # constant / smooth_periodic / quasi_periodic
amplitude = 0.5          # smooth_periodic / quasi_periodic / separable_macro
anisotropy = 0.0         # smooth_periodic off-diagonal strength
a_minus = 1.0            # layered
a_plus = 2.0             # layered
width = 0.5              # layered transition width
freqs = [1.0, 1.618033988749895]  # quasi_periodic
# separable_macro additionally needs a [model.base] table of the same shape.

[grid]
n = 64                   # macroscopic cells per axis (walled unit square)
lx = 1.0
ly = 1.0

[physics]
kappa = 1.0              # capillary coupling strength
lambda = 0.002           # interface gradient energy
alpha = 1.0              # double-well strength
# stabilization = 2.0    # phase-update stabilization (default: 2 * alpha)

[time]
dt = 0.000625
t_end = 0.25
kappa_safety = 100.0     # parabolic step gate multiplier
solver_tol = 1e-12       # implicit momentum solve tolerance

[init]
phi = "blob"             # blob | uniform
center = [0.5, 0.5]
radius = 0.25
width = 0.06
value = -1.0             # uniform value when phi = "uniform"
vel = "vortex"           # vortex | zero
amplitude = 0.5

[cell]
n = 64                   # cells per axis on the periodicity cell
n_tau = 8                # fast-time quadrature points
tol = 1e-10
max_outer = 400
max_inner = 800

[simulate]
mode = "heterogeneous"   # heterogeneous | homogenized
epsilon = 0.0625
snapshot_stride = 0      # phase-field dumps every N steps (0 = final only)

[converge]
epsilons = [0.25, 0.125, 0.0625]
n_fine = 256
n_coarse = 64

[meanvalue]
r0 = 1.0
r_max = 64.0
pts_per_unit = 16
dim = 2

[verify]
samples = 4096
"#;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        let cfg: Config = toml::from_str("").unwrap();
        assert_eq!(cfg.grid.n, 64);
        assert_eq!(cfg.model.kind, "layered");
        cfg.model.to_model().unwrap();
    }

    #[test]
    fn schema_parses_and_matches_defaults() {
        let cfg: Config = toml::from_str(SCHEMA).unwrap();
        let d = Config::default();
        assert_eq!(config_sha256(&cfg), config_sha256(&d));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<Config>("[grid]\nn = 32\nspacing = 0.1\n");
        assert!(err.is_err());
    }

    #[test]
    fn separable_macro_needs_base() {
        let cfg: Config = toml::from_str("[model]\nkind = \"separable_macro\"\n").unwrap();
        assert!(cfg.model.to_model().is_err());
        let cfg: Config = toml::from_str(
            "[model]\nkind = \"separable_macro\"\namplitude = 0.3\n[model.base]\nkind = \"layered\"\n",
        )
        .unwrap();
        let m = cfg.model.to_model().unwrap();
        assert!(m.tau_dependent() == false);
    }

    #[test]
    fn validation_names_the_offending_key() {
        let cfg: Config = toml::from_str("[physics]\nkappa = -1.0\n").unwrap();
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("physics.kappa"), "{err}");
        let cfg: Config = toml::from_str("[converge]\nepsilons = [0.125, 0.25]\n").unwrap();
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("converge.epsilons"), "{err}");
        Config::default().validate().unwrap();
    }

    #[test]
    fn hash_is_stable_under_formatting() {
        let a: Config = toml::from_str("[grid]\nn = 32\n").unwrap();
        let b: Config = toml::from_str("[grid]\n\n   n    =   32\n").unwrap();
        assert_eq!(config_sha256(&a), config_sha256(&b));
        let c: Config = toml::from_str("[grid]\nn = 33\n").unwrap();
        assert_ne!(config_sha256(&a), config_sha256(&c));
    }
}
