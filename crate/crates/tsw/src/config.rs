//! Run configuration: a single TOML document with nested sections. The
//! resolved config is echoed into the run manifest, so every item is both
//! deserializable and serializable.

use serde::{Deserialize, Serialize};

use crate::cases::{CaseConfig, JetProfile};
use crate::dynamics::Formulation;
use crate::error::{Error, Result};
use crate::linalg::{Preconditioner, SolverConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub formulation: String,
    pub mesh: MeshSection,
    pub space: SpaceSection,
    #[serde(default)]
    pub solver: SolverSection,
    pub time: TimeSection,
    #[serde(default)]
    pub case: CaseSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub converge: Option<ConvergeSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSection {
    pub order: usize,
    /// Volume quadrature points per direction; defaults to max(2k+2, 3).
    #[serde(default)]
    pub quad_points: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    /// 0 means 10 * ndof.
    #[serde(default)]
    pub max_iter: usize,
    /// "none" or "diagonal"
    #[serde(default = "default_preconditioner")]
    pub preconditioner: String,
}

fn default_rtol() -> f64 {
    1e-12
}

fn default_preconditioner() -> String {
    "diagonal".into()
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            rtol: default_rtol(),
            max_iter: 0,
            preconditioner: default_preconditioner(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub dt: f64,
    pub nsteps: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseSection {
    /// "balanced-jet", "shear-instability" or "rest"
    #[serde(default = "default_case_name")]
    pub name: String,
    #[serde(default = "default_gravity")]
    pub gravity: f64,
    #[serde(default = "default_coriolis")]
    pub coriolis: f64,
    /// Mean depth; 0 selects the default 2.94e4 / gravity.
    #[serde(default)]
    pub h0: f64,
    #[serde(default = "default_u0")]
    pub u0: f64,
    /// "cosine" or "bickley"
    #[serde(default = "default_jet")]
    pub jet: String,
    #[serde(default = "default_jet_half_width")]
    pub jet_half_width: f64,
    #[serde(default = "default_depth_bump")]
    pub depth_bump_rel: f64,
    #[serde(default = "default_buoyancy_pert")]
    pub buoyancy_pert_rel: f64,
    #[serde(default = "default_balance_points")]
    pub balance_points: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_case_name() -> String {
    "balanced-jet".into()
}

fn default_gravity() -> f64 {
    CaseConfig::<f64>::default().gravity
}

fn default_coriolis() -> f64 {
    CaseConfig::<f64>::default().coriolis
}

fn default_u0() -> f64 {
    CaseConfig::<f64>::default().u0
}

fn default_jet() -> String {
    "cosine".into()
}

fn default_jet_half_width() -> f64 {
    0.1
}

fn default_depth_bump() -> f64 {
    0.01
}

fn default_buoyancy_pert() -> f64 {
    0.1
}

fn default_balance_points() -> usize {
    10_000
}

fn default_seed() -> u64 {
    1
}

impl Default for CaseSection {
    fn default() -> Self {
        CaseSection {
            name: default_case_name(),
            gravity: default_gravity(),
            coriolis: default_coriolis(),
            h0: 0.0,
            u0: default_u0(),
            jet: default_jet(),
            jet_half_width: default_jet_half_width(),
            depth_bump_rel: default_depth_bump(),
            buoyancy_pert_rel: default_buoyancy_pert(),
            balance_points: default_balance_points(),
            seed: default_seed(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub dir: String,
    #[serde(default = "default_cadence")]
    pub diagnostics_every: usize,
    /// 0 disables snapshots.
    #[serde(default)]
    pub snapshot_every: usize,
    /// "text" or "binary"
    #[serde(default = "default_snapshot_format")]
    pub snapshot_format: String,
    /// Side length of the sampled-grid export; 0 disables it.
    #[serde(default)]
    pub sample_grid: usize,
}

fn default_out_dir() -> String {
    "out".into()
}

fn default_cadence() -> usize {
    1
}

fn default_snapshot_format() -> String {
    "text".into()
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: default_out_dir(),
            diagnostics_every: default_cadence(),
            snapshot_every: 0,
            snapshot_format: default_snapshot_format(),
            sample_grid: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeSection {
    /// Square mesh sizes, e.g. [8, 16, 32].
    pub meshes: Vec<usize>,
    pub dts: Vec<f64>,
    pub physical_time: f64,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .map(|s| {
                    let line = text[..s.start.min(text.len())]
                        .bytes()
                        .filter(|&b| b == b'\n')
                        .count()
                        + 1;
                    format!("line {line}")
                })
                .unwrap_or_else(|| "unknown location".into());
            Error::Config {
                field,
                message: e.message().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serialization")
    }

    pub fn validate(&self) -> Result<()> {
        self.formulation()?;
        if self.mesh.nx < 1 || self.mesh.ny < 1 {
            return Err(Error::config("mesh.nx/ny", "must be at least 1"));
        }
        if self.mesh.lx <= 0.0 || self.mesh.ly <= 0.0 {
            return Err(Error::config("mesh.lx/ly", "must be positive"));
        }
        if self.space.order > 4 {
            return Err(Error::config("space.order", "supported range is 0..=4"));
        }
        if let Some(n) = self.space.quad_points {
            if n < 2 {
                return Err(Error::config("space.quad_points", "must be at least 2"));
            }
        }
        if self.solver.rtol <= 0.0 {
            return Err(Error::config("solver.rtol", "must be positive"));
        }
        self.preconditioner()?;
        if self.time.dt <= 0.0 {
            return Err(Error::config("time.dt", "must be positive"));
        }
        match self.case.name.as_str() {
            "balanced-jet" | "shear-instability" | "rest" => {}
            other => {
                return Err(Error::config(
                    "case.name",
                    format!("unknown case `{other}`"),
                ))
            }
        }
        if self.case.gravity <= 0.0 {
            return Err(Error::config("case.gravity", "must be positive"));
        }
        if self.case.h0 < 0.0 {
            return Err(Error::config("case.h0", "must be nonnegative"));
        }
        match self.case.jet.as_str() {
            "cosine" | "bickley" => {}
            other => return Err(Error::config("case.jet", format!("unknown jet `{other}`"))),
        }
        if self.output.diagnostics_every < 1 {
            return Err(Error::config("output.diagnostics_every", "must be >= 1"));
        }
        match self.output.snapshot_format.as_str() {
            "text" | "binary" => {}
            other => {
                return Err(Error::config(
                    "output.snapshot_format",
                    format!("unknown format `{other}`"),
                ))
            }
        }
        if let Some(c) = &self.converge {
            if c.meshes.len() != c.dts.len() || c.meshes.len() < 2 {
                return Err(Error::config(
                    "converge.meshes/dts",
                    "need matching lists of length >= 2",
                ));
            }
            if c.physical_time <= 0.0 {
                return Err(Error::config("converge.physical_time", "must be positive"));
            }
        }
        Ok(())
    }

    pub fn formulation(&self) -> Result<Formulation> {
        self.formulation
            .parse()
            .map_err(|_| Error::config("formulation", format!("unknown formulation `{}`", self.formulation)))
    }

    pub fn preconditioner(&self) -> Result<Preconditioner> {
        match self.solver.preconditioner.as_str() {
            "none" => Ok(Preconditioner::None),
            "diagonal" => Ok(Preconditioner::Diagonal),
            other => Err(Error::config(
                "solver.preconditioner",
                format!("unknown preconditioner `{other}`"),
            )),
        }
    }

    pub fn solver_config(&self) -> Result<SolverConfig<f64>> {
        Ok(SolverConfig {
            rtol: self.solver.rtol,
            max_iter: self.solver.max_iter,
            preconditioner: self.preconditioner()?,
        })
    }

    pub fn case_config(&self) -> Result<CaseConfig<f64>> {
        let jet = match self.case.jet.as_str() {
            "cosine" => JetProfile::Cosine,
            "bickley" => JetProfile::BickleyPair {
                half_width_frac: self.case.jet_half_width,
            },
            other => return Err(Error::config("case.jet", format!("unknown jet `{other}`"))),
        };
        let h0 = if self.case.h0 > 0.0 {
            self.case.h0
        } else {
            2.94e4 / self.case.gravity
        };
        let cfg = CaseConfig {
            gravity: self.case.gravity,
            coriolis: self.case.coriolis,
            h0,
            u0: self.case.u0,
            jet,
            depth_bump_rel: self.case.depth_bump_rel,
            buoyancy_pert_rel: self.case.buoyancy_pert_rel,
            balance_points: self.case.balance_points,
            seed: self.case.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Resolved output directory: the environment variable `TSW_OUTPUT_DIR`
    /// overrides the config value.
    pub fn output_dir(&self) -> std::path::PathBuf {
        match std::env::var("TSW_OUTPUT_DIR") {
            Ok(d) if !d.is_empty() => d.into(),
            _ => self.output.dir.clone().into(),
        }
    }
}
