use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::norm::Norm;
use crate::randnet::Estimator;

/// The pipelines `run_config` can execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    Certify,
    Covering,
    GpCrossing,
    GpRice,
    GpTails,
    VerifyKernel,
    AttackScaling,
    Profile,
}

impl Pipeline {
    pub const ALL: [Pipeline; 8] = [
        Pipeline::Certify,
        Pipeline::Covering,
        Pipeline::GpCrossing,
        Pipeline::GpRice,
        Pipeline::GpTails,
        Pipeline::VerifyKernel,
        Pipeline::AttackScaling,
        Pipeline::Profile,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Certify => "certify",
            Pipeline::Covering => "covering",
            Pipeline::GpCrossing => "gp-crossing",
            Pipeline::GpRice => "gp-rice",
            Pipeline::GpTails => "gp-tails",
            Pipeline::VerifyKernel => "verify-kernel",
            Pipeline::AttackScaling => "attack-scaling",
            Pipeline::Profile => "profile",
        }
    }

    /// File stem used for outputs.
    pub fn stem(self) -> String {
        self.name().replace('-', "_")
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pipeline {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Pipeline::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| HarnessError::Config(format!("unknown experiment {s:?}")))
    }
}

/// Covariance used by the Gaussian-process pipelines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelChoice {
    /// The NNGP kernel of `arch`.
    #[default]
    Arch,
    /// `k(x, y) = x . y` on `R^n`, `n = dims[0]`.
    Linear,
}

/// A run description, read from TOML. Fields a pipeline does not use are ignored by it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Pipeline,
    /// Architecture document; relative paths resolve against the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arch: Option<PathBuf>,
    /// Mandatory, either here or on the command line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Input dimensions; the first entry sizes single-dimension pipelines.
    #[serde(default)]
    pub dims: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
    #[serde(default = "default_norms")]
    pub norms: Vec<Norm>,
    /// Start points per arch (GP pipelines), or per network (attack pipelines).
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_nets")]
    pub nets: usize,
    /// Discretization size of GP regions.
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default)]
    pub kernel: KernelChoice,
    /// Linear kernel: distance of the start point from the origin.
    #[serde(default = "default_x0_norm")]
    pub x0_norm: f64,
    /// Linear kernel: segment length.
    #[serde(default = "default_radius")]
    pub radius: f64,
    /// Start point for `certify`, a JSON array file (relative to the config file).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<PathBuf>,
    /// `certify` without a start point: its Euclidean norm.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm2: Option<f64>,
    /// Lattice denominators for `covering`.
    #[serde(default = "default_lattice")]
    pub lattice: Vec<usize>,
    /// Radii at which `covering` reports the closed-form bound.
    #[serde(default)]
    pub eps: Vec<f64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Dimensions of the Dudley rows in `gp-tails`.
    #[serde(default)]
    pub dudley_dims: Vec<usize>,
    #[serde(default = "default_cloud")]
    pub cloud: usize,
    /// Hidden widths compared by `verify-kernel`.
    #[serde(default = "default_widths")]
    pub widths: Vec<usize>,
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default = "default_estimator")]
    pub estimator: Estimator,
    /// Largest accepted relative Frobenius error at the widest width.
    #[serde(default = "default_max_rel_error")]
    pub max_rel_error: f64,
    /// Fully connected family used when no arch is given.
    #[serde(default = "default_hidden")]
    pub hidden_layers: usize,
    #[serde(default = "default_width")]
    pub width: usize,
    #[serde(default)]
    pub sigma_b: f64,
    #[serde(default = "default_rel_tolerance")]
    pub rel_tolerance: f64,
    /// Accepted deviation of fitted log-log slopes from their targets.
    #[serde(default = "default_slope_tolerance")]
    pub slope_tolerance: f64,
    /// Smallest accepted R^2 of the low-percentile fit in `profile`.
    #[serde(default = "default_min_r2")]
    pub min_r2: f64,
}

fn default_out() -> PathBuf {
    PathBuf::from("results")
}
fn default_trials() -> usize {
    10_000
}
fn default_deltas() -> Vec<f64> {
    vec![0.1, 0.3, 0.5]
}
fn default_norms() -> Vec<Norm> {
    Norm::ALL.to_vec()
}
fn default_points() -> usize {
    1
}
fn default_nets() -> usize {
    10
}
fn default_grid() -> usize {
    512
}
fn default_x0_norm() -> f64 {
    10.0
}
fn default_radius() -> f64 {
    1.0
}
fn default_lattice() -> Vec<usize> {
    vec![2, 3]
}
fn default_samples() -> usize {
    100_000
}
fn default_cloud() -> usize {
    2048
}
fn default_widths() -> Vec<usize> {
    vec![64, 256, 1024]
}
fn default_draws() -> usize {
    4000
}
fn default_estimator() -> Estimator {
    Estimator::Collapsed
}
fn default_max_rel_error() -> f64 {
    0.1
}
fn default_hidden() -> usize {
    3
}
fn default_width() -> usize {
    256
}
fn default_rel_tolerance() -> f64 {
    1e-3
}
fn default_slope_tolerance() -> f64 {
    0.15
}
fn default_min_r2() -> f64 {
    0.95
}

/// Command-line values that replace config fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub arch: Option<PathBuf>,
}

impl RunConfig {
    /// A config with every optional field at its default.
    pub fn new(experiment: Pipeline, seed: u64) -> Self {
        let mut cfg: RunConfig =
            toml::from_str(&format!("experiment = \"{experiment}\"")).expect("defaults parse");
        cfg.seed = Some(seed);
        cfg
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Read a config file; relative `arch` and `x0` paths become relative to its directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::load_as(path, None)
    }

    /// Like `load`, for a known pipeline: a missing `experiment` defaults to it
    /// and a different one is an error.
    pub fn load_as(path: &Path, pipeline: Option<Pipeline>) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut table: toml::Table = toml::from_str(&text).map_err(|e| HarnessError::Config(e.to_string()))?;
        if let Some(p) = pipeline {
            match table.get("experiment").and_then(|v| v.as_str()) {
                None => {
                    table.insert("experiment".into(), toml::Value::String(p.name().into()));
                }
                Some(e) if e == p.name() => {}
                Some(e) => {
                    return Err(HarnessError::Config(format!("config is for {e:?}, not {:?}", p.name())));
                }
            }
        }
        let mut cfg: RunConfig =
            toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.arch, &mut cfg.x0].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = Some(s);
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(a) = &o.arch {
            self.arch = Some(a.clone());
        }
    }

    pub fn seed(&self) -> Result<u64, HarnessError> {
        self.seed.ok_or_else(|| HarnessError::Config("a seed is required (config `seed` or --seed)".into()))
    }

    /// Checks that do not need the pipeline to run: paths exist, sweeps are
    /// nonempty and ordered, probabilities lie in (0, 1).
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        self.seed()?;
        for p in [&self.arch, &self.x0].into_iter().flatten() {
            if !p.is_file() {
                return bad(format!("{} does not exist", p.display()));
            }
        }
        if self.dims.contains(&0) || self.dudley_dims.contains(&0) {
            return bad("dimensions must be positive".into());
        }
        if self.deltas.iter().any(|d| !(*d > 0.0 && *d < 1.0)) {
            return bad(format!("deltas must lie in (0, 1), got {:?}", self.deltas));
        }
        if self.trials == 0 || self.points == 0 || self.nets == 0 || self.grid < 2 {
            return bad("trials, points and nets must be positive and grid at least 2".into());
        }
        let e = self.experiment;
        let needs_dims = match e {
            Pipeline::Covering | Pipeline::AttackScaling | Pipeline::Profile => true,
            Pipeline::GpCrossing | Pipeline::GpRice | Pipeline::GpTails => {
                self.kernel == KernelChoice::Linear || self.arch.is_none()
            }
            Pipeline::VerifyKernel => self.arch.is_none(),
            Pipeline::Certify => false,
        };
        if needs_dims && self.dims.is_empty() {
            return bad(format!("{e} needs a nonempty dimension sweep"));
        }
        if e == Pipeline::AttackScaling && self.dims.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("dims must be increasing, got {:?}", self.dims));
        }
        if matches!(e, Pipeline::AttackScaling | Pipeline::Profile) && self.norms.is_empty() {
            return bad("empty norm list".into());
        }
        if e == Pipeline::Certify {
            if self.x0.is_some() == self.norm2.is_some() {
                return bad("certify needs exactly one of x0 and norm2".into());
            }
            if self.arch.is_none() {
                return bad("certify needs an arch".into());
            }
            if self.deltas.is_empty() {
                return bad("empty delta list".into());
            }
        }
        if e == Pipeline::Covering && (self.lattice.iter().any(|&m| m < 2) || self.samples == 0) {
            return bad("lattice denominators must be at least 2 and samples positive".into());
        }
        if e == Pipeline::VerifyKernel
            && (self.widths.is_empty() || self.widths.windows(2).any(|w| w[0] >= w[1]))
        {
            return bad(format!("widths must be nonempty and increasing, got {:?}", self.widths));
        }
        if self.kernel == KernelChoice::Linear && !(self.radius > 0.0 && self.x0_norm > self.radius) {
            return bad("linear kernel needs 0 < radius < x0_norm".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_names_round_trip() {
        for p in Pipeline::ALL {
            assert_eq!(p.name().parse::<Pipeline>().unwrap(), p);
            let cfg = RunConfig::new(p, 3);
            assert_eq!(cfg.experiment, p);
            assert_eq!(cfg.trials, 10_000);
        }
        assert!("bogus".parse::<Pipeline>().is_err());
    }

    #[test]
    fn hash_ignores_out_but_not_seed() {
        let a = RunConfig::new(Pipeline::Covering, 1);
        let mut b = a.clone();
        b.out = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.seed = Some(2);
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn validation() {
        let mut cfg = RunConfig::new(Pipeline::AttackScaling, 1);
        assert!(matches!(cfg.validate(), Err(HarnessError::Config(_))));
        cfg.dims = vec![8, 16];
        cfg.validate().unwrap();
        cfg.dims = vec![16, 8];
        assert!(cfg.validate().is_err());
        cfg.dims = vec![8, 16];
        cfg.seed = None;
        assert!(cfg.validate().is_err());
        cfg.apply(&Overrides { seed: Some(4), ..Default::default() });
        cfg.validate().unwrap();
        cfg.arch = Some(PathBuf::from("/nonexistent/arch.json"));
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn load_resolves_paths_and_experiment() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "seed = 1\narch = \"fc.json\"\n").unwrap();
        let cfg = RunConfig::load_as(&path, Some(Pipeline::GpRice)).unwrap();
        assert_eq!(cfg.experiment, Pipeline::GpRice);
        assert_eq!(cfg.arch.unwrap(), dir.path().join("fc.json"));
        assert!(RunConfig::load(&path).is_err());
        std::fs::write(&path, "experiment = \"covering\"\n").unwrap();
        assert!(RunConfig::load_as(&path, Some(Pipeline::GpRice)).is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(RunConfig::from_toml("experiment = \"covering\"\nbogus = 1").is_err());
        let cfg = RunConfig::from_toml("experiment = \"gp-rice\"\nseed = 5\nnorms = [\"1\", \"inf\"]").unwrap();
        assert_eq!(cfg.norms, vec![Norm::L1, Norm::Linf]);
    }
}
