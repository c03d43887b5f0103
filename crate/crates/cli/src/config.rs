use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use selfsel::coarse::Partition;
use selfsel::dataset::ModelTag;
use selfsel::optimizer::{DESK_T_CAP, DESK_T_MULTIPLIER, PAPER_GAMMA_DIVISOR, PAPER_T_MULTIPLIER};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Desk,
    Paper,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    pub d: usize,
    pub k: usize,
    pub c: f64,
    pub big_c: f64,
    /// Explicit columns of `W*`; drawn at random when absent.
    #[serde(default)]
    pub w_star: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WarmStartConfig {
    /// Frobenius distance of the oracle warm start from `W*`.
    pub radius: f64,
    /// JSON array of columns used instead of the oracle perturbation.
    #[serde(default)]
    pub file: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsgdSection {
    pub eps: Option<f64>,
    pub eta: Option<f64>,
    pub g: Option<f64>,
    pub t_multiplier: Option<f64>,
    pub gamma_divisor: Option<f64>,
    pub t_cap: Option<usize>,
    pub feasible_radius: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoostConfig {
    pub reps: usize,
    pub radius: f64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self {
            reps: 24,
            radius: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoarseSection {
    pub mu_star: Vec<f64>,
    pub partition: Partition,
    /// Bound `D` on the mean norm.
    pub radius: f64,
    pub alpha_hint: f64,
    #[serde(default)]
    pub localization: Option<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_stage_a_eps")]
    pub stage_a_eps: f64,
}

fn default_delta() -> f64 {
    1e-3
}

fn default_stage_a_eps() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseConfig {
    #[serde(default = "default_diag_n")]
    pub n: usize,
    #[serde(default = "default_diag_n")]
    pub hessian_obs: usize,
    #[serde(default = "default_perturbation")]
    pub hessian_perturbation: f64,
    #[serde(default = "default_hessian_floor")]
    pub hessian_floor: f64,
    #[serde(default = "default_radii")]
    pub growth_radii: Vec<f64>,
    #[serde(default = "default_directions")]
    pub growth_directions: usize,
    #[serde(default = "default_fd_pairs")]
    pub fd_pairs: usize,
    #[serde(default)]
    pub scaling_dims: Vec<usize>,
}

fn default_diag_n() -> usize {
    20_000
}
fn default_perturbation() -> f64 {
    0.1
}
fn default_hessian_floor() -> f64 {
    0.02
}
fn default_radii() -> Vec<f64> {
    vec![0.05, 0.1, 0.2, 0.3]
}
fn default_directions() -> usize {
    3
}
fn default_fd_pairs() -> usize {
    20
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        Self {
            n: default_diag_n(),
            hessian_obs: default_diag_n(),
            hessian_perturbation: default_perturbation(),
            hessian_floor: default_hessian_floor(),
            growth_radii: default_radii(),
            growth_directions: default_directions(),
            fd_pairs: default_fd_pairs(),
            scaling_dims: Vec::new(),
        }
    }
}

/// One experiment, as read from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelTag,
    pub seed: u64,
    pub n: usize,
    #[serde(default = "default_preset")]
    pub preset: Preset,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Dataset to load instead of generating one.
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub instance: Option<InstanceConfig>,
    #[serde(default)]
    pub warm_start: Option<WarmStartConfig>,
    #[serde(default)]
    pub psgd: PsgdSection,
    #[serde(default)]
    pub boost: BoostConfig,
    #[serde(default)]
    pub coarse: Option<CoarseSection>,
    #[serde(default)]
    pub diagnose: DiagnoseConfig,
}

fn default_preset() -> Preset {
    Preset::Desk
}

/// Schedule constants after applying the preset and explicit overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolvedPsgd {
    pub eps: f64,
    pub eta: f64,
    pub g: Option<f64>,
    pub t_multiplier: f64,
    pub gamma_divisor: f64,
    pub t_cap: usize,
}

impl RunConfig {
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))?;
        for p in [cfg.data.as_mut(), cfg.warm_start.as_mut().and_then(|w| w.file.as_mut())]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.n == 0 && self.data.is_none() {
            return bad("n must be positive".into());
        }
        for p in [self.data.as_ref(), self.warm_start.as_ref().and_then(|w| w.file.as_ref())]
            .into_iter()
            .flatten()
        {
            if !p.exists() {
                return bad(format!("referenced file {} does not exist", p.display()));
            }
        }
        match self.model {
            ModelTag::Max | ModelTag::SecondPrice => {
                let Some(inst) = &self.instance else {
                    return bad("[instance] is required for this model".into());
                };
                if inst.d == 0 || inst.k == 0 {
                    return bad("instance needs d, k >= 1".into());
                }
                if self.model == ModelTag::SecondPrice && inst.k < 2 {
                    return bad("second-price needs k >= 2".into());
                }
                if let Some(cols) = &inst.w_star {
                    if cols.len() != inst.k || cols.iter().any(|c| c.len() != inst.d) {
                        return bad("w_star must have k columns of length d".into());
                    }
                }
            }
            ModelTag::Coarse => {
                let Some(c) = &self.coarse else {
                    return bad("[coarse] is required for the coarse model".into());
                };
                if c.partition.dim().is_some_and(|d| d != c.mu_star.len()) {
                    return bad("partition and mu_star dimensions differ".into());
                }
            }
        }
        if self.boost.reps == 0 || !(self.boost.radius > 0.0) {
            return bad("boost needs reps >= 1 and a positive radius".into());
        }
        Ok(())
    }

    pub fn resolved_psgd(&self) -> ResolvedPsgd {
        let (mult, div, cap) = match self.preset {
            Preset::Desk => (DESK_T_MULTIPLIER, PAPER_GAMMA_DIVISOR, DESK_T_CAP),
            Preset::Paper => (PAPER_T_MULTIPLIER, PAPER_GAMMA_DIVISOR, usize::MAX),
        };
        let p = &self.psgd;
        ResolvedPsgd {
            eps: p.eps.unwrap_or(0.01),
            eta: p.eta.unwrap_or(0.5),
            g: p.g,
            t_multiplier: p.t_multiplier.unwrap_or(mult),
            gamma_divisor: p.gamma_divisor.unwrap_or(div),
            t_cap: p.t_cap.unwrap_or(cap),
        }
    }

    /// Hex SHA-256 of the canonical JSON form of the effective configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MAX: &str = r#"
model = "max"
seed = 3
n = 1000

[instance]
d = 3
k = 2
c = 0.5
big_c = 1.5

[warm_start]
radius = 0.2
"#;

    #[test]
    fn parses_and_validates() {
        let cfg = RunConfig::from_toml(MAX, Path::new(".")).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.preset, Preset::Desk);
        assert_eq!(cfg.resolved_psgd().t_cap, DESK_T_CAP);
    }

    #[test]
    fn seed_is_mandatory() {
        let text = MAX.replace("seed = 3\n", "");
        assert!(matches!(
            RunConfig::from_toml(&text, Path::new(".")),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn missing_file_is_a_config_error() {
        let text = format!("{MAX}\n").replace("n = 1000", "n = 1000\ndata = \"nope.ndjson\"");
        let cfg = RunConfig::from_toml(&text, Path::new("/nonexistent")).unwrap();
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
    }

    #[test]
    fn hash_tracks_seed() {
        let a = RunConfig::from_toml(MAX, Path::new(".")).unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 4;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn paper_preset_uses_worst_case_constants() {
        let text = MAX.replace("n = 1000", "n = 1000\npreset = \"paper\"");
        let cfg = RunConfig::from_toml(&text, Path::new(".")).unwrap();
        let p = cfg.resolved_psgd();
        assert_eq!(p.t_multiplier, PAPER_T_MULTIPLIER);
        assert_eq!(p.t_cap, usize::MAX);
    }
}
