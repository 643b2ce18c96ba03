//! TOML run configuration.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

use viscoctl::grid::{Extrapolation, TimeGrid};
use viscoctl::kernel::{KernelFamily, KernelSpec};
use viscoctl::moment::TargetState;
use viscoctl::riesz::DEFAULT_CONDITION_CAP;
use viscoctl::spectral::DomainSpec;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Spectrum,
    Responses,
    Gram,
    Synthesize,
    Verify,
    #[serde(rename = "sweep-T", alias = "sweep-t")]
    SweepT,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Spectrum => "spectrum",
            Experiment::Responses => "responses",
            Experiment::Gram => "gram",
            Experiment::Synthesize => "synthesize",
            Experiment::Verify => "verify",
            Experiment::SweepT => "sweep-T",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    #[default]
    Viscoelastic,
    Telegraph,
}

/// `grid_h = 1e-3` or `grid_h = "auto"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridStep {
    Step(f64),
    Keyword(String),
}

impl Default for GridStep {
    fn default() -> Self {
        GridStep::Keyword("auto".into())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    #[serde(default)]
    pub xi: Option<Vec<f64>>,
    #[serde(default)]
    pub eta: Option<Vec<f64>>,
    /// Draw `K` random coefficients from the run seed.
    #[serde(default)]
    pub random: bool,
    /// Interpret `xi`, `eta` as coefficients of `(w(T), w_t(T))`.
    #[serde(default)]
    pub physical: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub t_min: f64,
    pub t_max: f64,
    pub steps: usize,
    /// `[N_hi, N_lo]` for the plateau ratio `m_{N_hi} / m_{N_lo}`.
    #[serde(default)]
    pub ratio_modes: Option<[usize; 2]>,
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
}

fn default_thresholds() -> Vec<f64> {
    vec![0.1, 0.5]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisConfig {
    #[serde(default = "default_cap")]
    pub condition_cap: f64,
    #[serde(default = "default_directions")]
    pub min_norm_directions: usize,
}

fn default_cap() -> f64 {
    DEFAULT_CONDITION_CAP
}

fn default_directions() -> usize {
    5
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            condition_cap: default_cap(),
            min_norm_directions: default_directions(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub experiment: Option<Experiment>,
    pub domain: DomainSpec,
    #[serde(default)]
    pub kernel: KernelFamily,
    pub horizon: f64,
    #[serde(default)]
    pub grid_h: GridStep,
    /// Number of eigenmodes in spectra, responses and Gram sections.
    #[serde(default = "default_modes")]
    pub modes: usize,
    /// Controlled modes `K`.
    #[serde(default = "default_truncation")]
    pub truncation: usize,
    /// Simulated modes, `4 K` when absent.
    #[serde(default)]
    pub k_sim: Option<usize>,
    #[serde(default)]
    pub family: FamilyKind,
    /// Telegraph family parameter, `c` when absent.
    #[serde(default)]
    pub gamma_param: Option<f64>,
    #[serde(default)]
    pub target: TargetConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub synthesis: SynthesisConfig,
    #[serde(default = "default_levels")]
    pub extrapolation_levels: usize,
    /// Control CSV from an earlier synthesis, for `verify`.
    #[serde(default)]
    pub control: Option<PathBuf>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

fn default_modes() -> usize {
    40
}

fn default_truncation() -> usize {
    12
}

fn default_levels() -> usize {
    Extrapolation::default().levels
}

impl RunConfig {
    /// Parses TOML, rejecting unknown keys with the full list.
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let mut unknown = Vec::new();
        let de = toml::Deserializer::new(text);
        let cfg: RunConfig = serde_ignored::deserialize(de, |path| unknown.push(path.to_string()))
            .map_err(|e| CliError::Config(e.to_string()))?;
        if !unknown.is_empty() {
            return Err(CliError::Config(format!(
                "unknown keys: {}",
                unknown.join(", ")
            )));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::MissingArtifact(format!("cannot read {}: {e}", path.display()))
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if self.modes == 0 || self.truncation == 0 || self.extrapolation_levels == 0 {
            return bad("modes, truncation and extrapolation_levels must be positive".into());
        }
        if self.truncation > self.modes {
            return bad(format!(
                "truncation {} exceeds modes {}",
                self.truncation, self.modes
            ));
        }
        if self.k_sim.is_some_and(|k| k < self.truncation) {
            return bad("k_sim must be at least the truncation".into());
        }
        match &self.grid_h {
            GridStep::Step(h) if !(*h > 0.0) => {
                return bad(format!("grid_h must be positive, got {h}"))
            }
            GridStep::Keyword(k) if k != "auto" => {
                return bad(format!("grid_h must be a number or \"auto\", got {k:?}"))
            }
            _ => {}
        }
        if let Some(s) = &self.sweep {
            if !(s.t_min > 0.0 && s.t_min < s.t_max) {
                return bad(format!(
                    "sweep needs 0 < t_min < t_max, got {} and {}",
                    s.t_min, s.t_max
                ));
            }
            if s.steps < 2 {
                return bad("sweep needs at least 2 steps".into());
            }
            if let Some([hi, lo]) = s.ratio_modes {
                if lo == 0 || hi <= lo || hi > self.modes {
                    return bad(format!(
                        "ratio_modes [{hi}, {lo}] must satisfy 0 < lo < hi <= modes"
                    ));
                }
            }
        }
        if !(self.synthesis.condition_cap > 1.0) {
            return bad("condition_cap must exceed 1".into());
        }
        self.domain
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let t = &self.target;
        if !t.random {
            if let (Some(x), Some(e)) = (&t.xi, &t.eta) {
                if x.len() != e.len() {
                    return bad("target xi and eta have different lengths".into());
                }
                if x.len() > self.truncation {
                    return bad(format!(
                        "target has {} modes, truncation is {}",
                        x.len(),
                        self.truncation
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn experiment(&self) -> CliResult<Experiment> {
        self.experiment
            .ok_or_else(|| CliError::Config("no experiment selected".into()))
    }

    pub fn kernel_spec(&self) -> KernelSpec {
        KernelSpec {
            family: self.kernel.clone(),
            c: self.domain.c,
        }
    }

    pub fn k_sim(&self) -> usize {
        self.k_sim.unwrap_or(4 * self.truncation)
    }

    pub fn gamma_param(&self) -> f64 {
        self.gamma_param.unwrap_or(self.domain.c)
    }

    pub fn extrapolation(&self) -> Extrapolation {
        Extrapolation {
            levels: self.extrapolation_levels,
        }
    }

    /// Requested step; `auto` resolves from the largest `beta`.
    pub fn step_for(&self, beta_max: f64) -> CliResult<f64> {
        match self.grid_h {
            GridStep::Step(h) => Ok(h),
            _ => Ok(TimeGrid::auto(self.horizon, beta_max)?.step()),
        }
    }

    /// Target coefficients over `K` modes, zero-padded.
    pub fn target_state(&self, kappas: &[f64], gamma: f64) -> CliResult<TargetState> {
        let k = self.truncation;
        let t = &self.target;
        if t.random {
            return Ok(TargetState::random(k, self.seed)?);
        }
        let pad = |v: &Option<Vec<f64>>| {
            let mut out = v.clone().unwrap_or_default();
            out.resize(k, 0.0);
            out
        };
        let (xi, eta) = match (&t.xi, &t.eta) {
            (None, None) => {
                let mut xi = vec![0.0; k];
                xi[0] = 1.0;
                (xi, vec![0.0; k])
            }
            _ => (pad(&t.xi), pad(&t.eta)),
        };
        if t.physical {
            Ok(TargetState::from_physical(
                &xi,
                &eta,
                kappas,
                gamma,
                self.horizon,
            )?)
        } else {
            Ok(TargetState::new(xi, eta)?)
        }
    }

    /// SHA-256 of the canonical JSON form, without the output directory.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output = None;
        let json = serde_json::to_vec(&canonical).expect("configuration serializes");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
