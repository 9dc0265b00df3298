use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{parse_toml, HarnessError};
use crate::agent::{AgentConfig, LearnerConfig};
use crate::dnd::DndConfig;
use crate::encoder::{AdamConfig, EncoderConfig, FcInit, ReductionConfig};
use crate::envs::EnvConfig;

/// Environment variable that overrides `run.output_dir`. Nothing else can
/// be overridden from the environment.
pub const OUTPUT_DIR_ENV: &str = "NEC_RP_OUTPUT_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Trainable FC reduction from the first step.
    Nec,
    /// Fixed RP reduction for the whole run.
    NecRp,
    /// RP until `agent.switch_step`, then FC initialised from the RP matrix.
    NecRpSwitch,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Nec => "nec",
            Variant::NecRp => "nec-rp",
            Variant::NecRpSwitch => "nec-rp-switch",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub name: String,
    pub output_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub variant: Variant,
    /// Training episodes per seed.
    pub episodes: u64,
    /// Optional cap on environment steps per seed.
    pub max_steps: Option<u64>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            name: "run".into(),
            output_dir: PathBuf::from("runs"),
            seeds: vec![0, 1, 2],
            variant: Variant::NecRp,
            episodes: 300,
            max_steps: None,
        }
    }
}

/// Complete description of an experiment. The TOML file is the whole truth:
/// unknown keys are rejected and every field has a documented default.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub env: EnvConfig,
    pub agent: AgentConfig,
    pub encoder: EncoderConfig,
    pub reduction: ReductionConfig,
    pub dnd: DndConfig,
    pub optimizer: AdamConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: RunConfig = parse_toml(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config always serialises")
    }

    /// SHA-256 of the canonical TOML serialisation.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let err = |path: &str, message: String| {
            Err(HarnessError::Config {
                path: path.into(),
                message,
            })
        };
        if self.run.seeds.is_empty() {
            return err("run.seeds", "at least one seed is required".into());
        }
        if self.run.episodes == 0 {
            return err("run.episodes", "must be positive".into());
        }
        match (self.run.variant, self.agent.switch_step) {
            (Variant::NecRpSwitch, None) => {
                return err("agent.switch_step", "required for variant nec-rp-switch".into());
            }
            (Variant::Nec | Variant::NecRp, Some(_)) => {
                return err(
                    "agent.switch_step",
                    format!("only meaningful for nec-rp-switch, not {}", self.run.variant.name()),
                );
            }
            _ => {}
        }
        if let Err(e) = self.agent.validate() {
            return err("agent", e.to_string());
        }
        if let Err(e) = self.dnd.validate() {
            return err("dnd", e.to_string());
        }
        if self.reduction.key_dim == 0 {
            return err("reduction.key_dim", "must be positive".into());
        }
        if let Err(e) = self.env.build() {
            return err("env", e.to_string());
        }
        Ok(())
    }

    /// Agent settings with the variant applied.
    pub fn learner(&self) -> LearnerConfig {
        let mut agent = self.agent.clone();
        let mut reduction = self.reduction.clone();
        match self.run.variant {
            Variant::Nec => {
                agent.switch_step = Some(0);
                reduction.fc_init = FcInit::Fresh;
            }
            Variant::NecRp => agent.switch_step = None,
            Variant::NecRpSwitch => {}
        }
        LearnerConfig {
            agent,
            encoder: self.encoder.clone(),
            reduction,
            dnd: self.dnd.clone(),
            optimizer: self.optimizer.clone(),
        }
    }

    /// Output directory for this run: `$NEC_RP_OUTPUT_DIR` if set, else
    /// `run.output_dir`, joined with `run.name`.
    pub fn run_dir(&self) -> PathBuf {
        let base = std::env::var_os(OUTPUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| self.run.output_dir.clone());
        base.join(&self.run.name)
    }
}
