//! Small deterministic environments with known optima.

mod chain;
mod gridworld;
mod tabular;

pub use chain::{ChainConfig, ChainMdp};
pub use gridworld::{GridWorld, GridWorldConfig, ObservationKind};
pub use tabular::{value_iteration_oracle, OracleSolution, TabularMdp, Transition, VALUE_ITERATION_TOL};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("action {action} out of range for {actions} actions")]
    BadAction { action: usize, actions: usize },
    #[error("episode is over; call reset first")]
    EpisodeOver,
    #[error("invalid environment config: {0}")]
    Config(String),
    #[error("MDP is not finite: {0}")]
    NonFinite(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

/// Episodic environment. Implementations are deterministic: the same
/// action sequence after `reset` always yields the same stream.
pub trait Env: Send {
    fn reset(&mut self) -> Vec<f64>;
    fn step(&mut self, action: usize) -> Result<Step, EnvError>;
    fn action_count(&self) -> usize;
    fn observation_shape(&self) -> Vec<usize>;
    fn max_episode_steps(&self) -> usize;
    /// The finite MDP behind this env, for the value-iteration oracle.
    fn tabular(&self) -> TabularMdp;
}

/// Multiplies every reward of the inner env by a constant.
pub struct RewardScale<E> {
    inner: E,
    multiplier: f64,
}

impl<E: Env> RewardScale<E> {
    pub fn new(inner: E, multiplier: f64) -> Result<Self, EnvError> {
        if !multiplier.is_finite() {
            return Err(EnvError::Config(format!(
                "reward multiplier {multiplier} is not finite"
            )));
        }
        Ok(Self { inner, multiplier })
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }
}

impl<E: Env> Env for RewardScale<E> {
    fn reset(&mut self) -> Vec<f64> {
        self.inner.reset()
    }

    fn step(&mut self, action: usize) -> Result<Step, EnvError> {
        let mut s = self.inner.step(action)?;
        s.reward *= self.multiplier;
        Ok(s)
    }

    fn action_count(&self) -> usize {
        self.inner.action_count()
    }

    fn observation_shape(&self) -> Vec<usize> {
        self.inner.observation_shape()
    }

    fn max_episode_steps(&self) -> usize {
        self.inner.max_episode_steps()
    }

    fn tabular(&self) -> TabularMdp {
        let mut mdp = self.inner.tabular();
        for row in &mut mdp.transitions {
            for t in row {
                t.reward *= self.multiplier;
            }
        }
        mdp
    }
}

/// Environment selection as it appears in a run config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvConfig {
    Gridworld(GridWorldConfig),
    Chain(ChainConfig),
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig::Gridworld(GridWorldConfig::default())
    }
}

impl EnvConfig {
    pub fn name(&self) -> &'static str {
        match self {
            EnvConfig::Gridworld(_) => "gridworld",
            EnvConfig::Chain(_) => "chain",
        }
    }

    fn reward_scale(&self) -> f64 {
        match self {
            EnvConfig::Gridworld(c) => c.reward_scale,
            EnvConfig::Chain(c) => c.reward_scale,
        }
    }

    pub fn build(&self) -> Result<Box<dyn Env>, EnvError> {
        let scale = self.reward_scale();
        let boxed: Box<dyn Env> = match self {
            EnvConfig::Gridworld(c) => {
                let env = GridWorld::new(c.clone())?;
                if scale == 1.0 {
                    Box::new(env)
                } else {
                    Box::new(RewardScale::new(env, scale)?)
                }
            }
            EnvConfig::Chain(c) => {
                let env = ChainMdp::new(c.clone())?;
                if scale == 1.0 {
                    Box::new(env)
                } else {
                    Box::new(RewardScale::new(env, scale)?)
                }
            }
        };
        Ok(boxed)
    }
}

#[cfg(test)]
mod tests;
