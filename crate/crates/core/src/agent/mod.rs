//! The control loop: ε-greedy acting, N-step targets, replay, training and
//! the RP→FC switch.

mod learner;
mod replay;

pub use learner::{Agent, AgentCheckpoint, EpisodeRecord, EvalResult, LearnerConfig, AGENT_CHECKPOINT_VERSION};
pub use replay::{NStepTransition, ReplayMemory};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dnd::DndError;
use crate::encoder::EncoderError;
use crate::envs::EnvError;

#[derive(Debug, Error, PartialEq)]
pub enum AgentError {
    #[error("no actions to choose from")]
    NoActions,
    #[error("epsilon {0} outside [0, 1]")]
    BadEpsilon(f64),
    #[error("invalid agent config: {0}")]
    Config(String),
    #[error("replay holds {len} transitions, minibatch needs {needed}")]
    ReplayTooSmall { len: usize, needed: usize },
    #[error("non-finite loss {loss} at step {step}")]
    NonFiniteLoss { loss: f64, step: u64 },
    #[error("non-finite N-step target at t={t}")]
    NonFiniteTarget { t: usize },
    #[error("environment: {0}")]
    Env(#[from] EnvError),
    #[error("dnd: {0}")]
    Dnd(#[from] DndError),
    #[error("network: {0}")]
    Encoder(#[from] EncoderError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub gamma: f64,
    pub n_step: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Annealing length in steps, counted from the end of heatup.
    pub anneal_steps: u64,
    /// Random-action steps before any training.
    pub heatup: u64,
    /// Step at which the RP layer becomes a trainable FC layer; absent means never.
    pub switch_step: Option<u64>,
    pub replay_capacity: usize,
    /// Train once every this many steps.
    pub replay_period: u64,
    pub minibatch: usize,
    /// Learning rate for gradient steps on DND keys and values.
    pub dnd_grad_lr: f64,
    pub eval_epsilon: f64,
    /// Evaluate every this many training episodes.
    pub eval_interval: u64,
    pub eval_episodes: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            n_step: 8,
            epsilon_start: 1.0,
            epsilon_end: 0.01,
            anneal_steps: 2_000,
            heatup: 500,
            switch_step: None,
            replay_capacity: 10_000,
            replay_period: 4,
            minibatch: 32,
            dnd_grad_lr: 1e-5,
            eval_epsilon: 0.01,
            eval_interval: 25,
            eval_episodes: 10,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let fail = |m: String| Err(AgentError::Config(m));
        if !(0.0..1.0).contains(&self.gamma) {
            return fail(format!("gamma = {} must lie in [0, 1)", self.gamma));
        }
        if self.n_step == 0 {
            return fail("n_step must be at least 1".into());
        }
        for (name, e) in [
            ("epsilon_start", self.epsilon_start),
            ("epsilon_end", self.epsilon_end),
            ("eval_epsilon", self.eval_epsilon),
        ] {
            if !(0.0..=1.0).contains(&e) {
                return fail(format!("{name} = {e} must lie in [0, 1]"));
            }
        }
        if self.minibatch == 0 || self.replay_capacity < self.minibatch {
            return fail("need 1 ≤ minibatch ≤ replay_capacity".into());
        }
        if self.replay_period == 0 || self.eval_interval == 0 {
            return fail("replay_period and eval_interval must be positive".into());
        }
        if !(self.dnd_grad_lr.is_finite() && self.dnd_grad_lr >= 0.0) {
            return fail(format!(
                "dnd_grad_lr = {} must be finite and non-negative",
                self.dnd_grad_lr
            ));
        }
        Ok(())
    }

    /// Exploration rate at global step `ts`: 1 during heatup, then a linear
    /// anneal from `epsilon_start` to `epsilon_end`, then constant.
    pub fn epsilon(&self, ts: u64) -> f64 {
        if ts < self.heatup {
            return 1.0;
        }
        let k = ts - self.heatup;
        if k >= self.anneal_steps {
            return self.epsilon_end;
        }
        let frac = k as f64 / self.anneal_steps as f64;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

/// ε-greedy: with probability ε a uniformly random action (possibly the
/// greedy one), otherwise the argmax with ties to the lowest index.
pub fn act(q_values: &[f64], epsilon: f64, rng: &mut impl Rng) -> Result<usize, AgentError> {
    if q_values.is_empty() {
        return Err(AgentError::NoActions);
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(AgentError::BadEpsilon(epsilon));
    }
    if rng.random::<f64>() < epsilon {
        return Ok(rng.random_range(0..q_values.len()));
    }
    Ok(argmax(q_values))
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// N-step targets for one episode, indexed from 0.
///
/// `Q(t) = Σ_{j<min(N, T−t)} γʲ r[t+j] + γᴺ bootstrap[t+N]` where the tail is
/// present only when `t + N < T`. `bootstrap[s]` is `max_a Q(s_s, a)`; entries
/// never consulted may hold anything.
pub fn n_step_targets(rewards: &[f64], bootstrap: &[f64], gamma: f64, n: usize) -> Vec<f64> {
    let t_len = rewards.len();
    let tail_discount = if n < t_len { gamma.powi(n as i32) } else { 0.0 };
    (0..t_len)
        .map(|t| {
            let horizon = n.min(t_len - t);
            let mut acc = 0.0;
            let mut discount = 1.0;
            for r in &rewards[t..t + horizon] {
                acc += discount * r;
                discount *= gamma;
            }
            if t + horizon < t_len {
                acc += tail_discount * bootstrap[t + n];
            }
            acc
        })
        .collect()
}
