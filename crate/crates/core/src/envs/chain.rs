use serde::{Deserialize, Serialize};

use super::{Env, EnvError, Step, TabularMdp, Transition};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    pub length: usize,
    /// Steps allowed beyond the shortest solution.
    pub extra_steps: usize,
    pub reward_scale: f64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            length: 8,
            extra_steps: 20,
            reward_scale: 1.0,
        }
    }
}

/// `length` states in a line, starting at the left end. Action 0 moves left
/// (which sends the agent back to the start), action 1 moves right. Moving
/// right from the last state pays +1 and ends the episode. Observations are
/// one-hot positions.
#[derive(Clone, Debug)]
pub struct ChainMdp {
    config: ChainConfig,
    position: usize,
    steps: usize,
    done: bool,
}

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

impl ChainMdp {
    pub fn new(config: ChainConfig) -> Result<Self, EnvError> {
        if config.length == 0 {
            return Err(EnvError::Config("chain length must be positive".into()));
        }
        Ok(Self {
            config,
            position: 0,
            steps: 0,
            done: false,
        })
    }

    fn observation(&self) -> Vec<f64> {
        let mut obs = vec![0.0; self.config.length];
        obs[self.position] = 1.0;
        obs
    }

    fn transition(&self, position: usize, action: usize) -> Transition {
        match action {
            LEFT => Transition {
                next: 0,
                reward: 0.0,
                terminal: false,
            },
            _ if position + 1 == self.config.length => Transition {
                next: position,
                reward: 1.0,
                terminal: true,
            },
            _ => Transition {
                next: position + 1,
                reward: 0.0,
                terminal: false,
            },
        }
    }
}

impl Env for ChainMdp {
    fn reset(&mut self) -> Vec<f64> {
        self.position = 0;
        self.steps = 0;
        self.done = false;
        self.observation()
    }

    fn step(&mut self, action: usize) -> Result<Step, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        if action > RIGHT {
            return Err(EnvError::BadAction { action, actions: 2 });
        }
        let t = self.transition(self.position, action);
        self.position = t.next;
        self.steps += 1;
        self.done = t.terminal || self.steps >= self.max_episode_steps();
        Ok(Step {
            observation: self.observation(),
            reward: t.reward,
            done: self.done,
        })
    }

    fn action_count(&self) -> usize {
        2
    }

    fn observation_shape(&self) -> Vec<usize> {
        vec![self.config.length]
    }

    fn max_episode_steps(&self) -> usize {
        self.config.length + self.config.extra_steps
    }

    fn tabular(&self) -> TabularMdp {
        TabularMdp {
            n_states: self.config.length,
            n_actions: 2,
            start: 0,
            transitions: (0..self.config.length)
                .map(|s| (0..2).map(|a| self.transition(s, a)).collect())
                .collect(),
        }
    }
}
