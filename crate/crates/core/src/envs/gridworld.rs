use serde::{Deserialize, Serialize};

use super::{Env, EnvError, Step, TabularMdp, Transition};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationKind {
    /// One-hot over cells, shape `[height · width]`.
    OneHot,
    /// Three planes (agent, goal, pits), shape `[3, height, width]`.
    Raster,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridWorldConfig {
    pub width: usize,
    pub height: usize,
    /// `[row, col]`
    pub start: [usize; 2],
    pub goal: [usize; 2],
    pub pits: Vec<[usize; 2]>,
    pub step_reward: f64,
    pub goal_reward: f64,
    pub pit_reward: f64,
    pub max_steps: usize,
    pub observation: ObservationKind,
    pub reward_scale: f64,
}

impl Default for GridWorldConfig {
    fn default() -> Self {
        Self {
            width: 5,
            height: 5,
            start: [0, 0],
            goal: [4, 4],
            pits: vec![[1, 3], [3, 1]],
            step_reward: -0.01,
            goal_reward: 1.0,
            pit_reward: -1.0,
            max_steps: 100,
            observation: ObservationKind::OneHot,
            reward_scale: 1.0,
        }
    }
}

/// Four-connected grid. Actions are up, right, down, left; bumping into the
/// border leaves the agent in place. Entering the goal or a pit pays that
/// cell's reward (instead of the step reward) and ends the episode.
#[derive(Clone, Debug)]
pub struct GridWorld {
    config: GridWorldConfig,
    cell: usize,
    steps: usize,
    done: bool,
}

const MOVES: [(isize, isize); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];

impl GridWorld {
    pub fn new(config: GridWorldConfig) -> Result<Self, EnvError> {
        let c = &config;
        if c.width == 0 || c.height == 0 {
            return Err(EnvError::Config("grid must be non-empty".into()));
        }
        if c.max_steps == 0 {
            return Err(EnvError::Config("max_steps must be positive".into()));
        }
        let inside = |p: [usize; 2]| p[0] < c.height && p[1] < c.width;
        if !inside(c.start) || !inside(c.goal) || !c.pits.iter().all(|p| inside(*p)) {
            return Err(EnvError::Config("start, goal and pits must lie inside the grid".into()));
        }
        if c.start == c.goal || c.pits.contains(&c.start) || c.pits.contains(&c.goal) {
            return Err(EnvError::Config("start, goal and pits must be distinct cells".into()));
        }
        for r in [c.step_reward, c.goal_reward, c.pit_reward] {
            if !r.is_finite() {
                return Err(EnvError::NonFinite(format!("reward {r}")));
            }
        }
        let cell = c.start[0] * c.width + c.start[1];
        Ok(Self {
            config,
            cell,
            steps: 0,
            done: false,
        })
    }

    pub fn config(&self) -> &GridWorldConfig {
        &self.config
    }

    fn index(&self, p: [usize; 2]) -> usize {
        p[0] * self.config.width + p[1]
    }

    fn is_goal(&self, cell: usize) -> bool {
        cell == self.index(self.config.goal)
    }

    fn is_pit(&self, cell: usize) -> bool {
        self.config.pits.iter().any(|p| self.index(*p) == cell)
    }

    fn transition(&self, cell: usize, action: usize) -> Transition {
        if self.is_goal(cell) || self.is_pit(cell) {
            return Transition {
                next: cell,
                reward: 0.0,
                terminal: true,
            };
        }
        let (w, h) = (self.config.width as isize, self.config.height as isize);
        let (r, c) = ((cell / self.config.width) as isize, (cell % self.config.width) as isize);
        let (dr, dc) = MOVES[action];
        let (nr, nc) = (r + dr, c + dc);
        let next = if (0..h).contains(&nr) && (0..w).contains(&nc) {
            (nr * w + nc) as usize
        } else {
            cell
        };
        if self.is_goal(next) {
            Transition {
                next,
                reward: self.config.goal_reward,
                terminal: true,
            }
        } else if self.is_pit(next) {
            Transition {
                next,
                reward: self.config.pit_reward,
                terminal: true,
            }
        } else {
            Transition {
                next,
                reward: self.config.step_reward,
                terminal: false,
            }
        }
    }

    fn observation(&self) -> Vec<f64> {
        let n = self.config.width * self.config.height;
        match self.config.observation {
            ObservationKind::OneHot => {
                let mut obs = vec![0.0; n];
                obs[self.cell] = 1.0;
                obs
            }
            ObservationKind::Raster => {
                let mut obs = vec![0.0; 3 * n];
                obs[self.cell] = 1.0;
                obs[n + self.index(self.config.goal)] = 1.0;
                for p in &self.config.pits {
                    obs[2 * n + self.index(*p)] = 1.0;
                }
                obs
            }
        }
    }
}

impl Env for GridWorld {
    fn reset(&mut self) -> Vec<f64> {
        self.cell = self.index(self.config.start);
        self.steps = 0;
        self.done = false;
        self.observation()
    }

    fn step(&mut self, action: usize) -> Result<Step, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        if action >= MOVES.len() {
            return Err(EnvError::BadAction {
                action,
                actions: MOVES.len(),
            });
        }
        let t = self.transition(self.cell, action);
        self.cell = t.next;
        self.steps += 1;
        self.done = t.terminal || self.steps >= self.config.max_steps;
        Ok(Step {
            observation: self.observation(),
            reward: t.reward,
            done: self.done,
        })
    }

    fn action_count(&self) -> usize {
        MOVES.len()
    }

    fn observation_shape(&self) -> Vec<usize> {
        match self.config.observation {
            ObservationKind::OneHot => vec![self.config.width * self.config.height],
            ObservationKind::Raster => vec![3, self.config.height, self.config.width],
        }
    }

    fn max_episode_steps(&self) -> usize {
        self.config.max_steps
    }

    fn tabular(&self) -> TabularMdp {
        let n = self.config.width * self.config.height;
        TabularMdp {
            n_states: n,
            n_actions: MOVES.len(),
            start: self.index(self.config.start),
            transitions: (0..n)
                .map(|s| (0..MOVES.len()).map(|a| self.transition(s, a)).collect())
                .collect(),
        }
    }
}
