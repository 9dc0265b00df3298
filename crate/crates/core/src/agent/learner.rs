use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{act, n_step_targets, AgentConfig, AgentError, NStepTransition, ReplayMemory};
use crate::dnd::{DndConfig, DndSnapshot, DndStore};
use crate::encoder::{
    AdamConfig, AdamState, EncoderConfig, Gradients, Network, NetworkCheckpoint, ReductionConfig, ReductionMode,
};
use crate::envs::Env;
use crate::rng::{stream_rng, streams, StreamRng};

pub const AGENT_CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to build an agent besides the environment and seed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub agent: AgentConfig,
    pub encoder: EncoderConfig,
    pub reduction: ReductionConfig,
    pub dnd: DndConfig,
    pub optimizer: AdamConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: u64,
    pub length: usize,
    /// Global step count after the episode.
    pub total_steps: u64,
    /// Undiscounted sum of raw rewards.
    pub raw_return: f64,
    /// Mean minibatch loss over the episode's training steps.
    pub loss: Option<f64>,
    pub train_steps: usize,
    pub epsilon: f64,
    pub dnd_sizes: Vec<usize>,
    /// How often each action was taken.
    pub action_counts: Vec<usize>,
    pub reduction_mode: ReductionMode,
    /// Global step at which the reduction layer switched, if during this episode.
    pub switched_at: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// Undiscounted raw returns, one per episode.
    pub returns: Vec<f64>,
    /// Discounted returns from the start state.
    pub discounted: Vec<f64>,
}

impl EvalResult {
    pub fn mean_return(&self) -> f64 {
        mean(&self.returns)
    }

    pub fn mean_discounted(&self) -> f64 {
        mean(&self.discounted)
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Learned state needed to resume evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub version: u32,
    pub steps: u64,
    pub episodes: u64,
    pub network: NetworkCheckpoint,
    pub dnd: DndSnapshot,
}

pub struct Agent {
    config: AgentConfig,
    reduction: ReductionConfig,
    network: Network,
    optimizer: AdamState,
    dnd: DndStore,
    replay: ReplayMemory,
    /// DND writes per action since construction.
    dnd_writes: Vec<u64>,
    steps: u64,
    episodes: u64,
    action_rng: StreamRng,
    replay_rng: StreamRng,
    switch_rng: StreamRng,
}

struct BatchGradients {
    loss: f64,
    network: Gradients,
    /// Summed value and key gradients per `(action, entry id)`.
    entries: BTreeMap<(usize, usize), (f64, Vec<f64>)>,
    touched: Vec<(usize, Vec<usize>)>,
}

/// Entry ids with their value and key gradients, for one action.
type EntryUpdates = (Vec<usize>, Vec<f64>, Vec<Vec<f64>>);

struct Interaction {
    observation: Vec<f64>,
    key: Vec<f64>,
    action: usize,
    reward: f64,
}

impl Agent {
    pub fn new(
        config: &LearnerConfig,
        observation_shape: &[usize],
        actions: usize,
        seed: u64,
    ) -> Result<Self, AgentError> {
        config.agent.validate()?;
        config.dnd.validate()?;
        if actions == 0 {
            return Err(AgentError::NoActions);
        }
        let mut init_rng = stream_rng(seed, streams::NETWORK_INIT);
        let network = Network::with_rp(observation_shape, &config.encoder, &config.reduction, &mut init_rng)?;
        let dnd = DndStore::new(actions, network.key_dim(), config.dnd.clone())?;
        Ok(Self {
            config: config.agent.clone(),
            reduction: config.reduction.clone(),
            optimizer: AdamState::new(config.optimizer.clone()),
            network,
            dnd,
            replay: ReplayMemory::new(config.agent.replay_capacity),
            dnd_writes: vec![0; actions],
            steps: 0,
            episodes: 0,
            action_rng: stream_rng(seed, streams::ACTIONS),
            replay_rng: stream_rng(seed, streams::REPLAY),
            switch_rng: stream_rng(seed, streams::FC_SWITCH_INIT),
        })
    }

    /// Agent restored from a checkpoint, suitable for evaluation.
    pub fn from_checkpoint(config: &LearnerConfig, checkpoint: AgentCheckpoint, seed: u64) -> Result<Self, AgentError> {
        if checkpoint.version != AGENT_CHECKPOINT_VERSION {
            return Err(AgentError::Config(format!(
                "checkpoint version {} is not supported",
                checkpoint.version
            )));
        }
        config.agent.validate()?;
        let (network, optimizer) = checkpoint.network.into_parts()?;
        let dnd = DndStore::from_snapshot(checkpoint.dnd)?;
        let actions = dnd.actions();
        Ok(Self {
            config: config.agent.clone(),
            reduction: config.reduction.clone(),
            network,
            optimizer,
            dnd,
            replay: ReplayMemory::new(config.agent.replay_capacity),
            dnd_writes: vec![0; actions],
            steps: checkpoint.steps,
            episodes: checkpoint.episodes,
            action_rng: stream_rng(seed, streams::ACTIONS),
            replay_rng: stream_rng(seed, streams::REPLAY),
            switch_rng: stream_rng(seed, streams::FC_SWITCH_INIT),
        })
    }

    pub fn checkpoint(&self) -> AgentCheckpoint {
        AgentCheckpoint {
            version: AGENT_CHECKPOINT_VERSION,
            steps: self.steps,
            episodes: self.episodes,
            network: NetworkCheckpoint::new(&self.network, &self.optimizer),
            dnd: self.dnd.snapshot(),
        }
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.network
    }

    pub fn dnd(&self) -> &DndStore {
        &self.dnd
    }

    pub fn dnd_mut(&mut self) -> &mut DndStore {
        &mut self.dnd
    }

    pub fn replay(&self) -> &ReplayMemory {
        &self.replay
    }

    pub fn replay_mut(&mut self) -> &mut ReplayMemory {
        &mut self.replay
    }

    pub fn optimizer(&self) -> &AdamState {
        &self.optimizer
    }

    pub fn dnd_writes(&self) -> &[u64] {
        &self.dnd_writes
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    pub fn epsilon(&self) -> f64 {
        self.config.epsilon(self.steps)
    }

    fn switch_due(&self) -> bool {
        self.network.mode() == ReductionMode::Rp && self.config.switch_step.is_some_and(|cs| self.steps >= cs)
    }

    /// Q-values of every action at `key`, marking the neighbours as used.
    fn q_values_touch(&mut self, key: &[f64]) -> Result<Vec<f64>, AgentError> {
        let mut q = Vec::with_capacity(self.dnd.actions());
        for a in 0..self.dnd.actions() {
            if self.dnd.is_empty(a) {
                q.push(0.0);
            } else {
                q.push(self.dnd.lookup_and_touch(a, key)?.q_value);
            }
        }
        Ok(q)
    }

    /// One episode: interact (training on schedule), then write the
    /// episode's N-step targets to replay and the DND. If the environment
    /// fails mid-episode nothing from the episode is written.
    pub fn run_episode(&mut self, env: &mut dyn Env) -> Result<EpisodeRecord, AgentError> {
        let mut observation = env.reset();
        let mut history: Vec<Interaction> = Vec::new();
        let mut losses = Vec::new();
        let mut switched_at = None;
        loop {
            if self.switch_due() {
                self.network
                    .switch_to_fc(self.reduction.fc_init, &mut self.switch_rng)?;
                switched_at = Some(self.steps);
            }
            let key = self.network.embed(&observation)?;
            let epsilon = self.config.epsilon(self.steps);
            let q = if self.steps < self.config.heatup {
                vec![0.0; self.dnd.actions()]
            } else {
                self.q_values_touch(&key)?
            };
            let action = act(&q, epsilon, &mut self.action_rng)?;
            let step = env.step(action)?;
            history.push(Interaction {
                observation: std::mem::replace(&mut observation, step.observation),
                key,
                action,
                reward: step.reward,
            });
            self.steps += 1;
            if self.steps > self.config.heatup
                && self.steps.is_multiple_of(self.config.replay_period)
                && self.replay.len() >= self.config.minibatch
            {
                losses.push(self.train_step()?);
            }
            if step.done {
                break;
            }
        }
        self.write_back(&history)?;
        self.episodes += 1;
        let mut action_counts = vec![0; self.dnd.actions()];
        for h in &history {
            action_counts[h.action] += 1;
        }
        Ok(EpisodeRecord {
            episode: self.episodes,
            length: history.len(),
            total_steps: self.steps,
            raw_return: history.iter().map(|h| h.reward).sum(),
            loss: (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64),
            train_steps: losses.len(),
            epsilon: self.config.epsilon(self.steps),
            dnd_sizes: self.dnd.sizes(),
            action_counts,
            reduction_mode: self.network.mode(),
            switched_at,
        })
    }

    /// Computes every target before touching replay or the DND, so the
    /// write-back is all-or-nothing.
    fn write_back(&mut self, history: &[Interaction]) -> Result<(), AgentError> {
        let n = self.config.n_step;
        let t_len = history.len();
        let mut bootstrap = vec![0.0; t_len];
        for s in n.min(t_len)..t_len {
            let key = self.network.embed(&history[s].observation)?;
            let q = self.dnd.q_values(&key)?;
            bootstrap[s] = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        }
        let rewards: Vec<f64> = history.iter().map(|h| h.reward).collect();
        let targets = n_step_targets(&rewards, &bootstrap, self.config.gamma, n);
        if let Some(t) = targets.iter().position(|v| !v.is_finite()) {
            return Err(AgentError::NonFiniteTarget { t });
        }
        for (h, &target) in history.iter().zip(&targets) {
            self.replay.push(NStepTransition {
                observation: h.observation.clone(),
                action: h.action,
                target,
            });
            self.dnd.write(h.action, &h.key, target, self.steps)?;
            self.dnd_writes[h.action] += 1;
        }
        Ok(())
    }

    /// One minibatch of gradient descent on `mean (Q(s, a) − target)²`.
    ///
    /// All lookups and gradients are computed against the pre-step network
    /// and stores; DND updates are then applied once per touched entry.
    pub fn train_step(&mut self) -> Result<f64, AgentError> {
        let batch: Vec<NStepTransition> = self
            .replay
            .sample(self.config.minibatch, &mut self.replay_rng)?
            .into_iter()
            .cloned()
            .collect();
        let g = self.batch_gradients(&batch)?;
        if !g.loss.is_finite() {
            return Err(AgentError::NonFiniteLoss {
                loss: g.loss,
                step: self.steps,
            });
        }
        self.optimizer.step(&mut self.network, &g.network)?;

        let lr = self.config.dnd_grad_lr;
        let with_keys = self.dnd.config().key_updates;
        let mut per_action: Vec<EntryUpdates> = vec![Default::default(); self.dnd.actions()];
        for ((action, id), (gv, gk)) in g.entries {
            let slot = &mut per_action[action];
            slot.0.push(id);
            slot.1.push(gv);
            slot.2.push(gk);
        }
        for (action, (ids, values, keys)) in per_action.iter().enumerate() {
            if !ids.is_empty() {
                let key_grads = with_keys.then_some(keys.as_slice());
                self.dnd.apply_gradient_updates(action, ids, values, key_grads, lr)?;
            }
        }
        for (action, ids) in g.touched {
            self.dnd.touch(action, &ids)?;
        }
        Ok(g.loss)
    }

    fn batch_gradients(&self, batch: &[NStepTransition]) -> Result<BatchGradients, AgentError> {
        let scale = 1.0 / batch.len() as f64;
        let mut out = BatchGradients {
            loss: 0.0,
            network: self.network.zero_gradients(),
            entries: BTreeMap::new(),
            touched: Vec::new(),
        };
        for t in batch {
            let trace = self.network.forward(&t.observation)?;
            if self.dnd.is_empty(t.action) {
                // Q reads as a constant 0: no gradient reaches anything.
                out.loss += scale * t.target * t.target;
                continue;
            }
            let lookup = self.dnd.lookup(t.action, &trace.key)?;
            let err = lookup.q_value - t.target;
            out.loss += scale * err * err;
            let upstream = 2.0 * scale * err;
            if upstream != 0.0 {
                let g = self.dnd.lookup_gradients(&lookup, &trace.key, upstream)?;
                out.network.accumulate(&self.network.backward(&trace, &g.query)?)?;
                for ((&id, gv), gk) in lookup.neighbor_ids.iter().zip(g.values).zip(g.keys) {
                    let slot = out
                        .entries
                        .entry((t.action, id))
                        .or_insert_with(|| (0.0, vec![0.0; gk.len()]));
                    slot.0 += gv;
                    for (s, v) in slot.1.iter_mut().zip(gk) {
                        *s += v;
                    }
                }
            }
            out.touched.push((t.action, lookup.neighbor_ids));
        }
        Ok(out)
    }

    /// Minibatch loss and its gradient wrt the network parameters for a fixed
    /// batch, without applying anything.
    pub fn loss_and_gradients(&self, batch: &[NStepTransition]) -> Result<(f64, Gradients), AgentError> {
        let g = self.batch_gradients(batch)?;
        Ok((g.loss, g.network))
    }

    /// Runs `episodes` episodes with a fixed ε and no learning or writes.
    pub fn evaluate(
        &self,
        env: &mut dyn Env,
        episodes: usize,
        epsilon: f64,
        rng: &mut impl Rng,
    ) -> Result<EvalResult, AgentError> {
        let gamma = self.config.gamma;
        let mut result = EvalResult {
            returns: Vec::with_capacity(episodes),
            discounted: Vec::with_capacity(episodes),
        };
        for _ in 0..episodes {
            let mut observation = env.reset();
            let (mut raw, mut disc, mut discount) = (0.0, 0.0, 1.0);
            loop {
                let key = self.network.embed(&observation)?;
                let q = self.dnd.q_values(&key)?;
                let step = env.step(act(&q, epsilon, rng)?)?;
                raw += step.reward;
                disc += discount * step.reward;
                discount *= gamma;
                observation = step.observation;
                if step.done {
                    break;
                }
            }
            result.returns.push(raw);
            result.discounted.push(disc);
        }
        Ok(result)
    }
}
