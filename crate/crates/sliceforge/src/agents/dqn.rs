//! Deep Q-network over a discretized allocation space: all 3-part
//! compositions of the PRB budget at a fixed granularity, epsilon-greedy
//! exploration, uniform replay and a periodically synced target network.

use std::collections::VecDeque;

use crate::domain::RngStream;
use crate::error::Error;
use crate::neural::{init_params, AdamState, GradientTape, Mlp};

use super::{ActionInfo, AgentDecision, DqnConfig, StateVector, UpdateStats, STATE_DIM};

/// All nonnegative integer triples summing to `units`, in lexicographic
/// order of (first, second). Count is C(units+2, 2).
pub fn enumerate_compositions(units: u32) -> Vec<[u32; 3]> {
    let mut out = Vec::new();
    for a in 0..=units {
        for b in 0..=(units - a) {
            out.push([a, b, units - a - b]);
        }
    }
    out
}

/// Linear epsilon schedule from start to end over `decay_steps`.
pub fn epsilon_at(step: u64, cfg: &DqnConfig) -> f64 {
    if step >= cfg.eps_decay_steps {
        return cfg.eps_end;
    }
    let frac = step as f64 / cfg.eps_decay_steps as f64;
    cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac
}

/// Epsilon-greedy over the Q row; ties resolve to the lowest index.
pub fn select_action(
    qnet: &Mlp,
    state: &StateVector,
    epsilon: f64,
    rng: &mut RngStream,
) -> Result<usize, Error> {
    let n_actions = qnet.output_dim();
    if rng.unit() < epsilon {
        return Ok(rng.index(n_actions));
    }
    let q = qnet.forward(&state.0)?;
    Ok(argmax(q.output()))
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Temporal-difference target y = r + gamma * (1-done) * max_a' Q'(s', a').
pub fn td_target(reward: f64, done: bool, gamma: f64, next_q_max: f64) -> f64 {
    if done {
        reward
    } else {
        reward + gamma * next_q_max
    }
}

struct ReplayItem {
    state: StateVector,
    action: usize,
    reward: f64,
    next_state: StateVector,
    done: bool,
}

pub struct DqnAgent {
    pub cfg: DqnConfig,
    pub total_prbs: u32,
    pub qnet: Mlp,
    pub target: Mlp,
    pub compositions: Vec<[u32; 3]>,
    adam: AdamState,
    replay: VecDeque<ReplayItem>,
    steps: u64,
}

impl DqnAgent {
    /// Build for a given PRB budget; the action set discretizes it at the
    /// configured granularity.
    pub fn new(cfg: DqnConfig, total_prbs: u32, seed: u64) -> DqnAgent {
        let units = total_prbs / cfg.granularity;
        let compositions = enumerate_compositions(units);
        let mut rng = crate::domain::rng_substream(seed, "agent", 2);
        let qnet = init_params(&[STATE_DIM, cfg.hidden_dim, cfg.hidden_dim, compositions.len()], &mut rng);
        let target = qnet.clone();
        let adam = AdamState::new(cfg.lr, qnet.param_count());
        DqnAgent { cfg, total_prbs, qnet, target, compositions, adam, replay: VecDeque::new(), steps: 0 }
    }

    /// Rebuild from checkpoint parts; the replay buffer starts empty.
    pub fn from_parts(
        cfg: DqnConfig,
        total_prbs: u32,
        qnet: Mlp,
        target: Mlp,
        adam: Option<AdamState>,
        steps: u64,
    ) -> Result<DqnAgent, Error> {
        let units = total_prbs / cfg.granularity;
        let compositions = enumerate_compositions(units);
        if qnet.output_dim() != compositions.len() || target.output_dim() != compositions.len() {
            return Err(Error::Checkpoint(format!(
                "q-network emits {} actions, composition set has {}",
                qnet.output_dim(),
                compositions.len()
            )));
        }
        let adam = match adam {
            Some(a) if a.m.len() == qnet.param_count() => a,
            Some(_) => return Err(Error::Checkpoint("q-network optimizer shape mismatch".into())),
            None => AdamState::new(cfg.lr, qnet.param_count()),
        };
        Ok(DqnAgent { cfg, total_prbs, qnet, target, compositions, adam, replay: VecDeque::new(), steps })
    }

    pub fn adam(&self) -> AdamState {
        self.adam.clone()
    }

    pub fn total_steps(&self) -> u64 {
        self.steps
    }

    pub fn epsilon(&self) -> f64 {
        epsilon_at(self.steps, &self.cfg)
    }

    pub fn action_to_slice_prbs(&self, action_idx: usize) -> [u32; 3] {
        let c = self.compositions[action_idx];
        [c[0] * self.cfg.granularity, c[1] * self.cfg.granularity, c[2] * self.cfg.granularity]
    }

    pub fn decide(
        &mut self,
        state: &StateVector,
        _total_prbs: u32,
        rng: &mut RngStream,
        deterministic: bool,
    ) -> Result<AgentDecision, Error> {
        let eps = if deterministic { 0.0 } else { self.epsilon() };
        let action_idx = select_action(&self.qnet, state, eps, rng)?;
        Ok(AgentDecision {
            slice_prbs: self.action_to_slice_prbs(action_idx),
            info: ActionInfo::Dqn { action_idx },
        })
    }

    /// Store a transition, advance the exploration schedule, take one
    /// gradient step once the replay can fill a batch, and sync the target
    /// network on schedule.
    pub fn record(
        &mut self,
        state: StateVector,
        action: usize,
        reward: f64,
        done: bool,
        next_state: &StateVector,
        rng: &mut RngStream,
    ) -> Result<Option<UpdateStats>, Error> {
        if self.replay.len() == self.cfg.replay_capacity {
            self.replay.pop_front();
        }
        self.replay.push_back(ReplayItem {
            state,
            action,
            reward,
            next_state: next_state.clone(),
            done,
        });
        self.steps += 1;
        if self.replay.len() < self.cfg.batch {
            if self.steps % self.cfg.target_sync_steps == 0 {
                self.target = self.qnet.clone();
            }
            return Ok(None);
        }
        let loss = self.train_batch(rng)?;
        if self.steps % self.cfg.target_sync_steps == 0 {
            self.target = self.qnet.clone();
        }
        Ok(Some(UpdateStats {
            step: self.steps,
            mean_reward: reward,
            actor_loss: loss,
            critic_loss: 0.0,
            epsilon: self.epsilon(),
        }))
    }

    fn train_batch(&mut self, rng: &mut RngStream) -> Result<f64, Error> {
        let m = self.cfg.batch;
        let mut tape = GradientTape::zeros_like(&self.qnet);
        let mut loss = 0.0;
        for _ in 0..m {
            let item = &self.replay[rng.index(self.replay.len())];
            let next_q = self.target.forward(&item.next_state.0)?;
            let next_max = next_q.output().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let y = td_target(item.reward, item.done, self.cfg.gamma, next_max);
            let cache = self.qnet.forward(&item.state.0)?;
            let q = cache.output()[item.action];
            loss += (q - y).powi(2) / m as f64;
            let mut output_grad = vec![0.0; self.qnet.output_dim()];
            output_grad[item.action] = 2.0 * (q - y) / m as f64;
            tape.accumulate(&self.qnet.backward(&cache, &output_grad)?);
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite("dqn td loss".into()));
        }
        let mut params = self.qnet.flatten();
        self.adam.step(&mut params, &tape.flatten())?;
        self.qnet.assign_from_flat(&params)?;
        Ok(loss)
    }
}
