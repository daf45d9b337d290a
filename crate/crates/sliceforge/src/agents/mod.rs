//! PPO and DQN agents: state encoding, the select/store/update cycle, and
//! the surrogate pre-training environment.

pub mod dqn;
pub mod ppo;
pub mod surrogate;

use serde::{Deserialize, Serialize};

use crate::domain::SliceKind;
use crate::error::Error;

pub use dqn::DqnAgent;
pub use ppo::PpoAgent;
pub use surrogate::{pretrain, SurrogateEnv};

pub const STATE_DIM: usize = 15;

const DEMAND_SCALE: f64 = 5e6;
const LINK_LOSS_OFFSET_DB: f64 = 80.0;
const LINK_LOSS_SCALE_DB: f64 = 60.0;

/// 15 features: for each of the three active UEs in slice-index order, a
/// one-hot slice tag, a normalized demand and a normalized link loss.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(pub [f64; STATE_DIM]);

pub fn encode_demand(demand_bits: f64) -> f64 {
    (demand_bits / DEMAND_SCALE).clamp(0.0, 2.0)
}

pub fn encode_link_loss(link_loss_db: f64) -> f64 {
    ((link_loss_db - LINK_LOSS_OFFSET_DB) / LINK_LOSS_SCALE_DB).clamp(0.0, 2.0)
}

/// Per-UE inputs to the state encoder. `demand_bits` is the requested
/// bitrate for eMBB and the current buffer occupancy in bits otherwise.
#[derive(Debug, Clone, Copy)]
pub struct UeStateInput {
    pub slice: SliceKind,
    pub demand_bits: f64,
    pub link_loss_db: f64,
}

/// Deterministic encoding; callers pass the active UEs in slice-index order.
pub fn build_state(inputs: &[UeStateInput; 3]) -> StateVector {
    let mut v = [0.0; STATE_DIM];
    for (i, ue) in inputs.iter().enumerate() {
        let base = i * 5;
        v[base + ue.slice.index()] = 1.0;
        v[base + 3] = encode_demand(ue.demand_bits);
        v[base + 4] = encode_link_loss(ue.link_loss_db);
    }
    StateVector(v)
}

/// One stored step of experience.
#[derive(Debug, Clone)]
pub struct Transition {
    pub state: StateVector,
    pub action: [f64; 3],
    pub logprob: f64,
    pub value: f64,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip_eps: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub rollout_len: usize,
    pub update_epochs: usize,
    pub minibatch: usize,
    pub entropy_coef: f64,
    pub grad_clip: f64,
    pub init_log_std: f64,
    pub hidden_dim: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            gamma: 0.9,
            lambda: 0.95,
            clip_eps: 0.2,
            actor_lr: 3e-4,
            critic_lr: 1e-3,
            rollout_len: 256,
            update_epochs: 4,
            minibatch: 64,
            entropy_coef: 0.01,
            grad_clip: 0.5,
            init_log_std: -0.5,
            hidden_dim: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DqnConfig {
    /// PRBs per allocation unit.
    pub granularity: u32,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_decay_steps: u64,
    pub replay_capacity: usize,
    pub batch: usize,
    pub gamma: f64,
    pub target_sync_steps: u64,
    pub lr: f64,
    pub hidden_dim: usize,
}

impl Default for DqnConfig {
    fn default() -> Self {
        DqnConfig {
            granularity: 4,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay_steps: 5000,
            replay_capacity: 50_000,
            batch: 64,
            gamma: 0.99,
            target_sync_steps: 500,
            lr: 1e-3,
            hidden_dim: 64,
        }
    }
}

/// What an agent decided for one epoch, plus what it must remember to
/// learn from it.
#[derive(Debug, Clone)]
pub struct AgentDecision {
    pub slice_prbs: [u32; 3],
    pub info: ActionInfo,
}

#[derive(Debug, Clone)]
pub enum ActionInfo {
    Ppo { action: [f64; 3], logprob: f64, value: f64 },
    Dqn { action_idx: usize },
}

/// Row for the training-curve CSV.
#[derive(Debug, Clone, Copy)]
pub struct UpdateStats {
    pub step: u64,
    pub mean_reward: f64,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub epsilon: f64,
}

/// Either agent kind behind one select/store/update surface.
pub enum Agent {
    Ppo(PpoAgent),
    Dqn(DqnAgent),
}

pub const AGENT_CHECKPOINT_VERSION: u32 = 1;

/// Serialized agent: network checkpoints plus a config echo.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentCheckpoint {
    pub format_version: u32,
    pub agent: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ppo: Option<PpoCheckpoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dqn: Option<DqnCheckpoint>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpoCheckpoint {
    pub config: PpoConfig,
    pub total_steps: u64,
    pub actor: crate::neural::NetCheckpoint,
    pub log_std: [f64; 3],
    pub critic: crate::neural::NetCheckpoint,
    /// Actor optimizer covers the network parameters plus the log-std row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actor_optimizer: Option<crate::neural::AdamState>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DqnCheckpoint {
    pub config: DqnConfig,
    pub total_prbs: u32,
    pub total_steps: u64,
    pub qnet: crate::neural::NetCheckpoint,
    pub target: crate::neural::NetCheckpoint,
}

impl Agent {
    pub fn kind(&self) -> &'static str {
        match self {
            Agent::Ppo(_) => "ppo",
            Agent::Dqn(_) => "dqn",
        }
    }

    pub fn to_checkpoint(&self) -> AgentCheckpoint {
        use crate::neural::NetCheckpoint;
        match self {
            Agent::Ppo(a) => AgentCheckpoint {
                format_version: AGENT_CHECKPOINT_VERSION,
                agent: "ppo".into(),
                ppo: Some(PpoCheckpoint {
                    config: a.cfg,
                    total_steps: a.total_steps(),
                    actor: NetCheckpoint::from_net(&a.actor, None),
                    log_std: a.log_std,
                    critic: NetCheckpoint::from_net(&a.critic, Some(&a.critic_adam)),
                    actor_optimizer: Some(a.actor_adam.clone()),
                }),
                dqn: None,
            },
            Agent::Dqn(a) => AgentCheckpoint {
                format_version: AGENT_CHECKPOINT_VERSION,
                agent: "dqn".into(),
                ppo: None,
                dqn: Some(DqnCheckpoint {
                    config: a.cfg,
                    total_prbs: a.total_prbs,
                    total_steps: a.total_steps(),
                    qnet: NetCheckpoint::from_net(&a.qnet, Some(&a.adam())),
                    target: NetCheckpoint::from_net(&a.target, None),
                }),
            },
        }
    }

    pub fn from_checkpoint(ckpt: AgentCheckpoint) -> Result<Agent, Error> {
        if ckpt.format_version != AGENT_CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "checkpoint format version {} unsupported (expected {})",
                ckpt.format_version, AGENT_CHECKPOINT_VERSION
            )));
        }
        match (ckpt.agent.as_str(), ckpt.ppo, ckpt.dqn) {
            ("ppo", Some(p), _) => {
                let (actor, _) = p.actor.into_net()?;
                let (critic, critic_adam) = p.critic.into_net()?;
                Ok(Agent::Ppo(PpoAgent::from_parts(
                    p.config,
                    actor,
                    p.log_std,
                    critic,
                    p.actor_optimizer,
                    critic_adam,
                    p.total_steps,
                )?))
            }
            ("dqn", _, Some(d)) => {
                let (qnet, adam) = d.qnet.into_net()?;
                let (target, _) = d.target.into_net()?;
                Ok(Agent::Dqn(DqnAgent::from_parts(
                    d.config,
                    d.total_prbs,
                    qnet,
                    target,
                    adam,
                    d.total_steps,
                )?))
            }
            (kind, _, _) => Err(Error::Checkpoint(format!(
                "checkpoint agent kind '{kind}' missing its payload"
            ))),
        }
    }

    pub fn decide(
        &mut self,
        state: &StateVector,
        total_prbs: u32,
        rng: &mut crate::domain::RngStream,
        deterministic: bool,
    ) -> Result<AgentDecision, Error> {
        match self {
            Agent::Ppo(agent) => agent.decide(state, total_prbs, rng, deterministic),
            Agent::Dqn(agent) => agent.decide(state, total_prbs, rng, deterministic),
        }
    }

    /// Store the outcome of one epoch and run whatever learning is due.
    pub fn record(
        &mut self,
        state: StateVector,
        info: ActionInfo,
        reward: f64,
        done: bool,
        next_state: &StateVector,
        rng: &mut crate::domain::RngStream,
    ) -> Result<Option<UpdateStats>, Error> {
        match (self, info) {
            (Agent::Ppo(agent), ActionInfo::Ppo { action, logprob, value }) => {
                agent.store(Transition { state, action, logprob, value, reward, done });
                if agent.rollout_full() {
                    let report = agent.update(next_state, rng)?;
                    return Ok(Some(UpdateStats {
                        step: agent.total_steps(),
                        mean_reward: report.mean_reward,
                        actor_loss: report.actor_loss_post,
                        critic_loss: report.critic_loss_post,
                        epsilon: 0.0,
                    }));
                }
                Ok(None)
            }
            (Agent::Dqn(agent), ActionInfo::Dqn { action_idx }) => {
                agent.record(state, action_idx, reward, done, next_state, rng)
            }
            _ => Err(Error::InvalidArgument("agent/action kind mismatch".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_encoding_examples() {
        assert_eq!(encode_demand(0.0), 0.0);
        assert_eq!(encode_demand(3e5), 0.06);
        assert_eq!(encode_link_loss(110.0), 0.5);
        assert_eq!(encode_demand(1e9), 2.0);
        assert_eq!(encode_link_loss(10.0), 0.0);
    }

    #[test]
    fn state_layout_is_slice_ordered() {
        let s = build_state(&[
            UeStateInput { slice: SliceKind::Urllc, demand_bits: 0.0, link_loss_db: 110.0 },
            UeStateInput { slice: SliceKind::Embb, demand_bits: 3e5, link_loss_db: 95.0 },
            UeStateInput { slice: SliceKind::Mmtc, demand_bits: 5e6, link_loss_db: 140.0 },
        ]);
        let v = &s.0;
        assert_eq!(&v[0..3], &[1.0, 0.0, 0.0]);
        assert_eq!(v[3], 0.0);
        assert_eq!(v[4], 0.5);
        assert_eq!(&v[5..8], &[0.0, 1.0, 0.0]);
        assert_eq!(v[8], 0.06);
        assert_eq!(&v[10..13], &[0.0, 0.0, 1.0]);
        assert_eq!(v[13], 1.0);
        assert_eq!(v[14], 1.0);
        assert!(v.iter().all(|x| (0.0..=2.0).contains(x)));
    }
}
