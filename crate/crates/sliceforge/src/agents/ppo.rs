//! Actor-critic with a clipped surrogate objective. The actor emits a
//! 3-dim Gaussian whose sample is squashed through softmax onto the PRB
//! simplex; advantages come from generalized advantage estimation.

use crate::domain::RngStream;
use crate::error::Error;
use crate::neural::{clip_grad_norm, init_params, AdamState, GradientTape, Mlp};
use crate::scheduler::fractions_to_slice_prbs;

use super::{ActionInfo, AgentDecision, PpoConfig, StateVector, Transition, STATE_DIM};

const LOG_2PI: f64 = 1.8378770664093453;

pub struct PpoAgent {
    pub cfg: PpoConfig,
    pub actor: Mlp,
    pub log_std: [f64; 3],
    pub critic: Mlp,
    pub actor_adam: AdamState,
    pub critic_adam: AdamState,
    buffer: Vec<Transition>,
    total_steps: u64,
}

/// Losses around one update, plus the mean probability ratio observed
/// after the last gradient step.
#[derive(Debug, Clone, Copy)]
pub struct PpoUpdateReport {
    pub actor_loss_pre: f64,
    pub actor_loss_post: f64,
    pub critic_loss_pre: f64,
    pub critic_loss_post: f64,
    pub mean_ratio: f64,
    pub mean_reward: f64,
}

/// The clipped surrogate term min(ratio*adv, clamp(ratio)*adv).
pub fn clipped_surrogate_term(ratio: f64, advantage: f64, eps: f64) -> f64 {
    let clamped = ratio.clamp(1.0 - eps, 1.0 + eps);
    (ratio * advantage).min(clamped * advantage)
}

/// Generalized advantage estimation by backward recursion. `values` holds
/// one entry per reward plus the bootstrap value of the state after the
/// last transition; `dones` mask both the TD residual and the recursion.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), Error> {
    let n = rewards.len();
    if values.len() != n + 1 || dones.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "gae needs |values| = |rewards|+1 and |dones| = |rewards|; got {} rewards, {} values, {} dones",
            n,
            values.len(),
            dones.len()
        )));
    }
    let mut advantages = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let not_done = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * values[t + 1] * not_done - values[t];
        acc = delta + gamma * lambda * not_done * acc;
        advantages[t] = acc;
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((advantages, returns))
}

/// Normalize to zero mean, unit variance (population std).
pub fn normalize_advantages(adv: &mut [f64]) {
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for a in adv.iter_mut() {
        *a = (*a - mean) / (std + 1e-8);
    }
}

fn softmax3(z: &[f64; 3]) -> [f64; 3] {
    let m = z[0].max(z[1]).max(z[2]);
    let e = [(z[0] - m).exp(), (z[1] - m).exp(), (z[2] - m).exp()];
    let s = e[0] + e[1] + e[2];
    [e[0] / s, e[1] / s, e[2] / s]
}

impl PpoAgent {
    pub fn new(cfg: PpoConfig, seed: u64) -> PpoAgent {
        let h = cfg.hidden_dim;
        let mut actor_rng = crate::domain::rng_substream(seed, "agent", 0);
        let mut critic_rng = crate::domain::rng_substream(seed, "agent", 1);
        let actor = init_params(&[STATE_DIM, h, h, 3], &mut actor_rng);
        let critic = init_params(&[STATE_DIM, h, h, 1], &mut critic_rng);
        let actor_adam = AdamState::new(cfg.actor_lr, actor.param_count() + 3);
        let critic_adam = AdamState::new(cfg.critic_lr, critic.param_count());
        PpoAgent {
            cfg,
            actor,
            log_std: [cfg.init_log_std; 3],
            critic,
            actor_adam,
            critic_adam,
            buffer: Vec::new(),
            total_steps: 0,
        }
    }

    /// Rebuild from checkpoint parts, validating shape congruence.
    pub fn from_parts(
        cfg: PpoConfig,
        actor: Mlp,
        log_std: [f64; 3],
        critic: Mlp,
        actor_adam: Option<AdamState>,
        critic_adam: Option<AdamState>,
        total_steps: u64,
    ) -> Result<PpoAgent, Error> {
        if actor.output_dim() != 3 || critic.output_dim() != 1 {
            return Err(Error::Checkpoint("actor/critic output dims must be 3/1".into()));
        }
        let actor_adam = match actor_adam {
            Some(a) if a.m.len() == actor.param_count() + 3 => a,
            Some(_) => return Err(Error::Checkpoint("actor optimizer shape mismatch".into())),
            None => AdamState::new(cfg.actor_lr, actor.param_count() + 3),
        };
        let critic_adam = match critic_adam {
            Some(a) if a.m.len() == critic.param_count() => a,
            Some(_) => return Err(Error::Checkpoint("critic optimizer shape mismatch".into())),
            None => AdamState::new(cfg.critic_lr, critic.param_count()),
        };
        Ok(PpoAgent {
            cfg,
            actor,
            log_std,
            critic,
            actor_adam,
            critic_adam,
            buffer: Vec::new(),
            total_steps,
        })
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    pub fn rollout_full(&self) -> bool {
        self.buffer.len() >= self.cfg.rollout_len
    }

    pub fn store(&mut self, t: Transition) {
        self.buffer.push(t);
        self.total_steps += 1;
    }

    fn mean(&self, state: &StateVector) -> Result<[f64; 3], Error> {
        let cache = self.actor.forward(&state.0)?;
        let out = cache.output();
        Ok([out[0], out[1], out[2]])
    }

    pub fn value(&self, state: &StateVector) -> Result<f64, Error> {
        Ok(self.critic.forward(&state.0)?.output()[0])
    }

    fn logprob(&self, action: &[f64; 3], mean: &[f64; 3]) -> f64 {
        let mut lp = 0.0;
        for i in 0..3 {
            let sigma = self.log_std[i].exp();
            let u = (action[i] - mean[i]) / sigma;
            lp += -0.5 * u * u - self.log_std[i] - 0.5 * LOG_2PI;
        }
        lp
    }

    /// Sample an action (the Gaussian pre-softmax vector), its log density
    /// and the simplex fractions. Deterministic mode uses the mean.
    pub fn select(
        &self,
        state: &StateVector,
        rng: &mut RngStream,
        deterministic: bool,
    ) -> Result<([f64; 3], f64, f64, [f64; 3]), Error> {
        let mean = self.mean(state)?;
        let action = if deterministic {
            mean
        } else {
            let mut z = [0.0; 3];
            for i in 0..3 {
                z[i] = mean[i] + self.log_std[i].exp() * rng.normal();
            }
            z
        };
        let logprob = self.logprob(&action, &mean);
        let value = self.value(state)?;
        Ok((action, logprob, value, softmax3(&action)))
    }

    pub fn decide(
        &mut self,
        state: &StateVector,
        total_prbs: u32,
        rng: &mut RngStream,
        deterministic: bool,
    ) -> Result<AgentDecision, Error> {
        let (action, logprob, value, fractions) = self.select(state, rng, deterministic)?;
        let slice_prbs = fractions_to_slice_prbs(fractions, total_prbs)?;
        Ok(AgentDecision {
            slice_prbs,
            info: ActionInfo::Ppo { action, logprob, value },
        })
    }

    /// Surrogate + entropy loss, value loss and mean ratio over the whole
    /// rollout under the current parameters.
    fn batch_losses(&self, advantages: &[f64], returns: &[f64]) -> Result<(f64, f64, f64), Error> {
        let n = self.buffer.len() as f64;
        let mut surrogate = 0.0;
        let mut ratio_sum = 0.0;
        let mut value_loss = 0.0;
        for (i, t) in self.buffer.iter().enumerate() {
            let mean = self.mean(&t.state)?;
            let lp = self.logprob(&t.action, &mean);
            let ratio = (lp - t.logprob).exp();
            ratio_sum += ratio;
            surrogate += clipped_surrogate_term(ratio, advantages[i], self.cfg.clip_eps);
            let v = self.value(&t.state)?;
            value_loss += (v - returns[i]).powi(2);
        }
        let entropy: f64 = self
            .log_std
            .iter()
            .map(|ls| ls + 0.5 * (1.0 + LOG_2PI))
            .sum();
        let actor_loss = -(surrogate / n) - self.cfg.entropy_coef * entropy;
        Ok((actor_loss, value_loss / n, ratio_sum / n))
    }

    /// One PPO update over the stored rollout. The bootstrap value comes
    /// from `next_state`; both networks take `update_epochs` passes of
    /// shuffled minibatches with gradient-norm clipping.
    pub fn update(
        &mut self,
        next_state: &StateVector,
        rng: &mut RngStream,
    ) -> Result<PpoUpdateReport, Error> {
        let n = self.buffer.len();
        if n == 0 {
            return Err(Error::InvalidArgument("empty rollout".into()));
        }
        let rewards: Vec<f64> = self.buffer.iter().map(|t| t.reward).collect();
        let dones: Vec<bool> = self.buffer.iter().map(|t| t.done).collect();
        let mut values: Vec<f64> = self
            .buffer
            .iter()
            .map(|t| t.value)
            .collect();
        values.push(self.value(next_state)?);
        let (mut advantages, returns) =
            gae(&rewards, &values, &dones, self.cfg.gamma, self.cfg.lambda)?;
        normalize_advantages(&mut advantages);

        let (actor_pre, critic_pre, _) = self.batch_losses(&advantages, &returns)?;
        let mut indices: Vec<usize> = (0..n).collect();
        for _epoch in 0..self.cfg.update_epochs {
            rng.shuffle(&mut indices);
            for batch_id in 0..indices.len().div_ceil(self.cfg.minibatch) {
                let lo = batch_id * self.cfg.minibatch;
                let hi = (lo + self.cfg.minibatch).min(indices.len());
                self.minibatch_step(&indices[lo..hi], &advantages, &returns)
                    .map_err(|e| {
                        log::error!("ppo update aborted at batch {batch_id}: {e}");
                        e
                    })?;
            }
        }
        let (actor_post, critic_post, mean_ratio) = self.batch_losses(&advantages, &returns)?;
        let mean_reward = rewards.iter().sum::<f64>() / n as f64;
        self.buffer.clear();
        Ok(PpoUpdateReport {
            actor_loss_pre: actor_pre,
            actor_loss_post: actor_post,
            critic_loss_pre: critic_pre,
            critic_loss_post: critic_post,
            mean_ratio,
            mean_reward,
        })
    }

    fn minibatch_step(
        &mut self,
        batch: &[usize],
        advantages: &[f64],
        returns: &[f64],
    ) -> Result<(), Error> {
        let m = batch.len() as f64;
        let mut actor_tape = GradientTape::zeros_like(&self.actor);
        let mut log_std_grad = [0.0; 3];
        let mut critic_tape = GradientTape::zeros_like(&self.critic);
        let mut loss_probe = 0.0;

        for &i in batch {
            let t = &self.buffer[i];
            let cache = self.actor.forward(&t.state.0)?;
            let out = cache.output();
            let mean = [out[0], out[1], out[2]];
            let lp = self.logprob(&t.action, &mean);
            let ratio = (lp - t.logprob).exp();
            let adv = advantages[i];
            let clamped = ratio.clamp(1.0 - self.cfg.clip_eps, 1.0 + self.cfg.clip_eps);
            loss_probe += -(ratio * adv).min(clamped * adv);
            // Gradient flows only while the unclipped term is the minimum.
            let active = ratio * adv <= clamped * adv;
            let coef = if active { ratio * adv } else { 0.0 };
            let mut output_grad = [0.0; 3];
            for k in 0..3 {
                let sigma = self.log_std[k].exp();
                let u = (t.action[k] - mean[k]) / sigma;
                // d(-J)/d mean_k and d(-J)/d log_std_k of the surrogate.
                output_grad[k] = -coef * u / sigma / m;
                log_std_grad[k] += -coef * (u * u - 1.0) / m;
            }
            let tape = self.actor.backward(&cache, &output_grad)?;
            actor_tape.accumulate(&tape);

            let vcache = self.critic.forward(&t.state.0)?;
            let v = vcache.output()[0];
            let vtape = self.critic.backward(&vcache, &[2.0 * (v - returns[i]) / m])?;
            critic_tape.accumulate(&vtape);
        }
        if !loss_probe.is_finite() {
            return Err(Error::NonFinite("ppo surrogate loss".into()));
        }
        // Entropy bonus pulls log_std up, scaled by its coefficient.
        for g in &mut log_std_grad {
            *g -= self.cfg.entropy_coef;
        }

        let mut actor_flat = actor_tape.flatten();
        actor_flat.extend_from_slice(&log_std_grad);
        clip_grad_norm(&mut actor_flat, self.cfg.grad_clip);
        let mut actor_params = self.actor.flatten();
        actor_params.extend_from_slice(&self.log_std);
        self.actor_adam.step(&mut actor_params, &actor_flat)?;
        let split = actor_params.len() - 3;
        self.actor.assign_from_flat(&actor_params[..split])?;
        self.log_std.copy_from_slice(&actor_params[split..]);

        let mut critic_flat = critic_tape.flatten();
        clip_grad_norm(&mut critic_flat, self.cfg.grad_clip);
        let mut critic_params = self.critic.flatten();
        self.critic_adam.step(&mut critic_params, &critic_flat)?;
        self.critic.assign_from_flat(&critic_params)?;
        Ok(())
    }
}
