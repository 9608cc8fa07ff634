//! Clipped-surrogate PPO loss with hand-derived gradients.

use super::adam::Adam;
use super::gae::{compute_gae, normalize_advantages};
use super::policy::{masked_softmax, ActorCritic};
use super::{PolicyState, PpoConfig};
use crate::{Error, Result};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: PolicyState,
    /// Admissible cells at decision time.
    pub mask: Vec<bool>,
    pub action: usize,
    pub log_prob: f64,
    pub reward: f64,
    pub value: f64,
    pub done: bool,
}

/// A rollout flattened for optimisation, advantages already estimated.
#[derive(Debug, Clone, Default)]
pub struct PpoBatch {
    pub states: Vec<PolicyState>,
    pub masks: Vec<Vec<bool>>,
    pub actions: Vec<usize>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl PpoBatch {
    /// Runs GAE on each trajectory (paired with its bootstrap value) and
    /// normalizes advantages across the whole batch.
    pub fn from_trajectories(trajectories: &[(Vec<Transition>, f64)], discount: f64, lambda: f64) -> Result<Self> {
        let mut batch = PpoBatch::default();
        for (traj, last_value) in trajectories {
            let rewards: Vec<f64> = traj.iter().map(|t| t.reward).collect();
            let values: Vec<f64> = traj.iter().map(|t| t.value).collect();
            let dones: Vec<bool> = traj.iter().map(|t| t.done).collect();
            let (adv, ret) = compute_gae(&rewards, &values, &dones, *last_value, discount, lambda)?;
            for (t, (a, r)) in traj.iter().zip(adv.into_iter().zip(ret)) {
                if !t.mask.get(t.action).copied().unwrap_or(false) {
                    return Err(Error::InvalidInput(format!("action {} not admissible", t.action)));
                }
                batch.states.push(t.state.clone());
                batch.masks.push(t.mask.clone());
                batch.actions.push(t.action);
                batch.old_log_probs.push(t.log_prob);
                batch.advantages.push(a);
                batch.returns.push(r);
            }
        }
        if batch.is_empty() {
            return Err(Error::Empty("ppo batch"));
        }
        normalize_advantages(&mut batch.advantages);
        Ok(batch)
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    /// Mean clipped surrogate (maximised).
    pub surrogate: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// `−surrogate − entropy_coef·entropy + value_coef·value_loss` (minimised).
    pub total: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

impl LossStats {
    fn accumulate(&mut self, other: &LossStats, w: f64) {
        self.surrogate += w * other.surrogate;
        self.value_loss += w * other.value_loss;
        self.entropy += w * other.entropy;
        self.total += w * other.total;
        self.approx_kl += w * other.approx_kl;
        self.clip_fraction += w * other.clip_fraction;
    }
}

/// Per-sample clipped objective `min(r·A, clip(r, 1−ε, 1+ε)·A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, eps: f64) -> f64 {
    let surr1 = ratio * advantage;
    let surr2 = ratio.clamp(1.0 - eps, 1.0 + eps) * advantage;
    surr1.min(surr2)
}

/// Which policy objective to differentiate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    Clipped,
    /// Importance-weighted policy gradient `r·A`, no clipping.
    Vanilla,
}

pub struct LossGrad {
    pub stats: LossStats,
    pub actor: Vec<f64>,
    pub critic: Vec<f64>,
}

/// Loss and its exact gradient over the samples `idx` of `batch`.
pub fn loss_and_grad(net: &ActorCritic, batch: &PpoBatch, idx: &[usize], cfg: &PpoConfig, objective: Objective) -> Result<LossGrad> {
    let n = idx.len() as f64;
    let mut stats = LossStats::default();
    let mut g_actor = vec![0.0; net.actor.n_params()];
    let mut g_critic = vec![0.0; net.critic.n_params()];
    for &i in idx {
        let s = &batch.states[i].0;
        let mask = &batch.masks[i];
        let a = batch.actions[i];
        let adv = batch.advantages[i];

        let cache = net.actor.forward_cached(s);
        let p = masked_softmax(cache.output(), mask)?;
        let log_p = p[a].ln();
        let ratio = (log_p - batch.old_log_probs[i]).exp();
        let surr1 = ratio * adv;
        let (surr, active) = match objective {
            Objective::Vanilla => (surr1, true),
            Objective::Clipped => {
                let surr2 = ratio.clamp(1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv;
                if surr1 <= surr2 {
                    (surr1, true)
                } else {
                    stats.clip_fraction += 1.0 / n;
                    (surr2, false)
                }
            }
        };
        let entropy: f64 = -p.iter().filter(|q| **q > 0.0).map(|q| q * q.ln()).sum::<f64>();

        // dL/dz for L = −surr/n − c_e·H/n.
        let mut d_logits = vec![0.0; p.len()];
        for j in 0..p.len() {
            if !mask[j] {
                continue;
            }
            let dlogp = if j == a { 1.0 - p[j] } else { -p[j] };
            let mut d = 0.0;
            if active {
                d -= ratio * adv * dlogp;
            }
            if p[j] > 0.0 {
                // dH/dz_j = −p_j (ln p_j + H)
                d += cfg.entropy_coef * p[j] * (p[j].ln() + entropy);
            }
            d_logits[j] = d / n;
        }
        net.actor.backward(&cache, &d_logits, &mut g_actor);

        let c_cache = net.critic.forward_cached(s);
        let v = c_cache.output()[0];
        let err = v - batch.returns[i];
        net.critic.backward(&c_cache, &[cfg.value_coef * 2.0 * err / n], &mut g_critic);

        stats.surrogate += surr / n;
        stats.entropy += entropy / n;
        stats.value_loss += err * err / n;
        stats.approx_kl += (batch.old_log_probs[i] - log_p) / n;
    }
    stats.total = -stats.surrogate - cfg.entropy_coef * stats.entropy + cfg.value_coef * stats.value_loss;
    Ok(LossGrad {
        stats,
        actor: g_actor,
        critic: g_critic,
    })
}

/// Optimiser state for both networks, persisted across updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoOptimizer {
    pub actor: Adam,
    pub critic: Adam,
}

impl PpoOptimizer {
    pub fn new(net: &ActorCritic, lr: f64) -> Self {
        Self {
            actor: Adam::new(net.actor.n_params(), lr),
            critic: Adam::new(net.critic.n_params(), lr),
        }
    }
}

fn clip_norm(g: &mut [f64], max_norm: f64) {
    if max_norm <= 0.0 {
        return;
    }
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        g.iter_mut().for_each(|v| *v *= s);
    }
}

/// `epochs` passes over shuffled minibatches. On a non-finite gradient or
/// weight the network and optimiser are restored to their entry state.
pub fn ppo_update<R: Rng + ?Sized>(
    net: &mut ActorCritic,
    opt: &mut PpoOptimizer,
    batch: &PpoBatch,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<LossStats> {
    if batch.is_empty() {
        return Err(Error::Empty("ppo batch"));
    }
    let saved = (net.clone(), opt.clone());
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let mut mean = LossStats::default();
    let mut n_steps = 0usize;
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.minibatch) {
            let mut lg = loss_and_grad(net, batch, chunk, cfg, Objective::Clipped)?;
            let finite = lg.stats.total.is_finite()
                && lg.actor.iter().all(|g| g.is_finite())
                && lg.critic.iter().all(|g| g.is_finite());
            if !finite {
                (*net, *opt) = saved;
                return Err(Error::NonFiniteGradient { epoch });
            }
            clip_norm(&mut lg.actor, cfg.max_grad_norm);
            clip_norm(&mut lg.critic, cfg.max_grad_norm);
            opt.actor.step(&mut net.actor.params, &lg.actor);
            opt.critic.step(&mut net.critic.params, &lg.critic);
            if !net.is_finite() {
                (*net, *opt) = saved;
                return Err(Error::NonFiniteGradient { epoch });
            }
            mean.accumulate(&lg.stats, 1.0);
            n_steps += 1;
        }
    }
    let mut out = LossStats::default();
    out.accumulate(&mean, 1.0 / n_steps as f64);
    Ok(out)
}
