//! On-policy rollout collection and the training loop.

use super::policy::{policy_forward, ActorCritic};
use super::update::{ppo_update, LossStats, PpoBatch, PpoOptimizer, Transition};
use super::{PolicyState, PpoConfig, StateNormalizer};
use crate::geom::Point;
use crate::mobility::MobilityMode;
use crate::{rng, Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub state: PolicyState,
    pub mask: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub done: bool,
    /// Observation after the step; used to bootstrap when not done.
    pub next: Observation,
}

/// A vectorised environment: one observation and one action per agent.
/// Agent order must be stable within an episode.
pub trait PolicyEnv {
    fn n_cells(&self) -> usize;
    fn reset(&mut self, episode: usize) -> Result<Vec<Observation>>;
    fn step(&mut self, actions: &[usize]) -> Result<Vec<StepOutcome>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub episode: usize,
    /// Mean over agents of the undiscounted episode return.
    pub mean_reward: f64,
    pub steps: usize,
    pub loss: LossStats,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub policy: ActorCritic,
    pub curve: Vec<EpisodeStats>,
}

/// Inverse-CDF draw; never returns a zero-probability index.
pub fn sample_action<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Trains a fresh policy: one rollout of at most `horizon` steps per episode,
/// followed by one PPO update on it.
pub fn train_policy<E: PolicyEnv + ?Sized>(
    env: &mut E,
    cfg: &PpoConfig,
    n_episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<TrainResult> {
    cfg.validate()?;
    let policy = ActorCritic::new(env.n_cells(), &cfg.hidden, seed);
    train_from(env, policy, cfg, n_episodes, horizon, seed)
}

pub fn train_from<E: PolicyEnv + ?Sized>(
    env: &mut E,
    mut policy: ActorCritic,
    cfg: &PpoConfig,
    n_episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<TrainResult> {
    if horizon == 0 {
        return Err(Error::InvalidInput("horizon must be positive".into()));
    }
    let mut opt = PpoOptimizer::new(&policy, cfg.learning_rate);
    let mut scaler = ReturnScaler::default();
    let mut curve = Vec::with_capacity(n_episodes);
    for episode in 0..n_episodes {
        let mut act_rng = rng::stream(seed, &[rng::tag::ACTION, episode as u64]);
        let mut obs = env.reset(episode)?;
        let n_agents = obs.len();
        let mut trajs: Vec<Vec<Transition>> = vec![Vec::new(); n_agents];
        let mut next_obs: Vec<Option<Observation>> = vec![None; n_agents];
        let mut steps = 0;
        for _ in 0..horizon {
            let mut actions = Vec::with_capacity(n_agents);
            let mut pending = Vec::with_capacity(n_agents);
            for o in &obs {
                let out = policy_forward(&policy, &o.state, &o.mask)?;
                let a = sample_action(&out.probs, &mut act_rng);
                actions.push(a);
                pending.push((a, out.probs[a].ln(), out.value));
            }
            let outcomes = env.step(&actions)?;
            if outcomes.len() != n_agents {
                return Err(Error::LengthMismatch {
                    expected: n_agents,
                    got: outcomes.len(),
                });
            }
            steps += 1;
            let mut all_done = true;
            let mut new_obs = Vec::with_capacity(n_agents);
            for (k, (o, out)) in obs.into_iter().zip(outcomes).enumerate() {
                let (action, log_prob, value) = pending[k];
                trajs[k].push(Transition {
                    state: o.state,
                    mask: o.mask,
                    action,
                    log_prob,
                    reward: out.reward,
                    value,
                    done: out.done,
                });
                all_done &= out.done;
                next_obs[k] = Some(out.next.clone());
                new_obs.push(out.next);
            }
            obs = new_obs;
            if all_done {
                break;
            }
        }
        let mean_reward = trajs
            .iter()
            .map(|t| t.iter().map(|x| x.reward).sum::<f64>())
            .sum::<f64>()
            / n_agents.max(1) as f64;
        if cfg.scale_rewards {
            for t in &trajs {
                scaler.observe(t, cfg.discount);
            }
            let s = scaler.std();
            for x in trajs.iter_mut().flatten() {
                x.reward /= s;
            }
        }
        let with_bootstrap: Vec<(Vec<Transition>, f64)> = trajs
            .into_iter()
            .zip(next_obs)
            .map(|(t, next)| {
                let last_done = t.last().map(|x| x.done).unwrap_or(true);
                let v = match (last_done, next) {
                    (false, Some(o)) => policy.value(&o.state),
                    _ => 0.0,
                };
                (t, v)
            })
            .collect();
        let batch = PpoBatch::from_trajectories(&with_bootstrap, cfg.discount, cfg.gae_lambda)?;
        let mut upd_rng = rng::stream(seed, &[rng::tag::SPLIT, episode as u64]);
        let loss = ppo_update(&mut policy, &mut opt, &batch, cfg, &mut upd_rng)?;
        log::debug!("episode {episode}: mean reward {mean_reward:.4}, loss {:.4}", loss.total);
        curve.push(EpisodeStats {
            episode,
            mean_reward,
            steps,
            loss,
        });
    }
    Ok(TrainResult { policy, curve })
}

/// Running std of per-agent discounted returns (Welford).
#[derive(Debug, Default)]
struct ReturnScaler {
    n: f64,
    mean: f64,
    m2: f64,
}

impl ReturnScaler {
    fn observe(&mut self, traj: &[Transition], discount: f64) {
        let mut ret = 0.0;
        for x in traj {
            ret = discount * ret + x.reward;
            self.n += 1.0;
            let d = ret - self.mean;
            self.mean += d / self.n;
            self.m2 += d * (ret - self.mean);
        }
    }

    fn std(&self) -> f64 {
        if self.n < 2.0 {
            return 1.0;
        }
        (self.m2 / (self.n - 1.0)).sqrt().max(1e-4)
    }
}

/// One row per episode: `episode,mean_reward,surrogate,value_loss,entropy,approx_kl`.
/// The surrogate is reported as a magnitude.
pub fn write_reward_curve<W: Write>(w: W, curve: &[EpisodeStats]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["episode", "mean_reward", "surrogate", "value_loss", "entropy", "approx_kl"])?;
    for s in curve {
        out.write_record(&[
            s.episode.to_string(),
            format!("{:.6}", s.mean_reward),
            format!("{:.6}", s.loss.surrogate.abs()),
            format!("{:.6}", s.loss.value_loss),
            format!("{:.6}", s.loss.entropy),
            format!("{:.6}", s.loss.approx_kl),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Stateless multi-armed bandit over cells: every pull of arm `c` pays
/// `rewards[c]` and ends the episode.
#[derive(Debug, Clone)]
pub struct BanditEnv {
    pub rewards: Vec<f64>,
    pub n_agents: usize,
    state: PolicyState,
}

impl BanditEnv {
    pub fn new(rewards: Vec<f64>, n_agents: usize) -> Self {
        let flat = vec![-95.0; rewards.len()];
        let state = PolicyState::build(MobilityMode::Ped, Point::ORIGIN, &flat, &StateNormalizer::default());
        Self {
            rewards,
            n_agents,
            state,
        }
    }

    fn obs(&self) -> Observation {
        Observation {
            state: self.state.clone(),
            mask: vec![true; self.rewards.len()],
        }
    }
}

impl PolicyEnv for BanditEnv {
    fn n_cells(&self) -> usize {
        self.rewards.len()
    }

    fn reset(&mut self, _episode: usize) -> Result<Vec<Observation>> {
        Ok(vec![self.obs(); self.n_agents])
    }

    fn step(&mut self, actions: &[usize]) -> Result<Vec<StepOutcome>> {
        actions
            .iter()
            .map(|&a| {
                let reward = *self
                    .rewards
                    .get(a)
                    .ok_or_else(|| Error::InvalidInput(format!("arm {a} out of range")))?;
                Ok(StepOutcome {
                    reward,
                    done: true,
                    next: self.obs(),
                })
            })
            .collect()
    }
}
