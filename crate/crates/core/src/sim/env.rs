//! The simulator as a vectorised PPO environment: every UE is an agent, one
//! step is one rApp period.

use super::engine::{RappSource, SimModels, Simulation};
use super::kpi::UtilityWeights;
use super::SimConfig;
use crate::controllers::ControllerKind;
use crate::ppo::{Observation, PolicyEnv, StepOutcome};
use crate::predictors::PredictorBundle;
use crate::ric::A1Ranking;
use crate::{rng, Error, Result};

pub struct SimPolicyEnv<'a> {
    cfg: SimConfig,
    predictors: &'a PredictorBundle,
    weights: UtilityWeights,
    base_seed: u64,
    pool: usize,
    sim: Option<Simulation<'a>>,
    last: Vec<Observation>,
}

impl<'a> SimPolicyEnv<'a> {
    /// Episodes cycle through `pool` training scenarios; `pool == 0` draws a
    /// fresh scenario every episode.
    pub fn new(
        cfg: &SimConfig,
        predictors: &'a PredictorBundle,
        weights: UtilityWeights,
        base_seed: u64,
        pool: usize,
    ) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg: cfg.clone(),
            predictors,
            weights,
            base_seed,
            pool,
            sim: None,
            last: Vec::new(),
        })
    }

    /// Scenario seed used for `episode`.
    pub fn episode_seed(&self, episode: usize) -> u64 {
        let k = if self.pool == 0 { episode } else { episode % self.pool };
        rng::derive_seed(self.base_seed, &[rng::tag::EPISODE, k as u64])
    }

    fn observe_all(sim: &mut Simulation<'a>) -> Result<Vec<Observation>> {
        sim.observe()?
            .into_iter()
            .map(|o| {
                o.map(|o| Observation {
                    state: o.state,
                    mask: o.mask,
                })
                .ok_or(Error::InsufficientHistory {
                    needed: 1,
                    got: 0,
                })
            })
            .collect()
    }
}

impl PolicyEnv for SimPolicyEnv<'_> {
    fn n_cells(&self) -> usize {
        self.cfg.topology.n_cells
    }

    /// Starts a fresh scenario and runs the A3 fallback up to the first rApp
    /// tick at which every UE has a full history.
    fn reset(&mut self, episode: usize) -> Result<Vec<Observation>> {
        let seed = self.episode_seed(episode);
        let models = SimModels {
            predictors: Some(self.predictors),
            policy: None,
        };
        let mut sim = Simulation::new(&self.cfg, ControllerKind::Ahc, seed, models, RappSource::External, self.weights)?;
        sim.set_record_rows(false);
        let period = sim.rapp_period() as usize;
        let needed = crate::ric::history_needed(self.predictors.classifier.window);
        let start = needed.div_ceil(period) * period;
        if start >= sim.n_ticks() {
            return Err(Error::InsufficientHistory {
                needed: start + 1,
                got: sim.n_ticks(),
            });
        }
        sim.advance(start)?;
        sim.take_utility();
        let obs = Self::observe_all(&mut sim)?;
        self.last = obs.clone();
        self.sim = Some(sim);
        Ok(obs)
    }

    /// Issues a single-candidate ranking per UE, runs one period and returns
    /// each UE's accrued utility.
    fn step(&mut self, actions: &[usize]) -> Result<Vec<StepOutcome>> {
        let n_cells = self.cfg.topology.n_cells;
        let sim = self.sim.as_mut().ok_or_else(|| Error::InvalidInput("environment stepped before reset".into()))?;
        if actions.len() != sim.n_ues() {
            return Err(Error::LengthMismatch {
                expected: sim.n_ues(),
                got: actions.len(),
            });
        }
        let tick = sim.tick();
        let modes = sim.modes().to_vec();
        let period = sim.rapp_period();
        let rankings = actions
            .iter()
            .enumerate()
            .map(|(u, &a)| {
                if a >= n_cells {
                    return Err(Error::InvalidInput(format!("action {a} out of range")));
                }
                Ok(A1Ranking {
                    ue_id: u,
                    candidates: vec![(a, 1.0)],
                    issued_tick: tick,
                    ttl_ticks: period,
                    mode_hint: modes[u],
                    kpi_preferences: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        sim.inject_rankings(rankings)?;
        sim.advance(period as usize)?;
        let rewards = sim.take_utility();
        let done = sim.is_finished();
        let next = if done {
            self.last.clone()
        } else {
            let obs = Self::observe_all(sim)?;
            self.last = obs.clone();
            obs
        };
        Ok(rewards
            .into_iter()
            .zip(next)
            .map(|(reward, next)| StepOutcome { reward, done, next })
            .collect())
    }
}
