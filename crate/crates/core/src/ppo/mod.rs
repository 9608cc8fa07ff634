//! Actor-critic cell ranker trained with clipped PPO.
//!
//! The state fed to both networks is `[one-hot mode, predicted position,
//! predicted per-cell RSRP]`; the actor emits one logit per cell, masked to
//! the admissible set, and the critic a scalar value.

pub mod adam;
pub mod gae;
pub mod mlp;
pub mod policy;
pub mod train;
pub mod update;

pub use gae::compute_gae;
pub use mlp::Mlp;
pub use policy::{policy_forward, rank_cells, ActorCritic, PolicyCheckpoint, PolicyOutput};
pub use train::{sample_action, train_policy, BanditEnv, EpisodeStats, Observation, PolicyEnv, StepOutcome, TrainResult};
pub use update::{ppo_update, LossStats, PpoBatch, PpoOptimizer, Transition};

use crate::geom::Point;
use crate::mobility::MobilityMode;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub clip_eps: f64,
    pub discount: f64,
    pub gae_lambda: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub hidden: Vec<usize>,
    /// Global gradient-norm cap per network; 0 disables clipping.
    pub max_grad_norm: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma_pp: f64,
    pub ue_weight: f64,
    /// Throughput normaliser in the reward, Mbps.
    pub r_norm_mbps: f64,
    /// Divide training rewards by the running std of discounted returns so
    /// the critic's targets stay O(1). Reported rewards are unscaled.
    pub scale_rewards: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip_eps: 0.2,
            discount: 0.99,
            gae_lambda: 0.95,
            entropy_coef: 0.01,
            value_coef: 0.5,
            learning_rate: 3e-4,
            epochs: 4,
            minibatch: 64,
            hidden: vec![64, 64],
            max_grad_norm: 0.5,
            alpha: 1.0,
            beta: 0.5,
            gamma_pp: 1.0,
            ue_weight: 1.0,
            r_norm_mbps: 100.0,
            scale_rewards: true,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(Error::InvalidInput(format!("clip_eps {} not in (0, 1)", self.clip_eps)));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(Error::InvalidInput(format!("discount {} not in (0, 1]", self.discount)));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(Error::InvalidInput(format!("gae_lambda {} not in [0, 1]", self.gae_lambda)));
        }
        if self.epochs == 0 || self.minibatch == 0 {
            return Err(Error::InvalidInput("epochs and minibatch must be positive".into()));
        }
        for (name, w) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma_pp", self.gamma_pp),
            ("ue_weight", self.ue_weight),
        ] {
            if !(w >= 0.0) {
                return Err(Error::InvalidInput(format!("utility weight {name} must be >= 0")));
            }
        }
        Ok(())
    }
}

/// Affine maps applied to predicted position and RSRP before they enter the
/// policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateNormalizer {
    pub pos_scale_m: f64,
    pub rsrp_mean_dbm: f64,
    pub rsrp_std_db: f64,
}

impl Default for StateNormalizer {
    fn default() -> Self {
        Self {
            pos_scale_m: 1500.0,
            rsrp_mean_dbm: -95.0,
            rsrp_std_db: 15.0,
        }
    }
}

/// `[e(mode) (7), p̂ (2), r̂ (|C|)]`, normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyState(pub Vec<f64>);

impl PolicyState {
    pub const MODE_DIM: usize = MobilityMode::COUNT;
    pub const POS_DIM: usize = 2;

    pub fn dim(n_cells: usize) -> usize {
        Self::MODE_DIM + Self::POS_DIM + n_cells
    }

    pub fn build(mode: MobilityMode, predicted_pos: Point, predicted_rsrp: &[f64], norm: &StateNormalizer) -> Self {
        let mut v = Vec::with_capacity(Self::dim(predicted_rsrp.len()));
        v.extend_from_slice(&mode.one_hot());
        v.push(predicted_pos.x / norm.pos_scale_m);
        v.push(predicted_pos.y / norm.pos_scale_m);
        v.extend(predicted_rsrp.iter().map(|r| (r - norm.rsrp_mean_dbm) / norm.rsrp_std_db));
        PolicyState(v)
    }

    pub fn n_cells(&self) -> usize {
        self.0.len().saturating_sub(Self::MODE_DIM + Self::POS_DIM)
    }

    /// The normalized RSRP block; monotone in the raw prediction.
    pub fn rsrp_block(&self) -> &[f64] {
        &self.0[Self::MODE_DIM + Self::POS_DIM..]
    }

    pub fn validate(&self, n_cells: usize) -> Result<()> {
        if self.0.len() != Self::dim(n_cells) {
            return Err(Error::LengthMismatch {
                expected: Self::dim(n_cells),
                got: self.0.len(),
            });
        }
        let one_hot: f64 = self.0[..Self::MODE_DIM].iter().sum();
        if (one_hot - 1.0).abs() > 1e-12 || self.0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("malformed policy state".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_layout() {
        let s = PolicyState::build(
            MobilityMode::Bus,
            Point::new(150.0, -300.0),
            &vec![-95.0; 27],
            &StateNormalizer::default(),
        );
        assert_eq!(s.0.len(), 36);
        assert_eq!(s.n_cells(), 27);
        assert_eq!(s.0[MobilityMode::Bus.index()], 1.0);
        assert_eq!(s.0[7], 0.1);
        assert_eq!(s.0[8], -0.2);
        assert!(s.rsrp_block().iter().all(|v| *v == 0.0));
        s.validate(27).unwrap();
        assert!(s.validate(26).is_err());
    }

    #[test]
    fn config_validation() {
        PpoConfig::default().validate().unwrap();
        let bad = PpoConfig {
            clip_eps: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = PpoConfig {
            discount: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
