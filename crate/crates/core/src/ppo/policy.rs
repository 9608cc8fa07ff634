use super::mlp::Mlp;
use super::{PolicyState, PpoConfig, StateNormalizer};
use crate::{rng, Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

/// Logit assigned to inadmissible cells; far enough below any real logit
/// that `exp` underflows to exactly zero.
pub const MASKED_LOGIT: f64 = -1e30;

pub const POLICY_FORMAT_VERSION: u32 = 1;

/// Separate actor (|C| logits) and critic (scalar value) networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorCritic {
    pub actor: Mlp,
    pub critic: Mlp,
    pub normalizer: StateNormalizer,
}

impl ActorCritic {
    pub fn new(n_cells: usize, hidden: &[usize], seed: u64) -> Self {
        let dim = PolicyState::dim(n_cells);
        let mut r = rng::stream(seed, &[rng::tag::POLICY]);
        let actor_sizes: Vec<usize> = std::iter::once(dim).chain(hidden.iter().copied()).chain([n_cells]).collect();
        let critic_sizes: Vec<usize> = std::iter::once(dim).chain(hidden.iter().copied()).chain([1]).collect();
        Self {
            // Small output gain keeps the initial policy close to uniform.
            actor: Mlp::init(&actor_sizes, 0.01, &mut r),
            critic: Mlp::init(&critic_sizes, 1.0, &mut r),
            normalizer: StateNormalizer::default(),
        }
    }

    /// All-zero weights: uniform policy, zero value.
    pub fn zeros(n_cells: usize, hidden: &[usize]) -> Self {
        let dim = PolicyState::dim(n_cells);
        let a: Vec<usize> = std::iter::once(dim).chain(hidden.iter().copied()).chain([n_cells]).collect();
        let c: Vec<usize> = std::iter::once(dim).chain(hidden.iter().copied()).chain([1]).collect();
        Self {
            actor: Mlp::zeros(&a),
            critic: Mlp::zeros(&c),
            normalizer: StateNormalizer::default(),
        }
    }

    pub fn n_cells(&self) -> usize {
        self.actor.output_dim()
    }

    pub fn is_finite(&self) -> bool {
        self.actor.is_finite() && self.critic.is_finite()
    }

    pub fn value(&self, state: &PolicyState) -> f64 {
        self.critic.forward(&state.0)[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub probs: Vec<f64>,
    pub value: f64,
}

/// Softmax over logits with inadmissible entries forced to [`MASKED_LOGIT`].
pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    if logits.len() != mask.len() {
        return Err(Error::LengthMismatch {
            expected: logits.len(),
            got: mask.len(),
        });
    }
    if !mask.iter().any(|m| *m) {
        return Err(Error::NoAdmissibleCell);
    }
    let masked: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(z, m)| if *m { *z } else { MASKED_LOGIT })
        .collect();
    let max = masked.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = masked.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

pub fn policy_forward(net: &ActorCritic, state: &PolicyState, mask: &[bool]) -> Result<PolicyOutput> {
    state.validate(net.n_cells())?;
    let logits = net.actor.forward(&state.0);
    let probs = masked_softmax(&logits, mask)?;
    let value = net.value(state);
    if !value.is_finite() {
        return Err(Error::InvalidInput("critic produced a non-finite value".into()));
    }
    Ok(PolicyOutput { probs, value })
}

/// Admissible cells by descending probability; ties go to the higher predicted
/// RSRP, then the lower cell id. Scores are the probabilities.
pub fn rank_cells(net: &ActorCritic, state: &PolicyState, mask: &[bool]) -> Result<Vec<(usize, f64)>> {
    let out = policy_forward(net, state, mask)?;
    Ok(rank_by_probs(&out.probs, state.rsrp_block(), mask))
}

pub fn rank_by_probs(probs: &[f64], rsrp: &[f64], mask: &[bool]) -> Vec<(usize, f64)> {
    let mut ranked: Vec<(usize, f64)> = (0..probs.len()).filter(|&c| mask[c]).map(|c| (c, probs[c])).collect();
    ranked.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| rsrp[b.0].total_cmp(&rsrp[a.0]))
            .then_with(|| a.0.cmp(&b.0))
    });
    ranked
}

/// On-disk policy: networks plus the settings they were trained under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyCheckpoint {
    pub format_version: u32,
    pub config: PpoConfig,
    pub policy: ActorCritic,
}

impl PolicyCheckpoint {
    pub fn new(config: PpoConfig, policy: ActorCritic) -> Self {
        Self {
            format_version: POLICY_FORMAT_VERSION,
            config,
            policy,
        }
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer(w, self)?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let ck: Self = serde_json::from_reader(r)?;
        if ck.format_version != POLICY_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: ck.format_version,
                expected: POLICY_FORMAT_VERSION,
            });
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}
