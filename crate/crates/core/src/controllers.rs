//! Handover decision rules: classical A3, a load-balancing baseline, a
//! prediction-driven reactive baseline, and the ranking-guided xApp rule.
//!
//! Every rule is a pure function of its inputs; timer state is passed in
//! explicitly so per-UE evaluation can run in any order.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    A3,
    LoadBalance,
    MlAssisted,
    Ahc,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 4] = [Self::A3, Self::LoadBalance, Self::MlAssisted, Self::Ahc];

    pub fn label(self) -> &'static str {
        match self {
            Self::A3 => "a3",
            Self::LoadBalance => "load_balance",
            Self::MlAssisted => "ml_assisted",
            Self::Ahc => "ahc",
        }
    }

    /// Whether the controller needs trained predictor checkpoints.
    pub fn needs_predictors(self) -> bool {
        matches!(self, Self::MlAssisted | Self::Ahc)
    }

    pub fn needs_policy(self) -> bool {
        self == Self::Ahc
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ControllerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "a3" => Ok(Self::A3),
            "load_balance" | "lb" => Ok(Self::LoadBalance),
            "ml_assisted" | "ml" => Ok(Self::MlAssisted),
            "ahc" => Ok(Self::Ahc),
            other => Err(Error::InvalidInput(format!("unknown controller '{other}'"))),
        }
    }
}

/// Cell-individual offset for one (serving, neighbour) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CioPair {
    pub serving: usize,
    pub neighbor: usize,
    pub offset_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct A3Config {
    pub hysteresis_db: f64,
    /// Offset applied to every pair without an explicit entry.
    pub cio_db: f64,
    pub cio_pairs: Vec<CioPair>,
    pub ttt_ticks: u32,
}

impl Default for A3Config {
    fn default() -> Self {
        Self {
            hysteresis_db: 3.0,
            cio_db: 0.0,
            cio_pairs: Vec::new(),
            ttt_ticks: 4,
        }
    }
}

impl A3Config {
    pub fn validate(&self) -> Result<()> {
        if !(self.hysteresis_db >= 0.0) {
            return Err(Error::InvalidInput("A3 hysteresis must be >= 0".into()));
        }
        if self.ttt_ticks < 1 {
            return Err(Error::InvalidInput("A3 time-to-trigger must be >= 1 tick".into()));
        }
        Ok(())
    }

    pub fn cio(&self, serving: usize, neighbor: usize) -> f64 {
        self.cio_pairs
            .iter()
            .find(|p| p.serving == serving && p.neighbor == neighbor)
            .map_or(self.cio_db, |p| p.offset_db)
    }
}

/// Consecutive-satisfaction counters for one UE, one per candidate cell.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct A3TimerState {
    pub counters: Vec<u32>,
}

impl A3TimerState {
    pub fn new(n_cells: usize) -> Self {
        Self {
            counters: vec![0; n_cells],
        }
    }

    pub fn reset(&mut self) {
        self.counters.iter_mut().for_each(|c| *c = 0);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HoReason {
    A3Trigger,
    Load,
    Ranking,
    /// Every ranked candidate failed a guard, or stickiness held the UE.
    GuardReject,
    /// Predicted-RSRP margin (reactive ML baseline).
    Prediction,
}

impl HoReason {
    pub fn label(self) -> &'static str {
        match self {
            Self::A3Trigger => "a3_trigger",
            Self::Load => "load",
            Self::Ranking => "ranking",
            Self::GuardReject => "guard_reject",
            Self::Prediction => "prediction",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HoAction {
    Stay,
    Handover(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HoDecision {
    pub action: HoAction,
    pub reason: Option<HoReason>,
}

impl HoDecision {
    pub const STAY: HoDecision = HoDecision {
        action: HoAction::Stay,
        reason: None,
    };

    pub fn stay(reason: HoReason) -> Self {
        Self {
            action: HoAction::Stay,
            reason: Some(reason),
        }
    }

    pub fn handover(target: usize, reason: HoReason) -> Self {
        Self {
            action: HoAction::Handover(target),
            reason: Some(reason),
        }
    }

    pub fn target(&self) -> Option<usize> {
        match self.action {
            HoAction::Handover(c) => Some(c),
            HoAction::Stay => None,
        }
    }

    pub fn is_handover(&self) -> bool {
        self.target().is_some()
    }
}

/// Highest value wins; ties go to the lowest index.
fn better(a: (usize, f64), b: (usize, f64)) -> bool {
    a.1 > b.1 || (a.1 == b.1 && a.0 < b.0)
}

pub fn a3_decide(cfg: &A3Config, timers: &mut A3TimerState, serving: usize, rsrp: &[f64]) -> HoDecision {
    if timers.counters.len() != rsrp.len() {
        timers.counters = vec![0; rsrp.len()];
    }
    let threshold = rsrp[serving] + cfg.hysteresis_db;
    let mut best: Option<(usize, f64)> = None;
    for c in 0..rsrp.len() {
        if c == serving {
            timers.counters[c] = 0;
            continue;
        }
        if rsrp[c] + cfg.cio(serving, c) > threshold {
            timers.counters[c] += 1;
        } else {
            timers.counters[c] = 0;
        }
        if timers.counters[c] >= cfg.ttt_ticks && best.is_none_or(|b| better((c, rsrp[c]), b)) {
            best = Some((c, rsrp[c]));
        }
    }
    match best {
        Some((c, _)) => HoDecision::handover(c, HoReason::A3Trigger),
        None => HoDecision::STAY,
    }
}

/// Offload an overloaded serving cell to the least-loaded neighbour that is
/// above the RSRP floor and strictly less loaded than the serving cell.
pub fn load_balance_decide(serving: usize, rsrp: &[f64], loads: &[f64], load_hi: f64, rsrp_floor: f64) -> HoDecision {
    if loads[serving] <= load_hi {
        return HoDecision::STAY;
    }
    let mut best: Option<usize> = None;
    for c in 0..rsrp.len() {
        if c == serving || rsrp[c] < rsrp_floor || loads[c] >= loads[serving] {
            continue;
        }
        best = match best {
            None => Some(c),
            Some(b) if loads[c] < loads[b] || (loads[c] == loads[b] && better((c, rsrp[c]), (b, rsrp[b]))) => Some(c),
            keep => keep,
        };
    }
    match best {
        Some(c) => HoDecision::handover(c, HoReason::Load),
        None => HoDecision::STAY,
    }
}

/// Reactive, zero-TTT rule on predicted RSRP.
pub fn ml_assisted_decide(serving: usize, predicted_rsrp: &[f64], margin_db: f64) -> HoDecision {
    let best = (0..predicted_rsrp.len())
        .map(|c| (c, predicted_rsrp[c]))
        .fold(None, |acc: Option<(usize, f64)>, x| match acc {
            Some(b) if !better(x, b) => Some(b),
            _ => Some(x),
        });
    match best {
        Some((c, r)) if c != serving && r - predicted_rsrp[serving] >= margin_db => {
            HoDecision::handover(c, HoReason::Prediction)
        }
        _ => HoDecision::STAY,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AhcGuard {
    pub rsrp_floor_dbm: f64,
    /// Candidates must have load strictly below this.
    pub load_max: f64,
    /// Required live-RSRP gain over the serving cell, dB.
    pub stickiness_db: f64,
}

impl Default for AhcGuard {
    fn default() -> Self {
        Self {
            rsrp_floor_dbm: -110.0,
            load_max: 1.0,
            stickiness_db: 2.0,
        }
    }
}

impl AhcGuard {
    /// No floor, no load limit beyond a full cell, no stickiness.
    pub fn disabled() -> Self {
        Self {
            rsrp_floor_dbm: f64::NEG_INFINITY,
            load_max: 1.0,
            stickiness_db: f64::NEG_INFINITY,
        }
    }
}

/// Walk a fresh ranking top-down and take the first candidate that clears the
/// live guards. `ranking = None` means missing or expired: A3 decides.
pub fn ahc_xapp_decide(
    ranking: Option<&[(usize, f64)]>,
    serving: usize,
    live_rsrp: &[f64],
    loads: &[f64],
    guard: &AhcGuard,
    fallback: (&A3Config, &mut A3TimerState),
) -> HoDecision {
    let Some(ranking) = ranking.filter(|r| !r.is_empty()) else {
        return a3_decide(fallback.0, fallback.1, serving, live_rsrp);
    };
    // The serving cell already holds the UE, so the admission (load) guard
    // applies only to targets.
    let selected = ranking
        .iter()
        .map(|(c, _)| *c)
        .find(|&c| live_rsrp[c] >= guard.rsrp_floor_dbm && (c == serving || loads[c] < guard.load_max));
    match selected {
        None => HoDecision::stay(HoReason::GuardReject),
        Some(c) if c == serving => HoDecision::stay(HoReason::Ranking),
        Some(c) if !(live_rsrp[c] - live_rsrp[serving] >= guard.stickiness_db) => HoDecision::stay(HoReason::GuardReject),
        Some(c) => HoDecision::handover(c, HoReason::Ranking),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn a3_fires_after_ttt() {
        let cfg = A3Config::default();
        let mut t = A3TimerState::new(2);
        for tick in 1..=4 {
            let d = a3_decide(&cfg, &mut t, 0, &[-80.0, -76.0]);
            assert_eq!(d.is_handover(), tick == 4, "tick {tick}");
        }
        assert_eq!(a3_decide(&cfg, &mut A3TimerState::new(2), 0, &[-80.0, -76.0]).reason, None);
    }

    #[test]
    fn a3_needs_strict_margin() {
        let cfg = A3Config::default();
        let mut t = A3TimerState::new(2);
        for _ in 0..100 {
            assert!(!a3_decide(&cfg, &mut t, 0, &[-80.0, -78.0]).is_handover());
        }
        // Exactly at hysteresis: −77 is not > −77.
        assert!(!a3_decide(&cfg, &mut t, 0, &[-80.0, -77.0]).is_handover());
    }

    #[test]
    fn a3_timer_resets_on_gap() {
        let cfg = A3Config::default();
        let mut t = A3TimerState::new(2);
        let good = [-80.0, -76.0];
        let bad = [-80.0, -79.0];
        let seq = [good, good, good, bad, good, good, good, good];
        let fired: Vec<usize> = seq
            .iter()
            .enumerate()
            .filter(|(_, r)| a3_decide(&cfg, &mut t, 0, &r[..]).is_handover())
            .map(|(i, _)| i + 1)
            .collect();
        assert_eq!(fired, vec![8]);
    }

    #[test]
    fn a3_picks_strongest_complete_candidate() {
        let cfg = A3Config {
            ttt_ticks: 1,
            ..Default::default()
        };
        let d = a3_decide(&cfg, &mut A3TimerState::new(4), 0, &[-90.0, -80.0, -70.0, -70.0]);
        assert_eq!(d, HoDecision::handover(2, HoReason::A3Trigger));
    }

    #[test]
    fn a3_cio_pair_offset() {
        let cfg = A3Config {
            ttt_ticks: 1,
            cio_pairs: vec![CioPair {
                serving: 0,
                neighbor: 1,
                offset_db: 5.0,
            }],
            ..Default::default()
        };
        // −79 + 5 = −74 > −77 for pair (0, 1) only.
        assert!(a3_decide(&cfg, &mut A3TimerState::new(2), 0, &[-80.0, -79.0]).is_handover());
        assert!(!a3_decide(&cfg, &mut A3TimerState::new(2), 1, &[-79.0, -80.0]).is_handover());
    }

    /// Replays the whole history at every tick: a candidate's run length is the
    /// number of consecutive satisfied ticks since the last handover.
    fn a3_oracle(cfg: &A3Config, start: usize, seq: &[Vec<f64>]) -> Vec<Option<usize>> {
        let mut serving = start;
        let mut since = 0;
        let mut out = Vec::new();
        for t in 0..seq.len() {
            let mut best: Option<(usize, f64)> = None;
            for c in 0..seq[t].len() {
                if c == serving {
                    continue;
                }
                let mut run = 0;
                for u in (since..=t).rev() {
                    if seq[u][c] + cfg.cio(serving, c) > seq[u][serving] + cfg.hysteresis_db {
                        run += 1;
                    } else {
                        break;
                    }
                }
                if run >= cfg.ttt_ticks && best.is_none_or(|b| seq[t][c] > b.1) {
                    best = Some((c, seq[t][c]));
                }
            }
            out.push(best.map(|b| b.0));
            if let Some((c, _)) = best {
                serving = c;
                since = t + 1;
            }
        }
        out
    }

    #[test]
    fn a3_matches_tick_enumeration_oracle() {
        let mut r = crate::rng::stream(42, &[]);
        for case in 0..1000 {
            let n_cells = r.random_range(2..5);
            let len = r.random_range(5..40);
            let cfg = A3Config {
                hysteresis_db: r.random_range(0..4) as f64,
                ttt_ticks: r.random_range(1..6),
                ..Default::default()
            };
            // Integer dB keeps ties and exact threshold hits common.
            let seq: Vec<Vec<f64>> = (0..len)
                .map(|_| (0..n_cells).map(|_| -80.0 + r.random_range(-6..=6) as f64).collect())
                .collect();
            let expected = a3_oracle(&cfg, 0, &seq);
            let mut timers = A3TimerState::new(n_cells);
            let mut serving = 0;
            for (t, rsrp) in seq.iter().enumerate() {
                let d = a3_decide(&cfg, &mut timers, serving, rsrp);
                assert_eq!(d.target(), expected[t], "case {case} tick {t}");
                if let Some(c) = d.target() {
                    serving = c;
                    timers.reset();
                }
            }
        }
    }

    #[test]
    fn load_balance_examples() {
        let d = load_balance_decide(0, &[-80.0, -95.0], &[0.9, 0.3], 0.7, -110.0);
        assert_eq!(d, HoDecision::handover(1, HoReason::Load));
        assert!(!load_balance_decide(0, &[-80.0, -95.0], &[0.5, 0.3], 0.7, -110.0).is_handover());
        assert!(!load_balance_decide(0, &[-80.0, -115.0], &[0.9, 0.3], 0.7, -110.0).is_handover());
        // Least loaded wins; equal loads fall to the stronger cell.
        let d = load_balance_decide(0, &[-80.0, -100.0, -90.0, -95.0], &[0.9, 0.5, 0.2, 0.2], 0.7, -110.0);
        assert_eq!(d.target(), Some(2));
    }

    #[test]
    fn ml_assisted_examples() {
        assert_eq!(ml_assisted_decide(0, &[-80.0, -75.0], 1.0).target(), Some(1));
        assert!(!ml_assisted_decide(0, &[-80.0, -79.5], 1.0).is_handover());
        assert!(!ml_assisted_decide(0, &[-70.0, -79.5], 1.0).is_handover());
    }

    #[test]
    fn ahc_guard_walk() {
        // Cells: A = 0, B = 1, serving = 2.
        let ranking = [(1, 0.6), (0, 0.3)];
        let live = [-96.0, -120.0, -100.0];
        let loads = [0.2, 0.2, 0.5];
        let d = ahc_xapp_decide(
            Some(&ranking),
            2,
            &live,
            &loads,
            &AhcGuard::default(),
            (&A3Config::default(), &mut A3TimerState::new(3)),
        );
        assert_eq!(d, HoDecision::handover(0, HoReason::Ranking));
    }

    #[test]
    fn ahc_top_is_serving() {
        let d = ahc_xapp_decide(
            Some(&[(0, 0.9), (1, 0.1)]),
            0,
            &[-100.0, -60.0],
            &[0.1, 0.1],
            &AhcGuard::default(),
            (&A3Config::default(), &mut A3TimerState::new(2)),
        );
        assert_eq!(d.action, HoAction::Stay);
    }

    #[test]
    fn ahc_full_serving_cell_is_kept() {
        // Serving is at capacity but top-ranked: it must not be skipped in
        // favour of the runner-up.
        let d = ahc_xapp_decide(
            Some(&[(0, 0.7), (1, 0.3)]),
            0,
            &[-90.0, -80.0],
            &[1.0, 0.1],
            &AhcGuard::default(),
            (&A3Config::default(), &mut A3TimerState::new(2)),
        );
        assert_eq!(d, HoDecision::stay(HoReason::Ranking));
    }

    #[test]
    fn ahc_stickiness_and_load_guard() {
        let cfg = A3Config::default();
        // Gain of 1.5 dB < 2 dB stickiness.
        let d = ahc_xapp_decide(Some(&[(1, 1.0)]), 0, &[-90.0, -88.5], &[0.1, 0.1], &AhcGuard::default(), (&cfg, &mut A3TimerState::new(2)));
        assert_eq!(d, HoDecision::stay(HoReason::GuardReject));
        // Full target is skipped.
        let d = ahc_xapp_decide(Some(&[(1, 0.7), (2, 0.3)]), 0, &[-90.0, -70.0, -80.0], &[0.1, 1.0, 0.5], &AhcGuard::default(), (&cfg, &mut A3TimerState::new(3)));
        assert_eq!(d.target(), Some(2));
    }

    #[test]
    fn ahc_stale_ranking_equals_a3() {
        let cfg = A3Config {
            ttt_ticks: 1,
            ..Default::default()
        };
        let mut r = crate::rng::stream(5, &[]);
        for _ in 0..200 {
            let live: Vec<f64> = (0..5).map(|_| r.random_range(-110.0..-70.0)).collect();
            let loads: Vec<f64> = (0..5).map(|_| r.random_range(0.0..1.0)).collect();
            let mut t1 = A3TimerState::new(5);
            let mut t2 = A3TimerState::new(5);
            let a = ahc_xapp_decide(None, 0, &live, &loads, &AhcGuard::default(), (&cfg, &mut t1));
            let b = a3_decide(&cfg, &mut t2, 0, &live);
            assert_eq!(a, b);
            assert_eq!(t1, t2);
        }
    }

    #[test]
    fn controller_labels_round_trip() {
        for k in ControllerKind::ALL {
            assert_eq!(k.label().parse::<ControllerKind>().unwrap(), k);
        }
        assert!("nope".parse::<ControllerKind>().is_err());
    }

    fn cell_vectors() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, usize)> {
        (2usize..8).prop_flat_map(|n| {
            (
                prop::collection::vec(-120.0f64..-60.0, n),
                prop::collection::vec(0.0f64..1.0, n),
                0..n,
            )
        })
    }

    proptest! {
        #[test]
        fn dominant_serving_cell_stays((mut rsrp, mut loads, s) in cell_vectors(), ttt in 1u32..5) {
            let n = rsrp.len();
            // Make the serving cell strictly best in RSRP and strictly least loaded.
            rsrp[s] = rsrp.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
            loads[s] = loads.iter().cloned().fold(f64::INFINITY, f64::min) * 0.5;
            let a3 = A3Config { ttt_ticks: ttt, ..Default::default() };
            let mut t = A3TimerState::new(n);
            for _ in 0..ttt + 2 {
                prop_assert!(!a3_decide(&a3, &mut t, s, &rsrp).is_handover());
            }
            prop_assert!(!load_balance_decide(s, &rsrp, &loads, 0.0, -200.0).is_handover());
            prop_assert!(!ml_assisted_decide(s, &rsrp, 0.0).is_handover());
            let ranking: Vec<(usize, f64)> = (0..n).rev().map(|c| (c, 1.0 / (c + 1) as f64)).collect();
            let guard = AhcGuard { stickiness_db: 0.0, ..AhcGuard::disabled() };
            let d = ahc_xapp_decide(Some(&ranking), s, &rsrp, &loads, &guard, (&a3, &mut A3TimerState::new(n)));
            prop_assert!(!d.is_handover());
        }

        #[test]
        fn ahc_never_violates_guards(
            (rsrp, loads, s) in cell_vectors(),
            floor in -115.0f64..-80.0,
            load_max in 0.2f64..1.0,
            stick in 0.0f64..4.0,
        ) {
            let n = rsrp.len();
            let ranking: Vec<(usize, f64)> = (0..n).map(|c| (c, 1.0 - c as f64 * 0.1)).collect();
            let guard = AhcGuard { rsrp_floor_dbm: floor, load_max, stickiness_db: stick };
            let d = ahc_xapp_decide(Some(&ranking), s, &rsrp, &loads, &guard, (&A3Config::default(), &mut A3TimerState::new(n)));
            if let Some(c) = d.target() {
                prop_assert!(c != s);
                prop_assert!(loads[c] < load_max);
                prop_assert!(rsrp[c] >= floor);
                prop_assert!(rsrp[c] - rsrp[s] >= stick);
            }
        }

        #[test]
        fn decisions_are_shift_invariant((rsrp, loads, s) in cell_vectors(), shift in -30.0f64..30.0, ttt in 1u32..4) {
            let n = rsrp.len();
            let shifted: Vec<f64> = rsrp.iter().map(|r| r + shift).collect();
            let a3 = A3Config { ttt_ticks: ttt, ..Default::default() };
            let (mut t1, mut t2) = (A3TimerState::new(n), A3TimerState::new(n));
            for _ in 0..ttt {
                prop_assert_eq!(a3_decide(&a3, &mut t1, s, &rsrp), a3_decide(&a3, &mut t2, s, &shifted));
            }
            prop_assert_eq!(ml_assisted_decide(s, &rsrp, 1.0), ml_assisted_decide(s, &shifted, 1.0));
            // Absolute floors are the only non-differential inputs; disable them.
            prop_assert_eq!(
                load_balance_decide(s, &rsrp, &loads, 0.5, f64::NEG_INFINITY),
                load_balance_decide(s, &shifted, &loads, 0.5, f64::NEG_INFINITY)
            );
            let ranking: Vec<(usize, f64)> = (0..n).map(|c| (c, 1.0 - c as f64 * 0.1)).collect();
            let guard = AhcGuard { rsrp_floor_dbm: f64::NEG_INFINITY, ..AhcGuard::default() };
            let d1 = ahc_xapp_decide(Some(&ranking), s, &rsrp, &loads, &guard, (&a3, &mut A3TimerState::new(n)));
            let d2 = ahc_xapp_decide(Some(&ranking), s, &shifted, &loads, &guard, (&a3, &mut A3TimerState::new(n)));
            // Differences are computed in floating point; tolerate exact-boundary flips.
            let gap = ranking.iter().find(|(c, _)| loads[*c] < 1.0).map(|(c, _)| rsrp[*c] - rsrp[s] - 2.0);
            if gap.is_none_or(|g| g.abs() > 1e-9) {
                prop_assert_eq!(d1, d2);
            }
        }
    }
}
