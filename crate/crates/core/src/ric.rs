//! rApp/xApp message schemas and the two RIC loops.
//!
//! The rApp runs every `K` ticks on history strictly older than the current
//! tick and publishes [`A1Ranking`]s; the xApp runs every tick on live
//! [`E2Report`]s plus whatever rankings are fresh in its [`A1Cache`]. The
//! xApp never touches the predictors: it sees rankings only.

use crate::controllers::{
    a3_decide, ahc_xapp_decide, load_balance_decide, ml_assisted_decide, A3Config, A3TimerState, AhcGuard,
    ControllerKind, HoDecision,
};
use crate::geom::Point;
use crate::mobility::{derive_kinematics, MobilityMode};
use crate::ppo::{rank_cells, ActorCritic, PolicyState, StateNormalizer};
use crate::predictors::PredictorBundle;
use crate::radio::{RsrpVector, Topology};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;

/// Live per-UE measurement report, one per UE per tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct E2Report {
    pub tick: u64,
    pub ue_id: usize,
    pub serving_cell: usize,
    pub rsrp: RsrpVector,
    pub position: Option<Point>,
    pub loads: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct A1Ranking {
    pub ue_id: usize,
    /// `(cell_id, score)`, scores nonincreasing.
    pub candidates: Vec<(usize, f64)>,
    pub issued_tick: u64,
    pub ttl_ticks: u64,
    pub mode_hint: MobilityMode,
    /// Carried through untouched; the xApp rule ignores it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kpi_preferences: Option<serde_json::Value>,
}

impl A1Ranking {
    pub fn validate(&self) -> Result<()> {
        if self.candidates.is_empty() {
            return Err(Error::Empty("ranking candidates"));
        }
        if self.candidates.windows(2).any(|w| w[1].1 > w[0].1) {
            return Err(Error::InvalidInput("ranking scores must be nonincreasing".into()));
        }
        let mut ids: Vec<usize> = self.candidates.iter().map(|c| c.0).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("ranking has duplicate cells".into()));
        }
        Ok(())
    }

    /// Valid through `issued_tick + ttl_ticks` inclusive.
    pub fn is_fresh(&self, tick: u64) -> bool {
        tick >= self.issued_tick && tick - self.issued_tick <= self.ttl_ticks
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct E2Control {
    pub tick: u64,
    pub ue_id: usize,
    pub target_cell: usize,
}

/// Run-level outcome routed back toward the rApp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub tick: u64,
    pub handovers: u64,
    pub failures: u64,
    pub pingpongs: u64,
    pub mean_throughput_mbps: f64,
}

/// Model/policy refresh hook. Online retraining is out of scope; the record
/// is only logged.
pub fn model_refresh(feedback: &FeedbackRecord) {
    log::debug!(
        "feedback at tick {}: {} handovers, {} failures, {} ping-pongs, {:.2} Mbps",
        feedback.tick,
        feedback.handovers,
        feedback.failures,
        feedback.pingpongs,
        feedback.mean_throughput_mbps
    );
}

/// Newest ranking per UE; expiry is checked when read.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct A1Cache {
    entries: BTreeMap<usize, A1Ranking>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CacheRead<'a> {
    Fresh(&'a A1Ranking),
    Stale,
    Missing,
}

impl A1Cache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rankings issued after `tick` are not yet visible and are rejected.
    pub fn update(&mut self, rankings: impl IntoIterator<Item = A1Ranking>, tick: u64) {
        for r in rankings {
            if r.issued_tick > tick {
                log::warn!("dropping ranking for UE {} issued in the future", r.ue_id);
                continue;
            }
            match self.entries.get(&r.ue_id) {
                Some(old) if old.issued_tick > r.issued_tick => {}
                _ => {
                    self.entries.insert(r.ue_id, r);
                }
            }
        }
    }

    pub fn read(&self, ue_id: usize, tick: u64) -> CacheRead<'_> {
        match self.entries.get(&ue_id) {
            None => CacheRead::Missing,
            Some(r) if r.is_fresh(tick) => CacheRead::Fresh(r),
            Some(_) => CacheRead::Stale,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// What the rApp knows about one UE: reported positions up to the previous
/// tick and the serving cell in the latest report.
#[derive(Debug, Clone, PartialEq)]
pub struct UeHistory {
    pub ue_id: usize,
    pub positions: Vec<Point>,
    pub serving: usize,
    capacity: usize,
}

impl UeHistory {
    pub fn new(ue_id: usize, serving: usize, capacity: usize) -> Self {
        Self {
            ue_id,
            positions: Vec::with_capacity(capacity + 1),
            serving,
            capacity,
        }
    }

    pub fn push(&mut self, report: &E2Report) {
        if let Some(p) = report.position {
            self.positions.push(p);
            if self.positions.len() > self.capacity {
                self.positions.remove(0);
            }
        }
        self.serving = report.serving_cell;
    }
}

/// Positions needed for a classification window of `window` samples: the
/// third difference (jerk) consumes three leading samples.
pub fn history_needed(window: usize) -> usize {
    window + 3
}

pub struct RappModels<'a> {
    pub predictors: &'a PredictorBundle,
    pub normalizer: &'a StateNormalizer,
    pub topology: &'a Topology,
    pub tick_s: f64,
    /// Admissible cells lie within this many coverage radii.
    pub admissibility_factor: f64,
}

/// Everything the rApp derives for one UE in one period.
#[derive(Debug, Clone, PartialEq)]
pub struct RappObservation {
    pub mode: MobilityMode,
    pub predicted_pos: Point,
    pub predicted_rsrp: RsrpVector,
    pub state: PolicyState,
    pub mask: Vec<bool>,
}

/// Classify → predict next position and RSRP → assemble the policy state.
/// `Ok(None)` when the history is too short.
pub fn rapp_observe(models: &RappModels, history: &UeHistory, prev_mode: MobilityMode) -> Result<Option<RappObservation>> {
    let window = models.predictors.classifier.window;
    let needed = history_needed(window);
    if history.positions.len() < needed {
        return Ok(None);
    }
    let pos = &history.positions[history.positions.len() - needed..];
    let kin = derive_kinematics(pos, models.tick_s)?;
    let valid = &kin[3..];
    let mode = models.predictors.classifier.classify(valid, prev_mode)?;
    let last_k = kin[kin.len() - 1];
    let predicted_pos = models.predictors.trajectory.predict_from_history(&last_k, mode, pos)?;
    let here = pos[pos.len() - 1];
    let predicted_rsrp = models.predictors.rsrp.predict(&last_k, mode, here)?;
    let state = PolicyState::build(mode, predicted_pos, &predicted_rsrp, models.normalizer);
    let mask = models
        .topology
        .admissible_cells(predicted_pos, history.serving, models.admissibility_factor);
    Ok(Some(RappObservation {
        mode,
        predicted_pos,
        predicted_rsrp,
        state,
        mask,
    }))
}

#[derive(Debug, Clone, Default)]
pub struct RappOutput {
    pub rankings: Vec<A1Ranking>,
    /// Mode carried into the next period's classification, per input UE.
    pub modes: Vec<MobilityMode>,
    /// UEs skipped for short history.
    pub skipped: usize,
}

/// One non-RT cycle. `histories` must hold only reports older than `tick`.
pub fn rapp_step(
    models: &RappModels,
    policy: &ActorCritic,
    histories: &[UeHistory],
    prev_modes: &[MobilityMode],
    tick: u64,
    ttl_ticks: u64,
) -> Result<RappOutput> {
    if histories.len() != prev_modes.len() {
        return Err(Error::LengthMismatch {
            expected: histories.len(),
            got: prev_modes.len(),
        });
    }
    let mut out = RappOutput {
        modes: prev_modes.to_vec(),
        ..Default::default()
    };
    for (k, h) in histories.iter().enumerate() {
        let Some(obs) = rapp_observe(models, h, prev_modes[k])? else {
            out.skipped += 1;
            continue;
        };
        out.modes[k] = obs.mode;
        let candidates = rank_cells(policy, &obs.state, &obs.mask)?;
        out.rankings.push(A1Ranking {
            ue_id: h.ue_id,
            candidates,
            issued_tick: tick,
            ttl_ticks,
            mode_hint: obs.mode,
            kpi_preferences: None,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerParams {
    pub a3: A3Config,
    pub load_hi: f64,
    pub rsrp_floor_dbm: f64,
    /// Coverage rule the load balancer applies when the load rule stays;
    /// `None` makes it purely load-driven.
    pub lb_coverage: Option<A3Config>,
    pub ml_margin_db: f64,
    pub ahc_guard: AhcGuard,
    pub rapp_period: u64,
    pub ranking_ttl: u64,
    pub admissibility_factor: f64,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            a3: A3Config::default(),
            load_hi: 0.7,
            rsrp_floor_dbm: -110.0,
            lb_coverage: Some(A3Config {
                ttt_ticks: 1,
                ..A3Config::default()
            }),
            ml_margin_db: 0.5,
            ahc_guard: AhcGuard::default(),
            rapp_period: 10,
            ranking_ttl: 10,
            admissibility_factor: 2.0,
        }
    }
}

impl ControllerParams {
    pub fn validate(&self) -> Result<()> {
        self.a3.validate()?;
        if let Some(c) = &self.lb_coverage {
            c.validate()?;
        }
        if !(0.0..=1.0).contains(&self.load_hi) {
            return Err(Error::InvalidInput("load_hi must be in [0, 1]".into()));
        }
        if self.rapp_period == 0 {
            return Err(Error::InvalidInput("rapp_period must be positive".into()));
        }
        if !(self.admissibility_factor > 0.0) {
            return Err(Error::InvalidInput("admissibility_factor must be positive".into()));
        }
        Ok(())
    }
}

/// Per-UE controller state held by the xApp between ticks.
#[derive(Debug, Clone, PartialEq)]
pub struct XappState {
    pub kind: ControllerKind,
    pub timers: Vec<A3TimerState>,
}

impl XappState {
    pub fn new(kind: ControllerKind, n_ues: usize, n_cells: usize) -> Self {
        Self {
            kind,
            timers: vec![A3TimerState::new(n_cells); n_ues],
        }
    }

    /// Call after a UE's serving cell changes (or a handover attempt ends).
    pub fn on_handover(&mut self, ue_id: usize) {
        self.timers[ue_id].reset();
    }
}

#[derive(Debug, Clone, Default)]
pub struct XappOutput {
    pub controls: Vec<E2Control>,
    pub decisions: Vec<(usize, HoDecision)>,
    /// Active UEs with no report this tick.
    pub missing_reports: usize,
}

/// One near-RT cycle over this tick's reports. `predicted_rsrp` feeds the
/// ML-assisted baseline only and is indexed by UE id.
pub fn xapp_step(
    cache: &A1Cache,
    reports: &[E2Report],
    state: &mut XappState,
    params: &ControllerParams,
    predicted_rsrp: Option<&[RsrpVector]>,
    tick: u64,
) -> Result<XappOutput> {
    let n_ues = state.timers.len();
    let mut seen = vec![false; n_ues];
    let mut out = XappOutput::default();
    for r in reports {
        if r.ue_id >= n_ues || r.tick != tick {
            return Err(Error::InvalidInput(format!("report for UE {} at tick {} out of place", r.ue_id, r.tick)));
        }
        if std::mem::replace(&mut seen[r.ue_id], true) {
            return Err(Error::InvalidInput(format!("duplicate report for UE {}", r.ue_id)));
        }
        let timers = &mut state.timers[r.ue_id];
        let s = r.serving_cell;
        let d = match state.kind {
            ControllerKind::A3 => a3_decide(&params.a3, timers, s, &r.rsrp),
            ControllerKind::LoadBalance => {
                let d = load_balance_decide(s, &r.rsrp, &r.loads, params.load_hi, params.rsrp_floor_dbm);
                match (&params.lb_coverage, d.is_handover()) {
                    (Some(cov), false) => a3_decide(cov, timers, s, &r.rsrp),
                    _ => d,
                }
            }
            ControllerKind::MlAssisted => {
                let pred = predicted_rsrp
                    .and_then(|p| p.get(r.ue_id))
                    .ok_or_else(|| Error::InvalidInput("ML-assisted controller needs predicted RSRP".into()))?;
                ml_assisted_decide(s, pred, params.ml_margin_db)
            }
            ControllerKind::Ahc => {
                let ranking = match cache.read(r.ue_id, tick) {
                    CacheRead::Fresh(rk) => Some(rk.candidates.as_slice()),
                    CacheRead::Stale | CacheRead::Missing => None,
                };
                ahc_xapp_decide(ranking, s, &r.rsrp, &r.loads, &params.ahc_guard, (&params.a3, timers))
            }
        };
        if let Some(target) = d.target() {
            out.controls.push(E2Control {
                tick,
                ue_id: r.ue_id,
                target_cell: target,
            });
        }
        out.decisions.push((r.ue_id, d));
    }
    out.missing_reports = seen.iter().filter(|s| !**s).count();
    Ok(out)
}

/// JSON-lines sink for A1/E2 traffic; the message type is the first field.
pub struct TrafficDump<W: Write> {
    out: W,
}

#[derive(Serialize)]
struct Tagged<'a, T: Serialize> {
    msg: &'static str,
    #[serde(flatten)]
    body: &'a T,
}

impl<W: Write> TrafficDump<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn record<T: Serialize>(&mut self, msg: &'static str, body: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, &Tagged { msg, body })?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controllers::HoAction;

    fn ranking(ue: usize, tick: u64, cells: &[usize]) -> A1Ranking {
        let n = cells.len() as f64;
        A1Ranking {
            ue_id: ue,
            candidates: cells.iter().enumerate().map(|(i, c)| (*c, (n - i as f64) / n)).collect(),
            issued_tick: tick,
            ttl_ticks: 10,
            mode_hint: MobilityMode::Car,
            kpi_preferences: None,
        }
    }

    fn report(ue: usize, tick: u64, serving: usize, rsrp: &[f64]) -> E2Report {
        E2Report {
            tick,
            ue_id: ue,
            serving_cell: serving,
            rsrp: RsrpVector(rsrp.to_vec()),
            position: Some(Point::ORIGIN),
            loads: vec![0.1; rsrp.len()],
        }
    }

    #[test]
    fn ranking_validation() {
        ranking(0, 0, &[2, 0, 1]).validate().unwrap();
        let mut r = ranking(0, 0, &[2, 0]);
        r.candidates[1].1 = 5.0;
        assert!(r.validate().is_err());
        assert!(ranking(0, 0, &[1, 1]).validate().is_err());
        assert!(ranking(0, 0, &[]).validate().is_err());
    }

    #[test]
    fn cache_newest_wins_and_ttl_is_inclusive() {
        let mut c = A1Cache::new();
        c.update([ranking(3, 10, &[1]), ranking(3, 20, &[2])], 20);
        c.update([ranking(3, 15, &[4])], 20);
        match c.read(3, 20) {
            CacheRead::Fresh(r) => assert_eq!(r.candidates[0].0, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(c.read(3, 30), CacheRead::Fresh(_)));
        assert_eq!(c.read(3, 31), CacheRead::Stale);
        assert_eq!(c.read(4, 20), CacheRead::Missing);
    }

    #[test]
    fn cache_rejects_future_rankings() {
        let mut c = A1Cache::new();
        c.update([ranking(0, 11, &[1])], 10);
        assert!(c.is_empty());
    }

    #[test]
    fn xapp_all_stay_emits_nothing() {
        let mut st = XappState::new(ControllerKind::A3, 2, 2);
        let reports = [report(0, 5, 0, &[-80.0, -90.0]), report(1, 5, 1, &[-90.0, -80.0])];
        let out = xapp_step(&A1Cache::new(), &reports, &mut st, &ControllerParams::default(), None, 5).unwrap();
        assert!(out.controls.is_empty());
        assert_eq!(out.decisions.len(), 2);
    }

    #[test]
    fn xapp_baseline_ignores_cache() {
        let params = ControllerParams {
            a3: A3Config {
                ttt_ticks: 1,
                ..Default::default()
            },
            ..Default::default()
        };
        let reports = [report(0, 0, 0, &[-80.0, -70.0, -75.0])];
        let mut full = A1Cache::new();
        full.update([ranking(0, 0, &[2, 1, 0])], 0);
        let a = xapp_step(&full, &reports, &mut XappState::new(ControllerKind::A3, 1, 3), &params, None, 0).unwrap();
        let b = xapp_step(&A1Cache::new(), &reports, &mut XappState::new(ControllerKind::A3, 1, 3), &params, None, 0).unwrap();
        assert_eq!(a.controls, b.controls);
        assert_eq!(a.controls.len(), 1);
        assert_eq!(a.controls[0].target_cell, 1);
    }

    #[test]
    fn xapp_single_handover_control() {
        let mut cache = A1Cache::new();
        cache.update([ranking(1, 0, &[2, 0])], 0);
        let reports = [report(0, 3, 0, &[-80.0, -90.0, -95.0]), report(1, 3, 0, &[-90.0, -95.0, -80.0])];
        let mut st = XappState::new(ControllerKind::Ahc, 2, 3);
        let out = xapp_step(&cache, &reports, &mut st, &ControllerParams::default(), None, 3).unwrap();
        assert_eq!(
            out.controls,
            vec![E2Control {
                tick: 3,
                ue_id: 1,
                target_cell: 2
            }]
        );
        assert_eq!(out.decisions[1].1.action, HoAction::Handover(2));
    }

    #[test]
    fn xapp_counts_missing_reports() {
        let mut st = XappState::new(ControllerKind::A3, 3, 2);
        let out = xapp_step(&A1Cache::new(), &[report(1, 0, 0, &[-80.0, -90.0])], &mut st, &ControllerParams::default(), None, 0).unwrap();
        assert_eq!(out.missing_reports, 2);
        let dup = [report(1, 0, 0, &[-80.0, -90.0]), report(1, 0, 0, &[-80.0, -90.0])];
        assert!(xapp_step(&A1Cache::new(), &dup, &mut st, &ControllerParams::default(), None, 0).is_err());
    }

    #[test]
    fn history_window_is_bounded() {
        let mut h = UeHistory::new(0, 0, 4);
        for t in 0..10 {
            let mut r = report(0, t, 0, &[-80.0]);
            r.position = Some(Point::new(t as f64, 0.0));
            h.push(&r);
        }
        assert_eq!(h.positions.len(), 4);
        assert_eq!(h.positions[0].x, 6.0);
    }

    #[test]
    fn traffic_dump_puts_type_first() {
        let mut d = TrafficDump::new(Vec::new());
        d.record(
            "e2_control",
            &E2Control {
                tick: 1,
                ue_id: 2,
                target_cell: 3,
            },
        )
        .unwrap();
        let text = String::from_utf8(d.into_inner()).unwrap();
        assert!(text.starts_with("{\"msg\":\"e2_control\""), "{text}");
        assert!(text.ends_with('\n'));
    }
}
