//! The per-tick loop.
//!
//! Each tick: report measurements (E2) → on rApp ticks, rank candidates (A1)
//! → xApp decisions → execute handovers against the admission ledger →
//! throughput and utility accounting.

use super::kpi::{detect_pingpong, HoEvent, HoOutcome, KpiRecord, UtilityWeights};
use super::{generate_population, SimConfig};
use crate::controllers::ControllerKind;
use crate::mobility::{MobilityMode, UeTrace};
use crate::ppo::{ActorCritic, StateNormalizer};
use crate::predictors::dataset::measure_traces;
use crate::predictors::PredictorBundle;
use crate::radio::{throughput, RsrpVector, Topology};
use crate::ric::{
    history_needed, model_refresh, rapp_observe, rapp_step, xapp_step, A1Cache, A1Ranking, E2Report, FeedbackRecord,
    RappModels, RappObservation, TrafficDump, UeHistory, XappState,
};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Where AHC rankings come from.
#[derive(Clone, Copy)]
pub enum RappSource<'a> {
    /// Baseline controllers: no rApp.
    None,
    /// The rApp runs the given policy every period.
    Policy(&'a ActorCritic),
    /// Rankings are injected from outside (policy training).
    External,
}

#[derive(Clone, Copy, Default)]
pub struct SimModels<'a> {
    pub predictors: Option<&'a PredictorBundle>,
    pub policy: Option<&'a ActorCritic>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickRow {
    pub tick: u64,
    pub ue_id: usize,
    pub serving: usize,
    pub rsrp_serving: f64,
    pub throughput_mbps: f64,
    pub ho_flag: bool,
    pub pp_flag: bool,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub kpi: KpiRecord,
    pub events: Vec<HoEvent>,
    pub rows: Vec<TickRow>,
    pub rankings_issued: u64,
}

pub struct Simulation<'a> {
    cfg: SimConfig,
    kind: ControllerKind,
    seed: u64,
    topology: Topology,
    traces: Vec<UeTrace>,
    measured: Vec<Vec<RsrpVector>>,
    reported: Vec<Vec<f64>>,
    n_ticks: usize,
    capacity: usize,
    serving: Vec<usize>,
    counts: Vec<usize>,
    xapp: XappState,
    cache: A1Cache,
    histories: Vec<UeHistory>,
    modes: Vec<MobilityMode>,
    last_success: Vec<Option<(u64, usize, usize)>>,
    predictors: Option<&'a PredictorBundle>,
    rapp: RappSource<'a>,
    normalizer: StateNormalizer,
    weights: UtilityWeights,
    tick: u64,
    events: Vec<HoEvent>,
    rows: Vec<TickRow>,
    record_rows: bool,
    utility_acc: Vec<f64>,
    utility_total: f64,
    throughput_sum: f64,
    rankings_issued: u64,
    dump: Option<TrafficDump<Box<dyn Write + 'a>>>,
}

impl<'a> Simulation<'a> {
    /// Scenario from config: ring topology and generated traces for `seed`.
    pub fn new(
        cfg: &SimConfig,
        kind: ControllerKind,
        seed: u64,
        models: SimModels<'a>,
        rapp: RappSource<'a>,
        weights: UtilityWeights,
    ) -> Result<Self> {
        cfg.validate()?;
        let topology = cfg.topology.build()?;
        let traces = generate_population(cfg, seed)?;
        Self::from_parts(cfg, kind, seed, topology, traces, models, rapp, weights)
    }

    /// Scenario from explicit topology and traces; `cfg.n_ues`/`n_ticks` are
    /// taken from the traces.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        cfg: &SimConfig,
        kind: ControllerKind,
        seed: u64,
        topology: Topology,
        traces: Vec<UeTrace>,
        models: SimModels<'a>,
        rapp: RappSource<'a>,
        weights: UtilityWeights,
    ) -> Result<Self> {
        if traces.is_empty() {
            return Err(Error::Empty("UE traces"));
        }
        for (i, t) in traces.iter().enumerate() {
            if t.ue_id != i {
                return Err(Error::InvalidInput(format!("trace {i} has ue_id {}", t.ue_id)));
            }
        }
        let n_ticks = traces.iter().map(|t| t.samples.len()).min().unwrap_or(0);
        if n_ticks < 1 {
            return Err(Error::Empty("trace samples"));
        }
        if kind.needs_predictors() && models.predictors.is_none() {
            return Err(Error::InvalidInput(format!("controller {kind} needs trained predictors")));
        }
        if let Some(p) = models.predictors {
            if p.rsrp.n_cells() != topology.n_cells() {
                return Err(Error::LengthMismatch {
                    expected: topology.n_cells(),
                    got: p.rsrp.n_cells(),
                });
            }
        }
        let rapp = match (kind, rapp) {
            (ControllerKind::Ahc, RappSource::None) => match models.policy {
                Some(p) => RappSource::Policy(p),
                None => return Err(Error::InvalidInput("AHC controller needs a trained policy".into())),
            },
            (ControllerKind::Ahc, r) => r,
            _ => RappSource::None,
        };
        let mut cfg = cfg.clone();
        cfg.n_ues = traces.len();
        cfg.n_ticks = n_ticks;
        let n_ues = traces.len();
        let n_cells = topology.n_cells();
        let capacity = cfg.capacity();
        let measured = measure_traces(&topology, &traces, seed, cfg.topology.decorrelation_m);
        let normalizer = match rapp {
            RappSource::Policy(p) => p.normalizer.clone(),
            _ => StateNormalizer::default(),
        };
        let window = models.predictors.map_or(10, |p| p.classifier.window);

        // Initial attach in UE order: strongest cell with room.
        let mut counts = vec![0usize; n_cells];
        let mut serving = Vec::with_capacity(n_ues);
        for m in &measured {
            let mut order: Vec<usize> = (0..n_cells).collect();
            order.sort_by(|&a, &b| m[0][b].total_cmp(&m[0][a]).then(a.cmp(&b)));
            let c = *order
                .iter()
                .find(|&&c| counts[c] < capacity)
                .ok_or(Error::NoAdmissibleCell)?;
            counts[c] += 1;
            serving.push(c);
        }
        let histories = serving
            .iter()
            .enumerate()
            .map(|(u, &s)| UeHistory::new(u, s, history_needed(window)))
            .collect();

        Ok(Self {
            kind,
            seed,
            reported: measured.iter().map(|m| m[0].0.clone()).collect(),
            measured,
            n_ticks,
            capacity,
            serving,
            counts,
            xapp: XappState::new(kind, n_ues, n_cells),
            cache: A1Cache::new(),
            histories,
            modes: vec![MobilityMode::Ped; n_ues],
            last_success: vec![None; n_ues],
            predictors: models.predictors,
            rapp,
            normalizer,
            weights,
            tick: 0,
            events: Vec::new(),
            rows: Vec::new(),
            record_rows: true,
            utility_acc: vec![0.0; n_ues],
            utility_total: 0.0,
            throughput_sum: 0.0,
            rankings_issued: 0,
            dump: None,
            topology,
            traces,
            cfg,
        })
    }

    pub fn set_record_rows(&mut self, on: bool) {
        self.record_rows = on;
    }

    /// Writes every A1 and E2 message as JSON lines.
    pub fn set_traffic_dump(&mut self, out: Box<dyn Write + 'a>) {
        self.dump = Some(TrafficDump::new(out));
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn n_ticks(&self) -> usize {
        self.n_ticks
    }

    pub fn n_ues(&self) -> usize {
        self.traces.len()
    }

    pub fn is_finished(&self) -> bool {
        self.tick as usize >= self.n_ticks
    }

    pub fn serving(&self) -> &[usize] {
        &self.serving
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    /// Mode carried per UE from the latest classification.
    pub fn modes(&self) -> &[MobilityMode] {
        &self.modes
    }

    pub fn rapp_period(&self) -> u64 {
        self.cfg.controllers.rapp_period
    }

    /// Utility accrued per UE since the last call.
    pub fn take_utility(&mut self) -> Vec<f64> {
        std::mem::replace(&mut self.utility_acc, vec![0.0; self.traces.len()])
    }

    fn rapp_models(&self) -> Result<RappModels<'_>> {
        Ok(RappModels {
            predictors: self
                .predictors
                .ok_or_else(|| Error::InvalidInput("rApp needs trained predictors".into()))?,
            normalizer: &self.normalizer,
            topology: &self.topology,
            tick_s: self.cfg.mobility.tick_s,
            admissibility_factor: self.cfg.controllers.admissibility_factor,
        })
    }

    /// rApp view of every UE at the current tick (history strictly older),
    /// advancing the carried mode state.
    pub fn observe(&mut self) -> Result<Vec<Option<RappObservation>>> {
        let models = self.rapp_models()?;
        let mut out = Vec::with_capacity(self.histories.len());
        let mut modes = self.modes.clone();
        for (u, h) in self.histories.iter().enumerate() {
            let obs = rapp_observe(&models, h, self.modes[u])?;
            if let Some(o) = &obs {
                modes[u] = o.mode;
            }
            out.push(obs);
        }
        self.modes = modes;
        Ok(out)
    }

    pub fn inject_rankings(&mut self, rankings: Vec<A1Ranking>) -> Result<()> {
        for r in &rankings {
            r.validate()?;
        }
        self.publish(rankings)
    }

    fn publish(&mut self, rankings: Vec<A1Ranking>) -> Result<()> {
        if let Some(d) = &mut self.dump {
            for r in &rankings {
                d.record("a1_ranking", r)?;
            }
        }
        self.rankings_issued += rankings.len() as u64;
        self.cache.update(rankings, self.tick);
        Ok(())
    }

    /// Runs up to `n` ticks; stops early at the end of the traces.
    pub fn advance(&mut self, n: usize) -> Result<()> {
        for _ in 0..n {
            if self.is_finished() {
                break;
            }
            self.step()?;
        }
        Ok(())
    }

    pub fn step(&mut self) -> Result<()> {
        let t = self.tick;
        let ti = t as usize;
        let n_ues = self.traces.len();
        let n_cells = self.topology.n_cells();
        let a = self.cfg.l3_filter_coeff;
        if ti > 0 {
            for u in 0..n_ues {
                let raw = &self.measured[u][ti];
                for (f, m) in self.reported[u].iter_mut().zip(raw.iter()) {
                    *f = (1.0 - a) * *f + a * m;
                }
            }
        }
        let loads: Vec<f64> = self.counts.iter().map(|&c| c as f64 / self.capacity as f64).collect();
        let reports: Vec<E2Report> = (0..n_ues)
            .map(|u| E2Report {
                tick: t,
                ue_id: u,
                serving_cell: self.serving[u],
                rsrp: RsrpVector(self.reported[u].clone()),
                position: Some(self.traces[u].samples[ti].position),
                loads: loads.clone(),
            })
            .collect();
        if let Some(d) = &mut self.dump {
            for r in &reports {
                d.record("e2_report", r)?;
            }
        }

        let period = self.cfg.controllers.rapp_period;
        if t % period == 0 {
            if let RappSource::Policy(policy) = self.rapp {
                let out = {
                    let models = self.rapp_models()?;
                    rapp_step(&models, policy, &self.histories, &self.modes, t, self.cfg.controllers.ranking_ttl)?
                };
                self.modes = out.modes;
                self.publish(out.rankings)?;
            }
            if t > 0 {
                model_refresh(&self.feedback());
            }
        }

        let predicted: Option<Vec<RsrpVector>> = match (self.kind, self.predictors) {
            (ControllerKind::MlAssisted, Some(p)) => Some(
                (0..n_ues)
                    .map(|u| {
                        let s = &self.traces[u].samples[ti];
                        p.rsrp.predict(&s.kinematics, s.mode, s.position)
                    })
                    .collect::<Result<_>>()?,
            ),
            _ => None,
        };
        let out = xapp_step(
            &self.cache,
            &reports,
            &mut self.xapp,
            &self.cfg.controllers,
            predicted.as_deref(),
            t,
        )?;
        debug_assert_eq!(out.missing_reports, 0);

        let mut ho = vec![false; n_ues];
        let mut pp = vec![false; n_ues];
        for c in out.controls {
            if let Some(d) = &mut self.dump {
                d.record("e2_control", &c)?;
            }
            let u = c.ue_id;
            let from = self.serving[u];
            let to = c.target_cell;
            let ok = to != from
                && self.measured[u][ti][to] >= self.cfg.controllers.rsrp_floor_dbm
                && self.counts[to] < self.capacity;
            let mut event = HoEvent {
                tick: t,
                ue_id: u,
                from_cell: from,
                to_cell: to,
                outcome: if ok { HoOutcome::Success } else { HoOutcome::Failure },
                pingpong: false,
            };
            if ok {
                event.pingpong = self.last_success[u]
                    .is_some_and(|(lt, lf, lto)| lf == to && lto == from && t - lt <= self.cfg.pingpong_window);
                self.counts[from] -= 1;
                self.counts[to] += 1;
                self.serving[u] = to;
                self.last_success[u] = Some((t, from, to));
            }
            self.xapp.on_handover(u);
            ho[u] = true;
            pp[u] = event.pingpong;
            self.events.push(event);
        }
        debug_assert_eq!(self.counts.iter().sum::<usize>(), n_ues, "unique association");
        debug_assert!(self.counts.iter().all(|&c| c <= self.capacity), "cell capacity");

        for u in 0..n_ues {
            let s = self.serving[u];
            let raw = &self.measured[u][ti];
            let r = throughput(&self.topology, raw, s, self.counts[s]);
            let util = self.weights.tick_utility(r, ho[u], pp[u]);
            self.utility_acc[u] += util;
            self.utility_total += util;
            self.throughput_sum += r;
            if self.record_rows {
                self.rows.push(TickRow {
                    tick: t,
                    ue_id: u,
                    serving: s,
                    rsrp_serving: raw[s],
                    throughput_mbps: r,
                    ho_flag: ho[u],
                    pp_flag: pp[u],
                });
            }
        }
        for (h, r) in self.histories.iter_mut().zip(&reports) {
            h.push(r);
            h.serving = self.serving[r.ue_id];
        }
        debug_assert!(n_cells == self.counts.len());
        self.tick += 1;
        Ok(())
    }

    fn feedback(&self) -> FeedbackRecord {
        let ue_ticks = (self.tick as usize * self.traces.len()).max(1);
        FeedbackRecord {
            tick: self.tick,
            handovers: self.events.len() as u64,
            failures: self.events.iter().filter(|e| e.outcome == HoOutcome::Failure).count() as u64,
            pingpongs: self.events.iter().filter(|e| e.pingpong).count() as u64,
            mean_throughput_mbps: self.throughput_sum / ue_ticks as f64,
        }
    }

    pub fn finish(mut self) -> Result<SimOutput> {
        self.advance(self.n_ticks)?;
        let mut check = self.events.clone();
        detect_pingpong(&mut check, self.cfg.pingpong_window);
        if check != self.events {
            return Err(Error::InvalidInput("online ping-pong flags disagree with the event log".into()));
        }
        let n_ues = self.traces.len();
        let kpi = KpiRecord::from_events(
            self.kind,
            self.seed,
            n_ues,
            self.n_ticks,
            &self.events,
            self.throughput_sum / (n_ues * self.n_ticks) as f64,
            self.utility_total,
        );
        if let Some(d) = self.dump.take() {
            d.into_inner().flush()?;
        }
        Ok(SimOutput {
            kpi,
            events: self.events,
            rows: self.rows,
            rankings_issued: self.rankings_issued,
        })
    }
}

/// One full run of `kind` on the scenario for `seed`.
pub fn run_simulation(
    cfg: &SimConfig,
    kind: ControllerKind,
    seed: u64,
    models: SimModels,
    weights: UtilityWeights,
) -> Result<SimOutput> {
    Simulation::new(cfg, kind, seed, models, RappSource::None, weights)?.finish()
}
