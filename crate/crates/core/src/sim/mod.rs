//! Tick-driven handover simulation, KPI accounting and multi-seed campaigns.

pub mod campaign;
pub mod engine;
pub mod env;
pub mod kpi;
pub mod output;
pub mod stats;

pub use campaign::{aggregate_runs, run_campaign, run_seed, KpiSummary, SummaryRow, HEADLINE_KPIS, KPI_NAMES};
pub use engine::{run_simulation, RappSource, SimModels, SimOutput, Simulation, TickRow};
pub use env::SimPolicyEnv;
pub use kpi::{detect_pingpong, episode_utility, HoEvent, HoOutcome, KpiRecord, UtilityWeights};
pub use stats::{mean_ci, MeanCi};

use crate::geom::Arena;
use crate::mobility::{generate_trace, mode_population, profile_for, ModeProfile, MobilityMode, UeTrace};
use crate::predictors::dataset::measure_traces;
use crate::radio::{build_ring_topology, RsrpVector, Topology};
use crate::ric::ControllerParams;
use crate::{rng, Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TopologyConfig {
    pub n_cells: usize,
    pub ring_radius_m: f64,
    pub coverage_m: f64,
    pub tx_power_dbm: f64,
    pub carrier_ghz: f64,
    pub bandwidth_hz: f64,
    pub shadowing_sigma_db: f64,
    pub noise_figure_db: f64,
    /// Shadowing decorrelation distance.
    pub decorrelation_m: f64,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            n_cells: 27,
            ring_radius_m: 1000.0,
            coverage_m: 500.0,
            tx_power_dbm: 46.0,
            carrier_ghz: 2.1,
            bandwidth_hz: 20e6,
            shadowing_sigma_db: 8.0,
            noise_figure_db: 9.0,
            decorrelation_m: 50.0,
        }
    }
}

impl TopologyConfig {
    pub fn build(&self) -> Result<Topology> {
        if self.n_cells == 0 {
            return Err(Error::InvalidInput("n_cells must be >= 1".into()));
        }
        if !(self.decorrelation_m > 0.0) {
            return Err(Error::InvalidInput("decorrelation_m must be > 0".into()));
        }
        let ring = build_ring_topology(self.n_cells, self.ring_radius_m, self.coverage_m, self.tx_power_dbm);
        Topology::new(
            ring.sites,
            self.carrier_ghz,
            self.bandwidth_hz,
            self.shadowing_sigma_db,
            self.noise_figure_db,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MobilityConfig {
    pub arena_half_width_m: f64,
    pub tick_s: f64,
    /// Population fractions in mode order PED..UAV.
    pub mix: Vec<f64>,
    pub profiles: Vec<ModeProfile>,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        Self {
            arena_half_width_m: 1500.0,
            tick_s: 0.1,
            mix: vec![1.0 / MobilityMode::COUNT as f64; MobilityMode::COUNT],
            profiles: ModeProfile::defaults(),
        }
    }
}

impl MobilityConfig {
    pub fn arena(&self) -> Arena {
        Arena::centered(self.arena_half_width_m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tick_s > 0.0) || !(self.arena_half_width_m > 0.0) {
            return Err(Error::InvalidInput("tick_s and arena size must be > 0".into()));
        }
        if self.mix.len() != MobilityMode::COUNT {
            return Err(Error::LengthMismatch {
                expected: MobilityMode::COUNT,
                got: self.mix.len(),
            });
        }
        for p in &self.profiles {
            p.validate()?;
        }
        Ok(())
    }
}

/// `2^(−15/4)`.
pub const L3_FILTER_DEFAULT: f64 = 0.074_325_444_687_670_06;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_ues: usize,
    pub n_ticks: usize,
    pub topology: TopologyConfig,
    pub mobility: MobilityConfig,
    pub controllers: ControllerParams,
    pub pingpong_window: u64,
    /// Attached-UE limit per cell; `None` means ⌈2·n_ues/|C|⌉.
    pub cell_capacity: Option<usize>,
    /// Layer-3 filter weight on reported RSRP (`F = (1−a)·F + a·M`); 1
    /// reports raw measurements. The default is filter coefficient k = 15,
    /// `a = 2^(−k/4)`.
    pub l3_filter_coeff: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_ues: 100,
            n_ticks: 200,
            topology: TopologyConfig::default(),
            mobility: MobilityConfig::default(),
            controllers: ControllerParams::default(),
            pingpong_window: 10,
            cell_capacity: None,
            l3_filter_coeff: L3_FILTER_DEFAULT,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_ues == 0 {
            return Err(Error::InvalidInput("n_ues must be >= 1".into()));
        }
        if self.n_ticks < 2 {
            return Err(Error::InvalidInput("n_ticks must be >= 2".into()));
        }
        if !(self.l3_filter_coeff > 0.0 && self.l3_filter_coeff <= 1.0) {
            return Err(Error::InvalidInput("l3_filter_coeff must be in (0, 1]".into()));
        }
        if self.cell_capacity == Some(0) {
            return Err(Error::InvalidInput("cell_capacity must be >= 1".into()));
        }
        self.mobility.validate()?;
        self.controllers.validate()?;
        self.topology.build().map(|_| ())
    }

    pub fn capacity(&self) -> usize {
        self.cell_capacity
            .unwrap_or_else(|| (2 * self.n_ues).div_ceil(self.topology.n_cells).max(1))
    }
}

/// Per-UE traces for one run seed. UE `i` draws from its own stream, so a
/// UE's trace does not depend on how many other UEs exist.
pub fn generate_population(cfg: &SimConfig, seed: u64) -> Result<Vec<UeTrace>> {
    cfg.mobility.validate()?;
    let modes = mode_population(cfg.n_ues, &cfg.mobility.mix)?;
    let arena = cfg.mobility.arena();
    Ok(modes
        .iter()
        .enumerate()
        .map(|(i, &m)| UeTrace {
            ue_id: i,
            samples: generate_trace(
                &mut rng::stream(seed, &[rng::tag::MOBILITY, i as u64]),
                &profile_for(&cfg.mobility.profiles, m),
                cfg.n_ticks,
                cfg.mobility.tick_s,
                &arena,
            ),
        })
        .collect())
}

/// Scenario seed of training run `run`; disjoint from campaign seeds.
pub fn training_seed(base: u64, run: usize) -> u64 {
    rng::derive_seed(base, &[rng::tag::TRAIN, run as u64])
}

/// Traces and their per-tick RSRP for `n_runs` training scenarios, with UE
/// ids renumbered `run·n_ues + i`. Measurements use the same shadowing
/// streams as the simulator.
pub fn training_corpus(cfg: &SimConfig, base: u64, n_runs: usize) -> Result<(Vec<UeTrace>, Vec<Vec<RsrpVector>>)> {
    let topology = cfg.topology.build()?;
    let mut traces = Vec::with_capacity(n_runs * cfg.n_ues);
    let mut measured = Vec::with_capacity(n_runs * cfg.n_ues);
    for run in 0..n_runs {
        let seed = training_seed(base, run);
        let pop = generate_population(cfg, seed)?;
        measured.extend(measure_traces(&topology, &pop, seed, cfg.topology.decorrelation_m));
        traces.extend(pop.into_iter().map(|mut t| {
            t.ue_id += run * cfg.n_ues;
            t
        }));
    }
    Ok((traces, measured))
}
