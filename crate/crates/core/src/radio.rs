//! Cell topology and the radio channel.
//!
//! Path loss follows the urban-macro NLOS closed form (UE height term dropped
//! for a 1.5 m handset), shadowing is a log-normal process with first-order
//! autoregressive correlation over travelled distance, and throughput is
//! Shannon capacity on wideband SINR with equal intra-cell bandwidth sharing.

use crate::geom::Point;
use crate::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::ops::Deref;

/// Thermal noise power spectral density at 290 K.
pub const THERMAL_NOISE_DBM_PER_HZ: f64 = -174.0;

/// Distances below this are clamped before evaluating path loss.
pub const MIN_DISTANCE_M: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSite {
    pub cell_id: usize,
    pub position: Point,
    pub tx_power_dbm: f64,
    pub coverage_radius_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub sites: Vec<CellSite>,
    pub carrier_ghz: f64,
    pub bandwidth_hz: f64,
    pub shadowing_sigma_db: f64,
    pub noise_figure_db: f64,
}

impl Topology {
    /// Validates and assembles a topology. Cell ids must equal their index.
    pub fn new(
        sites: Vec<CellSite>,
        carrier_ghz: f64,
        bandwidth_hz: f64,
        shadowing_sigma_db: f64,
        noise_figure_db: f64,
    ) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::Empty("topology sites"));
        }
        for (i, s) in sites.iter().enumerate() {
            if s.cell_id != i {
                return Err(Error::InvalidInput(format!(
                    "cell ids must be dense: site at index {i} has id {}",
                    s.cell_id
                )));
            }
            if !s.tx_power_dbm.is_finite() || !(s.coverage_radius_m > 0.0) {
                return Err(Error::InvalidInput(format!("cell {i}: bad power or coverage")));
            }
        }
        if !(carrier_ghz > 0.0) || !(bandwidth_hz > 0.0) || !(shadowing_sigma_db >= 0.0) {
            return Err(Error::InvalidInput("carrier, bandwidth must be > 0 and sigma >= 0".into()));
        }
        Ok(Self {
            sites,
            carrier_ghz,
            bandwidth_hz,
            shadowing_sigma_db,
            noise_figure_db,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.sites.len()
    }

    pub fn with_radio(mut self, carrier_ghz: f64, bandwidth_hz: f64, shadowing_sigma_db: f64) -> Self {
        self.carrier_ghz = carrier_ghz;
        self.bandwidth_hz = bandwidth_hz;
        self.shadowing_sigma_db = shadowing_sigma_db;
        self
    }

    pub fn noise_dbm(&self) -> f64 {
        THERMAL_NOISE_DBM_PER_HZ + 10.0 * self.bandwidth_hz.log10() + self.noise_figure_db
    }

    /// Cells within `factor` coverage radii of `pos`, always including `serving`.
    pub fn admissible_cells(&self, pos: Point, serving: usize, factor: f64) -> Vec<bool> {
        self.sites
            .iter()
            .map(|s| s.cell_id == serving || s.position.distance(pos) <= factor * s.coverage_radius_m)
            .collect()
    }
}

/// Places `n_cells` sites at equal angular spacing on a ring; cell k sits at
/// angle 2πk/n. Radio parameters default to a 2.1 GHz, 20 MHz carrier with
/// 8 dB shadowing and a 9 dB UE noise figure.
pub fn build_ring_topology(n_cells: usize, ring_radius_m: f64, coverage_m: f64, tx_power_dbm: f64) -> Topology {
    assert!(n_cells >= 1, "ring needs at least one cell");
    let sites = (0..n_cells)
        .map(|k| {
            let angle = TAU * k as f64 / n_cells as f64;
            CellSite {
                cell_id: k,
                position: Point::new(ring_radius_m * angle.cos(), ring_radius_m * angle.sin()),
                tx_power_dbm,
                coverage_radius_m: coverage_m,
            }
        })
        .collect();
    Topology {
        sites,
        carrier_ghz: 2.1,
        bandwidth_hz: 20e6,
        shadowing_sigma_db: 8.0,
        noise_figure_db: 9.0,
    }
}

/// Urban-macro NLOS path loss in dB for a distance in meters and a carrier in GHz.
pub fn path_loss_db(dist_m: f64, freq_ghz: f64) -> f64 {
    13.54 + 39.08 * dist_m.max(MIN_DISTANCE_M).log10() + 20.0 * freq_ghz.log10()
}

/// Per-cell RSRP in dBm, indexed by cell id.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RsrpVector(pub Vec<f64>);

impl RsrpVector {
    /// Index of the strongest cell; ties go to the lowest id.
    pub fn best_cell(&self) -> usize {
        let mut best = 0;
        for (c, &r) in self.0.iter().enumerate() {
            if r > self.0[best] {
                best = c;
            }
        }
        best
    }

    pub fn shifted(&self, delta_db: f64) -> RsrpVector {
        RsrpVector(self.0.iter().map(|r| r + delta_db).collect())
    }
}

impl Deref for RsrpVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for RsrpVector {
    fn from(v: Vec<f64>) -> Self {
        RsrpVector(v)
    }
}

/// r_c = P_c − PL(‖ue − site_c‖) + shadow_c.
pub fn rsrp(topology: &Topology, ue_pos: Point, shadow_db: &[f64]) -> RsrpVector {
    assert_eq!(shadow_db.len(), topology.n_cells(), "shadowing length must equal cell count");
    topology
        .sites
        .iter()
        .zip(shadow_db)
        .map(|(site, s)| {
            site.tx_power_dbm - path_loss_db(site.position.distance(ue_pos), topology.carrier_ghz) + s
        })
        .collect::<Vec<_>>()
        .into()
}

/// I.i.d. zero-mean Gaussian dB offsets with standard deviation `sigma_db`.
pub fn sample_shadowing<R: Rng + ?Sized>(rng: &mut R, sigma_db: f64, n_cells: usize) -> Vec<f64> {
    (0..n_cells)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            sigma_db * z
        })
        .collect()
}

/// Temporally correlated per-cell shadowing for one UE.
///
/// Each step the correlation is exp(−d / d_corr) where d is the distance the
/// UE moved, so a stationary UE keeps its shadowing and the marginal
/// distribution stays N(0, sigma²).
#[derive(Debug, Clone, PartialEq)]
pub struct ShadowingProcess {
    sigma_db: f64,
    decorrelation_m: f64,
    values: Vec<f64>,
}

impl ShadowingProcess {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, sigma_db: f64, n_cells: usize, decorrelation_m: f64) -> Self {
        Self {
            sigma_db,
            decorrelation_m,
            values: sample_shadowing(rng, sigma_db, n_cells),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn advance<R: Rng + ?Sized>(&mut self, rng: &mut R, moved_m: f64) {
        let rho = if self.decorrelation_m > 0.0 {
            (-moved_m.max(0.0) / self.decorrelation_m).exp()
        } else {
            0.0
        };
        let innovation = sample_shadowing(rng, self.sigma_db, self.values.len());
        let scale = (1.0 - rho * rho).max(0.0).sqrt();
        for (v, e) in self.values.iter_mut().zip(innovation) {
            *v = rho * *v + scale * e;
        }
    }
}

/// Replays per-tick RSRP along a path, advancing `shadowing` by the distance
/// covered each tick. Entry `t` is the measurement at `path[t]`.
pub fn rsrp_along_path<R: Rng + ?Sized>(
    topology: &Topology,
    path: &[Point],
    rng: &mut R,
    shadowing: &mut ShadowingProcess,
) -> Vec<RsrpVector> {
    let mut out = Vec::with_capacity(path.len());
    for (t, &p) in path.iter().enumerate() {
        if t > 0 {
            shadowing.advance(rng, p.distance(path[t - 1]));
        }
        out.push(rsrp(topology, p, shadowing.values()));
    }
    out
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Wideband SINR (linear) at the serving cell with every other cell interfering.
pub fn sinr(topology: &Topology, rsrp: &RsrpVector, serving: usize) -> f64 {
    let signal = db_to_linear(rsrp[serving]);
    let interference: f64 = rsrp
        .iter()
        .enumerate()
        .filter(|(c, _)| *c != serving)
        .map(|(_, r)| db_to_linear(*r))
        .sum();
    signal / (db_to_linear(topology.noise_dbm()) + interference)
}

/// Shannon rate in Mbps for a linear SINR with the band split `n_coscheduled` ways.
pub fn shannon_mbps(bandwidth_hz: f64, sinr_linear: f64, n_coscheduled: usize) -> f64 {
    let share = bandwidth_hz / n_coscheduled.max(1) as f64;
    share * (1.0 + sinr_linear.max(0.0)).log2() / 1e6
}

pub fn throughput(topology: &Topology, rsrp: &RsrpVector, serving: usize, n_coscheduled: usize) -> f64 {
    shannon_mbps(topology.bandwidth_hz, sinr(topology, rsrp, serving), n_coscheduled)
}
