//! Multi-seed campaigns and per-controller aggregation.

use super::engine::{run_simulation, SimModels};
use super::kpi::{KpiRecord, UtilityWeights};
use super::stats::{mean_ci, MeanCi};
use super::SimConfig;
use crate::controllers::ControllerKind;
use crate::{rng, Error, Result};
use rayon::prelude::*;

/// Scenario seed of run `run` in a campaign seeded with `base`.
pub fn run_seed(base: u64, run: usize) -> u64 {
    rng::derive_seed(base, &[rng::tag::CAMPAIGN, run as u64])
}

/// Runs every controller on `n_runs` scenarios. Run `r` uses the same
/// scenario seed for all controllers. Records come back ordered by controller
/// (as given), then run, independently of `workers`.
#[allow(clippy::too_many_arguments)]
pub fn run_campaign(
    cfg: &SimConfig,
    controllers: &[ControllerKind],
    n_runs: usize,
    base_seed: u64,
    models: SimModels,
    weights: UtilityWeights,
    workers: usize,
) -> Result<Vec<KpiRecord>> {
    if n_runs == 0 || controllers.is_empty() {
        return Err(Error::Empty("campaign runs"));
    }
    cfg.validate()?;
    let jobs: Vec<(ControllerKind, usize)> = controllers
        .iter()
        .flat_map(|&c| (0..n_runs).map(move |r| (c, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidInput(format!("worker pool: {e}")))?;
    pool.install(|| {
        jobs.par_iter()
            .map(|&(c, r)| {
                let seed = run_seed(base_seed, r);
                let mut out = run_simulation(cfg, c, seed, models, weights)?;
                log::debug!("{c} run {r}: {:.2} Mbps, HO rate {:.4}", out.kpi.mean_throughput_mbps, out.kpi.ho_rate);
                out.rows.clear();
                Ok(out.kpi)
            })
            .collect()
    })
}

/// The headline KPIs compared across controllers.
pub const HEADLINE_KPIS: [&str; 3] = ["mean_throughput_mbps", "ho_rate", "pingpong_pct"];

pub const KPI_NAMES: [&str; 5] = [
    "mean_throughput_mbps",
    "ho_rate",
    "pingpong_pct",
    "ho_failure_fraction",
    "utility",
];

fn kpi_value(r: &KpiRecord, kpi: &str) -> f64 {
    match kpi {
        "mean_throughput_mbps" => r.mean_throughput_mbps,
        "ho_rate" => r.ho_rate,
        "pingpong_pct" => r.pingpong_pct,
        "ho_failure_fraction" => r.ho_failure_fraction,
        "utility" => r.utility,
        _ => unreachable!("unknown KPI {kpi}"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub controller: ControllerKind,
    pub kpi: &'static str,
    pub ci: MeanCi,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct KpiSummary {
    pub rows: Vec<SummaryRow>,
}

impl KpiSummary {
    pub fn get(&self, controller: ControllerKind, kpi: &str) -> Option<&MeanCi> {
        self.rows
            .iter()
            .find(|r| r.controller == controller && r.kpi == kpi)
            .map(|r| &r.ci)
    }
}

/// Mean and 95% CI of every KPI per controller, in first-seen controller
/// order.
pub fn aggregate_runs(records: &[KpiRecord]) -> Result<KpiSummary> {
    let mut order: Vec<ControllerKind> = Vec::new();
    for r in records {
        if !order.contains(&r.controller) {
            order.push(r.controller);
        }
    }
    let mut rows = Vec::new();
    for c in order {
        let runs: Vec<&KpiRecord> = records.iter().filter(|r| r.controller == c).collect();
        for kpi in KPI_NAMES {
            let values: Vec<f64> = runs.iter().map(|r| kpi_value(r, kpi)).collect();
            rows.push(SummaryRow {
                controller: c,
                kpi,
                ci: mean_ci(&values)?,
            });
        }
    }
    if rows.is_empty() {
        return Err(Error::Empty("KPI records"));
    }
    Ok(KpiSummary { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ppo::PpoConfig;

    #[test]
    fn campaign_is_independent_of_worker_count() {
        let cfg = SimConfig {
            n_ues: 12,
            n_ticks: 40,
            ..Default::default()
        };
        let w = UtilityWeights::from_ppo(&PpoConfig::default());
        let kinds = [ControllerKind::A3, ControllerKind::LoadBalance];
        let one = run_campaign(&cfg, &kinds, 3, 11, SimModels::default(), w, 1).unwrap();
        let four = run_campaign(&cfg, &kinds, 3, 11, SimModels::default(), w, 4).unwrap();
        assert_eq!(one, four);
        assert_eq!(one.len(), 6);
        assert_eq!(one[0].seed, one[3].seed);
        let s = aggregate_runs(&one).unwrap();
        assert_eq!(s.rows.len(), 2 * KPI_NAMES.len());
        let tp = s.get(ControllerKind::A3, "mean_throughput_mbps").unwrap();
        let manual: f64 = one[..3].iter().map(|r| r.mean_throughput_mbps).sum::<f64>() / 3.0;
        assert!((tp.mean - manual).abs() < 1e-12);
        assert_eq!(tp.n, 3);
    }
}
