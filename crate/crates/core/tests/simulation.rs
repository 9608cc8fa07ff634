use mmahc_core::controllers::ControllerKind;
use mmahc_core::ppo::PpoConfig;
use mmahc_core::sim::{run_simulation, HoOutcome, SimConfig, SimModels, UtilityWeights};
use proptest::prelude::*;
use std::collections::HashMap;

fn weights() -> UtilityWeights {
    UtilityWeights::from_ppo(&PpoConfig::default())
}

fn small(n_ues: usize, n_ticks: usize) -> SimConfig {
    SimConfig {
        n_ues,
        n_ticks,
        ..Default::default()
    }
}

#[test]
fn same_seed_same_output() {
    let cfg = small(30, 60);
    for kind in [ControllerKind::A3, ControllerKind::LoadBalance] {
        let a = run_simulation(&cfg, kind, 5, SimModels::default(), weights()).unwrap();
        let b = run_simulation(&cfg, kind, 5, SimModels::default(), weights()).unwrap();
        assert_eq!(a.kpi, b.kpi);
        assert_eq!(a.events, b.events);
        assert_eq!(a.rows, b.rows);
        let c = run_simulation(&cfg, kind, 6, SimModels::default(), weights()).unwrap();
        assert_ne!(a.rows, c.rows);
    }
}

#[test]
fn learned_controllers_need_models() {
    let cfg = small(5, 20);
    for kind in [ControllerKind::MlAssisted, ControllerKind::Ahc] {
        assert!(run_simulation(&cfg, kind, 1, SimModels::default(), weights()).is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn run_invariants(n_ues in 1usize..40, n_ticks in 2usize..60, seed in any::<u64>(), lb in any::<bool>()) {
        let cfg = small(n_ues, n_ticks);
        let kind = if lb { ControllerKind::LoadBalance } else { ControllerKind::A3 };
        let out = run_simulation(&cfg, kind, seed, SimModels::default(), weights()).unwrap();
        let k = &out.kpi;
        prop_assert_eq!(out.rows.len(), n_ues * n_ticks);
        prop_assert!(k.ho_rate >= 0.0 && k.mean_throughput_mbps >= 0.0);
        prop_assert!((0.0..=100.0).contains(&k.pingpong_pct));
        prop_assert!((0.0..=1.0).contains(&k.ho_failure_fraction));
        prop_assert_eq!(k.ho_attempts as usize, out.events.len());
        let expected_rate = out.events.len() as f64 / (n_ues * n_ticks) as f64;
        prop_assert!((k.ho_rate - expected_rate).abs() < 1e-12);

        // Per tick: every UE is served once and no cell exceeds capacity.
        let mut per_cell: HashMap<(u64, usize), usize> = HashMap::new();
        for r in &out.rows {
            *per_cell.entry((r.tick, r.serving)).or_default() += 1;
            prop_assert!(r.throughput_mbps.is_finite() && r.throughput_mbps >= 0.0);
        }
        prop_assert!(per_cell.values().all(|&c| c <= cfg.capacity()));

        // Rows record the cell after the tick's handovers; replaying the
        // successful handovers from the initial attachment reproduces them.
        let mut serving: HashMap<usize, usize> = HashMap::new();
        for r in out.rows.iter().filter(|r| r.tick == 0) {
            serving.insert(r.ue_id, r.serving);
        }
        for e in out.events.iter().filter(|e| e.tick == 0).rev() {
            serving.insert(e.ue_id, e.from_cell);
        }
        let mut ev = out.events.iter().peekable();
        for t in 0..n_ticks as u64 {
            while let Some(e) = ev.next_if(|e| e.tick == t) {
                prop_assert_eq!(serving[&e.ue_id], e.from_cell);
                if e.outcome == HoOutcome::Success {
                    serving.insert(e.ue_id, e.to_cell);
                }
            }
            for r in out.rows.iter().filter(|r| r.tick == t) {
                prop_assert_eq!(serving[&r.ue_id], r.serving);
            }
        }
    }
}
