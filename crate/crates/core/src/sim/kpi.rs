use crate::controllers::ControllerKind;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HoOutcome {
    Success,
    Failure,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoEvent {
    pub tick: u64,
    pub ue_id: usize,
    pub from_cell: usize,
    pub to_cell: usize,
    pub outcome: HoOutcome,
    pub pingpong: bool,
}

/// Flags every successful handover X→Y whose UE's previous successful
/// handover was Y→X at most `window_ticks` earlier. Failed attempts never
/// change association, so they neither flag nor get flagged.
pub fn detect_pingpong(events: &mut [HoEvent], window_ticks: u64) {
    // Last successful (tick, from, to) per UE.
    let mut last: std::collections::HashMap<usize, (u64, usize, usize)> = std::collections::HashMap::new();
    for e in events.iter_mut() {
        e.pingpong = false;
        if e.outcome != HoOutcome::Success {
            continue;
        }
        if let Some(&(t, from, to)) = last.get(&e.ue_id) {
            e.pingpong = from == e.to_cell && to == e.from_cell && e.tick - t <= window_ticks;
        }
        last.insert(e.ue_id, (e.tick, e.from_cell, e.to_cell));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma_pp: f64,
    pub ue_weight: f64,
    /// Throughput is counted in units of this many Mbps.
    pub r_norm_mbps: f64,
}

impl UtilityWeights {
    pub fn from_ppo(cfg: &crate::ppo::PpoConfig) -> Self {
        Self {
            alpha: cfg.alpha,
            beta: cfg.beta,
            gamma_pp: cfg.gamma_pp,
            ue_weight: cfg.ue_weight,
            r_norm_mbps: cfg.r_norm_mbps,
        }
    }

    /// One UE-tick term `α·w·R/R_norm − β·H − γ_pp·PP`.
    pub fn tick_utility(&self, throughput_mbps: f64, ho: bool, pp: bool) -> f64 {
        self.alpha * self.ue_weight * throughput_mbps / self.r_norm_mbps
            - self.beta * f64::from(u8::from(ho))
            - self.gamma_pp * f64::from(u8::from(pp))
    }
}

pub fn episode_utility(throughput_mbps: &[f64], ho: &[bool], pp: &[bool], w: &UtilityWeights) -> Result<f64> {
    let n = throughput_mbps.len();
    if ho.len() != n || pp.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: if ho.len() != n { ho.len() } else { pp.len() },
        });
    }
    Ok((0..n).map(|i| w.tick_utility(throughput_mbps[i], ho[i], pp[i])).sum())
}

/// Per-run KPI summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiRecord {
    pub controller: ControllerKind,
    pub seed: u64,
    pub n_ues: usize,
    pub n_ticks: usize,
    pub mean_throughput_mbps: f64,
    /// Handover attempts (successful or not) per UE per tick.
    pub ho_rate: f64,
    pub ho_attempts: u64,
    pub ho_failures: u64,
    /// Failed attempts over all attempts; 0 without attempts.
    pub ho_failure_fraction: f64,
    pub pingpongs: u64,
    /// Ping-pong handovers as a percentage of successful handovers.
    pub pingpong_pct: f64,
    pub utility: f64,
}

impl KpiRecord {
    /// Derives the counting KPIs from an event log.
    pub fn from_events(
        controller: ControllerKind,
        seed: u64,
        n_ues: usize,
        n_ticks: usize,
        events: &[HoEvent],
        mean_throughput_mbps: f64,
        utility: f64,
    ) -> Self {
        let attempts = events.len() as u64;
        let failures = events.iter().filter(|e| e.outcome == HoOutcome::Failure).count() as u64;
        let successes = attempts - failures;
        let pingpongs = events.iter().filter(|e| e.pingpong).count() as u64;
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        Self {
            controller,
            seed,
            n_ues,
            n_ticks,
            mean_throughput_mbps,
            ho_rate: attempts as f64 / (n_ues * n_ticks).max(1) as f64,
            ho_attempts: attempts,
            ho_failures: failures,
            ho_failure_fraction: ratio(failures, attempts),
            pingpongs,
            pingpong_pct: 100.0 * ratio(pingpongs, successes),
            utility,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn ev(tick: u64, ue: usize, from: usize, to: usize) -> HoEvent {
        HoEvent {
            tick,
            ue_id: ue,
            from_cell: from,
            to_cell: to,
            outcome: HoOutcome::Success,
            pingpong: false,
        }
    }

    fn flags(events: &[HoEvent]) -> Vec<bool> {
        events.iter().map(|e| e.pingpong).collect()
    }

    #[test]
    fn pingpong_examples() {
        let mut e = vec![ev(10, 0, 0, 1), ev(15, 0, 1, 0)];
        detect_pingpong(&mut e, 10);
        assert_eq!(flags(&e), vec![false, true]);

        let mut e = vec![ev(10, 0, 0, 1), ev(25, 0, 1, 0)];
        detect_pingpong(&mut e, 10);
        assert_eq!(flags(&e), vec![false, false]);

        let mut e = vec![ev(1, 0, 0, 1), ev(2, 0, 1, 2), ev(3, 0, 2, 0)];
        detect_pingpong(&mut e, 10);
        assert_eq!(flags(&e), vec![false; 3]);

        // Window bound is inclusive.
        let mut e = vec![ev(10, 0, 0, 1), ev(20, 0, 1, 0)];
        detect_pingpong(&mut e, 10);
        assert_eq!(flags(&e), vec![false, true]);

        // Different UEs never pair.
        let mut e = vec![ev(10, 0, 0, 1), ev(11, 1, 1, 0)];
        detect_pingpong(&mut e, 10);
        assert_eq!(flags(&e), vec![false, false]);
    }

    /// For each event, scan every earlier event of the same UE to find its
    /// latest successful handover and compare.
    fn all_pairs_oracle(events: &[HoEvent], window: u64) -> Vec<bool> {
        (0..events.len())
            .map(|j| {
                let e = &events[j];
                if e.outcome != HoOutcome::Success {
                    return false;
                }
                let mut prev: Option<&HoEvent> = None;
                for i in 0..j {
                    let p = &events[i];
                    if p.ue_id == e.ue_id && p.outcome == HoOutcome::Success {
                        prev = Some(p);
                    }
                }
                prev.is_some_and(|p| p.from_cell == e.to_cell && p.to_cell == e.from_cell && e.tick - p.tick <= window)
            })
            .collect()
    }

    #[test]
    fn pingpong_matches_all_pairs_oracle() {
        let mut r = crate::rng::stream(17, &[]);
        for case in 0..1000 {
            let n_ues = r.random_range(1..4);
            let n_cells = r.random_range(2..5);
            let window = r.random_range(1..15);
            let mut serving: Vec<usize> = (0..n_ues).map(|_| r.random_range(0..n_cells)).collect();
            let mut events = Vec::new();
            let mut tick = 0;
            for _ in 0..r.random_range(0..30) {
                tick += r.random_range(0..6);
                let ue = r.random_range(0..n_ues);
                let to = (serving[ue] + r.random_range(1..n_cells)) % n_cells;
                let ok = r.random_bool(0.85);
                events.push(HoEvent {
                    tick,
                    ue_id: ue,
                    from_cell: serving[ue],
                    to_cell: to,
                    outcome: if ok { HoOutcome::Success } else { HoOutcome::Failure },
                    pingpong: false,
                });
                if ok {
                    serving[ue] = to;
                }
            }
            let expected = all_pairs_oracle(&events, window);
            detect_pingpong(&mut events, window);
            assert_eq!(flags(&events), expected, "case {case}");
        }
    }

    fn w(alpha: f64, beta: f64, gamma_pp: f64) -> UtilityWeights {
        UtilityWeights {
            alpha,
            beta,
            gamma_pp,
            ue_weight: 1.0,
            r_norm_mbps: 1.0,
        }
    }

    #[test]
    fn utility_examples() {
        let tp = [10.0, 20.0, 30.0];
        let ho = [true, false, true];
        let pp = [false, false, true];
        assert_eq!(episode_utility(&tp, &ho, &pp, &w(1.0, 0.0, 0.0)).unwrap(), 60.0);
        assert_eq!(episode_utility(&[0.0], &[true], &[true], &w(1.0, 0.5, 1.0)).unwrap(), -1.5);
        // 60 − 0.5·2 − 1 = 58; doubling α adds exactly 60.
        assert_eq!(episode_utility(&tp, &ho, &pp, &w(1.0, 0.5, 1.0)).unwrap(), 58.0);
        assert_eq!(episode_utility(&tp, &ho, &pp, &w(2.0, 0.5, 1.0)).unwrap(), 118.0);
        assert!(episode_utility(&tp, &ho[..2], &pp, &w(1.0, 0.5, 1.0)).is_err());
    }

    proptest::proptest! {
        #[test]
        fn utility_is_linear_in_weights(
            tp in proptest::collection::vec(0.0f64..200.0, 1..20),
            seed in 0u64..1000,
            a in 0.0f64..3.0, b in 0.0f64..3.0, g in 0.0f64..3.0, k in 0.0f64..4.0,
        ) {
            let mut r = crate::rng::stream(seed, &[]);
            let ho: Vec<bool> = tp.iter().map(|_| r.random_bool(0.3)).collect();
            let pp: Vec<bool> = ho.iter().map(|h| *h && r.random_bool(0.5)).collect();
            let u = |ww: UtilityWeights| episode_utility(&tp, &ho, &pp, &ww).unwrap();
            let base = u(w(a, b, g));
            let parts = u(w(a, 0.0, 0.0)) + u(w(0.0, b, 0.0)) + u(w(0.0, 0.0, g));
            proptest::prop_assert!((base - parts).abs() <= 1e-9 * (1.0 + base.abs()));
            let scaled = u(w(k * a, k * b, k * g));
            proptest::prop_assert!((scaled - k * base).abs() <= 1e-9 * (1.0 + scaled.abs()));
        }
    }

    #[test]
    fn record_counts() {
        let mut events = vec![ev(1, 0, 0, 1), ev(3, 0, 1, 0), ev(5, 1, 2, 3)];
        events[2].outcome = HoOutcome::Failure;
        detect_pingpong(&mut events, 10);
        let k = KpiRecord::from_events(ControllerKind::A3, 9, 2, 10, &events, 12.5, 0.0);
        assert_eq!(k.ho_attempts, 3);
        assert_eq!(k.ho_failures, 1);
        assert_eq!(k.ho_rate, 3.0 / 20.0);
        assert_eq!(k.pingpongs, 1);
        assert_eq!(k.pingpong_pct, 50.0);
        assert!((k.ho_failure_fraction - 1.0 / 3.0).abs() < 1e-15);
    }
}
