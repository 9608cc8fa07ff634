use crate::geom::Point;
use crate::mobility::{Kinematics, MobilityMode, UeTrace};
use crate::radio::{rsrp_along_path, RsrpVector, ShadowingProcess, Topology};
use crate::rng;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

/// Length of the classifier feature vector: mean/std of four kinematic
/// channels plus the previous-mode index.
pub const CLASSIFIER_FEATURES: usize = 9;
pub const TRAJ_FEATURES: usize = 5;
pub const RSRP_FEATURES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSample {
    pub features: Vec<f64>,
    pub label: MobilityMode,
}

/// `features = [v, a, mode_index, x, y]`, `target = [x', y']`. `heading` is
/// the direction of the most recent displacement, used to express the step
/// in the UE's own frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajSample {
    pub features: Vec<f64>,
    pub heading: f64,
    pub target: Vec<f64>,
}

/// `features = [v, a, x, y, mode_index]`, `target` = next-tick RSRP per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsrpSample {
    pub features: Vec<f64>,
    pub target: Vec<f64>,
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Summary statistics of a kinematic window followed by the previous mode.
pub fn window_features(window: &[Kinematics], prev_mode: MobilityMode) -> Vec<f64> {
    let mut f = Vec::with_capacity(CLASSIFIER_FEATURES);
    let channels: [fn(&Kinematics) -> f64; 4] = [|k| k.speed, |k| k.accel, |k| k.jerk, |k| k.bearing_rate];
    for ch in channels {
        let (m, s) = mean_std(window.iter().map(ch));
        f.push(m);
        f.push(s);
    }
    f.push(prev_mode.index() as f64);
    f
}

#[derive(Debug, Clone, Default)]
pub struct ClassifierDataset {
    pub samples: Vec<ClassifierSample>,
    /// Traces too short for a single window.
    pub skipped: usize,
}

/// Stride-1 sliding windows of `window` kinematic samples.
///
/// A trace of length L yields L − W samples. Window `s` covers samples
/// `s+1 ..= s+W`, is labelled with the mode at its last sample, and carries
/// the true mode at `s` as the previous-mode feature.
pub fn build_classifier_dataset(traces: &[UeTrace], window: usize) -> ClassifierDataset {
    let mut out = ClassifierDataset::default();
    for t in traces {
        let len = t.samples.len();
        if len < window + 1 {
            out.skipped += 1;
            continue;
        }
        let kin: Vec<Kinematics> = t.samples.iter().map(|s| s.kinematics).collect();
        for s in 0..len - window {
            out.samples.push(ClassifierSample {
                features: window_features(&kin[s + 1..=s + window], t.samples[s].mode),
                label: t.samples[s + window].mode,
            });
        }
    }
    out
}

/// Direction of the latest non-zero displacement ending at or before `t`.
pub fn heading_at(positions: &[Point], t: usize) -> f64 {
    (1..=t.min(positions.len().saturating_sub(1)))
        .rev()
        .map(|k| positions[k] - positions[k - 1])
        .find(|d| d.norm() > 1e-9)
        .map(|d| d.heading())
        .unwrap_or(0.0)
}

pub fn traj_features(k: &Kinematics, mode: MobilityMode, pos: Point) -> Vec<f64> {
    vec![k.speed, k.accel, mode.index() as f64, pos.x, pos.y]
}

pub fn rsrp_features(k: &Kinematics, mode: MobilityMode, pos: Point) -> Vec<f64> {
    vec![k.speed, k.accel, pos.x, pos.y, mode.index() as f64]
}

pub fn build_traj_dataset(traces: &[UeTrace]) -> Vec<TrajSample> {
    let mut out = Vec::new();
    for t in traces {
        let pos = t.positions();
        for i in 1..pos.len().saturating_sub(1) {
            let s = &t.samples[i];
            out.push(TrajSample {
                features: traj_features(&s.kinematics, s.mode, s.position),
                heading: heading_at(&pos, i),
                target: vec![pos[i + 1].x, pos[i + 1].y],
            });
        }
    }
    out
}

/// Per-tick RSRP along each trace, with a shadowing stream per UE derived
/// from `seed`.
pub fn measure_traces(
    topology: &Topology,
    traces: &[UeTrace],
    seed: u64,
    decorrelation_m: f64,
) -> Vec<Vec<RsrpVector>> {
    traces
        .iter()
        .map(|t| {
            let mut s = rng::stream(seed, &[rng::tag::SHADOWING, t.ue_id as u64]);
            let mut shadow =
                ShadowingProcess::new(&mut s, topology.shadowing_sigma_db, topology.n_cells(), decorrelation_m);
            rsrp_along_path(topology, &t.positions(), &mut s, &mut shadow)
        })
        .collect()
}

pub fn build_rsrp_dataset(traces: &[UeTrace], measurements: &[Vec<RsrpVector>]) -> Vec<RsrpSample> {
    let mut out = Vec::new();
    for (t, meas) in traces.iter().zip(measurements) {
        for i in 0..t.samples.len().saturating_sub(1) {
            let s = &t.samples[i];
            out.push(RsrpSample {
                features: rsrp_features(&s.kinematics, s.mode, s.position),
                target: meas[i + 1].0.clone(),
            });
        }
    }
    out
}

/// Shuffles trace indices and splits off `test_fraction` of whole traces.
pub fn split_by_trace(n_traces: usize, test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n_traces).collect();
    idx.shuffle(&mut rng::stream(seed, &[rng::tag::SPLIT]));
    let n_test = ((n_traces as f64) * test_fraction).round() as usize;
    let test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    train.sort_unstable();
    let mut test = test;
    test.sort_unstable();
    (train, test)
}
