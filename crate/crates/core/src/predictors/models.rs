//! Trained rApp predictors and their checkpoints.

use super::dataset::{
    build_classifier_dataset, build_rsrp_dataset, build_traj_dataset, heading_at, rsrp_features, traj_features,
    window_features, RsrpSample, TrajSample,
};
use super::forest::{train_forest, ForestModel, ForestParams};
use super::knn::KnnClassifier;
use super::metrics::{eval_classification, eval_regression, ClassificationReport, RegressionReport};
use crate::geom::Point;
use crate::mobility::{Kinematics, MobilityMode, UeTrace};
use crate::radio::RsrpVector;
use crate::rng;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

pub const CLASSIFIER_FORMAT_VERSION: u32 = 1;
pub const CLASSIFIER_FILE: &str = "classifier.json";
pub const TRAJ_FILE: &str = "traj_forest.bin";
pub const RSRP_FILE: &str = "rsrp_forest.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictorConfig {
    pub window: usize,
    pub k: usize,
    pub prev_mode_weight: f64,
    pub traj_forest: ForestParams,
    pub rsrp_forest: ForestParams,
    pub test_fraction: f64,
    /// Cap on RSRP training rows (evenly strided) to bound training time.
    pub max_rsrp_samples: usize,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            window: 10,
            k: 5,
            prev_mode_weight: 0.1,
            traj_forest: ForestParams::default(),
            rsrp_forest: ForestParams {
                max_depth: 8,
                ..ForestParams::default()
            },
            test_fraction: 0.2,
            max_rsrp_samples: 40_000,
        }
    }
}

/// k-NN classifier over kinematic windows with self-feedback of its previous
/// output at inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeClassifier {
    pub format_version: u32,
    pub window: usize,
    pub knn: KnnClassifier,
}

impl ModeClassifier {
    pub fn train(traces: &[UeTrace], cfg: &PredictorConfig) -> Result<Self> {
        let data = build_classifier_dataset(traces, cfg.window);
        if data.skipped > 0 {
            log::info!("classifier dataset: skipped {} short traces", data.skipped);
        }
        Ok(Self {
            format_version: CLASSIFIER_FORMAT_VERSION,
            window: cfg.window,
            knn: KnnClassifier::fit(&data.samples, cfg.k, cfg.prev_mode_weight)?,
        })
    }

    /// Classifies the last `window` kinematic samples.
    pub fn classify(&self, recent: &[Kinematics], prev: MobilityMode) -> Result<MobilityMode> {
        if recent.len() < self.window {
            return Err(Error::InsufficientHistory {
                needed: self.window,
                got: recent.len(),
            });
        }
        let w = &recent[recent.len() - self.window..];
        self.knn.classify(&window_features(w, prev))
    }

    /// Runs along a trace the way the rApp would: each window is classified
    /// with the previous output as its previous-mode input, starting from PED.
    /// Returns (predictions, labels) aligned with the dataset windows.
    pub fn classify_trace(&self, trace: &UeTrace) -> Result<(Vec<MobilityMode>, Vec<MobilityMode>)> {
        let kin: Vec<Kinematics> = trace.samples.iter().map(|s| s.kinematics).collect();
        let mut prev = MobilityMode::Ped;
        let mut preds = Vec::new();
        let mut labels = Vec::new();
        for s in 0..kin.len().saturating_sub(self.window) {
            let m = self.knn.classify(&window_features(&kin[s + 1..=s + self.window], prev))?;
            preds.push(m);
            labels.push(trace.samples[s + self.window].mode);
            prev = m;
        }
        Ok((preds, labels))
    }
}

/// Next-position regressor. The forest learns the one-tick step expressed in
/// the UE's heading frame (along-track, cross-track) from `[v, a, mode, x, y]`;
/// the step is rotated back and added to the current position.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPredictor {
    pub forest: ForestModel,
}

impl TrajectoryPredictor {
    pub fn train(samples: &[TrajSample], params: &ForestParams, seed: u64) -> Result<Self> {
        let x: Vec<Vec<f64>> = samples.iter().map(|s| s.features.clone()).collect();
        let y: Vec<Vec<f64>> = samples
            .iter()
            .map(|s| {
                let here = Point::new(s.features[3], s.features[4]);
                let step = (Point::new(s.target[0], s.target[1]) - here).rotate(-s.heading);
                vec![step.x, step.y]
            })
            .collect();
        Ok(Self {
            forest: train_forest(&x, &y, params, rng::derive_seed(seed, &[1]))?,
        })
    }

    pub fn predict(&self, features: &[f64], heading: f64) -> Result<Point> {
        let step = self.forest.predict(features)?;
        let here = Point::new(features[3], features[4]);
        Ok(here + Point::new(step[0], step[1]).rotate(heading))
    }

    pub fn predict_from_history(&self, k: &Kinematics, mode: MobilityMode, positions: &[Point]) -> Result<Point> {
        let t = positions.len().checked_sub(1).ok_or(Error::Empty("position history"))?;
        self.predict(&traj_features(k, mode, positions[t]), heading_at(positions, t))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RsrpPredictor {
    pub forest: ForestModel,
}

impl RsrpPredictor {
    pub fn train(samples: &[RsrpSample], params: &ForestParams, seed: u64) -> Result<Self> {
        let x: Vec<Vec<f64>> = samples.iter().map(|s| s.features.clone()).collect();
        let y: Vec<Vec<f64>> = samples.iter().map(|s| s.target.clone()).collect();
        Ok(Self {
            forest: train_forest(&x, &y, params, rng::derive_seed(seed, &[2]))?,
        })
    }

    pub fn predict(&self, k: &Kinematics, mode: MobilityMode, pos: Point) -> Result<RsrpVector> {
        Ok(RsrpVector(self.forest.predict(&rsrp_features(k, mode, pos))?))
    }

    pub fn n_cells(&self) -> usize {
        self.forest.n_outputs
    }
}

/// The three predictors the rApp loads at startup.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorBundle {
    pub classifier: ModeClassifier,
    pub trajectory: TrajectoryPredictor,
    pub rsrp: RsrpPredictor,
}

impl PredictorBundle {
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        serde_json::to_writer(BufWriter::new(File::create(dir.join(CLASSIFIER_FILE))?), &self.classifier)?;
        self.trajectory
            .forest
            .write_to(BufWriter::new(File::create(dir.join(TRAJ_FILE))?))?;
        self.rsrp.forest.write_to(BufWriter::new(File::create(dir.join(RSRP_FILE))?))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let classifier: ModeClassifier = serde_json::from_reader(BufReader::new(File::open(dir.join(CLASSIFIER_FILE))?))?;
        if classifier.format_version != CLASSIFIER_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: classifier.format_version,
                expected: CLASSIFIER_FORMAT_VERSION,
            });
        }
        let trajectory = TrajectoryPredictor {
            forest: ForestModel::read_from(BufReader::new(File::open(dir.join(TRAJ_FILE))?))?,
        };
        let rsrp = RsrpPredictor {
            forest: ForestModel::read_from(BufReader::new(File::open(dir.join(RSRP_FILE))?))?,
        };
        Ok(Self {
            classifier,
            trajectory,
            rsrp,
        })
    }

    pub fn exists(dir: &Path) -> bool {
        [CLASSIFIER_FILE, TRAJ_FILE, RSRP_FILE].iter().all(|f| dir.join(f).is_file())
    }
}

/// Held-out scores in the order the predictors are reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorReport {
    pub n_train_traces: usize,
    pub n_test_traces: usize,
    pub classification: ClassificationReport,
    pub trajectory: RegressionReport,
    pub persistence: RegressionReport,
    pub rsrp: RegressionReport,
}

/// Every `stride`-th element so that at most `cap` remain.
fn strided<T: Clone>(v: Vec<T>, cap: usize) -> Vec<T> {
    if cap == 0 || v.len() <= cap {
        return v;
    }
    let stride = v.len().div_ceil(cap);
    v.into_iter().step_by(stride).collect()
}

/// Trains all three predictors on the training split and scores them on
/// the held-out traces. `measurements[i]` is the per-tick RSRP along
/// `traces[i]`.
pub fn train_and_evaluate(
    traces: &[UeTrace],
    measurements: &[Vec<RsrpVector>],
    cfg: &PredictorConfig,
    seed: u64,
) -> Result<(PredictorBundle, PredictorReport)> {
    if traces.len() != measurements.len() {
        return Err(Error::LengthMismatch {
            expected: traces.len(),
            got: measurements.len(),
        });
    }
    if traces.len() < 2 {
        return Err(Error::InvalidInput("need at least two traces to split train/test".into()));
    }
    let (train_idx, test_idx) = super::dataset::split_by_trace(traces.len(), cfg.test_fraction, seed);
    let pick = |idx: &[usize]| -> (Vec<UeTrace>, Vec<Vec<RsrpVector>>) {
        (
            idx.iter().map(|&i| traces[i].clone()).collect(),
            idx.iter().map(|&i| measurements[i].clone()).collect(),
        )
    };
    let (train_tr, train_meas) = pick(&train_idx);
    let (test_tr, test_meas) = pick(&test_idx);

    let classifier = ModeClassifier::train(&train_tr, cfg)?;
    let trajectory = TrajectoryPredictor::train(&build_traj_dataset(&train_tr), &cfg.traj_forest, seed)?;
    let rsrp_train = strided(build_rsrp_dataset(&train_tr, &train_meas), cfg.max_rsrp_samples);
    let rsrp = RsrpPredictor::train(&rsrp_train, &cfg.rsrp_forest, seed)?;

    let mut preds = Vec::new();
    let mut labels = Vec::new();
    for t in &test_tr {
        let (p, l) = classifier.classify_trace(t)?;
        preds.extend(p);
        labels.extend(l);
    }
    let classification = eval_classification(&preds, &labels)?;

    let test_traj = build_traj_dataset(&test_tr);
    let mut traj_pred = Vec::with_capacity(test_traj.len());
    let mut persist = Vec::with_capacity(test_traj.len());
    let mut traj_true = Vec::with_capacity(test_traj.len());
    for s in &test_traj {
        let p = trajectory.predict(&s.features, s.heading)?;
        traj_pred.push(vec![p.x, p.y]);
        persist.push(vec![s.features[3], s.features[4]]);
        traj_true.push(s.target.clone());
    }

    let test_rsrp = build_rsrp_dataset(&test_tr, &test_meas);
    let mut rsrp_pred = Vec::with_capacity(test_rsrp.len());
    let mut rsrp_true = Vec::with_capacity(test_rsrp.len());
    for s in &test_rsrp {
        rsrp_pred.push(rsrp.forest.predict(&s.features)?);
        rsrp_true.push(s.target.clone());
    }

    let report = PredictorReport {
        n_train_traces: train_tr.len(),
        n_test_traces: test_tr.len(),
        classification,
        trajectory: eval_regression(&traj_pred, &traj_true)?,
        persistence: eval_regression(&persist, &traj_true)?,
        rsrp: eval_regression(&rsrp_pred, &rsrp_true)?,
    };
    Ok((
        PredictorBundle {
            classifier,
            trajectory,
            rsrp,
        },
        report,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Arena;
    use crate::mobility::{generate_trace, ModeProfile};
    use crate::predictors::dataset::measure_traces;
    use crate::radio::build_ring_topology;

    fn small_corpus(per_mode: usize, len: usize) -> Vec<UeTrace> {
        let mut out = Vec::new();
        for (mi, m) in MobilityMode::ALL.iter().enumerate() {
            for j in 0..per_mode {
                let ue_id = mi * per_mode + j;
                out.push(UeTrace {
                    ue_id,
                    samples: generate_trace(
                        &mut rng::stream(77, &[ue_id as u64]),
                        &ModeProfile::default_for(*m),
                        len,
                        0.1,
                        &Arena::centered(1500.0),
                    ),
                });
            }
        }
        out
    }

    fn small_cfg() -> PredictorConfig {
        let f = ForestParams {
            n_trees: 5,
            max_depth: 8,
            min_leaf: 2,
            ..Default::default()
        };
        PredictorConfig {
            traj_forest: f.clone(),
            rsrp_forest: f,
            ..Default::default()
        }
    }

    #[test]
    fn bundle_round_trip_and_report_shapes() {
        let traces = small_corpus(3, 60);
        let topo = build_ring_topology(27, 1000.0, 500.0, 46.0);
        let meas = measure_traces(&topo, &traces, 5, 50.0);
        let (bundle, report) = train_and_evaluate(&traces, &meas, &small_cfg(), 1).unwrap();
        assert_eq!(report.classification.confusion.len(), 7);
        let total: usize = report.classification.confusion.iter().flatten().sum();
        assert_eq!(total, report.n_test_traces * 50);
        assert_eq!(bundle.rsrp.n_cells(), 27);

        let dir = std::env::temp_dir().join(format!("mmahc-bundle-{}", std::process::id()));
        bundle.save(&dir).unwrap();
        assert!(PredictorBundle::exists(&dir));
        let back = PredictorBundle::load(&dir).unwrap();
        assert_eq!(back, bundle);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn classifier_needs_full_window() {
        let traces = small_corpus(1, 30);
        let c = ModeClassifier::train(&traces, &small_cfg()).unwrap();
        let few = vec![Kinematics::default(); 4];
        assert!(c.classify(&few, MobilityMode::Ped).is_err());
    }
}
