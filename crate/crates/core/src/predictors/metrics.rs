use crate::mobility::MobilityMode;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    pub per_class: Vec<ClassScores>,
    /// `confusion[true][pred]`.
    pub confusion: Vec<Vec<usize>>,
}

pub fn eval_classification(preds: &[MobilityMode], labels: &[MobilityMode]) -> Result<ClassificationReport> {
    if preds.is_empty() {
        return Err(Error::Empty("classification predictions"));
    }
    if preds.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: labels.len(),
            got: preds.len(),
        });
    }
    let k = MobilityMode::COUNT;
    let mut confusion = vec![vec![0usize; k]; k];
    for (p, l) in preds.iter().zip(labels) {
        confusion[l.index()][p.index()] += 1;
    }
    let correct: usize = (0..k).map(|i| confusion[i][i]).sum();
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let per_class = (0..k)
        .map(|c| {
            let tp = confusion[c][c];
            let predicted: usize = (0..k).map(|r| confusion[r][c]).sum();
            let actual: usize = confusion[c].iter().sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, actual);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassScores {
                precision,
                recall,
                f1,
                support: actual,
            }
        })
        .collect();
    Ok(ClassificationReport {
        accuracy: correct as f64 / preds.len() as f64,
        per_class,
        confusion,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub rmse: f64,
    pub mae_per_dim: Vec<f64>,
    /// `None` where either side is constant.
    pub pearson_per_dim: Vec<Option<f64>>,
    /// Mean of (pred − target) over all entries.
    pub mean_bias: f64,
    pub mean_pred: f64,
    pub mean_target: f64,
}

pub fn eval_regression(preds: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<RegressionReport> {
    if preds.is_empty() {
        return Err(Error::Empty("regression predictions"));
    }
    if preds.len() != targets.len() {
        return Err(Error::LengthMismatch {
            expected: targets.len(),
            got: preds.len(),
        });
    }
    let dim = targets[0].len();
    if let Some(bad) = preds.iter().chain(targets).find(|r| r.len() != dim) {
        return Err(Error::LengthMismatch {
            expected: dim,
            got: bad.len(),
        });
    }
    let n = preds.len() as f64;
    let mut sse = 0.0;
    let mut sum_err = 0.0;
    let mut sum_pred = 0.0;
    let mut sum_target = 0.0;
    let mut mae = vec![0.0; dim];
    for (p, t) in preds.iter().zip(targets) {
        for d in 0..dim {
            let e = p[d] - t[d];
            sse += e * e;
            sum_err += e;
            sum_pred += p[d];
            sum_target += t[d];
            mae[d] += e.abs();
        }
    }
    mae.iter_mut().for_each(|m| *m /= n);
    let pearson = (0..dim)
        .map(|d| {
            let mp = preds.iter().map(|p| p[d]).sum::<f64>() / n;
            let mt = targets.iter().map(|t| t[d]).sum::<f64>() / n;
            let (mut cov, mut vp, mut vt) = (0.0, 0.0, 0.0);
            for (p, t) in preds.iter().zip(targets) {
                let a = p[d] - mp;
                let b = t[d] - mt;
                cov += a * b;
                vp += a * a;
                vt += b * b;
            }
            if vp <= 0.0 || vt <= 0.0 {
                None
            } else {
                Some(cov / (vp.sqrt() * vt.sqrt()))
            }
        })
        .collect();
    let total = n * dim as f64;
    Ok(RegressionReport {
        rmse: (sse / total).sqrt(),
        mae_per_dim: mae,
        pearson_per_dim: pearson,
        mean_bias: sum_err / total,
        mean_pred: sum_pred / total,
        mean_target: sum_target / total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use MobilityMode::*;

    #[test]
    fn perfect_classification() {
        let l = vec![Ped, Car, Car, Train, Uav];
        let r = eval_classification(&l, &l).unwrap();
        assert_eq!(r.accuracy, 1.0);
        for (c, s) in r.per_class.iter().enumerate() {
            if s.support > 0 {
                assert_eq!(s.f1, 1.0);
            }
            for (p, &v) in r.confusion[c].iter().enumerate() {
                if p != c {
                    assert_eq!(v, 0);
                }
            }
        }
    }

    #[test]
    fn one_error_in_three() {
        let r = eval_classification(&[Ped, Car, Bus], &[Ped, Car, Car]).unwrap();
        assert!((r.accuracy - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ten_sample_fixture_hand_tally() {
        // Hand-tallied confusion matrix (rows true, cols pred):
        //   PED: 3 -> PED, 1 -> CYC        CYC: 2 -> CYC, 1 -> PED
        //   CAR: 2 -> CAR, 1 -> BUS
        let labels = [Ped, Ped, Ped, Ped, Cyclist, Cyclist, Cyclist, Car, Car, Car];
        let preds = [Ped, Ped, Ped, Cyclist, Cyclist, Cyclist, Ped, Car, Car, Bus];
        let r = eval_classification(&preds, &labels).unwrap();
        assert!((r.accuracy - 0.7).abs() < 1e-15);
        assert_eq!(r.confusion[Ped.index()][Ped.index()], 3);
        assert_eq!(r.confusion[Ped.index()][Cyclist.index()], 1);
        assert_eq!(r.confusion[Cyclist.index()][Ped.index()], 1);
        assert_eq!(r.confusion[Car.index()][Bus.index()], 1);
        let ped = r.per_class[Ped.index()];
        assert!((ped.precision - 0.75).abs() < 1e-15);
        assert!((ped.recall - 0.75).abs() < 1e-15);
        let cyc = r.per_class[Cyclist.index()];
        assert!((cyc.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((cyc.recall - 2.0 / 3.0).abs() < 1e-15);
        let car = r.per_class[Car.index()];
        assert_eq!(car.precision, 1.0);
        assert!((car.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((car.f1 - 0.8).abs() < 1e-12);
        let bus = r.per_class[Bus.index()];
        assert_eq!((bus.precision, bus.recall, bus.f1), (0.0, 0.0, 0.0));
        let total: usize = r.confusion.iter().flatten().sum();
        assert_eq!(total, 10);
    }

    #[test]
    fn classification_errors() {
        assert!(eval_classification(&[], &[]).is_err());
        assert!(eval_classification(&[Ped], &[Ped, Car]).is_err());
    }

    #[test]
    fn regression_identity_and_offset() {
        let t: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let r = eval_regression(&t, &t).unwrap();
        assert_eq!(r.rmse, 0.0);
        assert!(r.pearson_per_dim.iter().all(|p| (p.unwrap() - 1.0).abs() < 1e-12));

        let shifted: Vec<Vec<f64>> = t.iter().map(|r| r.iter().map(|v| v + 3.0).collect()).collect();
        let r = eval_regression(&shifted, &t).unwrap();
        assert!((r.rmse - 3.0).abs() < 1e-12);
        assert!(r.mae_per_dim.iter().all(|m| (m - 3.0).abs() < 1e-12));
        assert!((r.mean_bias - 3.0).abs() < 1e-12);
        assert!(r.pearson_per_dim.iter().all(|p| (p.unwrap() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn five_point_hand_calculation() {
        // errors: 1, -1, 2, 0, -2 -> SSE 10, RMSE sqrt(2), MAE 1.2.
        // pearson by hand: t = 1..5 (mean 3), p = 2,1,5,4,3 (mean 3)
        // cov = (-2)(-1)+(-1)(-2)+0*2+1*1+2*0 = 5; var_t = 10; var_p = 10 -> 0.5
        let t: Vec<Vec<f64>> = (1..=5).map(|v| vec![v as f64]).collect();
        let p: Vec<Vec<f64>> = [2.0, 1.0, 5.0, 4.0, 3.0].iter().map(|v| vec![*v]).collect();
        let r = eval_regression(&p, &t).unwrap();
        assert!((r.rmse - 2f64.sqrt()).abs() < 1e-12);
        assert!((r.mae_per_dim[0] - 1.2).abs() < 1e-12);
        assert!((r.pearson_per_dim[0].unwrap() - 0.5).abs() < 1e-12);
        assert!(r.mean_bias.abs() < 1e-12);
    }

    #[test]
    fn constant_dimension_reports_undefined() {
        let t = vec![vec![1.0], vec![1.0], vec![1.0]];
        let p = vec![vec![0.0], vec![1.0], vec![2.0]];
        let r = eval_regression(&p, &t).unwrap();
        assert_eq!(r.pearson_per_dim[0], None);
        assert!(r.rmse.is_finite());
    }
}
