//! Multi-run aggregation with Student-t confidence intervals.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Two-sided 95% Student-t quantiles `t_{0.975, df}` for `df = 1..=200`.
#[rustfmt::skip]
const T_975: [f64; 200] = [
    12.706205, 4.302653, 3.182446, 2.776445, 2.570582, 2.446912, 2.364624, 2.306004,
    2.262157, 2.228139, 2.200985, 2.178813, 2.160369, 2.144787, 2.131450, 2.119905,
    2.109816, 2.100922, 2.093024, 2.085963, 2.079614, 2.073873, 2.068658, 2.063899,
    2.059539, 2.055529, 2.051831, 2.048407, 2.045230, 2.042272, 2.039513, 2.036933,
    2.034515, 2.032245, 2.030108, 2.028094, 2.026192, 2.024394, 2.022691, 2.021075,
    2.019541, 2.018082, 2.016692, 2.015368, 2.014103, 2.012896, 2.011741, 2.010635,
    2.009575, 2.008559, 2.007584, 2.006647, 2.005746, 2.004879, 2.004045, 2.003241,
    2.002465, 2.001717, 2.000995, 2.000298, 1.999624, 1.998972, 1.998341, 1.997730,
    1.997138, 1.996564, 1.996008, 1.995469, 1.994945, 1.994437, 1.993943, 1.993464,
    1.992997, 1.992543, 1.992102, 1.991673, 1.991254, 1.990847, 1.990450, 1.990063,
    1.989686, 1.989319, 1.988960, 1.988610, 1.988268, 1.987934, 1.987608, 1.987290,
    1.986979, 1.986675, 1.986377, 1.986086, 1.985802, 1.985523, 1.985251, 1.984984,
    1.984723, 1.984467, 1.984217, 1.983972, 1.983731, 1.983495, 1.983264, 1.983038,
    1.982815, 1.982597, 1.982383, 1.982173, 1.981967, 1.981765, 1.981567, 1.981372,
    1.981180, 1.980992, 1.980808, 1.980626, 1.980448, 1.980272, 1.980100, 1.979930,
    1.979764, 1.979600, 1.979439, 1.979280, 1.979124, 1.978971, 1.978820, 1.978671,
    1.978524, 1.978380, 1.978239, 1.978099, 1.977961, 1.977826, 1.977692, 1.977561,
    1.977431, 1.977304, 1.977178, 1.977054, 1.976931, 1.976811, 1.976692, 1.976575,
    1.976460, 1.976346, 1.976233, 1.976122, 1.976013, 1.975905, 1.975799, 1.975694,
    1.975590, 1.975488, 1.975387, 1.975288, 1.975189, 1.975092, 1.974996, 1.974902,
    1.974808, 1.974716, 1.974625, 1.974535, 1.974446, 1.974358, 1.974271, 1.974185,
    1.974100, 1.974017, 1.973934, 1.973852, 1.973771, 1.973691, 1.973612, 1.973534,
    1.973457, 1.973381, 1.973305, 1.973231, 1.973157, 1.973084, 1.973012, 1.972941,
    1.972870, 1.972800, 1.972731, 1.972663, 1.972595, 1.972528, 1.972462, 1.972396,
    1.972332, 1.972268, 1.972204, 1.972141, 1.972079, 1.972017, 1.971957, 1.971896,
];

/// `t_{0.975, df}`; beyond the table the normal quantile is close enough.
pub fn t_quantile_975(df: usize) -> Result<f64> {
    match df {
        0 => Err(Error::InvalidInput("t quantile needs df >= 1".into())),
        1..=200 => Ok(T_975[df - 1]),
        _ => Ok(1.959964),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    /// Half-width of the 95% interval.
    pub ci_half_width: f64,
    pub n: usize,
}

impl MeanCi {
    pub fn lower(&self) -> f64 {
        self.mean - self.ci_half_width
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.ci_half_width
    }

    /// Closed intervals touching counts as overlapping.
    pub fn overlaps(&self, other: &MeanCi) -> bool {
        self.lower() <= other.upper() && other.lower() <= self.upper()
    }
}

/// Mean ± `t_{0.975,n−1}·s/√n` with the sample (n−1) standard deviation.
pub fn mean_ci(values: &[f64]) -> Result<MeanCi> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!("confidence interval needs n >= 2, got {n}")));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let half = t_quantile_975(n - 1)? * var.sqrt() / (n as f64).sqrt();
    Ok(MeanCi {
        mean,
        ci_half_width: half,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, StudentsT};

    #[test]
    fn hand_computed_interval() {
        // mean 2.5, s = 1.290994, t_{0.975,3} = 3.182446 → 3.182446·1.290994/2
        let ci = mean_ci(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(ci.mean, 2.5);
        assert!((ci.ci_half_width - 2.054).abs() <= 1e-3, "{}", ci.ci_half_width);
    }

    #[test]
    fn constant_values_have_zero_width() {
        let ci = mean_ci(&[7.0; 30]).unwrap();
        assert_eq!(ci.ci_half_width, 0.0);
    }

    #[test]
    fn thirty_run_interval_arithmetic() {
        // Choose s so that s/√30 · t_{0.975,29} = 5.72 around a mean of 77.10.
        let t = t_quantile_975(29).unwrap();
        assert!((t - 2.045).abs() < 1e-3);
        let s = 5.72 * 30f64.sqrt() / t;
        // 15 values at mean − d and 15 at mean + d give sample std d·√(30/29).
        let d = s / (30.0f64 / 29.0).sqrt();
        let vals: Vec<f64> = (0..30).map(|i| if i % 2 == 0 { 77.10 - d } else { 77.10 + d }).collect();
        let ci = mean_ci(&vals).unwrap();
        assert!((ci.mean - 77.10).abs() < 1e-9);
        assert!((ci.ci_half_width - 5.72).abs() < 1e-9);
        assert!((ci.lower() - 71.38).abs() < 1e-9 && (ci.upper() - 82.82).abs() < 1e-9);
    }

    #[test]
    fn needs_two_values() {
        assert!(mean_ci(&[1.0]).is_err());
        assert!(mean_ci(&[]).is_err());
    }

    #[test]
    fn table_matches_independent_quantile() {
        for df in 1..=200 {
            let exact = StudentsT::new(0.0, 1.0, df as f64).unwrap().inverse_cdf(0.975);
            assert!((t_quantile_975(df).unwrap() - exact).abs() < 1e-5, "df {df}");
        }
    }

    #[test]
    fn overlap_is_symmetric() {
        let a = MeanCi { mean: 1.0, ci_half_width: 0.5, n: 10 };
        let b = MeanCi { mean: 2.0, ci_half_width: 0.4, n: 10 };
        let c = MeanCi { mean: 1.4, ci_half_width: 0.1, n: 10 };
        assert!(!a.overlaps(&b) && !b.overlaps(&a));
        assert!(a.overlaps(&c) && c.overlaps(&a));
    }
}
