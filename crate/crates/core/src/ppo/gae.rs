use crate::{Error, Result};

/// Generalized advantage estimation over one time-ordered trajectory.
///
/// `values[t]` is V(s_t); `last_value` bootstraps the step after the final
/// transition and is ignored when that transition is terminal. Returns raw
/// (unnormalized) advantages and `returns = advantages + values`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    discount: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if n == 0 {
        return Err(Error::Empty("trajectory"));
    }
    if values.len() != n || dones.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: values.len().min(dones.len()),
        });
    }
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = last_value;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + discount * next_value * live - values[t];
        adv[t] = delta + discount * lambda * live * next_adv;
        next_adv = adv[t];
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Shifts and scales to zero mean, unit (population) std.
pub fn normalize_advantages(adv: &mut [f64]) {
    let n = adv.len() as f64;
    if n == 0.0 {
        return;
    }
    let mean = adv.iter().sum::<f64>() / n;
    let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
    for a in adv.iter_mut() {
        *a = (*a - mean) / (std + 1e-8);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step() {
        let (a, r) = compute_gae(&[1.0], &[0.0], &[false], 0.0, 0.99, 0.95).unwrap();
        assert_eq!(a, vec![1.0]);
        assert_eq!(r, vec![1.0]);
    }

    #[test]
    fn lambda_zero_is_td_residual() {
        let rewards = [0.5, -1.0, 2.0, 0.3];
        let values = [0.1, 0.4, -0.2, 0.7];
        let dones = [false, false, true, false];
        let last = 0.9;
        let g = 0.9;
        let (a, _) = compute_gae(&rewards, &values, &dones, last, g, 0.0).unwrap();
        let next = [values[1], values[2], values[3], last];
        for t in 0..4 {
            let live = if dones[t] { 0.0 } else { 1.0 };
            let delta = rewards[t] + g * next[t] * live - values[t];
            assert!((a[t] - delta).abs() < 1e-15);
        }
    }

    #[test]
    fn three_step_hand_unrolled() {
        // r = [1, 2, 3], V = [0.5, 1.0, 1.5], V_last = 2, γ = 0.9, λ = 0.8
        // δ2 = 3 + 0.9*2 - 1.5 = 3.3
        // δ1 = 2 + 0.9*1.5 - 1.0 = 2.35
        // δ0 = 1 + 0.9*1.0 - 0.5 = 1.4
        // A2 = 3.3; A1 = 2.35 + 0.72*3.3 = 4.726; A0 = 1.4 + 0.72*4.726 = 4.80272
        let (a, r) = compute_gae(&[1.0, 2.0, 3.0], &[0.5, 1.0, 1.5], &[false; 3], 2.0, 0.9, 0.8).unwrap();
        let expected = [4.80272, 4.726, 3.3];
        for t in 0..3 {
            assert!((a[t] - expected[t]).abs() < 1e-12, "t={t}: {}", a[t]);
        }
        assert!((r[0] - 5.30272).abs() < 1e-12);

        // Terminal at the middle step cuts the recursion:
        // A2 = 3.3; δ1 = 2 - 1.0 = 1.0, A1 = 1.0; A0 = 1.4 + 0.72*1.0 = 2.12
        let (a, _) = compute_gae(&[1.0, 2.0, 3.0], &[0.5, 1.0, 1.5], &[false, true, false], 2.0, 0.9, 0.8).unwrap();
        for (got, want) in a.iter().zip([2.12, 1.0, 3.3]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_trajectory() {
        assert!(compute_gae(&[], &[], &[], 0.0, 0.99, 0.95).is_err());
    }

    #[test]
    fn normalization_moments() {
        let mut a = vec![1.0, 2.0, 3.0, 10.0];
        normalize_advantages(&mut a);
        let mean = a.iter().sum::<f64>() / 4.0;
        let var = a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-6);
    }
}
