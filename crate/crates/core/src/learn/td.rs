/// TD(λ) value targets over one lane's window.
///
/// `next_values[t]` is the bootstrap value of the state reached after step
/// `t` (0 when the episode terminated there, the value of the terminal
/// observation on timeout). `ends[t]` marks an episode boundary after step
/// `t`; the recursion never crosses one. The window end acts as a boundary.
pub fn td_lambda_targets(
    rewards: &[f64],
    next_values: &[f64],
    ends: &[bool],
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    let n = rewards.len();
    debug_assert!(next_values.len() == n && ends.len() == n);
    let mut out = vec![0.0; n];
    let mut next = 0.0;
    for t in (0..n).rev() {
        let cut = ends[t] || t + 1 == n;
        out[t] = if cut {
            rewards[t] + gamma * next_values[t]
        } else {
            rewards[t] + gamma * ((1.0 - lambda) * next_values[t] + lambda * next)
        };
        next = out[t];
    }
    out
}

/// Generalized advantage estimates and the matching value targets
/// (`advantage + value`), with the same boundary conventions as
/// [`td_lambda_targets`].
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    ends: &[bool],
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next = 0.0;
    for t in (0..n).rev() {
        let delta = rewards[t] + gamma * next_values[t] - values[t];
        let carry = if ends[t] || t + 1 == n { 0.0 } else { next };
        adv[t] = delta + gamma * lambda * carry;
        next = adv[t];
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monte_carlo_limit() {
        let t = td_lambda_targets(&[1.0; 3], &[0.0; 3], &[false; 3], 1.0, 1.0);
        assert_eq!(t, vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn one_step_limit() {
        let r = [0.5, -1.0, 2.0];
        let nv = [1.5, 0.25, -3.0];
        let t = td_lambda_targets(&r, &nv, &[false; 3], 0.9, 0.0);
        for i in 0..3 {
            assert!((t[i] - (r[i] + 0.9 * nv[i])).abs() < 1e-15);
        }
    }

    #[test]
    fn gae_full_return_minus_baseline() {
        let r = [1.0, 2.0, 3.0];
        let v = [0.5, 0.1, -0.2];
        let nv = [0.1, -0.2, 0.0];
        let (adv, ret) = gae(&r, &v, &nv, &[false; 3], 1.0, 1.0);
        let want = [6.0 - 0.5, 5.0 - 0.1, 3.0 + 0.2];
        for i in 0..3 {
            assert!((adv[i] - want[i]).abs() < 1e-12);
            assert!((ret[i] - (want[i] + v[i])).abs() < 1e-12);
        }
    }
}
