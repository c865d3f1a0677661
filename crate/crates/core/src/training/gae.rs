//! Generalized advantage estimation over a flat transition stream that may
//! contain several episodes and end with a horizon cut.

/// Recursive GAE. `dones[t]` marks the last transition of an episode;
/// `bootstrap` is V(s_next) after the final transition when the stream was
/// cut mid-episode (ignored when the final transition is terminal).
/// Returns (advantages, returns) with returns[t] = advantages[t] + values[t].
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert_eq!(values.len(), n);
    assert_eq!(dones.len(), n);
    let mut adv = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let next_value = if dones[t] {
            0.0
        } else if t + 1 == n {
            bootstrap
        } else {
            values[t + 1]
        };
        let delta = rewards[t] + gamma * next_value - values[t];
        acc = if dones[t] { delta } else { delta + gamma * lambda * acc };
        adv[t] = acc;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}
