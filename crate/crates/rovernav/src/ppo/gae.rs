//! Generalized advantage estimation by backward recursion.

use super::PpoError;

/// Compute GAE advantages and returns for one environment's trajectory
/// slice.
///
/// delta_t = r_t + gamma * V(s_{t+1}) * (1 - done_t) - V(s_t), with
/// V(s_T) = `bootstrap_value`; advantages follow the (gamma * lambda)
/// backward recursion truncated at episode and buffer boundaries, and
/// returns are advantages + values.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap_value: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), PpoError> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(PpoError::LengthMismatch(format!(
            "rewards {n}, values {}, dones {}",
            values.len(),
            dones.len()
        )));
    }
    let mut advantages = vec![0.0; n];
    let mut carry = 0.0;
    for t in (0..n).rev() {
        let mask = if dones[t] { 0.0 } else { 1.0 };
        let next_value = if t + 1 < n { values[t + 1] } else { bootstrap_value };
        let delta = rewards[t] + gamma * next_value * mask - values[t];
        carry = delta + gamma * lambda * mask * carry;
        advantages[t] = carry;
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((advantages, returns))
}
