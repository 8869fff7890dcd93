use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Advantage {
    pub advantages: Vec<f64>,
    /// `advantages[t] + values[t]`.
    pub returns: Vec<f64>,
}

/// Generalized advantage estimation over one environment's sequence.
///
/// `values` holds `V(s_0..s_{n-1})` followed by the bootstrap `V(s_n)`.
/// `dones[t]` means the episode ended after reward `t`; nothing is
/// bootstrapped across it.
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> Result<Advantage> {
    let n = rewards.len();
    check_len("values (with bootstrap)", n + 1, values.len())?;
    check_len("dones", n, dones.len())?;
    let mut adv = vec![0.0; n];
    let mut next = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * values[t + 1] * live - values[t];
        next = delta + gamma * lambda * live * next;
        adv[t] = next;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok(Advantage { advantages: adv, returns })
}

/// Shifts to zero mean and scales to unit standard deviation in place.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.len() < 2 {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = libm::sqrt(var) + 1e-8;
    adv.iter_mut().for_each(|a| *a = (*a - mean) / std);
}
