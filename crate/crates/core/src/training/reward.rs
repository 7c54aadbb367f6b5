use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RewardError {
    #[error("mind vectors differ in dimension ({0} vs {1})")]
    DimensionMismatch(usize, usize),
}

/// Squared Euclidean change of the mind vector between consecutive steps.
pub fn probing_reward(m_prev: &[f64], m_cur: &[f64]) -> Result<f64, RewardError> {
    if m_prev.len() != m_cur.len() {
        return Err(RewardError::DimensionMismatch(m_prev.len(), m_cur.len()));
    }
    Ok(m_prev.iter().zip(m_cur).map(|(a, b)| (b - a) * (b - a)).sum())
}

/// `r^t = ||m^t - m^{t-1}||²` for `t = 1..T` with `m^0 = 0`.
pub fn tick_mind_rewards(minds: &[Vec<f64>]) -> Vec<f64> {
    let Some(first) = minds.first() else {
        return Vec::new();
    };
    let zero = vec![0.0; first.len()];
    let mut prev = &zero;
    minds
        .iter()
        .map(|m| {
            let r = probing_reward(prev, m).expect("mind vectors share one dimension");
            prev = m;
            r
        })
        .collect()
}

/// `R_t = r_t + γ R_{t+1}` with a zero tail.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (o, &r) in out.iter_mut().zip(rewards).rev() {
        acc = r + gamma * acc;
        *o = acc;
    }
    out
}

/// Credit each learner step with the tick rewards from its own tick up to
/// (excluding) the tick of its next action.
pub fn learner_step_rewards(tick_rewards: &[f64], learner_ticks: &[usize]) -> Vec<f64> {
    learner_ticks
        .iter()
        .enumerate()
        .map(|(k, &start)| {
            let end = learner_ticks.get(k + 1).copied().unwrap_or(tick_rewards.len());
            tick_rewards[start.min(tick_rewards.len())..end.min(tick_rewards.len())].iter().sum()
        })
        .collect()
}

/// Visit counts keyed by world-state digest, persisted across episodes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CountTable {
    pub counts: BTreeMap<u64, u64>,
}

impl CountTable {
    /// Record a visit and return `β / sqrt(n)`.
    pub fn visit(&mut self, digest: u64, beta: f64) -> f64 {
        let n = self.counts.entry(digest).or_insert(0);
        *n += 1;
        beta / (*n as f64).sqrt()
    }

    pub fn count(&self, digest: u64) -> u64 {
        self.counts.get(&digest).copied().unwrap_or(0)
    }
}
