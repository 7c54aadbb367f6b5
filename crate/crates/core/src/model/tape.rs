use super::{MindModel, ModelError, PolicyDistribution, PolicyStep, TrackerStep};
use crate::task::ActionCode;

/// Demonstrator-side record of an episode: tracker steps producing `m^1..m^T`
/// and demonstrator-branch steps conditioned on `m^0..m^{T-1}`.
#[derive(Debug, Clone, Default)]
pub struct IlTape {
    pub tracker: Vec<TrackerStep>,
    pub demo: Vec<PolicyStep>,
    pub actions: Vec<ActionCode>,
    consumed: bool,
}

impl IlTape {
    pub fn new() -> Self {
        IlTape::default()
    }

    pub fn push(&mut self, demo: PolicyStep, action: ActionCode, tracker: TrackerStep) {
        self.demo.push(demo);
        self.actions.push(action);
        self.tracker.push(tracker);
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// `-log π_d(a_d^t | s_d^t, m^{t-1})` per step.
    pub fn step_losses(&self) -> Vec<f64> {
        self.demo.iter().zip(&self.actions).map(|(s, &a)| -s.dist.log_prob(a)).collect()
    }

    pub fn mean_loss(&self) -> f64 {
        mean(&self.step_losses())
    }

    /// `m^1..m^T`.
    pub fn minds(&self) -> Vec<Vec<f64>> {
        self.tracker.iter().map(|s| s.m.clone()).collect()
    }
}

/// Learner-side record: branch steps, chosen actions and value estimates.
#[derive(Debug, Clone, Default)]
pub struct RlTape {
    pub steps: Vec<PolicyStep>,
    pub actions: Vec<ActionCode>,
    pub values: Vec<f64>,
    consumed: bool,
}

impl RlTape {
    pub fn new() -> Self {
        RlTape::default()
    }

    pub fn push(&mut self, step: PolicyStep, action: ActionCode, value: f64) {
        self.steps.push(step);
        self.actions.push(action);
        self.values.push(value);
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn mean_entropy(&self) -> f64 {
        mean(&self.steps.iter().map(|s| s.dist.entropy()).collect::<Vec<_>>())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RlStats {
    /// Mean of `A log π + λ H` over the episode.
    pub policy_objective: f64,
    /// Mean of `½ (R - V)²`.
    pub value_loss: f64,
    pub entropy: f64,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn factor_entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

/// Gradient of `-log π(code)` w.r.t. the concatenated logits.
fn nll_logit_grad(dist: &PolicyDistribution, code: ActionCode, scale: f64) -> Vec<f64> {
    let mut g = Vec::new();
    for (k, p) in dist.factors.iter().enumerate() {
        let a = code.part(k);
        g.extend(p.iter().enumerate().map(|(j, &pj)| scale * (pj - if j == a { 1.0 } else { 0.0 })));
    }
    g
}

impl MindModel {
    /// Accumulate gradients of the mean imitation loss into the tracker and
    /// demonstrator branch. Returns the loss.
    pub fn il_backward(&mut self, tape: &mut IlTape) -> Result<f64, ModelError> {
        if tape.consumed {
            return Err(ModelError::TapeConsumed);
        }
        if tape.is_empty() {
            return Err(ModelError::EmptyTape);
        }
        tape.consumed = true;
        let t_len = tape.len();
        let scale = 1.0 / t_len as f64;
        let dlogits: Vec<Vec<f64>> =
            tape.demo.iter().zip(&tape.actions).map(|(s, &a)| nll_logit_grad(&s.dist, a, scale)).collect();
        let steps: Vec<&PolicyStep> = tape.demo.iter().collect();
        let dm_prev = self.demo.backward(&steps, &dlogits, true).unwrap_or_default();
        // Step t consumed m^{t-1}, produced by tracker step t-2; m^0 is constant
        // and m^T feeds nothing.
        let d = self.config.latent_dim;
        let mut dm: Vec<Vec<f64>> = dm_prev.into_iter().skip(1).collect();
        dm.resize(t_len, vec![0.0; d]);
        self.tracker.backward(&tape.tracker, &dm);
        Ok(tape.mean_loss())
    }

    /// Accumulate actor-critic gradients into the learner branch and the value
    /// head. The value loss does not reach the learner branch, and nothing
    /// reaches the tracker.
    pub fn rl_backward(
        &mut self,
        tape: &mut RlTape,
        returns: &[f64],
        entropy_weight: f64,
    ) -> Result<RlStats, ModelError> {
        if tape.consumed {
            return Err(ModelError::TapeConsumed);
        }
        if tape.is_empty() {
            return Err(ModelError::EmptyTape);
        }
        assert_eq!(returns.len(), tape.len(), "one return per learner step");
        tape.consumed = true;
        let k_len = tape.len();
        let scale = 1.0 / k_len as f64;
        let mut objective = 0.0;
        let mut value_loss = 0.0;
        let mut entropy = 0.0;
        let mut dlogits = Vec::with_capacity(k_len);
        let mut dv = Vec::with_capacity(k_len);
        for ((s, &a), (&v, &r)) in tape.steps.iter().zip(&tape.actions).zip(tape.values.iter().zip(returns)) {
            let adv = r - v;
            let h = s.dist.entropy();
            objective += adv * s.dist.log_prob(a) + entropy_weight * h;
            value_loss += 0.5 * (r - v) * (r - v);
            entropy += h;
            let mut g = Vec::new();
            for (k, p) in s.dist.factors.iter().enumerate() {
                let hk = factor_entropy(p);
                let ak = a.part(k);
                g.extend(p.iter().enumerate().map(|(j, &pj)| {
                    let onehot = if j == ak { 1.0 } else { 0.0 };
                    let log_p = if pj > 0.0 { pj.ln() } else { 0.0 };
                    scale * (adv * (pj - onehot) + entropy_weight * pj * (log_p + hk))
                }));
            }
            dlogits.push(g);
            dv.push(scale * (v - r));
        }
        let hs: Vec<f64> = tape.steps.iter().flat_map(|s| s.lstm.h.iter().copied()).collect();
        self.value.backward_batch(&hs, &dv, k_len, false);
        let steps: Vec<&PolicyStep> = tape.steps.iter().collect();
        self.learner.backward(&steps, &dlogits, false);
        Ok(RlStats {
            policy_objective: objective * scale,
            value_loss: value_loss * scale,
            entropy: entropy * scale,
        })
    }
}
