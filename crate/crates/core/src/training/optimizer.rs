use crate::model::Param;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OptimError {
    #[error("non-finite gradient in {0}")]
    NonFinite(String),
}

/// Root-mean-square propagation with optional global-norm clipping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmsProp {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
    pub clip_norm: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    pub clipped: bool,
}

impl Default for RmsProp {
    fn default() -> Self {
        RmsProp { learning_rate: 1e-3, decay: 0.99, epsilon: 1e-8, clip_norm: Some(5.0) }
    }
}

impl RmsProp {
    /// Apply one update to a group of parameters and clear their gradients.
    /// A non-finite gradient leaves every parameter and accumulator untouched.
    pub fn step(&self, params: Vec<&mut Param>) -> Result<StepInfo, OptimError> {
        let mut sq = 0.0;
        for p in &params {
            for &g in &p.grad {
                if !g.is_finite() {
                    let name = p.name.clone();
                    params.into_iter().for_each(Param::zero_grad);
                    return Err(OptimError::NonFinite(name));
                }
                sq += g * g;
            }
        }
        let grad_norm = sq.sqrt();
        let scale = match self.clip_norm {
            Some(c) if grad_norm > c => c / grad_norm,
            _ => 1.0,
        };
        for p in params {
            if p.accum.len() != p.value.len() {
                p.accum = vec![0.0; p.value.len()];
            }
            for ((v, a), g) in p.value.iter_mut().zip(p.accum.iter_mut()).zip(p.grad.iter_mut()) {
                let g_c = *g * scale;
                *a = self.decay * *a + (1.0 - self.decay) * g_c * g_c;
                *v -= self.learning_rate * g_c / (a.sqrt() + self.epsilon);
                *g = 0.0;
            }
        }
        Ok(StepInfo { grad_norm, clipped: scale < 1.0 })
    }
}
