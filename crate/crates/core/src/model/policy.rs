use super::layers::{relu_backward, relu_in_place, Dense, Lstm, LstmStep, Param};
use super::linalg::sigmoid;
use super::{ModelConfig, PolicyDistribution, RecurrentState};
use crate::world::Observation;
use rand::Rng;

/// Shrink factor applied to the Glorot-initialized softmax head.
pub const HEAD_INIT_SCALE: f64 = 0.1;

/// One policy branch: private 1×1 conv encoder, optional attention fusion with
/// the mind vector, recurrent cell and softmax head(s).
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    pub conv: Dense,
    /// `None` when the branch runs without a mind vector.
    pub attention: Option<Dense>,
    pub lstm: Lstm,
    pub head: Dense,
    pub heads: Vec<usize>,
    cells: usize,
    channels: usize,
    filters: usize,
}

/// Activations of one policy step.
#[derive(Debug, Clone)]
pub struct PolicyStep {
    pub obs: Vec<f64>,
    /// Rectified encoder output, `cells × filters`.
    pub features: Vec<f64>,
    pub attention: Option<Vec<f64>>,
    pub m_prev: Vec<f64>,
    pub lstm: LstmStep,
    pub dist: PolicyDistribution,
}

impl PolicyNet {
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        config: &ModelConfig,
        channels: usize,
        heads: &[usize],
        fused: bool,
        rng: &mut R,
    ) -> Self {
        let cells = config.cells();
        let f = config.filters;
        let conv = Dense::new(&format!("{name}.conv"), channels, f, rng);
        let attention = fused.then(|| Dense::new(&format!("{name}.attention"), config.latent_dim, f, rng));
        let lstm = Lstm::new(&format!("{name}.lstm"), cells * f, config.lstm_dim, rng);
        let mut head = Dense::new(&format!("{name}.head"), config.lstm_dim, heads.iter().sum(), rng);
        // Start close to uniform over actions.
        head.w.value.iter_mut().for_each(|w| *w *= HEAD_INIT_SCALE);
        PolicyNet { conv, attention, lstm, head, heads: heads.to_vec(), cells, channels, filters: f }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn is_fused(&self) -> bool {
        self.attention.is_some()
    }

    /// Per-cell affine map followed by rectification; spatial layout preserved.
    pub fn encode_state(&self, obs: &Observation) -> Vec<f64> {
        assert_eq!(obs.cells(), self.cells, "policy observation has the wrong spatial shape");
        assert_eq!(obs.channels, self.channels, "policy observation has the wrong channel count");
        let mut y = self.conv.forward_batch(&obs.data, self.cells);
        relu_in_place(&mut y);
        y
    }

    /// Attention gates in `[0, 1]`, one per feature map.
    pub fn attention_gates(&self, m: &[f64]) -> Option<Vec<f64>> {
        self.attention.as_ref().map(|a| a.forward(m).into_iter().map(sigmoid).collect())
    }

    /// Scale feature map `k` by gate `k`.
    pub fn fuse(&self, features: &[f64], gates: &[f64]) -> Vec<f64> {
        features.chunks_exact(self.filters).flat_map(|cell| cell.iter().zip(gates).map(|(x, g)| x * g)).collect()
    }

    pub fn step(&self, obs: &Observation, m_prev: &[f64], prev: &RecurrentState) -> PolicyStep {
        let features = self.encode_state(obs);
        let attention = self.attention_gates(m_prev);
        let x = match &attention {
            Some(g) => self.fuse(&features, g),
            None => features.clone(),
        };
        let lstm = self.lstm.step(x, prev);
        let logits = self.head.forward(&lstm.h);
        let dist = PolicyDistribution::from_logits(&logits, &self.heads);
        PolicyStep { obs: obs.data.clone(), features, attention, m_prev: m_prev.to_vec(), lstm, dist }
    }

    /// Backpropagate logit gradients `dlogits[t]` through the branch. Returns
    /// `∂L/∂m_prev` per step when asked and the branch is fused.
    pub fn backward(
        &mut self,
        steps: &[&PolicyStep],
        dlogits: &[Vec<f64>],
        want_dm: bool,
    ) -> Option<Vec<Vec<f64>>> {
        let t_len = steps.len();
        if t_len == 0 {
            return want_dm.then(Vec::new);
        }
        let hs: Vec<f64> = steps.iter().flat_map(|s| s.lstm.h.iter().copied()).collect();
        let dl: Vec<f64> = dlogits.iter().flatten().copied().collect();
        let dh = self.head.backward_batch(&hs, &dl, t_len, true).unwrap();
        let dh: Vec<Vec<f64>> = dh.chunks_exact(self.lstm.hidden).map(<[f64]>::to_vec).collect();
        let lsteps: Vec<&LstmStep> = steps.iter().map(|s| &s.lstm).collect();
        let dx = self.lstm.backward(&lsteps, &dh, true).unwrap();

        let f = self.filters;
        let mut d_features = Vec::with_capacity(t_len * self.cells * f);
        let mut d_att_pre = Vec::with_capacity(t_len * f);
        for (s, dxs) in steps.iter().zip(&dx) {
            match &s.attention {
                Some(g) => {
                    let mut dg = vec![0.0; f];
                    for (dcell, feat) in dxs.chunks_exact(f).zip(s.features.chunks_exact(f)) {
                        for k in 0..f {
                            d_features.push(dcell[k] * g[k]);
                            dg[k] += dcell[k] * feat[k];
                        }
                    }
                    d_att_pre.extend(dg.iter().zip(g).map(|(d, a)| d * a * (1.0 - a)));
                }
                None => d_features.extend_from_slice(dxs),
            }
        }
        let feats: Vec<f64> = steps.iter().flat_map(|s| s.features.iter().copied()).collect();
        relu_backward(&feats, &mut d_features);
        let obs: Vec<f64> = steps.iter().flat_map(|s| s.obs.iter().copied()).collect();
        self.conv.backward_batch(&obs, &d_features, t_len * self.cells, false);

        let att = self.attention.as_mut()?;
        let ms: Vec<f64> = steps.iter().flat_map(|s| s.m_prev.iter().copied()).collect();
        let dm = att.backward_batch(&ms, &d_att_pre, t_len, want_dm)?;
        Some(dm.chunks_exact(att.input).map(<[f64]>::to_vec).collect())
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut v: Vec<&Param> = Vec::with_capacity(9);
        v.extend(self.conv.params());
        if let Some(a) = &self.attention {
            v.extend(a.params());
        }
        v.extend(self.lstm.params());
        v.extend(self.head.params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v: Vec<&mut Param> = Vec::with_capacity(9);
        v.extend(self.conv.params_mut());
        if let Some(a) = &mut self.attention {
            v.extend(a.params_mut());
        }
        v.extend(self.lstm.params_mut());
        v.extend(self.head.params_mut());
        v
    }
}
