use super::layers::{relu_backward, relu_in_place, Dense, Lstm, LstmStep, Param};
use super::{ModelConfig, RecurrentState};
use crate::task::ActionCode;
use crate::world::Observation;
use rand::Rng;

/// Behavior tracker: maps the demonstrator's observed (state, action) prefix
/// to the mind vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracker {
    pub conv: Dense,
    pub fc1: Dense,
    pub fc2: Dense,
    pub lstm: Lstm,
    pub out: Dense,
    cells: usize,
    channels: usize,
    heads: Vec<usize>,
}

/// Activations of one tracker step.
#[derive(Debug, Clone)]
pub struct TrackerStep {
    /// Observation with the action channels appended, `cells × (C + A)`.
    pub input: Vec<f64>,
    pub conv: Vec<f64>,
    pub fc1: Vec<f64>,
    pub lstm: LstmStep,
    pub m: Vec<f64>,
}

impl Tracker {
    pub fn new<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Self {
        let cells = config.cells();
        let action_width: usize = config.demo_heads.iter().sum();
        let cin = config.channels() + action_width;
        Tracker {
            conv: Dense::new("tracker.conv", cin, config.filters, rng),
            fc1: Dense::new("tracker.fc1", cells * config.filters, config.fc_dim, rng),
            fc2: Dense::new("tracker.fc2", config.fc_dim, config.fc_dim, rng),
            lstm: Lstm::new("tracker.lstm", config.fc_dim, config.lstm_dim, rng),
            out: Dense::new("tracker.out", config.lstm_dim, config.latent_dim, rng),
            cells,
            channels: config.channels(),
            heads: config.demo_heads.clone(),
        }
    }

    pub fn action_width(&self) -> usize {
        self.heads.iter().sum()
    }

    /// Append one constant channel per action (per head for factored spaces);
    /// the observed action's channels are all ones.
    pub fn augment(&self, obs: &Observation, action: ActionCode) -> Vec<f64> {
        assert_eq!(obs.cells(), self.cells, "tracker observation has the wrong spatial shape");
        assert_eq!(obs.channels, self.channels, "tracker observation has the wrong channel count");
        let aw = self.action_width();
        let mut onehot = vec![0.0; aw];
        let mut off = 0;
        for (k, &n) in self.heads.iter().enumerate() {
            onehot[off + action.part(k)] = 1.0;
            off += n;
        }
        let mut input = Vec::with_capacity(self.cells * (self.channels + aw));
        for cell in obs.data.chunks_exact(self.channels) {
            input.extend_from_slice(cell);
            input.extend_from_slice(&onehot);
        }
        input
    }

    pub fn step(&self, obs: &Observation, action: ActionCode, prev: &RecurrentState) -> TrackerStep {
        let input = self.augment(obs, action);
        let mut conv = self.conv.forward_batch(&input, self.cells);
        relu_in_place(&mut conv);
        let mut fc1 = self.fc1.forward(&conv);
        relu_in_place(&mut fc1);
        let mut fc2 = self.fc2.forward(&fc1);
        relu_in_place(&mut fc2);
        let lstm = self.lstm.step(fc2, prev);
        let m = self.out.forward(&lstm.h);
        TrackerStep { input, conv, fc1, lstm, m }
    }

    /// Accumulate gradients for a sequence given `dm[t] = ∂L/∂m` of each step.
    pub fn backward(&mut self, steps: &[TrackerStep], dm: &[Vec<f64>]) {
        let t_len = steps.len();
        if t_len == 0 {
            return;
        }
        let hs: Vec<f64> = steps.iter().flat_map(|s| s.lstm.h.iter().copied()).collect();
        let dms: Vec<f64> = dm.iter().flatten().copied().collect();
        let dh = self.out.backward_batch(&hs, &dms, t_len, true).unwrap();
        let dh: Vec<Vec<f64>> = dh.chunks_exact(self.lstm.hidden).map(<[f64]>::to_vec).collect();
        let lsteps: Vec<&LstmStep> = steps.iter().map(|s| &s.lstm).collect();
        let dx = self.lstm.backward(&lsteps, &dh, true).unwrap();

        let mut d_fc2: Vec<f64> = dx.into_iter().flatten().collect();
        let fc2_out: Vec<f64> = steps.iter().flat_map(|s| s.lstm.x.iter().copied()).collect();
        relu_backward(&fc2_out, &mut d_fc2);
        let fc1_out: Vec<f64> = steps.iter().flat_map(|s| s.fc1.iter().copied()).collect();
        let mut d_fc1 = self.fc2.backward_batch(&fc1_out, &d_fc2, t_len, true).unwrap();
        relu_backward(&fc1_out, &mut d_fc1);
        let conv_out: Vec<f64> = steps.iter().flat_map(|s| s.conv.iter().copied()).collect();
        let mut d_conv = self.fc1.backward_batch(&conv_out, &d_fc1, t_len, true).unwrap();
        relu_backward(&conv_out, &mut d_conv);
        let inputs: Vec<f64> = steps.iter().flat_map(|s| s.input.iter().copied()).collect();
        self.conv.backward_batch(&inputs, &d_conv, t_len * self.cells, false);
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut v: Vec<&Param> = Vec::with_capacity(11);
        v.extend(self.conv.params());
        v.extend(self.fc1.params());
        v.extend(self.fc2.params());
        v.extend(self.lstm.params());
        v.extend(self.out.params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v: Vec<&mut Param> = Vec::with_capacity(11);
        v.extend(self.conv.params_mut());
        v.extend(self.fc1.params_mut());
        v.extend(self.fc2.params_mut());
        v.extend(self.lstm.params_mut());
        v.extend(self.out.params_mut());
        v
    }
}
