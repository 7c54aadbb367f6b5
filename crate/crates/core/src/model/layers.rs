//! Parameter blocks and the affine and recurrent layers built on them.

use super::linalg::{gemm, mat_t_vec_acc, mat_vec_acc, sigmoid, Tr};
use super::RecurrentState;
use rand::Rng;

/// A named parameter tensor with its gradient buffer and optimizer accumulator.
/// The accumulator stays empty until the first optimizer step touches it.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    pub accum: Vec<f64>,
}

impl Param {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, value: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        let n = value.len();
        Param { name: name.into(), shape, value, grad: vec![0.0; n], accum: Vec::new() }
    }

    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Param::new(name, shape, vec![0.0; n])
    }

    /// Uniform in `[-a, a]` with `a = sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot<R: Rng + ?Sized>(
        name: impl Into<String>,
        shape: Vec<usize>,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Self {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let n = shape.iter().product();
        let value = (0..n).map(|_| rng.random_range(-a..=a)).collect();
        Param::new(name, shape, value)
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Affine map `y = W x + b`, `W` stored `output × input`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Param,
    pub b: Param,
    pub input: usize,
    pub output: usize,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(name: &str, input: usize, output: usize, rng: &mut R) -> Self {
        Dense {
            w: Param::glorot(format!("{name}.w"), vec![output, input], input, output, rng),
            b: Param::zeros(format!("{name}.b"), vec![output]),
            input,
            output,
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.b.value.clone();
        mat_vec_acc(&self.w.value, x, &mut y);
        y
    }

    /// Row-wise forward over `rows` stacked inputs.
    pub fn forward_batch(&self, x: &[f64], rows: usize) -> Vec<f64> {
        let mut y: Vec<f64> = (0..rows).flat_map(|_| self.b.value.iter().copied()).collect();
        gemm(Tr::N, Tr::T, rows, self.output, self.input, 1.0, x, &self.w.value, 1.0, &mut y);
        y
    }

    /// Accumulate parameter gradients for stacked inputs `x` and output
    /// gradients `dy`; returns the input gradients when asked.
    pub fn backward_batch(&mut self, x: &[f64], dy: &[f64], rows: usize, want_dx: bool) -> Option<Vec<f64>> {
        gemm(Tr::T, Tr::N, self.output, self.input, rows, 1.0, dy, x, 1.0, &mut self.w.grad);
        for row in dy.chunks_exact(self.output) {
            for (g, d) in self.b.grad.iter_mut().zip(row) {
                *g += d;
            }
        }
        want_dx.then(|| {
            let mut dx = vec![0.0; rows * self.input];
            gemm(Tr::N, Tr::N, rows, self.input, self.output, 1.0, dy, &self.w.value, 0.0, &mut dx);
            dx
        })
    }

    pub fn params(&self) -> [&Param; 2] {
        [&self.w, &self.b]
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.w, &mut self.b]
    }
}

pub fn relu_in_place(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

/// Zero gradients where the rectified output was not positive.
pub fn relu_backward(out: &[f64], grad: &mut [f64]) {
    for (g, &y) in grad.iter_mut().zip(out) {
        if y <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Gated recurrent cell with input, forget, candidate and output gates (in that order).
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    pub wx: Param,
    pub wh: Param,
    pub b: Param,
    pub input: usize,
    pub hidden: usize,
}

/// Everything one cell step needs for backpropagation.
#[derive(Debug, Clone)]
pub struct LstmStep {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    /// Post-activation gates `[i, f, g, o]`.
    pub gates: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

impl Lstm {
    pub fn new<R: Rng + ?Sized>(name: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        let g = 4 * hidden;
        let mut b = Param::zeros(format!("{name}.b"), vec![g]);
        b.value[hidden..2 * hidden].iter_mut().for_each(|v| *v = 1.0);
        Lstm {
            wx: Param::glorot(format!("{name}.wx"), vec![g, input], input, g, rng),
            wh: Param::glorot(format!("{name}.wh"), vec![g, hidden], hidden, g, rng),
            b,
            input,
            hidden,
        }
    }

    pub fn step(&self, x: Vec<f64>, prev: &RecurrentState) -> LstmStep {
        let h = self.hidden;
        let mut pre = self.b.value.clone();
        mat_vec_acc(&self.wx.value, &x, &mut pre);
        mat_vec_acc(&self.wh.value, &prev.h, &mut pre);
        let mut gates = pre;
        for (k, z) in gates.iter_mut().enumerate() {
            *z = if (2 * h..3 * h).contains(&k) { z.tanh() } else { sigmoid(*z) };
        }
        let mut c = vec![0.0; h];
        let mut tanh_c = vec![0.0; h];
        let mut out = vec![0.0; h];
        for j in 0..h {
            c[j] = gates[h + j] * prev.c[j] + gates[j] * gates[2 * h + j];
            tanh_c[j] = c[j].tanh();
            out[j] = gates[3 * h + j] * tanh_c[j];
        }
        LstmStep { x, h_prev: prev.h.clone(), c_prev: prev.c.clone(), gates, c, tanh_c, h: out }
    }

    /// Backpropagation through time over a whole sequence that started from a
    /// constant state. `dh[t]` is the loss gradient w.r.t. `steps[t].h` from
    /// everything except the recurrence.
    pub fn backward(&mut self, steps: &[&LstmStep], dh: &[Vec<f64>], want_dx: bool) -> Option<Vec<Vec<f64>>> {
        let h = self.hidden;
        let g = 4 * h;
        let t_len = steps.len();
        assert_eq!(dh.len(), t_len);
        let mut da = vec![0.0; t_len * g];
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        for t in (0..t_len).rev() {
            let s = steps[t];
            let row = &mut da[t * g..(t + 1) * g];
            for j in 0..h {
                let (i, f, gg, o) = (s.gates[j], s.gates[h + j], s.gates[2 * h + j], s.gates[3 * h + j]);
                let tc = s.tanh_c[j];
                let dhj = dh[t][j] + dh_next[j];
                let d_o = dhj * tc;
                let dc = dc_next[j] + dhj * o * (1.0 - tc * tc);
                row[j] = dc * gg * i * (1.0 - i);
                row[h + j] = dc * s.c_prev[j] * f * (1.0 - f);
                row[2 * h + j] = dc * i * (1.0 - gg * gg);
                row[3 * h + j] = d_o * o * (1.0 - o);
                dc_next[j] = dc * f;
            }
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            mat_t_vec_acc(&self.wh.value, row, &mut dh_next);
        }
        let xs: Vec<f64> = steps.iter().flat_map(|s| s.x.iter().copied()).collect();
        let hs: Vec<f64> = steps.iter().flat_map(|s| s.h_prev.iter().copied()).collect();
        gemm(Tr::T, Tr::N, g, self.input, t_len, 1.0, &da, &xs, 1.0, &mut self.wx.grad);
        gemm(Tr::T, Tr::N, g, h, t_len, 1.0, &da, &hs, 1.0, &mut self.wh.grad);
        for row in da.chunks_exact(g) {
            for (gb, d) in self.b.grad.iter_mut().zip(row) {
                *gb += d;
            }
        }
        want_dx.then(|| {
            let mut dx = vec![0.0; t_len * self.input];
            gemm(Tr::N, Tr::N, t_len, self.input, g, 1.0, &da, &self.wx.value, 0.0, &mut dx);
            dx.chunks_exact(self.input).map(<[f64]>::to_vec).collect()
        })
    }

    pub fn params(&self) -> [&Param; 3] {
        [&self.wx, &self.wh, &self.b]
    }

    pub fn params_mut(&mut self) -> [&mut Param; 3] {
        [&mut self.wx, &mut self.wh, &mut self.b]
    }
}
