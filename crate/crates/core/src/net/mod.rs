//! The LIBC encoder and regressor, written out by hand.
//!
//! LIBC is a bidirectional LSTM (hidden size 5 per direction) followed by a
//! per-month affine map 10 -> 5 that condenses the recurrent state back to
//! the input width, with ReLU after both layers. The regressor maps the
//! final-month LIBC output through 5 -> 2 -> 2 -> 1 with ReLU between maps.
//!
//! Parameters are plain arrays; the flat order returned by
//! [`GlpParams::to_vec`] is the weight-file order:
//!
//! 1. forward LSTM cell, then backward LSTM cell, each as `w_x` (20 x 5,
//!    row-major), `w_h` (20 x 5), `b` (20). Gate rows are grouped
//!    input, forget, candidate, output, five rows each.
//! 2. condensing map `w` (5 x 10), `b` (5)
//! 3. regressor maps 5 -> 2, 2 -> 2, 2 -> 1, each `w` then `b`

mod adam;
mod backward;
mod forward;
mod model;


pub use adam::{adam_step, AdamConfig, AdamState};
pub use backward::{batch_gradients, sample_gradients, BackpropOptions, BatchGradients};
pub use forward::{
    libc_forward, mse, next_input, regressor_forward, rollout, LibcTrace, LstmTrace, RegressorTrace, Rollout,
};
pub use model::{load_weights, save_weights, GlpModel, FORMAT_VERSION, MAGIC, WEIGHT_FILE_LEN};

use crate::encoding::CHANNELS;

pub const INPUT: usize = CHANNELS;
pub const HIDDEN: usize = 5;
pub const GATES: usize = 4 * HIDDEN;
pub const BIDIR: usize = 2 * HIDDEN;
pub const REG_HIDDEN: usize = 2;
/// Initial bias of the condensing and regressor hidden maps.
pub const RELU_BIAS_INIT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<const I: usize, const O: usize> {
    pub w: [[f64; I]; O],
    pub b: [f64; O],
}

impl<const I: usize, const O: usize> Dense<I, O> {
    pub const LEN: usize = I * O + O;

    pub fn zeros() -> Self {
        Self { w: [[0.0; I]; O], b: [0.0; O] }
    }

    pub fn forward(&self, x: &[f64; I]) -> [f64; O] {
        let mut y = self.b;
        for (yo, row) in y.iter_mut().zip(&self.w) {
            *yo += row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
        }
        y
    }

    /// Accumulate parameter gradients into `grad`, return `dL/dx`.
    pub fn backward(&self, x: &[f64; I], dy: &[f64; O], grad: &mut Self) -> [f64; I] {
        let mut dx = [0.0; I];
        for o in 0..O {
            let d = dy[o];
            if d == 0.0 {
                continue;
            }
            grad.b[o] += d;
            for i in 0..I {
                grad.w[o][i] += d * x[i];
                dx[i] += d * self.w[o][i];
            }
        }
        dx
    }

    fn glorot(rng: &mut impl rand::Rng) -> Self {
        let limit = (6.0 / (I + O) as f64).sqrt();
        let mut d = Self::zeros();
        for row in &mut d.w {
            for w in row.iter_mut() {
                *w = rng.random_range(-limit..limit);
            }
        }
        d
    }

    fn visit(&self, f: &mut dyn FnMut(f64)) {
        self.w.iter().flatten().chain(&self.b).for_each(|&v| f(v));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut f64)) {
        self.w.iter_mut().flatten().chain(self.b.iter_mut()).for_each(f);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    pub w_x: [[f64; INPUT]; GATES],
    pub w_h: [[f64; HIDDEN]; GATES],
    pub b: [f64; GATES],
}

impl LstmCell {
    pub const LEN: usize = GATES * INPUT + GATES * HIDDEN + GATES;

    pub fn zeros() -> Self {
        Self { w_x: [[0.0; INPUT]; GATES], w_h: [[0.0; HIDDEN]; GATES], b: [0.0; GATES] }
    }

    /// Glorot-uniform per gate block over `[w_x | w_h]`; forget bias 1.
    fn init(rng: &mut impl rand::Rng) -> Self {
        let limit = (6.0 / (INPUT + HIDDEN + HIDDEN) as f64).sqrt();
        let mut c = Self::zeros();
        for g in 0..GATES {
            for w in c.w_x[g].iter_mut().chain(c.w_h[g].iter_mut()) {
                *w = rng.random_range(-limit..limit);
            }
        }
        for b in &mut c.b[HIDDEN..2 * HIDDEN] {
            *b = 1.0;
        }
        c
    }

    fn visit(&self, f: &mut dyn FnMut(f64)) {
        self.w_x.iter().flatten().chain(self.w_h.iter().flatten()).chain(&self.b).for_each(|&v| f(v));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut f64)) {
        self.w_x
            .iter_mut()
            .flatten()
            .chain(self.w_h.iter_mut().flatten())
            .chain(self.b.iter_mut())
            .for_each(f);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LibcParams {
    pub forward: LstmCell,
    pub backward: LstmCell,
    pub condense: Dense<BIDIR, INPUT>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressorParams {
    pub hidden1: Dense<INPUT, REG_HIDDEN>,
    pub hidden2: Dense<REG_HIDDEN, REG_HIDDEN>,
    pub output: Dense<REG_HIDDEN, 1>,
}

/// All trainable weights of one GLP model. Also used as the gradient and
/// moment buffers, which share its shape.
#[derive(Debug, Clone, PartialEq)]
pub struct GlpParams {
    pub libc: LibcParams,
    pub regressor: RegressorParams,
}

/// Total number of trainable scalars.
pub const PARAM_COUNT: usize = 2 * LstmCell::LEN
    + Dense::<BIDIR, INPUT>::LEN
    + Dense::<INPUT, REG_HIDDEN>::LEN
    + Dense::<REG_HIDDEN, REG_HIDDEN>::LEN
    + Dense::<REG_HIDDEN, 1>::LEN;

impl GlpParams {
    pub fn zeros() -> Self {
        Self {
            libc: LibcParams { forward: LstmCell::zeros(), backward: LstmCell::zeros(), condense: Dense::zeros() },
            regressor: RegressorParams { hidden1: Dense::zeros(), hidden2: Dense::zeros(), output: Dense::zeros() },
        }
    }

    /// Glorot-uniform weights. Maps feeding a ReLU start with bias
    /// [`RELU_BIAS_INIT`], every other bias at 0 except the forget gates.
    pub fn init(rng: &mut impl rand::Rng) -> Self {
        let mut p = Self {
            libc: LibcParams {
                forward: LstmCell::init(rng),
                backward: LstmCell::init(rng),
                condense: Dense::glorot(rng),
            },
            regressor: RegressorParams {
                hidden1: Dense::glorot(rng),
                hidden2: Dense::glorot(rng),
                output: Dense::glorot(rng),
            },
        };
        p.libc.condense.b = [RELU_BIAS_INIT; INPUT];
        p.regressor.hidden1.b = [RELU_BIAS_INIT; REG_HIDDEN];
        p.regressor.hidden2.b = [RELU_BIAS_INIT; REG_HIDDEN];
        p
    }

    pub fn visit(&self, f: &mut dyn FnMut(f64)) {
        self.libc.forward.visit(f);
        self.libc.backward.visit(f);
        self.libc.condense.visit(f);
        self.regressor.hidden1.visit(f);
        self.regressor.hidden2.visit(f);
        self.regressor.output.visit(f);
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(&mut f64)) {
        self.libc.forward.visit_mut(f);
        self.libc.backward.visit_mut(f);
        self.libc.condense.visit_mut(f);
        self.regressor.hidden1.visit_mut(f);
        self.regressor.hidden2.visit_mut(f);
        self.regressor.output.visit_mut(f);
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(PARAM_COUNT);
        self.visit(&mut |x| v.push(x));
        v
    }

    pub fn from_slice(values: &[f64]) -> crate::Result<Self> {
        if values.len() != PARAM_COUNT {
            return Err(crate::GlpError::Shape { expected: PARAM_COUNT, got: values.len() });
        }
        let mut p = Self::zeros();
        let mut it = values.iter();
        p.visit_mut(&mut |x| *x = *it.next().expect("length checked"));
        Ok(p)
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Self, scale: f64) {
        let src = other.to_vec();
        let mut it = src.iter();
        self.visit_mut(&mut |x| *x += scale * it.next().expect("same shape"));
    }

    pub fn scale(&mut self, s: f64) {
        self.visit_mut(&mut |x| *x *= s);
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |x| ok &= x.is_finite());
        ok
    }
}
