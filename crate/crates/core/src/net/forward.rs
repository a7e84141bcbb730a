use crate::cohort::LabParameter;
use crate::encoding::{denormalize, encode_discrete, Window, CH_CODE, CH_FLAG, CH_VALUE};
use crate::error::{GlpError, Result};
use crate::framing::WINDOW;

use super::{GlpParams, LibcParams, LstmCell, RegressorParams, BIDIR, GATES, HIDDEN, INPUT, REG_HIDDEN};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn relu<const N: usize>(x: &[f64; N]) -> [f64; N] {
    x.map(|v| v.max(0.0))
}

/// Everything one LSTM step needs for backprop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LstmStep {
    pub x: [f64; INPUT],
    pub h_prev: [f64; HIDDEN],
    pub c_prev: [f64; HIDDEN],
    /// Post-activation gates: input, forget, candidate, output.
    pub gates: [f64; GATES],
    pub c: [f64; HIDDEN],
    pub tanh_c: [f64; HIDDEN],
    pub h: [f64; HIDDEN],
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmTrace {
    pub steps: [LstmStep; WINDOW],
}

impl LstmCell {
    fn step(&self, x: &[f64; INPUT], h_prev: &[f64; HIDDEN], c_prev: &[f64; HIDDEN]) -> LstmStep {
        let mut gates = self.b;
        for (g, z) in gates.iter_mut().enumerate() {
            *z += self.w_x[g].iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            *z += self.w_h[g].iter().zip(h_prev).map(|(w, v)| w * v).sum::<f64>();
        }
        for (k, z) in gates.iter_mut().enumerate() {
            *z = if (2 * HIDDEN..3 * HIDDEN).contains(&k) { z.tanh() } else { sigmoid(*z) };
        }
        let mut c = [0.0; HIDDEN];
        let mut tanh_c = [0.0; HIDDEN];
        let mut h = [0.0; HIDDEN];
        for j in 0..HIDDEN {
            let (i, f, g, o) = (gates[j], gates[HIDDEN + j], gates[2 * HIDDEN + j], gates[3 * HIDDEN + j]);
            c[j] = f * c_prev[j] + i * g;
            tanh_c[j] = c[j].tanh();
            h[j] = o * tanh_c[j];
        }
        LstmStep { x: *x, h_prev: *h_prev, c_prev: *c_prev, gates, c, tanh_c, h }
    }

    /// Run over `xs` in the given order.
    fn run(&self, xs: impl Iterator<Item = [f64; INPUT]>) -> LstmTrace {
        let mut h = [0.0; HIDDEN];
        let mut c = [0.0; HIDDEN];
        let steps: Vec<LstmStep> = xs
            .map(|x| {
                let s = self.step(&x, &h, &c);
                h = s.h;
                c = s.c;
                s
            })
            .collect();
        LstmTrace { steps: steps.try_into().expect("WINDOW steps") }
    }
}

/// Intermediates of one LIBC application.
#[derive(Debug, Clone, PartialEq)]
pub struct LibcTrace {
    pub input: Window,
    pub fwd: LstmTrace,
    /// `bwd.steps[s]` consumed `input[WINDOW - 1 - s]`.
    pub bwd: LstmTrace,
    /// `[h_fwd_t, h_bwd_t]` before ReLU.
    pub hidden: [[f64; BIDIR]; WINDOW],
    /// Condensing layer pre-activation.
    pub pre: Window,
    pub output: Window,
}

impl LibcTrace {
    pub fn final_latent(&self) -> [f64; INPUT] {
        self.output[WINDOW - 1]
    }
}

pub(crate) fn libc_trace(libc: &LibcParams, input: &Window) -> LibcTrace {
    let fwd = libc.forward.run(input.iter().copied());
    let bwd = libc.backward.run(input.iter().rev().copied());
    let mut hidden = [[0.0; BIDIR]; WINDOW];
    let mut pre = [[0.0; INPUT]; WINDOW];
    let mut output = [[0.0; INPUT]; WINDOW];
    for t in 0..WINDOW {
        hidden[t][..HIDDEN].copy_from_slice(&fwd.steps[t].h);
        hidden[t][HIDDEN..].copy_from_slice(&bwd.steps[WINDOW - 1 - t].h);
        pre[t] = libc.condense.forward(&relu(&hidden[t]));
        output[t] = relu(&pre[t]);
    }
    LibcTrace { input: *input, fwd, bwd, hidden, pre, output }
}

/// One LIBC application: bidirectional LSTM, ReLU, condensing map, ReLU.
pub fn libc_forward(libc: &LibcParams, input: &Window) -> Result<LibcTrace> {
    if input.iter().flatten().any(|v| !v.is_finite()) {
        return Err(GlpError::Numeric("non-finite LIBC input".into()));
    }
    Ok(libc_trace(libc, input))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressorTrace {
    pub input: [f64; INPUT],
    pub z1: [f64; REG_HIDDEN],
    pub a1: [f64; REG_HIDDEN],
    pub z2: [f64; REG_HIDDEN],
    pub a2: [f64; REG_HIDDEN],
    pub output: f64,
}

pub(crate) fn regressor_trace(reg: &RegressorParams, latent: &[f64; INPUT]) -> RegressorTrace {
    let z1 = reg.hidden1.forward(latent);
    let a1 = relu(&z1);
    let z2 = reg.hidden2.forward(&a1);
    let a2 = relu(&z2);
    let output = reg.output.forward(&a2)[0];
    RegressorTrace { input: *latent, z1, a1, z2, a2, output }
}

/// Affine 5 -> 2, ReLU, affine 2 -> 2, ReLU, affine 2 -> 1.
pub fn regressor_forward(reg: &RegressorParams, latent: &[f64; INPUT]) -> Result<f64> {
    if latent.iter().any(|v| !v.is_finite()) {
        return Err(GlpError::Numeric("non-finite regressor input".into()));
    }
    Ok(regressor_trace(reg, latent).output)
}

/// Turn one LIBC output into the next LIBC input. The final month is the
/// newly generated one: it is flagged estimated and its discrete code is
/// recomputed from the denormalized value channel.
pub fn next_input(parameter: LabParameter, output: &Window) -> Window {
    let mut next = *output;
    let last = &mut next[WINDOW - 1];
    last[CH_FLAG] = 0.0;
    last[CH_CODE] = f64::from(encode_discrete(parameter, denormalize(last[CH_VALUE])));
    next
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub passes: Vec<LibcTrace>,
    pub regressor: RegressorTrace,
    pub prediction: f64,
}

impl Rollout {
    /// Final-month LIBC output after each pass.
    pub fn trajectory(&self) -> Vec<[f64; INPUT]> {
        self.passes.iter().map(LibcTrace::final_latent).collect()
    }

    /// The latent fed to the regressor.
    pub fn latent(&self) -> [f64; INPUT] {
        self.regressor.input
    }
}

/// `max(g, 1)` LIBC applications, each output feeding the next, then the
/// regressor on the final month of the last pass.
pub fn rollout(params: &GlpParams, parameter: LabParameter, input: &Window, gap: u32) -> Rollout {
    let passes_needed = gap.max(1) as usize;
    let mut passes = Vec::with_capacity(passes_needed);
    let mut x = *input;
    for k in 0..passes_needed {
        let trace = libc_trace(&params.libc, &x);
        if k + 1 < passes_needed {
            x = next_input(parameter, &trace.output);
        }
        passes.push(trace);
    }
    let latent = passes.last().expect("at least one pass").final_latent();
    let regressor = regressor_trace(&params.regressor, &latent);
    let prediction = regressor.output;
    Rollout { passes, regressor, prediction }
}

/// Mean squared error.
pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(GlpError::Shape { expected: target.len(), got: pred.len() });
    }
    if pred.is_empty() {
        return Err(GlpError::Precondition("mse of empty vectors".into()));
    }
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pred.len() as f64)
}
