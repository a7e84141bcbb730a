//! Reverse-mode gradients for the two training graphs.
//!
//! Stage-1 graph: one LIBC pass, regressor. Stage-2 graph: `g` chained LIBC
//! passes, regressor. Gradients flow back through every pass unless
//! `stop_gradient` is set, in which case only the last pass is trained.

use crate::cohort::LabParameter;
use crate::encoding::{Window, CH_CODE, CH_FLAG};
use crate::error::{GlpError, Result};
use crate::framing::{Frame, WINDOW};

use super::forward::{rollout, LibcTrace, LstmTrace, RegressorTrace};
use super::{GlpParams, LibcParams, LstmCell, RegressorParams, BIDIR, HIDDEN, INPUT};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BackpropOptions {
    /// Treat each pass's input as a constant.
    pub stop_gradient: bool,
}

fn relu_mask<const N: usize>(pre: &[f64; N], d: &[f64; N]) -> [f64; N] {
    let mut out = [0.0; N];
    for k in 0..N {
        if pre[k] > 0.0 {
            out[k] = d[k];
        }
    }
    out
}

impl LstmCell {
    /// BPTT over one direction. `dh_ext[s]` is the loss gradient arriving at
    /// step `s`'s hidden output; returns `dL/dx` per step.
    fn backward(&self, trace: &LstmTrace, dh_ext: &[[f64; HIDDEN]; WINDOW], grad: &mut LstmCell) -> [[f64; INPUT]; WINDOW] {
        let mut dx = [[0.0; INPUT]; WINDOW];
        let mut dh_next = [0.0; HIDDEN];
        let mut dc_next = [0.0; HIDDEN];
        for s in (0..WINDOW).rev() {
            let st = &trace.steps[s];
            let mut dz = [0.0; 4 * HIDDEN];
            for j in 0..HIDDEN {
                let (i, f, g, o) = (st.gates[j], st.gates[HIDDEN + j], st.gates[2 * HIDDEN + j], st.gates[3 * HIDDEN + j]);
                let dh = dh_ext[s][j] + dh_next[j];
                let d_o = dh * st.tanh_c[j];
                let dc = dc_next[j] + dh * o * (1.0 - st.tanh_c[j] * st.tanh_c[j]);
                dz[j] = dc * g * i * (1.0 - i);
                dz[HIDDEN + j] = dc * st.c_prev[j] * f * (1.0 - f);
                dz[2 * HIDDEN + j] = dc * i * (1.0 - g * g);
                dz[3 * HIDDEN + j] = d_o * o * (1.0 - o);
                dc_next[j] = dc * f;
            }
            let mut dh_prev = [0.0; HIDDEN];
            for (gate, &d) in dz.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                grad.b[gate] += d;
                for k in 0..INPUT {
                    grad.w_x[gate][k] += d * st.x[k];
                    dx[s][k] += d * self.w_x[gate][k];
                }
                for k in 0..HIDDEN {
                    grad.w_h[gate][k] += d * st.h_prev[k];
                    dh_prev[k] += d * self.w_h[gate][k];
                }
            }
            dh_next = dh_prev;
        }
        dx
    }
}

/// Backprop one LIBC pass given `dL/d output`; returns `dL/d input`.
fn libc_backward(libc: &LibcParams, trace: &LibcTrace, d_output: &Window, grad: &mut LibcParams) -> Window {
    let mut dh_fwd = [[0.0; HIDDEN]; WINDOW];
    let mut dh_bwd = [[0.0; HIDDEN]; WINDOW];
    for t in 0..WINDOW {
        let d_pre = relu_mask(&trace.pre[t], &d_output[t]);
        if d_pre.iter().all(|&v| v == 0.0) {
            continue;
        }
        let act = trace.hidden[t].map(|v| v.max(0.0));
        let d_act = libc.condense.backward(&act, &d_pre, &mut grad.condense);
        let d_hidden: [f64; BIDIR] = relu_mask(&trace.hidden[t], &d_act);
        dh_fwd[t].copy_from_slice(&d_hidden[..HIDDEN]);
        dh_bwd[WINDOW - 1 - t].copy_from_slice(&d_hidden[HIDDEN..]);
    }
    let dx_fwd = libc.forward.backward(&trace.fwd, &dh_fwd, &mut grad.forward);
    let dx_bwd = libc.backward.backward(&trace.bwd, &dh_bwd, &mut grad.backward);
    let mut dx = dx_fwd;
    for t in 0..WINDOW {
        for k in 0..INPUT {
            dx[t][k] += dx_bwd[WINDOW - 1 - t][k];
        }
    }
    dx
}

fn regressor_backward(reg: &RegressorParams, trace: &RegressorTrace, d_out: f64, grad: &mut RegressorParams) -> [f64; INPUT] {
    let d_a2 = reg.output.backward(&trace.a2, &[d_out], &mut grad.output);
    let d_z2 = relu_mask(&trace.z2, &d_a2);
    let d_a1 = reg.hidden2.backward(&trace.a1, &d_z2, &mut grad.hidden2);
    let d_z1 = relu_mask(&trace.z1, &d_a1);
    reg.hidden1.backward(&trace.input, &d_z1, &mut grad.hidden1)
}

/// Forward + backward for one sample. `d_pred_scale` multiplies
/// `d(pred - target)^2 / d pred`; pass `1 / batch_len` for a batch mean.
/// Returns the prediction.
#[allow(clippy::too_many_arguments)]
pub fn sample_gradients(
    params: &GlpParams,
    parameter: LabParameter,
    input: &Window,
    gap: u32,
    target: f64,
    d_pred_scale: f64,
    opts: BackpropOptions,
    grads: &mut GlpParams,
) -> f64 {
    let run = rollout(params, parameter, input, gap);
    let d_pred = 2.0 * (run.prediction - target) * d_pred_scale;
    let d_latent = regressor_backward(&params.regressor, &run.regressor, d_pred, &mut grads.regressor);

    let mut d_output = [[0.0; INPUT]; WINDOW];
    d_output[WINDOW - 1] = d_latent;
    for (k, pass) in run.passes.iter().enumerate().rev() {
        let d_input = libc_backward(&params.libc, pass, &d_output, &mut grads.libc);
        if k == 0 || opts.stop_gradient {
            break;
        }
        // The previous pass produced this input, except for the overwritten
        // flag and code channels of the final month.
        d_output = d_input;
        d_output[WINDOW - 1][CH_FLAG] = 0.0;
        d_output[WINDOW - 1][CH_CODE] = 0.0;
    }
    run.prediction
}

#[derive(Debug, Clone)]
pub struct BatchGradients {
    /// Batch-mean squared error.
    pub loss: f64,
    pub grads: GlpParams,
    pub predictions: Vec<f64>,
}

/// Gradients of the batch-mean MSE over `frames`, each rolled out with its
/// own gap.
pub fn batch_gradients(params: &GlpParams, frames: &[&Frame], opts: BackpropOptions) -> Result<BatchGradients> {
    let Some(first) = frames.first() else {
        return Err(GlpError::Precondition("empty batch".into()));
    };
    let parameter = first.parameter;
    if let Some(f) = frames.iter().find(|f| f.parameter != parameter) {
        return Err(GlpError::ParameterMismatch { expected: parameter, found: f.parameter });
    }
    let scale = 1.0 / frames.len() as f64;
    let mut grads = GlpParams::zeros();
    let mut predictions = Vec::with_capacity(frames.len());
    let mut loss = 0.0;
    for f in frames {
        let pred = sample_gradients(params, parameter, &f.input, f.gap, f.target, scale, opts, &mut grads);
        loss += (pred - f.target).powi(2) * scale;
        predictions.push(pred);
    }
    Ok(BatchGradients { loss, grads, predictions })
}
