//! Central finite-difference check of the analytic gradients.

use glp::encoding::{encode_discrete, normalize, Window, CH_AGE, CH_CODE, CH_FLAG, CH_GENDER, CH_VALUE};
use glp::net::{batch_gradients, rollout, BackpropOptions, GlpParams};
use glp::rng::rng_for;
use glp::{Frame, LabParameter, WINDOW};
use rand::Rng;
use rand_distr::{Distribution, Normal};

pub const STEP: f64 = 1e-5;
pub const REL_FLOOR: f64 = 1e-6;

fn random_frame(rng: &mut impl Rng, parameter: LabParameter, gap: u32) -> Frame {
    let centre: f64 = match parameter {
        LabParameter::CholHdlRatio => 4.5,
        LabParameter::LdlC => 120.0,
        LabParameter::LdlHdlRatio => 3.0,
        LabParameter::GlucoseAc => 100.0,
        LabParameter::Wbc => 7.0,
        LabParameter::Ua => 6.0,
    };
    let spread: Normal<f64> = Normal::new(0.0, 0.25).unwrap();
    let age: f64 = rng.random_range(40.0..80.0);
    let male = rng.random_bool(0.5);
    let mut input: Window = [[0.0; 5]; WINDOW];
    for (k, row) in input.iter_mut().enumerate() {
        let v = centre * spread.sample(rng).exp();
        row[CH_AGE] = normalize(age + k as f64 / 12.0).unwrap();
        row[CH_GENDER] = if male { 1.0 } else { 0.0 };
        row[CH_FLAG] = if rng.random_bool(0.4) { 1.0 } else { 0.0 };
        row[CH_CODE] = f64::from(encode_discrete(parameter, v));
        row[CH_VALUE] = normalize(v).unwrap();
    }
    let target = normalize(centre * spread.sample(rng).exp()).unwrap();
    Frame {
        patient_id: "G".into(),
        parameter,
        start_month: 0,
        target_month: 13 + gap,
        input,
        target,
        gap,
        real_count: 5,
    }
}

/// Batch loss plus the sign pattern of every ReLU and the recomputed codes;
/// a pattern change between probe points means the difference straddles a
/// kink.
fn evaluate(params: &GlpParams, frames: &[Frame]) -> (f64, Vec<bool>) {
    let n = frames.len() as f64;
    let mut loss = 0.0;
    let mut fp = Vec::new();
    for f in frames {
        let run = rollout(params, f.parameter, &f.input, f.gap);
        loss += (run.prediction - f.target).powi(2) / n;
        for (k, pass) in run.passes.iter().enumerate() {
            fp.extend(pass.hidden.iter().flatten().map(|&z| z > 0.0));
            fp.extend(pass.pre.iter().flatten().map(|&z| z > 0.0));
            if k > 0 {
                let code = pass.input[WINDOW - 1][CH_CODE] as u8;
                fp.extend([code & 1 == 1, code & 2 == 2]);
            }
        }
        fp.extend(run.regressor.z1.iter().chain(&run.regressor.z2).map(|&z| z > 0.0));
    }
    (loss, fp)
}

fn numeric(base: &[f64], frames: &[Frame], index: usize, at: &(f64, Vec<bool>)) -> f64 {
    let probe = |delta: f64| {
        let mut v = base.to_vec();
        v[index] += delta;
        evaluate(&GlpParams::from_slice(&v).unwrap(), frames)
    };
    let (l0, fp0) = at;
    let mut h = STEP;
    for _ in 0..4 {
        let ((lp, fp_p), (lm, fp_m)) = (probe(h), probe(-h));
        if fp_p == *fp0 && fp_m == *fp0 {
            return (lp - lm) / (2.0 * h);
        }
        h /= 10.0;
    }
    // Still straddling: one-sided on the smooth side.
    let (lp, fp_p) = probe(h);
    if fp_p == *fp0 {
        (lp - l0) / h
    } else {
        (l0 - probe(-h).0) / h
    }
}

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone, Copy)]
pub struct CheckResult {
    pub max_rel_err: f64,
    pub nonzero: usize,
}

fn regressor_live(params: &GlpParams, frames: &[Frame]) -> bool {
    frames.iter().all(|f| {
        let r = rollout(params, f.parameter, &f.input, f.gap).regressor;
        r.z1.iter().any(|&z| z > 0.0) && r.z2.iter().any(|&z| z > 0.0)
    })
}

/// Max relative error over all parameters for a random batch with the
/// given gap. Parameters are a perturbed initialization redrawn until the
/// regressor path is live; targets sit O(1) away from the predictions so
/// the loss stays small enough for a 1e-5 difference quotient.
pub fn check(seed: u64, gap: u32, batch: usize) -> CheckResult {
    let mut rng = rng_for(seed, "gradcheck", u64::from(gap));
    let parameter = LabParameter::ALL[rng.random_range(0..6)];
    let mut frames: Vec<Frame> = (0..batch).map(|_| random_frame(&mut rng, parameter, gap)).collect();
    let jitter: Normal<f64> = Normal::new(0.0, 0.2).unwrap();
    let params = loop {
        let mut p = GlpParams::init(&mut rng);
        p.visit_mut(&mut |x| *x += jitter.sample(&mut rng));
        if regressor_live(&p, &frames) {
            break p;
        }
    };
    let residual: Normal<f64> = Normal::new(0.0, 0.3).unwrap();
    for f in &mut frames {
        f.target = rollout(&params, parameter, &f.input, gap).prediction + residual.sample(&mut rng);
    }
    let refs: Vec<&Frame> = frames.iter().collect();
    let analytic = batch_gradients(&params, &refs, BackpropOptions::default()).unwrap().grads.to_vec();
    let base = params.to_vec();
    let at = evaluate(&params, &frames);
    let mut max_rel_err: f64 = 0.0;
    let mut nonzero = 0;
    for (i, &a) in analytic.iter().enumerate() {
        let n = numeric(&base, &frames, i, &at);
        if a != 0.0 {
            nonzero += 1;
        }
        max_rel_err = max_rel_err.max(relative_error(a, n));
    }
    CheckResult { max_rel_err, nonzero }
}
