use rand::seq::SliceRandom;

use super::{Method, TrainConfig};
use crate::cohort::LabParameter;
use crate::error::{GlpError, Result};
use crate::framing::Frame;
use crate::net::{adam_step, batch_gradients, AdamState, BackpropOptions, GlpModel, GlpParams};
use crate::rng::{derive, rng_for, Rng};
use crate::stats::r_squared;

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: GlpModel,
    /// Mean per-sample training loss of each epoch, measured before each
    /// batch's update.
    pub epoch_losses: Vec<f64>,
}

/// Batches for one epoch: shuffle, group by gap (stable), chunk, shuffle the
/// batch order.
fn epoch_batches(frames: &[&Frame], batch_size: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..frames.len()).collect();
    order.shuffle(rng);
    order.sort_by_key(|&i| frames[i].gap);
    let mut batches: Vec<Vec<usize>> = order
        .chunk_by(|&a, &b| frames[a].gap == frames[b].gap)
        .flat_map(|bucket| bucket.chunks(batch_size).map(<[usize]>::to_vec))
        .collect();
    batches.shuffle(rng);
    batches
}

fn fit(mut params: GlpParams, frames: &[&Frame], config: &TrainConfig, rng: &mut Rng) -> Result<(GlpParams, Vec<f64>)> {
    let opts = BackpropOptions { stop_gradient: config.stop_gradient };
    let mut adam = AdamState::new(config.adam);
    let mut losses = Vec::with_capacity(config.epochs);
    let mut batch: Vec<&Frame> = Vec::with_capacity(config.batch_size);
    for epoch in 0..config.epochs {
        let mut total = 0.0;
        for idx in epoch_batches(frames, config.batch_size, rng) {
            batch.clear();
            batch.extend(idx.iter().map(|&i| frames[i]));
            let g = batch_gradients(&params, &batch, opts)?;
            total += g.loss * batch.len() as f64;
            adam_step(&mut params, &g.grads, &mut adam)?;
        }
        if !params.is_finite() {
            return Err(GlpError::Training(format!("parameters diverged in epoch {epoch}")));
        }
        losses.push(total / frames.len() as f64);
    }
    Ok((params, losses))
}

fn parameter_of(frames: &[&Frame], what: &str) -> Result<LabParameter> {
    let first = frames.first().ok_or_else(|| GlpError::Training(format!("no frames after certainty filter ({what})")))?;
    Ok(first.parameter)
}

fn shuffle_rng(config: &TrainConfig, parameter: LabParameter) -> Rng {
    rng_for(config.seed, "shuffle", parameter.index() as u64)
}

/// Draws tried before accepting an initialization that is constant on the
/// training frames.
const INIT_DRAWS: usize = 16;
/// Full training runs tried before accepting a collapsed model.
const RESTARTS: u64 = 8;
/// Prediction range under which a model counts as constant.
const COLLAPSE_RANGE: f64 = 1e-9;

/// True when every frame gets the same prediction, i.e. some regressor
/// layer is dead on the whole training set.
fn is_collapsed(model: &GlpModel, frames: &[&Frame]) -> bool {
    let (lo, hi) = frames
        .iter()
        .map(|f| model.predict(&f.input, f.gap))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p), hi.max(p)));
    !(hi - lo > COLLAPSE_RANGE)
}

/// A new model whose output bias starts at the mean training target.
/// Initializations whose ReLU regressor is dead on every frame are redrawn.
fn fresh_model(config: &TrainConfig, frames: &[&Frame]) -> GlpModel {
    let parameter = frames[0].parameter;
    let mean = frames.iter().map(|f| f.target).sum::<f64>() / frames.len() as f64;
    let mut rng = rng_for(config.seed, "init", parameter.index() as u64);
    let mut model = GlpModel::init(parameter, config.certain, &mut rng);
    for _ in 1..INIT_DRAWS {
        if !is_collapsed(&model, frames) {
            break;
        }
        model = GlpModel::init(parameter, config.certain, &mut rng);
    }
    model.params.regressor.output.b[0] = mean;
    model
}

/// Supervised training on interpolated Stage-1 frames, from a fresh
/// initialization.
pub fn train_stage1(frames: &[&Frame], config: &TrainConfig) -> Result<TrainOutcome> {
    let parameter = parameter_of(frames, "stage 1")?;
    let model = fresh_model(config, frames);
    let (params, epoch_losses) = fit(model.params, frames, config, &mut shuffle_rng(config, parameter))?;
    Ok(TrainOutcome { model: GlpModel::new(params, parameter, config.certain), epoch_losses })
}

/// Self-supervised rollout training starting from `model`.
pub fn train_stage2(model: &GlpModel, frames: &[&Frame], config: &TrainConfig) -> Result<TrainOutcome> {
    let parameter = parameter_of(frames, "stage 2")?;
    model.expect_parameter(parameter)?;
    let (params, epoch_losses) = fit(model.params.clone(), frames, config, &mut shuffle_rng(config, parameter))?;
    Ok(TrainOutcome { model: GlpModel::new(params, parameter, model.certain), epoch_losses })
}

pub fn train_supervised_only(frames: &[&Frame], config: &TrainConfig) -> Result<TrainOutcome> {
    train_stage1(frames, config)
}

/// Stage-2 training from a fresh initialization.
pub fn train_ssl_only(frames: &[&Frame], config: &TrainConfig) -> Result<TrainOutcome> {
    parameter_of(frames, "stage 2")?;
    train_stage2(&fresh_model(config, frames), frames, config)
}

/// Stage-1 and Stage-2 frames mixed into one training set with one
/// optimizer state.
pub fn train_hybrid(stage1: &[&Frame], stage2: &[&Frame], config: &TrainConfig) -> Result<TrainOutcome> {
    let all: Vec<&Frame> = stage1.iter().chain(stage2).copied().collect();
    train_stage1(&all, config)
}

#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub model: GlpModel,
    /// The intermediate Stage-1 model of a two-stage run.
    pub stage1_model: Option<GlpModel>,
    pub epoch_losses: Vec<f64>,
}

/// Trains with `method`. A run that ends with a constant predictor is
/// repeated from a new seed, up to a fixed number of restarts.
pub fn train_method(method: Method, stage1: &[&Frame], stage2: &[&Frame], config: &TrainConfig) -> Result<MethodOutcome> {
    let frames: Vec<&Frame> = match method {
        Method::SupervisedOnly => stage1.to_vec(),
        Method::SslOnly => stage2.to_vec(),
        Method::Hybrid | Method::TwoStage => stage1.iter().chain(stage2).copied().collect(),
    };
    let mut outcome = train_method_once(method, stage1, stage2, config)?;
    for restart in 1..RESTARTS {
        if !is_collapsed(&outcome.model, &frames) {
            break;
        }
        log::debug!("{method} {:?}: collapsed to a constant, restart {restart}", outcome.model.parameter);
        let cfg = TrainConfig { seed: derive(config.seed, "restart", restart), ..config.clone() };
        outcome = train_method_once(method, stage1, stage2, &cfg)?;
    }
    Ok(outcome)
}

fn train_method_once(method: Method, stage1: &[&Frame], stage2: &[&Frame], config: &TrainConfig) -> Result<MethodOutcome> {
    let plain = |o: TrainOutcome| MethodOutcome { model: o.model, stage1_model: None, epoch_losses: o.epoch_losses };
    match method {
        Method::SupervisedOnly => train_supervised_only(stage1, config).map(plain),
        Method::SslOnly => train_ssl_only(stage2, config).map(plain),
        Method::Hybrid => train_hybrid(stage1, stage2, config).map(plain),
        Method::TwoStage => {
            let first = train_stage1(stage1, config)?;
            let second = train_stage2(&first.model, stage2, config)?;
            let mut epoch_losses = first.epoch_losses;
            epoch_losses.extend(second.epoch_losses);
            Ok(MethodOutcome { model: second.model, stage1_model: Some(first.model), epoch_losses })
        }
    }
}

pub fn predict_frames(model: &GlpModel, frames: &[&Frame]) -> Result<Vec<f64>> {
    frames
        .iter()
        .map(|f| {
            model.expect_parameter(f.parameter)?;
            Ok(model.predict(&f.input, f.gap))
        })
        .collect()
}

/// R² of the model's rollout predictions against the normalized targets.
pub fn evaluate_r2(model: &GlpModel, frames: &[&Frame]) -> Result<f64> {
    let preds = predict_frames(model, frames)?;
    let targets: Vec<f64> = frames.iter().map(|f| f.target).collect();
    r_squared(&targets, &preds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{generate_pretext_cohort, GeneratorSpec};
    use crate::interp::InterpMethod;
    use crate::pipeline::prepare_parameter;

    fn bank() -> crate::pipeline::FrameBank {
        let cohort = generate_pretext_cohort(&GeneratorSpec { n_patients: 12, seed: 4, ..Default::default() }).unwrap();
        prepare_parameter(&cohort, LabParameter::LdlC, InterpMethod::Pchip).unwrap()
    }

    fn quick() -> TrainConfig {
        TrainConfig { epochs: 4, batch_size: 8, ..Default::default() }
    }

    #[test]
    fn batches_are_gap_homogeneous_and_complete() {
        let b = bank();
        let idx: Vec<usize> = (0..b.patients.len()).collect();
        let mut frames = b.stage1(&idx, 0);
        frames.extend(b.stage2(&idx));
        let batches = epoch_batches(&frames, 5, &mut rng_for(0, "t", 0));
        let mut seen: Vec<usize> = batches.iter().flatten().copied().collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..frames.len()).collect::<Vec<_>>());
        for batch in &batches {
            assert!(batch.len() <= 5);
            assert!(batch.iter().all(|&i| frames[i].gap == frames[batch[0]].gap));
        }
    }

    #[test]
    fn empty_frames_is_training_error() {
        let err = train_stage1(&[], &quick()).unwrap_err();
        assert!(err.to_string().contains("no frames after certainty filter"), "{err}");
        assert!(matches!(train_ssl_only(&[], &quick()), Err(GlpError::Training(_))));
    }

    #[test]
    fn stage2_on_gap_zero_frames_is_stage1() {
        let b = bank();
        let idx: Vec<usize> = (0..b.patients.len()).collect();
        let frames = b.stage1(&idx, 2);
        let cfg = quick();
        let s1 = train_stage1(&frames, &cfg).unwrap();
        let s2 = train_ssl_only(&frames, &cfg).unwrap();
        assert_eq!(s1.epoch_losses, s2.epoch_losses);
        assert_eq!(s1.model.params, s2.model.params);
    }

    #[test]
    fn hybrid_without_stage2_is_supervised() {
        let b = bank();
        let idx: Vec<usize> = (0..b.patients.len()).collect();
        let frames = b.stage1(&idx, 0);
        let cfg = quick();
        let h = train_hybrid(&frames, &[], &cfg).unwrap();
        let s = train_supervised_only(&frames, &cfg).unwrap();
        assert_eq!(h.model, s.model);
        assert_eq!(h.epoch_losses, s.epoch_losses);
    }

    #[test]
    fn single_frame_overfits() {
        let b = bank();
        let frame = b.patients.iter().find_map(|p| p.stage1(0).next()).unwrap();
        let cfg = TrainConfig { epochs: 3000, batch_size: 1, adam: crate::net::AdamConfig { learning_rate: 1e-2, ..Default::default() }, ..Default::default() };
        let out = train_stage1(&[frame], &cfg).unwrap();
        let pred = out.model.predict(&frame.input, 0);
        assert!((pred - frame.target).powi(2) < 1e-4, "pred {pred} target {}", frame.target);
    }

    #[test]
    fn zero_model_is_collapsed_fresh_model_is_not() {
        let b = bank();
        let idx: Vec<usize> = (0..b.patients.len()).collect();
        let frames = b.stage1(&idx, 0);
        let fresh = fresh_model(&quick(), &frames);
        assert!(!is_collapsed(&fresh, &frames));
        let mut zero = fresh.clone();
        zero.params.regressor.hidden1.w = [[0.0; 5]; 2];
        zero.params.regressor.hidden1.b.iter_mut().for_each(|b| *b = 0.0);
        assert!(is_collapsed(&zero, &frames));
    }

    #[test]
    fn deterministic_and_mismatch_checked() {
        let b = bank();
        let idx: Vec<usize> = (0..b.patients.len()).collect();
        let frames = b.stage1(&idx, 0);
        let a = train_stage1(&frames, &quick()).unwrap();
        let c = train_stage1(&frames, &quick()).unwrap();
        assert_eq!(a.model.to_bytes(), c.model.to_bytes());
        let other = GlpModel::new(a.model.params.clone(), LabParameter::Ua, 0);
        assert!(matches!(train_stage2(&other, &frames, &quick()), Err(GlpError::ParameterMismatch { .. })));
        assert!(matches!(evaluate_r2(&other, &frames), Err(GlpError::ParameterMismatch { .. })));
    }
}
