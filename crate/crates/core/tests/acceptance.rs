//! One PASS/FAIL line per acceptance criterion. Exits nonzero if any fail.

mod common;

use std::time::Instant;

use common::gradcheck::check;
use common::oracles::{auroc_oracle, framing_oracle, interp_checks, metric_fixture_checks, Check};
use glp::cohort::{generate_downstream_cohort, generate_pretext_cohort, DownstreamSpec, GeneratorSpec};
use glp::config::{CertainChoice, RunConfig};
use glp::par;
use glp::pipeline::{holdout_study, train_final_models, Method, TrainConfig};
use glp::stats::median;
use glp::study::{run_all, Layout};
use glp::transfer::{run_downstream_study, DownstreamConfig, ModelSet, Representation};

const GRADIENT_TOL: f64 = 1e-4;
const GRADIENT_SECS: f64 = 60.0;
const INTERP_SECS: f64 = 5.0;
const SSL_SLACK: f64 = 0.02;
const METHOD_ORDER_SECS: f64 = 600.0;
const TRANSFER_MARGIN: f64 = 0.05;
const TRANSFER_SECS: f64 = 180.0;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn from_checks(checks: Vec<Check>) -> (bool, Vec<String>) {
    let failed: Vec<String> = checks.into_iter().filter_map(|(n, r)| r.err().map(|e| format!("{n}: {e}"))).collect();
    (failed.is_empty(), failed)
}

fn gradient_oracle() -> Verdict {
    let start = Instant::now();
    let seeds: Vec<u64> = (0..100).collect();
    let stage1 = par::map(&seeds, |&s| check(s, 0, 3));
    let stage2 = par::map(&seeds, |&s| check(s, 6, 2));
    let secs = start.elapsed().as_secs_f64();
    let worst1 = stage1.iter().map(|r| r.max_rel_err).fold(0.0, f64::max);
    let worst2 = stage2.iter().map(|r| r.max_rel_err).fold(0.0, f64::max);
    verdict(
        worst1 < GRADIENT_TOL && worst2 < GRADIENT_TOL && secs < GRADIENT_SECS,
        format!("100 seeds each; max rel err stage-1 {worst1:.2e}, stage-2 (g = 6) {worst2:.2e}; {secs:.1}s < {GRADIENT_SECS}s"),
    )
}

fn interpolation_oracle() -> Verdict {
    let start = Instant::now();
    let (ok, failed) = from_checks(interp_checks(1000));
    let secs = start.elapsed().as_secs_f64();
    verdict(ok && secs < INTERP_SECS, format!("1000 random knot sets; {secs:.2}s < {INTERP_SECS}s {failed:?}"))
}

fn framing_oracle_criterion() -> Verdict {
    match framing_oracle(1000, 7) {
        Ok(n) => verdict(true, format!("1000 series x certain 0..5, {n} frames identical")),
        Err(e) => verdict(false, e),
    }
}

fn metric_oracle() -> Verdict {
    let auroc = auroc_oracle(500, 3);
    let (ok, failed) = from_checks(metric_fixture_checks());
    verdict(
        auroc.is_ok() && ok,
        format!("AUROC exact on 500 sets of <= 200; fixtures to 1e-9 {:?} {failed:?}", auroc.err()),
    )
}

fn method_ordering() -> Verdict {
    let start = Instant::now();
    let mut two = Vec::new();
    let mut ssl = Vec::new();
    let mut sup = Vec::new();
    let mut rows = Vec::new();
    for seed in 0..5u64 {
        let cohort = generate_pretext_cohort(&GeneratorSpec { seed, ..Default::default() }).expect("cohort");
        let run = |method| holdout_study(&cohort, &TrainConfig { method, seed, ..Default::default() }).expect("holdout");
        let (t, s, u) = (run(Method::TwoStage), run(Method::SslOnly), run(Method::SupervisedOnly));
        rows.push(format!("s{seed} {:.3}/{:.3}/{:.3}", t.mean_r2, s.mean_r2, u.mean_r2));
        two.push(t.mean_r2);
        ssl.push(s.mean_r2);
        sup.push(u.mean_r2);
    }
    let secs = start.elapsed().as_secs_f64();
    let (t, s, u) = (median(&two), median(&ssl), median(&sup));
    verdict(
        t >= s - SSL_SLACK && t > u && s > u && secs < METHOD_ORDER_SECS,
        format!(
            "median R2 two-stage {t:.3} >= ssl {s:.3} - {SSL_SLACK}, both > supervised {u:.3}; per seed two/ssl/sup [{}]; {secs:.0}s",
            rows.join(", ")
        ),
    )
}

/// Returns the transfer verdict and the frozen-transfer verdict, which share
/// the pretrained models.
fn transfer_and_frozen() -> (Verdict, Verdict) {
    let start = Instant::now();
    let cohort = generate_pretext_cohort(&GeneratorSpec::default()).expect("cohort");
    let outcomes = train_final_models(&cohort, &TrainConfig::default(), &[0; 6]).expect("final models");
    let models = ModelSet::new(outcomes.into_iter().map(|o| o.model).collect()).expect("model set");
    let pretrain_secs = start.elapsed().as_secs_f64();
    let bytes_before: Vec<Vec<u8>> = models.models().iter().map(|m| m.to_bytes()).collect();
    let checksums_before: Vec<String> = models.checksums().iter().map(|c| format!("{c:08x}")).collect();

    let study_start = Instant::now();
    let records = generate_downstream_cohort(&DownstreamSpec::default()).expect("downstream cohort");
    let (report, _) = run_downstream_study(&models, &records, &DownstreamConfig::default(), 0).expect("study");
    let study_secs = study_start.elapsed().as_secs_f64();
    let raw = report.representation(Representation::Raw);
    let out = report.representation(Representation::Out);
    let d_acc = out.averaged.accuracy - raw.averaged.accuracy;
    let d_auc = out.averaged.auroc.unwrap_or(f64::NAN) - raw.averaged.auroc.unwrap_or(f64::NAN);
    let secs = start.elapsed().as_secs_f64();
    let transfer = verdict(
        d_acc >= TRANSFER_MARGIN && d_auc >= TRANSFER_MARGIN && out.mean_pairwise_kappa > raw.mean_pairwise_kappa && secs < TRANSFER_SECS,
        format!(
            "{} -> {} balanced records, 5 repetitions; accuracy raw {:.3} -> out {:.3} (+{d_acc:.3}), AUROC {:.3} -> {:.3} (+{d_auc:.3}), kappa {:.3} -> {:.3}; pretrain {pretrain_secs:.0}s + study {study_secs:.1}s",
            report.records,
            report.balanced_records,
            raw.averaged.accuracy,
            out.averaged.accuracy,
            raw.averaged.auroc.unwrap_or(f64::NAN),
            out.averaged.auroc.unwrap_or(f64::NAN),
            raw.mean_pairwise_kappa,
            out.mean_pairwise_kappa,
        ),
    );

    let bytes_after: Vec<Vec<u8>> = models.models().iter().map(|m| m.to_bytes()).collect();
    let frozen = verdict(
        bytes_before == bytes_after && report.model_checksums == checksums_before,
        format!("6 model checksums before/after the study: {}", checksums_before.join(" ")),
    );
    (transfer, frozen)
}

fn determinism() -> Verdict {
    let config = RunConfig {
        seed: 5,
        certain: CertainChoice::Sweep,
        generator: GeneratorSpec { n_patients: 40, months_span: 36, ..Default::default() },
        downstream: DownstreamSpec { n_positive: 14, n_negative: 60, ..Default::default() },
        train: TrainConfig { epochs: 3, folds: 2, repetitions: 2, ..Default::default() },
        study: DownstreamConfig { repetitions: 2, ..Default::default() },
        ..Default::default()
    };
    let dirs = [tempfile::tempdir().expect("tempdir"), tempfile::tempdir().expect("tempdir")];
    let layouts = dirs.each_ref().map(|d| Layout::new(d.path()));
    // The second run uses a 2-thread pool so job scheduling differs.
    if let Err(e) = run_all(&config, &layouts[0]).and_then(|_| par::with_jobs(2, || run_all(&config, &layouts[1]))) {
        return verdict(false, format!("run failed: {e}"));
    }
    let names = layouts[0].artifacts();
    let differing: Vec<&String> = names
        .iter()
        .filter(|rel| std::fs::read(layouts[0].path(rel)).ok() != std::fs::read(layouts[1].path(rel)).ok())
        .collect();
    let present = names.iter().filter(|rel| layouts[0].path(rel).is_file()).count();
    verdict(
        differing.is_empty() && present == names.len(),
        format!("two end-to-end runs (certain sweep, reduced sizes): {present}/{} artifacts byte-identical {differing:?}", names.len()),
    )
}

fn report(results: &mut Vec<(&'static str, Verdict)>, name: &'static str, v: Verdict) {
    println!("{} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    results.push((name, v));
}

fn main() {
    let mut results = Vec::new();
    report(&mut results, "gradient oracle", gradient_oracle());
    report(&mut results, "interpolation oracles", interpolation_oracle());
    report(&mut results, "framing oracle", framing_oracle_criterion());
    report(&mut results, "metric oracles", metric_oracle());
    report(&mut results, "holdout method ordering", method_ordering());
    let (transfer, frozen) = transfer_and_frozen();
    report(&mut results, "transfer over raw features", transfer);
    report(&mut results, "determinism", determinism());
    report(&mut results, "frozen-transfer checksums", frozen);

    let failed: Vec<&str> = results.iter().filter(|(_, v)| !v.pass).map(|(n, _)| *n).collect();
    println!("acceptance: {}/{} criteria pass", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
