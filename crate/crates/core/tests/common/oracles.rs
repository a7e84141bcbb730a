//! Independent reference implementations and fixture checks shared by the
//! oracle tests and the acceptance report.

use glp::cohort::{Gender, LabParameter, LabSeries, Observation};
use glp::encoding::{encode_discrete, CH_CODE, CH_FLAG, CH_VALUE};
use glp::framing::{build_stage1_frames, build_stage2_frame, Demographics, Frame, MAX_GAP, WINDOW};
use glp::interp::{barycentric_eval, barycentric_fill, barycentric_weights, interpolate_series, linear_fill, pchip_fill, Pchip};
use glp::rng::rng_for;
use glp::stats::{pearson, r_squared, t_test, TTestVariant};
use glp::transfer::{auroc, classification_metrics, cohens_kappa};
use glp::InterpMethod;
use rand::Rng;

pub type Check = (&'static str, Result<(), String>);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(name: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    ensure((got - want).abs() <= tol, || format!("{name}: got {got}, want {want} (tol {tol:e})"))
}

/// Strictly increasing integer knots with gaps in `1..=max_gap`.
fn random_months(rng: &mut impl Rng, n: usize, max_gap: u32) -> Vec<u32> {
    let mut t = rng.random_range(0..4);
    (0..n)
        .map(|_| {
            let cur = t;
            t += rng.random_range(1..=max_gap);
            cur
        })
        .collect()
}

fn is_knot(points: &[(u32, f64)], month: u32) -> Option<f64> {
    points.iter().find(|p| p.0 == month).map(|p| p.1)
}

// ---------------------------------------------------------------- interp

pub fn interp_checks(trials: usize) -> Vec<Check> {
    let mut rng = rng_for(42, "interp-oracle", 0);
    let mut affine = Ok(());
    let mut affine_int = Ok(());
    let mut pchip_line = Ok(());
    let mut pchip_mono = Ok(());
    let mut bary_poly = Ok(());
    let mut bary_two = Ok(());
    for trial in 0..trials {
        let n = rng.random_range(2..=10);
        let months = random_months(&mut rng, n, 5);

        // Integer slope and intercept keep every intermediate exact.
        let (a, b) = (rng.random_range(-50..50) as f64, rng.random_range(-5..5) as f64);
        let pts: Vec<(u32, f64)> = months.iter().map(|&t| (t, a + b * f64::from(t))).collect();
        for (t, y) in linear_fill(&pts).unwrap() {
            if affine_int.is_ok() && y != a + b * f64::from(t) {
                affine_int = Err(format!("trial {trial}: linear at {t} = {y}, want {}", a + b * f64::from(t)));
            }
        }

        let (a, b) = (rng.random_range(-10.0..10.0), rng.random_range(-3.0..3.0));
        let pts: Vec<(u32, f64)> = months.iter().map(|&t| (t, a + b * f64::from(t))).collect();
        let scale = pts.iter().map(|p| p.1.abs()).fold(1.0, f64::max);
        for (t, y) in linear_fill(&pts).unwrap() {
            let want = a + b * f64::from(t);
            if affine.is_ok() && ((y - want).abs() > 4.0 * f64::EPSILON * scale || is_knot(&pts, t).is_some_and(|k| k != y)) {
                affine = Err(format!("trial {trial}: linear at {t} = {y}, want {want}"));
            }
        }
        for (t, y) in pchip_fill(&pts).unwrap() {
            let want = a + b * f64::from(t);
            if pchip_line.is_ok() && (y - want).abs() >= 1e-12 * scale {
                pchip_line = Err(format!("trial {trial}: pchip at {t} = {y}, want {want}"));
            }
        }

        // Monotone knots: no estimate leaves its bracketing knot interval.
        let mut v = rng.random_range(-5.0..5.0);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let mono: Vec<(u32, f64)> = months
            .iter()
            .map(|&t| {
                let cur = v;
                v += sign * rng.random_range(0.0..3.0) * f64::from(rng.random_range(0..2));
                (t, cur)
            })
            .collect();
        let spline = Pchip::new(&mono).unwrap();
        for w in mono.windows(2) {
            let (lo, hi) = (w[0].1.min(w[1].1), w[0].1.max(w[1].1));
            let dense = (0..=64).map(|k| f64::from(w[0].0) + f64::from(w[1].0 - w[0].0) * f64::from(k) / 64.0);
            for x in dense {
                let y = spline.eval(x);
                if pchip_mono.is_ok() && !(lo - 1e-12..=hi + 1e-12).contains(&y) {
                    pchip_mono = Err(format!("trial {trial}: pchip({x}) = {y} outside [{lo}, {hi}]"));
                }
            }
        }
        for (t, y) in pchip_fill(&mono).unwrap() {
            if let Some(k) = is_knot(&mono, t) {
                if pchip_mono.is_ok() && (y - k).abs() >= 1e-12 {
                    pchip_mono = Err(format!("trial {trial}: pchip knot {t} = {y}, want {k}"));
                }
            }
        }

        // Degree n-1 polynomial through n nodes.
        let coeffs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let origin = f64::from(months[0]);
        let poly = |t: f64| coeffs.iter().rev().fold(0.0, |acc, c| acc * (t - origin) / 4.0 + c);
        let pts: Vec<(u32, f64)> = months.iter().map(|&t| (t, poly(f64::from(t)))).collect();
        let scale = pts.iter().map(|p| p.1.abs()).fold(f64::MIN_POSITIVE, f64::max);
        for (t, y) in barycentric_fill(&pts).unwrap() {
            let want = poly(f64::from(t));
            if bary_poly.is_ok() && (y - want).abs() / scale >= 1e-8 {
                bary_poly = Err(format!("trial {trial}: barycentric at {t} = {y}, want {want}"));
            }
        }

        let two = [pts[0], (months[0] + rng.random_range(1..20), rng.random_range(-5.0..5.0))];
        for ((t, y), (_, l)) in barycentric_fill(&two).unwrap().into_iter().zip(linear_fill(&two).unwrap()) {
            if bary_two.is_ok() && (y - l).abs() > 1e-12 * l.abs().max(1.0) {
                bary_two = Err(format!("trial {trial}: barycentric {y} vs linear {l} at {t}"));
            }
        }
    }

    let fixtures = (|| {
        let xs = [0.0, 1.0, 2.0];
        let w = barycentric_weights(&xs);
        close("x^2 at 1.5", barycentric_eval(&xs, &[0.0, 1.0, 4.0], &w, 1.5), 2.25, 1e-12)?;
        close("constant 3", barycentric_eval(&[0.0, 2.0, 7.0], &[3.0; 3], &barycentric_weights(&[0.0, 2.0, 7.0]), 4.0), 3.0, 1e-12)?;
        let filled = pchip_fill(&[(0, 0.0), (2, 2.0), (4, 4.0)]).map_err(|e| e.to_string())?;
        close("collinear pchip at 1", filled[1].1, 1.0, 1e-12)?;
        let s = LabSeries::new(
            "p",
            LabParameter::Ua,
            [0, 3, 6].iter().map(|&m| Observation::real(m, 1.0 + f64::from(m))).collect(),
        )
        .map_err(|e| e.to_string())?;
        let out = interpolate_series(&s, InterpMethod::Linear).map_err(|e| e.to_string())?;
        let months: Vec<(u32, bool)> = out.observations.iter().map(|o| (o.month, o.is_real)).collect();
        ensure(months == [(0, true), (1, false), (2, false), (3, true), (6, true)], || format!("series fill {months:?}"))
    })();

    vec![
        ("linear reproduces integer affine data exactly", affine_int),
        ("linear reproduces real affine data to rounding, knots exact", affine),
        ("pchip reproduces linear data < 1e-12", pchip_line),
        ("pchip never overshoots monotone knots", pchip_mono),
        ("barycentric reproduces degree n-1 polynomials < 1e-8", bary_poly),
        ("barycentric on 2 nodes equals linear", bary_two),
        ("interpolation fixtures", fixtures),
    ]
}

// ---------------------------------------------------------------- framing

/// What the textual framing rules say a frame should contain.
#[derive(Debug, PartialEq)]
struct Expected {
    start: u32,
    target_month: u32,
    gap: u32,
    real_count: usize,
    target: f64,
    values: Vec<f64>,
    flags: Vec<bool>,
    codes: Vec<u8>,
}

fn expected_from(series: &LabSeries, start: u32, target_month: u32, gap: u32) -> Expected {
    let at = |m: u32| series.observations.iter().find(|o| o.month == m).expect("dense zone");
    // The 13-month span [start, start + r] counts toward certainty; the
    // input matrix holds its first r months.
    let real_count = (start..=start + WINDOW as u32).filter(|&m| at(m).is_real).count();
    let months = start..start + WINDOW as u32;
    Expected {
        start,
        target_month,
        gap,
        real_count,
        target: at(target_month).value.ln_1p(),
        values: months.clone().map(|m| at(m).value.ln_1p()).collect(),
        flags: months.clone().map(|m| at(m).is_real).collect(),
        codes: months.map(|m| encode_discrete(series.parameter, at(m).value)).collect(),
    }
}

// Written the long way on purpose, to mirror the rule as stated.
#[allow(clippy::int_plus_one)]
fn brute_stage1(series: &LabSeries, certain: u8) -> Vec<Expected> {
    let reals: Vec<u32> = series.observations.iter().filter(|o| o.is_real).map(|o| o.month).collect();
    if reals.len() < 2 {
        return Vec::new();
    }
    let t0 = series.observations[0].month;
    let m = reals[reals.len() - 2];
    let r = WINDOW as u32;
    let last_month = series.observations.last().unwrap().month;
    let mut out = Vec::new();
    // Slide every 13-month span over the whole timeline and keep those the
    // rules allow.
    for i in 0..=last_month {
        let (i64_, m64, r64, t064) = (i64::from(i), i64::from(m), i64::from(r), i64::from(t0));
        let inside = i64_ >= t064 && i64_ + r64 <= m64 - 1;
        // Omitted when the span [i, m - 1] holds r months or fewer.
        let omitted = (m64 - 1) - i64_ + 1 <= r64;
        let target_month = i + r + 1;
        if !inside || omitted || target_month > m {
            continue;
        }
        let e = expected_from(series, i, target_month, 0);
        if e.real_count >= usize::from(certain) {
            out.push(e);
        }
    }
    out
}

fn brute_stage2(series: &LabSeries) -> Option<Expected> {
    let reals: Vec<u32> = series.observations.iter().filter(|o| o.is_real).map(|o| o.month).collect();
    if reals.len() < 2 {
        return None;
    }
    let t0 = series.observations[0].month;
    let (m, n) = (reals[reals.len() - 2], reals[reals.len() - 1]);
    let r = WINDOW as u32;
    if m < t0 + r {
        return None;
    }
    let g = n - m - 1;
    if g > MAX_GAP {
        return None;
    }
    Some(expected_from(series, m - r, n, g))
}

fn observed(f: &Frame) -> Expected {
    Expected {
        start: f.start_month,
        target_month: f.target_month,
        gap: f.gap,
        real_count: f.real_count,
        target: f.target,
        values: f.input.iter().map(|row| row[CH_VALUE]).collect(),
        flags: f.input.iter().map(|row| row[CH_FLAG] == 1.0).collect(),
        codes: f.input.iter().map(|row| row[CH_CODE] as u8).collect(),
    }
}

fn random_series(rng: &mut impl Rng, id: usize) -> LabSeries {
    let parameter = LabParameter::ALL[rng.random_range(0..6)];
    let n = rng.random_range(2..=14);
    let months = random_months(rng, n, 6);
    // Occasionally a long final gap to exercise the g <= r/2 rule.
    let mut months = months;
    if rng.random_bool(0.3) {
        let last = months.len() - 1;
        months[last] = months[last - 1] + rng.random_range(1..=12);
    }
    let obs = months.iter().map(|&m| Observation::real(m, rng.random_range(0.5..250.0))).collect();
    LabSeries::new(format!("S{id}"), parameter, obs).unwrap()
}

/// Compare the frame builders against the brute-force enumerator on
/// `n_series` random series for every certain in 0..=5. Returns the number of
/// frames compared.
pub fn framing_oracle(n_series: usize, seed: u64) -> Result<usize, String> {
    let mut rng = rng_for(seed, "framing-oracle", 0);
    let demo = Demographics { age_at_start: 61.0, gender: Gender::Female };
    let mut compared = 0;
    for id in 0..n_series {
        let raw = random_series(&mut rng, id);
        let method = InterpMethod::ALL[id % 3];
        let series = interpolate_series(&raw, method).map_err(|e| format!("series {id}: {e}"))?;
        for certain in 0..=5u8 {
            let got: Vec<Expected> = build_stage1_frames(&series, demo, certain)
                .map_err(|e| format!("series {id}: {e}"))?
                .iter()
                .map(observed)
                .collect();
            let want = brute_stage1(&series, certain);
            if got != want {
                return Err(format!(
                    "series {id} certain {certain}: stage-1 starts {:?} vs brute force {:?}",
                    got.iter().map(|e| e.start).collect::<Vec<_>>(),
                    want.iter().map(|e| e.start).collect::<Vec<_>>()
                ));
            }
            compared += got.len();
        }
        let got = build_stage2_frame(&series, demo).map_err(|e| format!("series {id}: {e}"))?.map(|f| observed(&f));
        let want = brute_stage2(&series);
        if got != want {
            return Err(format!("series {id}: stage-2 {got:?} vs brute force {want:?}"));
        }
        compared += usize::from(got.is_some());
    }
    Ok(compared)
}

// ---------------------------------------------------------------- metrics

/// Pairwise AUROC: wins plus half ties over all positive-negative pairs.
pub fn brute_auroc(labels: &[bool], scores: &[f64]) -> f64 {
    let mut twice = 0u64;
    let mut pairs = 0u64;
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                pairs += 1;
                twice += if scores[i] > scores[j] {
                    2
                } else if scores[i] == scores[j] {
                    1
                } else {
                    0
                };
            }
        }
    }
    twice as f64 / (2 * pairs) as f64
}

pub fn auroc_oracle(trials: usize, seed: u64) -> Result<(), String> {
    let mut rng = rng_for(seed, "auroc-oracle", 0);
    for trial in 0..trials {
        let n = rng.random_range(2..=200);
        let levels = rng.random_range(1..=40);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        let scores: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..levels)) * 0.37 - 2.0).collect();
        let fast = auroc(&labels, &scores).map_err(|e| e.to_string())?;
        let brute = brute_auroc(&labels, &scores);
        ensure(fast == brute, || format!("trial {trial} (n = {n}): rank AUROC {fast} vs pairwise {brute}"))?;
    }
    Ok(())
}

pub fn metric_fixture_checks() -> Vec<Check> {
    const TOL: f64 = 1e-9;
    let kappa = (|| {
        let a = [true, true, false, false];
        close("kappa identical", cohens_kappa(&a, &a).map_err(|e| e.to_string())?, 1.0, TOL)?;
        close("kappa complementary", cohens_kappa(&a, &[false, false, true, true]).map_err(|e| e.to_string())?, -1.0, TOL)?;
        close("kappa [1,1,0,0] vs [1,0,1,0]", cohens_kappa(&a, &[true, false, true, false]).map_err(|e| e.to_string())?, 0.0, TOL)
    })();
    let r2 = (|| {
        let y = [1.0, 2.0, 3.0];
        close("R2 perfect", r_squared(&y, &y).map_err(|e| e.to_string())?, 1.0, TOL)?;
        close("R2 mean predictor", r_squared(&y, &[2.0; 3]).map_err(|e| e.to_string())?, 0.0, TOL)?;
        close("R2 reversed", r_squared(&y, &[3.0, 2.0, 1.0]).map_err(|e| e.to_string())?, -3.0, TOL)
    })();
    let pearson_fx = (|| {
        let x = [1.0, 2.0, 3.0, 4.0];
        close("pearson 2x+1", pearson(&x, &x.map(|v| 2.0 * v + 1.0)).map_err(|e| e.to_string())?, 1.0, TOL)?;
        close("pearson -x", pearson(&x, &x.map(|v| -v)).map_err(|e| e.to_string())?, -1.0, TOL)?;
        close("pearson [2,1,4,3]", pearson(&x, &[2.0, 1.0, 4.0, 3.0]).map_err(|e| e.to_string())?, 0.6, TOL)
    })();
    let ttest = (|| {
        let r = t_test(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0], TTestVariant::Pooled).map_err(|e| e.to_string())?;
        close("t", r.t, -1.224744871391589, TOL)?;
        close("df", r.df, 4.0, TOL)?;
        close("p", r.p, 0.2878641347266908, TOL)?;
        let same = t_test(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], TTestVariant::Pooled).map_err(|e| e.to_string())?;
        close("t equal samples", same.t, 0.0, TOL)?;
        close("p equal samples", same.p, 1.0, TOL)?;
        let jitter = t_test(&[0.0; 4], &[1.0, 1.0 + 1e-9, 1.0 - 1e-9, 1.0], TTestVariant::Pooled).map_err(|e| e.to_string())?;
        ensure(jitter.p < 1e-6, || format!("jittered separation p = {}", jitter.p))
    })();
    let confusion = (|| {
        let m = classification_metrics(&[true, true, false, false], &[true, false, false, false], &[0.9, 0.4, 0.2, 0.1])
            .map_err(|e| e.to_string())?;
        close("accuracy", m.accuracy, 0.75, TOL)?;
        close("sensitivity", m.sensitivity, 0.5, TOL)?;
        close("specificity", m.specificity, 1.0, TOL)?;
        close("precision", m.precision, 1.0, TOL)?;
        close("f1", m.f1, 2.0 / 3.0, TOL)?;
        close("all-tie AUROC", auroc(&[true, false, true, false], &[0.3; 4]).map_err(|e| e.to_string())?, 0.5, TOL)
    })();
    vec![
        ("kappa fixtures", kappa),
        ("R2 fixtures", r2),
        ("pearson fixtures", pearson_fx),
        ("t-test fixtures", ttest),
        ("confusion-matrix fixtures", confusion),
    ]
}
