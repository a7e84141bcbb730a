//! Gap filling between the first and second-to-last real observation.
//!
//! Three interpolants are available: piecewise linear, PCHIP with the
//! weighted-harmonic-mean interior slopes, and barycentric Lagrange.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::cohort::{LabSeries, Observation};
use crate::error::{GlpError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterpMethod {
    Linear,
    Pchip,
    Barycentric,
}

impl InterpMethod {
    pub const ALL: [InterpMethod; 3] = [InterpMethod::Linear, InterpMethod::Pchip, InterpMethod::Barycentric];

    pub fn name(self) -> &'static str {
        match self {
            InterpMethod::Linear => "linear",
            InterpMethod::Pchip => "pchip",
            InterpMethod::Barycentric => "barycentric",
        }
    }
}

impl fmt::Display for InterpMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InterpMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown interpolation method {s:?} (linear|pchip|barycentric)"))
    }
}

/// Knot count above which barycentric evaluation switches to a local window.
pub const BARYCENTRIC_GLOBAL_MAX: usize = 30;
/// Nearest knots used per evaluation point in windowed mode.
pub const BARYCENTRIC_WINDOW: usize = 12;

/// Lower bound applied to filled-in values so every series stays positive.
pub const MIN_ESTIMATE: f64 = 1e-9;

/// Straight line through `(t_i, y_i)` and `(t_k, y_k)` evaluated at `t_j`.
pub fn linear_at(t_i: f64, y_i: f64, t_k: f64, y_k: f64, t_j: f64) -> Result<f64> {
    if t_k == t_i {
        return Err(GlpError::DegenerateInterval(t_i));
    }
    Ok(y_i + (t_j - t_i) * (y_k - y_i) / (t_k - t_i))
}

fn check_knots(points: &[(u32, f64)]) -> Result<()> {
    if points.len() < 2 {
        return Err(GlpError::Precondition(format!("need at least 2 knots, got {}", points.len())));
    }
    for w in points.windows(2) {
        if w[1].0 <= w[0].0 {
            return Err(GlpError::Precondition(format!(
                "knot months must be strictly increasing ({} then {})",
                w[0].0, w[1].0
            )));
        }
    }
    Ok(())
}

fn months_between(points: &[(u32, f64)]) -> std::ops::RangeInclusive<u32> {
    points[0].0..=points[points.len() - 1].0
}

pub fn linear_fill(points: &[(u32, f64)]) -> Result<Vec<(u32, f64)>> {
    check_knots(points)?;
    let mut out = Vec::new();
    let mut seg = 0;
    for m in months_between(points) {
        while points[seg + 1].0 < m {
            seg += 1;
        }
        let (a, b) = (points[seg], points[seg + 1]);
        let y = if m == a.0 {
            a.1
        } else if m == b.0 {
            b.1
        } else {
            linear_at(f64::from(a.0), a.1, f64::from(b.0), b.1, f64::from(m))?
        };
        out.push((m, y));
    }
    Ok(out)
}

/// Shape-preserving piecewise cubic Hermite interpolant.
#[derive(Debug, Clone)]
pub struct Pchip {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl Pchip {
    pub fn new(points: &[(u32, f64)]) -> Result<Self> {
        check_knots(points)?;
        let xs: Vec<f64> = points.iter().map(|p| f64::from(p.0)).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
        let n = xs.len();
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / h[k]).collect();

        let mut slopes = vec![0.0; n];
        for j in 1..n - 1 {
            slopes[j] = interior_slope(h[j - 1], h[j], delta[j - 1], delta[j]);
        }
        if n == 2 {
            slopes[0] = delta[0];
            slopes[1] = delta[0];
        } else {
            slopes[0] = end_slope(h[0], h[1], delta[0], delta[1]);
            slopes[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Ok(Self { xs, ys, slopes })
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    /// Evaluate inside `[x_0, x_n]`; values outside are clamped to the ends.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let k = self.xs.partition_point(|&v| v <= x) - 1;
        if x == self.xs[k] {
            return self.ys[k];
        }
        let h = self.xs[k + 1] - self.xs[k];
        let t = (x - self.xs[k]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.ys[k] + h10 * h * self.slopes[k] + h01 * self.ys[k + 1] + h11 * h * self.slopes[k + 1]
    }
}

/// Derivative at an interior knot from its left secant `d_left` (interval
/// width `h_left`) and right secant `d_right`: zero at a local extremum or
/// flat segment, otherwise the weighted harmonic mean
/// `(w1 + w2) / (w1/d_left + w2/d_right)` with `w1 = 2 h_right + h_left` and
/// `w2 = h_right + 2 h_left`.
pub fn interior_slope(h_left: f64, h_right: f64, d_left: f64, d_right: f64) -> f64 {
    if d_left == 0.0 || d_right == 0.0 || d_left.signum() != d_right.signum() {
        return 0.0;
    }
    let w1 = 2.0 * h_right + h_left;
    let w2 = h_right + 2.0 * h_left;
    (w1 + w2) / (w1 / d_left + w2 / d_right)
}

// One-sided three-point estimate, clamped so the end interval stays monotone.
fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if s.signum() != d0.signum() || d0 == 0.0 {
        0.0
    } else if d0.signum() != d1.signum() && s.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        s
    }
}

pub fn pchip_fill(points: &[(u32, f64)]) -> Result<Vec<(u32, f64)>> {
    let p = Pchip::new(points)?;
    let exact: std::collections::HashMap<u32, f64> = points.iter().copied().collect();
    Ok(months_between(points)
        .map(|m| (m, exact.get(&m).copied().unwrap_or_else(|| p.eval(f64::from(m)))))
        .collect())
}

/// Classical polynomial-interpolation weights `w_i = 1 / prod_{k != i} (x_i - x_k)`.
pub fn barycentric_weights(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .enumerate()
        .map(|(i, &xi)| {
            let prod: f64 = xs.iter().enumerate().filter(|&(k, _)| k != i).map(|(_, &xk)| xi - xk).product();
            1.0 / prod
        })
        .collect()
}

/// Second-form barycentric formula. Returns the node value when `x` is a node.
pub fn barycentric_eval(xs: &[f64], ys: &[f64], weights: &[f64], x: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((&xi, &yi), &wi) in xs.iter().zip(ys).zip(weights) {
        let d = x - xi;
        if d == 0.0 {
            return yi;
        }
        let c = wi / d;
        num += c * yi;
        den += c;
    }
    num / den
}

fn nearest_window(xs: &[f64], x: f64, width: usize) -> std::ops::Range<usize> {
    // Contiguous block of `width` knots minimizing the farthest distance to x.
    let n = xs.len();
    let width = width.min(n);
    let mut best = 0;
    let mut best_cost = f64::INFINITY;
    for start in 0..=n - width {
        let cost = (x - xs[start]).abs().max((xs[start + width - 1] - x).abs());
        if cost < best_cost {
            best_cost = cost;
            best = start;
        }
    }
    best..best + width
}

pub fn barycentric_fill(points: &[(u32, f64)]) -> Result<Vec<(u32, f64)>> {
    check_knots(points)?;
    let xs: Vec<f64> = points.iter().map(|p| f64::from(p.0)).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let global = (xs.len() <= BARYCENTRIC_GLOBAL_MAX).then(|| barycentric_weights(&xs));
    Ok(months_between(points)
        .map(|m| {
            let x = f64::from(m);
            let y = match &global {
                Some(w) => barycentric_eval(&xs, &ys, w, x),
                None => {
                    let r = nearest_window(&xs, x, BARYCENTRIC_WINDOW);
                    let w = barycentric_weights(&xs[r.clone()]);
                    barycentric_eval(&xs[r.clone()], &ys[r], &w, x)
                }
            };
            (m, y)
        })
        .collect())
}

pub fn fill(method: InterpMethod, points: &[(u32, f64)]) -> Result<Vec<(u32, f64)>> {
    match method {
        InterpMethod::Linear => linear_fill(points),
        InterpMethod::Pchip => pchip_fill(points),
        InterpMethod::Barycentric => barycentric_fill(points),
    }
}

/// Fill every integer month in `[t_0, t_m]`, where `t_m` is the
/// second-to-last real observation. Real observations are kept verbatim,
/// filled months are flagged estimated, and the last real observation `t_n`
/// is carried through without being used as a knot.
pub fn interpolate_series(series: &LabSeries, method: InterpMethod) -> Result<LabSeries> {
    let reals: Vec<Observation> = series.reals().copied().collect();
    if reals.len() < 3 {
        return Ok(series.clone());
    }
    let last = reals[reals.len() - 1];
    let knots: Vec<(u32, f64)> = reals[..reals.len() - 1].iter().map(|o| (o.month, o.value)).collect();
    let filled = fill(method, &knots)?;

    let mut observations = Vec::with_capacity(filled.len() + 1);
    let mut real_iter = reals[..reals.len() - 1].iter().peekable();
    for (month, value) in filled {
        match real_iter.peek() {
            Some(o) if o.month == month => {
                observations.push(**o);
                real_iter.next();
            }
            _ => {
                if !value.is_finite() {
                    return Err(GlpError::Numeric(format!(
                        "{} / {}: {method} produced a non-finite estimate at month {month}",
                        series.patient_id, series.parameter
                    )));
                }
                observations.push(Observation::estimated(month, value.max(MIN_ESTIMATE)));
            }
        }
    }
    observations.push(last);
    Ok(LabSeries { patient_id: series.patient_id.clone(), parameter: series.parameter, observations })
}
