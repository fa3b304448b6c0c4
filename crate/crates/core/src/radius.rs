//! The s-local curvature radius
//! `r(p) = sup { r in (0, s) : |Rm| < r^-2 on B(p, r) }` and fields of it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ChartPoint, Manifold, SampledDomain};

/// Cutoff scale `s`; `f64::INFINITY` stands for `s = infinity`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Cutoff(pub f64);

impl Cutoff {
    pub const INFINITE: Cutoff = Cutoff(f64::INFINITY);

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    /// Finite scale actually used: the diameter stands in for infinity on
    /// compact models.
    pub fn resolve(self, model: &dyn Manifold) -> Option<f64> {
        if self.0.is_finite() {
            Some(self.0)
        } else {
            model.diameter()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadiusOptions {
    /// Relative bisection tolerance.
    pub rel_tol: f64,
    /// Sampling resolution of the ball-sup oracle; cutoffs at or below it
    /// are returned unchanged with a warning.
    pub resolution: f64,
}

impl Default for RadiusOptions {
    fn default() -> Self {
        RadiusOptions {
            rel_tol: 1e-4,
            resolution: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusValue {
    pub value: f64,
    /// `value == s`: the curvature condition holds on the whole cutoff ball.
    pub at_cutoff: bool,
    /// The cutoff did not exceed the oracle resolution.
    pub degenerate: bool,
}

fn condition(model: &dyn Manifold, p: &ChartPoint, r: f64) -> Result<bool> {
    Ok(model.ball_curvature_sup(p, r)? * r * r < 1.0)
}

/// Curvature radius at `p` with cutoff `s`.
pub fn curvature_radius(
    model: &dyn Manifold,
    p: &ChartPoint,
    s: Cutoff,
    opts: &RadiusOptions,
) -> Result<RadiusValue> {
    if !(s.0 > 0.0) {
        return Err(Error::param("radius", "cutoff must be positive"));
    }
    model.check_point(p)?;
    let hi = match s.resolve(model) {
        Some(v) => v,
        None => {
            // Non-compact: grow until the condition fails.
            let mut r = 1.0;
            while condition(model, p, r)? {
                r *= 2.0;
                if r > 1e12 {
                    return Err(Error::coverage("radius", "curvature radius unbounded"));
                }
            }
            r
        }
    };
    if hi <= opts.resolution {
        return Ok(RadiusValue {
            value: hi,
            at_cutoff: true,
            degenerate: true,
        });
    }
    if condition(model, p, hi)? {
        return Ok(RadiusValue {
            value: hi,
            at_cutoff: true,
            degenerate: false,
        });
    }
    let mut lo = 0.0;
    let mut up = hi;
    // Start from the pointwise curvature scale.
    let k = model.curvature_norm(p)?;
    if k > 0.0 {
        let guess = k.powf(-0.5).min(hi);
        if condition(model, p, guess)? {
            lo = guess;
        } else {
            up = guess;
        }
    }
    while up - lo > opts.rel_tol * up {
        let mid = 0.5 * (lo + up);
        if condition(model, p, mid)? {
            lo = mid;
        } else {
            up = mid;
        }
    }
    Ok(RadiusValue {
        value: if lo > 0.0 { lo } else { 0.5 * up },
        at_cutoff: false,
        degenerate: false,
    })
}

/// Curvature radius sampled over a domain.
#[derive(Debug, Clone)]
pub struct RadiusField {
    pub domain: SampledDomain,
    pub cutoff: Cutoff,
    /// Cutoff used in place of `s` (equal to `s` when finite).
    pub effective_cutoff: f64,
    pub values: Vec<f64>,
    pub at_cutoff: Vec<bool>,
    pub degenerate: bool,
}

impl RadiusField {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// One row per point: chart, coordinates, weight, value, cutoff flag.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let dim = self.domain.points.first().map_or(0, |p| p.coords.len());
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["chart".to_string()];
        header.extend((0..dim).map(|i| format!("x{i}")));
        header.extend(["weight", "r", "at_cutoff"].map(String::from));
        w.write_record(&header)?;
        for (i, p) in self.domain.points.iter().enumerate() {
            let mut row = vec![p.chart.to_string()];
            row.extend(p.coords.iter().map(|c| format!("{c:.16e}")));
            row.push(format!("{:.16e}", self.domain.weights[i]));
            row.push(format!("{:.16e}", self.values[i]));
            row.push(self.at_cutoff[i].to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Evaluates the curvature radius at every domain point.
pub fn radius_field(
    model: &dyn Manifold,
    domain: &SampledDomain,
    s: Cutoff,
    opts: &RadiusOptions,
) -> Result<RadiusField> {
    if domain.is_empty() {
        return Err(Error::EmptyDomain { module: "radius" });
    }
    let vals = domain
        .points
        .par_iter()
        .map(|p| curvature_radius(model, p, s, opts))
        .collect::<Result<Vec<_>>>()?;
    let effective_cutoff = s.resolve(model).unwrap_or(f64::INFINITY);
    Ok(RadiusField {
        domain: domain.clone(),
        cutoff: s,
        effective_cutoff,
        degenerate: vals.iter().any(|v| v.degenerate),
        at_cutoff: vals.iter().map(|v| v.at_cutoff).collect(),
        values: vals.into_iter().map(|v| v.value).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzReport {
    /// Largest `|r(p) - r(q)| / dist(p, q)` over sampled pairs.
    pub constant: f64,
    /// Pair attaining the constant.
    pub pair: Option<(usize, usize)>,
    pub pairs_checked: usize,
    /// Pairs whose ratio exceeds `1 + tolerance`.
    pub violations: Vec<(usize, usize, f64)>,
    pub tolerance: f64,
}

/// Empirical Lipschitz constant of a radius field over all sampled pairs.
/// Exact distances are evaluated only where the cheap distance bounds
/// cannot rule a pair out.
pub fn lipschitz_report(model: &dyn Manifold, field: &RadiusField, tolerance: f64) -> Result<LipschitzReport> {
    let n = field.len();
    if n < 2 {
        return Err(Error::param("radius", "Lipschitz report needs at least two points"));
    }
    let pts = &field.domain.points;
    let vals = &field.values;
    // (upper ratio bound, lower ratio bound, i, j)
    let mut cand: Vec<(f64, f64, usize, usize)> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            (i + 1..n).filter_map(move |j| {
                let dv = (vals[i] - vals[j]).abs();
                if dv == 0.0 {
                    return None;
                }
                let (lo, hi) = model.distance_bounds(&pts[i], &pts[j]);
                let up = if lo > 0.0 { dv / lo } else { f64::INFINITY };
                Some((up, dv / hi, i, j))
            })
        })
        .collect();
    cand.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.2.cmp(&b.2)).then(a.3.cmp(&b.3)));
    let mut best = 0.0f64;
    let mut pair = None;
    let mut violations = Vec::new();
    let limit = 1.0 + tolerance;
    for (up, low, i, j) in cand {
        if up <= best && up <= limit {
            break;
        }
        let ratio = if up == low {
            up
        } else {
            let d = model.distance(&pts[i], &pts[j])?;
            if d > 0.0 {
                (vals[i] - vals[j]).abs() / d
            } else {
                f64::INFINITY
            }
        };
        if ratio > best {
            best = ratio;
            pair = Some((i, j));
        }
        if ratio > limit {
            violations.push((i, j, ratio));
        }
    }
    Ok(LipschitzReport {
        constant: best,
        pair,
        pairs_checked: n * (n - 1) / 2,
        violations,
        tolerance,
    })
}
