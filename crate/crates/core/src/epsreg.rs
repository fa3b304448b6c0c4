//! Instance-wise scanners for the epsilon-regularity statements, the
//! Harnack inequalities, low energy collapse and volume comparison.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iteration::{EnergyOracle, SampledOracle};
use crate::models::{ChartPoint, Manifold, RegionSpec};
use crate::radius::{curvature_radius, radius_field, Cutoff, RadiusOptions};

/// Constant in the volume comparison bound.
pub const VOLUME_CONSTANT: f64 = 9.0 / 8.0;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanOptions {
    /// Working energy threshold gating which instances count as low energy.
    pub eps0: f64,
    /// Quadrature spacing is `radius / points_per_radius`.
    pub points_per_radius: f64,
    pub seed: u64,
    /// Cutoff for curvature radii; `None` means `K / Lambda`, or infinity
    /// when `Lambda = 0`.
    pub cutoff: Option<f64>,
    /// Largest `Lambda * beta` accepted by the volume comparison check.
    pub volume_window: f64,
    pub radius: RadiusOptions,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            eps0: 1e-2,
            points_per_radius: 4.0,
            seed: 0,
            cutoff: None,
            volume_window: 8.0,
            radius: RadiusOptions::default(),
        }
    }
}

impl ScanOptions {
    fn oracle(&self) -> SampledOracle {
        SampledOracle {
            points_per_radius: self.points_per_radius,
            seed: self.seed,
        }
    }

    fn cutoff(&self, lambda: f64, k: f64) -> Cutoff {
        match self.cutoff {
            Some(s) => Cutoff(s),
            None if lambda > 0.0 => Cutoff(k / lambda),
            None => Cutoff::INFINITE,
        }
    }
}

/// Ball radius actually sampled: on a compact model a ball past the
/// diameter is the whole manifold.
fn ball_radius(model: &dyn Manifold, r: f64) -> Result<f64> {
    match model.diameter() {
        Some(d) => Ok(r.min(d)),
        None if r <= model.max_radius() => Ok(r),
        None => Err(Error::coverage(
            "epsreg",
            format!("radius {r} exceeds the supported radius {}", model.max_radius()),
        )),
    }
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::param("epsreg", format!("{name} = {x} must be positive and finite")))
    }
}

fn check_scales(lambda: f64, k: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::param("epsreg", format!("Lambda = {lambda} must be finite and nonnegative")));
    }
    positive("K", k)
}

/// Which side of `r = K / Lambda` an instance falls on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `r >= K / Lambda`.
    Large,
    /// `r < K / Lambda`.
    Small,
}

/// Disjunct of the dichotomy that held with the smaller constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disjunct {
    /// Curvature bounded on the half ball.
    Bounded,
    /// Scalar-Weyl energy large and controlling the curvature.
    ScalarWeyl,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegularityReport {
    pub model: String,
    pub center: Vec<f64>,
    pub r: f64,
    pub lambda: f64,
    pub k: f64,
    pub eps0: f64,
    /// `int_{B(p,r)} |Rm|^2`.
    pub energy: f64,
    pub volume: f64,
    pub below_eps0: bool,
    pub regime: Regime,
    /// `sup_{B(p,r/2)} |Rm|`.
    pub sup_rm: f64,
    /// Averages over `B(p, r)`.
    pub avg_rm2: f64,
    pub avg_csc_weyl: f64,
    /// `sup |Rm| r^2`.
    pub sup_r2: f64,
    /// `sup |Rm|^2 / avg |Rm|^2`; `None` when the average vanishes.
    pub sup_to_avg: Option<f64>,
    /// `avg (R^2/3 + 4|W+|^2) r^4`.
    pub csc_r4: f64,
    /// Constant of the bounded disjunct: `sup |Rm| r^2` or `sup |Rm| / Lambda^2`.
    pub bounded_constant: f64,
    /// Small regime: the scalar-Weyl average is positive. Large regime: its
    /// average over `B(p, 1/Lambda)` exceeds `Lambda^4`.
    pub scalar_weyl_condition: bool,
    /// Average over `B(p, 1/Lambda)`, large regime only.
    pub avg_csc_weyl_lambda: Option<f64>,
    /// Constant of the scalar-Weyl disjunct when its condition holds.
    pub scalar_weyl_constant: Option<f64>,
    pub branch: Disjunct,
    /// Some disjunct holds with a finite constant, and in the small regime
    /// the sup-to-average bound is finite.
    pub consistent: bool,
    /// `avg |Rm|^2 <= eps0 r^-4`: the sup-to-average constant is then
    /// expected finite.
    pub low_average: bool,
}

/// Evaluates both disjuncts of the regularity dichotomy at `(p, r)`.
pub fn classify(
    model: &dyn Manifold,
    center: &[f64],
    r: f64,
    lambda: f64,
    k: f64,
    opts: &ScanOptions,
) -> Result<RegularityReport> {
    positive("r", r)?;
    check_scales(lambda, k)?;
    let p = ChartPoint::new(center.to_vec());
    model.check_point(&p)?;
    let oracle = opts.oracle();
    let ball = oracle.averages(model, center, ball_radius(model, r)?)?;
    let sup_rm = model.ball_curvature_sup(&p, ball_radius(model, 0.5 * r)?)?;
    let regime = if lambda > 0.0 && r >= k / lambda {
        Regime::Large
    } else {
        Regime::Small
    };
    let ratio = |num: f64, den: f64| (den > 0.0).then(|| num / den);
    let sup_to_avg = if sup_rm == 0.0 { Some(0.0) } else { ratio(sup_rm * sup_rm, ball.energy) };
    let (bounded_constant, scalar_weyl_condition, avg_csc_weyl_lambda, scalar_weyl_constant) = match regime {
        Regime::Small => {
            let cond = ball.csc_weyl > 0.0;
            (sup_rm * r * r, cond, None, ratio(sup_rm * sup_rm, ball.csc_weyl).filter(|_| cond))
        }
        Regime::Large => {
            let unit = 1.0 / lambda;
            let avg = oracle.averages(model, center, ball_radius(model, unit)?)?.csc_weyl;
            let cond = avg > lambda.powi(4);
            let constant = if cond {
                pointwise_constant(model, center, r, unit, opts)?
            } else {
                None
            };
            (sup_rm / (lambda * lambda), cond, Some(avg), constant)
        }
    };
    let branch = match scalar_weyl_constant {
        Some(c) if c < bounded_constant => Disjunct::ScalarWeyl,
        _ => Disjunct::Bounded,
    };
    let some_disjunct = bounded_constant.is_finite() || scalar_weyl_constant.is_some_and(f64::is_finite);
    let iii = regime == Regime::Large || sup_to_avg.is_some_and(f64::is_finite);
    let energy = ball.energy * ball.volume;
    Ok(RegularityReport {
        model: model.name().to_string(),
        center: center.to_vec(),
        r,
        lambda,
        k,
        eps0: opts.eps0,
        energy,
        volume: ball.volume,
        below_eps0: energy <= opts.eps0,
        regime,
        sup_rm,
        avg_rm2: ball.energy,
        avg_csc_weyl: ball.csc_weyl,
        sup_r2: sup_rm * r * r,
        sup_to_avg,
        csc_r4: ball.csc_weyl * r.powi(4),
        bounded_constant,
        scalar_weyl_condition,
        avg_csc_weyl_lambda,
        scalar_weyl_constant,
        branch,
        consistent: some_disjunct && iii,
        low_average: ball.energy * r.powi(4) <= opts.eps0,
    })
}

/// `sup_q |Rm(q)|^2 / avg_{B(q, unit)} (R^2/3 + 4|W+|^2)` over sampled
/// `q in B(p, r/2)`.
fn pointwise_constant(
    model: &dyn Manifold,
    center: &[f64],
    r: f64,
    unit: f64,
    opts: &ScanOptions,
) -> Result<Option<f64>> {
    let half = ball_radius(model, 0.5 * r)?;
    let region = RegionSpec::Ball { center: center.to_vec(), radius: half };
    let qs = model.sample(&region, half / opts.points_per_radius.max(1.0), opts.seed, 0.0)?;
    let oracle = opts.oracle();
    let unit = ball_radius(model, unit)?;
    let worst = qs
        .points
        .par_iter()
        .map(|q| {
            let rm = model.curvature_norm(q)?;
            let avg = oracle.averages(model, &q.coords, unit)?.csc_weyl;
            Ok(if rm == 0.0 { 0.0 } else if avg > 0.0 { rm * rm / avg } else { f64::INFINITY })
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(worst.is_finite().then_some(worst))
}

/// `classify` over a grid of centers and radii.
pub fn scan_classify(
    model: &dyn Manifold,
    centers: &[Vec<f64>],
    radii: &[f64],
    lambda: f64,
    k: f64,
    opts: &ScanOptions,
) -> Vec<Result<RegularityReport>> {
    let grid: Vec<(&Vec<f64>, f64)> = centers.iter().flat_map(|c| radii.iter().map(move |r| (c, *r))).collect();
    grid.par_iter()
        .map(|(c, r)| classify(model, c, *r, lambda, k, opts))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct HarnackReport {
    pub model: String,
    pub center: Vec<f64>,
    pub r: f64,
    pub cutoff: f64,
    pub samples: usize,
    /// `sup_{B(p,r/2)} r_R^-4 / avg_{B(p,r)} r_R^-4`.
    pub average_constant: f64,
    /// `min r_R / max r_R` over `B(p, r)`.
    pub delta0: f64,
    pub min_radius: f64,
    pub max_radius: f64,
}

/// Weighted mean written as an offset from the minimum, so a constant
/// sequence returns that constant exactly.
fn offset_mean(values: &[f64], weights: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let total: f64 = weights.iter().sum();
    m + values.iter().zip(weights).map(|(v, w)| w * (v - m)).sum::<f64>() / total
}

pub fn harnack_probe(
    model: &dyn Manifold,
    center: &[f64],
    r: f64,
    lambda: f64,
    k: f64,
    opts: &ScanOptions,
) -> Result<HarnackReport> {
    positive("r", r)?;
    check_scales(lambda, k)?;
    if lambda > 0.0 && r >= k / lambda {
        return Err(Error::param("epsreg", format!("r = {r} must lie below K / Lambda = {}", k / lambda)));
    }
    let p = ChartPoint::new(center.to_vec());
    model.check_point(&p)?;
    let radius = ball_radius(model, r)?;
    let region = RegionSpec::Ball { center: center.to_vec(), radius };
    let d = model.sample(&region, radius / opts.points_per_radius, opts.seed, 0.0)?;
    let s = opts.cutoff(lambda, k);
    let field = radius_field(model, &d, s, &opts.radius)?;
    let at_center = curvature_radius(model, &p, s, &opts.radius)?.value;
    let inv4: Vec<f64> = field.values.iter().map(|v| v.powi(-4)).collect();
    let inner = d
        .points
        .iter()
        .zip(&inv4)
        .map(|(q, v)| Ok(model.within(q, &p, 0.5 * radius)?.then_some(*v)))
        .collect::<Result<Vec<_>>>()?;
    let sup = inner.into_iter().flatten().fold(at_center.powi(-4), f64::max);
    let avg = offset_mean(&inv4, &d.weights);
    let lo = field.values.iter().cloned().fold(at_center, f64::min);
    let hi = field.values.iter().cloned().fold(at_center, f64::max);
    Ok(HarnackReport {
        model: model.name().to_string(),
        center: center.to_vec(),
        r,
        cutoff: field.effective_cutoff,
        samples: d.len(),
        average_constant: sup / avg,
        delta0: lo / hi,
        min_radius: lo,
        max_radius: hi,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CollapseReport {
    pub model: String,
    pub center: Vec<f64>,
    pub tau: f64,
    pub cutoff: f64,
    /// `r_R(p)`.
    pub radius: f64,
    pub at_cutoff: bool,
    pub volume: f64,
    /// `Vol B(p, r_R) / r_R^4`.
    pub volume_ratio: f64,
    /// The Euclidean value `pi^2 / 2`.
    pub euclidean_ratio: f64,
    /// `int_{B(p, 2 r_R)} |Rm|^2`.
    pub energy: f64,
    pub energy_below_eps0: bool,
    /// `volume_ratio <= tau`.
    pub collapsed: bool,
    /// False only when the energy is below `eps0` but the ball is not collapsed.
    pub consistent: bool,
    /// The energy ball held a single sample, or the radius was degenerate.
    pub insufficient_sampling: bool,
}

pub fn collapse_check(
    model: &dyn Manifold,
    center: &[f64],
    lambda: f64,
    k: f64,
    tau: f64,
    opts: &ScanOptions,
) -> Result<CollapseReport> {
    check_scales(lambda, k)?;
    positive("tau", tau)?;
    let p = ChartPoint::new(center.to_vec());
    model.check_point(&p)?;
    let s = opts.cutoff(lambda, k);
    let rv = curvature_radius(model, &p, s, &opts.radius)?;
    let rr = rv.value;
    if lambda > 0.0 && rr > k / lambda {
        return Err(Error::param(
            "epsreg",
            format!("r_R(p) = {rr} exceeds K / Lambda = {}", k / lambda),
        ));
    }
    let volume = model.ball_volume(&p, ball_radius(model, rr)?)?;
    let outer = ball_radius(model, 2.0 * rr)?;
    let region = RegionSpec::Ball { center: center.to_vec(), radius: outer };
    let d = model.sample(&region, outer / opts.points_per_radius, opts.seed, 0.0)?;
    let energy = d
        .points
        .iter()
        .zip(&d.weights)
        .map(|(q, w)| Ok(w * model.curvature_at(q)?.norm_sq()))
        .sum::<Result<f64>>()?;
    let volume_ratio = volume / rr.powi(4);
    let collapsed = volume_ratio <= tau;
    let energy_below_eps0 = energy <= opts.eps0;
    Ok(CollapseReport {
        model: model.name().to_string(),
        center: center.to_vec(),
        tau,
        cutoff: s.resolve(model).unwrap_or(f64::INFINITY),
        radius: rr,
        at_cutoff: rv.at_cutoff,
        volume,
        volume_ratio,
        euclidean_ratio: PI * PI / 2.0,
        energy,
        energy_below_eps0,
        collapsed,
        consistent: collapsed || !energy_below_eps0,
        insufficient_sampling: d.len() < 2 || rv.degenerate,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct VolumeComparisonReport {
    pub model: String,
    pub center: Vec<f64>,
    pub rho: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
    /// `|A(rho - gamma, rho + beta)| / |B(rho)|`.
    pub annulus_ratio: f64,
    /// `|B(rho + beta)| / |B(rho)|`.
    pub ball_ratio: f64,
    /// `((rho + beta) / rho)^4`.
    pub flat_ratio: f64,
    /// `(9/8) (1 + beta/rho)^4 cosh^3(Lambda beta)`.
    pub bound: f64,
    pub pass: bool,
}

pub fn volume_comparison_check(
    model: &dyn Manifold,
    center: &[f64],
    rho: f64,
    beta: f64,
    gamma: f64,
    lambda: f64,
    opts: &ScanOptions,
) -> Result<VolumeComparisonReport> {
    positive("rho", rho)?;
    positive("beta", beta)?;
    if !(0.0..rho).contains(&gamma) {
        return Err(Error::param("epsreg", format!("gamma = {gamma} must lie in [0, rho)")));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::param("epsreg", format!("Lambda = {lambda} must be finite and nonnegative")));
    }
    if lambda * beta > opts.volume_window {
        return Err(Error::param(
            "epsreg",
            format!("Lambda beta = {} exceeds the window {}", lambda * beta, opts.volume_window),
        ));
    }
    let p = ChartPoint::new(center.to_vec());
    model.check_point(&p)?;
    let vol = |r: f64| -> Result<f64> {
        if r == 0.0 {
            Ok(0.0)
        } else {
            model.ball_volume(&p, ball_radius(model, r)?)
        }
    };
    let base = vol(rho)?;
    let outer = vol(rho + beta)?;
    let inner = vol(rho - gamma)?;
    let annulus_ratio = (outer - inner) / base;
    let ball_ratio = outer / base;
    let flat_ratio = ((rho + beta) / rho).powi(4);
    let bound = VOLUME_CONSTANT * flat_ratio * (lambda * beta).cosh().powi(3);
    Ok(VolumeComparisonReport {
        model: model.name().to_string(),
        center: center.to_vec(),
        rho,
        beta,
        gamma,
        lambda,
        annulus_ratio,
        ball_ratio,
        flat_ratio,
        bound,
        pass: annulus_ratio <= ball_ratio * (1.0 + 1e-12) && ball_ratio <= bound,
    })
}

/// One JSON object per line.
pub fn write_json_lines<T: Serialize, W: std::io::Write>(reports: &[T], mut out: W) -> Result<()> {
    for r in reports {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
