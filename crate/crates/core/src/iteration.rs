//! Radius schedules for the averaged energy iteration and the recursive
//! inequality evaluated on model data.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ChartPoint, Manifold, RegionSpec};
use crate::tensor4::decompose;

/// Ratio whose fourth root is the step decay.
pub const DECAY: f64 = 33.0 / 40.0;
/// Stated value of `lim rho_i` in units of `Lambda^-1`.
pub const STATED_LIMIT: f64 = 20.3;
/// Stated value of `sum (3/4)^i mu_i^-4`.
pub const STATED_WEIGHTED_SUM: f64 = 11.0;
/// Tail `(3/4)^T E_T` below this counts as negligible.
pub const NEGLIGIBLE_TAIL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    /// `rho_0 = Lambda^-1`, steps `mu_i Lambda^-1`.
    I,
    /// `rho_0 = r/100`, steps `mu_i = r (33/40)^{i/4} / 25`.
    Ii,
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationSchedule {
    pub case: Case,
    /// `Lambda` in case (i), `r` in case (ii).
    pub scale: f64,
    pub base: f64,
    /// `mu_0 .. mu_{T-1}`: dimensionless in case (i), lengths in case (ii).
    pub mu: Vec<f64>,
    /// `rho_0 .. rho_T`.
    pub rho: Vec<f64>,
    pub truncation: usize,
}

/// `(33/40)^{i/4}`, exact on multiples of four.
pub fn decay_power(i: usize) -> f64 {
    let q = DECAY.powf(0.25);
    DECAY.powi((i / 4) as i32) * q.powi((i % 4) as i32)
}

impl IterationSchedule {
    /// Length added at step `i`.
    pub fn step(&self, i: usize) -> f64 {
        self.rho[i + 1] - self.rho[i]
    }

    /// `mu_i` as a dimensionless multiple of the case's unit.
    pub fn unit_mu(&self, i: usize) -> f64 {
        decay_power(i)
    }

    /// Length multiplying `sum mu_i`: `Lambda^-1` or `r/25`.
    pub fn unit(&self) -> f64 {
        match self.case {
            Case::I => 1.0 / self.scale,
            Case::Ii => self.scale / 25.0,
        }
    }

    /// Truncated copy keeping `rho_0 .. rho_t`.
    pub fn truncated(&self, t: usize) -> Self {
        let t = t.min(self.truncation);
        IterationSchedule {
            mu: self.mu[..t].to_vec(),
            rho: self.rho[..=t].to_vec(),
            truncation: t,
            ..self.clone()
        }
    }
}

pub fn schedule(case: Case, scale: f64, t: usize) -> Result<IterationSchedule> {
    if !(scale > 0.0 && scale.is_finite()) {
        let name = if case == Case::I { "Lambda" } else { "r" };
        return Err(Error::param("iteration", format!("{name} = {scale} must be positive")));
    }
    let (base, unit, mu_unit) = match case {
        Case::I => (1.0 / scale, 1.0 / scale, 1.0),
        Case::Ii => (scale / 100.0, 1.0, scale / 25.0),
    };
    let mu: Vec<f64> = (0..t).map(|i| mu_unit * decay_power(i)).collect();
    let mut rho = Vec::with_capacity(t + 1);
    rho.push(base);
    for m in &mu {
        let last = rho[rho.len() - 1];
        rho.push(last + m * unit);
    }
    Ok(IterationSchedule { case, scale, base, mu, rho, truncation: t })
}

#[derive(Debug, Clone, Serialize)]
pub struct SeriesSums {
    /// `sum_{i<T} (3/4)^i mu_i^-4` with dimensionless `mu_i`.
    pub weighted_partial: f64,
    /// `sum (10/11)^i = 11`.
    pub weighted_limit: f64,
    pub weighted_residual: f64,
    /// `max_i |(3/4)^i mu_i^-4 - (10/11)^i|` over `i < T`.
    pub identity_residual: f64,
    /// `sum_{i<T} mu_i`, dimensionless.
    pub mu_partial: f64,
    /// `1 / (1 - (33/40)^{1/4})`.
    pub mu_limit: f64,
    /// The same sum by direct summation until the terms stop registering.
    pub mu_limit_summed: f64,
    pub mu_limit_below_25: bool,
    /// `rho_T`.
    pub rho_partial: f64,
    /// `rho_0 + unit * sum mu_i`.
    pub rho_limit: f64,
    /// `rho_limit` in units of `Lambda^-1` (case i) or `r` (case ii).
    pub rho_limit_scaled: f64,
    /// `rho_limit_scaled - 20.3`; only meaningful in case (i).
    pub stated_limit_difference: f64,
}

/// Direct summation of `sum_i (33/40)^{i/4}` until adding a term no longer
/// changes the sum.
pub fn summed_mu_limit() -> f64 {
    let mut sum = 0.0;
    let mut i = 0;
    loop {
        let next = sum + decay_power(i);
        if next == sum {
            return sum;
        }
        sum = next;
        i += 1;
    }
}

/// `(3/4)^i mu_i^-4`, taken as a fourth power so long schedules stay finite.
fn weighted_term(i: usize) -> f64 {
    let a = 0.75f64.powi((i / 4) as i32) / decay_power(i);
    a.powi(4) * 0.75f64.powi((i % 4) as i32)
}

pub fn series_sums(sched: &IterationSchedule) -> SeriesSums {
    let t = sched.truncation;
    let weighted: Vec<f64> = (0..t).map(weighted_term).collect();
    let identity_residual = weighted
        .iter()
        .enumerate()
        .map(|(i, w)| (w - (10.0f64 / 11.0).powi(i as i32)).abs())
        .fold(0.0, f64::max);
    let weighted_partial: f64 = weighted.iter().sum();
    let weighted_limit = 1.0 / (1.0 - 10.0 / 11.0);
    let mu_limit = 1.0 / (1.0 - DECAY.powf(0.25));
    let rho_limit = sched.base + sched.unit() * mu_limit;
    let rho_limit_scaled = match sched.case {
        Case::I => rho_limit * sched.scale,
        Case::Ii => rho_limit / sched.scale,
    };
    SeriesSums {
        weighted_partial,
        weighted_limit,
        weighted_residual: weighted_limit - STATED_WEIGHTED_SUM,
        identity_residual,
        mu_partial: (0..t).map(decay_power).sum(),
        mu_limit,
        mu_limit_summed: summed_mu_limit(),
        mu_limit_below_25: mu_limit < 25.0,
        rho_partial: sched.rho[t],
        rho_limit,
        rho_limit_scaled,
        stated_limit_difference: rho_limit_scaled - STATED_LIMIT,
    }
}

/// Ball averages of `|Rm|^2` and `R^2/3 + 4|W+|^2`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BallAverages {
    pub volume: f64,
    pub energy: f64,
    pub csc_weyl: f64,
}

pub trait EnergyOracle: Sync {
    fn averages(&self, model: &dyn Manifold, center: &[f64], rho: f64) -> Result<BallAverages>;
}

/// Quadrature over a sampled ball with spacing `rho / points_per_radius`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampledOracle {
    pub points_per_radius: f64,
    pub seed: u64,
}

impl Default for SampledOracle {
    fn default() -> Self {
        SampledOracle { points_per_radius: 4.0, seed: 0 }
    }
}

impl EnergyOracle for SampledOracle {
    fn averages(&self, model: &dyn Manifold, center: &[f64], rho: f64) -> Result<BallAverages> {
        let region = RegionSpec::Ball { center: center.to_vec(), radius: rho };
        let d = model.sample(&region, rho / self.points_per_radius, self.seed, 0.0)?;
        let (mut energy, mut csc) = (0.0, 0.0);
        for (p, w) in d.points.iter().zip(&d.weights) {
            let dec = decompose(&model.curvature_at(p)?);
            energy += w * dec.rm_norm_sq;
            csc += w * (dec.scalar * dec.scalar / 3.0 + 4.0 * dec.wplus_norm_sq());
        }
        let volume = d.total_weight();
        if !(volume > 0.0) {
            return Err(Error::EmptyDomain { module: "iteration" });
        }
        Ok(BallAverages { volume, energy: energy / volume, csc_weyl: csc / volume })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationStep {
    pub i: usize,
    pub rho: f64,
    /// `mu_i`; `None` on the last radius.
    pub mu: Option<f64>,
    pub averages: BallAverages,
    /// The smallest constant making step `i` hold.
    pub step_constant: Option<f64>,
    /// `lhs - rhs` of step `i` at the measured constant; never positive.
    pub residual: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationTrace {
    pub schedule: IterationSchedule,
    /// Requested `T` before truncation to chart coverage.
    pub requested: usize,
    pub steps: Vec<IterationStep>,
    /// `max(0, max_i step_constant)`.
    pub measured_constant: f64,
    /// `(3/4)^T` times the last energy average.
    pub tail: f64,
    pub tail_negligible: bool,
    /// Steps chained at the measured constant: a bound on the first energy.
    pub chained_bound: f64,
}

impl IterationTrace {
    /// `i, rho_i, mu_i, energy, csc_weyl, residual`; blank where undefined.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["i", "rho", "mu", "energy", "csc_weyl", "residual"])?;
        let opt = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:.16e}"));
        for s in &self.steps {
            w.write_record([
                s.i.to_string(),
                format!("{:.16e}", s.rho),
                opt(s.mu),
                format!("{:.16e}", s.averages.energy),
                format!("{:.16e}", s.averages.csc_weyl),
                opt(s.residual),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Penalty multiplying the constant at step `i`.
fn penalty(sched: &IterationSchedule, i: usize) -> f64 {
    let len = sched.step(i);
    match sched.case {
        Case::I => {
            let c = sched.unit_mu(i).cosh();
            len.powi(-4) * (c.powi(3) + c.powi(12))
        }
        Case::Ii => len.powi(-4),
    }
}

/// Scalar-Weyl average on the right of step `i`: same ball in case (i), the
/// next ball in case (ii).
fn step_csc(sched: &IterationSchedule, avg: &[BallAverages], i: usize) -> f64 {
    match sched.case {
        Case::I => avg[i].csc_weyl,
        Case::Ii => avg[i + 1].csc_weyl,
    }
}

/// Evaluates every ball average of the schedule around `center`. Radii past
/// the model's supported range truncate the schedule.
pub fn run_iteration(
    model: &dyn Manifold,
    center: &[f64],
    sched: &IterationSchedule,
    oracle: &dyn EnergyOracle,
) -> Result<IterationTrace> {
    model.check_point(&ChartPoint::new(center.to_vec()))?;
    let limit = model.max_radius();
    let keep = sched.rho.iter().take_while(|r| **r <= limit).count();
    if keep == 0 {
        return Err(Error::coverage(
            "iteration",
            format!("rho_0 = {} exceeds the supported radius {limit}", sched.base),
        ));
    }
    let requested = sched.truncation;
    let sched = if keep <= requested {
        log::warn!("radius {} exceeds the supported radius {limit}; truncating T to {}", sched.rho[keep], keep - 1);
        sched.truncated(keep - 1)
    } else {
        sched.clone()
    };
    let avg: Vec<BallAverages> = sched
        .rho
        .par_iter()
        .map(|r| oracle.averages(model, center, *r))
        .collect::<Result<_>>()?;
    let t = sched.truncation;
    let consts: Vec<f64> = (0..t)
        .map(|i| (avg[i].energy - step_csc(&sched, &avg, i) - 0.75 * avg[i + 1].energy) / penalty(&sched, i))
        .collect();
    let measured_constant = consts.iter().cloned().fold(0.0, f64::max);
    let rhs = |i: usize| step_csc(&sched, &avg, i) + measured_constant * penalty(&sched, i);
    let steps = (0..=t)
        .map(|i| IterationStep {
            i,
            rho: sched.rho[i],
            mu: sched.mu.get(i).copied(),
            averages: avg[i],
            step_constant: consts.get(i).copied(),
            residual: (i < t).then(|| avg[i].energy - rhs(i) - 0.75 * avg[i + 1].energy),
        })
        .collect();
    let tail = 0.75f64.powi(t as i32) * avg[t].energy;
    let chained_bound = (0..t).map(|i| 0.75f64.powi(i as i32) * rhs(i)).sum::<f64>() + tail;
    Ok(IterationTrace {
        schedule: sched,
        requested,
        steps,
        measured_constant,
        tail,
        tail_negligible: tail < NEGLIGIBLE_TAIL,
        chained_bound,
    })
}
