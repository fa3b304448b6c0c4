//! Both sides of the integration inequality
//! `int_Omega (r^s)^-k <= m s^-k Vol Omega^(mu s) + C int_{Omega^{mu R,s}} |Rm|^{k/2}`
//! on sampled data, and the thickened sets it refers to.

use rayon::prelude::*;
use serde::Serialize;

use crate::cover::{build_cover_and_verify, build_separated_subset, SeparatedCover};
use crate::error::{Error, Result};
use crate::models::{ChartPoint, Manifold, SampledDomain};
use crate::neighbors::NeighborIndex;
use crate::radius::{curvature_radius, Cutoff, RadiusField, RadiusOptions};

/// Membership of ambient sample points in the thickenings of a domain.
#[derive(Debug, Clone)]
pub struct ThickenedSets {
    pub omega: SampledDomain,
    pub ambient: SampledDomain,
    pub s: f64,
    pub mu: f64,
    /// `dist(x, Omega) < s`.
    pub in_omega_s: Vec<bool>,
    /// `dist(x, Omega) < mu s`.
    pub in_omega_mu_s: Vec<bool>,
    /// `dist(x, Omega) < 2 s`.
    pub in_omega_2s: Vec<bool>,
    /// `x in B(p, r^s(p))` for some `p in Omega`.
    pub in_omega_r_s: Vec<bool>,
    /// `x in B(p, mu r^s(p))` for some `p in Omega`.
    pub in_omega_mu_r_s: Vec<bool>,
    /// `x in B(p, r^{mu s}(p))` for some `p in Omega`.
    pub in_omega_r_mu_s: Vec<bool>,
}

fn subset(d: &SampledDomain, mask: &[bool]) -> SampledDomain {
    let (points, weights) = d
        .points
        .iter()
        .zip(&d.weights)
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|((p, w), _)| (p.clone(), *w))
        .unzip();
    SampledDomain {
        points,
        weights,
        model: d.model.clone(),
        resolution: d.resolution,
        seed: d.seed,
    }
}

fn masked_sum(d: &SampledDomain, mask: &[bool], f: impl Fn(usize) -> f64) -> f64 {
    (0..d.len()).filter(|i| mask[*i]).fold(0.0, |a, i| a + d.weights[i] * f(i))
}

impl ThickenedSets {
    pub fn omega_s(&self) -> SampledDomain {
        subset(&self.ambient, &self.in_omega_s)
    }

    pub fn omega_r_s(&self) -> SampledDomain {
        subset(&self.ambient, &self.in_omega_r_s)
    }

    pub fn omega_mu_r_s(&self) -> SampledDomain {
        subset(&self.ambient, &self.in_omega_mu_r_s)
    }

    /// Ambient points breaking `Omega^{R,s} in Omega^(s)` or
    /// `Omega^{mu R,s} in Omega^{R,mu s}`.
    pub fn containment_violations(&self) -> Vec<usize> {
        (0..self.ambient.len())
            .filter(|i| {
                (self.in_omega_r_s[*i] && !self.in_omega_s[*i])
                    || (self.in_omega_mu_r_s[*i] && !self.in_omega_r_mu_s[*i])
            })
            .collect()
    }
}

/// Ambient points within a per-center radius of some domain point.
fn union_of_balls(
    model: &dyn Manifold,
    centers: &[ChartPoint],
    radii: &[f64],
    ambient: &SampledDomain,
) -> Result<Vec<bool>> {
    let index = NeighborIndex::new(model, centers);
    let top = radii.iter().cloned().fold(0.0, f64::max);
    ambient
        .points
        .par_iter()
        .map(|x| {
            index.any_within(&model.embedding(x), top, |j| {
                Ok(radii[j] > 0.0 && model.within(x, &centers[j], radii[j])?)
            })
        })
        .collect()
}

/// Whether the ambient sample carries the whole volume of a compact model.
fn covers_model(model: &dyn Manifold, p: &ChartPoint, ambient: &SampledDomain) -> Result<bool> {
    let Some(diam) = model.diameter() else {
        return Ok(false);
    };
    let vol = model.ball_volume(p, diam * (1.0 + 1e-9))?;
    Ok((ambient.total_weight() / vol - 1.0).abs() < 0.05)
}

/// Thickenings of the field's domain, sampled on `ambient`.
pub fn thickened_sets(
    model: &dyn Manifold,
    field: &RadiusField,
    ambient: &SampledDomain,
    mu: f64,
) -> Result<ThickenedSets> {
    let s = field.effective_cutoff;
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::param("integration", "thickening needs a finite positive cutoff"));
    }
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(Error::param("integration", format!("mu = {mu} must lie in (0, 1]")));
    }
    if field.is_empty() {
        return Err(Error::EmptyDomain { module: "integration" });
    }
    let pts = &field.domain.points;
    let n = pts.len();
    let opts = RadiusOptions::default();
    let r_mu_s: Vec<f64> = pts
        .par_iter()
        .map(|p| Ok(curvature_radius(model, p, Cutoff(mu * s), &opts)?.value))
        .collect::<Result<_>>()?;
    let scaled: Vec<f64> = field.values.iter().map(|r| mu * r).collect();
    let in_omega_2s = union_of_balls(model, pts, &vec![2.0 * s; n], ambient)?;
    if in_omega_2s.iter().all(|b| *b) && !covers_model(model, &pts[0], ambient)? {
        return Err(Error::param(
            "integration",
            format!("the 2s-thickening (s = {s}) reaches past the ambient sample"),
        ));
    }
    Ok(ThickenedSets {
        omega: field.domain.clone(),
        ambient: ambient.clone(),
        s,
        mu,
        in_omega_s: union_of_balls(model, pts, &vec![s; n], ambient)?,
        in_omega_mu_s: union_of_balls(model, pts, &vec![mu * s; n], ambient)?,
        in_omega_2s,
        in_omega_r_s: union_of_balls(model, pts, &field.values, ambient)?,
        in_omega_mu_r_s: union_of_balls(model, pts, &scaled, ambient)?,
        in_omega_r_mu_s: union_of_balls(model, pts, &r_mu_s, ambient)?,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct IntegrationReport {
    pub exponent: f64,
    pub s: f64,
    pub mu: f64,
    pub m: f64,
    /// `int_Omega (r^s)^-k`.
    pub lhs: f64,
    /// `Vol Omega^(mu s)`.
    pub thickened_volume: f64,
    /// `m s^-k Vol Omega^(mu s)`.
    pub volume_term: f64,
    /// `int_{Omega^{mu R,s}} |Rm|^{k/2}`.
    pub energy_term: f64,
    /// `(lhs - volume_term) / energy_term`; `None` when the energy vanishes.
    pub c_measured: Option<f64>,
    /// `lhs / energy_term`, the constant of the form without volume term.
    pub c_without_volume: Option<f64>,
    /// With zero energy the inequality reduces to `lhs <= volume_term`.
    pub holds_without_energy: bool,
    /// `(C, lhs / (volume_term + C energy_term))`.
    pub ratios: Vec<(f64, f64)>,
    /// `int_{Omega^(2s)} |Rm|^2`, recorded alongside.
    pub energy_2s: f64,
    /// Partition-of-unity estimate of `lhs` from a cover, when supplied.
    pub cover_lhs: Option<f64>,
}

/// Candidate constants at which the ratio is tabulated.
pub const CANDIDATE_C: [f64; 4] = [1.0, 10.0, 100.0, 1000.0];

/// Evaluates both sides on sampled data.
pub fn integration_report(
    model: &dyn Manifold,
    field: &RadiusField,
    sets: &ThickenedSets,
    exponent: f64,
    m: f64,
) -> Result<IntegrationReport> {
    if !(exponent > 0.0) {
        return Err(Error::param("integration", "exponent must be positive"));
    }
    if field.is_empty() {
        return Err(Error::EmptyDomain { module: "integration" });
    }
    if (sets.s - field.effective_cutoff).abs() > 1e-12 * sets.s {
        return Err(Error::param("integration", "thickened sets were built for another cutoff"));
    }
    let (s, mu) = (sets.s, sets.mu);
    let d = &field.domain;
    let lhs: f64 = (0..d.len()).map(|i| d.weights[i] * field.values[i].powf(-exponent)).sum();
    let amb = &sets.ambient;
    let norms: Vec<f64> = amb
        .points
        .par_iter()
        .map(|x| model.curvature_norm(x))
        .collect::<Result<_>>()?;
    let thickened_volume = masked_sum(amb, &sets.in_omega_mu_s, |_| 1.0);
    let volume_term = m * s.powf(-exponent) * thickened_volume;
    let energy_term = masked_sum(amb, &sets.in_omega_mu_r_s, |i| norms[i].powf(exponent / 2.0));
    let energy_2s = masked_sum(amb, &sets.in_omega_2s, |i| norms[i] * norms[i]);
    let positive = energy_term > 0.0;
    Ok(IntegrationReport {
        exponent,
        s,
        mu,
        m,
        lhs,
        thickened_volume,
        volume_term,
        energy_term,
        c_measured: positive.then(|| (lhs - volume_term) / energy_term),
        c_without_volume: positive.then(|| lhs / energy_term),
        holds_without_energy: lhs <= volume_term,
        ratios: CANDIDATE_C
            .iter()
            .map(|c| (*c, lhs / (volume_term + c * energy_term)))
            .collect(),
        energy_2s,
        cover_lhs: None,
    })
}

/// Multiplicity of the cover with `k = 8 / mu`, `l = 8/7` on the field's
/// domain, used as the default `m`.
pub fn default_multiplicity(model: &dyn Manifold, field: &RadiusField, mu: f64) -> Result<(f64, SeparatedCover)> {
    let k = 8.0 / mu;
    let centers = build_separated_subset(model, field, k)?;
    let (cover, report) = build_cover_and_verify(model, field, &centers, k, 8.0 / 7.0)?;
    Ok((report.max_multiplicity.max(1) as f64, cover))
}

/// `sum_i r(p_i)^-k * sum_{x in B_i} w_x / mult(x)`: the integral with `r`
/// frozen at each ball center.
pub fn cover_decomposition(field: &RadiusField, cover: &SeparatedCover, members: &[Vec<usize>], exponent: f64) -> f64 {
    let d = &field.domain;
    let mut per_center = vec![0.0; cover.centers.len()];
    for (x, hit) in members.iter().enumerate() {
        for c in hit {
            per_center[*c] += d.weights[x] / hit.len() as f64;
        }
    }
    cover
        .centers
        .iter()
        .zip(&per_center)
        .map(|(i, w)| field.values[*i].powf(-exponent) * w)
        .sum()
}
