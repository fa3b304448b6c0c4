//! Maximally separated subsets of a sampled domain, the covers they induce,
//! and exhaustive verification of the covering lemma on the samples.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::{ChartPoint, Manifold};
use crate::neighbors::NeighborIndex;
use crate::radius::RadiusField;

/// Which part of a cutoff cover a center belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Partition {
    /// `r < s`: the curvature scale binds.
    #[serde(rename = "R")]
    Curvature,
    /// Covers the set left over at the cutoff scale.
    #[serde(rename = "s")]
    Cutoff,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeparatedCover {
    /// Domain indices of the centers, in selection order.
    pub centers: Vec<usize>,
    pub k: f64,
    pub l: f64,
    /// Ball radius per center.
    pub radii: Vec<f64>,
    pub partition: Vec<Partition>,
    /// Number of cover balls containing each domain point.
    pub multiplicity: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SandwichViolation {
    pub point: usize,
    pub center: usize,
    /// `r(p'_j) / r(p'')`; the lower limit is `(k - l) / (k + l)`.
    pub ratio: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct CoverReport {
    pub coverage_fraction: f64,
    pub uncovered: Vec<usize>,
    pub max_multiplicity: usize,
    /// `max_multiplicity / k^n`.
    pub multiplicity_constant: f64,
    pub separation_violations: Vec<(usize, usize)>,
    pub maximality_violations: Vec<usize>,
    pub disjointness_violations: Vec<(usize, usize)>,
    pub clusters_checked: usize,
    pub sandwich_violations: Vec<SandwichViolation>,
    pub coverage_guaranteed: bool,
    pub multiplicity_guaranteed: bool,
    pub warnings: Vec<String>,
}

impl CoverReport {
    /// Every guaranteed property holds on the samples.
    pub fn passed(&self) -> bool {
        (!self.coverage_guaranteed || self.uncovered.is_empty())
            && self.separation_violations.is_empty()
            && self.maximality_violations.is_empty()
            && self.disjointness_violations.is_empty()
            && self.sandwich_violations.is_empty()
    }
}

fn check_k(k: f64) -> Result<()> {
    if !(k > 1.0 && k.is_finite()) {
        return Err(Error::param("cover", format!("separation parameter k = {k} must exceed 1")));
    }
    Ok(())
}

/// Parameter warnings for a `(k, l)` pair.
pub fn parameter_warnings(k: f64, l: f64) -> Vec<String> {
    let mut out = Vec::new();
    let lo = k / (k - 1.0);
    if (l - lo).abs() <= 1e-12 * lo {
        out.push(format!("l = {l} sits on the boundary l = k/(k-1); coverage needs strict inequality"));
    } else if l < lo {
        out.push(format!("l = {l} <= k/(k-1) = {lo}; coverage is not guaranteed"));
    }
    if l > k / 7.0 {
        out.push(format!("l = {l} > k/7 = {}; multiplicity is not guaranteed", k / 7.0));
    }
    for w in &out {
        log::warn!("{w}");
    }
    out
}

/// Greedy maximal `(1/k) r`-separated subset over `candidates`, visited in
/// order of decreasing radius with ties broken by index.
fn greedy(
    model: &dyn Manifold,
    field: &RadiusField,
    candidates: &[usize],
    radius: &dyn Fn(usize) -> f64,
    k: f64,
) -> Result<Vec<usize>> {
    let pts = &field.domain.points;
    let sub: Vec<ChartPoint> = candidates.iter().map(|i| pts[*i].clone()).collect();
    let index = NeighborIndex::new(model, &sub);
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|a, b| {
        radius(candidates[*b])
            .total_cmp(&radius(candidates[*a]))
            .then(candidates[*a].cmp(&candidates[*b]))
    });
    let top = order.first().map_or(0.0, |a| radius(candidates[*a]));
    let mut taken = vec![false; candidates.len()];
    let mut chosen = Vec::new();
    for a in order {
        let i = candidates[a];
        let ri = radius(i);
        let mut free = true;
        for b in index.near(index.embedding(a), top / k) {
            let j = candidates[b];
            if taken[b] && model.within(&pts[i], &pts[j], ri.max(radius(j)) / k)? {
                free = false;
                break;
            }
        }
        if free {
            taken[a] = true;
            chosen.push(i);
        }
    }
    Ok(chosen)
}

/// Maximal `(1/k) r`-separated subset of the field's domain.
pub fn build_separated_subset(model: &dyn Manifold, field: &RadiusField, k: f64) -> Result<Vec<usize>> {
    check_k(k)?;
    if field.is_empty() {
        return Err(Error::EmptyDomain { module: "cover" });
    }
    let all: Vec<usize> = (0..field.len()).collect();
    greedy(model, field, &all, &|i| field.values[i], k)
}

/// Per-point list of the centers whose balls contain it.
pub fn memberships(
    model: &dyn Manifold,
    field: &RadiusField,
    centers: &[usize],
    radii: &[f64],
) -> Result<Vec<Vec<usize>>> {
    let pts = &field.domain.points;
    let sub: Vec<ChartPoint> = centers.iter().map(|i| pts[*i].clone()).collect();
    let index = NeighborIndex::new(model, &sub);
    let top = radii.iter().cloned().fold(0.0, f64::max);
    pts.par_iter()
        .map(|x| {
            let mut hit = Vec::new();
            for c in index.near(&model.embedding(x), top) {
                if model.within(x, &pts[centers[c]], radii[c])? {
                    hit.push(c);
                }
            }
            Ok(hit)
        })
        .collect()
}

/// Separation, maximality and half-radius disjointness of `centers`,
/// checked over all pairs.
fn verify_separation(
    model: &dyn Manifold,
    field: &RadiusField,
    centers: &[usize],
    radius: &(dyn Fn(usize) -> f64 + Sync),
    k: f64,
    report: &mut CoverReport,
) -> Result<()> {
    let pts = &field.domain.points;
    let sub: Vec<ChartPoint> = centers.iter().map(|i| pts[*i].clone()).collect();
    let index = NeighborIndex::new(model, &sub);
    let top = centers.iter().map(|i| radius(*i)).fold(0.0, f64::max);
    let pairs: Vec<(Vec<(usize, usize)>, Vec<(usize, usize)>)> = (0..centers.len())
        .into_par_iter()
        .map(|a| {
            let mut sep = Vec::new();
            let mut dis = Vec::new();
            let i = centers[a];
            for b in index.near(index.embedding(a), top / k) {
                if b <= a {
                    continue;
                }
                let j = centers[b];
                let d = radius(i).max(radius(j)) / k;
                if model.within(&pts[i], &pts[j], d)? {
                    sep.push((i, j));
                }
                if model.within(&pts[i], &pts[j], (radius(i) + radius(j)) / (2.0 * k))? {
                    dis.push((i, j));
                }
            }
            Ok((sep, dis))
        })
        .collect::<Result<_>>()?;
    for (s, d) in pairs {
        report.separation_violations.extend(s);
        report.disjointness_violations.extend(d);
    }
    report.maximality_violations = (0..field.len())
        .into_par_iter()
        .map(|x| {
            let reach = radius(x).max(top) / k;
            for b in index.near(&model.embedding(&pts[x]), reach) {
                let j = centers[b];
                let d = radius(x).max(radius(j)) / k;
                if model.within_closed(&pts[x], &pts[j], d)? {
                    return Ok(None);
                }
            }
            Ok(Some(x))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    Ok(())
}

fn fill_coverage(
    field: &RadiusField,
    cover: &mut SeparatedCover,
    members: &[Vec<usize>],
    dim: usize,
    report: &mut CoverReport,
) {
    let (k, l) = (cover.k, cover.l);
    cover.multiplicity = members.iter().map(Vec::len).collect();
    report.uncovered = (0..members.len()).filter(|x| members[*x].is_empty()).collect();
    report.coverage_fraction = 1.0 - report.uncovered.len() as f64 / members.len() as f64;
    report.max_multiplicity = cover.multiplicity.iter().copied().max().unwrap_or(0);
    report.multiplicity_constant = report.max_multiplicity as f64 / k.powi(dim as i32);
    let lower = (k - l) / (k + l);
    for (x, hit) in members.iter().enumerate() {
        if hit.len() < 2 {
            continue;
        }
        report.clusters_checked += 1;
        let top = hit
            .iter()
            .map(|c| field.values[cover.centers[*c]])
            .fold(0.0, f64::max);
        for c in hit {
            let r = field.values[cover.centers[*c]];
            if !(lower * top < r && r <= top) {
                report.sandwich_violations.push(SandwichViolation {
                    point: x,
                    center: cover.centers[*c],
                    ratio: r / top,
                });
            }
        }
    }
}

/// Cover by the balls `B(p_i, (l/k) r(p_i))` with exhaustive verification.
pub fn build_cover_and_verify(
    model: &dyn Manifold,
    field: &RadiusField,
    centers: &[usize],
    k: f64,
    l: f64,
) -> Result<(SeparatedCover, CoverReport)> {
    check_k(k)?;
    if !(l > 0.0) {
        return Err(Error::param("cover", "cover parameter l must be positive"));
    }
    let mut report = CoverReport {
        coverage_guaranteed: l > k / (k - 1.0),
        multiplicity_guaranteed: l > k / (k - 1.0) && l <= k / 7.0,
        warnings: parameter_warnings(k, l),
        ..Default::default()
    };
    let radii: Vec<f64> = centers.iter().map(|i| l / k * field.values[*i]).collect();
    let mut cover = SeparatedCover {
        centers: centers.to_vec(),
        k,
        l,
        radii,
        partition: centers
            .iter()
            .map(|i| {
                if field.values[*i] < field.effective_cutoff {
                    Partition::Curvature
                } else {
                    Partition::Cutoff
                }
            })
            .collect(),
        multiplicity: Vec::new(),
    };
    verify_separation(model, field, centers, &|i| field.values[i], k, &mut report)?;
    let members = memberships(model, field, &cover.centers, &cover.radii)?;
    fill_coverage(field, &mut cover, &members, model.dim(), &mut report);
    Ok((cover, report))
}

#[derive(Debug, Clone, Serialize)]
pub struct CutoffReport {
    pub cover: CoverReport,
    /// Domain points outside the curvature-scale balls.
    pub leftover: usize,
    /// `sup |Rm| * s^2` over the `(6/7) s`-thickened leftover set.
    pub leftover_curvature: f64,
    /// The bound `49/36` on `leftover_curvature`.
    pub leftover_curvature_bound: f64,
    /// Smallest `r / s` on the leftover set; the argument needs `>= 6/7`.
    pub leftover_min_ratio: f64,
    /// Second-stage centers with `r < s`.
    pub cutoff_centers_below_s: usize,
    /// Centers whose ball is not inside `B(p_i, r^{(l/k)s}(p_i))`.
    pub containment_violations: Vec<usize>,
}

/// Two-stage cover of the corollary with a cutoff: curvature-scale balls
/// around the centers with `r < s`, then a uniform `(6/7) s` net of
/// whatever they leave uncovered.
pub fn build_cutoff_cover(
    model: &dyn Manifold,
    field: &RadiusField,
    k: f64,
    l: f64,
) -> Result<(SeparatedCover, CutoffReport)> {
    check_k(k)?;
    if !(l > k / (k - 1.0)) {
        return Err(Error::param("cover", format!("need k/(k-1) < l, got k = {k}, l = {l}")));
    }
    if !(l <= k / 7.0) {
        return Err(Error::param("cover", format!("need l <= k/7, got k = {k}, l = {l}")));
    }
    let s = field.effective_cutoff;
    if !s.is_finite() {
        return Err(Error::param("cover", "cutoff cover needs a finite cutoff"));
    }
    let pts = &field.domain.points;
    let first = build_separated_subset(model, field, k)?;
    let curv: Vec<usize> = first.into_iter().filter(|i| field.values[*i] < s).collect();
    let curv_radii: Vec<f64> = curv.iter().map(|i| l / k * field.values[*i]).collect();
    let inner = memberships(model, field, &curv, &curv_radii)?;
    let leftover: Vec<usize> = (0..field.len()).filter(|x| inner[*x].is_empty()).collect();

    let uniform = 6.0 / 7.0 * s;
    let second = greedy(model, field, &leftover, &|_| uniform, k)?;
    let mut leftover_curvature = 0.0f64;
    let mut leftover_min_ratio = f64::INFINITY;
    for &u in &leftover {
        leftover_curvature = leftover_curvature.max(model.ball_curvature_sup(&pts[u], uniform)? * s * s);
        leftover_min_ratio = leftover_min_ratio.min(field.values[u] / s);
    }

    let mut centers = curv.clone();
    centers.extend(&second);
    let mut partition = vec![Partition::Curvature; curv.len()];
    partition.extend(vec![Partition::Cutoff; second.len()]);
    let radii: Vec<f64> = centers.iter().map(|i| l / k * field.values[*i]).collect();
    let mut cover = SeparatedCover {
        centers,
        k,
        l,
        radii,
        partition,
        multiplicity: Vec::new(),
    };
    let mut report = CoverReport {
        coverage_guaranteed: true,
        multiplicity_guaranteed: true,
        warnings: parameter_warnings(k, l),
        ..Default::default()
    };
    verify_separation(model, field, &curv, &|i| field.values[i], k, &mut report)?;
    // The maximality check above concerns the first stage only.
    report.maximality_violations.clear();
    let members = memberships(model, field, &cover.centers, &cover.radii)?;
    fill_coverage(field, &mut cover, &members, model.dim(), &mut report);

    let opts = crate::radius::RadiusOptions::default();
    let cut = crate::radius::Cutoff(l / k * s);
    let mut containment_violations = Vec::new();
    for (c, &i) in cover.centers.iter().enumerate() {
        let r = crate::radius::curvature_radius(model, &pts[i], cut, &opts)?.value;
        if cover.radii[c] > r * (1.0 + 2.0 * opts.rel_tol) {
            containment_violations.push(i);
        }
    }
    Ok((
        cover,
        CutoffReport {
            cover: report,
            leftover: leftover.len(),
            leftover_curvature,
            leftover_curvature_bound: 49.0 / 36.0,
            leftover_min_ratio,
            cutoff_centers_below_s: second.iter().filter(|i| field.values[**i] < s).count(),
            containment_violations,
        },
    ))
}

impl SeparatedCover {
    /// One row per center: chart, coordinates, radius value, ball radius,
    /// partition label.
    pub fn write_csv<W: std::io::Write>(&self, field: &RadiusField, out: W) -> Result<()> {
        let dim = field.domain.points.first().map_or(0, |p| p.coords.len());
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["chart".to_string()];
        header.extend((0..dim).map(|i| format!("x{i}")));
        header.extend(["r", "radius", "partition"].map(String::from));
        w.write_record(&header)?;
        for (c, &i) in self.centers.iter().enumerate() {
            let p = &field.domain.points[i];
            let mut row = vec![p.chart.to_string()];
            row.extend(p.coords.iter().map(|x| format!("{x:.16e}")));
            row.push(format!("{:.16e}", field.values[i]));
            row.push(format!("{:.16e}", self.radii[c]));
            row.push(match self.partition[c] {
                Partition::Curvature => "R".to_string(),
                Partition::Cutoff => "s".to_string(),
            });
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}
