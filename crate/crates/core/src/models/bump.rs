use std::collections::BTreeMap;
use std::f64::consts::TAU;

use nalgebra::Matrix4;
use rayon::prelude::*;

use super::geodesic::{newton, rk4};
use super::{ChartPoint, CurvatureSource, Manifold, RegionSpec, SampledDomain};
use crate::error::{Error, Result};
use crate::fdgeom::{self, Point4};
use crate::quadrature::integrate;
use crate::tensor4::CurvatureTensor;

const PROFILE_INTERVALS: usize = 800;
const SHOOT_STEPS: usize = 160;

/// Conformally flat torus `T^4(period)` with metric `exp(2 phi) delta`, where
/// `phi = amplitude * exp(1 - 1 / (1 - t^2))`, `t = |x - c| / width`, is a
/// smooth compactly supported bump around the torus center `c`.
#[derive(Debug, Clone)]
pub struct BumpMetric {
    period: f64,
    amp: f64,
    width: f64,
    center: [f64; 4],
    /// `|Rm|` at `rho_j = j * width / PROFILE_INTERVALS`.
    profile: Vec<f64>,
    /// Radial distance `Phi(rho_j) = int_0^rho_j exp(phi)`.
    radial: Vec<f64>,
    ricci_bound: f64,
}

impl BumpMetric {
    pub fn new(period: f64, amplitude: f64, width: f64) -> Result<Self> {
        if !(period > 0.0 && amplitude >= 0.0 && width > 0.0) {
            return Err(Error::param("models", "bump parameters must be positive"));
        }
        if 2.0 * width >= period {
            return Err(Error::param("models", "bump width must be below half the period"));
        }
        let mut m = BumpMetric {
            period,
            amp: amplitude,
            width,
            center: [0.5 * period; 4],
            profile: Vec::new(),
            radial: Vec::new(),
            ricci_bound: 0.0,
        };
        m.build_profile();
        Ok(m)
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn amplitude(&self) -> f64 {
        self.amp
    }

    pub fn center(&self) -> [f64; 4] {
        self.center
    }

    fn fd_step(&self) -> f64 {
        1e-3 * self.width
    }

    fn build_profile(&mut self) {
        let n = PROFILE_INTERVALS;
        let dr = self.width / n as f64;
        let h = self.fd_step();
        let evals: Vec<(f64, f64)> = (0..=n)
            .into_par_iter()
            .map(|j| {
                let mut x = self.center;
                x[0] += j as f64 * dr;
                let metric = |y: &Point4| self.metric(y);
                let rm = fdgeom::riemann(&metric, &x, h).0;
                let ev = rm.ricci().symmetric_eigen().eigenvalues.min();
                (rm.norm_sq().sqrt(), ev)
            })
            .collect();
        self.profile = evals.iter().map(|e| e.0).collect();
        let min_ev = evals.iter().map(|e| e.1).fold(0.0, f64::min);
        self.ricci_bound = (-1.02 * min_ev).max(0.0).sqrt();
        let mut acc = 0.0;
        self.radial = vec![0.0; n + 1];
        for j in 1..=n {
            let a = (j - 1) as f64 * dr;
            acc += integrate(|r| self.phi_radial(r).exp(), a, a + dr, 1, 6);
            self.radial[j] = acc;
        }
    }

    fn phi_radial(&self, rho: f64) -> f64 {
        let t = rho / self.width;
        if t >= 1.0 {
            0.0
        } else {
            self.amp * (1.0 - 1.0 / (1.0 - t * t)).exp()
        }
    }

    /// Minimum-image displacement from the bump center.
    fn disp(&self, x: &[f64]) -> [f64; 4] {
        std::array::from_fn(|i| {
            let d = (x[i] - self.center[i]).rem_euclid(self.period);
            if d > 0.5 * self.period {
                d - self.period
            } else {
                d
            }
        })
    }

    fn rho(&self, x: &[f64]) -> f64 {
        self.disp(x).iter().map(|d| d * d).sum::<f64>().sqrt()
    }

    pub fn phi(&self, x: &[f64]) -> f64 {
        self.phi_radial(self.rho(x))
    }

    fn grad_phi(&self, x: &[f64]) -> [f64; 4] {
        let d = self.disp(x);
        let rho = d.iter().map(|a| a * a).sum::<f64>().sqrt();
        let t = rho / self.width;
        if t >= 1.0 || rho == 0.0 {
            return [0.0; 4];
        }
        let s = 1.0 - t * t;
        let dphi = self.phi_radial(rho) * (-2.0 * t / (s * s)) / self.width;
        std::array::from_fn(|i| dphi * d[i] / rho)
    }

    /// Radial distance from the bump center to Euclidean radius `rho`.
    fn radial_distance(&self, rho: f64) -> f64 {
        let n = PROFILE_INTERVALS;
        if rho >= self.width {
            return self.radial[n] + rho - self.width;
        }
        let u = rho / self.width * n as f64;
        let j = (u.floor() as usize).min(n - 1);
        let dr = self.width / n as f64;
        self.radial[j] + integrate(|r| self.phi_radial(r).exp(), j as f64 * dr, rho, 1, 6)
    }

    /// Inverse of [`Self::radial_distance`].
    fn radius_at_distance(&self, d: f64) -> f64 {
        let n = PROFILE_INTERVALS;
        if d <= 0.0 {
            return 0.0;
        }
        if d >= self.radial[n] {
            return self.width + d - self.radial[n];
        }
        let j = self.radial.partition_point(|v| *v <= d).clamp(1, n);
        let (a, b) = (self.radial[j - 1], self.radial[j]);
        let dr = self.width / n as f64;
        ((j - 1) as f64 + (d - a) / (b - a)) * dr
    }

    fn profile_at(&self, rho: f64) -> f64 {
        let n = PROFILE_INTERVALS;
        if rho >= self.width {
            return 0.0;
        }
        let u = rho / self.width * n as f64;
        let j = (u.floor() as usize).min(n - 1);
        let f = u - j as f64;
        self.profile[j] * (1.0 - f) + self.profile[j + 1] * f
    }

    /// Offsets `x - c'` from the copies `c'` of the bump center whose
    /// support meets the segment `x + s * delta`, `s in [0, 1]`, with the
    /// parameter interval spent inside each support.
    fn hit_copies(&self, x: &[f64], delta: &[f64]) -> Vec<([f64; 4], f64, f64)> {
        let d0 = self.disp(x);
        let dd: f64 = delta.iter().map(|a| a * a).sum();
        let (l, w) = (self.period, self.width);
        // Per-axis shifts whose slab |rel_i + s delta_i| < w meets the segment.
        let axis: Vec<Vec<f64>> = (0..4)
            .map(|i| {
                [-1.0, 0.0, 1.0]
                    .into_iter()
                    .map(|k| d0[i] + k * l)
                    .filter(|r| r.min(r + delta[i]) < w && r.max(r + delta[i]) > -w)
                    .collect()
            })
            .collect();
        let mut out = Vec::new();
        for &r0 in &axis[0] {
            for &r1 in &axis[1] {
                for &r2 in &axis[2] {
                    for &r3 in &axis[3] {
                        let rel = [r0, r1, r2, r3];
                        let rd: f64 = rel.iter().zip(delta).map(|(a, b)| a * b).sum();
                        let rr: f64 = rel.iter().map(|a| a * a).sum();
                        if dd == 0.0 {
                            if rr < w * w {
                                out.push((rel, 0.0, 0.0));
                            }
                            continue;
                        }
                        // |rel + s delta|^2 < w^2 for s between the roots.
                        let disc = rd * rd - dd * (rr - w * w);
                        if disc <= 0.0 {
                            continue;
                        }
                        let sq = disc.sqrt();
                        let s0 = ((-rd - sq) / dd).max(0.0);
                        let s1 = ((-rd + sq) / dd).min(1.0);
                        if s0 < s1 {
                            out.push((rel, s0, s1));
                        }
                    }
                }
            }
        }
        out
    }

    fn segment_hits_support(&self, x: &[f64], delta: &[f64]) -> bool {
        !self.hit_copies(x, delta).is_empty()
    }

    fn segment_length(&self, x: &[f64], delta: &[f64]) -> f64 {
        let len = delta.iter().map(|a| a * a).sum::<f64>().sqrt();
        let extra: f64 = self
            .hit_copies(x, delta)
            .iter()
            .map(|(rel, s0, s1)| {
                let f = |s: f64| {
                    let rho = (0..4).map(|i| (rel[i] + s * delta[i]).powi(2)).sum::<f64>().sqrt();
                    self.phi_radial(rho).exp_m1()
                };
                integrate(f, *s0, *s1, 8, 8)
            })
            .sum();
        len * (1.0 + extra)
    }

    fn rhs(&self, s: &[f64], d: &mut [f64]) {
        let g = self.grad_phi(&s[..4]);
        let v = &s[4..];
        let gv: f64 = (0..4).map(|i| g[i] * v[i]).sum();
        let vv: f64 = v.iter().map(|a| a * a).sum();
        for i in 0..4 {
            d[i] = v[i];
            d[4 + i] = -2.0 * gv * v[i] + vv * g[i];
        }
    }

    /// Shooting inside the 2-plane through one bump copy. The metric is
    /// rotationally symmetric about that copy, so every geodesic stays in
    /// the plane spanned by its center, `x` and `x + delta`.
    fn shoot_planar(&self, rel: &[f64; 4], delta: &[f64]) -> Option<f64> {
        let len = delta.iter().map(|a| a * a).sum::<f64>().sqrt();
        let e1: Vec<f64> = delta.iter().map(|a| a / len).collect();
        let a1: f64 = rel.iter().zip(&e1).map(|(a, b)| a * b).sum();
        let a2 = (rel.iter().map(|a| a * a).sum::<f64>() - a1 * a1).max(0.0).sqrt();
        let w = self.width;
        let rhs = |s: &[f64], d: &mut [f64]| {
            let (y1, y2) = (a1 + s[0], a2 + s[1]);
            let rho = y1.hypot(y2);
            let t = rho / w;
            let (g1, g2) = if t >= 1.0 || rho == 0.0 {
                (0.0, 0.0)
            } else {
                let q = 1.0 - t * t;
                let dphi = self.phi_radial(rho) * (-2.0 * t / (q * q)) / w;
                (dphi * y1 / rho, dphi * y2 / rho)
            };
            let gv = g1 * s[2] + g2 * s[3];
            let vv = s[2] * s[2] + s[3] * s[3];
            d[0] = s[2];
            d[1] = s[3];
            d[2] = -2.0 * gv * s[2] + vv * g1;
            d[3] = -2.0 * gv * s[3] + vv * g2;
        };
        let steps = ((64.0 * len / w).ceil() as usize + 16).min(SHOOT_STEPS);
        let residual = |v: &[f64]| {
            let s = rk4(&rhs, &[0.0, 0.0, v[0], v[1]], steps);
            vec![s[0] - len, s[1]]
        };
        // The plane is oriented so that the center lies at negative v.
        let scale = self.phi_radial(a1.hypot(a2)).exp();
        [0.0, 0.5, -0.5, 1.0, -1.0]
            .iter()
            .filter_map(|c| {
                let v = newton(&residual, vec![len, c * len], 1e-10, 40)?;
                Some(scale * v[0].hypot(v[1]))
            })
            .min_by(f64::total_cmp)
    }

    /// Geodesic length from `x` to `x + delta` via multi-start shooting.
    fn shoot(&self, x: &[f64], delta: &[f64]) -> Option<f64> {
        let run = |v: &[f64]| {
            let mut s0 = x.to_vec();
            s0.extend_from_slice(v);
            rk4(&|s: &[f64], d: &mut [f64]| self.rhs(s, d), &s0, SHOOT_STEPS)
        };
        let residual = |v: &[f64]| {
            let s = run(v);
            (0..4).map(|i| s[i] - x[i] - delta[i]).collect::<Vec<_>>()
        };
        let len = delta.iter().map(|a| a * a).sum::<f64>().sqrt();
        // Perpendicular directions pointing away from the bump.
        let d0 = self.disp(x);
        let mut n1: Vec<f64> = d0.to_vec();
        let proj = n1.iter().zip(delta).map(|(a, b)| a * b).sum::<f64>() / (len * len);
        for i in 0..4 {
            n1[i] -= proj * delta[i];
        }
        let nn = n1.iter().map(|a| a * a).sum::<f64>().sqrt();
        if nn < 1e-9 {
            let k = (0..4).min_by(|a, b| delta[*a].abs().total_cmp(&delta[*b].abs())).unwrap();
            n1 = (0..4).map(|i| if i == k { 1.0 } else { 0.0 }).collect();
            let p = delta[k] / (len * len);
            for i in 0..4 {
                n1[i] -= p * delta[i];
            }
        }
        let nn = n1.iter().map(|a| a * a).sum::<f64>().sqrt();
        let n1: Vec<f64> = n1.iter().map(|a| a / nn).collect();
        let scales = [0.0, 0.5, -0.5, 1.0, -1.0];
        let best = scales
            .iter()
            .filter_map(|c| {
                let guess: Vec<f64> = (0..4).map(|i| delta[i] + c * len * n1[i]).collect();
                let v = newton(&residual, guess, 1e-10, 40)?;
                let speed = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                Some(self.phi(x).exp() * speed)
            })
            .fold(f64::INFINITY, f64::min);
        best.is_finite().then_some(best)
    }

    fn min_image(&self, p: &[f64], q: &[f64]) -> [f64; 4] {
        let l = self.period;
        std::array::from_fn(|i| {
            let d = (q[i] - p[i]).rem_euclid(l);
            if d > 0.5 * l {
                d - l
            } else {
                d
            }
        })
    }

    fn lifts(&self, p: &[f64], q: &[f64]) -> Vec<[f64; 4]> {
        let l = self.period;
        let base = self.min_image(p, q);
        let mut out: Vec<[f64; 4]> = (0..81usize)
            .map(|k| {
                std::array::from_fn(|i| base[i] + (((k / 3usize.pow(i as u32)) % 3) as f64 - 1.0) * l)
            })
            .collect();
        let n2 = |v: &[f64; 4]| v.iter().map(|a| a * a).sum::<f64>();
        out.sort_by(|a, b| n2(a).total_cmp(&n2(b)));
        out
    }

    fn box_samples(&self, lo: &[f64], counts: usize, h: f64) -> Vec<Vec<f64>> {
        let total = counts.pow(4);
        (0..total)
            .map(|mut idx| {
                (0..4)
                    .map(|i| {
                        let k = idx % counts;
                        idx /= counts;
                        lo[i] + (k as f64 + 0.5) * h
                    })
                    .collect()
            })
            .collect()
    }

    fn wrap(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|a| a.rem_euclid(self.period)).collect()
    }
}

impl Manifold for BumpMetric {
    fn name(&self) -> &str {
        "bump"
    }

    fn dim(&self) -> usize {
        4
    }

    fn params(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([
            ("amplitude".to_string(), self.amp),
            ("period".to_string(), self.period),
            ("width".to_string(), self.width),
        ])
    }

    fn ricci_bound(&self) -> f64 {
        self.ricci_bound
    }

    fn diameter(&self) -> Option<f64> {
        Some(self.period + 4.0 * (self.radial[PROFILE_INTERVALS] - self.width))
    }

    fn check_point(&self, p: &ChartPoint) -> Result<()> {
        if p.coords.len() != 4 || p.coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::param("models", "bump points have 4 finite coordinates"));
        }
        Ok(())
    }

    fn metric(&self, x: &Point4) -> Matrix4<f64> {
        Matrix4::identity() * (2.0 * self.phi(x)).exp()
    }

    fn curvature_source(&self) -> CurvatureSource {
        CurvatureSource::FiniteDifference
    }

    fn curvature_at(&self, p: &ChartPoint) -> Result<CurvatureTensor> {
        self.check_point(p)?;
        let metric = |y: &Point4| self.metric(y);
        Ok(fdgeom::riemann(&metric, &p.p4(), self.fd_step()).0)
    }

    fn curvature_norm(&self, p: &ChartPoint) -> Result<f64> {
        Ok(self.profile_at(self.rho(&p.coords)))
    }

    fn ball_curvature_sup(&self, p: &ChartPoint, r: f64) -> Result<f64> {
        let dp = self.radial_distance(self.rho(&p.coords));
        let lo = self.radius_at_distance(dp - r);
        let hi = self.radius_at_distance(dp + r);
        if lo >= self.width {
            return Ok(0.0);
        }
        let n = PROFILE_INTERVALS;
        let dr = self.width / n as f64;
        let mut best = self.profile_at(lo).max(self.profile_at(hi));
        let first = (lo / dr).ceil() as usize;
        let last = ((hi / dr).floor() as usize).min(n);
        for j in first..=last {
            best = best.max(self.profile[j]);
        }
        Ok(best)
    }

    fn distance_bounds(&self, p: &ChartPoint, q: &ChartPoint) -> (f64, f64) {
        let delta = &self.min_image(&p.coords, &q.coords);
        let eu = delta.iter().map(|a| a * a).sum::<f64>().sqrt();
        if !self.segment_hits_support(&p.coords, delta) {
            return (eu, eu);
        }
        let upper = self.segment_length(&p.coords, delta);
        let (rp, rq) = (self.rho(&p.coords), self.rho(&q.coords));
        // Distances to the bump center are radial.
        let radial = (self.radial_distance(rp) - self.radial_distance(rq)).abs();
        // Competing paths stay where the conformal factor is at least this.
        let floor = self.phi_radial(0.5 * (rp + rq + upper)).exp();
        ((eu * floor).max(radial).min(upper), upper)
    }

    fn embedding(&self, p: &ChartPoint) -> Vec<f64> {
        p.coords
            .iter()
            .zip(std::iter::repeat(&self.period))
            .flat_map(|(x, l)| {
                let (rad, t) = (l / TAU, TAU * x / l);
                [rad * t.cos(), rad * t.sin()]
            })
            .collect()
    }

    fn distance(&self, p: &ChartPoint, q: &ChartPoint) -> Result<f64> {
        let (lower, upper) = self.distance_bounds(p, q);
        if lower == upper {
            return Ok(upper);
        }
        let mut best = upper;
        for delta in self.lifts(&p.coords, &q.coords) {
            let eu = delta.iter().map(|a| a * a).sum::<f64>().sqrt();
            if eu >= best {
                break;
            }
            let hits = self.hit_copies(&p.coords, &delta);
            let d = if !hits.is_empty() {
                let shot = if hits.len() == 1 {
                    self.shoot_planar(&hits[0].0, &delta)
                } else {
                    self.shoot(&p.coords, &delta)
                };
                match shot {
                    Some(d) => d,
                    None => return Err(Error::NonConvergent { lower, upper }),
                }
            } else {
                eu
            };
            best = best.min(d);
        }
        Ok(best)
    }

    fn ball_volume(&self, p: &ChartPoint, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::param("models", "ball radius must be positive"));
        }
        let region = RegionSpec::Ball {
            center: p.coords.clone(),
            radius: r,
        };
        Ok(self.sample(&region, r / 10.0, 0, 0.0)?.total_weight())
    }

    fn sample(
        &self,
        region: &RegionSpec,
        resolution: f64,
        seed: u64,
        _jitter: f64,
    ) -> Result<SampledDomain> {
        let vol = |x: &[f64]| (4.0 * self.phi(x)).exp();
        let pts: Vec<(Vec<f64>, f64)> = match region {
            RegionSpec::Point {
                coords,
                cell_volume,
            } => vec![(self.wrap(coords), *cell_volume)],
            RegionSpec::Full => {
                let n = ((self.period / resolution).ceil() as usize).max(1);
                let h = self.period / n as f64;
                self.box_samples(&[0.0; 4], n, h)
                    .into_iter()
                    .map(|x| {
                        let w = vol(&x) * h.powi(4);
                        (x, w)
                    })
                    .collect()
            }
            RegionSpec::Ball { center, radius } => {
                let cp = ChartPoint::new(self.wrap(center));
                self.check_point(&cp)?;
                let r = *radius;
                if !(r > 0.0) {
                    return Err(Error::param("models", "ball radius must be positive"));
                }
                let res = resolution.min(r / 2.0);
                let (lo, n, h) = if 2.0 * r < self.period {
                    let n = ((2.0 * r / res).ceil() as usize).max(1);
                    (cp.coords.iter().map(|c| c - r).collect::<Vec<_>>(), n, 2.0 * r / n as f64)
                } else {
                    let n = ((self.period / res).ceil() as usize).max(1);
                    (vec![0.0; 4], n, self.period / n as f64)
                };
                let cand = self.box_samples(&lo, n, h);
                let kept: Vec<(Vec<f64>, f64)> = cand
                    .into_par_iter()
                    .filter_map(|x| {
                        let q = ChartPoint::new(self.wrap(&x));
                        let (l, u) = self.distance_bounds(&cp, &q);
                        let inside = if l >= r {
                            false
                        } else if u < r {
                            true
                        } else {
                            self.distance(&cp, &q).map(|d| d < r).unwrap_or(false)
                        };
                        inside.then(|| {
                            let w = vol(&q.coords) * h.powi(4);
                            (q.coords, w)
                        })
                    })
                    .collect();
                if kept.is_empty() || resolution >= r {
                    let v: f64 = kept.iter().map(|(_, w)| w).sum();
                    vec![(cp.coords.clone(), v.max(f64::MIN_POSITIVE))]
                } else {
                    kept
                }
            }
        };
        let (points, weights) = pts
            .into_iter()
            .map(|(c, w)| (ChartPoint::new(c), w))
            .unzip();
        Ok(SampledDomain {
            points,
            weights,
            model: self.name().to_string(),
            resolution,
            seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_matches_pointwise_fd() {
        let b = BumpMetric::new(2.0, 0.5, 0.5).unwrap();
        let p = ChartPoint::new(vec![1.1, 1.05, 0.9, 1.0]);
        let direct = b.curvature_at(&p).unwrap().norm_sq().sqrt();
        let prof = b.curvature_norm(&p).unwrap();
        assert!((direct - prof).abs() < 1e-3 * direct.max(1.0), "{direct} {prof}");
    }

    #[test]
    fn distance_through_bump_exceeds_euclidean() {
        let b = BumpMetric::new(2.0, 0.5, 0.5).unwrap();
        let p = ChartPoint::new(vec![0.6, 1.0, 1.0, 1.0]);
        let q = ChartPoint::new(vec![1.4, 1.0, 1.0, 1.0]);
        let (lo, hi) = b.distance_bounds(&p, &q);
        let d = b.distance(&p, &q).unwrap();
        assert!(lo < d && d <= hi + 1e-12, "{lo} {d} {hi}");
    }
}
