use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Matrix4, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::geodesic::{newton, rk4};
use super::sampling::{angles_to_unit, complement_basis, polar_cells, sin_power_integral,
                      sphere_cells, unit_to_angles};
use super::{ChartPoint, KillingField, KillingValue, Manifold, RegionSpec, SampledDomain};
use crate::error::{Error, Result};
use crate::fdgeom::Point4;
use crate::quadrature::integrate;
use crate::tensor4::CurvatureTensor;

const SHOOT_TOL: f64 = 1e-10;

/// Warped product `S^1 x_f S^3` with metric
/// `scale^2 (f(chi)^2 dtheta^2 + g_{S^3})` and `f = 1 + a cos(chi)`,
/// in coordinates `(theta, chi, psi, phi)`.
#[derive(Debug, Clone)]
pub struct WarpedCircle {
    a: f64,
    scale: f64,
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn wrap_angle(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

impl WarpedCircle {
    pub fn new(a: f64, scale: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&a) {
            return Err(Error::param("models", "warp amplitude must lie in [0, 1)"));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::param("models", "scale must be positive"));
        }
        Ok(WarpedCircle { a, scale })
    }

    pub fn amplitude(&self) -> f64 {
        self.a
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn warp(&self, chi: f64) -> f64 {
        1.0 + self.a * chi.cos()
    }

    /// Mixed sectional curvature `K(chi)` in units of `scale^-2`.
    fn mixed(&self, chi: f64) -> f64 {
        self.a * chi.cos() / self.warp(chi)
    }

    fn norm_at_chi(&self, chi: f64) -> f64 {
        let k = self.mixed(chi);
        (12.0 + 12.0 * k * k).sqrt() / self.scale.powi(2)
    }

    pub(crate) fn s3(p: &ChartPoint) -> Vec<f64> {
        angles_to_unit(&p.coords[1..])
    }

    fn s3_dist(y: &[f64], z: &[f64]) -> f64 {
        let chord = y.iter().zip(z).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        2.0 * (0.5 * chord).min(1.0).asin()
    }

    /// Initial velocity of the unit-sphere great circle from `y` to `z`,
    /// with length equal to the arc.
    fn log_map(y: &[f64], z: &[f64]) -> Vec<f64> {
        let d = Self::s3_dist(y, z);
        let c = dot(y, z);
        let mut w: Vec<f64> = z.iter().zip(y).map(|(zi, yi)| zi - c * yi).collect();
        let n = dot(&w, &w).sqrt();
        if n < 1e-14 {
            return vec![0.0; 4];
        }
        for wi in &mut w {
            *wi *= d / n;
        }
        w
    }

    /// Length of the path moving linearly in `theta` along the great circle.
    fn product_path_length(&self, y: &[f64], z: &[f64], dtheta: f64) -> f64 {
        let d = Self::s3_dist(y, z);
        let v = Self::log_map(y, z);
        let f = |t: f64| {
            let y0 = if d > 0.0 {
                (t * d).cos() * y[0] + (t * d).sin() * v[0] / d
            } else {
                y[0]
            };
            let w = 1.0 + self.a * y0;
            (w * w * dtheta * dtheta + d * d).sqrt()
        };
        self.scale * integrate(f, 0.0, 1.0, 4, 12)
    }

    fn rhs(a: f64, s: &[f64], d: &mut [f64]) {
        let y = &s[1..5];
        let th1 = s[5];
        let yp = &s[6..10];
        let f = 1.0 + a * y[0];
        let df = a * yp[0];
        let v2 = dot(yp, yp);
        d[0] = th1;
        d[1..5].copy_from_slice(yp);
        d[5] = -2.0 * df * th1 / f;
        let c = f * th1 * th1 * a;
        for i in 0..4 {
            let grad = if i == 0 { 1.0 } else { 0.0 };
            d[6 + i] = c * (grad - y[0] * y[i]) - v2 * y[i];
        }
    }

    /// Newton solve for the initial velocity `(theta', c_1, c_2, c_3)` of a
    /// geodesic from `y` to `z` covering `dtheta`, for warp amplitude `a`.
    fn solve(
        &self,
        a: f64,
        y: &[f64],
        z: &[f64],
        dtheta: f64,
        guess: Vec<f64>,
    ) -> Option<Vec<f64>> {
        let span = (((1.0 + a) * dtheta).powi(2) + Self::s3_dist(y, z).powi(2)).sqrt();
        let steps = ((128.0 * span).ceil() as usize + 16).min(512);
        let by = complement_basis(y);
        let bz = complement_basis(z);
        let run = |u: &[f64]| {
            let mut s0 = vec![0.0; 10];
            s0[1..5].copy_from_slice(y);
            s0[5] = u[0];
            for (c, b) in u[1..].iter().zip(&by) {
                for i in 0..4 {
                    s0[6 + i] += c * b[i];
                }
            }
            rk4(&|s: &[f64], d: &mut [f64]| Self::rhs(a, s, d), &s0, steps)
        };
        let residual = |u: &[f64]| {
            let s = run(u);
            let diff: Vec<f64> = s[1..5].iter().zip(z).map(|(p, q)| p - q).collect();
            vec![s[0] - dtheta, dot(&diff, &bz[0]), dot(&diff, &bz[1]), dot(&diff, &bz[2])]
        };
        let u = newton(&residual, guess, SHOOT_TOL, 40)?;
        let s = run(&u);
        let n = dot(&s[1..5], &s[1..5]).sqrt();
        let miss: f64 = s[1..5].iter().zip(z).map(|(p, q)| (p / n - q).powi(2)).sum::<f64>();
        (miss.sqrt() <= 1e-8).then_some(u)
    }

    /// Shoots a geodesic from `y` to the lift of `z` at angle `dtheta`,
    /// continuing from the unwarped product geodesic when a direct solve fails.
    pub(crate) fn shoot(&self, y: &[f64], z: &[f64], dtheta: f64) -> Option<f64> {
        let by = complement_basis(y);
        let v0 = Self::log_map(y, z);
        let start = vec![dtheta, dot(&v0, &by[0]), dot(&v0, &by[1]), dot(&v0, &by[2])];
        let f = 1.0 + self.a * y[0];
        let length = |u: &[f64]| {
            let v2: f64 = u[1..].iter().map(|c| c * c).sum();
            self.scale * (f * f * u[0] * u[0] + v2).sqrt()
        };
        let continued = self.solve(self.a, y, z, dtheta, start.clone()).or_else(|| {
            [4usize, 16].iter().find_map(|&steps| {
                let mut u = start.clone();
                for k in 1..=steps {
                    u = self.solve(self.a * k as f64 / steps as f64, y, z, dtheta, u)?;
                }
                Some(u)
            })
        });
        // Geodesics with large theta travel bend towards the short fibres
        // around chi = pi; seed those branches explicitly.
        let south: Vec<f64> = by.iter().map(|b| -b[0]).collect();
        let sn = dot(&south, &south).sqrt();
        let detours = (sn > 1e-9 && dtheta.abs() > 1.0).then(|| {
            [0.5, 1.0, 2.0]
                .iter()
                .filter_map(|c| {
                    let mut g = start.clone();
                    for i in 0..3 {
                        g[i + 1] += c * dtheta.abs() * south[i] / sn;
                    }
                    self.solve(self.a, y, z, dtheta, g)
                })
                .collect::<Vec<_>>()
        });
        continued
            .into_iter()
            .chain(detours.into_iter().flatten())
            .map(|u| length(&u))
            .min_by(f64::total_cmp)
    }

    fn cell_weight(&self, chi_lo: f64, chi_hi: f64) -> f64 {
        // int (1 + a cos chi) sin^2 chi dchi over the cell
        sin_power_integral(2, chi_lo, chi_hi)
            + self.a * (chi_hi.sin().powi(3) - chi_lo.sin().powi(3)) / 3.0
    }

    fn domain(&self, pts: Vec<(Vec<f64>, f64)>, resolution: f64, seed: u64) -> SampledDomain {
        let (points, weights) = pts
            .into_iter()
            .map(|(c, w)| (ChartPoint::new(c), w))
            .unzip();
        SampledDomain {
            points,
            weights,
            model: self.name().to_string(),
            resolution,
            seed,
        }
    }
}

impl Manifold for WarpedCircle {
    fn name(&self) -> &str {
        "warped"
    }

    fn dim(&self) -> usize {
        4
    }

    fn params(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([("a".to_string(), self.a), ("scale".to_string(), self.scale)])
    }

    fn ricci_bound(&self) -> f64 {
        let kmin = -self.a / (1.0 - self.a);
        let low = (3.0 * kmin).min(2.0 + kmin);
        (-low).max(0.0).sqrt() / self.scale
    }

    fn diameter(&self) -> Option<f64> {
        Some(self.scale * PI * (1.0 + (1.0 + self.a).powi(2)).sqrt())
    }

    fn check_point(&self, p: &ChartPoint) -> Result<()> {
        if p.coords.len() != 4 || p.coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::param("models", "warped points have 4 finite coordinates"));
        }
        if p.coords[1..3].iter().any(|t| !(0.0..=PI).contains(t)) {
            return Err(Error::param("models", "polar angles must lie in [0, pi]"));
        }
        Ok(())
    }

    fn metric(&self, x: &Point4) -> Matrix4<f64> {
        let l2 = self.scale * self.scale;
        let f = self.warp(x[1]);
        let s1 = x[1].sin().powi(2);
        let s2 = x[2].sin().powi(2);
        Matrix4::from_diagonal(&Vector4::new(l2 * f * f, l2, l2 * s1, l2 * s1 * s2))
    }

    fn chart_margin(&self, x: &Point4) -> f64 {
        [x[1], PI - x[1], x[2], PI - x[2]]
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }

    fn curvature_at(&self, p: &ChartPoint) -> Result<CurvatureTensor> {
        self.check_point(p)?;
        let k = self.mixed(p.coords[1]);
        let l2 = self.scale * self.scale;
        let mut sec = [[1.0 / l2; 4]; 4];
        for i in 1..4 {
            sec[0][i] = k / l2;
            sec[i][0] = k / l2;
        }
        Ok(CurvatureTensor::from_plane_curvatures(sec))
    }

    fn curvature_norm(&self, p: &ChartPoint) -> Result<f64> {
        Ok(self.norm_at_chi(p.coords[1]))
    }

    fn ball_curvature_sup(&self, p: &ChartPoint, r: f64) -> Result<f64> {
        let chi = p.coords[1];
        let lo = (chi - r / self.scale).max(0.0);
        let hi = (chi + r / self.scale).min(PI);
        let n = 64;
        Ok((0..=n)
            .map(|i| self.norm_at_chi(lo + (hi - lo) * i as f64 / n as f64))
            .fold(0.0, f64::max))
    }

    fn distance_bounds(&self, p: &ChartPoint, q: &ChartPoint) -> (f64, f64) {
        let y = Self::s3(p);
        let z = Self::s3(q);
        let dth = wrap_angle(q.coords[0] - p.coords[0]).abs();
        let upper = self.product_path_length(&y, &z, dth);
        // Any curve of length at most `upper` stays below this polar angle.
        let chi_far = (0.5 * (p.coords[1] + q.coords[1] + upper / self.scale)).min(PI);
        let fmin = self.warp(chi_far);
        let lower = self.scale * ((fmin * dth).powi(2) + Self::s3_dist(&y, &z).powi(2)).sqrt();
        (lower.min(upper), upper)
    }

    fn embedding(&self, p: &ChartPoint) -> Vec<f64> {
        // Circle of the smallest warp times the unit sphere, both scaled.
        let rad = self.scale * (1.0 - self.a);
        let mut e = vec![rad * p.coords[0].cos(), rad * p.coords[0].sin()];
        e.extend(Self::s3(p).into_iter().map(|u| self.scale * u));
        e
    }

    fn distance(&self, p: &ChartPoint, q: &ChartPoint) -> Result<f64> {
        let (lower, upper) = self.distance_bounds(p, q);
        if upper - lower <= 1e-12 * upper.max(1.0) || self.a == 0.0 {
            return Ok(upper);
        }
        let y = Self::s3(p);
        let z = Self::s3(q);
        let base = wrap_angle(q.coords[0] - p.coords[0]);
        let fmin = 1.0 - self.a;
        let ds = Self::s3_dist(&y, &z);
        let mut lifts: Vec<f64> = [0.0, -1.0, 1.0].iter().map(|k| base + 2.0 * PI * k).collect();
        lifts.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
        let mut best = f64::INFINITY;
        for dth in lifts {
            let floor = self.scale * ((fmin * dth).powi(2) + ds * ds).sqrt();
            if floor >= best.min(upper) {
                continue;
            }
            if let Some(d) = self.shoot(&y, &z, dth) {
                best = best.min(d);
            }
        }
        if best.is_finite() && best <= upper * (1.0 + 1e-9) && best >= lower * (1.0 - 1e-9) {
            Ok(best)
        } else {
            Err(Error::NonConvergent { lower, upper })
        }
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
        jitter: f64,
    ) -> Result<SampledDomain> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = self.scale;
        let l4 = l.powi(4);
        let pts = match region {
            RegionSpec::Point {
                coords,
                cell_volume,
            } => {
                self.check_point(&ChartPoint::new(coords.clone()))?;
                vec![(coords.clone(), *cell_volume)]
            }
            RegionSpec::Full => {
                let nth = ((2.0 * PI * l * (1.0 + self.a) / resolution).ceil() as usize).max(1);
                let dth = 2.0 * PI / nth as f64;
                let mut out = Vec::new();
                for cell in sphere_cells(3, l, resolution) {
                    let ratio = self.cell_weight(cell.lo[0], cell.hi[0])
                        / sin_power_integral(2, cell.lo[0], cell.hi[0]);
                    for i in 0..nth {
                        let mut c = vec![(i as f64 + 0.5 + jitter * (rng.gen::<f64>() - 0.5)) * dth];
                        c.extend(cell.point(jitter, &mut rng));
                        out.push((c, l4 * cell.volume * ratio * dth));
                    }
                }
                out
            }
            RegionSpec::Ball { center, radius } => {
                let cp = ChartPoint::new(center.clone());
                self.check_point(&cp)?;
                if !(*radius > 0.0) {
                    return Err(Error::param("models", "ball radius must be positive"));
                }
                let r = *radius;
                let diam = self.diameter().unwrap();
                let res = resolution.min(r / 2.0);
                let y = Self::s3(&cp);
                let basis = complement_basis(&y);
                let t_max = (r / l).min(PI);
                let chi_far = (center[1] + t_max).min(PI);
                let fmin = self.warp(chi_far);
                let half = (r / (l * fmin)).min(PI);
                let nth = ((2.0 * half * l * (1.0 + self.a) / res).ceil() as usize).max(1);
                let dth = 2.0 * half / nth as f64;
                let cells = polar_cells(
                    3,
                    t_max * l,
                    res,
                    |t| l * (t / l).sin(),
                    |a, b| l.powi(3) * sin_power_integral(2, a / l, b / l),
                    jitter,
                    &mut rng,
                );
                let mut cand = Vec::with_capacity(cells.len() * nth);
                for (t, dir, w3) in cells {
                    let (ct, st) = ((t / l).cos(), (t / l).sin());
                    let z: Vec<f64> = (0..4)
                        .map(|i| ct * y[i] + st * (0..3).map(|k| dir[k] * basis[k][i]).sum::<f64>())
                        .collect();
                    let f = 1.0 + self.a * z[0];
                    let ang = unit_to_angles(&z);
                    for i in 0..nth {
                        let th = center[0] - half + (i as f64 + 0.5) * dth;
                        let mut c = vec![th.rem_euclid(2.0 * PI)];
                        c.extend_from_slice(&ang);
                        cand.push((c, w3 * l * f * dth));
                    }
                }
                use rayon::prelude::*;
                let keep: Vec<bool> = cand
                    .par_iter()
                    .map(|(c, _)| {
                        let q = ChartPoint::new(c.clone());
                        let (lo, hi) = self.distance_bounds(&cp, &q);
                        if lo >= r {
                            false
                        } else if hi < r || r >= diam {
                            true
                        } else {
                            self.distance(&cp, &q).map(|d| d < r).unwrap_or(hi < r)
                        }
                    })
                    .collect();
                let kept: Vec<_> = cand
                    .into_iter()
                    .zip(keep)
                    .filter_map(|(c, k)| k.then_some(c))
                    .collect();
                if kept.is_empty() || resolution >= r {
                    let v: f64 = kept.iter().map(|(_, w)| w).sum();
                    vec![(center.clone(), v.max(f64::MIN_POSITIVE))]
                } else {
                    kept
                }
            }
        };
        Ok(self.domain(pts, resolution, seed))
    }

    fn killing_fields(&self) -> Vec<KillingField> {
        let w = self.clone();
        vec![KillingField::new(
            "d_theta",
            Arc::new(move |x: &Point4| {
                let f = w.warp(x[1]);
                let df = -w.a * x[1].sin();
                let mut nabla = Matrix4::zeros();
                nabla[(0, 1)] = df;
                nabla[(1, 0)] = -df;
                KillingValue {
                    coord: Vector4::new(1.0, 0.0, 0.0, 0.0),
                    frame: Vector4::new(w.scale * f, 0.0, 0.0, 0.0),
                    nabla,
                    norm: w.scale * f,
                }
            }),
        )]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shooting_matches_product_when_unwarped() {
        let w = WarpedCircle::new(0.0, 1.0).unwrap();
        let p = ChartPoint::new(vec![0.1, 1.0, 1.0, 1.0]);
        let q = ChartPoint::new(vec![0.9, 1.4, 0.8, 1.5]);
        let d = w.distance(&p, &q).unwrap();
        let y = WarpedCircle::s3(&p);
        let z = WarpedCircle::s3(&q);
        let exact = (0.64 + WarpedCircle::s3_dist(&y, &z).powi(2)).sqrt();
        assert!((d - exact).abs() < 1e-12);
    }

    #[test]
    fn shooting_lies_between_bounds() {
        let w = WarpedCircle::new(0.3, 1.0).unwrap();
        let p = ChartPoint::new(vec![0.1, 1.0, 1.0, 1.0]);
        let q = ChartPoint::new(vec![1.2, 1.9, 0.8, 1.5]);
        let (lo, hi) = w.distance_bounds(&p, &q);
        let d = w.distance(&p, &q).unwrap();
        assert!(lo <= d && d <= hi, "{lo} {d} {hi}");
        assert!(d < hi - 1e-4);
    }
}
