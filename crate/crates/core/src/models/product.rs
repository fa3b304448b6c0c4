use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{Matrix4, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::sampling::{angles_to_unit, complement_basis, polar_cells, sin_power_integral,
                      sphere_cells, unit_to_angles};
use super::{ChartPoint, Manifold, RegionSpec, SampledDomain};
use crate::error::{Error, Result};
use crate::fdgeom::Point4;
use crate::quadrature::{adaptive_simpson, integrate};
use crate::tensor4::CurvatureTensor;

/// Riemannian product `S^2(a) x S^2(b)` in coordinates `(theta_1, phi_1, theta_2, phi_2)`.
#[derive(Debug, Clone)]
pub struct SphereProduct {
    a: f64,
    b: f64,
}

/// Area of a geodesic disc of radius `s` on `S^2(rad)`.
fn cap_area(rad: f64, s: f64) -> f64 {
    let s = s.clamp(0.0, PI * rad);
    2.0 * PI * rad * rad * (1.0 - (s / rad).cos())
}

fn great_circle(rad: f64, p: &[f64], q: &[f64]) -> f64 {
    let u = angles_to_unit(p);
    let v = angles_to_unit(q);
    let chord = u.iter().zip(&v).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    2.0 * rad * (0.5 * chord).min(1.0).asin()
}

/// Polar cells of a disc of radius `r` around `center` on `S^2(rad)`:
/// `(distance, angles, area)`.
fn disc_cells(
    rad: f64,
    center: &[f64],
    r: f64,
    res: f64,
    jitter: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<(f64, Vec<f64>, f64)> {
    let r = r.min(PI * rad);
    let u = angles_to_unit(center);
    let basis = complement_basis(&u);
    polar_cells(
        2,
        r,
        res,
        |t| rad * (t / rad).sin(),
        |x, y| rad * rad * sin_power_integral(1, x / rad, y / rad),
        jitter,
        rng,
    )
    .into_iter()
    .map(|(t, dir, w)| {
        let (ct, st) = ((t / rad).cos(), (t / rad).sin());
        let y: Vec<f64> = (0..3)
            .map(|i| ct * u[i] + st * (dir[0] * basis[0][i] + dir[1] * basis[1][i]))
            .collect();
        (t, unit_to_angles(&y), w)
    })
    .collect()
}

/// Radial ring layout used by [`disc_cells`].
struct Rings {
    rad: f64,
    dt: f64,
}

impl Rings {
    fn new(rad: f64, r: f64, res: f64) -> Self {
        let r = r.min(PI * rad);
        let nt = ((r / res).ceil() as usize).max(1);
        Rings {
            rad,
            dt: r / nt as f64,
        }
    }

    fn interval(&self, t: f64) -> (f64, f64) {
        let i = (t / self.dt).floor();
        (i * self.dt, (i + 1.0) * self.dt)
    }

    fn shell(&self, x: f64, y: f64) -> f64 {
        self.rad * self.rad * sin_power_integral(1, x / self.rad, y / self.rad)
    }
}

impl SphereProduct {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::param("models", "sphere product radii must be positive"));
        }
        Ok(SphereProduct { a, b })
    }

    fn norm(&self) -> f64 {
        (4.0 / self.a.powi(4) + 4.0 / self.b.powi(4)).sqrt()
    }
}

impl Manifold for SphereProduct {
    fn name(&self) -> &str {
        "sphere_product"
    }

    fn dim(&self) -> usize {
        4
    }

    fn params(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([("a".to_string(), self.a), ("b".to_string(), self.b)])
    }

    fn ricci_bound(&self) -> f64 {
        0.0
    }

    fn diameter(&self) -> Option<f64> {
        Some(PI * (self.a * self.a + self.b * self.b).sqrt())
    }

    fn check_point(&self, p: &ChartPoint) -> Result<()> {
        if p.coords.len() != 4 || p.coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::param("models", "product points have 4 finite coordinates"));
        }
        if [p.coords[0], p.coords[2]].iter().any(|t| !(0.0..=PI).contains(t)) {
            return Err(Error::param("models", "polar angles must lie in [0, pi]"));
        }
        Ok(())
    }

    fn metric(&self, x: &Point4) -> Matrix4<f64> {
        let (a2, b2) = (self.a * self.a, self.b * self.b);
        Matrix4::from_diagonal(&Vector4::new(
            a2,
            a2 * x[0].sin().powi(2),
            b2,
            b2 * x[2].sin().powi(2),
        ))
    }

    fn chart_margin(&self, x: &Point4) -> f64 {
        [x[0], PI - x[0], x[2], PI - x[2]]
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }

    fn curvature_at(&self, p: &ChartPoint) -> Result<CurvatureTensor> {
        self.check_point(p)?;
        let mut sec = [[0.0; 4]; 4];
        sec[0][1] = self.a.powi(-2);
        sec[1][0] = sec[0][1];
        sec[2][3] = self.b.powi(-2);
        sec[3][2] = sec[2][3];
        Ok(CurvatureTensor::from_plane_curvatures(sec))
    }

    fn curvature_norm(&self, _p: &ChartPoint) -> Result<f64> {
        Ok(self.norm())
    }

    fn ball_curvature_sup(&self, _p: &ChartPoint, _r: f64) -> Result<f64> {
        Ok(self.norm())
    }

    fn embedding(&self, p: &ChartPoint) -> Vec<f64> {
        let mut e: Vec<f64> = angles_to_unit(&p.coords[..2]).into_iter().map(|u| self.a * u).collect();
        e.extend(angles_to_unit(&p.coords[2..]).into_iter().map(|u| self.b * u));
        e
    }

    fn distance(&self, p: &ChartPoint, q: &ChartPoint) -> Result<f64> {
        let d1 = great_circle(self.a, &p.coords[..2], &q.coords[..2]);
        let d2 = great_circle(self.b, &p.coords[2..], &q.coords[2..]);
        Ok(d1.hypot(d2))
    }

    fn ball_volume(&self, _p: &ChartPoint, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::param("models", "ball radius must be positive"));
        }
        let (a, b) = (self.a, self.b);
        let f = |t: f64| {
            2.0 * PI * a * (t / a).sin() * cap_area(b, (r * r - t * t).max(0.0).sqrt())
        };
        let scale = 16.0 * PI * PI * a * a * b * b;
        Ok(adaptive_simpson(&f, 0.0, r.min(PI * a), 1e-12 * scale))
    }

    fn sample(
        &self,
        region: &RegionSpec,
        resolution: f64,
        seed: u64,
        jitter: f64,
    ) -> Result<SampledDomain> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts: Vec<(Vec<f64>, f64)> = Vec::new();
        match region {
            RegionSpec::Point {
                coords,
                cell_volume,
            } => {
                self.check_point(&ChartPoint::new(coords.clone()))?;
                pts.push((coords.clone(), *cell_volume));
            }
            RegionSpec::Full => {
                let c1 = sphere_cells(2, self.a, resolution);
                let c2 = sphere_cells(2, self.b, resolution);
                let s = (self.a * self.b).powi(2);
                for x in &c1 {
                    let px = x.point(jitter, &mut rng);
                    for y in &c2 {
                        let mut c = px.clone();
                        c.extend(y.point(jitter, &mut rng));
                        pts.push((c, s * x.volume * y.volume));
                    }
                }
            }
            RegionSpec::Ball { center, radius } => {
                let cp = ChartPoint::new(center.clone());
                self.check_point(&cp)?;
                if !(*radius > 0.0) {
                    return Err(Error::param("models", "ball radius must be positive"));
                }
                if resolution >= *radius {
                    pts.push((center.clone(), self.ball_volume(&cp, *radius)?));
                } else {
                    let d1 = disc_cells(self.a, &center[..2], *radius, resolution, jitter, &mut rng);
                    let d2 = disc_cells(self.b, &center[2..], *radius, resolution, jitter, &mut rng);
                    let (a, b, r) = (self.a, self.b, *radius);
                    let ring1 = Rings::new(a, r, resolution);
                    let ring2 = Rings::new(b, r, resolution);
                    for (t1, x, w1) in &d1 {
                        let (lo1, hi1) = ring1.interval(*t1);
                        for (t2, y, w2) in &d2 {
                            let (lo2, hi2) = ring2.interval(*t2);
                            if lo1 * lo1 + lo2 * lo2 >= r * r {
                                continue;
                            }
                            let frac = if hi1 * hi1 + hi2 * hi2 <= r * r {
                                1.0
                            } else {
                                let inner = |s: f64| {
                                    let top = hi2.min((r * r - s * s).max(0.0).sqrt());
                                    if top <= lo2 {
                                        0.0
                                    } else {
                                        a * (s / a).sin() * ring2.shell(lo2, top)
                                    }
                                };
                                integrate(inner, lo1, hi1, 2, 8)
                                    / (ring1.shell(lo1, hi1) * ring2.shell(lo2, hi2))
                            };
                            if frac > 0.0 {
                                let mut c = x.clone();
                                c.extend_from_slice(y);
                                pts.push((c, w1 * w2 * frac));
                            }
                        }
                    }
                }
            }
        }
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
