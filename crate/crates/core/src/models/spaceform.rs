use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{Matrix4, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::sampling::{angles_to_unit, complement_basis, polar_cells, sin_power_integral,
                      sinh3_integral, sphere_cells, unit_to_angles};
use super::{ChartPoint, Manifold, RegionSpec, SampledDomain};
use crate::error::{Error, Result};
use crate::fdgeom::Point4;
use crate::tensor4::CurvatureTensor;

const VOL_S3: f64 = 2.0 * PI * PI;

fn positive_radius(rho: f64) -> Result<f64> {
    if rho.is_finite() && rho > 0.0 {
        Ok(rho)
    } else {
        Err(Error::param("models", "radius must be positive"))
    }
}

fn ball_input(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::param("models", "ball radius must be positive"))
    }
}

/// Round sphere `S^4(rho)` in hyperspherical coordinates
/// `(psi_1, psi_2, psi_3, phi)`.
#[derive(Debug, Clone)]
pub struct RoundSphere {
    rho: f64,
}

impl RoundSphere {
    pub fn new(rho: f64) -> Result<Self> {
        Ok(RoundSphere {
            rho: positive_radius(rho)?,
        })
    }

    pub fn radius(&self) -> f64 {
        self.rho
    }

    pub fn volume(&self) -> f64 {
        8.0 * PI * PI / 3.0 * self.rho.powi(4)
    }

    fn unit(p: &ChartPoint) -> Vec<f64> {
        angles_to_unit(&p.coords)
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

impl Manifold for RoundSphere {
    fn name(&self) -> &str {
        "sphere"
    }

    fn dim(&self) -> usize {
        4
    }

    fn params(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([("radius".to_string(), self.rho)])
    }

    fn ricci_bound(&self) -> f64 {
        0.0
    }

    fn diameter(&self) -> Option<f64> {
        Some(PI * self.rho)
    }

    fn check_point(&self, p: &ChartPoint) -> Result<()> {
        if p.coords.len() != 4 || p.coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::param("models", "sphere points have 4 finite coordinates"));
        }
        if p.coords[..3].iter().any(|a| !(0.0..=PI).contains(a)) {
            return Err(Error::param("models", "polar angles must lie in [0, pi]"));
        }
        Ok(())
    }

    fn metric(&self, x: &Point4) -> Matrix4<f64> {
        let r2 = self.rho * self.rho;
        let s1 = x[0].sin().powi(2);
        let s2 = x[1].sin().powi(2);
        let s3 = x[2].sin().powi(2);
        Matrix4::from_diagonal(&Vector4::new(r2, r2 * s1, r2 * s1 * s2, r2 * s1 * s2 * s3))
    }

    fn chart_margin(&self, x: &Point4) -> f64 {
        x[..3]
            .iter()
            .map(|a| a.min(PI - a))
            .fold(f64::INFINITY, f64::min)
    }

    fn curvature_at(&self, p: &ChartPoint) -> Result<CurvatureTensor> {
        self.check_point(p)?;
        Ok(CurvatureTensor::constant_curvature(self.rho.powi(-2)))
    }

    fn curvature_norm(&self, _p: &ChartPoint) -> Result<f64> {
        Ok(24f64.sqrt() / (self.rho * self.rho))
    }

    fn ball_curvature_sup(&self, _p: &ChartPoint, _r: f64) -> Result<f64> {
        Ok(24f64.sqrt() / (self.rho * self.rho))
    }

    fn embedding(&self, p: &ChartPoint) -> Vec<f64> {
        Self::unit(p).into_iter().map(|u| self.rho * u).collect()
    }

    fn distance(&self, p: &ChartPoint, q: &ChartPoint) -> Result<f64> {
        let u = Self::unit(p);
        let v = Self::unit(q);
        let chord = u.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        Ok(2.0 * self.rho * (0.5 * chord).min(1.0).asin())
    }

    fn ball_volume(&self, _p: &ChartPoint, r: f64) -> Result<f64> {
        ball_input(r)?;
        let t = (r / self.rho).min(PI);
        Ok(VOL_S3 * self.rho.powi(4) * sin_power_integral(3, 0.0, t))
    }

    fn sample(
        &self,
        region: &RegionSpec,
        resolution: f64,
        seed: u64,
        jitter: f64,
    ) -> Result<SampledDomain> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho4 = self.rho.powi(4);
        let pts = match region {
            RegionSpec::Point {
                coords,
                cell_volume,
            } => {
                self.check_point(&ChartPoint::new(coords.clone()))?;
                vec![(coords.clone(), *cell_volume)]
            }
            RegionSpec::Full => sphere_cells(4, self.rho, resolution)
                .iter()
                .map(|c| (c.point(jitter, &mut rng), c.volume * rho4))
                .collect(),
            RegionSpec::Ball { center, radius } => {
                let c = ChartPoint::new(center.clone());
                self.check_point(&c)?;
                ball_input(*radius)?;
                let r = radius.min(PI * self.rho);
                if resolution >= r {
                    vec![(center.clone(), self.ball_volume(&c, r)?)]
                } else {
                    let u = Self::unit(&c);
                    let basis = complement_basis(&u);
                    let rho = self.rho;
                    polar_cells(
                        4,
                        r,
                        resolution,
                        |t| rho * (t / rho).sin(),
                        |a, b| rho4 * sin_power_integral(3, a / rho, b / rho),
                        jitter,
                        &mut rng,
                    )
                    .into_iter()
                    .map(|(t, dir, w)| {
                        let (ct, st) = ((t / rho).cos(), (t / rho).sin());
                        let mut y: Vec<f64> = u.iter().map(|x| ct * x).collect();
                        for (d, b) in dir.iter().zip(&basis) {
                            for (yi, bi) in y.iter_mut().zip(b) {
                                *yi += st * d * bi;
                            }
                        }
                        (unit_to_angles(&y), w)
                    })
                    .collect()
                }
            }
        };
        Ok(self.domain(pts, resolution, seed))
    }
}

/// Hyperbolic space `H^4(rho)` in the Poincare ball model.
#[derive(Debug, Clone)]
pub struct HyperbolicSpace {
    rho: f64,
}

impl HyperbolicSpace {
    pub fn new(rho: f64) -> Result<Self> {
        Ok(HyperbolicSpace {
            rho: positive_radius(rho)?,
        })
    }

    pub fn radius(&self) -> f64 {
        self.rho
    }

    /// Isometry of the unit ball taking the origin to `c`.
    fn mobius(c: &[f64], y: &[f64]) -> Vec<f64> {
        let cy: f64 = c.iter().zip(y).map(|(a, b)| a * b).sum();
        let c2: f64 = c.iter().map(|a| a * a).sum();
        let y2: f64 = y.iter().map(|a| a * a).sum();
        let den = 1.0 + 2.0 * cy + c2 * y2;
        c.iter()
            .zip(y)
            .map(|(ci, yi)| ((1.0 + 2.0 * cy + y2) * ci + (1.0 - c2) * yi) / den)
            .collect()
    }
}

impl Manifold for HyperbolicSpace {
    fn name(&self) -> &str {
        "hyperbolic"
    }

    fn dim(&self) -> usize {
        4
    }

    fn params(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([("radius".to_string(), self.rho)])
    }

    fn ricci_bound(&self) -> f64 {
        3f64.sqrt() / self.rho
    }

    fn diameter(&self) -> Option<f64> {
        None
    }

    fn check_point(&self, p: &ChartPoint) -> Result<()> {
        if p.coords.len() != 4 || p.coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::param("models", "hyperbolic points have 4 finite coordinates"));
        }
        if p.coords.iter().map(|c| c * c).sum::<f64>() >= 1.0 {
            return Err(Error::param("models", "point outside the Poincare ball"));
        }
        Ok(())
    }

    fn metric(&self, x: &Point4) -> Matrix4<f64> {
        let n2: f64 = x.iter().map(|a| a * a).sum();
        let c = 2.0 * self.rho / (1.0 - n2);
        Matrix4::identity() * (c * c)
    }

    fn chart_margin(&self, x: &Point4) -> f64 {
        1.0 - x.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    fn curvature_at(&self, p: &ChartPoint) -> Result<CurvatureTensor> {
        self.check_point(p)?;
        Ok(CurvatureTensor::constant_curvature(-self.rho.powi(-2)))
    }

    fn curvature_norm(&self, _p: &ChartPoint) -> Result<f64> {
        Ok(24f64.sqrt() / (self.rho * self.rho))
    }

    fn ball_curvature_sup(&self, _p: &ChartPoint, _r: f64) -> Result<f64> {
        Ok(24f64.sqrt() / (self.rho * self.rho))
    }

    fn embedding(&self, p: &ChartPoint) -> Vec<f64> {
        p.coords.iter().map(|x| 2.0 * self.rho * x).collect()
    }

    fn distance(&self, p: &ChartPoint, q: &ChartPoint) -> Result<f64> {
        let d: f64 = p.coords.iter().zip(&q.coords).map(|(a, b)| (a - b).powi(2)).sum();
        let np: f64 = p.coords.iter().map(|a| a * a).sum();
        let nq: f64 = q.coords.iter().map(|a| a * a).sum();
        Ok(2.0 * self.rho * (d.sqrt() / ((1.0 - np) * (1.0 - nq)).sqrt()).asinh())
    }

    fn ball_volume(&self, _p: &ChartPoint, r: f64) -> Result<f64> {
        ball_input(r)?;
        Ok(VOL_S3 * self.rho.powi(4) * sinh3_integral(0.0, r / self.rho))
    }

    fn sample(
        &self,
        region: &RegionSpec,
        resolution: f64,
        seed: u64,
        jitter: f64,
    ) -> Result<SampledDomain> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = self.rho;
        let rho4 = rho.powi(4);
        let pts: Vec<(Vec<f64>, f64)> = match region {
            RegionSpec::Full => {
                return Err(Error::coverage("models", "hyperbolic space has infinite volume"))
            }
            RegionSpec::Point {
                coords,
                cell_volume,
            } => {
                self.check_point(&ChartPoint::new(coords.clone()))?;
                vec![(coords.clone(), *cell_volume)]
            }
            RegionSpec::Ball { center, radius } => {
                let c = ChartPoint::new(center.clone());
                self.check_point(&c)?;
                ball_input(*radius)?;
                if resolution >= *radius {
                    vec![(center.clone(), self.ball_volume(&c, *radius)?)]
                } else {
                    let cells = polar_cells(
                        4,
                        *radius,
                        resolution,
                        |t| rho * (t / rho).sinh(),
                        |a, b| rho4 * sinh3_integral(a / rho, b / rho),
                        jitter,
                        &mut rng,
                    );
                    let mut out = Vec::with_capacity(cells.len());
                    for (t, dir, w) in cells {
                        let e = (t / (2.0 * rho)).tanh();
                        let y: Vec<f64> = dir.iter().map(|d| e * d).collect();
                        let x = Self::mobius(center, &y);
                        if x.iter().map(|a| a * a).sum::<f64>() >= 1.0 {
                            return Err(Error::coverage(
                                "models",
                                "ball leaves the floating-point range of the Poincare chart",
                            ));
                        }
                        out.push((x, w));
                    }
                    out
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
    fn antipodal_distance_is_pi() {
        let s = RoundSphere::new(1.0).unwrap();
        let p = ChartPoint::new(vec![0.3, 1.2, 0.7, 2.0]);
        let u = angles_to_unit(&p.coords);
        let q = ChartPoint::new(unit_to_angles(&u.iter().map(|x| -x).collect::<Vec<_>>()));
        assert!((s.distance(&p, &q).unwrap() - PI).abs() < 1e-12);
    }

    #[test]
    fn sphere_ball_sample_points_lie_in_ball() {
        let s = RoundSphere::new(2.0).unwrap();
        let c = vec![1.0, 1.0, 1.0, 1.0];
        let d = s
            .sample(&RegionSpec::Ball { center: c.clone(), radius: 0.8 }, 0.1, 3, 0.5)
            .unwrap();
        let cp = ChartPoint::new(c);
        for p in &d.points {
            assert!(s.distance(&cp, p).unwrap() < 0.8 + 1e-12);
        }
        let v = s.ball_volume(&cp, 0.8).unwrap();
        assert!((d.total_weight() - v).abs() < 1e-10 * v);
    }

    #[test]
    fn hyperbolic_ball_sample_is_isometric() {
        let h = HyperbolicSpace::new(1.0).unwrap();
        let c = vec![0.3, -0.2, 0.1, 0.4];
        let d = h
            .sample(&RegionSpec::Ball { center: c.clone(), radius: 1.5 }, 0.2, 1, 0.0)
            .unwrap();
        let cp = ChartPoint::new(c);
        let max = d
            .points
            .iter()
            .map(|p| h.distance(&cp, p).unwrap())
            .fold(0.0, f64::max);
        assert!(max < 1.5);
        assert!(max > 1.3);
    }
}
