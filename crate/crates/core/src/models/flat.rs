use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::sync::Arc;

use nalgebra::{Matrix4, Vector4};

use super::{ChartPoint, KillingField, KillingValue, Manifold, RegionSpec, SampledDomain};
use crate::error::{Error, Result};
use crate::fdgeom::Point4;
use crate::quadrature::adaptive_simpson;
use crate::tensor4::CurvatureTensor;

/// Flat torus `R^n / (L_1 Z x .. x L_n Z)` with `n` equal to 2 or 4.
#[derive(Debug, Clone)]
pub struct FlatTorus {
    periods: Vec<f64>,
    name: String,
}

impl FlatTorus {
    pub fn new(periods: Vec<f64>) -> Result<Self> {
        if periods.len() != 2 && periods.len() != 4 {
            return Err(Error::param("models", "flat torus dimension must be 2 or 4"));
        }
        if periods.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::param("models", "flat torus periods must be positive"));
        }
        Ok(FlatTorus {
            name: format!("flat_torus{}", periods.len()),
            periods,
        })
    }

    pub fn periods(&self) -> &[f64] {
        &self.periods
    }

    pub fn volume(&self) -> f64 {
        self.periods.iter().product()
    }

    /// Shortest image of `q - p`, found by enumerating lattice translates
    /// in the 3 neighbouring fundamental domains per axis.
    fn offset(&self, p: &[f64], q: &[f64]) -> Vec<f64> {
        self.periods
            .iter()
            .zip(p.iter().zip(q))
            .map(|(l, (a, b))| {
                let d = (b - a).rem_euclid(*l);
                [-1.0, 0.0, 1.0]
                    .iter()
                    .map(|k| d + k * l)
                    .min_by(|x, y| x.abs().total_cmp(&y.abs()))
                    .unwrap()
            })
            .collect()
    }

    fn wrap(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.periods).map(|(a, l)| a.rem_euclid(*l)).collect()
    }

    /// Volume of `{x : |x| < r}` intersected with the box `prod [-h_i, h_i]`.
    fn box_ball(r: f64, half: &[f64]) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        match half.len() {
            0 => 1.0,
            1 => 2.0 * r.min(half[0]),
            _ => {
                let rest = &half[1..];
                let corner = rest.iter().map(|h| h * h).sum::<f64>();
                let lim = r.min(half[0]);
                let f = |x: f64| Self::box_ball((r * r - x * x).max(0.0).sqrt(), rest);
                // Below `x0` the slice covers the whole remaining box.
                let x0 = if r * r > corner {
                    (r * r - corner).sqrt().min(lim)
                } else {
                    0.0
                };
                let full: f64 = rest.iter().map(|h| 2.0 * h).product();
                2.0 * (x0 * full + adaptive_simpson(&f, x0, lim, 1e-11 * full.max(1e-300)))
            }
        }
    }

    fn grid(&self, counts: &[usize], origin: &[f64], step: &[f64]) -> Vec<Vec<f64>> {
        let total: usize = counts.iter().product();
        (0..total)
            .map(|mut idx| {
                counts
                    .iter()
                    .zip(origin.iter().zip(step))
                    .map(|(n, (o, h))| {
                        let i = idx % n;
                        idx /= n;
                        o + (i as f64 + 0.5) * h
                    })
                    .collect()
            })
            .collect()
    }
}

impl Manifold for FlatTorus {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.periods.len()
    }

    fn params(&self) -> BTreeMap<String, f64> {
        self.periods
            .iter()
            .enumerate()
            .map(|(i, l)| (format!("l{i}"), *l))
            .chain(std::iter::once(("dim".to_string(), self.dim() as f64)))
            .collect()
    }

    fn ricci_bound(&self) -> f64 {
        0.0
    }

    fn diameter(&self) -> Option<f64> {
        Some(self.periods.iter().map(|l| 0.25 * l * l).sum::<f64>().sqrt())
    }

    fn check_point(&self, p: &ChartPoint) -> Result<()> {
        if p.coords.len() != self.dim() {
            return Err(Error::param("models", "point dimension mismatch"));
        }
        if p.coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::param("models", "non-finite coordinate"));
        }
        Ok(())
    }

    fn metric(&self, _x: &Point4) -> Matrix4<f64> {
        Matrix4::identity()
    }

    fn curvature_at(&self, p: &ChartPoint) -> Result<CurvatureTensor> {
        self.check_point(p)?;
        Ok(CurvatureTensor::zero())
    }

    fn ball_curvature_sup(&self, _p: &ChartPoint, _r: f64) -> Result<f64> {
        Ok(0.0)
    }

    fn embedding(&self, p: &ChartPoint) -> Vec<f64> {
        p.coords
            .iter()
            .zip(&self.periods)
            .flat_map(|(x, l)| {
                let (rad, t) = (l / TAU, TAU * x / l);
                [rad * t.cos(), rad * t.sin()]
            })
            .collect()
    }

    fn distance(&self, p: &ChartPoint, q: &ChartPoint) -> Result<f64> {
        Ok(self
            .offset(&p.coords, &q.coords)
            .iter()
            .map(|d| d * d)
            .sum::<f64>()
            .sqrt())
    }

    fn ball_volume(&self, _p: &ChartPoint, r: f64) -> Result<f64> {
        if r <= 0.0 {
            return Err(Error::param("models", "ball radius must be positive"));
        }
        let min_half = 0.5 * self.periods.iter().cloned().fold(f64::INFINITY, f64::min);
        if r <= min_half {
            return Ok(match self.dim() {
                2 => std::f64::consts::PI * r * r,
                _ => 0.5 * std::f64::consts::PI.powi(2) * r.powi(4),
            });
        }
        let half: Vec<f64> = self.periods.iter().map(|l| 0.5 * l).collect();
        Ok(Self::box_ball(r, &half).min(self.volume()))
    }

    fn sample(
        &self,
        region: &RegionSpec,
        resolution: f64,
        seed: u64,
        _jitter: f64,
    ) -> Result<SampledDomain> {
        let n = self.dim();
        let (points, weights) = match region {
            RegionSpec::Point {
                coords,
                cell_volume,
            } => {
                let p = ChartPoint::new(self.wrap(coords));
                self.check_point(&p)?;
                (vec![p], vec![*cell_volume])
            }
            RegionSpec::Full => {
                let counts: Vec<usize> = self
                    .periods
                    .iter()
                    .map(|l| ((l / resolution).ceil() as usize).max(1))
                    .collect();
                let step: Vec<f64> =
                    self.periods.iter().zip(&counts).map(|(l, c)| l / *c as f64).collect();
                let w: f64 = step.iter().product();
                let pts = self.grid(&counts, &vec![0.0; n], &step);
                let ws = vec![w; pts.len()];
                (pts.into_iter().map(ChartPoint::new).collect(), ws)
            }
            RegionSpec::Ball { center, radius } => {
                if center.len() != n || *radius <= 0.0 {
                    return Err(Error::param("models", "invalid ball region"));
                }
                let c = ChartPoint::new(self.wrap(center));
                if resolution >= *radius {
                    let v = self.ball_volume(&c, *radius)?;
                    (vec![c], vec![v])
                } else {
                    let min_l = self.periods.iter().cloned().fold(f64::INFINITY, f64::min);
                    let (counts, origin, step) = if 2.0 * radius < min_l {
                        let m = ((2.0 * radius / resolution).ceil() as usize).max(1);
                        let h = 2.0 * radius / m as f64;
                        (
                            vec![m; n],
                            c.coords.iter().map(|x| x - radius).collect::<Vec<_>>(),
                            vec![h; n],
                        )
                    } else {
                        let counts: Vec<usize> = self
                            .periods
                            .iter()
                            .map(|l| ((l / resolution).ceil() as usize).max(1))
                            .collect();
                        let step = self
                            .periods
                            .iter()
                            .zip(&counts)
                            .map(|(l, k)| l / *k as f64)
                            .collect();
                        (counts, vec![0.0; n], step)
                    };
                    let w: f64 = step.iter().product();
                    let mut pts = Vec::new();
                    for x in self.grid(&counts, &origin, &step) {
                        let d: f64 = self
                            .offset(&c.coords, &x)
                            .iter()
                            .map(|d| d * d)
                            .sum::<f64>()
                            .sqrt();
                        if d < *radius {
                            pts.push(ChartPoint::new(self.wrap(&x)));
                        }
                    }
                    if pts.is_empty() {
                        let v = self.ball_volume(&c, *radius)?;
                        (vec![c], vec![v])
                    } else {
                        let ws = vec![w; pts.len()];
                        (pts, ws)
                    }
                }
            }
        };
        Ok(SampledDomain {
            points,
            weights,
            model: self.name.clone(),
            resolution,
            seed,
        })
    }

    fn killing_fields(&self) -> Vec<KillingField> {
        if self.dim() != 4 {
            return Vec::new();
        }
        (0..4)
            .map(|i| {
                let e = Vector4::from_fn(|k, _| if k == i { 1.0 } else { 0.0 });
                KillingField::new(
                    format!("d{i}"),
                    Arc::new(move |_: &Point4| KillingValue {
                        coord: e,
                        frame: e,
                        nabla: Matrix4::zeros(),
                        norm: 1.0,
                    }),
                )
            })
            .collect()
    }
}
