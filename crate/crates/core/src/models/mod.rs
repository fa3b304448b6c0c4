//! Catalog of analytic model manifolds.
//!
//! Each model lives in a single chart and exposes its metric, curvature in
//! the normalized coordinate frame, geodesic distance, ball volumes,
//! quadrature samples and (where the geometry has them) Killing fields.

mod bump;
mod flat;
pub mod geodesic;
mod product;
pub mod sampling;
mod spaceform;
mod warped;

pub use bump::BumpMetric;
pub use flat::FlatTorus;
pub use product::SphereProduct;
pub use spaceform::{HyperbolicSpace, RoundSphere};
pub use warped::WarpedCircle;

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdgeom::{self, Point4, Stencil};
use crate::tensor4::CurvatureTensor;

/// A point of a model, given by coordinates in the model's chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    pub chart: u8,
    pub coords: Vec<f64>,
}

impl ChartPoint {
    pub fn new(coords: Vec<f64>) -> Self {
        ChartPoint { chart: 0, coords }
    }

    pub fn p4(&self) -> Point4 {
        [self.coords[0], self.coords[1], self.coords[2], self.coords[3]]
    }
}

/// Which part of a model to sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegionSpec {
    Full,
    Ball { center: Vec<f64>, radius: f64 },
    Point { coords: Vec<f64>, cell_volume: f64 },
}

/// Quadrature sample of a region.
#[derive(Debug, Clone)]
pub struct SampledDomain {
    pub points: Vec<ChartPoint>,
    pub weights: Vec<f64>,
    pub model: String,
    pub resolution: f64,
    pub seed: u64,
}

impl SampledDomain {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn single(model: &str, p: ChartPoint, weight: f64, resolution: f64, seed: u64) -> Self {
        SampledDomain {
            points: vec![p],
            weights: vec![weight],
            model: model.to_string(),
            resolution,
            seed,
        }
    }
}

/// Where a model's curvature comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurvatureSource {
    Analytic,
    FiniteDifference,
}

/// Value of a Killing field at a point, in the model's orthonormal frame.
#[derive(Debug, Clone, Copy)]
pub struct KillingValue {
    /// Coordinate components.
    pub coord: Vector4<f64>,
    /// Orthonormal-frame components.
    pub frame: Vector4<f64>,
    /// `nabla[(a, b)] = <nabla_{e_b} v, e_a>`.
    pub nabla: Matrix4<f64>,
    pub norm: f64,
}

pub type KillingEval = Arc<dyn Fn(&Point4) -> KillingValue + Send + Sync>;

#[derive(Clone)]
pub struct KillingField {
    pub name: String,
    eval: KillingEval,
}

impl std::fmt::Debug for KillingField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KillingField").field("name", &self.name).finish()
    }
}

impl KillingField {
    pub fn new(name: impl Into<String>, eval: KillingEval) -> Self {
        KillingField {
            name: name.into(),
            eval,
        }
    }

    pub fn at(&self, x: &Point4) -> KillingValue {
        (self.eval)(x)
    }
}

/// Common interface of the catalog models.
pub trait Manifold: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn params(&self) -> BTreeMap<String, f64>;
    /// `Lambda` with `Ric >= -Lambda^2`.
    fn ricci_bound(&self) -> f64;
    /// Diameter for compact models.
    fn diameter(&self) -> Option<f64>;
    /// Largest ball radius the model's oracles support.
    fn max_radius(&self) -> f64 {
        self.diameter().unwrap_or(f64::INFINITY)
    }
    fn check_point(&self, p: &ChartPoint) -> Result<()>;
    /// Chart metric (4D models only).
    fn metric(&self, x: &Point4) -> Matrix4<f64>;
    /// Distance from `x` to the chart's coordinate singularities.
    fn chart_margin(&self, _x: &Point4) -> f64 {
        f64::INFINITY
    }
    fn curvature_source(&self) -> CurvatureSource {
        CurvatureSource::Analytic
    }
    /// Curvature in the normalized coordinate frame.
    fn curvature_at(&self, p: &ChartPoint) -> Result<CurvatureTensor>;
    fn curvature_norm(&self, p: &ChartPoint) -> Result<f64> {
        Ok(self.curvature_at(p)?.norm_sq().sqrt())
    }
    /// Sampled supremum of `|Rm|` over the open ball `B(p, r)`.
    fn ball_curvature_sup(&self, p: &ChartPoint, r: f64) -> Result<f64>;
    fn distance(&self, p: &ChartPoint, q: &ChartPoint) -> Result<f64>;
    /// Euclidean embedding with `|E(p) - E(q)| <= dist(p, q)`.
    fn embedding(&self, p: &ChartPoint) -> Vec<f64>;
    /// Cheap lower and upper bounds on the distance.
    fn distance_bounds(&self, p: &ChartPoint, q: &ChartPoint) -> (f64, f64) {
        match self.distance(p, q) {
            Ok(d) => (d, d),
            Err(_) => (0.0, f64::INFINITY),
        }
    }
    fn ball_volume(&self, p: &ChartPoint, r: f64) -> Result<f64>;
    fn sample(&self, region: &RegionSpec, resolution: f64, seed: u64, jitter: f64)
        -> Result<SampledDomain>;
    fn killing_fields(&self) -> Vec<KillingField> {
        Vec::new()
    }
}

impl dyn Manifold + '_ {
    /// `dist(p, q) < r`, deciding from bounds where possible.
    pub fn within(&self, p: &ChartPoint, q: &ChartPoint, r: f64) -> Result<bool> {
        let (lo, hi) = self.distance_bounds(p, q);
        if lo >= r {
            return Ok(false);
        }
        if hi < r {
            return Ok(true);
        }
        Ok(self.distance(p, q)? < r)
    }

    /// `dist(p, q) <= r`.
    pub fn within_closed(&self, p: &ChartPoint, q: &ChartPoint, r: f64) -> Result<bool> {
        let (lo, hi) = self.distance_bounds(p, q);
        if lo > r {
            return Ok(false);
        }
        if hi <= r {
            return Ok(true);
        }
        Ok(self.distance(p, q)? <= r)
    }

    pub fn point(&self, coords: Vec<f64>) -> Result<ChartPoint> {
        let p = ChartPoint::new(coords);
        self.check_point(&p)?;
        Ok(p)
    }
}

/// Model selection as it appears in scenario configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

fn take(params: &BTreeMap<String, f64>, allowed: &[&str], key: &str, default: f64) -> Result<f64> {
    for k in params.keys() {
        if !allowed.contains(&k.as_str()) {
            return Err(Error::param("models", format!("unknown model parameter `{k}`")));
        }
    }
    Ok(*params.get(key).unwrap_or(&default))
}

/// Builds a model from its catalog name and parameters.
pub fn build(spec: &ModelSpec) -> Result<Arc<dyn Manifold>> {
    let p = &spec.params;
    Ok(match spec.name.as_str() {
        "flat_torus" => {
            let keys = ["dim", "l0", "l1", "l2", "l3"];
            let dim = take(p, &keys, "dim", 4.0)? as usize;
            let periods = (0..dim)
                .map(|i| take(p, &keys, &format!("l{i}"), 1.0))
                .collect::<Result<Vec<_>>>()?;
            Arc::new(FlatTorus::new(periods)?)
        }
        "sphere" => Arc::new(RoundSphere::new(take(p, &["radius"], "radius", 1.0)?)?),
        "hyperbolic" => Arc::new(HyperbolicSpace::new(take(p, &["radius"], "radius", 1.0)?)?),
        "sphere_product" => {
            let keys = ["a", "b"];
            Arc::new(SphereProduct::new(take(p, &keys, "a", 1.0)?, take(p, &keys, "b", 1.0)?)?)
        }
        "warped" => {
            let keys = ["a", "scale"];
            Arc::new(WarpedCircle::new(
                take(p, &keys, "a", 0.3)?,
                take(p, &keys, "scale", 1.0)?,
            )?)
        }
        "bump" => {
            let keys = ["period", "amplitude", "width"];
            Arc::new(BumpMetric::new(
                take(p, &keys, "period", 2.0)?,
                take(p, &keys, "amplitude", 0.5)?,
                take(p, &keys, "width", 0.5)?,
            )?)
        }
        other => return Err(Error::param("models", format!("unknown model `{other}`"))),
    })
}

/// Curvature at `p` computed by finite differences of the chart metric.
/// Errors when the stencil would reach a coordinate singularity.
pub fn fd_curvature(model: &dyn Manifold, p: &ChartPoint, h: f64) -> Result<CurvatureTensor> {
    let x = p.p4();
    let margin = model.chart_margin(&x);
    if margin < 6.0 * h {
        return Err(Error::coverage(
            "models",
            format!("chart margin {margin:.3e} below finite-difference reach {:.3e}", 6.0 * h),
        ));
    }
    let metric = |y: &Point4| model.metric(y);
    Ok(fdgeom::riemann(&metric, &x, h).0)
}

/// Killing-equation diagnostics of a supplied field at a point: the
/// symmetric part of the supplied `nabla v`, and its mismatch with a
/// finite-difference covariant derivative of the coordinate field.
pub fn killing_residuals(
    model: &dyn Manifold,
    field: &KillingField,
    x: &Point4,
    h: f64,
) -> (f64, f64) {
    let kv = field.at(x);
    let sym = (kv.nabla + kv.nabla.transpose()).norm() * 0.5;
    let metric = |y: &Point4| model.metric(y);
    let gamma = fdgeom::christoffel(&metric, x, h, Stencil::Fourth);
    let e = fdgeom::frame(&model.metric(x));
    let einv = e.try_inverse().expect("frame");
    let vfun = |y: &Point4| {
        let c = field.at(y).coord;
        Matrix4::from_fn(|i, _| c[i])
    };
    // cov[(lambda, mu)] = (nabla_mu v)^lambda
    let mut cov = Matrix4::zeros();
    for mu in 0..4 {
        let d = fdgeom::diff(&vfun, x, mu, h, Stencil::Fourth);
        for l in 0..4 {
            let mut s = d[(l, 0)];
            for n in 0..4 {
                s += gamma[l][mu][n] * kv.coord[n];
            }
            cov[(l, mu)] = s;
        }
    }
    let nabla_fd = einv * cov * e;
    (sym, (nabla_fd - kv.nabla).norm())
}

/// Eigenvalues of the Ricci tensor at `p`, ascending.
pub fn ricci_eigenvalues(model: &dyn Manifold, p: &ChartPoint) -> Result<Vec<f64>> {
    let ric = model.curvature_at(p)?.ricci();
    let mut ev: Vec<f64> = ric.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    Ok(ev)
}

/// Picks `n` sample points inside the chart, deterministically from `seed`,
/// staying at least `margin` away from coordinate singularities.
pub fn random_points(model: &dyn Manifold, n: usize, seed: u64, margin: f64) -> Vec<ChartPoint> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let dom = model
        .sample(&RegionSpec::Full, 0.5, seed, 0.0)
        .or_else(|_| {
            model.sample(
                &RegionSpec::Ball {
                    center: vec![0.0; model.dim()],
                    radius: 1.0,
                },
                0.3,
                seed,
                0.0,
            )
        })
        .expect("model sample");
    let mut out = Vec::with_capacity(n);
    let mut guard = 0;
    while out.len() < n && guard < 1000 * n {
        guard += 1;
        let base = &dom.points[rng.gen_range(0..dom.len())];
        let coords: Vec<f64> = base
            .coords
            .iter()
            .map(|c| c + rng.gen_range(-0.2..0.2))
            .collect();
        let p = ChartPoint::new(coords);
        if model.check_point(&p).is_ok()
            && (model.dim() != 4 || model.chart_margin(&p.p4()) > margin)
        {
            out.push(p);
        }
    }
    out
}
