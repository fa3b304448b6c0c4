//! Killing-field modification of the Levi-Civita connection and the
//! transgression of characteristic 4-forms.
//!
//! Forms are stored by chart components. An so(4)-valued 1-form is a
//! [`Conn`], `A[mu] = A(d/dx^mu)` acting on orthonormal-frame components, and
//! a 2-form is `F[mu][nu]`. A 3-form is stored as four numbers `w[m]`, the
//! component on the coordinate 3-plane that omits `x^m`, with the remaining
//! indices increasing.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Matrix4, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdgeom::{curvature_of, diff, frame, levi_civita, Conn, Point4, Stencil};
use crate::models::{ChartPoint, KillingField, Manifold};
use crate::quadrature::GAUSS3_UNIT;
use crate::radius::{curvature_radius, Cutoff, RadiusOptions};

const MODULE: &str = "transgression";

pub type TwoForm = [[Matrix4<f64>; 4]; 4];

/// Signed permutations of `0..4`.
fn permutations() -> Vec<([usize; 4], f64)> {
    let mut out = Vec::with_capacity(24);
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let p = [a, b, c, d];
                    let distinct = (0..4).all(|i| (i + 1..4).all(|j| p[i] != p[j]));
                    if distinct {
                        let inversions = (0..4)
                            .flat_map(|i| (i + 1..4).map(move |j| (i, j)))
                            .filter(|(i, j)| p[*i] > p[*j])
                            .count();
                        out.push((p, if inversions % 2 == 0 { 1.0 } else { -1.0 }));
                    }
                }
            }
        }
    }
    out
}

/// Ad-invariant symmetric bilinear forms on so(4). `P(F, F)` is a 4-form
/// whose volume density is the corresponding characteristic density.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvariantPolynomial {
    /// Euler form.
    Euler,
    /// Signature form, one third of the first Pontryagin form.
    Signature,
    /// `32 pi^2 (Euler + 3 Signature)`, the combination in the energy identity.
    #[default]
    Energy,
}

impl InvariantPolynomial {
    pub fn bilinear(&self, x: &Matrix4<f64>, y: &Matrix4<f64>) -> f64 {
        match self {
            InvariantPolynomial::Euler => euler(x, y),
            InvariantPolynomial::Signature => signature(x, y),
            InvariantPolynomial::Energy => 32.0 * PI * PI * (euler(x, y) + 3.0 * signature(x, y)),
        }
    }
}

fn euler(x: &Matrix4<f64>, y: &Matrix4<f64>) -> f64 {
    thread_local! {
        static PERMS: Vec<([usize; 4], f64)> = permutations();
    }
    PERMS.with(|perms| {
        perms
            .iter()
            .map(|(p, s)| s * x[(p[0], p[1])] * y[(p[2], p[3])])
            .sum::<f64>()
            / (32.0 * PI * PI)
    })
}

fn signature(x: &Matrix4<f64>, y: &Matrix4<f64>) -> f64 {
    x.component_mul(y).sum() / (24.0 * PI * PI)
}

/// Largest `|M + M^T|` entry over the components.
fn skew_residual<'a>(ms: impl IntoIterator<Item = &'a Matrix4<f64>>) -> f64 {
    ms.into_iter()
        .map(|m| (m + m.transpose()).abs().max())
        .fold(0.0, f64::max)
}

/// so(4)-valued 1-form at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkewValued1Form {
    pub comps: Conn,
}

impl SkewValued1Form {
    pub fn zero() -> Self {
        SkewValued1Form {
            comps: [Matrix4::zeros(); 4],
        }
    }

    /// `i_v` for coordinate components `v`.
    pub fn contract(&self, v: &Vector4<f64>) -> Matrix4<f64> {
        (0..4).map(|m| self.comps[m] * v[m]).sum()
    }

    pub fn skew_residual(&self) -> f64 {
        skew_residual(&self.comps)
    }
}

/// so(4)-valued 2-form at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Curvature2Form {
    pub comps: TwoForm,
}

impl Curvature2Form {
    /// `i_v F`, an so(4)-valued 1-form.
    pub fn contract(&self, v: &Vector4<f64>) -> SkewValued1Form {
        SkewValued1Form {
            comps: std::array::from_fn(|n| (0..4).map(|m| self.comps[m][n] * v[m]).sum()),
        }
    }

    /// Chart component `P(F, F)_{0123}`.
    pub fn four_form(&self, poly: InvariantPolynomial) -> f64 {
        thread_local! {
            static PERMS: Vec<([usize; 4], f64)> = permutations();
        }
        PERMS.with(|perms| {
            perms
                .iter()
                .map(|(p, s)| s * poly.bilinear(&self.comps[p[0]][p[1]], &self.comps[p[2]][p[3]]))
                .sum::<f64>()
                / 4.0
        })
    }

    pub fn skew_residual(&self) -> f64 {
        skew_residual(self.comps.iter().flatten())
    }
}

/// `P(K ^ F)` for a 1-form `K` and a 2-form `F`.
fn wedge_3(poly: InvariantPolynomial, k: &Conn, f: &TwoForm) -> [f64; 4] {
    std::array::from_fn(|m| {
        let idx: Vec<usize> = (0..4).filter(|i| *i != m).collect();
        let (a, b, c) = (idx[0], idx[1], idx[2]);
        poly.bilinear(&k[a], &f[b][c]) - poly.bilinear(&k[b], &f[a][c]) + poly.bilinear(&k[c], &f[a][b])
    })
}

/// Norm of a chart 3-form in the metric `g`, through its dual vector.
pub fn three_form_norm(w: &[f64; 4], g: &Matrix4<f64>) -> f64 {
    let root = g.determinant().sqrt();
    let x = Vector4::from_fn(|m, _| if m % 2 == 0 { w[m] } else { -w[m] } / root);
    (x.transpose() * g * x)[(0, 0)].max(0.0).sqrt()
}

/// Frame norm of an so(4)-valued 1-form: the square root of
/// `sum_b |A(e_b)|^2` with tensor norms.
pub fn one_form_norm(a: &SkewValued1Form, e: &Matrix4<f64>) -> f64 {
    (0..4)
        .map(|b| {
            let m: Matrix4<f64> = (0..4).map(|nu| a.comps[nu] * e[(nu, b)]).sum();
            m.norm_squared()
        })
        .sum::<f64>()
        .sqrt()
}

pub type Weight = Arc<dyn Fn(&Point4) -> f64 + Send + Sync>;

/// Killing fields of one chart of a structure, with an optional partition of
/// unity weight (`None` means weight 1).
#[derive(Clone, Default)]
pub struct Structure {
    pub fields: Vec<KillingField>,
    pub weight: Option<Weight>,
}

impl std::fmt::Debug for Structure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Structure")
            .field("fields", &self.fields)
            .field("weighted", &self.weight.is_some())
            .finish()
    }
}

impl Structure {
    pub fn new(fields: Vec<KillingField>) -> Self {
        Structure { fields, weight: None }
    }

    /// The model's own Killing fields as a single chart.
    pub fn of_model(model: &dyn Manifold) -> Self {
        Structure::new(model.killing_fields())
    }

    fn weight_at(&self, x: &Point4) -> f64 {
        self.weight.as_ref().map_or(1.0, |w| w(x))
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransgressionOptions {
    /// Finite-difference step in chart units.
    pub h: f64,
    pub polynomial: InvariantPolynomial,
    /// Smallest admissible `|v|`.
    pub min_norm: f64,
    /// Largest admissible `|<v_i, v_j>| / (|v_i| |v_j|)`.
    pub orthogonality_tol: f64,
}

impl Default for TransgressionOptions {
    fn default() -> Self {
        TransgressionOptions {
            h: 1e-3,
            polynomial: InvariantPolynomial::Energy,
            min_norm: 1e-6,
            orthogonality_tol: 1e-6,
        }
    }
}

const STENCIL: Stencil = Stencil::Fourth;

fn point4(p: &ChartPoint) -> Result<Point4> {
    p.coords
        .as_slice()
        .try_into()
        .map_err(|_| Error::param(MODULE, "transgressions need 4D chart points"))
}

/// `K^(l) = sum_i |v_i|^-2 (v_i)_flat (nabla v_i)` in chart components.
fn single_k(model: &dyn Manifold, fields: &[KillingField], x: &Point4) -> Conn {
    let g = model.metric(x);
    let mut k = [Matrix4::zeros(); 4];
    for f in fields {
        let v = f.at(x);
        let flat = g * v.coord;
        let scale = 1.0 / (v.norm * v.norm);
        for (m, km) in k.iter_mut().enumerate() {
            *km += v.nabla * (scale * flat[m]);
        }
    }
    k
}

fn blended_k(model: &dyn Manifold, structures: &[Structure], x: &Point4) -> Conn {
    let mut k = [Matrix4::zeros(); 4];
    for s in structures {
        let w = s.weight_at(x);
        if w != 0.0 {
            let kl = single_k(model, &s.fields, x);
            for m in 0..4 {
                k[m] += kl[m] * w;
            }
        }
    }
    k
}

fn check_fields(fields: &[KillingField], x: &Point4, g: &Matrix4<f64>, opts: &TransgressionOptions) -> Result<()> {
    let vals: Vec<_> = fields.iter().map(|f| f.at(x)).collect();
    for (f, v) in fields.iter().zip(&vals) {
        if !(v.norm >= opts.min_norm) {
            return Err(Error::Polarization {
                module: MODULE,
                message: format!("|{}| = {:.3e} is below {:.1e}", f.name, v.norm, opts.min_norm),
            });
        }
    }
    for i in 0..vals.len() {
        for j in i + 1..vals.len() {
            let c = (vals[i].coord.transpose() * g * vals[j].coord)[(0, 0)] / (vals[i].norm * vals[j].norm);
            if c.abs() > opts.orthogonality_tol {
                return Err(Error::param(
                    MODULE,
                    format!("fields {} and {} are not orthogonal (cosine {c:.3e})", fields[i].name, fields[j].name),
                ));
            }
        }
    }
    Ok(())
}

fn check_stencil(model: &dyn Manifold, p: &ChartPoint, opts: &TransgressionOptions) -> Result<Point4> {
    model.check_point(p)?;
    let x = point4(p)?;
    if !(opts.h > 0.0) {
        return Err(Error::param(MODULE, "finite-difference step must be positive"));
    }
    // Curvature differences a connection that is itself a difference.
    let reach = 4.0 * opts.h;
    if model.chart_margin(&x) <= reach {
        return Err(Error::coverage(
            MODULE,
            format!("stencil of reach {reach:.1e} leaves the chart at {:?}", p.coords),
        ));
    }
    Ok(x)
}

/// `K` at `p` from a single chart of Killing fields.
pub fn k_form(
    model: &dyn Manifold,
    fields: &[KillingField],
    p: &ChartPoint,
    opts: &TransgressionOptions,
) -> Result<SkewValued1Form> {
    model.check_point(p)?;
    let x = point4(p)?;
    check_fields(fields, &x, &model.metric(&x), opts)?;
    Ok(SkewValued1Form {
        comps: single_k(model, fields, &x),
    })
}

/// `K = sum_l phi_l K^(l)` at `p`. Fields are checked on every chart whose
/// weight is nonzero at `p`.
pub fn blended_k_form(
    model: &dyn Manifold,
    structures: &[Structure],
    p: &ChartPoint,
    opts: &TransgressionOptions,
) -> Result<SkewValued1Form> {
    model.check_point(p)?;
    let x = point4(p)?;
    let g = model.metric(&x);
    for s in structures.iter().filter(|s| s.weight_at(&x) != 0.0) {
        check_fields(&s.fields, &x, &g, opts)?;
    }
    Ok(SkewValued1Form {
        comps: blended_k(model, structures, &x),
    })
}

/// Everything the transgression needs at one point.
struct Local {
    g: Matrix4<f64>,
    k: Conn,
    f: TwoForm,
    dk: TwoForm,
}

fn local(model: &dyn Manifold, structures: &[Structure], x: &Point4, h: f64) -> Local {
    let metric = |y: &Point4| model.metric(y);
    let conn = |y: &Point4| levi_civita(&metric, y, h, STENCIL);
    let kf = |y: &Point4| blended_k(model, structures, y);
    let a = conn(x);
    let k = kf(x);
    let f = curvature_of(&conn, x, h, STENCIL);
    let dkm: [[Matrix4<f64>; 4]; 4] = std::array::from_fn(|mu| {
        std::array::from_fn(|nu| {
            let c = |y: &Point4| kf(y)[nu];
            diff(&c, x, mu, h, STENCIL)
        })
    });
    // D K = dK + [A ^ K].
    let dk = std::array::from_fn(|mu| {
        std::array::from_fn(|nu| {
            dkm[mu][nu] - dkm[nu][mu] + a[mu] * k[nu] - k[nu] * a[mu] + k[mu] * a[nu] - a[nu] * k[mu]
        })
    });
    Local {
        g: model.metric(x),
        k,
        f,
        dk,
    }
}

impl Local {
    /// `F_t = F - t DK + t^2 [K_mu, K_nu]`.
    fn f_t(&self, t: f64) -> TwoForm {
        std::array::from_fn(|mu| {
            std::array::from_fn(|nu| {
                let (a, b) = (self.k[mu], self.k[nu]);
                self.f[mu][nu] - self.dk[mu][nu] * t + (a * b - b * a) * (t * t)
            })
        })
    }

    /// `TP = -2 int_0^1 P(K ^ F_t) dt`, exact in `t` with three Gauss nodes.
    fn tp(&self, poly: InvariantPolynomial) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (t, w) in GAUSS3_UNIT {
            let v = wedge_3(poly, &self.k, &self.f_t(t));
            for m in 0..4 {
                out[m] -= 2.0 * w * v[m];
            }
        }
        out
    }
}

/// Curvature of `A - K` at `p`.
pub fn modified_curvature(
    model: &dyn Manifold,
    structures: &[Structure],
    p: &ChartPoint,
    opts: &TransgressionOptions,
) -> Result<Curvature2Form> {
    let x = check_stencil(model, p, opts)?;
    blended_k_form(model, structures, p, opts)?;
    let metric = |y: &Point4| model.metric(y);
    let conn = |y: &Point4| {
        let a = levi_civita(&metric, y, opts.h, STENCIL);
        let k = blended_k(model, structures, y);
        std::array::from_fn(|m| a[m] - k[m])
    };
    Ok(Curvature2Form {
        comps: curvature_of(&conn, &x, opts.h, STENCIL),
    })
}

/// Levi-Civita curvature 2-form at `p`.
pub fn levi_civita_curvature(model: &dyn Manifold, p: &ChartPoint, opts: &TransgressionOptions) -> Result<Curvature2Form> {
    modified_curvature(model, &[], p, opts)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TransgressionForm {
    /// `TP[m]`: chart component omitting `x^m`.
    pub comps: [f64; 4],
    pub norm: f64,
    /// Curvature radius at the point (cutoff at the model's size).
    pub radius: f64,
    /// `|TP| r^3`.
    pub scaled: f64,
    /// `P(K ^ DK)` evaluated directly.
    pub pk_dk: [f64; 4],
    /// `sum_ij |v_i|^-2 |v_j|^-2 (v_i)_flat ^ d(v_j)_flat P(nabla v_i, nabla v_j)`.
    pub pk_dk_expansion: [f64; 4],
}

fn lowered(model: &dyn Manifold, field: &KillingField, y: &Point4) -> Vector4<f64> {
    model.metric(y) * field.at(y).coord
}

/// The expansion of `P(K ^ DK)` through the fields, for a single chart.
fn expansion(model: &dyn Manifold, s: &Structure, x: &Point4, h: f64, poly: InvariantPolynomial) -> [f64; 4] {
    let mut out = [0.0; 4];
    let vals: Vec<_> = s.fields.iter().map(|f| f.at(x)).collect();
    let flats: Vec<Vector4<f64>> = s.fields.iter().map(|f| lowered(model, f, x)).collect();
    for (j, fj) in s.fields.iter().enumerate() {
        // d(v_j)_flat as a matrix of chart components.
        let as_matrix = |y: &Point4| {
            let l = lowered(model, fj, y);
            Matrix4::from_fn(|r, _| if r < 4 { l[r] } else { 0.0 })
        };
        let dl: [Vector4<f64>; 4] = std::array::from_fn(|mu| diff(&as_matrix, x, mu, h, STENCIL).column(0).into());
        let dv = |mu: usize, nu: usize| dl[mu][nu] - dl[nu][mu];
        for (i, vi) in vals.iter().enumerate() {
            let c = poly.bilinear(&vi.nabla, &vals[j].nabla) / (vi.norm * vi.norm * vals[j].norm * vals[j].norm);
            let a = &flats[i];
            for (m, o) in out.iter_mut().enumerate() {
                let idx: Vec<usize> = (0..4).filter(|k| *k != m).collect();
                let (p, q, r) = (idx[0], idx[1], idx[2]);
                *o += c * (a[p] * dv(q, r) - a[q] * dv(p, r) + a[r] * dv(p, q));
            }
        }
    }
    out
}

/// Transgression 3-form of the modification at `p`.
pub fn transgression_density(
    model: &dyn Manifold,
    structures: &[Structure],
    p: &ChartPoint,
    opts: &TransgressionOptions,
) -> Result<TransgressionForm> {
    let x = check_stencil(model, p, opts)?;
    blended_k_form(model, structures, p, opts)?;
    let loc = local(model, structures, &x, opts.h);
    let comps = loc.tp(opts.polynomial);
    let norm = three_form_norm(&comps, &loc.g);
    let radius = curvature_radius(model, p, Cutoff::INFINITE, &RadiusOptions::default())?.value;
    let pk_dk_expansion = match structures {
        [s] => expansion(model, s, &x, opts.h, opts.polynomial),
        _ => [f64::NAN; 4],
    };
    Ok(TransgressionForm {
        comps,
        norm,
        radius,
        scaled: norm * radius.powi(3),
        pk_dk: wedge_3(opts.polynomial, &loc.k, &loc.dk),
        pk_dk_expansion,
    })
}

/// Pointwise identities of the modification, in units of the curvature radius.
#[derive(Debug, Clone, Serialize)]
pub struct PointReport {
    pub point: Vec<f64>,
    pub radius: f64,
    /// Largest `|i_{v_j} K - nabla v_j|`.
    pub contraction_residual: f64,
    /// Largest `|K + K^T|` entry.
    pub skew_residual: f64,
    /// Largest `|i_v A~| r` over unit common fields.
    pub null_connection: f64,
    /// Largest `|i_v F~| r^2` over unit common fields.
    pub null_curvature: f64,
    /// `|P(F~, F~)| r^4` as a volume density.
    pub modified_density: f64,
    /// `P(F, F)` as a volume density.
    pub density: f64,
    pub transgression: TransgressionForm,
}

/// Fields shared by every chart whose weight is nonzero at `x`, by name.
fn common_fields(structures: &[Structure], x: &Point4) -> Vec<KillingField> {
    let active: Vec<&Structure> = structures.iter().filter(|s| s.weight_at(x) != 0.0).collect();
    let Some(first) = active.first() else {
        return Vec::new();
    };
    first
        .fields
        .iter()
        .filter(|f| active.iter().all(|s| s.fields.iter().any(|g| g.name == f.name)))
        .cloned()
        .collect()
}

pub fn point_report(
    model: &dyn Manifold,
    structures: &[Structure],
    p: &ChartPoint,
    opts: &TransgressionOptions,
) -> Result<PointReport> {
    let x = check_stencil(model, p, opts)?;
    let k = blended_k_form(model, structures, p, opts)?;
    let ft = modified_curvature(model, structures, p, opts)?;
    let f = levi_civita_curvature(model, p, opts)?;
    let tp = transgression_density(model, structures, p, opts)?;
    let r = tp.radius;
    let g = model.metric(&x);
    let e = frame(&g);
    let root = g.determinant().sqrt();
    let a = levi_civita(&|y: &Point4| model.metric(y), &x, opts.h, STENCIL);
    let mut contraction_residual: f64 = 0.0;
    let mut null_connection: f64 = 0.0;
    let mut null_curvature: f64 = 0.0;
    for s in structures.iter().filter(|s| s.weight_at(&x) != 0.0) {
        for field in &s.fields {
            let v = field.at(&x);
            let own = SkewValued1Form {
                comps: single_k(model, &s.fields, &x),
            };
            contraction_residual = contraction_residual.max((own.contract(&v.coord) - v.nabla).norm());
        }
    }
    for field in common_fields(structures, &x) {
        let v = field.at(&x);
        let unit = v.coord / v.norm;
        let at: Matrix4<f64> = (0..4).map(|m| (a[m] - k.comps[m]) * unit[m]).sum();
        null_connection = null_connection.max(at.norm() * r);
        null_curvature = null_curvature.max(one_form_norm(&ft.contract(&unit), &e) * r * r);
    }
    Ok(PointReport {
        point: p.coords.clone(),
        radius: r,
        contraction_residual,
        skew_residual: k.skew_residual(),
        null_connection,
        null_curvature,
        modified_density: (ft.four_form(opts.polynomial) / root).abs() * r.powi(4),
        density: f.four_form(opts.polynomial) / root,
        transgression: tp,
    })
}

/// Coordinate box `lo <= x <= hi`. Periodic axes contribute no faces.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartBox {
    pub lo: [f64; 4],
    pub hi: [f64; 4],
    #[serde(default)]
    pub periodic: [bool; 4],
}

#[derive(Debug, Clone, Serialize)]
pub struct StokesReport {
    pub cells: usize,
    pub fd_step: f64,
    /// `int_region P(F, F)`.
    pub interior: f64,
    /// `oint_boundary TP`.
    pub boundary: f64,
    pub residual: f64,
}

fn box_corner_close(model: &dyn Manifold, structures: &[Structure], a: &Point4, b: &Point4) -> bool {
    let (ga, gb) = (model.metric(a), model.metric(b));
    if (ga - gb).norm() > 1e-9 * ga.norm() {
        return false;
    }
    let (ka, kb) = (blended_k(model, structures, a), blended_k(model, structures, b));
    (0..4).all(|m| (ka[m] - kb[m]).norm() <= 1e-9 * (1.0 + ka[m].norm()))
}

fn check_box(model: &dyn Manifold, structures: &[Structure], region: &ChartBox, cells: usize) -> Result<()> {
    if cells == 0 {
        return Err(Error::param(MODULE, "need at least one cell per axis"));
    }
    for m in 0..4 {
        if !(region.hi[m] > region.lo[m]) {
            return Err(Error::param(MODULE, format!("axis {m}: empty or reversed interval, boundary has no orientation")));
        }
    }
    let mid: Point4 = std::array::from_fn(|m| 0.5 * (region.lo[m] + region.hi[m]));
    for m in (0..4).filter(|m| region.periodic[*m]) {
        let mut a = mid;
        let mut b = mid;
        a[m] = region.lo[m];
        b[m] = region.hi[m];
        if !box_corner_close(model, structures, &a, &b) {
            return Err(Error::param(
                MODULE,
                format!("axis {m} is marked periodic but the faces do not match, boundary is not closed"),
            ));
        }
    }
    Ok(())
}

fn cell_centers(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> + Clone {
    let w = (hi - lo) / n as f64;
    (0..n).map(move |i| lo + (i as f64 + 0.5) * w)
}

/// `|int_region P(F, F) + oint_boundary TP|` with the midpoint rule on
/// `cells` cells per axis. Stokes' theorem makes the exact value 0.
pub fn stokes_check(
    model: &dyn Manifold,
    structures: &[Structure],
    region: &ChartBox,
    cells: usize,
    opts: &TransgressionOptions,
) -> Result<StokesReport> {
    check_box(model, structures, region, cells)?;
    let width: [f64; 4] = std::array::from_fn(|m| (region.hi[m] - region.lo[m]) / cells as f64);
    let h = opts.h.min(0.05 * width.iter().cloned().fold(f64::INFINITY, f64::min));
    let o = TransgressionOptions { h, ..*opts };
    let axes: Vec<Vec<f64>> = (0..4).map(|m| cell_centers(region.lo[m], region.hi[m], cells).collect()).collect();
    let cell_volume: f64 = width.iter().product();
    let interior_points: Vec<Point4> = (0..cells.pow(4))
        .map(|i| std::array::from_fn(|m| axes[m][(i / cells.pow(m as u32)) % cells]))
        .collect();
    let interior: f64 = interior_points
        .par_iter()
        .map(|x| {
            check_stencil(model, &ChartPoint::new(x.to_vec()), &o)?;
            let metric = |y: &Point4| model.metric(y);
            let conn = |y: &Point4| levi_civita(&metric, y, h, STENCIL);
            let f = Curvature2Form {
                comps: curvature_of(&conn, x, h, STENCIL),
            };
            Ok(f.four_form(opts.polynomial))
        })
        .collect::<Result<Vec<f64>>>()?
        .iter()
        .sum::<f64>()
        * cell_volume;
    let mut boundary = 0.0;
    for m in (0..4).filter(|m| !region.periodic[*m]) {
        let others: Vec<usize> = (0..4).filter(|k| *k != m).collect();
        let face_area: f64 = others.iter().map(|k| width[*k]).product();
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        for (end, side) in [(region.hi[m], 1.0), (region.lo[m], -1.0)] {
            let pts: Vec<Point4> = (0..cells.pow(3))
                .map(|i| {
                    let mut x = [0.0; 4];
                    x[m] = end;
                    for (j, k) in others.iter().enumerate() {
                        x[*k] = axes[*k][(i / cells.pow(j as u32)) % cells];
                    }
                    x
                })
                .collect();
            let s: f64 = pts
                .par_iter()
                .map(|x| {
                    check_stencil(model, &ChartPoint::new(x.to_vec()), &o)?;
                    Ok(local(model, structures, x, h).tp(opts.polynomial)[m])
                })
                .collect::<Result<Vec<f64>>>()?
                .iter()
                .sum();
            boundary += sign * side * s * face_area;
        }
    }
    Ok(StokesReport {
        cells,
        fd_step: h,
        interior,
        boundary,
        residual: (interior + boundary).abs(),
    })
}
