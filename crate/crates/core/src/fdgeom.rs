//! Finite-difference Riemannian geometry in a single 4D chart.
//!
//! Everything here works from a chart metric `x -> g(x)` and produces
//! orthonormal-frame quantities, with the frame obtained from the Cholesky
//! factor of `g` (for diagonal metrics: normalized coordinate vectors).

use nalgebra::Matrix4;

use crate::tensor4::{CurvatureTensor, Rank4};

/// Centered difference stencil.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stencil {
    Second,
    Fourth,
}

pub type Point4 = [f64; 4];
/// Connection (or any so(4)-valued 1-form) in chart components: `conn[mu]` is
/// the matrix `A(d/dx^mu)` acting on orthonormal-frame components.
pub type Conn = [Matrix4<f64>; 4];

fn shifted(x: &Point4, mu: usize, dx: f64) -> Point4 {
    let mut y = *x;
    y[mu] += dx;
    y
}

/// Derivative of a matrix-valued function along coordinate `mu`.
pub fn diff<F>(f: &F, x: &Point4, mu: usize, h: f64, stencil: Stencil) -> Matrix4<f64>
where
    F: Fn(&Point4) -> Matrix4<f64>,
{
    match stencil {
        Stencil::Second => (f(&shifted(x, mu, h)) - f(&shifted(x, mu, -h))) / (2.0 * h),
        Stencil::Fourth => {
            (f(&shifted(x, mu, -2.0 * h)) - f(&shifted(x, mu, 2.0 * h))
                + (f(&shifted(x, mu, h)) - f(&shifted(x, mu, -h))) * 8.0)
                / (12.0 * h)
        }
    }
}

/// Orthonormal frame matrix `E` with columns `e_b = sum_nu E[(nu, b)] d/dx^nu`.
pub fn frame(g: &Matrix4<f64>) -> Matrix4<f64> {
    let l = g
        .cholesky()
        .expect("chart metric must be positive definite")
        .l();
    l.try_inverse().expect("invertible Cholesky factor").transpose()
}

/// Christoffel symbols `gamma[lambda][mu][nu]` by differencing the metric.
pub fn christoffel<F>(metric: &F, x: &Point4, h: f64, stencil: Stencil) -> [[[f64; 4]; 4]; 4]
where
    F: Fn(&Point4) -> Matrix4<f64>,
{
    let g = metric(x);
    let ginv = g.try_inverse().expect("invertible metric");
    let dg: [Matrix4<f64>; 4] = std::array::from_fn(|mu| diff(metric, x, mu, h, stencil));
    let mut gamma = [[[0.0; 4]; 4]; 4];
    for l in 0..4 {
        for m in 0..4 {
            for n in 0..4 {
                let mut s = 0.0;
                for sg in 0..4 {
                    s += ginv[(l, sg)] * (dg[m][(sg, n)] + dg[n][(sg, m)] - dg[sg][(m, n)]);
                }
                gamma[l][m][n] = 0.5 * s;
            }
        }
    }
    gamma
}

/// Levi-Civita connection forms in the Cholesky frame.
pub fn levi_civita<F>(metric: &F, x: &Point4, h: f64, stencil: Stencil) -> Conn
where
    F: Fn(&Point4) -> Matrix4<f64>,
{
    let e = frame(&metric(x));
    let einv = e.try_inverse().expect("invertible frame");
    let gamma = christoffel(metric, x, h, stencil);
    let frame_of = |y: &Point4| frame(&metric(y));
    std::array::from_fn(|mu| {
        let de = diff(&frame_of, x, mu, h, stencil);
        let gm = Matrix4::from_fn(|l, n| gamma[l][mu][n]);
        einv * (de + gm * e)
    })
}

/// Curvature 2-form `F[mu][nu] = d_mu A_nu - d_nu A_mu + [A_mu, A_nu]`.
pub fn curvature_of<C>(conn: &C, x: &Point4, h: f64, stencil: Stencil) -> [[Matrix4<f64>; 4]; 4]
where
    C: Fn(&Point4) -> Conn,
{
    let a = conn(x);
    let da: [[Matrix4<f64>; 4]; 4] = std::array::from_fn(|mu| {
        let d = |nu: usize| {
            let f = |y: &Point4| conn(y)[nu];
            diff(&f, x, mu, h, stencil)
        };
        std::array::from_fn(d)
    });
    std::array::from_fn(|mu| {
        std::array::from_fn(|nu| da[mu][nu] - da[nu][mu] + a[mu] * a[nu] - a[nu] * a[mu])
    })
}

/// Converts a chart-component curvature 2-form into tensor components
/// `R[c][d][a][b] = F(e_c, e_d)^a_b`.
pub fn to_frame_components(f: &[[Matrix4<f64>; 4]; 4], e: &Matrix4<f64>) -> Rank4 {
    let mut out = [[[[0.0; 4]; 4]; 4]; 4];
    for c in 0..4 {
        for d in 0..4 {
            let mut m = Matrix4::zeros();
            for mu in 0..4 {
                for nu in 0..4 {
                    let w = e[(mu, c)] * e[(nu, d)];
                    if w != 0.0 {
                        m += f[mu][nu] * w;
                    }
                }
            }
            for a in 0..4 {
                for b in 0..4 {
                    out[c][d][a][b] = m[(a, b)];
                }
            }
        }
    }
    out
}

/// Riemann tensor of a chart metric via connection forms, projected onto
/// algebraic curvature tensors. Also returns the size of the removed
/// (non-algebraic) discretization residue.
pub fn riemann<F>(metric: &F, x: &Point4, h: f64) -> (CurvatureTensor, f64)
where
    F: Fn(&Point4) -> Matrix4<f64>,
{
    let conn = |y: &Point4| levi_civita(metric, y, h, Stencil::Fourth);
    let f = curvature_of(&conn, x, h, Stencil::Fourth);
    let e = frame(&metric(x));
    CurvatureTensor::project(&to_frame_components(&f, &e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere_metric(x: &Point4) -> Matrix4<f64> {
        let s1 = x[0].sin();
        let s2 = x[1].sin();
        let s3 = x[2].sin();
        Matrix4::from_diagonal(&nalgebra::Vector4::new(
            1.0,
            s1 * s1,
            s1 * s1 * s2 * s2,
            s1 * s1 * s2 * s2 * s3 * s3,
        ))
    }

    #[test]
    fn sphere_curvature_by_connection_forms() {
        let x = [1.1, 0.7, 2.0, 0.3];
        let (r, removed) = riemann(&sphere_metric, &x, 1e-3);
        let exact = CurvatureTensor::constant_curvature(1.0);
        let mut diff = 0.0f64;
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    for l in 0..4 {
                        diff = diff.max((r.get(i, j, k, l) - exact.get(i, j, k, l)).abs());
                    }
                }
            }
        }
        assert!(diff < 1e-7, "diff {diff}");
        assert!(removed < 1e-6);
    }

    #[test]
    fn flat_metric_has_zero_connection() {
        let flat = |_: &Point4| Matrix4::identity();
        let a = levi_civita(&flat, &[0.1, 0.2, 0.3, 0.4], 1e-3, Stencil::Second);
        assert!(a.iter().all(|m| m.norm() == 0.0));
    }
}
