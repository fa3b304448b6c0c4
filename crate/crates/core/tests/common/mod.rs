#![allow(dead_code)]

use nalgebra::Matrix4;

pub type P4 = [f64; 4];

/// Christoffel symbols `G[r][m][n]` from a 4th-order difference of the metric.
fn christoffel<F: Fn(&P4) -> Matrix4<f64>>(g: &F, x: &P4, h: f64) -> [[[f64; 4]; 4]; 4] {
    let dg = |m: usize| {
        let at = |s: f64| {
            let mut y = *x;
            y[m] += s * h;
            g(&y)
        };
        (at(-2.0) - at(2.0) + (at(1.0) - at(-1.0)) * 8.0) / (12.0 * h)
    };
    let d: Vec<Matrix4<f64>> = (0..4).map(dg).collect();
    let gi = g(x).try_inverse().unwrap();
    let mut out = [[[0.0; 4]; 4]; 4];
    for r in 0..4 {
        for m in 0..4 {
            for n in 0..4 {
                out[r][m][n] = 0.5
                    * (0..4)
                        .map(|s| gi[(r, s)] * (d[m][(s, n)] + d[n][(s, m)] - d[s][(m, n)]))
                        .sum::<f64>();
            }
        }
    }
    out
}

/// Riemann tensor in the normalized coordinate frame of a diagonal metric,
/// `R[a][b][c][d] = <R(e_a, e_b) e_d, e_c>`, from `dGamma + Gamma Gamma`.
pub fn christoffel_riemann<F: Fn(&P4) -> Matrix4<f64>>(g: &F, x: &P4, h: f64) -> [[[[f64; 4]; 4]; 4]; 4] {
    let gam = christoffel(g, x, h);
    let dgam = |m: usize| {
        let at = |s: f64| {
            let mut y = *x;
            y[m] += s * h;
            christoffel(g, &y, h)
        };
        let (a, b, c, d) = (at(-2.0), at(-1.0), at(1.0), at(2.0));
        let mut o = [[[0.0; 4]; 4]; 4];
        for r in 0..4 {
            for i in 0..4 {
                for j in 0..4 {
                    o[r][i][j] = (a[r][i][j] - d[r][i][j] + 8.0 * (c[r][i][j] - b[r][i][j])) / (12.0 * h);
                }
            }
        }
        o
    };
    let dg: Vec<_> = (0..4).map(dgam).collect();
    let gx = g(x);
    // R^r_{s m n}
    let mut up = [[[[0.0; 4]; 4]; 4]; 4];
    for r in 0..4 {
        for s in 0..4 {
            for m in 0..4 {
                for n in 0..4 {
                    let mut v = dg[m][r][n][s] - dg[n][r][m][s];
                    for l in 0..4 {
                        v += gam[r][m][l] * gam[l][n][s] - gam[r][n][l] * gam[l][m][s];
                    }
                    up[r][s][m][n] = v;
                }
            }
        }
    }
    let scale: Vec<f64> = (0..4).map(|i| 1.0 / gx[(i, i)].sqrt()).collect();
    let mut out = [[[[0.0; 4]; 4]; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let low: f64 = (0..4).map(|r| gx[(c, r)] * up[r][d][a][b]).sum();
                    out[a][b][c][d] = low * scale[a] * scale[b] * scale[c] * scale[d];
                }
            }
        }
    }
    out
}

pub fn max_abs_diff(a: &[[[[f64; 4]; 4]; 4]; 4], b: &[[[[f64; 4]; 4]; 4]; 4]) -> f64 {
    let mut m = 0.0f64;
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                for l in 0..4 {
                    m = m.max((a[i][j][k][l] - b[i][j][k][l]).abs());
                }
            }
        }
    }
    m
}

pub fn max_abs(a: &[[[[f64; 4]; 4]; 4]; 4]) -> f64 {
    a.iter().flatten().flatten().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
}
