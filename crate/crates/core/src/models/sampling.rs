//! Cell decompositions with exact cell volumes for round spheres, geodesic
//! balls in space forms, and coordinate boxes.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// `int_a^b sin^k(t) dt` for `k <= 3`.
pub fn sin_power_integral(k: u32, a: f64, b: f64) -> f64 {
    let anti = |t: f64| match k {
        0 => t,
        1 => -t.cos(),
        2 => 0.5 * t - 0.25 * (2.0 * t).sin(),
        3 => -t.cos() + t.cos().powi(3) / 3.0,
        _ => unreachable!("sin power {k} not supported"),
    };
    anti(b) - anti(a)
}

/// `int_a^b sinh^3(t) dt`.
pub fn sinh3_integral(a: f64, b: f64) -> f64 {
    let anti = |t: f64| t.cosh().powi(3) / 3.0 - t.cosh();
    // Expanded form loses precision near zero; use a series for tiny arguments.
    let small = |t: f64| {
        let t2 = t * t;
        t2 * t2 / 4.0 * (1.0 + t2 / 3.0 + t2 * t2 * 13.0 / 240.0)
    };
    if b < 1e-2 {
        small(b) - small(a)
    } else {
        anti(b) - anti(a)
    }
}

/// One cell of a decomposition of the unit sphere `S^m` in hyperspherical
/// coordinates `(psi_1, .., psi_{m-1}, phi)`.
#[derive(Debug, Clone)]
pub struct SphereCell {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Volume of the cell on the unit sphere.
    pub volume: f64,
}

impl SphereCell {
    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    /// Center, or a uniformly jittered point when `jitter > 0`.
    pub fn point(&self, jitter: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| {
                let mid = 0.5 * (a + b);
                if jitter > 0.0 {
                    mid + jitter * (rng.gen::<f64>() - 0.5) * (b - a)
                } else {
                    mid
                }
            })
            .collect()
    }
}

/// Quasi-uniform cells on the unit `S^m`; ring subdivision counts follow the
/// local ring radius scaled by `radius` so cells have diameter about `res`.
pub fn sphere_cells(m: usize, radius: f64, res: f64) -> Vec<SphereCell> {
    assert!(m >= 1);
    let mut out = Vec::new();
    let mut lo = Vec::with_capacity(m);
    let mut hi = Vec::with_capacity(m);
    fn rec(
        m: usize,
        level: usize,
        ring: f64,
        res: f64,
        vol: f64,
        lo: &mut Vec<f64>,
        hi: &mut Vec<f64>,
        out: &mut Vec<SphereCell>,
    ) {
        if level + 1 == m {
            let n = ((2.0 * std::f64::consts::PI * ring / res).ceil() as usize).max(1);
            let w = 2.0 * std::f64::consts::PI / n as f64;
            for i in 0..n {
                lo.push(i as f64 * w);
                hi.push((i + 1) as f64 * w);
                out.push(SphereCell {
                    lo: lo.clone(),
                    hi: hi.clone(),
                    volume: vol * w,
                });
                lo.pop();
                hi.pop();
            }
            return;
        }
        let power = (m - 1 - level) as u32;
        let n = ((std::f64::consts::PI * ring / res).ceil() as usize).max(1);
        let w = std::f64::consts::PI / n as f64;
        for i in 0..n {
            let a = i as f64 * w;
            let b = a + w;
            let f = sin_power_integral(power, a, b);
            lo.push(a);
            hi.push(b);
            rec(m, level + 1, ring * (0.5 * (a + b)).sin(), res, vol * f, lo, hi, out);
            lo.pop();
            hi.pop();
        }
    }
    rec(m, 0, radius, res, 1.0, &mut lo, &mut hi, &mut out);
    out
}

/// Unit vector in `R^{m+1}` for hyperspherical angles of `S^m`.
pub fn angles_to_unit(angles: &[f64]) -> Vec<f64> {
    let m = angles.len();
    let mut v = vec![0.0; m + 1];
    let mut s = 1.0;
    for (i, a) in angles.iter().enumerate() {
        if i + 1 == m {
            v[i] = s * a.cos();
            v[i + 1] = s * a.sin();
        } else {
            v[i] = s * a.cos();
            s *= a.sin();
        }
    }
    v
}

/// Inverse of [`angles_to_unit`]; the last angle lies in `[0, 2 pi)`.
pub fn unit_to_angles(v: &[f64]) -> Vec<f64> {
    let m = v.len() - 1;
    let mut out = vec![0.0; m];
    for i in 0..m {
        if i + 1 == m {
            let phi = v[i + 1].atan2(v[i]);
            out[i] = if phi < 0.0 {
                phi + 2.0 * std::f64::consts::PI
            } else {
                phi
            };
        } else {
            let tail: f64 = v[i + 1..].iter().map(|x| x * x).sum::<f64>().sqrt();
            out[i] = tail.atan2(v[i]);
        }
    }
    out
}

/// Orthonormal basis of the orthogonal complement of unit vector `p`.
pub fn complement_basis(p: &[f64]) -> Vec<Vec<f64>> {
    let n = p.len();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n - 1);
    for k in 0..n {
        let mut v = vec![0.0; n];
        v[k] = 1.0;
        let d: f64 = p[k];
        for (vi, pi) in v.iter_mut().zip(p) {
            *vi -= d * pi;
        }
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= d * bi;
            }
        }
        let nrm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nrm > 1e-6 {
            basis.push(v.iter().map(|x| x / nrm).collect());
        }
        if basis.len() == n - 1 {
            break;
        }
    }
    basis
}

/// Cells of a geodesic ball of radius `r` in a space form of dimension
/// `dim`, returned as `(t, direction, volume)` with `t` the geodesic
/// distance to the center and `direction` a unit vector in `R^dim`.
/// `ring` maps `t` to the radius of the distance sphere, `shell` integrates
/// `ring(t)^(dim-1)` over `[a, b]`.
pub fn polar_cells<Ring, Shell>(
    dim: usize,
    r: f64,
    res: f64,
    ring: Ring,
    shell: Shell,
    jitter: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<(f64, Vec<f64>, f64)>
where
    Ring: Fn(f64) -> f64,
    Shell: Fn(f64, f64) -> f64,
{
    let nt = ((r / res).ceil() as usize).max(1);
    let dt = r / nt as f64;
    let mut out = Vec::new();
    for i in 0..nt {
        let a = i as f64 * dt;
        let b = a + dt;
        let tc = 0.5 * (a + b);
        let shell_vol = shell(a, b);
        let rad = ring(tc);
        let cells = if dim == 1 {
            vec![
                SphereCell {
                    lo: vec![],
                    hi: vec![],
                    volume: 1.0,
                },
                SphereCell {
                    lo: vec![],
                    hi: vec![],
                    volume: 1.0,
                },
            ]
        } else {
            sphere_cells(dim - 1, rad.max(1e-300), res)
        };
        for (ci, c) in cells.iter().enumerate() {
            let t = if jitter > 0.0 {
                tc + jitter * (rng.gen::<f64>() - 0.5) * dt
            } else {
                tc
            };
            let dir = if dim == 1 {
                vec![if ci == 0 { 1.0 } else { -1.0 }]
            } else {
                angles_to_unit(&c.point(jitter, rng))
            };
            out.push((t, dir, shell_vol * c.volume));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn sphere_cells_have_exact_total_volume() {
        let v: f64 = sphere_cells(4, 1.0, 0.3).iter().map(|c| c.volume).sum();
        assert!((v - 8.0 * PI * PI / 3.0).abs() < 1e-12);
        let v3: f64 = sphere_cells(3, 1.0, 0.3).iter().map(|c| c.volume).sum();
        assert!((v3 - 2.0 * PI * PI).abs() < 1e-12);
        let v2: f64 = sphere_cells(2, 1.0, 0.3).iter().map(|c| c.volume).sum();
        assert!((v2 - 4.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn angles_roundtrip() {
        let a = vec![0.4, 2.1, 1.3, 5.0];
        let v = angles_to_unit(&a);
        let n: f64 = v.iter().map(|x| x * x).sum();
        assert!((n - 1.0).abs() < 1e-14);
        let b = unit_to_angles(&v);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn sinh_integral_series_matches() {
        let a = sinh3_integral(0.0, 0.009_999);
        let b = crate::quadrature::integrate(|t| t.sinh().powi(3), 0.0, 0.009_999, 4, 8);
        assert!((a - b).abs() < 1e-13 * b);
    }
}
