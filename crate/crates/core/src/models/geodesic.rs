//! Geodesic shooting: fixed-step RK4 integration plus damped Newton on the
//! initial velocity.

use nalgebra::{DMatrix, DVector};

/// Integrates `y' = f(y)` over `t in [0, 1]` with `steps` RK4 steps.
pub fn rk4<F>(f: &F, y0: &[f64], steps: usize) -> Vec<f64>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = y0.len();
    let h = 1.0 / steps as f64;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    for _ in 0..steps {
        f(&y, &mut k1);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        f(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        f(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + h * k3[i];
        }
        f(&tmp, &mut k4);
        for i in 0..n {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    y
}

/// Solves `residual(v) = 0` by Newton's method with a finite-difference
/// Jacobian and backtracking. Returns `None` when the residual norm does not
/// drop below `tol` within `max_iter` iterations.
pub fn newton<F>(residual: &F, guess: Vec<f64>, tol: f64, max_iter: usize) -> Option<Vec<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = guess.len();
    let mut v = guess;
    let mut r = residual(&v);
    let norm = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let mut rn = norm(&r);
    for _ in 0..max_iter {
        if !rn.is_finite() {
            return None;
        }
        if rn < tol {
            return Some(v);
        }
        let mut jac = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let h = 1e-7 * (1.0 + v[j].abs());
            let mut vp = v.clone();
            vp[j] += h;
            let mut vm = v.clone();
            vm[j] -= h;
            let rp = residual(&vp);
            let rm = residual(&vm);
            for i in 0..n {
                jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        let step = jac.lu().solve(&DVector::from_vec(r.clone()))?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..20 {
            let cand: Vec<f64> = v.iter().zip(step.iter()).map(|(a, s)| a - lambda * s).collect();
            let rc = residual(&cand);
            let rcn = norm(&rc);
            if rcn.is_finite() && rcn < rn {
                v = cand;
                r = rc;
                rn = rcn;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if rn < tol {
        Some(v)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rk4_harmonic_oscillator() {
        let f = |y: &[f64], d: &mut [f64]| {
            d[0] = y[1];
            d[1] = -y[0];
        };
        let y = rk4(&f, &[1.0, 0.0], 200);
        assert!((y[0] - 1f64.cos()).abs() < 1e-10);
    }

    #[test]
    fn newton_solves_smooth_system() {
        let r = |v: &[f64]| vec![v[0] * v[0] - 2.0, v[1] - v[0]];
        let v = newton(&r, vec![1.0, 0.0], 1e-12, 50).unwrap();
        assert!((v[0] - 2f64.sqrt()).abs() < 1e-10);
    }
}
