use std::f64::consts::TAU;
use std::sync::Arc;

use curvreg::fdgeom::{christoffel, frame, to_frame_components, Point4, Stencil};
use curvreg::models::{
    random_points, BumpMetric, ChartPoint, FlatTorus, KillingField, KillingValue, Manifold,
    WarpedCircle,
};
use curvreg::transgression::{
    blended_k_form, k_form, levi_civita_curvature, modified_curvature, point_report, stokes_check,
    transgression_density, ChartBox, InvariantPolynomial, Structure, TransgressionOptions,
};
use nalgebra::{Matrix4, Vector4};

fn opts() -> TransgressionOptions {
    TransgressionOptions::default()
}

fn warped() -> WarpedCircle {
    WarpedCircle::new(0.3, 1.0).unwrap()
}

/// Points away from the polar singularities of the chart.
fn interior_points(m: &dyn Manifold, n: usize, seed: u64) -> Vec<ChartPoint> {
    random_points(m, 4 * n, seed, 0.0)
        .into_iter()
        .filter(|p| m.chart_margin(&p.p4()) > 0.2)
        .take(n)
        .collect()
}

/// Killing field from constant coordinate components, with `nabla v` from
/// the Christoffel symbols.
fn coordinate_field(model: Arc<dyn Manifold>, axis: usize) -> KillingField {
    KillingField::new(
        format!("d{axis}"),
        Arc::new(move |x: &Point4| {
            let g = model.metric(x);
            let e = frame(&g);
            let einv = e.try_inverse().unwrap();
            let gam = christoffel(&|y: &Point4| model.metric(y), x, 1e-4, Stencil::Fourth);
            let coord = Vector4::from_fn(|i, _| if i == axis { 1.0 } else { 0.0 });
            // Coordinate components of nabla_{d_nu} v.
            let dv = Matrix4::from_fn(|l, nu| gam[l][nu][axis]);
            KillingValue {
                coord,
                frame: einv * coord,
                nabla: einv * dv * e,
                norm: g[(axis, axis)].sqrt(),
            }
        }),
    )
}

#[test]
fn flat_translations_give_nothing() {
    let t = FlatTorus::new(vec![1.0; 4]).unwrap();
    let s = [Structure::of_model(&t)];
    let p = ChartPoint::new(vec![0.3, 0.4, 0.5, 0.6]);
    let k = k_form(&t, &s[0].fields, &p, &opts()).unwrap();
    assert!(k.comps.iter().all(|m| m.norm() == 0.0));
    let tp = transgression_density(&t, &s, &p, &opts()).unwrap();
    assert!(tp.comps.iter().all(|c| *c == 0.0));
    let region = ChartBox { lo: [0.1; 4], hi: [0.6; 4], periodic: [false; 4] };
    let rep = stokes_check(&t, &s, &region, 2, &opts()).unwrap();
    assert_eq!(rep.interior, 0.0);
    assert_eq!(rep.boundary, 0.0);
}

#[test]
fn parallel_circle_gives_zero_k() {
    let m = WarpedCircle::new(0.0, 1.0).unwrap();
    let s = [Structure::of_model(&m)];
    for p in interior_points(&m, 5, 1) {
        let k = k_form(&m, &s[0].fields, &p, &opts()).unwrap();
        assert!(k.comps.iter().all(|c| c.norm() < 1e-15));
        let f = levi_civita_curvature(&m, &p, &opts()).unwrap();
        let ft = modified_curvature(&m, &s, &p, &opts()).unwrap();
        for mu in 0..4 {
            for nu in 0..4 {
                assert!((f.comps[mu][nu] - ft.comps[mu][nu]).norm() < 1e-12);
            }
        }
    }
}

#[test]
fn warped_k_contracts_to_nabla_v() {
    let w = warped();
    let s = [Structure::of_model(&w)];
    for p in interior_points(&w, 10, 2) {
        let k = k_form(&w, &s[0].fields, &p, &opts()).unwrap();
        assert!(k.skew_residual() <= 1e-10);
        let v = s[0].fields[0].at(&p.p4());
        assert!(v.nabla.norm() > 0.0 || p.coords[1].sin() == 0.0);
        assert!((k.contract(&v.coord) - v.nabla).norm() <= 1e-8);
    }
}

#[test]
fn levi_civita_curvature_matches_tensor() {
    let w = warped();
    let b = BumpMetric::new(2.0, 0.5, 0.5).unwrap();
    let models: [&dyn Manifold; 2] = [&w, &b];
    for m in models {
        for p in interior_points(m, 5, 3) {
            let f = levi_civita_curvature(m, &p, &opts()).unwrap();
            let e = frame(&m.metric(&p.p4()));
            let comps = to_frame_components(&f.comps, &e);
            let exact = m.curvature_at(&p).unwrap();
            let scale = exact.norm_sq().sqrt().max(1.0);
            for i in 0..4 {
                for j in 0..4 {
                    for k in 0..4 {
                        for l in 0..4 {
                            let d = (comps[i][j][k][l] - exact.get(i, j, k, l)).abs();
                            assert!(d <= 1e-6 * scale, "{}: {d}", m.name());
                        }
                    }
                }
            }
            let dens = f.four_form(InvariantPolynomial::Euler) / m.metric(&p.p4()).determinant().sqrt();
            let want = curvreg::tensor4::characteristic_densities(&curvreg::tensor4::decompose(&exact)).pchi;
            assert!((dens - want).abs() <= 1e-6 * scale * scale);
        }
    }
}

#[test]
fn warped_modification_has_null_vector() {
    let w = warped();
    let s = [Structure::of_model(&w)];
    for poly in [InvariantPolynomial::Energy, InvariantPolynomial::Euler, InvariantPolynomial::Signature] {
        let o = TransgressionOptions { polynomial: poly, ..opts() };
        for p in interior_points(&w, 6, 4) {
            let r = point_report(&w, &s, &p, &o).unwrap();
            assert!(r.contraction_residual <= 1e-8);
            assert!(r.null_connection <= 1e-6, "{r:?}");
            assert!(r.null_curvature <= 1e-6, "{r:?}");
            assert!(r.modified_density <= 1e-6, "{r:?}");
            assert!(r.transgression.scaled.is_finite());
            for (a, b) in r.transgression.pk_dk.iter().zip(&r.transgression.pk_dk_expansion) {
                assert!((a - b).abs() <= 1e-6 * (1.0 + a.abs()));
            }
        }
    }
}

/// `dTP` at `x` by a fourth-order difference of the transgression form.
fn d_tp(m: &dyn Manifold, s: &[Structure], x: &Point4, h: f64, o: &TransgressionOptions) -> f64 {
    let tp = |y: Point4| transgression_density(m, s, &ChartPoint::new(y.to_vec()), o).unwrap().comps;
    (0..4)
        .map(|mu| {
            let at = |t: f64| {
                let mut y = *x;
                y[mu] += t * h;
                tp(y)[mu]
            };
            let d = (at(-2.0) - at(2.0) + 8.0 * (at(1.0) - at(-1.0))) / (12.0 * h);
            if mu % 2 == 0 { d } else { -d }
        })
        .sum()
}

#[test]
fn transgression_identity_holds_pointwise() {
    let w = warped();
    let o = opts();
    // A weight that depends on theta breaks the invariance, so the modified
    // form no longer vanishes, but the identity does not care.
    let mut tilted = Structure::of_model(&w);
    tilted.weight = Some(Arc::new(|x: &Point4| 0.6 + 0.3 * x[0].sin() * x[1].cos()));
    for s in [vec![Structure::of_model(&w)], vec![tilted]] {
        for p in interior_points(&w, 3, 5) {
            let x = p.p4();
            let g = w.metric(&x).determinant().sqrt();
            let f = levi_civita_curvature(&w, &p, &o).unwrap().four_form(o.polynomial);
            let ft = modified_curvature(&w, &s, &p, &o).unwrap().four_form(o.polynomial);
            let dtp = d_tp(&w, &s, &x, 1e-2, &o);
            let scale = f.abs().max(ft.abs()).max(1.0);
            assert!((ft - (f + dtp)).abs() <= 1e-5 * scale, "{ft} vs {f} + {dtp} (density scale {g})");
        }
    }
}

#[test]
fn transgression_scales_with_metric() {
    let p = ChartPoint::new(vec![0.3, 1.1, 1.2, 0.7]);
    let base = {
        let w = warped();
        transgression_density(&w, &[Structure::of_model(&w)], &p, &opts()).unwrap()
    };
    assert!(base.norm > 0.0);
    for lam in [0.5, 2.0] {
        let w = WarpedCircle::new(0.3, lam).unwrap();
        let tp = transgression_density(&w, &[Structure::of_model(&w)], &p, &opts()).unwrap();
        assert!((tp.norm / base.norm - lam.powi(-3)).abs() <= 1e-6 * lam.powi(-3));
        assert!((tp.scaled / base.scaled - 1.0).abs() <= 1e-3);
    }
}

#[test]
fn transgression_bound_constant_is_finite() {
    let w = warped();
    let s = [Structure::of_model(&w)];
    let c = interior_points(&w, 20, 6)
        .iter()
        .map(|p| transgression_density(&w, &s, p, &opts()).unwrap().scaled)
        .fold(0.0, f64::max);
    assert!(c.is_finite() && c > 0.0);
}

#[test]
fn stokes_residual_converges_on_a_tube() {
    let w = warped();
    let s = [Structure::of_model(&w)];
    let region = ChartBox { lo: [0.0, 1.0, 1.0, 0.5], hi: [TAU, 1.4, 1.4, 0.9], periodic: [true, false, false, false] };
    let reps: Vec<_> = [2, 4, 8].iter().map(|n| stokes_check(&w, &s, &region, *n, &opts()).unwrap()).collect();
    assert!(reps[0].interior.abs() > 0.1);
    for pair in reps.windows(2) {
        assert!(pair[1].residual <= 0.5 * pair[0].residual, "{reps:?}");
    }
}

#[test]
fn errors() {
    let w = warped();
    let s = [Structure::of_model(&w)];
    let region = ChartBox { lo: [0.0, 1.4, 1.0, 0.5], hi: [TAU, 1.0, 1.4, 0.9], periodic: [true, false, false, false] };
    assert!(stokes_check(&w, &s, &region, 2, &opts()).is_err());
    let region = ChartBox { lo: [0.0, 1.0, 1.0, 0.5], hi: [TAU, 1.4, 1.4, 0.9], periodic: [true, true, false, false] };
    let err = stokes_check(&w, &s, &region, 2, &opts()).unwrap_err().to_string();
    assert!(err.contains("not closed"), "{err}");

    let near_pole = ChartPoint::new(vec![0.1, 1e-4, 1.0, 1.0]);
    assert_eq!(modified_curvature(&w, &s, &near_pole, &opts()).unwrap_err().module(), "transgression");

    let dead = KillingField::new(
        "dead",
        Arc::new(|_: &Point4| KillingValue {
            coord: Vector4::zeros(),
            frame: Vector4::zeros(),
            nabla: Matrix4::zeros(),
            norm: 0.0,
        }),
    );
    let p = ChartPoint::new(vec![0.1, 1.0, 1.0, 1.0]);
    let err = k_form(&w, &[dead], &p, &opts()).unwrap_err().to_string();
    assert!(err.contains("polarization"), "{err}");
    let twice = vec![s[0].fields[0].clone(), s[0].fields[0].clone()];
    assert!(k_form(&w, &twice, &p, &opts()).is_err());
}

#[test]
fn two_chart_blend_keeps_the_common_null_vector() {
    let w: Arc<dyn Manifold> = Arc::new(warped());
    let theta = w.killing_fields().remove(0);
    let phi = coordinate_field(w.clone(), 3);
    // Smooth step in chi from 0 to 1 across [1.0, 1.6].
    let step = |x: &Point4| {
        let t = ((x[1] - 1.0) / 0.6).clamp(0.0, 1.0);
        t * t * (3.0 - 2.0 * t)
    };
    let a = Structure { fields: vec![theta.clone()], weight: Some(Arc::new(move |x: &Point4| 1.0 - step(x))) };
    let b = Structure { fields: vec![theta, phi], weight: Some(Arc::new(step)) };
    let s = [a, b];
    let o = opts();
    let p = ChartPoint::new(vec![0.4, 1.3, 1.2, 0.3]);
    let k = blended_k_form(w.as_ref(), &s, &p, &o).unwrap();
    assert!(k.skew_residual() <= 1e-10);
    let r = point_report(w.as_ref(), &s, &p, &o).unwrap();
    assert!(r.null_curvature <= 1e-6, "{r:?}");
    assert!(r.modified_density <= 1e-6, "{r:?}");
    let region = ChartBox { lo: [0.0, 1.1, 1.0, 0.5], hi: [TAU, 1.5, 1.4, 0.9], periodic: [true, false, false, false] };
    let reps: Vec<_> = [2, 4].iter().map(|n| stokes_check(w.as_ref(), &s, &region, *n, &o).unwrap()).collect();
    assert!(reps[1].residual <= 0.5 * reps[0].residual, "{reps:?}");
}
