mod common;

use std::f64::consts::PI;

use curvreg::models::{
    build, killing_residuals, random_points, ricci_eigenvalues, BumpMetric, ChartPoint,
    FlatTorus, HyperbolicSpace, Manifold, ModelSpec, RegionSpec, RoundSphere, SphereProduct,
    WarpedCircle,
};
use curvreg::tensor4::CurvatureTensor;
use proptest::prelude::*;

fn catalog() -> Vec<Box<dyn Manifold>> {
    vec![
        Box::new(FlatTorus::new(vec![0.3, 1.0, 1.0, 1.0]).unwrap()),
        Box::new(RoundSphere::new(1.3).unwrap()),
        Box::new(HyperbolicSpace::new(0.8).unwrap()),
        Box::new(SphereProduct::new(1.0, 0.6).unwrap()),
        Box::new(WarpedCircle::new(0.3, 1.0).unwrap()),
        Box::new(BumpMetric::new(2.0, 0.5, 0.5).unwrap()),
    ]
}

#[test]
fn curvature_matches_christoffel_oracle() {
    for m in catalog() {
        let pts = random_points(m.as_ref(), 100, 11, 0.25);
        assert_eq!(pts.len(), 100, "{}", m.name());
        let mut worst = 0.0f64;
        for p in &pts {
            let x = p.p4();
            let oracle = common::christoffel_riemann(&|y: &[f64; 4]| m.metric(y), &x, 1e-3);
            let rm = m.curvature_at(p).unwrap();
            let scale = common::max_abs(&oracle).max(common::max_abs(rm.components())).max(1.0);
            worst = worst.max(common::max_abs_diff(rm.components(), &oracle) / scale);
        }
        assert!(worst < 1e-6, "{}: relative deviation {worst:e}", m.name());
    }
}

#[test]
fn bump_is_curved_near_its_center() {
    let b = BumpMetric::new(2.0, 0.5, 0.5).unwrap();
    let p = ChartPoint::new(vec![1.2, 1.0, 1.0, 1.0]);
    let x = p.p4();
    let oracle = common::christoffel_riemann(&|y: &[f64; 4]| b.metric(y), &x, 1e-3);
    assert!(common::max_abs(&oracle) > 1.0);
    let far = ChartPoint::new(vec![0.1, 0.1, 0.1, 0.1]);
    assert_eq!(b.curvature_norm(&far).unwrap(), 0.0);
}

#[test]
fn sphere_curvature_is_constant() {
    let s = RoundSphere::new(2.0).unwrap();
    let p = ChartPoint::new(vec![0.4, 2.0, 1.0, 5.0]);
    let rm = s.curvature_at(&p).unwrap();
    let exact = CurvatureTensor::constant_curvature(0.25);
    assert!(common::max_abs_diff(rm.components(), exact.components()) < 1e-15);
}

#[test]
fn unwarped_product_has_only_sphere_block() {
    let w = WarpedCircle::new(0.0, 1.0).unwrap();
    let rm = w.curvature_at(&ChartPoint::new(vec![0.5, 1.0, 1.0, 1.0])).unwrap();
    for j in 1..4 {
        assert_eq!(rm.get(0, j, 0, j), 0.0);
        for k in 1..4 {
            if j != k {
                assert_eq!(rm.get(j, k, j, k), 1.0);
            }
        }
    }
}

#[test]
fn killing_fields_satisfy_killing_equation() {
    let models: Vec<Box<dyn Manifold>> = vec![
        Box::new(FlatTorus::new(vec![1.0, 2.0, 1.0, 1.0]).unwrap()),
        Box::new(WarpedCircle::new(0.3, 1.0).unwrap()),
        Box::new(WarpedCircle::new(0.6, 2.5).unwrap()),
    ];
    for m in models {
        let fields = m.killing_fields();
        assert!(!fields.is_empty());
        for p in random_points(m.as_ref(), 40, 5, 0.05) {
            for f in &fields {
                let (sym, fd) = killing_residuals(m.as_ref(), f, &p.p4(), 1e-3);
                assert!(sym < 1e-8, "{} symmetric part {sym}", m.name());
                assert!(fd < 1e-8, "{} covariant derivative mismatch {fd}", m.name());
                assert!(f.at(&p.p4()).norm > 0.0);
            }
        }
    }
}

#[test]
fn ricci_lower_bound_holds_at_samples() {
    for m in catalog() {
        let lam = m.ricci_bound();
        for p in random_points(m.as_ref(), 100, 3, 0.0) {
            let ev = ricci_eigenvalues(m.as_ref(), &p).unwrap();
            assert!(ev[0] >= -lam * lam - 1e-9, "{}: {} < -{}", m.name(), ev[0], lam * lam);
        }
    }
    let w = WarpedCircle::new(0.3, 1.0).unwrap();
    let south = ChartPoint::new(vec![0.0, PI - 1e-9, 1.0, 1.0]);
    let ev = ricci_eigenvalues(&w, &south).unwrap();
    assert!((ev[0] + w.ricci_bound().powi(2)).abs() < 1e-6);
}

#[test]
fn distance_examples() {
    let s = RoundSphere::new(1.0).unwrap();
    let p = ChartPoint::new(vec![0.0, 0.0, 0.0, 0.0]);
    let q = ChartPoint::new(vec![PI, 0.0, 0.0, 0.0]);
    assert!((s.distance(&p, &q).unwrap() - PI).abs() < 1e-12);
    assert_eq!(s.distance(&p, &p).unwrap(), 0.0);
    let t = FlatTorus::new(vec![1.0; 4]).unwrap();
    let o = ChartPoint::new(vec![0.0; 4]);
    let h = ChartPoint::new(vec![0.5, 0.0, 0.0, 0.0]);
    assert_eq!(t.distance(&o, &h).unwrap(), 0.5);
    let w = WarpedCircle::new(0.3, 1.0).unwrap();
    let a = ChartPoint::new(vec![1.0, 1.0, 1.0, 1.0]);
    assert_eq!(w.distance(&a, &a).unwrap(), 0.0);
}

#[test]
fn ball_volume_examples() {
    let t = FlatTorus::new(vec![1.0; 4]).unwrap();
    let o = ChartPoint::new(vec![0.0; 4]);
    assert!((t.ball_volume(&o, 0.3).unwrap() - 0.5 * PI * PI * 0.3f64.powi(4)).abs() < 1e-15);
    let h = HyperbolicSpace::new(1.0).unwrap();
    let c = ChartPoint::new(vec![0.1, 0.2, 0.0, 0.0]);
    let r = 1.7;
    let oracle = 2.0 * PI * PI * curvreg::quadrature::integrate(|t| t.sinh().powi(3), 0.0, r, 16, 10);
    assert!((h.ball_volume(&c, r).unwrap() - oracle).abs() < 1e-8 * oracle);
    let s = RoundSphere::new(1.0).unwrap();
    let oracle = 2.0 * PI * PI * curvreg::quadrature::integrate(|t| t.sin().powi(3), 0.0, r, 16, 10);
    assert!((s.ball_volume(&c, r).unwrap() - oracle).abs() < 1e-8 * oracle);
}

#[test]
fn small_balls_are_euclidean() {
    for m in catalog() {
        let p = random_points(m.as_ref(), 1, 2, 0.1).remove(0);
        let r = 2e-2;
        let v = m.ball_volume(&p, r).unwrap();
        let ratio = v / (0.5 * PI * PI * r.powi(4));
        assert!((ratio - 1.0).abs() < 0.05, "{}: {ratio}", m.name());
    }
}

#[test]
fn sampling_examples() {
    let s = RoundSphere::new(1.0).unwrap();
    let d = s.sample(&RegionSpec::Full, 0.1, 7, 0.5).unwrap();
    assert!((d.total_weight() / (8.0 * PI * PI / 3.0) - 1.0).abs() < 5e-3);
    let t = FlatTorus::new(vec![1.0; 4]).unwrap();
    let d = t.sample(&RegionSpec::Full, 0.1, 7, 0.0).unwrap();
    assert!((d.total_weight() - 1.0).abs() < 1e-6);
    let single = RegionSpec::Point {
        coords: vec![0.2, 0.2, 0.2, 0.2],
        cell_volume: 0.37,
    };
    let d = t.sample(&single, 0.1, 7, 0.0).unwrap();
    assert_eq!(d.len(), 1);
    assert_eq!(d.weights[0], 0.37);
    let coarse = RegionSpec::Ball {
        center: vec![0.2; 4],
        radius: 0.1,
    };
    let d = t.sample(&coarse, 0.5, 7, 0.0).unwrap();
    assert_eq!(d.len(), 1);
    assert!((d.weights[0] - t.ball_volume(&d.points[0], 0.1).unwrap()).abs() < 1e-15);
}

#[test]
fn sampling_is_deterministic() {
    let s = RoundSphere::new(1.0).unwrap();
    let a = s.sample(&RegionSpec::Full, 0.3, 9, 0.8).unwrap();
    let b = s.sample(&RegionSpec::Full, 0.3, 9, 0.8).unwrap();
    assert_eq!(a.points, b.points);
    assert_eq!(a.weights, b.weights);
}

#[test]
fn ball_samples_track_volumes() {
    for m in catalog() {
        let p = random_points(m.as_ref(), 1, 4, 0.4).remove(0);
        let r = 0.35;
        let d = m
            .sample(&RegionSpec::Ball { center: p.coords.clone(), radius: r }, r / 8.0, 1, 0.0)
            .unwrap();
        let v = m.ball_volume(&p, r).unwrap();
        assert!((d.total_weight() / v - 1.0).abs() < 0.05, "{}: {} vs {v}", m.name(), d.total_weight());
        assert!(d.weights.iter().all(|w| *w > 0.0));
    }
}

#[test]
fn catalog_builds_by_name() {
    let spec = ModelSpec {
        name: "warped".into(),
        params: [("a".to_string(), 0.3)].into_iter().collect(),
    };
    assert_eq!(build(&spec).unwrap().name(), "warped");
    let bad = ModelSpec {
        name: "sphere".into(),
        params: [("radius2".to_string(), 0.3)].into_iter().collect(),
    };
    assert!(build(&bad).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closed_form_triangle_inequality(seed in 0u64..10_000) {
        let models: Vec<Box<dyn Manifold>> = vec![
            Box::new(FlatTorus::new(vec![0.3, 1.0, 1.0, 1.0]).unwrap()),
            Box::new(RoundSphere::new(1.3).unwrap()),
            Box::new(HyperbolicSpace::new(0.8).unwrap()),
            Box::new(SphereProduct::new(1.0, 0.6).unwrap()),
        ];
        for m in models {
            let p = random_points(m.as_ref(), 3, seed, 0.0);
            let d = |a: usize, b: usize| m.distance(&p[a], &p[b]).unwrap();
            prop_assert!(d(0, 2) <= d(0, 1) + d(1, 2) + 1e-8);
            prop_assert!((d(0, 1) - d(1, 0)).abs() < 1e-12);
        }
    }

    #[test]
    fn volume_is_monotone(r in 0.01f64..2.5, dr in 0.001f64..0.3) {
        let models: Vec<Box<dyn Manifold>> = vec![
            Box::new(FlatTorus::new(vec![1.0, 2.0, 1.5, 1.0]).unwrap()),
            Box::new(RoundSphere::new(1.0).unwrap()),
            Box::new(HyperbolicSpace::new(1.0).unwrap()),
            Box::new(SphereProduct::new(1.0, 0.7).unwrap()),
        ];
        for m in models {
            let p = random_points(m.as_ref(), 1, 1, 0.0).remove(0);
            let full = m.diameter().unwrap_or(f64::INFINITY);
            if r + dr < full {
                prop_assert!(m.ball_volume(&p, r + dr).unwrap() > m.ball_volume(&p, r).unwrap());
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn shooting_triangle_inequality(seed in 0u64..10_000) {
        let models: Vec<Box<dyn Manifold>> = vec![
            Box::new(WarpedCircle::new(0.3, 1.0).unwrap()),
            Box::new(BumpMetric::new(2.0, 0.5, 0.5).unwrap()),
        ];
        for m in models {
            let p = random_points(m.as_ref(), 3, seed, 0.05);
            let d = |a: usize, b: usize| m.distance(&p[a], &p[b]).unwrap();
            prop_assert!(d(0, 2) <= d(0, 1) + d(1, 2) + 1e-7, "{}", m.name());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn embedding_is_short(seed in 0u64..10_000) {
        for m in catalog() {
            let p = random_points(m.as_ref(), 2, seed, 0.0);
            let e = |q: &ChartPoint| m.embedding(q);
            let eu = e(&p[0]).iter().zip(e(&p[1])).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let d = m.distance(&p[0], &p[1]).unwrap();
            prop_assert!(eu <= d * (1.0 + 1e-9) + 1e-12, "{}: {eu} > {d}", m.name());
        }
    }
}
