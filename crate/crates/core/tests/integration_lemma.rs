use std::time::Instant;

use curvreg::cover::memberships;
use curvreg::integration::{cover_decomposition, default_multiplicity, integration_report, thickened_sets};
use curvreg::models::{BumpMetric, FlatTorus, Manifold, RegionSpec, RoundSphere, SampledDomain};
use curvreg::radius::{radius_field, Cutoff, RadiusField, RadiusOptions};

fn field(m: &dyn Manifold, d: &SampledDomain, s: f64) -> RadiusField {
    radius_field(m, d, Cutoff(s), &RadiusOptions::default()).unwrap()
}

#[test]
fn flat_torus_has_no_energy() {
    let t = FlatTorus::new(vec![1.0; 4]).unwrap();
    let d = t.sample(&RegionSpec::Full, 0.25, 0, 0.0).unwrap();
    for s in [0.1, 0.3, 1.0] {
        let f = field(&t, &d, s);
        let sets = thickened_sets(&t, &f, &d, 0.5).unwrap();
        let rep = integration_report(&t, &f, &sets, 4.0, 1.0).unwrap();
        let exact = s.powi(-4);
        assert!((rep.lhs / exact - 1.0).abs() < 5e-3, "{} vs {exact}", rep.lhs);
        assert_eq!(rep.energy_term, 0.0);
        assert!(rep.c_measured.is_none());
        assert!(rep.holds_without_energy);
        let small = integration_report(&t, &f, &sets, 4.0, 0.5).unwrap();
        assert!(!small.holds_without_energy);
    }
}

#[test]
fn round_sphere_constant_below_one() {
    let start = Instant::now();
    let s4 = RoundSphere::new(1.0).unwrap();
    let c = vec![1.0, 0.0, 0.0, 0.0];
    let omega = s4.sample(&RegionSpec::Ball { center: c, radius: 0.5 }, 0.15, 0, 0.0).unwrap();
    let amb = s4.sample(&RegionSpec::Full, 0.3, 0, 0.0).unwrap();
    let f = field(&s4, &omega, 10.0);
    let sets = thickened_sets(&s4, &f, &amb, 1.0).unwrap();
    let rep = integration_report(&s4, &f, &sets, 4.0, 1.0).unwrap();
    let vol = omega.total_weight();
    assert!((rep.lhs / (24.0 * vol) - 1.0).abs() < 1e-3);
    assert!(rep.energy_term >= rep.lhs);
    let cm = rep.c_measured.unwrap();
    assert!(cm <= 1.05, "C = {cm}");
    assert!(rep.ratios.iter().all(|(_, r)| *r <= 1.0));
    assert!(start.elapsed().as_secs() < 60);
}

#[test]
fn containment_chain() {
    let s4 = RoundSphere::new(1.0).unwrap();
    let omega = s4
        .sample(&RegionSpec::Ball { center: vec![0.0, 1.0, 0.0, 0.0], radius: 0.4 }, 0.2, 0, 0.0)
        .unwrap();
    let amb = s4.sample(&RegionSpec::Full, 0.25, 3, 0.3).unwrap();
    for (s, mu) in [(0.3, 0.5), (0.6, 1.0), (10.0, 0.25)] {
        let f = field(&s4, &omega, s);
        let sets = thickened_sets(&s4, &f, &amb, mu).unwrap();
        assert!(sets.containment_violations().is_empty());
        // Omega itself lies in Omega^{R,s}: every domain point is its own center.
        let mut both = amb.clone();
        both.points.extend(omega.points.iter().cloned());
        both.weights.extend(&omega.weights);
        let own = thickened_sets(&s4, &f, &both, mu).unwrap();
        assert!(own.containment_violations().is_empty());
        assert!(own.in_omega_r_s[amb.len()..].iter().all(|b| *b));
    }
}

#[test]
fn unit_mu_coincides() {
    let s4 = RoundSphere::new(1.0).unwrap();
    let omega = s4
        .sample(&RegionSpec::Ball { center: vec![0.0, 0.0, 1.0, 0.0], radius: 0.5 }, 0.2, 0, 0.0)
        .unwrap();
    let amb = s4.sample(&RegionSpec::Full, 0.3, 1, 0.2).unwrap();
    let f = field(&s4, &omega, 0.4);
    let sets = thickened_sets(&s4, &f, &amb, 1.0).unwrap();
    assert_eq!(sets.in_omega_mu_r_s, sets.in_omega_r_s);
    assert_eq!(sets.in_omega_mu_s, sets.in_omega_s);
}

#[test]
fn thickening_shrinks_to_domain() {
    let t = FlatTorus::new(vec![1.0; 4]).unwrap();
    let amb = t.sample(&RegionSpec::Full, 0.125, 0, 0.0).unwrap();
    let omega = t
        .sample(&RegionSpec::Ball { center: vec![0.5; 4], radius: 0.2 }, 0.125, 0, 0.0)
        .unwrap();
    let mut last = usize::MAX;
    for s in [0.3, 0.1, 0.03, 1e-6] {
        let f = field(&t, &omega, s);
        let n = thickened_sets(&t, &f, &amb, 1.0).unwrap().in_omega_s.iter().filter(|b| **b).count();
        assert!(n <= last);
        last = n;
    }
    // Only ambient points that coincide with domain points survive.
    let exact = amb.points.iter().filter(|p| omega.points.contains(p)).count();
    assert_eq!(last, exact);
}

#[test]
fn rejects_bad_parameters() {
    let t = FlatTorus::new(vec![1.0; 4]).unwrap();
    let d = t.sample(&RegionSpec::Full, 0.5, 0, 0.0).unwrap();
    let f = field(&t, &d, 0.3);
    assert!(thickened_sets(&t, &f, &d, 0.0).is_err());
    assert!(thickened_sets(&t, &f, &d, 1.5).is_err());
    let sets = thickened_sets(&t, &f, &d, 1.0).unwrap();
    assert!(integration_report(&t, &f, &sets, 0.0, 1.0).is_err());
    let other = field(&t, &d, 0.2);
    assert!(integration_report(&t, &other, &sets, 4.0, 1.0).is_err());
    // A small ambient ball cannot hold the thickening of the whole torus.
    let ball = t.sample(&RegionSpec::Ball { center: vec![0.5; 4], radius: 0.2 }, 0.1, 0, 0.0).unwrap();
    let inner = field(&t, &ball, 0.3);
    assert!(thickened_sets(&t, &inner, &ball, 1.0).is_err());
}

#[test]
fn lhs_nonincreasing_in_s() {
    let b = BumpMetric::new(2.0, 0.5, 0.5).unwrap();
    let c = b.center().to_vec();
    let d = b.sample(&RegionSpec::Ball { center: c, radius: 0.6 }, 0.2, 0, 0.0).unwrap();
    let mut last = f64::INFINITY;
    for s in [0.05, 0.1, 0.3, 0.6, 1.2] {
        let f = field(&b, &d, s);
        let lhs: f64 = d.weights.iter().zip(&f.values).map(|(w, r)| w * r.powi(-4)).sum();
        assert!(lhs <= last * (1.0 + 1e-3), "s = {s}");
        last = lhs;
    }
}

#[test]
fn bump_constant_is_refinement_stable() {
    // A wide, shallow bump keeps the curvature resolved on a coarse grid.
    let b = BumpMetric::new(2.0, 0.3, 0.9).unwrap();
    let s = 0.5;
    let mut cs = Vec::new();
    for res in [0.25, 0.125] {
        let d = b.sample(&RegionSpec::Full, res, 0, 0.0).unwrap();
        let f = field(&b, &d, s);
        let sets = thickened_sets(&b, &f, &d, 0.5).unwrap();
        let rep = integration_report(&b, &f, &sets, 4.0, 1.0).unwrap();
        assert!(rep.energy_term > 0.0);
        cs.push(rep.c_measured.unwrap());
    }
    assert!((cs[1] / cs[0] - 1.0).abs() < 0.05, "{cs:?}");
}

#[test]
fn cover_decomposition_matches_direct_quadrature() {
    let b = BumpMetric::new(2.0, 0.5, 0.5).unwrap();
    let c = b.center().to_vec();
    let d = b.sample(&RegionSpec::Ball { center: c, radius: 0.6 }, 0.15, 0, 0.0).unwrap();
    let f = field(&b, &d, 0.5);
    let (m, cover) = default_multiplicity(&b, &f, 1.0).unwrap();
    assert!(m >= 1.0);
    let members = memberships(&b, &f, &cover.centers, &cover.radii).unwrap();
    assert!(members.iter().all(|h| !h.is_empty()));
    let via_cover = cover_decomposition(&f, &cover, &members, 4.0);
    let direct: f64 = d.weights.iter().zip(&f.values).map(|(w, r)| w * r.powi(-4)).sum();
    assert!((via_cover / direct - 1.0).abs() < 0.1, "{via_cover} vs {direct}");
}
