use curvreg::iteration::{
    run_iteration, schedule, series_sums, summed_mu_limit, Case, EnergyOracle, SampledOracle,
};
use curvreg::models::{
    random_points, BumpMetric, FlatTorus, HyperbolicSpace, Manifold, RoundSphere, SphereProduct, WarpedCircle,
};
use proptest::prelude::*;

/// Independent step sizes: `exp(i/4 * ln(33/40))`.
fn oracle_mu(i: usize) -> f64 {
    (i as f64 / 4.0 * (33.0f64 / 40.0).ln()).exp()
}

/// Compensated forward sum of `oracle_mu` until terms drop below rounding.
fn oracle_mu_sum() -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for i in 0.. {
        let t = oracle_mu(i);
        if t < 1e-20 * sum {
            break;
        }
        let y = t - comp;
        let next = sum + y;
        comp = (next - sum) - y;
        sum = next;
    }
    sum
}

#[test]
fn schedule_examples() {
    let s = schedule(Case::I, 2.0, 0).unwrap();
    assert_eq!(s.rho, vec![0.5]);
    assert!(s.mu.is_empty());
    let s = schedule(Case::I, 1.0, 8).unwrap();
    assert_eq!(s.mu[0], 1.0);
    assert_eq!(s.mu[4], 33.0 / 40.0);
    assert_eq!(s.rho.len(), 9);
    let s = schedule(Case::Ii, 1.0, 3).unwrap();
    assert_eq!(s.rho[0], 0.01);
    assert!((s.mu[0] - 0.04).abs() < 1e-17);
    assert!(schedule(Case::I, 0.0, 3).is_err());
    assert!(schedule(Case::Ii, f64::NAN, 3).is_err());
}

#[test]
fn series_limits_match_summation_oracle() {
    let direct = oracle_mu_sum();
    let s = series_sums(&schedule(Case::I, 1.0, 4000).unwrap());
    assert!((s.mu_limit - direct).abs() < 1e-12 * direct);
    assert!((s.mu_limit_summed - direct).abs() < 1e-12 * direct);
    assert!((s.mu_partial - direct).abs() < 1e-12 * direct);
    assert!(s.mu_limit_below_25);
    assert!((s.weighted_limit - 11.0).abs() < 1e-12);
    assert!((s.weighted_partial - 11.0).abs() < 1e-12, "{}", s.weighted_partial);
    assert!(s.identity_residual < 1e-14);
    // lim rho = 1 + 21.297..., two units above the stated 20.3.
    assert!((s.rho_limit - (1.0 + direct)).abs() < 1e-12);
    assert!((s.rho_limit - 22.297).abs() < 1e-3, "{}", s.rho_limit);
    assert!((s.stated_limit_difference - 1.997).abs() < 1e-3);
    assert!((s.rho_partial - s.rho_limit).abs() < 1e-12);
}

#[test]
fn case_two_stays_inside_r() {
    for r in [0.1, 1.0, 7.0] {
        let s = series_sums(&schedule(Case::Ii, r, 50).unwrap());
        assert!((s.rho_limit / r - (0.01 + oracle_mu_sum() / 25.0)).abs() < 1e-12);
        assert!(s.rho_limit < r);
        assert!(s.rho_partial < s.rho_limit);
    }
}

proptest! {
    #[test]
    fn weighted_terms_are_powers_of_ten_elevenths(i in 0usize..400) {
        let mu = schedule(Case::I, 1.0, i + 1).unwrap().mu[i];
        let lhs = 0.75f64.powi(i as i32) * mu.powi(-4);
        prop_assert!((lhs - (10.0f64 / 11.0).powi(i as i32)).abs() < 1e-14);
        prop_assert!((mu / oracle_mu(i) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn radii_strictly_increase(scale in 1e-3f64..1e3, t in 0usize..300, two in any::<bool>()) {
        let case = if two { Case::Ii } else { Case::I };
        let s = schedule(case, scale, t).unwrap();
        prop_assert_eq!(s.rho.len(), t + 1);
        prop_assert!(s.rho.windows(2).all(|w| w[1] > w[0]));
        let sums = series_sums(&s);
        prop_assert!(sums.rho_partial < sums.rho_limit * (1.0 + 1e-12));
    }
}

#[test]
fn flat_energies_vanish() {
    let t = FlatTorus::new(vec![1.0; 4]).unwrap();
    let s = schedule(Case::Ii, 0.5, 10).unwrap();
    let tr = run_iteration(&t, &[0.5; 4], &s, &SampledOracle::default()).unwrap();
    assert!(tr.steps.iter().all(|s| s.averages.energy == 0.0 && s.averages.csc_weyl == 0.0));
    assert!(tr.steps.iter().filter_map(|s| s.residual).all(|r| r == 0.0));
    assert_eq!(tr.measured_constant, 0.0);
    assert!(tr.tail_negligible);
}

#[test]
fn round_sphere_closed_forms() {
    let rho = 1.3;
    let s4 = RoundSphere::new(rho).unwrap();
    let c = [1.0, 0.0, 0.0, 0.0];
    let s = schedule(Case::I, 1.0 / rho, 6).unwrap();
    let tr = run_iteration(&s4, &c, &s, &SampledOracle::default()).unwrap();
    // rho_3 = 3.9... rho exceeds the diameter pi rho.
    assert_eq!(tr.requested, 6);
    assert_eq!(tr.schedule.truncation, 2);
    for st in &tr.steps {
        assert!((st.averages.energy * rho.powi(4) / 24.0 - 1.0).abs() < 1e-9);
        assert!((st.averages.csc_weyl * rho.powi(4) / 48.0 - 1.0).abs() < 1e-9);
    }
    assert!(tr.measured_constant <= 1.0);
    assert!(tr.steps.iter().filter_map(|s| s.residual).all(|r| r <= 0.0));
    assert!(tr.chained_bound >= tr.steps[0].averages.energy);
}

#[test]
fn long_schedule_has_negligible_tail() {
    let h = HyperbolicSpace::new(0.8).unwrap();
    let oracle = SampledOracle { points_per_radius: 2.0, seed: 0 };
    let short = run_iteration(&h, &[0.0; 4], &schedule(Case::Ii, 1.0, 5).unwrap(), &oracle).unwrap();
    assert!(!short.tail_negligible);
    let long = run_iteration(&h, &[0.0; 4], &schedule(Case::Ii, 1.0, 70).unwrap(), &oracle).unwrap();
    assert_eq!(long.schedule.truncation, 70);
    assert!(long.tail < 1e-6 && long.tail_negligible, "{}", long.tail);
}

#[test]
fn step_constant_is_stable_in_starting_radius() {
    let bump = BumpMetric::new(2.0, 0.5, 0.5).unwrap();
    let models: Vec<(Box<dyn Manifold>, Vec<f64>)> = vec![
        (Box::new(RoundSphere::new(1.3).unwrap()), vec![]),
        (Box::new(HyperbolicSpace::new(0.8).unwrap()), vec![]),
        (Box::new(SphereProduct::new(1.0, 0.6).unwrap()), vec![]),
        (Box::new(WarpedCircle::new(0.3, 1.0).unwrap()), vec![]),
        (Box::new(bump.clone()), bump.center().to_vec()),
    ];
    for (m, c) in &models {
        let c = if c.is_empty() { random_points(m.as_ref(), 1, 3, 0.25)[0].coords.clone() } else { c.clone() };
        let cs: Vec<f64> = [0.5, 1.0]
            .iter()
            .map(|r| {
                run_iteration(m.as_ref(), &c, &schedule(Case::Ii, *r, 6).unwrap(), &SampledOracle::default())
                    .unwrap()
                    .measured_constant
            })
            .collect();
        let top = cs[0].max(cs[1]);
        assert!((cs[0] - cs[1]).abs() <= 0.1 * top, "{}: {cs:?}", m.name());
    }
}

#[test]
fn trace_csv_has_one_row_per_radius() {
    let s4 = RoundSphere::new(1.0).unwrap();
    let tr = run_iteration(&s4, &[0.0, 1.0, 0.0, 0.0], &schedule(Case::Ii, 1.0, 4).unwrap(), &SampledOracle::default())
        .unwrap();
    let mut buf = Vec::new();
    tr.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "i,rho,mu,energy,csc_weyl,residual");
    assert_eq!(lines.len(), 6);
    assert!(lines[5].ends_with(','));
}

#[test]
fn oracle_rejects_points_off_chart() {
    let w = WarpedCircle::new(0.3, 1.0).unwrap();
    let s = schedule(Case::Ii, 0.5, 2).unwrap();
    assert!(run_iteration(&w, &[0.0, -5.0, 0.0, 0.0], &s, &SampledOracle::default()).is_err());
    assert!(SampledOracle::default().averages(&w, &[0.0, -5.0, 0.0, 0.0], 0.1).is_err());
}
