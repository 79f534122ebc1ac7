use chainapprox::chain::{kernel_lipschitz_constant, PairSelection};
use chainapprox::counterexamples::{
    adjacent_pairs, convergent_anchors, convergent_pair, divergent_outer_thirds, divergent_pair, neutral_index,
    neutral_pair, verify_divergent_separation, verify_regime_tightness, Family,
};
use chainapprox::prohorov::prohorov_distance;

fn upper_half_closed_form(n: usize, r: f64) -> f64 {
    let w: Vec<f64> = (0..n).map(|j| (1.0 - r).powi(j as i32)).collect();
    w[n / 2..].iter().sum::<f64>() / w.iter().sum::<f64>()
}

#[test]
fn divergent_rows_are_within_one_grid_step() {
    // 1/4 of the mass moves by 2^-n; nothing smaller than 2^-n can absorb it.
    let n = 8;
    let pair = divergent_pair(n).unwrap();
    let step = 2f64.powi(-(n as i32));
    for x in 0..pair.ideal.len() {
        let r = prohorov_distance(
            &pair.perturbed.row(x).unwrap(),
            &pair.ideal.row(x).unwrap(),
            pair.ideal.space(),
            1.0,
        )
        .unwrap();
        assert!(r.value <= step * (1.0 + 1e-12), "x = {x}: {}", r.value);
        assert!(r.value >= step * (1.0 - 1e-12));
    }
}

#[test]
fn divergent_separation_at_n10() {
    let r = verify_divergent_separation(10, 20, 0).unwrap();
    assert_eq!(r.perturbed_mass_quarters, 0.75);
    // Grid points in [0,1/3) U [2/3,1): ceil(1024/3) + (1024 - ceil(2048/3)).
    let count = 1024usize.div_ceil(3) + (1024 - 2048usize.div_ceil(3));
    assert_eq!(divergent_outer_thirds(10).len(), count);
    assert_eq!(r.ideal_mass_thirds, count as f64 / 1024.0);
    assert!((r.ideal_mass_thirds - 2.0 / 3.0).abs() <= 2f64.powi(-9));
    assert!(r.rho_to_stationary >= 1.0 / 12.0 - 2f64.powi(-8));
}

#[test]
fn divergent_separation_ignores_start() {
    let a = verify_divergent_separation(8, 16, 0).unwrap();
    let b = verify_divergent_separation(8, 16, 201).unwrap();
    assert_eq!(a.perturbed_mass_quarters, b.perturbed_mass_quarters);
    assert_eq!(a.rho_to_stationary, b.rho_to_stationary);
    assert!(verify_divergent_separation(8, 7, 0).is_err());
}

#[test]
fn divergent_tightness_at_n10() {
    let r = verify_regime_tightness(Family::Divergent, 10).unwrap();
    assert_eq!(r.tau1, 10);
    assert!(r.delta_actual <= 2f64.powi(-10) * (1.0 + 1e-12));
    assert!(r.gap >= 0.08);
    assert!(r.c > 1.0);
    assert!(r.delta_actual > r.delta_budget);
}

#[test]
fn convergent_tightness_at_n200() {
    let r = verify_regime_tightness(Family::Convergent, 200).unwrap();
    assert!((r.delta_actual - 3.0 / 200.0).abs() < 1e-12);
    assert!(r.tau1 <= 200);
    assert!(r.gap >= 0.05);
    assert!(r.delta_actual > r.delta_budget);
}

#[test]
fn convergent_anchors_at_n200() {
    let a = convergent_anchors(200).unwrap();
    assert!((a.ideal_upper_half - upper_half_closed_form(200, 1.0 / 200.0)).abs() < 1e-12);
    assert!((a.perturbed_upper_half - upper_half_closed_form(200, 4.0 / 200.0)).abs() < 1e-12);
    assert!(a.ideal_upper_half >= 0.22);
    assert!(a.perturbed_upper_half <= 0.15);
    assert!(a.tv_gap >= a.ideal_upper_half - a.perturbed_upper_half - 1e-15);
    assert!((a.ideal_event_probability - 0.238).abs() <= 0.02);
    assert!((a.perturbed_event_probability - 0.136).abs() <= 0.02);
}

#[test]
fn neutral_adjacent_layers_are_one_lipschitz() {
    let n = 30;
    let pair = neutral_pair(n).unwrap();
    let c = kernel_lipschitz_constant(&pair.ideal, 1.0, &PairSelection::Listed(adjacent_pairs(Family::Neutral, n))).unwrap();
    assert!(c <= 1.0 + 1e-12, "{c}");
}

#[test]
fn neutral_tightness_small() {
    let r = verify_regime_tightness(Family::Neutral, 10).unwrap();
    assert!(r.delta_actual <= 10.0 / 100.0 + 1e-12);
    assert!((r.lambda * r.c - 1.0).abs() <= 1e-12);
}

#[test]
fn geometry_matches_embedding() {
    let pair = convergent_pair(50).unwrap();
    let s = pair.ideal.space();
    let min = (0..50)
        .flat_map(|a| (a + 1..50).map(move |b| (a, b)))
        .map(|(a, b)| s.dist(a, b))
        .fold(f64::INFINITY, f64::min);
    // Chord 2n sin(pi/n) between neighbours.
    assert!((min - 100.0 * (std::f64::consts::PI / 50.0).sin()).abs() < 1e-9);
    assert!(min > 1.0);

    let n = 20;
    let pair = neutral_pair(n).unwrap();
    let s = pair.ideal.space();
    for i in 0..n - 1 {
        let d = s.dist(neutral_index(n, i, 3), neutral_index(n, i + 1, 3));
        assert!((d - 5.0 / (n * n) as f64).abs() < 1e-12);
    }
}

#[test]
fn all_ideal_chains_are_ergodic() {
    for (family, n) in [(Family::Convergent, 4), (Family::Convergent, 30), (Family::Neutral, 10), (Family::Divergent, 2), (Family::Divergent, 9)] {
        assert!(family.pair(n).unwrap().ideal.check_ergodic().is_ok(), "{family} {n}");
    }
}
