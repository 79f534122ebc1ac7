use chainapprox::chain::{
    coupled_divergence_simulation, kernel_lipschitz_constant, stationary_distribution, t_step_distribution,
    variation_threshold_time, ChainPair, FiniteMarkovChain, PairSelection, TAU1_THRESHOLD,
};
use chainapprox::counterexamples::{adjacent_pairs, convergent_pair, divergent_pair, neutral_pair, Family};
use chainapprox::prohorov::tv_distance;
use chainapprox::regime::t_epsilon;
use chainapprox::Error;

fn dense_power_rows(kernel: &[Vec<f64>], t: usize) -> Vec<Vec<f64>> {
    let n = kernel.len();
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for _ in 0..t {
        m = (0..n)
            .map(|i| (0..n).map(|j| (0..n).map(|k| m[i][k] * kernel[k][j]).sum()).collect())
            .collect();
    }
    m
}

fn naive_tau1(kernel: &[Vec<f64>], t_max: usize) -> (usize, Vec<f64>) {
    let n = kernel.len();
    let mut profile = Vec::new();
    let mut m = dense_power_rows(kernel, 0);
    for t in 0..=t_max {
        let mut worst = 0.0_f64;
        for a in 0..n {
            for b in a + 1..n {
                let d: f64 = 0.5 * m[a].iter().zip(&m[b]).map(|(x, y)| (x - y).abs()).sum::<f64>();
                worst = worst.max(d);
            }
        }
        profile.push(worst);
        if worst <= TAU1_THRESHOLD {
            return (t, profile);
        }
        m = (0..n)
            .map(|i| (0..n).map(|j| (0..n).map(|k| m[i][k] * kernel[k][j]).sum()).collect())
            .collect();
    }
    panic!("naive oracle did not mix");
}

#[test]
fn convergent_tau1_matches_dense_oracle() {
    let pair = convergent_pair(100).unwrap();
    let v = variation_threshold_time(&pair.ideal, 1000, TAU1_THRESHOLD).unwrap();
    let (tau1, profile) = naive_tau1(&pair.ideal.dense_kernel(), 1000);
    assert_eq!(v.tau1, tau1);
    assert_eq!(v.tau1, 100);
    for (a, b) in v.profile.iter().zip(&profile) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn convergent_stationary_matches_closed_form() {
    // Balance equations of the reset walk: pi_j proportional to (1 - r)^j.
    let n = 100;
    let pair = convergent_pair(n).unwrap();
    for (chain, r) in [(&pair.ideal, 1.0 / n as f64), (&pair.perturbed, 4.0 / n as f64)] {
        let pi = stationary_distribution(chain, 1e-14).unwrap();
        let raw: Vec<f64> = (0..n).map(|j| (1.0 - r).powi(j as i32)).collect();
        let z: f64 = raw.iter().sum();
        for (a, b) in pi.weights().iter().zip(&raw) {
            assert!((a - b / z).abs() < 1e-13);
        }
    }
}

#[test]
fn semigroup_property() {
    let pair = neutral_pair(10).unwrap();
    let chain = &pair.ideal;
    for (x, t, s) in [(0, 3, 4), (37, 10, 1), (99, 0, 7), (55, 6, 6)] {
        let direct = t_step_distribution(chain, x, t + s).unwrap();
        let mut mu = t_step_distribution(chain, x, t).unwrap().into_weights();
        for _ in 0..s {
            mu = chain.push_forward(&mu);
        }
        let l1: f64 = direct.weights().iter().zip(&mu).map(|(a, b)| (a - b).abs()).sum();
        assert!(l1 <= 1e-10);
    }
}

#[test]
fn stationary_is_a_fixed_point() {
    for pair in [convergent_pair(30).unwrap(), neutral_pair(10).unwrap(), divergent_pair(6).unwrap()] {
        let tol = 1e-12;
        let pi = stationary_distribution(&pair.ideal, tol).unwrap();
        let next = pair.ideal.push_forward(pi.weights());
        let r: f64 = next.iter().zip(pi.weights()).map(|(a, b)| (a - b).abs()).sum();
        assert!(r <= tol);
    }
}

#[test]
fn divergent_mixes_exactly() {
    let n = 8;
    let pair = divergent_pair(n).unwrap();
    let uniform = 1.0 / 256.0;
    for x in [0, 1, 77, 128, 255] {
        let mu = t_step_distribution(&pair.ideal, x, n).unwrap();
        assert!(mu.weights().iter().all(|&w| w == uniform));
    }
    let pi = stationary_distribution(&pair.ideal, 1e-14).unwrap();
    assert!(pi.weights().iter().all(|&w| (w - uniform).abs() < 1e-15));
}

#[test]
fn divergent_tau1_and_profile() {
    let pair = divergent_pair(10).unwrap();
    let v = variation_threshold_time(&pair.ideal, 20, TAU1_THRESHOLD).unwrap();
    assert_eq!(v.tau1, 10);
    // One deterministic bit survives n - 1 steps, so some pair is still disjoint.
    assert_eq!(v.profile[9], 1.0);
    assert_eq!(v.profile[10], 0.0);
    // Distance from stationarity drops from 1/2 to 0 between n - 1 and n.
    let pi = stationary_distribution(&pair.ideal, 1e-14).unwrap();
    let from_pi = |t: usize| -> f64 {
        (0..pair.ideal.len())
            .map(|x| tv_distance(&t_step_distribution(&pair.ideal, x, t).unwrap(), &pi).unwrap())
            .fold(0.0, f64::max)
    };
    assert!((from_pi(9) - 0.5).abs() < 1e-12);
    assert!(from_pi(10) < 1e-12);
}

#[test]
fn profiles_are_non_increasing() {
    for (family, n) in [(Family::Convergent, 40), (Family::Neutral, 10), (Family::Divergent, 7)] {
        let pair = family.pair(n).unwrap();
        let v = variation_threshold_time(&pair.ideal, 10_000, TAU1_THRESHOLD).unwrap();
        for w in v.profile.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{family}");
        }
    }
}

#[test]
fn horizon_exceeded_carries_profile() {
    let pair = convergent_pair(50).unwrap();
    match variation_threshold_time(&pair.ideal, 5, TAU1_THRESHOLD) {
        Err(Error::HorizonExceeded { t_max, profile, .. }) => {
            assert_eq!(t_max, 5);
            assert_eq!(profile.len(), 6);
        }
        other => panic!("expected horizon error, got {other:?}"),
    }
}

#[test]
fn lipschitz_all_pairs_dominates_adjacent() {
    for (family, n) in [(Family::Neutral, 10), (Family::Divergent, 5)] {
        let pair = family.pair(n).unwrap();
        let all = kernel_lipschitz_constant(&pair.ideal, 1.0, &PairSelection::All).unwrap();
        let adj = kernel_lipschitz_constant(&pair.ideal, 1.0, &PairSelection::Listed(adjacent_pairs(family, n))).unwrap();
        assert!(all >= adj);
    }
    // Divergent: adjacent states 2^-n apart have rows 2^-n + ... apart, C = 2.
    let pair = divergent_pair(8).unwrap();
    let adj = kernel_lipschitz_constant(&pair.ideal, 1.0, &PairSelection::Listed(adjacent_pairs(Family::Divergent, 8))).unwrap();
    assert!((adj - 2.0).abs() < 1e-9, "{adj}");
}

#[test]
fn convergent_lipschitz_is_vacuous_at_zero_lambda() {
    // All distinct states are more than 1 apart, so C = 1 always holds.
    let pair = convergent_pair(20).unwrap();
    let c = kernel_lipschitz_constant(&pair.ideal, 0.0, &PairSelection::All).unwrap();
    assert!(c <= 1.0);
}

#[test]
fn mixing_reaches_stationarity_by_t_epsilon() {
    let eps = 0.1;
    for (family, n) in [(Family::Convergent, 30), (Family::Neutral, 10), (Family::Divergent, 6)] {
        let pair = family.pair(n).unwrap();
        let tau1 = variation_threshold_time(&pair.ideal, 10_000, TAU1_THRESHOLD).unwrap().tau1;
        let t = t_epsilon(eps, tau1 as u64).unwrap() as usize;
        let pi = stationary_distribution(&pair.ideal, 1e-14).unwrap();
        for x in 0..pair.ideal.len() {
            let mu = t_step_distribution(&pair.ideal, x, t).unwrap();
            assert!(tv_distance(&mu, &pi).unwrap() <= eps / 2.0, "{family} x = {x}");
        }
    }
}

#[test]
fn identical_chains_never_diverge() {
    let pair = convergent_pair(12).unwrap();
    let twin = ChainPair::same_space(pair.ideal.clone(), pair.ideal.clone()).unwrap();
    let trace = coupled_divergence_simulation(&twin, 0, 50, 200, 0.0, 7).unwrap();
    assert!(trace.distances.iter().flatten().all(|&d| d == 0.0));
}

#[test]
fn coupled_simulation_is_deterministic() {
    let pair = convergent_pair(20).unwrap();
    let a = coupled_divergence_simulation(&pair, 0, 40, 300, 0.0, 11).unwrap();
    let b = coupled_divergence_simulation(&pair, 0, 40, 300, 0.0, 11).unwrap();
    assert_eq!(a.distances, b.distances);
    let c = coupled_divergence_simulation(&pair, 0, 40, 300, 0.0, 12).unwrap();
    assert_ne!(a.distances, c.distances);
}

#[test]
fn divergent_coupling_blows_up() {
    let pair = divergent_pair(10).unwrap();
    let trace = coupled_divergence_simulation(&pair, 0, 20, 2000, 1.0, 0).unwrap();
    assert!(trace.median(20) > 0.05, "median {}", trace.median(20));
}

#[test]
fn chain_json_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("chain.json");
    let pair = neutral_pair(10).unwrap();
    pair.perturbed.save_json(&path).unwrap();
    let back = FiniteMarkovChain::load_json(&path).unwrap();
    assert_eq!(back.dense_kernel(), pair.perturbed.dense_kernel());
    assert_eq!(back.space().points(), pair.perturbed.space().points());
}

#[test]
fn non_ergodic_chains_are_refused() {
    let pair = convergent_pair(4).unwrap();
    let mut k = pair.ideal.dense_kernel();
    // Make state 3 absorbing: nothing returns from it.
    k[3] = vec![0.0, 0.0, 0.0, 1.0];
    let chain = FiniteMarkovChain::from_dense(pair.ideal.space().clone(), k).unwrap();
    assert!(matches!(stationary_distribution(&chain, 1e-12), Err(Error::NonErgodic(_))));
}
