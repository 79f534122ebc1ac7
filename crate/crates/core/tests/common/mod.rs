#![allow(dead_code)]

use chainapprox::metric::{Distribution, FiniteMetricSpace};
use rand::Rng;

/// A random Euclidean space of `n` distinct points in dimension 1 to 3.
/// Coordinates are sometimes drawn from a coarse grid so that distance ties
/// occur.
pub fn random_space<R: Rng>(rng: &mut R, n: usize) -> FiniteMetricSpace {
    random_space_with(rng, n, false)
}

/// As [`random_space`], optionally allowing coincident points.
pub fn random_space_with<R: Rng>(rng: &mut R, n: usize, allow_coincident: bool) -> FiniteMetricSpace {
    let dim = rng.random_range(1..=3);
    let coarse = rng.random_bool(0.3);
    let mut coords: Vec<Vec<f64>> = Vec::with_capacity(n);
    while coords.len() < n {
        let c: Vec<f64> = (0..dim)
            .map(|_| {
                if coarse {
                    rng.random_range(0..n as i32 + 4) as f64 * 0.5
                } else {
                    rng.random_range(0.0..3.0)
                }
            })
            .collect();
        if allow_coincident || !coords.contains(&c) {
            coords.push(c);
        }
    }
    FiniteMetricSpace::euclidean(coords).unwrap()
}

/// A random law on `n` points; about a third of the points get no mass.
pub fn random_law<R: Rng>(rng: &mut R, n: usize) -> Distribution {
    loop {
        let w: Vec<f64> = (0..n)
            .map(|_| if rng.random_bool(0.35) { 0.0 } else { rng.random::<f64>() })
            .collect();
        let s: f64 = w.iter().sum();
        if s > 0.0 {
            return Distribution::new(w.into_iter().map(|x| x / s).collect()).unwrap();
        }
    }
}
