//! Moments of the correlated truncated-normal ecosystem sampler.

use prfgame::experiments::{sample_instance, EcosystemSampler, InstanceShape};
use prfgame::{Activation, ActivationFamily, PublishersGame};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

const SIGMA: f64 = 0.2;

/// Coordinates per instance; three documents give about 10^5 values.
const K: usize = 34_000;

fn draw(rho1: f64, rho2: f64, seed: u64) -> PublishersGame {
    let mut shape = InstanceShape::defaults(Activation::with_default(ActivationFamily::Linear));
    shape.k = K;
    sample_instance(&EcosystemSampler::truncated_normal(rho1, rho2), &shape, seed).unwrap()
}

struct Moments {
    mean: f64,
    var: f64,
}

fn moments(v: &[f64]) -> Moments {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Moments { mean, var }
}

fn corr(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (moments(a), moments(b));
    let cov = a.iter().zip(b).map(|(x, y)| (x - ma.mean) * (y - mb.mean)).sum::<f64>() / (a.len() as f64 - 1.0);
    cov / (ma.var * mb.var).sqrt()
}

fn coordinates(points: &[prfgame::Point]) -> Vec<Vec<f64>> {
    points.iter().map(|p| p.coords().to_vec()).collect()
}

#[test]
fn independent_marginals_match_the_truncated_normal() {
    let game = draw(0.0, 0.0, 5);
    let std = Normal::new(0.0, 1.0).unwrap();
    let beta = 0.5 / SIGMA;
    let mass = std.cdf(beta) - std.cdf(-beta);
    let expected_var = SIGMA * SIGMA * (1.0 - 2.0 * beta * std.pdf(beta) / mass);

    for set in [coordinates(game.initial_docs()), coordinates(game.demand().atoms())] {
        let all: Vec<f64> = set.concat();
        let m = moments(&all);
        assert!(all.iter().all(|c| (0.0..=1.0).contains(c)));
        assert!((m.mean - 0.5).abs() < 2e-3, "mean {}", m.mean);
        assert!((m.var - expected_var).abs() / expected_var < 0.02, "var {} vs {expected_var}", m.var);
        assert!(corr(&set[0], &set[1]).abs() < 0.02);
    }
}

/// Plain rejection sampling of the same conditioned normal triple, built
/// from the covariance directly rather than through a factorization.
fn monte_carlo_pair_correlations(rho: f64, draws: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut v0, mut v1, mut v2) = (vec![], vec![], vec![]);
    // Autoregressive construction: x1 = rho x0 + sqrt(1-rho^2) e1, x2 likewise
    // from x1, gives corr(x0,x1) = corr(x1,x2) = rho and corr(x0,x2) = rho^2.
    let s = (1.0 - rho * rho).sqrt();
    while v0.len() < draws {
        let z: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
        let x0 = z[0];
        let x1 = rho * x0 + s * z[1];
        let x2 = rho * x1 + s * z[2];
        let v = [x0, x1, x2].map(|x| 0.5 + SIGMA * x);
        if v.iter().all(|c| (0.0..=1.0).contains(c)) {
            v0.push(v[0]);
            v1.push(v[1]);
            v2.push(v[2]);
        }
    }
    (corr(&v0, &v1), corr(&v0, &v2))
}

#[test]
fn correlated_pattern_matches_monte_carlo() {
    let (near, far) = monte_carlo_pair_correlations(0.5, 1_000_000, 11);
    let game = draw(0.5, -0.5, 6);
    let docs = coordinates(game.initial_docs());
    assert!((corr(&docs[0], &docs[1]) - near).abs() < 0.015);
    assert!((corr(&docs[1], &docs[2]) - near).abs() < 0.015);
    assert!((corr(&docs[0], &docs[2]) - far).abs() < 0.015);

    let (near, far) = monte_carlo_pair_correlations(-0.5, 1_000_000, 12);
    let atoms = coordinates(game.demand().atoms());
    assert!((corr(&atoms[0], &atoms[1]) - near).abs() < 0.015);
    assert!((corr(&atoms[0], &atoms[2]) - far).abs() < 0.015);
}
