#![allow(dead_code)]

use hybrid_ra::allocator::{AppSpec, Scenario, UeSpec};
use hybrid_ra::Utility;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_utility(rng: &mut impl Rng) -> Utility {
    if rng.gen_bool(0.5) {
        Utility::sigmoidal(rng.gen_range(0.5..5.0), rng.gen_range(2.0..30.0)).unwrap()
    } else {
        Utility::logarithmic(rng.gen_range(1.0..15.0), 100.0).unwrap()
    }
}

/// UE with `n` applications and weights summing to 1.
pub fn random_ue(rng: &mut impl Rng, n: usize) -> UeSpec {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
    let sum: f64 = raw.iter().sum();
    let mut alphas: Vec<f64> = raw.iter().map(|x| x / sum).collect();
    let head: f64 = alphas[..n - 1].iter().sum();
    alphas[n - 1] = 1.0 - head;
    let apps = alphas
        .into_iter()
        .map(|alpha| AppSpec::new(random_utility(rng), alpha).unwrap())
        .collect();
    UeSpec::new(apps, rng.gen_range(0.5..2.0)).unwrap()
}

/// Up to `max_ues` UEs with up to `max_apps` applications each.
pub fn random_scenario(rng: &mut impl Rng, max_ues: usize, max_apps: usize, budget: f64) -> Scenario {
    let m = rng.gen_range(1..=max_ues);
    let ues = (0..m)
        .map(|_| {
            let n = rng.gen_range(1..=max_apps);
            random_ue(rng, n)
        })
        .collect();
    Scenario::new(ues, budget).unwrap()
}

pub fn max_rate_gap(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
