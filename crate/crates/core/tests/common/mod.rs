#![allow(dead_code)]

use hyperising::combinatorics::combinations;
use hyperising::sampler::rng_from_seed;
use hyperising::InteractionTensor;
use rand::Rng;

/// Each k-subset of `0..p` is an edge with probability `density`, coupling
/// uniform on `[-scale, scale]`.
pub fn random_tensor(p: usize, k: usize, density: f64, scale: f64, seed: u64) -> InteractionTensor {
    let mut rng = rng_from_seed(seed);
    let all: Vec<usize> = (0..p).collect();
    let edges: Vec<(Vec<usize>, f64)> = combinations(&all, k)
        .into_iter()
        .filter_map(|e| {
            let keep = rng.random::<f64>() < density;
            let j = rng.random_range(-scale..=scale);
            keep.then_some((e, j))
        })
        .collect();
    InteractionTensor::new(p, k, edges).unwrap()
}

pub fn all_states(p: usize) -> Vec<Vec<i8>> {
    (0..1usize << p)
        .map(|i| (0..p).map(|v| if i >> v & 1 == 1 { 1 } else { -1 }).collect())
        .collect()
}

/// Unnormalized weights `exp(H(x))` recomputed from the edge list.
pub fn brute_weights(t: &InteractionTensor) -> Vec<f64> {
    let fk: f64 = (1..=t.k()).map(|i| i as f64).product();
    all_states(t.p())
        .iter()
        .map(|x| {
            let h: f64 = t
                .edges()
                .map(|(e, j)| j * e.iter().map(|&v| x[v] as f64).product::<f64>())
                .sum();
            (fk * h).exp()
        })
        .collect()
}

pub fn state_index(x: &[i8]) -> usize {
    x.iter()
        .enumerate()
        .filter(|(_, s)| **s == 1)
        .map(|(v, _)| 1usize << v)
        .sum()
}
