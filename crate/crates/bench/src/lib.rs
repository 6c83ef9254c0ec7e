//! Fixed benchmark instances.

use hyperising::{
    assign_coefficients, exact_sample, regular_hypergraph, CoefficientScheme, GibbsConfig, InteractionTensor,
    SampleMatrix,
};

/// Regular `k`-uniform model with the default coupling.
pub fn regular_model(p: usize, k: usize, d: usize, seed: u64) -> InteractionTensor {
    let support = regular_hypergraph(p, k, d, seed).expect("regular hypergraph");
    let scheme = CoefficientScheme {
        seed,
        ..CoefficientScheme::default_for(k).expect("coefficient scheme")
    };
    assign_coefficients(&support, &scheme).expect("coefficients")
}

/// Gibbs draws for models too large to enumerate, exact draws otherwise.
pub fn samples(t: &InteractionTensor, n: usize, seed: u64) -> SampleMatrix {
    if t.p() <= 16 {
        exact_sample(t, n, seed).expect("exact sample")
    } else {
        hyperising::draw_samples(t, n, &GibbsConfig::with_seed(seed)).expect("gibbs sample")
    }
}
