use hyperising::combinatorics::combinations;
use hyperising::recovery::{aggregate, false_positives, recovery_rate, success, NodeFit};
use hyperising::sampler::rng_from_seed;
use hyperising::{
    assign_coefficients, draw_samples, exact_sample, regular_hypergraph, run_pipeline, AggregationMode,
    AggregationRule, CoefficientScheme, GibbsConfig, LambdaMode, PipelineOptions, SignedSupport,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

/// Random sparse reports, biased towards agreement so AND has something to keep.
fn random_fits(p: usize, k: usize, seed: u64) -> Vec<NodeFit> {
    let mut rng = rng_from_seed(seed);
    let all: Vec<usize> = (0..p).collect();
    let edges: Vec<(Vec<usize>, f64)> = combinations(&all, k)
        .into_iter()
        .filter_map(|e| {
            let keep = rng.random::<f64>() < 0.4;
            let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
            keep.then_some((e, s))
        })
        .collect();
    let mut fits = Vec::with_capacity(p);
    for r in 0..p {
        let mut entries = Vec::new();
        for (e, s) in edges.iter().filter(|(e, _)| e.contains(&r)) {
            if rng.random::<f64>() < 0.8 {
                let sub: Vec<usize> = e.iter().copied().filter(|&v| v != r).collect();
                let flip = if rng.random::<f64>() < 0.1 { -1.0 } else { 1.0 };
                entries.push((sub, s * flip * rng.random_range(0.01..1.0)));
            }
        }
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        fits.push(NodeFit { r, lambda: 0.1, entries, kkt_residual: 0.0, iterations: 1 });
    }
    fits
}

fn relabel(fits: &[NodeFit], perm: &[usize]) -> Vec<NodeFit> {
    let mut out: Vec<NodeFit> = fits.to_vec();
    for f in fits {
        let mut entries: Vec<(Vec<usize>, f64)> = f
            .entries
            .iter()
            .map(|(s, v)| {
                let mut t: Vec<usize> = s.iter().map(|&u| perm[u]).collect();
                t.sort_unstable();
                (t, *v)
            })
            .collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        out[perm[f.r]] = NodeFit { r: perm[f.r], entries, ..f.clone() };
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn aggregation_is_permutation_equivariant(p in 4usize..9, k in 2usize..=3, seed in any::<u64>()) {
        let fits = random_fits(p, k, seed);
        let mut perm: Vec<usize> = (0..p).collect();
        perm.shuffle(&mut rng_from_seed(seed ^ 9));
        for mode in [AggregationMode::AndStrict, AggregationMode::OrMax] {
            let rule = AggregationRule { mode, ..AggregationRule::default() };
            let a = aggregate(&fits, p, k, &rule).unwrap().permuted(&perm);
            let b = aggregate(&relabel(&fits, &perm), p, k, &rule).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn and_edges_are_or_edges(p in 4usize..9, k in 2usize..=3, seed in any::<u64>()) {
        let fits = random_fits(p, k, seed);
        let and = aggregate(&fits, p, k, &AggregationRule::default()).unwrap();
        let or = aggregate(&fits, p, k, &AggregationRule { mode: AggregationMode::OrMax, ..AggregationRule::default() }).unwrap();
        for (e, s) in and.iter() {
            prop_assert_eq!(or.sign(e), Some(s));
        }
    }
}

#[test]
fn metrics_on_hand_built_supports() {
    let t = hyperising::InteractionTensor::new(5, 3, [(vec![0, 1, 2], 0.2), (vec![2, 3, 4], -0.2)]).unwrap();
    let exact = SignedSupport::from_tensor(&t);
    assert!(success(&exact, &t));
    assert_eq!(recovery_rate(&exact, &t).unwrap(), 1.0);
    let flipped = SignedSupport::new(5, 3, [(vec![0, 1, 2], 1), (vec![2, 3, 4], 1)]).unwrap();
    assert!(!success(&flipped, &t));
    assert_eq!(recovery_rate(&flipped, &t).unwrap(), 0.5);
    let extra = SignedSupport::new(5, 3, [(vec![0, 1, 2], 1), (vec![2, 3, 4], -1), (vec![0, 1, 4], 1)]).unwrap();
    assert_eq!(false_positives(&extra, &t), 1);
    assert_eq!(recovery_rate(&extra, &t).unwrap(), 1.0);
    assert!(!success(&extra, &t));
}

#[test]
fn pipeline_is_deterministic_and_modes_agree() {
    let h = regular_hypergraph(9, 3, 2, 3).unwrap();
    let truth = assign_coefficients(&h, &CoefficientScheme::default_for(3).unwrap()).unwrap();
    let s = draw_samples(&truth, 300, &GibbsConfig::with_seed(4)).unwrap();
    let opts = PipelineOptions::default();
    let a = run_pipeline(&s, 3, Some(&truth), &opts).unwrap();
    let b = run_pipeline(&s, 3, Some(&truth), &opts).unwrap();
    assert_eq!(a, b);
    assert!(a.lambda_selected.len() == 9 && a.lambda > 0.0);

    let fixed = PipelineOptions { lambda_mode: LambdaMode::Fixed { lambda: a.lambda }, ..opts.clone() };
    let c = run_pipeline(&s, 3, Some(&truth), &fixed).unwrap();
    assert_eq!(c.estimated, a.estimated);
    assert_eq!(c.nodes, a.nodes);
}

#[test]
fn null_model_gives_empty_neighborhoods() {
    let t = hyperising::InteractionTensor::empty(6, 3).unwrap();
    let mut empty = 0;
    for seed in 0..20 {
        let s = exact_sample(&t, 2000, seed).unwrap();
        let lam = hyperising::regression::lambda_practice(2000, 6, 3, 10.0).unwrap();
        let f = hyperising::recovery::fit_node(&s, 3, 0, lam, &Default::default()).unwrap();
        empty += usize::from(f.entries.is_empty());
    }
    assert!(empty >= 19, "{empty}/20");
}

#[test]
fn strong_model_is_recovered() {
    let truth = hyperising::InteractionTensor::new(6, 3, [(vec![0, 1, 2], 0.25), (vec![3, 4, 5], -0.25)]).unwrap();
    let s = exact_sample(&truth, 4000, 12).unwrap();
    let rep = run_pipeline(&s, 3, Some(&truth), &PipelineOptions::default()).unwrap();
    assert!(rep.metrics.unwrap().success);
}
