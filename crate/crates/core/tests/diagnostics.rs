mod common;

use common::{all_states, brute_weights, random_tensor};
use hyperising::diagnostics::{
    c_min, dependency_constants, incoherence, population_d_max, population_fisher, sample_d_max,
    sample_fisher_blocks, uniqueness_certificate, Covariance,
};
use hyperising::regression::{NodeDesign, NodeProblem};
use hyperising::{exact_sample, InteractionTensor, SolveOptions};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn prod(x: &[i8], f: &[usize]) -> f64 {
    f.iter().map(|&v| x[v] as f64).product()
}

/// Dense `E[w(x) z z^T]` over all features of node `r`, by enumeration.
fn dense_expectation(t: &InteractionTensor, r: usize, weighted: bool) -> DMatrix<f64> {
    let design = NodeDesign::new(t.p(), t.k(), r).unwrap();
    let w = brute_weights(t);
    let z: f64 = w.iter().sum();
    let fk: f64 = (1..=t.k()).map(|i| i as f64).product();
    let n = design.len();
    let mut q = DMatrix::zeros(n, n);
    for (i, x) in all_states(t.p()).iter().enumerate() {
        let a: f64 = t
            .incident(r)
            .map(|(e, j)| j * e.iter().filter(|&&v| v != r).map(|&v| x[v] as f64).product::<f64>())
            .sum::<f64>()
            * fk;
        let eta = if weighted { fk * fk / a.cosh().powi(2) } else { 1.0 };
        let f: Vec<f64> = design.features().iter().map(|s| prod(x, s)).collect();
        for a_ in 0..n {
            for b in 0..n {
                q[(a_, b)] += w[i] / z * eta * f[a_] * f[b];
            }
        }
    }
    q
}

fn tensor_strategy() -> impl Strategy<Value = (InteractionTensor, usize)> {
    (4usize..=6, 2usize..=3, any::<u64>())
        .prop_map(|(p, k, seed)| (random_tensor(p, k, 0.5, 0.4, seed), (seed % p as u64) as usize))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn population_blocks_match_enumeration((t, r) in tensor_strategy()) {
        let blocks = population_fisher(&t, r).unwrap();
        let design = NodeDesign::new(t.p(), t.k(), r).unwrap();
        let q = dense_expectation(&t, r, true);
        let si: Vec<usize> = blocks.support.iter().map(|s| design.index_of(s).unwrap()).collect();
        let ci: Vec<usize> = blocks.complement.iter().map(|s| design.index_of(s).unwrap()).collect();
        prop_assert!(blocks.q_ss.max_asymmetry() == 0.0);
        for (a, &ia) in si.iter().enumerate() {
            for (b, &ib) in si.iter().enumerate() {
                prop_assert!((blocks.q_ss.get(a, b) - q[(ia, ib)]).abs() < 1e-10);
            }
        }
        for (a, &ia) in ci.iter().enumerate() {
            for (b, &ib) in si.iter().enumerate() {
                prop_assert!((blocks.q_scs_row(a)[b] - q[(ia, ib)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn incoherence_matches_dense_inverse((t, r) in tensor_strategy()) {
        let blocks = population_fisher(&t, r).unwrap();
        let d = blocks.d();
        let qss = DMatrix::from_fn(d, d, |a, b| blocks.q_ss.get(a, b));
        let inv = qss.try_inverse().unwrap();
        let m = blocks.complement.len();
        let qcs = DMatrix::from_fn(m, d, |a, b| blocks.q_scs_row(a)[b]);
        let prod = qcs * inv;
        let want = (0..m)
            .map(|i| prod.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let got = incoherence(&blocks).unwrap();
        prop_assert!((got - want).abs() < 1e-9 * want.max(1.0));
        let eig = qss_min_eigen(&blocks.q_ss, d);
        prop_assert!((c_min(&blocks).unwrap() - eig).abs() < 1e-9 * eig.max(1.0));
        prop_assert!(eig > 0.0);
    }

    #[test]
    fn d_max_matches_dense_eigenvalue((t, r) in tensor_strategy()) {
        let cov = dense_expectation(&t, r, false);
        let want = cov.symmetric_eigen().eigenvalues.max();
        let got = population_d_max(&t, r).unwrap();
        prop_assert!((got - want).abs() < 1e-6 * want, "{got} vs {want}");
    }
}

fn qss_min_eigen(q: &hyperising::linalg::SymMatrix, d: usize) -> f64 {
    DMatrix::from_fn(d, d, |a, b| q.get(a, b)).symmetric_eigen().eigenvalues.min()
}

#[test]
fn independence_closed_forms() {
    for k in [2usize, 3] {
        let t = InteractionTensor::empty(6, k).unwrap();
        let fk: f64 = (1..=k).map(|i| i as f64).product();
        for r in 0..6 {
            let blocks = population_fisher(&t, r).unwrap();
            for a in 0..blocks.d() {
                for b in 0..blocks.d() {
                    let want = if a == b { fk * fk } else { 0.0 };
                    assert!((blocks.q_ss.get(a, b) - want).abs() < 1e-12);
                }
            }
            let dc = dependency_constants(&blocks, Covariance::Population(&t), k).unwrap();
            assert!((dc.c_min - fk * fk).abs() < 1e-12);
            assert!((dc.d_max - 1.0).abs() < 1e-9);
            assert_eq!(incoherence(&blocks).unwrap(), 0.0);
        }
    }
}

#[test]
fn sample_blocks_are_symmetric_psd() {
    let t = random_tensor(6, 3, 0.4, 0.4, 7);
    let s = exact_sample(&t, 400, 8).unwrap();
    for r in 0..6 {
        let design = NodeDesign::new(6, 3, r).unwrap();
        let all = design.features().to_vec();
        let blocks = sample_fisher_blocks(&s, r, &t, &all).unwrap();
        assert_eq!(blocks.q_ss.max_asymmetry(), 0.0);
        assert!(qss_min_eigen(&blocks.q_ss, blocks.d()) > -1e-10);
        assert!(blocks.complement.is_empty());
        assert!(sample_d_max(&s, 3, r).unwrap() >= 1.0 - 1e-9);
    }
}

#[test]
fn certificate_cases() {
    let t = InteractionTensor::new(6, 3, [(vec![0, 1, 2], 0.3)]).unwrap();
    let s = exact_sample(&t, 4000, 9).unwrap();
    let opts = SolveOptions::default();
    let problem = NodeProblem::new(&s, 3, 0, &opts).unwrap();
    let lmax = problem.lambda_max();

    let zero = problem.solve(lmax * 1.01, &opts).unwrap().coef;
    assert!(zero.is_zero());
    let c = uniqueness_certificate(&zero, &s, 3, lmax * 1.01).unwrap();
    assert!(c.dual_strict && c.hessian_pd);

    let c = uniqueness_certificate(&zero, &s, 3, lmax).unwrap();
    assert!(!c.dual_strict);

    let fit = problem.solve(0.4, &opts).unwrap().coef;
    assert_eq!(fit.nnz(), 1);
    assert!(uniqueness_certificate(&fit, &s, 3, 0.4).unwrap().certified());

    assert!(uniqueness_certificate(&fit, &s, 3, 0.0).is_err());
}

