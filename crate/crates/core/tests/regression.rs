mod common;

use common::random_tensor;
use hyperising::regression::{kkt_residual, lambda_practice, NodeProblem};
use hyperising::sampler::rng_from_seed;
use hyperising::{exact_sample, solve_l1, InteractionTensor, SampleMatrix, SolveOptions};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

fn features(problem: &NodeProblem<'_>) -> DMatrix<f64> {
    let d = problem.design();
    let s = problem.samples();
    DMatrix::from_fn(s.n(), d.len(), |i, j| d.feature_value(s.row(i), j) as f64)
}

fn labels(problem: &NodeProblem<'_>) -> Vec<f64> {
    let r = problem.design().r();
    problem.samples().rows().map(|x| x[r] as f64).collect()
}

/// Theta-scale objective: mean log(1 + exp(-y theta.z)) + pen |theta|_1.
fn theta_objective(z: &DMatrix<f64>, y: &[f64], theta: &[f64], pen: f64) -> f64 {
    let n = z.nrows();
    let mut s = 0.0;
    for i in 0..n {
        let eta: f64 = (0..z.ncols()).map(|j| z[(i, j)] * theta[j]).sum();
        let m = -y[i] * eta;
        s += m.max(0.0) + (-m.abs()).exp().ln_1p();
    }
    s / n as f64 + pen * theta.iter().map(|t| t.abs()).sum::<f64>()
}

/// Proximal gradient with constant step `1/L`, `L` the exact spectral bound
/// `||Z||_2^2 / (4n)`. Stops at `iters` or at an exact fixed point.
fn ista(z: &DMatrix<f64>, y: &[f64], pen: f64, iters: usize) -> Vec<f64> {
    let n = z.nrows() as f64;
    let sv = z.clone().singular_values();
    let l = sv.max().powi(2) / (4.0 * n);
    let step = 1.0 / l;
    let zt = z.transpose();
    let mut theta = vec![0.0; z.ncols()];
    for _ in 0..iters {
        let eta = z * nalgebra::DVector::from_column_slice(&theta);
        let w: Vec<f64> = eta
            .iter()
            .zip(y)
            .map(|(e, yi)| -yi / (1.0 + (yi * e).exp()) / n)
            .collect();
        let g = &zt * nalgebra::DVector::from_vec(w);
        let next: Vec<f64> = theta
            .iter()
            .zip(g.iter())
            .map(|(t, gj)| {
                let v = t - step * gj;
                v.signum() * (v.abs() - step * pen).max(0.0)
            })
            .collect();
        if next == theta {
            break;
        }
        theta = next;
    }
    theta
}

fn random_coefs(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    (0..len).map(|_| rng.random_range(-0.2..0.2)).collect()
}

fn sample_for(t: &InteractionTensor, n: usize, seed: u64) -> SampleMatrix {
    exact_sample(t, n, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gradient_matches_central_differences(seed in any::<u64>(), k in 2usize..=4, p in 5usize..=7) {
        let t = random_tensor(p, k, 0.4, 0.3, seed);
        let s = sample_for(&t, 60, seed ^ 1);
        let opts = SolveOptions::default();
        let r = (seed % p as u64) as usize;
        let problem = NodeProblem::new(&s, k, r, &opts).unwrap();
        let mut c = random_coefs(problem.design().len(), seed ^ 2);
        let g = problem.pseudo_grad(&c);
        let h = 1e-5;
        for j in 0..c.len() {
            let orig = c[j];
            c[j] = orig + h;
            let fp = problem.pseudo_loss(&c);
            c[j] = orig - h;
            let fm = problem.pseudo_loss(&c);
            c[j] = orig;
            let fd = (fp - fm) / (2.0 * h);
            prop_assert!((g[j] - fd).abs() / g[j].abs().max(1.0) < 1e-6, "coord {j}: {} vs {fd}", g[j]);
        }
    }

    #[test]
    fn theta_scale_objective_agrees(seed in any::<u64>(), lam in 0.0f64..1.0) {
        let t = random_tensor(6, 3, 0.4, 0.3, seed);
        let s = sample_for(&t, 80, seed ^ 3);
        let opts = SolveOptions::default();
        let problem = NodeProblem::new(&s, 3, 1, &opts).unwrap();
        let c = random_coefs(problem.design().len(), seed ^ 4);
        let theta: Vec<f64> = c.iter().map(|v| v * problem.scale()).collect();
        let direct = problem.objective(&c, lam);
        let via_theta = theta_objective(&features(&problem), &labels(&problem), &theta, lam / problem.scale());
        prop_assert!((direct - via_theta).abs() < 1e-10);
    }

    #[test]
    fn solver_meets_kkt(seed in any::<u64>(), c in 0.05f64..1.5) {
        let t = random_tensor(7, 3, 0.3, 0.4, seed);
        let s = sample_for(&t, 150, seed ^ 5);
        let opts = SolveOptions::default();
        let lam = lambda_practice(s.n(), 7, 3, c).unwrap();
        let coef = solve_l1(&s, 3, 2, lam, &opts).unwrap();
        prop_assert!(kkt_residual(&coef, &s, 3, 2, lam).unwrap() < 1e-6);
    }
}

#[test]
fn matches_slow_reference_unpenalized() {
    // p=5, k=2, n=200, lambda = 0 on non-separable data
    let t = random_tensor(5, 2, 0.6, 0.3, 21);
    let s = sample_for(&t, 200, 22);
    let opts = SolveOptions::default();
    for r in 0..5 {
        let problem = NodeProblem::new(&s, 2, r, &opts).unwrap();
        let rep = problem.solve(0.0, &opts).unwrap();
        let z = features(&problem);
        let y = labels(&problem);
        let theta = ista(&z, &y, 0.0, 1_000_000);
        let reference = theta_objective(&z, &y, &theta, 0.0);
        assert!(rep.objective <= reference + 1e-8, "r={r}: {} vs {reference}", rep.objective);
        assert!((rep.objective - reference).abs() < 1e-8);
    }
}

#[test]
fn matches_slow_reference_penalized() {
    let t = random_tensor(7, 3, 0.3, 0.4, 31);
    let s = sample_for(&t, 150, 32);
    let opts = SolveOptions::default();
    let problem = NodeProblem::new(&s, 3, 0, &opts).unwrap();
    let lam = lambda_practice(150, 7, 3, 0.3).unwrap();
    let rep = problem.solve(lam, &opts).unwrap();
    assert!(rep.kkt_residual < 1e-6);
    let z = features(&problem);
    let y = labels(&problem);
    let pen = lam / problem.scale();
    let theta = ista(&z, &y, pen, 1_000_000);
    let reference = theta_objective(&z, &y, &theta, pen);
    assert!((rep.objective - reference).abs() < 1e-8, "{} vs {reference}", rep.objective);
}

#[test]
fn objective_history_never_increases() {
    let t = random_tensor(8, 3, 0.2, 0.4, 41);
    let s = sample_for(&t, 120, 42);
    let opts = SolveOptions::default();
    let problem = NodeProblem::new(&s, 3, 4, &opts).unwrap();
    let rep = problem.solve(0.05, &opts).unwrap();
    for w in rep.objective_history.windows(2) {
        assert!(w[1] <= w[0] + 1e-15);
    }
}

#[test]
fn full_shrinkage_above_lambda_max() {
    let t = random_tensor(6, 3, 0.5, 0.4, 51);
    let s = sample_for(&t, 100, 52);
    let opts = SolveOptions::default();
    let problem = NodeProblem::new(&s, 3, 0, &opts).unwrap();
    let lmax = problem.lambda_max();
    assert!(problem.solve(lmax * 1.0001, &opts).unwrap().coef.is_zero());
    assert!(!problem.solve(lmax * 0.5, &opts).unwrap().coef.is_zero());
}

#[test]
fn planted_edge_found_with_sign() {
    for (seed, j) in [(61u64, 0.3), (62, -0.3)] {
        let t = InteractionTensor::new(6, 3, [(vec![0, 2, 4], j)]).unwrap();
        let s = sample_for(&t, 5000, seed);
        let coef = solve_l1(&s, 3, 2, 0.4, &SolveOptions::default()).unwrap();
        let entries: Vec<_> = coef.iter().map(|(e, v)| (e.clone(), v.signum())).collect();
        assert_eq!(entries, vec![(vec![0, 4], j.signum())]);
    }
}
