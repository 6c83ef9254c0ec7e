//! Node-wise l1-penalized pseudolikelihood regression.
//!
//! For a vertex `r` the features are the products `z_e' = prod_{v in e'} x_v`
//! over the (k-1)-subsets `e'` of the other vertices, and the label is `x_r`.
//! The negative mean conditional log-likelihood in the tensor coefficients
//! `J_r` is
//!
//! ```text
//! l(J_r) = (1/n) sum_i [ log 2cosh(k m_r(x_i)) - k x_{i,r} m_r(x_i) ],
//! k m_r(x) = k! * sum_e' J_{r,e'} z_e'(x).
//! ```
//!
//! Substituting `theta = 2 k! J_r` turns this into the plain logistic loss
//! `(1/n) sum_i log(1 + exp(-y_i <theta, z_i>))`, and the penalty
//! `lambda ||J_r||_1` into `lambda / (2 k!) ||theta||_1`. The solver works on
//! the theta scale (accelerated proximal gradient with backtracking and
//! monotone restarts); everything public speaks the J scale.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::combinatorics::{binomial, combinations, factorial, ln_binomial, SubsetRanker};
use crate::error::{Error, Result};
use crate::linalg::{power_iteration, Cholesky, SymMatrix};
use crate::sampler::SampleMatrix;
use crate::tensor::{validate_subset, Subset};

/// Largest feature count `C(p-1, k-1)` a node design may enumerate.
pub const FEATURE_BUDGET: usize = 200_000;

/// The feature index set `T_r`: all sorted (k-1)-subsets of `[p] \ {r}` in
/// lexicographic order.
#[derive(Debug, Clone)]
pub struct NodeDesign {
    p: usize,
    k: usize,
    r: usize,
    features: Vec<Subset>,
    ranker: SubsetRanker,
}

impl NodeDesign {
    pub fn new(p: usize, k: usize, r: usize) -> Result<Self> {
        Self::with_budget(p, k, r, FEATURE_BUDGET)
    }

    pub fn with_budget(p: usize, k: usize, r: usize, budget: usize) -> Result<Self> {
        if k < 2 || k > p.saturating_sub(1) {
            return Err(Error::arg(format!("need 2 <= k <= p - 1, got p={p}, k={k}")));
        }
        if r >= p {
            return Err(Error::arg(format!("vertex {r} out of range for p={p}")));
        }
        let count = binomial(p - 1, k - 1).unwrap_or(usize::MAX);
        if count > budget {
            return Err(Error::Capacity {
                what: "node feature count C(p-1, k-1)",
                value: count,
                cap: budget,
            });
        }
        factorial(k)?;
        let others: Vec<usize> = (0..p).filter(|&v| v != r).collect();
        let features = combinations(&others, k - 1);
        debug_assert_eq!(features.len(), count);
        Ok(NodeDesign {
            p,
            k,
            r,
            features,
            ranker: SubsetRanker::new(p - 1, k - 1),
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[Subset] {
        &self.features
    }

    /// Position of `subset` in `T_r`, if it is a member.
    pub fn index_of(&self, subset: &[usize]) -> Option<usize> {
        if subset.len() != self.k - 1
            || subset.contains(&self.r)
            || subset.windows(2).any(|w| w[0] >= w[1])
            || subset.last().is_some_and(|&v| v >= self.p)
        {
            return None;
        }
        let compact: Vec<usize> = subset
            .iter()
            .map(|&v| if v > self.r { v - 1 } else { v })
            .collect();
        Some(self.ranker.rank(&compact))
    }

    #[inline]
    pub fn feature_value(&self, x: &[i8], j: usize) -> i8 {
        crate::tensor::product(x, &self.features[j])
    }
}

/// Sparse node-wise coefficients on the J scale, keyed by (k-1)-subsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseCoefVector {
    pub r: usize,
    entries: BTreeMap<Subset, f64>,
}

impl SparseCoefVector {
    pub fn zero(r: usize) -> Self {
        SparseCoefVector {
            r,
            entries: BTreeMap::new(),
        }
    }

    /// Builds from explicit entries; zero values are dropped.
    pub fn from_entries(design: &NodeDesign, entries: impl IntoIterator<Item = (Subset, f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (s, v) in entries {
            validate_subset(&s, design.k - 1, design.p)?;
            if design.index_of(&s).is_none() {
                return Err(Error::arg(format!("{s:?} is not a feature of node {}", design.r)));
            }
            if !v.is_finite() {
                return Err(Error::arg(format!("coefficient on {s:?} is not finite")));
            }
            if v != 0.0 {
                map.insert(s, v);
            }
        }
        Ok(SparseCoefVector {
            r: design.r,
            entries: map,
        })
    }

    /// Keeps entries with `|value| > threshold`.
    pub fn from_dense(design: &NodeDesign, values: &[f64], threshold: f64) -> Self {
        let entries = design
            .features
            .iter()
            .zip(values)
            .filter(|(_, v)| v.abs() > threshold)
            .map(|(s, v)| (s.clone(), *v))
            .collect();
        SparseCoefVector {
            r: design.r,
            entries,
        }
    }

    pub fn to_dense(&self, design: &NodeDesign) -> Vec<f64> {
        let mut out = vec![0.0; design.len()];
        for (s, v) in &self.entries {
            let j = design
                .index_of(s)
                .expect("coefficient subsets are validated against the design");
            out[j] = *v;
        }
        out
    }

    pub fn get(&self, subset: &[usize]) -> f64 {
        self.entries.get(subset).copied().unwrap_or(0.0)
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Subset, f64)> {
        self.entries.iter().map(|(s, v)| (s, *v))
    }

    pub fn l1_norm(&self) -> f64 {
        self.entries.values().map(|v| v.abs()).sum()
    }

    /// Debug dump, one nonzero per line: `r | v1 .. v{k-1} | value`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (s, v) in &self.entries {
            let verts: Vec<String> = s.iter().map(ToString::to_string).collect();
            writeln!(out, "{} | {} | {}", self.r, verts.join(" "), v).unwrap();
        }
        out
    }
}

/// Solver controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub max_iters: usize,
    /// Convergence threshold on the J-scale KKT residual.
    pub kkt_tol: f64,
    /// Relative objective change regarded as a stall.
    pub objective_rel_tol: f64,
    /// Number of consecutive stalled iterations before giving up on the KKT
    /// test and returning the current iterate.
    pub stall_window: usize,
    /// J-scale magnitudes at or below this are reported as exact zeros.
    pub zero_threshold: f64,
    /// Step shrink factor for backtracking, in (0, 1).
    pub backtrack: f64,
    /// Above this many `n * C(p-1,k-1)` entries, features are recomputed on
    /// the fly instead of being materialized.
    pub max_dense_entries: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iters: 10_000,
            kkt_tol: 1e-6,
            objective_rel_tol: 1e-9,
            stall_window: 500,
            zero_threshold: 1e-8,
            backtrack: 0.5,
            max_dense_entries: 1 << 24,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.kkt_tol, self.objective_rel_tol, self.zero_threshold];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::arg("solver tolerances must be positive"));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::arg("backtracking factor must lie in (0, 1)"));
        }
        if self.max_iters == 0 {
            return Err(Error::arg("max_iters must be positive"));
        }
        Ok(())
    }
}

enum Storage {
    /// Column-major `n x N`, entries +-1.
    Dense(Vec<f64>),
    Lazy,
}

/// Labels and features of one node regression, built once per
/// `(samples, k, r)` and reused across penalty levels.
pub struct NodeProblem<'a> {
    design: NodeDesign,
    samples: &'a SampleMatrix,
    labels: Vec<f64>,
    storage: Storage,
    fact_k: f64,
    lipschitz: std::sync::OnceLock<f64>,
}

impl<'a> NodeProblem<'a> {
    pub fn new(samples: &'a SampleMatrix, k: usize, r: usize, opts: &SolveOptions) -> Result<Self> {
        let design = NodeDesign::new(samples.p(), k, r)?;
        Self::from_design(samples, design, opts)
    }

    pub fn from_design(samples: &'a SampleMatrix, design: NodeDesign, opts: &SolveOptions) -> Result<Self> {
        if samples.p() != design.p {
            return Err(Error::Dimension {
                expected: design.p,
                got: samples.p(),
            });
        }
        if samples.n() == 0 {
            return Err(Error::arg("no samples"));
        }
        let n = samples.n();
        let nf = design.len();
        let labels = samples.rows().map(|x| x[design.r] as f64).collect();
        let storage = if n.saturating_mul(nf) <= opts.max_dense_entries {
            let mut cols = vec![0.0; n * nf];
            for (j, f) in design.features.iter().enumerate() {
                let col = &mut cols[j * n..(j + 1) * n];
                for (c, x) in col.iter_mut().zip(samples.rows()) {
                    *c = crate::tensor::product(x, f) as f64;
                }
            }
            Storage::Dense(cols)
        } else {
            Storage::Lazy
        };
        let fact_k = factorial(design.k)?;
        Ok(NodeProblem {
            design,
            samples,
            labels,
            storage,
            fact_k,
            lipschitz: std::sync::OnceLock::new(),
        })
    }

    pub fn design(&self) -> &NodeDesign {
        &self.design
    }

    pub fn samples(&self) -> &SampleMatrix {
        self.samples
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn is_materialized(&self) -> bool {
        matches!(self.storage, Storage::Dense(_))
    }

    /// `2 k!`, the J-to-theta scale factor.
    pub fn scale(&self) -> f64 {
        2.0 * self.fact_k
    }

    /// `out = Z v`, skipping zero entries of `v`.
    fn mul(&self, v: &[f64], out: &mut [f64]) {
        let n = self.n();
        out.iter_mut().for_each(|o| *o = 0.0);
        match &self.storage {
            Storage::Dense(cols) => {
                for (j, &vj) in v.iter().enumerate() {
                    if vj != 0.0 {
                        let col = &cols[j * n..(j + 1) * n];
                        for (o, c) in out.iter_mut().zip(col) {
                            *o += vj * c;
                        }
                    }
                }
            }
            Storage::Lazy => {
                let active: Vec<(usize, f64)> = v
                    .iter()
                    .enumerate()
                    .filter(|(_, x)| **x != 0.0)
                    .map(|(j, x)| (j, *x))
                    .collect();
                for (o, x) in out.iter_mut().zip(self.samples.rows()) {
                    *o = active
                        .iter()
                        .map(|&(j, vj)| vj * self.design.feature_value(x, j) as f64)
                        .sum();
                }
            }
        }
    }

    /// `out = Z^T w`.
    fn tmul(&self, w: &[f64], out: &mut [f64]) {
        let n = self.n();
        match &self.storage {
            Storage::Dense(cols) => {
                for (j, o) in out.iter_mut().enumerate() {
                    let col = &cols[j * n..(j + 1) * n];
                    *o = col.iter().zip(w).map(|(c, wi)| c * wi).sum();
                }
            }
            Storage::Lazy => {
                out.iter_mut().for_each(|o| *o = 0.0);
                for (x, &wi) in self.samples.rows().zip(w) {
                    if wi == 0.0 {
                        continue;
                    }
                    for (j, o) in out.iter_mut().enumerate() {
                        *o += wi * self.design.feature_value(x, j) as f64;
                    }
                }
            }
        }
    }

    /// Logistic loss on the theta scale from a linear predictor.
    fn loss_from_predictor(&self, eta: &[f64]) -> f64 {
        let s: f64 = eta
            .iter()
            .zip(&self.labels)
            .map(|(e, y)| softplus(-y * e))
            .sum();
        s / self.n() as f64
    }

    /// Theta-scale gradient from a linear predictor.
    fn grad_from_predictor(&self, eta: &[f64], work: &mut [f64], out: &mut [f64]) {
        let n = self.n() as f64;
        for ((w, e), y) in work.iter_mut().zip(eta).zip(&self.labels) {
            // d/d eta of softplus(-y eta) = -y * sigmoid(-y eta)
            *w = -y * sigmoid(-y * e) / n;
        }
        self.tmul(work, out);
    }

    /// Upper-ish estimate of the Lipschitz constant of the theta-scale
    /// gradient, `lambda_max(Z^T Z) / (4n)`, by power iteration.
    pub fn lipschitz(&self) -> f64 {
        *self.lipschitz.get_or_init(|| {
            let n = self.n();
            let nf = self.design.len();
            let fallback = nf as f64 / 4.0;
            let est = power_iteration(
                nf,
                |v, out| {
                    let mut tmp = vec![0.0; n];
                    self.mul(v, &mut tmp);
                    self.tmul(&tmp, out);
                    out.iter_mut().for_each(|o| *o /= 4.0 * n as f64);
                },
                1e-4,
                200,
            );
            match est {
                Ok(e) if e.eigenvalue > 0.0 => e.eigenvalue,
                _ => fallback.max(1e-12),
            }
        })
    }

    fn column(&self, j: usize) -> Vec<f64> {
        match &self.storage {
            Storage::Dense(cols) => cols[j * self.n()..(j + 1) * self.n()].to_vec(),
            Storage::Lazy => self
                .samples
                .rows()
                .map(|x| self.design.feature_value(x, j) as f64)
                .collect(),
        }
    }

    /// Pseudo-loss of the unpenalized fit restricted to the features in
    /// `support` (design indices), by damped Newton steps.
    ///
    /// Returns `None` when the restricted fit has no finite minimizer in
    /// reach (separable or rank-deficient support).
    pub fn refit_loss(&self, support: &[usize]) -> Option<f64> {
        let n = self.n();
        let m = support.len();
        if m == 0 {
            return Some(std::f64::consts::LN_2);
        }
        if m >= n {
            return None;
        }
        let cols: Vec<Vec<f64>> = support.iter().map(|&j| self.column(j)).collect();
        let predictor = |theta: &[f64]| {
            let mut eta = vec![0.0; n];
            for (c, t) in cols.iter().zip(theta) {
                for (e, v) in eta.iter_mut().zip(c) {
                    *e += t * v;
                }
            }
            eta
        };
        let mut theta = vec![0.0; m];
        let mut eta = vec![0.0; n];
        let mut f = self.loss_from_predictor(&eta);
        for _ in 0..100 {
            let mut grad = vec![0.0; m];
            let mut hess = SymMatrix::zeros(m);
            let w: Vec<(f64, f64)> = eta
                .iter()
                .zip(&self.labels)
                .map(|(e, y)| {
                    let s = sigmoid(-y * e);
                    (-y * s / n as f64, s * (1.0 - s) / n as f64)
                })
                .collect();
            for a in 0..m {
                grad[a] = cols[a].iter().zip(&w).map(|(v, (g, _))| v * g).sum();
                for b in 0..=a {
                    let h: f64 = cols[a].iter().zip(&cols[b]).zip(&w).map(|((u, v), (_, h))| u * v * h).sum();
                    hess.set(a, b, h);
                    hess.set(b, a, h);
                }
            }
            let gmax = grad.iter().fold(0.0f64, |acc, g| acc.max(g.abs()));
            if gmax < 1e-10 {
                return Some(f);
            }
            let chol = Cholesky::factor(&hess).ok()?;
            let mut dir = grad.clone();
            chol.solve_in_place(&mut dir);
            let decrement: f64 = dir.iter().zip(&grad).map(|(d, g)| d * g).sum();
            let mut t = 1.0;
            loop {
                let trial: Vec<f64> = theta.iter().zip(&dir).map(|(th, d)| th - t * d).collect();
                let eta_t = predictor(&trial);
                let f_t = self.loss_from_predictor(&eta_t);
                if f_t <= f - 0.25 * t * decrement {
                    theta = trial;
                    eta = eta_t;
                    f = f_t;
                    break;
                }
                t *= 0.5;
                if t < 1e-12 {
                    return Some(f);
                }
            }
            if theta.iter().any(|v| v.abs() > DIVERGENCE_THETA) {
                return None;
            }
        }
        Some(f)
    }

    /// `l(J_r)` evaluated directly on the J scale.
    pub fn pseudo_loss(&self, coef: &[f64]) -> f64 {
        let mut eta = vec![0.0; self.n()];
        self.mul(coef, &mut eta);
        let s: f64 = eta
            .iter()
            .zip(&self.labels)
            .map(|(e, y)| {
                // a = k m_r = k! <J, z>
                let a = self.fact_k * e;
                // |a| - y a is exactly 0 or 2|a|; add the log1p tail last
                (a.abs() - y * a) + (-2.0 * a.abs()).exp().ln_1p()
            })
            .sum();
        s / self.n() as f64
    }

    /// J-scale gradient `-(k!/n) sum_i z_i (x_{i,r} - tanh(k m_r(x_i)))`.
    pub fn pseudo_grad(&self, coef: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut eta = vec![0.0; n];
        self.mul(coef, &mut eta);
        let w: Vec<f64> = eta
            .iter()
            .zip(&self.labels)
            .map(|(e, y)| -self.fact_k * (y - (self.fact_k * e).tanh()) / n as f64)
            .collect();
        let mut out = vec![0.0; self.design.len()];
        self.tmul(&w, &mut out);
        out
    }

    /// Penalized objective `l(J_r) + lambda ||J_r||_1`.
    pub fn objective(&self, coef: &[f64], lambda: f64) -> f64 {
        self.pseudo_loss(coef) + lambda * coef.iter().map(|c| c.abs()).sum::<f64>()
    }

    /// Maximum violation of the subgradient optimality conditions (J scale).
    pub fn kkt_residual(&self, coef: &[f64], lambda: f64) -> f64 {
        kkt_from_grad(&self.pseudo_grad(coef), coef, lambda)
    }

    /// `|| grad l(0) ||_inf`: the smallest penalty with an all-zero solution.
    pub fn lambda_max(&self) -> f64 {
        let zero = vec![0.0; self.design.len()];
        self.pseudo_grad(&zero)
            .iter()
            .fold(0.0, |m, g| m.max(g.abs()))
    }

    /// Minimizes `l(J_r) + lambda ||J_r||_1`.
    pub fn solve(&self, lambda: f64, opts: &SolveOptions) -> Result<SolveReport> {
        self.solve_from(lambda, None, opts)
    }

    /// As [`solve`](Self::solve), starting from a J-scale warm start.
    pub fn solve_from(&self, lambda: f64, warm: Option<&[f64]>, opts: &SolveOptions) -> Result<SolveReport> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::arg(format!("penalty {lambda} must be a finite nonnegative number")));
        }
        opts.validate()?;
        let nf = self.design.len();
        let n = self.n();
        let scale = self.scale();
        let mu = lambda / scale;

        let mut x: Vec<f64> = match warm {
            Some(w) if w.len() == nf => w.iter().map(|v| v * scale).collect(),
            Some(w) => {
                return Err(Error::Dimension {
                    expected: nf,
                    got: w.len(),
                })
            }
            None => vec![0.0; nf],
        };
        let mut eta_x = vec![0.0; n];
        self.mul(&x, &mut eta_x);
        let mut obj_x = self.loss_from_predictor(&eta_x) + mu * l1(&x);

        let mut work = vec![0.0; n];
        let mut grad = vec![0.0; nf];
        let mut y = x.clone();
        let mut eta_y = eta_x.clone();
        let mut z = vec![0.0; nf];
        let mut eta_z = vec![0.0; n];
        let mut momentum = 1.0f64;
        let mut step = 1.0 / self.lipschitz();
        let mut stalled = 0usize;
        let mut history = Vec::new();

        let kkt_theta = |grad: &[f64], x: &[f64]| kkt_from_grad(grad, x, mu);
        // without a penalty, a fit that classifies every sample correctly has
        // no finite minimizer; the KKT gate is then meaningless
        let separated = |eta: &[f64]| lambda == 0.0 && self.labels.iter().zip(eta).all(|(y, e)| y * e > 0.0);

        // gradient at x also serves the first iteration (y == x)
        self.grad_from_predictor(&eta_x, &mut work, &mut grad);
        let mut residual = kkt_theta(&grad, &x) * scale;
        if residual < opts.kkt_tol && !separated(&eta_x) {
            return self.finish(x, obj_x, lambda, 0, residual, StopReason::Kkt, history, opts);
        }
        let mut grad_is_at_y = true;

        for iter in 1..=opts.max_iters {
            if !grad_is_at_y {
                self.grad_from_predictor(&eta_y, &mut work, &mut grad);
            }
            let f_y = self.loss_from_predictor(&eta_y);

            // backtracking on the quadratic upper model
            let f_z = loop {
                for ((zj, yj), gj) in z.iter_mut().zip(&y).zip(&grad) {
                    *zj = soft_threshold(yj - step * gj, step * mu);
                }
                self.mul(&z, &mut eta_z);
                let f_z = self.loss_from_predictor(&eta_z);
                let mut lin = 0.0;
                let mut quad = 0.0;
                for ((zj, yj), gj) in z.iter().zip(&y).zip(&grad) {
                    let d = zj - yj;
                    lin += gj * d;
                    quad += d * d;
                }
                let bound = f_y + lin + quad / (2.0 * step);
                if f_z <= bound + 1e-14 * f_y.abs() || step < 1e-30 {
                    break f_z;
                }
                step *= opts.backtrack;
            };
            let obj_z = f_z + mu * l1(&z);

            if obj_z > obj_x {
                // reject, restart momentum from x
                let restarted = momentum == 1.0 && y == x;
                momentum = 1.0;
                y.copy_from_slice(&x);
                eta_y.copy_from_slice(&eta_x);
                self.grad_from_predictor(&eta_x, &mut work, &mut grad);
                grad_is_at_y = true;
                residual = kkt_theta(&grad, &x) * scale;
                if residual < opts.kkt_tol && !separated(&eta_x) {
                    return self.finish(x, obj_x, lambda, iter, residual, StopReason::Kkt, history, opts);
                }
                if restarted && !separated(&eta_x) {
                    // a plain proximal step from x failed to descend: rounding floor
                    return self.finish(x, obj_x, lambda, iter, residual, StopReason::Stall, history, opts);
                }
                continue;
            }

            let rel_change = (obj_x - obj_z) / obj_x.abs().max(f64::MIN_POSITIVE);
            debug_assert!(obj_z <= obj_x);
            history.push(obj_z);

            let next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            let beta = (momentum - 1.0) / next;
            for ((yj, zj), xj) in y.iter_mut().zip(&z).zip(&x) {
                *yj = zj + beta * (zj - xj);
            }
            for ((ey, ez), ex) in eta_y.iter_mut().zip(&eta_z).zip(&eta_x) {
                *ey = ez + beta * (ez - ex);
            }
            momentum = next;
            std::mem::swap(&mut x, &mut z);
            std::mem::swap(&mut eta_x, &mut eta_z);
            obj_x = obj_z;
            grad_is_at_y = false;

            stalled = if rel_change < opts.objective_rel_tol {
                stalled + 1
            } else {
                0
            };
            let check = iter % 10 == 0 || stalled > 0;
            if check {
                self.grad_from_predictor(&eta_x, &mut work, &mut z);
                residual = kkt_theta(&z, &x) * scale;
                if residual < opts.kkt_tol && !separated(&eta_x) {
                    return self.finish(x, obj_x, lambda, iter, residual, StopReason::Kkt, history, opts);
                }
                if stalled >= opts.stall_window && !separated(&eta_x) {
                    return self.finish(x, obj_x, lambda, iter, residual, StopReason::Stall, history, opts);
                }
            }
        }

        let max_abs = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Err(Error::NonConvergence {
            iterations: opts.max_iters,
            residual,
            diverging: max_abs > DIVERGENCE_THETA || separated(&eta_x),
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        theta: Vec<f64>,
        objective_theta: f64,
        lambda: f64,
        iterations: usize,
        residual: f64,
        stop: StopReason,
        history: Vec<f64>,
        opts: &SolveOptions,
    ) -> Result<SolveReport> {
        let scale = self.scale();
        let max_abs = theta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if lambda == 0.0 && max_abs > DIVERGENCE_THETA {
            // unpenalized and (quasi-)separable: the infimum is not attained
            return Err(Error::NonConvergence {
                iterations,
                residual,
                diverging: true,
            });
        }
        let dense: Vec<f64> = theta
            .iter()
            .map(|t| {
                let j = t / scale;
                if j.abs() <= opts.zero_threshold {
                    0.0
                } else {
                    j
                }
            })
            .collect();
        let thresholded = dense
            .iter()
            .zip(&theta)
            .any(|(d, t)| *d == 0.0 && *t != 0.0);
        let kkt_residual = if thresholded {
            self.kkt_residual(&dense, lambda)
        } else {
            residual
        };
        Ok(SolveReport {
            coef: SparseCoefVector::from_dense(&self.design, &dense, 0.0),
            dense,
            lambda,
            objective: objective_theta,
            iterations,
            kkt_residual,
            stop,
            objective_history: history,
        })
    }
}

/// Theta magnitude beyond which a non-converged run is reported as diverging
/// (a conditional probability of `1 / (1 + e^-50)`).
const DIVERGENCE_THETA: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopReason {
    /// KKT residual below tolerance.
    Kkt,
    /// Objective stopped changing before the KKT test passed.
    Stall,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub coef: SparseCoefVector,
    /// J-scale coefficients over `T_r`, thresholded.
    pub dense: Vec<f64>,
    pub lambda: f64,
    /// Final penalized objective (identical on both scales).
    pub objective: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub stop: StopReason,
    /// Objective after every accepted iteration; non-increasing.
    pub objective_history: Vec<f64>,
}

#[inline]
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

#[inline]
fn sigmoid(t: f64) -> f64 {
    crate::tensor::logistic(t)
}

#[inline]
fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn kkt_from_grad(grad: &[f64], coef: &[f64], lambda: f64) -> f64 {
    grad.iter()
        .zip(coef)
        .map(|(g, c)| {
            if *c != 0.0 {
                (g + lambda * c.signum()).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

fn check_node(samples: &SampleMatrix, r: usize) -> Result<()> {
    if r >= samples.p() {
        return Err(Error::arg(format!("vertex {r} out of range for p={}", samples.p())));
    }
    Ok(())
}

/// `l(J_r)` on the given samples (penalty excluded).
pub fn pseudo_loss(coef: &SparseCoefVector, samples: &SampleMatrix, k: usize, r: usize) -> Result<f64> {
    check_node(samples, r)?;
    let problem = NodeProblem::new(samples, k, r, &SolveOptions::default())?;
    Ok(problem.pseudo_loss(&coef_dense(coef, &problem)?))
}

/// J-scale gradient of `l` over `T_r` (in design order).
pub fn pseudo_grad(coef: &SparseCoefVector, samples: &SampleMatrix, k: usize, r: usize) -> Result<Vec<f64>> {
    check_node(samples, r)?;
    let problem = NodeProblem::new(samples, k, r, &SolveOptions::default())?;
    Ok(problem.pseudo_grad(&coef_dense(coef, &problem)?))
}

/// Solves the penalized node regression and returns the thresholded
/// coefficients.
pub fn solve_l1(samples: &SampleMatrix, k: usize, r: usize, lambda: f64, opts: &SolveOptions) -> Result<SparseCoefVector> {
    check_node(samples, r)?;
    let problem = NodeProblem::new(samples, k, r, opts)?;
    Ok(problem.solve(lambda, opts)?.coef)
}

/// KKT residual of `coef` for penalty `lambda` (J scale).
pub fn kkt_residual(coef: &SparseCoefVector, samples: &SampleMatrix, k: usize, r: usize, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::arg("KKT residual needs a positive penalty"));
    }
    check_node(samples, r)?;
    let problem = NodeProblem::new(samples, k, r, &SolveOptions::default())?;
    Ok(problem.kkt_residual(&coef_dense(coef, &problem)?, lambda))
}

fn coef_dense(coef: &SparseCoefVector, problem: &NodeProblem<'_>) -> Result<Vec<f64>> {
    if coef.r != problem.design.r {
        return Err(Error::arg(format!(
            "coefficients belong to node {}, not {}",
            coef.r, problem.design.r
        )));
    }
    for (s, _) in coef.iter() {
        if problem.design.index_of(s).is_none() {
            return Err(Error::arg(format!("{s:?} is not a feature of node {}", coef.r)));
        }
    }
    Ok(coef.to_dense(&problem.design))
}

/// `16 k! ((2 - alpha) / alpha) sqrt(log C(p-1, k-1) / n)`.
pub fn lambda_theory(n: usize, p: usize, k: usize, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::arg(format!("incoherence alpha={alpha} must lie in (0, 1]")));
    }
    if n == 0 {
        return Err(Error::arg("n must be at least 1"));
    }
    if k < 1 || p < k {
        return Err(Error::arg(format!("invalid (p, k) = ({p}, {k})")));
    }
    let log_c = ln_binomial(p - 1, k - 1);
    if log_c < 2f64.ln() - 1e-12 {
        return Err(Error::arg("C(p-1, k-1) must be at least 2"));
    }
    Ok(16.0 * factorial(k)? * ((2.0 - alpha) / alpha) * (log_c / n as f64).sqrt())
}

/// `c sqrt(k log p / n)`.
pub fn lambda_practice(n: usize, p: usize, k: usize, c: f64) -> Result<f64> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::arg(format!("constant c={c} must be positive")));
    }
    if n == 0 || p < 2 {
        return Err(Error::arg(format!("need n >= 1 and p >= 2, got n={n}, p={p}")));
    }
    Ok(c * (k as f64 * (p as f64).ln() / n as f64).sqrt())
}

/// Default BIC grid for `c`: 0.1, 0.2, ..., 2.0.
pub fn default_c_grid() -> Vec<f64> {
    (1..=20).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BicScore {
    pub c: f64,
    pub lambda: f64,
    pub bic: f64,
    pub df: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BicSelection {
    pub lambda: f64,
    pub c: f64,
    /// One score per grid point, in grid order.
    pub scores: Vec<BicScore>,
}

/// Which loss enters the information criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IcLoss {
    /// Pseudo-loss of the penalized fit itself.
    #[default]
    Penalized,
    /// Pseudo-loss of an unpenalized refit on the penalized fit's support.
    Refit,
}

/// Which of several equally scored grid points wins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Smallest `c`.
    #[default]
    Smallest,
    /// Middle of the tied values in `c` order (lower middle for an even count).
    Middle,
}

/// Grid search for `c` in `lambda_c = c sqrt(k ln p / n)` by
/// `2 n l + df (ln n + 2 gamma ln N)`, `N` the feature count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionRule {
    pub c_grid: Vec<f64>,
    pub gamma: f64,
    pub loss: IcLoss,
    pub tie: TieBreak,
}

impl SelectionRule {
    /// Plain BIC on the penalized fits over [`default_c_grid`].
    pub fn bic() -> Self {
        SelectionRule {
            c_grid: default_c_grid(),
            gamma: 0.0,
            loss: IcLoss::Penalized,
            tie: TieBreak::Smallest,
        }
    }

    /// Extended BIC (`gamma = 0.375`) on support refits over [`wide_c_grid`].
    pub fn refit_ebic() -> Self {
        SelectionRule {
            c_grid: wide_c_grid(),
            gamma: 0.375,
            loss: IcLoss::Refit,
            tie: TieBreak::Middle,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.c_grid.is_empty() {
            return Err(Error::arg("BIC grid is empty"));
        }
        if self.c_grid.iter().any(|c| !(*c > 0.0) || !c.is_finite()) {
            return Err(Error::arg("BIC grid values must be positive"));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::arg(format!("EBIC gamma={} must be nonnegative", self.gamma)));
        }
        Ok(())
    }
}

impl Default for SelectionRule {
    fn default() -> Self {
        Self::refit_ebic()
    }
}

/// 0.5, 1.0, ..., 10.0.
pub fn wide_c_grid() -> Vec<f64> {
    (1..=20).map(|i| i as f64 / 2.0).collect()
}

/// Picks `c` on a grid by `BIC(c) = 2 n l(J_hat) + df ln n`, with
/// `lambda_c = c sqrt(k ln p / n)`. Ties go to the smaller `c`.
///
/// Fits are warm-started from larger to smaller penalties.
pub fn bic_select(problem: &NodeProblem<'_>, c_grid: &[f64], opts: &SolveOptions) -> Result<BicSelection> {
    let rule = SelectionRule {
        c_grid: c_grid.to_vec(),
        ..SelectionRule::bic()
    };
    select_lambda(problem, &rule, opts)
}

/// Grid search under `rule`. Fits run from the largest `c` down, each
/// warm-started from the previous one.
pub fn select_lambda(problem: &NodeProblem<'_>, rule: &SelectionRule, opts: &SolveOptions) -> Result<BicSelection> {
    rule.validate()?;
    let c_grid = &rule.c_grid;
    let n = problem.n();
    let design = problem.design();
    let per_df = (n as f64).ln() + 2.0 * rule.gamma * (design.len() as f64).ln();
    let mut order: Vec<usize> = (0..c_grid.len()).collect();
    order.sort_by(|&a, &b| c_grid[b].total_cmp(&c_grid[a]));
    let mut scores = vec![None; c_grid.len()];
    let mut warm: Option<Vec<f64>> = None;
    for idx in order {
        let c = c_grid[idx];
        let lambda = lambda_practice(n, design.p(), design.k(), c)?;
        let fit = problem.solve_from(lambda, warm.as_deref(), opts)?;
        let df = fit.coef.nnz();
        let loss = match rule.loss {
            IcLoss::Penalized => Some(problem.pseudo_loss(&fit.dense)),
            IcLoss::Refit => {
                let support: Vec<usize> = (0..fit.dense.len()).filter(|&j| fit.dense[j] != 0.0).collect();
                problem.refit_loss(&support)
            }
        };
        let bic = loss.map_or(f64::INFINITY, |l| 2.0 * n as f64 * l + df as f64 * per_df);
        scores[idx] = Some(BicScore { c, lambda, bic, df });
        warm = Some(fit.dense);
    }
    let scores: Vec<BicScore> = scores.into_iter().map(|s| s.expect("every grid point scored")).collect();
    let mut ranked: Vec<&BicScore> = scores.iter().collect();
    ranked.sort_by(|a, b| a.bic.total_cmp(&b.bic).then(a.c.total_cmp(&b.c)));
    let best = match rule.tie {
        TieBreak::Smallest => ranked[0],
        TieBreak::Middle => {
            let tied = ranked.iter().take_while(|s| s.bic == ranked[0].bic).count();
            ranked[(tied - 1) / 2]
        }
    };
    Ok(BicSelection {
        lambda: best.lambda,
        c: best.c,
        scores,
    })
}
