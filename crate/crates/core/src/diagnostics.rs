//! Fisher blocks, dependency and incoherence constants, score norms, the
//! uniqueness certificate of a penalized fit, and sample-size concentration
//! probes.
//!
//! Population quantities enumerate all `2^p` states. All moments of the
//! exact law come out of one Walsh-Hadamard transform, so a Fisher entry
//! `E[eta z_a z_b]` is a single lookup at the symmetric difference of `a`
//! and `b`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{factorial, ln_binomial, splitmix64};
use crate::error::{Error, Result};
use crate::linalg::{jacobi_eigenvalues, power_iteration, Cholesky, SymMatrix};
use crate::regression::{NodeDesign, SparseCoefVector};
use crate::sampler::{exact_sample_with_cap, SampleMatrix};
use crate::tensor::{product, InteractionTensor, Subset, DEFAULT_ENUMERATION_CAP};

/// Relative tolerance for the Jacobi eigenvalues of `Q_SS`.
pub const EIGEN_TOL: f64 = 1e-10;
pub const POWER_TOL: f64 = 1e-8;
pub const POWER_MAX_ITER: usize = 10_000;
/// Below this `C_min`, `Q_SS` is treated as singular.
pub const SINGULAR_TOL: f64 = 1e-12;
/// Rows of `Q_ScS` handled per work unit.
pub const ROW_BLOCK: usize = 256;

/// `(k!)^2 / cosh^2(k m_r(x))`, the curvature weight of the node-`r`
/// conditional likelihood at `x`.
pub fn eta(t: &InteractionTensor, x: &[i8], r: usize) -> Result<f64> {
    let m = t.local_field(x, r)?;
    Ok(eta_from_field(factorial(t.k())?, t.k() as f64 * m))
}

/// `4 f^2 e^{-2|a|} / (1 + e^{-2|a|})^2` with `a = k x_r m_r`.
#[inline]
fn eta_from_field(fact_k: f64, a: f64) -> f64 {
    let e = (-2.0 * a.abs()).exp();
    4.0 * fact_k * fact_k * e / ((1.0 + e) * (1.0 + e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FisherSource {
    Population,
    Sample,
}

/// `Q_SS` and `Q_ScS` of one node, with `S` a list of (k-1)-subsets of
/// `T_r` and `Sc` the rest of `T_r` in design order.
#[derive(Debug, Clone)]
pub struct FisherBlocks {
    pub r: usize,
    pub support: Vec<Subset>,
    pub complement: Vec<Subset>,
    pub q_ss: SymMatrix,
    /// Row-major, `complement.len() x support.len()`.
    pub q_scs: Vec<f64>,
    pub source: FisherSource,
}

impl FisherBlocks {
    pub fn d(&self) -> usize {
        self.support.len()
    }

    pub fn q_scs_row(&self, i: usize) -> &[f64] {
        let d = self.d();
        &self.q_scs[i * d..(i + 1) * d]
    }
}

/// The true neighborhood `S_r` of `r`, or all of `T_r` when `r` has no
/// incident edge.
pub fn node_support(t: &InteractionTensor, r: usize, design: &NodeDesign) -> Vec<Subset> {
    let s: Vec<Subset> = t.neighborhood(r).into_iter().map(|(s, _)| s).collect();
    if s.is_empty() {
        design.features().to_vec()
    } else {
        s
    }
}

fn split_support(design: &NodeDesign, support: &[Subset]) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut s_idx = Vec::with_capacity(support.len());
    for s in support {
        let j = design
            .index_of(s)
            .ok_or_else(|| Error::arg(format!("{s:?} is not a feature of node {}", design.r())))?;
        s_idx.push(j);
    }
    let mut in_s = vec![false; design.len()];
    for &j in &s_idx {
        if std::mem::replace(&mut in_s[j], true) {
            return Err(Error::arg("support lists a feature twice"));
        }
    }
    let sc_idx = (0..design.len()).filter(|&j| !in_s[j]).collect();
    Ok((s_idx, sc_idx))
}

fn mask(subset: &[usize]) -> usize {
    subset.iter().fold(0usize, |m, &v| m | (1 << v))
}

/// In-place Walsh-Hadamard transform, then sign-corrected so that entry `m`
/// is `sum_x w(x) prod_{v in m} x_v` under the `bit set = +1` state indexing.
fn moments_of(mut w: Vec<f64>) -> Vec<f64> {
    let len = w.len();
    let mut h = 1;
    while h < len {
        for block in (0..len).step_by(2 * h) {
            for i in block..block + h {
                let (a, b) = (w[i], w[i + h]);
                w[i] = a + b;
                w[i + h] = a - b;
            }
        }
        h *= 2;
    }
    for (m, v) in w.iter_mut().enumerate() {
        if m.count_ones() % 2 == 1 {
            *v = -*v;
        }
    }
    w
}

/// Exact moments `E[eta z z^T]` and `E[z z^T]` entries, keyed by mask.
struct PopulationMoments {
    weighted: Vec<f64>,
    plain: Vec<f64>,
}

fn population_moments(t: &InteractionTensor, r: usize) -> Result<PopulationMoments> {
    let dist = t.exact_distribution_with_cap(DEFAULT_ENUMERATION_CAP)?;
    let fact_k = factorial(t.k())?;
    let k = t.k() as f64;
    let p = t.p();
    let mut x = vec![0i8; p];
    let weighted: Vec<f64> = dist
        .probs()
        .iter()
        .enumerate()
        .map(|(i, &pi)| {
            for (b, xb) in x.iter_mut().enumerate() {
                *xb = if (i >> b) & 1 == 1 { 1 } else { -1 };
            }
            pi * eta_from_field(fact_k, k * t.local_field_unchecked(&x, r))
        })
        .collect();
    Ok(PopulationMoments {
        weighted: moments_of(weighted),
        plain: moments_of(dist.probs().to_vec()),
    })
}

fn check_node(p: usize, r: usize) -> Result<()> {
    if r >= p {
        return Err(Error::arg(format!("vertex {r} out of range for p={p}")));
    }
    Ok(())
}

/// Exact `Q_r = E_J[eta_r z z^T]` split along the true support of `r`.
pub fn population_fisher(t: &InteractionTensor, r: usize) -> Result<FisherBlocks> {
    check_node(t.p(), r)?;
    let design = NodeDesign::new(t.p(), t.k(), r)?;
    let support = node_support(t, r, &design);
    population_fisher_on(t, r, &design, &support)
}

fn population_fisher_on(t: &InteractionTensor, r: usize, design: &NodeDesign, support: &[Subset]) -> Result<FisherBlocks> {
    let (s_idx, sc_idx) = split_support(design, support)?;
    let mom = population_moments(t, r)?;
    let feats = design.features();
    let masks: Vec<usize> = feats.iter().map(|f| mask(f)).collect();
    let d = s_idx.len();
    let mut q_ss = SymMatrix::zeros(d);
    for (a, &ja) in s_idx.iter().enumerate() {
        for (b, &jb) in s_idx.iter().enumerate() {
            q_ss.set(a, b, mom.weighted[masks[ja] ^ masks[jb]]);
        }
    }
    let mut q_scs = Vec::with_capacity(sc_idx.len() * d);
    for &ji in &sc_idx {
        for &jb in &s_idx {
            q_scs.push(mom.weighted[masks[ji] ^ masks[jb]]);
        }
    }
    Ok(FisherBlocks {
        r,
        support: s_idx.iter().map(|&j| feats[j].clone()).collect(),
        complement: sc_idx.iter().map(|&j| feats[j].clone()).collect(),
        q_ss,
        q_scs,
        source: FisherSource::Population,
    })
}

/// Empirical `(1/n) sum_i eta_r(x_i; J_ref) z_i z_i^T` split along `support`.
///
/// `Q_ScS` is assembled in row blocks of [`ROW_BLOCK`]; the full `N x N`
/// matrix is never formed.
pub fn sample_fisher_blocks(
    samples: &SampleMatrix,
    r: usize,
    j_ref: &InteractionTensor,
    support: &[Subset],
) -> Result<FisherBlocks> {
    if samples.p() != j_ref.p() {
        return Err(Error::Dimension {
            expected: j_ref.p(),
            got: samples.p(),
        });
    }
    check_node(samples.p(), r)?;
    let design = NodeDesign::new(j_ref.p(), j_ref.k(), r)?;
    let fact_k = factorial(j_ref.k())?;
    let k = j_ref.k() as f64;
    let weights: Vec<f64> = samples
        .rows()
        .map(|x| eta_from_field(fact_k, k * j_ref.local_field_unchecked(x, r)))
        .collect();
    sample_blocks_weighted(samples, &design, support, &weights)
}

fn sample_blocks_weighted(
    samples: &SampleMatrix,
    design: &NodeDesign,
    support: &[Subset],
    weights: &[f64],
) -> Result<FisherBlocks> {
    let (s_idx, sc_idx) = split_support(design, support)?;
    let n = samples.n();
    if n == 0 {
        return Err(Error::arg("no samples"));
    }
    let feats = design.features();
    let d = s_idx.len();
    // z_S for every sample, scaled by eta / n
    let zs: Vec<Vec<f64>> = samples
        .rows()
        .zip(weights)
        .map(|(x, w)| s_idx.iter().map(|&j| w * product(x, &feats[j]) as f64 / n as f64).collect())
        .collect();
    let mut q_ss = SymMatrix::zeros(d);
    for (x, wz) in samples.rows().zip(&zs) {
        for (a, &ja) in s_idx.iter().enumerate() {
            let za = product(x, &feats[ja]) as f64;
            for b in 0..=a {
                let v = q_ss.get(a, b) + za * wz[b];
                q_ss.set(a, b, v);
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            q_ss.set(b, a, q_ss.get(a, b));
        }
    }
    let blocks: Vec<Vec<f64>> = sc_idx
        .par_chunks(ROW_BLOCK)
        .map(|rows| {
            let mut out = vec![0.0; rows.len() * d];
            for (x, wz) in samples.rows().zip(&zs) {
                for (i, &ji) in rows.iter().enumerate() {
                    let zi = product(x, &feats[ji]) as f64;
                    for (o, w) in out[i * d..(i + 1) * d].iter_mut().zip(wz) {
                        *o += zi * w;
                    }
                }
            }
            out
        })
        .collect();
    Ok(FisherBlocks {
        r: design.r(),
        support: s_idx.iter().map(|&j| feats[j].clone()).collect(),
        complement: sc_idx.iter().map(|&j| feats[j].clone()).collect(),
        q_ss,
        q_scs: blocks.concat(),
        source: FisherSource::Sample,
    })
}

/// Where the covariance `E[z z^T]` of the node features comes from.
#[derive(Debug, Clone, Copy)]
pub enum Covariance<'a> {
    Population(&'a InteractionTensor),
    Sample(&'a SampleMatrix),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DependencyConstants {
    pub c_min: f64,
    pub d_max: f64,
}

/// Smallest eigenvalue of `Q_SS` (Jacobi).
pub fn c_min(blocks: &FisherBlocks) -> Result<f64> {
    if blocks.d() == 0 {
        return Err(Error::arg("Q_SS is empty"));
    }
    Ok(jacobi_eigenvalues(&blocks.q_ss, EIGEN_TOL)?[0])
}

/// `(C_min, D_max)`: the smallest eigenvalue of `Q_SS` and the largest of
/// the node-feature covariance, the latter by matrix-free power iteration.
pub fn dependency_constants(blocks: &FisherBlocks, cov: Covariance<'_>, k: usize) -> Result<DependencyConstants> {
    let c = c_min(blocks)?;
    let d_max = match cov {
        Covariance::Population(t) => population_d_max(t, blocks.r)?,
        Covariance::Sample(s) => sample_d_max(s, k, blocks.r)?,
    };
    Ok(DependencyConstants { c_min: c, d_max })
}

/// Largest eigenvalue of `E_J[z z^T]` over `T_r`.
pub fn population_d_max(t: &InteractionTensor, r: usize) -> Result<f64> {
    check_node(t.p(), r)?;
    let design = NodeDesign::new(t.p(), t.k(), r)?;
    let mom = population_moments(t, r)?;
    let masks: Vec<usize> = design.features().iter().map(|f| mask(f)).collect();
    let est = power_iteration(
        masks.len(),
        |v, out| {
            for (o, &ma) in out.iter_mut().zip(&masks) {
                *o = masks.iter().zip(v).map(|(&mb, vb)| mom.plain[ma ^ mb] * vb).sum();
            }
        },
        POWER_TOL,
        POWER_MAX_ITER,
    )?;
    Ok(est.eigenvalue)
}

/// Largest eigenvalue of `(1/n) sum_i z_i z_i^T` over `T_r`.
pub fn sample_d_max(samples: &SampleMatrix, k: usize, r: usize) -> Result<f64> {
    check_node(samples.p(), r)?;
    let design = NodeDesign::new(samples.p(), k, r)?;
    let n = samples.n();
    if n == 0 {
        return Err(Error::arg("no samples"));
    }
    let z: Vec<Vec<f64>> = samples
        .rows()
        .map(|x| design.features().iter().map(|f| product(x, f) as f64).collect())
        .collect();
    let est = power_iteration(
        design.len(),
        |v, out| {
            out.iter_mut().for_each(|o| *o = 0.0);
            for zi in &z {
                let s: f64 = zi.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                for (o, a) in out.iter_mut().zip(zi) {
                    *o += s * a;
                }
            }
        },
        POWER_TOL,
        POWER_MAX_ITER,
    )?;
    Ok(est.eigenvalue)
}

/// `||Q_ScS Q_SS^{-1}||_inf` (maximum absolute row sum), by Cholesky solves.
/// An empty complement gives 0.
pub fn incoherence(blocks: &FisherBlocks) -> Result<f64> {
    let c = c_min(blocks)?;
    if c < SINGULAR_TOL {
        return Err(Error::Diagnostic(format!("Q_SS is singular (smallest eigenvalue {c:.3e})")));
    }
    let chol = Cholesky::factor(&blocks.q_ss)?;
    let mut worst: f64 = 0.0;
    for i in 0..blocks.complement.len() {
        // Q_SS symmetric: row i of Q_ScS Q_SS^{-1} is Q_SS^{-1} q_i
        let mut row = blocks.q_scs_row(i).to_vec();
        chol.solve_in_place(&mut row);
        worst = worst.max(row.iter().map(|v| v.abs()).sum());
    }
    Ok(worst)
}

/// Node-`r` coefficients of a tensor, as a sparse coefficient vector.
pub fn node_coefficients(t: &InteractionTensor, r: usize) -> Result<SparseCoefVector> {
    let design = NodeDesign::new(t.p(), t.k(), r)?;
    SparseCoefVector::from_entries(&design, t.neighborhood(r))
}

/// `||W||_inf` with `W = -grad l(J_r)` at the true coefficients.
pub fn score_sup(samples: &SampleMatrix, r: usize, truth: &InteractionTensor) -> Result<f64> {
    if samples.p() != truth.p() {
        return Err(Error::Dimension {
            expected: truth.p(),
            got: samples.p(),
        });
    }
    let g = crate::regression::pseudo_grad(&node_coefficients(truth, r)?, samples, truth.k(), r)?;
    Ok(g.iter().fold(0.0, |m, v| m.max(v.abs())))
}

/// Right-hand side of the score tail bound:
/// `2 exp(-n alpha^2 lambda^2 / (128 (2 - alpha)^2 (k!)^2) + ln C(p-1, k-1))`.
pub fn score_tail_bound(n: usize, p: usize, k: usize, alpha: f64, lambda: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::arg(format!("alpha={alpha} must lie in (0, 1]")));
    }
    let f = factorial(k)?;
    let expo = -(n as f64) * alpha * alpha * lambda * lambda / (128.0 * (2.0 - alpha).powi(2) * f * f)
        + ln_binomial(p - 1, k - 1);
    Ok(2.0 * expo.exp())
}

/// Whether `(2 - alpha) / lambda * ||W||_inf >= alpha / 4`.
pub fn score_event(w_sup: f64, alpha: f64, lambda: f64) -> bool {
    (2.0 - alpha) / lambda * w_sup >= alpha / 4.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniquenessCertificate {
    /// Every inactive coordinate of `-grad l / lambda` is strictly inside
    /// `(-1, 1)`.
    pub dual_strict: bool,
    /// The Hessian of `l` restricted to the active set is positive definite.
    pub hessian_pd: bool,
    pub max_inactive_dual: f64,
    /// `+inf` for an empty active set.
    pub min_active_eigenvalue: f64,
}

impl UniquenessCertificate {
    pub fn certified(&self) -> bool {
        self.dual_strict && self.hessian_pd
    }
}

/// Strict dual feasibility and active-set curvature of a fit at `lambda`.
pub fn uniqueness_certificate(
    coef: &SparseCoefVector,
    samples: &SampleMatrix,
    k: usize,
    lambda: f64,
) -> Result<UniquenessCertificate> {
    if !(lambda > 0.0) {
        return Err(Error::arg("uniqueness certificate needs a positive penalty"));
    }
    let r = coef.r;
    check_node(samples.p(), r)?;
    let design = NodeDesign::new(samples.p(), k, r)?;
    let grad = crate::regression::pseudo_grad(coef, samples, k, r)?;
    let dense = coef.to_dense(&design);
    let max_inactive_dual = grad
        .iter()
        .zip(&dense)
        .filter(|(_, c)| **c == 0.0)
        .map(|(g, _)| g.abs() / lambda)
        .fold(0.0, f64::max);
    let active: Vec<Subset> = coef.iter().map(|(s, _)| s.clone()).collect();
    let min_active_eigenvalue = if active.is_empty() {
        f64::INFINITY
    } else {
        // Hessian of l is (1/n) sum eta z z^T evaluated at the fit itself
        let fact_k = factorial(k)?;
        let fact_km1 = factorial(k - 1)?;
        let weights: Vec<f64> = samples
            .rows()
            .map(|x| {
                let m: f64 = coef.iter().map(|(s, v)| v * product(x, s) as f64).sum::<f64>() * fact_km1;
                eta_from_field(fact_k, k as f64 * m)
            })
            .collect();
        let blocks = sample_blocks_weighted(samples, &design, &active, &weights)?;
        jacobi_eigenvalues(&blocks.q_ss, EIGEN_TOL)?[0]
    };
    Ok(UniquenessCertificate {
        dual_strict: max_inactive_dual < 1.0 - 1e-8,
        hessian_pd: min_active_eigenvalue > 1e-10,
        max_inactive_dual,
        min_active_eigenvalue,
    })
}

/// Outcome of the l2-consistency check on one fitted node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyCheck {
    /// `lambda <= C_min^2 / (40 d D_max (k!)^3)` and `||W||_inf <= lambda/4`.
    pub hypotheses_hold: bool,
    /// `||J_hat_S - J_S||_2`.
    pub error: f64,
    /// `5 / (2 C_min) lambda sqrt(d)`.
    pub bound: f64,
}

impl ConsistencyCheck {
    pub fn violated(&self) -> bool {
        self.hypotheses_hold && self.error > self.bound
    }
}

/// Compares a fit with the truth on the true support; a violation under the
/// stated hypotheses is logged, not raised.
pub fn consistency_check(
    fit: &SparseCoefVector,
    truth: &InteractionTensor,
    constants: DependencyConstants,
    lambda: f64,
    w_sup: f64,
) -> Result<ConsistencyCheck> {
    let r = fit.r;
    let s = truth.neighborhood(r);
    let d = s.len().max(1) as f64;
    let f = factorial(truth.k())?;
    let cap = constants.c_min.powi(2) / (40.0 * d * constants.d_max * f.powi(3));
    let error = s.iter().map(|(sub, j)| (fit.get(sub) - j).powi(2)).sum::<f64>().sqrt();
    let check = ConsistencyCheck {
        hypotheses_hold: lambda <= cap && w_sup <= lambda / 4.0,
        error,
        bound: 5.0 / (2.0 * constants.c_min) * lambda * d.sqrt(),
    };
    if check.violated() {
        log::warn!(
            "node {r}: ||J_hat_S - J_S||_2 = {:.4e} exceeds {:.4e} under the stated hypotheses",
            check.error,
            check.bound
        );
    }
    Ok(check)
}

/// Population constants of one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDiagnostics {
    pub r: usize,
    pub support_size: usize,
    /// True when `r` has no incident edge and `S` was taken as all of `T_r`.
    pub support_is_full: bool,
    pub c_min: f64,
    pub d_max: f64,
    pub incoherence: f64,
    /// `1 - incoherence` when positive.
    pub implied_alpha: Option<f64>,
    pub w_sup: Option<f64>,
    pub uniqueness: Option<UniquenessCertificate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub p: usize,
    pub k: usize,
    pub nodes: Vec<NodeDiagnostics>,
    pub c_min_min: f64,
    pub d_max_max: f64,
    pub incoherence_max: f64,
}

/// Population diagnostics at one node.
pub fn node_diagnostics(t: &InteractionTensor, r: usize) -> Result<NodeDiagnostics> {
    let blocks = population_fisher(t, r)?;
    let consts = dependency_constants(&blocks, Covariance::Population(t), t.k())?;
    let inc = incoherence(&blocks)?;
    Ok(NodeDiagnostics {
        r,
        support_size: blocks.d(),
        support_is_full: t.incident(r).next().is_none(),
        c_min: consts.c_min,
        d_max: consts.d_max,
        incoherence: inc,
        implied_alpha: (inc < 1.0).then_some(1.0 - inc),
        w_sup: None,
        uniqueness: None,
    })
}

/// Population diagnostics at every node, with the extremes across nodes.
pub fn diagnose(t: &InteractionTensor) -> Result<DiagnosticsReport> {
    let nodes: Vec<NodeDiagnostics> = (0..t.p())
        .into_par_iter()
        .map(|r| node_diagnostics(t, r))
        .collect::<Result<_>>()?;
    Ok(DiagnosticsReport {
        p: t.p(),
        k: t.k(),
        c_min_min: nodes.iter().map(|d| d.c_min).fold(f64::INFINITY, f64::min),
        d_max_max: nodes.iter().map(|d| d.d_max).fold(f64::NEG_INFINITY, f64::max),
        incoherence_max: nodes.iter().map(|d| d.incoherence).fold(f64::NEG_INFINITY, f64::max),
        nodes,
    })
}

/// One line of a concentration probe. `n = None` is the population row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub n: Option<usize>,
    pub c_min: f64,
    pub d_max: f64,
    pub incoherence: f64,
    pub dev_c_min: f64,
    pub dev_d_max: f64,
    pub dev_incoherence: f64,
}

/// Sample constants at node `r` for each `n` (exact draws, seed derived from
/// `(seed, n)`), next to the population values. Sample Fisher blocks are
/// evaluated at the true couplings on the true support.
pub fn concentration_probe(t: &InteractionTensor, r: usize, n_grid: &[usize], seed: u64) -> Result<Vec<ProbeRow>> {
    let pop = population_fisher(t, r)?;
    let pop_c = dependency_constants(&pop, Covariance::Population(t), t.k())?;
    let pop_inc = incoherence(&pop)?;
    let mut rows = vec![ProbeRow {
        n: None,
        c_min: pop_c.c_min,
        d_max: pop_c.d_max,
        incoherence: pop_inc,
        dev_c_min: 0.0,
        dev_d_max: 0.0,
        dev_incoherence: 0.0,
    }];
    for &n in n_grid {
        let s = exact_sample_with_cap(t, n, splitmix64(seed ^ n as u64), DEFAULT_ENUMERATION_CAP)?;
        let blocks = sample_fisher_blocks(&s, r, t, &pop.support)?;
        let c = dependency_constants(&blocks, Covariance::Sample(&s), t.k())?;
        let inc = incoherence(&blocks)?;
        rows.push(ProbeRow {
            n: Some(n),
            c_min: c.c_min,
            d_max: c.d_max,
            incoherence: inc,
            dev_c_min: (c.c_min - pop_c.c_min).abs(),
            dev_d_max: (c.d_max - pop_c.d_max).abs(),
            dev_incoherence: (inc - pop_inc).abs(),
        });
    }
    Ok(rows)
}

/// CSV with header `n,C_min_hat,D_max_hat,incoherence_hat,dev_C_min,dev_D_max,dev_incoherence`;
/// the population row has `n = population`.
pub fn write_probe_csv<W: Write>(rows: &[ProbeRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "n",
        "C_min_hat",
        "D_max_hat",
        "incoherence_hat",
        "dev_C_min",
        "dev_D_max",
        "dev_incoherence",
    ])
    .map_err(csv_io)?;
    for row in rows {
        let n = row.n.map_or_else(|| "population".to_string(), |n| n.to_string());
        out.write_record([
            n,
            row.c_min.to_string(),
            row.d_max.to_string(),
            row.incoherence.to_string(),
            row.dev_c_min.to_string(),
            row.dev_d_max.to_string(),
            row.dev_incoherence.to_string(),
        ])
        .map_err(csv_io)?;
    }
    out.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eta_at_zero_field_and_evenness() {
        let t = InteractionTensor::new(5, 3, vec![(vec![0, 1, 2], 0.4)]).unwrap();
        let x = [1i8, 1, 1, -1, 1];
        let mut y = x;
        y[0] = -1;
        assert_eq!(eta(&t, &x, 0).unwrap(), eta(&t, &y, 0).unwrap());
        assert_eq!(eta(&t, &x, 3).unwrap(), 36.0);
        assert!(eta_from_field(6.0, 800.0) == 0.0);
    }

    #[test]
    fn transform_gives_moments() {
        let t = InteractionTensor::new(5, 3, vec![(vec![0, 1, 2], 0.3), (vec![1, 3, 4], -0.2)]).unwrap();
        let dist = t.exact_distribution().unwrap();
        let m = moments_of(dist.probs().to_vec());
        for sub in [vec![], vec![0], vec![0, 1, 2], vec![1, 3], vec![0, 2, 3, 4]] {
            assert!((m[mask(&sub)] - dist.moment(&sub)).abs() < 1e-14, "{sub:?}");
        }
    }

    #[test]
    fn independence_closed_forms() {
        for k in [2, 3] {
            let t = InteractionTensor::empty(6, k).unwrap();
            let f2 = factorial(k).unwrap().powi(2);
            let b = population_fisher(&t, 1).unwrap();
            assert_eq!(b.q_ss, {
                let mut i = SymMatrix::identity(b.d());
                i.data.iter_mut().for_each(|v| *v *= f2);
                i
            });
            let c = dependency_constants(&b, Covariance::Population(&t), k).unwrap();
            assert!((c.c_min - f2).abs() < 1e-12);
            assert!((c.d_max - 1.0).abs() < 1e-12);
            assert_eq!(incoherence(&b).unwrap(), 0.0);
        }
    }

    #[test]
    fn two_by_two_c_min() {
        let blocks = FisherBlocks {
            r: 0,
            support: vec![vec![1], vec![2]],
            complement: vec![],
            q_ss: SymMatrix::from_rows(&[vec![3.0, -1.25], vec![-1.25, 3.0]]),
            q_scs: vec![],
            source: FisherSource::Sample,
        };
        assert!((c_min(&blocks).unwrap() - 1.75).abs() < 1e-12);
        assert_eq!(incoherence(&blocks).unwrap(), 0.0);
    }

    #[test]
    fn zero_reference_gives_scaled_gram() {
        let t = InteractionTensor::new(5, 3, vec![(vec![0, 1, 2], 0.3)]).unwrap();
        let s = crate::sampler::exact_sample(&t, 40, 2).unwrap();
        let zero = InteractionTensor::empty(5, 3).unwrap();
        let design = NodeDesign::new(5, 3, 0).unwrap();
        let all = design.features().to_vec();
        let b = sample_fisher_blocks(&s, 0, &zero, &all).unwrap();
        for (a, fa) in all.iter().enumerate() {
            for (c, fc) in all.iter().enumerate() {
                let gram: f64 = s.rows().map(|x| (product(x, fa) * product(x, fc)) as f64).sum::<f64>() / 40.0;
                assert!((b.q_ss.get(a, c) - 36.0 * gram).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn probe_csv_header() {
        let t = InteractionTensor::new(5, 3, vec![(vec![0, 1, 2], 0.3)]).unwrap();
        let rows = concentration_probe(&t, 0, &[50], 1).unwrap();
        assert_eq!(rows.len(), 2);
        let mut buf = Vec::new();
        write_probe_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n,C_min_hat,D_max_hat,incoherence_hat,"));
        assert!(text.lines().nth(1).unwrap().starts_with("population,"));
    }
}
