//! Node-wise fits combined into one signed hypergraph, and the recovery
//! metrics used to score it against a known truth.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regression::{lambda_theory, select_lambda, NodeProblem, SelectionRule, SolveOptions};
use crate::sampler::SampleMatrix;
use crate::tensor::{validate_subset, InteractionTensor, Subset};

/// Sign pattern of a set of hyperedges.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedSupport {
    edges: Vec<(Subset, i8)>,
}

impl SignedSupport {
    /// Edges must be distinct sorted `k`-subsets of `[0, p)`; signs are `+-1`.
    pub fn new(p: usize, k: usize, edges: impl IntoIterator<Item = (Subset, i8)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (e, s) in edges {
            validate_subset(&e, k, p)?;
            if s != 1 && s != -1 {
                return Err(Error::arg(format!("sign {s} on {e:?} is not +-1")));
            }
            if map.insert(e.clone(), s).is_some() {
                return Err(Error::arg(format!("duplicate edge {e:?}")));
            }
        }
        Ok(SignedSupport {
            edges: map.into_iter().collect(),
        })
    }

    pub fn from_tensor(t: &InteractionTensor) -> Self {
        SignedSupport {
            edges: t
                .edges()
                .map(|(e, j)| (e.to_vec(), if j > 0.0 { 1 } else { -1 }))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn sign(&self, e: &[usize]) -> Option<i8> {
        self.edges
            .binary_search_by(|(f, _)| f.as_slice().cmp(e))
            .ok()
            .map(|i| self.edges[i].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[usize], i8)> + '_ {
        self.edges.iter().map(|(e, s)| (e.as_slice(), *s))
    }

    /// Relabels vertex `v` as `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut edges: Vec<(Subset, i8)> = self
            .edges
            .iter()
            .map(|(e, s)| {
                let mut f: Subset = e.iter().map(|&v| perm[v]).collect();
                f.sort_unstable();
                (f, *s)
            })
            .collect();
        edges.sort();
        SignedSupport { edges }
    }
}

/// Estimated signed neighborhood of one vertex: the nonzero coefficients
/// `(e \ {r}, J_hat)` of its regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeFit {
    pub r: usize,
    pub lambda: f64,
    pub entries: Vec<(Subset, f64)>,
    pub kkt_residual: f64,
    pub iterations: usize,
}

impl NodeFit {
    /// Signed neighborhood `{(sign, e')}`.
    pub fn signs(&self) -> Vec<(i8, &[usize])> {
        self.entries
            .iter()
            .map(|(s, v)| (if *v > 0.0 { 1 } else { -1 }, s.as_slice()))
            .collect()
    }

    fn get(&self, sub: &[usize]) -> Option<f64> {
        self.entries
            .binary_search_by(|(s, _)| s.as_slice().cmp(sub))
            .ok()
            .map(|i| self.entries[i].1)
    }
}

fn node_fit(problem: &NodeProblem<'_>, lambda: f64, opts: &SolveOptions) -> Result<NodeFit> {
    let rep = problem.solve(lambda, opts)?;
    Ok(NodeFit {
        r: problem.design().r(),
        lambda,
        entries: rep
            .coef
            .iter()
            .filter(|(_, v)| v.abs() > opts.zero_threshold)
            .map(|(s, v)| (s.clone(), v))
            .collect(),
        kkt_residual: rep.kkt_residual,
        iterations: rep.iterations,
    })
}

/// Fits node `r` at penalty `lambda`.
pub fn fit_node(samples: &SampleMatrix, k: usize, r: usize, lambda: f64, opts: &SolveOptions) -> Result<NodeFit> {
    if r >= samples.p() {
        return Err(Error::arg(format!("vertex {r} out of range for p={}", samples.p())));
    }
    let problem = NodeProblem::new(samples, k, r, opts)?;
    node_fit(&problem, lambda, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    /// Every vertex of the edge reports it with the same sign.
    #[default]
    AndStrict,
    /// Any vertex reports it; the sign of the largest report wins.
    OrMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregationRule {
    pub mode: AggregationMode,
    /// Reports with `|J_hat| <= epsilon` are ignored.
    pub epsilon: f64,
}

impl Default for AggregationRule {
    fn default() -> Self {
        AggregationRule {
            mode: AggregationMode::AndStrict,
            epsilon: SolveOptions::default().zero_threshold,
        }
    }
}

/// Combines one neighborhood per vertex (in vertex order) into a signed
/// hypergraph.
pub fn aggregate(fits: &[NodeFit], p: usize, k: usize, rule: &AggregationRule) -> Result<SignedSupport> {
    if fits.len() != p {
        return Err(Error::arg(format!("expected {p} node reports, got {}", fits.len())));
    }
    if let Some((i, f)) = fits.iter().enumerate().find(|(i, f)| f.r != *i) {
        return Err(Error::arg(format!("report for node {i} missing (found node {} in its place)", f.r)));
    }
    let live = |f: &NodeFit, sub: &[usize]| f.get(sub).filter(|v| v.abs() > rule.epsilon);
    // edge -> (magnitude, sign) of the strongest report so far
    let mut out: BTreeMap<Subset, (f64, i8)> = BTreeMap::new();
    for f in fits {
        for (sub, v) in &f.entries {
            if v.abs() <= rule.epsilon {
                continue;
            }
            let mut edge = sub.clone();
            edge.push(f.r);
            edge.sort_unstable();
            validate_subset(&edge, k, p)?;
            let sign: i8 = if *v > 0.0 { 1 } else { -1 };
            match rule.mode {
                AggregationMode::AndStrict => {
                    let unanimous = edge.iter().all(|&u| {
                        let rest: Subset = edge.iter().copied().filter(|&w| w != u).collect();
                        live(&fits[u], &rest).is_some_and(|w| (w > 0.0) == (sign > 0))
                    });
                    if unanimous {
                        out.insert(edge, (0.0, sign));
                    }
                }
                AggregationMode::OrMax => {
                    // vertices are visited in increasing order, so a tie keeps the lower one
                    let slot = out.entry(edge).or_insert((v.abs(), sign));
                    if v.abs() > slot.0 {
                        *slot = (v.abs(), sign);
                    }
                }
            }
        }
    }
    Ok(SignedSupport {
        edges: out.into_iter().map(|(e, (_, s))| (e, s)).collect(),
    })
}

/// Fraction of true edges whose estimated sign matches; false positives do
/// not count.
pub fn recovery_rate(estimated: &SignedSupport, truth: &InteractionTensor) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::Undefined("recovery rate of an empty true edge set".into()));
    }
    let hits = truth
        .edges()
        .filter(|(e, j)| estimated.sign(e) == Some(if *j > 0.0 { 1 } else { -1 }))
        .count();
    Ok(hits as f64 / truth.num_edges() as f64)
}

/// Exact recovery: same edge set and same signs.
pub fn success(estimated: &SignedSupport, truth: &InteractionTensor) -> bool {
    *estimated == SignedSupport::from_tensor(truth)
}

/// Exact recovery of the edge set, signs ignored.
pub fn success_unsigned(estimated: &SignedSupport, truth: &InteractionTensor) -> bool {
    estimated.len() == truth.num_edges() && truth.edges().all(|(e, _)| estimated.sign(e).is_some())
}

/// Estimated edges absent from the truth.
pub fn false_positives(estimated: &SignedSupport, truth: &InteractionTensor) -> usize {
    estimated.iter().filter(|(e, _)| truth.coupling(e) == 0.0).count()
}

/// How the penalty is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LambdaMode {
    /// `lambda_theory(n, p, k, alpha)` at every node.
    Theory { alpha: f64 },
    /// Per-node information-criterion choice, averaged, then a common refit.
    Practice(SelectionRule),
    /// The same given penalty at every node.
    Fixed { lambda: f64 },
}

impl Default for LambdaMode {
    fn default() -> Self {
        LambdaMode::Practice(SelectionRule::default())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub lambda_mode: LambdaMode,
    pub rule: AggregationRule,
    pub solve: SolveOptions,
    /// Drop node reports with `|J_hat|` below this before aggregating.
    pub min_magnitude: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub recovery_rate: f64,
    pub success: bool,
    pub success_unsigned: bool,
    pub true_edges: usize,
    pub false_positives: usize,
}

impl Metrics {
    pub fn compute(estimated: &SignedSupport, truth: &InteractionTensor) -> Result<Self> {
        Ok(Metrics {
            recovery_rate: recovery_rate(estimated, truth)?,
            success: success(estimated, truth),
            success_unsigned: success_unsigned(estimated, truth),
            true_edges: truth.num_edges(),
            false_positives: false_positives(estimated, truth),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub p: usize,
    pub k: usize,
    pub n: usize,
    /// Penalty each node picked (practice mode) or was given.
    pub lambda_selected: Vec<f64>,
    /// Penalty of the final fits.
    pub lambda: f64,
    pub nodes: Vec<NodeFit>,
    pub estimated: SignedSupport,
    pub metrics: Option<Metrics>,
}

/// Fits every node, aggregates, and scores against `truth` when given.
pub fn run_pipeline(
    samples: &SampleMatrix,
    k: usize,
    truth: Option<&InteractionTensor>,
    opts: &PipelineOptions,
) -> Result<RecoveryReport> {
    let p = samples.p();
    let n = samples.n();
    if let Some(t) = truth {
        if t.p() != p || t.k() != k {
            return Err(Error::arg(format!(
                "truth has (p, k) = ({}, {}), samples give p={p} and k={k}",
                t.p(),
                t.k()
            )));
        }
    }
    opts.solve.validate()?;
    let solve = &opts.solve;
    let (lambda_selected, lambda) = match &opts.lambda_mode {
        LambdaMode::Fixed { lambda } => (vec![*lambda; p], *lambda),
        LambdaMode::Theory { alpha } => {
            let l = lambda_theory(n, p, k, *alpha)?;
            (vec![l; p], l)
        }
        LambdaMode::Practice(rule) => {
            let sel: Vec<f64> = (0..p)
                .into_par_iter()
                .map(|r| {
                    let problem = NodeProblem::new(samples, k, r, solve)?;
                    Ok(select_lambda(&problem, rule, solve)?.lambda)
                })
                .collect::<Result<_>>()?;
            let avg = sel.iter().sum::<f64>() / p as f64;
            (sel, avg)
        }
    };
    let mut nodes: Vec<NodeFit> = (0..p)
        .into_par_iter()
        .map(|r| fit_node(samples, k, r, lambda, solve))
        .collect::<Result<_>>()?;
    if let Some(m) = opts.min_magnitude {
        for f in &mut nodes {
            f.entries.retain(|(_, v)| v.abs() >= m);
        }
    }
    let estimated = aggregate(&nodes, p, k, &opts.rule)?;
    let metrics = truth.map(|t| Metrics::compute(&estimated, t)).transpose()?;
    Ok(RecoveryReport {
        p,
        k,
        n,
        lambda_selected,
        lambda,
        nodes,
        estimated,
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fit(r: usize, entries: Vec<(Subset, f64)>) -> NodeFit {
        NodeFit {
            r,
            lambda: 0.1,
            entries,
            kkt_residual: 0.0,
            iterations: 0,
        }
    }

    fn empty_fits(p: usize) -> Vec<NodeFit> {
        (0..p).map(|r| fit(r, vec![])).collect()
    }

    #[test]
    fn unanimous_and_dissent() {
        let mut fits = empty_fits(5);
        fits[0].entries = vec![(vec![1, 2], 0.3)];
        fits[1].entries = vec![(vec![0, 2], 0.2)];
        fits[2].entries = vec![(vec![0, 1], 0.1)];
        let and = AggregationRule::default();
        let s = aggregate(&fits, 5, 3, &and).unwrap();
        assert_eq!(s.sign(&[0, 1, 2]), Some(1));

        fits[2].entries.clear();
        assert!(aggregate(&fits, 5, 3, &and).unwrap().is_empty());
        let or = AggregationRule {
            mode: AggregationMode::OrMax,
            ..and
        };
        assert_eq!(aggregate(&fits, 5, 3, &or).unwrap().len(), 1);
    }

    #[test]
    fn or_max_sign_from_largest_report() {
        let mut fits = empty_fits(4);
        fits[0].entries = vec![(vec![1, 2], 0.4)];
        fits[2].entries = vec![(vec![0, 1], -0.6)];
        let or = AggregationRule {
            mode: AggregationMode::OrMax,
            ..Default::default()
        };
        assert_eq!(aggregate(&fits, 4, 3, &or).unwrap().sign(&[0, 1, 2]), Some(-1));
        // equal magnitudes: lowest vertex decides
        fits[2].entries = vec![(vec![0, 1], -0.4)];
        assert_eq!(aggregate(&fits, 4, 3, &or).unwrap().sign(&[0, 1, 2]), Some(1));
        // sign disagreement is never unanimous
        assert!(aggregate(&fits, 4, 3, &AggregationRule::default()).unwrap().is_empty());
    }

    #[test]
    fn missing_report_is_an_error() {
        let fits = empty_fits(3);
        assert!(aggregate(&fits, 4, 3, &AggregationRule::default()).is_err());
        let mut fits = empty_fits(4);
        fits.swap(1, 2);
        assert!(aggregate(&fits, 4, 3, &AggregationRule::default()).is_err());
    }

    #[test]
    fn metrics_by_count() {
        let truth = InteractionTensor::new(
            6,
            3,
            vec![(vec![0, 1, 2], 0.2), (vec![1, 2, 3], -0.2), (vec![3, 4, 5], 0.2)],
        )
        .unwrap();
        let perfect = SignedSupport::from_tensor(&truth);
        assert_eq!(recovery_rate(&perfect, &truth).unwrap(), 1.0);
        assert!(success(&perfect, &truth));

        let two = SignedSupport::new(6, 3, vec![(vec![0, 1, 2], 1), (vec![1, 2, 3], -1), (vec![0, 4, 5], 1)]).unwrap();
        assert!((recovery_rate(&two, &truth).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(false_positives(&two, &truth), 1);
        assert!(!success(&two, &truth));

        assert_eq!(recovery_rate(&SignedSupport::default(), &truth).unwrap(), 0.0);

        let extra = SignedSupport::new(
            6,
            3,
            perfect.iter().map(|(e, s)| (e.to_vec(), s)).chain([(vec![0, 1, 5], 1)]),
        )
        .unwrap();
        assert!(!success(&extra, &truth));

        let flipped = SignedSupport::new(6, 3, vec![(vec![0, 1, 2], 1), (vec![1, 2, 3], 1), (vec![3, 4, 5], 1)]).unwrap();
        assert!(!success(&flipped, &truth));
        assert!(success_unsigned(&flipped, &truth));

        let empty = InteractionTensor::empty(6, 3).unwrap();
        assert!(matches!(recovery_rate(&perfect, &empty), Err(Error::Undefined(_))));
    }
}
