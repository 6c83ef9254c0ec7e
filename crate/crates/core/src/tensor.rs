//! Sparse symmetric interaction tensors and exact enumeration oracles.
//!
//! A k-tensor Ising model on `p` spins is stored by its support: each
//! hyperedge is a strictly increasing list of `k` vertices with a nonzero
//! coupling. Symmetry and zero diagonals hold by construction. The
//! combinatorial factors `k!` (Hamiltonian) and `(k-1)!` (local field) that
//! come from summing over ordered tuples are applied at evaluation time, so
//! stored couplings are exactly the tensor entries.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::combinatorics::{factorial, MAX_ORDER};
use crate::error::{Error, Result};

/// Largest `p` the enumeration oracles accept unless overridden.
pub const DEFAULT_ENUMERATION_CAP: usize = 20;

/// A strictly increasing vertex list.
pub type Subset = Vec<usize>;

/// One configuration in `{-1, +1}^p`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpinConfiguration(Vec<i8>);

impl SpinConfiguration {
    pub fn new(spins: Vec<i8>) -> Result<Self> {
        if let Some(pos) = spins.iter().position(|&s| s != 1 && s != -1) {
            return Err(Error::arg(format!(
                "spin at position {pos} is {}, expected -1 or +1",
                spins[pos]
            )));
        }
        Ok(SpinConfiguration(spins))
    }

    pub fn all_up(p: usize) -> Self {
        SpinConfiguration(vec![1; p])
    }

    /// Configuration with index `i` in the binary encoding used by
    /// [`ExactDistribution`]: bit `b` of `i` is `(spin_b + 1) / 2`.
    pub fn from_index(i: usize, p: usize) -> Self {
        SpinConfiguration(spins_from_index(i, p))
    }

    pub fn index(&self) -> usize {
        self.0
            .iter()
            .enumerate()
            .fold(0, |acc, (b, &s)| acc | (usize::from(s > 0) << b))
    }

    pub fn flipped(&self) -> Self {
        SpinConfiguration(self.0.iter().map(|s| -s).collect())
    }

    pub fn into_inner(self) -> Vec<i8> {
        self.0
    }
}

impl std::ops::Deref for SpinConfiguration {
    type Target = [i8];
    fn deref(&self) -> &[i8] {
        &self.0
    }
}

impl std::ops::DerefMut for SpinConfiguration {
    fn deref_mut(&mut self) -> &mut [i8] {
        &mut self.0
    }
}

pub(crate) fn spins_from_index(i: usize, p: usize) -> Vec<i8> {
    (0..p)
        .map(|b| if (i >> b) & 1 == 1 { 1 } else { -1 })
        .collect()
}

/// Logistic function evaluated so that `logistic(t) + logistic(-t) == 1`
/// exactly in floating point.
#[inline]
pub(crate) fn logistic(t: f64) -> f64 {
    // smaller tail first, then complement (the complement of a value <= 1/2
    // always sums back to exactly 1)
    let small = if t.is_nan() {
        f64::NAN
    } else {
        let e = (-t.abs()).exp();
        e / (1.0 + e)
    };
    if t >= 0.0 {
        1.0 - small
    } else {
        small
    }
}

/// Per-vertex hyperedge counts and their maximum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Degrees {
    pub per_vertex: Vec<usize>,
    pub max: usize,
}

/// Sparse, symmetric, zero-diagonal k-tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionTensor {
    p: usize,
    k: usize,
    // sorted by subset
    edges: Vec<(Subset, f64)>,
    // vertex -> indices into `edges`
    incidence: Vec<Vec<usize>>,
    fact_k: f64,
    fact_km1: f64,
}

impl InteractionTensor {
    /// Builds a tensor from `(subset, coupling)` pairs. Subsets must be
    /// strictly increasing, within `[0, p)`, of size `k`, and distinct;
    /// couplings must be finite and nonzero.
    pub fn new(p: usize, k: usize, edges: impl IntoIterator<Item = (Subset, f64)>) -> Result<Self> {
        if k < 2 {
            return Err(Error::arg(format!("interaction order k={k} must be at least 2")));
        }
        if k > MAX_ORDER {
            return Err(Error::Capacity {
                what: "interaction order k",
                value: k,
                cap: MAX_ORDER,
            });
        }
        if p < 3 || k > p - 1 {
            return Err(Error::arg(format!(
                "need p >= 3 and k <= p - 1, got p={p}, k={k}"
            )));
        }
        if p < 4 {
            log::warn!("p={p} is below 4; recovery guarantees assume p >= 4");
        }
        let mut list: Vec<(Subset, f64)> = Vec::new();
        for (e, j) in edges {
            validate_subset(&e, k, p)?;
            if !j.is_finite() || j == 0.0 {
                return Err(Error::arg(format!("coupling {j} on {e:?} must be finite and nonzero")));
            }
            list.push((e, j));
        }
        list.sort_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = list.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::arg(format!("duplicate hyperedge {:?}", w[0].0)));
        }
        let incidence = build_incidence(p, &list);
        Ok(InteractionTensor {
            p,
            k,
            edges: list,
            incidence,
            fact_k: factorial(k)?,
            fact_km1: factorial(k - 1)?,
        })
    }

    /// The zero tensor.
    pub fn empty(p: usize, k: usize) -> Result<Self> {
        Self::new(p, k, Vec::new())
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn edges(&self) -> impl Iterator<Item = (&[usize], f64)> + '_ {
        self.edges.iter().map(|(e, j)| (e.as_slice(), *j))
    }

    /// Coupling on `subset` (sorted), zero when absent.
    pub fn coupling(&self, subset: &[usize]) -> f64 {
        self.edges
            .binary_search_by(|(e, _)| e.as_slice().cmp(subset))
            .map(|i| self.edges[i].1)
            .unwrap_or(0.0)
    }

    /// Hyperedges containing `r`, as `(edge, coupling)`.
    pub fn incident(&self, r: usize) -> impl Iterator<Item = (&[usize], f64)> + '_ {
        self.incidence[r]
            .iter()
            .map(move |&i| (self.edges[i].0.as_slice(), self.edges[i].1))
    }

    /// The node-`r` coefficient vector of the truth: `e \ {r} -> J_e` for
    /// every hyperedge `e` through `r`.
    pub fn neighborhood(&self, r: usize) -> Vec<(Subset, f64)> {
        self.incident(r)
            .map(|(e, j)| (e.iter().copied().filter(|&v| v != r).collect(), j))
            .collect()
    }

    /// Rebuilds the incidence index from scratch; equal to the stored one.
    pub fn rebuilt_incidence(&self) -> Vec<Vec<usize>> {
        build_incidence(self.p, &self.edges)
    }

    pub fn incidence(&self) -> &[Vec<usize>] {
        &self.incidence
    }

    fn check_len(&self, x: &[i8]) -> Result<()> {
        if x.len() != self.p {
            return Err(Error::Dimension {
                expected: self.p,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn check_vertex(&self, r: usize) -> Result<()> {
        if r >= self.p {
            return Err(Error::arg(format!("vertex {r} out of range for p={}", self.p)));
        }
        Ok(())
    }

    /// `H(x) = k! * sum_e J_e prod_{v in e} x_v`.
    pub fn hamiltonian(&self, x: &[i8]) -> Result<f64> {
        self.check_len(x)?;
        Ok(self.hamiltonian_unchecked(x))
    }

    pub(crate) fn hamiltonian_unchecked(&self, x: &[i8]) -> f64 {
        let s: f64 = self
            .edges
            .iter()
            .map(|(e, j)| j * product(x, e) as f64)
            .sum();
        self.fact_k * s
    }

    /// `m_r(x) = (k-1)! * sum_{e containing r} J_e prod_{v in e, v != r} x_v`.
    pub fn local_field(&self, x: &[i8], r: usize) -> Result<f64> {
        self.check_len(x)?;
        self.check_vertex(r)?;
        Ok(self.local_field_unchecked(x, r))
    }

    #[inline]
    pub(crate) fn local_field_unchecked(&self, x: &[i8], r: usize) -> f64 {
        let mut s = 0.0;
        for &i in &self.incidence[r] {
            let (e, j) = &self.edges[i];
            let mut prod: i8 = 1;
            for &v in e {
                if v != r {
                    prod *= x[v];
                }
            }
            s += j * prod as f64;
        }
        self.fact_km1 * s
    }

    /// Conditional log-odds `log P(+1 | rest) / P(-1 | rest) = 2 k m_r(x)`.
    pub fn log_odds(&self, x: &[i8], r: usize) -> Result<f64> {
        Ok(2.0 * self.k as f64 * self.local_field(x, r)?)
    }

    /// `P(x_r = s | x_{-r}) = exp(k s m_r) / (2 cosh(k m_r))`.
    pub fn conditional_prob(&self, x: &[i8], r: usize, s: i8) -> Result<f64> {
        if s != 1 && s != -1 {
            return Err(Error::arg(format!("spin value {s} must be -1 or +1")));
        }
        let m = self.local_field(x, r)?;
        Ok(logistic(2.0 * self.k as f64 * s as f64 * m))
    }

    pub(crate) fn prob_up_unchecked(&self, x: &[i8], r: usize) -> f64 {
        logistic(2.0 * self.k as f64 * self.local_field_unchecked(x, r))
    }

    pub fn degrees(&self) -> Degrees {
        let per_vertex: Vec<usize> = self.incidence.iter().map(Vec::len).collect();
        let max = per_vertex.iter().copied().max().unwrap_or(0);
        Degrees { per_vertex, max }
    }

    /// Exact law over all `2^p` configurations, refusing `p > cap`.
    pub fn exact_distribution_with_cap(&self, cap: usize) -> Result<ExactDistribution> {
        if self.p > cap {
            return Err(Error::Capacity {
                what: "vertex count p for exact enumeration",
                value: self.p,
                cap,
            });
        }
        let states = 1usize << self.p;
        let mut x = vec![0i8; self.p];
        let mut energies = Vec::with_capacity(states);
        for i in 0..states {
            for (b, xb) in x.iter_mut().enumerate() {
                *xb = if (i >> b) & 1 == 1 { 1 } else { -1 };
            }
            energies.push(self.hamiltonian_unchecked(&x));
        }
        let max = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut probs: Vec<f64> = energies.iter().map(|h| (h - max).exp()).collect();
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|q| *q /= total);
        Ok(ExactDistribution {
            p: self.p,
            probs,
            log_z: max + total.ln(),
        })
    }

    pub fn exact_distribution(&self) -> Result<ExactDistribution> {
        self.exact_distribution_with_cap(DEFAULT_ENUMERATION_CAP)
    }

    /// `E_J[prod_{v in subset} X_v]` by summation over the exact law.
    pub fn exact_moment(&self, subset: &[usize]) -> Result<f64> {
        for &v in subset {
            self.check_vertex(v)?;
        }
        Ok(self.exact_distribution()?.moment(subset))
    }

    /// Relabels vertex `v` as `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.p)?;
        let edges = self.edges.iter().map(|(e, j)| {
            let mut img: Vec<usize> = e.iter().map(|&v| perm[v]).collect();
            img.sort_unstable();
            (img, *j)
        });
        Self::new(self.p, self.k, edges.collect::<Vec<_>>())
    }

    /// Writes the text format: a `#tensor p=<p> k=<k>` header, then one
    /// `v1 .. vk coupling` line per hyperedge.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "#tensor p={} k={}", self.p, self.k)?;
        for (e, j) in &self.edges {
            let mut line = String::new();
            for v in e {
                write!(line, "{v} ").unwrap();
            }
            writeln!(w, "{line}{j}")?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("tensor text is ASCII")
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let (p, k) = loop {
            let Some((ln, line)) = lines.next() else {
                return Err(Error::parse(1, "missing `#tensor p=<p> k=<k>` header"));
            };
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            break parse_header(t).ok_or_else(|| {
                Error::parse(ln + 1, format!("expected `#tensor p=<p> k=<k>`, found `{t}`"))
            })?;
        };
        let mut edges = Vec::new();
        for (ln, line) in lines {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = t.split_whitespace().collect();
            if fields.len() != k + 1 {
                return Err(Error::parse(
                    ln + 1,
                    format!("expected {} fields, found {}", k + 1, fields.len()),
                ));
            }
            let mut e = Vec::with_capacity(k);
            for f in &fields[..k] {
                e.push(
                    f.parse::<usize>()
                        .map_err(|_| Error::parse(ln + 1, format!("bad vertex `{f}`")))?,
                );
            }
            let j: f64 = fields[k]
                .parse()
                .map_err(|_| Error::parse(ln + 1, format!("bad coupling `{}`", fields[k])))?;
            validate_subset(&e, k, p).map_err(|err| Error::parse(ln + 1, err.to_string()))?;
            edges.push((e, j));
        }
        Self::new(p, k, edges)
    }

    pub fn from_text(s: &str) -> Result<Self> {
        Self::read_from(s.as_bytes())
    }
}

fn parse_header(t: &str) -> Option<(usize, usize)> {
    let rest = t.strip_prefix("#tensor")?;
    let mut p = None;
    let mut k = None;
    for tok in rest.split_whitespace() {
        if let Some(v) = tok.strip_prefix("p=") {
            p = v.parse().ok();
        } else if let Some(v) = tok.strip_prefix("k=") {
            k = v.parse().ok();
        } else {
            return None;
        }
    }
    Some((p?, k?))
}

pub(crate) fn validate_subset(e: &[usize], size: usize, p: usize) -> Result<()> {
    if e.len() != size {
        return Err(Error::arg(format!("subset {e:?} has {} vertices, expected {size}", e.len())));
    }
    if e.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::arg(format!("subset {e:?} is not strictly increasing")));
    }
    if e.last().is_some_and(|&v| v >= p) {
        return Err(Error::arg(format!("subset {e:?} has a vertex outside [0, {p})")));
    }
    Ok(())
}

pub(crate) fn check_permutation(perm: &[usize], p: usize) -> Result<()> {
    let mut seen = vec![false; p];
    if perm.len() != p {
        return Err(Error::Dimension {
            expected: p,
            got: perm.len(),
        });
    }
    for &v in perm {
        if v >= p || seen[v] {
            return Err(Error::arg("not a permutation"));
        }
        seen[v] = true;
    }
    Ok(())
}

fn build_incidence(p: usize, edges: &[(Subset, f64)]) -> Vec<Vec<usize>> {
    let mut inc = vec![Vec::new(); p];
    for (i, (e, _)) in edges.iter().enumerate() {
        for &v in e {
            inc[v].push(i);
        }
    }
    inc
}

#[inline]
pub(crate) fn product(x: &[i8], subset: &[usize]) -> i8 {
    subset.iter().fold(1i8, |acc, &v| acc * x[v])
}

/// Exact probability vector over `{-1,+1}^p`.
#[derive(Debug, Clone)]
pub struct ExactDistribution {
    p: usize,
    probs: Vec<f64>,
    log_z: f64,
}

impl ExactDistribution {
    pub fn p(&self) -> usize {
        self.p
    }

    /// Indexed by the binary encoding: bit `b` of the index is `(x_b + 1)/2`.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn log_partition(&self) -> f64 {
        self.log_z
    }

    pub fn prob(&self, x: &[i8]) -> f64 {
        let idx = x
            .iter()
            .enumerate()
            .fold(0usize, |acc, (b, &s)| acc | (usize::from(s > 0) << b));
        self.probs[idx]
    }

    pub fn moment(&self, subset: &[usize]) -> f64 {
        if subset.is_empty() {
            return 1.0;
        }
        let mask = subset.iter().fold(0usize, |m, &v| m | (1 << v));
        self.probs
            .iter()
            .enumerate()
            .map(|(i, q)| {
                // product of spins = (-1)^{number of -1's in subset}
                let downs = (!i & mask).count_ones();
                if downs % 2 == 0 {
                    *q
                } else {
                    -q
                }
            })
            .sum()
    }

    /// Expectation of an arbitrary function of the configuration.
    pub fn expect<F: FnMut(&[i8]) -> f64>(&self, mut f: F) -> f64 {
        let mut x = vec![0i8; self.p];
        let mut acc = 0.0;
        for (i, q) in self.probs.iter().enumerate() {
            if *q == 0.0 {
                continue;
            }
            for (b, xb) in x.iter_mut().enumerate() {
                *xb = if (i >> b) & 1 == 1 { 1 } else { -1 };
            }
            acc += q * f(&x);
        }
        acc
    }
}
