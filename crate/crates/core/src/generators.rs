//! Synthetic ground truth (regular hypergraphs, triangle supports,
//! coefficient assignment), the sample-size scaling law, and ingestion of
//! external graphs and time series.

use std::collections::BTreeSet;
use std::io::{BufRead, Read};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{factorial, ln_binomial};
use crate::error::{Error, Result};
use crate::sampler::{rng_from_seed, SampleMatrix};
use crate::tensor::{validate_subset, InteractionTensor, Subset};

/// Attempts made by [`regular_hypergraph`] before giving up.
pub const REGULAR_MAX_ATTEMPTS: usize = 1000;

/// Edge set of a k-uniform hypergraph, without couplings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypergraphSupport {
    p: usize,
    k: usize,
    edges: Vec<Subset>,
}

impl HypergraphSupport {
    /// Sorts each edge and the edge list; rejects repeated vertices,
    /// out-of-range vertices and duplicate edges.
    pub fn new(p: usize, k: usize, edges: impl IntoIterator<Item = Subset>) -> Result<Self> {
        let mut out: Vec<Subset> = Vec::new();
        for mut e in edges {
            e.sort_unstable();
            validate_subset(&e, k, p)?;
            out.push(e);
        }
        out.sort();
        if let Some(w) = out.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::arg(format!("duplicate edge {:?}", w[0])));
        }
        Ok(HypergraphSupport { p, k, edges: out })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn edges(&self) -> &[Subset] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.p];
        for e in &self.edges {
            for &v in e {
                deg[v] += 1;
            }
        }
        deg
    }
}

/// Random k-uniform d-regular hypergraph on `p` vertices.
///
/// Configuration model: `d` stubs per vertex are shuffled and cut into
/// groups of `k`. A pairing with a repeated vertex inside a group or a
/// repeated edge is thrown away and redrawn, up to
/// [`REGULAR_MAX_ATTEMPTS`] times.
pub fn regular_hypergraph(p: usize, k: usize, d: usize, seed: u64) -> Result<HypergraphSupport> {
    if k < 2 || k > p {
        return Err(Error::arg(format!("need 2 <= k <= p, got k={k}, p={p}")));
    }
    if d == 0 {
        return Err(Error::arg("degree d must be at least 1"));
    }
    if (p * d) % k != 0 {
        return Err(Error::arg(format!("p*d = {} is not divisible by k = {k}", p * d)));
    }
    let mut rng = rng_from_seed(seed);
    let mut stubs: Vec<usize> = (0..p).flat_map(|v| std::iter::repeat_n(v, d)).collect();
    'attempt: for _ in 0..REGULAR_MAX_ATTEMPTS {
        stubs.shuffle(&mut rng);
        let mut seen = BTreeSet::new();
        for chunk in stubs.chunks(k) {
            let mut e = chunk.to_vec();
            e.sort_unstable();
            if e.windows(2).any(|w| w[0] == w[1]) || !seen.insert(e) {
                continue 'attempt;
            }
        }
        let support = HypergraphSupport::new(p, k, seen)?;
        debug_assert_eq!(support.num_edges(), p * d / k);
        debug_assert!(support.degrees().iter().all(|&g| g == d));
        return Ok(support);
    }
    Err(Error::Generation(format!(
        "no simple {k}-uniform {d}-regular hypergraph on {p} vertices after {REGULAR_MAX_ATTEMPTS} attempts; \
         try a larger p or a smaller d"
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignMode {
    #[default]
    AllPlus,
    Rademacher,
}

/// How couplings are put on a support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientScheme {
    pub magnitude: f64,
    pub sign_mode: SignMode,
    pub seed: u64,
}

impl CoefficientScheme {
    /// Magnitude `0.5 / k!`, all signs positive.
    pub fn default_for(k: usize) -> Result<Self> {
        Ok(CoefficientScheme {
            magnitude: 0.5 / factorial(k)?,
            sign_mode: SignMode::AllPlus,
            seed: 0,
        })
    }
}

/// Puts `sign * magnitude` on every edge. Rademacher signs are drawn in edge
/// order from `scheme.seed`.
pub fn assign_coefficients(support: &HypergraphSupport, scheme: &CoefficientScheme) -> Result<InteractionTensor> {
    if !(scheme.magnitude > 0.0) || !scheme.magnitude.is_finite() {
        return Err(Error::arg(format!("coupling magnitude {} must be positive", scheme.magnitude)));
    }
    let mut rng = rng_from_seed(scheme.seed);
    let edges = support.edges.iter().map(|e| {
        let sign = match scheme.sign_mode {
            SignMode::AllPlus => 1.0,
            SignMode::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        };
        (e.clone(), sign * scheme.magnitude)
    });
    let edges: Vec<_> = edges.collect();
    InteractionTensor::new(support.p, support.k, edges)
}

pub const RATE_DIVISOR: f64 = 6.0e6;
pub const SUCCESS_DIVISOR: f64 = 1.5e6;

/// `ceil(alpha (k!)^8 d^3 ln C(p-1, k-1) / divisor)`.
pub fn scaling_n(alpha: f64, p: usize, k: usize, d: usize, divisor: f64) -> Result<usize> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::arg(format!("alpha={alpha} must be positive")));
    }
    if !(divisor > 0.0) || !divisor.is_finite() {
        return Err(Error::arg(format!("divisor={divisor} must be positive")));
    }
    if d == 0 || k < 2 || p < k {
        return Err(Error::arg(format!("invalid (p, k, d) = ({p}, {k}, {d})")));
    }
    let log_c = ln_binomial(p - 1, k - 1);
    let f = factorial(k)?;
    let n = alpha * f.powi(8) * (d as f64).powi(3) * log_c / divisor;
    if !(n >= 1.0) || n > usize::MAX as f64 {
        return Err(Error::arg(format!("scaling gives an unusable sample size {n}")));
    }
    Ok(n.ceil() as usize)
}

/// Reads an undirected edge list, one `u v` pair per line with 0-based
/// vertices. Blank lines and `#` comments are skipped; repeated pairs are
/// merged, self-loops are refused.
pub fn read_edge_list<R: BufRead>(r: R) -> Result<Vec<(usize, usize)>> {
    let mut out = BTreeSet::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()).collect();
        if fields.len() != 2 {
            return Err(Error::parse(i + 1, format!("expected two vertices, got {}", fields.len())));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::parse(i + 1, format!("bad vertex id {s:?}")))
        };
        let (u, v) = (parse(fields[0])?, parse(fields[1])?);
        if u == v {
            return Err(Error::parse(i + 1, format!("self-loop on vertex {u}")));
        }
        out.insert((u.min(v), u.max(v)));
    }
    Ok(out.into_iter().collect())
}

/// All triangles of a simple graph as a 3-uniform support on
/// `p = max vertex + 1` vertices.
pub fn triangles_from_graph(edges: &[(usize, usize)]) -> Result<HypergraphSupport> {
    let p = edges.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(0);
    let mut adj = vec![BTreeSet::new(); p];
    for &(u, v) in edges {
        if u == v {
            return Err(Error::arg(format!("self-loop on vertex {u}")));
        }
        adj[u].insert(v);
        adj[v].insert(u);
    }
    let triangles: Vec<Subset> = (0..p)
        .into_par_iter()
        .flat_map_iter(|a| {
            let adj = &adj;
            adj[a].range(a + 1..).flat_map(move |&b| {
                adj[a]
                    .range(b + 1..)
                    .filter(move |c| adj[b].contains(c))
                    .map(move |&c| vec![a, b, c])
            })
        })
        .collect();
    HypergraphSupport::new(p, 3, triangles)
}

/// Reads a real-valued series table: one column per node, one row per time
/// point. A first row that does not parse as numbers is taken as a header.
pub fn read_series_csv<R: Read>(r: R) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(r);
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(i + 1);
            Error::parse(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(i + 1);
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(|s| s.parse::<f64>()).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if i == 0 => continue,
            Err(_) => return Err(Error::parse(line, "non-numeric value")),
        };
        if columns.is_empty() {
            columns = vec![Vec::new(); values.len()];
        }
        if values.len() != columns.len() {
            return Err(Error::parse(
                line,
                format!("expected {} columns, got {}", columns.len(), values.len()),
            ));
        }
        for (c, v) in columns.iter_mut().zip(values) {
            if !v.is_finite() {
                return Err(Error::parse(line, "non-finite value"));
            }
            c.push(v);
        }
    }
    if columns.is_empty() {
        return Err(Error::Empty("series table has no data rows".into()));
    }
    Ok(columns)
}

/// Signs of first differences, one row per retained time step.
///
/// A step is dropped if any node has a zero difference there. Of the
/// remaining steps, every `thin`-th is kept: the `thin`-th, `2 thin`-th, and
/// so on, so `m` surviving steps give `floor(m / thin)` rows.
pub fn binarize_series(series: &[Vec<f64>], thin: usize) -> Result<SampleMatrix> {
    if thin == 0 {
        return Err(Error::arg("thinning factor must be at least 1"));
    }
    let p = series.len();
    if p == 0 {
        return Err(Error::arg("no series given"));
    }
    let t = series[0].len();
    if let Some((i, s)) = series.iter().enumerate().find(|(_, s)| s.len() != t) {
        return Err(Error::arg(format!("series {i} has {} points, series 0 has {t}", s.len())));
    }
    if t < 2 {
        return Err(Error::arg("series need at least two time points"));
    }
    let mut data = Vec::new();
    let mut kept = 0usize;
    for step in 1..t {
        let row: Option<Vec<i8>> = series
            .iter()
            .map(|s| {
                let diff = s[step] - s[step - 1];
                if diff > 0.0 {
                    Some(1)
                } else if diff < 0.0 {
                    Some(-1)
                } else {
                    None
                }
            })
            .collect();
        let Some(row) = row else { continue };
        kept += 1;
        if kept % thin == 0 {
            data.extend(row);
        }
    }
    if data.is_empty() {
        return Err(Error::Empty("no time step survives zero-dropping and thinning".into()));
    }
    SampleMatrix::new(data.len() / p, p, data)
}
