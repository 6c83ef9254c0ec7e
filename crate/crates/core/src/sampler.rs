//! Gibbs sampling from a tensor Ising model, plus an exact inverse-CDF
//! sampler for instances small enough to enumerate.
//!
//! All randomness comes from `Xoshiro256PlusPlus` seeded through
//! `seed_from_u64`, so a `(tensor, n, config)` triple determines the sample
//! matrix bit for bit on every platform.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{InteractionTensor, DEFAULT_ENUMERATION_CAP};

/// The generator used for every random stream in the crate.
pub type SpinRng = Xoshiro256PlusPlus;

pub fn rng_from_seed(seed: u64) -> SpinRng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scan {
    /// Sites `0..p` in order.
    #[default]
    Systematic,
    /// `p` uniformly chosen sites per sweep.
    Random,
}

/// How retained samples are separated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    /// One long chain; keep a configuration every this many sweeps (>= 1).
    Sweeps(usize),
    /// Every row comes from its own chain, restarted from a uniform state and
    /// run for the burn-in.
    Restart,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GibbsConfig {
    pub burn_in_sweeps: usize,
    pub spacing: Spacing,
    pub scan: Scan,
    pub seed: u64,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        GibbsConfig {
            burn_in_sweeps: 1000,
            spacing: Spacing::Sweeps(5),
            scan: Scan::Systematic,
            seed: 0,
        }
    }
}

impl GibbsConfig {
    pub fn with_seed(seed: u64) -> Self {
        GibbsConfig {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.spacing == Spacing::Sweeps(0) {
            return Err(Error::arg("spacing must be at least one sweep"));
        }
        Ok(())
    }
}

/// `n` configurations of `p` spins, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleMatrix {
    n: usize,
    p: usize,
    data: Vec<i8>,
}

impl SampleMatrix {
    pub fn new(n: usize, p: usize, data: Vec<i8>) -> Result<Self> {
        if data.len() != n * p {
            return Err(Error::Dimension {
                expected: n * p,
                got: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|&s| s != 1 && s != -1) {
            return Err(Error::arg(format!(
                "entry ({}, {}) is {}, expected -1 or +1",
                pos / p.max(1),
                pos % p.max(1),
                data[pos]
            )));
        }
        Ok(SampleMatrix { n, p, data })
    }

    pub fn from_rows(rows: &[Vec<i8>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::Dimension {
                expected: p,
                got: bad.len(),
            });
        }
        Self::new(rows.len(), p, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[i8] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[i8]> + '_ {
        self.data.chunks_exact(self.p.max(1)).take(self.n)
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut acc = vec![0i64; self.p];
        for row in self.rows() {
            for (a, &s) in acc.iter_mut().zip(row) {
                *a += s as i64;
            }
        }
        acc.iter().map(|&a| a as f64 / self.n as f64).collect()
    }

    /// Empirical mean of `prod_{v in subset} x_v`.
    pub fn moment(&self, subset: &[usize]) -> f64 {
        let s: i64 = self
            .rows()
            .map(|row| crate::tensor::product(row, subset) as i64)
            .sum();
        s as f64 / self.n as f64
    }

    /// Moves column `v` to position `perm[v]`.
    pub fn permuted_columns(&self, perm: &[usize]) -> Result<Self> {
        crate::tensor::check_permutation(perm, self.p)?;
        let mut data = vec![0i8; self.data.len()];
        for (i, row) in self.rows().enumerate() {
            for (v, &s) in row.iter().enumerate() {
                data[i * self.p + perm[v]] = s;
            }
        }
        Ok(SampleMatrix {
            n: self.n,
            p: self.p,
            data,
        })
    }

    /// First `n` rows.
    pub fn head(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.n {
            return Err(Error::arg(format!("cannot take {n} of {} rows", self.n)));
        }
        Ok(SampleMatrix {
            n,
            p: self.p,
            data: self.data[..n * self.p].to_vec(),
        })
    }

    /// CSV with header `s0,...,s{p-1}` and one row of `-1`/`1` per sample.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (0..self.p).map(|v| format!("s{v}")).collect();
        writeln!(w, "{}", header.join(","))?;
        let mut line = String::with_capacity(3 * self.p);
        for row in self.rows() {
            line.clear();
            for (j, &s) in row.iter().enumerate() {
                if j > 0 {
                    line.push(',');
                }
                line.push_str(if s > 0 { "1" } else { "-1" });
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv is ASCII")
    }

    /// Parses the CSV written by [`write_csv`](Self::write_csv). Errors name
    /// the offending line (the header is line 1).
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(r);
        let headers = reader
            .headers()
            .map_err(|e| Error::parse(1, e.to_string()))?
            .clone();
        let p = headers.len();
        for (j, h) in headers.iter().enumerate() {
            if h != format!("s{j}") {
                return Err(Error::parse(1, format!("header column {j} is `{h}`, expected `s{j}`")));
            }
        }
        let mut data = Vec::new();
        let mut n = 0;
        for rec in reader.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                Error::parse(line, format!("malformed row: {e}"))
            })?;
            let line = rec.position().map_or(n + 2, |p| p.line() as usize);
            if rec.len() != p {
                return Err(Error::parse(line, format!("row has {} fields, expected {p}", rec.len())));
            }
            for f in rec.iter() {
                data.push(match f {
                    "1" | "+1" => 1,
                    "-1" => -1,
                    other => {
                        return Err(Error::parse(line, format!("entry `{other}` is not -1 or 1")))
                    }
                });
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::Empty("sample file has no rows".into()));
        }
        SampleMatrix::new(n, p, data)
    }

    pub fn from_csv_str(s: &str) -> Result<Self> {
        Self::read_csv(s.as_bytes())
    }
}

/// One Gibbs sweep, updating `x` in place.
pub fn gibbs_sweep<R: Rng>(t: &InteractionTensor, x: &mut [i8], rng: &mut R, scan: Scan) -> Result<()> {
    if x.len() != t.p() {
        return Err(Error::Dimension {
            expected: t.p(),
            got: x.len(),
        });
    }
    sweep_unchecked(t, x, rng, scan);
    Ok(())
}

#[inline]
fn sweep_unchecked<R: Rng>(t: &InteractionTensor, x: &mut [i8], rng: &mut R, scan: Scan) {
    let p = t.p();
    match scan {
        Scan::Systematic => {
            for r in 0..p {
                update_site(t, x, r, rng);
            }
        }
        Scan::Random => {
            for _ in 0..p {
                let r = rng.random_range(0..p);
                update_site(t, x, r, rng);
            }
        }
    }
}

#[inline]
fn update_site<R: Rng>(t: &InteractionTensor, x: &mut [i8], r: usize, rng: &mut R) {
    let up = t.prob_up_unchecked(x, r);
    let u: f64 = rng.random();
    x[r] = if u < up { 1 } else { -1 };
}

fn uniform_state<R: Rng>(p: usize, rng: &mut R) -> Vec<i8> {
    (0..p).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect()
}

/// Draws `n` configurations by Gibbs sampling.
pub fn draw_samples(t: &InteractionTensor, n: usize, cfg: &GibbsConfig) -> Result<SampleMatrix> {
    if n == 0 {
        return Err(Error::arg("sample count must be at least 1"));
    }
    cfg.validate()?;
    let p = t.p();
    let mut rng = rng_from_seed(cfg.seed);
    let mut data = Vec::with_capacity(n * p);
    match cfg.spacing {
        Spacing::Sweeps(spacing) => {
            let mut x = uniform_state(p, &mut rng);
            for _ in 0..cfg.burn_in_sweeps {
                sweep_unchecked(t, &mut x, &mut rng, cfg.scan);
            }
            for _ in 0..n {
                for _ in 0..spacing {
                    sweep_unchecked(t, &mut x, &mut rng, cfg.scan);
                }
                data.extend_from_slice(&x);
            }
        }
        Spacing::Restart => {
            for _ in 0..n {
                let mut x = uniform_state(p, &mut rng);
                for _ in 0..cfg.burn_in_sweeps {
                    sweep_unchecked(t, &mut x, &mut rng, cfg.scan);
                }
                data.extend_from_slice(&x);
            }
        }
    }
    Ok(SampleMatrix { n, p, data })
}

/// `n` i.i.d. draws from the exact law by inverse CDF.
pub fn exact_sample(t: &InteractionTensor, n: usize, seed: u64) -> Result<SampleMatrix> {
    exact_sample_with_cap(t, n, seed, DEFAULT_ENUMERATION_CAP)
}

pub fn exact_sample_with_cap(t: &InteractionTensor, n: usize, seed: u64, cap: usize) -> Result<SampleMatrix> {
    if n == 0 {
        return Err(Error::arg("sample count must be at least 1"));
    }
    let dist = t.exact_distribution_with_cap(cap)?;
    let mut cdf = Vec::with_capacity(dist.probs().len());
    let mut acc = 0.0;
    for q in dist.probs() {
        acc += q;
        cdf.push(acc);
    }
    let last_positive = dist
        .probs()
        .iter()
        .rposition(|&q| q > 0.0)
        .expect("a normalized distribution has positive mass");
    let p = t.p();
    let mut rng = rng_from_seed(seed);
    let mut data = Vec::with_capacity(n * p);
    for _ in 0..n {
        let u: f64 = rng.random::<f64>() * acc;
        let idx = cdf.partition_point(|&c| c <= u).min(last_positive);
        data.extend(crate::tensor::spins_from_index(idx, p));
    }
    Ok(SampleMatrix { n, p, data })
}
