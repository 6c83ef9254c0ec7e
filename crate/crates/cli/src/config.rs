//! Sweep configuration, read from JSON and overridden by flags.

use std::path::Path;

use hyperising::combinatorics::factorial;
use hyperising::{AggregationMode, LambdaMode, Scan, SignMode, Spacing};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Gibbs settings shared by every trial; the seed comes from the trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GibbsSettings {
    pub burn_in_sweeps: usize,
    pub spacing: Spacing,
    pub scan: Scan,
}

impl Default for GibbsSettings {
    fn default() -> Self {
        let g = hyperising::GibbsConfig::default();
        GibbsSettings {
            burn_in_sweeps: g.burn_in_sweeps,
            spacing: g.spacing,
            scan: g.scan,
        }
    }
}

impl GibbsSettings {
    pub fn with_seed(&self, seed: u64) -> hyperising::GibbsConfig {
        hyperising::GibbsConfig {
            burn_in_sweeps: self.burn_in_sweeps,
            spacing: self.spacing,
            scan: self.scan,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PlotMetric {
    /// Mean recovery rate.
    #[default]
    Rate,
    /// Fraction of trials with exact signed recovery.
    Success,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub p: Vec<usize>,
    pub k: usize,
    pub d: usize,
    /// Sample sizes come from `scaling_n(alpha, ..)` ...
    pub alpha_grid: Vec<f64>,
    /// ... unless explicit sizes are given here, which replace the alpha grid.
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub divisor: f64,
    pub lambda: LambdaMode,
    pub rule: AggregationMode,
    /// Coupling magnitude; `0.5 / k!` when absent.
    pub coupling: Option<f64>,
    pub signs: SignMode,
    pub gibbs: GibbsSettings,
    pub base_seed: u64,
    /// Worker threads; 0 means one per core. Never affects outputs.
    pub workers: usize,
    pub metric: PlotMetric,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            p: vec![32],
            k: 3,
            d: 3,
            alpha_grid: vec![0.4, 0.8, 1.2, 1.6, 2.0],
            n_grid: Vec::new(),
            trials: 50,
            divisor: hyperising::generators::RATE_DIVISOR,
            lambda: LambdaMode::default(),
            rule: AggregationMode::AndStrict,
            coupling: None,
            signs: SignMode::AllPlus,
            gibbs: GibbsSettings::default(),
            base_seed: 0,
            workers: 0,
            metric: PlotMetric::Rate,
        }
    }
}

/// One point of the experiment grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub index: usize,
    pub p: usize,
    pub alpha: Option<f64>,
    pub n: Option<usize>,
}

impl SweepConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| CliError::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn coupling_magnitude(&self) -> Result<f64> {
        match self.coupling {
            Some(c) => Ok(c),
            None => Ok(0.5 / factorial(self.k)?),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::invalid(m));
        if self.p.is_empty() {
            return bad("p list is empty".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.k < 2 {
            return bad(format!("k={} must be at least 2", self.k));
        }
        if self.d == 0 {
            return bad("d must be at least 1".into());
        }
        if self.alpha_grid.is_empty() && self.n_grid.is_empty() {
            return bad("give an alpha grid or an n grid".into());
        }
        if let Some(a) = self.alphas().iter().find(|a| !(**a > 0.0) || !a.is_finite()) {
            return bad(format!("alpha={a} must be positive"));
        }
        if self.n_grid.contains(&0) {
            return bad("n grid entries must be positive".into());
        }
        if !(self.divisor > 0.0) || !self.divisor.is_finite() {
            return bad(format!("divisor={} must be positive", self.divisor));
        }
        for &p in &self.p {
            if p <= self.k {
                return bad(format!("p={p} must exceed k={}", self.k));
            }
            if (p * self.d) % self.k != 0 {
                return bad(format!("p*d = {} is not divisible by k={}", p * self.d, self.k));
            }
        }
        let c = self.coupling_magnitude()?;
        if !(c > 0.0) || !c.is_finite() {
            // a zero coupling leaves no true edge, so the recovery rate is undefined
            return bad(format!("coupling={c} must be positive; the true edge set would be empty"));
        }
        match &self.lambda {
            LambdaMode::Theory { alpha } if !(*alpha > 0.0 && *alpha <= 1.0) => {
                return bad(format!("incoherence alpha={alpha} must lie in (0, 1]"));
            }
            LambdaMode::Fixed { lambda } if !(*lambda >= 0.0) || !lambda.is_finite() => {
                return bad(format!("lambda={lambda} must be nonnegative"));
            }
            LambdaMode::Practice(rule) => rule.validate()?,
            _ => {}
        }
        self.gibbs.with_seed(0).validate()?;
        Ok(())
    }

    /// The alpha grid in effect (empty under an n grid).
    pub fn alphas(&self) -> &[f64] {
        if self.n_grid.is_empty() {
            &self.alpha_grid
        } else {
            &[]
        }
    }

    /// Grid points in output order: `p` outermost.
    pub fn grid(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &p in &self.p {
            if self.n_grid.is_empty() {
                for &a in &self.alpha_grid {
                    out.push(GridPoint {
                        index: out.len(),
                        p,
                        alpha: Some(a),
                        n: None,
                    });
                }
            } else {
                for &n in &self.n_grid {
                    out.push(GridPoint {
                        index: out.len(),
                        p,
                        alpha: None,
                        n: Some(n),
                    });
                }
            }
        }
        out
    }
}
