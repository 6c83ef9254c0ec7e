use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hyperising::{AggregationMode, LambdaMode, PipelineOptions, SelectionRule, SignMode, Spacing};
use hyperising_cli::commands::{
    cmd_diagnose, cmd_fit, cmd_generate, cmd_ingest, cmd_plot, cmd_sample, cmd_sweep, read_tensor, DiagnoseArgs,
    FitArgs, GenerateArgs, IngestSource, Ingested, SampleArgs,
};
use hyperising_cli::{CliError, GibbsSettings, PlotMetric, Result, SweepConfig};

#[derive(Parser)]
#[command(name = "hyperising", version, about = "Signed hyperedge recovery for tensor Ising models")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Draw a d-regular k-uniform support and put couplings on it.
    Generate(GenerateCmd),
    /// Sample spin configurations from a tensor file.
    Sample(SampleCmd),
    /// Recover the signed hypergraph from a sample CSV.
    Fit(FitCmd),
    /// Fisher, dependency and incoherence constants of a tensor.
    Diagnose(DiagnoseCmd),
    /// Recovery over a grid of sizes and sample scalings.
    Sweep(SweepCmd),
    /// Render a sweep CSV as SVG.
    Plot(PlotCmd),
    /// Turn a graph into triangle hyperedges, or time series into spins.
    Ingest(IngestCmd),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Theory,
    Practice,
    Fixed,
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectionArg {
    /// Extended BIC on unpenalized support refits, wide c grid.
    Ebic,
    /// 2 n loss + df ln n on the penalized fits, c in 0.1..2.0.
    Bic,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    AndStrict,
    OrMax,
}

impl From<RuleArg> for AggregationMode {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::AndStrict => AggregationMode::AndStrict,
            RuleArg::OrMax => AggregationMode::OrMax,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SignArg {
    Plus,
    Rademacher,
}

impl From<SignArg> for SignMode {
    fn from(s: SignArg) -> Self {
        match s {
            SignArg::Plus => SignMode::AllPlus,
            SignArg::Rademacher => SignMode::Rademacher,
        }
    }
}

#[derive(Args, Default)]
struct LambdaArgs {
    /// How the penalty is chosen.
    #[arg(long, value_enum)]
    lambda_mode: Option<ModeArg>,
    /// Incoherence parameter for the theory schedule.
    #[arg(long)]
    alpha_incoh: Option<f64>,
    /// Penalty for the fixed mode.
    #[arg(long)]
    lambda: Option<f64>,
    /// Selection criterion preset for the practice mode.
    #[arg(long, value_enum)]
    selection: Option<SelectionArg>,
    /// Grid of c in lambda = c sqrt(k ln p / n) (practice mode).
    #[arg(long, value_delimiter = ',')]
    c: Option<Vec<f64>>,
    /// EBIC exponent (practice mode).
    #[arg(long)]
    gamma: Option<f64>,
}

impl LambdaArgs {
    fn apply(&self, current: &LambdaMode) -> Result<LambdaMode> {
        let mut mode = match self.lambda_mode {
            None => current.clone(),
            Some(ModeArg::Theory) => LambdaMode::Theory { alpha: 1.0 },
            Some(ModeArg::Fixed) => LambdaMode::Fixed {
                lambda: self
                    .lambda
                    .ok_or_else(|| CliError::invalid("--lambda-mode fixed needs --lambda"))?,
            },
            Some(ModeArg::Practice) => match current {
                LambdaMode::Practice(_) => current.clone(),
                _ => LambdaMode::Practice(SelectionRule::default()),
            },
        };
        match &mut mode {
            LambdaMode::Theory { alpha } => {
                if let Some(a) = self.alpha_incoh {
                    *alpha = a;
                }
            }
            LambdaMode::Fixed { lambda } => {
                if let Some(l) = self.lambda {
                    *lambda = l;
                }
            }
            LambdaMode::Practice(rule) => {
                match self.selection {
                    Some(SelectionArg::Bic) => *rule = SelectionRule::bic(),
                    Some(SelectionArg::Ebic) => *rule = SelectionRule::refit_ebic(),
                    None => {}
                }
                if let Some(c) = &self.c {
                    rule.c_grid = c.clone();
                }
                if let Some(g) = self.gamma {
                    rule.gamma = g;
                }
            }
        }
        Ok(mode)
    }
}

#[derive(Args)]
struct GibbsArgs {
    /// Burn-in sweeps.
    #[arg(long)]
    burn_in: Option<usize>,
    /// Sweeps between retained samples; 0 restarts a chain per sample.
    #[arg(long)]
    spacing: Option<usize>,
}

impl GibbsArgs {
    fn apply(&self, mut g: GibbsSettings) -> GibbsSettings {
        if let Some(b) = self.burn_in {
            g.burn_in_sweeps = b;
        }
        match self.spacing {
            Some(0) => g.spacing = Spacing::Restart,
            Some(s) => g.spacing = Spacing::Sweeps(s),
            None => {}
        }
        g
    }
}

#[derive(Args)]
struct GenerateCmd {
    #[arg(long, default_value_t = 32)]
    p: usize,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 3)]
    d: usize,
    /// Trial seed (the sweep CSV's seed column reproduces a trial).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Coupling magnitude [default: 0.5/k!].
    #[arg(long)]
    coupling: Option<f64>,
    #[arg(long, value_enum, default_value = "plus")]
    signs: SignArg,
    /// Support file from `ingest --edges`, used instead of a regular draw.
    #[arg(long)]
    support: Option<PathBuf>,
    #[arg(long, default_value = "tensor.txt")]
    out: PathBuf,
}

#[derive(Args)]
struct SampleCmd {
    #[arg(long)]
    tensor: PathBuf,
    /// Number of samples.
    #[arg(long, conflicts_with = "alpha")]
    n: Option<usize>,
    /// Take n from the scaling law at this alpha.
    #[arg(long)]
    alpha: Option<f64>,
    /// Degree used by the scaling law [default: the tensor's max degree].
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, default_value_t = hyperising::generators::RATE_DIVISOR)]
    divisor: f64,
    /// Trial seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Draw i.i.d. from the enumerated law (small p only).
    #[arg(long)]
    exact: bool,
    #[command(flatten)]
    gibbs: GibbsArgs,
    #[arg(long, default_value = "samples.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct FitCmd {
    #[arg(long)]
    samples: PathBuf,
    #[arg(long)]
    k: usize,
    #[command(flatten)]
    lambda: LambdaArgs,
    #[arg(long, value_enum, default_value = "and-strict")]
    rule: RuleArg,
    /// True tensor; adds recovery metrics to the report.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct DiagnoseCmd {
    #[arg(long)]
    tensor: PathBuf,
    /// Node for the concentration probe.
    #[arg(long, default_value_t = 0)]
    probe_node: usize,
    /// Sample sizes for the concentration probe.
    #[arg(long, value_delimiter = ',')]
    probe_n: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SweepCmd {
    /// JSON config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<usize>>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    alpha_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    n_grid: Option<Vec<usize>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    divisor: Option<f64>,
    #[command(flatten)]
    lambda: LambdaArgs,
    #[arg(long, value_enum)]
    rule: Option<RuleArg>,
    #[arg(long)]
    coupling: Option<f64>,
    #[arg(long, value_enum)]
    signs: Option<SignArg>,
    #[command(flatten)]
    gibbs: GibbsArgs,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0: one per core).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_enum)]
    metric: Option<PlotMetric>,
    #[arg(long, default_value = "sweep-out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct PlotCmd {
    #[arg(long)]
    csv: PathBuf,
    #[arg(long, value_enum, default_value = "rate")]
    metric: PlotMetric,
    #[arg(long, default_value = "sweep.svg")]
    out: PathBuf,
}

#[derive(Args)]
#[group(required = true, multiple = false, id = "source")]
struct IngestSourceArgs {
    /// Graph edge list, `u v` per line.
    #[arg(long)]
    edges: Option<PathBuf>,
    /// CSV of time series, one column per node.
    #[arg(long)]
    series: Option<PathBuf>,
}

#[derive(Args)]
struct IngestCmd {
    #[command(flatten)]
    source: IngestSourceArgs,
    /// Keep every thin-th retained time step.
    #[arg(long, default_value_t = 3)]
    thin: usize,
    #[arg(long)]
    out: PathBuf,
}

fn sweep_config(c: &SweepCmd) -> Result<SweepConfig> {
    let mut cfg = match &c.config {
        Some(path) => SweepConfig::from_json_file(path)?,
        None => SweepConfig::default(),
    };
    if let Some(v) = &c.p {
        cfg.p = v.clone();
    }
    if let Some(v) = c.k {
        cfg.k = v;
    }
    if let Some(v) = c.d {
        cfg.d = v;
    }
    if let Some(v) = &c.alpha_grid {
        cfg.alpha_grid = v.clone();
        cfg.n_grid.clear();
    }
    if let Some(v) = &c.n_grid {
        cfg.n_grid = v.clone();
        cfg.alpha_grid.clear();
    }
    if let Some(v) = c.trials {
        cfg.trials = v;
    }
    if let Some(v) = c.divisor {
        cfg.divisor = v;
    }
    cfg.lambda = c.lambda.apply(&cfg.lambda)?;
    if let Some(v) = c.rule {
        cfg.rule = v.into();
    }
    if c.coupling.is_some() {
        cfg.coupling = c.coupling;
    }
    if let Some(v) = c.signs {
        cfg.signs = v.into();
    }
    cfg.gibbs = c.gibbs.apply(cfg.gibbs);
    if let Some(v) = c.seed {
        cfg.base_seed = v;
    }
    if let Some(v) = c.workers {
        cfg.workers = v;
    }
    if let Some(v) = c.metric {
        cfg.metric = v;
    }
    Ok(cfg)
}

fn sample_size(c: &SampleCmd) -> Result<usize> {
    match (c.n, c.alpha) {
        (Some(n), _) => Ok(n),
        (None, Some(alpha)) => {
            let t = read_tensor(&c.tensor)?;
            let d = c.d.unwrap_or_else(|| t.degrees().max);
            Ok(hyperising::scaling_n(alpha, t.p(), t.k(), d, c.divisor)?)
        }
        (None, None) => Err(CliError::invalid("give --n or --alpha")),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Generate(c) => {
            let t = cmd_generate(&GenerateArgs {
                p: c.p,
                k: c.k,
                d: c.d,
                seed: c.seed,
                coupling: c.coupling,
                signs: c.signs.into(),
                support: c.support,
                out: c.out.clone(),
            })?;
            println!("wrote {} ({} edges, p={}, k={})", c.out.display(), t.num_edges(), t.p(), t.k());
        }
        Cmd::Sample(c) => {
            let n = sample_size(&c)?;
            let s = cmd_sample(&SampleArgs {
                tensor: c.tensor.clone(),
                n,
                seed: c.seed,
                gibbs: c.gibbs.apply(GibbsSettings::default()),
                exact: c.exact,
                out: c.out.clone(),
            })?;
            println!("wrote {} ({} x {})", c.out.display(), s.n(), s.p());
        }
        Cmd::Fit(c) => {
            let pipeline = PipelineOptions {
                lambda_mode: c.lambda.apply(&LambdaMode::default())?,
                rule: hyperising::AggregationRule {
                    mode: c.rule.into(),
                    ..Default::default()
                },
                ..Default::default()
            };
            let out = cmd_fit(&FitArgs {
                samples: c.samples,
                k: c.k,
                pipeline,
                truth: c.truth,
                out_dir: c.out_dir.clone(),
            })?;
            let r = &out.report;
            print!("lambda {:.6}, {} edges", r.lambda, r.estimated.len());
            if let Some(m) = &r.metrics {
                print!(", recovery rate {:.3}, success {}", m.recovery_rate, m.success);
            }
            println!("; report in {}", c.out_dir.join("report.json").display());
        }
        Cmd::Diagnose(c) => {
            let rep = cmd_diagnose(&DiagnoseArgs {
                tensor: c.tensor,
                probe_node: c.probe_node,
                probe_n: c.probe_n,
                seed: c.seed,
                out_dir: c.out_dir.clone(),
            })?;
            println!(
                "C_min {:.6}, D_max {:.6}, incoherence {:.6}; report in {}",
                rep.c_min_min,
                rep.d_max_max,
                rep.incoherence_max,
                c.out_dir.join("diagnostics.json").display()
            );
        }
        Cmd::Sweep(c) => {
            let cfg = sweep_config(&c)?;
            let res = cmd_sweep(&cfg, &c.out_dir)?;
            for s in &res.summary {
                let x = match (s.alpha, s.n) {
                    (Some(a), _) => format!("alpha={a}"),
                    (None, Some(n)) => format!("n={n}"),
                    _ => String::new(),
                };
                let f = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3}"));
                println!(
                    "p={} {x} n={} rate={} success={} failed={}",
                    s.p,
                    s.n.map_or("-".to_string(), |n| n.to_string()),
                    f(s.mean_rate),
                    f(s.success_fraction),
                    s.failed
                );
            }
            println!("outputs in {}", c.out_dir.display());
        }
        Cmd::Plot(c) => {
            cmd_plot(&c.csv, c.metric, &c.out)?;
            println!("wrote {}", c.out.display());
        }
        Cmd::Ingest(c) => {
            let src = match (c.source.edges, c.source.series) {
                (Some(p), _) => IngestSource::Graph(p),
                (None, Some(p)) => IngestSource::Series { path: p, thin: c.thin },
                (None, None) => unreachable!("clap requires one source"),
            };
            match cmd_ingest(&src, &c.out)? {
                Ingested::Support(h) => println!("wrote {} ({} triangles, p={})", c.out.display(), h.num_edges(), h.p()),
                Ingested::Samples(s) => println!("wrote {} ({} x {})", c.out.display(), s.n(), s.p()),
            }
        }
    }
    Ok(())
}

fn report(e: &CliError) {
    eprintln!("error: {e}");
    if let Some(h) = e.hint() {
        eprintln!("hint: {h}");
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(&e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
