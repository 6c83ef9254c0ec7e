//! One function per subcommand. Each reads its inputs, writes its artifacts
//! and returns what it wrote.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use hyperising::diagnostics::{concentration_probe, write_probe_csv};
use hyperising::generators::{binarize_series, read_edge_list, read_series_csv, triangles_from_graph};
use hyperising::{
    assign_coefficients, diagnose, draw_samples, exact_sample, regular_hypergraph, run_pipeline, CoefficientScheme,
    DiagnosticsReport, HypergraphSupport, InteractionTensor, PipelineOptions, RecoveryReport, SampleMatrix, SignMode,
};
use serde::Serialize;

use crate::config::{GibbsSettings, PlotMetric, SweepConfig};
use crate::error::{CliError, Result};
use crate::plot::render_svg;
use crate::sweep::{
    read_sweep_csv, run_sweep, summarize_rows, write_summary_csv, write_sweep_csv, write_timings_csv, SweepResult,
    TrialSeeds,
};

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    write_text(path, &text)
}

/// Adds the path to a core error that carries none.
fn at(path: &Path) -> impl Fn(hyperising::Error) -> CliError + '_ {
    move |e| match e {
        hyperising::Error::Io(source) => CliError::io(path, source),
        hyperising::Error::Parse { line, message } => CliError::Schema {
            path: path.to_path_buf(),
            message: format!("line {line}: {message}"),
        },
        other => CliError::Core(other),
    }
}

pub fn read_tensor(path: &Path) -> Result<InteractionTensor> {
    InteractionTensor::read_from(open(path)?).map_err(at(path))
}

pub fn read_samples(path: &Path) -> Result<SampleMatrix> {
    SampleMatrix::read_csv(open(path)?).map_err(at(path))
}

/// `#support p=<p> k=<k>` then one edge per line.
pub fn support_to_text(h: &HypergraphSupport) -> String {
    let mut s = format!("#support p={} k={}\n", h.p(), h.k());
    for e in h.edges() {
        let v: Vec<String> = e.iter().map(usize::to_string).collect();
        s.push_str(&v.join(" "));
        s.push('\n');
    }
    s
}

pub fn read_support(path: &Path) -> Result<HypergraphSupport> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let bad = |line: usize, m: String| CliError::Schema {
        path: path.to_path_buf(),
        message: format!("line {line}: {m}"),
    };
    let mut lines = text.lines().enumerate();
    let (_, head) = lines.next().ok_or_else(|| bad(1, "empty file".into()))?;
    let fields: Vec<&str> = head.split_whitespace().collect();
    let num = |key: &str| -> Result<usize> {
        fields
            .iter()
            .find_map(|f| f.strip_prefix(key))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(1, format!("header {head:?} lacks {key}<int>")))
    };
    if fields.first() != Some(&"#support") {
        return Err(bad(1, format!("expected a #support header, got {head:?}")));
    }
    let (p, k) = (num("p=")?, num("k=")?);
    let mut edges = Vec::new();
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let e: std::result::Result<Vec<usize>, _> = line.split_whitespace().map(str::parse).collect();
        edges.push(e.map_err(|_| bad(i + 1, format!("bad vertex list {line:?}")))?);
    }
    Ok(HypergraphSupport::new(p, k, edges)?)
}

pub struct GenerateArgs {
    pub p: usize,
    pub k: usize,
    pub d: usize,
    /// Trial seed, as in the sweep CSV.
    pub seed: u64,
    pub coupling: Option<f64>,
    pub signs: SignMode,
    /// Put couplings on this support instead of drawing a regular one.
    pub support: Option<PathBuf>,
    pub out: PathBuf,
}

pub fn cmd_generate(a: &GenerateArgs) -> Result<InteractionTensor> {
    let seeds = TrialSeeds::from_trial(a.seed);
    let support = match &a.support {
        Some(path) => read_support(path)?,
        None => regular_hypergraph(a.p, a.k, a.d, seeds.hypergraph)?,
    };
    let mut scheme = CoefficientScheme::default_for(support.k())?;
    if let Some(c) = a.coupling {
        scheme.magnitude = c;
    }
    scheme.sign_mode = a.signs;
    scheme.seed = seeds.coefficients;
    let t = assign_coefficients(&support, &scheme)?;
    write_text(&a.out, &t.to_text())?;
    Ok(t)
}

pub struct SampleArgs {
    pub tensor: PathBuf,
    pub n: usize,
    pub seed: u64,
    pub gibbs: GibbsSettings,
    /// Inverse-CDF draws from the enumerated law instead of Gibbs.
    pub exact: bool,
    pub out: PathBuf,
}

pub fn cmd_sample(a: &SampleArgs) -> Result<SampleMatrix> {
    let t = read_tensor(&a.tensor)?;
    let seed = TrialSeeds::from_trial(a.seed).sampler;
    let s = if a.exact {
        exact_sample(&t, a.n, seed)?
    } else {
        draw_samples(&t, a.n, &a.gibbs.with_seed(seed))?
    };
    let mut w = create(&a.out)?;
    s.write_csv(&mut w).map_err(at(&a.out))?;
    w.flush().map_err(|e| CliError::io(&a.out, e))?;
    Ok(s)
}

pub struct FitArgs {
    pub samples: PathBuf,
    pub k: usize,
    pub pipeline: PipelineOptions,
    pub truth: Option<PathBuf>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Serialize)]
pub struct Timing {
    pub wall_time_s: f64,
}

#[derive(Debug, Serialize)]
pub struct FitOutput {
    pub samples: PathBuf,
    pub options: PipelineOptions,
    pub report: RecoveryReport,
    pub timing: Timing,
}

pub fn cmd_fit(a: &FitArgs) -> Result<FitOutput> {
    let samples = read_samples(&a.samples)?;
    let truth = a.truth.as_deref().map(read_tensor).transpose()?;
    let start = Instant::now();
    let report = run_pipeline(&samples, a.k, truth.as_ref(), &a.pipeline)?;
    let out = FitOutput {
        samples: a.samples.clone(),
        options: a.pipeline.clone(),
        report,
        timing: Timing {
            wall_time_s: start.elapsed().as_secs_f64(),
        },
    };
    write_json(&a.out_dir.join("report.json"), &out)?;
    let mut dump = String::new();
    for node in &out.report.nodes {
        for (sub, v) in &node.entries {
            let verts: Vec<String> = sub.iter().map(usize::to_string).collect();
            dump.push_str(&format!("{} | {} | {}\n", node.r, verts.join(" "), v));
        }
    }
    write_text(&a.out_dir.join("coefficients.txt"), &dump)?;
    Ok(out)
}

pub struct DiagnoseArgs {
    pub tensor: PathBuf,
    pub probe_node: usize,
    /// Sample sizes for the concentration probe; empty skips it.
    pub probe_n: Vec<usize>,
    pub seed: u64,
    pub out_dir: PathBuf,
}

pub fn cmd_diagnose(a: &DiagnoseArgs) -> Result<DiagnosticsReport> {
    let t = read_tensor(&a.tensor)?;
    let report = diagnose(&t)?;
    write_json(&a.out_dir.join("diagnostics.json"), &report)?;
    if !a.probe_n.is_empty() {
        let rows = concentration_probe(&t, a.probe_node, &a.probe_n, a.seed)?;
        let path = a.out_dir.join("probe.csv");
        let mut w = create(&path)?;
        write_probe_csv(&rows, &mut w)?;
        w.flush().map_err(|e| CliError::io(&path, e))?;
    }
    Ok(report)
}

/// Writes `sweep.csv`, `summary.csv`, `sweep.svg`, `config.json` (all
/// determined by the config) and `timings.csv` (not).
pub fn cmd_sweep(cfg: &SweepConfig, out_dir: &Path) -> Result<SweepResult> {
    let res = run_sweep(cfg)?;
    let mut w = create(&out_dir.join("sweep.csv"))?;
    write_sweep_csv(&res.rows, &mut w)?;
    w.flush().map_err(|e| CliError::io(out_dir.join("sweep.csv"), e))?;
    let mut w = create(&out_dir.join("summary.csv"))?;
    write_summary_csv(&res.summary, &mut w)?;
    w.flush().map_err(|e| CliError::io(out_dir.join("summary.csv"), e))?;
    let mut w = create(&out_dir.join("timings.csv"))?;
    write_timings_csv(&res.rows, &mut w)?;
    w.flush().map_err(|e| CliError::io(out_dir.join("timings.csv"), e))?;
    write_text(&out_dir.join("sweep.svg"), &render_svg(&res.summary, cfg.metric))?;
    let mut stored = cfg.clone();
    stored.workers = 0;
    stored.alpha_grid = cfg.alphas().to_vec();
    write_json(&out_dir.join("config.json"), &stored)?;
    let failed = res.rows.iter().filter(|r| r.outcome.is_err()).count();
    if failed > 0 {
        log::warn!("{failed} of {} trials failed; see the status column", res.rows.len());
    }
    Ok(res)
}

pub fn cmd_plot(csv: &Path, metric: PlotMetric, out: &Path) -> Result<String> {
    let rows = read_sweep_csv(open(csv)?).map_err(|e| match e {
        CliError::Validation(m) => CliError::Schema {
            path: csv.to_path_buf(),
            message: m,
        },
        other => other,
    })?;
    let svg = render_svg(&summarize_rows(&rows), metric);
    write_text(out, &svg)?;
    Ok(svg)
}

pub enum IngestSource {
    /// `u v` edge list; triangles become 3-edges.
    Graph(PathBuf),
    /// One column per node; sign of first differences.
    Series { path: PathBuf, thin: usize },
}

pub enum Ingested {
    Support(HypergraphSupport),
    Samples(SampleMatrix),
}

pub fn cmd_ingest(src: &IngestSource, out: &Path) -> Result<Ingested> {
    match src {
        IngestSource::Graph(path) => {
            let edges = read_edge_list(open(path)?).map_err(at(path))?;
            let h = triangles_from_graph(&edges)?;
            write_text(out, &support_to_text(&h))?;
            Ok(Ingested::Support(h))
        }
        IngestSource::Series { path, thin } => {
            let series = read_series_csv(open(path)?).map_err(at(path))?;
            let s = binarize_series(&series, *thin)?;
            let mut w = create(out)?;
            s.write_csv(&mut w).map_err(at(out))?;
            w.flush().map_err(|e| CliError::io(out, e))?;
            Ok(Ingested::Samples(s))
        }
    }
}
