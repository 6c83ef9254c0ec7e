//! Deterministic SVG line charts of sweep summaries.

use std::fmt::Write;

use crate::config::PlotMetric;
use crate::sweep::GridSummary;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

struct Series {
    p: usize,
    points: Vec<(f64, f64)>,
}

fn series(summary: &[GridSummary], metric: PlotMetric, by_alpha: bool) -> Vec<Series> {
    let mut out: Vec<Series> = Vec::new();
    for s in summary {
        let y = match metric {
            PlotMetric::Rate => s.mean_rate,
            PlotMetric::Success => s.success_fraction,
        };
        let x = if by_alpha { s.alpha } else { s.n.map(|n| n as f64) };
        let (Some(x), Some(y)) = (x, y) else { continue };
        match out.iter_mut().find(|c| c.p == s.p) {
            Some(c) => c.points.push((x, y)),
            None => out.push(Series {
                p: s.p,
                points: vec![(x, y)],
            }),
        }
    }
    for c in &mut out {
        c.points.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    out.sort_by_key(|c| c.p);
    out
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

/// Renders mean rate or success fraction against alpha (or n when the sweep
/// used an n grid), one polyline per `p`.
pub fn render_svg(summary: &[GridSummary], metric: PlotMetric) -> String {
    let by_alpha = summary.iter().all(|s| s.alpha.is_some());
    let lines = series(summary, metric, by_alpha);
    let (ylabel, title) = match metric {
        PlotMetric::Rate => ("mean recovery rate", "Recovery rate"),
        PlotMetric::Success => ("success fraction", "Exact recovery"),
    };
    let xlabel = if by_alpha { "alpha" } else { "n" };

    let xs: Vec<f64> = lines.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
    let (mut x0, mut x1) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if xs.is_empty() {
        (x0, x1) = (0.0, 1.0);
    } else if x1 - x0 < 1e-12 {
        (x0, x1) = (x0 - 0.5, x1 + 0.5);
    }
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (1.0 - y.clamp(0.0, 1.0)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#,
        W = WIDTH,
        H = HEIGHT
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{title}</text>"#,
        fmt(LEFT + pw / 2.0)
    );
    // axes
    let _ = writeln!(
        s,
        r#"<g class="axes" stroke="black" fill="none"><path d="M{l},{t} V{b} H{r}"/></g>"#,
        l = fmt(LEFT),
        t = fmt(TOP),
        b = fmt(TOP + ph),
        r = fmt(LEFT + pw)
    );
    for i in 0..=5 {
        let y = i as f64 / 5.0;
        let py = fmt(sy(y));
        let _ = writeln!(
            s,
            r##"<line x1="{}" y1="{py}" x2="{}" y2="{py}" stroke="#ddd"/><text x="{}" y="{py}" dy="4" text-anchor="end">{}</text>"##,
            fmt(LEFT),
            fmt(LEFT + pw),
            fmt(LEFT - 6.0),
            fmt(y)
        );
    }
    let ticks: Vec<f64> = {
        let mut t: Vec<f64> = xs.clone();
        t.sort_by(f64::total_cmp);
        t.dedup();
        if t.is_empty() || t.len() > 12 {
            (0..=4).map(|i| x0 + (x1 - x0) * i as f64 / 4.0).collect()
        } else {
            t
        }
    };
    for x in ticks {
        let px = fmt(sx(x));
        let label = if by_alpha { fmt(x) } else { format!("{}", x.round()) };
        let _ = writeln!(
            s,
            r#"<line x1="{px}" y1="{b}" x2="{px}" y2="{b5}" stroke="black"/><text x="{px}" y="{b18}" text-anchor="middle">{label}</text>"#,
            b = fmt(TOP + ph),
            b5 = fmt(TOP + ph + 5.0),
            b18 = fmt(TOP + ph + 18.0)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}</text>"#,
        fmt(LEFT + pw / 2.0),
        fmt(HEIGHT - 12.0)
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(16,{}) rotate(-90)" text-anchor="middle">{ylabel}</text>"#,
        fmt(TOP + ph / 2.0)
    );

    if lines.is_empty() {
        let _ = writeln!(
            s,
            r#"<text class="no-data" x="{}" y="{}" text-anchor="middle" fill="gray">no data</text>"#,
            fmt(LEFT + pw / 2.0),
            fmt(TOP + ph / 2.0)
        );
    }
    for (i, c) in lines.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = c
            .points
            .iter()
            .map(|&(x, y)| format!("{},{}", fmt(sx(x)), fmt(sy(y))))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="series" data-p="{}" fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            c.p,
            pts.join(" ")
        );
        for &(x, y) in &c.points {
            let _ = writeln!(
                s,
                r#"<circle cx="{}" cy="{}" r="3" fill="{color}"/>"#,
                fmt(sx(x)),
                fmt(sy(y))
            );
        }
        let ly = TOP + 14.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 16.0;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}" dy="4">p = {}</text>"#,
            fmt(lx),
            fmt(ly),
            fmt(lx + 20.0),
            fmt(ly),
            fmt(lx + 26.0),
            fmt(ly),
            c.p
        );
    }
    s.push_str("</svg>\n");
    s
}
