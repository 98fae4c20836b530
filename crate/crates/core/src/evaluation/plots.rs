//! Histogram plots as standalone SVG files with JSON twins.
//!
//! The SVG is generated purely from `DistributionSummary` values, and the
//! JSON twin stores exactly those summaries, so the plot can be regenerated
//! from the twin byte-for-byte.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::DistributionSummary;
use crate::error::{Error, Result};

/// One output image: a set of distributions drawn over a shared axis.
#[derive(Debug, Clone)]
pub struct PlotGroup {
    pub name: String,
    pub summaries: Vec<DistributionSummary>,
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;

/// Render each group to `<out_dir>/<name>.svg` plus `<name>.json`.
/// Returns the written paths. Empty input is a diagnostic error, not a
/// silent no-op.
pub fn emit_plots(groups: &[PlotGroup], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if groups.is_empty() || groups.iter().all(|g| g.summaries.is_empty()) {
        return Err(Error::EmptyInput("no distributions to plot".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut written = Vec::new();
    for group in groups {
        if group.summaries.is_empty() {
            return Err(Error::EmptyInput(format!("plot group {} is empty", group.name)));
        }
        let svg_path = out_dir.join(format!("{}.svg", group.name));
        let json_path = out_dir.join(format!("{}.json", group.name));

        let svg = render_svg(group);
        std::fs::write(&svg_path, svg).map_err(|e| Error::io(&svg_path, e))?;
        let json = serde_json::to_string_pretty(&group.summaries)
            .map_err(|e| Error::json(&json_path, e))?;
        std::fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))?;
        written.push(svg_path);
        written.push(json_path);
    }
    Ok(written)
}

/// Deterministic SVG of overlaid density histograms.
pub fn render_svg(group: &PlotGroup) -> String {
    let lo = group
        .summaries
        .iter()
        .map(|s| s.histogram.edges[0])
        .fold(f64::INFINITY, f64::min);
    let hi = group
        .summaries
        .iter()
        .map(|s| *s.histogram.edges.last().unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    // Normalize each histogram to fractions so a 20-score set and a
    // 2000-score set share an axis.
    let max_frac = group
        .summaries
        .iter()
        .flat_map(|s| {
            let total = s.count.max(1) as f64;
            s.histogram.counts.iter().map(move |&c| c as f64 / total)
        })
        .fold(0.0, f64::max)
        .max(1e-9);

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let to_x = |v: f64| MARGIN_LEFT + (v - lo) / (hi - lo) * plot_w;
    let to_y = |frac: f64| MARGIN_TOP + plot_h - frac / max_frac * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(s, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\">{}</text>",
        MARGIN_LEFT,
        xml_escape(&group.name)
    );

    // Axes.
    let x0 = MARGIN_LEFT;
    let y0 = MARGIN_TOP + plot_h;
    let _ = writeln!(
        s,
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{}\" y2=\"{y0}\" stroke=\"black\"/>",
        MARGIN_LEFT + plot_w
    );
    let _ = writeln!(
        s,
        "<line x1=\"{x0}\" y1=\"{}\" x2=\"{x0}\" y2=\"{y0}\" stroke=\"black\"/>",
        MARGIN_TOP
    );
    for i in 0..=6 {
        let v = lo + (hi - lo) * i as f64 / 6.0;
        let x = to_x(v);
        let _ = writeln!(
            s,
            "<line x1=\"{x:.2}\" y1=\"{y0}\" x2=\"{x:.2}\" y2=\"{}\" stroke=\"black\"/>",
            y0 + 5.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{x:.2}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{v:.2}</text>",
            y0 + 20.0
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">cosine similarity</text>",
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    );

    for (i, summary) in group.summaries.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let total = summary.count.max(1) as f64;
        let edges = &summary.histogram.edges;
        for (b, &count) in summary.histogram.counts.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let frac = count as f64 / total;
            let x1 = to_x(edges[b]);
            let x2 = to_x(edges[b + 1]);
            let y = to_y(frac);
            let _ = writeln!(
                s,
                "<rect x=\"{x1:.2}\" y=\"{y:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{color}\" fill-opacity=\"0.45\"/>",
                x2 - x1,
                y0 - y
            );
        }
        let ly = MARGIN_TOP + 16.0 * i as f64;
        let lx = MARGIN_LEFT + plot_w - 260.0;
        let _ = writeln!(
            s,
            "<rect x=\"{lx}\" y=\"{:.2}\" width=\"12\" height=\"12\" fill=\"{color}\" fill-opacity=\"0.45\"/>",
            ly - 10.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{ly}\" font-family=\"sans-serif\" font-size=\"11\">{} (n={}, mean={:.3})</text>",
            lx + 16.0,
            xml_escape(&summary.condition),
            summary.count,
            summary.mean
        );
    }

    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
