//! Self-contained SVG plots. Coordinates are printed with two decimals so the
//! output is stable across platforms.

use std::fmt::Write as _;

use super::{FrequencyTrendTable, Provenance};
use crate::corpus::SliceId;
use crate::divergence::{KldMatrix, SyncSeries};
use crate::embedding::{EdeTrajectory, MedianSeries};

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 44.0;
const BOTTOM: f64 = 84.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn open(out: &mut String, title: &str, provenance: &Provenance) {
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let meta: Vec<String> = provenance.entries().iter().map(|(k, v)| format!("{k}={}", esc(v))).collect();
    let _ = writeln!(out, "<!-- {} -->", meta.join(" ").replace("--", "- -"));
    let _ = writeln!(out, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>",
        WIDTH / 2.0,
        esc(title)
    );
}

struct Series {
    name: String,
    values: Vec<Option<f64>>,
    color: String,
    width: f64,
    legend: bool,
}

struct LineChart<'a> {
    title: &'a str,
    y_label: &'a str,
    x_labels: Vec<String>,
    series: Vec<Series>,
    markers: bool,
}

impl LineChart<'_> {
    fn y_range(&self) -> (f64, f64) {
        let vals = self.series.iter().flat_map(|s| s.values.iter().flatten().copied());
        let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !lo.is_finite() {
            return (0.0, 1.0);
        }
        if hi - lo < 1e-300 {
            return (lo - 1.0, hi + 1.0);
        }
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }

    fn render(&self, provenance: &Provenance) -> String {
        let mut out = String::new();
        open(&mut out, self.title, provenance);
        let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
        let n = self.x_labels.len();
        let x = |i: usize| if n <= 1 { LEFT + pw / 2.0 } else { LEFT + pw * i as f64 / (n - 1) as f64 };
        let (lo, hi) = self.y_range();
        let y = |v: f64| TOP + ph * (hi - v) / (hi - lo);

        let _ = writeln!(
            out,
            "<rect x=\"{LEFT:.2}\" y=\"{TOP:.2}\" width=\"{pw:.2}\" height=\"{ph:.2}\" fill=\"none\" stroke=\"#444\"/>"
        );
        for k in 0..=4 {
            let v = lo + (hi - lo) * k as f64 / 4.0;
            let _ = writeln!(
                out,
                "<line x1=\"{LEFT:.2}\" y1=\"{0:.2}\" x2=\"{1:.2}\" y2=\"{0:.2}\" stroke=\"#ddd\"/><text x=\"{2:.2}\" y=\"{3:.2}\" text-anchor=\"end\">{4}</text>",
                y(v),
                LEFT + pw,
                LEFT - 6.0,
                y(v) + 4.0,
                tick(v, hi - lo)
            );
        }
        let step = n.div_ceil(24).max(1);
        for (i, label) in self.x_labels.iter().enumerate().step_by(step) {
            let (tx, ty) = (x(i), TOP + ph + 14.0);
            let _ = writeln!(
                out,
                "<text x=\"{tx:.2}\" y=\"{ty:.2}\" text-anchor=\"end\" transform=\"rotate(-45 {tx:.2} {ty:.2})\">{}</text>",
                esc(label)
            );
        }
        let _ = writeln!(
            out,
            "<text x=\"18\" y=\"{0:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {0:.2})\">{1}</text>",
            TOP + ph / 2.0,
            esc(self.y_label)
        );

        for s in &self.series {
            let _ = writeln!(out, "<g class=\"series\" data-name=\"{}\">", esc(&s.name));
            // Consecutive defined points form one polyline; a gap ends it.
            let mut run: Vec<(f64, f64)> = Vec::new();
            let flush = |run: &mut Vec<(f64, f64)>, out: &mut String| {
                if run.len() > 1 {
                    let pts: Vec<String> = run.iter().map(|(a, b)| format!("{a:.2},{b:.2}")).collect();
                    let _ = writeln!(
                        out,
                        "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"{}\" points=\"{}\"/>",
                        s.color,
                        s.width,
                        pts.join(" ")
                    );
                }
                run.clear();
            };
            for (i, v) in s.values.iter().enumerate() {
                match v {
                    Some(v) => run.push((x(i), y(*v))),
                    None => flush(&mut run, &mut out),
                }
            }
            flush(&mut run, &mut out);
            if self.markers {
                for (i, v) in s.values.iter().enumerate() {
                    if let Some(v) = v {
                        let _ = writeln!(out, "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{}\"/>", x(i), y(*v), s.color);
                    }
                }
            }
            let _ = writeln!(out, "</g>");
        }

        for (k, s) in self.series.iter().filter(|s| s.legend).enumerate() {
            let ly = TOP + 10.0 + 18.0 * k as f64;
            let lx = WIDTH - RIGHT + 14.0;
            let _ = writeln!(
                out,
                "<line x1=\"{lx:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" stroke=\"{}\" stroke-width=\"{}\"/><text x=\"{:.2}\" y=\"{:.2}\">{}</text>",
                lx + 20.0,
                s.color,
                s.width,
                lx + 26.0,
                ly + 4.0,
                esc(&s.name)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

fn tick(v: f64, span: f64) -> String {
    let digits = if span >= 10.0 {
        1
    } else if span >= 0.1 {
        3
    } else {
        (-span.log10()).ceil().clamp(0.0, 12.0) as usize + 3
    };
    format!("{v:.digits$}")
}

fn labels(slices: &[SliceId]) -> Vec<String> {
    slices.iter().map(SliceId::to_string).collect()
}

/// Summed significant KLD per slice; slices without cohort text are gaps.
pub fn sync_series_svg(series: &SyncSeries, provenance: &Provenance) -> String {
    let slices: Vec<SliceId> = series.points.iter().map(|p| p.slice).collect();
    LineChart {
        title: "Synchronous KLD (significant terms)",
        y_label: "KLD [bits]",
        x_labels: labels(&slices),
        series: vec![Series {
            name: "cohort vs field".into(),
            values: series.points.iter().map(|p| p.report.as_ref().map(|r| r.summed_significant_bits)).collect(),
            color: PALETTE[0].into(),
            width: 2.0,
            legend: false,
        }],
        markers: true,
    }
    .render(provenance)
}

/// Per-slice contributions of the `top` most and least divergent
/// significant terms, ranked by their summed contribution over all slices.
pub fn pointwise_terms_svg(series: &SyncSeries, top: usize, provenance: &Provenance) -> String {
    use std::collections::BTreeMap;
    let mut totals: BTreeMap<&str, f64> = BTreeMap::new();
    for r in series.points.iter().filter_map(|p| p.report.as_ref()) {
        for c in r.significant() {
            *totals.entry(&c.term).or_default() += c.kld_bits;
        }
    }
    let mut ranked: Vec<(&str, f64)> = totals.into_iter().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
    let mut chosen: Vec<(&str, &str)> = ranked.iter().take(top).map(|(t, _)| (*t, "#d62728")).collect();
    for (t, _) in ranked.iter().rev().take(top) {
        if !chosen.iter().any(|(c, _)| c == t) {
            chosen.push((t, "#1f77b4"));
        }
    }
    let slices: Vec<SliceId> = series.points.iter().map(|p| p.slice).collect();
    let lines = chosen
        .iter()
        .map(|(term, color)| Series {
            name: term.to_string(),
            values: series
                .points
                .iter()
                .map(|p| {
                    let r = p.report.as_ref()?;
                    Some(r.contributions.iter().find(|c| c.term == *term && c.significant).map_or(0.0, |c| c.kld_bits))
                })
                .collect(),
            color: color.to_string(),
            width: 1.5,
            legend: true,
        })
        .collect();
    LineChart {
        title: "Pointwise KLD of the most and least divergent terms",
        y_label: "contribution [bits]",
        x_labels: labels(&slices),
        series: lines,
        markers: false,
    }
    .render(provenance)
}

/// Trajectories in grey with the median series on top.
pub fn ede_svg(trajectories: &[EdeTrajectory], median: &MedianSeries, provenance: &Provenance) -> String {
    let mut slices: Vec<SliceId> = trajectories.iter().flat_map(|t| t.points.iter().map(|p| p.slice)).collect();
    slices.sort();
    slices.dedup();
    let index = |s: SliceId| slices.binary_search(&s).expect("slice collected above");
    let mut lines: Vec<Series> = trajectories
        .iter()
        .map(|t| {
            let mut values = vec![None; slices.len()];
            for p in &t.points {
                values[index(p.slice)] = Some(p.density);
            }
            Series {
                name: t.reference_doc.clone(),
                values,
                color: "#9a9a9a".into(),
                width: 0.8,
                legend: false,
            }
        })
        .collect();
    let mut values = vec![None; slices.len()];
    for p in &median.points {
        if let Ok(k) = slices.binary_search(&p.slice) {
            values[k] = Some(p.median);
        }
    }
    lines.push(Series {
        name: "median".into(),
        values,
        color: "#d62728".into(),
        width: 2.5,
        legend: true,
    });
    LineChart {
        title: "Embedding density at reference documents",
        y_label: "density",
        x_labels: labels(&slices),
        series: lines,
        markers: false,
    }
    .render(provenance)
}

/// Trend lines, smoothed when the table carries a smoothed copy.
pub fn trends_svg(table: &FrequencyTrendTable, provenance: &Provenance) -> String {
    let source = table.smoothed.as_ref().unwrap_or(&table.values);
    let lines = table
        .terms
        .iter()
        .enumerate()
        .map(|(k, t)| Series {
            name: t.clone(),
            values: source[t].clone(),
            color: PALETTE[k % PALETTE.len()].into(),
            width: 1.5,
            legend: true,
        })
        .collect();
    let provenance = match table.smoothing_bandwidth {
        Some(bw) => provenance.clone().with("smoothing_bandwidth_bins", bw),
        None => provenance.clone(),
    };
    LineChart {
        title: "Relative token frequency",
        y_label: "relative frequency",
        x_labels: labels(&table.bins),
        series: lines,
        markers: false,
    }
    .render(&provenance)
}

/// Heatmap of summed significant KLD with each row's minimum marked.
pub fn matrix_heatmap_svg(matrix: &KldMatrix, provenance: &Provenance) -> String {
    let mut out = String::new();
    open(&mut out, "Asynchronous KLD (cohort slice vs field slice)", provenance);
    let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let (nr, nc) = (matrix.rows.len().max(1), matrix.cols.len().max(1));
    let (cw, ch) = (pw / nc as f64, ph / nr as f64);
    let all = matrix.values.iter().flatten().copied().filter(|v| v.is_finite());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    for (i, row) in matrix.values.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let t = ((v - lo) / span).clamp(0.0, 1.0);
            // white (low) to dark blue (high)
            let r = (255.0 * (1.0 - t) + 8.0 * t).round() as u8;
            let g = (255.0 * (1.0 - t) + 48.0 * t).round() as u8;
            let b = (255.0 * (1.0 - t) + 107.0 * t).round() as u8;
            let _ = writeln!(
                out,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{cw:.2}\" height=\"{ch:.2}\" fill=\"#{r:02x}{g:02x}{b:02x}\"><title>{} vs {}: {v}</title></rect>",
                LEFT + cw * j as f64,
                TOP + ch * i as f64,
                matrix.rows[i],
                matrix.cols[j]
            );
        }
    }
    for (i, &j) in matrix.argmin_per_row.iter().enumerate() {
        let _ = writeln!(
            out,
            "<circle class=\"row-min\" cx=\"{:.2}\" cy=\"{:.2}\" r=\"{:.2}\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"2\"/>",
            LEFT + cw * (j as f64 + 0.5),
            TOP + ch * (i as f64 + 0.5),
            (cw.min(ch) * 0.35).max(1.5)
        );
    }
    let step_c = nc.div_ceil(24).max(1);
    for (j, c) in matrix.cols.iter().enumerate().step_by(step_c) {
        let (tx, ty) = (LEFT + cw * (j as f64 + 0.5), TOP + ph + 14.0);
        let _ = writeln!(
            out,
            "<text x=\"{tx:.2}\" y=\"{ty:.2}\" text-anchor=\"end\" transform=\"rotate(-45 {tx:.2} {ty:.2})\">{c}</text>"
        );
    }
    let step_r = nr.div_ceil(24).max(1);
    for (i, r) in matrix.rows.iter().enumerate().step_by(step_r) {
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{r}</text>",
            LEFT - 6.0,
            TOP + ch * (i as f64 + 0.5) + 4.0
        );
    }
    let lx = WIDTH - RIGHT + 20.0;
    let _ = writeln!(
        out,
        "<text x=\"{lx:.2}\" y=\"{:.2}\">min {}</text><text x=\"{lx:.2}\" y=\"{:.2}\">max {}</text>",
        TOP + 12.0,
        tick(lo, span),
        TOP + 30.0,
        tick(hi, span)
    );
    out.push_str("</svg>\n");
    out
}
