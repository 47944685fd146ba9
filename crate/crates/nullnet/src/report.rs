//! Deterministic CSV/JSON/SVG report emission from an aggregated
//! `ScoreSummary`. CSV floats use fixed 6-significant-digit formatting so
//! repeated runs diff byte-identically; the SVG charts are presentation-only.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::evaluate::ScoreSummary;

/// Fixed 6-significant-digit decimal formatting.
pub fn fmt6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = (5 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Writes clean_scores.csv, threshold_outcomes.csv, sweep.csv,
/// thresholds.csv, summary.json, and the four SVG charts. Every CSV carries
/// the producing manifest digest as a leading comment line. Returns the
/// written paths.
pub fn emit_report(summary: &ScoreSummary, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let header = format!("# manifest {}\n", summary.manifest_digest);
    let mut written = Vec::new();
    let mut write = |name: &str, content: String| -> Result<()> {
        let path = out_dir.join(name);
        fs::write(&path, content)?;
        written.push(path);
        Ok(())
    };

    // clean_scores.csv: model_type, seed, accuracy
    let mut csv = header.clone() + "model_type,seed,accuracy\n";
    for mt in &summary.model_types {
        for r in &summary.per_seed {
            writeln!(csv, "{mt},{},{}", r.seed, fmt6(r.clean[mt])).unwrap();
        }
    }
    write("clean_scores.csv", csv)?;

    // threshold_outcomes.csv: model_type, seed, correct, misclassified, unclassified
    let mut csv = header.clone() + "model_type,seed,correct,misclassified,unclassified\n";
    for mt in &summary.model_types {
        for r in &summary.per_seed {
            let c = r.threshold_counts[mt];
            writeln!(
                csv,
                "{mt},{},{},{},{}",
                r.seed, c.correct, c.misclassified, c.unclassified
            )
            .unwrap();
        }
    }
    write("threshold_outcomes.csv", csv)?;

    // sweep.csv: per model per eps, median/p25/p75 of the three fractions
    let mut csv = header.clone()
        + "model_type,eps,median_correct,p25_correct,p75_correct,\
           median_misclassified,p25_misclassified,p75_misclassified,\
           median_unclassified,p25_unclassified,p75_unclassified\n";
    for mt in &summary.model_types {
        for p in &summary.sweep[mt] {
            writeln!(
                csv,
                "{mt},{},{},{},{},{},{},{},{},{},{}",
                fmt6(p.eps),
                fmt6(p.correct.median),
                fmt6(p.correct.p25),
                fmt6(p.correct.p75),
                fmt6(p.misclassified.median),
                fmt6(p.misclassified.p25),
                fmt6(p.misclassified.p75),
                fmt6(p.unclassified.median),
                fmt6(p.unclassified.p25),
                fmt6(p.unclassified.p75)
            )
            .unwrap();
        }
    }
    write("sweep.csv", csv)?;

    // thresholds.csv: seed, record_index, eps_threshold
    let mut csv = header.clone() + "seed,record_index,eps_threshold\n";
    for r in &summary.per_seed {
        for (i, t) in r.thresholds.iter().enumerate() {
            writeln!(csv, "{},{i},{}", r.seed, fmt6(*t)).unwrap();
        }
    }
    write("thresholds.csv", csv)?;

    write("summary.json", serde_json::to_string_pretty(summary)?)?;

    write("fig_clean_accuracy.svg", svg_clean_accuracy(summary))?;
    write("fig_threshold_outcomes.svg", svg_threshold_outcomes(summary))?;
    write("fig_sweep.svg", svg_sweep(summary))?;
    write("fig_threshold_histogram.svg", svg_histogram(summary))?;
    Ok(written)
}

const GREEN: &str = "#2ca02c";
const RED: &str = "#d62728";
const BLUE: &str = "#1f77b4";

fn svg_open(width: usize, height: usize, title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <text x=\"{}\" y=\"16\" text-anchor=\"middle\" font-size=\"13\">{title}</text>\n",
        width / 2
    )
}

fn svg_clean_accuracy(summary: &ScoreSummary) -> String {
    let (w, h, pad, base) = (480, 280, 50, 240);
    let mut svg = svg_open(w, h, "Clean test accuracy by model type (mean +- std)");
    let n = summary.model_types.len();
    let bw = (w - 2 * pad) / n;
    for (i, mt) in summary.model_types.iter().enumerate() {
        let stat = summary.clean_accuracy[mt];
        let x = pad + i * bw;
        let bar_h = (stat.mean * (base - 40) as f64) as usize;
        let y = base - bar_h;
        writeln!(
            svg,
            "<rect x=\"{x}\" y=\"{y}\" width=\"{}\" height=\"{bar_h}\" fill=\"{BLUE}\"/>\
             <line x1=\"{cx}\" y1=\"{e1}\" x2=\"{cx}\" y2=\"{e2}\" stroke=\"black\"/>\
             <text x=\"{cx}\" y=\"{ly}\" text-anchor=\"middle\">{mt}</text>",
            bw - 8,
            cx = x + (bw - 8) / 2,
            e1 = (base as f64 - (stat.mean + stat.std) * (base - 40) as f64) as usize,
            e2 = (base as f64 - (stat.mean - stat.std) * (base - 40) as f64) as usize,
            ly = base + 16,
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    svg
}

fn svg_threshold_outcomes(summary: &ScoreSummary) -> String {
    let (w, h, pad, base) = (640, 280, 50, 240);
    let mut svg = svg_open(
        w,
        h,
        "Outcomes on eps-threshold adversarial images (mean fractions)",
    );
    let n = summary.model_types.len();
    let group = (w - 2 * pad) / n;
    let bw = group / 4;
    for (i, mt) in summary.model_types.iter().enumerate() {
        let s = summary.threshold_fractions[mt];
        let x0 = pad + i * group;
        for (j, (v, color)) in [
            (s.correct.mean, GREEN),
            (s.misclassified.mean, RED),
            (s.unclassified.mean, BLUE),
        ]
        .iter()
        .enumerate()
        {
            let bar_h = (v * (base - 40) as f64) as usize;
            writeln!(
                svg,
                "<rect x=\"{}\" y=\"{}\" width=\"{bw}\" height=\"{bar_h}\" fill=\"{color}\"/>",
                x0 + j * bw,
                base - bar_h
            )
            .unwrap();
        }
        writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{mt}</text>",
            x0 + group / 2 - bw / 2,
            base + 16
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    svg
}

fn polyline(points: &[(f64, f64)], color: &str) -> String {
    let coords: Vec<String> = points
        .iter()
        .map(|(x, y)| format!("{:.1},{:.1}", x, y))
        .collect();
    format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
        coords.join(" ")
    )
}

fn svg_sweep(summary: &ScoreSummary) -> String {
    let n = summary.model_types.len();
    let (pw, ph, pad) = (200usize, 170usize, 30usize);
    let cols = 4usize;
    let rows = n.div_ceil(cols);
    let (w, h) = (cols * pw, rows * ph + 24);
    let mut svg = svg_open(w, h, "Outcome fractions vs eps (median over seeds)");
    for (i, mt) in summary.model_types.iter().enumerate() {
        let ox = (i % cols) * pw + pad;
        let oy = (i / cols) * ph + 40;
        let (iw, ih) = (pw - 2 * pad, ph - 60);
        writeln!(
            svg,
            "<rect x=\"{ox}\" y=\"{oy}\" width=\"{iw}\" height=\"{ih}\" fill=\"none\" stroke=\"#999\"/>\
             <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{mt}</text>",
            ox + iw / 2,
            oy + ih + 16
        )
        .unwrap();
        for (pick, color) in [
            (0usize, GREEN),
            (1, RED),
            (2, BLUE),
        ] {
            let pts: Vec<(f64, f64)> = summary.sweep[mt]
                .iter()
                .map(|p| {
                    let v = match pick {
                        0 => p.correct.median,
                        1 => p.misclassified.median,
                        _ => p.unclassified.median,
                    };
                    (
                        ox as f64 + p.eps * iw as f64,
                        oy as f64 + (1.0 - v) * ih as f64,
                    )
                })
                .collect();
            svg.push_str(&polyline(&pts, color));
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn svg_histogram(summary: &ScoreSummary) -> String {
    let (w, h, pad, base) = (480, 280, 50, 240);
    let mut svg = svg_open(w, h, "Eps-threshold distribution (median counts per bin)");
    let max = summary
        .histogram
        .iter()
        .map(|b| b.max)
        .fold(1.0f64, f64::max);
    let bw = (w - 2 * pad) / summary.histogram.len().max(1);
    for (i, bin) in summary.histogram.iter().enumerate() {
        let bar_h = (bin.median / max * (base - 40) as f64) as usize;
        writeln!(
            svg,
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{bar_h}\" fill=\"{BLUE}\"/>",
            pad + i * bw,
            base - bar_h,
            bw - 2
        )
        .unwrap();
    }
    writeln!(
        svg,
        "<text x=\"{pad}\" y=\"{}\">0.0</text><text x=\"{}\" y=\"{0}\">1.0</text>",
        base + 16,
        w - pad
    )
    .unwrap();
    svg.push_str("</svg>\n");
    svg
}
