//! Minimal SVG charts for evaluation reports.

use std::fmt::Write;

use crate::eval::report::MetricsReport;

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 56.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        W / 2.0,
        escape(title)
    )
}

fn axes(svg: &mut String) {
    let _ = writeln!(
        svg,
        "<line x1=\"{MARGIN}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n<line x1=\"{MARGIN}\" y1=\"{MARGIN}\" x2=\"{MARGIN}\" y2=\"{}\" stroke=\"black\"/>",
        H - MARGIN,
        W - MARGIN / 2.0,
        H - MARGIN,
        H - MARGIN
    );
}

/// Bar chart of per-class AUROC; `None` when the report has no per-class scores.
pub fn auroc_bars(report: &MetricsReport) -> Option<String> {
    let bars: Vec<(&String, f64)> = report
        .classes
        .iter()
        .zip(&report.auroc_per_class)
        .filter_map(|(c, v)| v.map(|v| (c, v)))
        .collect();
    if bars.is_empty() {
        return None;
    }
    let mut svg = header(&format!("Per-class AUROC ({}, {})", report.protocol, report.split));
    axes(&mut svg);
    let plot_w = W - 1.5 * MARGIN;
    let plot_h = H - 2.0 * MARGIN;
    let slot = plot_w / bars.len() as f64;
    for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let y = H - MARGIN - t * plot_h;
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{t:.2}</text>",
            MARGIN - 6.0,
            y + 4.0
        );
    }
    for (i, (name, v)) in bars.iter().enumerate() {
        let x = MARGIN + i as f64 * slot + slot * 0.15;
        let h = v * plot_h;
        let _ = writeln!(
            svg,
            "<rect x=\"{x:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{h:.1}\" fill=\"steelblue\"/>\n\
             <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n\
             <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{v:.3}</text>",
            H - MARGIN - h,
            slot * 0.7,
            x + slot * 0.35,
            H - MARGIN + 16.0,
            escape(name),
            x + slot * 0.35,
            H - MARGIN - h - 4.0
        );
    }
    svg.push_str("</svg>\n");
    Some(svg)
}

/// Predicted-versus-target scatter with the identity line.
pub fn regression_scatter(report: &MetricsReport) -> Option<String> {
    if report.scatter.is_empty() {
        return None;
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in &report.scatter {
        lo = lo.min(p[0]).min(p[1]);
        hi = hi.max(p[0]).max(p[1]);
    }
    if hi <= lo {
        hi = lo + 1.0;
    }
    let plot_w = W - 1.5 * MARGIN;
    let plot_h = H - 2.0 * MARGIN;
    let px = |v: f64| MARGIN + (v - lo) / (hi - lo) * plot_w;
    let py = |v: f64| H - MARGIN - (v - lo) / (hi - lo) * plot_h;
    let unit = report.unit.as_deref().map(|u| format!(" [{u}]")).unwrap_or_default();
    let mut svg = header(&format!("Prediction vs target ({}, {}){}", report.protocol, report.split, unit));
    axes(&mut svg);
    let _ = writeln!(
        svg,
        "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>",
        px(lo),
        py(lo),
        px(hi),
        py(hi)
    );
    for p in &report.scatter {
        let _ = writeln!(
            svg,
            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"2\" fill=\"darkorange\" fill-opacity=\"0.6\"/>",
            px(p[0]),
            py(p[1])
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">target</text>\n<text x=\"16\" y=\"{:.1}\" transform=\"rotate(-90 16 {:.1})\" text-anchor=\"middle\">prediction</text>\n<text x=\"{MARGIN}\" y=\"{:.1}\">{lo:.3}</text>\n<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{hi:.3}</text>",
        W / 2.0,
        H - 14.0,
        H / 2.0,
        H / 2.0,
        H - MARGIN + 16.0,
        W - MARGIN / 2.0,
        H - MARGIN + 16.0
    );
    svg.push_str("</svg>\n");
    Some(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_render() {
        let mut r = MetricsReport::new("linear", "test", serde_json::Value::Null);
        assert!(auroc_bars(&r).is_none() && regression_scatter(&r).is_none());
        r.classes = vec!["a<b".into(), "c".into()];
        r.auroc_per_class = vec![Some(0.9), None];
        r.scatter = vec![[1.0, 1.1], [2.0, 1.8]];
        let bars = auroc_bars(&r).unwrap();
        assert!(bars.starts_with("<svg") && bars.contains("a&lt;b") && bars.trim_end().ends_with("</svg>"));
        assert_eq!(bars.matches("<rect").count(), 2);
        assert_eq!(regression_scatter(&r).unwrap().matches("<circle").count(), 2);
    }
}
