//! Self-contained SVG bar charts comparing runs: one labeled group per
//! report with an accuracy bar and, optionally, a macro-F1 bar. The
//! output is a pure function of the inputs, so identical inputs give
//! byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use leafcv_core::metrics::MetricReport;

use crate::error::{PipelineError, Result};

const PLOT_HEIGHT: f64 = 240.0;
const BAR_WIDTH: f64 = 36.0;
const BAR_GAP: f64 = 8.0;
const GROUP_GAP: f64 = 28.0;
const MARGIN_LEFT: f64 = 48.0;
const MARGIN_RIGHT: f64 = 16.0;
const MARGIN_TOP: f64 = 24.0;
const MARGIN_BOTTOM: f64 = 48.0;
const ACCURACY_FILL: &str = "#4878a8";
const F1_FILL: &str = "#a85448";

/// Renders the comparison chart and writes it to `path`.
pub fn emit_chart(
    reports: &[(String, MetricReport)],
    include_f1: bool,
    path: &Path,
) -> Result<()> {
    let svg = render_chart(reports, include_f1)?;
    fs::write(path, svg).map_err(|e| PipelineError::io(path, e))
}

/// Builds the SVG document. Groups appear in lexicographic label
/// order regardless of input order.
pub fn render_chart(reports: &[(String, MetricReport)], include_f1: bool) -> Result<String> {
    if reports.is_empty() {
        return Err(PipelineError::usage("chart needs at least one report"));
    }
    let mut sorted: Vec<&(String, MetricReport)> = reports.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));

    let bars_per_group = if include_f1 { 2.0 } else { 1.0 };
    let group_width = bars_per_group * BAR_WIDTH + (bars_per_group - 1.0) * BAR_GAP;
    let n = sorted.len() as f64;
    let width = MARGIN_LEFT + n * group_width + (n - 1.0) * GROUP_GAP + MARGIN_RIGHT;
    let height = MARGIN_TOP + PLOT_HEIGHT + MARGIN_BOTTOM;
    let baseline = MARGIN_TOP + PLOT_HEIGHT;

    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        num(width),
        num(height),
        num(width),
        num(height)
    );
    let _ = writeln!(
        out,
        r##"  <rect x="0" y="0" width="{}" height="{}" fill="#ffffff"/>"##,
        num(width),
        num(height)
    );

    // Horizontal gridlines with axis labels every 0.25.
    for step in 0..=4 {
        let v = step as f64 * 0.25;
        let y = baseline - v * PLOT_HEIGHT;
        let _ = writeln!(
            out,
            r##"  <line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#d8d8d8" stroke-width="1"/>"##,
            num(MARGIN_LEFT),
            num(y),
            num(width - MARGIN_RIGHT),
            num(y)
        );
        let _ = writeln!(
            out,
            r#"  <text x="{}" y="{}" font-family="monospace" font-size="11" text-anchor="end">{}</text>"#,
            num(MARGIN_LEFT - 6.0),
            num(y + 4.0),
            format_value(v)
        );
    }

    for (i, (label, report)) in sorted.iter().enumerate() {
        let group_x = MARGIN_LEFT + i as f64 * (group_width + GROUP_GAP);
        push_bar(&mut out, group_x, baseline, report.accuracy, ACCURACY_FILL, "accuracy");
        if include_f1 {
            push_bar(
                &mut out,
                group_x + BAR_WIDTH + BAR_GAP,
                baseline,
                report.macro_f1,
                F1_FILL,
                "macro-f1",
            );
        }
        let _ = writeln!(
            out,
            r#"  <text x="{}" y="{}" font-family="monospace" font-size="12" text-anchor="middle">{}</text>"#,
            num(group_x + group_width / 2.0),
            num(baseline + 18.0),
            escape(label)
        );
    }

    // Baseline axis on top of the bars.
    let _ = writeln!(
        out,
        r##"  <line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#000000" stroke-width="1"/>"##,
        num(MARGIN_LEFT),
        num(baseline),
        num(width - MARGIN_RIGHT),
        num(baseline)
    );

    if include_f1 {
        let legend_y = baseline + 34.0;
        for (j, (fill, name)) in [(ACCURACY_FILL, "accuracy"), (F1_FILL, "macro-F1")]
            .iter()
            .enumerate()
        {
            let x = MARGIN_LEFT + j as f64 * 110.0;
            let _ = writeln!(
                out,
                r#"  <rect x="{}" y="{}" width="10" height="10" fill="{}"/>"#,
                num(x),
                num(legend_y - 9.0),
                fill
            );
            let _ = writeln!(
                out,
                r#"  <text x="{}" y="{}" font-family="monospace" font-size="11">{}</text>"#,
                num(x + 14.0),
                num(legend_y),
                name
            );
        }
    }

    out.push_str("</svg>\n");
    Ok(out)
}

/// One bar plus its value caption. The rect height attribute is the
/// metric value scaled by the plot height.
fn push_bar(out: &mut String, x: f64, baseline: f64, value: f64, fill: &str, class: &str) {
    let v = value.clamp(0.0, 1.0);
    let bar_height = v * PLOT_HEIGHT;
    let y = baseline - bar_height;
    let _ = writeln!(
        out,
        r#"  <rect class="bar {class}" x="{}" y="{}" width="{}" height="{}" fill="{fill}"/>"#,
        num(x),
        num(y),
        num(BAR_WIDTH),
        num(bar_height)
    );
    let _ = writeln!(
        out,
        r#"  <text x="{}" y="{}" font-family="monospace" font-size="11" text-anchor="middle">{}</text>"#,
        num(x + BAR_WIDTH / 2.0),
        num(y - 4.0),
        format_value(v)
    );
}

/// Shortest-roundtrip decimal rendering; deterministic for equal input.
fn num(x: f64) -> String {
    format!("{x}")
}

fn format_value(v: f64) -> String {
    format!("{v:.3}")
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use leafcv_core::metrics::{confusion, report};

    fn report_with_accuracy(correct: usize, total: usize) -> MetricReport {
        let mut truth = Vec::new();
        let mut pred = Vec::new();
        for i in 0..total {
            truth.push(i % 2);
            pred.push(if i < correct { i % 2 } else { (i + 1) % 2 });
        }
        report(&confusion(&truth, &pred, 2).unwrap()).unwrap()
    }

    fn rects_with_class<'a>(doc: &'a roxmltree::Document, class: &str) -> Vec<roxmltree::Node<'a, 'a>> {
        doc.descendants()
            .filter(|n| {
                n.has_tag_name("rect")
                    && n.attribute("class").is_some_and(|c| c.contains(class))
            })
            .collect()
    }

    #[test]
    fn single_bar_height_encodes_accuracy_fraction_of_plot() {
        let rep = report_with_accuracy(3, 4); // accuracy 0.75
        assert_eq!(rep.accuracy, 0.75);
        let svg = render_chart(&[("run".to_string(), rep)], false).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let bars = rects_with_class(&doc, "accuracy");
        assert_eq!(bars.len(), 1);
        // 0.75 of the 240-unit plot height.
        assert_eq!(bars[0].attribute("height"), Some("180"));
    }

    #[test]
    fn groups_are_ordered_lexicographically() {
        let reports = vec![
            ("zeta".to_string(), report_with_accuracy(1, 2)),
            ("alpha".to_string(), report_with_accuracy(2, 2)),
            ("mid".to_string(), report_with_accuracy(1, 4)),
        ];
        let svg = render_chart(&reports, false).unwrap();
        let a = svg.find(">alpha<").unwrap();
        let m = svg.find(">mid<").unwrap();
        let z = svg.find(">zeta<").unwrap();
        assert!(a < m && m < z);
        let doc = roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(rects_with_class(&doc, "accuracy").len(), 3);
    }

    #[test]
    fn identical_inputs_give_byte_identical_files() {
        let reports = vec![
            ("b".to_string(), report_with_accuracy(5, 8)),
            ("a".to_string(), report_with_accuracy(7, 8)),
        ];
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("one.svg");
        let p2 = dir.path().join("two.svg");
        emit_chart(&reports, true, &p1).unwrap();
        emit_chart(&reports, true, &p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn f1_bars_and_legend_appear_only_when_requested() {
        let reports = vec![("only".to_string(), report_with_accuracy(1, 2))];
        let without = render_chart(&reports, false).unwrap();
        let with = render_chart(&reports, true).unwrap();
        let doc_without = roxmltree::Document::parse(&without).unwrap();
        let doc_with = roxmltree::Document::parse(&with).unwrap();
        assert!(rects_with_class(&doc_without, "macro-f1").is_empty());
        assert_eq!(rects_with_class(&doc_with, "macro-f1").len(), 1);
        assert!(with.contains("macro-F1"));
    }

    #[test]
    fn labels_are_xml_escaped() {
        let reports = vec![("a<b&c".to_string(), report_with_accuracy(1, 2))];
        let svg = render_chart(&reports, false).unwrap();
        // Must stay parseable and contain the escaped label text.
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let label = doc
            .descendants()
            .filter(|n| n.has_tag_name("text"))
            .find_map(|n| n.text().filter(|t| t.contains("a<b&c")));
        assert!(label.is_some());
    }

    #[test]
    fn empty_report_list_is_a_usage_error() {
        assert!(matches!(
            render_chart(&[], false),
            Err(PipelineError::Usage(_))
        ));
    }
}
