//! Standalone HTML heatmap with per-token evidence.

use html_escape::encode_text;

use super::{format_value, shade, HeatmapSpec, Ramp, UNDEFINED_MARKER};
use crate::backends::Label;
use crate::estimator::PerturbedInstance;

/// Evidence rows listed under each token.
pub const MAX_EVIDENCE_PER_TOKEN: usize = 20;

/// Display names for the two classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelNames {
    pub positive: String,
    pub negative: String,
}

impl Default for LabelNames {
    fn default() -> Self {
        Self {
            positive: "hateful".into(),
            negative: "non-hateful".into(),
        }
    }
}

impl LabelNames {
    pub fn name(&self, label: Label) -> &str {
        match label {
            Label::Positive => &self.positive,
            Label::Negative => &self.negative,
        }
    }
}

fn hex([r, g, b]: [u8; 3]) -> String {
    format!("#{r:02x}{g:02x}{b:02x}")
}

fn cell(ramp: &Ramp, surface: &str, value: Option<f64>, show_values: bool) -> String {
    let level = value.map_or(0, shade);
    let shown = format_value(value);
    let mut s = format!(
        "<td class=\"tok\" style=\"background:{};color:{}\" title=\"{}\">{}",
        hex(ramp.color(level)),
        hex(ramp.text_color(level)),
        shown,
        encode_text(surface)
    );
    if value.is_none() && !show_values {
        s.push_str(UNDEFINED_MARKER);
    }
    if show_values {
        s.push_str(&format!("<div class=\"val\">{shown}</div>"));
    }
    s.push_str("</td>");
    s
}

/// A complete HTML document with no external resources.
///
/// For each token the evidence section lists up to
/// [`MAX_EVIDENCE_PER_TOKEN`] perturbations that replaced it, with the label
/// each received. With no evidence only the heatmap is emitted.
pub fn render_html(spec: &HeatmapSpec<'_>, evidence: &[PerturbedInstance], labels: &LabelNames) -> String {
    let surfaces: Vec<&str> = spec.doc.surfaces().collect();
    let mut body = String::from("<table class=\"heatmap\">\n");
    for &row in spec.channel.rows() {
        let ramp = spec.ramps.for_row(row);
        body.push_str(&format!("<tr><th>{}</th>", row.name()));
        for (i, s) in surfaces.iter().enumerate() {
            body.push_str(&cell(ramp, s, row.value(spec.scores, i), spec.show_values));
        }
        body.push_str("</tr>\n");
    }
    body.push_str("</table>\n");

    if !evidence.is_empty() {
        body.push_str("<section class=\"evidence\">\n<h2>Perturbations</h2>\n");
        for (i, s) in surfaces.iter().enumerate() {
            let rows: Vec<&PerturbedInstance> = evidence
                .iter()
                .filter(|p| p.spec.subset.contains(&i))
                .take(MAX_EVIDENCE_PER_TOKEN)
                .collect();
            if rows.is_empty() {
                continue;
            }
            body.push_str(&format!(
                "<details><summary>{} <span class=\"n\">({} shown)</span></summary>\n<ul>\n",
                encode_text(s),
                rows.len()
            ));
            for p in rows {
                let class = if p.label == spec.scores.base_label { "kept" } else { "flipped" };
                body.push_str(&format!(
                    "<li class=\"{class}\">{} &rarr; {}</li>\n",
                    encode_text(&p.text),
                    encode_text(labels.name(p.label))
                ));
            }
            body.push_str("</ul></details>\n");
        }
        body.push_str("</section>\n");
    }

    format!(
        "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>{}</title>\n<style>\n{STYLE}</style>\n</head>\n<body>\n<p class=\"text\">{}</p>\n{body}</body>\n</html>\n",
        encode_text(&spec.doc.original_text),
        encode_text(&spec.doc.original_text),
    )
}

const STYLE: &str = "body{font-family:sans-serif;margin:2em}
table.heatmap{border-collapse:separate;border-spacing:4px}
th{text-align:right;font-weight:normal;color:#555;padding-right:1em}
td.tok{padding:4px 6px;text-align:center;vertical-align:top}
.val{font-size:0.75em;margin-top:2px}
li.flipped{color:#a00}
.n{color:#777;font-size:0.85em}
";
