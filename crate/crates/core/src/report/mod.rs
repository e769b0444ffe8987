//! Rendering and export.
//!
//! Necessity and sufficiency are drawn as two separate rows in two hues;
//! they are never folded into one number. Darker means higher.

mod export;
mod html;
mod tables;

use serde::{Deserialize, Serialize};

pub use export::{export_scores, export_suite, import_scores, import_suite, ReportError, ScoreExport, TokenRecord, SCORE_EXPORT_FORMAT};
pub use html::{render_html, LabelNames, MAX_EVIDENCE_PER_TOKEN};
pub use tables::{render_hypothesis_table, render_suite_table};

use crate::estimator::ScoreSet;
use crate::text::TokenizedDoc;

/// Number of non-blank shade levels.
pub const SHADE_LEVELS: u8 = 4;

/// Marker for a score with no evidence behind it.
pub const UNDEFINED_MARKER: &str = "–";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Necessity,
    Sufficiency,
    #[default]
    Both,
}

impl Channel {
    fn rows(self) -> &'static [Row] {
        match self {
            Channel::Necessity => &[Row::Necessity],
            Channel::Sufficiency => &[Row::Sufficiency],
            Channel::Both => &[Row::Necessity, Row::Sufficiency],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Row {
    Necessity,
    Sufficiency,
}

impl Row {
    fn name(self) -> &'static str {
        match self {
            Row::Necessity => "necessity",
            Row::Sufficiency => "sufficiency",
        }
    }

    fn value(self, scores: &ScoreSet<f64>, i: usize) -> Option<f64> {
        match self {
            Row::Necessity => scores.necessity(i).copied(),
            Row::Sufficiency => scores.sufficiency(i).copied(),
        }
    }
}

/// A color ramp from white to `rgb`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ramp {
    pub rgb: [u8; 3],
}

impl Ramp {
    pub const RED: Ramp = Ramp { rgb: [200, 30, 30] };
    pub const BLUE: Ramp = Ramp { rgb: [30, 80, 200] };

    /// Background color for a shade level (0 = white).
    pub fn color(&self, level: u8) -> [u8; 3] {
        let t = f64::from(level.min(SHADE_LEVELS)) / f64::from(SHADE_LEVELS);
        let mix = |c: u8| (255.0 + (f64::from(c) - 255.0) * t).round() as u8;
        [mix(self.rgb[0]), mix(self.rgb[1]), mix(self.rgb[2])]
    }

    /// Foreground color readable on top of `color(level)`.
    pub fn text_color(&self, level: u8) -> [u8; 3] {
        if level * 2 > SHADE_LEVELS {
            [255, 255, 255]
        } else {
            [0, 0, 0]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ramps {
    pub necessity: Ramp,
    pub sufficiency: Ramp,
}

impl Default for Ramps {
    fn default() -> Self {
        Self {
            necessity: Ramp::RED,
            sufficiency: Ramp::BLUE,
        }
    }
}

impl Ramps {
    fn for_row(&self, row: Row) -> &Ramp {
        match row {
            Row::Necessity => &self.necessity,
            Row::Sufficiency => &self.sufficiency,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HeatmapSpec<'a> {
    pub doc: &'a TokenizedDoc,
    pub scores: &'a ScoreSet<f64>,
    pub channel: Channel,
    pub ramps: Ramps,
    pub show_values: bool,
    /// Emit ANSI color escapes; plain text otherwise.
    pub color: bool,
}

impl<'a> HeatmapSpec<'a> {
    pub fn new(doc: &'a TokenizedDoc, scores: &'a ScoreSet<f64>) -> Self {
        Self {
            doc,
            scores,
            channel: Channel::Both,
            ramps: Ramps::default(),
            show_values: true,
            color: true,
        }
    }
}

/// Shade level for a score: 0 for 0, otherwise 1..=SHADE_LEVELS, monotone.
pub fn shade(score: f64) -> u8 {
    if score.is_nan() || score <= 0.0 {
        return 0;
    }
    (score.min(1.0) * f64::from(SHADE_LEVELS)).ceil() as u8
}

/// Shortest of "0", "1", "0.5", "0.81" that shows the value to two decimals.
pub fn format_score(score: f64) -> String {
    let s = format!("{score:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

fn format_value(v: Option<f64>) -> String {
    v.map_or_else(|| UNDEFINED_MARKER.to_string(), format_score)
}

/// One line of shaded tokens per channel, each followed by a line of values
/// aligned under the tokens when `show_values` is set.
pub fn render_terminal(spec: &HeatmapSpec<'_>) -> String {
    let surfaces: Vec<&str> = spec.doc.surfaces().collect();
    let rows = spec.channel.rows();
    let label_width = rows.iter().map(|r| r.name().len()).max().unwrap_or(0);
    let widths: Vec<usize> = surfaces
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let w = rows
                .iter()
                .map(|r| format_value(r.value(spec.scores, i)).chars().count())
                .max()
                .unwrap_or(0);
            s.chars().count().max(if spec.show_values { w } else { 0 })
        })
        .collect();

    let mut out = String::new();
    for &row in rows {
        let ramp = spec.ramps.for_row(row);
        let mut tokens = format!("{:<label_width$}  ", row.name());
        let mut values = format!("{:<label_width$}  ", "");
        for (i, surface) in surfaces.iter().enumerate() {
            if i > 0 {
                tokens.push(' ');
                values.push(' ');
            }
            let v = row.value(spec.scores, i);
            let pad = widths[i] - surface.chars().count();
            let mut cell = surface.to_string();
            if v.is_none() && !spec.show_values {
                cell.push_str(UNDEFINED_MARKER);
            }
            let level = v.map_or(0, shade);
            if spec.color && level > 0 {
                let [r, g, b] = ramp.color(level);
                let [fr, fg, fb] = ramp.text_color(level);
                tokens.push_str(&format!("\x1b[48;2;{r};{g};{b}m\x1b[38;2;{fr};{fg};{fb}m{cell}\x1b[0m"));
            } else {
                tokens.push_str(&cell);
            }
            tokens.push_str(&" ".repeat(pad));
            values.push_str(&format!("{:<w$}", format_value(v), w = widths[i]));
        }
        out.push_str(tokens.trim_end());
        out.push('\n');
        if spec.show_values {
            out.push_str(values.trim_end());
            out.push('\n');
        }
    }
    out
}
