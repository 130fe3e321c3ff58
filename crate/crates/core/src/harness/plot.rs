//! Accuracy-versus-ε line charts as standalone SVG.
//!
//! The x axis is logarithmic over the positive budgets; ε = 0 sits at a pinned
//! position left of the log range, separated by a break marker.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::report::{series_label, AggregateRow};
use crate::error::{Error, Result};

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 200.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const ZERO_GAP: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

struct Axes {
    log_min: f64,
    log_max: f64,
}

impl Axes {
    fn x(&self, eps: f64) -> f64 {
        let x0 = LEFT + ZERO_GAP;
        let span = WIDTH - RIGHT - x0;
        if eps <= 0.0 {
            return LEFT + ZERO_GAP * 0.3;
        }
        if self.log_max <= self.log_min {
            return x0 + span / 2.0;
        }
        x0 + span * (eps.log10() - self.log_min) / (self.log_max - self.log_min)
    }

    fn y(&self, acc: f64) -> f64 {
        TOP + (HEIGHT - TOP - BOTTOM) * (1.0 - acc.clamp(0.0, 1.0))
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders one chart from aggregated rows; each `(architecture, ansatz)` pair
/// becomes one polyline with ±1 std error bars.
pub fn render_svg(rows: &[AggregateRow], title: &str) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::invalid("no rows to plot"));
    }
    let positive: Vec<f64> = rows.iter().map(|r| r.epsilon).filter(|&e| e > 0.0).collect();
    let axes = Axes {
        log_min: positive.iter().copied().fold(f64::INFINITY, f64::min).log10().floor(),
        log_max: positive.iter().copied().fold(f64::NEG_INFINITY, f64::max).log10().ceil(),
    };
    let axes = if positive.is_empty() { Axes { log_min: 0.0, log_max: 0.0 } } else { axes };

    let mut series: Vec<(String, Vec<&AggregateRow>)> = Vec::new();
    for r in rows {
        let label = series_label(r.architecture, r.ansatz);
        match series.iter_mut().find(|(l, _)| *l == label) {
            Some((_, pts)) => pts.push(r),
            None => series.push((label, vec![r])),
        }
    }

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, (LEFT + WIDTH - RIGHT) / 2.0, escape(title));

    // Frame, y ticks and grid.
    let (x_end, y_bottom) = (WIDTH - RIGHT, HEIGHT - BOTTOM);
    let _ = writeln!(s, r##"<g stroke="#444" fill="none"><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{y_bottom}"/><line x1="{LEFT}" y1="{y_bottom}" x2="{x_end}" y2="{y_bottom}"/></g>"##);
    for i in 0..=5 {
        let acc = i as f64 / 5.0;
        let y = axes.y(acc);
        let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{y}" x2="{x_end}" y2="{y}" stroke="#ddd"/>"##);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{acc:.1}</text>"#, LEFT - 6.0, y + 4.0);
    }
    // x ticks: pinned zero plus each decade.
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">0</text>"#, axes.x(0.0), y_bottom + 18.0);
    if !positive.is_empty() {
        let mut d = axes.log_min as i32;
        while d <= axes.log_max as i32 {
            let x = axes.x(10f64.powi(d));
            let _ = writeln!(s, r##"<line x1="{x}" y1="{y_bottom}" x2="{x}" y2="{}" stroke="#444"/>"##, y_bottom + 5.0);
            let _ = writeln!(s, r#"<text x="{x}" y="{}" text-anchor="middle">1e{d}</text>"#, y_bottom + 18.0);
            d += 1;
        }
    }
    // Axis break between the pinned zero and the log range.
    let bx = LEFT + ZERO_GAP * 0.65;
    let _ = writeln!(
        s,
        r##"<g stroke="#444"><line x1="{}" y1="{}" x2="{}" y2="{}"/><line x1="{}" y1="{}" x2="{}" y2="{}"/></g>"##,
        bx - 6.0, y_bottom + 6.0, bx, y_bottom - 6.0, bx, y_bottom + 6.0, bx + 6.0, y_bottom - 6.0
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">epsilon (log scale)</text>"#, (LEFT + x_end) / 2.0, HEIGHT - 18.0);
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">accuracy</text>"#,
        (TOP + y_bottom) / 2.0,
        (TOP + y_bottom) / 2.0
    );

    for (i, (label, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = pts
            .iter()
            .map(|r| format!("{:.2},{:.2}", axes.x(r.epsilon), axes.y(r.mean)))
            .collect();
        let _ = writeln!(s, r#"<g class="series" data-label="{}">"#, escape(label));
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.8" points="{}"/>"#, points.join(" "));
        for r in pts {
            let (x, lo, hi) = (axes.x(r.epsilon), axes.y(r.mean - r.std), axes.y(r.mean + r.std));
            let _ = writeln!(
                s,
                r#"<line class="errbar" x1="{x:.2}" y1="{lo:.2}" x2="{x:.2}" y2="{hi:.2}" stroke="{color}"/><circle cx="{x:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#,
                axes.y(r.mean)
            );
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = x_end + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(label)
        );
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_plot(rows: &[AggregateRow], title: &str, path: &Path) -> Result<()> {
    fs::write(path, render_svg(rows, title)?).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::AnsatzKind;
    use crate::attacks::{AttackKind, GradientMode};
    use crate::data::DatasetName;
    use crate::nn::Architecture;

    fn row(ansatz: Option<AnsatzKind>, eps: f64, mean: f64, std: f64) -> AggregateRow {
        AggregateRow {
            dataset: DatasetName::Mnist,
            architecture: if ansatz.is_some() { Architecture::QunnHead } else { Architecture::ClassicalFc },
            ansatz,
            attack: AttackKind::Pgd,
            mode: GradientMode::Surrogate,
            epsilon: eps,
            trials: 1,
            mean,
            std,
        }
    }

    #[test]
    fn well_formed_with_one_polyline_per_series() {
        let mut rows = Vec::new();
        for eps in [0.0, 0.01, 0.1, 1.0, 10.0] {
            rows.push(row(Some(AnsatzKind::ZzStar), eps, 0.7, 0.1));
            rows.push(row(Some(AnsatzKind::Random), eps, 0.6, 0.0));
            rows.push(row(None, eps, 0.2, 0.05));
        }
        let svg = render_svg(&rows, "mnist <pgd>").unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let polylines = doc.descendants().filter(|n| n.has_tag_name("polyline")).count();
        assert_eq!(polylines, 3);
        let bars = doc.descendants().filter(|n| n.attribute("class") == Some("errbar")).count();
        assert_eq!(bars, 15);
    }

    #[test]
    fn zero_std_gives_zero_length_bars() {
        let rows: Vec<_> = [0.0, 0.5, 5.0].iter().map(|&e| row(None, e, 0.4, 0.0)).collect();
        let svg = render_svg(&rows, "t").unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        for bar in doc.descendants().filter(|n| n.attribute("class") == Some("errbar")) {
            assert_eq!(bar.attribute("y1"), bar.attribute("y2"));
        }
        assert!(render_svg(&[], "t").is_err());
    }

    #[test]
    fn zero_is_left_of_log_range() {
        let axes = Axes { log_min: -2.0, log_max: 1.0 };
        assert!(axes.x(0.0) < axes.x(0.01));
        assert!(axes.x(0.01) < axes.x(0.1) && axes.x(1.0) < axes.x(10.0));
        assert_eq!(axes.y(1.0), TOP);
    }
}
