//! A minimal SVG line plot of mean `‖A_{E⊥}‖` against mean `‖A − A⁰‖`.

use std::fmt::Write as _;

use equidyn_core::experiment::SummaryRow;
use equidyn_core::risk::FlowMode;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;

fn color(mode: FlowMode) -> &'static str {
    match mode {
        FlowMode::Nominal => "#1f77b4",
        FlowMode::Augmented => "#d62728",
        FlowMode::Equivariant => "#2ca02c",
    }
}

/// Positive values are drawn on a log scale; the axis spans the decades of
/// the data. Zeros are clamped to the bottom of the axis.
fn log_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let logs: Vec<f64> = values
        .filter(|v| *v > 0.0 && v.is_finite())
        .map(f64::log10)
        .collect();
    if logs.is_empty() {
        return (-1.0, 0.0);
    }
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min).floor();
    let hi = logs
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
        .ceil();
    (lo, if hi > lo { hi } else { lo + 1.0 })
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

pub fn render(title: &str, rows: &[SummaryRow]) -> String {
    let (x0, x1) = log_range(rows.iter().map(|r| r.mean_dist_from_init));
    let (y0, y1) = log_range(rows.iter().map(|r| r.mean_dist_from_e));
    let sx = |v: f64| {
        let l = if v > 0.0 { v.log10().max(x0) } else { x0 };
        MARGIN + (l - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN)
    };
    let sy = |v: f64| {
        let l = if v > 0.0 { v.log10().max(y0) } else { y0 };
        HEIGHT - MARGIN - (l - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN)
    };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        s,
        r#"<path d="M{left},{top} L{left},{bottom} L{right},{bottom}" fill="none" stroke="black"/>"#
    );
    for d in x0 as i32..=x1 as i32 {
        let x = sx(10f64.powi(d));
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{}" text-anchor="middle">1e{d}</text>"#,
            bottom + 16.0
        );
    }
    for d in y0 as i32..=y1 as i32 {
        let y = sy(10f64.powi(d));
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">1e{d}</text>"#,
            left - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">mean ‖A − A⁰‖</text>"#,
        WIDTH / 2.0,
        HEIGHT - 16.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">mean ‖A_E⊥‖</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    for (i, mode) in FlowMode::ALL.into_iter().enumerate() {
        let pts: Vec<String> = rows
            .iter()
            .filter(|r| r.mode == mode)
            .map(|r| {
                format!(
                    "{:.2},{:.2}",
                    sx(r.mean_dist_from_init),
                    sy(r.mean_dist_from_e)
                )
            })
            .collect();
        if pts.is_empty() {
            continue;
        }
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>"#,
            pts.join(" "),
            color(mode)
        );
        let ly = top + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}" fill="{}">{}</text>"#,
            right - 90.0,
            color(mode),
            mode.name()
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_one_polyline_per_mode() {
        let rows: Vec<SummaryRow> = FlowMode::ALL
            .into_iter()
            .flat_map(|mode| {
                (0..3).map(move |e| SummaryRow {
                    mode,
                    epoch: e,
                    runs: 1,
                    mean_dist_from_init: e as f64 * 1e-3,
                    mean_dist_from_e: e as f64 * 1e-6,
                    mean_risk: 0.5,
                })
            })
            .collect();
        let svg = render("a < b", &rows);
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert!(svg.contains("a &lt; b"));
        assert!(svg.ends_with("</svg>\n"));
    }
}
