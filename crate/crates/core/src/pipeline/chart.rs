//! Plain SVG line chart of the fitted, held-out and forecast segments.

use std::fmt::Write;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 56.0;

/// One named polyline.
pub struct Series<'a> {
    pub class: &'a str,
    pub label: &'a str,
    pub color: &'a str,
    pub dashed: bool,
    pub points: Vec<(i32, f64)>,
}

fn nice_step(span: f64, target_ticks: usize) -> f64 {
    let raw = span / target_ticks as f64;
    let magnitude = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * magnitude)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * magnitude);
    step
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// Renders the chart. Empty series are skipped.
pub fn render(title: &str, y_label: &str, series: &[Series<'_>]) -> String {
    let points = series.iter().flat_map(|s| s.points.iter());
    let (mut x_min, mut x_max) = (i32::MAX, i32::MIN);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        x_min = x_min.min(x);
        x_max = x_max.max(x);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    if x_min > x_max {
        (x_min, x_max, y_min, y_max) = (0, 1, 0.0, 1.0);
    }
    if x_min == x_max {
        x_max += 1;
    }
    if y_max - y_min < 1e-9 {
        y_min -= 0.5;
        y_max += 0.5;
    }
    let pad = 0.05 * (y_max - y_min);
    let (y_lo, y_hi) = (y_min - pad, y_max + pad);
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + (x - x_min as f64) / (x_max - x_min) as f64 * plot_w;
    let sy = |y: f64| MARGIN_TOP + (y_hi - y) / (y_hi - y_lo) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );

    // Axes.
    let (x0, x1) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    let (y0, y1) = (MARGIN_TOP, HEIGHT - MARGIN_BOTTOM);
    let _ = writeln!(
        svg,
        r#"<line class="axis" x1="{x0}" y1="{y1}" x2="{x1}" y2="{y1}" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<line class="axis" x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#
    );

    let year_step = ((x_max - x_min) as f64 / 10.0).ceil().max(1.0) as i32;
    let mut year = x_min;
    while year <= x_max {
        let x = sx(year as f64);
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.2}" y1="{y1}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{year}</text>"#,
            y1 + 4.0,
            y1 + 18.0
        );
        year += year_step;
    }
    let step = nice_step(y_hi - y_lo, 6);
    let mut tick = (y_lo / step).ceil() * step;
    while tick <= y_hi + 1e-12 {
        let y = sy(tick);
        let _ = writeln!(
            svg,
            r##"<line x1="{x0}" y1="{y:.2}" x2="{x1}" y2="{y:.2}" stroke="#e0e0e0"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            x0 - 6.0,
            y + 4.0,
            fmt_tick(tick)
        );
        tick += step;
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">Year</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 14.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        escape(y_label)
    );

    let mut legend_x = MARGIN_LEFT + 8.0;
    for s in series.iter().filter(|s| !s.points.is_empty()) {
        let coords: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x as f64), sy(y)))
            .collect();
        let dash = if s.dashed {
            r#" stroke-dasharray="6 4""#
        } else {
            ""
        };
        let _ = writeln!(
            svg,
            r#"<polyline class="{}" points="{}" fill="none" stroke="{}" stroke-width="2"{dash}/>"#,
            s.class,
            coords.join(" "),
            s.color
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{legend_x:.2}" y1="{0}" x2="{1:.2}" y2="{0}" stroke="{2}" stroke-width="2"{dash}/><text x="{3:.2}" y="{4}">{5}</text>"#,
            MARGIN_TOP + 10.0,
            legend_x + 18.0,
            s.color,
            legend_x + 22.0,
            MARGIN_TOP + 14.0,
            escape(s.label)
        );
        legend_x += 30.0 + 7.0 * s.label.len() as f64;
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_polyline_per_nonempty_series() {
        let s = |class, points: Vec<(i32, f64)>| Series {
            class,
            label: class,
            color: "black",
            dashed: false,
            points,
        };
        let svg = render(
            "A & B",
            "index",
            &[
                s("actual", vec![(2000, 1.0), (2001, 2.0)]),
                s("train", vec![(2000, 1.1)]),
                s("future", vec![]),
            ],
        );
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("A &amp; B"));
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn degenerate_ranges_render() {
        let svg = render("t", "y", &[]);
        assert!(svg.contains("</svg>"));
        let flat = render(
            "t",
            "y",
            &[Series {
                class: "a",
                label: "a",
                color: "red",
                dashed: true,
                points: vec![(2000, 3.0)],
            }],
        );
        assert!(!flat.contains("NaN"));
    }

    #[test]
    fn tick_labels() {
        assert_eq!(fmt_tick(0.5), "0.5");
        assert_eq!(fmt_tick(-0.0), "0");
        assert_eq!(fmt_tick(2.0), "2");
        assert_eq!(nice_step(3.0, 6), 0.5);
    }
}
