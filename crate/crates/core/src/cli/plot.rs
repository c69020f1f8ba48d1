//! Minimal SVG line charts.

use std::fmt::Write as _;

const WIDTH: f64 = 800.0;
const PANEL_HEIGHT: f64 = 160.0;
const MARGIN: f64 = 30.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

pub struct Series<'a> {
    pub label: &'a str,
    pub values: &'a [f64],
}

/// One chart row: overlaid series plus optional shading where `shade[i]` is set.
pub struct Panel<'a> {
    pub title: String,
    pub series: Vec<Series<'a>>,
    pub shade: Option<&'a [bool]>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn draw_panel(out: &mut String, p: &Panel<'_>, top: f64) {
    let n = p.series.iter().map(|s| s.values.len()).max().unwrap_or(0).max(2);
    let finite = p.series.iter().flat_map(|s| s.values.iter().copied()).filter(|v| v.is_finite());
    let (mut lo, mut hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo, hi) = (lo - 0.5, hi + 0.5);
    }
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = PANEL_HEIGHT - 2.0 * MARGIN;
    let x = |i: usize| MARGIN + plot_w * i as f64 / (n - 1) as f64;
    let y = |v: f64| top + MARGIN + plot_h * (hi - v) / (hi - lo);
    let _ = writeln!(
        out,
        r#"<text x="{MARGIN}" y="{:.1}" font-size="12">{}</text>"#,
        top + MARGIN - 8.0,
        escape(&p.title)
    );
    let _ = writeln!(
        out,
        r##"<rect x="{MARGIN}" y="{:.1}" width="{plot_w:.1}" height="{plot_h:.1}" fill="none" stroke="#888"/>"##,
        top + MARGIN
    );
    if let Some(shade) = p.shade {
        let step = plot_w / (n - 1) as f64;
        for (i, _) in shade.iter().enumerate().filter(|(_, &s)| s) {
            let _ = writeln!(
                out,
                r##"<rect x="{:.2}" y="{:.1}" width="{step:.2}" height="{plot_h:.1}" fill="#ddd"/>"##,
                x(i) - step / 2.0,
                top + MARGIN
            );
        }
    }
    for (k, s) in p.series.iter().enumerate() {
        let pts: Vec<String> = s
            .values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(i, &v)| format!("{:.2},{:.2}", x(i), y(v)))
            .collect();
        let color = COLORS[k % COLORS.len()];
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" fill="{color}">{}</text>"#,
            WIDTH - MARGIN - 80.0 * (p.series.len() - k) as f64,
            top + MARGIN - 8.0,
            escape(s.label)
        );
    }
}

/// Stacks the panels vertically into one SVG document.
pub fn render(panels: &[Panel<'_>]) -> String {
    let height = PANEL_HEIGHT * panels.len().max(1) as f64;
    let mut out = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}">"#
    );
    out.push('\n');
    out.push_str(&format!(r#"<rect width="{WIDTH}" height="{height}" fill="white"/>"#));
    out.push('\n');
    for (i, p) in panels.iter().enumerate() {
        draw_panel(&mut out, p, PANEL_HEIGHT * i as f64);
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_wellformed_document() {
        let a = [0.0, 1.0, 0.5, f64::NAN];
        let b = [1.0, 1.0, 1.0, 1.0];
        let shade = [false, true, true, false];
        let svg = render(&[
            Panel {
                title: "ECG <gen>".into(),
                series: vec![Series { label: "truth", values: &a }, Series { label: "generated", values: &b }],
                shade: Some(&shade),
            },
            Panel {
                title: "flat".into(),
                series: vec![Series { label: "x", values: &b }],
                shade: None,
            },
        ]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert!(svg.contains("ECG &lt;gen&gt;"));
        assert!(!svg.contains("NaN"));
    }
}
