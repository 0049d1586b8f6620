use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::quantile;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 48.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Tukey boxplots of the estimates per sample size, with the reference value
/// as a dashed horizontal line.
pub(crate) fn boxplot_svg(title: &str, by_n: &BTreeMap<usize, Vec<f64>>, truth: Option<f64>) -> String {
    let all = by_n.values().flatten().copied().chain(truth);
    let (mut lo, mut hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(0.02);
    (lo, hi) = (lo - pad, hi + pad);

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let y = |v: f64| TOP + (hi - v) / (hi - lo) * plot_h;
    let slot = plot_w / by_n.len().max(1) as f64;
    let half = (slot * 0.3).min(40.0);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ =
        writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));

    let _ = writeln!(s, r##"<g class="axis" stroke="#444">"##);
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}"/>"#, TOP + plot_h);
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{0}" x2="{1}" y2="{0}"/>"#, TOP + plot_h, LEFT + plot_w);
    for k in 0..=5 {
        let v = lo + (hi - lo) * k as f64 / 5.0;
        let _ = writeln!(s, r#"<line x1="{}" y1="{1:.2}" x2="{LEFT}" y2="{1:.2}"/>"#, LEFT - 4.0, y(v));
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" text-anchor="end" stroke="none" fill="black">{v:.3}</text>"#,
            LEFT - 7.0,
            y(v) + 4.0
        );
    }
    let _ = writeln!(s, "</g>");

    for (k, (n, values)) in by_n.iter().enumerate() {
        let cx = LEFT + slot * (k as f64 + 0.5);
        let mut xs = values.clone();
        xs.sort_by(f64::total_cmp);
        let (q1, med, q3) = (quantile(&xs, 0.25), quantile(&xs, 0.5), quantile(&xs, 0.75));
        let fence = 1.5 * (q3 - q1);
        let low = xs.iter().copied().find(|&v| v >= q1 - fence).unwrap_or(q1);
        let high = xs.iter().rev().copied().find(|&v| v <= q3 + fence).unwrap_or(q3);

        let _ = writeln!(s, r##"<g class="box" data-n="{n}" stroke="#1f4e79" fill="none">"##);
        let _ = writeln!(s, r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}"/>"#, y(high), y(q3));
        let _ = writeln!(s, r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}"/>"#, y(q1), y(low));
        for w in [low, high] {
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{2:.2}" x2="{:.2}" y2="{2:.2}"/>"#,
                cx - half / 2.0,
                cx + half / 2.0,
                y(w)
            );
        }
        let _ = writeln!(
            s,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#dbe8f5"/>"##,
            cx - half,
            y(q3),
            2.0 * half,
            (y(q1) - y(q3)).max(0.5)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{2:.2}" x2="{:.2}" y2="{2:.2}" stroke-width="2"/>"#,
            cx - half,
            cx + half,
            y(med)
        );
        for &v in xs.iter().filter(|&&v| v < low || v > high) {
            let _ = writeln!(s, r#"<circle cx="{cx:.2}" cy="{:.2}" r="2"/>"#, y(v));
        }
        let _ = writeln!(
            s,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle" stroke="none" fill="black">{n}</text>"#,
            TOP + plot_h + 18.0
        );
        let _ = writeln!(s, "</g>");
    }

    if let Some(t) = truth {
        let _ = writeln!(
            s,
            r##"<line class="truth" x1="{LEFT}" y1="{0:.2}" x2="{1}" y2="{0:.2}" stroke="#b22222" stroke-dasharray="6 4"/>"##,
            y(t),
            LEFT + plot_w
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">n</text>"#, LEFT + plot_w / 2.0, HEIGHT - 8.0);
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structure() {
        let data = BTreeMap::from([(10, vec![0.1, 0.2, 0.3, 0.9]), (100, vec![0.25; 5])]);
        let svg = boxplot_svg("mo:1,0 / <abs>", &data, Some(0.25));
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches(r#"<g class="box""#).count(), 2);
        assert!(svg.contains(r#"data-n="100""#));
        assert!(svg.contains("&lt;abs&gt;"));
        assert_eq!(svg.matches("stroke-dasharray").count(), 1);
        // 0.9 lies beyond the upper fence.
        assert_eq!(svg.matches("<circle").count(), 1);
    }

    #[test]
    fn no_truth_no_dashed_line() {
        let data = BTreeMap::from([(10, vec![0.5])]);
        assert!(!boxplot_svg("x", &data, None).contains("stroke-dasharray"));
    }
}
