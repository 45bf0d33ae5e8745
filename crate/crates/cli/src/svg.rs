//! Self-contained SVG line plot of accuracy against a swept parameter.

use std::fmt::Write;

use crate::experiment::SweepRow;

const WIDTH: f64 = 560.0;
const HEIGHT: f64 = 380.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Test accuracy (solid) and online training accuracy (dashed) per value,
/// on a fixed 0..1 accuracy axis.
pub fn accuracy_plot(parameter: &str, rows: &[SweepRow]) -> String {
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
        (lo.min(r.value as f64), hi.max(r.value as f64))
    });
    let (lo, hi) = if rows.is_empty() {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 1.0, hi + 1.0)
    } else {
        (lo, hi)
    };
    let x = |v: f64| LEFT + (v - lo) / (hi - lo) * plot_w;
    let y = |a: f64| TOP + (1.0 - a) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">Accuracy vs {}</text>"#,
        WIDTH / 2.0,
        escape(parameter)
    );
    for k in 0..=5 {
        let a = k as f64 / 5.0;
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{0:.1}" x2="{1:.1}" y2="{0:.1}" stroke="#ddd"/><text x="{2:.1}" y="{3:.1}" text-anchor="end">{a:.1}</text>"##,
            y(a),
            LEFT + plot_w,
            LEFT - 6.0,
            y(a) + 4.0
        );
    }
    let mut ticks: Vec<usize> = rows.iter().map(|r| r.value).collect();
    ticks.sort_unstable();
    ticks.dedup();
    for v in ticks {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{v}</text>"#,
            x(v as f64),
            TOP + plot_h + 18.0
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 14.0,
        escape(parameter)
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(18 {:.1}) rotate(-90)" text-anchor="middle">accuracy</text>"#,
        TOP + plot_h / 2.0
    );

    let mut sorted: Vec<&SweepRow> = rows.iter().collect();
    sorted.sort_by_key(|r| r.value);
    let series: [(&str, &str, &str, Vec<(f64, f64)>); 2] = [
        ("test", "#1f5fa8", "", sorted.iter().filter_map(|r| Some((r.value as f64, r.test_acc?))).collect()),
        ("train (online)", "#c0392b", r#" stroke-dasharray="5 4""#, sorted.iter().map(|r| (r.value as f64, r.train_acc)).collect()),
    ];
    for (k, (name, colour, dash, points)) in series.iter().enumerate() {
        if points.is_empty() {
            continue;
        }
        let path: Vec<String> = points.iter().map(|&(v, a)| format!("{:.1},{:.1}", x(v), y(a))).collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="2"{dash}/>"#,
            path.join(" ")
        );
        for &(v, a) in points {
            let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3.5" fill="{colour}"/>"#, x(v), y(a));
        }
        let ly = TOP + 14.0 + 16.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{0:.1}" y1="{ly:.1}" x2="{1:.1}" y2="{ly:.1}" stroke="{colour}" stroke-width="2"{dash}/><text x="{2:.1}" y="{3:.1}">{name}</text>"#,
            LEFT + plot_w - 120.0,
            LEFT + plot_w - 96.0,
            LEFT + plot_w - 90.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}
