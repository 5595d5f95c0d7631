//! Static SVG line charts: one panel, year on the x axis, a legend.

use std::fmt::Write;

use phillips_lf::AnnualSeries;

const W: f64 = 720.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLOURS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

pub struct Line<'a> {
    pub label: &'a str,
    pub series: &'a AnnualSeries,
    pub dashed: bool,
}

/// Round step (1, 2 or 5 times a power of ten) giving about `target` ticks.
fn nice_step(span: f64, target: f64) -> f64 {
    let raw = span / target;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let m = if f < 1.5 {
        1.0
    } else if f < 3.5 {
        2.0
    } else if f < 7.5 {
        5.0
    } else {
        10.0
    };
    m * mag
}

fn fmt_tick(v: f64, step: f64) -> String {
    let decimals = if step >= 1.0 {
        0
    } else {
        (-step.log10().floor()) as usize
    };
    format!("{v:.decimals$}")
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Renders the lines. Empty input gives a chart with axes only.
pub fn line_chart(title: &str, y_label: &str, lines: &[Line<'_>]) -> String {
    let mut x0 = i32::MAX;
    let mut x1 = i32::MIN;
    let mut y0 = f64::INFINITY;
    let mut y1 = f64::NEG_INFINITY;
    for l in lines {
        x0 = x0.min(l.series.start_year());
        x1 = x1.max(l.series.end_year());
        for &v in l.series.values() {
            if v.is_finite() {
                y0 = y0.min(v);
                y1 = y1.max(v);
            }
        }
    }
    if x0 > x1 {
        (x0, x1) = (0, 1);
    }
    if x0 == x1 {
        x1 = x0 + 1;
    }
    if !(y0 <= y1) {
        (y0, y1) = (0.0, 1.0);
    }
    if y0 == y1 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let ystep = nice_step(y1 - y0, 6.0);
    let ylo = (y0 / ystep).floor() * ystep;
    let yhi = (y1 / ystep).ceil() * ystep;
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |year: f64| LEFT + (year - x0 as f64) / (x1 - x0) as f64 * pw;
    let sy = |v: f64| TOP + (yhi - v) / (yhi - ylo) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        esc(title)
    );
    // Grid and ticks.
    let mut v = ylo;
    while v <= yhi + ystep * 1e-9 {
        let y = sy(v);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e0e0e0"/>"##,
            W - RIGHT
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            y + 4.0,
            fmt_tick(v, ystep)
        );
        v += ystep;
    }
    let xstep = nice_step((x1 - x0) as f64, 8.0).max(1.0) as i32;
    let mut yr = (x0 + xstep - 1) / xstep * xstep;
    while yr <= x1 {
        let x = sx(yr as f64);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#f0f0f0"/>"##,
            H - BOTTOM
        );
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{yr}</text>"#,
            H - BOTTOM + 16.0
        );
        yr += xstep;
    }
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(16,{:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
        TOP + ph / 2.0,
        esc(y_label)
    );
    if ylo < 0.0 && yhi > 0.0 {
        let y = sy(0.0);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#808080"/>"##,
            W - RIGHT
        );
    }
    for (i, l) in lines.iter().enumerate() {
        let c = COLOURS[i % COLOURS.len()];
        let pts: Vec<String> = l
            .series
            .iter()
            .filter(|(_, v)| v.is_finite())
            .map(|(y, v)| format!("{:.2},{:.2}", sx(y as f64), sy(v)))
            .collect();
        let dash = if l.dashed {
            r#" stroke-dasharray="6,4""#
        } else {
            ""
        };
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{c}" stroke-width="1.6"{dash} points="{}"/>"#,
            pts.join(" ")
        );
        let ly = TOP + 14.0 + 16.0 * i as f64;
        let lx = LEFT + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{c}" stroke-width="2"{dash}/>"#,
            lx + 22.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}">{}</text>"#,
            lx + 28.0,
            ly + 4.0,
            esc(l.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use phillips_lf::Unit;

    #[test]
    fn renders_polyline_per_series() {
        let a = AnnualSeries::new(1970, vec![0.1, 0.2, 0.15], Unit::RatePerYear, "a").unwrap();
        let b = AnnualSeries::new(1971, vec![0.0, -0.1], Unit::RatePerYear, "b").unwrap();
        let svg = line_chart(
            "t <x>",
            "rate",
            &[
                Line {
                    label: "a",
                    series: &a,
                    dashed: false,
                },
                Line {
                    label: "b",
                    series: &b,
                    dashed: true,
                },
            ],
        );
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("t &lt;x&gt;"));
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn steps_are_round() {
        assert_eq!(nice_step(1.0, 5.0), 0.2);
        assert_eq!(nice_step(42.0, 8.0), 5.0);
    }
}
