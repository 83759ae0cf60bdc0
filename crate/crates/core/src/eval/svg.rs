//! Minimal static SVG charts.

use std::fmt::Write;

const W: f64 = 720.0;
const H: f64 = 320.0;
const PAD: f64 = 40.0;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        let span = (self.x1 - self.x0).max(1e-12);
        PAD + (v - self.x0) / span * (W - 2.0 * PAD)
    }

    fn y(&self, v: f64) -> f64 {
        let span = (self.y1 - self.y0).max(1e-12);
        H - PAD - (v - self.y0) / span * (H - 2.0 * PAD)
    }
}

fn header(title: &str, f: &Frame) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">
<rect width="{W}" height="{H}" fill="white"/>
<text x="{PAD}" y="20" font-size="13">{}</text>
<line x1="{PAD}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>
<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{b}" stroke="black"/>
<text x="4" y="{ty0}">{:.1}</text>
<text x="4" y="{ty1}">{:.1}</text>
"#,
        escape(title),
        f.y0,
        f.y1,
        b = H - PAD,
        r = W - PAD,
        ty0 = H - PAD,
        ty1 = PAD + 4.0,
    );
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn points(f: &Frame, xs: impl Iterator<Item = (f64, f64)>) -> String {
    xs.map(|(x, y)| format!("{:.2},{:.2}", f.x(x), f.y(y)))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Truth against the forecast mean with a shaded `mu ± 2 sigma` band.
pub fn band_chart(title: &str, truth: &[f64], mu: &[f64], sigma: &[f64]) -> String {
    let n = truth.len();
    let lo: Vec<f64> = mu.iter().zip(sigma).map(|(m, s)| m - 2.0 * s).collect();
    let hi: Vec<f64> = mu.iter().zip(sigma).map(|(m, s)| m + 2.0 * s).collect();
    let all = truth.iter().chain(&lo).chain(&hi);
    let (y0, y1) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
        (a.min(v), b.max(v))
    });
    let f = Frame {
        x0: 0.0,
        x1: n.saturating_sub(1) as f64,
        y0: y0.min(0.0),
        y1: if y1.is_finite() { y1 } else { 1.0 },
    };
    let mut s = header(title, &f);
    let upper = points(&f, hi.iter().enumerate().map(|(i, &v)| (i as f64, v)));
    let lower = points(&f, lo.iter().enumerate().rev().map(|(i, &v)| (i as f64, v)));
    let _ = writeln!(
        s,
        r##"<polygon points="{upper} {lower}" fill="#9ecae1" fill-opacity="0.5" stroke="none"/>"##
    );
    let _ = writeln!(
        s,
        r##"<polyline points="{}" fill="none" stroke="#08519c" stroke-width="1.2"/>"##,
        points(&f, mu.iter().enumerate().map(|(i, &v)| (i as f64, v)))
    );
    let _ = writeln!(
        s,
        r##"<polyline points="{}" fill="none" stroke="#d94801" stroke-width="1.2"/>"##,
        points(&f, truth.iter().enumerate().map(|(i, &v)| (i as f64, v)))
    );
    s.push_str("</svg>\n");
    s
}

/// One bar per labelled value.
pub fn bar_chart(title: &str, labels: &[String], values: &[f64]) -> String {
    let top = values.iter().copied().fold(0.0, f64::max);
    let f = Frame {
        x0: 0.0,
        x1: values.len() as f64,
        y0: 0.0,
        y1: if top > 0.0 { top * 1.1 } else { 1.0 },
    };
    let mut s = header(title, &f);
    for (i, (label, &v)) in labels.iter().zip(values).enumerate() {
        let (xa, xb) = (f.x(i as f64 + 0.1), f.x(i as f64 + 0.9));
        let (ya, yb) = (f.y(v), f.y(0.0));
        let _ = writeln!(
            s,
            r##"<rect x="{xa:.2}" y="{ya:.2}" width="{:.2}" height="{:.2}" fill="#6baed6"/>"##,
            xb - xa,
            yb - ya
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            (xa + xb) / 2.0,
            H - PAD + 14.0,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}
