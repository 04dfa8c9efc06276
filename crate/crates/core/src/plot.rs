//! SVG figures: field heatmaps, error CDFs and MRE bars.
//!
//! Output is plain text with fixed number formatting, so equal inputs give
//! equal bytes.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::domain::SpatialField;
use crate::io::{CdfCurve, ReportRow};

const VIRIDIS: [(f64, f64, f64); 5] = [
    (68.0, 1.0, 84.0),
    (59.0, 82.0, 139.0),
    (33.0, 145.0, 140.0),
    (94.0, 201.0, 98.0),
    (253.0, 231.0, 37.0),
];

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

const INACTIVE: &str = "#dddddd";

/// Maps `t` in [0, 1] to a hex color on a viridis-like ramp.
pub fn color_ramp(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let s = t * (VIRIDIS.len() - 1) as f64;
    let k = (s.floor() as usize).min(VIRIDIS.len() - 2);
    let u = s - k as f64;
    let (a, b) = (VIRIDIS[k], VIRIDIS[k + 1]);
    let mix = |x: f64, y: f64| (x + (y - x) * u).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn header(out: &mut String, w: f64, h: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{w:.0}" height="{h:.0}" fill="white"/>"#);
}

fn title(out: &mut String, x: f64, text: &str) {
    if !text.is_empty() {
        let _ = writeln!(
            out,
            r#"<text x="{x:.1}" y="18" text-anchor="middle" font-size="14">{}</text>"#,
            escape(text)
        );
    }
}

/// One square per grid cell, row 0 at the top. A constant field is drawn in
/// a single color.
pub fn heatmap_svg(field: &SpatialField, caption: &str) -> String {
    let d = field.domain();
    let (nr, nc) = (d.n_rows(), d.n_cols());
    let cell = (480.0 / nr.max(nc) as f64).clamp(2.0, 24.0);
    let (left, top) = (10.0, 30.0);
    let bar_w = 16.0;
    let width = left + nc as f64 * cell + 80.0;
    let height = top + nr as f64 * cell + 10.0;
    let vals = field.values();
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let scale = |v: f64| if span > 0.0 { (v - lo) / span } else { 0.5 };

    let mut out = String::new();
    header(&mut out, width, height);
    title(&mut out, width / 2.0, caption);
    for r in 0..nr {
        for c in 0..nc {
            let fill = match d.index_of(r, c) {
                Some(j) => color_ramp(scale(vals[j])),
                None => INACTIVE.to_string(),
            };
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{cell:.2}" height="{cell:.2}" fill="{fill}"/>"#,
                left + c as f64 * cell,
                top + r as f64 * cell
            );
        }
    }
    // Color bar with the value range.
    let bx = left + nc as f64 * cell + 12.0;
    let bh = nr as f64 * cell;
    let steps = 32;
    for s in 0..steps {
        let t = 1.0 - (s as f64 + 0.5) / steps as f64;
        let fill = if span > 0.0 { color_ramp(t) } else { color_ramp(0.5) };
        let _ = writeln!(
            out,
            r#"<rect x="{bx:.2}" y="{:.2}" width="{bar_w:.2}" height="{:.2}" fill="{fill}"/>"#,
            top + s as f64 * bh / steps as f64,
            bh / steps as f64 + 0.01
        );
    }
    let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, bx + bar_w + 4.0, top + 10.0, fmt_tick(hi));
    let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, bx + bar_w + 4.0, top + bh, fmt_tick(lo));
    out.push_str("</svg>\n");
    out
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 || (v.abs() >= 0.01 && v.abs() < 1e4) {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

struct Frame {
    left: f64,
    top: f64,
    w: f64,
    h: f64,
}

impl Frame {
    const STD: Frame = Frame {
        left: 60.0,
        top: 30.0,
        w: 420.0,
        h: 300.0,
    };

    fn axes(&self, out: &mut String, x_label: &str, y_label: &str) {
        let (l, t, w, h) = (self.left, self.top, self.w, self.h);
        let _ = writeln!(
            out,
            r#"<rect x="{l:.1}" y="{t:.1}" width="{w:.1}" height="{h:.1}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            l + w / 2.0,
            t + h + 34.0,
            escape(x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">{}</text>"#,
            t + h / 2.0,
            t + h / 2.0,
            escape(y_label)
        );
    }

    fn x_tick(&self, out: &mut String, frac: f64, label: &str) {
        let x = self.left + frac * self.w;
        let y = self.top + self.h;
        let _ = writeln!(out, r#"<line x1="{x:.2}" y1="{y:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, y + 4.0);
        let _ = writeln!(out, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#, y + 16.0);
    }

    fn y_tick(&self, out: &mut String, frac: f64, label: &str) {
        let y = self.top + (1.0 - frac) * self.h;
        let x = self.left;
        let _ = writeln!(out, r#"<line x1="{:.2}" y1="{y:.2}" x2="{x:.2}" y2="{y:.2}" stroke="black"/>"#, x - 4.0);
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"#, x - 6.0, y + 4.0);
    }
}

/// Empirical CDFs of relative error, one step curve per entry, colored by
/// method. Errors beyond `x_max` are clipped to the right edge.
pub fn cdf_svg(curves: &[CdfCurve], x_max: f64, caption: &str) -> String {
    let x_max = if x_max.is_finite() && x_max > 0.0 { x_max } else { 1.0 };
    let f = Frame::STD;
    let width = f.left + f.w + 150.0;
    let height = f.top + f.h + 50.0;
    let mut out = String::new();
    header(&mut out, width, height);
    title(&mut out, f.left + f.w / 2.0, caption);
    f.axes(&mut out, "relative error", "fraction of cells");
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        f.x_tick(&mut out, t, &fmt_tick(t * x_max));
        f.y_tick(&mut out, t, &format!("{t:.2}"));
    }

    let mut methods: Vec<&str> = Vec::new();
    for c in curves {
        if !methods.contains(&c.method.as_str()) {
            methods.push(&c.method);
        }
    }
    let px = |e: f64| f.left + (e / x_max).clamp(0.0, 1.0) * f.w;
    let py = |p: f64| f.top + (1.0 - p.clamp(0.0, 1.0)) * f.h;
    for c in curves {
        let color = PALETTE[methods.iter().position(|m| *m == c.method).unwrap() % PALETTE.len()];
        let mut d = format!("M{:.2},{:.2}", px(0.0), py(0.0));
        let mut prev = 0.0;
        for &(e, p) in &c.points {
            let _ = write!(d, " H{:.2} V{:.2}", px(e), py(prev));
            let _ = write!(d, " V{:.2}", py(p));
            prev = p;
        }
        let _ = write!(d, " H{:.2}", px(x_max));
        let _ = writeln!(
            out,
            r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5" stroke-opacity="0.8"/>"#
        );
    }
    legend(&mut out, f.left + f.w + 12.0, f.top, &methods);
    out.push_str("</svg>\n");
    out
}

fn legend(out: &mut String, x: f64, y: f64, labels: &[&str]) {
    for (k, m) in labels.iter().enumerate() {
        let yy = y + 10.0 + 18.0 * k as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{x:.1}" y="{:.1}" width="12" height="12" fill="{}"/>"#,
            yy - 10.0,
            PALETTE[k % PALETTE.len()]
        );
        let _ = writeln!(out, r#"<text x="{:.1}" y="{yy:.1}">{}</text>"#, x + 18.0, escape(m));
    }
}

/// Mean MRE per method over all rows, in order of first appearance, with
/// the min/max range across seeds as a whisker.
pub fn mre_bar_svg(rows: &[ReportRow], caption: &str) -> String {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in rows {
        if !order.contains(&r.method.as_str()) {
            order.push(&r.method);
        }
        groups.entry(&r.method).or_default().push(r.mre);
    }
    let stats: Vec<(f64, f64, f64)> = order
        .iter()
        .map(|m| {
            let v = &groups[m];
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (mean, lo, hi)
        })
        .collect();
    let top_val = stats.iter().map(|s| s.2).fold(0.0, f64::max);
    let y_max = if top_val > 0.0 { top_val * 1.1 } else { 1.0 };

    let f = Frame::STD;
    let width = f.left + f.w + 20.0;
    let height = f.top + f.h + 50.0;
    let mut out = String::new();
    header(&mut out, width, height);
    title(&mut out, f.left + f.w / 2.0, caption);
    f.axes(&mut out, "method", "mean relative error");
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        f.y_tick(&mut out, t, &fmt_tick(t * y_max));
    }
    let slot = f.w / order.len().max(1) as f64;
    let py = |v: f64| f.top + (1.0 - v / y_max) * f.h;
    for (k, (m, &(mean, lo, hi))) in order.iter().zip(&stats).enumerate() {
        let x0 = f.left + slot * (k as f64 + 0.2);
        let bw = slot * 0.6;
        let _ = writeln!(
            out,
            r#"<rect x="{x0:.2}" y="{:.2}" width="{bw:.2}" height="{:.2}" fill="{}"/>"#,
            py(mean),
            f.top + f.h - py(mean),
            PALETTE[k % PALETTE.len()]
        );
        if hi > lo {
            let xc = x0 + bw / 2.0;
            let _ = writeln!(
                out,
                r#"<line x1="{xc:.2}" y1="{:.2}" x2="{xc:.2}" y2="{:.2}" stroke="black"/>"#,
                py(lo),
                py(hi)
            );
        }
        f.x_tick(&mut out, (k as f64 + 0.5) / order.len() as f64, &escape(m));
    }
    out.push_str("</svg>\n");
    out
}
