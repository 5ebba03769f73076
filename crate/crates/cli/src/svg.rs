//! Minimal static SVG charts: season curves, scatter plots with a fitted
//! line, and grouped bar charts.

use std::fmt::Write;

use phenoflow_core::data::Category;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 52.0;
const NEUTRAL: &str = "#7f7f7f";

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        Self {
            x: widen(x),
            y: widen(y),
        }
    }

    fn sx(&self, v: f64) -> f64 {
        LEFT + (v - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }

    fn sy(&self, v: f64) -> f64 {
        H - BOTTOM - (v - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }
}

fn widen((lo, hi): (f64, f64)) -> (f64, f64) {
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        })
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn open(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, f: &Frame, xlabel: &str, ylabel: &str, x_ticks: bool) {
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(
        out,
        r#"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y1 - y0
    );
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let yv = f.y.0 + t * (f.y.1 - f.y.0);
        let py = f.sy(yv);
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" stroke="black"/>"#,
            x0 - 4.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
            x0 - 6.0,
            py + 4.0,
            tick(yv)
        );
        if x_ticks {
            let xv = f.x.0 + t * (f.x.1 - f.x.0);
            let px = f.sx(xv);
            let _ = writeln!(
                out,
                r#"<line x1="{px:.2}" y1="{y1}" x2="{px:.2}" y2="{}" stroke="black"/>"#,
                y1 + 4.0
            );
            let _ = writeln!(
                out,
                r#"<text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#,
                y1 + 16.0,
                tick(xv)
            );
        }
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        H - 12.0,
        escape(xlabel)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
        (y0 + y1) / 2.0,
        escape(ylabel)
    );
}

fn tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-2..1e4).contains(&a) {
        format!("{v:.1e}")
    } else if a >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn vline(out: &mut String, f: &Frame, x: f64, color: &str, label: &str, dashed: bool) {
    if !x.is_finite() {
        return;
    }
    let px = f.sx(x);
    let dash = if dashed {
        r#" stroke-dasharray="5,4""#
    } else {
        ""
    };
    let _ = writeln!(
        out,
        r#"<line x1="{px:.2}" y1="{TOP}" x2="{px:.2}" y2="{}" stroke="{color}" stroke-width="1.5"{dash}/>"#,
        H - BOTTOM
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{}" fill="{color}">{}</text>"#,
        px + 3.0,
        TOP + 12.0,
        escape(label)
    );
}

/// NDVI samples, the fitted curve, and vertical markers at SOS (red) and
/// POS (dashed).
pub fn season_plot(
    title: &str,
    samples: &[(f64, f64)],
    curve: impl Fn(f64) -> f64,
    sos: f64,
    pos: f64,
) -> String {
    let (xlo, xhi) = extent(samples.iter().map(|s| s.0));
    let (xlo, xhi) = if xlo.is_finite() {
        (xlo.min(0.0), xhi.max(52.0))
    } else {
        (0.0, 52.0)
    };
    let curve_pts: Vec<(f64, f64)> = (0..=200)
        .map(|i| xlo + (xhi - xlo) * i as f64 / 200.0)
        .map(|x| (x, curve(x)))
        .collect();
    let y = extent(
        samples
            .iter()
            .map(|s| s.1)
            .chain(curve_pts.iter().map(|p| p.1)),
    );
    let f = Frame {
        x: (xlo, xhi),
        y: widen(y),
    };
    let mut out = String::new();
    open(&mut out, title);
    axes(&mut out, &f, "week of year", "NDVI", true);
    let path: Vec<String> = curve_pts
        .iter()
        .filter(|p| p.1.is_finite())
        .map(|&(x, v)| format!("{:.2},{:.2}", f.sx(x), f.sy(v)))
        .collect();
    let _ = writeln!(
        out,
        r#"<polyline points="{}" fill="none" stroke="black" stroke-width="1.5"/>"#,
        path.join(" ")
    );
    for &(x, v) in samples {
        let _ = writeln!(
            out,
            r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="#1f77b4"/>"##,
            f.sx(x),
            f.sy(v)
        );
    }
    vline(&mut out, &f, sos, "red", "SOS", false);
    vline(&mut out, &f, pos, "black", "POS", true);
    out.push_str("</svg>\n");
    out
}

fn color(category: Option<Category>) -> &'static str {
    category.map_or(NEUTRAL, Category::color)
}

fn legend(out: &mut String, present: &[Category]) {
    for (i, c) in present.iter().enumerate() {
        let x = W - RIGHT - 40.0 * (present.len() - i) as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{x}" y="{}" width="10" height="10" fill="{}"/>"#,
            TOP + 6.0,
            c.color()
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}">{}</text>"#,
            x + 13.0,
            TOP + 15.0,
            c.as_char()
        );
    }
}

/// Points coloured by warming category with an optional `y = slope x +
/// intercept` line.
pub fn scatter_plot(
    title: &str,
    xlabel: &str,
    ylabel: &str,
    points: &[(f64, f64, Option<Category>)],
    line: Option<(f64, f64)>,
) -> String {
    let f = Frame::new(
        extent(points.iter().map(|p| p.0)),
        extent(points.iter().map(|p| p.1)),
    );
    let mut out = String::new();
    open(&mut out, title);
    axes(&mut out, &f, xlabel, ylabel, true);
    for &(x, y, c) in points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
        let _ = writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}" fill-opacity="0.8"/>"#,
            f.sx(x),
            f.sy(y),
            color(c)
        );
    }
    if let Some((slope, intercept)) = line {
        let (a, b) = f.x;
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="1.5"/>"#,
            f.sx(a),
            f.sy(slope * a + intercept),
            f.sx(b),
            f.sy(slope * b + intercept)
        );
    }
    let mut present: Vec<Category> = points.iter().filter_map(|p| p.2).collect();
    present.sort();
    present.dedup();
    legend(&mut out, &present);
    out.push_str("</svg>\n");
    out
}

/// One cluster of bars per label; bars inside a cluster are coloured by
/// category.
pub fn grouped_bars(
    title: &str,
    ylabel: &str,
    groups: &[(String, Vec<(Option<Category>, f64)>)],
) -> String {
    let (_, hi) = extent(groups.iter().flat_map(|g| g.1.iter().map(|b| b.1)));
    let top = if hi.is_finite() && hi > 0.0 {
        hi * 1.1
    } else {
        1.0
    };
    let f = Frame {
        x: (0.0, groups.len().max(1) as f64),
        y: (0.0, top),
    };
    let mut out = String::new();
    open(&mut out, title);
    axes(&mut out, &f, "year", ylabel, false);
    let slot = f.sx(1.0) - f.sx(0.0);
    for (gi, (label, bars)) in groups.iter().enumerate() {
        let n = bars.len().max(1) as f64;
        let bw = 0.8 * slot / n;
        let x0 = f.sx(gi as f64) + 0.1 * slot;
        for (bi, &(c, v)) in bars.iter().enumerate() {
            let v = if v.is_finite() { v.max(0.0) } else { 0.0 };
            let (y, base) = (f.sy(v), f.sy(0.0));
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                x0 + bi as f64 * bw,
                bw * 0.95,
                base - y,
                color(c)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            f.sx(gi as f64 + 0.5),
            H - BOTTOM + 16.0,
            escape(label)
        );
    }
    let mut present: Vec<Category> = groups
        .iter()
        .flat_map(|g| g.1.iter().filter_map(|b| b.0))
        .collect();
    present.sort();
    present.dedup();
    legend(&mut out, &present);
    out.push_str("</svg>\n");
    out
}
