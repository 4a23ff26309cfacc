//! Deterministic SVG line plots on a fixed canvas.

use std::fmt::Write as _;

use super::csvio::GradNormRow;
use crate::curvature::SpectrumRecord;
use crate::gan::LossRecord;

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 500.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

/// Data-to-pixel mapping over the plot area.
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Frame {
        let (x0, x1) = bounds(xs);
        let (y0, y1) = bounds(ys);
        Frame { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }
}

/// Finite min and max, widened when degenerate.
fn bounds(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for x in v.filter(|x| x.is_finite()) {
        lo = lo.min(x);
        hi = hi.max(x);
    }
    if lo > hi {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * (1.0 + lo.abs()) {
        let pad = 0.5 * (1.0 + lo.abs());
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

fn header(o: &mut String, title: &str, xlabel: &str, ylabel: &str, f: &Frame) {
    let _ = writeln!(
        o,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(o, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(o, r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, esc(title));
    let (ax0, ax1, ay0, ay1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
    let _ = writeln!(
        o,
        r#"<path class="axes" d="M{ax0:.2},{ay0:.2} L{ax0:.2},{ay1:.2} L{ax1:.2},{ay1:.2}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let xv = f.x0 + t * (f.x1 - f.x0);
        let yv = f.y0 + t * (f.y1 - f.y0);
        let (px, py) = (f.px(xv), f.py(yv));
        let _ = writeln!(o, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, ay1 + 18.0, tick(xv));
        let _ = writeln!(o, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, ax0 - 6.0, py + 4.0, tick(yv));
    }
    let _ = writeln!(o, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, (ax0 + ax1) / 2.0, HEIGHT - 14.0, esc(xlabel));
    let _ = writeln!(
        o,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        (ay0 + ay1) / 2.0,
        (ay0 + ay1) / 2.0,
        esc(ylabel)
    );
}

fn tick(v: f64) -> String {
    if v == 0.0 || (1e-2..1e4).contains(&v.abs()) {
        format!("{v:.2}")
    } else {
        format!("{v:.2e}")
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn polyline(o: &mut String, class: &str, color: &str, f: &Frame, pts: &[(f64, f64)]) {
    let coords: Vec<String> = pts
        .iter()
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|&(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y)))
        .collect();
    let _ = writeln!(
        o,
        r#"<polyline class="{class}" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
        coords.join(" ")
    );
    if coords.len() == 1 {
        let (x, y) = pts[0];
        let _ = writeln!(o, r#"<circle class="{class}-point" cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, f.px(x), f.py(y));
    }
}

fn legend(o: &mut String, entries: &[(String, &str)]) {
    for (i, (label, color)) in entries.iter().enumerate() {
        let y = TOP + 10.0 + 16.0 * i as f64;
        let x = WIDTH - RIGHT - 140.0;
        let _ = writeln!(o, r#"<rect x="{x:.2}" y="{:.2}" width="10" height="10" fill="{color}"/>"#, y - 9.0);
        let _ = writeln!(o, r#"<text x="{:.2}" y="{y:.2}">{}</text>"#, x + 16.0, esc(label));
    }
}

/// The `k` largest eigenvalues per iteration as `k` polylines, with the
/// run's `λ+` and `λ-` marked.
pub fn spectra_svg(rows: &[SpectrumRecord], k: usize, title: &str) -> String {
    let xs = rows.iter().map(|r| r.iteration as f64);
    let lp = rows.last().map_or(f64::NAN, |r| r.lambda_plus);
    let lm = rows.last().map_or(f64::NAN, |r| r.lambda_minus);
    let ys = rows
        .iter()
        .flat_map(|r| r.eigenvalues.iter().take(k).copied())
        .chain([lp, lm]);
    let f = Frame::new(xs, ys);
    let mut o = String::new();
    header(&mut o, title, "iteration", "eigenvalue", &f);
    for i in 0..k {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter_map(|r| r.eigenvalues.get(i).map(|&v| (r.iteration as f64, v)))
            .collect();
        polyline(&mut o, "eig", PALETTE[i % PALETTE.len()], &f, &pts);
    }
    for (class, label, v) in [("lambda-plus", "λ⁺", lp), ("lambda-minus", "λ⁻", lm)] {
        if v.is_finite() {
            let y = f.py(v);
            let _ = writeln!(
                o,
                r#"<line class="{class}" x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black" stroke-dasharray="5,4"/>"#,
                WIDTH - RIGHT
            );
            let _ = writeln!(o, r#"<text class="{class}" x="{:.2}" y="{:.2}">{label} = {}</text>"#, LEFT + 6.0, y - 4.0, tick(v));
        }
    }
    o.push_str("</svg>\n");
    o
}

/// Gradient norm at each graph node for the last probed iteration, real and
/// fake batches as two series on a log scale.
pub fn gradnorms_svg(rows: &[GradNormRow], title: &str) -> String {
    let last = rows.iter().map(|r| r.iteration).max();
    let sel: Vec<&GradNormRow> = rows.iter().filter(|r| Some(r.iteration) == last).collect();
    let lg = |v: f64| v.max(1e-30).log10();
    let f = Frame::new(sel.iter().map(|r| r.node as f64), sel.iter().map(|r| lg(r.norm)));
    let mut o = String::new();
    let label = match last {
        Some(it) => format!("{title} (iteration {it})"),
        None => title.to_string(),
    };
    header(&mut o, &label, "node", "log10 gradient norm", &f);
    let mut entries = Vec::new();
    for (i, kind) in ["real", "fake"].into_iter().enumerate() {
        let pts: Vec<(f64, f64)> = sel
            .iter()
            .filter(|r| r.batch == kind)
            .map(|r| (r.node as f64, lg(r.norm)))
            .collect();
        polyline(&mut o, &format!("gradnorm-{kind}"), PALETTE[i], &f, &pts);
        entries.push((kind.to_string(), PALETTE[i]));
    }
    legend(&mut o, &entries);
    o.push_str("</svg>\n");
    o
}

pub fn losses_svg(rows: &[LossRecord], title: &str) -> String {
    let xs = rows.iter().map(|r| r.iteration as f64);
    let ys = rows.iter().flat_map(|r| [r.loss_d, r.loss_g]);
    let f = Frame::new(xs, ys);
    let mut o = String::new();
    header(&mut o, title, "iteration", "loss", &f);
    let d: Vec<(f64, f64)> = rows.iter().map(|r| (r.iteration as f64, r.loss_d)).collect();
    let g: Vec<(f64, f64)> = rows.iter().map(|r| (r.iteration as f64, r.loss_g)).collect();
    polyline(&mut o, "loss-d", PALETTE[0], &f, &d);
    polyline(&mut o, "loss-g", PALETTE[1], &f, &g);
    legend(&mut o, &[("discriminator".into(), PALETTE[0]), ("generator".into(), PALETTE[1])]);
    o.push_str("</svg>\n");
    o
}
