//! Forest plot rendered as plain SVG text.
//!
//! One row per study (square at the estimate, whiskers at the 95% Wald
//! bounds), then one diamond per interval. Ratio measures use a log axis
//! labelled on the ratio scale. The viewport is 800 x (40 * rows + 120).

use std::fmt::Write as _;

use crate::effects::Dataset;
use crate::inversion::IntervalResult;

const WIDTH: f64 = 800.0;
const ROW_HEIGHT: f64 = 40.0;
const TOP: f64 = 60.0;
const PLOT_LEFT: f64 = 240.0;
const PLOT_RIGHT: f64 = 770.0;
const WALD_Z: f64 = 1.959963984540054;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn num(x: f64) -> String {
    format!("{x:.2}")
}

fn fmt_value(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.3}")
    }
}

/// Tick positions on the analysis scale and their labels.
fn ticks(lo: f64, hi: f64, ratio: bool) -> Vec<(f64, String)> {
    if ratio {
        let mut out = Vec::new();
        for e in -4..=4 {
            for m in [1.0, 2.0, 5.0] {
                let r = m * 10f64.powi(e);
                let x = r.ln();
                if x >= lo - 1e-12 && x <= hi + 1e-12 {
                    out.push((x, format!("{r}")));
                }
            }
        }
        if out.len() < 2 {
            out = vec![(lo, format!("{:.3}", lo.exp())), (hi, format!("{:.3}", hi.exp()))];
        }
        out
    } else {
        let raw = (hi - lo) / 5.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0]
            .iter()
            .map(|m| m * mag)
            .find(|s| *s >= raw)
            .unwrap_or(10.0 * mag);
        let first = (lo / step).ceil() as i64;
        let last = (hi / step).floor() as i64;
        (first..=last)
            .map(|i| {
                let x = i as f64 * step;
                let x = if x.abs() < step * 1e-9 { 0.0 } else { x };
                (x, format!("{}", (x * 1e6).round() / 1e6))
            })
            .collect()
    }
}

/// Render a forest plot of `data` with a diamond for each interval.
pub fn render_forest(data: &Dataset, intervals: &[IntervalResult]) -> String {
    let measure = data.measure();
    let ratio = measure.is_ratio();
    let bt = measure.back_transform();
    let rows = data.k() + intervals.len();
    let height = ROW_HEIGHT * rows as f64 + 120.0;

    // axis range from finite whisker and interval ends, always including the null
    let mut lo = measure.null_value();
    let mut hi = measure.null_value();
    for s in data.studies() {
        lo = lo.min(s.theta_hat - WALD_Z * s.sigma_hat);
        hi = hi.max(s.theta_hat + WALD_Z * s.sigma_hat);
    }
    for r in intervals {
        for v in [r.lower, r.point, r.upper] {
            if v.is_finite() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
    }
    if hi - lo < 1e-9 {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let xpos = |v: f64| PLOT_LEFT + (v.clamp(lo, hi) - lo) / (hi - lo) * (PLOT_RIGHT - PLOT_LEFT);
    let row_y = |i: usize| TOP + ROW_HEIGHT * i as f64;
    let axis_y = TOP + ROW_HEIGHT * rows as f64;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#,
        w = WIDTH,
        h = height
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{WIDTH}" height="{height}" fill="white"/>"#);
    let scale = if ratio { "ratio scale, log axis" } else { "difference scale" };
    let _ = writeln!(
        svg,
        r#"<text x="20" y="30" font-weight="bold">Forest plot: {}, {scale}</text>"#,
        measure
    );

    let null_x = xpos(measure.null_value());
    let _ = writeln!(
        svg,
        r#"<line class="reference" x1="{x}" y1="{y1}" x2="{x}" y2="{y2}" stroke="gray" stroke-dasharray="4 3"/>"#,
        x = num(null_x),
        y1 = num(TOP - 20.0),
        y2 = num(axis_y)
    );

    for (i, s) in data.studies().iter().enumerate() {
        let y = row_y(i);
        let (wl, wh) = (s.theta_hat - WALD_Z * s.sigma_hat, s.theta_hat + WALD_Z * s.sigma_hat);
        let _ = writeln!(svg, r#"<g class="study">"#);
        let _ = writeln!(svg, r#"<text x="20" y="{}">{}</text>"#, num(y + 4.0), escape(&s.study_id));
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="black"/>"#,
            num(xpos(wl)),
            num(xpos(wh)),
            y = num(y)
        );
        let cx = xpos(s.theta_hat);
        let _ = writeln!(
            svg,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="black"/>"#,
            num(cx - 5.0),
            num(y - 5.0)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end">{} [{}, {}]</text>"#,
            num(PLOT_LEFT - 10.0),
            num(y + 4.0),
            fmt_value(bt.apply(s.theta_hat)),
            fmt_value(bt.apply(wl)),
            fmt_value(bt.apply(wh))
        );
        let _ = writeln!(svg, "</g>");
    }

    for (j, r) in intervals.iter().enumerate() {
        let y = row_y(data.k() + j);
        let (xl, xc, xu) = (xpos(r.lower), xpos(r.point), xpos(r.upper));
        let _ = writeln!(svg, r#"<g class="interval">"#);
        let _ = writeln!(
            svg,
            r#"<text x="20" y="{}" font-weight="bold">{} p={}</text>"#,
            num(y + 4.0),
            escape(r.method),
            r.p
        );
        let _ = writeln!(
            svg,
            r#"<polygon class="diamond" points="{},{} {},{} {},{} {},{}" fill="steelblue"/>"#,
            num(xl),
            num(y),
            num(xc),
            num(y - 8.0),
            num(xu),
            num(y),
            num(xc),
            num(y + 8.0)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end">{} [{}, {}]</text>"#,
            num(PLOT_LEFT - 10.0),
            num(y + 4.0),
            fmt_value(r.point_bt),
            fmt_value(r.lower_bt),
            fmt_value(r.upper_bt)
        );
        let _ = writeln!(svg, "</g>");
    }

    let _ = writeln!(
        svg,
        r#"<line class="axis" x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="black"/>"#,
        num(PLOT_LEFT),
        num(PLOT_RIGHT),
        y = num(axis_y)
    );
    for (v, label) in ticks(lo, hi, ratio) {
        let x = num(xpos(v));
        let _ = writeln!(
            svg,
            r#"<line x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="black"/>"#,
            num(axis_y),
            num(axis_y + 5.0)
        );
        let _ = writeln!(
            svg,
            r#"<text class="tick" x="{x}" y="{}" text-anchor="middle">{label}</text>"#,
            num(axis_y + 20.0)
        );
    }
    svg.push_str("</svg>\n");
    svg
}
