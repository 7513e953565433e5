//! Minimal self-contained SVG charts. The numbers behind every chart are
//! written separately as CSV; these are for looking at.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// One named polyline.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        W / 2.0,
        esc(title)
    );
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

fn axes(out: &mut String, x: (f64, f64), y: (f64, f64), xlabel: &str, ylabel: &str) {
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
    let _ = writeln!(
        out,
        "<path d=\"M{x0} {y1} V{y0} H{x1}\" stroke=\"black\" fill=\"none\"/>"
    );
    for i in 0..=4 {
        let f = f64::from(i) / 4.0;
        let px = x0 + f * (x1 - x0);
        let py = y0 + f * (y1 - y0);
        let _ = writeln!(
            out,
            "<text x=\"{px:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            y0 + 16.0,
            tick(x.0 + f * (x.1 - x.0))
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
            x0 - 6.0,
            py + 4.0,
            tick(y.0 + f * (y.1 - y.0))
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
        (x0 + x1) / 2.0,
        H - 12.0,
        esc(xlabel)
    );
    let _ = writeln!(
        out,
        "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{}</text>",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        esc(ylabel)
    );
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else if v.abs() >= 1.0 {
        format!("{v:.2}")
    } else {
        format!("{v:.3}")
    }
}

pub fn line_chart(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let xr = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let yr = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    axes(&mut out, xr, yr, xlabel, ylabel);
    let sx = |x: f64| LEFT + (x - xr.0) / (xr.1 - xr.0) * (W - RIGHT - LEFT);
    let sy = |y: f64| H - BOTTOM - (y - yr.0) / (yr.1 - yr.0) * (H - BOTTOM - TOP);
    for (i, s) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{colour}\" stroke-width=\"2\"/>",
            pts.join(" ")
        );
        let ly = TOP + 16.0 * i as f64;
        let _ = writeln!(
            out,
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"12\" height=\"12\" fill=\"{colour}\"/><text x=\"{:.1}\" y=\"{:.1}\">{}</text>",
            W - RIGHT + 12.0,
            ly,
            W - RIGHT + 28.0,
            ly + 10.0,
            esc(&s.name)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Heatmap of `values[r][c]`, rows drawn top to bottom.
pub fn heatmap(
    title: &str,
    row_label: &str,
    col_label: &str,
    rows: &[f64],
    cols: &[f64],
    values: &[Vec<f64>],
) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let (lo, hi) = range(values.iter().flatten().copied());
    let (gw, gh) = (W - RIGHT - LEFT, H - BOTTOM - TOP);
    let cw = gw / cols.len().max(1) as f64;
    let ch = gh / rows.len().max(1) as f64;
    for (r, row) in values.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            let f = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
            let shade = (255.0 * (1.0 - f)).round() as u8;
            let _ = writeln!(
                out,
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"rgb(255,{shade},{shade})\"><title>{:.4}</title></rect>",
                LEFT + c as f64 * cw,
                TOP + r as f64 * ch,
                cw,
                ch,
                v
            );
        }
    }
    for (c, v) in cols.iter().enumerate() {
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            LEFT + (c as f64 + 0.5) * cw,
            H - BOTTOM + 16.0,
            tick(*v)
        );
    }
    for (r, v) in rows.iter().enumerate() {
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
            LEFT - 6.0,
            TOP + (r as f64 + 0.5) * ch + 4.0,
            tick(*v)
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
        LEFT + gw / 2.0,
        H - 12.0,
        esc(col_label)
    );
    let _ = writeln!(
        out,
        "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{}</text>",
        TOP + gh / 2.0,
        TOP + gh / 2.0,
        esc(row_label)
    );
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\">{} – {}</text>",
        W - RIGHT + 12.0,
        TOP + 12.0,
        tick(lo),
        tick(hi)
    );
    out.push_str("</svg>\n");
    out
}

/// Grouped bars: one group per metric, one bar per method, with
/// standard-error whiskers.
pub fn bar_chart(title: &str, metrics: &[&str], methods: &[(String, Vec<(f64, f64)>)]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, (0.0, metrics.len() as f64), (0.0, 1.0), "", "score");
    let gw = (W - RIGHT - LEFT) / metrics.len().max(1) as f64;
    let bw = gw * 0.8 / methods.len().max(1) as f64;
    let sy = |y: f64| H - BOTTOM - y.clamp(0.0, 1.0) * (H - BOTTOM - TOP);
    for (g, metric) in metrics.iter().enumerate() {
        let gx = LEFT + g as f64 * gw + gw * 0.1;
        for (m, (_, vals)) in methods.iter().enumerate() {
            let (mean, se) = vals[g];
            let x = gx + m as f64 * bw;
            let colour = PALETTE[m % PALETTE.len()];
            let _ = writeln!(
                out,
                "<rect x=\"{x:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"{colour}\"/>",
                sy(mean),
                bw * 0.9,
                sy(0.0) - sy(mean)
            );
            if se > 0.0 {
                let cx = x + bw * 0.45;
                let _ = writeln!(
                    out,
                    "<path d=\"M{cx:.1} {:.1} V{:.1}\" stroke=\"black\"/>",
                    sy(mean - se),
                    sy(mean + se)
                );
            }
        }
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            LEFT + (g as f64 + 0.5) * gw,
            H - BOTTOM + 32.0,
            esc(metric)
        );
    }
    for (m, (name, _)) in methods.iter().enumerate() {
        let ly = TOP + 16.0 * m as f64;
        let _ = writeln!(
            out,
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"12\" height=\"12\" fill=\"{}\"/><text x=\"{:.1}\" y=\"{:.1}\">{}</text>",
            W - RIGHT + 12.0,
            ly,
            PALETTE[m % PALETTE.len()],
            W - RIGHT + 28.0,
            ly + 10.0,
            esc(name)
        );
    }
    out.push_str("</svg>\n");
    out
}
