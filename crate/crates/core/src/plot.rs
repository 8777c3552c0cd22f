//! Self-contained SVG emission for the standard figures: exponent estimates
//! against the sweep point index (raw in red, adjusted in green, theoretical
//! in blue), and log-log curves for tails and correlations.

use crate::exponents::ExponentFit;

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 560.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 30.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;

struct Canvas {
    body: String,
    x_range: (f64, f64),
    y_range: (f64, f64),
}

impl Canvas {
    fn new(x_range: (f64, f64), y_range: (f64, f64)) -> Self {
        Canvas {
            body: String::new(),
            x_range,
            y_range,
        }
    }

    fn sx(&self, x: f64) -> f64 {
        let (lo, hi) = self.x_range;
        MARGIN_L + (x - lo) / (hi - lo) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn sy(&self, y: f64) -> f64 {
        let (lo, hi) = self.y_range;
        HEIGHT - MARGIN_B - (y - lo) / (hi - lo) * (HEIGHT - MARGIN_T - MARGIN_B)
    }

    fn polyline(&mut self, pts: &[(f64, f64)], color: &str) {
        if pts.is_empty() {
            return;
        }
        let coords: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", self.sx(x), self.sy(y)))
            .collect();
        self.body.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            color,
            coords.join(" ")
        ));
    }

    fn hline(&mut self, y: f64, color: &str) {
        let (lo, hi) = self.x_range;
        self.polyline(&[(lo, y), (hi, y)], color);
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, content: &str, color: &str) {
        self.body.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{y:.1}\" text-anchor=\"{anchor}\" fill=\"{color}\" \
             font-family=\"sans-serif\" font-size=\"13\">{content}</text>\n"
        ));
    }

    fn axes(&mut self, x_label: &str, y_label: &str, x_ticks: &[f64], y_ticks: &[f64]) {
        let x0 = MARGIN_L;
        let x1 = WIDTH - MARGIN_R;
        let y0 = HEIGHT - MARGIN_B;
        let y1 = MARGIN_T;
        self.body.push_str(&format!(
            "<rect x=\"{x0}\" y=\"{y1}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>\n",
            x1 - x0,
            y0 - y1
        ));
        for &t in x_ticks {
            let sx = self.sx(t);
            self.body.push_str(&format!(
                "<line x1=\"{sx:.1}\" y1=\"{y0}\" x2=\"{sx:.1}\" y2=\"{}\" stroke=\"#444\"/>\n",
                y0 + 5.0
            ));
            self.text(sx, y0 + 20.0, "middle", &tick_label(t), "#222");
        }
        for &t in y_ticks {
            let sy = self.sy(t);
            self.body.push_str(&format!(
                "<line x1=\"{}\" y1=\"{sy:.1}\" x2=\"{x0}\" y2=\"{sy:.1}\" stroke=\"#444\"/>\n",
                x0 - 5.0
            ));
            self.text(x0 - 9.0, sy + 4.0, "end", &tick_label(t), "#222");
        }
        self.text((x0 + x1) / 2.0, HEIGHT - 12.0, "middle", x_label, "#222");
        self.body.push_str(&format!(
            "<text x=\"18\" y=\"{:.1}\" text-anchor=\"middle\" fill=\"#222\" \
             font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 18 {:.1})\">{}</text>\n",
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            y_label
        ));
    }

    fn finish(self, title: &str, timestamp: Option<&str>) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
             viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
        ));
        if let Some(ts) = timestamp {
            out.push_str(&format!("<!-- generated {ts} -->\n"));
        }
        out.push_str(&format!(
            "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"24\" text-anchor=\"middle\" fill=\"#111\" \
             font-family=\"sans-serif\" font-size=\"16\">{title}</text>\n",
            WIDTH / 2.0
        ));
        out.push_str(&self.body);
        out.push_str("</svg>\n");
        out
    }
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e4).contains(&a) {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.1e}")
    }
}

fn nice_ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..=n)
        .map(|i| lo + (hi - lo) * i as f64 / n as f64)
        .collect()
}

/// Three-curve exponent figure: per-point raw estimates (red), adjusted
/// estimates (green), and the constant theoretical value (blue), indexed by
/// sweep point.
pub fn fit_figure_svg(fit: &ExponentFit, title: &str, timestamp: Option<&str>) -> String {
    let n = fit.raw.len();
    let finite: Vec<f64> = fit
        .raw
        .iter()
        .chain(fit.adjusted.iter())
        .copied()
        .filter(|v| v.is_finite())
        .chain(std::iter::once(fit.theoretical))
        .collect();
    let mut lo = finite.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut hi = finite.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(lo < hi) {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = 0.08 * (hi - lo);
    let mut c = Canvas::new((0.0, (n.max(2) - 1) as f64), (lo - pad, hi + pad));
    let series = |vals: &[f64]| -> Vec<(f64, f64)> {
        vals.iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(i, v)| (i as f64, *v))
            .collect()
    };
    c.axes(
        "point index",
        fit.kind.label(),
        &nice_ticks(0.0, (n.max(2) - 1) as f64, 5),
        &nice_ticks(lo - pad, hi + pad, 6),
    );
    c.hline(fit.theoretical, "#1f4fd8");
    c.polyline(&series(&fit.raw), "#d81f1f");
    c.polyline(&series(&fit.adjusted), "#1f9e34");
    let lx = WIDTH - MARGIN_R - 190.0;
    c.text(lx, MARGIN_T + 16.0, "start", "raw estimate", "#d81f1f");
    c.text(lx, MARGIN_T + 34.0, "start", "adjusted estimate", "#1f9e34");
    c.text(
        lx,
        MARGIN_T + 52.0,
        "start",
        &format!("theoretical = {:.4}", fit.theoretical),
        "#1f4fd8",
    );
    c.finish(title, timestamp)
}

/// Log-log curve with an optional fitted reference line.
pub fn loglog_figure_svg(
    xs: &[f64],
    ys: &[f64],
    fit: Option<(f64, f64)>, // (slope, intercept) in log-log coordinates
    title: &str,
    x_label: &str,
    y_label: &str,
    timestamp: Option<&str>,
) -> String {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.log10(), y.log10()))
        .collect();
    let (mut xlo, mut xhi, mut ylo, mut yhi) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &pts {
        xlo = xlo.min(x);
        xhi = xhi.max(x);
        ylo = ylo.min(y);
        yhi = yhi.max(y);
    }
    if !(xlo < xhi) {
        xlo -= 1.0;
        xhi += 1.0;
    }
    if !(ylo < yhi) {
        ylo -= 1.0;
        yhi += 1.0;
    }
    let mut c = Canvas::new((xlo, xhi), (ylo - 0.2, yhi + 0.2));
    c.axes(
        x_label,
        y_label,
        &nice_ticks(xlo, xhi, 5),
        &nice_ticks(ylo - 0.2, yhi + 0.2, 5),
    );
    c.polyline(&pts, "#d81f1f");
    if let Some((slope, intercept)) = fit {
        // ln y = slope ln x + intercept  ->  log10 coordinates
        let line: Vec<(f64, f64)> = [xlo, xhi]
            .iter()
            .map(|&lx| {
                let ln_x = lx * std::f64::consts::LN_10;
                let ln_y = slope * ln_x + intercept;
                (lx, ln_y / std::f64::consts::LN_10)
            })
            .collect();
        c.polyline(&line, "#1f4fd8");
        c.text(
            WIDTH - MARGIN_R - 190.0,
            MARGIN_T + 16.0,
            "start",
            &format!("fit slope = {slope:.4}"),
            "#1f4fd8",
        );
    }
    c.finish(title, timestamp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponents::ExponentKind;

    #[test]
    fn figure_is_self_contained_svg() {
        let fit = ExponentFit {
            kind: ExponentKind::Beta,
            raw: vec![0.35, 0.37, f64::NAN, 0.39],
            adjusted: vec![0.4, 0.4, f64::NAN, 0.4],
            c_fit: 1.0,
            slope_fit: 0.4,
            loglog_slope: 0.4,
            loglog_intercept: 0.0,
            slope_stderr: 0.0,
            theoretical: 0.4,
            max_abs_err_adjusted: 0.0,
            n_valid: 3,
        };
        let svg = fit_figure_svg(&fit, "test", None);
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert!(!svg.contains("generated"));
        assert!(!svg.contains("href"));
        let with_ts = fit_figure_svg(&fit, "test", Some("12345"));
        assert!(with_ts.contains("<!-- generated 12345 -->"));
    }

    #[test]
    fn loglog_figure_handles_zeros() {
        let xs = [1.0, 10.0, 100.0];
        let ys = [0.1, 0.0, 0.001];
        let svg = loglog_figure_svg(&xs, &ys, Some((-1.5, 0.0)), "t", "t", "rho", None);
        assert!(svg.contains("polyline"));
    }
}
