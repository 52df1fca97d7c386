//! Self-contained SVG plots. Coordinates are printed with two decimals so the
//! output is a fixed byte stream for fixed input.

use std::fmt::Write;

use svplab::experiments::{Figure1Panel, HeatmapCell};

struct Svg {
    buf: String,
}

fn c(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Svg {
    fn new(width: f64, height: f64) -> Self {
        let mut buf = String::new();
        let _ = writeln!(
            buf,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif">"#,
            w = c(width),
            h = c(height)
        );
        let _ = writeln!(buf, r#"<rect width="{}" height="{}" fill="white"/>"#, c(width), c(height));
        Self { buf }
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(
            self.buf,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{fill}"/>"#,
            c(x),
            c(y),
            c(w),
            c(h)
        );
    }

    fn frame(&mut self, x: f64, y: f64, w: f64, h: f64) {
        let _ = writeln!(
            self.buf,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black" stroke-width="1"/>"#,
            c(x),
            c(y),
            c(w),
            c(h)
        );
    }

    fn polyline(&mut self, points: &[(f64, f64)], stroke: &str, width: f64, dash: Option<&str>) {
        if points.len() < 2 {
            return;
        }
        let coords: Vec<String> = points.iter().map(|&(x, y)| format!("{},{}", c(x), c(y))).collect();
        let dash = dash.map(|d| format!(r#" stroke-dasharray="{d}""#)).unwrap_or_default();
        let _ = writeln!(
            self.buf,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="{}"{dash}/>"#,
            coords.join(" "),
            c(width)
        );
    }

    fn circle(&mut self, x: f64, y: f64, r: f64, fill: &str) {
        let _ = writeln!(
            self.buf,
            r#"<circle cx="{}" cy="{}" r="{}" fill="{fill}"/>"#,
            c(x),
            c(y),
            c(r)
        );
    }

    fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, body: &str) {
        let _ = writeln!(
            self.buf,
            r#"<text x="{}" y="{}" font-size="{}" text-anchor="{anchor}">{}</text>"#,
            c(x),
            c(y),
            c(size),
            escape(body)
        );
    }

    fn finish(mut self) -> String {
        self.buf.push_str("</svg>\n");
        self.buf
    }
}

/// White to dark blue.
fn shade(p: f64) -> String {
    let p = p.clamp(0.0, 1.0);
    let mix = |lo: f64, hi: f64| (lo + (hi - lo) * p).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(255.0, 8.0), mix(255.0, 48.0), mix(255.0, 107.0))
}

/// Lower boundary `q(r)` of a predicted region, `None` where the region is empty.
pub type Boundary = fn(f64, f64) -> Option<f64>;

pub fn bos_boundary(r: f64, beta: f64) -> Option<f64> {
    (beta > 3.0 && r < 2.0 / 3.0).then(|| (1.0 - r) / 2.0)
}

pub fn subg_boundary(r: f64, beta: f64) -> Option<f64> {
    (beta > 1.0).then(|| ((1.0 - r) / 2.0).max((3.0 - beta) / 2.0 - r))
}

/// Grid-position axis: grid values sit at cell centres.
struct Axis {
    first: f64,
    step: f64,
    origin: f64,
    cell: f64,
}

impl Axis {
    fn new(grid: &[f64], origin: f64, cell: f64) -> Self {
        let step = if grid.len() > 1 {
            (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64
        } else {
            1.0
        };
        Self {
            first: grid[0],
            step,
            origin,
            cell,
        }
    }

    fn at(&self, v: f64) -> f64 {
        self.origin + ((v - self.first) / self.step + 0.5) * self.cell
    }
}

/// SVP proportion per cell with the predicted-region boundary.
pub fn heatmap(cells: &[HeatmapCell], r_grid: &[f64], q_grid: &[f64], beta: f64, boundary: Boundary) -> String {
    if r_grid.is_empty() || q_grid.is_empty() {
        return Svg::new(10.0, 10.0).finish();
    }
    let (cw, ch) = (30.0, 12.0);
    let (left, top, bottom, right) = (60.0, 30.0, 50.0, 110.0);
    let pw = cw * r_grid.len() as f64;
    let ph = ch * q_grid.len() as f64;
    let mut svg = Svg::new(left + pw + right, top + ph + bottom);
    let x_axis = Axis::new(r_grid, left, cw);
    // q grows upwards
    let y_axis = Axis::new(q_grid, 0.0, ch);
    let y_at = |q: f64| top + ph - y_axis.at(q);

    for (k, cell) in cells.iter().enumerate() {
        let (i, j) = (k / q_grid.len(), k % q_grid.len());
        let x = left + cw * i as f64;
        let y = top + ph - ch * (j + 1) as f64;
        let fill = if cell.valid && cell.trials > 0 {
            shade(cell.proportion())
        } else {
            "#d9d9d9".to_string()
        };
        svg.rect(x, y, cw, ch, &fill);
    }
    svg.frame(left, top, pw, ph);

    let (r_lo, r_hi) = (x_axis.first - 0.5 * x_axis.step, r_grid[r_grid.len() - 1] + 0.5 * x_axis.step);
    let (q_lo, q_hi) = (y_axis.first - 0.5 * y_axis.step, q_grid[q_grid.len() - 1] + 0.5 * y_axis.step);
    let mut line: Vec<(f64, f64)> = Vec::new();
    let mut last_r = None;
    let steps = 400;
    for s in 0..=steps {
        let r = r_lo + (r_hi - r_lo) * s as f64 / steps as f64;
        match boundary(r, beta) {
            Some(q) => {
                line.push((x_axis.at(r), y_at(q.clamp(q_lo, q_hi))));
                last_r = Some(r);
            }
            None => {
                if let Some(rl) = last_r.take() {
                    // region ends: close with a vertical edge
                    line.push((x_axis.at(rl), y_at(q_hi)));
                }
            }
        }
    }
    svg.polyline(&line, "#d62728", 2.0, None);

    for (i, &r) in r_grid.iter().enumerate() {
        if i % 2 == 1 || r_grid.len() <= 10 {
            svg.text(x_axis.at(r), top + ph + 16.0, 10.0, "middle", &format!("{r:.2}"));
        }
    }
    for (j, &q) in q_grid.iter().enumerate() {
        if j % 4 == 0 || q_grid.len() <= 10 {
            svg.text(left - 6.0, y_at(q) + 3.5, 10.0, "end", &format!("{q:.2}"));
        }
    }
    svg.text(left + pw / 2.0, top + ph + 36.0, 12.0, "middle", "r");
    svg.text(18.0, top + ph / 2.0, 12.0, "middle", "q");
    svg.text(left + pw / 2.0, 18.0, 12.0, "middle", &format!("SVP proportion, beta = {beta}"));

    let bar_x = left + pw + 30.0;
    for k in 0..20 {
        let p = k as f64 / 19.0;
        svg.rect(bar_x, top + ph - (k + 1) as f64 * ph / 20.0, 16.0, ph / 20.0, &shade(p));
    }
    svg.frame(bar_x, top, 16.0, ph);
    svg.text(bar_x + 22.0, top + 4.0, 10.0, "start", "1");
    svg.text(bar_x + 22.0, top + ph, 10.0, "start", "0");
    svg.finish()
}

/// One panel per bi-level setting: target, both estimates and the labels.
pub fn figure1(panels: &[Figure1Panel]) -> String {
    let (pw, ph, gap, left, top) = (320.0, 220.0, 40.0, 40.0, 40.0);
    let width = left + panels.len() as f64 * (pw + gap);
    let mut svg = Svg::new(width, top + ph + 40.0);
    for (k, panel) in panels.iter().enumerate() {
        let x0 = left + k as f64 * (pw + gap);
        let span = panel
            .rows
            .iter()
            .flat_map(|r| [r.eta_star.abs(), r.eta_mni.abs(), r.eta_svm.abs()])
            .fold(1.0, f64::max)
            * 1.05;
        let px = |x: f64| x0 + x * pw;
        let py = |v: f64| top + ph / 2.0 - v / span * ph / 2.0;
        svg.frame(x0, top, pw, ph);
        svg.polyline(&[(px(0.0), py(0.0)), (px(1.0), py(0.0))], "#bbbbbb", 0.5, None);
        let curve = |f: fn(&svplab::experiments::OverlayRow) -> f64| -> Vec<(f64, f64)> {
            panel.rows.iter().map(|r| (px(r.x), py(f(r)))).collect()
        };
        svg.polyline(&curve(|r| r.eta_star), "black", 1.5, None);
        svg.polyline(&curve(|r| r.eta_mni), "#1f77b4", 1.2, None);
        svg.polyline(&curve(|r| r.eta_svm), "#ff7f0e", 1.2, Some("4 3"));
        for (&x, &y) in panel.points.iter().zip(&panel.labels) {
            svg.circle(px(x), py(y), 1.8, if y > 0.0 { "#2ca02c" } else { "#d62728" });
        }
        let verdict = if panel.verdict.counts_as_svp() { "SVP" } else { "no SVP" };
        svg.text(
            x0 + pw / 2.0,
            top - 12.0,
            12.0,
            "middle",
            &format!("({}) q = {}, {verdict}", panel.label, panel.q),
        );
        svg.text(x0, top + ph + 14.0, 10.0, "start", "0");
        svg.text(x0 + pw, top + ph + 14.0, 10.0, "end", "1");
        svg.text(x0 - 4.0, py(1.0) + 3.5, 10.0, "end", "1");
        svg.text(x0 - 4.0, py(-1.0) + 3.5, 10.0, "end", "-1");
    }
    let ly = top + ph + 32.0;
    svg.polyline(&[(left, ly), (left + 20.0, ly)], "black", 1.5, None);
    svg.text(left + 24.0, ly + 3.5, 10.0, "start", "target");
    svg.polyline(&[(left + 90.0, ly), (left + 110.0, ly)], "#1f77b4", 1.2, None);
    svg.text(left + 114.0, ly + 3.5, 10.0, "start", "MNI");
    svg.polyline(&[(left + 160.0, ly), (left + 180.0, ly)], "#ff7f0e", 1.2, Some("4 3"));
    svg.text(left + 184.0, ly + 3.5, 10.0, "start", "SVM");
    svg.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shade_endpoints() {
        assert_eq!(shade(0.0), "#ffffff");
        assert_eq!(shade(1.0), "#08306b");
        assert_eq!(shade(7.0), "#08306b");
    }

    #[test]
    fn boundaries() {
        assert_eq!(bos_boundary(0.4, 3.2), Some(0.3));
        assert_eq!(bos_boundary(0.7, 3.2), None);
        assert_eq!(bos_boundary(0.4, 2.9), None);
        // 3 - 2r - 2q binds for small beta
        assert!((subg_boundary(0.1, 1.5).unwrap() - 0.65).abs() < 1e-12);
        assert!((subg_boundary(0.4, 2.2).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn no_negative_zero() {
        assert_eq!(c(-0.0001), "0.00");
        assert_eq!(c(1.005), "1.00");
    }

    #[test]
    fn escapes_text() {
        let mut s = Svg::new(1.0, 1.0);
        s.text(0.0, 0.0, 1.0, "start", "a<b & c");
        assert!(s.finish().contains("a&lt;b &amp; c"));
    }
}
