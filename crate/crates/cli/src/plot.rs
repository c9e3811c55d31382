//! Static SVG figures from result rows: line charts with error bars and
//! the phase-scan heat map.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};

use crate::config::ExperimentKind;
use crate::rows::ResultRow;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 170.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 60.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];
const VIRIDIS: [(f64, f64, f64); 5] = [(68.0, 1.0, 84.0), (59.0, 82.0, 139.0), (33.0, 145.0, 140.0), (94.0, 201.0, 98.0), (253.0, 231.0, 37.0)];

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    /// `(x, y, error)` points, drawn in the given order.
    pub points: Vec<(f64, f64, Option<f64>)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// `values[iy * xs.len() + ix]`; NaN cells are left blank.
    pub values: Vec<f64>,
}

/// Round tick positions covering `[lo, hi]`.
pub fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let raw = (hi - lo) / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn label(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn viridis(t: f64) -> String {
    let t = t.clamp(0.0, 1.0) * (VIRIDIS.len() - 1) as f64;
    let i = (t.floor() as usize).min(VIRIDIS.len() - 2);
    let f = t - i as f64;
    let (a, b) = (VIRIDIS[i], VIRIDIS[i + 1]);
    let mix = |x: f64, y: f64| (x + (y - x) * f).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        let pad = |a: f64, b: f64| if b > a { (a, b) } else { (a - 0.5 * a.abs().max(1.0), b + 0.5 * b.abs().max(1.0)) };
        let (x0, x1) = pad(x0, x1);
        let (y0, y1) = pad(y0, y1);
        Self { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_L + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_B - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn header(svg: &mut String, title: &str) {
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = write!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = write!(svg, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, (MARGIN_L + WIDTH - MARGIN_R) / 2.0, escape(title));
}

fn axes(svg: &mut String, f: &Frame, x_label: &str, y_label: &str, x_ticks: &[f64], y_ticks: &[f64]) {
    let (l, r, t, b) = (MARGIN_L, WIDTH - MARGIN_R, MARGIN_T, HEIGHT - MARGIN_B);
    let _ = write!(svg, r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#, r - l, b - t);
    for &x in x_ticks {
        let p = f.px(x);
        let _ = write!(svg, r#"<line x1="{p:.2}" y1="{b}" x2="{p:.2}" y2="{}" stroke="black"/>"#, b + 5.0);
        let _ = write!(svg, r#"<text x="{p:.2}" y="{}" text-anchor="middle">{}</text>"#, b + 18.0, label(x));
    }
    for &y in y_ticks {
        let p = f.py(y);
        let _ = write!(svg, r#"<line x1="{}" y1="{p:.2}" x2="{l}" y2="{p:.2}" stroke="black"/>"#, l - 5.0);
        let _ = write!(svg, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, l - 8.0, p + 4.0, label(y));
    }
    let _ = write!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (l + r) / 2.0, HEIGHT - 18.0, escape(x_label));
    let _ = write!(
        svg,
        r#"<text x="20" y="{0}" text-anchor="middle" transform="rotate(-90 20 {0})">{1}</text>"#,
        (t + b) / 2.0,
        escape(y_label)
    );
}

impl LineChart {
    pub fn to_svg(&self) -> String {
        let pts = self.series.iter().flat_map(|s| s.points.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y, e) in pts {
            let e = e.filter(|e| e.is_finite()).unwrap_or(0.0);
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y - e);
            y1 = y1.max(y + e);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        let yp = 0.05 * (y1 - y0);
        let f = Frame::new(x0, x1, y0 - yp, y1 + yp);
        let mut svg = String::new();
        header(&mut svg, &self.title);
        axes(&mut svg, &f, &self.x_label, &self.y_label, &nice_ticks(f.x0, f.x1, 6), &nice_ticks(f.y0, f.y1, 6));
        for (k, s) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let good: Vec<_> = s.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()).collect();
            let path: Vec<String> = good.iter().map(|p| format!("{:.2},{:.2}", f.px(p.0), f.py(p.1))).collect();
            let _ = write!(svg, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, path.join(" "));
            for &&(x, y, e) in &good {
                let (px, py) = (f.px(x), f.py(y));
                if let Some(e) = e.filter(|e| e.is_finite() && *e > 0.0) {
                    let _ = write!(svg, r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="{color}"/>"#, f.py(y - e), f.py(y + e));
                }
                let _ = write!(svg, r#"<circle cx="{px:.2}" cy="{py:.2}" r="3" fill="{color}"/>"#);
            }
            let ly = MARGIN_T + 14.0 + 18.0 * k as f64;
            let lx = WIDTH - MARGIN_R + 12.0;
            let _ = write!(svg, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 18.0);
            let _ = write!(svg, r#"<text x="{}" y="{}">{}</text>"#, lx + 24.0, ly + 4.0, escape(&s.name));
        }
        svg.push_str("</svg>\n");
        svg
    }
}

impl Heatmap {
    pub fn to_svg(&self) -> String {
        let finite: Vec<f64> = self.values.iter().copied().filter(|v| v.is_finite()).collect();
        let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        let half = |v: &[f64]| if v.len() > 1 { (v[1] - v[0]) / 2.0 } else { 0.5 };
        let (hx, hy) = (half(&self.xs), half(&self.ys));
        let f = Frame::new(self.xs[0] - hx, self.xs[self.xs.len() - 1] + hx, self.ys[0] - hy, self.ys[self.ys.len() - 1] + hy);
        let mut svg = String::new();
        header(&mut svg, &self.title);
        for (iy, &y) in self.ys.iter().enumerate() {
            for (ix, &x) in self.xs.iter().enumerate() {
                let v = self.values[iy * self.xs.len() + ix];
                if !v.is_finite() {
                    continue;
                }
                let (xa, xb, ya, yb) = (f.px(x - hx), f.px(x + hx), f.py(y + hy), f.py(y - hy));
                let _ = write!(
                    svg,
                    r#"<rect x="{xa:.2}" y="{ya:.2}" width="{:.2}" height="{:.2}" fill="{}"><title>{}</title></rect>"#,
                    xb - xa,
                    yb - ya,
                    viridis((v - lo) / span),
                    label(v)
                );
            }
        }
        axes(&mut svg, &f, &self.x_label, &self.y_label, &self.xs, &self.ys);
        // color bar
        let (bx, bt, bb) = (WIDTH - MARGIN_R + 20.0, MARGIN_T, HEIGHT - MARGIN_B);
        for k in 0..50 {
            let t0 = k as f64 / 50.0;
            let y = bb - (bb - bt) * (t0 + 0.02);
            let _ = write!(svg, r#"<rect x="{bx}" y="{y:.2}" width="18" height="{:.2}" fill="{}"/>"#, (bb - bt) / 50.0 + 0.5, viridis(t0));
        }
        if lo.is_finite() {
            let _ = write!(svg, r#"<text x="{}" y="{bb}">{}</text>"#, bx + 24.0, label(lo));
            let _ = write!(svg, r#"<text x="{}" y="{}">{}</text>"#, bx + 24.0, bt + 10.0, label(hi));
        }
        svg.push_str("</svg>\n");
        svg
    }
}

/// `key=value` entries of a params label.
fn param(params: &str, key: &str) -> Option<f64> {
    params.split(';').find_map(|kv| kv.strip_prefix(key)?.strip_prefix('=')?.parse().ok())
}

/// Writes the figures for `rows` into `dir` and returns their paths.
pub fn plot_results(rows: &[ResultRow], kind: ExperimentKind, dir: &Path) -> Result<Vec<PathBuf>> {
    ensure!(!rows.is_empty(), "no result rows to plot");
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let id = &rows[0].experiment_id;
    let mut written = Vec::new();
    let mut save = |name: String, svg: String| -> Result<()> {
        let path = dir.join(format!("{id}_{name}.svg"));
        std::fs::write(&path, svg).with_context(|| format!("cannot write {}", path.display()))?;
        written.push(path);
        Ok(())
    };
    let rows: Vec<&ResultRow> = rows.iter().filter(|r| r.method != "failed").collect();
    if kind == ExperimentKind::PhaseScan {
        let mut by_cell: BTreeMap<(usize, Option<usize>), Vec<&ResultRow>> = BTreeMap::new();
        for r in &rows {
            by_cell.entry((r.n, r.chi)).or_default().push(r);
        }
        for ((n, chi), cell) in by_cell {
            let mut xs: Vec<f64> = cell.iter().filter_map(|r| param(&r.params, "jz")).collect();
            let mut ys: Vec<f64> = cell.iter().filter_map(|r| param(&r.params, "d")).collect();
            for v in [&mut xs, &mut ys] {
                v.sort_by(f64::total_cmp);
                v.dedup();
            }
            ensure!(!xs.is_empty() && !ys.is_empty(), "phase-scan rows carry no jz/d parameters");
            let mut values = vec![f64::NAN; xs.len() * ys.len()];
            for r in &cell {
                if let (Some(x), Some(y)) = (param(&r.params, "jz"), param(&r.params, "d")) {
                    let ix = xs.iter().position(|&v| v == x).unwrap();
                    let iy = ys.iter().position(|&v| v == y).unwrap();
                    values[iy * xs.len() + ix] = r.value;
                }
            }
            let chi_s = chi.map(|c| c.to_string()).unwrap_or_default();
            let map = Heatmap { title: format!("m1, N = {n}, chi = {chi_s}"), x_label: "Jz".into(), y_label: "D".into(), xs, ys, values };
            save(format!("m1_N{n}_chi{chi_s}"), map.to_svg())?;
        }
        return Ok(written);
    }
    // one chart per observable; x is chi for chi ladders, N otherwise
    let by_chi = kind == ExperimentKind::SreVsChi;
    let mut charts: BTreeMap<&str, BTreeMap<String, Vec<(f64, f64, Option<f64>)>>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.method != "fit") {
        let (x, series) = if by_chi {
            match r.chi {
                Some(c) => (c as f64, format!("{} N={}", r.method, r.n)),
                None => continue,
            }
        } else {
            (r.n as f64, format!("{} chi={}", r.method, r.chi.map(|c| c.to_string()).unwrap_or_default()))
        };
        charts.entry(r.observable.as_str()).or_default().entry(series).or_default().push((x, r.value, r.std_error));
    }
    for (obs, series) in charts {
        let series = series
            .into_iter()
            .map(|(name, mut points)| {
                points.sort_by(|a, b| a.0.total_cmp(&b.0));
                Series { name, points }
            })
            .collect();
        let chart = LineChart { title: format!("{obs} ({})", kind.name()), x_label: if by_chi { "chi" } else { "N" }.into(), y_label: obs.into(), series };
        save(obs.replace(['/', ' '], "_"), chart.to_svg())?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round_and_cover() {
        assert_eq!(nice_ticks(0.0, 1.0, 5), vec![0.0, 0.2, 0.4, 0.6000000000000001, 0.8, 1.0]);
        let t = nice_ticks(-0.37, 2.9, 6);
        assert_eq!(t, vec![0.0, 1.0, 2.0]);
        assert_eq!(nice_ticks(1.0, 1.0, 5), vec![1.0]);
    }

    #[test]
    fn params_are_parsed() {
        assert_eq!(param("haldane-large-d;jz=0.5;d=0.635", "d"), Some(0.635));
        assert_eq!(param("jz=-0.5;d=2", "jz"), Some(-0.5));
        assert_eq!(param("jz=1", "d"), None);
    }

    #[test]
    fn line_chart_is_well_formed() {
        let chart = LineChart {
            title: "m1 <test>".into(),
            x_label: "chi".into(),
            y_label: "m1".into(),
            series: vec![Series { name: "a".into(), points: vec![(2.0, 0.1, Some(0.01)), (4.0, 0.2, None), (8.0, f64::NAN, None)] }],
        };
        let svg = chart.to_svg();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("m1 &lt;test&gt;"));
        assert_eq!(svg.matches("<circle").count(), 2);
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn heatmap_colors_span_the_map() {
        let map = Heatmap { title: "h".into(), x_label: "Jz".into(), y_label: "D".into(), xs: vec![0.0, 1.0], ys: vec![0.0, 1.0], values: vec![0.0, 1.0, f64::NAN, 0.5] };
        let svg = map.to_svg();
        assert!(svg.contains("#440154") && svg.contains("#fde725"));
        assert_eq!(svg.matches("<title>").count(), 3);
    }
}
