//! CSV series and hand-written SVG 1.1 renderings of a single trajectory and
//! of a convergence-time summary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::experiments::ExperimentSummary;
use crate::io::{csv_bytes, write_atomic};
use crate::trajectory::Snapshot;

/// Largest depth drawn in the per-coordinate panel.
pub const MAX_PLOTTED_COORDS: usize = 16;

pub const TRAJECTORY_CSV: &str = "trajectory.csv";
pub const TRAJECTORY_SVG: &str = "trajectory.svg";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const SUMMARY_SVG: &str = "summary.svg";

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn colour(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

pub fn escape_xml(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

/// Axis-aligned plotting rectangle with a data window mapped onto it.
struct Panel {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
}

impl Panel {
    fn px(&self, x: f64) -> f64 {
        self.x0 + (x - self.xmin) / (self.xmax - self.xmin) * self.w
    }

    fn py(&self, y: f64) -> f64 {
        self.y0 + self.h - (y - self.ymin) / (self.ymax - self.ymin) * self.h
    }

    fn frame(&self, svg: &mut String, title: &str, xlabel: &str, ylabel: &str) {
        let _ = writeln!(
            svg,
            r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#333"/>"##,
            self.x0, self.y0, self.w, self.h
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="14">{}</text>"#,
            self.x0 + self.w / 2.0,
            self.y0 - 10.0,
            escape_xml(title)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="12">{}</text>"#,
            self.x0 + self.w / 2.0,
            self.y0 + self.h + 36.0,
            escape_xml(xlabel)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="12" transform="rotate(-90 {:.1} {:.1})">{}</text>"#,
            self.x0 - 48.0,
            self.y0 + self.h / 2.0,
            self.x0 - 48.0,
            self.y0 + self.h / 2.0,
            escape_xml(ylabel)
        );
        for i in 0..=4 {
            let fx = i as f64 / 4.0;
            let xv = self.xmin + fx * (self.xmax - self.xmin);
            let yv = self.ymin + fx * (self.ymax - self.ymin);
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="10">{}</text>"#,
                self.px(xv),
                self.y0 + self.h + 16.0,
                tick_label(xv)
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-size="10">{}</text>"#,
                self.x0 - 6.0,
                self.py(yv) + 3.0,
                tick_label(yv)
            );
        }
    }

    fn polyline(&self, svg: &mut String, pts: impl Iterator<Item = (f64, f64)>, stroke: &str) {
        let mut attr = String::new();
        for (x, y) in pts {
            let _ = write!(attr, "{:.2},{:.2} ", self.px(x), self.py(y));
        }
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{stroke}" stroke-width="1.5" points="{}"/>"#,
            attr.trim_end()
        );
    }
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e5 || v.abs() < 1e-2 {
        format!("{v:.1e}")
    } else if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn finite_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
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
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn svg_open(width: u32, height: u32) -> String {
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" \
         width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

/// Writes `trajectory.csv` (`t,objective,product,w_1..w_k`) and a two-panel
/// SVG: `log10` objective against `t`, and every coordinate against `t`.
///
/// For `k > 16` the CSV is still written and the SVG is refused.
pub fn export_figure1(snapshots: &[Snapshot], k: usize, dir: &Path) -> Result<Vec<PathBuf>> {
    if snapshots.is_empty() {
        return Err(Error::Plot("trajectory has no snapshots".into()));
    }
    if let Some(s) = snapshots.iter().find(|s| s.coords.len() != k) {
        return Err(Error::Plot(format!("snapshot at t={} has {} coordinates, expected {k}", s.t, s.coords.len())));
    }
    std::fs::create_dir_all(dir)?;

    let mut header = vec!["t".to_string(), "objective".into(), "product".into()];
    header.extend((1..=k).map(|j| format!("w_{j}")));
    let rows = snapshots.iter().map(|s| {
        let mut row = vec![s.t.to_string(), s.objective.to_string(), s.product.to_string()];
        row.extend(s.coords.iter().map(f64::to_string));
        row
    });
    let csv_path = dir.join(TRAJECTORY_CSV);
    write_atomic(&csv_path, &csv_bytes(&header, rows)?)?;

    if k > MAX_PLOTTED_COORDS {
        return Err(Error::Plot(format!(
            "k={k} exceeds {MAX_PLOTTED_COORDS} coordinates for the per-coordinate panel; wrote {} only",
            csv_path.display()
        )));
    }

    let t_max = snapshots.last().map_or(1, |s| s.t).max(1) as f64;
    let log_obj = |o: f64| o.max(1e-300).log10();
    let (olo, ohi) = finite_range(snapshots.iter().map(|s| log_obj(s.objective)));
    let (clo, chi) = finite_range(snapshots.iter().flat_map(|s| s.coords.iter().copied()).chain([0.0]));

    let (width, height) = (960u32, 420u32);
    let mut svg = svg_open(width, height);
    let left = Panel { x0: 80.0, y0: 40.0, w: 340.0, h: 300.0, xmin: 0.0, xmax: t_max, ymin: olo, ymax: ohi };
    left.frame(&mut svg, "objective", "iteration t", "log10 objective");
    left.polyline(&mut svg, snapshots.iter().map(|s| (s.t as f64, log_obj(s.objective))), colour(0));

    let right = Panel { x0: 540.0, y0: 40.0, w: 340.0, h: 300.0, xmin: 0.0, xmax: t_max, ymin: clo, ymax: chi };
    right.frame(&mut svg, "coordinates", "iteration t", "value");
    let _ = writeln!(
        svg,
        r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#999" stroke-dasharray="4 3"/>"##,
        right.px(0.0),
        right.py(0.0),
        right.px(t_max),
        right.py(0.0)
    );
    for j in 0..k {
        right.polyline(&mut svg, snapshots.iter().map(|s| (s.t as f64, s.coords[j])), colour(j));
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" fill="{}">w_{}</text>"#,
            right.x0 + right.w + 8.0,
            right.y0 + 12.0 + 13.0 * j as f64,
            colour(j),
            j + 1
        );
    }
    svg.push_str("</svg>\n");
    let svg_path = dir.join(TRAJECTORY_SVG);
    write_atomic(&svg_path, svg.as_bytes())?;
    Ok(vec![csv_path, svg_path])
}

fn opt_cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Writes `summary.csv` and a grouped bar chart of mean log-iterations per
/// depth, one bar per scheme, with ±1 std whiskers and the NC percentage
/// above each bar. An empty summary is an error and writes nothing.
pub fn export_figure2(summary: &ExperimentSummary, dir: &Path) -> Result<Vec<PathBuf>> {
    if summary.is_empty() {
        return Err(Error::Plot("summary is empty".into()));
    }
    std::fs::create_dir_all(dir)?;

    let header: Vec<String> = ["scheme", "k", "n_trials", "n_converged", "nc_percent", "mean_log_iters", "std_log_iters"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows = summary.rows.iter().map(|r| {
        vec![
            r.scheme.clone(),
            r.k.to_string(),
            r.n_trials.to_string(),
            r.n_converged.to_string(),
            r.nc_percent.to_string(),
            opt_cell(r.mean_log_iters),
            opt_cell(r.std_log_iters),
        ]
    });
    let csv_path = dir.join(SUMMARY_CSV);
    write_atomic(&csv_path, &csv_bytes(&header, rows)?)?;

    let schemes = summary.schemes();
    let mut depths: Vec<usize> = summary.rows.iter().map(|r| r.k).collect();
    depths.sort_unstable();
    depths.dedup();
    let ymax = summary
        .rows
        .iter()
        .filter_map(|r| r.mean_log_iters.map(|m| m + r.std_log_iters.unwrap_or(0.0)))
        .fold(1.0f64, f64::max)
        * 1.15;

    let plot_w = (120 * depths.len() * schemes.len()).clamp(360, 1600) as f64;
    let width = (plot_w + 280.0) as u32;
    let height = 460u32;
    let mut svg = svg_open(width, height);
    let panel = Panel { x0: 80.0, y0: 40.0, w: plot_w, h: 340.0, xmin: 0.0, xmax: depths.len() as f64, ymin: 0.0, ymax };
    let _ = writeln!(
        svg,
        r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#333"/>"##,
        panel.x0, panel.y0, panel.w, panel.h
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="14">mean ln(iterations) over converged trials</text>"#,
        panel.x0 + panel.w / 2.0
    );
    for i in 0..=4 {
        let yv = ymax * i as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-size="10">{:.1}</text>"#,
            panel.x0 - 6.0,
            panel.py(yv) + 3.0,
            yv
        );
    }

    let group_w = panel.w / depths.len() as f64;
    let bar_w = 0.8 * group_w / schemes.len() as f64;
    for (gi, &k) in depths.iter().enumerate() {
        let gx = panel.x0 + gi as f64 * group_w + 0.1 * group_w;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="12">k={k}</text>"#,
            panel.x0 + (gi as f64 + 0.5) * group_w,
            panel.y0 + panel.h + 20.0
        );
        for (si, scheme) in schemes.iter().enumerate() {
            let Some(row) = summary.row(scheme, k) else { continue };
            let cx = gx + (si as f64 + 0.5) * bar_w;
            let nc_y = if let Some(mean) = row.mean_log_iters {
                let top = panel.py(mean);
                let _ = writeln!(
                    svg,
                    r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{}"/>"#,
                    cx - bar_w / 2.0 + 1.0,
                    top,
                    bar_w - 2.0,
                    panel.py(0.0) - top,
                    colour(si)
                );
                let mut label_y = top;
                if let Some(sd) = row.std_log_iters {
                    let (hi, lo) = (panel.py(mean + sd), panel.py((mean - sd).max(0.0)));
                    let _ = writeln!(
                        svg,
                        r##"<path d="M{cx:.1} {hi:.1} V{lo:.1} M{:.1} {hi:.1} H{:.1} M{:.1} {lo:.1} H{:.1}" stroke="#000" fill="none"/>"##,
                        cx - 4.0,
                        cx + 4.0,
                        cx - 4.0,
                        cx + 4.0
                    );
                    label_y = hi;
                }
                label_y
            } else {
                panel.py(0.0)
            };
            let _ = writeln!(
                svg,
                r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle" font-size="9">NC {:.0}%</text>"#,
                nc_y - 4.0,
                row.nc_percent
            );
        }
    }
    for (si, scheme) in schemes.iter().enumerate() {
        let ly = panel.y0 + 14.0 + 18.0 * si as f64;
        let lx = panel.x0 + panel.w + 20.0;
        let _ = writeln!(svg, r#"<rect x="{lx:.1}" y="{:.1}" width="12" height="12" fill="{}"/>"#, ly - 10.0, colour(si));
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{ly:.1}" font-size="11">{}</text>"#, lx + 18.0, escape_xml(scheme));
    }
    svg.push_str("</svg>\n");
    let svg_path = dir.join(SUMMARY_SVG);
    write_atomic(&svg_path, svg.as_bytes())?;
    Ok(vec![csv_path, svg_path])
}
