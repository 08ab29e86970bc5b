//! Self-contained SVG rendering for experiment tables.
//!
//! Every renderer reads the CSV files a driver wrote and produces a
//! single standalone SVG file — no external stylesheets, fonts, or
//! scripts — so the plots can be opened anywhere the CSV travels.
//! Renderers return `Ok(None)` when their input table is absent, which
//! lets callers render whatever subset of tables an output directory
//! holds.

use std::path::{Path, PathBuf};

use crate::experiments::{report, ExperimentError};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 60.0;
const PANEL_HEIGHT: f64 = 150.0;
const TICKS: usize = 5;
const LEGEND_CAP: usize = 10;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

/// One plotted line.
pub struct Series {
    pub label: String,
    pub color: usize,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
    pub stroke_width: f64,
}

impl Series {
    pub fn new(label: impl Into<String>, color: usize, points: Vec<(f64, f64)>) -> Self {
        Self {
            label: label.into(),
            color,
            points,
            dashed: false,
            stroke_width: 1.2,
        }
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self.stroke_width = 2.0;
        self
    }
}

fn esc(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e4).contains(&a) {
        return format!("{v:.1e}");
    }
    let mut s = format!("{v:.4}");
    while s.ends_with('0') {
        s.pop();
    }
    if s.ends_with('.') {
        s.pop();
    }
    s
}

/// Widens a degenerate range so every plot has nonzero extent.
fn pad_range(lo: f64, hi: f64) -> (f64, f64) {
    if lo < hi {
        (lo, hi)
    } else {
        let pad = 0.01 * lo.abs() + 0.5;
        (lo - pad, hi + pad)
    }
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    /// Fits the axis to data already filtered for the scale.
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Option<Axis> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in values {
            let t = if log { v.ln() } else { v };
            if t.is_finite() {
                lo = lo.min(t);
                hi = hi.max(t);
            }
        }
        if !lo.is_finite() {
            return None;
        }
        let (lo, hi) = pad_range(lo, hi);
        Some(Axis { lo, hi, log })
    }

    fn transform(&self, v: f64) -> f64 {
        if self.log {
            v.ln()
        } else {
            v
        }
    }

    fn fraction(&self, v: f64) -> f64 {
        (self.transform(v) - self.lo) / (self.hi - self.lo)
    }

    fn tick_values(&self) -> Vec<(f64, String)> {
        (0..TICKS)
            .map(|i| {
                let t = self.lo + (self.hi - self.lo) * i as f64 / (TICKS - 1) as f64;
                let label = if self.log { t.exp() } else { t };
                (t, tick_label(label))
            })
            .collect()
    }
}

fn keeps(point: &(f64, f64), log_x: bool, log_y: bool) -> bool {
    point.0.is_finite()
        && point.1.is_finite()
        && (!log_x || point.0 > 0.0)
        && (!log_y || point.1 > 0.0)
}

/// Renders a titled multi-series line plot; logarithmic axes skip
/// non-positive coordinates.
pub fn line_plot(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    log_x: bool,
    log_y: bool,
) -> String {
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"monospace\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        WIDTH / 2.0,
        esc(title)
    ));

    let kept: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            s.points
                .iter()
                .copied()
                .filter(|p| keeps(p, log_x, log_y))
                .collect()
        })
        .collect();
    let x_axis = Axis::fit(kept.iter().flatten().map(|p| p.0), log_x);
    let y_axis = Axis::fit(kept.iter().flatten().map(|p| p.1), log_y);
    let (Some(x_axis), Some(y_axis)) = (x_axis, y_axis) else {
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">no finite data</text>\n</svg>\n",
            WIDTH / 2.0,
            HEIGHT / 2.0
        ));
        return svg;
    };
    let px = |v: f64| MARGIN_LEFT + x_axis.fraction(v) * plot_w;
    let py = |v: f64| MARGIN_TOP + (1.0 - y_axis.fraction(v)) * plot_h;

    // frame, grid, ticks
    svg.push_str(&format!(
        "<rect x=\"{MARGIN_LEFT}\" y=\"{MARGIN_TOP}\" width=\"{plot_w:.2}\" \
         height=\"{plot_h:.2}\" fill=\"none\" stroke=\"#333\"/>\n"
    ));
    for (t, label) in x_axis.tick_values() {
        let x = MARGIN_LEFT + (t - x_axis.lo) / (x_axis.hi - x_axis.lo) * plot_w;
        svg.push_str(&format!(
            "<line x1=\"{x:.2}\" y1=\"{MARGIN_TOP}\" x2=\"{x:.2}\" y2=\"{:.2}\" \
             stroke=\"#ddd\"/>\n",
            MARGIN_TOP + plot_h
        ));
        svg.push_str(&format!(
            "<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>\n",
            MARGIN_TOP + plot_h + 18.0,
            esc(&label)
        ));
    }
    for (t, label) in y_axis.tick_values() {
        let y = MARGIN_TOP + (1.0 - (t - y_axis.lo) / (y_axis.hi - y_axis.lo)) * plot_h;
        svg.push_str(&format!(
            "<line x1=\"{MARGIN_LEFT}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" \
             stroke=\"#ddd\"/>\n",
            MARGIN_LEFT + plot_w
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>\n",
            MARGIN_LEFT - 6.0,
            y + 4.0,
            esc(&label)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 14.0,
        esc(x_label)
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{:.2}\" text-anchor=\"middle\" \
         transform=\"rotate(-90 16 {:.2})\">{}</text>\n",
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0,
        esc(y_label)
    ));

    // series
    for (s, points) in series.iter().zip(&kept) {
        if points.is_empty() {
            continue;
        }
        let color = PALETTE[s.color % PALETTE.len()];
        let dash = if s.dashed {
            " stroke-dasharray=\"6 4\""
        } else {
            ""
        };
        let coords: Vec<String> = points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        if coords.len() == 1 {
            let (x, y) = points[0];
            svg.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>\n",
                px(x),
                py(y)
            ));
        } else {
            svg.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" \
                 stroke-width=\"{:.1}\"{dash}/>\n",
                coords.join(" "),
                s.stroke_width
            ));
        }
    }

    // legend: first series per distinct label, capped
    let mut seen: Vec<(&str, usize, bool)> = Vec::new();
    for s in series {
        if !seen.iter().any(|(l, _, _)| *l == s.label) {
            seen.push((&s.label, s.color, s.dashed));
        }
    }
    let extra = seen.len().saturating_sub(LEGEND_CAP);
    seen.truncate(LEGEND_CAP);
    let legend_x = MARGIN_LEFT + plot_w - 150.0;
    let legend_h = 16.0 * (seen.len() + usize::from(extra > 0)) as f64 + 8.0;
    svg.push_str(&format!(
        "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"146\" height=\"{legend_h:.2}\" \
         fill=\"white\" fill-opacity=\"0.85\" stroke=\"#999\"/>\n",
        legend_x - 4.0,
        MARGIN_TOP + 4.0
    ));
    for (i, (label, color, dashed)) in seen.iter().enumerate() {
        let y = MARGIN_TOP + 16.0 * (i + 1) as f64;
        let dash = if *dashed {
            " stroke-dasharray=\"6 4\""
        } else {
            ""
        };
        svg.push_str(&format!(
            "<line x1=\"{legend_x:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" \
             stroke=\"{}\" stroke-width=\"2\"{dash}/>\n",
            y - 4.0,
            legend_x + 20.0,
            y - 4.0,
            PALETTE[color % PALETTE.len()]
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{y:.2}\">{}</text>\n",
            legend_x + 26.0,
            esc(label)
        ));
    }
    if extra > 0 {
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\">(+{extra} more)</text>\n",
            legend_x + 26.0,
            MARGIN_TOP + 16.0 * (seen.len() + 1) as f64
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// One histogram panel: a label, the sample, and an optional vertical
/// reference marker.
pub struct HistogramGroup {
    pub label: String,
    pub values: Vec<f64>,
    pub marker: Option<f64>,
}

/// Freedman–Diaconis bin count over a sorted sample, clamped to a range
/// that stays readable at desk scale.
fn bin_count(sorted: &[f64]) -> usize {
    let n = sorted.len();
    if n < 2 {
        return 8;
    }
    let q = |f: f64| -> f64 {
        let pos = f * (n - 1) as f64;
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        if i + 1 < n {
            sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
        } else {
            sorted[i]
        }
    };
    let iqr = q(0.75) - q(0.25);
    let range = sorted[n - 1] - sorted[0];
    if iqr <= 0.0 || range <= 0.0 {
        return 8;
    }
    let width = 2.0 * iqr / (n as f64).cbrt();
    ((range / width).ceil() as usize).clamp(8, 60)
}

/// Renders stacked histogram panels sharing one horizontal axis.
pub fn histogram_panels(title: &str, x_label: &str, groups: &[HistogramGroup]) -> String {
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let height = MARGIN_TOP + PANEL_HEIGHT * groups.len() as f64 + MARGIN_BOTTOM;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{height:.2}\" \
         viewBox=\"0 0 {WIDTH} {height:.2}\" font-family=\"monospace\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{WIDTH}\" height=\"{height:.2}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        WIDTH / 2.0,
        esc(title)
    ));

    let finite: Vec<f64> = groups
        .iter()
        .flat_map(|g| g.values.iter().copied())
        .chain(groups.iter().filter_map(|g| g.marker))
        .filter(|v| v.is_finite())
        .collect();
    let Some(axis) = Axis::fit(finite.iter().copied(), false) else {
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">no finite data</text>\n</svg>\n",
            WIDTH / 2.0,
            height / 2.0
        ));
        return svg;
    };
    let px = |v: f64| MARGIN_LEFT + axis.fraction(v) * plot_w;

    for (gi, group) in groups.iter().enumerate() {
        let top = MARGIN_TOP + PANEL_HEIGHT * gi as f64 + 10.0;
        let bar_h = PANEL_HEIGHT - 34.0;
        let mut sorted: Vec<f64> = group
            .values
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .collect();
        sorted.sort_by(f64::total_cmp);
        svg.push_str(&format!(
            "<rect x=\"{MARGIN_LEFT}\" y=\"{top:.2}\" width=\"{plot_w:.2}\" \
             height=\"{bar_h:.2}\" fill=\"none\" stroke=\"#333\"/>\n"
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\">{}</text>\n",
            MARGIN_LEFT + 6.0,
            top + 14.0,
            esc(&group.label)
        ));
        if !sorted.is_empty() {
            let bins = bin_count(&sorted);
            let mut counts = vec![0usize; bins];
            for &v in &sorted {
                let f = axis.fraction(v).clamp(0.0, 1.0);
                let idx = ((f * bins as f64) as usize).min(bins - 1);
                counts[idx] += 1;
            }
            let peak = *counts.iter().max().unwrap() as f64;
            let bin_w = plot_w / bins as f64;
            for (bi, &count) in counts.iter().enumerate() {
                if count == 0 {
                    continue;
                }
                let h = bar_h * count as f64 / peak;
                svg.push_str(&format!(
                    "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{h:.2}\" \
                     fill=\"{}\" fill-opacity=\"0.75\"/>\n",
                    MARGIN_LEFT + bin_w * bi as f64,
                    top + bar_h - h,
                    (bin_w - 1.0).max(1.0),
                    PALETTE[gi % PALETTE.len()]
                ));
            }
            svg.push_str(&format!(
                "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">n={} peak={}</text>\n",
                MARGIN_LEFT + plot_w - 6.0,
                top + 14.0,
                sorted.len(),
                peak
            ));
        }
        if let Some(marker) = group.marker.filter(|m| m.is_finite()) {
            let x = px(marker);
            svg.push_str(&format!(
                "<line x1=\"{x:.2}\" y1=\"{top:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" \
                 stroke=\"#d62728\" stroke-width=\"1.5\" stroke-dasharray=\"4 3\"/>\n",
                top + bar_h
            ));
        }
    }

    // shared horizontal axis under the last panel
    let axis_y = MARGIN_TOP + PANEL_HEIGHT * groups.len() as f64;
    for (t, label) in axis.tick_values() {
        let x = MARGIN_LEFT + (t - axis.lo) / (axis.hi - axis.lo) * plot_w;
        svg.push_str(&format!(
            "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{axis_y:.2}\" \
             stroke=\"#333\"/>\n",
            axis_y - 4.0
        ));
        svg.push_str(&format!(
            "<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>\n",
            axis_y + 16.0,
            esc(&label)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        axis_y + 36.0,
        esc(x_label)
    ));
    svg.push_str("</svg>\n");
    svg
}

fn read_if_present(path: &Path) -> Result<Option<report::Csv>, ExperimentError> {
    if path.exists() {
        report::read_csv(path).map(Some)
    } else {
        Ok(None)
    }
}

/// Distinct values in first-appearance order.
fn distinct(values: &[String]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for v in values {
        if !out.contains(v) {
            out.push(v.clone());
        }
    }
    out
}

/// Histograms of the estimates per sweep cell, with the true parameter
/// marked. Reads `estimates.csv`; returns `Ok(None)` if it is absent.
pub fn render_estimates(out_dir: &Path) -> Result<Option<PathBuf>, ExperimentError> {
    let Some(table) = read_if_present(&out_dir.join("estimates.csv"))? else {
        return Ok(None);
    };
    let ms = table.strings("m")?;
    let ns = table.strings("n")?;
    let hats = table.floats("theta_hat")?;
    let stars = table.floats("theta_star")?;
    let cells: Vec<String> = ms
        .iter()
        .zip(&ns)
        .map(|(m, n)| format!("m={m} n={n}"))
        .collect();
    let groups: Vec<HistogramGroup> = distinct(&cells)
        .into_iter()
        .map(|label| {
            let values: Vec<f64> = cells
                .iter()
                .zip(&hats)
                .filter(|(c, _)| **c == label)
                .map(|(_, &h)| h)
                .collect();
            let marker = cells
                .iter()
                .zip(&stars)
                .find(|(c, _)| **c == label)
                .map(|(_, &s)| s);
            HistogramGroup {
                label,
                values,
                marker,
            }
        })
        .collect();
    let svg = histogram_panels(
        "Estimates by sweep cell (dashed: true parameter)",
        "estimate",
        &groups,
    );
    let path = out_dir.join("estimates_hist.svg");
    std::fs::write(&path, svg)?;
    Ok(Some(path))
}

/// Per-replicate empirical loss curves next to the analytic limit curve.
/// Reads `loss_curves.csv` and, when present, `limit_curve.csv`.
pub fn render_loss_curves(out_dir: &Path) -> Result<Option<PathBuf>, ExperimentError> {
    let Some(table) = read_if_present(&out_dir.join("loss_curves.csv"))? else {
        return Ok(None);
    };
    let ms = table.strings("m")?;
    let ns = table.strings("n")?;
    let reps = table.strings("replicate")?;
    let thetas = table.floats("theta")?;
    let losses = table.floats("loss")?;

    let cells: Vec<String> = ms
        .iter()
        .zip(&ns)
        .map(|(m, n)| format!("m={m} n={n}"))
        .collect();
    let cell_order = distinct(&cells);
    let mut series = Vec::new();
    for (ci, cell) in cell_order.iter().enumerate() {
        let curve_ids: Vec<String> = reps
            .iter()
            .zip(&cells)
            .filter(|(_, c)| *c == cell)
            .map(|(r, _)| r.clone())
            .collect();
        for rep in distinct(&curve_ids) {
            let points: Vec<(f64, f64)> = (0..thetas.len())
                .filter(|&i| cells[i] == *cell && reps[i] == rep)
                .map(|i| (thetas[i], losses[i]))
                .collect();
            series.push(Series::new(cell.clone(), ci, points));
        }
    }
    if let Some(limit) = read_if_present(&out_dir.join("limit_curve.csv"))? {
        let thetas = limit.floats("theta")?;
        let values = limit.floats("limit_loss")?;
        series.push(
            Series::new(
                "large-batch limit",
                PALETTE.len() - 1,
                thetas.into_iter().zip(values).collect(),
            )
            .dashed(),
        );
    }
    let svg = line_plot(
        "Empirical loss curves and analytic limit",
        "theta",
        "loss",
        &series,
        false,
        false,
    );
    let path = out_dir.join("loss_curves.svg");
    std::fs::write(&path, svg)?;
    Ok(Some(path))
}

/// Coefficient of variation against batch size, one line per true
/// parameter and sample count. Reads `cv_sweep.csv`.
pub fn render_cv_sweep(out_dir: &Path) -> Result<Option<PathBuf>, ExperimentError> {
    let Some(table) = read_if_present(&out_dir.join("cv_sweep.csv"))? else {
        return Ok(None);
    };
    let stars = table.strings("theta_star")?;
    let ns = table.strings("n")?;
    let ms = table.floats("m")?;
    let cvs = table.floats("cv")?;
    let keys: Vec<String> = stars
        .iter()
        .zip(&ns)
        .map(|(s, n)| {
            let short: f64 = s.parse().unwrap_or(f64::NAN);
            format!("true={} n={n}", tick_label(short))
        })
        .collect();
    let series: Vec<Series> = distinct(&keys)
        .into_iter()
        .enumerate()
        .map(|(ki, key)| {
            let points: Vec<(f64, f64)> = (0..ms.len())
                .filter(|&i| keys[i] == key)
                .map(|i| (ms[i], cvs[i]))
                .collect();
            Series::new(key, ki, points)
        })
        .collect();
    let svg = line_plot(
        "Estimator dispersion against batch size",
        "batch size m (log)",
        "coefficient of variation",
        &series,
        true,
        false,
    );
    let path = out_dir.join("cv_sweep.svg");
    std::fs::write(&path, svg)?;
    Ok(Some(path))
}

/// Log-log gap between the exact expected loss and its limit against
/// batch size. Reads `limit_convergence.csv`.
pub fn render_limit_convergence(out_dir: &Path) -> Result<Option<PathBuf>, ExperimentError> {
    let Some(table) = read_if_present(&out_dir.join("limit_convergence.csv"))? else {
        return Ok(None);
    };
    let thetas = table.strings("theta")?;
    let ms = table.floats("m")?;
    let errs = table.floats("abs_err")?;
    let keys: Vec<String> = thetas
        .iter()
        .map(|t| {
            let v: f64 = t.parse().unwrap_or(f64::NAN);
            format!("theta={}", tick_label(v))
        })
        .collect();
    let series: Vec<Series> = distinct(&keys)
        .into_iter()
        .enumerate()
        .map(|(ki, key)| {
            let points: Vec<(f64, f64)> = (0..ms.len())
                .filter(|&i| keys[i] == key)
                .map(|i| (ms[i], errs[i]))
                .collect();
            Series::new(key, ki, points)
        })
        .collect();
    let svg = line_plot(
        "Expected-loss gap to the limit (log-log)",
        "batch size m (log)",
        "|expected - limit| (log)",
        &series,
        true,
        true,
    );
    let path = out_dir.join("limit_convergence.svg");
    std::fs::write(&path, svg)?;
    Ok(Some(path))
}

/// Renders every plot whose input table exists in `out_dir`; errors if
/// none of the known tables are present.
pub fn render_out_dir(out_dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    let mut files = Vec::new();
    for render in [
        render_estimates,
        render_loss_curves,
        render_cv_sweep,
        render_limit_convergence,
    ] {
        if let Some(path) = render(out_dir)? {
            files.push(path);
        }
    }
    if files.is_empty() {
        return Err(ExperimentError::MissingInput(out_dir.to_path_buf()));
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_plot_is_wellformed_and_escapes_labels() {
        let series = [Series::new(
            "a<b & \"c\"",
            0,
            vec![(0.0, 1.0), (1.0, 2.0), (2.0, 0.5)],
        )];
        let svg = line_plot("t<itle>", "x&y", "y", &series, false, false);
        assert!(svg.starts_with("<svg "));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a&lt;b &amp; &quot;c&quot;"));
        assert!(svg.contains("t&lt;itle&gt;"));
        assert!(svg.contains("<polyline"));
        assert!(!svg.contains("a<b"));
    }

    #[test]
    fn log_axes_drop_nonpositive_points() {
        let series = [Series::new(
            "s",
            0,
            vec![(0.0, 1.0), (1.0, -2.0), (2.0, 4.0), (4.0, 8.0)],
        )];
        let svg = line_plot("t", "x", "y", &series, true, true);
        // only (2,4) and (4,8) survive, so one polyline with two points
        let polylines = svg.matches("<polyline").count();
        assert_eq!(polylines, 1);
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn empty_series_produce_a_placeholder() {
        let series = [Series::new("s", 0, vec![(f64::NAN, 1.0)])];
        let svg = line_plot("t", "x", "y", &series, false, false);
        assert!(svg.contains("no finite data"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn histogram_bins_follow_spread() {
        let narrow: Vec<f64> = (0..100).map(|i| 0.5 + 1e-9 * i as f64).collect();
        let mut sorted = narrow.clone();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(bin_count(&sorted), 8);
        let wide: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.377).sin()).collect();
        let mut sorted = wide;
        sorted.sort_by(f64::total_cmp);
        let bins = bin_count(&sorted);
        assert!((8..=60).contains(&bins), "{bins}");
    }

    #[test]
    fn histogram_panels_stack_per_group() {
        let groups = [
            HistogramGroup {
                label: "m=5".into(),
                values: vec![0.1, 0.11, 0.12, 0.1, 0.13],
                marker: Some(0.1),
            },
            HistogramGroup {
                label: "m=20".into(),
                values: vec![0.1, 0.105, 0.1, 0.099],
                marker: Some(0.1),
            },
        ];
        let svg = histogram_panels("title", "estimate", &groups);
        assert!(svg.contains("m=5"));
        assert!(svg.contains("m=20"));
        assert!(svg.contains("stroke-dasharray"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn rendering_an_empty_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            render_out_dir(dir.path()),
            Err(ExperimentError::MissingInput(_))
        ));
    }

    #[test]
    fn renderers_skip_absent_tables() {
        let dir = tempfile::tempdir().unwrap();
        assert!(render_estimates(dir.path()).unwrap().is_none());
        assert!(render_loss_curves(dir.path()).unwrap().is_none());
        assert!(render_cv_sweep(dir.path()).unwrap().is_none());
        assert!(render_limit_convergence(dir.path()).unwrap().is_none());
    }

    #[test]
    fn render_estimates_reads_the_table() {
        let dir = tempfile::tempdir().unwrap();
        report::write_csv(
            &dir.path().join("estimates.csv"),
            &[
                "replicate",
                "m",
                "n",
                "param_name",
                "theta_star",
                "theta_hat",
                "loss_at_hat",
            ],
            &[
                vec![
                    "0".into(),
                    "5".into(),
                    "50".into(),
                    "sigma".into(),
                    report::fmt(0.1),
                    report::fmt(0.11),
                    report::fmt(-3.2),
                ],
                vec![
                    "1".into(),
                    "5".into(),
                    "50".into(),
                    "sigma".into(),
                    report::fmt(0.1),
                    report::fmt(0.09),
                    report::fmt(-3.1),
                ],
            ],
        )
        .unwrap();
        let path = render_estimates(dir.path()).unwrap().unwrap();
        let svg = std::fs::read_to_string(path).unwrap();
        assert!(svg.contains("m=5 n=50"));
    }
}
