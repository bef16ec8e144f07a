//! CSV tables and self-contained SVG line plots.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::ParameterError;
use crate::error::{Error, Result};
use crate::rom::PodGprRom;

const PANEL_W: f64 = 800.0;
const PANEL_H: f64 = 600.0;
const LEFT: f64 = 90.0;
const RIGHT: f64 = 770.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 530.0;

/// Files written by one plot call.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlotFiles {
    pub csv: PathBuf,
    pub svg: PathBuf,
}

impl PlotFiles {
    fn for_stem(stem: &Path) -> Self {
        Self {
            csv: stem.with_extension("csv"),
            svg: stem.with_extension("svg"),
        }
    }
}

struct Series {
    points: Vec<(f64, f64)>,
    color: &'static str,
    label: &'static str,
    line: bool,
    markers: bool,
}

struct Panel {
    title: String,
    x_label: &'static str,
    y_label: &'static str,
    /// `(x, lo, hi)` rows of a shaded band.
    band: Vec<(f64, f64, f64)>,
    series: Vec<Series>,
}

impl Panel {
    fn bounds(&self) -> ((f64, f64), (f64, f64)) {
        let xs = self
            .band
            .iter()
            .map(|b| b.0)
            .chain(self.series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
        let ys = self
            .band
            .iter()
            .flat_map(|b| [b.1, b.2])
            .chain(self.series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
        (span(xs), span(ys))
    }
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if lo > hi {
        return (0.0, 1.0);
    }
    if lo == hi {
        let pad = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Round tick positions covering `[lo, hi]`, with a 1/2/5 step.
fn ticks(lo: f64, hi: f64) -> (Vec<f64>, usize) {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    ((first..=last).map(|i| i as f64 * step).collect(), decimals)
}

fn render(panels: &[Panel]) -> String {
    let height = PANEL_H * panels.len().max(1) as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{PANEL_W}" height="{height}" viewBox="0 0 {PANEL_W} {height}" font-family="sans-serif" font-size="14">"#
    );
    for (k, p) in panels.iter().enumerate() {
        let ((x0, x1), (y0, y1)) = p.bounds();
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * (RIGHT - LEFT);
        let sy = |y: f64| BOTTOM - (y - y0) / (y1 - y0) * (BOTTOM - TOP);
        let _ = writeln!(s, r#"<g transform="translate(0,{})">"#, k as f64 * PANEL_H);
        let _ = writeln!(s, r#"<rect x="0" y="0" width="{PANEL_W}" height="{PANEL_H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="30" text-anchor="middle" font-size="18">{}</text>"#,
            PANEL_W / 2.0,
            xml_escape(&p.title)
        );

        let (xt, xd) = ticks(x0, x1);
        for t in xt {
            let x = sx(t);
            let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{BOTTOM}" x2="{x:.2}" y2="{TOP}" stroke="#e0e0e0"/>"##);
            let _ = writeln!(s, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{t:.xd$}</text>"#, BOTTOM + 20.0);
        }
        let (yt, yd) = ticks(y0, y1);
        for t in yt {
            let y = sy(t);
            let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{RIGHT}" y2="{y:.2}" stroke="#e0e0e0"/>"##);
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{:.2}" text-anchor="end">{t:.yd$}</text>"#,
                LEFT - 6.0,
                y + 5.0
            );
        }
        let _ = writeln!(
            s,
            r#"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            RIGHT - LEFT,
            BOTTOM - TOP
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            (LEFT + RIGHT) / 2.0,
            BOTTOM + 50.0,
            p.x_label
        );
        let _ = writeln!(
            s,
            r#"<text x="20" y="{y}" text-anchor="middle" transform="rotate(-90 20 {y})">{}</text>"#,
            p.y_label,
            y = (TOP + BOTTOM) / 2.0
        );

        if !p.band.is_empty() {
            let mut pts = String::new();
            for &(x, _, hi) in &p.band {
                let _ = write!(pts, "{:.2},{:.2} ", sx(x), sy(hi));
            }
            for &(x, lo, _) in p.band.iter().rev() {
                let _ = write!(pts, "{:.2},{:.2} ", sx(x), sy(lo));
            }
            let _ = writeln!(
                s,
                r##"<polygon points="{}" fill="#1f77b4" fill-opacity="0.2" stroke="none"/>"##,
                pts.trim_end()
            );
        }
        for (i, series) in p.series.iter().enumerate() {
            if series.line && !series.points.is_empty() {
                let pts: Vec<String> = series.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
                let _ = writeln!(
                    s,
                    r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>"#,
                    pts.join(" "),
                    series.color
                );
            }
            if series.markers {
                for &(x, y) in &series.points {
                    let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{}"/>"#, sx(x), sy(y), series.color);
                }
            }
            let ly = TOP + 20.0 + 20.0 * i as f64;
            let _ = writeln!(
                s,
                r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="3"/><text x="{}" y="{}">{}</text>"#,
                RIGHT - 150.0,
                RIGHT - 125.0,
                series.color,
                RIGHT - 118.0,
                ly + 5.0,
                series.label
            );
        }
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::format(path, e.to_string());
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::format(path, e.to_string()))?;
    write_text(path, &String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn sorted_by_dt(dts: &[f64]) -> Vec<f64> {
    let mut v = dts.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Posterior mean and 95% band of the first `first_k` POD coefficients
/// over `dts`, with the training coefficients as markers. Writes
/// `<stem>.csv` and `<stem>.svg`.
pub fn emit_coefficient_plot(rom: &PodGprRom, dts: &[f64], first_k: usize, stem: &Path) -> Result<PlotFiles> {
    if first_k > rom.rank() {
        return Err(Error::Config(format!("requested {first_k} modes but the ROM keeps {}", rom.rank())));
    }
    let files = PlotFiles::for_stem(stem);
    let mut header = vec!["dt".to_string()];
    for j in 1..=first_k {
        header.extend([format!("mode_{j}_mean"), format!("mode_{j}_lo"), format!("mode_{j}_hi")]);
    }
    let posts: Vec<_> = dts.iter().map(|&dt| (dt, rom.coefficient_posteriors(dt))).collect();
    let rows: Vec<Vec<f64>> = posts
        .iter()
        .map(|(dt, post)| {
            let mut row = vec![*dt];
            for p in &post[..first_k] {
                let (lo, hi) = p.ci95();
                row.extend([p.mean, lo, hi]);
            }
            row
        })
        .collect();
    write_csv(&files.csv, &header, &rows)?;

    let order = sorted_by_dt(dts);
    let norm = rom.input_norm();
    let panels: Vec<Panel> = (0..first_k)
        .map(|j| {
            let at = |dt: f64| rom.coefficient_posteriors(dt)[j];
            let band = order
                .iter()
                .map(|&dt| {
                    let (lo, hi) = at(dt).ci95();
                    (dt, lo, hi)
                })
                .collect();
            let mean = order.iter().map(|&dt| (dt, at(dt).mean)).collect();
            let gp = &rom.gprs()[j];
            let training = gp
                .train_inputs()
                .iter()
                .zip(gp.train_targets())
                .map(|(&u, &a)| (norm.invert(u), a))
                .collect();
            Panel {
                title: format!("POD coefficient {}", j + 1),
                x_label: "dwell time [s]",
                y_label: "coefficient",
                band,
                series: vec![
                    Series {
                        points: mean,
                        color: "#1f77b4",
                        label: "GPR mean",
                        line: true,
                        markers: false,
                    },
                    Series {
                        points: training,
                        color: "#d62728",
                        label: "training",
                        line: false,
                        markers: true,
                    },
                ],
            }
        })
        .collect();
    write_text(&files.svg, &render(&panels))?;
    Ok(files)
}

/// Predicted and true maximum displacement against dwell time. Writes
/// `<stem>.csv` and `<stem>.svg`.
pub fn emit_max_displacement_plot(rows: &[ParameterError], stem: &Path) -> Result<PlotFiles> {
    let files = PlotFiles::for_stem(stem);
    let header: Vec<String> = ["dt", "max_disp_true", "max_disp_pred"].iter().map(|s| s.to_string()).collect();
    let table: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.dwell_time, r.max_disp_true, r.max_disp_pred]).collect();
    write_csv(&files.csv, &header, &table)?;

    let mut sorted = rows.to_vec();
    sorted.sort_by(|a, b| a.dwell_time.total_cmp(&b.dwell_time));
    let panel = Panel {
        title: "Maximum displacement".into(),
        x_label: "dwell time [s]",
        y_label: "max displacement [mm]",
        band: Vec::new(),
        series: vec![
            Series {
                points: sorted.iter().map(|r| (r.dwell_time, r.max_disp_true)).collect(),
                color: "#2ca02c",
                label: "ground truth",
                line: true,
                markers: true,
            },
            Series {
                points: sorted.iter().map(|r| (r.dwell_time, r.max_disp_pred)).collect(),
                color: "#ff7f0e",
                label: "prediction",
                line: true,
                markers: true,
            },
        ],
    };
    write_text(&files.svg, &render(&[panel]))?;
    Ok(files)
}
