//! Evaluation tables (CSV) and plots (SVG written as plain markup).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use corenet_core::eval::{EvalReport, Group};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil::atomic_write;

pub const TABLE_SCHEMA: u32 = 1;
pub const OVERALL_FILE: &str = "overall.csv";
pub const LEVEL_FILE: &str = "per_snr_level.csv";
pub const MODULATION_FILE: &str = "per_modulation.csv";
pub const CELL_FILE: &str = "per_cell.csv";
pub const PLOT_FILE: &str = "per_modulation.svg";
pub const LEVEL_PLOT_FILE: &str = "per_snr_level.svg";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallRow {
    pub schema: u32,
    pub pass: Option<usize>,
    pub count: usize,
    pub mean_snr_db: f64,
    pub corrupted_baseline_db: f64,
    pub improvement_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub key: String,
    pub snr_level_db: Option<f32>,
    pub count: usize,
    pub mean_restored_db: f64,
    pub mean_baseline_db: f64,
    pub improvement_db: f64,
}

fn row(key: String, level: Option<f32>, g: &Group) -> GroupRow {
    GroupRow {
        key,
        snr_level_db: level,
        count: g.count,
        mean_restored_db: g.mean_restored_db,
        mean_baseline_db: g.mean_baseline_db,
        improvement_db: g.improvement_db(),
    }
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Data(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Data(e.to_string()))
}

pub fn overall_row(rep: &EvalReport) -> OverallRow {
    OverallRow {
        schema: TABLE_SCHEMA,
        pass: rep.pass_index,
        count: rep.count,
        mean_snr_db: rep.overall_mean_snr_db,
        corrupted_baseline_db: rep.corrupted_baseline_db,
        improvement_db: rep.overall_mean_snr_db - rep.corrupted_baseline_db,
    }
}

pub fn level_rows(rep: &EvalReport) -> Vec<GroupRow> {
    rep.per_snr_level.iter().map(|(l, g)| row("all".into(), Some(*l), g)).collect()
}

pub fn modulation_rows(rep: &EvalReport) -> Vec<GroupRow> {
    rep.per_modulation.iter().map(|(m, g)| row(m.name().into(), None, g)).collect()
}

pub fn cell_rows(rep: &EvalReport) -> Vec<GroupRow> {
    rep.per_cell.iter().map(|(m, l, g)| row(m.name().into(), Some(*l), g)).collect()
}

/// Writes the four CSV tables and two plots into `dir`.
pub fn write_report(dir: &Path, rep: &EvalReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    atomic_write(&dir.join(OVERALL_FILE), &to_csv(&[overall_row(rep)])?)?;
    let levels = level_rows(rep);
    let mods = modulation_rows(rep);
    atomic_write(&dir.join(LEVEL_FILE), &to_csv(&levels)?)?;
    atomic_write(&dir.join(MODULATION_FILE), &to_csv(&mods)?)?;
    atomic_write(&dir.join(CELL_FILE), &to_csv(&cell_rows(rep))?)?;
    atomic_write(&dir.join(PLOT_FILE), modulation_chart(&mods).as_bytes())?;
    atomic_write(&dir.join(LEVEL_PLOT_FILE), level_chart(&levels).as_bytes())?;
    Ok(())
}

pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    r.deserialize().collect::<std::result::Result<_, _>>().map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// A named series of y values.
pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
}

const W: f64 = 720.0;
const H: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 140.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 4] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Round-to-step axis range covering every finite value and zero.
fn y_range(series: &[Series]) -> (f64, f64, f64) {
    let vals = series.iter().flat_map(|s| s.values.iter().copied()).filter(|v| v.is_finite());
    let (lo, hi) = vals.fold((0.0f64, 0.0f64), |(a, b), v| (a.min(v), b.max(v)));
    let span = (hi - lo).max(1.0);
    let step = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0].into_iter().find(|s| span / s <= 8.0).unwrap_or(200.0);
    ((lo / step).floor() * step, (hi / step).ceil() * step, step)
}

fn frame(title: &str, ylabel: &str, labels: &[String], series: &[Series], body: impl Fn(&mut String, f64, f64)) -> String {
    let (y0, y1, step) = y_range(series);
    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let y = |v: f64| TOP + ph * (1.0 - (v - y0) / (y1 - y0));
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#, LEFT + pw / 2.0, esc(title));
    let mut v = y0;
    while v <= y1 + 1e-9 {
        let yy = y(v);
        let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{yy:.1}" x2="{:.1}" y2="{yy:.1}" stroke="#ddd"/>"##, LEFT + pw);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v}</text>"#, LEFT - 6.0, yy + 4.0);
        v += step;
    }
    let _ = writeln!(s, r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#, TOP + ph / 2.0, TOP + ph / 2.0, esc(ylabel));
    let slot = pw / labels.len().max(1) as f64;
    for (i, l) in labels.iter().enumerate() {
        let x = LEFT + slot * (i as f64 + 0.5);
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, esc(l));
    }
    body(&mut s, slot, y(0.0));
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/>"#, y(0.0), LEFT + pw, y(0.0));
    for (k, ser) in series.iter().enumerate() {
        let ly = TOP + 16.0 * k as f64 + 8.0;
        let lx = W - RIGHT + 12.0;
        let _ = writeln!(s, r#"<rect x="{lx}" y="{:.1}" width="10" height="10" fill="{}"/>"#, ly - 8.0, COLORS[k % COLORS.len()]);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{ly:.1}">{}</text>"#, lx + 14.0, esc(&ser.name));
    }
    s.push_str("</svg>\n");
    s
}

/// Grouped bars, one group per label.
pub fn bar_chart(title: &str, ylabel: &str, labels: &[String], series: &[Series]) -> String {
    let (y0, y1, _) = y_range(series);
    let ph = H - TOP - BOTTOM;
    let y = move |v: f64| TOP + ph * (1.0 - (v - y0) / (y1 - y0));
    frame(title, ylabel, labels, series, |s, slot, zero| {
        let bw = slot * 0.8 / series.len().max(1) as f64;
        for (k, ser) in series.iter().enumerate() {
            for (i, &v) in ser.values.iter().enumerate().filter(|(_, v)| v.is_finite()) {
                let x = LEFT + slot * i as f64 + slot * 0.1 + bw * k as f64;
                let (top, h) = if v >= 0.0 { (y(v), zero - y(v)) } else { (zero, y(v) - zero) };
                let _ = writeln!(s, r#"<rect x="{x:.1}" y="{top:.1}" width="{bw:.1}" height="{h:.1}" fill="{}"><title>{}: {v:.3}</title></rect>"#, COLORS[k % COLORS.len()], esc(&ser.name));
            }
        }
    })
}

/// One polyline per series over the labels.
pub fn line_chart(title: &str, ylabel: &str, labels: &[String], series: &[Series]) -> String {
    let (y0, y1, _) = y_range(series);
    let ph = H - TOP - BOTTOM;
    let y = move |v: f64| TOP + ph * (1.0 - (v - y0) / (y1 - y0));
    frame(title, ylabel, labels, series, |s, slot, _| {
        for (k, ser) in series.iter().enumerate() {
            let pts: Vec<String> = ser
                .values
                .iter()
                .enumerate()
                .filter(|(_, v)| v.is_finite())
                .map(|(i, &v)| format!("{:.1},{:.1}", LEFT + slot * (i as f64 + 0.5), y(v)))
                .collect();
            let c = COLORS[k % COLORS.len()];
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="2"/>"#, pts.join(" "));
            for p in &pts {
                let (px, py) = p.split_once(',').unwrap();
                let _ = writeln!(s, r#"<circle cx="{px}" cy="{py}" r="3" fill="{c}"/>"#);
            }
        }
    })
}

pub fn modulation_chart(rows: &[GroupRow]) -> String {
    let labels: Vec<String> = rows.iter().map(|r| r.key.clone()).collect();
    let series = [
        Series { name: "corrupted".into(), values: rows.iter().map(|r| r.mean_baseline_db).collect() },
        Series { name: "restored".into(), values: rows.iter().map(|r| r.mean_restored_db).collect() },
    ];
    bar_chart("Mean SNR per modulation", "SNR (dB)", &labels, &series)
}

pub fn level_chart(rows: &[GroupRow]) -> String {
    let labels: Vec<String> = rows.iter().map(|r| format!("{}", r.snr_level_db.unwrap_or(f32::NAN))).collect();
    let series = [
        Series { name: "corrupted".into(), values: rows.iter().map(|r| r.mean_baseline_db).collect() },
        Series { name: "restored".into(), values: rows.iter().map(|r| r.mean_restored_db).collect() },
    ];
    line_chart("Mean SNR per input SNR level", "SNR (dB)", &labels, &series)
}

pub fn pass_chart(rows: &[crate::ptl_dir::SummaryRow]) -> String {
    let mut labels = vec!["input".to_string()];
    labels.extend(rows.iter().map(|r| format!("pass {}", r.pass)));
    let col = |first: Option<f64>, f: fn(&crate::ptl_dir::SummaryRow) -> Option<f64>| {
        let mut v = vec![first.unwrap_or(f64::NAN)];
        v.extend(rows.iter().map(|r| f(r).unwrap_or(f64::NAN)));
        v
    };
    let first = rows.first();
    let series = [
        Series { name: "train".into(), values: col(first.and_then(|r| r.input_train_snr), |r| r.train_snr) },
        Series { name: "val".into(), values: col(first.and_then(|r| r.input_val_snr), |r| r.val_snr) },
        Series { name: "test".into(), values: col(first.and_then(|r| r.input_test_snr), |r| r.test_snr) },
    ];
    line_chart("Mean SNR across transfer passes", "SNR (dB)", &labels, &series)
}

/// Renders the plot matching a CSV written by this crate, chosen by header.
pub fn plot_csv(path: &Path) -> Result<String> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let headers = r.headers().map_err(|e| Error::Data(format!("{}: {e}", path.display())))?.clone();
    let has = |h: &str| headers.iter().any(|x| x == h);
    if has("input_train_snr") {
        Ok(pass_chart(&crate::ptl_dir::read_summary(path)?))
    } else if has("key") && has("snr_level_db") {
        let rows: Vec<GroupRow> = read_rows(path)?;
        if rows.iter().all(|r| r.snr_level_db.is_none()) {
            Ok(modulation_chart(&rows))
        } else if rows.iter().all(|r| r.key == "all") {
            Ok(level_chart(&rows))
        } else {
            Err(Error::Data(format!("{}: per-cell tables have no plot", path.display())))
        }
    } else if has("val_snr") && has("epoch") {
        let rows = crate::run::read_epochs(path)?;
        let labels: Vec<String> = rows.iter().map(|r| r.epoch.to_string()).collect();
        let series = [Series { name: "val SNR".into(), values: rows.iter().map(|r| r.val_snr).collect() }];
        Ok(line_chart("Validation SNR per epoch", "SNR (dB)", &labels, &series))
    } else {
        Err(Error::Data(format!("{}: not a table this tool writes", path.display())))
    }
}
