//! CSV tables, SVG line plots and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{LabError, Result};

/// Float cell with 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// RFC 4180 with LF line endings.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in std::iter::once(&self.header).chain(&self.rows) {
            let cells: Vec<String> = row.iter().map(|c| quote(c)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

fn quote(cell: &str) -> String {
    if cell.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", cell.replace('"', "\"\""))
    } else {
        cell.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const LEFT: f64 = 90.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 70.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= 1e-12 * lo.abs().max(1e-300) {
        let pad = if lo == 0.0 { 1.0 } else { 0.5 * lo.abs() };
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

impl Plot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Plot { title: title.into(), x_label: x_label.into(), y_label: y_label.into(), series: Vec::new() }
    }

    pub fn with(mut self, name: &str, points: Vec<(f64, f64)>) -> Self {
        self.series.push(Series { name: name.into(), points });
        self
    }

    /// Fixed 800×600 viewport with axes, five ticks per axis, one path per series and a legend.
    pub fn to_svg(&self) -> String {
        let all = || self.series.iter().flat_map(|s| s.points.iter());
        let (x0, x1) = range(all().map(|p| p.0));
        let (y0, y1) = range(all().map(|p| p.1));
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="800" height="600" viewBox="0 0 800 600" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect x="0" y="0" width="800" height="600" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="400" y="28" text-anchor="middle" font-size="16">{}</text>"#, escape(&self.title));
        let _ = writeln!(
            s,
            r#"<path d="M{LEFT:.2},{TOP:.2} L{LEFT:.2},{:.2} L{:.2},{:.2}" stroke="black" fill="none"/>"#,
            TOP + ph,
            LEFT + pw,
            TOP + ph
        );
        for k in 0..=4 {
            let fx = x0 + (x1 - x0) * k as f64 / 4.0;
            let fy = y0 + (y1 - y0) * k as f64 / 4.0;
            let (px, py) = (sx(fx), sy(fy));
            let _ = writeln!(s, r#"<path d="M{px:.2},{:.2} L{px:.2},{:.2}" stroke="black"/>"#, TOP + ph, TOP + ph + 5.0);
            let _ = writeln!(s, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{fx:.3e}</text>"#, TOP + ph + 20.0);
            let _ = writeln!(s, r#"<path d="M{:.2},{py:.2} L{LEFT:.2},{py:.2}" stroke="black"/>"#, LEFT - 5.0);
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{fy:.3e}</text>"#, LEFT - 8.0, py + 4.0);
        }
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, LEFT + 0.5 * pw, HEIGHT - 20.0, escape(&self.x_label));
        let _ = writeln!(
            s,
            r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">{}</text>"#,
            TOP + 0.5 * ph,
            TOP + 0.5 * ph,
            escape(&self.y_label)
        );
        for (i, series) in self.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let mut d = String::new();
            let mut pen_down = false;
            for &(x, y) in &series.points {
                if !(x.is_finite() && y.is_finite()) {
                    pen_down = false;
                    continue;
                }
                let _ = write!(d, "{}{:.2},{:.2} ", if pen_down { "L" } else { "M" }, sx(x), sy(y));
                pen_down = true;
            }
            let _ = writeln!(s, r#"<path d="{}" stroke="{color}" stroke-width="1.5" fill="none"/>"#, d.trim_end());
            let ly = TOP + 15.0 + 18.0 * i as f64;
            let lx = LEFT + pw - 170.0;
            let _ = writeln!(s, r#"<path d="M{lx:.2},{ly:.2} L{:.2},{ly:.2}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&series.name));
        }
        s.push_str("</svg>\n");
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), passed, detail: detail.into() }
    }
}

/// Everything an experiment produces.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub tables: Vec<(String, Table)>,
    pub plots: Vec<(String, Plot)>,
    pub constants: Vec<(String, String)>,
    pub checks: Vec<Check>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check::new(name, passed, detail));
    }

    pub fn constant(&mut self, name: &str, value: f64) {
        self.constants.push((name.into(), num(value)));
    }

    pub fn note(&mut self, name: &str, value: impl Into<String>) {
        self.constants.push((name.into(), value.into()));
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

pub fn manifest(experiment: &str, seed: u64, config: &[(String, String)], outcome: &Outcome) -> String {
    let mut s = String::new();
    if !outcome.passed() {
        s.push_str("FAILED\n");
    }
    let _ = writeln!(s, "experiment = {experiment}");
    let _ = writeln!(s, "version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "seed = {seed}");
    let _ = writeln!(s, "status = {}", if outcome.passed() { "pass" } else { "FAILED" });
    s.push_str("\n[config]\n");
    for (k, v) in config {
        let _ = writeln!(s, "{k} = {v}");
    }
    s.push_str("\n[constants]\n");
    for (k, v) in &outcome.constants {
        let _ = writeln!(s, "{k} = {v}");
    }
    s.push_str("\n[checks]\n");
    for c in &outcome.checks {
        let _ = writeln!(s, "{} = {} ({})", c.name, if c.passed { "pass" } else { "FAIL" }, c.detail);
    }
    s
}

pub fn write_outputs(dir: &Path, experiment: &str, seed: u64, config: &[(String, String)], outcome: &Outcome) -> Result<()> {
    let io = |e: std::io::Error| LabError::Io(format!("{}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(io)?;
    for (name, table) in &outcome.tables {
        fs::write(dir.join(format!("{name}.csv")), table.to_csv()).map_err(io)?;
    }
    for (name, plot) in &outcome.plots {
        fs::write(dir.join(format!("{name}.svg")), plot.to_svg()).map_err(io)?;
    }
    fs::write(dir.join("manifest.txt"), manifest(experiment, seed, config, outcome)).map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quoting_and_numbers() {
        let mut t = Table::new(&["name", "value"]);
        t.push(vec!["a,b".into(), num(0.1)]);
        t.push(vec!["say \"hi\"".into(), num(-2.0)]);
        let csv = t.to_csv();
        assert_eq!(csv, "name,value\n\"a,b\",1.0000000000000001e-1\n\"say \"\"hi\"\"\",-2.0000000000000000e0\n");
        assert!(!csv.contains('\r'));
        let parsed: f64 = num(std::f64::consts::PI).parse().unwrap();
        assert_eq!(parsed, std::f64::consts::PI);
    }

    #[test]
    fn svg_has_fixed_viewport_and_paths() {
        let svg = Plot::new("W <t>", "t", "W").with("sphere", vec![(0.0, 1.0), (1.0, 0.5), (2.0, f64::NAN), (3.0, 0.2)]).to_svg();
        assert!(svg.contains(r#"width="800" height="600""#));
        assert!(svg.contains("W &lt;t&gt;"));
        assert_eq!(svg.matches("stroke-width=\"1.5\"").count(), 1);
        assert!(svg.contains(" M"));
    }

    #[test]
    fn manifest_marks_failures() {
        let mut o = Outcome::default();
        o.check("a", true, "ok");
        assert!(!manifest("x", 1, &[], &o).contains("FAILED"));
        o.check("b", false, "bad");
        let m = manifest("x", 1, &[("time.dt".into(), "0.1".into())], &o);
        assert!(m.starts_with("FAILED\n") && m.contains("b = FAIL (bad)") && m.contains("time.dt = 0.1"));
    }
}
