//! Side-by-side comparison of aggregate curves from several run directories.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::io::{read_aggregate, AggregatePoint};

pub const AGGREGATE_FILE: &str = "aggregate.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct CurveGroup {
    pub name: String,
    pub points: Vec<AggregatePoint>,
}

impl CurveGroup {
    /// Single-point groups (OPTIMAL) are drawn as horizontal references.
    pub fn is_reference(&self) -> bool {
        self.points.len() == 1
    }

    fn at(&self, step: u64) -> Option<(f64, f64)> {
        if self.is_reference() {
            return Some((self.points[0].mean, self.points[0].std));
        }
        self.points
            .iter()
            .take_while(|p| p.env_steps <= step)
            .last()
            .map(|p| (p.mean, p.std))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub groups: Vec<CurveGroup>,
    pub steps: Vec<u64>,
    pub warnings: Vec<String>,
}

fn dir_label(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().to_string())
        .unwrap_or_else(|| dir.display().to_string())
}

/// Loads `aggregate.csv` from every directory and aligns the curves on the
/// union of evaluation steps (step-floor alignment).
pub fn compare_dirs(dirs: &[PathBuf]) -> Result<Comparison> {
    if dirs.len() < 2 {
        return Err(Error::param("compare needs at least two run directories"));
    }
    let missing: Vec<String> = dirs
        .iter()
        .map(|d| d.join(AGGREGATE_FILE))
        .filter(|p| !p.is_file())
        .map(|p| format!("missing aggregate file {}", p.display()))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Config(missing));
    }

    let mut groups: Vec<CurveGroup> = Vec::new();
    for dir in dirs {
        let label = dir_label(dir);
        let points = read_aggregate(&dir.join(AGGREGATE_FILE))?;
        let mut names: Vec<String> = Vec::new();
        for p in &points {
            if !names.contains(&p.group) {
                names.push(p.group.clone());
            }
        }
        for g in names {
            let mut name = format!("{label}:{g}");
            let base = name.clone();
            let mut k = 2;
            while groups.iter().any(|x| x.name == name) {
                name = format!("{base}#{k}");
                k += 1;
            }
            groups.push(CurveGroup {
                name,
                points: points.iter().filter(|p| p.group == g).cloned().collect(),
            });
        }
    }

    let mut warnings = Vec::new();
    let grids: Vec<BTreeSet<u64>> = groups
        .iter()
        .filter(|g| !g.is_reference())
        .map(|g| g.points.iter().map(|p| p.env_steps).collect())
        .collect();
    let mut steps: BTreeSet<u64> = grids.iter().flatten().copied().collect();
    if grids.windows(2).any(|w| w[0] != w[1]) {
        warnings.push("evaluation grids differ; curves resampled by step-floor alignment".to_string());
    }
    if steps.is_empty() {
        steps.insert(0);
    }
    Ok(Comparison {
        groups,
        steps: steps.into_iter().collect(),
        warnings,
    })
}

pub fn comparison_csv(cmp: &Comparison) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["env_steps".to_string()];
    for g in &cmp.groups {
        header.push(format!("{}_mean", g.name));
        header.push(format!("{}_std", g.name));
    }
    w.write_record(&header).expect("in-memory csv");
    for &step in &cmp.steps {
        let mut row = vec![step.to_string()];
        for g in &cmp.groups {
            match g.at(step) {
                Some((m, s)) => {
                    row.push(m.to_string());
                    row.push(s.to_string());
                }
                None => {
                    row.push(String::new());
                    row.push(String::new());
                }
            }
        }
        w.write_record(&row).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// Standalone SVG line plot with a mean ± std band per group.
pub fn render_svg(cmp: &Comparison) -> String {
    let (w, h) = (800.0, 500.0);
    let (left, right, top, bottom) = (70.0, 200.0, 20.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;

    let x_min = *cmp.steps.first().unwrap_or(&0) as f64;
    let x_max = (*cmp.steps.last().unwrap_or(&1) as f64).max(x_min + 1.0);
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for g in &cmp.groups {
        for &s in &cmp.steps {
            if let Some((m, sd)) = g.at(s) {
                y_min = y_min.min(m - sd);
                y_max = y_max.max(m + sd);
            }
        }
    }
    if !y_min.is_finite() {
        y_min = 0.0;
        y_max = 1.0;
    }
    if y_max - y_min < 1e-12 {
        y_max = y_min + 1.0;
    }
    let sx = |x: f64| left + (x - x_min) / (x_max - x_min) * pw;
    let sy = |y: f64| top + (1.0 - (y - y_min) / (y_max - y_min)) * ph;

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let fx = x_min + (x_max - x_min) * k as f64 / 4.0;
        let fy = y_min + (y_max - y_min) * k as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{:.0}</text>"#,
            sx(fx),
            top + ph + 16.0,
            fx
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{:.3}</text>"#,
            left - 6.0,
            sy(fy) + 4.0,
            fy
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">env steps</text>"#,
        left + pw / 2.0,
        h - 10.0
    );

    for (gi, g) in cmp.groups.iter().enumerate() {
        let color = PALETTE[gi % PALETTE.len()];
        let pts: Vec<(f64, f64, f64)> = cmp
            .steps
            .iter()
            .filter_map(|&s| g.at(s).map(|(m, sd)| (s as f64, m, sd)))
            .collect();
        if pts.is_empty() {
            continue;
        }
        let mut band = String::new();
        for &(x, m, sd) in &pts {
            let _ = write!(band, "{:.2},{:.2} ", sx(x), sy(m + sd));
        }
        for &(x, m, sd) in pts.iter().rev() {
            let _ = write!(band, "{:.2},{:.2} ", sx(x), sy(m - sd));
        }
        let _ = writeln!(svg, r#"<polygon points="{}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#, band.trim_end());
        let line: Vec<String> = pts.iter().map(|&(x, m, _)| format!("{:.2},{:.2}", sx(x), sy(m))).collect();
        let dash = if g.is_reference() { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
            line.join(" ")
        );
        let ly = top + 14.0 + 18.0 * gi as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="11">{}</text>"#,
            lx + 26.0,
            ly + 4.0,
            xml_escape(&g.name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
