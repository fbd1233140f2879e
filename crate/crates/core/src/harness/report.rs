use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::evaluate::ReportRow;
use super::train::EpochRecord;
use crate::error::{Error, Result};

/// Results of one experiment.
///
/// The CSV holds only the rows and is byte-identical across reruns of the
/// same manifest. The JSON adds provenance: manifest hash, git revision,
/// seed, training log and wall time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub name: String,
    pub manifest_sha256: String,
    pub git_revision: Option<String>,
    pub seed: u64,
    pub wall_time_secs: f64,
    pub training: Vec<EpochRecord>,
    pub rows: Vec<ReportRow>,
}

impl AccuracyReport {
    pub fn row(&self, condition: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.condition == condition)
    }

    pub fn to_csv(&self) -> Result<String> {
        rows_to_csv(&self.rows)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Attacked accuracy against budget for every sweep (`name@eps` rows).
    pub fn to_svg(&self) -> String {
        plot_sweeps(&self.title(), &self.rows)
    }

    fn title(&self) -> String {
        format!("{}: accuracy vs perturbation budget", self.name)
    }

    /// Writes `report.csv`, `report.json` and `report.svg` into `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.csv"), self.to_csv()?)?;
        std::fs::write(dir.join("report.json"), self.to_json()?)?;
        std::fs::write(dir.join("report.svg"), self.to_svg())?;
        Ok(())
    }
}

pub fn rows_to_csv(rows: &[ReportRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::InvalidState(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidState(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn training_log_csv(log: &[EpochRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in log {
        w.serialize(r).map_err(|e| Error::InvalidState(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidState(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Current commit of the working directory's repository, if any.
pub fn git_revision() -> Option<String> {
    let out = std::process::Command::new("git")
        .args(["rev-parse", "HEAD"])
        .output()
        .ok()?;
    out.status
        .success()
        .then(|| String::from_utf8_lossy(&out.stdout).trim().to_string())
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Line plot of attacked accuracy against epsilon (in 1/255 units), one
/// series per sweep family.
pub fn plot_sweeps(title: &str, rows: &[ReportRow]) -> String {
    let mut families: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for r in rows {
        let Some((family, _)) = r.condition.split_once('@') else {
            continue;
        };
        let point = (r.epsilon_value * 255.0, r.attacked_acc);
        match families.iter_mut().find(|(f, _)| f == family) {
            Some((_, pts)) => pts.push(point),
            None => families.push((family.to_string(), vec![point])),
        }
    }
    let (w, h, left, right, top, bottom) = (640.0, 400.0, 60.0, 150.0, 40.0, 50.0);
    let x_max = families
        .iter()
        .flat_map(|(_, p)| p.iter().map(|q| q.0))
        .fold(1.0f64, f64::max);
    let px = |x: f64| left + x / x_max * (w - left - right);
    let py = |y: f64| top + (1.0 - y) * (h - top - bottom);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        w / 2.0,
        escape(title)
    );
    for i in 0..=5 {
        let y = i as f64 / 5.0;
        let _ = writeln!(
            s,
            r##"<line x1="{left}" x2="{}" y1="{:.1}" y2="{:.1}" stroke="#ddd"/><text x="{}" y="{:.1}" text-anchor="end">{:.1}</text>"##,
            w - right,
            py(y),
            py(y),
            left - 6.0,
            py(y) + 4.0,
            y
        );
    }
    let ticks: Vec<f64> = {
        let mut t: Vec<f64> = families.iter().flat_map(|(_, p)| p.iter().map(|q| q.0)).collect();
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    };
    for t in &ticks {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            px(*t),
            h - bottom + 18.0,
            t
        );
    }
    let _ = writeln!(
        s,
        r#"<line x1="{left}" x2="{}" y1="{}" y2="{}" stroke="black"/><line x1="{left}" x2="{left}" y1="{top}" y2="{}" stroke="black"/>"#,
        w - right,
        h - bottom,
        h - bottom,
        h - bottom
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{}" text-anchor="middle">epsilon (x/255)</text>"#,
        (left + w - right) / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(16 {:.1}) rotate(-90)" text-anchor="middle">accuracy</text>"#,
        (top + h - bottom) / 2.0
    );
    for (i, (name, pts)) in families.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            path.join(" ")
        );
        for &(x, y) in pts {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#,
                px(x),
                py(y)
            );
        }
        let ly = top + 10.0 + 18.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" x2="{}" y1="{ly}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            w - right + 10.0,
            w - right + 30.0,
            w - right + 36.0,
            ly + 4.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::KeyMatch;

    fn row(condition: &str, eps: f64, acc: f64) -> ReportRow {
        ReportRow {
            condition: condition.to_string(),
            epsilon: format!("{}/255", eps),
            epsilon_value: eps / 255.0,
            iterations: 40,
            random_init: true,
            key_match: KeyMatch::Wrong,
            samples: 10,
            clean_acc: 0.9,
            attacked_acc: acc,
            max_linf: eps / 255.0,
        }
    }

    #[test]
    fn csv_has_header_and_one_line_per_row() {
        let rows = vec![row("a@2/255", 2.0, 0.8), row("a@8/255", 8.0, 0.5)];
        let csv = rows_to_csv(&rows).unwrap();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("condition,epsilon,epsilon_value"));
        assert!(lines[1].contains(",wrong,"));
    }

    #[test]
    fn svg_plots_each_family() {
        let rows = vec![
            row("a@2/255", 2.0, 0.8),
            row("a@8/255", 8.0, 0.5),
            row("clean", 0.0, 0.9),
        ];
        let svg = plot_sweeps("t <x>", &rows);
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert_eq!(svg.matches("<circle").count(), 2);
        assert!(svg.contains("t &lt;x&gt;"));
    }
}
