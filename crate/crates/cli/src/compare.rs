use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use dgforecast_core::eval::EvaluationReport;

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub label: String,
    pub reliability: f64,
    pub sharpness: f64,
    pub skill: f64,
}

/// Rows plus the index of the best row per column (R, S, Sk).
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub best: [usize; 3],
}

fn argbest(values: impl Iterator<Item = f64>, lower_is_better: bool) -> usize {
    let mut best = (0, f64::NAN);
    for (i, v) in values.enumerate() {
        let better = if lower_is_better { v < best.1 } else { v > best.1 };
        if i == 0 || better {
            best = (i, v);
        }
    }
    best.0
}

/// Lowest R, lowest S, highest Sk win; the first row wins ties.
pub fn compare_reports(rows: Vec<ComparisonRow>) -> Result<Comparison> {
    if rows.len() < 2 {
        bail!("compare needs at least two reports, got {}", rows.len());
    }
    let best = [
        argbest(rows.iter().map(|r| r.reliability), true),
        argbest(rows.iter().map(|r| r.sharpness), true),
        argbest(rows.iter().map(|r| r.skill), false),
    ];
    Ok(Comparison { rows, best })
}

impl Comparison {
    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max(6);
        let mut s = format!("{:<width$}  {:>10}  {:>10}  {:>10}\n", "method", "R (%)", "S", "Sk");
        for (i, r) in self.rows.iter().enumerate() {
            let mark = |col: usize| if self.best[col] == i { "*" } else { " " };
            let _ = writeln!(
                s,
                "{:<width$}  {:>9.2}{}  {:>9.4}{}  {:>9.4}{}",
                r.label,
                r.reliability,
                mark(0),
                r.sharpness,
                mark(1),
                r.skill,
                mark(2)
            );
        }
        s.push_str("* best in column\n");
        s
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut out = csv::Writer::from_writer(Vec::new());
        out.write_record([
            "method",
            "reliability_pct",
            "sharpness",
            "skill",
            "best_reliability",
            "best_sharpness",
            "best_skill",
        ])?;
        for (i, r) in self.rows.iter().enumerate() {
            let flag = |col: usize| if self.best[col] == i { "1" } else { "0" }.to_string();
            out.write_record([
                r.label.clone(),
                r.reliability.to_string(),
                r.sharpness.to_string(),
                r.skill.to_string(),
                flag(0),
                flag(1),
                flag(2),
            ])?;
        }
        Ok(String::from_utf8(out.into_inner()?)?)
    }
}

/// `label=path` sets the row label; otherwise the file stem is used, or the
/// parent directory name when the file is the default `report.json`.
fn parse_arg(arg: &str) -> (String, PathBuf) {
    if let Some((label, path)) = arg.split_once('=') {
        return (label.to_string(), PathBuf::from(path));
    }
    let path = PathBuf::from(arg);
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or(arg);
    let label = if stem == "report" {
        path.parent()
            .and_then(|p| p.file_name())
            .and_then(|s| s.to_str())
            .unwrap_or(stem)
    } else {
        stem
    };
    (label.to_string(), path)
}

pub fn cmd_compare(reports: &[String], out_dir: &Path) -> Result<Comparison> {
    let rows = reports
        .iter()
        .map(|arg| {
            let (label, path) = parse_arg(arg);
            let text = fs::read_to_string(&path)
                .with_context(|| format!("reading report {}", path.display()))?;
            let r = EvaluationReport::from_json(&text)
                .with_context(|| format!("malformed report {}", path.display()))?;
            Ok(ComparisonRow {
                label,
                reliability: r.reliability,
                sharpness: r.sharpness,
                skill: r.skill,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let cmp = compare_reports(rows)?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("comparison.txt"), cmp.to_text())?;
    fs::write(out_dir.join("comparison.csv"), cmp.to_csv()?)?;
    Ok(cmp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(label: &str, r: f64, s: f64, sk: f64) -> ComparisonRow {
        ComparisonRow {
            label: label.into(),
            reliability: r,
            sharpness: s,
            skill: sk,
        }
    }

    #[test]
    fn flags_follow_metric_orientation() {
        let c = compare_reports(vec![row("a", 3.0, 0.05, -0.3), row("b", 2.0, 0.06, -0.2)]).unwrap();
        assert_eq!(c.best, [1, 0, 1]);
        let csv = c.to_csv().unwrap();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("method,reliability_pct,sharpness,skill"));
    }

    #[test]
    fn ties_go_to_the_first_row() {
        let c = compare_reports(vec![row("a", 1.0, 1.0, -1.0), row("b", 1.0, 1.0, -1.0)]).unwrap();
        assert_eq!(c.best, [0, 0, 0]);
    }

    #[test]
    fn one_report_is_not_enough() {
        assert!(compare_reports(vec![row("a", 1.0, 1.0, -1.0)]).is_err());
    }

    #[test]
    fn labels() {
        assert_eq!(parse_arg("e2e=x/report.json").0, "e2e");
        assert_eq!(parse_arg("runs/li/report.json").0, "li");
        assert_eq!(parse_arg("runs/knn.json").0, "knn");
    }
}
