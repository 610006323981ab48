//! Report files: `report.csv`, `report.json`, `report.svg` and, when scenes
//! carry object counts, `objects.csv`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::run::{ConditionResult, OBJECT_BIN};
use super::{EvalError, Split};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    /// Effective configuration the rows were produced with.
    pub config: serde_json::Value,
    pub rows: Vec<ConditionResult>,
}

pub const CSV_HEADER: [&str; 15] = [
    "split",
    "condition",
    "feature_set",
    "mean",
    "sd",
    "ci_low",
    "ci_high",
    "k",
    "n_train",
    "n_test",
    "fold_accuracies",
    "unit_accuracies",
    "chosen",
    "reference_accuracy",
    "seed",
];

fn f6(v: f64) -> String {
    format!("{v:.6}")
}

fn join(v: &[f64]) -> String {
    v.iter().map(|&x| f6(x)).collect::<Vec<_>>().join(";")
}

fn out_err(e: impl std::fmt::Display) -> EvalError {
    EvalError::Output(e.to_string())
}

pub fn report_csv(rows: &[ConditionResult]) -> Result<String, EvalError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).map_err(out_err)?;
    for r in rows {
        w.write_record([
            r.split.as_str().to_string(),
            r.condition.clone(),
            r.feature_set.clone(),
            f6(r.mean),
            f6(r.sd),
            f6(r.ci_low),
            f6(r.ci_high),
            r.unit_accuracies.len().to_string(),
            format!("{:.1}", r.n_train),
            format!("{:.1}", r.n_test),
            join(&r.fold_accuracies),
            join(&r.unit_accuracies),
            r.modal_choice(),
            r.reference_accuracy.map(f6).unwrap_or_default(),
            r.seed.to_string(),
        ])
        .map_err(out_err)?;
    }
    String::from_utf8(w.into_inner().map_err(out_err)?).map_err(out_err)
}

fn objects_csv(rows: &[ConditionResult]) -> Option<String> {
    if rows.iter().all(|r| r.by_objects.is_empty()) {
        return None;
    }
    let mut s = String::from("split,condition,feature_set,objects_from,objects_to,correct,total,accuracy\n");
    for r in rows {
        for b in &r.by_objects {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.split,
                r.condition,
                r.feature_set,
                b.lo,
                b.lo + OBJECT_BIN - 1,
                b.correct,
                b.total,
                f6(b.correct as f64 / b.total.max(1) as f64)
            );
        }
    }
    Some(s)
}

const PALETTE: [&str; 8] = ["#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#edc948", "#b07aa1", "#9c755f"];

/// Bar chart per split: one group per condition, one bar per feature set,
/// 95% CI whiskers, a dashed chance line and diamonds at reference values.
pub fn report_svg(rows: &[ConditionResult]) -> String {
    let mut sets: Vec<&str> = Vec::new();
    let mut conds: Vec<&str> = Vec::new();
    let mut splits: Vec<Split> = Vec::new();
    for r in rows {
        if !sets.contains(&r.feature_set.as_str()) {
            sets.push(&r.feature_set);
        }
        if !conds.contains(&r.condition.as_str()) {
            conds.push(&r.condition);
        }
        if !splits.contains(&r.split) {
            splits.push(r.split);
        }
    }
    let (bar, gap, left, top, ph) = (12.0, 18.0, 50.0, 40.0, 200.0);
    let group_w = bar * sets.len() as f64 + gap;
    let pw = group_w * conds.len() as f64;
    let panel_h = ph + 70.0;
    let width = left + pw + 140.0;
    let height = top + panel_h * splits.len() as f64;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (si, split) in splits.iter().enumerate() {
        let y0 = top + si as f64 * panel_h;
        let y = |acc: f64| y0 + ph * (1.0 - acc.clamp(0.0, 1.0));
        let _ = writeln!(s, r#"<text x="{left}" y="{:.1}" font-weight="bold">{split}</text>"#, y0 - 10.0);
        for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let _ = writeln!(s, r##"<line x1="{left}" x2="{:.1}" y1="{:.1}" y2="{:.1}" stroke="#ddd"/>"##, left + pw, y(t), y(t));
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{t:.2}</text>"#, left - 4.0, y(t) + 4.0);
        }
        let _ = writeln!(s, r##"<line x1="{left}" x2="{:.1}" y1="{:.1}" y2="{:.1}" stroke="#888" stroke-dasharray="4 3"/>"##, left + pw, y(0.5), y(0.5));
        for (ci, cond) in conds.iter().enumerate() {
            let gx = left + ci as f64 * group_w + gap / 2.0;
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{cond}</text>"#, gx + bar * sets.len() as f64 / 2.0, y0 + ph + 16.0);
            for (fi, set) in sets.iter().enumerate() {
                let Some(r) = rows.iter().find(|r| r.split == *split && r.condition == *cond && r.feature_set == *set) else {
                    continue;
                };
                let x = gx + fi as f64 * bar;
                let m = if r.mean.is_finite() { r.mean } else { 0.0 };
                let _ = writeln!(
                    s,
                    r#"<rect x="{x:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{}"><title>{} {} {}: {:.3}</title></rect>"#,
                    y(m),
                    bar - 1.0,
                    y0 + ph - y(m),
                    PALETTE[fi % PALETTE.len()],
                    split,
                    cond,
                    set,
                    m
                );
                if r.ci_low.is_finite() && r.ci_high.is_finite() {
                    let cx = x + bar / 2.0 - 0.5;
                    let _ = writeln!(s, r#"<line x1="{cx:.1}" x2="{cx:.1}" y1="{:.1}" y2="{:.1}" stroke="black"/>"#, y(r.ci_low), y(r.ci_high));
                }
                if let Some(p) = r.reference_accuracy {
                    let (cx, cy) = (x + bar / 2.0 - 0.5, y(p));
                    let _ = writeln!(
                        s,
                        r#"<path d="M{cx:.1},{:.1} L{:.1},{cy:.1} L{cx:.1},{:.1} L{:.1},{cy:.1} Z" fill="black"><title>reference {p:.3}</title></path>"#,
                        cy - 4.0,
                        cx + 4.0,
                        cy + 4.0,
                        cx - 4.0
                    );
                }
            }
        }
        for (fi, set) in sets.iter().enumerate() {
            let ly = y0 + 10.0 + fi as f64 * 16.0;
            let lx = left + pw + 16.0;
            let _ = writeln!(s, r#"<rect x="{lx:.1}" y="{:.1}" width="10" height="10" fill="{}"/>"#, ly - 9.0, PALETTE[fi % PALETTE.len()]);
            let _ = writeln!(s, r#"<text x="{:.1}" y="{ly:.1}">{set}</text>"#, lx + 14.0);
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Writes the report files into `dir` and returns their paths.
pub fn write_report(report: &EvalReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, EvalError> {
    if report.rows.is_empty() {
        return Err(EvalError::NothingToReport);
    }
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<(), EvalError> {
        let p = dir.join(name);
        fs::write(&p, body)?;
        written.push(p);
        Ok(())
    };
    put("report.csv", report_csv(&report.rows)?)?;
    let mut json = serde_json::to_string_pretty(report).map_err(out_err)?;
    json.push('\n');
    put("report.json", json)?;
    put("report.svg", report_svg(&report.rows))?;
    if let Some(o) = objects_csv(&report.rows) {
        put("objects.csv", o)?;
    }
    Ok(written)
}

pub fn read_report(path: impl AsRef<Path>) -> Result<EvalReport, EvalError> {
    let s = fs::read_to_string(path)?;
    serde_json::from_str(&s).map_err(out_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(split: Split, cond: &str, set: &str, acc: &[f64]) -> ConditionResult {
        let (mean, sd, ci_low, ci_high) = super::super::run::mean_ci(acc);
        ConditionResult {
            split,
            condition: cond.into(),
            feature_set: set.into(),
            fold_accuracies: acc.to_vec(),
            units: (0..acc.len()).map(|i| format!("u{i}")).collect(),
            unit_accuracies: acc.to_vec(),
            mean,
            sd,
            ci_low,
            ci_high,
            n_train: 100.0,
            n_test: 10.0,
            chosen: vec!["linear C=1".into(); acc.len()],
            seed: 3,
            reference_accuracy: None,
            by_objects: Vec::new(),
        }
    }

    #[test]
    fn empty_report_is_an_error() {
        let r = EvalReport { seed: 1, config: serde_json::Value::Null, rows: vec![] };
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(write_report(&r, dir.path()), Err(EvalError::NothingToReport)));
    }

    #[test]
    fn csv_rows_and_ci() {
        let rows = vec![row(Split::CrossUser, "both->both", "gaze", &[0.5, 0.7]), row(Split::WithinUser, "W->W", "srp", &[0.6])];
        let csv = report_csv(&rows).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], CSV_HEADER.join(","));
        // sd = 0.141421, half width = 1.96 * sd / sqrt(2) = 0.196
        assert!(lines[1].starts_with("cross_user,both->both,gaze,0.600000,0.141421,0.404000,0.796000,2,"));
        assert!(lines[2].contains(",0.600000,0.000000,0.600000,0.600000,1,"));
        let svg = report_svg(&rows);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }
}
