use std::collections::BTreeMap;
use std::path::Path;

use super::config::Setting;
use super::run::{CellRecord, MetricsReport};
use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableStyle {
    Csv,
    Markdown,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn percent(mean: f64, std: f64) -> String {
    format!("{:.0}±{:.0}", mean * 100.0, std * 100.0)
}

/// Header and one row per variable: test scores of the majority baseline and
/// of the selected technique.
fn table_cells(
    report: &MetricsReport,
    setting: Setting,
) -> Result<(Vec<&'static str>, Vec<Vec<String>>), HarnessError> {
    if report.variables.is_empty() {
        return Err(HarnessError::EmptyReport);
    }
    let mut header = vec!["Variable", "Majority F1", "F1"];
    if setting == Setting::ThreeWay {
        header.push("Spearman");
    }
    let rows = report
        .variables
        .iter()
        .map(|v| {
            let majority = report
                .row(v, setting, "-", "test", "macro_f1")
                .map_or("-".to_string(), |r| percent(r.mean, r.std));
            let selected = report.selection(v, setting).and_then(|s| s.technique.as_deref());
            let metric = |name: &str| selected.and_then(|t| report.row(v, setting, t, "test", name));
            let mut row = vec![
                v.clone(),
                majority,
                metric("macro_f1").map_or("-".to_string(), |r| percent(r.mean, r.std)),
            ];
            if setting == Setting::ThreeWay {
                row.push(metric("spearman").map_or("-".to_string(), |r| format!("{:.2}±{:.2}", r.mean, r.std)));
            }
            row
        })
        .collect();
    Ok((header, rows))
}

/// Renders the test table of one setting. F1 values are percentages.
pub fn render_table(report: &MetricsReport, setting: Setting, style: TableStyle) -> Result<String, HarnessError> {
    let (header, rows) = table_cells(report, setting)?;
    Ok(match style {
        TableStyle::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let csv_err = |e: csv::Error| HarnessError::Io {
                path: "<table>".into(),
                message: e.to_string(),
            };
            w.write_record(&header).map_err(csv_err)?;
            for row in &rows {
                w.write_record(row).map_err(csv_err)?;
            }
            String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 table")
        }
        TableStyle::Markdown => {
            let mut out = format!("| {} |\n", header.join(" | "));
            let align: Vec<&str> = header
                .iter()
                .enumerate()
                .map(|(i, _)| if i == 0 { "---" } else { "---:" })
                .collect();
            out.push_str(&format!("| {} |\n", align.join(" | ")));
            for row in &rows {
                out.push_str(&format!("| {} |\n", row.join(" | ")));
            }
            out
        }
    })
}

/// Writes `tables/<setting>.{csv,md}` for every setting in the report.
pub fn report_tables(report: &MetricsReport, dir: impl AsRef<Path>) -> Result<(), HarnessError> {
    let dir = dir.as_ref().join("tables");
    let csv = report
        .settings
        .iter()
        .map(|&s| {
            Ok((
                s,
                render_table(report, s, TableStyle::Csv)?,
                render_table(report, s, TableStyle::Markdown)?,
            ))
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    for (setting, csv, md) in csv {
        for (ext, body) in [("csv", csv), ("md", md)] {
            let path = dir.join(format!("{setting}.{ext}"));
            std::fs::write(&path, body).map_err(|e| io_err(&path, e))?;
        }
    }
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut body = serde_json::to_string_pretty(value).expect("report serializes");
    body.push('\n');
    std::fs::write(path, body).map_err(|e| io_err(path, e))
}

/// One row per metric summary:
/// `variable,setting,technique,model,split,metric,mean,std,n_runs,selected`.
pub fn write_metrics_csv(report: &MetricsReport, path: impl AsRef<Path>) -> Result<(), HarnessError> {
    let path = path.as_ref();
    let err = |e: csv::Error| io_err(path, e);
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record([
        "variable",
        "setting",
        "technique",
        "model",
        "split",
        "metric",
        "mean",
        "std",
        "n_runs",
        "selected",
    ])
    .map_err(err)?;
    for r in &report.rows {
        w.write_record([
            r.variable.as_str(),
            r.setting.as_str(),
            &r.technique,
            &r.model,
            &r.split,
            &r.metric,
            &format!("{:.6}", r.mean),
            &format!("{:.6}", r.std),
            &r.n_runs.to_string(),
            if r.selected { "true" } else { "false" },
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Writes the full report directory: `report.json`, `metrics.csv`,
/// `selected.json`, `tables/` and `cells/<variable>/<technique>/<seed>.json`
/// (one record per setting in each cell file).
pub fn write_report(report: &MetricsReport, dir: impl AsRef<Path>) -> Result<(), HarnessError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    report_tables(report, dir)?;
    write_json(&dir.join("report.json"), report)?;
    write_json(&dir.join("selected.json"), &report.selected)?;
    write_metrics_csv(report, dir.join("metrics.csv"))?;
    let mut grouped: BTreeMap<(&str, &str, u64), Vec<&CellRecord>> = BTreeMap::new();
    for cell in &report.cells {
        grouped
            .entry((cell.variable.as_str(), cell.technique.as_str(), cell.seed))
            .or_default()
            .push(cell);
    }
    for ((variable, technique, seed), cells) in grouped {
        let cell_dir = dir.join("cells").join(variable).join(technique);
        std::fs::create_dir_all(&cell_dir).map_err(|e| io_err(&cell_dir, e))?;
        write_json(&cell_dir.join(format!("{seed}.json")), &cells)?;
    }
    Ok(())
}

pub fn read_report(path: impl AsRef<Path>) -> Result<MetricsReport, HarnessError> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&raw).map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::run::{MetricRow, Selection};

    fn row(technique: &str, model: &str, metric: &str, mean: f64, std: f64) -> MetricRow {
        MetricRow {
            variable: "objective".into(),
            setting: Setting::ThreeWay,
            technique: technique.into(),
            model: model.into(),
            split: "test".into(),
            metric: metric.into(),
            mean,
            std,
            n_runs: 5,
            selected: technique == "weighted",
        }
    }

    fn report() -> MetricsReport {
        MetricsReport {
            variables: vec!["objective".into()],
            settings: vec![Setting::ThreeWay, Setting::Binary],
            techniques: vec!["normal".into(), "weighted".into()],
            seeds: vec![0, 1, 2, 3, 4],
            rows: vec![
                row("-", "majority", "macro_f1", 0.271, 0.012),
                row("weighted", "scorer", "macro_f1", 0.7512, 0.031),
                row("weighted", "scorer", "spearman", 0.8312, 0.0201),
            ],
            selected: vec![Selection {
                variable: "objective".into(),
                setting: Setting::ThreeWay,
                technique: Some("weighted".into()),
                dev_macro_f1: Some(0.7),
            }],
            baselines: vec![],
            cells: vec![],
        }
    }

    #[test]
    fn three_way_table() {
        let md = render_table(&report(), Setting::ThreeWay, TableStyle::Markdown).unwrap();
        assert_eq!(
            md,
            "| Variable | Majority F1 | F1 | Spearman |\n| --- | ---: | ---: | ---: |\n| objective | 27±1 | 75±3 | 0.83±0.02 |\n"
        );
        let csv = render_table(&report(), Setting::ThreeWay, TableStyle::Csv).unwrap();
        assert_eq!(csv, "Variable,Majority F1,F1,Spearman\nobjective,27±1,75±3,0.83±0.02\n");
    }

    #[test]
    fn binary_table_has_no_spearman() {
        let csv = render_table(&report(), Setting::Binary, TableStyle::Csv).unwrap();
        assert_eq!(csv, "Variable,Majority F1,F1\nobjective,-,-\n");
    }

    #[test]
    fn empty_report_is_an_error() {
        let mut r = report();
        r.variables.clear();
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(report_tables(&r, dir.path()), Err(HarnessError::EmptyReport)));
        assert!(!dir.path().join("tables").exists());
    }
}
