use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PairReport, SystemSummary};
use crate::error::{Error, Result};
use crate::model::{MetricName, MetricRange, MetricReport, MetricStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Markdown,
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "markdown" | "md" | "markdown_table" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::Config(format!("unknown report format {other:?}"))),
        }
    }
}

/// One leaderboard row.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub name: String,
    pub report: MetricReport,
}

/// Rows from an eval `summary.json`, a single pair report, or a directory
/// of pair reports (one row per file, sorted by path).
pub fn load_rows(path: &Path) -> Result<Vec<ReportRow>> {
    let read = |p: &Path| std::fs::read(p).map_err(|e| Error::io(p, e));
    if path.is_dir() {
        let mut files = Vec::new();
        let mut stack = vec![path.to_path_buf()];
        while let Some(dir) = stack.pop() {
            for entry in std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
                let p = entry.map_err(|e| Error::io(&dir, e))?.path();
                if p.is_dir() {
                    stack.push(p);
                } else if p.extension().is_some_and(|e| e == "json") {
                    files.push(p);
                }
            }
        }
        files.sort();
        return files
            .iter()
            .map(|f| {
                let r: PairReport = serde_json::from_slice(&read(f)?)?;
                Ok(ReportRow {
                    name: format!("{}/{}", r.system, r.pair_id),
                    report: r.report,
                })
            })
            .collect();
    }
    let bytes = read(path)?;
    if let Ok(systems) = serde_json::from_slice::<Vec<SystemSummary>>(&bytes) {
        return Ok(systems
            .into_iter()
            .map(|s| ReportRow {
                name: s.name,
                report: s.report,
            })
            .collect());
    }
    let r: PairReport = serde_json::from_slice(&bytes)
        .map_err(|e| Error::Malformed(format!("{}: neither an eval summary nor a pair report: {e}", path.display())))?;
    Ok(vec![ReportRow {
        name: format!("{}/{}", r.system, r.pair_id),
        report: r.report,
    }])
}

fn decimals(m: MetricName) -> usize {
    match m.range() {
        MetricRange::Percentage => 2,
        _ => 4,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
enum Rank {
    Best,
    Second,
    None,
}

#[derive(Debug, Clone, Serialize)]
struct Cell {
    /// Display text: the rounded value, `n/a` or `ERR`.
    text: String,
    value: Option<f64>,
    status: MetricStatus,
    rank: Rank,
}

fn cells(rows: &[ReportRow], second_best: bool) -> Vec<Vec<Cell>> {
    let mut table: Vec<Vec<Cell>> = rows
        .iter()
        .map(|r| {
            MetricName::ALL
                .iter()
                .map(|&m| {
                    let v = r.report.get(m);
                    let status = v.map_or(MetricStatus::Skipped, |v| v.status);
                    let (text, value) = match v.and_then(|v| v.ok_value()) {
                        Some(x) => {
                            let t = format!("{:.*}", decimals(m), x);
                            let rounded = t.parse::<f64>().expect("formatted float");
                            (t, Some(rounded))
                        }
                        None if status == MetricStatus::Error => ("ERR".into(), None),
                        None => ("n/a".into(), None),
                    };
                    Cell {
                        text,
                        value,
                        status,
                        rank: Rank::None,
                    }
                })
                .collect()
        })
        .collect();
    for (j, m) in MetricName::ALL.iter().enumerate() {
        // Ranks compare displayed values, so ties on screen share a flag.
        let mut distinct: Vec<f64> = table.iter().filter_map(|row| row[j].value).collect();
        distinct.sort_by(|a, b| if m.higher_is_better() { b.total_cmp(a) } else { a.total_cmp(b) });
        distinct.dedup();
        for row in &mut table {
            if let Some(v) = row[j].value {
                if distinct.first() == Some(&v) {
                    row[j].rank = Rank::Best;
                } else if second_best && distinct.get(1) == Some(&v) {
                    row[j].rank = Rank::Second;
                }
            }
        }
    }
    table
}

fn arrow(m: MetricName) -> &'static str {
    if m.higher_is_better() {
        "↑"
    } else {
        "↓"
    }
}

/// Renders the leaderboard. Columns follow [`MetricName::ALL`]; the best
/// value of each column is bold (markdown) or listed in `best_in` (csv).
pub fn emit_report(rows: &[ReportRow], format: ReportFormat, second_best: bool) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::PreconditionFailed("a report needs at least one row".into()));
    }
    let table = cells(rows, second_best);
    match format {
        ReportFormat::Markdown => {
            let mut s = String::from("| Method |");
            for m in MetricName::ALL {
                s.push_str(&format!(" {} {} |", m.title(), arrow(m)));
            }
            s.push_str("\n|:---|");
            s.push_str(&"---:|".repeat(MetricName::ALL.len()));
            s.push('\n');
            for (row, cells) in rows.iter().zip(&table) {
                s.push_str(&format!("| {} |", row.name.replace('|', "\\|")));
                for c in cells {
                    let t = match c.rank {
                        Rank::Best => format!("**{}**", c.text),
                        Rank::Second => format!("_{}_", c.text),
                        Rank::None => c.text.clone(),
                    };
                    s.push_str(&format!(" {t} |"));
                }
                s.push('\n');
            }
            Ok(s)
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = vec!["method".to_string()];
            header.extend(MetricName::ALL.iter().map(|m| m.key().to_string()));
            header.push("best_in".into());
            if second_best {
                header.push("second_in".into());
            }
            let csv_err = |e: csv::Error| Error::Malformed(e.to_string());
            w.write_record(&header).map_err(csv_err)?;
            for (row, cells) in rows.iter().zip(&table) {
                let mut rec = vec![row.name.clone()];
                rec.extend(cells.iter().map(|c| c.text.clone()));
                let keys = |rank: Rank| {
                    MetricName::ALL
                        .iter()
                        .zip(cells)
                        .filter(|(_, c)| c.rank == rank)
                        .map(|(m, _)| m.key())
                        .collect::<Vec<_>>()
                        .join(";")
                };
                rec.push(keys(Rank::Best));
                if second_best {
                    rec.push(keys(Rank::Second));
                }
                w.write_record(&rec).map_err(csv_err)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Malformed(e.to_string()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
        ReportFormat::Json => {
            #[derive(Serialize)]
            struct Column {
                key: &'static str,
                title: &'static str,
                higher_is_better: bool,
                decimals: usize,
            }
            #[derive(Serialize)]
            struct Row<'a> {
                method: &'a str,
                values: std::collections::BTreeMap<&'static str, &'a Cell>,
            }
            #[derive(Serialize)]
            struct Doc<'a> {
                columns: Vec<Column>,
                rows: Vec<Row<'a>>,
            }
            let doc = Doc {
                columns: MetricName::ALL
                    .iter()
                    .map(|&m| Column {
                        key: m.key(),
                        title: m.title(),
                        higher_is_better: m.higher_is_better(),
                        decimals: decimals(m),
                    })
                    .collect(),
                rows: rows
                    .iter()
                    .zip(&table)
                    .map(|(r, cells)| Row {
                        method: &r.name,
                        values: MetricName::ALL.iter().map(|m| m.key()).zip(cells).collect(),
                    })
                    .collect(),
            };
            let mut s = serde_json::to_string_pretty(&doc)?;
            s.push('\n');
            Ok(s)
        }
    }
}
