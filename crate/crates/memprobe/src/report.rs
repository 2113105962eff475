//! Score aggregation: per-task and per-category means, parameter
//! breakdowns, and JSON/CSV emission.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::score_case;
use crate::runner::RunRecord;
use crate::snapshot::{grid_axes, Category, GenParams, MetricKind, Task, TestCase};

/// One scored case, carrying enough of the case for aggregation so a scores
/// file is self-contained.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScoredRecord {
    pub case_id: String,
    pub task: Task,
    pub category: Category,
    pub model_name: String,
    pub master_seed: u64,
    pub metric: MetricKind,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extraction_note: Option<String>,
    /// True when no run record covered this case (scored 0, not dropped).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub missing: bool,
    pub params: GenParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub count: usize,
}

/// task -> parameter -> value -> stat.
pub type Breakdowns = BTreeMap<String, BTreeMap<String, BTreeMap<String, Stat>>>;

/// Aggregated results. Category means are unweighted means of task means,
/// declared in `category_weighting`, since tasks have unequal case counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub model_name: String,
    pub master_seed: u64,
    pub category_weighting: String,
    pub per_task: BTreeMap<String, Stat>,
    pub per_category: BTreeMap<String, Stat>,
    pub overall: Stat,
    /// Single-valued parameters are omitted.
    pub parameter_breakdowns: Breakdowns,
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("record for unknown case id {0}")]
    CaseRecordMismatch(String),
    #[error("no records to aggregate")]
    Empty,
    #[error("line {line}: malformed scores line: {message}")]
    MalformedLine { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Join run records onto cases and score them. Cases without a record are
/// scored 0 and flagged missing; records without a case are an error.
pub fn score_records(
    cases: &[TestCase],
    records: &[RunRecord],
) -> Result<Vec<ScoredRecord>, ReportError> {
    let by_case: BTreeMap<&str, &TestCase> = cases.iter().map(|c| (c.id.as_str(), c)).collect();
    let mut by_record: BTreeMap<&str, &RunRecord> = BTreeMap::new();
    for record in records {
        if !by_case.contains_key(record.case_id.as_str()) {
            return Err(ReportError::CaseRecordMismatch(record.case_id.clone()));
        }
        by_record.insert(record.case_id.as_str(), record);
    }
    let model_name = records
        .first()
        .map(|r| r.model_name.clone())
        .unwrap_or_else(|| "unknown".to_string());

    Ok(cases
        .iter()
        .map(|case| {
            let record = by_record.get(case.id.as_str());
            let (score, note, missing) = match record {
                Some(r) => match &r.raw_response {
                    Some(text) => {
                        let s = score_case(case, text);
                        (s.value, s.extraction_note, false)
                    }
                    None => (
                        0.0,
                        Some(format!(
                            "request failed: {}",
                            r.error.as_deref().unwrap_or("unknown error")
                        )),
                        false,
                    ),
                },
                None => (0.0, Some("no record for case".to_string()), true),
            };
            ScoredRecord {
                case_id: case.id.clone(),
                task: case.task,
                category: case.task.category(),
                model_name: record
                    .map(|r| r.model_name.clone())
                    .unwrap_or_else(|| model_name.clone()),
                master_seed: case.seed.master_seed,
                metric: case.metric,
                score,
                extraction_note: note,
                missing,
                params: case.params.clone(),
            }
        })
        .collect())
}

/// Aggregate scored records into a report.
pub fn aggregate_scored(scored: &[ScoredRecord]) -> Result<Report, ReportError> {
    if scored.is_empty() {
        return Err(ReportError::Empty);
    }

    let mut task_sums: BTreeMap<Task, (f64, usize)> = BTreeMap::new();
    for record in scored {
        let entry = task_sums.entry(record.task).or_insert((0.0, 0));
        entry.0 += record.score;
        entry.1 += 1;
    }
    let per_task: BTreeMap<String, Stat> = task_sums
        .iter()
        .map(|(task, (sum, count))| {
            (
                task.name().to_string(),
                Stat {
                    mean: sum / *count as f64,
                    count: *count,
                },
            )
        })
        .collect();

    let mut category_tasks: BTreeMap<Category, Vec<(f64, usize)>> = BTreeMap::new();
    for (task, (sum, count)) in &task_sums {
        category_tasks
            .entry(task.category())
            .or_default()
            .push((sum / *count as f64, *count));
    }
    let per_category: BTreeMap<String, Stat> = category_tasks
        .iter()
        .map(|(category, tasks)| {
            let mean = tasks.iter().map(|(m, _)| m).sum::<f64>() / tasks.len() as f64;
            let count = tasks.iter().map(|(_, c)| c).sum();
            (category.name().to_string(), Stat { mean, count })
        })
        .collect();

    let overall_mean =
        per_category.values().map(|s| s.mean).sum::<f64>() / per_category.len() as f64;
    let overall = Stat {
        mean: overall_mean,
        count: scored.len(),
    };

    type RawBuckets = BTreeMap<String, BTreeMap<String, BTreeMap<String, (f64, usize)>>>;
    let mut breakdown_sums: RawBuckets = BTreeMap::new();
    for record in scored {
        for (axis, value) in grid_axes(record.task, &record.params) {
            let entry = breakdown_sums
                .entry(record.task.name().to_string())
                .or_default()
                .entry(axis.to_string())
                .or_default()
                .entry(value)
                .or_insert((0.0, 0));
            entry.0 += record.score;
            entry.1 += 1;
        }
    }
    let mut parameter_breakdowns = BTreeMap::new();
    for (task, axes) in breakdown_sums {
        let mut kept: BTreeMap<String, BTreeMap<String, Stat>> = BTreeMap::new();
        for (axis, values) in axes {
            if values.len() < 2 {
                continue; // single-valued parameter, nothing to break down
            }
            kept.insert(
                axis,
                values
                    .into_iter()
                    .map(|(value, (sum, count))| {
                        (
                            value,
                            Stat {
                                mean: sum / count as f64,
                                count,
                            },
                        )
                    })
                    .collect(),
            );
        }
        if !kept.is_empty() {
            parameter_breakdowns.insert(task, kept);
        }
    }

    Ok(Report {
        model_name: scored[0].model_name.clone(),
        master_seed: scored[0].master_seed,
        category_weighting: "unweighted_mean_of_task_means".to_string(),
        per_task,
        per_category,
        overall,
        parameter_breakdowns,
    })
}

/// Score and aggregate in one step.
pub fn aggregate(cases: &[TestCase], records: &[RunRecord]) -> Result<Report, ReportError> {
    aggregate_scored(&score_records(cases, records)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl ReportFormat {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "json" => Some(ReportFormat::Json),
            "csv" => Some(ReportFormat::Csv),
            _ => None,
        }
    }
}

pub fn render_json(report: &Report) -> String {
    serde_json::to_string_pretty(report).expect("report serializes")
}

pub fn parse_json(text: &str) -> Result<Report, serde_json::Error> {
    serde_json::from_str(text)
}

/// CSV with one row per (level, name, mean, count): tasks, categories, the
/// overall line, then breakdown buckets.
pub fn render_csv(report: &Report) -> String {
    let mut out = String::from("level,name,metric_mean,case_count\n");
    for (task, stat) in &report.per_task {
        out.push_str(&format!("task,{task},{},{}\n", stat.mean, stat.count));
    }
    for (category, stat) in &report.per_category {
        out.push_str(&format!(
            "category,{category},{},{}\n",
            stat.mean, stat.count
        ));
    }
    out.push_str(&format!(
        "overall,overall,{},{}\n",
        report.overall.mean, report.overall.count
    ));
    for (task, axes) in &report.parameter_breakdowns {
        for (axis, values) in axes {
            for (value, stat) in values {
                out.push_str(&format!(
                    "breakdown,{task}/{axis}={value},{},{}\n",
                    stat.mean, stat.count
                ));
            }
        }
    }
    out
}

pub fn write_scored(records: &[ScoredRecord], path: &Path) -> Result<(), ReportError> {
    let file = std::fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    for record in records {
        serde_json::to_writer(&mut out, record).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_scored(path: &Path) -> Result<Vec<ScoredRecord>, ReportError> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let text = line?;
        let record = serde_json::from_str(&text).map_err(|e| ReportError::MalformedLine {
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}
