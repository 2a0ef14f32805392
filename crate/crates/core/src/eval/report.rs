use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{EpisodeResult, MetricsReport};
use super::rollout::Walker;
use crate::error::Result;
use crate::jsonl::{self, Header};
use crate::world::io::PoseRecord;
use crate::world::Action;

pub const TRACE_KIND: &str = "trace";
pub const RESULTS_KIND: &str = "results";

/// One executed action with the pose and bank it was chosen from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub episode_id: u64,
    pub t: u64,
    pub pose: PoseRecord,
    pub action: Action,
    pub bank: Vec<u64>,
}

impl TraceStep {
    pub(crate) fn new(episode_id: u64, walker: &Walker<'_>, action: Action) -> Self {
        TraceStep {
            episode_id,
            t: walker.t(),
            pose: PoseRecord::from(&walker.state()),
            action,
            bank: walker.bank_timestamps(),
        }
    }
}

pub fn write_traces(path: &Path, steps: &[TraceStep], fingerprint: &str) -> Result<()> {
    jsonl::write(path, &Header::new(TRACE_KIND, fingerprint), steps)
}

pub fn read_traces(path: &Path) -> Result<(Header, Vec<TraceStep>)> {
    jsonl::read(path, TRACE_KIND)
}

/// Store per-episode results without their pose sequences.
pub fn write_results(path: &Path, results: &[EpisodeResult], fingerprint: &str) -> Result<()> {
    let slim: Vec<EpisodeResult> = results
        .iter()
        .map(|r| EpisodeResult {
            agent_path: Vec::new(),
            ..r.clone()
        })
        .collect();
    jsonl::write(path, &Header::new(RESULTS_KIND, fingerprint), &slim)
}

pub fn read_results(path: &Path) -> Result<(Header, Vec<EpisodeResult>)> {
    jsonl::read(path, RESULTS_KIND)
}

/// One CSV line: a configuration evaluated under one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub table: String,
    pub config: String,
    /// Sweep value, or empty outside sweeps.
    pub value: String,
    pub seed: u64,
    /// Correction pairs used for fine-tuning; 0 when none.
    pub pairs: usize,
    pub metrics: MetricsReport,
}

const CSV_HEADER: &str = "table,config,value,seed,pairs,n_episodes,sr,spl,ne,os,ndtw,fingerprint";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn write_csv(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let m = &r.metrics;
        writeln!(
            out,
            "{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            csv_field(&r.table),
            csv_field(&r.config),
            csv_field(&r.value),
            r.seed,
            r.pairs,
            m.n_episodes,
            m.sr,
            m.spl,
            m.ne,
            m.os,
            m.ndtw,
            m.fingerprint
        )
        .expect("writing to a String");
    }
    jsonl::write_atomic(path, out.as_bytes())
}

/// Markdown table of seed-averaged metrics, one line per distinct
/// `(config, value)` in first-seen order. Rates are percentages.
pub fn table_markdown(title: &str, rows: &[ReportRow]) -> String {
    let mut groups: Vec<((String, String), Vec<&ReportRow>)> = Vec::new();
    for r in rows {
        let key = (r.config.clone(), r.value.clone());
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    let with_value = rows.iter().any(|r| !r.value.is_empty());
    let mut out = format!("### {title}\n\n");
    if with_value {
        out.push_str("| Method | Value | Data | Seeds | NE ↓ | OS ↑ | SR ↑ | SPL ↑ | nDTW ↑ |\n");
        out.push_str("|---|---|---|---|---|---|---|---|---|\n");
    } else {
        out.push_str("| Method | Data | Seeds | NE ↓ | OS ↑ | SR ↑ | SPL ↑ | nDTW ↑ |\n");
        out.push_str("|---|---|---|---|---|---|---|---|\n");
    }
    for ((config, value), g) in &groups {
        let n = g.len() as f64;
        let mean = |f: fn(&MetricsReport) -> f64| g.iter().map(|r| f(&r.metrics)).sum::<f64>() / n;
        let pairs = g.iter().map(|r| r.pairs).sum::<usize>() / g.len();
        let data = if pairs == 0 {
            "-".to_string()
        } else {
            pairs.to_string()
        };
        let value_col = if with_value {
            format!(" {value} |")
        } else {
            String::new()
        };
        writeln!(
            out,
            "| {config} |{value_col} {data} | {} | {:.2} | {:.1} | {:.1} | {:.1} | {:.1} |",
            g.len(),
            mean(|m| m.ne),
            100.0 * mean(|m| m.os),
            100.0 * mean(|m| m.sr),
            100.0 * mean(|m| m.spl),
            100.0 * mean(|m| m.ndtw),
        )
        .expect("writing to a String");
    }
    out
}

pub fn write_markdown(path: &Path, sections: &[String]) -> Result<()> {
    jsonl::write_atomic(path, sections.join("\n").as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(config: &str, seed: u64, sr: f64) -> ReportRow {
        ReportRow {
            table: "modules".into(),
            config: config.into(),
            value: String::new(),
            seed,
            pairs: 0,
            metrics: MetricsReport {
                sr,
                spl: sr / 2.0,
                ne: 4.0,
                os: sr,
                ndtw: 0.5,
                n_episodes: 10,
                fingerprint: "f".into(),
            },
        }
    }

    #[test]
    fn markdown_groups_by_config() {
        let rows = vec![
            row("baseline", 0, 0.2),
            row("+AMR", 0, 0.3),
            row("baseline", 1, 0.4),
        ];
        let md = table_markdown("Modules", &rows);
        let lines: Vec<&str> = md
            .lines()
            .filter(|l| l.starts_with("| ") && !l.starts_with("| Method"))
            .collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("| baseline | - | 2 |"));
        assert!(lines[0].contains("| 30.0 |"));
    }

    #[test]
    fn csv_has_one_line_per_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        write_csv(&p, &[row("a,b", 0, 0.5), row("c", 1, 0.25)]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("modules,\"a,b\",,0,0,10,0.500000"));
    }
}
