//! Metrics records, the summary document and their file forms.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowOutcome {
    Delivered,
    /// Dropped by a datacenter absent from the pair's path.
    NotOnPath,
    /// Dropped for another routing reason (unknown session, no instance).
    Unroutable,
    /// Still routing when the run ended.
    Unfinished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub flow: usize,
    pub call: usize,
    pub entry: usize,
    pub exit: usize,
    pub start_ms: u64,
    pub end_ms: u64,
    /// Interval of the entry controller when the flow was admitted.
    pub admitted_interval: u64,
    /// Path selected at admission.
    pub path: Vec<usize>,
    /// Datacenters the first packet actually visited.
    pub visited: Vec<usize>,
    pub outcome: FlowOutcome,
    pub offered_pkts: f64,
    pub delivered_pkts: f64,
    pub loss_pct: f64,
    pub rtt_ms: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxnKind {
    Register,
    Invite,
    Bye,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TxnRecord {
    pub kind: TxnKind,
    pub entry: usize,
    pub exit: usize,
    pub start_ms: u64,
    pub completion_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRecord {
    pub index: u64,
    pub time_ms: u64,
    pub global_interval: Option<u64>,
    pub local_intervals: Vec<u64>,
    /// Working instances per datacenter, ordered as the catalog roles.
    pub working: Vec<Vec<usize>>,
    pub buffered: Vec<Vec<usize>>,
    pub created_total: usize,
    /// Paths routing at datacenter 0 at the boundary.
    pub paths: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    /// Interval the decision takes effect in.
    pub interval: u64,
    pub decided_ms: u64,
    pub paths: Vec<Vec<usize>>,
    pub fallbacks: Vec<[usize; 2]>,
    /// `(dc, role, target)`.
    pub targets: Vec<(usize, String, usize)>,
    pub predicted_dp_pps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Record {
    Flow(FlowRecord),
    Txn(TxnRecord),
    Interval(IntervalRecord),
    Decision(DecisionRecord),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema: u32,
    pub scenario: String,
    pub strategy: String,
    pub tagging: bool,
    pub seed: u64,
    pub horizon_s: u64,
    pub users: usize,
    pub calls: usize,
    pub flows: usize,
    pub flows_full_loss: usize,
    pub flows_zero_loss: usize,
    pub flows_not_on_path: usize,
    pub dp_loss_mean_pct: f64,
    pub dp_loss_packet_pct: f64,
    pub dp_loss_p99_pct: f64,
    pub rtt_mean_ms: f64,
    pub rtt_p95_ms: f64,
    pub rtt_below_100ms_share: f64,
    pub cp_transactions: usize,
    pub cp_completion_mean_ms: f64,
    pub cp_completion_p95_ms: f64,
    pub instances_created: usize,
    pub instances_bootstrapped: usize,
    pub instances_destroyed: usize,
    pub created_by_dc: Vec<usize>,
    pub created_by_role: BTreeMap<String, usize>,
    /// `[dc][interval]` creations.
    pub created_by_interval: Vec<Vec<usize>>,
    pub rounds_completed: u64,
    pub controller_transmissions: u64,
    pub messages_lost: u64,
    pub stale_reports: u64,
    pub max_interval_skew: u64,
    pub suspended_ms: Vec<u64>,
}

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub summary: Summary,
    pub records: Vec<Record>,
}

impl MetricsReport {
    pub fn flows(&self) -> impl Iterator<Item = &FlowRecord> {
        self.records.iter().filter_map(|r| match r {
            Record::Flow(f) => Some(f),
            _ => None,
        })
    }

    pub fn decisions(&self) -> impl Iterator<Item = &DecisionRecord> {
        self.records.iter().filter_map(|r| match r {
            Record::Decision(d) => Some(d),
            _ => None,
        })
    }

    pub fn intervals(&self) -> impl Iterator<Item = &IntervalRecord> {
        self.records.iter().filter_map(|r| match r {
            Record::Interval(i) => Some(i),
            _ => None,
        })
    }

    pub fn summary_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.summary).expect("summary serializes");
        s.push('\n');
        s
    }

    pub fn records_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    /// Writes `summary.json` and `records.jsonl` into `dir`.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("summary.json"), self.summary_json())?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("records.jsonl"))?);
        for r in &self.records {
            serde_json::to_writer(&mut f, r)?;
            f.write_all(b"\n")?;
        }
        f.flush()
    }
}

/// Checks a written report: the summary parses with the current schema and
/// every line is a known record.
pub fn check_report_files(dir: &Path) -> Result<(Summary, usize), String> {
    let text = std::fs::read_to_string(dir.join("summary.json")).map_err(|e| e.to_string())?;
    let summary: Summary = serde_json::from_str(&text).map_err(|e| format!("summary.json: {e}"))?;
    if summary.schema != SCHEMA_VERSION {
        return Err(format!("summary.json: schema {} != {}", summary.schema, SCHEMA_VERSION));
    }
    let lines = std::fs::read_to_string(dir.join("records.jsonl")).map_err(|e| e.to_string())?;
    let mut n = 0;
    for (i, line) in lines.lines().enumerate() {
        serde_json::from_str::<Record>(line).map_err(|e| format!("records.jsonl:{}: {e}", i + 1))?;
        n += 1;
    }
    Ok((summary, n))
}

/// Nearest-rank percentile of an unsorted sample; 0 for an empty one.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * v.len() as f64).ceil() as usize;
    v[rank.clamp(1, v.len()) - 1]
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}
