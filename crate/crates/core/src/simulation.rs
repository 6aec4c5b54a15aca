//! Simulated users, episode metrics and seeded batch aggregation.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ambiguity::similar_moves;
use crate::belief::{ExecError, ReplanStats};
use crate::dialogue::{TargetKind, UtteranceKind};
use crate::domain::Act;
use crate::session::{AgentProfile, ClientEvent, ClientMessage, LogEvent, LogRecord, ServerMessage, Session};

/// How the simulated user behaves at each instruction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserModel {
    /// Probability of doing what was asked.
    pub gamma: f64,
    /// Probability of waiting for the follow-up on an unambiguous
    /// instruction. Ambiguous ones are always waited on.
    pub hesitation: f64,
    /// Time between the last utterance the user waits for and the action.
    pub reaction_ms: u64,
    pub max_steps: usize,
}

impl Default for UserModel {
    fn default() -> Self {
        UserModel { gamma: 0.95, hesitation: 0.5, reaction_ms: 1000, max_steps: 1000 }
    }
}

impl UserModel {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.hesitation) {
            return Err(format!("hesitation must lie in [0, 1], got {}", self.hesitation));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EpisodeError {
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error("the session refused `{action}`: {reason}")]
    Refused { action: String, reason: String },
    #[error("no goal after {0} steps")]
    StepLimit(usize),
}

#[derive(Debug)]
pub struct Episode {
    pub log: Vec<LogRecord>,
    pub stats: ReplanStats,
    /// Σ over bikes of the initial candidate count.
    pub candidate_total: usize,
}

fn event_for(session: &Session, act: Act) -> ClientEvent {
    let task = session.execution().task();
    match act {
        Act::Move { to, .. } => ClientEvent::MoveTo { landmark: task.landmark_id(to).into() },
        Act::Pickup { bike, .. } => ClientEvent::Pickup { bike: Some(task.bike_id(bike).into()) },
        Act::Find { .. } => unreachable!("find is never a physical option"),
    }
}

/// Runs one session to the goal against a simulated user, in virtual time.
pub fn simulate_episode(profile: &Arc<AgentProfile>, user: &UserModel, rng: &mut impl Rng) -> Result<Episode, EpisodeError> {
    let (mut session, _) = Session::start("sim", profile.clone(), None, 0)?;
    let candidate_total = session.execution().belief().candidates.iter().map(|c| c.len()).sum();
    let mut now = 0;
    let mut seq = 0;
    while !session.ended() {
        if session.execution().ctx.history.len() >= user.max_steps {
            return Err(EpisodeError::StepLimit(user.max_steps));
        }
        let a0 = session.execution().next().expect("a live session has an instruction");
        let similars = similar_moves(profile.task.as_ref(), a0);
        let hesitate = rng.gen_bool(user.hesitation);
        let complies = rng.gen_bool(user.gamma);
        let mut elaborated = false;
        if !similars.is_empty() || hesitate {
            if let Some(deadline) = session.deadline() {
                let out = session.tick(deadline);
                elaborated = out.iter().any(|m| {
                    matches!(&m.message, ServerMessage::Utterance(u) if u.kind == UtteranceKind::Elaboration)
                });
                now = deadline;
            }
        }
        let options = session.execution().options();
        let act = if complies {
            match session.offered_move() {
                Some(m) => m,
                None if !similars.is_empty() && !elaborated => {
                    let mut compatible = similars.clone();
                    compatible.push(a0);
                    *compatible.choose(rng).unwrap()
                }
                None => a0,
            }
        } else {
            let others: Vec<Act> = options.iter().copied().filter(|&a| a != a0).collect();
            others.choose(rng).copied().unwrap_or(a0)
        };
        now += user.reaction_ms;
        seq += 1;
        let out = session.handle(ClientMessage { seq, event: event_for(&session, act) }, now);
        for m in out {
            if let ServerMessage::Rejected { reason } | ServerMessage::Error { message: reason } = m.message {
                let action = profile.task.label(act).to_string();
                return Err(EpisodeError::Refused { action, reason });
            }
        }
    }
    let stats = session.execution().stats;
    Ok(Episode { log: session.log().to_vec(), stats, candidate_total })
}

pub const METRICS: [&str; 10] = [
    "|pi|",
    "Move",
    "Pickup",
    "|similars|",
    "Elaborate",
    "PreTarget(K)",
    "Target(K)",
    "Target(Pos)",
    "Inefficient",
    "Initiative",
];

/// Per-episode counts, in [`METRICS`] order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Metrics {
    pub length: usize,
    pub moves: usize,
    pub pickups: usize,
    pub similars: usize,
    pub elaborate: usize,
    pub pretarget_k: usize,
    pub target_k: usize,
    pub target_pos: usize,
    pub inefficient: usize,
    pub initiative: usize,
}

impl Metrics {
    pub fn values(&self) -> [usize; 10] {
        [
            self.length,
            self.moves,
            self.pickups,
            self.similars,
            self.elaborate,
            self.pretarget_k,
            self.target_k,
            self.target_pos,
            self.inefficient,
            self.initiative,
        ]
    }
}

pub fn count_metrics(log: &[LogRecord]) -> Metrics {
    let mut m = Metrics::default();
    for r in log {
        match &r.event {
            LogEvent::Accepted { action, .. } => {
                m.length += 1;
                match action.name.as_str() {
                    "move" => m.moves += 1,
                    "pickup" => m.pickups += 1,
                    _ => {}
                }
            }
            LogEvent::Utterance { utterance, similars } => match utterance.kind {
                UtteranceKind::Instruction => m.similars += similars.unwrap_or(0),
                UtteranceKind::Elaboration => m.elaborate += 1,
                UtteranceKind::PreTarget if utterance.target == Some(TargetKind::KnowledgeGain) => m.pretarget_k += 1,
                UtteranceKind::TargetJustification => m.target_k += 1,
                UtteranceKind::PositionTarget => m.target_pos += 1,
                UtteranceKind::InefficiencyJustification => m.inefficient += 1,
                UtteranceKind::InitiativeOffer => m.initiative += 1,
                _ => {}
            },
            _ => {}
        }
    }
    m
}

/// Single-pass mean and variance.
#[derive(Clone, Copy, Debug, Default)]
struct Welford {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn stat(&self) -> Stat {
        let sd = if self.n > 1 { (self.m2 / (self.n - 1) as f64).sqrt() } else { 0.0 };
        Stat { mean: self.mean, sd }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single episode.
    pub sd: f64,
}

impl Stat {
    /// Normal-approximation 95% interval of the mean.
    pub fn ci95(&self, n: usize) -> (f64, f64) {
        let half = 1.96 * self.sd / (n as f64).sqrt();
        (self.mean - half, self.mean + half)
    }
}

/// Metric rows by configuration columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    /// Free-form `key=value` settings written as comment lines.
    pub meta: Vec<(String, String)>,
    pub n: usize,
    pub columns: Vec<String>,
    /// `stats[column][metric]`, metrics in [`METRICS`] order.
    pub stats: Vec<Vec<Stat>>,
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("unknown report format `{0}` (expected csv or text)")]
    Format(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed report: {0}")]
    Malformed(String),
}

impl Report {
    pub fn column(&self, name: &str) -> Option<&[Stat]> {
        self.columns.iter().position(|c| c == name).map(|i| self.stats[i].as_slice())
    }

    pub fn stat(&self, column: &str, metric: &str) -> Option<Stat> {
        let m = METRICS.iter().position(|&x| x == metric)?;
        self.column(column).map(|c| c[m])
    }

    pub fn emit(&self, format: &str) -> Result<String, ReportError> {
        match format {
            "csv" => Ok(self.to_csv()),
            "text" => Ok(self.to_text()),
            other => Err(ReportError::Format(other.into())),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# n={}", self.n);
        for (k, v) in &self.meta {
            let _ = writeln!(out, "# {k}={v}");
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["metric".to_string()];
        for c in &self.columns {
            header.push(format!("{c} mean"));
            header.push(format!("{c} sd"));
        }
        w.write_record(&header).expect("in-memory write");
        for (i, metric) in METRICS.iter().enumerate() {
            let mut row = vec![metric.to_string()];
            for col in &self.stats {
                // Display prints the shortest string that parses back exactly
                row.push(col[i].mean.to_string());
                row.push(col[i].sd.to_string());
            }
            w.write_record(&row).expect("in-memory write");
        }
        out + &String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    pub fn from_csv(text: &str) -> Result<Report, ReportError> {
        let mut meta = Vec::new();
        let mut n = None;
        let mut body = String::new();
        for line in text.lines() {
            match line.strip_prefix("# ") {
                Some(kv) => {
                    let (k, v) = kv.split_once('=').ok_or_else(|| ReportError::Malformed(format!("comment `{line}`")))?;
                    if k == "n" {
                        n = Some(v.parse().map_err(|_| ReportError::Malformed(format!("n = `{v}`")))?);
                    } else {
                        meta.push((k.to_string(), v.to_string()));
                    }
                }
                None => {
                    body.push_str(line);
                    body.push('\n');
                }
            }
        }
        let n = n.ok_or_else(|| ReportError::Malformed("no `# n=` line".into()))?;
        let mut r = csv::Reader::from_reader(body.as_bytes());
        let header = r.headers()?.clone();
        if header.len() % 2 != 1 || header.get(0) != Some("metric") {
            return Err(ReportError::Malformed("header must be `metric` then mean/sd pairs".into()));
        }
        let columns: Vec<String> = (1..header.len())
            .step_by(2)
            .map(|i| header[i].strip_suffix(" mean").map(str::to_string))
            .collect::<Option<_>>()
            .ok_or_else(|| ReportError::Malformed("column headers must end in ` mean`".into()))?;
        let mut stats = vec![Vec::new(); columns.len()];
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            if METRICS.get(i) != rec.get(0).as_ref() {
                return Err(ReportError::Malformed(format!("row {} should be {:?}", i + 1, METRICS.get(i))));
            }
            for (c, col) in stats.iter_mut().enumerate() {
                let num = |j: usize| -> Result<f64, ReportError> {
                    rec.get(j)
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| ReportError::Malformed(format!("row {} column {j}", i + 1)))
                };
                col.push(Stat { mean: num(1 + 2 * c)?, sd: num(2 + 2 * c)? });
            }
        }
        if stats.iter().any(|c| c.len() != METRICS.len()) {
            return Err(ReportError::Malformed(format!("expected {} metric rows", METRICS.len())));
        }
        Ok(Report { meta, n, columns, stats })
    }

    /// Aligned table with `mean (sd)` cells.
    pub fn to_text(&self) -> String {
        let mut rows = vec![std::iter::once("".to_string()).chain(self.columns.iter().cloned()).collect::<Vec<_>>()];
        for (i, metric) in METRICS.iter().enumerate() {
            let mut row = vec![metric.to_string()];
            row.extend(self.stats.iter().map(|c| format!("{:.2} ({:.2})", c[i].mean, c[i].sd)));
            rows.push(row);
        }
        let widths: Vec<usize> =
            (0..rows[0].len()).map(|j| rows.iter().map(|r| r[j].chars().count()).max().unwrap_or(0)).collect();
        let mut out = format!("n = {}\n", self.n);
        for r in rows {
            let line: Vec<String> = r
                .iter()
                .enumerate()
                .map(|(j, cell)| if j == 0 { format!("{cell:<w$}", w = widths[j]) } else { format!("{cell:>w$}", w = widths[j]) })
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

/// One column of a batch: a label and the agent to run.
#[derive(Clone)]
pub struct Column {
    pub label: String,
    pub profile: Arc<AgentProfile>,
}

#[derive(Debug, thiserror::Error)]
#[error("episode {episode} of `{column}` (seed {seed:#018x}) failed: {error}")]
pub struct BatchError {
    pub column: String,
    pub episode: usize,
    pub seed: u64,
    pub error: EpisodeError,
}

/// Seed of episode `index`; every column sees the same seeds.
pub fn episode_seed(master: u64, index: usize) -> u64 {
    let mut z = master ^ (index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub struct BatchOutcome {
    pub report: Report,
    /// `episodes[column][i]`.
    pub metrics: Vec<Vec<Metrics>>,
    pub stats: Vec<Vec<(ReplanStats, usize)>>,
}

/// Runs `n` episodes per column on the current rayon pool. The result does
/// not depend on the number of threads.
pub fn simulate_batch(columns: &[Column], n: usize, user: &UserModel, seed: u64) -> Result<BatchOutcome, BatchError> {
    let mut stats = Vec::new();
    let mut metrics = Vec::new();
    let mut report_stats = Vec::new();
    for col in columns {
        let results: Vec<_> = (0..n)
            .into_par_iter()
            .map(|i| {
                let s = episode_seed(seed, i);
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                simulate_episode(&col.profile, user, &mut rng)
                    .map(|e| (count_metrics(&e.log), e.stats, e.candidate_total))
                    .map_err(|error| BatchError { column: col.label.clone(), episode: i, seed: s, error })
            })
            .collect();
        let mut acc = [Welford::default(); 10];
        let mut col_metrics = Vec::with_capacity(n);
        let mut col_stats = Vec::with_capacity(n);
        for r in results {
            let (m, st, c) = r?;
            for (w, v) in acc.iter_mut().zip(m.values()) {
                w.push(v as f64);
            }
            col_metrics.push(m);
            col_stats.push((st, c));
        }
        report_stats.push(acc.iter().map(Welford::stat).collect());
        metrics.push(col_metrics);
        stats.push(col_stats);
    }
    let meta = vec![
        ("seed".into(), seed.to_string()),
        ("gamma".into(), user.gamma.to_string()),
        ("hesitation".into(), user.hesitation.to_string()),
    ];
    let report = Report { meta, n, columns: columns.iter().map(|c| c.label.clone()).collect(), stats: report_stats };
    Ok(BatchOutcome { report, metrics, stats })
}
