//! Success rate, compliance rate and the stepwise protocol for multi-step
//! tasks, where a failed step makes every later step count as failed and
//! compliance is averaged over the trials that reached a step.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::PrimitiveVerb;
use crate::orchestrator::{ExperimentLog, ExperimentStatus};
use crate::simlab::rubric::VALID_SCORES;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("no trials")]
    EmptyTrials,
    #[error("score {0} is not a rubric score")]
    InvalidScore(f64),
    #[error("trial {trial} has {found} step slots, expected {expected}")]
    ChainMismatch { trial: u64, expected: usize, found: usize },
}

pub fn success_rate(outcomes: &[bool]) -> Result<f64, MetricsError> {
    if outcomes.is_empty() {
        return Err(MetricsError::EmptyTrials);
    }
    Ok(outcomes.iter().filter(|b| **b).count() as f64 / outcomes.len() as f64)
}

pub fn compliance_rate(scores: &[f64]) -> Result<f64, MetricsError> {
    if scores.is_empty() {
        return Err(MetricsError::EmptyTrials);
    }
    if let Some(bad) = scores.iter().find(|s| !VALID_SCORES.contains(s)) {
        return Err(MetricsError::InvalidScore(*bad));
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Wilson score interval at 95 %.
pub fn wilson_interval(successes: usize, n: usize) -> Option<(f64, f64)> {
    if n < 2 {
        return None;
    }
    let z = 1.959_963_984_540_054;
    let (n, p) = (n as f64, successes as f64 / n as f64);
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    Some(((centre - half).max(0.0), (centre + half).min(1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub reached: bool,
    pub success: bool,
    pub score: Option<f64>,
}

impl StepOutcome {
    pub const UNREACHED: StepOutcome = StepOutcome {
        reached: false,
        success: false,
        score: None,
    };

    pub fn reached(success: bool, score: f64) -> Self {
        StepOutcome {
            reached: true,
            success,
            score: Some(score),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub steps: Vec<StepOutcome>,
}

impl TrialRecord {
    /// Builds a record from per-step (success, score) pairs of the steps
    /// actually run; everything after the first failure is unreached.
    pub fn from_results(trial: u64, chain_len: usize, results: &[(bool, f64)]) -> Self {
        let mut steps = Vec::with_capacity(chain_len);
        let mut alive = true;
        for k in 0..chain_len {
            match results.get(k) {
                Some(&(ok, score)) if alive => {
                    steps.push(StepOutcome::reached(ok, score));
                    alive = ok;
                }
                _ => {
                    steps.push(StepOutcome::UNREACHED);
                    alive = false;
                }
            }
        }
        TrialRecord { trial, steps }
    }

    /// With `count_retry_success` off, a step only counts when the monitor
    /// accepted every attempt of it.
    pub fn from_log(log: &ExperimentLog, chain_len: usize, count_retry_success: bool) -> Result<Self, MetricsError> {
        let trial = log.config.trial;
        if matches!(log.status, ExperimentStatus::Error { .. } | ExperimentStatus::PlanParseFailure) {
            return Ok(Self::from_results(trial, chain_len, &[(false, 0.0)]));
        }
        if log.plan_len() != chain_len {
            return Err(MetricsError::ChainMismatch {
                trial,
                expected: chain_len,
                found: log.plan_len(),
            });
        }
        let results: Vec<(bool, f64)> = log
            .traces
            .iter()
            .map(|t| {
                let ok = t.succeeded() && (count_retry_success || t.attempts.iter().all(|a| a.verdict));
                (ok, t.score())
            })
            .collect();
        Ok(Self::from_results(trial, chain_len, &results))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub label: String,
    /// Fraction of all trials with steps 1..=k successful.
    pub sr: f64,
    pub successes: usize,
    pub reached: usize,
    /// Mean score over trials that reached the step; absent if none did.
    pub cr: Option<f64>,
    pub sr_ci95: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task_id: String,
    pub trials: usize,
    pub steps: Vec<StepStats>,
}

pub fn stepwise_evaluate(trials: &[TrialRecord], chain_len: usize) -> Result<TaskReport, MetricsError> {
    let labels: Vec<String> = (1..=chain_len).map(|k| format!("step {k}")).collect();
    stepwise_evaluate_labeled(trials, &labels, "")
}

pub fn stepwise_evaluate_labeled(trials: &[TrialRecord], labels: &[String], task_id: &str) -> Result<TaskReport, MetricsError> {
    if trials.is_empty() {
        return Err(MetricsError::EmptyTrials);
    }
    let chain_len = labels.len();
    if let Some(t) = trials.iter().find(|t| t.steps.len() != chain_len) {
        return Err(MetricsError::ChainMismatch {
            trial: t.trial,
            expected: chain_len,
            found: t.steps.len(),
        });
    }
    let n = trials.len();
    let mut steps = Vec::with_capacity(chain_len);
    for (k, label) in labels.iter().enumerate() {
        let reached: Vec<&TrialRecord> = trials.iter().filter(|t| t.steps[..k].iter().all(|s| s.success)).collect();
        let successes = reached.iter().filter(|t| t.steps[k].success).count();
        let scores: Vec<f64> = reached.iter().map(|t| t.steps[k].score.unwrap_or(0.0)).collect();
        let cr = if scores.is_empty() { None } else { Some(compliance_rate(&scores)?) };
        steps.push(StepStats {
            label: label.clone(),
            sr: successes as f64 / n as f64,
            successes,
            reached: reached.len(),
            cr,
            sr_ci95: wilson_interval(successes, n),
        });
    }
    Ok(TaskReport {
        task_id: task_id.to_string(),
        trials: n,
        steps,
    })
}

/// Column labels for a plan: position and verb.
pub fn chain_labels(verbs: &[PrimitiveVerb]) -> Vec<String> {
    verbs.iter().enumerate().map(|(i, v)| format!("S{} {}", i + 1, v.name())).collect()
}

/// Report for a batch of logs of one task. The chain comes from the first
/// log with a parsed plan.
pub fn evaluate_logs(logs: &[ExperimentLog], count_retry_success: bool) -> Result<TaskReport, MetricsError> {
    let first = logs.first().ok_or(MetricsError::EmptyTrials)?;
    let verbs: Vec<PrimitiveVerb> = logs
        .iter()
        .find_map(|l| l.plan.as_ref())
        .map(|p| p.steps.iter().map(|s| s.verb).collect())
        .unwrap_or_default();
    let labels = if verbs.is_empty() { vec!["S1".to_string()] } else { chain_labels(&verbs) };
    let trials = logs
        .iter()
        .map(|l| TrialRecord::from_log(l, labels.len(), count_retry_success))
        .collect::<Result<Vec<_>, _>>()?;
    stepwise_evaluate_labeled(&trials, &labels, &first.config.task_id)
}

impl TaskReport {
    pub fn to_json(&self) -> String {
        let v = serde_json::to_value(self).expect("report serializes");
        serde_json::to_string_pretty(&v).expect("value serializes")
    }

    /// One header line and one row, with an SR(%) and a CR column per step.
    pub fn to_tsv(&self) -> String {
        let mut head = vec!["task".to_string(), "trials".to_string()];
        let mut row = vec![self.task_id.clone(), self.trials.to_string()];
        for s in &self.steps {
            head.push(format!("{} SR(%)", s.label));
            head.push(format!("{} CR", s.label));
            row.push(format!("{:.1}", s.sr * 100.0));
            row.push(s.cr.map_or("-".to_string(), |c| format!("{c:.3}")));
        }
        let widths: Vec<usize> = head.iter().zip(&row).map(|(h, r)| h.len().max(r.len())).collect();
        let mut out = String::new();
        for line in [&head, &row] {
            let cells: Vec<String> = line.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            let _ = writeln!(out, "{}", cells.join("\t").trim_end());
        }
        out
    }
}

/// Published per-verb (SR, CR) rows usable as calibration input, in verb
/// order Grasp, Heat, Dip, Pour, Stir, Transfer, Press.
pub const TABLE_ROWS: &[(&str, [(f64, f64); 7])] = &[
    ("act", [(0.55, 0.325), (0.20, 0.063), (0.10, 0.050), (0.25, 0.288), (0.15, 0.075), (0.15, 0.063), (0.00, 0.100)]),
    ("rdt", [(0.20, 0.100), (0.60, 0.363), (0.80, 0.775), (0.90, 0.675), (0.75, 0.400), (0.75, 0.513), (0.65, 0.413)]),
    ("pi0", [(0.40, 0.200), (0.55, 0.325), (0.80, 0.800), (0.80, 0.475), (0.85, 0.600), (0.80, 0.525), (0.70, 0.575)]),
    ("prompted_open_loop", [(0.85, 0.750), (0.70, 0.575), (0.85, 0.850), (0.80, 0.663), (0.95, 0.650), (0.85, 0.538), (0.75, 0.613)]),
    ("prompted_closed_loop", [(0.95, 0.875), (0.90, 0.800), (0.95, 0.950), (0.95, 0.800), (1.00, 0.825), (0.95, 0.675), (0.85, 0.663)]),
];

const TABLE_VERBS: [PrimitiveVerb; 7] = [
    PrimitiveVerb::Grasp,
    PrimitiveVerb::Heat,
    PrimitiveVerb::Dip,
    PrimitiveVerb::Pour,
    PrimitiveVerb::Stir,
    PrimitiveVerb::Transfer,
    PrimitiveVerb::Press,
];

pub fn table_row(name: &str) -> Option<BTreeMap<PrimitiveVerb, (f64, f64)>> {
    TABLE_ROWS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, row)| TABLE_VERBS.iter().copied().zip(row.iter().copied()).collect())
}
