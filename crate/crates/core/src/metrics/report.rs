//! Metrics report over an evaluation archive: overall, per-category and
//! per-task tables, machine-readable with a plain-text rendering.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::harness::EvaluationArchive;
use crate::rubric::Dimension;

use super::{
    expected_reward, pass_metrics, round3, safety_failure_rate, MetricsError, PassMetrics,
    RateWithCi, TrialOutcome,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub tasks: usize,
    pub trials: usize,
    pub pass: PassMetrics,
    pub pass_at_1_ci: RateWithCi,
    pub expected_reward: f64,
    pub safety_failure: RateWithCi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub agent_id: String,
    pub k: u32,
    pub overall: ReportRow,
    pub per_category: Vec<ReportRow>,
    pub per_task: Vec<ReportRow>,
    /// Diagnostic weights per dimension, reported for decomposition only.
    pub dimension_weights: BTreeMap<String, f64>,
}

fn build_row(label: &str, outcomes: &[TrialOutcome], k: u32) -> Result<ReportRow, MetricsError> {
    let pass = pass_metrics(outcomes, k)?;
    let passes = outcomes.iter().filter(|o| o.passed).count() as u64;
    let tasks = outcomes
        .iter()
        .map(|o| o.task_id.as_str())
        .collect::<std::collections::BTreeSet<_>>()
        .len();
    Ok(ReportRow {
        label: label.to_string(),
        tasks,
        trials: outcomes.len(),
        pass,
        pass_at_1_ci: super::rate_with_ci(passes, outcomes.len() as u64)?,
        expected_reward: expected_reward(outcomes)?,
        safety_failure: safety_failure_rate(outcomes)?,
    })
}

impl MetricsReport {
    /// Build the report for one agent's outcomes out of an archive.
    pub fn build(
        archive: &EvaluationArchive,
        agent_id: &str,
        k: u32,
    ) -> Result<MetricsReport, MetricsError> {
        let outcomes: Vec<TrialOutcome> = archive
            .outcomes
            .iter()
            .filter(|row| row.agent_id == agent_id)
            .map(|row| TrialOutcome {
                task_id: row.task_id.clone(),
                category: row.category,
                trial_index: row.trial_index,
                passed: row.passed,
                reward: row.reward,
                safety_failed: row.safety_failed,
            })
            .collect();
        if outcomes.is_empty() {
            return Err(MetricsError::EmptyInput);
        }

        let mut per_category = Vec::new();
        let mut categories: Vec<_> = outcomes.iter().map(|o| o.category).collect();
        categories.sort();
        categories.dedup();
        for category in categories {
            let subset: Vec<TrialOutcome> = outcomes
                .iter()
                .filter(|o| o.category == category)
                .cloned()
                .collect();
            per_category.push(build_row(category.as_str(), &subset, k)?);
        }

        let mut per_task = Vec::new();
        let mut task_ids: Vec<&str> = outcomes.iter().map(|o| o.task_id.as_str()).collect();
        task_ids.sort_unstable();
        task_ids.dedup();
        for task_id in task_ids {
            let subset: Vec<TrialOutcome> = outcomes
                .iter()
                .filter(|o| o.task_id == task_id)
                .cloned()
                .collect();
            per_task.push(build_row(task_id, &subset, k)?);
        }

        Ok(MetricsReport {
            agent_id: agent_id.to_string(),
            k,
            overall: build_row("all", &outcomes, k)?,
            per_category,
            per_task,
            dimension_weights: Dimension::ALL
                .iter()
                .map(|d| (d.as_str().to_string(), d.weight()))
                .collect(),
        })
    }

    pub fn render_plain(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("agent: {}\n", self.agent_id));
        out.push_str(&format!(
            "{:<28} {:>6} {:>8} {:>18} {:>8} {:>8} {:>8} {:>18}\n",
            "scope", "tasks", "trials", "pass@1 [95% ci]", "pass@k", "pass^k", "e[r]", "safety-fail [ci]"
        ));
        let mut rows = vec![&self.overall];
        rows.extend(self.per_category.iter());
        for row in rows {
            out.push_str(&format!(
                "{:<28} {:>6} {:>8} {:>6.1}% [{:.1}, {:.1}] {:>7.1}% {:>7.1}% {:>8.3} {:>6.1}% [{:.1}, {:.1}]\n",
                row.label,
                row.tasks,
                row.trials,
                row.pass.pass_at_1 * 100.0,
                row.pass_at_1_ci.ci_low * 100.0,
                row.pass_at_1_ci.ci_high * 100.0,
                row.pass.pass_at_k * 100.0,
                row.pass.pass_pow_k * 100.0,
                round3(row.expected_reward),
                row.safety_failure.rate * 100.0,
                row.safety_failure.ci_low * 100.0,
                row.safety_failure.ci_high * 100.0,
            ));
        }
        out
    }
}
