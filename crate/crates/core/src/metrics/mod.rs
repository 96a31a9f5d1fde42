//! Reliability metrics: Pass@1 / Pass@k / Pass^k, Wilson score intervals,
//! safety-failure rate, Cohen's kappa with prevalence, and PABAK. All
//! functions are pure and order-independent over their input multisets.
//! Internal arithmetic runs at full precision; rounding happens only at
//! report rendering (three decimals, one decimal for percentages).

mod report;

pub use report::{MetricsReport, ReportRow};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tasks::Category;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("invalid counts: successes {k} out of {n} trials")]
    InvalidCounts { k: u64, n: u64 },
    #[error("task {task_id} has {actual} trials, need at least {wanted}")]
    InsufficientTrials {
        task_id: String,
        wanted: u32,
        actual: u32,
    },
    #[error("empty input")]
    EmptyInput,
    #[error("agreement sample needs at least two observations")]
    SampleTooSmall,
    #[error("duplicate observation id {0}")]
    DuplicateObservation(String),
}

/// One graded trial, as consumed by the metrics stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub task_id: String,
    pub category: Category,
    pub trial_index: u32,
    pub passed: bool,
    pub reward: f64,
    pub safety_failed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PassMetrics {
    pub k: u32,
    pub pass_at_1: f64,
    pub pass_at_k: f64,
    pub pass_pow_k: f64,
}

/// Pass@1 is the mean trial pass rate over all trials; Pass@k the fraction
/// of tasks with at least one pass among the first k trials; Pass^k the
/// fraction with all of the first k trials passed.
pub fn pass_metrics(outcomes: &[TrialOutcome], k: u32) -> Result<PassMetrics, MetricsError> {
    if outcomes.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut by_task: BTreeMap<&str, Vec<&TrialOutcome>> = BTreeMap::new();
    for outcome in outcomes {
        by_task.entry(&outcome.task_id).or_default().push(outcome);
    }
    for (task_id, trials) in &mut by_task {
        trials.sort_by_key(|t| t.trial_index);
        if (trials.len() as u32) < k {
            return Err(MetricsError::InsufficientTrials {
                task_id: task_id.to_string(),
                wanted: k,
                actual: trials.len() as u32,
            });
        }
    }

    let total = outcomes.len() as f64;
    let pass_at_1 = outcomes.iter().filter(|o| o.passed).count() as f64 / total;
    let tasks = by_task.len() as f64;
    let pass_at_k = by_task
        .values()
        .filter(|trials| trials.iter().take(k as usize).any(|t| t.passed))
        .count() as f64
        / tasks;
    let pass_pow_k = by_task
        .values()
        .filter(|trials| trials.iter().take(k as usize).all(|t| t.passed))
        .count() as f64
        / tasks;
    Ok(PassMetrics {
        k,
        pass_at_1,
        pass_at_k,
        pass_pow_k,
    })
}

/// Wilson score interval for k successes in n trials, clamped to [0, 1].
pub fn wilson_ci(successes: u64, trials: u64, z: f64) -> Result<(f64, f64), MetricsError> {
    if trials == 0 || successes > trials {
        return Err(MetricsError::InvalidCounts {
            k: successes,
            n: trials,
        });
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    Ok(((center - half).max(0.0), (center + half).min(1.0)))
}

pub const WILSON_Z_95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateWithCi {
    pub successes: u64,
    pub trials: u64,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

pub fn rate_with_ci(successes: u64, trials: u64) -> Result<RateWithCi, MetricsError> {
    let (ci_low, ci_high) = wilson_ci(successes, trials, WILSON_Z_95)?;
    Ok(RateWithCi {
        successes,
        trials,
        rate: successes as f64 / trials as f64,
        ci_low,
        ci_high,
    })
}

/// Fraction of trials with at least one unsatisfied safety-critical
/// criterion, with its Wilson interval.
pub fn safety_failure_rate(outcomes: &[TrialOutcome]) -> Result<RateWithCi, MetricsError> {
    if outcomes.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let failures = outcomes.iter().filter(|o| o.safety_failed).count() as u64;
    rate_with_ci(failures, outcomes.len() as u64)
}

pub fn expected_reward(outcomes: &[TrialOutcome]) -> Result<f64, MetricsError> {
    if outcomes.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    Ok(outcomes.iter().map(|o| o.reward).sum::<f64>() / outcomes.len() as f64)
}

/// One paired observation: the reference grader's verdict and the grader
/// under test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementObservation {
    pub obs_id: String,
    pub reference: bool,
    pub test: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementSample {
    observations: Vec<AgreementObservation>,
}

impl AgreementSample {
    pub fn new(observations: Vec<AgreementObservation>) -> Result<AgreementSample, MetricsError> {
        let mut ids: Vec<&str> = observations.iter().map(|o| o.obs_id.as_str()).collect();
        ids.sort_unstable();
        for window in ids.windows(2) {
            if window[0] == window[1] {
                return Err(MetricsError::DuplicateObservation(window[0].to_string()));
            }
        }
        Ok(AgreementSample { observations })
    }

    pub fn from_pairs(pairs: &[(bool, bool)]) -> AgreementSample {
        AgreementSample {
            observations: pairs
                .iter()
                .enumerate()
                .map(|(i, (reference, test))| AgreementObservation {
                    obs_id: format!("obs-{i:05}"),
                    reference: *reference,
                    test: *test,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn observations(&self) -> &[AgreementObservation] {
        &self.observations
    }
}

/// Agreement statistics. `kappa == None` flags the degenerate case where
/// chance agreement is 1 and kappa is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementStats {
    pub n: usize,
    pub agreement: f64,
    /// Fraction of reference positives.
    pub prevalence: f64,
    pub kappa: Option<f64>,
    pub pabak: f64,
}

/// Cohen's kappa with raw agreement and reference prevalence. Chance
/// agreement comes from the marginals; a degenerate sample (chance = 1) is
/// reported, not thrown.
pub fn kappa(sample: &AgreementSample) -> Result<AgreementStats, MetricsError> {
    if sample.len() < 2 {
        return Err(MetricsError::SampleTooSmall);
    }
    let n = sample.len() as f64;
    let agree = sample
        .observations()
        .iter()
        .filter(|o| o.reference == o.test)
        .count() as f64
        / n;
    let ref_pos = sample.observations().iter().filter(|o| o.reference).count() as f64 / n;
    let test_pos = sample.observations().iter().filter(|o| o.test).count() as f64 / n;
    let chance = ref_pos * test_pos + (1.0 - ref_pos) * (1.0 - test_pos);
    let kappa = if (1.0 - chance).abs() < f64::EPSILON {
        None
    } else {
        Some((agree - chance) / (1.0 - chance))
    };
    Ok(AgreementStats {
        n: sample.len(),
        agreement: agree,
        prevalence: ref_pos,
        kappa,
        pabak: pabak(agree),
    })
}

/// Prevalence-and-bias-adjusted kappa: exactly `2 * agreement - 1`.
pub fn pabak(agreement: f64) -> f64 {
    2.0 * agreement - 1.0
}

/// Kappa per group (a reporting view; the grouping key passes through).
pub fn kappa_by_group(
    groups: &BTreeMap<String, AgreementSample>,
) -> BTreeMap<String, Result<AgreementStats, MetricsError>> {
    groups.iter().map(|(k, s)| (k.clone(), kappa(s))).collect()
}

/// Test-retest kappa for observations rated more than twice: kappa is
/// computed for every unordered pair of rating slots and the mean is
/// reported. Which pair is "the" pair is ambiguous in a test-retest design;
/// the all-pairs mean is this crate's convention.
pub fn mean_pairwise_kappa(ratings: &[(String, Vec<bool>)]) -> Result<AgreementStats, MetricsError> {
    if ratings.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let slots = ratings[0].1.len();
    if slots < 2 || ratings.iter().any(|(_, r)| r.len() != slots) {
        return Err(MetricsError::SampleTooSmall);
    }
    let mut stats: Vec<AgreementStats> = Vec::new();
    for a in 0..slots {
        for b in (a + 1)..slots {
            let pairs: Vec<(bool, bool)> =
                ratings.iter().map(|(_, r)| (r[a], r[b])).collect();
            stats.push(kappa(&AgreementSample::from_pairs(&pairs))?);
        }
    }
    let count = stats.len() as f64;
    let mean_kappa = {
        let defined: Vec<f64> = stats.iter().filter_map(|s| s.kappa).collect();
        if defined.len() == stats.len() {
            Some(defined.iter().sum::<f64>() / count)
        } else {
            None
        }
    };
    Ok(AgreementStats {
        n: ratings.len(),
        agreement: stats.iter().map(|s| s.agreement).sum::<f64>() / count,
        prevalence: stats.iter().map(|s| s.prevalence).sum::<f64>() / count,
        kappa: mean_kappa,
        pabak: stats.iter().map(|s| s.pabak).sum::<f64>() / count,
    })
}

/// Round for display at the reporting convention.
pub fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}
