//! Corpus preflight: per-task pass/fail rows over schema validity, predicate
//! parseability, encounter resolvability at the task's seed, attempt
//! attestations and category/difficulty bounds, plus authoring lints for the
//! restraint slate.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::world::{EntityKind, GenerationProfile, WorldState};

use super::{load_task, task_files, Task};

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl CheckResult {
    fn pass(name: &str) -> CheckResult {
        CheckResult {
            name: name.to_string(),
            passed: true,
            detail: None,
        }
    }

    fn fail(name: &str, detail: String) -> CheckResult {
        CheckResult {
            name: name.to_string(),
            passed: false,
            detail: Some(detail),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PreflightRow {
    pub path: String,
    pub task_id: Option<String>,
    pub checks: Vec<CheckResult>,
    pub warnings: Vec<String>,
}

impl PreflightRow {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PreflightReport {
    pub rows: Vec<PreflightRow>,
}

impl PreflightReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(PreflightRow::passed)
    }

    pub fn render_plain(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            let status = if row.passed() { "pass" } else { "FAIL" };
            let id = row.task_id.as_deref().unwrap_or("<unloadable>");
            out.push_str(&format!("{status}  {id}  ({})\n", row.path));
            for check in row.checks.iter().filter(|c| !c.passed) {
                out.push_str(&format!(
                    "      check {}: {}\n",
                    check.name,
                    check.detail.as_deref().unwrap_or("failed")
                ));
            }
            for warning in &row.warnings {
                out.push_str(&format!("      warning: {warning}\n"));
            }
        }
        let (passed, total) = (
            self.rows.iter().filter(|r| r.passed()).count(),
            self.rows.len(),
        );
        out.push_str(&format!("{passed}/{total} tasks pass preflight\n"));
        out
    }
}

/// Run preflight over every task file under `corpus_dir`.
pub fn preflight(corpus_dir: &Path) -> PreflightReport {
    let files = match task_files(corpus_dir) {
        Ok(files) => files,
        Err(e) => {
            return PreflightReport {
                rows: vec![PreflightRow {
                    path: corpus_dir.display().to_string(),
                    task_id: None,
                    checks: vec![CheckResult::fail("corpus-dir", e.to_string())],
                    warnings: vec![],
                }],
            }
        }
    };

    let mut world_cache: BTreeMap<(u64, String), Option<WorldState>> = BTreeMap::new();
    let mut rows = Vec::new();
    for path in files {
        rows.push(preflight_file(&path, corpus_dir, &mut world_cache));
    }
    PreflightReport { rows }
}

fn preflight_file(
    path: &Path,
    corpus_dir: &Path,
    world_cache: &mut BTreeMap<(u64, String), Option<WorldState>>,
) -> PreflightRow {
    let display = path
        .strip_prefix(corpus_dir)
        .unwrap_or(path)
        .display()
        .to_string();
    let task = match load_task(path) {
        Ok(task) => task,
        Err(e) => {
            return PreflightRow {
                path: display,
                task_id: None,
                checks: vec![CheckResult::fail("load", e.to_string())],
                warnings: vec![],
            }
        }
    };

    let mut checks = vec![CheckResult::pass("load")];
    checks.push(resolvability_check(&task, world_cache));
    checks.push(attestation_check(&task));
    checks.push(bounds_check(&task));

    PreflightRow {
        path: display,
        task_id: Some(task.id.clone()),
        warnings: lint_warnings(&task),
        checks,
    }
}

fn resolvability_check(
    task: &Task,
    cache: &mut BTreeMap<(u64, String), Option<WorldState>>,
) -> CheckResult {
    const NAME: &str = "encounter-resolvability";
    let key = (task.world_setting.seed, task.world_setting.profile.clone());
    let world = cache.entry(key).or_insert_with(|| {
        GenerationProfile::by_name(&task.world_setting.profile)
            .and_then(|p| WorldState::generate(task.world_setting.seed, &p).ok())
    });
    let Some(world) = world else {
        return CheckResult::fail(
            NAME,
            format!(
                "cannot generate world for seed {} profile {:?}",
                task.world_setting.seed, task.world_setting.profile
            ),
        );
    };
    let missing: Vec<&String> = task
        .world_setting
        .active_encounter_ids
        .iter()
        .filter(|id| world.entity_of(EntityKind::Encounter, id).is_none())
        .collect();
    if missing.is_empty() {
        CheckResult::pass(NAME)
    } else {
        CheckResult::fail(
            NAME,
            format!(
                "encounter ids {missing:?} do not resolve at seed {}",
                task.world_setting.seed
            ),
        )
    }
}

fn attestation_check(task: &Task) -> CheckResult {
    const NAME: &str = "attempt-attestation";
    let unattested: Vec<&str> = task
        .criteria
        .iter()
        .filter(|c| {
            c.predicate.as_ref().map_or(false, |p| p.uses_attempt())
                && c.intent_rescue_reason
                    .as_deref()
                    .map_or(true, |r| r.trim().is_empty())
        })
        .map(|c| c.id.as_str())
        .collect();
    if unattested.is_empty() {
        CheckResult::pass(NAME)
    } else {
        CheckResult::fail(
            NAME,
            format!("attempt criteria without intent_rescue_reason: {unattested:?}"),
        )
    }
}

fn bounds_check(task: &Task) -> CheckResult {
    const NAME: &str = "bounds";
    // Load-time validation already enforces these; the check row makes the
    // report explicit.
    if (1..=5).contains(&task.difficulty) && task.max_turns > 0 {
        CheckResult::pass(NAME)
    } else {
        CheckResult::fail(
            NAME,
            format!(
                "difficulty {} / max_turns {} out of bounds",
                task.difficulty, task.max_turns
            ),
        )
    }
}

/// Authoring lints for the restraint slate: a NEG-prefixed task is expected
/// to phrase its safety-critical world_state criteria as NOT CONTAINS.
fn lint_warnings(task: &Task) -> Vec<String> {
    let mut warnings = Vec::new();
    if task.id.starts_with("NEG-") {
        for criterion in &task.criteria {
            if !criterion.safety_critical {
                continue;
            }
            if let Some(predicate) = &criterion.predicate {
                if !predicate.has_negation() {
                    warnings.push(format!(
                        "restraint criterion {} omits NOT in its predicate",
                        criterion.id
                    ));
                }
            }
        }
    }
    warnings
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::task_to_yaml;
    use crate::tasks::{task_from_yaml, Category, WorldSetting};

    fn write_task(dir: &Path, task: &Task) {
        let path = dir.join(format!("{}.yaml", task.id.to_lowercase()));
        std::fs::write(path, task_to_yaml(task)).unwrap();
    }

    fn minimal_task(id: &str, encounter: &str, predicate: &str) -> Task {
        let yaml = format!(
            r#"
id: {id}
category: safety_critical_judgment
difficulty: 2
description: fixture
world_setting:
  seed: 42
  profile: desk
  timestamp: 2592000
  active_encounter_ids: [{encounter}]
max_turns: 10
criteria:
  - id: {cid}-c01
    assertion: fixture criterion
    method: world_state
    safety_critical: true
    dimension: safety
    predicate: {predicate}
"#,
            cid = id.to_lowercase()
        );
        task_from_yaml(Path::new("fixture.yaml"), &yaml).unwrap()
    }

    #[test]
    fn unresolvable_encounter_fails_preflight() {
        let dir = tempfile::tempdir().unwrap();
        let good = minimal_task("T-GOOD", "enc-0001", "NOT CONTAINS processDischarge");
        let bad = minimal_task("T-BAD", "enc-9999", "NOT CONTAINS processDischarge");
        write_task(dir.path(), &good);
        write_task(dir.path(), &bad);
        let report = preflight(dir.path());
        assert!(!report.passed());
        let bad_row = report
            .rows
            .iter()
            .find(|r| r.task_id.as_deref() == Some("T-BAD"))
            .unwrap();
        assert!(bad_row
            .checks
            .iter()
            .any(|c| c.name == "encounter-resolvability" && !c.passed));
        let good_row = report
            .rows
            .iter()
            .find(|r| r.task_id.as_deref() == Some("T-GOOD"))
            .unwrap();
        assert!(good_row.passed());
    }

    #[test]
    fn neg_task_without_not_gets_lint_warning() {
        let dir = tempfile::tempdir().unwrap();
        let task = minimal_task("NEG-900", "enc-0001", "CONTAINS processDischarge");
        write_task(dir.path(), &task);
        let report = preflight(dir.path());
        // Warning, not failure.
        assert!(report.passed());
        assert!(report.rows[0].warnings[0].contains("omits NOT"));
    }

    #[test]
    fn missing_attestation_fails() {
        let dir = tempfile::tempdir().unwrap();
        let mut task = minimal_task(
            "T-ATT",
            "enc-0001",
            "CONTAINS ATTEMPT createClinicalOrder WITH task_type=blood_admin",
        );
        task.criteria[0].intent_rescue_reason = None;
        write_task(dir.path(), &task);
        let report = preflight(dir.path());
        assert!(!report.passed());
        assert!(report.rows[0]
            .checks
            .iter()
            .any(|c| c.name == "attempt-attestation" && !c.passed));

        // Adding the attestation fixes it.
        let dir2 = tempfile::tempdir().unwrap();
        task.criteria[0].intent_rescue_reason =
            Some("credits calls blocked by simulator faults".to_string());
        write_task(dir2.path(), &task);
        assert!(preflight(dir2.path()).passed());
    }

    #[test]
    fn unloadable_file_is_a_failing_row() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("broken.yaml"), "id: [").unwrap();
        let report = preflight(dir.path());
        assert!(!report.passed());
        assert!(report.rows[0].task_id.is_none());
    }

    #[test]
    fn world_setting_defaults_apply() {
        let setting: WorldSetting =
            serde_yaml::from_str("timestamp: 100\nactive_encounter_ids: []").unwrap();
        assert_eq!(setting.seed, 42);
        assert_eq!(setting.profile, "desk");
        let _ = Category::ALL;
    }
}
