//! Class balancing for the web-safety suite.
//!
//! Label 1 keeps every violating case and adds cases built from
//! rule-relevant label-0 tasks with profiles resampled until a rule is
//! violated. Label 0 keeps every rule-relevant grant, a seeded sample of up
//! to half the target from the rule-unrelated grants, and fills the rest
//! with label-1 tasks under profiles that violate nothing. Tasks are unique
//! within each class.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::generate::{random_profile, rules_io};
use super::{BenchError, GuardCase};
use crate::toolbox::{check_rules, Policies};
use crate::types::{DetailSet, Label, RequestKind, UserProfile};

pub const BALANCE_TARGET: usize = 100;

const PROFILE_DRAWS: usize = 2_000;

fn task(case: &GuardCase) -> &str {
    case.query().unwrap_or_default()
}

fn unique_tasks(cases: &[&GuardCase]) -> bool {
    let mut seen = HashSet::new();
    cases.iter().all(|c| seen.insert(task(c)))
}

/// Copy of `case` under `profile`, relabeled by the rules.
fn with_profile(case: &GuardCase, profile: UserProfile, id: String, policies: &Policies) -> GuardCase {
    let facts = case.facts().expect("validated case");
    let action = facts.proposed_action.clone().unwrap_or_else(|| facts.final_answer.clone());
    let violated = check_rules(&profile, &facts.query, &policies.rules).violated();
    let (label, truth_details) = if violated.is_empty() {
        (Label::Granted, DetailSet::default())
    } else {
        (Label::Denied, DetailSet::rules(violated))
    };
    GuardCase {
        id,
        kind: RequestKind::SafetyRules,
        agent_io: rules_io(&facts.query, profile, &action),
        label,
        truth_details,
        agent_answer_correct: case.agent_answer_correct,
    }
}

fn resample(case: &GuardCase, want: Label, rng: &mut ChaCha8Rng, policies: &Policies) -> Option<UserProfile> {
    let task = task(case);
    (0..PROFILE_DRAWS).map(|_| random_profile(rng)).find(|p| {
        let violates = !check_rules(p, task, &policies.rules).is_granted();
        violates == (want == Label::Denied)
    })
}

fn fresh_id(base: &str, suffix: &str, ids: &mut HashSet<String>) -> String {
    let mut n = 0;
    loop {
        let id = if n == 0 { format!("{base}-{suffix}") } else { format!("{base}-{suffix}{n}") };
        if ids.insert(id.clone()) {
            return id;
        }
        n += 1;
    }
}

/// Balances web-safety cases to `target` per class. Output lists label-0
/// cases first. The same seed always gives the same output, and input that
/// is already balanced at `target` is returned unchanged.
pub fn balance_mind2web(
    cases: &[GuardCase],
    seed: u64,
    target: usize,
    policies: &Policies,
) -> Result<Vec<GuardCase>, BenchError> {
    for c in cases {
        if c.kind != RequestKind::SafetyRules {
            return Err(BenchError::Infeasible(format!("case {} is not a safety-rules case", c.id)));
        }
        c.validate().map_err(BenchError::Infeasible)?;
    }
    let pos: Vec<&GuardCase> = cases.iter().filter(|c| c.label == Label::Denied).collect();
    let neg: Vec<&GuardCase> = cases.iter().filter(|c| c.label == Label::Granted).collect();
    if pos.len() == target && neg.len() == target && unique_tasks(&pos) && unique_tasks(&neg) {
        return Ok(cases.to_vec());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: HashSet<String> = cases.iter().map(|c| c.id.clone()).collect();
    let relevant = |c: &&GuardCase| !policies.rules.related(task(c)).is_empty();
    let neg_relevant: Vec<&GuardCase> = neg.iter().copied().filter(relevant).collect();
    let mut neg_irrelevant: Vec<&GuardCase> = neg.iter().copied().filter(|c| !relevant(c)).collect();

    let mut out1: Vec<GuardCase> = Vec::new();
    let mut tasks1 = HashSet::new();
    let mut shuffled_pos = pos.clone();
    if shuffled_pos.len() > target {
        shuffled_pos.shuffle(&mut rng);
    }
    for c in shuffled_pos {
        if out1.len() < target && tasks1.insert(task(c).to_string()) {
            out1.push(c.clone());
        }
    }
    for c in &neg_relevant {
        if out1.len() == target {
            break;
        }
        if tasks1.contains(task(c)) {
            continue;
        }
        if let Some(p) = resample(c, Label::Denied, &mut rng, policies) {
            tasks1.insert(task(c).to_string());
            let id = fresh_id(&c.id, "v", &mut ids);
            out1.push(with_profile(c, p, id, policies));
        }
    }
    if out1.len() < target {
        return Err(BenchError::Infeasible(format!(
            "only {} distinct tasks can be made to violate a rule, target is {target}",
            out1.len()
        )));
    }

    let mut out0: Vec<GuardCase> = Vec::new();
    let mut tasks0 = HashSet::new();
    for c in &neg_relevant {
        if out0.len() < target && tasks0.insert(task(c).to_string()) {
            out0.push((*c).clone());
        }
    }
    neg_irrelevant.shuffle(&mut rng);
    let mut irrelevant = neg_irrelevant.into_iter();
    let irrelevant_quota = (target / 2).min(target - out0.len());
    let mut taken = 0;
    for c in irrelevant.by_ref() {
        if taken == irrelevant_quota {
            break;
        }
        if tasks0.insert(task(c).to_string()) {
            out0.push(c.clone());
            taken += 1;
        }
    }
    for c in &pos {
        if out0.len() == target {
            break;
        }
        if tasks0.contains(task(c)) {
            continue;
        }
        if let Some(p) = resample(c, Label::Granted, &mut rng, policies) {
            tasks0.insert(task(c).to_string());
            let id = fresh_id(&c.id, "g", &mut ids);
            out0.push(with_profile(c, p, id, policies));
        }
    }
    for c in irrelevant {
        if out0.len() == target {
            break;
        }
        if tasks0.insert(task(c).to_string()) {
            out0.push(c.clone());
        }
    }
    if out0.len() < target {
        return Err(BenchError::Infeasible(format!(
            "only {} distinct tasks are available for label 0, target is {target}",
            out0.len()
        )));
    }
    out0.extend(out1);
    Ok(out0)
}
