//! Shared test support: an independent brute-force oracle for every trace
//! metric, plus a randomized scenario builder.
//!
//! The oracle re-derives each quantity by direct enumeration over the raw
//! execution and record structures; it deliberately avoids the library's
//! step views, segment helpers, and chain-recovery code so the two paths can
//! disagree.

#![allow(dead_code)]

use audita_core::policy::{Requirement, StepSelector, StructuralPolicy};
use audita_core::rational::Ratio;
use audita_core::trace::{
    ActionType, AuditRecord, Component, ComponentId, ComponentKind, Execution, RecordEntry, Step,
};
use num_rational::Rational64;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use std::collections::{BTreeMap, BTreeSet};

pub const PHASE_FIELD: &str = "context.phase";
pub const CHAIN_FIELD: &str = "context.caller_chain";
pub const TYPE_FIELD: &str = "action_type";

// ---------------------------------------------------------------------------
// Oracle: direct enumeration
// ---------------------------------------------------------------------------

pub fn oracle_recovered(record: &AuditRecord, step_id: u64) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for entry in &record.entries {
        if entry.observes.contains(&step_id) {
            if let Some(fs) = entry.fields_present.get(&step_id) {
                for f in fs {
                    out.insert(f.clone());
                }
            }
        }
    }
    out
}

pub fn oracle_acr(execution: &Execution, record: &AuditRecord) -> Rational64 {
    let relevant: Vec<&Step> = execution.steps.iter().filter(|s| s.policy_relevant).collect();
    if relevant.is_empty() {
        return Rational64::from_integer(1);
    }
    let mut hits = 0i64;
    for s in &relevant {
        if !oracle_recovered(record, s.step_id).is_empty() {
            hits += 1;
        }
    }
    Rational64::new(hits, relevant.len() as i64)
}

pub fn oracle_rf(
    execution: &Execution,
    record: &AuditRecord,
    reqs: &BTreeMap<ActionType, BTreeSet<String>>,
) -> Rational64 {
    let relevant: Vec<&Step> = execution.steps.iter().filter(|s| s.policy_relevant).collect();
    if relevant.is_empty() {
        return Rational64::from_integer(1);
    }
    let mut ratios = Vec::new();
    for s in &relevant {
        let recovered = oracle_recovered(record, s.step_id);
        if recovered.is_empty() {
            continue;
        }
        let required = &reqs[&s.action_type];
        let hit = required.iter().filter(|f| recovered.contains(*f)).count() as i64;
        ratios.push(Rational64::new(hit, required.len() as i64));
    }
    if ratios.is_empty() {
        return Rational64::zero();
    }
    let sum: Rational64 = ratios.iter().copied().sum();
    sum / Rational64::from_integer(ratios.len() as i64)
}

/// Segments re-derived by a plain scan over phase labels in step order.
pub fn oracle_segments(execution: &Execution) -> Vec<Vec<&Step>> {
    let mut segments: Vec<Vec<&Step>> = Vec::new();
    let mut last_phase: Option<&str> = None;
    for step in &execution.steps {
        let phase = execution.phase_of.get(&step.step_id).map(|s| s.as_str()).unwrap_or("");
        if last_phase == Some(phase) {
            segments.last_mut().expect("phase matched an open segment").push(step);
        } else {
            segments.push(vec![step]);
        }
        last_phase = Some(phase);
    }
    segments
}

fn oracle_segment_observed(segment: &[&Step], record: &AuditRecord) -> bool {
    segment.iter().any(|s| oracle_recovered(record, s.step_id).contains(PHASE_FIELD))
}

pub fn oracle_lpc(execution: &Execution, record: &AuditRecord) -> Rational64 {
    let segments = oracle_segments(execution);
    if segments.is_empty() {
        return Rational64::from_integer(1);
    }
    let hits = segments.iter().filter(|seg| oracle_segment_observed(seg, record)).count() as i64;
    Rational64::new(hits, segments.len() as i64)
}

pub fn oracle_gb_steps(execution: &Execution, record: &AuditRecord) -> u64 {
    oracle_segments(execution)
        .iter()
        .filter(|seg| !oracle_segment_observed(seg, record))
        .map(|seg| seg.len() as u64)
        .sum()
}

pub fn oracle_gb_micros(execution: &Execution, record: &AuditRecord) -> u64 {
    oracle_segments(execution)
        .iter()
        .filter(|seg| !oracle_segment_observed(seg, record))
        .map(|seg| {
            let first = seg.first().expect("segments are non-empty").timestamp_us;
            let last = seg.last().expect("segments are non-empty").timestamp_us;
            (last - first).max(0) as u64
        })
        .sum()
}

/// Recovered prefix depth for one step, by direct scan over every entry.
pub fn oracle_prefix_depth(execution: &Execution, record: &AuditRecord, step_id: u64) -> usize {
    let truth = match execution.responsibility_of.get(&step_id) {
        Some(c) => c,
        None => return 0,
    };
    let mut depth = 0;
    'positions: for (i, want) in truth.iter().enumerate() {
        for entry in &record.entries {
            if !entry.observes.contains(&step_id) {
                continue;
            }
            let listed = entry
                .fields_present
                .get(&step_id)
                .map(|fs| fs.contains(CHAIN_FIELD))
                .unwrap_or(false);
            if !listed {
                continue;
            }
            let key = format!("{step_id}.{CHAIN_FIELD}");
            if let Some(Value::Array(items)) = entry.payload.get(&key) {
                if let Some(Value::String(got)) = items.get(i) {
                    if got == want.as_str() {
                        depth += 1;
                        continue 'positions;
                    }
                }
            }
        }
        break;
    }
    depth
}

pub fn oracle_ac(execution: &Execution, record: &AuditRecord) -> Rational64 {
    let relevant: Vec<&Step> = execution.steps.iter().filter(|s| s.policy_relevant).collect();
    if relevant.is_empty() {
        return Rational64::from_integer(1);
    }
    let mut full = 0i64;
    for s in &relevant {
        let truth_len = execution.responsibility_of.get(&s.step_id).map(|c| c.len()).unwrap_or(0);
        if oracle_prefix_depth(execution, record, s.step_id) == truth_len {
            full += 1;
        }
    }
    Rational64::new(full, relevant.len() as i64)
}

pub fn oracle_acd(execution: &Execution, record: &AuditRecord) -> Rational64 {
    let relevant: Vec<&Step> = execution.steps.iter().filter(|s| s.policy_relevant).collect();
    if relevant.is_empty() {
        return Rational64::zero();
    }
    let sum: i64 =
        relevant.iter().map(|s| oracle_prefix_depth(execution, record, s.step_id) as i64).sum();
    Rational64::new(sum, relevant.len() as i64)
}

/// Three-valued decidability re-derived from scratch: recompute per-step
/// latest-wins values, contribution sets by action type, and the joint field
/// union.
pub fn oracle_decidable(policy: &StructuralPolicy, record: &AuditRecord) -> bool {
    let mut fields_by_step: BTreeMap<u64, BTreeSet<String>> = BTreeMap::new();
    let mut type_by_step: BTreeMap<u64, Value> = BTreeMap::new();
    for entry in &record.entries {
        for step_id in &entry.observes {
            let step_fields = fields_by_step.entry(*step_id).or_default();
            if let Some(fs) = entry.fields_present.get(step_id) {
                for f in fs {
                    step_fields.insert(f.clone());
                    if f == TYPE_FIELD {
                        let key = format!("{step_id}.{TYPE_FIELD}");
                        if let Some(v) = entry.payload.get(&key) {
                            type_by_step.insert(*step_id, v.clone());
                        }
                    }
                }
            }
        }
    }
    let mut selector_types: Vec<&ActionType> = vec![&policy.trigger.action_type];
    match &policy.requirement {
        Requirement::RequirePriorEvent { prior } => selector_types.push(&prior.action_type),
        Requirement::ForbidSequence { earlier, .. } => selector_types.push(&earlier.action_type),
        _ => {}
    }
    let mut union = BTreeSet::new();
    let mut any_evidence = false;
    for (step_id, fields) in &fields_by_step {
        let compatible = match type_by_step.get(step_id) {
            None => true,
            Some(Value::String(at)) => selector_types.iter().any(|t| t.as_str() == at),
            Some(_) => false,
        };
        if compatible {
            any_evidence = true;
            union.extend(fields.iter().cloned());
        }
    }
    if !any_evidence {
        return true; // vacuous compliance is decidable
    }
    policy.required_fields.iter().all(|f| union.contains(f))
}

pub fn oracle_spdr(policies: &[StructuralPolicy], record: &AuditRecord) -> Rational64 {
    if policies.is_empty() {
        return Rational64::from_integer(1);
    }
    let decidable = policies.iter().filter(|p| oracle_decidable(p, record)).count() as i64;
    Rational64::new(decidable, policies.len() as i64)
}

// ---------------------------------------------------------------------------
// Randomized scenarios
// ---------------------------------------------------------------------------

const PHASES: [&str; 4] = ["plan", "act", "retry", "fallback"];

pub fn ratio(n: i64, d: i64) -> Ratio {
    Ratio::new(n, d).expect("test ratio in range")
}

/// A small random execution (up to `max_steps`) that always validates.
pub fn random_execution(rng: &mut ChaCha8Rng, max_steps: usize) -> Execution {
    let n_components = rng.gen_range(1..=4usize);
    let mut components = vec![Component { id: ComponentId::new("agent-0"), kind: ComponentKind::Agent }];
    for i in 1..n_components {
        components.push(Component {
            id: ComponentId::new(format!("comp-{i}")),
            kind: [ComponentKind::Tool, ComponentKind::Skill, ComponentKind::Human][i % 3],
        });
    }
    let n_steps = rng.gen_range(0..=max_steps);
    let mut steps = Vec::new();
    let mut phase_of = BTreeMap::new();
    let mut responsibility_of = BTreeMap::new();
    let mut ts = 1_000_000i64;
    let mut phase = PHASES[rng.gen_range(0..PHASES.len())];
    for step_id in 1..=n_steps as u64 {
        if rng.gen_bool(0.4) {
            phase = PHASES[rng.gen_range(0..PHASES.len())];
        }
        ts += rng.gen_range(0..10_000);
        let action_type = ActionType::ALL[rng.gen_range(0..ActionType::ALL.len())];
        let executor = rng.gen_range(0..components.len());
        let chain: Vec<ComponentId> =
            (0..=executor).rev().map(|i| components[i].id.clone()).collect();
        let mut context = BTreeMap::new();
        context.insert("phase".to_string(), json!(phase));
        let chain_json: Vec<Value> = chain.iter().map(|c| json!(c.as_str())).collect();
        context.insert("caller_chain".to_string(), json!(chain_json));
        let mut input = BTreeMap::new();
        let mut output = BTreeMap::new();
        match action_type {
            ActionType::ToolCall => {
                input.insert("tool_name".into(), json!(["send_email", "lookup"][rng.gen_range(0..2)]));
                input.insert("arguments".into(), json!({"n": rng.gen_range(0..10)}));
                output.insert("result".into(), json!("ok"));
            }
            ActionType::Approval => {
                context.insert(
                    "approval_state".into(),
                    json!(["granted", "denied"][rng.gen_range(0..2)]),
                );
                context.insert("approver".into(), json!("agent-0"));
            }
            ActionType::DbQuery => {
                input.insert("query".into(), json!("SELECT 1"));
                output.insert("rows".into(), json!(rng.gen_range(0..9)));
                context.insert("data_class".into(), json!(["Y", "Z"][rng.gen_range(0..2)]));
            }
            ActionType::NetworkCall => {
                input.insert("url".into(), json!("https://x.example"));
                output.insert("status".into(), json!(200));
                if rng.gen_bool(0.5) {
                    context.insert("sanitized".into(), json!(rng.gen_bool(0.5)));
                }
            }
            ActionType::FileOp => {
                input.insert("path".into(), json!("/tmp/f"));
                input.insert("mode".into(), json!("read"));
            }
            ActionType::MessageSend => {
                input.insert("recipient".into(), json!("a@b.c"));
                input.insert("body".into(), json!("hi"));
            }
            ActionType::Delegation => {
                input.insert("task".into(), json!("t"));
                context.insert("delegate".into(), json!("agent-0"));
            }
            ActionType::Retry => {
                context.insert("attempt".into(), json!(rng.gen_range(1..3)));
            }
            ActionType::Fallback => {
                context.insert("reason".into(), json!("timeout"));
            }
            ActionType::Escalation => {
                context.insert("target".into(), json!("human-review"));
            }
        }
        steps.push(Step {
            step_id,
            action_type,
            input,
            output,
            timestamp_us: ts,
            context,
            policy_relevant: rng.gen_bool(0.6),
        });
        phase_of.insert(step_id, phase.to_string());
        responsibility_of.insert(step_id, chain);
    }
    Execution { components, steps, phase_of, responsibility_of, interaction_graph: None }
}

/// Record field names a step can carry, bare tool name included.
pub fn step_record_fields(step: &Step) -> Vec<String> {
    let mut names: Vec<String> = step.field_names().into_iter().collect();
    if step.action_type == ActionType::ToolCall {
        names.retain(|n| n != "input.tool_name");
        names.push("tool_name".to_string());
    }
    names
}

/// A random record over the execution: entries may observe several steps,
/// keep arbitrary field subsets, and occasionally corrupt a chain value.
pub fn random_record(rng: &mut ChaCha8Rng, execution: &Execution) -> AuditRecord {
    let n_entries = if execution.steps.is_empty() { 0 } else { rng.gen_range(0..=10usize) };
    let mut entries = Vec::new();
    for entry_id in 1..=n_entries as u64 {
        let mut observes = BTreeSet::new();
        let mut fields_present = BTreeMap::new();
        let mut payload = BTreeMap::new();
        for _ in 0..rng.gen_range(1..=2usize) {
            let step = &execution.steps[rng.gen_range(0..execution.steps.len())];
            observes.insert(step.step_id);
            let mut kept = BTreeSet::new();
            for field in step_record_fields(step) {
                if !rng.gen_bool(0.55) {
                    continue;
                }
                let mut value = step.field_value(&field).unwrap_or(Value::Null);
                if field == CHAIN_FIELD {
                    if let Value::Array(items) = &mut value {
                        if rng.gen_bool(0.3) {
                            items.truncate(rng.gen_range(0..=items.len()));
                        }
                        if rng.gen_bool(0.15) && !items.is_empty() {
                            let idx = rng.gen_range(0..items.len());
                            items[idx] = json!("nobody");
                        }
                    }
                }
                payload.insert(RecordEntry::payload_key(step.step_id, &field), value);
                kept.insert(field);
            }
            if rng.gen_bool(0.15) {
                payload.insert(RecordEntry::payload_key(step.step_id, "noise.blob"), json!("x"));
                kept.insert("noise.blob".to_string());
            }
            fields_present.entry(step.step_id).or_insert_with(BTreeSet::new).extend(kept);
        }
        let anchor = observes.iter().next().copied().unwrap_or(1);
        let base_ts = execution.step(anchor).map(|s| s.timestamp_us).unwrap_or(0);
        entries.push(RecordEntry {
            entry_id,
            observes,
            fields_present,
            payload,
            record_timestamp_us: base_ts + rng.gen_range(0..5_000),
        });
    }
    AuditRecord::unprotected(entries)
}

/// A small random policy set with distinct ids, drawn from a palette that
/// matches the fields random executions actually carry.
pub fn random_policies(rng: &mut ChaCha8Rng) -> Vec<StructuralPolicy> {
    let mut policies = Vec::new();
    let n = rng.gen_range(0..=3usize);
    for i in 0..n {
        policies.push(random_policy(rng, format!("p{i}")));
    }
    policies
}

pub fn random_policy(rng: &mut ChaCha8Rng, id: String) -> StructuralPolicy {
    match rng.gen_range(0..4) {
        0 => StructuralPolicy::new(
            id,
            StepSelector::of(ActionType::ToolCall).with_field("tool_name", json!("send_email")),
            Requirement::RequirePriorEvent {
                prior: StepSelector::of(ActionType::Approval)
                    .with_field("context.approval_state", json!("granted")),
            },
        ),
        1 => StructuralPolicy::new(
            id,
            StepSelector::of(ActionType::NetworkCall),
            Requirement::ForbidSequence {
                earlier: StepSelector::of(ActionType::DbQuery)
                    .with_field("context.data_class", json!("Y")),
                unless: Some(audita_core::policy::FieldCondition {
                    field: "context.sanitized".into(),
                    equals: json!(true),
                }),
            },
        ),
        2 => StructuralPolicy::new(
            id,
            StepSelector::of(ActionType::ToolCall),
            Requirement::FieldPresence {
                fields: ["tool_name".to_string()].into_iter().collect(),
            },
        ),
        _ => StructuralPolicy::new(
            id,
            StepSelector::of(ActionType::Approval),
            Requirement::FieldValue {
                field: "context.approval_state".into(),
                equals: json!("granted"),
            },
        ),
    }
}

/// Consistent record growth: add ground-truth fields to observed steps and
/// cover unobserved steps at full field fidelity. Models progressively better
/// observation of the same execution.
pub fn grow_record(rng: &mut ChaCha8Rng, execution: &Execution, record: &AuditRecord) -> AuditRecord {
    let mut out = record.clone();
    if execution.steps.is_empty() {
        return out;
    }
    let covered: BTreeSet<u64> = out
        .entries
        .iter()
        .flat_map(|e| e.observes.iter().copied())
        .filter(|s| !out.recovered_fields(*s).is_empty())
        .collect();
    let mut next_id = out.entries.iter().map(|e| e.entry_id).max().unwrap_or(0) + 1;
    for _ in 0..rng.gen_range(1..=3usize) {
        let step = &execution.steps[rng.gen_range(0..execution.steps.len())];
        let all_fields = step_record_fields(step);
        let fields: Vec<String> = if covered.contains(&step.step_id) {
            all_fields.into_iter().filter(|_| rng.gen_bool(0.6)).collect()
        } else {
            all_fields
        };
        let mut kept = BTreeSet::new();
        let mut payload = BTreeMap::new();
        for field in fields {
            if let Some(v) = step.field_value(&field) {
                payload.insert(RecordEntry::payload_key(step.step_id, &field), v);
                kept.insert(field);
            }
        }
        let mut fields_present = BTreeMap::new();
        fields_present.insert(step.step_id, kept);
        out.entries.push(RecordEntry {
            entry_id: next_id,
            observes: [step.step_id].into_iter().collect(),
            fields_present,
            payload,
            record_timestamp_us: step.timestamp_us + rng.gen_range(0..1_000),
        });
        next_id += 1;
    }
    out
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
