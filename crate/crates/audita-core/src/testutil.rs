//! Shared builders for unit tests.

use crate::trace::{
    ActionType, AuditRecord, Component, ComponentId, ComponentKind, Execution, RecordEntry, Step,
};
use serde_json::{json, Value};
use std::collections::{BTreeMap, BTreeSet};

pub(crate) fn step(id: u64, action: ActionType, ts: i64, phase: &str, relevant: bool) -> Step {
    let mut context = BTreeMap::new();
    context.insert("phase".to_string(), json!(phase));
    Step {
        step_id: id,
        action_type: action,
        input: BTreeMap::new(),
        output: BTreeMap::new(),
        timestamp_us: ts,
        context,
        policy_relevant: relevant,
    }
}

/// Execution over components agent-0 and tool-a; every policy-relevant step
/// gets the chain [tool-a, agent-0].
pub(crate) fn execution_with(steps: Vec<Step>, phases: &[(u64, &str)]) -> Execution {
    let mut phase_of = BTreeMap::new();
    for (id, p) in phases {
        phase_of.insert(*id, p.to_string());
    }
    let mut responsibility_of = BTreeMap::new();
    for s in &steps {
        if s.policy_relevant {
            responsibility_of
                .insert(s.step_id, vec![ComponentId::new("tool-a"), ComponentId::new("agent-0")]);
        }
    }
    Execution {
        components: vec![
            Component { id: ComponentId::new("agent-0"), kind: ComponentKind::Agent },
            Component { id: ComponentId::new("tool-a"), kind: ComponentKind::Tool },
        ],
        steps,
        phase_of,
        responsibility_of,
        interaction_graph: None,
    }
}

/// One entry observing one step, preserving the given fields with values.
pub(crate) fn observe(entry_id: u64, step_id: u64, fields: &[(&str, Value)], ts: i64) -> RecordEntry {
    let mut fields_present = BTreeMap::new();
    fields_present.insert(
        step_id,
        fields.iter().map(|(f, _)| f.to_string()).collect::<BTreeSet<_>>(),
    );
    let mut payload = BTreeMap::new();
    for (f, v) in fields {
        payload.insert(RecordEntry::payload_key(step_id, f), v.clone());
    }
    RecordEntry {
        entry_id,
        observes: [step_id].into_iter().collect(),
        fields_present,
        payload,
        record_timestamp_us: ts,
    }
}

/// A record observing every step of the execution, preserving the step's full
/// field universe.
pub(crate) fn full_record(execution: &Execution) -> AuditRecord {
    let mut entries = Vec::new();
    for (i, s) in execution.steps.iter().enumerate() {
        let fields: Vec<(String, Value)> = s
            .field_names()
            .into_iter()
            .map(|f| {
                let v = s.field_value(&f).unwrap_or(Value::Null);
                (f, v)
            })
            .collect();
        let refs: Vec<(&str, Value)> =
            fields.iter().map(|(f, v)| (f.as_str(), v.clone())).collect();
        entries.push(observe(i as u64 + 1, s.step_id, &refs, s.timestamp_us + 1));
    }
    AuditRecord::unprotected(entries)
}
