//! Synthetic executions, records, and degradation operators.
//!
//! The generator is deterministic in its seed; ground truth always passes
//! validation, and record statistics track the requested coverage and
//! field-keep rates in expectation. Degradation operates on records only, so
//! metric deltas against the fixed ground truth stay meaningful.

use crate::evidence::{ByteMutation, EvidenceError, EvidenceLog};
use crate::metrics::GbUnit;
use crate::policy::{Requirement, StepSelector, StructuralPolicy};
use crate::rational::Ratio;
use crate::trace::{
    ActionType, AuditRecord, Component, ComponentId, ComponentKind, Execution, FieldRequirements,
    RecordEntry, Step, FIELD_CALLER_CHAIN, FIELD_PHASE,
};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("generation spec invalid: {0}")]
    BadSpec(String),
    #[error("tamper_byte operates on evidence logs, not plain records")]
    TamperOnPlainRecord,
    #[error("{0} operates on plain records, not evidence logs")]
    RecordOpOnLog(String),
    #[error("cannot tamper an empty log")]
    EmptyLog,
    #[error(transparent)]
    Evidence(#[from] EvidenceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Chain,
    Star,
    Tree,
}

/// Everything the generator needs; deterministic given the seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationSpec {
    pub seed: u64,
    pub n_components: u32,
    pub n_steps: u32,
    pub topology: Topology,
    /// Relative integer weights over phase labels.
    pub phase_mix: BTreeMap<String, u32>,
    pub relevance_rate: Ratio,
    pub coverage_rate: Ratio,
    pub field_keep_rate: Ratio,
}

impl GenerationSpec {
    pub fn validate(&self) -> Result<(), LabError> {
        if self.n_components == 0 {
            return Err(LabError::BadSpec("n_components must be at least 1".into()));
        }
        if self.phase_mix.is_empty() || self.phase_mix.values().all(|w| *w == 0) {
            return Err(LabError::BadSpec("phase_mix needs at least one positive weight".into()));
        }
        Ok(())
    }
}

fn bernoulli(rng: &mut ChaCha8Rng, rate: Ratio) -> bool {
    let r = rate.as_rational();
    let draw = rng.next_u32() as u128;
    draw * (*r.denom() as u128) < (*r.numer() as u128) << 32
}

fn weighted_phase<'a>(rng: &mut ChaCha8Rng, mix: &'a BTreeMap<String, u32>) -> &'a str {
    let total: u64 = mix.values().map(|w| *w as u64).sum();
    let mut draw = rng.gen_range(0..total);
    for (label, weight) in mix {
        let w = *weight as u64;
        if draw < w {
            return label;
        }
        draw -= w;
    }
    unreachable!("weights sum to total");
}

fn parent_of(index: usize, topology: Topology) -> usize {
    match topology {
        Topology::Chain => index - 1,
        Topology::Star => 0,
        Topology::Tree => (index - 1) / 2,
    }
}

fn component_set(n: u32) -> Vec<Component> {
    let kinds = [
        ComponentKind::Tool,
        ComponentKind::Skill,
        ComponentKind::Service,
        ComponentKind::Agent,
        ComponentKind::Human,
    ];
    let mut components = vec![Component { id: ComponentId::new("agent-0"), kind: ComponentKind::Agent }];
    for i in 1..n as usize {
        let kind = kinds[(i - 1) % kinds.len()];
        let name = match kind {
            ComponentKind::Agent => format!("agent-{i}"),
            ComponentKind::Tool => format!("tool-{i}"),
            ComponentKind::Skill => format!("skill-{i}"),
            ComponentKind::Service => format!("service-{i}"),
            ComponentKind::Human => format!("human-{i}"),
        };
        components.push(Component { id: ComponentId::new(name), kind });
    }
    components
}

fn fill_action_data(step: &mut Step, rng: &mut ChaCha8Rng, components: &[Component]) {
    let pick = |rng: &mut ChaCha8Rng, options: &[&str]| -> String {
        options[rng.gen_range(0..options.len())].to_string()
    };
    match step.action_type {
        ActionType::ToolCall => {
            let tool = pick(rng, &["lookup", "send_email", "summarize", "exec"]);
            step.input.insert("tool_name".into(), json!(tool));
            step.input.insert("arguments".into(), json!({ "q": rng.gen_range(0..1000) }));
            step.output.insert("result".into(), json!("ok"));
        }
        ActionType::FileOp => {
            step.input.insert("path".into(), json!(format!("/data/f{}", rng.gen_range(0..100))));
            step.input.insert("mode".into(), json!(pick(rng, &["read", "write"])));
        }
        ActionType::NetworkCall => {
            step.input.insert("url".into(), json!("https://svc.example/api"));
            step.output.insert("status".into(), json!(200));
        }
        ActionType::DbQuery => {
            step.input.insert("query".into(), json!("SELECT 1"));
            step.output.insert("rows".into(), json!(rng.gen_range(0..50)));
        }
        ActionType::MessageSend => {
            step.input.insert("recipient".into(), json!("ops@example.com"));
            step.input.insert("body".into(), json!("status update"));
        }
        ActionType::Approval => {
            step.context
                .insert("approval_state".into(), json!(pick(rng, &["granted", "denied"])));
            let approver = &components[components.len() - 1].id;
            step.context.insert("approver".into(), json!(approver.as_str()));
        }
        ActionType::Delegation => {
            step.input.insert("task".into(), json!("subtask"));
            step.context.insert("delegate".into(), json!(components[0].id.as_str()));
        }
        ActionType::Retry => {
            step.context.insert("attempt".into(), json!(rng.gen_range(1..4)));
        }
        ActionType::Fallback => {
            step.context.insert("reason".into(), json!(pick(rng, &["timeout", "error"])));
        }
        ActionType::Escalation => {
            step.context.insert("target".into(), json!("human-review"));
        }
    }
}

/// Field names a record entry for this step may preserve. The tool name is
/// emitted under its conventional bare name.
fn record_field_names(step: &Step) -> BTreeSet<String> {
    let mut names = step.field_names();
    if step.action_type == ActionType::ToolCall {
        names.remove("input.tool_name");
        names.insert("tool_name".to_string());
    }
    names
}

/// Generate a ground-truth execution plus an audit record of it.
pub fn generate(spec: &GenerationSpec) -> Result<(Execution, AuditRecord), LabError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let components = component_set(spec.n_components);

    let mut interaction_graph = BTreeSet::new();
    for i in 1..components.len() {
        let parent = parent_of(i, spec.topology);
        interaction_graph.insert((components[parent].id.clone(), components[i].id.clone()));
    }

    let mut steps = Vec::with_capacity(spec.n_steps as usize);
    let mut phase_of = BTreeMap::new();
    let mut responsibility_of = BTreeMap::new();
    let mut timestamp = 1_700_000_000_000_000i64;
    let mut remaining_in_run = 0u32;
    let mut current_phase = String::new();

    for step_id in 1..=spec.n_steps as u64 {
        if remaining_in_run == 0 {
            current_phase = weighted_phase(&mut rng, &spec.phase_mix).to_string();
            remaining_in_run = rng.gen_range(1..=4);
        }
        let entering_phase = steps
            .last()
            .map(|s: &Step| phase_of.get(&s.step_id) != Some(&current_phase))
            .unwrap_or(true);
        remaining_in_run -= 1;

        timestamp += rng.gen_range(1_000..50_000);
        let action_type = ActionType::ALL[rng.gen_range(0..ActionType::ALL.len())];
        let executor = rng.gen_range(0..components.len());
        let mut chain = vec![components[executor].id.clone()];
        let mut at = executor;
        while at != 0 {
            at = parent_of(at, spec.topology);
            chain.push(components[at].id.clone());
        }

        let mut step = Step {
            step_id,
            action_type,
            input: BTreeMap::new(),
            output: BTreeMap::new(),
            timestamp_us: timestamp,
            context: BTreeMap::new(),
            policy_relevant: bernoulli(&mut rng, spec.relevance_rate),
        };
        fill_action_data(&mut step, &mut rng, &components);
        step.context.insert("phase".into(), json!(current_phase));
        if entering_phase {
            step.context.insert("phase_boundary".into(), json!("enter"));
        }
        let chain_json: Vec<Value> = chain.iter().map(|c| json!(c.as_str())).collect();
        step.context.insert("caller_chain".into(), json!(chain_json));

        phase_of.insert(step_id, current_phase.clone());
        responsibility_of.insert(step_id, chain);
        steps.push(step);
    }

    let execution = Execution {
        components,
        steps,
        phase_of,
        responsibility_of,
        interaction_graph: Some(interaction_graph),
    };

    let mut entries = Vec::new();
    let mut entry_id = 0u64;
    for step in &execution.steps {
        if !bernoulli(&mut rng, spec.coverage_rate) {
            continue;
        }
        entry_id += 1;
        let mut fields = BTreeSet::new();
        let mut payload = BTreeMap::new();
        for field in record_field_names(step) {
            if !bernoulli(&mut rng, spec.field_keep_rate) {
                continue;
            }
            if let Some(value) = step.field_value(&field) {
                payload.insert(RecordEntry::payload_key(step.step_id, &field), value);
                fields.insert(field);
            }
        }
        let mut fields_present = BTreeMap::new();
        fields_present.insert(step.step_id, fields);
        entries.push(RecordEntry {
            entry_id,
            observes: [step.step_id].into_iter().collect(),
            fields_present,
            payload,
            record_timestamp_us: step.timestamp_us + rng.gen_range(10..10_000),
        });
    }

    Ok((execution, AuditRecord::unprotected(entries)))
}

/// Record-level degradation operators plus the byte-tamper instrument for
/// sealed logs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DegradationOp {
    /// Remove each preserved (step, field) pair with this probability.
    DropFields { probability: Ratio },
    /// Remove each entry with this probability.
    DropEntries { probability: Ratio },
    /// Remove the caller-chain field everywhere.
    StripIdentities,
    /// Remove the phase field everywhere.
    StripPhaseMarkers,
    /// Replace every preserved value with a placeholder, keeping field names
    /// present. Action-type values are exempt so selectors still match;
    /// everything else becomes the placeholder.
    RedactValues { placeholder: String },
    /// Delegate to the evidence store's byte-tamper instrument.
    TamperByte { seq: u64, mutation: ByteMutation },
}

impl DegradationOp {
    pub fn kind_name(&self) -> &'static str {
        match self {
            DegradationOp::DropFields { .. } => "drop_fields",
            DegradationOp::DropEntries { .. } => "drop_entries",
            DegradationOp::StripIdentities => "strip_identities",
            DegradationOp::StripPhaseMarkers => "strip_phase_markers",
            DegradationOp::RedactValues { .. } => "redact_values",
            DegradationOp::TamperByte { .. } => "tamper_byte",
        }
    }
}

fn strip_field(record: &AuditRecord, field: &str) -> AuditRecord {
    let mut out = record.clone();
    for entry in &mut out.entries {
        for (step_id, fields) in entry.fields_present.iter_mut() {
            if fields.remove(field) {
                entry.payload.remove(&RecordEntry::payload_key(*step_id, field));
            }
        }
    }
    out
}

/// Apply a record-level degradation. Deterministic in the seed.
pub fn degrade(record: &AuditRecord, op: &DegradationOp, seed: u64) -> Result<AuditRecord, LabError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match op {
        DegradationOp::DropFields { probability } => {
            let mut out = record.clone();
            for entry in &mut out.entries {
                for (step_id, fields) in entry.fields_present.iter_mut() {
                    let victims: Vec<String> = fields
                        .iter()
                        .filter(|_| bernoulli(&mut rng, *probability))
                        .cloned()
                        .collect();
                    for field in victims {
                        fields.remove(&field);
                        entry.payload.remove(&RecordEntry::payload_key(*step_id, &field));
                    }
                }
            }
            Ok(out)
        }
        DegradationOp::DropEntries { probability } => {
            let mut out = record.clone();
            out.entries.retain(|_| !bernoulli(&mut rng, *probability));
            Ok(out)
        }
        DegradationOp::StripIdentities => Ok(strip_field(record, FIELD_CALLER_CHAIN)),
        DegradationOp::StripPhaseMarkers => Ok(strip_field(record, FIELD_PHASE)),
        DegradationOp::RedactValues { placeholder } => {
            let mut out = record.clone();
            for entry in &mut out.entries {
                for (step_id, fields) in &entry.fields_present {
                    for field in fields {
                        if field == crate::trace::FIELD_ACTION_TYPE {
                            continue;
                        }
                        if let Some(v) = entry.payload.get_mut(&RecordEntry::payload_key(*step_id, field))
                        {
                            *v = json!(placeholder);
                        }
                    }
                }
            }
            Ok(out)
        }
        DegradationOp::TamperByte { .. } => Err(LabError::TamperOnPlainRecord),
    }
}

/// Apply a log-level degradation (currently only `tamper_byte`).
pub fn degrade_log(log: &EvidenceLog, op: &DegradationOp) -> Result<EvidenceLog, LabError> {
    match op {
        DegradationOp::TamperByte { seq, mutation } => {
            if log.is_empty() {
                return Err(LabError::EmptyLog);
            }
            Ok(log.tamper(*seq, mutation)?)
        }
        other => Err(LabError::RecordOpOnLog(other.kind_name().to_string())),
    }
}

/// Coverage without fidelity: observe every step but preserve only its action
/// type, so ACR is 1 while RF collapses.
pub fn shallow_record(execution: &Execution) -> AuditRecord {
    let mut entries = Vec::new();
    for (i, step) in execution.steps.iter().enumerate() {
        let mut fields_present = BTreeMap::new();
        fields_present.insert(
            step.step_id,
            [crate::trace::FIELD_ACTION_TYPE.to_string()].into_iter().collect::<BTreeSet<_>>(),
        );
        let mut payload = BTreeMap::new();
        payload.insert(
            RecordEntry::payload_key(step.step_id, crate::trace::FIELD_ACTION_TYPE),
            json!(step.action_type.as_str()),
        );
        entries.push(RecordEntry {
            entry_id: i as u64 + 1,
            observes: [step.step_id].into_iter().collect(),
            fields_present,
            payload,
            record_timestamp_us: step.timestamp_us + 1,
        });
    }
    AuditRecord::unprotected(entries)
}

/// Everything needed to score one constructed scenario.
#[derive(Debug, Clone)]
pub struct DimensionWitness {
    /// Dimension key matching the report's `dimension` labels.
    pub dimension: &'static str,
    pub execution: Execution,
    pub record: AuditRecord,
    pub policies: Vec<StructuralPolicy>,
    pub requirements: FieldRequirements,
    pub is_level: u8,
    pub gb_unit: GbUnit,
}

fn witness_base() -> (Execution, AuditRecord, Vec<StructuralPolicy>) {
    let mk = |step_id: u64, action: ActionType, phase: &str, relevant: bool| {
        let mut step = Step {
            step_id,
            action_type: action,
            input: BTreeMap::new(),
            output: BTreeMap::new(),
            timestamp_us: 1_000_000 + step_id as i64 * 1_000_000,
            context: BTreeMap::new(),
            policy_relevant: relevant,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(step_id);
        fill_action_data(&mut step, &mut rng, &component_set(4));
        step.context.insert("phase".into(), json!(phase));
        step.context.insert("caller_chain".into(), json!(["tool-1", "agent-0"]));
        step
    };
    let steps = vec![
        mk(1, ActionType::Approval, "plan", false),
        mk(2, ActionType::ToolCall, "act", true),
        mk(3, ActionType::DbQuery, "act", true),
        mk(4, ActionType::NetworkCall, "act", true),
        mk(5, ActionType::Retry, "retry", false),
        mk(6, ActionType::ToolCall, "act", true),
        mk(7, ActionType::MessageSend, "act", true),
        mk(8, ActionType::Escalation, "fallback", false),
    ];
    let phase_of: BTreeMap<u64, String> = steps
        .iter()
        .map(|s| {
            let phase = s.context["phase"].as_str().expect("phase is a string").to_string();
            (s.step_id, phase)
        })
        .collect();
    let responsibility_of: BTreeMap<u64, Vec<ComponentId>> = steps
        .iter()
        .map(|s| (s.step_id, vec![ComponentId::new("tool-1"), ComponentId::new("agent-0")]))
        .collect();
    let execution = Execution {
        components: component_set(4),
        steps,
        phase_of,
        responsibility_of,
        interaction_graph: None,
    };

    let mut entries = Vec::new();
    for (i, step) in execution.steps.iter().enumerate() {
        let mut fields = BTreeSet::new();
        let mut payload = BTreeMap::new();
        for field in record_field_names(step) {
            if let Some(v) = step.field_value(&field) {
                payload.insert(RecordEntry::payload_key(step.step_id, &field), v);
                fields.insert(field);
            }
        }
        let mut fields_present = BTreeMap::new();
        fields_present.insert(step.step_id, fields);
        entries.push(RecordEntry {
            entry_id: i as u64 + 1,
            observes: [step.step_id].into_iter().collect(),
            fields_present,
            payload,
            record_timestamp_us: step.timestamp_us + 500,
        });
    }
    let record = AuditRecord::unprotected(entries);

    let policies = vec![StructuralPolicy::new(
        "tool-calls-carry-name",
        StepSelector::of(ActionType::ToolCall),
        Requirement::FieldPresence { fields: ["tool_name".to_string()].into_iter().collect() },
    )];
    (execution, record, policies)
}

/// A per-action-type field that no base policy references and that neither
/// phase nor chain recovery depends on; dropping it dents RF and nothing
/// else.
fn droppable_field(action: ActionType) -> &'static str {
    match action {
        ActionType::ToolCall => "output.result",
        ActionType::FileOp => "input.mode",
        ActionType::NetworkCall => "output.status",
        ActionType::DbQuery => "output.rows",
        ActionType::MessageSend => "input.body",
        ActionType::Approval => "context.approver",
        ActionType::Delegation => "context.delegate",
        ActionType::Retry => "context.attempt",
        ActionType::Fallback => "context.reason",
        ActionType::Escalation => "context.target",
    }
}

/// For each of the five dimensions, a scenario failing exactly that
/// dimension's thresholds under the default profile.
pub fn dimension_witnesses() -> Vec<DimensionWitness> {
    let requirements = FieldRequirements::default_profile();
    let (execution, record, policies) = witness_base();
    let witness = |dimension, record, policies, is_level| DimensionWitness {
        dimension,
        execution: execution.clone(),
        record,
        policies,
        requirements: requirements.clone(),
        is_level,
        gb_unit: GbUnit::StepCount,
    };

    // Action recoverability: each relevant step loses one required field.
    let mut ar_record = record.clone();
    for step in execution.steps.iter().filter(|s| s.policy_relevant) {
        ar_record = strip_one(&ar_record, step.step_id, droppable_field(step.action_type));
    }

    // Lifecycle coverage: no phase labels survive.
    let lc_record = degrade(&record, &DegradationOp::StripPhaseMarkers, 0)
        .expect("record-level op");

    // Policy checkability: add a policy over a field the record never carries.
    let mut pc_policies = policies.clone();
    pc_policies.push(StructuralPolicy::new(
        "tool-calls-tag-data-class",
        StepSelector::of(ActionType::ToolCall),
        Requirement::FieldPresence {
            fields: ["context.data_class".to_string()].into_iter().collect(),
        },
    ));

    // Responsibility attribution: chain values truncated to the executor.
    let mut ra_record = record.clone();
    for entry in &mut ra_record.entries {
        for (step_id, fields) in &entry.fields_present {
            if fields.contains(FIELD_CALLER_CHAIN) {
                let key = RecordEntry::payload_key(*step_id, FIELD_CALLER_CHAIN);
                if let Some(Value::Array(items)) = entry.payload.get_mut(&key) {
                    items.truncate(1);
                }
            }
        }
    }

    vec![
        witness("action_recoverability", ar_record, policies.clone(), 2),
        witness("lifecycle_coverage", lc_record, policies.clone(), 2),
        witness("policy_checkability", record.clone(), pc_policies, 2),
        witness("responsibility_attribution", ra_record, policies.clone(), 2),
        witness("evidence_integrity", record.clone(), policies, 1),
    ]
}

fn strip_one(record: &AuditRecord, step_id: u64, field: &str) -> AuditRecord {
    let mut out = record.clone();
    for entry in &mut out.entries {
        if let Some(fields) = entry.fields_present.get_mut(&step_id) {
            if fields.remove(field) {
                entry.payload.remove(&RecordEntry::payload_key(step_id, field));
            }
        }
    }
    out
}
