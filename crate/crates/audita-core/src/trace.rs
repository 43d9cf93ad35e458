//! Ground-truth execution model and partial audit records.
//!
//! An [`Execution`] is what actually happened: participating components, an
//! ordered step sequence, a phase label per step, and a responsibility chain
//! per step. An [`AuditRecord`] is what survived: entries that each observe
//! one or more steps and preserve some of their fields. Field names are flat
//! strings namespaced by convention ("input.query", "context.caller_chain"),
//! so everything downstream reduces to set operations over names plus value
//! lookups in entry payloads.

use crate::evidence::IntegrityDescriptor;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Field name carrying a step's phase label in records.
pub const FIELD_PHASE: &str = "context.phase";
/// Field name carrying a step's responsibility chain in records.
pub const FIELD_CALLER_CHAIN: &str = "context.caller_chain";
/// Field name carrying a step's action type in records.
pub const FIELD_ACTION_TYPE: &str = "action_type";
/// Field name carrying a step's execution timestamp in records.
pub const FIELD_TIMESTAMP: &str = "timestamp";

/// Opaque identifier referencing a participating component.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ComponentId(pub String);

impl ComponentId {
    pub fn new(id: impl Into<String>) -> Self {
        ComponentId(id.into())
    }
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ComponentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentKind {
    Agent,
    Tool,
    Skill,
    Service,
    Human,
}

/// A participating component: agent, tool, skill, service, or human principal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Component {
    pub id: ComponentId,
    pub kind: ComponentKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionType {
    ToolCall,
    FileOp,
    NetworkCall,
    DbQuery,
    MessageSend,
    Approval,
    Delegation,
    Retry,
    Fallback,
    Escalation,
}

impl ActionType {
    pub const ALL: [ActionType; 10] = [
        ActionType::ToolCall,
        ActionType::FileOp,
        ActionType::NetworkCall,
        ActionType::DbQuery,
        ActionType::MessageSend,
        ActionType::Approval,
        ActionType::Delegation,
        ActionType::Retry,
        ActionType::Fallback,
        ActionType::Escalation,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ActionType::ToolCall => "tool_call",
            ActionType::FileOp => "file_op",
            ActionType::NetworkCall => "network_call",
            ActionType::DbQuery => "db_query",
            ActionType::MessageSend => "message_send",
            ActionType::Approval => "approval",
            ActionType::Delegation => "delegation",
            ActionType::Retry => "retry",
            ActionType::Fallback => "fallback",
            ActionType::Escalation => "escalation",
        }
    }
}

impl fmt::Display for ActionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One execution step. Timestamps are integer microseconds since epoch and
/// non-decreasing in `step_id` order within one execution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub step_id: u64,
    pub action_type: ActionType,
    #[serde(default)]
    pub input: BTreeMap<String, Value>,
    #[serde(default)]
    pub output: BTreeMap<String, Value>,
    pub timestamp_us: i64,
    /// Approval state, caller chain, phase label, and any other context keys.
    #[serde(default)]
    pub context: BTreeMap<String, Value>,
    pub policy_relevant: bool,
}

impl Step {
    /// The namespaced field universe of this step: "action_type",
    /// "timestamp", plus "input.*", "output.*", and "context.*" keys.
    pub fn field_names(&self) -> BTreeSet<String> {
        let mut names = BTreeSet::new();
        names.insert(FIELD_ACTION_TYPE.to_string());
        names.insert(FIELD_TIMESTAMP.to_string());
        for k in self.input.keys() {
            names.insert(format!("input.{k}"));
        }
        for k in self.output.keys() {
            names.insert(format!("output.{k}"));
        }
        for k in self.context.keys() {
            names.insert(format!("context.{k}"));
        }
        names
    }

    /// Value of a namespaced field, resolved against this step's own data.
    /// Bare names (no recognized prefix) fall back to the input, output, and
    /// context maps in that order, so convention-level names like
    /// "tool_name" resolve too.
    pub fn field_value(&self, field: &str) -> Option<Value> {
        if field == FIELD_ACTION_TYPE {
            return Some(Value::String(self.action_type.as_str().to_string()));
        }
        if field == FIELD_TIMESTAMP {
            return Some(Value::from(self.timestamp_us));
        }
        if let Some(k) = field.strip_prefix("input.") {
            return self.input.get(k).cloned();
        }
        if let Some(k) = field.strip_prefix("output.") {
            return self.output.get(k).cloned();
        }
        if let Some(k) = field.strip_prefix("context.") {
            return self.context.get(k).cloned();
        }
        self.input
            .get(field)
            .or_else(|| self.output.get(field))
            .or_else(|| self.context.get(field))
            .cloned()
    }
}

/// Ground-truth execution: components, steps, phase assignment, and
/// responsibility chains (immediate executor first).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Execution {
    pub components: Vec<Component>,
    pub steps: Vec<Step>,
    pub phase_of: BTreeMap<u64, String>,
    pub responsibility_of: BTreeMap<u64, Vec<ComponentId>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interaction_graph: Option<BTreeSet<(ComponentId, ComponentId)>>,
}

impl Execution {
    pub fn step(&self, step_id: u64) -> Option<&Step> {
        self.steps.iter().find(|s| s.step_id == step_id)
    }

    /// Policy-relevant steps, in step order.
    pub fn relevant_steps(&self) -> impl Iterator<Item = &Step> {
        self.steps.iter().filter(|s| s.policy_relevant)
    }

    /// Maximal contiguous runs of steps sharing a phase label, in step order.
    pub fn segments(&self) -> Vec<Segment> {
        let mut segments: Vec<Segment> = Vec::new();
        for step in &self.steps {
            let phase = self
                .phase_of
                .get(&step.step_id)
                .cloned()
                .unwrap_or_default();
            match segments.last_mut() {
                Some(seg) if seg.phase == phase => {
                    seg.step_ids.push(step.step_id);
                    seg.last_timestamp_us = step.timestamp_us;
                }
                _ => segments.push(Segment {
                    phase,
                    step_ids: vec![step.step_id],
                    first_timestamp_us: step.timestamp_us,
                    last_timestamp_us: step.timestamp_us,
                }),
            }
        }
        segments
    }
}

/// One maximal contiguous lifecycle segment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Segment {
    pub phase: String,
    pub step_ids: Vec<u64>,
    pub first_timestamp_us: i64,
    pub last_timestamp_us: i64,
}

impl Segment {
    pub fn len_steps(&self) -> u64 {
        self.step_ids.len() as u64
    }
    pub fn duration_us(&self) -> u64 {
        (self.last_timestamp_us - self.first_timestamp_us).max(0) as u64
    }
}

/// A partial observation of one or more execution steps.
///
/// `fields_present[step]` lists the field names this entry preserves for that
/// step; the preserved values live in `payload` under step-scoped keys
/// `"<step_id>.<field>"`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordEntry {
    pub entry_id: u64,
    pub observes: BTreeSet<u64>,
    #[serde(default)]
    pub fields_present: BTreeMap<u64, BTreeSet<String>>,
    #[serde(default)]
    pub payload: BTreeMap<String, Value>,
    pub record_timestamp_us: i64,
}

impl RecordEntry {
    pub fn payload_key(step_id: u64, field: &str) -> String {
        format!("{step_id}.{field}")
    }

    /// The preserved value of `field` for `step_id`, if this entry carries it.
    pub fn value_for(&self, step_id: u64, field: &str) -> Option<&Value> {
        if !self
            .fields_present
            .get(&step_id)
            .map(|fs| fs.contains(field))
            .unwrap_or(false)
        {
            return None;
        }
        self.payload.get(&Self::payload_key(step_id, field))
    }
}

/// The audit record: ordered entries plus the integrity mechanism descriptor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub entries: Vec<RecordEntry>,
    pub integrity: IntegrityDescriptor,
}

impl AuditRecord {
    pub fn unprotected(entries: Vec<RecordEntry>) -> Self {
        AuditRecord { entries, integrity: IntegrityDescriptor::level0() }
    }

    /// Recoverable field names for one step: the union over all entries
    /// observing it. An unobserved step yields the empty set.
    pub fn recovered_fields(&self, step_id: u64) -> BTreeSet<String> {
        let mut fields = BTreeSet::new();
        for entry in &self.entries {
            if entry.observes.contains(&step_id) {
                if let Some(fs) = entry.fields_present.get(&step_id) {
                    fields.extend(fs.iter().cloned());
                }
            }
        }
        fields
    }

    /// Per-step view of everything the record supports: recovered field names
    /// plus recovered values (later entries win on value conflicts).
    pub fn step_views(&self) -> BTreeMap<u64, StepView> {
        let mut views: BTreeMap<u64, StepView> = BTreeMap::new();
        for entry in &self.entries {
            for &step_id in &entry.observes {
                let view = views.entry(step_id).or_insert_with(|| StepView {
                    step_id,
                    fields: BTreeSet::new(),
                    values: BTreeMap::new(),
                });
                if let Some(fs) = entry.fields_present.get(&step_id) {
                    for field in fs {
                        view.fields.insert(field.clone());
                        if let Some(v) = entry.payload.get(&RecordEntry::payload_key(step_id, field))
                        {
                            view.values.insert(field.clone(), v.clone());
                        }
                    }
                }
            }
        }
        views
    }
}

/// Free-function form of [`AuditRecord::recovered_fields`].
pub fn recovered_fields(step_id: u64, record: &AuditRecord) -> BTreeSet<String> {
    record.recovered_fields(step_id)
}

/// What the record supports about one step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepView {
    pub step_id: u64,
    pub fields: BTreeSet<String>,
    pub values: BTreeMap<String, Value>,
}

/// Minimal observational field set per action type (the RF denominator).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldRequirements {
    pub table: BTreeMap<ActionType, BTreeSet<String>>,
}

impl FieldRequirements {
    /// Documented default profile. Deployment-specific tables should override
    /// this; every action type is covered so generated traces always have a
    /// denominator.
    pub fn default_profile() -> Self {
        fn set(names: &[&str]) -> BTreeSet<String> {
            names.iter().map(|s| s.to_string()).collect()
        }
        let mut table = BTreeMap::new();
        table.insert(
            ActionType::ToolCall,
            set(&["tool_name", "input.arguments", "output.result", "timestamp", "context.caller_chain"]),
        );
        table.insert(ActionType::FileOp, set(&["input.path", "input.mode", "timestamp"]));
        table.insert(ActionType::NetworkCall, set(&["input.url", "output.status", "timestamp"]));
        table.insert(ActionType::DbQuery, set(&["input.query", "output.rows", "timestamp"]));
        table.insert(ActionType::MessageSend, set(&["input.recipient", "input.body", "timestamp"]));
        table.insert(ActionType::Approval, set(&["context.approval_state", "context.approver", "timestamp"]));
        table.insert(ActionType::Delegation, set(&["input.task", "context.delegate", "timestamp"]));
        table.insert(ActionType::Retry, set(&["context.attempt", "timestamp"]));
        table.insert(ActionType::Fallback, set(&["context.reason", "timestamp"]));
        table.insert(ActionType::Escalation, set(&["context.target", "timestamp"]));
        FieldRequirements { table }
    }

    pub fn required_for(&self, action: ActionType) -> Option<&BTreeSet<String>> {
        self.table.get(&action)
    }
}

/// A named invariant violation. Diagnostics are data, not failures.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub code: DiagnosticCode,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_id: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub component: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticCode {
    EmptyComponentId,
    DuplicateComponentId,
    BadStepId,
    DuplicateStepId,
    DecreasingTimestamp,
    MissingPhaseAssignment,
    MissingContextPhase,
    PhaseMismatch,
    EmptyResponsibilityChain,
    UnknownComponent,
    EntryIdsNotIncreasing,
    FieldsOutsideObserves,
    MissingPayloadValue,
}

fn diag(code: DiagnosticCode, message: String, step_id: Option<u64>, component: Option<String>) -> Diagnostic {
    Diagnostic { code, message, step_id, component }
}

/// Check every execution invariant; the returned list is empty iff all hold.
/// Identical inputs always yield the identical diagnostic list.
pub fn validate_execution(execution: &Execution) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut ids = BTreeSet::new();
    for c in &execution.components {
        if c.id.as_str().is_empty() {
            out.push(diag(
                DiagnosticCode::EmptyComponentId,
                "component id is empty".into(),
                None,
                Some(String::new()),
            ));
        }
        if !ids.insert(c.id.clone()) {
            out.push(diag(
                DiagnosticCode::DuplicateComponentId,
                format!("component id {:?} declared more than once", c.id.as_str()),
                None,
                Some(c.id.as_str().to_string()),
            ));
        }
    }

    let mut seen_steps = BTreeSet::new();
    let mut prev: Option<&Step> = None;
    for step in &execution.steps {
        if step.step_id == 0 {
            out.push(diag(
                DiagnosticCode::BadStepId,
                "step_id must be >= 1".into(),
                Some(step.step_id),
                None,
            ));
        }
        if !seen_steps.insert(step.step_id) {
            out.push(diag(
                DiagnosticCode::DuplicateStepId,
                format!("step_id {} appears more than once", step.step_id),
                Some(step.step_id),
                None,
            ));
        }
        if let Some(p) = prev {
            if p.step_id >= step.step_id {
                out.push(diag(
                    DiagnosticCode::BadStepId,
                    format!("step_id {} does not increase after {}", step.step_id, p.step_id),
                    Some(step.step_id),
                    None,
                ));
            }
            if step.timestamp_us < p.timestamp_us {
                out.push(diag(
                    DiagnosticCode::DecreasingTimestamp,
                    format!(
                        "step {} timestamp {} is earlier than step {} timestamp {}",
                        step.step_id, step.timestamp_us, p.step_id, p.timestamp_us
                    ),
                    Some(step.step_id),
                    None,
                ));
            }
        }
        match execution.phase_of.get(&step.step_id) {
            None => out.push(diag(
                DiagnosticCode::MissingPhaseAssignment,
                format!("step {} has no phase assignment", step.step_id),
                Some(step.step_id),
                None,
            )),
            Some(phase) => match step.context.get("phase") {
                None => out.push(diag(
                    DiagnosticCode::MissingContextPhase,
                    format!("step {} context lacks the \"phase\" key", step.step_id),
                    Some(step.step_id),
                    None,
                )),
                Some(Value::String(ctx_phase)) if ctx_phase == phase => {}
                Some(other) => out.push(diag(
                    DiagnosticCode::PhaseMismatch,
                    format!(
                        "step {} context phase {other} disagrees with assignment {phase:?}",
                        step.step_id
                    ),
                    Some(step.step_id),
                    None,
                )),
            },
        }
        if step.policy_relevant {
            let chain = execution.responsibility_of.get(&step.step_id);
            if chain.map(|c| c.is_empty()).unwrap_or(true) {
                out.push(diag(
                    DiagnosticCode::EmptyResponsibilityChain,
                    format!("policy-relevant step {} has no responsibility chain", step.step_id),
                    Some(step.step_id),
                    None,
                ));
            }
        }
        prev = Some(step);
    }

    for (step_id, chain) in &execution.responsibility_of {
        for cid in chain {
            if !ids.contains(cid) {
                out.push(diag(
                    DiagnosticCode::UnknownComponent,
                    format!("responsibility chain of step {step_id} references unknown component {:?}", cid.as_str()),
                    Some(*step_id),
                    Some(cid.as_str().to_string()),
                ));
            }
        }
    }
    if let Some(graph) = &execution.interaction_graph {
        for (from, to) in graph {
            for cid in [from, to] {
                if !ids.contains(cid) {
                    out.push(diag(
                        DiagnosticCode::UnknownComponent,
                        format!("interaction graph references unknown component {:?}", cid.as_str()),
                        None,
                        Some(cid.as_str().to_string()),
                    ));
                }
            }
        }
    }
    out
}

/// Check record-entry invariants (entry ordering, fields/payload agreement).
pub fn validate_record(record: &AuditRecord) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut prev_id: Option<u64> = None;
    for entry in &record.entries {
        if let Some(p) = prev_id {
            if entry.entry_id <= p {
                out.push(diag(
                    DiagnosticCode::EntryIdsNotIncreasing,
                    format!("entry_id {} does not increase after {}", entry.entry_id, p),
                    None,
                    None,
                ));
            }
        }
        prev_id = Some(entry.entry_id);
        for (step_id, fields) in &entry.fields_present {
            if !entry.observes.contains(step_id) {
                out.push(diag(
                    DiagnosticCode::FieldsOutsideObserves,
                    format!("entry {} lists fields for unobserved step {step_id}", entry.entry_id),
                    Some(*step_id),
                    None,
                ));
            }
            for field in fields {
                if !entry.payload.contains_key(&RecordEntry::payload_key(*step_id, field)) {
                    out.push(diag(
                        DiagnosticCode::MissingPayloadValue,
                        format!(
                            "entry {} preserves field {field:?} of step {step_id} without a payload value",
                            entry.entry_id
                        ),
                        Some(*step_id),
                        None,
                    ));
                }
            }
        }
    }
    out
}
