//! Structural policies and their three-valued evaluation against audit
//! records.
//!
//! A policy is evaluated from the record alone. The verdict is `undecidable`
//! exactly when some required field is absent from the recovered field sets
//! of every evidence step (and evidence steps exist); once all required
//! fields are jointly recoverable, the kind-specific rule decides comply or
//! violate over the recovered values. A policy whose selectors match nothing
//! in the record complies vacuously.
//!
//! Evidence-step matching is permissive: a recorded step "could contribute"
//! to a policy unless its recovered action type contradicts every selector.
//! Rule evaluation is strict: constrained values must be present and equal.

use crate::rational::Ratio;
use crate::trace::{ActionType, AuditRecord, Execution, StepView, FIELD_ACTION_TYPE};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("policy {policy_id}: clauses reference fields missing from required_fields: {fields:?}")]
    Malformed { policy_id: String, fields: Vec<String> },
    #[error("duplicate policy id {0}")]
    DuplicatePolicyId(String),
}

/// Selects steps by action type plus optional recovered-field predicates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepSelector {
    pub action_type: ActionType,
    #[serde(default)]
    pub field_equals: BTreeMap<String, Value>,
}

impl StepSelector {
    pub fn of(action_type: ActionType) -> Self {
        StepSelector { action_type, field_equals: BTreeMap::new() }
    }

    pub fn with_field(mut self, field: &str, value: Value) -> Self {
        self.field_equals.insert(field.to_string(), value);
        self
    }

    fn referenced_fields(&self) -> BTreeSet<String> {
        let mut fields: BTreeSet<String> = self.field_equals.keys().cloned().collect();
        fields.insert(FIELD_ACTION_TYPE.to_string());
        fields
    }

    /// Strict match: every constrained value is recovered and equal.
    fn matches(&self, view: &StepView) -> bool {
        let at = view.values.get(FIELD_ACTION_TYPE);
        if at != Some(&Value::String(self.action_type.as_str().to_string())) {
            return false;
        }
        self.field_equals
            .iter()
            .all(|(f, want)| view.values.get(f) == Some(want))
    }

    /// Contribution match: the step's recovered action type is absent or
    /// equal to the selector's. Field predicates are what the policy checks
    /// over evidence steps, not what qualifies a step as evidence — a denied
    /// approval still contributes to deciding an approval-required policy.
    fn could_contribute(&self, view: &StepView) -> bool {
        match view.values.get(FIELD_ACTION_TYPE) {
            Some(at) => at == &Value::String(self.action_type.as_str().to_string()),
            None => true,
        }
    }
}

/// Extra condition on a single recovered field of the trigger step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldCondition {
    pub field: String,
    pub equals: Value,
}

/// Kind-specific requirement clause.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Requirement {
    /// Every trigger step must be preceded by a step matching `prior`.
    RequirePriorEvent { prior: StepSelector },
    /// No trigger step may follow a step matching `earlier`, unless the
    /// trigger step satisfies `unless`.
    ForbidSequence {
        earlier: StepSelector,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        unless: Option<FieldCondition>,
    },
    /// Every trigger step must have these fields recovered.
    FieldPresence { fields: BTreeSet<String> },
    /// Every trigger step must carry `field` recovered and equal to `equals`.
    FieldValue { field: String, equals: Value },
}

impl Requirement {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Requirement::RequirePriorEvent { .. } => "require_prior_event",
            Requirement::ForbidSequence { .. } => "forbid_sequence",
            Requirement::FieldPresence { .. } => "field_presence",
            Requirement::FieldValue { .. } => "field_value",
        }
    }
}

/// A machine-checkable structural policy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuralPolicy {
    pub policy_id: String,
    pub trigger: StepSelector,
    #[serde(flatten)]
    pub requirement: Requirement,
    /// The full field set the policy needs recoverable (F of the policy):
    /// exactly the fields referenced by trigger and requirement clauses.
    pub required_fields: BTreeSet<String>,
}

impl StructuralPolicy {
    /// Construct with `required_fields` derived from the clauses.
    pub fn new(policy_id: impl Into<String>, trigger: StepSelector, requirement: Requirement) -> Self {
        let mut p = StructuralPolicy {
            policy_id: policy_id.into(),
            trigger,
            requirement,
            required_fields: BTreeSet::new(),
        };
        p.required_fields = p.referenced_fields();
        p
    }

    /// Every field name referenced by the trigger and requirement clauses.
    pub fn referenced_fields(&self) -> BTreeSet<String> {
        let mut fields = self.trigger.referenced_fields();
        match &self.requirement {
            Requirement::RequirePriorEvent { prior } => fields.extend(prior.referenced_fields()),
            Requirement::ForbidSequence { earlier, unless } => {
                fields.extend(earlier.referenced_fields());
                if let Some(c) = unless {
                    fields.insert(c.field.clone());
                }
            }
            Requirement::FieldPresence { fields: fs } => fields.extend(fs.iter().cloned()),
            Requirement::FieldValue { field, .. } => {
                fields.insert(field.clone());
            }
        }
        fields
    }

    /// Fail when clauses reference fields not listed in `required_fields`.
    pub fn validate(&self) -> Result<(), PolicyError> {
        let missing: Vec<String> = self
            .referenced_fields()
            .difference(&self.required_fields)
            .cloned()
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(PolicyError::Malformed { policy_id: self.policy_id.clone(), fields: missing })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyVerdict {
    Comply,
    Violate,
    Undecidable,
}

/// Outcome of evaluating one policy against one record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyOutcome {
    pub verdict: PolicyVerdict,
    /// All recorded steps whose fields could contribute to deciding the
    /// policy.
    pub evidence_steps: BTreeSet<u64>,
    /// Non-empty exactly when the verdict is undecidable.
    pub missing_fields: BTreeSet<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub violating_step: Option<u64>,
}

fn requirement_selectors(policy: &StructuralPolicy) -> Vec<&StepSelector> {
    match &policy.requirement {
        Requirement::RequirePriorEvent { prior } => vec![prior],
        Requirement::ForbidSequence { earlier, .. } => vec![earlier],
        Requirement::FieldPresence { .. } | Requirement::FieldValue { .. } => vec![],
    }
}

/// Recorded steps strictly matching the policy's trigger, in step order.
pub fn trigger_steps(policy: &StructuralPolicy, record: &AuditRecord) -> Vec<u64> {
    record
        .step_views()
        .values()
        .filter(|v| policy.trigger.matches(v))
        .map(|v| v.step_id)
        .collect()
}

/// All recorded steps matching the policy's trigger or requirement selectors
/// (permissively: nothing recovered contradicts the selector).
pub fn evidence_steps(policy: &StructuralPolicy, record: &AuditRecord) -> BTreeSet<u64> {
    let views = record.step_views();
    let selectors: Vec<&StepSelector> = std::iter::once(&policy.trigger)
        .chain(requirement_selectors(policy))
        .collect();
    views
        .values()
        .filter(|view| selectors.iter().any(|sel| sel.could_contribute(view)))
        .map(|view| view.step_id)
        .collect()
}

/// Evaluate a policy against a record with three-valued semantics.
pub fn evaluate(policy: &StructuralPolicy, record: &AuditRecord) -> Result<PolicyOutcome, PolicyError> {
    policy.validate()?;
    let views = record.step_views();
    let evidence = evidence_steps(policy, record);

    if evidence.is_empty() {
        // Vacuous: the policy governs events the record shows no sign of.
        return Ok(PolicyOutcome {
            verdict: PolicyVerdict::Comply,
            evidence_steps: evidence,
            missing_fields: BTreeSet::new(),
            violating_step: None,
        });
    }

    let mut jointly_recovered: BTreeSet<&String> = BTreeSet::new();
    for step_id in &evidence {
        if let Some(view) = views.get(step_id) {
            jointly_recovered.extend(view.fields.iter());
        }
    }
    let missing_fields: BTreeSet<String> = policy
        .required_fields
        .iter()
        .filter(|f| !jointly_recovered.contains(f))
        .cloned()
        .collect();
    if !missing_fields.is_empty() {
        return Ok(PolicyOutcome {
            verdict: PolicyVerdict::Undecidable,
            evidence_steps: evidence,
            missing_fields,
            violating_step: None,
        });
    }

    let triggers: Vec<&StepView> = views
        .values()
        .filter(|v| policy.trigger.matches(v))
        .collect();

    // Earliest violating step: execution timestamps are non-decreasing in
    // step_id, so the smallest step_id is the earliest (ties included).
    let mut violating: Option<u64> = None;
    let mut record_violation = |step_id: u64| {
        violating = Some(violating.map_or(step_id, |v: u64| v.min(step_id)));
    };

    match &policy.requirement {
        Requirement::RequirePriorEvent { prior } => {
            for t in &triggers {
                let satisfied = views
                    .values()
                    .any(|p| p.step_id < t.step_id && prior.matches(p));
                if !satisfied {
                    record_violation(t.step_id);
                }
            }
        }
        Requirement::ForbidSequence { earlier, unless } => {
            for t in &triggers {
                let preceded = views
                    .values()
                    .any(|e| e.step_id < t.step_id && earlier.matches(e));
                if preceded {
                    let excused = unless
                        .as_ref()
                        .map(|c| t.values.get(&c.field) == Some(&c.equals))
                        .unwrap_or(false);
                    if !excused {
                        record_violation(t.step_id);
                    }
                }
            }
        }
        Requirement::FieldPresence { fields } => {
            for t in &triggers {
                if fields.iter().any(|f| !t.fields.contains(f)) {
                    record_violation(t.step_id);
                }
            }
        }
        Requirement::FieldValue { field, equals } => {
            for t in &triggers {
                if t.values.get(field) != Some(equals) {
                    record_violation(t.step_id);
                }
            }
        }
    }

    Ok(PolicyOutcome {
        verdict: if violating.is_some() { PolicyVerdict::Violate } else { PolicyVerdict::Comply },
        evidence_steps: evidence,
        missing_fields: BTreeSet::new(),
        violating_step: violating,
    })
}

/// Structural policy decidability rate: the fraction of policies decidable
/// from the record. 1 when the policy set is empty.
pub fn spdr(policies: &[StructuralPolicy], record: &AuditRecord) -> Result<Ratio, PolicyError> {
    debug_assert!(
        policies.iter().map(|p| &p.policy_id).collect::<BTreeSet<_>>().len() == policies.len(),
        "policy ids must be distinct",
    );
    let mut decidable = 0usize;
    for p in policies {
        if evaluate(p, record)?.verdict != PolicyVerdict::Undecidable {
            decidable += 1;
        }
    }
    Ok(Ratio::fraction_or(decidable, policies.len(), Ratio::ONE))
}

/// Audit detection latency in microseconds: time from the earliest violating
/// step (execution clock) to the record timestamp of the entry completing the
/// shortest record prefix that already decides violate. `None` when the
/// policy does not evaluate to violate, and when the violating step has no
/// ground-truth timestamp.
pub fn adl(
    policy: &StructuralPolicy,
    execution: &Execution,
    record: &AuditRecord,
) -> Result<Option<i64>, PolicyError> {
    let full = evaluate(policy, record)?;
    if full.verdict != PolicyVerdict::Violate {
        return Ok(None);
    }
    let violating_step = full.violating_step.expect("violate outcome carries a violating step");
    let t_violate = match execution.step(violating_step) {
        Some(s) => s.timestamp_us,
        None => return Ok(None),
    };
    for prefix_len in 1..=record.entries.len() {
        let prefix = AuditRecord {
            entries: record.entries[..prefix_len].to_vec(),
            integrity: record.integrity.clone(),
        };
        if evaluate(policy, &prefix)?.verdict == PolicyVerdict::Violate {
            let t_detect = record.entries[prefix_len - 1].record_timestamp_us;
            return Ok(Some(t_detect - t_violate));
        }
    }
    unreachable!("the full record evaluates to violate, so some prefix must");
}

/// Parse a policy-set document (a JSON list of policies), rejecting unknown
/// kinds, malformed clause/field sets, and duplicate ids.
pub fn parse_policy_set(text: &str) -> Result<Vec<StructuralPolicy>, PolicySetError> {
    let policies: Vec<StructuralPolicy> = serde_json::from_str(text)?;
    let mut seen = BTreeSet::new();
    for p in &policies {
        p.validate()?;
        let exact = p.referenced_fields();
        if p.required_fields != exact {
            return Err(PolicySetError::RequiredFieldsMismatch {
                policy_id: p.policy_id.clone(),
                expected: exact.into_iter().collect(),
            });
        }
        if !seen.insert(p.policy_id.clone()) {
            return Err(PolicyError::DuplicatePolicyId(p.policy_id.clone()).into());
        }
    }
    Ok(policies)
}

#[derive(Debug, Error)]
pub enum PolicySetError {
    #[error("policy document is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("policy {policy_id}: required_fields must exactly equal the referenced fields {expected:?}")]
    RequiredFieldsMismatch { policy_id: String, expected: Vec<String> },
}
