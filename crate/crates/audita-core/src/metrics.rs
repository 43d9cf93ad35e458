//! Trace-level auditability metrics over an (execution, record) pair.
//!
//! All ratios are exact rationals; the stated empty-set conventions are part
//! of the contract:
//! ACR = 1 and RF = 1 when there are no policy-relevant steps, RF = 0 when
//! relevant steps exist but none is covered, LPC = 1 and GB = 0 when the
//! execution has no lifecycle segments, AC = 1 and ACD = 0 when there are no
//! policy-relevant steps.

use crate::policy::{self, PolicyError, StructuralPolicy};
use crate::rational::{rational_serde, Ratio};
use crate::trace::{
    AuditRecord, ComponentId, Execution, FieldRequirements, FIELD_CALLER_CHAIN, FIELD_PHASE,
};
use num_rational::Rational64;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no field requirements declared for action type {0}")]
    MissingRequirements(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// Unit in which gap burden is expressed. Fixed per deployment profile and
/// matching the unit of the GB threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GbUnit {
    StepCount,
    DurationMicroseconds,
}

impl GbUnit {
    pub fn as_str(&self) -> &'static str {
        match self {
            GbUnit::StepCount => "step_count",
            GbUnit::DurationMicroseconds => "duration_microseconds",
        }
    }
}

/// Total unobserved lifecycle content, in steps or microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapBurden {
    pub value: u64,
    pub unit: GbUnit,
}

/// Action coverage rate: the fraction of policy-relevant steps observed by at
/// least one entry. 1 when no policy-relevant steps exist.
pub fn acr(execution: &Execution, record: &AuditRecord) -> Ratio {
    let relevant: Vec<u64> = execution.relevant_steps().map(|s| s.step_id).collect();
    let hits = relevant
        .iter()
        .filter(|id| !record.recovered_fields(**id).is_empty())
        .count();
    Ratio::fraction_or(hits, relevant.len(), Ratio::ONE)
}

/// Record fidelity: mean over covered relevant steps of the fraction of
/// required fields recovered. 0 when relevant steps exist but none is
/// covered; 1 when no relevant steps exist.
pub fn rf(
    execution: &Execution,
    record: &AuditRecord,
    reqs: &FieldRequirements,
) -> Result<Ratio, MetricsError> {
    let mut per_step = Vec::new();
    let mut any_relevant = false;
    for step in execution.relevant_steps() {
        any_relevant = true;
        let required = reqs
            .required_for(step.action_type)
            .ok_or_else(|| MetricsError::MissingRequirements(step.action_type.to_string()))?;
        let recovered = record.recovered_fields(step.step_id);
        if recovered.is_empty() {
            continue; // not covered
        }
        let hit = required.intersection(&recovered).count() as i64;
        per_step.push(Rational64::new(hit, required.len() as i64));
    }
    if !any_relevant {
        return Ok(Ratio::ONE);
    }
    if per_step.is_empty() {
        return Ok(Ratio::ZERO);
    }
    let mean = crate::rational::mean_or(&per_step, Rational64::zero());
    Ok(Ratio::from_rational(mean).expect("per-step fidelity ratios stay within [0, 1]"))
}

/// A segment is observed iff at least one of its steps has a recovered field
/// set containing the phase field.
fn segment_observed(step_ids: &[u64], record: &AuditRecord) -> bool {
    step_ids
        .iter()
        .any(|id| record.recovered_fields(*id).contains(FIELD_PHASE))
}

/// Segment-observed predicate over a materialized segment.
pub fn segment_is_observed(segment: &crate::trace::Segment, record: &AuditRecord) -> bool {
    segment_observed(&segment.step_ids, record)
}

/// Lifecycle phase coverage: fraction of segments observed. 1 when the
/// execution has no segments.
pub fn lpc(execution: &Execution, record: &AuditRecord) -> Ratio {
    let segments = execution.segments();
    let hits = segments
        .iter()
        .filter(|seg| segment_observed(&seg.step_ids, record))
        .count();
    Ratio::fraction_or(hits, segments.len(), Ratio::ONE)
}

/// Gap burden: total size of unobserved segments in the chosen unit. 0 when
/// no segments exist.
pub fn gb(execution: &Execution, record: &AuditRecord, unit: GbUnit) -> GapBurden {
    let value = execution
        .segments()
        .iter()
        .filter(|seg| !segment_observed(&seg.step_ids, record))
        .map(|seg| match unit {
            GbUnit::StepCount => seg.len_steps(),
            GbUnit::DurationMicroseconds => seg.duration_us(),
        })
        .sum();
    GapBurden { value, unit }
}

/// The longest recoverable prefix of a step's responsibility chain.
///
/// Position `i` is recoverable iff some entry observing the step preserves a
/// caller-chain value whose element at `i` equals the ground-truth component
/// at `i`; the prefix ends at the first unrecoverable position.
pub fn recovered_chain_prefix(
    execution: &Execution,
    record: &AuditRecord,
    step_id: u64,
) -> Vec<ComponentId> {
    let truth = match execution.responsibility_of.get(&step_id) {
        Some(chain) => chain,
        None => return Vec::new(),
    };
    let mut recovered_lists: Vec<Vec<String>> = Vec::new();
    for entry in &record.entries {
        if !entry.observes.contains(&step_id) {
            continue;
        }
        if let Some(Value::Array(items)) = entry.value_for(step_id, FIELD_CALLER_CHAIN) {
            let list: Vec<String> = items
                .iter()
                .map(|v| match v {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect();
            recovered_lists.push(list);
        }
    }
    let mut prefix = Vec::new();
    for (i, expected) in truth.iter().enumerate() {
        let supported = recovered_lists
            .iter()
            .any(|list| list.get(i).map(|got| got == expected.as_str()).unwrap_or(false));
        if supported {
            prefix.push(expected.clone());
        } else {
            break;
        }
    }
    prefix
}

/// Attribution completeness: fraction of policy-relevant steps whose
/// recovered chain prefix has full ground-truth length. 1 when no relevant
/// steps exist.
pub fn ac(execution: &Execution, record: &AuditRecord) -> Ratio {
    let mut total = 0usize;
    let mut full = 0usize;
    for step in execution.relevant_steps() {
        total += 1;
        let truth_len = execution
            .responsibility_of
            .get(&step.step_id)
            .map(|c| c.len())
            .unwrap_or(0);
        if recovered_chain_prefix(execution, record, step.step_id).len() == truth_len {
            full += 1;
        }
    }
    Ratio::fraction_or(full, total, Ratio::ONE)
}

/// Attribution chain depth: mean recovered prefix length over policy-relevant
/// steps. 0 when no relevant steps exist.
pub fn acd(execution: &Execution, record: &AuditRecord) -> Rational64 {
    let depths: Vec<Rational64> = execution
        .relevant_steps()
        .map(|s| {
            Rational64::from_integer(recovered_chain_prefix(execution, record, s.step_id).len() as i64)
        })
        .collect();
    crate::rational::mean_or(&depths, Rational64::zero())
}

/// The full metric vector for one (execution, record, policy-set) triple.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsBundle {
    pub acr: Ratio,
    pub rf: Ratio,
    pub lpc: Ratio,
    pub gb: GapBurden,
    pub spdr: Ratio,
    /// Detection latency in microseconds per violated policy; a policy is
    /// absent when no violation was detected.
    pub adl: BTreeMap<String, i64>,
    pub ac: Ratio,
    #[serde(with = "rational_serde")]
    pub acd: Rational64,
    pub is_level: u8,
    pub vc_micros: u64,
}

impl MetricsBundle {
    /// Compute every metric. `is_level` and `vc_micros` come from the record's
    /// integrity mechanism (see the evidence module).
    pub fn compute(
        execution: &Execution,
        record: &AuditRecord,
        policies: &[StructuralPolicy],
        reqs: &FieldRequirements,
        unit: GbUnit,
        is_level: u8,
        vc_micros: u64,
    ) -> Result<MetricsBundle, MetricsError> {
        let mut adl = BTreeMap::new();
        for p in policies {
            if let Some(latency) = policy::adl(p, execution, record)? {
                adl.insert(p.policy_id.clone(), latency);
            }
        }
        let bundle = MetricsBundle {
            acr: acr(execution, record),
            rf: rf(execution, record, reqs)?,
            lpc: lpc(execution, record),
            gb: gb(execution, record, unit),
            spdr: policy::spdr(policies, record)?,
            adl,
            ac: ac(execution, record),
            acd: acd(execution, record),
            is_level,
            vc_micros,
        };
        debug_assert!(bundle.is_level <= 3);
        Ok(bundle)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{execution_with, observe, step};
    use crate::trace::{ActionType, Component, ComponentKind};
    use serde_json::json;
    use std::collections::BTreeMap;

    #[test]
    fn acr_is_one_without_relevant_steps() {
        let ex = execution_with(
            vec![step(1, ActionType::Retry, 10, "plan", false)],
            &[(1, "plan")],
        );
        let record = AuditRecord::unprotected(vec![]);
        assert_eq!(acr(&ex, &record), Ratio::ONE);
    }

    #[test]
    fn acr_counts_observed_relevant_steps() {
        let ex = execution_with(
            vec![
                step(1, ActionType::ToolCall, 10, "act", true),
                step(2, ActionType::ToolCall, 20, "act", true),
                step(3, ActionType::ToolCall, 30, "act", true),
                step(4, ActionType::ToolCall, 40, "act", true),
            ],
            &[(1, "act"), (2, "act"), (3, "act"), (4, "act")],
        );
        let record = AuditRecord::unprotected(vec![
            observe(1, 1, &[("tool_name", json!("a"))], 11),
            observe(2, 2, &[("tool_name", json!("b"))], 21),
            observe(3, 3, &[("tool_name", json!("c"))], 31),
        ]);
        assert_eq!(acr(&ex, &record), Ratio::new(3, 4).unwrap());
    }

    #[test]
    fn acr_is_zero_on_empty_record() {
        let ex = execution_with(
            vec![step(1, ActionType::ToolCall, 10, "act", true)],
            &[(1, "act")],
        );
        assert_eq!(acr(&ex, &AuditRecord::unprotected(vec![])), Ratio::ZERO);
    }

    #[test]
    fn rf_zero_when_nothing_covered() {
        let ex = execution_with(
            vec![step(1, ActionType::ToolCall, 10, "act", true)],
            &[(1, "act")],
        );
        let reqs = FieldRequirements::default_profile();
        let got = rf(&ex, &AuditRecord::unprotected(vec![]), &reqs).unwrap();
        assert_eq!(got, Ratio::ZERO);
    }

    #[test]
    fn rf_one_when_all_required_fields_survive() {
        let ex = execution_with(
            vec![step(1, ActionType::Retry, 10, "act", true)],
            &[(1, "act")],
        );
        let reqs = FieldRequirements::default_profile();
        // retry requires context.attempt and timestamp
        let record = AuditRecord::unprotected(vec![observe(
            1,
            1,
            &[("context.attempt", json!(1)), ("timestamp", json!(10))],
            11,
        )]);
        assert_eq!(rf(&ex, &record, &reqs).unwrap(), Ratio::ONE);
    }

    #[test]
    fn rf_half_when_two_of_four_required_fields_survive() {
        let mut reqs = FieldRequirements::default_profile();
        reqs.table.insert(
            ActionType::ToolCall,
            ["tool_name", "input.arguments", "output.result", "timestamp"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        );
        let ex = execution_with(
            vec![step(1, ActionType::ToolCall, 10, "act", true)],
            &[(1, "act")],
        );
        let record = AuditRecord::unprotected(vec![observe(
            1,
            1,
            &[("tool_name", json!("t")), ("timestamp", json!(10))],
            11,
        )]);
        assert_eq!(rf(&ex, &record, &reqs).unwrap(), Ratio::new(1, 2).unwrap());
    }

    #[test]
    fn rf_one_without_relevant_steps() {
        let ex = execution_with(vec![], &[]);
        let reqs = FieldRequirements::default_profile();
        assert_eq!(rf(&ex, &AuditRecord::unprotected(vec![]), &reqs).unwrap(), Ratio::ONE);
    }

    #[test]
    fn rf_errors_on_missing_requirement_entry() {
        let ex = execution_with(
            vec![step(1, ActionType::ToolCall, 10, "act", true)],
            &[(1, "act")],
        );
        let reqs = FieldRequirements { table: BTreeMap::new() };
        let err = rf(&ex, &AuditRecord::unprotected(vec![]), &reqs).unwrap_err();
        assert!(err.to_string().contains("tool_call"));
    }

    #[test]
    fn lpc_one_on_empty_execution_and_gb_zero() {
        let ex = execution_with(vec![], &[]);
        let record = AuditRecord::unprotected(vec![]);
        assert_eq!(lpc(&ex, &record), Ratio::ONE);
        assert_eq!(gb(&ex, &record, GbUnit::StepCount).value, 0);
    }

    #[test]
    fn lpc_counts_segments_with_recovered_phase() {
        // segments: [1,2]=plan, [3]=act, [4]=fallback
        let ex = execution_with(
            vec![
                step(1, ActionType::Retry, 10, "plan", false),
                step(2, ActionType::Retry, 20, "plan", false),
                step(3, ActionType::ToolCall, 30, "act", true),
                step(4, ActionType::Fallback, 40, "fallback", false),
            ],
            &[(1, "plan"), (2, "plan"), (3, "act"), (4, "fallback")],
        );
        let record = AuditRecord::unprotected(vec![
            observe(1, 2, &[(FIELD_PHASE, json!("plan"))], 21),
            observe(2, 3, &[(FIELD_PHASE, json!("act"))], 31),
            observe(3, 4, &[("context.reason", json!("timeout"))], 41),
        ]);
        assert_eq!(lpc(&ex, &record), Ratio::new(2, 3).unwrap());
    }

    #[test]
    fn lpc_zero_when_phase_never_preserved() {
        let ex = execution_with(
            vec![
                step(1, ActionType::ToolCall, 10, "act", true),
                step(2, ActionType::Fallback, 20, "fallback", false),
            ],
            &[(1, "act"), (2, "fallback")],
        );
        let record = AuditRecord::unprotected(vec![
            observe(1, 1, &[("tool_name", json!("t"))], 11),
            observe(2, 2, &[("context.reason", json!("r"))], 21),
        ]);
        assert_eq!(lpc(&ex, &record), Ratio::ZERO);
    }

    #[test]
    fn gb_counts_unobserved_segment_steps() {
        let ex = execution_with(
            vec![
                step(1, ActionType::Retry, 10, "plan", false),
                step(2, ActionType::Retry, 20, "plan", false),
                step(3, ActionType::Retry, 30, "plan", false),
                step(4, ActionType::Retry, 40, "plan", false),
                step(5, ActionType::Retry, 50, "plan", false),
            ],
            &[(1, "plan"), (2, "plan"), (3, "plan"), (4, "plan"), (5, "plan")],
        );
        let record = AuditRecord::unprotected(vec![]);
        assert_eq!(gb(&ex, &record, GbUnit::StepCount).value, 5);
        assert_eq!(gb(&ex, &record, GbUnit::DurationMicroseconds).value, 40);
    }

    #[test]
    fn gb_zero_when_all_segments_observed() {
        let ex = execution_with(
            vec![step(1, ActionType::Retry, 10, "plan", false)],
            &[(1, "plan")],
        );
        let record =
            AuditRecord::unprotected(vec![observe(1, 1, &[(FIELD_PHASE, json!("plan"))], 11)]);
        assert_eq!(gb(&ex, &record, GbUnit::StepCount).value, 0);
    }

    #[test]
    fn ac_and_acd_conventions_without_relevant_steps() {
        let ex = execution_with(vec![step(1, ActionType::Retry, 10, "plan", false)], &[(1, "plan")]);
        let record = AuditRecord::unprotected(vec![]);
        assert_eq!(ac(&ex, &record), Ratio::ONE);
        assert_eq!(acd(&ex, &record), Rational64::zero());
    }

    #[test]
    fn ac_full_when_chains_fully_recovered() {
        let ex = execution_with(
            vec![step(1, ActionType::ToolCall, 10, "act", true)],
            &[(1, "act")],
        );
        let record = AuditRecord::unprotected(vec![observe(
            1,
            1,
            &[(FIELD_CALLER_CHAIN, json!(["tool-a", "agent-0"]))],
            11,
        )]);
        assert_eq!(ac(&ex, &record), Ratio::ONE);
        assert_eq!(acd(&ex, &record), Rational64::from_integer(2));
    }

    #[test]
    fn ac_half_when_one_of_two_chains_truncated() {
        let mut ex = execution_with(
            vec![
                step(1, ActionType::ToolCall, 10, "act", true),
                step(2, ActionType::ToolCall, 20, "act", true),
            ],
            &[(1, "act"), (2, "act")],
        );
        // Give both steps depth-3 ground-truth chains.
        ex.components.push(Component { id: ComponentId::new("user-1"), kind: ComponentKind::Human });
        let chain =
            vec![ComponentId::new("tool-a"), ComponentId::new("agent-0"), ComponentId::new("user-1")];
        ex.responsibility_of.insert(1, chain.clone());
        ex.responsibility_of.insert(2, chain);
        let record = AuditRecord::unprotected(vec![
            observe(1, 1, &[(FIELD_CALLER_CHAIN, json!(["tool-a", "agent-0", "user-1"]))], 11),
            observe(2, 2, &[(FIELD_CALLER_CHAIN, json!(["tool-a", "agent-0"]))], 21),
        ]);
        assert_eq!(ac(&ex, &record), Ratio::new(1, 2).unwrap());
        // depths 3 and 2 -> mean 2.5
        assert_eq!(acd(&ex, &record), Rational64::new(5, 2));
    }

    #[test]
    fn acd_zero_on_empty_record() {
        let ex = execution_with(
            vec![step(1, ActionType::ToolCall, 10, "act", true)],
            &[(1, "act")],
        );
        assert_eq!(acd(&ex, &AuditRecord::unprotected(vec![])), Rational64::zero());
    }

    #[test]
    fn chain_prefix_unions_positions_across_entries() {
        let ex = execution_with(
            vec![step(1, ActionType::ToolCall, 10, "act", true)],
            &[(1, "act")],
        );
        // One entry carries position 0, another carries both positions.
        let record = AuditRecord::unprotected(vec![
            observe(1, 1, &[(FIELD_CALLER_CHAIN, json!(["tool-a"]))], 11),
            observe(2, 1, &[(FIELD_CALLER_CHAIN, json!(["tool-a", "agent-0"]))], 12),
        ]);
        let prefix = recovered_chain_prefix(&ex, &record, 1);
        assert_eq!(prefix.len(), 2);
    }

    #[test]
    fn chain_prefix_stops_at_mismatch() {
        let ex = execution_with(
            vec![step(1, ActionType::ToolCall, 10, "act", true)],
            &[(1, "act")],
        );
        let record = AuditRecord::unprotected(vec![observe(
            1,
            1,
            &[(FIELD_CALLER_CHAIN, json!(["tool-a", "someone-else"]))],
            11,
        )]);
        let prefix = recovered_chain_prefix(&ex, &record, 1);
        assert_eq!(prefix, vec![ComponentId::new("tool-a")]);
    }

    #[test]
    fn bundle_serializes_canonically() {
        let ex = execution_with(vec![], &[]);
        let record = AuditRecord::unprotected(vec![]);
        let bundle = MetricsBundle::compute(
            &ex,
            &record,
            &[],
            &FieldRequirements::default_profile(),
            GbUnit::StepCount,
            0,
            42,
        )
        .unwrap();
        let s = crate::canonical::to_canonical_string(&bundle).unwrap();
        assert_eq!(
            s,
            r#"{"ac":"1.000000","acd":"0.000000","acr":"1.000000","adl":{},"gb":{"unit":"step_count","value":0},"is_level":0,"lpc":"1.000000","rf":"1.000000","spdr":"1.000000","vc_micros":42}"#
        );
    }
}
