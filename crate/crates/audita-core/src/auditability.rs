//! The thresholded auditability predicate, per-policy audit verdicts, and
//! the six-question disclosure card.
//!
//! The predicate thresholds the existence metrics only (ACR, RF, LPC, GB,
//! SPDR, AC, IS); ADL, ACD, and VC ride along as diagnostics. It is monotone:
//! improving any thresholded metric (and not increasing GB) never turns a
//! passing bundle into a failing one.

use crate::evidence::IntegrityDescriptor;
use crate::metrics::{GapBurden, GbUnit, MetricsBundle};
use crate::policy::{self, PolicyError, PolicyVerdict, StructuralPolicy};
use crate::rational::{to_decimal_string, Ratio};
use crate::trace::{AuditRecord, ComponentId, Execution};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AuditabilityError {
    #[error("gap-burden unit mismatch: bundle uses {bundle}, threshold uses {threshold}")]
    UnitMismatch { bundle: String, threshold: String },
}

/// Deployment-specific threshold vector for the auditability predicate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdVector {
    pub tau_acr: Ratio,
    pub tau_rf: Ratio,
    pub tau_lpc: Ratio,
    pub tau_spdr: Ratio,
    pub tau_ac: Ratio,
    pub tau_gb: GapBurden,
    pub tau_is: u8,
}

impl ThresholdVector {
    /// Illustrative default profile (0.9 on every ratio, zero gap burden,
    /// hash-chained integrity). There is no calibration behind these numbers;
    /// deployments must set their own.
    pub fn default_profile(unit: GbUnit) -> Self {
        let nine_tenths = Ratio::new(9, 10).expect("0.9 is in range");
        ThresholdVector {
            tau_acr: nine_tenths,
            tau_rf: nine_tenths,
            tau_lpc: nine_tenths,
            tau_spdr: nine_tenths,
            tau_ac: nine_tenths,
            tau_gb: GapBurden { value: 0, unit },
            tau_is: 2,
        }
    }
}

/// One thresholded comparison in the report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionCheck {
    pub dimension: String,
    pub value: String,
    pub threshold: String,
    pub pass: bool,
}

/// Non-thresholded companions: they describe audit quality, not whether
/// auditing is possible.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportDiagnostics {
    pub adl: BTreeMap<String, i64>,
    pub acd: String,
    pub vc_micros: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditabilityReport {
    pub auditable: bool,
    pub per_dimension: BTreeMap<String, DimensionCheck>,
    pub diagnostics: ReportDiagnostics,
}

const DIM_AR: &str = "action_recoverability";
const DIM_LC: &str = "lifecycle_coverage";
const DIM_PC: &str = "policy_checkability";
const DIM_RA: &str = "responsibility_attribution";
const DIM_EI: &str = "evidence_integrity";

/// Evaluate the auditability predicate: every existence metric at or above
/// its threshold, with gap burden at or below its.
pub fn is_auditable(
    bundle: &MetricsBundle,
    thresholds: &ThresholdVector,
) -> Result<AuditabilityReport, AuditabilityError> {
    if bundle.gb.unit != thresholds.tau_gb.unit {
        return Err(AuditabilityError::UnitMismatch {
            bundle: bundle.gb.unit.as_str().to_string(),
            threshold: thresholds.tau_gb.unit.as_str().to_string(),
        });
    }
    let ratio_check = |dim: &str, value: Ratio, tau: Ratio| DimensionCheck {
        dimension: dim.to_string(),
        value: value.to_decimal(),
        threshold: tau.to_decimal(),
        pass: value >= tau,
    };
    let mut per_dimension = BTreeMap::new();
    per_dimension.insert("acr".to_string(), ratio_check(DIM_AR, bundle.acr, thresholds.tau_acr));
    per_dimension.insert("rf".to_string(), ratio_check(DIM_AR, bundle.rf, thresholds.tau_rf));
    per_dimension.insert("lpc".to_string(), ratio_check(DIM_LC, bundle.lpc, thresholds.tau_lpc));
    per_dimension.insert(
        "gb".to_string(),
        DimensionCheck {
            dimension: DIM_LC.to_string(),
            value: format!("{} {}", bundle.gb.value, bundle.gb.unit.as_str()),
            threshold: format!("{} {}", thresholds.tau_gb.value, thresholds.tau_gb.unit.as_str()),
            pass: bundle.gb.value <= thresholds.tau_gb.value,
        },
    );
    per_dimension.insert("spdr".to_string(), ratio_check(DIM_PC, bundle.spdr, thresholds.tau_spdr));
    per_dimension.insert("ac".to_string(), ratio_check(DIM_RA, bundle.ac, thresholds.tau_ac));
    per_dimension.insert(
        "is".to_string(),
        DimensionCheck {
            dimension: DIM_EI.to_string(),
            value: bundle.is_level.to_string(),
            threshold: thresholds.tau_is.to_string(),
            pass: bundle.is_level >= thresholds.tau_is,
        },
    );
    let auditable = per_dimension.values().all(|c| c.pass);
    Ok(AuditabilityReport {
        auditable,
        per_dimension,
        diagnostics: ReportDiagnostics {
            adl: bundle.adl.clone(),
            acd: to_decimal_string(bundle.acd),
            vc_micros: bundle.vc_micros,
        },
    })
}

/// A lifecycle segment as cited in a verdict's context slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentDescriptor {
    pub phase: String,
    pub first_step: u64,
    pub last_step: u64,
    pub observed: bool,
}

/// A defensible audit verdict: the action under audit, its lifecycle
/// context, the policy verdict, the recovered responsibility chain, and the
/// integrity mechanism behind the evidence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    /// Absent only for vacuous compliance, where no recorded step matched.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub action: Option<u64>,
    pub context: Vec<SegmentDescriptor>,
    pub verdict: PolicyVerdict,
    pub responsibility: Vec<ComponentId>,
    pub integrity: IntegrityDescriptor,
}

/// Assemble the verdict for one policy; `None` when the policy is
/// undecidable from the record.
pub fn assemble_verdict(
    policy: &StructuralPolicy,
    execution: &Execution,
    record: &AuditRecord,
) -> Result<Option<Verdict>, PolicyError> {
    let outcome = policy::evaluate(policy, record)?;
    if outcome.verdict == PolicyVerdict::Undecidable {
        return Ok(None);
    }
    let action = outcome
        .violating_step
        .or_else(|| policy::trigger_steps(policy, record).first().copied());
    let context = action.map(|s| segments_around(execution, record, s)).unwrap_or_default();
    let responsibility = action
        .map(|s| crate::metrics::recovered_chain_prefix(execution, record, s))
        .unwrap_or_default();
    Ok(Some(Verdict {
        action,
        context,
        verdict: outcome.verdict,
        responsibility,
        integrity: record.integrity.clone(),
    }))
}

/// The observed segments containing and adjacent to a step.
fn segments_around(execution: &Execution, record: &AuditRecord, step_id: u64) -> Vec<SegmentDescriptor> {
    let segments = execution.segments();
    let Some(pos) = segments.iter().position(|s| s.step_ids.contains(&step_id)) else {
        return Vec::new();
    };
    let lo = pos.saturating_sub(1);
    let hi = (pos + 1).min(segments.len() - 1);
    segments[lo..=hi]
        .iter()
        .map(|seg| SegmentDescriptor {
            phase: seg.phase.clone(),
            first_step: *seg.step_ids.first().expect("segments are non-empty"),
            last_step: *seg.step_ids.last().expect("segments are non-empty"),
            observed: crate::metrics::segment_is_observed(seg, record),
        })
        .filter(|seg| seg.observed)
        .collect()
}

/// Ladder label for a bare level, as embedded in cards and verdict output.
pub fn level_label(level: u8) -> &'static str {
    match level {
        0 => "Level 0: none",
        1 => "Level 1: append-only",
        2 => "Level 2: hash-chained",
        _ => "Level 3: signed, hash-chained",
    }
}

/// Operator-authored free-text answers for the six card questions.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemDescriptor {
    #[serde(default)]
    pub q1_actions: String,
    #[serde(default)]
    pub q2_phases: String,
    #[serde(default)]
    pub q3_policies: String,
    #[serde(default)]
    pub q4_attribution: String,
    #[serde(default)]
    pub q5_integrity: String,
    #[serde(default)]
    pub q6_missing_logs: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CardSection {
    pub question: String,
    pub answer: String,
    pub metrics: BTreeMap<String, String>,
}

/// Six-question disclosure artifact: what is recorded, which phases are
/// covered, what is checkable, what attribution exists, what protects the
/// evidence, and what the toolkit can and cannot do once records are gone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditabilityCard {
    pub q1_actions: CardSection,
    pub q2_phases: CardSection,
    pub q3_policies: CardSection,
    pub q4_attribution: CardSection,
    pub q5_integrity: CardSection,
    pub q6_missing_logs: CardSection,
}

#[derive(Debug, Error)]
pub enum CardError {
    #[error("descriptor is missing answers for: {}", .0.join(", "))]
    IncompleteDescriptor(Vec<String>),
}

/// Merge the operator's free-text answers with the computed metric values.
/// Every section must be answered; empty sections are rejected.
pub fn generate_card(
    descriptor: &SystemDescriptor,
    bundle: &MetricsBundle,
    thresholds: &ThresholdVector,
) -> Result<AuditabilityCard, CardError> {
    let mut missing = Vec::new();
    for (key, answer) in [
        ("q1_actions", &descriptor.q1_actions),
        ("q2_phases", &descriptor.q2_phases),
        ("q3_policies", &descriptor.q3_policies),
        ("q4_attribution", &descriptor.q4_attribution),
        ("q5_integrity", &descriptor.q5_integrity),
        ("q6_missing_logs", &descriptor.q6_missing_logs),
    ] {
        if answer.trim().is_empty() {
            missing.push(key.to_string());
        }
    }
    if !missing.is_empty() {
        return Err(CardError::IncompleteDescriptor(missing));
    }

    let report = is_auditable(bundle, thresholds).ok();
    let meets = |keys: &[&str]| -> String {
        report
            .as_ref()
            .map(|r| keys.iter().all(|k| r.per_dimension[*k].pass).to_string())
            .unwrap_or_else(|| "unknown".to_string())
    };
    let m = |pairs: &[(&str, String)]| -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    };

    let adl_rendered = if bundle.adl.is_empty() {
        "no violation detected".to_string()
    } else {
        bundle
            .adl
            .iter()
            .map(|(policy, micros)| format!("{policy}: {micros} us"))
            .collect::<Vec<_>>()
            .join("; ")
    };

    let section = |question: &str, answer: &str, metrics: BTreeMap<String, String>| CardSection {
        question: question.to_string(),
        answer: answer.to_string(),
        metrics,
    };

    let q6_bound = if bundle.is_level >= 2 {
        "Fields absent from every record entry cannot be recovered by this toolkit. \
         The integrity mechanism covers only entries sealed under it; history \
         written before sealing is reported as unattested."
    } else {
        "Fields absent from every record entry cannot be recovered by this toolkit. \
         No integrity mechanism protects this record, and sealing it later would \
         not certify the already-written history."
    };

    Ok(AuditabilityCard {
        q1_actions: section(
            "Q1: Which policy-relevant actions appear in the record, and with which fields?",
            &descriptor.q1_actions,
            m(&[
                ("acr", bundle.acr.to_decimal()),
                ("rf", bundle.rf.to_decimal()),
                ("meets_thresholds", meets(&["acr", "rf"])),
            ]),
        ),
        q2_phases: section(
            "Q2: Which lifecycle phases does the record cover?",
            &descriptor.q2_phases,
            m(&[
                ("lpc", bundle.lpc.to_decimal()),
                ("gb", format!("{} {}", bundle.gb.value, bundle.gb.unit.as_str())),
                ("meets_thresholds", meets(&["lpc", "gb"])),
            ]),
        ),
        q3_policies: section(
            "Q3: Which policies are mechanically decidable from the record?",
            &descriptor.q3_policies,
            m(&[
                ("spdr", bundle.spdr.to_decimal()),
                ("adl", adl_rendered),
                ("meets_thresholds", meets(&["spdr"])),
            ]),
        ),
        q4_attribution: section(
            "Q4: How much of each responsibility chain can be recovered?",
            &descriptor.q4_attribution,
            m(&[
                ("ac", bundle.ac.to_decimal()),
                ("acd", to_decimal_string(bundle.acd)),
                ("meets_thresholds", meets(&["ac"])),
            ]),
        ),
        q5_integrity: section(
            "Q5: What protects the record against modification?",
            &descriptor.q5_integrity,
            m(&[
                ("is", level_label(bundle.is_level).to_string()),
                ("vc", format!("{} us", bundle.vc_micros)),
                ("meets_thresholds", meets(&["is"])),
            ]),
        ),
        q6_missing_logs: section(
            "Q6: What happens when records are missing, redacted, or detached?",
            &descriptor.q6_missing_logs,
            m(&[("recovery_bounds", q6_bound.to_string())]),
        ),
    })
}

impl AuditabilityCard {
    pub fn sections(&self) -> [(&'static str, &CardSection); 6] {
        [
            ("q1_actions", &self.q1_actions),
            ("q2_phases", &self.q2_phases),
            ("q3_policies", &self.q3_policies),
            ("q4_attribution", &self.q4_attribution),
            ("q5_integrity", &self.q5_integrity),
            ("q6_missing_logs", &self.q6_missing_logs),
        ]
    }

    /// Three-column table rendering (question / disclosure / metrics).
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Question | Disclosure | Metrics |\n|---|---|---|\n");
        for (_, section) in self.sections() {
            let metrics = section
                .metrics
                .iter()
                .map(|(k, v)| format!("{k}: {v}"))
                .collect::<Vec<_>>()
                .join("; ");
            out.push_str(&format!(
                "| {} | {} | {} |\n",
                section.question.replace('|', "\\|"),
                section.answer.replace('|', "\\|"),
                metrics.replace('|', "\\|"),
            ));
        }
        out
    }
}
