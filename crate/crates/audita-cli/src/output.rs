//! Plain-text table renderings for the human-facing output mode.

use audita_core::auditability::AuditabilityReport;
use audita_core::evidence::{VerificationReport, VerifyStatus};
use audita_core::metrics::MetricsBundle;
use audita_core::policy::{PolicyOutcome, PolicyVerdict};

fn row(out: &mut String, key: &str, value: &str) {
    out.push_str(&format!("{key:<15}{value}\n"));
}

pub fn bundle_table(bundle: &MetricsBundle) -> String {
    let mut out = String::from("metric         value\n");
    row(&mut out, "acr", &bundle.acr.to_decimal());
    row(&mut out, "rf", &bundle.rf.to_decimal());
    row(&mut out, "lpc", &bundle.lpc.to_decimal());
    row(&mut out, "gb", &format!("{} {}", bundle.gb.value, bundle.gb.unit.as_str()));
    row(&mut out, "spdr", &bundle.spdr.to_decimal());
    let adl = if bundle.adl.is_empty() {
        "none detected".to_string()
    } else {
        bundle
            .adl
            .iter()
            .map(|(p, us)| format!("{p}: {us} us"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    row(&mut out, "adl", &adl);
    row(&mut out, "ac", &bundle.ac.to_decimal());
    row(&mut out, "acd", &audita_core::rational::to_decimal_string(bundle.acd));
    row(&mut out, "is", &bundle.is_level.to_string());
    row(&mut out, "vc", &format!("{} us", bundle.vc_micros));
    out
}

pub fn report_table(report: &AuditabilityReport) -> String {
    let mut out = String::from("check   value                 threshold             status\n");
    for (metric, check) in &report.per_dimension {
        out.push_str(&format!(
            "{metric:<8}{:<22}{:<22}{}\n",
            check.value,
            check.threshold,
            if check.pass { "pass" } else { "FAIL" }
        ));
    }
    out.push_str(&format!(
        "auditable: {}\n",
        if report.auditable { "yes" } else { "no" }
    ));
    out.push_str(&format!(
        "diagnostics: acd={} vc={} us adl={}\n",
        report.diagnostics.acd,
        report.diagnostics.vc_micros,
        if report.diagnostics.adl.is_empty() {
            "none".to_string()
        } else {
            report
                .diagnostics
                .adl
                .iter()
                .map(|(p, us)| format!("{p}:{us}us"))
                .collect::<Vec<_>>()
                .join(",")
        }
    ));
    out
}

pub fn verify_table(report: &VerificationReport) -> String {
    let mut out = String::new();
    let status = match report.status {
        VerifyStatus::Ok => "ok",
        VerifyStatus::Tampered => "TAMPERED",
        VerifyStatus::Unverifiable => "unverifiable",
    };
    row(&mut out, "status", status);
    if let Some(seq) = report.first_bad_seq {
        row(&mut out, "first_bad_seq", &seq.to_string());
    }
    row(&mut out, "checked", &report.checked_entries.to_string());
    if report.unattested_entries > 0 {
        row(&mut out, "unattested", &report.unattested_entries.to_string());
    }
    row(&mut out, "vc", &format!("{} us", report.vc_micros));
    out
}

pub fn outcomes_table(outcomes: &[(String, PolicyOutcome)]) -> String {
    let mut out = String::from("policy                        verdict      detail\n");
    for (id, o) in outcomes {
        let verdict = match o.verdict {
            PolicyVerdict::Comply => "comply",
            PolicyVerdict::Violate => "violate",
            PolicyVerdict::Undecidable => "undecidable",
        };
        let detail = match o.verdict {
            PolicyVerdict::Violate => format!(
                "violating_step={}",
                o.violating_step.map(|s| s.to_string()).unwrap_or_default()
            ),
            PolicyVerdict::Undecidable => format!(
                "missing_fields={}",
                o.missing_fields.iter().cloned().collect::<Vec<_>>().join(",")
            ),
            PolicyVerdict::Comply => format!("evidence_steps={}", o.evidence_steps.len()),
        };
        out.push_str(&format!("{id:<30}{verdict:<13}{detail}\n"));
    }
    out
}
