//! File formats for traces, records, and profile documents.
//!
//! Trace file: one manifest line (components, phase_of, responsibility_of,
//! interaction_graph) followed by one line per step. Record file: one line
//! per record entry. All lines are canonical JSON (UTF-8, sorted keys, no
//! insignificant whitespace). Threshold, requirements, descriptor, policy,
//! generation-spec, and degradation-op files are single canonical JSON
//! documents. See docs/formats.md for the schemas.

use crate::auditability::{SystemDescriptor, ThresholdVector};
use crate::canonical::{self, CanonicalError};
use crate::lab::{DegradationOp, GenerationSpec};
use crate::trace::{
    AuditRecord, Component, ComponentId, Execution, FieldRequirements, RecordEntry, Step,
};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
}

fn read_file(path: &Path) -> Result<String, FormatError> {
    std::fs::read_to_string(path)
        .map_err(|source| FormatError::Io { path: path.display().to_string(), source })
}

fn write_file(path: &Path, text: &str) -> Result<(), FormatError> {
    std::fs::write(path, text)
        .map_err(|source| FormatError::Io { path: path.display().to_string(), source })
}

fn parse_line<T: for<'de> Deserialize<'de>>(
    path: &Path,
    line_no: usize,
    line: &str,
) -> Result<T, FormatError> {
    serde_json::from_str(line).map_err(|e| FormatError::Parse {
        path: path.display().to_string(),
        line: line_no,
        message: e.to_string(),
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceManifest {
    components: Vec<Component>,
    phase_of: BTreeMap<u64, String>,
    responsibility_of: BTreeMap<u64, Vec<ComponentId>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    interaction_graph: Option<BTreeSet<(ComponentId, ComponentId)>>,
}

/// Serialize an execution to the trace file form.
pub fn execution_to_string(execution: &Execution) -> Result<String, FormatError> {
    let manifest = TraceManifest {
        components: execution.components.clone(),
        phase_of: execution.phase_of.clone(),
        responsibility_of: execution.responsibility_of.clone(),
        interaction_graph: execution.interaction_graph.clone(),
    };
    let mut out = canonical::to_canonical_string(&manifest)?;
    out.push('\n');
    for step in &execution.steps {
        out.push_str(&canonical::to_canonical_string(step)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn execution_from_str(path: &Path, text: &str) -> Result<Execution, FormatError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, manifest_line) = lines.next().ok_or_else(|| FormatError::Parse {
        path: path.display().to_string(),
        line: 1,
        message: "empty trace file".into(),
    })?;
    let manifest: TraceManifest = parse_line(path, 1, manifest_line)?;
    let mut steps = Vec::new();
    for (i, line) in lines {
        steps.push(parse_line::<Step>(path, i + 1, line)?);
    }
    Ok(Execution {
        components: manifest.components,
        steps,
        phase_of: manifest.phase_of,
        responsibility_of: manifest.responsibility_of,
        interaction_graph: manifest.interaction_graph,
    })
}

pub fn write_execution(path: &Path, execution: &Execution) -> Result<(), FormatError> {
    write_file(path, &execution_to_string(execution)?)
}

pub fn read_execution(path: &Path) -> Result<Execution, FormatError> {
    execution_from_str(path, &read_file(path)?)
}

/// Serialize a record's entries to the record file form (the integrity
/// descriptor lives in evidence-log files, not here).
pub fn record_to_string(record: &AuditRecord) -> Result<String, FormatError> {
    let mut out = String::new();
    for entry in &record.entries {
        out.push_str(&canonical::to_canonical_string(entry)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn record_from_str(path: &Path, text: &str) -> Result<AuditRecord, FormatError> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        entries.push(parse_line::<RecordEntry>(path, i + 1, line)?);
    }
    Ok(AuditRecord::unprotected(entries))
}

pub fn write_record(path: &Path, record: &AuditRecord) -> Result<(), FormatError> {
    write_file(path, &record_to_string(record)?)
}

pub fn read_record(path: &Path) -> Result<AuditRecord, FormatError> {
    record_from_str(path, &read_file(path)?)
}

fn read_json_doc<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, FormatError> {
    let text = read_file(path)?;
    serde_json::from_str(&text).map_err(|e| FormatError::Parse {
        path: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })
}

fn write_json_doc<T: Serialize>(path: &Path, value: &T) -> Result<(), FormatError> {
    let mut text = canonical::to_canonical_string(value)?;
    text.push('\n');
    write_file(path, &text)
}

pub fn read_thresholds(path: &Path) -> Result<ThresholdVector, FormatError> {
    read_json_doc(path)
}

pub fn write_thresholds(path: &Path, thresholds: &ThresholdVector) -> Result<(), FormatError> {
    write_json_doc(path, thresholds)
}

pub fn read_requirements(path: &Path) -> Result<FieldRequirements, FormatError> {
    read_json_doc(path)
}

pub fn write_requirements(path: &Path, reqs: &FieldRequirements) -> Result<(), FormatError> {
    write_json_doc(path, reqs)
}

pub fn read_descriptor(path: &Path) -> Result<SystemDescriptor, FormatError> {
    read_json_doc(path)
}

pub fn read_generation_spec(path: &Path) -> Result<GenerationSpec, FormatError> {
    read_json_doc(path)
}

pub fn write_generation_spec(path: &Path, spec: &GenerationSpec) -> Result<(), FormatError> {
    write_json_doc(path, spec)
}

pub fn read_degradation_op(path: &Path) -> Result<DegradationOp, FormatError> {
    read_json_doc(path)
}

/// Policies are loaded through the policy module's stricter entry point.
pub fn read_policies(path: &Path) -> Result<Vec<crate::policy::StructuralPolicy>, FormatError> {
    let text = read_file(path)?;
    crate::policy::parse_policy_set(&text).map_err(|e| FormatError::Parse {
        path: path.display().to_string(),
        line: 0,
        message: e.to_string(),
    })
}

pub fn write_policies(
    path: &Path,
    policies: &[crate::policy::StructuralPolicy],
) -> Result<(), FormatError> {
    write_json_doc(path, &policies)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lab::{generate, GenerationSpec, Topology};
    use crate::rational::Ratio;
    use tempfile::tempdir;

    fn small_spec() -> GenerationSpec {
        GenerationSpec {
            seed: 5,
            n_components: 3,
            n_steps: 6,
            topology: Topology::Chain,
            phase_mix: [("plan".to_string(), 1), ("act".to_string(), 3)].into_iter().collect(),
            relevance_rate: Ratio::new(1, 2).unwrap(),
            coverage_rate: Ratio::ONE,
            field_keep_rate: Ratio::ONE,
        }
    }

    #[test]
    fn trace_file_round_trip() {
        let (execution, _) = generate(&small_spec()).unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("trace.jsonl");
        write_execution(&path, &execution).unwrap();
        let back = read_execution(&path).unwrap();
        assert_eq!(back, execution);
    }

    #[test]
    fn record_file_round_trip() {
        let (_, record) = generate(&small_spec()).unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("record.jsonl");
        write_record(&path, &record).unwrap();
        let back = read_record(&path).unwrap();
        assert_eq!(back.entries, record.entries);
        assert_eq!(back.integrity.level, 0);
    }

    #[test]
    fn trace_lines_are_canonical() {
        let (execution, _) = generate(&small_spec()).unwrap();
        let text = execution_to_string(&execution).unwrap();
        for line in text.lines() {
            let value: serde_json::Value = serde_json::from_str(line).unwrap();
            assert_eq!(serde_json::to_string(&value).unwrap(), line);
        }
    }

    #[test]
    fn parse_errors_cite_path_and_line() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{not json}\n").unwrap();
        let err = read_record(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bad.jsonl"));
        assert!(msg.contains(":1"));
    }

    #[test]
    fn missing_file_error_names_path() {
        let err = read_requirements(Path::new("/nonexistent/reqs.json")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/reqs.json"));
    }
}
