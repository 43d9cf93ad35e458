//! audita: measure, check, verify, and disclose how auditable an agent
//! execution is from its records.
//!
//! Exit codes partition outcomes: 0 pass, 1 substantive fail (verdict or
//! threshold), 2 input error, 3 validation error, 4 unverifiable.

mod output;

use audita_core::auditability::{self, generate_card, is_auditable};
use audita_core::evidence::{read_signing_key, EvidenceLog, VerifyStatus};
use audita_core::formats;
use audita_core::lab;
use audita_core::metrics::{GbUnit, MetricsBundle};
use audita_core::policy::{self, PolicyVerdict};
use audita_core::trace::{validate_execution, AuditRecord, Execution, FieldRequirements};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAIL: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_VALIDATION: u8 = 3;
pub const EXIT_UNVERIFIABLE: u8 = 4;

#[derive(Parser)]
#[command(name = "audita", version, about = "Auditability metrics, policy checks, and tamper-evident evidence logs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GbUnitArg {
    Steps,
    Micros,
}

impl From<GbUnitArg> for GbUnit {
    fn from(value: GbUnitArg) -> Self {
        match value {
            GbUnitArg::Steps => GbUnit::StepCount,
            GbUnitArg::Micros => GbUnit::DurationMicroseconds,
        }
    }
}

#[derive(Args)]
struct MetricsInputs {
    /// Trace file: manifest line plus one step per line.
    #[arg(long)]
    trace: PathBuf,
    /// Record file (entry per line) or evidence log (header plus sealed entries).
    #[arg(long)]
    record: PathBuf,
    /// Field-requirements table file.
    #[arg(long)]
    requirements: PathBuf,
    /// Policy-set file; omit for an empty policy set.
    #[arg(long)]
    policies: Option<PathBuf>,
    /// Unit for gap burden.
    #[arg(long, value_enum, default_value = "steps")]
    gb_unit: GbUnitArg,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the metric bundle for a trace/record pair.
    Metrics {
        #[command(flatten)]
        inputs: MetricsInputs,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
        /// Also write the canonical JSON document here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the thresholded auditability predicate.
    Check {
        #[command(flatten)]
        inputs: MetricsInputs,
        /// Threshold-profile file.
        #[arg(long)]
        thresholds: PathBuf,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-check an evidence log's integrity mechanism.
    Verify {
        /// Evidence log file.
        #[arg(long)]
        record: PathBuf,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
    /// Generate the six-question disclosure card.
    Card {
        #[command(flatten)]
        inputs: MetricsInputs,
        #[arg(long)]
        thresholds: PathBuf,
        /// Operator-authored answers (q1..q6) file.
        #[arg(long)]
        descriptor: PathBuf,
        /// Output basename; writes <out>.json and <out>.md.
        #[arg(long)]
        out: PathBuf,
    },
    /// Policy operations.
    #[command(subcommand)]
    Policy(PolicyCommand),
    /// Synthetic traces and degradations.
    #[command(subcommand)]
    Lab(LabCommand),
}

#[derive(Subcommand)]
enum PolicyCommand {
    /// Evaluate each policy against a record; exit 1 if any verdict is violate.
    Eval {
        #[arg(long)]
        policies: PathBuf,
        #[arg(long)]
        record: PathBuf,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum LabCommand {
    /// Generate a synthetic execution and record from a generation spec.
    Gen {
        #[arg(long)]
        spec: PathBuf,
        /// Override the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for trace.jsonl and record.jsonl.
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply a degradation operator to a record or evidence log.
    Degrade {
        #[arg(long)]
        record: PathBuf,
        /// Degradation-operator file.
        #[arg(long)]
        op: PathBuf,
        #[arg(long, default_value = "0")]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Seal a plain record into an evidence log at the given level.
    /// Level 3 reads the signing seed from AUDITA_KEYFILE.
    Seal {
        #[arg(long)]
        record: PathBuf,
        #[arg(long)]
        level: u8,
        #[arg(long)]
        out: PathBuf,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Failure { code: EXIT_INPUT, message: message.into() }
    }
}

impl<E: std::error::Error> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::input(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

/// A record input is either a plain record file or an evidence log.
enum LoadedRecord {
    Plain(AuditRecord),
    Log(EvidenceLog),
}

fn load_record_or_log(path: &Path) -> Result<LoadedRecord, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    let is_log = serde_json::from_str::<serde_json::Value>(first)
        .ok()
        .map(|v| v.get("integrity").is_some())
        .unwrap_or(false);
    if is_log {
        Ok(LoadedRecord::Log(EvidenceLog::from_log_str(&text)?))
    } else {
        Ok(LoadedRecord::Plain(formats::record_from_str(path, &text)?))
    }
}

struct AuditInputs {
    execution: Execution,
    record: AuditRecord,
    policies: Vec<audita_core::policy::StructuralPolicy>,
    requirements: FieldRequirements,
    gb_unit: GbUnit,
    is_level: u8,
    vc_micros: u64,
}

fn load_audit_inputs(inputs: &MetricsInputs) -> Result<AuditInputs, Failure> {
    let requirements = formats::read_requirements(&inputs.requirements)?;
    let execution = formats::read_execution(&inputs.trace)?;
    let diagnostics = validate_execution(&execution);
    if !diagnostics.is_empty() {
        for d in &diagnostics {
            eprintln!("diagnostic: {}", d.message);
        }
        return Err(Failure {
            code: EXIT_VALIDATION,
            message: format!("{}: {} validation diagnostics", inputs.trace.display(), diagnostics.len()),
        });
    }
    let (record, is_level, vc_micros) = match load_record_or_log(&inputs.record)? {
        LoadedRecord::Plain(record) => {
            // Nothing to verify on an unprotected record.
            (record, 0, 0)
        }
        LoadedRecord::Log(log) => {
            let report = log.verify();
            let record = log.to_audit_record()?;
            (record, log.integrity_level(), report.vc_micros)
        }
    };
    let policies = match &inputs.policies {
        Some(path) => formats::read_policies(path)?,
        None => Vec::new(),
    };
    Ok(AuditInputs {
        execution,
        record,
        policies,
        requirements,
        gb_unit: inputs.gb_unit.into(),
        is_level,
        vc_micros,
    })
}

fn compute_bundle(inputs: &MetricsInputs) -> Result<MetricsBundle, Failure> {
    let loaded = load_audit_inputs(inputs)?;
    Ok(MetricsBundle::compute(
        &loaded.execution,
        &loaded.record,
        &loaded.policies,
        &loaded.requirements,
        loaded.gb_unit,
        loaded.is_level,
        loaded.vc_micros,
    )?)
}

fn write_out<T: serde::Serialize>(out: &Option<PathBuf>, value: &T) -> Result<(), Failure> {
    if let Some(path) = out {
        let mut text = audita_core::canonical::to_canonical_string(value)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn emit<T: serde::Serialize>(
    format: Format,
    value: &T,
    table: impl FnOnce() -> String,
) -> Result<(), Failure> {
    match format {
        Format::Json => println!("{}", audita_core::canonical::to_canonical_string(value)?),
        Format::Table => print!("{}", table()),
    }
    Ok(())
}

fn run(command: Command) -> Result<u8, Failure> {
    match command {
        Command::Metrics { inputs, format, out } => {
            let bundle = compute_bundle(&inputs)?;
            write_out(&out, &bundle)?;
            emit(format, &bundle, || output::bundle_table(&bundle))?;
            Ok(EXIT_OK)
        }
        Command::Check { inputs, thresholds, format, out } => {
            let bundle = compute_bundle(&inputs)?;
            let thresholds = formats::read_thresholds(&thresholds)?;
            let report = is_auditable(&bundle, &thresholds)?;
            write_out(&out, &report)?;
            emit(format, &report, || output::report_table(&report))?;
            Ok(if report.auditable { EXIT_OK } else { EXIT_FAIL })
        }
        Command::Verify { record, format } => {
            let log = match load_record_or_log(&record)? {
                LoadedRecord::Log(log) => log,
                LoadedRecord::Plain(_) => {
                    return Err(Failure::input(format!(
                        "{}: not an evidence log (no integrity header)",
                        record.display()
                    )))
                }
            };
            let report = log.verify();
            emit(format, &report, || output::verify_table(&report))?;
            match report.status {
                VerifyStatus::Ok => Ok(EXIT_OK),
                VerifyStatus::Tampered => Ok(EXIT_FAIL),
                VerifyStatus::Unverifiable => Ok(EXIT_UNVERIFIABLE),
            }
        }
        Command::Card { inputs, thresholds, descriptor, out } => {
            let bundle = compute_bundle(&inputs)?;
            let thresholds = formats::read_thresholds(&thresholds)?;
            let descriptor = formats::read_descriptor(&descriptor)?;
            let card = generate_card(&descriptor, &bundle, &thresholds)?;
            let json_path = out.with_extension("json");
            let md_path = out.with_extension("md");
            let mut text = audita_core::canonical::to_canonical_string(&card)?;
            text.push('\n');
            std::fs::write(&json_path, text)
                .map_err(|e| Failure::input(format!("{}: {e}", json_path.display())))?;
            std::fs::write(&md_path, card.to_markdown())
                .map_err(|e| Failure::input(format!("{}: {e}", md_path.display())))?;
            println!("wrote {} and {}", json_path.display(), md_path.display());
            Ok(EXIT_OK)
        }
        Command::Policy(PolicyCommand::Eval { policies, record, format, out }) => {
            let policies = formats::read_policies(&policies)?;
            let record = match load_record_or_log(&record)? {
                LoadedRecord::Plain(r) => r,
                LoadedRecord::Log(log) => log.to_audit_record()?,
            };
            let mut outcomes = Vec::new();
            let mut any_violation = false;
            for p in &policies {
                let outcome = policy::evaluate(p, &record)?;
                any_violation |= outcome.verdict == PolicyVerdict::Violate;
                outcomes.push((p.policy_id.clone(), outcome));
            }
            let doc: Vec<serde_json::Value> = outcomes
                .iter()
                .map(|(id, o)| serde_json::json!({ "policy_id": id, "outcome": o }))
                .collect();
            write_out(&out, &doc)?;
            emit(format, &doc, || output::outcomes_table(&outcomes))?;
            Ok(if any_violation { EXIT_FAIL } else { EXIT_OK })
        }
        Command::Lab(LabCommand::Gen { spec, seed, out }) => {
            let mut spec = formats::read_generation_spec(&spec)?;
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            let (execution, record) = lab::generate(&spec)?;
            std::fs::create_dir_all(&out)
                .map_err(|e| Failure::input(format!("{}: {e}", out.display())))?;
            let trace_path = out.join("trace.jsonl");
            let record_path = out.join("record.jsonl");
            formats::write_execution(&trace_path, &execution)?;
            formats::write_record(&record_path, &record)?;
            println!(
                "wrote {} ({} steps) and {} ({} entries)",
                trace_path.display(),
                execution.steps.len(),
                record_path.display(),
                record.entries.len()
            );
            Ok(EXIT_OK)
        }
        Command::Lab(LabCommand::Degrade { record, op, seed, out }) => {
            let op = formats::read_degradation_op(&op)?;
            match load_record_or_log(&record)? {
                LoadedRecord::Plain(record) => {
                    let degraded = lab::degrade(&record, &op, seed)?;
                    formats::write_record(&out, &degraded)?;
                }
                LoadedRecord::Log(log) => {
                    let degraded = lab::degrade_log(&log, &op)?;
                    degraded.write_to(&out)?;
                }
            }
            println!("wrote {}", out.display());
            Ok(EXIT_OK)
        }
        Command::Lab(LabCommand::Seal { record, level, out }) => {
            let record = match load_record_or_log(&record)? {
                LoadedRecord::Plain(r) => r,
                LoadedRecord::Log(_) => {
                    return Err(Failure::input("input is already an evidence log"))
                }
            };
            let mut log = match level {
                0 | 1 | 2 => EvidenceLog::new(level)?,
                3 => {
                    let keyfile = std::env::var("AUDITA_KEYFILE").map_err(|_| {
                        Failure::input(
                            "AUDITA_KEYFILE must point at a hex-encoded 32-byte seed file for level 3",
                        )
                    })?;
                    let key = read_signing_key(Path::new(&keyfile))?;
                    EvidenceLog::new_signed(key)
                }
                other => return Err(Failure::input(format!("level must be 0..=3, got {other}"))),
            };
            let start = Instant::now();
            for entry in &record.entries {
                log.append(entry)?;
            }
            log.write_to(&out)?;
            println!(
                "sealed {} entries at {} in {} us -> {}",
                record.entries.len(),
                auditability::level_label(level),
                start.elapsed().as_micros(),
                out.display()
            );
            Ok(EXIT_OK)
        }
    }
}
