//! Tamper-evident evidence logs on a four-level integrity ladder.
//!
//! Level 0 stores entries mutably, Level 1 adds append-only sequencing,
//! Level 2 chains entries with SHA-256 digests, Level 3 additionally signs
//! each digest with Ed25519. Each level's obligations include the previous
//! level's.
//!
//! A log sealed after the fact (a Level-0 prefix upgraded to Level 2 or 3)
//! chains only from the sealing point: pre-sealing entries stay unattested
//! and verification reports them as such, because nothing can retroactively
//! certify history that was mutable at write time.
//!
//! Appends are strictly serialized through `&mut self`; verification takes
//! `&self`, so any number of concurrent readers can verify a snapshot while
//! a single writer appends.

use crate::canonical::{self, hex_serde, hex_serde_opt, hex_serde_vec, CanonicalError};
use crate::trace::{AuditRecord, RecordEntry};
use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use std::collections::BTreeSet;
use std::path::Path;
use std::time::Instant;
use thiserror::Error;

pub const HASH_ALGORITHM: &str = "SHA-256";
pub const SIGNATURE_SCHEME: &str = "Ed25519";
pub const DIGEST_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 64;
pub const ZERO_DIGEST: [u8; DIGEST_LEN] = [0u8; DIGEST_LEN];

#[derive(Debug, Error)]
pub enum EvidenceError {
    #[error("log is closed for writing")]
    Closed,
    #[error("a signing key is required at level 3")]
    MissingSigningKey,
    #[error("no entry with seq {0}")]
    UnknownSeq(u64),
    #[error("offset {offset} out of range for {target} of entry {seq}")]
    OffsetOutOfRange { seq: u64, target: String, offset: usize },
    #[error("entry {0} carries no signature to mutate")]
    NoSignature(u64),
    #[error("cannot seal from level {from} down to level {to}")]
    DowngradeRejected { from: u8, to: u8 },
    #[error("integrity level must be 0..=3, got {0}")]
    BadLevel(u8),
    #[error("integrity descriptor invalid: {0}")]
    Descriptor(String),
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
    #[error("malformed evidence log: {0}")]
    Malformed(String),
    #[error("signing key file: {0}")]
    Key(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The integrity mechanism protecting a record: its ladder level and the
/// algorithms fixed at that level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegrityDescriptor {
    pub level: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hash_algorithm: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signature_scheme: Option<String>,
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        with = "hex_serde_opt"
    )]
    pub public_key: Option<[u8; 32]>,
}

impl IntegrityDescriptor {
    pub fn level0() -> Self {
        IntegrityDescriptor { level: 0, hash_algorithm: None, signature_scheme: None, public_key: None }
    }

    pub fn level1() -> Self {
        IntegrityDescriptor { level: 1, ..Self::level0() }
    }

    pub fn level2() -> Self {
        IntegrityDescriptor {
            level: 2,
            hash_algorithm: Some(HASH_ALGORITHM.to_string()),
            ..Self::level0()
        }
    }

    pub fn level3(public_key: [u8; 32]) -> Self {
        IntegrityDescriptor {
            level: 3,
            hash_algorithm: Some(HASH_ALGORITHM.to_string()),
            signature_scheme: Some(SIGNATURE_SCHEME.to_string()),
            public_key: Some(public_key),
        }
    }

    pub fn validate(&self) -> Result<(), EvidenceError> {
        if self.level > 3 {
            return Err(EvidenceError::BadLevel(self.level));
        }
        if self.level >= 2 && self.hash_algorithm.is_none() {
            return Err(EvidenceError::Descriptor("level >= 2 requires hash_algorithm".into()));
        }
        if self.level == 3 && (self.signature_scheme.is_none() || self.public_key.is_none()) {
            return Err(EvidenceError::Descriptor(
                "level 3 requires signature_scheme and public_key".into(),
            ));
        }
        Ok(())
    }

    /// One-line rendering of the mechanism, ladder style.
    pub fn summary(&self) -> String {
        match self.level {
            0 => "Level 0: none".to_string(),
            1 => "Level 1: append-only".to_string(),
            2 => format!("Level 2: hash-chained ({})", self.hash_algorithm.as_deref().unwrap_or("?")),
            _ => format!(
                "Level 3: signed, hash-chained ({}, {})",
                self.signature_scheme.as_deref().unwrap_or("?"),
                self.hash_algorithm.as_deref().unwrap_or("?")
            ),
        }
    }
}

/// One stored log row. For chained rows, `digest = SHA-256(prev_digest ||
/// payload)` where `payload` holds the canonical serialization of the record
/// entry; the first chained row uses a zero `prev_digest`. Rows written
/// before the log was sealed keep zero digests and are unattested.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SealedEntry {
    pub seq: u64,
    #[serde(with = "hex_serde")]
    pub prev_digest: [u8; DIGEST_LEN],
    #[serde(with = "hex_serde_vec")]
    pub payload: Vec<u8>,
    #[serde(with = "hex_serde")]
    pub digest: [u8; DIGEST_LEN],
    #[serde(default, skip_serializing_if = "Option::is_none", with = "hex_serde_opt")]
    pub signature: Option<[u8; SIGNATURE_LEN]>,
}

fn chain_digest(prev: &[u8; DIGEST_LEN], payload: &[u8]) -> [u8; DIGEST_LEN] {
    let mut hasher = Sha256::new();
    hasher.update(prev);
    hasher.update(payload);
    hasher.finalize().into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyStatus {
    Ok,
    Tampered,
    /// Levels 0–1 have no cryptographic check to run.
    Unverifiable,
}

/// Result of re-checking a log's integrity mechanism end to end.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub status: VerifyStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_bad_seq: Option<u64>,
    pub checked_entries: u64,
    /// Entries written before the log was sealed; no mechanism covers them.
    pub unattested_entries: u64,
    /// Wall-clock verification cost in microseconds.
    pub vc_micros: u64,
}

impl VerificationReport {
    pub fn is_ok(&self) -> bool {
        self.status == VerifyStatus::Ok
    }
}

/// What a ladder level obliges the store to maintain. Each level's obligation
/// set contains the previous level's.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Obligation {
    MonotoneContiguousSeq,
    HashChained,
    PerEntrySignatures,
}

pub fn obligations_of(level: u8) -> BTreeSet<Obligation> {
    let mut set = BTreeSet::new();
    if level >= 1 {
        set.insert(Obligation::MonotoneContiguousSeq);
    }
    if level >= 2 {
        set.insert(Obligation::HashChained);
    }
    if level >= 3 {
        set.insert(Obligation::PerEntrySignatures);
    }
    set
}

/// Append-only evidence log with level-specific sealing.
#[derive(Debug, Clone)]
pub struct EvidenceLog {
    descriptor: IntegrityDescriptor,
    /// Seq of the first chain-protected entry; None until sealed at >= 2.
    sealed_from: Option<u64>,
    rows: Vec<SealedEntry>,
    closed: bool,
    signer: Option<SigningKey>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LogHeader {
    integrity: IntegrityDescriptor,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sealed_from: Option<u64>,
}

impl EvidenceLog {
    pub fn new(level: u8) -> Result<Self, EvidenceError> {
        let descriptor = match level {
            0 => IntegrityDescriptor::level0(),
            1 => IntegrityDescriptor::level1(),
            2 => IntegrityDescriptor::level2(),
            3 => return Err(EvidenceError::MissingSigningKey),
            other => return Err(EvidenceError::BadLevel(other)),
        };
        Ok(EvidenceLog {
            sealed_from: if level >= 2 { Some(1) } else { None },
            descriptor,
            rows: Vec::new(),
            closed: false,
            signer: None,
        })
    }

    pub fn new_signed(signing_key: SigningKey) -> Self {
        let descriptor = IntegrityDescriptor::level3(signing_key.verifying_key().to_bytes());
        EvidenceLog {
            descriptor,
            sealed_from: Some(1),
            rows: Vec::new(),
            closed: false,
            signer: Some(signing_key),
        }
    }

    pub fn descriptor(&self) -> &IntegrityDescriptor {
        &self.descriptor
    }

    pub fn sealed_from(&self) -> Option<u64> {
        self.sealed_from
    }

    pub fn entries(&self) -> &[SealedEntry] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn close(&mut self) {
        self.closed = true;
    }

    /// Attach the signing key needed to append to a loaded Level-3 log. The
    /// key must match the published public key.
    pub fn attach_signer(&mut self, signing_key: SigningKey) -> Result<(), EvidenceError> {
        if self.descriptor.public_key != Some(signing_key.verifying_key().to_bytes()) {
            return Err(EvidenceError::Key("signing key does not match the published public key".into()));
        }
        self.signer = Some(signing_key);
        Ok(())
    }

    /// Append one record entry, sealing it per the log's current level.
    pub fn append(&mut self, entry: &RecordEntry) -> Result<&SealedEntry, EvidenceError> {
        if self.closed {
            return Err(EvidenceError::Closed);
        }
        let payload = canonical::to_canonical_bytes(entry)?;
        let seq = self.rows.len() as u64 + 1;
        let row = if self.descriptor.level >= 2 {
            let sealed_from = self.sealed_from.expect("level >= 2 logs have a sealing point");
            let prev_digest = if seq == sealed_from {
                ZERO_DIGEST
            } else {
                self.rows.last().expect("chained rows follow a predecessor").digest
            };
            let digest = chain_digest(&prev_digest, &payload);
            let signature = if self.descriptor.level == 3 {
                let signer = self.signer.as_ref().ok_or(EvidenceError::MissingSigningKey)?;
                Some(signer.sign(&digest).to_bytes())
            } else {
                None
            };
            SealedEntry { seq, prev_digest, payload, digest, signature }
        } else {
            SealedEntry { seq, prev_digest: ZERO_DIGEST, payload, digest: ZERO_DIGEST, signature: None }
        };
        self.rows.push(row);
        Ok(self.rows.last().expect("row was just pushed"))
    }

    /// Raise the log's integrity level. Chain protection starts at the next
    /// appended entry; existing entries stay unattested.
    pub fn seal(&mut self, level: u8, signing_key: Option<SigningKey>) -> Result<(), EvidenceError> {
        if level > 3 {
            return Err(EvidenceError::BadLevel(level));
        }
        if level < self.descriptor.level {
            return Err(EvidenceError::DowngradeRejected { from: self.descriptor.level, to: level });
        }
        if level >= 2 {
            self.descriptor.hash_algorithm = Some(HASH_ALGORITHM.to_string());
            if self.sealed_from.is_none() {
                self.sealed_from = Some(self.rows.len() as u64 + 1);
            }
        }
        if level == 3 {
            let key = signing_key.ok_or(EvidenceError::MissingSigningKey)?;
            self.descriptor.signature_scheme = Some(SIGNATURE_SCHEME.to_string());
            self.descriptor.public_key = Some(key.verifying_key().to_bytes());
            self.signer = Some(key);
        }
        self.descriptor.level = level;
        Ok(())
    }

    /// Recompute the full chain (and signatures at Level 3). Tampering is a
    /// report outcome, not an error.
    pub fn verify(&self) -> VerificationReport {
        let start = Instant::now();
        let elapsed = |start: Instant| start.elapsed().as_micros() as u64;

        let sealed_from = match (self.descriptor.level >= 2, self.sealed_from) {
            (true, Some(s)) => s,
            _ => {
                return VerificationReport {
                    status: VerifyStatus::Unverifiable,
                    first_bad_seq: None,
                    checked_entries: 0,
                    unattested_entries: self.rows.len() as u64,
                    vc_micros: elapsed(start),
                }
            }
        };

        let verifying_key = self.descriptor.public_key.and_then(|pk| VerifyingKey::from_bytes(&pk).ok());
        let mut running = ZERO_DIGEST;
        let mut expected_seq = 1u64;
        let mut checked = 0u64;
        let mut unattested = 0u64;
        for row in &self.rows {
            if row.seq != expected_seq {
                return VerificationReport {
                    status: VerifyStatus::Tampered,
                    first_bad_seq: Some(expected_seq),
                    checked_entries: checked,
                    unattested_entries: unattested,
                    vc_micros: elapsed(start),
                };
            }
            expected_seq += 1;
            if row.seq < sealed_from {
                unattested += 1;
                continue;
            }
            checked += 1;
            let mut row_ok = row.prev_digest == running;
            let recomputed = chain_digest(&row.prev_digest, &row.payload);
            row_ok = row_ok && recomputed == row.digest;
            if self.descriptor.level == 3 {
                row_ok = row_ok
                    && match (&verifying_key, &row.signature) {
                        (Some(vk), Some(sig)) => {
                            vk.verify(&row.digest, &Signature::from_bytes(sig)).is_ok()
                        }
                        _ => false,
                    };
            }
            if !row_ok {
                return VerificationReport {
                    status: VerifyStatus::Tampered,
                    first_bad_seq: Some(row.seq),
                    checked_entries: checked,
                    unattested_entries: unattested,
                    vc_micros: elapsed(start),
                };
            }
            running = row.digest;
        }
        VerificationReport {
            status: VerifyStatus::Ok,
            first_bad_seq: None,
            checked_entries: checked,
            unattested_entries: unattested,
            vc_micros: elapsed(start),
        }
    }

    /// The declared level, downgraded to the highest level whose structural
    /// obligations are actually met.
    pub fn integrity_level(&self) -> u8 {
        let mut level = 0u8;
        for candidate in 1..=self.descriptor.level {
            let met = obligations_of(candidate).iter().all(|ob| self.obligation_met(*ob));
            if met {
                level = candidate;
            } else {
                break;
            }
        }
        level
    }

    fn obligation_met(&self, ob: Obligation) -> bool {
        match ob {
            Obligation::MonotoneContiguousSeq => {
                self.rows.iter().enumerate().all(|(i, r)| r.seq == i as u64 + 1)
            }
            Obligation::HashChained => {
                self.descriptor.hash_algorithm.as_deref() == Some(HASH_ALGORITHM)
                    && self.sealed_from.is_some()
            }
            Obligation::PerEntrySignatures => {
                self.descriptor.signature_scheme.as_deref() == Some(SIGNATURE_SCHEME)
                    && self.descriptor.public_key.is_some()
                    && self
                        .rows
                        .iter()
                        .filter(|r| Some(r.seq) >= self.sealed_from)
                        .all(|r| r.signature.is_some())
            }
        }
    }

    /// Mutate one byte in place, bypassing every append-path check. Test
    /// instrument for the tamper-detection claims; not part of the write API.
    pub fn tamper(&self, seq: u64, mutation: &ByteMutation) -> Result<EvidenceLog, EvidenceError> {
        let mut out = self.clone();
        let idx = out
            .rows
            .iter()
            .position(|r| r.seq == seq)
            .ok_or(EvidenceError::UnknownSeq(seq))?;
        let row = &mut out.rows[idx];
        let bytes: &mut [u8] = match mutation.target {
            TamperTarget::Payload => &mut row.payload,
            TamperTarget::PrevDigest => &mut row.prev_digest,
            TamperTarget::Digest => &mut row.digest,
            TamperTarget::Signature => match row.signature.as_mut() {
                Some(sig) => sig,
                None => return Err(EvidenceError::NoSignature(seq)),
            },
        };
        let byte = bytes.get_mut(mutation.offset).ok_or(EvidenceError::OffsetOutOfRange {
            seq,
            target: mutation.target.as_str().to_string(),
            offset: mutation.offset,
        })?;
        *byte ^= mutation.xor;
        Ok(out)
    }

    /// Reconstruct the audit record carried by this log.
    pub fn to_audit_record(&self) -> Result<AuditRecord, EvidenceError> {
        let mut entries = Vec::with_capacity(self.rows.len());
        for row in &self.rows {
            let entry: RecordEntry = serde_json::from_slice(&row.payload).map_err(|e| {
                EvidenceError::Malformed(format!("entry {} payload is not a record entry: {e}", row.seq))
            })?;
            entries.push(entry);
        }
        Ok(AuditRecord { entries, integrity: self.descriptor.clone() })
    }

    /// Serialize to the log file form: a header line followed by one line per
    /// sealed entry.
    pub fn to_log_string(&self) -> Result<String, EvidenceError> {
        let header = LogHeader { integrity: self.descriptor.clone(), sealed_from: self.sealed_from };
        let mut out = canonical::to_canonical_string(&header)?;
        out.push('\n');
        for row in &self.rows {
            out.push_str(&canonical::to_canonical_string(row)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_log_str(text: &str) -> Result<Self, EvidenceError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header_line = lines.next().ok_or_else(|| EvidenceError::Malformed("empty log".into()))?;
        let header: LogHeader = serde_json::from_str(header_line)
            .map_err(|e| EvidenceError::Malformed(format!("bad header: {e}")))?;
        header.integrity.validate()?;
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let row: SealedEntry = serde_json::from_str(line)
                .map_err(|e| EvidenceError::Malformed(format!("bad entry on line {}: {e}", i + 2)))?;
            rows.push(row);
        }
        Ok(EvidenceLog {
            descriptor: header.integrity,
            sealed_from: header.sealed_from,
            rows,
            closed: false,
            signer: None,
        })
    }

    pub fn write_to(&self, path: &Path) -> Result<(), EvidenceError> {
        std::fs::write(path, self.to_log_string()?)?;
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<Self, EvidenceError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_log_str(&text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TamperTarget {
    Payload,
    PrevDigest,
    Digest,
    Signature,
}

impl TamperTarget {
    pub fn as_str(&self) -> &'static str {
        match self {
            TamperTarget::Payload => "payload",
            TamperTarget::PrevDigest => "prev_digest",
            TamperTarget::Digest => "digest",
            TamperTarget::Signature => "signature",
        }
    }
}

/// A single-byte edit: `byte[offset] ^= xor`. An xor of 0 writes the byte
/// back unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ByteMutation {
    pub target: TamperTarget,
    pub offset: usize,
    pub xor: u8,
}

/// Load an Ed25519 signing key from its hex-encoded 32-byte seed file.
pub fn read_signing_key(path: &Path) -> Result<SigningKey, EvidenceError> {
    let text = std::fs::read_to_string(path)?;
    signing_key_from_hex(text.trim())
}

pub fn signing_key_from_hex(hex_seed: &str) -> Result<SigningKey, EvidenceError> {
    let raw = hex::decode(hex_seed).map_err(|e| EvidenceError::Key(format!("bad hex seed: {e}")))?;
    let seed: [u8; 32] = raw
        .as_slice()
        .try_into()
        .map_err(|_| EvidenceError::Key(format!("seed must be 32 bytes, got {}", raw.len())))?;
    Ok(SigningKey::from_bytes(&seed))
}
