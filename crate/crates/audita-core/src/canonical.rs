//! Canonical serialization: UTF-8 JSON with lexicographically sorted keys,
//! no insignificant whitespace, integers only (floats are rejected), and
//! byte fields rendered as lowercase hex by their owning types.
//!
//! Digests are computed over these bytes, so the encoding must be stable
//! across platforms and runs.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CanonicalError {
    #[error("value is not representable in JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("non-integer number at {path}: canonical documents carry integers only")]
    FloatRejected { path: String },
}

/// Serialize a value to its canonical JSON text.
pub fn to_canonical_string<T: Serialize>(value: &T) -> Result<String, CanonicalError> {
    let json = serde_json::to_value(value)?;
    reject_floats(&json, "$")?;
    // serde_json objects are BTreeMap-backed, so key order is already
    // lexicographic and `to_string` emits no insignificant whitespace.
    Ok(serde_json::to_string(&json)?)
}

/// Canonical JSON text as bytes, ready for hashing.
pub fn to_canonical_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, CanonicalError> {
    to_canonical_string(value).map(String::into_bytes)
}

fn reject_floats(value: &serde_json::Value, path: &str) -> Result<(), CanonicalError> {
    match value {
        serde_json::Value::Number(n) => {
            if n.as_i64().is_none() && n.as_u64().is_none() {
                return Err(CanonicalError::FloatRejected { path: path.to_string() });
            }
            Ok(())
        }
        serde_json::Value::Array(items) => {
            for (i, item) in items.iter().enumerate() {
                reject_floats(item, &format!("{path}[{i}]"))?;
            }
            Ok(())
        }
        serde_json::Value::Object(map) => {
            for (k, v) in map {
                reject_floats(v, &format!("{path}.{k}"))?;
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

/// Serde adapters for fixed-size byte fields encoded as lowercase hex.
pub mod hex_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer, const N: usize>(
        bytes: &[u8; N],
        ser: S,
    ) -> Result<S::Ok, S::Error> {
        ser.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>, const N: usize>(
        de: D,
    ) -> Result<[u8; N], D::Error> {
        let s = String::deserialize(de)?;
        let raw = hex::decode(&s).map_err(serde::de::Error::custom)?;
        raw.as_slice()
            .try_into()
            .map_err(|_| serde::de::Error::custom(format!("expected {N} bytes, got {}", raw.len())))
    }
}

/// Serde adapter for variable-length byte fields encoded as lowercase hex.
pub mod hex_serde_vec {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(de)?;
        hex::decode(&s).map_err(serde::de::Error::custom)
    }
}

/// Same as [`hex_serde`] but for optional byte fields.
pub mod hex_serde_opt {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer, const N: usize>(
        bytes: &Option<[u8; N]>,
        ser: S,
    ) -> Result<S::Ok, S::Error> {
        match bytes {
            Some(b) => ser.serialize_some(&hex::encode(b)),
            None => ser.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>, const N: usize>(
        de: D,
    ) -> Result<Option<[u8; N]>, D::Error> {
        let s: Option<String> = Option::deserialize(de)?;
        match s {
            None => Ok(None),
            Some(s) => {
                let raw = hex::decode(&s).map_err(serde::de::Error::custom)?;
                let arr = raw.as_slice().try_into().map_err(|_| {
                    serde::de::Error::custom(format!("expected {N} bytes, got {}", raw.len()))
                })?;
                Ok(Some(arr))
            }
        }
    }
}
