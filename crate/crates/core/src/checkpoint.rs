//! Flat parameter checkpoints.
//!
//! Layout: one ASCII header line terminated by `\n`, then the parameters as
//! consecutive little-endian `f64` values. The header is a space-separated
//! list whose first token names the model kind and second the format
//! version, followed by `key=value` pairs; it always ends with
//! `params=<count>`. Example:
//!
//! ```text
//! gda-boneage v1 input=64x64 channels=8,16,32 kernel=3 output_scale=240 params=5353
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub version: String,
    pub fields: BTreeMap<String, String>,
    pub values: Vec<f64>,
}

impl Checkpoint {
    pub fn field(&self, key: &str) -> Result<&str> {
        self.fields
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::validation(format!("checkpoint header lacks `{key}`")))
    }

    pub fn to_bytes(&self, ordered_fields: &[(&str, String)]) -> Vec<u8> {
        let mut header = format!("{} {}", self.kind, self.version);
        for (k, v) in ordered_fields {
            header.push_str(&format!(" {k}={v}"));
        }
        header.push_str(&format!(" params={}\n", self.values.len()));
        let mut out = header.into_bytes();
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::validation("checkpoint has no header line"))?;
        let header = std::str::from_utf8(&bytes[..nl])
            .map_err(|_| Error::validation("checkpoint header is not ASCII"))?;
        let mut toks = header.split_whitespace();
        let kind = toks.next().unwrap_or_default().to_string();
        let version = toks.next().unwrap_or_default().to_string();
        if version != VERSION {
            return Err(Error::validation(format!("unsupported checkpoint version `{version}`")));
        }
        let mut fields = BTreeMap::new();
        for t in toks {
            let (k, v) = t
                .split_once('=')
                .ok_or_else(|| Error::validation(format!("bad checkpoint header token `{t}`")))?;
            fields.insert(k.to_string(), v.to_string());
        }
        let count: usize = fields
            .get("params")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::validation("checkpoint header lacks params=<count>"))?;
        let body = &bytes[nl + 1..];
        if body.len() != count * 8 {
            return Err(Error::validation(format!(
                "checkpoint declares {count} values but carries {} bytes",
                body.len()
            )));
        }
        let values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok(Checkpoint {
            kind,
            version,
            fields,
            values,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

pub fn write_checkpoint(
    path: impl AsRef<Path>,
    kind: &str,
    fields: &[(&str, String)],
    values: Vec<f64>,
) -> Result<()> {
    let path = path.as_ref();
    let ckpt = Checkpoint {
        kind: kind.to_string(),
        version: VERSION.to_string(),
        fields: BTreeMap::new(),
        values,
    };
    std::fs::write(path, ckpt.to_bytes(fields)).map_err(|e| Error::io(path, e))
}
