//! Binary parameter container: `GCKP` magic, a little-endian `u32` format
//! version, a little-endian `u64` header length, a JSON header, then every
//! array as little-endian `f64` values. Header offsets are byte offsets into
//! the data section.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GradError, Scalar, Tensor};

const MAGIC: &[u8; 4] = b"GCKP";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntryHeader {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    dtype: String,
    entries: Vec<EntryHeader>,
    #[serde(default)]
    meta: serde_json::Value,
}

/// Decoded container contents.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<S> {
    pub entries: Vec<(String, Tensor<S>)>,
    pub meta: serde_json::Value,
}

impl<S: Scalar> Checkpoint<S> {
    pub fn new(entries: Vec<(String, Tensor<S>)>, meta: serde_json::Value) -> Self {
        Self { entries, meta }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<S>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut offset = 0u64;
        let entries = self
            .entries
            .iter()
            .map(|(name, t)| {
                let e = EntryHeader {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    offset,
                };
                offset += 8 * t.len() as u64;
                e
            })
            .collect();
        let header = Header {
            dtype: "f64".into(),
            entries,
            meta: self.meta.clone(),
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + header.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, t) in &self.entries {
            for v in t.values() {
                out.extend_from_slice(&v.as_f64().to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, GradError> {
        let bad = |msg: &str| GradError::Checkpoint(msg.to_string());
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(bad("not a parameter checkpoint"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(GradError::Checkpoint(format!(
                "unsupported format version {version}"
            )));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let data_start = 16usize
            .checked_add(hlen)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(&bytes[16..data_start])
            .map_err(|e| GradError::Checkpoint(format!("header: {e}")))?;
        if header.dtype != "f64" {
            return Err(GradError::Checkpoint(format!(
                "unsupported dtype {}",
                header.dtype
            )));
        }
        let data = &bytes[data_start..];
        let mut entries = Vec::with_capacity(header.entries.len());
        for e in header.entries {
            let n: usize = e.shape.iter().product();
            let start = e.offset as usize;
            let end = start + 8 * n;
            if end > data.len() {
                return Err(GradError::Checkpoint(format!(
                    "array {} runs past end of file",
                    e.name
                )));
            }
            let values = data[start..end]
                .chunks_exact(8)
                .map(|c| S::lit(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
                .collect();
            entries.push((e.name, Tensor::new(e.shape, values)?));
        }
        Ok(Self {
            entries,
            meta: header.meta,
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), GradError> {
        let io = |e: std::io::Error| GradError::Io {
            path: path.display().to_string(),
            source: e,
        };
        let mut f = std::fs::File::create(path).map_err(io)?;
        f.write_all(&self.to_bytes()).map_err(io)
    }

    pub fn read(path: &Path) -> Result<Self, GradError> {
        let io = |e: std::io::Error| GradError::Io {
            path: path.display().to_string(),
            source: e,
        };
        let mut buf = Vec::new();
        std::fs::File::open(path)
            .map_err(io)?
            .read_to_end(&mut buf)
            .map_err(io)?;
        Self::from_bytes(&buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn roundtrip_is_exact(values in proptest::collection::vec(-1e6f64..1e6, 1..40), cols in 1usize..5) {
            let rows = values.len() / cols;
            prop_assume!(rows > 0);
            let t = Tensor::matrix(rows, cols, values[..rows * cols].to_vec()).unwrap();
            let ck = Checkpoint::new(vec![("a".into(), t.clone()), ("b".into(), Tensor::scalar(-0.5))], serde_json::json!({"iteration": 7}));
            let back = Checkpoint::<f64>::from_bytes(&ck.to_bytes()).unwrap();
            prop_assert_eq!(back, ck);
        }
    }

    #[test]
    fn header_layout() {
        let ck = Checkpoint::new(
            vec![("w".into(), Tensor::<f64>::from_f64(1, 2, &[1.0, 2.0]))],
            serde_json::Value::Null,
        );
        let bytes = ck.to_bytes();
        assert_eq!(&bytes[..4], b"GCKP");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        assert_eq!(bytes.len(), 16 + hlen + 16);
        assert_eq!(&bytes[16 + hlen..16 + hlen + 8], &1.0f64.to_le_bytes());
    }

    #[test]
    fn rejects_garbage() {
        assert!(Checkpoint::<f64>::from_bytes(b"hello world, not a checkpoint").is_err());
    }
}
