//! Named parameter storage with a language-neutral on-disk format.
//!
//! A `.params` file is a UTF-8 manifest followed by a raw float payload:
//!
//! ```text
//! <name> <dim0> <dim1> ... <offset>\n      (one line per tensor)
//! \n                                       (blank line ends the manifest)
//! <little-endian f32 payload>
//! ```
//!
//! Offsets are float indices into the payload, not bytes. Saving always
//! writes entries sorted by name with contiguous offsets, so
//! save -> load -> save is byte-identical. Loading honors arbitrary offsets.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

#[derive(Debug)]
pub enum StoreError {
    Io(std::io::Error),
    /// Structural problem in a `.params` file.
    Format {
        line: usize,
        msg: String,
    },
    /// Lookup failed or resolved to the wrong shape.
    Missing {
        name: String,
    },
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    /// Attempted to insert an entry that violates the format.
    BadEntry {
        name: String,
        msg: String,
    },
}

impl fmt::Display for StoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Io(e) => write!(f, "i/o error: {e}"),
            Self::Format { line, msg } => write!(f, "params file line {line}: {msg}"),
            Self::Missing { name } => write!(f, "missing tensor '{name}'"),
            Self::ShapeMismatch {
                name,
                expected,
                got,
            } => write!(
                f,
                "tensor '{name}' has shape {got:?}, expected {expected:?}"
            ),
            Self::BadEntry { name, msg } => write!(f, "cannot store '{name}': {msg}"),
        }
    }
}

impl std::error::Error for StoreError {}

impl From<std::io::Error> for StoreError {
    fn from(e: std::io::Error) -> Self {
        StoreError::Io(e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

/// In-memory map from tensor path to blob, sorted by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: BTreeMap<String, Entry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    pub fn insert(
        &mut self,
        name: &str,
        shape: Vec<usize>,
        data: Vec<f32>,
    ) -> Result<(), StoreError> {
        if name.is_empty() || name.chars().any(|c| c.is_whitespace()) {
            return Err(StoreError::BadEntry {
                name: name.to_string(),
                msg: "name must be non-empty and contain no whitespace".into(),
            });
        }
        if shape.is_empty() || shape.contains(&0) {
            return Err(StoreError::BadEntry {
                name: name.to_string(),
                msg: "shape dims must be positive".into(),
            });
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(StoreError::BadEntry {
                name: name.to_string(),
                msg: format!("shape {shape:?} needs {numel} values, got {}", data.len()),
            });
        }
        self.entries.insert(name.to_string(), Entry { shape, data });
        Ok(())
    }

    pub fn insert_scalar(&mut self, name: &str, value: f32) -> Result<(), StoreError> {
        self.insert(name, vec![1], vec![value])
    }

    /// Resolves `name` and checks it has exactly the expected shape.
    pub fn get(&self, name: &str, expected_shape: &[usize]) -> Result<&[f32], StoreError> {
        let entry = self.entries.get(name).ok_or_else(|| StoreError::Missing {
            name: name.to_string(),
        })?;
        if entry.shape != expected_shape {
            return Err(StoreError::ShapeMismatch {
                name: name.to_string(),
                expected: expected_shape.to_vec(),
                got: entry.shape.clone(),
            });
        }
        Ok(&entry.data)
    }

    pub fn get_entry(&self, name: &str) -> Result<&Entry, StoreError> {
        self.entries.get(name).ok_or_else(|| StoreError::Missing {
            name: name.to_string(),
        })
    }

    pub fn get_scalar(&self, name: &str) -> Result<f32, StoreError> {
        Ok(self.get(name, &[1])?[0])
    }

    /// The single entry of a one-tensor file.
    pub fn sole_entry(&self) -> Result<(&str, &Entry), StoreError> {
        let mut it = self.entries.iter();
        match (it.next(), it.next()) {
            (Some((name, entry)), None) => Ok((name.as_str(), entry)),
            _ => Err(StoreError::Format {
                line: 0,
                msg: format!("expected exactly one tensor, found {}", self.entries.len()),
            }),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut manifest = String::new();
        let mut payload: Vec<u8> = Vec::new();
        let mut offset = 0usize;
        for (name, entry) in &self.entries {
            manifest.push_str(name);
            for d in &entry.shape {
                manifest.push(' ');
                manifest.push_str(&d.to_string());
            }
            manifest.push(' ');
            manifest.push_str(&offset.to_string());
            manifest.push('\n');
            for v in &entry.data {
                payload.extend_from_slice(&v.to_le_bytes());
            }
            offset += entry.data.len();
        }
        manifest.push('\n');
        let mut bytes = manifest.into_bytes();
        bytes.extend_from_slice(&payload);
        bytes
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, StoreError> {
        // Manifest ends at the first blank line.
        let mut pos = 0usize;
        let mut line_no = 0usize;
        let mut headers: Vec<(String, Vec<usize>, usize, usize)> = Vec::new();
        loop {
            let rest = &bytes[pos..];
            let nl = rest
                .iter()
                .position(|&b| b == b'\n')
                .ok_or(StoreError::Format {
                    line: line_no + 1,
                    msg: "missing manifest terminator (blank line)".into(),
                })?;
            let line = &rest[..nl];
            pos += nl + 1;
            line_no += 1;
            if line.is_empty() {
                break;
            }
            let text = std::str::from_utf8(line).map_err(|_| StoreError::Format {
                line: line_no,
                msg: "manifest line is not valid UTF-8".into(),
            })?;
            let fields: Vec<&str> = text.split(' ').collect();
            if fields.len() < 3 {
                return Err(StoreError::Format {
                    line: line_no,
                    msg: "expected 'name dims... offset'".into(),
                });
            }
            let name = fields[0].to_string();
            let mut nums = Vec::with_capacity(fields.len() - 1);
            for f in &fields[1..] {
                let v: usize = f.parse().map_err(|_| StoreError::Format {
                    line: line_no,
                    msg: format!("'{f}' is not a non-negative integer"),
                })?;
                nums.push(v);
            }
            let offset = *nums.last().unwrap();
            let shape = nums[..nums.len() - 1].to_vec();
            if shape.is_empty() || shape.contains(&0) {
                return Err(StoreError::Format {
                    line: line_no,
                    msg: "shape dims must be positive".into(),
                });
            }
            headers.push((name, shape, offset, line_no));
        }
        let payload = &bytes[pos..];
        if !payload.len().is_multiple_of(4) {
            return Err(StoreError::Format {
                line: line_no,
                msg: format!("payload length {} is not a multiple of 4", payload.len()),
            });
        }
        let total_floats = payload.len() / 4;
        let mut store = ParamStore::new();
        for (name, shape, offset, hline) in headers {
            let numel: usize = shape.iter().product();
            if offset + numel > total_floats {
                return Err(StoreError::Format {
                    line: hline,
                    msg: format!(
                        "tensor '{name}' spans floats {offset}..{} but payload has {total_floats}",
                        offset + numel
                    ),
                });
            }
            let mut data = Vec::with_capacity(numel);
            for i in 0..numel {
                let base = (offset + i) * 4;
                data.push(f32::from_le_bytes([
                    payload[base],
                    payload[base + 1],
                    payload[base + 2],
                    payload[base + 3],
                ]));
            }
            if store.entries.contains_key(&name) {
                return Err(StoreError::Format {
                    line: hline,
                    msg: format!("duplicate tensor '{name}'"),
                });
            }
            store.insert(&name, shape, data)?;
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, StoreError> {
        let bytes = fs::read(path)?;
        Self::from_bytes(&bytes)
    }
}
