//! Binary weights container.
//!
//! Layout, all little-endian:
//!   8-byte magic "CORRFLOW", u32 format version, u32 tensor count, then per
//!   tensor: u32 name length, UTF-8 name bytes, u32 rank, u32 dims[rank],
//!   f32 payload of prod(dims) values.
//!
//! Convolutions store two tensors: `<name>.weight` with dims
//! [out, in, kh, kw] and `<name>.bias` with dims [out]. Strides and padding
//! are architecture, reconstructed from the run configuration at load time.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use crate::encoder::ModelWeights;
use crate::error::{Error, Result};

pub const WEIGHTS_MAGIC: &[u8; 8] = b"CORRFLOW";
pub const WEIGHTS_VERSION: u32 = 1;

/// One named tensor in the container.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightEntry {
    pub name: String,
    pub dims: Vec<u32>,
    pub data: Vec<f32>,
}

fn format_error(path: &Path, offset: usize, message: impl Into<String>) -> Error {
    Error::FileFormat {
        path: path.display().to_string(),
        format: "weights container",
        offset: offset as u64,
        message: message.into(),
    }
}

pub fn write_entries(path: impl AsRef<Path>, entries: &[WeightEntry]) -> Result<()> {
    let path = path.as_ref();
    let mut seen = BTreeSet::new();
    for entry in entries {
        if !seen.insert(entry.name.as_str()) {
            return Err(Error::WeightsShape {
                name: entry.name.clone(),
                message: "duplicate tensor name".into(),
            });
        }
        let expected: usize = entry.dims.iter().map(|&d| d as usize).product();
        if entry.data.len() != expected {
            return Err(Error::WeightsShape {
                name: entry.name.clone(),
                message: format!(
                    "dims {:?} need {} values, got {}",
                    entry.dims,
                    expected,
                    entry.data.len()
                ),
            });
        }
    }
    let mut bytes = Vec::new();
    bytes.extend_from_slice(WEIGHTS_MAGIC);
    bytes.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for entry in entries {
        bytes.extend_from_slice(&(entry.name.len() as u32).to_le_bytes());
        bytes.extend_from_slice(entry.name.as_bytes());
        bytes.extend_from_slice(&(entry.dims.len() as u32).to_le_bytes());
        for d in &entry.dims {
            bytes.extend_from_slice(&d.to_le_bytes());
        }
        for v in &entry.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_entries(path: impl AsRef<Path>) -> Result<Vec<WeightEntry>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    struct Reader<'a> {
        bytes: &'a [u8],
        pos: usize,
        path: &'a Path,
    }
    impl<'a> Reader<'a> {
        fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
            if self.pos + n > self.bytes.len() {
                return Err(format_error(
                    self.path,
                    self.pos,
                    format!("truncated while reading {what}"),
                ));
            }
            let slice = &self.bytes[self.pos..self.pos + n];
            self.pos += n;
            Ok(slice)
        }

        fn take_u32(&mut self, what: &str) -> Result<u32> {
            Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
        }
    }

    let mut reader = Reader {
        bytes: &bytes,
        pos: 0,
        path,
    };
    if reader.take(8, "magic")? != WEIGHTS_MAGIC {
        return Err(format_error(path, 0, "bad magic"));
    }
    let version = reader.take_u32("version")?;
    if version != WEIGHTS_VERSION {
        return Err(format_error(
            path,
            8,
            format!("unsupported version {version}"),
        ));
    }
    let count = reader.take_u32("count")?;
    let mut entries = Vec::with_capacity(count as usize);
    let mut names = BTreeSet::new();
    for _ in 0..count {
        let name_len = reader.take_u32("name length")? as usize;
        let name_offset = reader.pos;
        let name = std::str::from_utf8(reader.take(name_len, "name")?)
            .map_err(|_| format_error(path, name_offset, "name is not UTF-8"))?
            .to_string();
        if !names.insert(name.clone()) {
            return Err(format_error(
                path,
                name_offset,
                format!("duplicate tensor '{name}'"),
            ));
        }
        let rank = reader.take_u32("rank")? as usize;
        if rank > 8 {
            return Err(format_error(
                path,
                reader.pos,
                format!("implausible rank {rank}"),
            ));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(reader.take_u32("dims")?);
        }
        let len: usize = dims.iter().map(|&d| d as usize).product();
        let payload = reader.take(4 * len, "payload")?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        entries.push(WeightEntry { name, dims, data });
    }
    if reader.pos != bytes.len() {
        return Err(format_error(
            path,
            reader.pos,
            "trailing bytes after last tensor",
        ));
    }
    Ok(entries)
}

/// Serialize every model parameter.
pub fn model_to_entries(model: &ModelWeights) -> Vec<WeightEntry> {
    let mut entries = Vec::new();
    for (name, conv) in model.named_convs() {
        let (kh, kw) = conv.kernel();
        entries.push(WeightEntry {
            name: format!("{name}.weight"),
            dims: vec![
                conv.out_channels() as u32,
                conv.in_channels() as u32,
                kh as u32,
                kw as u32,
            ],
            data: conv.weights().to_vec(),
        });
        entries.push(WeightEntry {
            name: format!("{name}.bias"),
            dims: vec![conv.out_channels() as u32],
            data: conv.bias().to_vec(),
        });
    }
    entries
}

/// Overwrite `model`'s parameters from container entries. Every parameter
/// must be present with matching dims, and no entry may be left over.
pub fn apply_entries(model: &mut ModelWeights, entries: &[WeightEntry]) -> Result<()> {
    let mut used = vec![false; entries.len()];
    let find = |name: &str, used: &mut [bool]| -> Option<usize> {
        let idx = entries.iter().position(|e| e.name == name)?;
        used[idx] = true;
        Some(idx)
    };
    for (name, conv) in model.named_convs_mut() {
        let weight_name = format!("{name}.weight");
        let bias_name = format!("{name}.bias");
        let widx = find(&weight_name, &mut used).ok_or_else(|| Error::WeightsShape {
            name: weight_name.clone(),
            message: "missing from container".into(),
        })?;
        let bidx = find(&bias_name, &mut used).ok_or_else(|| Error::WeightsShape {
            name: bias_name.clone(),
            message: "missing from container".into(),
        })?;
        let (kh, kw) = conv.kernel();
        let want_dims = [
            conv.out_channels() as u32,
            conv.in_channels() as u32,
            kh as u32,
            kw as u32,
        ];
        if entries[widx].dims != want_dims {
            return Err(Error::WeightsShape {
                name: weight_name,
                message: format!(
                    "dims {:?} but model needs {:?}",
                    entries[widx].dims, want_dims
                ),
            });
        }
        if entries[bidx].dims != [conv.out_channels() as u32] {
            return Err(Error::WeightsShape {
                name: bias_name,
                message: format!(
                    "dims {:?} but model needs [{}]",
                    entries[bidx].dims,
                    conv.out_channels()
                ),
            });
        }
        conv.weights_mut().copy_from_slice(&entries[widx].data);
        conv.bias_mut().copy_from_slice(&entries[bidx].data);
    }
    if let Some(extra) = used.iter().position(|&u| !u) {
        return Err(Error::WeightsShape {
            name: entries[extra].name.clone(),
            message: "container entry does not match any model parameter".into(),
        });
    }
    Ok(())
}

/// Save a full model.
pub fn save_model(path: impl AsRef<Path>, model: &ModelWeights) -> Result<()> {
    write_entries(path, &model_to_entries(model))
}

/// Load parameters into a model skeleton built from the same configuration.
pub fn load_model_into(path: impl AsRef<Path>, model: &mut ModelWeights) -> Result<()> {
    let entries = read_entries(path)?;
    apply_entries(model, &entries)
}
