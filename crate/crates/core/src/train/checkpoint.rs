use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, MrenModel};
use crate::params::ParamStore;
use crate::tensor::{Precision, Scalar, Tensor4};

use super::{AdamState, TrainConfig};

const MAGIC: &[u8; 4] = b"MREN";
pub const CHECKPOINT_VERSION: u32 = 1;
const RANK: u8 = 4;

/// Model weights plus optional optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T: Scalar = f32> {
    pub model: MrenModel<T>,
    pub train: Option<TrainConfig>,
    /// Completed epochs.
    pub epoch: u64,
    pub adam: Option<AdamState<T>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    model: ModelConfig,
    train: Option<TrainConfig>,
    epoch: u64,
    adam_step: Option<u64>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn weights_only(model: MrenModel<T>) -> Self {
        Checkpoint { model, train: None, epoch: 0, adam: None }
    }

    /// Serialized bytes, including the trailing CRC-32 of everything before it.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            model: self.model.config.clone(),
            train: self.train.clone(),
            epoch: self.epoch,
            adam_step: self.adam.as_ref().map(|a| a.step),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Input(format!("config json: {e}")))?;
        let mut tensors: Vec<(String, &Tensor4<T>)> =
            self.model.params.iter().map(|(n, p)| (n.to_string(), &p.value)).collect();
        if let Some(adam) = &self.adam {
            let names: Vec<&str> = self.model.params.names().collect();
            for (moment, values) in [("m", &adam.m), ("v", &adam.v)] {
                for (name, t) in names.iter().zip(values) {
                    tensors.push((format!("adam.{moment}.{name}"), t));
                }
            }
        }

        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, t) in tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(T::PRECISION.dtype_code());
            out.push(RANK);
            for d in t.dims() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in t.data() {
                v.write_le(&mut out);
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..4] != MAGIC {
            return Err(Error::Incompatible("missing MREN magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::Incompatible(format!(
                "format version {version}, this build reads {CHECKPOINT_VERSION}"
            )));
        }
        if bytes.len() < 12 {
            return Err(Error::Integrity("file shorter than its header".into()));
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(trailer.try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored {
            return Err(Error::Integrity("checksum mismatch (truncated or modified file)".into()));
        }

        let mut r = Reader { bytes: body, pos: 8 };
        let json_len = r.u64()? as usize;
        let header: Header = serde_json::from_slice(r.take(json_len)?)
            .map_err(|e| Error::Incompatible(format!("config json: {e}")))?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Integrity("tensor name is not UTF-8".into()))?
                .to_string();
            let code = r.take(1)?[0];
            match Precision::from_dtype_code(code) {
                Some(p) if p == T::PRECISION => {}
                Some(p) => {
                    return Err(Error::Incompatible(format!(
                        "tensor {name} is stored as {p:?}, requested {:?}",
                        T::PRECISION
                    )))
                }
                None => return Err(Error::Incompatible(format!("unknown dtype code {code}"))),
            }
            let rank = r.take(1)?[0];
            if rank != RANK {
                return Err(Error::Incompatible(format!("tensor {name} has rank {rank}")));
            }
            let mut dims = [0usize; 4];
            for d in &mut dims {
                *d = r.u32()? as usize;
            }
            let n: usize = dims.iter().product();
            let width = T::PRECISION.byte_width();
            let payload = r.take(n.checked_mul(width).ok_or_else(|| Error::Integrity("tensor too large".into()))?)?;
            let data = payload.chunks_exact(width).map(T::read_le).collect();
            tensors.push((name, Tensor4::from_vec(dims, data)?));
        }
        if r.pos != body.len() {
            return Err(Error::Integrity(format!("{} trailing bytes", body.len() - r.pos)));
        }

        let mut params = ParamStore::new();
        let mut m = Vec::new();
        let mut v = Vec::new();
        for (name, t) in tensors {
            if name.starts_with("adam.m.") {
                m.push(t);
            } else if name.starts_with("adam.v.") {
                v.push(t);
            } else {
                params.insert(name, t)?;
            }
        }
        let model = MrenModel { config: header.model, params };
        model.check_params()?;
        let adam = match header.adam_step {
            Some(step) => {
                if m.len() != model.params.len() || v.len() != model.params.len() {
                    return Err(Error::Integrity("optimizer moments do not match parameters".into()));
                }
                Some(AdamState { step, m, v })
            }
            None => None,
        };
        Ok(Checkpoint { model, train: header.train, epoch: header.epoch, adam })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Integrity(format!("needs {n} bytes at offset {}, file ends first", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Writes to a sibling temporary file, then renames over `path`.
pub fn save_checkpoint<T: Scalar>(path: impl AsRef<Path>, ckpt: &Checkpoint<T>) -> Result<()> {
    let path = path.as_ref();
    let bytes = ckpt.to_bytes()?;
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let write = || -> std::io::Result<()> {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    };
    write().map_err(|e| Error::io(format!("cannot write checkpoint {}", path.display()), e))
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<Checkpoint<T>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)
        .map_err(|e| Error::io(format!("cannot read checkpoint {}", path.display()), e))?;
    Checkpoint::from_bytes(&bytes)
}
