//! Binary checkpoint format, all integers and floats little-endian:
//!
//! ```text
//! "LDBN"            magic
//! u32               format version
//! u32 x 4           num_rdbs, convs_per_rdb, growth, base_channels
//! u32               tensor count
//! per tensor:
//!   u32, bytes      name length, UTF-8 name
//!   u32, u32 x rank rank, dims (4 for weights, 1 for biases)
//!   f32 x numel     values
//! u8                1 if optimizer state follows, else 0
//! optimizer state:
//!   u64             step count
//!   f64 x 5         lr, beta1, beta2, epsilon, decay
//!   f32 x numel     first moments, tensor by tensor
//!   f32 x numel     second moments, tensor by tensor
//! u64               CRC-64/XZ of every preceding byte
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use crc::{Crc, CRC_64_XZ};

use super::{io_error, DataError};
use crate::model::{ArchConfig, ModelParams};
use crate::tensor::{Shape, Tensor};
use crate::training::{AdamConfig, AdamState};

pub const MAGIC: &[u8; 4] = b"LDBN";
pub const FORMAT_VERSION: u32 = 1;
const CRC: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub adam: Option<AdamState>,
}

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&u32::try_from(v).expect("value fits in u32").to_le_bytes());
}

fn put_values(buf: &mut Vec<u8>, t: &Tensor) {
    for &v in t.data() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

pub fn encode_checkpoint(params: &ModelParams, adam: Option<&AdamState>) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let a = params.arch();
    for v in [a.num_rdbs, a.convs_per_rdb, a.growth, a.base_channels] {
        put_u32(&mut buf, v);
    }
    put_u32(&mut buf, params.tensors().len());
    for (name, t) in params.tensor_names().iter().zip(params.tensors()) {
        put_u32(&mut buf, name.len());
        buf.extend_from_slice(name.as_bytes());
        let dims = t.shape().0;
        let dims: &[usize] = if name.ends_with(".bias") { &dims[..1] } else { &dims };
        put_u32(&mut buf, dims.len());
        for &d in dims {
            put_u32(&mut buf, d);
        }
        put_values(&mut buf, t);
    }
    match adam {
        None => buf.push(0),
        Some(s) => {
            buf.push(1);
            buf.extend_from_slice(&s.t.to_le_bytes());
            let c = s.config;
            for v in [c.lr, c.beta1, c.beta2, c.epsilon, c.decay] {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            s.m.iter().chain(&s.v).for_each(|t| put_values(&mut buf, t));
        }
    }
    let sum = CRC.checksum(&buf);
    buf.extend_from_slice(&sum.to_le_bytes());
    buf
}

/// Writes atomically: the bytes go to a sibling temporary file which is
/// then renamed over `path`.
pub fn save_checkpoint(path: &Path, params: &ModelParams, adam: Option<&AdamState>) -> Result<(), DataError> {
    let bytes = encode_checkpoint(params, adam);
    let mut tmp_name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io_error(path, e)
    })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DataError> {
        if self.bytes.len().saturating_sub(self.pos) < n {
            return Err(DataError::Truncated);
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, DataError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize, DataError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> Result<u64, DataError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, DataError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn values(&mut self, n: usize) -> Result<Vec<f64>, DataError> {
        let raw = self.take(n.checked_mul(4).ok_or(DataError::Truncated)?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }
}

fn malformed(msg: impl Into<String>) -> DataError {
    DataError::Malformed(msg.into())
}

fn parse(bytes: &[u8], expected: Option<&ArchConfig>) -> Result<Checkpoint, DataError> {
    let mut r = Reader { bytes, pos: 8 };
    let arch = ArchConfig {
        num_rdbs: r.u32()?,
        convs_per_rdb: r.u32()?,
        growth: r.u32()?,
        base_channels: r.u32()?,
    };
    let arch = match expected {
        Some(e) => *e,
        None => arch,
    };
    let mut params = ModelParams::zeros(arch)?;
    let count = r.u32()?;
    if count != params.tensors().len() {
        return Err(malformed(format!(
            "checkpoint holds {count} tensors, architecture needs {}",
            params.tensors().len()
        )));
    }
    for _ in 0..count {
        let len = r.u32()?;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| malformed("tensor name is not UTF-8"))?
            .to_string();
        let rank = r.u32()?;
        let shape = match rank {
            1 => Shape::new(r.u32()?, 1, 1, 1),
            4 => Shape::new(r.u32()?, r.u32()?, r.u32()?, r.u32()?),
            _ => return Err(malformed(format!("tensor {name} has rank {rank}"))),
        };
        let values = r.values(shape.numel())?;
        let t = Tensor::new(shape, values).map_err(|_| malformed(format!("tensor {name} holds non-finite values")))?;
        params.set_tensor(&name, t)?;
    }
    let adam = match r.u8()? {
        0 => None,
        1 => {
            let t = r.u64()?;
            let config = AdamConfig {
                lr: r.f64()?,
                beta1: r.f64()?,
                beta2: r.f64()?,
                epsilon: r.f64()?,
                decay: r.f64()?,
            };
            let mut state = AdamState::new(config, params.tensors());
            state.t = t;
            for t in state.m.iter_mut().chain(state.v.iter_mut()) {
                let n = t.numel();
                t.data_mut().copy_from_slice(&r.values(n)?);
            }
            Some(state)
        }
        flag => return Err(malformed(format!("bad optimizer flag {flag}"))),
    };
    if r.bytes.len() - r.pos != 8 {
        return Err(if r.bytes.len() - r.pos < 8 {
            DataError::Truncated
        } else {
            malformed("unexpected bytes before the checksum")
        });
    }
    Ok(Checkpoint { params, adam })
}

/// Walks the layout without allocating, to tell a short file from a
/// corrupted one.
fn scan(bytes: &[u8]) -> Result<(), DataError> {
    let mut r = Reader { bytes, pos: 24 };
    let count = r.u32()?;
    let mut total = 0usize;
    for _ in 0..count {
        let len = r.u32()?;
        r.take(len)?;
        let rank = r.u32()?;
        let mut numel = 1usize;
        for _ in 0..rank {
            numel = numel.checked_mul(r.u32()?).ok_or(DataError::Truncated)?;
        }
        r.take(numel.checked_mul(4).ok_or(DataError::Truncated)?)?;
        total = total.saturating_add(numel);
    }
    if r.u8()? == 1 {
        r.take(48)?;
        r.take(total.checked_mul(8).ok_or(DataError::Truncated)?)?;
    }
    r.take(8)?;
    Ok(())
}

/// Decodes a checkpoint. With `expected`, tensors are loaded into that
/// architecture and any shape disagreement names the tensor.
pub fn decode_checkpoint(bytes: &[u8], expected: Option<&ArchConfig>) -> Result<Checkpoint, DataError> {
    if bytes.len() < 8 {
        return Err(DataError::Truncated);
    }
    if &bytes[..4] != MAGIC {
        return Err(DataError::BadMagic);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(DataError::Version {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    if bytes.len() < 16 {
        return Err(DataError::Truncated);
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().unwrap());
    if CRC.checksum(body) != stored {
        return match scan(bytes) {
            Err(DataError::Truncated) => Err(DataError::Truncated),
            _ => Err(DataError::Checksum),
        };
    }
    parse(bytes, expected)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, DataError> {
    let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
    decode_checkpoint(&bytes, None)
}

/// Loads a checkpoint that must match `arch`.
pub fn load_checkpoint_as(path: &Path, arch: &ArchConfig) -> Result<Checkpoint, DataError> {
    let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
    decode_checkpoint(&bytes, Some(arch))
}
