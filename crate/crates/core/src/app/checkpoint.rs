//! Versioned binary checkpoints.
//!
//! All integers and reals are little-endian.
//!
//! ```text
//! magic            4 bytes  "LFM1"
//! format_version   u32      currently 1
//! kind             u8       0 = lfm, 1 = distilled
//! d                u32
//! N                u32      number of blocks / residual maps
//! [lfm only]
//!   scheme         u8       0 = euler, 1 = rk4
//!   steps          u32
//! N × block record:
//!   n_hidden       u32
//!   widths         n_hidden × u32
//!   activation     u8       0 linear, 1 relu, 2 softplus, 3 elu, 4 tanh
//!   time_features  u8       0 none, 1 raw, 2 sinusoidal
//!   frequencies    u32      k for sinusoidal, else 0
//!   interpolant    u8       0 ot, 1 trig, 255 for distilled maps
//!   gamma          f64      0.0 for distilled maps
//!   param_count    u64
//!   params         param_count × f64
//! crc32            u32      CRC-32 (IEEE) of every preceding byte
//! ```

use std::path::Path;

use thiserror::Error;

use crate::error::{Error, Result};
use crate::flowmath::InterpolantKind;
use crate::lfm::{DistilledModel, LfmModel, SubFlow};
use crate::netcore::{Activation, MlpSpec, ParamVector, TimeFeatures, VelocityField};
use crate::odeint::{IntegratorConfig, Scheme};

pub const MAGIC: [u8; 4] = *b"LFM1";
pub const FORMAT_VERSION: u32 = 1;
const NO_INTERPOLANT: u8 = 255;

#[derive(Debug, Error, PartialEq)]
pub enum CheckpointError {
    #[error("checkpoint truncated: needed {needed} more bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("not a checkpoint: bad magic {found:?} (expected \"LFM1\")")]
    BadMagic { found: Vec<u8> },
    #[error("unsupported checkpoint format version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error("checkpoint CRC mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    CrcMismatch { stored: u32, computed: u32 },
    #[error("invalid checkpoint at offset {offset}: {reason}")]
    Invalid { offset: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Checkpoint {
    Lfm(LfmModel),
    Distilled(DistilledModel),
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
}

fn write_block(w: &mut Writer, field: &VelocityField, interpolant: u8, gamma: f64) {
    let spec = field.spec();
    w.u32(spec.hidden_widths.len() as u32);
    for &h in &spec.hidden_widths {
        w.u32(h as u32);
    }
    w.u8(spec.activation.id());
    w.u8(spec.time_features.id());
    w.u32(spec.time_features.frequencies());
    w.u8(interpolant);
    w.f64(gamma);
    w.u64(field.params().len() as u64);
    for &p in field.params().as_slice() {
        w.f64(p);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], CheckpointError> {
        let remaining = self.buf.len() - self.pos;
        if n > remaining {
            return Err(CheckpointError::Truncated {
                offset: self.pos,
                needed: n - remaining,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> std::result::Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> std::result::Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> std::result::Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> std::result::Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn invalid(&self, reason: impl Into<String>) -> CheckpointError {
        CheckpointError::Invalid {
            offset: self.pos,
            reason: reason.into(),
        }
    }
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

struct BlockRecord {
    field: VelocityField,
    interpolant: u8,
    gamma: f64,
}

fn read_block(r: &mut Reader<'_>, d: usize) -> std::result::Result<BlockRecord, CheckpointError> {
    let n_hidden = r.u32()? as usize;
    if n_hidden.saturating_mul(4) > r.remaining() {
        return Err(CheckpointError::Truncated {
            offset: r.pos,
            needed: n_hidden * 4 - r.remaining(),
        });
    }
    let mut widths = Vec::with_capacity(n_hidden);
    for _ in 0..n_hidden {
        widths.push(r.u32()? as usize);
    }
    let act_id = r.u8()?;
    let activation = Activation::from_id(act_id).ok_or_else(|| r.invalid(format!("unknown activation id {act_id}")))?;
    let tf_id = r.u8()?;
    let k = r.u32()?;
    let time_features =
        TimeFeatures::from_parts(tf_id, k).ok_or_else(|| r.invalid(format!("bad time features (id {tf_id}, k {k})")))?;
    let interpolant = r.u8()?;
    let gamma = r.f64()?;
    let spec = MlpSpec {
        input_dim: d,
        hidden_widths: widths,
        activation,
        time_features,
    };
    spec.validate().map_err(|e| r.invalid(e.to_string()))?;
    let expected = checked_param_count(&spec).ok_or_else(|| r.invalid("parameter count overflows"))?;
    let count = r.u64()?;
    if count != expected as u64 {
        return Err(r.invalid(format!("param count {count} does not match architecture ({expected})")));
    }
    if expected.saturating_mul(8) > r.remaining() {
        return Err(CheckpointError::Truncated {
            offset: r.pos,
            needed: expected * 8 - r.remaining(),
        });
    }
    let mut params = Vec::with_capacity(expected);
    for _ in 0..expected {
        params.push(r.f64()?);
    }
    let field = VelocityField::new(spec, ParamVector::from_vec(params)).map_err(|e| r.invalid(e.to_string()))?;
    Ok(BlockRecord {
        field,
        interpolant,
        gamma,
    })
}

fn checked_param_count(spec: &MlpSpec) -> Option<usize> {
    let mut total = 0usize;
    let mut fan_in = spec.input_dim.checked_add(spec.time_features.width())?;
    for &w in spec.hidden_widths.iter().chain(std::iter::once(&spec.input_dim)) {
        total = total.checked_add(fan_in.checked_mul(w)?.checked_add(w)?)?;
        fan_in = w;
    }
    Some(total)
}

fn parse_body(body: &[u8]) -> std::result::Result<Checkpoint, CheckpointError> {
    let mut r = Reader { buf: body, pos: 8 };
    let kind = r.u8()?;
    let d = r.u32()? as usize;
    let n = r.u32()? as usize;
    if d == 0 {
        return Err(r.invalid("dimension is zero"));
    }
    if n == 0 {
        return Err(r.invalid("no blocks"));
    }
    let ckpt = match kind {
        0 => {
            let scheme_id = r.u8()?;
            let scheme = Scheme::from_id(scheme_id).ok_or_else(|| r.invalid(format!("unknown scheme id {scheme_id}")))?;
            let steps = r.u32()? as usize;
            let integrator = IntegratorConfig::new(scheme, steps).map_err(|e| r.invalid(e.to_string()))?;
            let mut blocks = Vec::new();
            for _ in 0..n {
                let rec = read_block(&mut r, d)?;
                let interpolant = InterpolantKind::from_id(rec.interpolant)
                    .ok_or_else(|| r.invalid(format!("unknown interpolant id {}", rec.interpolant)))?;
                if rec.field.spec().time_features == TimeFeatures::None {
                    return Err(r.invalid("flow block without time input"));
                }
                blocks.push(SubFlow {
                    field: rec.field,
                    gamma: rec.gamma,
                    interpolant,
                });
            }
            Checkpoint::Lfm(LfmModel::new(blocks, integrator).map_err(|e| r.invalid(e.to_string()))?)
        }
        1 => {
            let mut maps = Vec::new();
            for _ in 0..n {
                let rec = read_block(&mut r, d)?;
                if rec.interpolant != NO_INTERPOLANT || rec.gamma.to_bits() != 0 {
                    return Err(r.invalid("distilled map carries flow-block metadata"));
                }
                maps.push(rec.field);
            }
            Checkpoint::Distilled(DistilledModel::new(maps).map_err(|e| r.invalid(e.to_string()))?)
        }
        other => return Err(r.invalid(format!("unknown checkpoint kind {other}"))),
    };
    if r.remaining() != 0 {
        return Err(r.invalid(format!("{} unexpected trailing bytes", r.remaining())));
    }
    Ok(ckpt)
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(&MAGIC);
        w.u32(FORMAT_VERSION);
        match self {
            Checkpoint::Lfm(m) => {
                w.u8(0);
                w.u32(m.dim() as u32);
                w.u32(m.n_blocks() as u32);
                w.u8(m.integrator.scheme.id());
                w.u32(m.integrator.steps as u32);
                for b in m.blocks() {
                    write_block(&mut w, &b.field, b.interpolant.id(), b.gamma);
                }
            }
            Checkpoint::Distilled(m) => {
                w.u8(1);
                w.u32(m.dim() as u32);
                w.u32(m.nfe() as u32);
                for f in m.maps() {
                    write_block(&mut w, f, NO_INTERPOLANT, 0.0);
                }
            }
        }
        let crc = crc32fast::hash(&w.0);
        w.u32(crc);
        w.0
    }

    pub fn decode(bytes: &[u8]) -> std::result::Result<Self, CheckpointError> {
        let head = &bytes[..bytes.len().min(4)];
        if head != &MAGIC[..head.len()] {
            return Err(CheckpointError::BadMagic { found: head.to_vec() });
        }
        if bytes.len() < 8 {
            return Err(CheckpointError::Truncated {
                offset: bytes.len(),
                needed: 8 - bytes.len(),
            });
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(CheckpointError::UnsupportedVersion {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        if bytes.len() < 12 {
            return Err(CheckpointError::Truncated {
                offset: bytes.len(),
                needed: 12 - bytes.len(),
            });
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        let computed = crc32fast::hash(body);
        let crc_ok = stored == computed;
        match parse_body(body) {
            Ok(c) if crc_ok => Ok(c),
            Err(e @ CheckpointError::Truncated { .. }) => Err(e),
            Err(e) if crc_ok => Err(e),
            _ => Err(CheckpointError::CrcMismatch { stored, computed }),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Checkpoint::decode(&bytes)?)
    }

    pub fn into_lfm(self) -> Result<LfmModel> {
        match self {
            Checkpoint::Lfm(m) => Ok(m),
            Checkpoint::Distilled(_) => Err(Error::invalid("model", "expected an LFM checkpoint, found a distilled one")),
        }
    }
}
