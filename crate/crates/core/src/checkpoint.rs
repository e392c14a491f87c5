//! Binary checkpoint format.
//!
//! ```text
//! magic    4 bytes  "RSC1"
//! version  u32 LE
//! records  until end of file:
//!   name_len u32 LE, name (UTF-8),
//!   rank     u32 LE, dims (u64 LE each, positive),
//!   values   f64 LE, product(dims) of them
//! ```
//!
//! A model checkpoint holds `meta.shape` (the nine shape fields),
//! `meta.vocab` (the vocabulary fingerprint split into two 32-bit halves),
//! then every parameter as `<group>.<name>`.

use std::fs;
use std::io::Write;
use std::path::Path;

use autodiff::{ParamSet, Tensor};

use crate::error::{Error, Result};
use crate::model::{ShapeConfig, Transceiver, TransceiverParams};

pub const MAGIC: &[u8; 4] = b"RSC1";
pub const VERSION: u32 = 1;

const MAX_NAME: usize = 1 << 12;
const MAX_RANK: usize = 8;
const SHAPE_RECORD: &str = "meta.shape";
const VOCAB_RECORD: &str = "meta.vocab";

pub fn encode_records<'a>(records: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for (name, t) in records {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format(format!("truncated {what} at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

/// Parses a checkpoint into `(name, tensor)` records in file order.
pub fn decode_records(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let mut records = Vec::new();
    while r.remaining() > 0 {
        let name_len = r.u32("name length")? as usize;
        if name_len > MAX_NAME {
            return Err(Error::Format(format!("name length {name_len}")));
        }
        let name = std::str::from_utf8(r.take(name_len, "name")?)
            .map_err(|_| Error::Format("record name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32("rank")? as usize;
        if rank > MAX_RANK {
            return Err(Error::Format(format!("{name}: rank {rank}")));
        }
        let mut dims = Vec::with_capacity(rank);
        let mut numel: usize = 1;
        for _ in 0..rank {
            let d = r.u64("dimension")?;
            if d == 0 {
                return Err(Error::Format(format!("{name}: zero dimension")));
            }
            let d = usize::try_from(d).map_err(|_| Error::Format(format!("{name}: dimension {d}")))?;
            numel = numel
                .checked_mul(d)
                .filter(|n| n.checked_mul(8).is_some_and(|b| b <= r.remaining()))
                .ok_or_else(|| Error::Format(format!("{name}: data runs past end of file")))?;
            dims.push(d);
        }
        let raw = r.take(numel * 8, "values")?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        records.push((name, Tensor::new(dims, data)?));
    }
    Ok(records)
}

/// A trained model plus the fingerprint of the vocabulary it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Transceiver,
    pub vocab_fingerprint: u64,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let shape = Tensor::new(
            vec![9],
            self.model.shape().to_values().iter().map(|&v| v as f64).collect(),
        )
        .expect("nine fields");
        let fp = self.vocab_fingerprint;
        let vocab = Tensor::new(vec![2], vec![(fp >> 32) as f64, (fp & 0xffff_ffff) as f64]).expect("two halves");
        let mut names = vec![SHAPE_RECORD.to_string(), VOCAB_RECORD.to_string()];
        let mut tensors = vec![&shape, &vocab];
        for (group, set) in TransceiverParams::GROUPS.iter().zip(self.model.params().groups()) {
            for (name, t) in set.iter() {
                names.push(format!("{group}.{name}"));
                tensors.push(t);
            }
        }
        encode_records(names.iter().map(String::as_str).zip(tensors))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let records = decode_records(bytes)?;
        let mut iter = records.into_iter();
        let shape = match iter.next() {
            Some((n, t)) if n == SHAPE_RECORD => {
                let vals = t
                    .data()
                    .iter()
                    .map(|&v| {
                        if v.fract() == 0.0 && (0.0..1e12).contains(&v) {
                            Ok(v as usize)
                        } else {
                            Err(Error::Format(format!("shape field {v}")))
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                ShapeConfig::from_values(&vals)?
            }
            _ => return Err(Error::Format(format!("first record must be {SHAPE_RECORD}"))),
        };
        let vocab_fingerprint = match iter.next() {
            Some((n, t)) if n == VOCAB_RECORD && t.len() == 2 => {
                let (hi, lo) = (t.data()[0], t.data()[1]);
                let ok = |v: f64| v.fract() == 0.0 && (0.0..4_294_967_296.0).contains(&v);
                if !ok(hi) || !ok(lo) {
                    return Err(Error::Format("bad vocabulary fingerprint".into()));
                }
                ((hi as u64) << 32) | lo as u64
            }
            _ => return Err(Error::Format(format!("second record must be {VOCAB_RECORD}"))),
        };
        let mut groups: [ParamSet; 4] = Default::default();
        for (name, t) in iter {
            let (group, rest) = name
                .split_once('.')
                .ok_or_else(|| Error::Format(format!("record {name} has no group")))?;
            let gi = TransceiverParams::GROUPS
                .iter()
                .position(|g| *g == group)
                .ok_or_else(|| Error::Format(format!("unknown group {group}")))?;
            if groups[gi].get(rest).is_some() {
                return Err(Error::Format(format!("duplicate record {name}")));
            }
            groups[gi].insert(rest, t);
        }
        let [semantic_encoder, channel_encoder, channel_decoder, semantic_decoder] = groups;
        let params = TransceiverParams {
            semantic_encoder,
            channel_encoder,
            channel_decoder,
            semantic_decoder,
        };
        Ok(Checkpoint {
            model: Transceiver::from_parts(shape, params)?,
            vocab_fingerprint,
        })
    }

    /// Writes via a temporary file and rename.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = file_name.to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| Error::io(path, e))
}
