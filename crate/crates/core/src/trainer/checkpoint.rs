//! Versioned binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes   "KBTXCKPT"
//! version      u32
//! vocab        u32 count, then per token: u32 byte length + UTF-8 bytes
//! encoder      u32 dim, u32 token rows, u32 bigram buckets,
//!              (rows + buckets) * dim f64
//! cross head   u8 flag; if 1: u32 dim, dim f64 joint weights,
//!              dim f64 interaction weights, f64 bias
//! metadata     u32 byte length + JSON
//! ```
//!
//! Nothing may follow the metadata block.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoder::{Encoder, EncoderParams, Model, Vocab};
use crate::error::{Error, Result};
use crate::metric::CrossHead;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"KBTXCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Training provenance stored alongside the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub kind: String,
    pub config: serde_json::Value,
    pub epochs: usize,
    pub loss_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub head: Option<CrossHead>,
    pub meta: CheckpointMeta,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        let v = u32::try_from(v).expect("checkpoint field exceeds u32");
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u32(b.len());
        self.0.extend_from_slice(b);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::CheckpointTruncated(format!(
                "file ends inside {what} (offset {})",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }
    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = n
            .checked_mul(8)
            .ok_or_else(|| Error::CheckpointTruncated(format!("{what} size overflows")))?;
        let b = self.take(bytes, what)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
    fn bytes(&mut self, what: &str) -> Result<&'a [u8]> {
        let n = self.u32(what)?;
        self.take(n, what)
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(CHECKPOINT_MAGIC);
        w.0.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());

        let tokens = self.model.vocab.tokens();
        w.u32(tokens.len());
        for t in tokens {
            w.bytes(t.as_bytes());
        }

        let p = &self.model.params;
        w.u32(p.dim());
        w.u32(p.vocab_size());
        w.u32(p.bigram_buckets());
        w.f64s(p.table());

        match &self.head {
            None => w.u8(0),
            Some(h) => {
                w.u8(1);
                w.u32(h.joint.len());
                w.f64s(&h.joint);
                w.f64s(&h.interaction);
                w.f64s(&[h.bias]);
            }
        }

        let meta = serde_json::to_vec(&self.meta).expect("metadata serializes");
        w.bytes(&meta);
        w.0
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(8, "magic")? != CHECKPOINT_MAGIC {
            return Err(Error::CheckpointTruncated("bad magic bytes".into()));
        }
        let version = r.u32("version")? as u32;
        if version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointVersion {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }

        let n_tokens = r.u32("vocab count")?;
        let mut tokens = Vec::with_capacity(n_tokens.min(1 << 20));
        for _ in 0..n_tokens {
            let b = r.bytes("vocab token")?;
            let t = std::str::from_utf8(b)
                .map_err(|_| Error::CheckpointTruncated("vocab token is not UTF-8".into()))?;
            tokens.push(t.to_string());
        }
        let vocab = Vocab::from_tokens(tokens)
            .map_err(|e| Error::CheckpointTruncated(format!("vocab block: {e}")))?;

        let dim = r.u32("encoder dim")?;
        let rows = r.u32("encoder rows")?;
        let buckets = r.u32("bigram buckets")?;
        if rows != vocab.len() {
            return Err(Error::CheckpointShape(format!(
                "embedding table has {rows} token rows but vocab has {} tokens",
                vocab.len()
            )));
        }
        let count = (rows + buckets)
            .checked_mul(dim)
            .ok_or_else(|| Error::CheckpointShape("table size overflows".into()))?;
        let table = r.f64s(count, "embedding table")?;
        let params = EncoderParams::from_table(rows, dim, buckets, table)
            .map_err(|e| Error::CheckpointShape(e.to_string()))?;

        let head = match r.u8("head flag")? {
            0 => None,
            1 => {
                let hd = r.u32("head dim")?;
                if hd != dim {
                    return Err(Error::CheckpointShape(format!(
                        "cross head has dim {hd}, encoder has {dim}"
                    )));
                }
                let joint = r.f64s(hd, "head weights")?;
                let interaction = r.f64s(hd, "head weights")?;
                let bias = r.f64s(1, "head bias")?[0];
                Some(CrossHead {
                    joint,
                    interaction,
                    bias,
                })
            }
            f => {
                return Err(Error::CheckpointTruncated(format!("bad head flag {f}")));
            }
        };

        let meta_bytes = r.bytes("metadata")?;
        let meta: CheckpointMeta = serde_json::from_slice(meta_bytes)
            .map_err(|e| Error::CheckpointTruncated(format!("metadata: {e}")))?;
        if r.pos != buf.len() {
            return Err(Error::CheckpointTruncated(format!(
                "{} trailing bytes",
                buf.len() - r.pos
            )));
        }
        Ok(Checkpoint {
            model: Model::new(vocab, params)?,
            head,
            meta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf)
    }

    /// Hex SHA-256 of the serialized checkpoint.
    pub fn id(&self) -> String {
        Sha256::digest(self.to_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

pub fn save_checkpoint(c: &Checkpoint, path: &Path) -> Result<()> {
    c.save(path)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(head: bool) -> Checkpoint {
        let vocab = Vocab::build(["alpha beta gamma", "beta"], 1);
        let params = EncoderParams::init(vocab.len(), 4, 3, 5).unwrap();
        Checkpoint {
            model: Model::new(vocab, params).unwrap(),
            head: head.then(|| CrossHead {
                joint: vec![0.1, -0.2, 0.3, 0.0],
                interaction: vec![1.0; 4],
                bias: -0.25,
            }),
            meta: CheckpointMeta {
                kind: "test".into(),
                config: serde_json::json!({"dim": 4}),
                epochs: 2,
                loss_history: vec![1.5, 0.1 + 0.2],
            },
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for head in [false, true] {
            let c = sample(head);
            let bytes = c.to_bytes();
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            assert_eq!(back, c);
            let a: Vec<u64> = c.model.params.table().iter().map(|x| x.to_bits()).collect();
            let b: Vec<u64> = back
                .model
                .params
                .table()
                .iter()
                .map(|x| x.to_bits())
                .collect();
            assert_eq!(a, b);
            assert_eq!(back.to_bytes(), bytes);
        }
    }

    #[test]
    fn altered_version_byte() {
        let mut bytes = sample(false).to_bytes();
        bytes[8] = 9;
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(Error::CheckpointVersion { found: 9, .. })
        ));
    }

    #[test]
    fn mismatched_table_height() {
        let c = sample(false);
        let mut bytes = c.to_bytes();
        // the token-row count follows the vocab block and the dim field
        let vocab_len: usize = 4 + c
            .model
            .vocab
            .tokens()
            .iter()
            .map(|t| 4 + t.len())
            .sum::<usize>();
        let rows_at = 12 + vocab_len + 4;
        let rows = u32::from_le_bytes(bytes[rows_at..rows_at + 4].try_into().unwrap());
        bytes[rows_at..rows_at + 4].copy_from_slice(&(rows - 1).to_le_bytes());
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(Error::CheckpointShape(_))
        ));
    }

    #[test]
    fn truncated_and_trailing() {
        let bytes = sample(true).to_bytes();
        for cut in [0, 5, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(
                Checkpoint::from_bytes(&bytes[..cut]),
                Err(Error::CheckpointTruncated(_))
            ));
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(
            Checkpoint::from_bytes(&extra),
            Err(Error::CheckpointTruncated(_))
        ));
    }

    #[test]
    fn id_is_stable() {
        assert_eq!(sample(false).id(), sample(false).id());
        assert_ne!(sample(false).id(), sample(true).id());
        assert_eq!(sample(false).id().len(), 64);
    }
}
