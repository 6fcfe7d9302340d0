//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   8 bytes  "ADRMTL\0\x01"
//! header  u32 length + UTF-8 `key=value` lines
//! blocks  u32 count, then per block: u32 name length, name,
//!         u32 rows, u32 cols, rows*cols f64
//! vocab   u32 count, then per word: u32 length, UTF-8 bytes
//! ```
//!
//! Floats are stored as raw bits so a save/load cycle is bitwise exact.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::params::{init_params_with, ModelParams, NetConfig, Pooling};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"ADRMTL\0\x01";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    /// Free-form metadata (training hyperparameters, padded length...).
    pub meta: BTreeMap<String, String>,
    /// Id-ordered vocabulary used to featurize inputs, if any.
    pub vocab: Vec<String>,
}

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&u32::try_from(v).expect("checkpoint field fits u32").to_le_bytes());
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    put_u32(buf, s.len());
    buf.extend_from_slice(s.as_bytes());
}

impl Checkpoint {
    pub fn new(params: ModelParams) -> Self {
        Checkpoint {
            params,
            meta: BTreeMap::new(),
            vocab: Vec::new(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.params.config;
        let mut header = format!(
            "hidden={}\nlabels={}\ninput_dim={}\nlayers={}\nseed={}\npooling={}\n",
            c.hidden,
            c.labels,
            c.input_dim,
            c.layers,
            c.seed,
            c.pooling.as_str()
        );
        for (k, v) in &self.meta {
            header.push_str(&format!("meta.{k}={v}\n"));
        }
        let mut buf = MAGIC.to_vec();
        put_str(&mut buf, &header);
        let blocks = self.params.blocks();
        put_u32(&mut buf, blocks.len());
        for b in blocks {
            put_str(&mut buf, &b.name);
            put_u32(&mut buf, b.rows);
            put_u32(&mut buf, b.cols);
            for x in b.data {
                buf.extend_from_slice(&x.to_bits().to_le_bytes());
            }
        }
        put_u32(&mut buf, self.vocab.len());
        for w in &self.vocab {
            put_str(&mut buf, w);
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, path };
        if r.take(8)? != MAGIC {
            return Err(r.err("not a checkpoint (bad magic)"));
        }
        let header = r.string()?;
        let mut fields = BTreeMap::new();
        let mut meta = BTreeMap::new();
        for line in header.lines() {
            let (k, v) = line.split_once('=').ok_or_else(|| r.err("malformed header line"))?;
            match k.strip_prefix("meta.") {
                Some(m) => meta.insert(m.to_string(), v.to_string()),
                None => fields.insert(k.to_string(), v.to_string()),
            };
        }
        let num = |key: &str| -> Result<u64> {
            fields
                .get(key)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::format(path, 0, format!("missing or invalid header field {key}")))
        };
        let config = NetConfig {
            hidden: num("hidden")? as usize,
            labels: num("labels")? as usize,
            input_dim: num("input_dim")? as usize,
            layers: num("layers")? as usize,
            seed: num("seed")?,
            pooling: fields
                .get("pooling")
                .and_then(|p| Pooling::parse(p))
                .ok_or_else(|| r.err("missing or invalid pooling"))?,
        };
        if config.hidden == 0 || config.labels == 0 || config.input_dim == 0 || config.layers == 0 {
            return Err(r.err("zero dimension in header"));
        }
        let mut params = init_params_with(config);
        let count = r.u32()?;
        let expected = params.blocks().len();
        if count != expected {
            return Err(r.err(&format!("{count} blocks, expected {expected}")));
        }
        let shapes: Vec<(String, usize, usize)> = params
            .blocks()
            .into_iter()
            .map(|b| (b.name, b.rows, b.cols))
            .collect();
        for (block, (name, rows, cols)) in params.blocks_mut().into_iter().zip(shapes) {
            let got = r.string()?;
            let (gr, gc) = (r.u32()?, r.u32()?);
            if got != name || gr != rows || gc != cols {
                return Err(r.err(&format!(
                    "block {got} {gr}x{gc} does not match expected {name} {rows}x{cols}"
                )));
            }
            for x in block.data.iter_mut() {
                let raw = r.take(8)?;
                *x = f64::from_bits(u64::from_le_bytes(raw.try_into().expect("8 bytes")));
            }
        }
        let words = r.u32()?;
        let vocab = (0..words).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
        if r.pos != bytes.len() {
            return Err(r.err("trailing bytes"));
        }
        Ok(Checkpoint { params, meta, vocab })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn err(&self, msg: &str) -> Error {
        Error::format(self.path, 0, format!("byte {}: {msg}", self.pos))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(self.err("unexpected end of checkpoint"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let raw = self.take(4)?;
        Ok(u32::from_le_bytes(raw.try_into().expect("4 bytes")) as usize)
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()?;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| self.err("invalid UTF-8"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::params::init_params;

    #[test]
    fn round_trip_is_bitwise() {
        let mut params = init_params(3, 4, 5, 2, 9);
        params.config.pooling = Pooling::Masked;
        params.adr_head.bias[1] = f64::MIN_POSITIVE / 3.0;
        params.ade_head.bias[0] = -0.0;
        let mut ck = Checkpoint::new(params);
        ck.meta.insert("pad_len".into(), "12".into());
        ck.vocab = vec!["⟨PAD⟩".into(), "wörd".into()];
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes, Path::new("ck")).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.meta, ck.meta);
        assert_eq!(back.vocab, ck.vocab);
        assert_eq!(back.params.ade_head.bias[0].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn rejects_corrupt_input() {
        let ck = Checkpoint::new(init_params(2, 4, 2, 1, 0));
        let bytes = ck.to_bytes();
        let p = Path::new("ck");
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1], p).is_err());
        assert!(Checkpoint::from_bytes(b"nonsense", p).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra, p).is_err());
    }
}
