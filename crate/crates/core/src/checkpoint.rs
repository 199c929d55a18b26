//! Model checkpoints: a little-endian binary file of named f64 sections.
//!
//! ```text
//! magic "BENDRCKP" | major u16 | minor u16 | patch u16 | step u64
//! config_len u32 | config (UTF-8 TOML) | SHA-256 of config (32 bytes)
//! section_count u32
//! per section:
//!   name_len u16 | name (UTF-8) | ndim u8 | dims u64 × ndim | values f64 × prod(dims)
//! ```
//!
//! Section names are `param/<name>` for parameters, `adam.m/<name>` and
//! `adam.v/<name>` for moment buffers, and `adam.meta` holding
//! `[beta1, beta2, eps, weight_decay, step]`.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::StateDict;
use crate::optim::{AdamConfig, AdamState};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"BENDRCKP";
pub const FORMAT_VERSION: (u16, u16, u16) = (1, 0, 0);

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub step: u64,
    /// Echo of the configuration that produced the checkpoint.
    pub config: String,
    pub params: StateDict,
    pub adam: Option<AdamState>,
}

pub fn config_hash(config: &str) -> [u8; 32] {
    Sha256::digest(config.as_bytes()).into()
}

fn put_section(out: &mut Vec<u8>, name: &str, shape: &[usize], data: &[f64]) {
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(shape.len() as u8);
    shape
        .iter()
        .for_each(|d| out.extend_from_slice(&(*d as u64).to_le_bytes()));
    data.iter()
        .for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        let (a, b, c) = FORMAT_VERSION;
        for v in [a, b, c] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&(self.config.len() as u32).to_le_bytes());
        out.extend_from_slice(self.config.as_bytes());
        out.extend_from_slice(&config_hash(&self.config));

        let mut sections = Vec::new();
        let mut count = 0u32;
        for (name, (shape, data)) in &self.params {
            put_section(&mut sections, &format!("param/{name}"), shape, data);
            count += 1;
        }
        if let Some(adam) = &self.adam {
            let c = adam.config;
            put_section(
                &mut sections,
                "adam.meta",
                &[5],
                &[c.beta1, c.beta2, c.eps, c.weight_decay, adam.step as f64],
            );
            count += 1;
            for (prefix, map) in [
                ("adam.m", &adam.first_moment),
                ("adam.v", &adam.second_moment),
            ] {
                for (name, data) in map {
                    put_section(
                        &mut sections,
                        &format!("{prefix}/{name}"),
                        &[data.len()],
                        data,
                    );
                    count += 1;
                }
            }
        }
        out.extend_from_slice(&count.to_le_bytes());
        out.extend_from_slice(&sections);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint(
                "not a checkpoint file (bad magic)".into(),
            ));
        }
        let major = r.u16()?;
        let _minor = r.u16()?;
        let _patch = r.u16()?;
        if major != FORMAT_VERSION.0 {
            return Err(Error::Checkpoint(format!(
                "format major version {major} is not supported (expected {})",
                FORMAT_VERSION.0
            )));
        }
        let step = r.u64()?;
        let config_len = r.u32()? as usize;
        let config = String::from_utf8(r.take(config_len)?.to_vec())
            .map_err(|_| Error::Checkpoint("config echo is not UTF-8".into()))?;
        if r.take(32)? != config_hash(&config) {
            return Err(Error::Checkpoint(
                "config echo does not match its stored hash".into(),
            ));
        }
        let count = r.u32()?;
        let mut ck = Checkpoint {
            step,
            config,
            ..Default::default()
        };
        let mut adam: Option<AdamState> = None;
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| Error::Checkpoint("section name is not UTF-8".into()))?;
            let ndim = r.take(1)?[0] as usize;
            let shape = (0..ndim)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let data: Vec<f64> = r
                .take(n * 8)?
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect();
            if let Some(p) = name.strip_prefix("param/") {
                ck.params.insert(p.to_string(), (shape, data));
            } else if name == "adam.meta" {
                if data.len() != 5 {
                    return Err(Error::Checkpoint("malformed adam.meta section".into()));
                }
                let st = adam.get_or_insert_with(Default::default);
                st.config = AdamConfig {
                    beta1: data[0],
                    beta2: data[1],
                    eps: data[2],
                    weight_decay: data[3],
                };
                st.step = data[4] as u64;
            } else if let Some(p) = name.strip_prefix("adam.m/") {
                adam.get_or_insert_with(Default::default)
                    .first_moment
                    .insert(p.to_string(), data);
            } else if let Some(p) = name.strip_prefix("adam.v/") {
                adam.get_or_insert_with(Default::default)
                    .second_moment
                    .insert(p.to_string(), data);
            } else {
                return Err(Error::Checkpoint(format!("unknown section {name}")));
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after last section",
                bytes.len() - r.pos
            )));
        }
        ck.adam = adam;
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.encode())?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .pos
            .checked_add(n)
            .and_then(|end| self.bytes.get(self.pos..end))
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(
            self.take(2)?.try_into().expect("2 bytes"),
        ))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut params = StateDict::new();
        params.insert(
            "a.weight".into(),
            (vec![2, 2], vec![1.0, -0.5, f64::MIN_POSITIVE, 3.25]),
        );
        params.insert("a.bias".into(), (vec![2], vec![0.1, 0.2]));
        let mut adam = AdamState::new(AdamConfig::default());
        adam.step = 7;
        adam.first_moment.insert("a.bias".into(), vec![0.01, 0.02]);
        adam.second_moment.insert("a.bias".into(), vec![1e-4, 2e-4]);
        Checkpoint {
            step: 7,
            config: "seed = 3\n".into(),
            params,
            adam: Some(adam),
        }
    }

    #[test]
    fn encode_decode_is_exact() {
        let ck = sample();
        let bytes = ck.encode();
        assert_eq!(&bytes[..8], CHECKPOINT_MAGIC);
        assert_eq!(Checkpoint::decode(&bytes).unwrap(), ck);
    }

    #[test]
    fn tampered_config_is_rejected() {
        let mut bytes = sample().encode();
        // First config byte sits after magic, version and step.
        bytes[8 + 6 + 8 + 4] = b'S';
        let err = Checkpoint::decode(&bytes).unwrap_err();
        assert!(err.to_string().contains("hash"));
    }

    #[test]
    fn truncation_and_magic() {
        let bytes = sample().encode();
        assert!(Checkpoint::decode(&bytes[..bytes.len() - 3]).is_err());
        assert!(Checkpoint::decode(b"NOTACKPT").is_err());
    }
}
