//! Chunk cache: a fixed-layout little-endian binary file of standardized
//! sequences.
//!
//! ```text
//! magic "BENDRCCH" | version u32 | count u32
//! per entry:
//!   name_len u16 | dataset name (UTF-8)
//!   subject u32 | session u32 | label i32 (-1: none) | start_sample u64
//!   dataset_range f64 | rows u32 | cols u32 | rows·cols × f64
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::preprocess::{SequenceSource, StandardizedSequence};

pub const CACHE_MAGIC: &[u8; 8] = b"BENDRCCH";
pub const CACHE_VERSION: u32 = 1;

pub fn encode_cache(seqs: &[StandardizedSequence]) -> Vec<u8> {
    let payload: usize = seqs.iter().map(|s| s.data.len() * 8 + 64).sum();
    let mut out = Vec::with_capacity(16 + payload);
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    out.extend_from_slice(&(seqs.len() as u32).to_le_bytes());
    for s in seqs {
        let name = s.source.dataset.as_bytes();
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        out.extend_from_slice(&s.source.subject.to_le_bytes());
        out.extend_from_slice(&s.source.session.to_le_bytes());
        let label = s.source.label.map_or(-1, |l| l as i32);
        out.extend_from_slice(&label.to_le_bytes());
        out.extend_from_slice(&s.source.start_sample.to_le_bytes());
        out.extend_from_slice(&s.dataset_range.to_le_bytes());
        out.extend_from_slice(&(s.channels() as u32).to_le_bytes());
        out.extend_from_slice(&(s.len() as u32).to_le_bytes());
        for v in &s.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos + n;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> std::result::Result<[u8; N], String> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

pub fn decode_cache(bytes: &[u8]) -> std::result::Result<Vec<StandardizedSequence>, String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != CACHE_MAGIC {
        return Err("bad magic".into());
    }
    let version = u32::from_le_bytes(r.array()?);
    if version != CACHE_VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let count = u32::from_le_bytes(r.array()?) as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = u16::from_le_bytes(r.array()?) as usize;
        let dataset = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| "dataset name is not UTF-8".to_string())?;
        let subject = u32::from_le_bytes(r.array()?);
        let session = u32::from_le_bytes(r.array()?);
        let label = i32::from_le_bytes(r.array()?);
        let start_sample = u64::from_le_bytes(r.array()?);
        let dataset_range = f64::from_le_bytes(r.array()?);
        let rows = u32::from_le_bytes(r.array()?) as usize;
        let cols = u32::from_le_bytes(r.array()?) as usize;
        let raw = r.take(rows * cols * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
            .collect();
        out.push(StandardizedSequence::from_parts(
            data,
            rows,
            cols,
            SequenceSource {
                dataset,
                subject,
                session,
                label: (label >= 0).then_some(label as u32),
                start_sample,
            },
            dataset_range,
        ));
    }
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    Ok(out)
}

pub fn write_cache(path: impl AsRef<Path>, seqs: &[StandardizedSequence]) -> Result<()> {
    std::fs::write(path, encode_cache(seqs))?;
    Ok(())
}

pub fn read_cache(path: impl AsRef<Path>) -> Result<Vec<StandardizedSequence>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    decode_cache(&bytes).map_err(|msg| Error::Cache {
        path: path.to_path_buf(),
        msg,
    })
}
