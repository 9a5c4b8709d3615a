//! Compact binary occurrence format.
//!
//! All integers are little-endian.
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `TRFO`                            |
//! | 4      | 2    | format version (1)                      |
//! | 6      | 2    | reserved, zero                          |
//! | 8      | 4    | `p`, number of sites                    |
//! | 12     | 8    | `n`, number of time steps               |
//! | 20     | 4    | step length in minutes                  |
//! | 24     | 8    | origin, Unix seconds (signed)           |
//! | 32     | 8    | seed                                    |
//! | 40     | 32   | SHA-256 of the generating configuration |
//!
//! The header is followed by `p` site ids, each a `u16` byte length and
//! UTF-8 bytes, then `p` rows of `ceil(n / 8)` bytes. Step `t` of a row is
//! bit `t % 8` (least significant first) of byte `t / 8`; padding bits are
//! zero.

use anyhow::{bail, ensure, Result};
use trf_core::{OccurrenceField, SiteSeries, TimeGrid};

use crate::io::Occurrence;
use crate::provenance::Provenance;

pub const MAGIC: &[u8; 4] = b"TRFO";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 72;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    pub seed: u64,
    pub config_hash: [u8; 32],
}

pub fn encode(occ: &Occurrence, prov: &Provenance) -> Vec<u8> {
    let (p, n) = occ.field.occ.shape();
    let row_bytes = n.div_ceil(8);
    let mut out = Vec::with_capacity(HEADER_LEN + p * (row_bytes + 8));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&(p as u32).to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&occ.field.grid.step_minutes.to_le_bytes());
    out.extend_from_slice(&occ.field.grid.origin.to_le_bytes());
    out.extend_from_slice(&prov.seed.to_le_bytes());
    out.extend_from_slice(&prov.hash_bytes());
    for id in &occ.site_ids {
        let b = id.as_bytes();
        out.extend_from_slice(&(b.len() as u16).to_le_bytes());
        out.extend_from_slice(b);
    }
    for row in occ.field.occ.rows() {
        let mut bytes = vec![0u8; row_bytes];
        for (t, &w) in row.iter().enumerate() {
            if w {
                bytes[t / 8] |= 1 << (t % 8);
            }
        }
        out.extend_from_slice(&bytes);
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        ensure!(self.pos + k <= self.buf.len(), "truncated at byte {}", self.pos);
        let s = &self.buf[self.pos..self.pos + k];
        self.pos += k;
        Ok(s)
    }

    fn array<const K: usize>(&mut self) -> Result<[u8; K]> {
        Ok(self.take(K)?.try_into().expect("length checked"))
    }
}

pub fn decode(bytes: &[u8]) -> Result<(Occurrence, Header)> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        bail!("not a TRFO occurrence file");
    }
    let version = u16::from_le_bytes(c.array()?);
    if version != VERSION {
        bail!("unsupported TRFO version {version}");
    }
    c.take(2)?;
    let p = u32::from_le_bytes(c.array()?) as usize;
    let n = usize::try_from(u64::from_le_bytes(c.array()?))?;
    let step = u32::from_le_bytes(c.array()?);
    let origin = i64::from_le_bytes(c.array()?);
    let seed = u64::from_le_bytes(c.array()?);
    let config_hash: [u8; 32] = c.array()?;
    let mut ids = Vec::with_capacity(p);
    for _ in 0..p {
        let len = u16::from_le_bytes(c.array()?) as usize;
        ids.push(String::from_utf8(c.take(len)?.to_vec())?);
    }
    let row_bytes = n.div_ceil(8);
    let mut data = Vec::with_capacity(p * n);
    for _ in 0..p {
        let row = c.take(row_bytes)?;
        data.extend((0..n).map(|t| row[t / 8] >> (t % 8) & 1 == 1));
    }
    ensure!(c.pos == bytes.len(), "{} trailing bytes", bytes.len() - c.pos);
    Ok((
        Occurrence {
            site_ids: ids,
            field: OccurrenceField::new(SiteSeries::from_vec(p, n, data)?, TimeGrid::new(origin, step)),
        },
        Header { seed, config_hash },
    ))
}
