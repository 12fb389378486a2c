//! Binary cache for solved vertex data.
//!
//! Layout: 8-byte magic, `u32` format version, the 32-byte SHA-256 of the
//! key material, a `u64` entry count, then the entries as little-endian
//! `(re, im)` doubles. A file whose header does not match is a miss.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use wqed::C64;

pub const CACHE_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"WQEDVTX\0";
const HEADER: usize = 8 + 4 + 32 + 8;

#[derive(Debug, Clone)]
pub struct Cache {
    dir: Option<PathBuf>,
}

/// SHA-256 of the JSON-encoded key material, tagged with the entry kind
/// and the format version.
pub fn key<T: Serialize>(kind: &str, material: &T) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(kind.as_bytes());
    h.update(CACHE_VERSION.to_le_bytes());
    h.update(serde_json::to_vec(material).expect("key material serializes"));
    h.finalize().into()
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl Cache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: Some(dir.into()) }
    }

    pub fn disabled() -> Self {
        Self { dir: None }
    }

    pub fn path(&self, kind: &str, key: &[u8; 32]) -> Option<PathBuf> {
        self.dir
            .as_ref()
            .map(|d| d.join(format!("{kind}-{}.bin", hex(&key[..8]))))
    }

    pub fn load(&self, kind: &str, key: &[u8; 32]) -> Option<Vec<C64>> {
        let bytes = fs::read(self.path(kind, key)?).ok()?;
        decode(&bytes, key)
    }

    pub fn store(&self, kind: &str, key: &[u8; 32], data: &[C64]) -> io::Result<()> {
        let Some(path) = self.path(kind, key) else {
            return Ok(());
        };
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        // Write then rename so an interrupted run never leaves a torn file.
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, encode(key, data))?;
        fs::rename(tmp, path)
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }
}

pub fn encode(key: &[u8; 32], data: &[C64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + 16 * data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    out.extend_from_slice(key);
    out.extend_from_slice(&(data.len() as u64).to_le_bytes());
    for z in data {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8], key: &[u8; 32]) -> Option<Vec<C64>> {
    if bytes.len() < HEADER || &bytes[..8] != MAGIC {
        return None;
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().ok()?);
    if version != CACHE_VERSION || &bytes[12..44] != key {
        return None;
    }
    let count = u64::from_le_bytes(bytes[44..52].try_into().ok()?) as usize;
    let body = &bytes[HEADER..];
    if body.len() != 16 * count {
        return None;
    }
    let f = |c: &[u8]| f64::from_le_bytes(c.try_into().expect("8-byte chunk"));
    Some(
        body.chunks_exact(16)
            .map(|c| C64::new(f(&c[..8]), f(&c[8..])))
            .collect(),
    )
}
