//! Run manifests: plain-text key/value records with enough to reproduce a
//! run (config hash, seeds, dataset checksums, per-layer objectives, wall
//! time).

use std::fmt::Write as _;
use std::path::Path;

/// FNV-1a 64-bit hash, used for config and file fingerprints.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

pub fn file_hash(path: &Path) -> std::io::Result<u64> {
    Ok(fnv1a64(&std::fs::read(path)?))
}

#[derive(Debug, Default)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new() -> Self {
        Manifest::default()
    }

    pub fn push(&mut self, key: &str, value: impl std::fmt::Display) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            writeln!(out, "{k} = {v}").unwrap();
        }
        out
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.render())
    }
}
