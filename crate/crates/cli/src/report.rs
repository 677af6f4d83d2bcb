//! Output bookkeeping: content hashes and the MANIFEST file.

use std::path::Path;

use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// One `<sha256>  <file>` line per output, in the order given.
pub fn write_manifest(dir: &Path, entries: &[(String, String)]) -> std::io::Result<()> {
    let body: String = entries.iter().map(|(name, hash)| format!("{hash}  {name}\n")).collect();
    std::fs::write(dir.join("MANIFEST"), body)
}

/// Parses a MANIFEST back into `(file, hash)` pairs.
pub fn read_manifest(dir: &Path) -> std::io::Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(dir.join("MANIFEST"))?;
    Ok(text
        .lines()
        .filter_map(|l| l.split_once("  ").map(|(h, n)| (n.to_string(), h.to_string())))
        .collect())
}
