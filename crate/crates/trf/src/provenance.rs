//! Reproducibility metadata attached to every output file.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const TOOL: &str = "trf";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    /// Hex SHA-256 of the canonical configuration text.
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(config_text: &str, seed: u64) -> Self {
        Self {
            tool: TOOL.to_string(),
            version: VERSION.to_string(),
            config_hash: sha256_hex(config_text.as_bytes()),
            seed,
        }
    }

    /// `# trf 0.1.0 config=<hash> seed=<seed>`
    pub fn comment_line(&self) -> String {
        format!(
            "# {} {} config={} seed={}",
            self.tool, self.version, self.config_hash, self.seed
        )
    }

    pub fn hash_bytes(&self) -> [u8; 32] {
        let mut out = [0u8; 32];
        for (i, b) in out.iter_mut().enumerate() {
            *b = u8::from_str_radix(&self.config_hash[2 * i..2 * i + 2], 16).unwrap_or(0);
        }
        out
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_digest() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn hash_bytes_round_trip() {
        let p = Provenance::new("x = 1", 3);
        let hex: String = p.hash_bytes().iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(hex, p.config_hash);
    }
}
