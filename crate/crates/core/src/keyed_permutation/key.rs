use std::fmt;
use std::path::Path;

use rand::RngCore;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// First line of every key file.
pub const KEY_FILE_HEADER: &str = "shuffleguard-key-v1";

pub const SEED_LEN: usize = 32;

/// 32 bytes of seed material. Every permutation the defense uses is derived
/// from it, so two keys with equal seeds are interchangeable.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SecretKey {
    seed: [u8; SEED_LEN],
    label: Option<String>,
}

impl SecretKey {
    pub fn from_seed(seed: [u8; SEED_LEN]) -> Self {
        Self { seed, label: None }
    }

    /// Draws a fresh key from the thread-local CSPRNG (OS-seeded).
    pub fn generate() -> Self {
        Self::from_rng(&mut rand::rng())
    }

    /// Draws a key from a caller-supplied generator (used for reproducible
    /// "random guessed key" experiments).
    pub fn from_rng<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut seed = [0u8; SEED_LEN];
        rng.fill_bytes(&mut seed);
        Self::from_seed(seed)
    }

    pub fn from_hex(text: &str) -> Result<Self> {
        let text = text.trim();
        if text.len() != 2 * SEED_LEN {
            return Err(Error::KeyFile(format!(
                "expected {} hex characters, got {}",
                2 * SEED_LEN,
                text.len()
            )));
        }
        let mut seed = [0u8; SEED_LEN];
        hex::decode_to_slice(text, &mut seed).map_err(|e| Error::KeyFile(format!("bad hex seed: {e}")))?;
        Ok(Self::from_seed(seed))
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn seed(&self) -> &[u8; SEED_LEN] {
        &self.seed
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.seed)
    }

    /// Short public identifier of the key (first 8 bytes of SHA-256 of the
    /// seed). Safe to store in checkpoints and reports.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.seed);
        hex::encode(&digest[..8])
    }

    /// Serializes to the key file format: header line, hex seed line, and an
    /// optional `label=` line.
    pub fn to_file_string(&self) -> String {
        let mut out = format!("{KEY_FILE_HEADER}\n{}\n", self.to_hex());
        if let Some(label) = &self.label {
            out.push_str("label=");
            out.push_str(label);
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim_end() == KEY_FILE_HEADER => {}
            Some(h) => {
                return Err(Error::KeyFile(format!(
                    "unsupported key file header {h:?}, expected {KEY_FILE_HEADER:?}"
                )))
            }
            None => return Err(Error::KeyFile("empty key file".into())),
        }
        let seed_line = lines.next().ok_or_else(|| Error::KeyFile("missing seed line".into()))?;
        let mut key = Self::from_hex(seed_line)?;
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            match line.strip_prefix("label=") {
                Some(label) => key.label = Some(label.to_string()),
                None => return Err(Error::KeyFile(format!("unexpected line {line:?}"))),
            }
        }
        Ok(key)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::KeyFile(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_file_string())?;
        Ok(())
    }
}

// Never print the seed itself.
impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SecretKey")
            .field("fingerprint", &self.fingerprint())
            .field("label", &self.label)
            .finish()
    }
}
