use std::collections::BTreeMap;
use std::fmt;

use sha2::{Digest, Sha256};

use super::{canonical_serialize, CanonicalNode, ExternalValue, StencilDefinition};

/// Version string of this toolchain; part of every fingerprint.
pub const TOOLCHAIN_VERSION: &str = concat!("stencil-forge ", env!("CARGO_PKG_VERSION"), " sha256");

/// Arithmetic configuration hashed into fingerprints.
const DTYPE_CONFIG: &str = "compute=f64;store=native";

/// SHA-256 content hash keying the build cache.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fingerprint {
    digest: [u8; 32],
}

impl Fingerprint {
    pub fn from_bytes(digest: [u8; 32]) -> Self {
        Fingerprint { digest }
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.digest
    }

    pub fn hex(&self) -> String {
        self.digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// First 8 hex digits, used in generated symbol names.
    pub fn short(&self) -> String {
        self.hex()[..8].to_string()
    }
}

impl fmt::Debug for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fingerprint({})", self.hex())
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.hex())
    }
}

/// Hashes the canonical definition together with the backend id, the
/// external bindings, the arithmetic configuration and `toolchain`.
pub fn fingerprint(
    def: &StencilDefinition,
    backend_id: &str,
    externals: &BTreeMap<String, ExternalValue>,
    toolchain: &str,
) -> Fingerprint {
    let mut hasher = Sha256::new();
    let mut section = |tag: &[u8], bytes: &[u8]| {
        hasher.update(tag);
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(bytes);
    };
    section(b"ir", &canonical_serialize(CanonicalNode::Definition(def)));
    section(b"backend", backend_id.as_bytes());
    let mut ext = Vec::new();
    for (k, v) in externals {
        ext.extend_from_slice(k.as_bytes());
        ext.push(0);
        match v {
            ExternalValue::Int(i) => {
                ext.push(b'i');
                ext.extend_from_slice(&i.to_le_bytes());
            }
            ExternalValue::Float(f) => {
                ext.push(b'f');
                ext.extend_from_slice(&f.to_bits().to_le_bytes());
            }
        }
    }
    section(b"externals", &ext);
    section(b"dtype", DTYPE_CONFIG.as_bytes());
    section(b"toolchain", toolchain.as_bytes());
    Fingerprint { digest: hasher.finalize().into() }
}
