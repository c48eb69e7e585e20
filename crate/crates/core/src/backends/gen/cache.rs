//! On-disk build cache keyed by fingerprint.
//!
//! Layout: `<root>/<hex digest>/{source.c, lib.so, meta}`. Entries are
//! assembled in a private temporary directory and published with a single
//! `rename`, so concurrent builders of one key resolve to one winner.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};

use crate::backends::BackendError;
use crate::ir::Fingerprint;

static COMPILER_INVOCATIONS: AtomicU64 = AtomicU64::new(0);

/// Number of times this process has spawned the native compiler.
pub fn compiler_invocations() -> u64 {
    COMPILER_INVOCATIONS.load(Ordering::SeqCst)
}

pub const CC_FLAGS: &[&str] = &["-O3", "-march=native", "-fPIC", "-shared", "-ffp-contract=off"];

pub(crate) struct BuildCache {
    root: PathBuf,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl BuildCache {
    pub fn new(root: PathBuf) -> Self {
        BuildCache { root }
    }

    pub fn entry_dir(&self, fp: &Fingerprint) -> PathBuf {
        self.root.join(fp.hex())
    }

    /// Path of a verified shared object for `fp`, building it on a miss or
    /// when the existing entry fails verification. The flag is true on a hit.
    pub fn get_or_build(&self, fp: &Fingerprint, source: &str, cc: &str) -> Result<(PathBuf, bool), BackendError> {
        let dir = self.entry_dir(fp);
        if dir.exists() {
            match verify(&dir, fp, source) {
                Ok(lib) => return Ok((lib, true)),
                Err(_) => {
                    let _ = fs::remove_dir_all(&dir);
                }
            }
        }
        self.build(fp, source, cc).map(|p| (p, false))
    }

    /// Drops an entry (used when a verified library still fails to load).
    pub fn evict(&self, fp: &Fingerprint) {
        let _ = fs::remove_dir_all(self.entry_dir(fp));
    }

    fn build(&self, fp: &Fingerprint, source: &str, cc: &str) -> Result<PathBuf, BackendError> {
        fs::create_dir_all(&self.root)?;
        let nanos = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_nanos());
        let tmp = self.root.join(format!(".tmp-{}-{}-{nanos}", fp.short(), std::process::id()));
        fs::create_dir_all(&tmp)?;
        let result = compile_into(&tmp, fp, source, cc);
        if let Err(e) = result {
            let _ = fs::remove_dir_all(&tmp);
            return Err(e);
        }
        let dir = self.entry_dir(fp);
        if fs::rename(&tmp, &dir).is_err() {
            // Another builder won; use its entry if sound, else replace it.
            if verify(&dir, fp, source).is_err() {
                let _ = fs::remove_dir_all(&dir);
                fs::rename(&tmp, &dir)?;
            } else {
                let _ = fs::remove_dir_all(&tmp);
            }
        }
        Ok(dir.join("lib.so"))
    }
}

fn compile_into(dir: &Path, fp: &Fingerprint, source: &str, cc: &str) -> Result<(), BackendError> {
    let src = dir.join("source.c");
    let lib = dir.join("lib.so");
    fs::write(&src, source)?;
    let mut parts = cc.split_whitespace();
    let program = parts.next().unwrap_or("cc");
    COMPILER_INVOCATIONS.fetch_add(1, Ordering::SeqCst);
    let output = Command::new(program)
        .args(parts)
        .args(CC_FLAGS)
        .arg("-o")
        .arg(&lib)
        .arg(&src)
        .arg("-lm")
        .output()
        .map_err(|_| BackendError::ToolchainMissing(cc.to_string()))?;
    if !output.status.success() {
        return Err(BackendError::CompileFailed { stderr: String::from_utf8_lossy(&output.stderr).into_owned() });
    }
    let so = fs::read(&lib)?;
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let meta = format!(
        "fingerprint={}\nsource_sha256={}\nlib_sha256={}\ncompiler={}\nflags={}\ncreated_unix={created}\n",
        fp.hex(),
        sha256_hex(source.as_bytes()),
        sha256_hex(&so),
        cc,
        CC_FLAGS.join(" "),
    );
    fs::write(dir.join("meta"), meta)?;
    Ok(())
}

/// Checks that an entry belongs to `fp`, was built from `source` and that
/// the shared object is intact.
fn verify(dir: &Path, fp: &Fingerprint, source: &str) -> Result<PathBuf, BackendError> {
    let corrupt = |why: &str| BackendError::CacheCorrupt(format!("{}: {why}", dir.display()));
    let meta = fs::read_to_string(dir.join("meta")).map_err(|_| corrupt("missing metadata"))?;
    let field = |key: &str| {
        meta.lines()
            .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
            .map(str::to_string)
    };
    if field("fingerprint").as_deref() != Some(fp.hex().as_str()) {
        return Err(corrupt("fingerprint mismatch"));
    }
    if field("source_sha256") != Some(sha256_hex(source.as_bytes())) {
        return Err(corrupt("generated source mismatch"));
    }
    let lib = dir.join("lib.so");
    let so = fs::read(&lib).map_err(|_| corrupt("missing shared object"))?;
    if field("lib_sha256") != Some(sha256_hex(&so)) {
        return Err(corrupt("shared object checksum mismatch"));
    }
    Ok(lib)
}
