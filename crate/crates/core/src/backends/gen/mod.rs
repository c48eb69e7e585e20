//! Native backend: emits C, compiles it with the system toolchain into a
//! shared object, caches it by fingerprint and loads it dynamically.
//!
//! Every library exports two symbols:
//!
//! * `gts_run_<name>_<digest8>(int64_t ni, int64_t nj, int64_t nk, ...)`:
//!   for each api field in declaration order a `T*` base pointer (logical
//!   element (0,0,0), `T` = `float` or `double`), three `int64_t` strides in
//!   elements (i, j, k) and three `int64_t` origin offsets; then one
//!   `double` per scalar parameter in declaration order.
//! * `gts_packed_<name>_<digest8>(const int64_t* dom, void* const* ptrs,
//!   const int64_t* meta, const double* scalars)`: the same call with
//!   arguments gathered into arrays (`meta` holds six values per field).
//!
//! Threading splits the `j` axis into contiguous tiles, one call per tile,
//! when no written api field is read at a horizontal offset; temporaries are
//! recomputed per tile, so results do not depend on the thread count.

mod cache;
mod codegen;

use std::collections::HashMap;
use std::ffi::c_void;
use std::path::PathBuf;
use std::process::Command;
use std::sync::{Mutex, OnceLock};

use libloading::Library;

use super::{BackendError, BackendId, BuildInfo, BuildOptions, Executable, KernelArgs};
use crate::ir::{Fingerprint, StencilImplementation, TOOLCHAIN_VERSION};

pub use cache::{compiler_invocations, CC_FLAGS};
pub use codegen::{entry_symbol, generate_source, packed_symbol};

/// Bumped whenever emitted code changes meaning.
const CODEGEN_VERSION: u32 = 1;

type PackedFn = unsafe extern "C" fn(*const i64, *const *mut c_void, *const i64, *const f64);

/// First line of `<cc> --version`, memoized per compiler command.
fn probe_compiler(cc: &str) -> Result<String, BackendError> {
    static PROBES: OnceLock<Mutex<HashMap<String, String>>> = OnceLock::new();
    let probes = PROBES.get_or_init(Default::default);
    if let Some(v) = probes.lock().unwrap().get(cc) {
        return Ok(v.clone());
    }
    let mut parts = cc.split_whitespace();
    let program = parts.next().ok_or_else(|| BackendError::ToolchainMissing(cc.to_string()))?;
    let output = Command::new(program)
        .args(parts)
        .arg("--version")
        .output()
        .map_err(|_| BackendError::ToolchainMissing(cc.to_string()))?;
    if !output.status.success() {
        return Err(BackendError::ToolchainMissing(cc.to_string()));
    }
    let version = String::from_utf8_lossy(&output.stdout).lines().next().unwrap_or("").trim().to_string();
    probes.lock().unwrap().insert(cc.to_string(), version.clone());
    Ok(version)
}

pub(crate) fn toolchain_id(options: &BuildOptions) -> Result<String, BackendError> {
    let cc = options.resolved_cc();
    let version = probe_compiler(&cc)?;
    Ok(format!("{TOOLCHAIN_VERSION}; codegen {CODEGEN_VERSION}; {cc}: {version}; {}", CC_FLAGS.join(" ")))
}

pub struct GenExecutable {
    entry: PackedFn,
    threads: usize,
    splittable: bool,
    path: PathBuf,
    // Keeps `entry` valid.
    _lib: Library,
}

impl GenExecutable {
    pub fn build(
        imp: &StencilImplementation,
        fp: &Fingerprint,
        options: &BuildOptions,
    ) -> Result<(Self, BuildInfo), BackendError> {
        let cc = options.resolved_cc();
        probe_compiler(&cc)?;
        let source = generate_source(imp, fp, options.fault);
        let cache = cache::BuildCache::new(options.resolved_cache_dir());
        let (mut path, mut hit) = cache.get_or_build(fp, &source, &cc)?;
        // SAFETY: the library was produced by our own code generator.
        let lib = match unsafe { Library::new(&path) } {
            Ok(lib) => lib,
            Err(e) if hit => {
                // Verified but unloadable: rebuild once.
                let _ = e;
                cache.evict(fp);
                (path, hit) = cache.get_or_build(fp, &source, &cc)?;
                unsafe { Library::new(&path) }.map_err(|e| BackendError::CacheCorrupt(e.to_string()))?
            }
            Err(e) => return Err(BackendError::CacheCorrupt(e.to_string())),
        };
        let symbol = packed_symbol(imp, fp);
        // SAFETY: the symbol has the documented packed signature.
        let entry: PackedFn = unsafe {
            *lib.get::<PackedFn>(symbol.as_bytes()).map_err(|_| BackendError::SymbolNotFound(symbol.clone()))?
        };
        let exe = GenExecutable {
            entry,
            threads: options.resolved_num_threads(),
            splittable: imp.horizontally_splittable(),
            path: path.clone(),
            _lib: lib,
        };
        let info = BuildInfo { cache_hit: Some(hit), shared_object: Some(path), source: Some(source) };
        Ok((exe, info))
    }

    pub fn shared_object(&self) -> &PathBuf {
        &self.path
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    unsafe fn call_tile(&self, args: &KernelArgs, j0: usize, nj: usize) {
        let dom = [args.domain[0] as i64, nj as i64, args.domain[2] as i64];
        let ptrs: Vec<*mut c_void> = args.fields.iter().map(|f| f.ptr as *mut c_void).collect();
        let mut meta = Vec::with_capacity(6 * args.fields.len());
        for f in &args.fields {
            meta.extend(f.strides.map(|s| s as i64));
            meta.extend([f.origin[0] as i64, (f.origin[1] + j0 as isize) as i64, f.origin[2] as i64]);
        }
        (self.entry)(dom.as_ptr(), ptrs.as_ptr(), meta.as_ptr(), args.scalars.as_ptr());
    }
}

impl Executable for GenExecutable {
    fn backend(&self) -> BackendId {
        BackendId::Gen
    }

    unsafe fn run(&self, args: &KernelArgs) {
        if args.domain.contains(&0) {
            return;
        }
        let nj = args.domain[1];
        let tiles = if self.splittable { self.threads.min(nj) } else { 1 };
        if tiles <= 1 {
            self.call_tile(args, 0, nj);
            return;
        }
        std::thread::scope(|scope| {
            for t in 0..tiles {
                let j0 = nj * t / tiles;
                let j1 = nj * (t + 1) / tiles;
                // SAFETY: tiles write disjoint j ranges; see module docs.
                scope.spawn(move || unsafe { self.call_tile(args, j0, j1 - j0) });
            }
        });
    }
}
