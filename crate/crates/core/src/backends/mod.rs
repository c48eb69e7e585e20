//! Execution engines for the implementation IR.
//!
//! All engines share one calling convention: the compute domain size, one
//! [`FieldArg`] per api field (declaration order) and the scalar values
//! (declaration order). Arithmetic is carried out in `f64`; `f32` fields
//! and temporaries widen on load and round on store.

mod debug;
pub mod gen;
mod frame;
mod vec;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::ir::{BinaryOp, DType, Fingerprint, StencilImplementation, UnaryOp};
use crate::storage::LayoutSpec;

pub use debug::DebugExecutable;
pub use gen::{compiler_invocations, GenExecutable};
pub use vec::VecExecutable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BackendId {
    Debug,
    Vec,
    Gen,
}

impl BackendId {
    pub const ALL: [BackendId; 3] = [BackendId::Debug, BackendId::Vec, BackendId::Gen];

    pub fn name(self) -> &'static str {
        match self {
            BackendId::Debug => "debug",
            BackendId::Vec => "vec",
            BackendId::Gen => "gen",
        }
    }

    /// Layout expected for argument fields: `k` innermost for the
    /// interpreters, `i` innermost for generated code.
    pub fn default_layout(self) -> LayoutSpec {
        match self {
            BackendId::Debug | BackendId::Vec => LayoutSpec::IJK,
            BackendId::Gen => LayoutSpec::KJI,
        }
    }
}

impl fmt::Display for BackendId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown backend `{given}`; supported backends: {}", BackendId::ALL.map(|b| b.name()).join(", "))]
pub struct UnknownBackend {
    pub given: String,
}

impl FromStr for BackendId {
    type Err = UnknownBackend;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BackendId::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| UnknownBackend { given: s.to_string() })
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("native toolchain `{0}` is not available")]
    ToolchainMissing(String),
    #[error("native compilation failed:\n{stderr}")]
    CompileFailed { stderr: String },
    #[error("symbol `{0}` not found in shared object")]
    SymbolNotFound(String),
    #[error("cache entry is corrupt: {0}")]
    CacheCorrupt(String),
    #[error("build cache I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// Deliberate miscompilations, used to check that differential testing
/// catches them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultInjection {
    /// Stages writing api fields skip the last `i` column.
    OffByOne,
}

/// Build-time knobs. Unset values fall back to `GTS_CACHE_DIR`,
/// `GTS_NUM_THREADS` and `GTS_CC`, then to built-in defaults.
#[derive(Debug, Clone, Default)]
pub struct BuildOptions {
    pub cache_dir: Option<PathBuf>,
    pub num_threads: Option<usize>,
    pub cc: Option<String>,
    pub fault: Option<FaultInjection>,
}

impl BuildOptions {
    pub fn resolved_cache_dir(&self) -> PathBuf {
        self.cache_dir
            .clone()
            .or_else(|| std::env::var_os("GTS_CACHE_DIR").filter(|v| !v.is_empty()).map(PathBuf::from))
            .or_else(|| dirs::cache_dir().map(|d| d.join("stencil-forge")))
            .unwrap_or_else(|| std::env::temp_dir().join("stencil-forge"))
    }

    pub fn resolved_num_threads(&self) -> usize {
        self.num_threads
            .or_else(|| std::env::var("GTS_NUM_THREADS").ok().and_then(|v| v.trim().parse().ok()))
            .filter(|&n| n > 0)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    pub fn resolved_cc(&self) -> String {
        self.cc
            .clone()
            .or_else(|| std::env::var("GTS_CC").ok().filter(|v| !v.trim().is_empty()))
            .unwrap_or_else(|| "cc".to_string())
    }
}

/// One field argument. `ptr` addresses logical element (0,0,0) of the
/// storage; `origin` is the storage index of compute-domain point (0,0,0).
/// Strides are in elements.
#[derive(Debug, Clone, Copy)]
pub struct FieldArg {
    pub ptr: *mut u8,
    pub dtype: DType,
    pub strides: [isize; 3],
    pub origin: [isize; 3],
}

// Field arguments are raw views; the runtime guarantees exclusive use of
// written fields for the duration of a call.
unsafe impl Send for FieldArg {}
unsafe impl Sync for FieldArg {}

impl FieldArg {
    #[inline]
    fn index(&self, i: isize, j: isize, k: isize) -> isize {
        (self.origin[0] + i) * self.strides[0] + (self.origin[1] + j) * self.strides[1] + (self.origin[2] + k) * self.strides[2]
    }

    /// Reads domain-relative point `(i, j, k)`.
    ///
    /// # Safety
    /// The point must lie inside the underlying allocation.
    #[inline]
    pub unsafe fn load(&self, i: isize, j: isize, k: isize) -> f64 {
        let idx = self.index(i, j, k);
        match self.dtype {
            DType::F64 => *(self.ptr as *const f64).offset(idx),
            DType::F32 => *(self.ptr as *const f32).offset(idx) as f64,
        }
    }

    /// # Safety
    /// The point must lie inside the underlying allocation, which must not
    /// be read concurrently.
    #[inline]
    pub unsafe fn store(&self, i: isize, j: isize, k: isize, v: f64) {
        let idx = self.index(i, j, k);
        match self.dtype {
            DType::F64 => *(self.ptr as *mut f64).offset(idx) = v,
            DType::F32 => *(self.ptr as *mut f32).offset(idx) = v as f32,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KernelArgs {
    pub domain: [usize; 3],
    pub fields: Vec<FieldArg>,
    pub scalars: Vec<f64>,
}

/// A ready-to-run stencil.
pub trait Executable: Send + Sync {
    fn backend(&self) -> BackendId;

    /// Executes the stencil, mutating written fields in place.
    ///
    /// # Safety
    /// Every field must be valid for all points of the domain grown by the
    /// field's access extent, and written fields must not alias any other
    /// argument.
    unsafe fn run(&self, args: &KernelArgs);
}

/// What a build produced; `cache_hit` and paths are set by `gen` only.
#[derive(Debug, Clone, Default)]
pub struct BuildInfo {
    pub cache_hit: Option<bool>,
    pub shared_object: Option<PathBuf>,
    pub source: Option<String>,
}

/// Extra identity of the build environment folded into the fingerprint.
pub fn toolchain_id(backend: BackendId, options: &BuildOptions) -> Result<String, BackendError> {
    match backend {
        BackendId::Debug | BackendId::Vec => Ok(String::new()),
        BackendId::Gen => gen::toolchain_id(options),
    }
}

/// Backend id as it enters the fingerprint (fault injection included).
pub fn fingerprint_backend_id(backend: BackendId, options: &BuildOptions) -> String {
    match (backend, options.fault) {
        (BackendId::Gen, Some(FaultInjection::OffByOne)) => "gen+fault-off-by-one".to_string(),
        _ => backend.name().to_string(),
    }
}

pub fn build(
    imp: &StencilImplementation,
    backend: BackendId,
    fp: &Fingerprint,
    options: &BuildOptions,
) -> Result<(Box<dyn Executable>, BuildInfo), BackendError> {
    match backend {
        BackendId::Debug => Ok((Box::new(DebugExecutable::new(imp.clone())), BuildInfo::default())),
        BackendId::Vec => Ok((Box::new(VecExecutable::new(imp.clone())), BuildInfo::default())),
        BackendId::Gen => {
            let (exe, info) = GenExecutable::build(imp, fp, options)?;
            Ok((Box::new(exe), info))
        }
    }
}

#[inline]
fn truth(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Scalar semantics shared by the interpreting engines; generated code
/// mirrors these exactly.
#[inline]
pub(crate) fn apply_binary(op: BinaryOp, a: f64, b: f64) -> f64 {
    match op {
        BinaryOp::Add => a + b,
        BinaryOp::Sub => a - b,
        BinaryOp::Mul => a * b,
        BinaryOp::Div => a / b,
        BinaryOp::Lt => truth(a < b),
        BinaryOp::Le => truth(a <= b),
        BinaryOp::Gt => truth(a > b),
        BinaryOp::Ge => truth(a >= b),
        BinaryOp::Eq => truth(a == b),
        BinaryOp::Ne => truth(a != b),
        BinaryOp::And => truth(a != 0.0 && b != 0.0),
        BinaryOp::Or => truth(a != 0.0 || b != 0.0),
    }
}

#[inline]
pub(crate) fn apply_unary(op: UnaryOp, a: f64) -> f64 {
    match op {
        UnaryOp::Neg => -a,
        UnaryOp::Not => truth(a == 0.0),
    }
}

/// Interval bounds `[start, end)` clamped to `[0, nk)`.
pub(crate) fn level_range(interval: &crate::ir::Interval, nk: usize) -> (isize, isize) {
    let (s, e) = interval.resolve(nk as i64);
    (s.clamp(0, nk as i64) as isize, e.clamp(0, nk as i64) as isize)
}

/// Reference schedule: multistages in program order; PARALLEL interval
/// groups run each stage over the whole level range, sequential ones run
/// level by level in iteration direction. Calls `f(stage, k_begin, k_end)`.
pub(crate) fn schedule(imp: &StencilImplementation, nk: usize, mut f: impl FnMut(&crate::ir::Stage, isize, isize)) {
    for ms in &imp.multistages {
        for (interval, stages) in ms.interval_groups() {
            let (s, e) = level_range(&interval, nk);
            if s >= e {
                continue;
            }
            match ms.order {
                crate::ir::Order::Parallel => {
                    for stage in stages {
                        f(stage, s, e);
                    }
                }
                crate::ir::Order::Forward => {
                    for k in s..e {
                        for stage in stages {
                            f(stage, k, k + 1);
                        }
                    }
                }
                crate::ir::Order::Backward => {
                    for k in (s..e).rev() {
                        for stage in stages {
                            f(stage, k, k + 1);
                        }
                    }
                }
            }
        }
    }
}
