//! Compile sources into invocable stencils and run them on fields.

use std::collections::HashMap;
use std::fmt;
use std::time::Instant;

use thiserror::Error;

use crate::analysis::analyze;
use crate::backends::{
    self, BackendError, BackendId, BuildInfo, BuildOptions, Executable, FieldArg, KernelArgs,
};
use crate::diagnostics::Diagnostic;
use crate::frontend::{load_stencil, ExternalsBinding, SourceProgram};
use crate::ir::{fingerprint, DType, Extent, Fingerprint, StencilDefinition, StencilImplementation};
use crate::storage::{FieldStorage, Fill, StorageError};

#[derive(Debug, Error)]
pub enum CompileError {
    #[error("{}", render_plain(.0))]
    Diagnostics(Vec<Diagnostic>),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

fn render_plain(diags: &[Diagnostic]) -> String {
    diags.iter().map(|d| d.render("<source>")).collect::<Vec<_>>().join("\n")
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuntimeError {
    #[error("missing argument `{0}`")]
    MissingArgument(String),
    #[error("unexpected argument `{0}`")]
    UnexpectedArgument(String),
    #[error("compute domain too small: {0}")]
    DomainTooSmall(String),
    #[error("vertical domain size {nk} is below the stencil minimum {k_min}")]
    KBelowMinimum { nk: usize, k_min: usize },
    #[error("field `{field}` is too small: {detail}")]
    OutOfBounds { field: String, detail: String },
    #[error("field `{field}` has layout {found:?}, backend expects {expected:?}")]
    LayoutMismatch { field: String, expected: [usize; 3], found: [usize; 3] },
    #[error("field `{field}` has dtype {found}, parameter is declared {expected}")]
    DTypeMismatch { field: String, expected: DType, found: DType },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValidationPolicy {
    Full,
    /// Skips dtype, layout and bounds checks.
    Skip,
}

/// A resolved domain and the origin used for each field.
pub type ResolvedDomain = ([usize; 3], HashMap<String, [usize; 3]>);

/// Timing of one invocation, in nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ExecutionReport {
    pub total_ns: u64,
    pub validation_ns: u64,
    pub kernel_ns: u64,
}

pub struct CompiledStencil {
    fingerprint: Fingerprint,
    definition: StencilDefinition,
    implementation: StencilImplementation,
    backend: BackendId,
    executable: Box<dyn Executable>,
    build_info: BuildInfo,
    warnings: Vec<Diagnostic>,
    policy: ValidationPolicy,
}

impl fmt::Debug for CompiledStencil {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CompiledStencil")
            .field("name", &self.implementation.name)
            .field("backend", &self.backend)
            .field("fingerprint", &self.fingerprint)
            .finish_non_exhaustive()
    }
}

pub fn compile_stencil(
    src: &SourceProgram,
    stencil_name: &str,
    backend: BackendId,
    externals: &ExternalsBinding,
) -> Result<CompiledStencil, CompileError> {
    compile_stencil_with(src, stencil_name, backend, externals, &BuildOptions::default())
}

/// Full pipeline: parse, inline, bind, analyze, lower and build.
pub fn compile_stencil_with(
    src: &SourceProgram,
    stencil_name: &str,
    backend: BackendId,
    externals: &ExternalsBinding,
    options: &BuildOptions,
) -> Result<CompiledStencil, CompileError> {
    let definition = load_stencil(src, stencil_name, externals).map_err(|d| CompileError::Diagnostics(vec![d]))?;
    let (implementation, warnings) = analyze(&definition).map_err(CompileError::Diagnostics)?;
    let toolchain = backends::toolchain_id(backend, options)?;
    let fp = fingerprint(
        &definition,
        &backends::fingerprint_backend_id(backend, options),
        &definition.externals,
        &toolchain,
    );
    let (executable, build_info) = backends::build(&implementation, backend, &fp, options)?;
    Ok(CompiledStencil {
        fingerprint: fp,
        definition,
        implementation,
        backend,
        executable,
        build_info,
        warnings,
        policy: ValidationPolicy::Full,
    })
}

/// Named arguments for one call. A single `origin` applies to every field;
/// per-field origins override it.
#[derive(Default)]
pub struct InvocationArgs<'a> {
    fields: Vec<(String, &'a mut FieldStorage)>,
    scalars: Vec<(String, f64)>,
    domain: Option<[usize; 3]>,
    origin: Option<[usize; 3]>,
    field_origins: HashMap<String, [usize; 3]>,
}

impl<'a> InvocationArgs<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn field(mut self, name: &str, storage: &'a mut FieldStorage) -> Self {
        self.fields.push((name.to_string(), storage));
        self
    }

    pub fn scalar(mut self, name: &str, value: f64) -> Self {
        self.scalars.push((name.to_string(), value));
        self
    }

    pub fn domain(mut self, domain: [usize; 3]) -> Self {
        self.domain = Some(domain);
        self
    }

    pub fn origin(mut self, origin: [usize; 3]) -> Self {
        self.origin = Some(origin);
        self
    }

    pub fn field_origin(mut self, name: &str, origin: [usize; 3]) -> Self {
        self.field_origins.insert(name.to_string(), origin);
        self
    }

    /// The storage bound to `name`, if any.
    pub fn storage(&self, name: &str) -> Option<&FieldStorage> {
        self.fields.iter().find(|(n, _)| n == name).map(|(_, s)| &**s)
    }
}

const AXES: [char; 3] = ['i', 'j', 'k'];

impl CompiledStencil {
    pub fn fingerprint(&self) -> &Fingerprint {
        &self.fingerprint
    }

    pub fn definition(&self) -> &StencilDefinition {
        &self.definition
    }

    pub fn implementation(&self) -> &StencilImplementation {
        &self.implementation
    }

    pub fn backend(&self) -> BackendId {
        self.backend
    }

    pub fn build_info(&self) -> &BuildInfo {
        &self.build_info
    }

    pub fn warnings(&self) -> &[Diagnostic] {
        &self.warnings
    }

    pub fn k_min(&self) -> usize {
        self.implementation.k_min as usize
    }

    pub fn field_extent(&self, name: &str) -> Option<Extent> {
        self.implementation.field_extent(name)
    }

    pub fn validation_policy(&self) -> ValidationPolicy {
        self.policy
    }

    /// # Safety
    /// With [`ValidationPolicy::Skip`] the caller guarantees that every
    /// later invocation passes fields of the declared dtype and large
    /// enough for the resolved domain; violations are out-of-bounds
    /// memory accesses.
    pub unsafe fn set_validation_policy(&mut self, policy: ValidationPolicy) {
        self.policy = policy;
    }

    /// Allocates a field for `name` sized for `domain`, with a symmetric
    /// halo covering its access extent and the backend's layout.
    pub fn allocate_field(&self, name: &str, domain: [usize; 3], fill: Fill) -> Result<FieldStorage, StorageError> {
        let decl = self
            .implementation
            .api_fields
            .iter()
            .find(|f| f.name == name)
            .ok_or_else(|| StorageError::InvalidLayout(format!("`{name}` is not a field of this stencil")))?;
        let e = self.field_extent(name).unwrap_or_default();
        let halo = [0, 1, 2].map(|a| (-e.lo[a]).max(e.hi[a]));
        let shape = domain.map(|n| n as i64);
        FieldStorage::allocate(decl.dtype, shape, halo, &self.backend.default_layout(), fill)
    }

    /// Default domain and per-field origins, checked against every field.
    pub fn resolve_domain_origin(
        &self,
        args: &InvocationArgs,
    ) -> Result<ResolvedDomain, RuntimeError> {
        self.check_names(args)?;
        let (domain, origins) = self.default_domain_origin(args)?;
        self.check_bounds(args, domain, &origins)?;
        Ok((domain, origins))
    }

    fn check_names(&self, args: &InvocationArgs) -> Result<(), RuntimeError> {
        let imp = &self.implementation;
        for f in &imp.api_fields {
            if args.storage(&f.name).is_none() {
                return Err(RuntimeError::MissingArgument(f.name.clone()));
            }
        }
        for s in &imp.api_scalars {
            if !args.scalars.iter().any(|(n, _)| *n == s.name) {
                return Err(RuntimeError::MissingArgument(s.name.clone()));
            }
        }
        for (n, _) in &args.fields {
            if !imp.api_fields.iter().any(|f| f.name == *n) {
                return Err(RuntimeError::UnexpectedArgument(n.clone()));
            }
        }
        for (n, _) in &args.scalars {
            if !imp.api_scalars.iter().any(|s| s.name == *n) {
                return Err(RuntimeError::UnexpectedArgument(n.clone()));
            }
        }
        for n in args.field_origins.keys() {
            if !imp.api_fields.iter().any(|f| f.name == *n) {
                return Err(RuntimeError::UnexpectedArgument(n.clone()));
            }
        }
        Ok(())
    }

    fn default_domain_origin(
        &self,
        args: &InvocationArgs,
    ) -> Result<ResolvedDomain, RuntimeError> {
        let imp = &self.implementation;
        let mut origins = HashMap::new();
        let mut domain = [i64::MAX; 3];
        let mut binding = [String::new(), String::new(), String::new()];
        for f in &imp.api_fields {
            let s = args.storage(&f.name).ok_or_else(|| RuntimeError::MissingArgument(f.name.clone()))?;
            let origin = args.field_origins.get(&f.name).copied().or(args.origin).unwrap_or(s.origin());
            let e = imp.field_extent(&f.name).unwrap_or_default();
            for a in 0..3 {
                let room = s.shape()[a] as i64 - origin[a] as i64 - e.hi[a];
                if room < domain[a] {
                    domain[a] = room;
                    binding[a] = f.name.clone();
                }
            }
            origins.insert(f.name.clone(), origin);
        }
        let domain = match args.domain {
            Some(d) => d,
            None if imp.api_fields.is_empty() => [0; 3],
            None => {
                if let Some(a) = (0..3).find(|&a| domain[a] < 1) {
                    return Err(RuntimeError::DomainTooSmall(format!(
                        "field `{}` leaves {} points along {} after its origin and extent",
                        binding[a], domain[a], AXES[a]
                    )));
                }
                domain.map(|n| n as usize)
            }
        };
        Ok((domain, origins))
    }

    fn check_bounds(
        &self,
        args: &InvocationArgs,
        domain: [usize; 3],
        origins: &HashMap<String, [usize; 3]>,
    ) -> Result<(), RuntimeError> {
        if let Some(a) = (0..3).find(|&a| domain[a] < 1) {
            return Err(RuntimeError::DomainTooSmall(format!("domain {domain:?} is empty along {}", AXES[a])));
        }
        if domain[2] < self.k_min() {
            return Err(RuntimeError::KBelowMinimum { nk: domain[2], k_min: self.k_min() });
        }
        let imp = &self.implementation;
        for f in &imp.api_fields {
            let s = args.storage(&f.name).expect("checked by check_names");
            let origin = origins[&f.name];
            let e = imp.field_extent(&f.name).unwrap_or_default();
            for a in 0..3 {
                if (origin[a] as i64) + e.lo[a] < 0 {
                    return Err(RuntimeError::OutOfBounds {
                        field: f.name.clone(),
                        detail: format!(
                            "origin {} along {} cannot accommodate a read at offset {}",
                            origin[a], AXES[a], e.lo[a]
                        ),
                    });
                }
                let needed = origin[a] as i64 + domain[a] as i64 + e.hi[a];
                if needed > s.shape()[a] as i64 {
                    return Err(RuntimeError::OutOfBounds {
                        field: f.name.clone(),
                        detail: format!("needs {needed} points along {} but has {}", AXES[a], s.shape()[a]),
                    });
                }
            }
        }
        Ok(())
    }

    fn check_storage(&self, args: &InvocationArgs) -> Result<(), RuntimeError> {
        let expected = self.backend.default_layout().permutation;
        for f in &self.implementation.api_fields {
            let s = args.storage(&f.name).expect("checked by check_names");
            if s.dtype() != f.dtype {
                return Err(RuntimeError::DTypeMismatch { field: f.name.clone(), expected: f.dtype, found: s.dtype() });
            }
            if s.layout().permutation != expected {
                return Err(RuntimeError::LayoutMismatch {
                    field: f.name.clone(),
                    expected,
                    found: s.layout().permutation,
                });
            }
        }
        Ok(())
    }

    /// Runs the stencil; written fields are updated in place.
    pub fn invoke(&self, args: &mut InvocationArgs) -> Result<ExecutionReport, RuntimeError> {
        let start = Instant::now();
        let (domain, origins) = match self.policy {
            ValidationPolicy::Full => {
                self.check_names(args)?;
                self.check_storage(args)?;
                let (domain, origins) = self.default_domain_origin(args)?;
                self.check_bounds(args, domain, &origins)?;
                (domain, origins)
            }
            ValidationPolicy::Skip => self.default_domain_origin(args)?,
        };
        let validated = Instant::now();

        let imp = &self.implementation;
        let mut fields = Vec::with_capacity(imp.api_fields.len());
        for f in &imp.api_fields {
            let s = args
                .fields
                .iter_mut()
                .find(|(n, _)| *n == f.name)
                .map(|(_, s)| &mut **s)
                .ok_or_else(|| RuntimeError::MissingArgument(f.name.clone()))?;
            let origin = origins[&f.name];
            fields.push(FieldArg {
                ptr: s.as_mut_ptr(),
                dtype: s.dtype(),
                strides: s.strides().map(|v| v as isize),
                origin: origin.map(|v| v as isize),
            });
        }
        let scalars = imp
            .api_scalars
            .iter()
            .map(|s| {
                let v = args.scalars.iter().find(|(n, _)| *n == s.name).map_or(0.0, |(_, v)| *v);
                match s.dtype {
                    DType::F32 => v as f32 as f64,
                    DType::F64 => v,
                }
            })
            .collect();
        let kernel_args = KernelArgs { domain, fields, scalars };
        let kernel_start = Instant::now();
        // SAFETY: under the full policy, dtypes, layouts and bounds were
        // checked above; under the skip policy the caller vouched for them.
        // Fields are exclusively borrowed for the duration of the call.
        unsafe { self.executable.run(&kernel_args) };
        let end = Instant::now();

        let validation_ns = match self.policy {
            ValidationPolicy::Full => (validated - start).as_nanos() as u64,
            ValidationPolicy::Skip => 0,
        };
        Ok(ExecutionReport {
            total_ns: (end - start).as_nanos() as u64,
            validation_ns,
            kernel_ns: (end - kernel_start).as_nanos() as u64,
        })
    }
}
