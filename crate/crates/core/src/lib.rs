pub mod analysis;
pub mod backends;
pub mod diagnostics;
pub mod frontend;
pub mod ir;
pub mod runtime;
pub mod storage;

/// Benchmark kernels shipped with the crate.
pub mod kernels {
    /// Flux-limited horizontal diffusion; stencil `hdiff(inp, out, coeff)`.
    pub const HDIFF: &str = include_str!("../kernels/hdiff.gts");
    /// Thomas-algorithm vertical solve; stencil `vadv(a, b, c, d, x)`.
    pub const VADV: &str = include_str!("../kernels/vadv.gts");
    /// Field copy; stencil `copy(a, b)`.
    pub const COPY: &str = include_str!("../kernels/copy.gts");
}
