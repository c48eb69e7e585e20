//! Field containers: strided 3-D buffers with configurable layout,
//! alignment, padding and origin.

mod buffer;
mod gtsf;

use std::fmt;
use std::marker::PhantomData;

use thiserror::Error;

use crate::ir::DType;
use buffer::AlignedBuffer;

pub use gtsf::{read_gtsf, read_gtsf_with_layout, write_gtsf, GTSF_MAGIC, GTSF_VERSION};

pub const DEFAULT_ALIGNMENT: usize = 64;

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("allocation of {0} bytes failed")]
    AllocationError(usize),
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
    #[error("invalid GTSF file: {0}")]
    FormatError(String),
    #[error("GTSF file is truncated")]
    TruncatedFile,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Memory layout: axis order from outermost to innermost, alignment of the
/// origin element, and a default halo.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LayoutSpec {
    pub permutation: [usize; 3],
    pub alignment_bytes: usize,
    pub halo_default: [i64; 3],
}

impl LayoutSpec {
    /// `k` innermost (i, j, k row-major).
    pub const IJK: LayoutSpec = LayoutSpec::new([0, 1, 2]);
    /// `i` innermost.
    pub const KJI: LayoutSpec = LayoutSpec::new([2, 1, 0]);

    pub const fn new(permutation: [usize; 3]) -> Self {
        LayoutSpec { permutation, alignment_bytes: DEFAULT_ALIGNMENT, halo_default: [0; 3] }
    }

    pub fn with_alignment(mut self, alignment_bytes: usize) -> Self {
        self.alignment_bytes = alignment_bytes;
        self
    }

    pub fn with_halo(mut self, halo: [i64; 3]) -> Self {
        self.halo_default = halo;
        self
    }

    pub fn validate(&self, dtype: DType) -> Result<(), StorageError> {
        let mut seen = [false; 3];
        for &axis in &self.permutation {
            if axis > 2 || seen[axis] {
                return Err(StorageError::InvalidLayout(format!(
                    "permutation {:?} is not a permutation of (0, 1, 2)",
                    self.permutation
                )));
            }
            seen[axis] = true;
        }
        if !self.alignment_bytes.is_power_of_two() || self.alignment_bytes < dtype.size_bytes() {
            return Err(StorageError::InvalidLayout(format!(
                "alignment {} must be a power of two no smaller than the {} element size",
                self.alignment_bytes, dtype
            )));
        }
        if self.halo_default.iter().any(|&h| h < 0) {
            return Err(StorageError::InvalidLayout(format!("negative default halo {:?}", self.halo_default)));
        }
        Ok(())
    }
}

impl Default for LayoutSpec {
    fn default() -> Self {
        LayoutSpec::IJK
    }
}

/// Initial contents of a newly allocated field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fill {
    Zeros,
    Value(f64),
    /// Quiet NaN everywhere, including padding.
    Poison,
}

/// A 3-D field. Indices passed to accessors are logical `(i, j, k)`
/// positions in `[0, shape)`, independent of layout.
pub struct FieldStorage {
    dtype: DType,
    shape: [usize; 3],
    origin: [usize; 3],
    layout: LayoutSpec,
    strides: [usize; 3],
    /// Element offset of logical (0,0,0) from the buffer start.
    offset: usize,
    buf: AlignedBuffer,
}

impl FieldStorage {
    /// Allocates `compute_shape + 2*halo` elements with the origin at `halo`.
    pub fn allocate(
        dtype: DType,
        compute_shape: [i64; 3],
        halo: [i64; 3],
        layout: &LayoutSpec,
        fill: Fill,
    ) -> Result<Self, StorageError> {
        if compute_shape.iter().any(|&n| n < 1) {
            return Err(StorageError::InvalidLayout(format!("compute shape {compute_shape:?} must be at least 1")));
        }
        if halo.iter().any(|&h| h < 0) {
            return Err(StorageError::InvalidLayout(format!("halo {halo:?} must be non-negative")));
        }
        let shape = [0, 1, 2].map(|a| (compute_shape[a] + 2 * halo[a]) as usize);
        let origin = halo.map(|h| h as usize);
        Self::with_shape(dtype, shape, origin, layout, fill)
    }

    /// Allocates exactly `shape` elements with the given default origin.
    pub fn with_shape(
        dtype: DType,
        shape: [usize; 3],
        origin: [usize; 3],
        layout: &LayoutSpec,
        fill: Fill,
    ) -> Result<Self, StorageError> {
        layout.validate(dtype)?;
        if shape.contains(&0) {
            return Err(StorageError::InvalidLayout(format!("shape {shape:?} has an empty axis")));
        }
        if (0..3).any(|a| origin[a] >= shape[a]) {
            return Err(StorageError::InvalidLayout(format!("origin {origin:?} outside shape {shape:?}")));
        }
        let elem = dtype.size_bytes();
        let align_elems = layout.alignment_bytes / elem;
        let [outer, middle, inner] = layout.permutation;
        let padded = shape[inner].div_ceil(align_elems) * align_elems;
        let mut strides = [0; 3];
        strides[inner] = 1;
        strides[middle] = padded;
        strides[outer] = padded * shape[middle];
        let total = strides[outer] * shape[outer];
        let origin_elem: usize = (0..3).map(|a| origin[a] * strides[a]).sum();
        let offset = (align_elems - origin_elem % align_elems) % align_elems;
        let bytes = (offset + total)
            .checked_mul(elem)
            .ok_or(StorageError::AllocationError(usize::MAX))?;
        let buf = AlignedBuffer::zeroed(bytes, layout.alignment_bytes).ok_or(StorageError::AllocationError(bytes))?;
        let mut field = FieldStorage { dtype, shape, origin, layout: *layout, strides, offset, buf };
        match fill {
            Fill::Zeros => {}
            Fill::Value(v) => field.fill_raw(v),
            Fill::Poison => field.fill_raw(f64::NAN),
        }
        Ok(field)
    }

    fn fill_raw(&mut self, v: f64) {
        let n = self.buf.len() / self.dtype.size_bytes();
        // SAFETY: the buffer holds `n` properly aligned elements of `dtype`.
        unsafe {
            match self.dtype {
                DType::F64 => std::slice::from_raw_parts_mut(self.buf.as_ptr() as *mut f64, n).fill(v),
                DType::F32 => std::slice::from_raw_parts_mut(self.buf.as_ptr() as *mut f32, n).fill(v as f32),
            }
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn origin(&self) -> [usize; 3] {
        self.origin
    }

    pub fn set_origin(&mut self, origin: [usize; 3]) -> Result<(), StorageError> {
        if (0..3).any(|a| origin[a] >= self.shape[a]) {
            return Err(StorageError::InvalidLayout(format!("origin {origin:?} outside shape {:?}", self.shape)));
        }
        self.origin = origin;
        Ok(())
    }

    pub fn layout(&self) -> &LayoutSpec {
        &self.layout
    }

    /// Strides in elements.
    pub fn strides(&self) -> [usize; 3] {
        self.strides
    }

    /// Address of logical element (0,0,0).
    pub fn as_ptr(&self) -> *const u8 {
        // SAFETY: `offset` is within the allocation.
        unsafe { self.buf.as_ptr().add(self.offset * self.dtype.size_bytes()) }
    }

    pub fn as_mut_ptr(&mut self) -> *mut u8 {
        self.as_ptr() as *mut u8
    }

    /// Address of the origin element.
    pub fn origin_ptr(&self) -> *const u8 {
        let idx = self.linear(self.origin);
        // SAFETY: the origin lies inside the shape.
        unsafe { self.as_ptr().add(idx * self.dtype.size_bytes()) }
    }

    fn linear(&self, idx: [usize; 3]) -> usize {
        assert!(
            (0..3).all(|a| idx[a] < self.shape[a]),
            "index {idx:?} out of bounds for shape {:?}",
            self.shape
        );
        idx[0] * self.strides[0] + idx[1] * self.strides[1] + idx[2] * self.strides[2]
    }

    pub fn get(&self, idx: [usize; 3]) -> f64 {
        let l = self.linear(idx);
        // SAFETY: `linear` checked bounds.
        unsafe {
            match self.dtype {
                DType::F64 => *(self.as_ptr() as *const f64).add(l),
                DType::F32 => *(self.as_ptr() as *const f32).add(l) as f64,
            }
        }
    }

    pub fn set(&mut self, idx: [usize; 3], v: f64) {
        let l = self.linear(idx);
        // SAFETY: `linear` checked bounds.
        unsafe {
            match self.dtype {
                DType::F64 => *(self.as_mut_ptr() as *mut f64).add(l) = v,
                DType::F32 => *(self.as_mut_ptr() as *mut f32).add(l) = v as f32,
            }
        }
    }

    /// Raw bit pattern of an element (f32 values occupy the low 32 bits).
    pub fn get_bits(&self, idx: [usize; 3]) -> u64 {
        let l = self.linear(idx);
        // SAFETY: `linear` checked bounds.
        unsafe {
            match self.dtype {
                DType::F64 => *(self.as_ptr() as *const u64).add(l),
                DType::F32 => *(self.as_ptr() as *const u32).add(l) as u64,
            }
        }
    }

    pub fn set_bits(&mut self, idx: [usize; 3], bits: u64) {
        let l = self.linear(idx);
        // SAFETY: `linear` checked bounds.
        unsafe {
            match self.dtype {
                DType::F64 => *(self.as_mut_ptr() as *mut u64).add(l) = bits,
                DType::F32 => *(self.as_mut_ptr() as *mut u32).add(l) = bits as u32,
            }
        }
    }

    /// All logical indices in row-major order (k fastest).
    pub fn indices(&self) -> impl Iterator<Item = [usize; 3]> {
        let [ni, nj, nk] = self.shape;
        (0..ni).flat_map(move |i| (0..nj).flat_map(move |j| (0..nk).map(move |k| [i, j, k])))
    }

    pub fn fill_with(&mut self, mut f: impl FnMut([usize; 3]) -> f64) {
        for idx in self.indices() {
            let v = f(idx);
            self.set(idx, v);
        }
    }

    /// Zero-copy view of the buffer for foreign code.
    pub fn export_descriptor(&mut self) -> BufferDescriptor<'_> {
        let elem = self.dtype.size_bytes();
        BufferDescriptor {
            data: self.as_mut_ptr(),
            dtype: self.dtype,
            shape: self.shape,
            strides: self.strides.map(|s| s * elem),
            read_only: false,
            _storage: PhantomData,
        }
    }
}

impl fmt::Debug for FieldStorage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FieldStorage")
            .field("dtype", &self.dtype)
            .field("shape", &self.shape)
            .field("origin", &self.origin)
            .field("layout", &self.layout)
            .field("strides", &self.strides)
            .finish()
    }
}

impl Clone for FieldStorage {
    fn clone(&self) -> Self {
        let buf = AlignedBuffer::zeroed(self.buf.len(), self.layout.alignment_bytes).expect("allocation failed");
        // SAFETY: both buffers have identical size.
        unsafe { std::ptr::copy_nonoverlapping(self.buf.as_ptr(), buf.as_ptr(), self.buf.len()) };
        FieldStorage { buf, ..*self }
    }
}

/// Borrowed description of a field's memory: base address of logical
/// element (0,0,0), byte strides and shape. Aliases the storage.
#[derive(Debug)]
pub struct BufferDescriptor<'a> {
    pub data: *mut u8,
    pub dtype: DType,
    pub shape: [usize; 3],
    /// Strides in bytes.
    pub strides: [usize; 3],
    pub read_only: bool,
    _storage: PhantomData<&'a mut FieldStorage>,
}

unsafe impl Send for BufferDescriptor<'_> {}

impl BufferDescriptor<'_> {
    fn byte_offset(&self, idx: [usize; 3]) -> usize {
        assert!((0..3).all(|a| idx[a] < self.shape[a]), "index {idx:?} out of bounds");
        (0..3).map(|a| idx[a] * self.strides[a]).sum()
    }

    pub fn read(&self, idx: [usize; 3]) -> f64 {
        let off = self.byte_offset(idx);
        // SAFETY: in bounds of the borrowed storage.
        unsafe {
            match self.dtype {
                DType::F64 => *(self.data.add(off) as *const f64),
                DType::F32 => *(self.data.add(off) as *const f32) as f64,
            }
        }
    }

    pub fn write(&mut self, idx: [usize; 3], v: f64) {
        assert!(!self.read_only, "descriptor is read-only");
        let off = self.byte_offset(idx);
        // SAFETY: in bounds of the exclusively borrowed storage.
        unsafe {
            match self.dtype {
                DType::F64 => *(self.data.add(off) as *mut f64) = v,
                DType::F32 => *(self.data.add(off) as *mut f32) = v as f32,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn allocate_with_halo() {
        let f = FieldStorage::allocate(DType::F64, [4, 4, 4], [1, 1, 0], &LayoutSpec::IJK, Fill::Zeros).unwrap();
        assert_eq!(f.shape(), [6, 6, 4]);
        assert_eq!(f.origin(), [1, 1, 0]);
        assert!(f.indices().all(|i| f.get(i) == 0.0));
    }

    #[test]
    fn innermost_axis_padding_follows_permutation() {
        let layout = LayoutSpec::new([2, 0, 1]).with_alignment(64);
        let f = FieldStorage::allocate(DType::F64, [3, 3, 3], [0, 0, 0], &layout, Fill::Zeros).unwrap();
        // axis 1 is innermost: 3 elements padded to 64/8 = 8
        assert_eq!(f.strides(), [8, 1, 24]);
    }

    #[test]
    fn negative_halo_rejected() {
        let r = FieldStorage::allocate(DType::F64, [3, 3, 3], [-1, 0, 0], &LayoutSpec::IJK, Fill::Zeros);
        assert!(matches!(r, Err(StorageError::InvalidLayout(_))));
    }

    #[test]
    fn bad_layouts_rejected() {
        for layout in [LayoutSpec::new([0, 0, 1]), LayoutSpec::new([0, 1, 3]), LayoutSpec::IJK.with_alignment(24)] {
            assert!(FieldStorage::allocate(DType::F64, [2, 2, 2], [0; 3], &layout, Fill::Zeros).is_err());
        }
        assert!(FieldStorage::allocate(DType::F64, [2, 2, 2], [0; 3], &LayoutSpec::IJK.with_alignment(4), Fill::Zeros)
            .is_err());
        assert!(FieldStorage::allocate(DType::F32, [2, 2, 2], [0; 3], &LayoutSpec::IJK.with_alignment(4), Fill::Zeros)
            .is_ok());
    }

    #[test]
    fn poison_fills_nan() {
        let f = FieldStorage::allocate(DType::F32, [2, 3, 4], [1, 1, 1], &LayoutSpec::KJI, Fill::Poison).unwrap();
        assert!(f.indices().all(|i| f.get(i).is_nan()));
    }

    #[test]
    fn descriptor_aliases_storage() {
        let mut f = FieldStorage::allocate(DType::F64, [3, 4, 5], [1, 0, 2], &LayoutSpec::KJI, Fill::Zeros).unwrap();
        let base = f.as_ptr();
        let strides = f.strides();
        {
            let mut d = f.export_descriptor();
            assert_eq!(d.data as *const u8, base);
            assert_eq!(d.strides, strides.map(|s| s * 8));
            d.write([2, 3, 4], 7.5);
        }
        assert_eq!(f.get([2, 3, 4]), 7.5);
        f.set([0, 1, 2], -1.0);
        assert_eq!(f.export_descriptor().read([0, 1, 2]), -1.0);
    }

    #[test]
    fn clone_is_deep() {
        let mut a = FieldStorage::allocate(DType::F64, [2, 2, 2], [0; 3], &LayoutSpec::IJK, Fill::Value(1.0)).unwrap();
        let b = a.clone();
        a.set([0, 0, 0], 5.0);
        assert_eq!(b.get([0, 0, 0]), 1.0);
        assert_eq!(b.strides(), a.strides());
    }

    fn layout_strategy() -> impl Strategy<Value = LayoutSpec> {
        let perms = prop::sample::select(vec![[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]]);
        let aligns = prop::sample::select(vec![8usize, 16, 32, 64, 128]);
        (perms, aligns).prop_map(|(p, a)| LayoutSpec::new(p).with_alignment(a))
    }

    proptest! {
        #[test]
        fn origin_element_is_aligned(
            layout in layout_strategy(),
            f32_ty in any::<bool>(),
            shape in prop::array::uniform3(1i64..9),
            halo in prop::array::uniform3(0i64..4),
        ) {
            let dtype = if f32_ty { DType::F32 } else { DType::F64 };
            let f = FieldStorage::allocate(dtype, shape, halo, &layout, Fill::Zeros).unwrap();
            prop_assert_eq!(f.origin_ptr() as usize % layout.alignment_bytes, 0);
        }

        #[test]
        fn logical_indexing_is_layout_invariant(
            layout in layout_strategy(),
            shape in prop::array::uniform3(1i64..7),
            probes in prop::collection::vec(prop::array::uniform3(0usize..64), 1000),
        ) {
            let mut f = FieldStorage::allocate(DType::F64, shape, [0; 3], &layout, Fill::Zeros).unwrap();
            let value = |i: [usize; 3]| (i[0] * 10000 + i[1] * 100 + i[2]) as f64;
            f.fill_with(value);
            let s = f.shape();
            let strides = f.strides();
            let base = f.as_ptr() as *const f64;
            for p in probes {
                let idx = [p[0] % s[0], p[1] % s[1], p[2] % s[2]];
                let lin = idx[0] * strides[0] + idx[1] * strides[1] + idx[2] * strides[2];
                // SAFETY: idx is within shape.
                let raw = unsafe { *base.add(lin) };
                prop_assert_eq!(raw, value(idx));
            }
        }
    }
}
