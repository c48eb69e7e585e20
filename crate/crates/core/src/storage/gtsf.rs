//! GTSF: a little-endian, layout-portable binary field format.
//!
//! ```text
//! magic "GTSF" | version u32 | dtype u8 (1=f32, 2=f64) | 3 reserved bytes
//! shape u64 x3 | origin u64 x3 | elements in logical (i, j, k) row-major order
//! ```

use std::io::{self, Read, Write};

use super::{FieldStorage, Fill, LayoutSpec, StorageError};
use crate::ir::DType;

pub const GTSF_MAGIC: &[u8; 4] = b"GTSF";
pub const GTSF_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 6 * 8;

fn dtype_code(d: DType) -> u8 {
    match d {
        DType::F32 => 1,
        DType::F64 => 2,
    }
}

pub fn write_gtsf(field: &FieldStorage, sink: &mut impl Write) -> Result<(), StorageError> {
    let mut header = Vec::with_capacity(HEADER_LEN);
    header.extend_from_slice(GTSF_MAGIC);
    header.extend_from_slice(&GTSF_VERSION.to_le_bytes());
    header.extend_from_slice(&[dtype_code(field.dtype()), 0, 0, 0]);
    for v in field.shape().into_iter().chain(field.origin()) {
        header.extend_from_slice(&(v as u64).to_le_bytes());
    }
    sink.write_all(&header)?;

    let elem = field.dtype().size_bytes();
    let mut row = Vec::with_capacity(field.shape()[2] * elem);
    let [ni, nj, nk] = field.shape();
    for i in 0..ni {
        for j in 0..nj {
            row.clear();
            for k in 0..nk {
                let bits = field.get_bits([i, j, k]);
                match field.dtype() {
                    DType::F64 => row.extend_from_slice(&bits.to_le_bytes()),
                    DType::F32 => row.extend_from_slice(&(bits as u32).to_le_bytes()),
                }
            }
            sink.write_all(&row)?;
        }
    }
    Ok(())
}

/// Reads a field into the default (`k` innermost) layout.
pub fn read_gtsf(source: &mut impl Read) -> Result<FieldStorage, StorageError> {
    read_gtsf_with_layout(source, &LayoutSpec::default())
}

pub fn read_gtsf_with_layout(source: &mut impl Read, layout: &LayoutSpec) -> Result<FieldStorage, StorageError> {
    let mut header = [0u8; HEADER_LEN];
    read_exact(source, &mut header)?;
    if &header[0..4] != GTSF_MAGIC {
        return Err(StorageError::FormatError(format!("bad magic {:?}", String::from_utf8_lossy(&header[0..4]))));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != GTSF_VERSION {
        return Err(StorageError::FormatError(format!("unsupported version {version}")));
    }
    let dtype = match header[8] {
        1 => DType::F32,
        2 => DType::F64,
        c => return Err(StorageError::FormatError(format!("unknown dtype code {c}"))),
    };
    let word = |n: usize| u64::from_le_bytes(header[12 + 8 * n..20 + 8 * n].try_into().unwrap());
    let to_usize = |v: u64| usize::try_from(v).map_err(|_| StorageError::FormatError(format!("dimension {v} too large")));
    let shape = [to_usize(word(0))?, to_usize(word(1))?, to_usize(word(2))?];
    let origin = [to_usize(word(3))?, to_usize(word(4))?, to_usize(word(5))?];
    if shape.contains(&0) {
        return Err(StorageError::FormatError(format!("empty shape {shape:?}")));
    }
    if (0..3).any(|a| origin[a] >= shape[a]) {
        return Err(StorageError::FormatError(format!("origin {origin:?} outside shape {shape:?}")));
    }
    let mut field = FieldStorage::with_shape(dtype, shape, origin, layout, Fill::Zeros)?;

    let elem = dtype.size_bytes();
    let mut row = vec![0u8; shape[2] * elem];
    for i in 0..shape[0] {
        for j in 0..shape[1] {
            read_exact(source, &mut row)?;
            for (k, chunk) in row.chunks_exact(elem).enumerate() {
                let bits = match dtype {
                    DType::F64 => u64::from_le_bytes(chunk.try_into().unwrap()),
                    DType::F32 => u32::from_le_bytes(chunk.try_into().unwrap()) as u64,
                };
                field.set_bits([i, j, k], bits);
            }
        }
    }
    Ok(field)
}

fn read_exact(source: &mut impl Read, buf: &mut [u8]) -> Result<(), StorageError> {
    source.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => StorageError::TruncatedFile,
        _ => StorageError::Io(e),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn roundtrip(field: &FieldStorage, layout: &LayoutSpec) -> FieldStorage {
        let mut bytes = Vec::new();
        write_gtsf(field, &mut bytes).unwrap();
        read_gtsf_with_layout(&mut bytes.as_slice(), layout).unwrap()
    }

    #[test]
    fn bad_magic() {
        let f = FieldStorage::allocate(DType::F64, [2, 2, 2], [0; 3], &LayoutSpec::IJK, Fill::Zeros).unwrap();
        let mut bytes = Vec::new();
        write_gtsf(&f, &mut bytes).unwrap();
        bytes[0] = b'X';
        assert!(matches!(read_gtsf(&mut bytes.as_slice()), Err(StorageError::FormatError(_))));
    }

    #[test]
    fn bad_version_and_dtype() {
        let f = FieldStorage::allocate(DType::F32, [2, 2, 2], [0; 3], &LayoutSpec::IJK, Fill::Zeros).unwrap();
        let mut bytes = Vec::new();
        write_gtsf(&f, &mut bytes).unwrap();
        let mut v = bytes.clone();
        v[4] = 2;
        assert!(matches!(read_gtsf(&mut v.as_slice()), Err(StorageError::FormatError(_))));
        let mut d = bytes.clone();
        d[8] = 3;
        assert!(matches!(read_gtsf(&mut d.as_slice()), Err(StorageError::FormatError(_))));
    }

    #[test]
    fn truncated() {
        let f = FieldStorage::allocate(DType::F64, [2, 2, 2], [0; 3], &LayoutSpec::IJK, Fill::Zeros).unwrap();
        let mut bytes = Vec::new();
        write_gtsf(&f, &mut bytes).unwrap();
        for cut in [3, HEADER_LEN - 1, bytes.len() - 1] {
            assert!(matches!(read_gtsf(&mut &bytes[..cut]), Err(StorageError::TruncatedFile)));
        }
    }

    #[test]
    fn header_layout() {
        let f = FieldStorage::allocate(DType::F32, [1, 2, 3], [0, 1, 0], &LayoutSpec::KJI, Fill::Value(1.5)).unwrap();
        let mut bytes = Vec::new();
        write_gtsf(&f, &mut bytes).unwrap();
        assert_eq!(&bytes[0..4], b"GTSF");
        assert_eq!(bytes[4..8], 1u32.to_le_bytes());
        assert_eq!(bytes[8..12], [1, 0, 0, 0]);
        assert_eq!(bytes[12..20], 1u64.to_le_bytes());
        assert_eq!(bytes[20..28], 4u64.to_le_bytes());
        assert_eq!(bytes[28..36], 3u64.to_le_bytes());
        assert_eq!(bytes[44..52], 1u64.to_le_bytes());
        assert_eq!(bytes.len(), HEADER_LEN + 12 * 4);
        assert_eq!(bytes[HEADER_LEN..HEADER_LEN + 4], 1.5f32.to_le_bytes());
    }

    #[test]
    fn relayout_on_read() {
        let mut f = FieldStorage::allocate(DType::F64, [3, 4, 5], [1, 1, 1], &LayoutSpec::KJI, Fill::Zeros).unwrap();
        f.fill_with(|[i, j, k]| (i * 100 + j * 10 + k) as f64);
        let g = roundtrip(&f, &LayoutSpec::IJK);
        assert_ne!(f.strides(), g.strides());
        assert_eq!(g.origin(), f.origin());
        assert!(f.indices().all(|i| f.get(i) == g.get(i)));
    }

    proptest! {
        #[test]
        fn roundtrip_is_bit_exact(
            f32_ty in any::<bool>(),
            shape in prop::array::uniform3(1i64..6),
            halo in prop::array::uniform3(0i64..3),
            perm_in in 0usize..6,
            perm_out in 0usize..6,
            words in prop::collection::vec(any::<u64>(), 512),
        ) {
            let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
            let dtype = if f32_ty { DType::F32 } else { DType::F64 };
            let mut f = FieldStorage::allocate(dtype, shape, halo, &LayoutSpec::new(perms[perm_in]), Fill::Zeros).unwrap();
            let idx: Vec<_> = f.indices().collect();
            for (n, i) in idx.iter().enumerate() {
                f.set_bits(*i, words[n % words.len()]);
            }
            let g = roundtrip(&f, &LayoutSpec::new(perms[perm_out]));
            prop_assert_eq!(g.shape(), f.shape());
            prop_assert_eq!(g.origin(), f.origin());
            for i in idx {
                prop_assert_eq!(g.get_bits(i), f.get_bits(i));
            }
        }
    }
}
