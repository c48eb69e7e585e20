//! Per-call state shared by the interpreting engines.

use std::collections::HashMap;

use super::{FieldArg, KernelArgs};
use crate::ir::{DType, Extent, Stage, StencilImplementation};

enum TempData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

/// Api fields followed by freshly allocated, NaN-filled temporaries,
/// addressable by name.
pub(crate) struct Frame<'a> {
    pub fields: Vec<FieldArg>,
    pub slots: HashMap<&'a str, usize>,
    pub scalars: HashMap<&'a str, f64>,
    api_count: usize,
    _temps: Vec<TempData>,
}

impl<'a> Frame<'a> {
    pub fn new(imp: &'a StencilImplementation, args: &KernelArgs) -> Self {
        let [ni, nj, nk] = args.domain;
        let mut fields = args.fields.clone();
        let mut temps = Vec::new();
        for t in &imp.temporaries {
            let e = t.extent;
            let tni = e.span(0, ni);
            let tnj = e.span(1, nj);
            let len = tni * tnj * nk;
            let mut data = match t.dtype {
                DType::F32 => TempData::F32(vec![f32::NAN; len]),
                DType::F64 => TempData::F64(vec![f64::NAN; len]),
            };
            let ptr = match &mut data {
                TempData::F32(v) => v.as_mut_ptr() as *mut u8,
                TempData::F64(v) => v.as_mut_ptr() as *mut u8,
            };
            fields.push(FieldArg {
                ptr,
                dtype: t.dtype,
                strides: [(tnj * nk) as isize, nk as isize, 1],
                origin: [-e.lo[0] as isize, -e.lo[1] as isize, 0],
            });
            temps.push(data);
        }
        let slots = imp
            .api_fields
            .iter()
            .map(|f| f.name.as_str())
            .chain(imp.temporaries.iter().map(|t| t.name.as_str()))
            .enumerate()
            .map(|(n, name)| (name, n))
            .collect();
        let scalars = imp.api_scalars.iter().map(|s| s.name.as_str()).zip(args.scalars.iter().copied()).collect();
        Frame { fields, slots, scalars, api_count: imp.api_fields.len(), _temps: temps }
    }

    pub fn slot(&self, name: &str) -> usize {
        *self.slots.get(name).unwrap_or_else(|| panic!("unbound field `{name}`"))
    }

    pub fn scalar(&self, name: &str) -> f64 {
        *self.scalars.get(name).unwrap_or_else(|| panic!("unbound scalar `{name}`"))
    }

    /// Region an assignment to `slot` may write within `stage`: api fields
    /// only on the compute domain, temporaries on the whole stage extent.
    pub fn write_extent(&self, slot: usize, stage: &Stage) -> Extent {
        if slot < self.api_count {
            Extent::ZERO
        } else {
            stage.compute_extent
        }
    }
}

/// Horizontal iteration bounds of `extent` over an `ni x nj` domain.
pub(crate) fn horizontal_bounds(extent: &Extent, domain: [usize; 3]) -> [(isize, isize); 2] {
    [
        (extent.lo[0] as isize, domain[0] as isize + extent.hi[0] as isize),
        (extent.lo[1] as isize, domain[1] as isize + extent.hi[1] as isize),
    ]
}

pub(crate) fn in_extent(extent: &Extent, domain: [usize; 3], i: isize, j: isize) -> bool {
    let [(i0, i1), (j0, j1)] = horizontal_bounds(extent, domain);
    i >= i0 && i < i1 && j >= j0 && j < j1
}
