//! Backward extent propagation.

use std::collections::{HashMap, HashSet};

use crate::ir::{AxisAnchor, Extent, Interval, Offset, Order, StencilDefinition, Stmt};

#[derive(Debug, Clone, PartialEq)]
pub struct Extents {
    /// Access extent per api field, declaration order.
    pub fields: Vec<(String, Extent)>,
    /// Allocation extent per temporary (horizontal only).
    pub temporaries: HashMap<String, Extent>,
    /// Compute extent per stage: `stages[computation][statement]`.
    pub stages: Vec<Vec<Extent>>,
}

/// Stage-level view: (interval, top-level statement) in program order.
pub(crate) fn stage_list(def: &StencilDefinition) -> Vec<Vec<(Interval, &Stmt)>> {
    def.computations
        .iter()
        .map(|c| c.intervals.iter().flat_map(|b| b.body.iter().map(move |s| (b.interval, s))).collect())
        .collect()
}

/// Propagates required extents from outputs back to inputs.
///
/// Stages are visited in reverse program order. A stage writing only api
/// fields computes over the domain; a stage writing temporaries computes
/// over the union of what later readers require. Level-carried reads in
/// sequential computations are fed back until a fixpoint.
pub fn compute_extents(def: &StencilDefinition, k_min: i64) -> Extents {
    let stages = stage_list(def);
    let is_api = |n: &str| def.field(n).is_some();
    let mut required: HashMap<String, Extent> = HashMap::new();
    let mut stage_extents: Vec<Vec<Extent>> = stages.iter().map(|s| vec![Extent::ZERO; s.len()]).collect();

    for (ci, comp_stages) in stages.iter().enumerate().rev() {
        let order = def.computations[ci].order;
        let written: HashSet<&str> = comp_stages.iter().flat_map(|(_, s)| s.targets()).collect();
        let entry = required.clone();
        let mut carried: HashMap<String, Extent> = HashMap::new();
        for _ in 0..64 {
            let mut req = entry.clone();
            for (name, e) in &carried {
                merge(&mut req, name, *e);
            }
            for (si, (_, stmt)) in comp_stages.iter().enumerate().rev() {
                let ext = stmt
                    .targets()
                    .iter()
                    .filter(|t| !is_api(t))
                    .fold(Extent::ZERO, |acc, t| acc.union(&req.get(*t).copied().unwrap_or_default()));
                stage_extents[ci][si] = ext;
                for (name, off, _) in stmt.field_reads() {
                    merge(&mut req, name, ext.shift(off).horizontal());
                }
            }
            let mut grown = false;
            if order.is_sequential() {
                for (si, (_, stmt)) in comp_stages.iter().enumerate() {
                    let ext = stage_extents[ci][si];
                    for (name, off, _) in stmt.field_reads() {
                        let behind = if order == Order::Forward { off.k() < 0 } else { off.k() > 0 };
                        if behind && written.contains(name) {
                            let need = ext.shift(off).horizontal();
                            let have = carried.get(name).copied().unwrap_or_default();
                            if !have.contains(&need) {
                                carried.insert(name.to_string(), have.union(&need));
                                grown = true;
                            }
                        }
                    }
                }
            }
            required = req;
            if !grown {
                break;
            }
        }
    }

    let mut vertical: HashMap<&str, (i64, i64)> = HashMap::new();
    for comp_stages in &stages {
        for (interval, stmt) in comp_stages {
            for (name, off, _) in stmt.field_reads() {
                if is_api(name) {
                    let (lo, hi) = vertical_reach(interval, off, k_min);
                    let e = vertical.entry(name).or_insert((0, 0));
                    e.0 = e.0.min(lo);
                    e.1 = e.1.max(hi);
                }
            }
        }
    }

    let fields = def
        .api_fields
        .iter()
        .map(|f| {
            let h = required.get(&f.name).copied().unwrap_or_default();
            let (lo_k, hi_k) = vertical.get(f.name.as_str()).copied().unwrap_or((0, 0));
            (f.name.clone(), Extent::new([h.lo[0], h.lo[1], lo_k], [h.hi[0], h.hi[1], hi_k]))
        })
        .collect();

    let mut temporaries: HashMap<String, Extent> = HashMap::new();
    for (ci, comp_stages) in stages.iter().enumerate() {
        for (si, (_, stmt)) in comp_stages.iter().enumerate() {
            for t in stmt.targets() {
                if !is_api(t) {
                    let e = stage_extents[ci][si].union(&required.get(t).copied().unwrap_or_default());
                    merge(&mut temporaries, t, e.horizontal());
                }
            }
        }
    }

    Extents { fields, temporaries, stages: stage_extents }
}

fn merge(map: &mut HashMap<String, Extent>, name: &str, e: Extent) {
    map.entry(name.to_string()).and_modify(|x| *x = x.union(&e)).or_insert(e);
}

/// Vertical levels read relative to `[0, K)` by a read at `off` inside
/// `interval`, worst case over all `K >= k_min`.
fn vertical_reach(interval: &Interval, off: Offset, k_min: i64) -> (i64, i64) {
    let dk = off.k();
    let lowest = match interval.start.anchor {
        AxisAnchor::Start => interval.start.offset + dk,
        AxisAnchor::End => k_min + interval.start.offset + dk,
    };
    // highest level read minus (K - 1)
    let highest = match interval.end.anchor {
        AxisAnchor::End => interval.end.offset + dk,
        AxisAnchor::Start => interval.end.offset + dk - k_min,
    };
    (lowest.min(0), highest.max(0))
}
