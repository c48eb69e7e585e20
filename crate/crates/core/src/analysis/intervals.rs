//! Vertical interval normalization and the minimum vertical domain size.

use crate::diagnostics::{DiagCode, Diagnostic};
use crate::ir::{AxisAnchor, AxisBound, Interval, Order, StencilDefinition};

/// `slope * K + constant` for a bound evaluated at domain size `K`.
fn affine(b: &AxisBound) -> (i64, i64) {
    match b.anchor {
        AxisAnchor::Start => (0, b.offset),
        AxisAnchor::End => (1, b.offset),
    }
}

/// Smallest `K >= 1` such that `slope*K + c >= 0` holds for every larger
/// `K`, or `None` when it fails for all sufficiently large `K`.
fn min_k_nonneg(slope: i64, c: i64) -> Option<i64> {
    match slope {
        0 => (c >= 0).then_some(1),
        s if s > 0 => Some((-c).div_euclid(s).max(1)),
        _ => None,
    }
}

/// Minimum vertical size for which the interval lies within `[0, K]`
/// with `start <= end`.
pub fn interval_k_min(iv: &Interval) -> Result<i64, String> {
    let (ss, sc) = affine(&iv.start);
    let (es, ec) = affine(&iv.end);
    let len = (es - ss, ec - sc);
    if len.0 == 0 && len.1 <= 0 {
        return Err(format!("interval {iv} is empty for every domain size"));
    }
    if len.0 < 0 {
        return Err(format!("interval {iv} is empty for all sufficiently large domains"));
    }
    let constraints = [(ss, sc), len, (1 - es, -ec)];
    let mut k = 1;
    for (slope, c) in constraints {
        match min_k_nonneg(slope, c) {
            Some(v) => k = k.max(v),
            None => return Err(format!("interval {iv} falls outside the vertical axis for large domains")),
        }
    }
    Ok(k)
}

/// Past this many levels beyond `k_min`, comparisons between start- and
/// end-anchored bounds no longer change.
pub(crate) fn stable_horizon(intervals: &[Interval]) -> i64 {
    let max_off = intervals
        .iter()
        .flat_map(|iv| [iv.start.offset.abs(), iv.end.offset.abs()])
        .max()
        .unwrap_or(0);
    2 * max_off + 2
}

/// Checks interval well-formedness, disjointness and direction-consistent
/// listing order. Returns the minimum vertical size over all intervals.
pub fn normalize_intervals(def: &StencilDefinition) -> Result<(StencilDefinition, i64), Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let mut k_min = 1;
    for comp in &def.computations {
        for block in &comp.intervals {
            match interval_k_min(&block.interval) {
                Ok(k) => k_min = k_min.max(k),
                Err(msg) => diags.push(Diagnostic::error(DiagCode::EmptyInterval, block.span, msg)),
            }
        }
    }
    if !diags.is_empty() {
        return Err(diags);
    }

    for comp in &def.computations {
        let intervals: Vec<Interval> = comp.intervals.iter().map(|b| b.interval).collect();
        let horizon = stable_horizon(&intervals);
        'pairs: for a in 0..intervals.len() {
            for b in (a + 1)..intervals.len() {
                for nk in k_min..=k_min + horizon {
                    let (sa, ea) = intervals[a].resolve(nk);
                    let (sb, eb) = intervals[b].resolve(nk);
                    if sa >= ea || sb >= eb {
                        continue;
                    }
                    if sa < eb && sb < ea {
                        diags.push(Diagnostic::error(
                            DiagCode::OverlappingIntervals,
                            comp.intervals[b].span,
                            format!(
                                "interval {} overlaps interval {} (e.g. for {nk} vertical levels)",
                                intervals[b], intervals[a]
                            ),
                        ));
                        continue 'pairs;
                    }
                    let wrong = match comp.order {
                        Order::Forward => sb < sa,
                        Order::Backward => sb > sa,
                        Order::Parallel => false,
                    };
                    if wrong {
                        diags.push(Diagnostic::error(
                            DiagCode::IntervalOrderMismatch,
                            comp.intervals[b].span,
                            format!(
                                "intervals of a {} computation must be listed in iteration order; {} comes after {}",
                                comp.order.keyword(),
                                intervals[b],
                                intervals[a]
                            ),
                        ));
                        continue 'pairs;
                    }
                }
            }
        }
    }
    if diags.is_empty() {
        Ok((def.clone(), k_min))
    } else {
        Err(diags)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(s: Option<i64>, e: Option<i64>) -> Interval {
        Interval { start: AxisBound::from_source(s, false), end: AxisBound::from_source(e, true) }
    }

    /// Brute force: disjoint for every K in 1..=8 where both are in range.
    fn brute_disjoint(a: Interval, b: Interval, k_min: i64) -> bool {
        (k_min..=8).all(|nk| {
            let (sa, ea) = a.resolve(nk);
            let (sb, eb) = b.resolve(nk);
            sa >= ea || sb >= eb || ea <= sb || eb <= sa
        })
    }

    #[test]
    fn source_bounds_map_to_anchors() {
        assert_eq!(AxisBound::from_source(None, true), AxisBound::end(0));
        assert_eq!(AxisBound::from_source(Some(3), false), AxisBound::start(3));
        assert_eq!(AxisBound::from_source(Some(-1), true), AxisBound::end(-1));
    }

    #[test]
    fn seeded_split_needs_one_level() {
        assert_eq!(interval_k_min(&iv(Some(0), Some(1))).unwrap(), 1);
        assert_eq!(interval_k_min(&iv(Some(1), None)).unwrap(), 1);
    }

    #[test]
    fn negative_split_is_disjoint_with_k_min_one() {
        let a = iv(Some(0), Some(-1));
        let b = iv(Some(-1), None);
        let k = interval_k_min(&a).unwrap().max(interval_k_min(&b).unwrap());
        assert_eq!(k, 1);
        assert!(brute_disjoint(a, b, k));
    }

    #[test]
    fn start_bound_past_small_domain_raises_k_min() {
        assert_eq!(interval_k_min(&iv(Some(0), Some(3))).unwrap(), 3);
        assert_eq!(interval_k_min(&iv(Some(-2), None)).unwrap(), 2);
    }

    #[test]
    fn empty_intervals() {
        assert!(interval_k_min(&iv(Some(2), Some(1))).is_err());
        assert!(interval_k_min(&iv(Some(1), Some(1))).is_err());
        assert!(interval_k_min(&iv(Some(-1), Some(-2))).is_err());
        assert!(interval_k_min(&iv(Some(-1), Some(3))).is_err());
    }

    #[test]
    fn normalization_is_idempotent() {
        use crate::frontend::{load_stencil, SourceProgram};
        let src = SourceProgram::new(
            "stencil s(a: Field[f64], b: Field[f64]):\n  with computation(FORWARD):\n    with interval(0, 1):\n      b = a\n    with interval(1, None):\n      b = a * 2.0\n",
        );
        let def = load_stencil(&src, "s", &Default::default()).unwrap();
        let (once, k1) = normalize_intervals(&def).unwrap();
        let (twice, k2) = normalize_intervals(&once).unwrap();
        assert_eq!(once, twice);
        assert_eq!(k1, k2);
        assert_eq!(k1, 1);
    }
}
