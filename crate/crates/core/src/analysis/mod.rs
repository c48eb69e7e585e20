//! Analysis pipeline: legality checks, interval normalization, temporary
//! discovery, extent inference and lowering to the implementation IR.

mod extents;
mod intervals;
mod temporaries;
mod validate;

pub use extents::{compute_extents, Extents};
pub use intervals::{interval_k_min, normalize_intervals};
pub use temporaries::{detect_temporaries, Temporary};
pub use validate::validate_semantics;

use crate::diagnostics::{has_errors, Diagnostic};
use crate::ir::{MultiStage, Stage, StencilDefinition, StencilImplementation, TempDecl};

/// Assembles the implementation IR: one multistage per computation and one
/// stage per top-level statement.
pub fn build_implementation(
    def: &StencilDefinition,
    extents: &Extents,
    temps: &[Temporary],
    k_min: i64,
) -> StencilImplementation {
    let stages = extents::stage_list(def);
    let multistages = def
        .computations
        .iter()
        .zip(stages)
        .enumerate()
        .map(|(ci, (comp, list))| MultiStage {
            order: comp.order,
            stages: list
                .into_iter()
                .enumerate()
                .map(|(si, (interval, stmt))| Stage {
                    interval,
                    body: stmt.clone(),
                    compute_extent: extents.stages[ci][si],
                })
                .collect(),
        })
        .collect();
    let temporaries = temps
        .iter()
        .map(|t| TempDecl {
            name: t.name.clone(),
            dtype: t.dtype,
            extent: extents.temporaries.get(&t.name).copied().unwrap_or_default(),
        })
        .collect();
    StencilImplementation {
        name: def.name.clone(),
        api_fields: def.api_fields.clone(),
        api_scalars: def.api_scalars.clone(),
        externals: def.externals.clone(),
        multistages,
        temporaries,
        field_extents: extents.fields.clone(),
        k_min,
    }
}

/// Runs every pass; error diagnostics abort lowering. Warnings are
/// returned alongside the implementation.
pub fn analyze(def: &StencilDefinition) -> Result<(StencilImplementation, Vec<Diagnostic>), Vec<Diagnostic>> {
    let diags = validate_semantics(def);
    if has_errors(&diags) {
        return Err(diags);
    }
    let (def, k_min) = normalize_intervals(def)?;
    let temps = detect_temporaries(&def, k_min)?;
    let extents = compute_extents(&def, k_min);
    Ok((build_implementation(&def, &extents, &temps, k_min), diags))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::DiagCode;
    use crate::frontend::{load_stencil, SourceProgram};
    use crate::ir::{Extent, Order};

    fn def(body: &str) -> StencilDefinition {
        let src = format!("stencil s(a: Field[f64], b: Field[f64], c: Field[f64], y: Field[f64], k: f64):\n{body}");
        load_stencil(&SourceProgram::new(src), "s", &Default::default()).unwrap()
    }

    fn codes(body: &str) -> Vec<DiagCode> {
        match analyze(&def(body)) {
            Ok(_) => vec![],
            Err(d) => d.into_iter().map(|d| d.code).collect(),
        }
    }

    fn lower(body: &str) -> StencilImplementation {
        analyze(&def(body)).unwrap_or_else(|d| panic!("{d:?}")).0
    }

    #[test]
    fn parallel_self_assignment_with_offset() {
        assert_eq!(codes("  with computation(PARALLEL):\n    a = a[1,0,0] + 1.0\n"), vec![DiagCode::ParallelSelfDependency]);
        assert!(codes("  with computation(PARALLEL):\n    a = a + 1.0\n").is_empty());
    }

    #[test]
    fn forward_level_carried_self_read_is_legal() {
        let body = "  with computation(FORWARD):\n    with interval(0, 1):\n      t = c\n    with interval(1, None):\n      t = t[0,0,-1] * c\n    with interval(0, None):\n      b = t\n";
        // third interval overlaps, so use a separate computation for the copy-out
        assert_eq!(codes(body), vec![DiagCode::OverlappingIntervals, DiagCode::OverlappingIntervals]);
        let body = "  with computation(FORWARD):\n    with interval(0, 1):\n      t = c\n      b = t\n    with interval(1, None):\n      t = t[0,0,-1] * c\n      b = t\n";
        assert!(codes(body).is_empty());
    }

    #[test]
    fn horizontal_self_read_rejected_in_any_order() {
        assert_eq!(codes("  with computation(FORWARD):\n    a = a[1,0,0]\n"), vec![DiagCode::SelfOffsetRead]);
    }

    #[test]
    fn forward_read_ahead_of_later_write() {
        assert_eq!(
            codes("  with computation(FORWARD):\n    b = y[0,0,1]\n    y = a\n"),
            vec![DiagCode::SequentialOrderRead]
        );
        assert_eq!(
            codes("  with computation(BACKWARD):\n    b = y[0,0,-1]\n    y = a\n"),
            vec![DiagCode::SequentialOrderRead]
        );
    }

    #[test]
    fn parallel_vertical_read_of_written_field() {
        assert_eq!(
            codes("  with computation(PARALLEL):\n    y = a\n    b = y[0,0,1]\n"),
            vec![DiagCode::ParallelVerticalRead]
        );
        assert!(codes("  with computation(PARALLEL):\n    y = a\n    b = y[1,0,0]\n").is_empty());
    }

    #[test]
    fn target_offset_and_scalar_target() {
        assert_eq!(codes("  with computation(PARALLEL):\n    b[1,0,0] = a\n"), vec![DiagCode::TargetOffset]);
        assert_eq!(codes("  with computation(PARALLEL):\n    k = a\n"), vec![DiagCode::ScalarAssignment]);
    }

    #[test]
    fn loop_carried_temporary_needs_zero_horizontal_offset() {
        let body = "  with computation(FORWARD):\n    with interval(0, 1):\n      u = a\n      t = a\n    with interval(1, None):\n      t = u[1,0,-1]\n      u = t\n  with computation(PARALLEL):\n    b = u\n";
        assert_eq!(codes(body), vec![DiagCode::LoopCarriedOffset]);
    }

    #[test]
    fn offset_read_of_field_assigned_in_same_if() {
        let body = "  with computation(PARALLEL):\n    if a > 0.0:\n      b = a\n      c = b[1,0,0]\n";
        assert_eq!(codes(body), vec![DiagCode::ConditionalOffsetRead]);
    }

    #[test]
    fn interval_errors() {
        assert_eq!(
            codes("  with computation(PARALLEL):\n    with interval(0, 2):\n      b = a\n    with interval(1, None):\n      b = a\n"),
            vec![DiagCode::OverlappingIntervals]
        );
        assert_eq!(
            codes("  with computation(FORWARD):\n    with interval(1, None):\n      b = a\n    with interval(0, 1):\n      b = a\n"),
            vec![DiagCode::IntervalOrderMismatch]
        );
        assert_eq!(codes("  with computation(PARALLEL):\n    with interval(3, 3):\n      b = a\n"), vec![DiagCode::EmptyInterval]);
    }

    #[test]
    fn k_min_from_intervals() {
        let imp = lower("  with computation(FORWARD):\n    with interval(0, 1):\n      b = a\n    with interval(1, None):\n      b = a\n");
        assert_eq!(imp.k_min, 1);
        let imp = lower("  with computation(PARALLEL):\n    with interval(0, 2):\n      b = a\n    with interval(2, -1):\n      b = a\n    with interval(-1, None):\n      b = a\n");
        assert_eq!(imp.k_min, 3);
    }

    #[test]
    fn use_before_define() {
        assert_eq!(codes("  with computation(PARALLEL):\n    y = tmp[1,0,0]\n"), vec![DiagCode::UseBeforeDefine]);
        // written only on the first level but read everywhere
        let body = "  with computation(PARALLEL):\n    with interval(0, 1):\n      t = a\n  with computation(PARALLEL):\n    b = t\n";
        assert_eq!(codes(body), vec![DiagCode::UseBeforeDefine]);
        // level-carried read with no seed level
        let body = "  with computation(FORWARD):\n    t = t[0,0,-1] + a\n    b = t\n";
        assert_eq!(codes(body), vec![DiagCode::UseBeforeDefine]);
    }

    #[test]
    fn copy_lowers_to_single_zero_extent_stage() {
        let imp = lower("  with computation(PARALLEL):\n    b = a\n");
        assert_eq!(imp.multistages.len(), 1);
        assert_eq!(imp.multistages[0].stages.len(), 1);
        assert!(imp.temporaries.is_empty());
        assert!(imp.field_extents.iter().all(|(_, e)| e.is_zero()));
    }

    #[test]
    fn laplacian_extent() {
        let imp = lower("  with computation(PARALLEL):\n    b = -4.0*a + a[1,0,0] + a[-1,0,0] + a[0,1,0] + a[0,-1,0]\n");
        assert_eq!(imp.field_extent("a").unwrap(), Extent::new([-1, -1, 0], [1, 1, 0]));
        assert_eq!(imp.field_extent("b").unwrap(), Extent::ZERO);
    }

    #[test]
    fn laplacian_of_laplacian_via_temporary() {
        let imp = lower(
            "  with computation(PARALLEL):\n    t = -4.0*a + a[1,0,0] + a[-1,0,0] + a[0,1,0] + a[0,-1,0]\n    b = -4.0*t + t[1,0,0] + t[-1,0,0] + t[0,1,0] + t[0,-1,0]\n",
        );
        assert_eq!(imp.field_extent("a").unwrap(), Extent::new([-2, -2, 0], [2, 2, 0]));
        assert_eq!(imp.temporary("t").unwrap().extent, Extent::new([-1, -1, 0], [1, 1, 0]));
        let stage_extents: Vec<Extent> = imp.multistages[0].stages.iter().map(|s| s.compute_extent).collect();
        assert_eq!(stage_extents, vec![Extent::new([-1, -1, 0], [1, 1, 0]), Extent::ZERO]);
    }

    #[test]
    fn two_computations_two_multistages_in_order() {
        let imp = lower("  with computation(FORWARD):\n    b = a\n  with computation(BACKWARD):\n    c = b\n");
        let orders: Vec<Order> = imp.multistages.iter().map(|m| m.order).collect();
        assert_eq!(orders, vec![Order::Forward, Order::Backward]);
    }

    #[test]
    fn vertical_extents_are_interval_aware() {
        let imp = lower(
            "  with computation(BACKWARD):\n    with interval(-1, None):\n      b = a\n    with interval(0, -1):\n      b = a - c * b[0,0,1] + y[0,0,-1]\n",
        );
        assert_eq!(imp.field_extent("b").unwrap(), Extent::ZERO);
        assert_eq!(imp.field_extent("y").unwrap(), Extent::new([0, 0, -1], [0, 0, 0]));
    }

    #[test]
    fn temporary_dtype_inference() {
        let src = "stencil s(a: Field[f32], b: Field[f32], c: Field[f64]):\n  with computation(PARALLEL):\n    t = a * 2.0\n    u = t + c\n    b = t + u\n";
        let d = load_stencil(&SourceProgram::new(src), "s", &Default::default()).unwrap();
        let imp = analyze(&d).unwrap().0;
        assert_eq!(imp.temporary("t").unwrap().dtype, crate::ir::DType::F32);
        assert_eq!(imp.temporary("u").unwrap().dtype, crate::ir::DType::F64);
    }

    #[test]
    fn lowering_is_deterministic() {
        use crate::ir::{canonical_serialize, CanonicalNode};
        let body = "  with computation(PARALLEL):\n    t = a[1,0,0] + a[0,-1,0]\n    b = t[-1,0,0] * k\n";
        let a = lower(body);
        let b = lower(body);
        assert_eq!(
            canonical_serialize(CanonicalNode::Implementation(&a)),
            canonical_serialize(CanonicalNode::Implementation(&b))
        );
    }
}
