mod common;

use common::*;
use stencil_forge::backends::BackendId;
use stencil_forge::ir::DType;
use stencil_forge::kernels;
use stencil_forge::runtime::{InvocationArgs, RuntimeError};
use stencil_forge::storage::{FieldStorage, Fill, LayoutSpec};

const LAPLACIAN: &str = "\
stencil laplacian(inp: Field[f64], out: Field[f64]):
    with computation(PARALLEL):
        with interval(0, None):
            out = -4.0 * inp + inp[-1,0,0] + inp[1,0,0] + inp[0,-1,0] + inp[0,1,0]
";

const TWO_ENDS: &str = "\
stencil two_ends(inp: Field[f64], out: Field[f64]):
    with computation(FORWARD):
        with interval(0, 2):
            out = inp
        with interval(2, None):
            out = out[0,0,-1] + inp
";

fn field(shape: [usize; 3], origin: [usize; 3], layout: &LayoutSpec, value: impl Fn([usize; 3]) -> f64) -> FieldStorage {
    let mut f = FieldStorage::with_shape(DType::F64, shape, origin, layout, Fill::Zeros).unwrap();
    f.fill_with(value);
    f
}

#[test]
fn laplacian_default_domain_is_the_tightest_fit() {
    let s = compile(LAPLACIAN, "laplacian", BackendId::Debug);
    let layout = LayoutSpec::IJK;
    let mut inp = field([10, 10, 5], [1, 1, 0], &layout, |[i, j, k]| (i * i + 3 * j + k) as f64);
    let mut out = field([8, 8, 5], [0, 0, 0], &layout, |_| f64::NAN);
    let mut args = InvocationArgs::new().field("inp", &mut inp).field("out", &mut out);
    let (domain, origins) = s.resolve_domain_origin(&args).unwrap();
    assert_eq!(domain, [8, 8, 5]);
    assert_eq!(origins["inp"], [1, 1, 0]);
    assert_eq!(origins["out"], [0, 0, 0]);
    s.invoke(&mut args).unwrap();
    // Every output point was written, and to the discrete Laplacian of i^2 + 3j + k.
    for idx in out.indices() {
        assert_eq!(out.get(idx), 2.0, "at {idx:?}");
    }
}

#[test]
fn copy_with_equal_shapes_covers_everything() {
    let s = compile(kernels::COPY, "copy", BackendId::Debug);
    assert!(s.field_extent("a").unwrap().is_zero());
    assert!(s.field_extent("b").unwrap().is_zero());
    let mut a = field([6, 6, 6], [0; 3], &LayoutSpec::IJK, |[i, j, k]| (i + 10 * j + 100 * k) as f64);
    let mut b = field([6, 6, 6], [0; 3], &LayoutSpec::IJK, |_| 0.0);
    let mut args = InvocationArgs::new().field("a", &mut a).field("b", &mut b);
    assert_eq!(s.resolve_domain_origin(&args).unwrap().0, [6, 6, 6]);
    s.invoke(&mut args).unwrap();
    assert!(a.indices().all(|idx| a.get_bits(idx) == b.get_bits(idx)));
}

#[test]
fn vertical_minimum_is_enforced() {
    let s = compile(TWO_ENDS, "two_ends", BackendId::Debug);
    assert_eq!(s.k_min(), 2);
    let mut inp = field([3, 3, 1], [0; 3], &LayoutSpec::IJK, |_| 1.0);
    let mut out = field([3, 3, 1], [0; 3], &LayoutSpec::IJK, |_| 0.0);
    let mut args = InvocationArgs::new().field("inp", &mut inp).field("out", &mut out);
    assert_eq!(s.invoke(&mut args).unwrap_err(), RuntimeError::KBelowMinimum { nk: 1, k_min: 2 });
}

#[test]
fn zero_sized_domain_is_rejected() {
    let s = compile(kernels::COPY, "copy", BackendId::Vec);
    let mut a = field([4, 4, 4], [0; 3], &LayoutSpec::IJK, |_| 1.0);
    let mut b = field([4, 4, 4], [0; 3], &LayoutSpec::IJK, |_| 0.0);
    let mut args = InvocationArgs::new().field("a", &mut a).field("b", &mut b).domain([0, 4, 4]);
    assert!(matches!(s.invoke(&mut args), Err(RuntimeError::DomainTooSmall(_))));
}

#[test]
fn undersized_field_names_the_binding_constraint() {
    let s = compile(LAPLACIAN, "laplacian", BackendId::Debug);
    let mut inp = field([2, 10, 3], [0; 3], &LayoutSpec::IJK, |_| 1.0);
    let mut out = field([10, 10, 3], [0; 3], &LayoutSpec::IJK, |_| 0.0);
    let mut args = InvocationArgs::new().field("inp", &mut inp).field("out", &mut out);
    match s.invoke(&mut args) {
        Err(RuntimeError::DomainTooSmall(msg)) => assert!(msg.contains("inp"), "{msg}"),
        Err(RuntimeError::OutOfBounds { field, .. }) => assert_eq!(field, "inp"),
        other => panic!("unexpected {other:?}"),
    }
    // An explicit domain that overruns a field.
    let mut inp = field([10, 10, 3], [1, 1, 0], &LayoutSpec::IJK, |_| 1.0);
    let mut args = InvocationArgs::new().field("inp", &mut inp).field("out", &mut out).domain([9, 8, 3]);
    assert!(matches!(s.invoke(&mut args), Err(RuntimeError::OutOfBounds { .. })));
}

#[test]
fn wrong_layout_for_gen_is_reported() {
    let s = compile(kernels::COPY, "copy", BackendId::Gen);
    let mut a = field([4, 4, 4], [0; 3], &LayoutSpec::IJK, |_| 1.0);
    let mut b = field([4, 4, 4], [0; 3], &LayoutSpec::KJI, |_| 0.0);
    let mut args = InvocationArgs::new().field("a", &mut a).field("b", &mut b);
    assert_eq!(
        s.invoke(&mut args).unwrap_err(),
        RuntimeError::LayoutMismatch { field: "a".into(), expected: [2, 1, 0], found: [0, 1, 2] }
    );
}

#[test]
fn wrong_dtype_is_reported() {
    let s = compile(kernels::COPY, "copy", BackendId::Debug);
    let mut a = FieldStorage::with_shape(DType::F32, [4, 4, 4], [0; 3], &LayoutSpec::IJK, Fill::Zeros).unwrap();
    let mut b = field([4, 4, 4], [0; 3], &LayoutSpec::IJK, |_| 0.0);
    let mut args = InvocationArgs::new().field("a", &mut a).field("b", &mut b);
    assert_eq!(
        s.invoke(&mut args).unwrap_err(),
        RuntimeError::DTypeMismatch { field: "a".into(), expected: DType::F64, found: DType::F32 }
    );
}

#[test]
fn argument_names_must_match_the_signature() {
    let s = compile(kernels::HDIFF, "hdiff", BackendId::Debug);
    let mut inp = s.allocate_field("inp", [4, 4, 2], Fill::Zeros).unwrap();
    let mut out = s.allocate_field("out", [4, 4, 2], Fill::Zeros).unwrap();
    let mut args = InvocationArgs::new().field("inp", &mut inp).field("out", &mut out);
    assert_eq!(s.invoke(&mut args).unwrap_err(), RuntimeError::MissingArgument("coeff".into()));
    let mut args = args.scalar("coeff", 0.1).scalar("alpha", 1.0);
    assert_eq!(s.invoke(&mut args).unwrap_err(), RuntimeError::UnexpectedArgument("alpha".into()));
}

#[test]
fn explicit_defaults_and_input_purity() {
    for backend in BackendId::ALL {
        let s = compile(kernels::HDIFF, "hdiff", backend);
        let mut inp = s.allocate_field("inp", [9, 7, 3], Fill::Zeros).unwrap();
        inp.fill_with(|[i, j, k]| ((i * 7 + j * 3 + k) % 5) as f64 * 0.3);
        let before = inp.clone();
        let mut out_a = s.allocate_field("out", [9, 7, 3], Fill::Zeros).unwrap();
        let mut out_b = out_a.clone();
        let (domain, origins) = {
            let args = InvocationArgs::new().field("inp", &mut inp).field("out", &mut out_a).scalar("coeff", 0.2);
            s.resolve_domain_origin(&args).unwrap()
        };
        s.invoke(&mut InvocationArgs::new().field("inp", &mut inp).field("out", &mut out_a).scalar("coeff", 0.2))
            .unwrap();
        let mut explicit = InvocationArgs::new()
            .field("inp", &mut inp)
            .field("out", &mut out_b)
            .scalar("coeff", 0.2)
            .domain(domain)
            .field_origin("inp", origins["inp"])
            .field_origin("out", origins["out"]);
        s.invoke(&mut explicit).unwrap();
        assert!(out_a.indices().all(|idx| out_a.get_bits(idx) == out_b.get_bits(idx)), "{backend}");
        assert!(inp.indices().all(|idx| inp.get_bits(idx) == before.get_bits(idx)), "{backend}");
    }
}

#[test]
fn unknown_backend_lists_supported_ones() {
    let err = "gtcuda".parse::<BackendId>().unwrap_err().to_string();
    assert!(err.contains("gtcuda") && err.contains("debug, vec, gen"), "{err}");
}

#[test]
fn skip_policy_reports_no_validation_time() {
    use stencil_forge::runtime::ValidationPolicy;
    let mut s = compile(kernels::HDIFF, "hdiff", BackendId::Gen);
    let mut inp = s.allocate_field("inp", [16, 16, 4], Fill::Zeros).unwrap();
    inp.fill_with(|[i, j, k]| (i as f64).sin() + (j * k) as f64);
    let mut out_full = s.allocate_field("out", [16, 16, 4], Fill::Zeros).unwrap();
    let mut out_skip = out_full.clone();
    let full = s.invoke(&mut InvocationArgs::new().field("inp", &mut inp).field("out", &mut out_full).scalar("coeff", 0.1)).unwrap();
    assert!(full.validation_ns > 0 && full.kernel_ns <= full.total_ns);
    // SAFETY: the fields were allocated for this stencil.
    unsafe { s.set_validation_policy(ValidationPolicy::Skip) };
    let skip = s.invoke(&mut InvocationArgs::new().field("inp", &mut inp).field("out", &mut out_skip).scalar("coeff", 0.1)).unwrap();
    assert_eq!(skip.validation_ns, 0);
    assert!(out_full.indices().all(|idx| out_full.get_bits(idx) == out_skip.get_bits(idx)));
}

#[test]
fn exported_descriptor_aliases_the_storage() {
    let s = compile(kernels::COPY, "copy", BackendId::Vec);
    let mut a = s.allocate_field("a", [3, 4, 5], Fill::Zeros).unwrap();
    a.fill_with(|[i, j, k]| (i * 100 + j * 10 + k) as f64);
    let mut b = s.allocate_field("b", [3, 4, 5], Fill::Zeros).unwrap();
    let base = b.as_ptr();
    s.invoke(&mut InvocationArgs::new().field("a", &mut a).field("b", &mut b)).unwrap();
    let desc = b.export_descriptor();
    assert_eq!(desc.data as *const u8, base);
    assert_eq!(desc.read([2, 3, 4]), 234.0);
}
