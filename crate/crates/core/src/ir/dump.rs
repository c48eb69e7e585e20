//! Human-readable IR dumps used for golden tests and `gts compile --dump-ir`.
//!
//! Format (version 1): a `# gts-ir v1 <stage>` header line followed by an
//! indented tree, two spaces per level. Binary expressions are fully
//! parenthesized, field reads always print their offset and literals use
//! the shortest round-trip decimal form. Spans are omitted.

use std::fmt::Write;

use super::{Expr, ExprKind, StencilDefinition, StencilImplementation, Stmt, UnaryOp};

pub const DUMP_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IrStage {
    Definition,
    Implementation,
}

impl std::str::FromStr for IrStage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "definition" => Ok(IrStage::Definition),
            "implementation" => Ok(IrStage::Implementation),
            other => Err(format!("unknown IR stage `{other}` (expected definition or implementation)")),
        }
    }
}

pub fn dump_ir(def: &StencilDefinition, imp: Option<&StencilImplementation>, stage: IrStage) -> String {
    match (stage, imp) {
        (IrStage::Implementation, Some(imp)) => dump_implementation(imp),
        _ => dump_definition(def),
    }
}

pub fn dump_definition(def: &StencilDefinition) -> String {
    let mut out = String::new();
    writeln!(out, "# gts-ir v{DUMP_FORMAT_VERSION} definition").unwrap();
    writeln!(out, "stencil {}", def.name).unwrap();
    for f in &def.api_fields {
        writeln!(out, "  field {}: {}", f.name, f.dtype).unwrap();
    }
    for s in &def.api_scalars {
        writeln!(out, "  scalar {}: {}", s.name, s.dtype).unwrap();
    }
    for (k, v) in &def.externals {
        writeln!(out, "  external {k} = {v}").unwrap();
    }
    for comp in &def.computations {
        writeln!(out, "  computation {}", comp.order.keyword()).unwrap();
        for block in &comp.intervals {
            writeln!(out, "    interval {}", block.interval).unwrap();
            for s in &block.body {
                write_stmt(&mut out, s, 3);
            }
        }
    }
    out
}

pub fn dump_implementation(imp: &StencilImplementation) -> String {
    let mut out = String::new();
    writeln!(out, "# gts-ir v{DUMP_FORMAT_VERSION} implementation").unwrap();
    writeln!(out, "stencil {}", imp.name).unwrap();
    writeln!(out, "  k_min {}", imp.k_min).unwrap();
    for f in &imp.api_fields {
        let extent = imp.field_extent(&f.name).unwrap_or_default();
        writeln!(out, "  field {}: {} extent {}", f.name, f.dtype, extent).unwrap();
    }
    for s in &imp.api_scalars {
        writeln!(out, "  scalar {}: {}", s.name, s.dtype).unwrap();
    }
    for (k, v) in &imp.externals {
        writeln!(out, "  external {k} = {v}").unwrap();
    }
    for t in &imp.temporaries {
        writeln!(out, "  temporary {}: {} extent {}", t.name, t.dtype, t.extent).unwrap();
    }
    for (m, ms) in imp.multistages.iter().enumerate() {
        writeln!(out, "  multistage {m} {}", ms.order.keyword()).unwrap();
        for (s, stage) in ms.stages.iter().enumerate() {
            writeln!(out, "    stage {s} interval {} extent {}", stage.interval, stage.compute_extent).unwrap();
            write_stmt(&mut out, &stage.body, 3);
        }
    }
    out
}

fn write_stmt(out: &mut String, s: &Stmt, depth: usize) {
    let pad = "  ".repeat(depth);
    match s {
        Stmt::Assign { target, value } => {
            writeln!(out, "{pad}{}{} = {}", target.name, target.offset, fmt_expr(value)).unwrap();
        }
        Stmt::If { cond, then_body, else_body, .. } => {
            writeln!(out, "{pad}if {}", fmt_expr(cond)).unwrap();
            for t in then_body {
                write_stmt(out, t, depth + 1);
            }
            if !else_body.is_empty() {
                writeln!(out, "{pad}else").unwrap();
                for e in else_body {
                    write_stmt(out, e, depth + 1);
                }
            }
        }
    }
}

/// Formats an expression in the dump syntax.
pub fn fmt_expr(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Field { name, offset } => format!("{name}{offset}"),
        ExprKind::Scalar { name } => format!("${name}"),
        ExprKind::Literal(v) => format!("{v:?}"),
        ExprKind::Name(n) => format!("?{n}"),
        ExprKind::Unary { op: UnaryOp::Neg, operand } => format!("(-{})", fmt_expr(operand)),
        ExprKind::Unary { op: UnaryOp::Not, operand } => format!("(not {})", fmt_expr(operand)),
        ExprKind::Binary { op, lhs, rhs } => {
            format!("({} {} {})", fmt_expr(lhs), op.symbol(), fmt_expr(rhs))
        }
        ExprKind::Call { func, args } => {
            let args: Vec<String> = args.iter().map(fmt_expr).collect();
            format!("{func}({})", args.join(", "))
        }
    }
}
