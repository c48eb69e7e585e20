//! C source emission.

use std::fmt::Write as _;

use crate::backends::FaultInjection;
use crate::ir::{
    AxisAnchor, AxisBound, BinaryOp, Builtin, DType, Expr, ExprKind, Extent, Fingerprint, Interval, Order, Stage,
    StencilImplementation, Stmt, UnaryOp,
};

pub fn entry_symbol(imp: &StencilImplementation, fp: &Fingerprint) -> String {
    format!("gts_run_{}_{}", imp.name, fp.short())
}

pub fn packed_symbol(imp: &StencilImplementation, fp: &Fingerprint) -> String {
    format!("gts_packed_{}_{}", imp.name, fp.short())
}

fn ctype(d: DType) -> &'static str {
    match d {
        DType::F32 => "float",
        DType::F64 => "double",
    }
}

/// Emits a self-contained C translation unit. Output is a pure function
/// of its arguments.
pub fn generate_source(imp: &StencilImplementation, fp: &Fingerprint, fault: Option<FaultInjection>) -> String {
    let g = Gen { imp, fault };
    let mut out = String::new();
    g.prelude(&mut out, fp);
    g.body_fn(&mut out);
    g.entry_fn(&mut out, fp);
    g.packed_fn(&mut out, fp);
    out
}

struct Gen<'a> {
    imp: &'a StencilImplementation,
    fault: Option<FaultInjection>,
}

enum Var<'a> {
    Field { name: &'a str, dtype: DType },
    Temp { name: &'a str, dtype: DType, extent: Extent },
}

impl Gen<'_> {
    fn var(&self, name: &str) -> Var<'_> {
        if let Some(f) = self.imp.api_fields.iter().find(|f| f.name == name) {
            Var::Field { name: &f.name, dtype: f.dtype }
        } else if let Some(t) = self.imp.temporary(name) {
            Var::Temp { name: &t.name, dtype: t.dtype, extent: t.extent }
        } else {
            panic!("unknown field `{name}` in implementation IR")
        }
    }

    fn prelude(&self, out: &mut String, fp: &Fingerprint) {
        let _ = writeln!(out, "/* stencil `{}`, fingerprint {} */", self.imp.name, fp.hex());
        out.push_str(
            "/* entry ABI: (int64 ni, nj, nk; per api field in declaration order: T* base,\n\
             \x20  int64 stride_i, stride_j, stride_k [elements], int64 origin_i, origin_j, origin_k;\n\
             \x20  per scalar in declaration order: double value) */\n",
        );
        out.push_str("#include <stdint.h>\n#include <stdlib.h>\n#include <math.h>\n\n");
        out.push_str("static inline double gts_min(double a, double b) { return a < b ? a : b; }\n");
        out.push_str("static inline double gts_max(double a, double b) { return a > b ? a : b; }\n");
        out.push_str(
            "static inline int64_t gts_clamp(int64_t v, int64_t lo, int64_t hi) { return v < lo ? lo : (v > hi ? hi : v); }\n\n",
        );
    }

    fn body_params(&self) -> Vec<String> {
        let mut p = vec!["const int64_t ni".to_string(), "const int64_t nj".into(), "const int64_t nk".into()];
        for f in &self.imp.api_fields {
            let n = &f.name;
            p.push(format!("{}* restrict f_{n}", ctype(f.dtype)));
            p.extend(["si", "sj", "sk"].map(|s| format!("const int64_t f_{n}_{s}")));
        }
        for s in &self.imp.api_scalars {
            p.push(format!("const double s_{}", s.name));
        }
        for t in &self.imp.temporaries {
            let n = &t.name;
            p.push(format!("{}* restrict t_{n}", ctype(t.dtype)));
            p.push(format!("const int64_t t_{n}_sj"));
            p.push(format!("const int64_t t_{n}_sk"));
        }
        p
    }

    fn body_fn(&self, out: &mut String) {
        out.push_str("static inline __attribute__((always_inline)) void gts_body(\n    ");
        out.push_str(&self.body_params().join(",\n    "));
        out.push_str(")\n{\n");
        for (m, ms) in self.imp.multistages.iter().enumerate() {
            let _ = writeln!(out, "    /* multistage {m}: {} */", ms.order.keyword());
            match ms.order {
                Order::Parallel => {
                    out.push_str("    for (int64_t k = 0; k < nk; ++k) {\n");
                    for (interval, stages) in ms.interval_groups() {
                        let guarded = interval != Interval::full();
                        let ind = if guarded { 8 } else { 4 };
                        if guarded {
                            let _ = writeln!(
                                out,
                                "        if (k >= {} && k < {}) {{",
                                bound(&interval.start),
                                bound(&interval.end)
                            );
                        }
                        for stage in stages {
                            self.stage(out, stage, ind + 4);
                        }
                        if guarded {
                            out.push_str("        }\n");
                        }
                    }
                    out.push_str("    }\n");
                }
                Order::Forward | Order::Backward => {
                    for (interval, stages) in ms.interval_groups() {
                        let lo = format!("gts_clamp({}, 0, nk)", bound(&interval.start));
                        let hi = format!("gts_clamp({}, 0, nk)", bound(&interval.end));
                        if ms.order == Order::Forward {
                            let _ = writeln!(out, "    for (int64_t k = {lo}; k < {hi}; ++k) {{");
                        } else {
                            let _ = writeln!(out, "    for (int64_t k = {hi} - 1; k >= {lo}; --k) {{");
                        }
                        for stage in stages {
                            self.stage(out, stage, 8);
                        }
                        out.push_str("    }\n");
                    }
                }
            }
        }
        out.push_str("}\n\n");
    }

    fn api_i_end(&self) -> &'static str {
        match self.fault {
            Some(FaultInjection::OffByOne) => "ni - 1",
            None => "ni",
        }
    }

    fn stage(&self, out: &mut String, stage: &Stage, ind: usize) {
        let pad = " ".repeat(ind);
        let e = stage.compute_extent;
        let writes_api_only = stage.body.targets().iter().all(|t| matches!(self.var(t), Var::Field { .. }));
        let i_end = if writes_api_only { self.api_i_end() } else { "ni" };
        let _ = writeln!(out, "{pad}for (int64_t j = {}; j < {}; ++j) {{", e.lo[1], plus("nj", e.hi[1]));
        let _ = writeln!(out, "{pad}    for (int64_t i = {}; i < {}; ++i) {{", e.lo[0], plus(i_end, e.hi[0]));
        self.stmt(out, &stage.body, stage, ind + 8);
        let _ = writeln!(out, "{pad}    }}");
        let _ = writeln!(out, "{pad}}}");
    }

    fn stmt(&self, out: &mut String, stmt: &Stmt, stage: &Stage, ind: usize) {
        let pad = " ".repeat(ind);
        match stmt {
            Stmt::Assign { target, value } => {
                let (dst, dtype, masked) = match self.var(&target.name) {
                    Var::Field { name, dtype } => (field_access(name, [0; 3]), dtype, !stage.compute_extent.is_zero()),
                    Var::Temp { name, dtype, extent } => (temp_access(name, &extent, [0; 3]), dtype, false),
                };
                let rhs = self.expr(value);
                let assign = match dtype {
                    DType::F64 => format!("{dst} = {rhs};"),
                    DType::F32 => format!("{dst} = (float)({rhs});"),
                };
                if masked {
                    let _ = writeln!(out, "{pad}if (i >= 0 && i < {} && j >= 0 && j < nj) {assign}", self.api_i_end());
                } else {
                    let _ = writeln!(out, "{pad}{assign}");
                }
            }
            Stmt::If { cond, then_body, else_body, .. } => {
                let _ = writeln!(out, "{pad}if ({} != 0.0) {{", self.expr(cond));
                for s in then_body {
                    self.stmt(out, s, stage, ind + 4);
                }
                if !else_body.is_empty() {
                    let _ = writeln!(out, "{pad}}} else {{");
                    for s in else_body {
                        self.stmt(out, s, stage, ind + 4);
                    }
                }
                let _ = writeln!(out, "{pad}}}");
            }
        }
    }

    fn expr(&self, e: &Expr) -> String {
        match &e.kind {
            ExprKind::Field { name, offset } => match self.var(name) {
                Var::Field { name, dtype } => widen(field_access(name, offset.0), dtype),
                Var::Temp { name, dtype, extent } => widen(temp_access(name, &extent, offset.0), dtype),
            },
            ExprKind::Scalar { name } => format!("s_{name}"),
            ExprKind::Literal(v) => literal(*v),
            ExprKind::Unary { op, operand } => {
                let a = self.expr(operand);
                match op {
                    UnaryOp::Neg => format!("(-{a})"),
                    UnaryOp::Not => format!("({a} == 0.0 ? 1.0 : 0.0)"),
                }
            }
            ExprKind::Binary { op, lhs, rhs } => {
                let a = self.expr(lhs);
                let b = self.expr(rhs);
                match op {
                    op if op.is_arithmetic() => format!("({a} {} {b})", op.symbol()),
                    BinaryOp::And => format!("({a} != 0.0 && {b} != 0.0 ? 1.0 : 0.0)"),
                    BinaryOp::Or => format!("({a} != 0.0 || {b} != 0.0 ? 1.0 : 0.0)"),
                    op => format!("({a} {} {b} ? 1.0 : 0.0)", op.symbol()),
                }
            }
            ExprKind::Call { func, args } => {
                let b = Builtin::from_name(func).unwrap_or_else(|| panic!("unresolved call `{func}`"));
                let args: Vec<String> = args.iter().map(|a| self.expr(a)).collect();
                let f = match b {
                    Builtin::Abs => "fabs",
                    Builtin::Min => "gts_min",
                    Builtin::Max => "gts_max",
                    Builtin::Sqrt => "sqrt",
                    Builtin::Exp => "exp",
                    Builtin::Log => "log",
                    Builtin::Pow => "pow",
                    Builtin::Floor => "floor",
                    Builtin::Ceil => "ceil",
                };
                format!("{f}({})", args.join(", "))
            }
            ExprKind::Name(n) => panic!("unbound name `{n}` reached code generation"),
        }
    }

    fn entry_fn(&self, out: &mut String, fp: &Fingerprint) {
        let mut params = vec!["int64_t ni".to_string(), "int64_t nj".into(), "int64_t nk".into()];
        for f in &self.imp.api_fields {
            let n = &f.name;
            params.push(format!("{}* f_{n}", ctype(f.dtype)));
            params.extend(["si", "sj", "sk", "oi", "oj", "ok"].map(|s| format!("int64_t f_{n}_{s}")));
        }
        for s in &self.imp.api_scalars {
            params.push(format!("double s_{}", s.name));
        }
        let _ = writeln!(out, "void {}(\n    {})\n{{", entry_symbol(self.imp, fp), params.join(",\n    "));
        out.push_str("    if (ni <= 0 || nj <= 0 || nk <= 0) return;\n");
        for f in &self.imp.api_fields {
            let n = &f.name;
            let _ = writeln!(out, "    f_{n} += f_{n}_oi * f_{n}_si + f_{n}_oj * f_{n}_sj + f_{n}_ok * f_{n}_sk;");
        }
        for t in &self.imp.temporaries {
            let n = &t.name;
            let e = t.extent;
            let _ = writeln!(out, "    const int64_t t_{n}_sj = {};", plus("ni", e.hi[0] - e.lo[0]));
            let _ = writeln!(out, "    const int64_t t_{n}_sk = t_{n}_sj * ({});", plus("nj", e.hi[1] - e.lo[1]));
            let ty = ctype(t.dtype);
            let _ = writeln!(out, "    {ty}* t_{n} = ({ty}*)malloc(sizeof({ty}) * (size_t)(t_{n}_sk * nk));");
            let _ = writeln!(out, "    if (!t_{n}) abort();");
        }
        let call = |unit: bool| {
            let mut args = vec!["ni".to_string(), "nj".into(), "nk".into()];
            for f in &self.imp.api_fields {
                let n = &f.name;
                args.push(format!("f_{n}"));
                args.push(if unit { "1".into() } else { format!("f_{n}_si") });
                args.push(format!("f_{n}_sj"));
                args.push(format!("f_{n}_sk"));
            }
            for s in &self.imp.api_scalars {
                args.push(format!("s_{}", s.name));
            }
            for t in &self.imp.temporaries {
                let n = &t.name;
                args.extend([format!("t_{n}"), format!("t_{n}_sj"), format!("t_{n}_sk")]);
            }
            format!("gts_body({})", args.join(", "))
        };
        let unit_cond: Vec<String> = self.imp.api_fields.iter().map(|f| format!("f_{}_si == 1", f.name)).collect();
        if unit_cond.is_empty() {
            let _ = writeln!(out, "    {};", call(true));
        } else {
            let _ = writeln!(out, "    if ({}) {{\n        {};\n    }} else {{\n        {};\n    }}", unit_cond.join(" && "), call(true), call(false));
        }
        for t in &self.imp.temporaries {
            let _ = writeln!(out, "    free(t_{});", t.name);
        }
        out.push_str("}\n\n");
    }

    fn packed_fn(&self, out: &mut String, fp: &Fingerprint) {
        let _ = writeln!(
            out,
            "void {}(const int64_t* dom, void* const* ptrs, const int64_t* meta, const double* scalars)\n{{",
            packed_symbol(self.imp, fp)
        );
        let mut args = vec!["dom[0]".to_string(), "dom[1]".into(), "dom[2]".into()];
        for (n, f) in self.imp.api_fields.iter().enumerate() {
            args.push(format!("({}*)ptrs[{n}]", ctype(f.dtype)));
            args.extend((0..6).map(|m| format!("meta[{}]", 6 * n + m)));
        }
        for n in 0..self.imp.api_scalars.len() {
            args.push(format!("scalars[{n}]"));
        }
        out.push_str("    (void)ptrs; (void)meta; (void)scalars;\n");
        let _ = writeln!(out, "    {}(\n        {});\n}}", entry_symbol(self.imp, fp), args.join(",\n        "));
    }
}

fn bound(b: &AxisBound) -> String {
    match b.anchor {
        AxisAnchor::Start => b.offset.to_string(),
        AxisAnchor::End => plus("nk", b.offset),
    }
}

fn plus(var: &str, c: i64) -> String {
    match c {
        0 => var.to_string(),
        c if c > 0 => format!("{var} + {c}"),
        c => format!("{var} - {}", -c),
    }
}

fn idx(var: &str, c: i64) -> String {
    match c {
        0 => var.to_string(),
        _ => format!("({})", plus(var, c)),
    }
}

fn field_access(name: &str, off: [i64; 3]) -> String {
    format!(
        "f_{name}[{i} * f_{name}_si + {j} * f_{name}_sj + {k} * f_{name}_sk]",
        i = idx("i", off[0]),
        j = idx("j", off[1]),
        k = idx("k", off[2])
    )
}

fn temp_access(name: &str, extent: &Extent, off: [i64; 3]) -> String {
    format!(
        "t_{name}[{i} + {j} * t_{name}_sj + {k} * t_{name}_sk]",
        i = idx("i", off[0] - extent.lo[0]),
        j = idx("j", off[1] - extent.lo[1]),
        k = idx("k", off[2])
    )
}

fn widen(access: String, dtype: DType) -> String {
    match dtype {
        DType::F64 => access,
        DType::F32 => format!("((double){access})"),
    }
}

fn literal(v: f64) -> String {
    if v.is_nan() {
        "NAN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "HUGE_VAL".into() } else { "(-HUGE_VAL)".into() }
    } else if v < 0.0 || (v == 0.0 && v.is_sign_negative()) {
        format!("({v:?})")
    } else {
        format!("{v:?}")
    }
}
