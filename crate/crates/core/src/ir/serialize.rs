//! Canonical byte encoding of IR trees.
//!
//! Spans are not encoded, so sources that differ only in layout or
//! comments serialize identically. Identifiers are encoded verbatim.

use super::{
    AxisAnchor, AxisBound, BinaryOp, DType, Expr, ExprKind, Extent, ExternalValue, Interval,
    Order, StencilDefinition, StencilImplementation, Stmt, UnaryOp,
};

/// Bumped whenever the encoding changes.
pub const SCHEMA_VERSION: u32 = 1;

const MAGIC_DEFINITION: &[u8; 4] = b"GTDI";
const MAGIC_IMPLEMENTATION: &[u8; 4] = b"GTII";

pub enum CanonicalNode<'a> {
    Definition(&'a StencilDefinition),
    Implementation(&'a StencilImplementation),
}

pub fn canonical_serialize(node: CanonicalNode<'_>) -> Vec<u8> {
    let mut w = Writer::default();
    match node {
        CanonicalNode::Definition(def) => w.definition(def),
        CanonicalNode::Implementation(imp) => w.implementation(imp),
    }
    w.buf
}

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn tag(&mut self, t: u8) {
        self.buf.push(t);
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn i64(&mut self, v: i64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_bits().to_le_bytes());
    }

    fn len(&mut self, n: usize) {
        self.buf.extend_from_slice(&(n as u64).to_le_bytes());
    }

    fn str(&mut self, s: &str) {
        self.len(s.len());
        self.buf.extend_from_slice(s.as_bytes());
    }

    fn header(&mut self, magic: &[u8; 4]) {
        self.buf.extend_from_slice(magic);
        self.u32(SCHEMA_VERSION);
    }

    fn dtype(&mut self, d: DType) {
        self.tag(match d {
            DType::F32 => 1,
            DType::F64 => 2,
        });
    }

    fn order(&mut self, o: Order) {
        self.tag(match o {
            Order::Parallel => 0,
            Order::Forward => 1,
            Order::Backward => 2,
        });
    }

    fn bound(&mut self, b: &AxisBound) {
        self.tag(match b.anchor {
            AxisAnchor::Start => 0,
            AxisAnchor::End => 1,
        });
        self.i64(b.offset);
    }

    fn interval(&mut self, i: &Interval) {
        self.bound(&i.start);
        self.bound(&i.end);
    }

    fn extent(&mut self, e: &Extent) {
        for v in e.lo.iter().chain(e.hi.iter()) {
            self.i64(*v);
        }
    }

    fn signature(&mut self, name: &str, fields: &[super::FieldDecl], scalars: &[super::ScalarDecl]) {
        self.str(name);
        self.len(fields.len());
        for f in fields {
            self.str(&f.name);
            self.dtype(f.dtype);
        }
        self.len(scalars.len());
        for s in scalars {
            self.str(&s.name);
            self.dtype(s.dtype);
        }
    }

    fn externals(&mut self, ext: &std::collections::BTreeMap<String, ExternalValue>) {
        self.len(ext.len());
        for (k, v) in ext {
            self.str(k);
            match v {
                ExternalValue::Int(i) => {
                    self.tag(0);
                    self.i64(*i);
                }
                ExternalValue::Float(f) => {
                    self.tag(1);
                    self.f64(*f);
                }
            }
        }
    }

    fn definition(&mut self, def: &StencilDefinition) {
        self.header(MAGIC_DEFINITION);
        self.signature(&def.name, &def.api_fields, &def.api_scalars);
        self.externals(&def.externals);
        self.len(def.computations.len());
        for comp in &def.computations {
            self.order(comp.order);
            self.len(comp.intervals.len());
            for block in &comp.intervals {
                self.interval(&block.interval);
                self.stmts(&block.body);
            }
        }
    }

    fn implementation(&mut self, imp: &StencilImplementation) {
        self.header(MAGIC_IMPLEMENTATION);
        self.signature(&imp.name, &imp.api_fields, &imp.api_scalars);
        self.externals(&imp.externals);
        self.i64(imp.k_min);
        self.len(imp.field_extents.len());
        for (name, e) in &imp.field_extents {
            self.str(name);
            self.extent(e);
        }
        self.len(imp.temporaries.len());
        for t in &imp.temporaries {
            self.str(&t.name);
            self.dtype(t.dtype);
            self.extent(&t.extent);
        }
        self.len(imp.multistages.len());
        for ms in &imp.multistages {
            self.order(ms.order);
            self.len(ms.stages.len());
            for stage in &ms.stages {
                self.interval(&stage.interval);
                self.extent(&stage.compute_extent);
                self.stmt(&stage.body);
            }
        }
    }

    fn stmts(&mut self, stmts: &[Stmt]) {
        self.len(stmts.len());
        for s in stmts {
            self.stmt(s);
        }
    }

    fn stmt(&mut self, s: &Stmt) {
        match s {
            Stmt::Assign { target, value } => {
                self.tag(0x10);
                self.str(&target.name);
                for v in target.offset.0 {
                    self.i64(v);
                }
                self.expr(value);
            }
            Stmt::If { cond, then_body, else_body, .. } => {
                self.tag(0x11);
                self.expr(cond);
                self.stmts(then_body);
                self.stmts(else_body);
            }
        }
    }

    fn expr(&mut self, e: &Expr) {
        match &e.kind {
            ExprKind::Field { name, offset } => {
                self.tag(0x20);
                self.str(name);
                for v in offset.0 {
                    self.i64(v);
                }
            }
            ExprKind::Scalar { name } => {
                self.tag(0x21);
                self.str(name);
            }
            ExprKind::Literal(v) => {
                self.tag(0x22);
                self.f64(*v);
            }
            ExprKind::Name(n) => {
                self.tag(0x23);
                self.str(n);
            }
            ExprKind::Unary { op, operand } => {
                self.tag(0x24);
                self.tag(match op {
                    UnaryOp::Neg => 0,
                    UnaryOp::Not => 1,
                });
                self.expr(operand);
            }
            ExprKind::Binary { op, lhs, rhs } => {
                self.tag(0x25);
                self.tag(binary_code(*op));
                self.expr(lhs);
                self.expr(rhs);
            }
            ExprKind::Call { func, args } => {
                self.tag(0x26);
                self.str(func);
                self.len(args.len());
                for a in args {
                    self.expr(a);
                }
            }
        }
    }
}

fn binary_code(op: BinaryOp) -> u8 {
    match op {
        BinaryOp::Add => 0,
        BinaryOp::Sub => 1,
        BinaryOp::Mul => 2,
        BinaryOp::Div => 3,
        BinaryOp::Lt => 4,
        BinaryOp::Le => 5,
        BinaryOp::Gt => 6,
        BinaryOp::Ge => 7,
        BinaryOp::Eq => 8,
        BinaryOp::Ne => 9,
        BinaryOp::And => 10,
        BinaryOp::Or => 11,
    }
}
