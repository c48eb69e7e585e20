//! Bulk engine: every expression node is evaluated over a whole region
//! (a full level range for PARALLEL stages, one plane otherwise) before
//! the next node, like array programming with shifted views.

use super::frame::{horizontal_bounds, Frame};
use super::{schedule, truth, BackendId, Executable, FieldArg, KernelArgs};
use crate::ir::{BinaryOp, Builtin, DType, Expr, ExprKind, Extent, Offset, Stage, StencilImplementation, Stmt, UnaryOp};

pub struct VecExecutable {
    imp: StencilImplementation,
}

impl VecExecutable {
    pub fn new(imp: StencilImplementation) -> Self {
        VecExecutable { imp }
    }
}

impl Executable for VecExecutable {
    fn backend(&self) -> BackendId {
        BackendId::Vec
    }

    unsafe fn run(&self, args: &KernelArgs) {
        if args.domain.contains(&0) {
            return;
        }
        let frame = Frame::new(&self.imp, args);
        schedule(&self.imp, args.domain[2], |stage, k0, k1| {
            let [(i0, i1), (j0, j1)] = horizontal_bounds(&stage.compute_extent, args.domain);
            let region = Region { i: (i0, i1), j: (j0, j1), k: (k0, k1) };
            let ctx = Ctx { frame: &frame, region, stage, domain: args.domain };
            ctx.stmt(&stage.body, None);
        });
    }
}

#[derive(Clone, Copy)]
struct Region {
    i: (isize, isize),
    j: (isize, isize),
    k: (isize, isize),
}

impl Region {
    fn len(&self) -> usize {
        ((self.i.1 - self.i.0) * (self.j.1 - self.j.0) * (self.k.1 - self.k.0)) as usize
    }
}

enum Operand {
    Const(f64),
    Array(Vec<f64>),
}

struct Ctx<'a> {
    frame: &'a Frame<'a>,
    region: Region,
    stage: &'a Stage,
    domain: [usize; 3],
}

impl Ctx<'_> {
    unsafe fn stmt(&self, stmt: &Stmt, mask: Option<&[bool]>) {
        match stmt {
            Stmt::Assign { target, value } => {
                let slot = self.frame.slot(&target.name);
                let values = self.eval(value);
                let extent = self.frame.write_extent(slot, self.stage);
                self.scatter(self.frame.fields[slot], &values, mask, &extent);
            }
            Stmt::If { cond, then_body, else_body, .. } => {
                let c = self.eval(cond);
                let n = self.region.len();
                let parent = |idx: usize| mask.is_none_or(|m| m[idx]);
                let truthy = |idx: usize| match &c {
                    Operand::Const(v) => *v != 0.0,
                    Operand::Array(a) => a[idx] != 0.0,
                };
                let then_mask: Vec<bool> = (0..n).map(|x| parent(x) && truthy(x)).collect();
                let else_mask: Vec<bool> = (0..n).map(|x| parent(x) && !truthy(x)).collect();
                for s in then_body {
                    self.stmt(s, Some(&then_mask));
                }
                for s in else_body {
                    self.stmt(s, Some(&else_mask));
                }
            }
        }
    }

    unsafe fn scatter(&self, dst: FieldArg, values: &Operand, mask: Option<&[bool]>, extent: &Extent) {
        let [(wi0, wi1), (wj0, wj1)] = horizontal_bounds(extent, self.domain);
        let r = self.region;
        let mut idx = 0;
        for i in r.i.0..r.i.1 {
            for j in r.j.0..r.j.1 {
                let inside = i >= wi0 && i < wi1 && j >= wj0 && j < wj1;
                for k in r.k.0..r.k.1 {
                    if inside && mask.is_none_or(|m| m[idx]) {
                        let v = match values {
                            Operand::Const(c) => *c,
                            Operand::Array(a) => a[idx],
                        };
                        dst.store(i, j, k, v);
                    }
                    idx += 1;
                }
            }
        }
    }

    unsafe fn gather(&self, src: FieldArg, offset: Offset) -> Vec<f64> {
        let r = self.region;
        let [di, dj, dk] = offset.0.map(|d| d as isize);
        let nk = (r.k.1 - r.k.0) as usize;
        let sk = src.strides[2];
        let mut out = Vec::with_capacity(r.len());
        for i in r.i.0..r.i.1 {
            for j in r.j.0..r.j.1 {
                let base = src.index(i + di, j + dj, r.k.0 + dk);
                match src.dtype {
                    DType::F64 => {
                        let p = (src.ptr as *const f64).offset(base);
                        out.extend((0..nk).map(|k| *p.offset(k as isize * sk)));
                    }
                    DType::F32 => {
                        let p = (src.ptr as *const f32).offset(base);
                        out.extend((0..nk).map(|k| *p.offset(k as isize * sk) as f64));
                    }
                }
            }
        }
        out
    }

    unsafe fn eval(&self, e: &Expr) -> Operand {
        match &e.kind {
            ExprKind::Field { name, offset } => Operand::Array(self.gather(self.frame.fields[self.frame.slot(name)], *offset)),
            ExprKind::Scalar { name } => Operand::Const(self.frame.scalar(name)),
            ExprKind::Literal(v) => Operand::Const(*v),
            ExprKind::Unary { op, operand } => {
                let a = self.eval(operand);
                match op {
                    UnaryOp::Neg => map(a, |x| -x),
                    UnaryOp::Not => map(a, |x| truth(x == 0.0)),
                }
            }
            ExprKind::Binary { op, lhs, rhs } => binary(*op, self.eval(lhs), self.eval(rhs)),
            ExprKind::Call { func, args } => {
                let b = Builtin::from_name(func).unwrap_or_else(|| panic!("unresolved call `{func}`"));
                let mut values: Vec<Operand> = args.iter().map(|a| self.eval(a)).collect();
                match b {
                    Builtin::Abs => map(values.remove(0), f64::abs),
                    Builtin::Sqrt => map(values.remove(0), f64::sqrt),
                    Builtin::Exp => map(values.remove(0), f64::exp),
                    Builtin::Log => map(values.remove(0), f64::ln),
                    Builtin::Floor => map(values.remove(0), f64::floor),
                    Builtin::Ceil => map(values.remove(0), f64::ceil),
                    Builtin::Min | Builtin::Max | Builtin::Pow => {
                        let y = values.pop().unwrap();
                        let x = values.pop().unwrap();
                        zip(x, y, move |a, c| b.apply(&[a, c]))
                    }
                }
            }
            ExprKind::Name(n) => panic!("unbound name `{n}` reached the bulk engine"),
        }
    }
}

fn map(a: Operand, f: impl Fn(f64) -> f64) -> Operand {
    match a {
        Operand::Const(c) => Operand::Const(f(c)),
        Operand::Array(mut v) => {
            v.iter_mut().for_each(|x| *x = f(*x));
            Operand::Array(v)
        }
    }
}

fn zip(a: Operand, b: Operand, f: impl Fn(f64, f64) -> f64) -> Operand {
    match (a, b) {
        (Operand::Const(x), Operand::Const(y)) => Operand::Const(f(x, y)),
        (Operand::Array(mut v), Operand::Const(y)) => {
            v.iter_mut().for_each(|x| *x = f(*x, y));
            Operand::Array(v)
        }
        (Operand::Const(x), Operand::Array(mut w)) => {
            w.iter_mut().for_each(|y| *y = f(x, *y));
            Operand::Array(w)
        }
        (Operand::Array(mut v), Operand::Array(w)) => {
            v.iter_mut().zip(&w).for_each(|(x, y)| *x = f(*x, *y));
            Operand::Array(v)
        }
    }
}

fn binary(op: BinaryOp, a: Operand, b: Operand) -> Operand {
    match op {
        BinaryOp::Add => zip(a, b, |x, y| x + y),
        BinaryOp::Sub => zip(a, b, |x, y| x - y),
        BinaryOp::Mul => zip(a, b, |x, y| x * y),
        BinaryOp::Div => zip(a, b, |x, y| x / y),
        BinaryOp::Lt => zip(a, b, |x, y| truth(x < y)),
        BinaryOp::Le => zip(a, b, |x, y| truth(x <= y)),
        BinaryOp::Gt => zip(a, b, |x, y| truth(x > y)),
        BinaryOp::Ge => zip(a, b, |x, y| truth(x >= y)),
        BinaryOp::Eq => zip(a, b, |x, y| truth(x == y)),
        BinaryOp::Ne => zip(a, b, |x, y| truth(x != y)),
        BinaryOp::And => zip(a, b, |x, y| truth(x != 0.0 && y != 0.0)),
        BinaryOp::Or => zip(a, b, |x, y| truth(x != 0.0 || y != 0.0)),
    }
}
