//! Reference interpreter: walks the IR tree at every grid point.

use super::frame::{horizontal_bounds, in_extent, Frame};
use super::{apply_binary, apply_unary, schedule, BackendId, Executable, KernelArgs};
use crate::ir::{Builtin, Expr, ExprKind, Stage, StencilImplementation, Stmt};

pub struct DebugExecutable {
    imp: StencilImplementation,
}

impl DebugExecutable {
    pub fn new(imp: StencilImplementation) -> Self {
        DebugExecutable { imp }
    }
}

impl Executable for DebugExecutable {
    fn backend(&self) -> BackendId {
        BackendId::Debug
    }

    unsafe fn run(&self, args: &KernelArgs) {
        if args.domain.contains(&0) {
            return;
        }
        let frame = Frame::new(&self.imp, args);
        schedule(&self.imp, args.domain[2], |stage, k0, k1| exec_stage(&frame, args.domain, stage, k0, k1));
    }
}

unsafe fn exec_stage(frame: &Frame, domain: [usize; 3], stage: &Stage, k0: isize, k1: isize) {
    let [(i0, i1), (j0, j1)] = horizontal_bounds(&stage.compute_extent, domain);
    match &stage.body {
        Stmt::Assign { target, value } => {
            // Evaluate the whole region first, then commit.
            let mut scratch = Vec::with_capacity(((i1 - i0) * (j1 - j0) * (k1 - k0)) as usize);
            for i in i0..i1 {
                for j in j0..j1 {
                    for k in k0..k1 {
                        scratch.push(eval(frame, value, i, j, k));
                    }
                }
            }
            let dst = frame.fields[frame.slot(&target.name)];
            let mut values = scratch.into_iter();
            for i in i0..i1 {
                for j in j0..j1 {
                    for k in k0..k1 {
                        dst.store(i, j, k, values.next().unwrap());
                    }
                }
            }
        }
        Stmt::If { .. } => {
            for i in i0..i1 {
                for j in j0..j1 {
                    for k in k0..k1 {
                        exec_point(frame, domain, stage, &stage.body, i, j, k);
                    }
                }
            }
        }
    }
}

unsafe fn exec_point(frame: &Frame, domain: [usize; 3], stage: &Stage, stmt: &Stmt, i: isize, j: isize, k: isize) {
    match stmt {
        Stmt::Assign { target, value } => {
            let slot = frame.slot(&target.name);
            if in_extent(&frame.write_extent(slot, stage), domain, i, j) {
                let v = eval(frame, value, i, j, k);
                frame.fields[slot].store(i, j, k, v);
            }
        }
        Stmt::If { cond, then_body, else_body, .. } => {
            let branch = if eval(frame, cond, i, j, k) != 0.0 { then_body } else { else_body };
            for s in branch {
                exec_point(frame, domain, stage, s, i, j, k);
            }
        }
    }
}

unsafe fn eval(frame: &Frame, e: &Expr, i: isize, j: isize, k: isize) -> f64 {
    match &e.kind {
        ExprKind::Field { name, offset } => {
            let [di, dj, dk] = offset.0;
            frame.fields[frame.slot(name)].load(i + di as isize, j + dj as isize, k + dk as isize)
        }
        ExprKind::Scalar { name } => frame.scalar(name),
        ExprKind::Literal(v) => *v,
        ExprKind::Unary { op, operand } => apply_unary(*op, eval(frame, operand, i, j, k)),
        ExprKind::Binary { op, lhs, rhs } => {
            let a = eval(frame, lhs, i, j, k);
            let b = eval(frame, rhs, i, j, k);
            apply_binary(*op, a, b)
        }
        ExprKind::Call { func, args } => {
            let builtin = Builtin::from_name(func).unwrap_or_else(|| panic!("unresolved call `{func}`"));
            let values: Vec<f64> = args.iter().map(|a| eval(frame, a, i, j, k)).collect();
            builtin.apply(&values)
        }
        ExprKind::Name(n) => panic!("unbound name `{n}` reached the interpreter"),
    }
}
