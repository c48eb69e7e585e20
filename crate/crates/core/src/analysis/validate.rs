//! Legality rules for definition IR.

use std::collections::HashSet;

use crate::diagnostics::{DiagCode, Diagnostic};
use crate::ir::{Computation, Expr, Order, StencilDefinition, Stmt};

/// Checks data-dependence legality. Never fails; returns diagnostics.
///
/// Rules:
/// - in PARALLEL, a statement may not read its own target at a nonzero offset;
/// - in any order, a statement may not read its own target at a nonzero
///   horizontal offset;
/// - in FORWARD (BACKWARD), fields written in the computation may not be
///   read at positive (negative) vertical offsets;
/// - in PARALLEL, fields written in the computation may not be read at any
///   vertical offset;
/// - assignment targets carry no offset and are never scalar parameters;
/// - in sequential computations, level-carried reads of temporaries written
///   in the same computation have zero horizontal offset;
/// - inside an `if`, fields assigned in the block are read only at zero
///   horizontal offset within the block.
pub fn validate_semantics(def: &StencilDefinition) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let temporaries: HashSet<String> = def
        .statements()
        .flat_map(|s| s.targets())
        .filter(|t| def.field(t).is_none() && def.scalar(t).is_none())
        .map(str::to_string)
        .collect();

    for comp in &def.computations {
        let written: HashSet<&str> = comp
            .intervals
            .iter()
            .flat_map(|b| b.body.iter())
            .flat_map(|s| s.targets())
            .collect();
        let ctx = Ctx { def, comp, written: &written, temporaries: &temporaries };
        for block in &comp.intervals {
            for stmt in &block.body {
                ctx.stmt(stmt, &[], &mut diags);
                if let Stmt::If { .. } = stmt {
                    conditional_offsets(stmt, &mut diags);
                }
            }
        }
    }
    diags
}

struct Ctx<'a> {
    def: &'a StencilDefinition,
    comp: &'a Computation,
    written: &'a HashSet<&'a str>,
    temporaries: &'a HashSet<String>,
}

impl Ctx<'_> {
    fn stmt<'s>(&self, stmt: &'s Stmt, conds: &[&'s Expr], diags: &mut Vec<Diagnostic>) {
        match stmt {
            Stmt::Assign { target, value } => {
                if self.def.scalar(&target.name).is_some() {
                    diags.push(Diagnostic::error(
                        DiagCode::ScalarAssignment,
                        target.span,
                        format!("scalar parameter `{}` is read-only", target.name),
                    ));
                }
                if !target.offset.is_zero() {
                    diags.push(Diagnostic::error(
                        DiagCode::TargetOffset,
                        target.span,
                        format!("assignment target `{}{}` must have a zero offset", target.name, target.offset),
                    ));
                }
                let mut reads = value.field_reads().into_iter().map(|(n, o)| (n, o, value.span)).collect::<Vec<_>>();
                for c in conds {
                    reads.extend(c.field_reads().into_iter().map(|(n, o)| (n, o, c.span)));
                }
                let mut reported = HashSet::new();
                for (name, off, span) in reads {
                    let own = name == target.name;
                    if own && self.comp.order == Order::Parallel && !off.is_zero() {
                        if reported.insert((DiagCode::ParallelSelfDependency, name)) {
                            diags.push(Diagnostic::error(
                                DiagCode::ParallelSelfDependency,
                                target.span,
                                format!(
                                    "`{name}` reads itself at offset {off} in a PARALLEL computation; write to a different field"
                                ),
                            ));
                        }
                        continue;
                    }
                    if own && !off.is_horizontal_zero() && reported.insert((DiagCode::SelfOffsetRead, name)) {
                        diags.push(Diagnostic::error(
                            DiagCode::SelfOffsetRead,
                            target.span,
                            format!("`{name}` reads itself at horizontal offset {off}"),
                        ));
                    }
                    self.read(name, off, span, &mut reported, diags);
                }
            }
            Stmt::If { cond, then_body, else_body, .. } => {
                let mut inner: Vec<&Expr> = conds.to_vec();
                inner.push(cond);
                if then_body.is_empty() && else_body.is_empty() {
                    for (name, off) in cond.field_reads() {
                        self.read(name, off, cond.span, &mut HashSet::new(), diags);
                    }
                }
                for s in then_body.iter().chain(else_body) {
                    self.stmt(s, &inner, diags);
                }
            }
        }
    }

    fn read<'n>(
        &self,
        name: &'n str,
        off: crate::ir::Offset,
        span: crate::ir::Span,
        reported: &mut HashSet<(DiagCode, &'n str)>,
        diags: &mut Vec<Diagnostic>,
    ) {
        if !self.written.contains(name) {
            return;
        }
        let dk = off.k();
        match self.comp.order {
            Order::Parallel if dk != 0 => {
                if reported.insert((DiagCode::ParallelVerticalRead, name)) {
                    diags.push(Diagnostic::error(
                        DiagCode::ParallelVerticalRead,
                        span,
                        format!("`{name}` is written in this PARALLEL computation and cannot be read at vertical offset {dk}"),
                    ));
                }
            }
            Order::Forward | Order::Backward => {
                let ahead = if self.comp.order == Order::Forward { dk > 0 } else { dk < 0 };
                let behind = dk != 0 && !ahead;
                if ahead && reported.insert((DiagCode::SequentialOrderRead, name)) {
                    diags.push(Diagnostic::error(
                        DiagCode::SequentialOrderRead,
                        span,
                        format!(
                            "`{name}` is written in this {} computation and read at vertical offset {dk}, a level not yet computed",
                            self.comp.order.keyword()
                        ),
                    ));
                }
                if behind
                    && self.temporaries.contains(name)
                    && !off.is_horizontal_zero()
                    && reported.insert((DiagCode::LoopCarriedOffset, name))
                {
                    diags.push(Diagnostic::error(
                        DiagCode::LoopCarriedOffset,
                        span,
                        format!("temporary `{name}` carried between levels must be read at zero horizontal offset, got {off}"),
                    ));
                }
            }
            _ => {}
        }
    }
}

fn conditional_offsets(stmt: &Stmt, diags: &mut Vec<Diagnostic>) {
    let assigned: HashSet<&str> = stmt.targets().into_iter().collect();
    let mut reported = HashSet::new();
    for (name, off, span) in stmt.field_reads() {
        if assigned.contains(name) && !off.is_horizontal_zero() && reported.insert(name) {
            diags.push(Diagnostic::error(
                DiagCode::ConditionalOffsetRead,
                span,
                format!("`{name}` is assigned inside this `if` and may only be read at zero horizontal offset within it"),
            ));
        }
    }
}
