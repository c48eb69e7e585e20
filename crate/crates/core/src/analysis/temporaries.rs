//! Temporary field discovery, dtype inference and definedness checks.

use std::collections::{HashMap, HashSet};

use super::intervals::stable_horizon;
use crate::diagnostics::{DiagCode, Diagnostic};
use crate::ir::{DType, ExprKind, Interval, Order, StencilDefinition, Stmt};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Temporary {
    pub name: String,
    pub dtype: DType,
}

/// Names first appearing as assignment targets and absent from the
/// signature, in first-assignment order.
pub fn detect_temporaries(def: &StencilDefinition, k_min: i64) -> Result<Vec<Temporary>, Vec<Diagnostic>> {
    let mut names: Vec<String> = Vec::new();
    for stmt in def.statements() {
        for t in stmt.targets() {
            if def.field(t).is_none() && def.scalar(t).is_none() && !names.iter().any(|n| n == t) {
                names.push(t.to_string());
            }
        }
    }
    let dtypes = infer_dtypes(def, &names);
    let temps: Vec<Temporary> = names.iter().map(|n| Temporary { name: n.clone(), dtype: dtypes[n] }).collect();

    let mut diags = Vec::new();
    let mut unknown = HashSet::new();
    for stmt in def.statements() {
        for (name, _, span) in stmt.field_reads() {
            if def.field(name).is_none() && !names.iter().any(|n| n == name) && unknown.insert(name) {
                diags.push(Diagnostic::error(
                    DiagCode::UseBeforeDefine,
                    span,
                    format!("`{name}` is neither a field parameter nor assigned anywhere in the stencil"),
                ));
            }
        }
    }
    if diags.is_empty() {
        check_definedness(def, &names, &mut diags);
    }
    if diags.is_empty() {
        check_level_coverage(def, &names, k_min, &mut diags);
    }
    if diags.is_empty() {
        Ok(temps)
    } else {
        Err(diags)
    }
}

/// A temporary is f32 when every field feeding its assignments is f32.
fn infer_dtypes(def: &StencilDefinition, names: &[String]) -> HashMap<String, DType> {
    let mut dtypes: HashMap<String, DType> = names.iter().map(|n| (n.clone(), DType::F32)).collect();
    loop {
        let mut changed = false;
        for stmt in def.statements() {
            stmt.visit_assigns(&mut |target, value| {
                if dtypes.get(&target.name) != Some(&DType::F32) {
                    return;
                }
                let mut any_field = false;
                let mut all_f32 = true;
                value.walk(&mut |e| {
                    if let ExprKind::Field { name, .. } = &e.kind {
                        any_field = true;
                        let d = def.field(name).map(|f| f.dtype).or_else(|| dtypes.get(name).copied());
                        if d != Some(DType::F32) {
                            all_f32 = false;
                        }
                    }
                });
                if !any_field || !all_f32 {
                    dtypes.insert(target.name.clone(), DType::F64);
                    changed = true;
                }
            });
        }
        if !changed {
            return dtypes;
        }
    }
}

/// Walks the program in reference order and flags temporaries read before
/// any write. Level-carried reads inside sequential computations are left
/// to the coverage check.
fn check_definedness(def: &StencilDefinition, temps: &[String], diags: &mut Vec<Diagnostic>) {
    let temps: HashSet<&str> = temps.iter().map(String::as_str).collect();
    let mut defined: HashSet<String> = HashSet::new();
    let mut reported = HashSet::new();
    for comp in &def.computations {
        let written: HashSet<&str> =
            comp.intervals.iter().flat_map(|b| b.body.iter()).flat_map(|s| s.targets()).collect();
        for block in &comp.intervals {
            for stmt in &block.body {
                walk_defined(stmt, comp.order, &written, &temps, &mut defined, &mut reported, diags);
            }
        }
    }
}

fn walk_defined(
    stmt: &Stmt,
    order: Order,
    written: &HashSet<&str>,
    temps: &HashSet<&str>,
    defined: &mut HashSet<String>,
    reported: &mut HashSet<String>,
    diags: &mut Vec<Diagnostic>,
) {
    let mut check = |e: &crate::ir::Expr, defined: &HashSet<String>, diags: &mut Vec<Diagnostic>| {
        e.walk(&mut |n| {
            if let ExprKind::Field { name, offset } = &n.kind {
                if !temps.contains(name.as_str()) || defined.contains(name) {
                    return;
                }
                let carried = order.is_sequential() && offset.k() != 0 && written.contains(name.as_str());
                if !carried && reported.insert(name.clone()) {
                    diags.push(Diagnostic::error(
                        DiagCode::UseBeforeDefine,
                        n.span,
                        format!("temporary `{name}` is read before it is assigned"),
                    ));
                }
            }
        });
    };
    match stmt {
        Stmt::Assign { target, value } => {
            check(value, defined, diags);
            defined.insert(target.name.clone());
        }
        Stmt::If { cond, then_body, else_body, .. } => {
            check(cond, defined, diags);
            let before = defined.clone();
            for s in then_body {
                walk_defined(s, order, written, temps, defined, reported, diags);
            }
            let mut after_else = before;
            for s in else_body {
                walk_defined(s, order, written, temps, &mut after_else, reported, diags);
            }
            defined.extend(after_else);
        }
    }
}

/// Every level a temporary is read from must be a level some statement
/// writes it on, for every admissible vertical size.
fn check_level_coverage(def: &StencilDefinition, temps: &[String], k_min: i64, diags: &mut Vec<Diagnostic>) {
    let mut writes: HashMap<&str, Vec<Interval>> = HashMap::new();
    let mut all_intervals = Vec::new();
    for comp in &def.computations {
        for block in &comp.intervals {
            all_intervals.push(block.interval);
            for stmt in &block.body {
                for t in stmt.targets() {
                    writes.entry(t).or_default().push(block.interval);
                }
            }
        }
    }
    let max_dk = def
        .statements()
        .flat_map(|s| s.field_reads())
        .map(|(_, o, _)| o.k().abs())
        .max()
        .unwrap_or(0);
    let horizon = stable_horizon(&all_intervals) + 2 * max_dk;
    let mut reported = HashSet::new();
    for comp in &def.computations {
        for block in &comp.intervals {
            for stmt in &block.body {
                for (name, off, span) in stmt.field_reads() {
                    if !temps.iter().any(|t| t == name) || reported.contains(name) {
                        continue;
                    }
                    let sources = &writes[name];
                    let uncovered = (k_min..=k_min + horizon).find_map(|nk| {
                        let (s, e) = block.interval.resolve(nk);
                        (s..e).map(|k| k + off.k()).find(|lvl| {
                            !sources.iter().any(|iv| {
                                let (ws, we) = iv.resolve(nk);
                                *lvl >= ws && *lvl < we
                            })
                        }).map(|lvl| (nk, lvl))
                    });
                    if let Some((nk, lvl)) = uncovered {
                        reported.insert(name);
                        diags.push(Diagnostic::error(
                            DiagCode::UseBeforeDefine,
                            span,
                            format!(
                                "temporary `{name}` is read at level {lvl} (with {nk} vertical levels) where it is never assigned"
                            ),
                        ));
                    }
                }
            }
        }
    }
}
