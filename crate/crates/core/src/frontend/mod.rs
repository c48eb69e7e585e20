//! Source text to definition IR: lexing, parsing, function inlining and
//! external binding.

mod lexer;
mod parser;

use std::collections::{BTreeMap, HashMap};

use crate::diagnostics::{DiagCode, Diagnostic};
use crate::ir::{
    AssignTarget, Builtin, Expr, ExprKind, ExternalValue, FunctionDef, Span, StencilDefinition, Stmt,
};

pub use lexer::{tokenize, Tok, Token};
pub use parser::Item;
use parser::{rewrite_expr, rewrite_stmt_exprs, Parser};

/// Source text plus an optional file name for diagnostics.
#[derive(Debug, Clone)]
pub struct SourceProgram {
    pub text: String,
    pub path: Option<String>,
}

impl SourceProgram {
    pub fn new(text: impl Into<String>) -> Self {
        SourceProgram { text: text.into(), path: None }
    }

    pub fn with_path(text: impl Into<String>, path: impl Into<String>) -> Self {
        SourceProgram { text: text.into(), path: Some(path.into()) }
    }

    pub fn display_path(&self) -> &str {
        self.path.as_deref().unwrap_or("<input>")
    }
}

pub type ExternalsBinding = BTreeMap<String, ExternalValue>;

/// Parses every top-level `stencil` and `function` in source order.
pub fn parse_program(src: &SourceProgram) -> Result<Vec<Item>, Diagnostic> {
    let tokens = tokenize(&src.text)?;
    Parser::new(tokens).program()
}

/// Parses a command-line style external value (`1e-3`, `42`).
pub fn parse_external_value(name: &str, text: &str) -> Result<ExternalValue, Diagnostic> {
    let text = text.trim();
    if let Ok(i) = text.parse::<i64>() {
        return Ok(ExternalValue::Int(i));
    }
    match text.parse::<f64>() {
        Ok(f) if f.is_finite() => Ok(ExternalValue::Float(f)),
        _ => Err(Diagnostic::error(
            DiagCode::ExternalType,
            Span::default(),
            format!("external `{name}` must be numeric, got `{text}`"),
        )),
    }
}

/// Substitutes every user-function call with the callee body.
///
/// Callee locals are hoisted in front of the calling statement under fresh
/// names; field arguments compose their offsets with in-body offsets.
pub fn inline_functions(def: &StencilDefinition, functions: &[FunctionDef]) -> Result<StencilDefinition, Diagnostic> {
    let table: HashMap<&str, &FunctionDef> = functions.iter().map(|f| (f.name.as_str(), f)).collect();
    check_call_graph(functions, &table)?;
    let mut inliner = Inliner { table, counter: 0, stack: Vec::new() };
    let mut out = def.clone();
    for comp in &mut out.computations {
        for block in &mut comp.intervals {
            block.body = inliner.stmts(&block.body)?;
        }
    }
    Ok(out)
}

/// Replaces free identifiers with their bound literal values.
pub fn bind_externals(def: &StencilDefinition, ext: &ExternalsBinding) -> Result<StencilDefinition, Diagnostic> {
    let mut out = def.clone();
    let mut used = BTreeMap::new();
    for comp in &mut out.computations {
        for block in &mut comp.intervals {
            rewrite_stmt_exprs(&mut block.body, &mut |e| {
                if let ExprKind::Name(n) = &e.kind {
                    let value = *ext.get(n).ok_or_else(|| {
                        Diagnostic::error(DiagCode::UnboundExternal, e.span, format!("unbound external `{n}`"))
                    })?;
                    used.insert(n.clone(), value);
                    e.kind = ExprKind::Literal(value.as_f64());
                }
                Ok(())
            })?;
        }
    }
    out.externals = used;
    Ok(out)
}

/// Parse, inline and bind one stencil from a program.
pub fn load_stencil(src: &SourceProgram, name: &str, ext: &ExternalsBinding) -> Result<StencilDefinition, Diagnostic> {
    let items = parse_program(src)?;
    let mut functions = Vec::new();
    let mut stencil = None;
    let mut available = Vec::new();
    for item in items {
        match item {
            Item::Function(f) => functions.push(f),
            Item::Stencil(s) => {
                available.push(s.name.clone());
                if s.name == name {
                    stencil = Some(s);
                }
            }
        }
    }
    let def = stencil.ok_or_else(|| {
        Diagnostic::error(
            DiagCode::UnknownStencil,
            Span::new(1, 1),
            format!("no stencil named `{name}` (available: {})", available.join(", ")),
        )
    })?;
    let def = inline_functions(&def, &functions)?;
    bind_externals(&def, ext)
}

fn check_call_graph(functions: &[FunctionDef], table: &HashMap<&str, &FunctionDef>) -> Result<(), Diagnostic> {
    fn callees(f: &FunctionDef) -> Vec<(String, Span)> {
        let mut out = Vec::new();
        let mut visit = |e: &Expr| {
            e.walk(&mut |n| {
                if let ExprKind::Call { func, .. } = &n.kind {
                    out.push((func.clone(), n.span));
                }
            })
        };
        for s in &f.body {
            s.visit_exprs(&mut visit);
        }
        visit(&f.return_expr);
        out
    }

    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Active,
        Done,
    }
    fn dfs<'a>(
        name: &'a str,
        table: &HashMap<&'a str, &'a FunctionDef>,
        marks: &mut HashMap<&'a str, Mark>,
        path: &mut Vec<&'a str>,
    ) -> Result<(), Diagnostic> {
        marks.insert(name, Mark::Active);
        path.push(name);
        for (callee, span) in callees(table[name]) {
            let Some((&key, _)) = table.get_key_value(callee.as_str()) else { continue };
            match marks.get(key) {
                Some(Mark::Active) => {
                    let start = path.iter().position(|p| *p == key).unwrap();
                    let mut cycle: Vec<&str> = path[start..].to_vec();
                    cycle.push(key);
                    return Err(Diagnostic::error(
                        DiagCode::Recursion,
                        span,
                        format!("recursive function call cycle: {}", cycle.join(" -> ")),
                    ));
                }
                Some(Mark::Done) => {}
                None => dfs(key, table, marks, path)?,
            }
        }
        path.pop();
        marks.insert(name, Mark::Done);
        Ok(())
    }

    let mut marks = HashMap::new();
    for f in functions {
        if !marks.contains_key(f.name.as_str()) {
            dfs(f.name.as_str(), table, &mut marks, &mut Vec::new())?;
        }
    }
    Ok(())
}

struct Inliner<'a> {
    table: HashMap<&'a str, &'a FunctionDef>,
    counter: usize,
    stack: Vec<String>,
}

impl<'a> Inliner<'a> {
    fn stmts(&mut self, stmts: &[Stmt]) -> Result<Vec<Stmt>, Diagnostic> {
        let mut out = Vec::new();
        for s in stmts {
            match s {
                Stmt::Assign { target, value } => {
                    let value = self.expr(value, &mut out)?;
                    out.push(Stmt::Assign { target: target.clone(), value });
                }
                Stmt::If { cond, then_body, else_body, span } => {
                    let cond = self.expr(cond, &mut out)?;
                    let then_body = self.stmts(then_body)?;
                    let else_body = self.stmts(else_body)?;
                    out.push(Stmt::If { cond, then_body, else_body, span: *span });
                }
            }
        }
        Ok(out)
    }

    fn expr(&mut self, e: &Expr, hoisted: &mut Vec<Stmt>) -> Result<Expr, Diagnostic> {
        let kind = match &e.kind {
            ExprKind::Unary { op, operand } => {
                ExprKind::Unary { op: *op, operand: Box::new(self.expr(operand, hoisted)?) }
            }
            ExprKind::Binary { op, lhs, rhs } => ExprKind::Binary {
                op: *op,
                lhs: Box::new(self.expr(lhs, hoisted)?),
                rhs: Box::new(self.expr(rhs, hoisted)?),
            },
            ExprKind::Call { func, args } => {
                let args = args.iter().map(|a| self.expr(a, hoisted)).collect::<Result<Vec<_>, _>>()?;
                if let Some(b) = Builtin::from_name(func) {
                    if args.len() != b.arity() {
                        return Err(Diagnostic::error(
                            DiagCode::Arity,
                            e.span,
                            format!("`{func}` takes {} argument(s), {} given", b.arity(), args.len()),
                        ));
                    }
                    ExprKind::Call { func: func.clone(), args }
                } else if let Some(f) = self.table.get(func.as_str()).copied() {
                    return self.call(f, args, e.span, hoisted);
                } else {
                    return Err(Diagnostic::error(DiagCode::UnknownFunction, e.span, format!("unknown function `{func}`")));
                }
            }
            other => other.clone(),
        };
        Ok(Expr::new(kind, e.span))
    }

    fn call(&mut self, f: &'a FunctionDef, args: Vec<Expr>, span: Span, hoisted: &mut Vec<Stmt>) -> Result<Expr, Diagnostic> {
        if self.stack.contains(&f.name) {
            return Err(Diagnostic::error(DiagCode::Recursion, span, format!("recursive call to `{}`", f.name)));
        }
        if args.len() != f.params.len() {
            return Err(Diagnostic::error(
                DiagCode::Arity,
                span,
                format!("`{}` takes {} argument(s), {} given", f.name, f.params.len(), args.len()),
            ));
        }
        self.counter += 1;
        let instance = self.counter;
        let bindings: HashMap<&str, &Expr> = f.params.iter().map(String::as_str).zip(args.iter()).collect();
        let mut renames: HashMap<String, String> = HashMap::new();
        for s in &f.body {
            s.visit_assigns(&mut |t, _| {
                renames.entry(t.name.clone()).or_insert_with(|| format!("{}__{}_{}", f.name, t.name, instance));
            });
        }

        let substitute = |e: &mut Expr| -> Result<(), Diagnostic> {
            match &e.kind {
                ExprKind::Name(n) => {
                    if let Some(arg) = bindings.get(n.as_str()) {
                        *e = (*arg).clone();
                    }
                }
                ExprKind::Field { name, offset } => {
                    if let Some(local) = renames.get(name) {
                        e.kind = ExprKind::Field { name: local.clone(), offset: *offset };
                    } else if let Some(arg) = bindings.get(name.as_str()) {
                        match &arg.kind {
                            ExprKind::Field { name: field, offset: base } => {
                                e.kind = ExprKind::Field { name: field.clone(), offset: base.compose(*offset) };
                            }
                            _ if offset.is_zero() => *e = (*arg).clone(),
                            _ => {
                                return Err(Diagnostic::error(
                                    DiagCode::InvalidArgument,
                                    arg.span,
                                    format!("parameter `{name}` of `{}` is indexed, so its argument must be a field", f.name),
                                ))
                            }
                        }
                    }
                }
                _ => {}
            }
            Ok(())
        };

        let mut body = f.body.clone();
        let mut subst = substitute;
        rewrite_stmt_exprs(&mut body, &mut subst)?;
        for s in &mut body {
            if let Stmt::Assign { target, .. } = s {
                if bindings.contains_key(target.name.as_str()) {
                    return Err(Diagnostic::error(
                        DiagCode::InvalidArgument,
                        target.span,
                        format!("cannot assign to parameter `{}`", target.name),
                    ));
                }
                let renamed = renames[&target.name].clone();
                *target = AssignTarget { name: renamed, offset: target.offset, span: target.span };
            }
        }
        let mut ret = f.return_expr.clone();
        rewrite_expr(&mut ret, &mut subst)?;

        self.stack.push(f.name.clone());
        let expanded = self.stmts(&body);
        let result = expanded.and_then(|stmts| {
            hoisted.extend(stmts);
            self.expr(&ret, hoisted)
        });
        self.stack.pop();
        result
    }
}
