use std::collections::HashSet;

use super::lexer::{Tok, Token};
use crate::diagnostics::{DiagCode, Diagnostic};
use crate::ir::{
    AssignTarget, AxisBound, BinaryOp, Computation, DType, Expr, ExprKind, FieldDecl, FunctionDef,
    Interval, IntervalBlock, Offset, Order, ScalarDecl, Span, StencilDefinition, Stmt, UnaryOp,
};

/// A top-level program item.
#[derive(Debug, Clone, PartialEq)]
pub enum Item {
    Stencil(StencilDefinition),
    Function(FunctionDef),
}

const UNSUPPORTED_KEYWORDS: &[&str] = &[
    "while", "for", "def", "elif", "lambda", "class", "import", "from", "pass", "break", "continue",
    "try", "except", "finally", "yield", "global", "nonlocal", "del", "assert", "raise", "in", "is",
    "True", "False", "async", "await", "match",
];

const RESERVED: &[&str] = &[
    "stencil", "function", "with", "computation", "interval", "if", "else", "return", "and", "or",
    "not", "None", "PARALLEL", "FORWARD", "BACKWARD", "Field",
];

pub struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    in_condition: bool,
}

type PResult<T> = Result<T, Diagnostic>;

impl Parser {
    pub fn new(tokens: Vec<Token>) -> Self {
        Parser { tokens, pos: 0, in_condition: false }
    }

    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let idx = (self.pos + n).min(self.tokens.len() - 1);
        &self.tokens[idx].tok
    }

    fn span(&self) -> Span {
        self.tokens[self.pos].span
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn error_expected(&self, what: &str) -> Diagnostic {
        if let Tok::Ident(s) = self.peek() {
            if UNSUPPORTED_KEYWORDS.contains(&s.as_str()) {
                return Diagnostic::error(
                    DiagCode::UnknownKeyword,
                    self.span(),
                    format!("unsupported keyword `{s}`"),
                );
            }
        }
        if *self.peek() == Tok::Indent {
            return Diagnostic::error(DiagCode::Indentation, self.span(), "unexpected indent");
        }
        Diagnostic::error(
            DiagCode::Syntax,
            self.span(),
            format!("expected {what}, found {}", self.peek().describe()),
        )
    }

    fn expect(&mut self, tok: Tok, what: &str) -> PResult<Span> {
        if *self.peek() == tok {
            Ok(self.bump().span)
        } else {
            Err(self.error_expected(what))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<Span> {
        if self.is_kw(kw) {
            Ok(self.bump().span)
        } else {
            Err(self.error_expected(&format!("`{kw}`")))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<(String, Span)> {
        match self.peek().clone() {
            Tok::Ident(s) if !RESERVED.contains(&s.as_str()) && !UNSUPPORTED_KEYWORDS.contains(&s.as_str()) => {
                let span = self.bump().span;
                Ok((s, span))
            }
            _ => Err(self.error_expected(what)),
        }
    }

    pub fn program(&mut self) -> PResult<Vec<Item>> {
        let mut items = Vec::new();
        let mut names = HashSet::new();
        loop {
            match self.peek() {
                Tok::Eof => break,
                Tok::Newline => {
                    self.bump();
                }
                Tok::Ident(s) if s == "stencil" => {
                    let def = self.stencil()?;
                    if !names.insert(def.name.clone()) {
                        return Err(Diagnostic::error(
                            DiagCode::DuplicateName,
                            def.span,
                            format!("`{}` is defined more than once", def.name),
                        ));
                    }
                    items.push(Item::Stencil(def));
                }
                Tok::Ident(s) if s == "function" => {
                    let f = self.function()?;
                    if !names.insert(f.name.clone()) {
                        return Err(Diagnostic::error(
                            DiagCode::DuplicateName,
                            f.span,
                            format!("`{}` is defined more than once", f.name),
                        ));
                    }
                    items.push(Item::Function(f));
                }
                Tok::Ident(s) => {
                    return Err(Diagnostic::error(
                        DiagCode::UnknownKeyword,
                        self.span(),
                        format!("expected `stencil` or `function` at top level, found `{s}`"),
                    ))
                }
                _ => return Err(self.error_expected("`stencil` or `function`")),
            }
        }
        Ok(items)
    }

    /// Parses `: NEWLINE INDENT item+ DEDENT` or `: item` on the same line.
    fn suite<T>(&mut self, mut item: impl FnMut(&mut Self) -> PResult<T>) -> PResult<Vec<T>> {
        self.expect(Tok::Colon, "`:`")?;
        if *self.peek() != Tok::Newline {
            return Ok(vec![item(self)?]);
        }
        self.bump();
        self.expect(Tok::Indent, "an indented block")?;
        let mut out = Vec::new();
        while *self.peek() != Tok::Dedent && *self.peek() != Tok::Eof {
            out.push(item(self)?);
        }
        self.expect(Tok::Dedent, "end of block")?;
        Ok(out)
    }

    fn stencil(&mut self) -> PResult<StencilDefinition> {
        let span = self.expect_kw("stencil")?;
        let (name, _) = self.ident("stencil name")?;
        self.expect(Tok::LParen, "`(`")?;
        let mut fields = Vec::new();
        let mut scalars = Vec::new();
        let mut seen = HashSet::new();
        loop {
            let (pname, pspan) = self.ident("parameter name")?;
            if !seen.insert(pname.clone()) {
                return Err(Diagnostic::error(
                    DiagCode::DuplicateName,
                    pspan,
                    format!("duplicate parameter `{pname}`"),
                ));
            }
            self.expect(Tok::Colon, "`:`")?;
            if self.is_kw("Field") {
                self.bump();
                self.expect(Tok::LBracket, "`[`")?;
                let dtype = self.dtype()?;
                self.expect(Tok::RBracket, "`]`")?;
                fields.push(FieldDecl { name: pname, dtype });
            } else {
                let dtype = self.dtype()?;
                scalars.push(ScalarDecl { name: pname, dtype });
            }
            if *self.peek() == Tok::Comma {
                self.bump();
                continue;
            }
            break;
        }
        self.expect(Tok::RParen, "`)` or `,`")?;
        let computations = self.suite(|p| p.computation())?;
        let mut def = StencilDefinition {
            name,
            api_fields: fields,
            api_scalars: scalars,
            computations,
            externals: Default::default(),
            span,
        };
        resolve_stencil_names(&mut def)?;
        Ok(def)
    }

    fn dtype(&mut self) -> PResult<DType> {
        match self.peek() {
            Tok::Ident(s) if s == "f64" => {
                self.bump();
                Ok(DType::F64)
            }
            Tok::Ident(s) if s == "f32" => {
                self.bump();
                Ok(DType::F32)
            }
            _ => Err(self.error_expected("`f32` or `f64`")),
        }
    }

    fn computation(&mut self) -> PResult<Computation> {
        let span = self.expect_kw("with")?;
        self.expect_kw("computation")?;
        self.expect(Tok::LParen, "`(`")?;
        let order = match self.peek().clone() {
            Tok::Ident(s) => {
                let order = match s.as_str() {
                    "PARALLEL" => Order::Parallel,
                    "FORWARD" => Order::Forward,
                    "BACKWARD" => Order::Backward,
                    other => {
                        return Err(Diagnostic::error(
                            DiagCode::UnknownKeyword,
                            self.span(),
                            format!("unknown computation order `{other}` (expected PARALLEL, FORWARD or BACKWARD)"),
                        ))
                    }
                };
                self.bump();
                order
            }
            _ => return Err(self.error_expected("computation order")),
        };
        self.expect(Tok::RParen, "`)`")?;

        enum Part {
            Interval(IntervalBlock),
            Stmt(Stmt),
        }
        let parts = self.suite(|p| {
            if p.is_kw("with") && matches!(p.peek_at(1), Tok::Ident(s) if s == "interval") {
                p.interval_block().map(Part::Interval)
            } else if p.is_kw("with") {
                Err(Diagnostic::error(
                    DiagCode::Syntax,
                    p.span(),
                    "computations cannot be nested; expected `with interval` or a statement",
                ))
            } else {
                p.stmt().map(Part::Stmt)
            }
        })?;
        let mut intervals = Vec::new();
        let mut stmts = Vec::new();
        for part in parts {
            match part {
                Part::Interval(b) => intervals.push(b),
                Part::Stmt(s) => stmts.push(s),
            }
        }
        if !intervals.is_empty() && !stmts.is_empty() {
            return Err(Diagnostic::error(
                DiagCode::Syntax,
                stmts[0].span(),
                "a computation body holds either `with interval` blocks or statements, not both",
            ));
        }
        if intervals.is_empty() {
            intervals.push(IntervalBlock { interval: Interval::full(), body: stmts, span });
        }
        Ok(Computation { order, intervals, span })
    }

    fn interval_block(&mut self) -> PResult<IntervalBlock> {
        let span = self.expect_kw("with")?;
        self.expect_kw("interval")?;
        self.expect(Tok::LParen, "`(`")?;
        let start = self.bound()?;
        self.expect(Tok::Comma, "`,`")?;
        let end = self.bound()?;
        self.expect(Tok::RParen, "`)`")?;
        let interval = Interval {
            start: AxisBound::from_source(start, false),
            end: AxisBound::from_source(end, true),
        };
        let body = self.suite(|p| {
            if p.is_kw("with") {
                Err(Diagnostic::error(DiagCode::Syntax, p.span(), "`with` blocks cannot appear inside an interval"))
            } else {
                p.stmt()
            }
        })?;
        Ok(IntervalBlock { interval, body, span })
    }

    fn bound(&mut self) -> PResult<Option<i64>> {
        if self.is_kw("None") {
            self.bump();
            return Ok(None);
        }
        self.signed_int("interval bound (integer or None)").map(Some)
    }

    fn signed_int(&mut self, what: &str) -> PResult<i64> {
        let neg = match self.peek() {
            Tok::Minus => {
                self.bump();
                true
            }
            Tok::Plus => {
                self.bump();
                false
            }
            _ => false,
        };
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(if neg { -v } else { v })
            }
            _ => Err(self.error_expected(what)),
        }
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        if self.is_kw("if") {
            return self.if_stmt();
        }
        if self.is_kw("return") {
            return Err(Diagnostic::error(DiagCode::Syntax, self.span(), "`return` is only allowed at the end of a function"));
        }
        let (name, span) = self.ident("statement")?;
        let offset = if *self.peek() == Tok::LBracket { self.offset()? } else { Offset::ZERO };
        self.expect(Tok::Assign, "`=`")?;
        let value = self.expr()?;
        self.expect(Tok::Newline, "end of line")?;
        Ok(Stmt::Assign { target: AssignTarget { name, offset, span }, value })
    }

    fn if_stmt(&mut self) -> PResult<Stmt> {
        let span = self.expect_kw("if")?;
        self.in_condition = true;
        let cond = self.expr();
        self.in_condition = false;
        let cond = cond?;
        let then_body = self.suite(|p| p.stmt())?;
        let else_body = if self.is_kw("else") {
            self.bump();
            self.suite(|p| p.stmt())?
        } else {
            Vec::new()
        };
        Ok(Stmt::If { cond, then_body, else_body, span })
    }

    fn offset(&mut self) -> PResult<Offset> {
        self.expect(Tok::LBracket, "`[`")?;
        let i = self.signed_int("integer offset")?;
        self.expect(Tok::Comma, "`,` (offsets have three components)")?;
        let j = self.signed_int("integer offset")?;
        self.expect(Tok::Comma, "`,` (offsets have three components)")?;
        let k = self.signed_int("integer offset")?;
        self.expect(Tok::RBracket, "`]`")?;
        Ok(Offset([i, j, k]))
    }

    fn function(&mut self) -> PResult<FunctionDef> {
        let span = self.expect_kw("function")?;
        let (name, _) = self.ident("function name")?;
        self.expect(Tok::LParen, "`(`")?;
        let mut params = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                let (p, pspan) = self.ident("parameter name")?;
                if params.contains(&p) {
                    return Err(Diagnostic::error(DiagCode::DuplicateName, pspan, format!("duplicate parameter `{p}`")));
                }
                params.push(p);
                if *self.peek() == Tok::Comma {
                    self.bump();
                    continue;
                }
                break;
            }
        }
        self.expect(Tok::RParen, "`)`")?;

        enum Part {
            Stmt(Stmt),
            Return(Expr),
        }
        let parts = self.suite(|p| {
            if p.is_kw("return") {
                p.bump();
                let e = p.expr()?;
                p.expect(Tok::Newline, "end of line")?;
                Ok(Part::Return(e))
            } else if p.is_kw("with") {
                Err(Diagnostic::error(
                    DiagCode::Syntax,
                    p.span(),
                    "functions cannot contain computation or interval blocks",
                ))
            } else if p.is_kw("if") {
                Err(Diagnostic::error(DiagCode::Syntax, p.span(), "functions cannot contain `if` statements"))
            } else {
                p.stmt().map(Part::Stmt)
            }
        })?;
        let mut body = Vec::new();
        let mut ret = None;
        for part in parts {
            if ret.is_some() {
                let sp = match part {
                    Part::Stmt(s) => s.span(),
                    Part::Return(e) => e.span,
                };
                return Err(Diagnostic::error(DiagCode::Syntax, sp, "statements after `return`"));
            }
            match part {
                Part::Stmt(s) => body.push(s),
                Part::Return(e) => ret = Some(e),
            }
        }
        let return_expr = ret.ok_or_else(|| {
            Diagnostic::error(DiagCode::Syntax, span, format!("function `{name}` has no `return`"))
        })?;
        let mut f = FunctionDef { name, params, body, return_expr, span };
        resolve_function_names(&mut f);
        Ok(f)
    }

    fn expr(&mut self) -> PResult<Expr> {
        self.or_expr()
    }

    fn check_logical(&self, span: Span, what: &str) -> PResult<()> {
        if self.in_condition {
            Ok(())
        } else {
            Err(Diagnostic::error(
                DiagCode::Syntax,
                span,
                format!("{what} are only allowed in `if` conditions"),
            ))
        }
    }

    fn or_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.and_expr()?;
        while self.is_kw("or") {
            let span = self.bump().span;
            self.check_logical(span, "boolean operators")?;
            let rhs = self.and_expr()?;
            lhs = binary(BinaryOp::Or, lhs, rhs, span);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.not_expr()?;
        while self.is_kw("and") {
            let span = self.bump().span;
            self.check_logical(span, "boolean operators")?;
            let rhs = self.not_expr()?;
            lhs = binary(BinaryOp::And, lhs, rhs, span);
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> PResult<Expr> {
        if self.is_kw("not") {
            let span = self.bump().span;
            self.check_logical(span, "boolean operators")?;
            let operand = self.not_expr()?;
            return Ok(Expr::new(ExprKind::Unary { op: UnaryOp::Not, operand: Box::new(operand) }, span));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> PResult<Expr> {
        let lhs = self.arith()?;
        let op = match self.peek() {
            Tok::Lt => BinaryOp::Lt,
            Tok::Le => BinaryOp::Le,
            Tok::Gt => BinaryOp::Gt,
            Tok::Ge => BinaryOp::Ge,
            Tok::EqEq => BinaryOp::Eq,
            Tok::Ne => BinaryOp::Ne,
            _ => return Ok(lhs),
        };
        let span = self.bump().span;
        self.check_logical(span, "comparisons")?;
        let rhs = self.arith()?;
        if matches!(self.peek(), Tok::Lt | Tok::Le | Tok::Gt | Tok::Ge | Tok::EqEq | Tok::Ne) {
            return Err(Diagnostic::error(DiagCode::Syntax, self.span(), "chained comparisons are not supported"));
        }
        Ok(binary(op, lhs, rhs, span))
    }

    fn arith(&mut self) -> PResult<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinaryOp::Add,
                Tok::Minus => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            let span = self.bump().span;
            let rhs = self.term()?;
            lhs = binary(op, lhs, rhs, span);
        }
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinaryOp::Mul,
                Tok::Slash => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            let span = self.bump().span;
            let rhs = self.unary()?;
            lhs = binary(op, lhs, rhs, span);
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        match self.peek() {
            Tok::Minus => {
                let span = self.bump().span;
                let operand = self.unary()?;
                Ok(Expr::new(ExprKind::Unary { op: UnaryOp::Neg, operand: Box::new(operand) }, span))
            }
            Tok::Plus => {
                self.bump();
                self.unary()
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> PResult<Expr> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(Expr::literal(v as f64, span))
            }
            Tok::Float(v) => {
                self.bump();
                Ok(Expr::literal(v, span))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(_) => {
                let (name, span) = self.ident("expression")?;
                match self.peek() {
                    Tok::LBracket => {
                        let offset = self.offset()?;
                        Ok(Expr::field(name, offset, span))
                    }
                    Tok::LParen => {
                        self.bump();
                        let mut args = Vec::new();
                        if *self.peek() != Tok::RParen {
                            loop {
                                args.push(self.expr()?);
                                if *self.peek() == Tok::Comma {
                                    self.bump();
                                    continue;
                                }
                                break;
                            }
                        }
                        self.expect(Tok::RParen, "`)` or `,`")?;
                        Ok(Expr::new(ExprKind::Call { func: name, args }, span))
                    }
                    _ => Ok(Expr::new(ExprKind::Name(name), span)),
                }
            }
            _ => Err(self.error_expected("expression")),
        }
    }
}

fn binary(op: BinaryOp, lhs: Expr, rhs: Expr, span: Span) -> Expr {
    Expr::new(ExprKind::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }, span)
}

fn collect_targets(stmts: &[Stmt], out: &mut HashSet<String>) {
    for s in stmts {
        s.visit_assigns(&mut |t, _| {
            out.insert(t.name.clone());
        });
    }
}

pub(crate) fn rewrite_expr(e: &mut Expr, f: &mut impl FnMut(&mut Expr) -> Result<(), Diagnostic>) -> Result<(), Diagnostic> {
    f(e)?;
    match &mut e.kind {
        ExprKind::Unary { operand, .. } => rewrite_expr(operand, f),
        ExprKind::Binary { lhs, rhs, .. } => {
            rewrite_expr(lhs, f)?;
            rewrite_expr(rhs, f)
        }
        ExprKind::Call { args, .. } => args.iter_mut().try_for_each(|a| rewrite_expr(a, f)),
        _ => Ok(()),
    }
}

pub(crate) fn rewrite_stmt_exprs(
    stmts: &mut [Stmt],
    f: &mut impl FnMut(&mut Expr) -> Result<(), Diagnostic>,
) -> Result<(), Diagnostic> {
    for s in stmts {
        match s {
            Stmt::Assign { value, .. } => rewrite_expr(value, f)?,
            Stmt::If { cond, then_body, else_body, .. } => {
                rewrite_expr(cond, f)?;
                rewrite_stmt_exprs(then_body, f)?;
                rewrite_stmt_exprs(else_body, f)?;
            }
        }
    }
    Ok(())
}

/// Classifies bare identifiers: fields and temporaries become zero-offset
/// field reads, scalar parameters become scalar refs, anything else stays
/// a free name for external binding.
fn resolve_stencil_names(def: &mut StencilDefinition) -> Result<(), Diagnostic> {
    let mut fieldlike: HashSet<String> = def.api_fields.iter().map(|f| f.name.clone()).collect();
    for comp in &def.computations {
        for block in &comp.intervals {
            collect_targets(&block.body, &mut fieldlike);
        }
    }
    let scalars: HashSet<String> = def.api_scalars.iter().map(|s| s.name.clone()).collect();
    for comp in &mut def.computations {
        for block in &mut comp.intervals {
            rewrite_stmt_exprs(&mut block.body, &mut |e| {
                match &e.kind {
                    ExprKind::Name(n) if scalars.contains(n) => {
                        e.kind = ExprKind::Scalar { name: n.clone() };
                    }
                    ExprKind::Name(n) if fieldlike.contains(n) => {
                        e.kind = ExprKind::Field { name: n.clone(), offset: Offset::ZERO };
                    }
                    ExprKind::Field { name, .. } if scalars.contains(name) => {
                        return Err(Diagnostic::error(
                            DiagCode::Syntax,
                            e.span,
                            format!("scalar parameter `{name}` cannot be indexed"),
                        ));
                    }
                    _ => {}
                }
                Ok(())
            })?;
        }
    }
    Ok(())
}

/// Inside functions, bare reads of locals become field reads; parameters
/// stay as names until substitution.
fn resolve_function_names(f: &mut FunctionDef) {
    let mut locals = HashSet::new();
    collect_targets(&f.body, &mut locals);
    for p in &f.params {
        locals.remove(p);
    }
    let mut fix = |e: &mut Expr| -> Result<(), Diagnostic> {
        if let ExprKind::Name(n) = &e.kind {
            if locals.contains(n) {
                e.kind = ExprKind::Field { name: n.clone(), offset: Offset::ZERO };
            }
        }
        Ok(())
    };
    let _ = rewrite_stmt_exprs(&mut f.body, &mut fix);
    let _ = rewrite_expr(&mut f.return_expr, &mut fix);
}
