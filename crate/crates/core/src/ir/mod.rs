//! Definition and implementation IR.
//!
//! The definition IR mirrors the source program: declarations, ordered
//! computations, intervals and statements. The implementation IR is the
//! lowered form consumed by backends: multistages, stages with compute
//! extents and temporary allocations.

mod dump;
mod extent;
mod fingerprint;
mod serialize;

use std::collections::BTreeMap;
use std::fmt;

pub use dump::{dump_definition, dump_implementation, dump_ir, fmt_expr, IrStage, DUMP_FORMAT_VERSION};
pub use extent::Extent;
pub use fingerprint::{fingerprint, Fingerprint, TOOLCHAIN_VERSION};
pub use serialize::{canonical_serialize, CanonicalNode, SCHEMA_VERSION};

/// Source position (1-based line and column).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl Span {
    pub fn new(line: u32, col: u32) -> Self {
        Span { line, col }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn size_bytes(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DType::F32 => "f32",
            DType::F64 => "f64",
        }
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Vertical iteration order of a computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Order {
    Parallel,
    Forward,
    Backward,
}

impl Order {
    pub fn keyword(self) -> &'static str {
        match self {
            Order::Parallel => "PARALLEL",
            Order::Forward => "FORWARD",
            Order::Backward => "BACKWARD",
        }
    }

    pub fn is_sequential(self) -> bool {
        !matches!(self, Order::Parallel)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AxisAnchor {
    Start,
    End,
}

/// A vertical bound anchored at the domain start or end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AxisBound {
    pub anchor: AxisAnchor,
    pub offset: i64,
}

impl AxisBound {
    pub fn start(offset: i64) -> Self {
        AxisBound { anchor: AxisAnchor::Start, offset }
    }

    pub fn end(offset: i64) -> Self {
        AxisBound { anchor: AxisAnchor::End, offset }
    }

    /// Maps a source-level bound: `None` is the axis end, nonnegative
    /// integers count from the start and negative ones from the end.
    pub fn from_source(value: Option<i64>, is_end: bool) -> Self {
        match value {
            None if is_end => AxisBound::end(0),
            None => AxisBound::start(0),
            Some(n) if n >= 0 => AxisBound::start(n),
            Some(n) => AxisBound::end(n),
        }
    }

    /// Concrete level for a vertical domain of `nk` levels.
    pub fn resolve(&self, nk: i64) -> i64 {
        match self.anchor {
            AxisAnchor::Start => self.offset,
            AxisAnchor::End => nk + self.offset,
        }
    }
}

impl fmt::Display for AxisBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let anchor = match self.anchor {
            AxisAnchor::Start => "start",
            AxisAnchor::End => "end",
        };
        if self.offset < 0 {
            write!(f, "{anchor}{}", self.offset)
        } else {
            write!(f, "{anchor}+{}", self.offset)
        }
    }
}

/// Half-open vertical interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Interval {
    pub start: AxisBound,
    pub end: AxisBound,
}

impl Interval {
    pub fn full() -> Self {
        Interval { start: AxisBound::start(0), end: AxisBound::end(0) }
    }

    pub fn resolve(&self, nk: i64) -> (i64, i64) {
        (self.start.resolve(nk), self.end.resolve(nk))
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

/// Relative index of a field access.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Offset(pub [i64; 3]);

impl Offset {
    pub const ZERO: Offset = Offset([0, 0, 0]);

    pub fn is_zero(&self) -> bool {
        self.0 == [0, 0, 0]
    }

    pub fn is_horizontal_zero(&self) -> bool {
        self.0[0] == 0 && self.0[1] == 0
    }

    pub fn k(&self) -> i64 {
        self.0[2]
    }

    pub fn compose(self, other: Offset) -> Offset {
        Offset([self.0[0] + other.0[0], self.0[1] + other.0[1], self.0[2] + other.0[2]])
    }
}

impl fmt::Display for Offset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{},{}]", self.0[0], self.0[1], self.0[2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::Eq => "==",
            BinaryOp::Ne => "!=",
            BinaryOp::And => "and",
            BinaryOp::Or => "or",
        }
    }

    pub fn is_arithmetic(self) -> bool {
        matches!(self, BinaryOp::Add | BinaryOp::Sub | BinaryOp::Mul | BinaryOp::Div)
    }

    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge | BinaryOp::Eq | BinaryOp::Ne
        )
    }
}

/// Scalar builtin functions available in expressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Builtin {
    Abs,
    Min,
    Max,
    Sqrt,
    Exp,
    Log,
    Pow,
    Floor,
    Ceil,
}

impl Builtin {
    pub const ALL: [Builtin; 9] = [
        Builtin::Abs,
        Builtin::Min,
        Builtin::Max,
        Builtin::Sqrt,
        Builtin::Exp,
        Builtin::Log,
        Builtin::Pow,
        Builtin::Floor,
        Builtin::Ceil,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Abs => "abs",
            Builtin::Min => "min",
            Builtin::Max => "max",
            Builtin::Sqrt => "sqrt",
            Builtin::Exp => "exp",
            Builtin::Log => "log",
            Builtin::Pow => "pow",
            Builtin::Floor => "floor",
            Builtin::Ceil => "ceil",
        }
    }

    pub fn from_name(name: &str) -> Option<Builtin> {
        Builtin::ALL.into_iter().find(|b| b.name() == name)
    }

    pub fn arity(self) -> usize {
        match self {
            Builtin::Min | Builtin::Max | Builtin::Pow => 2,
            _ => 1,
        }
    }

    /// Shared evaluation rule for all backends. `min`/`max` are plain
    /// comparisons so that every engine rounds and propagates NaN alike.
    pub fn apply(self, args: &[f64]) -> f64 {
        match self {
            Builtin::Abs => args[0].abs(),
            Builtin::Min => {
                if args[0] < args[1] {
                    args[0]
                } else {
                    args[1]
                }
            }
            Builtin::Max => {
                if args[0] > args[1] {
                    args[0]
                } else {
                    args[1]
                }
            }
            Builtin::Sqrt => args[0].sqrt(),
            Builtin::Exp => args[0].exp(),
            Builtin::Log => args[0].ln(),
            Builtin::Pow => args[0].powf(args[1]),
            Builtin::Floor => args[0].floor(),
            Builtin::Ceil => args[0].ceil(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    /// Field read at a relative offset.
    Field { name: String, offset: Offset },
    /// Read-only scalar parameter.
    Scalar { name: String },
    Literal(f64),
    /// Free identifier awaiting an external binding (or a function
    /// parameter inside a function body).
    Name(String),
    Unary { op: UnaryOp, operand: Box<Expr> },
    Binary { op: BinaryOp, lhs: Box<Expr>, rhs: Box<Expr> },
    /// Builtin or user-function call. User calls disappear after inlining.
    Call { func: String, args: Vec<Expr> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

impl Expr {
    pub fn new(kind: ExprKind, span: Span) -> Self {
        Expr { kind, span }
    }

    pub fn field(name: impl Into<String>, offset: Offset, span: Span) -> Self {
        Expr::new(ExprKind::Field { name: name.into(), offset }, span)
    }

    pub fn literal(value: f64, span: Span) -> Self {
        Expr::new(ExprKind::Literal(value), span)
    }

    /// Visits every node in pre-order.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match &self.kind {
            ExprKind::Unary { operand, .. } => operand.walk(f),
            ExprKind::Binary { lhs, rhs, .. } => {
                lhs.walk(f);
                rhs.walk(f);
            }
            ExprKind::Call { args, .. } => args.iter().for_each(|a| a.walk(f)),
            _ => {}
        }
    }

    /// All `(field, offset)` reads in this expression.
    pub fn field_reads(&self) -> Vec<(&str, Offset)> {
        let mut out = Vec::new();
        self.walk(&mut |e| {
            if let ExprKind::Field { name, offset } = &e.kind {
                out.push((name.as_str(), *offset));
            }
        });
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssignTarget {
    pub name: String,
    pub offset: Offset,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Assign { target: AssignTarget, value: Expr },
    If { cond: Expr, then_body: Vec<Stmt>, else_body: Vec<Stmt>, span: Span },
}

impl Stmt {
    pub fn span(&self) -> Span {
        match self {
            Stmt::Assign { target, .. } => target.span,
            Stmt::If { span, .. } => *span,
        }
    }

    /// Names assigned anywhere within this statement, in source order.
    pub fn targets(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.visit_assigns(&mut |t, _| {
            if !out.contains(&t.name.as_str()) {
                out.push(t.name.as_str());
            }
        });
        out
    }

    /// Calls `f` for each assignment with the target and value.
    pub fn visit_assigns<'a>(&'a self, f: &mut impl FnMut(&'a AssignTarget, &'a Expr)) {
        match self {
            Stmt::Assign { target, value } => f(target, value),
            Stmt::If { then_body, else_body, .. } => {
                for s in then_body.iter().chain(else_body) {
                    s.visit_assigns(f);
                }
            }
        }
    }

    /// Every field read in this statement, conditions included.
    pub fn field_reads(&self) -> Vec<(&str, Offset, Span)> {
        let mut out = Vec::new();
        self.visit_exprs(&mut |e| {
            e.walk(&mut |n| {
                if let ExprKind::Field { name, offset } = &n.kind {
                    out.push((name.as_str(), *offset, n.span));
                }
            })
        });
        out
    }

    /// Calls `f` on every top-level expression (values and conditions).
    pub fn visit_exprs<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        match self {
            Stmt::Assign { value, .. } => f(value),
            Stmt::If { cond, then_body, else_body, .. } => {
                f(cond);
                for s in then_body.iter().chain(else_body) {
                    s.visit_exprs(f);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldDecl {
    pub name: String,
    pub dtype: DType,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScalarDecl {
    pub name: String,
    pub dtype: DType,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalBlock {
    pub interval: Interval,
    pub body: Vec<Stmt>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Computation {
    pub order: Order,
    pub intervals: Vec<IntervalBlock>,
    pub span: Span,
}

/// Compile-time constant bound to a free identifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExternalValue {
    Int(i64),
    Float(f64),
}

impl ExternalValue {
    pub fn as_f64(self) -> f64 {
        match self {
            ExternalValue::Int(v) => v as f64,
            ExternalValue::Float(v) => v,
        }
    }
}

impl fmt::Display for ExternalValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExternalValue::Int(v) => write!(f, "{v}"),
            ExternalValue::Float(v) => write!(f, "{v:?}"),
        }
    }
}

/// The definition IR of one stencil.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilDefinition {
    pub name: String,
    pub api_fields: Vec<FieldDecl>,
    pub api_scalars: Vec<ScalarDecl>,
    pub computations: Vec<Computation>,
    /// Externals substituted into the body; empty before binding.
    pub externals: BTreeMap<String, ExternalValue>,
    pub span: Span,
}

impl StencilDefinition {
    pub fn field(&self, name: &str) -> Option<&FieldDecl> {
        self.api_fields.iter().find(|f| f.name == name)
    }

    pub fn scalar(&self, name: &str) -> Option<&ScalarDecl> {
        self.api_scalars.iter().find(|s| s.name == name)
    }

    pub fn statements(&self) -> impl Iterator<Item = &Stmt> {
        self.computations.iter().flat_map(|c| c.intervals.iter()).flat_map(|b| b.body.iter())
    }
}

/// Pure function usable from stencil bodies.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionDef {
    pub name: String,
    pub params: Vec<String>,
    pub body: Vec<Stmt>,
    pub return_expr: Expr,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TempDecl {
    pub name: String,
    pub dtype: DType,
    pub extent: Extent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub interval: Interval,
    pub body: Stmt,
    pub compute_extent: Extent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiStage {
    pub order: Order,
    pub stages: Vec<Stage>,
}

impl MultiStage {
    /// Consecutive stages sharing an interval, in listed order.
    pub fn interval_groups(&self) -> Vec<(Interval, &[Stage])> {
        let mut groups = Vec::new();
        let mut start = 0;
        for idx in 1..=self.stages.len() {
            if idx == self.stages.len() || self.stages[idx].interval != self.stages[start].interval {
                groups.push((self.stages[start].interval, &self.stages[start..idx]));
                start = idx;
            }
        }
        groups
    }
}

/// The implementation IR consumed by backends.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilImplementation {
    pub name: String,
    pub api_fields: Vec<FieldDecl>,
    pub api_scalars: Vec<ScalarDecl>,
    pub externals: BTreeMap<String, ExternalValue>,
    pub multistages: Vec<MultiStage>,
    pub temporaries: Vec<TempDecl>,
    /// Required access extent of every api field, in declaration order.
    pub field_extents: Vec<(String, Extent)>,
    /// Minimum vertical domain size.
    pub k_min: i64,
}

impl StencilImplementation {
    pub fn field_extent(&self, name: &str) -> Option<Extent> {
        self.field_extents.iter().find(|(n, _)| n == name).map(|(_, e)| *e)
    }

    pub fn temporary(&self, name: &str) -> Option<&TempDecl> {
        self.temporaries.iter().find(|t| t.name == name)
    }

    /// Api fields assigned somewhere in the stencil.
    pub fn written_fields(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for stage in self.multistages.iter().flat_map(|m| &m.stages) {
            for t in stage.body.targets() {
                if self.api_fields.iter().any(|f| f.name == t) && !out.contains(&t) {
                    out.push(t);
                }
            }
        }
        out
    }

    /// True when the horizontal plane can be cut into independent tiles:
    /// no written api field is ever read at a nonzero horizontal offset.
    pub fn horizontally_splittable(&self) -> bool {
        let written = self.written_fields();
        !self.multistages.iter().flat_map(|m| &m.stages).any(|stage| {
            stage
                .body
                .field_reads()
                .iter()
                .any(|(name, off, _)| written.contains(name) && !off.is_horizontal_zero())
        })
    }
}
