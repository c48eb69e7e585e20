//! Compiler diagnostics shared by the frontend and analysis passes.

use std::fmt;

use crate::ir::Span;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Severity {
    Error,
    Warning,
}

/// Stable diagnostic codes, rendered as `error[CODE]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DiagCode {
    // frontend
    Syntax,
    Indentation,
    UnknownKeyword,
    Recursion,
    Arity,
    UnknownFunction,
    InvalidArgument,
    UnboundExternal,
    ExternalType,
    DuplicateName,
    UnknownStencil,
    // analysis
    ParallelSelfDependency,
    SelfOffsetRead,
    SequentialOrderRead,
    ParallelVerticalRead,
    TargetOffset,
    ScalarAssignment,
    LoopCarriedOffset,
    ConditionalOffsetRead,
    OverlappingIntervals,
    IntervalOrderMismatch,
    EmptyInterval,
    UseBeforeDefine,
}

impl DiagCode {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagCode::Syntax => "E0001",
            DiagCode::Indentation => "E0002",
            DiagCode::UnknownKeyword => "E0003",
            DiagCode::Recursion => "E0004",
            DiagCode::Arity => "E0005",
            DiagCode::UnknownFunction => "E0006",
            DiagCode::InvalidArgument => "E0007",
            DiagCode::UnboundExternal => "E0008",
            DiagCode::ExternalType => "E0009",
            DiagCode::DuplicateName => "E0010",
            DiagCode::UnknownStencil => "E0011",
            DiagCode::ParallelSelfDependency => "E0101",
            DiagCode::SelfOffsetRead => "E0102",
            DiagCode::SequentialOrderRead => "E0103",
            DiagCode::ParallelVerticalRead => "E0104",
            DiagCode::TargetOffset => "E0105",
            DiagCode::ScalarAssignment => "E0106",
            DiagCode::LoopCarriedOffset => "E0107",
            DiagCode::ConditionalOffsetRead => "E0108",
            DiagCode::OverlappingIntervals => "E0201",
            DiagCode::IntervalOrderMismatch => "E0202",
            DiagCode::EmptyInterval => "E0203",
            DiagCode::UseBeforeDefine => "E0301",
        }
    }
}

impl fmt::Display for DiagCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: DiagCode,
    pub span: Span,
    pub message: String,
}

impl Diagnostic {
    pub fn error(code: DiagCode, span: Span, message: impl Into<String>) -> Self {
        Diagnostic { severity: Severity::Error, code, span, message: message.into() }
    }

    pub fn warning(code: DiagCode, span: Span, message: impl Into<String>) -> Self {
        Diagnostic { severity: Severity::Warning, code, span, message: message.into() }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }

    /// `file:line:col: error[CODE]: message`
    pub fn render(&self, file: &str) -> String {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        format!("{file}:{}:{}: {sev}[{}]: {}", self.span.line, self.span.col, self.code, self.message)
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render("<input>"))
    }
}

impl std::error::Error for Diagnostic {}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(Diagnostic::is_error)
}
