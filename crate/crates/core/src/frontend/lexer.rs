//! Indentation-aware tokenizer.
//!
//! Emits synthetic `Indent`/`Dedent` tokens at block boundaries. Newlines
//! inside parentheses or brackets are ignored. Comments start with `#`.

use crate::diagnostics::{DiagCode, Diagnostic};
use crate::ir::Span;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Float(f64),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Colon,
    Assign,
    Plus,
    Minus,
    Star,
    Slash,
    Lt,
    Le,
    Gt,
    Ge,
    EqEq,
    Ne,
    Newline,
    Indent,
    Dedent,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(v) => format!("`{v}`"),
            Tok::Float(v) => format!("`{v}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Assign => "`=`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Lt => "`<`".into(),
            Tok::Le => "`<=`".into(),
            Tok::Gt => "`>`".into(),
            Tok::Ge => "`>=`".into(),
            Tok::EqEq => "`==`".into(),
            Tok::Ne => "`!=`".into(),
            Tok::Newline => "end of line".into(),
            Tok::Indent => "indented block".into(),
            Tok::Dedent => "end of block".into(),
            Tok::Eof => "end of file".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, Diagnostic> {
    let mut tokens = Vec::new();
    let mut indents: Vec<usize> = vec![0];
    let mut depth = 0usize;
    let mut last_line = 0u32;

    for (idx, raw_line) in src.lines().enumerate() {
        let line_no = idx as u32 + 1;
        last_line = line_no;
        let chars: Vec<char> = raw_line.chars().collect();
        let mut pos = 0;

        if depth == 0 {
            let mut width = 0;
            while pos < chars.len() && (chars[pos] == ' ' || chars[pos] == '\t') {
                if chars[pos] == '\t' {
                    return Err(Diagnostic::error(
                        DiagCode::Indentation,
                        Span::new(line_no, pos as u32 + 1),
                        "tab in indentation; indent with spaces only",
                    ));
                }
                width += 1;
                pos += 1;
            }
            let rest = &chars[pos..];
            if rest.iter().all(|c| c.is_whitespace()) || rest.first() == Some(&'#') {
                continue;
            }
            let span = Span::new(line_no, pos as u32 + 1);
            let current = *indents.last().unwrap();
            if width > current {
                indents.push(width);
                tokens.push(Token { tok: Tok::Indent, span });
            } else if width < current {
                while *indents.last().unwrap() > width {
                    indents.pop();
                    tokens.push(Token { tok: Tok::Dedent, span });
                }
                if *indents.last().unwrap() != width {
                    return Err(Diagnostic::error(
                        DiagCode::Indentation,
                        span,
                        "unindent does not match any outer indentation level",
                    ));
                }
            }
        }

        while pos < chars.len() {
            let c = chars[pos];
            let span = Span::new(line_no, pos as u32 + 1);
            if c == ' ' || c == '\t' || c == '\r' {
                pos += 1;
                continue;
            }
            if c == '#' {
                break;
            }
            if c.is_ascii_alphabetic() || c == '_' {
                let start = pos;
                while pos < chars.len() && (chars[pos].is_ascii_alphanumeric() || chars[pos] == '_') {
                    pos += 1;
                }
                tokens.push(Token { tok: Tok::Ident(chars[start..pos].iter().collect()), span });
                continue;
            }
            if c.is_ascii_digit() || (c == '.' && chars.get(pos + 1).is_some_and(|d| d.is_ascii_digit())) {
                let (tok, next) = lex_number(&chars, pos, span)?;
                tokens.push(Token { tok, span });
                pos = next;
                continue;
            }
            let two: String = chars[pos..(pos + 2).min(chars.len())].iter().collect();
            let (tok, width) = match two.as_str() {
                "<=" => (Tok::Le, 2),
                ">=" => (Tok::Ge, 2),
                "==" => (Tok::EqEq, 2),
                "!=" => (Tok::Ne, 2),
                _ => match c {
                    '(' => (Tok::LParen, 1),
                    ')' => (Tok::RParen, 1),
                    '[' => (Tok::LBracket, 1),
                    ']' => (Tok::RBracket, 1),
                    ',' => (Tok::Comma, 1),
                    ':' => (Tok::Colon, 1),
                    '=' => (Tok::Assign, 1),
                    '+' => (Tok::Plus, 1),
                    '-' => (Tok::Minus, 1),
                    '*' => (Tok::Star, 1),
                    '/' => (Tok::Slash, 1),
                    '<' => (Tok::Lt, 1),
                    '>' => (Tok::Gt, 1),
                    other => {
                        return Err(Diagnostic::error(
                            DiagCode::Syntax,
                            span,
                            format!("unexpected character `{other}`"),
                        ))
                    }
                },
            };
            match tok {
                Tok::LParen | Tok::LBracket => depth += 1,
                Tok::RParen | Tok::RBracket => depth = depth.saturating_sub(1),
                _ => {}
            }
            tokens.push(Token { tok, span });
            pos += width;
        }

        if depth == 0 && tokens.last().is_some_and(|t| t.tok != Tok::Newline) {
            tokens.push(Token { tok: Tok::Newline, span: Span::new(line_no, chars.len() as u32 + 1) });
        }
    }

    let end = Span::new(last_line + 1, 1);
    if depth != 0 {
        return Err(Diagnostic::error(DiagCode::Syntax, end, "unclosed bracket at end of file"));
    }
    while indents.len() > 1 {
        indents.pop();
        tokens.push(Token { tok: Tok::Dedent, span: end });
    }
    tokens.push(Token { tok: Tok::Eof, span: end });
    Ok(tokens)
}

fn lex_number(chars: &[char], start: usize, span: Span) -> Result<(Tok, usize), Diagnostic> {
    let mut pos = start;
    let mut is_float = false;
    while pos < chars.len() && chars[pos].is_ascii_digit() {
        pos += 1;
    }
    if pos < chars.len() && chars[pos] == '.' {
        is_float = true;
        pos += 1;
        while pos < chars.len() && chars[pos].is_ascii_digit() {
            pos += 1;
        }
    }
    if pos < chars.len() && (chars[pos] == 'e' || chars[pos] == 'E') {
        let mut p = pos + 1;
        if p < chars.len() && (chars[p] == '+' || chars[p] == '-') {
            p += 1;
        }
        if p < chars.len() && chars[p].is_ascii_digit() {
            is_float = true;
            while p < chars.len() && chars[p].is_ascii_digit() {
                p += 1;
            }
            pos = p;
        }
    }
    let text: String = chars[start..pos].iter().collect();
    let bad = || Diagnostic::error(DiagCode::Syntax, span, format!("malformed number `{text}`"));
    if is_float {
        text.parse::<f64>().map(|v| (Tok::Float(v), pos)).map_err(|_| bad())
    } else {
        text.parse::<i64>().map(|v| (Tok::Int(v), pos)).map_err(|_| bad())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<Tok> {
        tokenize(src).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn emits_indent_and_dedent() {
        let toks = kinds("a:\n  b = 1\nc = 2\n");
        assert_eq!(
            toks,
            vec![
                Tok::Ident("a".into()),
                Tok::Colon,
                Tok::Newline,
                Tok::Indent,
                Tok::Ident("b".into()),
                Tok::Assign,
                Tok::Int(1),
                Tok::Newline,
                Tok::Dedent,
                Tok::Ident("c".into()),
                Tok::Assign,
                Tok::Int(2),
                Tok::Newline,
                Tok::Eof
            ]
        );
    }

    #[test]
    fn tab_indentation_is_rejected() {
        let err = tokenize("a:\n\tb = 1\n").unwrap_err();
        assert_eq!(err.code, DiagCode::Indentation);
        assert_eq!(err.span, Span::new(2, 1));
    }

    #[test]
    fn inconsistent_dedent_is_rejected() {
        let err = tokenize("a:\n    b = 1\n  c = 2\n").unwrap_err();
        assert_eq!(err.code, DiagCode::Indentation);
    }

    #[test]
    fn brackets_join_lines_and_comments_vanish() {
        let toks = kinds("x = f(a,\n      b)  # trailing\n# only a comment\n\n");
        assert!(!toks[..toks.len() - 2].contains(&Tok::Newline));
        assert_eq!(toks.iter().filter(|t| **t == Tok::Newline).count(), 1);
    }

    #[test]
    fn numbers() {
        assert_eq!(kinds("1e-3")[0], Tok::Float(1e-3));
        assert_eq!(kinds("4.0")[0], Tok::Float(4.0));
        assert_eq!(kinds(".5")[0], Tok::Float(0.5));
        assert_eq!(kinds("42")[0], Tok::Int(42));
    }
}
