//! Tokenizer shared by the expression parsers and the model file reader.

use std::fmt;

use thiserror::Error;

/// Line/column position, 1-based, for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(u64),
    Decimal(f64),
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Amp,
    Tilde,
    Eq,
    Le,
    Lt,
    Ge,
    Gt,
    Plus,
    Star,
    Minus,
    Slash,
    Percent,
    /// `<-`
    Assign,
    /// `->`
    Arrow,
    Colon,
    DotDot,
    Newline,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(v) => write!(f, "`{v}`"),
            Tok::Decimal(v) => write!(f, "`{v}`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::LBrace => f.write_str("`{`"),
            Tok::RBrace => f.write_str("`}`"),
            Tok::LBracket => f.write_str("`[`"),
            Tok::RBracket => f.write_str("`]`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Amp => f.write_str("`&`"),
            Tok::Tilde => f.write_str("`~`"),
            Tok::Eq => f.write_str("`=`"),
            Tok::Le => f.write_str("`<=`"),
            Tok::Lt => f.write_str("`<`"),
            Tok::Ge => f.write_str("`>=`"),
            Tok::Gt => f.write_str("`>`"),
            Tok::Plus => f.write_str("`+`"),
            Tok::Star => f.write_str("`*`"),
            Tok::Minus => f.write_str("`-`"),
            Tok::Slash => f.write_str("`/`"),
            Tok::Percent => f.write_str("`%`"),
            Tok::Assign => f.write_str("`<-`"),
            Tok::Arrow => f.write_str("`->`"),
            Tok::Colon => f.write_str("`:`"),
            Tok::DotDot => f.write_str("`..`"),
            Tok::Newline => f.write_str("end of line"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LexError {
    #[error("{pos}: unexpected character `{ch}`")]
    InvalidChar { pos: Pos, ch: char },
    #[error("{pos}: malformed number")]
    BadNumber { pos: Pos },
}

/// Whether line breaks are significant to the caller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NewlineMode {
    /// Emit `Tok::Newline` at line breaks (model files are line-oriented).
    Keep,
    /// Treat line breaks as plain whitespace (standalone expressions).
    Skip,
}

pub fn lex(text: &str, mode: NewlineMode) -> Result<Vec<Token>, LexError> {
    let mut out: Vec<Token> = Vec::new();
    let mut chars = text.chars().peekable();
    let mut line: u32 = 1;
    let mut col: u32 = 1;

    macro_rules! push {
        ($tok:expr, $pos:expr) => {
            out.push(Token {
                tok: $tok,
                pos: $pos,
            })
        };
    }

    while let Some(&c) = chars.peek() {
        let pos = Pos { line, col };
        match c {
            '\n' => {
                chars.next();
                if mode == NewlineMode::Keep {
                    // collapse runs of blank lines into one separator
                    if !matches!(out.last().map(|t| &t.tok), Some(Tok::Newline) | None) {
                        push!(Tok::Newline, pos);
                    }
                }
                line += 1;
                col = 1;
            }
            ' ' | '\t' | '\r' => {
                chars.next();
                col += 1;
            }
            '#' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                    col += 1;
                }
            }
            c if c.is_ascii_digit() => {
                let mut digits = String::new();
                while let Some(&d) = chars.peek() {
                    if d.is_ascii_digit() {
                        digits.push(d);
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                let mut is_decimal = false;
                if chars.peek() == Some(&'.') {
                    // lookahead: `12..34` keeps the dots for a range token
                    let mut ahead = chars.clone();
                    ahead.next();
                    if ahead.peek().is_some_and(|d| d.is_ascii_digit()) {
                        is_decimal = true;
                        digits.push('.');
                        chars.next();
                        col += 1;
                        while let Some(&d) = chars.peek() {
                            if d.is_ascii_digit() {
                                digits.push(d);
                                chars.next();
                                col += 1;
                            } else {
                                break;
                            }
                        }
                    }
                }
                if is_decimal {
                    let v: f64 = digits.parse().map_err(|_| LexError::BadNumber { pos })?;
                    push!(Tok::Decimal(v), pos);
                } else {
                    let v: u64 = digits.parse().map_err(|_| LexError::BadNumber { pos })?;
                    push!(Tok::Int(v), pos);
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut name = String::new();
                while let Some(&d) = chars.peek() {
                    if d.is_ascii_alphanumeric() || d == '_' {
                        name.push(d);
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                push!(Tok::Ident(name), pos);
            }
            _ => {
                chars.next();
                col += 1;
                let tok = match c {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    ',' => Tok::Comma,
                    '&' => Tok::Amp,
                    '~' => Tok::Tilde,
                    '=' => Tok::Eq,
                    '+' => Tok::Plus,
                    '*' => Tok::Star,
                    '/' => Tok::Slash,
                    '%' => Tok::Percent,
                    ':' => Tok::Colon,
                    '<' => match chars.peek() {
                        Some('=') => {
                            chars.next();
                            col += 1;
                            Tok::Le
                        }
                        Some('-') => {
                            chars.next();
                            col += 1;
                            Tok::Assign
                        }
                        _ => Tok::Lt,
                    },
                    '>' => match chars.peek() {
                        Some('=') => {
                            chars.next();
                            col += 1;
                            Tok::Ge
                        }
                        _ => Tok::Gt,
                    },
                    '-' => match chars.peek() {
                        Some('>') => {
                            chars.next();
                            col += 1;
                            Tok::Arrow
                        }
                        _ => Tok::Minus,
                    },
                    '.' => match chars.peek() {
                        Some('.') => {
                            chars.next();
                            col += 1;
                            Tok::DotDot
                        }
                        _ => return Err(LexError::InvalidChar { pos, ch: '.' }),
                    },
                    other => return Err(LexError::InvalidChar { pos, ch: other }),
                };
                push!(tok, pos);
            }
        }
    }
    let end = Pos { line, col };
    if mode == NewlineMode::Keep && !matches!(out.last().map(|t| &t.tok), Some(Tok::Newline) | None)
    {
        push!(Tok::Newline, end);
    }
    push!(Tok::Eof, end);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(text: &str) -> Vec<Tok> {
        lex(text, NewlineMode::Skip)
            .unwrap()
            .into_iter()
            .map(|t| t.tok)
            .collect()
    }

    #[test]
    fn numbers_and_ranges() {
        assert_eq!(
            kinds("0.7 12 0..4"),
            vec![
                Tok::Decimal(0.7),
                Tok::Int(12),
                Tok::Int(0),
                Tok::DotDot,
                Tok::Int(4),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn compound_symbols() {
        assert_eq!(
            kinds("<= <- -> < - >= >"),
            vec![
                Tok::Le,
                Tok::Assign,
                Tok::Arrow,
                Tok::Lt,
                Tok::Minus,
                Tok::Ge,
                Tok::Gt,
                Tok::Eof
            ]
        );
    }

    #[test]
    fn comments_stripped() {
        assert_eq!(
            kinds("x # comment with <- symbols\n+ 1"),
            vec![
                Tok::Ident("x".into()),
                Tok::Plus,
                Tok::Int(1),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn newline_mode_keeps_separators() {
        let toks = lex("a\n\n\nb\n", NewlineMode::Keep).unwrap();
        let kinds: Vec<_> = toks.into_iter().map(|t| t.tok).collect();
        assert_eq!(
            kinds,
            vec![
                Tok::Ident("a".into()),
                Tok::Newline,
                Tok::Ident("b".into()),
                Tok::Newline,
                Tok::Eof
            ]
        );
    }
}
