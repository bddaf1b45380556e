//! Tokenizer with line/column positions. `#` starts a line comment.

use super::DslError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Number(f64),
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    LParen,
    RParen,
    Semi,
    Comma,
    Eq,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    At,
    Prime,
    Colon,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier '{s}'"),
            Tok::Number(n) => format!("number {n}"),
            Tok::Eof => "end of input".into(),
            t => format!("'{}'", t.glyph()),
        }
    }

    fn glyph(&self) -> &'static str {
        match self {
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::Semi => ";",
            Tok::Comma => ",",
            Tok::Eq => "=",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::Caret => "^",
            Tok::At => "@",
            Tok::Prime => "'",
            Tok::Colon => ":",
            _ => "?",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

pub fn lex(text: &str) -> Result<Vec<(Tok, Pos)>, DslError> {
    let mut out = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut chars = text.chars().peekable();

    macro_rules! bump {
        () => {{
            let c = chars.next().unwrap();
            if c == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            c
        }};
    }

    while let Some(&c) = chars.peek() {
        let pos = Pos { line, col };
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                bump!();
            }
            '#' => {
                while let Some(&c2) = chars.peek() {
                    if c2 == '\n' {
                        break;
                    }
                    bump!();
                }
            }
            '{' => {
                bump!();
                out.push((Tok::LBrace, pos));
            }
            '}' => {
                bump!();
                out.push((Tok::RBrace, pos));
            }
            '[' => {
                bump!();
                out.push((Tok::LBracket, pos));
            }
            ']' => {
                bump!();
                out.push((Tok::RBracket, pos));
            }
            '(' => {
                bump!();
                out.push((Tok::LParen, pos));
            }
            ')' => {
                bump!();
                out.push((Tok::RParen, pos));
            }
            ';' => {
                bump!();
                out.push((Tok::Semi, pos));
            }
            ',' => {
                bump!();
                out.push((Tok::Comma, pos));
            }
            '=' => {
                bump!();
                out.push((Tok::Eq, pos));
            }
            '+' => {
                bump!();
                out.push((Tok::Plus, pos));
            }
            '-' => {
                bump!();
                out.push((Tok::Minus, pos));
            }
            '*' => {
                bump!();
                out.push((Tok::Star, pos));
            }
            '/' => {
                bump!();
                out.push((Tok::Slash, pos));
            }
            '^' => {
                bump!();
                out.push((Tok::Caret, pos));
            }
            '@' => {
                bump!();
                out.push((Tok::At, pos));
            }
            '\'' => {
                bump!();
                out.push((Tok::Prime, pos));
            }
            ':' => {
                bump!();
                out.push((Tok::Colon, pos));
            }
            c if c.is_ascii_digit() || c == '.' => {
                let mut s = String::new();
                while let Some(&c2) = chars.peek() {
                    if c2.is_ascii_digit() || c2 == '.' {
                        s.push(bump!());
                    } else if c2 == 'e' || c2 == 'E' {
                        // exponent only if followed by digit or sign+digit
                        let mut look = chars.clone();
                        look.next();
                        match look.peek() {
                            Some(&d) if d.is_ascii_digit() => {
                                s.push(bump!());
                            }
                            Some(&('+' | '-')) => {
                                look.next();
                                if matches!(look.peek(), Some(d) if d.is_ascii_digit()) {
                                    s.push(bump!()); // e
                                    s.push(bump!()); // sign
                                } else {
                                    break;
                                }
                            }
                            _ => break,
                        }
                    } else {
                        break;
                    }
                }
                let n: f64 = s.parse().map_err(|_| DslError::Syntax {
                    line: pos.line,
                    col: pos.col,
                    msg: format!("malformed number '{s}'"),
                })?;
                out.push((Tok::Number(n), pos));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(&c2) = chars.peek() {
                    if c2.is_ascii_alphanumeric() || c2 == '_' {
                        s.push(bump!());
                    } else {
                        break;
                    }
                }
                out.push((Tok::Ident(s), pos));
            }
            other => {
                return Err(DslError::Syntax {
                    line: pos.line,
                    col: pos.col,
                    msg: format!("unexpected character '{other}'"),
                })
            }
        }
    }
    out.push((
        Tok::Eof,
        Pos { line, col },
    ));
    Ok(out)
}
