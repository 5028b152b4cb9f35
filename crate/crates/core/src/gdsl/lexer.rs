use std::fmt;

use super::ast::Pos;
use super::parser::ParseError;

const KEYWORDS: &[&str] = &["let", "if", "else", "verdict", "grant", "deny", "with", "true", "false"];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.contains(&word)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Keyword(&'static str),
    Str(String),
    Int(i64),
    Punct(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Keyword(k) => write!(f, "`{k}`"),
            Tok::Str(s) => write!(f, "string {s:?}"),
            Tok::Int(i) => write!(f, "integer {i}"),
            Tok::Punct(p) => write!(f, "`{p}`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

const PUNCT: &[&str] = &[
    "==", "!=", "<=", ">=", "&&", "||", "(", ")", "{", "}", "[", "]", ",", ";", ":", ".", "=", "<",
    ">", "!",
];

pub fn tokenize(source: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = source.chars().collect();
    let mut tokens = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);

    macro_rules! advance {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }

    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            advance!();
            continue;
        }
        if c == '#' || (c == '/' && chars.get(i + 1) == Some(&'/')) {
            while i < chars.len() && chars[i] != '\n' {
                advance!();
            }
            continue;
        }
        let pos = Pos { line, column: col };
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                advance!();
            }
            let word: String = chars[start..i].iter().collect();
            let tok = match KEYWORDS.iter().find(|k| **k == word) {
                Some(k) => Tok::Keyword(k),
                None => Tok::Ident(word),
            };
            tokens.push(Token { tok, pos });
            continue;
        }
        if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(char::is_ascii_digit)) {
            let start = i;
            advance!();
            while i < chars.len() && chars[i].is_ascii_digit() {
                advance!();
            }
            let text: String = chars[start..i].iter().collect();
            let value = text.parse::<i64>().map_err(|_| {
                ParseError::new(pos, format!("integer literal {text} out of range"), vec![])
            })?;
            tokens.push(Token { tok: Tok::Int(value), pos });
            continue;
        }
        if c == '"' {
            advance!();
            let mut s = String::new();
            loop {
                let Some(&ch) = chars.get(i) else {
                    return Err(ParseError::new(pos, "unterminated string literal", vec!["`\"`".into()]));
                };
                match ch {
                    '"' => {
                        advance!();
                        break;
                    }
                    '\\' => {
                        advance!();
                        let esc = chars.get(i).copied();
                        let decoded = match esc {
                            Some('n') => '\n',
                            Some('t') => '\t',
                            Some('"') => '"',
                            Some('\\') => '\\',
                            _ => {
                                return Err(ParseError::new(
                                    Pos { line, column: col },
                                    "invalid escape sequence",
                                    vec![],
                                ))
                            }
                        };
                        s.push(decoded);
                        advance!();
                    }
                    '\n' => {
                        return Err(ParseError::new(pos, "unterminated string literal", vec!["`\"`".into()]));
                    }
                    other => {
                        s.push(other);
                        advance!();
                    }
                }
            }
            tokens.push(Token { tok: Tok::Str(s), pos });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match PUNCT.iter().find(|p| rest.starts_with(**p)) {
            Some(p) => {
                for _ in 0..p.len() {
                    advance!();
                }
                tokens.push(Token { tok: Tok::Punct(p), pos });
            }
            None => {
                return Err(ParseError::new(pos, format!("unexpected character {c:?}"), vec![]));
            }
        }
    }
    tokens.push(Token { tok: Tok::Eof, pos: Pos { line, column: col } });
    Ok(tokens)
}
