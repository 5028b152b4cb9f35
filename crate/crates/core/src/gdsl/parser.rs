//! Recursive-descent parser for guardrail programs.

use std::fmt;

use super::ast::{BinOp, Decision, Expr, ExprKind, Pos, Program, Stmt};
use super::lexer::{tokenize, Tok, Token};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub pos: Pos,
    pub message: String,
    pub expected: Vec<String>,
}

impl ParseError {
    pub fn new(pos: Pos, message: impl Into<String>, expected: Vec<String>) -> Self {
        Self { pos, message: message.into(), expected }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "syntax error at line {}, column {}: {}", self.pos.line, self.pos.column, self.message)?;
        if !self.expected.is_empty() {
            write!(f, " (expected one of: {})", self.expected.join(", "))?;
        }
        Ok(())
    }
}

impl std::error::Error for ParseError {}

pub fn parse(source: &str) -> Result<Program, ParseError> {
    let tokens = tokenize(source)?;
    let mut p = Parser { tokens, at: 0 };
    let mut stmts = Vec::new();
    while p.peek().tok != Tok::Eof {
        stmts.push(p.stmt()?);
    }
    Ok(Program { stmts })
}

struct Parser {
    tokens: Vec<Token>,
    at: usize,
}

const STMT_START: &[&str] = &["`let`", "`if`", "`verdict`"];
const EXPR_START: &[&str] = &[
    "identifier",
    "string",
    "integer",
    "`true`",
    "`false`",
    "`(`",
    "`[`",
    "`{`",
    "`!`",
];

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.at]
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.at].clone();
        if self.at + 1 < self.tokens.len() {
            self.at += 1;
        }
        t
    }

    fn error<T>(&self, expected: &[&str]) -> Result<T, ParseError> {
        let t = self.peek();
        Err(ParseError::new(
            t.pos,
            format!("unexpected {}", t.tok),
            expected.iter().map(|s| s.to_string()).collect(),
        ))
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(&self.peek().tok, Tok::Punct(q) if *q == p)
    }

    fn is_keyword(&self, k: &str) -> bool {
        matches!(&self.peek().tok, Tok::Keyword(q) if *q == k)
    }

    fn expect_punct(&mut self, p: &'static str) -> Result<Pos, ParseError> {
        if self.is_punct(p) {
            Ok(self.bump().pos)
        } else {
            self.error(&[&format!("`{p}`")])
        }
    }

    fn expect_ident(&mut self) -> Result<(String, Pos), ParseError> {
        match &self.peek().tok {
            Tok::Ident(name) => {
                let name = name.clone();
                let pos = self.bump().pos;
                Ok((name, pos))
            }
            _ => self.error(&["identifier"]),
        }
    }

    fn stmt(&mut self) -> Result<Stmt, ParseError> {
        let pos = self.peek().pos;
        match &self.peek().tok {
            Tok::Keyword("let") => {
                self.bump();
                let (name, _) = self.expect_ident()?;
                self.expect_punct("=")?;
                let value = self.expr()?;
                self.expect_punct(";")?;
                Ok(Stmt::Let { name, value, pos })
            }
            Tok::Keyword("if") => self.if_stmt(),
            Tok::Keyword("verdict") => {
                self.bump();
                let decision = if self.is_keyword("grant") {
                    self.bump();
                    Decision::Grant
                } else if self.is_keyword("deny") {
                    self.bump();
                    self.expect_punct("(")?;
                    let message = self.expr()?;
                    self.expect_punct(",")?;
                    let details = self.expr()?;
                    self.expect_punct(")")?;
                    Decision::Deny { message, details }
                } else {
                    return self.error(&["`grant`", "`deny`"]);
                };
                let risk = if self.is_keyword("with") {
                    self.bump();
                    match &self.peek().tok {
                        Tok::Ident(w) if w == "risk" => {
                            self.bump();
                        }
                        _ => return self.error(&["`risk`"]),
                    }
                    Some(self.expr()?)
                } else {
                    None
                };
                if self.is_punct(";") {
                    self.bump();
                }
                Ok(Stmt::Verdict { decision, risk, pos })
            }
            _ => self.error(STMT_START),
        }
    }

    fn if_stmt(&mut self) -> Result<Stmt, ParseError> {
        let pos = self.bump().pos;
        let cond = self.expr()?;
        let then_branch = self.block()?;
        let else_branch = if self.is_keyword("else") {
            self.bump();
            if self.is_keyword("if") {
                Some(vec![self.if_stmt()?])
            } else if self.is_punct("{") {
                Some(self.block()?)
            } else {
                return self.error(&["`if`", "`{`"]);
            }
        } else {
            None
        };
        Ok(Stmt::If { cond, then_branch, else_branch, pos })
    }

    fn block(&mut self) -> Result<Vec<Stmt>, ParseError> {
        self.expect_punct("{")?;
        let mut stmts = Vec::new();
        while !self.is_punct("}") {
            if self.peek().tok == Tok::Eof {
                let mut expected = STMT_START.to_vec();
                expected.push("`}`");
                return self.error(&expected);
            }
            stmts.push(self.stmt()?);
        }
        self.bump();
        Ok(stmts)
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.binary_level(0)
    }

    fn binary_level(&mut self, level: usize) -> Result<Expr, ParseError> {
        const LEVELS: [&[(&str, BinOp)]; 3] = [
            &[("||", BinOp::Or)],
            &[("&&", BinOp::And)],
            &[
                ("==", BinOp::Eq),
                ("!=", BinOp::Ne),
                ("<=", BinOp::Le),
                (">=", BinOp::Ge),
                ("<", BinOp::Lt),
                (">", BinOp::Gt),
            ],
        ];
        if level == LEVELS.len() {
            return self.unary();
        }
        let mut lhs = self.binary_level(level + 1)?;
        loop {
            let op = LEVELS[level]
                .iter()
                .find(|(sym, _)| self.is_punct(sym))
                .map(|(_, op)| *op);
            let Some(op) = op else { break };
            let pos = self.bump().pos;
            let rhs = self.binary_level(level + 1)?;
            lhs = Expr {
                kind: ExprKind::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) },
                pos,
            };
            // comparisons do not chain
            if level == 2 {
                break;
            }
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.is_punct("!") {
            let pos = self.bump().pos;
            let inner = self.unary()?;
            return Ok(Expr { kind: ExprKind::Not(Box::new(inner)), pos });
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.primary()?;
        loop {
            if self.is_punct(".") {
                let pos = self.bump().pos;
                let (field, _) = self.expect_ident()?;
                e = Expr { kind: ExprKind::Field { base: Box::new(e), field }, pos };
            } else if self.is_punct("[") {
                let pos = self.bump().pos;
                let index = self.expr()?;
                self.expect_punct("]")?;
                e = Expr {
                    kind: ExprKind::Index { base: Box::new(e), index: Box::new(index) },
                    pos,
                };
            } else {
                return Ok(e);
            }
        }
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let pos = self.peek().pos;
        let kind = match self.peek().tok.clone() {
            Tok::Str(s) => {
                self.bump();
                ExprKind::Str(s)
            }
            Tok::Int(i) => {
                self.bump();
                ExprKind::Int(i)
            }
            Tok::Keyword("true") => {
                self.bump();
                ExprKind::Bool(true)
            }
            Tok::Keyword("false") => {
                self.bump();
                ExprKind::Bool(false)
            }
            Tok::Ident(name) => {
                self.bump();
                if self.is_punct("(") {
                    self.bump();
                    let args = self.comma_list(")", Self::expr)?;
                    ExprKind::Call { name, args }
                } else {
                    ExprKind::Var(name)
                }
            }
            Tok::Punct("(") => {
                self.bump();
                let inner = self.expr()?;
                self.expect_punct(")")?;
                return Ok(inner);
            }
            Tok::Punct("[") => {
                self.bump();
                ExprKind::List(self.comma_list("]", Self::expr)?)
            }
            Tok::Punct("{") => {
                self.bump();
                ExprKind::Map(self.comma_list("}", Self::map_entry)?)
            }
            _ => return self.error(EXPR_START),
        };
        Ok(Expr { kind, pos })
    }

    fn map_entry(&mut self) -> Result<(String, Expr), ParseError> {
        let key = match self.peek().tok.clone() {
            Tok::Str(s) | Tok::Ident(s) => {
                self.bump();
                s
            }
            _ => return self.error(&["string", "identifier"]),
        };
        self.expect_punct(":")?;
        Ok((key, self.expr()?))
    }

    /// Parses `item, item, ...` up to and including `close`; a trailing
    /// comma is allowed.
    fn comma_list<T>(
        &mut self,
        close: &'static str,
        mut item: impl FnMut(&mut Self) -> Result<T, ParseError>,
    ) -> Result<Vec<T>, ParseError> {
        let mut items = Vec::new();
        loop {
            if self.is_punct(close) {
                self.bump();
                return Ok(items);
            }
            items.push(item(self)?);
            if self.is_punct(",") {
                self.bump();
            } else if !self.is_punct(close) {
                return self.error(&["`,`", &format!("`{close}`")]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub const CANONICAL_ACCESS: &str = "let r = check_access(role, required, permissions);\nif r.denied {\n    verdict deny(\"access denied\", r.inaccessible)\n} else {\n    verdict grant\n}\n";

    #[test]
    fn minimal_program() {
        let p = parse("verdict grant").unwrap();
        assert_eq!(p.stmts.len(), 1);
    }

    #[test]
    fn canonical_access_program() {
        let p = parse(CANONICAL_ACCESS).unwrap();
        assert_eq!(p.stmts.len(), 2);
        assert!(matches!(&p.stmts[1], Stmt::If { else_branch: Some(_), .. }));
    }

    #[test]
    fn bare_verdict_reports_missing_keyword_column() {
        let err = parse("verdict").unwrap_err();
        assert_eq!(err.pos, Pos { line: 1, column: 8 });
        assert_eq!(err.expected, vec!["`grant`", "`deny`"]);
        assert!(err.to_string().contains("column 8"));
    }

    #[test]
    fn literals_and_postfix() {
        let p = parse(
            "let m = {\"lab\": [\"labname\"], other: [1, 2,]};\nlet x = m.other[0] == 1 && !false;\nverdict deny(\"action denied\", [1]) with risk \"low\";",
        )
        .unwrap();
        assert_eq!(p.stmts.len(), 3);
    }

    #[test]
    fn else_if_chains() {
        let p = parse("if a { verdict grant } else if b { verdict grant } else { verdict deny(\"x\", []) }").unwrap();
        let Stmt::If { else_branch: Some(e), .. } = &p.stmts[0] else { panic!() };
        assert!(matches!(e[0], Stmt::If { .. }));
    }

    #[test]
    fn unclosed_block() {
        let err = parse("if x { verdict grant").unwrap_err();
        assert!(err.expected.contains(&"`}`".to_string()));
    }

    #[test]
    fn missing_semicolon_after_let() {
        let err = parse("let a = 1\nverdict grant").unwrap_err();
        assert_eq!(err.pos, Pos { line: 2, column: 1 });
        assert_eq!(err.expected, vec!["`;`"]);
    }

    #[test]
    fn python_style_source_is_rejected() {
        assert!(parse("def check():\n    return True").is_err());
    }
}
