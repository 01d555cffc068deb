//! Full-statement SQL: a character-level lexer and a recursive-descent parser
//! for the subset the embedded victim database executes.
//!
//! Supported: `SELECT` (with `WHERE`, `UNION [ALL]`, `ORDER BY n`), `INSERT`
//! (multi-row `VALUES`), `UPDATE ... SET ... [WHERE]`, `DROP TABLE`, and
//! `WAITFOR DELAY`. Comments (`--`, `#` to end of line, `/* ... */`) are
//! skipped; the byte offset of the first one is reported so callers can tell
//! when a comment swallowed the rest of a query.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SqlError {
    #[error("unterminated string literal at byte {0}")]
    UnterminatedString(usize),
    #[error("unexpected character {1:?} at byte {0}")]
    UnexpectedChar(usize, char),
    #[error("syntax error at token {0}: {1}")]
    Syntax(usize, String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Str(String),
    Sym(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lexed {
    pub tokens: Vec<Tok>,
    /// Byte offset of the first comment, if any.
    pub first_comment: Option<usize>,
}

const SYMBOLS: &[&str] = &["<=", ">=", "<>", "!=", "(", ")", ",", ";", "=", "<", ">", "*", "-", "+"];

pub fn lex(src: &str) -> Result<Lexed, SqlError> {
    let bytes = src.as_bytes();
    let mut tokens = Vec::new();
    let mut first_comment = None;
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let rest = &src[i..];
        if rest.starts_with("--") || c == b'#' {
            first_comment.get_or_insert(i);
            i += rest.find('\n').unwrap_or(rest.len());
            continue;
        }
        if rest.starts_with("/*") {
            first_comment.get_or_insert(i);
            i += rest[2..].find("*/").map(|e| e + 4).unwrap_or(rest.len());
            continue;
        }
        if c == b'\'' || c == b'"' {
            let quote = c;
            let mut j = i + 1;
            let mut value = Vec::new();
            loop {
                match bytes.get(j) {
                    None => return Err(SqlError::UnterminatedString(i)),
                    Some(&b) if b == quote => {
                        if bytes.get(j + 1) == Some(&quote) {
                            value.push(quote);
                            j += 2;
                        } else {
                            j += 1;
                            break;
                        }
                    }
                    Some(&b) => {
                        value.push(b);
                        j += 1;
                    }
                }
            }
            tokens.push(Tok::Str(String::from_utf8_lossy(&value).into_owned()));
            i = j;
            continue;
        }
        if c.is_ascii_digit() {
            let end = rest.find(|ch: char| !ch.is_ascii_digit()).unwrap_or(rest.len());
            // Out-of-range literals saturate rather than fail.
            let n = rest[..end].parse::<i64>().unwrap_or(i64::MAX);
            tokens.push(Tok::Int(n));
            i += end;
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' || c == b'@' {
            let end = rest
                .find(|ch: char| !(ch.is_ascii_alphanumeric() || ch == '_' || ch == '.' || ch == '@' || ch == '$'))
                .unwrap_or(rest.len());
            tokens.push(Tok::Ident(rest[..end].to_string()));
            i += end;
            continue;
        }
        if let Some(sym) = SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            tokens.push(Tok::Sym(sym));
            i += sym.len();
            continue;
        }
        let ch = rest.chars().next().expect("non-empty");
        return Err(SqlError::UnexpectedChar(i, ch));
    }
    Ok(Lexed { tokens, first_comment })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Int(i64),
    Str(String),
    Null,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Like,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Lit(Literal),
    Column(String),
    Neg(Box<Expr>),
    Cmp(CmpOp, Box<Expr>, Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    Call(String, Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Projection {
    Star,
    Exprs(Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Select {
    pub projection: Projection,
    pub from: Option<String>,
    pub filter: Option<Expr>,
    pub union: Option<(bool, Box<Select>)>,
    pub order_by: Vec<i64>,
}

impl Select {
    pub fn has_union(&self) -> bool {
        self.union.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Statement {
    Select(Select),
    Insert { table: String, columns: Option<Vec<String>>, rows: Vec<Vec<Expr>> },
    Update { table: String, assignments: Vec<(String, Expr)>, filter: Option<Expr> },
    Drop { table: String },
    WaitFor(String),
}

impl Statement {
    pub fn kind(&self) -> &'static str {
        match self {
            Statement::Select(_) => "select",
            Statement::Insert { .. } => "insert",
            Statement::Update { .. } => "update",
            Statement::Drop { .. } => "drop",
            Statement::WaitFor(_) => "waitfor",
        }
    }
}

/// A parsed script: statements separated by `;` (empty ones dropped).
#[derive(Debug, Clone, PartialEq)]
pub struct Script {
    pub statements: Vec<Statement>,
    pub first_comment: Option<usize>,
}

pub fn parse_script(src: &str) -> Result<Script, SqlError> {
    let lexed = lex(src)?;
    let mut p = Parser { toks: &lexed.tokens, pos: 0 };
    let mut statements = Vec::new();
    loop {
        while p.eat_sym(";") {}
        if p.at_end() {
            break;
        }
        statements.push(p.statement()?);
        if !p.at_end() && !p.eat_sym(";") {
            return Err(p.error("expected ';' or end of input"));
        }
    }
    Ok(Script { statements, first_comment: lexed.first_comment })
}

struct Parser<'a> {
    toks: &'a [Tok],
    pos: usize,
}

impl Parser<'_> {
    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn error(&self, msg: &str) -> SqlError {
        SqlError::Syntax(self.pos, msg.to_string())
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Sym(x)) if *x == s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), SqlError> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            Err(self.error(&format!("expected {s:?}")))
        }
    }

    fn peek_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(x)) if x.eq_ignore_ascii_case(kw))
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.peek_kw(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), SqlError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.error(&format!("expected {kw}")))
        }
    }

    fn ident(&mut self) -> Result<String, SqlError> {
        match self.peek() {
            Some(Tok::Ident(s)) if !is_reserved(s) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.error("expected identifier")),
        }
    }

    fn statement(&mut self) -> Result<Statement, SqlError> {
        if self.peek_kw("SELECT") {
            return Ok(Statement::Select(self.select()?));
        }
        if self.eat_kw("INSERT") {
            self.expect_kw("INTO")?;
            let table = self.ident()?;
            let columns = if self.eat_sym("(") {
                let mut cols = vec![self.ident()?];
                while self.eat_sym(",") {
                    cols.push(self.ident()?);
                }
                self.expect_sym(")")?;
                Some(cols)
            } else {
                None
            };
            self.expect_kw("VALUES")?;
            let mut rows = Vec::new();
            loop {
                self.expect_sym("(")?;
                let mut row = vec![self.expr()?];
                while self.eat_sym(",") {
                    row.push(self.expr()?);
                }
                self.expect_sym(")")?;
                rows.push(row);
                if !self.eat_sym(",") {
                    break;
                }
            }
            return Ok(Statement::Insert { table, columns, rows });
        }
        if self.eat_kw("UPDATE") {
            let table = self.ident()?;
            self.expect_kw("SET")?;
            let mut assignments = Vec::new();
            loop {
                let col = self.ident()?;
                self.expect_sym("=")?;
                assignments.push((col, self.expr()?));
                if !self.eat_sym(",") {
                    break;
                }
            }
            let filter = if self.eat_kw("WHERE") { Some(self.expr()?) } else { None };
            return Ok(Statement::Update { table, assignments, filter });
        }
        if self.eat_kw("DROP") {
            self.expect_kw("TABLE")?;
            return Ok(Statement::Drop { table: self.ident()? });
        }
        if self.eat_kw("WAITFOR") {
            self.expect_kw("DELAY")?;
            return match self.peek() {
                Some(Tok::Str(s)) => {
                    let s = s.clone();
                    self.pos += 1;
                    Ok(Statement::WaitFor(s))
                }
                _ => Err(self.error("expected delay string")),
            };
        }
        Err(self.error("expected statement"))
    }

    fn select(&mut self) -> Result<Select, SqlError> {
        self.expect_kw("SELECT")?;
        let projection = if self.eat_sym("*") {
            Projection::Star
        } else {
            let mut items = vec![self.expr()?];
            while self.eat_sym(",") {
                items.push(self.expr()?);
            }
            Projection::Exprs(items)
        };
        let from = if self.eat_kw("FROM") { Some(self.ident()?) } else { None };
        let filter = if self.eat_kw("WHERE") { Some(self.expr()?) } else { None };
        let union = if self.eat_kw("UNION") {
            let all = self.eat_kw("ALL");
            Some((all, Box::new(self.select()?)))
        } else {
            None
        };
        let mut order_by = Vec::new();
        if self.eat_kw("ORDER") {
            self.expect_kw("BY")?;
            loop {
                match self.peek() {
                    Some(Tok::Int(n)) => {
                        order_by.push(*n);
                        self.pos += 1;
                    }
                    _ => return Err(self.error("expected column number")),
                }
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        Ok(Select { projection, from, filter, union, order_by })
    }

    fn expr(&mut self) -> Result<Expr, SqlError> {
        let mut lhs = self.and_expr()?;
        while self.eat_kw("OR") {
            lhs = Expr::Or(Box::new(lhs), Box::new(self.and_expr()?));
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, SqlError> {
        let mut lhs = self.not_expr()?;
        while self.eat_kw("AND") {
            lhs = Expr::And(Box::new(lhs), Box::new(self.not_expr()?));
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> Result<Expr, SqlError> {
        if self.eat_kw("NOT") {
            return Ok(Expr::Not(Box::new(self.not_expr()?)));
        }
        let lhs = self.primary()?;
        let op = match self.peek() {
            Some(Tok::Sym("=")) => CmpOp::Eq,
            Some(Tok::Sym("<>")) | Some(Tok::Sym("!=")) => CmpOp::Ne,
            Some(Tok::Sym("<")) => CmpOp::Lt,
            Some(Tok::Sym("<=")) => CmpOp::Le,
            Some(Tok::Sym(">")) => CmpOp::Gt,
            Some(Tok::Sym(">=")) => CmpOp::Ge,
            Some(Tok::Ident(k)) if k.eq_ignore_ascii_case("LIKE") => CmpOp::Like,
            _ => return Ok(lhs),
        };
        self.pos += 1;
        let rhs = self.primary()?;
        Ok(Expr::Cmp(op, Box::new(lhs), Box::new(rhs)))
    }

    fn primary(&mut self) -> Result<Expr, SqlError> {
        match self.peek().cloned() {
            Some(Tok::Int(n)) => {
                self.pos += 1;
                Ok(Expr::Lit(Literal::Int(n)))
            }
            Some(Tok::Str(s)) => {
                self.pos += 1;
                Ok(Expr::Lit(Literal::Str(s)))
            }
            Some(Tok::Sym("-")) => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.primary()?)))
            }
            Some(Tok::Sym("(")) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Some(Tok::Ident(s)) if s.eq_ignore_ascii_case("NULL") => {
                self.pos += 1;
                Ok(Expr::Lit(Literal::Null))
            }
            Some(Tok::Ident(s)) if !is_reserved(&s) => {
                self.pos += 1;
                if self.eat_sym("(") {
                    let mut args = Vec::new();
                    if !self.eat_sym(")") {
                        args.push(self.expr()?);
                        while self.eat_sym(",") {
                            args.push(self.expr()?);
                        }
                        self.expect_sym(")")?;
                    }
                    Ok(Expr::Call(s, args))
                } else {
                    Ok(Expr::Column(s))
                }
            }
            _ => Err(self.error("expected expression")),
        }
    }
}

const RESERVED_WORDS: &[&str] = &[
    "AND", "BY", "DELAY", "DROP", "FROM", "INSERT", "INTO", "LIKE", "NOT", "NULL", "OR", "ORDER",
    "SELECT", "SET", "TABLE", "UNION", "UPDATE", "VALUES", "WAITFOR", "WHERE", "ALL",
];

fn is_reserved(s: &str) -> bool {
    RESERVED_WORDS.iter().any(|k| k.eq_ignore_ascii_case(s))
}

/// Escapes text for use inside a single-quoted SQL literal.
pub fn escape_literal(s: &str) -> String {
    s.replace('\'', "''")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_comments_and_strings() {
        let q = "SELECT * FROM users WHERE name = '' OR 'a' = 'a' ; --'";
        let l = lex(q).unwrap();
        assert_eq!(l.first_comment, q.find("--"));
        assert!(l.tokens.contains(&Tok::Str("a".into())));
        assert_eq!(lex("'it''s'").unwrap().tokens, [Tok::Str("it's".into())]);
        assert!(matches!(lex("'open"), Err(SqlError::UnterminatedString(0))));
    }

    #[test]
    fn parses_stacked_script() {
        let s = parse_script("SELECT * FROM users WHERE id = 1 ; DROP TABLE users ; --").unwrap();
        assert_eq!(s.statements.len(), 2);
        assert_eq!(s.statements[1].kind(), "drop");
    }

    #[test]
    fn parses_union_and_order() {
        let s = parse_script("SELECT name FROM users WHERE name = '' UNION SELECT secret FROM credentials").unwrap();
        let Statement::Select(sel) = &s.statements[0] else { panic!() };
        assert!(sel.has_union());
        let s = parse_script("SELECT * FROM users ORDER BY 2").unwrap();
        let Statement::Select(sel) = &s.statements[0] else { panic!() };
        assert_eq!(sel.order_by, [2]);
    }

    #[test]
    fn precedence_and_binds_tighter() {
        let s = parse_script("SELECT * FROM t WHERE a = 1 OR b = 2 AND c = 3").unwrap();
        let Statement::Select(sel) = &s.statements[0] else { panic!() };
        assert!(matches!(sel.filter, Some(Expr::Or(_, _))));
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_script("SELECT * FROM users WHERE name = 'IF ('a'").is_err());
        assert!(parse_script("SELECT FROM").is_err());
        assert!(parse_script("SELECT 1 SELECT 2").is_err());
    }
}
