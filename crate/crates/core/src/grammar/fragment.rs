//! SQL-injection fragment grammar.
//!
//! ```text
//! fragment   := if_block | lead body
//! lead       := [value] [quote] [")"]          value := ["-"] NUM | STR | IDENT
//! body       := [bool_tail] [order_tail] [union_tail] {";" [statement]} [comment]
//!               (non-empty whenever lead ends in a quote or ")")
//! bool_tail  := (OR|AND) cond {(OR|AND) cond}
//! cond       := NOT cond | "(" cond_expr ")" | call | operand cmp operand
//! cmp        := "=" | "<" | ">" | "<" "=" | ">" "=" | "<" ">" | "!" "=" | LIKE
//! order_tail := ORDER BY NUM {"," NUM}
//! union_tail := UNION [ALL] SELECT item{1..5} [FROM IDENT]
//! statement  := INSERT INTO IDENT ["(" IDENT {"," IDENT} ")"] VALUES "(" literal {"," literal} ")"
//!             | UPDATE IDENT SET IDENT "=" literal {"," IDENT "=" literal} [WHERE cond_expr]
//!             | DROP TABLE IDENT
//!             | SELECT item{1..5} [FROM IDENT] [WHERE cond_expr]
//!             | WAITFOR DELAY STR
//!             | if_block
//! if_block   := IF "(" cond_expr ")" THEN action ";" [ELSE action ";"] END IF ";" [END ";"]
//! comment    := ("--" | "#") EOF
//! ```

use super::parser::{is_number, is_quote, is_sql_identifier, is_string_literal, Cursor, PResult};

const MAX_UNION_COLUMNS: usize = 5;

pub(super) fn parse(toks: &[&str]) -> (Result<(), usize>, Vec<&'static str>) {
    let mut c = Cursor::new(toks);
    let r = fragment(&mut c);
    (r, c.trace)
}

fn fragment(c: &mut Cursor) -> PResult {
    if c.at_end() {
        return c.fail();
    }
    if c.peek_kw("IF") {
        c.rule("if_block");
        if_block(c)?;
        return c.expect_end();
    }
    let closed = lead(c)?;
    let start = c.pos;
    body(c)?;
    if closed && c.pos == start {
        return c.fail();
    }
    c.expect_end()
}

/// Returns true when the lead ends by closing a literal or parenthesis.
fn lead(c: &mut Cursor) -> Result<bool, usize> {
    let mut any = false;
    if c.peek() == Some("-") && c.peek_at(1).is_some_and(is_number) {
        c.bump();
    }
    if c.peek().is_some_and(|t| is_number(t) || is_string_literal(t) || is_sql_identifier(t)) {
        c.rule("lead_value");
        c.bump();
        any = true;
    }
    let mut closed = false;
    if c.peek().is_some_and(is_quote) {
        c.rule("lead_quote");
        c.bump();
        closed = true;
    }
    if c.eat(")") {
        closed = true;
    }
    if !any && !closed && c.at_end() {
        return c.fail();
    }
    Ok(closed)
}

fn body(c: &mut Cursor) -> PResult {
    if c.peek_kw("OR") || c.peek_kw("AND") {
        c.rule("bool_tail");
        while c.eat_kw("OR") || c.eat_kw("AND") {
            cond(c)?;
        }
    }
    if c.eat_kw("ORDER") {
        c.rule("order_tail");
        c.expect_kw("BY")?;
        number(c)?;
        while c.eat(",") {
            number(c)?;
        }
    }
    if c.eat_kw("UNION") {
        c.rule("union_tail");
        c.eat_kw("ALL");
        c.expect_kw("SELECT")?;
        items(c)?;
        if c.eat_kw("FROM") {
            ident(c)?;
        }
    }
    while c.eat(";") {
        c.rule("stacked");
        if c.peek().is_some_and(|t| t != ";" && t != "--" && t != "#") {
            statement(c)?;
        }
    }
    if c.peek() == Some("--") || c.peek() == Some("#") {
        c.rule("comment");
        c.bump();
    }
    Ok(())
}

fn number(c: &mut Cursor) -> PResult {
    if c.peek().is_some_and(is_number) {
        c.bump();
        Ok(())
    } else {
        c.fail()
    }
}

fn ident(c: &mut Cursor) -> PResult {
    if c.peek().is_some_and(is_sql_identifier) {
        c.bump();
        Ok(())
    } else {
        c.fail()
    }
}

fn literal(c: &mut Cursor) -> PResult {
    if c.peek() == Some("-") && c.peek_at(1).is_some_and(is_number) {
        c.bump();
    }
    match c.peek() {
        Some(t) if is_number(t) || is_string_literal(t) => {
            c.bump();
            Ok(())
        }
        Some(t) if t.eq_ignore_ascii_case("NULL") => {
            c.bump();
            Ok(())
        }
        _ => c.fail(),
    }
}

/// operand := literal | IDENT | call. Returns true when it was a call.
fn operand(c: &mut Cursor) -> Result<bool, usize> {
    match c.peek() {
        Some(t) if is_sql_identifier(t) => {
            c.bump();
            if c.peek() == Some("(") {
                call_args(c)?;
                return Ok(true);
            }
            Ok(false)
        }
        _ => literal(c).map(|_| false),
    }
}

fn call_args(c: &mut Cursor) -> PResult {
    c.rule("call");
    c.expect("(")?;
    if c.eat(")") {
        return Ok(());
    }
    operand(c)?;
    while c.eat(",") {
        operand(c)?;
    }
    c.expect(")")
}

fn comparison(c: &mut Cursor) -> Result<bool, usize> {
    match c.peek() {
        Some("=") => {
            c.bump();
        }
        Some("<") => {
            c.bump();
            let _ = c.eat("=") || c.eat(">");
        }
        Some(">") => {
            c.bump();
            c.eat("=");
        }
        Some("!") if c.peek_at(1) == Some("=") => {
            c.pos += 2;
        }
        Some(t) if t.eq_ignore_ascii_case("LIKE") => {
            c.bump();
        }
        _ => return Ok(false),
    }
    Ok(true)
}

fn cond(c: &mut Cursor) -> PResult {
    if c.eat_kw("NOT") {
        return cond(c);
    }
    if c.eat("(") {
        cond_expr(c)?;
        return c.expect(")");
    }
    c.rule("comparison");
    let was_call = operand(c)?;
    if comparison(c)? {
        operand(c).map(|_| ())
    } else if was_call {
        Ok(())
    } else {
        c.fail()
    }
}

fn cond_expr(c: &mut Cursor) -> PResult {
    cond(c)?;
    while c.eat_kw("OR") || c.eat_kw("AND") {
        cond(c)?;
    }
    Ok(())
}

fn items(c: &mut Cursor) -> PResult {
    let mut n = 0;
    loop {
        if n == MAX_UNION_COLUMNS {
            return c.fail();
        }
        if !c.eat("*") {
            operand(c)?;
        }
        n += 1;
        if !c.eat(",") {
            return Ok(());
        }
    }
}

fn statement(c: &mut Cursor) -> PResult {
    if c.eat_kw("INSERT") {
        c.rule("insert");
        c.expect_kw("INTO")?;
        ident(c)?;
        if c.eat("(") {
            ident(c)?;
            while c.eat(",") {
                ident(c)?;
            }
            c.expect(")")?;
        }
        c.expect_kw("VALUES")?;
        c.expect("(")?;
        literal(c)?;
        while c.eat(",") {
            literal(c)?;
        }
        c.expect(")")
    } else if c.eat_kw("UPDATE") {
        c.rule("update");
        ident(c)?;
        c.expect_kw("SET")?;
        loop {
            ident(c)?;
            c.expect("=")?;
            literal(c)?;
            if !c.eat(",") {
                break;
            }
        }
        if c.eat_kw("WHERE") {
            cond_expr(c)?;
        }
        Ok(())
    } else if c.eat_kw("DROP") {
        c.rule("drop");
        c.expect_kw("TABLE")?;
        ident(c)
    } else if c.eat_kw("SELECT") {
        c.rule("select");
        items(c)?;
        if c.eat_kw("FROM") {
            ident(c)?;
        }
        if c.eat_kw("WHERE") {
            cond_expr(c)?;
        }
        Ok(())
    } else if c.eat_kw("WAITFOR") {
        c.rule("waitfor");
        c.expect_kw("DELAY")?;
        match c.peek() {
            Some(t) if is_string_literal(t) => {
                c.bump();
                Ok(())
            }
            _ => c.fail(),
        }
    } else if c.peek_kw("IF") {
        c.rule("if_block");
        if_block(c)
    } else {
        c.fail()
    }
}

fn if_block(c: &mut Cursor) -> PResult {
    c.expect_kw("IF")?;
    c.expect("(")?;
    cond_expr(c)?;
    c.expect(")")?;
    c.expect_kw("THEN")?;
    action(c)?;
    c.expect(";")?;
    if c.eat_kw("ELSE") {
        action(c)?;
        c.expect(";")?;
    }
    c.expect_kw("END")?;
    c.expect_kw("IF")?;
    c.expect(";")?;
    if c.eat_kw("END") {
        c.expect(";")?;
    }
    Ok(())
}

fn action(c: &mut Cursor) -> PResult {
    match c.peek() {
        Some(t) if is_sql_identifier(t) => {
            c.bump();
            call_args(c)
        }
        _ => statement(c),
    }
}
