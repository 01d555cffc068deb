//! Markup/script payload grammar (reflected XSS).
//!
//! ```text
//! markup    := breakout EOF | [prefix] element {element} EOF | js_uri EOF
//! prefix    := quote [">"] | ">"
//! breakout  := quote attr {attr} [NAME "=" quote]
//! element   := "<" "script" {attr} ">" js "<" "/script" ">"
//!            | "<" TAG {attr} ["/"] ">" [text {text}] ["<" "/TAG" ">"]
//! attr      := NAME ["=" value]
//! value     := STR | js_uri | call | WORD
//! js        := call {";" call} [";"]
//! call      := IDENT "(" [arg {"," arg}] ")"      arg := NUM | STR | IDENT | call
//! js_uri    := WORD("javascript:" IDENT) "(" [arg {"," arg}] ")"
//! ```

use super::parser::{is_identifier, is_number, is_quote, is_string_literal, Cursor, PResult};
use crate::corpus::is_word;

pub(super) const TAGS: &[&str] = &[
    "a", "audio", "body", "details", "div", "embed", "iframe", "img", "input", "marquee", "object",
    "svg", "video",
];

pub(super) fn parse(toks: &[&str]) -> (Result<(), usize>, Vec<&'static str>) {
    let mut c = Cursor::new(toks);
    let r = markup(&mut c);
    (r, c.trace)
}

fn markup(c: &mut Cursor) -> PResult {
    if c.at_end() {
        return c.fail();
    }
    if c.peek().is_some_and(is_js_uri_head) {
        c.rule("js_uri");
        js_uri(c)?;
        return c.expect_end();
    }
    if c.peek().is_some_and(is_quote) && c.peek_at(1).is_some_and(is_attr_name) {
        c.rule("breakout");
        let q = c.bump();
        attr(c)?;
        while c.peek().is_some_and(is_attr_name) {
            if c.peek_at(1) == Some("=") && c.peek_at(2) == Some(q) {
                c.pos += 3;
                break;
            }
            attr(c)?;
        }
        return c.expect_end();
    }
    if c.peek().is_some_and(is_quote) {
        c.rule("prefix");
        c.bump();
        c.eat(">");
    } else if c.eat(">") {
        c.rule("prefix");
    }
    element(c)?;
    while !c.at_end() {
        element(c)?;
    }
    Ok(())
}

fn is_js_uri_head(t: &str) -> bool {
    t.len() > "javascript:".len()
        && t[.."javascript:".len()].eq_ignore_ascii_case("javascript:")
        && is_identifier(&t["javascript:".len()..])
}

fn is_attr_name(t: &str) -> bool {
    is_word(t) && t.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        && t.chars().next().is_some_and(|c| c.is_ascii_alphabetic())
}

fn is_tag(t: &str) -> bool {
    TAGS.iter().any(|tag| tag.eq_ignore_ascii_case(t))
}

fn element(c: &mut Cursor) -> PResult {
    c.expect("<")?;
    match c.peek() {
        Some(t) if t.eq_ignore_ascii_case("script") => {
            c.rule("script");
            c.bump();
            while c.peek().is_some_and(is_attr_name) {
                attr(c)?;
            }
            c.expect(">")?;
            js(c)?;
            c.expect("<")?;
            match c.peek() {
                Some(t) if t.eq_ignore_ascii_case("/script") => {
                    c.bump();
                }
                _ => return c.fail(),
            }
            c.expect(">")
        }
        Some(t) if is_tag(t) => {
            c.rule("tag");
            let tag = c.bump();
            while c.peek().is_some_and(is_attr_name) {
                attr(c)?;
            }
            c.eat("/");
            c.expect(">")?;
            while c.peek().is_some_and(|t| is_word(t) && !t.starts_with('/')) {
                c.bump();
            }
            if c.peek() == Some("<") && c.peek_at(1).is_some_and(|t| t.len() > 1 && t[1..].eq_ignore_ascii_case(tag) && t.starts_with('/')) {
                c.pos += 2;
                c.expect(">")?;
            }
            Ok(())
        }
        _ => c.fail(),
    }
}

fn attr(c: &mut Cursor) -> PResult {
    c.rule("attr");
    if !c.peek().is_some_and(is_attr_name) {
        return c.fail();
    }
    c.bump();
    if !c.eat("=") {
        return Ok(());
    }
    match c.peek() {
        Some(t) if is_string_literal(t) => {
            c.bump();
            Ok(())
        }
        Some(t) if is_js_uri_head(t) => js_uri(c),
        Some(t) if is_identifier(t) && c.peek_at(1) == Some("(") => call(c),
        Some(t) if is_word(t) => {
            c.bump();
            Ok(())
        }
        _ => c.fail(),
    }
}

fn js(c: &mut Cursor) -> PResult {
    call(c)?;
    while c.eat(";") {
        if c.peek() == Some("<") {
            break;
        }
        call(c)?;
    }
    Ok(())
}

fn js_uri(c: &mut Cursor) -> PResult {
    c.bump();
    args(c)
}

fn call(c: &mut Cursor) -> PResult {
    c.rule("call");
    match c.peek() {
        Some(t) if is_identifier(t) => {
            c.bump();
            args(c)
        }
        _ => c.fail(),
    }
}

fn args(c: &mut Cursor) -> PResult {
    c.expect("(")?;
    if c.eat(")") {
        return Ok(());
    }
    loop {
        match c.peek() {
            Some(t) if is_identifier(t) && c.peek_at(1) == Some("(") => call(c)?,
            Some(t) if is_number(t) || is_string_literal(t) || is_identifier(t) => {
                c.bump();
            }
            _ => return c.fail(),
        }
        if !c.eat(",") {
            break;
        }
    }
    c.expect(")")
}

#[cfg(test)]
mod tests {
    use crate::corpus::split_pieces;

    fn check(raw: &str) -> Result<(), usize> {
        let pieces = split_pieces(raw);
        let refs: Vec<&str> = pieces.iter().map(|p| p.surface.as_str()).collect();
        super::parse(&refs).0
    }

    #[test]
    fn accepts_xss_shapes() {
        for ok in [
            "<script>alert(1)</script>",
            "<script>x()</script>",
            "\"><script>alert(document.cookie)</script>",
            "<img src=x onerror=alert(1)>",
            "<svg onload=alert('xss')>",
            "<a href=javascript:alert(1)>click</a>",
            "\" onmouseover=alert(1) x=\"",
            "' onfocus=alert(1) autofocus x='",
            "javascript:alert(1)",
            "<body onload=\"alert(1)\">",
            "<script>confirm(1);prompt(2);</script>",
        ] {
            assert_eq!(check(ok), Ok(()), "{ok}");
        }
    }

    #[test]
    fn rejects_broken_markup() {
        assert!(check("<script>alert(1)").is_err());
        assert!(check("<script alert(1)</script>").is_err());
        assert!(check("<blink>").is_err());
        assert!(check("alert(1)").is_err());
        assert!(check("< img src=x").is_err());
    }
}
