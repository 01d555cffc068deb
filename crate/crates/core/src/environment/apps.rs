//! The embedded victim suite: six small apps over one fixture database.

use std::collections::BTreeMap;

use super::crawl::PageSource;
use super::minidb::{ColumnType, Database, Value};
use super::oracle::{sqli_oracle, xss_oracle, SqlTemplate};
use super::sanitize::{Chain, SanitizerSpec};
use super::{Context, EnvError, FormTarget, InjectionPoint, Victim, VictimVerdict};

/// Numeric comparisons such as `1 = 1` or `2>1`.
pub const NUMERIC_COMPARISON: &str = r"\d\s*(=|<>|!=|<=|>=|<|>)\s*-?\d";

pub fn fixture_db() -> Database {
    use ColumnType::{Int, Str};
    let s = |x: &str| Value::Str(x.into());
    let i = Value::Int;
    let mut db = Database::default();
    db.create(
        "users",
        &[("id", Int), ("name", Str), ("password", Str), ("active", Int)],
        vec![
            vec![i(1), s("admin"), s("pa55word"), i(1)],
            vec![i(2), s("alice"), s("wonderland"), i(1)],
            vec![i(3), s("bob"), s("builder"), i(0)],
        ],
    );
    db.create("credentials", &[("id", Int), ("secret", Str)], vec![vec![i(1), s("s3cr3t")], vec![i(2), s("hunter2")]]);
    db.create(
        "products",
        &[("id", Int), ("name", Str), ("category", Str), ("brand_id", Int), ("price", Int), ("hidden", Int)],
        vec![
            vec![i(1), s("lamp"), s("home"), i(1), i(30), i(0)],
            vec![i(2), s("chair"), s("home"), i(2), i(80), i(0)],
            vec![i(3), s("phone"), s("tech"), i(1), i(500), i(0)],
            vec![i(4), s("prototype"), s("tech"), i(3), i(999), i(1)],
        ],
    );
    db.create(
        "comments",
        &[("id", Int), ("author", Str), ("title", Str), ("body", Str)],
        vec![vec![i(1), s("alice"), s("hi"), s("first!")]],
    );
    db
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sink {
    Sql(SqlTemplate),
    /// Page with one reflection slot.
    Html(String),
}

impl Sink {
    pub fn template(&self) -> &str {
        match self {
            Sink::Sql(t) => &t.text,
            Sink::Html(p) => p,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Handler {
    pub field: String,
    pub context: Context,
    pub sanitizers: Vec<SanitizerSpec>,
    pub sink: Sink,
    pub target: FormTarget,
    chain: Chain,
}

#[derive(Debug, Clone)]
pub struct EmbeddedApp {
    pub id: String,
    /// Path → HTML.
    pub pages: BTreeMap<String, String>,
    pub handlers: Vec<Handler>,
}

impl EmbeddedApp {
    pub fn handler(&self, field: &str) -> Option<&Handler> {
        self.handlers.iter().find(|h| h.field == field)
    }

    pub fn base(&self) -> String {
        format!("embedded://{}/", self.id)
    }

    /// All injection points, in declaration order.
    pub fn points(&self) -> Vec<InjectionPoint> {
        self.handlers.iter().map(|h| self.point(h)).collect()
    }

    fn point(&self, h: &Handler) -> InjectionPoint {
        InjectionPoint {
            app: self.id.clone(),
            field: h.field.clone(),
            context: h.context,
            sanitizers: h.sanitizers.clone(),
            target: Some(h.target.clone()),
        }
    }
}

struct Field {
    name: &'static str,
    context: Context,
    sanitizers: Vec<SanitizerSpec>,
    sink: Sink,
}

fn field(name: &'static str, context: Context, sanitizers: Vec<SanitizerSpec>, sink: Sink) -> Field {
    Field { name, context, sanitizers, sink }
}

struct AppBuilder {
    id: &'static str,
    pages: BTreeMap<String, String>,
    handlers: Vec<Handler>,
}

impl AppBuilder {
    fn new(id: &'static str) -> Self {
        Self { id, pages: BTreeMap::new(), handlers: Vec::new() }
    }

    /// A page with the given forms (action, method, fields) and links.
    fn page(mut self, path: &str, forms: Vec<(&str, &str, Vec<Field>)>, links: &[&str]) -> Self {
        let mut html = format!("<html><head><title>{}</title></head><body>\n", self.id);
        for (action, method, fields) in forms {
            html.push_str(&format!("<form action=\"{action}\" method=\"{method}\">\n"));
            for f in fields {
                let tag = match f.context {
                    Context::HtmlBody => format!("<textarea name=\"{}\"></textarea>\n", f.name),
                    _ => format!("<input type=\"text\" name=\"{}\">\n", f.name),
                };
                html.push_str(&tag);
                self.handler(action, method, f);
            }
            html.push_str("<input type=\"submit\" value=\"go\">\n</form>\n");
        }
        for l in links {
            html.push_str(&format!("<a href=\"{l}\">{l}</a>\n"));
        }
        html.push_str("</body></html>\n");
        self.pages.insert(path.to_string(), html);
        self
    }

    /// A query parameter reachable only through a link.
    fn param(mut self, action: &str, f: Field) -> Self {
        self.handler(action, "get", f);
        self
    }

    fn handler(&mut self, action: &str, method: &str, f: Field) {
        let chain = Chain::new(&f.sanitizers).expect("built-in sanitizers are valid");
        self.handlers.push(Handler {
            field: f.name.to_string(),
            context: f.context,
            sanitizers: f.sanitizers,
            sink: f.sink,
            target: FormTarget { url: format!("embedded://{}{}", self.id, action), method: method.into() },
            chain,
        });
    }

    fn build(self) -> EmbeddedApp {
        EmbeddedApp { id: self.id.to_string(), pages: self.pages, handlers: self.handlers }
    }
}

fn escape_all() -> SanitizerSpec {
    SanitizerSpec::char_escape(&[('<', "&lt;"), ('>', "&gt;"), ('&', "&amp;"), ('"', "&quot;"), ('\'', "&#39;")])
}

fn sql_quote_escape() -> SanitizerSpec {
    SanitizerSpec::char_escape(&[('\'', "''")])
}

/// The six embedded apps.
pub fn embedded_apps() -> Vec<EmbeddedApp> {
    use Context::*;
    let sql = |t: &str| Sink::Sql(SqlTemplate::new(t));
    let html = |p: &str| Sink::Html(p.to_string());
    vec![
        // Login form whose only defence rejects numeric comparisons.
        AppBuilder::new("login")
            .page(
                "/",
                vec![(
                    "/login",
                    "post",
                    vec![field(
                        "username",
                        SqlWhereString,
                        vec![SanitizerSpec::regex_reject(NUMERIC_COMPARISON)],
                        Sink::Sql(SqlTemplate::single("SELECT * FROM users WHERE name = '<INJ>'")),
                    )],
                )],
                &[],
            )
            .build(),
        AppBuilder::new("shop")
            .page(
                "/",
                vec![
                    (
                        "/search",
                        "get",
                        vec![
                            field("q", SqlWhereString, vec![SanitizerSpec::keyword_strip(&["--"])], sql("SELECT name, price FROM products WHERE name = '<INJ>' AND hidden = 0")),
                            field("category", SqlWhereString, vec![], sql("SELECT name, price FROM products WHERE category = '<INJ>' AND hidden = 0")),
                            field("brand", SqlWhereNumeric, vec![], sql("SELECT name, price FROM products WHERE brand_id = <INJ> AND hidden = 0")),
                        ],
                    ),
                    (
                        "/review",
                        "post",
                        vec![
                            field("author", SqlInsertValue, vec![], sql("INSERT INTO comments (author, title, body) VALUES ('<INJ>', 'review', 'text')")),
                            field("title", SqlInsertValue, vec![sql_quote_escape()], sql("INSERT INTO comments (author, title, body) VALUES ('guest', '<INJ>', 'text')")),
                            field("body", HtmlBody, vec![], html("<div class=\"review\"><INJ></div>")),
                        ],
                    ),
                ],
                &["/about", "/"],
            )
            .page("/about", vec![], &["/"])
            .build(),
        AppBuilder::new("guestbook")
            .page(
                "/",
                vec![(
                    "/sign",
                    "post",
                    vec![
                        field("message", HtmlBody, vec![], html("<p class=\"msg\"><INJ></p>")),
                        field("name", HtmlBody, vec![escape_all()], html("<span class=\"who\"><INJ></span>")),
                    ],
                )],
                &[],
            )
            .build(),
        AppBuilder::new("profile")
            .page(
                "/",
                vec![(
                    "/save",
                    "post",
                    vec![
                        field(
                            "nickname",
                            HtmlAttribute,
                            vec![SanitizerSpec::char_escape(&[('<', "&lt;"), ('>', "&gt;")])],
                            html("<input name=\"nickname\" value=\"<INJ>\">"),
                        ),
                        field(
                            "homepage",
                            HtmlAttribute,
                            vec![SanitizerSpec::char_escape(&[('"', "&quot;"), ('<', "&lt;"), ('>', "&gt;")])],
                            html("<a href=\"<INJ>\">homepage</a>"),
                        ),
                    ],
                )],
                &[],
            )
            .build(),
        // Every field handled safely.
        AppBuilder::new("hardened")
            .page(
                "/",
                vec![(
                    "/find",
                    "get",
                    vec![
                        field("user", SqlWhereString, vec![sql_quote_escape()], sql("SELECT * FROM users WHERE name = '<INJ>' AND active = 1")),
                        field("id", SqlWhereNumeric, vec![SanitizerSpec::regex_reject(r"[^0-9]")], sql("SELECT name FROM products WHERE id = <INJ>")),
                        field("note", HtmlBody, vec![escape_all()], html("<p><INJ></p>")),
                    ],
                )],
                &[],
            )
            .build(),
        AppBuilder::new("legacy")
            .page(
                "/",
                vec![(
                    "/account",
                    "get",
                    vec![field("account", SqlWhereString, vec![], sql("SELECT * FROM users WHERE name = '<INJ>' AND active = 1"))],
                )],
                &["/item?id=1", "/item?id=2"],
            )
            .param("/item", field("id", SqlWhereNumeric, vec![], sql("SELECT name, price FROM products WHERE id = <INJ>")))
            .build(),
    ]
}

/// Serves the embedded apps' pages to the crawler under
/// `embedded://<app>/<path>`.
#[derive(Debug, Clone)]
pub struct EmbeddedSite {
    apps: Vec<EmbeddedApp>,
}

impl EmbeddedSite {
    pub fn new() -> Self {
        Self { apps: embedded_apps() }
    }

    pub fn app_ids(&self) -> Vec<String> {
        self.apps.iter().map(|a| a.id.clone()).collect()
    }

    /// Context and sanitizers of a crawled field, from the app registry.
    pub fn describe(&self, app: &str, field: &str) -> Option<InjectionPoint> {
        let a = self.apps.iter().find(|a| a.id == app)?;
        Some(a.point(a.handler(field)?))
    }
}

impl Default for EmbeddedSite {
    fn default() -> Self {
        Self::new()
    }
}

impl PageSource for EmbeddedSite {
    fn fetch(&mut self, url: &str) -> Result<String, EnvError> {
        let rest = url.strip_prefix("embedded://").ok_or_else(|| EnvError::Unreachable(url.into()))?;
        let (app, path) = rest.split_once('/').map_or((rest, "/".to_string()), |(a, p)| (a, format!("/{p}")));
        let path = path.split(['?', '#']).next().unwrap_or("/");
        let a = self.apps.iter().find(|a| a.id == app).ok_or_else(|| EnvError::Unreachable(url.into()))?;
        a.pages.get(path).cloned().ok_or_else(|| EnvError::Unreachable(url.into()))
    }

    fn describe(&self, app: &str, field: &str, _declared: Option<&str>) -> Option<InjectionPoint> {
        EmbeddedSite::describe(self, app, field)
    }

    fn app_id(&self, url: &str) -> String {
        url.strip_prefix("embedded://").and_then(|r| r.split('/').next()).unwrap_or(url).to_string()
    }
}

/// The embedded apps as a [`Victim`]; each submission runs against a
/// fresh copy of the fixture database.
#[derive(Debug, Clone)]
pub struct EmbeddedSuite {
    apps: Vec<EmbeddedApp>,
    db: Database,
}

impl EmbeddedSuite {
    pub fn new() -> Self {
        Self { apps: embedded_apps(), db: fixture_db() }
    }

    pub fn apps(&self) -> &[EmbeddedApp] {
        &self.apps
    }

    pub fn app(&self, id: &str) -> Option<&EmbeddedApp> {
        self.apps.iter().find(|a| a.id == id)
    }

    /// Every point of every app.
    pub fn points(&self) -> Vec<InjectionPoint> {
        self.apps.iter().flat_map(EmbeddedApp::points).collect()
    }

    pub fn evaluate(&self, point: &InjectionPoint, payload: &str) -> Result<VictimVerdict, EnvError> {
        let app = self.app(&point.app).ok_or_else(|| EnvError::UnknownApp(point.app.clone()))?;
        let h = app.handler(&point.field).ok_or_else(|| EnvError::UnknownPoint(point.id()))?;
        let template = h.sink.template();
        let Some(value) = h.chain.apply(payload) else {
            return Ok(VictimVerdict::blocked(point, template));
        };
        let outcome = match &h.sink {
            Sink::Sql(t) => sqli_oracle(t, &self.db, &value)?,
            Sink::Html(p) => xss_oracle(p, &value)?,
        };
        Ok(VictimVerdict::from_outcome(point, template, outcome))
    }
}

impl Default for EmbeddedSuite {
    fn default() -> Self {
        Self::new()
    }
}

impl Victim for EmbeddedSuite {
    fn submit(&mut self, point: &InjectionPoint, payload: &str) -> Result<VictimVerdict, EnvError> {
        self.evaluate(point, payload)
    }
}
