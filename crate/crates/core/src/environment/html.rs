//! A forgiving HTML tag scanner: enough to count executable constructs in a
//! rendered page and to pull forms and links out of crawled pages.

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tag {
    pub name: String,
    pub attrs: Vec<(String, String)>,
    pub closing: bool,
}

impl Tag {
    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attrs.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }
}

const URI_ATTRS: &[&str] = &["href", "src", "action", "formaction", "data", "xlink:href"];

/// Executable constructs found in a page.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Constructs {
    pub scripts: usize,
    pub handlers: usize,
    pub js_uris: usize,
}

/// Every tag in document order. Script element bodies are skipped as raw
/// text; comments are skipped.
pub fn tags(html: &str) -> Vec<Tag> {
    let b = html.as_bytes();
    let lower = html.to_ascii_lowercase();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        if b[i] != b'<' {
            i += 1;
            continue;
        }
        if lower[i..].starts_with("<!--") {
            i = lower[i + 4..].find("-->").map_or(b.len(), |k| i + 4 + k + 3);
            continue;
        }
        let closing = b.get(i + 1) == Some(&b'/');
        let start = i + 1 + closing as usize;
        if !b.get(start).is_some_and(u8::is_ascii_alphabetic) {
            i += 1;
            continue;
        }
        let mut j = start;
        while j < b.len() && (b[j].is_ascii_alphanumeric() || b[j] == b'-') {
            j += 1;
        }
        let name = lower[start..j].to_string();
        let mut attrs = Vec::new();
        loop {
            while j < b.len() && (b[j].is_ascii_whitespace() || b[j] == b'/') {
                j += 1;
            }
            if j >= b.len() {
                break;
            }
            if b[j] == b'>' {
                j += 1;
                break;
            }
            let k0 = j;
            while j < b.len() && !b[j].is_ascii_whitespace() && !matches!(b[j], b'=' | b'>' | b'/') {
                j += 1;
            }
            let key = lower[k0..j].to_string();
            if key.is_empty() {
                j += 1;
                continue;
            }
            while j < b.len() && b[j].is_ascii_whitespace() {
                j += 1;
            }
            let mut value = String::new();
            if b.get(j) == Some(&b'=') {
                j += 1;
                while j < b.len() && b[j].is_ascii_whitespace() {
                    j += 1;
                }
                match b.get(j) {
                    Some(&q) if q == b'"' || q == b'\'' => {
                        let end = html[j + 1..].find(q as char).map_or(b.len(), |k| j + 1 + k);
                        value = html[j + 1..end].to_string();
                        j = (end + 1).min(b.len());
                    }
                    _ => {
                        let v0 = j;
                        while j < b.len() && !b[j].is_ascii_whitespace() && b[j] != b'>' {
                            j += 1;
                        }
                        value = html[v0..j].to_string();
                    }
                }
            }
            attrs.push((key, value));
        }
        let is_script = name == "script" && !closing;
        out.push(Tag { name, attrs, closing });
        i = j;
        if is_script {
            i = lower[i..].find("</script").map_or(b.len(), |k| i + k);
        }
    }
    out
}

pub fn constructs(html: &str) -> Constructs {
    let mut c = Constructs::default();
    for tag in tags(html).iter().filter(|t| !t.closing) {
        if tag.name == "script" {
            c.scripts += 1;
        }
        for (k, v) in &tag.attrs {
            if k.len() > 2 && k.starts_with("on") {
                c.handlers += 1;
            }
            let v: String = v.chars().filter(|ch| !ch.is_whitespace()).collect::<String>().to_ascii_lowercase();
            if URI_ATTRS.contains(&k.as_str()) && v.starts_with("javascript:") {
                c.js_uris += 1;
            }
        }
    }
    c
}

/// A form and the names of its input fields.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Form {
    pub action: String,
    pub method: String,
    pub fields: Vec<FormField>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormField {
    pub name: String,
    /// Value of a `data-context` attribute, when the page declares one.
    pub context: Option<String>,
}

const SKIPPED_INPUT_TYPES: &[&str] = &["submit", "button", "reset", "image", "file"];

pub fn forms(html: &str) -> Vec<Form> {
    let mut out: Vec<Form> = Vec::new();
    let mut open = false;
    for tag in tags(html) {
        match (tag.name.as_str(), tag.closing) {
            ("form", false) => {
                out.push(Form {
                    action: tag.attr("action").unwrap_or("").to_string(),
                    method: tag.attr("method").unwrap_or("get").to_ascii_lowercase(),
                    fields: Vec::new(),
                });
                open = true;
            }
            ("form", true) => open = false,
            ("input" | "textarea" | "select", false) if open => {
                let skipped = tag.attr("type").is_some_and(|t| SKIPPED_INPUT_TYPES.contains(&t.to_ascii_lowercase().as_str()));
                if let (Some(name), false) = (tag.attr("name"), skipped) {
                    let form = out.last_mut().expect("open form");
                    if !name.is_empty() && !form.fields.iter().any(|f| f.name == name) {
                        form.fields.push(FormField { name: name.to_string(), context: tag.attr("data-context").map(str::to_string) });
                    }
                }
            }
            _ => {}
        }
    }
    out
}

pub fn links(html: &str) -> Vec<String> {
    tags(html).into_iter().filter(|t| t.name == "a" && !t.closing).filter_map(|t| t.attr("href").map(str::to_string)).collect()
}
