use std::collections::{BTreeSet, VecDeque};

use super::html::{forms, links};
use super::{Context, EnvError, FormTarget, InjectionPoint};

/// Where the crawler reads pages from.
pub trait PageSource {
    fn fetch(&mut self, url: &str) -> Result<String, EnvError>;

    /// The injection point for a discovered field, or `None` to skip it.
    /// `declared` is the page's `data-context` hint, if any.
    fn describe(&self, app: &str, field: &str, declared: Option<&str>) -> Option<InjectionPoint> {
        let context = declared.and_then(Context::parse).unwrap_or(Context::SqlWhereString);
        Some(InjectionPoint { app: app.into(), field: field.into(), context, sanitizers: Vec::new(), target: None })
    }

    /// Identifier used as the point's app for pages under `url`.
    fn app_id(&self, url: &str) -> String {
        origin(url).unwrap_or(url).to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrawlConfig {
    pub max_pages: usize,
    pub max_depth: usize,
}

impl Default for CrawlConfig {
    fn default() -> Self {
        Self { max_pages: 50, max_depth: 3 }
    }
}

/// `scheme://host` of an absolute URL.
fn origin(url: &str) -> Option<&str> {
    let start = url.find("://")? + 3;
    let end = url[start..].find('/').map_or(url.len(), |i| start + i);
    Some(&url[..end])
}

/// Resolves a link against the page it appeared on. Fragments are dropped;
/// non-navigational schemes yield `None`.
pub fn resolve(page: &str, href: &str) -> Option<String> {
    let href = href.split('#').next()?.trim();
    if href.is_empty() {
        return None;
    }
    if href.contains("://") {
        return Some(href.to_string());
    }
    if let Some((scheme, _)) = href.split_once(':') {
        if scheme.chars().all(|c| c.is_ascii_alphabetic()) {
            return None;
        }
    }
    let root = origin(page)?;
    if href.starts_with('/') {
        return Some(format!("{root}{href}"));
    }
    let path = page.split(['?', '#']).next()?;
    let dir = &path[..path.rfind('/').filter(|&i| i >= root.len()).map_or(path.len(), |i| i + 1)];
    let dir = if dir.len() == root.len() { format!("{root}/") } else { dir.to_string() };
    Some(format!("{dir}{href}"))
}

/// Breadth-first walk from `base` collecting form fields and link query
/// parameters, deduplicated by (app, field). Pages that fail to load after
/// the first are skipped with a warning.
pub fn crawl(source: &mut dyn PageSource, base: &str, cfg: &CrawlConfig) -> Result<Vec<InjectionPoint>, EnvError> {
    let root = origin(base).ok_or_else(|| EnvError::Unreachable(base.into()))?.to_string();
    let mut queue = VecDeque::from([(base.to_string(), 0usize)]);
    let mut visited = BTreeSet::new();
    let mut seen = BTreeSet::new();
    let mut points = Vec::new();
    let mut add = |source: &dyn PageSource, field: &str, declared: Option<&str>, target: FormTarget, points: &mut Vec<InjectionPoint>| {
        let app = source.app_id(&target.url);
        if !seen.insert((app.clone(), field.to_string())) {
            return;
        }
        match source.describe(&app, field, declared) {
            Some(mut p) => {
                p.target.get_or_insert(target);
                points.push(p);
            }
            None => log::warn!("skipping unknown field {field} at {}", target.url),
        }
    };
    while let Some((url, depth)) = queue.pop_front() {
        if visited.len() >= cfg.max_pages || !visited.insert(url.clone()) {
            continue;
        }
        let html = match source.fetch(&url) {
            Ok(h) => h,
            Err(e) if visited.len() == 1 => return Err(e),
            Err(e) => {
                log::warn!("skipping {url}: {e}");
                continue;
            }
        };
        for form in forms(&html) {
            let action = if form.action.is_empty() { Some(url.clone()) } else { resolve(&url, &form.action) };
            let Some(action) = action else { continue };
            for f in &form.fields {
                let target = FormTarget { url: action.split('?').next().unwrap_or(&action).to_string(), method: form.method.clone() };
                add(&*source, &f.name, f.context.as_deref(), target, &mut points);
            }
        }
        for href in links(&html) {
            let Some(next) = resolve(&url, &href) else { continue };
            if origin(&next) != Some(root.as_str()) {
                continue;
            }
            if let Some((path, query)) = next.split_once('?') {
                for pair in query.split('&') {
                    let name = pair.split('=').next().unwrap_or("");
                    if !name.is_empty() {
                        add(&*source, name, None, FormTarget { url: path.to_string(), method: "get".into() }, &mut points);
                    }
                }
            }
            if depth < cfg.max_depth {
                queue.push_back((next, depth + 1));
            }
        }
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::EmbeddedSite;

    #[test]
    fn resolves_links() {
        assert_eq!(resolve("http://h/a/b.html", "c.html").as_deref(), Some("http://h/a/c.html"));
        assert_eq!(resolve("http://h/a/b", "/x?y=1#f").as_deref(), Some("http://h/x?y=1"));
        assert_eq!(resolve("embedded://shop/", "/about").as_deref(), Some("embedded://shop/about"));
        assert_eq!(resolve("http://h", "p").as_deref(), Some("http://h/p"));
        assert_eq!(resolve("http://h/", "javascript:go()"), None);
        assert_eq!(resolve("http://h/", "#top"), None);
    }

    #[test]
    fn crawls_embedded_apps() {
        let mut site = EmbeddedSite::new();
        let shop = crawl(&mut site, "embedded://shop/", &CrawlConfig::default()).unwrap();
        assert_eq!(shop.len(), 6);
        let legacy = crawl(&mut site, "embedded://legacy/", &CrawlConfig::default()).unwrap();
        let fields: Vec<&str> = legacy.iter().map(|p| p.field.as_str()).collect();
        assert_eq!(fields, ["account", "id"]);
        assert!(crawl(&mut site, "embedded://nowhere/", &CrawlConfig::default()).is_err());
    }

    #[test]
    fn page_without_forms_gives_nothing() {
        struct One(&'static str);
        impl PageSource for One {
            fn fetch(&mut self, _: &str) -> Result<String, EnvError> {
                Ok(self.0.to_string())
            }
        }
        let cfg = CrawlConfig::default();
        assert!(crawl(&mut One("<p>hello</p>"), "http://x/", &cfg).unwrap().is_empty());
        let looped = crawl(&mut One("<form><input name=a></form><a href=\"/\">self</a><a href=\"/\">again</a>"), "http://x/", &cfg).unwrap();
        assert_eq!(looped.len(), 1);
    }
}
