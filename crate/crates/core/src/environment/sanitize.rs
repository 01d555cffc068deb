use regex::Regex;

use super::EnvError;

/// One input-handling step applied by a victim before using a value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SanitizerSpec {
    /// Rejects the input when the pattern matches anywhere.
    RegexReject { pattern: String },
    /// Replaces each listed character with its escape text.
    CharEscape { map: Vec<(char, String)> },
    /// Removes every case-insensitive occurrence of each keyword, once.
    KeywordStrip { keywords: Vec<String> },
}

impl SanitizerSpec {
    pub fn regex_reject(pattern: &str) -> Self {
        SanitizerSpec::RegexReject { pattern: pattern.into() }
    }

    pub fn char_escape(map: &[(char, &str)]) -> Self {
        SanitizerSpec::CharEscape { map: map.iter().map(|&(c, s)| (c, s.to_string())).collect() }
    }

    pub fn keyword_strip(keywords: &[&str]) -> Self {
        SanitizerSpec::KeywordStrip { keywords: keywords.iter().map(|k| k.to_string()).collect() }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        match self {
            SanitizerSpec::RegexReject { pattern } => Regex::new(pattern).map(drop).map_err(|e| EnvError::Sanitizer(e.to_string())),
            SanitizerSpec::CharEscape { map } => {
                for (i, (c, s)) in map.iter().enumerate() {
                    if map[..i].iter().any(|(d, t)| d == c || t == s) {
                        return Err(EnvError::Sanitizer(format!("escape map is not injective at {c:?}")));
                    }
                }
                Ok(())
            }
            SanitizerSpec::KeywordStrip { keywords } => match keywords.iter().any(String::is_empty) {
                true => Err(EnvError::Sanitizer("empty keyword".into())),
                false => Ok(()),
            },
        }
    }
}

/// A validated sanitizer chain with compiled patterns.
#[derive(Debug, Clone)]
pub struct Chain {
    steps: Vec<Step>,
}

#[derive(Debug, Clone)]
enum Step {
    Reject(Regex),
    Escape(Vec<(char, String)>),
    Strip(Vec<Regex>),
}

impl Chain {
    pub fn new(specs: &[SanitizerSpec]) -> Result<Self, EnvError> {
        let mut steps = Vec::new();
        for spec in specs {
            spec.validate()?;
            steps.push(match spec {
                SanitizerSpec::RegexReject { pattern } => Step::Reject(Regex::new(pattern).expect("validated")),
                SanitizerSpec::CharEscape { map } => Step::Escape(map.clone()),
                SanitizerSpec::KeywordStrip { keywords } => {
                    Step::Strip(keywords.iter().map(|k| Regex::new(&format!("(?i){}", regex::escape(k))).expect("escaped")).collect())
                }
            });
        }
        Ok(Self { steps })
    }

    /// The transformed input, or `None` when a step rejects it.
    pub fn apply(&self, input: &str) -> Option<String> {
        let mut s = input.to_string();
        for step in &self.steps {
            match step {
                Step::Reject(re) => {
                    if re.is_match(&s) {
                        return None;
                    }
                }
                Step::Escape(map) => {
                    let mut out = String::with_capacity(s.len());
                    for ch in s.chars() {
                        match map.iter().find(|(c, _)| *c == ch) {
                            Some((_, rep)) => out.push_str(rep),
                            None => out.push(ch),
                        }
                    }
                    s = out;
                }
                Step::Strip(res) => {
                    for re in res {
                        s = re.replace_all(&s, "").into_owned();
                    }
                }
            }
        }
        Some(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steps_apply_in_order() {
        let chain = Chain::new(&[
            SanitizerSpec::keyword_strip(&["union"]),
            SanitizerSpec::char_escape(&[('\'', "''")]),
            SanitizerSpec::regex_reject(r"\d\s*=\s*\d"),
        ])
        .unwrap();
        assert_eq!(chain.apply("a' UNION b").as_deref(), Some("a''  b"));
        assert_eq!(chain.apply("UNUNIONION").as_deref(), Some("UNION"));
        assert_eq!(chain.apply("' OR 1 = 1"), None);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(Chain::new(&[SanitizerSpec::regex_reject("(")]).is_err());
        assert!(Chain::new(&[SanitizerSpec::char_escape(&[('<', "&lt;"), ('>', "&lt;")])]).is_err());
    }
}
