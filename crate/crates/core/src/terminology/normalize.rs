//! Lexical normalization of diagnosis strings.
//!
//! The pipeline is: lowercase, drop a trailing semantic-tag suffix, strip
//! possessives, split on anything that is not alphanumeric (hyphens included),
//! expand acronyms, singularize, map British to US spelling, drop stopwords.
//! The result is a token set; word order and repetition are discarded.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;

use super::concept::{split_tag_suffix, SemanticTag};
use super::TerminologyError;

const DEFAULT_STOPWORDS: &str = include_str!("../../rules/stopwords.txt");
const DEFAULT_BRITISH_US: &str = include_str!("../../rules/british_us.txt");
const DEFAULT_ACRONYMS: &str = include_str!("../../rules/acronyms.txt");
const DEFAULT_PLURAL_EXCEPTIONS: &str = include_str!("../../rules/plural_exceptions.txt");

/// Rule tables driving [`normalize`].
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationRules {
    pub stopwords: HashSet<String>,
    pub british_to_us: HashMap<String, String>,
    pub acronyms: HashMap<String, Vec<String>>,
    pub plural_exceptions: HashSet<String>,
}

impl Default for NormalizationRules {
    fn default() -> Self {
        NormalizationRules {
            stopwords: parse_word_list(DEFAULT_STOPWORDS),
            british_to_us: parse_mapping(DEFAULT_BRITISH_US).into_iter().map(|(k, v)| (k, v.join(" "))).collect(),
            acronyms: parse_mapping(DEFAULT_ACRONYMS),
            plural_exceptions: parse_word_list(DEFAULT_PLURAL_EXCEPTIONS),
        }
    }
}

impl NormalizationRules {
    /// No rules at all: lowercasing, tokenization and the plural heuristic only.
    pub fn empty() -> Self {
        NormalizationRules {
            stopwords: HashSet::new(),
            british_to_us: HashMap::new(),
            acronyms: HashMap::new(),
            plural_exceptions: HashSet::new(),
        }
    }

    /// Loads rule files from a directory. Files that are absent fall back to
    /// the built-in tables: `stopwords.txt`, `british_us.txt`, `acronyms.txt`,
    /// `plural_exceptions.txt`.
    pub fn from_dir(dir: &Path) -> Result<Self, TerminologyError> {
        let mut rules = NormalizationRules::default();
        let read = |name: &str| -> Result<Option<String>, TerminologyError> {
            let path = dir.join(name);
            if !path.exists() {
                return Ok(None);
            }
            fs::read_to_string(&path)
                .map(Some)
                .map_err(|source| TerminologyError::Io { path: path.display().to_string(), source })
        };
        if let Some(text) = read("stopwords.txt")? {
            rules.stopwords = parse_word_list(&text);
        }
        if let Some(text) = read("british_us.txt")? {
            rules.british_to_us = parse_mapping(&text).into_iter().map(|(k, v)| (k, v.join(" "))).collect();
        }
        if let Some(text) = read("acronyms.txt")? {
            rules.acronyms = parse_mapping(&text);
        }
        if let Some(text) = read("plural_exceptions.txt")? {
            rules.plural_exceptions = parse_word_list(&text);
        }
        Ok(rules)
    }

    /// Heuristic plural-to-singular conversion for one lowercase token.
    pub fn singularize(&self, token: &str) -> String {
        if token.chars().count() <= 3 || self.plural_exceptions.contains(token) || !token.ends_with('s') {
            return token.to_string();
        }
        if token.ends_with("ss") || token.ends_with("us") || token.ends_with("is") {
            return token.to_string();
        }
        if let Some(stem) = token.strip_suffix("ies") {
            if stem.chars().count() >= 2 {
                return format!("{stem}y");
            }
            return token.to_string();
        }
        for suffix in ["sses", "xes", "ches", "shes", "zes"] {
            if token.ends_with(suffix) {
                return token[..token.len() - 2].to_string();
            }
        }
        token[..token.len() - 1].to_string()
    }

    fn map_token(&self, token: &str, out: &mut Vec<String>) {
        let singular = self.singularize(token);
        let mapped = self.british_to_us.get(&singular).cloned().unwrap_or(singular);
        for word in mapped.split_whitespace() {
            if !self.stopwords.contains(word) {
                out.push(word.to_string());
            }
        }
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(pos) => &line[..pos],
        None => line,
    }
}

fn parse_word_list(text: &str) -> HashSet<String> {
    text.lines().map(|l| strip_comment(l).trim().to_lowercase()).filter(|l| !l.is_empty()).collect()
}

/// `key value...` lines; tabs and spaces both separate.
fn parse_mapping(text: &str) -> HashMap<String, Vec<String>> {
    text.lines()
        .filter_map(|line| {
            let mut words = strip_comment(line).split_whitespace().map(str::to_lowercase);
            let key = words.next()?;
            let value: Vec<String> = words.collect();
            (!value.is_empty()).then_some((key, value))
        })
        .collect()
}

/// Result of normalizing a piece of text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedText {
    pub tokens: BTreeSet<String>,
    pub source: String,
    /// Semantic tag stripped from the end of the text, if any.
    pub tag: Option<SemanticTag>,
}

impl NormalizedText {
    /// Canonical rendering: sorted tokens joined by single spaces. Doubles as
    /// the exact-match index key.
    pub fn key(&self) -> String {
        render(&self.tokens)
    }
}

pub fn render(tokens: &BTreeSet<String>) -> String {
    tokens.iter().map(String::as_str).collect::<Vec<_>>().join(" ")
}

fn tokenize(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase().replace('\u{2019}', "'");
    let mut cleaned = String::with_capacity(lowered.len());
    let chars: Vec<char> = lowered.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '\'' {
            // possessive 's at a word end vanishes, other apostrophes join
            let next = chars.get(i + 1).copied();
            let after = chars.get(i + 2).copied();
            if next == Some('s') && after.is_none_or(|a| !a.is_alphanumeric()) {
                i += 2;
                continue;
            }
            i += 1;
            continue;
        }
        cleaned.push(c);
        i += 1;
    }
    cleaned.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_string).collect()
}

/// Normalizes raw text into a token set.
///
/// Returns [`TerminologyError::EmptyAfterNormalization`] when nothing survives.
pub fn normalize(text: &str, rules: &NormalizationRules) -> Result<NormalizedText, TerminologyError> {
    let trimmed = text.trim();
    let (body, tag) = match split_tag_suffix(trimmed) {
        (body, Some(tag)) if SemanticTag::is_known(tag) => (body, Some(SemanticTag::parse(tag))),
        _ => (trimmed, None),
    };
    let mut words = Vec::new();
    for token in tokenize(body) {
        match rules.acronyms.get(&token) {
            Some(expansion) => {
                for part in expansion {
                    for sub in tokenize(part) {
                        rules.map_token(&sub, &mut words);
                    }
                }
            }
            None => rules.map_token(&token, &mut words),
        }
    }
    let tokens: BTreeSet<String> = words.into_iter().collect();
    if tokens.is_empty() {
        return Err(TerminologyError::EmptyAfterNormalization(text.to_string()));
    }
    Ok(NormalizedText { tokens, source: text.to_string(), tag })
}
