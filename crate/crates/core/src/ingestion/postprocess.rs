//! Cleanup of raw LLM transcripts into a list of diagnosis strings.

use super::IngestionError;

/// Introductory sentence openers that cause the first line to be dropped.
pub const DEFAULT_INTRO_PATTERNS: [&str; 8] = [
    "Sure,",
    "Here is the",
    "Here are",
    "### Response:",
    "The probable",
    "The differential",
    "The most probable",
    "Based on",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PostprocessRules {
    /// Case-sensitive prefixes.
    pub intro_patterns: Vec<String>,
}

impl Default for PostprocessRules {
    fn default() -> Self {
        PostprocessRules { intro_patterns: DEFAULT_INTRO_PATTERNS.iter().map(|p| p.to_string()).collect() }
    }
}

/// Removes one leading list marker: `1.`, `1)`, `1:`, `(1)`, `a)`, `-`, `*`,
/// `•`, `+`, `–`. A marker must be followed by whitespace or end the line.
fn strip_marker(line: &str) -> Option<&str> {
    let rest = if let Some(r) = line.strip_prefix(['-', '*', '•', '+', '–']) {
        r
    } else if let Some(inner) = line.strip_prefix('(') {
        let digits = inner.len() - inner.trim_start_matches(|c: char| c.is_ascii_digit()).len();
        if digits == 0 {
            return None;
        }
        inner[digits..].strip_prefix(')')?
    } else {
        let digits = line.len() - line.trim_start_matches(|c: char| c.is_ascii_digit()).len();
        let after = if digits > 0 {
            &line[digits..]
        } else {
            // lettered enumerations: "a)", "b)"
            let mut chars = line.chars();
            match (chars.next(), chars.next()) {
                (Some(c), Some(')')) if c.is_ascii_lowercase() => &line[1..],
                _ => return None,
            }
        };
        after.strip_prefix(['.', ')', ':'])?
    };
    (rest.is_empty() || rest.starts_with(char::is_whitespace)).then_some(rest)
}

fn clean_line(line: &str) -> &str {
    let mut current = line.trim();
    while let Some(rest) = strip_marker(current) {
        current = rest.trim();
    }
    current
}

/// Drops an introductory first line, splits on line breaks, strips list
/// numbering and blank lines.
pub fn postprocess_llm_response(raw: &str, rules: &PostprocessRules) -> Result<Vec<String>, IngestionError> {
    let mut text = raw.trim_start();
    if rules.intro_patterns.iter().any(|p| text.starts_with(p.as_str())) {
        text = match text.find('\n') {
            Some(pos) => &text[pos + 1..],
            None => "",
        };
    }
    let entries: Vec<String> = text.lines().map(clean_line).filter(|l| !l.is_empty()).map(str::to_string).collect();
    if entries.is_empty() {
        return Err(IngestionError::EmptyResponse);
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn run(raw: &str) -> Result<Vec<String>, IngestionError> {
        postprocess_llm_response(raw, &PostprocessRules::default())
    }

    #[test]
    fn intro_line_and_numbering() {
        assert_eq!(run("Here is the differential:\n1. Influenza\n2. COVID-19").unwrap(), vec!["Influenza", "COVID-19"]);
        assert_eq!(run("Influenza").unwrap(), vec!["Influenza"]);
        assert_eq!(run("* Asthma\n* GERD\n\n").unwrap(), vec!["Asthma", "GERD"]);
    }

    #[test]
    fn numbering_variants() {
        let raw =
            "1) Pneumonia\n(2) Sepsis\n3: Bronchitis\n - Pleurisy\n• Empyema\na) Lung abscess\n10. Tuberculosis\r\n";
        assert_eq!(
            run(raw).unwrap(),
            vec!["Pneumonia", "Sepsis", "Bronchitis", "Pleurisy", "Empyema", "Lung abscess", "Tuberculosis"]
        );
    }

    #[test]
    fn leaves_names_starting_with_digits_alone() {
        assert_eq!(
            run("1. 5-alpha reductase deficiency\n2. 22q11.2 deletion syndrome\n3. Type 1 diabetes").unwrap(),
            vec!["5-alpha reductase deficiency", "22q11.2 deletion syndrome", "Type 1 diabetes"]
        );
        assert_eq!(run("-Asthma").unwrap(), vec!["-Asthma"]);
        assert_eq!(run("A. fumigatus infection").unwrap(), vec!["A. fumigatus infection"]);
    }

    #[test]
    fn intro_match_is_case_sensitive() {
        assert_eq!(run("based on the history\nFlu").unwrap(), vec!["based on the history", "Flu"]);
        assert_eq!(run("### Response:\nFlu").unwrap(), vec!["Flu"]);
        assert_eq!(run("Sure, here you go:\n\n- Flu\n").unwrap(), vec!["Flu"]);
    }

    #[test]
    fn nothing_left() {
        assert!(matches!(run("Based on the findings, I cannot say."), Err(IngestionError::EmptyResponse)));
        assert!(matches!(run("\n\n  \n"), Err(IngestionError::EmptyResponse)));
        assert!(matches!(run("1.\n2."), Err(IngestionError::EmptyResponse)));
    }

    fn diagnosis() -> impl Strategy<Value = String> {
        proptest::sample::select(vec![
            "Influenza",
            "Acute appendicitis",
            "COVID-19",
            "5-alpha reductase deficiency",
            "Type 2 diabetes",
            "Asthma",
            "Gastroesophageal reflux disease",
            "B12 deficiency",
        ])
        .prop_map(str::to_string)
    }

    fn marker() -> impl Strategy<Value = String> {
        proptest::sample::select(vec!["", "1. ", "2) ", "- ", "* ", "(3) ", "  ", "• "]).prop_map(str::to_string)
    }

    proptest! {
        #[test]
        fn idempotent(
            intro in proptest::option::of(proptest::sample::select(vec!["Here are the diagnoses:", "Sure, ok", "Based on x"])),
            lines in proptest::collection::vec((marker(), diagnosis()), 1..6),
        ) {
            let mut raw = String::new();
            if let Some(i) = intro {
                raw.push_str(i);
                raw.push('\n');
            }
            for (m, d) in &lines {
                raw.push_str(m);
                raw.push_str(d);
                raw.push('\n');
            }
            let once = run(&raw).unwrap();
            let twice = run(&once.join("\n")).unwrap();
            prop_assert_eq!(&once, &twice);
            prop_assert_eq!(once.len(), lines.len());
        }
    }
}
