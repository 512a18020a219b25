//! Configurable response-parsing rules and their compiled form.

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::GradeError;

/// A named regular expression. Letter-binding patterns capture the option
/// letter in group 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamedPattern {
    pub id: String,
    pub pattern: String,
}

impl NamedPattern {
    fn new(id: &str, pattern: &str) -> Self {
        Self {
            id: id.to_string(),
            pattern: pattern.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HallucinationHeuristic {
    /// A quoted span of three or more words that matches no option.
    QuotedTextMatchesNoOption,
    /// "the answer is <text>" where the text matches no option.
    AssertedTextMatchesNoOption,
    /// One word repeated six or more times in a row.
    DegenerateRepetition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Normalization {
    pub case_fold: bool,
    pub collapse_whitespace: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseRules {
    /// Explicit final-answer markers; the last match in the text wins.
    pub final_answer_patterns: Vec<NamedPattern>,
    /// Letter-binding patterns, tried in order.
    pub option_patterns: Vec<NamedPattern>,
    /// Clauses ruling options out; group 1 lists the letters.
    pub elimination_patterns: Vec<NamedPattern>,
    /// Clauses naming surviving candidates; group 1 lists the letters.
    pub hedge_patterns: Vec<NamedPattern>,
    /// Matched against normalized text.
    pub refusal_patterns: Vec<NamedPattern>,
    pub hallucination_heuristics: Vec<HallucinationHeuristic>,
    pub normalization: Normalization,
}

const LETTER_END: &str = r"(?:[^A-Za-z0-9]|$)";

impl Default for ParseRules {
    fn default() -> Self {
        let list = r"([A-Z](?:\s*(?:,|or|and|nor|/)\s*(?:option\s+)?[A-Z])*)\b";
        Self {
            final_answer_patterns: vec![NamedPattern::new(
                "final_answer",
                &format!(r"(?i:final\s+answer)\s*(?:is|:)?\s*:?\s*(?:option\s+)?\(?([A-Z])\)?{LETTER_END}"),
            )],
            option_patterns: vec![
                NamedPattern::new(
                    "answer_is",
                    &format!(r"(?i:\banswer\s+(?:is|would\s+be|should\s+be))\s*:?\s*(?i:option\s+)?\(?([A-Z])\)?{LETTER_END}"),
                ),
                NamedPattern::new(
                    "answer_colon",
                    &format!(r"(?i:\banswer)\s*:\s*(?i:option\s+)?\(?([A-Z])\)?{LETTER_END}"),
                ),
                NamedPattern::new(
                    "option_is_correct",
                    &format!(r"(?i:\boption)\s+\(?([A-Z])\)?\s+(?i:is\s+(?:the\s+)?correct|is\s+right){LETTER_END}"),
                ),
                NamedPattern::new(
                    "i_choose",
                    &format!(r"(?i:\bI\s+(?:choose|pick|select|would\s+choose|will\s+go\s+with))\s*:?\s*(?i:option\s+)?\(?([A-Z])\)?{LETTER_END}"),
                ),
                NamedPattern::new("leading_letter", r"^\s*\(?([A-Z])\)?(?:[.):]|\s*$)"),
                NamedPattern::new("bold_letter", r"\*\*\(?([A-Z])\)?[.)]?\*\*"),
            ],
            elimination_patterns: vec![
                NamedPattern::new(
                    "not_options",
                    &format!(r"(?i:\b(?:not|isn't|is\s+not|rule\s+out|ruling\s+out|eliminate|excluding|exclude))\s+(?i:options?\s+)?{list}"),
                ),
                NamedPattern::new(
                    "options_wrong",
                    &format!(r"{list}\s+(?i:(?:are|is)\s+(?:wrong|incorrect|unlikely|ruled\s+out))"),
                ),
            ],
            hedge_patterns: vec![
                NamedPattern::new(
                    "likely_between",
                    &format!(r"(?i:\b(?:likely|probably|either|between|could\s+be|might\s+be|may\s+be|narrow\s+it\s+down\s+to))\s+(?i:options?\s+)?{list}"),
                ),
            ],
            refusal_patterns: ["i don't know", "i do not know", "cannot determine", "not sure", "unable to answer"]
                .iter()
                .enumerate()
                .map(|(i, p)| NamedPattern::new(&format!("refusal_{i}"), &regex::escape(p)))
                .collect(),
            hallucination_heuristics: vec![
                HallucinationHeuristic::QuotedTextMatchesNoOption,
                HallucinationHeuristic::AssertedTextMatchesNoOption,
                HallucinationHeuristic::DegenerateRepetition,
            ],
            normalization: Normalization {
                case_fold: true,
                collapse_whitespace: true,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Compiled {
    pub id: String,
    pub re: Regex,
}

/// [`ParseRules`] with every pattern compiled.
#[derive(Debug, Clone)]
pub struct CompiledRules {
    pub(crate) rules: ParseRules,
    pub(crate) final_answer: Vec<Compiled>,
    pub(crate) options: Vec<Compiled>,
    pub(crate) elimination: Vec<Compiled>,
    pub(crate) hedge: Vec<Compiled>,
    pub(crate) refusal: Vec<Compiled>,
    pub(crate) quoted: Regex,
    pub(crate) asserted: Regex,
}

fn compile(list: &[NamedPattern], needs_group: bool) -> Result<Vec<Compiled>, GradeError> {
    list.iter()
        .map(|p| {
            let re = Regex::new(&p.pattern).map_err(|e| GradeError::Rules(format!("{}: {e}", p.id)))?;
            if needs_group && re.captures_len() < 2 {
                return Err(GradeError::Rules(format!("{}: pattern needs a capture group", p.id)));
            }
            Ok(Compiled { id: p.id.clone(), re })
        })
        .collect()
}

impl CompiledRules {
    pub fn new(rules: ParseRules) -> Result<Self, GradeError> {
        Ok(Self {
            final_answer: compile(&rules.final_answer_patterns, true)?,
            options: compile(&rules.option_patterns, true)?,
            elimination: compile(&rules.elimination_patterns, true)?,
            hedge: compile(&rules.hedge_patterns, true)?,
            refusal: compile(&rules.refusal_patterns, false)?,
            quoted: Regex::new(r#"["“]([^"”]+)["”]"#).expect("static regex"),
            asserted: Regex::new(r"(?i)\b(?:the\s+answer\s+is|the\s+paper\s+is|it\s+is\s+titled|titled)\s+(.{12,}?)\s*[.!]?\s*$")
                .expect("static regex"),
            rules,
        })
    }

    pub fn rules(&self) -> &ParseRules {
        &self.rules
    }

    pub(crate) fn normalize(&self, text: &str) -> String {
        let n = self.rules.normalization;
        let mut s = if n.collapse_whitespace {
            text.split_whitespace().collect::<Vec<_>>().join(" ")
        } else {
            text.to_string()
        };
        if n.case_fold {
            s = s.to_lowercase();
        }
        // Curly apostrophes are common in chat output.
        s.replace('’', "'")
    }
}

impl ParseRules {
    pub fn load(path: &std::path::Path) -> Result<Self, GradeError> {
        let text = std::fs::read_to_string(path).map_err(|e| GradeError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let rules: ParseRules = serde_json::from_str(&text).map_err(|e| GradeError::Rules(e.to_string()))?;
        CompiledRules::new(rules.clone())?;
        Ok(rules)
    }

    pub fn digest(&self) -> String {
        crate::hashing::sha256_hex(serde_json::to_string(self).expect("rules serialize").as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_compile() {
        CompiledRules::new(ParseRules::default()).unwrap();
    }

    #[test]
    fn shipped_rules_file_matches_defaults() {
        let shipped: ParseRules =
            serde_json::from_str(include_str!("../../data/parse_rules.json")).unwrap();
        assert_eq!(shipped, ParseRules::default());
    }

    #[test]
    fn pattern_without_group_rejected() {
        let mut r = ParseRules::default();
        r.option_patterns.push(NamedPattern::new("bad", "answer"));
        assert!(CompiledRules::new(r).is_err());
    }
}
