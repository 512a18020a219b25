use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::probegen::Probe;

pub const DEFAULT_TEMPLATE: &str = "mc-v1";

/// `(id, system message, instruction line)`.
pub const TEMPLATES: &[(&str, &str, &str)] = &[
    (
        "mc-v1",
        "You are answering multiple-choice questions about academic papers from memory. Do not guess.",
        "Answer with the single letter of the correct option. If you do not know, answer \"I don't know\".",
    ),
    (
        "mc-terse",
        "Answer from memory.",
        "Reply with one option letter only, or \"I don't know\".",
    ),
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub system: String,
    pub user: String,
}

impl RenderedPrompt {
    /// System and user content joined, for logging and lookup.
    pub fn full_text(&self) -> String {
        format!("{}\n\n{}", self.system, self.user)
    }
}

/// `A`, `B`, ... for option index `i`.
pub fn option_label(i: usize) -> char {
    (b'A' + i as u8) as char
}

pub fn render_prompt(probe: &Probe, template_id: &str) -> Result<RenderedPrompt, ModelError> {
    let (_, system, instruction) = TEMPLATES
        .iter()
        .find(|(id, _, _)| *id == template_id)
        .ok_or_else(|| ModelError::UnknownTemplate(template_id.to_string()))?;
    let mut user = String::new();
    user.push_str(&probe.stem);
    user.push_str("\n\n");
    for (i, option) in probe.options.iter().enumerate() {
        user.push_str(&format!("{}. {}\n", option_label(i), option));
    }
    user.push('\n');
    user.push_str(instruction);
    Ok(RenderedPrompt {
        system: system.to_string(),
        user,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probegen::ProbeType;

    fn probe(n: usize) -> Probe {
        Probe {
            probe_id: "p/E1_mc/0".into(),
            paper_id: "p".into(),
            probe_type: ProbeType::E1Title,
            stem: "Which title?".into(),
            options: (0..n).map(|i| format!("Option number {i}")).collect(),
            correct_index: 0,
            distractor_sources: vec![],
            rng_seed_used: 0,
        }
    }

    #[test]
    fn four_options_labelled_a_to_d() {
        let p = render_prompt(&probe(4), DEFAULT_TEMPLATE).unwrap();
        assert!(p.user.starts_with("Which title?"));
        for l in ["A. ", "B. ", "C. ", "D. "] {
            assert!(p.user.contains(l));
        }
        assert!(!p.user.contains("E. "));
        assert!(p.user.contains("single letter"));
        assert!(p.user.contains("I don't know"));
    }

    #[test]
    fn five_options_stop_at_e() {
        let p = render_prompt(&probe(5), DEFAULT_TEMPLATE).unwrap();
        assert!(p.user.contains("E. Option number 4"));
        assert!(!p.user.contains("F. "));
    }

    #[test]
    fn rendering_is_deterministic() {
        let a = render_prompt(&probe(4), "mc-terse").unwrap();
        let b = render_prompt(&probe(4), "mc-terse").unwrap();
        assert_eq!(a.full_text().as_bytes(), b.full_text().as_bytes());
    }

    #[test]
    fn unknown_template_rejected() {
        assert!(matches!(
            render_prompt(&probe(4), "nope"),
            Err(ModelError::UnknownTemplate(_))
        ));
    }
}
