//! Versioned prompt templates.
//!
//! Requests carry only the template id; the model server renders the
//! template with the question. The texts live in `prompts/<id>.txt`.

use crate::error::{Error, Result};

pub const EXPLAIN_V1: &str = "explain_v1";
pub const ANSWER_V1: &str = "answer_v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: &'static str,
    pub text: &'static str,
}

const TEMPLATES: &[PromptTemplate] = &[
    PromptTemplate {
        id: EXPLAIN_V1,
        text: include_str!("../prompts/explain_v1.txt"),
    },
    PromptTemplate {
        id: ANSWER_V1,
        text: include_str!("../prompts/answer_v1.txt"),
    },
];

pub fn lookup(id: &str) -> Result<PromptTemplate> {
    TEMPLATES
        .iter()
        .find(|t| t.id == id)
        .copied()
        .ok_or_else(|| Error::Config(format!("unknown prompt template {id:?}")))
}

pub fn all() -> &'static [PromptTemplate] {
    TEMPLATES
}

impl PromptTemplate {
    pub fn render(&self, question: &str) -> String {
        self.text.replace("{question}", question)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn templates_resolve_and_render() {
        let t = lookup(EXPLAIN_V1).unwrap();
        assert!(t.render("What is the date?").contains("Question: What is the date?"));
        assert!(lookup(ANSWER_V1).unwrap().text.contains("{question}"));
        assert!(lookup("explain_v0").is_err());
    }
}
