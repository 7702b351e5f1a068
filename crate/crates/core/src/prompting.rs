//! Context extraction, prompt assembly and generation parsing.

use serde::{Deserialize, Serialize};

use crate::embedding::Embedder;
use crate::error::Result;
use crate::pii::{Detector, EntitySpan};
use crate::style_pool::StylePoolState;

pub const REASONING_START: &str = "<reasoning_start>";
pub const REASONING_END: &str = "<reasoning_end>";
pub const SOLUTION_START: &str = "<solution_start>";
pub const SOLUTION_END: &str = "<solution_end>";

const DELIMITERS: [&str; 4] = [REASONING_START, REASONING_END, SOLUTION_START, SOLUTION_END];

pub const DEFAULT_SYSTEM_PROMPT: &str = "You are a sophisticated privacy-focused text anonymizer. Task is to rewrite input text to protect personal information and maintain confidentiality.
Firstly, detect all personally identifiable information (PII) such as names, email addresses, phone numbers, physical addresses, and identification numbers.
And imply implicit author attribute like age, gender, and writing style; they can guide your rewrite.
Place your reasoning process between <reasoning_start> and <reasoning_end>.
Then, replace each identified piece of PII with a fake value that matches the type and context.
Please change the text writing style and hide all personal attributes. Remove any informal language, including slang, idioms, or personal tone.
The rewritten text needs to reserve meaning. You can adjust nominal words and phrases as necessary while preserving the core meaning of the original text. Ensure that the rewritten text conveys the same overall message and intent.
Place your rewritten text between <solution_start> and <solution_end> after the reasoning part.";

pub const DEFAULT_OUTLIER_SENTENCE: &str =
    "The text is a stylistic outlier, with closest writing context: {style_context}";
pub const DEFAULT_TYPICAL_SENTENCE: &str =
    "The text is stylistically typical, with closest writing context: {style_context}";
pub const FINAL_QUESTION: &str = "What is the rewritten text?";

/// Overridable prompt strings. `{style_context}` is substituted in the two
/// style sentences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptTemplates {
    pub system_prompt: String,
    pub outlier_sentence: String,
    pub typical_sentence: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            system_prompt: DEFAULT_SYSTEM_PROMPT.to_string(),
            outlier_sentence: DEFAULT_OUTLIER_SENTENCE.to_string(),
            typical_sentence: DEFAULT_TYPICAL_SENTENCE.to_string(),
        }
    }
}

impl PromptTemplates {
    /// Uses the outlier sentence for every input regardless of the verdict.
    pub fn outlier_wording_only() -> Self {
        Self {
            typical_sentence: DEFAULT_OUTLIER_SENTENCE.to_string(),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSignals {
    pub pii: Vec<EntitySpan>,
    pub is_outlier: bool,
    pub neighbor_text: Option<String>,
    pub neighbor_similarity: Option<f64>,
    /// Mean style distance to the pool and the threshold it was compared to.
    pub avg_distance: Option<f64>,
    pub tau: Option<f64>,
}

impl ContextSignals {
    pub fn cold(pii: Vec<EntitySpan>) -> Self {
        Self {
            pii,
            is_outlier: false,
            neighbor_text: None,
            neighbor_similarity: None,
            avg_distance: None,
            tau: None,
        }
    }
}

pub fn extract_context(
    x: &str,
    pool: &StylePoolState,
    detector: &Detector,
    embedder: &Embedder,
) -> Result<ContextSignals> {
    let pii = detector.detect_entities(x);
    if pool.is_empty() {
        return Ok(ContextSignals::cold(pii));
    }
    let emb = embedder.embed_style(x)?;
    let verdict = pool.is_outlier(&emb)?;
    let (node, sim) = pool.nearest_style_neighbor(&emb)?;
    Ok(ContextSignals {
        pii,
        is_outlier: verdict.is_outlier,
        neighbor_text: Some(node.sentence.clone()),
        neighbor_similarity: Some(sim),
        avg_distance: Some(verdict.avg_distance),
        tau: Some(verdict.tau),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system: String,
    pub context: String,
    #[serde(rename = "final")]
    pub final_: String,
    pub full: String,
}

/// `"surface (CATEGORY)"` joined by `"; "`, or `"none"`.
pub fn render_pii(spans: &[EntitySpan]) -> String {
    if spans.is_empty() {
        return "none".to_string();
    }
    spans
        .iter()
        .map(|s| format!("{} ({})", s.surface, s.category))
        .collect::<Vec<_>>()
        .join("; ")
}

pub fn build_prompt(templates: &PromptTemplates, signals: &ContextSignals, x: &str) -> PromptBundle {
    let style_context = signals.neighbor_text.as_deref().unwrap_or("none");
    let style_sentence = if signals.is_outlier {
        &templates.outlier_sentence
    } else {
        &templates.typical_sentence
    };
    let style_sentence = style_sentence.replace("{style_context}", style_context);
    let context = format!(
        "The original text is: {x} \n Detected PII: {} \n {style_sentence}",
        render_pii(&signals.pii)
    );
    let full = format!("{} {context} \n {FINAL_QUESTION}", templates.system_prompt);
    PromptBundle {
        system: templates.system_prompt.clone(),
        context,
        final_: FINAL_QUESTION.to_string(),
        full,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedGeneration {
    pub reasoning: String,
    pub rewrite: String,
    pub well_formed: bool,
}

/// Renders a well-formed generation.
pub fn render_generation(reasoning: &str, solution: &str) -> String {
    format!("{REASONING_START}{reasoning}{REASONING_END}{SOLUTION_START}{solution}{SOLUTION_END}")
}

/// The single format rule shared by [`parse_generation`] and the format reward:
/// each delimiter occurs exactly once, in reasoning → solution order, and the
/// trimmed solution is non-empty.
pub(crate) fn well_formed_blocks(raw: &str) -> Option<(&str, &str)> {
    let mut pos = [0usize; 4];
    for (i, d) in DELIMITERS.iter().enumerate() {
        if raw.matches(d).count() != 1 {
            return None;
        }
        pos[i] = raw.find(d)?;
    }
    if !pos.windows(2).all(|w| w[0] < w[1]) {
        return None;
    }
    let reasoning = &raw[pos[0] + REASONING_START.len()..pos[1]];
    if pos[1] + REASONING_END.len() > pos[2] {
        return None;
    }
    let solution = raw[pos[2] + SOLUTION_START.len()..pos[3]].trim();
    if solution.is_empty() {
        return None;
    }
    Some((reasoning, solution))
}

pub fn parse_generation(raw: &str) -> ParsedGeneration {
    if let Some((reasoning, solution)) = well_formed_blocks(raw) {
        return ParsedGeneration {
            reasoning: reasoning.trim().to_string(),
            rewrite: solution.to_string(),
            well_formed: true,
        };
    }
    // best effort: text after the first reasoning start, up to its end
    // marker if one follows
    let reasoning = raw
        .find(REASONING_START)
        .map(|i| {
            let rest = &raw[i + REASONING_START.len()..];
            rest.find(REASONING_END).map_or(rest, |j| &rest[..j])
        })
        .unwrap_or("");
    ParsedGeneration {
        reasoning: reasoning.trim().to_string(),
        rewrite: String::new(),
        well_formed: false,
    }
}

/// Removes every delimiter token; the text used when scoring a malformed
/// generation.
pub fn strip_delimiters(raw: &str) -> String {
    let mut s = raw.to_string();
    for d in DELIMITERS {
        s = s.replace(d, " ");
    }
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
