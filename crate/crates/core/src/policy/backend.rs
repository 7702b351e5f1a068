//! Candidate generation backends.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::fnv1a64;
use crate::error::{Error, Result};
use crate::http::JsonClient;
use crate::pii::{normalize_surface, Category, Detector, EntitySpan};
use crate::prompting::{render_generation, render_pii, PromptBundle};

/// What a backend sees for one input.
#[derive(Debug, Clone)]
pub struct GenerationRequest<'a> {
    pub prompt: &'a PromptBundle,
    pub source: &'a str,
    pub pii: &'a [EntitySpan],
}

pub trait GenerationBackend: Send + Sync {
    /// Exactly `n` raw generations, or an error.
    fn generate(&self, req: &GenerationRequest<'_>, n: usize) -> Result<Vec<String>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BackendKind {
    MockParaphraser,
    RemoteChat(RemoteChatConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub backend: BackendKind,
    /// Candidates per prompt.
    pub n: usize,
    pub temperature: f64,
    pub max_length: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::MockParaphraser,
            n: 4,
            temperature: 1.0,
            max_length: 512,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidParam("n must be at least 2 for preference pairs".into()));
        }
        if !(self.temperature >= 0.0) || !self.temperature.is_finite() {
            return Err(Error::InvalidParam("temperature must be >= 0".into()));
        }
        if let BackendKind::RemoteChat(c) = &self.backend {
            if c.endpoint.is_empty() {
                return Err(Error::Config("remote-chat endpoint is empty".into()));
            }
        }
        Ok(())
    }

    pub fn build(&self, seed: u64, detector: Detector) -> Result<Box<dyn GenerationBackend>> {
        self.validate()?;
        Ok(match &self.backend {
            BackendKind::MockParaphraser => Box::new(MockParaphraser::new(seed, detector)),
            BackendKind::RemoteChat(c) => Box::new(RemoteChat::new(c.clone(), self.temperature, self.max_length)?),
        })
    }
}

/// Deterministic rule-based paraphraser used for offline runs and tests.
///
/// Every candidate replaces detected entities with generic lowercase
/// phrases, maps marked stylistic vocabulary to neutral wording, flattens
/// emphatic punctuation and may reorder sentences. Candidates differ in the
/// seeded choice of replacements and order.
#[derive(Debug, Clone)]
pub struct MockParaphraser {
    seed: u64,
    detector: Detector,
}

fn generic_phrases(c: Category) -> &'static [&'static str] {
    match c {
        Category::Person => &["someone", "a friend", "a person"],
        Category::Location => &["a nearby area", "the city", "a local neighborhood"],
        Category::Org => &["a company", "an organization", "a local business"],
        Category::Date => &["some time ago", "a recent date", "an earlier year"],
        Category::Email => &["an email address"],
        Category::Phone => &["a phone number"],
        Category::IdNumber => &["an identification number"],
        Category::Product => &["a device", "a product"],
    }
}

/// Marked or informal words and their neutral replacements.
const SYNONYMS: &[(&str, &[&str])] = &[
    ("awesome", &["good", "pleasant"]),
    ("amazing", &["good", "pleasant"]),
    ("fantastic", &["good", "pleasant"]),
    ("terrific", &["good", "pleasant"]),
    ("superb", &["good", "pleasant"]),
    ("splendid", &["good", "pleasant"]),
    ("cool", &["fine", "good"]),
    ("dope", &["fine", "good"]),
    ("lit", &["lively", "busy"]),
    ("nasty", &["unpleasant", "poor"]),
    ("terrible", &["poor", "unpleasant"]),
    ("awful", &["poor", "unpleasant"]),
    ("dreadful", &["poor", "unpleasant"]),
    ("horrible", &["poor", "unpleasant"]),
    ("totally", &["quite", "fairly"]),
    ("super", &["very", "quite"]),
    ("really", &["very", "quite"]),
    ("truly", &["very", "quite"]),
    ("utterly", &["very", "quite"]),
    ("extremely", &["very", "quite"]),
    ("absolutely", &["very", "quite"]),
    ("indeed", &["also", "as well"]),
    ("moreover", &["also", "as well"]),
    ("furthermore", &["also", "as well"]),
    ("besides", &["also", "as well"]),
    ("gonna", &["going to"]),
    ("wanna", &["want to"]),
    ("gotta", &["have to"]),
    ("kinda", &["somewhat"]),
    ("sorta", &["somewhat"]),
    ("yeah", &["yes"]),
    ("yep", &["yes"]),
    ("nope", &["no"]),
    ("guys", &["people"]),
    ("folks", &["people"]),
    ("y'all", &["everyone"]),
    ("dude", &["person"]),
    ("buddy", &["friend"]),
    ("pal", &["friend"]),
    ("lol", &[""]),
    ("haha", &[""]),
    ("omg", &[""]),
    ("wow", &[""]),
    ("alas", &[""]),
    ("honestly", &[""]),
    ("basically", &[""]),
    ("literally", &[""]),
    ("frankly", &[""]),
    ("grub", &["food", "meal"]),
    ("joint", &["place", "venue"]),
    ("spot", &["place", "venue"]),
    ("establishment", &["place", "venue"]),
    ("eatery", &["place", "venue"]),
    ("brews", &["drinks", "beverages"]),
    ("booze", &["drinks", "beverages"]),
    ("libations", &["drinks", "beverages"]),
];

fn neutral_for(word: &str) -> Option<&'static [&'static str]> {
    let lower = word.to_lowercase();
    SYNONYMS.iter().find(|(w, _)| *w == lower).map(|(_, r)| *r)
}

/// Replaces spans (character offsets) right-to-left.
fn substitute_entities(text: &str, spans: &[EntitySpan], rng: &mut ChaCha8Rng) -> String {
    let mut chars: Vec<char> = text.chars().collect();
    let mut spans: Vec<&EntitySpan> = spans.iter().collect();
    spans.sort_by_key(|s| std::cmp::Reverse(s.start));
    for s in spans {
        if s.end > chars.len() || s.start >= s.end {
            continue;
        }
        let choices = generic_phrases(s.category);
        let rep = choices[rng.gen_range(0..choices.len())];
        chars.splice(s.start..s.end, rep.chars());
    }
    chars.into_iter().collect()
}

fn neutralize_words(text: &str, rng: &mut ChaCha8Rng) -> String {
    let mut out: Vec<String> = Vec::new();
    for word in text.split_whitespace() {
        let start = word.find(|c: char| c.is_alphanumeric() || c == '\'');
        let end = word
            .char_indices()
            .filter(|(_, c)| c.is_alphanumeric() || *c == '\'')
            .last()
            .map(|(i, c)| i + c.len_utf8());
        let (pre, core, post) = match (start, end) {
            (Some(a), Some(b)) if a < b => (&word[..a], &word[a..b], &word[b..]),
            _ => ("", "", word),
        };
        let core = match neutral_for(core) {
            Some(choices) => choices[rng.gen_range(0..choices.len())].to_string(),
            // shouting and capitalised emphasis are stylistic markers too
            None if core.chars().count() > 1 && core.chars().all(|c| c.is_uppercase()) => core.to_lowercase(),
            None => core.to_string(),
        };
        let post = flatten_punct(post);
        let pre: String = pre.chars().filter(|c| !matches!(c, '*' | '~' | '_' | '#')).collect();
        let piece = format!("{pre}{core}{post}");
        if core.is_empty() && pre.is_empty() {
            // a dropped interjection keeps its sentence end, if any
            if let Some(last) = out.last_mut() {
                if post.ends_with('.') && !last.ends_with('.') {
                    last.push('.');
                }
            }
            continue;
        }
        if !piece.is_empty() {
            out.push(piece);
        }
    }
    out.join(" ")
}

/// Emphatic or decorative trailing punctuation becomes a plain stop.
fn flatten_punct(post: &str) -> String {
    if post.is_empty() {
        return String::new();
    }
    let closes: String = post.chars().filter(|c| matches!(c, ')' | '"' | '\'')).collect();
    let has_stop = post.contains(['!', '?', '.', ';']);
    let has_comma = post.contains(',');
    let stop = if post.contains('?') && !post.contains('!') && !post.contains("..") {
        "?"
    } else if has_stop {
        "."
    } else if has_comma {
        ","
    } else if post.contains(':') {
        ":"
    } else {
        ""
    };
    format!("{closes}{stop}")
}

fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for word in text.split_whitespace() {
        if !cur.is_empty() {
            cur.push(' ');
        }
        cur.push_str(word);
        if word.ends_with(['.', '?']) {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn capitalize_first(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

impl MockParaphraser {
    pub fn new(seed: u64, detector: Detector) -> Self {
        Self { seed, detector }
    }

    /// One candidate's solution text.
    pub fn rewrite(&self, source: &str, pii: &[EntitySpan], rng: &mut ChaCha8Rng) -> Result<String> {
        let text = substitute_entities(source, pii, rng);
        let text = neutralize_words(&text, rng);
        let mut sentences = split_sentences(&text);
        if sentences.len() > 1 && rng.gen_bool(0.5) {
            sentences.shuffle(rng);
        }
        let mut out: Vec<String> = sentences.iter().map(|s| capitalize_first(s)).collect();
        if let Some(last) = out.last_mut() {
            if !last.ends_with(['.', '?']) {
                last.push('.');
            }
        }
        let out = out.join(" ");
        if out.trim().is_empty() || out.trim() == "." {
            return Err(Error::MockRuleError("rewrite is empty".into()));
        }
        // the guarantee tests rely on: no detected surface survives
        let kept: Vec<String> = pii.iter().map(|s| normalize_surface(&s.surface)).collect();
        let left = self.detector.entity_set(&out);
        if let Some((s, _)) = left.iter().find(|(s, _)| kept.contains(s)) {
            return Err(Error::MockRuleError(format!("entity `{s}` survived substitution")));
        }
        Ok(out)
    }
}

impl GenerationBackend for MockParaphraser {
    fn generate(&self, req: &GenerationRequest<'_>, n: usize) -> Result<Vec<String>> {
        let key = fnv1a64(&[req.prompt.full.as_bytes(), &self.seed.to_le_bytes()]);
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        let reasoning = format!(
            "Detected PII: {}. Replace identifiers with generic descriptions and use a neutral register.",
            render_pii(req.pii)
        );
        (0..n)
            .map(|_| Ok(render_generation(&reasoning, &self.rewrite(req.source, req.pii, &mut rng)?)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteChatConfig {
    pub endpoint: String,
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_key_env() -> String {
    "GEN_API_KEY".to_string()
}

fn default_timeout_ms() -> u64 {
    60_000
}

fn default_in_flight() -> usize {
    4
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    prompt: &'a str,
    n: usize,
    temperature: f64,
    max_length: usize,
}

#[derive(Deserialize)]
struct ChatResponse {
    completions: Vec<String>,
}

/// Chat service speaking `{"prompt", "n", "temperature", "max_length"} ->
/// {"completions"}`.
#[derive(Debug)]
pub struct RemoteChat {
    client: JsonClient,
    temperature: f64,
    max_length: usize,
}

impl RemoteChat {
    pub fn new(cfg: RemoteChatConfig, temperature: f64, max_length: usize) -> Result<Self> {
        let bearer = std::env::var(&cfg.api_key_env).ok();
        Ok(Self {
            client: JsonClient::new(&cfg.endpoint, bearer, cfg.timeout_ms, cfg.max_in_flight),
            temperature,
            max_length,
        })
    }
}

impl GenerationBackend for RemoteChat {
    fn generate(&self, req: &GenerationRequest<'_>, n: usize) -> Result<Vec<String>> {
        let resp: ChatResponse = self.client.post(&ChatRequest {
            prompt: &req.prompt.full,
            n,
            temperature: self.temperature,
            max_length: self.max_length,
        })?;
        if resp.completions.len() != n {
            return Err(Error::RemoteUnavailable(format!(
                "expected {n} completions, got {}",
                resp.completions.len()
            )));
        }
        Ok(resp.completions)
    }
}
