//! Rule-based detection of explicit PII and entity-overlap scoring.
//!
//! Three rule families feed one candidate list:
//!
//! 1. patterns for EMAIL, PHONE, DATE and ID_NUMBER,
//! 2. a case-insensitive gazetteer (`CATEGORY<TAB>surface` files plus a
//!    shipped starter list),
//! 3. capitalisation heuristics: honorific + capitalised words, runs of two
//!    or more capitalised words, and lexicon first names (PERSON), with runs
//!    ending in an organisation suffix tagged ORG.
//!
//! Overlaps are resolved longest match first, then leftmost, then by rule
//! family in the order above. Offsets are in characters, end exclusive.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const STARTER_GAZETTEER: &str = include_str!("../data/starter_gazetteer.tsv");
const FIRST_NAMES: &str = include_str!("../data/first_names.txt");

const ORG_SUFFIXES: &[&str] = &[
    "Inc", "Corp", "Corporation", "LLC", "Ltd", "Company", "Co", "University", "College", "Bank", "Group",
    "Foundation", "Institute", "Hospital", "Agency", "Associates",
];

// Capitalised words that never start or extend a name run.
const CAPITALISED_STOPWORDS: &[&str] = &[
    "The", "A", "An", "This", "That", "These", "Those", "We", "They", "He", "She", "It", "My", "Our", "Their", "His",
    "Her", "Its", "Your", "But", "And", "Or", "So", "If", "When", "Then", "There", "Here", "What", "Why", "How",
    "Where", "Who", "Yes", "No", "Not", "Also", "Just", "Great", "Good", "Very", "Monday", "Tuesday",
    "Wednesday", "Thursday", "Friday", "Saturday", "Sunday", "January", "February", "March", "April", "May", "June",
    "July", "August", "September", "October", "November", "December",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Category {
    Person,
    Location,
    Org,
    Date,
    Email,
    Phone,
    IdNumber,
    Product,
}

impl Category {
    pub const ALL: [Category; 8] = [
        Category::Person,
        Category::Location,
        Category::Org,
        Category::Date,
        Category::Email,
        Category::Phone,
        Category::IdNumber,
        Category::Product,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Person => "PERSON",
            Category::Location => "LOCATION",
            Category::Org => "ORG",
            Category::Date => "DATE",
            Category::Email => "EMAIL",
            Category::Phone => "PHONE",
            Category::IdNumber => "ID_NUMBER",
            Category::Product => "PRODUCT",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s.trim())
            .ok_or_else(|| Error::InvalidInput(format!("unknown entity category `{s}`")))
    }
}

/// A detected mention. `start..end` are character offsets into the text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySpan {
    pub category: Category,
    pub surface: String,
    pub start: usize,
    pub end: usize,
}

/// Casefolds and collapses internal whitespace.
pub fn normalize_surface(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Normalised `(surface, category)` pairs with set semantics.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySet(BTreeSet<(String, Category)>);

impl EntitySet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, surface: &str, category: Category) -> bool {
        self.0.insert((normalize_surface(surface), category))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(String, Category)> {
        self.0.iter()
    }

    fn surfaces(&self) -> HashSet<&str> {
        self.0.iter().map(|(s, _)| s.as_str()).collect()
    }

    /// Number of members of `self` whose surface also occurs in `other`,
    /// regardless of category.
    pub fn retained_in(&self, other: &EntitySet) -> usize {
        let theirs = other.surfaces();
        self.0.iter().filter(|(s, _)| theirs.contains(s.as_str())).count()
    }
}

impl<'a> FromIterator<&'a EntitySpan> for EntitySet {
    fn from_iter<I: IntoIterator<Item = &'a EntitySpan>>(iter: I) -> Self {
        let mut set = EntitySet::new();
        for span in iter {
            set.insert(&span.surface, span.category);
        }
        set
    }
}

/// `|E(x) ∩ E(y)| / |E(x)|`, or 0 when `E(x)` is empty.
pub fn entity_overlap(x: &EntitySet, y: &EntitySet) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.retained_in(y) as f64 / x.len() as f64
}

/// `-|E(x) ∩ E(y)| / (|E(x)| + eps)`.
pub fn entity_reward_sets(x: &EntitySet, y: &EntitySet, eps: f64) -> Result<f64> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidParam(format!("entity epsilon must be positive, got {eps}")));
    }
    let kept = x.retained_in(y) as f64;
    if kept == 0.0 {
        return Ok(0.0);
    }
    Ok(-kept / (x.len() as f64 + eps))
}

/// Gazetteer entries, keyed by normalised surface.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    entries: Vec<(Category, String)>,
}

impl Gazetteer {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The shipped starter list.
    pub fn starter() -> Self {
        let mut g = Self::empty();
        g.extend_from_str(STARTER_GAZETTEER, Path::new("<starter>"))
            .expect("starter gazetteer is well formed");
        g
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut g = Self::empty();
        g.extend_from_file(path)?;
        Ok(g)
    }

    pub fn extend_from_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        self.extend_from_str(&text, path)
    }

    pub fn extend_from_str(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: PathBuf::from(origin),
                line: idx + 1,
                message,
            };
            let (cat, surface) = line
                .split_once('\t')
                .ok_or_else(|| err("expected `CATEGORY<TAB>surface`".into()))?;
            let category: Category = cat.parse().map_err(|e: Error| err(e.to_string()))?;
            let surface = surface.trim();
            if surface.is_empty() {
                return Err(err("empty surface".into()));
            }
            self.push(category, surface);
        }
        Ok(())
    }

    pub fn push(&mut self, category: Category, surface: &str) {
        self.entries.push((category, surface.trim().to_string()));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(Category, String)] {
        &self.entries
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum RuleFamily {
    Pattern,
    Gazetteer,
    Heuristic,
}

#[derive(Debug, Clone)]
struct Candidate {
    start: usize,
    end: usize,
    category: Category,
    family: RuleFamily,
}

/// Compiled rule tables. Immutable after construction and `Sync`.
#[derive(Debug, Clone)]
pub struct Detector {
    patterns: Vec<(Category, Regex)>,
    gazetteer: Option<Regex>,
    gazetteer_categories: HashMap<String, Category>,
    title: Regex,
    capitalised: Regex,
    first_names: HashSet<String>,
}

impl Default for Detector {
    fn default() -> Self {
        Self::new(&Gazetteer::starter()).expect("starter rules compile")
    }
}

impl Detector {
    pub fn new(gazetteer: &Gazetteer) -> Result<Self> {
        let month = "(?:January|February|March|April|May|June|July|August|September|October|November|December|Jan|Feb|Mar|Apr|Jun|Jul|Aug|Sep|Sept|Oct|Nov|Dec)";
        let compile = |s: &str| Regex::new(s).map_err(|e| Error::Config(format!("bad pattern: {e}")));
        let patterns = vec![
            (Category::Email, compile(r"[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}")?),
            (
                Category::Phone,
                compile(r"(?:\+\d{1,3}[\s.-]?)?(?:\(\d{3}\)\s?|\b\d{3}[\s.-])\d{3}[\s.-]\d{4}\b")?,
            ),
            (Category::Date, compile(r"\b\d{4}-\d{2}-\d{2}\b")?),
            (Category::Date, compile(r"\b\d{1,2}/\d{1,2}/(?:\d{4}|\d{2})\b")?),
            (
                Category::Date,
                compile(&format!(r"\b{month}\.?\s+\d{{1,2}}(?:st|nd|rd|th)?(?:,?\s+\d{{4}})?\b"))?,
            ),
            (
                Category::Date,
                compile(&format!(r"\b\d{{1,2}}(?:st|nd|rd|th)?\s+(?:of\s+)?{month}(?:,?\s+\d{{4}})?\b"))?,
            ),
            (Category::IdNumber, compile(r"\b\d{3}-\d{2}-\d{4}\b")?),
            (Category::IdNumber, compile(r"\b[A-Z]{1,3}\d{6,}\b")?),
            (Category::IdNumber, compile(r"\b\d{8,}\b")?),
        ];

        let mut gazetteer_categories = HashMap::new();
        let mut surfaces: Vec<&str> = Vec::new();
        for (cat, surface) in gazetteer.entries() {
            let key = normalize_surface(surface);
            if !gazetteer_categories.contains_key(&key) {
                gazetteer_categories.insert(key, *cat);
                surfaces.push(surface);
            }
        }
        // Longest first so the alternation prefers the longest entry at a position.
        surfaces.sort_by(|a, b| b.chars().count().cmp(&a.chars().count()).then(a.cmp(b)));
        let gazetteer_re = if surfaces.is_empty() {
            None
        } else {
            let alts: Vec<String> = surfaces
                .iter()
                .map(|s| {
                    s.split_whitespace()
                        .map(regex::escape)
                        .collect::<Vec<_>>()
                        .join(r"\s+")
                })
                .collect();
            Some(compile(&format!(r"(?i)\b(?:{})\b", alts.join("|")))?)
        };

        Ok(Self {
            patterns,
            gazetteer: gazetteer_re,
            gazetteer_categories,
            title: compile(r"\b(?:Mr|Mrs|Ms|Dr|Prof)\.?\s+\p{Lu}\p{Ll}+(?:\s+\p{Lu}\p{Ll}+)*")?,
            capitalised: compile(r"\b\p{Lu}\p{Ll}+(?:['’]\p{Ll}+)?\b")?,
            first_names: FIRST_NAMES.split_whitespace().map(str::to_string).collect(),
        })
    }

    pub fn with_gazetteer_files<P: AsRef<Path>>(paths: &[P]) -> Result<Self> {
        let mut g = Gazetteer::starter();
        for p in paths {
            g.extend_from_file(p)?;
        }
        Self::new(&g)
    }

    /// Detected spans, sorted by start and non-overlapping.
    pub fn detect_entities(&self, text: &str) -> Vec<EntitySpan> {
        if text.is_empty() {
            return Vec::new();
        }
        let mut cands = Vec::new();
        for (cat, re) in &self.patterns {
            for m in re.find_iter(text) {
                cands.push(Candidate {
                    start: m.start(),
                    end: m.end(),
                    category: *cat,
                    family: RuleFamily::Pattern,
                });
            }
        }
        if let Some(re) = &self.gazetteer {
            for m in re.find_iter(text) {
                if let Some(cat) = self.gazetteer_categories.get(&normalize_surface(m.as_str())) {
                    cands.push(Candidate {
                        start: m.start(),
                        end: m.end(),
                        category: *cat,
                        family: RuleFamily::Gazetteer,
                    });
                }
            }
        }
        self.heuristic_candidates(text, &mut cands);
        resolve(text, cands)
    }

    pub fn entity_set(&self, text: &str) -> EntitySet {
        self.detect_entities(text).iter().collect()
    }

    /// `r_entity` for a source and a rewrite.
    pub fn entity_reward(&self, x: &str, y: &str, eps: f64) -> Result<f64> {
        entity_reward_sets(&self.entity_set(x), &self.entity_set(y), eps)
    }

    fn heuristic_candidates(&self, text: &str, out: &mut Vec<Candidate>) {
        for m in self.title.find_iter(text) {
            out.push(Candidate {
                start: m.start(),
                end: m.end(),
                category: Category::Person,
                family: RuleFamily::Heuristic,
            });
        }

        // Group capitalised words separated only by spaces into runs.
        let words: Vec<regex::Match<'_>> = self
            .capitalised
            .find_iter(text)
            .filter(|m| !CAPITALISED_STOPWORDS.contains(&m.as_str()))
            .collect();
        let mut runs: Vec<Vec<regex::Match<'_>>> = Vec::new();
        for w in words {
            match runs.last_mut() {
                Some(run) if is_space_gap(&text[run.last().expect("non-empty run").end()..w.start()]) => run.push(w),
                _ => runs.push(vec![w]),
            }
        }
        for mut run in runs {
            if self.sentence_initial(text, run[0].start()) && !self.first_names.contains(run[0].as_str()) {
                run.remove(0);
            }
            let Some(first) = run.first() else { continue };
            let last = run.last().expect("non-empty run");
            let ends_with_suffix = ORG_SUFFIXES.contains(&last.as_str());
            let category = if ends_with_suffix && run.len() >= 2 {
                Category::Org
            } else if run.len() >= 2 || self.first_names.contains(first.as_str()) {
                Category::Person
            } else {
                continue;
            };
            out.push(Candidate {
                start: first.start(),
                end: last.end(),
                category,
                family: RuleFamily::Heuristic,
            });
        }
    }

    fn sentence_initial(&self, text: &str, byte_start: usize) -> bool {
        let before = text[..byte_start].trim_end_matches(|c: char| c.is_whitespace() || matches!(c, '"' | '\'' | '“' | '‘' | '(' ));
        match before.chars().last() {
            None => true,
            Some(c) => matches!(c, '.' | '!' | '?' | '\n' | ':' | ';'),
        }
    }
}

fn is_space_gap(gap: &str) -> bool {
    !gap.is_empty() && gap.chars().all(|c| c == ' ' || c == '\t')
}

fn resolve(text: &str, mut cands: Vec<Candidate>) -> Vec<EntitySpan> {
    cands.sort_by(|a, b| {
        (b.end - b.start)
            .cmp(&(a.end - a.start))
            .then(a.start.cmp(&b.start))
            .then(a.family.cmp(&b.family))
            .then(a.category.cmp(&b.category))
    });
    let mut taken: Vec<Candidate> = Vec::new();
    for c in cands {
        if c.start >= c.end {
            continue;
        }
        if taken.iter().all(|t| c.end <= t.start || c.start >= t.end) {
            taken.push(c);
        }
    }
    taken.sort_by_key(|c| c.start);

    // Byte offsets to character offsets.
    let char_at: HashMap<usize, usize> = text
        .char_indices()
        .map(|(ci, _)| ci)
        .chain(std::iter::once(text.len()))
        .enumerate()
        .map(|(i, b)| (b, i))
        .collect();
    taken
        .into_iter()
        .map(|c| EntitySpan {
            category: c.category,
            surface: text[c.start..c.end].to_string(),
            start: char_at[&c.start],
            end: char_at[&c.end],
        })
        .collect()
}

/// Slices `text` by character offsets.
pub fn char_slice(text: &str, start: usize, end: usize) -> String {
    text.chars().skip(start).take(end.saturating_sub(start)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(items: &[&str]) -> EntitySet {
        let mut s = EntitySet::new();
        for i in items {
            s.insert(i, Category::Person);
        }
        s
    }

    #[test]
    fn empty_text() {
        assert!(Detector::default().detect_entities("").is_empty());
    }

    #[test]
    fn mixed_sentence() {
        let d = Detector::default();
        let text = "Contact John Smith at john@x.com on 2015-03-02 in Austin";
        let spans = d.detect_entities(text);
        let got: Vec<(Category, &str, usize, usize)> =
            spans.iter().map(|s| (s.category, s.surface.as_str(), s.start, s.end)).collect();
        assert_eq!(
            got,
            vec![
                (Category::Person, "John Smith", 8, 18),
                (Category::Email, "john@x.com", 22, 32),
                (Category::Date, "2015-03-02", 36, 46),
                (Category::Location, "Austin", 50, 56),
            ]
        );
    }

    #[test]
    fn gazetteer_multiword_location() {
        let spans = Detector::default().detect_entities("Old Metairie");
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].category, Category::Location);
        assert_eq!(spans[0].surface, "Old Metairie");
    }

    #[test]
    fn offsets_are_characters() {
        let text = "Café owner Mary Jones lives in Boston.";
        for s in Detector::default().detect_entities(text) {
            assert_eq!(char_slice(text, s.start, s.end), s.surface);
        }
    }

    #[test]
    fn patterns() {
        let d = Detector::default();
        let cats = |t: &str| d.detect_entities(t).into_iter().map(|s| s.category).collect::<Vec<_>>();
        assert_eq!(cats("call 555-123-4567 now"), vec![Category::Phone]);
        assert_eq!(cats("ssn 123-45-6789 ok"), vec![Category::IdNumber]);
        assert_eq!(cats("met on March 2, 2015 there"), vec![Category::Date]);
        assert_eq!(cats("acct 1234567890"), vec![Category::IdNumber]);
        assert_eq!(cats("I work at Acme Widget Corp now"), vec![Category::Org]);
        assert_eq!(cats("ask Dr. Kowalski about it"), vec![Category::Person]);
    }

    #[test]
    fn gazetteer_is_case_insensitive() {
        let d = Detector::default();
        let a = d.entity_set("I moved to AUSTIN");
        let b = d.entity_set("austin is nice");
        assert_eq!(entity_overlap(&a, &b), 1.0);
    }

    #[test]
    fn gazetteer_file_errors() {
        let mut g = Gazetteer::empty();
        let e = g.extend_from_str("PERSON\tAl\nBOGUS\tx\n", Path::new("g.tsv")).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn overlap_examples() {
        assert_eq!(entity_overlap(&set(&["A", "B"]), &set(&["A", "B"])), 1.0);
        assert_eq!(entity_overlap(&set(&["A", "B"]), &set(&[])), 0.0);
        let v = entity_overlap(&set(&["A", "B", "C"]), &set(&["A", "C", "D"]));
        assert!((v - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(entity_overlap(&set(&[]), &set(&["A"])), 0.0);
    }

    #[test]
    fn overlap_ignores_category_and_case() {
        let mut x = EntitySet::new();
        x.insert("JOHN", Category::Person);
        let mut y = EntitySet::new();
        y.insert("john", Category::Org);
        assert_eq!(entity_overlap(&x, &y), 1.0);
    }

    #[test]
    fn reward_examples() {
        assert_eq!(entity_reward_sets(&set(&["A", "B"]), &set(&["C"]), 1.0).unwrap(), 0.0);
        let r = entity_reward_sets(&set(&["A", "B"]), &set(&["A"]), 1.0).unwrap();
        assert!((r + 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(entity_reward_sets(&set(&[]), &set(&["A"]), 1.0).unwrap(), 0.0);
        assert!(entity_reward_sets(&set(&[]), &set(&[]), 0.0).is_err());
    }
}
