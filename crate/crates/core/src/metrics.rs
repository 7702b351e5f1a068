//! Evaluation metrics over (original, rewrite) corpora.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{mean_pool, tokenize, Embedder, UnitVector};
use crate::error::{Error, Result};
use crate::pii::{entity_overlap, Detector};
use crate::style_pool::{detect_outliers, OutlierParams};

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// BLEU-4 on pre-tokenised input: uniform weights, add-one smoothing on every
/// n-gram precision, standard brevity penalty. An empty candidate scores 0.
pub fn bleu4_tokens(candidate: &[String], reference: &[String]) -> f64 {
    let c = candidate.len();
    if c == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let cand = ngram_counts(candidate, n);
        let refc = ngram_counts(reference, n);
        let matched: usize = cand
            .iter()
            .map(|(g, &k)| k.min(refc.get(g).copied().unwrap_or(0)))
            .sum();
        let total = c.saturating_sub(n - 1);
        log_sum += ((matched as f64 + 1.0) / (total as f64 + 1.0)).ln();
    }
    let r = reference.len();
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    bp * (log_sum / 4.0).exp()
}

pub fn bleu4(candidate: &str, reference: &str) -> f64 {
    bleu4_tokens(&tokenize(candidate), &tokenize(reference))
}

/// Mean BLEU-4 over ordered pairs `(i, j != i)` with `j` as reference.
pub fn self_bleu<S: AsRef<str>>(sentences: &[S]) -> Result<f64> {
    let n = sentences.len();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, actual: n });
    }
    let toks: Vec<Vec<String>> = sentences.iter().map(|s| tokenize(s.as_ref())).collect();
    let total: f64 = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| bleu4_tokens(&toks[i], &toks[j]))
                .sum::<f64>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    Ok(total / (n * (n - 1)) as f64)
}

/// Unique tokens over total tokens, across all texts.
pub fn ttr<S: AsRef<str>>(texts: &[S]) -> Result<f64> {
    let mut total = 0usize;
    let mut seen = std::collections::HashSet::new();
    for t in texts {
        for tok in tokenize(t.as_ref()) {
            total += 1;
            seen.insert(tok);
        }
    }
    if total == 0 {
        return Err(Error::EmptyCorpus);
    }
    Ok(seen.len() as f64 / total as f64)
}

/// Per-record entity overlap; `None` when the source has no entities.
pub fn entity_overlaps(detector: &Detector, pairs: &[(&str, &str)]) -> Vec<Option<f64>> {
    pairs
        .iter()
        .map(|(x, y)| {
            let ex = detector.entity_set(x);
            if ex.is_empty() {
                None
            } else {
                Some(entity_overlap(&ex, &detector.entity_set(y)))
            }
        })
        .collect()
}

/// Mean entity overlap over pairs whose source has entities.
pub fn entity_match(detector: &Detector, pairs: &[(&str, &str)]) -> Result<f64> {
    mean_defined(&entity_overlaps(detector, pairs)).ok_or(Error::AllPairsEmpty)
}

fn mean_defined(v: &[Option<f64>]) -> Option<f64> {
    let vals: Vec<f64> = v.iter().flatten().copied().collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Whether rewrite `i`'s top-1 cosine neighbour among `originals` is
/// `originals[i]`. A tie for the maximum counts as a miss; a rewrite without
/// an embedding (`None`) misses.
pub fn pei_hits(originals: &[UnitVector], rewrites: &[Option<UnitVector>]) -> Result<Vec<bool>> {
    if originals.len() != rewrites.len() {
        return Err(Error::InvalidInput("originals and rewrites differ in length".into()));
    }
    if originals.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            actual: originals.len(),
        });
    }
    rewrites
        .iter()
        .enumerate()
        .map(|(i, y)| {
            let Some(y) = y else { return Ok(false) };
            let own = y.cosine(&originals[i])?;
            for (j, x) in originals.iter().enumerate() {
                if j != i && y.cosine(x)? >= own {
                    return Ok(false);
                }
            }
            Ok(true)
        })
        .collect()
}

pub fn pei(originals: &[UnitVector], rewrites: &[Option<UnitVector>]) -> Result<f64> {
    let hits = pei_hits(originals, rewrites)?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64)
}

/// `max(0, max_o cos(y, o))` for each rewrite; 0 when `outliers` is empty.
pub fn outlier_similarities(rewrites: &[UnitVector], outliers: &[UnitVector]) -> Result<Vec<f64>> {
    rewrites
        .iter()
        .map(|y| {
            let mut best = 0.0f64;
            for o in outliers {
                best = best.max(y.cosine(o)?);
            }
            Ok(best)
        })
        .collect()
}

pub fn outlier_similarity(rewrites: &[UnitVector], outliers: &[UnitVector]) -> Result<f64> {
    let v = outlier_similarities(rewrites, outliers)?;
    if v.is_empty() {
        return Ok(0.0);
    }
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

/// Stratified held-out split: per class, shuffle with the seed and hold out
/// `round(test_fraction * n_c)` items, clipped to `[1, n_c - 1]`.
pub fn stratified_split(labels: &[String], test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::InvalidParam("test_fraction must be in [0, 1)".into()));
    }
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        by_class.entry(l.as_str()).or_default().push(i);
    }
    if by_class.len() < 2 {
        return Err(Error::DegenerateLabels(format!("{} distinct label(s)", by_class.len())));
    }
    if let Some((l, v)) = by_class.iter().find(|(_, v)| v.len() < 2) {
        return Err(Error::DegenerateLabels(format!("label `{l}` has {} sample(s)", v.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for idx in by_class.values() {
        let mut idx = idx.clone();
        idx.shuffle(&mut rng);
        let k = ((test_fraction * idx.len() as f64).round() as usize).clamp(1, idx.len() - 1);
        test.extend_from_slice(&idx[..k]);
        train.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Macro-averaged F1 over `classes`; a class with no support and no
/// predictions contributes 0.
pub fn macro_f1(truth: &[&str], pred: &[&str], classes: &[&str]) -> f64 {
    let mut sum = 0.0;
    for c in classes {
        let tp = truth.iter().zip(pred).filter(|(t, p)| *t == c && *p == c).count() as f64;
        let fp = truth.iter().zip(pred).filter(|(t, p)| *t != c && *p == c).count() as f64;
        let fneg = truth.iter().zip(pred).filter(|(t, p)| *t == c && *p != c).count() as f64;
        let denom = 2.0 * tp + fp + fneg;
        sum += if denom == 0.0 { 0.0 } else { 2.0 * tp / denom };
    }
    sum / classes.len() as f64
}

/// Nearest-centroid attribute classifier over embeddings, scored by macro-F1
/// on a stratified held-out split. Ties between centroids are broken
/// uniformly at random (seeded), so a signal-free input scores at chance.
pub fn author_id_f1(embs: &[UnitVector], labels: &[String], test_fraction: f64, seed: u64) -> Result<f64> {
    if embs.len() != labels.len() {
        return Err(Error::InvalidInput("embeddings and labels differ in length".into()));
    }
    let (train, test) = stratified_split(labels, test_fraction, seed)?;
    let mut groups: BTreeMap<&str, Vec<&UnitVector>> = BTreeMap::new();
    for &i in &train {
        groups.entry(labels[i].as_str()).or_default().push(&embs[i]);
    }
    let mut centroids: Vec<(&str, Option<UnitVector>)> = Vec::new();
    for (label, vs) in groups {
        // opposite vectors can cancel; such a class simply never wins
        let c = match mean_pool(vs) {
            Ok(c) => Some(c),
            Err(Error::ZeroNorm) => None,
            Err(e) => return Err(e),
        };
        centroids.push((label, c));
    }
    let classes: Vec<&str> = centroids.iter().map(|(l, _)| *l).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut pred = Vec::with_capacity(test.len());
    for &i in &test {
        let mut best = f64::NEG_INFINITY;
        let mut tied: Vec<&str> = Vec::new();
        for (label, c) in &centroids {
            let s = match c {
                Some(c) => embs[i].cosine(c)?,
                None => f64::NEG_INFINITY,
            };
            if s > best {
                best = s;
                tied.clear();
                tied.push(label);
            } else if s == best {
                tied.push(label);
            }
        }
        pred.push(tied[rng.gen_range(0..tied.len())]);
    }
    let truth: Vec<&str> = test.iter().map(|&i| labels[i].as_str()).collect();
    Ok(macro_f1(&truth, &pred, &classes))
}

/// One evaluation record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPair {
    pub id: String,
    pub original: String,
    pub rewrite: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub author: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub labels: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    LowerIsBetter,
    HigherIsBetter,
    Ambiguous,
}

impl Direction {
    fn arrow(self) -> &'static str {
        match self {
            Direction::LowerIsBetter => "↓",
            Direction::HigherIsBetter => "↑",
            Direction::Ambiguous => "↑/↓",
        }
    }
}

pub const ALL_METRICS: [&str; 6] = [
    "entity_match",
    "pei",
    "author_id_f1",
    "outlier_similarity",
    "self_bleu",
    "ttr",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub name: String,
    pub direction: Direction,
    pub note: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    /// Same metric on the originals, where that comparison is meaningful.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordDetail {
    pub id: String,
    /// `None` when the source has no entities.
    pub entity_overlap: Option<f64>,
    pub pei_hit: Option<bool>,
    pub outlier_similarity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metrics: Vec<MetricValue>,
    pub records: Vec<RecordDetail>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Subset of [`ALL_METRICS`] (plus `label:<field>`); empty means all.
    pub metrics: Vec<String>,
    pub test_fraction: f64,
    pub seed: u64,
    /// Parameters for picking the reference outlier set among originals.
    pub outlier: OutlierParams,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            metrics: Vec::new(),
            test_fraction: 0.3,
            seed: 3407,
            outlier: OutlierParams::default(),
        }
    }
}

impl EvalConfig {
    fn wants(&self, name: &str) -> bool {
        self.metrics.is_empty() || self.metrics.iter().any(|m| m == name)
    }
}

fn metric(name: &str, direction: Direction, note: &str, r: Result<f64>) -> MetricValue {
    let (value, error) = match r {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e.to_string())),
    };
    MetricValue {
        name: name.to_string(),
        direction,
        note: note.to_string(),
        value,
        baseline: None,
        error,
    }
}

/// Computes every enabled metric. Individual metric failures are recorded
/// in the report rather than aborting it.
pub fn build_report(
    corpus: &[EvalPair],
    embedder: &Embedder,
    detector: &Detector,
    config: &EvalConfig,
) -> Result<MetricReport> {
    for name in &config.metrics {
        if !ALL_METRICS.contains(&name.as_str()) && !name.starts_with("label:") {
            return Err(Error::InvalidParam(format!("unknown metric `{name}`")));
        }
    }
    let originals: Vec<&str> = corpus.iter().map(|p| p.original.as_str()).collect();
    let rewrites: Vec<&str> = corpus.iter().map(|p| p.rewrite.as_str()).collect();
    let embed_all = |texts: &[&str], style: bool| -> Vec<Result<UnitVector>> {
        texts
            .par_iter()
            .map(|t| if style { embedder.embed_style(t) } else { embedder.embed_semantic(t) })
            .collect()
    };
    let orig_style = embed_all(&originals, true);
    let rew_style = embed_all(&rewrites, true);

    let mut records: Vec<RecordDetail> = corpus
        .iter()
        .map(|p| RecordDetail {
            id: p.id.clone(),
            entity_overlap: None,
            pei_hit: None,
            outlier_similarity: None,
        })
        .collect();
    let mut metrics = Vec::new();

    if config.wants("entity_match") {
        let pairs: Vec<(&str, &str)> = originals.iter().copied().zip(rewrites.iter().copied()).collect();
        let overlaps = entity_overlaps(detector, &pairs);
        for (r, o) in records.iter_mut().zip(&overlaps) {
            r.entity_overlap = *o;
        }
        metrics.push(metric(
            "entity_match",
            Direction::LowerIsBetter,
            "mean retained-entity fraction; sources without entities excluded",
            mean_defined(&overlaps).ok_or(Error::AllPairsEmpty),
        ));
    }

    if config.wants("pei") {
        let r = (|| {
            let xs = embed_all(&originals, false).into_iter().collect::<Result<Vec<_>>>()?;
            let ys: Vec<Option<UnitVector>> = embed_all(&rewrites, false).into_iter().map(Result::ok).collect();
            pei_hits(&xs, &ys)
        })();
        let r = r.map(|hits| {
            for (rec, h) in records.iter_mut().zip(&hits) {
                rec.pei_hit = Some(*h);
            }
            hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64
        });
        metrics.push(metric(
            "pei",
            Direction::LowerIsBetter,
            "top-1 cosine retrieval of the source; ties count as misses",
            r,
        ));
    }

    let label_metric = |name: &str, labels: Option<Vec<String>>, note: &str| -> MetricValue {
        let r = (|| {
            let labels = labels.ok_or_else(|| Error::DegenerateLabels("missing labels".into()))?;
            let after: Vec<UnitVector> = rew_style.iter().map(clone_ok).collect::<Result<_>>()?;
            let before: Vec<UnitVector> = orig_style.iter().map(clone_ok).collect::<Result<_>>()?;
            Ok((
                author_id_f1(&after, &labels, config.test_fraction, config.seed)?,
                author_id_f1(&before, &labels, config.test_fraction, config.seed)?,
            ))
        })();
        let mut m = metric(name, Direction::LowerIsBetter, note, r.as_ref().map(|v| v.0).map_err(clone_err));
        m.baseline = r.ok().map(|v| v.1);
        m
    };

    if config.wants("author_id_f1") {
        let labels: Option<Vec<String>> = corpus.iter().map(|p| p.author.clone()).collect();
        metrics.push(label_metric(
            "author_id_f1",
            labels,
            "proxy: nearest-centroid over style embeddings, macro-F1",
        ));
    }
    for name in config.metrics.iter().filter(|m| m.starts_with("label:")) {
        let field = &name["label:".len()..];
        let labels: Option<Vec<String>> = corpus.iter().map(|p| p.labels.get(field).cloned()).collect();
        metrics.push(label_metric(name, labels, "proxy: nearest-centroid over style embeddings, macro-F1"));
    }

    if config.wants("outlier_similarity") {
        let r = (|| {
            let xs: Vec<UnitVector> = orig_style.iter().map(clone_ok).collect::<Result<_>>()?;
            let rep = detect_outliers(&xs, config.outlier)?;
            let outliers: Vec<UnitVector> = rep.outlier_indices().into_iter().map(|i| xs[i].clone()).collect();
            let ys: Vec<UnitVector> = rew_style.iter().map(clone_ok).collect::<Result<_>>()?;
            outlier_similarities(&ys, &outliers)
        })();
        let r = r.map(|sims| {
            for (rec, s) in records.iter_mut().zip(&sims) {
                rec.outlier_similarity = Some(*s);
            }
            if sims.is_empty() {
                0.0
            } else {
                sims.iter().sum::<f64>() / sims.len() as f64
            }
        });
        metrics.push(metric(
            "outlier_similarity",
            Direction::LowerIsBetter,
            "mean max-cosine to originals flagged as style outliers",
            r,
        ));
    }

    if config.wants("self_bleu") {
        let mut m = metric(
            "self_bleu",
            Direction::Ambiguous,
            "lower = less n-gram overlap; also reported as a diversity score where higher is preferred",
            self_bleu(&rewrites),
        );
        m.baseline = self_bleu(&originals).ok();
        metrics.push(m);
    }

    if config.wants("ttr") {
        let mut m = metric("ttr", Direction::HigherIsBetter, "type-token ratio", ttr(&rewrites));
        m.baseline = ttr(&originals).ok();
        metrics.push(m);
    }

    Ok(MetricReport { metrics, records })
}

fn clone_ok(r: &Result<UnitVector>) -> Result<UnitVector> {
    match r {
        Ok(v) => Ok(v.clone()),
        Err(e) => Err(clone_err(e)),
    }
}

fn clone_err(e: &Error) -> Error {
    Error::InvalidInput(e.to_string())
}

impl MetricReport {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|m| m.name == name).and_then(|m| m.value)
    }

    /// Human-readable table.
    pub fn render_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<20} {:>3} {:>10} {:>10}  note", "metric", "dir", "value", "original");
        for m in &self.metrics {
            let value = match (&m.value, &m.error) {
                (Some(v), _) => format!("{v:.4}"),
                (None, Some(_)) => "error".to_string(),
                _ => "-".to_string(),
            };
            let base = m.baseline.map_or("-".to_string(), |b| format!("{b:.4}"));
            let note = m.error.as_deref().unwrap_or(&m.note);
            let _ = writeln!(s, "{:<20} {:>3} {:>10} {:>10}  {}", m.name, m.direction.arrow(), value, base, note);
        }
        s
    }

    /// One JSON object per metric, then one per record.
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for m in &self.metrics {
            s.push_str(&serde_json::json!({"kind": "metric", "metric": m}).to_string());
            s.push('\n');
        }
        for r in &self.records {
            s.push_str(&serde_json::json!({"kind": "record", "record": r}).to_string());
            s.push('\n');
        }
        s
    }
}
