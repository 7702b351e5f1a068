//! Style and semantic vector representations of text.
//!
//! Every vector handed out by this module is L2-normalised. Providers are
//! pluggable per role through [`VectorProvider`]; the default
//! [`HashProvider`] is a deterministic character n-gram feature hasher so the
//! rest of the engine runs offline.

mod hash;
mod remote;
mod table;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use hash::{fnv1a64, HashProvider};
pub use remote::{RemoteProvider, RemoteProviderConfig};
pub use table::{load_embedding_table, text_fingerprint, write_embedding_table, TableProvider};

/// Which representation a provider is asked for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Style,
    Semantic,
    SemanticTokens,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Style => "style",
            Role::Semantic => "semantic",
            Role::SemanticTokens => "semantic-tokens",
        }
    }
}

/// A finite, unit-norm real vector.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitVector(Vec<f64>);

pub type StyleVector = UnitVector;
pub type SemanticVector = UnitVector;

impl UnitVector {
    /// Normalises `values` to unit L2 norm.
    pub fn normalize(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("empty vector".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let norm = l2_norm(&values);
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroNorm);
        }
        for v in &mut values {
            *v /= norm;
        }
        Ok(Self(values))
    }

    /// Wraps values that are already unit-norm (within 1e-6) without rescaling.
    /// Used when reloading snapshots so stored bits survive a round trip.
    pub fn from_normalized(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("empty vector".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let norm = l2_norm(&values);
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidInput(format!("vector norm {norm} is not 1")));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn cosine(&self, other: &UnitVector) -> Result<f64> {
        cosine(&self.0, &other.0)
    }

    /// `1 - cos`, clamped to `[0, 2]`. Panics on dimension mismatch, which
    /// callers rule out by construction (one pool, one dimension).
    pub fn distance(&self, other: &UnitVector) -> f64 {
        let c = cosine(&self.0, &other.0).expect("vectors in one space share a dimension");
        (1.0 - c).clamp(0.0, 2.0)
    }
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cosine similarity, clamped to `[-1, 1]`.
///
/// Bitwise-equal inputs return exactly 1.0 so duplicated embeddings have a
/// distance of exactly zero.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            actual: v.len(),
        });
    }
    let nu = l2_norm(u);
    let nv = l2_norm(v);
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroNorm);
    }
    if u == v {
        return Ok(1.0);
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Splits on Unicode whitespace, strips leading and trailing non-alphanumeric
/// characters and lowercases. Empty pieces are dropped.
///
/// This is the single tokenisation used for token counts, BLEU, TTR and
/// token embeddings.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Ordered token embeddings of one text.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEmbeddingSequence {
    pub tokens: Vec<(String, SemanticVector)>,
}

impl TokenEmbeddingSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn vectors(&self) -> impl Iterator<Item = &SemanticVector> {
        self.tokens.iter().map(|(_, v)| v)
    }
}

/// A source of unit vectors for one or more roles.
///
/// For [`Role::SemanticTokens`] the inputs are individual tokens produced by
/// [`tokenize`]; for the other roles they are whole texts.
pub trait VectorProvider: Send + Sync {
    fn dim(&self, role: Role) -> usize;

    fn embed(&self, role: Role, texts: &[&str]) -> Result<Vec<UnitVector>>;
}

/// Provider selection for one role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProviderKind {
    DeterministicHash,
    FileBacked { path: String },
    RemoteService(RemoteProviderConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingProviderConfig {
    pub d_style: usize,
    pub d_sem: usize,
    pub style: ProviderKind,
    pub semantic: ProviderKind,
}

impl Default for EmbeddingProviderConfig {
    fn default() -> Self {
        Self {
            d_style: 256,
            d_sem: 256,
            style: ProviderKind::DeterministicHash,
            semantic: ProviderKind::DeterministicHash,
        }
    }
}

impl EmbeddingProviderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_style == 0 || self.d_sem == 0 {
            return Err(Error::Config("embedding dimensions must be positive".into()));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Embedder> {
        self.validate()?;
        let style = build_provider(&self.style, self.d_style, self.d_sem)?;
        let semantic = if self.semantic == self.style {
            Arc::clone(&style)
        } else {
            build_provider(&self.semantic, self.d_style, self.d_sem)?
        };
        Embedder::new(style, semantic)
    }
}

fn build_provider(kind: &ProviderKind, d_style: usize, d_sem: usize) -> Result<Arc<dyn VectorProvider>> {
    Ok(match kind {
        ProviderKind::DeterministicHash => Arc::new(HashProvider::new(d_style, d_sem)?),
        ProviderKind::FileBacked { path } => Arc::new(TableProvider::open(path, d_style, d_sem)?),
        ProviderKind::RemoteService(cfg) => Arc::new(RemoteProvider::new(cfg.clone(), d_style, d_sem)?),
    })
}

/// Facade routing style requests to one provider and semantic requests to
/// another. Cheap to clone and safe to share across threads.
#[derive(Clone)]
pub struct Embedder {
    style: Arc<dyn VectorProvider>,
    semantic: Arc<dyn VectorProvider>,
}

impl std::fmt::Debug for Embedder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Embedder")
            .field("d_style", &self.style_dim())
            .field("d_sem", &self.semantic_dim())
            .finish()
    }
}

impl Embedder {
    pub fn new(style: Arc<dyn VectorProvider>, semantic: Arc<dyn VectorProvider>) -> Result<Self> {
        if style.dim(Role::Style) == 0 || semantic.dim(Role::Semantic) == 0 {
            return Err(Error::Config("embedding dimensions must be positive".into()));
        }
        Ok(Self { style, semantic })
    }

    /// Default offline embedder (hash provider, 256/256).
    pub fn hashed() -> Self {
        EmbeddingProviderConfig::default()
            .build()
            .expect("default hash config is valid")
    }

    pub fn style_dim(&self) -> usize {
        self.style.dim(Role::Style)
    }

    pub fn semantic_dim(&self) -> usize {
        self.semantic.dim(Role::Semantic)
    }

    pub fn embed_style(&self, text: &str) -> Result<StyleVector> {
        let text = nonempty(text)?;
        one(self.style.embed(Role::Style, &[text])?, self.style_dim())
    }

    pub fn embed_semantic(&self, text: &str) -> Result<SemanticVector> {
        let text = nonempty(text)?;
        one(self.semantic.embed(Role::Semantic, &[text])?, self.semantic_dim())
    }

    pub fn embed_semantic_tokens(&self, text: &str) -> Result<TokenEmbeddingSequence> {
        nonempty(text)?;
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(Error::EmptyText);
        }
        let refs: Vec<&str> = tokens.iter().map(String::as_str).collect();
        let vectors = self.semantic.embed(Role::SemanticTokens, &refs)?;
        if vectors.len() != tokens.len() {
            return Err(Error::InvalidInput(format!(
                "provider returned {} token vectors for {} tokens",
                vectors.len(),
                tokens.len()
            )));
        }
        let dim = self.semantic_dim();
        for v in &vectors {
            check_dim(v, dim)?;
        }
        Ok(TokenEmbeddingSequence {
            tokens: tokens.into_iter().zip(vectors).collect(),
        })
    }
}

fn nonempty(text: &str) -> Result<&str> {
    let t = text.trim();
    if t.is_empty() {
        Err(Error::EmptyText)
    } else {
        Ok(t)
    }
}

fn check_dim(v: &UnitVector, dim: usize) -> Result<()> {
    if v.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: v.dim(),
        });
    }
    Ok(())
}

fn one(mut vs: Vec<UnitVector>, dim: usize) -> Result<UnitVector> {
    if vs.len() != 1 {
        return Err(Error::InvalidInput(format!("expected one vector, got {}", vs.len())));
    }
    let v = vs.pop().expect("length checked");
    check_dim(&v, dim)?;
    Ok(v)
}

/// L2-normalised mean of token vectors.
pub fn mean_pool<'a>(vectors: impl IntoIterator<Item = &'a UnitVector>) -> Result<UnitVector> {
    let mut acc: Option<Vec<f64>> = None;
    for v in vectors {
        let a = acc.get_or_insert_with(|| vec![0.0; v.dim()]);
        if a.len() != v.dim() {
            return Err(Error::DimensionMismatch {
                expected: a.len(),
                actual: v.dim(),
            });
        }
        for (x, y) in a.iter_mut().zip(v.as_slice()) {
            *x += y;
        }
    }
    UnitVector::normalize(acc.ok_or(Error::EmptyText)?)
}
