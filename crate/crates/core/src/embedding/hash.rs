use super::{mean_pool, tokenize, Role, UnitVector, VectorProvider};
use crate::error::{Error, Result};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over the concatenation of `parts`.
pub fn fnv1a64(parts: &[&[u8]]) -> u64 {
    let mut h = FNV_OFFSET;
    for part in parts {
        for &b in *part {
            h ^= u64::from(b);
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    h
}

/// Deterministic feature-hashing embedder.
///
/// * style: character 3-, 4- and 5-grams of the text padded with one space
///   on each side, counted into `d_style` buckets (`fnv1a64("s:" ++ gram) mod d_style`).
/// * token: the whole lowercase token (`"w:" ++ tok`) plus the character
///   trigrams of `"<" ++ tok ++ ">"` (`"g:" ++ gram`), counted into `d_sem`
///   buckets.
/// * semantic: normalised mean of the token vectors.
///
/// Every vector is L2-normalised. No state is shared between calls.
#[derive(Debug, Clone)]
pub struct HashProvider {
    d_style: usize,
    d_sem: usize,
}

impl HashProvider {
    pub fn new(d_style: usize, d_sem: usize) -> Result<Self> {
        if d_style == 0 || d_sem == 0 {
            return Err(Error::Config("embedding dimensions must be positive".into()));
        }
        Ok(Self { d_style, d_sem })
    }

    pub fn style_vector(&self, text: &str) -> Result<UnitVector> {
        // boundary spaces so very short texts still yield n-grams
        let chars: Vec<char> = std::iter::once(' ').chain(text.chars()).chain([' ']).collect();
        let mut counts = vec![0.0; self.d_style];
        let mut buf = String::new();
        for n in 3..=5 {
            for window in chars.windows(n) {
                buf.clear();
                buf.extend(window);
                let h = fnv1a64(&[b"s:", buf.as_bytes()]);
                counts[(h % self.d_style as u64) as usize] += 1.0;
            }
        }
        UnitVector::normalize(counts)
    }

    pub fn token_vector(&self, token: &str) -> Result<UnitVector> {
        let mut counts = vec![0.0; self.d_sem];
        let bucket = |h: u64| (h % self.d_sem as u64) as usize;
        counts[bucket(fnv1a64(&[b"w:", token.as_bytes()]))] += 1.0;
        let marked: Vec<char> = std::iter::once('<')
            .chain(token.chars())
            .chain(std::iter::once('>'))
            .collect();
        let mut buf = String::new();
        for window in marked.windows(3) {
            buf.clear();
            buf.extend(window);
            counts[bucket(fnv1a64(&[b"g:", buf.as_bytes()]))] += 1.0;
        }
        UnitVector::normalize(counts)
    }

    pub fn semantic_vector(&self, text: &str) -> Result<UnitVector> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(Error::EmptyText);
        }
        let vectors = tokens
            .iter()
            .map(|t| self.token_vector(t))
            .collect::<Result<Vec<_>>>()?;
        mean_pool(&vectors)
    }
}

impl VectorProvider for HashProvider {
    fn dim(&self, role: Role) -> usize {
        match role {
            Role::Style => self.d_style,
            Role::Semantic | Role::SemanticTokens => self.d_sem,
        }
    }

    fn embed(&self, role: Role, texts: &[&str]) -> Result<Vec<UnitVector>> {
        texts
            .iter()
            .map(|t| match role {
                Role::Style => self.style_vector(t),
                Role::Semantic => self.semantic_vector(t),
                Role::SemanticTokens => self.token_vector(t),
            })
            .collect()
    }
}
