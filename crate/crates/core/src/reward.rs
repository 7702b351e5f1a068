//! The five reward components and their weighted composite.

use serde::{Deserialize, Serialize};

use crate::embedding::{tokenize, Embedder, StyleVector};
use crate::error::{Error, Result};
use crate::metrics::bleu4_tokens;
use crate::pii::Detector;
use crate::prompting::{parse_generation, strip_delimiters, well_formed_blocks, ContextSignals};
use crate::style_pool::StylePoolState;

/// Component weights `(semantic, length, format, entity, mst)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub semantic: f64,
    pub length: f64,
    pub format: f64,
    pub entity: f64,
    pub mst: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            semantic: 0.35,
            length: 0.10,
            format: 0.10,
            entity: 0.25,
            mst: 0.20,
        }
    }
}

impl RewardWeights {
    pub fn new(w: [f64; 5]) -> Result<Self> {
        let w = Self {
            semantic: w[0],
            length: w[1],
            format: w[2],
            entity: w[3],
            mst: w[4],
        };
        w.validate()?;
        Ok(w)
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.semantic, self.length, self.format, self.entity, self.mst]
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.as_array();
        let sum: f64 = a.iter().sum();
        if a.iter().any(|w| !w.is_finite() || *w < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::WeightsNotNormalized(sum));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardParams {
    pub weights: RewardWeights,
    /// Width of the length penalty.
    pub alpha: f64,
    /// Style term weight in the privacy-utility diagnostic.
    pub gamma: f64,
    /// Smoothing constant of the entity penalty.
    pub entity_eps: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            weights: RewardWeights::default(),
            alpha: 1.0,
            gamma: 0.5,
            entity_eps: 1.0,
        }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidParam("alpha must be positive".into()));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidParam("gamma must be >= 0".into()));
        }
        if !(self.entity_eps > 0.0) || !self.entity_eps.is_finite() {
            return Err(Error::InvalidParam("entity_eps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MstRewardInputs {
    pub s_avg: f64,
    pub s_close: f64,
    pub d_sty: f64,
    pub d_bleu: f64,
    pub outlier: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_sem: f64,
    pub r_len: f64,
    pub r_fmt: f64,
    pub r_ent: f64,
    pub r_mst: f64,
    pub composite: f64,
    pub outlier_branch_used: bool,
    pub mst_inputs: MstRewardInputs,
}

impl RewardBreakdown {
    pub fn components(&self) -> [f64; 5] {
        [self.r_sem, self.r_len, self.r_fmt, self.r_ent, self.r_mst]
    }
}

/// Greedy token-matching F1 (BERTScore-style) over semantic token vectors.
pub fn semantic_fidelity(embedder: &Embedder, x: &str, y: &str) -> Result<f64> {
    let tx = embedder.embed_semantic_tokens(x)?;
    let ty = embedder.embed_semantic_tokens(y)?;
    let xs: Vec<_> = tx.vectors().collect();
    let ys: Vec<_> = ty.vectors().collect();
    greedy_f1(&xs, &ys)
}

/// `P` = mean over `y` of the best clamped cosine into `x`; `R` symmetric.
pub fn greedy_f1(x: &[&StyleVector], y: &[&StyleVector]) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptyText);
    }
    let best = |a: &StyleVector, pool: &[&StyleVector]| -> Result<f64> {
        let mut m = 0.0f64;
        for b in pool {
            m = m.max(a.cosine(b)?);
        }
        Ok(m.min(1.0))
    };
    let mut p = 0.0;
    for a in y {
        p += best(a, x)?;
    }
    p /= y.len() as f64;
    let mut r = 0.0;
    for a in x {
        r += best(a, y)?;
    }
    r /= x.len() as f64;
    if p + r == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * p * r / (p + r))
}

/// `exp(-alpha * ((ny - nx) / nx)^2)` on token counts.
pub fn length_reward_counts(nx: usize, ny: usize, alpha: f64) -> Result<f64> {
    if nx == 0 {
        return Err(Error::EmptySource);
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidParam("alpha must be positive".into()));
    }
    let rel = (ny as f64 - nx as f64) / nx as f64;
    Ok((-alpha * rel * rel).exp())
}

pub fn length_reward(x: &str, y: &str, alpha: f64) -> Result<f64> {
    length_reward_counts(tokenize(x).len(), tokenize(y).len(), alpha)
}

/// `+1` for a single well-ordered reasoning block followed by a single
/// non-empty solution block, `-1` otherwise.
pub fn format_reward(raw: &str) -> f64 {
    if well_formed_blocks(raw).is_some() {
        1.0
    } else {
        -1.0
    }
}

/// Outlier inputs are pulled towards dense regions; typical inputs are
/// rewarded for spread.
pub fn mst_reward(inp: &MstRewardInputs) -> Result<f64> {
    for (name, v) in [
        ("s_avg", inp.s_avg),
        ("s_close", inp.s_close),
        ("d_sty", inp.d_sty),
        ("d_bleu", inp.d_bleu),
    ] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidInput(format!("{name} = {v} outside [0, 1]")));
        }
    }
    Ok(if inp.outlier {
        ((inp.s_avg + inp.s_close) - (inp.d_sty + inp.d_bleu)) / 2.0
    } else {
        ((1.0 - inp.s_avg) + (inp.d_sty + inp.d_bleu)) / 3.0
    })
}

/// `(d_sty, d_bleu)` against the recent-output ring; `(1, 1)` when empty.
pub fn novelty_signals(y: &str, y_style: &StyleVector, pool: &StylePoolState) -> Result<(f64, f64)> {
    if pool.ring().len() == 0 {
        return Ok((1.0, 1.0));
    }
    let ty = tokenize(y);
    let mut max_cos = 0.0f64;
    let mut max_bleu = 0.0f64;
    for e in pool.ring() {
        max_cos = max_cos.max(y_style.cosine(&e.emb)?);
        max_bleu = max_bleu.max(bleu4_tokens(&ty, &tokenize(&e.sentence)));
    }
    Ok((1.0 - max_cos.clamp(0.0, 1.0), 1.0 - max_bleu.clamp(0.0, 1.0)))
}

pub fn composite(components: [f64; 5], weights: &RewardWeights) -> Result<f64> {
    weights.validate()?;
    Ok(components.iter().zip(weights.as_array()).map(|(c, w)| c * w).sum())
}

/// `||f_sem(x) - f_sem(y)|| - gamma * ||f_style(x) - f_style(y)||`.
pub fn privacy_utility_loss(embedder: &Embedder, x: &str, y: &str, gamma: f64) -> Result<f64> {
    if !(gamma >= 0.0) {
        return Err(Error::InvalidParam("gamma must be >= 0".into()));
    }
    let l2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    let sem = l2(embedder.embed_semantic(x)?.as_slice(), embedder.embed_semantic(y)?.as_slice());
    let sty = l2(embedder.embed_style(x)?.as_slice(), embedder.embed_style(y)?.as_slice());
    Ok(sem - gamma * sty)
}

/// Bundles what is needed to score a raw generation against one pool
/// snapshot.
#[derive(Debug, Clone)]
pub struct Scorer<'a> {
    pub embedder: &'a Embedder,
    pub detector: &'a Detector,
    pub params: RewardParams,
}

impl Scorer<'_> {
    /// Text scored for a raw generation: the solution block when well
    /// formed, otherwise the raw text with delimiters removed.
    pub fn scored_text(raw: &str) -> String {
        let parsed = parse_generation(raw);
        if parsed.well_formed {
            parsed.rewrite
        } else {
            strip_delimiters(raw)
        }
    }

    pub fn score(
        &self,
        x: &str,
        raw: &str,
        signals: &ContextSignals,
        pool: &StylePoolState,
    ) -> Result<RewardBreakdown> {
        let y = Self::scored_text(raw);
        let r_fmt = format_reward(raw);
        let r_sem = semantic_fidelity(self.embedder, x, &y)?;
        let r_len = length_reward(x, &y, self.params.alpha)?;
        let r_ent = self.detector.entity_reward(x, &y, self.params.entity_eps)?;

        let y_style = self.embedder.embed_style(&y)?;
        let (s_avg, s_close) = if pool.is_empty() {
            (0.0, 0.0)
        } else {
            (
                pool.global_deviation(&y_style)?,
                pool.local_density(&y_style, pool.params().m)?,
            )
        };
        let (d_sty, d_bleu) = novelty_signals(&y, &y_style, pool)?;
        let mst_inputs = MstRewardInputs {
            s_avg,
            s_close,
            d_sty,
            d_bleu,
            outlier: signals.is_outlier,
        };
        let r_mst = mst_reward(&mst_inputs)?;
        let components = [r_sem, r_len, r_fmt, r_ent, r_mst];
        Ok(RewardBreakdown {
            r_sem,
            r_len,
            r_fmt,
            r_ent,
            r_mst,
            composite: composite(components, &self.params.weights)?,
            outlier_branch_used: signals.is_outlier,
            mst_inputs,
        })
    }
}
