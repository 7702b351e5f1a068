//! Candidate scoring and selection, preference pairs, group advantages, and
//! a small softmax policy for checking the policy-gradient and DPO maths.

mod backend;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompting::{parse_generation, ContextSignals, ParsedGeneration, PromptBundle};
use crate::reward::{RewardBreakdown, Scorer};
use crate::style_pool::StylePoolState;

pub use backend::{
    BackendKind, GenerationBackend, GenerationConfig, GenerationRequest, MockParaphraser, RemoteChat,
    RemoteChatConfig,
};

/// Reward given to a candidate whose scoring failed; below any legal composite.
pub const FAILED_REWARD: f64 = -2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub raw: String,
    pub parsed: ParsedGeneration,
    pub breakdown: Option<RewardBreakdown>,
    /// The composite, or [`FAILED_REWARD`].
    pub reward: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub prompt: PromptBundle,
    pub candidates: Vec<ScoredCandidate>,
}

/// Scores every raw generation against the same pool snapshot. Failures are
/// recorded on the candidate instead of aborting the set.
pub fn score_candidates(
    raws: Vec<String>,
    x: &str,
    signals: &ContextSignals,
    pool: &StylePoolState,
    scorer: &Scorer<'_>,
) -> Vec<ScoredCandidate> {
    raws.into_par_iter()
        .map(|raw| {
            let parsed = parse_generation(&raw);
            match scorer.score(x, &raw, signals, pool) {
                Ok(b) => ScoredCandidate {
                    reward: b.composite,
                    breakdown: Some(b),
                    parsed,
                    raw,
                    error: None,
                },
                Err(e) => ScoredCandidate {
                    reward: FAILED_REWARD,
                    breakdown: None,
                    parsed,
                    raw,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

/// Index of the highest reward; ties go to the lexicographically smallest
/// raw text, then the lowest index.
pub fn select_best(candidates: &[ScoredCandidate]) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in candidates.iter().enumerate() {
        best = match best {
            None => Some(i),
            Some(b) => {
                let cb = &candidates[b];
                if c.reward > cb.reward || (c.reward == cb.reward && c.raw < cb.raw) {
                    Some(i)
                } else {
                    Some(b)
                }
            }
        };
    }
    best.ok_or(Error::EmptySet)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub prompt: String,
    pub chosen: String,
    pub rejected: String,
    pub margin: f64,
}

/// Best candidate versus one drawn uniformly from those with strictly lower
/// reward; `None` when every reward is equal.
pub fn make_preference_pair<R: Rng + ?Sized>(
    set: &CandidateSet,
    rng: &mut R,
) -> Result<Option<PreferencePair>> {
    let best = select_best(&set.candidates)?;
    let top = set.candidates[best].reward;
    let lower: Vec<&ScoredCandidate> = set.candidates.iter().filter(|c| c.reward < top).collect();
    if lower.is_empty() {
        return Ok(None);
    }
    let rejected = lower[rng.gen_range(0..lower.len())];
    Ok(Some(PreferencePair {
        prompt: set.prompt.full.clone(),
        chosen: set.candidates[best].raw.clone(),
        rejected: rejected.raw.clone(),
        margin: top - rejected.reward,
    }))
}

/// `(R_i - mean) / (std + eps)` with the population standard deviation.
pub fn group_advantages(rewards: &[f64], eps: f64) -> Result<Vec<f64>> {
    if rewards.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            actual: rewards.len(),
        });
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidParam("eps must be positive".into()));
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let denom = var.sqrt() + eps;
    Ok(rewards.iter().map(|r| (r - mean) / denom).collect())
}

/// Softmax policy over a fixed set of `K` outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyPolicy {
    pub logits: Vec<f64>,
    pub learning_rate: f64,
}

/// Monte-Carlo gradient estimate with per-coordinate standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub mean: Vec<f64>,
    pub std_err: Vec<f64>,
}

impl ToyPolicy {
    pub fn new(logits: Vec<f64>, learning_rate: f64) -> Result<Self> {
        if logits.is_empty() {
            return Err(Error::InvalidParam("policy needs at least one output".into()));
        }
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { logits, learning_rate })
    }

    pub fn probs(&self) -> Vec<f64> {
        softmax(&self.logits)
    }

    /// `J = sum_i pi_i R_i`.
    pub fn objective(&self, rewards: &[f64]) -> f64 {
        self.probs().iter().zip(rewards).map(|(p, r)| p * r).sum()
    }

    /// `dJ/dtheta_j = pi_j (R_j - J)`.
    pub fn analytic_gradient(&self, rewards: &[f64]) -> Vec<f64> {
        let p = self.probs();
        let j: f64 = p.iter().zip(rewards).map(|(p, r)| p * r).sum();
        p.iter().zip(rewards).map(|(p, r)| p * (r - j)).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let p = self.probs();
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, pi) in p.iter().enumerate() {
            acc += pi;
            if u < acc {
                return i;
            }
        }
        p.len() - 1
    }

    /// Likelihood-ratio estimate `(1/N) sum R(y) grad log pi(y)` with
    /// `grad_j log pi(y) = 1[j = y] - pi_j`.
    pub fn reinforce_estimate<R: Rng + ?Sized>(
        &self,
        rewards: &[f64],
        samples: usize,
        rng: &mut R,
    ) -> Result<GradientEstimate> {
        if rewards.len() != self.logits.len() {
            return Err(Error::DimensionMismatch {
                expected: self.logits.len(),
                actual: rewards.len(),
            });
        }
        if samples < 2 {
            return Err(Error::TooFewSamples {
                needed: 2,
                actual: samples,
            });
        }
        let p = self.probs();
        let k = p.len();
        let mut sum = vec![0.0; k];
        let mut sum_sq = vec![0.0; k];
        for _ in 0..samples {
            let y = self.sample(rng);
            for j in 0..k {
                let g = rewards[y] * (f64::from(u8::from(j == y)) - p[j]);
                sum[j] += g;
                sum_sq[j] += g * g;
            }
        }
        let n = samples as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std_err = (0..k)
            .map(|j| {
                let var = (sum_sq[j] / n - mean[j] * mean[j]).max(0.0) * n / (n - 1.0);
                (var / n).sqrt()
            })
            .collect();
        Ok(GradientEstimate { mean, std_err })
    }

    /// One ascent step along a sampled gradient estimate.
    pub fn reinforce_step<R: Rng + ?Sized>(
        &mut self,
        rewards: &[f64],
        samples: usize,
        rng: &mut R,
    ) -> Result<GradientEstimate> {
        let est = self.reinforce_estimate(rewards, samples, rng)?;
        for (t, g) in self.logits.iter_mut().zip(&est.mean) {
            *t += self.learning_rate * g;
        }
        Ok(est)
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// `-ln sigma(beta * delta)` with
/// `delta = (lp_c - lp_r) - (ref_c - ref_r)`. Pass zeros for the reference
/// terms to use the policy-only margin.
pub fn dpo_loss(lp_chosen: f64, lp_rejected: f64, ref_chosen: f64, ref_rejected: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::InvalidParam("beta must be positive".into()));
    }
    let delta = (lp_chosen - lp_rejected) - (ref_chosen - ref_rejected);
    if delta.is_nan() {
        return Err(Error::NonFinite);
    }
    Ok(softplus(-beta * delta))
}
