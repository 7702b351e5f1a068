//! The style context pool.
//!
//! Accepted outputs are organised into a streaming spanning tree over style
//! embeddings (STYLE-MST). Each insert either opens a new branch off the
//! most similar node or merges into it, depending on how the new distance
//! compares with that node's nearest-neighbour distance (`min_dist`). The
//! pool also carries batch outlier statistics and a ring of recent outputs
//! for the lexical-novelty signal.

mod outlier;
mod snapshot;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::embedding::{StyleVector, UnitVector};
use crate::error::{Error, Result};

pub use outlier::{detect_outliers, OutlierParams, OutlierReport, FIRST_PASS_SENTINEL};
pub use snapshot::{load_state, save_state, SNAPSHOT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoolParams {
    pub outlier: OutlierParams,
    /// Neighbourhood size for the local-density signal.
    pub m: usize,
    /// Capacity of the recent-output ring.
    pub ring_capacity: usize,
    /// Branch threshold used while a node has no neighbour yet (its
    /// `min_dist` is `+inf`). `0.0` lets any distinct second sentence open a
    /// branch; `+inf` reproduces a literal "compare against +inf" reading in
    /// which a lone root absorbs everything.
    pub lone_node_threshold: f64,
}

impl Default for PoolParams {
    fn default() -> Self {
        Self {
            outlier: OutlierParams::default(),
            m: 5,
            ring_capacity: 64,
            lone_node_threshold: 0.0,
        }
    }
}

impl PoolParams {
    pub fn validate(&self) -> Result<()> {
        self.outlier.validate()?;
        if self.m < 1 {
            return Err(Error::InvalidParam("m must be at least 1".into()));
        }
        if self.lone_node_threshold.is_nan() || self.lone_node_threshold < 0.0 {
            return Err(Error::InvalidParam("lone_node_threshold must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MstNode {
    pub id: usize,
    pub sentence: String,
    pub emb: StyleVector,
    /// Number of inserts absorbed by this node (itself included).
    pub weight: u64,
    pub parent: Option<usize>,
    /// Distance to the nearest other node; `+inf` while alone.
    pub min_dist: f64,
    /// `1 - cos` to the parent; `None` for the root.
    pub edge_weight: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutlierStats {
    pub mu: f64,
    pub sigma: f64,
    pub tau: f64,
    pub lambda: f64,
}

impl OutlierStats {
    fn zero(lambda: f64) -> Self {
        Self {
            mu: 0.0,
            sigma: 0.0,
            tau: 0.0,
            lambda,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RingEntry {
    pub sentence: String,
    pub emb: StyleVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum InsertOutcome {
    NewBranch { id: usize, parent: Option<usize> },
    Merged { into: usize },
}

/// `(flag, mean distance, threshold)` for a single query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutlierVerdict {
    pub is_outlier: bool,
    pub avg_distance: f64,
    pub tau: f64,
}

/// The persistent pool. Reads take `&self`; a clone is an immutable
/// snapshot unaffected by later inserts.
#[derive(Debug, Clone, PartialEq)]
pub struct StylePoolState {
    dim: usize,
    params: PoolParams,
    nodes: Vec<MstNode>,
    stats: OutlierStats,
    ring: VecDeque<RingEntry>,
    pending_refresh: usize,
}

impl StylePoolState {
    pub fn new(dim: usize, params: PoolParams) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParam("pool dimension must be positive".into()));
        }
        params.validate()?;
        Ok(Self {
            dim,
            params,
            nodes: Vec::new(),
            stats: OutlierStats::zero(params.outlier.lambda),
            ring: VecDeque::new(),
            pending_refresh: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &PoolParams {
        &self.params
    }

    pub fn nodes(&self) -> &[MstNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn stats(&self) -> OutlierStats {
        self.stats
    }

    pub fn ring(&self) -> impl ExactSizeIterator<Item = &RingEntry> {
        self.ring.iter()
    }

    /// Inserts since the last statistics refresh.
    pub fn pending_refresh(&self) -> usize {
        self.pending_refresh
    }

    /// Sum of node weights, i.e. the number of inserts absorbed.
    pub fn total_weight(&self) -> u64 {
        self.nodes.iter().map(|n| n.weight).sum()
    }

    /// Tree edges as `(child, parent, weight)`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.nodes
            .iter()
            .filter_map(|n| Some((n.id, n.parent?, n.edge_weight?)))
    }

    fn check_dim(&self, emb: &UnitVector) -> Result<()> {
        if emb.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: emb.dim(),
            });
        }
        Ok(())
    }

    /// Index of the most similar node and its similarity; ties go to the
    /// lowest id.
    fn argmax_similarity(&self, emb: &UnitVector) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for node in &self.nodes {
            let sim = emb.cosine(&node.emb).expect("dimension checked");
            if best.map_or(true, |(_, s)| sim > s) {
                best = Some((node.id, sim));
            }
        }
        best
    }

    /// One STYLE-MST insert step.
    pub fn mst_insert(&mut self, sentence: &str, emb: StyleVector) -> Result<InsertOutcome> {
        self.check_dim(&emb)?;
        self.pending_refresh += 1;
        let Some((star, sim)) = self.argmax_similarity(&emb) else {
            self.nodes.push(MstNode {
                id: 0,
                sentence: sentence.to_string(),
                emb,
                weight: 1,
                parent: None,
                min_dist: f64::INFINITY,
                edge_weight: None,
            });
            return Ok(InsertOutcome::NewBranch { id: 0, parent: None });
        };

        let d_star = (1.0 - sim).clamp(0.0, 2.0);
        let threshold = if self.nodes[star].min_dist.is_finite() {
            self.nodes[star].min_dist
        } else {
            self.params.lone_node_threshold
        };
        if d_star > threshold {
            let id = self.nodes.len();
            let mut own_min = f64::INFINITY;
            for node in &mut self.nodes {
                let d = emb.distance(&node.emb);
                node.min_dist = node.min_dist.min(d);
                own_min = own_min.min(d);
            }
            self.nodes.push(MstNode {
                id,
                sentence: sentence.to_string(),
                emb,
                weight: 1,
                parent: Some(star),
                min_dist: own_min,
                edge_weight: Some(d_star),
            });
            Ok(InsertOutcome::NewBranch { id, parent: Some(star) })
        } else {
            // The representative embedding stays the first-seen one, so no
            // distance changes and min_dist is untouched.
            self.nodes[star].weight += 1;
            Ok(InsertOutcome::Merged { into: star })
        }
    }

    /// Pushes an accepted output onto the recent ring, evicting the oldest.
    pub fn remember(&mut self, sentence: &str, emb: StyleVector) -> Result<()> {
        self.check_dim(&emb)?;
        if self.params.ring_capacity == 0 {
            return Ok(());
        }
        while self.ring.len() >= self.params.ring_capacity {
            self.ring.pop_front();
        }
        self.ring.push_back(RingEntry {
            sentence: sentence.to_string(),
            emb,
        });
        Ok(())
    }

    /// Recomputes `(mu, sigma, tau)` by running batch outlier detection over
    /// the node embeddings. Fewer than two nodes gives all zeros.
    pub fn refresh_stats(&mut self) -> Result<()> {
        self.pending_refresh = 0;
        let lambda = self.params.outlier.lambda;
        if self.nodes.len() < 2 {
            self.stats = OutlierStats::zero(lambda);
            return Ok(());
        }
        let embs: Vec<UnitVector> = self.nodes.iter().map(|n| n.emb.clone()).collect();
        let rep = detect_outliers(&embs, self.params.outlier)?;
        self.stats = OutlierStats {
            mu: rep.mu,
            sigma: rep.sigma,
            tau: rep.tau,
            lambda,
        };
        Ok(())
    }

    /// Overrides the stored statistics; `tau` is derived as `mu + lambda * sigma`.
    pub fn set_stats(&mut self, mu: f64, sigma: f64) {
        let lambda = self.params.outlier.lambda;
        self.stats = OutlierStats {
            mu,
            sigma,
            tau: mu + lambda * sigma,
            lambda,
        };
    }

    /// Mean `1 - cos` to every node, compared strictly against `tau`.
    pub fn is_outlier(&self, emb: &StyleVector) -> Result<OutlierVerdict> {
        self.check_dim(emb)?;
        if self.nodes.is_empty() {
            return Err(Error::EmptyPool);
        }
        let sum: f64 = self.nodes.iter().map(|n| emb.distance(&n.emb)).sum();
        let avg = sum / self.nodes.len() as f64;
        Ok(OutlierVerdict {
            is_outlier: avg > self.stats.tau,
            avg_distance: avg,
            tau: self.stats.tau,
        })
    }

    /// Stored sentence most similar to `emb`, lowest id on ties.
    pub fn nearest_style_neighbor(&self, emb: &StyleVector) -> Result<(&MstNode, f64)> {
        self.check_dim(emb)?;
        let (id, sim) = self.argmax_similarity(emb).ok_or(Error::EmptyPool)?;
        Ok((&self.nodes[id], sim))
    }

    fn clamped_similarities(&self, emb: &StyleVector) -> Result<Vec<f64>> {
        self.check_dim(emb)?;
        if self.nodes.is_empty() {
            return Err(Error::EmptyPool);
        }
        Ok(self
            .nodes
            .iter()
            .map(|n| emb.cosine(&n.emb).expect("dimension checked").max(0.0))
            .collect())
    }

    /// `s_avg`: mean clamped similarity to all nodes.
    pub fn global_deviation(&self, emb: &StyleVector) -> Result<f64> {
        let sims = self.clamped_similarities(emb)?;
        Ok(sims.iter().sum::<f64>() / sims.len() as f64)
    }

    /// `s_close`: mean clamped similarity to the `m` most similar nodes.
    pub fn local_density(&self, emb: &StyleVector, m: usize) -> Result<f64> {
        if m < 1 {
            return Err(Error::InvalidParam("m must be at least 1".into()));
        }
        let mut sims = self.clamped_similarities(emb)?;
        sims.sort_by(|a, b| b.total_cmp(a));
        let take = m.min(sims.len());
        Ok(sims[..take].iter().sum::<f64>() / take as f64)
    }

    pub fn mean_edge_length(&self) -> Result<f64> {
        if self.nodes.len() < 2 {
            return Err(Error::TooFewNodes {
                needed: 2,
                actual: self.nodes.len(),
            });
        }
        let (sum, count) = self.edges().fold((0.0, 0usize), |(s, c), (_, _, w)| (s + w, c + 1));
        Ok(sum / count as f64)
    }

    /// Checks the tree and metadata invariants.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Error::CorruptSnapshot(m);
        for (i, node) in self.nodes.iter().enumerate() {
            if node.id != i {
                return Err(bad(format!("node {i} has id {}", node.id)));
            }
            if node.emb.dim() != self.dim {
                return Err(bad(format!("node {i} has dimension {}", node.emb.dim())));
            }
            if node.weight < 1 {
                return Err(bad(format!("node {i} has zero weight")));
            }
            if node.min_dist.is_nan() || node.min_dist < 0.0 {
                return Err(bad(format!("node {i} has invalid min_dist")));
            }
            match (i, node.parent, node.edge_weight) {
                (0, None, None) => {}
                (0, _, _) => return Err(bad("node 0 must be the root".into())),
                (_, Some(p), Some(w)) if p < i => {
                    if !(0.0..=2.0).contains(&w) {
                        return Err(bad(format!("edge {i}->{p} weight {w} outside [0,2]")));
                    }
                }
                _ => return Err(bad(format!("node {i} has an invalid parent link"))),
            }
        }
        for e in &self.ring {
            if e.emb.dim() != self.dim {
                return Err(bad("ring entry has wrong dimension".into()));
            }
        }
        if self.ring.len() > self.params.ring_capacity {
            return Err(bad("ring exceeds capacity".into()));
        }
        if self.stats.tau != self.stats.mu + self.stats.lambda * self.stats.sigma {
            return Err(bad("tau != mu + lambda * sigma".into()));
        }
        Ok(())
    }
}
