//! Text snapshot format for the style pool.
//!
//! ```text
//! privrewrite-stylepool 1
//! dim 256
//! params {"outlier":{...},"m":5,...}
//! stats <mu> <sigma> <tau> <lambda>
//! pending <n>
//! nodes <n>
//! <id> <weight> <parent|-> <min_dist> <json sentence> <v0,v1,...>
//! edges <n>
//! <child> <parent> <weight>
//! ring <n>
//! <json sentence> <v0,v1,...>
//! checksum <sha256 of everything above>
//! ```
//!
//! Floats use Rust's shortest round-trip formatting, so save → load → save
//! is byte-identical.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{MstNode, OutlierStats, PoolParams, RingEntry, StylePoolState};
use crate::embedding::UnitVector;
use crate::error::{Error, Result};

pub const SNAPSHOT_VERSION: &str = "1";
const MAGIC: &str = "privrewrite-stylepool";

fn write_vec(out: &mut String, v: &UnitVector) {
    for (i, x) in v.as_slice().iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{x:?}");
    }
}

fn checksum(body: &str) -> String {
    hex::encode(Sha256::digest(body.as_bytes()))
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptSnapshot(msg.into())
}

impl StylePoolState {
    pub fn to_snapshot(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{MAGIC} {SNAPSHOT_VERSION}");
        let _ = writeln!(s, "dim {}", self.dim);
        let _ = writeln!(
            s,
            "params {}",
            serde_json::to_string(&self.params).expect("params serialize")
        );
        let st = self.stats;
        let _ = writeln!(s, "stats {:?} {:?} {:?} {:?}", st.mu, st.sigma, st.tau, st.lambda);
        let _ = writeln!(s, "pending {}", self.pending_refresh);
        let _ = writeln!(s, "nodes {}", self.nodes.len());
        for n in &self.nodes {
            let parent = n.parent.map_or("-".to_string(), |p| p.to_string());
            let _ = write!(
                s,
                "{} {} {} {:?} {} ",
                n.id,
                n.weight,
                parent,
                n.min_dist,
                serde_json::to_string(&n.sentence).expect("string serialize")
            );
            write_vec(&mut s, &n.emb);
            s.push('\n');
        }
        let edges: Vec<_> = self.edges().collect();
        let _ = writeln!(s, "edges {}", edges.len());
        for (c, p, w) in edges {
            let _ = writeln!(s, "{c} {p} {w:?}");
        }
        let _ = writeln!(s, "ring {}", self.ring.len());
        for e in &self.ring {
            s.push_str(&serde_json::to_string(&e.sentence).expect("string serialize"));
            s.push(' ');
            write_vec(&mut s, &e.emb);
            s.push('\n');
        }
        let sum = checksum(&s);
        let _ = writeln!(s, "checksum {sum}");
        s
    }

    pub fn from_snapshot(text: &str) -> Result<Self> {
        let first = text.lines().next().unwrap_or("");
        let mut head = first.splitn(2, ' ');
        if head.next() != Some(MAGIC) {
            return Err(corrupt("missing snapshot header"));
        }
        let found = head.next().unwrap_or("").to_string();
        if found != SNAPSHOT_VERSION {
            return Err(Error::VersionMismatch {
                expected: SNAPSHOT_VERSION.to_string(),
                found,
            });
        }

        let body_end = text
            .rfind("checksum ")
            .filter(|&i| i == 0 || text.as_bytes()[i - 1] == b'\n')
            .ok_or_else(|| corrupt("missing checksum (truncated?)"))?;
        let (body, tail) = text.split_at(body_end);
        let stored = tail["checksum ".len()..].trim_end_matches('\n');
        if stored != checksum(body) {
            return Err(corrupt("checksum mismatch"));
        }

        let mut lines = body.lines().skip(1);
        let mut next = |tag: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| corrupt(format!("missing `{tag}` section")))?;
            if tag.is_empty() {
                return Ok(line.to_string());
            }
            line.strip_prefix(tag)
                .and_then(|r| r.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| corrupt(format!("expected `{tag}`, found `{line}`")))
        };

        let dim: usize = parse_num(&next("dim")?)?;
        let params: PoolParams =
            serde_json::from_str(&next("params")?).map_err(|e| corrupt(format!("params: {e}")))?;
        let stats_line = next("stats")?;
        let sv: Vec<f64> = stats_line.split(' ').map(parse_num).collect::<Result<_>>()?;
        let [mu, sigma, tau, lambda] = sv[..] else {
            return Err(corrupt("stats needs four values"));
        };
        let pending: usize = parse_num(&next("pending")?)?;

        let n_nodes: usize = parse_num(&next("nodes")?)?;
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            nodes.push(parse_node(&next("")?, dim)?);
        }

        let n_edges: usize = parse_num(&next("edges")?)?;
        let mut edges = Vec::with_capacity(n_edges);
        for _ in 0..n_edges {
            let line = next("")?;
            let parts: Vec<&str> = line.split(' ').collect();
            let [c, p, w] = parts[..] else {
                return Err(corrupt(format!("bad edge line `{line}`")));
            };
            edges.push((parse_num::<usize>(c)?, parse_num::<usize>(p)?, parse_num::<f64>(w)?));
        }
        // edge weights live on the child node; the edge list is a cross-check
        for (c, p, w) in &edges {
            let node: &mut MstNode = nodes
                .get_mut(*c)
                .ok_or_else(|| corrupt(format!("edge from unknown node {c}")))?;
            if node.parent != Some(*p) || node.edge_weight.is_some() {
                return Err(corrupt(format!("edge {c}->{p} disagrees with node table")));
            }
            node.edge_weight = Some(*w);
        }
        if nodes.iter().any(|n| n.parent.is_some() != n.edge_weight.is_some()) {
            return Err(corrupt("edge list does not cover every parent link"));
        }

        let n_ring: usize = parse_num(&next("ring")?)?;
        let mut ring = VecDeque::with_capacity(n_ring);
        for _ in 0..n_ring {
            let line = next("")?;
            let (sentence, emb) = parse_sentence_and_vec(&line, dim)?;
            ring.push_back(RingEntry { sentence, emb });
        }
        if lines.next().is_some() {
            return Err(corrupt("trailing data before checksum"));
        }

        params.validate().map_err(|e| corrupt(format!("params: {e}")))?;
        let state = StylePoolState {
            dim,
            params,
            nodes,
            stats: OutlierStats { mu, sigma, tau, lambda },
            ring,
            pending_refresh: pending,
        };
        state.validate()?;
        Ok(state)
    }
}

fn parse_num<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| corrupt(format!("cannot parse number `{s}`")))
}

fn parse_vec(s: &str, dim: usize) -> Result<UnitVector> {
    let vals: Vec<f64> = s.split(',').map(parse_num).collect::<Result<_>>()?;
    if vals.len() != dim {
        return Err(corrupt(format!("vector has {} values, expected {dim}", vals.len())));
    }
    UnitVector::from_normalized(vals).map_err(|e| corrupt(format!("vector: {e}")))
}

/// Splits `"<json string> <vector>"`; the JSON string may contain spaces.
fn parse_sentence_and_vec(s: &str, dim: usize) -> Result<(String, UnitVector)> {
    let split = s.rfind(' ').ok_or_else(|| corrupt("missing vector"))?;
    let sentence: String =
        serde_json::from_str(&s[..split]).map_err(|e| corrupt(format!("sentence: {e}")))?;
    Ok((sentence, parse_vec(&s[split + 1..], dim)?))
}

fn parse_node(line: &str, dim: usize) -> Result<MstNode> {
    let mut it = line.splitn(5, ' ');
    let mut field = |name: &str| it.next().ok_or_else(|| corrupt(format!("node line missing {name}")));
    let id = parse_num(field("id")?)?;
    let weight = parse_num(field("weight")?)?;
    let parent = match field("parent")? {
        "-" => None,
        p => Some(parse_num(p)?),
    };
    let min_dist = parse_num(field("min_dist")?)?;
    let (sentence, emb) = parse_sentence_and_vec(field("sentence")?, dim)?;
    Ok(MstNode {
        id,
        sentence,
        emb,
        weight,
        parent,
        min_dist,
        edge_weight: None,
    })
}

pub fn save_state(state: &StylePoolState, path: &Path) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, state.to_snapshot())?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_state(path: &Path) -> Result<StylePoolState> {
    StylePoolState::from_snapshot(&fs::read_to_string(path)?)
}
