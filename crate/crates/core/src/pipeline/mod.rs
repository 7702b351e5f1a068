//! End-to-end orchestration: context → prompt → generate → score → select →
//! pool update, plus preference export, evaluation and run bookkeeping.

mod config;
mod ingest;

use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embedding::{fnv1a64, Embedder};
use crate::error::{Error, Result};
use crate::metrics::{build_report, EvalPair, MetricReport};
use crate::pii::{Detector, Gazetteer};
use crate::policy::{
    make_preference_pair, score_candidates, select_best, CandidateSet, GenerationBackend, GenerationRequest,
    PreferencePair, FAILED_REWARD,
};
use crate::prompting::{build_prompt, extract_context, ContextSignals};
use crate::reward::{RewardBreakdown, Scorer};
use crate::style_pool::{load_state, save_state, InsertOutcome, StylePoolState};

pub use config::PipelineConfig;
pub use ingest::{ingest, ingest_str, write_jsonl, IngestSummary, MalformedLine, TextRecord};

/// One accepted rewrite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewriteOutput {
    pub id: String,
    pub rewrite: String,
    pub reward: RewardBreakdown,
    pub context: ContextSignals,
    pub insert: InsertOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordFailure {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceRecord {
    pub id: String,
    #[serde(flatten)]
    pub pair: PreferencePair,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub outputs: Vec<RewriteOutput>,
    pub failures: Vec<RecordFailure>,
    pub pairs: Vec<PreferenceRecord>,
    /// Records whose candidates all tied, so no pair exists.
    pub no_pair: Vec<String>,
}

/// What happened to one record, for the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RecordStatus {
    Rewritten { id: String },
    Failed { id: String, error: String },
    DroppedTooLong { id: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: PipelineConfig,
    pub input: PathBuf,
    pub output: PathBuf,
    pub pool: PathBuf,
    pub pool_sha256_before: Option<String>,
    pub pool_sha256_after: String,
    pub malformed_lines: Vec<MalformedLine>,
    pub records: Vec<RecordStatus>,
}

/// Holds the built components of a configured run.
pub struct Engine {
    config: PipelineConfig,
    embedder: Embedder,
    detector: Detector,
    backend: Box<dyn GenerationBackend>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine").field("config", &self.config).finish_non_exhaustive()
    }
}

pub fn build_detector(gazetteers: &[PathBuf]) -> Result<Detector> {
    let mut g = Gazetteer::starter();
    for p in gazetteers {
        g.extend_from_file(p)?;
    }
    Detector::new(&g)
}

impl Engine {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let detector = build_detector(&config.gazetteers)?;
        let backend = config.generation.build(config.seed, detector.clone())?;
        Self::with_backend(config, backend)
    }

    /// Uses a caller-supplied generation backend.
    pub fn with_backend(config: PipelineConfig, backend: Box<dyn GenerationBackend>) -> Result<Self> {
        config.validate()?;
        let detector = build_detector(&config.gazetteers)?;
        let embedder = config.embedding.build()?;
        Ok(Self {
            config,
            embedder,
            detector,
            backend,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn embedder(&self) -> &Embedder {
        &self.embedder
    }

    pub fn detector(&self) -> &Detector {
        &self.detector
    }

    pub fn new_pool(&self) -> Result<StylePoolState> {
        StylePoolState::new(self.embedder.style_dim(), self.config.pool)
    }

    fn scorer(&self) -> Scorer<'_> {
        Scorer {
            embedder: &self.embedder,
            detector: &self.detector,
            params: self.config.reward,
        }
    }

    /// Generates and scores candidates for one record against `pool`
    /// without touching it.
    pub fn candidates(&self, rec: &TextRecord, pool: &StylePoolState) -> Result<(ContextSignals, CandidateSet)> {
        let signals = extract_context(&rec.text, pool, &self.detector, &self.embedder)?;
        let prompt = build_prompt(&self.config.prompts, &signals, &rec.text);
        let raws = self.backend.generate(
            &GenerationRequest {
                prompt: &prompt,
                source: &rec.text,
                pii: &signals.pii,
            },
            self.config.generation.n,
        )?;
        if raws.len() != self.config.generation.n {
            return Err(Error::RemoteUnavailable(format!(
                "backend returned {} of {} candidates",
                raws.len(),
                self.config.generation.n
            )));
        }
        let candidates = score_candidates(raws, &rec.text, &signals, pool, &self.scorer());
        Ok((signals, CandidateSet { prompt, candidates }))
    }

    fn pair_rng(&self, id: &str) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(fnv1a64(&[b"pair", &self.config.seed.to_le_bytes(), id.as_bytes()]))
    }

    /// Inserts an accepted text and refreshes statistics on the batch cadence.
    fn accept(&self, pool: &mut StylePoolState, text: &str) -> Result<InsertOutcome> {
        let emb = self.embedder.embed_style(text)?;
        let outcome = pool.mst_insert(text, emb.clone())?;
        pool.remember(text, emb)?;
        if pool.pending_refresh() >= self.config.refresh_batch {
            pool.refresh_stats()?;
        }
        Ok(outcome)
    }

    /// Processes records in order. A failing record is recorded and leaves
    /// the pool untouched; only the selected candidate enters the pool.
    pub fn run_rewrite(&self, records: &[TextRecord], pool: &mut StylePoolState) -> RunResult {
        let mut res = RunResult::default();
        for rec in records {
            match self.rewrite_one(rec, pool) {
                Ok((out, pair)) => {
                    match pair {
                        Some(pair) => res.pairs.push(PreferenceRecord {
                            id: rec.id.clone(),
                            pair,
                        }),
                        None => {
                            log::info!("record {}: all candidates tied, no preference pair", rec.id);
                            res.no_pair.push(rec.id.clone());
                        }
                    }
                    res.outputs.push(out);
                }
                Err(e) => {
                    log::warn!("record {}: {e}", rec.id);
                    res.failures.push(RecordFailure {
                        id: rec.id.clone(),
                        error: e.to_string(),
                    });
                }
            }
        }
        res
    }

    fn rewrite_one(
        &self,
        rec: &TextRecord,
        pool: &mut StylePoolState,
    ) -> Result<(RewriteOutput, Option<PreferencePair>)> {
        let (signals, set) = self.candidates(rec, pool)?;
        let best = select_best(&set.candidates)?;
        let chosen = &set.candidates[best];
        let Some(reward) = chosen.breakdown.filter(|_| chosen.reward > FAILED_REWARD) else {
            return Err(Error::InvalidInput(format!(
                "no candidate could be scored: {}",
                chosen.error.as_deref().unwrap_or("unknown error")
            )));
        };
        let rewrite = Scorer::scored_text(&chosen.raw);
        let pair = make_preference_pair(&set, &mut self.pair_rng(&rec.id))?;
        // embed before mutating so an embedding failure leaves the pool as is
        self.embedder.embed_style(&rewrite)?;
        let insert = self.accept(pool, &rewrite)?;
        Ok((
            RewriteOutput {
                id: rec.id.clone(),
                rewrite,
                reward,
                context: signals,
                insert,
            },
            pair,
        ))
    }

    /// Pre-inserts original texts into the tree (not the recent ring) and
    /// refreshes statistics.
    pub fn warm_start(&self, records: &[TextRecord], pool: &mut StylePoolState) -> Result<()> {
        for rec in records {
            let emb = self.embedder.embed_style(&rec.text)?;
            pool.mst_insert(&rec.text, emb)?;
        }
        pool.refresh_stats()
    }

    pub fn evaluate(&self, pairs: &[EvalPair]) -> Result<MetricReport> {
        build_report(pairs, &self.embedder, &self.detector, &self.config.eval)
    }
}

/// Joins originals with rewrite outputs by id, in original order. Records
/// without a rewrite are skipped.
pub fn join_for_eval(originals: &[TextRecord], rewrites: &[(String, String)]) -> Vec<EvalPair> {
    let map: std::collections::HashMap<&str, &str> =
        rewrites.iter().map(|(i, r)| (i.as_str(), r.as_str())).collect();
    originals
        .iter()
        .filter_map(|o| {
            map.get(o.id.as_str()).map(|r| EvalPair {
                id: o.id.clone(),
                original: o.text.clone(),
                rewrite: r.to_string(),
                author: o.author.clone(),
                labels: o.labels.clone(),
            })
        })
        .collect()
}

/// Reads `(id, rewrite)` from a rewrite output file.
pub fn read_rewrites(path: &Path) -> Result<Vec<(String, String)>> {
    #[derive(Deserialize)]
    struct Row {
        id: String,
        rewrite: String,
    }
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str::<Row>(l)
                .map(|r| (r.id, r.rewrite))
                .map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })
        })
        .collect()
}

/// Exclusive ownership of a pool snapshot for one run.
#[derive(Debug)]
pub struct PoolLock {
    path: PathBuf,
}

impl PoolLock {
    pub fn acquire(pool: &Path) -> Result<Self> {
        let mut name = pool.as_os_str().to_owned();
        name.push(".lock");
        let path = PathBuf::from(name);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(path)),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for PoolLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Paths for a file-based rewrite run.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub input: PathBuf,
    pub output: PathBuf,
    pub pool: PathBuf,
    pub manifest: PathBuf,
    pub preferences: Option<PathBuf>,
    pub warm_start: Option<PathBuf>,
}

impl RunPaths {
    pub fn default_manifest(output: &Path) -> PathBuf {
        let mut name = output.as_os_str().to_owned();
        name.push(".manifest.json");
        PathBuf::from(name)
    }
}

/// File-level rewrite run: ingest, lock and load the pool, rewrite, save the
/// pool, write outputs and the manifest. Per-record failures are reported in
/// the manifest and result, not as an error.
pub fn run_files(engine: &Engine, paths: &RunPaths) -> Result<(RunResult, RunManifest)> {
    let cfg = engine.config();
    let summary = ingest(&paths.input, cfg.max_tokens)?;
    let _lock = PoolLock::acquire(&paths.pool)?;
    let (mut pool, before) = if paths.pool.exists() {
        let text = fs::read_to_string(&paths.pool)?;
        (StylePoolState::from_snapshot(&text)?, Some(sha256_hex(text.as_bytes())))
    } else {
        (engine.new_pool()?, None)
    };
    if pool.dim() != engine.embedder().style_dim() {
        return Err(Error::DimensionMismatch {
            expected: engine.embedder().style_dim(),
            actual: pool.dim(),
        });
    }
    if let Some(w) = &paths.warm_start {
        let warm = ingest(w, cfg.max_tokens)?;
        engine.warm_start(&warm.records, &mut pool)?;
    }

    let result = engine.run_rewrite(&summary.records, &mut pool);

    write_jsonl(&paths.output, &result.outputs)?;
    if let Some(p) = &paths.preferences {
        write_jsonl(p, &result.pairs)?;
    }
    save_state(&pool, &paths.pool)?;
    let after = sha256_hex(pool.to_snapshot().as_bytes());

    let failed: std::collections::HashMap<&str, &str> =
        result.failures.iter().map(|f| (f.id.as_str(), f.error.as_str())).collect();
    let mut records: Vec<RecordStatus> = summary
        .records
        .iter()
        .map(|r| match failed.get(r.id.as_str()) {
            Some(e) => RecordStatus::Failed {
                id: r.id.clone(),
                error: e.to_string(),
            },
            None => RecordStatus::Rewritten { id: r.id.clone() },
        })
        .collect();
    records.extend(
        summary
            .dropped_too_long
            .iter()
            .map(|id| RecordStatus::DroppedTooLong { id: id.clone() }),
    );
    let manifest = RunManifest {
        config: cfg.clone(),
        input: paths.input.clone(),
        output: paths.output.clone(),
        pool: paths.pool.clone(),
        pool_sha256_before: before,
        pool_sha256_after: after,
        malformed_lines: summary.malformed,
        records,
    };
    fs::write(&paths.manifest, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok((result, manifest))
}

/// Runs the rewrite loop on a scratch copy of the pool and writes only the
/// preference pairs.
pub fn export_preferences(
    engine: &Engine,
    records: &[TextRecord],
    pool: Option<&Path>,
    out: &Path,
) -> Result<RunResult> {
    let mut pool = match pool {
        Some(p) if p.exists() => load_state(p)?,
        _ => engine.new_pool()?,
    };
    let result = engine.run_rewrite(records, &mut pool);
    write_jsonl(out, &result.pairs)?;
    Ok(result)
}
