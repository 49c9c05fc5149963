//! Co-training orchestration: encoder and rewriter warmups, bootstrap data
//! generation, then rounds of encoder retraining on generated descriptions
//! and preference alignment of the rewriter.

mod config;
mod rundir;

use std::collections::HashMap;
use std::path::Path;
use std::time::Instant;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::catalog::{
    flatten, AnchorSource, Corpus, Lexicon, QueryExample, RenderingChoice, RenderingId, RenderingSampler, Split,
    ToolRecord, TrainingPair,
};
use crate::dpo::{build_pairs, dpo_train, write_pairs, DpoConfig};
use crate::encoder::{train_on_pairs, EncoderParams, TrainConfig};
use crate::error::{Error, Result};
use crate::eval::{emit_trajectory, evaluate, MetricReport, PerQueryScore, TrajectoryPoint};
use crate::index::{build_index, VectorIndex};
use crate::rewriter::{clean, DecodeConfig, GeneratorPolicy, Rewriter};
use crate::rng::{derive_label, rng_from, Rng};

pub use config::{Ablation, DataPaths, EncoderInit, PipelineConfig, RunFile};
pub use rundir::{read_dataset, read_manifest, write_dataset, RunManifest, StageRecord, StageStatus, MANIFEST_FILE};

use rundir::RunDir;

/// Untrained encoder and rewriter for a corpus.
pub fn initial_models(corpus: &Corpus, lexicon: &Lexicon, cfg: &PipelineConfig) -> Result<(EncoderParams, GeneratorPolicy)> {
    let e = cfg.encoder;
    let theta0 = EncoderParams::random(e.feature_dim, e.embed_dim, e.temperature, derive_label(cfg.seed, "theta0"))?;
    let psi0 = GeneratorPolicy::initial(&corpus.tools, lexicon, cfg.policy.clone())?;
    Ok((theta0, psi0))
}

/// Encoder warmup on real (query, full-record rendering) pairs.
pub fn s1a_warmup(
    theta0: EncoderParams,
    train: &[QueryExample],
    corpus: &Corpus,
    cfg: &TrainConfig,
) -> Result<EncoderParams> {
    if train.is_empty() {
        return Err(Error::invalid("the train split is empty"));
    }
    let pairs = flatten(train, &RenderingChoice::Fixed(RenderingId::R5), &mut rng_from(cfg.seed))?;
    let out = train_on_pairs(theta0, &pairs, corpus, cfg)?;
    log::info!("s1a: {} pairs, epoch losses {:?}", pairs.len(), out.epoch_losses);
    Ok(out.params)
}

/// Rewriter warmup on every rendering of every catalog tool.
pub fn s1b_warmup(psi0: &GeneratorPolicy, catalog: &[ToolRecord], skip: bool) -> Result<GeneratorPolicy> {
    if catalog.is_empty() {
        return Err(Error::invalid("the catalog is empty"));
    }
    if skip {
        return Ok(psi0.clone());
    }
    psi0.warmup_fit(catalog, &RenderingId::ALL)
}

/// One description per train query (greedy under the S2 decode config),
/// cleaned, paired with each gold tool under a freshly sampled rendering.
pub fn s2_bootstrap(
    psi: &dyn Rewriter,
    train: &[QueryExample],
    decode: &DecodeConfig,
    rng: &mut Rng,
) -> Result<Vec<TrainingPair>> {
    let mut pairs = flatten(train, &RenderingChoice::Sampled(RenderingSampler::uniform()), rng)?;
    let base: u64 = rng.random();
    let mut cache: HashMap<&str, String> = HashMap::new();
    for q in train {
        if cache.contains_key(q.query_id.as_str()) {
            continue;
        }
        let mut qrng = rng_from(derive_label(base, &q.query_id));
        let raw = psi.generate(&q.text, decode, 1, &mut qrng)?;
        cache.insert(&q.query_id, clean(&raw[0].text, &q.text));
    }
    for p in &mut pairs {
        p.anchor = cache[p.query_id.as_str()].clone();
        p.source = AnchorSource::Description;
    }
    Ok(pairs)
}

/// Models and data carried between stages.
#[derive(Debug, Clone)]
pub struct RoundState {
    /// Next round to run (1-based); `rounds + 1` once the loop is over.
    pub round: usize,
    pub encoder: EncoderParams,
    pub policy: GeneratorPolicy,
    /// Catalog index under `encoder` and the full-record rendering.
    pub index: VectorIndex,
    /// Description dataset produced by the current policy.
    pub dataset: Vec<TrainingPair>,
    pub snapshot: Option<MetricReport>,
}

impl RoundState {
    pub fn new(encoder: EncoderParams, policy: GeneratorPolicy, dataset: Vec<TrainingPair>, corpus: &Corpus) -> Result<Self> {
        let index = build_index(&encoder, &corpus.tools, RenderingId::INDEX)?;
        Ok(Self {
            round: 1,
            encoder,
            policy,
            index,
            dataset,
            snapshot: None,
        })
    }

    fn set_encoder(&mut self, encoder: EncoderParams, corpus: &Corpus) -> Result<()> {
        self.index = build_index(&encoder, &corpus.tools, RenderingId::INDEX)?;
        self.encoder = encoder;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    S1a,
    S1b,
    S2,
    S3(usize),
    S4(usize),
    Regen(usize),
}

impl Stage {
    fn name(self) -> String {
        match self {
            Stage::S1a => "s1a".into(),
            Stage::S1b => "s1b".into(),
            Stage::S2 => "s2".into(),
            Stage::S3(r) => format!("r{r}_s3"),
            Stage::S4(r) => format!("r{r}_s4"),
            Stage::Regen(r) => format!("r{r}_s2"),
        }
    }

    fn changes_models(self) -> bool {
        !matches!(self, Stage::S2 | Stage::Regen(_))
    }
}

fn round_stages(r: usize, cfg: &PipelineConfig) -> Vec<Stage> {
    let mut v = vec![Stage::S3(r), Stage::S4(r)];
    if r < cfg.rounds || cfg.regenerate_final {
        v.push(Stage::Regen(r));
    }
    v
}

fn plan(cfg: &PipelineConfig) -> Vec<Stage> {
    let mut v = vec![Stage::S1a, Stage::S1b, Stage::S2];
    for r in 1..=cfg.rounds {
        v.extend(round_stages(r, cfg));
    }
    v
}

fn stage_seed(cfg: &PipelineConfig, stage: Stage) -> u64 {
    derive_label(cfg.seed, &stage.name())
}

fn train_split(corpus: &Corpus) -> Vec<QueryExample> {
    corpus.split(Split::Train)
}

fn s4_queries(corpus: &Corpus, cfg: &PipelineConfig, rng: &mut Rng) -> Vec<QueryExample> {
    let train = train_split(corpus);
    match cfg.s4_max_queries {
        Some(m) if m < train.len() => {
            let mut picked = index::sample(rng, train.len(), m).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|i| train[i].clone()).collect()
        }
        _ => train,
    }
}

/// What a stage produced. `None` fields are unchanged.
#[derive(Default)]
struct StageOutput {
    encoder: Option<EncoderParams>,
    policy: Option<GeneratorPolicy>,
    dataset: Option<Vec<TrainingPair>>,
    pairs: Option<Vec<crate::dpo::PreferencePair>>,
    skipped: bool,
}

/// Runs one stage against `state` without touching it.
fn execute(stage: Stage, state: &RoundState, corpus: &Corpus, cfg: &PipelineConfig) -> Result<StageOutput> {
    let seed = stage_seed(cfg, stage);
    let mut rng = rng_from(seed);
    let ab = cfg.ablation;
    let mut out = StageOutput::default();
    match stage {
        Stage::S1a => {
            let tc = TrainConfig { seed, ..cfg.s1a };
            out.encoder = Some(s1a_warmup(state.encoder.clone(), &train_split(corpus), corpus, &tc)?);
        }
        Stage::S1b => {
            out.skipped = ab.skip_s1b;
            out.policy = Some(s1b_warmup(&state.policy, &corpus.tools, ab.skip_s1b)?);
        }
        Stage::S2 => {
            out.dataset = Some(s2_bootstrap(&state.policy, &train_split(corpus), &cfg.s2_decode, &mut rng)?);
        }
        Stage::S3(_) if ab.freeze_encoder => out.skipped = true,
        Stage::S3(_) => {
            if let Some(p) = state.dataset.iter().find(|p| p.source != AnchorSource::Description) {
                return Err(Error::invalid(format!(
                    "query-anchored pair for `{}` reached description-only retraining",
                    p.query_id
                )));
            }
            let tc = TrainConfig { seed, ..cfg.s3 };
            let trained = train_on_pairs(state.encoder.clone(), &state.dataset, corpus, &tc)?;
            log::info!("{}: epoch losses {:?}", stage.name(), trained.epoch_losses);
            out.encoder = Some(trained.params);
        }
        Stage::S4(_) | Stage::Regen(_) if ab.freeze_rewriter => out.skipped = true,
        Stage::S4(_) => {
            let queries = s4_queries(corpus, cfg, &mut rng);
            let pairs = build_pairs(
                &state.policy,
                &state.encoder,
                &state.index,
                &queries,
                cfg.n_candidates,
                &cfg.s4_decode,
                &mut rng,
            )?;
            log::info!("{}: {} preference pairs from {} queries", stage.name(), pairs.len(), queries.len());
            if pairs.is_empty() {
                out.policy = Some(state.policy.clone());
            } else {
                let dc = DpoConfig { seed, ..cfg.dpo };
                let trained = dpo_train(&state.policy, &pairs, &dc)?;
                log::info!(
                    "{}: losses {:?}, margin {:.4} -> {:.4}",
                    stage.name(),
                    trained.epoch_losses,
                    trained.initial_margin,
                    trained.final_margin
                );
                out.policy = Some(trained.policy);
            }
            out.pairs = Some(pairs);
        }
        Stage::Regen(_) => {
            out.dataset = Some(s2_bootstrap(&state.policy, &train_split(corpus), &cfg.s2_decode, &mut rng)?);
        }
    }
    Ok(out)
}

fn apply(state: &mut RoundState, out: StageOutput, corpus: &Corpus) -> Result<()> {
    if let Some(e) = out.encoder {
        state.set_encoder(e, corpus)?;
    }
    if let Some(p) = out.policy {
        state.policy = p;
    }
    if let Some(d) = out.dataset {
        state.dataset = d;
    }
    Ok(())
}

/// One S3/S4 cycle (plus dataset regeneration unless this is the last
/// round and `regenerate_final` is off). The snapshot is the rewriter-mode
/// evaluation of the resulting models.
pub fn run_round(state: &RoundState, corpus: &Corpus, cfg: &PipelineConfig) -> Result<RoundState> {
    cfg.validate()?;
    let r = state.round;
    if r < 1 || r > cfg.rounds {
        return Err(Error::invalid(format!("round {r} is outside 1..={}", cfg.rounds)));
    }
    let mut next = state.clone();
    for stage in round_stages(r, cfg) {
        let out = execute(stage, &next, corpus, cfg).map_err(|e| e.in_stage(&stage.name()))?;
        apply(&mut next, out, corpus)?;
        if matches!(stage, Stage::S4(_)) {
            next.snapshot = Some(eval_mode(&next, corpus, cfg, Mode::Rewriter)?.0);
        }
    }
    next.round = r + 1;
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Raw query embedded directly.
    Encoder,
    /// Query rewritten by the current policy, cleaned, then embedded.
    Rewriter,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Encoder => "encoder",
            Mode::Rewriter => "rewriter",
        }
    }
}

fn eval_mode(state: &RoundState, corpus: &Corpus, cfg: &PipelineConfig, mode: Mode) -> Result<(MetricReport, Vec<PerQueryScore>)> {
    let queries: Vec<QueryExample> = corpus.queries.iter().filter(|q| q.split != Split::Train).cloned().collect();
    let rewriter: Option<&dyn Rewriter> = match mode {
        Mode::Encoder => None,
        Mode::Rewriter => Some(&state.policy),
    };
    let mut rng = rng_from(derive_label(cfg.seed, "eval"));
    let (mut report, scores) = evaluate(&state.encoder, rewriter, &state.index, &queries, &cfg.ks, &mut rng)?;
    if mode == Mode::Rewriter {
        report.rewriter_fingerprint = Some(state.policy.fingerprint());
    }
    Ok((report, scores))
}

/// Evaluation of one stage's models in one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub mode: Mode,
    pub report: MetricReport,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub encoder: EncoderParams,
    pub policy: GeneratorPolicy,
    /// `s1` (rewriter mode after S1b) then `r1..rR` (rewriter mode after
    /// each round's S4).
    pub trajectory: Vec<TrajectoryPoint>,
    pub stage_reports: Vec<StageReport>,
    pub manifest: Option<RunManifest>,
}

fn corpus_fingerprint(corpus: &Corpus) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&corpus.tools).expect("tools serialize"));
    h.update(serde_json::to_vec(&corpus.queries).expect("queries serialize"));
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Evaluations to run after `stage`.
fn stage_modes(stage: Stage, cfg: &PipelineConfig) -> Vec<Mode> {
    let mut modes = Vec::new();
    if cfg.eval_stages && stage.changes_models() {
        modes = vec![Mode::Encoder, Mode::Rewriter];
    } else if stage == Stage::S1a {
        modes.push(Mode::Encoder);
    } else if matches!(stage, Stage::S1b | Stage::S4(_)) {
        modes.push(Mode::Rewriter);
    }
    modes
}

fn trajectory_label(stage: Stage, mode: Mode) -> Option<String> {
    match (stage, mode) {
        (Stage::S1b, Mode::Rewriter) => Some("s1".into()),
        (Stage::S4(r), Mode::Rewriter) => Some(format!("r{r}")),
        _ => None,
    }
}

fn load_stage(stage: Stage, rec: &StageRecord, dir: &RunDir) -> Result<StageOutput> {
    let mut out = StageOutput {
        skipped: rec.status == StageStatus::Skipped,
        ..StageOutput::default()
    };
    for rel in &rec.artifacts {
        let path = dir.path(rel);
        if rel.ends_with(".encoder") {
            out.encoder = Some(EncoderParams::load(&path)?);
        } else if rel.ends_with(".policy") {
            out.policy = Some(GeneratorPolicy::load(&path)?);
        } else if rel.ends_with(".jsonl") && !rel.ends_with("_pairs.jsonl") {
            out.dataset = Some(read_dataset(&path)?);
        }
    }
    if stage == Stage::S1b && out.policy.is_none() && !out.skipped {
        return Err(Error::Config("manifest lists s1b without a checkpoint".into()));
    }
    Ok(out)
}

fn persist_stage(stage: Stage, out: &StageOutput, dir: &RunDir) -> Result<Vec<String>> {
    let name = stage.name();
    let mut rels = Vec::new();
    if let Some(e) = &out.encoder {
        let rel = format!("checkpoints/{name}.encoder");
        e.save(dir.path(&rel))?;
        rels.push(rel);
    }
    if let Some(p) = &out.policy {
        if !out.skipped {
            let rel = format!("checkpoints/{name}.policy");
            p.save(dir.path(&rel))?;
            rels.push(rel);
        }
    }
    if let Some(d) = &out.dataset {
        let rel = format!("datasets/{name}.jsonl");
        write_dataset(d, dir.path(&rel))?;
        rels.push(rel);
    }
    if let Some(pairs) = &out.pairs {
        let rel = format!("datasets/{name}_pairs.jsonl");
        write_pairs(pairs, dir.path(&rel))?;
        rels.push(rel);
    }
    Ok(rels)
}

/// Runs S1a, S1b, S2 and `cfg.rounds` rounds, evaluating after each
/// model-changing stage.
///
/// With `out_dir`, every stage's checkpoints, datasets and reports are
/// written under it together with `manifest.json`; an existing manifest
/// with the same configuration is resumed from its last completed stage.
pub fn run_pipeline(
    theta0: EncoderParams,
    psi0: GeneratorPolicy,
    corpus: &Corpus,
    cfg: &PipelineConfig,
    out_dir: Option<&Path>,
) -> Result<PipelineOutcome> {
    cfg.validate()?;
    let dir = out_dir.map(RunDir::create).transpose()?;
    let mut manifest = RunManifest {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        rounds: cfg.rounds,
        ablation: cfg.ablation,
        ablation_label: cfg.ablation.label(),
        corpus_fingerprint: corpus_fingerprint(corpus),
        initial_encoder: theta0.fingerprint(),
        initial_policy: psi0.fingerprint(),
        stages: Vec::new(),
        last_good_stage: None,
        trajectory: None,
        complete: false,
    };
    let previous = match &dir {
        Some(d) => d.existing_manifest()?,
        None => None,
    };
    if let Some(prev) = &previous {
        let same = prev.config_hash == manifest.config_hash
            && prev.corpus_fingerprint == manifest.corpus_fingerprint
            && prev.initial_encoder == manifest.initial_encoder
            && prev.initial_policy == manifest.initial_policy;
        if !same {
            return Err(Error::Config(
                "run directory holds a run with a different configuration, corpus or initial models".into(),
            ));
        }
    }

    let mut state = RoundState::new(theta0, psi0, Vec::new(), corpus)?;
    let mut trajectory = Vec::new();
    let mut stage_reports = Vec::new();

    for stage in plan(cfg) {
        let name = stage.name();
        let seed = stage_seed(cfg, stage);
        let done = previous
            .as_ref()
            .and_then(|m| m.stage(&name))
            .filter(|r| r.status != StageStatus::Failed);
        let started = Instant::now();
        let (out, artifacts, resumed) = match (done, &dir) {
            (Some(rec), Some(d)) => (load_stage(stage, rec, d)?, rec.artifacts.clone(), true),
            _ => match execute(stage, &state, corpus, cfg) {
                Ok(out) => {
                    let rels = match &dir {
                        Some(d) => persist_stage(stage, &out, d).map_err(|e| e.in_stage(&name))?,
                        None => Vec::new(),
                    };
                    (out, rels, false)
                }
                Err(e) => {
                    if let Some(d) = &dir {
                        manifest.stages.push(StageRecord {
                            name: name.clone(),
                            status: StageStatus::Failed,
                            seed,
                            artifacts: Vec::new(),
                            reports: Vec::new(),
                            wall_clock_ms: started.elapsed().as_millis() as u64,
                            error: Some(e.to_string()),
                        });
                        d.write_manifest(&manifest)?;
                    }
                    return Err(e.in_stage(&name));
                }
            },
        };
        let skipped = out.skipped;
        apply(&mut state, out, corpus).map_err(|e| e.in_stage(&name))?;
        if let Stage::S4(r) = stage {
            state.round = r + 1;
        }

        let mut reports = Vec::new();
        for mode in stage_modes(stage, cfg) {
            let label = format!("{name}.{}", mode.as_str());
            let report = match (&dir, resumed) {
                (Some(d), true) => d.read_report(&label)?,
                _ => {
                    let (report, scores) = eval_mode(&state, corpus, cfg, mode).map_err(|e| e.in_stage(&name))?;
                    if let Some(d) = &dir {
                        reports.extend(d.write_report(&label, &report, &scores)?);
                    }
                    report
                }
            };
            if resumed {
                if let Some(rec) = done {
                    reports = rec.reports.clone();
                }
            }
            if let Some(t) = trajectory_label(stage, mode) {
                trajectory.push(TrajectoryPoint {
                    stage: t,
                    report: report.clone(),
                });
            }
            if matches!(stage, Stage::S4(_)) && mode == Mode::Rewriter {
                state.snapshot = Some(report.clone());
            }
            stage_reports.push(StageReport {
                stage: name.clone(),
                mode,
                report,
            });
        }

        let wall = match done {
            Some(rec) => rec.wall_clock_ms,
            None => started.elapsed().as_millis() as u64,
        };
        manifest.stages.push(StageRecord {
            name: name.clone(),
            status: if skipped { StageStatus::Skipped } else { StageStatus::Done },
            seed,
            artifacts,
            reports,
            wall_clock_ms: wall,
            error: None,
        });
        manifest.last_good_stage = Some(name.clone());
        if let Some(d) = &dir {
            d.write_manifest(&manifest)?;
            if !resumed {
                d.log(&format!("{name}: {} in {wall} ms", if skipped { "skipped" } else { "done" }))?;
            }
        }
    }

    if let Some(d) = &dir {
        let rel = "reports/trajectory.csv".to_string();
        emit_trajectory(&trajectory, d.path(&rel))?;
        manifest.trajectory = Some(rel);
        manifest.complete = true;
        d.write_manifest(&manifest)?;
    }
    Ok(PipelineOutcome {
        encoder: state.encoder,
        policy: state.policy,
        trajectory,
        stage_reports,
        manifest: dir.map(|_| manifest),
    })
}
