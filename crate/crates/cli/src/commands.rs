use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use riskfuse_core::align::{
    assemble_features, nested_prefix_subsets, stage1_screen, stage2_optimize, stage3_finalize, AlignmentModel,
    CandidateSpec,
};
use riskfuse_core::assess::{
    assess_corpus, multi_agent_consensus, AssessError, AssessOptions, AssessmentStore, Judge, JudgeConfig,
    StoreEntry,
};
use riskfuse_core::attribute::{explain_matrix, global_attribution, load_attributions, save_attributions, BackgroundSet};
use riskfuse_core::corpus::{
    emit_corpus, generate_synthetic_corpus, load_corpus, stratified_sample, stratified_split, ClinicalCase,
    CorpusSplit, Label,
};
use riskfuse_core::distill::{emit_distill_corpus, DistillConfig};
use riskfuse_core::metrics::{
    aggregate_store, bin_scores, cluster_reasoning, diversity_metrics, evaluate, fleiss_kappa, AggregateMethod,
    ChainAssignment, EvalReport, ReliabilityReport,
};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::manifest::{config_hash, display_path, fingerprints, manifest_path, Manifest};
use crate::report;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Synth,
    Split,
    Assess,
    Align,
    Attribute,
    Distill,
    Evaluate,
    Diversity,
    Reliability,
    Report,
    Pipeline,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Split => "split",
            Command::Assess => "assess",
            Command::Align => "align",
            Command::Attribute => "attribute",
            Command::Distill => "distill",
            Command::Evaluate => "evaluate",
            Command::Diversity => "diversity",
            Command::Reliability => "reliability",
            Command::Report => "report",
            Command::Pipeline => "pipeline",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOutcome {
    pub command: &'static str,
    /// Inputs, outputs and config matched the previous manifest.
    pub skipped: bool,
    pub upstream_calls: usize,
    pub summary: String,
}

/// Artifact locations under the output directory.
pub struct Layout {
    out_dir: PathBuf,
    store: PathBuf,
    distill: PathBuf,
}

impl Layout {
    pub fn new(cfg: &RunConfig) -> Self {
        Self {
            out_dir: cfg.out_dir.clone(),
            store: cfg.cache_path(),
            distill: cfg.distill_path(),
        }
    }
    fn out(&self, rel: &str) -> PathBuf {
        self.out_dir.join(rel)
    }
    pub fn split(&self) -> PathBuf {
        self.out("split.json")
    }
    pub fn store(&self) -> PathBuf {
        self.store.clone()
    }
    pub fn stage1(&self) -> PathBuf {
        self.out("align/stage1.jsonl")
    }
    pub fn stage2(&self) -> PathBuf {
        self.out("align/stage2.json")
    }
    pub fn model(&self) -> PathBuf {
        self.out("align/model.json")
    }
    pub fn attribution(&self) -> PathBuf {
        self.out("attribution.jsonl")
    }
    pub fn distill(&self) -> PathBuf {
        self.distill.clone()
    }
    pub fn distill_summary(&self) -> PathBuf {
        self.out("distill_summary.json")
    }
    pub fn evaluation(&self) -> PathBuf {
        self.out("evaluation.jsonl")
    }
    pub fn multi_agent(&self) -> PathBuf {
        self.out("multi_agent.jsonl")
    }
    pub fn chains(&self) -> PathBuf {
        self.out("chains.jsonl")
    }
    pub fn diversity(&self) -> PathBuf {
        self.out("diversity.json")
    }
    pub fn reliability(&self) -> PathBuf {
        self.out("reliability.json")
    }
    pub fn variability(&self) -> PathBuf {
        self.out("variability.json")
    }
    pub fn report_dir(&self) -> PathBuf {
        self.out("report")
    }
}

/// One evaluated system: its id, how many test cases it scored, and the metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub system_id: String,
    pub n_cases: usize,
    #[serde(flatten)]
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeReliability {
    pub judge_id: String,
    /// Pilot cases dropped because some run produced no valid assessment.
    pub dropped_cases: usize,
    #[serde(flatten)]
    pub report: ReliabilityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilitySummary {
    pub n_runs: usize,
    pub pilot_size: usize,
    pub bin_width: Option<i64>,
    pub judges: Vec<JudgeReliability>,
}

pub fn run(cfg: &RunConfig, command: Command, force: bool) -> Result<Vec<StageOutcome>, CliError> {
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| CliError::io(&cfg.out_dir, e))?;
    let one = |o: Result<StageOutcome, CliError>| o.map(|o| vec![o]);
    match command {
        Command::Synth => one(synth(cfg, force)),
        Command::Split => one(split(cfg, force)),
        Command::Assess => one(assess(cfg, force)),
        Command::Align => one(align(cfg, force)),
        Command::Attribute => one(attribute(cfg, force)),
        Command::Distill => one(distill(cfg, force)),
        Command::Evaluate => one(evaluate_systems(cfg, force)),
        Command::Diversity => one(diversity(cfg, force)),
        Command::Reliability => one(reliability(cfg, force)),
        Command::Report => one(report_tables(cfg, force)),
        Command::Pipeline => {
            let mut out = Vec::new();
            if cfg.synth.is_some() {
                out.push(synth(cfg, force)?);
            }
            out.push(split(cfg, force)?);
            out.push(assess(cfg, force)?);
            out.push(align(cfg, force)?);
            out.push(attribute(cfg, force)?);
            out.push(distill(cfg, force)?);
            out.push(evaluate_systems(cfg, force)?);
            Ok(out)
        }
    }
}

/// Skips `body` when the previous manifest still matches, otherwise runs it
/// and records a new manifest. `body` returns (upstream calls, summary).
fn stage(
    cfg: &RunConfig,
    command: &'static str,
    hash: String,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    force: bool,
    body: impl FnOnce() -> Result<(usize, String), CliError>,
) -> Result<StageOutcome, CliError> {
    let mpath = manifest_path(&cfg.out_dir, command);
    if !force {
        if let Some(m) = Manifest::load(&mpath) {
            if m.is_fresh(&hash, &cfg.out_dir, &inputs, &outputs) {
                log::info!("{command}: up to date");
                return Ok(StageOutcome {
                    command,
                    skipped: true,
                    upstream_calls: 0,
                    summary: "up to date".into(),
                });
            }
        }
    }
    let input_fps = fingerprints(&cfg.out_dir, &inputs)?;
    let (upstream_calls, summary) = body()?;
    let manifest = Manifest {
        command: command.into(),
        config_hash: hash,
        inputs: input_fps,
        outputs: fingerprints(&cfg.out_dir, &outputs)?,
        upstream_calls,
        timestamp_unix: Manifest::now(),
    };
    manifest.save(&mpath)?;
    log::info!("{command}: {summary}");
    Ok(StageOutcome {
        command,
        skipped: false,
        upstream_calls,
        summary,
    })
}

fn require(path: &Path, command: &'static str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Prerequisite {
            command,
            artifact: path.display().to_string(),
        })
    }
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e)),
        _ => Ok(()),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    ensure_parent(path)?;
    let text = serde_json::to_string_pretty(value).expect("artifact serializes");
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    ensure_parent(path)?;
    let mut buf = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut buf, r).expect("artifact serializes");
        buf.push(b'\n');
    }
    std::fs::write(path, buf).map_err(|e| CliError::io(path, e))
}

pub(crate) fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| CliError::Failed(format!("{}:{}: {e}", path.display(), i + 1))))
        .collect()
}

fn corpus_prerequisite(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.corpus_path.exists() {
        Ok(())
    } else if cfg.synth.is_some() {
        require(&cfg.corpus_path, "synth")
    } else {
        Err(CliError::Validation(format!(
            "corpus_path: {} does not exist",
            cfg.corpus_path.display()
        )))
    }
}

pub(crate) fn load_cases(cfg: &RunConfig) -> Result<Vec<ClinicalCase>, CliError> {
    corpus_prerequisite(cfg)?;
    load_corpus(&cfg.corpus_path).map_err(|e| CliError::Validation(format!("corpus_path: {e}")))
}

pub(crate) fn load_split(cfg: &RunConfig) -> Result<CorpusSplit, CliError> {
    let path = Layout::new(cfg).split();
    require(&path, "split")?;
    read_json(&path)
}

pub(crate) fn load_store(cfg: &RunConfig) -> Result<AssessmentStore, CliError> {
    let path = Layout::new(cfg).store();
    require(&path, "assess")?;
    AssessmentStore::load(&path).map_err(CliError::failed)
}

fn load_model(cfg: &RunConfig) -> Result<AlignmentModel, CliError> {
    let path = Layout::new(cfg).model();
    require(&path, "align")?;
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    AlignmentModel::from_json(&text).map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))
}

/// Cases of one side of the split, in corpus order.
pub(crate) fn subset(cases: &[ClinicalCase], ids: &[String]) -> Vec<ClinicalCase> {
    let keep: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
    cases.iter().filter(|c| keep.contains(c.case_id.as_str())).cloned().collect()
}

pub(crate) fn label_map(cases: &[ClinicalCase]) -> BTreeMap<String, Label> {
    cases.iter().map(|c| (c.case_id.clone(), c.label)).collect()
}

fn build_judge(cfg: &JudgeConfig) -> Result<Judge, CliError> {
    Judge::from_config(cfg.clone()).map_err(|e| match e {
        AssessError::Config { .. } => CliError::Validation(e.to_string()),
        other => CliError::Upstream(other.to_string()),
    })
}

fn synth(cfg: &RunConfig, force: bool) -> Result<StageOutcome, CliError> {
    let Some(sc) = &cfg.synth else {
        return Err(CliError::Validation("synth: the [synth] section is required for this command".into()));
    };
    stage(cfg, "synth", config_hash(sc), vec![], vec![cfg.corpus_path.clone()], force, || {
        let cases = generate_synthetic_corpus(sc).map_err(|e| CliError::Validation(format!("synth: {e}")))?;
        ensure_parent(&cfg.corpus_path)?;
        emit_corpus(&cases, &cfg.corpus_path).map_err(|e| CliError::io(&cfg.corpus_path, e))?;
        Ok((0, format!("{} cases", cases.len())))
    })
}

fn split(cfg: &RunConfig, force: bool) -> Result<StageOutcome, CliError> {
    corpus_prerequisite(cfg)?;
    let out = Layout::new(cfg).split();
    stage(cfg, "split", config_hash(&cfg.split), vec![cfg.corpus_path.clone()], vec![out.clone()], force, || {
        let cases = load_cases(cfg)?;
        let s = stratified_split(&cases, cfg.split.ratio, cfg.split.seed).map_err(CliError::failed)?;
        write_json(&out, &s)?;
        Ok((0, format!("{} development / {} test", s.development.len(), s.test.len())))
    })
}

fn assess_hash(cfg: &RunConfig) -> String {
    config_hash(&(&cfg.judges, &cfg.assess.template))
}

fn assess(cfg: &RunConfig, force: bool) -> Result<StageOutcome, CliError> {
    corpus_prerequisite(cfg)?;
    let out = Layout::new(cfg).store();
    let hash = assess_hash(cfg);
    stage(cfg, "assess", hash.clone(), vec![cfg.corpus_path.clone()], vec![out.clone()], force, || {
        let cases = load_cases(cfg)?;
        let judges = cfg.judges.iter().map(build_judge).collect::<Result<Vec<_>, _>>()?;
        // Cached entries are only reused when they came from the same judges.
        let previous = Manifest::load(&manifest_path(&cfg.out_dir, "assess"));
        let reusable = previous.is_none_or(|m| m.config_hash == hash);
        let mut store = if out.exists() && reusable {
            AssessmentStore::load(&out).map_err(CliError::failed)?
        } else {
            if out.exists() {
                log::warn!("judge configuration changed; discarding {}", out.display());
            }
            AssessmentStore::new()
        };
        let options = AssessOptions {
            max_in_flight: cfg.assess.max_in_flight,
        };
        let stats = assess_corpus(&judges, &cases, options, &mut store).map_err(CliError::failed)?;
        ensure_parent(&out)?;
        store.save(&out).map_err(|e| CliError::io(&out, e))?;
        for j in &judges {
            let ok = cases.iter().filter(|c| store.assessment(&c.case_id, j.id()).is_some()).count();
            if ok == 0 && !cases.is_empty() {
                return Err(CliError::Upstream(format!("judge {} produced no valid assessment", j.id())));
            }
        }
        let summary = format!(
            "{} pairs, {} cached, {} new, {} missing",
            stats.pairs,
            stats.cached,
            stats.new_ok,
            store.missing_count()
        );
        Ok((stats.upstream_calls, summary))
    })
}

fn align(cfg: &RunConfig, force: bool) -> Result<StageOutcome, CliError> {
    corpus_prerequisite(cfg)?;
    let lay = Layout::new(cfg);
    require(&lay.split(), "split")?;
    require(&lay.store(), "assess")?;
    let hash = config_hash(&(&cfg.align, cfg.judge_ids()));
    let inputs = vec![cfg.corpus_path.clone(), lay.split(), lay.store()];
    let outputs = vec![lay.stage1(), lay.stage2(), lay.model()];
    stage(cfg, "align", hash, inputs, outputs, force, || {
        let cases = load_cases(cfg)?;
        let dev = subset(&cases, &load_split(cfg)?.development);
        let store = load_store(cfg)?;
        let a = &cfg.align;
        let exec = cfg.execution();
        let matrix = assemble_features(&store, &cfg.judge_ids(), &dev).map_err(CliError::failed)?;
        let subsets = match &a.subsets {
            Some(s) => s.clone(),
            None => nested_prefix_subsets(&matrix).map_err(CliError::failed)?,
        };
        let stage1 = stage1_screen(exec, &matrix, &subsets, &a.algorithms, a.k_folds, a.seed).map_err(CliError::failed)?;
        write_jsonl(&lay.stage1(), &stage1)?;
        let top: Vec<CandidateSpec> = stage1.iter().take(a.top_specs).map(|r| r.spec.clone()).collect();
        let stage2 =
            stage2_optimize(exec, &top, &matrix, &a.grid, a.k_folds, a.k_inner, a.seed).map_err(CliError::failed)?;
        write_json(&lay.stage2(), &stage2)?;
        let final_rows = assemble_features(&store, &stage2.best.judge_subset, &dev).map_err(CliError::failed)?;
        let model = stage3_finalize(&stage2.best, &final_rows).map_err(CliError::failed)?;
        std::fs::write(lay.model(), model.to_json() + "\n").map_err(|e| CliError::io(&lay.model(), e))?;
        Ok((
            0,
            format!(
                "{} candidates screened on {} rows; selected {:?} over {} judges",
                stage1.len(),
                matrix.len(),
                model.spec.algorithm(),
                model.judge_ids.len()
            ),
        ))
    })
}

fn attribute(cfg: &RunConfig, force: bool) -> Result<StageOutcome, CliError> {
    corpus_prerequisite(cfg)?;
    let lay = Layout::new(cfg);
    require(&lay.split(), "split")?;
    require(&lay.store(), "assess")?;
    require(&lay.model(), "align")?;
    let inputs = vec![cfg.corpus_path.clone(), lay.split(), lay.store(), lay.model()];
    stage(cfg, "attribute", config_hash(&cfg.attribute), inputs, vec![lay.attribution()], force, || {
        let cases = load_cases(cfg)?;
        let dev = subset(&cases, &load_split(cfg)?.development);
        let store = load_store(cfg)?;
        let model = load_model(cfg)?;
        let matrix = assemble_features(&store, &model.judge_ids, &dev).map_err(CliError::failed)?;
        let bg = BackgroundSet::sample(&matrix, cfg.attribute.background_size, cfg.attribute.seed)
            .map_err(CliError::failed)?;
        let vectors = explain_matrix(cfg.execution(), &model, &matrix, &bg).map_err(CliError::failed)?;
        let global = global_attribution(&vectors).map_err(CliError::failed)?;
        save_attributions(lay.attribution(), &vectors, &global).map_err(|e| CliError::io(&lay.attribution(), e))?;
        Ok((0, format!("{} cases explained against {} background rows", vectors.len(), bg.len())))
    })
}

fn distill(cfg: &RunConfig, force: bool) -> Result<StageOutcome, CliError> {
    corpus_prerequisite(cfg)?;
    let lay = Layout::new(cfg);
    require(&lay.split(), "split")?;
    require(&lay.store(), "assess")?;
    require(&lay.model(), "align")?;
    require(&lay.attribution(), "attribute")?;
    let inputs = vec![cfg.corpus_path.clone(), lay.split(), lay.store(), lay.model(), lay.attribution()];
    let outputs = vec![lay.distill(), lay.distill_summary()];
    let hash = config_hash(&(&cfg.distill.top_n, cfg.distill.include_explanation_scaffold));
    stage(cfg, "distill", hash, inputs, outputs, force, || {
        let cases = load_cases(cfg)?;
        let dev = subset(&cases, &load_split(cfg)?.development);
        let store = load_store(cfg)?;
        let model = load_model(cfg)?;
        let (vectors, _) = load_attributions(lay.attribution()).map_err(CliError::failed)?;
        ensure_parent(&lay.distill())?;
        let dc = DistillConfig {
            top_n: cfg.distill.top_n,
            output_path: lay.distill(),
            include_explanation_scaffold: cfg.distill.include_explanation_scaffold,
        };
        let mut summary = emit_distill_corpus(&dev, &model, &vectors, &store, &dc).map_err(|e| match e {
            riskfuse_core::distill::DistillError::BadTopN { .. } => CliError::Validation(format!("distill.top_n: {e}")),
            other => CliError::failed(other),
        })?;
        // Keep the summary independent of where the run directory lives.
        summary.output_path = PathBuf::from(display_path(&cfg.out_dir, &lay.distill()));
        write_json(&lay.distill_summary(), &summary)?;
        Ok((0, format!("{} records with top_n = {}", summary.records, summary.top_n)))
    })
}

/// Expands `judges` into one `judge:<id>` entry per configured judge.
pub fn expand_systems(cfg: &RunConfig) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in &cfg.evaluate.systems {
        let add: Vec<String> = if s == "judges" {
            cfg.judges.iter().map(|j| format!("judge:{}", j.judge_id)).collect()
        } else {
            vec![s.clone()]
        };
        for a in add {
            if !out.contains(&a) {
                out.push(a);
            }
        }
    }
    out
}

fn eval_row(system_id: &str, scored: &[(f64, Label)]) -> Result<EvalRow, CliError> {
    let (scores, labels): (Vec<f64>, Vec<Label>) = scored.iter().copied().unzip();
    let report = evaluate(&scores, &labels).map_err(|e| CliError::Failed(format!("evaluating {system_id}: {e}")))?;
    Ok(EvalRow {
        system_id: system_id.into(),
        n_cases: scored.len(),
        report,
    })
}

/// Multi-agent consensus scores for `cases`, answered from and added to the
/// cache at `path`. Returns the store and the number of upstream calls.
fn multi_agent_scores(
    cfg: &RunConfig,
    cases: &[ClinicalCase],
    path: &Path,
) -> Result<(AssessmentStore, usize), CliError> {
    const ID: &str = "multi_agent";
    let ma = &cfg.evaluate.multi_agent;
    let key = config_hash(&(cfg.multi_agent_judge(), ma.n_agents, ma.max_rounds));
    let key_path = path.with_extension("key");
    let reusable = std::fs::read_to_string(&key_path).is_ok_and(|k| k.trim() == key);
    let mut store = if path.exists() && reusable {
        AssessmentStore::load(path).map_err(CliError::failed)?
    } else {
        AssessmentStore::new()
    };
    let pending: Vec<&ClinicalCase> = cases.iter().filter(|c| !store.contains(&c.case_id, ID)).collect();
    let judge = build_judge(&cfg.multi_agent_judge())?;
    let results = cfg
        .execution()
        .map(&pending, |c| multi_agent_consensus(&judge, c, ma.n_agents, ma.max_rounds));
    for (case, r) in pending.iter().zip(results) {
        let entry = match r.map_err(|e| CliError::Validation(format!("evaluate.multi_agent: {e}")))? {
            Ok(outcome) => {
                let mut a = outcome.assessment;
                a.judge_id = ID.into();
                StoreEntry::Ok(a)
            }
            Err(reason) => StoreEntry::Missing { reason },
        };
        store.insert(&case.case_id, ID, entry).map_err(CliError::failed)?;
    }
    ensure_parent(path)?;
    store.save(path).map_err(|e| CliError::io(path, e))?;
    std::fs::write(&key_path, key + "\n").map_err(|e| CliError::io(&key_path, e))?;
    Ok((store, judge.upstream_calls()))
}

fn evaluate_systems(cfg: &RunConfig, force: bool) -> Result<StageOutcome, CliError> {
    corpus_prerequisite(cfg)?;
    let lay = Layout::new(cfg);
    require(&lay.split(), "split")?;
    require(&lay.store(), "assess")?;
    let systems = expand_systems(cfg);
    let wants_model = systems.iter().any(|s| s == "alignment");
    let wants_agents = systems.iter().any(|s| s == "multi_agent");
    let mut inputs = vec![cfg.corpus_path.clone(), lay.split(), lay.store()];
    if wants_model {
        require(&lay.model(), "align")?;
        inputs.push(lay.model());
    }
    let mut outputs = vec![lay.evaluation()];
    if wants_agents {
        outputs.push(lay.multi_agent());
    }
    let hash = config_hash(&(&cfg.evaluate, cfg.judge_ids(), cfg.multi_agent_judge()));
    stage(cfg, "evaluate", hash, inputs, outputs, force, || {
        let cases = load_cases(cfg)?;
        let test = subset(&cases, &load_split(cfg)?.test);
        let labels = label_map(&test);
        let store = load_store(cfg)?;
        let ids = cfg.judge_ids();
        let mut calls = 0;
        let mut rows = Vec::new();
        for system in &systems {
            let scored: Vec<(f64, Label)> = if let Some(judge) = system.strip_prefix("judge:") {
                test.iter()
                    .filter_map(|c| store.assessment(&c.case_id, judge).map(|a| (a.risk_score as f64, c.label)))
                    .collect()
            } else if let Ok(method) = system.parse::<AggregateMethod>() {
                let scored_ids: Vec<String> = test
                    .iter()
                    .filter(|c| ids.iter().any(|j| store.assessment(&c.case_id, j).is_some()))
                    .map(|c| c.case_id.clone())
                    .collect();
                aggregate_store(&store, &ids, &scored_ids, method)
                    .map_err(CliError::failed)?
                    .into_iter()
                    .map(|(id, s)| (s, labels[&id]))
                    .collect()
            } else if system == "alignment" {
                let model = load_model(cfg)?;
                let m = assemble_features(&store, &model.judge_ids, &test).map_err(CliError::failed)?;
                let p = model.predict_matrix(&m).map_err(CliError::failed)?;
                p.into_iter().zip(&m.rows).map(|(p, r)| (100.0 * p, r.y)).collect()
            } else if system == "multi_agent" {
                let (agents, n) = multi_agent_scores(cfg, &test, &lay.multi_agent())?;
                calls += n;
                test.iter()
                    .filter_map(|c| agents.assessment(&c.case_id, "multi_agent").map(|a| (a.risk_score as f64, c.label)))
                    .collect()
            } else {
                return Err(CliError::Validation(format!("evaluate.systems: unknown system {system:?}")));
            };
            rows.push(eval_row(system, &scored)?);
        }
        write_jsonl(&lay.evaluation(), &rows)?;
        let best = rows
            .iter()
            .max_by(|a, b| a.report.auc.total_cmp(&b.report.auc))
            .map(|r| format!("; best {} (AUC {:.4})", r.system_id, r.report.auc))
            .unwrap_or_default();
        Ok((calls, format!("{} systems on {} test cases{best}", rows.len(), test.len())))
    })
}

fn diversity(cfg: &RunConfig, force: bool) -> Result<StageOutcome, CliError> {
    corpus_prerequisite(cfg)?;
    let lay = Layout::new(cfg);
    require(&lay.split(), "split")?;
    require(&lay.store(), "assess")?;
    let inputs = vec![cfg.corpus_path.clone(), lay.split(), lay.store()];
    let outputs = vec![lay.chains(), lay.diversity()];
    let hash = config_hash(&(&cfg.diversity, cfg.judge_ids()));
    stage(cfg, "diversity", hash, inputs, outputs, force, || {
        let cases = load_cases(cfg)?;
        let mut dev = subset(&cases, &load_split(cfg)?.development);
        dev.sort_by(|a, b| a.case_id.cmp(&b.case_id));
        if let Some(n) = cfg.diversity.max_cases {
            dev.truncate(n);
        }
        let store = load_store(cfg)?;
        let ids = cfg.judge_ids();
        let analyst = build_judge(&cfg.diversity.analysis_judge)?;
        let results = cfg.execution().map(&dev, |c| {
            let assessments: Vec<_> = ids.iter().filter_map(|j| store.assessment(&c.case_id, j).cloned()).collect();
            cluster_reasoning(c, &assessments, &analyst)
        });
        let mut assignments: Vec<ChainAssignment> = Vec::new();
        let mut skipped = 0;
        for (c, r) in dev.iter().zip(results) {
            match r {
                Ok(a) => assignments.push(a),
                Err(reason) => {
                    skipped += 1;
                    log::warn!("diversity: no chains for {}: {reason}", c.case_id);
                }
            }
        }
        write_jsonl(&lay.chains(), &assignments)?;
        let report = diversity_metrics(&assignments, &label_map(&dev), &ids).map_err(CliError::failed)?;
        write_json(&lay.diversity(), &report)?;
        Ok((
            analyst.upstream_calls(),
            format!("{} cases clustered, {skipped} without chains", assignments.len()),
        ))
    })
}

fn reliability(cfg: &RunConfig, force: bool) -> Result<StageOutcome, CliError> {
    corpus_prerequisite(cfg)?;
    let lay = Layout::new(cfg);
    let hash = config_hash(&(&cfg.reliability, &cfg.judges));
    stage(cfg, "reliability", hash, vec![cfg.corpus_path.clone()], vec![lay.reliability()], force, || {
        let r = &cfg.reliability;
        let cases = load_cases(cfg)?;
        let pilot = stratified_sample(&cases, r.pilot_size, r.nonrare_to_rare, r.seed)
            .map_err(|e| CliError::Validation(format!("reliability: {e}")))?;
        let mut calls = 0;
        let mut judges = Vec::new();
        for jc in &cfg.judges {
            let judge = build_judge(jc)?;
            let runs: Vec<Vec<Option<i64>>> = (0..r.n_runs as u32)
                .map(|run| {
                    cfg.execution().map(&pilot, |c| match judge.assess(c, run) {
                        StoreEntry::Ok(a) => Some(a.risk_score as i64),
                        StoreEntry::Missing { .. } => None,
                    })
                })
                .collect();
            calls += judge.upstream_calls();
            let ratings: Vec<Vec<i64>> = (0..pilot.len())
                .filter_map(|i| runs.iter().map(|run| run[i]).collect::<Option<Vec<i64>>>())
                .collect();
            let dropped_cases = pilot.len() - ratings.len();
            let ratings = match r.bin_width {
                Some(w) => bin_scores(&ratings, w),
                None => ratings,
            };
            let report = fleiss_kappa(&ratings, None)
                .map_err(|e| CliError::Failed(format!("reliability for {}: {e}", jc.judge_id)))?;
            judges.push(JudgeReliability {
                judge_id: jc.judge_id.clone(),
                dropped_cases,
                report,
            });
        }
        let min_kappa = judges.iter().map(|j| j.report.kappa).fold(f64::INFINITY, f64::min);
        write_json(
            &lay.reliability(),
            &ReliabilitySummary {
                n_runs: r.n_runs,
                pilot_size: pilot.len(),
                bin_width: r.bin_width,
                judges,
            },
        )?;
        Ok((calls, format!("{} runs over {} cases; min kappa {min_kappa:.4}", r.n_runs, pilot.len())))
    })
}

fn report_tables(cfg: &RunConfig, force: bool) -> Result<StageOutcome, CliError> {
    corpus_prerequisite(cfg)?;
    let lay = Layout::new(cfg);
    require(&lay.split(), "split")?;
    require(&lay.store(), "assess")?;
    let mut inputs = vec![cfg.corpus_path.clone(), lay.split(), lay.store()];
    for optional in [
        lay.stage1(),
        lay.attribution(),
        lay.distill_summary(),
        lay.evaluation(),
        lay.diversity(),
    ] {
        if optional.exists() {
            inputs.push(optional);
        }
    }
    let mut outputs = vec![lay.variability()];
    outputs.extend(report::PANELS.iter().map(|(name, _)| lay.report_dir().join(format!("{name}.csv"))));
    let available: BTreeSet<String> = inputs.iter().map(|p| display_path(&cfg.out_dir, p)).collect();
    outputs.retain(|p| {
        let name = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        report::panel_source(name).is_none_or(|src| available.contains(&display_path(&cfg.out_dir, &src(&lay))))
    });
    let hash = config_hash(&cfg.judge_ids());
    stage(cfg, "report", hash, inputs, outputs, force, || {
        let written = report::write_report(cfg, &lay)?;
        Ok((0, format!("{} tables in {}", written, lay.report_dir().display())))
    })
}

/// Flushes stdout-bound summaries; used by the binary.
pub fn print_outcomes(outcomes: &[StageOutcome], mut out: impl Write) -> std::io::Result<()> {
    for o in outcomes {
        let state = if o.skipped { "skipped" } else { "done" };
        writeln!(out, "{:<12} {:<8} upstream_calls={} {}", o.command, state, o.upstream_calls, o.summary)?;
    }
    Ok(())
}
