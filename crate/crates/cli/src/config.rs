//! Run configuration: one TOML file holding every numeric setting of a run.
//!
//! Relative paths are resolved against the directory containing the config
//! file. Secrets never appear here; judges name the environment variable that
//! holds their API key.

use std::path::{Path, PathBuf};

use riskfuse_core::align::{Algorithm, HyperGrid};
use riskfuse_core::assess::{JudgeConfig, MockParams, Template};
use riskfuse_core::corpus::SyntheticCorpusConfig;
use riskfuse_core::exec::Execution;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    pub corpus_path: PathBuf,
    /// When present, `synth` writes a generated corpus to `corpus_path`.
    #[serde(default)]
    pub synth: Option<SyntheticCorpusConfig>,
    #[serde(default)]
    pub split: SplitSection,
    pub judges: Vec<JudgeConfig>,
    #[serde(default)]
    pub assess: AssessSection,
    #[serde(default)]
    pub align: AlignSection,
    #[serde(default)]
    pub attribute: AttributeSection,
    #[serde(default)]
    pub distill: DistillSection,
    #[serde(default)]
    pub evaluate: EvaluateSection,
    #[serde(default)]
    pub diversity: DiversitySection,
    #[serde(default)]
    pub reliability: ReliabilitySection,
    /// Use the rayon pool for data-parallel stages.
    #[serde(default = "yes")]
    pub parallel: bool,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub ratio: f64,
    pub seed: u64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self { ratio: 0.8, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AssessSection {
    pub template: String,
    pub max_in_flight: usize,
    /// Defaults to `<out_dir>/assessments.jsonl`.
    pub cache_path: Option<PathBuf>,
}

impl Default for AssessSection {
    fn default() -> Self {
        Self {
            template: Template::ChainOfThought.id().into(),
            max_in_flight: 8,
            cache_path: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlignSection {
    pub k_folds: usize,
    pub k_inner: usize,
    /// Explicit stage-1 subsets; nested prefixes by single-judge AUC otherwise.
    pub subsets: Option<Vec<Vec<String>>>,
    pub algorithms: Vec<Algorithm>,
    /// Number of stage-1 candidates carried into stage 2.
    pub top_specs: usize,
    pub grid: HyperGrid,
    pub seed: u64,
}

impl Default for AlignSection {
    fn default() -> Self {
        Self {
            k_folds: 5,
            k_inner: 5,
            subsets: None,
            algorithms: vec![Algorithm::Logistic, Algorithm::Gbdt],
            top_specs: 5,
            grid: HyperGrid::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttributeSection {
    pub background_size: usize,
    pub seed: u64,
}

impl Default for AttributeSection {
    fn default() -> Self {
        Self {
            background_size: 64,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistillSection {
    pub top_n: usize,
    /// Defaults to `<out_dir>/distill.jsonl`.
    pub output_path: Option<PathBuf>,
    pub include_explanation_scaffold: bool,
}

impl Default for DistillSection {
    fn default() -> Self {
        Self {
            top_n: 1,
            output_path: None,
            include_explanation_scaffold: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateSection {
    /// `judges` (every judge), `judge:<id>`, `mean`, `median`, `mode`,
    /// `alignment` or `multi_agent`.
    pub systems: Vec<String>,
    pub multi_agent: MultiAgentSection,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self {
            systems: ["judges", "mean", "median", "mode", "alignment", "multi_agent"]
                .map(String::from)
                .to_vec(),
            multi_agent: MultiAgentSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MultiAgentSection {
    /// Base model of the discussing agents; the first configured judge otherwise.
    pub judge: Option<JudgeConfig>,
    pub n_agents: usize,
    pub max_rounds: usize,
}

impl Default for MultiAgentSection {
    fn default() -> Self {
        Self {
            judge: None,
            n_agents: 3,
            max_rounds: 3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiversitySection {
    pub analysis_judge: JudgeConfig,
    /// Cluster only the first `max_cases` development cases (by id).
    pub max_cases: Option<usize>,
}

impl Default for DiversitySection {
    fn default() -> Self {
        Self {
            analysis_judge: JudgeConfig::mock("analyst", MockParams::default()),
            max_cases: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReliabilitySection {
    pub n_runs: usize,
    pub pilot_size: usize,
    pub nonrare_to_rare: f64,
    pub seed: u64,
    /// Bin raw scores into `[0, w)`, `[w, 2w)`, ... before computing kappa.
    pub bin_width: Option<i64>,
}

impl Default for ReliabilitySection {
    fn default() -> Self {
        Self {
            n_runs: 10,
            pilot_size: 750,
            nonrare_to_rare: 2.0,
            seed: 0,
            bin_width: None,
        }
    }
}

impl RunConfig {
    /// Parses and validates `path`, resolving relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))?;
        let problems = cfg.validate();
        if problems.is_empty() {
            Ok(cfg)
        } else {
            Err(CliError::Validation(problems.join("\n")))
        }
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        fix(&mut self.corpus_path);
        if let Some(p) = &mut self.assess.cache_path {
            fix(p);
        }
        if let Some(p) = &mut self.distill.output_path {
            fix(p);
        }
    }

    /// Every problem found, one `field: message` line each.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut bad = |field: &str, msg: String| out.push(format!("{field}: {msg}"));
        if let Some(s) = &self.synth {
            if let Err(e) = s.validate() {
                bad("synth", e.to_string());
            }
        }
        if !(self.split.ratio > 0.0 && self.split.ratio < 1.0) {
            bad("split.ratio", format!("must lie strictly between 0 and 1, got {}", self.split.ratio));
        }
        if self.judges.is_empty() {
            bad("judges", "at least one judge is required".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for (i, j) in self.judges.iter().enumerate() {
            if let Err(e) = j.validate() {
                bad(&format!("judges[{i}]"), e.to_string());
            }
            if !seen.insert(j.judge_id.as_str()) {
                bad(&format!("judges[{i}].judge_id"), format!("duplicate id {:?}", j.judge_id));
            }
        }
        match self.assess.template.parse::<Template>() {
            Ok(Template::ChainOfThought) => {}
            Ok(Template::Direct) => bad(
                "assess.template",
                "\"direct\" yields no features or rationale; the pipeline needs chain_of_thought".into(),
            ),
            Err(e) => bad("assess.template", e),
        }
        if self.assess.max_in_flight == 0 {
            bad("assess.max_in_flight", "must be at least 1".into());
        }
        if self.align.k_folds < 2 {
            bad("align.k_folds", format!("must be at least 2, got {}", self.align.k_folds));
        }
        if self.align.k_inner < 2 {
            bad("align.k_inner", format!("must be at least 2, got {}", self.align.k_inner));
        }
        if self.align.algorithms.is_empty() {
            bad("align.algorithms", "at least one algorithm is required".into());
        }
        if self.align.top_specs == 0 {
            bad("align.top_specs", "must be at least 1".into());
        }
        if let Some(subsets) = &self.align.subsets {
            if subsets.is_empty() {
                bad("align.subsets", "an explicit subset list must not be empty".into());
            }
            for (i, s) in subsets.iter().enumerate() {
                if s.is_empty() {
                    bad(&format!("align.subsets[{i}]"), "subset is empty".into());
                }
                for id in s {
                    if !seen.contains(id.as_str()) {
                        bad(&format!("align.subsets[{i}]"), format!("unknown judge {id:?}"));
                    }
                }
            }
        }
        let g = &self.align.grid;
        if self.align.algorithms.contains(&Algorithm::Logistic) && g.logistic_l2.is_empty() {
            bad("align.grid.logistic_l2", "must not be empty".into());
        }
        if g.logistic_l2.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            bad("align.grid.logistic_l2", "values must be finite and non-negative".into());
        }
        if self.align.algorithms.contains(&Algorithm::Gbdt) {
            for (field, empty) in [
                ("align.grid.gbdt_n_trees", g.gbdt_n_trees.is_empty()),
                ("align.grid.gbdt_max_depth", g.gbdt_max_depth.is_empty()),
                ("align.grid.gbdt_learning_rate", g.gbdt_learning_rate.is_empty()),
            ] {
                if empty {
                    bad(field, "must not be empty".into());
                }
            }
        }
        if g.gbdt_n_trees.contains(&0) {
            bad("align.grid.gbdt_n_trees", "values must be at least 1".into());
        }
        if g.gbdt_learning_rate.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            bad("align.grid.gbdt_learning_rate", "values must be positive".into());
        }
        if self.attribute.background_size == 0 {
            bad("attribute.background_size", "must be at least 1".into());
        }
        if self.distill.top_n == 0 {
            bad("distill.top_n", "must be at least 1".into());
        }
        if self.evaluate.systems.is_empty() {
            bad("evaluate.systems", "at least one system is required".into());
        }
        for s in &self.evaluate.systems {
            let known = matches!(s.as_str(), "judges" | "mean" | "median" | "mode" | "alignment" | "multi_agent")
                || s.strip_prefix("judge:").is_some_and(|id| seen.contains(id));
            if !known {
                bad("evaluate.systems", format!("unknown system {s:?}"));
            }
        }
        let ma = &self.evaluate.multi_agent;
        if ma.n_agents < 2 {
            bad("evaluate.multi_agent.n_agents", format!("must be at least 2, got {}", ma.n_agents));
        }
        if ma.max_rounds < 1 {
            bad("evaluate.multi_agent.max_rounds", "must be at least 1".into());
        }
        if let Some(j) = &ma.judge {
            if let Err(e) = j.validate() {
                bad("evaluate.multi_agent.judge", e.to_string());
            }
        }
        if let Err(e) = self.diversity.analysis_judge.validate() {
            bad("diversity.analysis_judge", e.to_string());
        }
        if self.reliability.n_runs < 2 {
            bad("reliability.n_runs", format!("must be at least 2, got {}", self.reliability.n_runs));
        }
        if self.reliability.pilot_size == 0 {
            bad("reliability.pilot_size", "must be at least 1".into());
        }
        if !(self.reliability.nonrare_to_rare >= 0.0 && self.reliability.nonrare_to_rare.is_finite()) {
            bad("reliability.nonrare_to_rare", "must be finite and non-negative".into());
        }
        if self.reliability.bin_width.is_some_and(|w| w < 1) {
            bad("reliability.bin_width", "must be at least 1".into());
        }
        out
    }

    pub fn execution(&self) -> Execution {
        if self.parallel {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }

    pub fn judge_ids(&self) -> Vec<String> {
        self.judges.iter().map(|j| j.judge_id.clone()).collect()
    }

    pub fn cache_path(&self) -> PathBuf {
        self.assess.cache_path.clone().unwrap_or_else(|| self.out_dir.join("assessments.jsonl"))
    }

    pub fn distill_path(&self) -> PathBuf {
        self.distill.output_path.clone().unwrap_or_else(|| self.out_dir.join("distill.jsonl"))
    }

    pub fn multi_agent_judge(&self) -> JudgeConfig {
        self.evaluate.multi_agent.judge.clone().unwrap_or_else(|| self.judges[0].clone())
    }
}
