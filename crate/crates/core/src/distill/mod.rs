//! Distillation corpus: each development case's primary-visit narrative
//! paired with its top-N Shapley-ranked reasoning paths and the alignment
//! model's reference score.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::align::{assemble_features, AlignError, AlignmentModel};
use crate::assess::{AssessmentStore, Feature};
use crate::attribute::{rank_paths, ShapleyVector};
use crate::corpus::{ClinicalCase, Label};

#[derive(Debug, Error)]
pub enum DistillError {
    #[error("top_n must be between 1 and {d}, got {top_n}")]
    BadTopN { top_n: usize, d: usize },
    #[error("no development case is complete for the model's judges")]
    NoEligibleCases,
    #[error("no attribution for case {0}")]
    MissingAttribution(String),
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningPath {
    pub judge_id: String,
    pub features: Vec<Feature>,
    pub feature_rationale: String,
    pub explanation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillRecord {
    pub case_id: String,
    pub input_text: String,
    pub reasoning_paths: Vec<ReasoningPath>,
    /// Reference score at full precision.
    pub target_score: f64,
    pub top_n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillConfig {
    pub top_n: usize,
    pub output_path: PathBuf,
    /// Include each path's free-text explanation in the assistant turn. When
    /// off, paths carry only the weighted features and their rationale.
    pub include_explanation_scaffold: bool,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            top_n: 1,
            output_path: PathBuf::from("distill.jsonl"),
            include_explanation_scaffold: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillSummary {
    pub records: usize,
    pub top_n: usize,
    pub mean_target_score: BTreeMap<Label, f64>,
    pub warnings: Vec<String>,
    pub output_path: PathBuf,
}

/// The first `n` ranked judges that have an ok assessment. A missing path is
/// skipped (with a warning) and the next ranked judge takes its place.
pub fn select_paths(
    case_id: &str,
    ranking: &[String],
    store: &AssessmentStore,
    n: usize,
) -> (Vec<ReasoningPath>, Vec<String>) {
    let mut paths = Vec::with_capacity(n);
    let mut warnings = Vec::new();
    for judge in ranking {
        if paths.len() == n {
            break;
        }
        match store.assessment(case_id, judge) {
            Some(a) => paths.push(ReasoningPath {
                judge_id: judge.clone(),
                features: a.features.clone(),
                feature_rationale: a.feature_rationale.clone(),
                explanation: a.explanation.clone(),
            }),
            None => warnings.push(format!("case {case_id}: no reasoning path from {judge}, using next ranked judge")),
        }
    }
    (paths, warnings)
}

/// One record per development case that is complete for the model's judges,
/// sorted by case id.
pub fn build_records(
    cases: &[ClinicalCase],
    model: &AlignmentModel,
    attributions: &[ShapleyVector],
    store: &AssessmentStore,
    top_n: usize,
) -> Result<(Vec<DistillRecord>, Vec<String>), DistillError> {
    let d = model.dim();
    if top_n == 0 || top_n > d {
        return Err(DistillError::BadTopN { top_n, d });
    }
    let matrix = match assemble_features(store, &model.judge_ids, cases) {
        Err(AlignError::NoCompleteCases) => return Err(DistillError::NoEligibleCases),
        other => other?,
    };
    let by_case: BTreeMap<&str, &ShapleyVector> = attributions.iter().map(|v| (v.case_id.as_str(), v)).collect();
    let narratives: BTreeMap<&str, String> = cases.iter().map(|c| (c.case_id.as_str(), c.narrative())).collect();
    let mut records = Vec::with_capacity(matrix.len());
    let mut warnings = Vec::new();
    for row in &matrix.rows {
        let vector = by_case
            .get(row.case_id.as_str())
            .ok_or_else(|| DistillError::MissingAttribution(row.case_id.clone()))?;
        let (paths, w) = select_paths(&row.case_id, &rank_paths(vector), store, top_n);
        warnings.extend(w);
        records.push(DistillRecord {
            case_id: row.case_id.clone(),
            input_text: narratives[row.case_id.as_str()].clone(),
            reasoning_paths: paths,
            target_score: model.reference_score(&row.x)?,
            top_n,
        });
    }
    records.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    Ok((records, warnings))
}

/// Assistant turn: the paths in ranking order, then the reference score.
pub fn render_assistant(record: &DistillRecord, include_explanation_scaffold: bool) -> String {
    let mut out = String::new();
    for (i, p) in record.reasoning_paths.iter().enumerate() {
        let _ = writeln!(out, "reasoning_path {} (judge: {})", i + 1, p.judge_id);
        out.push_str("key_features:\n");
        for f in &p.features {
            let _ = writeln!(out, "- {} (weight {})", f.name, f.weight);
        }
        let _ = writeln!(out, "feature_rationale: {}", p.feature_rationale);
        if include_explanation_scaffold {
            let _ = writeln!(out, "explanation: {}", p.explanation);
        }
        out.push('\n');
    }
    let _ = write!(out, "reference_risk_score: {}", record.target_score);
    out
}

pub fn write_records<W: Write>(records: &[DistillRecord], include_explanation_scaffold: bool, out: W) -> io::Result<()> {
    let mut out = BufWriter::new(out);
    for r in records {
        let line = json!({
            "messages": [
                {"role": "user", "content": r.input_text},
                {"role": "assistant", "content": render_assistant(r, include_explanation_scaffold)},
            ],
            "meta": {
                "case_id": r.case_id,
                "top_n": r.top_n,
                "target_score": r.target_score,
                "path_judges": r.reasoning_paths.iter().map(|p| p.judge_id.as_str()).collect::<Vec<_>>(),
            },
        });
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Builds the records and writes them to `config.output_path`.
pub fn emit_distill_corpus(
    cases: &[ClinicalCase],
    model: &AlignmentModel,
    attributions: &[ShapleyVector],
    store: &AssessmentStore,
    config: &DistillConfig,
) -> Result<DistillSummary, DistillError> {
    let (records, warnings) = build_records(cases, model, attributions, store, config.top_n)?;
    write_records(&records, config.include_explanation_scaffold, std::fs::File::create(&config.output_path)?)?;
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(summarize(&records, cases, warnings, config.top_n, &config.output_path))
}

fn summarize(
    records: &[DistillRecord],
    cases: &[ClinicalCase],
    warnings: Vec<String>,
    top_n: usize,
    output_path: &Path,
) -> DistillSummary {
    let labels: BTreeMap<&str, Label> = cases.iter().map(|c| (c.case_id.as_str(), c.label)).collect();
    let mut sums: BTreeMap<Label, (f64, usize)> = BTreeMap::new();
    for r in records {
        let e = sums.entry(labels[r.case_id.as_str()]).or_default();
        e.0 += r.target_score;
        e.1 += 1;
    }
    DistillSummary {
        records: records.len(),
        top_n,
        mean_target_score: sums.into_iter().map(|(l, (s, n))| (l, s / n as f64)).collect(),
        warnings,
        output_path: output_path.to_path_buf(),
    }
}
