//! Exact interventional Shapley attribution of alignment-model predictions
//! to individual judges, the three global summaries, and per-case path
//! ranking.

mod background;
mod shapley;

pub use background::BackgroundSet;
pub use shapley::{explain_matrix, shapley_exact, shapley_model, shapley_values, ModelOutput, MAX_EXACT_DIM};

use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AttributeError {
    #[error("exact enumeration supports at most {max} judges, got {got}")]
    TooManyFeatures { got: usize, max: usize },
    #[error("background set is empty")]
    EmptyBackground,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("no shapley vectors to summarize")]
    Empty,
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error("attribution file line {line}: {message}")]
    Malformed { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyVector {
    pub case_id: String,
    pub judge_ids: Vec<String>,
    pub phi: Vec<f64>,
    /// Mean prediction over the background set.
    pub baseline: f64,
    pub prediction: f64,
}

impl ShapleyVector {
    /// Judge indices by |phi| descending, ties to the lower index.
    pub fn ranking_indices(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.phi.len()).collect();
        idx.sort_by(|&a, &b| self.phi[b].abs().total_cmp(&self.phi[a].abs()).then(a.cmp(&b)));
        idx
    }

    pub fn dominant(&self) -> usize {
        self.ranking_indices()[0]
    }

    pub fn efficiency_gap(&self) -> f64 {
        (self.phi.iter().sum::<f64>() - (self.prediction - self.baseline)).abs()
    }
}

/// Judge ids ordered by attribution magnitude.
pub fn rank_paths(vector: &ShapleyVector) -> Vec<String> {
    vector
        .ranking_indices()
        .into_iter()
        .map(|i| vector.judge_ids[i].clone())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalAttribution {
    pub judge_ids: Vec<String>,
    /// Share of the total |phi| over all cases.
    pub normalized_importance: Vec<f64>,
    pub mean_signed: Vec<f64>,
    /// Fraction of cases in which each judge has the largest |phi|.
    pub dominant_frequency: Vec<f64>,
    pub n_cases: usize,
}

/// The three global summaries. When every phi is zero the importance shares
/// are uniform.
pub fn global_attribution(vectors: &[ShapleyVector]) -> Result<GlobalAttribution, AttributeError> {
    let first = vectors.first().ok_or(AttributeError::Empty)?;
    let d = first.phi.len();
    let mut abs_sum = vec![0.0; d];
    let mut signed_sum = vec![0.0; d];
    let mut dominant = vec![0usize; d];
    for v in vectors {
        if v.phi.len() != d {
            return Err(AttributeError::Dimension {
                expected: d,
                got: v.phi.len(),
            });
        }
        for i in 0..d {
            abs_sum[i] += v.phi[i].abs();
            signed_sum[i] += v.phi[i];
        }
        dominant[v.dominant()] += 1;
    }
    let total: f64 = abs_sum.iter().sum();
    let n = vectors.len() as f64;
    let normalized_importance = if total > 0.0 {
        abs_sum.iter().map(|a| a / total).collect()
    } else {
        vec![1.0 / d as f64; d]
    };
    Ok(GlobalAttribution {
        judge_ids: first.judge_ids.clone(),
        normalized_importance,
        mean_signed: signed_sum.iter().map(|s| s / n).collect(),
        dominant_frequency: dominant.iter().map(|&c| c as f64 / n).collect(),
        n_cases: vectors.len(),
    })
}

#[derive(Serialize, Deserialize)]
struct CaseRecord {
    case_id: String,
    baseline: f64,
    prediction: f64,
    judge_ids: Vec<String>,
    phi: serde_json::Map<String, serde_json::Value>,
    ranking: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct GlobalRecord {
    global: GlobalAttribution,
}

/// One line per case, then one line holding the global summary.
pub fn write_attributions<W: Write>(
    vectors: &[ShapleyVector],
    global: &GlobalAttribution,
    out: W,
) -> io::Result<()> {
    let mut out = BufWriter::new(out);
    for v in vectors {
        let phi = v
            .judge_ids
            .iter()
            .zip(&v.phi)
            .map(|(j, p)| (j.clone(), serde_json::json!(p)))
            .collect();
        let rec = CaseRecord {
            case_id: v.case_id.clone(),
            baseline: v.baseline,
            prediction: v.prediction,
            judge_ids: v.judge_ids.clone(),
            phi,
            ranking: rank_paths(v),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    serde_json::to_writer(&mut out, &GlobalRecord { global: global.clone() })?;
    out.write_all(b"\n")?;
    out.flush()
}

pub fn save_attributions(
    path: impl AsRef<Path>,
    vectors: &[ShapleyVector],
    global: &GlobalAttribution,
) -> io::Result<()> {
    write_attributions(vectors, global, std::fs::File::create(path)?)
}

pub fn load_attributions(path: impl AsRef<Path>) -> Result<(Vec<ShapleyVector>, GlobalAttribution), AttributeError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut vectors = Vec::new();
    let mut global = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| AttributeError::Malformed { line: i + 1, message };
        if global.is_some() {
            return Err(malformed("record after the global summary".into()));
        }
        let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        if value.get("global").is_some() {
            let g: GlobalRecord = serde_json::from_value(value).map_err(|e| malformed(e.to_string()))?;
            global = Some(g.global);
            continue;
        }
        let rec: CaseRecord = serde_json::from_value(value).map_err(|e| malformed(e.to_string()))?;
        let phi = rec
            .judge_ids
            .iter()
            .map(|j| rec.phi.get(j).and_then(|v| v.as_f64()).ok_or_else(|| malformed(format!("no phi for {j}"))))
            .collect::<Result<Vec<f64>, _>>()?;
        vectors.push(ShapleyVector {
            case_id: rec.case_id,
            judge_ids: rec.judge_ids,
            phi,
            baseline: rec.baseline,
            prediction: rec.prediction,
        });
    }
    let global = global.ok_or_else(|| AttributeError::Malformed {
        line: 0,
        message: "missing global summary".into(),
    })?;
    Ok((vectors, global))
}
