use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Feature, RiskAssessment};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("entry for case {case_id} / judge {judge_id} already written")]
    AlreadyWritten { case_id: String, judge_id: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum StoreEntry {
    Ok(RiskAssessment),
    Missing { reason: String },
}

impl StoreEntry {
    pub fn assessment(&self) -> Option<&RiskAssessment> {
        match self {
            StoreEntry::Ok(a) => Some(a),
            StoreEntry::Missing { .. } => None,
        }
    }
}

/// On-disk shape of one store entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreRecord {
    pub judge_id: String,
    pub case_id: String,
    pub risk_score: Option<u8>,
    pub features: Vec<Feature>,
    pub feature_rationale: String,
    pub explanation: String,
    pub status: RecordStatus,
    pub failure_reason: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Ok,
    Missing,
}

/// Write-once map `(case_id, judge_id) -> entry`, iterated in key order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AssessmentStore {
    entries: BTreeMap<(String, String), StoreEntry>,
}

impl AssessmentStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, case_id: &str, judge_id: &str) -> bool {
        self.entries.contains_key(&(case_id.to_string(), judge_id.to_string()))
    }

    pub fn get(&self, case_id: &str, judge_id: &str) -> Option<&StoreEntry> {
        self.entries.get(&(case_id.to_string(), judge_id.to_string()))
    }

    pub fn assessment(&self, case_id: &str, judge_id: &str) -> Option<&RiskAssessment> {
        self.get(case_id, judge_id).and_then(StoreEntry::assessment)
    }

    pub fn insert(&mut self, case_id: &str, judge_id: &str, entry: StoreEntry) -> Result<(), StoreError> {
        let key = (case_id.to_string(), judge_id.to_string());
        if self.entries.contains_key(&key) {
            return Err(StoreError::AlreadyWritten {
                case_id: key.0,
                judge_id: key.1,
            });
        }
        self.entries.insert(key, entry);
        Ok(())
    }

    /// `((case_id, judge_id), entry)` in key order.
    pub fn iter(&self) -> impl Iterator<Item = (&(String, String), &StoreEntry)> {
        self.entries.iter()
    }

    /// All entries for one case, in judge-id order.
    pub fn for_case<'a>(&'a self, case_id: &'a str) -> impl Iterator<Item = (&'a str, &'a StoreEntry)> + 'a {
        self.entries
            .range((case_id.to_string(), String::new())..)
            .take_while(move |((c, _), _)| c == case_id)
            .map(|((_, j), e)| (j.as_str(), e))
    }

    pub fn missing_count(&self) -> usize {
        self.entries
            .values()
            .filter(|e| matches!(e, StoreEntry::Missing { .. }))
            .count()
    }

    pub fn to_records(&self) -> Vec<StoreRecord> {
        self.entries
            .iter()
            .map(|((case_id, judge_id), entry)| match entry {
                StoreEntry::Ok(a) => StoreRecord {
                    judge_id: judge_id.clone(),
                    case_id: case_id.clone(),
                    risk_score: Some(a.risk_score),
                    features: a.features.clone(),
                    feature_rationale: a.feature_rationale.clone(),
                    explanation: a.explanation.clone(),
                    status: RecordStatus::Ok,
                    failure_reason: None,
                },
                StoreEntry::Missing { reason } => StoreRecord {
                    judge_id: judge_id.clone(),
                    case_id: case_id.clone(),
                    risk_score: None,
                    features: Vec::new(),
                    feature_rationale: String::new(),
                    explanation: String::new(),
                    status: RecordStatus::Missing,
                    failure_reason: Some(reason.clone()),
                },
            })
            .collect()
    }

    pub fn write<W: Write>(&self, mut out: W) -> io::Result<()> {
        for rec in self.to_records() {
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> io::Result<()> {
        self.write(BufWriter::new(File::create(path)?))
    }

    /// Loads a store file, re-validating every ok record.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let mut store = Self::new();
        for (idx, line) in BufReader::new(File::open(path)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |message: String| StoreError::Malformed { line: idx + 1, message };
            let rec: StoreRecord = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
            let entry = match rec.status {
                RecordStatus::Ok => {
                    let a = RiskAssessment {
                        judge_id: rec.judge_id.clone(),
                        case_id: rec.case_id.clone(),
                        risk_score: rec.risk_score.ok_or_else(|| malformed("ok record without risk_score".into()))?,
                        features: rec.features,
                        feature_rationale: rec.feature_rationale,
                        explanation: rec.explanation,
                    };
                    a.validate().map_err(malformed)?;
                    StoreEntry::Ok(a)
                }
                RecordStatus::Missing => StoreEntry::Missing {
                    reason: rec.failure_reason.unwrap_or_default(),
                },
            };
            store.insert(&rec.case_id, &rec.judge_id, entry)?;
        }
        Ok(store)
    }
}
