//! Case collections: the record type, line-delimited persistence, stratified
//! partitioning and the synthetic corpus generator.

mod split;
pub(crate) mod synth;

pub use split::{stratified_sample, stratified_split, CorpusSplit};
pub use synth::{generate_synthetic_corpus, signal_token_count, SyntheticCorpusConfig, SIGNAL_PREFIX};

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: invalid case: {reason}")]
    Invalid { line: usize, reason: String },
    #[error("duplicate case_id {case_id:?} on lines {first_line} and {second_line}")]
    Duplicate {
        case_id: String,
        first_line: usize,
        second_line: usize,
    },
    #[error("stratum {0} is empty; stratification impossible")]
    EmptyStratum(Label),
    #[error("ratio must lie strictly between 0 and 1, got {0}")]
    BadRatio(f64),
    #[error("stratum {stratum} has {available} cases but {required} were requested (short by {shortfall})")]
    Shortfall {
        stratum: Label,
        available: usize,
        required: usize,
        shortfall: usize,
    },
    #[error("invalid synthetic corpus config: {0}")]
    BadConfig(String),
}

/// Binary outcome: rare disease (1) or not (0). Serialized as the integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    NonRare,
    Rare,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::NonRare => 0,
            Label::Rare => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Label::NonRare),
            1 => Some(Label::Rare),
            _ => None,
        }
    }

    pub fn is_rare(self) -> bool {
        self == Label::Rare
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::NonRare => write!(f, "non_rare"),
            Label::Rare => write!(f, "rare"),
        }
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.as_u8())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = u64::deserialize(d)?;
        u8::try_from(v)
            .ok()
            .and_then(Label::from_u8)
            .ok_or_else(|| serde::de::Error::custom(format!("label must be 0 or 1, got {v}")))
    }
}

/// One patient record at the primary visit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClinicalCase {
    pub case_id: String,
    pub demographics: String,
    pub history: String,
    pub physical_exam: String,
    pub label: Label,
    #[serde(default)]
    pub category: Option<String>,
    #[serde(default)]
    pub specialty: Option<String>,
}

impl ClinicalCase {
    pub fn validate(&self) -> Result<(), String> {
        if self.case_id.trim().is_empty() {
            return Err("case_id is empty".into());
        }
        for (name, value) in [
            ("demographics", &self.demographics),
            ("history", &self.history),
            ("physical_exam", &self.physical_exam),
        ] {
            if value.trim().is_empty() {
                return Err(format!("{name} is empty"));
            }
        }
        Ok(())
    }

    /// The primary-visit narrative as one block of text.
    pub fn narrative(&self) -> String {
        format!(
            "Demographics: {}\nMedical history: {}\nPhysical examination: {}",
            self.demographics, self.history, self.physical_exam
        )
    }
}

/// Reads a line-delimited case file. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<ClinicalCase>, CorpusError> {
    let reader = BufReader::new(File::open(path)?);
    let mut cases = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let case: ClinicalCase =
            serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                line: line_no,
                message: e.to_string(),
            })?;
        case.validate()
            .map_err(|reason| CorpusError::Invalid { line: line_no, reason })?;
        if let Some(&first_line) = seen.get(&case.case_id) {
            return Err(CorpusError::Duplicate {
                case_id: case.case_id,
                first_line,
                second_line: line_no,
            });
        }
        seen.insert(case.case_id.clone(), line_no);
        cases.push(case);
    }
    Ok(cases)
}

pub fn write_corpus<W: Write>(cases: &[ClinicalCase], mut out: W) -> io::Result<()> {
    for case in cases {
        serde_json::to_writer(&mut out, case)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn emit_corpus(cases: &[ClinicalCase], path: impl AsRef<Path>) -> io::Result<()> {
    write_corpus(cases, BufWriter::new(File::create(path)?))
}
