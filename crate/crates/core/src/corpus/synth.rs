use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ClinicalCase, CorpusError, Label};

/// Prefix of the tokens that only ever appear in rare-case narratives.
pub const SIGNAL_PREFIX: &str = "marker-";

const SIGNAL_VOCAB: usize = 24;
const HISTORY_TOKENS: usize = 20;
const EXAM_TOKENS: usize = 12;

const CATEGORIES: &[(&str, &str)] = &[
    ("neurological", "neurology"),
    ("metabolic", "endocrinology"),
    ("hematologic", "hematology"),
    ("immunologic", "immunology"),
    ("cardiovascular", "cardiology"),
    ("renal", "nephrology"),
    ("musculoskeletal", "rheumatology"),
    ("dermatologic", "dermatology"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticCorpusConfig {
    pub n_rare: usize,
    pub n_nonrare: usize,
    pub seed: u64,
    pub narrative_vocab_size: usize,
    /// Per-token probability that a rare narrative token is a signal token.
    #[serde(default = "default_signal_fraction")]
    pub signal_fraction: f64,
}

fn default_signal_fraction() -> f64 {
    0.25
}

impl Default for SyntheticCorpusConfig {
    fn default() -> Self {
        Self {
            n_rare: 500,
            n_nonrare: 1500,
            seed: 42,
            narrative_vocab_size: 400,
            signal_fraction: default_signal_fraction(),
        }
    }
}

impl SyntheticCorpusConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.n_rare + self.n_nonrare == 0 {
            return Err(CorpusError::BadConfig("corpus must hold at least one case".into()));
        }
        if self.narrative_vocab_size == 0 {
            return Err(CorpusError::BadConfig("narrative_vocab_size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.signal_fraction) {
            return Err(CorpusError::BadConfig(format!(
                "signal_fraction must lie in [0, 1], got {}",
                self.signal_fraction
            )));
        }
        Ok(())
    }
}

/// Number of signal tokens in a case's history and examination text.
pub fn signal_token_count(case: &ClinicalCase) -> usize {
    narrative_tokens(case)
        .filter(|t| t.starts_with(SIGNAL_PREFIX))
        .count()
}

pub(crate) fn narrative_tokens(case: &ClinicalCase) -> impl Iterator<Item = &str> {
    case.history
        .split(|c: char| !(c.is_alphanumeric() || c == '-'))
        .chain(
            case.physical_exam
                .split(|c: char| !(c.is_alphanumeric() || c == '-')),
        )
        .filter(|t| !t.is_empty())
}

fn token_block(rng: &mut ChaCha8Rng, n: usize, rare: bool, cfg: &SyntheticCorpusConfig) -> Vec<String> {
    (0..n)
        .map(|_| {
            if rare && rng.random_bool(cfg.signal_fraction) {
                format!("{SIGNAL_PREFIX}{:02}", rng.random_range(0..SIGNAL_VOCAB))
            } else {
                format!("term-{:04}", rng.random_range(0..cfg.narrative_vocab_size))
            }
        })
        .collect()
}

/// Deterministic synthetic corpus. Labels are shuffled so the file is not
/// sorted by class; ids are `case-00001`, `case-00002`, ... in output order.
/// Every rare narrative carries at least one signal token.
pub fn generate_synthetic_corpus(
    config: &SyntheticCorpusConfig,
) -> Result<Vec<ClinicalCase>, CorpusError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut labels: Vec<Label> = std::iter::repeat_n(Label::Rare, config.n_rare)
        .chain(std::iter::repeat_n(Label::NonRare, config.n_nonrare))
        .collect();
    labels.shuffle(&mut rng);

    let mut cases = Vec::with_capacity(labels.len());
    for (i, label) in labels.into_iter().enumerate() {
        let rare = label.is_rare();
        let age = rng.random_range(1..90u32);
        let sex = *["female", "male"].choose(&mut rng).unwrap();
        let mut history = token_block(&mut rng, HISTORY_TOKENS, rare, config);
        let exam = token_block(&mut rng, EXAM_TOKENS, rare, config);
        if rare && !history.iter().chain(&exam).any(|t| t.starts_with(SIGNAL_PREFIX)) {
            history[0] = format!("{SIGNAL_PREFIX}{:02}", rng.random_range(0..SIGNAL_VOCAB));
        }
        let (category, specialty) = if rare {
            let (c, s) = CATEGORIES.choose(&mut rng).unwrap();
            (Some(c.to_string()), Some(s.to_string()))
        } else {
            (None, None)
        };
        cases.push(ClinicalCase {
            case_id: format!("case-{:05}", i + 1),
            demographics: format!("{age}-year-old {sex}"),
            history: format!("Reports {}.", history.join(", ")),
            physical_exam: format!("Examination notes {}.", exam.join(", ")),
            label,
            category,
            specialty,
        });
    }
    Ok(cases)
}
