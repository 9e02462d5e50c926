use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ClinicalCase, CorpusError, Label};

/// Development/test partition of a corpus, by case id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub seed: u64,
    pub ratio: f64,
    pub development: Vec<String>,
    pub test: Vec<String>,
}

impl CorpusSplit {
    pub fn is_development(&self, case_id: &str) -> bool {
        self.development.iter().any(|c| c == case_id)
    }
}

/// `round(ratio * n)` with halves rounded up.
pub(crate) fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

fn strata(cases: &[ClinicalCase]) -> (Vec<&ClinicalCase>, Vec<&ClinicalCase>) {
    cases.iter().partition(|c| c.label.is_rare())
}

/// Stratified random partition on the binary label.
///
/// Seed discipline: one `ChaCha8Rng::seed_from_u64(seed)` stream shuffles the
/// rare stratum (in corpus order) and then the non-rare stratum. The first
/// `round_half_up(ratio * |stratum|)` shuffled ids of each stratum form the
/// development set.
pub fn stratified_split(
    cases: &[ClinicalCase],
    ratio: f64,
    seed: u64,
) -> Result<CorpusSplit, CorpusError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(CorpusError::BadRatio(ratio));
    }
    let (rare, nonrare) = strata(cases);
    if rare.is_empty() {
        return Err(CorpusError::EmptyStratum(Label::Rare));
    }
    if nonrare.is_empty() {
        return Err(CorpusError::EmptyStratum(Label::NonRare));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut development = Vec::new();
    let mut test = Vec::new();
    for stratum in [rare, nonrare] {
        let mut ids: Vec<&str> = stratum.iter().map(|c| c.case_id.as_str()).collect();
        ids.shuffle(&mut rng);
        let n_dev = round_half_up(ratio * ids.len() as f64).min(ids.len());
        development.extend(ids[..n_dev].iter().map(|s| s.to_string()));
        test.extend(ids[n_dev..].iter().map(|s| s.to_string()));
    }
    Ok(CorpusSplit {
        seed,
        ratio,
        development,
        test,
    })
}

/// Draws `n_total` cases without replacement with a fixed non-rare:rare ratio
/// (e.g. `3.0` for 3:1). The rare count is `round_half_up(n_total / (1 + ratio))`.
/// Output keeps corpus order.
pub fn stratified_sample(
    cases: &[ClinicalCase],
    n_total: usize,
    nonrare_to_rare: f64,
    seed: u64,
) -> Result<Vec<ClinicalCase>, CorpusError> {
    if !(nonrare_to_rare >= 0.0) || !nonrare_to_rare.is_finite() {
        return Err(CorpusError::BadRatio(nonrare_to_rare));
    }
    let n_rare = round_half_up(n_total as f64 / (1.0 + nonrare_to_rare)).min(n_total);
    let n_nonrare = n_total - n_rare;
    let (rare, nonrare) = strata(cases);
    for (stratum, pool, required) in [
        (Label::Rare, &rare, n_rare),
        (Label::NonRare, &nonrare, n_nonrare),
    ] {
        if pool.len() < required {
            return Err(CorpusError::Shortfall {
                stratum,
                available: pool.len(),
                required,
                shortfall: required - pool.len(),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = std::collections::HashSet::new();
    for (pool, required) in [(rare, n_rare), (nonrare, n_nonrare)] {
        let mut ids: Vec<&str> = pool.iter().map(|c| c.case_id.as_str()).collect();
        ids.shuffle(&mut rng);
        chosen.extend(ids.into_iter().take(required));
    }
    Ok(cases
        .iter()
        .filter(|c| chosen.contains(c.case_id.as_str()))
        .cloned()
        .collect())
}
