use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::assess::{build_cluster_prompt, extract_json, ChatMessage, Judge, JudgeRequest, RiskAssessment, Task, SYSTEM_PROMPT};
use crate::corpus::{ClinicalCase, Label};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chain {
    pub chain_id: String,
    pub summary: String,
    pub members: Vec<String>,
}

/// Partition of one case's judges into reasoning chains.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainAssignment {
    pub case_id: String,
    pub chains: Vec<Chain>,
}

impl ChainAssignment {
    /// Index of the chain containing `judge`.
    pub fn chain_of(&self, judge: &str) -> Option<usize> {
        self.chains.iter().position(|c| c.members.iter().any(|m| m == judge))
    }
}

/// Checks that `chains` is a partition of `judges`: no empty chain, no judge
/// twice, nobody left out, nobody extra.
pub fn validate_partition(chains: &[Chain], judges: &[&str]) -> Result<(), String> {
    if chains.is_empty() {
        return Err("no chains".into());
    }
    let expected: BTreeSet<&str> = judges.iter().copied().collect();
    let mut seen = BTreeSet::new();
    for c in chains {
        if c.members.is_empty() {
            return Err(format!("chain {} has no members", c.chain_id));
        }
        for m in &c.members {
            if !expected.contains(m.as_str()) {
                return Err(format!("chain {} names unknown judge {m}", c.chain_id));
            }
            if !seen.insert(m.as_str()) {
                return Err(format!("judge {m} appears in more than one chain"));
            }
        }
    }
    if let Some(missing) = expected.difference(&seen).next() {
        return Err(format!("judge {missing} is not assigned to a chain"));
    }
    Ok(())
}

#[derive(Deserialize)]
struct ChainResponse {
    chains: Vec<Chain>,
}

/// Asks the analysis judge to group `assessments` into reasoning chains,
/// retrying on malformed or invalid partitions. `Err` carries the reason the
/// case ends up without an assignment.
pub fn cluster_reasoning(
    case: &ClinicalCase,
    assessments: &[RiskAssessment],
    analysis_judge: &Judge,
) -> Result<ChainAssignment, String> {
    if assessments.is_empty() {
        return Err("no ok assessments to cluster".into());
    }
    let judges: Vec<&str> = assessments.iter().map(|a| a.judge_id.as_str()).collect();
    let request = JudgeRequest {
        judge: &analysis_judge.config,
        identity: analysis_judge.id(),
        run: 0,
        messages: vec![
            ChatMessage::system(SYSTEM_PROMPT),
            ChatMessage::user(build_cluster_prompt(case, assessments)),
        ],
        task: Task::Cluster { case, assessments },
    };
    analysis_judge.with_retries(|| {
        let raw = analysis_judge.request_text(&request)?;
        let value = extract_json(&raw).map_err(|e| e.to_string())?;
        let parsed: ChainResponse = serde_json::from_value(value).map_err(|e| format!("invalid chain record: {e}"))?;
        validate_partition(&parsed.chains, &judges)?;
        Ok(ChainAssignment {
            case_id: case.case_id.clone(),
            chains: parsed.chains,
        })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    pub n_cases: usize,
    pub mean: f64,
    /// Sample standard deviation; absent for a single case.
    pub sd: Option<f64>,
    /// Chains per case -> fraction of cases.
    pub distribution: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub judge_ids: Vec<String>,
    pub chains_per_case: BTreeMap<Label, ChainStats>,
    /// Fraction of co-present cases where two judges share a chain; `None`
    /// when the pair never appears together.
    pub p_same: Vec<Vec<Option<f64>>>,
    /// Mean size of the judge's own chain over the cases it appears in.
    pub consensus_score: Vec<Option<f64>>,
}

fn chain_stats(counts: &[usize]) -> ChainStats {
    let n = counts.len();
    let mean = counts.iter().sum::<usize>() as f64 / n as f64;
    let sd = (n > 1).then(|| {
        let ss: f64 = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt()
    });
    let mut hist: BTreeMap<usize, usize> = BTreeMap::new();
    for &c in counts {
        *hist.entry(c).or_default() += 1;
    }
    ChainStats {
        n_cases: n,
        mean,
        sd,
        distribution: hist.into_iter().map(|(k, v)| (k, v as f64 / n as f64)).collect(),
    }
}

/// Chains-per-case statistics per label, pairwise co-occurrence and
/// consensus scores. Assignments for cases missing from `labels` are ignored.
pub fn diversity_metrics(
    assignments: &[ChainAssignment],
    labels: &BTreeMap<String, Label>,
    judge_ids: &[String],
) -> Result<DiversityReport, MetricsError> {
    if assignments.is_empty() {
        return Err(MetricsError::Precondition("no chain assignments".into()));
    }
    let d = judge_ids.len();
    let mut per_label: BTreeMap<Label, Vec<usize>> = BTreeMap::new();
    let mut together = vec![vec![0usize; d]; d];
    let mut co_present = vec![vec![0usize; d]; d];
    let mut chain_size_sum = vec![0usize; d];
    let mut present = vec![0usize; d];
    for a in assignments {
        let Some(label) = labels.get(&a.case_id) else { continue };
        per_label.entry(*label).or_default().push(a.chains.len());
        let idx: Vec<Option<usize>> = judge_ids.iter().map(|j| a.chain_of(j)).collect();
        for i in 0..d {
            let Some(ci) = idx[i] else { continue };
            present[i] += 1;
            chain_size_sum[i] += a.chains[ci].members.len();
            for j in 0..d {
                if let Some(cj) = idx[j] {
                    co_present[i][j] += 1;
                    together[i][j] += usize::from(ci == cj);
                }
            }
        }
    }
    if per_label.is_empty() {
        return Err(MetricsError::Precondition("no labelled chain assignments".into()));
    }
    let p_same = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| (co_present[i][j] > 0).then(|| together[i][j] as f64 / co_present[i][j] as f64))
                .collect()
        })
        .collect();
    let consensus_score = (0..d)
        .map(|i| (present[i] > 0).then(|| chain_size_sum[i] as f64 / present[i] as f64))
        .collect();
    Ok(DiversityReport {
        judge_ids: judge_ids.to_vec(),
        chains_per_case: per_label.iter().map(|(l, c)| (*l, chain_stats(c))).collect(),
        p_same,
        consensus_score,
    })
}
