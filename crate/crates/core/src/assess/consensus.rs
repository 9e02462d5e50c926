//! Multi-agent discussion baseline: several agents backed by one judge
//! configuration assess a case, then revise in rounds while seeing each
//! other's previous assessments, until they agree or the round cap is hit.

use super::backend::{ChatMessage, JudgeRequest, Task};
use super::prompt::{build_revision_prompt, SYSTEM_PROMPT};
use super::{parse_assessment, AssessError, Judge, RiskAssessment};
use crate::corpus::ClinicalCase;

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusOutcome {
    pub assessment: RiskAssessment,
    /// Rounds run, counting the initial independent assessments as round 1.
    pub rounds: usize,
    pub final_scores: Vec<u8>,
    pub unanimous: bool,
}

pub fn agent_identity(judge_id: &str, agent: usize) -> String {
    format!("{judge_id}#agent{}", agent + 1)
}

/// Consensus score = mean of the final-round scores, rounded half away from zero.
///
/// `Ok(Err(reason))` means an agent failed permanently and the case is missing.
pub fn multi_agent_consensus(
    judge: &Judge,
    case: &ClinicalCase,
    n_agents: usize,
    max_rounds: usize,
) -> Result<Result<ConsensusOutcome, String>, AssessError> {
    if n_agents < 2 {
        return Err(AssessError::Precondition(format!("multi-agent discussion needs at least 2 agents, got {n_agents}")));
    }
    if max_rounds < 1 {
        return Err(AssessError::Precondition("max_rounds must be at least 1".into()));
    }
    let identities: Vec<String> = (0..n_agents).map(|k| agent_identity(judge.id(), k)).collect();
    let mut current = Vec::with_capacity(n_agents);
    for id in &identities {
        match judge.assess_as(case, id, 0) {
            Ok(a) => current.push(a),
            Err(reason) => return Ok(Err(format!("{id}: {reason}"))),
        }
    }
    let mut rounds = 1;
    let unanimous = |v: &[RiskAssessment]| v.iter().all(|a| a.risk_score == v[0].risk_score);
    while !unanimous(&current) && rounds < max_rounds {
        rounds += 1;
        let mut next = Vec::with_capacity(n_agents);
        for (k, id) in identities.iter().enumerate() {
            let own = &current[k];
            let peers: Vec<RiskAssessment> = current
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != k)
                .map(|(_, a)| a.clone())
                .collect();
            let request = JudgeRequest {
                judge: &judge.config,
                identity: id,
                run: 0,
                messages: vec![
                    ChatMessage::system(SYSTEM_PROMPT),
                    ChatMessage::user(build_revision_prompt(case, rounds, own, &peers)),
                ],
                task: Task::Revise {
                    case,
                    own,
                    peers: &peers,
                },
            };
            let revised = judge.with_retries(|| {
                let raw = judge.request_text(&request)?;
                parse_assessment(&raw, id, &case.case_id).map_err(|e| e.to_string())
            });
            match revised {
                Ok(a) => next.push(a),
                Err(reason) => return Ok(Err(format!("{id}: {reason}"))),
            }
        }
        current = next;
    }
    let final_scores: Vec<u8> = current.iter().map(|a| a.risk_score).collect();
    let mean = final_scores.iter().map(|&s| s as f64).sum::<f64>() / n_agents as f64;
    let score = mean.round().clamp(0.0, 100.0) as u8;
    let lead = &current[0];
    let assessment = RiskAssessment {
        judge_id: format!("{}:multi_agent", judge.id()),
        case_id: case.case_id.clone(),
        risk_score: score,
        features: lead.features.clone(),
        feature_rationale: lead.feature_rationale.clone(),
        explanation: format!(
            "Consensus of {n_agents} agents after {rounds} round(s); final scores {final_scores:?}. {}",
            lead.explanation
        ),
    };
    Ok(Ok(ConsensusOutcome {
        assessment,
        rounds,
        unanimous: unanimous(&current),
        final_scores,
    }))
}
