//! Deterministic stand-in judges.
//!
//! A mock's score is
//! `clamp(round(base + bias + noise_sd * z), 0, 100)` with
//! `base = 50 + 40 * label_leak` for rare cases and `50 - 40 * label_leak`
//! otherwise, and `z` a standard normal draw keyed on
//! `(seed, judge identity, case_id)`. At positive temperature an extra
//! `10 * temperature * z'` term keyed on the run index is added, so repeated
//! runs only diverge when temperature is above zero.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::json;

use super::{MockParams, RiskAssessment, FEATURE_COUNT};
use crate::corpus::synth::narrative_tokens;
use crate::corpus::{ClinicalCase, SIGNAL_PREFIX};
use crate::fingerprint::stable_u64;

const STOPWORDS: &[&str] = &["reports", "examination", "notes", "with", "since", "from", "that", "this", "and"];

fn rng_for(seed: u64, parts: &[&str]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stable_u64(seed, parts))
}

fn gaussian(seed: u64, parts: &[&str]) -> f64 {
    rng_for(seed, parts).sample(StandardNormal)
}

pub(crate) fn mock_score(params: &MockParams, case: &ClinicalCase, identity: &str, temperature: f64, run: u32) -> u8 {
    let margin = 40.0 * params.label_leak;
    let base = if case.label.is_rare() { 50.0 + margin } else { 50.0 - margin };
    let mut score = base + params.bias + params.noise_sd * gaussian(params.seed, &[identity, &case.case_id]);
    if temperature > 0.0 {
        let run = run.to_string();
        score += 10.0 * temperature * gaussian(params.seed, &[identity, &case.case_id, "run", &run]);
    }
    score.round().clamp(0.0, 100.0) as u8
}

fn candidate_tokens(case: &ClinicalCase) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for tok in narrative_tokens(case) {
        let lower = tok.to_lowercase();
        if lower.len() < 4 || STOPWORDS.contains(&lower.as_str()) {
            continue;
        }
        if seen.insert(lower.clone()) {
            out.push(lower);
        }
    }
    out
}

/// Five feature names. A judge that "notices" the case's signal tokens
/// (probability `label_leak`) leads with the case's most salient signal token,
/// which is the same for every noticing judge; the rest follow a
/// judge-specific ordering of the narrative tokens.
fn mock_features(params: &MockParams, case: &ClinicalCase, identity: &str) -> Vec<String> {
    let candidates = candidate_tokens(case);
    let mut chosen: Vec<String> = Vec::with_capacity(FEATURE_COUNT);
    let notices = rng_for(params.seed, &[identity, &case.case_id, "notice"]).random_bool(params.label_leak.clamp(0.0, 1.0));
    if notices {
        if let Some(sig) = candidates
            .iter()
            .filter(|t| t.starts_with(SIGNAL_PREFIX))
            .min_by_key(|t| (stable_u64(0, &[&case.case_id, t]), (*t).clone()))
        {
            chosen.push(sig.clone());
        }
    }
    let mut rest: Vec<&String> = candidates.iter().filter(|t| !chosen.contains(t)).collect();
    rest.sort_by_key(|t| (stable_u64(params.seed, &[identity, t]), (*t).clone()));
    for t in rest {
        if chosen.len() == FEATURE_COUNT {
            break;
        }
        chosen.push(t.clone());
    }
    let mut k = 1;
    while chosen.len() < FEATURE_COUNT {
        chosen.push(format!("unremarkable finding {k}"));
        k += 1;
    }
    chosen
}

fn mock_weights(params: &MockParams, case: &ClinicalCase, identity: &str) -> Vec<f64> {
    let mut rng = rng_for(params.seed, &[identity, &case.case_id, "weights"]);
    let mut raw: Vec<u32> = (0..FEATURE_COUNT).map(|_| rng.random_range(1..=9)).collect();
    raw.sort_unstable_by(|a, b| b.cmp(a));
    let total: u32 = raw.iter().sum();
    raw.into_iter().map(|w| w as f64 / total as f64).collect()
}

fn render(score: u8, names: &[String], weights: &[f64], identity: &str) -> String {
    let features: Vec<_> = names
        .iter()
        .zip(weights)
        .map(|(n, w)| json!({"name": n, "weight": w}))
        .collect();
    json!({
        "risk_score": score,
        "features": features,
        "feature_rationale": format!("{identity} weighted {} most heavily among the presenting findings.", names[0]),
        "explanation": format!("{identity} assigns a rare disease risk of {score} driven chiefly by {}.", names[0]),
    })
    .to_string()
}

pub(crate) fn respond(params: &MockParams, case: &ClinicalCase, identity: &str, temperature: f64, run: u32) -> String {
    if params.fail_cases.iter().any(|c| c == &case.case_id) {
        return "mock failure: no structured output".into();
    }
    let score = mock_score(params, case, identity, temperature, run);
    let names = mock_features(params, case, identity);
    let weights = mock_weights(params, case, identity);
    render(score, &names, &weights, identity)
}

/// Chain-of-thought response of a mock judge at temperature 0.
pub fn mock_judge_respond(params: &MockParams, case: &ClinicalCase, judge_id: &str) -> String {
    respond(params, case, judge_id, 0.0, 0)
}

/// Discussion-round answer: move `revision_rate` of the way toward the peers'
/// mean score, keeping the agent's own features.
pub fn mock_revise_respond(params: &MockParams, own: &RiskAssessment, peers: &[RiskAssessment]) -> String {
    let score = if peers.is_empty() {
        own.risk_score
    } else {
        let mean = peers.iter().map(|p| p.risk_score as f64).sum::<f64>() / peers.len() as f64;
        let own_score = own.risk_score as f64;
        (own_score + params.revision_rate * (mean - own_score)).round().clamp(0.0, 100.0) as u8
    };
    let features: Vec<_> = own
        .features
        .iter()
        .map(|f| json!({"name": f.name, "weight": f.weight}))
        .collect();
    json!({
        "risk_score": score,
        "features": features,
        "feature_rationale": own.feature_rationale,
        "explanation": format!("After discussion: {}", own.explanation),
    })
    .to_string()
}

/// Mock analysis judge: one chain per distinct top-weighted feature name,
/// chains ordered by first appearance.
pub fn mock_cluster_respond(assessments: &[RiskAssessment]) -> String {
    let mut chains: Vec<(String, Vec<String>)> = Vec::new();
    for a in assessments {
        let top = a.top_feature().to_string();
        match chains.iter_mut().find(|(t, _)| *t == top) {
            Some((_, members)) => members.push(a.judge_id.clone()),
            None => chains.push((top, vec![a.judge_id.clone()])),
        }
    }
    let chains: Vec<_> = chains
        .into_iter()
        .enumerate()
        .map(|(i, (top, members))| {
            json!({
                "chain_id": format!("chain-{}", i + 1),
                "summary": format!("reasoning anchored on {top}"),
                "members": members,
            })
        })
        .collect();
    json!({ "chains": chains }).to_string()
}
