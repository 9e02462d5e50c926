use std::fmt::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::RiskAssessment;
use crate::corpus::ClinicalCase;

pub const SYSTEM_PROMPT: &str = "You are an experienced physician screening primary-visit records for rare disease risk. \
Answer only with a single JSON object in the requested format.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    /// Score only, no explanation.
    Direct,
    /// Score plus five weighted features, their rationale and an overall explanation.
    #[default]
    ChainOfThought,
}

impl Template {
    pub fn id(self) -> &'static str {
        match self {
            Template::Direct => "direct",
            Template::ChainOfThought => "chain_of_thought",
        }
    }
}

impl FromStr for Template {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct" => Ok(Template::Direct),
            "chain_of_thought" => Ok(Template::ChainOfThought),
            other => Err(format!("unknown template id {other:?} (expected direct or chain_of_thought)")),
        }
    }
}

fn case_block(case: &ClinicalCase) -> String {
    format!(
        "Patient demographics:\n{}\n\nMedical history:\n{}\n\nPhysical examination:\n{}\n",
        case.demographics, case.history, case.physical_exam
    )
}

const COT_SCHEMA: &str = r#"{
  "risk_score": <integer from 0 to 100>,
  "features": [
    {"name": "<patient feature>", "weight": <number>},
    ... exactly five entries ...
  ],
  "feature_rationale": "<why these features and weights were chosen>",
  "explanation": "<overall clinical explanation of the risk score>"
}"#;

/// Builds the user-turn prompt for one case.
pub fn build_prompt(case: &ClinicalCase, template_id: &str) -> Result<String, String> {
    let template: Template = template_id.parse()?;
    let mut out = String::from(
        "Assess the risk that the following patient has a rare disease, using only the primary-visit information below.\n\n",
    );
    out.push_str(&case_block(case));
    out.push('\n');
    match template {
        Template::Direct => {
            out.push_str(
                "Output only a rare disease risk score without explanation, as an integer from 0 (no rare disease risk) \
to 100 (certain rare disease). Respond with JSON: {\"risk_score\": <integer from 0 to 100>}\n",
            );
        }
        Template::ChainOfThought => {
            out.push_str(
                "Reason step by step. Output a rare disease risk score as an integer from 0 (no rare disease risk) to 100 \
(certain rare disease). Identify the five key patient features (symptoms, examination findings or history elements) \
that drove the score and give each a weight; the weights must sum to 1 and the most influential feature must carry \
the highest weight and be listed first. Explain the feature selection and weights, then give an overall clinical \
explanation of the score.\n\nRespond with JSON in exactly this format:\n",
            );
            out.push_str(COT_SCHEMA);
            out.push('\n');
        }
    }
    Ok(out)
}

fn assessment_block(out: &mut String, label: &str, a: &RiskAssessment) {
    let _ = writeln!(out, "[{label}] risk_score: {}", a.risk_score);
    for f in &a.features {
        let _ = writeln!(out, "  - {} (weight {:.3})", f.name, f.weight);
    }
    let _ = writeln!(out, "  feature rationale: {}", a.feature_rationale);
    let _ = writeln!(out, "  explanation: {}", a.explanation);
}

/// Discussion-round prompt for one agent: the case, the agent's previous
/// assessment and every peer's previous assessment.
pub fn build_revision_prompt(
    case: &ClinicalCase,
    round: usize,
    own: &RiskAssessment,
    peers: &[RiskAssessment],
) -> String {
    let mut out = format!(
        "You are one of several physicians discussing this case to reach a consensus rare disease risk score (round {round}).\n\n"
    );
    out.push_str(&case_block(case));
    out.push_str("\nYour previous assessment:\n");
    assessment_block(&mut out, "you", own);
    out.push_str("\nYour colleagues' previous assessments:\n");
    for (i, p) in peers.iter().enumerate() {
        assessment_block(&mut out, &format!("colleague {}", i + 1), p);
    }
    out.push_str(
        "\nConsider your colleagues' arguments and revise your assessment if they convince you. \
Respond with JSON in exactly this format:\n",
    );
    out.push_str(COT_SCHEMA);
    out.push('\n');
    out
}

/// Prompt for the analysis judge that groups the judges' reasoning into chains.
pub fn build_cluster_prompt(case: &ClinicalCase, assessments: &[RiskAssessment]) -> String {
    let mut out = String::from(
        "Below are rare disease risk assessments of one patient produced by different models. Group the models into \
distinct reasoning chains according to the structure of their reasoning rather than its wording. Chains are distinct \
when they differ in diagnostic focus, causal logic, feature prioritization, diagnostic style, or the scope and \
certainty of their conclusions. Summarize each chain's core logic and list its member models. Every model must \
belong to exactly one chain.\n\n",
    );
    out.push_str(&case_block(case));
    out.push('\n');
    for a in assessments {
        assessment_block(&mut out, &a.judge_id, a);
    }
    out.push_str(
        "\nRespond with JSON: {\"chains\": [{\"chain_id\": \"<id>\", \"summary\": \"<core logic>\", \
\"members\": [\"<model id>\", ...]}, ...]}\n",
    );
    out
}
