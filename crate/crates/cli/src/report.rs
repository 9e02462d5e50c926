//! Plain CSV tables mirroring the development-phase figure panels A to Q.
//! Plotting is left to external tools.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use riskfuse_core::align::{Algorithm, CvResult};
use riskfuse_core::attribute::load_attributions;
use riskfuse_core::corpus::Label;
use riskfuse_core::distill::DistillSummary;
use riskfuse_core::metrics::{score_variability, DiversityReport, VariabilityReport};

use crate::commands::{label_map, load_cases, load_split, load_store, read_jsonl, subset, EvalRow, Layout};
use crate::config::RunConfig;
use crate::error::CliError;

type Source = fn(&Layout) -> PathBuf;

/// Panel file stems with the artifact each needs beyond the assessment store.
pub const PANELS: &[(&str, Option<Source>)] = &[
    ("A_score_distribution", None),
    ("B_score_agreement", None),
    ("C_score_mad", None),
    ("D_unique_scores_per_case", None),
    ("E_score_ranges", None),
    ("F_distinct_scores_per_case", None),
    ("G_chain_cooccurrence", Some(Layout::diversity)),
    ("H_chains_per_case", Some(Layout::diversity)),
    ("I_consensus_score", Some(Layout::diversity)),
    ("J_algorithm_comparison", Some(Layout::stage1)),
    ("K_best_auc_by_judge_count", Some(Layout::stage1)),
    ("L_auc_by_judge_count", Some(Layout::stage1)),
    ("M_normalized_importance", Some(Layout::attribution)),
    ("N_mean_abs_shap", Some(Layout::attribution)),
    ("O_mean_signed_shap", Some(Layout::attribution)),
    ("P_top_n_paths", Some(Layout::distill_summary)),
    ("Q_ensemble_comparison", Some(Layout::evaluation)),
];

pub fn panel_source(name: &str) -> Option<Source> {
    PANELS.iter().find(|(n, _)| *n == name).and_then(|(_, s)| *s)
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn save(&self, path: &Path) -> Result<(), CliError> {
        let io = |e: csv::Error| CliError::Failed(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        w.flush().map_err(|e| CliError::io(path, e))
    }
}

fn pair_table(ids: &[String], m: &[Vec<Option<f64>>], value: &'static str) -> Table {
    let mut t = Table::new(&["judge_a", "judge_b", value]);
    for (a, row) in ids.iter().zip(m) {
        for (b, v) in ids.iter().zip(row) {
            t.push(vec![a.clone(), b.clone(), opt(*v)]);
        }
    }
    t
}

fn label_hist<K: ToString>(h: &BTreeMap<Label, BTreeMap<K, f64>>, key: &'static str) -> Table {
    let mut t = Table::new(&["label", key, "fraction"]);
    for (label, bins) in h {
        for (k, f) in bins {
            t.push(vec![label.to_string(), k.to_string(), num(*f)]);
        }
    }
    t
}

fn variability_tables(
    cfg: &RunConfig,
    lay: &Layout,
    tables: &mut BTreeMap<&'static str, Table>,
) -> Result<(), CliError> {
    let cases = load_cases(cfg)?;
    let dev = subset(&cases, &load_split(cfg)?.development);
    let store = load_store(cfg)?;
    let ids = cfg.judge_ids();
    let labels = label_map(&dev);
    let v: VariabilityReport = score_variability(&store, &ids, &labels).map_err(CliError::failed)?;
    let text = serde_json::to_string_pretty(&v).expect("report serializes");
    std::fs::write(lay.variability(), text + "\n").map_err(|e| CliError::io(&lay.variability(), e))?;

    let mut a = Table::new(&["judge_id", "label", "bin_start", "bin_end", "fraction"]);
    for j in &ids {
        for label in [Label::Rare, Label::NonRare] {
            let scores: Vec<u8> = dev
                .iter()
                .filter(|c| c.label == label)
                .filter_map(|c| store.assessment(&c.case_id, j).map(|x| x.risk_score))
                .collect();
            let mut bins: BTreeMap<u8, usize> = BTreeMap::new();
            for s in &scores {
                *bins.entry(s.min(&99) / 5 * 5).or_default() += 1;
            }
            for (lo, n) in bins {
                let hi = if lo == 95 { 100 } else { lo + 5 };
                a.push(vec![
                    j.clone(),
                    label.to_string(),
                    lo.to_string(),
                    hi.to_string(),
                    num(n as f64 / scores.len() as f64),
                ]);
            }
        }
    }
    tables.insert("A_score_distribution", a);
    tables.insert("B_score_agreement", pair_table(&ids, &v.agreement_matrix, "agreement"));
    tables.insert("C_score_mad", pair_table(&ids, &v.mad_matrix, "mean_abs_difference"));
    tables.insert("D_unique_scores_per_case", label_hist(&v.unique_count_histogram, "n_unique"));
    tables.insert("E_score_ranges", label_hist(&v.score_range_histogram, "bin_start"));
    // The distinct-score panel shows the same quantity as the unique-score panel.
    tables.insert("F_distinct_scores_per_case", label_hist(&v.unique_count_histogram, "n_unique"));
    Ok(())
}

fn diversity_tables(lay: &Layout, tables: &mut BTreeMap<&'static str, Table>) -> Result<(), CliError> {
    let text = std::fs::read_to_string(lay.diversity()).map_err(|e| CliError::io(&lay.diversity(), e))?;
    let d: DiversityReport = serde_json::from_str(&text).map_err(CliError::failed)?;
    tables.insert("G_chain_cooccurrence", pair_table(&d.judge_ids, &d.p_same, "p_same_chain"));
    let mut h = Table::new(&["label", "n_chains", "fraction", "mean", "sd"]);
    for (label, s) in &d.chains_per_case {
        for (k, f) in &s.distribution {
            h.push(vec![label.to_string(), k.to_string(), num(*f), num(s.mean), opt(s.sd)]);
        }
    }
    tables.insert("H_chains_per_case", h);
    let mut i = Table::new(&["judge_id", "consensus_score"]);
    for (j, c) in d.judge_ids.iter().zip(&d.consensus_score) {
        i.push(vec![j.clone(), opt(*c)]);
    }
    tables.insert("I_consensus_score", i);
    Ok(())
}

fn alignment_tables(lay: &Layout, tables: &mut BTreeMap<&'static str, Table>) -> Result<(), CliError> {
    let stage1: Vec<CvResult> = read_jsonl(&lay.stage1())?;
    let name = |a: Algorithm| match a {
        Algorithm::Logistic => "logistic",
        Algorithm::Gbdt => "gbdt",
    };
    let mut best_by_alg: BTreeMap<Algorithm, &CvResult> = BTreeMap::new();
    let mut best_by_size: BTreeMap<(usize, Algorithm), f64> = BTreeMap::new();
    let mut l = Table::new(&["n_judges", "algorithm", "judges", "mean_auc"]);
    for r in &stage1 {
        let alg = r.spec.algorithm();
        let n = r.spec.judge_subset.len();
        // Results arrive ranked, so the first seen is the best.
        best_by_alg.entry(alg).or_insert(r);
        let e = best_by_size.entry((n, alg)).or_insert(f64::NEG_INFINITY);
        *e = e.max(r.mean_auc);
        l.push(vec![n.to_string(), name(alg).into(), r.spec.judge_subset.join(";"), num(r.mean_auc)]);
    }
    let mut j = Table::new(&["algorithm", "best_mean_auc", "n_judges"]);
    for (alg, r) in &best_by_alg {
        j.push(vec![name(*alg).into(), num(r.mean_auc), r.spec.judge_subset.len().to_string()]);
    }
    let mut k = Table::new(&["n_judges", "algorithm", "best_mean_auc"]);
    for ((n, alg), auc) in &best_by_size {
        k.push(vec![n.to_string(), name(*alg).into(), num(*auc)]);
    }
    tables.insert("J_algorithm_comparison", j);
    tables.insert("K_best_auc_by_judge_count", k);
    tables.insert("L_auc_by_judge_count", l);
    Ok(())
}

fn attribution_tables(lay: &Layout, tables: &mut BTreeMap<&'static str, Table>) -> Result<(), CliError> {
    let (vectors, g) = load_attributions(lay.attribution()).map_err(CliError::failed)?;
    let mut m = Table::new(&["judge_id", "normalized_importance", "dominant_frequency"]);
    let mut n = Table::new(&["judge_id", "mean_abs_shap"]);
    let mut o = Table::new(&["judge_id", "mean_signed_shap"]);
    for (i, id) in g.judge_ids.iter().enumerate() {
        m.push(vec![id.clone(), num(g.normalized_importance[i]), num(g.dominant_frequency[i])]);
        let mean_abs = vectors.iter().map(|v| v.phi[i].abs()).sum::<f64>() / vectors.len() as f64;
        n.push(vec![id.clone(), num(mean_abs)]);
        o.push(vec![id.clone(), num(g.mean_signed[i])]);
    }
    tables.insert("M_normalized_importance", m);
    tables.insert("N_mean_abs_shap", n);
    tables.insert("O_mean_signed_shap", o);
    Ok(())
}

fn distill_table(lay: &Layout, tables: &mut BTreeMap<&'static str, Table>) -> Result<(), CliError> {
    let text = std::fs::read_to_string(lay.distill_summary()).map_err(|e| CliError::io(&lay.distill_summary(), e))?;
    let s: DistillSummary = serde_json::from_str(&text).map_err(CliError::failed)?;
    // No fine-tuning happens here, so the student AUC column stays empty.
    let mut p = Table::new(&["top_n", "records", "student_auc"]);
    p.push(vec![s.top_n.to_string(), s.records.to_string(), String::new()]);
    tables.insert("P_top_n_paths", p);
    Ok(())
}

fn evaluation_table(lay: &Layout, tables: &mut BTreeMap<&'static str, Table>) -> Result<(), CliError> {
    let rows: Vec<EvalRow> = read_jsonl(&lay.evaluation())?;
    let mut q = Table::new(&["system_id", "n_cases", "auc", "threshold", "sensitivity", "specificity", "f1", "f2"]);
    for r in rows {
        let e = &r.report;
        q.push(vec![
            r.system_id,
            r.n_cases.to_string(),
            num(e.auc),
            num(e.threshold),
            num(e.sensitivity),
            num(e.specificity),
            num(e.f1),
            num(e.f2),
        ]);
    }
    tables.insert("Q_ensemble_comparison", q);
    Ok(())
}

/// Writes every panel whose source artifact exists; returns how many.
pub fn write_report(cfg: &RunConfig, lay: &Layout) -> Result<usize, CliError> {
    let dir = lay.report_dir();
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut tables = BTreeMap::new();
    variability_tables(cfg, lay, &mut tables)?;
    if lay.diversity().exists() {
        diversity_tables(lay, &mut tables)?;
    }
    if lay.stage1().exists() {
        alignment_tables(lay, &mut tables)?;
    }
    if lay.attribution().exists() {
        attribution_tables(lay, &mut tables)?;
    }
    if lay.distill_summary().exists() {
        distill_table(lay, &mut tables)?;
    }
    if lay.evaluation().exists() {
        evaluation_table(lay, &mut tables)?;
    }
    for (name, _) in PANELS {
        if !tables.contains_key(name) {
            log::warn!("report: panel {name} skipped, its source artifact is missing");
        }
    }
    for (name, t) in &tables {
        t.save(&dir.join(format!("{name}.csv")))?;
    }
    Ok(tables.len())
}
