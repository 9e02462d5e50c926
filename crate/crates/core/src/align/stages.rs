use serde::{Deserialize, Serialize};

use super::cv::{cross_validate_with, fold_split, holdout_auc};
use super::{assign_folds, fit_spec, AlignError, AlignmentModel, Algorithm, CandidateSpec, CvResult, FeatureMatrix, Hyperparams};
use crate::exec::Execution;
use crate::fingerprint::stable_u64;
use crate::metrics::roc_auc;

/// Hyperparameter axes searched in stage 2. Grid points inherit every other
/// field (seed, min_samples_leaf, ...) from the spec being tuned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperGrid {
    pub logistic_l2: Vec<f64>,
    pub gbdt_n_trees: Vec<usize>,
    pub gbdt_max_depth: Vec<usize>,
    pub gbdt_learning_rate: Vec<f64>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self {
            logistic_l2: vec![0.01, 1.0],
            gbdt_n_trees: vec![50, 200],
            gbdt_max_depth: vec![2, 3],
            gbdt_learning_rate: vec![0.1, 0.3],
        }
    }
}

impl HyperGrid {
    /// Grid points for `base` in a fixed order (n_trees, then depth, then
    /// learning rate for GBDT).
    pub fn points(&self, base: &Hyperparams) -> Vec<Hyperparams> {
        match base {
            Hyperparams::Logistic(c) => self
                .logistic_l2
                .iter()
                .map(|&l2| Hyperparams::Logistic(super::LogisticConfig { l2, ..c.clone() }))
                .collect(),
            Hyperparams::Gbdt(c) => {
                let mut out = Vec::new();
                for &n_trees in &self.gbdt_n_trees {
                    for &max_depth in &self.gbdt_max_depth {
                        for &learning_rate in &self.gbdt_learning_rate {
                            out.push(Hyperparams::Gbdt(super::GbdtConfig {
                                n_trees,
                                max_depth,
                                learning_rate,
                                ..c.clone()
                            }));
                        }
                    }
                }
                out
            }
        }
    }
}

/// Seed for the inner CV loop nested in outer fold `tag`.
pub(crate) fn inner_seed(seed: u64, tag: &str) -> u64 {
    stable_u64(seed, &["inner", tag])
}

/// Sort by mean AUC descending, then by simplicity.
fn rank(results: &mut [CvResult]) {
    results.sort_by(|a, b| {
        b.mean_auc
            .total_cmp(&a.mean_auc)
            .then_with(|| a.spec.simplicity_key().cmp(&b.spec.simplicity_key()))
    });
}

/// Nested prefixes of the judges ordered by single-judge AUC on `matrix`
/// (ties by judge id): `[j1], [j1, j2], ...`.
pub fn nested_prefix_subsets(matrix: &FeatureMatrix) -> Result<Vec<Vec<String>>, AlignError> {
    let labels = matrix.labels();
    let mut ranked = Vec::with_capacity(matrix.dim());
    for (j, id) in matrix.judge_ids.iter().enumerate() {
        let auc = roc_auc(&matrix.column(j), &labels).map_err(|e| AlignError::Precondition(e.to_string()))?;
        ranked.push((auc, id.clone()));
    }
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    Ok((1..=ranked.len())
        .map(|n| ranked[..n].iter().map(|(_, id)| id.clone()).collect())
        .collect())
}

/// One default-hyperparameter CvResult per (subset, algorithm), ranked.
pub fn stage1_screen(
    exec: Execution,
    matrix: &FeatureMatrix,
    judge_subsets: &[Vec<String>],
    algorithms: &[Algorithm],
    k: usize,
    seed: u64,
) -> Result<Vec<CvResult>, AlignError> {
    if judge_subsets.is_empty() || algorithms.is_empty() {
        return Err(AlignError::Precondition("stage 1 needs at least one subset and one algorithm".into()));
    }
    let specs = judge_subsets
        .iter()
        .flat_map(|s| algorithms.iter().map(move |&a| CandidateSpec::with_defaults(s.clone(), a)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut results = exec
        .map(&specs, |spec| cross_validate_with(Execution::Sequential, spec, matrix, k, seed))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    rank(&mut results);
    Ok(results)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage2Report {
    /// The stage-1 spec being tuned.
    pub spec: CandidateSpec,
    /// Grid point chosen by inner CV within each outer fold.
    pub chosen: Vec<Hyperparams>,
    pub outer_fold_aucs: Vec<f64>,
    pub mean_outer_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage2Result {
    pub best: CandidateSpec,
    /// Inner-CV mean AUC of every grid point on the full development matrix,
    /// for the winning spec.
    pub final_inner_aucs: Vec<f64>,
    pub reports: Vec<Stage2Report>,
}

/// Index of the first maximal mean inner AUC over `points`.
fn select_point(
    points: &[Hyperparams],
    subset: &[String],
    train: &FeatureMatrix,
    k_inner: usize,
    seed: u64,
) -> Result<(usize, Vec<f64>), AlignError> {
    let mut aucs = Vec::with_capacity(points.len());
    for hp in points {
        let spec = CandidateSpec::new(subset.to_vec(), hp.clone())?;
        aucs.push(cross_validate_with(Execution::Sequential, &spec, train, k_inner, seed)?.mean_auc);
    }
    let mut best = 0;
    for (i, &a) in aucs.iter().enumerate() {
        if a > aucs[best] {
            best = i;
        }
    }
    Ok((best, aucs))
}

/// Nested cross-validation over `top_specs`. In outer fold `f` the inner
/// loop uses seed `stable_u64(seed, ["inner", f])`; the final re-selection on
/// the full matrix uses `stable_u64(seed, ["inner", "full"])`.
pub fn stage2_optimize(
    exec: Execution,
    top_specs: &[CandidateSpec],
    matrix: &FeatureMatrix,
    grid: &HyperGrid,
    k_outer: usize,
    k_inner: usize,
    seed: u64,
) -> Result<Stage2Result, AlignError> {
    if top_specs.is_empty() {
        return Err(AlignError::Precondition("stage 2 needs at least one spec".into()));
    }
    for spec in top_specs {
        if grid.points(&spec.hyperparams).is_empty() {
            return Err(AlignError::Precondition(format!("empty grid for {:?}", spec.algorithm())));
        }
    }
    // (spec, outer fold) jobs are independent.
    let prepared = top_specs
        .iter()
        .map(|spec| {
            let m = matrix.project(&spec.judge_subset)?;
            let folds = assign_folds(&m, k_outer, seed)?;
            Ok((m, folds))
        })
        .collect::<Result<Vec<_>, AlignError>>()?;
    let jobs: Vec<(usize, usize)> = (0..top_specs.len())
        .flat_map(|s| (0..k_outer).map(move |f| (s, f)))
        .collect();
    let outcomes = exec.map(&jobs, |&(s, f)| -> Result<(Hyperparams, f64), AlignError> {
        let spec = &top_specs[s];
        let (m, folds) = &prepared[s];
        let (train, test) = fold_split(m, folds, f);
        let points = grid.points(&spec.hyperparams);
        let (best, _) = select_point(&points, &spec.judge_subset, &train, k_inner, inner_seed(seed, &f.to_string()))?;
        let tuned = CandidateSpec::new(spec.judge_subset.clone(), points[best].clone())?;
        Ok((points[best].clone(), holdout_auc(&tuned, &train, &test)?))
    });
    let mut outcomes = outcomes.into_iter();
    let mut reports = Vec::with_capacity(top_specs.len());
    for spec in top_specs {
        let mut chosen = Vec::with_capacity(k_outer);
        let mut outer_fold_aucs = Vec::with_capacity(k_outer);
        for _ in 0..k_outer {
            let (hp, auc) = outcomes.next().expect("one outcome per job")?;
            chosen.push(hp);
            outer_fold_aucs.push(auc);
        }
        let mean_outer_auc = outer_fold_aucs.iter().sum::<f64>() / k_outer as f64;
        reports.push(Stage2Report {
            spec: spec.clone(),
            chosen,
            outer_fold_aucs,
            mean_outer_auc,
        });
    }
    let mut winner = 0;
    for (i, r) in reports.iter().enumerate() {
        let w = &reports[winner];
        let better = r.mean_outer_auc > w.mean_outer_auc
            || (r.mean_outer_auc == w.mean_outer_auc && r.spec.simplicity_key() < w.spec.simplicity_key());
        if better {
            winner = i;
        }
    }
    let spec = &top_specs[winner];
    let points = grid.points(&spec.hyperparams);
    let (best, final_inner_aucs) =
        select_point(&points, &spec.judge_subset, &prepared[winner].0, k_inner, inner_seed(seed, "full"))?;
    Ok(Stage2Result {
        best: CandidateSpec::new(spec.judge_subset.clone(), points[best].clone())?,
        final_inner_aucs,
        reports,
    })
}

/// Fit the tuned spec on every development row.
pub fn stage3_finalize(spec: &CandidateSpec, development: &FeatureMatrix) -> Result<AlignmentModel, AlignError> {
    fit_spec(spec, development)
}
