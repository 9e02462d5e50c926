use super::{AttributeError, BackgroundSet, ShapleyVector};
use crate::align::{sigmoid, AlignmentModel, FeatureMatrix, ModelParams, Tree, TreeNode};
use crate::exec::Execution;

/// Largest judge count for exact 2^d enumeration.
pub const MAX_EXACT_DIM: usize = 15;

/// Which model output the value function averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModelOutput {
    #[default]
    Probability,
    /// Log-odds before the logistic link; additive over GBDT stages.
    RawScore,
}

fn check(d: usize, x: &[f64], background: &BackgroundSet) -> Result<(), AttributeError> {
    if d > MAX_EXACT_DIM {
        return Err(AttributeError::TooManyFeatures {
            got: d,
            max: MAX_EXACT_DIM,
        });
    }
    if background.is_empty() {
        return Err(AttributeError::EmptyBackground);
    }
    for got in [x.len(), background.dim()] {
        if got != d {
            return Err(AttributeError::Dimension { expected: d, got });
        }
    }
    Ok(())
}

/// Shapley weights |S|!(d-|S|-1)!/d! indexed by |S|.
fn coalition_weights(d: usize) -> Vec<f64> {
    // 1 / (d * C(d-1, s))
    let mut out = Vec::with_capacity(d);
    let mut binom = 1.0;
    for s in 0..d {
        out.push(1.0 / (d as f64 * binom));
        binom = binom * (d - 1 - s) as f64 / (s + 1) as f64;
    }
    out
}

/// phi_i = sum over S not containing i of w(|S|) (v(S+i) - v(S)).
fn phi_from_values(v: &[f64], d: usize) -> Vec<f64> {
    let w = coalition_weights(d);
    (0..d)
        .map(|i| {
            let bit = 1usize << i;
            (0..v.len())
                .filter(|m| m & bit == 0)
                .map(|m| w[m.count_ones() as usize] * (v[m | bit] - v[m]))
                .sum()
        })
        .collect()
}

/// Exact interventional Shapley values of an arbitrary function: `v(S)` is
/// the mean over background rows of `f` evaluated on `x` for judges in `S`
/// and the background row elsewhere. Returns `(phi, baseline, f(x))`.
pub fn shapley_values<F: Fn(&[f64]) -> f64>(
    f: F,
    x: &[f64],
    background: &BackgroundSet,
) -> Result<(Vec<f64>, f64, f64), AttributeError> {
    let d = x.len();
    check(d, x, background)?;
    let n = background.len() as f64;
    let mut hybrid = vec![0.0; d];
    let v: Vec<f64> = (0..1usize << d)
        .map(|mask| {
            background
                .rows
                .iter()
                .map(|b| {
                    for j in 0..d {
                        hybrid[j] = if mask >> j & 1 == 1 { x[j] } else { b[j] };
                    }
                    f(&hybrid)
                })
                .sum::<f64>()
                / n
        })
        .collect();
    Ok((phi_from_values(&v, d), v[0], f(x)))
}

/// Adds `value` times the indicator "every judge in `ones` is taken from x
/// and every judge in `zeros` from b", expanded into subset (Moebius)
/// coefficients.
fn add_indicator(coef: &mut [f64], ones: usize, zeros: usize, value: f64) {
    let mut sub = zeros;
    loop {
        let sign = if sub.count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
        coef[ones | sub] += sign * value;
        if sub == 0 {
            break;
        }
        sub = (sub - 1) & zeros;
    }
}

/// Walks every leaf a hybrid of `x` and `b` can reach. Judges where the two
/// rows disagree at a visited split become coalition variables.
fn tree_terms(tree: &Tree, node: usize, x: &[f64], b: &[f64], ones: usize, zeros: usize, scale: f64, coef: &mut [f64]) {
    match tree.nodes[node] {
        TreeNode::Leaf { value } => add_indicator(coef, ones, zeros, scale * value),
        TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            let bit = 1usize << feature;
            let go = |v: f64| if v < threshold { left } else { right };
            let (nx, nb) = (go(x[feature]), go(b[feature]));
            if ones & bit != 0 || nx == nb {
                tree_terms(tree, nx, x, b, ones, zeros, scale, coef);
            } else if zeros & bit != 0 {
                tree_terms(tree, nb, x, b, ones, zeros, scale, coef);
            } else {
                tree_terms(tree, nx, x, b, ones | bit, zeros, scale, coef);
                tree_terms(tree, nb, x, b, ones, zeros | bit, scale, coef);
            }
        }
    }
}

/// Moebius coefficients of the raw score over coalitions, for one (x, b).
fn raw_coefficients(model: &AlignmentModel, x: &[f64], b: &[f64], coef: &mut [f64]) {
    coef.fill(0.0);
    match &model.params {
        ModelParams::Logistic(p) => {
            coef[0] = p.raw_score(b);
            let zx = p.standardize(x);
            let zb = p.standardize(b);
            for j in 0..x.len() {
                coef[1 << j] = p.weights[j] * (zx[j] - zb[j]);
            }
        }
        ModelParams::Gbdt(p) => {
            coef[0] = p.base_score;
            for t in &p.trees {
                tree_terms(t, 0, x, b, 0, 0, p.learning_rate, coef);
            }
        }
    }
}

/// In-place subset-sum transform: afterwards `a[m]` is the sum of the
/// original coefficients over all subsets of `m`.
fn zeta(a: &mut [f64], d: usize) {
    for i in 0..d {
        let bit = 1usize << i;
        for m in 0..a.len() {
            if m & bit != 0 {
                a[m] += a[m ^ bit];
            }
        }
    }
}

/// Exact Shapley values of a fitted model. For each background row the raw
/// score of every coalition is assembled from per-row subset coefficients,
/// which avoids re-evaluating the model 2^d times. Returns
/// `(phi, baseline, prediction)` where both ends come from the same value
/// table, so efficiency holds to rounding.
pub fn shapley_model(
    model: &AlignmentModel,
    x: &[f64],
    background: &BackgroundSet,
    output: ModelOutput,
) -> Result<(Vec<f64>, f64, f64), AttributeError> {
    let d = model.dim();
    check(d, x, background)?;
    let size = 1usize << d;
    let mut coef = vec![0.0; size];
    let mut v = vec![0.0; size];
    for b in &background.rows {
        raw_coefficients(model, x, b, &mut coef);
        zeta(&mut coef, d);
        for (acc, raw) in v.iter_mut().zip(&coef) {
            *acc += match output {
                ModelOutput::Probability => sigmoid(*raw),
                ModelOutput::RawScore => *raw,
            };
        }
    }
    let n = background.len() as f64;
    v.iter_mut().for_each(|t| *t /= n);
    Ok((phi_from_values(&v, d), v[0], v[size - 1]))
}

/// Attribution of `model`'s probability on `x` to its judges.
pub fn shapley_exact(
    model: &AlignmentModel,
    case_id: &str,
    x: &[f64],
    background: &BackgroundSet,
) -> Result<ShapleyVector, AttributeError> {
    let (phi, baseline, prediction) = shapley_model(model, x, background, ModelOutput::Probability)?;
    Ok(ShapleyVector {
        case_id: case_id.to_string(),
        judge_ids: model.judge_ids.clone(),
        phi,
        baseline,
        prediction,
    })
}

/// One vector per matrix row, in row order.
pub fn explain_matrix(
    exec: Execution,
    model: &AlignmentModel,
    matrix: &FeatureMatrix,
    background: &BackgroundSet,
) -> Result<Vec<ShapleyVector>, AttributeError> {
    let projected = matrix.project(&model.judge_ids).map_err(|_| AttributeError::Dimension {
        expected: model.dim(),
        got: matrix.dim(),
    })?;
    exec.map(&projected.rows, |r| shapley_exact(model, &r.case_id, &r.x, background))
        .into_iter()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::{fit_spec, Algorithm, CandidateSpec, FeatureRow, GbdtConfig, GbdtParams, Hyperparams};
    use crate::corpus::Label;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn matrix(d: usize, n: usize, seed: u64) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..n)
            .map(|i| {
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(0..=100) as f64).collect();
                let s: f64 = x.iter().take(2).sum();
                let y = if s + rng.random_range(-40.0..40.0) > 100.0 { Label::Rare } else { Label::NonRare };
                FeatureRow {
                    case_id: format!("c{i:03}"),
                    x,
                    y,
                }
            })
            .collect();
        FeatureMatrix::new((0..d).map(|j| format!("j{j}")).collect(), rows).unwrap()
    }

    fn model(d: usize, alg: Algorithm) -> (AlignmentModel, FeatureMatrix) {
        let m = matrix(d, 80, d as u64);
        let hp = match alg {
            Algorithm::Logistic => Hyperparams::default_for(alg),
            Algorithm::Gbdt => Hyperparams::Gbdt(GbdtConfig {
                n_trees: 30,
                max_depth: 3,
                min_samples_leaf: 2,
                ..Default::default()
            }),
        };
        let spec = CandidateSpec::new(m.judge_ids.clone(), hp).unwrap();
        (fit_spec(&spec, &m).unwrap(), m)
    }

    #[test]
    fn fast_path_matches_generic_enumeration() {
        for alg in [Algorithm::Logistic, Algorithm::Gbdt] {
            for d in 1..=5 {
                let (model, m) = model(d, alg);
                let bg = BackgroundSet::sample(&m, 16, 1).unwrap();
                for r in m.rows.iter().take(10) {
                    let (fast, base, pred) = shapley_model(&model, &r.x, &bg, ModelOutput::Probability).unwrap();
                    let (slow, sbase, spred) = shapley_values(|z| model.predict(z), &r.x, &bg).unwrap();
                    for (a, b) in fast.iter().zip(&slow) {
                        assert!((a - b).abs() < 1e-12, "{alg:?} d={d}: {a} vs {b}");
                    }
                    assert!((base - sbase).abs() < 1e-12);
                    assert!((pred - spred).abs() < 1e-12);
                    let gap = (fast.iter().sum::<f64>() - (pred - base)).abs();
                    assert!(gap < 1e-12);
                }
            }
        }
    }

    #[test]
    fn single_judge_gets_everything() {
        let (model, m) = model(1, Algorithm::Gbdt);
        let bg = BackgroundSet::sample(&m, 64, 3).unwrap();
        let v = shapley_exact(&model, "c", &m.rows[0].x, &bg).unwrap();
        assert!((v.phi[0] - (v.prediction - v.baseline)).abs() < 1e-15);
    }

    #[test]
    fn unused_gbdt_feature_is_exactly_zero() {
        let (model, m) = model(4, Algorithm::Gbdt);
        let ModelParams::Gbdt(p) = &model.params else { unreachable!() };
        let used: Vec<usize> = p.trees.iter().flat_map(Tree::split_features).collect();
        let bg = BackgroundSet::sample(&m, 32, 2).unwrap();
        for j in (0..4).filter(|j| !used.contains(j)) {
            for r in &m.rows {
                assert_eq!(shapley_exact(&model, "c", &r.x, &bg).unwrap().phi[j], 0.0);
            }
        }
    }

    #[test]
    fn raw_output_is_additive_over_stages() {
        let (model, m) = model(3, Algorithm::Gbdt);
        let ModelParams::Gbdt(p) = &model.params else { unreachable!() };
        let split = |trees: Vec<Tree>, base: f64| AlignmentModel {
            params: ModelParams::Gbdt(GbdtParams {
                base_score: base,
                learning_rate: p.learning_rate,
                trees,
            }),
            ..model.clone()
        };
        let first = split(p.trees[..10].to_vec(), p.base_score);
        let rest = split(p.trees[10..].to_vec(), 0.0);
        let bg = BackgroundSet::sample(&m, 20, 4).unwrap();
        for r in m.rows.iter().take(20) {
            let (all, ..) = shapley_model(&model, &r.x, &bg, ModelOutput::RawScore).unwrap();
            let (a, ..) = shapley_model(&first, &r.x, &bg, ModelOutput::RawScore).unwrap();
            let (b, ..) = shapley_model(&rest, &r.x, &bg, ModelOutput::RawScore).unwrap();
            for i in 0..3 {
                assert!((all[i] - a[i] - b[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn limits() {
        let (model, m) = model(3, Algorithm::Logistic);
        let bg = BackgroundSet::sample(&m, 8, 0).unwrap();
        assert!(matches!(shapley_exact(&model, "c", &[1.0], &bg), Err(AttributeError::Dimension { .. })));
        let wide = BackgroundSet::new(vec![vec![0.0; 16]], 0).unwrap();
        assert!(matches!(
            shapley_values(|z| z[0], &[0.0; 16], &wide),
            Err(AttributeError::TooManyFeatures { got: 16, .. })
        ));
        let w = coalition_weights(4);
        // Each position's weights over all coalitions sum to one.
        let total: f64 = (0..4).map(|s| w[s] * [1.0, 3.0, 3.0, 1.0][s]).sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn explain_matrix_modes_agree() {
        let (model, m) = model(4, Algorithm::Gbdt);
        let bg = BackgroundSet::sample(&m, 16, 9).unwrap();
        let a = explain_matrix(Execution::Sequential, &model, &m, &bg).unwrap();
        let b = explain_matrix(Execution::Parallel, &model, &m, &bg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), m.len());
    }
}
