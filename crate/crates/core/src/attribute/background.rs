use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::AttributeError;
use crate::align::FeatureMatrix;

/// Reference rows for the interventional value function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSet {
    pub rows: Vec<Vec<f64>>,
    pub seed: u64,
}

impl BackgroundSet {
    pub const DEFAULT_SIZE: usize = 64;

    pub fn new(rows: Vec<Vec<f64>>, seed: u64) -> Result<Self, AttributeError> {
        let Some(first) = rows.first() else {
            return Err(AttributeError::EmptyBackground);
        };
        let d = first.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(AttributeError::Dimension {
                expected: d,
                got: bad.len(),
            });
        }
        Ok(Self { rows, seed })
    }

    /// `size` distinct rows drawn without replacement (all rows when the
    /// matrix is smaller). Rows are taken from the case-id-sorted matrix, so
    /// the draw does not depend on row order.
    pub fn sample(matrix: &FeatureMatrix, size: usize, seed: u64) -> Result<Self, AttributeError> {
        if size == 0 || matrix.is_empty() {
            return Err(AttributeError::EmptyBackground);
        }
        let mut order: Vec<usize> = (0..matrix.len()).collect();
        order.sort_by(|&a, &b| matrix.rows[a].case_id.cmp(&matrix.rows[b].case_id));
        let picked: Vec<usize> = if size >= order.len() {
            order
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx = sample(&mut rng, order.len(), size).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| order[i]).collect()
        };
        Self::new(picked.into_iter().map(|i| matrix.rows[i].x.clone()).collect(), seed)
    }

    pub fn dim(&self) -> usize {
        self.rows[0].len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Column means.
    pub fn means(&self) -> Vec<f64> {
        let n = self.rows.len() as f64;
        (0..self.dim())
            .map(|j| self.rows.iter().map(|r| r[j]).sum::<f64>() / n)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::FeatureRow;
    use crate::corpus::Label;

    fn matrix(n: usize) -> FeatureMatrix {
        FeatureMatrix::new(
            vec!["a".into()],
            (0..n)
                .map(|i| FeatureRow {
                    case_id: format!("c{i:03}"),
                    x: vec![i as f64],
                    y: Label::NonRare,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn sampling_is_seeded_and_order_free() {
        let m = matrix(200);
        let a = BackgroundSet::sample(&m, 64, 5).unwrap();
        assert_eq!(a.len(), 64);
        let mut rev = m.clone();
        rev.rows.reverse();
        assert_eq!(a, BackgroundSet::sample(&rev, 64, 5).unwrap());
        assert_ne!(a, BackgroundSet::sample(&m, 64, 6).unwrap());
        let mut seen: Vec<f64> = a.rows.iter().map(|r| r[0]).collect();
        seen.dedup();
        assert_eq!(seen.len(), 64);
        assert_eq!(BackgroundSet::sample(&matrix(10), 64, 5).unwrap().len(), 10);
    }

    #[test]
    fn empty_is_rejected() {
        assert!(matches!(BackgroundSet::sample(&matrix(5), 0, 1), Err(AttributeError::EmptyBackground)));
        assert!(matches!(BackgroundSet::new(vec![], 1), Err(AttributeError::EmptyBackground)));
        assert!(matches!(
            BackgroundSet::new(vec![vec![1.0], vec![1.0, 2.0]], 1),
            Err(AttributeError::Dimension { .. })
        ));
    }
}
