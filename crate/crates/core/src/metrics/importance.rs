use super::scalar::auc;
use super::{MetricsError, Result};
use crate::tabular::TabularDataset;

/// AUC lost when `feature` is shuffled across rows with a seeded
/// permutation.
pub fn permutation_feature_importance<F>(
    score_fn: F,
    dataset: &TabularDataset,
    labels: &[u8],
    feature: &str,
    seed: u64,
) -> Result<f64>
where
    F: Fn(&TabularDataset) -> Vec<f64>,
{
    let permuted = dataset.with_permuted_column(feature, seed)?;
    let base = score_fn(dataset);
    let shuffled = score_fn(&permuted);
    if base.len() != labels.len() || shuffled.len() != labels.len() {
        return Err(MetricsError::Undefined(
            "score function returned a different number of scores than labels".into(),
        ));
    }
    Ok(auc(&base, labels)? - auc(&shuffled, labels)?)
}
