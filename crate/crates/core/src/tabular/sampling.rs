use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::dataset::{LineageStep, Partition, TabularDataset};
use super::schema::ColumnKind;
use super::task::filter_rows;
use super::{DataError, Result};

/// Train/validation/test fractions plus the seed that drives row assignment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, validation: f64, test: f64, seed: u64) -> Result<Self> {
        let spec = Self {
            train,
            validation,
            test,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let fr = [self.train, self.validation, self.test];
        if fr.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(DataError::InvalidSplit(format!(
                "fractions must lie in [0, 1], got {fr:?}"
            )));
        }
        if (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(DataError::InvalidSplit(format!(
                "fractions must sum to 1, got {fr:?}"
            )));
        }
        Ok(())
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn key_hash(seed: u64, row_id: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ row_id)
}

/// Uniform value in [0, 1) determined only by `(seed, row_id)`.
pub fn unit_hash(seed: u64, row_id: u64) -> f64 {
    (key_hash(seed, row_id) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Assigns each row to a partition from a seeded hash of its row id, so a
/// row lands in the same partition regardless of which other rows are
/// present.
pub fn split_dataset(
    dataset: &TabularDataset,
    spec: &SplitSpec,
) -> Result<(TabularDataset, TabularDataset, TabularDataset)> {
    spec.validate()?;
    let mut parts: [Vec<usize>; 3] = Default::default();
    let train_cut = spec.train;
    let val_cut = spec.train + spec.validation;
    for (row, id) in dataset.row_ids().enumerate() {
        let u = unit_hash(spec.seed, id);
        let slot = if u < train_cut {
            0
        } else if u < val_cut {
            1
        } else {
            2
        };
        parts[slot].push(row);
    }
    let fractions = [spec.train, spec.validation, spec.test];
    let make = |rows: &[usize], partition| {
        dataset.select(
            rows,
            LineageStep::Split {
                seed: spec.seed,
                fractions,
                partition,
                rows: rows.len(),
            },
        )
    };
    Ok((
        make(&parts[0], Partition::Train),
        make(&parts[1], Partition::Validation),
        make(&parts[2], Partition::Test),
    ))
}

pub fn split_partition(
    dataset: &TabularDataset,
    spec: &SplitSpec,
    partition: Partition,
) -> Result<TabularDataset> {
    let (train, val, test) = split_dataset(dataset, spec)?;
    Ok(match partition {
        Partition::Train => train,
        Partition::Validation => val,
        Partition::Test => test,
    })
}

/// Uniform sample of `n` rows without replacement: rows are ordered by a
/// seeded hash of their id and the first `n` are kept, in that order.
pub fn subsample(dataset: &TabularDataset, n: usize, seed: u64) -> Result<TabularDataset> {
    if n > dataset.len() {
        return Err(DataError::Size {
            requested: n,
            available: dataset.len(),
        });
    }
    let mut order: Vec<(u64, u64, usize)> = dataset
        .row_ids()
        .enumerate()
        .map(|(row, id)| (key_hash(seed, id), id, row))
        .collect();
    order.sort_unstable();
    let rows: Vec<usize> = order.iter().take(n).map(|t| t.2).collect();
    Ok(dataset.select(&rows, LineageStep::Subsample { n, seed }))
}

/// Re-executes the derivation steps recorded in `lineage` on `source`,
/// which must be the dataset produced by its first (load) step.
pub fn replay_lineage(source: &TabularDataset, lineage: &[LineageStep]) -> Result<TabularDataset> {
    let mut current = source.clone();
    for step in lineage.iter().skip(1) {
        current = match step {
            LineageStep::Load { .. } | LineageStep::Synthetic { .. } => {
                return Err(DataError::InvalidTask(
                    "load steps may only appear first in a lineage".into(),
                ))
            }
            LineageStep::Filter {
                task_id,
                predicates,
                target,
                ..
            } => filter_rows(&current, task_id, predicates, target.as_deref())?,
            LineageStep::Split {
                seed,
                fractions,
                partition,
                ..
            } => {
                let spec = SplitSpec::new(fractions[0], fractions[1], fractions[2], *seed)?;
                split_partition(&current, &spec, *partition)?
            }
            LineageStep::Subsample { n, seed } => subsample(&current, *n, *seed)?,
            LineageStep::PermuteColumn { column, seed } => {
                current.with_permuted_column(column, *seed)?
            }
        };
    }
    Ok(current)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    Code(i64),
    Other,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupAssignment {
    pub column: String,
    /// Retained categories, most frequent first.
    pub categories: Vec<i64>,
    pub membership: Vec<Group>,
}

/// Keeps the `top_k` most frequent codes of a categorical column (ties go to
/// the smaller code); every other row, including missing cells, is `Other`.
pub fn group_values(
    dataset: &TabularDataset,
    column: &str,
    top_k: usize,
) -> Result<GroupAssignment> {
    let col = dataset.require_column(column)?;
    if dataset.schema()[col].kind != ColumnKind::Categorical {
        return Err(DataError::NotCategorical {
            column: column.to_string(),
        });
    }
    let codes: Vec<Option<i64>> = (0..dataset.len())
        .map(|r| dataset.value(r, col).as_f64().map(|v| v as i64))
        .collect();
    let mut counts: HashMap<i64, usize> = HashMap::new();
    for c in codes.iter().flatten() {
        *counts.entry(*c).or_default() += 1;
    }
    let mut ranked: Vec<(i64, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let categories: Vec<i64> = ranked.into_iter().take(top_k).map(|(c, _)| c).collect();
    let membership = codes
        .iter()
        .map(|c| match c {
            Some(c) if categories.contains(c) => Group::Code(*c),
            _ => Group::Other,
        })
        .collect();
    Ok(GroupAssignment {
        column: column.to_string(),
        categories,
        membership,
    })
}
