use std::collections::HashSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::schema::{ColumnKind, ColumnSchema};
use super::task::Predicate;
use super::{DataError, Result};

/// A typed cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Missing,
    Int(i64),
    Decimal(f64),
    Code(i64),
}

impl Value {
    pub fn is_missing(&self) -> bool {
        matches!(self, Value::Missing)
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::Missing => None,
            Value::Int(v) | Value::Code(v) => Some(v as f64),
            Value::Decimal(v) => Some(v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Validation,
    Test,
}

/// One entry of the append-only record of how a dataset was derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum LineageStep {
    Load {
        source: String,
        rows: usize,
    },
    Synthetic {
        seed: u64,
        rows: usize,
    },
    Filter {
        task_id: String,
        predicates: Vec<Predicate>,
        target: Option<String>,
        kept: usize,
        dropped_missing_target: usize,
    },
    Split {
        seed: u64,
        fractions: [f64; 3],
        partition: Partition,
        rows: usize,
    },
    Subsample {
        n: usize,
        seed: u64,
    },
    PermuteColumn {
        column: String,
        seed: u64,
    },
}

/// Immutable column store plus a row selection.
///
/// Derived datasets share column storage with their parent; only the
/// selection and lineage are new. Missing cells are stored as NaN.
#[derive(Debug, Clone)]
pub struct TabularDataset {
    schema: Arc<Vec<ColumnSchema>>,
    columns: Vec<Arc<Vec<f64>>>,
    row_ids: Arc<Vec<u64>>,
    selection: Arc<Vec<u32>>,
    lineage: Vec<LineageStep>,
}

impl TabularDataset {
    /// Builds a dataset from column-major storage. `columns[j][i]` is the
    /// value of column `j` in row `i`; NaN marks a missing cell.
    pub fn from_columns(
        schema: Vec<ColumnSchema>,
        row_ids: Vec<u64>,
        columns: Vec<Vec<f64>>,
        origin: LineageStep,
    ) -> Result<Self> {
        let mut seen = HashSet::new();
        for col in &schema {
            if !seen.insert(col.name.as_str()) {
                return Err(DataError::DuplicateColumn {
                    column: col.name.clone(),
                });
            }
        }
        if columns.len() != schema.len() {
            return Err(DataError::InvalidTask(format!(
                "{} columns supplied for a schema of {}",
                columns.len(),
                schema.len()
            )));
        }
        if let Some(bad) = columns.iter().position(|c| c.len() != row_ids.len()) {
            return Err(DataError::InvalidTask(format!(
                "column `{}` has {} values for {} rows",
                schema[bad].name,
                columns[bad].len(),
                row_ids.len()
            )));
        }
        let mut ids = HashSet::with_capacity(row_ids.len());
        for id in &row_ids {
            if !ids.insert(*id) {
                return Err(DataError::InvalidTask(format!("duplicate row id {id}")));
            }
        }
        if row_ids.len() > u32::MAX as usize {
            return Err(DataError::InvalidTask("too many rows".into()));
        }
        let selection = (0..row_ids.len() as u32).collect();
        Ok(Self {
            schema: Arc::new(schema),
            columns: columns.into_iter().map(Arc::new).collect(),
            row_ids: Arc::new(row_ids),
            selection: Arc::new(selection),
            lineage: vec![origin],
        })
    }

    pub fn len(&self) -> usize {
        self.selection.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selection.is_empty()
    }

    pub fn schema(&self) -> &[ColumnSchema] {
        &self.schema
    }

    pub fn lineage(&self) -> &[LineageStep] {
        &self.lineage
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|c| c.name == name)
    }

    pub fn require_column(&self, name: &str) -> Result<usize> {
        self.column_index(name)
            .ok_or_else(|| DataError::MissingColumn {
                column: name.to_string(),
            })
    }

    pub fn row_id(&self, row: usize) -> u64 {
        self.row_ids[self.selection[row] as usize]
    }

    pub fn row_ids(&self) -> impl ExactSizeIterator<Item = u64> + '_ {
        self.selection.iter().map(|&s| self.row_ids[s as usize])
    }

    pub fn value(&self, row: usize, column: usize) -> Value {
        let raw = self.columns[column][self.selection[row] as usize];
        if raw.is_nan() {
            return Value::Missing;
        }
        match self.schema[column].kind {
            ColumnKind::Integer => Value::Int(raw as i64),
            ColumnKind::Categorical => Value::Code(raw as i64),
            ColumnKind::Decimal => Value::Decimal(raw),
        }
    }

    pub fn row(&self, row: usize) -> RowView<'_> {
        RowView { data: self, row }
    }

    /// Selects rows by position in this dataset, in the given order.
    pub(crate) fn select(&self, rows: &[usize], step: LineageStep) -> Self {
        let selection = rows.iter().map(|&r| self.selection[r]).collect();
        let mut lineage = self.lineage.clone();
        lineage.push(step);
        Self {
            schema: Arc::clone(&self.schema),
            columns: self.columns.clone(),
            row_ids: Arc::clone(&self.row_ids),
            selection: Arc::new(selection),
            lineage,
        }
    }

    /// Returns a copy whose `column` values are shuffled across the selected
    /// rows with a seeded uniform permutation. Other columns are untouched.
    pub fn with_permuted_column(&self, column: &str, seed: u64) -> Result<Self> {
        let idx = self.require_column(column)?;
        let source = &self.columns[idx];
        let mut values: Vec<f64> = self.selection.iter().map(|&s| source[s as usize]).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        values.shuffle(&mut rng);
        let mut permuted = source.as_ref().clone();
        for (&s, v) in self.selection.iter().zip(values) {
            permuted[s as usize] = v;
        }
        let mut out = self.clone();
        out.columns[idx] = Arc::new(permuted);
        out.lineage.push(LineageStep::PermuteColumn {
            column: column.to_string(),
            seed,
        });
        Ok(out)
    }
}

/// Borrowed view of one row.
#[derive(Debug, Clone, Copy)]
pub struct RowView<'a> {
    data: &'a TabularDataset,
    row: usize,
}

impl<'a> RowView<'a> {
    pub fn row_id(&self) -> u64 {
        self.data.row_id(self.row)
    }

    pub fn get(&self, column: &str) -> Option<Value> {
        self.data
            .column_index(column)
            .map(|c| self.data.value(self.row, c))
    }

    pub fn dataset(&self) -> &'a TabularDataset {
        self.data
    }
}
