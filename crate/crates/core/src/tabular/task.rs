use log::info;
use serde::{Deserialize, Serialize};

use super::dataset::{LineageStep, TabularDataset, Value};
use super::schema::ColumnSchema;
use super::{DataError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompareOp {
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "in")]
    In,
}

/// A row predicate over one column. Missing cells never satisfy a predicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub column: String,
    pub op: CompareOp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<f64>,
}

impl Predicate {
    pub fn new(column: impl Into<String>, op: CompareOp, value: f64) -> Self {
        Self {
            column: column.into(),
            op,
            value: Some(value),
            values: Vec::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self.op {
            CompareOp::In => !self.values.is_empty() || self.value.is_some(),
            _ => self.value.is_some_and(f64::is_finite),
        };
        if ok {
            Ok(())
        } else {
            Err(DataError::InvalidTask(format!(
                "predicate on `{}` lacks a comparison value",
                self.column
            )))
        }
    }

    pub fn matches(&self, value: Value) -> bool {
        let Some(x) = value.as_f64() else {
            return false;
        };
        let v = self.value.unwrap_or(f64::NAN);
        match self.op {
            CompareOp::Gt => x > v,
            CompareOp::Ge => x >= v,
            CompareOp::Lt => x < v,
            CompareOp::Le => x <= v,
            CompareOp::Eq => x == v,
            CompareOp::Ne => x != v,
            CompareOp::In => self.values.contains(&x) || self.value == Some(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BinarizationRule {
    /// Label 1 iff value > threshold.
    ThresholdAbove { threshold: f64 },
    /// Label 1 iff the code is listed.
    CodeInSet { positive_codes: Vec<i64> },
}

impl BinarizationRule {
    pub fn label(&self, value: f64) -> u8 {
        match self {
            BinarizationRule::ThresholdAbove { threshold } => u8::from(value > *threshold),
            BinarizationRule::CodeInSet { positive_codes } => {
                u8::from(positive_codes.iter().any(|&c| c as f64 == value))
            }
        }
    }
}

/// A binary prediction task over person records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDefinition {
    pub task_id: String,
    #[serde(default)]
    pub description: String,
    #[serde(rename = "target")]
    pub target_column: String,
    #[serde(rename = "features")]
    pub feature_columns: Vec<String>,
    pub target_rule: BinarizationRule,
    #[serde(rename = "filter", default)]
    pub population_filter: Vec<Predicate>,
    pub question: String,
    pub positive_choice: String,
    pub negative_choice: String,
    pub numeric_question: String,
}

pub const BUNDLED_TASK_IDS: [&str; 5] = [
    "ACSIncome",
    "ACSPublicCoverage",
    "ACSMobility",
    "ACSEmployment",
    "ACSTravelTime",
];

fn bundled_source(task_id: &str) -> Option<&'static str> {
    Some(match task_id {
        "ACSIncome" => include_str!("../../assets/tasks/ACSIncome.toml"),
        "ACSPublicCoverage" => include_str!("../../assets/tasks/ACSPublicCoverage.toml"),
        "ACSMobility" => include_str!("../../assets/tasks/ACSMobility.toml"),
        "ACSEmployment" => include_str!("../../assets/tasks/ACSEmployment.toml"),
        "ACSTravelTime" => include_str!("../../assets/tasks/ACSTravelTime.toml"),
        _ => return None,
    })
}

impl TaskDefinition {
    pub fn from_toml(text: &str) -> Result<Self> {
        let task: TaskDefinition = toml::from_str(text)?;
        task.check()?;
        Ok(task)
    }

    pub fn bundled(task_id: &str) -> Result<Self> {
        let src = bundled_source(task_id).ok_or_else(|| DataError::UnknownTask(task_id.into()))?;
        Self::from_toml(src)
    }

    /// Resolves a bundled task id, or reads a task config file.
    pub fn resolve(id_or_path: &str) -> Result<Self> {
        if bundled_source(id_or_path).is_some() {
            return Self::bundled(id_or_path);
        }
        let path = std::path::Path::new(id_or_path);
        if path.is_file() {
            return Self::from_toml(&std::fs::read_to_string(path)?);
        }
        Err(DataError::UnknownTask(id_or_path.into()))
    }

    fn check(&self) -> Result<()> {
        if self.feature_columns.contains(&self.target_column) {
            return Err(DataError::InvalidTask(format!(
                "target `{}` is also a feature",
                self.target_column
            )));
        }
        for (i, f) in self.feature_columns.iter().enumerate() {
            if self.feature_columns[..i].contains(f) {
                return Err(DataError::InvalidTask(format!("feature `{f}` listed twice")));
            }
        }
        if self.positive_choice.trim().is_empty() || self.negative_choice.trim().is_empty() {
            return Err(DataError::InvalidTask("both choice texts are required".into()));
        }
        if self.positive_choice == self.negative_choice {
            return Err(DataError::InvalidTask("choice texts must differ".into()));
        }
        for p in &self.population_filter {
            p.validate()?;
        }
        Ok(())
    }

    /// Replaces the feature list, keeping everything else.
    pub fn with_features(&self, features: Vec<String>) -> Result<Self> {
        let mut out = self.clone();
        out.feature_columns = features;
        out.check()?;
        Ok(out)
    }

    /// Features, target, then filter columns, without duplicates.
    pub fn required_columns(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let all = self
            .feature_columns
            .iter()
            .chain(std::iter::once(&self.target_column))
            .chain(self.population_filter.iter().map(|p| &p.column));
        for c in all {
            if !out.contains(c) {
                out.push(c.clone());
            }
        }
        out
    }

    pub fn validate_against(&self, schema: &[ColumnSchema]) -> Result<()> {
        for c in self.required_columns() {
            if !schema.iter().any(|s| s.name == c) {
                return Err(DataError::MissingColumn { column: c });
            }
        }
        Ok(())
    }
}

/// Keeps rows satisfying every predicate and, when `target` is given, a
/// non-missing target value.
pub fn filter_rows(
    dataset: &TabularDataset,
    task_id: &str,
    predicates: &[Predicate],
    target: Option<&str>,
) -> Result<TabularDataset> {
    let cols = predicates
        .iter()
        .map(|p| dataset.require_column(&p.column))
        .collect::<Result<Vec<_>>>()?;
    let target_col = target.map(|t| dataset.require_column(t)).transpose()?;

    let mut keep = Vec::new();
    let mut dropped_missing_target = 0usize;
    for row in 0..dataset.len() {
        let passes = predicates
            .iter()
            .zip(&cols)
            .all(|(p, &c)| p.matches(dataset.value(row, c)));
        if !passes {
            continue;
        }
        if let Some(tc) = target_col {
            if dataset.value(row, tc).is_missing() {
                dropped_missing_target += 1;
                continue;
            }
        }
        keep.push(row);
    }
    if dropped_missing_target > 0 {
        info!("{task_id}: dropped {dropped_missing_target} rows with a missing target");
    }
    let kept = keep.len();
    Ok(dataset.select(
        &keep,
        LineageStep::Filter {
            task_id: task_id.to_string(),
            predicates: predicates.to_vec(),
            target: target.map(str::to_string),
            kept,
            dropped_missing_target,
        },
    ))
}

pub fn apply_population_filter(
    dataset: &TabularDataset,
    task: &TaskDefinition,
) -> Result<TabularDataset> {
    filter_rows(
        dataset,
        &task.task_id,
        &task.population_filter,
        Some(&task.target_column),
    )
}

pub fn binarize_target(dataset: &TabularDataset, task: &TaskDefinition) -> Result<Vec<u8>> {
    let col = dataset.require_column(&task.target_column)?;
    (0..dataset.len())
        .map(|row| match dataset.value(row, col).as_f64() {
            Some(v) => Ok(task.target_rule.label(v)),
            None => Err(DataError::MissingTarget {
                row_id: dataset.row_id(row),
                column: task.target_column.clone(),
            }),
        })
        .collect()
}
