use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Result, SynthError};
use crate::encoding::codebook::code_map;
use crate::tabular::{BinarizationRule, ColumnKind, TaskDefinition};

/// Column holding the sampled label in generated datasets.
pub const SYNTH_TARGET: &str = "Y";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FeatureDist {
    /// Uniform over `min..=max`.
    Integer { min: i64, max: i64 },
    /// Over `levels`, uniform unless `weights` is given.
    Categorical {
        levels: Vec<i64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
}

impl FeatureDist {
    pub fn column_kind(&self) -> ColumnKind {
        match self {
            FeatureDist::Integer { .. } => ColumnKind::Integer,
            FeatureDist::Categorical { .. } => ColumnKind::Categorical,
        }
    }

    /// Every reachable value with its probability.
    pub fn support(&self) -> Vec<(i64, f64)> {
        match self {
            FeatureDist::Integer { min, max } => {
                let w = 1.0 / (max - min + 1) as f64;
                (*min..=*max).map(|v| (v, w)).collect()
            }
            FeatureDist::Categorical { levels, weights } => {
                let total: f64 = weights.as_ref().map_or(levels.len() as f64, |w| w.iter().sum());
                levels
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| (v, weights.as_ref().map_or(1.0, |w| w[i]) / total))
                    .collect()
            }
        }
    }
}

/// Features are sampled independently of one another.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub column: String,
    #[serde(flatten)]
    pub dist: FeatureDist,
}

/// One additive logit term: `slope * (x - center)` for numeric use, or a
/// per-level effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitTerm {
    pub column: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    #[serde(default)]
    pub center: f64,
    #[serde(default, with = "code_map", skip_serializing_if = "BTreeMap::is_empty")]
    pub effects: BTreeMap<i64, f64>,
}

impl LogitTerm {
    pub fn linear(column: &str, slope: f64, center: f64) -> Self {
        Self {
            column: column.into(),
            slope: Some(slope),
            center,
            effects: BTreeMap::new(),
        }
    }

    pub fn effects(column: &str, effects: impl IntoIterator<Item = (i64, f64)>) -> Self {
        Self {
            column: column.into(),
            slope: None,
            center: 0.0,
            effects: effects.into_iter().collect(),
        }
    }

    pub fn contribution(&self, x: i64) -> f64 {
        match self.slope {
            Some(s) => s * (x as f64 - self.center),
            None => self.effects.get(&x).copied().unwrap_or(0.0),
        }
    }
}

/// P(Y = 1 | x).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProbabilityRule {
    AffineLogistic {
        intercept: f64,
        #[serde(default)]
        terms: Vec<LogitTerm>,
    },
    /// Piecewise-constant in one feature.
    Table {
        column: String,
        #[serde(with = "code_map")]
        probabilities: BTreeMap<i64, f64>,
    },
    Constant { p: f64 },
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub seed: u64,
    pub features: Vec<FeatureSpec>,
    pub rule: ProbabilityRule,
}

impl SyntheticSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: SyntheticSpec = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Census-shaped population whose codes all have bundled codebook text.
    pub fn acs_like(n: usize, seed: u64) -> Self {
        let cat = |column: &str, levels: &[i64]| FeatureSpec {
            column: column.into(),
            dist: FeatureDist::Categorical {
                levels: levels.to_vec(),
                weights: None,
            },
        };
        let int = |column: &str, min, max| FeatureSpec {
            column: column.into(),
            dist: FeatureDist::Integer { min, max },
        };
        Self {
            n,
            seed,
            features: vec![
                int("AGEP", 17, 90),
                cat("SEX", &[1, 2]),
                cat("SCHL", &[16, 19, 21, 22]),
                int("WKHP", 1, 80),
                cat("MAR", &[1, 3, 5]),
                cat("RAC1P", &[1, 2, 6, 8]),
                cat("POBP", &[6, 12, 17, 36, 48]),
            ],
            rule: ProbabilityRule::AffineLogistic {
                intercept: -0.4,
                terms: vec![
                    LogitTerm::linear("AGEP", 0.03, 45.0),
                    LogitTerm::effects("SEX", [(1, 0.3), (2, -0.3)]),
                    LogitTerm::effects("SCHL", [(16, -1.0), (19, -0.4), (21, 0.6), (22, 1.1)]),
                    LogitTerm::linear("WKHP", 0.04, 40.0),
                    LogitTerm::effects("MAR", [(1, 0.4), (3, 0.0), (5, -0.4)]),
                    LogitTerm::effects("RAC1P", [(1, 0.1), (2, -0.2), (6, 0.2), (8, -0.1)]),
                    LogitTerm::effects("POBP", [(6, 0.15), (12, -0.1), (17, 0.0), (36, 0.2), (48, -0.15)]),
                ],
            },
        }
    }

    pub fn feature(&self, column: &str) -> Option<&FeatureSpec> {
        self.features.iter().find(|f| f.column == column)
    }

    pub fn feature_columns(&self) -> Vec<String> {
        self.features.iter().map(|f| f.column.clone()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(SynthError::Spec(m));
        if self.n == 0 {
            return err("n must be at least 1".into());
        }
        let mut seen = HashSet::new();
        for f in &self.features {
            if f.column == SYNTH_TARGET || !seen.insert(f.column.as_str()) {
                return err(format!("feature column `{}` is duplicated or reserved", f.column));
            }
            match &f.dist {
                FeatureDist::Integer { min, max } if min > max => {
                    return err(format!("feature `{}` has min > max", f.column));
                }
                FeatureDist::Categorical { levels, weights } => {
                    let unique: HashSet<_> = levels.iter().collect();
                    if levels.is_empty() || unique.len() != levels.len() {
                        return err(format!("feature `{}` needs distinct levels", f.column));
                    }
                    if let Some(w) = weights {
                        if w.len() != levels.len()
                            || w.iter().any(|x| !(x.is_finite() && *x >= 0.0))
                            || w.iter().sum::<f64>() <= 0.0
                        {
                            return err(format!("feature `{}` has invalid weights", f.column));
                        }
                    }
                }
                _ => {}
            }
        }
        match &self.rule {
            ProbabilityRule::Constant { p } => {
                if !(0.0..=1.0).contains(p) {
                    return err(format!("constant probability {p} is outside [0, 1]"));
                }
            }
            ProbabilityRule::Table { column, probabilities } => {
                let f = self
                    .feature(column)
                    .ok_or_else(|| SynthError::Spec(format!("table column `{column}` is not a feature")))?;
                for (v, _) in f.dist.support() {
                    match probabilities.get(&v) {
                        None => return err(format!("table has no probability for {column} = {v}")),
                        Some(p) if !(0.0..=1.0).contains(p) => {
                            return err(format!("table probability {p} for {column} = {v} is outside [0, 1]"))
                        }
                        _ => {}
                    }
                }
            }
            ProbabilityRule::AffineLogistic { intercept, terms } => {
                if !intercept.is_finite() {
                    return err("intercept must be finite".into());
                }
                let mut term_columns = HashSet::new();
                for t in terms {
                    if !term_columns.insert(t.column.as_str()) {
                        return err(format!("feature `{}` has more than one logit term", t.column));
                    }
                    let f = self
                        .feature(&t.column)
                        .ok_or_else(|| SynthError::Spec(format!("logit term column `{}` is not a feature", t.column)))?;
                    match t.slope {
                        Some(s) if !(s.is_finite() && t.center.is_finite()) => {
                            return err(format!("term `{}` has a non-finite slope or center", t.column))
                        }
                        Some(_) if !t.effects.is_empty() => {
                            return err(format!("term `{}` has both a slope and effects", t.column))
                        }
                        None => {
                            for (v, _) in f.dist.support() {
                                if !t.effects.get(&v).is_some_and(|e| e.is_finite()) {
                                    return err(format!("term `{}` has no effect for level {v}", t.column));
                                }
                            }
                        }
                        _ => {}
                    }
                }
            }
        }
        Ok(())
    }

    /// A task over the generated columns: predict `Y`, no population filter.
    pub fn task(&self) -> TaskDefinition {
        TaskDefinition {
            task_id: "Synthetic".into(),
            description: "Synthetic population with known outcome probabilities.".into(),
            target_column: SYNTH_TARGET.into(),
            feature_columns: self.feature_columns(),
            target_rule: BinarizationRule::CodeInSet { positive_codes: vec![1] },
            population_filter: Vec::new(),
            question: "Does this person have the outcome of interest?".into(),
            positive_choice: "Yes.".into(),
            negative_choice: "No.".into(),
            numeric_question: "What is the probability that this person has the outcome of interest?".into(),
        }
    }
}
