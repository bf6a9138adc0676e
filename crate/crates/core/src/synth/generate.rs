use std::cell::RefCell;
use std::collections::HashMap;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::spec::{sigmoid, FeatureDist, LogitTerm, ProbabilityRule, SyntheticSpec, SYNTH_TARGET};
use super::{Result, SynthError};
use crate::tabular::{ColumnKind, ColumnSchema, LineageStep, TabularDataset};

const POPULATION_STREAM: u64 = 0;
const LABEL_STREAM: u64 = 1;
const MAX_HIDDEN_SUPPORT: usize = 4_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub row_id: u64,
    pub p: f64,
    pub y: u8,
}

#[derive(Debug, Clone)]
pub struct SyntheticPopulation {
    /// Feature columns in spec order, then the label column `Y`.
    pub dataset: TabularDataset,
    pub truth: Vec<GroundTruthRecord>,
}

impl SyntheticPopulation {
    pub fn probabilities(&self) -> HashMap<u64, f64> {
        self.truth.iter().map(|t| (t.row_id, t.p)).collect()
    }
}

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Deterministic in `spec.seed`: features come from one generator stream
/// and labels from another.
pub fn generate_population(spec: &SyntheticSpec) -> Result<SyntheticPopulation> {
    spec.validate()?;
    let mut pop = stream(spec.seed, POPULATION_STREAM);
    let samplers: Vec<Box<dyn Fn(&mut ChaCha8Rng) -> i64>> = spec
        .features
        .iter()
        .map(|f| -> Box<dyn Fn(&mut ChaCha8Rng) -> i64> {
            match f.dist.clone() {
                FeatureDist::Integer { min, max } => Box::new(move |r| r.random_range(min..=max)),
                FeatureDist::Categorical { levels, weights: None } => {
                    Box::new(move |r| levels[r.random_range(0..levels.len())])
                }
                FeatureDist::Categorical { levels, weights: Some(w) } => {
                    let idx = WeightedIndex::new(&w).expect("weights validated");
                    Box::new(move |r| levels[idx.sample(r)])
                }
            }
        })
        .collect();

    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(spec.n); spec.features.len() + 1];
    let mut row = vec![0i64; spec.features.len()];
    let mut probs = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        for (j, sample) in samplers.iter().enumerate() {
            row[j] = sample(&mut pop);
            columns[j].push(row[j] as f64);
        }
        probs.push(true_probability(spec, &row));
    }

    let mut labels = stream(spec.seed, LABEL_STREAM);
    let truth: Vec<GroundTruthRecord> = probs
        .iter()
        .enumerate()
        .map(|(i, &p)| GroundTruthRecord {
            row_id: i as u64,
            p,
            y: u8::from(labels.random::<f64>() < p),
        })
        .collect();
    columns[spec.features.len()] = truth.iter().map(|t| f64::from(t.y)).collect();

    let mut schema: Vec<ColumnSchema> = spec
        .features
        .iter()
        .map(|f| ColumnSchema::new(f.column.clone(), f.dist.column_kind()))
        .collect();
    schema.push(ColumnSchema::new(SYNTH_TARGET, ColumnKind::Categorical));
    let dataset = TabularDataset::from_columns(
        schema,
        (0..spec.n as u64).collect(),
        columns,
        LineageStep::Synthetic {
            seed: spec.seed,
            rows: spec.n,
        },
    )?;
    Ok(SyntheticPopulation { dataset, truth })
}

/// P(Y = 1 | x) with every feature observed; `row` follows spec order.
pub fn true_probability(spec: &SyntheticSpec, row: &[i64]) -> f64 {
    let value = |column: &str| {
        let j = spec.features.iter().position(|f| f.column == column).expect("validated column");
        row[j]
    };
    match &spec.rule {
        ProbabilityRule::Constant { p } => *p,
        ProbabilityRule::Table { column, probabilities } => probabilities[&value(column)],
        ProbabilityRule::AffineLogistic { intercept, terms } => {
            let mut z = *intercept;
            for t in terms {
                z += t.contribution(value(&t.column));
            }
            sigmoid(z)
        }
    }
}

enum Conditional<'a> {
    Constant(f64),
    Table { column: &'a str, probabilities: &'a std::collections::BTreeMap<i64, f64> },
    Logistic {
        intercept: f64,
        visible: Vec<&'a LogitTerm>,
        /// Distribution of the summed hidden logit terms.
        hidden: Vec<(f64, f64)>,
        memo: RefCell<HashMap<u64, f64>>,
    },
}

/// P(Y = 1 | visible features), integrating out the hidden ones exactly
/// under the spec's independent feature distributions.
pub struct ConditionalProbability<'a> {
    inner: Conditional<'a>,
}

impl<'a> ConditionalProbability<'a> {
    pub fn new(spec: &'a SyntheticSpec, visible: &[String]) -> Result<Self> {
        spec.validate()?;
        let is_visible = |c: &str| visible.iter().any(|v| v == c);
        let inner = match &spec.rule {
            ProbabilityRule::Constant { p } => Conditional::Constant(*p),
            ProbabilityRule::Table { column, probabilities } => {
                if is_visible(column) {
                    Conditional::Table { column, probabilities }
                } else {
                    let f = spec.feature(column).expect("validated column");
                    Conditional::Constant(f.dist.support().iter().map(|(v, w)| w * probabilities[v]).sum())
                }
            }
            ProbabilityRule::AffineLogistic { intercept, terms } => {
                let mut hidden = vec![(0.0f64, 1.0f64)];
                for t in terms.iter().filter(|t| !is_visible(&t.column)) {
                    let support = spec.feature(&t.column).expect("validated column").dist.support();
                    if hidden.len().saturating_mul(support.len()) > MAX_HIDDEN_SUPPORT {
                        return Err(SynthError::Spec(
                            "hidden features have too many joint values to marginalize".into(),
                        ));
                    }
                    let mut next = Vec::with_capacity(hidden.len() * support.len());
                    for &(s, w) in &hidden {
                        for &(v, wv) in &support {
                            next.push((s + t.contribution(v), w * wv));
                        }
                    }
                    next.sort_by(|a, b| a.0.total_cmp(&b.0));
                    hidden.clear();
                    for (s, w) in next {
                        match hidden.last_mut() {
                            Some(last) if last.0 == s => last.1 += w,
                            _ => hidden.push((s, w)),
                        }
                    }
                }
                Conditional::Logistic {
                    intercept: *intercept,
                    visible: terms.iter().filter(|t| is_visible(&t.column)).collect(),
                    hidden,
                    memo: RefCell::new(HashMap::new()),
                }
            }
        };
        Ok(Self { inner })
    }

    /// `value` reads a visible feature of the row being scored.
    pub fn probability(&self, value: impl Fn(&str) -> Option<i64>) -> Result<f64> {
        let get = |c: &str| value(c).ok_or_else(|| SynthError::Spec(format!("row has no value for `{c}`")));
        match &self.inner {
            Conditional::Constant(p) => Ok(*p),
            Conditional::Table { column, probabilities } => {
                let v = get(column)?;
                probabilities
                    .get(&v)
                    .copied()
                    .ok_or_else(|| SynthError::Spec(format!("no table probability for {column} = {v}")))
            }
            Conditional::Logistic { intercept, visible, hidden, memo } => {
                let mut z = *intercept;
                for t in visible {
                    z += t.contribution(get(&t.column)?);
                }
                if let Some(p) = memo.borrow().get(&z.to_bits()) {
                    return Ok(*p);
                }
                let p = hidden.iter().map(|(h, w)| w * sigmoid(z + h)).sum::<f64>().clamp(0.0, 1.0);
                memo.borrow_mut().insert(z.to_bits(), p);
                Ok(p)
            }
        }
    }
}

/// Row id → P(Y = 1 | visible features) for every row of `dataset`.
pub fn oracle_probabilities(
    spec: &SyntheticSpec,
    dataset: &TabularDataset,
    visible: &[String],
) -> Result<HashMap<u64, f64>> {
    let cond = ConditionalProbability::new(spec, visible)?;
    let mut out = HashMap::with_capacity(dataset.len());
    for r in 0..dataset.len() {
        let row = dataset.row(r);
        let p = cond.probability(|c| row.get(c).and_then(|v| v.as_f64()).map(|x| x as i64))?;
        out.insert(row.row_id(), p);
    }
    Ok(out)
}

/// `row_id,p,y` with probabilities in shortest round-trip form.
pub fn write_ground_truth(path: &Path, truth: &[GroundTruthRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for t in truth {
        w.serialize(t)?;
    }
    w.flush()?;
    Ok(())
}
