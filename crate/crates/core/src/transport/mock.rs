use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::types::{prompt_digest, CompletionRequest, TokenDistribution};
use super::{CompletionModel, TransportError};
use crate::encoding::{NUMERIC_ANSWER_LINE, NUMERIC_ANSWER_PREFIX};

/// Token that soaks up the probability mass an oracle does not place on an
/// answer token.
pub const FILLER_TOKEN: &str = "\n";

/// Adapts a closure into a [`CompletionModel`].
pub struct FnModel<F> {
    f: F,
}

impl<F> FnModel<F>
where
    F: Fn(&CompletionRequest) -> Result<Vec<TokenDistribution>, TransportError> + Send + Sync,
{
    pub fn new(f: F) -> Self {
        Self { f }
    }
}

impl<F> CompletionModel for FnModel<F>
where
    F: Fn(&CompletionRequest) -> Result<Vec<TokenDistribution>, TransportError> + Send + Sync,
{
    fn complete(&self, request: &CompletionRequest) -> Result<Vec<TokenDistribution>, TransportError> {
        (self.f)(request)
    }
}

/// One scripted answer, addressed by literal prompt or by its SHA-256.
/// An empty distribution list plays back as an endpoint without logprobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_sha256: Option<String>,
    pub distributions: Vec<BTreeMap<String, f64>>,
}

#[derive(Debug, Deserialize)]
struct ScriptFile {
    responses: Vec<ScriptedResponse>,
}

/// Deterministic playback of a prompt-digest → distributions table.
#[derive(Debug, Default)]
pub struct ScriptedModel {
    table: HashMap<String, Option<Vec<TokenDistribution>>>,
    calls: AtomicU64,
}

impl ScriptedModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_responses(responses: Vec<ScriptedResponse>) -> Result<Self, TransportError> {
        let mut m = Self::new();
        for r in responses {
            let digest = match (&r.prompt, &r.prompt_sha256) {
                (Some(p), _) => prompt_digest(p),
                (None, Some(d)) => d.to_ascii_lowercase(),
                (None, None) => {
                    return Err(TransportError::Config(
                        "scripted response needs `prompt` or `prompt_sha256`".into(),
                    ))
                }
            };
            let dists = r
                .distributions
                .into_iter()
                .enumerate()
                .map(|(i, map)| TokenDistribution::new(i, map.into_iter().collect()))
                .collect::<Result<Vec<_>, _>>()?;
            m.table.insert(digest, (!dists.is_empty()).then_some(dists));
        }
        Ok(m)
    }

    /// Reads `{"responses": [...]}` from a JSON file.
    pub fn from_json_file(path: &Path) -> Result<Self, TransportError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TransportError::Config(format!("cannot read {}: {e}", path.display())))?;
        let file: ScriptFile = serde_json::from_str(&text)
            .map_err(|e| TransportError::Config(format!("bad script {}: {e}", path.display())))?;
        Self::from_responses(file.responses)
    }

    pub fn insert(&mut self, prompt: &str, dists: Vec<TokenDistribution>) {
        self.table.insert(prompt_digest(prompt), Some(dists));
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl CompletionModel for ScriptedModel {
    fn complete(&self, request: &CompletionRequest) -> Result<Vec<TokenDistribution>, TransportError> {
        request.validate()?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        let digest = prompt_digest(&request.prompt);
        match self.table.get(&digest) {
            None => Err(TransportError::ScriptedMiss { digest }),
            Some(None) => Err(TransportError::Capability("endpoint does not expose logprobs".into())),
            Some(Some(d)) => Ok(d.iter().take(request.max_generated_tokens as usize).cloned().collect()),
        }
    }
}

enum PromptKind {
    /// Letters for (positive, negative) choices.
    Choice { positive: &'static str, negative: &'static str },
    NumericFirst,
    NumericSecond,
}

type ProbabilityFn = dyn Fn(u64) -> Option<f64> + Send + Sync;

/// Answers prompts built by this crate with a known per-row probability.
pub struct OracleModel {
    probability: Box<ProbabilityFn>,
    leakage: f64,
    positive_choice: String,
    negative_choice: String,
    calls: AtomicU64,
}

impl std::fmt::Debug for OracleModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OracleModel")
            .field("leakage", &self.leakage)
            .field("positive_choice", &self.positive_choice)
            .field("negative_choice", &self.negative_choice)
            .finish_non_exhaustive()
    }
}

impl OracleModel {
    /// `leakage` is the total mass placed on the two answer tokens; the
    /// rest goes to [`FILLER_TOKEN`].
    pub fn new(
        positive_choice: impl Into<String>,
        negative_choice: impl Into<String>,
        leakage: f64,
        probability: impl Fn(u64) -> Option<f64> + Send + Sync + 'static,
    ) -> Result<Self, TransportError> {
        if !(leakage > 0.0 && leakage <= 1.0) {
            return Err(TransportError::Config(format!("leakage mass {leakage} is outside (0, 1]")));
        }
        Ok(Self {
            probability: Box::new(probability),
            leakage,
            positive_choice: positive_choice.into(),
            negative_choice: negative_choice.into(),
            calls: AtomicU64::new(0),
        })
    }

    pub fn from_map(
        positive_choice: impl Into<String>,
        negative_choice: impl Into<String>,
        leakage: f64,
        probabilities: HashMap<u64, f64>,
    ) -> Result<Self, TransportError> {
        Self::new(positive_choice, negative_choice, leakage, move |id| probabilities.get(&id).copied())
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    fn row_probability(&self, request: &CompletionRequest) -> Result<f64, TransportError> {
        let id = request
            .row_id
            .ok_or_else(|| TransportError::Oracle("request carries no row id".into()))?;
        let p = (self.probability)(id)
            .ok_or_else(|| TransportError::Oracle(format!("no probability for row {id}")))?;
        if !(0.0..=1.0).contains(&p) {
            return Err(TransportError::Oracle(format!("probability {p} for row {id} is outside [0, 1]")));
        }
        Ok(p)
    }

    fn classify(&self, prompt: &str) -> Result<PromptKind, TransportError> {
        let numeric_first = format!("{NUMERIC_ANSWER_LINE}{NUMERIC_ANSWER_PREFIX}");
        if prompt.ends_with(&numeric_first) {
            return Ok(PromptKind::NumericFirst);
        }
        if let Some(head) = prompt.strip_suffix(|c: char| c.is_ascii_digit()) {
            if head.ends_with(&numeric_first) {
                return Ok(PromptKind::NumericSecond);
            }
        }
        if prompt.ends_with("\nAnswer:") {
            let choice = |letter: &str| {
                prompt
                    .lines()
                    .rev()
                    .find_map(|l| l.strip_prefix(letter))
                    .map(str::to_string)
            };
            let (a, b) = (choice("A: "), choice("B: "));
            let (pos, neg) = (Some(&self.positive_choice), Some(&self.negative_choice));
            if a.as_ref() == pos && b.as_ref() == neg {
                return Ok(PromptKind::Choice { positive: "A", negative: "B" });
            }
            if a.as_ref() == neg && b.as_ref() == pos {
                return Ok(PromptKind::Choice { positive: "B", negative: "A" });
            }
        }
        Err(TransportError::Oracle("unrecognizable prompt".into()))
    }

    fn answer(&self, entries: Vec<(String, f64)>) -> Result<Vec<TokenDistribution>, TransportError> {
        let mut entries = entries;
        let filler = 1.0 - self.leakage;
        if filler > 0.0 {
            entries.push((FILLER_TOKEN.to_string(), filler));
        }
        Ok(vec![TokenDistribution::new(0, entries)?])
    }
}

/// Two-digit grid value used for numeric answers. `p = 1` cannot be written
/// after a literal "0." so it is clamped to 0.99.
pub fn numeric_grid_index(p: f64) -> u32 {
    ((p * 100.0).round() as u32).min(99)
}

impl CompletionModel for OracleModel {
    fn complete(&self, request: &CompletionRequest) -> Result<Vec<TokenDistribution>, TransportError> {
        request.validate()?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        let p = self.row_probability(request)?;
        let c = self.leakage;
        match self.classify(&request.prompt)? {
            PromptKind::Choice { positive, negative } => self.answer(vec![
                (positive.to_string(), c * p),
                (negative.to_string(), c * (1.0 - p)),
            ]),
            PromptKind::NumericFirst => {
                self.answer(vec![((numeric_grid_index(p) / 10).to_string(), c)])
            }
            PromptKind::NumericSecond => {
                self.answer(vec![((numeric_grid_index(p) % 10).to_string(), c)])
            }
        }
    }
}

/// Oracle whose first listed choice has its odds inflated by a fixed factor,
/// whatever that choice means.
#[derive(Debug)]
pub struct PositionBiasModel {
    oracle: OracleModel,
    first_choice_odds: f64,
}

impl PositionBiasModel {
    pub fn new(oracle: OracleModel, first_choice_odds: f64) -> Result<Self, TransportError> {
        if !(first_choice_odds > 0.0 && first_choice_odds.is_finite()) {
            return Err(TransportError::Config("bias factor must be positive".into()));
        }
        Ok(Self {
            oracle,
            first_choice_odds,
        })
    }
}

impl CompletionModel for PositionBiasModel {
    fn complete(&self, request: &CompletionRequest) -> Result<Vec<TokenDistribution>, TransportError> {
        let o = &self.oracle;
        request.validate()?;
        let PromptKind::Choice { positive, .. } = o.classify(&request.prompt)? else {
            return o.complete(request);
        };
        o.calls.fetch_add(1, Ordering::SeqCst);
        let p = o.row_probability(request)?;
        let (a, b) = if positive == "A" { (p, 1.0 - p) } else { (1.0 - p, p) };
        let a = self.first_choice_odds * a;
        let total = a + b;
        o.answer(vec![
            ("A".to_string(), o.leakage * a / total),
            ("B".to_string(), o.leakage * b / total),
        ])
    }
}
