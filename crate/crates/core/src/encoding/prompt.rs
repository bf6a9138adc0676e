use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::codebook::{encode_value, CodebookConfig};
use super::{EncodeError, Result};
use crate::tabular::{RowView, TaskDefinition};

pub const INFO_HEADER: &str = "Information about this person:";
pub const NUMERIC_ANSWER_LINE: &str = "Answer (between 0 and 1): ";
pub const NUMERIC_ANSWER_PREFIX: &str = "0.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    MultipleChoice,
    Numeric,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::MultipleChoice => "multiple-choice",
            Scheme::Numeric => "numeric",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChoiceOrdering {
    PositiveFirst,
    NegativeFirst,
}

impl ChoiceOrdering {
    pub const BOTH: [ChoiceOrdering; 2] = [ChoiceOrdering::PositiveFirst, ChoiceOrdering::NegativeFirst];
}

/// A fully assembled prompt and what is needed to read its answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub text: String,
    pub scheme: Scheme,
    /// Multiple-choice only.
    pub ordering: Option<ChoiceOrdering>,
    /// Numeric only; already the tail of `text`.
    pub answer_prefix: Option<String>,
    /// Choice letter to class label; empty for numeric prompts.
    pub choice_token_map: BTreeMap<char, u8>,
}

impl PromptBundle {
    pub fn letter_for_class(&self, class: u8) -> Option<char> {
        self.choice_token_map
            .iter()
            .find(|(_, &c)| c == class)
            .map(|(&l, _)| l)
    }
}

/// Bulleted feature sentences in task feature order, under the
/// information header.
pub fn encode_row(row: RowView<'_>, task: &TaskDefinition, codebook: &CodebookConfig) -> Result<String> {
    let mut out = String::from(INFO_HEADER);
    for feature in &task.feature_columns {
        let mapping = codebook.mapping(feature)?;
        let value = row.get(feature).ok_or_else(|| EncodeError::MissingColumn {
            column: feature.clone(),
        })?;
        out.push_str("\n- ");
        out.push_str(&encode_value(mapping, value)?);
    }
    Ok(out)
}

fn context(row: RowView<'_>, task: &TaskDefinition, codebook: &CodebookConfig) -> Result<String> {
    Ok(format!(
        "{}\n\n{}\n\n",
        codebook.population_preamble,
        encode_row(row, task, codebook)?
    ))
}

pub fn build_multiple_choice_prompt(
    row: RowView<'_>,
    task: &TaskDefinition,
    codebook: &CodebookConfig,
    ordering: ChoiceOrdering,
) -> Result<PromptBundle> {
    let (first, second, map) = match ordering {
        ChoiceOrdering::PositiveFirst => (&task.positive_choice, &task.negative_choice, [('A', 1), ('B', 0)]),
        ChoiceOrdering::NegativeFirst => (&task.negative_choice, &task.positive_choice, [('A', 0), ('B', 1)]),
    };
    let text = format!(
        "{}Question: {}\nA: {}\nB: {}\nAnswer:",
        context(row, task, codebook)?,
        task.question,
        first,
        second
    );
    Ok(PromptBundle {
        text,
        scheme: Scheme::MultipleChoice,
        ordering: Some(ordering),
        answer_prefix: None,
        choice_token_map: map.into_iter().collect(),
    })
}

pub fn build_numeric_prompt(
    row: RowView<'_>,
    task: &TaskDefinition,
    codebook: &CodebookConfig,
) -> Result<PromptBundle> {
    let text = format!(
        "{}Question: {}\n{}{}",
        context(row, task, codebook)?,
        task.numeric_question,
        NUMERIC_ANSWER_LINE,
        NUMERIC_ANSWER_PREFIX
    );
    Ok(PromptBundle {
        text,
        scheme: Scheme::Numeric,
        ordering: None,
        answer_prefix: Some(NUMERIC_ANSWER_PREFIX.to_string()),
        choice_token_map: BTreeMap::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::ColumnToText;
    use crate::tabular::{acs_schema, LineageStep, TabularDataset};
    use proptest::prelude::*;

    fn rows() -> TabularDataset {
        TabularDataset::from_columns(
            acs_schema(&["SEX", "AGEP", "WKHP", "OCCP"]),
            vec![0, 1],
            vec![
                vec![1.0, 1.0],
                vec![50.0, 50.0],
                vec![40.0, f64::NAN],
                vec![10.0, 4720.0],
            ],
            LineageStep::Load {
                source: "t".into(),
                rows: 2,
            },
        )
        .unwrap()
    }

    fn short_codebook() -> CodebookConfig {
        CodebookConfig::bundled()
            .with_mapping(ColumnToText::categorical("SEX", "Gender is", [(1, "Male"), (2, "Female")]))
            .with_mapping(ColumnToText::numeric("AGEP", "Age is", "{int} years old"))
    }

    fn task(features: &[&str]) -> TaskDefinition {
        TaskDefinition::bundled("ACSIncome")
            .unwrap()
            .with_features(features.iter().map(|s| s.to_string()).collect())
            .unwrap()
    }

    #[test]
    fn feature_block_matches_worked_example() {
        let d = rows();
        let block = encode_row(d.row(0), &task(&["SEX", "AGEP"]), &short_codebook()).unwrap();
        assert_eq!(
            block,
            "Information about this person:\n- Gender is: Male.\n- Age is: 50 years old."
        );
    }

    #[test]
    fn empty_feature_list_is_header_only() {
        let d = rows();
        let block = encode_row(d.row(0), &task(&[]), &short_codebook()).unwrap();
        assert_eq!(block, INFO_HEADER);
    }

    #[test]
    fn reordered_features_reorder_bullets() {
        let d = rows();
        let cb = short_codebook();
        let a = encode_row(d.row(0), &task(&["SEX", "AGEP"]), &cb).unwrap();
        let b = encode_row(d.row(0), &task(&["AGEP", "SEX"]), &cb).unwrap();
        let la: Vec<&str> = a.lines().collect();
        let lb: Vec<&str> = b.lines().collect();
        assert_eq!(la[1], lb[2]);
        assert_eq!(la[2], lb[1]);
    }

    #[test]
    fn choice_lines_follow_ordering() {
        let d = rows();
        let cb = short_codebook();
        let t = task(&["SEX", "AGEP"]);
        let pos = build_multiple_choice_prompt(d.row(0), &t, &cb, ChoiceOrdering::PositiveFirst).unwrap();
        assert!(pos.text.ends_with("\nA: Above $50,000.\nB: Below $50,000.\nAnswer:"));
        assert_eq!(pos.choice_token_map, BTreeMap::from([('A', 1), ('B', 0)]));
        let neg = build_multiple_choice_prompt(d.row(0), &t, &cb, ChoiceOrdering::NegativeFirst).unwrap();
        assert!(neg.text.ends_with("\nA: Below $50,000.\nB: Above $50,000.\nAnswer:"));
        assert_eq!(neg.choice_token_map, BTreeMap::from([('A', 0), ('B', 1)]));
        assert_eq!(neg.letter_for_class(1), Some('B'));

        for p in [&pos, &neg] {
            let starts = |pfx: &str| p.text.lines().filter(|l| l.starts_with(pfx)).count();
            assert_eq!(starts("A:"), 1);
            assert_eq!(starts("B:"), 1);
        }

        // Orderings differ only inside the two choice lines.
        let diff: Vec<(&str, &str)> = pos
            .text
            .lines()
            .zip(neg.text.lines())
            .filter(|(a, b)| a != b)
            .collect();
        assert_eq!(diff.len(), 2);
        assert!(diff.iter().all(|(a, _)| a.starts_with("A:") || a.starts_with("B:")));
    }

    #[test]
    fn excluded_column_does_not_change_prompt() {
        let d = rows();
        let t = task(&["SEX", "AGEP"]);
        let cb = short_codebook();
        let a = build_multiple_choice_prompt(d.row(0), &t, &cb, ChoiceOrdering::PositiveFirst).unwrap();
        let b = build_multiple_choice_prompt(d.row(1), &t, &cb, ChoiceOrdering::PositiveFirst).unwrap();
        assert_eq!(a.text, b.text);
    }

    #[test]
    fn numeric_prompt_shape() {
        let d = rows();
        let cb = CodebookConfig::bundled();
        let p = build_numeric_prompt(d.row(0), &task(&["SEX", "AGEP"]), &cb).unwrap();
        assert!(p.text.ends_with(
            "Question: What is the probability that this person's yearly income is above $50,000?\nAnswer (between 0 and 1): 0."
        ));
        assert_eq!(p.answer_prefix.as_deref(), Some("0."));
        assert_eq!(p.scheme, Scheme::Numeric);
        assert!(p.ordering.is_none());
        assert_eq!(p.text.matches(&cb.population_preamble).count(), 1);
        assert!(p.text.starts_with(&cb.population_preamble));
    }

    #[test]
    fn removing_a_feature_removes_only_its_bullet() {
        let d = rows();
        let cb = CodebookConfig::bundled();
        let full = build_numeric_prompt(d.row(1), &task(&["SEX", "AGEP", "WKHP", "OCCP"]), &cb).unwrap();
        let less = build_numeric_prompt(d.row(1), &task(&["SEX", "AGEP", "OCCP"]), &cb).unwrap();
        let removed: Vec<&str> = full.text.lines().filter(|l| !less.text.lines().any(|m| m == *l)).collect();
        assert_eq!(removed.len(), 1);
        assert!(removed[0].starts_with("- The individual's usual number of hours"));
        assert_eq!(full.text.lines().count(), less.text.lines().count() + 1);
    }

    #[test]
    fn unmapped_feature_column_is_reported() {
        let d = rows();
        let mut cb = CodebookConfig::bundled();
        cb.mappings.remove("SEX");
        assert!(matches!(
            encode_row(d.row(0), &task(&["SEX"]), &cb),
            Err(EncodeError::MissingMapping { .. })
        ));
    }

    proptest! {
        #[test]
        fn encoding_is_stable(age in 0i64..100, sex in 1i64..=2, hours in proptest::option::of(1i64..99)) {
            let d = TabularDataset::from_columns(
                acs_schema(&["SEX", "AGEP", "WKHP"]),
                vec![0],
                vec![vec![sex as f64], vec![age as f64], vec![hours.map_or(f64::NAN, |h| h as f64)]],
                LineageStep::Load { source: "p".into(), rows: 1 },
            ).unwrap();
            let t = task(&["SEX", "AGEP", "WKHP"]);
            let cb = CodebookConfig::bundled();
            let a = build_multiple_choice_prompt(d.row(0), &t, &cb, ChoiceOrdering::NegativeFirst).unwrap();
            let b = build_multiple_choice_prompt(d.row(0), &t, &cb, ChoiceOrdering::NegativeFirst).unwrap();
            prop_assert_eq!(a.text, b.text);
        }
    }
}
