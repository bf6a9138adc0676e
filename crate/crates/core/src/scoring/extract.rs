use serde::{Deserialize, Serialize};

use super::{Result, ScoreError};
use crate::encoding::{PromptBundle, Scheme};
use crate::transport::TokenDistribution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreFlag {
    /// Only one choice ordering produced a score.
    SingleOrdering,
    /// The numeric second pass had no digit, so only one digit was used.
    SingleDigit,
}

impl ScoreFlag {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScoreFlag::SingleOrdering => "single-ordering",
            ScoreFlag::SingleDigit => "single-digit",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "single-ordering" => Some(ScoreFlag::SingleOrdering),
            "single-digit" => Some(ScoreFlag::SingleDigit),
            _ => None,
        }
    }
}

/// A score plus any fallback that was needed to produce it.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub score: f64,
    pub flags: Vec<ScoreFlag>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceProbabilities {
    pub p_positive: f64,
    pub p_negative: f64,
    pub matched_variants: Vec<String>,
}

/// Token spellings accepted for a choice letter.
pub fn choice_variants(letter: char) -> [String; 4] {
    [
        letter.to_string(),
        format!(" {letter}"),
        format!("{letter})"),
        format!("{letter}:"),
    ]
}

fn expect_scheme(bundle: &PromptBundle, expected: Scheme) -> Result<()> {
    if bundle.scheme != expected {
        return Err(ScoreError::WrongScheme {
            expected: expected.as_str(),
            found: bundle.scheme.as_str(),
        });
    }
    Ok(())
}

pub fn choice_probabilities(dist: &TokenDistribution, bundle: &PromptBundle) -> Result<ChoiceProbabilities> {
    expect_scheme(bundle, Scheme::MultipleChoice)?;
    let mut out = ChoiceProbabilities {
        p_positive: 0.0,
        p_negative: 0.0,
        matched_variants: Vec::new(),
    };
    for (&letter, &class) in &bundle.choice_token_map {
        let variants = choice_variants(letter);
        for (token, p) in dist.entries() {
            if variants.contains(token) {
                if class == 1 {
                    out.p_positive += p;
                } else {
                    out.p_negative += p;
                }
                out.matched_variants.push(token.clone());
            }
        }
    }
    if out.p_positive + out.p_negative <= 0.0 {
        return Err(ScoreError::NoChoiceTokens);
    }
    Ok(out)
}

/// Positive-class share of the two choice masses.
pub fn mc_score_single_order(dist: &TokenDistribution, bundle: &PromptBundle) -> Result<f64> {
    let c = choice_probabilities(dist, bundle)?;
    Ok(c.p_positive / (c.p_positive + c.p_negative))
}

/// Mean of the single-order scores across orderings. `None` marks an
/// ordering whose request failed. Any failing ordering is dropped and the
/// result flagged.
pub fn mc_score(per_ordering: &[(Option<&TokenDistribution>, &PromptBundle)]) -> Result<Extraction> {
    let mut scores = Vec::with_capacity(per_ordering.len());
    for (dist, bundle) in per_ordering {
        expect_scheme(bundle, Scheme::MultipleChoice)?;
        if let Some(d) = dist {
            match mc_score_single_order(d, bundle) {
                Ok(s) => scores.push(s),
                Err(ScoreError::NoChoiceTokens) => {}
                Err(e) => return Err(e),
            }
        }
    }
    if scores.is_empty() {
        return Err(ScoreError::AllOrderingsFailed);
    }
    let flags = if scores.len() < per_ordering.len() {
        vec![ScoreFlag::SingleOrdering]
    } else {
        Vec::new()
    };
    Ok(Extraction {
        score: scores.iter().sum::<f64>() / scores.len() as f64,
        flags,
    })
}

fn digit_of(token: &str) -> Option<u8> {
    let t = token.strip_prefix(' ').unwrap_or(token);
    let mut chars = t.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) if c.is_ascii_digit() => Some(c as u8 - b'0'),
        _ => None,
    }
}

/// Most probable digit, summing "d" and " d" spellings. Ties go to the
/// smaller digit.
pub fn top_digit(dist: &TokenDistribution) -> Option<u8> {
    let mut mass = [0.0f64; 10];
    for (token, p) in dist.entries() {
        if let Some(d) = digit_of(token) {
            mass[d as usize] += p;
        }
    }
    (0..10u8)
        .filter(|&d| mass[d as usize] > 0.0)
        .fold(None, |best: Option<u8>, d| match best {
            Some(b) if mass[b as usize] >= mass[d as usize] => Some(b),
            _ => Some(d),
        })
}

/// Prompt for the second numeric pass: the first prompt plus its digit.
pub fn numeric_second_pass_prompt(bundle: &PromptBundle, first_digit: u8) -> String {
    format!("{}{}", bundle.text, first_digit)
}

/// Two-digit score from two greedy passes; one digit if the second pass
/// offers none.
pub fn numeric_score(
    first: &TokenDistribution,
    second: Option<&TokenDistribution>,
    bundle: &PromptBundle,
) -> Result<Extraction> {
    expect_scheme(bundle, Scheme::Numeric)?;
    let d1 = top_digit(first).ok_or(ScoreError::NoDigit)?;
    match second.and_then(top_digit) {
        Some(d2) => Ok(Extraction {
            score: f64::from(10 * d1 + d2) / 100.0,
            flags: Vec::new(),
        }),
        None => Ok(Extraction {
            score: f64::from(d1) / 10.0,
            flags: vec![ScoreFlag::SingleDigit],
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::ChoiceOrdering;
    use crate::transport::{CompletionModel, CompletionRequest, OracleModel, PositionBiasModel};
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn bundle(ordering: ChoiceOrdering) -> PromptBundle {
        let (first, second, map) = match ordering {
            ChoiceOrdering::PositiveFirst => ("Yes.", "No.", [('A', 1), ('B', 0)]),
            ChoiceOrdering::NegativeFirst => ("No.", "Yes.", [('A', 0), ('B', 1)]),
        };
        PromptBundle {
            text: format!("Preamble\n\nQuestion: q?\nA: {first}\nB: {second}\nAnswer:"),
            scheme: Scheme::MultipleChoice,
            ordering: Some(ordering),
            answer_prefix: None,
            choice_token_map: map.into_iter().collect(),
        }
    }

    fn numeric_bundle() -> PromptBundle {
        PromptBundle {
            text: "Preamble\n\nQuestion: q?\nAnswer (between 0 and 1): 0.".into(),
            scheme: Scheme::Numeric,
            ordering: None,
            answer_prefix: Some("0.".into()),
            choice_token_map: BTreeMap::new(),
        }
    }

    fn dist(entries: &[(&str, f64)]) -> TokenDistribution {
        TokenDistribution::new(0, entries.iter().map(|(t, p)| (t.to_string(), *p)).collect()).unwrap()
    }

    /// Independent reference: walk every (token, letter, variant) triple.
    fn brute_force_score(entries: &[(&str, f64)], map: &[(char, u8)]) -> Option<f64> {
        let mut mass = [0.0f64; 2];
        for (token, p) in entries {
            for (letter, class) in map {
                for prefix in ["", " "] {
                    for suffix in ["", ")", ":"] {
                        if prefix == " " && !suffix.is_empty() {
                            continue;
                        }
                        if *token == format!("{prefix}{letter}{suffix}") {
                            mass[*class as usize] += p;
                        }
                    }
                }
            }
        }
        (mass[0] + mass[1] > 0.0).then(|| mass[1] / (mass[0] + mass[1]))
    }

    #[test]
    fn single_order_examples() {
        let b = bundle(ChoiceOrdering::PositiveFirst);
        assert!((mc_score_single_order(&dist(&[("A", 0.6), ("B", 0.2)]), &b).unwrap() - 0.75).abs() < 1e-15);
        assert_eq!(mc_score_single_order(&dist(&[("A", 0.3), ("B", 0.3)]), &b).unwrap(), 0.5);
        let variants = [("A", 0.3), (" A", 0.3), ("B", 0.2)];
        let r = mc_score_single_order(&dist(&variants), &b).unwrap();
        let oracle = brute_force_score(&variants, &[('A', 1), ('B', 0)]).unwrap();
        assert!((oracle - 0.75).abs() < 1e-15);
        assert!((r - oracle).abs() < 1e-15);
    }

    #[test]
    fn negative_first_resolves_classes_by_map() {
        let b = bundle(ChoiceOrdering::NegativeFirst);
        let r = mc_score_single_order(&dist(&[("A", 0.6), ("B", 0.2)]), &b).unwrap();
        assert!((r - 0.25).abs() < 1e-15);
    }

    #[test]
    fn missing_choices_is_extraction_error() {
        let b = bundle(ChoiceOrdering::PositiveFirst);
        assert!(matches!(
            mc_score_single_order(&dist(&[("C", 0.9)]), &b),
            Err(ScoreError::NoChoiceTokens)
        ));
        // "a" and "A." are not accepted spellings.
        assert!(mc_score_single_order(&dist(&[("a", 0.5), ("A.", 0.4)]), &b).is_err());
        assert!(matches!(
            mc_score_single_order(&dist(&[("A", 0.9)]), &numeric_bundle()),
            Err(ScoreError::WrongScheme { .. })
        ));
    }

    #[test]
    fn averaging_and_fallback() {
        let p = bundle(ChoiceOrdering::PositiveFirst);
        let n = bundle(ChoiceOrdering::NegativeFirst);
        let d1 = dist(&[("A", 0.7), ("B", 0.3)]);
        let d2 = dist(&[("A", 0.4), ("B", 0.6)]);
        let e = mc_score(&[(Some(&d1), &p), (Some(&d2), &n)]).unwrap();
        assert!((e.score - 0.65).abs() < 1e-15);
        assert!(e.flags.is_empty());

        let same = mc_score(&[(Some(&d1), &p), (Some(&d1), &p)]).unwrap();
        assert_eq!(same.score, mc_score_single_order(&d1, &p).unwrap());

        let empty = dist(&[("zzz", 0.5)]);
        let e = mc_score(&[(Some(&d1), &p), (Some(&empty), &n)]).unwrap();
        assert_eq!(e.flags, vec![ScoreFlag::SingleOrdering]);
        assert!((e.score - 0.7).abs() < 1e-15);
        let e = mc_score(&[(None, &p), (Some(&d2), &n)]).unwrap();
        assert!((e.score - 0.6).abs() < 1e-15);
        assert!(matches!(
            mc_score(&[(None, &p), (Some(&empty), &n)]),
            Err(ScoreError::AllOrderingsFailed)
        ));
    }

    #[test]
    fn position_bias_cancels_when_averaged() {
        // Brute force over both presentation orders of one row, with the
        // bundles passed in either sequence.
        for &q in &[0.1, 0.37, 0.5, 0.8] {
            for &beta in &[0.5, 2.0, 4.0] {
                let oracle = OracleModel::new("Yes.", "No.", 0.9, move |_| Some(q)).unwrap();
                let m = PositionBiasModel::new(oracle, beta).unwrap();
                let bp = bundle(ChoiceOrdering::PositiveFirst);
                let bn = bundle(ChoiceOrdering::NegativeFirst);
                let ask = |b: &PromptBundle| {
                    m.complete(&CompletionRequest::new("m", b.text.clone()).for_row(0)).unwrap().remove(0)
                };
                let (dp, dn) = (ask(&bp), ask(&bn));
                let r1 = mc_score_single_order(&dp, &bp).unwrap();
                let r2 = mc_score_single_order(&dn, &bn).unwrap();
                let expected1 = beta * q / (beta * q + 1.0 - q);
                let expected2 = q / (q + beta * (1.0 - q));
                assert!((r1 - expected1).abs() < 1e-12);
                assert!((r2 - expected2).abs() < 1e-12);
                let a = mc_score(&[(Some(&dp), &bp), (Some(&dn), &bn)]).unwrap().score;
                let b = mc_score(&[(Some(&dn), &bn), (Some(&dp), &bp)]).unwrap().score;
                assert!((a - b).abs() < 1e-15);
                assert!((a - (expected1 + expected2) / 2.0).abs() < 1e-12);
                if beta != 1.0 && q != 0.5 {
                    assert!((r1 - r2).abs() > 1e-3, "per-order scores do not cancel individually");
                }
            }
        }
    }

    #[test]
    fn numeric_examples() {
        let b = numeric_bundle();
        let e = numeric_score(&dist(&[("7", 0.5), ("3", 0.2)]), Some(&dist(&[("5", 0.9)])), &b).unwrap();
        assert_eq!(e.score, 0.75);
        let e = numeric_score(&dist(&[("0", 0.5)]), Some(&dist(&[("0", 0.9)])), &b).unwrap();
        assert_eq!(e.score, 0.0);
        let e = numeric_score(&dist(&[("4", 0.5)]), Some(&dist(&[("\n", 0.9)])), &b).unwrap();
        assert_eq!(e.score, 0.4);
        assert_eq!(e.flags, vec![ScoreFlag::SingleDigit]);
        assert!(matches!(
            numeric_score(&dist(&[("x", 0.5)]), None, &b),
            Err(ScoreError::NoDigit)
        ));
        assert_eq!(numeric_second_pass_prompt(&b, 4), format!("{}4", b.text));
    }

    #[test]
    fn digit_tokens() {
        assert_eq!(top_digit(&dist(&[("\n", 0.6), (" 3", 0.2), ("12", 0.1)])), Some(3));
        assert_eq!(top_digit(&dist(&[("2", 0.2), (" 2", 0.2), ("5", 0.3)])), Some(2));
        assert_eq!(top_digit(&dist(&[("6", 0.25), ("5", 0.25)])), Some(5));
        assert_eq!(top_digit(&dist(&[("x", 0.2)])), None);
    }

    #[test]
    fn oracle_round_trip_on_grid() {
        let b = bundle(ChoiceOrdering::PositiveFirst);
        let bn = bundle(ChoiceOrdering::NegativeFirst);
        for k in 0..=100 {
            let p = k as f64 / 100.0;
            for c in [1.0, 0.8, 0.3] {
                let m = OracleModel::new("Yes.", "No.", c, move |_| Some(p)).unwrap();
                for bb in [&b, &bn] {
                    let d = m.complete(&CompletionRequest::new("m", bb.text.clone()).for_row(0)).unwrap();
                    let r = mc_score_single_order(&d[0], bb).unwrap();
                    assert!((r - p).abs() <= 1e-12, "p={p} c={c} r={r}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn score_is_bounded_and_scale_invariant(a in 0.0f64..0.5, b in 0.0f64..0.5, k in 0.01f64..1.0) {
            prop_assume!(a + b > 1e-9);
            let bp = bundle(ChoiceOrdering::PositiveFirst);
            let r = mc_score_single_order(&dist(&[("A", a), ("B", b)]), &bp).unwrap();
            prop_assert!((0.0..=1.0).contains(&r));
            let scaled = mc_score_single_order(&dist(&[("A", a * k), ("B", b * k)]), &bp).unwrap();
            prop_assert!((r - scaled).abs() < 1e-12);
        }

        #[test]
        fn matches_variant_summing_reference(
            masses in proptest::collection::vec(0.0f64..0.1, 10),
        ) {
            let tokens = ["A", " A", "A)", "A:", "B", " B", "B)", "B:", "A.", " b"];
            let entries: Vec<(&str, f64)> = tokens.iter().copied().zip(masses).collect();
            let b = bundle(ChoiceOrdering::NegativeFirst);
            let oracle = brute_force_score(&entries, &[('A', 0), ('B', 1)]);
            let got = mc_score_single_order(&dist(&entries), &b).ok();
            match (oracle, got) {
                (Some(o), Some(g)) => prop_assert!((o - g).abs() < 1e-12),
                (None, None) => {}
                other => prop_assert!(false, "{other:?}"),
            }
        }

        #[test]
        fn numeric_scores_lie_on_grid(d1 in 0u8..10, d2 in proptest::option::of(0u8..10)) {
            let b = numeric_bundle();
            let first = dist(&[(&d1.to_string(), 0.6)]);
            let second = d2.map(|d| dist(&[(&format!(" {d}"), 0.6)]));
            let r = numeric_score(&first, second.as_ref(), &b).unwrap().score;
            let on_grid = |k: f64| (r * k - (r * k).round()).abs() < 1e-9;
            prop_assert!(on_grid(100.0));
            if d2.is_none() { prop_assert!(on_grid(10.0)); }
        }
    }
}
