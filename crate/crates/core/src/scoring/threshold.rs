use serde::{Deserialize, Serialize};

use super::{Result, ScoreError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    tau: f64,
}

impl ThresholdPolicy {
    pub const DEFAULT: ThresholdPolicy = ThresholdPolicy { tau: 0.5 };

    pub fn new(tau: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(ScoreError::InvalidThreshold(tau));
        }
        Ok(Self { tau })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// 1 iff `r > tau`.
pub fn threshold_predict(r: f64, policy: ThresholdPolicy) -> u8 {
    u8::from(r > policy.tau)
}

/// Accuracy-maximizing threshold over {0, 0.5, 1} and the midpoints between
/// consecutive distinct scores. Ties go to the candidate closest to 0.5,
/// then to the smaller one.
pub fn fit_threshold(scores: &[f64], labels: &[u8]) -> Result<ThresholdPolicy> {
    assert_eq!(scores.len(), labels.len(), "scores and labels differ in length");
    let positives = labels.iter().filter(|&&y| y == 1).count();
    if positives == 0 || positives == labels.len() {
        return Err(ScoreError::Degenerate(
            "threshold fitting needs both classes in the validation split".into(),
        ));
    }
    let mut pairs: Vec<(f64, u8)> = scores.iter().copied().zip(labels.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let sorted: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut pos_prefix = Vec::with_capacity(pairs.len() + 1);
    pos_prefix.push(0usize);
    for (_, y) in &pairs {
        pos_prefix.push(pos_prefix.last().unwrap() + usize::from(*y == 1));
    }

    let mut candidates = vec![0.0, 0.5, 1.0];
    candidates.extend(
        sorted
            .windows(2)
            .filter(|w| w[0] < w[1])
            .map(|w| w[0] + (w[1] - w[0]) / 2.0),
    );

    let correct = |tau: f64| {
        let at_or_below = sorted.partition_point(|&s| s <= tau);
        let pos_below = pos_prefix[at_or_below];
        (positives - pos_below) + (at_or_below - pos_below)
    };
    let best = candidates
        .into_iter()
        .map(|t| (correct(t), t))
        .max_by(|a, b| {
            a.0.cmp(&b.0)
                .then_with(|| (b.1 - 0.5).abs().total_cmp(&(a.1 - 0.5).abs()))
                .then_with(|| b.1.total_cmp(&a.1))
        })
        .expect("candidate list is never empty");
    ThresholdPolicy::new(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn strict_inequality() {
        let half = ThresholdPolicy::DEFAULT;
        assert_eq!(threshold_predict(0.51, half), 1);
        assert_eq!(threshold_predict(0.5, half), 0);
        let zero = ThresholdPolicy::new(0.0).unwrap();
        assert_eq!(threshold_predict(1e-300, zero), 1);
        assert_eq!(threshold_predict(0.0, zero), 0);
        assert!(ThresholdPolicy::new(1.5).is_err());
        assert!(ThresholdPolicy::new(f64::NAN).is_err());
    }

    #[test]
    fn separated_scores_pick_half() {
        let t = fit_threshold(&[0.2, 0.2, 0.8, 0.8], &[0, 0, 1, 1]).unwrap();
        assert_eq!(t.tau(), 0.5);
        let t = fit_threshold(&[0.0, 1.0, 1.0, 0.0], &[0, 1, 1, 0]).unwrap();
        assert_eq!(t.tau(), 0.5);
    }

    #[test]
    fn single_class_is_degenerate() {
        assert!(matches!(fit_threshold(&[0.1, 0.9], &[1, 1]), Err(ScoreError::Degenerate(_))));
    }

    #[test]
    fn off_center_optimum() {
        // Everything above 0.1 is positive.
        let t = fit_threshold(&[0.05, 0.1, 0.2, 0.3, 0.9], &[0, 0, 1, 1, 1]).unwrap();
        assert!((t.tau() - 0.15).abs() < 1e-15);
    }

    /// Exhaustive scan: direct accuracy at every candidate, no sorting tricks.
    fn brute_force(scores: &[f64], labels: &[u8]) -> (f64, usize) {
        let mut candidates = vec![0.0, 0.5, 1.0];
        for &a in scores {
            for &b in scores {
                if a < b && !scores.iter().any(|&s| a < s && s < b) {
                    candidates.push(a + (b - a) / 2.0);
                }
            }
        }
        let mut best: Option<(usize, f64)> = None;
        for t in candidates {
            let c = scores
                .iter()
                .zip(labels)
                .filter(|(&s, &y)| u8::from(s > t) == y)
                .count();
            let better = match best {
                None => true,
                Some((bc, bt)) => {
                    c > bc
                        || (c == bc && (t - 0.5).abs() < (bt - 0.5).abs())
                        || (c == bc && (t - 0.5).abs() == (bt - 0.5).abs() && t < bt)
                }
            };
            if better {
                best = Some((c, t));
            }
        }
        let (c, t) = best.unwrap();
        (t, c)
    }

    #[test]
    fn matches_exhaustive_scan_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        for _ in 0..200 {
            let n = 50;
            let scores: Vec<f64> = (0..n).map(|_| (rng.random_range(0..40) as f64) / 40.0).collect();
            let labels: Vec<u8> = scores
                .iter()
                .map(|&s| u8::from(rng.random_bool((0.2 + 0.6 * s).clamp(0.0, 1.0))))
                .collect();
            if labels.iter().all(|&y| y == labels[0]) {
                continue;
            }
            let fitted = fit_threshold(&scores, &labels).unwrap().tau();
            let (oracle, correct) = brute_force(&scores, &labels);
            assert_eq!(fitted, oracle);
            // No point on a fine grid does better.
            for g in 0..=1000 {
                let t = g as f64 / 1000.0;
                let c = scores.iter().zip(&labels).filter(|(&s, &y)| u8::from(s > t) == y).count();
                assert!(c <= correct);
            }
        }
    }

    proptest! {
        #[test]
        fn half_threshold_agrees_with_argmax(pp in 0.0f64..1.0, pn in 0.0f64..1.0) {
            prop_assume!(pp + pn > 1e-12);
            let r = pp / (pp + pn);
            prop_assume!(r != 0.5);
            prop_assert_eq!(threshold_predict(r, ThresholdPolicy::DEFAULT), u8::from(pp > pn));
        }
    }
}
