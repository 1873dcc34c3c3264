use serde::{Deserialize, Serialize};

use super::RolloutScore;

/// Highest score a failed rollout may carry.
pub const FAILED_SCORE_CAP: f64 = 0.2;
/// Lowest score a successful rollout may carry.
pub const SUCCESS_SCORE_FLOOR: f64 = 0.3;

/// A ranker score after the cap structure was enforced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidatedScore {
    #[serde(flatten)]
    pub score: RolloutScore,
    /// Set when the ranker's value had to be changed.
    pub clamped: bool,
    /// Value as returned by the ranker (null when it was not finite).
    pub original: Option<f64>,
}

/// Clamp scores that break the rubric caps and flag them.
///
/// Non-finite scores become 0. Scores are first clamped to `[0, 1]`, then a
/// failed rollout is capped at 0.2 and a successful one floored at 0.3.
pub fn validate_rollout_scores(scores: &[RolloutScore]) -> Vec<ValidatedScore> {
    scores
        .iter()
        .map(|s| {
            let original = s.score.is_finite().then_some(s.score);
            let mut v = original.unwrap_or(0.0).clamp(0.0, 1.0);
            if s.success {
                v = v.max(SUCCESS_SCORE_FLOOR);
            } else {
                v = v.min(FAILED_SCORE_CAP);
            }
            let clamped = original != Some(v);
            if clamped {
                log::warn!(
                    "ranker score for candidate {} clamped from {} to {v}",
                    s.candidate_id,
                    s.score
                );
            }
            ValidatedScore {
                score: RolloutScore {
                    score: v,
                    ..s.clone()
                },
                clamped,
                original,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rs(success: bool, score: f64) -> RolloutScore {
        RolloutScore {
            candidate_id: 7,
            success,
            score,
            reason: String::new(),
        }
    }

    fn one(success: bool, score: f64) -> ValidatedScore {
        validate_rollout_scores(&[rs(success, score)]).remove(0)
    }

    #[test]
    fn caps() {
        let ok = one(true, 0.9);
        assert_eq!((ok.score.score, ok.clamped), (0.9, false));
        let bad = one(false, 0.8);
        assert_eq!((bad.score.score, bad.clamped), (0.2, true));
        let low = one(true, 0.1);
        assert_eq!((low.score.score, low.clamped), (0.3, true));
        assert!(!one(false, 0.2).clamped);
        assert!(!one(true, 0.3).clamped);
        assert_eq!(one(false, -0.5).score.score, 0.0);
        assert_eq!(one(true, 1.5).score.score, 1.0);
        let nan = one(false, f64::NAN);
        assert_eq!(
            (nan.score.score, nan.clamped, nan.original),
            (0.0, true, None)
        );
    }
}
