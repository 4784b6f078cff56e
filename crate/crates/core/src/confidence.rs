//! Confidence of an identification, computed from the per-language scores.
//!
//! Scores are negative log probabilities, so the best language has the lowest
//! score. Degenerate identifications get confidence 0 under every measure.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;
use crate::scorer::Identification;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum ConfidenceMeasure {
    /// Margin between the best and second-best score.
    #[default]
    Bs,
    /// Mean of the other scores minus the best score.
    Avg,
    /// Log-sum-exp of all scores minus the best score.
    Post,
}

impl ConfidenceMeasure {
    pub const ALL: [ConfidenceMeasure; 3] = [Self::Bs, Self::Avg, Self::Post];

    pub fn compute(self, id: &Identification) -> f64 {
        match self {
            Self::Bs => cm_bs(id),
            Self::Avg => cm_avg(id),
            Self::Post => cm_post(id),
        }
    }
}

impl fmt::Display for ConfidenceMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Bs => "bs",
            Self::Avg => "avg",
            Self::Post => "post",
        })
    }
}

impl FromStr for ConfidenceMeasure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "bs" => Ok(Self::Bs),
            "avg" => Ok(Self::Avg),
            "post" => Ok(Self::Post),
            _ => Err(Error::Config(format!(
                "unknown confidence measure `{s}` (expected bs, avg or post)"
            ))),
        }
    }
}

pub fn cm_bs(id: &Identification) -> f64 {
    match id.second() {
        Some(h) if !id.is_degenerate() => id.scores()[h] - id.scores()[id.best()],
        _ => 0.0,
    }
}

pub fn cm_avg(id: &Identification) -> f64 {
    let scores = id.scores();
    if id.is_degenerate() || scores.len() < 2 {
        return 0.0;
    }
    let g = id.best();
    let best = scores[g];
    let others: f64 = scores
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != g)
        .map(|(_, &r)| r - best)
        .sum();
    others / (scores.len() - 1) as f64
}

/// Natural-log log-sum-exp over all scores, minus the best score.
pub fn cm_post(id: &Identification) -> f64 {
    if id.is_degenerate() {
        return 0.0;
    }
    let scores = id.scores();
    let best = scores[id.best()];
    // work on differences to the best score, shifted by their maximum
    let top = scores.iter().map(|&r| r - best).fold(0.0f64, f64::max);
    let sum: f64 = scores.iter().map(|&r| (r - best - top).exp()).sum();
    top + sum.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::Identification;

    fn id(scores: &[f64]) -> Identification {
        Identification::for_scores(scores.to_vec())
    }

    #[test]
    fn bs_examples() {
        assert!((cm_bs(&id(&[3.2, 3.5, 4.0])) - 0.3).abs() < 1e-12);
        assert_eq!(cm_bs(&id(&[2.0, 2.0, 2.0])), 0.0);
        assert!((cm_bs(&id(&[1.0, 1.1])) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn avg_examples() {
        assert!((cm_avg(&id(&[3.2, 3.5, 4.0])) - 0.55).abs() < 1e-12);
        assert_eq!(cm_avg(&id(&[1.5; 4])), 0.0);
        let two = id(&[0.7, 0.2]);
        assert!((cm_avg(&two) - cm_bs(&two)).abs() < 1e-15);
    }

    #[test]
    fn post_examples() {
        assert!((cm_post(&id(&[5.0; 4])) - 4f64.ln()).abs() < 1e-12);
        // direct evaluation: ln(e^0 + e^10) - 0
        let direct = (1.0f64 + 10f64.exp()).ln();
        assert!((cm_post(&id(&[0.0, 10.0])) - direct).abs() < 1e-12);
        assert!((direct - 10.0000454).abs() < 1e-7);
        assert_eq!(cm_post(&id(&[3.3])), 0.0);
        // huge scores stay finite
        assert!(cm_post(&id(&[800.0, 1500.0])).is_finite());
    }

    #[test]
    fn degenerate_is_zero() {
        let d = Identification::degenerate(3);
        for m in ConfidenceMeasure::ALL {
            assert_eq!(m.compute(&d), 0.0);
        }
    }

    #[test]
    fn measure_names() {
        for m in ConfidenceMeasure::ALL {
            assert_eq!(m.to_string().parse::<ConfidenceMeasure>().unwrap(), m);
        }
        assert!("max".parse::<ConfidenceMeasure>().is_err());
    }
}
