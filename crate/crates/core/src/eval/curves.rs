use serde::Serialize;

use super::metrics::{MajorityContext, Scored};
use crate::dataset::UserStats;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CurvePoint {
    pub label: String,
    /// Lower edge of the bin (inclusive), or the step index for sequential
    /// curves.
    pub x: f64,
    pub count: u64,
    pub accuracy: Option<f64>,
    /// Mean probability given to the actual direction, over accurate
    /// predictions only.
    pub confidence: Option<f64>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CurveReport {
    pub x_axis: String,
    pub points: Vec<CurvePoint>,
}

impl CurveReport {
    pub fn total(&self) -> u64 {
        self.points.iter().map(|p| p.count).sum()
    }
}

/// Running accuracy and accurate-only confidence.
#[derive(Debug, Clone, Copy, Default)]
pub struct Tally {
    pub count: u64,
    pub correct: u64,
    pub confidence_sum: f64,
}

impl Tally {
    pub fn add(&mut self, s: &Scored) {
        self.count += 1;
        if s.prediction.decision == s.vote.direction {
            self.correct += 1;
            self.confidence_sum += s.prediction.probability_of(s.vote.direction);
        }
    }

    pub fn accuracy(&self) -> Option<f64> {
        (self.count > 0).then(|| self.correct as f64 / self.count as f64)
    }

    pub fn confidence(&self) -> Option<f64> {
        (self.correct > 0).then(|| self.confidence_sum / self.correct as f64)
    }

    fn point(&self, label: String, x: f64) -> CurvePoint {
        CurvePoint {
            label,
            x,
            count: self.count,
            accuracy: self.accuracy(),
            confidence: self.confidence(),
        }
    }
}

/// Default lower edges for activity bins: every count from 0 to 10, then
/// 11-20, 21-50 and more than 50.
pub const DEFAULT_ACTIVITY_BINS: [u64; 14] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 21, 51];

/// Groups scored votes by the target user's number of training votes.
/// `edges` are strictly increasing inclusive lower bounds starting at 0.
pub fn accuracy_by_user_activity(scored: &[Scored], train: &UserStats, edges: &[u64]) -> Result<CurveReport> {
    if edges.first() != Some(&0) || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "activity bins must start at 0 and increase strictly".into(),
        ));
    }
    let mut tallies = vec![Tally::default(); edges.len()];
    for s in scored {
        let n = train.total(&s.vote.user_id);
        let bin = edges.partition_point(|&e| e <= n) - 1;
        tallies[bin].add(s);
    }
    let points = tallies
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let label = match edges.get(i + 1) {
                Some(&next) if next == edges[i] + 1 => edges[i].to_string(),
                Some(&next) => format!("{}-{}", edges[i], next - 1),
                None => format!("{}+", edges[i]),
            };
            t.point(label, edges[i] as f64)
        })
        .collect();
    Ok(CurveReport {
        x_axis: "training votes by user".into(),
        points,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AgreementReport {
    pub curve: CurveReport,
    /// Agreement fraction at most 0.5.
    pub minority: Option<f64>,
    pub minority_count: u64,
    /// Agreement fraction strictly below 0.5.
    pub strict_minority: Option<f64>,
    pub strict_minority_count: u64,
    /// Agreement fraction at least 0.5.
    pub majority: Option<f64>,
    pub majority_count: u64,
}

/// Groups scored votes by the fraction of votes on the same post (in
/// `context`, the target included) that share the target's direction.
/// `bins` equal-width bins cover [0, 1]; a fraction of exactly 1 falls in
/// the last.
pub fn accuracy_by_agreement(scored: &[Scored], context: &MajorityContext, bins: usize) -> Result<AgreementReport> {
    if bins == 0 {
        return Err(Error::InvalidArgument("need at least one agreement bin".into()));
    }
    let mut tallies = vec![Tally::default(); bins];
    let (mut minority, mut strict, mut majority) = (Tally::default(), Tally::default(), Tally::default());
    for s in scored {
        let f = context.agreement(s.vote);
        tallies[((f * bins as f64) as usize).min(bins - 1)].add(s);
        if f <= 0.5 {
            minority.add(s);
        }
        if f < 0.5 {
            strict.add(s);
        }
        if f >= 0.5 {
            majority.add(s);
        }
    }
    let width = 1.0 / bins as f64;
    let points = tallies
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let lo = i as f64 * width;
            t.point(format!("{:.2}-{:.2}", lo, lo + width), lo)
        })
        .collect();
    Ok(AgreementReport {
        curve: CurveReport {
            x_axis: "fraction of same-direction votes on the post".into(),
            points,
        },
        minority: minority.accuracy(),
        minority_count: minority.count,
        strict_minority: strict.accuracy(),
        strict_minority_count: strict.count,
        majority: majority.accuracy(),
        majority_count: majority.count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{compute_stats, Direction, VoteRecord};
    use crate::model::Prediction;
    use chrono::Utc;

    fn v(u: &str, p: &str, d: Direction) -> VoteRecord {
        VoteRecord::new(u, p, d, Utc::now(), "c")
    }

    #[test]
    fn single_bin_equals_overall_accuracy() {
        let votes = [v("a", "p", Direction::Up), v("b", "p", Direction::Down), v("a", "q", Direction::Up)];
        let scored: Vec<Scored> = votes
            .iter()
            .map(|vote| Scored { vote, prediction: Prediction::new(0.7, 0.5, false) })
            .collect();
        let (stats, _) = compute_stats(&votes);
        let curve = accuracy_by_user_activity(&scored, &stats, &[0]).unwrap();
        assert_eq!(curve.points.len(), 1);
        assert_eq!(curve.points[0].accuracy, Some(2.0 / 3.0));
        assert_eq!(curve.points[0].confidence, Some(0.7));
        assert_eq!(curve.total(), 3);
    }

    #[test]
    fn activity_bins_cover_all_votes() {
        let train: Vec<VoteRecord> = (0..60).map(|i| v("heavy", &format!("t{i}"), Direction::Up)).collect();
        let (stats, _) = compute_stats(&train);
        let test = [v("heavy", "x", Direction::Up), v("new", "x", Direction::Down)];
        let scored: Vec<Scored> = test
            .iter()
            .map(|vote| Scored { vote, prediction: Prediction::new(0.9, 0.5, false) })
            .collect();
        let curve = accuracy_by_user_activity(&scored, &stats, &DEFAULT_ACTIVITY_BINS).unwrap();
        assert_eq!(curve.total(), 2);
        assert_eq!(curve.points[0].count, 1);
        assert_eq!(curve.points.last().unwrap().label, "51+");
        assert_eq!(curve.points.last().unwrap().count, 1);
        assert!(accuracy_by_user_activity(&scored, &stats, &[1, 2]).is_err());
    }

    #[test]
    fn single_vote_post_lands_in_the_top_bin() {
        let lone = [v("a", "solo", Direction::Down)];
        let ctx = MajorityContext::new(&lone);
        let scored = [Scored { vote: &lone[0], prediction: Prediction::new(0.2, 0.5, false) }];
        let r = accuracy_by_agreement(&scored, &ctx, 10).unwrap();
        assert_eq!(r.curve.points[9].count, 1);
        assert_eq!(r.majority_count, 1);
        assert_eq!(r.minority_count, 0);
    }

    #[test]
    fn half_agreement_is_minority_but_not_strict() {
        let votes = [v("a", "p", Direction::Up), v("b", "p", Direction::Down)];
        let ctx = MajorityContext::new(&votes);
        let scored: Vec<Scored> = votes
            .iter()
            .map(|vote| Scored { vote, prediction: Prediction::new(0.6, 0.5, false) })
            .collect();
        let r = accuracy_by_agreement(&scored, &ctx, 4).unwrap();
        assert_eq!((r.minority_count, r.strict_minority_count, r.majority_count), (2, 0, 2));
    }
}
