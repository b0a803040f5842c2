//! Per-student weights derived from course activity.
//!
//! Two signals are supported: *engagement* (fraction of lessons completed
//! on time) and *performance* (quiz average, normalized to [0,1]). A third
//! scheme, `none`, gives every rater weight 1 and exists so a validity grid
//! can compare weighted against unweighted aggregation uniformly.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::aggregate::WeightVector;
use crate::{Error, Result, StudentId};

/// How many lessons a student finished on time, out of the course total.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EngagementRecord {
    pub student_id: StudentId,
    pub lessons_completed_on_time: u32,
    pub total_lessons: u32,
}

impl EngagementRecord {
    pub fn new(student_id: StudentId, completed: u32, total: u32) -> Result<Self> {
        if total < 1 {
            return Err(Error::InvalidRecord(format!(
                "student {student_id}: total_lessons must be at least 1"
            )));
        }
        if completed > total {
            return Err(Error::InvalidRecord(format!(
                "student {student_id}: {completed} lessons completed out of {total}"
            )));
        }
        Ok(EngagementRecord {
            student_id,
            lessons_completed_on_time: completed,
            total_lessons: total,
        })
    }
}

/// A student's quiz scores (0..=100 each), keyed by quiz id, plus the
/// number of quizzes the course offered. Quizzes the student never took
/// simply have no entry.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceRecord {
    pub student_id: StudentId,
    pub quiz_scores: BTreeMap<String, f64>,
    pub total_quizzes: u32,
}

impl PerformanceRecord {
    pub fn new(
        student_id: StudentId,
        quiz_scores: BTreeMap<String, f64>,
        total_quizzes: u32,
    ) -> Result<Self> {
        if total_quizzes < 1 {
            return Err(Error::InvalidRecord(format!(
                "student {student_id}: total_quizzes must be at least 1"
            )));
        }
        if quiz_scores.len() > total_quizzes as usize {
            return Err(Error::InvalidRecord(format!(
                "student {student_id}: {} scores recorded but the course has {total_quizzes} quizzes",
                quiz_scores.len()
            )));
        }
        for (quiz, &score) in &quiz_scores {
            if !score.is_finite() || !(0.0..=100.0).contains(&score) {
                return Err(Error::InvalidRecord(format!(
                    "student {student_id}: quiz {quiz} score {score} outside 0..=100"
                )));
            }
        }
        Ok(PerformanceRecord {
            student_id,
            quiz_scores,
            total_quizzes,
        })
    }
}

/// Which weight signal to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WeightScheme {
    None,
    Engagement,
    Performance,
}

impl WeightScheme {
    pub const ALL: [WeightScheme; 3] = [
        WeightScheme::None,
        WeightScheme::Engagement,
        WeightScheme::Performance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            WeightScheme::None => "none",
            WeightScheme::Engagement => "engagement",
            WeightScheme::Performance => "performance",
        }
    }
}

impl fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WeightScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(WeightScheme::None),
            "engagement" => Ok(WeightScheme::Engagement),
            "performance" => Ok(WeightScheme::Performance),
            other => Err(Error::InvalidConfig(format!(
                "unknown weight scheme `{other}`"
            ))),
        }
    }
}

/// Denominator for the performance weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PerformanceDenominator {
    /// Divide by the course's total quiz count; unattempted quizzes score 0.
    #[default]
    AllQuizzes,
    /// Divide by the number of quizzes the student actually took.
    AttemptedOnly,
}

/// Fraction of lessons completed on time.
pub fn engagement_weight(record: &EngagementRecord) -> f64 {
    f64::from(record.lessons_completed_on_time) / f64::from(record.total_lessons)
}

/// Quiz average on a 0..=1 scale, counting unattempted quizzes as zero.
pub fn performance_weight(record: &PerformanceRecord) -> f64 {
    performance_weight_with(record, PerformanceDenominator::AllQuizzes)
}

/// Quiz average on a 0..=1 scale with an explicit denominator rule.
/// Under [`PerformanceDenominator::AttemptedOnly`] a student with no
/// attempts gets weight 0.
pub fn performance_weight_with(
    record: &PerformanceRecord,
    denominator: PerformanceDenominator,
) -> f64 {
    let sum: f64 = record.quiz_scores.values().sum();
    let quizzes = match denominator {
        PerformanceDenominator::AllQuizzes => f64::from(record.total_quizzes),
        PerformanceDenominator::AttemptedOnly => {
            if record.quiz_scores.is_empty() {
                return 0.0;
            }
            record.quiz_scores.len() as f64
        }
    };
    (sum / (quizzes * 100.0)).clamp(0.0, 1.0)
}

/// Weights for a list of raters under one scheme, plus the raters that had
/// no record and therefore got weight 0.
#[derive(Debug, Clone, PartialEq)]
pub struct RaterWeights {
    pub weights: WeightVector,
    pub missing: Vec<StudentId>,
}

/// Joins each rater to its weight under `scheme`. A rater absent from the
/// relevant record map gets weight 0 and is reported in `missing` (the
/// caller turns that into a MISSING_RECORD diagnostic). `none` needs no
/// records and yields all ones.
pub fn weights_for_raters(
    rater_ids: &[StudentId],
    scheme: WeightScheme,
    engagement: &BTreeMap<StudentId, EngagementRecord>,
    performance: &BTreeMap<StudentId, PerformanceRecord>,
    denominator: PerformanceDenominator,
) -> Result<RaterWeights> {
    if rater_ids.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut weights = Vec::with_capacity(rater_ids.len());
    let mut missing = Vec::new();
    for id in rater_ids {
        let w = match scheme {
            WeightScheme::None => Some(1.0),
            WeightScheme::Engagement => engagement.get(id).map(engagement_weight),
            WeightScheme::Performance => performance
                .get(id)
                .map(|r| performance_weight_with(r, denominator)),
        };
        match w {
            Some(w) => weights.push(w),
            None => {
                weights.push(0.0);
                missing.push(id.clone());
            }
        }
    }
    Ok(RaterWeights {
        weights: WeightVector::new(weights)?,
        missing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn engagement(completed: u32, total: u32) -> EngagementRecord {
        EngagementRecord::new("s".into(), completed, total).unwrap()
    }

    fn performance(scores: &[(&str, f64)], total: u32) -> PerformanceRecord {
        let map = scores
            .iter()
            .map(|&(q, s)| (q.to_string(), s))
            .collect::<BTreeMap<_, _>>();
        PerformanceRecord::new("s".into(), map, total).unwrap()
    }

    #[test]
    fn engagement_weight_examples() {
        assert_eq!(engagement_weight(&engagement(7, 7)), 1.0);
        assert_eq!(engagement_weight(&engagement(0, 7)), 0.0);
        assert!((engagement_weight(&engagement(5, 7)) - 5.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn engagement_record_validation() {
        assert!(EngagementRecord::new("s".into(), 8, 7).is_err());
        assert!(EngagementRecord::new("s".into(), 0, 0).is_err());
    }

    #[test]
    fn performance_weight_examples() {
        let all_perfect: BTreeMap<String, f64> =
            (1..=7).map(|i| (format!("q{i}"), 100.0)).collect();
        let record = PerformanceRecord::new("s".into(), all_perfect, 7).unwrap();
        assert_eq!(performance_weight(&record), 1.0);

        let spread = performance(
            &[
                ("q1", 80.0),
                ("q2", 90.0),
                ("q3", 100.0),
                ("q4", 70.0),
                ("q5", 60.0),
                ("q6", 50.0),
                ("q7", 40.0),
            ],
            7,
        );
        assert!((performance_weight(&spread) - 0.70).abs() < 1e-12);

        // missing quizzes count as zero against the full denominator
        let partial = performance(
            &[("q1", 100.0), ("q2", 100.0), ("q3", 100.0), ("q4", 100.0)],
            7,
        );
        assert!((performance_weight(&partial) - 4.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn performance_weight_attempted_only_switch() {
        let partial = performance(
            &[("q1", 100.0), ("q2", 100.0), ("q3", 100.0), ("q4", 100.0)],
            7,
        );
        let w = performance_weight_with(&partial, PerformanceDenominator::AttemptedOnly);
        assert_eq!(w, 1.0);

        let none = performance(&[], 7);
        assert_eq!(
            performance_weight_with(&none, PerformanceDenominator::AttemptedOnly),
            0.0
        );
    }

    #[test]
    fn performance_record_validation() {
        assert!(PerformanceRecord::new("s".into(), BTreeMap::new(), 0).is_err());
        let mut scores = BTreeMap::new();
        scores.insert("q1".to_string(), 101.0);
        assert!(PerformanceRecord::new("s".into(), scores, 7).is_err());
        let mut scores = BTreeMap::new();
        scores.insert("q1".to_string(), 50.0);
        scores.insert("q2".to_string(), 50.0);
        assert!(PerformanceRecord::new("s".into(), scores, 1).is_err());
    }

    #[test]
    fn weights_join_by_scheme() {
        let ids: Vec<StudentId> = vec!["a".into(), "b".into()];
        let mut eng = BTreeMap::new();
        eng.insert("a".to_string(), engagement(7, 7));
        eng.insert("b".to_string(), engagement(0, 7));
        let mut perf = BTreeMap::new();
        perf.insert(
            "b".to_string(),
            performance(
                &[
                    ("q1", 80.0),
                    ("q2", 90.0),
                    ("q3", 100.0),
                    ("q4", 70.0),
                    ("q5", 60.0),
                    ("q6", 50.0),
                    ("q7", 40.0),
                ],
                7,
            ),
        );

        let none = weights_for_raters(
            &ids,
            WeightScheme::None,
            &eng,
            &perf,
            PerformanceDenominator::AllQuizzes,
        )
        .unwrap();
        assert_eq!(none.weights.as_slice(), &[1.0, 1.0]);
        assert!(none.missing.is_empty());

        let by_eng = weights_for_raters(
            &ids,
            WeightScheme::Engagement,
            &eng,
            &perf,
            PerformanceDenominator::AllQuizzes,
        )
        .unwrap();
        assert_eq!(by_eng.weights.as_slice(), &[1.0, 0.0]);
        assert!(by_eng.missing.is_empty());

        let by_perf = weights_for_raters(
            &ids,
            WeightScheme::Performance,
            &eng,
            &perf,
            PerformanceDenominator::AllQuizzes,
        )
        .unwrap();
        assert_eq!(by_perf.weights.as_slice()[0], 0.0);
        assert!((by_perf.weights.as_slice()[1] - 0.70).abs() < 1e-12);
        assert_eq!(by_perf.missing, vec!["a".to_string()]);
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in WeightScheme::ALL {
            assert_eq!(s.name().parse::<WeightScheme>().unwrap(), s);
        }
        assert!("trust".parse::<WeightScheme>().is_err());
    }
}
