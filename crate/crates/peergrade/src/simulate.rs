//! Synthetic peer-review cohorts.
//!
//! Every student authors one essay of latent quality and reviews `k`
//! others under a circulant assignment. Rater noise shrinks linearly with
//! a latent competence, and the activity signals (lessons completed, quiz
//! scores) track that same competence, so weighting by them should sharpen
//! validity. All randomness flows from one ChaCha8 stream seeded from a
//! 64-bit integer, with normal deviates via Box-Muller, so cohorts are
//! reproducible anywhere; the draw order is part of the contract and is
//! documented on [`generate_cohort`].

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::aggregate::AggregationMethod;
use crate::ingest::{
    build_dataset, InstructorReview, PeerReview, ReviewDataset, RubricScore,
};
use crate::validity::{build_validity_report, ValidityReport};
use crate::weight::{
    EngagementRecord, PerformanceDenominator, PerformanceRecord, WeightScheme,
};
use crate::{Error, EssayId, Result, StudentId};

/// Identifier of the random stream, recorded in run manifests.
pub const RNG_ALGORITHM: &str = "chacha8+box-muller";

/// All simulation knobs. The defaults mirror the studied cohort shape
/// (91 students, 3 reviews each, grades centered near 7.5) with noise
/// levels chosen to land unweighted validity in the middle of its range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CohortConfig {
    pub n_students: usize,
    pub reviews_per_student: usize,
    /// Latent essay quality: normal, then clamped into [2, 10].
    pub quality_mean: f64,
    pub quality_sd: f64,
    /// Rater noise sd interpolates from sd_max (competence 0) down to
    /// sd_min (competence 1).
    pub sd_max: f64,
    pub sd_min: f64,
    /// Per-rater constant offset, normal around 0.
    pub bias_sd: f64,
    /// Probability that a student's lessons-completed fraction tracks
    /// competence instead of being uniform.
    pub engagement_coupling: f64,
    pub total_lessons: u32,
    /// Noise sd on the 0..=100 quiz average around competence × 100,
    /// applied before rounding onto the pass/fail quiz lattice.
    pub quiz_noise_sd: f64,
    pub seed: u64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig {
            n_students: 91,
            reviews_per_student: 3,
            quality_mean: 7.5,
            quality_sd: 1.3,
            sd_max: 8.0,
            sd_min: 0.0,
            bias_sd: 0.1,
            engagement_coupling: 0.85,
            total_lessons: 7,
            quiz_noise_sd: 6.0,
            seed: 42,
        }
    }
}

impl CohortConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_students < 4 {
            return bad(format!("n_students {} below minimum 4", self.n_students));
        }
        if self.reviews_per_student == 0 || self.reviews_per_student >= self.n_students {
            return Err(Error::InvalidK {
                n: self.n_students,
                k: self.reviews_per_student,
            });
        }
        for (name, v) in [
            ("quality_mean", self.quality_mean),
            ("quality_sd", self.quality_sd),
            ("sd_max", self.sd_max),
            ("sd_min", self.sd_min),
            ("bias_sd", self.bias_sd),
            ("engagement_coupling", self.engagement_coupling),
            ("quiz_noise_sd", self.quiz_noise_sd),
        ] {
            if !v.is_finite() {
                return bad(format!("{name} must be finite, got {v}"));
            }
        }
        if self.quality_sd < 0.0 || self.bias_sd < 0.0 || self.quiz_noise_sd < 0.0 {
            return bad("standard deviations must be nonnegative".to_string());
        }
        if self.sd_min < 0.0 || self.sd_min > self.sd_max {
            return bad(format!(
                "need 0 <= sd_min <= sd_max, got {} and {}",
                self.sd_min, self.sd_max
            ));
        }
        if !(0.0..=1.0).contains(&self.engagement_coupling) {
            return bad(format!(
                "engagement_coupling {} outside [0, 1]",
                self.engagement_coupling
            ));
        }
        if self.total_lessons < 1 {
            return bad("total_lessons must be at least 1".to_string());
        }
        Ok(())
    }
}

/// Parses a flat `key = value` config (one per line, `#` comments allowed)
/// over the defaults. Unknown keys are errors.
pub fn parse_config(text: &str) -> Result<CohortConfig> {
    let mut config = CohortConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let lineno = idx + 1;
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::InvalidConfig(format!(
                "line {lineno}: expected key=value, got `{line}`"
            )));
        };
        let key = key.trim();
        let value = value.trim();
        let parse_f64 = || -> Result<f64> {
            value.parse().map_err(|_| {
                Error::InvalidConfig(format!("line {lineno}: `{value}` is not a number"))
            })
        };
        let parse_usize = || -> Result<usize> {
            value.parse().map_err(|_| {
                Error::InvalidConfig(format!("line {lineno}: `{value}` is not a count"))
            })
        };
        match key {
            "n_students" => config.n_students = parse_usize()?,
            "reviews_per_student" => config.reviews_per_student = parse_usize()?,
            "quality_mean" => config.quality_mean = parse_f64()?,
            "quality_sd" => config.quality_sd = parse_f64()?,
            "sd_max" => config.sd_max = parse_f64()?,
            "sd_min" => config.sd_min = parse_f64()?,
            "bias_sd" => config.bias_sd = parse_f64()?,
            "engagement_coupling" => config.engagement_coupling = parse_f64()?,
            "total_lessons" => {
                config.total_lessons = value.parse().map_err(|_| {
                    Error::InvalidConfig(format!("line {lineno}: `{value}` is not a count"))
                })?
            }
            "quiz_noise_sd" => config.quiz_noise_sd = parse_f64()?,
            "seed" => {
                config.seed = value.parse().map_err(|_| {
                    Error::InvalidConfig(format!("line {lineno}: `{value}` is not a seed"))
                })?
            }
            other => {
                return Err(Error::InvalidConfig(format!(
                    "line {lineno}: unknown key `{other}`"
                )))
            }
        }
    }
    config.validate()?;
    Ok(config)
}

/// A generated cohort: the joined dataset plus the raw pieces (for CSV
/// export) and the latent ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticCohort {
    pub dataset: ReviewDataset,
    pub reviews: Vec<PeerReview>,
    pub authors: BTreeMap<EssayId, StudentId>,
    pub instructor: BTreeMap<EssayId, InstructorReview>,
    pub true_quality: BTreeMap<EssayId, f64>,
    pub competence: BTreeMap<StudentId, f64>,
}

/// The cohort rendered into the five ingest CSV schemas.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CohortCsv {
    pub reviews: String,
    pub instructor: String,
    pub essays: String,
    pub engagement: String,
    pub quizzes: String,
}

impl SyntheticCohort {
    pub fn export_csv(&self) -> CohortCsv {
        use crate::ingest;
        CohortCsv {
            reviews: ingest::write_reviews(&self.reviews),
            instructor: ingest::write_instructor(&self.instructor),
            essays: ingest::write_essays(&self.authors),
            engagement: ingest::write_engagement(&self.dataset.engagement),
            quizzes: ingest::write_quizzes(&self.dataset.performance),
        }
    }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; 1 - u keeps the log argument in (0, 1]
    let u1 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
}

fn normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64) -> f64 {
    mean + sd * standard_normal(rng)
}

/// Circulant review assignment: after a random permutation pi, rater
/// pi(i) reviews the essays of pi(i+1), ..., pi(i+k) (mod n). Every
/// student gives and receives exactly k reviews and never self-reviews.
/// Pairs are returned sorted by (rater, essay).
pub fn assign_reviews(n: usize, k: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    assign_reviews_with(n, k, &mut rng)
}

fn assign_reviews_with(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Result<Vec<(usize, usize)>> {
    if k == 0 || k >= n {
        return Err(Error::InvalidK { n, k });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let mut pairs = Vec::with_capacity(n * k);
    for i in 0..n {
        for d in 1..=k {
            pairs.push((perm[i], perm[(i + d) % n]));
        }
    }
    pairs.sort_unstable();
    Ok(pairs)
}

fn id_width(n: usize) -> usize {
    n.to_string().len()
}

fn student_id(index: usize, width: usize) -> StudentId {
    format!("s{:0width$}", index + 1)
}

fn essay_id(index: usize, width: usize) -> EssayId {
    format!("e{:0width$}", index + 1)
}

fn quiz_id(number: u32, width: usize) -> String {
    format!("q{number:0width$}")
}

/// Grade totals live on the rubric lattice: round 2×grade to an integer
/// total and clamp into 4..=20.
fn rubric_total(grade: f64) -> i64 {
    ((2.0 * grade).round() as i64).clamp(4, 20)
}

/// Splits a 4..=20 total into four 1..=5 dimensions, earlier dimensions
/// taking the remainder.
fn rubric_from_total(total: i64) -> RubricScore {
    let base = total / 4;
    let rem = total % 4;
    let dim = |i: i64| base + i64::from(i < rem);
    RubricScore::new(dim(0), dim(1), dim(2), dim(3)).expect("totals in 4..=20 split into 1..=5")
}

/// Generates one cohort.
///
/// Draw order from the seeded stream: review-assignment permutation,
/// then per student competence, quality, bias, engagement (one coupling
/// coin plus the uniform fallback draw when it lands false), quiz average,
/// and finally one noise draw per review pair in (rater, essay) order.
pub fn generate_cohort(config: &CohortConfig) -> Result<SyntheticCohort> {
    config.validate()?;
    let n = config.n_students;
    let width = id_width(n);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let pairs = assign_reviews_with(n, config.reviews_per_student, &mut rng)?;
    let competence: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let quality: Vec<f64> = (0..n)
        .map(|_| normal(&mut rng, config.quality_mean, config.quality_sd).clamp(2.0, 10.0))
        .collect();
    let bias: Vec<f64> = (0..n).map(|_| normal(&mut rng, 0.0, config.bias_sd)).collect();
    let lessons: Vec<u32> = (0..n)
        .map(|i| {
            let tracks = rng.random_bool(config.engagement_coupling);
            let uniform = rng.random_range(0..=config.total_lessons);
            if tracks {
                (competence[i] * f64::from(config.total_lessons)).round() as u32
            } else {
                uniform
            }
        })
        .collect();
    // One pass/fail chapter quiz per lesson. The noisy quiz average picks
    // how many of them the student passed, so the recorded average stays
    // competence * 100 up to noise and lattice rounding, while weak
    // students can land on an exact zero.
    let quiz_passes: Vec<u32> = (0..n)
        .map(|i| {
            let avg =
                normal(&mut rng, competence[i] * 100.0, config.quiz_noise_sd).clamp(0.0, 100.0);
            (avg * f64::from(config.total_lessons) / 100.0).round() as u32
        })
        .collect();

    let mut reviews = Vec::with_capacity(pairs.len());
    for &(rater, essay) in &pairs {
        let sd = config.sd_max - (config.sd_max - config.sd_min) * competence[rater];
        let noise = normal(&mut rng, 0.0, sd);
        let observed = quality[essay] + bias[rater] + noise;
        reviews.push(PeerReview::new(
            essay_id(essay, width),
            student_id(rater, width),
            rubric_from_total(rubric_total(observed)),
        ));
    }

    let mut authors = BTreeMap::new();
    let mut instructor = BTreeMap::new();
    let mut true_quality = BTreeMap::new();
    let mut competence_map = BTreeMap::new();
    let mut engagement = BTreeMap::new();
    let mut performance = BTreeMap::new();
    for i in 0..n {
        let sid = student_id(i, width);
        let eid = essay_id(i, width);
        authors.insert(eid.clone(), sid.clone());
        instructor.insert(
            eid.clone(),
            InstructorReview::new(rubric_from_total(rubric_total(quality[i]))),
        );
        true_quality.insert(eid, quality[i]);
        competence_map.insert(sid.clone(), competence[i]);
        engagement.insert(
            sid.clone(),
            EngagementRecord::new(sid.clone(), lessons[i], config.total_lessons)?,
        );
        let quiz_width = id_width(config.total_lessons as usize);
        let scores: BTreeMap<String, f64> = (1..=config.total_lessons)
            .map(|q| {
                let score = if q <= quiz_passes[i] { 100.0 } else { 0.0 };
                (quiz_id(q, quiz_width), score)
            })
            .collect();
        performance.insert(
            sid.clone(),
            PerformanceRecord::new(sid, scores, config.total_lessons)?,
        );
    }

    let dataset = build_dataset(
        reviews.clone(),
        &authors,
        Some(&instructor),
        engagement,
        performance,
        config.reviews_per_student,
    );
    Ok(SyntheticCohort {
        dataset,
        reviews,
        authors,
        instructor,
        true_quality,
        competence: competence_map,
    })
}

/// Runs `replications` independent cohorts (replication r reseeds with
/// seed + r) and builds the full validity grid for each.
pub fn run_experiment(config: &CohortConfig, replications: usize) -> Result<Vec<ValidityReport>> {
    if replications == 0 {
        return Err(Error::InvalidConfig(
            "replications must be at least 1".to_string(),
        ));
    }
    let mut reports = Vec::with_capacity(replications);
    for r in 0..replications {
        let rep_config = CohortConfig {
            seed: config.seed.wrapping_add(r as u64),
            ..*config
        };
        let cohort = generate_cohort(&rep_config)?;
        reports.push(build_validity_report(
            &cohort.dataset,
            &AggregationMethod::ALL,
            &WeightScheme::ALL,
            PerformanceDenominator::AllQuizzes,
        )?);
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn degrees(pairs: &[(usize, usize)], n: usize) -> (Vec<usize>, Vec<usize>) {
        let mut out = vec![0; n];
        let mut inn = vec![0; n];
        for &(r, e) in pairs {
            out[r] += 1;
            inn[e] += 1;
        }
        (out, inn)
    }

    #[test]
    fn assignment_is_regular_with_no_self_reviews() {
        for (n, k) in [(4, 3), (91, 3), (10, 4)] {
            let pairs = assign_reviews(n, k, 99).unwrap();
            assert_eq!(pairs.len(), n * k);
            assert!(pairs.iter().all(|&(r, e)| r != e));
            let (out, inn) = degrees(&pairs, n);
            assert!(out.iter().all(|&d| d == k));
            assert!(inn.iter().all(|&d| d == k));
        }
    }

    #[test]
    fn complete_round_robin_when_k_is_n_minus_one() {
        let pairs = assign_reviews(4, 3, 5).unwrap();
        for r in 0..4 {
            let mut essays: Vec<usize> =
                pairs.iter().filter(|&&(a, _)| a == r).map(|&(_, e)| e).collect();
            essays.sort_unstable();
            let expected: Vec<usize> = (0..4).filter(|&e| e != r).collect();
            assert_eq!(essays, expected);
        }
    }

    #[test]
    fn assignment_is_seed_deterministic() {
        let a = assign_reviews(5, 3, 1234).unwrap();
        let b = assign_reviews(5, 3, 1234).unwrap();
        assert_eq!(a, b);
        let c = assign_reviews(5, 3, 1235).unwrap();
        assert_ne!(a, c); // overwhelmingly likely for distinct seeds
    }

    #[test]
    fn invalid_k_is_rejected() {
        assert!(matches!(
            assign_reviews(4, 4, 1),
            Err(Error::InvalidK { n: 4, k: 4 })
        ));
        assert!(matches!(assign_reviews(4, 0, 1), Err(Error::InvalidK { .. })));
    }

    #[test]
    fn cohorts_are_seed_deterministic() {
        let config = CohortConfig {
            n_students: 12,
            ..CohortConfig::default()
        };
        let a = generate_cohort(&config).unwrap();
        let b = generate_cohort(&config).unwrap();
        assert_eq!(a.export_csv(), b.export_csv());
        assert_eq!(a.competence, b.competence);
        assert_eq!(a.true_quality, b.true_quality);
    }

    #[test]
    fn noiseless_cohort_matches_instructor_exactly() {
        let config = CohortConfig {
            n_students: 20,
            sd_max: 0.0,
            sd_min: 0.0,
            bias_sd: 0.0,
            ..CohortConfig::default()
        };
        let cohort = generate_cohort(&config).unwrap();
        assert_eq!(cohort.dataset.essays.len(), 20);
        for essay in &cohort.dataset.essays {
            let instructor = essay.instructor_grade.unwrap().value();
            for review in &essay.reviews {
                assert_eq!(review.grade.value(), instructor);
            }
        }
    }

    #[test]
    fn grades_stay_on_the_half_point_lattice() {
        let cohort = generate_cohort(&CohortConfig {
            n_students: 30,
            ..CohortConfig::default()
        })
        .unwrap();
        for review in &cohort.reviews {
            let g = review.grade.value();
            assert!((2.0..=10.0).contains(&g));
            assert_eq!(g * 2.0, (g * 2.0).round());
        }
    }

    #[test]
    fn cohort_dataset_retains_everything() {
        let cohort = generate_cohort(&CohortConfig::default()).unwrap();
        assert_eq!(cohort.dataset.essays.len(), 91);
        assert!(cohort.dataset.exclusions.is_empty());
        assert!(cohort.dataset.diagnostics.is_empty());
        assert_eq!(cohort.reviews.len(), 273);
    }

    #[test]
    fn replications_derive_distinct_seeds() {
        let config = CohortConfig {
            n_students: 10,
            ..CohortConfig::default()
        };
        let reports = run_experiment(&config, 2).unwrap();
        assert_eq!(reports.len(), 2);
        let r0 = reports[0]
            .cell(AggregationMethod::ArithmeticMean, WeightScheme::None)
            .unwrap()
            .stats
            .r;
        assert!(r0.is_finite());
    }

    #[test]
    fn config_parsing() {
        let text = "# tuned run\nn_students = 20\nseed=7\nsd_max = 1.5\n\nengagement_coupling = 0.9\n";
        let config = parse_config(text).unwrap();
        assert_eq!(config.n_students, 20);
        assert_eq!(config.seed, 7);
        assert_eq!(config.sd_max, 1.5);
        assert_eq!(config.engagement_coupling, 0.9);
        assert_eq!(config.total_lessons, 7); // default survives

        assert!(parse_config("mystery = 3\n").is_err());
        assert!(parse_config("n_students\n").is_err());
        assert!(parse_config("sd_max = fast\n").is_err());
        assert!(parse_config("n_students = 2\n").is_err()); // fails validation
    }

    #[test]
    fn rubric_total_decomposition() {
        for total in 4..=20 {
            let rubric = rubric_from_total(total);
            assert_eq!(i64::from(rubric.total()), total);
        }
        assert_eq!(rubric_total(10.2), 20);
        assert_eq!(rubric_total(1.0), 4);
        assert_eq!(rubric_total(7.26), 15);
    }
}
