//! PeerRank and Generalized PeerRank baselines.
//!
//! A student's grade is iteratively re-estimated as a damped mix of its
//! current value, the received grades weighted by the graders' own current
//! grades (the alpha term), and, in the generalized variant, a reward for
//! grading accuracy (the beta term). Iteration stops when the largest
//! per-student change falls below a tolerance.
//!
//! Grades inside this module live on the [0, 1] scale; use
//! [`peerrank_to_grades`] to go back to 0..=10.

use std::collections::BTreeMap;

use crate::aggregate::Grade;
use crate::ingest::ReviewDataset;
use crate::{Error, EssayId, Result, StudentId};

/// Sparse rater-by-essay grade matrix on the unit scale. Index i is both
/// student i and essay i (each student authors one essay).
#[derive(Debug, Clone, PartialEq)]
pub struct GradeMatrix {
    n: usize,
    entries: BTreeMap<(usize, usize), f64>,
    graders: Vec<Vec<usize>>,
    graded_by: Vec<Vec<usize>>,
}

impl GradeMatrix {
    /// Validates entries: indices in range, no self-grading, values in
    /// [0, 1], and at least one grader per essay.
    pub fn new(n: usize, entries: BTreeMap<(usize, usize), f64>) -> Result<Self> {
        let mut graders = vec![Vec::new(); n];
        let mut graded_by = vec![Vec::new(); n];
        for (&(i, j), &g) in &entries {
            if i >= n || j >= n {
                return Err(Error::InvalidMatrixEntry {
                    rater: i,
                    essay: j,
                    reason: format!("index outside 0..{n}"),
                });
            }
            if i == j {
                return Err(Error::InvalidMatrixEntry {
                    rater: i,
                    essay: j,
                    reason: "self-grading entry".to_string(),
                });
            }
            if !g.is_finite() || !(0.0..=1.0).contains(&g) {
                return Err(Error::InvalidMatrixEntry {
                    rater: i,
                    essay: j,
                    reason: format!("grade {g} outside [0, 1]"),
                });
            }
            graders[j].push(i);
            graded_by[i].push(j);
        }
        if let Some(j) = graders.iter().position(|g| g.is_empty()) {
            return Err(Error::EmptyGraders(j));
        }
        Ok(GradeMatrix {
            n,
            entries,
            graders,
            graded_by,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entry(&self, rater: usize, essay: usize) -> Option<f64> {
        self.entries.get(&(rater, essay)).copied()
    }

    /// Raters of essay j, ascending.
    pub fn graders(&self, essay: usize) -> &[usize] {
        &self.graders[essay]
    }

    /// Essays rated by student i, ascending.
    pub fn graded_by(&self, rater: usize) -> &[usize] {
        &self.graded_by[rater]
    }
}

/// A [`GradeMatrix`] assembled from a dataset, with the index → essay map
/// and any reviews that had to be dropped because the rater authored no
/// retained essay (and so has no grade of their own in the system).
#[derive(Debug, Clone)]
pub struct MatrixBuild {
    pub matrix: GradeMatrix,
    pub essay_ids: Vec<EssayId>,
    pub dropped_reviews: Vec<(EssayId, StudentId)>,
}

/// Indexes retained essays 0..n, maps each rater to the essay they
/// authored, and normalizes grades to [0, 1] by dividing by 10.
pub fn matrix_from_dataset(dataset: &ReviewDataset) -> Result<MatrixBuild> {
    let essay_ids: Vec<EssayId> = dataset.essays.iter().map(|e| e.essay_id.clone()).collect();
    let mut author_index: BTreeMap<&str, usize> = BTreeMap::new();
    for (idx, essay) in dataset.essays.iter().enumerate() {
        // a student with several retained essays keeps the first index
        author_index.entry(&essay.author_id).or_insert(idx);
    }
    let mut entries = BTreeMap::new();
    let mut dropped_reviews = Vec::new();
    for (j, essay) in dataset.essays.iter().enumerate() {
        for review in &essay.reviews {
            match author_index.get(review.rater_id.as_str()) {
                Some(&i) => {
                    entries.insert((i, j), review.grade.value() / 10.0);
                }
                None => {
                    dropped_reviews.push((essay.essay_id.clone(), review.rater_id.clone()));
                }
            }
        }
    }
    Ok(MatrixBuild {
        matrix: GradeMatrix::new(essay_ids.len(), entries)?,
        essay_ids,
        dropped_reviews,
    })
}

/// Iteration parameters. `beta = 0` is plain PeerRank; `beta > 0` is the
/// generalized variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeerRankConfig {
    pub alpha: f64,
    pub beta: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl PeerRankConfig {
    pub fn new(alpha: f64, beta: f64, tolerance: f64, max_iterations: usize) -> Result<Self> {
        if !alpha.is_finite() || !(0.0..1.0).contains(&alpha) {
            return Err(Error::InvalidConfig(format!(
                "alpha {alpha} outside [0, 1)"
            )));
        }
        if !beta.is_finite() || beta < 0.0 || alpha + beta >= 1.0 {
            return Err(Error::InvalidConfig(format!(
                "beta {beta} must be nonnegative with alpha + beta < 1"
            )));
        }
        if !(tolerance > 0.0) || !tolerance.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "tolerance {tolerance} must be positive"
            )));
        }
        if max_iterations == 0 {
            return Err(Error::InvalidConfig(
                "max_iterations must be at least 1".to_string(),
            ));
        }
        Ok(PeerRankConfig {
            alpha,
            beta,
            tolerance,
            max_iterations,
        })
    }

    pub fn plain() -> Self {
        Self::new(0.2, 0.0, 1e-6, 1000).expect("default parameters are valid")
    }

    pub fn generalized() -> Self {
        Self::new(0.2, 0.1, 1e-6, 1000).expect("default parameters are valid")
    }
}

/// Final grades with convergence bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct PeerRankResult {
    pub grades: Vec<f64>,
    pub iterations_used: usize,
    pub converged: bool,
    /// Largest per-student change seen in the final iteration.
    pub trajectory_max_delta: f64,
}

/// Starting point: each essay's plain mean of received grades.
pub fn peerrank_init(matrix: &GradeMatrix) -> Vec<f64> {
    (0..matrix.n())
        .map(|j| {
            let graders = matrix.graders(j);
            let sum: f64 = graders
                .iter()
                .map(|&i| matrix.entry(i, j).expect("grader set mirrors entries"))
                .sum();
            sum / graders.len() as f64
        })
        .collect()
}

/// One update of every student's grade.
///
/// X'_j mixes (1-alpha-beta)·X_j with the alpha term (received grades
/// weighted by the graders' current grades) and, when beta > 0, the beta
/// term (mean of 1 - |given grade - current grade of the gradee|). If the
/// graders of j currently all have grade 0, or j graded nobody, the
/// corresponding term carries X_j unchanged. Results are clamped to [0, 1].
pub fn peerrank_step(x: &[f64], matrix: &GradeMatrix, config: &PeerRankConfig) -> Vec<f64> {
    assert_eq!(x.len(), matrix.n(), "grade vector must match matrix size");
    let alpha = config.alpha;
    let beta = config.beta;
    (0..matrix.n())
        .map(|j| {
            let xj = x[j];
            let graders = matrix.graders(j);
            let weight_total: f64 = graders.iter().map(|&i| x[i]).sum();
            let alpha_term = if weight_total == 0.0 {
                xj
            } else {
                let first = matrix.entry(graders[0], j).expect("grader set mirrors entries");
                if graders.iter().all(|&i| matrix.entry(i, j) == Some(first)) {
                    // a weighted average of identical grades is that grade;
                    // skipping the division keeps unanimous essays exact
                    first
                } else {
                    let weighted: f64 = graders
                        .iter()
                        .map(|&i| x[i] * matrix.entry(i, j).expect("grader set mirrors entries"))
                        .sum();
                    weighted / weight_total
                }
            };
            let beta_term = if beta == 0.0 {
                None
            } else {
                let graded = matrix.graded_by(j);
                if graded.is_empty() {
                    Some(xj)
                } else {
                    let accuracy: f64 = graded
                        .iter()
                        .map(|&k| {
                            let given = matrix.entry(j, k).expect("graded set mirrors entries");
                            1.0 - (given - x[k]).abs()
                        })
                        .sum();
                    Some(accuracy / graded.len() as f64)
                }
            };
            // a convex combination of equal terms is that value; returning
            // it directly keeps consensus fixed points exact
            if alpha_term == xj && beta_term.map_or(true, |b| b == xj) {
                return xj;
            }
            let mut next = (1.0 - alpha - beta) * xj + alpha * alpha_term;
            if let Some(b) = beta_term {
                next += beta * b;
            }
            next.clamp(0.0, 1.0)
        })
        .collect()
}

/// Iterates from [`peerrank_init`] until the largest per-student change
/// drops below the tolerance or the iteration budget runs out.
pub fn peerrank(matrix: &GradeMatrix, config: &PeerRankConfig) -> PeerRankResult {
    peerrank_from(peerrank_init(matrix), matrix, config)
}

/// Same as [`peerrank`] but starting from a caller-supplied vector.
pub fn peerrank_from(
    init: Vec<f64>,
    matrix: &GradeMatrix,
    config: &PeerRankConfig,
) -> PeerRankResult {
    let mut x = init;
    let mut last_delta = f64::INFINITY;
    for iteration in 1..=config.max_iterations {
        let next = peerrank_step(&x, matrix, config);
        last_delta = x
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        x = next;
        if last_delta < config.tolerance {
            return PeerRankResult {
                grades: x,
                iterations_used: iteration,
                converged: true,
                trajectory_max_delta: last_delta,
            };
        }
    }
    PeerRankResult {
        grades: x,
        iterations_used: config.max_iterations,
        converged: false,
        trajectory_max_delta: last_delta,
    }
}

/// Rescales unit-interval results back to the 0..=10 grade scale.
pub fn peerrank_to_grades(result: &PeerRankResult) -> Vec<Grade> {
    result
        .grades
        .iter()
        .map(|&g| Grade::new(g * 10.0).expect("unit-interval grades scale into range"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(n: usize, entries: &[(usize, usize, f64)]) -> GradeMatrix {
        GradeMatrix::new(
            n,
            entries.iter().map(|&(i, j, g)| ((i, j), g)).collect(),
        )
        .unwrap()
    }

    /// Complete 3-student matrix: rows are the grades each rater hands out.
    fn three_student() -> GradeMatrix {
        matrix(
            3,
            &[
                (0, 1, 0.8),
                (0, 2, 0.8),
                (1, 0, 0.6),
                (1, 2, 0.6),
                (2, 0, 0.7),
                (2, 1, 0.7),
            ],
        )
    }

    #[test]
    fn matrix_validation() {
        assert!(matches!(
            GradeMatrix::new(2, [((0, 0), 0.5)].into()),
            Err(Error::InvalidMatrixEntry { .. })
        ));
        assert!(matches!(
            GradeMatrix::new(2, [((0, 1), 1.5)].into()),
            Err(Error::InvalidMatrixEntry { .. })
        ));
        assert!(matches!(
            GradeMatrix::new(2, [((0, 5), 0.5)].into()),
            Err(Error::InvalidMatrixEntry { .. })
        ));
        assert!(matches!(
            GradeMatrix::new(2, [((0, 1), 0.5)].into()),
            Err(Error::EmptyGraders(0))
        ));
    }

    #[test]
    fn init_is_mean_of_received() {
        let x = peerrank_init(&three_student());
        assert_eq!(x, vec![(0.6 + 0.7) / 2.0, (0.8 + 0.7) / 2.0, (0.8 + 0.6) / 2.0]);

        let single = matrix(2, &[(0, 1, 0.5), (1, 0, 0.9)]);
        assert_eq!(peerrank_init(&single), vec![0.9, 0.5]);
    }

    #[test]
    fn consensus_is_a_fixed_point() {
        let c = 0.9;
        let m = matrix(
            3,
            &[
                (0, 1, c),
                (0, 2, c),
                (1, 0, c),
                (1, 2, c),
                (2, 0, c),
                (2, 1, c),
            ],
        );
        let config = PeerRankConfig::plain();
        let x = peerrank_init(&m);
        assert_eq!(x, vec![c, c, c]);
        assert_eq!(peerrank_step(&x, &m, &config), vec![c, c, c]);

        let result = peerrank(&m, &config);
        assert_eq!(result.grades, vec![c, c, c]);
        assert_eq!(result.iterations_used, 1);
        assert!(result.converged);
    }

    #[test]
    fn alpha_zero_returns_init_exactly() {
        let m = three_student();
        let config = PeerRankConfig::new(0.0, 0.0, 1e-6, 1000).unwrap();
        let result = peerrank(&m, &config);
        assert_eq!(result.grades, peerrank_init(&m));
        assert_eq!(result.iterations_used, 1);
        assert!(result.converged);
    }

    #[test]
    fn hand_evaluated_step() {
        let m = three_student();
        let config = PeerRankConfig::new(0.5, 0.0, 1e-6, 1000).unwrap();
        let x = peerrank_init(&m);
        let next = peerrank_step(&x, &m, &config);

        // independently written out: X'_j = 0.5*X_j + 0.5 * (sum_i X_i*A_ij / sum_i X_i)
        let e0 = 0.5 * x[0] + 0.5 * ((x[1] * 0.6 + x[2] * 0.7) / (x[1] + x[2]));
        let e1 = 0.5 * x[1] + 0.5 * ((x[0] * 0.8 + x[2] * 0.7) / (x[0] + x[2]));
        let e2 = 0.5 * x[2] + 0.5 * ((x[0] * 0.8 + x[1] * 0.6) / (x[0] + x[1]));
        assert!((next[0] - e0).abs() < 1e-15);
        assert!((next[1] - e1).abs() < 1e-15);
        assert!((next[2] - e2).abs() < 1e-15);
        assert!((next[0] - 0.6491379310344828).abs() < 1e-12);
        assert!((next[1] - 0.7490740740740741).abs() < 1e-12);
        assert!((next[2] - 0.6964285714285714).abs() < 1e-12);
    }

    #[test]
    fn zero_rank_graders_carry_current_value() {
        // both graders of essay 2 currently have grade 0
        let m = matrix(3, &[(0, 1, 0.4), (1, 0, 0.4), (0, 2, 0.9), (1, 2, 0.9), (2, 0, 0.4), (2, 1, 0.4)]);
        let config = PeerRankConfig::new(0.5, 0.0, 1e-6, 10).unwrap();
        let x = vec![0.0, 0.0, 0.9];
        let next = peerrank_step(&x, &m, &config);
        assert_eq!(next[2], 0.9);
    }

    /// Plain PeerRank written with no beta logic at all, as a reference.
    fn plain_step(x: &[f64], m: &GradeMatrix, alpha: f64) -> Vec<f64> {
        (0..m.n())
            .map(|j| {
                let total: f64 = m.graders(j).iter().map(|&i| x[i]).sum();
                let received = if total == 0.0 {
                    x[j]
                } else {
                    m.graders(j)
                        .iter()
                        .map(|&i| x[i] * m.entry(i, j).unwrap())
                        .sum::<f64>()
                        / total
                };
                if received == x[j] {
                    x[j]
                } else {
                    ((1.0 - alpha - 0.0) * x[j] + alpha * received).clamp(0.0, 1.0)
                }
            })
            .collect()
    }

    #[test]
    fn beta_zero_equals_plain_bitwise() {
        let m = three_student();
        let config = PeerRankConfig::new(0.3, 0.0, 1e-9, 500).unwrap();
        let mut x = peerrank_init(&m);
        for _ in 0..50 {
            let via_general = peerrank_step(&x, &m, &config);
            let via_plain = plain_step(&x, &m, config.alpha);
            assert_eq!(via_general, via_plain);
            x = via_general;
        }
    }

    #[test]
    fn generalized_beta_term_rewards_accuracy() {
        let m = three_student();
        let config = PeerRankConfig::generalized();
        let result = peerrank(&m, &config);
        assert!(result.converged);
        for g in &result.grades {
            assert!((0.0..=1.0).contains(g));
        }
    }

    #[test]
    fn iterates_stay_in_unit_interval() {
        let m = three_student();
        let config = PeerRankConfig::new(0.9, 0.05, 1e-10, 2000).unwrap();
        let result = peerrank(&m, &config);
        for g in &result.grades {
            assert!((0.0..=1.0).contains(g));
        }
    }

    #[test]
    fn config_validation() {
        assert!(PeerRankConfig::new(1.0, 0.0, 1e-6, 100).is_err());
        assert!(PeerRankConfig::new(-0.1, 0.0, 1e-6, 100).is_err());
        assert!(PeerRankConfig::new(0.5, 0.5, 1e-6, 100).is_err());
        assert!(PeerRankConfig::new(0.5, -0.1, 1e-6, 100).is_err());
        assert!(PeerRankConfig::new(0.5, 0.1, 0.0, 100).is_err());
        assert!(PeerRankConfig::new(0.5, 0.1, 1e-6, 0).is_err());
        assert!(PeerRankConfig::new(0.0, 0.0, 1e-6, 100).is_ok());
    }

    #[test]
    fn rescaling_to_grades() {
        let result = PeerRankResult {
            grades: vec![0.75, 0.0, 0.51, 0.9],
            iterations_used: 1,
            converged: true,
            trajectory_max_delta: 0.0,
        };
        let grades = peerrank_to_grades(&result);
        let values: Vec<f64> = grades.iter().map(|g| g.value()).collect();
        assert_eq!(values, vec![7.5, 0.0, 5.1, 9.0]);
    }
}
