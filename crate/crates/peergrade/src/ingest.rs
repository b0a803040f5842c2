//! CSV ingestion: peer reviews, instructor grades, authorship, engagement
//! and quiz logs, joined into a [`ReviewDataset`].
//!
//! A file whose header does not match its schema is rejected outright with
//! [`Error::MalformedHeader`]. Bad rows are collected as [`RowError`]s with
//! their line numbers and the run continues; on duplicate keys the first
//! row wins. Identifiers are restricted to `[A-Za-z0-9_-]` so the emitted
//! CSV never needs quoting.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::aggregate::Grade;
use crate::weight::{EngagementRecord, PerformanceRecord};
use crate::{Error, EssayId, Result, StudentId};

pub const REVIEWS_HEADER: [&str; 6] = [
    "essay_id",
    "rater_id",
    "writing",
    "format_org",
    "language_bib",
    "argumentation",
];
pub const INSTRUCTOR_HEADER: [&str; 5] = [
    "essay_id",
    "writing",
    "format_org",
    "language_bib",
    "argumentation",
];
pub const ESSAYS_HEADER: [&str; 2] = ["essay_id", "author_id"];
pub const ENGAGEMENT_HEADER: [&str; 3] = ["student_id", "lessons_completed", "total_lessons"];
pub const QUIZZES_HEADER: [&str; 3] = ["student_id", "quiz_id", "score"];

/// Four rubric dimensions, each scored 1..=5.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RubricScore {
    pub writing: u8,
    pub format_org: u8,
    pub language_bib: u8,
    pub argumentation: u8,
}

impl RubricScore {
    pub fn new(writing: i64, format_org: i64, language_bib: i64, argumentation: i64) -> Result<Self> {
        let check = |dimension: &'static str, value: i64| -> Result<u8> {
            if (1..=5).contains(&value) {
                Ok(value as u8)
            } else {
                Err(Error::InvalidRubric { dimension, value })
            }
        };
        Ok(RubricScore {
            writing: check("writing", writing)?,
            format_org: check("format_org", format_org)?,
            language_bib: check("language_bib", language_bib)?,
            argumentation: check("argumentation", argumentation)?,
        })
    }

    /// Sum of the four dimensions, in 4..=20.
    pub fn total(self) -> u8 {
        self.writing + self.format_org + self.language_bib + self.argumentation
    }
}

/// Halves the 4..=20 rubric total onto the 0..=10 grade scale.
pub fn rescale_rubric(rubric: RubricScore) -> Grade {
    Grade::new(f64::from(rubric.total()) / 2.0).expect("rubric totals stay within the grade range")
}

/// One peer's rubric scores for one essay.
#[derive(Debug, Clone, PartialEq)]
pub struct PeerReview {
    pub essay_id: EssayId,
    pub rater_id: StudentId,
    pub rubric: RubricScore,
    pub grade: Grade,
}

impl PeerReview {
    pub fn new(essay_id: EssayId, rater_id: StudentId, rubric: RubricScore) -> Self {
        let grade = rescale_rubric(rubric);
        PeerReview {
            essay_id,
            rater_id,
            rubric,
            grade,
        }
    }
}

/// The instructor's rubric scores for one essay.
#[derive(Debug, Clone, PartialEq)]
pub struct InstructorReview {
    pub rubric: RubricScore,
    pub grade: Grade,
}

impl InstructorReview {
    pub fn new(rubric: RubricScore) -> Self {
        InstructorReview {
            rubric,
            grade: rescale_rubric(rubric),
        }
    }
}

/// A row that failed to parse or collided with an earlier key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    /// 1-based line number in the source file (the header is line 1).
    pub line: u64,
    pub kind: RowErrorKind,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowErrorKind {
    ParseError,
    DuplicateKey,
}

impl RowErrorKind {
    pub fn name(self) -> &'static str {
        match self {
            RowErrorKind::ParseError => "PARSE_ERROR",
            RowErrorKind::DuplicateKey => "DUPLICATE_KEY",
        }
    }
}

impl fmt::Display for RowErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parse output: the usable value plus whatever rows were rejected.
#[derive(Debug, Clone)]
pub struct Parsed<T> {
    pub value: T,
    pub row_errors: Vec<RowError>,
}

fn valid_id(s: &str) -> bool {
    !s.is_empty()
        && s.bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

fn reader_over<'a>(bytes: &'a [u8], expected: &[&str]) -> Result<csv::Reader<&'a [u8]>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let expected_line = expected.join(",");
    let headers = match reader.headers() {
        Ok(h) => h,
        Err(e) => {
            return Err(Error::MalformedHeader {
                expected: expected_line,
                got: format!("unreadable header ({e})"),
            })
        }
    };
    if headers.iter().ne(expected.iter().copied()) {
        return Err(Error::MalformedHeader {
            expected: expected_line,
            got: headers.iter().collect::<Vec<_>>().join(","),
        });
    }
    Ok(reader)
}

/// Walks data records, feeding good rows to `row` and collecting failures.
/// `row` returns a detail message on rejection.
fn for_each_row(
    reader: &mut csv::Reader<&[u8]>,
    errors: &mut Vec<RowError>,
    mut row: impl FnMut(u64, &csv::StringRecord) -> std::result::Result<(), (RowErrorKind, String)>,
) {
    for record in reader.records() {
        match record {
            Ok(rec) => {
                let line = rec.position().map_or(0, |p| p.line());
                if let Err((kind, detail)) = row(line, &rec) {
                    errors.push(RowError { line, kind, detail });
                }
            }
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                errors.push(RowError {
                    line,
                    kind: RowErrorKind::ParseError,
                    detail: e.to_string(),
                });
            }
        }
    }
}

type RowResult<T> = std::result::Result<T, (RowErrorKind, String)>;

fn field<'a>(rec: &'a csv::StringRecord, idx: usize, name: &str) -> RowResult<&'a str> {
    rec.get(idx)
        .ok_or_else(|| (RowErrorKind::ParseError, format!("missing field {name}")))
}

fn id_field(rec: &csv::StringRecord, idx: usize, name: &str) -> RowResult<String> {
    let raw = field(rec, idx, name)?;
    if !valid_id(raw) {
        return Err((
            RowErrorKind::ParseError,
            format!("invalid {name} `{raw}` (allowed: [A-Za-z0-9_-], nonempty)"),
        ));
    }
    Ok(raw.to_string())
}

fn int_field(rec: &csv::StringRecord, idx: usize, name: &str) -> RowResult<i64> {
    let raw = field(rec, idx, name)?;
    raw.trim().parse::<i64>().map_err(|_| {
        (
            RowErrorKind::ParseError,
            format!("{name} `{raw}` is not an integer"),
        )
    })
}

fn rubric_from(rec: &csv::StringRecord, first: usize) -> RowResult<RubricScore> {
    let w = int_field(rec, first, "writing")?;
    let f = int_field(rec, first + 1, "format_org")?;
    let l = int_field(rec, first + 2, "language_bib")?;
    let a = int_field(rec, first + 3, "argumentation")?;
    RubricScore::new(w, f, l, a).map_err(|e| (RowErrorKind::ParseError, e.to_string()))
}

/// Reads `reviews.csv`. Duplicate (essay, rater) pairs keep the first row.
pub fn parse_reviews(bytes: &[u8]) -> Result<Parsed<Vec<PeerReview>>> {
    let mut reader = reader_over(bytes, &REVIEWS_HEADER)?;
    let mut reviews = Vec::new();
    let mut row_errors = Vec::new();
    let mut seen = BTreeSet::new();
    for_each_row(&mut reader, &mut row_errors, |_line, rec| {
        let essay_id = id_field(rec, 0, "essay_id")?;
        let rater_id = id_field(rec, 1, "rater_id")?;
        let rubric = rubric_from(rec, 2)?;
        if !seen.insert((essay_id.clone(), rater_id.clone())) {
            return Err((
                RowErrorKind::DuplicateKey,
                format!("review ({essay_id}, {rater_id}) already seen"),
            ));
        }
        reviews.push(PeerReview::new(essay_id, rater_id, rubric));
        Ok(())
    });
    Ok(Parsed {
        value: reviews,
        row_errors,
    })
}

/// Reads `instructor.csv`, one rubric row per essay.
pub fn parse_instructor(bytes: &[u8]) -> Result<Parsed<BTreeMap<EssayId, InstructorReview>>> {
    let mut reader = reader_over(bytes, &INSTRUCTOR_HEADER)?;
    let mut grades = BTreeMap::new();
    let mut row_errors = Vec::new();
    for_each_row(&mut reader, &mut row_errors, |_line, rec| {
        let essay_id = id_field(rec, 0, "essay_id")?;
        let rubric = rubric_from(rec, 1)?;
        if grades.contains_key(&essay_id) {
            return Err((
                RowErrorKind::DuplicateKey,
                format!("instructor grade for {essay_id} already seen"),
            ));
        }
        grades.insert(essay_id, InstructorReview::new(rubric));
        Ok(())
    });
    Ok(Parsed {
        value: grades,
        row_errors,
    })
}

/// Reads `essays.csv`, the essay → author map.
pub fn parse_essays(bytes: &[u8]) -> Result<Parsed<BTreeMap<EssayId, StudentId>>> {
    let mut reader = reader_over(bytes, &ESSAYS_HEADER)?;
    let mut authors = BTreeMap::new();
    let mut row_errors = Vec::new();
    for_each_row(&mut reader, &mut row_errors, |_line, rec| {
        let essay_id = id_field(rec, 0, "essay_id")?;
        let author_id = id_field(rec, 1, "author_id")?;
        if authors.contains_key(&essay_id) {
            return Err((
                RowErrorKind::DuplicateKey,
                format!("essay {essay_id} already has an author"),
            ));
        }
        authors.insert(essay_id, author_id);
        Ok(())
    });
    Ok(Parsed {
        value: authors,
        row_errors,
    })
}

/// Reads `engagement.csv`, one row per student.
pub fn parse_engagement(bytes: &[u8]) -> Result<Parsed<BTreeMap<StudentId, EngagementRecord>>> {
    let mut reader = reader_over(bytes, &ENGAGEMENT_HEADER)?;
    let mut records = BTreeMap::new();
    let mut row_errors = Vec::new();
    for_each_row(&mut reader, &mut row_errors, |_line, rec| {
        let student_id = id_field(rec, 0, "student_id")?;
        let completed = int_field(rec, 1, "lessons_completed")?;
        let total = int_field(rec, 2, "total_lessons")?;
        if records.contains_key(&student_id) {
            return Err((
                RowErrorKind::DuplicateKey,
                format!("engagement for {student_id} already seen"),
            ));
        }
        let (completed, total) = match (u32::try_from(completed), u32::try_from(total)) {
            (Ok(c), Ok(t)) => (c, t),
            _ => {
                return Err((
                    RowErrorKind::ParseError,
                    format!("negative lesson counts for {student_id}"),
                ))
            }
        };
        let record = EngagementRecord::new(student_id.clone(), completed, total)
            .map_err(|e| (RowErrorKind::ParseError, e.to_string()))?;
        records.insert(student_id, record);
        Ok(())
    });
    Ok(Parsed {
        value: records,
        row_errors,
    })
}

/// Reads `quizzes.csv`. Rows accumulate per student; the course quiz count
/// is the number of distinct quiz ids seen anywhere in the file.
pub fn parse_quizzes(bytes: &[u8]) -> Result<Parsed<BTreeMap<StudentId, PerformanceRecord>>> {
    let mut reader = reader_over(bytes, &QUIZZES_HEADER)?;
    let mut rows: BTreeMap<StudentId, BTreeMap<String, f64>> = BTreeMap::new();
    let mut quiz_ids = BTreeSet::new();
    let mut row_errors = Vec::new();
    for_each_row(&mut reader, &mut row_errors, |_line, rec| {
        let student_id = id_field(rec, 0, "student_id")?;
        let quiz_id = id_field(rec, 1, "quiz_id")?;
        let raw = field(rec, 2, "score")?;
        let score: f64 = raw.trim().parse().map_err(|_| {
            (
                RowErrorKind::ParseError,
                format!("score `{raw}` is not a number"),
            )
        })?;
        if !score.is_finite() || !(0.0..=100.0).contains(&score) {
            return Err((
                RowErrorKind::ParseError,
                format!("score {score} outside 0..=100"),
            ));
        }
        let scores = rows.entry(student_id.clone()).or_default();
        if scores.contains_key(&quiz_id) {
            return Err((
                RowErrorKind::DuplicateKey,
                format!("quiz ({student_id}, {quiz_id}) already seen"),
            ));
        }
        scores.insert(quiz_id.clone(), score);
        quiz_ids.insert(quiz_id);
        Ok(())
    });
    let total_quizzes = quiz_ids.len().max(1) as u32;
    let mut records = BTreeMap::new();
    for (student_id, scores) in rows {
        let record = PerformanceRecord::new(student_id.clone(), scores, total_quizzes)
            .expect("per-row validation keeps records constructible");
        records.insert(student_id, record);
    }
    Ok(Parsed {
        value: records,
        row_errors,
    })
}

/// Why an essay was left out of the retained set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExclusionReason {
    /// The essay never appears in `essays.csv`, so self-reviews cannot be
    /// detected.
    UnknownAuthor,
    TooFewReviews,
    NoInstructorGrade,
}

impl ExclusionReason {
    pub fn name(self) -> &'static str {
        match self {
            ExclusionReason::UnknownAuthor => "UNKNOWN_AUTHOR",
            ExclusionReason::TooFewReviews => "TOO_FEW_REVIEWS",
            ExclusionReason::NoInstructorGrade => "NO_INSTRUCTOR_GRADE",
        }
    }
}

impl fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Non-fatal events noticed while joining the dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DatasetDiagnostic {
    /// A review whose rater authored the reviewed essay; dropped.
    SelfReview {
        essay_id: EssayId,
        rater_id: StudentId,
    },
}

impl DatasetDiagnostic {
    pub fn kind(&self) -> &'static str {
        match self {
            DatasetDiagnostic::SelfReview { .. } => "SELF_REVIEW",
        }
    }
}

/// A retained essay with everything needed to grade it.
#[derive(Debug, Clone, PartialEq)]
pub struct EssayRecord {
    pub essay_id: EssayId,
    pub author_id: StudentId,
    /// Sorted by rater id; at least `min_reviews` entries.
    pub reviews: Vec<PeerReview>,
    pub instructor_grade: Option<Grade>,
}

/// All inputs joined: retained essays, activity records, and the full
/// account of what was excluded and why.
#[derive(Debug, Clone)]
pub struct ReviewDataset {
    /// Sorted by essay id.
    pub essays: Vec<EssayRecord>,
    pub engagement: BTreeMap<StudentId, EngagementRecord>,
    pub performance: BTreeMap<StudentId, PerformanceRecord>,
    pub exclusions: Vec<(EssayId, ExclusionReason)>,
    pub diagnostics: Vec<DatasetDiagnostic>,
}

impl ReviewDataset {
    pub fn essay(&self, id: &str) -> Option<&EssayRecord> {
        self.essays.iter().find(|e| e.essay_id == id)
    }
}

/// Joins parsed inputs into a [`ReviewDataset`].
///
/// The essay universe is every id with at least one review or an
/// instructor grade. Each essay passes through, in order: author lookup
/// (unknown → excluded), self-review dropping (diagnostic, not exclusion),
/// the `min_reviews` floor, and, when an instructor map is supplied, the
/// instructor-grade requirement. Essays with more than `min_reviews`
/// reviews keep all of them. The retained/excluded split never depends on
/// input row order; per-essay reviews are canonically ordered by rater id.
pub fn build_dataset(
    reviews: Vec<PeerReview>,
    authors: &BTreeMap<EssayId, StudentId>,
    instructor: Option<&BTreeMap<EssayId, InstructorReview>>,
    engagement: BTreeMap<StudentId, EngagementRecord>,
    performance: BTreeMap<StudentId, PerformanceRecord>,
    min_reviews: usize,
) -> ReviewDataset {
    let mut by_essay: BTreeMap<EssayId, Vec<PeerReview>> = BTreeMap::new();
    for review in reviews {
        by_essay.entry(review.essay_id.clone()).or_default().push(review);
    }
    let mut universe: BTreeSet<EssayId> = by_essay.keys().cloned().collect();
    if let Some(instructor) = instructor {
        universe.extend(instructor.keys().cloned());
    }

    let mut essays = Vec::new();
    let mut exclusions = Vec::new();
    let mut diagnostics = Vec::new();
    for essay_id in universe {
        let Some(author_id) = authors.get(&essay_id) else {
            exclusions.push((essay_id, ExclusionReason::UnknownAuthor));
            continue;
        };
        let mut essay_reviews = by_essay.remove(&essay_id).unwrap_or_default();
        essay_reviews.retain(|r| {
            if r.rater_id == *author_id {
                diagnostics.push(DatasetDiagnostic::SelfReview {
                    essay_id: r.essay_id.clone(),
                    rater_id: r.rater_id.clone(),
                });
                false
            } else {
                true
            }
        });
        if essay_reviews.len() < min_reviews {
            exclusions.push((essay_id, ExclusionReason::TooFewReviews));
            continue;
        }
        let instructor_grade = match instructor {
            Some(map) => match map.get(&essay_id) {
                Some(review) => Some(review.grade),
                None => {
                    exclusions.push((essay_id, ExclusionReason::NoInstructorGrade));
                    continue;
                }
            },
            None => None,
        };
        essay_reviews.sort_by(|a, b| a.rater_id.cmp(&b.rater_id));
        essays.push(EssayRecord {
            essay_id,
            author_id: author_id.clone(),
            reviews: essay_reviews,
            instructor_grade,
        });
    }

    ReviewDataset {
        essays,
        engagement,
        performance,
        exclusions,
        diagnostics,
    }
}

fn push_line(out: &mut String, fields: &[&str]) {
    out.push_str(&fields.join(","));
    out.push('\n');
}

/// Canonical `reviews.csv`: rows sorted by (essay, rater), LF endings.
pub fn write_reviews(reviews: &[PeerReview]) -> String {
    let mut sorted: Vec<&PeerReview> = reviews.iter().collect();
    sorted.sort_by(|a, b| (&a.essay_id, &a.rater_id).cmp(&(&b.essay_id, &b.rater_id)));
    let mut out = String::new();
    push_line(&mut out, &REVIEWS_HEADER);
    for r in sorted {
        push_line(
            &mut out,
            &[
                &r.essay_id,
                &r.rater_id,
                &r.rubric.writing.to_string(),
                &r.rubric.format_org.to_string(),
                &r.rubric.language_bib.to_string(),
                &r.rubric.argumentation.to_string(),
            ],
        );
    }
    out
}

/// Canonical `instructor.csv`: rows sorted by essay id.
pub fn write_instructor(grades: &BTreeMap<EssayId, InstructorReview>) -> String {
    let mut out = String::new();
    push_line(&mut out, &INSTRUCTOR_HEADER);
    for (essay_id, review) in grades {
        push_line(
            &mut out,
            &[
                essay_id,
                &review.rubric.writing.to_string(),
                &review.rubric.format_org.to_string(),
                &review.rubric.language_bib.to_string(),
                &review.rubric.argumentation.to_string(),
            ],
        );
    }
    out
}

/// Canonical `essays.csv`: rows sorted by essay id.
pub fn write_essays(authors: &BTreeMap<EssayId, StudentId>) -> String {
    let mut out = String::new();
    push_line(&mut out, &ESSAYS_HEADER);
    for (essay_id, author_id) in authors {
        push_line(&mut out, &[essay_id, author_id]);
    }
    out
}

/// Canonical `engagement.csv`: rows sorted by student id.
pub fn write_engagement(records: &BTreeMap<StudentId, EngagementRecord>) -> String {
    let mut out = String::new();
    push_line(&mut out, &ENGAGEMENT_HEADER);
    for (student_id, r) in records {
        push_line(
            &mut out,
            &[
                student_id,
                &r.lessons_completed_on_time.to_string(),
                &r.total_lessons.to_string(),
            ],
        );
    }
    out
}

/// Canonical `quizzes.csv`: rows sorted by (student, quiz). Scores use
/// Rust's shortest round-trip float formatting, so re-parsing recovers the
/// exact values.
pub fn write_quizzes(records: &BTreeMap<StudentId, PerformanceRecord>) -> String {
    let mut out = String::new();
    push_line(&mut out, &QUIZZES_HEADER);
    for (student_id, record) in records {
        for (quiz_id, score) in &record.quiz_scores {
            push_line(&mut out, &[student_id, quiz_id, &score.to_string()]);
        }
    }
    out
}
