//! Validity analysis: how well aggregated peer grades agree with the
//! instructor's, measured by Pearson correlation with a t-test for
//! significance, plus the descriptive statistics and plot data (histogram
//! bins, five-number summaries) that accompany the grid.

use std::collections::BTreeMap;

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::aggregate::{aggregate, AggregationMethod, Diagnostic, GradeSample};
use crate::ingest::ReviewDataset;
use crate::weight::{weights_for_raters, PerformanceDenominator, WeightScheme};
use crate::{Error, EssayId, Result, StudentId};

/// Histogram bin width used for report plot data; grades live on a
/// half-point lattice so half-unit bins resolve it exactly.
pub const HIST_BIN_WIDTH: f64 = 0.5;
pub const HIST_ORIGIN: f64 = 0.0;

/// Aggregated scores paired with instructor scores, index-aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedScores {
    aggregated: Vec<f64>,
    instructor: Vec<f64>,
}

impl PairedScores {
    pub fn new(aggregated: Vec<f64>, instructor: Vec<f64>) -> Result<Self> {
        if aggregated.len() != instructor.len() {
            return Err(Error::LengthMismatch {
                sample: aggregated.len(),
                weights: instructor.len(),
            });
        }
        if aggregated.len() < 3 {
            return Err(Error::TooFewValues {
                need: 3,
                got: aggregated.len(),
            });
        }
        for &v in aggregated.iter().chain(&instructor) {
            if !v.is_finite() {
                return Err(Error::InvalidGrade(v));
            }
        }
        Ok(PairedScores {
            aggregated,
            instructor,
        })
    }

    pub fn len(&self) -> usize {
        self.aggregated.len()
    }

    pub fn is_empty(&self) -> bool {
        false // m >= 3 by construction
    }
}

/// Pearson product-moment correlation, clamped into [-1, 1].
pub fn pearson(pairs: &PairedScores) -> Result<f64> {
    let n = pairs.len() as f64;
    let mean_x = pairs.aggregated.iter().sum::<f64>() / n;
    let mean_y = pairs.instructor.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in pairs.aggregated.iter().zip(&pairs.instructor) {
        let dx = x - mean_x;
        let dy = y - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ConstantVector);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// t-statistic and two-tailed p-value for a Pearson r.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Significance {
    pub t_statistic: f64,
    pub p_value: f64,
    /// |r| = 1: t is infinite and p is pinned to 0.
    pub degenerate: bool,
}

/// Two-tailed t-test for a correlation observed on `m` pairs:
/// t = r·sqrt(m-2)/sqrt(1-r²) against Student's t with m-2 degrees of
/// freedom.
pub fn significance(r: f64, m: usize) -> Result<Significance> {
    if m < 3 {
        return Err(Error::TooFewValues { need: 3, got: m });
    }
    if !(-1.0..=1.0).contains(&r) {
        return Err(Error::InvalidConfig(format!(
            "correlation {r} outside [-1, 1]"
        )));
    }
    if r.abs() == 1.0 {
        return Ok(Significance {
            t_statistic: f64::INFINITY.copysign(r),
            p_value: 0.0,
            degenerate: true,
        });
    }
    let dof = (m - 2) as f64;
    let t = r * dof.sqrt() / (1.0 - r * r).sqrt();
    let p = if t == 0.0 {
        1.0
    } else {
        let dist = StudentsT::new(0.0, 1.0, dof).expect("m >= 3 gives a valid t distribution");
        (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
    };
    Ok(Significance {
        t_statistic: t,
        p_value: p,
        degenerate: false,
    })
}

/// Mean, sample standard deviation (n-1), and range of a vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescriptiveStats {
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

pub fn descriptive(values: &[f64]) -> Result<DescriptiveStats> {
    if values.len() < 2 {
        return Err(Error::TooFewValues {
            need: 2,
            got: values.len(),
        });
    }
    let n = values.len() as f64;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = (values.iter().sum::<f64>() / n).clamp(min, max);
    let ss: f64 = values.iter().map(|&v| (v - mean) * (v - mean)).sum();
    Ok(DescriptiveStats {
        mean,
        sd: (ss / (n - 1.0)).sqrt(),
        min,
        max,
        count: values.len(),
    })
}

/// One half-open histogram bin [lower, lower + width).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramBin {
    pub lower: f64,
    pub count: usize,
}

/// Bins values into half-open intervals [origin + k·w, origin + (k+1)·w).
/// Interior empty bins are emitted with count 0; the result is empty only
/// for empty input.
pub fn histogram(values: &[f64], bin_width: f64, origin: f64) -> Vec<HistogramBin> {
    assert!(bin_width > 0.0, "bin width must be positive");
    if values.is_empty() {
        return Vec::new();
    }
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for &v in values {
        let k = ((v - origin) / bin_width).floor() as i64;
        *counts.entry(k).or_insert(0) += 1;
    }
    let lo = *counts.keys().next().unwrap();
    let hi = *counts.keys().next_back().unwrap();
    (lo..=hi)
        .map(|k| HistogramBin {
            lower: origin + k as f64 * bin_width,
            count: counts.get(&k).copied().unwrap_or(0),
        })
        .collect()
}

/// Boxplot data: minimum, quartiles, maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiveNumberSummary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Quartiles by linear interpolation at fractional index (m-1)·q. The
/// median is computed by the same two-middle-average rule as the median
/// aggregator so the two agree exactly.
pub fn five_number_summary(values: &[f64]) -> Result<FiveNumberSummary> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    Ok(FiveNumberSummary {
        min: sorted[0],
        q1: quantile(&sorted, 0.25),
        median,
        q3: quantile(&sorted, 0.75),
        max: sorted[n - 1],
    })
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if frac == 0.0 || lo + 1 >= sorted.len() {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// One essay's aggregated grade under a (method, scheme) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct EssayAggregate {
    pub essay_id: EssayId,
    pub value: f64,
    pub weighted: bool,
    pub diagnostics: Vec<Diagnostic>,
    /// Raters that had no record under the scheme (weight 0).
    pub missing_raters: Vec<StudentId>,
}

/// Aggregates every retained essay under one (method, scheme) pair.
/// Scheme `none` takes the unweighted path.
pub fn aggregate_essays(
    dataset: &ReviewDataset,
    method: AggregationMethod,
    scheme: WeightScheme,
    denominator: PerformanceDenominator,
) -> Result<Vec<EssayAggregate>> {
    let mut out = Vec::with_capacity(dataset.essays.len());
    for essay in &dataset.essays {
        let sample = GradeSample::new(essay.reviews.iter().map(|r| r.grade).collect())?;
        let (weights, missing_raters) = match scheme {
            WeightScheme::None => (None, Vec::new()),
            _ => {
                let rater_ids: Vec<StudentId> =
                    essay.reviews.iter().map(|r| r.rater_id.clone()).collect();
                let joined = weights_for_raters(
                    &rater_ids,
                    scheme,
                    &dataset.engagement,
                    &dataset.performance,
                    denominator,
                )?;
                (Some(joined.weights), joined.missing)
            }
        };
        let result = aggregate(&sample, method, weights.as_ref())?;
        let mut diagnostics = result.diagnostics;
        if !missing_raters.is_empty() {
            diagnostics.push(Diagnostic::MissingRecord);
        }
        diagnostics.sort();
        diagnostics.dedup();
        out.push(EssayAggregate {
            essay_id: essay.essay_id.clone(),
            value: result.value,
            weighted: result.weighted,
            diagnostics,
            missing_raters,
        });
    }
    Ok(out)
}

/// Correlation statistics for one grid cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellStats {
    pub r: f64,
    pub t_statistic: f64,
    pub p_value: f64,
    pub m: usize,
    /// |r| = 1 exactly.
    pub degenerate: bool,
    /// Aggregated vector was constant; r, t and p are NaN.
    pub constant: bool,
}

/// Everything computed for one (method, scheme) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidityCell {
    pub stats: CellStats,
    pub descriptive: DescriptiveStats,
    pub histogram: Vec<HistogramBin>,
    pub summary: FiveNumberSummary,
}

/// A diagnostic tied to one essay under one scheme (method-independent).
#[derive(Debug, Clone, PartialEq)]
pub struct EssayDiagnostic {
    pub essay_id: EssayId,
    pub scheme: WeightScheme,
    pub diagnostic: Diagnostic,
    pub detail: String,
}

/// The full method × scheme validity grid plus instructor-side statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidityReport {
    pub cells: BTreeMap<(AggregationMethod, WeightScheme), ValidityCell>,
    pub instructor: DescriptiveStats,
    pub instructor_summary: FiveNumberSummary,
    pub instructor_histogram: Vec<HistogramBin>,
    pub m: usize,
    pub diagnostics: Vec<EssayDiagnostic>,
}

impl ValidityReport {
    pub fn cell(&self, method: AggregationMethod, scheme: WeightScheme) -> Option<&ValidityCell> {
        self.cells.get(&(method, scheme))
    }
}

/// Builds the validity grid over every requested method and scheme.
///
/// Requires instructor grades on all retained essays and at least three of
/// them. A constant aggregated vector flags its cell (NaN statistics)
/// instead of failing the run.
pub fn build_validity_report(
    dataset: &ReviewDataset,
    methods: &[AggregationMethod],
    schemes: &[WeightScheme],
    denominator: PerformanceDenominator,
) -> Result<ValidityReport> {
    let m = dataset.essays.len();
    if m < 3 {
        return Err(Error::TooFewValues { need: 3, got: m });
    }
    let mut instructor_grades = Vec::with_capacity(m);
    for essay in &dataset.essays {
        match essay.instructor_grade {
            Some(g) => instructor_grades.push(g.value()),
            None => return Err(Error::InstructorRequired(essay.essay_id.clone())),
        }
    }

    let mut cells = BTreeMap::new();
    let mut diagnostics = Vec::new();
    for &scheme in schemes {
        for (mi, &method) in methods.iter().enumerate() {
            let aggregates = aggregate_essays(dataset, method, scheme, denominator)?;
            if mi == 0 {
                collect_diagnostics(&aggregates, scheme, &mut diagnostics);
            }
            let values: Vec<f64> = aggregates.iter().map(|a| a.value).collect();
            let stats = match PairedScores::new(values.clone(), instructor_grades.clone())
                .and_then(|p| pearson(&p))
            {
                Ok(r) => {
                    let sig = significance(r, m)?;
                    CellStats {
                        r,
                        t_statistic: sig.t_statistic,
                        p_value: sig.p_value,
                        m,
                        degenerate: sig.degenerate,
                        constant: false,
                    }
                }
                Err(Error::ConstantVector) => CellStats {
                    r: f64::NAN,
                    t_statistic: f64::NAN,
                    p_value: f64::NAN,
                    m,
                    degenerate: false,
                    constant: true,
                },
                Err(e) => return Err(e),
            };
            cells.insert(
                (method, scheme),
                ValidityCell {
                    stats,
                    descriptive: descriptive(&values)?,
                    histogram: histogram(&values, HIST_BIN_WIDTH, HIST_ORIGIN),
                    summary: five_number_summary(&values)?,
                },
            );
        }
    }

    Ok(ValidityReport {
        cells,
        instructor: descriptive(&instructor_grades)?,
        instructor_summary: five_number_summary(&instructor_grades)?,
        instructor_histogram: histogram(&instructor_grades, HIST_BIN_WIDTH, HIST_ORIGIN),
        m,
        diagnostics,
    })
}

fn collect_diagnostics(
    aggregates: &[EssayAggregate],
    scheme: WeightScheme,
    out: &mut Vec<EssayDiagnostic>,
) {
    for agg in aggregates {
        for &d in &agg.diagnostics {
            if d == Diagnostic::MissingRecord {
                for rater in &agg.missing_raters {
                    out.push(EssayDiagnostic {
                        essay_id: agg.essay_id.clone(),
                        scheme,
                        diagnostic: d,
                        detail: rater.clone(),
                    });
                }
            } else {
                out.push(EssayDiagnostic {
                    essay_id: agg.essay_id.clone(),
                    scheme,
                    diagnostic: d,
                    detail: String::new(),
                });
            }
        }
    }
}
