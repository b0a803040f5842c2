//! The eight aggregation functions over a set of peer grades.
//!
//! Four unweighted functions (arithmetic, geometric and harmonic means plus
//! the median) and their weighted counterparts. All of them are means in the
//! strict sense: the result always lies between the smallest and largest
//! observation, and aggregating identical values returns that value exactly.
//!
//! Zero weights mean "this rater does not participate": the weighted
//! functions discard zero-weight observations before evaluating. When every
//! weight is zero the raw functions refuse with [`Error::AllZeroWeights`];
//! the [`aggregate`] dispatcher instead falls back to the unweighted
//! function and flags the result, so a batch run never dies on one essay.

use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

/// Tolerance for deciding that a cumulative weight sits exactly on the
/// half-total boundary of the weighted median. Equal weights reduce to the
/// unweighted median only if the boundary test survives float summation
/// error, so exact `==` is not usable here.
const MEDIAN_BOUNDARY_EPS: f64 = 1e-9;

/// A rescaled rubric score on the 0..=10 scale.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Grade(f64);

impl Grade {
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() || !(0.0..=10.0).contains(&value) {
            return Err(Error::InvalidGrade(value));
        }
        Ok(Grade(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl fmt::Display for Grade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A nonempty, ordered list of grades. The index identifies the rater, so
/// order is preserved exactly as ingested.
#[derive(Debug, Clone, PartialEq)]
pub struct GradeSample(Vec<Grade>);

impl GradeSample {
    pub fn new(grades: Vec<Grade>) -> Result<Self> {
        if grades.is_empty() {
            return Err(Error::EmptySample);
        }
        Ok(GradeSample(grades))
    }

    /// Builds a sample from raw values, validating each as a [`Grade`].
    pub fn from_values(values: &[f64]) -> Result<Self> {
        let grades = values
            .iter()
            .map(|&v| Grade::new(v))
            .collect::<Result<Vec<_>>>()?;
        Self::new(grades)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false // n >= 1 by construction
    }

    pub fn grades(&self) -> &[Grade] {
        &self.0
    }

    fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().map(|g| g.0)
    }
}

/// Nonnegative weights aligned index by index with a [`GradeSample`].
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        for &w in &weights {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidWeight(w));
            }
        }
        Ok(WeightVector(weights))
    }

    /// All-ones vector, the weight image of scheme `none`.
    pub fn uniform(n: usize) -> Self {
        WeightVector(vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// The four aggregation families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AggregationMethod {
    ArithmeticMean,
    GeometricMean,
    HarmonicMean,
    Median,
}

impl AggregationMethod {
    pub const ALL: [AggregationMethod; 4] = [
        AggregationMethod::ArithmeticMean,
        AggregationMethod::GeometricMean,
        AggregationMethod::HarmonicMean,
        AggregationMethod::Median,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AggregationMethod::ArithmeticMean => "arithmetic_mean",
            AggregationMethod::GeometricMean => "geometric_mean",
            AggregationMethod::HarmonicMean => "harmonic_mean",
            AggregationMethod::Median => "median",
        }
    }
}

impl fmt::Display for AggregationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AggregationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "arithmetic_mean" | "am" | "mean" => Ok(AggregationMethod::ArithmeticMean),
            "geometric_mean" | "gm" => Ok(AggregationMethod::GeometricMean),
            "harmonic_mean" | "hm" => Ok(AggregationMethod::HarmonicMean),
            "median" | "md" => Ok(AggregationMethod::Median),
            other => Err(Error::InvalidConfig(format!(
                "unknown aggregation method `{other}`"
            ))),
        }
    }
}

/// Flags attached to an [`AggregateResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Diagnostic {
    /// Some (not all) weights were zero; those observations were discarded.
    ZeroWeightsDiscarded,
    /// Every weight was zero; the unweighted function was used instead.
    UnweightedFallback,
    /// A rater had no engagement/performance record and got weight zero.
    MissingRecord,
}

impl Diagnostic {
    pub fn name(self) -> &'static str {
        match self {
            Diagnostic::ZeroWeightsDiscarded => "ZERO_WEIGHTS_DISCARDED",
            Diagnostic::UnweightedFallback => "UNWEIGHTED_FALLBACK",
            Diagnostic::MissingRecord => "MISSING_RECORD",
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Outcome of [`aggregate`].
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateResult {
    pub value: f64,
    pub method: AggregationMethod,
    /// True when a weight vector was actually applied (not the fallback).
    pub weighted: bool,
    pub diagnostics: Vec<Diagnostic>,
}

fn all_equal(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] == w[1])
}

fn clamp_to_range(value: f64, values: &[f64]) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    value.clamp(lo, hi)
}

/// Sum of the observations divided by their count.
pub fn arithmetic_mean(sample: &GradeSample) -> f64 {
    let values: Vec<f64> = sample.values().collect();
    if all_equal(&values) {
        return values[0];
    }
    let sum: f64 = values.iter().sum();
    clamp_to_range(sum / values.len() as f64, &values)
}

/// n-th root of the product of the observations; zero if any observation
/// is zero. Computed as the exponential of the mean log for n > 1 so large
/// samples neither overflow nor underflow.
pub fn geometric_mean(sample: &GradeSample) -> f64 {
    let values: Vec<f64> = sample.values().collect();
    geometric_mean_impl(&values, None)
}

/// Reciprocal of the mean of the observations' reciprocals.
pub fn harmonic_mean(sample: &GradeSample) -> Result<f64> {
    let values: Vec<f64> = sample.values().collect();
    harmonic_mean_impl(&values, None)
}

/// Middle of the sorted grades for odd n; average of the two middle grades
/// for even n.
pub fn median(sample: &GradeSample) -> f64 {
    let mut values: Vec<f64> = sample.values().collect();
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

fn check_aligned(sample: &GradeSample, weights: &WeightVector) -> Result<()> {
    if sample.len() != weights.len() {
        return Err(Error::LengthMismatch {
            sample: sample.len(),
            weights: weights.len(),
        });
    }
    Ok(())
}

/// Observations with positive weight, paired as (value, weight), preserving
/// input order. Errors when every weight is zero.
fn retained(sample: &GradeSample, weights: &WeightVector) -> Result<Vec<(f64, f64)>> {
    check_aligned(sample, weights)?;
    let pairs: Vec<(f64, f64)> = sample
        .values()
        .zip(weights.as_slice().iter().copied())
        .filter(|&(_, w)| w > 0.0)
        .collect();
    if pairs.is_empty() {
        return Err(Error::AllZeroWeights);
    }
    Ok(pairs)
}

/// Scores multiplied by their weights, divided by the sum of the weights.
pub fn weighted_arithmetic_mean(sample: &GradeSample, weights: &WeightVector) -> Result<f64> {
    let pairs = retained(sample, weights)?;
    let values: Vec<f64> = pairs.iter().map(|&(x, _)| x).collect();
    if all_equal(&values) {
        return Ok(values[0]);
    }
    let total: f64 = pairs.iter().map(|&(_, w)| w).sum();
    let dot: f64 = pairs.iter().map(|&(x, w)| x * w).sum();
    Ok(clamp_to_range(dot / total, &values))
}

/// Product of the scores raised to their weights, under the root given by
/// the weight total. A zero score with positive weight makes the result 0.
pub fn weighted_geometric_mean(sample: &GradeSample, weights: &WeightVector) -> Result<f64> {
    let pairs = retained(sample, weights)?;
    let values: Vec<f64> = pairs.iter().map(|&(x, _)| x).collect();
    let ws: Vec<f64> = pairs.iter().map(|&(_, w)| w).collect();
    Ok(geometric_mean_impl(&values, Some(&ws)))
}

/// Reciprocal of the weighted average of the reciprocals. Zero-weight
/// observations are discarded first, so a zero score only matters when its
/// weight is positive.
pub fn weighted_harmonic_mean(sample: &GradeSample, weights: &WeightVector) -> Result<f64> {
    let pairs = retained(sample, weights)?;
    let values: Vec<f64> = pairs.iter().map(|&(x, _)| x).collect();
    let ws: Vec<f64> = pairs.iter().map(|&(_, w)| w).collect();
    harmonic_mean_impl(&values, Some(&ws))
}

fn geometric_mean_impl(values: &[f64], weights: Option<&[f64]>) -> f64 {
    if values.iter().any(|&x| x == 0.0) {
        return 0.0;
    }
    if all_equal(values) {
        return values[0];
    }
    let (log_sum, total) = match weights {
        Some(ws) => (
            values
                .iter()
                .zip(ws)
                .map(|(&x, &w)| w * x.ln())
                .sum::<f64>(),
            ws.iter().sum::<f64>(),
        ),
        None => (
            values.iter().map(|&x| x.ln()).sum::<f64>(),
            values.len() as f64,
        ),
    };
    clamp_to_range((log_sum / total).exp(), values)
}

fn harmonic_mean_impl(values: &[f64], weights: Option<&[f64]>) -> Result<f64> {
    if values.iter().any(|&x| x == 0.0) {
        return Err(Error::ZeroObservation);
    }
    if all_equal(values) {
        return Ok(values[0]);
    }
    let (recip_sum, total) = match weights {
        Some(ws) => (
            values.iter().zip(ws).map(|(&x, &w)| w / x).sum::<f64>(),
            ws.iter().sum::<f64>(),
        ),
        None => (
            values.iter().map(|&x| 1.0 / x).sum::<f64>(),
            values.len() as f64,
        ),
    };
    Ok(clamp_to_range(total / recip_sum, values))
}

/// The 50% weighted percentile.
///
/// Zero-weight observations are discarded, the rest are sorted by grade
/// (ties keep ingest order), and the cumulative weight is walked until it
/// passes half of the total: the first grade strictly past the boundary is
/// the median, and a grade landing exactly on the boundary is averaged with
/// its successor. With equal weights this reduces to the unweighted median.
pub fn weighted_median(sample: &GradeSample, weights: &WeightVector) -> Result<f64> {
    let mut pairs = retained(sample, weights)?;
    pairs.sort_by(|a, b| f64::total_cmp(&a.0, &b.0)); // stable: ties keep index order
    let total: f64 = pairs.iter().map(|&(_, w)| w).sum();
    let half = total / 2.0;
    let boundary = MEDIAN_BOUNDARY_EPS * total;

    let mut cumulative = 0.0;
    for (k, &(x, w)) in pairs.iter().enumerate() {
        cumulative += w;
        if (cumulative - half).abs() <= boundary {
            return Ok(match pairs.get(k + 1) {
                Some(&(next, _)) => (x + next) / 2.0,
                None => x,
            });
        }
        if cumulative > half {
            return Ok(x);
        }
    }
    // cumulative ends at total > half, so the loop always returns
    unreachable!("cumulative weight never crossed the half total")
}

/// Dispatches to one of the eight functions and records diagnostics.
///
/// An all-zero weight vector does not fail the call: the unweighted
/// function is used and the result carries [`Diagnostic::UnweightedFallback`].
/// Every other error propagates.
pub fn aggregate(
    sample: &GradeSample,
    method: AggregationMethod,
    weights: Option<&WeightVector>,
) -> Result<AggregateResult> {
    match weights {
        None => Ok(AggregateResult {
            value: unweighted(sample, method)?,
            method,
            weighted: false,
            diagnostics: Vec::new(),
        }),
        Some(w) => {
            check_aligned(sample, w)?;
            if w.as_slice().iter().all(|&wi| wi == 0.0) {
                return Ok(AggregateResult {
                    value: unweighted(sample, method)?,
                    method,
                    weighted: false,
                    diagnostics: vec![Diagnostic::UnweightedFallback],
                });
            }
            let value = match method {
                AggregationMethod::ArithmeticMean => weighted_arithmetic_mean(sample, w)?,
                AggregationMethod::GeometricMean => weighted_geometric_mean(sample, w)?,
                AggregationMethod::HarmonicMean => weighted_harmonic_mean(sample, w)?,
                AggregationMethod::Median => weighted_median(sample, w)?,
            };
            let diagnostics = if w.as_slice().iter().any(|&wi| wi == 0.0) {
                vec![Diagnostic::ZeroWeightsDiscarded]
            } else {
                Vec::new()
            };
            Ok(AggregateResult {
                value,
                method,
                weighted: true,
                diagnostics,
            })
        }
    }
}

fn unweighted(sample: &GradeSample, method: AggregationMethod) -> Result<f64> {
    Ok(match method {
        AggregationMethod::ArithmeticMean => arithmetic_mean(sample),
        AggregationMethod::GeometricMean => geometric_mean(sample),
        AggregationMethod::HarmonicMean => harmonic_mean(sample)?,
        AggregationMethod::Median => median(sample),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(values: &[f64]) -> GradeSample {
        GradeSample::from_values(values).unwrap()
    }

    fn weights(values: &[f64]) -> WeightVector {
        WeightVector::new(values.to_vec()).unwrap()
    }

    #[test]
    fn empty_sample_is_rejected() {
        assert!(matches!(
            GradeSample::new(Vec::new()),
            Err(Error::EmptySample)
        ));
    }

    #[test]
    fn grade_range_is_enforced() {
        assert!(Grade::new(0.0).is_ok());
        assert!(Grade::new(10.0).is_ok());
        assert!(matches!(Grade::new(10.5), Err(Error::InvalidGrade(_))));
        assert!(matches!(Grade::new(-0.1), Err(Error::InvalidGrade(_))));
        assert!(matches!(Grade::new(f64::NAN), Err(Error::InvalidGrade(_))));
    }

    #[test]
    fn weight_vector_rejects_negative_and_non_finite() {
        assert!(matches!(
            WeightVector::new(vec![1.0, -0.5]),
            Err(Error::InvalidWeight(_))
        ));
        assert!(matches!(
            WeightVector::new(vec![f64::INFINITY]),
            Err(Error::InvalidWeight(_))
        ));
    }

    #[test]
    fn arithmetic_mean_examples() {
        assert_eq!(arithmetic_mean(&sample(&[2.0, 4.0, 6.0])), 4.0);
        assert_eq!(arithmetic_mean(&sample(&[7.5])), 7.5);
        assert!((arithmetic_mean(&sample(&[2.1, 3.3, 7.2])) - 4.2).abs() < 1e-12);
    }

    #[test]
    fn geometric_mean_examples() {
        assert_eq!(geometric_mean(&sample(&[5.0, 5.0, 5.0])), 5.0);
        assert_eq!(geometric_mean(&sample(&[0.0, 8.0])), 0.0);
        assert!((geometric_mean(&sample(&[4.0, 9.0])) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn harmonic_mean_examples() {
        assert_eq!(harmonic_mean(&sample(&[5.0, 5.0, 5.0])).unwrap(), 5.0);
        assert!((harmonic_mean(&sample(&[2.0, 6.0])).unwrap() - 3.0).abs() < 1e-12);
        assert!(matches!(
            harmonic_mean(&sample(&[4.0, 0.0])),
            Err(Error::ZeroObservation)
        ));
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&sample(&[3.0, 9.0, 5.0])), 5.0);
        assert_eq!(median(&sample(&[2.0, 4.0, 6.0, 8.0])), 5.0);
        assert_eq!(median(&sample(&[7.0])), 7.0);
    }

    #[test]
    fn weighted_arithmetic_mean_examples() {
        let v = weighted_arithmetic_mean(&sample(&[2.0, 10.0]), &weights(&[1.0, 3.0])).unwrap();
        assert!((v - 8.0).abs() < 1e-12);

        let v = weighted_arithmetic_mean(&sample(&[2.0, 4.0, 6.0]), &weights(&[0.5, 0.5, 0.5]))
            .unwrap();
        assert!((v - 4.0).abs() < 1e-12);

        let v = weighted_arithmetic_mean(&sample(&[3.0, 9.0]), &weights(&[1.0, 0.0])).unwrap();
        assert_eq!(v, 3.0);
    }

    #[test]
    fn weighted_geometric_mean_examples() {
        let v = weighted_geometric_mean(&sample(&[2.0, 8.0]), &weights(&[1.0, 1.0])).unwrap();
        assert!((v - 4.0).abs() < 1e-12);

        // (2^3 * 8)^(1/4) = 64^(1/4)
        let v = weighted_geometric_mean(&sample(&[2.0, 8.0]), &weights(&[3.0, 1.0])).unwrap();
        assert!((v - 64f64.powf(0.25)).abs() < 1e-12);
        assert!((v - 2.8284271247461903).abs() < 1e-12);

        let v = weighted_geometric_mean(&sample(&[5.0, 5.0, 5.0]), &weights(&[0.2, 0.3, 0.5]))
            .unwrap();
        assert_eq!(v, 5.0);
    }

    #[test]
    fn weighted_geometric_mean_zero_grade_with_positive_weight_is_zero() {
        let v = weighted_geometric_mean(&sample(&[0.0, 8.0]), &weights(&[1.0, 1.0])).unwrap();
        assert_eq!(v, 0.0);
        // zero grade under zero weight is discarded before evaluation
        let v = weighted_geometric_mean(&sample(&[0.0, 8.0]), &weights(&[0.0, 1.0])).unwrap();
        assert_eq!(v, 8.0);
    }

    #[test]
    fn weighted_harmonic_mean_examples() {
        let v = weighted_harmonic_mean(&sample(&[2.0, 6.0]), &weights(&[1.0, 1.0])).unwrap();
        assert!((v - 3.0).abs() < 1e-12);

        let v = weighted_harmonic_mean(&sample(&[2.0, 6.0]), &weights(&[1.0, 3.0])).unwrap();
        assert!((v - 4.0).abs() < 1e-12);

        let v = weighted_harmonic_mean(&sample(&[5.0, 5.0]), &weights(&[7.0, 0.1])).unwrap();
        assert_eq!(v, 5.0);

        assert!(matches!(
            weighted_harmonic_mean(&sample(&[0.0, 8.0]), &weights(&[1.0, 1.0])),
            Err(Error::ZeroObservation)
        ));
        // zero-weight zero grade is discarded, no error
        let v = weighted_harmonic_mean(&sample(&[0.0, 8.0]), &weights(&[0.0, 1.0])).unwrap();
        assert_eq!(v, 8.0);
    }

    #[test]
    fn weighted_median_examples() {
        let v = weighted_median(&sample(&[1.0, 2.0, 3.0]), &weights(&[1.0, 1.0, 4.0])).unwrap();
        assert_eq!(v, 3.0);

        // cumulative weight hits the half total exactly: average rule
        let v = weighted_median(&sample(&[1.0, 3.0]), &weights(&[1.0, 1.0])).unwrap();
        assert_eq!(v, 2.0);

        // zero weights are discarded
        let v = weighted_median(&sample(&[0.5, 7.0]), &weights(&[0.0, 1.0])).unwrap();
        assert_eq!(v, 7.0);
    }

    #[test]
    fn weighted_median_single_survivor_is_returned() {
        let v = weighted_median(&sample(&[4.0, 9.0, 2.0]), &weights(&[0.0, 0.7, 0.0])).unwrap();
        assert_eq!(v, 9.0);
    }

    #[test]
    fn weighted_errors() {
        let s = sample(&[1.0, 2.0]);
        assert!(matches!(
            weighted_arithmetic_mean(&s, &weights(&[1.0])),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            weighted_median(&s, &weights(&[0.0, 0.0])),
            Err(Error::AllZeroWeights)
        ));
        assert!(matches!(
            weighted_geometric_mean(&s, &weights(&[0.0, 0.0])),
            Err(Error::AllZeroWeights)
        ));
    }

    #[test]
    fn aggregate_dispatch_examples() {
        let r = aggregate(&sample(&[2.0, 4.0, 6.0]), AggregationMethod::Median, None).unwrap();
        assert_eq!(r.value, 4.0);
        assert!(!r.weighted);
        assert!(r.diagnostics.is_empty());

        let w = weights(&[1.0, 3.0]);
        let r = aggregate(
            &sample(&[2.0, 10.0]),
            AggregationMethod::ArithmeticMean,
            Some(&w),
        )
        .unwrap();
        assert!((r.value - 8.0).abs() < 1e-12);
        assert!(r.weighted);

        let w = weights(&[0.0, 0.0]);
        let r = aggregate(&sample(&[2.0, 10.0]), AggregationMethod::Median, Some(&w)).unwrap();
        assert_eq!(r.value, 6.0);
        assert!(!r.weighted);
        assert_eq!(r.diagnostics, vec![Diagnostic::UnweightedFallback]);
    }

    #[test]
    fn aggregate_flags_discarded_zero_weights() {
        let w = weights(&[1.0, 0.0, 2.0]);
        let r = aggregate(
            &sample(&[2.0, 9.0, 5.0]),
            AggregationMethod::ArithmeticMean,
            Some(&w),
        )
        .unwrap();
        assert!(r.weighted);
        assert_eq!(r.diagnostics, vec![Diagnostic::ZeroWeightsDiscarded]);
        assert!((r.value - 4.0).abs() < 1e-12);
    }

    #[test]
    fn aggregate_propagates_zero_observation() {
        let w = weights(&[1.0, 1.0]);
        assert!(matches!(
            aggregate(
                &sample(&[0.0, 8.0]),
                AggregationMethod::HarmonicMean,
                Some(&w)
            ),
            Err(Error::ZeroObservation)
        ));
    }

    #[test]
    fn method_names_round_trip() {
        for m in AggregationMethod::ALL {
            assert_eq!(m.name().parse::<AggregationMethod>().unwrap(), m);
        }
        assert!("trimmed_mean".parse::<AggregationMethod>().is_err());
    }
}
