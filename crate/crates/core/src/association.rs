//! Label-preference decisions and per-morph-index association curves.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::manifest::{DatasetManifest, SERIES_LEN};
use crate::matrix::EmbeddingMatrix;
use crate::stats::{self, CompensatedSum};

/// Cosine similarity, clamped to [-1, 1].
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(AuditError::Shape(format!(
            "vectors have {} and {} dims",
            u.len(),
            v.len()
        )));
    }
    let dot: CompensatedSum = u.iter().zip(v).map(|(a, b)| a * b).collect();
    let nu = norm(u.iter().copied());
    let nv = norm(v.iter().copied());
    if nu == 0.0 || nv == 0.0 {
        return Err(AuditError::DegenerateVector { row: None });
    }
    Ok((dot.value() / (nu * nv)).clamp(-1.0, 1.0))
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).collect::<CompensatedSum>().value().sqrt()
}

/// A vector widened to `f64` with its norm cached.
#[derive(Debug, Clone)]
pub(crate) struct UnitProbe {
    unit: Vec<f64>,
}

impl UnitProbe {
    pub(crate) fn new(v: &[f32]) -> Option<Self> {
        let wide: Vec<f64> = v.iter().map(|&x| f64::from(x)).collect();
        Self::from_f64(&wide)
    }

    pub(crate) fn from_f64(wide: &[f64]) -> Option<Self> {
        let n = norm(wide.iter().copied());
        if n == 0.0 {
            return None;
        }
        Some(Self {
            unit: wide.iter().map(|x| x / n).collect(),
        })
    }

    /// Cosine against an already-unit probe.
    pub(crate) fn cosine(&self, other: &UnitProbe) -> f64 {
        self.unit
            .iter()
            .zip(&other.unit)
            .map(|(a, b)| a * b)
            .collect::<CompensatedSum>()
            .value()
            .clamp(-1.0, 1.0)
    }
}

pub(crate) fn label_probe(
    labels: &EmbeddingMatrix,
    man: &DatasetManifest,
    name: &str,
    dims: usize,
) -> Result<UnitProbe> {
    let desc = man.label(name)?;
    let row = labels.get_row(desc.row)?;
    if row.len() != dims {
        return Err(AuditError::Shape(format!(
            "label {name:?} has {} dims, images have {dims}",
            row.len()
        )));
    }
    UnitProbe::new(row).ok_or(AuditError::DegenerateVector {
        row: Some(desc.row),
    })
}

pub(crate) fn image_probe(images: &EmbeddingMatrix, row: usize) -> Result<UnitProbe> {
    let v = images.get_row(row)?;
    UnitProbe::new(v).ok_or(AuditError::DegenerateVector { row: Some(row) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelPreferenceRecord {
    pub series_id: String,
    pub morph_index: usize,
    pub minority_cosine: f64,
    pub majority_cosine: f64,
    pub prefers_minority: bool,
}

impl LabelPreferenceRecord {
    /// Ties go to the majority label.
    pub fn new(series_id: String, morph_index: usize, minority_cosine: f64, majority_cosine: f64) -> Self {
        Self {
            series_id,
            morph_index,
            minority_cosine,
            majority_cosine,
            prefers_minority: minority_cosine > majority_cosine,
        }
    }
}

/// Cosines of every image with one label, in series order then morph-index
/// order.
pub fn label_cosines(
    images: &EmbeddingMatrix,
    labels: &EmbeddingMatrix,
    man: &DatasetManifest,
    label: &str,
) -> Result<Vec<[f64; SERIES_LEN]>> {
    let probe = label_probe(labels, man, label, images.dims())?;
    let series = man.series()?;
    series
        .par_iter()
        .map(|s| {
            let mut out = [0.0; SERIES_LEN];
            for (k, &row) in s.rows.iter().enumerate() {
                out[k] = image_probe(images, row)?.cosine(&probe);
            }
            Ok(out)
        })
        .collect()
}

/// Cosine of each listed image row with one label, in the given order.
pub fn cosines_for_rows(
    images: &EmbeddingMatrix,
    labels: &EmbeddingMatrix,
    man: &DatasetManifest,
    label: &str,
    rows: &[usize],
) -> Result<Vec<f64>> {
    let probe = label_probe(labels, man, label, images.dims())?;
    rows.par_iter()
        .map(|&row| Ok(image_probe(images, row)?.cosine(&probe)))
        .collect()
}

/// One record per (series, morph index), series-major.
pub fn preference_records(
    images: &EmbeddingMatrix,
    labels: &EmbeddingMatrix,
    man: &DatasetManifest,
    minority: &str,
    majority: &str,
) -> Result<Vec<LabelPreferenceRecord>> {
    let minority_probe = label_probe(labels, man, minority, images.dims())?;
    let majority_probe = label_probe(labels, man, majority, images.dims())?;
    let series = man.series()?;
    let per_series: Vec<Vec<LabelPreferenceRecord>> = series
        .par_iter()
        .map(|s| {
            s.rows
                .iter()
                .enumerate()
                .map(|(k, &row)| {
                    let img = image_probe(images, row)?;
                    Ok(LabelPreferenceRecord::new(
                        s.id.clone(),
                        k,
                        img.cosine(&minority_probe),
                        img.cosine(&majority_probe),
                    ))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(per_series.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationCurve {
    pub percentages: [f64; SERIES_LEN],
    pub series_count: usize,
    pub minority_label: String,
    pub majority_label: String,
}

/// Builds the curve from series-major records.
pub fn curve_from_records(
    records: &[LabelPreferenceRecord],
    minority_label: &str,
    majority_label: &str,
) -> Result<AssociationCurve> {
    if records.is_empty() || !records.len().is_multiple_of(SERIES_LEN) {
        return Err(AuditError::Size(format!(
            "{} records is not a whole number of {SERIES_LEN}-step series",
            records.len()
        )));
    }
    let series_count = records.len() / SERIES_LEN;
    let mut counts = [0usize; SERIES_LEN];
    for r in records {
        if r.prefers_minority {
            counts[r.morph_index] += 1;
        }
    }
    let mut percentages = [0.0; SERIES_LEN];
    for (p, c) in percentages.iter_mut().zip(counts) {
        *p = 100.0 * c as f64 / series_count as f64;
    }
    Ok(AssociationCurve {
        percentages,
        series_count,
        minority_label: minority_label.to_string(),
        majority_label: majority_label.to_string(),
    })
}

/// Percentage of series whose image prefers the minority label, per morph
/// index.
pub fn association_curve(
    images: &EmbeddingMatrix,
    labels: &EmbeddingMatrix,
    man: &DatasetManifest,
    minority: &str,
    majority: &str,
) -> Result<AssociationCurve> {
    let records = preference_records(images, labels, man, minority, majority)?;
    curve_from_records(&records, minority, majority)
}

/// First morph index whose minority percentage is below 50.
pub fn crossover_index(curve: &AssociationCurve) -> Option<usize> {
    curve.percentages.iter().position(|&p| p < 50.0)
}

/// Per-series crossover: the first morph index whose image does not prefer
/// the minority label, or 21 when every image does. Records must be
/// series-major as produced by [`preference_records`].
pub fn series_crossover_indices(records: &[LabelPreferenceRecord]) -> Vec<f64> {
    records
        .chunks(SERIES_LEN)
        .map(|chunk| {
            chunk
                .iter()
                .find(|r| !r.prefers_minority)
                .map_or(SERIES_LEN, |r| r.morph_index) as f64
        })
        .collect()
}

/// Skewness (biased moments) of whatever association distribution the
/// caller selects.
pub fn association_skewness(samples: &[f64]) -> Result<f64> {
    stats::skewness(samples)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub label: String,
    pub mean_cosines: [f64; SERIES_LEN],
    /// Population standard deviation over all `21 * series_count` cosines.
    pub overall_std: f64,
}

pub fn summarize_cosines(label: &str, per_series: &[[f64; SERIES_LEN]]) -> Result<CurveSummary> {
    if per_series.is_empty() {
        return Err(AuditError::TooFewSamples { needed: 1, got: 0 });
    }
    let mut mean_cosines = [0.0; SERIES_LEN];
    for (k, m) in mean_cosines.iter_mut().enumerate() {
        let column: Vec<f64> = per_series.iter().map(|s| s[k]).collect();
        *m = stats::mean(&column)?;
    }
    let pooled: Vec<f64> = per_series.iter().flatten().copied().collect();
    Ok(CurveSummary {
        label: label.to_string(),
        mean_cosines,
        overall_std: stats::population_std(&pooled)?,
    })
}

pub fn mean_cosine_curve(
    images: &EmbeddingMatrix,
    labels: &EmbeddingMatrix,
    man: &DatasetManifest,
    label: &str,
) -> Result<CurveSummary> {
    summarize_cosines(label, &label_cosines(images, labels, man, label)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::{LabelDescriptor, RecordDescriptor};

    /// Images stored first, then the labels `min` and `maj`.
    fn dataset(series: &[[[f32; 2]; SERIES_LEN]], min: [f32; 2], maj: [f32; 2]) -> (EmbeddingMatrix, DatasetManifest) {
        let mut rows: Vec<[f32; 2]> = series.iter().flatten().copied().collect();
        let n = rows.len();
        rows.push(min);
        rows.push(maj);
        let mut man = DatasetManifest::default();
        for (s, _) in series.iter().enumerate() {
            for k in 0..SERIES_LEN {
                man.records.push(RecordDescriptor {
                    row: s * SERIES_LEN + k,
                    series_id: format!("s{s}"),
                    morph_index: k,
                    gender: "female".into(),
                    source_group: "A".into(),
                    target_group: "B".into(),
                    source_id: None,
                    target_id: None,
                });
            }
        }
        man.labels.push(LabelDescriptor { row: n, name: "min".into(), prompt: String::new() });
        man.labels.push(LabelDescriptor { row: n + 1, name: "maj".into(), prompt: String::new() });
        (EmbeddingMatrix::from_rows(&rows).unwrap(), man)
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(cosine(&[1.0, 0.0], &[2.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), -1.0);
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(AuditError::DegenerateVector { .. })));
        assert!(matches!(cosine(&[1.0], &[1.0, 0.0]), Err(AuditError::Shape(_))));
    }

    #[test]
    fn tie_goes_to_majority() {
        let r = LabelPreferenceRecord::new("s".into(), 0, 0.3, 0.3);
        assert!(!r.prefers_minority);
        let all_ties = [[[1.0f32, 1.0]; SERIES_LEN]; 3];
        let (m, man) = dataset(&all_ties, [1.0, 0.0], [0.0, 1.0]);
        let curve = association_curve(&m, &m, &man, "min", "maj").unwrap();
        assert!(curve.percentages.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn image_equal_to_minority_label() {
        let series = [[[0.2f32, 0.9]; SERIES_LEN]];
        let (m, man) = dataset(&series, [0.2, 0.9], [1.0, 0.0]);
        let curve = association_curve(&m, &m, &man, "min", "maj").unwrap();
        assert_eq!(curve.series_count, 1);
        assert!(curve.percentages.iter().all(|&p| p == 100.0));
        assert_eq!(crossover_index(&curve), None);
    }

    #[test]
    fn segment_fixture_steps_at_midpoint() {
        // Minority (1,0), majority (0,1); image k at (1 - k/20, k/20).
        let mut s = [[0f32; 2]; SERIES_LEN];
        for (k, p) in s.iter_mut().enumerate() {
            let t = k as f32 / 20.0;
            *p = [1.0 - t, t];
        }
        let (m, man) = dataset(&[s, s], [1.0, 0.0], [0.0, 1.0]);
        let curve = association_curve(&m, &m, &man, "min", "maj").unwrap();
        for k in 0..SERIES_LEN {
            let expected = if k < 10 { 100.0 } else { 0.0 };
            assert_eq!(curve.percentages[k], expected, "index {k}");
        }
        assert_eq!(crossover_index(&curve), Some(10));
        let records = preference_records(&m, &m, &man, "min", "maj").unwrap();
        assert_eq!(series_crossover_indices(&records), vec![10.0, 10.0]);
    }

    #[test]
    fn missing_label() {
        let (m, man) = dataset(&[[[1.0f32, 0.0]; SERIES_LEN]], [1.0, 0.0], [0.0, 1.0]);
        assert!(matches!(
            association_curve(&m, &m, &man, "min", "nobody"),
            Err(AuditError::LabelNotFound(_))
        ));
    }

    #[test]
    fn crossover_scan() {
        let mut curve = AssociationCurve {
            percentages: [100.0; SERIES_LEN],
            series_count: 1,
            minority_label: "a".into(),
            majority_label: "b".into(),
        };
        assert_eq!(crossover_index(&curve), None);
        for p in curve.percentages.iter_mut().skip(12) {
            *p = 10.0;
        }
        assert_eq!(crossover_index(&curve), Some(12));
        curve.percentages[0] = 40.0;
        assert_eq!(crossover_index(&curve), Some(0));
    }

    #[test]
    fn mean_curve_identical_images() {
        let (m, man) = dataset(&[[[0.6f32, 0.8]; SERIES_LEN]; 2], [0.6, 0.8], [1.0, 0.0]);
        let summary = mean_cosine_curve(&m, &m, &man, "min").unwrap();
        assert!(summary.mean_cosines.iter().all(|&c| (c - 1.0).abs() < 1e-15));
        assert!(summary.overall_std < 1e-7);
    }

    #[test]
    fn mean_curve_two_series_by_hand() {
        // Series 0 all along (1,0); series 1 all along (0,1). Label (1,0).
        // Cosines: 1.0 and 0.0 => per-index mean 0.5, pooled std 0.5.
        let (m, man) = dataset(&[[[1.0f32, 0.0]; SERIES_LEN], [[0.0, 3.0]; SERIES_LEN]], [1.0, 0.0], [0.0, 1.0]);
        let summary = mean_cosine_curve(&m, &m, &man, "min").unwrap();
        assert!(summary.mean_cosines.iter().all(|&c| c == 0.5));
        assert_eq!(summary.overall_std, 0.5);
    }

    #[test]
    fn skewness_examples() {
        assert_eq!(association_skewness(&[-1.0, 0.0, 1.0]).unwrap(), 0.0);
        assert!((association_skewness(&[0.0, 0.0, 0.0, 1.0]).unwrap() - 1.1547005383792515).abs() < 1e-12);
        assert!(matches!(association_skewness(&[2.0; 5]), Err(AuditError::UndefinedSkew)));
    }

    #[test]
    fn zero_image_reports_row() {
        let mut s = [[1.0f32, 0.0]; SERIES_LEN];
        s[4] = [0.0, 0.0];
        let (m, man) = dataset(&[s], [1.0, 0.0], [0.0, 1.0]);
        assert!(matches!(
            association_curve(&m, &m, &man, "min", "maj"),
            Err(AuditError::DegenerateVector { row: Some(4) })
        ));
    }
}
