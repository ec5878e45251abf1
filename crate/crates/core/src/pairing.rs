//! Source/target pairing plans and straight-line interpolation series.
//!
//! Every source id gets `ceil(series_count / n_sources)` distinct targets,
//! drawn from its own ChaCha8 stream (`stream = source position`). The
//! provisional list is then trimmed to exactly `series_count` pairings with a
//! uniform draw from a dedicated stream. Because each source has an
//! independent stream, plans are identical no matter how many threads build
//! them.

use std::collections::HashSet;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::manifest::{DatasetManifest, RecordDescriptor, MAX_MORPH_INDEX, SERIES_LEN};

/// Stream reserved for the downsampling draw.
const DOWNSAMPLE_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pairing {
    pub source_id: String,
    pub target_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairingPlan {
    pub source_ids: Vec<String>,
    pub quota: usize,
    /// Pairings drawn before downsampling (`quota * source_ids.len()`).
    pub provisional: usize,
    pub pairings: Vec<Pairing>,
    pub seed: u64,
}

pub fn source_quota(series_count: usize, n_sources: usize) -> usize {
    series_count.div_ceil(n_sources)
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn ensure_unique(ids: &[String], what: &str) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(AuditError::Size(format!("duplicate {what} id {id:?}")));
        }
    }
    Ok(())
}

pub fn plan_pairings(
    source_ids: &[String],
    target_ids: &[String],
    series_count: usize,
    seed: u64,
) -> Result<PairingPlan> {
    if source_ids.is_empty() || target_ids.is_empty() {
        return Err(AuditError::Size("source and target lists must be non-empty".into()));
    }
    if series_count == 0 {
        return Err(AuditError::Size("series count must be >= 1".into()));
    }
    ensure_unique(source_ids, "source")?;
    ensure_unique(target_ids, "target")?;

    let quota = source_quota(series_count, source_ids.len());
    if quota > target_ids.len() {
        return Err(AuditError::InsufficientTargets {
            source_id: source_ids[0].clone(),
            quota,
            available: target_ids.len(),
        });
    }

    let per_source: Vec<Vec<Pairing>> = source_ids
        .par_iter()
        .enumerate()
        .map(|(pos, source)| {
            let mut rng = stream_rng(seed, pos as u64);
            index::sample(&mut rng, target_ids.len(), quota)
                .into_iter()
                .map(|t| Pairing {
                    source_id: source.clone(),
                    target_id: target_ids[t].clone(),
                })
                .collect()
        })
        .collect();
    let provisional: Vec<Pairing> = per_source.into_iter().flatten().collect();
    let provisional_len = provisional.len();

    let mut keep = index::sample(
        &mut stream_rng(seed, DOWNSAMPLE_STREAM),
        provisional_len,
        series_count,
    )
    .into_vec();
    keep.sort_unstable();
    let mut slots: Vec<Option<Pairing>> = provisional.into_iter().map(Some).collect();
    let pairings = keep
        .into_iter()
        .map(|i| slots[i].take().expect("indices are distinct"))
        .collect();

    Ok(PairingPlan {
        source_ids: source_ids.to_vec(),
        quota,
        provisional: provisional_len,
        pairings,
        seed,
    })
}

/// Group tags written into every manifest record of a plan.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeriesTags {
    pub gender: String,
    pub source_group: String,
    pub target_group: String,
}

impl PairingPlan {
    /// Lays the plan out as a manifest: series `i` occupies image rows
    /// `21*i ..= 21*i + 20`, in morph-index order.
    pub fn to_manifest(&self, tags: &SeriesTags) -> DatasetManifest {
        let width = self.pairings.len().saturating_sub(1).to_string().len().max(4);
        let records = self
            .pairings
            .iter()
            .enumerate()
            .flat_map(|(i, p)| {
                let series_id = format!("s{i:0width$}");
                (0..SERIES_LEN).map(move |k| RecordDescriptor {
                    row: i * SERIES_LEN + k,
                    series_id: series_id.clone(),
                    morph_index: k,
                    gender: tags.gender.clone(),
                    source_group: tags.source_group.clone(),
                    target_group: tags.target_group.clone(),
                    source_id: Some(p.source_id.clone()),
                    target_id: Some(p.target_id.clone()),
                })
            })
            .collect();
        DatasetManifest {
            records,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationSeries {
    pub source: Vec<f64>,
    pub target: Vec<f64>,
    pub steps: Vec<Vec<f64>>,
}

/// `steps` points on the segment from `source` to `target`:
/// point `k` is `source + k * (target - source) / (steps - 1)`.
/// The first and last points are copied from the endpoints, so they are
/// exact.
pub fn interpolate(source: &[f64], target: &[f64], steps: usize) -> Result<InterpolationSeries> {
    if source.len() != target.len() {
        return Err(AuditError::Shape(format!(
            "source has {} dims, target has {}",
            source.len(),
            target.len()
        )));
    }
    if steps < 2 {
        return Err(AuditError::Size(format!("need at least 2 steps, got {steps}")));
    }
    let last = steps - 1;
    let delta: Vec<f64> = source
        .iter()
        .zip(target)
        .map(|(s, t)| (t - s) / last as f64)
        .collect();
    let points = (0..steps)
        .map(|k| match k {
            0 => source.to_vec(),
            k if k == last => target.to_vec(),
            k => source
                .iter()
                .zip(&delta)
                .map(|(s, d)| s + k as f64 * d)
                .collect(),
        })
        .collect();
    Ok(InterpolationSeries {
        source: source.to_vec(),
        target: target.to_vec(),
        steps: points,
    })
}

/// Share of the source image present at `morph_index`: `1 - index / 20`.
pub fn mixing_ratio(morph_index: usize) -> Result<f64> {
    if morph_index > MAX_MORPH_INDEX {
        return Err(AuditError::OutOfRange {
            what: "morph index",
            value: morph_index,
            max: MAX_MORPH_INDEX,
        });
    }
    Ok(1.0 - morph_index as f64 / MAX_MORPH_INDEX as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i:03}")).collect()
    }

    #[test]
    fn three_sources_quota() {
        let plan = plan_pairings(&ids("S", 3), &ids("T", 400), 1000, 1).unwrap();
        assert_eq!(plan.quota, 334);
        assert_eq!(plan.provisional, 1002);
        assert_eq!(plan.pairings.len(), 1000);
    }

    #[test]
    fn quota_exceeding_pool_is_rejected() {
        let err = plan_pairings(&ids("S", 3), &ids("T", 5), 1000, 1).unwrap_err();
        assert!(matches!(
            err,
            AuditError::InsufficientTargets { quota: 334, available: 5, .. }
        ));
    }

    #[test]
    fn single_pair() {
        let plan = plan_pairings(&ids("S", 1), &ids("T", 1), 1, 0).unwrap();
        assert_eq!(plan.quota, 1);
        assert_eq!(
            plan.pairings,
            vec![Pairing { source_id: "S000".into(), target_id: "T000".into() }]
        );
    }

    #[test]
    fn deterministic_and_duplicate_free() {
        let a = plan_pairings(&ids("S", 7), &ids("T", 200), 1000, 42).unwrap();
        let b = plan_pairings(&ids("S", 7), &ids("T", 200), 1000, 42).unwrap();
        assert_eq!(a, b);
        let c = plan_pairings(&ids("S", 7), &ids("T", 200), 1000, 43).unwrap();
        assert_ne!(a.pairings, c.pairings);
        let uniq: HashSet<_> = a.pairings.iter().map(|p| (&p.source_id, &p.target_id)).collect();
        assert_eq!(uniq.len(), a.pairings.len());
    }

    #[test]
    fn bad_inputs() {
        assert!(plan_pairings(&[], &ids("T", 3), 1, 0).is_err());
        assert!(plan_pairings(&ids("S", 1), &ids("T", 3), 0, 0).is_err());
        let dup = vec!["a".to_string(), "a".to_string()];
        assert!(plan_pairings(&dup, &ids("T", 3), 2, 0).is_err());
    }

    #[test]
    fn manifest_layout() {
        let plan = plan_pairings(&ids("S", 2), &ids("T", 3), 3, 5).unwrap();
        let man = plan.to_manifest(&SeriesTags::default());
        assert_eq!(man.records.len(), 3 * 21);
        let series = man.series().unwrap();
        assert_eq!(series.len(), 3);
        assert_eq!(series[1].rows[0], 21);
        assert_eq!(man.records[21].source_id.as_deref(), Some(plan.pairings[1].source_id.as_str()));
    }

    #[test]
    fn interpolation_examples() {
        let s = interpolate(&[0.0, 0.0], &[2.0, 2.0], 21).unwrap();
        assert_eq!(s.steps[10], vec![1.0, 1.0]);
        let same = interpolate(&[0.3, -1.0], &[0.3, -1.0], 21).unwrap();
        assert!(same.steps.iter().all(|p| p == &vec![0.3, -1.0]));
        let three = interpolate(&[0.0], &[1.0], 3).unwrap();
        assert_eq!(three.steps, vec![vec![0.0], vec![0.5], vec![1.0]]);
        assert!(matches!(interpolate(&[0.0], &[1.0, 2.0], 21), Err(AuditError::Shape(_))));
        assert!(interpolate(&[0.0], &[1.0], 1).is_err());
    }

    #[test]
    fn mixing_ratios() {
        assert_eq!(mixing_ratio(10).unwrap(), 0.5);
        assert_eq!(mixing_ratio(0).unwrap(), 1.0);
        assert_eq!(mixing_ratio(5).unwrap(), 0.75);
        assert_eq!(mixing_ratio(20).unwrap(), 0.0);
        assert!(matches!(mixing_ratio(21), Err(AuditError::OutOfRange { .. })));
    }

    proptest! {
        #[test]
        fn endpoints_exact_and_steps_linear(
            pair in (1usize..12).prop_flat_map(|d| (
                prop::collection::vec(-10f64..10.0, d),
                prop::collection::vec(-10f64..10.0, d))),
            steps in 2usize..40,
        ) {
            let (s, t) = pair;
            let series = interpolate(&s, &t, steps).unwrap();
            prop_assert_eq!(&series.steps[0], &s);
            prop_assert_eq!(series.steps.last().unwrap(), &t);
            let first: Vec<f64> = series.steps[1].iter().zip(&series.steps[0]).map(|(a, b)| a - b).collect();
            for w in series.steps.windows(2) {
                for ((a, b), d) in w[1].iter().zip(&w[0]).zip(&first) {
                    prop_assert!(((a - b) - d).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn quota_is_exact(n in 1usize..20, count in 1usize..300, seed in any::<u64>()) {
            let quota = source_quota(count, n);
            let plan = plan_pairings(&ids("S", n), &ids("T", quota), count, seed).unwrap();
            prop_assert_eq!(plan.provisional, quota * n);
            prop_assert_eq!(plan.pairings.len(), count);
        }
    }
}
