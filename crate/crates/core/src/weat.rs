//! Single-category embedding association test (SC-WEAT).
//!
//! For a target vector `i` and attribute sets `A`, `B`:
//!
//! ```text
//! d = (mean_{a in A} cos(i, a) - mean_{b in B} cos(i, b)) / popstd_{x in A ∪ B} cos(i, x)
//! ```
//!
//! Significance is a one-sided permutation test over equal-size
//! re-partitions of `A ∪ B`, using the raw mean difference as the statistic.
//! All sums are correctly rounded ([`crate::stats::fsum`]), so the effect
//! size is exactly antisymmetric in `(A, B)` and exactly unchanged when
//! every stimulus is duplicated.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::association::UnitProbe;
use crate::error::{AuditError, Result};
use crate::manifest::DatasetManifest;
use crate::matrix::EmbeddingMatrix;
use crate::stats::{self, fsum, CorrelationResult};

/// Exhaustive enumeration refuses to visit more partitions than this.
pub const MAX_EXHAUSTIVE_PARTITIONS: u128 = 50_000_000;

#[derive(Debug, Clone)]
pub struct Stimulus {
    pub text: String,
    pub vector: Vec<f64>,
    probe: UnitProbe,
}

#[derive(Debug, Clone)]
pub struct AttributeSet {
    pub name: String,
    pub polarity: String,
    stimuli: Vec<Stimulus>,
}

impl AttributeSet {
    pub fn new(
        name: impl Into<String>,
        polarity: impl Into<String>,
        stimuli: Vec<(String, Vec<f64>)>,
    ) -> Result<Self> {
        let name = name.into();
        if stimuli.len() < 2 {
            return Err(AuditError::Size(format!(
                "attribute set {name:?} needs at least 2 stimuli, got {}",
                stimuli.len()
            )));
        }
        let dims = stimuli[0].1.len();
        let stimuli = stimuli
            .into_iter()
            .enumerate()
            .map(|(i, (text, vector))| {
                if vector.len() != dims {
                    return Err(AuditError::Shape(format!(
                        "stimulus {text:?} has {} dims, expected {dims}",
                        vector.len()
                    )));
                }
                let probe = UnitProbe::from_f64(&vector)
                    .ok_or(AuditError::DegenerateVector { row: Some(i) })?;
                Ok(Stimulus {
                    text,
                    vector,
                    probe,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            name,
            polarity: polarity.into(),
            stimuli,
        })
    }

    /// Looks up each word as a label name in `man` and takes its vector from
    /// `labels`.
    pub fn from_labels(
        name: impl Into<String>,
        polarity: impl Into<String>,
        words: &[String],
        labels: &EmbeddingMatrix,
        man: &DatasetManifest,
    ) -> Result<Self> {
        let stimuli = words
            .iter()
            .map(|w| {
                let desc = man.label(w)?;
                let row = labels.get_row(desc.row)?;
                Ok((w.clone(), row.iter().map(|&v| f64::from(v)).collect()))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(name, polarity, stimuli)
    }

    pub fn len(&self) -> usize {
        self.stimuli.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stimuli.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.stimuli[0].vector.len()
    }

    pub fn stimuli(&self) -> &[Stimulus] {
        &self.stimuli
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PermutationMode {
    /// Every `C(|A|+|B|, |A|)` partition; requires `|A| = |B|`.
    Exhaustive,
    /// Seeded uniform draws of this many partitions.
    Sampled(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScWeatResult {
    pub target_id: usize,
    pub effect_size: f64,
    pub p_value: f64,
    /// Partitions evaluated (enumerated or drawn).
    pub permutations: usize,
}

/// Cosines of the target with A's stimuli followed by B's.
struct PooledCosines {
    values: Vec<f64>,
    split: usize,
}

impl PooledCosines {
    fn new(target: &UnitProbe, a: &AttributeSet, b: &AttributeSet) -> Self {
        let values = a
            .stimuli
            .iter()
            .chain(&b.stimuli)
            .map(|s| target.cosine(&s.probe))
            .collect();
        Self {
            values,
            split: a.len(),
        }
    }

    fn a(&self) -> &[f64] {
        &self.values[..self.split]
    }

    fn b(&self) -> &[f64] {
        &self.values[self.split..]
    }

    fn mean_difference(&self) -> f64 {
        let na = self.split as f64;
        let nb = (self.values.len() - self.split) as f64;
        fsum(self.a().iter().copied()) / na - fsum(self.b().iter().copied()) / nb
    }

    fn effect_size(&self) -> Result<f64> {
        let sd = stats::population_std(&self.values)?;
        if sd == 0.0 {
            return Err(AuditError::DegenerateDenominator);
        }
        Ok(self.mean_difference() / sd)
    }

    /// One-sided permutation p in the direction of the observed difference.
    ///
    /// With partition sizes fixed the mean difference is strictly increasing
    /// in the first group's sum, so partitions are compared on that
    /// correctly rounded sum. Mathematically tied partitions therefore tie
    /// exactly.
    fn p_value(&self, mode: PermutationMode, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
        let n = self.values.len();
        let k = self.split;
        let observed_sum = fsum(self.a().iter().copied());
        let upper = self.mean_difference() >= 0.0;
        // Recursive summation of k terms is within (k-1)u·Σ|x| of the exact
        // sum; outside twice that band the cheap sum already decides the
        // comparison, inside it the correctly rounded sum does.
        let band = 2.0 * k as f64 * f64::EPSILON * fsum(self.values.iter().map(|v| v.abs()));
        let extreme = |subset: &mut dyn Iterator<Item = usize>, scratch: &mut Vec<f64>| {
            scratch.clear();
            scratch.extend(subset.map(|i| self.values[i]));
            let naive: f64 = scratch.iter().sum();
            let s = if (naive - observed_sum).abs() > band {
                naive
            } else {
                fsum(scratch.iter().copied())
            };
            if upper {
                s >= observed_sum
            } else {
                s <= observed_sum
            }
        };
        let mut scratch = Vec::with_capacity(k);
        match mode {
            PermutationMode::Exhaustive => {
                if k != n - k {
                    return Err(AuditError::Size(format!(
                        "exhaustive mode needs |A| = |B| (got {} and {})",
                        k,
                        n - k
                    )));
                }
                let total = binomial(n as u64, k as u64);
                if total > MAX_EXHAUSTIVE_PARTITIONS {
                    return Err(AuditError::Size(format!(
                        "{total} partitions exceeds the exhaustive limit; use sampled mode"
                    )));
                }
                let mut hits = 0usize;
                let mut visited = 0usize;
                for_each_combination(n, k, |combo| {
                    visited += 1;
                    if extreme(&mut combo.iter().copied(), &mut scratch) {
                        hits += 1;
                    }
                });
                Ok((hits as f64 / visited as f64, visited))
            }
            PermutationMode::Sampled(draws) => {
                if draws == 0 {
                    return Err(AuditError::Size("sampled mode needs >= 1 permutation".into()));
                }
                // Partial Fisher-Yates over a persistent index buffer: the
                // first k slots are a uniform k-subset whatever order the
                // buffer was left in by the previous draw.
                let mut order: Vec<usize> = (0..n).collect();
                let mut hits = 0usize;
                for _ in 0..draws {
                    for i in 0..k {
                        let j = rng.gen_range(i..n);
                        order.swap(i, j);
                    }
                    if extreme(&mut order[..k].iter().copied(), &mut scratch) {
                        hits += 1;
                    }
                }
                Ok(((hits + 1) as f64 / (draws + 1) as f64, draws))
            }
        }
    }
}

fn target_probe(target: &[f64], a: &AttributeSet, b: &AttributeSet) -> Result<UnitProbe> {
    if a.dims() != b.dims() {
        return Err(AuditError::Shape(format!(
            "attribute sets have {} and {} dims",
            a.dims(),
            b.dims()
        )));
    }
    if target.len() != a.dims() {
        return Err(AuditError::Shape(format!(
            "target has {} dims, attributes have {}",
            target.len(),
            a.dims()
        )));
    }
    UnitProbe::from_f64(target).ok_or(AuditError::DegenerateVector { row: None })
}

pub fn sc_weat_effect_size(target: &[f64], a: &AttributeSet, b: &AttributeSet) -> Result<f64> {
    let probe = target_probe(target, a, b)?;
    PooledCosines::new(&probe, a, b).effect_size()
}

/// RNG for permutation stream `stream` under `seed`. Batch evaluation uses
/// the image row as the stream.
pub fn permutation_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Permutation p-value on stream 0 of `seed`.
pub fn sc_weat_pvalue(
    target: &[f64],
    a: &AttributeSet,
    b: &AttributeSet,
    mode: PermutationMode,
    seed: u64,
) -> Result<f64> {
    sc_weat_pvalue_stream(target, a, b, mode, seed, 0)
}

pub fn sc_weat_pvalue_stream(
    target: &[f64],
    a: &AttributeSet,
    b: &AttributeSet,
    mode: PermutationMode,
    seed: u64,
    stream: u64,
) -> Result<f64> {
    let probe = target_probe(target, a, b)?;
    let pooled = PooledCosines::new(&probe, a, b);
    pooled
        .p_value(mode, &mut permutation_rng(seed, stream))
        .map(|(p, _)| p)
}

fn sc_weat_row(
    images: &EmbeddingMatrix,
    row: usize,
    a: &AttributeSet,
    b: &AttributeSet,
    mode: PermutationMode,
    seed: u64,
) -> Result<ScWeatResult> {
    let target = images.get_row(row)?;
    let wide: Vec<f64> = target.iter().map(|&v| f64::from(v)).collect();
    let probe = target_probe(&wide, a, b).map_err(|e| match e {
        AuditError::DegenerateVector { .. } => AuditError::DegenerateVector { row: Some(row) },
        other => other,
    })?;
    let pooled = PooledCosines::new(&probe, a, b);
    let effect_size = pooled.effect_size()?;
    let (p_value, permutations) = pooled.p_value(mode, &mut permutation_rng(seed, row as u64))?;
    Ok(ScWeatResult {
        target_id: row,
        effect_size,
        p_value,
        permutations,
    })
}

/// SC-WEAT for each listed image row, in the given order. Row `r` draws its
/// permutations from stream `r` of `seed`, so results do not depend on
/// scheduling.
pub fn sc_weat_rows(
    images: &EmbeddingMatrix,
    rows: &[usize],
    a: &AttributeSet,
    b: &AttributeSet,
    mode: PermutationMode,
    seed: u64,
) -> Result<Vec<ScWeatResult>> {
    rows.par_iter()
        .map(|&row| sc_weat_row(images, row, a, b, mode, seed).map_err(|e| e.at_row(row)))
        .collect()
}

/// SC-WEAT for every manifest record, in manifest order.
pub fn batch_sc_weat(
    images: &EmbeddingMatrix,
    man: &DatasetManifest,
    a: &AttributeSet,
    b: &AttributeSet,
    mode: PermutationMode,
    seed: u64,
) -> Result<Vec<ScWeatResult>> {
    let rows: Vec<usize> = man.records.iter().map(|r| r.row).collect();
    sc_weat_rows(images, &rows, a, b, mode, seed)
}

pub fn binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * u128::from(n - i) / u128::from(i + 1))
}

/// Calls `f` with every k-subset of `0..n` in lexicographic order.
pub fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut combo: Vec<usize> = (0..k).collect();
    loop {
        f(&combo);
        let Some(i) = (0..k).rev().find(|&i| combo[i] != i + n - k) else {
            return;
        };
        combo[i] += 1;
        for j in i + 1..k {
            combo[j] = combo[j - 1] + 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValenceNormTable {
    pub entries: Vec<(String, f64)>,
}

impl ValenceNormTable {
    pub fn new(entries: Vec<(String, f64)>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (id, rating) in &entries {
            if !rating.is_finite() {
                return Err(AuditError::Parse(format!("rating for {id:?} is not finite")));
            }
            if !seen.insert(id.as_str()) {
                return Err(AuditError::Parse(format!("duplicate stimulus id {id:?}")));
            }
        }
        Ok(Self { entries })
    }

    /// CSV with header `stimulus_id,valence`.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().unwrap_or_default();
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols != ["stimulus_id", "valence"] {
            return Err(AuditError::Parse(format!(
                "norm table header must be `stimulus_id,valence`, got {header:?}"
            )));
        }
        let entries = lines
            .enumerate()
            .map(|(i, line)| {
                let (id, rating) = line
                    .rsplit_once(',')
                    .ok_or_else(|| AuditError::Parse(format!("norm table line {}: {line:?}", i + 2)))?;
                let rating = rating.trim().parse::<f64>().map_err(|_| {
                    AuditError::Parse(format!("norm table line {}: bad rating {rating:?}", i + 2))
                })?;
                Ok((id.trim().to_string(), rating))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| AuditError::io(path, e))?;
        Self::parse_csv(&text)
    }
}

/// Which attribute set was passed as `A`. Norm validation orients effect
/// sizes so that positive means pleasant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignConvention {
    APleasant,
    AUnpleasant,
}

impl SignConvention {
    pub fn pleasant_oriented(self, d: f64) -> f64 {
        match self {
            SignConvention::APleasant => d,
            SignConvention::AUnpleasant => -d,
        }
    }
}

/// Pearson correlation between pleasantness-oriented effect sizes and human
/// valence ratings, matched by stimulus id. Both sides must carry exactly
/// the same ids.
pub fn validate_against_norms(
    effect_sizes: &[(String, f64)],
    norms: &ValenceNormTable,
    convention: SignConvention,
) -> Result<CorrelationResult> {
    let ratings: HashMap<&str, f64> = norms.entries.iter().map(|(id, r)| (id.as_str(), *r)).collect();
    if effect_sizes.len() != norms.entries.len() {
        return Err(AuditError::Alignment(format!(
            "{} effect sizes vs {} norm entries",
            effect_sizes.len(),
            norms.entries.len()
        )));
    }
    let mut seen = HashSet::new();
    let mut xs = Vec::with_capacity(effect_sizes.len());
    let mut ys = Vec::with_capacity(effect_sizes.len());
    for (id, d) in effect_sizes {
        if !seen.insert(id.as_str()) {
            return Err(AuditError::Alignment(format!("effect size id {id:?} repeated")));
        }
        let rating = ratings
            .get(id.as_str())
            .ok_or_else(|| AuditError::Alignment(format!("no norm rating for {id:?}")))?;
        xs.push(convention.pleasant_oriented(*d));
        ys.push(*rating);
    }
    stats::pearson(&xs, &ys)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(name: &str, vectors: &[&[f64]]) -> AttributeSet {
        AttributeSet::new(
            name,
            name,
            vectors
                .iter()
                .enumerate()
                .map(|(i, v)| (format!("{name}{i}"), v.to_vec()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn hand_computed_effect_size() {
        let a = set("a", &[&[1.0, 0.0], &[1.0, 0.0]]);
        let b = set("b", &[&[0.0, 1.0], &[0.0, 1.0]]);
        // cosines {1,1,0,0}: means 1 and 0, population std 0.5.
        assert_eq!(sc_weat_effect_size(&[1.0, 0.0], &a, &b).unwrap(), 2.0);
        assert_eq!(sc_weat_effect_size(&[1.0, 0.0], &b, &a).unwrap(), -2.0);
    }

    #[test]
    fn identical_sets_give_zero() {
        let a = set("a", &[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(sc_weat_effect_size(&[0.8, 0.6], &a, &a).unwrap(), 0.0);
    }

    #[test]
    fn single_stimulus_rejected() {
        assert!(AttributeSet::new("a", "p", vec![("x".into(), vec![1.0, 0.0])]).is_err());
        assert!(matches!(
            AttributeSet::new("a", "p", vec![("x".into(), vec![1.0]), ("y".into(), vec![0.0])]),
            Err(AuditError::DegenerateVector { row: Some(1) })
        ));
    }

    #[test]
    fn degenerate_denominator() {
        let a = set("a", &[&[0.0, 1.0], &[0.0, 2.0]]);
        let b = set("b", &[&[0.0, -1.0], &[0.0, -3.0]]);
        assert!(matches!(
            sc_weat_effect_size(&[1.0, 0.0], &a, &b),
            Err(AuditError::DegenerateDenominator)
        ));
    }

    #[test]
    fn exhaustive_p_aligned_target() {
        let a = set("a", &[&[1.0, 0.0], &[1.0, 0.0]]);
        let b = set("b", &[&[0.0, 1.0], &[0.0, 1.0]]);
        let p = sc_weat_pvalue(&[1.0, 0.0], &a, &b, PermutationMode::Exhaustive, 0).unwrap();
        assert_eq!(p, 1.0 / 6.0);
    }

    #[test]
    fn exhaustive_p_orthogonal_target() {
        let a = set("a", &[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]);
        let b = set("b", &[&[0.0, -1.0, 0.0], &[0.0, 1.0, 1.0]]);
        let p = sc_weat_pvalue(&[1.0, 0.0, 0.0], &a, &b, PermutationMode::Exhaustive, 0).unwrap();
        assert_eq!(p, 1.0);
    }

    #[test]
    fn exhaustive_requires_equal_sizes() {
        let a = set("a", &[&[1.0, 0.0], &[1.0, 0.0], &[0.5, 0.5]]);
        let b = set("b", &[&[0.0, 1.0], &[0.0, 1.0]]);
        assert!(matches!(
            sc_weat_pvalue(&[1.0, 0.0], &a, &b, PermutationMode::Exhaustive, 0),
            Err(AuditError::Size(_))
        ));
        assert!(sc_weat_pvalue(&[1.0, 0.0], &a, &b, PermutationMode::Sampled(100), 0).is_ok());
        assert!(sc_weat_pvalue(&[1.0, 0.0], &a, &b, PermutationMode::Sampled(0), 0).is_err());
    }

    #[test]
    fn sampled_is_seeded() {
        let a = set("a", &[&[1.0, 0.2], &[0.9, 0.1], &[0.3, 0.3]]);
        let b = set("b", &[&[0.1, 1.0], &[0.0, 0.7], &[0.5, 0.4]]);
        let t = [0.7, 0.3];
        let p1 = sc_weat_pvalue(&t, &a, &b, PermutationMode::Sampled(5000), 11).unwrap();
        let p2 = sc_weat_pvalue(&t, &a, &b, PermutationMode::Sampled(5000), 11).unwrap();
        assert_eq!(p1, p2);
        assert!(p1 > 0.0 && p1 <= 1.0);
    }

    #[test]
    fn negative_difference_tests_lower_tail() {
        let a = set("a", &[&[1.0, 0.0], &[1.0, 0.0]]);
        let b = set("b", &[&[0.0, 1.0], &[0.0, 1.0]]);
        let p = sc_weat_pvalue(&[0.0, 1.0], &a, &b, PermutationMode::Exhaustive, 0).unwrap();
        assert_eq!(p, 1.0 / 6.0);
    }

    #[test]
    fn combinations_enumerated() {
        let mut all = Vec::new();
        for_each_combination(4, 2, |c| all.push(c.to_vec()));
        assert_eq!(all, vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
        assert_eq!(binomial(6, 3), 20);
        assert_eq!(binomial(50, 25), 126_410_606_437_752);
    }

    #[test]
    fn batch_matches_elementwise() {
        let a = set("a", &[&[1.0, 0.2, 0.0], &[0.9, 0.1, 0.3]]);
        let b = set("b", &[&[0.1, 1.0, 0.2], &[0.0, 0.7, -0.4]]);
        let images = EmbeddingMatrix::from_rows(&[[0.5f32, 0.5, 0.1], [1.0, 0.0, 0.0], [0.2, 0.9, 0.3]]).unwrap();
        let mode = PermutationMode::Sampled(300);
        let results = sc_weat_rows(&images, &[0, 1, 2], &a, &b, mode, 3).unwrap();
        assert_eq!(results.len(), 3);
        for (row, r) in results.iter().enumerate() {
            let t = images.row_f64(row);
            assert_eq!(r.target_id, row);
            assert_eq!(r.effect_size, sc_weat_effect_size(&t, &a, &b).unwrap());
            assert_eq!(r.p_value, sc_weat_pvalue_stream(&t, &a, &b, mode, 3, row as u64).unwrap());
        }
        assert!(sc_weat_rows(&images, &[], &a, &b, mode, 3).unwrap().is_empty());
        let empty = DatasetManifest::default();
        assert!(batch_sc_weat(&images, &empty, &a, &b, mode, 3).unwrap().is_empty());
    }

    #[test]
    fn norm_validation() {
        let effects: Vec<(String, f64)> = [0.3, -1.2, 0.9, 0.1]
            .iter()
            .enumerate()
            .map(|(i, &d)| (format!("img{i}"), d))
            .collect();
        let same = ValenceNormTable::new(effects.clone()).unwrap();
        let r = validate_against_norms(&effects, &same, SignConvention::APleasant).unwrap();
        assert!((r.rho - 1.0).abs() < 1e-12);
        let r = validate_against_norms(&effects, &same, SignConvention::AUnpleasant).unwrap();
        assert!((r.rho + 1.0).abs() < 1e-12);
        let negated = ValenceNormTable::new(effects.iter().map(|(i, d)| (i.clone(), -d)).collect()).unwrap();
        let r = validate_against_norms(&effects, &negated, SignConvention::APleasant).unwrap();
        assert!((r.rho + 1.0).abs() < 1e-12);

        let mut wrong = effects.clone();
        wrong[0].0 = "other".into();
        assert!(matches!(
            validate_against_norms(&wrong, &same, SignConvention::APleasant),
            Err(AuditError::Alignment(_))
        ));
        let two = ValenceNormTable::new(effects[..2].to_vec()).unwrap();
        assert!(matches!(
            validate_against_norms(&effects[..2], &two, SignConvention::APleasant),
            Err(AuditError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn norm_table_csv() {
        let t = ValenceNormTable::parse_csv("stimulus_id,valence\nI1,5.5\nI2, 2.0\n").unwrap();
        assert_eq!(t.entries, vec![("I1".to_string(), 5.5), ("I2".to_string(), 2.0)]);
        assert!(ValenceNormTable::parse_csv("id,v\n").is_err());
        assert!(ValenceNormTable::parse_csv("stimulus_id,valence\nI1,x\n").is_err());
        assert!(ValenceNormTable::parse_csv("stimulus_id,valence\nI1,1\nI1,2\n").is_err());
    }
}
