//! Deterministic synthetic dataset used by the golden end-to-end tests.
//!
//! Sixteen-dimensional vectors built from a few random directions: a shared
//! "face" component, a minority direction, a majority direction, and
//! pleasant/unpleasant directions. Images are 21-step interpolations from
//! noisy minority-side sources to noisy majority-side targets. All arithmetic
//! is plain IEEE `f64` rounded once to `f32`, so the generated bytes are the
//! same on every platform.

use std::fs;
use std::path::Path;

use anyhow::Context;
use morph_audit_core::manifest::{LabelDescriptor, RecordDescriptor};
use morph_audit_core::{
    interpolate, sc_weat_effect_size, AttributeSet, DatasetManifest, EmbeddingMatrix, Lexicon,
    SERIES_LEN,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FIXTURE_SEED: u64 = 20_220_621;
pub const FIXTURE_DIMS: usize = 16;
pub const FIXTURE_SERIES: usize = 12;

pub const MINORITY: &str = "Black";
pub const MAJORITY: &str = "White";
pub const PERSON: &str = "person";
pub const MULTIRACIAL: [&str; 3] = ["multiracial", "biracial", "mixed race"];

type Vector = Vec<f64>;

fn noise(rng: &mut ChaCha8Rng, scale: f64) -> Vector {
    (0..FIXTURE_DIMS).map(|_| scale * rng.gen_range(-1.0..1.0)).collect()
}

fn combine(terms: &[(f64, &Vector)]) -> Vector {
    (0..FIXTURE_DIMS)
        .map(|d| terms.iter().fold(0.0, |acc, (w, v)| acc + w * v[d]))
        .collect()
}

pub struct Fixture {
    pub images: EmbeddingMatrix,
    pub labels: EmbeddingMatrix,
    pub manifest: DatasetManifest,
    pub norms_csv: String,
    pub sources: Vec<String>,
    pub targets: Vec<String>,
}

pub fn build() -> anyhow::Result<Fixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(FIXTURE_SEED);
    let face = noise(&mut rng, 1.0);
    let pleasant_dir = noise(&mut rng, 1.0);
    let unpleasant_dir = noise(&mut rng, 1.0);
    let raw_minority = noise(&mut rng, 1.0);
    let minority_dir = combine(&[(1.0, &raw_minority), (0.35, &unpleasant_dir)]);
    let majority_dir = noise(&mut rng, 1.0);

    let mut label_rows: Vec<(String, String, Vector)> = Vec::new();
    let prompt = |x: &str| format!("a photo of a {x} person");
    let n = noise(&mut rng, 0.1);
    label_rows.push((MINORITY.into(), prompt(MINORITY), combine(&[(1.0, &minority_dir), (0.3, &face), (1.0, &n)])));
    let n = noise(&mut rng, 0.1);
    label_rows.push((MAJORITY.into(), prompt(MAJORITY), combine(&[(1.0, &majority_dir), (0.3, &face), (1.0, &n)])));
    let n = noise(&mut rng, 0.2);
    label_rows.push((
        PERSON.into(),
        "a photo of a person".into(),
        combine(&[(0.8, &majority_dir), (0.2, &minority_dir), (0.4, &face), (1.0, &n)]),
    ));
    for name in MULTIRACIAL {
        let n = noise(&mut rng, 0.3);
        label_rows.push((
            name.into(),
            prompt(name),
            combine(&[(0.5, &minority_dir), (0.5, &majority_dir), (0.3, &face), (1.0, &n)]),
        ));
    }
    let lexicon = Lexicon::valence();
    for (section, dir) in [("pleasant", &pleasant_dir), ("unpleasant", &unpleasant_dir)] {
        for word in lexicon.section(section)? {
            let n = noise(&mut rng, 0.6);
            label_rows.push((word.clone(), word.clone(), combine(&[(1.0, dir), (1.0, &n)])));
        }
    }

    let mut manifest = DatasetManifest::default();
    for (row, (name, prompt, _)) in label_rows.iter().enumerate() {
        manifest.labels.push(LabelDescriptor {
            row,
            name: name.clone(),
            prompt: prompt.clone(),
        });
    }
    let labels = EmbeddingMatrix::from_f64_rows(
        &label_rows.iter().map(|(_, _, v)| v.clone()).collect::<Vec<_>>(),
    )?;

    let mut image_rows: Vec<Vector> = Vec::with_capacity(FIXTURE_SERIES * SERIES_LEN);
    for s in 0..FIXTURE_SERIES {
        let a = noise(&mut rng, 0.45);
        let b = noise(&mut rng, 0.45);
        let source = combine(&[(1.0, &minority_dir), (1.0, &face), (1.0, &a)]);
        let target = combine(&[(1.0, &majority_dir), (1.0, &face), (1.0, &b)]);
        let series = interpolate(&source, &target, SERIES_LEN)?;
        for (k, step) in series.steps.iter().enumerate() {
            let jitter = noise(&mut rng, 0.05);
            image_rows.push(combine(&[(1.0, step), (1.0, &jitter)]));
            manifest.records.push(RecordDescriptor {
                row: s * SERIES_LEN + k,
                series_id: format!("bf{s:02}-wf"),
                morph_index: k,
                gender: "female".into(),
                source_group: MINORITY.into(),
                target_group: MAJORITY.into(),
                source_id: Some(format!("BF-{s:03}")),
                target_id: Some(format!("WF-{:03}", (s * 7) % 23)),
            });
        }
    }
    let images = EmbeddingMatrix::from_f64_rows(&image_rows)?;

    let pleasant = AttributeSet::from_labels("pleasant", "pleasant", lexicon.section("pleasant")?, &labels, &manifest)?;
    let unpleasant =
        AttributeSet::from_labels("unpleasant", "unpleasant", lexicon.section("unpleasant")?, &labels, &manifest)?;
    let mut norms_csv = String::from("stimulus_id,valence\n");
    for row in 0..images.rows() {
        let d = sc_weat_effect_size(&images.row_f64(row), &pleasant, &unpleasant)?;
        let rating = 4.0 + 1.5 * d + rng.gen_range(-0.8..0.8);
        norms_csv.push_str(&format!("{row},{rating:.4}\n"));
    }

    Ok(Fixture {
        images,
        labels,
        manifest,
        norms_csv,
        sources: (0..13).map(|i| format!("BF-{i:03}")).collect(),
        targets: (0..120).map(|i| format!("WF-{i:03}")).collect(),
    })
}

const HYPODESCENT_TOML: &str = r#"images = "images.emb"
labels = "labels.emb"
manifest = "manifest.json"
minority = "Black"
majority = "White"
seed = 42
"#;

const DEFAULT_RACE_TOML: &str = r#"images = "images.emb"
labels = "labels.emb"
manifest = "manifest.json"
minority = "Black"
majority = "White"
person = "person"
extra_labels = ["multiracial", "biracial", "mixed race"]
seed = 42
"#;

const VALENCE_TOML: &str = r#"images = "images.emb"
labels = "labels.emb"
manifest = "manifest.json"
minority = "Black"
sign_convention = "a-unpleasant"
seed = 42
"#;

const VALIDATE_NORMS_TOML: &str = r#"images = "images.emb"
labels = "labels.emb"
manifest = "manifest.json"
norms = "norms.csv"
sign_convention = "a-pleasant"
seed = 42
"#;

const PLAN_TOML: &str = r#"sources = "sources.txt"
targets = "targets.txt"
series = 26
gender = "female"
source_group = "Black"
target_group = "White"
seed = 42
"#;

/// Writes the fixture files and per-audit configs into `dir`.
pub fn write(dir: &Path) -> anyhow::Result<()> {
    let f = build()?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let files: [(&str, Vec<u8>); 11] = [
        ("images.emb", f.images.to_bytes()),
        ("labels.emb", f.labels.to_bytes()),
        ("manifest.json", f.manifest.to_json().into_bytes()),
        ("norms.csv", f.norms_csv.into_bytes()),
        ("sources.txt", (f.sources.join("\n") + "\n").into_bytes()),
        ("targets.txt", (f.targets.join("\n") + "\n").into_bytes()),
        ("hypodescent.toml", HYPODESCENT_TOML.into()),
        ("default-race.toml", DEFAULT_RACE_TOML.into()),
        ("valence.toml", VALENCE_TOML.into()),
        ("validate-norms.toml", VALIDATE_NORMS_TOML.into()),
        ("plan.toml", PLAN_TOML.into()),
    ];
    for (name, bytes) in files {
        let path = dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

/// Audits with a golden report under `golden/`, paired with their configs.
pub const GOLDEN_RUNS: [(crate::config::AuditKind, &str, &str); 5] = {
    use crate::config::AuditKind::*;
    [
        (Hypodescent, "hypodescent.toml", "golden/hypodescent.csv"),
        (DefaultRace, "default-race.toml", "golden/default-race.csv"),
        (Valence, "valence.toml", "golden/valence.csv"),
        (ValidateNorms, "validate-norms.toml", "golden/validate-norms.csv"),
        (Plan, "plan.toml", "golden/plan.json"),
    ]
};
