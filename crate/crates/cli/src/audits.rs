//! The four audits plus the planning/interpolation helpers, each producing
//! an [`Artifact`] from an [`AuditConfig`].

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use morph_audit_core::association::{
    cosines_for_rows, curve_from_records, label_cosines, preference_records,
    series_crossover_indices, summarize_cosines,
};
use morph_audit_core::lexicon::VALENCE_LEXICON;
use morph_audit_core::matrix::write_atomic;
use morph_audit_core::pairing::SeriesTags;
use morph_audit_core::weat::binomial;
use morph_audit_core::{
    association_skewness, batch_sc_weat, crossover_index, interpolate, load_matrix,
    load_matrix_csv, mixing_ratio, pearson, plan_pairings, sc_weat_effect_size,
    validate_against_norms, validate_manifest_split, AttributeSet, AuditError, DatasetManifest,
    EmbeddingMatrix, Lexicon, PermutationMode, SignConvention, ValenceNormTable, SERIES_LEN,
};

use crate::config::{AuditConfig, AuditKind};
use crate::report::{digest_file, fixed, sci, sha256_hex, AuditReport, InputDigest, Table};

pub const PLEASANT_SECTION: &str = "pleasant";
pub const UNPLEASANT_SECTION: &str = "unpleasant";

/// What a subcommand produces.
#[derive(Debug, Clone)]
pub enum Artifact {
    Report(Box<AuditReport>),
    Manifest(DatasetManifest),
    Matrix(EmbeddingMatrix),
}

impl Artifact {
    pub fn to_bytes(&self, config: &AuditConfig) -> Vec<u8> {
        match self {
            Artifact::Report(r) => r.render(config.format).into_bytes(),
            Artifact::Manifest(m) => m.to_json().into_bytes(),
            Artifact::Matrix(m) => m.to_bytes(),
        }
    }

    pub fn report(&self) -> Option<&AuditReport> {
        match self {
            Artifact::Report(r) => Some(r),
            _ => None,
        }
    }
}

pub fn run(config: &AuditConfig) -> anyhow::Result<Artifact> {
    config.check()?;
    match config.audit {
        AuditKind::Hypodescent => run_hypodescent(config).map(|r| Artifact::Report(Box::new(r))),
        AuditKind::DefaultRace => run_default_race(config).map(|r| Artifact::Report(Box::new(r))),
        AuditKind::Valence => run_valence(config).map(|r| Artifact::Report(Box::new(r))),
        AuditKind::ValidateNorms => run_norm_validation(config).map(|r| Artifact::Report(Box::new(r))),
        AuditKind::Plan => run_plan(config).map(Artifact::Manifest),
        AuditKind::Interpolate => run_interpolate(config).map(Artifact::Matrix),
    }
}

/// Runs the audit and writes its output to `config.out` (atomically), or
/// returns the bytes for stdout when no output path is set.
pub fn run_and_write(config: &AuditConfig) -> anyhow::Result<Option<Vec<u8>>> {
    let artifact = run(config)?;
    let bytes = artifact.to_bytes(config);
    match &config.out {
        Some(path) => {
            write_atomic(path, &bytes).with_context(|| format!("writing {}", path.display()))?;
            Ok(None)
        }
        None if matches!(artifact, Artifact::Matrix(_)) => {
            bail!("interpolate writes a binary matrix; pass --out PATH")
        }
        None => Ok(Some(bytes)),
    }
}

fn read_matrix(role: &str, path: &Path) -> anyhow::Result<EmbeddingMatrix> {
    let loaded = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        load_matrix_csv(path)
    } else {
        load_matrix(path)
    };
    loaded.with_context(|| format!("loading {role} matrix {}", path.display()))
}

struct Dataset {
    images: EmbeddingMatrix,
    labels: Option<EmbeddingMatrix>,
    manifest: DatasetManifest,
    inputs: Vec<InputDigest>,
}

impl Dataset {
    fn load(config: &AuditConfig) -> anyhow::Result<Self> {
        let images_path = AuditConfig::require(&config.images, "--images")?;
        let manifest_path = AuditConfig::require(&config.manifest, "--manifest")?;
        let mut inputs = vec![digest_file("images", images_path)?];
        let images = read_matrix("image", images_path)?;
        let labels = match &config.labels {
            Some(p) => {
                inputs.push(digest_file("labels", p)?);
                Some(read_matrix("label", p)?)
            }
            None => None,
        };
        inputs.push(digest_file("manifest", manifest_path)?);
        let manifest = DatasetManifest::load(manifest_path)
            .with_context(|| format!("loading manifest {}", manifest_path.display()))?;
        let violations =
            validate_manifest_split(&manifest, &images, labels.as_ref().unwrap_or(&images));
        if !violations.is_empty() {
            return Err(AuditError::InvalidManifest(violations))
                .with_context(|| format!("manifest {}", manifest_path.display()));
        }
        Ok(Self {
            images,
            labels,
            manifest,
            inputs,
        })
    }

    fn labels(&self) -> &EmbeddingMatrix {
        self.labels.as_ref().unwrap_or(&self.images)
    }

    fn require_series(&self) -> anyhow::Result<()> {
        if self.manifest.records.is_empty() {
            bail!("manifest has no morph-series records");
        }
        Ok(())
    }
}

fn load_lexicon(config: &AuditConfig, inputs: &mut Vec<InputDigest>) -> anyhow::Result<Lexicon> {
    match &config.lexicon {
        Some(path) => {
            inputs.push(digest_file("lexicon", path)?);
            Lexicon::load(path).with_context(|| format!("loading lexicon {}", path.display()))
        }
        None => {
            inputs.push(InputDigest {
                role: "lexicon".into(),
                path: "<bundled valence lexicon>".into(),
                sha256: sha256_hex(VALENCE_LEXICON.as_bytes()),
            });
            Ok(Lexicon::valence())
        }
    }
}

/// Attribute sets ordered as (A, B) for `convention`.
fn valence_sets(
    lexicon: &Lexicon,
    ds: &Dataset,
    convention: SignConvention,
) -> anyhow::Result<(AttributeSet, AttributeSet)> {
    let build = |section: &str| -> anyhow::Result<AttributeSet> {
        AttributeSet::from_labels(
            section,
            section,
            lexicon.section(section)?,
            ds.labels(),
            &ds.manifest,
        )
        .with_context(|| format!("building [{section}] attribute set"))
    };
    let pleasant = build(PLEASANT_SECTION)?;
    let unpleasant = build(UNPLEASANT_SECTION)?;
    Ok(match convention {
        SignConvention::APleasant => (pleasant, unpleasant),
        SignConvention::AUnpleasant => (unpleasant, pleasant),
    })
}

/// Exhaustive when the partition count fits in the permutation budget.
pub fn choose_mode(a: usize, b: usize, permutations: usize) -> PermutationMode {
    if a == b && binomial((a + b) as u64, a as u64) <= permutations as u128 {
        PermutationMode::Exhaustive
    } else {
        PermutationMode::Sampled(permutations)
    }
}

fn convention_name(c: SignConvention) -> &'static str {
    match c {
        SignConvention::APleasant => "a-pleasant",
        SignConvention::AUnpleasant => "a-unpleasant",
    }
}

pub fn run_hypodescent(config: &AuditConfig) -> anyhow::Result<AuditReport> {
    let minority = AuditConfig::require(&config.minority, "--minority")?;
    let majority = AuditConfig::require(&config.majority, "--majority")?;
    let ds = Dataset::load(config)?;
    ds.require_series()?;

    let records = preference_records(&ds.images, ds.labels(), &ds.manifest, minority, majority)?;
    let curve = curve_from_records(&records, minority, majority)?;

    let mut table = Table::new("curve", &["morph_index", "mixing_ratio", "pct_minority"]);
    for (k, pct) in curve.percentages.iter().enumerate() {
        table.push(vec![k.to_string(), fixed(mixing_ratio(k)?, 2), fixed(*pct, 4)]);
    }

    let crossovers = series_crossover_indices(&records);
    let skew = match association_skewness(&crossovers) {
        Ok(s) => fixed(s, 9),
        Err(AuditError::UndefinedSkew | AuditError::TooFewSamples { .. }) => "undefined".into(),
        Err(e) => return Err(e.into()),
    };
    let crossover = crossover_index(&curve);
    let mut summary = Table::new("summary", &["metric", "value"]);
    summary.push(vec!["series_count".into(), curve.series_count.to_string()]);
    summary.push(vec!["minority_label".into(), minority.clone()]);
    summary.push(vec!["majority_label".into(), majority.clone()]);
    summary.push(vec![
        "crossover_index".into(),
        crossover.map_or("none".into(), |k| k.to_string()),
    ]);
    summary.push(vec![
        "crossover_mixing_ratio".into(),
        crossover.map_or(Ok("none".into()), |k| mixing_ratio(k).map(|r| fixed(r, 2)))?,
    ]);
    summary.push(vec![
        "mean_series_crossover_index".into(),
        fixed(morph_audit_core::stats::mean(&crossovers)?, 6),
    ]);
    summary.push(vec!["skewness_series_crossover_index".into(), skew]);

    Ok(AuditReport::new(config, ds.inputs, vec![table, summary]))
}

pub fn run_default_race(config: &AuditConfig) -> anyhow::Result<AuditReport> {
    let minority = AuditConfig::require(&config.minority, "--minority")?;
    let majority = AuditConfig::require(&config.majority, "--majority")?;
    let person = AuditConfig::require(&config.person, "--person")?;
    let ds = Dataset::load(config)?;
    ds.require_series()?;

    let mut names: Vec<&String> = vec![minority, majority, person];
    for extra in &config.extra_labels {
        if !names.contains(&extra) {
            names.push(extra);
        }
    }
    let mut per_label = Vec::with_capacity(names.len());
    for name in &names {
        let cosines = label_cosines(&ds.images, ds.labels(), &ds.manifest, name)?;
        per_label.push(cosines);
    }
    let pooled = |i: usize| -> Vec<f64> { per_label[i].iter().flatten().copied().collect() };
    let person_cos = pooled(2);

    let mut correlations = Table::new("correlations", &["comparison", "label", "rho", "p_value", "n"]);
    for (key, idx) in [("person_vs_minority", 0), ("person_vs_majority", 1)] {
        let r = pearson(&person_cos, &pooled(idx))
            .with_context(|| format!("correlating person with {}", names[idx]))?;
        correlations.push(vec![
            key.into(),
            names[idx].clone(),
            fixed(r.rho, 9),
            sci(r.p_value),
            r.n.to_string(),
        ]);
    }

    let mut curves = Table::new("mean_curves", &["morph_index", "mean_cos", "label"]);
    let mut stds = Table::new("label_std", &["label", "std"]);
    for (name, cosines) in names.iter().zip(&per_label) {
        let summary = summarize_cosines(name, cosines)?;
        for (k, m) in summary.mean_cosines.iter().enumerate() {
            curves.push(vec![k.to_string(), fixed(*m, 9), name.to_string()]);
        }
        stds.push(vec![name.to_string(), fixed(summary.overall_std, 9)]);
    }

    Ok(AuditReport::new(config, ds.inputs, vec![correlations, curves, stds]))
}

pub fn run_valence(config: &AuditConfig) -> anyhow::Result<AuditReport> {
    let minority = AuditConfig::require(&config.minority, "--minority")?;
    let mut ds = Dataset::load(config)?;
    ds.require_series()?;
    let lexicon = load_lexicon(config, &mut ds.inputs)?;
    let convention = config.sign_convention.unwrap_or(SignConvention::AUnpleasant);
    let (a, b) = valence_sets(&lexicon, &ds, convention)?;
    let mode = choose_mode(a.len(), b.len(), config.permutations);

    let results = batch_sc_weat(&ds.images, &ds.manifest, &a, &b, mode, config.seed)?;
    let rows: Vec<usize> = ds.manifest.records.iter().map(|r| r.row).collect();
    let minority_cos = cosines_for_rows(&ds.images, ds.labels(), &ds.manifest, minority, &rows)?;

    let mut per_image = Table::new(
        "sc_weat",
        &["row", "series_id", "morph_index", "effect_size", "p_value"],
    );
    let mut by_index: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); SERIES_LEN];
    for ((record, result), cos) in ds.manifest.records.iter().zip(&results).zip(&minority_cos) {
        per_image.push(vec![
            record.row.to_string(),
            record.series_id.clone(),
            record.morph_index.to_string(),
            fixed(result.effect_size, 9),
            sci(result.p_value),
        ]);
        by_index[record.morph_index].0.push(result.effect_size);
        by_index[record.morph_index].1.push(*cos);
    }

    let effects: Vec<f64> = results.iter().map(|r| r.effect_size).collect();
    let image_level = pearson(&effects, &minority_cos).context("image-level correlation")?;

    let mut curve_means = Table::new(
        "curve_means",
        &["morph_index", "mean_effect_size", "mean_minority_cos"],
    );
    let mut mean_effects = Vec::with_capacity(SERIES_LEN);
    let mut mean_cos = Vec::with_capacity(SERIES_LEN);
    for (k, (e, c)) in by_index.iter().enumerate() {
        let me = morph_audit_core::stats::mean(e)?;
        let mc = morph_audit_core::stats::mean(c)?;
        curve_means.push(vec![k.to_string(), fixed(me, 9), fixed(mc, 9)]);
        mean_effects.push(me);
        mean_cos.push(mc);
    }
    let curve_level = pearson(&mean_effects, &mean_cos).context("curve-level correlation")?;

    let mut correlations = Table::new("correlations", &["scope", "rho", "p_value", "n"]);
    for (scope, r) in [("image", image_level), ("curve", curve_level)] {
        correlations.push(vec![scope.into(), fixed(r.rho, 9), sci(r.p_value), r.n.to_string()]);
    }

    let mut settings = Table::new("test", &["setting", "value"]);
    settings.push(vec!["attribute_a".into(), a.name.clone()]);
    settings.push(vec!["attribute_b".into(), b.name.clone()]);
    settings.push(vec!["sign_convention".into(), convention_name(convention).into()]);
    settings.push(vec!["minority_label".into(), minority.clone()]);
    settings.push(vec![
        "permutation_mode".into(),
        match mode {
            PermutationMode::Exhaustive => "exhaustive".into(),
            PermutationMode::Sampled(n) => format!("sampled:{n}"),
        },
    ]);

    Ok(AuditReport::new(
        config,
        ds.inputs,
        vec![correlations, curve_means, settings, per_image],
    ))
}

fn read_id_list(role: &str, path: &Path) -> anyhow::Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {role} {}", path.display()))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

pub fn run_norm_validation(config: &AuditConfig) -> anyhow::Result<AuditReport> {
    let norms_path = AuditConfig::require(&config.norms, "--norms")?;
    let mut ds = Dataset::load(config)?;
    let lexicon = load_lexicon(config, &mut ds.inputs)?;
    ds.inputs.push(digest_file("norms", norms_path)?);
    let norms = ValenceNormTable::load(norms_path)
        .with_context(|| format!("loading norms {}", norms_path.display()))?;
    let ids = match &config.ids {
        Some(path) => {
            ds.inputs.push(digest_file("ids", path)?);
            let ids = read_id_list("ids", path)?;
            if ids.len() != ds.images.rows() {
                bail!(
                    "{} lists {} ids for {} image rows",
                    path.display(),
                    ids.len(),
                    ds.images.rows()
                );
            }
            ids
        }
        None => (0..ds.images.rows()).map(|r| r.to_string()).collect(),
    };
    let convention = config.sign_convention.unwrap_or(SignConvention::APleasant);
    let (a, b) = valence_sets(&lexicon, &ds, convention)?;

    let effects = ids
        .iter()
        .enumerate()
        .map(|(row, id)| {
            sc_weat_effect_size(&ds.images.row_f64(row), &a, &b)
                .map(|d| (id.clone(), d))
                .with_context(|| format!("image row {row} ({id})"))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let r = validate_against_norms(&effects, &norms, convention)?;

    let mut validation = Table::new("validation", &["rho", "p_value", "n"]);
    validation.push(vec![fixed(r.rho, 9), sci(r.p_value), r.n.to_string()]);
    let ratings: HashMap<&str, f64> = norms.entries.iter().map(|(i, v)| (i.as_str(), *v)).collect();
    let mut per_image = Table::new("effects", &["stimulus_id", "effect_size", "pleasantness", "valence"]);
    for (id, d) in &effects {
        per_image.push(vec![
            id.clone(),
            fixed(*d, 9),
            fixed(convention.pleasant_oriented(*d), 9),
            fixed(ratings[id.as_str()], 6),
        ]);
    }
    Ok(AuditReport::new(config, ds.inputs, vec![validation, per_image]))
}

pub fn run_plan(config: &AuditConfig) -> anyhow::Result<DatasetManifest> {
    let sources_path = AuditConfig::require(&config.sources, "--sources")?;
    let targets_path = AuditConfig::require(&config.targets, "--targets")?;
    let sources = read_id_list("sources", sources_path)?;
    let targets = read_id_list("targets", targets_path)?;
    let plan = plan_pairings(&sources, &targets, config.series, config.seed)?;
    let tags = SeriesTags {
        gender: config.gender.clone().unwrap_or_default(),
        source_group: config.source_group.clone().unwrap_or_default(),
        target_group: config.target_group.clone().unwrap_or_default(),
    };
    Ok(plan.to_manifest(&tags))
}

pub fn run_interpolate(config: &AuditConfig) -> anyhow::Result<EmbeddingMatrix> {
    let path = AuditConfig::require(&config.images, "--images")?;
    let source_row = *AuditConfig::require(&config.source_row, "--source-row")?;
    let target_row = *AuditConfig::require(&config.target_row, "--target-row")?;
    let m = read_matrix("endpoint", path)?;
    m.get_row(source_row).context("--source-row")?;
    m.get_row(target_row).context("--target-row")?;
    let series = interpolate(&m.row_f64(source_row), &m.row_f64(target_row), config.steps)?;
    Ok(EmbeddingMatrix::from_f64_rows(&series.steps)?)
}
