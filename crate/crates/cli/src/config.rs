use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use morph_audit_core::SignConvention;
use serde::{Deserialize, Serialize};

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_PERMUTATIONS: usize = 10_000;
pub const DEFAULT_SERIES: usize = 1000;
pub const DEFAULT_STEPS: usize = 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum AuditKind {
    Hypodescent,
    DefaultRace,
    Valence,
    ValidateNorms,
    Plan,
    Interpolate,
}

impl AuditKind {
    pub fn name(self) -> &'static str {
        match self {
            AuditKind::Hypodescent => "hypodescent",
            AuditKind::DefaultRace => "default-race",
            AuditKind::Valence => "valence",
            AuditKind::ValidateNorms => "validate-norms",
            AuditKind::Plan => "plan",
            AuditKind::Interpolate => "interpolate",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Txt,
}

/// Everything one audit run needs. Loaded from a TOML file, overridden by
/// command-line flags, and embedded verbatim in the report it produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    pub audit: AuditKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub images: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minority: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub majority: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub person: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra_labels: Vec<String>,
    /// Sectioned word list; the bundled valence lexicon when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sign_convention: Option<SignConvention>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norms: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ids: Option<PathBuf>,
    #[serde(default = "default_permutations")]
    pub permutations: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sources: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<PathBuf>,
    #[serde(default = "default_series")]
    pub series: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gender: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_group: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_group: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_row: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_row: Option<usize>,
    #[serde(default = "default_steps")]
    pub steps: usize,
}

fn default_permutations() -> usize {
    DEFAULT_PERMUTATIONS
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_series() -> usize {
    DEFAULT_SERIES
}

fn default_steps() -> usize {
    DEFAULT_STEPS
}

impl AuditConfig {
    pub fn new(audit: AuditKind) -> Self {
        Self {
            audit,
            images: None,
            manifest: None,
            labels: None,
            minority: None,
            majority: None,
            person: None,
            extra_labels: Vec::new(),
            lexicon: None,
            sign_convention: None,
            norms: None,
            ids: None,
            permutations: DEFAULT_PERMUTATIONS,
            seed: DEFAULT_SEED,
            out: None,
            format: OutputFormat::Csv,
            sources: None,
            targets: None,
            series: DEFAULT_SERIES,
            gender: None,
            source_group: None,
            target_group: None,
            source_row: None,
            target_row: None,
            steps: DEFAULT_STEPS,
        }
    }

    /// Parses a TOML config. The `audit` key may be omitted when the caller
    /// already knows the kind; a conflicting value is an error.
    pub fn from_toml(text: &str, kind: AuditKind) -> anyhow::Result<Self> {
        let mut table: toml::Table = text.parse().context("config is not valid TOML")?;
        match table.get("audit").and_then(|v| v.as_str()) {
            Some(name) if name != kind.name() => {
                bail!("config is for audit {name:?}, but {:?} was requested", kind.name())
            }
            _ => {
                table.insert("audit".into(), toml::Value::String(kind.name().into()));
            }
        }
        let config: AuditConfig = table.try_into().context("invalid config")?;
        Ok(config)
    }

    pub fn load(path: &Path, kind: AuditKind) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text, kind).with_context(|| format!("in config {}", path.display()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        serde_json::from_str(text).context("embedded config is not valid")
    }

    pub fn check(&self) -> anyhow::Result<()> {
        if self.permutations == 0 {
            bail!("permutations must be >= 1");
        }
        if self.series == 0 {
            bail!("series must be >= 1");
        }
        if self.steps < 2 {
            bail!("steps must be >= 2");
        }
        Ok(())
    }

    pub fn require<'a, T>(field: &'a Option<T>, flag: &str) -> anyhow::Result<&'a T> {
        field
            .as_ref()
            .with_context(|| format!("missing required setting `{flag}`"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_defaults_and_kind() {
        let c = AuditConfig::from_toml("images = \"a.emb\"\nminority = \"Black\"\n", AuditKind::Hypodescent).unwrap();
        assert_eq!(c.audit, AuditKind::Hypodescent);
        assert_eq!(c.seed, DEFAULT_SEED);
        assert_eq!(c.permutations, DEFAULT_PERMUTATIONS);
        assert_eq!(c.images.as_deref(), Some(Path::new("a.emb")));
        assert!(AuditConfig::from_toml("audit = \"valence\"\n", AuditKind::Hypodescent).is_err());
        assert!(AuditConfig::from_toml("bogus = 1\n", AuditKind::Hypodescent).is_err());
        let c = AuditConfig::from_toml("sign_convention = \"a-pleasant\"\nformat = \"txt\"\n", AuditKind::Valence).unwrap();
        assert_eq!(c.sign_convention, Some(SignConvention::APleasant));
        assert_eq!(c.format, OutputFormat::Txt);
    }

    #[test]
    fn json_round_trip() {
        let mut c = AuditConfig::new(AuditKind::DefaultRace);
        c.extra_labels = vec!["mixed race".into()];
        c.seed = 7;
        assert_eq!(AuditConfig::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn check_rejects_zero_permutations() {
        let mut c = AuditConfig::new(AuditKind::Valence);
        c.permutations = 0;
        assert!(c.check().is_err());
    }
}
