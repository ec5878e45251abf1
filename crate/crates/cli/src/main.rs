use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use morph_audit_cli::audits::run_and_write;
use morph_audit_cli::config::{AuditConfig, AuditKind, OutputFormat};
use morph_audit_cli::init_thread_pool;
use morph_audit_core::SignConvention;

#[derive(Parser)]
#[command(name = "audit", version, about = "Audit morph-series image embeddings for label bias")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Percentage of images preferring the minority label at each morph index.
    Hypodescent(Flags),
    /// Correlate the unmarked "person" label with each group label.
    DefaultRace(Flags),
    /// Per-image SC-WEAT valence against the bundled lexicon.
    Valence(Flags),
    /// Correlate SC-WEAT effect sizes with human valence ratings.
    ValidateNorms(Flags),
    /// Pair source and target identities into a series manifest.
    Plan(Flags),
    /// Write the interpolation series between two rows as an EMB1 matrix.
    Interpolate(Flags),
}

#[derive(Args, Default)]
struct Flags {
    /// TOML config; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Label embedding matrix. Defaults to the image matrix.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    minority: Option<String>,
    #[arg(long)]
    majority: Option<String>,
    #[arg(long)]
    person: Option<String>,
    #[arg(long = "extra-label")]
    extra_labels: Vec<String>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long, value_enum)]
    sign_convention: Option<SignConventionArg>,
    #[arg(long)]
    norms: Option<PathBuf>,
    /// One stimulus id per image row, matching the norm table.
    #[arg(long)]
    ids: Option<PathBuf>,
    #[arg(long)]
    permutations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
    #[arg(long)]
    sources: Option<PathBuf>,
    #[arg(long)]
    targets: Option<PathBuf>,
    #[arg(long)]
    series: Option<usize>,
    #[arg(long)]
    gender: Option<String>,
    #[arg(long)]
    source_group: Option<String>,
    #[arg(long)]
    target_group: Option<String>,
    #[arg(long)]
    source_row: Option<usize>,
    #[arg(long)]
    target_row: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum SignConventionArg {
    APleasant,
    AUnpleasant,
}

impl From<SignConventionArg> for SignConvention {
    fn from(a: SignConventionArg) -> Self {
        match a {
            SignConventionArg::APleasant => SignConvention::APleasant,
            SignConventionArg::AUnpleasant => SignConvention::AUnpleasant,
        }
    }
}

fn overlay<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

impl Flags {
    fn into_config(self, kind: AuditKind) -> anyhow::Result<AuditConfig> {
        let mut c = match &self.config {
            Some(path) => AuditConfig::load(path, kind)?,
            None => AuditConfig::new(kind),
        };
        overlay(&mut c.images, self.images);
        overlay(&mut c.manifest, self.manifest);
        overlay(&mut c.labels, self.labels);
        overlay(&mut c.minority, self.minority);
        overlay(&mut c.majority, self.majority);
        overlay(&mut c.person, self.person);
        if !self.extra_labels.is_empty() {
            c.extra_labels = self.extra_labels;
        }
        overlay(&mut c.lexicon, self.lexicon);
        overlay(&mut c.sign_convention, self.sign_convention.map(Into::into));
        overlay(&mut c.norms, self.norms);
        overlay(&mut c.ids, self.ids);
        overlay(&mut c.out, self.out);
        overlay(&mut c.sources, self.sources);
        overlay(&mut c.targets, self.targets);
        overlay(&mut c.gender, self.gender);
        overlay(&mut c.source_group, self.source_group);
        overlay(&mut c.target_group, self.target_group);
        overlay(&mut c.source_row, self.source_row);
        overlay(&mut c.target_row, self.target_row);
        c.permutations = self.permutations.unwrap_or(c.permutations);
        c.seed = self.seed.unwrap_or(c.seed);
        c.format = self.format.unwrap_or(c.format);
        c.series = self.series.unwrap_or(c.series);
        c.steps = self.steps.unwrap_or(c.steps);
        Ok(c)
    }
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    init_thread_pool()?;
    let (kind, flags) = match cli.command {
        Command::Hypodescent(f) => (AuditKind::Hypodescent, f),
        Command::DefaultRace(f) => (AuditKind::DefaultRace, f),
        Command::Valence(f) => (AuditKind::Valence, f),
        Command::ValidateNorms(f) => (AuditKind::ValidateNorms, f),
        Command::Plan(f) => (AuditKind::Plan, f),
        Command::Interpolate(f) => (AuditKind::Interpolate, f),
    };
    let config = flags.into_config(kind)?;
    if let Some(bytes) = run_and_write(&config)? {
        let mut stdout = std::io::stdout().lock();
        stdout.write_all(&bytes)?;
        stdout.flush()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
