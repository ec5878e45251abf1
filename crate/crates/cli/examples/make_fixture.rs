//! Regenerates the synthetic fixture and its golden reports:
//! `cargo run -p morph-audit-cli --example make_fixture [DIR]`.

use std::path::PathBuf;

use anyhow::Context;
use morph_audit_cli::audits::run_and_write;
use morph_audit_cli::config::AuditConfig;
use morph_audit_cli::fixture::{self, GOLDEN_RUNS};

fn main() -> anyhow::Result<()> {
    let dir = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic"));
    fixture::write(&dir)?;
    // Config paths are relative to the fixture directory.
    std::env::set_current_dir(&dir)?;
    std::fs::create_dir_all("golden")?;
    for (kind, config, golden) in GOLDEN_RUNS {
        let config = AuditConfig::load(config.as_ref(), kind)?;
        let bytes = run_and_write(&config)?.context("golden configs write to stdout")?;
        std::fs::write(golden, bytes)?;
    }
    eprintln!("wrote {}", dir.display());
    Ok(())
}
