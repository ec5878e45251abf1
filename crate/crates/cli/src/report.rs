//! Audit reports: named tables plus a provenance block.
//!
//! CSV layout:
//!
//! ```text
//! # morph-audit report
//! # audit: hypodescent
//! # tool: morph-audit 0.1.0
//! # seed: 42
//! # input images: fixture/images.emb sha256=...
//! # config: {"audit":"hypodescent",...}
//!
//! # table: curve
//! morph_index,mixing_ratio,pct_minority
//! 0,1.00,100.0000
//! ...
//! ```
//!
//! Tables follow one another separated by a blank line. The `txt` format is
//! a JSON document carrying the same provenance and the same cell strings.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{AuditConfig, AuditKind, OutputFormat};

pub const TOOL_NAME: &str = "morph-audit";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Value in column `column` of the first row whose first cell is `key`.
    pub fn lookup(&self, key: &str, column: &str) -> Option<&str> {
        let col = self.columns.iter().position(|c| c == column)?;
        self.rows
            .iter()
            .find(|r| r.first().map(String::as_str) == Some(key))
            .map(|r| r[col].as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub inputs: Vec<InputDigest>,
    pub config: AuditConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub audit: AuditKind,
    pub provenance: Provenance,
    pub tables: Vec<Table>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        write!(s, "{b:02x}").unwrap();
    }
    s
}

pub fn digest_file(role: &str, path: &Path) -> anyhow::Result<InputDigest> {
    let bytes = fs::read(path).with_context(|| format!("reading {role} {}", path.display()))?;
    Ok(InputDigest {
        role: role.to_string(),
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

impl AuditReport {
    pub fn new(config: &AuditConfig, inputs: Vec<InputDigest>, tables: Vec<Table>) -> Self {
        Self {
            audit: config.audit,
            provenance: Provenance {
                tool: TOOL_NAME.to_string(),
                version: TOOL_VERSION.to_string(),
                seed: config.seed,
                inputs,
                config: config.clone(),
            },
            tables,
        }
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let p = &self.provenance;
        writeln!(out, "# {TOOL_NAME} report").unwrap();
        writeln!(out, "# audit: {}", self.audit.name()).unwrap();
        writeln!(out, "# tool: {} {}", p.tool, p.version).unwrap();
        writeln!(out, "# seed: {}", p.seed).unwrap();
        for input in &p.inputs {
            writeln!(out, "# input {}: {} sha256={}", input.role, input.path, input.sha256).unwrap();
        }
        writeln!(out, "# config: {}", p.config.to_json()).unwrap();
        for table in &self.tables {
            writeln!(out).unwrap();
            writeln!(out, "# table: {}", table.name).unwrap();
            writeln!(out, "{}", table.columns.join(",")).unwrap();
            for row in &table.rows {
                let cells: Vec<String> = row.iter().map(|c| csv_cell(c)).collect();
                writeln!(out, "{}", cells.join(",")).unwrap();
            }
        }
        out
    }

    pub fn to_txt(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Txt => self.to_txt(),
        }
    }

    /// Parses a report in either format.
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        if text.trim_start().starts_with('{') {
            return serde_json::from_str(text).context("report JSON is malformed");
        }
        parse_csv(text)
    }
}

fn csv_cell(c: &str) -> String {
    if c.contains([',', '"', '\n']) {
        format!("\"{}\"", c.replace('"', "\"\""))
    } else {
        c.to_string()
    }
}

fn split_csv_line(line: &str) -> Vec<String> {
    let mut cells = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(ch) = chars.next() {
        match (ch, quoted) {
            ('"', true) if chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            ('"', _) => quoted = !quoted,
            (',', false) => cells.push(std::mem::take(&mut cur)),
            (c, _) => cur.push(c),
        }
    }
    cells.push(cur);
    cells
}

fn parse_csv(text: &str) -> anyhow::Result<AuditReport> {
    let mut config = None;
    let mut inputs = Vec::new();
    let mut tables: Vec<Table> = Vec::new();
    let mut tool = (TOOL_NAME.to_string(), TOOL_VERSION.to_string());
    let mut expect_header = false;
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("# ") {
            if let Some(json) = rest.strip_prefix("config: ") {
                config = Some(AuditConfig::from_json(json)?);
            } else if let Some(name) = rest.strip_prefix("table: ") {
                tables.push(Table::new(name, &[]));
                expect_header = true;
            } else if let Some(t) = rest.strip_prefix("tool: ") {
                let (name, version) = t.split_once(' ').unwrap_or((t, ""));
                tool = (name.to_string(), version.to_string());
            } else if let Some(input) = rest.strip_prefix("input ") {
                let (role, rest) = input.split_once(": ").context("malformed input line")?;
                let (path, sha) = rest.rsplit_once(" sha256=").context("malformed input line")?;
                inputs.push(InputDigest {
                    role: role.to_string(),
                    path: path.to_string(),
                    sha256: sha.to_string(),
                });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let Some(table) = tables.last_mut() else {
            bail!("data line before any table header: {line:?}");
        };
        if expect_header {
            table.columns = split_csv_line(line);
            expect_header = false;
        } else {
            table.rows.push(split_csv_line(line));
        }
    }
    let config = config.context("report has no embedded config")?;
    Ok(AuditReport {
        audit: config.audit,
        provenance: Provenance {
            tool: tool.0,
            version: tool.1,
            seed: config.seed,
            inputs,
            config,
        },
        tables,
    })
}

/// Fixed-point formatting used for every float cell.
pub fn fixed(x: f64, decimals: usize) -> String {
    let s = format!("{x:.decimals$}");
    // Avoid "-0.000" for values that round to zero.
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

/// Scientific formatting for p-values.
pub fn sci(x: f64) -> String {
    format!("{x:.6e}")
}
