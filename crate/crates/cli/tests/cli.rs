use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use morph_audit_cli::audits;
use morph_audit_cli::config::AuditKind;
use morph_audit_cli::fixture::{self, GOLDEN_RUNS};
use morph_audit_cli::report::AuditReport;
use morph_audit_core::{load_matrix, AttributeSet, Lexicon};

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic")
}

fn audit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_audit"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok_stdout(out: Output) -> Vec<u8> {
    assert!(
        out.status.success(),
        "audit failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

#[test]
fn golden_reports_match() {
    let dir = fixture_dir();
    for (kind, config, golden) in GOLDEN_RUNS {
        let got = ok_stdout(audit(&dir, &[kind.name(), "--config", config]));
        let want = fs::read(dir.join(golden)).unwrap();
        assert!(got == want, "{golden} differs from a fresh run");
    }
}

#[test]
fn shipped_fixture_regenerates_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    fixture::write(tmp.path()).unwrap();
    let mut compared = 0;
    for entry in fs::read_dir(tmp.path()).unwrap() {
        let name = entry.unwrap().file_name();
        let fresh = fs::read(tmp.path().join(&name)).unwrap();
        let shipped = fs::read(fixture_dir().join(&name)).unwrap();
        assert!(fresh == shipped, "{name:?} differs from the generator");
        compared += 1;
    }
    assert_eq!(compared, 11);
}

#[test]
fn reruns_are_byte_identical_in_both_formats() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r.txt");
    let out = out.to_str().unwrap();
    for format in ["csv", "txt"] {
        let mut runs = Vec::new();
        for _ in 0..2 {
            ok_stdout(audit(
                &fixture_dir(),
                &["valence", "--config", "valence.toml", "--format", format, "--out", out],
            ));
            runs.push(fs::read(out).unwrap());
        }
        assert_eq!(runs[0], runs[1]);
        let report = AuditReport::parse(std::str::from_utf8(&runs[0]).unwrap()).unwrap();
        assert_eq!(report.audit, AuditKind::Valence);
    }
}

#[test]
fn report_reproduces_from_embedded_config() {
    let dir = fixture_dir();
    for (_, _, golden) in GOLDEN_RUNS.iter().filter(|(k, _, _)| *k != AuditKind::Plan) {
        let text = fs::read_to_string(dir.join(golden)).unwrap();
        let report = AuditReport::parse(&text).unwrap();
        let mut config = report.provenance.config.clone();
        for path in [&mut config.images, &mut config.labels, &mut config.manifest, &mut config.norms]
            .into_iter()
            .flatten()
        {
            *path = dir.join(&*path);
        }
        let rerun = audits::run(&config).unwrap();
        assert_eq!(rerun.report().unwrap().tables, report.tables, "{golden}");
        let inputs: Vec<_> = rerun.report().unwrap().provenance.inputs.iter().map(|i| &i.sha256).collect();
        let recorded: Vec<_> = report.provenance.inputs.iter().map(|i| &i.sha256).collect();
        assert_eq!(inputs, recorded);
    }
}

#[test]
fn flags_override_config() {
    let out = ok_stdout(audit(
        &fixture_dir(),
        &["hypodescent", "--config", "hypodescent.toml", "--minority", "White", "--majority", "Black", "--seed", "7"],
    ));
    let report = AuditReport::parse(std::str::from_utf8(&out).unwrap()).unwrap();
    assert_eq!(report.provenance.seed, 7);
    let curve = report.table("curve").unwrap();
    assert_eq!(curve.lookup("0", "pct_minority"), Some("0.0000"));
    assert_eq!(curve.lookup("20", "pct_minority"), Some("100.0000"));
}

#[test]
fn missing_label_fails() {
    let out = audit(
        &fixture_dir(),
        &["hypodescent", "--config", "hypodescent.toml", "--minority", "Martian"],
    );
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Martian"), "{err}");
    assert!(out.stdout.is_empty());
}

#[test]
fn missing_required_setting_fails() {
    let out = audit(&fixture_dir(), &["hypodescent", "--images", "images.emb", "--minority", "Black", "--majority", "White"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--manifest"));
}

#[test]
fn unknown_config_key_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("bad.toml");
    fs::write(&config, "minority = \"Black\"\nthreshold = 3\n").unwrap();
    let out = audit(&fixture_dir(), &["hypodescent", "--config", config.to_str().unwrap()]);
    assert!(!out.status.success());
}

#[test]
fn corrupt_matrix_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let bytes = fs::read(fixture_dir().join("images.emb")).unwrap();
    let cut = tmp.path().join("cut.emb");
    fs::write(&cut, &bytes[..bytes.len() - 3]).unwrap();
    let out = audit(
        &fixture_dir(),
        &["hypodescent", "--config", "hypodescent.toml", "--images", cut.to_str().unwrap()],
    );
    assert!(!out.status.success());
}

#[test]
fn plan_is_identical_across_thread_counts() {
    let dir = fixture_dir();
    let run = |threads: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_audit"))
            .current_dir(&dir)
            .env(morph_audit_cli::THREADS_ENV, threads)
            .args(["plan", "--config", "plan.toml", "--series", "200"])
            .output()
            .unwrap();
        ok_stdout(out)
    };
    let one = run("1");
    assert_eq!(one, run("8"));
    assert_eq!(one, run("3"));
}

#[test]
fn bad_thread_count_fails() {
    let out = Command::new(env!("CARGO_BIN_EXE_audit"))
        .current_dir(fixture_dir())
        .env(morph_audit_cli::THREADS_ENV, "many")
        .args(["plan", "--config", "plan.toml"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn plan_rejects_undersized_target_pool() {
    let out = audit(&fixture_dir(), &["plan", "--config", "plan.toml", "--series", "5000"]);
    assert!(!out.status.success());
}

#[test]
fn default_race_person_equal_to_majority_correlates_perfectly() {
    let out = ok_stdout(audit(
        &fixture_dir(),
        &["default-race", "--config", "default-race.toml", "--person", "White"],
    ));
    let report = AuditReport::parse(std::str::from_utf8(&out).unwrap()).unwrap();
    let corr = report.table("correlations").unwrap();
    assert_eq!(corr.lookup("person_vs_majority", "rho"), Some("1.000000000"));
    assert_eq!(corr.lookup("person_vs_majority", "n"), Some("252"));
}

#[test]
fn norms_cloned_from_effects_validate_perfectly() {
    let f = fixture::build().unwrap();
    let lexicon = Lexicon::valence();
    let set = |name: &str| {
        AttributeSet::from_labels(name, name, lexicon.section(name).unwrap(), &f.labels, &f.manifest).unwrap()
    };
    let (pleasant, unpleasant) = (set("pleasant"), set("unpleasant"));
    let mut csv = String::from("stimulus_id,valence\n");
    for row in 0..f.images.rows() {
        let d = morph_audit_core::sc_weat_effect_size(&f.images.row_f64(row), &pleasant, &unpleasant).unwrap();
        csv.push_str(&format!("img{row},{}\n", 3.0 * d + 1.0));
    }
    let tmp = tempfile::tempdir().unwrap();
    let norms = tmp.path().join("norms.csv");
    fs::write(&norms, csv).unwrap();
    let ids = tmp.path().join("ids.txt");
    let id_list: String = (0..f.images.rows()).map(|r| format!("img{r}\n")).collect();
    fs::write(&ids, id_list).unwrap();

    let out = ok_stdout(audit(
        &fixture_dir(),
        &[
            "validate-norms",
            "--config",
            "validate-norms.toml",
            "--norms",
            norms.to_str().unwrap(),
            "--ids",
            ids.to_str().unwrap(),
        ],
    ));
    let report = AuditReport::parse(std::str::from_utf8(&out).unwrap()).unwrap();
    let row = &report.table("validation").unwrap().rows[0];
    assert_eq!(row[0], "1.000000000");

    // Under the opposite convention effects are negated, so orientation
    // brings the correlation back to +1.
    let out = ok_stdout(audit(
        &fixture_dir(),
        &[
            "validate-norms",
            "--config",
            "validate-norms.toml",
            "--norms",
            norms.to_str().unwrap(),
            "--ids",
            ids.to_str().unwrap(),
            "--sign-convention",
            "a-unpleasant",
        ],
    ));
    let report = AuditReport::parse(std::str::from_utf8(&out).unwrap()).unwrap();
    assert_eq!(report.table("validation").unwrap().rows[0][0], "1.000000000");
}

#[test]
fn two_entry_norm_table_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let norms = tmp.path().join("norms.csv");
    fs::write(&norms, "stimulus_id,valence\n0,4.0\n1,5.5\n").unwrap();
    let out = audit(
        &fixture_dir(),
        &["validate-norms", "--config", "validate-norms.toml", "--norms", norms.to_str().unwrap()],
    );
    assert!(!out.status.success());
}

#[test]
fn interpolate_keeps_endpoints_exact() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("series.emb");
    ok_stdout(audit(
        &fixture_dir(),
        &[
            "interpolate",
            "--images",
            "images.emb",
            "--source-row",
            "0",
            "--target-row",
            "41",
            "--steps",
            "5",
            "--out",
            out.to_str().unwrap(),
        ],
    ));
    let series = load_matrix(&out).unwrap();
    let images = load_matrix(fixture_dir().join("images.emb")).unwrap();
    assert_eq!(series.rows(), 5);
    assert_eq!(series.row(0), images.row(0));
    assert_eq!(series.row(4), images.row(41));

    let no_out = audit(&fixture_dir(), &["interpolate", "--images", "images.emb", "--source-row", "0", "--target-row", "1"]);
    assert!(!no_out.status.success());
    let bad_row = audit(
        &fixture_dir(),
        &["interpolate", "--images", "images.emb", "--source-row", "0", "--target-row", "999", "--out", out.to_str().unwrap()],
    );
    assert!(!bad_row.status.success());
}
