//! End-to-end exercise of the command-line workflow at miniature scale:
//! generate data, train (zero epochs, mechanics only), calibrate bounds,
//! run a campaign, fit and reduce detectors, score, bench, and export.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vigilar"))
}

fn run(cmd: &mut Command) -> String {
    let out = cmd.output().expect("failed to spawn binary");
    assert!(
        out.status.success(),
        "command failed\nstdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn assert_file(path: &Path) {
    assert!(path.is_file(), "expected file {}", path.display());
    assert!(path.metadata().unwrap().len() > 0, "empty file {}", path.display());
}

#[test]
fn full_workflow_runs_end_to_end() {
    let root = tempfile::tempdir().unwrap();
    let p = |s: &str| -> PathBuf { root.path().join(s) };

    run(bin()
        .args(["gen-data", "--train", "40", "--test", "20", "--seed", "5", "--out"])
        .arg(p("data")));
    for name in [
        "train-images.idx",
        "train-labels.idx",
        "test-images.idx",
        "test-labels.idx",
    ] {
        assert_file(&p("data").join(name));
    }

    run(bin()
        .args(["train-net", "--epochs", "0", "--out"])
        .arg(p("model.qsnt"))
        .arg("--images")
        .arg(p("data/train-images.idx"))
        .arg("--labels")
        .arg(p("data/train-labels.idx"))
        .arg("--eval-images")
        .arg(p("data/test-images.idx"))
        .arg("--eval-labels")
        .arg(p("data/test-labels.idx")));
    assert_file(&p("model.qsnt"));

    run(bin()
        .args(["extract-bounds", "--count", "8", "--net"])
        .arg(p("model.qsnt"))
        .arg("--images")
        .arg(p("data/test-images.idx"))
        .arg("--out")
        .arg(p("bounds.csv")));
    assert_file(&p("bounds.csv"));

    let config = "\
images = 20
fis_per_image = 5
accelerated_epochs = 4
seed = 3
retrain_seeds = 2
ccp_alpha = 1.5e-5
search_depth = 2
";
    std::fs::write(p("mini.toml"), config).unwrap();

    run(bin()
        .args(["campaign", "--config"])
        .arg(p("mini.toml"))
        .arg("--net")
        .arg(p("model.qsnt"))
        .arg("--images")
        .arg(p("data/test-images.idx"))
        .arg("--labels")
        .arg(p("data/test-labels.idx"))
        .arg("--out")
        .arg(p("run")));
    assert_file(&p("run/records.csv"));

    let detector_out = run(bin()
        .args(["train-detector", "--config"])
        .arg(p("mini.toml"))
        .arg("--records")
        .arg(p("run/records.csv"))
        .arg("--out")
        .arg(p("run")));
    assert!(detector_out.contains("sdc"), "missing headline scores:\n{detector_out}");
    for name in ["summary.json", "tree.json", "metrics.csv", "rules.txt"] {
        assert_file(&p("run").join(name));
    }

    run(bin()
        .args(["reduce", "--config"])
        .arg(p("mini.toml"))
        .arg("--records")
        .arg(p("run/records.csv"))
        .arg("--out")
        .arg(p("reduced")));
    assert_file(&p("reduced/reduced_tree.json"));
    assert_file(&p("reduced/reduced_rules.txt"));

    run(bin()
        .args(["search-minimal", "--config"])
        .arg(p("mini.toml"))
        .arg("--records")
        .arg(p("run/records.csv"))
        .arg("--out")
        .arg(p("minimal")));
    assert_file(&p("minimal/pool.json"));

    let eval_out = run(bin()
        .args(["evaluate", "--seed-index", "0", "--tree"])
        .arg(p("run/tree.json"))
        .arg("--config")
        .arg(p("mini.toml"))
        .arg("--records")
        .arg(p("run/records.csv")));
    assert!(eval_out.contains("precision"), "missing score table:\n{eval_out}");

    run(bin()
        .args(["bench", "--count", "2", "--reps", "10", "--warmup", "1"])
        .args(["--features", "0,1"])
        .arg("--net")
        .arg(p("model.qsnt"))
        .arg("--images")
        .arg(p("data/test-images.idx"))
        .arg("--out")
        .arg(p("bench")));
    assert_file(&p("bench/overhead.csv"));
    assert_file(&p("bench/overhead_summary.csv"));
    let summary = std::fs::read_to_string(p("bench/overhead_summary.csv")).unwrap();
    assert!(summary.starts_with("variant,reps,mean,std,median,ci_lo,ci_hi,vs_plain"));

    let rules = run(bin().args(["export-tree", "--tree"]).arg(p("run/tree.json")));
    assert!(rules.contains("leaves"), "missing tree outline:\n{rules}");

    // The environment variable redirects output away from --out.
    run(bin()
        .args(["export-tree", "--tree"])
        .arg(p("run/tree.json"))
        .arg("--out")
        .arg(p("ignored"))
        .env("VIGILAR_OUT_DIR", p("redirected")));
    assert_file(&p("redirected/rules.txt"));
    assert_file(&p("redirected/tree.json"));
    assert!(!p("ignored").join("rules.txt").exists());
}
