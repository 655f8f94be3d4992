use std::path::Path;
use std::process::{Command, Output};

fn bakeoff(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bakeoff"))
        .args(args)
        .current_dir(dir)
        .env_remove("BAKEOFF_SEED")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, data: &str) {
    let text = format!(
        r#"
seed = 3
output = "out"
[dataset]
path = "{data}"
target = "label"
task = "classification"
categorical = ["site"]
[split]
policy = "stratified"
fractions = [0.6, 0.2, 0.2]
[hpo]
budget = 2
[training]
patience = 2
max_epochs = 5
[seeds]
count = 1
[[learners]]
kind = "gbdt"
preset = "xgboost-desk"
"#
    );
    std::fs::write(dir.join("experiment.toml"), text).unwrap();
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_dataset_fails_with_the_path() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "absent.csv");
    let o = bakeoff(&["run", "--config", "experiment.toml"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("absent.csv"), "{}", stderr(&o));
}

#[test]
fn synth_then_run_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = bakeoff(&["synth", "--rows", "150", "--seed", "1", "--output", "data.csv"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    write_config(dir.path(), "data.csv");
    let o = bakeoff(&["run", "--config", "experiment.toml"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("gbdt") && stdout.contains(" ± "), "{stdout}");
    assert!(dir.path().join("out/report.txt").exists());
    assert_eq!(std::fs::read_to_string(dir.path().join("out/gbdt/trials.log")).unwrap().lines().count(), 2);

    // a second run needs --resume; with it nothing is re-tuned
    let o = bakeoff(&["tune", "--config", "experiment.toml"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("--resume"));
    let o = bakeoff(&["tune", "--config", "experiment.toml", "--resume"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn seed_override_changes_the_search() {
    let dir = tempfile::tempdir().unwrap();
    bakeoff(&["synth", "--rows", "150", "--output", "data.csv"], dir.path());
    write_config(dir.path(), "data.csv");
    let tune = |out: &str, seed: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_bakeoff"));
        c.args(["tune", "--config", "experiment.toml", "--out", out]).current_dir(dir.path());
        match seed {
            Some(s) => c.env("BAKEOFF_SEED", s),
            None => c.env_remove("BAKEOFF_SEED"),
        };
        assert!(c.output().unwrap().status.success());
        std::fs::read_to_string(dir.path().join(out).join("gbdt/trials.log")).unwrap()
    };
    let base = tune("a", None);
    assert_eq!(base, tune("b", Some("3")));
    assert_ne!(base, tune("c", Some("4")));
}

#[test]
fn compare_prints_deterioration_and_p_values() {
    let dir = tempfile::tempdir().unwrap();
    let summary = |name: &str, a: f64, b: f64, c: f64| {
        let text = format!(
            "dataset\tmodel\tmetric\tmean\tsem\n{name}\ta\tce\t{a}\t0\n{name}\tb\tce\t{b}\t0\n{name}\tc\tce\t{c}\t0\n"
        );
        std::fs::write(dir.path().join(format!("{name}.tsv")), text).unwrap();
    };
    summary("d1", 1.0, 1.1, 1.3);
    summary("d2", 1.0, 1.21, 1.5);
    std::fs::write(dir.path().join("mask.csv"), "model,d1,d2\na,1,1\nb,1,1\nc,0,0\n").unwrap();
    let o = bakeoff(
        &["compare", "--summary", "d1.tsv", "--summary", "d2.tsv", "--unseen", "mask.csv", "--out", "cmp.txt"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("cmp.txt")).unwrap();
    assert!(text.contains("0.00%"), "{text}");
    assert!(text.contains("15.37%"), "{text}");
    assert!(text.contains("notice: `c` has no unseen datasets"), "{text}");

    std::fs::write(dir.path().join("mask.csv"), "model,d1\na,1\nb,1\nc,0\n").unwrap();
    let o = bakeoff(&["compare", "--summary", "d1.tsv", "--summary", "d2.tsv", "--unseen", "mask.csv"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("unseen mask"), "{}", stderr(&o));
}
