use std::path::Path;
use std::process::{Command, Output};

use autoadversary::eval::RunReport;

const TINY: &str = "\
# small and quick
dataset-size = 300
width = 8
height = 8
classes = 3
epochs = 3
accuracy-floor = 0
count = 3
iters = 40
";

fn aadv(dir: &Path, args: &[&str], env_seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_aadv"));
    cmd.current_dir(dir).args(args).env_remove("AADV_SEED");
    if let Some(s) = env_seed {
        cmd.env("AADV_SEED", s);
    }
    cmd.output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.cfg"), TINY).unwrap();
    ok(&aadv(dir.path(), &["train", "--config", "tiny.cfg", "--seed", "3"], None));
    dir
}

#[test]
fn train_attack_report_round_trip() {
    let dir = setup();
    let d = dir.path();
    assert!(d.join("aadv-out/model.aadv").exists());
    let table = ok(&aadv(d, &["attack", "--config", "tiny.cfg", "--seed", "3", "--eps", "8/255", "--dump-images"], None));
    assert!(table.contains("full"));
    let report = RunReport::load(d.join("aadv-out/attack.json")).unwrap();
    assert_eq!(report.config["seed"], "3");
    assert_eq!(report.config["eps"], (8.0f64 / 255.0).to_string());
    assert_eq!(report.variants[0].records.len(), 3);
    assert!(report.aggregates_consistent());
    let id = report.variants[0].records[0].image_id;
    for kind in ["original", "adversarial", "diff", "mask"] {
        assert!(d.join(format!("aadv-out/images/full-{id:05}-{kind}.pgm")).exists(), "{kind}");
    }
    let shown = ok(&aadv(d, &["report", "aadv-out/attack.json"], None));
    assert_eq!(shown, table);
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = setup();
    let d = dir.path();
    ok(&aadv(d, &["attack", "--config", "tiny.cfg", "--count", "1"], Some("17")));
    assert_eq!(RunReport::load(d.join("aadv-out/attack.json")).unwrap().config["seed"], "17");
    ok(&aadv(d, &["attack", "--config", "tiny.cfg", "--count", "1", "--seed", "5"], Some("17")));
    assert_eq!(RunReport::load(d.join("aadv-out/attack.json")).unwrap().config["seed"], "5");
    ok(&aadv(d, &["attack", "--config", "tiny.cfg", "--count", "1"], None));
    assert_eq!(RunReport::load(d.join("aadv-out/attack.json")).unwrap().config["seed"], "1");
}

#[test]
fn worker_count_does_not_change_results() {
    let dir = setup();
    let d = dir.path();
    let load = |workers: &str, out: &str| {
        ok(&aadv(d, &["attack", "--config", "tiny.cfg", "--seed", "3", "--workers", workers, "--out", out], None));
        let mut r = RunReport::load(d.join(out).join("attack.json")).unwrap().without_timing();
        r.config.remove("workers");
        r.config.remove("out");
        r
    };
    assert_eq!(load("1", "one"), load("3", "three"));
}

#[test]
fn ablate_and_encoders_write_reports() {
    let dir = setup();
    let d = dir.path();
    ok(&aadv(d, &["ablate", "--config", "tiny.cfg", "--seed", "3", "--count", "2"], None));
    let r = RunReport::load(d.join("aadv-out/ablate.json")).unwrap();
    let names: Vec<&str> = r.variants.iter().map(|v| v.name.as_str()).collect();
    assert_eq!(names, ["full", "dense", "random", "l1-delta", "no-encoder"]);
    ok(&aadv(d, &["encoders", "--config", "tiny.cfg", "--seed", "3", "--count", "2", "--channel-shared"], None));
    let r = RunReport::load(d.join("aadv-out/encoders.json")).unwrap();
    assert_eq!(r.config["channel-shared"], "true");
    assert_eq!(r.variants.iter().map(|v| v.name.as_str()).collect::<Vec<_>>(), ["fc", "conv"]);
}

#[test]
fn bad_input_fails_cleanly() {
    let dir = setup();
    let d = dir.path();
    for args in [
        &["attack", "--config", "tiny.cfg", "--eps", "2"][..],
        &["attack", "--config", "tiny.cfg", "--encoder", "rnn"],
        &["attack", "--config", "tiny.cfg", "--count", "100000"],
        &["attack", "--model", "missing.aadv"],
        &["report", "tiny.cfg"],
    ] {
        let out = aadv(d, args, None);
        assert!(!out.status.success(), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "), "{args:?}");
    }
    std::fs::write(d.join("bad.cfg"), "eps 0.1\n").unwrap();
    assert!(!aadv(d, &["attack", "--config", "bad.cfg"], None).status.success());
}
