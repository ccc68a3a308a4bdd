use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mobds"));
    c.env("MOBDS_REFERENCE_DIR", std::env::temp_dir().join("mobds-reference"));
    c
}

fn data() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/unemployment_synthetic.csv")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn fit_args<'a>(data: &'a str, out: &'a str) -> Vec<&'a str> {
    vec![
        "fit",
        "--data",
        data,
        "--time-col",
        "spell",
        "--status-col",
        "censor1",
        "--z-cols",
        "age,ui,tenure",
        "--categorical",
        "ui",
        "--perms",
        "99",
        "--max-depth",
        "2",
        "--seed",
        "5",
        "--out-dir",
        out,
    ]
}

#[test]
fn fit_writes_outputs_and_predict_reads_them() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fit");
    let d = data();
    let o = run(&fit_args(d.to_str().unwrap(), out.to_str().unwrap()));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["tree.json", "tree.txt", "pvalues.csv", "survival.csv", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let csv = fs::read_to_string(out.join("pvalues.csv")).unwrap();
    assert!(csv.starts_with("# manifest: manifest.json\n"));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["seed_from_entropy"], false);
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);

    let new = dir.path().join("new.csv");
    fs::write(&new, "age,ui,tenure\n60,yes,3\n25,no,10\n").unwrap();
    let pout = dir.path().join("pred");
    let o = run(&[
        "predict",
        "--tree",
        out.join("tree.json").to_str().unwrap(),
        "--data",
        new.to_str().unwrap(),
        "--out-dir",
        pout.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let pred = fs::read_to_string(pout.join("predictions.csv")).unwrap();
    let lines: Vec<&str> = pred.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("row,node,surv_1,"));

    // Header only: no rows, still a valid file.
    fs::write(&new, "age,ui,tenure\n").unwrap();
    let o = run(&[
        "predict",
        "--tree",
        out.join("tree.json").to_str().unwrap(),
        "--data",
        new.to_str().unwrap(),
        "--out-dir",
        pout.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert_eq!(
        fs::read_to_string(pout.join("predictions.csv"))
            .unwrap()
            .lines()
            .count(),
        2
    );

    // Unseen categorical level is a data error.
    fs::write(&new, "age,ui,tenure\n60,maybe,3\n").unwrap();
    let o = run(&[
        "predict",
        "--tree",
        out.join("tree.json").to_str().unwrap(),
        "--data",
        new.to_str().unwrap(),
        "--out-dir",
        pout.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let out = out.to_str().unwrap();
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["fit"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));

    let d = data();
    let mut args = fit_args(d.to_str().unwrap(), out);
    args.extend(["--alpha", "1.5"]);
    assert_eq!(run(&args).status.code(), Some(2));

    let missing = dir.path().join("nope.csv");
    let args = fit_args(missing.to_str().unwrap(), out);
    assert_eq!(run(&args).status.code(), Some(3));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "spell,censor1,age,ui,tenure\n0,1,30,no,2\n").unwrap();
    assert_eq!(run(&fit_args(bad.to_str().unwrap(), out)).status.code(), Some(3));

    // Outcome identical for every subject except one: the risk set design
    // separates and the fit fails numerically.
    let sep = dir.path().join("sep.csv");
    fs::write(&sep, "time,status,z\n1,1,0\n1,1,1\n2,0,2\n").unwrap();
    let o = run(&[
        "fit",
        "--data",
        sep.to_str().unwrap(),
        "--z-cols",
        "z",
        "--x-cols",
        "z",
        "--method",
        "mob",
        "--out-dir",
        out,
    ]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn simulate_lists_presets_and_runs_a_grid_file() {
    let o = run(&["simulate", "--list-presets"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("desk-typeI"));

    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.toml");
    fs::write(
        &grid,
        "k = 4\nshape = \"A\"\nevent_rate = 0.6\ncensoring = 0.2\nreps = 4\nperms = 9\nq = 2\n",
    )
    .unwrap();
    let out = dir.path().join("sim");
    let o = run(&[
        "simulate",
        "--config",
        grid.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed_from_entropy"], true);
    assert!(m["seed"].is_u64());
    assert!(fs::read_to_string(out.join("report.csv")).unwrap().contains("mob-ds"));
}

#[test]
fn augment_and_reference_commands() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("aug");
    let d = data();
    let o = run(&[
        "augment",
        "--data",
        d.to_str().unwrap(),
        "--time-col",
        "spell",
        "--status-col",
        "censor1",
        "--z-cols",
        "age",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = fs::read_to_string(out.join("augmented.csv")).unwrap().lines().count();
    let total: usize = fs::read_to_string(&d)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(rows, total + 2);

    let o = run(&["reference", "--d", "1"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).lines().count() >= 2);
    assert_eq!(
        run(&["reference", "--d", "1", "--trim-low", "0.6"]).status.code(),
        Some(2)
    );
}
