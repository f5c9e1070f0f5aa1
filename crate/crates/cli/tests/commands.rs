use std::path::Path;
use std::process::{Command, Output};

fn filtergen(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_filtergen"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Short sentences over a small vocabulary with some word-order structure.
fn write_corpus(path: &Path, n: usize, offset: usize) {
    let words = [
        "the", "cat", "dog", "sat", "ran", "on", "a", "mat", "log", "quickly",
    ];
    let mut text = String::new();
    for i in offset..offset + n {
        let len = 3 + i % 4;
        let line: Vec<&str> = (0..len)
            .map(|k| words[(i * 3 + k * (1 + i % 3)) % words.len()])
            .collect();
        text.push_str(&line.join(" "));
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn text_workflow() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write_corpus(&d.join("train.txt"), 600, 0);
    write_corpus(&d.join("valid.txt"), 100, 600);
    write_corpus(&d.join("test.txt"), 200, 700);
    std::fs::write(
        d.join("disc.toml"),
        "[discriminator]\nmax_epochs = 3\nembed_dim = 8\n",
    )
    .unwrap();

    ok(&filtergen(
        d,
        &[
            "train-gen",
            "--train",
            "train.txt",
            "--valid",
            "valid.txt",
            "--out",
            "gen.json",
            "--seed",
            "1",
        ],
    ));
    assert_eq!(json(&d.join("gen.json"))["kind"], "ngram");

    ok(&filtergen(
        d,
        &[
            "train-disc",
            "--real",
            "train.txt",
            "--gen-model",
            "gen.json",
            "--config",
            "disc.toml",
            "--out",
            "disc.json",
            "--seed",
            "1",
        ],
    ));
    assert_eq!(json(&d.join("disc.json"))["kind"], "textcnn");

    ok(&filtergen(
        d,
        &[
            "estimate-uc",
            "--gen",
            "gen.json",
            "--disc",
            "disc.json",
            "--c",
            "0.5",
            "--seed",
            "2",
            "--out",
            "uc.json",
        ],
    ));
    let uc = json(&d.join("uc.json"));
    assert_eq!(uc["c"], 0.5);
    assert_eq!(uc["trace"].as_array().unwrap().len(), 100);
    let u = uc["u_c"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&u));

    let u_arg = u.to_string();
    let sample = |out: &str| {
        filtergen(
            d,
            &[
                "sample",
                "--gen",
                "gen.json",
                "--disc",
                "disc.json",
                "--c",
                "0.5",
                "--u-c",
                &u_arg,
                "--n",
                "300",
                "--out",
                out,
                "--rejected-out",
                "rej.txt",
                "--seed",
                "3",
            ],
        )
    };
    ok(&sample("acc.txt"));
    ok(&sample("acc2.txt"));
    let acc = std::fs::read_to_string(d.join("acc.txt")).unwrap();
    assert_eq!(acc.lines().count(), 300);
    assert_eq!(acc, std::fs::read_to_string(d.join("acc2.txt")).unwrap());
    assert_eq!(
        std::fs::read_to_string(d.join("rej.txt"))
            .unwrap()
            .lines()
            .count(),
        300
    );
    let stats = json(&d.join("acc.txt.stats.json"));
    assert!(stats.is_object());

    ok(&filtergen(
        d,
        &[
            "evaluate",
            "--real",
            "test.txt",
            "--samples",
            "acc.txt",
            "--gen",
            "gen.json",
            "--disc",
            "disc.json",
            "--real-train",
            "train.txt",
            "--metrics",
            "bleu,selfbleu,lm,fed,err",
            "--out",
            "report.json",
        ],
    ));
    let r = json(&d.join("report.json"));
    for key in [
        "bleu",
        "self_bleu",
        "lm_score",
        "fed",
        "error_rate",
        "disc_error_rate",
    ] {
        assert!(r[key].is_number(), "{key} missing: {r}");
    }
    assert!(r["rev_lm_score"].is_null());
    let b = r["bleu"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&b));
}

#[test]
fn out_dir_places_relative_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&filtergen(
        tmp.path(),
        &[
            "oracle-check",
            "--scenario",
            "s1",
            "--c",
            "0.4",
            "--mc-samples",
            "20000",
            "--out",
            "s1.json",
            "--out-dir",
            "res",
        ],
    ));
    let r = json(&tmp.path().join("res/s1.json"));
    assert_eq!(r["passed"], true, "{r}");
}

#[test]
fn oracle_check_accepts_scenario_files() {
    let tmp = tempfile::tempdir().unwrap();
    let file = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/s2.json");
    let out = filtergen(
        tmp.path(),
        &[
            "oracle-check",
            "--scenario",
            file.to_str().unwrap(),
            "--c",
            "0.5",
            "--mc-samples",
            "20000",
            "--out",
            "r.json",
        ],
    );
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("exact_correction"));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("bad.toml"), "[sweep]\ntemperatures = [0]\n").unwrap();
    let out = filtergen(d, &["pipeline", "--config", "bad.toml"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("seed required") && err.contains("temperature must be > 0"),
        "{err}"
    );

    assert_eq!(
        filtergen(d, &["pipeline", "--config", "missing.toml"])
            .status
            .code(),
        Some(2)
    );
    let out = filtergen(
        d,
        &[
            "oracle-check",
            "--scenario",
            "s9",
            "--c",
            "0.5",
            "--out",
            "x.json",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    let out = filtergen(
        d,
        &["oracle-check", "--scenario", "s1", "--c", "0", "--out", "x.json"],
    );
    assert_eq!(out.status.code(), Some(2));
    let out = filtergen(
        d,
        &[
            "--workers",
            "0",
            "oracle-check",
            "--scenario",
            "s1",
            "--c",
            "0.5",
            "--out",
            "x.json",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    // unreadable checkpoint
    let out = filtergen(
        d,
        &[
            "estimate-uc",
            "--gen",
            "nope.json",
            "--disc",
            "nope.json",
            "--c",
            "0.5",
            "--out",
            "u.json",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
}
