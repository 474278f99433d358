use std::fmt::Write as _;
use std::path::Path;
use std::process::{Command, Output};

use bptd::tensor_io::load_tensor;

fn bptd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bptd"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = bptd(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Eight countries in two blocs over six months. Within-bloc cooperation,
/// across-bloc conflict, plus one self-loop and one comment.
fn event_file(dir: &Path) -> std::path::PathBuf {
    let names = ["USA", "GBR", "FRA", "DEU", "RUS", "CHN", "IRN", "PRK"];
    let mut s = String::from("# sender\treceiver\tcode\tdate\n");
    let mut x = 7u64;
    for month in 1..=6 {
        for _ in 0..60 {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let i = (x >> 33) as usize % 8;
            let j = (x >> 40) as usize % 8;
            if i == j {
                continue;
            }
            let same = (i < 4) == (j < 4);
            let code = if same { 1 + (x >> 50) as usize % 8 } else { 13 + (x >> 50) as usize % 8 };
            writeln!(s, "{}\t{}\t{code}\t2001-{month:02}-15", names[i], names[j]).unwrap();
        }
    }
    s.push_str("USA\tUSA\t4\t2001-01-02\n");
    let path = dir.join("events.tsv");
    std::fs::write(&path, s).unwrap();
    path
}

fn ingested(dir: &Path) -> std::path::PathBuf {
    let events = event_file(dir);
    let out = dir.join("ingested");
    let msg = ok(&["ingest", p(&events), "--out", p(&out)]);
    assert!(msg.contains("1 self-loops dropped"), "{msg}");
    out
}

#[test]
fn ingest_writes_tensor_and_vocabularies() {
    let dir = tempfile::tempdir().unwrap();
    let out = ingested(dir.path());
    let t = load_tensor(&out.join("tensor.tsv")).unwrap();
    let d = t.dims();
    assert_eq!((d.countries, d.actions, d.steps), (8, 20, 6));
    assert!(t.total() > 300);
    let countries = std::fs::read_to_string(out.join("countries.txt")).unwrap();
    assert_eq!(countries.lines().count(), 8);
    let steps = std::fs::read_to_string(out.join("steps.txt")).unwrap();
    assert_eq!(steps.lines().next(), Some("2001-01"));
    assert_eq!(steps.lines().last(), Some("2001-06"));
}

#[test]
fn fit_is_deterministic_and_exports() {
    let dir = tempfile::tempdir().unwrap();
    let data = ingested(dir.path()).join("tensor.tsv");
    let run = |name: &str| {
        let out = dir.path().join(name);
        ok(&[
            "fit", "--data", p(&data), "--out", p(&out), "--dims", "4,3,2", "--sweeps", "30", "--seed", "5",
            "--workers", "1", "--set", "save_every=10",
        ]);
        out
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["trace.tsv", "checkpoint.bin", "posterior_mean.bin", "checkpoint-000010.bin"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let trace = std::fs::read_to_string(a.join("trace.tsv")).unwrap();
    assert_eq!(trace.lines().count(), 32);
    let config = std::fs::read_to_string(a.join("config.txt")).unwrap();
    assert!(config.contains("dims = 4,3,2\n") && config.contains("seed = 5\n"));

    let export = dir.path().join("export");
    let vocab = dir.path().join("ingested");
    ok(&[
        "export",
        p(&a.join("posterior_mean.bin")),
        "--out",
        p(&export),
        "--countries",
        p(&vocab.join("countries.txt")),
        "--steps",
        p(&vocab.join("steps.txt")),
    ]);
    let rows = |f: &str| std::fs::read_to_string(export.join(f)).unwrap().lines().count();
    assert_eq!(rows("theta.tsv"), 9);
    assert_eq!(rows("phi.tsv"), 21);
    assert_eq!(rows("psi.tsv"), 7);
    assert_eq!(rows("core.tsv"), 1 + 4 * 4 * 3 * 2);
    assert_eq!(rows("networks.tsv"), 1 + 3 * 4 * 4);
    assert_eq!(rows("effective_dims.tsv"), 4);
    let theta = std::fs::read_to_string(export.join("theta.tsv")).unwrap();
    let first = std::fs::read_to_string(vocab.join("countries.txt")).unwrap();
    let first = first.lines().next().unwrap();
    assert!(theta.lines().nth(1).unwrap().starts_with(&format!("{first}\t")));
}

#[test]
fn worker_count_changes_nothing_but_the_stream() {
    let dir = tempfile::tempdir().unwrap();
    let data = ingested(dir.path()).join("tensor.tsv");
    for w in ["1", "3"] {
        let out = dir.path().join(format!("w{w}"));
        ok(&["fit", "--data", p(&data), "--out", p(&out), "--dims", "3,2,2", "--sweeps", "5", "--workers", w]);
        assert!(out.join("checkpoint.bin").exists());
    }
}

#[test]
fn baselines_fit() {
    let dir = tempfile::tempdir().unwrap();
    let data = ingested(dir.path()).join("tensor.tsv");
    for model in ["bptf", "gpirm", "dcgpirm"] {
        let out = dir.path().join(model);
        ok(&["fit", "--data", p(&data), "--out", p(&out), "--model", model, "--dims", "3,2,2", "--sweeps", "10"]);
        let trace = std::fs::read_to_string(out.join("trace.tsv")).unwrap();
        assert!(trace.lines().nth(1).unwrap().starts_with(model));
        assert!(!out.join("posterior_mean.bin").exists());
    }
}

#[test]
fn evaluate_writes_scaled_table() {
    let dir = tempfile::tempdir().unwrap();
    let data = ingested(dir.path()).join("tensor.tsv");
    let out = dir.path().join("eval.tsv");
    ok(&[
        "evaluate", "--data", p(&data), "--out", p(&out), "--mask", "top3,inverse-top3", "--seeds", "2", "--dims",
        "3,2,2", "--set", "holdout=2", "--set", "train_sweeps=20", "--set", "test_sweeps=20", "--set", "burn_in=10",
        "--set", "thin=2", "--parallel", "2",
    ]);
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "model\tmask\tseed\tinverse_perplexity\tscaled_value\twall_clock_seconds");
    assert_eq!(lines.len(), 1 + 2 * 4 * 2);
    for mask in ["top3", "inverse-top3"] {
        let scaled: Vec<f64> = lines[1..]
            .iter()
            .map(|l| l.split('\t').collect::<Vec<_>>())
            .filter(|f| f[1] == mask)
            .map(|f| f[4].parse().unwrap())
            .collect();
        assert_eq!(scaled.len(), 8);
        assert!(scaled.iter().any(|&s| s == 1.0));
        assert!(scaled.iter().all(|&s| s > 0.0 && s <= 1.0));
    }
}

#[test]
fn benchmark_reports_cost_table() {
    let dir = tempfile::tempdir().unwrap();
    let data = ingested(dir.path()).join("tensor.tsv");
    let text = ok(&["benchmark-alloc", "--data", p(&data), "--grid", "50,10,5;2,2,2", "--sweeps", "1"]);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split('\t').collect();
    assert_eq!(&row[..5], ["50", "10", "5", "125000", "115"]);
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn simulate_and_geweke() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim.tsv");
    ok(&["simulate", "--out", p(&out), "--shape", "6,4,3", "--dims", "2,2,1", "--seed", "3"]);
    let t = load_tensor(&out).unwrap();
    assert_eq!(t.dims().countries, 6);

    let fit_dir = dir.path().join("fit");
    ok(&["fit", "--data", p(&out), "--out", p(&fit_dir), "--dims", "2,2,1", "--sweeps", "3"]);
    let again = dir.path().join("again.tsv");
    ok(&["simulate", "--out", p(&again), "--from", p(&fit_dir.join("checkpoint.bin"))]);
    assert_eq!(load_tensor(&again).unwrap().dims(), t.dims());

    let res = bptd(&["geweke", "--forward", "400", "--successive", "400"]);
    let text = String::from_utf8(res.stdout).unwrap();
    assert!(text.starts_with("statistic\tforward_mean\tsuccessive_mean\tz"));
    assert!(matches!(res.status.code(), Some(0) | Some(4)));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| bptd(args).status.code();
    assert_eq!(code(&["fit", "--data", "nowhere.tsv", "--out", p(dir.path())]), Some(3));
    assert_eq!(code(&["fit", "--set", "colour=red"]), Some(2));
    assert_eq!(code(&["fit", "--out", p(dir.path())]), Some(2));
    assert_eq!(code(&["no-such-command"]), Some(2));

    let bad = dir.path().join("bad.tsv");
    std::fs::write(&bad, "USA\tCHN\t21\t2001-01\n").unwrap();
    assert_eq!(code(&["ingest", p(&bad), "--out", p(&dir.path().join("x"))]), Some(3));
    let garbage = dir.path().join("garbage.tsv");
    std::fs::write(&garbage, "not a tensor\n").unwrap();
    assert_eq!(code(&["fit", "--data", p(&garbage), "--out", p(dir.path())]), Some(3));
}
