use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nat_core::noise::{self, Symbol};
use nat_core::{parse_conll, write_conll, Scheme};
use tempfile::TempDir;

fn nat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nat")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = nat(args);
    assert!(out.status.success(), "nat {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = nat(args);
    assert!(!out.status.success(), "nat {args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new(train: usize) -> Self {
        let dir = TempDir::new().unwrap();
        let out = dir.path().to_str().unwrap().to_string();
        ok(&["generate-corpus", "--train-sentences", &train.to_string(), "--dev-sentences", "15", "--test-sentences", "20", "--seed", "3", "--out-dir", &out]);
        Workspace { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, contents: &str) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, contents).unwrap();
        p
    }

    fn make_noise(&self, eta: &str, name: &str) -> PathBuf {
        let out = self.path(name);
        ok(&["make-noise", "--eta", eta, "--alphabet-from", s(&self.path("train.conll")), "--out", s(&out)]);
        out
    }

    fn train(&self, config: &str, model: &str) -> (PathBuf, PathBuf) {
        let cfg = self.write(&format!("{model}.toml"), config);
        let out = self.path(model);
        let report = self.path(&format!("{model}.csv"));
        ok(&[
            "train", "--train", s(&self.path("train.conll")), "--dev", s(&self.path("dev.conll")), "--config", s(&cfg),
            "--seed", "5", "--model-out", s(&out), "--report", s(&report),
        ]);
        (out, report)
    }
}

const TOY: &str = "max_epochs = 2\n[model]\nword_dim = 8\nchar_dim = 4\nchar_hidden = 4\nhidden = 8\ndropout = 0.0\n";

#[test]
fn generated_corpus_parses() {
    let w = Workspace::new(30);
    let train = parse_conll(&fs::read_to_string(w.path("train.conll")).unwrap(), Scheme::Bioes).unwrap();
    assert_eq!(train.len(), 30);
}

#[test]
fn make_noise_round_trips_and_validates_eta() {
    let w = Workspace::new(30);
    let m = noise::load(&fs::read_to_string(w.make_noise("0.1", "v.tsv")).unwrap()).unwrap();
    let c = m.alphabet().chars()[0];
    assert!((m.edit_masses(Symbol::Char(c)).deletion - 0.1 / 3.0).abs() < 1e-12);

    let id = noise::load(&fs::read_to_string(w.make_noise("0.0", "id.tsv")).unwrap()).unwrap();
    assert_eq!(id.prob(Symbol::Char(c), Symbol::Char(c)), 1.0);

    fails(&["make-noise", "--eta", "1.5", "--alphabet-from", s(&w.path("train.conll")), "--out", s(&w.path("bad.tsv"))]);
    assert!(!w.path("bad.tsv").exists());
    let out = nat(&["make-noise", "--eta", "0.3", "--alphabet-from", s(&w.path("train.conll")), "--out", s(&w.path("hi.tsv"))]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
}

#[test]
fn estimate_noise_reports_cer_and_missing_files() {
    let w = Workspace::new(5);
    let pairs = w.write("pairs.txt", "Helo wrld\nHello world\n\nteh cat\nthe cat\n");
    let out = ok(&["estimate-noise", "--pairs", s(&pairs), "--out", s(&w.path("m.tsv"))]);
    assert!(out.contains("CER"));
    noise::load(&fs::read_to_string(w.path("m.tsv")).unwrap()).unwrap();

    let same = w.write("same.txt", "the cat\nthe cat\n");
    let out = ok(&["estimate-noise", "--pairs", s(&same), "--smoothing", "0", "--out", s(&w.path("same.tsv"))]);
    assert!(out.contains("CER 0\n"), "{out}");

    let err = fails(&["estimate-noise", "--pairs", "/no/such/pairs.txt", "--out", s(&w.path("x.tsv"))]);
    assert!(err.contains("/no/such/pairs.txt"));
}

#[test]
fn perturb_is_deterministic_and_identity_preserving() {
    let w = Workspace::new(400);
    let train = w.path("train.conll");
    let id = w.make_noise("0.0", "id.tsv");
    ok(&["perturb", "--corpus", s(&train), "--matrix", s(&id), "--seed", "1", "--out", s(&w.path("same.conll"))]);
    assert_eq!(fs::read_to_string(w.path("same.conll")).unwrap(), fs::read_to_string(&train).unwrap());

    let v = w.make_noise("0.1", "v.tsv");
    let run = |name: &str| {
        let out = ok(&["perturb", "--corpus", s(&train), "--matrix", s(&v), "--seed", "8", "--out", s(&w.path(name))]);
        (out, fs::read_to_string(w.path(name)).unwrap())
    };
    let (out_a, a) = run("a.conll");
    let (_, b) = run("b.conll");
    assert_eq!(a, b);
    let cer: f64 = out_a.trim().strip_prefix("CER ").unwrap().parse().unwrap();
    assert!((0.08..=0.12).contains(&cer), "CER {cer}");

    let clean = parse_conll(&fs::read_to_string(&train).unwrap(), Scheme::Bioes).unwrap();
    let noisy = parse_conll(&a, Scheme::Bioes).unwrap();
    for (c, n) in clean.sentences().iter().zip(noisy.sentences()) {
        assert_eq!(c.labels(), n.labels());
    }
    fails(&["perturb", "--corpus", s(&train), "--matrix", s(&v), "--out", s(&w.path("c.conll"))]);
}

#[test]
fn perturb_canonicalizes_input() {
    let w = Workspace::new(5);
    let raw = w.write("raw.conll", "-DOCSTART- O\n\nJohn NNP B-PER\nSmith NNP I-PER\nran VBD O\n");
    let id = w.make_noise("0.0", "id.tsv");
    ok(&["perturb", "--corpus", s(&raw), "--matrix", s(&id), "--seed", "1", "--out", s(&w.path("out.conll"))]);
    let expected = write_conll(&parse_conll(&fs::read_to_string(&raw).unwrap(), Scheme::Bioes).unwrap());
    assert_eq!(fs::read_to_string(w.path("out.conll")).unwrap(), expected);
    assert!(expected.contains("Smith\tE-PER"));
}

#[test]
fn train_eval_analyze_pipeline() {
    let w = Workspace::new(40);
    let (model, report) = w.train(TOY, "std.json");
    assert!(model.exists());
    let csv = fs::read_to_string(&report).unwrap();
    assert!(csv.lines().count() - 1 <= 2);
    let rerun = w.train(TOY, "std2.json").1;
    assert_eq!(fs::read_to_string(rerun).unwrap(), csv);

    let augm = format!("objective = \"augment\"\nalpha = 1.0\neta_train = 0.1\n{TOY}");
    let (_, augm_report) = w.train(&augm, "augm.json");
    let augm_csv = fs::read_to_string(augm_report).unwrap();
    let header: Vec<&str> = augm_csv.lines().next().unwrap().split(',').collect();
    let (ci, ni) = (header.iter().position(|h| *h == "loss_clean").unwrap(), header.iter().position(|h| *h == "loss_noisy").unwrap());
    for line in augm_csv.lines().skip(1) {
        let f: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!(f[ci] > 0.0 && f[ni] > 0.0);
    }

    let test = w.path("test.conll");
    let clean_only = ok(&["eval", "--model", s(&model), "--test", s(&test), "--seed", "1"]);
    assert_eq!(clean_only.lines().count(), 2);

    let id = w.make_noise("0.0", "id.tsv");
    let v = w.make_noise("0.1", "v.tsv");
    let prefix = w.path("eval");
    let matrix_id = format!("identity={}", s(&id));
    let matrix_v = format!("vanilla={}", s(&v));
    ok(&["eval", "--model", s(&model), "--test", s(&test), "--matrix", &matrix_id, "--matrix", &matrix_v, "--seeds", "5", "--seed", "2", "--out-prefix", s(&prefix)]);
    let long = fs::read_to_string(w.path("eval.long.csv")).unwrap();
    assert_eq!(long.lines().filter(|l| l.starts_with("vanilla,")).count(), 5);
    let summary = fs::read_to_string(w.path("eval.summary.csv")).unwrap();
    let clean_f1 = summary.lines().nth(1).unwrap().split(',').nth(1).unwrap().to_string();
    let identity: Vec<&str> = summary.lines().nth(2).unwrap().split(',').collect();
    assert_eq!(identity, ["identity", clean_f1.as_str(), "0"]);

    let analysis = w.path("analysis.csv");
    ok(&["analyze", "--model", s(&model), "--clean", s(&test), "--noisy", s(&test), "--out", s(&analysis)]);
    let rows: Vec<Vec<String>> = fs::read_to_string(&analysis).unwrap().lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect();
    let tokens = parse_conll(&fs::read_to_string(&test).unwrap(), Scheme::Bioes).unwrap().token_count();
    let distance_total: usize = rows.iter().filter(|r| r[0] == "distance").map(|r| r[2].parse::<usize>().unwrap()).sum();
    assert_eq!(distance_total, tokens);
    assert!(rows.iter().filter(|r| r[0] == "class_perturbed").all(|r| r[2] == "0"));
    assert!(rows.iter().filter(|r| r[0] == "distance" && r[1] != "0").all(|r| r[2] == "0"));

    let dev = w.path("dev.conll");
    let err = fails(&["analyze", "--model", s(&model), "--clean", s(&test), "--noisy", s(&dev), "--out", s(&w.path("x.csv"))]);
    assert!(err.contains("not token-aligned"));
}

#[test]
fn bad_config_exits_nonzero() {
    let w = Workspace::new(10);
    let cfg = w.write("bad.toml", "alpah = 1.0\n");
    let err = fails(&[
        "train", "--train", s(&w.path("train.conll")), "--dev", s(&w.path("dev.conll")), "--config", s(&cfg), "--seed", "1",
        "--model-out", s(&w.path("m.json")),
    ]);
    assert!(err.contains("bad.toml"));
    assert!(!w.path("m.json").exists());
}

#[test]
fn sweep_writes_one_row_per_cell_and_seed() {
    let w = Workspace::new(30);
    let cfg = w.write("base.toml", TOY);
    let out = w.path("sweep.csv");
    let p = |n: &str| w.path(n).to_str().unwrap().to_string();
    ok(&[
        "sweep", "--train", &p("train.conll"), "--dev", &p("dev.conll"), "--test", &p("test.conll"), "--alphas", "0,1",
        "--etas", "0.1", "--objective", "augment", "--seeds", "2", "--seed", "4", "--config", s(&cfg), "--out", s(&out),
    ]);
    let csv = fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("objective,alpha,eta_train,seed,f1_clean,f1_noisy\n"));
    assert_eq!(csv.lines().count(), 1 + 2 * 2);
    fails(&[
        "sweep", "--train", &p("train.conll"), "--dev", &p("dev.conll"), "--test", &p("test.conll"), "--alphas", "",
        "--etas", "0.1", "--objective", "augment", "--seed", "4", "--out", s(&out),
    ]);
}

#[test]
fn unknown_flags_are_rejected() {
    let err = fails(&["perturb", "--corpsu", "x"]);
    assert!(err.contains("--corpsu"));
}
