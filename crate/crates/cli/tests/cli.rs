use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_domtext"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SYNTH: &str = r#"
labels = 2
train_domains = 2
heldout_domains = 1
docs_per_domain_label = 20
doc_len = 12
nu = 0.25
mu = 0.1
rho = 0.3
noise_vocab = 30
seed = 3
"#;

fn run_config(kind: &str, extra: &str) -> String {
    format!(
        r#"
[model]
kind = "{kind}"
{extra}

[tokenizer]
mode = "word"
max_len = 12

[hyper]
embed_dim = 4
conv_specs = [{{ width = 2, filters = 3 }}, {{ width = 3, filters = 3 }}]
learning_rate = 0.01
lambda_d = 0.1
lambda_g = 0.1

[train]
epochs = 3
batch_size = 8
dev_fraction = 0.0
"#
    )
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        fs::write(dir.path().join("synth.toml"), SYNTH).unwrap();
        let o = run(&[
            "synth",
            "--config",
            dir.path().join("synth.toml").to_str().unwrap(),
            "--out",
            dir.path().join("data").to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        Fixture { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn p(&self, name: &str) -> String {
        self.path(name).to_str().unwrap().to_string()
    }

    fn train(&self, kind: &str, extra: &str, tag: &str) -> Output {
        let cfg = self.path(&format!("{tag}.toml"));
        fs::write(&cfg, run_config(kind, extra)).unwrap();
        run(&[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--data",
            &self.p("data/train.jsonl"),
            "--model",
            &self.p(&format!("{tag}.model")),
            "--out",
            &self.p(&format!("{tag}.metrics.json")),
        ])
    }
}

fn report(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gradcheck_default_run_passes() {
    let o = run(&["gradcheck"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    let out = stdout(&o);
    for name in ["embedding", "conv bank", "dropout (eval)", "linear", "gradient reversal", "model gen"] {
        assert!(out.contains(name), "missing {name} in\n{out}");
    }
}

#[test]
fn gradcheck_catches_corrupted_backward() {
    let o = run(&["gradcheck", "--corrupt-linear"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn gradcheck_is_deterministic_and_sizes_parse() {
    let a = run(&["gradcheck", "--seed", "4", "--sizes", "L=9,K=2"]);
    let b = run(&["gradcheck", "--seed", "4", "--sizes", "L=9,K=2"]);
    assert!(a.status.success());
    assert_eq!(stdout(&a), stdout(&b));
    assert_eq!(run(&["gradcheck", "--sizes", "Z=1"]).status.code(), Some(2));
}

#[test]
fn synth_writes_counted_deterministic_files() {
    let f = Fixture::new();
    let train = fs::read_to_string(f.path("data/train.jsonl")).unwrap();
    let held = fs::read_to_string(f.path("data/heldout.jsonl")).unwrap();
    assert_eq!(train.lines().count(), 2 * 2 * 20);
    assert_eq!(held.lines().count(), 2 * 20);
    let o = run(&["synth", "--config", &f.p("synth.toml"), "--out", &f.p("again")]);
    assert!(o.status.success());
    assert_eq!(fs::read(f.path("again/train.jsonl")).unwrap(), train.as_bytes());
}

#[test]
fn synth_rejects_rates_above_one() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, SYNTH.replace("nu = 0.25", "nu = 0.8")).unwrap();
    let o = run(&["synth", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sum above 1"), "{}", stderr(&o));
}

#[test]
fn train_happy_path_and_determinism() {
    let f = Fixture::new();
    let a = f.train("gen", "adversarial = true\ngenerative = true", "a");
    assert!(a.status.success(), "{}", stderr(&a));
    let b = f.train("gen", "adversarial = true\ngenerative = true", "b");
    assert!(b.status.success());
    assert_eq!(fs::read(f.path("a.model")).unwrap(), fs::read(f.path("b.model")).unwrap());
    assert_eq!(
        fs::read(f.path("a.metrics.json")).unwrap(),
        fs::read(f.path("b.metrics.json")).unwrap()
    );
    let r = report(&f.path("a.metrics.json"));
    assert_eq!(r["model"], "gen+d+g");
    assert_eq!(r["history"].as_array().unwrap().len(), 3);
}

#[test]
fn train_without_data_is_a_usage_error() {
    let f = Fixture::new();
    fs::write(f.path("c.toml"), run_config("gen", "")).unwrap();
    let o = run(&["train", "--config", &f.p("c.toml"), "--model", &f.p("m.model")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
}

#[test]
fn train_rejects_bad_config() {
    let f = Fixture::new();
    let o = f.train("cond", "generative = true", "bad");
    assert_eq!(o.status.code(), Some(2));
    let o = f.train("gen", "unknown_key = 1", "bad2");
    assert_eq!(o.status.code(), Some(2));
    assert!(!f.path("bad.model").exists());
}

#[test]
fn evaluate_beats_majority_on_training_data() {
    let f = Fixture::new();
    assert!(f.train("baseline", "", "m").status.success());
    let o = run(&["evaluate", "--model", &f.p("m.model"), "--data", &f.p("data/train.jsonl"), "--out", &f.p("e.json")]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("ALL"));
    let r = report(&f.path("e.json"));
    // Independent tally of the majority label.
    let text = fs::read_to_string(f.path("data/train.jsonl")).unwrap();
    let mut counts = std::collections::BTreeMap::new();
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        *counts.entry(v["label"].as_str().unwrap().to_string()).or_insert(0usize) += 1;
    }
    let majority = *counts.values().max().unwrap() as f64 / text.lines().count() as f64;
    let (mut correct, mut total) = (0, 0);
    for d in r["domains"].as_array().unwrap() {
        correct += d["correct"].as_u64().unwrap();
        total += d["total"].as_u64().unwrap();
    }
    assert!(correct as f64 / total as f64 >= majority);
}

#[test]
fn evaluate_inference_modes_for_cond() {
    let f = Fixture::new();
    assert!(f.train("cond", "adversarial = true", "c").status.success());
    let eval = |mode: &str, out: &str| {
        run(&[
            "evaluate",
            "--model",
            &f.p("c.model"),
            "--data",
            &f.p("data/heldout.jsonl"),
            "--infer",
            mode,
            "--out",
            &f.p(out),
        ])
    };
    let o = eval("fixed:nowhere", "x.json");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("d00") && stderr(&o).contains("d01"), "{}", stderr(&o));

    assert!(eval("min-entropy", "me.json").status.success());
    assert!(eval("oracle", "or.json").status.success());
    assert!(eval("fixed:d01", "fx.json").status.success());
    let me = report(&f.path("me.json"))["macro_accuracy"].as_f64().unwrap();
    let or = report(&f.path("or.json"))["macro_accuracy"].as_f64().unwrap();
    assert!(or >= me, "oracle {or} < min-entropy {me}");
    let fx = report(&f.path("fx.json"));
    assert_eq!(fx["domains"][0]["routing"]["chosen"], "d01");
}

fn predict(model: &str, input: &str) -> Output {
    let mut child = bin()
        .args(["predict", "--model", model])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

#[test]
fn predict_one_line_per_input() {
    let f = Fixture::new();
    assert!(f.train("gen", "generative = true", "g").status.success());
    let o = predict(&f.p("g.model"), "lab0_1 w3 w4\n\nsomething entirely unseen\n");
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 3);
    for line in out.lines() {
        let fields: Vec<&str> = line.split('\t').collect();
        assert!(fields[0] == "c00" || fields[0] == "c01");
        let sum: f64 = fields[1]
            .split(' ')
            .map(|kv| kv.split_once('=').unwrap().1.parse::<f64>().unwrap())
            .sum();
        assert!((sum - 1.0).abs() <= 1e-9, "{sum}");
    }
    let empty = predict(&f.p("g.model"), "");
    assert!(empty.status.success());
    assert!(stdout(&empty).is_empty());
}

#[test]
fn predict_reports_routing_for_cond() {
    let f = Fixture::new();
    assert!(f.train("cond", "", "c").status.success());
    let input = f.path("in.txt");
    fs::write(&input, "lab1_0 dom0_1 w1\n").unwrap();
    let o = run(&["predict", "--model", &f.p("c.model"), "--input", input.to_str().unwrap()]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("\tdomain=d0") && out.contains("\tentropy="), "{out}");
}

#[test]
fn missing_model_file_is_a_runtime_error() {
    let o = run(&["predict", "--model", "/nonexistent/model.bin"]);
    assert_eq!(o.status.code(), Some(1));
}
