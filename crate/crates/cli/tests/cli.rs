use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use embcomp::codec::{write_file, BudgetSpec};
use embcomp::embed_io::{load_text, save_text, Vocabulary};
use embcomp::eval::cosine;
use embcomp::synth::factor_embedding;
use embcomp::wta::SparseEncoding;
use ndarray::{array, Array1, Array2};
use tempfile::TempDir;

fn embc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_embc"))
        .args(args)
        .env_remove("EMBC_THREADS")
        .output()
        .expect("binary runs")
}

fn status(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn ok(args: &[&str]) -> String {
    let out = embc(args);
    assert_eq!(
        status(&out),
        0,
        "embc {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 output")
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().expect("temp dir"),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn s(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }

    /// Small structured embedding plus a similarity file scored by its own
    /// cosines.
    fn embedding(&self, v: usize, d: usize) -> (String, String) {
        let e = factor_embedding(v, d, 4, 1);
        save_text(&e, self.path("emb.txt")).unwrap();
        let mut lines = String::new();
        for i in 0..20 {
            let (a, b) = (i, (i * 7 + 3) % v);
            let c = cosine(&e.row(a).to_vec(), &e.row(b).to_vec()).unwrap();
            lines.push_str(&format!(
                "{} {} {c}\n",
                e.vocab().word(a),
                e.vocab().word(b)
            ));
        }
        std::fs::write(self.path("sim.txt"), lines).unwrap();
        (self.s("emb.txt"), self.s("sim.txt"))
    }
}

fn sidecar(path: &str) -> String {
    std::fs::read_to_string(format!("{path}.run")).expect("run record written")
}

fn tsv_metric(stdout: &str) -> f64 {
    stdout
        .lines()
        .next()
        .unwrap()
        .split('\t')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap()
}

#[test]
fn quantize_dequantize_eval_pipeline() {
    let f = Fixture::new();
    let (emb, sim) = f.embedding(200, 16);
    let dense = tsv_metric(&ok(&["eval-sim", &emb, "--dataset", &sim, "--tsv"]));
    assert!(
        (dense - 1.0).abs() < 1e-12,
        "self-derived scores give rho 1, got {dense}"
    );

    ok(&["quantize", &emb, "-o", &f.s("q.lqe"), "--levels", "8"]);
    ok(&["dequantize", &f.s("q.lqe"), "-o", &f.s("deq.txt")]);
    let lloyd = tsv_metric(&ok(&[
        "eval-sim",
        &f.s("deq.txt"),
        "--dataset",
        &sim,
        "--tsv",
    ]));
    let direct = tsv_metric(&ok(&[
        "eval-sim",
        &f.s("q.lqe"),
        "--dataset",
        &sim,
        "--tsv",
    ]));
    assert_eq!(lloyd, direct);
    assert!(lloyd > 0.9, "lloyd-8 keeps the ranking, got {lloyd}");
    assert!(sidecar(&f.s("q.lqe")).contains("levels=8\n"));
}

#[test]
fn single_level_is_constant_per_dimension() {
    let f = Fixture::new();
    let (emb, _) = f.embedding(50, 4);
    ok(&["quantize", &emb, "-o", &f.s("q1.lqe"), "--levels", "1"]);
    ok(&["dequantize", &f.s("q1.lqe"), "-o", &f.s("q1.txt")]);
    let e = load_text(f.path("q1.txt"), None).unwrap();
    for col in e.matrix().columns() {
        assert!(col.iter().all(|&v| v == col[0]));
    }
}

#[test]
fn missing_input_is_a_usage_error() {
    let f = Fixture::new();
    let out = embc(&["quantize", &f.s("absent.txt"), "-o", &f.s("q.lqe")]);
    assert_eq!(status(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.txt"));
}

#[test]
fn malformed_arguments_exit_2() {
    assert_eq!(status(&embc(&["quantize"])), 2);
    assert_eq!(status(&embc(&["frobnicate"])), 2);
    assert_eq!(status(&embc(&["--version"])), 0);
}

#[test]
fn unknown_eval_task_exits_2() {
    let f = Fixture::new();
    let (emb, sim) = f.embedding(30, 4);
    let out = embc(&["eval", "--task", "ranking", &emb, "--dataset", &sim]);
    assert_eq!(status(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown task"));
    let rho = tsv_metric(&ok(&[
        "eval",
        "--task",
        "sim",
        &emb,
        "--dataset",
        &sim,
        "--tsv",
    ]));
    assert!((rho - 1.0).abs() < 1e-12);
}

#[test]
fn budget_derived_alpha_is_logged() {
    let f = Fixture::new();
    let (emb, _) = f.embedding(40, 4);
    let out = embc(&[
        "-v",
        "train",
        &emb,
        "-o",
        &f.s("a.sne"),
        "--k",
        "1024",
        "--budget-bits",
        "900",
        "--epochs",
        "1",
        "--batch-size",
        "40",
    ]);
    assert_eq!(status(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha = 6.76% (from budget)"));
    assert!(sidecar(&f.s("a.sne")).contains("alpha_source=budget\n"));

    ok(&[
        "train",
        &emb,
        "-o",
        &f.s("b.sne"),
        "--k",
        "1024",
        "--alpha",
        "0.1",
        "--epochs",
        "1",
        "--batch-size",
        "40",
    ]);
    let run = sidecar(&f.s("b.sne"));
    assert!(run.contains("alpha=0.1\n") && run.contains("alpha_source=override\n"));
}

fn train_small(f: &Fixture, emb: &str, out: &str, extra: &[&str]) {
    let mut args = vec![
        "train",
        emb,
        "-o",
        out,
        "--k",
        "16",
        "--budget-bits",
        "24",
        "--epochs",
        "5",
        "--batch-size",
        "32",
        "--seed",
        "4",
    ];
    args.extend_from_slice(extra);
    ok(&args);
    assert!(f.path("emb.txt").exists());
}

#[test]
fn training_is_deterministic_and_decodes_to_its_reconstruction() {
    let f = Fixture::new();
    let (emb, sim) = f.embedding(120, 8);
    train_small(
        &f,
        &emb,
        &f.s("one.sne"),
        &["--checkpoint", &f.s("model.wta")],
    );
    train_small(&f, &emb, &f.s("two.sne"), &[]);
    assert_eq!(
        std::fs::read(f.path("one.sne")).unwrap(),
        std::fs::read(f.path("two.sne")).unwrap()
    );

    let log = std::fs::read_to_string(f.path("one.sne.log")).unwrap();
    assert_eq!(log.lines().filter(|l| !l.starts_with('#')).count(), 1 + 5);
    assert!(log.contains("# seed=4"));

    ok(&["decode", &f.s("one.sne"), "-o", &f.s("dec.txt")]);
    assert_eq!(
        std::fs::read(f.path("dec.txt")).unwrap(),
        std::fs::read(f.path("one.sne.recon.txt")).unwrap()
    );
    ok(&[
        "decode",
        &f.s("one.sne"),
        "-o",
        &f.s("codes.txt"),
        "--raw-codes",
    ]);
    let codes = load_text(f.path("codes.txt"), None).unwrap();
    assert_eq!(codes.dim(), 16);
    assert!(codes.matrix().iter().all(|&v| v >= 0.0));

    ok(&["eval-sim", &f.s("one.sne"), "--dataset", &sim]);
    ok(&[
        "eval-sim",
        &f.s("one.sne"),
        "--dataset",
        &sim,
        "--raw-codes",
    ]);
    assert_eq!(
        status(&embc(&["eval-sim", &emb, "--dataset", &sim, "--raw-codes"])),
        2
    );

    ok(&[
        "encode",
        &emb,
        "--model",
        &f.s("model.wta"),
        "--budget-bits",
        "24",
        "-o",
        &f.s("re.sne"),
    ]);
    ok(&["decode", &f.s("re.sne"), "-o", &f.s("re.txt")]);
    assert_eq!(load_text(f.path("re.txt"), None).unwrap().len(), 120);
}

#[test]
fn lsh_defaults_and_eval() {
    let f = Fixture::new();
    let (emb, sim) = f.embedding(100, 16);
    ok(&["lsh", &emb, "-o", &f.s("sig.lsh")]);
    let run = sidecar(&f.s("sig.lsh"));
    assert!(run.contains("bits=900\n") && run.contains("seed=0\n"));
    let rho = tsv_metric(&ok(&[
        "eval-sim",
        &f.s("sig.lsh"),
        "--dataset",
        &sim,
        "--tsv",
    ]));
    assert!(
        rho > 0.8,
        "900-bit signatures track cosine ranks, got {rho}"
    );
}

#[test]
fn analogy_reports_both_methods() {
    let f = Fixture::new();
    let rows = [
        ("man", [1.0, 0.0, 0.0, 0.0]),
        ("king", [1.0, 1.0, 0.0, 0.0]),
        ("woman", [0.0, 0.0, 1.0, 0.0]),
        ("queen", [0.0, 1.0, 1.0, 0.0]),
        ("apple", [0.0, 0.0, 0.0, 1.0]),
    ];
    let text: String = rows
        .iter()
        .map(|(w, v)| format!("{w} {}\n", v.map(|x| x.to_string()).join(" ")))
        .collect();
    std::fs::write(f.path("toy.txt"), text).unwrap();
    std::fs::write(
        f.path("q.txt"),
        ": family\nman king woman queen\nman king girl princess\n",
    )
    .unwrap();
    let out = ok(&[
        "eval-analogy",
        &f.s("toy.txt"),
        "--dataset",
        &f.s("q.txt"),
        "--tsv",
    ]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(
        lines,
        [
            "q/add\t1.000000\t0.500000\t1",
            "q/mul\t1.000000\t0.500000\t1"
        ]
    );
    let only_mul = ok(&[
        "eval-analogy",
        &f.s("toy.txt"),
        "--dataset",
        &f.s("q.txt"),
        "--method",
        "mul",
        "--tsv",
    ]);
    assert_eq!(only_mul.lines().count(), 1);
}

fn interpret_fixture(path: &Path) {
    let vocab = Vocabulary::new(
        ["motorbike", "car", "tyre", "apple"]
            .map(String::from)
            .to_vec(),
    )
    .unwrap();
    // successive ratios of 1.0 and 0.7 sit exactly on the codec's grid
    let codes = array![
        [0.875, 0.0, 0.875, 0.0],
        [0.5, 0.0, 0.0, 0.0],
        [1.0, 0.0, 0.7, 0.0],
        [0.0, 0.0, 0.0, 0.0],
    ];
    let enc = SparseEncoding::new(vocab, codes, Array2::zeros((4, 2)), Array1::zeros(2)).unwrap();
    write_file(&enc, BudgetSpec::new(8, 4).unwrap(), path).unwrap();
}

#[test]
fn interpret_lists_known_words() {
    let f = Fixture::new();
    interpret_fixture(&f.path("fix.sne"));
    let out = ok(&[
        "interpret",
        &f.s("fix.sne"),
        "--word",
        "motorbike",
        "--dims",
        "2",
        "--top",
        "2",
    ]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(
        lines[0].starts_with("0\t") && lines[0].ends_with("tyre:1.000 motorbike:0.875"),
        "{out}"
    );
    assert!(
        lines[1].starts_with("2\t") && lines[1].ends_with("motorbike:0.875 tyre:0.700"),
        "{out}"
    );

    let oov = embc(&["interpret", &f.s("fix.sne"), "--word", "bus"]);
    assert_eq!(status(&oov), 2);
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let f = Fixture::new();
    let (emb, _) = f.embedding(40, 4);
    std::fs::write(
        f.path("run.conf"),
        "# sweep defaults\nlevels=2\nbits = 64\n",
    )
    .unwrap();
    let conf = f.s("run.conf");
    ok(&["--config", &conf, "quantize", &emb, "-o", &f.s("c.lqe")]);
    assert!(sidecar(&f.s("c.lqe")).contains("levels=2\n"));
    ok(&[
        "quantize",
        &emb,
        "-o",
        &f.s("d.lqe"),
        "--levels",
        "4",
        "--config",
        &conf,
    ]);
    assert!(sidecar(&f.s("d.lqe")).contains("levels=4\n"));
    ok(&["--config", &conf, "lsh", &emb, "-o", &f.s("s.lsh")]);
    assert!(sidecar(&f.s("s.lsh")).contains("bits=64\n"));

    std::fs::write(f.path("bad.conf"), "levels=lots\n").unwrap();
    assert_eq!(
        status(&embc(&[
            "--config",
            &f.s("bad.conf"),
            "quantize",
            &emb,
            "-o",
            &f.s("e.lqe")
        ])),
        2
    );
}

#[test]
fn thread_cap_is_validated() {
    let f = Fixture::new();
    let (emb, _) = f.embedding(30, 4);
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_embc"))
            .args(["quantize", &emb, "-o", &f.s("t.lqe")])
            .env("EMBC_THREADS", threads)
            .output()
            .unwrap()
    };
    assert_eq!(status(&run("1")), 0);
    assert_eq!(status(&run("0")), 2);
    assert_eq!(status(&run("many")), 2);
}
