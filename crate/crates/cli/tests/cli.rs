use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ris-semcom"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TINY: &str = r#"
master_seed = 3
seeds = [1]

[data]
max_vocab = 200

[model]
batch_size = 16
max_len = 12
embed_dim = 8
num_heads = 2
num_layers = 1
ffn_width = 16
symbols_per_token = 2

[channel]
ris_elements = 4
eval_snr_db = [0, 9]
epsilon = [0.0, 0.2]

[training]
optimizer = "adam"
learning_rate = 0.01
epochs = 2
eval_batch_size = 16
"#;

fn setup(dir: &Path) {
    fs::create_dir_all(dir.join("data")).unwrap();
    fs::write(dir.join("exp.toml"), TINY).unwrap();
    for (name, count, seed) in [("train", "120", "1"), ("test", "30", "2")] {
        let o = run(
            dir,
            &[
                "synth-corpus",
                "--count",
                count,
                "--seed",
                seed,
                "--max-words",
                "10",
                "--out",
                &format!("data/{name}.txt"),
            ],
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
}

#[test]
fn train_eval_sweep_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    assert_eq!(fs::read_to_string(d.join("data/test.txt")).unwrap().lines().count(), 30);

    let o = run(d, &["train", "--config", "exp.toml"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for v in ["RIS", "POINT_TO_POINT", "UPPER_BOUND"] {
        assert!(d.join(format!("runs/{v}_seed1.rsc")).is_file());
        let log = fs::read_to_string(d.join(format!("runs/{v}_seed1.log"))).unwrap();
        assert_eq!(log.lines().count(), 3);
    }
    assert!(d.join("runs/vocab.txt").is_file());

    let o = run(
        d,
        &[
            "eval",
            "--config",
            "exp.toml",
            "--seed",
            "1",
            "--variant",
            "RIS",
            "--snr",
            "3",
            "--epsilon",
            "0.1",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.lines().nth(1).unwrap().starts_with("RIS,3,0.1,1,"), "{out}");

    let o = run(d, &["sweep", "--config", "exp.toml"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("12 rows ->"));
    let first = fs::read(d.join("runs/results.csv")).unwrap();
    assert_eq!(String::from_utf8_lossy(&first).lines().count(), 13);

    let o = run(d, &["sweep", "--config", "exp.toml", "--out", "again.csv"]);
    assert!(o.status.success());
    assert_eq!(fs::read(d.join("again.csv")).unwrap(), first);
}

#[test]
fn missing_checkpoint_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    let o = run(d, &["train", "--config", "exp.toml", "--variant", "RIS"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(d, &["sweep", "--config", "exp.toml"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(
        stderr(&o).contains("missing checkpoint for variant POINT_TO_POINT, seed 1"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.toml"), "[model]\nwidth = 3\n").unwrap();
    let o = run(d, &["train", "--config", "bad.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("ris-semcom: "));
    assert_eq!(stderr(&o).lines().count(), 1);

    fs::write(d.join("heads.toml"), "[model]\nembed_dim = 10\nnum_heads = 4\n").unwrap();
    assert_eq!(run(d, &["train", "--config", "heads.toml"]).status.code(), Some(2));
}

#[test]
fn missing_corpus_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("exp.toml"), TINY).unwrap();
    let o = run(d, &["train", "--config", "exp.toml"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("train.txt"));
    assert_eq!(run(d, &["train", "--config", "nowhere.toml"]).status.code(), Some(3));
}

#[test]
fn phase_bench_never_beaten() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "phase-bench",
        "--n",
        "8",
        "--trials",
        "50",
        "--configs",
        "200",
        "--seed",
        "4",
    ];
    let a = run(dir.path(), &args);
    assert!(a.status.success());
    let out = stdout(&a);
    assert!(out.contains("beat_count: 0"), "{out}");
    assert!(out.contains("elements: 8"));
    assert_eq!(stdout(&run(dir.path(), &args)), out);
    assert_eq!(run(dir.path(), &["phase-bench", "--n", "0"]).status.code(), Some(2));
}

#[test]
fn bleu_command() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("ref.txt"), "I have an apple\nthe cat sat on the mat\n").unwrap();
    let o = run(d, &["bleu", "ref.txt", "ref.txt", "--order", "2"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("corpus_bleu2: 1\n"), "{}", stdout(&o));
    assert!(stdout(&o).contains("mean_sentence_bleu2: 1\n"));

    fs::write(d.join("r1.txt"), "a b c d\n").unwrap();
    fs::write(d.join("c1.txt"), "a b c e\n").unwrap();
    let o = run(d, &["bleu", "r1.txt", "c1.txt"]);
    assert!(stdout(&o).contains("corpus_bleu1: 0.75\n"), "{}", stdout(&o));

    fs::write(d.join("short.txt"), "a b c d\n").unwrap();
    let o = run(d, &["bleu", "ref.txt", "short.txt"]);
    assert_eq!(o.status.code(), Some(3));
}
