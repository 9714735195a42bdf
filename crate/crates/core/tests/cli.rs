use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::sync::Arc;

use linkrec::cli::sidecar_vocab_path;
use linkrec::data::ItemVocab;
use linkrec::dense::DenseMatrix;
use linkrec::model::{read_model, write_model, ItemItemModel};
use linkrec::solver::{ModelKind, SolverConfig};
use linkrec::teacher::read_teacher;

fn linkrec(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_linkrec"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = linkrec(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Ten sessions over items a..e, one per minute.
fn toy_log(dir: &Path) {
    let sessions = [
        "a b c", "a b", "b c d", "c d e", "a c", "b d", "a b c d", "d e", "a e", "b c",
    ];
    let mut log = String::new();
    let mut t = 0;
    for (k, s) in sessions.iter().enumerate() {
        for item in s.split(' ') {
            t += 60;
            log.push_str(&format!("u{k},{item},{t}\n"));
        }
    }
    fs::write(dir.join("log.csv"), log).unwrap();
}

fn split_toy(dir: &Path) {
    toy_log(dir);
    ok(dir, &["split", "--input", "log.csv", "--output-dir", "sp", "--data.min_item_freq", "1"]);
}

fn train(dir: &Path, output: &str, extra: &[&str]) -> String {
    let mut args = vec!["train", "--train", "sp/train.csv", "--vocab", "sp/vocab.txt", "--output", output];
    args.extend_from_slice(extra);
    ok(dir, &args)
}

fn read(dir: &Path, model: &str) -> ItemItemModel<f64> {
    let path = dir.join(model);
    let vocab = Arc::new(ItemVocab::read(sidecar_vocab_path(&path)).unwrap());
    read_model(path, vocab).unwrap()
}

#[test]
fn split_writes_eight_one_one_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    split_toy(d);
    let stats = ok(d, &["split", "--input", "log.csv", "--output-dir", "again", "--data.min_item_freq", "1"]);
    assert!(stats.contains("train_sessions 8\nvalid_sessions 1\ntest_sessions 1"), "{stats}");
    for f in ["train.csv", "valid.csv", "test.csv", "vocab.txt"] {
        assert_eq!(fs::read(d.join("sp").join(f)).unwrap(), fs::read(d.join("again").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn split_that_filters_everything_fails() {
    let dir = tempfile::tempdir().unwrap();
    toy_log(dir.path());
    let out = linkrec(dir.path(), &["split", "--input", "log.csv", "--output-dir", "sp", "--data.min_item_freq", "100"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no sessions left"));
}

#[test]
fn transition_models_need_a_teacher() {
    let dir = tempfile::tempdir().unwrap();
    split_toy(dir.path());
    for kind in ["nit", "link"] {
        let out = linkrec(
            dir.path(),
            &["train", "--train", "sp/train.csv", "--vocab", "sp/vocab.txt", "--output", "m.iim", "--model.kind", kind],
        );
        assert_eq!(out.status.code(), Some(1), "{kind}");
        assert!(!dir.path().join("m.iim").exists());
    }
}

#[test]
fn limit_settings_reproduce_simpler_models() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    split_toy(d);
    ok(d, &["extract-teacher", "--train", "sp/train.csv", "--vocab", "sp/vocab.txt", "--output", "t.tch"]);
    train(d, "s.iim", &["--model.kind", "s"]);
    train(d, "lis.iim", &["--model.kind", "lis", "--solver.beta", "0"]);
    train(d, "nit.iim", &["--model.kind", "nit", "--teacher", "t.tch"]);
    let summary = train(d, "link.iim", &["--model.kind", "link", "--solver.alpha", "0", "--teacher", "t.tch"]);
    assert!(summary.starts_with("trained kind=link n=5 sessions=8"), "{summary}");
    assert_eq!(read(d, "s.iim").matrix, read(d, "lis.iim").matrix);
    assert_eq!(read(d, "nit.iim").matrix, read(d, "link.iim").matrix);
    // the markov flag builds the same teacher in process
    train(d, "link_markov.iim", &["--model.kind", "link", "--solver.alpha", "0", "--markov-teacher"]);
    assert_eq!(fs::read(d.join("link.iim")).unwrap(), fs::read(d.join("link_markov.iim")).unwrap());
}

#[test]
fn extracted_teacher_matches_transition_counts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    split_toy(d);
    ok(d, &["extract-teacher", "--train", "sp/train.csv", "--vocab", "sp/vocab.txt", "--output", "t.tch"]);
    ok(d, &["extract-teacher", "--train", "sp/train.csv", "--vocab", "sp/vocab.txt", "--output", "t2.tch"]);
    assert_eq!(fs::read(d.join("t.tch")).unwrap(), fs::read(d.join("t2.tch")).unwrap());
    ok(d, &[
        "extract-teacher", "--train", "sp/train.csv", "--vocab", "sp/vocab.txt", "--output", "cold.tch", "--solver.tau", "0.01",
    ]);

    let vocab = Arc::new(ItemVocab::read(d.join("t.tch.vocab")).unwrap());
    let t = read_teacher::<f64>(d.join("t.tch"), Some(&vocab)).unwrap();
    let cold = read_teacher::<f64>(d.join("cold.tch"), Some(&vocab)).unwrap();
    // count table from the eight train sessions written by split
    let train = fs::read_to_string(d.join("sp/train.csv")).unwrap();
    let rows: Vec<Vec<&str>> = train.lines().map(|l| l.split(',').collect()).collect();
    let n = vocab.len();
    let mut counts = vec![vec![0.0; n]; n];
    for w in rows.windows(2) {
        if w[0][0] == w[1][0] {
            counts[vocab.index_of(w[0][1]).unwrap()][vocab.index_of(w[1][1]).unwrap()] += 1.0;
        }
    }
    let entropy = |row: &[f64]| -> f64 { row.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum() };
    for i in 0..n {
        let total: f64 = counts[i].iter().map(|c| c + 1.0).sum();
        for j in 0..n {
            assert!((t.matrix[(i, j)] - (counts[i][j] + 1.0) / total).abs() < 1e-12);
        }
        if counts[i].iter().any(|&c| c != counts[i][0]) {
            assert!(entropy(cold.matrix.row(i)) < entropy(t.matrix.row(i)));
        }
    }
}

fn identity_model(dir: &Path, tokens: &[&str]) {
    let vocab = Arc::new(ItemVocab::from_tokens(tokens.iter().copied()).unwrap());
    let n = vocab.len();
    let model = ItemItemModel::new(DenseMatrix::<f64>::identity(n), vocab.clone(), ModelKind::Nit, SolverConfig::default(), 1.0)
        .unwrap();
    write_model(&model, dir.join("id.iim")).unwrap();
    vocab.write(dir.join("id.iim.vocab")).unwrap();
}

#[test]
fn evaluate_identity_model_by_hand() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    identity_model(d, &["a", "b", "c", "d"]);
    fs::write(d.join("train.csv"), "t1,a,1\nt1,a,2\nt1,b,3\nt2,c,4\nt2,d,5\n").unwrap();
    // one session a b: prefix [a] ranks a, b, c, d so the target b sits at rank 2
    fs::write(d.join("test.csv"), "x,a,10\nx,b,11\n").unwrap();
    let text = ok(d, &[
        "evaluate", "--model", "id.iim", "--test", "test.csv", "--train", "train.csv", "--output", "rep", "--eval.ks", "[1,5,20]",
    ]);
    assert_eq!(fs::read_to_string(d.join("rep.txt")).unwrap(), text);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("rep.json")).unwrap()).unwrap();
    assert_eq!(json["predictions"], 1);
    assert_eq!(json["flops_per_prediction"], 8);
    assert_eq!(json["recall@1"], 0.0);
    assert_eq!(json["recall@5"], 1.0);
    assert_eq!(json["mrr@20"], 0.5);
    assert!((json["ndcg@20"].as_f64().unwrap() - 1.0 / 3f64.log2()).abs() < 1e-12);
    // head is the single most frequent train item, a
    assert_eq!(json["head.predictions"], 0);
    assert_eq!(json["tail.predictions"], 1);
    assert!(text.contains("recall@5 1\n") && text.contains("recall@20 1\n"), "{text}");
}

#[test]
fn evaluate_missing_model_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("t.csv"), "x,a,1\nx,b,2\n").unwrap();
    let out = linkrec(dir.path(), &["evaluate", "--model", "nope.iim", "--test", "t.csv", "--train", "t.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn predict_prints_ranked_tokens() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    identity_model(d, &["a", "b", "c"]);
    let out = ok(d, &["predict", "--model", "id.iim", "--items", "b", "-n", "2"]);
    let first: Vec<&str> = out.lines().next().unwrap().split('\t').collect();
    assert_eq!(&first[..2], ["1", "b"]);
    assert_eq!(out.lines().count(), 2);

    let out = linkrec(d, &["predict", "--model", "id.iim", "--items", "zz,c"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("zz"));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("1\tc\t"));

    assert_eq!(ok(d, &["predict", "--model", "id.iim", "--items", "a", "-n", "0"]), "");
    let seen = ok(d, &["predict", "--model", "id.iim", "--items", "a", "-n", "1", "--eval.exclude_seen", "true"]);
    assert!(seen.starts_with("1\tb\t"), "{seen}");
}

#[test]
fn config_is_validated_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("run.toml"), "[solver]\nlambda = -1.0\n").unwrap();
    let out = linkrec(d, &["--config", "run.toml", "split", "--input", "missing.csv", "--output-dir", "sp"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!d.join("sp").exists());
    let out = linkrec(d, &["split", "--input", "missing.csv", "--output-dir", "sp", "--eval.bogus", "1"]);
    assert_eq!(out.status.code(), Some(1));
    // a valid file plus an override reaches the data stage
    fs::write(d.join("run.toml"), "[solver]\nlambda = 5.0\n").unwrap();
    let out = linkrec(d, &["--config", "run.toml", "split", "--input", "missing.csv", "--output-dir", "sp", "--solver.xi", "0.2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn shipped_config_loads() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
    let cfg = linkrec::config::RunConfig::load(Some(&path), &[]).unwrap();
    assert_eq!(cfg, linkrec::config::RunConfig::default());
}

/// Builds a teacher file field by field, the way an external exporter would.
fn exported_teacher(rows: &[Vec<f64>], tau: f64) -> Vec<u8> {
    let n = rows.len() as u32;
    let mut bytes = b"TCH1".to_vec();
    bytes.extend_from_slice(&n.to_le_bytes());
    bytes.push(0);
    bytes.extend_from_slice(&tau.to_le_bytes());
    for v in rows.iter().flatten() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes.extend_from_slice(&n.to_le_bytes());
    bytes
}

#[test]
fn externally_written_teacher_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    split_toy(d);
    let n = ItemVocab::read(d.join("sp/vocab.txt")).unwrap().len();
    let uniform = vec![vec![1.0 / n as f64; n]; n];
    fs::write(d.join("ext.tch"), exported_teacher(&uniform, 0.5)).unwrap();
    train(d, "nit.iim", &["--model.kind", "nit", "--teacher", "ext.tch"]);
    // matches the in-process uniform teacher
    let vocab = Arc::new(ItemVocab::read(d.join("sp/vocab.txt")).unwrap());
    let t = read_teacher::<f64>(d.join("ext.tch"), Some(&vocab)).unwrap();
    assert_eq!(t.matrix, linkrec::Teacher::uniform(n).matrix);
    assert_eq!(t.tau, 0.5);

    let mut bad = uniform.clone();
    bad[1] = vec![0.5 / n as f64; n];
    fs::write(d.join("bad.tch"), exported_teacher(&bad, 1.0)).unwrap();
    let out = linkrec(d, &["train", "--train", "sp/train.csv", "--vocab", "sp/vocab.txt", "--output", "x.iim", "--model.kind", "nit", "--teacher", "bad.tch"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 1"), "{}", String::from_utf8_lossy(&out.stderr));

    let small = vec![vec![1.0 / (n - 1) as f64; n - 1]; n - 1];
    fs::write(d.join("small.tch"), exported_teacher(&small, 1.0)).unwrap();
    let out = linkrec(d, &["train", "--train", "sp/train.csv", "--vocab", "sp/vocab.txt", "--output", "x.iim", "--model.kind", "nit", "--teacher", "small.tch"]);
    assert_eq!(out.status.code(), Some(2));
}
