use std::path::Path;
use std::process::{Command, Output};

use mvr_core::index::write_embeddings;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mvr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvr")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Queries 0..8 and candidates 100..124; query q is judged relevant to
/// candidate 100 + q and built as a noisy copy of it.
fn fixture(dir: &Path) {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (rows, dim) = (4, 8);
    let cands: Vec<(u64, Vec<f32>)> = (0..24u64)
        .map(|i| (100 + i, (0..rows * dim).map(|_| rng.random_range(-1.0f32..1.0)).collect()))
        .collect();
    let queries: Vec<(u64, Vec<f32>)> = (0..8u64)
        .map(|q| {
            let base = &cands[q as usize].1;
            (q, base[..2 * dim].iter().map(|x| x + rng.random_range(-0.05f32..0.05)).collect())
        })
        .collect();
    write_embeddings(dir.join("c.mve"), rows, dim, &cands).unwrap();
    write_embeddings(dir.join("q.mve"), 2, dim, &queries).unwrap();
    let qrels: String = (0..8).map(|q| format!("{q}\t{}\t1\n", 100 + q)).collect();
    std::fs::write(dir.join("qrels.tsv"), qrels).unwrap();
}

#[test]
fn build_search_eval_sweep_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fixture(d);
    let index = d.join("i.mvi");

    let out = stdout(&mvr(&["ingest-check", "--input", p(&d.join("c.mve"))]));
    assert!(out.starts_with("ok 24 records, 4 rows x 8 dims"), "{out}");
    let out = stdout(&mvr(&["build-index", "--input", p(&d.join("c.mve")), "--output", p(&index)]));
    assert!(out.contains("24 candidates, r_c 4, dim 8, bf16: 1536 bytes"), "{out}");

    let qpath = d.join("q.mve");
    let q = ["--index", p(&index), "--queries", p(&qpath)];
    let ranked = stdout(&mvr(&[&["search"][..], &q, &["--budget", "2:4", "--k", "3"]].concat()));
    let lines: Vec<&str> = ranked.lines().collect();
    assert_eq!(lines.len(), 8 * 3);
    for (i, line) in lines.iter().enumerate() {
        let cols: Vec<&str> = line.split('\t').collect();
        assert_eq!(cols.len(), 4);
        assert_eq!(cols[0], (i / 3).to_string());
        assert_eq!(cols[1], (i % 3 + 1).to_string());
        assert_eq!(cols[3].split('.').nth(1).unwrap().len(), 6);
    }
    assert!(lines[0].starts_with("0\t1\t100\t"), "{}", lines[0]);
    let again = stdout(&mvr(&[&["search"][..], &q, &["--budget", "2:4", "--k", "3", "--kernel", "naive"]].concat()));
    assert_eq!(ranked, again);

    let qrels_path = d.join("qrels.tsv");
    let qrels = ["--qrels", p(&qrels_path)];
    let eval = stdout(&mvr(&[&["eval"][..], &q, &qrels, &["--budget", "1:1", "--metric", "ndcg@5"]].concat()));
    let sweep = stdout(&mvr(&[&["sweep"][..], &q, &qrels, &["--ladder", "1:1,2:4", "--metric", "ndcg@5"]].concat()));
    let rows: Vec<&str> = sweep.lines().collect();
    assert_eq!(rows[0], "r_q,r_c,metric,value,flops,index_bytes");
    let first: Vec<&str> = rows[1].split(',').collect();
    assert_eq!(&first[..3], ["1", "1", "ndcg@5"]);
    assert_eq!(eval.trim_end(), format!("1:1\tndcg@5\t{}", first[3]));

    // flops + memory for the same shape matches the sweep's cost columns
    let flops = stdout(&mvr(&["flops", "--budget", "1:1", "--dim", "8", "--n", "24"]));
    assert!(flops.contains(&format!("flops\t{}\t", first[4])), "{flops}");
    assert!(flops.contains(&format!("memory\t{}\t", first[5])), "{flops}");

    let json = stdout(&mvr(&[&["sweep"][..], &q, &qrels, &["--ladder", "1:1,2:4", "--format", "json"]].concat()));
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 2);
    assert_eq!(v[1]["r_c"], 4);

    let bench = stdout(&mvr(&[&["bench"][..], &q, &["--repeats", "2"]].concat()));
    assert!(bench.contains("ms ±"), "{bench}");
}

#[test]
fn truncate_matches_direct_build() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fixture(d);
    let c = d.join("c.mve");
    stdout(&mvr(&["build-index", "--input", p(&c), "--output", p(&d.join("full.mvi"))]));
    stdout(&mvr(&["truncate", "--index", p(&d.join("full.mvi")), "--r-c", "2", "--output", p(&d.join("cut.mvi"))]));
    stdout(&mvr(&["build-index", "--input", p(&c), "--r-c", "2", "--output", p(&d.join("direct.mvi"))]));
    assert_eq!(std::fs::read(d.join("cut.mvi")).unwrap(), std::fs::read(d.join("direct.mvi")).unwrap());
}

#[test]
fn pooled_baseline_index() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fixture(d);
    let out = stdout(&mvr(&[
        "build-index",
        "--input",
        p(&d.join("c.mve")),
        "--pool",
        "split@2",
        "--output",
        p(&d.join("s.mvi")),
    ]));
    assert!(out.contains("r_c 2"), "{out}");
}

#[test]
fn truncated_index_file_fails_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fixture(d);
    let index = d.join("i.mvi");
    stdout(&mvr(&["build-index", "--input", p(&d.join("c.mve")), "--output", p(&index)]));
    let bytes = std::fs::read(&index).unwrap();
    std::fs::write(&index, &bytes[..bytes.len() - 100]).unwrap();

    let o = mvr(&["search", "--index", p(&index), "--queries", p(&d.join("q.mve")), "--k", "3"]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("truncated"), "{err}");
}

#[test]
fn usage_and_numeric_errors_have_distinct_codes() {
    let o = mvr(&["flops", "--budget", "0:4", "--dim", "8", "--n", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--budget"));

    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fixture(d);
    let index = d.join("i.mvi");
    stdout(&mvr(&["build-index", "--input", p(&d.join("c.mve")), "--output", p(&index)]));
    let qpath = d.join("q.mve");
    let q = ["--index", p(&index), "--queries", p(&qpath)];

    let o = mvr(&[&["search"][..], &q, &["--kernel", "simd9000"]].concat());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("blocked"));

    let o = mvr(&[&["search"][..], &q, &["--budget", "8:4"]].concat());
    assert_eq!(o.status.code(), Some(4));

    let o = mvr(&[&["search"][..], &q, &["--k", "25"]].concat());
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn train_toy_history_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let runs: Vec<_> = ["a", "b"]
        .iter()
        .map(|name| {
            let out = dir.path().join(name);
            stdout(&mvr(&["train-toy", "--seed", "7", "--out-dir", p(&out)]));
            out
        })
        .collect();
    let read = |dir: &Path, f: &str| std::fs::read(dir.join(f)).unwrap();
    assert_eq!(read(&runs[0], "history.csv"), read(&runs[1], "history.csv"));
    assert_eq!(read(&runs[0], "params.json"), read(&runs[1], "params.json"));
    let history = String::from_utf8(read(&runs[0], "history.csv")).unwrap();
    assert!(history.starts_with("step,total,g0,g1,g2,g3,g4\n0,"));
    assert_eq!(history.lines().count(), 1 + 501);
}
