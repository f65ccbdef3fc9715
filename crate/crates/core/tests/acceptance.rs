//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line for
//! its criterion before asserting, so `--nocapture` output reads as a report.

use std::collections::BTreeMap;

use mvr_core::eval::{ndcg_at_k, precision_at_1, Qrels};
use mvr_core::index::{dequantize_bf16, quantize_bf16};
use mvr_core::lateint::{RankedEntry, RankedList, DEFAULT_BATCH_SIZE};
use mvr_core::train::{
    infonce_group_loss, loss_gradient, mmr_loss, train_toy, BatchEmbeddings, ToyEncoderParams, TrainConfig,
    TrainingBatch,
};
use mvr_core::{
    build_index, group_score, load_index, memory_report, save_index, scoring_flops, search, truncate_index, Budget,
    BudgetLadder, Dtype, Error, MemoryReport, MetaEmbeddingSet, Side,
};
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn report(id: u32, title: &str, ok: bool, detail: &str) {
    println!("criterion {id:>2} {}: {title} | {detail}", if ok { "PASS" } else { "FAIL" });
}

fn random_set<T: Float>(rng: &mut ChaCha8Rng, rows: usize, dim: usize, side: Side) -> MetaEmbeddingSet<T> {
    let raw: Vec<T> = (0..rows * dim)
        .map(|_| T::from::<f64>(StandardNormal.sample(rng)).unwrap())
        .collect();
    MetaEmbeddingSet::normalized(&raw, dim, side).unwrap()
}

const TABLE_BUDGETS: [(usize, usize); 5] = [(1, 1), (2, 4), (4, 8), (8, 16), (16, 64)];
const TABLE_D: usize = 3584;
const TABLE_N: usize = 100_000;

#[test]
fn criterion_01_scoring_flops_table() {
    let expected_g = [0.71, 5.73, 22.94, 91.75, 733.89];
    let tol = 0.005;
    let mut failures = Vec::new();
    for (&(rq, rc), &want) in TABLE_BUDGETS.iter().zip(&expected_g) {
        let got = scoring_flops(Budget::new(rq, rc).unwrap(), TABLE_D, TABLE_N) as f64 / 1e9;
        let rel = (got - want).abs() / want;
        if rel > tol {
            failures.push(format!("({rq},{rc}) {got:.4}G vs {want}G rel {rel:.4}"));
        }
    }
    let ok = failures.is_empty();
    report(1, "scoring FLOPs within 0.5%", ok, &failures.join("; "));
    assert!(ok, "{failures:?}");
}

#[test]
fn criterion_02_index_memory_table() {
    let expected = ["0.68", "2.67", "5.34", "10.68", "42.72"];
    let mut failures = Vec::new();
    for (&(_, rc), want) in TABLE_BUDGETS.iter().zip(expected) {
        let got = MemoryReport::from_shape(TABLE_N, rc, TABLE_D, Dtype::Bf16);
        assert_eq!(got.bytes, (TABLE_N * rc * TABLE_D * 2) as u64);
        if got.gib_string() != want {
            failures.push(format!("r_c={rc} {} GiB vs {want} GiB", got.gib_string()));
        }
    }

    // physical cross-check: the saved payload is exactly the reported size
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 1000;
    let rc = 4;
    let cands: Vec<_> = (0..n as u64).map(|i| (i, random_set::<f32>(&mut rng, rc, TABLE_D, Side::Candidate))).collect();
    let index = build_index(&cands, rc, Dtype::Bf16).unwrap();
    let rep = memory_report(&index);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.mvi");
    save_index(&index, &path).unwrap();
    let file_len = std::fs::metadata(&path).unwrap().len();
    let payload = file_len - 24 - 8 * n as u64 - 4;
    if rep.bytes != payload || rep.bytes != (n * rc * TABLE_D * 2) as u64 {
        failures.push(format!("physical N={n}: reported {} vs payload {payload}", rep.bytes));
    }

    let ok = failures.is_empty();
    report(2, "bf16 index memory, 2-decimal GiB", ok, &failures.join("; "));
    assert!(ok, "{failures:?}");
}

fn brute_force(q: &[f64], c: &[f64], dim: usize) -> f64 {
    let mut total = 0.0;
    for qi in q.chunks(dim) {
        let mut best = f64::NEG_INFINITY;
        for cj in c.chunks(dim) {
            let s: f64 = qi.iter().zip(cj).map(|(a, b)| a * b).sum();
            best = best.max(s);
        }
        total += best;
    }
    total
}

#[test]
fn criterion_03_maxsim_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let rq = rng.random_range(1..=8);
        let rc = rng.random_range(1..=16);
        let dim = rng.random_range(1..=32);
        let q = random_set::<f32>(&mut rng, rq, dim, Side::Query);
        let c = random_set::<f32>(&mut rng, rc, dim, Side::Candidate);
        let budget = Budget::new(rng.random_range(1..=rq), rng.random_range(1..=rc)).unwrap();
        let got = group_score(&q, &c, budget).unwrap() as f64;
        let widen = |s: &MetaEmbeddingSet, r: usize| s.as_slice()[..r * dim].iter().map(|&x| x as f64).collect::<Vec<_>>();
        let want = brute_force(&widen(&q, budget.r_q()), &widen(&c, budget.r_c()), dim);
        worst = worst.max((got - want).abs());
    }
    let ok = worst <= 1e-5;
    report(3, "MaxSim vs brute force, 1000 instances, abs 1e-5", ok, &format!("max abs err {worst:.3e}"));
    assert!(ok);
}

#[test]
fn criterion_04_nesting_consistency() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = 0;
    for case in 0..100 {
        let n = rng.random_range(1..=40);
        let full_rc = rng.random_range(1..=16);
        let dim = rng.random_range(1..=16);
        let dtype = if case % 2 == 0 { Dtype::Bf16 } else { Dtype::F32 };
        let cands: Vec<_> = (0..n)
            .map(|i| (1000 + i as u64 * 7, random_set::<f32>(&mut rng, full_rc, dim, Side::Candidate)))
            .collect();
        let rq_full = rng.random_range(1..=8);
        let queries: Vec<_> = (0..rng.random_range(1..=5))
            .map(|_| random_set::<f32>(&mut rng, rq_full, dim, Side::Query))
            .collect();
        let r_prime = rng.random_range(1..=full_rc);
        let budget = Budget::new(rng.random_range(1..=rq_full), rng.random_range(1..=r_prime)).unwrap();
        let k = rng.random_range(1..=n);
        let batch = rng.random_range(1..=n);

        let full = build_index(&cands, full_rc, dtype).unwrap();
        let cut = truncate_index(&full, r_prime).unwrap();
        let direct = build_index(&cands, r_prime, dtype).unwrap();
        if cut != direct {
            mismatches += 1;
        }
        let a = search(&full, &queries, budget, k, batch).unwrap();
        let b = search(&cut, &queries, budget, k, DEFAULT_BATCH_SIZE).unwrap();
        if a != b {
            mismatches += 1;
        }
    }
    let ok = mismatches == 0;
    report(4, "truncated index search and build identical, 100 cases", ok, &format!("{mismatches} mismatches"));
    assert!(ok);
}

fn constant_set(rows: usize, dim: usize, side: Side) -> MetaEmbeddingSet<f64> {
    let mut raw = vec![0.0; rows * dim];
    for r in 0..rows {
        raw[r * dim] = 1.0;
    }
    MetaEmbeddingSet::from_unit_rows(raw, dim, side).unwrap()
}

#[test]
fn criterion_05_uniform_scores_give_log_b_plus_one() {
    let mut worst = 0.0f64;
    for b in [1usize, 2, 8, 64] {
        let expected = ((b + 1) as f64).ln();
        let s = vec![vec![0.37; b]; b];
        let direct = infonce_group_loss(&s, &vec![0.37; b]).unwrap();
        worst = worst.max((direct - expected).abs() / expected);

        let batch = BatchEmbeddings {
            queries: (0..b).map(|_| constant_set(16, 4, Side::Query)).collect(),
            positives: (0..b).map(|_| constant_set(64, 4, Side::Candidate)).collect(),
            negatives: (0..b).map(|_| constant_set(64, 4, Side::Candidate)).collect(),
        };
        let loss = mmr_loss(&batch, &BudgetLadder::default_ladder(), 0.03, &[1.0; 5]).unwrap();
        for g in &loss.per_group {
            worst = worst.max((g - expected).abs() / expected);
        }
    }
    let ok = worst <= 1e-6;
    report(5, "uniform-score InfoNCE equals ln(B+1), rel 1e-6", ok, &format!("max rel err {worst:.3e}"));
    assert!(ok);
}

fn flat_grad(p: &mvr_core::train::ParamGradient) -> Vec<f64> {
    p.w.iter().chain(&p.m).copied().collect()
}

fn perturbed(p: &ToyEncoderParams, k: usize, delta: f64) -> ToyEncoderParams {
    let mut out = p.clone();
    if k < out.w.len() {
        out.w[k] += delta;
    } else {
        let k = k - out.w.len();
        out.m[k] += delta;
    }
    out
}

#[test]
fn criterion_06_gradient_matches_finite_differences() {
    const H: f64 = 1e-5;
    const TOL: f64 = 1e-4;
    // relative error denominator floor; below it the error is taken as absolute
    const FLOOR: f64 = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut checked = 0;
    let mut resampled = 0;
    let mut worst = 0.0f64;
    while checked < 20 {
        let f = rng.random_range(2..=5);
        let dim = rng.random_range(2..=5);
        let b = rng.random_range(1..=4);
        let rq = rng.random_range(2..=4);
        let rc = rng.random_range(rq..=6);
        let ladder = BudgetLadder::new(vec![Budget::new(1, 1).unwrap(), Budget::new(rq, rc).unwrap()]).unwrap();
        let weights = [rng.random_range(0.2..1.0), rng.random_range(0.2..1.0)];
        let tau = rng.random_range(0.05..0.5);
        let pq = ToyEncoderParams::random(Side::Query, rq, dim, f, &mut rng);
        let pc = ToyEncoderParams::random(Side::Candidate, rc, dim, f, &mut rng);
        let mut v = || (0..b).map(|_| (0..f).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let batch = TrainingBatch::new(v(), v(), v()).unwrap();

        let grads = match loss_gradient(&pq, &pc, &batch, &ladder, tau, &weights) {
            Ok((_, g)) => g,
            Err(Error::TieNearMax { .. }) => {
                resampled += 1;
                continue;
            }
            Err(e) => panic!("{e}"),
        };
        let loss = |q: &ToyEncoderParams, c: &ToyEncoderParams| {
            mmr_loss(&batch.encode(q, c).unwrap(), &ladder, tau, &weights).unwrap().total
        };
        let analytic_q = flat_grad(&grads.query);
        let analytic_c = flat_grad(&grads.candidate);
        for (k, a) in analytic_q.iter().enumerate() {
            let n = (loss(&perturbed(&pq, k, H), &pc) - loss(&perturbed(&pq, k, -H), &pc)) / (2.0 * H);
            worst = worst.max((a - n).abs() / a.abs().max(n.abs()).max(FLOOR));
        }
        for (k, a) in analytic_c.iter().enumerate() {
            let n = (loss(&pq, &perturbed(&pc, k, H)) - loss(&pq, &perturbed(&pc, k, -H))) / (2.0 * H);
            worst = worst.max((a - n).abs() / a.abs().max(n.abs()).max(FLOOR));
        }
        checked += 1;
    }
    let ok = worst < TOL;
    report(
        6,
        "analytic gradient vs central differences, 20 configs",
        ok,
        &format!("max rel err {worst:.3e} ({resampled} near-tie draws resampled)"),
    );
    assert!(ok);
}

#[test]
fn criterion_07_desk_scale_training() {
    let config = TrainConfig::default();
    let out = train_toy(&config).unwrap();
    let p_at = |rq, rc| {
        out.precision
            .iter()
            .find(|p| p.budget == Budget::new(rq, rc).unwrap())
            .map(|p| p.value)
            .unwrap()
    };
    let (initial, last) = (out.initial_loss(), out.final_loss());
    let (p11, p1664) = (p_at(1, 1), p_at(16, 64));
    let ok = last < initial && p11 >= 0.8 && p1664 >= p11;
    report(
        7,
        "default toy training: loss falls, P@1(1,1) >= 0.8, P@1(16,64) >= P@1(1,1)",
        ok,
        &format!("loss {initial:.4} -> {last:.4}, P@1(1,1) {p11:.4}, P@1(16,64) {p1664:.4}"),
    );
    assert!(ok);
}

#[test]
fn criterion_08_group_losses_depend_only_on_their_prefix() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let ladder = BudgetLadder::default_ladder();
    let (b, dim) = (4, 6);
    let make = |rng: &mut ChaCha8Rng, rows, side| (0..b).map(|_| random_set::<f64>(rng, rows, dim, side)).collect::<Vec<_>>();
    let batch = BatchEmbeddings {
        queries: make(&mut rng, 16, Side::Query),
        positives: make(&mut rng, 64, Side::Candidate),
        negatives: make(&mut rng, 64, Side::Candidate),
    };
    let base = mmr_loss(&batch, &ladder, 0.03, &[1.0; 5]).unwrap();

    let mut changed = Vec::new();
    for (g, group) in ladder.groups().iter().enumerate() {
        let mut scramble = |sets: &[MetaEmbeddingSet<f64>], keep: usize, side| {
            sets.iter()
                .map(|s| {
                    let fresh = random_set::<f64>(&mut rng, s.rows(), dim, side);
                    let mut data = s.as_slice().to_vec();
                    data[keep * dim..].copy_from_slice(&fresh.as_slice()[keep * dim..]);
                    MetaEmbeddingSet::from_unit_rows(data, dim, side).unwrap()
                })
                .collect::<Vec<_>>()
        };
        let moved = BatchEmbeddings {
            queries: scramble(&batch.queries, group.r_q(), Side::Query),
            positives: scramble(&batch.positives, group.r_c(), Side::Candidate),
            negatives: scramble(&batch.negatives, group.r_c(), Side::Candidate),
        };
        let after = mmr_loss(&moved, &ladder, 0.03, &[1.0; 5]).unwrap();
        if after.per_group[g].to_bits() != base.per_group[g].to_bits() {
            changed.push(g);
        }
    }
    let ok = changed.is_empty();
    report(8, "per-group loss bit-unchanged by rows beyond its prefix", ok, &format!("changed groups {changed:?}"));
    assert!(ok);
}

#[test]
fn criterion_09_round_trip_integrity() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let cands: Vec<_> = (0..200u64).map(|i| (i * 31 + 5, random_set::<f32>(&mut rng, 8, 24, Side::Candidate))).collect();
    let dir = tempfile::tempdir().unwrap();
    let mut identical = true;
    for dtype in [Dtype::Bf16, Dtype::F32] {
        let index = build_index(&cands, 8, dtype).unwrap();
        let path = dir.path().join(format!("{dtype}.mvi"));
        save_index(&index, &path).unwrap();
        let loaded = load_index(&path).unwrap();
        identical &= loaded == index;
        let again = dir.path().join(format!("{dtype}-2.mvi"));
        save_index(&loaded, &again).unwrap();
        identical &= std::fs::read(&path).unwrap() == std::fs::read(&again).unwrap();
    }

    let bound = 2f64.powi(-8);
    let mut worst = 0.0f64;
    for _ in 0..1_000_000 {
        let x: f32 = StandardNormal.sample(&mut rng);
        if x == 0.0 {
            continue;
        }
        let back = dequantize_bf16(quantize_bf16(x).unwrap());
        worst = worst.max(((back - x) as f64 / x as f64).abs());
    }
    let ok = identical && worst <= bound;
    report(
        9,
        "index save/load bit-identical, bf16 rel err <= 2^-8 on 1e6 normals",
        ok,
        &format!("identical {identical}, max rel err {worst:.3e}"),
    );
    assert!(ok);
}

fn ranked(query_id: u64, docs: &[u64]) -> RankedList {
    RankedList {
        query_id,
        entries: docs
            .iter()
            .enumerate()
            .map(|(i, &doc_id)| RankedEntry {
                doc_id,
                score: (docs.len() - i) as f32,
            })
            .collect(),
    }
}

fn single_relevant(query_id: u64, doc: u64) -> Qrels {
    Qrels::new(BTreeMap::from([(query_id, BTreeMap::from([(doc, 1)]))])).unwrap()
}

#[test]
fn criterion_10_metric_closed_forms() {
    let mut failures = Vec::new();
    let mut expect = |what: &str, got: f64, want: f64| {
        if got != want {
            failures.push(format!("{what}: {got} vs {want}"));
        }
    };
    let q = single_relevant(1, 42);
    expect("ndcg rank 1", ndcg_at_k(&[ranked(1, &[42, 2, 3, 4, 5])], &q, 5).unwrap(), 1.0);
    expect("ndcg rank 2", ndcg_at_k(&[ranked(1, &[2, 42, 3, 4, 5])], &q, 5).unwrap(), 1.0 / 3f64.log2());
    expect("ndcg rank 6", ndcg_at_k(&[ranked(1, &[2, 3, 4, 5, 6, 42])], &q, 5).unwrap(), 0.0);

    let qrels = Qrels::from_triples([(1, 10, 1), (2, 20, 2), (3, 30, 1), (3, 31, 0), (4, 40, 1)]).unwrap();
    let runs = [ranked(1, &[10, 11]), ranked(2, &[21, 20]), ranked(3, &[31, 30]), ranked(4, &[40])];
    expect("p@1 two of four", precision_at_1(&runs, &qrels).unwrap(), 0.5);
    expect("p@1 all hit", precision_at_1(&[ranked(1, &[10]), ranked(4, &[40])], &qrels).unwrap(), 1.0);
    expect("p@1 judged zero", precision_at_1(&[ranked(3, &[31])], &qrels).unwrap(), 0.0);

    let ok = failures.is_empty();
    report(10, "NDCG@5 and Precision@1 closed forms, exact", ok, &failures.join("; "));
    assert!(ok, "{failures:?}");
}
