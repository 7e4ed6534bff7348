//! Ranking metrics and the link classifier against independent oracles.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use hetembed_core::eval::{
    build_ranking_queries, hit_ratio_at_k, link_prediction, recall_at_k, sample_non_links, train_logistic,
    EvalError, LogisticConfig, RankingQuery,
};
use hetembed_core::graph::NodeId;
use hetembed_core::seed;
use ndarray::{array, Array1, Array2};
use rand::Rng;

fn n(i: u32) -> NodeId {
    NodeId(i)
}

/// Rows 0 and 1 are queries, rows 2..7 the five candidates c1..c5.
fn micro_reps() -> Array2<f64> {
    array![
        [1.0, 0.0],
        [0.0, 1.0],
        [1.0, 0.0],
        [1.0, 1.0],
        [0.0, 1.0],
        [-1.0, 1.0],
        [-1.0, 0.0],
    ]
}

fn candidates() -> Vec<NodeId> {
    (2..7).map(n).collect()
}

fn micro_queries() -> Vec<RankingQuery> {
    let c = candidates();
    let others = |p: NodeId| c.iter().copied().filter(|&x| x != p).collect();
    vec![
        RankingQuery {
            query: n(0),
            positive: n(4),
            negatives: others(n(4)),
        },
        RankingQuery {
            query: n(1),
            positive: n(3),
            negatives: others(n(3)),
        },
    ]
}

#[test]
fn hit_ratio_matches_hand_values() {
    // Query 0 ranks c1, c2 above its positive c3. Query 1 ranks c3 first and
    // its positive c2 second, ahead of the tied c4 by index.
    let expected = [0.0, 0.5, 1.0, 1.0, 1.0];
    for (k, want) in (1..=5).zip(expected) {
        assert_eq!(hit_ratio_at_k(&micro_queries(), &micro_reps(), k).unwrap(), want, "k={k}");
    }
    assert!(matches!(
        hit_ratio_at_k(&micro_queries(), &micro_reps(), 6),
        Err(EvalError::InvalidK { k: 6, max: 5 })
    ));
}

#[test]
fn recall_matches_hand_values() {
    let truth = BTreeMap::from([(n(0), BTreeSet::from([n(3), n(4)])), (n(1), BTreeSet::from([n(5)]))]);
    let expected = [0.0, 0.25, 1.0, 1.0, 1.0];
    for (k, want) in (1..=5).zip(expected) {
        let r = recall_at_k(&truth, &candidates(), &micro_reps(), k).unwrap();
        assert_eq!(r.value, want, "k={k}");
        assert_eq!(r.evaluated, 2);
    }
}

fn plain_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        f64::NEG_INFINITY
    } else {
        dot / (na * nb)
    }
}

/// Full ranking of `pool` for `q` by selection: repeatedly take the best
/// remaining candidate, the smaller index winning ties.
fn brute_ranking(reps: &Array2<f64>, q: NodeId, pool: &[NodeId]) -> Vec<NodeId> {
    let qv = reps.row(q.index()).to_vec();
    let mut left: Vec<NodeId> = pool.iter().copied().filter(|&c| c != q).collect();
    let mut out = Vec::new();
    while !left.is_empty() {
        let mut best = 0;
        for i in 1..left.len() {
            let si = plain_cosine(&qv, &reps.row(left[i].index()).to_vec());
            let sb = plain_cosine(&qv, &reps.row(left[best].index()).to_vec());
            if si > sb || (si == sb && left[i] < left[best]) {
                best = i;
            }
        }
        out.push(left.remove(best));
    }
    out
}

fn random_instance(s: u64) -> Array2<f64> {
    let mut rng = seed::rng(s, "micro-eval", 0, 0);
    // Small integer coordinates make exact ties common; row 6 may be zero.
    Array2::from_shape_simple_fn((7, 3), || rng.random_range(-2..=2) as f64)
}

#[test]
fn metrics_equal_brute_force_on_random_micro_instances() {
    for s in 0..200 {
        let reps = random_instance(s);
        let cands = candidates();
        let mut queries = Vec::new();
        let mut truth = BTreeMap::new();
        for q in [n(0), n(1)] {
            for &p in &cands {
                queries.push(RankingQuery {
                    query: q,
                    positive: p,
                    negatives: cands.iter().copied().filter(|&x| x != p).collect(),
                });
            }
            truth.insert(q, BTreeSet::from([cands[(s as usize + q.index()) % 5], cands[(s as usize * 3) % 5]]));
        }
        let mut prev_hr = 0.0;
        let mut prev_rc = 0.0;
        for k in 1..=5 {
            let hits: usize = queries
                .iter()
                .map(|rq| {
                    let ranking = brute_ranking(&reps, rq.query, &cands);
                    usize::from(ranking[..k].contains(&rq.positive))
                })
                .sum();
            let want_hr = hits as f64 / queries.len() as f64;
            let hr = hit_ratio_at_k(&queries, &reps, k).unwrap();
            assert!((hr - want_hr).abs() < 1e-15, "seed {s} k {k}: {hr} vs {want_hr}");

            let mut total = 0.0;
            for (q, t) in &truth {
                let ranking = brute_ranking(&reps, *q, &cands);
                total += ranking[..k].iter().filter(|c| t.contains(c)).count() as f64 / t.len() as f64;
            }
            let want_rc = total / truth.len() as f64;
            let rc = recall_at_k(&truth, &cands, &reps, k).unwrap().value;
            assert!((rc - want_rc).abs() < 1e-15, "seed {s} k {k}: {rc} vs {want_rc}");

            assert!(hr >= prev_hr && rc >= prev_rc);
            prev_hr = hr;
            prev_rc = rc;
        }
        assert_eq!(prev_hr, 1.0);
        assert_eq!(prev_rc, 1.0);
    }
}

#[test]
fn ranking_queries_never_include_query_or_positives() {
    let events = vec![(n(0), n(3)), (n(0), n(4)), (n(1), n(2)), (n(0), n(3))];
    let pool: Vec<NodeId> = (0..20).map(n).collect();
    for shared in [false, true] {
        let qs = build_ranking_queries(&events, &pool, 10, shared, 8);
        assert_eq!(qs.len(), 3);
        for q in &qs {
            assert_eq!(q.negatives.len(), 10);
            assert!(!q.negatives.contains(&q.query));
            let positives: HashSet<NodeId> = events.iter().filter(|e| e.0 == q.query).map(|e| e.1).collect();
            assert!(q.negatives.iter().all(|v| !positives.contains(v)));
            let distinct: HashSet<&NodeId> = q.negatives.iter().collect();
            assert_eq!(distinct.len(), 10);
        }
    }
    assert_eq!(
        build_ranking_queries(&events, &pool, 10, false, 8),
        build_ranking_queries(&events, &pool, 10, false, 8)
    );
}

/// Solve `a x = b` by Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let m = b.len();
    for col in 0..m {
        let piv = (col..m).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..m {
            let f = a[r][col] / a[col][col];
            for c in col..m {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; m];
    for r in (0..m).rev() {
        let s: f64 = (r + 1..m).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Newton's method on mean log-loss + ½·l2·‖w‖², bias last and unpenalized.
fn newton_logistic(x: &Array2<f64>, y: &[bool], l2: f64) -> Vec<f64> {
    let (rows, d) = x.dim();
    let m = d + 1;
    let mut beta = vec![0.0; m];
    for _ in 0..50 {
        let mut grad = vec![0.0; m];
        let mut hess = vec![vec![0.0; m]; m];
        for i in 0..rows {
            let mut xi: Vec<f64> = x.row(i).to_vec();
            xi.push(1.0);
            let z: f64 = xi.iter().zip(&beta).map(|(a, b)| a * b).sum();
            let p = 1.0 / (1.0 + (-z).exp());
            let r = p - if y[i] { 1.0 } else { 0.0 };
            for a in 0..m {
                grad[a] += r * xi[a] / rows as f64;
                for b in 0..m {
                    hess[a][b] += p * (1.0 - p) * xi[a] * xi[b] / rows as f64;
                }
            }
        }
        for a in 0..d {
            grad[a] += l2 * beta[a];
            hess[a][a] += l2;
        }
        let step = solve(hess, grad);
        for a in 0..m {
            beta[a] -= step[a];
        }
    }
    beta
}

#[test]
fn logistic_matches_newton_solution() {
    let mut rng = seed::rng(6, "logit", 0, 0);
    let x = Array2::from_shape_simple_fn((200, 3), || rng.random_range(-1.0..1.0));
    let truth: Array1<f64> = array![1.5, -2.0, 0.5];
    let y: Vec<bool> = x
        .rows()
        .into_iter()
        .map(|r| {
            let p = 1.0 / (1.0 + (-(r.dot(&truth) + 0.3)).exp());
            rng.random::<f64>() < p
        })
        .collect();
    let cfg = LogisticConfig {
        l2: 1e-2,
        tolerance: 1e-9,
        max_iterations: 100_000,
    };
    let model = train_logistic(&x, &y, &cfg).unwrap();
    let beta = newton_logistic(&x, &y, 1e-2);
    for a in 0..3 {
        assert!((model.weights[a] - beta[a]).abs() < 1e-6, "weight {a}: {} vs {}", model.weights[a], beta[a]);
    }
    assert!((model.bias - beta[3]).abs() < 1e-6);
}

#[test]
fn link_prediction_separates_planted_links() {
    // Two clusters of ten nodes; links inside clusters only.
    let reps = Array2::from_shape_fn((20, 4), |(i, j)| {
        let c = i / 10;
        let base = if j % 2 == c { 1.0 } else { -1.0 };
        base + 0.05 * ((i * 7 + j * 3) % 5) as f64
    });
    let cands: Vec<NodeId> = (0..20).map(n).collect();
    let mut links = Vec::new();
    for c in 0..2u32 {
        for a in 0..10u32 {
            for b in a + 1..10 {
                links.push((n(c * 10 + a), n(c * 10 + b)));
            }
        }
    }
    let (train, test): (Vec<_>, Vec<_>) = links.iter().enumerate().partition(|(i, _)| i % 3 != 0);
    let train: Vec<_> = train.into_iter().map(|(_, p)| *p).collect();
    let test: Vec<_> = test.into_iter().map(|(_, p)| *p).collect();
    let report = link_prediction(&reps, &cands, &train, &test, 0, &LogisticConfig::default()).unwrap();
    assert!(report.accuracy > 0.95, "accuracy {}", report.accuracy);
    assert_eq!(report.test_pairs, 2 * test.len());
}

#[test]
fn non_links_avoid_excluded_pairs() {
    let cands: Vec<NodeId> = (0..6).map(n).collect();
    let exclude: HashSet<(NodeId, NodeId)> = [(n(0), n(1)), (n(2), n(3))].into_iter().collect();
    let mut rng = seed::rng(0, "nl", 0, 0);
    let pairs = sample_non_links(&cands, &exclude, 100, &mut rng);
    // 15 unordered pairs minus the two excluded.
    assert_eq!(pairs.len(), 13);
    for p in &pairs {
        assert!(p.0 < p.1);
        assert!(!exclude.contains(p));
    }
}

#[test]
fn evaluation_does_not_modify_representations() {
    let reps = micro_reps();
    let before = reps.clone();
    let _ = hit_ratio_at_k(&micro_queries(), &reps, 3).unwrap();
    let truth = BTreeMap::from([(n(0), BTreeSet::from([n(3)]))]);
    let _ = recall_at_k(&truth, &candidates(), &reps, 2).unwrap();
    assert_eq!(reps, before);
}
