//! Evaluation protocols over trained representations: link prediction,
//! retrieval (HitRatio@k), recommendation (Recall@k), relevance search and
//! projector export.
//!
//! Every function reads a `|V| × d` representation matrix whose row `i`
//! belongs to node `i`; nothing here mutates it.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{read_pairs, GraphError, HetGraph, NodeId, NodeType};
use crate::seed;
use crate::text::sigmoid;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("node index {0} has no representation")]
    MissingRepresentation(usize),
    #[error("labels contain a single class; need both links and non-links")]
    SingleClass,
    #[error("k = {k} is out of range 1..={max}")]
    InvalidK { k: usize, max: usize },
    #[error("{0}")]
    Empty(String),
    #[error("features and labels differ in length ({0} vs {1})")]
    Shape(usize, usize),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("cannot open {path}: {source}")]
    Open { path: String, source: std::io::Error },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn rep(reps: &Array2<f64>, v: NodeId) -> Result<ArrayView1<'_, f64>, EvalError> {
    if v.index() < reps.nrows() {
        Ok(reps.row(v.index()))
    } else {
        Err(EvalError::MissingRepresentation(v.index()))
    }
}

/// Cosine similarity; `-inf` when either vector has zero norm so that such
/// candidates rank last.
pub fn cosine(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return f64::NEG_INFINITY;
    }
    a.dot(&b) / (na * nb)
}

/// Descending score, ties by ascending node index.
fn rank_order(a: &(NodeId, f64), b: &(NodeId, f64)) -> Ordering {
    b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0))
}

// ---------------------------------------------------------------------------
// Link prediction

/// Hadamard product of the two end-node vectors.
pub fn link_features(u: ArrayView1<f64>, v: ArrayView1<f64>) -> Array1<f64> {
    &u * &v
}

pub fn link_feature_matrix(reps: &Array2<f64>, pairs: &[(NodeId, NodeId)]) -> Result<Array2<f64>, EvalError> {
    let mut x = Array2::zeros((pairs.len(), reps.ncols()));
    for (i, &(u, v)) in pairs.iter().enumerate() {
        x.row_mut(i).assign(&link_features(rep(reps, u)?, rep(reps, v)?));
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticConfig {
    /// Weight of `½‖w‖²` (the bias is not penalized).
    pub l2: f64,
    /// Stop when the gradient norm falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            l2: 1e-4,
            tolerance: 1e-6,
            max_iterations: 5000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub weights: Array1<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
}

impl LogisticModel {
    pub fn probability(&self, x: ArrayView1<f64>) -> f64 {
        sigmoid(self.weights.dot(&x) + self.bias)
    }

    pub fn classify(&self, x: ArrayView1<f64>) -> bool {
        self.weights.dot(&x) + self.bias >= 0.0
    }

    pub fn classify_all(&self, x: &Array2<f64>) -> Vec<bool> {
        x.rows().into_iter().map(|r| self.classify(r)).collect()
    }
}

/// Mean log-loss plus ridge term, and its gradient.
fn logistic_loss(x: &Array2<f64>, y: &[f64], w: &Array1<f64>, b: f64, l2: f64) -> (f64, Array1<f64>, f64) {
    let n = y.len() as f64;
    let z = x.dot(w) + b;
    let mut loss = 0.0;
    let mut resid = Array1::zeros(y.len());
    for i in 0..y.len() {
        // log(1 + e^z) - y z, computed stably.
        let zi = z[i];
        loss += zi.max(0.0) + (-zi.abs()).exp().ln_1p() - y[i] * zi;
        resid[i] = sigmoid(zi) - y[i];
    }
    let gw = x.t().dot(&resid) / n + w * l2;
    let gb = resid.sum() / n;
    (loss / n + 0.5 * l2 * w.dot(w), gw, gb)
}

/// Full-batch gradient descent with backtracking line search.
pub fn train_logistic(x: &Array2<f64>, labels: &[bool], cfg: &LogisticConfig) -> Result<LogisticModel, EvalError> {
    if x.nrows() != labels.len() {
        return Err(EvalError::Shape(x.nrows(), labels.len()));
    }
    let pos = labels.iter().filter(|l| **l).count();
    if pos == 0 || pos == labels.len() {
        return Err(EvalError::SingleClass);
    }
    let y: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
    let mut w = Array1::zeros(x.ncols());
    let mut b = 0.0;
    let mut step = 1.0;
    let (mut loss, mut gw, mut gb) = logistic_loss(x, &y, &w, b, cfg.l2);
    let mut iterations = 0;
    let mut gnorm = (gw.dot(&gw) + gb * gb).sqrt();
    while iterations < cfg.max_iterations && gnorm >= cfg.tolerance {
        iterations += 1;
        let g2 = gnorm * gnorm;
        loop {
            let w_new = &w - &(&gw * step);
            let b_new = b - step * gb;
            let (l_new, gw_new, gb_new) = logistic_loss(x, &y, &w_new, b_new, cfg.l2);
            if l_new <= loss - 0.5 * step * g2 || step < 1e-12 {
                w = w_new;
                b = b_new;
                loss = l_new;
                gw = gw_new;
                gb = gb_new;
                break;
            }
            step *= 0.5;
        }
        step *= 2.0;
        gnorm = (gw.dot(&gw) + gb * gb).sqrt();
    }
    Ok(LogisticModel {
        weights: w,
        bias: b,
        iterations,
        gradient_norm: gnorm,
    })
}

/// `(accuracy, F1)` with "link" as the positive class. F1 is 0 when there
/// are no true positives.
pub fn accuracy_f1(preds: &[bool], labels: &[bool]) -> Result<(f64, f64), EvalError> {
    if preds.len() != labels.len() {
        return Err(EvalError::Shape(preds.len(), labels.len()));
    }
    if preds.is_empty() {
        return Err(EvalError::Empty("no predictions".into()));
    }
    let (mut tp, mut fp, mut fneg, mut correct) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &l) in preds.iter().zip(labels) {
        match (p, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
        correct += usize::from(p == l);
    }
    let acc = correct as f64 / preds.len() as f64;
    let f1 = if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fneg) as f64
    };
    Ok((acc, f1))
}

fn unordered(u: NodeId, v: NodeId) -> (NodeId, NodeId) {
    (u.min(v), u.max(v))
}

/// `count` distinct unordered pairs of distinct `candidates` that are not in
/// `exclude` (unordered). Fewer are returned if the space runs out.
pub fn sample_non_links<R: Rng + ?Sized>(
    candidates: &[NodeId],
    exclude: &HashSet<(NodeId, NodeId)>,
    count: usize,
    rng: &mut R,
) -> Vec<(NodeId, NodeId)> {
    let n = candidates.len();
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(count);
    if n < 2 {
        return out;
    }
    let budget = count.saturating_mul(100).max(1000);
    for _ in 0..budget {
        if out.len() == count {
            break;
        }
        let a = candidates[rng.random_range(0..n)];
        let b = candidates[rng.random_range(0..n)];
        if a == b {
            continue;
        }
        let p = unordered(a, b);
        if exclude.contains(&p) || !seen.insert(p) {
            continue;
        }
        out.push(p);
    }
    out
}

/// Pairs of `end`-typed nodes sharing at least one `via`-typed neighbor,
/// e.g. co-authors through a shared paper. Unordered, sorted, deduplicated.
pub fn co_neighbor_pairs(g: &HetGraph, end: NodeType, via: NodeType) -> Vec<(NodeId, NodeId)> {
    let mut out = BTreeSet::new();
    for &m in g.nodes_of_type(via) {
        let ends: Vec<NodeId> = g
            .adjacency(m)
            .iter()
            .map(|&(u, _)| u)
            .filter(|&u| g.node_type(u) == end)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        for (i, &a) in ends.iter().enumerate() {
            for &b in &ends[i + 1..] {
                out.insert((a, b));
            }
        }
    }
    out.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkPredictionReport {
    pub accuracy: f64,
    pub f1: f64,
    pub train_pairs: usize,
    pub test_pairs: usize,
    pub iterations: usize,
}

/// Train a classifier on `train_links` plus as many random non-links, then
/// score it on `test_links` plus as many fresh random non-links. Non-links
/// are drawn among `candidates` and avoid every known train or test link.
pub fn link_prediction(
    reps: &Array2<f64>,
    candidates: &[NodeId],
    train_links: &[(NodeId, NodeId)],
    test_links: &[(NodeId, NodeId)],
    seed: u64,
    cfg: &LogisticConfig,
) -> Result<LinkPredictionReport, EvalError> {
    let train_pos = dedup_pairs(train_links, true);
    let test_pos = dedup_pairs(test_links, true);
    if train_pos.is_empty() || test_pos.is_empty() {
        return Err(EvalError::Empty("link prediction needs train and test links".into()));
    }
    let mut known: HashSet<(NodeId, NodeId)> = train_pos.iter().copied().collect();
    known.extend(test_pos.iter().copied());
    let train_neg = sample_non_links(
        candidates,
        &known,
        train_pos.len(),
        &mut seed::rng(seed, "linkpred-negatives", 0, 0),
    );
    known.extend(train_neg.iter().copied());
    let test_neg = sample_non_links(
        candidates,
        &known,
        test_pos.len(),
        &mut seed::rng(seed, "linkpred-negatives", 1, 0),
    );
    let assemble = |pos: &[(NodeId, NodeId)], neg: &[(NodeId, NodeId)]| {
        let pairs: Vec<_> = pos.iter().chain(neg).copied().collect();
        let labels: Vec<bool> = (0..pairs.len()).map(|i| i < pos.len()).collect();
        (pairs, labels)
    };
    let (tr_pairs, tr_labels) = assemble(&train_pos, &train_neg);
    let (te_pairs, te_labels) = assemble(&test_pos, &test_neg);
    let model = train_logistic(&link_feature_matrix(reps, &tr_pairs)?, &tr_labels, cfg)?;
    let preds = model.classify_all(&link_feature_matrix(reps, &te_pairs)?);
    let (accuracy, f1) = accuracy_f1(&preds, &te_labels)?;
    Ok(LinkPredictionReport {
        accuracy,
        f1,
        train_pairs: tr_pairs.len(),
        test_pairs: te_pairs.len(),
        iterations: model.iterations,
    })
}

// ---------------------------------------------------------------------------
// Ranking

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankingQuery {
    pub query: NodeId,
    pub positive: NodeId,
    pub negatives: Vec<NodeId>,
}

/// One query per `(query, positive)` event with `negatives` candidates drawn
/// uniformly without replacement from `candidates`, excluding the query and
/// every positive of that query. With `shared`, one draw is reused for all
/// queries (minus the excluded nodes). Queries get fewer negatives when the
/// candidate pool is too small.
pub fn build_ranking_queries(
    events: &[(NodeId, NodeId)],
    candidates: &[NodeId],
    negatives: usize,
    shared: bool,
    seed: u64,
) -> Vec<RankingQuery> {
    let events = dedup_pairs(events, false);
    let mut positives: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
    for &(q, p) in &events {
        positives.entry(q).or_default().insert(p);
    }
    let draw = |pool: &[NodeId], rng: &mut seed::Rng| -> Vec<NodeId> {
        let k = negatives.min(pool.len());
        let mut picked: Vec<NodeId> = index::sample(rng, pool.len(), k).into_iter().map(|i| pool[i]).collect();
        picked.sort();
        picked
    };
    let shared_draw = shared.then(|| {
        // Overdraw so that removing a query's exclusions still leaves enough.
        let extra = positives.values().map(BTreeSet::len).max().unwrap_or(0) + 1;
        let k = (negatives + extra).min(candidates.len());
        let mut rng = seed::rng(seed, "ranking-shared", 0, 0);
        let mut picked: Vec<NodeId> = index::sample(&mut rng, candidates.len(), k)
            .into_iter()
            .map(|i| candidates[i])
            .collect();
        picked.sort();
        picked
    });
    events
        .iter()
        .enumerate()
        .map(|(i, &(q, p))| {
            let excluded = &positives[&q];
            let allowed = |v: &NodeId| *v != q && !excluded.contains(v);
            let negatives = match &shared_draw {
                Some(list) => list.iter().copied().filter(allowed).take(negatives).collect(),
                None => {
                    let pool: Vec<NodeId> = candidates.iter().copied().filter(allowed).collect();
                    draw(&pool, &mut seed::rng(seed, "ranking", i as u64, 0))
                }
            };
            RankingQuery {
                query: q,
                positive: p,
                negatives,
            }
        })
        .collect()
}

/// 0-based rank of the positive among itself and the negatives: negatives
/// scoring higher, or equal with a smaller index, rank ahead of it.
pub fn positive_rank(q: &RankingQuery, reps: &Array2<f64>) -> Result<usize, EvalError> {
    let qv = rep(reps, q.query)?;
    let sp = cosine(qv, rep(reps, q.positive)?);
    let mut rank = 0;
    for &n in &q.negatives {
        let sn = cosine(qv, rep(reps, n)?);
        if rank_order(&(n, sn), &(q.positive, sp)) == Ordering::Less {
            rank += 1;
        }
    }
    Ok(rank)
}

/// Mean over queries of `1[positive ranks in the top k]`.
pub fn hit_ratio_at_k(queries: &[RankingQuery], reps: &Array2<f64>, k: usize) -> Result<f64, EvalError> {
    if queries.is_empty() {
        return Err(EvalError::Empty("no ranking queries".into()));
    }
    let max = queries.iter().map(|q| q.negatives.len() + 1).min().unwrap_or(1);
    if k == 0 || k > max {
        return Err(EvalError::InvalidK { k, max });
    }
    let hits = queries
        .par_iter()
        .map(|q| positive_rank(q, reps).map(|r| usize::from(r < k)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(hits.iter().sum::<usize>() as f64 / queries.len() as f64)
}

/// `candidates` ranked by cosine to `query` (query excluded), best first,
/// ties by ascending index, truncated to `k`.
pub fn top_k_relevant(
    reps: &Array2<f64>,
    query: NodeId,
    candidates: &[NodeId],
    k: usize,
) -> Result<Vec<(NodeId, f64)>, EvalError> {
    let qv = rep(reps, query)?;
    let mut scored = candidates
        .iter()
        .filter(|&&c| c != query)
        .map(|&c| Ok((c, cosine(qv, rep(reps, c)?))))
        .collect::<Result<Vec<_>, EvalError>>()?;
    scored.sort_by(rank_order);
    scored.truncate(k);
    Ok(scored)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecallReport {
    pub value: f64,
    /// Queries with a non-empty truth set.
    pub evaluated: usize,
}

/// Mean over queries of `|top-k ∩ truth| / |truth|`, ranking all
/// `candidates`. Queries with empty truth are skipped.
pub fn recall_at_k(
    truth: &BTreeMap<NodeId, BTreeSet<NodeId>>,
    candidates: &[NodeId],
    reps: &Array2<f64>,
    k: usize,
) -> Result<RecallReport, EvalError> {
    if k == 0 {
        return Err(EvalError::InvalidK {
            k,
            max: candidates.len(),
        });
    }
    let evaluated: Vec<(&NodeId, &BTreeSet<NodeId>)> = truth.iter().filter(|(_, t)| !t.is_empty()).collect();
    if evaluated.is_empty() {
        return Err(EvalError::Empty("no query has a non-empty truth set".into()));
    }
    let recalls = evaluated
        .par_iter()
        .map(|&(&q, t)| {
            let top = top_k_relevant(reps, q, candidates, k)?;
            let hit = top.iter().filter(|(c, _)| t.contains(c)).count();
            Ok(hit as f64 / t.len() as f64)
        })
        .collect::<Result<Vec<f64>, EvalError>>()?;
    Ok(RecallReport {
        value: recalls.iter().sum::<f64>() / recalls.len() as f64,
        evaluated: recalls.len(),
    })
}

// ---------------------------------------------------------------------------
// Event files

/// Remove repeated events; `symmetric` also folds `(b, a)` onto `(a, b)`.
/// Keeps first-occurrence order.
pub fn dedup_pairs(pairs: &[(NodeId, NodeId)], symmetric: bool) -> Vec<(NodeId, NodeId)> {
    let mut seen = HashSet::new();
    pairs
        .iter()
        .map(|&(a, b)| if symmetric { unordered(a, b) } else { (a, b) })
        .filter(|p| seen.insert(*p))
        .collect()
}

/// Evaluation events after the split time, resolved against the nodes that
/// exist before it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimeSplit {
    /// New collaborations (author, author).
    pub collaborations: Vec<(NodeId, NodeId)>,
    /// Co-citations (paper, paper).
    pub cocitations: Vec<(NodeId, NodeId)>,
    /// Appearances (author, venue).
    pub appearances: Vec<(NodeId, NodeId)>,
}

/// Resolve labeled pairs, dropping (and counting) those that mention a node
/// unknown to `lookup`, then deduplicate.
pub fn resolve_events<F>(pairs: &[(String, String)], lookup: F, symmetric: bool) -> (Vec<(NodeId, NodeId)>, usize)
where
    F: Fn(&str) -> Option<NodeId>,
{
    let mut dropped = 0;
    let mut resolved = Vec::with_capacity(pairs.len());
    for (a, b) in pairs {
        match (lookup(a), lookup(b)) {
            (Some(u), Some(v)) => resolved.push((u, v)),
            _ => dropped += 1,
        }
    }
    (dedup_pairs(&resolved, symmetric), dropped)
}

pub fn read_events<R: Read>(reader: R, name: &str) -> Result<Vec<(String, String)>, EvalError> {
    Ok(read_pairs(reader, name)?)
}

pub fn load_events(path: &Path) -> Result<Vec<(String, String)>, EvalError> {
    let f = std::fs::File::open(path).map_err(|source| EvalError::Open {
        path: path.display().to_string(),
        source,
    })?;
    read_events(f, &path.display().to_string())
}

impl TimeSplit {
    /// Read `collaborations.tsv`, `cocitations.tsv` and `appearances.tsv`
    /// from `dir`; missing files give empty lists.
    pub fn load<F>(dir: &Path, lookup: F) -> Result<(Self, usize), EvalError>
    where
        F: Fn(&str) -> Option<NodeId>,
    {
        let mut dropped = 0;
        let mut read = |file: &str, symmetric: bool| -> Result<Vec<(NodeId, NodeId)>, EvalError> {
            let p = dir.join(file);
            if !p.exists() {
                return Ok(Vec::new());
            }
            let (ev, d) = resolve_events(&load_events(&p)?, &lookup, symmetric);
            dropped += d;
            Ok(ev)
        };
        let split = TimeSplit {
            collaborations: read("collaborations.tsv", true)?,
            cocitations: read("cocitations.tsv", false)?,
            appearances: read("appearances.tsv", false)?,
        };
        Ok((split, dropped))
    }
}

/// Group `(query, item)` events into per-query truth sets.
pub fn truth_sets(events: &[(NodeId, NodeId)]) -> BTreeMap<NodeId, BTreeSet<NodeId>> {
    let mut out: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
    for &(q, i) in events {
        out.entry(q).or_default().insert(i);
    }
    out
}

// ---------------------------------------------------------------------------
// Reports and export

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub task: String,
    pub metric: String,
    pub k: Option<usize>,
    pub value: f64,
    pub queries: usize,
    pub seed: u64,
}

pub fn write_report_csv<W: Write>(rows: &[MetricRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "task,metric,k,value,queries,seed")?;
    for r in rows {
        let k = r.k.map(|k| k.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{},{:.6},{},{}", r.task, r.metric, k, r.value, r.queries, r.seed)?;
    }
    Ok(())
}

/// Vectors file (tab-separated floats, one node per line) and metadata file
/// (`label`, `type`, `category` with a header row) for an embedding
/// projector. Missing categories are written as empty strings.
pub fn write_projector<V: Write, M: Write>(
    reps: &Array2<f64>,
    labels: &[String],
    types: &[String],
    categories: &dyn Fn(&str) -> Option<String>,
    mut vectors: V,
    mut metadata: M,
) -> std::io::Result<()> {
    writeln!(metadata, "label\ttype\tcategory")?;
    for (i, row) in reps.rows().into_iter().enumerate() {
        let line: Vec<String> = row.iter().map(|x| format!("{x}")).collect();
        writeln!(vectors, "{}", line.join("\t"))?;
        let cat = categories(&labels[i]).unwrap_or_default();
        writeln!(metadata, "{}\t{}\t{}", labels[i], types[i], cat)?;
    }
    Ok(())
}

/// Parse a projector vectors file back into a matrix.
pub fn read_vectors_tsv<R: BufRead>(reader: R) -> Result<Array2<f64>, EvalError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split('\t')
            .map(|t| {
                t.trim().parse::<f64>().map_err(|e| EvalError::Parse {
                    line: i + 1,
                    reason: format!("{t:?}: {e}"),
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(EvalError::Parse {
                    line: i + 1,
                    reason: format!("expected {} values, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    let d = rows.first().map_or(0, Vec::len);
    let flat: Vec<f64> = rows.concat();
    Ok(Array2::from_shape_vec((flat.len() / d.max(1), d), flat).expect("rows checked"))
}
