//! Subcommand bodies.

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use hetembed_core::eval::{
    build_ranking_queries, co_neighbor_pairs, hit_ratio_at_k, link_prediction, recall_at_k, top_k_relevant, truth_sets,
    write_projector, write_report_csv, MetricRow, TimeSplit,
};
use hetembed_core::graph::read_pairs;
use hetembed_core::online::{embed_new_nodes, UpdateMethod};
use hetembed_core::synth::generate;
use hetembed_core::train::{write_embedding_line, write_log_csv};
use hetembed_core::{train as fit, FrozenModel, HetGraph, NodeId, NodeType, TrainedModel, WordTable};

use crate::config::{require, require_existing, RunConfig};
use crate::error::{Context, Failure, Result};

fn load_graph(dir: &Path) -> Result<HetGraph> {
    HetGraph::load_dir(dir).context(format!("loading graph from {}", dir.display()))
}

fn load_words(path: &Path) -> Result<WordTable> {
    WordTable::load(path).context(format!("loading word vectors from {}", path.display()))
}

fn load_model(cfg: &RunConfig) -> Result<TrainedModel> {
    let path = require_existing(&cfg.paths.model, "model")?;
    TrainedModel::load(path).context(format!("loading model {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).context(format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).context(format!("creating {}", path.display()))?,
    ))
}

/// The graph's first nodes must be exactly the model's nodes.
fn check_matches(model: &TrainedModel, g: &HetGraph) -> Result<()> {
    if g.node_count() < model.node_count() || g.labels()[..model.node_count()] != model.labels[..] {
        return Err(Failure::data(format!(
            "graph ({} nodes) is not the graph the model was trained on ({} nodes)",
            g.node_count(),
            model.node_count()
        )));
    }
    Ok(())
}

fn node_type(model: &TrainedModel, name: &str) -> Result<NodeType> {
    model
        .schema
        .node_type(name)
        .ok_or_else(|| Failure::config(format!("unknown node type `{name}`")))
}

fn nodes_of_type(model: &TrainedModel, t: NodeType) -> Vec<NodeId> {
    (0..model.node_count())
        .filter(|&i| model.node_types[i] == t)
        .map(NodeId::from)
        .collect()
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let variant = cfg.train.variant;
    cfg.train.validate()?;
    cfg.walk.validate()?;
    let graph_dir = require_existing(&cfg.paths.graph, "graph")?;
    let model_path = require(&cfg.paths.model, "model")?;
    let words_path = if variant.uses_text() {
        Some(require_existing(&cfg.paths.words, "words").context(format!("variant {variant} needs word vectors"))?)
    } else {
        None
    };
    let g = load_graph(graph_dir)?;
    let words = words_path.map(load_words).transpose()?;
    log::info!("training {variant} on {g}");
    let start = Instant::now();
    let out = fit(&g, &cfg.train, &cfg.walk, words.as_ref())?;
    out.model.save(model_path).context(format!("writing {}", model_path.display()))?;
    let log_path = cfg
        .paths
        .log
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.log.csv", model_path.display())));
    let mut w = create(&log_path)?;
    write_log_csv(&out.log, &mut w)?;
    w.flush()?;
    let last = out.log.last().map_or(f64::NAN, |e| e.loss);
    if !out.converged && cfg.train.tolerance > 0.0 && cfg.train.tolerance.is_finite() {
        log::warn!("stopped at the epoch limit ({}) before converging", cfg.train.max_epochs);
    }
    println!(
        "trained {variant}: {} epochs, final loss {last:.6}, {} triplets, {:.1}s -> {}",
        out.log.len(),
        out.stats.triplets,
        start.elapsed().as_secs_f64(),
        model_path.display()
    );
    Ok(())
}

/// Apply whichever of the delta files exist; returns whether any did.
fn apply_delta(g: &mut HetGraph, dir: &Path) -> Result<bool> {
    if !dir.is_dir() {
        return Err(Failure::config(format!("--delta: {} is not a directory", dir.display())));
    }
    let mut found = false;
    let open = |name: &str| -> Result<Option<(BufReader<File>, String)>> {
        let p = dir.join(name);
        if !p.exists() {
            return Ok(None);
        }
        let f = File::open(&p).map_err(|e| Failure::data(format!("cannot open {}: {e}", p.display())))?;
        Ok(Some((BufReader::new(f), p.display().to_string())))
    };
    if let Some((r, name)) = open("nodes.tsv")? {
        g.read_nodes(r, &name)?;
        found = true;
    }
    if let Some((r, name)) = open("edges.tsv")? {
        g.read_edges(r, &name)?;
        found = true;
    }
    if let Some((r, name)) = open("content.tsv")? {
        g.read_content(r, &name)?;
        found = true;
    }
    Ok(found)
}

fn exported_labels(path: &Path) -> Result<HashSet<String>> {
    let f = File::open(path).map_err(|e| Failure::data(format!("cannot open {}: {e}", path.display())))?;
    let mut out = HashSet::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| Failure::data(format!("reading {}: {e}", path.display())))?;
        if let Some(label) = line.split('\t').next().filter(|l| !l.is_empty()) {
            out.insert(label.to_string());
        }
    }
    Ok(out)
}

pub fn update(cfg: &RunConfig) -> Result<()> {
    let model = load_model(cfg)?;
    let graph_dir = require_existing(&cfg.paths.graph, "graph")?;
    let delta_dir = require_existing(&cfg.paths.delta, "delta")?;
    let out_path = require(&cfg.paths.embeddings, "embeddings")?;
    let online = cfg.online.resolve(&model, cfg.master_seed());
    online.validate()?;
    let mut g = load_graph(graph_dir)?;
    check_matches(&model, &g)?;
    let edges_before = g.edge_count();
    let had_files = apply_delta(&mut g, delta_dir)?;
    let new_count = g.node_count() - model.node_count();
    if new_count == 0 {
        if g.edge_count() > edges_before {
            log::warn!("delta only adds edges between trained nodes; their vectors stay frozen");
        } else if !had_files {
            log::warn!("delta directory {} has no nodes.tsv, edges.tsv or content.tsv", delta_dir.display());
        }
        println!("no new nodes; nothing to update");
        return Ok(());
    }
    let words = cfg.paths.words.as_deref().map(load_words).transpose()?;
    let needs_text = g.nodes().skip(model.node_count()).any(|v| g.has_content(v));
    if model.encoder().is_some() && needs_text && words.is_none() {
        log::warn!("no word vectors given; new content nodes are fitted from structure");
    }
    let frozen = FrozenModel::new(&model)?;
    let start = Instant::now();
    let vectors = embed_new_nodes(&model, &frozen, &g, words.as_ref(), &online)?;
    log::info!(
        "{} new vectors in {:.3}s",
        vectors.len(),
        start.elapsed().as_secs_f64()
    );

    let mut w = if out_path.exists() {
        let seen = exported_labels(out_path)?;
        if let Some(dup) = vectors.iter().find(|v| seen.contains(g.label(v.node))) {
            return Err(Failure::data(format!(
                "{} already has a vector for {}",
                out_path.display(),
                g.label(dup.node)
            )));
        }
        BufWriter::new(
            OpenOptions::new()
                .append(true)
                .open(out_path)
                .context(format!("opening {}", out_path.display()))?,
        )
    } else {
        let mut w = create(out_path)?;
        model.write_embeddings(&mut w)?;
        w
    };
    for v in &vectors {
        write_embedding_line(&mut w, g.label(v.node), v.vector.view())?;
    }
    w.flush()?;
    for v in &vectors {
        let method = match v.method {
            UpdateMethod::Encoded => "encoded",
            UpdateMethod::Fitted => "fitted",
        };
        println!("{}\t{method}", g.label(v.node));
    }
    Ok(())
}

fn load_split(cfg: &RunConfig, model: &TrainedModel) -> Result<TimeSplit> {
    let dir = require_existing(&cfg.paths.events, "events")?;
    let (split, dropped) = TimeSplit::load(dir, |l| model.lookup(l)).context(format!("reading events in {}", dir.display()))?;
    if dropped > 0 {
        log::warn!("{dropped} events mention nodes unknown to the model and were dropped");
    }
    Ok(split)
}

fn write_report(rows: &[MetricRow], out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => {
            let mut w = create(p)?;
            write_report_csv(rows, &mut w)?;
            w.flush()?;
        }
        None => write_report_csv(rows, std::io::stdout().lock())?,
    }
    Ok(())
}

pub fn linkpred(cfg: &RunConfig, out: Option<&Path>) -> Result<()> {
    let model = load_model(cfg)?;
    let g = load_graph(require_existing(&cfg.paths.graph, "graph")?)?;
    check_matches(&model, &g)?;
    let split = load_split(cfg, &model)?;
    let author = node_type(&model, "author")?;
    let paper = node_type(&model, "paper")?;
    let train_links = co_neighbor_pairs(&g, author, paper);
    let candidates: Vec<NodeId> = nodes_of_type(&model, author)
        .into_iter()
        .filter(|&v| g.degree(v) > 0)
        .collect();
    let seed = cfg.master_seed();
    let report = link_prediction(
        &model.representations(),
        &candidates,
        &train_links,
        &split.collaborations,
        seed,
        &cfg.eval.logistic,
    )?;
    let row = |metric: &str, value| MetricRow {
        task: "linkpred".into(),
        metric: metric.into(),
        k: None,
        value,
        queries: report.test_pairs,
        seed,
    };
    write_report(&[row("accuracy", report.accuracy), row("f1", report.f1)], out)
}

pub fn retrieval(cfg: &RunConfig, out: Option<&Path>) -> Result<()> {
    let model = load_model(cfg)?;
    let split = load_split(cfg, &model)?;
    let candidates = nodes_of_type(&model, node_type(&model, "paper")?);
    let seed = cfg.master_seed();
    let queries = build_ranking_queries(
        &split.cocitations,
        &candidates,
        cfg.eval.negatives,
        cfg.eval.shared_negatives,
        seed,
    );
    let reps = model.representations();
    let mut rows = Vec::new();
    for &k in &cfg.eval.k {
        rows.push(MetricRow {
            task: "retrieval".into(),
            metric: "hit_ratio".into(),
            k: Some(k),
            value: hit_ratio_at_k(&queries, &reps, k)?,
            queries: queries.len(),
            seed,
        });
    }
    write_report(&rows, out)
}

pub fn recommend(cfg: &RunConfig, out: Option<&Path>) -> Result<()> {
    let model = load_model(cfg)?;
    let split = load_split(cfg, &model)?;
    let venues = nodes_of_type(&model, node_type(&model, "venue")?);
    let truth = truth_sets(&split.appearances);
    let reps = model.representations();
    let mut rows = Vec::new();
    for &k in &cfg.eval.k {
        let r = recall_at_k(&truth, &venues, &reps, k)?;
        rows.push(MetricRow {
            task: "recommend".into(),
            metric: "recall".into(),
            k: Some(k),
            value: r.value,
            queries: r.evaluated,
            seed: cfg.master_seed(),
        });
    }
    write_report(&rows, out)
}

pub fn search(cfg: &RunConfig, query: &str, target: &str, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Failure::config("--k must be >= 1"));
    }
    let model = load_model(cfg)?;
    let q = model
        .lookup(query)
        .ok_or_else(|| Failure::data(format!("unknown node `{query}`")))?;
    let candidates = nodes_of_type(&model, node_type(&model, target)?);
    let hits = top_k_relevant(&model.representations(), q, &candidates, k)?;
    let mut out = std::io::stdout().lock();
    for (rank, (v, score)) in hits.iter().enumerate() {
        writeln!(out, "{}\t{}\t{score:.6}", rank + 1, model.labels[v.index()])?;
    }
    Ok(())
}

pub fn synth(cfg: &RunConfig, out: &Path) -> Result<()> {
    let data = generate(&cfg.synth)?;
    data.write_dir(out)?;
    println!(
        "{} -> {} ({} collaborations, {} co-citations, {} appearances, {} delta nodes)",
        data.graph,
        out.display(),
        data.collaborations.len(),
        data.cocitations.len(),
        data.appearances.len(),
        data.delta.nodes.len()
    );
    Ok(())
}

pub fn export(cfg: &RunConfig, vectors: Option<&Path>, metadata: Option<&Path>) -> Result<()> {
    if vectors.is_none() && metadata.is_none() && cfg.paths.embeddings.is_none() {
        return Err(Failure::config("nothing to export: pass --vectors/--metadata or --embeddings"));
    }
    if vectors.is_some() != metadata.is_some() {
        return Err(Failure::config("--vectors and --metadata go together"));
    }
    let model = load_model(cfg)?;
    if let (Some(vp), Some(mp)) = (vectors, metadata) {
        let categories: HashMap<String, String> = match &cfg.paths.categories {
            Some(p) => {
                let f = File::open(p).map_err(|e| Failure::data(format!("cannot open {}: {e}", p.display())))?;
                read_pairs(f, &p.display().to_string())?.into_iter().collect()
            }
            None => HashMap::new(),
        };
        let types: Vec<String> = model
            .node_types
            .iter()
            .map(|&t| model.schema.type_name(t).to_string())
            .collect();
        let mut vw = create(vp)?;
        let mut mw = create(mp)?;
        write_projector(
            &model.representations(),
            &model.labels,
            &types,
            &|l| categories.get(l).cloned(),
            &mut vw,
            &mut mw,
        )?;
        vw.flush()?;
        mw.flush()?;
    }
    if let Some(p) = &cfg.paths.embeddings {
        let mut w = create(p)?;
        model.write_embeddings(&mut w)?;
        w.flush()?;
    }
    Ok(())
}
