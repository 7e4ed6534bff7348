//! Synthetic author/paper/venue networks with planted communities.
//!
//! Each community owns its authors, papers, venues and a token vocabulary.
//! Author slots, venues and citations cross into another community with
//! configurable probabilities; paper text is drawn from the community's
//! vocabulary (plus a shared one). The last fraction of each community's
//! papers falls after the split time: they are left out of the graph and
//! turned into evaluation events.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{GraphError, GraphSchema, HetGraph, NodeId};
use crate::seed;
use crate::text::{TextError, WordTable};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic parameters: {0}")]
    Config(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub communities: usize,
    pub authors: usize,
    pub papers: usize,
    pub venues: usize,
    /// Probability that a non-lead author slot is filled from another
    /// community. Also the default for venues and citations.
    pub cross_prob: f64,
    pub venue_cross_prob: Option<f64>,
    pub citation_cross_prob: Option<f64>,
    pub authors_per_paper: usize,
    pub citations_per_paper: usize,
    pub tokens_per_paper: usize,
    pub vocab_per_community: usize,
    pub shared_vocab: usize,
    /// Probability that a token comes from the shared vocabulary.
    pub shared_token_prob: f64,
    pub word_dim: usize,
    /// Spread of word vectors around their community centroid.
    pub word_noise: f64,
    /// Fraction of each community's papers after the split time.
    pub holdout: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            communities: 2,
            authors: 20,
            papers: 30,
            venues: 3,
            cross_prob: 0.05,
            venue_cross_prob: None,
            citation_cross_prob: None,
            authors_per_paper: 3,
            citations_per_paper: 2,
            tokens_per_paper: 20,
            vocab_per_community: 30,
            shared_vocab: 20,
            shared_token_prob: 0.2,
            word_dim: 16,
            word_noise: 0.5,
            holdout: 0.2,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn venue_cross(&self) -> f64 {
        self.venue_cross_prob.unwrap_or(self.cross_prob)
    }

    pub fn citation_cross(&self) -> f64 {
        self.citation_cross_prob.unwrap_or(self.cross_prob)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Config(m));
        for (name, p) in [
            ("cross probability", self.cross_prob),
            ("venue cross probability", self.venue_cross()),
            ("citation cross probability", self.citation_cross()),
            ("shared token probability", self.shared_token_prob),
            ("holdout fraction", self.holdout),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must be in [0, 1], got {p}"));
            }
        }
        if self.communities == 0 || self.authors == 0 || self.papers == 0 || self.venues == 0 {
            return bad("communities, authors, papers and venues must all be >= 1".into());
        }
        if self.authors_per_paper == 0 || self.authors_per_paper > self.authors {
            return bad(format!("authors per paper must be in 1..={}", self.authors));
        }
        if self.tokens_per_paper == 0 || self.vocab_per_community == 0 || self.word_dim == 0 {
            return bad("tokens per paper, community vocabulary and word dimension must be >= 1".into());
        }
        if self.shared_token_prob > 0.0 && self.shared_vocab == 0 {
            return bad("shared tokens requested but the shared vocabulary is empty".into());
        }
        if !(self.word_noise >= 0.0 && self.word_noise.is_finite()) {
            return bad("word noise must be finite and >= 0".into());
        }
        Ok(())
    }

    /// Papers per community that fall after the split time.
    pub fn held_out(&self) -> usize {
        ((self.papers as f64) * self.holdout).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthPaper {
    pub label: String,
    pub community: usize,
    /// After the split time.
    pub late: bool,
    pub authors: Vec<usize>,
    pub venue: usize,
    pub cites: Vec<usize>,
    /// Number of author slots drawn from another community.
    pub cross_authors: usize,
    pub text: String,
}

/// Nodes arriving after training: one new author per community writing one
/// new paper at an existing venue of that community.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SynthDelta {
    pub nodes: Vec<(String, String)>,
    pub edges: Vec<(String, String, String)>,
    pub content: Vec<(String, String)>,
}

impl SynthDelta {
    /// Add the delta to `g`; returns the new node ids.
    pub fn apply(&self, g: &mut HetGraph) -> Result<Vec<NodeId>, GraphError> {
        let mut added = Vec::new();
        for (label, ty) in &self.nodes {
            added.push(g.add_node_named(label, ty, None)?);
        }
        for (s, r, t) in &self.edges {
            g.add_edge_labeled(s, r, t)?;
        }
        for (label, text) in &self.content {
            let v = g.require(label)?;
            g.set_content(v, text.clone())?;
        }
        Ok(added)
    }

    pub fn write_dir(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        write_lines(&dir.join("nodes.tsv"), self.nodes.iter().map(|(a, b)| format!("{a}\t{b}")))?;
        write_lines(
            &dir.join("edges.tsv"),
            self.edges.iter().map(|(a, r, b)| format!("{a}\t{r}\t{b}")),
        )?;
        write_lines(&dir.join("content.tsv"), self.content.iter().map(|(a, b)| format!("{a}\t{b}")))
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub config: SynthConfig,
    /// The network before the split time.
    pub graph: HetGraph,
    pub papers: Vec<SynthPaper>,
    pub words: WordTable,
    /// The word-vector file exactly as written to disk.
    pub words_text: String,
    /// `(label, community name)` for every node, delta nodes included.
    pub categories: Vec<(String, String)>,
    /// New co-author pairs among authors present before the split.
    pub collaborations: Vec<(String, String)>,
    /// Pairs of earlier papers cited together by a later paper.
    pub cocitations: Vec<(String, String)>,
    /// `(author, venue)` appearances after the split.
    pub appearances: Vec<(String, String)>,
    pub delta: SynthDelta,
}

fn author_label(cfg: &SynthConfig, c: usize, i: usize) -> String {
    format!("A{}", c * cfg.authors + i + 1)
}

fn paper_label(cfg: &SynthConfig, c: usize, j: usize) -> String {
    format!("P{}", c * cfg.papers + j + 1)
}

fn venue_label(cfg: &SynthConfig, c: usize, k: usize) -> String {
    format!("V{}", c * cfg.venues + k + 1)
}

pub fn community_name(c: usize) -> String {
    format!("c{}", c + 1)
}

fn community_token(c: usize, k: usize) -> String {
    format!("c{}w{}", c + 1, k + 1)
}

fn shared_token(k: usize) -> String {
    format!("s{}", k + 1)
}

/// Another community than `c`, uniformly; `c` itself when there is only one.
fn other_community<R: Rng + ?Sized>(c: usize, k: usize, rng: &mut R) -> usize {
    if k < 2 {
        return c;
    }
    let o = rng.random_range(0..k - 1);
    if o >= c {
        o + 1
    } else {
        o
    }
}

fn paper_text<R: Rng + ?Sized>(cfg: &SynthConfig, c: usize, rng: &mut R) -> String {
    (0..cfg.tokens_per_paper)
        .map(|_| {
            if cfg.shared_vocab > 0 && rng.random_bool(cfg.shared_token_prob) {
                shared_token(rng.random_range(0..cfg.shared_vocab))
            } else {
                community_token(c, rng.random_range(0..cfg.vocab_per_community))
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn gaussian<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn word_vectors(cfg: &SynthConfig) -> String {
    let mut rng = seed::rng(cfg.seed, "synth-words", 0, 0);
    let d = cfg.word_dim;
    let scale = cfg.word_noise / (d as f64).sqrt();
    let mut lines = Vec::new();
    for c in 0..cfg.communities {
        let mu = gaussian(d, &mut rng);
        let norm = mu.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        for k in 0..cfg.vocab_per_community {
            let noise = gaussian(d, &mut rng);
            let v: Vec<String> = mu
                .iter()
                .zip(&noise)
                .map(|(m, e)| format!("{:.6}", m / norm + scale * e))
                .collect();
            lines.push(format!("{} {}", community_token(c, k), v.join(" ")));
        }
    }
    for k in 0..cfg.shared_vocab {
        let v: Vec<String> = gaussian(d, &mut rng).iter().map(|e| format!("{:.6}", scale * e)).collect();
        lines.push(format!("{} {}", shared_token(k), v.join(" ")));
    }
    let mut out = format!("{} {}\n", lines.len(), d);
    for l in lines {
        out.push_str(&l);
        out.push('\n');
    }
    out
}

/// Pick a member of `0..n` not in `taken`; `None` if all are taken.
fn pick_fresh<R: Rng + ?Sized>(n: usize, taken: &[usize], rng: &mut R) -> Option<usize> {
    let free: Vec<usize> = (0..n).filter(|i| !taken.contains(i)).collect();
    (!free.is_empty()).then(|| free[rng.random_range(0..free.len())])
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData, SynthError> {
    cfg.validate()?;
    let k = cfg.communities;
    let late_from = cfg.papers - cfg.held_out();
    let p_author = if k > 1 { cfg.cross_prob } else { 0.0 };
    let p_venue = if k > 1 { cfg.venue_cross() } else { 0.0 };
    let p_cite = if k > 1 { cfg.citation_cross() } else { 0.0 };

    // Papers are indexed globally as c * papers + j; authors as c * authors + i.
    let mut papers = Vec::with_capacity(k * cfg.papers);
    for c in 0..k {
        for j in 0..cfg.papers {
            let mut rng = seed::rng(cfg.seed, "synth-paper", c as u64, j as u64);
            let mut authors = vec![c * cfg.authors + j % cfg.authors];
            let mut cross_authors = 0;
            for _ in 1..cfg.authors_per_paper {
                let cross = rng.random_bool(p_author);
                let pool = if cross { other_community(c, k, &mut rng) } else { c };
                let taken: Vec<usize> = authors
                    .iter()
                    .filter(|&&a| a / cfg.authors == pool)
                    .map(|&a| a % cfg.authors)
                    .collect();
                if let Some(i) = pick_fresh(cfg.authors, &taken, &mut rng) {
                    authors.push(pool * cfg.authors + i);
                    cross_authors += usize::from(cross);
                }
            }
            let venue = if rng.random_bool(p_venue) {
                let o = other_community(c, k, &mut rng);
                o * cfg.venues + rng.random_range(0..cfg.venues)
            } else {
                c * cfg.venues + j % cfg.venues
            };
            let mut cites: Vec<usize> = Vec::new();
            for _ in 0..cfg.citations_per_paper {
                let pool = if rng.random_bool(p_cite) {
                    other_community(c, k, &mut rng)
                } else {
                    c
                };
                // Only papers published earlier can be cited.
                let taken: Vec<usize> = cites
                    .iter()
                    .filter(|&&p| p / cfg.papers == pool)
                    .map(|&p| p % cfg.papers)
                    .collect();
                if let Some(i) = pick_fresh(j, &taken, &mut rng) {
                    cites.push(pool * cfg.papers + i);
                }
            }
            papers.push(SynthPaper {
                label: paper_label(cfg, c, j),
                community: c,
                late: j >= late_from,
                authors,
                venue,
                cites,
                cross_authors,
                text: paper_text(cfg, c, &mut rng),
            });
        }
    }

    let mut g = HetGraph::new(GraphSchema::academic());
    let mut categories = Vec::new();
    for c in 0..k {
        for i in 0..cfg.authors {
            g.add_node_named(&author_label(cfg, c, i), "author", None)?;
            categories.push((author_label(cfg, c, i), community_name(c)));
        }
    }
    for c in 0..k {
        for j in 0..cfg.venues {
            g.add_node_named(&venue_label(cfg, c, j), "venue", None)?;
            categories.push((venue_label(cfg, c, j), community_name(c)));
        }
    }
    let author_of = |a: usize| author_label(cfg, a / cfg.authors, a % cfg.authors);
    let venue_of = |v: usize| venue_label(cfg, v / cfg.venues, v % cfg.venues);
    for p in papers.iter().filter(|p| !p.late) {
        g.add_node_named(&p.label, "paper", Some(p.text.clone()))?;
        categories.push((p.label.clone(), community_name(p.community)));
    }
    for p in papers.iter().filter(|p| !p.late) {
        for &a in &p.authors {
            g.add_edge_labeled(&author_of(a), "write", &p.label)?;
        }
        g.add_edge_labeled(&p.label, "publish", &venue_of(p.venue))?;
        for &q in &p.cites {
            g.add_edge_labeled(&p.label, "cite", &papers[q].label)?;
        }
    }

    let present = |label: &str| g.lookup(label).is_some_and(|v| g.degree(v) > 0);
    let mut collaborations = BTreeSet::new();
    let mut cocitations = BTreeSet::new();
    let mut appearances = BTreeSet::new();
    for p in papers.iter().filter(|p| p.late) {
        let current: Vec<usize> = p.authors.iter().copied().filter(|&a| present(&author_of(a))).collect();
        for (i, &a) in current.iter().enumerate() {
            for &b in &current[i + 1..] {
                collaborations.insert((a.min(b), a.max(b)));
            }
            appearances.insert((a, p.venue));
        }
        let cited: Vec<usize> = p.cites.iter().copied().filter(|&q| !papers[q].late).collect();
        for (i, &a) in cited.iter().enumerate() {
            for &b in &cited[i + 1..] {
                cocitations.insert((a.min(b), a.max(b)));
            }
        }
    }

    let mut delta = SynthDelta::default();
    for c in 0..k {
        let mut rng = seed::rng(cfg.seed, "synth-delta", c as u64, 0);
        let author = format!("NA{}", c + 1);
        let paper = format!("NP{}", c + 1);
        delta.nodes.push((author.clone(), "author".into()));
        delta.nodes.push((paper.clone(), "paper".into()));
        delta.edges.push((author.clone(), "write".into(), paper.clone()));
        let venue = venue_label(cfg, c, rng.random_range(0..cfg.venues));
        delta.edges.push((paper.clone(), "publish".into(), venue));
        let mut cited: Vec<usize> = Vec::new();
        for _ in 0..cfg.citations_per_paper {
            if let Some(j) = pick_fresh(late_from, &cited, &mut rng) {
                cited.push(j);
                delta.edges.push((paper.clone(), "cite".into(), paper_label(cfg, c, j)));
            }
        }
        delta.content.push((paper.clone(), paper_text(cfg, c, &mut rng)));
        categories.push((author, community_name(c)));
        categories.push((paper, community_name(c)));
    }

    let words_text = word_vectors(cfg);
    let words = WordTable::read(words_text.as_bytes())?;
    Ok(SynthData {
        config: cfg.clone(),
        graph: g,
        words,
        words_text,
        categories,
        collaborations: collaborations
            .into_iter()
            .map(|(a, b)| (author_of(a), author_of(b)))
            .collect(),
        cocitations: cocitations
            .into_iter()
            .map(|(a, b)| (papers[a].label.clone(), papers[b].label.clone()))
            .collect(),
        appearances: appearances
            .into_iter()
            .map(|(a, v)| (author_of(a), venue_of(v)))
            .collect(),
        papers,
        delta,
    })
}

fn write_lines<I: IntoIterator<Item = String>>(path: &Path, lines: I) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for l in lines {
        writeln!(w, "{l}")?;
    }
    w.flush()
}

fn pair_lines(pairs: &[(String, String)]) -> impl Iterator<Item = String> + '_ {
    pairs.iter().map(|(a, b)| format!("{a}\t{b}"))
}

impl SynthData {
    /// Community index of a label, if it was generated here.
    pub fn community(&self, label: &str) -> Option<usize> {
        self.categories
            .iter()
            .find(|(l, _)| l == label)
            .and_then(|(_, c)| c.strip_prefix('c')?.parse::<usize>().ok())
            .map(|c| c - 1)
    }

    /// Layout: `graph/` (schema, nodes, edges, content), `words.txt`,
    /// `categories.tsv`, `events/{collaborations,cocitations,appearances}.tsv`
    /// and `delta/{nodes,edges,content}.tsv`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), SynthError> {
        self.graph.save_dir(&dir.join("graph"))?;
        std::fs::write(dir.join("words.txt"), &self.words_text)?;
        write_lines(&dir.join("categories.tsv"), pair_lines(&self.categories))?;
        let events = dir.join("events");
        std::fs::create_dir_all(&events)?;
        write_lines(&events.join("collaborations.tsv"), pair_lines(&self.collaborations))?;
        write_lines(&events.join("cocitations.tsv"), pair_lines(&self.cocitations))?;
        write_lines(&events.join("appearances.tsv"), pair_lines(&self.appearances))?;
        self.delta.write_dir(&dir.join("delta"))?;
        Ok(())
    }
}
