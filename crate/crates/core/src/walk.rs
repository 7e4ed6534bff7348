//! Random and meta-path walks, window context extraction, the per-type
//! `frequency^0.75` noise distribution, and training triplet sampling.

use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{GraphSchema, HetGraph, NodeId, NodeType};
use crate::seed;

/// Exponent applied to corpus frequencies in the noise distribution.
pub const NOISE_POWER: f64 = 0.75;

/// How many times a negative equal to its positive is redrawn before the
/// collision is accepted.
pub const MAX_NEGATIVE_RESAMPLES: usize = 10;

#[derive(Debug, Error)]
pub enum WalkError {
    #[error("invalid walk configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid meta-path scheme `{scheme}`: {reason}")]
    Scheme { scheme: String, reason: String },
    #[error("start node type `{found}` does not match scheme `{scheme}` (expects `{expected}`)")]
    StartTypeMismatch {
        scheme: String,
        expected: String,
        found: String,
    },
    #[error("no eligible start nodes for the configured walks")]
    NoEligibleStart,
    #[error("walk corpus is empty")]
    EmptyCorpus,
    #[error("noise table has no nodes of type `{0}`")]
    MissingNoiseType(String),
}

/// An ordered node-type template such as `A-P-V-P-A`. The first and last
/// types coincide so the template can repeat: a walk of any length follows
/// `types[i % (len - 1)]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetaPathScheme {
    name: String,
    types: Vec<NodeType>,
}

impl MetaPathScheme {
    pub fn new(schema: &GraphSchema, types: Vec<NodeType>) -> Result<Self, WalkError> {
        let name: String = types
            .iter()
            .map(|t| schema.type_name(*t).chars().next().unwrap_or('?').to_ascii_uppercase())
            .collect();
        let err = |reason: String| WalkError::Scheme { scheme: name.clone(), reason };
        if types.len() < 2 {
            return Err(err("needs at least two node types".into()));
        }
        if types.first() != types.last() {
            return Err(err("first and last node types must match".into()));
        }
        for w in types.windows(2) {
            if !schema.connects(w[0], w[1]) {
                return Err(err(format!(
                    "no relation from `{}` to `{}`",
                    schema.type_name(w[0]),
                    schema.type_name(w[1])
                )));
            }
        }
        Ok(MetaPathScheme { name, types })
    }

    /// Parse either a letter string (`APVPA`, each letter the unique type
    /// whose name starts with it) or dash-separated type names
    /// (`author-paper-author`).
    pub fn parse(schema: &GraphSchema, text: &str) -> Result<Self, WalkError> {
        let text = text.trim();
        let err = |reason: String| WalkError::Scheme {
            scheme: text.to_string(),
            reason,
        };
        let types = if text.contains('-') {
            text.split('-')
                .map(|n| schema.node_type(n.trim()).ok_or_else(|| err(format!("unknown node type `{n}`"))))
                .collect::<Result<Vec<_>, _>>()?
        } else {
            text.chars()
                .map(|c| {
                    schema
                        .type_by_letter(c)
                        .ok_or_else(|| err(format!("letter `{c}` does not name a unique node type")))
                })
                .collect::<Result<Vec<_>, _>>()?
        };
        let mut s = Self::new(schema, types)?;
        if !text.contains('-') {
            s.name = text.to_ascii_uppercase();
        }
        Ok(s)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn types(&self) -> &[NodeType] {
        &self.types
    }

    pub fn first(&self) -> NodeType {
        self.types[0]
    }

    /// Required node type at walk position `pos`.
    pub fn type_at(&self, pos: usize) -> NodeType {
        self.types[pos % (self.types.len() - 1)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WalkMode {
    Random,
    MetaPath,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkConfig {
    pub walks_per_node: usize,
    pub walk_length: usize,
    pub window: usize,
    pub mode: WalkMode,
    pub schemes: Vec<String>,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            walks_per_node: 10,
            walk_length: 30,
            window: 7,
            mode: WalkMode::MetaPath,
            schemes: vec!["APA".into(), "APPA".into(), "APVPA".into()],
            seed: 0,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<(), WalkError> {
        if self.walks_per_node < 1 {
            return Err(WalkError::InvalidConfig("walks per node must be >= 1".into()));
        }
        if self.walk_length < 2 {
            return Err(WalkError::InvalidConfig("walk length must be >= 2".into()));
        }
        if self.window < 1 || self.window >= self.walk_length {
            return Err(WalkError::InvalidConfig(format!(
                "window must satisfy 1 <= window < walk length ({})",
                self.walk_length
            )));
        }
        if self.mode == WalkMode::MetaPath && self.schemes.is_empty() {
            return Err(WalkError::InvalidConfig("meta-path mode needs at least one scheme".into()));
        }
        Ok(())
    }

    pub fn parsed_schemes(&self, schema: &GraphSchema) -> Result<Vec<MetaPathScheme>, WalkError> {
        self.schemes.iter().map(|s| MetaPathScheme::parse(schema, s)).collect()
    }
}

pub type Walk = Vec<NodeId>;

/// Neighbor lists grouped by node type, precomputed for walking.
#[derive(Debug, Clone)]
pub struct TypedAdjacency {
    n_types: usize,
    all: Vec<Vec<NodeId>>,
    by_type: Vec<Vec<NodeId>>,
}

impl TypedAdjacency {
    pub fn new(g: &HetGraph) -> Self {
        let n_types = g.schema().node_type_count();
        let mut all = Vec::with_capacity(g.node_count());
        let mut by_type = vec![Vec::new(); g.node_count() * n_types];
        for v in g.nodes() {
            let ns = g.neighbors(v, None).expect("node from graph");
            for &n in &ns {
                by_type[v.index() * n_types + g.node_type(n).index()].push(n);
            }
            all.push(ns);
        }
        TypedAdjacency { n_types, all, by_type }
    }

    pub fn all(&self, v: NodeId) -> &[NodeId] {
        &self.all[v.index()]
    }

    pub fn of_type(&self, v: NodeId, t: NodeType) -> &[NodeId] {
        &self.by_type[v.index() * self.n_types + t.index()]
    }
}

/// Walk sampler over a fixed graph snapshot.
pub struct Walker<'g> {
    graph: &'g HetGraph,
    adj: TypedAdjacency,
}

impl<'g> Walker<'g> {
    pub fn new(graph: &'g HetGraph) -> Self {
        Walker {
            graph,
            adj: TypedAdjacency::new(graph),
        }
    }

    pub fn graph(&self) -> &HetGraph {
        self.graph
    }

    pub fn adjacency(&self) -> &TypedAdjacency {
        &self.adj
    }

    /// Uniform random walk of up to `len` nodes, ignoring types. Stops early at
    /// a node without neighbors.
    pub fn random_walk<R: Rng + ?Sized>(&self, start: NodeId, len: usize, rng: &mut R) -> Walk {
        let mut walk = Vec::with_capacity(len);
        walk.push(start);
        let mut cur = start;
        while walk.len() < len {
            match self.adj.all(cur).choose(rng) {
                Some(&next) => {
                    walk.push(next);
                    cur = next;
                }
                None => break,
            }
        }
        walk
    }

    /// Walk constrained to follow `scheme` (repeated), choosing uniformly among
    /// neighbors of the required next type. Truncates when no such neighbor
    /// exists.
    pub fn metapath_walk<R: Rng + ?Sized>(
        &self,
        start: NodeId,
        scheme: &MetaPathScheme,
        len: usize,
        rng: &mut R,
    ) -> Result<Walk, WalkError> {
        let start_type = self.graph.node_type(start);
        if start_type != scheme.first() {
            let schema = self.graph.schema();
            return Err(WalkError::StartTypeMismatch {
                scheme: scheme.name().to_string(),
                expected: schema.type_name(scheme.first()).to_string(),
                found: schema.type_name(start_type).to_string(),
            });
        }
        let mut walk = Vec::with_capacity(len);
        walk.push(start);
        let mut cur = start;
        while walk.len() < len {
            let want = scheme.type_at(walk.len());
            match self.adj.of_type(cur, want).choose(rng) {
                Some(&next) => {
                    walk.push(next);
                    cur = next;
                }
                None => break,
            }
        }
        Ok(walk)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WalkCorpus {
    pub walks: Vec<Walk>,
}

impl WalkCorpus {
    pub fn len(&self) -> usize {
        self.walks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.walks.iter().all(|w| w.is_empty())
    }

    /// Occurrence count of every node across all walks.
    pub fn frequencies(&self, node_count: usize) -> Vec<u64> {
        let mut f = vec![0u64; node_count];
        for w in &self.walks {
            for v in w {
                f[v.index()] += 1;
            }
        }
        f
    }

    /// One walk per line, space-separated node labels.
    pub fn write_labels<W: Write>(&self, g: &HetGraph, mut w: W) -> std::io::Result<()> {
        for walk in &self.walks {
            let line: Vec<&str> = walk.iter().map(|v| g.label(*v)).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

/// Generate `walks_per_node` walks from every eligible start node.
///
/// In meta-path mode a node is eligible when its type starts at least one
/// scheme; walk `i` from that node uses the `i mod k`-th of its `k`
/// applicable schemes. Each walk draws from its own RNG derived from
/// `(seed, start, i)`, so the corpus does not depend on thread count.
pub fn generate_corpus(g: &HetGraph, cfg: &WalkConfig) -> Result<WalkCorpus, WalkError> {
    cfg.validate()?;
    let walker = Walker::new(g);
    let schemes = match cfg.mode {
        WalkMode::MetaPath => cfg.parsed_schemes(g.schema())?,
        WalkMode::Random => Vec::new(),
    };
    let starts: Vec<(NodeId, Vec<&MetaPathScheme>)> = g
        .nodes()
        .filter_map(|v| match cfg.mode {
            WalkMode::Random => Some((v, Vec::new())),
            WalkMode::MetaPath => {
                let applicable: Vec<&MetaPathScheme> =
                    schemes.iter().filter(|s| s.first() == g.node_type(v)).collect();
                (!applicable.is_empty()).then_some((v, applicable))
            }
        })
        .collect();
    if starts.is_empty() {
        return Err(WalkError::NoEligibleStart);
    }
    let walks: Vec<Walk> = starts
        .par_iter()
        .flat_map_iter(|(start, applicable)| {
            let walker = &walker;
            (0..cfg.walks_per_node).map(move |i| {
                let mut rng = seed::rng(cfg.seed, "walk", start.0 as u64, i as u64);
                if applicable.is_empty() {
                    walker.random_walk(*start, cfg.walk_length, &mut rng)
                } else {
                    let scheme = applicable[i % applicable.len()];
                    walker
                        .metapath_walk(*start, scheme, cfg.walk_length, &mut rng)
                        .expect("start type checked")
                }
            })
        })
        .collect();
    Ok(WalkCorpus { walks })
}

/// All ordered `(walk[i], walk[j])` with `0 < |i - j| <= window`.
pub fn walk_context_pairs(walk: &[NodeId], window: usize) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
    (0..walk.len()).flat_map(move |i| {
        let lo = i.saturating_sub(window);
        let hi = (i + window).min(walk.len().saturating_sub(1));
        (lo..=hi).filter(move |&j| j != i).map(move |j| (walk[i], walk[j]))
    })
}

pub fn context_pairs(corpus: &WalkCorpus, window: usize) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
    corpus.walks.iter().flat_map(move |w| walk_context_pairs(w, window))
}

/// Which nodes a type's negative distribution ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativeSupport {
    /// Only nodes that occur in the walk corpus.
    #[default]
    CorpusVisited,
    /// Every node of the type; unvisited nodes count as one occurrence.
    AllNodes,
}

#[derive(Debug, Clone)]
struct TypeNoise {
    nodes: Vec<NodeId>,
    probs: Vec<f64>,
    dist: WeightedIndex<f64>,
}

/// Per-type sampler with `P_t(v) ∝ frequency(v)^0.75`.
#[derive(Debug, Clone)]
pub struct NoiseTable {
    node_types: Vec<NodeType>,
    per_type: Vec<Option<TypeNoise>>,
}

impl NoiseTable {
    pub fn build(corpus: &WalkCorpus, node_types: &[NodeType], n_types: usize) -> Result<Self, WalkError> {
        if corpus.is_empty() {
            return Err(WalkError::EmptyCorpus);
        }
        let freq = corpus.frequencies(node_types.len());
        Self::from_frequencies(&freq, node_types, n_types, NegativeSupport::CorpusVisited)
    }

    pub fn from_frequencies(
        freq: &[u64],
        node_types: &[NodeType],
        n_types: usize,
        support: NegativeSupport,
    ) -> Result<Self, WalkError> {
        let mut grouped: Vec<(Vec<NodeId>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); n_types];
        for (i, (&f, &t)) in freq.iter().zip(node_types).enumerate() {
            let count = match support {
                NegativeSupport::CorpusVisited => f,
                NegativeSupport::AllNodes => f.max(1),
            };
            if count > 0 {
                grouped[t.index()].0.push(NodeId::from(i));
                grouped[t.index()].1.push((count as f64).powf(NOISE_POWER));
            }
        }
        if grouped.iter().all(|(n, _)| n.is_empty()) {
            return Err(WalkError::EmptyCorpus);
        }
        let per_type = grouped
            .into_iter()
            .map(|(nodes, weights)| {
                if nodes.is_empty() {
                    return None;
                }
                let total: f64 = weights.iter().sum();
                let probs = weights.iter().map(|w| w / total).collect();
                let dist = WeightedIndex::new(&weights).expect("positive weights");
                Some(TypeNoise { nodes, probs, dist })
            })
            .collect();
        Ok(NoiseTable {
            node_types: node_types.to_vec(),
            per_type,
        })
    }

    pub fn covers(&self, t: NodeType) -> bool {
        self.per_type.get(t.index()).is_some_and(Option::is_some)
    }

    /// `(node, probability)` pairs of one type's distribution.
    pub fn distribution(&self, t: NodeType) -> Option<impl Iterator<Item = (NodeId, f64)> + '_> {
        let tn = self.per_type.get(t.index())?.as_ref()?;
        Some(tn.nodes.iter().copied().zip(tn.probs.iter().copied()))
    }

    pub fn probability(&self, v: NodeId) -> f64 {
        let t = self.node_types[v.index()];
        self.distribution(t)
            .and_then(|mut d| d.find(|(n, _)| *n == v).map(|(_, p)| p))
            .unwrap_or(0.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, t: NodeType, rng: &mut R) -> Option<NodeId> {
        let tn = self.per_type.get(t.index())?.as_ref()?;
        Some(tn.nodes[tn.dist.sample(rng)])
    }

    /// Draw a negative of `context`'s type, redrawing up to
    /// [`MAX_NEGATIVE_RESAMPLES`] times while it equals `context`. The flag is
    /// `true` when the collision had to be accepted.
    pub fn sample_negative<R: Rng + ?Sized>(&self, context: NodeId, rng: &mut R) -> Option<(NodeId, bool)> {
        self.sample_negative_of_type(context, self.node_types[context.index()], rng)
    }

    /// As [`NoiseTable::sample_negative`], for a context the table was not
    /// built with (its type given explicitly).
    pub fn sample_negative_of_type<R: Rng + ?Sized>(
        &self,
        context: NodeId,
        t: NodeType,
        rng: &mut R,
    ) -> Option<(NodeId, bool)> {
        let mut neg = self.sample(t, rng)?;
        for _ in 0..MAX_NEGATIVE_RESAMPLES {
            if neg != context {
                return Some((neg, false));
            }
            neg = self.sample(t, rng)?;
        }
        Some((neg, neg == context))
    }
}

/// `⟨center, context, negative⟩`; context and negative share a node type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ContextTriplet {
    pub center: NodeId,
    pub context: NodeId,
    pub negative: NodeId,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TripletStats {
    pub pairs: usize,
    pub triplets: usize,
    /// Triplets whose negative equals the context after exhausting resamples.
    pub collisions: usize,
}

/// Attach `negatives` sampled negatives to every pair (one triplet each).
pub fn sample_triplets<I, R>(
    pairs: I,
    noise: &NoiseTable,
    negatives: usize,
    rng: &mut R,
) -> Result<(Vec<ContextTriplet>, TripletStats), WalkError>
where
    I: IntoIterator<Item = (NodeId, NodeId)>,
    R: Rng + ?Sized,
{
    let mut out = Vec::new();
    let mut stats = TripletStats::default();
    for (center, context) in pairs {
        stats.pairs += 1;
        for _ in 0..negatives {
            let (negative, collided) = noise
                .sample_negative(context, rng)
                .ok_or_else(|| WalkError::MissingNoiseType(format!("#{}", noise.node_types[context.index()].0)))?;
            stats.collisions += usize::from(collided);
            out.push(ContextTriplet { center, context, negative });
        }
    }
    stats.triplets = out.len();
    if stats.collisions > 0 {
        log::warn!(
            "{} of {} negatives equal their positive context (single-node type?)",
            stats.collisions,
            stats.triplets
        );
    }
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphSchema;
    use rand::SeedableRng;
    use std::collections::HashSet;

    fn rng(s: u64) -> seed::Rng {
        seed::Rng::seed_from_u64(s)
    }

    fn build(nodes: &[(&str, &str)], edges: &[(&str, &str, &str)]) -> HetGraph {
        let mut g = HetGraph::new(GraphSchema::academic());
        for (l, t) in nodes {
            g.add_node_named(l, t, None).unwrap();
        }
        for (s, r, t) in edges {
            g.add_edge_labeled(s, r, t).unwrap();
        }
        g
    }

    /// Small academic network: authors, papers, venues.
    pub(crate) fn toy() -> HetGraph {
        build(
            &[
                ("A1", "author"), ("A2", "author"), ("A3", "author"), ("A4", "author"),
                ("P1", "paper"), ("P2", "paper"), ("P3", "paper"), ("P4", "paper"),
                ("V1", "venue"), ("V2", "venue"), ("V3", "venue"),
            ],
            &[
                ("A1", "write", "P1"), ("A1", "write", "P2"), ("A2", "write", "P3"),
                ("A3", "write", "P2"), ("A3", "write", "P4"), ("A4", "write", "P4"),
                ("P1", "publish", "V1"), ("P2", "publish", "V1"), ("P3", "publish", "V2"),
                ("P4", "publish", "V3"), ("P3", "cite", "P1"), ("P4", "cite", "P2"),
            ],
        )
    }

    #[test]
    fn isolated_start_gives_single_node_walk() {
        let g = build(&[("A1", "author")], &[]);
        let w = Walker::new(&g);
        assert_eq!(w.random_walk(NodeId(0), 10, &mut rng(1)), vec![NodeId(0)]);
    }

    #[test]
    fn two_node_path_alternates() {
        let g = build(&[("A1", "author"), ("P1", "paper")], &[("A1", "write", "P1")]);
        let w = Walker::new(&g);
        let walk = w.random_walk(NodeId(0), 4, &mut rng(3));
        assert_eq!(walk, vec![NodeId(0), NodeId(1), NodeId(0), NodeId(1)]);
    }

    #[test]
    fn star_leaf_frequencies_are_uniform() {
        // center paper with 8 author leaves; second step from center is uniform
        let mut nodes = vec![("P0".to_string(), "paper")];
        for i in 0..8 {
            nodes.push((format!("A{i}"), "author"));
        }
        let mut g = HetGraph::new(GraphSchema::academic());
        for (l, t) in &nodes {
            g.add_node_named(l, t, None).unwrap();
        }
        for i in 0..8 {
            g.add_edge_labeled(&format!("A{i}"), "write", "P0").unwrap();
        }
        let w = Walker::new(&g);
        let mut r = rng(11);
        let trials = 10_000usize;
        let mut counts = [0usize; 8];
        for _ in 0..trials {
            let walk = w.random_walk(NodeId(0), 2, &mut r);
            counts[walk[1].index() - 1] += 1;
        }
        // multinomial: mean n/8, sd sqrt(n p (1-p))
        let p = 1.0 / 8.0;
        let mean = trials as f64 * p;
        let sd = (trials as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() < 3.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn metapath_walk_follows_scheme() {
        let g = toy();
        let scheme = MetaPathScheme::parse(g.schema(), "APVPA").unwrap();
        let w = Walker::new(&g);
        let a3 = g.lookup("A3").unwrap();
        let mut r = rng(5);
        for _ in 0..200 {
            let walk = w.metapath_walk(a3, &scheme, 13, &mut r).unwrap();
            let letters: String = walk.iter().map(|v| g.label(*v).chars().next().unwrap()).collect();
            let expected: String = "APVP".repeat(4).chars().take(letters.len()).collect();
            assert_eq!(letters, expected);
            for pair in walk.windows(2) {
                assert!(g.neighbors(pair[0], None).unwrap().contains(&pair[1]));
            }
        }
    }

    #[test]
    fn metapath_apa_with_single_author_oscillates() {
        let g = build(&[("A1", "author"), ("P1", "paper")], &[("A1", "write", "P1")]);
        let scheme = MetaPathScheme::parse(g.schema(), "APA").unwrap();
        let walk = Walker::new(&g).metapath_walk(NodeId(0), &scheme, 6, &mut rng(0)).unwrap();
        assert_eq!(walk.iter().map(|v| v.0).collect::<Vec<_>>(), vec![0, 1, 0, 1, 0, 1]);
    }

    #[test]
    fn metapath_truncates_without_venue() {
        let g = build(
            &[("A1", "author"), ("P1", "paper"), ("V1", "venue")],
            &[("A1", "write", "P1")],
        );
        let scheme = MetaPathScheme::parse(g.schema(), "APVPA").unwrap();
        let walk = Walker::new(&g).metapath_walk(NodeId(0), &scheme, 10, &mut rng(0)).unwrap();
        assert_eq!(walk, vec![NodeId(0), NodeId(1)]);
    }

    #[test]
    fn metapath_start_type_checked() {
        let g = toy();
        let scheme = MetaPathScheme::parse(g.schema(), "APA").unwrap();
        let p1 = g.lookup("P1").unwrap();
        assert!(matches!(
            Walker::new(&g).metapath_walk(p1, &scheme, 5, &mut rng(0)),
            Err(WalkError::StartTypeMismatch { .. })
        ));
    }

    #[test]
    fn scheme_validation() {
        let s = GraphSchema::academic();
        assert!(MetaPathScheme::parse(&s, "APV").is_err());
        assert!(MetaPathScheme::parse(&s, "AVA").is_err());
        assert!(MetaPathScheme::parse(&s, "A").is_err());
        assert!(MetaPathScheme::parse(&s, "AXA").is_err());
        let named = MetaPathScheme::parse(&s, "author-paper-author").unwrap();
        assert_eq!(named, MetaPathScheme::parse(&s, "APA").unwrap());
        let apvpa = MetaPathScheme::parse(&s, "apvpa").unwrap();
        assert_eq!(apvpa.type_at(4), apvpa.first());
        assert_eq!(apvpa.type_at(5), s.node_type("paper").unwrap());
    }

    #[test]
    fn paper_recipe_corpus() {
        let g = toy();
        let cfg = WalkConfig::default();
        assert_eq!((cfg.walks_per_node, cfg.walk_length, cfg.window), (10, 30, 7));
        let corpus = generate_corpus(&g, &cfg).unwrap();
        assert_eq!(corpus.len(), 4 * 10);
        // round robin: walk i uses scheme i mod 3
        let apa = corpus.walks[0].iter().map(|v| g.label(*v).chars().next().unwrap()).collect::<String>();
        assert!(apa.starts_with("APAPA"), "{apa}");
        let appa: String = corpus.walks[1].iter().take(4).map(|v| g.label(*v).chars().next().unwrap()).collect();
        assert_eq!(appa, "APPA");
        let again = generate_corpus(&g, &cfg).unwrap();
        assert_eq!(corpus, again);
    }

    #[test]
    fn single_edge_corpus_size() {
        let g = build(&[("A1", "author"), ("P1", "paper")], &[("A1", "write", "P1")]);
        let cfg = WalkConfig {
            walks_per_node: 1,
            walk_length: 3,
            window: 1,
            mode: WalkMode::MetaPath,
            schemes: vec!["APA".into()],
            seed: 1,
        };
        assert_eq!(generate_corpus(&g, &cfg).unwrap().len(), 1);
        let cfg = WalkConfig { mode: WalkMode::Random, ..cfg };
        assert_eq!(generate_corpus(&g, &cfg).unwrap().len(), 2);
    }

    #[test]
    fn no_eligible_start() {
        let g = build(&[("P1", "paper")], &[]);
        let cfg = WalkConfig { schemes: vec!["APA".into()], ..WalkConfig::default() };
        assert!(matches!(generate_corpus(&g, &cfg), Err(WalkError::NoEligibleStart)));
    }

    #[test]
    fn corpus_independent_of_thread_count() {
        let g = toy();
        let cfg = WalkConfig { seed: 42, ..WalkConfig::default() };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| generate_corpus(&g, &cfg).unwrap());
        let b = four.install(|| generate_corpus(&g, &cfg).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn window_contexts_of_center() {
        let walk: Vec<NodeId> = (0..5).map(NodeId).collect(); // V1,P2,A3,P4,V3
        let ctx: Vec<NodeId> = walk_context_pairs(&walk, 2)
            .filter(|(c, _)| *c == NodeId(2))
            .map(|(_, x)| x)
            .collect();
        assert_eq!(ctx, vec![NodeId(0), NodeId(1), NodeId(3), NodeId(4)]);
        assert_eq!(walk_context_pairs(&walk[..1], 3).count(), 0);
        assert_eq!(walk_context_pairs(&walk, 4).count(), 5 * 4);
        assert_eq!(walk_context_pairs(&walk, 9).count(), 5 * 4);
    }

    #[test]
    fn exact_power_noise() {
        let types = vec![NodeType(0), NodeType(0)];
        let nt = NoiseTable::from_frequencies(&[16, 81], &types, 1, NegativeSupport::CorpusVisited).unwrap();
        assert!((nt.probability(NodeId(0)) - 8.0 / 35.0).abs() < 1e-12);
        assert!((nt.probability(NodeId(1)) - 27.0 / 35.0).abs() < 1e-12);
        let single = NoiseTable::from_frequencies(&[5], &types[..1], 1, NegativeSupport::CorpusVisited).unwrap();
        assert_eq!(single.probability(NodeId(0)), 1.0);
    }

    #[test]
    fn noise_support_modes() {
        let types = vec![NodeType(0), NodeType(0), NodeType(1)];
        let visited = NoiseTable::from_frequencies(&[3, 0, 2], &types, 2, NegativeSupport::CorpusVisited).unwrap();
        assert_eq!(visited.probability(NodeId(1)), 0.0);
        let all = NoiseTable::from_frequencies(&[3, 0, 2], &types, 2, NegativeSupport::AllNodes).unwrap();
        assert!(all.probability(NodeId(1)) > 0.0);
        assert!(NoiseTable::build(&WalkCorpus::default(), &types, 2).is_err());
    }

    #[test]
    fn triplet_types_and_multiplicity() {
        let g = toy();
        let corpus = generate_corpus(&g, &WalkConfig::default()).unwrap();
        let noise = NoiseTable::build(&corpus, g.node_types(), 3).unwrap();
        let pairs: Vec<_> = context_pairs(&corpus, 2).take(50).collect();
        let (trips, stats) = sample_triplets(pairs.iter().copied(), &noise, 5, &mut rng(9)).unwrap();
        assert_eq!(trips.len(), 250);
        assert_eq!(stats.pairs, 50);
        for t in &trips {
            assert_eq!(g.node_type(t.context), g.node_type(t.negative));
        }
    }

    #[test]
    fn single_paper_collision_fallback() {
        let g = build(&[("A1", "author"), ("A2", "author"), ("P1", "paper")], &[("A1", "write", "P1"), ("A2", "write", "P1")]);
        let corpus = WalkCorpus { walks: vec![vec![NodeId(0), NodeId(2), NodeId(1)]] };
        let noise = NoiseTable::build(&corpus, g.node_types(), 3).unwrap();
        let (trips, stats) =
            sample_triplets([(NodeId(0), NodeId(2))], &noise, 1, &mut rng(0)).unwrap();
        assert_eq!(trips[0].negative, NodeId(2));
        assert_eq!(stats.collisions, 1);
    }

    #[test]
    fn missing_noise_type_errors() {
        let types = vec![NodeType(0), NodeType(1)];
        let noise = NoiseTable::from_frequencies(&[1, 0], &types, 2, NegativeSupport::CorpusVisited).unwrap();
        assert!(!noise.covers(NodeType(1)));
        assert!(sample_triplets([(NodeId(0), NodeId(1))], &noise, 1, &mut rng(0)).is_err());
    }

    #[test]
    fn corpus_dump_uses_labels() {
        let g = toy();
        let corpus = WalkCorpus { walks: vec![vec![NodeId(0), NodeId(4)]] };
        let mut buf = Vec::new();
        corpus.write_labels(&g, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "A1 P1\n");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn pair_symmetry(walk in proptest::collection::vec(0u32..20, 0..15), window in 1usize..6) {
                let walk: Vec<NodeId> = walk.into_iter().map(NodeId).collect();
                let mut fwd: Vec<(u32, u32)> = walk_context_pairs(&walk, window).map(|(a, b)| (a.0, b.0)).collect();
                let mut rev: Vec<(u32, u32)> = fwd.iter().map(|&(a, b)| (b, a)).collect();
                fwd.sort();
                rev.sort();
                prop_assert_eq!(fwd, rev);
            }

            #[test]
            fn walks_are_edge_valid(seed in 0u64..500, len in 2usize..20) {
                let g = toy();
                let w = Walker::new(&g);
                let mut r = rng(seed);
                for start in g.nodes() {
                    let walk = w.random_walk(start, len, &mut r);
                    prop_assert!(walk.len() <= len);
                    for p in walk.windows(2) {
                        prop_assert!(g.neighbors(p[0], None).unwrap().contains(&p[1]));
                    }
                }
                let seen: HashSet<NodeId> = w.random_walk(NodeId(0), len, &mut r).into_iter().collect();
                prop_assert!(!seen.is_empty());
            }
        }
    }
}
