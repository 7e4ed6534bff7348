//! Representations for nodes that arrive after training.
//!
//! New content nodes are encoded with the trained encoder. Other new nodes get
//! a single vector fitted by SGD against the frozen representations of the
//! nodes met on short walks rooted at them.

use std::collections::{BTreeSet, HashMap};

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::{HetGraph, NodeId};
use crate::seed;
use crate::text::{sigmoid, TextError, WordTable};
use crate::train::{log_sigmoid, ModelError, TrainedModel};
use crate::walk::{ContextTriplet, MetaPathScheme, NoiseTable, Walk, WalkError, WalkMode, Walker};

#[derive(Debug, Error)]
pub enum OnlineError {
    #[error("invalid online configuration: {0}")]
    Config(String),
    #[error("model has no text encoder")]
    NoEncoder,
    #[error("node {0} is part of the trained model; only new nodes can be updated")]
    NotNew(String),
    #[error("new node {0} has no edges")]
    Isolated(String),
    #[error("new node {0} has no neighbor with a known representation")]
    Unanchored(String),
    #[error("no walk scheme starts at node type {type_name} (node {label})")]
    NoScheme { label: String, type_name: String },
    #[error("scheme {scheme} must start and end with type {type_name}")]
    SchemeMismatch { scheme: String, type_name: String },
    #[error("scheme {scheme} is not walkable from {label}: step {step} needs a {want} neighbor of a {from} node")]
    Blocked {
        scheme: String,
        label: String,
        step: usize,
        from: String,
        want: String,
    },
    #[error("no trained nodes of type {0} to draw negatives from")]
    NoNegatives(String),
    #[error(transparent)]
    Walk(#[from] WalkError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OnlineConfig {
    /// Rooted walks per new node.
    pub walks: usize,
    /// Contexts collected after the root; equals the trained window.
    pub window: usize,
    pub learning_rate: f64,
    /// Relative change of the vector between sweeps that ends the update.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Walk scheme; `None` picks the first trained scheme starting at the
    /// node's type.
    pub scheme: Option<String>,
    pub seed: u64,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        OnlineConfig {
            walks: 100,
            window: 7,
            learning_rate: 0.025,
            tolerance: 1e-4,
            max_iterations: 100,
            scheme: None,
            seed: 0,
        }
    }
}

impl OnlineConfig {
    /// Defaults with the model's window and seed.
    pub fn for_model(model: &TrainedModel) -> Self {
        OnlineConfig {
            window: model.walk_config.window,
            seed: model.train_config.seed,
            ..OnlineConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), OnlineError> {
        let bad = |m: &str| Err(OnlineError::Config(m.to_string()));
        if self.walks == 0 {
            return bad("number of walks must be >= 1");
        }
        if self.window == 0 {
            return bad("window must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.tolerance.is_nan() || self.tolerance < 0.0 {
            return bad("tolerance must be >= 0");
        }
        Ok(())
    }
}

/// Read-only resolved representations of the trained nodes, plus what the
/// update needs from training (noise table, schemes).
#[derive(Debug, Clone)]
pub struct FrozenModel {
    reps: Array2<f64>,
    noise: NoiseTable,
    mode: WalkMode,
    schemes: Vec<String>,
}

impl FrozenModel {
    pub fn new(model: &TrainedModel) -> Result<Self, OnlineError> {
        Ok(FrozenModel {
            reps: model.representations(),
            noise: model.noise_table()?,
            mode: model.walk_config.mode,
            schemes: model.walk_config.schemes.clone(),
        })
    }

    pub fn node_count(&self) -> usize {
        self.reps.nrows()
    }

    pub fn dim(&self) -> usize {
        self.reps.ncols()
    }

    pub fn representation(&self, v: NodeId) -> Option<ArrayView1<'_, f64>> {
        (v.index() < self.node_count()).then(|| self.reps.row(v.index()))
    }

    pub fn representations(&self) -> &Array2<f64> {
        &self.reps
    }

    /// SHA-256 over the bit patterns of all frozen vectors.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for x in &self.reps {
            h.update(x.to_bits().to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Vectors of new nodes computed so far, looked up after the frozen ones.
pub type Overlay = HashMap<NodeId, Array1<f64>>;

fn resolve<'a>(frozen: &'a FrozenModel, overlay: &'a Overlay, v: NodeId) -> Option<ArrayView1<'a, f64>> {
    frozen.representation(v).or_else(|| overlay.get(&v).map(|a| a.view()))
}

#[derive(Debug, Clone)]
pub struct Inference {
    pub vector: Array1<f64>,
    /// The text had no tokens; the vector is zero.
    pub empty: bool,
}

/// Encode a new content node's text with the trained encoder.
pub fn infer_content_node(model: &TrainedModel, words: &WordTable, text: &str) -> Result<Inference, OnlineError> {
    model.check_words(words)?;
    let encoder = model.text_encoder(words).ok_or(OnlineError::NoEncoder)?;
    let enc = encoder.encode(text)?;
    Ok(Inference {
        vector: enc.output,
        empty: enc.empty,
    })
}

#[derive(Debug, Clone)]
pub struct OnlineUpdate {
    pub node: NodeId,
    pub vector: Array1<f64>,
    pub initial: Array1<f64>,
    pub walks: Vec<Walk>,
    pub triplets: Vec<ContextTriplet>,
    /// Sweeps actually run.
    pub sweeps: usize,
    /// Objective value on the triplet set before the first sweep and after
    /// each sweep (higher is better).
    pub objective: Vec<f64>,
}

impl OnlineUpdate {
    /// Distinct context nodes over all walks.
    pub fn contexts(&self) -> BTreeSet<NodeId> {
        self.triplets.iter().map(|t| t.context).collect()
    }
}

fn choose_scheme(g: &HetGraph, v: NodeId, frozen: &FrozenModel, cfg: &OnlineConfig) -> Result<Option<MetaPathScheme>, OnlineError> {
    let schema = g.schema();
    let t = g.node_type(v);
    let type_name = || schema.type_name(t).to_string();
    let scheme = match &cfg.scheme {
        Some(s) => MetaPathScheme::parse(schema, s)?,
        None if frozen.mode == WalkMode::Random => return Ok(None),
        None => {
            let mut found = None;
            for s in &frozen.schemes {
                let s = MetaPathScheme::parse(schema, s)?;
                if s.first() == t {
                    found = Some(s);
                    break;
                }
            }
            found.ok_or_else(|| OnlineError::NoScheme {
                label: g.label(v).to_string(),
                type_name: type_name(),
            })?
        }
    };
    if scheme.first() != t || scheme.types().last() != Some(&t) {
        return Err(OnlineError::SchemeMismatch {
            scheme: scheme.name().to_string(),
            type_name: type_name(),
        });
    }
    Ok(Some(scheme))
}

/// Fail unless at least one walk from `v` can follow `scheme` for `steps`
/// steps; names the first step no walk can take.
fn check_walkable(walker: &Walker, v: NodeId, scheme: &MetaPathScheme, steps: usize) -> Result<(), OnlineError> {
    let g = walker.graph();
    let schema = g.schema();
    let mut frontier: BTreeSet<NodeId> = BTreeSet::from([v]);
    for step in 1..=steps {
        let want = scheme.type_at(step);
        let next: BTreeSet<NodeId> = frontier
            .iter()
            .flat_map(|&u| walker.adjacency().of_type(u, want).iter().copied())
            .collect();
        if next.is_empty() {
            return Err(OnlineError::Blocked {
                scheme: scheme.name().to_string(),
                label: g.label(v).to_string(),
                step,
                from: schema.type_name(scheme.type_at(step - 1)).to_string(),
                want: schema.type_name(want).to_string(),
            });
        }
        frontier = next;
    }
    Ok(())
}

/// Sum over triplets of `log σ(Θc·θ) + log σ(−Θn·θ)`.
fn online_objective(theta: &Array1<f64>, pairs: &[(ArrayView1<f64>, ArrayView1<f64>)]) -> f64 {
    pairs
        .iter()
        .map(|(c, n)| log_sigmoid(c.dot(theta)) + log_sigmoid(-n.dot(theta)))
        .sum()
}

/// Fit the vector of new node `v` in `g` (the graph including the new
/// nodes). Only `v`'s vector is produced; `frozen` and `overlay` are read
/// only. Contexts that are `v` itself or have no representation are skipped.
pub fn update_new_node(
    g: &HetGraph,
    v: NodeId,
    frozen: &FrozenModel,
    overlay: &Overlay,
    cfg: &OnlineConfig,
) -> Result<OnlineUpdate, OnlineError> {
    cfg.validate()?;
    let label = || g.label(v).to_string();
    if v.index() < frozen.node_count() {
        return Err(OnlineError::NotNew(label()));
    }
    if g.degree(v) == 0 {
        return Err(OnlineError::Isolated(label()));
    }
    let anchors: Vec<ArrayView1<f64>> = g
        .neighbors(v, None)
        .map_err(|e| OnlineError::Config(e.to_string()))?
        .into_iter()
        .filter_map(|u| resolve(frozen, overlay, u))
        .collect();
    if anchors.is_empty() {
        return Err(OnlineError::Unanchored(label()));
    }
    let mut initial = Array1::zeros(frozen.dim());
    for a in &anchors {
        initial += a;
    }
    initial /= anchors.len() as f64;

    let walker = Walker::new(g);
    let scheme = choose_scheme(g, v, frozen, cfg)?;
    if let Some(s) = &scheme {
        check_walkable(&walker, v, s, cfg.window)?;
    }
    let mut walks = Vec::with_capacity(cfg.walks);
    let mut triplets = Vec::new();
    for i in 0..cfg.walks {
        let mut rng = seed::rng(cfg.seed, "online", v.0 as u64, i as u64);
        let walk = match &scheme {
            Some(s) => walker.metapath_walk(v, s, cfg.window + 1, &mut rng)?,
            None => walker.random_walk(v, cfg.window + 1, &mut rng),
        };
        for &c in &walk[1..] {
            if c == v || resolve(frozen, overlay, c).is_none() {
                continue;
            }
            let t = g.node_type(c);
            let (negative, _) = frozen
                .noise
                .sample_negative_of_type(c, t, &mut rng)
                .ok_or_else(|| OnlineError::NoNegatives(g.schema().type_name(t).to_string()))?;
            triplets.push(ContextTriplet {
                center: v,
                context: c,
                negative,
            });
        }
        walks.push(walk);
    }

    let pairs: Vec<(ArrayView1<f64>, ArrayView1<f64>)> = triplets
        .iter()
        .map(|t| {
            (
                resolve(frozen, overlay, t.context).expect("filtered above"),
                frozen.representation(t.negative).expect("negatives are trained nodes"),
            )
        })
        .collect();
    let mut theta = initial.clone();
    let mut objective = vec![online_objective(&theta, &pairs)];
    let mut sweeps = 0;
    for k in 0..cfg.max_iterations {
        let lr = cfg.learning_rate * (1.0 - k as f64 / cfg.max_iterations as f64).max(1e-4);
        let before = theta.clone();
        for (c, n) in &pairs {
            let gc = 1.0 - sigmoid(c.dot(&theta));
            let gn = sigmoid(n.dot(&theta));
            theta.scaled_add(lr * gc, c);
            theta.scaled_add(-lr * gn, n);
        }
        sweeps += 1;
        objective.push(online_objective(&theta, &pairs));
        let change = (&theta - &before).dot(&(&theta - &before)).sqrt();
        let scale = before.dot(&before).sqrt().max(1e-12);
        if change / scale < cfg.tolerance {
            break;
        }
    }
    Ok(OnlineUpdate {
        node: v,
        vector: theta,
        initial,
        walks,
        triplets,
        sweeps,
        objective,
    })
}

/// How a new node's vector was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateMethod {
    Encoded,
    Fitted,
}

#[derive(Debug, Clone)]
pub struct NewVector {
    pub node: NodeId,
    pub vector: Array1<f64>,
    pub method: UpdateMethod,
    /// Encoded from empty text.
    pub empty_text: bool,
}

/// Vectors for every node of `g` beyond the trained ones: content nodes are
/// encoded first (when the model has an encoder and `words` is given), then
/// the rest are fitted in index order, each seeing the vectors before it.
pub fn embed_new_nodes(
    model: &TrainedModel,
    frozen: &FrozenModel,
    g: &HetGraph,
    words: Option<&WordTable>,
    cfg: &OnlineConfig,
) -> Result<Vec<NewVector>, OnlineError> {
    let new_nodes: Vec<NodeId> = g.nodes().skip(frozen.node_count()).collect();
    let mut overlay = Overlay::new();
    let mut out = Vec::with_capacity(new_nodes.len());
    let encodes = model.encoder().is_some() && words.is_some();
    let mut fitted = Vec::new();
    for &v in &new_nodes {
        match (g.content(v), words) {
            (Some(text), Some(w)) if encodes => {
                let inf = infer_content_node(model, w, text)?;
                if inf.empty {
                    log::warn!("new node {} has empty text; its vector is zero", g.label(v));
                }
                overlay.insert(v, inf.vector.clone());
                out.push(NewVector {
                    node: v,
                    vector: inf.vector,
                    method: UpdateMethod::Encoded,
                    empty_text: inf.empty,
                });
            }
            _ => fitted.push(v),
        }
    }
    for v in fitted {
        let up = update_new_node(g, v, frozen, &overlay, cfg)?;
        log::debug!(
            "fitted {} from {} triplets in {} sweeps",
            g.label(v),
            up.triplets.len(),
            up.sweeps
        );
        overlay.insert(v, up.vector.clone());
        out.push(NewVector {
            node: v,
            vector: up.vector,
            method: UpdateMethod::Fitted,
            empty_text: false,
        });
    }
    out.sort_by_key(|n| n.node);
    Ok(out)
}
