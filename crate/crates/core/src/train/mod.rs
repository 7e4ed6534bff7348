//! Walk-sampled triplet training for the three objectives.

mod adam;
mod model;
mod objective;

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use model::{write_embedding_line, ModelError, TrainedModel, MODEL_MAGIC, MODEL_VERSION};
pub use objective::{
    heterogeneous_softmax, log_sigmoid, triplet_loss_hsg, triplet_loss_hsg_sr, triplet_loss_se_hsg, BatchOutput,
    ContentInputs, Gradients, Objective, Parameters, Variant,
};

use crate::graph::{HetGraph, NodeId};
use crate::seed;
use crate::text::{TextError, WordTable, DEFAULT_MAX_TOKENS};
use crate::walk::{
    context_pairs, generate_corpus, sample_triplets, ContextTriplet, NegativeSupport, NoiseTable, TripletStats,
    WalkConfig, WalkError,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("node {0:?} has no embedding row")]
    MissingRow(NodeId),
    #[error("variant needs a text encoder but none is initialized")]
    MissingEncoder,
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("no training triplets were generated")]
    EmptyTriplets,
    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error(transparent)]
    Walk(#[from] WalkError),
    #[error(transparent)]
    Text(#[from] TextError),
}

impl TrainError {
    /// Failures caused by numerics rather than by the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(self, TrainError::NonFinite(_) | TrainError::Diverged { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub variant: Variant,
    pub dim: usize,
    /// Negatives per context pair.
    pub negatives: usize,
    /// Weight of the semantic regularizer (HSG-SR only).
    pub gamma: f64,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub max_epochs: usize,
    /// Relative change of the epoch-mean loss below which training stops.
    /// Zero or a non-finite value disables early stopping.
    #[serde(with = "lenient_f64")]
    pub tolerance: f64,
    pub max_tokens: usize,
    pub negative_support: NegativeSupport,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: Variant::SeHsg,
            dim: 128,
            negatives: 1,
            gamma: 1.0,
            batch_size: 512,
            adam: AdamConfig::default(),
            max_epochs: 200,
            tolerance: 1e-4,
            max_tokens: DEFAULT_MAX_TOKENS,
            negative_support: NegativeSupport::CorpusVisited,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.dim == 0 {
            return bad("dimension must be >= 1");
        }
        if self.negatives == 0 {
            return bad("negatives per context must be >= 1");
        }
        if self.gamma.is_nan() || self.gamma < 0.0 {
            return bad("gamma must be >= 0");
        }
        if self.batch_size == 0 {
            return bad("batch size must be >= 1");
        }
        if self.max_tokens == 0 {
            return bad("max tokens must be >= 1");
        }
        if !(self.adam.learning_rate > 0.0) || !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) {
            return bad("adam needs lr > 0 and betas in [0, 1)");
        }
        Ok(())
    }

    fn converged(&self, prev: f64, cur: f64) -> bool {
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return false;
        }
        (prev - cur).abs() / prev.max(1e-12) < self.tolerance
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-triplet loss over the epoch.
    pub loss: f64,
    pub seconds: f64,
}

pub fn write_log_csv<W: std::io::Write>(log: &[EpochLog], mut w: W) -> std::io::Result<()> {
    writeln!(w, "epoch,loss,wall_time")?;
    for e in log {
        writeln!(w, "{},{:.9},{:.3}", e.epoch, e.loss, e.seconds)?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    pub log: Vec<EpochLog>,
    pub stats: TripletStats,
    pub converged: bool,
}

/// Everything needed to run epochs: triplets, inputs and initial parameters.
pub struct TrainingSetup {
    pub triplets: Vec<ContextTriplet>,
    pub stats: TripletStats,
    pub frequencies: Vec<u64>,
    pub content: ContentInputs,
    pub params: Parameters,
}

/// Sample the walk corpus and triplets and initialize parameters.
pub fn prepare(
    g: &HetGraph,
    cfg: &TrainConfig,
    walk_cfg: &WalkConfig,
    words: Option<&WordTable>,
) -> Result<TrainingSetup, TrainError> {
    cfg.validate()?;
    if cfg.variant.uses_text() && words.is_none() {
        return Err(TrainError::Config(format!("variant {} requires word vectors", cfg.variant)));
    }
    let corpus = generate_corpus(g, walk_cfg)?;
    let frequencies = corpus.frequencies(g.node_count());
    let noise = NoiseTable::from_frequencies(
        &frequencies,
        g.node_types(),
        g.schema().node_type_count(),
        cfg.negative_support,
    )?;
    let mut rng = seed::rng(cfg.seed, "negatives", 0, 0);
    let (triplets, stats) = sample_triplets(context_pairs(&corpus, walk_cfg.window), &noise, cfg.negatives, &mut rng)?;
    if triplets.is_empty() {
        return Err(TrainError::EmptyTriplets);
    }
    let content = match (cfg.variant.uses_text(), words) {
        (true, Some(w)) => ContentInputs::build(g, w, cfg.max_tokens),
        _ => ContentInputs::empty(g.node_count()),
    };
    let has_content: Vec<bool> = g.nodes().map(|v| g.has_content(v)).collect();
    let params = Parameters::init(
        cfg.variant,
        cfg.dim,
        &has_content,
        words.map(WordTable::dim),
        &mut seed::rng(cfg.seed, "init", 0, 0),
    );
    Ok(TrainingSetup {
        triplets,
        stats,
        frequencies,
        content,
        params,
    })
}

/// Run Adam epochs over the setup's triplets. Each epoch visits every triplet
/// once in a seeded shuffled order.
pub fn run_epochs(setup: &mut TrainingSetup, cfg: &TrainConfig) -> Result<(Vec<EpochLog>, bool), TrainError> {
    let objective = Objective {
        variant: cfg.variant,
        gamma: cfg.gamma,
        content: &setup.content,
    };
    let mut adam = AdamState::new(&setup.params);
    let mut order: Vec<usize> = (0..setup.triplets.len()).collect();
    let mut batch = Vec::with_capacity(cfg.batch_size);
    let mut log = Vec::new();
    let mut converged = false;
    let start = Instant::now();
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut seed::rng(cfg.seed, "shuffle", epoch as u64, 0));
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| setup.triplets[i]));
            let out = objective.evaluate(&setup.params, &batch)?;
            if !out.loss.is_finite() {
                return Err(TrainError::Diverged { epoch, loss: out.loss });
            }
            total += out.loss;
            adam.apply(&mut setup.params, &out.grads, &cfg.adam)?;
        }
        let mean = total / setup.triplets.len() as f64;
        if !mean.is_finite() || !setup.params.is_finite() {
            return Err(TrainError::Diverged { epoch, loss: mean });
        }
        log::info!("epoch {epoch}: loss {mean:.6}");
        let prev = log.last().map(|e: &EpochLog| e.loss);
        log.push(EpochLog {
            epoch,
            loss: mean,
            seconds: start.elapsed().as_secs_f64(),
        });
        if prev.is_some_and(|p| cfg.converged(p, mean)) {
            converged = true;
            break;
        }
    }
    Ok((log, converged))
}

/// Full pipeline: walks, negatives, Adam epochs, and the final model.
pub fn train(
    g: &HetGraph,
    cfg: &TrainConfig,
    walk_cfg: &WalkConfig,
    words: Option<&WordTable>,
) -> Result<TrainOutcome, TrainError> {
    let mut setup = prepare(g, cfg, walk_cfg, words)?;
    let (log, converged) = run_epochs(&mut setup, cfg)?;
    let model = TrainedModel::from_training(g, cfg, walk_cfg, words, &setup)?;
    Ok(TrainOutcome {
        model,
        log,
        stats: setup.stats,
        converged,
    })
}

/// JSON has no infinity; non-finite values travel as strings.
mod lenient_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}
