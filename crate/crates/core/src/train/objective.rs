//! Negative-sampling losses for the three model variants and their exact
//! gradients.
//!
//! All losses are written for minimization, i.e. the negated log-likelihood.
//! For a triplet `⟨v, c, n⟩` with representations `Θ`:
//!
//! ```text
//! ℓ = -log σ(Θ_c·Θ_v) - log σ(-Θ_n·Θ_v)
//! ```
//!
//! * `Hsg`: `Θ = θ` for every node.
//! * `HsgSr`: `Θ = θ` for every node, plus `γ Σ_u ‖θ_u - f(Y_u)‖²` over the
//!   distinct content nodes `u` of the triplet.
//! * `SeHsg`: `Θ_u = f(Y_u)` for content nodes (no free row), `θ_u` otherwise.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::graph::{HetGraph, NodeId};
use crate::text::{encode_backward, encode_forward, sigmoid, tokenize, Encoding, GruParams, WordTable};
use crate::walk::ContextTriplet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Structure only.
    Hsg,
    /// Structure plus a Gaussian pull of content nodes' free vectors toward
    /// their encoded text.
    HsgSr,
    /// Content nodes are represented by their encoded text.
    SeHsg,
}

impl Variant {
    pub fn uses_text(self) -> bool {
        !matches!(self, Variant::Hsg)
    }

    /// Whether a node owns a free embedding row under this variant.
    pub fn owns_row(self, has_content: bool) -> bool {
        !(self == Variant::SeHsg && has_content)
    }

    /// Whether the representation used downstream is the encoder output.
    pub fn uses_semantic(self, has_content: bool) -> bool {
        self.uses_text() && has_content
    }

    pub fn code(self) -> u8 {
        match self {
            Variant::Hsg => 0,
            Variant::HsgSr => 1,
            Variant::SeHsg => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Variant::Hsg),
            1 => Some(Variant::HsgSr),
            2 => Some(Variant::SeHsg),
            _ => None,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Hsg => "hsg",
            Variant::HsgSr => "hsg-sr",
            Variant::SeHsg => "se-hsg",
        })
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "hsg" => Ok(Variant::Hsg),
            "hsg-sr" => Ok(Variant::HsgSr),
            "se-hsg" => Ok(Variant::SeHsg),
            other => Err(format!("unknown variant `{other}` (expected hsg, hsg-sr or se-hsg)")),
        }
    }
}

/// Trainable state: the free embedding table `θ` and the encoder `Φ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub variant: Variant,
    pub dim: usize,
    pub theta: Array2<f64>,
    /// Row of `theta` owned by each node, if any.
    pub row_of: Vec<Option<u32>>,
    pub encoder: Option<GruParams>,
}

impl Parameters {
    /// Rows uniform in `(-0.5/d, 0.5/d)`; encoder per [`GruParams::random`].
    pub fn init<R: Rng + ?Sized>(
        variant: Variant,
        dim: usize,
        has_content: &[bool],
        word_dim: Option<usize>,
        rng: &mut R,
    ) -> Self {
        let row_of = Self::row_layout(variant, has_content);
        let rows = row_of.iter().flatten().count();
        let bound = 0.5 / dim as f64;
        let theta = Array2::from_shape_simple_fn((rows, dim), || rng.random_range(-bound..bound));
        let encoder = match (variant.uses_text(), word_dim) {
            (true, Some(dw)) => Some(GruParams::random(dim, dw, rng)),
            _ => None,
        };
        Parameters {
            variant,
            dim,
            theta,
            row_of,
            encoder,
        }
    }

    pub fn row_layout(variant: Variant, has_content: &[bool]) -> Vec<Option<u32>> {
        let mut next = 0u32;
        has_content
            .iter()
            .map(|&c| {
                variant.owns_row(c).then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect()
    }

    pub fn row(&self, v: NodeId) -> Option<ArrayView1<'_, f64>> {
        let r = (*self.row_of.get(v.index())?)?;
        Some(self.theta.row(r as usize))
    }

    pub fn embedding_param_count(&self) -> usize {
        self.theta.len()
    }

    pub fn encoder_param_count(&self) -> usize {
        self.encoder.as_ref().map_or(0, GruParams::num_params)
    }

    pub fn trainable_param_count(&self) -> usize {
        self.embedding_param_count() + self.encoder_param_count()
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().all(|v| v.is_finite()) && self.encoder.as_ref().is_none_or(GruParams::is_finite)
    }
}

/// Word-vector sequences for content nodes, built once since word vectors
/// are frozen.
#[derive(Debug, Clone, Default)]
pub struct ContentInputs {
    inputs: Vec<Option<Array2<f64>>>,
}

impl ContentInputs {
    pub fn build(g: &HetGraph, words: &WordTable, max_tokens: usize) -> Self {
        let inputs = g
            .nodes()
            .map(|v| {
                g.content(v).map(|text| {
                    let toks = tokenize(text, max_tokens);
                    if toks.is_empty() {
                        log::warn!("node `{}` has empty content; its encoding is the zero vector", g.label(v));
                    }
                    words.embed(&toks)
                })
            })
            .collect();
        ContentInputs { inputs }
    }

    pub fn from_inputs(inputs: Vec<Option<Array2<f64>>>) -> Self {
        ContentInputs { inputs }
    }

    /// No node has content.
    pub fn empty(node_count: usize) -> Self {
        ContentInputs {
            inputs: vec![None; node_count],
        }
    }

    pub fn has_content(&self, v: NodeId) -> bool {
        self.inputs.get(v.index()).is_some_and(Option::is_some)
    }

    pub fn get(&self, v: NodeId) -> Option<&Array2<f64>> {
        self.inputs.get(v.index())?.as_ref()
    }

    pub fn flags(&self) -> Vec<bool> {
        self.inputs.iter().map(Option::is_some).collect()
    }
}

/// Sparse gradient of a batch: touched `θ` rows plus the dense encoder part.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    pub rows: BTreeMap<u32, Array1<f64>>,
    pub encoder: Option<GruParams>,
}

impl Gradients {
    pub fn is_finite(&self) -> bool {
        self.rows.values().all(|r| r.iter().all(|v| v.is_finite()))
            && self.encoder.as_ref().is_none_or(GruParams::is_finite)
    }

    /// Dense copy of the `θ` part, for testing.
    pub fn dense_theta(&self, shape: (usize, usize)) -> Array2<f64> {
        let mut m = Array2::zeros(shape);
        for (r, g) in &self.rows {
            m.row_mut(*r as usize).assign(g);
        }
        m
    }
}

#[derive(Debug, Clone)]
pub struct BatchOutput {
    /// Sum of per-triplet losses.
    pub loss: f64,
    pub grads: Gradients,
    /// Content nodes whose text produced no tokens.
    pub empty_encodings: usize,
}

/// `log σ(x)`, stable for large `|x|`.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

pub struct Objective<'a> {
    pub variant: Variant,
    pub gamma: f64,
    pub content: &'a ContentInputs,
}

impl Objective<'_> {
    /// Summed loss and gradient over `triplets`.
    pub fn evaluate(&self, params: &Parameters, triplets: &[ContextTriplet]) -> Result<BatchOutput, TrainError> {
        let d = params.dim;
        let text = self.variant.uses_text();

        // encode each distinct content node once
        let encoded_nodes: Vec<NodeId> = if text {
            let set: BTreeSet<NodeId> = triplets
                .iter()
                .flat_map(|t| [t.center, t.context, t.negative])
                .filter(|v| self.content.has_content(*v))
                .collect();
            set.into_iter().collect()
        } else {
            Vec::new()
        };
        let encoder = if encoded_nodes.is_empty() {
            None
        } else {
            Some(params.encoder.as_ref().ok_or(TrainError::MissingEncoder)?)
        };
        let encodings: BTreeMap<NodeId, Encoding> = encoded_nodes
            .par_iter()
            .map(|&v| {
                let inputs = self.content.get(v).expect("content node");
                let enc = encode_forward(encoder.expect("encoder present"), inputs.view())?;
                Ok((v, enc))
            })
            .collect::<Result<Vec<_>, TrainError>>()?
            .into_iter()
            .collect();
        let empty_encodings = encodings.values().filter(|e| e.empty).count();

        let semantic = |v: NodeId| self.variant == Variant::SeHsg && self.content.has_content(v);
        let rep = |v: NodeId| -> Result<ArrayView1<'_, f64>, TrainError> {
            if semantic(v) {
                Ok(encodings[&v].output.view())
            } else {
                params.row(v).ok_or(TrainError::MissingRow(v))
            }
        };

        let mut loss = 0.0;
        let mut d_rep: BTreeMap<NodeId, Array1<f64>> = BTreeMap::new();
        let mut d_sem: BTreeMap<NodeId, Array1<f64>> = BTreeMap::new();
        let acc = |map: &mut BTreeMap<NodeId, Array1<f64>>, v: NodeId, scale: f64, x: &ArrayView1<f64>| {
            map.entry(v)
                .or_insert_with(|| Array1::zeros(d))
                .scaled_add(scale, x);
        };

        for t in triplets {
            let (rv, rc, rn) = (rep(t.center)?, rep(t.context)?, rep(t.negative)?);
            let s_pos = rc.dot(&rv);
            let s_neg = rn.dot(&rv);
            loss -= log_sigmoid(s_pos) + log_sigmoid(-s_neg);
            let g_pos = sigmoid(s_pos) - 1.0;
            let g_neg = sigmoid(s_neg);
            acc(&mut d_rep, t.center, g_pos, &rc);
            acc(&mut d_rep, t.center, g_neg, &rn);
            acc(&mut d_rep, t.context, g_pos, &rv);
            acc(&mut d_rep, t.negative, g_neg, &rv);

            if self.variant == Variant::HsgSr {
                let members: BTreeSet<NodeId> = [t.center, t.context, t.negative]
                    .into_iter()
                    .filter(|v| self.content.has_content(*v))
                    .collect();
                for u in members {
                    let th = params.row(u).ok_or(TrainError::MissingRow(u))?;
                    let diff = &th - &encodings[&u].output;
                    loss += self.gamma * diff.dot(&diff);
                    acc(&mut d_rep, u, 2.0 * self.gamma, &diff.view());
                    acc(&mut d_sem, u, -2.0 * self.gamma, &diff.view());
                }
            }
        }

        let mut grads = Gradients::default();
        for (v, g) in d_rep {
            if semantic(v) {
                acc(&mut d_sem, v, 1.0, &g.view());
            } else {
                let r = params.row_of[v.index()].ok_or(TrainError::MissingRow(v))?;
                grads.rows.insert(r, g);
            }
        }

        if let Some(enc) = encoder {
            let parts: Vec<GruParams> = d_sem
                .par_iter()
                .map(|(v, g)| Ok(encode_backward(&encodings[v].cache, enc, g.view(), false)?.0))
                .collect::<Result<Vec<_>, TrainError>>()?;
            let mut total = GruParams::zeros(enc.hidden_dim(), enc.input_dim());
            for p in &parts {
                total.add_scaled(p, 1.0);
            }
            grads.encoder = Some(total);
        }

        Ok(BatchOutput {
            loss,
            grads,
            empty_encodings,
        })
    }
}

/// HSG loss of a single triplet on `θ`.
pub fn triplet_loss_hsg(t: &ContextTriplet, params: &Parameters) -> Result<BatchOutput, TrainError> {
    let none = ContentInputs::empty(params.row_of.len());
    Objective {
        variant: Variant::Hsg,
        gamma: 0.0,
        content: &none,
    }
    .evaluate(params, std::slice::from_ref(t))
}

/// HSG loss plus the semantic regularizer on the triplet's content nodes.
pub fn triplet_loss_hsg_sr(
    t: &ContextTriplet,
    params: &Parameters,
    content: &ContentInputs,
    gamma: f64,
) -> Result<BatchOutput, TrainError> {
    Objective {
        variant: Variant::HsgSr,
        gamma,
        content,
    }
    .evaluate(params, std::slice::from_ref(t))
}

/// HSG loss on the enhanced representations.
pub fn triplet_loss_se_hsg(
    t: &ContextTriplet,
    params: &Parameters,
    content: &ContentInputs,
) -> Result<BatchOutput, TrainError> {
    Objective {
        variant: Variant::SeHsg,
        gamma: 0.0,
        content,
    }
    .evaluate(params, std::slice::from_ref(t))
}

/// Full softmax `p(c | v)` over `candidates`, which should be the nodes of
/// `c`'s type. Only used to sanity-check the negative-sampling surrogate.
pub fn heterogeneous_softmax(reps: &Array2<f64>, center: NodeId, candidates: &[NodeId]) -> Vec<f64> {
    let v = reps.row(center.index());
    let scores: Vec<f64> = candidates.iter().map(|c| reps.row(c.index()).dot(&v)).collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}
