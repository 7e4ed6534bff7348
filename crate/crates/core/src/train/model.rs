//! Trained model container and its binary file format.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic      8 bytes  "HETEMBED"
//! version    u32
//! variant    u8       0 = hsg, 1 = hsg-sr, 2 = se-hsg
//! d          u32
//! |V|        u32
//! |V_S|      u32
//! d_w        u32      0 when the model has no text encoder
//! word_fp    u64      fingerprint of the word vectors used in training
//! rows       u32      number of free embedding rows
//! meta_len   u32, then meta_len bytes of JSON (schema, training and walk config)
//! per node:  label_len u32, label bytes, type u16, has_content u8, frequency u64
//! θ          rows × d f64, row-major, rows in ascending node order
//! E          |V_S| × d f64 (only when d_w > 0), ascending node order
//! Φ          A_z, A_r, A_h (d × d_w), B_z, B_r, B_h (d × d) (only when d_w > 0)
//! ```

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::objective::{Parameters, Variant};
use super::{TrainConfig, TrainError, TrainingSetup};
use crate::graph::{GraphSchema, HetGraph, NodeId, NodeType};
use crate::text::{encode_forward, GruParams, TextEncoder, WordTable};
use crate::walk::{NoiseTable, WalkConfig, WalkError};

pub const MODEL_MAGIC: &[u8; 8] = b"HETEMBED";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported model version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt model file: {0}")]
    Corrupt(String),
    #[error("word vectors do not match the ones used in training")]
    WordMismatch,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Serialize, Deserialize)]
struct Meta {
    schema: GraphSchema,
    train: TrainConfig,
    walk: WalkConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub schema: GraphSchema,
    pub labels: Vec<String>,
    pub node_types: Vec<NodeType>,
    pub has_content: Vec<bool>,
    /// Walk-corpus occurrence counts, kept for the noise distribution.
    pub frequencies: Vec<u64>,
    pub params: Parameters,
    /// Encoder outputs `E` of the content nodes, ascending node order.
    /// Empty for structure-only models.
    pub semantic: Array2<f64>,
    pub word_dim: usize,
    pub word_fingerprint: u64,
    pub train_config: TrainConfig,
    pub walk_config: WalkConfig,
    index: HashMap<String, NodeId>,
    semantic_row: Vec<Option<u32>>,
}

impl TrainedModel {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        schema: GraphSchema,
        labels: Vec<String>,
        node_types: Vec<NodeType>,
        has_content: Vec<bool>,
        frequencies: Vec<u64>,
        params: Parameters,
        semantic: Array2<f64>,
        word_dim: usize,
        word_fingerprint: u64,
        train_config: TrainConfig,
        walk_config: WalkConfig,
    ) -> Self {
        let index = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), NodeId::from(i)))
            .collect();
        let mut next = 0u32;
        let semantic_row = has_content
            .iter()
            .map(|&c| {
                (c && semantic.nrows() > 0).then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect();
        TrainedModel {
            schema,
            labels,
            node_types,
            has_content,
            frequencies,
            params,
            semantic,
            word_dim,
            word_fingerprint,
            train_config,
            walk_config,
            index,
            semantic_row,
        }
    }

    pub(super) fn from_training(
        g: &HetGraph,
        cfg: &TrainConfig,
        walk_cfg: &WalkConfig,
        words: Option<&WordTable>,
        setup: &TrainingSetup,
    ) -> Result<Self, TrainError> {
        let has_content: Vec<bool> = g.nodes().map(|v| g.has_content(v)).collect();
        let content_nodes = g.content_nodes();
        let semantic = match &setup.params.encoder {
            Some(enc) => {
                let rows: Vec<Array1<f64>> = content_nodes
                    .par_iter()
                    .map(|&v| {
                        let inputs = setup.content.get(v).expect("content node");
                        Ok(encode_forward(enc, inputs.view())?.output)
                    })
                    .collect::<Result<_, TrainError>>()?;
                let mut m = Array2::zeros((rows.len(), cfg.dim));
                for (i, r) in rows.iter().enumerate() {
                    m.row_mut(i).assign(r);
                }
                m
            }
            None => Array2::zeros((0, cfg.dim)),
        };
        Ok(Self::assemble(
            g.schema().clone(),
            g.labels().to_vec(),
            g.node_types().to_vec(),
            has_content,
            setup.frequencies.clone(),
            setup.params.clone(),
            semantic,
            words.map_or(0, WordTable::dim),
            words.map_or(0, WordTable::fingerprint),
            cfg.clone(),
            walk_cfg.clone(),
        ))
    }

    pub fn variant(&self) -> Variant {
        self.params.variant
    }

    pub fn dim(&self) -> usize {
        self.params.dim
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn content_count(&self) -> usize {
        self.has_content.iter().filter(|c| **c).count()
    }

    pub fn lookup(&self, label: &str) -> Option<NodeId> {
        self.index.get(label).copied()
    }

    pub fn encoder(&self) -> Option<&GruParams> {
        self.params.encoder.as_ref()
    }

    /// Check that `words` is the table the model was trained with.
    pub fn check_words(&self, words: &WordTable) -> Result<(), ModelError> {
        if self.word_dim != words.dim() || self.word_fingerprint != words.fingerprint() {
            return Err(ModelError::WordMismatch);
        }
        Ok(())
    }

    pub fn text_encoder<'a>(&'a self, words: &'a WordTable) -> Option<TextEncoder<'a>> {
        Some(TextEncoder {
            params: self.encoder()?,
            words,
            max_tokens: self.train_config.max_tokens,
        })
    }

    /// The vector used for evaluation: encoder output for content nodes of
    /// text-aware variants, the free row otherwise.
    pub fn representation(&self, v: NodeId) -> ArrayView1<'_, f64> {
        match self.semantic_row[v.index()] {
            Some(r) if self.variant().uses_semantic(true) => self.semantic.row(r as usize),
            _ => self.params.row(v).expect("every non-semantic node owns a row"),
        }
    }

    /// `|V| × d` matrix of [`TrainedModel::representation`] rows.
    pub fn representations(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.node_count(), self.dim()));
        for i in 0..self.node_count() {
            m.row_mut(i).assign(&self.representation(NodeId::from(i)));
        }
        m
    }

    pub fn noise_table(&self) -> Result<NoiseTable, WalkError> {
        NoiseTable::from_frequencies(
            &self.frequencies,
            &self.node_types,
            self.schema.node_type_count(),
            self.train_config.negative_support,
        )
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<(), ModelError> {
        let d = self.dim();
        w.write_all(MODEL_MAGIC)?;
        w.write_u32::<LE>(MODEL_VERSION)?;
        w.write_u8(self.variant().code())?;
        w.write_u32::<LE>(d as u32)?;
        w.write_u32::<LE>(self.node_count() as u32)?;
        w.write_u32::<LE>(self.content_count() as u32)?;
        let dw = if self.params.encoder.is_some() { self.word_dim } else { 0 };
        w.write_u32::<LE>(dw as u32)?;
        w.write_u64::<LE>(self.word_fingerprint)?;
        w.write_u32::<LE>(self.params.theta.nrows() as u32)?;
        let meta = serde_json::to_vec(&Meta {
            schema: self.schema.clone(),
            train: self.train_config.clone(),
            walk: self.walk_config.clone(),
        })
        .map_err(|e| ModelError::Corrupt(e.to_string()))?;
        w.write_u32::<LE>(meta.len() as u32)?;
        w.write_all(&meta)?;
        for i in 0..self.node_count() {
            let label = self.labels[i].as_bytes();
            w.write_u32::<LE>(label.len() as u32)?;
            w.write_all(label)?;
            w.write_u16::<LE>(self.node_types[i].0)?;
            w.write_u8(u8::from(self.has_content[i]))?;
            w.write_u64::<LE>(self.frequencies[i])?;
        }
        write_matrix(&mut w, &self.params.theta)?;
        if let Some(enc) = &self.params.encoder {
            write_matrix(&mut w, &self.semantic)?;
            for m in enc.matrices() {
                write_matrix(&mut w, m)?;
            }
        }
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self, ModelError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MODEL_MAGIC {
            return Err(ModelError::BadMagic);
        }
        let version = r.read_u32::<LE>()?;
        if version != MODEL_VERSION {
            return Err(ModelError::UnsupportedVersion(version));
        }
        let variant = Variant::from_code(r.read_u8()?).ok_or_else(|| ModelError::Corrupt("unknown variant".into()))?;
        let d = r.read_u32::<LE>()? as usize;
        let n = r.read_u32::<LE>()? as usize;
        let n_content = r.read_u32::<LE>()? as usize;
        let dw = r.read_u32::<LE>()? as usize;
        let word_fingerprint = r.read_u64::<LE>()?;
        let rows = r.read_u32::<LE>()? as usize;
        let meta_len = r.read_u32::<LE>()? as usize;
        let mut meta = vec![0u8; meta_len];
        r.read_exact(&mut meta)?;
        let meta: Meta = serde_json::from_slice(&meta).map_err(|e| ModelError::Corrupt(format!("metadata: {e}")))?;

        let mut labels = Vec::with_capacity(n);
        let mut node_types = Vec::with_capacity(n);
        let mut has_content = Vec::with_capacity(n);
        let mut frequencies = Vec::with_capacity(n);
        for _ in 0..n {
            let len = r.read_u32::<LE>()? as usize;
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf)?;
            labels.push(String::from_utf8(buf).map_err(|e| ModelError::Corrupt(e.to_string()))?);
            let t = r.read_u16::<LE>()?;
            if t as usize >= meta.schema.node_type_count() {
                return Err(ModelError::Corrupt(format!("node type {t} out of range")));
            }
            node_types.push(NodeType(t));
            has_content.push(r.read_u8()? != 0);
            frequencies.push(r.read_u64::<LE>()?);
        }
        if has_content.iter().filter(|c| **c).count() != n_content {
            return Err(ModelError::Corrupt("content count mismatch".into()));
        }
        let row_of = Parameters::row_layout(variant, &has_content);
        if row_of.iter().flatten().count() != rows {
            return Err(ModelError::Corrupt("embedding row count does not match variant".into()));
        }
        let theta = read_matrix(&mut r, rows, d)?;
        let (semantic, encoder) = if dw > 0 {
            let semantic = read_matrix(&mut r, n_content, d)?;
            let mut enc = GruParams::zeros(d, dw);
            for (i, m) in enc.matrices_mut().into_iter().enumerate() {
                *m = read_matrix(&mut r, d, if i < 3 { dw } else { d })?;
            }
            (semantic, Some(enc))
        } else {
            (Array2::zeros((0, d)), None)
        };
        if variant.uses_text() && encoder.is_none() {
            return Err(ModelError::Corrupt("text variant without encoder".into()));
        }
        let params = Parameters {
            variant,
            dim: d,
            theta,
            row_of,
            encoder,
        };
        Ok(Self::assemble(
            meta.schema,
            labels,
            node_types,
            has_content,
            frequencies,
            params,
            semantic,
            dw,
            word_fingerprint,
            meta.train,
            meta.walk,
        ))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory");
        buf
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let bytes = std::fs::read(path)?;
        Self::read(bytes.as_slice())
    }

    /// SHA-256 of the serialized model, hex encoded.
    pub fn digest(&self) -> String {
        let d = Sha256::digest(self.to_bytes());
        d.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// `label<TAB>v_1 v_2 … v_d` per node, using evaluation representations.
    pub fn write_embeddings<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for i in 0..self.node_count() {
            write_embedding_line(&mut w, &self.labels[i], self.representation(NodeId::from(i)))?;
        }
        Ok(())
    }
}

/// One line of the embeddings export: `label<TAB>v_1 v_2 … v_d`.
pub fn write_embedding_line<W: Write>(w: &mut W, label: &str, v: ArrayView1<f64>) -> std::io::Result<()> {
    write!(w, "{label}\t")?;
    for (j, x) in v.iter().enumerate() {
        if j > 0 {
            write!(w, " ")?;
        }
        write!(w, "{x}")?;
    }
    writeln!(w)
}

fn write_matrix<W: Write>(w: &mut W, m: &Array2<f64>) -> std::io::Result<()> {
    for x in m.iter() {
        w.write_f64::<LE>(*x)?;
    }
    Ok(())
}

fn read_matrix<R: Read>(r: &mut R, rows: usize, cols: usize) -> Result<Array2<f64>, ModelError> {
    let mut data = vec![0f64; rows * cols];
    r.read_f64_into::<LE>(&mut data)?;
    Array2::from_shape_vec((rows, cols), data).map_err(|e| ModelError::Corrupt(e.to_string()))
}
