//! Typed heterogeneous graph: schema, TSV ingestion, neighbor queries and
//! in-place growth.
//!
//! Nodes carry exactly one type and optionally a piece of raw text. Edges carry
//! exactly one relation, and each relation connects a fixed ordered pair of
//! node types declared in the [`GraphSchema`]. Relations are undirected unless
//! the schema marks them `directed`. Adjacency is a set: re-adding an edge is a
//! no-op.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense internal node index. Indices are contiguous in `0..node_count()`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for NodeId {
    fn from(i: usize) -> Self {
        NodeId(i as u32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeType(pub u16);

impl NodeType {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationType(pub u16);

impl RelationType {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("{path}:{line}: {source}")]
    At {
        path: String,
        line: usize,
        #[source]
        source: Box<GraphError>,
    },
    #[error("expected {expected} tab-separated fields, found {found}")]
    Malformed { expected: usize, found: usize },
    #[error("unknown node type `{0}`")]
    UnknownNodeType(String),
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("unknown node index {0}")]
    UnknownIndex(u32),
    #[error("duplicate node label `{0}`")]
    DuplicateLabel(String),
    #[error("node `{0}` already has content")]
    DuplicateContent(String),
    #[error("relation `{relation}` connects {expected_source} -> {expected_target}, edge is {source_type} -> {target_type}")]
    SchemaViolation {
        relation: String,
        expected_source: String,
        expected_target: String,
        source_type: String,
        target_type: String,
    },
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl GraphError {
    fn at(self, path: &str, line: usize) -> GraphError {
        GraphError::At {
            path: path.to_string(),
            line,
            source: Box::new(self),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationSpec {
    pub name: String,
    pub source: NodeType,
    pub target: NodeType,
    pub directed: bool,
}

/// Declared node types and the relations allowed between them.
///
/// Text form, one declaration per line (`#` comments allowed):
///
/// ```text
/// node author
/// node paper
/// relation write author paper
/// relation cite paper paper directed
/// ```
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphSchema {
    node_types: Vec<String>,
    relations: Vec<RelationSpec>,
}

impl GraphSchema {
    pub fn new() -> Self {
        Self::default()
    }

    /// author/paper/venue with write(author, paper), cite(paper, paper) and
    /// publish(paper, venue), all undirected.
    pub fn academic() -> Self {
        let mut s = Self::new();
        for t in ["author", "paper", "venue"] {
            s.add_node_type(t).expect("fresh type");
        }
        s.add_relation("write", "author", "paper", false).expect("valid");
        s.add_relation("cite", "paper", "paper", false).expect("valid");
        s.add_relation("publish", "paper", "venue", false).expect("valid");
        s
    }

    pub fn add_node_type(&mut self, name: &str) -> Result<NodeType, GraphError> {
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(GraphError::Schema(format!("bad node type name `{name}`")));
        }
        if self.node_type(name).is_some() {
            return Err(GraphError::Schema(format!("node type `{name}` declared twice")));
        }
        self.node_types.push(name.to_string());
        Ok(NodeType((self.node_types.len() - 1) as u16))
    }

    pub fn add_relation(
        &mut self,
        name: &str,
        source: &str,
        target: &str,
        directed: bool,
    ) -> Result<RelationType, GraphError> {
        if self.relation(name).is_some() {
            return Err(GraphError::Schema(format!("relation `{name}` declared twice")));
        }
        let source = self
            .node_type(source)
            .ok_or_else(|| GraphError::Schema(format!("relation `{name}` references undeclared type `{source}`")))?;
        let target = self
            .node_type(target)
            .ok_or_else(|| GraphError::Schema(format!("relation `{name}` references undeclared type `{target}`")))?;
        self.relations.push(RelationSpec {
            name: name.to_string(),
            source,
            target,
            directed,
        });
        Ok(RelationType((self.relations.len() - 1) as u16))
    }

    pub fn node_type(&self, name: &str) -> Option<NodeType> {
        self.node_types
            .iter()
            .position(|t| t == name)
            .map(|i| NodeType(i as u16))
    }

    pub fn relation(&self, name: &str) -> Option<RelationType> {
        self.relations
            .iter()
            .position(|r| r.name == name)
            .map(|i| RelationType(i as u16))
    }

    pub fn type_name(&self, t: NodeType) -> &str {
        &self.node_types[t.index()]
    }

    pub fn relation_spec(&self, r: RelationType) -> &RelationSpec {
        &self.relations[r.index()]
    }

    pub fn node_types(&self) -> impl Iterator<Item = (NodeType, &str)> {
        self.node_types
            .iter()
            .enumerate()
            .map(|(i, n)| (NodeType(i as u16), n.as_str()))
    }

    pub fn relations(&self) -> impl Iterator<Item = (RelationType, &RelationSpec)> {
        self.relations
            .iter()
            .enumerate()
            .map(|(i, r)| (RelationType(i as u16), r))
    }

    pub fn node_type_count(&self) -> usize {
        self.node_types.len()
    }

    /// Whether some relation can be traversed from a node of type `from` to a
    /// node of type `to`.
    pub fn connects(&self, from: NodeType, to: NodeType) -> bool {
        self.relations.iter().any(|r| {
            (r.source == from && r.target == to) || (!r.directed && r.source == to && r.target == from)
        })
    }

    /// Resolve a one-letter abbreviation (`A` for `author`) to the unique type
    /// whose name starts with that letter, case-insensitively.
    pub fn type_by_letter(&self, letter: char) -> Option<NodeType> {
        let want = letter.to_ascii_lowercase();
        let mut found = self
            .node_types()
            .filter(|(_, n)| n.chars().next().map(|c| c.to_ascii_lowercase()) == Some(want));
        let first = found.next()?;
        if found.next().is_some() {
            return None;
        }
        Some(first.0)
    }

    pub fn parse(text: &str) -> Result<Self, GraphError> {
        let mut s = Self::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let res = match fields.as_slice() {
                ["node", name] => s.add_node_type(name).map(|_| ()),
                ["relation", name, src, dst] => s.add_relation(name, src, dst, false).map(|_| ()),
                ["relation", name, src, dst, "directed"] => s.add_relation(name, src, dst, true).map(|_| ()),
                ["relation", name, src, dst, "undirected"] => s.add_relation(name, src, dst, false).map(|_| ()),
                _ => Err(GraphError::Schema(format!("unrecognized declaration `{line}`"))),
            };
            res.map_err(|e| e.at("schema", i + 1))?;
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, GraphError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            GraphError::At { line, source, .. } => GraphError::At {
                path: path.display().to_string(),
                line,
                source,
            },
            other => other,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.node_types {
            out.push_str(&format!("node {t}\n"));
        }
        for r in &self.relations {
            out.push_str(&format!(
                "relation {} {} {}{}\n",
                r.name,
                self.type_name(r.source),
                self.type_name(r.target),
                if r.directed { " directed" } else { "" }
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub source: NodeId,
    pub relation: RelationType,
    pub target: NodeId,
}

/// A heterogeneous graph `G = (V, E)` with node/relation typing and optional
/// per-node text. `V_S`, the content-bearing node set, is exactly the nodes for
/// which [`HetGraph::content`] is `Some`.
#[derive(Debug, Clone)]
pub struct HetGraph {
    schema: GraphSchema,
    labels: Vec<String>,
    types: Vec<NodeType>,
    index: HashMap<String, NodeId>,
    content: Vec<Option<String>>,
    // sorted by (neighbor, relation), no duplicates
    adjacency: Vec<Vec<(NodeId, RelationType)>>,
    edges: Vec<Edge>,
    edge_set: HashSet<Edge>,
    by_type: Vec<Vec<NodeId>>,
}

impl HetGraph {
    pub fn new(schema: GraphSchema) -> Self {
        let n_types = schema.node_type_count();
        HetGraph {
            schema,
            labels: Vec::new(),
            types: Vec::new(),
            index: HashMap::new(),
            content: Vec::new(),
            adjacency: Vec::new(),
            edges: Vec::new(),
            edge_set: HashSet::new(),
            by_type: vec![Vec::new(); n_types],
        }
    }

    pub fn schema(&self) -> &GraphSchema {
        &self.schema
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.labels.len()).map(NodeId::from)
    }

    pub fn contains(&self, v: NodeId) -> bool {
        v.index() < self.labels.len()
    }

    pub fn label(&self, v: NodeId) -> &str {
        &self.labels[v.index()]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn node_type(&self, v: NodeId) -> NodeType {
        self.types[v.index()]
    }

    pub fn node_types(&self) -> &[NodeType] {
        &self.types
    }

    pub fn type_name_of(&self, v: NodeId) -> &str {
        self.schema.type_name(self.node_type(v))
    }

    pub fn lookup(&self, label: &str) -> Option<NodeId> {
        self.index.get(label).copied()
    }

    pub fn require(&self, label: &str) -> Result<NodeId, GraphError> {
        self.lookup(label)
            .ok_or_else(|| GraphError::UnknownNode(label.to_string()))
    }

    pub fn content(&self, v: NodeId) -> Option<&str> {
        self.content[v.index()].as_deref()
    }

    pub fn has_content(&self, v: NodeId) -> bool {
        self.content[v.index()].is_some()
    }

    /// `V_S`, in ascending index order.
    pub fn content_nodes(&self) -> Vec<NodeId> {
        self.nodes().filter(|&v| self.has_content(v)).collect()
    }

    pub fn nodes_of_type(&self, t: NodeType) -> &[NodeId] {
        self.by_type.get(t.index()).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Raw adjacency entries of `v`: (neighbor, relation), ascending by neighbor.
    pub fn adjacency(&self, v: NodeId) -> &[(NodeId, RelationType)] {
        &self.adjacency[v.index()]
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.adjacency[v.index()].len()
    }

    /// Neighbors of `v`, optionally restricted to one relation, in ascending
    /// index order and without duplicates.
    pub fn neighbors(&self, v: NodeId, rel: Option<RelationType>) -> Result<Vec<NodeId>, GraphError> {
        if !self.contains(v) {
            return Err(GraphError::UnknownIndex(v.0));
        }
        let mut out: Vec<NodeId> = self.adjacency[v.index()]
            .iter()
            .filter(|(_, r)| rel.is_none_or(|want| *r == want))
            .map(|(n, _)| *n)
            .collect();
        out.dedup();
        Ok(out)
    }

    pub fn add_node(&mut self, label: &str, ty: NodeType, content: Option<String>) -> Result<NodeId, GraphError> {
        if ty.index() >= self.schema.node_type_count() {
            return Err(GraphError::UnknownNodeType(format!("#{}", ty.0)));
        }
        if label.is_empty() || label.contains(['\t', '\n', '\r']) {
            return Err(GraphError::Malformed { expected: 2, found: 1 });
        }
        if self.index.contains_key(label) {
            return Err(GraphError::DuplicateLabel(label.to_string()));
        }
        let id = NodeId::from(self.labels.len());
        self.labels.push(label.to_string());
        self.types.push(ty);
        self.index.insert(label.to_string(), id);
        self.content.push(content);
        self.adjacency.push(Vec::new());
        self.by_type[ty.index()].push(id);
        Ok(id)
    }

    pub fn add_node_named(&mut self, label: &str, type_name: &str, content: Option<String>) -> Result<NodeId, GraphError> {
        let ty = self
            .schema
            .node_type(type_name)
            .ok_or_else(|| GraphError::UnknownNodeType(type_name.to_string()))?;
        self.add_node(label, ty, content)
    }

    /// Attach text to a node that has none yet.
    pub fn set_content(&mut self, v: NodeId, text: String) -> Result<(), GraphError> {
        if !self.contains(v) {
            return Err(GraphError::UnknownIndex(v.0));
        }
        if self.content[v.index()].is_some() {
            return Err(GraphError::DuplicateContent(self.labels[v.index()].clone()));
        }
        self.content[v.index()] = Some(text);
        Ok(())
    }

    /// Insert an edge after checking it against the schema. Returns `false`
    /// when the edge was already present.
    pub fn add_edge(&mut self, source: NodeId, target: NodeId, rel: RelationType) -> Result<bool, GraphError> {
        for v in [source, target] {
            if !self.contains(v) {
                return Err(GraphError::UnknownIndex(v.0));
            }
        }
        let spec = self
            .schema
            .relations
            .get(rel.index())
            .ok_or_else(|| GraphError::UnknownRelation(format!("#{}", rel.0)))?;
        let (st, tt) = (self.node_type(source), self.node_type(target));
        if st != spec.source || tt != spec.target {
            return Err(GraphError::SchemaViolation {
                relation: spec.name.clone(),
                expected_source: self.schema.type_name(spec.source).to_string(),
                expected_target: self.schema.type_name(spec.target).to_string(),
                source_type: self.schema.type_name(st).to_string(),
                target_type: self.schema.type_name(tt).to_string(),
            });
        }
        let directed = spec.directed;
        // undirected same-type relations: (a, b) and (b, a) are one edge
        let (s, t) = if !directed && spec.source == spec.target && target < source {
            (target, source)
        } else {
            (source, target)
        };
        let edge = Edge { source: s, relation: rel, target: t };
        if !self.edge_set.insert(edge) {
            return Ok(false);
        }
        self.edges.push(edge);
        insert_sorted(&mut self.adjacency[s.index()], (t, rel));
        if !directed {
            insert_sorted(&mut self.adjacency[t.index()], (s, rel));
        }
        Ok(true)
    }

    pub fn add_edge_labeled(&mut self, source: &str, rel: &str, target: &str) -> Result<bool, GraphError> {
        let s = self.require(source)?;
        let t = self.require(target)?;
        let r = self
            .schema
            .relation(rel)
            .ok_or_else(|| GraphError::UnknownRelation(rel.to_string()))?;
        self.add_edge(s, t, r)
    }

    /// Read `nodes.tsv`, `edges.tsv` and optionally `content.tsv` into a fresh graph.
    pub fn load(
        schema: GraphSchema,
        nodes_path: &Path,
        edges_path: &Path,
        content_path: Option<&Path>,
    ) -> Result<Self, GraphError> {
        let mut g = HetGraph::new(schema);
        g.extend_from_files(nodes_path, edges_path, content_path)?;
        Ok(g)
    }

    /// Apply a batch of node, edge and content files to this graph, in that
    /// order. Used both for initial loading and for growth deltas.
    pub fn extend_from_files(
        &mut self,
        nodes_path: &Path,
        edges_path: &Path,
        content_path: Option<&Path>,
    ) -> Result<Vec<NodeId>, GraphError> {
        let added = self.read_nodes(BufReader::new(File::open(nodes_path)?), &nodes_path.display().to_string())?;
        self.read_edges(BufReader::new(File::open(edges_path)?), &edges_path.display().to_string())?;
        if let Some(p) = content_path {
            self.read_content(BufReader::new(File::open(p)?), &p.display().to_string())?;
        }
        Ok(added)
    }

    /// `label<TAB>type` lines. Returns the ids of the nodes added, in file order.
    pub fn read_nodes<R: BufRead>(&mut self, reader: R, name: &str) -> Result<Vec<NodeId>, GraphError> {
        let mut added = Vec::new();
        for_each_record(reader, name, 2, |fields| {
            let id = self.add_node_named(fields[0], fields[1], None)?;
            added.push(id);
            Ok(())
        })?;
        Ok(added)
    }

    /// `src<TAB>relation<TAB>dst` lines.
    pub fn read_edges<R: BufRead>(&mut self, reader: R, name: &str) -> Result<(), GraphError> {
        for_each_record(reader, name, 3, |fields| {
            self.add_edge_labeled(fields[0], fields[1], fields[2]).map(|_| ())
        })
    }

    /// `label<TAB>text` lines.
    pub fn read_content<R: BufRead>(&mut self, reader: R, name: &str) -> Result<(), GraphError> {
        for_each_record(reader, name, 2, |fields| {
            let v = self.require(fields[0])?;
            self.set_content(v, fields[1].to_string())
        })
    }

    pub fn write_nodes<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for v in self.nodes() {
            writeln!(w, "{}\t{}", self.label(v), self.type_name_of(v))?;
        }
        Ok(())
    }

    pub fn write_edges<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for e in &self.edges {
            writeln!(
                w,
                "{}\t{}\t{}",
                self.label(e.source),
                self.schema.relation_spec(e.relation).name,
                self.label(e.target)
            )?;
        }
        Ok(())
    }

    pub fn write_content<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for v in self.nodes() {
            if let Some(text) = self.content(v) {
                writeln!(w, "{}\t{}", self.label(v), text)?;
            }
        }
        Ok(())
    }

    /// Write `schema.txt`, `nodes.tsv`, `edges.tsv` and `content.tsv` into `dir`.
    pub fn save_dir(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("schema.txt"), self.schema.to_text())?;
        self.write_nodes(std::io::BufWriter::new(File::create(dir.join("nodes.tsv"))?))?;
        self.write_edges(std::io::BufWriter::new(File::create(dir.join("edges.tsv"))?))?;
        self.write_content(std::io::BufWriter::new(File::create(dir.join("content.tsv"))?))?;
        Ok(())
    }

    /// Inverse of [`HetGraph::save_dir`]; `content.tsv` is optional.
    pub fn load_dir(dir: &Path) -> Result<Self, GraphError> {
        let schema_path = dir.join("schema.txt");
        let schema = if schema_path.exists() {
            GraphSchema::load(&schema_path)?
        } else {
            GraphSchema::academic()
        };
        let content = dir.join("content.tsv");
        HetGraph::load(
            schema,
            &dir.join("nodes.tsv"),
            &dir.join("edges.tsv"),
            content.exists().then_some(content.as_path()),
        )
    }
}

impl fmt::Display for HetGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "HetGraph(|V|={}, |E|={}, |V_S|={})",
            self.node_count(),
            self.edge_count(),
            self.content.iter().filter(|c| c.is_some()).count()
        )
    }
}

fn insert_sorted(list: &mut Vec<(NodeId, RelationType)>, item: (NodeId, RelationType)) {
    if let Err(pos) = list.binary_search(&item) {
        list.insert(pos, item);
    }
}

/// Iterate over the data lines of a TSV stream, skipping blanks and `#`
/// comments. Errors raised by `f` are tagged with the line number.
fn for_each_record<R, F>(reader: R, name: &str, fields: usize, mut f: F) -> Result<(), GraphError>
where
    R: BufRead,
    F: FnMut(&[&str]) -> Result<(), GraphError>,
{
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.splitn(fields, '\t').collect();
        if parts.len() != fields {
            return Err(GraphError::Malformed { expected: fields, found: parts.len() }.at(name, i + 1));
        }
        if parts[fields - 1].contains('\t') {
            let found = line.split('\t').count();
            return Err(GraphError::Malformed { expected: fields, found }.at(name, i + 1));
        }
        f(&parts).map_err(|e| e.at(name, i + 1))?;
    }
    Ok(())
}

/// Parse a TSV of `a<TAB>b` pairs into owned strings (used by event files).
pub fn read_pairs<R: Read>(reader: R, name: &str) -> Result<Vec<(String, String)>, GraphError> {
    let mut out = Vec::new();
    for_each_record(BufReader::new(reader), name, 2, |f| {
        out.push((f[0].to_string(), f[1].to_string()));
        Ok(())
    })?;
    Ok(out)
}
