//! Heterogeneous graph model, line-oriented JSON ingestion, and the graph
//! template that splits a typed graph into one type-erased view plus one
//! homogeneous view per node type.

use std::collections::{BTreeSet, VecDeque};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub edge_type: usize,
}

/// Raw material for a [`HeteroGraph`]; validated by [`HeteroGraph::new`].
#[derive(Debug, Clone)]
pub struct GraphParts {
    pub type_names: Vec<String>,
    pub edge_type_names: Vec<String>,
    pub target_type: usize,
    pub node_types: Vec<usize>,
    pub edges: Vec<Edge>,
    /// `node_count × feature_dim`
    pub features: Tensor,
    pub labels: Vec<Option<usize>>,
    pub class_names: Vec<String>,
}

/// A typed graph `G = (V, E)` with node and edge type maps and features.
///
/// Edges are stored as directed pairs; traversal and normalization treat them
/// as undirected.
#[derive(Debug, Clone, PartialEq)]
pub struct HeteroGraph {
    type_names: Vec<String>,
    edge_type_names: Vec<String>,
    target_type: usize,
    node_types: Vec<usize>,
    edges: Vec<Edge>,
    features: Tensor,
    labels: Vec<Option<usize>>,
    class_names: Vec<String>,
    neighbors: Vec<Vec<usize>>,
}

impl HeteroGraph {
    pub fn new(parts: GraphParts) -> Result<Self> {
        let GraphParts {
            type_names,
            edge_type_names,
            target_type,
            node_types,
            edges,
            features,
            labels,
            class_names,
        } = parts;
        let n = node_types.len();

        let heterogeneity = type_names.len() + edge_type_names.len();
        if heterogeneity <= 2 {
            return Err(Error::Heterogeneity(heterogeneity));
        }
        if target_type >= type_names.len() {
            return Err(Error::Validation(format!(
                "target type {target_type} out of range for {} types",
                type_names.len()
            )));
        }
        if let Some((v, &t)) = node_types.iter().enumerate().find(|(_, &t)| t >= type_names.len()) {
            return Err(Error::Validation(format!("node {v} has unknown type id {t}")));
        }
        if features.shape().len() != 2 || features.rows() != n {
            return Err(Error::Validation(format!(
                "feature matrix shape {:?} does not match {n} nodes",
                features.shape()
            )));
        }
        if !features.is_finite() {
            return Err(Error::Validation("non-finite feature value".into()));
        }
        if labels.len() != n {
            return Err(Error::Validation(format!(
                "{} labels for {n} nodes",
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().flatten().find(|&&c| c >= class_names.len()) {
            return Err(Error::Validation(format!("unknown class id {bad}")));
        }
        let mut neighbors = vec![Vec::new(); n];
        for e in &edges {
            if e.src >= n || e.dst >= n {
                return Err(Error::Validation(format!(
                    "edge ({}, {}) has an endpoint outside 0..{n}",
                    e.src, e.dst
                )));
            }
            if e.edge_type >= edge_type_names.len() {
                return Err(Error::Validation(format!(
                    "edge ({}, {}) has unknown type id {}",
                    e.src, e.dst, e.edge_type
                )));
            }
            if e.src != e.dst {
                neighbors[e.src].push(e.dst);
                neighbors[e.dst].push(e.src);
            }
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        Ok(HeteroGraph {
            type_names,
            edge_type_names,
            target_type,
            node_types,
            edges,
            features,
            labels,
            class_names,
            neighbors,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_types.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_type(&self, v: usize) -> usize {
        self.node_types[v]
    }

    pub fn node_types(&self) -> &[usize] {
        &self.node_types
    }

    pub fn type_count(&self) -> usize {
        self.type_names.len()
    }

    pub fn type_names(&self) -> &[String] {
        &self.type_names
    }

    pub fn edge_type_names(&self) -> &[String] {
        &self.edge_type_names
    }

    pub fn target_type(&self) -> usize {
        self.target_type
    }

    pub fn label(&self, v: usize) -> Option<usize> {
        self.labels[v]
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    /// Undirected neighbors of `v`, sorted and deduplicated, excluding `v`.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    pub fn is_adjacent(&self, u: usize, v: usize) -> bool {
        self.neighbors[u].binary_search(&v).is_ok()
    }

    pub fn check_node(&self, v: usize) -> Result<()> {
        if v >= self.node_count() {
            return Err(Error::Index {
                index: v,
                len: self.node_count(),
            });
        }
        Ok(())
    }

    /// Labeled nodes of the target type, grouped by class id.
    pub fn labeled_targets_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.class_count()];
        for v in 0..self.node_count() {
            if self.node_types[v] != self.target_type {
                continue;
            }
            if let Some(c) = self.labels[v] {
                by_class[c].push(v);
            }
        }
        by_class
    }

    /// Number of edges whose endpoints share a node type.
    pub fn monochromatic_edge_count(&self) -> usize {
        self.edges
            .iter()
            .filter(|e| self.node_types[e.src] == self.node_types[e.dst])
            .count()
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Record {
    Meta {
        types: Vec<String>,
        edge_types: Vec<String>,
        feature_dim: usize,
        target_type: String,
    },
    Node {
        id: usize,
        #[serde(rename = "type")]
        node_type: String,
        features: Vec<f64>,
        #[serde(default)]
        label: Option<String>,
    },
    Edge {
        src: usize,
        dst: usize,
        #[serde(rename = "type")]
        edge_type: String,
    },
}

struct NodeRecord {
    node_type: usize,
    features: Vec<f64>,
    label: Option<String>,
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<HeteroGraph> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_graph(BufReader::new(file))
}

/// Parses the JSON-lines graph format. Blank lines are ignored.
pub fn parse_graph(reader: impl BufRead) -> Result<HeteroGraph> {
    let mut meta: Option<(Vec<String>, Vec<String>, usize, usize)> = None;
    let mut nodes: Vec<Option<NodeRecord>> = Vec::new();
    let mut raw_edges: Vec<Edge> = Vec::new();

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            line: lineno,
            message,
        };
        let record: Record = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        match record {
            Record::Meta {
                types,
                edge_types,
                feature_dim,
                target_type,
            } => {
                if meta.is_some() {
                    return Err(parse_err("duplicate meta record".into()));
                }
                let target = types
                    .iter()
                    .position(|t| *t == target_type)
                    .ok_or_else(|| parse_err(format!("target type {target_type:?} not in types")))?;
                meta = Some((types, edge_types, feature_dim, target));
            }
            Record::Node {
                id,
                node_type,
                features,
                label,
            } => {
                let (types, _, dim, _) = meta
                    .as_ref()
                    .ok_or_else(|| parse_err("meta record must come first".into()))?;
                let node_type = types
                    .iter()
                    .position(|t| *t == node_type)
                    .ok_or_else(|| parse_err(format!("unknown node type {node_type:?}")))?;
                if features.len() != *dim {
                    return Err(parse_err(format!(
                        "node {id} has {} features, expected {dim}",
                        features.len()
                    )));
                }
                if nodes.len() <= id {
                    nodes.resize_with(id + 1, || None);
                }
                if nodes[id].is_some() {
                    return Err(parse_err(format!("duplicate node id {id}")));
                }
                nodes[id] = Some(NodeRecord {
                    node_type,
                    features,
                    label,
                });
            }
            Record::Edge {
                src,
                dst,
                edge_type,
            } => {
                let (_, edge_types, _, _) = meta
                    .as_ref()
                    .ok_or_else(|| parse_err("meta record must come first".into()))?;
                let edge_type = edge_types
                    .iter()
                    .position(|t| *t == edge_type)
                    .ok_or_else(|| parse_err(format!("unknown edge type {edge_type:?}")))?;
                raw_edges.push(Edge { src, dst, edge_type });
            }
        }
    }

    let (type_names, edge_type_names, dim, target_type) =
        meta.ok_or_else(|| Error::Validation("missing meta record".into()))?;
    if let Some(missing) = nodes.iter().position(Option::is_none) {
        return Err(Error::Validation(format!(
            "node ids are not dense: id {missing} missing"
        )));
    }
    let nodes: Vec<NodeRecord> = nodes.into_iter().flatten().collect();

    let class_names: Vec<String> = nodes
        .iter()
        .filter_map(|n| n.label.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let labels = nodes
        .iter()
        .map(|n| {
            n.label
                .as_ref()
                .map(|l| class_names.binary_search(l).expect("label collected above"))
        })
        .collect();
    let mut values = Vec::with_capacity(nodes.len() * dim);
    for n in &nodes {
        values.extend_from_slice(&n.features);
    }
    HeteroGraph::new(GraphParts {
        type_names,
        edge_type_names,
        target_type,
        node_types: nodes.iter().map(|n| n.node_type).collect(),
        edges: raw_edges,
        features: Tensor::matrix(nodes.len(), dim, values)?,
        labels,
        class_names,
    })
}

pub fn save_graph(g: &HeteroGraph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_graph(g, &mut out).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_graph(g: &HeteroGraph, out: &mut impl Write) -> Result<()> {
    let io = |e| Error::io("<graph stream>", e);
    let emit = |record: &Record, out: &mut dyn Write| -> Result<()> {
        serde_json::to_writer(&mut *out, record)?;
        out.write_all(b"\n").map_err(io)
    };
    emit(
        &Record::Meta {
            types: g.type_names.clone(),
            edge_types: g.edge_type_names.clone(),
            feature_dim: g.feature_dim(),
            target_type: g.type_names[g.target_type].clone(),
        },
        out,
    )?;
    for v in 0..g.node_count() {
        emit(
            &Record::Node {
                id: v,
                node_type: g.type_names[g.node_types[v]].clone(),
                features: g.features.row(v).to_vec(),
                label: g.labels[v].map(|c| g.class_names[c].clone()),
            },
            out,
        )?;
    }
    for e in &g.edges {
        emit(
            &Record::Edge {
                src: e.src,
                dst: e.dst,
                edge_type: g.edge_type_names[e.edge_type].clone(),
            },
            out,
        )?;
    }
    Ok(())
}

/// One homogeneous view: a node subset with its induced edges and an index
/// remap between graph ids and view-local ids.
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    nodes: Vec<usize>,
    edges: Vec<(usize, usize)>,
    local: Vec<Option<usize>>,
}

impl View {
    /// Graph node ids in this view, ascending.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    /// Edges in view-local indices.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn local_index(&self, node: usize) -> Option<usize> {
        self.local.get(node).copied().flatten()
    }

    pub fn global_index(&self, local: usize) -> usize {
        self.nodes[local]
    }

    pub fn contains(&self, node: usize) -> bool {
        self.local_index(node).is_some()
    }
}

/// The `|A| + 1` views produced by the graph template. `views[0]` is the full
/// topology with types erased; `views[i]` for `i ≥ 1` is the subgraph induced
/// by nodes of type `i - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgraphSet {
    views: Vec<View>,
}

impl SubgraphSet {
    pub fn views(&self) -> &[View] {
        &self.views
    }

    pub fn view(&self, i: usize) -> &View {
        &self.views[i]
    }

    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }

    /// Indices of the views that contain `node`.
    pub fn views_containing(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.views
            .iter()
            .enumerate()
            .filter(move |(_, v)| v.contains(node))
            .map(|(i, _)| i)
    }
}

pub fn apply_template(g: &HeteroGraph) -> SubgraphSet {
    let n = g.node_count();
    let build = |members: Vec<usize>| {
        let mut local = vec![None; n];
        for (i, &v) in members.iter().enumerate() {
            local[v] = Some(i);
        }
        let edges = g
            .edges
            .iter()
            .filter_map(|e| Some((local[e.src]?, local[e.dst]?)))
            .collect();
        View {
            nodes: members,
            edges,
            local,
        }
    };
    let mut views = Vec::with_capacity(g.type_count() + 1);
    views.push(build((0..n).collect()));
    for t in 0..g.type_count() {
        views.push(build((0..n).filter(|&v| g.node_types[v] == t).collect()));
    }
    SubgraphSet { views }
}

/// The `h`-hop neighborhood of a center node in the type-erased topology.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EgoSubgraph {
    pub center: usize,
    pub hops: usize,
    /// Ascending node ids, center included.
    pub nodes: Vec<usize>,
}

pub fn ego_subgraph(g: &HeteroGraph, v: usize, hops: usize) -> Result<EgoSubgraph> {
    g.check_node(v)?;
    let mut dist = vec![usize::MAX; g.node_count()];
    dist[v] = 0;
    let mut queue = VecDeque::from([v]);
    let mut nodes = vec![v];
    while let Some(u) = queue.pop_front() {
        if dist[u] == hops {
            continue;
        }
        for &w in g.neighbors(u) {
            if dist[w] == usize::MAX {
                dist[w] = dist[u] + 1;
                nodes.push(w);
                queue.push_back(w);
            }
        }
    }
    nodes.sort_unstable();
    Ok(EgoSubgraph {
        center: v,
        hops,
        nodes,
    })
}
