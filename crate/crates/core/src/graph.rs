//! Bipartite user-item interaction graph and normalized neighborhood propagation.
//!
//! Users occupy node ids `0..num_users` and items `num_users..num_users + num_items`.
//! One propagation layer computes, for every node `v`,
//!
//! ```text
//! h_v' = act( W · Σ_{u ∈ N(v)} h_u / sqrt(deg(v) · deg(u)) )
//! ```
//!
//! with no self-loop, so a node without neighbors maps to `act(0)`.

use std::collections::{BTreeSet, HashMap};

use crate::error::{dim_err, Error, Result};
use crate::linalg::{axpy, matmul_nt, row_times_transposed, Activation, Matrix};

/// One observed interaction with external ids.
#[derive(Clone, Debug, PartialEq)]
pub struct Interaction {
    pub user: u64,
    pub item: u64,
    pub weight: f64,
    pub timestamp: i64,
}

impl Interaction {
    pub fn new(user: u64, item: u64, weight: f64, timestamp: i64) -> Self {
        Self { user, item, weight, timestamp }
    }
}

/// Remapping between external user/item ids and dense node ids.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IdMap {
    users: Vec<u64>,
    items: Vec<u64>,
    user_index: HashMap<u64, usize>,
    item_index: HashMap<u64, usize>,
}

impl IdMap {
    /// Dense ids are assigned in ascending external-id order.
    pub fn from_ids(users: impl IntoIterator<Item = u64>, items: impl IntoIterator<Item = u64>) -> Self {
        let users: Vec<u64> = users.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let items: Vec<u64> = items.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let user_index = users.iter().enumerate().map(|(i, &u)| (u, i)).collect();
        let item_index = items.iter().enumerate().map(|(i, &u)| (u, i)).collect();
        Self { users, items, user_index, item_index }
    }

    pub fn from_interactions(interactions: &[Interaction]) -> Self {
        Self::from_ids(interactions.iter().map(|x| x.user), interactions.iter().map(|x| x.item))
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.users.len() + self.items.len()
    }

    pub fn user_node(&self, user: u64) -> Option<usize> {
        self.user_index.get(&user).copied()
    }

    pub fn item_node(&self, item: u64) -> Option<usize> {
        self.item_index.get(&item).map(|i| i + self.users.len())
    }

    pub fn external_user(&self, node: usize) -> Option<u64> {
        self.users.get(node).copied()
    }

    pub fn external_item(&self, node: usize) -> Option<u64> {
        node.checked_sub(self.users.len()).and_then(|i| self.items.get(i)).copied()
    }

    pub fn users(&self) -> &[u64] {
        &self.users
    }

    pub fn items(&self) -> &[u64] {
        &self.items
    }
}

/// Compressed sparse row adjacency of a bipartite interaction graph.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionGraph {
    num_users: usize,
    num_items: usize,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    /// `1 / c_vu` for every adjacency entry, aligned with `neighbors`.
    inv_norm: Vec<f64>,
}

/// Builds the deduplicated graph and the id remapping from raw interactions.
pub fn build_graph(interactions: &[Interaction]) -> Result<(InteractionGraph, IdMap)> {
    if interactions.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let ids = IdMap::from_interactions(interactions);
    let graph = InteractionGraph::from_interactions(interactions, &ids)?;
    Ok((graph, ids))
}

impl InteractionGraph {
    /// Builds the graph over a fixed id space. Nodes in `ids` that have no
    /// interaction stay isolated. Duplicate pairs collapse to one edge.
    pub fn from_interactions(interactions: &[Interaction], ids: &IdMap) -> Result<Self> {
        if interactions.is_empty() {
            return Err(Error::EmptyGraph);
        }
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); ids.num_nodes()];
        for x in interactions {
            let u = ids
                .user_node(x.user)
                .ok_or_else(|| Error::InvalidInput(format!("user {} missing from id map", x.user)))?;
            let i = ids
                .item_node(x.item)
                .ok_or_else(|| Error::InvalidInput(format!("item {} missing from id map", x.item)))?;
            rows[u].push(i);
            rows[i].push(u);
        }
        for row in &mut rows {
            row.sort_unstable();
            row.dedup();
        }
        Self::from_adjacency_rows(ids.num_users(), ids.num_items(), rows)
    }

    /// Builds a graph from explicit adjacency rows, kept in the given order.
    ///
    /// Rows must be symmetric, duplicate-free and bipartite.
    pub fn from_adjacency_rows(num_users: usize, num_items: usize, rows: Vec<Vec<usize>>) -> Result<Self> {
        let n = num_users + num_items;
        if rows.len() != n {
            return Err(dim_err("InteractionGraph", format!("{} rows for {n} nodes", rows.len())));
        }
        for (v, row) in rows.iter().enumerate() {
            let v_is_user = v < num_users;
            let mut seen = BTreeSet::new();
            for &u in row {
                if u >= n {
                    return Err(Error::UnknownNode(u));
                }
                if (u < num_users) == v_is_user {
                    return Err(Error::InvalidInput(format!("edge {v}-{u} is not user-item")));
                }
                if !seen.insert(u) {
                    return Err(Error::InvalidInput(format!("duplicate edge {v}-{u}")));
                }
                if !rows[u].contains(&v) {
                    return Err(Error::InvalidInput(format!("edge {v}-{u} has no reverse entry")));
                }
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for row in &rows {
            offsets.push(offsets.last().unwrap() + row.len());
        }
        let neighbors: Vec<usize> = rows.into_iter().flatten().collect();
        let mut graph = Self { num_users, num_items, offsets, neighbors, inv_norm: Vec::new() };
        graph.inv_norm = (0..n)
            .flat_map(|v| graph.neighbors(v).iter().map(move |&u| (v, u)))
            .map(|(v, u)| 1.0 / ((graph.degree(v) * graph.degree(u)) as f64).sqrt())
            .collect();
        Ok(graph)
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_nodes(&self) -> usize {
        self.num_users + self.num_items
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    #[inline]
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    #[inline]
    fn inv_norms(&self, v: usize) -> &[f64] {
        &self.inv_norm[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn is_user(&self, v: usize) -> bool {
        v < self.num_users
    }

    pub fn is_item(&self, v: usize) -> bool {
        v >= self.num_users && v < self.num_nodes()
    }

    pub fn item_nodes(&self) -> std::ops::Range<usize> {
        self.num_users..self.num_nodes()
    }

    pub fn has_edge(&self, v: usize, u: usize) -> bool {
        v < self.num_nodes() && self.neighbors(v).contains(&u)
    }

    /// `c_vu = sqrt(deg(v) · deg(u))` for an existing edge.
    pub fn norm_constant(&self, v: usize, u: usize) -> Result<f64> {
        if !self.has_edge(v, u) {
            return Err(Error::NotAnEdge(v, u));
        }
        Ok(((self.degree(v) * self.degree(u)) as f64).sqrt())
    }

    /// Writes `Σ_{u∈N(v)} h_u / c_vu` into `out`, visiting neighbors in storage order.
    #[inline]
    pub fn aggregate_row(&self, v: usize, h: &Matrix, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (&u, &w) in self.neighbors(v).iter().zip(self.inv_norms(v)) {
            axpy(w, h.row(u), out);
        }
    }

    /// `Âᵀ · g` for a `g` that is zero outside `nodes`; row `k` of `rows`
    /// holds `g[nodes[k]]`. Returns a full `(num_nodes × cols)` matrix.
    pub fn scatter_rows(&self, nodes: &[usize], rows: &Matrix) -> Result<Matrix> {
        if rows.rows() != nodes.len() {
            return Err(dim_err("scatter_rows", format!("{} rows for {} nodes", rows.rows(), nodes.len())));
        }
        let mut out = Matrix::zeros(self.num_nodes(), rows.cols());
        for (k, &v) in nodes.iter().enumerate() {
            for (&u, &w) in self.neighbors(v).iter().zip(self.inv_norms(v)) {
                axpy(w, rows.row(k), out.row_mut(u));
            }
        }
        Ok(out)
    }

    /// `Â · h` with `Â = D^{-1/2} A D^{-1/2}`. `Â` is symmetric, so this is
    /// also the backward map of the aggregation.
    pub fn aggregate(&self, h: &Matrix) -> Result<Matrix> {
        if h.rows() != self.num_nodes() {
            return Err(dim_err(
                "aggregate",
                format!("{} embedding rows for {} nodes", h.rows(), self.num_nodes()),
            ));
        }
        let mut out = Matrix::zeros(h.rows(), h.cols());
        for v in 0..self.num_nodes() {
            self.aggregate_row(v, h, out.row_mut(v));
        }
        Ok(out)
    }
}

/// Embeddings of every node after a given number of propagation layers.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeEmbeddings {
    pub layer: usize,
    pub vectors: Matrix,
}

impl NodeEmbeddings {
    pub fn new(layer: usize, vectors: Matrix) -> Self {
        Self { layer, vectors }
    }

    pub fn row(&self, v: usize) -> &[f64] {
        self.vectors.row(v)
    }
}

/// One propagation layer. `w` is stored `(d_out × d_in)`.
pub fn propagate(
    graph: &InteractionGraph,
    h_prev: &NodeEmbeddings,
    w: &Matrix,
    activation: Activation,
) -> Result<NodeEmbeddings> {
    if w.cols() != h_prev.vectors.cols() {
        return Err(dim_err(
            "propagate",
            format!("weight {:?} for {}-dim embeddings", w.shape(), h_prev.vectors.cols()),
        ));
    }
    let agg = graph.aggregate(&h_prev.vectors)?;
    let pre = matmul_nt(&agg, w)?;
    Ok(NodeEmbeddings::new(h_prev.layer + 1, pre.map(|x| activation.apply(x))))
}

/// Activation of layer `l` (1-based) in an `num_layers`-deep encoder.
pub fn layer_activation(l: usize, num_layers: usize) -> Activation {
    if l == num_layers {
        Activation::Identity
    } else {
        Activation::Relu
    }
}

/// Full structural encoder: ReLU on hidden layers, identity on the last.
pub fn encode(graph: &InteractionGraph, h0: &NodeEmbeddings, weights: &[Matrix]) -> Result<NodeEmbeddings> {
    if weights.is_empty() {
        return Err(Error::InvalidInput("encoder needs at least one layer".into()));
    }
    let mut h = h0.clone();
    for (idx, w) in weights.iter().enumerate() {
        h = propagate(graph, &h, w, layer_activation(idx + 1, weights.len()))?;
    }
    Ok(h)
}

/// Final-layer embeddings of `targets` only, computed over their receptive field.
///
/// Row `k` of the result equals row `targets[k]` of [`encode`] bit for bit.
pub fn encode_subset(
    graph: &InteractionGraph,
    h0: &Matrix,
    weights: &[Matrix],
    targets: &[usize],
) -> Result<Matrix> {
    let n = graph.num_nodes();
    if weights.is_empty() {
        return Err(Error::InvalidInput("encoder needs at least one layer".into()));
    }
    if h0.rows() != n {
        return Err(dim_err("encode_subset", format!("{} rows for {n} nodes", h0.rows())));
    }
    if let Some(&bad) = targets.iter().find(|&&t| t >= n) {
        return Err(Error::UnknownNode(bad));
    }
    let layers = weights.len();
    // needed[l]: nodes whose layer-l embedding must be computed.
    let mut needed: Vec<Vec<usize>> = vec![Vec::new(); layers + 1];
    let mut mark = vec![false; n];
    for &t in targets {
        if !mark[t] {
            mark[t] = true;
            needed[layers].push(t);
        }
    }
    for l in (1..=layers).rev() {
        mark.iter_mut().for_each(|m| *m = false);
        let mut next = Vec::new();
        for &v in &needed[l] {
            for &u in graph.neighbors(v) {
                if !mark[u] {
                    mark[u] = true;
                    next.push(u);
                }
            }
        }
        needed[l - 1] = next;
    }

    let mut h = h0.clone();
    let mut agg = vec![0.0; h0.cols()];
    for (idx, w) in weights.iter().enumerate() {
        if w.cols() != h.cols() {
            return Err(dim_err("encode_subset", format!("weight {:?} for {}-dim input", w.shape(), h.cols())));
        }
        let l = idx + 1;
        let act = layer_activation(l, layers);
        let w_t = w.transpose();
        let mut next = Matrix::zeros(n, w.rows());
        agg.resize(h.cols(), 0.0);
        for &v in &needed[l] {
            graph.aggregate_row(v, &h, &mut agg);
            let out = next.row_mut(v);
            row_times_transposed(&agg, &w_t, out);
            out.iter_mut().for_each(|x| *x = act.apply(*x));
        }
        h = next;
    }
    let mut out = Matrix::zeros(targets.len(), h.cols());
    for (k, &t) in targets.iter().enumerate() {
        out.row_mut(k).copy_from_slice(h.row(t));
    }
    Ok(out)
}
