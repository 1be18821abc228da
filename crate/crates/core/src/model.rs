//! The full hybrid model: parameters, a forward pass that records a [`GradTape`],
//! and hand-written backward passes for every layer.
//!
//! Data flow for one `(user, item)` pair:
//!
//! ```text
//! node_table ─► propagate × L ─► h_u, h_i ─┐
//!                                          ├─► z = [h_u | e_u | h_i | e_i] ─► head ─► logit
//! text docs ─► hashed sum ─► normalize ─► e_u, e_i ─┘
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::hash::Hasher;

use fnv::FnvHasher;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{dim_err, Error, Result};
use crate::fusion::PredictionHead;
use crate::graph::{layer_activation, IdMap, InteractionGraph};
use crate::linalg::{axpy, dot, matmul, matmul_nt, matmul_nt_dots, matmul_tn, Matrix};
use crate::lora::{lora_effective, LoraAdapter};
use crate::semantic::{Corpus, HashedDoc, TextTable, DEFAULT_NUM_BUCKETS};

pub const HEAD_HIDDEN: &str = "head.hidden";

pub fn gnn_param_name(layer_index: usize) -> String {
    format!("gnn.{layer_index}")
}

/// Which modalities feed the fused representation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    GnnOnly,
    TextOnly,
    Hybrid,
}

impl Variant {
    pub fn uses_structure(self) -> bool {
        !matches!(self, Variant::TextOnly)
    }

    pub fn uses_text(self) -> bool {
        !matches!(self, Variant::GnnOnly)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::GnnOnly => "gnn_only",
            Variant::TextOnly => "text_only",
            Variant::Hybrid => "hybrid",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gnn_only" => Some(Variant::GnnOnly),
            "text_only" => Some(Variant::TextOnly),
            "hybrid" => Some(Variant::Hybrid),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelDims {
    pub d_g: usize,
    pub d_s: usize,
    pub d_h: usize,
    pub layers: usize,
    pub num_buckets: u64,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self { d_g: 32, d_s: 32, d_h: 64, layers: 2, num_buckets: DEFAULT_NUM_BUCKETS }
    }
}

impl ModelDims {
    /// Width of `z`: always `2(d_g + d_s)`, whatever the variant.
    pub fn fused_dim(&self) -> usize {
        2 * (self.d_g + self.d_s)
    }
}

/// Per-group trainable flags.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrainableMask {
    pub node_table: bool,
    pub gnn_weights: bool,
    pub text_table: bool,
    pub head_hidden: bool,
    /// `hidden_bias`, `out` and `out_bias`.
    pub head_out: bool,
    pub lora: bool,
}

impl TrainableMask {
    pub const ALL: TrainableMask = TrainableMask {
        node_table: true,
        gnn_weights: true,
        text_table: true,
        head_hidden: true,
        head_out: true,
        lora: true,
    };

    pub const LORA_ONLY: TrainableMask = TrainableMask {
        node_table: false,
        gnn_weights: false,
        text_table: false,
        head_hidden: false,
        head_out: false,
        lora: true,
    };
}

#[derive(Clone, Debug, PartialEq)]
pub struct StructuralParams {
    /// Trainable `h^(0)`, one row per node.
    pub node_table: Matrix,
    /// `W^(1..L)`, each stored `(d_out × d_in)`.
    pub gnn_weights: Vec<Matrix>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub variant: Variant,
    pub dims: ModelDims,
    pub num_users: usize,
    pub num_items: usize,
    /// Present unless the variant is text-only.
    pub structural: Option<StructuralParams>,
    /// Present unless the variant is structure-only.
    pub text_table: Option<TextTable>,
    pub head: PredictionHead,
    pub lora: BTreeMap<String, LoraAdapter>,
    pub trainable: TrainableMask,
}

/// One named parameter group as seen by [`count_params`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamEntry {
    pub name: String,
    pub len: usize,
    pub trainable: bool,
}

/// Scalar count over parameter groups, optionally only trainable ones.
pub fn count_params(entries: &[ParamEntry], trainable_only: bool) -> usize {
    entries.iter().filter(|e| e.trainable || !trainable_only).map(|e| e.len).sum()
}

impl ModelParams {
    pub fn new(variant: Variant, dims: ModelDims, num_users: usize, num_items: usize, seed: u64) -> Result<Self> {
        if dims.layers == 0 && variant.uses_structure() {
            return Err(Error::InvalidInput("structural encoder needs at least one layer".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let structural = variant.uses_structure().then(|| {
            let bound = 1.0 / (dims.d_g.max(1) as f64).sqrt();
            let node_table = Matrix::uniform(num_users + num_items, dims.d_g, bound, &mut rng);
            let gnn_weights = (0..dims.layers).map(|_| Matrix::xavier(dims.d_g, dims.d_g, &mut rng)).collect();
            StructuralParams { node_table, gnn_weights }
        });
        let head = PredictionHead::new(dims.fused_dim(), dims.d_h, &mut rng);
        let text_table = if variant.uses_text() {
            Some(TextTable::new(dims.num_buckets, dims.d_s, seed ^ 0x5eed_7e47)?)
        } else {
            None
        };
        Ok(Self {
            variant,
            dims,
            num_users,
            num_items,
            structural,
            text_table,
            head,
            lora: BTreeMap::new(),
            trainable: TrainableMask::ALL,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_users + self.num_items
    }

    /// Adds zero-initialized adapters to every GNN weight and the head's
    /// hidden layer, then freezes everything but the adapters.
    pub fn enable_lora(&mut self, rank: usize, alpha: f64, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if let Some(s) = &self.structural {
            for (l, w) in s.gnn_weights.iter().enumerate() {
                let adapter = LoraAdapter::new(w.rows(), w.cols(), rank, alpha, &mut rng)?;
                self.lora.insert(gnn_param_name(l), adapter);
            }
        }
        let h = &self.head.hidden;
        self.lora.insert(HEAD_HIDDEN.to_string(), LoraAdapter::new(h.rows(), h.cols(), rank, alpha, &mut rng)?);
        self.trainable = TrainableMask::LORA_ONLY;
        Ok(())
    }

    pub fn param_entries(&self) -> Vec<ParamEntry> {
        let m = self.trainable;
        let mut out = Vec::new();
        let mut push = |name: String, len: usize, trainable: bool| out.push(ParamEntry { name, len, trainable });
        if let Some(s) = &self.structural {
            push("node_table".into(), s.node_table.len(), m.node_table);
            for (l, w) in s.gnn_weights.iter().enumerate() {
                push(gnn_param_name(l), w.len(), m.gnn_weights);
            }
        }
        if let Some(t) = &self.text_table {
            push("text_table".into(), t.num_params(), m.text_table);
        }
        push(HEAD_HIDDEN.into(), self.head.hidden.len(), m.head_hidden);
        push("head.hidden_bias".into(), self.head.hidden_bias.len(), m.head_out);
        push("head.out".into(), self.head.out.len(), m.head_out);
        push("head.out_bias".into(), 1, m.head_out);
        for (name, a) in &self.lora {
            push(format!("lora.{name}"), a.num_params(), m.lora);
        }
        out
    }

    pub fn count_params(&self, trainable_only: bool) -> usize {
        count_params(&self.param_entries(), trainable_only)
    }

    /// GNN weights with any LoRA update merged in.
    pub fn effective_gnn_weights(&self) -> Result<Vec<Matrix>> {
        let Some(s) = &self.structural else { return Ok(Vec::new()) };
        s.gnn_weights
            .iter()
            .enumerate()
            .map(|(l, w)| match self.lora.get(&gnn_param_name(l)) {
                Some(a) => lora_effective(w, a),
                None => Ok(w.clone()),
            })
            .collect()
    }

    /// Head with any LoRA update merged into the hidden layer.
    pub fn effective_head(&self) -> Result<PredictionHead> {
        let mut head = self.head.clone();
        if let Some(a) = self.lora.get(HEAD_HIDDEN) {
            head.hidden = lora_effective(&self.head.hidden, a)?;
        }
        Ok(head)
    }

    /// FNV-1a digest of every parameter bit plus the architecture.
    pub fn version_hash(&self) -> u64 {
        let mut h = FnvHasher::default();
        let mat = |h: &mut FnvHasher, m: &Matrix| {
            h.write_usize(m.rows());
            h.write_usize(m.cols());
            for v in m.as_slice() {
                h.write_u64(v.to_bits());
            }
        };
        h.write(self.variant.as_str().as_bytes());
        h.write_usize(self.dims.d_g);
        h.write_usize(self.dims.d_s);
        h.write_usize(self.dims.d_h);
        h.write_usize(self.dims.layers);
        h.write_u64(self.dims.num_buckets);
        h.write_usize(self.num_users);
        h.write_usize(self.num_items);
        if let Some(s) = &self.structural {
            mat(&mut h, &s.node_table);
            for w in &s.gnn_weights {
                mat(&mut h, w);
            }
        }
        if let Some(t) = &self.text_table {
            h.write_u64(t.seed());
            for b in t.materialized_buckets() {
                h.write_u64(*b);
            }
            mat(&mut h, t.rows());
        }
        mat(&mut h, &self.head.hidden);
        for v in &self.head.hidden_bias {
            h.write_u64(v.to_bits());
        }
        mat(&mut h, &self.head.out);
        h.write_u64(self.head.out_bias.to_bits());
        for (name, a) in &self.lora {
            h.write(name.as_bytes());
            h.write_u64(a.alpha.to_bits());
            mat(&mut h, &a.a);
            mat(&mut h, &a.b);
        }
        h.finish()
    }

    /// Flattens trainable scalars in a fixed order (see [`Gradients::to_vector`]).
    pub fn trainable_vector(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit_trainable(|slice| out.extend_from_slice(slice));
        out
    }

    /// Inverse of [`Self::trainable_vector`].
    pub fn set_trainable_vector(&mut self, values: &[f64]) -> Result<()> {
        let mut pos = 0;
        let mut short = false;
        self.visit_trainable_mut(|slice| {
            if pos + slice.len() > values.len() {
                short = true;
                return;
            }
            slice.copy_from_slice(&values[pos..pos + slice.len()]);
            pos += slice.len();
        });
        if short || pos != values.len() {
            return Err(dim_err("set_trainable_vector", format!("{} values supplied", values.len())));
        }
        Ok(())
    }

    fn visit_trainable(&self, mut f: impl FnMut(&[f64])) {
        let m = self.trainable;
        if let Some(s) = &self.structural {
            if m.node_table {
                f(s.node_table.as_slice());
            }
            if m.gnn_weights {
                s.gnn_weights.iter().for_each(|w| f(w.as_slice()));
            }
        }
        if let (Some(t), true) = (&self.text_table, m.text_table) {
            f(t.rows().as_slice());
        }
        if m.head_hidden {
            f(self.head.hidden.as_slice());
        }
        if m.head_out {
            f(&self.head.hidden_bias);
            f(self.head.out.as_slice());
            f(std::slice::from_ref(&self.head.out_bias));
        }
        if m.lora {
            for a in self.lora.values() {
                f(a.a.as_slice());
                f(a.b.as_slice());
            }
        }
    }

    fn visit_trainable_mut(&mut self, mut f: impl FnMut(&mut [f64])) {
        let m = self.trainable;
        if let Some(s) = &mut self.structural {
            if m.node_table {
                f(s.node_table.as_mut_slice());
            }
            if m.gnn_weights {
                s.gnn_weights.iter_mut().for_each(|w| f(w.as_mut_slice()));
            }
        }
        if let (Some(t), true) = (&mut self.text_table, m.text_table) {
            f(t.rows_mut().as_mut_slice());
        }
        if m.head_hidden {
            f(self.head.hidden.as_mut_slice());
        }
        if m.head_out {
            f(&mut self.head.hidden_bias);
            f(self.head.out.as_mut_slice());
            f(std::slice::from_mut(&mut self.head.out_bias));
        }
        if m.lora {
            for a in self.lora.values_mut() {
                f(a.a.as_mut_slice());
                f(a.b.as_mut_slice());
            }
        }
    }
}

/// Raw text per node id, `None` where a node has no document.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NodeTexts(pub Vec<Option<String>>);

impl NodeTexts {
    pub fn from_corpus(corpus: &Corpus, ids: &IdMap) -> Self {
        let mut texts = vec![None; ids.num_nodes()];
        for (node, user) in ids.users().iter().enumerate() {
            texts[node] = corpus.user_text(*user).map(str::to_owned);
        }
        for (k, item) in ids.items().iter().enumerate() {
            texts[ids.num_users() + k] = corpus.item_text(*item).map(str::to_owned);
        }
        Self(texts)
    }

    pub fn get(&self, node: usize) -> Option<&str> {
        self.0.get(node).and_then(|t| t.as_deref())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn hashed(&self, num_buckets: u64) -> Vec<HashedDoc> {
        self.0
            .iter()
            .map(|t| t.as_deref().map(|t| HashedDoc::from_text(t, num_buckets)).unwrap_or_default())
            .collect()
    }
}

/// A batch of `(user node, item node, label)` triples.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Batch {
    pub users: Vec<usize>,
    pub items: Vec<usize>,
    pub labels: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn push(&mut self, user: usize, item: usize, label: f64) {
        self.users.push(user);
        self.items.push(item);
        self.labels.push(label);
    }
}

/// Read-only inputs to a forward pass. The `frozen_*` fields carry values
/// that are constant while the corresponding parameters are frozen.
#[derive(Clone, Copy)]
pub struct ForwardContext<'a> {
    pub graph: &'a InteractionGraph,
    /// Per node `(materialized text row, count)` pairs in token order.
    pub doc_rows: &'a [Vec<(usize, f64)>],
    /// `Â · h^(0)`, valid while the node table is frozen.
    pub frozen_first_aggregate: Option<&'a Matrix>,
    /// `(Â · h^(0)) · W_1ᵀ` with the base first-layer weight, valid while the
    /// node table and that weight are frozen. A LoRA update on the first
    /// layer is then added as a rank-r product.
    pub frozen_first_product: Option<&'a Matrix>,
    /// Semantic embedding of every node, valid while the text table is frozen.
    pub frozen_text: Option<&'a Matrix>,
}

struct StructuralTape {
    /// Aggregated inputs `X_l = Â · h^(l-1)`.
    /// The last layer's entries hold only the rows of `nodes`.
    inputs: Vec<Matrix>,
    /// Pre-activations `P_l = X_l · W_lᵀ`.
    pre: Vec<Matrix>,
    effective: Vec<Matrix>,
    /// Batch nodes, ascending.
    nodes: Vec<usize>,
    /// Node id → row in `output`.
    slot: HashMap<usize, usize>,
    /// Final-layer output `h^(L)` for `nodes`.
    output: Matrix,
}

struct TextTape {
    /// Node id → row in `sums` / `embeddings`.
    slot: HashMap<usize, usize>,
    nodes: Vec<usize>,
    sums: Matrix,
    norms: Vec<f64>,
    embeddings: Matrix,
}

/// Cached intermediates of one forward pass, consumed by [`ModelParams::backward`].
pub struct GradTape {
    structural: Option<StructuralTape>,
    text: Option<TextTape>,
    z: Matrix,
    hidden_effective: Matrix,
    pre: Matrix,
    act: Matrix,
    pub logits: Vec<f64>,
}

/// Gradients for every trainable group; frozen groups are `None`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients {
    pub node_table: Option<Matrix>,
    pub gnn_weights: Vec<Option<Matrix>>,
    /// Sparse over materialized text rows, keyed by row index.
    pub text_rows: Option<BTreeMap<usize, Vec<f64>>>,
    pub head_hidden: Option<Matrix>,
    pub hidden_bias: Option<Vec<f64>>,
    pub out: Option<Matrix>,
    pub out_bias: Option<f64>,
    /// `(dA, dB)` per adapter.
    pub lora: BTreeMap<String, (Matrix, Matrix)>,
}

impl Gradients {
    /// Flattens in the same order as [`ModelParams::trainable_vector`].
    pub fn to_vector(&self, model: &ModelParams) -> Vec<f64> {
        let mut out = Vec::new();
        let m = model.trainable;
        if let Some(s) = &model.structural {
            if m.node_table {
                out.extend_from_slice(self.node_table.as_ref().expect("node grad").as_slice());
            }
            if m.gnn_weights {
                for (l, w) in s.gnn_weights.iter().enumerate() {
                    match self.gnn_weights.get(l).and_then(Option::as_ref) {
                        Some(g) => out.extend_from_slice(g.as_slice()),
                        None => out.extend(std::iter::repeat_n(0.0, w.len())),
                    }
                }
            }
        }
        if let (Some(t), true) = (&model.text_table, m.text_table) {
            let rows = self.text_rows.as_ref();
            for r in 0..t.rows().rows() {
                match rows.and_then(|g| g.get(&r)) {
                    Some(g) => out.extend_from_slice(g),
                    None => out.extend(std::iter::repeat_n(0.0, t.dim())),
                }
            }
        }
        if m.head_hidden {
            out.extend_from_slice(self.head_hidden.as_ref().expect("hidden grad").as_slice());
        }
        if m.head_out {
            out.extend_from_slice(self.hidden_bias.as_ref().expect("bias grad"));
            out.extend_from_slice(self.out.as_ref().expect("out grad").as_slice());
            out.push(self.out_bias.expect("out bias grad"));
        }
        if m.lora {
            for name in model.lora.keys() {
                let (da, db) = &self.lora[name];
                out.extend_from_slice(da.as_slice());
                out.extend_from_slice(db.as_slice());
            }
        }
        out
    }
}

impl ModelParams {
    /// Materializes the text rows used by `docs` and returns per-node row lists.
    pub fn prepare_docs(&mut self, docs: &[HashedDoc]) -> Vec<Vec<(usize, f64)>> {
        match &mut self.text_table {
            Some(t) => docs.iter().map(|d| t.materialize_doc(d)).collect(),
            None => vec![Vec::new(); docs.len()],
        }
    }

    /// Semantic embedding of every node from its materialized rows.
    pub fn node_text_embeddings(&self, doc_rows: &[Vec<(usize, f64)>]) -> Option<Matrix> {
        let t = self.text_table.as_ref()?;
        let mut out = Matrix::zeros(doc_rows.len(), t.dim());
        for (v, rows) in doc_rows.iter().enumerate() {
            let e = out.row_mut(v);
            sum_rows(t.rows(), rows, e);
            crate::semantic::normalize_in_place(e);
        }
        Some(out)
    }

    /// Runs the encoder. Hidden layers cover every node; the last layer only
    /// the batch's nodes, since nothing else reaches the head.
    fn structural_forward(&self, ctx: &ForwardContext, batch: &Batch) -> Result<Option<StructuralTape>> {
        let Some(s) = &self.structural else { return Ok(None) };
        let n = ctx.graph.num_nodes();
        if s.node_table.rows() != n {
            return Err(dim_err("forward", format!("node table has {} rows, graph {n} nodes", s.node_table.rows())));
        }
        let nodes = batch_nodes(batch);
        let effective = self.effective_gnn_weights()?;
        let layers = effective.len();
        let mut inputs = Vec::with_capacity(layers);
        let mut pre = Vec::with_capacity(layers);
        let mut h: Option<Matrix> = None;
        for (idx, w) in effective.iter().enumerate() {
            let last = idx + 1 == layers;
            let source = h.as_ref().unwrap_or(&s.node_table);
            let x = match (idx, ctx.frozen_first_aggregate, last) {
                (0, Some(x), false) => x.clone(),
                (0, Some(x), true) => select_rows(x, &nodes),
                (_, _, false) => ctx.graph.aggregate(source)?,
                (_, _, true) => {
                    let mut x = Matrix::zeros(nodes.len(), source.cols());
                    for (k, &v) in nodes.iter().enumerate() {
                        ctx.graph.aggregate_row(v, source, x.row_mut(k));
                    }
                    x
                }
            };
            let p = match (idx, ctx.frozen_first_product) {
                (0, Some(base)) => {
                    let mut p = if last { select_rows(base, &nodes) } else { base.clone() };
                    if let Some(a) = self.lora.get(&gnn_param_name(0)) {
                        let low = matmul_nt(&matmul_nt_dots(&x, &a.a)?, &a.b)?;
                        p.axpy(a.scale(), &low)?;
                    }
                    p
                }
                _ => matmul_nt(&x, w)?,
            };
            let act = layer_activation(idx + 1, layers);
            h = Some(p.map(|v| act.apply(v)));
            inputs.push(x);
            pre.push(p);
        }
        let slot = nodes.iter().enumerate().map(|(k, &v)| (v, k)).collect();
        Ok(Some(StructuralTape { inputs, pre, effective, nodes, slot, output: h.expect("at least one layer") }))
    }

    fn text_forward(&self, ctx: &ForwardContext, batch: &Batch) -> Option<TextTape> {
        let t = self.text_table.as_ref()?;
        let nodes = batch_nodes(batch);
        let slot = nodes.iter().enumerate().map(|(k, &v)| (v, k)).collect();
        let mut sums = Matrix::zeros(nodes.len(), t.dim());
        let mut norms = vec![0.0; nodes.len()];
        let mut embeddings = Matrix::zeros(nodes.len(), t.dim());
        for (k, &v) in nodes.iter().enumerate() {
            if let Some(frozen) = ctx.frozen_text {
                embeddings.row_mut(k).copy_from_slice(frozen.row(v));
                continue;
            }
            let u = sums.row_mut(k);
            sum_rows(t.rows(), &ctx.doc_rows[v], u);
            let e = embeddings.row_mut(k);
            e.copy_from_slice(sums.row(k));
            norms[k] = crate::semantic::normalize_in_place(e);
        }
        Some(TextTape { slot, nodes, sums, norms, embeddings })
    }

    /// Runs the model on a batch and records everything backward needs.
    pub fn forward(&self, ctx: &ForwardContext, batch: &Batch) -> Result<GradTape> {
        let d = self.dims;
        if self.head.input_dim() != d.fused_dim() {
            return Err(dim_err("forward", "head input width differs from 2(d_g + d_s)"));
        }
        let structural = self.structural_forward(ctx, batch)?;
        let text = self.text_forward(ctx, batch);
        let b = batch.len();
        let mut z = Matrix::zeros(b, d.fused_dim());
        for i in 0..b {
            let (u, it) = (batch.users[i], batch.items[i]);
            let row = z.row_mut(i);
            if let Some(s) = &structural {
                row[..d.d_g].copy_from_slice(s.output.row(s.slot[&u]));
                row[d.d_g + d.d_s..2 * d.d_g + d.d_s].copy_from_slice(s.output.row(s.slot[&it]));
            }
            if let Some(t) = &text {
                row[d.d_g..d.d_g + d.d_s].copy_from_slice(t.embeddings.row(t.slot[&u]));
                row[2 * d.d_g + d.d_s..].copy_from_slice(t.embeddings.row(t.slot[&it]));
            }
        }
        let head = &self.head;
        let hidden_effective = match self.lora.get(HEAD_HIDDEN) {
            Some(a) => lora_effective(&head.hidden, a)?,
            None => head.hidden.clone(),
        };
        let mut pre = matmul_nt(&z, &hidden_effective)?;
        for i in 0..b {
            axpy(1.0, &head.hidden_bias, pre.row_mut(i));
        }
        let act = pre.map(|v| head.hidden_activation.apply(v));
        let out_row = head.out.row(0);
        let logits = (0..b).map(|i| dot(act.row(i), out_row) + head.out_bias).collect();
        Ok(GradTape { structural, text, z, hidden_effective, pre, act, logits })
    }

    /// Backpropagates `dlogits` (the loss gradient per sample) through the tape.
    pub fn backward(&self, ctx: &ForwardContext, batch: &Batch, tape: &GradTape, dlogits: &[f64]) -> Result<Gradients> {
        if dlogits.len() != batch.len() {
            return Err(dim_err("backward", format!("{} gradients for {} samples", dlogits.len(), batch.len())));
        }
        let m = self.trainable;
        let d = self.dims;
        let head = &self.head;
        let b = batch.len();
        let mut grads = Gradients::default();

        // Output layer.
        if m.head_out {
            let mut d_out = vec![0.0; head.hidden_dim()];
            for i in 0..b {
                axpy(dlogits[i], tape.act.row(i), &mut d_out);
            }
            grads.out = Some(Matrix::from_vec(1, d_out.len(), d_out)?);
            grads.out_bias = Some(dlogits.iter().sum());
        }
        let mut d_pre = Matrix::zeros(b, head.hidden_dim());
        let out_row = head.out.row(0);
        for i in 0..b {
            let pre = tape.pre.row(i);
            for (j, g) in d_pre.row_mut(i).iter_mut().enumerate() {
                *g = dlogits[i] * out_row[j] * head.hidden_activation.derivative(pre[j]);
            }
        }
        if m.head_out {
            let mut db = vec![0.0; head.hidden_dim()];
            for i in 0..b {
                axpy(1.0, d_pre.row(i), &mut db);
            }
            grads.hidden_bias = Some(db);
        }
        if m.head_hidden {
            grads.head_hidden = Some(matmul_tn(&d_pre, &tape.z)?);
        }
        if m.lora {
            if let Some(a) = self.lora.get(HEAD_HIDDEN) {
                grads.lora.insert(HEAD_HIDDEN.to_string(), lora_grads(a, &d_pre, &tape.z)?);
            }
        }

        let structural_trainable = self.structural.is_some()
            && (m.node_table || m.gnn_weights || (m.lora && self.lora.keys().any(|k| k.starts_with("gnn."))));
        let text_trainable = self.text_table.is_some() && m.text_table && ctx.frozen_text.is_none();
        if !structural_trainable && !text_trainable {
            return Ok(grads);
        }
        let dz = matmul(&d_pre, &tape.hidden_effective)?;

        if let (true, Some(st), Some(s)) = (structural_trainable, &tape.structural, &self.structural) {
            let mut dh = Matrix::zeros(st.nodes.len(), d.d_g);
            for i in 0..b {
                let row = dz.row(i);
                axpy(1.0, &row[..d.d_g], dh.row_mut(st.slot[&batch.users[i]]));
                axpy(1.0, &row[d.d_g + d.d_s..2 * d.d_g + d.d_s], dh.row_mut(st.slot[&batch.items[i]]));
            }
            let layers = st.effective.len();
            grads.gnn_weights = vec![None; layers];
            for l in (0..layers).rev() {
                let act = layer_activation(l + 1, layers);
                let pre = &st.pre[l];
                let mut dp = dh;
                for (g, &p) in dp.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                    *g *= act.derivative(p);
                }
                if m.gnn_weights {
                    grads.gnn_weights[l] = Some(matmul_tn(&dp, &st.inputs[l])?);
                }
                let name = gnn_param_name(l);
                if let (true, Some(a)) = (m.lora, self.lora.get(&name)) {
                    grads.lora.insert(name, lora_grads(a, &dp, &st.inputs[l])?);
                }
                let below_trainable = m.node_table
                    || (l > 0
                        && (m.gnn_weights || (m.lora && (0..l).any(|k| self.lora.contains_key(&gnn_param_name(k))))));
                if !below_trainable {
                    break;
                }
                let dx = matmul(&dp, &st.effective[l])?;
                dh = if l + 1 == layers { ctx.graph.scatter_rows(&st.nodes, &dx)? } else { ctx.graph.aggregate(&dx)? };
                if l == 0 {
                    grads.node_table = Some(dh);
                    break;
                }
            }
            debug_assert_eq!(s.gnn_weights.len(), layers);
        }

        if let (true, Some(tt), Some(table)) = (text_trainable, &tape.text, &self.text_table) {
            let mut rows: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
            let mut de = Matrix::zeros(tt.nodes.len(), d.d_s);
            for i in 0..b {
                let row = dz.row(i);
                axpy(1.0, &row[d.d_g..d.d_g + d.d_s], de.row_mut(tt.slot[&batch.users[i]]));
                axpy(1.0, &row[2 * d.d_g + d.d_s..], de.row_mut(tt.slot[&batch.items[i]]));
            }
            let mut du = vec![0.0; d.d_s];
            for (k, &v) in tt.nodes.iter().enumerate() {
                let norm = tt.norms[k];
                if norm == 0.0 {
                    continue;
                }
                let e = tt.embeddings.row(k);
                let g = de.row(k);
                let proj = dot(e, g);
                for j in 0..d.d_s {
                    du[j] = (g[j] - e[j] * proj) / norm;
                }
                for &(r, c) in &ctx.doc_rows[v] {
                    axpy(c, &du, rows.entry(r).or_insert_with(|| vec![0.0; d.d_s]));
                }
            }
            debug_assert_eq!(table.dim(), d.d_s);
            debug_assert!(tt.sums.rows() == tt.nodes.len());
            grads.text_rows = Some(rows);
        }
        Ok(grads)
    }
}

/// Distinct users and items of a batch, ascending.
fn batch_nodes(batch: &Batch) -> Vec<usize> {
    batch.users.iter().chain(&batch.items).copied().collect::<BTreeSet<_>>().into_iter().collect()
}

fn select_rows(m: &Matrix, rows: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(rows.len(), m.cols());
    for (k, &r) in rows.iter().enumerate() {
        out.row_mut(k).copy_from_slice(m.row(r));
    }
    out
}

fn sum_rows(table: &Matrix, rows: &[(usize, f64)], out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    for &(r, c) in rows {
        axpy(c, table.row(r), out);
    }
}

/// `(dA, dB)` for `W_eff = W + s·B·A` given `dL/dP` and the layer input `X`
/// where `P = X · W_effᵀ`. Uses the rank-`r` factorization instead of forming
/// the full `dW`.
fn lora_grads(adapter: &LoraAdapter, dp: &Matrix, x: &Matrix) -> Result<(Matrix, Matrix)> {
    let s = adapter.scale();
    let xa = matmul_nt_dots(x, &adapter.a)?; // (n × r)
    let db = matmul_tn(dp, &xa)?.scaled(s); // (d_out × r)
    let dpb = matmul_nt_dots(dp, &adapter.b.transpose())?; // (n × r)
    let da = matmul_tn(&dpb, x)?.scaled(s); // (r × d_in)
    Ok((da, db))
}
