//! Top-k serving with a precomputed embedding cache (hot path) or on-demand
//! encoding of each request's receptive field (cold path).

use std::sync::{Arc, RwLock};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{dim_err, Error, Result};
use crate::fusion::PredictionHead;
use crate::graph::{encode, encode_subset, InteractionGraph, NodeEmbeddings};
use crate::linalg::Matrix;
use crate::metrics::{latency_stats, LatencyStats};
use crate::model::{ModelDims, ModelParams, NodeTexts, Variant};
use crate::quant::{dequantize, quantize_per_row, QuantizedHead, QuantizedMatrix};
use crate::semantic::{encode_text, TextTable};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ServeMode {
    Hot,
    Cold,
}

#[derive(Clone, Debug, PartialEq)]
pub enum HeadWeights {
    Full(PredictionHead),
    Quantized(QuantizedHead),
}

impl HeadWeights {
    pub fn score_logit(&self, z: &[f64]) -> Result<f64> {
        match self {
            HeadWeights::Full(h) => h.score_logit(z),
            HeadWeights::Quantized(h) => h.score_logit(z),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LayerWeights {
    Full(Matrix),
    Quantized(QuantizedMatrix),
}

impl LayerWeights {
    fn dense(&self) -> Matrix {
        match self {
            LayerWeights::Full(m) => m.clone(),
            LayerWeights::Quantized(q) => dequantize(q),
        }
    }
}

/// Immutable, inference-ready snapshot of a model with LoRA updates merged.
#[derive(Clone, Debug)]
pub struct ServingModel {
    variant: Variant,
    dims: ModelDims,
    num_users: usize,
    node_table: Option<Matrix>,
    layers: Vec<LayerWeights>,
    dense_layers: Vec<Matrix>,
    text_table: Option<TextTable>,
    head: HeadWeights,
    version: u64,
}

const QUANTIZED_TAG: u64 = 0x1d8_0000_0000_0001;

impl ServingModel {
    pub fn from_params(p: &ModelParams) -> Result<Self> {
        let layers = p.effective_gnn_weights()?.into_iter().map(LayerWeights::Full).collect();
        let head = HeadWeights::Full(p.effective_head()?);
        Self::from_parts(p, layers, head, p.version_hash())
    }

    /// INT8 GNN weights and head; embeddings, text rows and biases stay f64.
    pub fn quantized(p: &ModelParams) -> Result<Self> {
        let layers = p
            .effective_gnn_weights()?
            .iter()
            .map(|w| LayerWeights::Quantized(quantize_per_row(w)))
            .collect();
        let head = HeadWeights::Quantized(QuantizedHead::from_head(&p.effective_head()?)?);
        Self::from_parts(p, layers, head, p.version_hash() ^ QUANTIZED_TAG)
    }

    fn from_parts(p: &ModelParams, layers: Vec<LayerWeights>, head: HeadWeights, version: u64) -> Result<Self> {
        Self::assemble(
            p.variant,
            p.dims,
            p.num_users,
            p.structural.as_ref().map(|s| s.node_table.clone()),
            layers,
            p.text_table.clone(),
            head,
            version,
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        variant: Variant,
        dims: ModelDims,
        num_users: usize,
        node_table: Option<Matrix>,
        layers: Vec<LayerWeights>,
        text_table: Option<TextTable>,
        head: HeadWeights,
        version: u64,
    ) -> Result<Self> {
        if variant.uses_structure() != node_table.is_some() || variant.uses_text() != text_table.is_some() {
            return Err(Error::InvalidInput(format!("parts do not match variant {}", variant.as_str())));
        }
        if node_table.is_some() && layers.is_empty() {
            return Err(Error::InvalidInput("structural encoder needs at least one layer".into()));
        }
        let dense_layers: Vec<Matrix> = layers.iter().map(LayerWeights::dense).collect();
        let in_dim = match &head {
            HeadWeights::Full(h) => h.input_dim(),
            HeadWeights::Quantized(h) => h.input_dim(),
        };
        if in_dim != dims.fused_dim() {
            return Err(dim_err("ServingModel", format!("head takes {in_dim} inputs, fused width is {}", dims.fused_dim())));
        }
        Ok(Self { variant, dims, num_users, node_table, layers, dense_layers, text_table, head, version })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn node_table(&self) -> Option<&Matrix> {
        self.node_table.as_ref()
    }

    pub fn layers(&self) -> &[LayerWeights] {
        &self.layers
    }

    pub fn text_table(&self) -> Option<&TextTable> {
        self.text_table.as_ref()
    }

    pub fn head(&self) -> &HeadWeights {
        &self.head
    }

    pub fn is_quantized(&self) -> bool {
        matches!(self.head, HeadWeights::Quantized(_))
    }

    /// Logit for one pair from its four embedding parts.
    fn logit_from_parts(&self, h_u: Option<&[f64]>, e_u: Option<&[f64]>, h_i: Option<&[f64]>, e_i: Option<&[f64]>) -> Result<f64> {
        let d = self.dims;
        let mut z = vec![0.0; d.fused_dim()];
        if let (Some(u), Some(i)) = (h_u, h_i) {
            z[..d.d_g].copy_from_slice(u);
            z[d.d_g + d.d_s..2 * d.d_g + d.d_s].copy_from_slice(i);
        }
        if let Some(e) = e_u {
            z[d.d_g..d.d_g + d.d_s].copy_from_slice(e);
        }
        if let Some(e) = e_i {
            z[2 * d.d_g + d.d_s..].copy_from_slice(e);
        }
        self.head.score_logit(&z)
    }
}

/// Final-layer structural and semantic embeddings of every node.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingCache {
    pub structural: Option<Matrix>,
    pub semantic: Option<Matrix>,
    pub model_version: u64,
}

impl EmbeddingCache {
    pub fn precompute(model: &ServingModel, graph: &InteractionGraph, texts: &NodeTexts) -> Result<Self> {
        let structural = match &model.node_table {
            Some(h0) => Some(encode(graph, &NodeEmbeddings::new(0, h0.clone()), &model.dense_layers)?.vectors),
            None => None,
        };
        let semantic = match &model.text_table {
            Some(t) => {
                if texts.len() != graph.num_nodes() {
                    return Err(dim_err("precompute", format!("{} texts for {} nodes", texts.len(), graph.num_nodes())));
                }
                let mut m = Matrix::zeros(graph.num_nodes(), t.dim());
                for v in 0..graph.num_nodes() {
                    if let Some(text) = texts.get(v) {
                        m.row_mut(v).copy_from_slice(encode_text(text, t).as_slice());
                    }
                }
                Some(m)
            }
            None => None,
        };
        Ok(Self { structural, semantic, model_version: model.version })
    }

    pub fn check_version(&self, model: &ServingModel) -> Result<()> {
        if self.model_version != model.version {
            return Err(Error::StaleCache { cache: self.model_version, model: model.version });
        }
        Ok(())
    }

    /// Cached logit for one `(user node, item node)` pair.
    pub fn logit(&self, model: &ServingModel, user: usize, item: usize) -> Result<f64> {
        let s = self.structural.as_ref();
        let e = self.semantic.as_ref();
        model.logit_from_parts(
            s.map(|m| m.row(user)),
            e.map(|m| m.row(user)),
            s.map(|m| m.row(item)),
            e.map(|m| m.row(item)),
        )
    }
}

/// Shared slot whose cache is replaced as a whole on rebuild.
#[derive(Debug)]
pub struct CacheHandle(RwLock<Arc<EmbeddingCache>>);

impl CacheHandle {
    pub fn new(cache: EmbeddingCache) -> Self {
        Self(RwLock::new(Arc::new(cache)))
    }

    pub fn load(&self) -> Arc<EmbeddingCache> {
        Arc::clone(&self.0.read().unwrap_or_else(|e| e.into_inner()))
    }

    pub fn replace(&self, cache: EmbeddingCache) {
        *self.0.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(cache);
    }
}

/// Scores arbitrary pairs; used to supply distillation targets.
pub trait PairScorer {
    fn score_pairs(&self, users: &[usize], items: &[usize]) -> Result<Vec<f64>>;
}

pub struct CachedScorer<'a> {
    pub model: &'a ServingModel,
    pub cache: &'a EmbeddingCache,
}

impl PairScorer for CachedScorer<'_> {
    fn score_pairs(&self, users: &[usize], items: &[usize]) -> Result<Vec<f64>> {
        self.cache.check_version(self.model)?;
        users.iter().zip(items).map(|(&u, &i)| self.cache.logit(self.model, u, i)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatencySample {
    pub request_id: u64,
    pub mode: ServeMode,
    pub elapsed_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Recommendation {
    /// `(item node, logit)`, best first.
    pub items: Vec<(usize, f64)>,
    pub latency: LatencySample,
}

/// Everything needed to answer requests.
#[derive(Clone, Copy)]
pub struct Server<'a> {
    pub model: &'a ServingModel,
    pub cache: Option<&'a EmbeddingCache>,
    pub graph: &'a InteractionGraph,
    pub texts: &'a NodeTexts,
}

impl Server<'_> {
    fn check_request(&self, user: usize, candidates: &[usize]) -> Result<()> {
        if !self.graph.is_user(user) {
            return Err(Error::UnknownNode(user));
        }
        if let Some(&bad) = candidates.iter().find(|&&c| !self.graph.is_item(c)) {
            return Err(Error::UnknownNode(bad));
        }
        Ok(())
    }

    fn hot_logits(&self, user: usize, candidates: &[usize]) -> Result<Vec<f64>> {
        let cache = self.cache.ok_or_else(|| Error::InvalidInput("hot path needs an embedding cache".into()))?;
        cache.check_version(self.model)?;
        candidates.iter().map(|&c| cache.logit(self.model, user, c)).collect()
    }

    fn cold_logits(&self, user: usize, candidates: &[usize]) -> Result<Vec<f64>> {
        let m = self.model;
        let mut targets = Vec::with_capacity(candidates.len() + 1);
        targets.push(user);
        targets.extend_from_slice(candidates);
        let structural = match &m.node_table {
            Some(h0) => Some(encode_subset(self.graph, h0, &m.dense_layers, &targets)?),
            None => None,
        };
        let semantic = m.text_table.as_ref().map(|t| {
            let mut e = Matrix::zeros(targets.len(), t.dim());
            for (k, &v) in targets.iter().enumerate() {
                if let Some(text) = self.texts.get(v) {
                    e.row_mut(k).copy_from_slice(encode_text(text, t).as_slice());
                }
            }
            e
        });
        let s = structural.as_ref();
        let e = semantic.as_ref();
        (1..targets.len())
            .map(|k| m.logit_from_parts(s.map(|x| x.row(0)), e.map(|x| x.row(0)), s.map(|x| x.row(k)), e.map(|x| x.row(k))))
            .collect()
    }

    /// Ranks `candidates` for `user` by logit, ties broken by ascending item id.
    pub fn serve_topk(&self, request_id: u64, user: usize, k: usize, mode: ServeMode, candidates: &[usize]) -> Result<Recommendation> {
        if k == 0 {
            return Err(Error::InvalidInput("k must be positive".into()));
        }
        let start = Instant::now();
        self.check_request(user, candidates)?;
        let logits = match mode {
            ServeMode::Hot => self.hot_logits(user, candidates)?,
            ServeMode::Cold => self.cold_logits(user, candidates)?,
        };
        let items = rank_candidates(candidates, &logits, k);
        let elapsed_ms = (start.elapsed().as_secs_f64() * 1e3).max(1e-6);
        Ok(Recommendation { items, latency: LatencySample { request_id, mode, elapsed_ms } })
    }
}

/// Top `k` of `candidates` by descending logit; equal logits order by ascending id.
pub fn rank_candidates(candidates: &[usize], logits: &[f64], k: usize) -> Vec<(usize, f64)> {
    let mut items: Vec<(usize, f64)> = candidates.iter().copied().zip(logits.iter().copied()).collect();
    items.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    items.truncate(k);
    items
}

/// A user and the candidate items to rank for them.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRequest {
    pub user: usize,
    pub candidates: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialConfig {
    pub n_requests: usize,
    pub warmup: usize,
    pub k: usize,
    pub mode: ServeMode,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialOutcome {
    pub stats: LatencyStats,
    /// Measured samples only; warm-up requests are excluded.
    pub samples: Vec<LatencySample>,
}

/// Indices into the request pool drawn uniformly with replacement.
pub fn trial_sequence(pool: usize, total: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..total).map(|_| rng.gen_range(0..pool)).collect()
}

/// Sequential requests; the first `warmup` are served but not measured.
pub fn run_latency_trial(server: &Server, pool: &[EvalRequest], cfg: TrialConfig) -> Result<TrialOutcome> {
    if pool.is_empty() || cfg.n_requests == 0 {
        return Err(Error::InvalidInput("latency trial needs requests".into()));
    }
    let seq = trial_sequence(pool.len(), cfg.warmup + cfg.n_requests, cfg.seed);
    let mut samples = Vec::with_capacity(cfg.n_requests);
    for (n, &idx) in seq.iter().enumerate() {
        let req = &pool[idx];
        let rec = server.serve_topk(n as u64, req.user, cfg.k, cfg.mode, &req.candidates)?;
        if n >= cfg.warmup {
            samples.push(rec.latency);
        }
    }
    let ms: Vec<f64> = samples.iter().map(|s| s.elapsed_ms).collect();
    Ok(TrialOutcome { stats: latency_stats(&ms)?, samples })
}
