//! Mini-batch Adam training with sampled negatives, optional distillation.

use std::collections::{BTreeSet, HashMap};
use std::time::Instant;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{dim_err, Error, Result};
use crate::graph::InteractionGraph;
use crate::linalg::{matmul_nt, max_relative_error, Matrix};
use crate::loss::{bce_logits_and_grad, distill_loss_and_grad, DistillParams};
use crate::model::{Batch, ForwardContext, Gradients, ModelParams};
use crate::semantic::HashedDoc;
use crate::serving::PairScorer;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub negatives: usize,
    /// Positives per mini-batch; each brings `negatives` sampled items.
    pub batch_size: usize,
    /// Positives in the fixed probe batch used for the loss curve.
    pub probe_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            negatives: 4,
            batch_size: 512,
            probe_size: 1024,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || !(self.lr > 0.0) || !(self.adam_eps > 0.0) {
            return Err(Error::InvalidInput("batch size, learning rate and epsilon must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidInput("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

pub enum Objective<'a> {
    Bce,
    Distill { teacher: &'a dyn PairScorer, params: DistillParams },
}

impl Objective<'_> {
    pub fn loss_and_grad(&self, batch: &Batch, logits: &[f64]) -> Result<(f64, Vec<f64>)> {
        match self {
            Objective::Bce => bce_logits_and_grad(logits, &batch.labels),
            Objective::Distill { teacher, params } => {
                let t = teacher.score_pairs(&batch.users, &batch.items)?;
                distill_loss_and_grad(logits, &t, &batch.labels, *params)
            }
        }
    }
}

/// Training inputs: the graph, one hashed document per node, and the
/// positive `(user node, item node)` pairs to fit.
#[derive(Clone, Copy)]
pub struct TrainingSet<'a> {
    pub graph: &'a InteractionGraph,
    pub docs: &'a [HashedDoc],
    pub positives: &'a [(usize, usize)],
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingReport {
    /// Probe loss before the first update.
    pub initial_loss: f64,
    /// Probe loss after each epoch.
    pub epoch_losses: Vec<f64>,
    pub final_loss: f64,
    /// Update-loop time per epoch, probe evaluation excluded.
    pub epoch_seconds: Vec<f64>,
    /// Whole call, including setup and probes.
    pub wall_seconds: f64,
    pub trainable_params: usize,
    pub total_params: usize,
    pub steps: usize,
    /// Sampling calls that found fewer than the requested negatives.
    pub exhausted_negatives: usize,
}

impl TrainingReport {
    pub fn mean_epoch_seconds(&self) -> f64 {
        if self.epoch_seconds.is_empty() {
            0.0
        } else {
            self.epoch_seconds.iter().sum::<f64>() / self.epoch_seconds.len() as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NegativeSample {
    pub items: Vec<usize>,
    /// The user had fewer than `k` non-interacted items.
    pub exhausted: bool,
}

/// Up to `k` distinct item nodes the user has not interacted with, uniformly
/// without replacement.
pub fn sample_negatives<R: Rng + ?Sized>(graph: &InteractionGraph, user: usize, k: usize, rng: &mut R) -> Result<NegativeSample> {
    if !graph.is_user(user) {
        return Err(Error::UnknownNode(user));
    }
    let items = graph.item_nodes();
    let num_items = items.len();
    let seen: BTreeSet<usize> = graph.neighbors(user).iter().copied().collect();
    let available = num_items - seen.len();
    if available <= k {
        let all: Vec<usize> = items.filter(|i| !seen.contains(i)).collect();
        return Ok(NegativeSample { exhausted: all.len() < k, items: all });
    }
    if available * 4 < num_items {
        let pool: Vec<usize> = items.filter(|i| !seen.contains(i)).collect();
        let picked = index::sample(rng, pool.len(), k).into_iter().map(|p| pool[p]).collect();
        return Ok(NegativeSample { items: picked, exhausted: false });
    }
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let cand = rng.gen_range(items.clone());
        if !seen.contains(&cand) && !out.contains(&cand) {
            out.push(cand);
        }
    }
    Ok(NegativeSample { items: out, exhausted: false })
}

fn build_batch<R: Rng>(
    graph: &InteractionGraph,
    positives: &[(usize, usize)],
    negatives: usize,
    rng: &mut R,
    exhausted: &mut usize,
) -> Result<Batch> {
    let mut batch = Batch::default();
    for &(u, i) in positives {
        batch.push(u, i, 1.0);
        let neg = sample_negatives(graph, u, negatives, rng)?;
        *exhausted += usize::from(neg.exhausted);
        for j in neg.items {
            batch.push(u, j, 0.0);
        }
    }
    Ok(batch)
}

struct Adam {
    lr: f64,
    b1: f64,
    b2: f64,
    eps: f64,
    t: i32,
    moments: HashMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Adam {
    fn new(cfg: &TrainConfig) -> Self {
        Self { lr: cfg.lr, b1: cfg.beta1, b2: cfg.beta2, eps: cfg.adam_eps, t: 0, moments: HashMap::new() }
    }

    fn update_range(&mut self, name: &str, total: usize, offset: usize, param: &mut [f64], grad: &[f64]) {
        let (m, v) = self.moments.entry(name.to_string()).or_insert_with(|| (vec![0.0; total], vec![0.0; total]));
        let c1 = 1.0 - self.b1.powi(self.t);
        let c2 = 1.0 - self.b2.powi(self.t);
        for (k, (p, &g)) in param.iter_mut().zip(grad).enumerate() {
            let (m, v) = (&mut m[offset + k], &mut v[offset + k]);
            *m = self.b1 * *m + (1.0 - self.b1) * g;
            *v = self.b2 * *v + (1.0 - self.b2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }

    fn update(&mut self, name: &str, param: &mut [f64], grad: &[f64]) {
        self.update_range(name, param.len(), 0, param, grad);
    }

    /// Text rows use lazy moments: only rows touched by the batch move.
    fn step(&mut self, model: &mut ModelParams, g: &Gradients) {
        self.t += 1;
        if let Some(s) = &mut model.structural {
            if let Some(gn) = &g.node_table {
                self.update("node_table", s.node_table.as_mut_slice(), gn.as_slice());
            }
            for (l, gw) in g.gnn_weights.iter().enumerate() {
                if let Some(gw) = gw {
                    self.update(&format!("gnn.{l}"), s.gnn_weights[l].as_mut_slice(), gw.as_slice());
                }
            }
        }
        if let (Some(t), Some(rows)) = (&mut model.text_table, &g.text_rows) {
            let dim = t.dim();
            let total = t.rows().len();
            for (&r, gr) in rows {
                let param = t.rows_mut().row_mut(r);
                self.update_range("text_table", total, r * dim, param, gr);
            }
        }
        if let Some(gh) = &g.head_hidden {
            self.update("head.hidden", model.head.hidden.as_mut_slice(), gh.as_slice());
        }
        if let Some(gb) = &g.hidden_bias {
            self.update("head.hidden_bias", &mut model.head.hidden_bias, gb);
        }
        if let Some(go) = &g.out {
            self.update("head.out", model.head.out.as_mut_slice(), go.as_slice());
        }
        if let Some(gb) = g.out_bias {
            self.update("head.out_bias", std::slice::from_mut(&mut model.head.out_bias), &[gb]);
        }
        for (name, (da, db)) in &g.lora {
            if let Some(a) = model.lora.get_mut(name) {
                self.update(&format!("lora.{name}.a"), a.a.as_mut_slice(), da.as_slice());
                self.update(&format!("lora.{name}.b"), a.b.as_mut_slice(), db.as_slice());
            }
        }
    }
}

fn gradients_finite(g: &Gradients) -> bool {
    let m = |x: &Option<Matrix>| x.as_ref().map_or(true, Matrix::is_finite);
    m(&g.node_table)
        && g.gnn_weights.iter().all(m)
        && m(&g.head_hidden)
        && m(&g.out)
        && g.hidden_bias.as_ref().map_or(true, |b| b.iter().all(|x| x.is_finite()))
        && g.out_bias.map_or(true, f64::is_finite)
        && g.text_rows.as_ref().map_or(true, |r| r.values().flatten().all(|x| x.is_finite()))
        && g.lora.values().all(|(a, b)| a.is_finite() && b.is_finite())
}

/// Values that stay constant while their parameters are frozen.
struct FrozenCaches {
    first_aggregate: Option<Matrix>,
    first_product: Option<Matrix>,
    text: Option<Matrix>,
}

impl FrozenCaches {
    fn build(model: &ModelParams, graph: &InteractionGraph, doc_rows: &[Vec<(usize, f64)>]) -> Result<Self> {
        let first_aggregate = match &model.structural {
            Some(s) if !model.trainable.node_table => Some(graph.aggregate(&s.node_table)?),
            _ => None,
        };
        let first_product = match (&first_aggregate, &model.structural) {
            (Some(x), Some(s)) if !model.trainable.gnn_weights => Some(matmul_nt(x, &s.gnn_weights[0])?),
            _ => None,
        };
        let text = if model.trainable.text_table { None } else { model.node_text_embeddings(doc_rows) };
        Ok(Self { first_aggregate, first_product, text })
    }

    fn context<'a>(&'a self, graph: &'a InteractionGraph, doc_rows: &'a [Vec<(usize, f64)>]) -> ForwardContext<'a> {
        ForwardContext {
            graph,
            doc_rows,
            frozen_first_aggregate: self.first_aggregate.as_ref(),
            frozen_first_product: self.first_product.as_ref(),
            frozen_text: self.text.as_ref(),
        }
    }
}

fn check_data(model: &ModelParams, data: &TrainingSet) -> Result<()> {
    let g = data.graph;
    if g.num_users() != model.num_users || g.num_items() != model.num_items {
        return Err(dim_err(
            "train",
            format!("model has {}+{} nodes, graph {}+{}", model.num_users, model.num_items, g.num_users(), g.num_items()),
        ));
    }
    if data.docs.len() != g.num_nodes() {
        return Err(dim_err("train", format!("{} documents for {} nodes", data.docs.len(), g.num_nodes())));
    }
    if let Some(&(u, i)) = data.positives.iter().find(|&&(u, i)| !g.is_user(u) || !g.is_item(i)) {
        return Err(Error::InvalidInput(format!("positive pair ({u}, {i}) is not user → item")));
    }
    Ok(())
}

/// Trains `model` in place of a copy and returns it with a report.
/// Deterministic for a fixed `cfg.seed` apart from the timing fields.
pub fn train(
    mut model: ModelParams,
    data: &TrainingSet,
    cfg: &TrainConfig,
    objective: &Objective,
) -> Result<(ModelParams, TrainingReport)> {
    let start = Instant::now();
    cfg.validate()?;
    check_data(&model, data)?;
    if data.positives.is_empty() {
        return Err(Error::InvalidInput("no positive interactions to train on".into()));
    }
    let graph = data.graph;
    let doc_rows = model.prepare_docs(data.docs);
    let frozen = FrozenCaches::build(&model, graph, &doc_rows)?;
    let ctx = frozen.context(graph, &doc_rows);

    let mut exhausted = 0;
    let mut probe_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let probe_n = cfg.probe_size.clamp(1, data.positives.len());
    let mut probe_idx = index::sample(&mut probe_rng, data.positives.len(), probe_n).into_vec();
    probe_idx.sort_unstable();
    let probe_pos: Vec<(usize, usize)> = probe_idx.iter().map(|&k| data.positives[k]).collect();
    let probe = build_batch(graph, &probe_pos, cfg.negatives, &mut probe_rng, &mut exhausted)?;
    let probe_loss = |m: &ModelParams| -> Result<f64> {
        let tape = m.forward(&ctx, &probe)?;
        Ok(objective.loss_and_grad(&probe, &tape.logits)?.0)
    };
    let initial_loss = probe_loss(&model)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cfg);
    let mut order: Vec<(usize, usize)> = data.positives.to_vec();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut epoch_seconds = Vec::with_capacity(cfg.epochs);
    let mut steps = 0;
    for epoch in 0..cfg.epochs {
        let t0 = Instant::now();
        order.shuffle(&mut rng);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = build_batch(graph, chunk, cfg.negatives, &mut rng, &mut exhausted)?;
            let tape = model.forward(&ctx, &batch)?;
            let (loss, dlogits) = objective.loss_and_grad(&batch, &tape.logits)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, batch: b, loss });
            }
            let grads = model.backward(&ctx, &batch, &tape, &dlogits)?;
            if !gradients_finite(&grads) {
                return Err(Error::Diverged { epoch, batch: b, loss });
            }
            adam.step(&mut model, &grads);
            steps += 1;
        }
        epoch_seconds.push(t0.elapsed().as_secs_f64());
        let loss = probe_loss(&model)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, batch: order.len().div_ceil(cfg.batch_size), loss });
        }
        epoch_losses.push(loss);
    }
    let report = TrainingReport {
        initial_loss,
        final_loss: epoch_losses.last().copied().unwrap_or(initial_loss),
        epoch_losses,
        epoch_seconds,
        wall_seconds: start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE),
        trainable_params: model.count_params(true),
        total_params: model.count_params(false),
        steps,
        exhausted_negatives: exhausted,
    };
    Ok((model, report))
}

/// Largest relative error between backprop and central differences over
/// every trainable scalar, for `objective` on `batch`.
pub fn grad_check(model: &ModelParams, data: &TrainingSet, batch: &Batch, objective: &Objective, eps: f64) -> Result<f64> {
    check_data(model, data)?;
    let mut m = model.clone();
    let doc_rows = m.prepare_docs(data.docs);
    let ctx = ForwardContext { graph: data.graph, doc_rows: &doc_rows, frozen_first_aggregate: None, frozen_first_product: None, frozen_text: None };
    let tape = m.forward(&ctx, batch)?;
    let (_, dlogits) = objective.loss_and_grad(batch, &tape.logits)?;
    let analytic = m.backward(&ctx, batch, &tape, &dlogits)?.to_vector(&m);
    let mut theta = m.trainable_vector();
    let mut probe = m.clone();
    max_relative_error(&mut theta, &analytic, eps, |th| {
        probe.set_trainable_vector(th).expect("same layout");
        match probe.forward(&ctx, batch).and_then(|t| objective.loss_and_grad(batch, &t.logits)) {
            Ok((l, _)) => l,
            Err(_) => f64::NAN,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, Interaction};
    use crate::linalg::Matrix;
    use crate::model::{ModelDims, NodeTexts, Variant};
    use crate::semantic::Corpus;
    use crate::serving::{CachedScorer, EmbeddingCache, ServingModel};

    struct Toy {
        graph: InteractionGraph,
        docs: Vec<HashedDoc>,
        texts: NodeTexts,
        positives: Vec<(usize, usize)>,
        users: usize,
        items: usize,
    }

    fn toy() -> Toy {
        let pairs = [(0, 0), (0, 1), (1, 1), (1, 2), (2, 2), (2, 3), (3, 3), (3, 0)];
        let xs: Vec<Interaction> = pairs.iter().map(|&(u, i)| Interaction::new(u, i, 1.0, 0)).collect();
        let (graph, ids) = build_graph(&xs).unwrap();
        let mut corpus = Corpus::default();
        for (i, t) in [(0, "red wool scarf"), (1, "red cotton shirt"), (2, "blue denim"), (3, "blue wool hat")] {
            corpus.item_docs.insert(i, t.into());
        }
        corpus.user_docs.insert(0, "likes red".into());
        corpus.user_docs.insert(2, "wool and denim".into());
        let texts = NodeTexts::from_corpus(&corpus, &ids);
        let positives = pairs.iter().map(|&(u, i)| (u as usize, 4 + i as usize)).collect();
        Toy { docs: texts.hashed(32), texts, graph, positives, users: 4, items: 4 }
    }

    fn dims() -> ModelDims {
        ModelDims { d_g: 3, d_s: 3, d_h: 4, layers: 2, num_buckets: 32 }
    }

    fn full_batch() -> Batch {
        let mut b = Batch::default();
        for u in 0..4 {
            for i in 4..8 {
                b.push(u, i, if (u + i) % 2 == 0 { 1.0 } else { 0.0 });
            }
        }
        b
    }

    /// Positive hidden biases keep most ReLUs active so every parameter has
    /// a gradient well above finite-difference roundoff.
    fn checkable(variant: Variant, seed: u64) -> ModelParams {
        let mut m = ModelParams::new(variant, dims(), 4, 4, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        m.head.hidden_bias.iter_mut().for_each(|b| *b = rng.gen_range(0.2..0.5));
        m
    }

    fn randomize_lora(m: &mut ModelParams, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for a in m.lora.values_mut() {
            a.b = Matrix::uniform(a.b.rows(), a.b.cols(), 0.5, &mut rng);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let t = toy();
        let data = TrainingSet { graph: &t.graph, docs: &t.docs, positives: &t.positives };
        let batch = full_batch();
        for variant in [Variant::GnnOnly, Variant::TextOnly, Variant::Hybrid] {
            let m = checkable(variant, 3);
            let err = grad_check(&m, &data, &batch, &Objective::Bce, 1e-5).unwrap();
            assert!(err < 1e-4, "{variant:?}: {err}");
        }
    }

    #[test]
    fn lora_and_distill_gradients() {
        let t = toy();
        let data = TrainingSet { graph: &t.graph, docs: &t.docs, positives: &t.positives };
        let batch = full_batch();
        let teacher_params = ModelParams::new(Variant::Hybrid, dims(), t.users, t.items, 8).unwrap();
        let teacher = ServingModel::from_params(&teacher_params).unwrap();
        let cache = EmbeddingCache::precompute(&teacher, &t.graph, &t.texts).unwrap();
        let scorer = CachedScorer { model: &teacher, cache: &cache };
        let distill = Objective::Distill { teacher: &scorer, params: DistillParams::default() };

        let mut m = checkable(Variant::Hybrid, 4);
        m.enable_lora(2, 4.0, 5).unwrap();
        randomize_lora(&mut m, 6);
        for obj in [&Objective::Bce, &distill] {
            let err = grad_check(&m, &data, &batch, obj, 1e-5).unwrap();
            assert!(err < 1e-4, "lora: {err}");
        }
        m.trainable = crate::model::TrainableMask::ALL;
        let err = grad_check(&m, &data, &batch, &distill, 1e-5).unwrap();
        assert!(err < 1e-4, "all + lora + distill: {err}");
    }

    #[test]
    fn zero_epochs_leaves_model_unchanged() {
        let t = toy();
        let data = TrainingSet { graph: &t.graph, docs: &t.docs, positives: &t.positives };
        let mut m = ModelParams::new(Variant::Hybrid, dims(), t.users, t.items, 3).unwrap();
        m.prepare_docs(&t.docs);
        let cfg = TrainConfig { epochs: 0, negatives: 2, ..Default::default() };
        let (out, report) = train(m.clone(), &data, &cfg, &Objective::Bce).unwrap();
        assert_eq!(out, m);
        assert!(report.wall_seconds > 0.0);
        assert_eq!(report.final_loss, report.initial_loss);
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let t = toy();
        let data = TrainingSet { graph: &t.graph, docs: &t.docs, positives: &t.positives };
        let m = ModelParams::new(Variant::Hybrid, dims(), t.users, t.items, 3).unwrap();
        let cfg = TrainConfig { epochs: 30, negatives: 2, batch_size: 4, lr: 1e-2, seed: 9, ..Default::default() };
        let (a, ra) = train(m.clone(), &data, &cfg, &Objective::Bce).unwrap();
        let (b, rb) = train(m, &data, &cfg, &Objective::Bce).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra.epoch_losses, rb.epoch_losses);
        assert!(ra.final_loss < ra.initial_loss);
    }

    #[test]
    fn lora_training_only_moves_adapters() {
        let t = toy();
        let data = TrainingSet { graph: &t.graph, docs: &t.docs, positives: &t.positives };
        let mut m = ModelParams::new(Variant::Hybrid, dims(), t.users, t.items, 3).unwrap();
        m.prepare_docs(&t.docs);
        m.enable_lora(2, 4.0, 1).unwrap();
        let cfg = TrainConfig { epochs: 3, negatives: 2, batch_size: 4, lr: 1e-2, ..Default::default() };
        let (out, _) = train(m.clone(), &data, &cfg, &Objective::Bce).unwrap();
        assert_eq!(out.structural, m.structural);
        assert_eq!(out.text_table, m.text_table);
        assert_eq!(out.head, m.head);
        assert_ne!(out.lora, m.lora);
    }

    #[test]
    fn nan_parameter_diverges() {
        let t = toy();
        let data = TrainingSet { graph: &t.graph, docs: &t.docs, positives: &t.positives };
        let mut m = ModelParams::new(Variant::Hybrid, dims(), t.users, t.items, 3).unwrap();
        m.head.out_bias = f64::NAN;
        let cfg = TrainConfig { epochs: 1, negatives: 2, ..Default::default() };
        let err = train(m, &data, &cfg, &Objective::Bce).unwrap_err();
        assert!(matches!(err, Error::Diverged { epoch: 0, batch: 0, .. }));
    }

    #[test]
    fn negative_sampling() {
        let pairs: Vec<Interaction> = (0..10).map(|i| Interaction::new(0, i, 1.0, 0)).collect();
        let mut xs = pairs.clone();
        xs.push(Interaction::new(1, 3, 1.0, 0));
        let (g, _) = build_graph(&xs).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let full = sample_negatives(&g, 0, 4, &mut rng).unwrap();
        assert!(full.items.is_empty() && full.exhausted);

        let neg = sample_negatives(&g, 1, 9, &mut rng).unwrap();
        assert!(!neg.exhausted);
        assert_eq!(neg.items, (2..12).filter(|&i| i != 5).collect::<Vec<_>>());

        let mut counts = [0usize; 12];
        let draws = 90_000;
        for _ in 0..draws {
            let s = sample_negatives(&g, 1, 1, &mut rng).unwrap();
            assert_ne!(s.items[0], 5);
            counts[s.items[0]] += 1;
        }
        let expected = draws as f64 / 9.0;
        let sigma = (draws as f64 * (1.0 / 9.0) * (8.0 / 9.0)).sqrt();
        for (i, &c) in counts.iter().enumerate().skip(2) {
            if i != 5 {
                assert!((c as f64 - expected).abs() < 4.0 * sigma, "item {i}: {c}");
            }
        }
        assert!(sample_negatives(&g, 7, 1, &mut rng).is_err());
    }
}
