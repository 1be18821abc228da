//! Training, evaluation and latency measurement for one configuration row.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use hybridrec::metrics::{summarize, RankingSummary};
use hybridrec::semantic::HashedDoc;
use hybridrec::serving::CachedScorer;
use hybridrec::{
    run_latency_trial, train, DistillParams, EmbeddingCache, EvalRequest, IdMap, Interaction, InteractionGraph, ModelDims,
    ModelParams, NodeTexts, Objective, RankedList, ServeMode, Server, ServingModel, TrainConfig, TrainingReport,
    TrialConfig, Variant,
};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ExperimentConfig, TrainingConfig};
use crate::error::{BenchError, Result};
use crate::report::ReportRow;
use crate::split::SplitDataset;

/// One test user: the held-out item plus sampled negatives, all as nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalCase {
    pub user: usize,
    pub positive: usize,
    /// Ascending node ids, including `positive`.
    pub candidates: Vec<usize>,
}

/// A split mapped onto dense node ids, ready for training and evaluation.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub ids: IdMap,
    pub graph: InteractionGraph,
    pub texts: NodeTexts,
    pub positives: Vec<(usize, usize)>,
    pub eval: Vec<EvalCase>,
    pub supervision_edges: usize,
}

const CANDIDATE_SALT: u64 = 0xca4d_1da7_e5ee_d001;

/// Builds the message-passing graph and the per-user candidate lists. Every
/// item that appears anywhere (train, test or item text) becomes a node.
///
/// Each user's `supervision_edges` latest training interactions are kept out
/// of the graph and used only as training positives, so the model learns to
/// score pairs whose edge it cannot see; users always keep at least one graph
/// edge. `candidates_per_user = 0` ranks every item the user has not trained on.
pub fn prepare(split: &SplitDataset, candidates_per_user: usize, supervision_edges: usize, seed: u64) -> Result<PreparedData> {
    let users = split.train.iter().map(|x| x.user);
    let items = split
        .train
        .iter()
        .map(|x| x.item)
        .chain(split.test.values().copied())
        .chain(split.corpus.item_docs.keys().copied());
    let ids = IdMap::from_ids(users, items);

    let mut by_user: BTreeMap<u64, Vec<&Interaction>> = BTreeMap::new();
    for x in &split.train {
        by_user.entry(x.user).or_default().push(x);
    }
    let mut message = Vec::with_capacity(split.train.len());
    let mut positives = BTreeSet::new();
    let mut trained: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); ids.num_users()];
    for (user, mut xs) in by_user {
        xs.sort_by_key(|x| (x.timestamp, x.item));
        let mut distinct: Vec<u64> = Vec::new();
        for x in xs.iter().rev() {
            if !distinct.contains(&x.item) {
                distinct.push(x.item);
            }
        }
        let held = supervision_edges.min(distinct.len().saturating_sub(1));
        let supervised = &distinct[..held];
        let u = ids.user_node(user).expect("train user");
        for x in &xs {
            let i = ids.item_node(x.item).expect("train item");
            positives.insert((u, i));
            trained[u].insert(i);
            if !supervised.contains(&x.item) {
                message.push((*x).clone());
            }
        }
    }
    let graph = InteractionGraph::from_interactions(&message, &ids)?;
    let texts = NodeTexts::from_corpus(&split.corpus, &ids);
    let positives: Vec<(usize, usize)> = positives.into_iter().collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ CANDIDATE_SALT);
    let mut eval = Vec::with_capacity(split.test.len());
    let mut excluded = vec![false; graph.num_nodes()];
    for (&user, &item) in &split.test {
        let u = ids.user_node(user).ok_or_else(|| BenchError::Data {
            path: "split".into(),
            line: 0,
            msg: format!("test user {user} has no training interactions"),
        })?;
        let pos = ids.item_node(item).expect("test items are nodes");
        for &i in &trained[u] {
            excluded[i] = true;
        }
        excluded[pos] = true;
        let pool: Vec<usize> = graph.item_nodes().filter(|&i| !excluded[i]).collect();
        for &i in &trained[u] {
            excluded[i] = false;
        }
        excluded[pos] = false;
        let mut candidates: Vec<usize> = if candidates_per_user == 0 || pool.len() <= candidates_per_user {
            pool
        } else {
            index::sample(&mut rng, pool.len(), candidates_per_user).into_iter().map(|k| pool[k]).collect()
        };
        candidates.push(pos);
        candidates.sort_unstable();
        eval.push(EvalCase { user: u, positive: pos, candidates });
    }
    Ok(PreparedData { ids, graph, texts, positives, eval, supervision_edges })
}

impl PreparedData {
    pub fn requests(&self) -> Vec<EvalRequest> {
        self.eval.iter().map(|c| EvalRequest { user: c.user, candidates: c.candidates.clone() }).collect()
    }

    pub fn docs(&self, num_buckets: u64) -> Vec<HashedDoc> {
        self.texts.hashed(num_buckets)
    }
}

/// Top-k ranking quality over all eval cases, served from `cache`.
pub fn evaluate(
    model: &ServingModel,
    cache: &EmbeddingCache,
    data: &PreparedData,
    k: usize,
) -> Result<RankingSummary> {
    let server = Server { model, cache: Some(cache), graph: &data.graph, texts: &data.texts };
    let mut lists = Vec::with_capacity(data.eval.len());
    for (n, case) in data.eval.iter().enumerate() {
        let rec = server.serve_topk(n as u64, case.user, k, ServeMode::Hot, &case.candidates)?;
        let items = rec.items.iter().map(|(i, _)| data.ids.external_item(*i).expect("item node")).collect();
        let relevant = data.ids.external_item(case.positive).expect("item node");
        lists.push(RankedList::new(items, [relevant]));
    }
    Ok(summarize(&lists, k)?)
}

fn train_config(t: &TrainingConfig, epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        lr: t.lr,
        negatives: t.negatives_per_positive,
        batch_size: t.batch_size,
        seed,
        ..TrainConfig::default()
    }
}

/// Everything measured for one configuration.
#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub row: ReportRow,
    pub ranking: RankingSummary,
    pub training: TrainingReport,
    pub params: ModelParams,
    pub serving: ServingModel,
    pub mode: ServeMode,
}

#[derive(Clone)]
struct BaseModel {
    dims: ModelDims,
    training: TrainingConfig,
    seed: u64,
    params: ModelParams,
    report: TrainingReport,
}

/// Runs configurations against one prepared dataset, reusing the trained
/// hybrid across rows that start from it (quantized, cached, LoRA, and the
/// distillation teacher). Training is deterministic, so reuse does not
/// change results.
pub struct Runner<'a> {
    data: &'a PreparedData,
    bases: Vec<BaseModel>,
}

impl<'a> Runner<'a> {
    pub fn new(data: &'a PreparedData) -> Self {
        Self { data, bases: Vec::new() }
    }

    fn fit(&self, variant: Variant, dims: ModelDims, cfg: &TrainConfig, objective: &Objective) -> hybridrec::Result<(ModelParams, TrainingReport)> {
        let d = self.data;
        let m = ModelParams::new(variant, dims, d.graph.num_users(), d.graph.num_items(), cfg.seed)?;
        let docs = d.docs(dims.num_buckets);
        let set = hybridrec::TrainingSet { graph: &d.graph, docs: &docs, positives: &d.positives };
        train(m, &set, cfg, objective)
    }

    fn fit_with_lora(&self, base: ModelParams, cfg: &ExperimentConfig) -> hybridrec::Result<(ModelParams, TrainingReport)> {
        let d = self.data;
        let mut m = base;
        m.enable_lora(cfg.dims.lora_rank, cfg.dims.lora_alpha, cfg.seed)?;
        let docs = d.docs(cfg.dims.num_buckets);
        let set = hybridrec::TrainingSet { graph: &d.graph, docs: &docs, positives: &d.positives };
        train(m, &set, &train_config(&cfg.training, cfg.training.lora_epochs, cfg.seed), &Objective::Bce)
    }

    /// The plain model of `cfg.variant`, trained once per (variant, dims,
    /// training, seed).
    fn base(&mut self, cfg: &ExperimentConfig) -> hybridrec::Result<(ModelParams, TrainingReport)> {
        let dims = cfg.dims.model_dims();
        let found = self.bases.iter().find(|b| {
            b.params.variant == cfg.variant && b.dims == dims && b.training == cfg.training && b.seed == cfg.seed
        });
        if let Some(b) = found {
            return Ok((b.params.clone(), b.report.clone()));
        }
        let tc = train_config(&cfg.training, cfg.training.epochs, cfg.seed);
        let (params, report) = self.fit(cfg.variant, dims, &tc, &Objective::Bce)?;
        self.bases.push(BaseModel { dims, training: cfg.training, seed: cfg.seed, params: params.clone(), report: report.clone() });
        Ok((params, report))
    }

    fn train_for(&mut self, cfg: &ExperimentConfig) -> hybridrec::Result<(ModelParams, TrainingReport, f64)> {
        let (base, base_report) = self.base(cfg)?;
        if cfg.flags.lora {
            let (m, r) = self.fit_with_lora(base, cfg)?;
            let secs = r.wall_seconds;
            return Ok((m, r, secs));
        }
        if cfg.flags.distill {
            let teacher = ServingModel::from_params(&base)?;
            let cache = EmbeddingCache::precompute(&teacher, &self.data.graph, &self.data.texts)?;
            let scorer = CachedScorer { model: &teacher, cache: &cache };
            let objective = Objective::Distill { teacher: &scorer, params: DistillParams::default() };
            let tc = train_config(&cfg.training, cfg.training.epochs, cfg.seed);
            let (m, r) = self.fit(cfg.variant, cfg.dims.halved().model_dims(), &tc, &objective)?;
            let secs = r.wall_seconds;
            return Ok((m, r, secs));
        }
        let secs = base_report.wall_seconds;
        Ok((base, base_report, secs))
    }

    pub fn run(&mut self, cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
        cfg.validate()?;
        if cfg.training.supervision_edges != self.data.supervision_edges {
            return Err(BenchError::Usage(format!(
                "config asks for {} supervision edges per user, data was prepared with {}",
                cfg.training.supervision_edges, self.data.supervision_edges
            )));
        }
        let wrap = |source: hybridrec::Error| BenchError::Training { label: cfg.label.clone(), source };
        let (params, training, mut train_seconds) = self.train_for(cfg).map_err(wrap)?;
        let d = self.data;
        let serving = if cfg.flags.quantize {
            let t = Instant::now();
            let s = ServingModel::quantized(&params)?;
            train_seconds += t.elapsed().as_secs_f64();
            s
        } else {
            ServingModel::from_params(&params)?
        };
        let cache = EmbeddingCache::precompute(&serving, &d.graph, &d.texts)?;
        let ranking = evaluate(&serving, &cache, d, cfg.eval.k)?;

        let mode = if cfg.flags.cache { ServeMode::Hot } else { ServeMode::Cold };
        let server = Server { model: &serving, cache: Some(&cache), graph: &d.graph, texts: &d.texts };
        let trial = TrialConfig {
            n_requests: cfg.eval.n_latency_requests,
            warmup: cfg.eval.warmup,
            k: cfg.eval.k,
            mode,
            seed: cfg.seed,
        };
        let latency = run_latency_trial(&server, &d.requests(), trial)?.stats;

        let row = ReportRow {
            config: cfg.label.clone(),
            precision_at_10: ranking.precision,
            recall_at_10: ranking.recall,
            ndcg_at_10: ranking.ndcg,
            latency_mean_ms: latency.mean_ms,
            latency_std_ms: latency.std_ms,
            train_seconds,
            trainable_params: training.trainable_params,
            seed: cfg.seed,
        };
        Ok(ExperimentOutcome { row, ranking, training, params, serving, mode })
    }
}

/// Single-configuration convenience wrapper around [`Runner`].
pub fn run_experiment(cfg: &ExperimentConfig, data: &SplitDataset) -> Result<ReportRow> {
    let prepared = prepare(data, cfg.eval.candidates_per_user, cfg.training.supervision_edges, cfg.seed)?;
    Ok(Runner::new(&prepared).run(cfg)?.row)
}
