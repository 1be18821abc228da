//! Hybrid graph + text recommender with INT8 serving, distillation and LoRA.
//!
//! A LightGCN-style propagation over the user-item graph produces structural
//! embeddings; a hashed bag-of-words table produces semantic embeddings. Both
//! are concatenated per `(user, item)` pair and scored by a small MLP.

pub mod error;
pub mod fusion;
pub mod graph;
pub mod linalg;
pub mod lora;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod quant;
pub mod semantic;
pub mod serving;
pub mod train;

pub use error::{Error, Result};
pub use fusion::{fuse, predict, score_logit, FusedRepresentation, PredictionHead};
pub use graph::{build_graph, encode, encode_subset, propagate, IdMap, Interaction, InteractionGraph, NodeEmbeddings};
pub use linalg::{Activation, Matrix};
pub use lora::{lora_effective, LoraAdapter};
pub use loss::{bce_loss, distill_loss, DistillParams};
pub use metrics::{latency_stats, ndcg_at_k, precision_at_k, recall_at_k, LatencyStats, RankedList};
pub use model::{count_params, Batch, ModelDims, ModelParams, NodeTexts, TrainableMask, Variant};
pub use quant::{dequantize, qscore, quantize_per_row, QuantizedHead, QuantizedMatrix};
pub use semantic::{encode_text, tokenize, Corpus, SemanticEmbedding, SemanticEncoder, TextTable};
pub use serving::{
    run_latency_trial, EmbeddingCache, EvalRequest, Recommendation, ServeMode, Server, ServingModel, TrialConfig,
};
pub use train::{grad_check, sample_negatives, train, Objective, TrainConfig, TrainingReport, TrainingSet};
