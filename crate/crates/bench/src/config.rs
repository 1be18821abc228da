//! Experiment configurations, presets and the `key = value` config format.
//!
//! Grammar, one setting per line:
//!
//! ```text
//! line    := blank | comment | setting
//! comment := '#' any*
//! setting := key '=' value        (whitespace around both is ignored)
//! key     := section '.' name | name
//! ```
//!
//! Recognised keys: `preset`, `label`, `variant`, `seed`, `flags.{quantize,
//! distill, lora, cache}`, `dims.{d_g, d_s, d_h, layers, num_buckets,
//! lora_rank, lora_alpha}`, `training.{epochs, lora_epochs, lr,
//! negatives_per_positive, batch_size, supervision_edges}`, `eval.{k, n_latency_requests,
//! warmup, candidates_per_user}`. `preset` must come first if present; later
//! lines override its values. Booleans are `true` or `false`. Unknown keys
//! and repeated keys are errors.

use std::collections::BTreeSet;

use hybridrec::{ModelDims, Variant};

use crate::error::{BenchError, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Flags {
    pub quantize: bool,
    pub distill: bool,
    pub lora: bool,
    pub cache: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DimsConfig {
    pub d_g: usize,
    pub d_s: usize,
    pub d_h: usize,
    pub layers: usize,
    pub num_buckets: u64,
    pub lora_rank: usize,
    pub lora_alpha: f64,
}

impl DimsConfig {
    pub fn model_dims(&self) -> ModelDims {
        ModelDims { d_g: self.d_g, d_s: self.d_s, d_h: self.d_h, layers: self.layers, num_buckets: self.num_buckets }
    }

    /// Student dimensions for distillation: every width halved, at least 1.
    pub fn halved(&self) -> Self {
        Self { d_g: (self.d_g / 2).max(1), d_s: (self.d_s / 2).max(1), d_h: (self.d_h / 2).max(1), ..*self }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainingConfig {
    pub epochs: usize,
    /// Fine-tuning epochs on top of the trained hybrid when LoRA is on.
    pub lora_epochs: usize,
    pub lr: f64,
    pub negatives_per_positive: usize,
    pub batch_size: usize,
    /// Latest training interactions per user used only as positives, never
    /// as message-passing edges.
    pub supervision_edges: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalConfig {
    pub k: usize,
    pub n_latency_requests: usize,
    pub warmup: usize,
    /// Sampled negatives per test positive; 0 ranks the full catalog.
    pub candidates_per_user: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub label: String,
    pub variant: Variant,
    pub flags: Flags,
    pub dims: DimsConfig,
    pub training: TrainingConfig,
    pub eval: EvalConfig,
    pub seed: u64,
}

/// Preset names in report order, with their display labels.
pub const PRESETS: [(&str, &str); 8] = [
    ("gnn_only", "GNN Only"),
    ("text_only", "LLM Only"),
    ("hybrid", "Hybrid (Unoptimized)"),
    ("hybrid_quant", "Hybrid + Quantization"),
    ("hybrid_distill", "Hybrid + Distillation"),
    ("hybrid_lora", "Hybrid + LoRA"),
    ("hybrid_cache", "Hybrid + DeepSpeed"),
    ("hybrid_cache_quant", "Hybrid + FPGA + DeepSpeed"),
];

/// Presets run by `bench` when `--rows` is not given.
pub const DEFAULT_ROWS: [&str; 7] =
    ["gnn_only", "text_only", "hybrid", "hybrid_quant", "hybrid_distill", "hybrid_lora", "hybrid_cache_quant"];

/// `(line number, key, value)`.
pub type Setting = (usize, String, String);

/// Splits a config file into settings, rejecting malformed and repeated keys.
pub fn parse_settings(text: &str) -> Result<Vec<Setting>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| BenchError::Usage(format!("config line {}: expected key = value", n + 1)))?;
        if !seen.insert(key.to_owned()) {
            return Err(BenchError::Usage(format!("config line {}: repeated key {key:?}", n + 1)));
        }
        out.push((n + 1, key.to_owned(), value.to_owned()));
    }
    Ok(out)
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            label: "Hybrid (Unoptimized)".into(),
            variant: Variant::Hybrid,
            flags: Flags::default(),
            dims: DimsConfig { d_g: 32, d_s: 32, d_h: 64, layers: 2, num_buckets: 1 << 18, lora_rank: 4, lora_alpha: 8.0 },
            training: TrainingConfig { epochs: 4, lora_epochs: 2, lr: 0.01, negatives_per_positive: 4, batch_size: 128, supervision_edges: 1 },
            eval: EvalConfig { k: 10, n_latency_requests: 1000, warmup: 50, candidates_per_user: 99 },
            seed: 7,
        }
    }
}

impl ExperimentConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let label = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, l)| l.to_string())
            .ok_or_else(|| BenchError::Usage(format!("unknown preset {name:?}")))?;
        let mut c = Self { label, ..Self::default() };
        match name {
            "gnn_only" => c.variant = Variant::GnnOnly,
            "text_only" => c.variant = Variant::TextOnly,
            "hybrid" => {}
            "hybrid_quant" => c.flags.quantize = true,
            "hybrid_distill" => c.flags.distill = true,
            "hybrid_lora" => c.flags.lora = true,
            "hybrid_cache" => c.flags.cache = true,
            "hybrid_cache_quant" => {
                c.flags.cache = true;
                c.flags.quantize = true;
            }
            _ => unreachable!(),
        }
        Ok(c)
    }

    /// Preset name whose flags and variant match, if any.
    pub fn preset_name(&self) -> Option<&'static str> {
        PRESETS.iter().map(|(n, _)| *n).find(|n| {
            let p = Self::preset(n).expect("listed preset");
            p.variant == self.variant && p.flags == self.flags
        })
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dims;
        let bad = |m: &str| Err(BenchError::Usage(m.to_owned()));
        if d.d_g == 0 || d.d_s == 0 || d.d_h == 0 || d.num_buckets == 0 {
            return bad("dimensions must be positive");
        }
        if self.variant.uses_structure() && d.layers == 0 {
            return bad("dims.layers must be at least 1");
        }
        if self.flags.lora && (d.lora_rank == 0 || !(d.lora_alpha > 0.0 && d.lora_alpha.is_finite())) {
            return bad("LoRA needs a positive rank and alpha");
        }
        if self.flags.lora && self.flags.distill {
            return bad("flags.lora and flags.distill cannot be combined");
        }
        if (self.flags.lora || self.flags.distill) && self.variant != Variant::Hybrid {
            return bad("LoRA and distillation apply to the hybrid variant");
        }
        let t = &self.training;
        if t.batch_size == 0 || !(t.lr > 0.0 && t.lr.is_finite()) || t.negatives_per_positive == 0 {
            return bad("training.batch_size, lr and negatives_per_positive must be positive and finite");
        }
        if self.eval.k == 0 || self.eval.n_latency_requests == 0 {
            return bad("eval.k and eval.n_latency_requests must be positive");
        }
        Ok(())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| BenchError::Usage(format!("{key}: cannot parse {v:?}")))
        }
        fn flag(key: &str, v: &str) -> Result<bool> {
            match v {
                "true" => Ok(true),
                "false" => Ok(false),
                _ => Err(BenchError::Usage(format!("{key}: expected true or false, got {v:?}"))),
            }
        }
        match key {
            "label" => self.label = value.to_owned(),
            "variant" => {
                self.variant = Variant::parse(value).ok_or_else(|| BenchError::Usage(format!("unknown variant {value:?}")))?
            }
            "seed" => self.seed = num(key, value)?,
            "flags.quantize" => self.flags.quantize = flag(key, value)?,
            "flags.distill" => self.flags.distill = flag(key, value)?,
            "flags.lora" => self.flags.lora = flag(key, value)?,
            "flags.cache" => self.flags.cache = flag(key, value)?,
            "dims.d_g" => self.dims.d_g = num(key, value)?,
            "dims.d_s" => self.dims.d_s = num(key, value)?,
            "dims.d_h" => self.dims.d_h = num(key, value)?,
            "dims.layers" | "dims.L" => self.dims.layers = num(key, value)?,
            "dims.num_buckets" => self.dims.num_buckets = num(key, value)?,
            "dims.lora_rank" => self.dims.lora_rank = num(key, value)?,
            "dims.lora_alpha" => self.dims.lora_alpha = num(key, value)?,
            "training.epochs" => self.training.epochs = num(key, value)?,
            "training.lora_epochs" => self.training.lora_epochs = num(key, value)?,
            "training.lr" => self.training.lr = num(key, value)?,
            "training.negatives_per_positive" => self.training.negatives_per_positive = num(key, value)?,
            "training.batch_size" => self.training.batch_size = num(key, value)?,
            "training.supervision_edges" => self.training.supervision_edges = num(key, value)?,
            "eval.k" => self.eval.k = num(key, value)?,
            "eval.n_latency_requests" => self.eval.n_latency_requests = num(key, value)?,
            "eval.warmup" => self.eval.warmup = num(key, value)?,
            "eval.candidates_per_user" => self.eval.candidates_per_user = num(key, value)?,
            _ => return Err(BenchError::Usage(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, (line, key, value)) in parse_settings(text)?.into_iter().enumerate() {
            if key == "preset" {
                if n != 0 {
                    return Err(BenchError::Usage(format!("config line {line}: preset must come first")));
                }
                cfg = Self::preset(&value)?;
            } else {
                cfg.set(&key, &value).map_err(|e| BenchError::Usage(format!("config line {line}: {e}")))?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies settings shared by several rows. Keys that pick the row itself
    /// (`preset`, `label`, `variant`, `flags.*`) are rejected.
    pub fn apply_shared(&mut self, settings: &[Setting]) -> Result<()> {
        for (line, key, value) in settings {
            if matches!(key.as_str(), "preset" | "label" | "variant") || key.starts_with("flags.") {
                return Err(BenchError::Usage(format!(
                    "config line {line}: {key} selects a row and cannot be combined with --rows"
                )));
            }
            self.set(key, value).map_err(|e| BenchError::Usage(format!("config line {line}: {e}")))?;
        }
        self.validate()
    }

    /// Renders every setting; `parse(render())` gives back `self`.
    pub fn render(&self) -> String {
        let f = &self.flags;
        let d = &self.dims;
        let t = &self.training;
        let e = &self.eval;
        format!(
            "label = {}\nvariant = {}\nseed = {}\n\
             flags.quantize = {}\nflags.distill = {}\nflags.lora = {}\nflags.cache = {}\n\
             dims.d_g = {}\ndims.d_s = {}\ndims.d_h = {}\ndims.layers = {}\ndims.num_buckets = {}\n\
             dims.lora_rank = {}\ndims.lora_alpha = {}\n\
             training.epochs = {}\ntraining.lora_epochs = {}\ntraining.lr = {}\n\
             training.negatives_per_positive = {}\ntraining.batch_size = {}\ntraining.supervision_edges = {}\n\
             eval.k = {}\neval.n_latency_requests = {}\neval.warmup = {}\neval.candidates_per_user = {}\n",
            self.label,
            self.variant.as_str(),
            self.seed,
            f.quantize,
            f.distill,
            f.lora,
            f.cache,
            d.d_g,
            d.d_s,
            d.d_h,
            d.layers,
            d.num_buckets,
            d.lora_rank,
            d.lora_alpha,
            t.epochs,
            t.lora_epochs,
            t.lr,
            t.negatives_per_positive,
            t.batch_size,
            t.supervision_edges,
            e.k,
            e.n_latency_requests,
            e.warmup,
            e.candidates_per_user,
        )
    }
}
