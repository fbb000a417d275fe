//! Pipeline configuration assembled from a flat key-value file and `--set` overrides.

use std::path::PathBuf;

use uqmol::calibrate::{Interpolation, DEFAULT_HUBER_DELTA};
use uqmol::chemgraph::{atomic_number, symbol, Target};
use uqmol::config::{ConfigError, KeyValues};
use uqmol::diffnet::NetConfig;
use uqmol::evalmetrics::{BinRule, EvalConfig, QuantileMode};
use uqmol::ensemble::NllMode;
use uqmol::training::TrainConfig;

pub const KNOWN_KEYS: &[&str] = &[
    "data.xyz",
    "data.xyz_b",
    "data.keys",
    "data.keys_b",
    "data.references",
    "data.target",
    "split.mode",
    "split.n_train",
    "split.n_val",
    "split.truncate_stereo",
    "net.embedding_dim",
    "net.interaction_steps",
    "net.rbf_count",
    "net.cutoff",
    "net.min_variance",
    "net.hidden_dims",
    "net.elements",
    "train.max_steps",
    "train.warmup_steps",
    "train.interp_steps",
    "train.batch_size",
    "train.lr0",
    "train.lr_decay",
    "train.lr_decay_steps",
    "train.weight_decay",
    "train.eval_every",
    "train.patience",
    "train.clip_grad_norm",
    "train.per_atom",
    "ensemble.m",
    "eval.k",
    "eval.bins",
    "eval.nll",
    "eval.quantiles",
    "calibrate.interpolation",
    "calibrate.floor",
    "calibrate.huber_delta",
    "seed",
    "workers",
];

#[derive(Debug, Clone, PartialEq)]
pub enum SplitMode {
    /// Seeded random train/validation/test partition of one dataset.
    Random { n_train: usize, n_val: usize },
    /// Train and validate on molecules of dataset A absent from dataset B, test on
    /// molecules of B absent from A.
    Overlap { n_val: usize, truncate_stereo: bool },
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub xyz: Option<PathBuf>,
    pub xyz_b: Option<PathBuf>,
    pub keys: Option<PathBuf>,
    pub keys_b: Option<PathBuf>,
    pub references: Option<PathBuf>,
    pub target: Target,
    pub split: SplitMode,
    pub net: NetConfig,
    pub train: TrainConfig,
    pub m: usize,
    pub eval: EvalConfig,
    pub interpolation: Interpolation,
    /// Defaults to the network's minimum variance.
    pub floor: Option<f64>,
    pub huber_delta: f64,
    pub seed: u64,
    pub workers: usize,
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

fn parse_with<T, E: std::fmt::Display>(
    kv: &KeyValues,
    key: &str,
    parse: impl Fn(&str) -> Result<T, E>,
    default: T,
) -> Result<T, ConfigError> {
    match kv.raw(key) {
        None => Ok(default),
        Some(v) => parse(v).map_err(|e| invalid(format!("`{key}`: {e}"))),
    }
}

impl PipelineConfig {
    pub fn from_kv(kv: &KeyValues) -> Result<Self, ConfigError> {
        kv.check_known(KNOWN_KEYS)?;
        let path = |k: &str| kv.raw(k).map(PathBuf::from);

        let seed: u64 = kv.get_or("seed", 0)?;
        let d = NetConfig::default();
        let elements = match kv.raw("net.elements") {
            None => d.elements.clone(),
            Some(v) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| atomic_number(s).ok_or_else(|| invalid(format!("`net.elements`: unknown element {s:?}"))))
                .collect::<Result<Vec<_>, _>>()?,
        };
        let net = NetConfig {
            embedding_dim: kv.get_or("net.embedding_dim", d.embedding_dim)?,
            interaction_steps: kv.get_or("net.interaction_steps", d.interaction_steps)?,
            rbf_count: kv.get_or("net.rbf_count", d.rbf_count)?,
            cutoff: kv.get_or("net.cutoff", d.cutoff)?,
            min_variance: kv.get_or("net.min_variance", d.min_variance)?,
            hidden_dims: kv.get_list("net.hidden_dims")?.unwrap_or(d.hidden_dims),
            elements,
            seed,
        };
        net.validate().map_err(|e| invalid(e.to_string()))?;

        let t = TrainConfig::default();
        let clip = match kv.raw("train.clip_grad_norm") {
            None => t.clip_grad_norm,
            Some("none" | "off") => None,
            Some(_) => match kv.require::<f64>("train.clip_grad_norm")? {
                0.0 => None,
                c => Some(c),
            },
        };
        let train = TrainConfig {
            max_steps: kv.get_or("train.max_steps", t.max_steps)?,
            warmup_steps: kv.get_or("train.warmup_steps", t.warmup_steps)?,
            interp_steps: kv.get_or("train.interp_steps", t.interp_steps)?,
            batch_size: kv.get_or("train.batch_size", t.batch_size)?,
            lr0: kv.get_or("train.lr0", t.lr0)?,
            lr_decay: kv.get_or("train.lr_decay", t.lr_decay)?,
            lr_decay_steps: kv.get_or("train.lr_decay_steps", t.lr_decay_steps)?,
            weight_decay: kv.get_or("train.weight_decay", t.weight_decay)?,
            eval_every: kv.get_or("train.eval_every", t.eval_every)?,
            patience: kv.get_or("train.patience", t.patience)?,
            clip_grad_norm: clip,
            per_atom: kv.get_or("train.per_atom", t.per_atom)?,
            seed,
        };
        train.validate().map_err(|e| invalid(e.to_string()))?;

        let n_val = kv.get_or("split.n_val", 0usize)?;
        let split = match kv.raw("split.mode").unwrap_or("random") {
            "random" => SplitMode::Random {
                n_train: kv.get_or("split.n_train", 0)?,
                n_val,
            },
            "overlap" => SplitMode::Overlap {
                n_val,
                truncate_stereo: kv.get_or("split.truncate_stereo", false)?,
            },
            other => return Err(invalid(format!("`split.mode`: expected random or overlap, got {other:?}"))),
        };

        let e = EvalConfig::default();
        let eval = EvalConfig {
            k: kv.get_or("eval.k", e.k)?,
            bin_rule: parse_with(kv, "eval.bins", str::parse::<BinRule>, e.bin_rule)?,
            nll_mode: parse_with(kv, "eval.nll", str::parse::<NllMode>, e.nll_mode)?,
            quantile_mode: parse_with(kv, "eval.quantiles", str::parse::<QuantileMode>, e.quantile_mode)?,
            levels: e.levels,
        };
        if eval.k == 0 {
            return Err(invalid("`eval.k` must be at least 1"));
        }
        let interpolation = parse_with(
            kv,
            "calibrate.interpolation",
            |s| match s {
                "step" => Ok(Interpolation::Step),
                "linear" => Ok(Interpolation::Linear),
                _ => Err(format!("expected step or linear, got {s:?}")),
            },
            Interpolation::Step,
        )?;

        let m: usize = kv.get_or("ensemble.m", 5)?;
        if m == 0 {
            return Err(invalid("`ensemble.m` must be at least 1"));
        }
        let default_workers = std::thread::available_parallelism().map_or(1, usize::from);
        Ok(Self {
            xyz: path("data.xyz"),
            xyz_b: path("data.xyz_b"),
            keys: path("data.keys"),
            keys_b: path("data.keys_b"),
            references: path("data.references"),
            target: kv.get_or("data.target", Target::U0)?,
            split,
            net,
            train,
            m,
            eval,
            interpolation,
            floor: kv.get("calibrate.floor")?,
            huber_delta: kv.get_or("calibrate.huber_delta", DEFAULT_HUBER_DELTA)?,
            seed,
            workers: kv.get_or("workers", default_workers)?.max(1),
        })
    }

    pub fn floor(&self) -> f64 {
        self.floor.unwrap_or(self.net.min_variance)
    }

    /// Every setting with defaults filled in, in the same syntax the loader reads.
    /// `workers` is omitted because it never changes results.
    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        let show = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        for (k, v) in [
            ("data.xyz", show(&self.xyz)),
            ("data.xyz_b", show(&self.xyz_b)),
            ("data.keys", show(&self.keys)),
            ("data.keys_b", show(&self.keys_b)),
            ("data.references", show(&self.references)),
            ("calibrate.floor", self.floor.map(|f| f.to_string())),
        ] {
            if let Some(v) = v {
                kv.insert(k, v);
            }
        }
        kv.insert("data.target", self.target);
        match &self.split {
            SplitMode::Random { n_train, n_val } => {
                kv.insert("split.mode", "random");
                kv.insert("split.n_train", n_train);
                kv.insert("split.n_val", n_val);
            }
            SplitMode::Overlap { n_val, truncate_stereo } => {
                kv.insert("split.mode", "overlap");
                kv.insert("split.n_val", n_val);
                kv.insert("split.truncate_stereo", truncate_stereo);
            }
        }
        let join = |xs: Vec<String>| xs.join(", ");
        let n = &self.net;
        kv.insert("net.embedding_dim", n.embedding_dim);
        kv.insert("net.interaction_steps", n.interaction_steps);
        kv.insert("net.rbf_count", n.rbf_count);
        kv.insert("net.cutoff", n.cutoff);
        kv.insert("net.min_variance", n.min_variance);
        kv.insert("net.hidden_dims", join(n.hidden_dims.iter().map(|h| h.to_string()).collect()));
        kv.insert(
            "net.elements",
            join(n.elements.iter().map(|&z| symbol(z).unwrap_or("?").to_string()).collect()),
        );
        let t = &self.train;
        kv.insert("train.max_steps", t.max_steps);
        kv.insert("train.warmup_steps", t.warmup_steps);
        kv.insert("train.interp_steps", t.interp_steps);
        kv.insert("train.batch_size", t.batch_size);
        kv.insert("train.lr0", t.lr0);
        kv.insert("train.lr_decay", t.lr_decay);
        kv.insert("train.lr_decay_steps", t.lr_decay_steps);
        kv.insert("train.weight_decay", t.weight_decay);
        kv.insert("train.eval_every", t.eval_every);
        kv.insert("train.patience", t.patience);
        kv.insert("train.clip_grad_norm", t.clip_grad_norm.map_or("none".to_string(), |c| c.to_string()));
        kv.insert("train.per_atom", t.per_atom);
        kv.insert("ensemble.m", self.m);
        kv.insert("eval.k", self.eval.k);
        kv.insert(
            "eval.bins",
            match self.eval.bin_rule {
                BinRule::EqualCount => "equal-count",
                BinRule::EqualWidth => "equal-width",
            },
        );
        kv.insert(
            "eval.nll",
            match self.eval.nll_mode {
                NllMode::Gaussian => "gaussian",
                NllMode::Exact => "exact",
            },
        );
        kv.insert(
            "eval.quantiles",
            match self.eval.quantile_mode {
                QuantileMode::Gaussian => "gaussian",
                QuantileMode::Mixture => "mixture",
            },
        );
        kv.insert(
            "calibrate.interpolation",
            match self.interpolation {
                Interpolation::Step => "step",
                Interpolation::Linear => "linear",
            },
        );
        kv.insert("calibrate.huber_delta", self.huber_delta);
        kv.insert("seed", self.seed);
        kv
    }
}
