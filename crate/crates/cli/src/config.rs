//! Flat `key = value` configuration files plus command-line overrides.
//!
//! Every key has a documented default; unknown or duplicate keys are hard
//! errors. Flags always win over file values, which win over defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use gala_core::data::{AggregationMode, DistanceMode, EmbeddingSpace, SelectionConfig};
use gala_core::datagen::{DomainShift, ScenarioConfig};
use gala_core::error::{Error, Result};
use gala_core::harness::Strategy;
use gala_core::trainer::TrainConfig;

/// Known configuration keys with their default values (as written in a
/// config file) and a one-line meaning.
pub const KNOWN_KEYS: &[(&str, &str, &str)] = &[
    // scenario
    ("n_source_domains", "3", "number of labeled source domains"),
    ("samples_per_domain", "2000", "rows generated per domain"),
    ("n_classes", "5", "number of classes"),
    ("feature_dim", "16", "feature dimensionality"),
    ("class_separation", "3", "radius of the class-mean sphere"),
    ("rotation", "0.4", "per-domain rotation angle bound (radians)"),
    ("translation", "0.6", "per-domain translation bound"),
    ("log_scale", "0.2", "per-domain log-scale bound"),
    ("noise_sigma", "1", "isotropic feature noise"),
    ("label_skew", "0.6", "per-domain class-proportion distortion in [0, 1)"),
    ("scenario_seed", "0", "generator seed used by `gen`"),
    // selection
    ("budget_per_round", "4", "samples selected per round (B)"),
    ("rounds", "5", "selection rounds (R)"),
    ("alpha_percent", "60", "per-cluster uncertainty filter in (0, 100]"),
    ("epsilon", "1e-5", "variance guard of the standardized distance"),
    ("distance_mode", "standardized", "standardized | mean_only | wasserstein"),
    ("aggregation_mode", "minimum", "minimum | average (min | avg also accepted)"),
    ("global_embedding", "gradient", "gradient | feature"),
    ("local_embedding", "feature", "gradient | feature"),
    ("kmeans_max_iters", "100", "clustering iteration cap"),
    ("kmeans_tol", "1e-6", "relative objective-decrease stop threshold"),
    ("selection_seed", "0", "selection seed used by `select`"),
    // training
    ("epochs", "25", "total training epochs (E)"),
    ("active_epochs", "10,13,16,19,22", "epochs at which rounds fire"),
    ("learning_rate", "0.05", "SGD step size"),
    ("momentum", "0.95", "SGD momentum"),
    ("batch_size", "64", "mini-batch size"),
    ("hidden_dim", "0", "hidden width, 0 for a linear model"),
    ("target_loss_weight", "1", "weight of the annotated-target loss term"),
    ("train_seed", "0", "training seed (per-run seeds override it)"),
    // harness
    ("strategies", "gala,random,none,full", "comma list of strategies to run"),
    ("seeds", "1..20", "comma list or inclusive a..b range of run seeds"),
    ("diagnostics", "false", "attach proxy-distance diagnostics to final reports"),
    ("features", "", "external feature CSV (empty: synthetic scenario)"),
    ("answers", "", "answer-key CSV for external features"),
    ("alphas", "20,40,60,80,100", "alpha values for `sweep`"),
];

/// Raw parsed file contents.
#[derive(Debug, Default)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<FileConfig> {
        let mut values = BTreeMap::new();
        let Some(path) = path else {
            return Ok(FileConfig { values });
        };
        let text = std::fs::read_to_string(path)?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::BadConfig(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if !KNOWN_KEYS.iter().any(|(k, _, _)| *k == key) {
                return Err(Error::BadConfig(format!("unknown config key `{}`", key)));
            }
            if values.insert(key.clone(), value).is_some() {
                return Err(Error::BadConfig(format!("duplicate config key `{}`", key)));
            }
        }
        Ok(FileConfig { values })
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str).filter(|v| !v.is_empty())
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::BadConfig(format!("bad value `{}` for key `{}`", v, key))),
        }
    }
}

/// Command-line overrides shared by the subcommands; `None` means "not set".
#[derive(Debug, Default, Clone, clap::Args)]
pub struct Overrides {
    /// Use a single run seed (also seeds `gen` and `select`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Samples selected per round (B).
    #[arg(long)]
    pub budget: Option<usize>,
    /// Number of selection rounds (R).
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Per-cluster uncertainty filter percentage.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Distance mode: standardized | mean_only | wasserstein.
    #[arg(long)]
    pub distance: Option<String>,
    /// Domain aggregation: min | avg.
    #[arg(long)]
    pub aggregate: Option<String>,
    /// Global-step embedding: gradient | feature.
    #[arg(long = "global-embed")]
    pub global_embed: Option<String>,
    /// Local-step embedding: gradient | feature.
    #[arg(long = "local-embed")]
    pub local_embed: Option<String>,
    /// Comma list of strategies to run.
    #[arg(long)]
    pub strategy: Option<String>,
}

/// Fully resolved configuration for one invocation.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub scenario: ScenarioConfig,
    pub selection: SelectionConfig,
    pub training: TrainConfig,
    pub strategies: Vec<Strategy>,
    pub seeds: Vec<u64>,
    pub diagnostics: bool,
    pub features: Option<PathBuf>,
    pub answers: Option<PathBuf>,
    pub alphas: Vec<f64>,
}

fn parse_distance(v: &str) -> Result<DistanceMode> {
    Ok(match v {
        "standardized" => DistanceMode::Standardized,
        "mean_only" => DistanceMode::MeanOnly,
        "wasserstein" => DistanceMode::Wasserstein,
        other => return Err(Error::BadConfig(format!("unknown distance mode `{}`", other))),
    })
}

fn parse_aggregation(v: &str) -> Result<AggregationMode> {
    Ok(match v {
        "minimum" | "min" => AggregationMode::Minimum,
        "average" | "avg" => AggregationMode::Average,
        other => {
            return Err(Error::BadConfig(format!(
                "unknown aggregation mode `{}`",
                other
            )))
        }
    })
}

fn parse_embedding(v: &str) -> Result<EmbeddingSpace> {
    Ok(match v {
        "gradient" => EmbeddingSpace::Gradient,
        "feature" => EmbeddingSpace::Feature,
        other => return Err(Error::BadConfig(format!("unknown embedding `{}`", other))),
    })
}

fn parse_seed_list(v: &str) -> Result<Vec<u64>> {
    if let Some((lo, hi)) = v.split_once("..") {
        let lo: u64 = lo.trim().parse().map_err(|_| {
            Error::BadConfig(format!("bad seed range `{}`", v))
        })?;
        let hi: u64 = hi.trim().parse().map_err(|_| {
            Error::BadConfig(format!("bad seed range `{}`", v))
        })?;
        if hi < lo {
            return Err(Error::BadConfig(format!("empty seed range `{}`", v)));
        }
        return Ok((lo..=hi).collect());
    }
    v.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::BadConfig(format!("bad seed `{}`", s)))
        })
        .collect()
}

fn parse_strategy_list(v: &str) -> Result<Vec<Strategy>> {
    v.split(',').map(|s| s.trim().parse()).collect()
}

fn parse_number_list<T: std::str::FromStr>(v: &str, what: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::BadConfig(format!("bad {} `{}`", what, s)))
        })
        .collect()
}

/// Merge defaults, file values, and flag overrides.
pub fn resolve(file: &FileConfig, over: &Overrides) -> Result<ResolvedConfig> {
    let scenario = ScenarioConfig {
        n_source_domains: file.parse("n_source_domains", 3)?,
        samples_per_domain: file.parse("samples_per_domain", 2000)?,
        n_classes: file.parse("n_classes", 5)?,
        feature_dim: file.parse("feature_dim", 16)?,
        class_separation: file.parse("class_separation", 3.0)?,
        domain_shift: DomainShift {
            rotation: file.parse("rotation", 0.4)?,
            translation: file.parse("translation", 0.6)?,
            log_scale: file.parse("log_scale", 0.2)?,
        },
        noise_sigma: file.parse("noise_sigma", 1.0)?,
        label_skew: file.parse("label_skew", 0.6)?,
        rng_seed: over.seed.map(Ok).unwrap_or_else(|| file.parse("scenario_seed", 0))?,
    };

    let selection = SelectionConfig {
        budget_per_round: over
            .budget
            .map(Ok)
            .unwrap_or_else(|| file.parse("budget_per_round", 4))?,
        rounds: over.rounds.map(Ok).unwrap_or_else(|| file.parse("rounds", 5))?,
        alpha_percent: over
            .alpha
            .map(Ok)
            .unwrap_or_else(|| file.parse("alpha_percent", 60.0))?,
        epsilon: file.parse("epsilon", 1e-5)?,
        distance_mode: match &over.distance {
            Some(v) => parse_distance(v)?,
            None => parse_distance(file.raw("distance_mode").unwrap_or("standardized"))?,
        },
        aggregation_mode: match &over.aggregate {
            Some(v) => parse_aggregation(v)?,
            None => parse_aggregation(file.raw("aggregation_mode").unwrap_or("minimum"))?,
        },
        global_embedding: match &over.global_embed {
            Some(v) => parse_embedding(v)?,
            None => parse_embedding(file.raw("global_embedding").unwrap_or("gradient"))?,
        },
        local_embedding: match &over.local_embed {
            Some(v) => parse_embedding(v)?,
            None => parse_embedding(file.raw("local_embedding").unwrap_or("feature"))?,
        },
        kmeans_max_iters: file.parse("kmeans_max_iters", 100)?,
        kmeans_tol: file.parse("kmeans_tol", 1e-6)?,
        rng_seed: over
            .seed
            .map(Ok)
            .unwrap_or_else(|| file.parse("selection_seed", 0))?,
    };

    let active_epochs = match file.raw("active_epochs") {
        Some(v) => parse_number_list(v, "epoch")?,
        None => vec![10, 13, 16, 19, 22],
    };
    let training = TrainConfig {
        epochs: file.parse("epochs", 25)?,
        active_epochs,
        learning_rate: file.parse("learning_rate", 0.05)?,
        momentum: file.parse("momentum", 0.95)?,
        batch_size: file.parse("batch_size", 64)?,
        hidden_dim: file.parse("hidden_dim", 0)?,
        target_loss_weight: file.parse("target_loss_weight", 1.0)?,
        rng_seed: file.parse("train_seed", 0)?,
    };

    let strategies = match &over.strategy {
        Some(v) => parse_strategy_list(v)?,
        None => parse_strategy_list(file.raw("strategies").unwrap_or("gala,random,none,full"))?,
    };
    let seeds = match over.seed {
        Some(s) => vec![s],
        None => parse_seed_list(file.raw("seeds").unwrap_or("1..20"))?,
    };
    let diagnostics = file.parse("diagnostics", false)?;
    let features = file.raw("features").map(PathBuf::from);
    let answers = file.raw("answers").map(PathBuf::from);
    let alphas = match file.raw("alphas") {
        Some(v) => parse_number_list(v, "alpha")?,
        None => vec![20.0, 40.0, 60.0, 80.0, 100.0],
    };

    Ok(ResolvedConfig {
        scenario,
        selection,
        training,
        strategies,
        seeds,
        diagnostics,
        features,
        answers,
        alphas,
    })
}
