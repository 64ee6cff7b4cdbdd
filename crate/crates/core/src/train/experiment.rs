//! Seeded experiment runners: variant ablations and IV-quality sweeps.

use std::collections::HashSet;
use std::io::Write;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::corpus::{Corpus, ExampleSet};
use super::metrics::MetricsReport;
use super::pipeline::Pipeline;
use super::{train, TrainConfig, TrainOutcome};
use crate::data::{chronological_split, EmbeddingTable, RecInteraction, SearchInteraction, SyntheticDataset};
use crate::error::{Error, Result};
use crate::iv::{build_iv_store, IvBuildConfig, IvMatrix, IvStore, QuerySource, RankedQuery};
use crate::models::{ModelConfig, ModelKind};
use crate::recon::{ReconConfig, Variant};

/// Everything a run needs besides its configuration.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub corpus: Corpus,
    /// Needed only to (re)build IV stores.
    pub queries: Option<EmbeddingTable>,
    pub search: Vec<SearchInteraction>,
    pub train: ExampleSet,
    pub val: ExampleSet,
    pub test: ExampleSet,
}

impl ExperimentData {
    /// Splits `rec` chronologically by `days = (train, val, test)`.
    pub fn new(
        items: EmbeddingTable,
        queries: Option<EmbeddingTable>,
        contexts: EmbeddingTable,
        rec: &[RecInteraction],
        search: Vec<SearchInteraction>,
        days: (usize, usize, usize),
        max_history: usize,
    ) -> Result<Self> {
        let split = chronological_split(rec, days.0, days.1, days.2)?;
        let corpus = Corpus::new(items, contexts, rec);
        Ok(ExperimentData {
            train: corpus.examples(&split.train, max_history)?,
            val: corpus.examples(&split.val, max_history)?,
            test: corpus.examples(&split.test, max_history)?,
            corpus,
            queries,
            search,
        })
    }

    /// Last two days become validation and test.
    pub fn from_synthetic(ds: &SyntheticDataset, max_history: usize) -> Result<Self> {
        let days = ds.config.days;
        if days < 3 {
            return Err(Error::Config("synthetic data needs at least 3 days to split".into()));
        }
        Self::new(
            ds.items.clone(),
            Some(ds.queries.clone()),
            ds.contexts.clone(),
            &ds.rec,
            ds.search.clone(),
            (days - 2, 1, 1),
            max_history,
        )
    }

    pub fn build_ivs(&self, config: &IvBuildConfig) -> Result<IvStore> {
        build_iv_store(self.corpus.items(), &self.search, self.queries()?, config)
    }

    pub fn queries(&self) -> Result<&EmbeddingTable> {
        self.queries
            .as_ref()
            .ok_or_else(|| Error::Config("this experiment needs a query embedding table".into()))
    }
}

/// Everything that distinguishes one training run from another.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub model: ModelKind,
    pub variant: Variant,
    pub recon: ReconConfig,
    pub model_config: ModelConfig,
    pub train: TrainConfig,
}

impl RunSpec {
    pub fn new(model: ModelKind, variant: Variant) -> Self {
        RunSpec {
            model,
            variant,
            recon: ReconConfig::default(),
            model_config: ModelConfig::default(),
            train: TrainConfig::default(),
        }
    }

    /// Fresh parameters drawn from stream 0 of the run seed.
    pub fn init_pipeline(&self, corpus: &Corpus, store: Option<&IvStore>) -> Result<Pipeline> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.train.seed);
        let item_dim = corpus.items().dim();
        let (query_dim, n) = store.map(|s| (s.query_dim(), s.n())).unwrap_or((item_dim, 1));
        Pipeline::init(
            self.variant,
            self.model,
            item_dim,
            query_dim,
            n,
            corpus.contexts().dim(),
            &self.recon,
            &self.model_config,
            &mut rng,
        )
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub test: MetricsReport,
    pub outcome: TrainOutcome,
}

/// Trains on the train split, selects on validation, reports on test.
pub fn run_once(data: &ExperimentData, store: Option<&IvStore>, spec: &RunSpec) -> Result<RunResult> {
    let store = store.filter(|_| spec.variant.needs_ivs());
    if spec.variant.needs_ivs() && store.is_none() {
        return Err(Error::Config(format!("variant {} needs an IV store", spec.variant)));
    }
    let projectors = store
        .map(|s| data.corpus.projectors(s, spec.recon.alpha_input))
        .transpose()?;
    let init = spec.init_pipeline(&data.corpus, store)?;
    let outcome = train(
        &spec.train,
        &data.corpus,
        projectors.as_deref(),
        &data.train,
        Some(&data.val),
        init,
    )?;
    if let Some(msg) = &outcome.diverged {
        return Err(Error::Divergence {
            epoch: outcome.curve.len() + 1,
            message: msg.clone(),
        });
    }
    let test = outcome.pipeline.evaluate(&data.corpus, projectors.as_deref(), &data.test)?;
    Ok(RunResult { test, outcome })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    /// Variant name or sweep setting.
    pub label: String,
    pub seed: u64,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    /// `(label, seed, reason)` for runs that failed or were skipped.
    pub failures: Vec<(String, Option<u64>, String)>,
}

pub const METRICS_HEADER: &str = "variant\tseed\tauc\tmrr\tndcg5\tndcg10";

impl ResultTable {
    pub fn labels(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.rows
            .iter()
            .map(|r| r.label.as_str())
            .filter(|l| seen.insert(*l))
            .collect()
    }

    pub fn auc(&self, label: &str, seed: u64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.label == label && r.seed == seed)
            .map(|r| r.report.auc)
    }

    /// `(mean, sample sd, count)` of test AUC for `label`.
    pub fn auc_summary(&self, label: &str) -> Option<(f64, f64, usize)> {
        let v: Vec<f64> = self.rows.iter().filter(|r| r.label == label).map(|r| r.report.auc).collect();
        if v.is_empty() {
            return None;
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let sd = if v.len() > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some((mean, sd, v.len()))
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{METRICS_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{}\t{}\t{:.10}\t{:.10}\t{:.10}\t{:.10}",
                r.label, r.seed, r.report.auc, r.report.mrr, r.report.ndcg5, r.report.ndcg10
            )?;
        }
        Ok(())
    }
}

/// Trains every variant under every seed on a shared IV store. Failed
/// runs are recorded and skipped.
pub fn run_ablation(
    data: &ExperimentData,
    store: Option<&IvStore>,
    base: &RunSpec,
    variants: &[Variant],
    seeds: &[u64],
) -> ResultTable {
    let mut table = ResultTable::default();
    for &seed in seeds {
        for &variant in variants {
            let mut spec = base.clone();
            spec.variant = variant;
            spec.train.seed = seed;
            match run_once(data, store, &spec) {
                Ok(r) => {
                    log::info!("ablation {variant} seed {seed}: test AUC {:.5}", r.test.auc);
                    table.rows.push(ResultRow {
                        label: variant.to_string(),
                        seed,
                        report: r.test,
                    });
                }
                Err(e) => {
                    log::warn!("ablation {variant} seed {seed} failed: {e}");
                    table.failures.push((variant.to_string(), Some(seed), e.to_string()));
                }
            }
        }
    }
    table
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    /// Rebuild the IV store at each `N`.
    NumQueries(Vec<usize>),
    /// Keep this fraction of each item's columns and replace the rest with
    /// uniformly drawn queries.
    ClickedFraction(Vec<f64>),
}

impl SweepMode {
    pub fn labels(&self) -> Vec<String> {
        match self {
            SweepMode::NumQueries(ns) => ns.iter().map(|n| format!("n={n}")).collect(),
            SweepMode::ClickedFraction(fs) => fs.iter().map(|f| format!("fraction={f}")).collect(),
        }
    }

    /// Numeric setting per label, for trend tests.
    pub fn values(&self) -> Vec<f64> {
        match self {
            SweepMode::NumQueries(ns) => ns.iter().map(|&n| n as f64).collect(),
            SweepMode::ClickedFraction(fs) => fs.clone(),
        }
    }
}

/// Replaces `round((1 - keep_fraction) * N)` columns per item, chosen
/// uniformly, with uniformly drawn queries not already in that item's IV.
pub fn substitute_random_queries(
    store: &IvStore,
    queries: &EmbeddingTable,
    keep_fraction: f64,
    seed: u64,
) -> Result<IvStore> {
    if !(0.0..=1.0).contains(&keep_fraction) {
        return Err(Error::Config(format!("clicked fraction must be in [0, 1], got {keep_fraction}")));
    }
    let n = store.n();
    let replace = ((1.0 - keep_fraction) * n as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let mut out = IvStore::new(n, store.query_dim());
    for record in store.iter() {
        if replace == 0 {
            out.insert(record.clone())?;
            continue;
        }
        let slots = sample(&mut rng, n, replace).into_vec();
        let mut used: HashSet<&str> = record
            .columns
            .iter()
            .enumerate()
            .filter(|(k, _)| !slots.contains(k))
            .filter_map(|(_, c)| c.query_id.as_deref())
            .collect();
        if queries.len() < used.len() + replace {
            return Err(Error::Config(format!(
                "only {} queries available, cannot draw {replace} distinct substitutes",
                queries.len()
            )));
        }
        let mut columns = record.columns.clone();
        let mut matrix = record.matrix.clone();
        for &k in &slots {
            let q = loop {
                let q = rng.random_range(0..queries.len());
                if used.insert(&queries.ids()[q]) {
                    break q;
                }
            };
            columns[k] = RankedQuery {
                query_id: Some(queries.ids()[q].clone()),
                click_count: 0,
                source: QuerySource::Random,
            };
            for (i, v) in queries.vector_at(q).iter().enumerate() {
                matrix[(i, k)] = *v;
            }
        }
        out.insert(IvMatrix {
            item_id: record.item_id.clone(),
            matrix,
            columns,
        })?;
    }
    Ok(out)
}

/// Trains `base` (normally the weighted variant) at every setting of
/// `mode` under every seed.
pub fn run_iv_quality_sweep(
    data: &ExperimentData,
    base: &RunSpec,
    iv: &IvBuildConfig,
    mode: &SweepMode,
    seeds: &[u64],
) -> Result<ResultTable> {
    let mut table = ResultTable::default();
    let labels = mode.labels();
    let queries = data.queries()?;
    let stores: Vec<Option<IvStore>> = match mode {
        SweepMode::NumQueries(ns) => ns
            .iter()
            .zip(&labels)
            .map(|(&n, label)| {
                if n == 0 || n > queries.len() {
                    table
                        .failures
                        .push((label.clone(), None, format!("needs {n} queries, {} available", queries.len())));
                    return Ok(None);
                }
                data.build_ivs(&IvBuildConfig { n, ..iv.clone() }).map(Some)
            })
            .collect::<Result<_>>()?,
        SweepMode::ClickedFraction(_) => vec![Some(data.build_ivs(iv)?)],
    };
    for &seed in seeds {
        for (k, label) in labels.iter().enumerate() {
            let store = match mode {
                SweepMode::NumQueries(_) => match &stores[k] {
                    Some(s) => std::borrow::Cow::Borrowed(s),
                    None => continue,
                },
                SweepMode::ClickedFraction(fs) => {
                    let base_store = stores[0].as_ref().expect("built above");
                    match substitute_random_queries(base_store, queries, fs[k], seed) {
                        Ok(s) => std::borrow::Cow::Owned(s),
                        Err(e) => {
                            table.failures.push((label.clone(), Some(seed), e.to_string()));
                            continue;
                        }
                    }
                }
            };
            let mut spec = base.clone();
            spec.train.seed = seed;
            match run_once(data, Some(&store), &spec) {
                Ok(r) => {
                    log::info!("sweep {label} seed {seed}: test AUC {:.5}", r.test.auc);
                    table.rows.push(ResultRow {
                        label: label.clone(),
                        seed,
                        report: r.test,
                    });
                }
                Err(e) => {
                    log::warn!("sweep {label} seed {seed} failed: {e}");
                    table.failures.push((label.clone(), Some(seed), e.to_string()));
                }
            }
        }
    }
    Ok(table)
}
