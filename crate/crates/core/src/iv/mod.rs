//! Instrument construction: per-item query ranking from search clicks,
//! cosine backfill, IV matrix assembly, and treatment sets.

mod store;
mod treatment;

pub use store::{build_iv_store, IvBuildConfig, IvBuildStats, IvStore};
pub use treatment::{build_treatment_set, ClickHistory, TreatmentSet};

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use crate::data::{EmbeddingTable, SearchInteraction};
use crate::error::{Error, Result};
use crate::numerics::{dot, norm, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QuerySource {
    Clicked,
    SimilarityBackfill,
    /// Uniformly drawn substitute, used by IV-quality experiments.
    Random,
    Padding,
}

impl fmt::Display for QuerySource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            QuerySource::Clicked => "clicked",
            QuerySource::SimilarityBackfill => "backfill",
            QuerySource::Random => "random",
            QuerySource::Padding => "padding",
        })
    }
}

impl FromStr for QuerySource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "clicked" => Ok(QuerySource::Clicked),
            "backfill" => Ok(QuerySource::SimilarityBackfill),
            "random" => Ok(QuerySource::Random),
            "padding" => Ok(QuerySource::Padding),
            other => Err(format!("unknown provenance `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedQuery {
    /// `None` only for padding slots.
    pub query_id: Option<String>,
    pub click_count: usize,
    pub source: QuerySource,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryRanking {
    pub item_id: String,
    /// Clicked entries first, then backfill, then padding.
    pub entries: Vec<RankedQuery>,
    /// Set when backfill could not use cosine similarity (zero item
    /// embedding) and fell back to query id order.
    pub degenerate_backfill: bool,
}

impl QueryRanking {
    pub fn query_ids(&self) -> Vec<&str> {
        self.entries
            .iter()
            .filter_map(|e| e.query_id.as_deref())
            .collect()
    }

    pub fn count(&self, source: QuerySource) -> usize {
        self.entries.iter().filter(|e| e.source == source).count()
    }
}

/// Click counts per (item, query), built once from a search log.
#[derive(Debug, Clone, Default)]
pub struct QueryClickIndex {
    counts: HashMap<String, BTreeMap<String, usize>>,
}

impl QueryClickIndex {
    pub fn from_log(search: &[SearchInteraction]) -> Self {
        let mut counts: HashMap<String, BTreeMap<String, usize>> = HashMap::new();
        for r in search.iter().filter(|r| r.click) {
            *counts
                .entry(r.item_id.clone())
                .or_default()
                .entry(r.query_id.clone())
                .or_default() += 1;
        }
        QueryClickIndex { counts }
    }

    /// Clicked queries of `item_id` by count descending, ties by query id
    /// ascending, truncated at `n`.
    pub fn ranking(&self, item_id: &str, n: usize) -> QueryRanking {
        let mut entries: Vec<(&String, usize)> = self
            .counts
            .get(item_id)
            .map(|m| m.iter().map(|(q, &c)| (q, c)).collect())
            .unwrap_or_default();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        QueryRanking {
            item_id: item_id.to_string(),
            entries: entries
                .into_iter()
                .take(n)
                .map(|(q, c)| RankedQuery {
                    query_id: Some(q.clone()),
                    click_count: c,
                    source: QuerySource::Clicked,
                })
                .collect(),
            degenerate_backfill: false,
        }
    }
}

/// Ranks the clicked queries of one item. Prefer [`QueryClickIndex`] when
/// ranking many items from the same log.
pub fn collect_queries(item_id: &str, search: &[SearchInteraction], n: usize) -> Result<QueryRanking> {
    if n == 0 {
        return Err(Error::contract("N must be >= 1"));
    }
    let relevant: Vec<SearchInteraction> = search
        .iter()
        .filter(|r| r.item_id == item_id)
        .cloned()
        .collect();
    Ok(QueryClickIndex::from_log(&relevant).ranking(item_id, n))
}

/// Query pool prepared for cosine lookups.
#[derive(Debug, Clone)]
pub struct BackfillPool {
    ids: Vec<String>,
    /// Unit-normalized query vectors; zero vectors are excluded.
    unit: Vec<Vec<f64>>,
    /// Maps item embeddings into query space when dimensions differ.
    projection: Option<Matrix>,
    item_dim: usize,
}

impl BackfillPool {
    /// `projection` (`d_q x d_i`) is required when the item and query
    /// dimensions differ, and ignored otherwise.
    pub fn new(queries: &EmbeddingTable, item_dim: usize, projection: Option<Matrix>) -> Result<Self> {
        let dq = queries.dim();
        let projection = if item_dim == dq {
            None
        } else {
            match projection {
                Some(p) if p.shape() == (dq, item_dim) => Some(p),
                Some(p) => {
                    return Err(Error::Config(format!(
                        "backfill projection is {}x{}, expected {dq}x{item_dim}",
                        p.rows(),
                        p.cols()
                    )))
                }
                None => {
                    return Err(Error::Config(format!(
                        "item dim {item_dim} differs from query dim {dq}; configure a projection"
                    )))
                }
            }
        };
        let mut ids = Vec::new();
        let mut unit: Vec<Vec<f64>> = Vec::new();
        for (id, v) in queries.iter() {
            let n = norm(v);
            if n > 0.0 {
                ids.push(id.to_string());
                unit.push(v.iter().map(|x| x / n).collect());
            }
        }
        // sorted by id so that ties resolve to the smaller id
        let mut order: Vec<usize> = (0..ids.len()).collect();
        order.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
        let ids: Vec<String> = order.iter().map(|&i| ids[i].clone()).collect();
        let unit = order.iter().map(|&i| unit[i].clone()).collect();
        Ok(BackfillPool {
            ids,
            unit,
            projection,
            item_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Seeded Gaussian `d_q x d_i` map for backfill across mismatched spaces.
pub fn random_projection(query_dim: usize, item_dim: usize, seed: u64) -> Matrix {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (item_dim as f64).sqrt();
    let data = (0..query_dim * item_dim)
        .map(|_| scale * rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect();
    Matrix::from_vec(query_dim, item_dim, data).expect("sized")
}

/// Appends the most cosine-similar unused queries until the ranking has
/// `n` entries, then pads with zero columns if the pool runs out.
pub fn backfill_queries(
    ranking: &QueryRanking,
    item_embedding: &[f64],
    pool: &BackfillPool,
    n: usize,
) -> Result<QueryRanking> {
    if item_embedding.len() != pool.item_dim {
        return Err(Error::Config(format!(
            "item embedding has dim {}, pool expects {}",
            item_embedding.len(),
            pool.item_dim
        )));
    }
    let mut out = ranking.clone();
    if out.entries.len() >= n {
        out.entries.truncate(n);
        return Ok(out);
    }
    let used: std::collections::HashSet<&str> = ranking.query_ids().into_iter().collect();
    let needed = n - out.entries.len();

    let probe = match &pool.projection {
        Some(p) => p.matvec(item_embedding),
        None => item_embedding.to_vec(),
    };
    let probe_norm = norm(&probe);
    let mut candidates: Vec<(f64, usize)> = pool
        .ids
        .iter()
        .enumerate()
        .filter(|(_, id)| !used.contains(id.as_str()))
        .map(|(i, _)| {
            let score = if probe_norm > 0.0 {
                dot(&probe, &pool.unit[i]) / probe_norm
            } else {
                0.0
            };
            (score, i)
        })
        .collect();
    if probe_norm == 0.0 {
        out.degenerate_backfill = true;
        log::warn!(
            "item `{}` has a zero embedding; backfilling by query id order",
            ranking.item_id
        );
    }
    let cmp = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    if candidates.len() > needed {
        candidates.select_nth_unstable_by(needed, cmp);
        candidates.truncate(needed);
    }
    candidates.sort_by(cmp);
    for (_, i) in candidates {
        out.entries.push(RankedQuery {
            query_id: Some(pool.ids[i].clone()),
            click_count: 0,
            source: QuerySource::SimilarityBackfill,
        });
    }
    while out.entries.len() < n {
        out.entries.push(RankedQuery {
            query_id: None,
            click_count: 0,
            source: QuerySource::Padding,
        });
    }
    Ok(out)
}

/// Per-item instrument matrix `Z_j` (`d_q x N`).
#[derive(Debug, Clone, PartialEq)]
pub struct IvMatrix {
    pub item_id: String,
    pub matrix: Matrix,
    pub columns: Vec<RankedQuery>,
}

impl IvMatrix {
    pub fn n(&self) -> usize {
        self.matrix.cols()
    }

    pub fn query_dim(&self) -> usize {
        self.matrix.rows()
    }

    /// Column-wise mean of `Z_j`.
    pub fn column_mean(&self) -> Vec<f64> {
        let n = self.n() as f64;
        (0..self.query_dim())
            .map(|i| self.matrix.row(i).iter().sum::<f64>() / n)
            .collect()
    }
}

pub fn build_iv_matrix(ranking: &QueryRanking, queries: &EmbeddingTable, n: usize) -> Result<IvMatrix> {
    if ranking.entries.len() > n {
        return Err(Error::contract(format!(
            "ranking for `{}` has {} entries, more than N={n}",
            ranking.item_id,
            ranking.entries.len()
        )));
    }
    let dq = queries.dim();
    let mut columns = ranking.entries.clone();
    while columns.len() < n {
        columns.push(RankedQuery {
            query_id: None,
            click_count: 0,
            source: QuerySource::Padding,
        });
    }
    let vectors = columns
        .iter()
        .map(|c| match &c.query_id {
            Some(q) => queries.require(q).map(<[f64]>::to_vec),
            None => Ok(vec![0.0; dq]),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IvMatrix {
        item_id: ranking.item_id.clone(),
        matrix: Matrix::from_columns(dq, &vectors)?,
        columns,
    })
}
