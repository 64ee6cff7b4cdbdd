//! Synthetic confounded recommendation data with search queries as
//! instruments.
//!
//! Every item has a true causal factor `c_j` living in the low-rank subspace
//! of its topic, and an independent confounder block `b_j`. The published
//! item embedding is `[c_j + noise ‖ b_j]`. Clicks follow
//! `sigmoid(<pref_u, c_j> + strength * beta_j)` where `beta_j` is a scalar
//! exposure score computed from `b_j`; exposure itself is also tilted
//! towards high-`beta` items. Queries are noisy images of an anchor item's
//! causal factor inside the topic subspace, with zeros in the confounder
//! coordinates, so they carry no confounder signal by construction.

use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::embedding::{EmbeddingKind, EmbeddingTable};
use super::logs::{save_rec_log, save_search_log, sort_rec, sort_search, RecInteraction, SearchInteraction};
use crate::error::{Error, Result};
use crate::numerics::{dot, sigmoid};

pub const SECONDS_PER_DAY: i64 = 86_400;
/// Midnight UTC, 2023-11-14.
pub const EPOCH_START: i64 = 19_675 * SECONDS_PER_DAY;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub num_users: usize,
    pub num_items: usize,
    /// Size of the global query pool; each query is anchored to one item
    /// drawn uniformly, so per-item query counts vary.
    pub num_queries: usize,
    pub causal_dim: usize,
    pub confound_dim: usize,
    pub confounder_strength: f64,
    /// Search sessions generated per item.
    pub queries_per_item: usize,
    pub impressions_per_user: usize,
    pub seed: u64,

    pub items_per_impression: usize,
    pub num_topics: usize,
    /// Rank of each topic's causal subspace.
    pub topic_rank: usize,
    /// Std-dev of the noise added to the causal block of item embeddings.
    pub item_noise: f64,
    /// Std-dev of query noise, relative to the anchor factor scale.
    pub query_noise: f64,
    /// Latent topic factors each query describes; the others are zeroed.
    pub query_aspects: usize,
    pub context_dim: usize,
    pub context_noise: f64,
    /// Scale of user preference vectors.
    pub preference_scale: f64,
    /// Share of impression slots drawn from the user's favourite topic.
    pub on_topic_share: f64,
    pub days: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            num_users: 500,
            num_items: 200,
            num_queries: 600,
            causal_dim: 12,
            confound_dim: 4,
            confounder_strength: 1.0,
            queries_per_item: 8,
            impressions_per_user: 6,
            seed: 0,
            items_per_impression: 5,
            num_topics: 8,
            topic_rank: 4,
            item_noise: 1.0,
            query_noise: 0.5,
            query_aspects: 1,
            context_dim: 8,
            context_noise: 1.0,
            preference_scale: 2.0,
            on_topic_share: 0.6,
            days: 7,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_users", self.num_users),
            ("num_items", self.num_items),
            ("num_queries", self.num_queries),
            ("causal_dim", self.causal_dim),
            ("confound_dim", self.confound_dim),
            ("impressions_per_user", self.impressions_per_user),
            ("items_per_impression", self.items_per_impression),
            ("num_topics", self.num_topics),
            ("topic_rank", self.topic_rank),
            ("context_dim", self.context_dim),
            ("days", self.days),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if self.query_aspects == 0 || self.query_aspects > self.topic_rank {
            return Err(Error::Config("query_aspects must be in 1..=topic_rank".into()));
        }
        if self.topic_rank > self.causal_dim {
            return Err(Error::Config("topic_rank cannot exceed causal_dim".into()));
        }
        if self.items_per_impression > self.num_items {
            return Err(Error::Config("items_per_impression exceeds num_items".into()));
        }
        let reals = [
            ("confounder_strength", self.confounder_strength),
            ("item_noise", self.item_noise),
            ("query_noise", self.query_noise),
            ("context_noise", self.context_noise),
            ("preference_scale", self.preference_scale),
        ];
        for (name, v) in reals {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and >= 0")));
            }
        }
        if !(0.0..=1.0).contains(&self.on_topic_share) {
            return Err(Error::Config("on_topic_share must be in [0,1]".into()));
        }
        Ok(())
    }

    pub fn embedding_dim(&self) -> usize {
        self.causal_dim + self.confound_dim
    }
}

/// Latent quantities behind a synthetic dataset, kept for diagnostics.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// Noise-free causal factor per item (`causal_dim`).
    pub item_causal: EmbeddingTable,
    /// Confounder block per item (`confound_dim`).
    pub item_confounder: EmbeddingTable,
    /// Scalar exposure score `beta_j` per item.
    pub item_exposure: Vec<f64>,
    pub item_topic: Vec<usize>,
    /// Causal preference per user (`causal_dim`).
    pub user_preference: EmbeddingTable,
    /// Anchor item index per query.
    pub query_anchor: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub config: SyntheticConfig,
    pub rec: Vec<RecInteraction>,
    pub search: Vec<SearchInteraction>,
    pub items: EmbeddingTable,
    pub queries: EmbeddingTable,
    pub contexts: EmbeddingTable,
    pub truth: GroundTruth,
}

pub fn user_id(u: usize) -> String {
    format!("u{u:05}")
}

pub fn item_id(j: usize) -> String {
    format!("i{j:05}")
}

pub fn query_id(q: usize) -> String {
    format!("q{q:05}")
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Orthonormal `dim x rank` basis stored as `rank` column vectors.
fn random_basis(rng: &mut ChaCha8Rng, dim: usize, rank: usize) -> Vec<Vec<f64>> {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(rank);
    while cols.len() < rank {
        let mut v = gaussian(rng, dim, 1.0);
        for _ in 0..2 {
            for c in &cols {
                let p = dot(&v, c);
                v.iter_mut().zip(c).for_each(|(x, y)| *x -= p * y);
            }
        }
        let n = dot(&v, &v).sqrt();
        if n > 1e-8 {
            cols.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    cols
}

fn combine(basis: &[Vec<f64>], coeffs: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; basis[0].len()];
    for (b, &c) in basis.iter().zip(coeffs) {
        out.iter_mut().zip(b).for_each(|(o, x)| *o += c * x);
    }
    out
}

/// Samples `weights`-proportional index from `pool`.
fn weighted_pick(rng: &mut ChaCha8Rng, pool: &[usize], weights: &[f64]) -> usize {
    let total: f64 = pool.iter().map(|&j| weights[j]).sum();
    let mut r = rng.random::<f64>() * total;
    for &j in pool {
        r -= weights[j];
        if r <= 0.0 {
            return j;
        }
    }
    *pool.last().expect("non-empty pool")
}

pub fn gen_synthetic(config: &SyntheticConfig) -> Result<SyntheticDataset> {
    config.validate()?;
    let cfg = config;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let k = cfg.causal_dim;
    let m = cfg.confound_dim;
    let dim = cfg.embedding_dim();

    let topics: Vec<Vec<Vec<f64>>> = (0..cfg.num_topics)
        .map(|_| random_basis(&mut rng, k, cfg.topic_rank))
        .collect();

    // items
    let mut items = EmbeddingTable::new(EmbeddingKind::Item, dim);
    let mut item_causal = EmbeddingTable::new(EmbeddingKind::Item, k);
    item_causal.set_metadata("truth", "causal");
    let mut item_confounder = EmbeddingTable::new(EmbeddingKind::Item, m);
    item_confounder.set_metadata("truth", "confounder");
    let mut item_topic = Vec::with_capacity(cfg.num_items);
    let mut item_coeffs = Vec::with_capacity(cfg.num_items);
    let mut causal = Vec::with_capacity(cfg.num_items);
    let mut exposure = Vec::with_capacity(cfg.num_items);
    for j in 0..cfg.num_items {
        let topic = rng.random_range(0..cfg.num_topics);
        let coeffs = gaussian(&mut rng, cfg.topic_rank, 1.0);
        let c = combine(&topics[topic], &coeffs);
        let noise = gaussian(&mut rng, k, cfg.item_noise);
        let b = gaussian(&mut rng, m, 1.0);
        let beta = b.iter().sum::<f64>() / (m as f64).sqrt();
        let mut t: Vec<f64> = c.iter().zip(&noise).map(|(a, e)| a + e).collect();
        t.extend_from_slice(&b);
        items.insert(item_id(j), t)?;
        item_causal.insert(item_id(j), c.clone())?;
        item_confounder.insert(item_id(j), b)?;
        item_topic.push(topic);
        item_coeffs.push(coeffs);
        causal.push(c);
        exposure.push(beta);
    }
    let mut by_topic: Vec<Vec<usize>> = vec![Vec::new(); cfg.num_topics];
    for (j, &t) in item_topic.iter().enumerate() {
        by_topic[t].push(j);
    }
    let all_items: Vec<usize> = (0..cfg.num_items).collect();

    // users
    let ctx_map: Vec<Vec<f64>> = (0..cfg.context_dim)
        .map(|_| gaussian(&mut rng, k, 1.0 / (k as f64).sqrt()))
        .collect();
    let mut contexts = EmbeddingTable::new(EmbeddingKind::UserContext, cfg.context_dim);
    let mut user_preference = EmbeddingTable::new(EmbeddingKind::UserContext, k);
    user_preference.set_metadata("truth", "preference");
    let mut user_topic = Vec::with_capacity(cfg.num_users);
    let mut prefs = Vec::with_capacity(cfg.num_users);
    for u in 0..cfg.num_users {
        let topic = rng.random_range(0..cfg.num_topics);
        let h = gaussian(&mut rng, cfg.topic_rank, cfg.preference_scale);
        let pref = combine(&topics[topic], &h);
        let ctx: Vec<f64> = ctx_map
            .iter()
            .map(|row| dot(row, &pref) + cfg.context_noise * rng.sample::<f64, _>(StandardNormal))
            .collect();
        contexts.insert(user_id(u), ctx)?;
        user_preference.insert(user_id(u), pref.clone())?;
        user_topic.push(topic);
        prefs.push(pref);
    }

    // recommendation impressions; exposure tilted by the confounder
    let exposure_weight: Vec<f64> = exposure
        .iter()
        .map(|b| (0.5 * cfg.confounder_strength * b).exp())
        .collect();
    let mut rec = Vec::with_capacity(cfg.num_users * cfg.impressions_per_user * cfg.items_per_impression);
    for u in 0..cfg.num_users {
        for imp in 0..cfg.impressions_per_user {
            let day = rng.random_range(0..cfg.days as i64);
            let sec = rng.random_range(0..SECONDS_PER_DAY);
            let ts = EPOCH_START + day * SECONDS_PER_DAY + sec;
            let impression_id = format!("imp{u:05}_{imp:03}");
            let mut shown: Vec<usize> = Vec::with_capacity(cfg.items_per_impression);
            let mut guard = 0;
            while shown.len() < cfg.items_per_impression {
                guard += 1;
                let on_topic = rng.random::<f64>() < cfg.on_topic_share && guard < 1000;
                let pool = if on_topic && !by_topic[user_topic[u]].is_empty() {
                    &by_topic[user_topic[u]]
                } else {
                    &all_items
                };
                let j = weighted_pick(&mut rng, pool, &exposure_weight);
                if !shown.contains(&j) {
                    shown.push(j);
                }
            }
            for j in shown {
                let p = click_probability(&prefs[u], &causal[j], exposure[j], cfg.confounder_strength);
                let click = rng.random::<f64>() < p;
                rec.push(RecInteraction {
                    user_id: user_id(u),
                    item_id: item_id(j),
                    click,
                    timestamp: ts,
                    impression_id: impression_id.clone(),
                });
            }
        }
    }
    sort_rec(&mut rec);

    // queries anchored to items
    let mut queries = EmbeddingTable::new(EmbeddingKind::Query, dim);
    let mut query_anchor = Vec::with_capacity(cfg.num_queries);
    let mut query_causal = Vec::with_capacity(cfg.num_queries);
    let mut anchored: Vec<Vec<usize>> = vec![Vec::new(); cfg.num_items];
    for q in 0..cfg.num_queries {
        let a = rng.random_range(0..cfg.num_items);
        let eps = gaussian(&mut rng, cfg.topic_rank, cfg.query_noise);
        let aspects = rand::seq::index::sample(&mut rng, cfg.topic_rank, cfg.query_aspects).into_vec();
        let coeffs: Vec<f64> = item_coeffs[a]
            .iter()
            .zip(&eps)
            .enumerate()
            .map(|(i, (c, e))| if aspects.contains(&i) { c + e } else { 0.0 })
            .collect();
        let z = combine(&topics[item_topic[a]], &coeffs);
        let mut full = z.clone();
        full.extend(std::iter::repeat_n(0.0, m));
        queries.insert(query_id(q), full)?;
        query_anchor.push(a);
        query_causal.push(z);
        anchored[a].push(q);
    }

    // search sessions: a query is issued, the anchor and a few same-topic
    // items are shown, clicks follow query-item causal affinity
    let mut search = Vec::new();
    for j in 0..cfg.num_items {
        if anchored[j].is_empty() {
            continue;
        }
        for _ in 0..cfg.queries_per_item {
            let q = *anchored[j].choose(&mut rng).expect("non-empty");
            let u = rng.random_range(0..cfg.num_users);
            let day = rng.random_range(0..cfg.days as i64);
            let ts = EPOCH_START + day * SECONDS_PER_DAY + rng.random_range(0..SECONDS_PER_DAY);
            let mut results = vec![j];
            let pool = &by_topic[item_topic[j]];
            for _ in 0..3 {
                let other = *pool.choose(&mut rng).expect("topic has the anchor");
                if !results.contains(&other) {
                    results.push(other);
                }
            }
            for r in results {
                let zq = &query_causal[q];
                let affinity = dot(zq, &causal[r]) / (dot(zq, zq).sqrt() * dot(&causal[r], &causal[r]).sqrt()).max(1e-12);
                let p = sigmoid(4.0 * affinity - 1.0);
                let click = rng.random::<f64>() < p;
                search.push(SearchInteraction {
                    user_id: user_id(u),
                    query_id: query_id(q),
                    item_id: item_id(r),
                    click,
                    timestamp: ts,
                });
            }
        }
    }
    sort_search(&mut search);

    Ok(SyntheticDataset {
        config: cfg.clone(),
        rec,
        search,
        items,
        queries,
        contexts,
        truth: GroundTruth {
            item_causal,
            item_confounder,
            item_exposure: exposure,
            item_topic,
            user_preference,
            query_anchor,
        },
    })
}

/// Click probability for one user-item pair under the generator's model.
pub fn click_probability(preference: &[f64], causal: &[f64], exposure: f64, strength: f64) -> f64 {
    sigmoid(dot(preference, causal) + strength * exposure)
}

pub const REC_FILE: &str = "rec.tsv";
pub const SEARCH_FILE: &str = "search.tsv";
pub const ITEMS_FILE: &str = "items.tsv";
pub const QUERIES_FILE: &str = "queries.tsv";
pub const CONTEXTS_FILE: &str = "contexts.tsv";
pub const TRUTH_CAUSAL_FILE: &str = "truth_causal.tsv";
pub const TRUTH_CONFOUNDER_FILE: &str = "truth_confounder.tsv";
pub const TRUTH_PREFERENCE_FILE: &str = "truth_preference.tsv";

/// Files written by [`SyntheticDataset::write_to_dir`], in order.
pub const OUTPUT_FILES: [&str; 8] = [
    REC_FILE,
    SEARCH_FILE,
    ITEMS_FILE,
    QUERIES_FILE,
    CONTEXTS_FILE,
    TRUTH_CAUSAL_FILE,
    TRUTH_CONFOUNDER_FILE,
    TRUTH_PREFERENCE_FILE,
];

impl SyntheticDataset {
    /// Writes logs, embedding tables and ground-truth factors into `dir`.
    /// Returns the paths written, in order.
    pub fn write_to_dir(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let p = |name: &str| dir.join(name);
        save_rec_log(p(REC_FILE), &self.rec)?;
        save_search_log(p(SEARCH_FILE), &self.search)?;
        self.items.save(p(ITEMS_FILE))?;
        self.queries.save(p(QUERIES_FILE))?;
        self.contexts.save(p(CONTEXTS_FILE))?;
        self.truth.item_causal.save(p(TRUTH_CAUSAL_FILE))?;
        // exposure scores ride along as a trailing coordinate
        let mut conf = EmbeddingTable::new(EmbeddingKind::Item, self.config.confound_dim + 1);
        conf.set_metadata("truth", "confounder_then_exposure");
        for (j, (id, b)) in self.truth.item_confounder.iter().enumerate() {
            let mut v = b.to_vec();
            v.push(self.truth.item_exposure[j]);
            conf.insert(id, v)?;
        }
        conf.save(p(TRUTH_CONFOUNDER_FILE))?;
        self.truth.user_preference.save(p(TRUTH_PREFERENCE_FILE))?;
        Ok(OUTPUT_FILES
        .iter()
        .map(|n| p(n))
        .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticConfig {
        SyntheticConfig {
            num_users: 60,
            num_items: 40,
            num_queries: 80,
            seed: 9,
            ..SyntheticConfig::default()
        }
    }

    #[test]
    fn same_seed_same_output() {
        let a = gen_synthetic(&small()).unwrap();
        let b = gen_synthetic(&small()).unwrap();
        assert_eq!(a.rec, b.rec);
        assert_eq!(a.search, b.search);
        assert_eq!(a.items, b.items);
        assert_eq!(a.queries, b.queries);
    }

    #[test]
    fn degenerate_config_rejected() {
        let cfg = SyntheticConfig {
            impressions_per_user: 0,
            ..small()
        };
        assert!(matches!(gen_synthetic(&cfg), Err(Error::Config(_))));
        let cfg = SyntheticConfig {
            confounder_strength: -1.0,
            ..small()
        };
        assert!(gen_synthetic(&cfg).is_err());
    }

    #[test]
    fn item_embedding_layout() {
        let cfg = SyntheticConfig {
            item_noise: 0.0,
            ..small()
        };
        let d = gen_synthetic(&cfg).unwrap();
        for (id, t) in d.items.iter() {
            let c = d.truth.item_causal.get(id).unwrap();
            let b = d.truth.item_confounder.get(id).unwrap();
            assert_eq!(&t[..cfg.causal_dim], c);
            assert_eq!(&t[cfg.causal_dim..], b);
        }
        for (_, q) in d.queries.iter() {
            assert!(q[cfg.causal_dim..].iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn impressions_have_distinct_items_and_shared_timestamp() {
        let d = gen_synthetic(&small()).unwrap();
        let mut by_imp: std::collections::BTreeMap<&str, Vec<&RecInteraction>> = Default::default();
        for r in &d.rec {
            by_imp.entry(&r.impression_id).or_default().push(r);
        }
        assert_eq!(by_imp.len(), 60 * small().impressions_per_user);
        for rows in by_imp.values() {
            assert_eq!(rows.len(), 5);
            assert!(rows.iter().all(|r| r.timestamp == rows[0].timestamp));
            let mut ids: Vec<&str> = rows.iter().map(|r| r.item_id.as_str()).collect();
            ids.sort();
            ids.dedup();
            assert_eq!(ids.len(), 5);
        }
    }
}
