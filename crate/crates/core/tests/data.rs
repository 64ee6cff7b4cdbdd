use std::collections::HashMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use iv4rec::data::synthetic::click_probability;
use iv4rec::data::{chronological_split, gen_synthetic, hash_embed, RecInteraction, SyntheticConfig};
use iv4rec::iv::ClickHistory;
use iv4rec::numerics::{cosine, dot};

// Frozen from an independent hashlib implementation of the bucket/sign rule.
const LAKERS_CELTICS: f64 = 0.6666666666666669;
const LAKERS_8: [f64; 8] = [0.0, 0.0, 0.0, 0.0, -0.5773502691896258, 0.0, 0.5773502691896258, -0.5773502691896258];

#[test]
fn hash_embedding_matches_reference_values() {
    assert_eq!(hash_embed("sports nba lakers", 8), LAKERS_8);
    for dim in [32, 64] {
        let a = hash_embed("sports nba lakers", dim);
        let b = hash_embed("sports nba celtics", dim);
        let c = hash_embed("weather forecast rain", dim);
        let ab = cosine(&a, &b).unwrap();
        assert!((ab - LAKERS_CELTICS).abs() < 1e-15);
        assert!(ab > cosine(&a, &c).unwrap());
    }
}

#[test]
fn unconfounded_clicks_follow_causal_score() {
    let cfg = SyntheticConfig {
        num_users: 800,
        num_items: 300,
        num_queries: 600,
        confounder_strength: 0.0,
        impressions_per_user: 4,
        seed: 21,
        ..SyntheticConfig::default()
    };
    let ds = gen_synthetic(&cfg).unwrap();
    assert!(ds.rec.len() >= 10_000);
    let (mut observed, mut expected, mut var) = (0.0, 0.0, 0.0);
    let mut buckets = [(0.0, 0.0, 0.0); 5];
    for r in &ds.rec {
        let pref = ds.truth.user_preference.get(&r.user_id).unwrap();
        let c = ds.truth.item_causal.get(&r.item_id).unwrap();
        let p = 1.0 / (1.0 + (-dot(pref, c)).exp());
        assert!((p - click_probability(pref, c, 123.0, 0.0)).abs() < 1e-15);
        let y = r.click as u8 as f64;
        observed += y;
        expected += p;
        var += p * (1.0 - p);
        let b = &mut buckets[((p * 5.0) as usize).min(4)];
        b.0 += y;
        b.1 += p;
        b.2 += p * (1.0 - p);
    }
    assert!((observed - expected).abs() <= 4.0 * var.sqrt(), "{observed} vs {expected}");
    for (y, p, v) in buckets {
        if v > 0.0 {
            assert!((y - p).abs() <= 4.0 * v.sqrt() + 1.0, "bucket {y} vs {p}");
        }
    }
}

fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[test]
fn query_embeddings_are_uncorrelated_with_confounders() {
    let cfg = SyntheticConfig {
        num_users: 200,
        num_items: 10_000,
        num_queries: 10_000,
        seed: 8,
        ..SyntheticConfig::default()
    };
    let ds = gen_synthetic(&cfg).unwrap();
    let anchors = &ds.truth.query_anchor;
    assert!(anchors.len() >= 5000);
    assert!(anchors.iter().collect::<std::collections::HashSet<_>>().len() >= 5000);
    let ids = ds.items.ids();
    let conf: Vec<&[f64]> = anchors
        .iter()
        .map(|&a| ds.truth.item_confounder.get(&ids[a]).unwrap())
        .collect();
    let exposure: Vec<f64> = anchors.iter().map(|&a| ds.truth.item_exposure[a]).collect();
    let qs: Vec<&[f64]> = ds.queries.iter().map(|(_, v)| v).collect();
    let mut worst: f64 = 0.0;
    for i in 0..cfg.causal_dim {
        let x: Vec<f64> = qs.iter().map(|q| q[i]).collect();
        for f in 0..cfg.confound_dim {
            let y: Vec<f64> = conf.iter().map(|b| b[f]).collect();
            worst = worst.max(correlation(&x, &y).abs());
        }
        worst = worst.max(correlation(&x, &exposure).abs());
    }
    assert!(worst < 0.05, "max |r| = {worst}");
}

#[test]
fn history_is_the_most_recent_distinct_clicks() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut log = Vec::new();
    for k in 0..100 {
        log.push(RecInteraction {
            user_id: "u".into(),
            item_id: format!("i{:03}", rng.random_range(0..1000)),
            click: true,
            timestamp: 1_000 + k * 10 + rng.random_range(0..5),
            impression_id: format!("p{k}"),
        });
    }
    let h = ClickHistory::from_log(&log);
    let cutoff = 10_000;
    let got = h.recent("u", cutoff, "none", 50);

    let mut sorted: Vec<&RecInteraction> = log.iter().filter(|r| r.timestamp < cutoff).collect();
    sorted.sort_by(|a, b| b.timestamp.cmp(&a.timestamp).then(a.item_id.cmp(&b.item_id)));
    let mut want: Vec<String> = Vec::new();
    for r in sorted {
        if !want.contains(&r.item_id) {
            want.push(r.item_id.clone());
        }
    }
    want.truncate(50);
    assert_eq!(got, want);
}

fn arb_log() -> impl Strategy<Value = Vec<RecInteraction>> {
    prop::collection::vec((0u8..5, 0u8..20, any::<bool>(), 0i64..7 * 86_400), 1..200).prop_map(|rows| {
        rows.into_iter()
            .map(|(u, i, c, ts)| RecInteraction {
                user_id: format!("u{u}"),
                item_id: format!("i{i}"),
                click: c,
                timestamp: 1_700_006_400 + ts,
                impression_id: format!("p{u}_{ts}"),
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn splits_partition_the_log(log in arb_log()) {
        if let Ok(s) = chronological_split(&log, 5, 1, 1) {
            prop_assert_eq!(s.train.len() + s.val.len() + s.test.len(), log.len());
            let mut all: Vec<_> = s.train.iter().chain(&s.val).chain(&s.test).cloned().collect();
            let mut orig = log.clone();
            all.sort();
            orig.sort();
            prop_assert_eq!(all, orig);
            let max_train = s.train.iter().map(|r| r.timestamp).max();
            let min_val = s.val.iter().map(|r| r.timestamp).min();
            let min_test = s.test.iter().map(|r| r.timestamp).min();
            if let (Some(a), Some(b)) = (max_train, min_val) {
                prop_assert!(a < b);
            }
            if let (Some(b), Some(c)) = (min_val, min_test) {
                prop_assert!(b <= c);
            }
            let mut owner: HashMap<&str, usize> = HashMap::new();
            for (k, part) in [&s.train, &s.val, &s.test].iter().enumerate() {
                for r in part.iter() {
                    prop_assert_eq!(*owner.entry(&r.impression_id).or_insert(k), k);
                }
            }
        }
    }

    #[test]
    fn hash_embeddings_are_unit_or_zero(text in "[a-z ]{0,40}", dim in 1usize..64) {
        let v = hash_embed(&text, dim);
        let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(n == 0.0 || (n - 1.0).abs() < 1e-12);
    }
}
