use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability that a random positive outscores a random negative, ties
/// counting one half. `None` when either class is absent.
pub fn auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "scores and labels must align");
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let positives = labels.iter().filter(|&&l| l).count() as u64;
    let negatives = labels.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return None;
    }
    // twice the win count, so ties stay integral
    let mut doubled: u64 = 0;
    let mut negatives_below: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let group = &order[i..j];
        let pos = group.iter().filter(|&&k| labels[k]).count() as u64;
        let neg = group.len() as u64 - pos;
        doubled += pos * (2 * negatives_below + neg);
        negatives_below += neg;
        i = j;
    }
    Some(doubled as f64 / (2 * positives * negatives) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingMetrics {
    pub mrr: f64,
    /// One value per requested cutoff, in order.
    pub ndcg: Vec<f64>,
}

/// Ranks by score descending, ties by item id ascending. `None` when the
/// impression has no click.
pub fn ranking_metrics(item_ids: &[String], scores: &[f64], labels: &[bool], ks: &[usize]) -> Option<RankingMetrics> {
    assert!(item_ids.len() == scores.len() && scores.len() == labels.len());
    let clicks = labels.iter().filter(|&&l| l).count();
    if clicks == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| match scores[b].total_cmp(&scores[a]) {
        Ordering::Equal => item_ids[a].cmp(&item_ids[b]),
        o => o,
    });
    let ranks: Vec<usize> = order
        .iter()
        .enumerate()
        .filter(|(_, &k)| labels[k])
        .map(|(r, _)| r + 1)
        .collect();
    let mrr = ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / clicks as f64;
    let gain = |r: usize| 1.0 / ((r + 1) as f64).log2();
    let ndcg = ks
        .iter()
        .map(|&k| {
            let dcg: f64 = ranks.iter().filter(|&&r| r <= k).map(|&r| gain(r)).sum();
            let ideal: f64 = (1..=clicks.min(k)).map(gain).sum();
            if ideal > 0.0 {
                dcg / ideal
            } else {
                0.0
            }
        })
        .collect();
    Some(RankingMetrics { mrr, ndcg })
}

/// Scores and labels of one impression.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpressionScores {
    pub impression_id: String,
    pub item_ids: Vec<String>,
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// AUC over all test pairs.
    pub auc: f64,
    /// Mean per-impression AUC over impressions with both classes.
    pub gauc: Option<f64>,
    pub mrr: f64,
    pub ndcg5: f64,
    pub ndcg10: f64,
    pub impressions: usize,
    pub examples: usize,
    /// Impressions contributing to MRR and nDCG (at least one click).
    pub ranked_impressions: usize,
    /// Impressions contributing to GAUC.
    pub gauc_impressions: usize,
}

pub fn evaluate(impressions: &[ImpressionScores]) -> Result<MetricsReport> {
    if impressions.is_empty() {
        return Err(Error::contract("cannot evaluate zero impressions"));
    }
    let scores: Vec<f64> = impressions.iter().flat_map(|i| i.scores.iter().copied()).collect();
    let labels: Vec<bool> = impressions.iter().flat_map(|i| i.labels.iter().copied()).collect();
    let auc = auc(&scores, &labels)
        .ok_or_else(|| Error::contract("AUC undefined: evaluation labels contain a single class"))?;
    let (mut gsum, mut gcount) = (0.0, 0usize);
    let (mut mrr, mut n5, mut n10, mut ranked) = (0.0, 0.0, 0.0, 0usize);
    for imp in impressions {
        if let Some(a) = self::auc(&imp.scores, &imp.labels) {
            gsum += a;
            gcount += 1;
        }
        if let Some(r) = ranking_metrics(&imp.item_ids, &imp.scores, &imp.labels, &[5, 10]) {
            mrr += r.mrr;
            n5 += r.ndcg[0];
            n10 += r.ndcg[1];
            ranked += 1;
        }
    }
    let skipped = impressions.len() - ranked;
    if skipped > 0 {
        log::debug!("{skipped} impression(s) without clicks excluded from MRR/nDCG");
    }
    let single_class = impressions.len() - gcount;
    if single_class > 0 {
        log::debug!("{single_class} single-class impression(s) excluded from GAUC");
    }
    let denom = ranked.max(1) as f64;
    Ok(MetricsReport {
        auc,
        gauc: (gcount > 0).then(|| gsum / gcount as f64),
        mrr: mrr / denom,
        ndcg5: n5 / denom,
        ndcg10: n10 / denom,
        impressions: impressions.len(),
        examples: scores.len(),
        ranked_impressions: ranked,
        gauc_impressions: gcount,
    })
}

/// Spearman rank correlation with average ranks for ties. `None` when
/// either input is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let rank = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j < idx.len() && v[idx[j]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j + 1) as f64 / 2.0;
            for &k in &idx[i..j] {
                r[k] = avg;
            }
            i = j;
        }
        r
    };
    let (rx, ry) = (rank(x), rank(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    (vx > 0.0 && vy > 0.0).then(|| cov / (vx * vy).sqrt())
}
