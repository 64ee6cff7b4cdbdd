use std::collections::HashMap;

use crate::data::{EmbeddingTable, RecInteraction};
use crate::error::{Error, Result};
use crate::iv::{ClickHistory, IvStore, TreatmentSet};
use crate::models::{BatchExample, ImpressionBatch};
use crate::recon::{AlphaInput, IvProjector};

/// One labelled request with items and users replaced by dense indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub user: usize,
    pub target: usize,
    /// Most recent first.
    pub history: Vec<usize>,
    pub label: bool,
    pub impression: usize,
}

#[derive(Debug, Clone, Default)]
pub struct ExampleSet {
    pub examples: Vec<Example>,
    pub impression_ids: Vec<String>,
}

impl ExampleSet {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

/// Items, user contexts and click histories shared by every split.
#[derive(Debug, Clone)]
pub struct Corpus {
    items: EmbeddingTable,
    contexts: EmbeddingTable,
    history: ClickHistory,
}

impl Corpus {
    /// `full_log` feeds histories: a request at time `ts` sees every click
    /// strictly before `ts`, whichever split it came from.
    pub fn new(items: EmbeddingTable, contexts: EmbeddingTable, full_log: &[RecInteraction]) -> Self {
        Corpus {
            items,
            contexts,
            history: ClickHistory::from_log(full_log),
        }
    }

    pub fn items(&self) -> &EmbeddingTable {
        &self.items
    }

    pub fn contexts(&self) -> &EmbeddingTable {
        &self.contexts
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn item_vector(&self, idx: usize) -> &[f64] {
        self.items.vector_at(idx)
    }

    pub fn item_id(&self, idx: usize) -> &str {
        &self.items.ids()[idx]
    }

    pub fn context(&self, user: usize) -> &[f64] {
        self.contexts.vector_at(user)
    }

    pub fn user_id(&self, user: usize) -> &str {
        &self.contexts.ids()[user]
    }

    fn item_index(&self, id: &str) -> Result<usize> {
        self.items.index_of(id).ok_or_else(|| Error::MissingId {
            kind: "item embedding",
            id: id.to_string(),
        })
    }

    pub fn examples(&self, log: &[RecInteraction], max_history: usize) -> Result<ExampleSet> {
        let mut impressions: HashMap<&str, usize> = HashMap::new();
        let mut set = ExampleSet::default();
        for r in log {
            let user = self.contexts.index_of(&r.user_id).ok_or_else(|| Error::MissingId {
                kind: "user context",
                id: r.user_id.clone(),
            })?;
            let target = self.item_index(&r.item_id)?;
            let history = self
                .history
                .recent(&r.user_id, r.timestamp, &r.item_id, max_history)
                .iter()
                .map(|id| self.item_index(id))
                .collect::<Result<Vec<_>>>()?;
            let next = impressions.len();
            let impression = *impressions.entry(&r.impression_id).or_insert_with(|| {
                set.impression_ids.push(r.impression_id.clone());
                next
            });
            set.examples.push(Example {
                user,
                target,
                history,
                label: r.click,
                impression,
            });
        }
        Ok(set)
    }

    /// String-keyed view of `set`, for table-based scoring.
    pub fn to_batch(&self, set: &ExampleSet) -> ImpressionBatch {
        ImpressionBatch {
            examples: set
                .examples
                .iter()
                .map(|e| BatchExample {
                    treatment: TreatmentSet {
                        user_id: self.user_id(e.user).to_string(),
                        target_item_id: self.item_id(e.target).to_string(),
                        history: e.history.iter().map(|&h| self.item_id(h).to_string()).collect(),
                    },
                    context: self.context(e.user).to_vec(),
                    label: e.label,
                    impression_id: set.impression_ids[e.impression].clone(),
                })
                .collect(),
        }
    }

    /// Per-item projectors aligned with the item table.
    pub fn projectors(&self, store: &IvStore, alpha_input: AlphaInput) -> Result<Vec<IvProjector>> {
        self.items
            .ids()
            .iter()
            .map(|id| IvProjector::new(store.require(id)?, alpha_input))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::EmbeddingKind;

    fn row(user: &str, item: &str, click: bool, ts: i64, imp: &str) -> RecInteraction {
        RecInteraction {
            user_id: user.into(),
            item_id: item.into(),
            click,
            timestamp: ts,
            impression_id: imp.into(),
        }
    }

    #[test]
    fn histories_use_earlier_clicks_only() {
        let mut items = EmbeddingTable::new(EmbeddingKind::Item, 1);
        for (k, id) in ["a", "b", "c"].iter().enumerate() {
            items.insert(*id, vec![k as f64]).unwrap();
        }
        let mut ctx = EmbeddingTable::new(EmbeddingKind::UserContext, 1);
        ctx.insert("u", vec![0.0]).unwrap();
        let log = vec![
            row("u", "a", true, 1, "x"),
            row("u", "b", false, 1, "x"),
            row("u", "c", true, 2, "y"),
            row("u", "b", true, 2, "y"),
        ];
        let corpus = Corpus::new(items, ctx, &log);
        let set = corpus.examples(&log, 10).unwrap();
        assert_eq!(set.impression_ids, vec!["x", "y"]);
        assert!(set.examples[0].history.is_empty());
        assert_eq!(set.examples[2].history, vec![0]);
        assert_eq!(set.examples[3].impression, 1);
        let batch = corpus.to_batch(&set);
        assert_eq!(batch.examples[2].treatment.history, vec!["a"]);
    }

    #[test]
    fn unknown_user_is_reported() {
        let items = EmbeddingTable::new(EmbeddingKind::Item, 1);
        let ctx = EmbeddingTable::new(EmbeddingKind::UserContext, 1);
        let corpus = Corpus::new(items, ctx, &[]);
        let err = corpus.examples(&[row("ghost", "a", true, 0, "x")], 5).unwrap_err();
        assert!(err.to_string().contains("ghost"));
    }
}
