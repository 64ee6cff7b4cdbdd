use std::collections::{HashMap, HashSet};

use crate::data::RecInteraction;

/// Items entering one prediction: the user's earlier clicks plus the target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreatmentSet {
    pub user_id: String,
    pub target_item_id: String,
    /// Most recent first; never contains the target.
    pub history: Vec<String>,
}

impl TreatmentSet {
    /// History items followed by the target.
    pub fn item_ids(&self) -> impl Iterator<Item = &str> {
        self.history
            .iter()
            .map(String::as_str)
            .chain(std::iter::once(self.target_item_id.as_str()))
    }
}

/// Clicked items per user in time order, for repeated history lookups.
#[derive(Debug, Clone, Default)]
pub struct ClickHistory {
    by_user: HashMap<String, Vec<(i64, String)>>,
}

impl ClickHistory {
    pub fn from_log(log: &[RecInteraction]) -> Self {
        let mut by_user: HashMap<String, Vec<(i64, String)>> = HashMap::new();
        for r in log.iter().filter(|r| r.click) {
            by_user
                .entry(r.user_id.clone())
                .or_default()
                .push((r.timestamp, r.item_id.clone()));
        }
        for v in by_user.values_mut() {
            // ascending time; equal timestamps by descending id so the
            // reversed walk yields ascending ids
            v.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| b.1.cmp(&a.1)));
        }
        ClickHistory { by_user }
    }

    /// Distinct items clicked strictly before `before_ts`, most recent
    /// first, excluding `exclude`, truncated to `max_history`.
    pub fn recent(&self, user_id: &str, before_ts: i64, exclude: &str, max_history: usize) -> Vec<String> {
        let Some(clicks) = self.by_user.get(user_id) else {
            return Vec::new();
        };
        let cut = clicks.partition_point(|(t, _)| *t < before_ts);
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (_, item) in clicks[..cut].iter().rev() {
            if out.len() >= max_history {
                break;
            }
            if item != exclude && seen.insert(item.as_str()) {
                out.push(item.clone());
            }
        }
        out
    }

    pub fn treatment_set(&self, user_id: &str, target: &str, impression_ts: i64, max_history: usize) -> TreatmentSet {
        TreatmentSet {
            user_id: user_id.to_string(),
            target_item_id: target.to_string(),
            history: self.recent(user_id, impression_ts, target, max_history),
        }
    }
}

pub fn build_treatment_set(
    user_id: &str,
    target_item_id: &str,
    rec_log: &[RecInteraction],
    impression_ts: i64,
    max_history: usize,
) -> TreatmentSet {
    ClickHistory::from_log(rec_log).treatment_set(user_id, target_item_id, impression_ts, max_history)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn click(item: &str, ts: i64) -> RecInteraction {
        RecInteraction {
            user_id: "u".into(),
            item_id: item.into(),
            click: true,
            timestamp: ts,
            impression_id: format!("imp{ts}"),
        }
    }

    #[test]
    fn no_clicks_gives_target_only() {
        let t = build_treatment_set("u", "x", &[], 10, 5);
        assert!(t.history.is_empty());
        assert_eq!(t.item_ids().collect::<Vec<_>>(), vec!["x"]);
    }

    #[test]
    fn strict_time_cutoff_most_recent_first() {
        let log = vec![click("a", 1), click("b", 2), click("c", 3)];
        // timestamps are integers; 2.5 becomes "3, exclusive"
        let t = build_treatment_set("u", "x", &log, 3, 10);
        assert_eq!(t.history, vec!["b", "a"]);
    }

    #[test]
    fn unclicked_rows_and_target_are_skipped() {
        let mut log = vec![click("a", 1), click("x", 2)];
        log.push(RecInteraction {
            click: false,
            ..click("b", 3)
        });
        let t = build_treatment_set("u", "x", &log, 10, 10);
        assert_eq!(t.history, vec!["a"]);
    }

    #[test]
    fn history_is_capped() {
        let log: Vec<_> = (0..100).map(|i| click(&format!("i{i:03}"), i)).collect();
        let t = build_treatment_set("u", "x", &log, 1000, 50);
        assert_eq!(t.history.len(), 50);
        assert_eq!(t.history[0], "i099");
        assert_eq!(t.history[49], "i050");
    }
}
