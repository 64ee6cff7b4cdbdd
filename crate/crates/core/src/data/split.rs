use std::collections::HashMap;

use super::logs::{sort_rec, RecInteraction};
use super::synthetic::SECONDS_PER_DAY;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Split {
    pub train: Vec<RecInteraction>,
    pub val: Vec<RecInteraction>,
    pub test: Vec<RecInteraction>,
}

/// Splits by calendar day (UTC) relative to the first day in the log. An
/// impression is placed by its earliest timestamp, so its rows never
/// straddle partitions. Days past `train + val + test` go to the test set.
pub fn chronological_split(
    log: &[RecInteraction],
    train_days: usize,
    val_days: usize,
    test_days: usize,
) -> Result<Split> {
    if log.is_empty() {
        return Ok(Split::default());
    }
    let mut rows = log.to_vec();
    sort_rec(&mut rows);

    let mut impression_start: HashMap<&str, i64> = HashMap::new();
    for r in &rows {
        impression_start
            .entry(r.impression_id.as_str())
            .and_modify(|t| *t = (*t).min(r.timestamp))
            .or_insert(r.timestamp);
    }
    let first_day = rows[0].timestamp.div_euclid(SECONDS_PER_DAY);
    let last_day = rows.last().expect("non-empty").timestamp.div_euclid(SECONDS_PER_DAY);
    let span = (last_day - first_day + 1) as usize;
    let requested = train_days + val_days + test_days;
    if span < requested {
        return Err(Error::Config(format!(
            "log spans {span} day(s) but the split requests {requested} ({train_days}/{val_days}/{test_days})"
        )));
    }

    let day_of = |r: &RecInteraction| -> usize {
        let start = impression_start[r.impression_id.as_str()];
        (start.div_euclid(SECONDS_PER_DAY) - first_day) as usize
    };
    let mut split = Split::default();
    for r in rows.iter() {
        let day = day_of(r);
        let part = if day < train_days {
            &mut split.train
        } else if day < train_days + val_days {
            &mut split.val
        } else {
            &mut split.test
        };
        part.push(r.clone());
    }
    if split.val.is_empty() {
        log::warn!("chronological split produced an empty validation set");
    }
    if split.test.is_empty() {
        log::warn!("chronological split produced an empty test set");
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::EPOCH_START;

    fn row(day: i64, sec: i64, imp: &str) -> RecInteraction {
        RecInteraction {
            user_id: "u".into(),
            item_id: format!("i{day}{sec}"),
            click: sec % 2 == 0,
            timestamp: EPOCH_START + day * SECONDS_PER_DAY + sec,
            impression_id: imp.into(),
        }
    }

    fn week() -> Vec<RecInteraction> {
        (0..7)
            .flat_map(|d| (0..3).map(move |s| row(d, 100 * s, &format!("imp{d}_{s}"))))
            .collect()
    }

    #[test]
    fn seven_days_five_one_one() {
        let s = chronological_split(&week(), 5, 1, 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (15, 3, 3));
        let day = |r: &RecInteraction| (r.timestamp - EPOCH_START) / SECONDS_PER_DAY;
        assert!(s.train.iter().all(|r| day(r) < 5));
        assert!(s.val.iter().all(|r| day(r) == 5));
        assert!(s.test.iter().all(|r| day(r) == 6));
    }

    #[test]
    fn single_day_all_train() {
        let log: Vec<_> = (0..4).map(|s| row(0, s, "imp")).collect();
        let s = chronological_split(&log, 1, 0, 0).unwrap();
        assert_eq!(s.train.len(), 4);
        assert!(s.val.is_empty() && s.test.is_empty());
    }

    #[test]
    fn insufficient_span_names_days() {
        let err = chronological_split(&week(), 5, 2, 1).unwrap_err();
        assert!(err.to_string().contains("7 day"), "{err}");
    }

    #[test]
    fn shuffled_input_same_result() {
        let sorted = chronological_split(&week(), 5, 1, 1).unwrap();
        let mut shuffled = week();
        shuffled.reverse();
        shuffled.swap(2, 9);
        assert_eq!(chronological_split(&shuffled, 5, 1, 1).unwrap(), sorted);
    }

    #[test]
    fn impression_straddling_midnight_stays_whole() {
        let mut log = week();
        let mut late = row(4, SECONDS_PER_DAY - 1, "edge");
        log.push(late.clone());
        late.timestamp += 10;
        late.item_id = "i_after".into();
        log.push(late);
        let s = chronological_split(&log, 5, 1, 1).unwrap();
        assert_eq!(s.train.iter().filter(|r| r.impression_id == "edge").count(), 2);
    }
}
