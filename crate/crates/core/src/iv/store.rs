//! Persistent collection of per-item IV matrices.
//!
//! Text layout, one record per item:
//!
//! ```text
//! #iv_store version=1
//! <item_id>\t<N>\t<d_q>
//! <provenance>\t<query_id or ->\t<click_count>\t<v0>\t...\t<v(d_q-1)>   (N lines)
//! ```
//!
//! `provenance` is one of `clicked`, `backfill`, `random`, `padding`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{backfill_queries, build_iv_matrix, random_projection, BackfillPool, IvMatrix, QueryClickIndex, QuerySource, RankedQuery};
use crate::data::{write_values, EmbeddingTable, SearchInteraction};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

const HEADER: &str = "#iv_store version=1";

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct IvBuildConfig {
    /// Columns per IV matrix.
    pub n: usize,
    /// Seed of the random map used for backfill when `d_i != d_q`.
    pub projection_seed: u64,
}

impl Default for IvBuildConfig {
    fn default() -> Self {
        IvBuildConfig {
            n: 10,
            projection_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IvBuildStats {
    pub items: usize,
    pub clicked_columns: usize,
    pub backfill_columns: usize,
    pub random_columns: usize,
    pub padding_columns: usize,
    pub degenerate_items: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IvStore {
    n: usize,
    query_dim: usize,
    records: Vec<IvMatrix>,
    index: HashMap<String, usize>,
}

impl IvStore {
    pub fn new(n: usize, query_dim: usize) -> Self {
        IvStore {
            n,
            query_dim,
            records: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn query_dim(&self) -> usize {
        self.query_dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn insert(&mut self, record: IvMatrix) -> Result<()> {
        if record.matrix.shape() != (self.query_dim, self.n) {
            return Err(Error::contract(format!(
                "IV for `{}` is {}x{}, store expects {}x{}",
                record.item_id,
                record.matrix.rows(),
                record.matrix.cols(),
                self.query_dim,
                self.n
            )));
        }
        if self.index.contains_key(&record.item_id) {
            return Err(Error::contract(format!("duplicate IV record `{}`", record.item_id)));
        }
        self.index.insert(record.item_id.clone(), self.records.len());
        self.records.push(record);
        Ok(())
    }

    pub fn get(&self, item_id: &str) -> Option<&IvMatrix> {
        self.index.get(item_id).map(|&i| &self.records[i])
    }

    pub fn require(&self, item_id: &str) -> Result<&IvMatrix> {
        self.get(item_id).ok_or_else(|| Error::MissingId {
            kind: "IV record for item",
            id: item_id.to_string(),
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = &IvMatrix> {
        self.records.iter()
    }

    pub fn stats(&self) -> IvBuildStats {
        let mut s = IvBuildStats {
            items: self.records.len(),
            ..Default::default()
        };
        for c in self.records.iter().flat_map(|r| &r.columns) {
            match c.source {
                QuerySource::Clicked => s.clicked_columns += 1,
                QuerySource::SimilarityBackfill => s.backfill_columns += 1,
                QuerySource::Random => s.random_columns += 1,
                QuerySource::Padding => s.padding_columns += 1,
            }
        }
        s
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{HEADER}")?;
        for r in &self.records {
            writeln!(w, "{}\t{}\t{}", r.item_id, self.n, self.query_dim)?;
            for (k, c) in r.columns.iter().enumerate() {
                write!(
                    w,
                    "{}\t{}\t{}",
                    c.source,
                    c.query_id.as_deref().unwrap_or("-"),
                    c.click_count
                )?;
                write_values(&mut w, &r.matrix.column(k))?;
                writeln!(w)?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn parse<R: BufRead>(reader: R, source: &str) -> Result<Self> {
        let perr = |line: usize, message: String| Error::Parse {
            path: source.to_string(),
            line,
            message,
        };
        let mut lines = reader.lines().enumerate().map(|(i, l)| {
            l.map(|s| (i + 1, s.trim_end_matches('\r').to_string()))
                .map_err(|e| Error::io(source, e))
        });
        match lines.next().transpose()? {
            Some((_, h)) if h == HEADER => {}
            _ => return Err(perr(1, format!("expected `{HEADER}`"))),
        }
        let mut store: Option<IvStore> = None;
        while let Some((lineno, head)) = lines.next().transpose()? {
            if head.is_empty() {
                continue;
            }
            let parts: Vec<&str> = head.split('\t').collect();
            if parts.len() != 3 {
                return Err(perr(lineno, "expected `item_id\\tN\\td_q`".into()));
            }
            let n: usize = parts[1].parse().map_err(|_| perr(lineno, "bad N".into()))?;
            let dq: usize = parts[2].parse().map_err(|_| perr(lineno, "bad d_q".into()))?;
            let s = store.get_or_insert_with(|| IvStore::new(n, dq));
            if (s.n, s.query_dim) != (n, dq) {
                return Err(perr(lineno, "inconsistent N or d_q across records".into()));
            }
            let mut columns = Vec::with_capacity(n);
            let mut vectors = Vec::with_capacity(n);
            for _ in 0..n {
                let (ln, col) = lines
                    .next()
                    .transpose()?
                    .ok_or_else(|| perr(lineno, "truncated record".into()))?;
                let f: Vec<&str> = col.split('\t').collect();
                if f.len() != 3 + dq {
                    return Err(perr(ln, format!("expected {} fields, found {}", 3 + dq, f.len())));
                }
                let source: QuerySource = f[0].parse().map_err(|m| perr(ln, m))?;
                let query_id = match (source, f[1]) {
                    (QuerySource::Padding, _) => None,
                    (_, "-") => return Err(perr(ln, "non-padding column without query id".into())),
                    (_, q) => Some(q.to_string()),
                };
                let click_count = f[2].parse().map_err(|_| perr(ln, "bad click count".into()))?;
                let v = f[3..]
                    .iter()
                    .map(|x| x.parse::<f64>().map_err(|_| perr(ln, format!("bad value `{x}`"))))
                    .collect::<Result<Vec<f64>>>()?;
                columns.push(RankedQuery {
                    query_id,
                    click_count,
                    source,
                });
                vectors.push(v);
            }
            let record = IvMatrix {
                item_id: parts[0].to_string(),
                matrix: Matrix::from_columns(dq, &vectors)?,
                columns,
            };
            s.insert(record).map_err(|e| perr(lineno, e.to_string()))?;
        }
        store.ok_or_else(|| perr(1, "IV store has no records".into()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(BufReader::new(f), &path.display().to_string())
    }
}

/// Builds IV matrices for every item in `items`, in table order.
pub fn build_iv_store(
    items: &EmbeddingTable,
    search: &[SearchInteraction],
    queries: &EmbeddingTable,
    config: &IvBuildConfig,
) -> Result<IvStore> {
    if config.n == 0 {
        return Err(Error::Config("N must be >= 1".into()));
    }
    let projection = (items.dim() != queries.dim())
        .then(|| random_projection(queries.dim(), items.dim(), config.projection_seed));
    let pool = BackfillPool::new(queries, items.dim(), projection)?;
    let clicks = QueryClickIndex::from_log(search);
    let mut store = IvStore::new(config.n, queries.dim());
    let mut degenerate = 0;
    for (item_id, embedding) in items.iter() {
        let ranking = clicks.ranking(item_id, config.n);
        let ranking = backfill_queries(&ranking, embedding, &pool, config.n)?;
        degenerate += ranking.degenerate_backfill as usize;
        store.insert(build_iv_matrix(&ranking, queries, config.n)?)?;
    }
    let stats = store.stats();
    log::info!(
        "built {} IV records (N={}): {} clicked, {} backfilled, {} padded columns, {degenerate} degenerate",
        stats.items,
        config.n,
        stats.clicked_columns,
        stats.backfill_columns,
        stats.padding_columns
    );
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::EmbeddingKind;

    #[test]
    fn round_trip() {
        let mut items = EmbeddingTable::new(EmbeddingKind::Item, 2);
        items.insert("a", vec![1.0, 0.0]).unwrap();
        items.insert("b", vec![0.0, 0.0]).unwrap();
        let mut queries = EmbeddingTable::new(EmbeddingKind::Query, 2);
        queries.insert("q1", vec![0.3, 0.1]).unwrap();
        let search = vec![SearchInteraction {
            user_id: "u".into(),
            query_id: "q1".into(),
            item_id: "a".into(),
            click: true,
            timestamp: 0,
        }];
        let store = build_iv_store(&items, &search, &queries, &IvBuildConfig { n: 2, projection_seed: 0 }).unwrap();
        let s = store.stats();
        assert_eq!((s.clicked_columns, s.backfill_columns, s.padding_columns), (1, 1, 2));
        let mut buf = Vec::new();
        store.write(&mut buf).unwrap();
        assert_eq!(IvStore::parse(buf.as_slice(), "mem").unwrap(), store);
    }

    #[test]
    fn truncated_record_is_parse_error() {
        let text = format!("{HEADER}\na\t2\t1\nclicked\tq\t1\t0.5\n");
        assert!(matches!(IvStore::parse(text.as_bytes(), "t"), Err(Error::Parse { .. })));
    }
}
