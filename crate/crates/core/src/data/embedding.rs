use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingKind {
    Item,
    Query,
    UserContext,
}

impl fmt::Display for EmbeddingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EmbeddingKind::Item => "item",
            EmbeddingKind::Query => "query",
            EmbeddingKind::UserContext => "user_context",
        })
    }
}

impl FromStr for EmbeddingKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "item" => Ok(EmbeddingKind::Item),
            "query" => Ok(EmbeddingKind::Query),
            "user_context" => Ok(EmbeddingKind::UserContext),
            other => Err(format!("unknown embedding kind `{other}`")),
        }
    }
}

/// Id-to-vector map with a fixed dimension. Iteration follows insertion
/// order, which is also the order rows are written in.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    kind: EmbeddingKind,
    dim: usize,
    ids: Vec<String>,
    vectors: Vec<Vec<f64>>,
    index: HashMap<String, usize>,
    /// Extra `#key=value` header lines, e.g. the reconstruction variant.
    metadata: Vec<(String, String)>,
}

impl EmbeddingTable {
    pub fn new(kind: EmbeddingKind, dim: usize) -> Self {
        EmbeddingTable {
            kind,
            dim,
            ids: Vec::new(),
            vectors: Vec::new(),
            index: HashMap::new(),
            metadata: Vec::new(),
        }
    }

    pub fn kind(&self) -> EmbeddingKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::contract("embedding id must be non-empty"));
        }
        if vector.len() != self.dim {
            return Err(Error::contract(format!(
                "{} embedding `{id}` has length {}, table dim is {}",
                self.kind,
                vector.len(),
                self.dim
            )));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract(format!("embedding `{id}` has non-finite entries")));
        }
        if self.index.contains_key(&id) {
            return Err(Error::contract(format!("duplicate embedding id `{id}`")));
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.vectors.push(vector);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.index.get(id).map(|&i| self.vectors[i].as_slice())
    }

    pub fn require(&self, id: &str) -> Result<&[f64]> {
        self.get(id).ok_or_else(|| Error::MissingId {
            kind: match self.kind {
                EmbeddingKind::Item => "item",
                EmbeddingKind::Query => "query",
                EmbeddingKind::UserContext => "user_context",
            },
            id: id.to_string(),
        })
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vector_at(&self, idx: usize) -> &[f64] {
        &self.vectors[idx]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.ids
            .iter()
            .zip(&self.vectors)
            .map(|(id, v)| (id.as_str(), v.as_slice()))
    }

    pub fn set_metadata(&mut self, key: &str, value: impl Into<String>) {
        let value = value.into();
        match self.metadata.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.metadata.push((key.to_string(), value)),
        }
    }

    pub fn metadata(&self, key: &str) -> Option<&str> {
        self.metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "#dim={} kind={}", self.dim, self.kind)?;
        for (k, v) in &self.metadata {
            writeln!(w, "#{k}={v}")?;
        }
        for (id, v) in self.iter() {
            write!(w, "{id}")?;
            write_values(&mut w, v)?;
            writeln!(w)?;
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
        let mut table: Option<EmbeddingTable> = None;
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(source, e))?;
            let line = line.trim_end_matches('\r');
            let lineno = idx + 1;
            let Some(t) = table.as_mut() else {
                table = Some(parse_header(line).map_err(|m| perr(lineno, m))?);
                continue;
            };
            if let Some(meta) = line.strip_prefix('#') {
                let (k, v) = meta
                    .split_once('=')
                    .ok_or_else(|| perr(lineno, format!("malformed metadata `{line}`")))?;
                t.set_metadata(k, v);
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            let id = parts.next().unwrap_or_default();
            let values = parts
                .map(|p| p.parse::<f64>().map_err(|_| perr(lineno, format!("bad value `{p}`"))))
                .collect::<Result<Vec<f64>>>()?;
            t.insert(id, values).map_err(|e| perr(lineno, e.to_string()))?;
        }
        table.ok_or_else(|| perr(1, "missing `#dim=<d> kind=<kind>` header".into()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(BufReader::new(f), &path.display().to_string())
    }
}

fn parse_header(line: &str) -> std::result::Result<EmbeddingTable, String> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| "missing `#dim=<d> kind=<kind>` header".to_string())?;
    let mut dim = None;
    let mut kind = None;
    for tok in body.split_whitespace() {
        match tok.split_once('=') {
            Some(("dim", d)) => dim = Some(d.parse::<usize>().map_err(|_| format!("bad dim `{d}`"))?),
            Some(("kind", k)) => kind = Some(k.parse::<EmbeddingKind>()?),
            _ => return Err(format!("unexpected header token `{tok}`")),
        }
    }
    match (dim, kind) {
        (Some(d), Some(k)) if d >= 1 => Ok(EmbeddingTable::new(k, d)),
        (Some(_), Some(_)) => Err("dim must be >= 1".into()),
        _ => Err("header needs both dim and kind".into()),
    }
}

/// Writes `\tv0\tv1...` with 17 significant digits.
pub(crate) fn write_values<W: Write>(w: &mut W, v: &[f64]) -> std::io::Result<()> {
    for x in v {
        write!(w, "\t{x:.16e}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let mut t = EmbeddingTable::new(EmbeddingKind::Query, 3);
        t.insert("q1", vec![0.1, -1.0 / 3.0, 1e-300]).unwrap();
        t.insert("q0", vec![f64::MAX, -0.0, 2.5]).unwrap();
        t.set_metadata("variant", "weighted");
        let mut buf = Vec::new();
        t.write(&mut buf).unwrap();
        let back = EmbeddingTable::parse(buf.as_slice(), "mem").unwrap();
        assert_eq!(back, t);
        assert_eq!(back.metadata("variant"), Some("weighted"));
        assert_eq!(back.ids(), &["q1".to_string(), "q0".to_string()]);
    }

    #[test]
    fn rejects_wrong_length_rows() {
        let text = "#dim=2 kind=item\na\t1\t2\nb\t1\n";
        assert!(matches!(
            EmbeddingTable::parse(text.as_bytes(), "t"),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn rejects_missing_header_and_duplicates() {
        assert!(EmbeddingTable::parse("a\t1\n".as_bytes(), "t").is_err());
        let dup = "#dim=1 kind=item\na\t1\na\t2\n";
        assert!(EmbeddingTable::parse(dup.as_bytes(), "t").is_err());
        let bad_kind = "#dim=1 kind=user\n";
        assert!(EmbeddingTable::parse(bad_kind.as_bytes(), "t").is_err());
    }

    #[test]
    fn insert_validates_finiteness() {
        let mut t = EmbeddingTable::new(EmbeddingKind::Item, 1);
        assert!(t.insert("x", vec![f64::INFINITY]).is_err());
        assert!(t.insert("", vec![1.0]).is_err());
    }
}
