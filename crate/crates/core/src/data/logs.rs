//! Tab-separated interaction logs.
//!
//! ```text
//! user_id  item_id  click  timestamp  impression_id            (rec)
//! user_id  query_id  item_id  click  timestamp                 (search)
//! ```
//!
//! Both carry the header line shown above; timestamps are integer epoch
//! seconds and `click` is `0` or `1`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const REC_HEADER: &str = "user_id\titem_id\tclick\ttimestamp\timpression_id";
pub const SEARCH_HEADER: &str = "user_id\tquery_id\titem_id\tclick\ttimestamp";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RecInteraction {
    pub user_id: String,
    pub item_id: String,
    pub click: bool,
    pub timestamp: i64,
    pub impression_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SearchInteraction {
    pub user_id: String,
    pub query_id: String,
    pub item_id: String,
    pub click: bool,
    pub timestamp: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogKind {
    Rec,
    Search,
}

/// Canonical order: timestamp, then impression id, then the remaining fields.
pub fn sort_rec(log: &mut [RecInteraction]) {
    log.sort_by(|a, b| {
        (a.timestamp, &a.impression_id, &a.user_id, &a.item_id, a.click)
            .cmp(&(b.timestamp, &b.impression_id, &b.user_id, &b.item_id, b.click))
    });
}

pub fn sort_search(log: &mut [SearchInteraction]) {
    log.sort_by(|a, b| {
        (a.timestamp, &a.user_id, &a.query_id, &a.item_id, a.click)
            .cmp(&(b.timestamp, &b.user_id, &b.query_id, &b.item_id, b.click))
    });
}

struct Fields<'a> {
    source: &'a str,
    line: usize,
}

impl Fields<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.source.to_string(),
            line: self.line,
            message: message.into(),
        }
    }

    fn split<'l>(&self, raw: &'l str, expected: usize) -> Result<Vec<&'l str>> {
        let parts: Vec<&str> = raw.split('\t').collect();
        if parts.len() != expected {
            return Err(self.err(format!("expected {expected} fields, found {}", parts.len())));
        }
        if let Some(i) = parts.iter().position(|p| p.is_empty()) {
            return Err(self.err(format!("field {} is empty", i + 1)));
        }
        Ok(parts)
    }

    fn click(&self, raw: &str) -> Result<bool> {
        match raw {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(self.err(format!("click must be 0 or 1, found `{other}`"))),
        }
    }

    fn timestamp(&self, raw: &str) -> Result<i64> {
        raw.parse()
            .map_err(|_| self.err(format!("timestamp `{raw}` is not an integer")))
    }
}

fn lines_after_header<R: BufRead>(
    reader: R,
    source: &str,
    header: &str,
) -> Result<Vec<(usize, String)>> {
    let mut out = Vec::new();
    let mut saw_header = false;
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        let line = line.trim_end_matches('\r');
        let lineno = idx + 1;
        if !saw_header {
            if line != header {
                return Err(Error::Parse {
                    path: source.to_string(),
                    line: lineno,
                    message: format!("expected header `{}`", header.replace('\t', "\\t")),
                });
            }
            saw_header = true;
            continue;
        }
        if line.is_empty() {
            continue;
        }
        out.push((lineno, line.to_string()));
    }
    if !saw_header {
        return Err(Error::Parse {
            path: source.to_string(),
            line: 1,
            message: "missing header".into(),
        });
    }
    Ok(out)
}

pub fn parse_rec_log<R: BufRead>(reader: R, source: &str) -> Result<Vec<RecInteraction>> {
    let mut log = Vec::new();
    for (line, raw) in lines_after_header(reader, source, REC_HEADER)? {
        let f = Fields { source, line };
        let p = f.split(&raw, 5)?;
        log.push(RecInteraction {
            user_id: p[0].to_string(),
            item_id: p[1].to_string(),
            click: f.click(p[2])?,
            timestamp: f.timestamp(p[3])?,
            impression_id: p[4].to_string(),
        });
    }
    sort_rec(&mut log);
    Ok(log)
}

pub fn parse_search_log<R: BufRead>(reader: R, source: &str) -> Result<Vec<SearchInteraction>> {
    let mut log = Vec::new();
    for (line, raw) in lines_after_header(reader, source, SEARCH_HEADER)? {
        let f = Fields { source, line };
        let p = f.split(&raw, 5)?;
        log.push(SearchInteraction {
            user_id: p[0].to_string(),
            query_id: p[1].to_string(),
            item_id: p[2].to_string(),
            click: f.click(p[3])?,
            timestamp: f.timestamp(p[4])?,
        });
    }
    sort_search(&mut log);
    Ok(log)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

pub fn load_rec_log(path: impl AsRef<Path>) -> Result<Vec<RecInteraction>> {
    let path = path.as_ref();
    let log = parse_rec_log(open(path)?, &path.display().to_string())?;
    let clicks = log.iter().filter(|r| r.click).count();
    log::info!("loaded {} rec rows ({clicks} clicks) from {}", log.len(), path.display());
    Ok(log)
}

pub fn load_search_log(path: impl AsRef<Path>) -> Result<Vec<SearchInteraction>> {
    let path = path.as_ref();
    let log = parse_search_log(open(path)?, &path.display().to_string())?;
    let clicks = log.iter().filter(|r| r.click).count();
    log::info!("loaded {} search rows ({clicks} clicks) from {}", log.len(), path.display());
    Ok(log)
}

pub fn write_rec_log<W: Write>(mut w: W, log: &[RecInteraction]) -> std::io::Result<()> {
    writeln!(w, "{REC_HEADER}")?;
    for r in log {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            r.user_id, r.item_id, r.click as u8, r.timestamp, r.impression_id
        )?;
    }
    Ok(())
}

pub fn write_search_log<W: Write>(mut w: W, log: &[SearchInteraction]) -> std::io::Result<()> {
    writeln!(w, "{SEARCH_HEADER}")?;
    for r in log {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            r.user_id, r.query_id, r.item_id, r.click as u8, r.timestamp
        )?;
    }
    Ok(())
}

pub fn save_rec_log(path: impl AsRef<Path>, log: &[RecInteraction]) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_rec_log(&mut w, log)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn save_search_log(path: impl AsRef<Path>, log: &[SearchInteraction]) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_search_log(&mut w, log)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}
