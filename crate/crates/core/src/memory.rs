//! Append-only store of past cases, retrieved by edit distance over the
//! concatenated agent input and output.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::planner::ActionPlan;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub id: u64,
    pub agent_input: String,
    pub agent_output: String,
    pub plan: ActionPlan,
    pub program_source: String,
    pub benchmark_tag: String,
}

impl MemoryEntry {
    pub fn retrieval_key(&self) -> String {
        concat_key(&self.agent_input, &self.agent_output)
    }
}

/// An entry before insertion; the store assigns the id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewEntry {
    pub agent_input: String,
    pub agent_output: String,
    pub plan: ActionPlan,
    pub program_source: String,
    pub benchmark_tag: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalOrder {
    #[default]
    MostSimilar,
    LeastSimilar,
}

impl std::str::FromStr for RetrievalOrder {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "most_similar" | "most" => Ok(Self::MostSimilar),
            "least_similar" | "least" => Ok(Self::LeastSimilar),
            other => Err(format!("unknown retrieval order {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub k: usize,
    #[serde(default)]
    pub order: RetrievalOrder,
    #[serde(default)]
    pub include_program: bool,
}

impl RetrievalConfig {
    pub fn new(k: usize) -> Result<Self, MemoryError> {
        if k == 0 {
            return Err(MemoryError::BadK);
        }
        Ok(Self { k, order: RetrievalOrder::MostSimilar, include_program: false })
    }

    pub fn with_order(mut self, order: RetrievalOrder) -> Self {
        self.order = order;
        self
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MemoryError {
    #[error("memory holds no demonstrations{}; seed it first", tag.as_ref().map(|t| format!(" tagged {t:?}")).unwrap_or_default())]
    Empty { tag: Option<String> },
    #[error("k must be at least 1")]
    BadK,
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Malformed { path: String, line: usize, message: String },
}

fn concat_key(input: &str, output: &str) -> String {
    format!("{input}\n{output}")
}

/// Unit-cost edit distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MemoryStore {
    entries: Vec<MemoryEntry>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    fn next_id(&self) -> u64 {
        self.entries.last().map_or(0, |e| e.id + 1)
    }

    pub fn insert(&mut self, entry: NewEntry) -> u64 {
        let id = self.next_id();
        self.entries.push(MemoryEntry {
            id,
            agent_input: entry.agent_input,
            agent_output: entry.agent_output,
            plan: entry.plan,
            program_source: entry.program_source,
            benchmark_tag: entry.benchmark_tag,
        });
        id
    }

    /// Entries ranked by distance to the query (ascending for most-similar,
    /// descending for least-similar), ties broken by smaller id.
    pub fn retrieve(
        &self,
        query_input: &str,
        query_output: &str,
        cfg: &RetrievalConfig,
    ) -> Result<Vec<&MemoryEntry>, MemoryError> {
        self.rank(self.entries.iter(), query_input, query_output, cfg, None)
    }

    /// Like [`retrieve`](Self::retrieve) over the entries carrying `tag`.
    pub fn retrieve_tagged(
        &self,
        tag: &str,
        query_input: &str,
        query_output: &str,
        cfg: &RetrievalConfig,
    ) -> Result<Vec<&MemoryEntry>, MemoryError> {
        let pool = self.entries.iter().filter(|e| e.benchmark_tag == tag);
        self.rank(pool, query_input, query_output, cfg, Some(tag))
    }

    fn rank<'a>(
        &self,
        pool: impl Iterator<Item = &'a MemoryEntry>,
        query_input: &str,
        query_output: &str,
        cfg: &RetrievalConfig,
        tag: Option<&str>,
    ) -> Result<Vec<&'a MemoryEntry>, MemoryError> {
        if cfg.k == 0 {
            return Err(MemoryError::BadK);
        }
        let query = concat_key(query_input, query_output);
        let mut scored: Vec<(usize, &MemoryEntry)> =
            pool.map(|e| (levenshtein(&e.retrieval_key(), &query), e)).collect();
        if scored.is_empty() {
            return Err(MemoryError::Empty { tag: tag.map(str::to_string) });
        }
        match cfg.order {
            RetrievalOrder::MostSimilar => scored.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.id.cmp(&b.1.id))),
            RetrievalOrder::LeastSimilar => scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.id.cmp(&b.1.id))),
        }
        Ok(scored.into_iter().take(cfg.k).map(|(_, e)| e).collect())
    }

    /// Reads a JSONL store. Blank lines are skipped; ids must be strictly
    /// increasing.
    pub fn load(path: &Path) -> Result<Self, MemoryError> {
        let shown = path.display().to_string();
        let file = std::fs::File::open(path).map_err(|source| MemoryError::Io { path: shown.clone(), source })?;
        let mut store = Self::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| MemoryError::Io { path: shown.clone(), source })?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: MemoryEntry = serde_json::from_str(&line).map_err(|e| MemoryError::Malformed {
                path: shown.clone(),
                line: i + 1,
                message: e.to_string(),
            })?;
            if store.entries.last().is_some_and(|last| entry.id <= last.id) {
                return Err(MemoryError::Malformed {
                    path: shown,
                    line: i + 1,
                    message: format!("id {} is not greater than the previous id", entry.id),
                });
            }
            store.entries.push(entry);
        }
        Ok(store)
    }

    /// Loads `path`, or returns an empty store when the file does not exist.
    pub fn load_or_empty(path: &Path) -> Result<Self, MemoryError> {
        if path.exists() {
            Self::load(path)
        } else {
            Ok(Self::new())
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), MemoryError> {
        let io_err = |source| MemoryError::Io { path: path.display().to_string(), source };
        let file = std::fs::File::create(path).map_err(io_err)?;
        let mut w = BufWriter::new(file);
        for e in &self.entries {
            let line = serde_json::to_string(e).expect("entries serialize");
            writeln!(w, "{line}").map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan() -> ActionPlan {
        ActionPlan::new(["a".into(), "b".into(), "c".into(), "execute".into()]).unwrap()
    }

    fn entry(input: &str, output: &str) -> NewEntry {
        NewEntry {
            agent_input: input.into(),
            agent_output: output.into(),
            plan: plan(),
            program_source: "verdict grant".into(),
            benchmark_tag: "access_control".into(),
        }
    }

    #[test]
    fn distance_examples() {
        assert_eq!(levenshtein("abc", "abc"), 0);
        assert_eq!(levenshtein("", "abc"), 3);
        assert_eq!(levenshtein("abc", ""), 3);
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        assert_eq!(levenshtein("flaw", "lawn"), 2);
        assert_eq!(levenshtein("héllo", "hello"), 1);
    }

    #[test]
    fn ids_are_sequential() {
        let mut s = MemoryStore::new();
        assert_eq!(s.insert(entry("a", "b")), 0);
        assert_eq!(s.insert(entry("c", "d")), 1);
    }

    #[test]
    fn self_retrieval_ranks_first() {
        let mut s = MemoryStore::new();
        s.insert(entry("show lab results", "lab"));
        s.insert(entry("list medications", "medication"));
        let cfg = RetrievalConfig::new(1).unwrap();
        let got = s.retrieve("list medications", "medication", &cfg).unwrap();
        assert_eq!(got[0].id, 1);
        let got = s.retrieve("list medications", "medication", &cfg.with_order(RetrievalOrder::LeastSimilar)).unwrap();
        assert_eq!(got[0].id, 0);
    }

    #[test]
    fn ties_prefer_smaller_id_and_k_caps() {
        let mut s = MemoryStore::new();
        s.insert(entry("x", "y"));
        s.insert(entry("x", "y"));
        let cfg = RetrievalConfig::new(5).unwrap();
        let ids: Vec<u64> = s.retrieve("q", "r", &cfg).unwrap().iter().map(|e| e.id).collect();
        assert_eq!(ids, [0, 1]);
        let ids: Vec<u64> = s
            .retrieve("q", "r", &cfg.with_order(RetrievalOrder::LeastSimilar))
            .unwrap()
            .iter()
            .map(|e| e.id)
            .collect();
        assert_eq!(ids, [0, 1]);
    }

    #[test]
    fn empty_store_errors() {
        let s = MemoryStore::new();
        let cfg = RetrievalConfig::new(1).unwrap();
        assert!(matches!(s.retrieve("a", "b", &cfg), Err(MemoryError::Empty { tag: None })));
        assert!(RetrievalConfig::new(0).is_err());
    }

    #[test]
    fn tagged_retrieval_filters() {
        let mut s = MemoryStore::new();
        s.insert(entry("a", "b"));
        let mut e = entry("a", "b");
        e.benchmark_tag = "safety_rules".into();
        s.insert(e);
        let cfg = RetrievalConfig::new(3).unwrap();
        let got = s.retrieve_tagged("safety_rules", "a", "b", &cfg).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].id, 1);
        assert!(s.retrieve_tagged("qa_rules", "a", "b", &cfg).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mem.jsonl");
        let mut s = MemoryStore::new();
        for i in 0..3 {
            s.insert(entry(&format!("in {i}"), &format!("out {i}")));
        }
        s.save(&path).unwrap();
        assert_eq!(MemoryStore::load(&path).unwrap(), s);

        std::fs::write(&path, "").unwrap();
        assert!(MemoryStore::load(&path).unwrap().is_empty());
    }

    #[test]
    fn truncated_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mem.jsonl");
        let mut s = MemoryStore::new();
        s.insert(entry("a", "b"));
        s.save(&path).unwrap();
        let mut text = std::fs::read_to_string(&path).unwrap();
        text.push_str("{\"id\": 1, \"agent_input\": \"tru");
        std::fs::write(&path, text).unwrap();
        match MemoryStore::load(&path).unwrap_err() {
            MemoryError::Malformed { line, .. } => assert_eq!(line, 2),
            other => panic!("{other}"),
        }
    }
}
