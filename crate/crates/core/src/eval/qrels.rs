use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Graded relevance judgments, `query_id → doc_id → relevance`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Qrels {
    judgments: BTreeMap<u64, BTreeMap<u64, u32>>,
}

impl Qrels {
    /// Rejects any query without at least one positive judgment.
    pub fn new(judgments: BTreeMap<u64, BTreeMap<u64, u32>>) -> Result<Self> {
        for (&q, docs) in &judgments {
            if !docs.values().any(|&r| r > 0) {
                return Err(Error::NoPositiveJudgment(q));
            }
        }
        Ok(Self { judgments })
    }

    pub fn from_triples(triples: impl IntoIterator<Item = (u64, u64, u32)>) -> Result<Self> {
        let mut judgments: BTreeMap<u64, BTreeMap<u64, u32>> = BTreeMap::new();
        for (q, d, rel) in triples {
            if judgments.entry(q).or_default().insert(d, rel).is_some() {
                return Err(Error::Parse(format!("duplicate judgment for query {q}, doc {d}")));
            }
        }
        Self::new(judgments)
    }

    /// `query_id<TAB>doc_id<TAB>relevance` per line; blank lines ignored.
    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut triples = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::Parse(format!(
                    "qrels line {}: expected 3 tab-separated fields, got {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let bad = |what: &str| Error::Parse(format!("qrels line {}: bad {what}", lineno + 1));
            let q = fields[0].trim().parse().map_err(|_| bad("query_id"))?;
            let d = fields[1].trim().parse().map_err(|_| bad("doc_id"))?;
            let r = fields[2].trim().parse().map_err(|_| bad("relevance"))?;
            triples.push((q, d, r));
        }
        Self::from_triples(triples)
    }

    pub fn read_tsv(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_tsv(&std::fs::read_to_string(path)?)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (q, docs) in &self.judgments {
            for (d, r) in docs {
                out.push_str(&format!("{q}\t{d}\t{r}\n"));
            }
        }
        out
    }

    pub fn judgments(&self, query_id: u64) -> Option<&BTreeMap<u64, u32>> {
        self.judgments.get(&query_id)
    }

    pub fn relevance(&self, query_id: u64, doc_id: u64) -> Option<u32> {
        self.judgments.get(&query_id).map(|d| d.get(&doc_id).copied().unwrap_or(0))
    }

    pub fn len(&self) -> usize {
        self.judgments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }
}
