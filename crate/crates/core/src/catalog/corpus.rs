use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{QueryExample, Split, ToolRecord};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum Record {
    Tool(ToolRecord),
    Query(QueryExample),
}

/// A validated catalog plus its query sets. Immutable after load.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub tools: Vec<ToolRecord>,
    pub queries: Vec<QueryExample>,
    tool_index: HashMap<String, usize>,
}

impl Corpus {
    /// Validates ids and gold references.
    pub fn new(tools: Vec<ToolRecord>, queries: Vec<QueryExample>) -> Result<Self> {
        let mut tool_index = HashMap::with_capacity(tools.len());
        for (i, t) in tools.iter().enumerate() {
            if tool_index.insert(t.id.clone(), i).is_some() {
                return Err(Error::DuplicateId {
                    kind: "tool",
                    id: t.id.clone(),
                });
            }
        }
        let mut seen = HashSet::with_capacity(queries.len());
        for q in &queries {
            if !seen.insert(q.query_id.as_str()) {
                return Err(Error::DuplicateId {
                    kind: "query",
                    id: q.query_id.clone(),
                });
            }
            validate_query(q, &tool_index)?;
        }
        Ok(Self {
            tools,
            queries,
            tool_index,
        })
    }

    pub fn tool(&self, id: &str) -> Option<&ToolRecord> {
        self.tool_index.get(id).map(|&i| &self.tools[i])
    }

    pub fn split(&self, split: Split) -> Vec<QueryExample> {
        self.queries
            .iter()
            .filter(|q| q.split == split)
            .cloned()
            .collect()
    }

    pub fn summary(&self) -> CorpusSummary {
        let mut tools_per_tier = BTreeMap::new();
        for t in &self.tools {
            *tools_per_tier.entry(t.tier.to_string()).or_insert(0) += 1;
        }
        let mut queries_per_split = BTreeMap::new();
        let mut pairs_per_split = BTreeMap::new();
        for q in &self.queries {
            *queries_per_split.entry(q.split.to_string()).or_insert(0) += 1;
            *pairs_per_split.entry(q.split.to_string()).or_insert(0) += q.gold_tool_ids.len();
        }
        CorpusSummary {
            tools: self.tools.len(),
            tools_per_tier,
            queries_per_split,
            flattened_pairs_per_split: pairs_per_split,
        }
    }
}

fn validate_query(q: &QueryExample, tools: &HashMap<String, usize>) -> Result<()> {
    if q.gold_tool_ids.is_empty() {
        return Err(Error::EmptyGold(q.query_id.clone()));
    }
    for id in &q.gold_tool_ids {
        if !tools.contains_key(id) {
            return Err(Error::DanglingGold {
                query_id: q.query_id.clone(),
                tool_id: id.clone(),
            });
        }
    }
    Ok(())
}

/// Counts reported by `ingest`. Both the example count and the flattened
/// (query, tool) pair count are listed per split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub tools: usize,
    pub tools_per_tier: BTreeMap<String, usize>,
    pub queries_per_split: BTreeMap<String, usize>,
    pub flattened_pairs_per_split: BTreeMap<String, usize>,
}

/// Reads a line-delimited JSON corpus (`"kind": "tool" | "query"`).
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(BufReader::new(file))
}

pub fn read_corpus(reader: impl BufRead) -> Result<Corpus> {
    let mut tools = Vec::new();
    let mut queries = Vec::new();
    let mut tool_ids: HashMap<String, usize> = HashMap::new();
    let mut query_lines = Vec::new();
    let mut query_ids = HashSet::new();

    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        match record {
            Record::Tool(t) => {
                if tool_ids.insert(t.id.clone(), tools.len()).is_some() {
                    return Err(Error::DuplicateId { kind: "tool", id: t.id });
                }
                tools.push(t);
            }
            Record::Query(q) => {
                if !query_ids.insert(q.query_id.clone()) {
                    return Err(Error::DuplicateId {
                        kind: "query",
                        id: q.query_id,
                    });
                }
                query_lines.push(lineno);
                queries.push(q);
            }
        }
    }
    // tools may appear after the queries that reference them
    for (q, &lineno) in queries.iter().zip(&query_lines) {
        validate_query(q, &tool_ids).map_err(|e| match e {
            Error::EmptyGold(_) | Error::DanglingGold { .. } => Error::Parse {
                line: lineno,
                message: e.to_string(),
            },
            other => other,
        })?;
    }
    Corpus::new(tools, queries)
}

/// Writes tools first, then queries, one JSON object per line.
pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    for t in &corpus.tools {
        let line = serde_json::to_string(&Record::Tool(t.clone())).expect("tool serializes");
        writeln!(w, "{line}").map_err(io)?;
    }
    for q in &corpus.queries {
        let line = serde_json::to_string(&Record::Query(q.clone())).expect("query serializes");
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOOL_A: &str = r#"{"kind":"tool","id":"a","title":"Alpha","api_name":"getA","tool_description":"d","api_description":"e","tier":"G1"}"#;
    const TOOL_B: &str = r#"{"kind":"tool","id":"b","title":"Beta","api_name":"getB","tool_description":"","api_description":"","tier":"G2"}"#;
    const TOOL_C: &str = r#"{"kind":"tool","id":"c","title":"Gamma","api_name":"getC","tool_description":"x","api_description":"y","tier":"G3"}"#;
    const QUERY_1: &str = r#"{"kind":"query","query_id":"q1","text":"find alpha","gold_tool_ids":["a","b"],"tier":"G1","split":"train"}"#;
    const QUERY_2: &str = r#"{"kind":"query","query_id":"q2","text":"gamma please","gold_tool_ids":["c"],"tier":"G3","split":"eval_standard"}"#;

    fn parse(lines: &[&str]) -> Result<Corpus> {
        read_corpus(lines.join("\n").as_bytes())
    }

    #[test]
    fn loads_well_formed_file() {
        let c = parse(&[TOOL_A, TOOL_B, TOOL_C, QUERY_1, QUERY_2]).unwrap();
        assert_eq!(c.tools.len(), 3);
        assert_eq!(c.queries.len(), 2);
        assert_eq!(c.tool("b").unwrap().title, "Beta");
        let s = c.summary();
        assert_eq!(s.queries_per_split["train"], 1);
        assert_eq!(s.flattened_pairs_per_split["train"], 2);
    }

    #[test]
    fn duplicate_tool_rejected() {
        let err = parse(&[TOOL_A, TOOL_A]).unwrap_err();
        assert!(matches!(err, Error::DuplicateId { kind: "tool", .. }));
    }

    #[test]
    fn dangling_gold_names_the_id() {
        let err = parse(&[TOOL_A, QUERY_1]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("`b`"), "{msg}");
        assert!(msg.starts_with("line 2"), "{msg}");
    }

    #[test]
    fn malformed_line_reports_number() {
        let err = parse(&[TOOL_A, "{not json", TOOL_B]).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse(&[TOOL_A, r#"{"kind":"widget"}"#]).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn write_then_read_is_identity() {
        let c = parse(&[TOOL_A, TOOL_B, TOOL_C, QUERY_1, QUERY_2]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        write_corpus(&c, &path).unwrap();
        let back = load_corpus(&path).unwrap();
        assert_eq!(back.tools, c.tools);
        assert_eq!(back.queries, c.queries);
    }
}
