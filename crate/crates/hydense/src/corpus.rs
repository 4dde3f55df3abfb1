//! Corpus ingestion and text preparation: JSONL documents and queries,
//! TSV relevance judgments, tokenization, vocabulary construction, sentence
//! splitting and cloze-style training-pair extraction.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::config::TokenizerConfig;
use crate::error::{Error, Result};

/// Index of the reserved out-of-vocabulary bucket.
pub const UNK_ID: u32 = 0;

/// Surface form stored for the reserved bucket. Angle brackets cannot occur
/// in a surface token, so this never collides with corpus vocabulary.
pub const UNK_TOKEN: &str = "<unk>";

/// A corpus document. `body` is non-empty after whitespace trimming.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub body: String,
}

impl Document {
    /// Text used for indexing, encoding and pair extraction: title and body
    /// joined by a single space, or the body alone when the title is empty.
    pub fn effective_text(&self) -> String {
        if self.title.is_empty() {
            self.body.clone()
        } else {
            format!("{} {}", self.title, self.body)
        }
    }
}

/// An evaluation query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub id: String,
    pub text: String,
}

/// Graded relevance judgments: query id -> document id -> grade.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QRels {
    grades: HashMap<String, HashMap<String, u32>>,
}

impl QRels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query_id: &str, doc_id: &str, grade: u32) {
        self.grades
            .entry(query_id.to_string())
            .or_default()
            .insert(doc_id.to_string(), grade);
    }

    pub fn for_query(&self, query_id: &str) -> Option<&HashMap<String, u32>> {
        self.grades.get(query_id)
    }

    pub fn grade(&self, query_id: &str, doc_id: &str) -> u32 {
        self.grades
            .get(query_id)
            .and_then(|m| m.get(doc_id))
            .copied()
            .unwrap_or(0)
    }

    /// Query ids with at least one judgment row, in sorted order.
    pub fn query_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.grades.keys().map(String::as_str).collect();
        ids.sort_unstable();
        ids
    }

    pub fn len(&self) -> usize {
        self.grades.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grades.is_empty()
    }
}

/// Documents in file order with id lookup and a content fingerprint.
#[derive(Debug, Clone)]
pub struct CorpusStore {
    docs: Vec<Document>,
    by_id: HashMap<String, usize>,
    fingerprint: [u8; 32],
}

impl CorpusStore {
    /// Build a store from documents, checking id uniqueness and the
    /// non-empty-body invariant.
    pub fn from_documents(docs: Vec<Document>) -> Result<CorpusStore> {
        let mut by_id = HashMap::with_capacity(docs.len());
        let mut hasher = Sha256::new();
        for (ordinal, doc) in docs.iter().enumerate() {
            if doc.body.trim().is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "document {:?} has an empty body",
                    doc.id
                )));
            }
            if by_id.insert(doc.id.clone(), ordinal).is_some() {
                return Err(Error::DuplicateId {
                    kind: "document",
                    id: doc.id.clone(),
                });
            }
            hasher.update(doc.id.as_bytes());
            hasher.update([0u8]);
            hasher.update(doc.title.as_bytes());
            hasher.update([0u8]);
            hasher.update(doc.body.as_bytes());
            hasher.update([1u8]);
        }
        let fingerprint = hasher.finalize().into();
        Ok(CorpusStore {
            docs,
            by_id,
            fingerprint,
        })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.by_id.get(id).map(|&i| &self.docs[i])
    }

    /// Documents in file order.
    pub fn iter(&self) -> impl Iterator<Item = &Document> {
        self.docs.iter()
    }

    /// SHA-256 over ids, titles and bodies in file order. Embedded in index
    /// files so fused retrieval can detect mismatched corpus versions.
    pub fn fingerprint(&self) -> [u8; 32] {
        self.fingerprint
    }
}

/// Queries in file order with unique ids.
#[derive(Debug, Clone, Default)]
pub struct QuerySet {
    queries: Vec<Query>,
    by_id: HashMap<String, usize>,
}

impl QuerySet {
    pub fn from_queries(queries: Vec<Query>) -> Result<QuerySet> {
        let mut by_id = HashMap::with_capacity(queries.len());
        for (i, q) in queries.iter().enumerate() {
            if by_id.insert(q.id.clone(), i).is_some() {
                return Err(Error::DuplicateId {
                    kind: "query",
                    id: q.id.clone(),
                });
            }
        }
        Ok(QuerySet { queries, by_id })
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    pub fn get(&self, id: &str) -> Option<&Query> {
        self.by_id.get(id).map(|&i| &self.queries[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &Query> {
        self.queries.iter()
    }
}

/// Parsed evaluation inputs. `rejected_qrels_rows` counts judgment rows
/// whose query id was absent from the query set.
#[derive(Debug, Clone)]
pub struct EvalSet {
    pub queries: QuerySet,
    pub qrels: QRels,
    pub rejected_qrels_rows: usize,
}

#[derive(Deserialize)]
struct CorpusRow {
    _id: String,
    #[serde(default)]
    title: String,
    text: String,
}

#[derive(Deserialize)]
struct QueryRow {
    _id: String,
    text: String,
}

/// Load a JSONL corpus: one object per line with `_id`, `title`, `text`.
/// Blank lines are skipped; any other malformed line reports its number.
pub fn load_corpus(path: &Path) -> Result<CorpusStore> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(&display, e))?;
    let reader = BufReader::new(file);
    let mut docs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(&display, e))?;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.trim().is_empty() {
            continue;
        }
        let row: CorpusRow = serde_json::from_str(trimmed).map_err(|e| Error::Parse {
            path: display.clone(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        if row.text.trim().is_empty() {
            return Err(Error::Parse {
                path: display.clone(),
                line: idx + 1,
                message: format!("document {:?} has an empty body", row._id),
            });
        }
        docs.push(Document {
            id: row._id,
            title: row.title,
            body: row.text,
        });
    }
    CorpusStore::from_documents(docs)
}

/// Load a JSONL query set: one object per line with `_id`, `text`.
pub fn load_queries(path: &Path) -> Result<QuerySet> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(&display, e))?;
    let reader = BufReader::new(file);
    let mut queries = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(&display, e))?;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.trim().is_empty() {
            continue;
        }
        let row: QueryRow = serde_json::from_str(trimmed).map_err(|e| Error::Parse {
            path: display.clone(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        queries.push(Query {
            id: row._id,
            text: row.text,
        });
    }
    QuerySet::from_queries(queries)
}

/// Load a TSV judgments file: header `query-id<TAB>corpus-id<TAB>score`,
/// then one row per judgment. Rows referencing query ids absent from
/// `queries` are dropped and counted.
pub fn load_qrels(path: &Path, queries: &QuerySet) -> Result<(QRels, usize)> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(&display, e))?;
    let reader = BufReader::new(file);
    let mut qrels = QRels::new();
    let mut rejected = 0usize;
    let mut saw_header = false;
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(&display, e))?;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').collect();
        if !saw_header {
            if fields != ["query-id", "corpus-id", "score"] {
                return Err(Error::Parse {
                    path: display.clone(),
                    line: idx + 1,
                    message: "missing header `query-id\\tcorpus-id\\tscore`".into(),
                });
            }
            saw_header = true;
            continue;
        }
        if fields.len() != 3 {
            return Err(Error::Parse {
                path: display.clone(),
                line: idx + 1,
                message: format!("expected 3 tab-separated fields, got {}", fields.len()),
            });
        }
        let grade: u32 = fields[2].parse().map_err(|_| Error::Parse {
            path: display.clone(),
            line: idx + 1,
            message: format!("grade must be a non-negative integer, got {:?}", fields[2]),
        })?;
        if !queries.contains(fields[0]) {
            rejected += 1;
            continue;
        }
        qrels.insert(fields[0], fields[1], grade);
    }
    if !saw_header {
        return Err(Error::Parse {
            path: display,
            line: 1,
            message: "missing header `query-id\\tcorpus-id\\tscore`".into(),
        });
    }
    Ok((qrels, rejected))
}

/// Load queries and judgments together.
pub fn load_eval_set(queries_path: &Path, qrels_path: &Path) -> Result<EvalSet> {
    let queries = load_queries(queries_path)?;
    let (qrels, rejected_qrels_rows) = load_qrels(qrels_path, &queries)?;
    Ok(EvalSet {
        queries,
        qrels,
        rejected_qrels_rows,
    })
}

/// Lowercased surface tokens: maximal alphanumeric runs of the input.
pub fn surface_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// Deterministic token-id mapping shared by the lexical and dense paths.
/// Index 0 is the reserved out-of-vocabulary bucket; the remaining entries
/// are lexicographically sorted surface tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    terms: Vec<String>,
    by_term: HashMap<String, u32>,
}

impl Vocabulary {
    /// Build from an explicit term list (index 0 must be the reserved
    /// bucket). Used when restoring from a checkpoint.
    pub fn from_terms(terms: Vec<String>) -> Result<Vocabulary> {
        if terms.first().map(String::as_str) != Some(UNK_TOKEN) {
            return Err(Error::InvalidArgument(format!(
                "vocabulary must start with the reserved {UNK_TOKEN} entry"
            )));
        }
        let mut by_term = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if by_term.insert(t.clone(), i as u32).is_some() {
                return Err(Error::DuplicateId {
                    kind: "vocabulary term",
                    id: t.clone(),
                });
            }
        }
        Ok(Vocabulary { terms, by_term })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn id(&self, term: &str) -> u32 {
        self.by_term.get(term).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, term: &str) -> bool {
        self.by_term.contains_key(term)
    }

    pub fn term(&self, id: u32) -> Option<&str> {
        self.terms.get(id as usize).map(String::as_str)
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }
}

/// Collect every surface token with corpus frequency >= `min_freq`, sorted
/// lexicographically, behind the reserved bucket at index 0.
pub fn build_vocab(corpus: &CorpusStore, min_freq: usize) -> Result<Vocabulary> {
    if min_freq < 1 {
        return Err(Error::InvalidArgument(format!(
            "min_freq must be at least 1, got {min_freq}"
        )));
    }
    if corpus.is_empty() {
        return Err(Error::EmptyInput("corpus"));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for doc in corpus.iter() {
        for token in surface_tokens(&doc.effective_text()) {
            *counts.entry(token).or_insert(0) += 1;
        }
    }
    let mut kept: Vec<String> = counts
        .into_iter()
        .filter(|(_, n)| *n >= min_freq)
        .map(|(t, _)| t)
        .collect();
    kept.sort_unstable();
    let mut terms = Vec::with_capacity(kept.len() + 1);
    terms.push(UNK_TOKEN.to_string());
    terms.extend(kept);
    Vocabulary::from_terms(terms)
}

/// Whether a sequence was truncated to the query or the document limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenRole {
    Query,
    Document,
}

impl TokenRole {
    pub fn max_len(self, config: &TokenizerConfig) -> usize {
        match self {
            TokenRole::Query => config.max_query_len,
            TokenRole::Document => config.max_doc_len,
        }
    }
}

/// A normalized token-id sequence. `original_count` records the surface
/// token count before truncation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    pub tokens: Vec<u32>,
    pub original_count: usize,
}

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Map text to vocabulary ids, truncated to the role's maximum length.
/// Unknown surface tokens map to the reserved bucket.
pub fn tokenize(
    text: &str,
    role: TokenRole,
    config: &TokenizerConfig,
    vocab: &Vocabulary,
) -> TokenSeq {
    let surface = surface_tokens(text);
    let original_count = surface.len();
    let max_len = role.max_len(config);
    let tokens = surface
        .iter()
        .take(max_len)
        .map(|t| vocab.id(t))
        .collect();
    TokenSeq {
        tokens,
        original_count,
    }
}

/// Split on `.`, `!` or `?` followed by whitespace or end of text, keeping
/// the delimiter with the preceding sentence. Empty fragments are dropped.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut sentences = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    for (i, &(pos, c)) in chars.iter().enumerate() {
        if matches!(c, '.' | '!' | '?') {
            let at_end = i + 1 == chars.len();
            let before_space = chars.get(i + 1).is_some_and(|&(_, next)| next.is_whitespace());
            if at_end || before_space {
                let end = pos + c.len_utf8();
                let fragment = text[start..end].trim();
                if !fragment.is_empty() {
                    sentences.push(fragment.to_string());
                }
                start = end;
            }
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        sentences.push(tail.to_string());
    }
    sentences
}

/// A cloze-style training pair: one sentence as the query, the rest of the
/// passage (order preserved) as the document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IctPair {
    pub query_text: String,
    pub doc_text: String,
}

/// Draw a sentence uniformly as the query and join the remainder with
/// single spaces. Passages with fewer than two sentences yield no pair.
pub fn make_ict_pair<R: Rng>(passage: &str, rng: &mut R) -> Option<IctPair> {
    let sentences = split_sentences(passage);
    if sentences.len() < 2 {
        return None;
    }
    let k = rng.gen_range(0..sentences.len());
    let query_text = sentences[k].clone();
    let doc_text = sentences
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != k)
        .map(|(_, s)| s.as_str())
        .collect::<Vec<_>>()
        .join(" ");
    Some(IctPair {
        query_text,
        doc_text,
    })
}
