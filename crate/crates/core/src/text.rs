//! Document cleaning, tokenization, vocabularies and the entity-corpus model.
//!
//! An entity (celebrity or brand) owns an ordered list of cleaned documents:
//! encyclopedia entries first, then news in ingestion order. Tokenization is
//! script-agnostic: runs of letters/digits form words in spaced scripts, and
//! CJK ideographs or kana become one token per character.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const CLS_ID: usize = 2;
pub const SEP_ID: usize = 3;
pub const NUM_SPECIALS: usize = 4;

const SPECIALS: [&str; NUM_SPECIALS] = [PAD, UNK, CLS, SEP];

#[derive(Debug, Error)]
pub enum TextError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: unknown entity_type {value:?} (expected \"celebrity\" or \"brand\")")]
    UnknownEntityType { line: usize, value: String },
    #[error("line {line}: unknown source_kind {value:?} (expected \"encyclopedia\" or \"news\")")]
    UnknownSourceKind { line: usize, value: String },
    #[error("line {line}: entity {entity_id} was previously declared as {previous:?}")]
    ConflictingEntityType {
        line: usize,
        entity_id: String,
        previous: EntityType,
    },
    #[error("entity {0} has no documents left after cleaning")]
    EmptyEntity(String),
    #[error("vocabulary is empty: no token reaches min_count {0}")]
    EmptyVocabulary(usize),
    #[error("min_count must be at least 1")]
    InvalidMinCount,
    #[error("token id {id} out of range for vocabulary of size {size}")]
    IdOutOfRange { id: usize, size: usize },
}

pub type Result<T> = std::result::Result<T, TextError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Encyclopedia,
    News,
}

impl SourceKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "encyclopedia" => Some(Self::Encyclopedia),
            "news" => Some(Self::News),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityType {
    Celebrity,
    Brand,
}

impl EntityType {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "celebrity" => Some(Self::Celebrity),
            "brand" => Some(Self::Brand),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Celebrity => "celebrity",
            Self::Brand => "brand",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub source_kind: SourceKind,
    pub raw_text: String,
    pub tokens: Vec<String>,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, source_kind: SourceKind, raw_text: impl Into<String>, stopwords: &StopWords) -> Self {
        let raw_text = raw_text.into();
        let tokens = clean_text(&raw_text, stopwords);
        Self {
            doc_id: doc_id.into(),
            source_kind,
            raw_text,
            tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityCorpus {
    pub entity_id: String,
    pub entity_type: EntityType,
    pub documents: Vec<Document>,
}

impl EntityCorpus {
    /// Drops documents that cleaned to nothing and orders encyclopedia
    /// entries before news (stable). Fails if nothing survives.
    pub fn new(entity_id: impl Into<String>, entity_type: EntityType, documents: Vec<Document>) -> Result<Self> {
        let entity_id = entity_id.into();
        let mut documents: Vec<Document> = documents.into_iter().filter(|d| !d.tokens.is_empty()).collect();
        if documents.is_empty() {
            return Err(TextError::EmptyEntity(entity_id));
        }
        documents.sort_by_key(|d| d.source_kind);
        Ok(Self {
            entity_id,
            entity_type,
            documents,
        })
    }
}

/// Stopword set; one token per line on disk, blank lines ignored.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StopWords(HashSet<String>);

impl StopWords {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_words<I: IntoIterator<Item = S>, S: AsRef<str>>(words: I) -> Self {
        Self(words.into_iter().map(|w| w.as_ref().trim().to_lowercase()).filter(|w| !w.is_empty()).collect())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| TextError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(Self::from_words(text.lines()))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF      // hiragana, katakana
        | 0x3400..=0x4DBF    // CJK ext A
        | 0x4E00..=0x9FFF    // CJK unified
        | 0xF900..=0xFAFF    // compatibility ideographs
        | 0x20000..=0x2FFFF) // ext B and beyond
}

/// Lowercases, strips control characters, splits on whitespace and
/// punctuation, emits CJK characters as single tokens, removes stopwords.
pub fn clean_text(raw: &str, stopwords: &StopWords) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    let flush = |word: &mut String, tokens: &mut Vec<String>| {
        if !word.is_empty() {
            let w = std::mem::take(word);
            if !stopwords.contains(&w) {
                tokens.push(w);
            }
        }
    };
    for c in raw.chars() {
        if c.is_control() && !c.is_whitespace() {
            continue;
        }
        if is_cjk(c) {
            flush(&mut word, &mut tokens);
            word.push(c);
            flush(&mut word, &mut tokens);
        } else if c.is_alphanumeric() {
            word.extend(c.to_lowercase().filter(|l| l.is_alphanumeric()));
        } else {
            flush(&mut word, &mut tokens);
        }
    }
    flush(&mut word, &mut tokens);
    tokens
}

/// Splits raw text into sentences on terminal punctuation (Latin and CJK).
/// Empty segments are dropped; terminators stay with their sentence.
pub fn split_sentences(raw: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, c) in raw.char_indices() {
        if matches!(c, '.' | '!' | '?' | '。' | '！' | '？' | '\n') {
            let end = i + c.len_utf8();
            let s = raw[start..end].trim();
            if s.chars().any(char::is_alphanumeric) {
                out.push(s);
            }
            start = end;
        }
    }
    let tail = raw[start..].trim();
    if tail.chars().any(char::is_alphanumeric) {
        out.push(tail);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    token_to_id: HashMap<String, usize>,
    id_to_token: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    tokens: Vec<String>,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        Self::from_tokens(r.tokens.into_iter().skip(NUM_SPECIALS))
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        Self { tokens: v.id_to_token }
    }
}

impl Vocabulary {
    /// Specials at ids 0–3 followed by `tokens` in the given order;
    /// duplicates and special strings are skipped.
    pub fn from_tokens<I: IntoIterator<Item = S>, S: Into<String>>(tokens: I) -> Self {
        let mut vocab = Self {
            token_to_id: HashMap::new(),
            id_to_token: Vec::new(),
        };
        for t in SPECIALS.iter().map(|s| s.to_string()).chain(tokens.into_iter().map(Into::into)) {
            if !vocab.token_to_id.contains_key(&t) {
                vocab.token_to_id.insert(t.clone(), vocab.id_to_token.len());
                vocab.id_to_token.push(t);
            }
        }
        vocab
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == NUM_SPECIALS
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    pub fn is_special(id: usize) -> bool {
        id < NUM_SPECIALS
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref()).unwrap_or(UNK_ID)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Result<Vec<String>> {
        ids.iter()
            .map(|&id| {
                self.token(id).map(str::to_owned).ok_or(TextError::IdOutOfRange { id, size: self.len() })
            })
            .collect()
    }
}

/// Tokens with frequency ≥ `min_count`, ordered by (frequency desc, token).
pub fn build_vocabulary(corpora: &[EntityCorpus], min_count: usize) -> Result<Vocabulary> {
    if min_count == 0 {
        return Err(TextError::InvalidMinCount);
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for tok in corpora.iter().flat_map(|c| &c.documents).flat_map(|d| &d.tokens) {
        *counts.entry(tok.as_str()).or_default() += 1;
    }
    let mut kept: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, n)| n >= min_count).collect();
    if kept.is_empty() {
        return Err(TextError::EmptyVocabulary(min_count));
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Ok(Vocabulary::from_tokens(kept.into_iter().map(|(t, _)| t)))
}

/// One line of the corpus JSON-lines file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub entity_id: String,
    pub entity_type: String,
    pub source_kind: String,
    pub doc_id: String,
    pub text: String,
}

/// One line of the pair-label JSON-lines file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairLabel {
    pub celebrity_id: String,
    pub brand_id: String,
    pub label: u8,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|source| TextError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Reads a corpus file and groups its records into entities (first-seen order).
pub fn load_corpus(path: &Path, stopwords: &StopWords) -> Result<Vec<EntityCorpus>> {
    parse_corpus(open(path)?, stopwords)
}

pub fn parse_corpus(reader: impl Read, stopwords: &StopWords) -> Result<Vec<EntityCorpus>> {
    let mut order: Vec<String> = Vec::new();
    let mut grouped: HashMap<String, (EntityType, Vec<Document>)> = HashMap::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| TextError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CorpusRecord = serde_json::from_str(&line).map_err(|e| TextError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        let entity_type = EntityType::parse(&rec.entity_type).ok_or_else(|| TextError::UnknownEntityType {
            line: line_no,
            value: rec.entity_type.clone(),
        })?;
        let source_kind = SourceKind::parse(&rec.source_kind).ok_or_else(|| TextError::UnknownSourceKind {
            line: line_no,
            value: rec.source_kind.clone(),
        })?;
        let doc = Document::new(rec.doc_id, source_kind, rec.text, stopwords);
        match grouped.get_mut(&rec.entity_id) {
            Some((previous, docs)) => {
                if *previous != entity_type {
                    return Err(TextError::ConflictingEntityType {
                        line: line_no,
                        entity_id: rec.entity_id,
                        previous: *previous,
                    });
                }
                docs.push(doc);
            }
            None => {
                order.push(rec.entity_id.clone());
                grouped.insert(rec.entity_id, (entity_type, vec![doc]));
            }
        }
    }
    order
        .into_iter()
        .map(|id| {
            let (ty, docs) = grouped.remove(&id).expect("grouped entity");
            EntityCorpus::new(id, ty, docs)
        })
        .collect()
}

pub fn load_pairs(path: &Path) -> Result<Vec<PairLabel>> {
    parse_pairs(open(path)?)
}

pub fn parse_pairs(reader: impl Read) -> Result<Vec<PairLabel>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| TextError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let pair: PairLabel = serde_json::from_str(&line).map_err(|e| TextError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        if pair.label > 1 {
            return Err(TextError::Malformed {
                line: line_no,
                message: format!("label must be 0 or 1, got {}", pair.label),
            });
        }
        out.push(pair);
    }
    Ok(out)
}

/// Serializes records as JSON-lines (one object per line, trailing newline).
pub fn to_json_lines<T: Serialize>(records: &[T]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}
