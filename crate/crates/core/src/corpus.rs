//! Source-document corpus: ingestion, normalization and persistence.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::digest::{sha256_hex, sha256_parts};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Unreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record at {path}:{line}: {reason}")]
    Malformed {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("duplicate document id {0:?} with differing content")]
    DuplicateId(String),
    #[error("zero valid documents in {0}")]
    Empty(PathBuf),
    #[error("cannot write {path}: {source}")]
    Unwritable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    Jsonl,
    TextDir,
}

/// One ingested source article.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub body: String,
    pub source_uri: String,
    pub published_at: Option<String>,
    pub checksum: String,
}

impl Document {
    /// Builds a document, normalizing title and body. Returns `None` when the
    /// normalized body is empty.
    pub fn new(
        id: impl Into<String>,
        title: &str,
        body: &str,
        source_uri: impl Into<String>,
        published_at: Option<String>,
    ) -> Option<Self> {
        let body = normalize_text(body);
        if body.is_empty() {
            return None;
        }
        Some(Self {
            id: id.into(),
            title: normalize_text(title),
            checksum: body_checksum(&body),
            body,
            source_uri: source_uri.into(),
            published_at,
        })
    }
}

/// Checksum of an already-normalized body.
pub fn body_checksum(body: &str) -> String {
    sha256_hex(body.as_bytes())
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    id: String,
    #[serde(default)]
    title: String,
    body: String,
    #[serde(default)]
    source_uri: String,
    #[serde(default)]
    published_at: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub document_count: usize,
    pub input_records: usize,
    pub duplicates_dropped: usize,
    pub source: String,
    pub format: InputFormat,
    pub corpus_checksum: String,
    pub tool_version: String,
}

/// Documents sorted by id, unique by id and by body checksum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusStore {
    documents: Vec<Document>,
    manifest: CorpusManifest,
}

impl CorpusStore {
    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn manifest(&self) -> &CorpusManifest {
        &self.manifest
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.documents
            .binary_search_by(|d| d.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.documents[i])
    }

    /// Checksum over the ordered (id, body checksum) sequence.
    pub fn checksum(&self) -> &str {
        &self.manifest.corpus_checksum
    }

    fn assemble(
        records: Vec<Document>,
        source: &Path,
        format: InputFormat,
    ) -> Result<Self, CorpusError> {
        let input_records = records.len();
        let mut by_id: BTreeMap<String, Document> = BTreeMap::new();
        for doc in records {
            match by_id.get(&doc.id) {
                Some(existing) if existing.checksum != doc.checksum => {
                    return Err(CorpusError::DuplicateId(doc.id));
                }
                Some(_) => {}
                None => {
                    by_id.insert(doc.id.clone(), doc);
                }
            }
        }
        // first id (in sorted order) wins for a given body
        let mut seen = std::collections::HashSet::new();
        let documents: Vec<Document> = by_id
            .into_values()
            .filter(|d| seen.insert(d.checksum.clone()))
            .collect();
        if documents.is_empty() {
            return Err(CorpusError::Empty(source.to_path_buf()));
        }
        let corpus_checksum = sha256_parts(
            documents
                .iter()
                .flat_map(|d| [d.id.as_str(), d.checksum.as_str()]),
        );
        let manifest = CorpusManifest {
            document_count: documents.len(),
            input_records,
            duplicates_dropped: input_records - documents.len(),
            source: source.display().to_string(),
            format,
            corpus_checksum,
            tool_version: crate::TOOL_VERSION.to_string(),
        };
        Ok(Self {
            documents,
            manifest,
        })
    }

    /// Writes one document per line, sorted by id.
    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let mut out = String::new();
        for doc in &self.documents {
            out.push_str(&serde_json::to_string(doc).expect("document serializes"));
            out.push('\n');
        }
        write_file(path, out.as_bytes())
    }

    /// Reads a store previously written by [`CorpusStore::save`] (or any corpus JSONL).
    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        ingest_documents(path, InputFormat::Jsonl)
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CorpusError> {
    let wrap = |source| CorpusError::Unwritable {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(wrap)?;
    }
    let mut file = fs::File::create(path).map_err(wrap)?;
    file.write_all(bytes).map_err(wrap)
}

pub fn ingest_documents(path: &Path, format: InputFormat) -> Result<CorpusStore, CorpusError> {
    let records = match format {
        InputFormat::Jsonl => read_jsonl(path)?,
        InputFormat::TextDir => read_text_dir(path)?,
    };
    CorpusStore::assemble(records, path, format)
}

fn unreadable(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Unreadable {
        path: path.to_path_buf(),
        source,
    }
}

fn read_jsonl(path: &Path) -> Result<Vec<Document>, CorpusError> {
    let file = fs::File::open(path).map_err(unreadable(path))?;
    let mut docs = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(unreadable(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| CorpusError::Malformed {
            path: path.to_path_buf(),
            line: idx + 1,
            reason,
        };
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        if raw.id.trim().is_empty() {
            return Err(malformed("empty id".into()));
        }
        let doc = Document::new(
            raw.id,
            &raw.title,
            &raw.body,
            raw.source_uri,
            raw.published_at,
        )
        .ok_or_else(|| malformed("empty body after normalization".into()))?;
        docs.push(doc);
    }
    Ok(docs)
}

fn read_text_dir(path: &Path) -> Result<Vec<Document>, CorpusError> {
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(unreadable(path))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "txt"))
        .collect();
    files.sort();
    let mut docs = Vec::with_capacity(files.len());
    for file in files {
        let text = fs::read_to_string(&file).map_err(unreadable(&file))?;
        let text = text.replace("\r\n", "\n");
        let (title, body) = text.split_once('\n').unwrap_or((text.as_str(), ""));
        let id = file
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let name = file
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let doc = Document::new(id, title, body, name, None).ok_or_else(|| {
            CorpusError::Malformed {
                path: file.clone(),
                line: 2,
                reason: "empty body after normalization".into(),
            }
        })?;
        docs.push(doc);
    }
    Ok(docs)
}

/// Canonical text form: NFC, LF newlines, whitespace runs collapsed.
///
/// A whitespace run containing two or more newlines becomes a paragraph
/// break (`"\n\n"`), one newline stays `"\n"`, anything else becomes a
/// single space.
pub fn normalize_text(raw: &str) -> String {
    let composed: String = raw.replace("\r\n", "\n").replace('\r', "\n").nfc().collect();
    let mut out = String::with_capacity(composed.len());
    let mut newlines = 0usize;
    let mut in_ws = false;
    for ch in composed.chars() {
        if ch.is_whitespace() {
            in_ws = true;
            if ch == '\n' {
                newlines += 1;
            }
            continue;
        }
        if in_ws && !out.is_empty() {
            out.push_str(match newlines {
                0 => " ",
                1 => "\n",
                _ => "\n\n",
            });
        }
        in_ws = false;
        newlines = 0;
        out.push(ch);
    }
    out
}
