//! Embedding table and nearest-neighbour lookup by cosine similarity.
//!
//! File format: a `dim=<D>` header line, then one row per line,
//! `key<TAB>f1 f2 ... fD`. Keys of the form `<concept_id>:<n>` are concept
//! entries (`n` = 0 for the fully specified name, 1.. for synonyms in file
//! order); any other key is a query string with a precomputed vector.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use super::{split_tag_suffix, ConceptId, Terminology, TerminologyError};

/// Produces query vectors for free text.
pub trait TextEmbedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f64>, TerminologyError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntryKey {
    pub concept_id: ConceptId,
    pub index: usize,
}

impl fmt::Display for EntryKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.concept_id, self.index)
    }
}

impl FromStr for EntryKey {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        let (id, index) = s.split_once(':').ok_or(())?;
        if id.is_empty() || !id.bytes().all(|b| b.is_ascii_digit()) || !index.bytes().all(|b| b.is_ascii_digit()) {
            return Err(());
        }
        Ok(EntryKey { concept_id: id.parse().map_err(|_| ())?, index: index.parse().map_err(|_| ())? })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    pub key: EntryKey,
    /// As loaded.
    pub vector: Vec<f64>,
    /// `vector` scaled to unit length.
    pub unit: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dimension: usize,
    rows: Vec<EmbeddingRow>,
}

fn unit(vector: Vec<f64>, label: &str) -> Result<Vec<f64>, TerminologyError> {
    let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(TerminologyError::ZeroVector(label.to_string()));
    }
    Ok(vector.into_iter().map(|x| x / norm).collect())
}

/// Plain cosine similarity; `None` when either vector has zero length.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (na > 0.0 && nb > 0.0).then(|| dot / (na * nb))
}

impl EmbeddingTable {
    pub fn new(dimension: usize) -> Self {
        EmbeddingTable { dimension, rows: Vec::new() }
    }

    /// Adds a row; rows are kept sorted by key and normalized copies cached.
    pub fn insert(&mut self, key: EntryKey, vector: Vec<f64>) -> Result<(), TerminologyError> {
        if vector.len() != self.dimension {
            return Err(TerminologyError::DimensionMismatch { expected: self.dimension, actual: vector.len() });
        }
        let row = EmbeddingRow { key, unit: unit(vector.clone(), &key.to_string())?, vector };
        match self.rows.binary_search_by(|r| r.key.cmp(&key)) {
            Ok(pos) => self.rows[pos] = row,
            Err(pos) => self.rows.insert(pos, row),
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn rows(&self) -> &[EmbeddingRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Drops rows whose concept is not wanted (e.g. inactive or unknown).
    pub fn retain_concepts(&mut self, mut keep: impl FnMut(ConceptId) -> bool) {
        self.rows.retain(|r| keep(r.key.concept_id));
    }

    /// Highest-cosine entry for `query`; ties go to the smallest concept ID.
    pub fn nearest(&self, query: &[f64]) -> Result<(ConceptId, f64), TerminologyError> {
        if self.rows.is_empty() {
            return Err(TerminologyError::EmptyTable);
        }
        if query.len() != self.dimension {
            return Err(TerminologyError::DimensionMismatch { expected: self.dimension, actual: query.len() });
        }
        let query = unit(query.to_vec(), "query")?;
        let mut best: Option<(ConceptId, f64)> = None;
        for row in &self.rows {
            let sim: f64 = row.unit.iter().zip(&query).map(|(a, b)| a * b).sum();
            let better = match best {
                None => true,
                Some((id, s)) => sim > s || (sim == s && row.key.concept_id < id),
            };
            if better {
                best = Some((row.key.concept_id, sim));
            }
        }
        let (id, sim) = best.expect("table is nonempty");
        Ok((id, sim.clamp(-1.0, 1.0)))
    }

    pub fn load(path: &Path) -> Result<(EmbeddingTable, PrecomputedEmbedder), TerminologyError> {
        let file =
            File::open(path).map_err(|source| TerminologyError::Io { path: path.display().to_string(), source })?;
        Self::read(file, &path.display().to_string())
    }

    /// Parses an embedding file into concept rows and query vectors.
    pub fn read<R: Read>(reader: R, origin: &str) -> Result<(EmbeddingTable, PrecomputedEmbedder), TerminologyError> {
        let parse_err =
            |line: usize, message: String| TerminologyError::Parse { path: origin.to_string(), line, message };
        let io_err = |source| TerminologyError::Io { path: origin.to_string(), source };
        let mut lines = BufReader::new(reader).lines();
        let header = lines.next().ok_or_else(|| parse_err(1, "missing dim header".into()))?.map_err(io_err)?;
        let dimension: usize = header
            .trim()
            .strip_prefix("dim=")
            .and_then(|d| d.trim().parse().ok())
            .filter(|&d| d > 0)
            .ok_or_else(|| parse_err(1, format!("expected dim=<D>, found {header:?}")))?;
        let mut table = EmbeddingTable::new(dimension);
        let mut queries = PrecomputedEmbedder::new(dimension);
        let mut seen = HashMap::new();
        for (idx, line) in lines.enumerate() {
            let lineno = idx + 2;
            let line = line.map_err(io_err)?;
            if line.trim().is_empty() {
                continue;
            }
            let (key, values) = line.split_once('\t').ok_or_else(|| parse_err(lineno, "missing tab".into()))?;
            let vector = values
                .split_whitespace()
                .map(|v| v.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| parse_err(lineno, format!("bad float: {e}")))?;
            if vector.len() != dimension {
                return Err(parse_err(lineno, format!("expected {dimension} values, found {}", vector.len())));
            }
            if let Some(first) = seen.insert(key.trim().to_string(), lineno) {
                return Err(parse_err(lineno, format!("key {key:?} already defined on line {first}")));
            }
            let result = match key.parse::<EntryKey>() {
                Ok(entry) => table.insert(entry, vector),
                Err(()) => queries.insert(key, vector),
            };
            result.map_err(|e| parse_err(lineno, e.to_string()))?;
        }
        Ok((table, queries))
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "dim={}", self.dimension)?;
        for row in &self.rows {
            write_row(&mut out, &row.key.to_string(), &row.vector)?;
        }
        Ok(())
    }

    /// Embeds every name of every active concept with `embedder`.
    pub fn from_terminology(
        terminology: &Terminology,
        embedder: &dyn TextEmbedder,
        dimension: usize,
    ) -> Result<EmbeddingTable, TerminologyError> {
        let mut table = EmbeddingTable::new(dimension);
        for concept in terminology.concepts().filter(|c| c.active) {
            for (index, name) in concept.names().enumerate() {
                let text = split_tag_suffix(name).0;
                table.insert(EntryKey { concept_id: concept.concept_id, index }, embedder.embed(text)?)?;
            }
        }
        Ok(table)
    }
}

fn write_row<W: Write>(out: &mut W, key: &str, vector: &[f64]) -> std::io::Result<()> {
    let values: Vec<String> = vector.iter().map(|v| format!("{v}")).collect();
    writeln!(out, "{key}\t{}", values.join(" "))
}

/// Query vectors looked up by the exact (trimmed) query text.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PrecomputedEmbedder {
    dimension: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl PrecomputedEmbedder {
    pub fn new(dimension: usize) -> Self {
        PrecomputedEmbedder { dimension, vectors: BTreeMap::new() }
    }

    pub fn insert(&mut self, text: &str, vector: Vec<f64>) -> Result<(), TerminologyError> {
        if vector.len() != self.dimension {
            return Err(TerminologyError::DimensionMismatch { expected: self.dimension, actual: vector.len() });
        }
        self.vectors.insert(text.trim().to_string(), vector);
        Ok(())
    }

    /// Adds all query vectors from another set; later entries win.
    pub fn extend(&mut self, other: PrecomputedEmbedder) -> Result<(), TerminologyError> {
        for (text, vector) in other.vectors {
            self.insert(&text, vector)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "dim={}", self.dimension)?;
        for (text, vector) in &self.vectors {
            write_row(&mut out, text, vector)?;
        }
        Ok(())
    }
}

impl TextEmbedder for PrecomputedEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, TerminologyError> {
        self.vectors.get(text.trim()).cloned().ok_or_else(|| TerminologyError::MissingQueryVector(text.to_string()))
    }
}

/// Signed feature hashing of character trigrams and whole words.
///
/// Not a semantic model; spelling variants land close together, which is
/// what synthetic fixtures and tests need.
#[derive(Debug, Clone, Copy)]
pub struct HashingEmbedder {
    pub dimension: usize,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

impl TextEmbedder for HashingEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, TerminologyError> {
        let mut v = vec![0.0; self.dimension];
        let lowered = text.to_lowercase();
        let mut add = |feature: &str, weight: f64| {
            let h = fnv1a(feature.as_bytes());
            let slot = (h % self.dimension as u64) as usize;
            let sign = if (h >> 63) == 0 { 1.0 } else { -1.0 };
            v[slot] += sign * weight;
        };
        for word in lowered.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
            add(&format!("w:{word}"), 1.0);
            let padded: Vec<char> = format!("^{word}$").chars().collect();
            for tri in padded.windows(3) {
                add(&tri.iter().collect::<String>(), 0.5);
            }
        }
        if v.iter().all(|x| *x == 0.0) {
            return Err(TerminologyError::ZeroVector(text.to_string()));
        }
        Ok(v)
    }
}

/// Embeds query strings into the query-row form of the file format. Blank
/// strings, duplicates and strings that look like entry keys are skipped.
pub fn embed_queries<'a>(
    embedder: &dyn TextEmbedder,
    dimension: usize,
    texts: impl IntoIterator<Item = &'a str>,
) -> Result<PrecomputedEmbedder, TerminologyError> {
    let mut out = PrecomputedEmbedder::new(dimension);
    let mut seen: HashMap<String, ()> = HashMap::new();
    for text in texts {
        let t = text.trim();
        if t.is_empty() || t.parse::<EntryKey>().is_ok() || seen.insert(t.to_string(), ()).is_some() {
            continue;
        }
        out.insert(t, embedder.embed(t)?)?;
    }
    Ok(out)
}
