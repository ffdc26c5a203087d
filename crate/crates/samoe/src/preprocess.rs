//! Statement/table preprocessing: column pruning, template serialization,
//! whitespace/punctuation tokenization, and assembly of the padded joint
//! token sequence `[<s>, S, </s>, T, </s>, <pad>...]`.

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{ReasoningType, Subset, Table};
use crate::error::{Error, Result};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";

const STOPWORDS: [&str; 30] = [
    "a", "an", "the", "be", "is", "are", "was", "were", "been", "being", "of", "in", "on", "at",
    "to", "for", "with", "by", "from", "and", "or", "not", "no", "as", "it", "its", "this",
    "that", "these", "those",
];

/// Lowercase and split on whitespace and character-class boundaries.
/// A run of letters or of digits is one token; every punctuation character
/// stands alone, so each number in the text stays a single token.
pub fn tokenize(text: &str) -> Vec<String> {
    #[derive(PartialEq, Clone, Copy)]
    enum Class {
        Letter,
        Digit,
        Punct,
    }
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut current_class = None;
    for ch in text.chars().flat_map(|c| c.to_lowercase()) {
        if ch.is_whitespace() {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            current_class = None;
            continue;
        }
        let class = if ch.is_alphabetic() {
            Class::Letter
        } else if ch.is_ascii_digit() {
            Class::Digit
        } else {
            Class::Punct
        };
        let boundary = current_class != Some(class) || class == Class::Punct;
        if boundary && !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
        current.push(ch);
        current_class = Some(class);
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.contains(&token)
}

// ── vocabulary ───────────────────────────────────────────────────────

/// Token-to-id map with the four special tokens at fixed low ids.
#[derive(Clone, Debug)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    min_freq: usize,
}

impl Vocabulary {
    /// Build from a token corpus; tokens seen at least `min_freq` times enter
    /// the vocabulary, ordered by descending frequency then lexicographically.
    pub fn build<'a>(corpus: impl Iterator<Item = &'a str>, min_freq: usize) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for text in corpus {
            for tok in tokenize(text) {
                *counts.entry(tok).or_default() += 1;
            }
        }
        let mut entries: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(t, c)| *c >= min_freq && !is_special(t))
            .collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut tokens: Vec<String> = vec![
            BOS.to_string(),
            EOS.to_string(),
            PAD.to_string(),
            UNK.to_string(),
        ];
        tokens.extend(entries.into_iter().map(|(t, _)| t));
        Self::from_tokens(tokens, min_freq)
    }

    /// Rebuild from an id-ordered token list (cache sidecar).
    pub fn from_tokens(tokens: Vec<String>, min_freq: usize) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary {
            tokens,
            index,
            min_freq,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn min_freq(&self) -> usize {
        self.min_freq
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn bos(&self) -> u32 {
        0
    }
    pub fn eos(&self) -> u32 {
        1
    }
    pub fn pad(&self) -> u32 {
        2
    }
    pub fn unk(&self) -> u32 {
        3
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(3)
    }

    /// Tokenize and map to ids; out-of-vocabulary tokens become `<unk>`.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        tokenize(text).iter().map(|t| self.id(t)).collect()
    }
}

fn is_special(token: &str) -> bool {
    matches!(token, BOS | EOS | PAD | UNK)
}

// ── serialization ────────────────────────────────────────────────────

/// "row 1 is: h_1 is T_11; ...; h_n is T_1n. row 2 is: ..." — headers
/// repeated per row, cells joined by "; ", each row closed by ".".
pub fn serialize_table(table: &Table) -> String {
    let mut rows = Vec::with_capacity(table.n_rows());
    for (i, row) in table.rows.iter().enumerate() {
        let cells: Vec<String> = table
            .headers
            .iter()
            .zip(row)
            .map(|(h, v)| format!("{h} is {v}"))
            .collect();
        rows.push(format!("row {} is: {}.", i + 1, cells.join("; ")));
    }
    rows.join(" ")
}

// ── pruning ──────────────────────────────────────────────────────────

/// Longest word n-gram (stopword unigrams excluded) that `text` shares with
/// the statement token sequence; 0 when nothing matches.
fn match_score(text: &str, statement_ngrams: &HashSet<Vec<String>>) -> usize {
    let tokens = tokenize(text);
    let mut best = 0;
    for n in (1..=tokens.len()).rev() {
        if n <= best {
            break;
        }
        for window in tokens.windows(n) {
            if n == 1 && is_stopword(&window[0]) {
                continue;
            }
            if statement_ngrams.contains(window) {
                best = n;
                break;
            }
        }
    }
    best
}

fn statement_ngrams(statement: &str) -> HashSet<Vec<String>> {
    let tokens = tokenize(statement);
    let mut set = HashSet::new();
    for n in 1..=tokens.len() {
        for window in tokens.windows(n) {
            set.insert(window.to_vec());
        }
    }
    set
}

fn subtable(table: &Table, cols: &[usize]) -> Table {
    Table {
        table_id: table.table_id.clone(),
        headers: cols.iter().map(|&c| table.headers[c].clone()).collect(),
        rows: table
            .rows
            .iter()
            .map(|row| cols.iter().map(|&c| row[c].clone()).collect())
            .collect(),
    }
}

fn serialized_len(table: &Table, cols: &[usize]) -> usize {
    tokenize(&serialize_table(&subtable(table, cols))).len()
}

/// Column selection: entity matching picks every column whose header or cells
/// share a word n-gram with the statement, then a greedy pass appends the
/// remaining columns in original order while the serialized table stays
/// within `budget` tokens. All rows are kept, column order is preserved.
pub fn prune_table(table: &Table, statement: &str, budget: usize) -> Table {
    assert!(budget > 0, "prune budget must be positive");
    let ngrams = statement_ngrams(statement);
    let scores: Vec<usize> = (0..table.n_cols())
        .map(|c| {
            let mut s = match_score(&table.headers[c], &ngrams);
            for row in &table.rows {
                s = s.max(match_score(&row[c], &ngrams));
            }
            s
        })
        .collect();

    let matched: Vec<usize> = (0..table.n_cols()).filter(|&c| scores[c] > 0).collect();
    let mut selected: Vec<usize> = matched.clone();
    if !selected.is_empty() && serialized_len(table, &selected) > budget {
        // Trim matched columns by descending match quality until they fit.
        let mut ranked = matched.clone();
        ranked.sort_by(|&a, &b| scores[b].cmp(&scores[a]).then(a.cmp(&b)));
        selected.clear();
        for &c in &ranked {
            let mut trial = selected.clone();
            trial.push(c);
            trial.sort_unstable();
            if serialized_len(table, &trial) <= budget {
                selected = trial;
            }
        }
        if selected.is_empty() {
            // Worst case: the single best-matching column, even over budget.
            return subtable(table, &[ranked[0]]);
        }
    }

    // Greedy extension over unselected columns, original order, stop at the
    // first column that would overflow the budget.
    for c in 0..table.n_cols() {
        if selected.contains(&c) {
            continue;
        }
        let mut trial = selected.clone();
        trial.push(c);
        trial.sort_unstable();
        if serialized_len(table, &trial) <= budget {
            selected = trial;
        } else {
            break;
        }
    }
    if selected.is_empty() {
        selected.push(0);
    }
    selected.sort_unstable();
    subtable(table, &selected)
}

// ── assembly ─────────────────────────────────────────────────────────

/// Fixed-length joint input with separator bookkeeping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    /// True over non-pad positions.
    pub mask: Vec<bool>,
    /// Index of the `</s>` closing the statement segment.
    pub statement_end: usize,
    /// Index of the trailing `</s>` closing the table segment.
    pub table_end: usize,
}

/// Concatenate `[<s>, S, </s>, T, </s>]`, truncate the table tail to fit,
/// and pad to exactly `n`. The statement is never truncated.
pub fn assemble(
    statement_ids: &[u32],
    table_ids: &[u32],
    n: usize,
    vocab: &Vocabulary,
) -> Result<TokenSequence> {
    assert!(n >= 4, "assemble needs n >= 4");
    if statement_ids.len() > n - 3 {
        return Err(Error::StatementTooLong {
            len: statement_ids.len(),
            budget: n - 3,
        });
    }
    let table_budget = n - 3 - statement_ids.len();
    let table_take = table_ids.len().min(table_budget);
    let mut ids = Vec::with_capacity(n);
    ids.push(vocab.bos());
    ids.extend_from_slice(statement_ids);
    let statement_end = ids.len();
    ids.push(vocab.eos());
    ids.extend_from_slice(&table_ids[..table_take]);
    let table_end = ids.len();
    ids.push(vocab.eos());
    let used = ids.len();
    ids.resize(n, vocab.pad());
    let mask = (0..n).map(|i| i < used).collect();
    Ok(TokenSequence {
        ids,
        mask,
        statement_end,
        table_end,
    })
}

// ── end-to-end per-example preprocessing ─────────────────────────────

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct PreprocessConfig {
    pub max_len: usize,
    pub min_freq: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            max_len: 128,
            min_freq: 1,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_len < 8 {
            return Err(Error::Config("max_len must be at least 8".into()));
        }
        if self.min_freq == 0 {
            return Err(Error::Config("min_freq must be at least 1".into()));
        }
        Ok(())
    }
}

/// Prune, serialize, tokenize and assemble one (statement, table) pair.
/// The pruning budget is `max_len` minus the statement length minus the
/// three separator slots.
pub fn prepare(
    statement: &str,
    table: &Table,
    vocab: &Vocabulary,
    config: &PreprocessConfig,
) -> Result<TokenSequence> {
    let statement_tokens = tokenize(statement);
    if statement_tokens.len() > config.max_len.saturating_sub(3) {
        return Err(Error::StatementTooLong {
            len: statement_tokens.len(),
            budget: config.max_len.saturating_sub(3),
        });
    }
    let budget = config.max_len - 3 - statement_tokens.len();
    let pruned = prune_table(table, statement, budget.max(1));
    let statement_ids: Vec<u32> = statement_tokens.iter().map(|t| vocab.id(t)).collect();
    let table_ids = vocab.encode(&serialize_table(&pruned));
    assemble(&statement_ids, &table_ids, config.max_len, vocab)
}

/// Corpus for vocabulary building: statements plus serialized tables.
pub fn vocab_corpus(pairs: &[(String, Table)]) -> Vec<String> {
    let mut corpus = Vec::with_capacity(pairs.len() * 2);
    for (statement, table) in pairs {
        corpus.push(statement.clone());
        corpus.push(serialize_table(table));
    }
    corpus
}

// ── preprocessed cache ───────────────────────────────────────────────

/// Per-example metadata stored next to the fixed-length id records.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CachedMeta {
    pub example_id: String,
    pub label: u8,
    pub subset: Subset,
    pub reasoning_types: Vec<ReasoningType>,
    /// Trigger mass per reasoning type (count, comparative, superlative,
    /// negation) accumulated from the statement.
    pub delta: [f64; 4],
}

#[derive(Serialize, Deserialize)]
struct CacheSidecar {
    config_hash: String,
    config: PreprocessConfig,
    vocab_tokens: Vec<String>,
    splits: Vec<(String, Vec<CachedMeta>)>,
}

pub struct CachedSplit {
    pub name: String,
    pub meta: Vec<CachedMeta>,
    pub sequences: Vec<TokenSequence>,
}

pub struct Cache {
    pub config: PreprocessConfig,
    pub config_hash: String,
    pub vocab: Vocabulary,
    pub splits: Vec<CachedSplit>,
}

impl Cache {
    pub fn split(&self, name: &str) -> Result<&CachedSplit> {
        self.splits
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::Cache(format!("split '{name}' not in cache")))
    }
}

pub fn write_cache(dir: &Path, cache: &Cache) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let sidecar = CacheSidecar {
        config_hash: cache.config_hash.clone(),
        config: cache.config.clone(),
        vocab_tokens: cache.vocab.tokens().to_vec(),
        splits: cache
            .splits
            .iter()
            .map(|s| (s.name.clone(), s.meta.clone()))
            .collect(),
    };
    std::fs::write(
        dir.join("cache.json"),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    for split in &cache.splits {
        let mut file = std::fs::File::create(dir.join(format!("{}.ids.bin", split.name)))?;
        for seq in &split.sequences {
            debug_assert_eq!(seq.ids.len(), cache.config.max_len);
            for &id in &seq.ids {
                file.write_all(&id.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn read_cache(dir: &Path) -> Result<Cache> {
    let sidecar_path = dir.join("cache.json");
    if !sidecar_path.exists() {
        return Err(Error::MissingArtifact(format!(
            "preprocess cache {}",
            sidecar_path.display()
        )));
    }
    let sidecar: CacheSidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path)?)?;
    let vocab = Vocabulary::from_tokens(sidecar.vocab_tokens, sidecar.config.min_freq);
    let n = sidecar.config.max_len;
    let pad = vocab.pad();
    let eos = vocab.eos();
    let mut splits = Vec::new();
    for (name, meta) in sidecar.splits {
        let mut bytes = Vec::new();
        std::fs::File::open(dir.join(format!("{name}.ids.bin")))?.read_to_end(&mut bytes)?;
        if bytes.len() != meta.len() * n * 4 {
            return Err(Error::Cache(format!(
                "{name}.ids.bin holds {} bytes, expected {}",
                bytes.len(),
                meta.len() * n * 4
            )));
        }
        let mut sequences = Vec::with_capacity(meta.len());
        for rec in bytes.chunks_exact(n * 4) {
            let ids: Vec<u32> = rec
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes(c.try_into().expect("chunk of 4")))
                .collect();
            let mask: Vec<bool> = ids.iter().map(|&i| i != pad).collect();
            let statement_end = ids
                .iter()
                .position(|&i| i == eos)
                .ok_or_else(|| Error::Cache("record lacks a statement separator".into()))?;
            let table_end = ids
                .iter()
                .rposition(|&i| i == eos)
                .ok_or_else(|| Error::Cache("record lacks a table separator".into()))?;
            sequences.push(TokenSequence {
                ids,
                mask,
                statement_end,
                table_end,
            });
        }
        splits.push(CachedSplit {
            name,
            meta,
            sequences,
        });
    }
    Ok(Cache {
        config: sidecar.config,
        config_hash: sidecar.config_hash,
        vocab,
        splits,
    })
}
