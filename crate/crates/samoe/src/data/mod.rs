//! Dataset model and on-disk formats.
//!
//! Examples live in JSON Lines files; evidence tables live one file per table
//! under a tables directory, either TSV with a header line or the
//! '#'-delimited single-line-per-row layout used by TabFact dumps.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod synth;

/// Rectangular evidence table: header strings plus rows of cell strings.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table {
    pub table_id: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn validate(&self) -> Result<()> {
        if self.headers.is_empty() {
            return Err(Error::Dataset {
                example_id: self.table_id.clone(),
                message: "table has no columns".into(),
            });
        }
        if self.rows.is_empty() {
            return Err(Error::Dataset {
                example_id: self.table_id.clone(),
                message: "table has no rows".into(),
            });
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.headers.len() {
                return Err(Error::Dataset {
                    example_id: self.table_id.clone(),
                    message: format!(
                        "ragged row {}: {} cells, expected {}",
                        i,
                        row.len(),
                        self.headers.len()
                    ),
                });
            }
        }
        Ok(())
    }

    pub fn n_cols(&self) -> usize {
        self.headers.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Column index by header name.
    pub fn col_index(&self, header: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == header)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    Simple,
    Complex,
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, Hash)]
#[serde(rename_all = "lowercase")]
pub enum ReasoningType {
    Count,
    Comparative,
    Superlative,
    Negation,
    None,
}

impl ReasoningType {
    pub const ALL: [ReasoningType; 5] = [
        ReasoningType::Count,
        ReasoningType::Comparative,
        ReasoningType::Superlative,
        ReasoningType::Negation,
        ReasoningType::None,
    ];

    /// Canonical position: the four trigger types first, "none" last.
    pub fn index(&self) -> usize {
        match self {
            ReasoningType::Count => 0,
            ReasoningType::Comparative => 1,
            ReasoningType::Superlative => 2,
            ReasoningType::Negation => 3,
            ReasoningType::None => 4,
        }
    }
}

/// One labeled statement against a table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Example {
    pub example_id: String,
    pub table_id: String,
    pub statement: String,
    pub label: u8,
    #[serde(default = "default_subset")]
    pub subset: Subset,
    #[serde(default = "default_reasoning")]
    pub reasoning_types: BTreeSet<ReasoningType>,
}

fn default_subset() -> Subset {
    Subset::Unknown
}

fn default_reasoning() -> BTreeSet<ReasoningType> {
    BTreeSet::from([ReasoningType::None])
}

impl Example {
    pub fn validate(&self) -> Result<()> {
        if self.label > 1 {
            return Err(Error::Dataset {
                example_id: self.example_id.clone(),
                message: format!("invalid label {}", self.label),
            });
        }
        if self.reasoning_types.is_empty() {
            return Err(Error::Dataset {
                example_id: self.example_id.clone(),
                message: "empty reasoning_types".into(),
            });
        }
        Ok(())
    }
}

// ── table files ──────────────────────────────────────────────────────

/// TSV with a header line.
pub fn load_table_tsv(path: &Path, table_id: &str) -> Result<Table> {
    let content = fs::read_to_string(path)?;
    let mut lines = content.lines();
    let headers: Vec<String> = match lines.next() {
        Some(h) => h.split('\t').map(str::to_string).collect(),
        None => Vec::new(),
    };
    let rows: Vec<Vec<String>> = lines
        .filter(|l| !l.is_empty())
        .map(|l| l.split('\t').map(str::to_string).collect())
        .collect();
    let table = Table {
        table_id: table_id.to_string(),
        headers,
        rows,
    };
    table.validate()?;
    Ok(table)
}

/// TabFact-style: one line per row, cells '#'-delimited, first line headers.
pub fn load_table_tabfact(path: &Path, table_id: &str) -> Result<Table> {
    let content = fs::read_to_string(path)?;
    let mut lines = content.lines();
    let headers: Vec<String> = match lines.next() {
        Some(h) => h.split('#').map(str::to_string).collect(),
        None => Vec::new(),
    };
    let rows: Vec<Vec<String>> = lines
        .filter(|l| !l.is_empty())
        .map(|l| l.split('#').map(str::to_string).collect())
        .collect();
    let table = Table {
        table_id: table_id.to_string(),
        headers,
        rows,
    };
    table.validate()?;
    Ok(table)
}

/// Looks up `<table_id>.tsv` first, then the TabFact-style `<table_id>.csv`.
pub fn load_table(tables_dir: &Path, table_id: &str) -> Result<Table> {
    let tsv = tables_dir.join(format!("{table_id}.tsv"));
    if tsv.exists() {
        return load_table_tsv(&tsv, table_id);
    }
    let csv = tables_dir.join(format!("{table_id}.csv"));
    if csv.exists() {
        return load_table_tabfact(&csv, table_id);
    }
    Err(Error::TableNotFound(table_id.to_string()))
}

pub fn write_table_tsv(dir: &Path, table: &Table) -> Result<()> {
    for cell in table.headers.iter().chain(table.rows.iter().flatten()) {
        if cell.contains('\t') || cell.contains('\n') {
            return Err(Error::Dataset {
                example_id: table.table_id.clone(),
                message: format!("cell {cell:?} contains a TSV delimiter"),
            });
        }
    }
    let mut out = String::new();
    out.push_str(&table.headers.join("\t"));
    out.push('\n');
    for row in &table.rows {
        out.push_str(&row.join("\t"));
        out.push('\n');
    }
    fs::write(dir.join(format!("{}.tsv", table.table_id)), out)?;
    Ok(())
}

// ── example files ────────────────────────────────────────────────────

pub fn load_examples_jsonl(path: &Path) -> Result<Vec<Example>> {
    let file = fs::File::open(path)?;
    let mut examples = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: Example = serde_json::from_str(&line).map_err(|e| Error::Dataset {
            example_id: format!("{}:{}", path.display(), lineno + 1),
            message: e.to_string(),
        })?;
        ex.validate()?;
        examples.push(ex);
    }
    Ok(examples)
}

pub fn write_examples_jsonl(path: &Path, examples: &[Example]) -> Result<()> {
    let mut file = fs::File::create(path)?;
    for ex in examples {
        serde_json::to_writer(&mut file, ex)?;
        file.write_all(b"\n")?;
    }
    Ok(())
}

/// Load an example file and resolve every referenced table.
///
/// Errors carry the offending example id; tables are cached so shared
/// evidence is read once.
pub fn load_dataset(examples_path: &Path, tables_dir: &Path) -> Result<Vec<(Example, Table)>> {
    let examples = load_examples_jsonl(examples_path)?;
    let mut cache: std::collections::HashMap<String, Table> = std::collections::HashMap::new();
    let mut out = Vec::with_capacity(examples.len());
    for ex in examples {
        if !cache.contains_key(&ex.table_id) {
            let table = load_table(tables_dir, &ex.table_id).map_err(|e| Error::Dataset {
                example_id: ex.example_id.clone(),
                message: e.to_string(),
            })?;
            cache.insert(ex.table_id.clone(), table);
        }
        out.push((ex.clone(), cache[&ex.table_id].clone()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn sample_table(id: &str) -> Table {
        Table {
            table_id: id.to_string(),
            headers: vec!["name".into(), "score".into()],
            rows: vec![
                vec!["alice".into(), "3".into()],
                vec!["bob".into(), "5".into()],
            ],
        }
    }

    fn sample_example(id: &str, table_id: &str) -> Example {
        Example {
            example_id: id.to_string(),
            table_id: table_id.to_string(),
            statement: "alice 's score be 3".into(),
            label: 1,
            subset: Subset::Simple,
            reasoning_types: BTreeSet::from([ReasoningType::None]),
        }
    }

    #[test]
    fn well_formed_fixture_loads() {
        let dir = tempfile::tempdir().unwrap();
        let tables = dir.path().join("tables");
        fs::create_dir(&tables).unwrap();
        write_table_tsv(&tables, &sample_table("t1")).unwrap();
        write_table_tsv(&tables, &sample_table("t2")).unwrap();
        let examples = vec![sample_example("e1", "t1"), sample_example("e2", "t2")];
        let path = dir.path().join("train.jsonl");
        write_examples_jsonl(&path, &examples).unwrap();

        let pairs = load_dataset(&path, &tables).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].1.headers, vec!["name", "score"]);
    }

    #[test]
    fn missing_table_names_it() {
        let dir = tempfile::tempdir().unwrap();
        let tables = dir.path().join("tables");
        fs::create_dir(&tables).unwrap();
        let path = dir.path().join("train.jsonl");
        write_examples_jsonl(&path, &[sample_example("e1", "ghost")]).unwrap();
        match load_dataset(&path, &tables) {
            Err(Error::Dataset {
                example_id,
                message,
            }) => {
                assert_eq!(example_id, "e1");
                assert!(message.contains("ghost"), "message: {message}");
            }
            other => panic!("expected dataset error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn tabfact_and_tsv_encodings_agree() {
        let dir = tempfile::tempdir().unwrap();
        let table = sample_table("t");
        write_table_tsv(dir.path(), &table).unwrap();
        fs::write(
            dir.path().join("t.csv"),
            "name#score\nalice#3\nbob#5\n",
        )
        .unwrap();
        let from_tsv = load_table_tsv(&dir.path().join("t.tsv"), "t").unwrap();
        let from_tabfact = load_table_tabfact(&dir.path().join("t.csv"), "t").unwrap();
        assert_eq!(from_tsv, from_tabfact);
    }

    #[test]
    fn ragged_row_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("bad.tsv"), "a\tb\n1\t2\t3\n").unwrap();
        assert!(load_table_tsv(&dir.path().join("bad.tsv"), "bad").is_err());
    }

    #[test]
    fn invalid_label_rejected() {
        let mut ex = sample_example("e", "t");
        ex.label = 2;
        assert!(ex.validate().is_err());
    }

    #[test]
    fn loader_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let tables = dir.path().join("tables");
        fs::create_dir(&tables).unwrap();
        let table = sample_table("t1");
        write_table_tsv(&tables, &table).unwrap();
        let examples = vec![sample_example("e1", "t1")];
        let path = dir.path().join("d.jsonl");
        write_examples_jsonl(&path, &examples).unwrap();
        let pairs = load_dataset(&path, &tables).unwrap();
        assert_eq!(pairs[0].1, table);
        assert_eq!(pairs[0].0.example_id, examples[0].example_id);
        assert_eq!(pairs[0].0.statement, examples[0].statement);
    }
}
