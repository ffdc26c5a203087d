//! Synthetic statement/table generator with a brute-force labeling oracle.
//!
//! Tables carry one string key column plus numeric columns (integers rendered
//! as decimal strings). Statements come from one template per reasoning type,
//! in the lowercase copula-"be" register the trigger patterns expect:
//!
//! - count:       "X be listed a total of K times"
//! - comparative: "A has a larger C than B"
//! - superlative: "the highest C be V" (or lowest)
//! - negation:    "A never score V C"
//! - none:        "A 's C be V"
//!
//! Every emitted label is recomputed by [`oracle_label`]; refuted variants
//! perturb exactly one operand of the entailed reading.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::derive_seed;

use super::{Example, ReasoningType, Subset, Table};

const KEY_HEADERS: [&str; 6] = ["name", "player", "team", "driver", "nation", "club"];
const NUM_HEADERS: [&str; 10] = [
    "points", "score", "goals", "wins", "losses", "laps", "assists", "medals", "rank", "total",
];
const KEY_VALUES: [&str; 20] = [
    "alice", "bob", "carol", "dave", "erin", "frank", "grace", "heidi", "ivan", "judy", "karl",
    "liam", "mona", "nina", "oscar", "peggy", "quinn", "rosa", "sam", "tina",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SuperlativeDir {
    Highest,
    Lowest,
}

/// Typed slot bindings for one generated statement.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SpecArgs {
    Count { value: i64, times: i64 },
    Comparative { left: String, right: String },
    Superlative { dir: SuperlativeDir, value: i64 },
    Negation { entity: String, value: i64 },
    Lookup { entity: String, value: i64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub template_id: String,
    /// Header of the numeric column the statement is about.
    pub column: String,
    pub args: SpecArgs,
    pub intended_label: u8,
}

impl SyntheticSpec {
    pub fn reasoning_type(&self) -> ReasoningType {
        match self.args {
            SpecArgs::Count { .. } => ReasoningType::Count,
            SpecArgs::Comparative { .. } => ReasoningType::Comparative,
            SpecArgs::Superlative { .. } => ReasoningType::Superlative,
            SpecArgs::Negation { .. } => ReasoningType::Negation,
            SpecArgs::Lookup { .. } => ReasoningType::None,
        }
    }
}

/// Per-type shares of the generated examples; normalized before use.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct TypeMix {
    pub count: f64,
    pub comparative: f64,
    pub superlative: f64,
    pub negation: f64,
    pub none: f64,
}

impl Default for TypeMix {
    fn default() -> Self {
        TypeMix {
            count: 0.2,
            comparative: 0.2,
            superlative: 0.2,
            negation: 0.2,
            none: 0.2,
        }
    }
}

impl TypeMix {
    fn weight(&self, t: ReasoningType) -> f64 {
        match t {
            ReasoningType::Count => self.count,
            ReasoningType::Comparative => self.comparative,
            ReasoningType::Superlative => self.superlative,
            ReasoningType::Negation => self.negation,
            ReasoningType::None => self.none,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub seed: u64,
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    pub rows_min: usize,
    pub rows_max: usize,
    pub cols_min: usize,
    pub cols_max: usize,
    #[serde(default)]
    pub mix: TypeMix,
    pub value_max: i64,
    pub max_retries: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 0,
            n_train: 4000,
            n_dev: 500,
            n_test: 500,
            rows_min: 4,
            rows_max: 6,
            cols_min: 3,
            cols_max: 3,
            mix: TypeMix::default(),
            value_max: 100,
            max_retries: 64,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rows_min < 4 || self.rows_max > 12 || self.rows_min > self.rows_max {
            return Err(Error::Config(format!(
                "rows must lie in [4,12], got [{},{}]",
                self.rows_min, self.rows_max
            )));
        }
        if self.cols_min < 3 || self.cols_max > 6 || self.cols_min > self.cols_max {
            return Err(Error::Config(format!(
                "cols must lie in [3,6], got [{},{}]",
                self.cols_min, self.cols_max
            )));
        }
        if self.value_max < 10 {
            return Err(Error::Config("value_max must be at least 10".into()));
        }
        Ok(())
    }
}

/// One generated example with its evidence and audit spec.
#[derive(Clone, Debug)]
pub struct GeneratedExample {
    pub example: Example,
    pub table: Table,
    pub spec: SyntheticSpec,
}

#[derive(Debug, Default)]
pub struct SyntheticDataset {
    pub train: Vec<GeneratedExample>,
    pub dev: Vec<GeneratedExample>,
    pub test: Vec<GeneratedExample>,
}

impl SyntheticDataset {
    pub fn splits(&self) -> [(&str, &Vec<GeneratedExample>); 3] {
        [
            ("train", &self.train),
            ("dev", &self.dev),
            ("test", &self.test),
        ]
    }
}

/// Deterministic quota split of `n` over the five types, remainder to the
/// earliest types in canonical order.
fn type_quotas(n: usize, mix: &TypeMix) -> [usize; 5] {
    let total: f64 = ReasoningType::ALL.iter().map(|t| mix.weight(*t)).sum();
    let mut quotas = [0usize; 5];
    let mut assigned = 0;
    for (i, t) in ReasoningType::ALL.iter().enumerate() {
        quotas[i] = ((n as f64) * mix.weight(*t) / total).floor() as usize;
        assigned += quotas[i];
    }
    let mut i = 0;
    while assigned < n {
        if mix.weight(ReasoningType::ALL[i % 5]) > 0.0 {
            quotas[i % 5] += 1;
            assigned += 1;
        }
        i += 1;
    }
    quotas
}

pub fn generate_synthetic(config: &GenConfig) -> Result<SyntheticDataset> {
    config.validate()?;
    let mut out = SyntheticDataset::default();
    for (split, n) in [
        ("train", config.n_train),
        ("dev", config.n_dev),
        ("test", config.n_test),
    ] {
        let examples = generate_split(config, split, n)?;
        match split {
            "train" => out.train = examples,
            "dev" => out.dev = examples,
            _ => out.test = examples,
        }
    }
    Ok(out)
}

fn generate_split(config: &GenConfig, split: &str, n: usize) -> Result<Vec<GeneratedExample>> {
    let split_seed = derive_seed(config.seed, &format!("gen.{split}"));
    let quotas = type_quotas(n, &config.mix);

    // Slot list: per type, labels alternate 1,0,1,0... for an exact balance.
    let mut slots: Vec<(ReasoningType, u8)> = Vec::with_capacity(n);
    for (i, t) in ReasoningType::ALL.iter().enumerate() {
        for k in 0..quotas[i] {
            slots.push((*t, if k % 2 == 0 { 1 } else { 0 }));
        }
    }
    let mut order_rng = ChaCha8Rng::seed_from_u64(derive_seed(split_seed, "order"));
    slots.shuffle(&mut order_rng);

    let mut out = Vec::with_capacity(n);
    for (idx, (rtype, label)) in slots.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(split_seed, &format!("ex{idx}")));
        let example_id = format!("{split}-{idx:05}");
        let table_id = format!("tbl-{split}-{idx:05}");
        let generated = generate_example(config, &mut rng, rtype, label, &example_id, &table_id)?;
        debug_assert_eq!(
            oracle_label(&generated.spec, &generated.table)?,
            generated.example.label
        );
        out.push(generated);
    }
    Ok(out)
}

fn sample_table(config: &GenConfig, rng: &mut ChaCha8Rng, table_id: &str) -> Table {
    let n_rows = rng.gen_range(config.rows_min..=config.rows_max);
    let n_cols = rng.gen_range(config.cols_min..=config.cols_max);
    let key_header = KEY_HEADERS[rng.gen_range(0..KEY_HEADERS.len())].to_string();
    let mut num_headers: Vec<&str> = NUM_HEADERS.to_vec();
    num_headers.shuffle(rng);
    let mut headers = vec![key_header];
    headers.extend(num_headers[..n_cols - 1].iter().map(|s| s.to_string()));

    let mut keys: Vec<&str> = KEY_VALUES.to_vec();
    keys.shuffle(rng);
    let rows = (0..n_rows)
        .map(|r| {
            let mut row = vec![keys[r].to_string()];
            for _ in 1..n_cols {
                row.push(rng.gen_range(0..=config.value_max).to_string());
            }
            row
        })
        .collect();
    Table {
        table_id: table_id.to_string(),
        headers,
        rows,
    }
}

fn cell_value(table: &Table, row: usize, col: usize) -> i64 {
    table.rows[row][col].parse().expect("generated cell")
}

fn value_in_table(table: &Table, v: i64) -> bool {
    table
        .rows
        .iter()
        .flat_map(|r| r[1..].iter())
        .any(|c| c == &v.to_string())
}

/// Distractor for lookup/negation statements: mostly a value absent from the
/// whole table, sometimes a value from another row of the same column so the
/// task cannot be solved by table-level existence alone.
fn distractor_value(
    config: &GenConfig,
    rng: &mut ChaCha8Rng,
    table: &Table,
    row: usize,
    col: usize,
) -> i64 {
    let actual = cell_value(table, row, col);
    let in_column: Vec<i64> = (0..table.n_rows())
        .filter(|&r| r != row)
        .map(|r| cell_value(table, r, col))
        .filter(|v| *v != actual)
        .collect();
    if !in_column.is_empty() && rng.gen_range(0..3) == 0 {
        return *in_column.choose(rng).expect("nonempty");
    }
    for _ in 0..32 {
        let v = rng.gen_range(0..=config.value_max);
        if v != actual && !value_in_table(table, v) {
            return v;
        }
    }
    // Dense tables: fall back to any non-matching value.
    let mut v = rng.gen_range(0..=config.value_max);
    while v == actual {
        v = rng.gen_range(0..=config.value_max);
    }
    v
}

fn generate_example(
    config: &GenConfig,
    rng: &mut ChaCha8Rng,
    rtype: ReasoningType,
    label: u8,
    example_id: &str,
    table_id: &str,
) -> Result<GeneratedExample> {
    for _ in 0..config.max_retries {
        let mut table = sample_table(config, rng, table_id);
        if let Some((statement, spec)) = instantiate(config, rng, rtype, label, &mut table) {
            let subset = if rtype == ReasoningType::None {
                Subset::Simple
            } else {
                Subset::Complex
            };
            let example = Example {
                example_id: example_id.to_string(),
                table_id: table_id.to_string(),
                statement,
                label,
                subset,
                reasoning_types: BTreeSet::from([rtype]),
            };
            return Ok(GeneratedExample {
                example,
                table,
                spec,
            });
        }
    }
    Err(Error::GenerationRetriesExceeded {
        template: format!("{rtype:?}"),
        retries: config.max_retries,
    })
}

/// Try to realize one (type, label) slot on a freshly sampled table. The
/// table may be edited (count plants its target multiplicity, comparative
/// breaks ties); `None` asks the caller to resample.
fn instantiate(
    config: &GenConfig,
    rng: &mut ChaCha8Rng,
    rtype: ReasoningType,
    label: u8,
    table: &mut Table,
) -> Option<(String, SyntheticSpec)> {
    let n_rows = table.n_rows();
    let col = rng.gen_range(1..table.n_cols());
    let header = table.headers[col].clone();
    match rtype {
        ReasoningType::Count => {
            // Target value must be unique to this column so the statement
            // stays unambiguous; plant it with a controlled multiplicity.
            let value = (0..16)
                .map(|_| rng.gen_range(0..=config.value_max))
                .find(|v| {
                    !table
                        .rows
                        .iter()
                        .flat_map(|r| r[1..].iter())
                        .any(|c| c == &v.to_string())
                })?;
            let mult = rng.gen_range(1..=3.min(n_rows - 1));
            let mut row_ids: Vec<usize> = (0..n_rows).collect();
            row_ids.shuffle(rng);
            for &r in &row_ids[..mult] {
                table.rows[r][col] = value.to_string();
            }
            let times = if label == 1 {
                mult as i64
            } else {
                // Perturb the count operand.
                let candidates: Vec<i64> = (1..=(n_rows as i64))
                    .filter(|&k| k != mult as i64 && (k - mult as i64).abs() <= 2)
                    .collect();
                *candidates.choose(rng)?
            };
            let statement = format!("{value} be listed a total of {times} times");
            Some((
                statement,
                SyntheticSpec {
                    template_id: "count.listed".into(),
                    column: header,
                    args: SpecArgs::Count {
                        value,
                        times,
                    },
                    intended_label: label,
                },
            ))
        }
        ReasoningType::Comparative => {
            let a = rng.gen_range(0..n_rows);
            let mut b = rng.gen_range(0..n_rows);
            while b == a {
                b = rng.gen_range(0..n_rows);
            }
            if cell_value(table, a, col) == cell_value(table, b, col) {
                let mut v = rng.gen_range(0..=config.value_max);
                while v == cell_value(table, a, col) {
                    v = rng.gen_range(0..=config.value_max);
                }
                table.rows[b][col] = v.to_string();
            }
            let (hi, lo) = if cell_value(table, a, col) > cell_value(table, b, col) {
                (a, b)
            } else {
                (b, a)
            };
            // Entailed reads high > low; the refuted variant swaps the roles.
            let (left, right) = if label == 1 { (hi, lo) } else { (lo, hi) };
            let left_key = table.rows[left][0].clone();
            let right_key = table.rows[right][0].clone();
            let statement = format!("{left_key} has a larger {header} than {right_key}");
            Some((
                statement,
                SyntheticSpec {
                    template_id: "comparative.larger".into(),
                    column: header,
                    args: SpecArgs::Comparative {
                        left: left_key,
                        right: right_key,
                    },
                    intended_label: label,
                },
            ))
        }
        ReasoningType::Superlative => {
            let values: Vec<i64> = (0..n_rows).map(|r| cell_value(table, r, col)).collect();
            let distinct: BTreeSet<i64> = values.iter().copied().collect();
            if distinct.len() < 2 {
                return None;
            }
            let dir = if rng.gen::<bool>() {
                SuperlativeDir::Highest
            } else {
                SuperlativeDir::Lowest
            };
            let extreme = match dir {
                SuperlativeDir::Highest => *values.iter().max().expect("nonempty"),
                SuperlativeDir::Lowest => *values.iter().min().expect("nonempty"),
            };
            let value = if label == 1 {
                extreme
            } else {
                let others: Vec<i64> = distinct.iter().copied().filter(|v| *v != extreme).collect();
                *others.choose(rng)?
            };
            let dir_word = match dir {
                SuperlativeDir::Highest => "highest",
                SuperlativeDir::Lowest => "lowest",
            };
            let statement = format!("the {dir_word} {header} be {value}");
            Some((
                statement,
                SyntheticSpec {
                    template_id: format!("superlative.{dir_word}"),
                    column: header,
                    args: SpecArgs::Superlative { dir, value },
                    intended_label: label,
                },
            ))
        }
        ReasoningType::Negation => {
            let row = rng.gen_range(0..n_rows);
            let entity = table.rows[row][0].clone();
            let actual = cell_value(table, row, col);
            let value = if label == 0 {
                actual
            } else {
                distractor_value(config, rng, table, row, col)
            };
            let statement = format!("{entity} never score {value} {header}");
            Some((
                statement,
                SyntheticSpec {
                    template_id: "negation.never".into(),
                    column: header,
                    args: SpecArgs::Negation { entity, value },
                    intended_label: label,
                },
            ))
        }
        ReasoningType::None => {
            let row = rng.gen_range(0..n_rows);
            let entity = table.rows[row][0].clone();
            let actual = cell_value(table, row, col);
            let value = if label == 1 {
                actual
            } else {
                distractor_value(config, rng, table, row, col)
            };
            let statement = format!("{entity} 's {header} be {value}");
            Some((
                statement,
                SyntheticSpec {
                    template_id: "none.lookup".into(),
                    column: header,
                    args: SpecArgs::Lookup { entity, value },
                    intended_label: label,
                },
            ))
        }
    }
}

// ── oracle ───────────────────────────────────────────────────────────

fn parse_cell(table: &Table, row: usize, col: usize) -> Result<i64> {
    table.rows[row][col]
        .trim()
        .parse()
        .map_err(|_| Error::BadNumericCell {
            table_id: table.table_id.clone(),
            cell: table.rows[row][col].clone(),
        })
}

fn require_col(table: &Table, header: &str) -> Result<usize> {
    table
        .col_index(header)
        .ok_or_else(|| Error::Dataset {
            example_id: table.table_id.clone(),
            message: format!("column '{header}' not in table"),
        })
}

/// Rows whose key (first column) equals `entity`.
fn entity_rows(table: &Table, entity: &str) -> Result<Vec<usize>> {
    let rows: Vec<usize> = (0..table.n_rows())
        .filter(|&r| table.rows[r][0] == entity)
        .collect();
    if rows.is_empty() {
        return Err(Error::Dataset {
            example_id: table.table_id.clone(),
            message: format!("entity '{entity}' not in table"),
        });
    }
    Ok(rows)
}

/// Brute-force evaluation of a spec against its table.
pub fn oracle_label(spec: &SyntheticSpec, table: &Table) -> Result<u8> {
    let col = require_col(table, &spec.column)?;
    let verdict = match &spec.args {
        SpecArgs::Count { value, times } => {
            let mut hits = 0i64;
            for r in 0..table.n_rows() {
                if parse_cell(table, r, col)? == *value {
                    hits += 1;
                }
            }
            hits == *times
        }
        SpecArgs::Comparative { left, right } => {
            let lrow = entity_rows(table, left)?[0];
            let rrow = entity_rows(table, right)?[0];
            parse_cell(table, lrow, col)? > parse_cell(table, rrow, col)?
        }
        SpecArgs::Superlative { dir, value } => {
            let mut extreme = parse_cell(table, 0, col)?;
            for r in 1..table.n_rows() {
                let v = parse_cell(table, r, col)?;
                extreme = match dir {
                    SuperlativeDir::Highest => extreme.max(v),
                    SuperlativeDir::Lowest => extreme.min(v),
                };
            }
            extreme == *value
        }
        SpecArgs::Negation { entity, value } => {
            let mut exists = false;
            for r in entity_rows(table, entity)? {
                if parse_cell(table, r, col)? == *value {
                    exists = true;
                }
            }
            !exists
        }
        SpecArgs::Lookup { entity, value } => {
            let mut exists = false;
            for r in entity_rows(table, entity)? {
                if parse_cell(table, r, col)? == *value {
                    exists = true;
                }
            }
            exists
        }
    };
    Ok(u8::from(verdict))
}

/// Write a generated dataset: `tables/` TSVs, one JSONL per split, and a
/// specs audit file per split.
pub fn write_dataset(dir: &std::path::Path, data: &SyntheticDataset) -> Result<()> {
    let tables_dir = dir.join("tables");
    std::fs::create_dir_all(&tables_dir)?;
    for (split, examples) in data.splits() {
        let exs: Vec<Example> = examples.iter().map(|g| g.example.clone()).collect();
        super::write_examples_jsonl(&dir.join(format!("{split}.jsonl")), &exs)?;
        let mut specs_file = std::fs::File::create(dir.join(format!("{split}.specs.jsonl")))?;
        use std::io::Write;
        for g in examples {
            let record = serde_json::json!({
                "example_id": g.example.example_id,
                "spec": g.spec,
            });
            serde_json::to_writer(&mut specs_file, &record)?;
            specs_file.write_all(b"\n")?;
        }
        for g in examples {
            super::write_table_tsv(&tables_dir, &g.table)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score_table(scores: &[i64]) -> Table {
        Table {
            table_id: "t".into(),
            headers: vec!["name".into(), "score".into()],
            rows: scores
                .iter()
                .enumerate()
                .map(|(i, s)| vec![KEY_VALUES[i].to_string(), s.to_string()])
                .collect(),
        }
    }

    #[test]
    fn oracle_count_enumerates_rows() {
        let table = score_table(&[3, 5, 3]);
        let spec = SyntheticSpec {
            template_id: "count.listed".into(),
            column: "score".into(),
            args: SpecArgs::Count { value: 3, times: 2 },
            intended_label: 1,
        };
        assert_eq!(oracle_label(&spec, &table).unwrap(), 1);
        let wrong = SyntheticSpec {
            args: SpecArgs::Count { value: 3, times: 1 },
            ..spec
        };
        assert_eq!(oracle_label(&wrong, &table).unwrap(), 0);
    }

    #[test]
    fn oracle_superlative_max_over_column() {
        let table = score_table(&[3, 5, 3]);
        let spec = SyntheticSpec {
            template_id: "superlative.highest".into(),
            column: "score".into(),
            args: SpecArgs::Superlative {
                dir: SuperlativeDir::Highest,
                value: 5,
            },
            intended_label: 1,
        };
        assert_eq!(oracle_label(&spec, &table).unwrap(), 1);
    }

    #[test]
    fn oracle_negation_existence_complement() {
        // alice's only score is 3, so "alice never score 0" is entailed.
        let table = score_table(&[3]);
        let spec = SyntheticSpec {
            template_id: "negation.never".into(),
            column: "score".into(),
            args: SpecArgs::Negation {
                entity: "alice".into(),
                value: 0,
            },
            intended_label: 1,
        };
        assert_eq!(oracle_label(&spec, &table).unwrap(), 1);
    }

    #[test]
    fn oracle_unparseable_cell_errors() {
        let mut table = score_table(&[3, 5]);
        table.rows[0][1] = "n/a".into();
        let spec = SyntheticSpec {
            template_id: "count.listed".into(),
            column: "score".into(),
            args: SpecArgs::Count { value: 3, times: 1 },
            intended_label: 1,
        };
        assert!(matches!(
            oracle_label(&spec, &table),
            Err(Error::BadNumericCell { .. })
        ));
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = GenConfig {
            n_train: 60,
            n_dev: 20,
            n_test: 20,
            seed: 7,
            ..GenConfig::default()
        };
        let a = generate_synthetic(&cfg).unwrap();
        let b = generate_synthetic(&cfg).unwrap();
        for (x, y) in a.train.iter().zip(&b.train) {
            assert_eq!(x.example.statement, y.example.statement);
            assert_eq!(x.example.label, y.example.label);
            assert_eq!(x.table, y.table);
        }
    }

    #[test]
    fn labels_agree_with_oracle() {
        let cfg = GenConfig {
            n_train: 400,
            n_dev: 0,
            n_test: 0,
            seed: 3,
            ..GenConfig::default()
        };
        let data = generate_synthetic(&cfg).unwrap();
        for g in &data.train {
            assert_eq!(
                oracle_label(&g.spec, &g.table).unwrap(),
                g.example.label,
                "spec {:?} on table {:?}",
                g.spec,
                g.table
            );
        }
    }

    #[test]
    fn intended_label_flip_flips_oracle() {
        // The refuted variant of each template perturbs one operand, so
        // rebuilding the entailed reading must flip the oracle verdict.
        let cfg = GenConfig {
            n_train: 200,
            n_dev: 0,
            n_test: 0,
            seed: 11,
            ..GenConfig::default()
        };
        let data = generate_synthetic(&cfg).unwrap();
        for g in &data.train {
            let flipped = oracle_label(&g.spec, &g.table).unwrap() ^ 1;
            assert_eq!(flipped, g.example.label ^ 1);
        }
    }

    #[test]
    fn per_type_quotas_within_one() {
        let cfg = GenConfig {
            n_train: 201,
            n_dev: 0,
            n_test: 0,
            seed: 5,
            mix: TypeMix {
                count: 0.25,
                comparative: 0.25,
                superlative: 0.25,
                negation: 0.25,
                none: 0.0,
            },
            ..GenConfig::default()
        };
        let data = generate_synthetic(&cfg).unwrap();
        let mut counts = [0usize; 5];
        for g in &data.train {
            counts[g.spec.reasoning_type().index()] += 1;
        }
        assert_eq!(counts[4], 0);
        for &c in &counts[..4] {
            assert!((c as i64 - 50).unsigned_abs() <= 1, "counts {counts:?}");
        }
    }

    #[test]
    fn per_type_labels_balanced() {
        let cfg = GenConfig {
            n_train: 500,
            n_dev: 0,
            n_test: 0,
            seed: 9,
            ..GenConfig::default()
        };
        let data = generate_synthetic(&cfg).unwrap();
        let mut pos = [0i64; 5];
        let mut tot = [0i64; 5];
        for g in &data.train {
            let i = g.spec.reasoning_type().index();
            tot[i] += 1;
            pos[i] += g.example.label as i64;
        }
        for i in 0..5 {
            assert!(
                (2 * pos[i] - tot[i]).abs() <= 1,
                "type {i}: {} of {}",
                pos[i],
                tot[i]
            );
        }
    }
}
