//! Walk one (statement, table) pair through pruning, template serialization,
//! tokenization and assembly into the padded joint sequence.

use samoe::data::Table;
use samoe::preprocess::{
    assemble, prune_table, serialize_table, tokenize, PreprocessConfig, Vocabulary,
};
use samoe::Result;

fn main() -> Result<()> {
    let table = Table {
        table_id: "demo".into(),
        headers: vec!["name".into(), "score".into(), "laps".into(), "year".into()],
        rows: vec![
            vec!["alice".into(), "3".into(), "11".into(), "1999".into()],
            vec!["bob".into(), "5".into(), "12".into(), "2003".into()],
            vec!["carol".into(), "3".into(), "15".into(), "2007".into()],
        ],
    };
    let statement = "bob has a larger score than alice";

    println!("statement: {statement}");
    println!("tokens:    {:?}\n", tokenize(statement));

    let config = PreprocessConfig {
        max_len: 48,
        min_freq: 1,
    };
    let statement_len = tokenize(statement).len();
    let budget = config.max_len - 3 - statement_len;
    println!("pruning budget: {budget} tokens");
    let pruned = prune_table(&table, statement, budget);
    println!("kept columns: {:?}", pruned.headers);

    let serialized = serialize_table(&pruned);
    println!("serialized:  {serialized}\n");

    let corpus = vec![statement.to_string(), serialize_table(&table)];
    let vocab = Vocabulary::build(corpus.iter().map(|s| s.as_str()), config.min_freq);
    println!("vocabulary size: {}", vocab.len());

    let seq = assemble(
        &vocab.encode(statement),
        &vocab.encode(&serialized),
        config.max_len,
        &vocab,
    )?;
    println!("assembled ids ({} long): {:?}", seq.ids.len(), seq.ids);
    println!(
        "statement segment ends at {}, table segment at {}, {} non-pad tokens",
        seq.statement_end,
        seq.table_end,
        seq.mask.iter().filter(|&&m| m).count()
    );
    Ok(())
}
