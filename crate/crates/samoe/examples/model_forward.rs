//! Initialize a small SaMoE model and inspect one forward pass: per-expert
//! probabilities, manager attention, supervisor adjustment, and the combined
//! verdict.

use samoe::evaluation::combine_probs;
use samoe::model::{forward_eval, init_params, ModelConfig};
use samoe::preprocess::{assemble, serialize_table, tokenize, Vocabulary};
use samoe::data::Table;
use samoe::tensor::argmax;
use samoe::Result;

fn main() -> Result<()> {
    let table = Table {
        table_id: "demo".into(),
        headers: vec!["name".into(), "points".into()],
        rows: vec![
            vec!["alice".into(), "3".into()],
            vec!["bob".into(), "5".into()],
        ],
    };
    let statement = "the highest points be 5";
    let serialized = serialize_table(&table);
    let corpus = vec![statement.to_string(), serialized.clone()];
    let vocab = Vocabulary::build(corpus.iter().map(|s| s.as_str()), 1);

    let config = ModelConfig {
        n_e: 5,
        d: 32,
        n: 48,
        layers_fe: 1,
        layers_expert: 1,
        layers_mgr: 1,
        layers_sup: 1,
        heads: 4,
        dropout: 0.0,
        vocab_size: vocab.len(),
        ffn_mult: 2,
    };
    let params = init_params(&config, 42)?;
    println!(
        "model: {} parameters in {} tensors",
        params.total_numel(),
        params.len()
    );
    println!("statement: {statement} ({} tokens)", tokenize(statement).len());

    let seq = assemble(
        &vocab.encode(statement),
        &vocab.encode(&serialized),
        config.n,
        &vocab,
    )?;
    let out = forward_eval(&params, &config, &seq, true)?;

    for (i, p) in out.p.iter().enumerate() {
        println!("expert {i}: p(refuted)={:.4} p(entailed)={:.4}", p[0], p[1]);
    }
    println!("manager attention a_M: {:?}", rounded(&out.a_m));
    println!("supervisor scores e_S: {:?}", rounded(out.e_s.as_ref().unwrap()));
    println!("adjusted attention a_S: {:?}", rounded(out.a_s.as_ref().unwrap()));

    let p_final = combine_probs(out.a_s.as_ref().unwrap(), &out.p);
    println!(
        "combined p_final = {:?} -> verdict {}",
        rounded(&p_final),
        if argmax(&p_final) == 1 { "entailed" } else { "refuted" }
    );
    Ok(())
}

fn rounded(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 10000.0).round() / 10000.0).collect()
}
