//! End-to-end two-stage training on a small synthetic dataset, then an
//! evaluation report. Finishes in a couple of minutes on a laptop CPU.

use samoe::checkpoint;
use samoe::data::synth::{generate_synthetic, GenConfig};
use samoe::evaluation::{evaluate, render_summary, AttentionChoice};
use samoe::model::{init_params, ModelConfig};
use samoe::preprocess::{prepare, vocab_corpus, PreprocessConfig, Vocabulary};
use samoe::prior::{trigger_mass, TriggerPool};
use samoe::training::{train_stage1, train_stage2, TrainConfig, TrainExample};
use samoe::Result;

fn main() -> Result<()> {
    let gen = GenConfig {
        seed: 11,
        n_train: 800,
        n_dev: 200,
        n_test: 0,
        rows_min: 4,
        rows_max: 5,
        cols_min: 3,
        cols_max: 3,
        ..GenConfig::default()
    };
    let data = generate_synthetic(&gen)?;
    let pre = PreprocessConfig {
        max_len: 80,
        min_freq: 1,
    };
    let corpus: Vec<(String, samoe::data::Table)> = data
        .train
        .iter()
        .map(|g| (g.example.statement.clone(), g.table.clone()))
        .collect();
    let vocab = Vocabulary::build(vocab_corpus(&corpus).iter().map(|s| s.as_str()), pre.min_freq);
    let pool = TriggerPool::builtin();
    let prep = |gs: &[samoe::data::synth::GeneratedExample]| -> Result<Vec<TrainExample>> {
        gs.iter()
            .map(|g| {
                Ok(TrainExample {
                    example_id: g.example.example_id.clone(),
                    seq: prepare(&g.example.statement, &g.table, &vocab, &pre)?,
                    label: g.example.label,
                    subset: g.example.subset,
                    trigger_mass: trigger_mass(&g.example.statement, &pool),
                })
            })
            .collect()
    };
    let train = prep(&data.train)?;
    let dev = prep(&data.dev)?;
    println!("train {} / dev {} examples, vocab {}", train.len(), dev.len(), vocab.len());

    let model = ModelConfig {
        n_e: 5,
        d: 48,
        n: 80,
        layers_fe: 1,
        layers_expert: 1,
        layers_mgr: 1,
        layers_sup: 1,
        heads: 4,
        dropout: 0.1,
        vocab_size: vocab.len(),
        ffn_mult: 2,
    };
    let tc = TrainConfig {
        lambda: 0.1,
        beta: 0.1,
        batch_size: 16,
        base_lr: 2e-3,
        warmup_steps: 20,
        steps: 200,
        steps_stage2: 100,
        eval_interval: 50,
        seed: 0,
    };
    let dir = tempfile::tempdir()?;
    let mut params = init_params(&model, tc.seed)?;

    println!("\nstage 1 (multi-expert training, lambda = {}):", tc.lambda);
    let s1 = train_stage1(
        &mut params, &model, &tc, &train, &dev,
        &dir.path().join("stage1"), serde_json::json!({}), "toy",
    )?;
    for e in &s1.events {
        println!(
            "  step {:3}: L1 {:.4} dev acc {:.3} per-expert {:?}",
            e.step,
            e.train_l1,
            e.dev_accuracy,
            e.per_expert_accuracy
                .iter()
                .map(|a| (a * 100.0).round() / 100.0)
                .collect::<Vec<_>>()
        );
    }

    println!("\nstage 2 (self-adaptive supervisor):");
    let (mut best, _) = checkpoint::load(&s1.checkpoint_dir)?;
    let s2 = train_stage2(
        &mut best, &model, &tc, &train, &dev,
        &dir.path().join("stage2"), serde_json::json!({}), "toy",
    )?;
    for e in &s2.events {
        println!(
            "  step {:3}: L_S {:.4} dev acc {:.3} top-1 mgmt {:.3}",
            e.step, e.train_l_s, e.dev_accuracy, e.management_topk[0].1
        );
    }

    let (final_params, _) = checkpoint::load(&s2.checkpoint_dir)?;
    let report = evaluate(&final_params, &model, &dev, AttentionChoice::Supervisor)?;
    println!("\nfinal report:\n{}", render_summary(&report));
    Ok(())
}
