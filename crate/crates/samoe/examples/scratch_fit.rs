use samoe::data::synth::{generate_synthetic, GenConfig};
use samoe::model::{init_params, ModelConfig};
use samoe::preprocess::{prepare, vocab_corpus, PreprocessConfig, Vocabulary};
use samoe::prior::{trigger_mass, TriggerPool};
use samoe::training::{train_stage1, TrainConfig, TrainExample};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(800);
    let steps: u64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(400);
    let lr: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(2e-3);
    let layers_fe: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(2);
    let layers_expert: usize = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(1);
    let dropout: f64 = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(0.0);

    let gen_cfg = GenConfig { seed: 1, n_train: n, n_dev: 300, n_test: 0, rows_min: 4, rows_max: 5, cols_min: 3, cols_max: 3, ..GenConfig::default() };
    let data = generate_synthetic(&gen_cfg).unwrap();
    let pre_cfg = PreprocessConfig { max_len: 80, min_freq: 1 };
    let corpus: Vec<(String, samoe::data::Table)> = data.train.iter()
        .map(|g| (g.example.statement.clone(), g.table.clone())).collect();
    let vocab = Vocabulary::build(vocab_corpus(&corpus).iter().map(|s| s.as_str()), 1);
    let pool = TriggerPool::builtin();
    let prep = |gs: &[samoe::data::synth::GeneratedExample]| -> Vec<TrainExample> {
        gs.iter().map(|g| TrainExample {
            example_id: g.example.example_id.clone(),
            seq: prepare(&g.example.statement, &g.table, &vocab, &pre_cfg).unwrap(),
            label: g.example.label,
            subset: g.example.subset,
            trigger_mass: trigger_mass(&g.example.statement, &pool),
        }).collect()
    };
    let train = prep(&data.train);
    let dev = prep(&data.dev);

    let cfg = ModelConfig { n_e: 5, d: 64, n: 80, layers_fe, layers_expert, layers_mgr: 1, layers_sup: 1, heads: 4, dropout, vocab_size: vocab.len(), ffn_mult: 2 };
    let mut params = init_params(&cfg, 0).unwrap();
    let eval_interval = steps / 8;
    let tc = TrainConfig { lambda: 0.1, beta: 0.1, batch_size: 16, base_lr: lr, warmup_steps: 30, steps, steps_stage2: 100, eval_interval, seed: 0 };
    let dir = tempfile::tempdir().unwrap();
    // dev here = TRAIN subset to measure fit; also real dev
    let train_eval: Vec<TrainExample> = train.iter().take(300).cloned().collect();
    let res = train_stage1(&mut params, &cfg, &tc, &train, &train_eval, dir.path(), serde_json::json!({}), "h").unwrap();
    for e in &res.events {
        println!("step {:4} l1={:.4} lv={:.4} TRAIN-acc={:.3}", e.step, e.train_l1, e.train_l_v, e.dev_accuracy);
    }
    // final real-dev eval
    let rep = samoe::evaluation::evaluate(&params, &cfg, &dev, samoe::evaluation::AttentionChoice::Manager).unwrap();
    println!("final real-dev acc={:.3} per-expert={:?}", rep.overall_accuracy,
        rep.per_expert_accuracy.iter().map(|a| (a*100.0).round()/100.0).collect::<Vec<_>>());
}
