use samoe::data::synth::{generate_synthetic, GenConfig};
use samoe::model::{init_params, ModelConfig};
use samoe::preprocess::{prepare, vocab_corpus, PreprocessConfig, Vocabulary};
use samoe::prior::{trigger_mass, TriggerPool};
use samoe::training::{train_stage1, train_stage2, TrainConfig, TrainExample};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lambda: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(0.1);
    let steps: u64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(600);
    let seed: u64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(0);

    let gen_cfg = GenConfig { seed: 1, n_train: 4000, n_dev: 500, n_test: 500, rows_min: 4, rows_max: 5, cols_min: 3, cols_max: 3, value_max: 30, ..GenConfig::default() };
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
    eprintln!("vocab={} train={} dev={}", vocab.len(), train.len(), dev.len());

    let cfg = ModelConfig { n_e: 5, d: 64, n: 80, layers_fe: 2, layers_expert: 1, layers_mgr: 1, layers_sup: 1, heads: 4, dropout: 0.1, vocab_size: vocab.len(), ffn_mult: 2 };
    let mut params = init_params(&cfg, seed).unwrap();
    let tc = TrainConfig { lambda, beta: 0.1, batch_size: 12, base_lr: 2e-3, warmup_steps: 60, steps, steps_stage2: 400, eval_interval: 200, seed };
    let dir = tempfile::tempdir().unwrap();
    let t0 = std::time::Instant::now();
    let res = train_stage1(&mut params, &cfg, &tc, &train, &dev, dir.path(), serde_json::json!({}), "h").unwrap();
    eprintln!("stage1 done in {:?}; best dev {:.3} at step {}", t0.elapsed(), res.best_dev_accuracy, res.best_step);
    for e in &res.events {
        eprintln!("step {:4} l1={:.4} lv={:.4} lm={:.4} dev={:.3} per-expert={:?} top1={:.3}",
            e.step, e.train_l1, e.train_l_v, e.train_l_m, e.dev_accuracy,
            e.per_expert_accuracy.iter().map(|a| (a*1000.0).round()/1000.0).collect::<Vec<_>>(),
            e.management_topk[0].1);
    }
    // stage 2 from best checkpoint
    let (mut best_params, _) = samoe::checkpoint::load(&res.checkpoint_dir).unwrap();
    let t1 = std::time::Instant::now();
    let res2 = train_stage2(&mut best_params, &cfg, &tc, &train, &dev, &dir.path().join("s2"), serde_json::json!({}), "h").unwrap();
    eprintln!("stage2 done in {:?}; best dev {:.3}", t1.elapsed(), res2.best_dev_accuracy);
    for e in &res2.events {
        eprintln!("s2 step {:4} ls={:.4} dev={:.3} top1={:.3} top2={:.3} top3={:.3} cov={:?}",
            e.step, e.train_l_s, e.dev_accuracy, e.management_topk[0].1, e.management_topk[1].1, e.management_topk[2].1,
            e.coverage_at_k.iter().map(|a| (a*1000.0).round()/1000.0).collect::<Vec<_>>());
    }
}
