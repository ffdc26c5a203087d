//! Two-stage parameter learning.
//!
//! Stage 1 (multi-expert training) minimizes L1 = L_V + lambda * L_M over the
//! feature extractor, experts and manager: L_V is the attention-weighted sum
//! of per-expert cross-entropies, L_M the KL divergence from the trigger-word
//! prior to the manager's attention. Stage 2 (self-adaptive learning) freezes
//! everything but the supervisor and minimizes L_S = KL(a_E || a_S), where
//! a_E is the variance-normalized softmax of negated expert losses.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::data::Subset;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, AttentionChoice, EvalReport};
use crate::graph::{Gradients, Graph, Var};
use crate::model::{forward, DropoutCtx, ForwardOpts, ModelConfig};
use crate::optim::{Adam, LrConfig};
use crate::params::{derive_seed, ParamSet};
use crate::preprocess::{CachedSplit, TokenSequence};
use crate::prior;
use crate::tensor::{population_variance, softmax, Tensor};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Weight of the manager-assumption loss in L1.
    pub lambda: f64,
    /// Target variance for the expert-ability softmax input.
    pub beta: f64,
    pub batch_size: usize,
    pub base_lr: f64,
    pub warmup_steps: u64,
    /// Stage-1 steps.
    pub steps: u64,
    /// Stage-2 steps.
    pub steps_stage2: u64,
    pub eval_interval: u64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 0.1,
            beta: 0.1,
            batch_size: 16,
            base_lr: 1e-3,
            warmup_steps: 60,
            steps: 600,
            steps_stage2: 300,
            eval_interval: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 {
            return Err(Error::Config("lambda must be nonnegative".into()));
        }
        if self.beta <= 0.0 {
            return Err(Error::Config("beta must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.steps == 0 || self.eval_interval == 0 {
            return Err(Error::Config("steps and eval_interval must be positive".into()));
        }
        if !self.steps.is_multiple_of(self.eval_interval)
            || (self.steps_stage2 > 0 && !self.steps_stage2.is_multiple_of(self.eval_interval))
        {
            return Err(Error::Config(
                "eval_interval must divide the step counts".into(),
            ));
        }
        Ok(())
    }

    fn lr_config(&self, total_steps: u64) -> LrConfig {
        LrConfig {
            base_lr: self.base_lr,
            warmup_steps: self.warmup_steps.min(total_steps.saturating_sub(1)),
            total_steps,
        }
    }
}

/// One preprocessed training example: the padded id sequence, its label, and
/// the compact trigger mass the prior expands from.
#[derive(Clone, Debug)]
pub struct TrainExample {
    pub example_id: String,
    pub seq: TokenSequence,
    pub label: u8,
    pub subset: Subset,
    pub trigger_mass: [f64; 4],
}

pub fn examples_from_cache(split: &CachedSplit) -> Vec<TrainExample> {
    split
        .meta
        .iter()
        .zip(&split.sequences)
        .map(|(m, seq)| TrainExample {
            example_id: m.example_id.clone(),
            seq: seq.clone(),
            label: m.label,
            subset: m.subset,
            trigger_mass: m.delta,
        })
        .collect()
}

// ── loss building blocks ─────────────────────────────────────────────

/// L_V = sum_i (a_M)_i * m_i; gradient reaches both the manager (through
/// a_M) and each expert (through its own cross-entropy).
pub fn verification_loss<'g>(a_m: &Var<'g>, m: &Var<'g>) -> Result<Var<'g>> {
    Ok(a_m.mul(m)?.sum_all())
}

/// L_M = D(a_P || a_M) with the prior as the fixed target.
pub fn manager_assumption_loss<'g>(
    graph: &'g Graph,
    a_p: &[f64],
    a_m: &Var<'g>,
) -> Result<Var<'g>> {
    let target = graph.constant(Tensor::new(vec![1, a_p.len()], a_p.to_vec())?);
    target.kl_div(a_m)
}

/// a_E = softmax(-alpha * m) with alpha = sqrt(beta / Var(m)) so the softmax
/// input has population variance exactly beta. A constant m yields the
/// uniform distribution.
pub fn expert_ability(m: &[f64], beta: f64) -> Vec<f64> {
    debug_assert!(m.len() >= 2);
    let var = population_variance(m);
    if var <= 0.0 {
        return vec![1.0 / m.len() as f64; m.len()];
    }
    let alpha = (beta / var).sqrt();
    softmax(&m.iter().map(|v| -alpha * v).collect::<Vec<_>>())
}

/// L_S = D(a_E || a_S); a_E is a constant, so gradient reaches only the
/// supervisor parameters feeding a_S.
pub fn self_adaptive_loss<'g>(graph: &'g Graph, a_e: &[f64], a_s: &Var<'g>) -> Result<Var<'g>> {
    let target = graph.constant(Tensor::new(vec![1, a_e.len()], a_e.to_vec())?);
    target.kl_div(a_s)
}

// ── per-example losses ───────────────────────────────────────────────

/// Per-example record of the quantities a batch produces.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExampleOutcome {
    pub m: Vec<f64>,
    pub a_m: Vec<f64>,
    pub a_p: Option<Vec<f64>>,
    pub a_s: Option<Vec<f64>>,
    pub a_e: Option<Vec<f64>>,
    pub l_v: f64,
    pub l_m: f64,
    pub l_s: f64,
    pub l1: f64,
}

/// Aggregate losses over one batch.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct BatchOutcome {
    pub l_v: f64,
    pub l_m: f64,
    pub l_s: f64,
    pub l1: f64,
    pub examples: Vec<ExampleOutcome>,
}

/// Build the stage-1 loss for one example. Returns the loss node plus the
/// detached outcome floats.
pub fn stage1_example_loss<'g>(
    graph: &'g Graph,
    params: &ParamSet,
    cfg: &ModelConfig,
    example: &TrainExample,
    lambda: f64,
    dropout: &mut Option<DropoutCtx<'_>>,
) -> Result<(Var<'g>, ExampleOutcome)> {
    let mut opts = ForwardOpts {
        supervisor: false,
        detach_supervisor_inputs: false,
        dropout: dropout.take(),
    };
    let out = forward(graph, params, cfg, &example.seq, &mut opts)?;
    *dropout = opts.dropout;

    // Each expert's cross-entropy is computed independently.
    let m_scalars: Vec<Var<'g>> = out
        .p
        .iter()
        .map(|p| p.cross_entropy(example.label as usize))
        .collect::<Result<Vec<_>>>()?;
    let m_vec = Var::concat_cols(&m_scalars)?;
    let l_v = verification_loss(&out.a_m, &m_vec)?;

    let a_p = prior::prior_assumption(
        &prior::expand_delta(&example.trigger_mass, cfg.n_e),
        &prior::e0(cfg.n_e),
    )?;
    let l_m = manager_assumption_loss(graph, &a_p, &out.a_m)?;
    let loss = l_v.add(&l_m.scale(lambda))?;

    let outcome = ExampleOutcome {
        m: m_vec.to_vec(),
        a_m: out.a_m.to_vec(),
        a_p: Some(a_p),
        a_s: None,
        a_e: None,
        l_v: l_v.item(),
        l_m: l_m.item(),
        l_s: 0.0,
        l1: loss.item(),
    };
    Ok((loss, outcome))
}

/// Build the stage-2 loss for one example: supervisor inputs detached, expert
/// losses read out as constants for the ability target.
pub fn stage2_example_loss<'g>(
    graph: &'g Graph,
    params: &ParamSet,
    cfg: &ModelConfig,
    example: &TrainExample,
    beta: f64,
) -> Result<(Var<'g>, ExampleOutcome)> {
    let mut opts = ForwardOpts {
        supervisor: true,
        detach_supervisor_inputs: true,
        dropout: None,
    };
    let out = forward(graph, params, cfg, &example.seq, &mut opts)?;
    let a_s = out.a_s.expect("supervisor branch requested");

    let m: Vec<f64> = out
        .p
        .iter()
        .map(|p| crate::tensor::cross_entropy(&p.to_vec(), example.label as usize))
        .collect();
    let a_e = expert_ability(&m, beta);
    let l_s = self_adaptive_loss(graph, &a_e, &a_s)?;

    let outcome = ExampleOutcome {
        m,
        a_m: out.a_m.to_vec(),
        a_p: None,
        a_s: Some(a_s.to_vec()),
        a_e: Some(a_e),
        l_v: 0.0,
        l_m: 0.0,
        l_s: l_s.item(),
        l1: 0.0,
    };
    Ok((l_s, outcome))
}

// ── training loops ───────────────────────────────────────────────────

/// One line of the JSONL training log, emitted at every evaluation event.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LogEvent {
    pub stage: u8,
    pub step: u64,
    pub lr: f64,
    pub train_l_v: f64,
    pub train_l_m: f64,
    pub train_l_s: f64,
    pub train_l1: f64,
    pub dev_accuracy: f64,
    pub per_expert_accuracy: Vec<f64>,
    pub management_topk: Vec<(usize, f64)>,
    pub coverage_at_k: Vec<f64>,
    pub best_so_far: f64,
    pub saved_checkpoint: bool,
}

pub struct StageResult {
    pub best_dev_accuracy: f64,
    pub best_step: u64,
    pub checkpoint_dir: PathBuf,
    pub log_path: PathBuf,
    pub events: Vec<LogEvent>,
    pub final_report: EvalReport,
}

/// Deterministic epoch-shuffled batch index stream.
struct BatchStream {
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl BatchStream {
    fn new(n: usize, seed: u64) -> Self {
        let mut stream = BatchStream {
            order: (0..n).collect(),
            cursor: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        stream.order.shuffle(&mut stream.rng);
        stream
    }

    fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let mut batch = Vec::with_capacity(size);
        for _ in 0..size {
            if self.cursor == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            batch.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        batch
    }
}

fn mean_of(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

struct StepOutput {
    grads: Gradients,
    outcome: BatchOutcome,
}

/// Forward + backward over a batch, examples in parallel, gradients reduced
/// in example order and scaled to the batch mean.
fn run_batch<F>(
    params: &ParamSet,
    batch: &[usize],
    step: u64,
    per_example: F,
) -> Result<StepOutput>
where
    F: Fn(usize, u64) -> Result<(f64, Gradients, ExampleOutcome)> + Sync,
{
    let results: Vec<(f64, Gradients, ExampleOutcome)> = batch
        .par_iter()
        .map(|&idx| per_example(idx, step))
        .collect::<Result<Vec<_>>>()?;
    let mut grads = Gradients::zeros(params.len());
    let mut outcome = BatchOutcome::default();
    for (loss, g, ex) in results {
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged { step, loss });
        }
        grads.accumulate(&g);
        outcome.l_v += ex.l_v;
        outcome.l_m += ex.l_m;
        outcome.l_s += ex.l_s;
        outcome.l1 += ex.l1;
        outcome.examples.push(ex);
    }
    let inv = 1.0 / batch.len() as f64;
    grads.scale(inv);
    outcome.l_v *= inv;
    outcome.l_m *= inv;
    outcome.l_s *= inv;
    outcome.l1 *= inv;
    Ok(StepOutput { grads, outcome })
}

#[allow(clippy::too_many_arguments)]
fn train_loop(
    stage: u8,
    params: &mut ParamSet,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    train: &[TrainExample],
    dev: &[TrainExample],
    out_dir: &Path,
    config_echo: serde_json::Value,
    config_hash: &str,
) -> Result<StageResult> {
    let steps = if stage == 1 {
        train_cfg.steps
    } else {
        train_cfg.steps_stage2
    };
    let attention = if stage == 1 {
        AttentionChoice::Manager
    } else {
        AttentionChoice::Supervisor
    };
    let mut adam = if stage == 1 {
        Adam::new(params, train_cfg.lr_config(steps))?
    } else {
        Adam::with_filter(params, train_cfg.lr_config(steps), |name| {
            crate::model::is_supervisor_param(name)
        })?
    };

    std::fs::create_dir_all(out_dir)?;
    let log_path = out_dir.join("log.jsonl");
    let mut log_file = std::fs::File::create(&log_path)?;
    let checkpoint_dir = out_dir.join("best");

    let shuffle_seed = derive_seed(train_cfg.seed, &format!("stage{stage}.shuffle"));
    let dropout_seed = derive_seed(train_cfg.seed, &format!("stage{stage}.dropout"));
    let mut stream = BatchStream::new(train.len(), shuffle_seed);

    let mut best = f64::NEG_INFINITY;
    let mut best_step = 0;
    let mut events: Vec<LogEvent> = Vec::new();
    let mut window: Vec<BatchOutcome> = Vec::new();
    let mut final_report = None;

    for step in 1..=steps {
        let batch = stream.next_batch(train_cfg.batch_size);
        let output = run_batch(params, &batch, step, |idx, step| {
            let example = &train[idx];
            let graph = Graph::train();
            let (loss, outcome) = if stage == 1 {
                let mut dropout_rng = ChaCha8Rng::seed_from_u64(derive_seed(
                    dropout_seed,
                    &format!("s{step}.e{idx}"),
                ));
                let mut dropout = if model_cfg.dropout > 0.0 {
                    Some(DropoutCtx {
                        rate: model_cfg.dropout,
                        rng: &mut dropout_rng,
                    })
                } else {
                    None
                };
                stage1_example_loss(&graph, params, model_cfg, example, train_cfg.lambda, &mut dropout)?
            } else {
                stage2_example_loss(&graph, params, model_cfg, example, train_cfg.beta)?
            };
            let loss_value = loss.item();
            let grads = graph.backward(loss, params.len())?;
            Ok((loss_value, grads, outcome))
        })?;
        let lr = adam.step(params, &output.grads)?;
        window.push(output.outcome);

        if step.is_multiple_of(train_cfg.eval_interval) {
            let report = evaluate(params, model_cfg, dev, attention)?;
            let accuracy = report.overall_accuracy;
            let saved = accuracy > best;
            if saved {
                best = accuracy;
                best_step = step;
                checkpoint::save(
                    &checkpoint_dir,
                    params,
                    config_echo.clone(),
                    config_hash,
                    step,
                )?;
            }
            let event = LogEvent {
                stage,
                step,
                lr,
                train_l_v: mean_of(&window.iter().map(|b| b.l_v).collect::<Vec<_>>()),
                train_l_m: mean_of(&window.iter().map(|b| b.l_m).collect::<Vec<_>>()),
                train_l_s: mean_of(&window.iter().map(|b| b.l_s).collect::<Vec<_>>()),
                train_l1: mean_of(&window.iter().map(|b| b.l1).collect::<Vec<_>>()),
                dev_accuracy: accuracy,
                per_expert_accuracy: report.per_expert_accuracy.clone(),
                management_topk: report.management_topk.clone(),
                coverage_at_k: report.coverage_at_k.clone(),
                best_so_far: best,
                saved_checkpoint: saved,
            };
            serde_json::to_writer(&mut log_file, &event)?;
            log_file.write_all(b"\n")?;
            events.push(event);
            window.clear();
            final_report = Some(report);
        }
    }

    Ok(StageResult {
        best_dev_accuracy: best,
        best_step,
        checkpoint_dir,
        log_path,
        events,
        final_report: final_report.expect("eval_interval divides steps"),
    })
}

/// Stage 1: end-to-end optimization of feature extractor, experts and
/// manager under L1 = L_V + lambda * L_M. The checkpoint with the best
/// manager-combined dev accuracy is kept.
#[allow(clippy::too_many_arguments)]
pub fn train_stage1(
    params: &mut ParamSet,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    train: &[TrainExample],
    dev: &[TrainExample],
    out_dir: &Path,
    config_echo: serde_json::Value,
    config_hash: &str,
) -> Result<StageResult> {
    train_cfg.validate()?;
    model_cfg.validate()?;
    train_loop(
        1,
        params,
        model_cfg,
        train_cfg,
        train,
        dev,
        out_dir,
        config_echo,
        config_hash,
    )
}

/// Stage 2: only supervisor parameters move, minimizing the mean L_S; model
/// selection scores the supervisor-combined dev accuracy.
#[allow(clippy::too_many_arguments)]
pub fn train_stage2(
    params: &mut ParamSet,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    train: &[TrainExample],
    dev: &[TrainExample],
    out_dir: &Path,
    config_echo: serde_json::Value,
    config_hash: &str,
) -> Result<StageResult> {
    train_cfg.validate()?;
    model_cfg.validate()?;
    if train_cfg.steps_stage2 == 0 {
        return Err(Error::Config("steps_stage2 must be positive".into()));
    }
    train_loop(
        2,
        params,
        model_cfg,
        train_cfg,
        train,
        dev,
        out_dir,
        config_echo,
        config_hash,
    )
}

/// Bitwise snapshot of everything the supervisor stage must not touch.
pub fn non_supervisor_snapshot(params: &ParamSet) -> Vec<(String, Vec<u64>)> {
    params
        .iter()
        .filter(|(_, name, _)| !crate::model::is_supervisor_param(name))
        .map(|(_, name, t)| {
            (
                name.to_string(),
                t.data().iter().map(|v| v.to_bits()).collect(),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::model::init_params;
    use crate::preprocess::{assemble, Vocabulary};

    fn tiny_cfg(vocab_size: usize) -> ModelConfig {
        ModelConfig {
            n_e: 3,
            d: 16,
            n: 16,
            layers_fe: 1,
            layers_expert: 1,
            layers_mgr: 1,
            layers_sup: 1,
            heads: 2,
            dropout: 0.0,
            vocab_size,
            ffn_mult: 2,
        }
    }

    fn tiny_examples(vocab: &Vocabulary, n: usize, total: usize) -> Vec<TrainExample> {
        (0..total)
            .map(|i| {
                let s = vocab.encode(if i % 2 == 0 { "alice score 3" } else { "bob score 5" });
                let t = vocab.encode("name is alice ; score is 3");
                TrainExample {
                    example_id: format!("e{i}"),
                    seq: assemble(&s, &t, n, vocab).unwrap(),
                    label: (i % 2) as u8,
                    subset: Subset::Unknown,
                    trigger_mass: [0.0; 4],
                }
            })
            .collect()
    }

    fn tiny_vocab() -> Vocabulary {
        Vocabulary::build(
            ["alice bob score name is ; 3 5 row 1 :"].iter().copied(),
            1,
        )
    }

    #[test]
    fn verification_loss_examples() {
        let g = Graph::eval();
        let a = g.constant(Tensor::new(vec![1, 2], vec![1.0, 0.0]).unwrap());
        let m = g.constant(Tensor::new(vec![1, 2], vec![0.2, 9.9]).unwrap());
        assert!((verification_loss(&a, &m).unwrap().item() - 0.2).abs() < 1e-12);

        let a = g.constant(Tensor::new(vec![1, 2], vec![0.5, 0.5]).unwrap());
        let m = g.constant(Tensor::new(vec![1, 2], vec![0.2, 0.4]).unwrap());
        assert!((verification_loss(&a, &m).unwrap().item() - 0.3).abs() < 1e-12);

        let m = g.constant(Tensor::new(vec![1, 2], vec![0.0, 0.0]).unwrap());
        assert_eq!(verification_loss(&a, &m).unwrap().item(), 0.0);
    }

    #[test]
    fn verification_loss_gradient_wrt_attention_is_m() {
        // With a entering L_V directly, dL_V/da_i = m_i.
        let mut ps = ParamSet::new();
        ps.add("a", Tensor::new(vec![1, 3], vec![0.2, 0.5, 0.3]).unwrap())
            .unwrap();
        let g = Graph::train();
        let a = g.param(&ps, ps.id_of("a").unwrap());
        let m_vals = [0.7, 0.1, 1.9];
        let m = g.constant(Tensor::new(vec![1, 3], m_vals.to_vec()).unwrap());
        let loss = verification_loss(&a, &m).unwrap();
        let grads = g.backward(loss, ps.len()).unwrap();
        let got = grads.get(ps.id_of("a").unwrap()).unwrap();
        for (gi, mi) in got.iter().zip(&m_vals) {
            assert!((gi - mi).abs() < 1e-12);
        }
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn manager_loss_examples() {
        let g = Graph::eval();
        let a_m = g.constant(Tensor::new(vec![1, 2], vec![0.2, 0.8]).unwrap());
        assert_eq!(
            manager_assumption_loss(&g, &[0.2, 0.8], &a_m).unwrap().item(),
            0.0
        );
        let a_m = g.constant(Tensor::new(vec![1, 2], vec![0.5, 0.5]).unwrap());
        let l = manager_assumption_loss(&g, &[1.0, 0.0], &a_m).unwrap();
        assert!((l.item() - 0.6931).abs() < 1e-4);
    }

    #[test]
    fn manager_loss_stationary_at_match() {
        // a_M = softmax(e); with a_P equal to a_M the gradient in e vanishes.
        let mut ps = ParamSet::new();
        ps.add("e", Tensor::new(vec![1, 4], vec![0.3, -0.2, 0.9, 0.0]).unwrap())
            .unwrap();
        let g = Graph::train();
        let e = g.param(&ps, ps.id_of("e").unwrap());
        let a_m = e.softmax_rows().unwrap();
        let a_p = a_m.to_vec();
        let loss = manager_assumption_loss(&g, &a_p, &a_m).unwrap();
        let grads = g.backward(loss, ps.len()).unwrap();
        for v in grads.get(ps.id_of("e").unwrap()).unwrap() {
            assert!(v.abs() < 1e-9, "gradient component {v}");
        }
    }

    #[test]
    fn expert_ability_hand_example() {
        // m = (0.2, 0.4), beta = 0.1: Var = 0.01, alpha = sqrt(10).
        let a_e = expert_ability(&[0.2, 0.4], 0.1);
        assert!((a_e[0] - 0.6531).abs() < 1e-3, "{a_e:?}");
        assert!((a_e[1] - 0.3469).abs() < 1e-3, "{a_e:?}");
    }

    #[test]
    fn expert_ability_degenerate_uniform() {
        let a_e = expert_ability(&[0.7, 0.7, 0.7], 0.1);
        assert_eq!(a_e, vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn expert_ability_variance_is_beta() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let n = rng.gen_range(2..6);
            let m: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..3.0)).collect();
            let beta = rng.gen_range(0.01..1.0);
            if population_variance(&m) <= 0.0 {
                continue;
            }
            let alpha = (beta / population_variance(&m)).sqrt();
            let scaled: Vec<f64> = m.iter().map(|v| -alpha * v).collect();
            assert!((population_variance(&scaled) - beta).abs() < 1e-9);
        }
    }

    #[test]
    fn expert_ability_ordering() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let m: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..2.0)).collect();
            let a_e = expert_ability(&m, 0.1);
            for i in 0..4 {
                for j in 0..4 {
                    if m[i] < m[j] {
                        assert!(a_e[i] > a_e[j], "m={m:?} a_e={a_e:?}");
                    }
                }
            }
            // KL target matching: the best expert gets the highest ability.
            assert_eq!(
                crate::tensor::argmax(&a_e),
                crate::tensor::argmin(&m)
            );
        }
    }

    #[test]
    fn self_adaptive_loss_zero_at_match() {
        let g = Graph::eval();
        let a_s = g.constant(Tensor::new(vec![1, 3], vec![0.2, 0.3, 0.5]).unwrap());
        let l = self_adaptive_loss(&g, &[0.2, 0.3, 0.5], &a_s).unwrap();
        assert!(l.item().abs() < 1e-12);
    }

    #[test]
    fn l1_assembles_exactly() {
        let vocab = tiny_vocab();
        let cfg = tiny_cfg(vocab.len());
        let params = init_params(&cfg, 3).unwrap();
        let examples = tiny_examples(&vocab, cfg.n, 2);
        for lambda in [0.0, 0.1, 0.7] {
            let graph = Graph::eval();
            let (loss, outcome) =
                stage1_example_loss(&graph, &params, &cfg, &examples[0], lambda, &mut None)
                    .unwrap();
            let expected = outcome.l_v + lambda * outcome.l_m;
            assert!(
                (loss.item() - expected).abs() < 1e-12,
                "lambda={lambda}: {} vs {expected}",
                loss.item()
            );
        }
    }

    #[test]
    fn stage2_moves_only_supervisor_params() {
        let vocab = tiny_vocab();
        let cfg = tiny_cfg(vocab.len());
        let mut params = init_params(&cfg, 4).unwrap();
        let examples = tiny_examples(&vocab, cfg.n, 8);
        let frozen_before = non_supervisor_snapshot(&params);
        let dir = tempfile::tempdir().unwrap();
        let train_cfg = TrainConfig {
            steps: 4,
            steps_stage2: 4,
            eval_interval: 4,
            batch_size: 4,
            base_lr: 1e-2,
            warmup_steps: 1,
            ..TrainConfig::default()
        };
        train_stage2(
            &mut params,
            &cfg,
            &train_cfg,
            &examples,
            &examples,
            dir.path(),
            serde_json::json!({}),
            "h",
        )
        .unwrap();
        let frozen_after = non_supervisor_snapshot(&params);
        assert_eq!(frozen_before, frozen_after, "non-supervisor params moved");
        // And the supervisor head did move.
        let id = params.id_of("sup.head.w2").unwrap();
        assert!(params.get(id).data().iter().any(|v| *v != 0.0));
    }

    #[test]
    fn stage1_deterministic_across_runs() {
        let vocab = tiny_vocab();
        let cfg = tiny_cfg(vocab.len());
        let examples = tiny_examples(&vocab, cfg.n, 8);
        let train_cfg = TrainConfig {
            steps: 6,
            steps_stage2: 2,
            eval_interval: 2,
            batch_size: 4,
            base_lr: 1e-2,
            warmup_steps: 2,
            ..TrainConfig::default()
        };
        let run = || {
            let mut params = init_params(&cfg, 5).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let result = train_stage1(
                &mut params,
                &cfg,
                &train_cfg,
                &examples,
                &examples,
                dir.path(),
                serde_json::json!({}),
                "h",
            )
            .unwrap();
            (
                result
                    .events
                    .iter()
                    .map(|e| (e.train_l1, e.dev_accuracy))
                    .collect::<Vec<_>>(),
                params.snapshot(),
            )
        };
        let (events_a, snap_a) = run();
        let (events_b, snap_b) = run();
        assert_eq!(events_a, events_b);
        assert_eq!(snap_a, snap_b);
    }

    #[test]
    fn checkpoint_selection_is_running_max() {
        let vocab = tiny_vocab();
        let cfg = tiny_cfg(vocab.len());
        let examples = tiny_examples(&vocab, cfg.n, 8);
        let train_cfg = TrainConfig {
            steps: 8,
            steps_stage2: 2,
            eval_interval: 2,
            batch_size: 4,
            base_lr: 5e-3,
            warmup_steps: 2,
            ..TrainConfig::default()
        };
        let mut params = init_params(&cfg, 6).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let result = train_stage1(
            &mut params,
            &cfg,
            &train_cfg,
            &examples,
            &examples,
            dir.path(),
            serde_json::json!({}),
            "h",
        )
        .unwrap();
        let mut running_max = f64::NEG_INFINITY;
        for e in &result.events {
            running_max = running_max.max(e.dev_accuracy);
            assert_eq!(e.best_so_far, running_max);
            assert_eq!(e.saved_checkpoint, e.dev_accuracy == running_max && {
                // saved only when strictly improving
                e.dev_accuracy > result
                    .events
                    .iter()
                    .take_while(|p| p.step < e.step)
                    .map(|p| p.dev_accuracy)
                    .fold(f64::NEG_INFINITY, f64::max)
            });
        }
        assert!(result.checkpoint_dir.join("manifest.json").exists());
    }
}
