//! The SaMoE network: a shared transformer feature extractor feeding n_e
//! expert heads, a manager that scores experts, and a supervisor that adjusts
//! the manager's scores additively in logit space.
//!
//! Classifier heads follow the bias-free form p = softmax(tanh(h W1) W2);
//! encoder blocks are pre-norm residual transformer layers with learned
//! position embeddings.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::params::{derive_seed, ParamSet};
use crate::preprocess::TokenSequence;
use crate::tensor::Tensor;

const LN_EPS: f64 = 1e-5;
const MASK_NEG: f64 = -1e9;
const EMBED_INIT_STD: f64 = 0.02;

/// Fan-in scaled init for weight matrices. The small fixed std used for
/// pretrained-scale models starves signal propagation at desk scale, where
/// runs are a few hundred steps.
fn weight_init(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::randn(vec![rows, cols], 1.0 / (rows as f64).sqrt(), rng)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct ModelConfig {
    /// Number of experts.
    pub n_e: usize,
    /// Hidden width.
    pub d: usize,
    /// Maximum input length.
    pub n: usize,
    pub layers_fe: usize,
    pub layers_expert: usize,
    pub layers_mgr: usize,
    pub layers_sup: usize,
    pub heads: usize,
    pub dropout: f64,
    pub vocab_size: usize,
    /// FFN hidden width multiplier.
    #[serde(default = "default_ffn_mult")]
    pub ffn_mult: usize,
}

fn default_ffn_mult() -> usize {
    4
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_e: 5,
            d: 64,
            n: 128,
            layers_fe: 2,
            layers_expert: 2,
            layers_mgr: 1,
            layers_sup: 1,
            heads: 4,
            dropout: 0.1,
            vocab_size: 0,
            ffn_mult: 4,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_e < 1 {
            return Err(Error::Config("n_e must be at least 1".into()));
        }
        if self.d == 0 || self.heads == 0 || !self.d.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "d ({}) must be a positive multiple of heads ({})",
                self.d, self.heads
            )));
        }
        if self.n < 4 {
            return Err(Error::Config("n must be at least 4".into()));
        }
        for (name, v) in [
            ("layers_fe", self.layers_fe),
            ("layers_expert", self.layers_expert),
            ("layers_mgr", self.layers_mgr),
            ("layers_sup", self.layers_sup),
            ("ffn_mult", self.ffn_mult),
        ] {
            if v < 1 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.vocab_size < 4 {
            return Err(Error::Config(
                "vocab_size must cover the four special tokens".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Parameter name prefixes for the supervisor subtree; stage-2 training
/// updates exactly these.
pub fn is_supervisor_param(name: &str) -> bool {
    name.starts_with("sup.")
}

fn add_encoder_stack(
    params: &mut ParamSet,
    prefix: &str,
    layers: usize,
    cfg: &ModelConfig,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let d = cfg.d;
    let h = cfg.d * cfg.ffn_mult;
    for l in 0..layers {
        let p = format!("{prefix}.l{l}");
        params.add(&format!("{p}.ln1.g"), Tensor::full(vec![1, d], 1.0))?;
        params.add(&format!("{p}.ln1.b"), Tensor::zeros(vec![1, d]))?;
        for w in ["wq", "wk", "wv", "wo"] {
            params.add(&format!("{p}.attn.{w}"), weight_init(d, d, rng))?;
        }
        for b in ["bq", "bk", "bv", "bo"] {
            params.add(&format!("{p}.attn.{b}"), Tensor::zeros(vec![1, d]))?;
        }
        params.add(&format!("{p}.ln2.g"), Tensor::full(vec![1, d], 1.0))?;
        params.add(&format!("{p}.ln2.b"), Tensor::zeros(vec![1, d]))?;
        params.add(&format!("{p}.ffn.w1"), weight_init(d, h, rng))?;
        params.add(&format!("{p}.ffn.b1"), Tensor::zeros(vec![1, h]))?;
        params.add(&format!("{p}.ffn.w2"), weight_init(h, d, rng))?;
        params.add(&format!("{p}.ffn.b2"), Tensor::zeros(vec![1, d]))?;
    }
    params.add(&format!("{prefix}.lnf.g"), Tensor::full(vec![1, d], 1.0))?;
    params.add(&format!("{prefix}.lnf.b"), Tensor::zeros(vec![1, d]))?;
    Ok(())
}

/// Random initialization: scaled normal (std 0.02) weights, zero biases,
/// unit layer-norm gains. The supervisor's output matrix starts at zero so
/// the untrained supervisor reproduces the manager's scores exactly.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<ParamSet> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "model.init"));
    let mut params = ParamSet::new();
    params.add(
        "embed.tok",
        Tensor::randn(vec![cfg.vocab_size, cfg.d], EMBED_INIT_STD, &mut rng),
    )?;
    params.add(
        "embed.pos",
        Tensor::randn(vec![cfg.n, cfg.d], EMBED_INIT_STD, &mut rng),
    )?;
    add_encoder_stack(&mut params, "fe", cfg.layers_fe, cfg, &mut rng)?;
    for i in 0..cfg.n_e {
        let prefix = format!("expert{i}");
        add_encoder_stack(&mut params, &prefix, cfg.layers_expert, cfg, &mut rng)?;
        params.add(&format!("{prefix}.head.w1"), weight_init(cfg.d, cfg.d, &mut rng))?;
        params.add(
            &format!("{prefix}.head.w2"),
            weight_init(cfg.d, 2, &mut rng),
        )?;
    }
    add_encoder_stack(&mut params, "mgr", cfg.layers_mgr, cfg, &mut rng)?;
    params.add("mgr.head.w1", weight_init(cfg.d, cfg.d, &mut rng))?;
    params.add("mgr.head.w2", weight_init(cfg.d, cfg.n_e, &mut rng))?;
    add_encoder_stack(&mut params, "sup", cfg.layers_sup, cfg, &mut rng)?;
    params.add("sup.head.w1", weight_init(cfg.d, cfg.d, &mut rng))?;
    params.add("sup.head.w2", Tensor::zeros(vec![cfg.d, cfg.n_e]))?;
    Ok(params)
}

/// Dropout source for a training forward pass.
pub struct DropoutCtx<'r> {
    pub rate: f64,
    pub rng: &'r mut ChaCha8Rng,
}

pub struct ForwardOpts<'r> {
    /// Run the supervisor branch.
    pub supervisor: bool,
    /// Feed the supervisor detached copies of H and e_M so gradient reaches
    /// only supervisor parameters (stage-2 training).
    pub detach_supervisor_inputs: bool,
    pub dropout: Option<DropoutCtx<'r>>,
}

impl ForwardOpts<'_> {
    pub fn inference(supervisor: bool) -> Self {
        ForwardOpts {
            supervisor,
            detach_supervisor_inputs: false,
            dropout: None,
        }
    }
}

/// Graph handles for one example's forward pass.
pub struct ForwardVars<'g> {
    pub h: Var<'g>,
    /// Per-expert probability pairs p_i, each (1, 2).
    pub p: Vec<Var<'g>>,
    pub e_m: Var<'g>,
    pub a_m: Var<'g>,
    pub e_s: Option<Var<'g>>,
    pub a_s: Option<Var<'g>>,
}

fn maybe_dropout<'g>(x: Var<'g>, dropout: &mut Option<DropoutCtx<'_>>) -> Var<'g> {
    match dropout {
        Some(ctx) => x.dropout(ctx.rate, ctx.rng),
        None => x,
    }
}

#[allow(clippy::too_many_arguments)]
fn encoder_stack<'g>(
    graph: &'g Graph,
    params: &ParamSet,
    cfg: &ModelConfig,
    prefix: &str,
    layers: usize,
    mut x: Var<'g>,
    mask: Var<'g>,
    dropout: &mut Option<DropoutCtx<'_>>,
) -> Result<Var<'g>> {
    let p = |name: String| -> Result<Var<'g>> { Ok(graph.param(params, params.id_of(&name)?)) };
    let dk = cfg.d / cfg.heads;
    let scale = 1.0 / (dk as f64).sqrt();
    for l in 0..layers {
        let lp = format!("{prefix}.l{l}");
        // Attention sublayer, pre-norm.
        let normed = x.layer_norm(
            &p(format!("{lp}.ln1.g"))?,
            &p(format!("{lp}.ln1.b"))?,
            LN_EPS,
        )?;
        let q = normed
            .matmul(&p(format!("{lp}.attn.wq"))?)?
            .add_bias_row(&p(format!("{lp}.attn.bq"))?)?;
        let k = normed
            .matmul(&p(format!("{lp}.attn.wk"))?)?
            .add_bias_row(&p(format!("{lp}.attn.bk"))?)?;
        let v = normed
            .matmul(&p(format!("{lp}.attn.wv"))?)?
            .add_bias_row(&p(format!("{lp}.attn.bv"))?)?;
        let mut head_outs = Vec::with_capacity(cfg.heads);
        for h in 0..cfg.heads {
            let (lo, hi) = (h * dk, (h + 1) * dk);
            let qh = q.slice_cols(lo, hi)?;
            let kh = k.slice_cols(lo, hi)?;
            let vh = v.slice_cols(lo, hi)?;
            let scores = qh.matmul_nt(&kh)?.scale(scale).add(&mask)?;
            let attn = scores.softmax_rows()?;
            head_outs.push(attn.matmul(&vh)?);
        }
        let concat = Var::concat_cols(&head_outs)?;
        let proj = concat
            .matmul(&p(format!("{lp}.attn.wo"))?)?
            .add_bias_row(&p(format!("{lp}.attn.bo"))?)?;
        let proj = maybe_dropout(proj, dropout);
        x = x.add(&proj)?;
        // FFN sublayer, pre-norm.
        let normed = x.layer_norm(
            &p(format!("{lp}.ln2.g"))?,
            &p(format!("{lp}.ln2.b"))?,
            LN_EPS,
        )?;
        let hidden = normed
            .matmul(&p(format!("{lp}.ffn.w1"))?)?
            .add_bias_row(&p(format!("{lp}.ffn.b1"))?)?
            .gelu();
        let ff = hidden
            .matmul(&p(format!("{lp}.ffn.w2"))?)?
            .add_bias_row(&p(format!("{lp}.ffn.b2"))?)?;
        let ff = maybe_dropout(ff, dropout);
        x = x.add(&ff)?;
    }
    x.layer_norm(
        &p(format!("{prefix}.lnf.g"))?,
        &p(format!("{prefix}.lnf.b"))?,
        LN_EPS,
    )
}

/// Additive attention mask: 0 over non-pad keys, a large negative constant
/// over pad keys, identical for every query row.
fn attention_mask<'g>(graph: &'g Graph, seq: &TokenSequence) -> Var<'g> {
    let n = seq.ids.len();
    let mut data = vec![0.0; n * n];
    for (j, &keep) in seq.mask.iter().enumerate() {
        if !keep {
            for i in 0..n {
                data[i * n + j] = MASK_NEG;
            }
        }
    }
    graph.constant(Tensor::new(vec![n, n], data).expect("mask"))
}

/// Token + position embeddings through the shared feature-extractor stack.
/// Produces the n x d joint representation with pad keys masked out of
/// every attention row.
pub fn extract_features<'g>(
    graph: &'g Graph,
    params: &ParamSet,
    cfg: &ModelConfig,
    seq: &TokenSequence,
    dropout: &mut Option<DropoutCtx<'_>>,
) -> Result<Var<'g>> {
    if seq.ids.len() != cfg.n {
        return Err(Error::ShapeMismatch {
            op: "extract_features",
            lhs: vec![seq.ids.len()],
            rhs: vec![cfg.n],
        });
    }
    let ids: Vec<usize> = seq.ids.iter().map(|&i| i as usize).collect();
    let tok = graph
        .param(params, params.id_of("embed.tok")?)
        .gather_rows(&ids)?;
    let pos = graph.param(params, params.id_of("embed.pos")?);
    let mut x = tok.add(&pos)?;
    x = maybe_dropout(x, dropout);
    let mask = attention_mask(graph, seq);
    encoder_stack(graph, params, cfg, "fe", cfg.layers_fe, x, mask, dropout)
}

fn head_scores<'g>(
    graph: &'g Graph,
    params: &ParamSet,
    encoded: Var<'g>,
    w1: &str,
    w2: &str,
) -> Result<Var<'g>> {
    let h = encoded.row(0)?;
    let w1 = graph.param(params, params.id_of(w1)?);
    let w2 = graph.param(params, params.id_of(w2)?);
    h.matmul(&w1)?.tanh().matmul(&w2)
}

/// p_i = softmax(tanh(h_i W1_i) W2_i), h_i read at the <s> slot of the i-th
/// expert encoder's output.
pub fn expert_forward<'g>(
    graph: &'g Graph,
    params: &ParamSet,
    cfg: &ModelConfig,
    h: Var<'g>,
    mask: Var<'g>,
    expert: usize,
    dropout: &mut Option<DropoutCtx<'_>>,
) -> Result<Var<'g>> {
    if expert >= cfg.n_e {
        return Err(Error::IndexOutOfBounds {
            op: "expert_forward",
            index: expert,
            bound: cfg.n_e,
        });
    }
    let prefix = format!("expert{expert}");
    let encoded = encoder_stack(
        graph,
        params,
        cfg,
        &prefix,
        cfg.layers_expert,
        h,
        mask,
        dropout,
    )?;
    head_scores(
        graph,
        params,
        encoded,
        &format!("{prefix}.head.w1"),
        &format!("{prefix}.head.w2"),
    )?
    .softmax_rows()
}

/// Manager scores: e_M = tanh(h_M W1_M) W2_M, a_M = softmax(e_M).
pub fn manager_forward<'g>(
    graph: &'g Graph,
    params: &ParamSet,
    cfg: &ModelConfig,
    h: Var<'g>,
    mask: Var<'g>,
    dropout: &mut Option<DropoutCtx<'_>>,
) -> Result<(Var<'g>, Var<'g>)> {
    let encoded = encoder_stack(graph, params, cfg, "mgr", cfg.layers_mgr, h, mask, dropout)?;
    let e_m = head_scores(graph, params, encoded, "mgr.head.w1", "mgr.head.w2")?;
    let a_m = e_m.softmax_rows()?;
    Ok((e_m, a_m))
}

/// Supervisor adjustment: a_S = softmax(e_M + e_S).
pub fn supervisor_forward<'g>(
    graph: &'g Graph,
    params: &ParamSet,
    cfg: &ModelConfig,
    h: Var<'g>,
    mask: Var<'g>,
    e_m: Var<'g>,
    dropout: &mut Option<DropoutCtx<'_>>,
) -> Result<(Var<'g>, Var<'g>)> {
    let encoded = encoder_stack(graph, params, cfg, "sup", cfg.layers_sup, h, mask, dropout)?;
    let e_s = head_scores(graph, params, encoded, "sup.head.w1", "sup.head.w2")?;
    let a_s = e_m.add(&e_s)?.softmax_rows()?;
    Ok((e_s, a_s))
}

/// Weighted combination p_final = sum_i a_i * p_i.
pub fn combine<'g>(attention: &Var<'g>, probs: &[Var<'g>]) -> Result<Var<'g>> {
    Var::combine(attention, probs)
}

/// Full forward pass for one example.
pub fn forward<'g>(
    graph: &'g Graph,
    params: &ParamSet,
    cfg: &ModelConfig,
    seq: &TokenSequence,
    opts: &mut ForwardOpts<'_>,
) -> Result<ForwardVars<'g>> {
    let h = extract_features(graph, params, cfg, seq, &mut opts.dropout)?;
    let mask = attention_mask(graph, seq);
    let mut p = Vec::with_capacity(cfg.n_e);
    for i in 0..cfg.n_e {
        p.push(expert_forward(
            graph,
            params,
            cfg,
            h,
            mask,
            i,
            &mut opts.dropout,
        )?);
    }
    let (e_m, a_m) = manager_forward(graph, params, cfg, h, mask, &mut opts.dropout)?;
    let (e_s, a_s) = if opts.supervisor {
        let (h_in, e_in) = if opts.detach_supervisor_inputs {
            (h.detach(), e_m.detach())
        } else {
            (h, e_m)
        };
        let (e_s, a_s) =
            supervisor_forward(graph, params, cfg, h_in, mask, e_in, &mut opts.dropout)?;
        (Some(e_s), Some(a_s))
    } else {
        (None, None)
    };
    Ok(ForwardVars {
        h,
        p,
        e_m,
        a_m,
        e_s,
        a_s,
    })
}

/// Plain-float forward outputs for evaluation and prediction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ForwardResult {
    pub p: Vec<Vec<f64>>,
    pub e_m: Vec<f64>,
    pub a_m: Vec<f64>,
    pub e_s: Option<Vec<f64>>,
    pub a_s: Option<Vec<f64>>,
}

/// Evaluation-mode forward pass producing detached floats.
pub fn forward_eval(
    params: &ParamSet,
    cfg: &ModelConfig,
    seq: &TokenSequence,
    supervisor: bool,
) -> Result<ForwardResult> {
    let graph = Graph::eval();
    let mut opts = ForwardOpts::inference(supervisor);
    let vars = forward(&graph, params, cfg, seq, &mut opts)?;
    Ok(ForwardResult {
        p: vars.p.iter().map(Var::to_vec).collect(),
        e_m: vars.e_m.to_vec(),
        a_m: vars.a_m.to_vec(),
        e_s: vars.e_s.as_ref().map(Var::to_vec),
        a_s: vars.a_s.as_ref().map(Var::to_vec),
    })
}

/// Validate that a loaded checkpoint matches the parameter layout this config
/// produces.
pub fn check_params_layout(params: &ParamSet, cfg: &ModelConfig) -> Result<()> {
    let reference = init_params(cfg, 0)?;
    if params.len() != reference.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint has {} parameters, config implies {}",
            params.len(),
            reference.len()
        )));
    }
    for (id, name, t) in reference.iter() {
        let pid = params
            .id_of(name)
            .map_err(|_| Error::Checkpoint(format!("checkpoint lacks parameter '{name}'")))?;
        if params.get(pid).shape() != t.shape() {
            return Err(Error::Checkpoint(format!(
                "parameter '{}' has shape {:?}, config implies {:?}",
                name,
                params.get(pid).shape(),
                reference.get(id).shape()
            )));
        }
    }
    Ok(())
}
