//! Command-line pipeline: gen-data, preprocess, train, adapt, eval, predict.
//!
//! One JSON config file carries the model/train/preprocess/prior sections;
//! flags override individual fields, and every run directory receives a
//! `run.json` manifest with the effective merged config, hashes, and artifact
//! paths. Exit codes: 0 success, 2 usage/config/missing-artifact errors,
//! 3 training divergence.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint;
use crate::data::synth::{generate_synthetic, write_dataset, GenConfig};
use crate::data::{load_dataset, Table};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, render_summary, AttentionChoice};
use crate::model::{check_params_layout, forward_eval, ModelConfig};
use crate::preprocess::{
    prepare, read_cache, vocab_corpus, write_cache, Cache, CachedMeta, CachedSplit,
    PreprocessConfig, Vocabulary,
};
use crate::prior::{trigger_mass, TriggerPool};
use crate::tensor::{argmax, cross_entropy};
use crate::training::{
    examples_from_cache, train_stage1, train_stage2, TrainConfig, TrainExample,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Clone, Debug, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct PriorConfig {
    /// Path to a trigger pool JSON array; the built-in pool when absent.
    pub trigger_pool: Option<PathBuf>,
}

/// The full configuration file: one section per subsystem.
#[derive(Clone, Debug, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct AppConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub preprocess: PreprocessConfig,
    pub prior: PriorConfig,
    pub gen: GenConfig,
}

impl AppConfig {
    pub fn load(path: Option<&Path>) -> Result<AppConfig> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    Error::Config(format!("cannot read config {}: {e}", p.display()))
                })?;
                Ok(serde_json::from_str(&text)?)
            }
            None => Ok(AppConfig::default()),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

fn config_hash(value: &serde_json::Value) -> Result<String> {
    Ok(sha256_hex(serde_json::to_string(value)?.as_bytes()))
}

fn runs_root() -> PathBuf {
    std::env::var_os("SAMOE_RUNS_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// Manifest written into every artifact directory; enough to re-execute the
/// producing command bit-identically.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub command: Vec<String>,
    pub seed: u64,
    pub config: serde_json::Value,
    pub config_hash: String,
    pub inputs: std::collections::BTreeMap<String, String>,
    pub artifacts: std::collections::BTreeMap<String, String>,
    pub stage1_done: bool,
    pub stage2_done: bool,
}

fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(
        dir.join("run.json"),
        serde_json::to_string_pretty(manifest)?,
    )?;
    Ok(())
}

#[derive(Parser, Debug)]
#[command(
    name = "samoe",
    version,
    about = "Mixture-of-experts table fact verification: data generation, training, evaluation"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic statement/table dataset with oracle labels.
    GenData(GenDataArgs),
    /// Tokenize a dataset into the fixed-length id cache.
    Preprocess(PreprocessArgs),
    /// Multi-expert training (stage 1), or stage 2 via --stage 2.
    Train(TrainArgs),
    /// Self-adaptive supervisor training on a stage-1 checkpoint.
    Adapt(AdaptArgs),
    /// Evaluate a checkpoint on a cached split and write a report.
    Eval(EvalArgs),
    /// Per-example verdicts with attention scores and expert probabilities.
    Predict(PredictArgs),
}

#[derive(Args, Debug)]
struct GenDataArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_dev: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
}

#[derive(Args, Debug)]
struct PreprocessArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory produced by gen-data (train.jsonl, tables/).
    #[arg(long)]
    data: PathBuf,
    /// Output cache directory.
    #[arg(long)]
    out: PathBuf,
    /// Maximum input length n.
    #[arg(long)]
    max_len: Option<usize>,
    /// Trigger pool JSON overriding the built-in pool.
    #[arg(long)]
    trigger_pool: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preprocess cache directory.
    #[arg(long)]
    data: PathBuf,
    /// Run directory (default under SAMOE_RUNS_DIR).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// 1 = multi-expert training, 2 = self-adaptive (needs --stage1).
    #[arg(long, default_value_t = 1)]
    stage: u8,
    /// Stage-1 run or checkpoint directory, required when --stage 2.
    #[arg(long)]
    stage1: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AdaptArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Stage-1 run or checkpoint directory.
    #[arg(long)]
    stage1: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AttentionArg {
    Manager,
    Supervisor,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Checkpoint directory (or a run directory containing best/).
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "dev")]
    split: String,
    #[arg(long, value_enum, default_value_t = AttentionArg::Supervisor)]
    attention: AttentionArg,
    /// Where to write the JSON report (a .txt summary lands next to it).
    #[arg(long)]
    report_path: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "dev")]
    split: String,
    #[arg(long, value_enum, default_value_t = AttentionArg::Supervisor)]
    attention: AttentionArg,
    /// Output JSONL file.
    #[arg(long)]
    out: PathBuf,
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(argv.iter().cloned()) {
        Ok(cli) => cli,
        Err(e) => {
            // clap exits 0 for --help/--version, 2 for usage errors.
            return e.exit_code();
        }
    };
    let command_echo: Vec<String> = argv
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    match run(cli, command_echo) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::TrainingDiverged { .. } => EXIT_DIVERGED,
                _ => EXIT_USAGE,
            }
        }
    }
}

pub fn run(cli: Cli, command_echo: Vec<String>) -> Result<()> {
    match cli.command {
        Command::GenData(args) => cmd_gen_data(args, command_echo),
        Command::Preprocess(args) => cmd_preprocess(args, command_echo),
        Command::Train(args) => cmd_train(args, command_echo),
        Command::Adapt(args) => cmd_adapt(args, command_echo),
        Command::Eval(args) => cmd_eval(args, command_echo),
        Command::Predict(args) => cmd_predict(args, command_echo),
    }
}

// ── gen-data ─────────────────────────────────────────────────────────

fn cmd_gen_data(args: GenDataArgs, command_echo: Vec<String>) -> Result<()> {
    let mut config = AppConfig::load(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.gen.seed = seed;
    }
    if let Some(n) = args.n_train {
        config.gen.n_train = n;
    }
    if let Some(n) = args.n_dev {
        config.gen.n_dev = n;
    }
    if let Some(n) = args.n_test {
        config.gen.n_test = n;
    }
    let data = generate_synthetic(&config.gen)?;
    std::fs::create_dir_all(&args.out)?;
    write_dataset(&args.out, &data)?;
    let config_json = serde_json::to_value(&config)?;
    let manifest = RunManifest {
        run_id: format!("gen-{}", &config_hash(&config_json)?[..8]),
        command: command_echo,
        seed: config.gen.seed,
        config_hash: config_hash(&config_json)?,
        config: config_json,
        inputs: Default::default(),
        artifacts: [
            ("dataset_dir".to_string(), args.out.display().to_string()),
        ]
        .into(),
        stage1_done: false,
        stage2_done: false,
    };
    write_manifest(&args.out, &manifest)?;
    println!(
        "wrote {} train / {} dev / {} test examples to {}",
        data.train.len(),
        data.dev.len(),
        data.test.len(),
        args.out.display()
    );
    Ok(())
}

// ── preprocess ───────────────────────────────────────────────────────

fn load_pool(path: Option<&Path>) -> Result<TriggerPool> {
    match path {
        Some(p) => TriggerPool::from_file(p),
        None => Ok(TriggerPool::builtin()),
    }
}

fn cmd_preprocess(args: PreprocessArgs, command_echo: Vec<String>) -> Result<()> {
    let mut config = AppConfig::load(args.config.as_deref())?;
    if let Some(n) = args.max_len {
        config.preprocess.max_len = n;
    }
    if let Some(p) = &args.trigger_pool {
        config.prior.trigger_pool = Some(p.clone());
    }
    config.preprocess.validate()?;
    let pool = load_pool(config.prior.trigger_pool.as_deref())?;

    let tables_dir = args.data.join("tables");
    let train_path = args.data.join("train.jsonl");
    if !train_path.exists() {
        return Err(Error::MissingArtifact(format!(
            "dataset split {}",
            train_path.display()
        )));
    }
    let mut splits: Vec<(String, Vec<(crate::data::Example, Table)>)> = Vec::new();
    for split in ["train", "dev", "test"] {
        let path = args.data.join(format!("{split}.jsonl"));
        if path.exists() {
            splits.push((split.to_string(), load_dataset(&path, &tables_dir)?));
        }
    }

    // Vocabulary from the training split only.
    let train_pairs: Vec<(String, Table)> = splits[0]
        .1
        .iter()
        .map(|(e, t)| (e.statement.clone(), t.clone()))
        .collect();
    let vocab = Vocabulary::build(
        vocab_corpus(&train_pairs).iter().map(|s| s.as_str()),
        config.preprocess.min_freq,
    );

    let hash_input = serde_json::json!({
        "preprocess": config.preprocess,
        "pool": pool.to_json()?,
    });
    let cache_hash = config_hash(&hash_input)?;

    let mut cached_splits = Vec::new();
    for (name, pairs) in &splits {
        let mut meta = Vec::with_capacity(pairs.len());
        let mut sequences = Vec::with_capacity(pairs.len());
        for (example, table) in pairs {
            let seq = prepare(&example.statement, table, &vocab, &config.preprocess)?;
            meta.push(CachedMeta {
                example_id: example.example_id.clone(),
                label: example.label,
                subset: example.subset,
                reasoning_types: example.reasoning_types.iter().copied().collect(),
                delta: trigger_mass(&example.statement, &pool),
            });
            sequences.push(seq);
        }
        cached_splits.push(CachedSplit {
            name: name.clone(),
            meta,
            sequences,
        });
    }
    let cache = Cache {
        config: config.preprocess.clone(),
        config_hash: cache_hash.clone(),
        vocab,
        splits: cached_splits,
    };
    write_cache(&args.out, &cache)?;

    let config_json = serde_json::to_value(&config)?;
    let manifest = RunManifest {
        run_id: format!("prep-{}", &cache_hash[..8]),
        command: command_echo,
        seed: 0,
        config_hash: cache_hash,
        config: config_json,
        inputs: [(
            "dataset_dir".to_string(),
            args.data.display().to_string(),
        )]
        .into(),
        artifacts: [("cache_dir".to_string(), args.out.display().to_string())].into(),
        stage1_done: false,
        stage2_done: false,
    };
    write_manifest(&args.out, &manifest)?;
    println!(
        "cached {} split(s), vocab size {}, to {}",
        cache.splits.len(),
        cache.vocab.len(),
        args.out.display()
    );
    Ok(())
}

// ── train / adapt ────────────────────────────────────────────────────

struct TrainSetup {
    config: AppConfig,
    train: Vec<TrainExample>,
    dev: Vec<TrainExample>,
    model_hash: String,
    config_json: serde_json::Value,
}

fn prepare_training(
    config_path: Option<&Path>,
    data: &Path,
    lambda: Option<f64>,
    beta: Option<f64>,
    steps: Option<u64>,
    seed: Option<u64>,
    stage: u8,
) -> Result<TrainSetup> {
    let mut config = AppConfig::load(config_path)?;
    if let Some(v) = lambda {
        config.train.lambda = v;
    }
    if let Some(v) = beta {
        config.train.beta = v;
    }
    if let Some(v) = steps {
        if stage == 1 {
            config.train.steps = v;
        } else {
            config.train.steps_stage2 = v;
        }
    }
    if let Some(v) = seed {
        config.train.seed = v;
    }
    let cache = read_cache(data)?;
    config.model.vocab_size = cache.vocab.len();
    if config.model.n != cache.config.max_len {
        config.model.n = cache.config.max_len;
    }
    config.model.validate()?;
    config.train.validate()?;

    let train = examples_from_cache(cache.split("train")?);
    let dev = examples_from_cache(cache.split("dev")?);
    let model_hash = config_hash(&serde_json::json!({
        "model": config.model,
        "cache": cache.config_hash,
    }))?;
    let config_json = serde_json::to_value(&config)?;
    Ok(TrainSetup {
        config,
        train,
        dev,
        model_hash,
        config_json,
    })
}

fn default_run_dir(kind: &str, hash: &str, seed: u64) -> PathBuf {
    runs_root().join(format!("{kind}-{}-s{seed}", &hash[..8]))
}

fn cmd_train(args: TrainArgs, command_echo: Vec<String>) -> Result<()> {
    if args.stage == 2 {
        let stage1 = args.stage1.clone().ok_or_else(|| {
            Error::Config("--stage 2 requires --stage1 <dir> (or use `samoe adapt`)".into())
        })?;
        return cmd_adapt(
            AdaptArgs {
                config: args.config,
                stage1,
                data: args.data,
                out: args.out,
                beta: None,
                steps: args.steps,
                seed: args.seed,
            },
            command_echo,
        );
    }
    if args.stage != 1 {
        return Err(Error::Config(format!("unknown stage {}", args.stage)));
    }
    let setup = prepare_training(
        args.config.as_deref(),
        &args.data,
        args.lambda,
        None,
        args.steps,
        args.seed,
        1,
    )?;
    let out_dir = args
        .out
        .unwrap_or_else(|| default_run_dir("train", &setup.model_hash, setup.config.train.seed));
    std::fs::create_dir_all(&out_dir)?;

    let mut params = crate::model::init_params(&setup.config.model, setup.config.train.seed)?;
    let result = train_stage1(
        &mut params,
        &setup.config.model,
        &setup.config.train,
        &setup.train,
        &setup.dev,
        &out_dir,
        setup.config_json.clone(),
        &setup.model_hash,
    )?;

    let manifest = RunManifest {
        run_id: format!("train-{}-s{}", &setup.model_hash[..8], setup.config.train.seed),
        command: command_echo,
        seed: setup.config.train.seed,
        config: setup.config_json,
        config_hash: setup.model_hash,
        inputs: [("cache_dir".to_string(), args.data.display().to_string())].into(),
        artifacts: [
            (
                "checkpoint".to_string(),
                result.checkpoint_dir.display().to_string(),
            ),
            ("log".to_string(), result.log_path.display().to_string()),
        ]
        .into(),
        stage1_done: true,
        stage2_done: false,
    };
    write_manifest(&out_dir, &manifest)?;
    println!(
        "stage 1 finished: best dev accuracy {:.4} at step {} (checkpoint {})",
        result.best_dev_accuracy,
        result.best_step,
        result.checkpoint_dir.display()
    );
    Ok(())
}

/// Accepts either a checkpoint directory or a run directory containing best/.
fn resolve_checkpoint_dir(path: &Path) -> Result<PathBuf> {
    if path.join(checkpoint::MANIFEST_FILE).exists() {
        return Ok(path.to_path_buf());
    }
    let nested = path.join("best");
    if nested.join(checkpoint::MANIFEST_FILE).exists() {
        return Ok(nested);
    }
    Err(Error::MissingArtifact(format!(
        "no checkpoint manifest under {}",
        path.display()
    )))
}

fn cmd_adapt(args: AdaptArgs, command_echo: Vec<String>) -> Result<()> {
    let setup = prepare_training(
        args.config.as_deref(),
        &args.data,
        None,
        args.beta,
        args.steps,
        args.seed,
        2,
    )?;
    let ckpt_dir = resolve_checkpoint_dir(&args.stage1)?;
    let (mut params, manifest) = checkpoint::load(&ckpt_dir)?;
    if manifest.config_hash != setup.model_hash {
        return Err(Error::Config(format!(
            "stage-1 checkpoint was built for config hash {}, current is {}",
            manifest.config_hash, setup.model_hash
        )));
    }
    check_params_layout(&params, &setup.config.model)?;

    let out_dir = args
        .out
        .unwrap_or_else(|| default_run_dir("adapt", &setup.model_hash, setup.config.train.seed));
    std::fs::create_dir_all(&out_dir)?;
    let result = train_stage2(
        &mut params,
        &setup.config.model,
        &setup.config.train,
        &setup.train,
        &setup.dev,
        &out_dir,
        setup.config_json.clone(),
        &setup.model_hash,
    )?;

    let manifest = RunManifest {
        run_id: format!("adapt-{}-s{}", &setup.model_hash[..8], setup.config.train.seed),
        command: command_echo,
        seed: setup.config.train.seed,
        config: setup.config_json,
        config_hash: setup.model_hash,
        inputs: [
            ("cache_dir".to_string(), args.data.display().to_string()),
            ("stage1".to_string(), ckpt_dir.display().to_string()),
        ]
        .into(),
        artifacts: [
            (
                "checkpoint".to_string(),
                result.checkpoint_dir.display().to_string(),
            ),
            ("log".to_string(), result.log_path.display().to_string()),
        ]
        .into(),
        stage1_done: true,
        stage2_done: true,
    };
    write_manifest(&out_dir, &manifest)?;
    println!(
        "stage 2 finished: best dev accuracy {:.4} at step {} (checkpoint {})",
        result.best_dev_accuracy,
        result.best_step,
        result.checkpoint_dir.display()
    );
    Ok(())
}

// ── eval / predict ───────────────────────────────────────────────────

struct LoadedCheckpoint {
    params: crate::params::ParamSet,
    model: ModelConfig,
    hash: String,
}

fn load_checkpoint_with_config(path: &Path) -> Result<LoadedCheckpoint> {
    let dir = resolve_checkpoint_dir(path)?;
    let (params, manifest) = checkpoint::load(&dir)?;
    let model: ModelConfig = serde_json::from_value(
        manifest
            .config
            .get("model")
            .cloned()
            .ok_or_else(|| Error::Checkpoint("checkpoint config lacks a model section".into()))?,
    )?;
    check_params_layout(&params, &model)?;
    Ok(LoadedCheckpoint {
        params,
        model,
        hash: manifest.config_hash,
    })
}

fn cmd_eval(args: EvalArgs, command_echo: Vec<String>) -> Result<()> {
    let ckpt = load_checkpoint_with_config(&args.checkpoint)?;
    let cache = read_cache(&args.data)?;
    let examples = examples_from_cache(cache.split(&args.split)?);
    let attention = match args.attention {
        AttentionArg::Manager => AttentionChoice::Manager,
        AttentionArg::Supervisor => AttentionChoice::Supervisor,
    };
    let report = evaluate(&ckpt.params, &ckpt.model, &examples, attention)?;

    let report_path = args.report_path.unwrap_or_else(|| {
        runs_root()
            .join(format!("eval-{}-{}", &ckpt.hash[..8], args.split))
            .join("report.json")
    });
    if let Some(parent) = report_path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(&report_path, serde_json::to_string_pretty(&report)?)?;
    let summary = render_summary(&report);
    std::fs::write(report_path.with_extension("txt"), &summary)?;
    if let Some(parent) = report_path.parent() {
        let config_json = serde_json::json!({ "split": args.split, "attention": attention });
        let manifest = RunManifest {
            run_id: format!("eval-{}-{}", &ckpt.hash[..8], args.split),
            command: command_echo,
            seed: 0,
            config_hash: ckpt.hash.clone(),
            config: config_json,
            inputs: [
                (
                    "checkpoint".to_string(),
                    args.checkpoint.display().to_string(),
                ),
                ("cache_dir".to_string(), args.data.display().to_string()),
            ]
            .into(),
            artifacts: [(
                "report".to_string(),
                report_path.display().to_string(),
            )]
            .into(),
            stage1_done: false,
            stage2_done: false,
        };
        write_manifest(parent, &manifest)?;
    }
    print!("{summary}");
    println!("report written to {}", report_path.display());
    Ok(())
}

#[derive(Serialize)]
struct Prediction<'a> {
    example_id: &'a str,
    label: u8,
    verdict: u8,
    p_final: Vec<f64>,
    attention: Vec<f64>,
    expert_p: Vec<Vec<f64>>,
    expert_ce: Vec<f64>,
}

fn cmd_predict(args: PredictArgs, command_echo: Vec<String>) -> Result<()> {
    let ckpt = load_checkpoint_with_config(&args.checkpoint)?;
    let cache = read_cache(&args.data)?;
    let examples = examples_from_cache(cache.split(&args.split)?);
    let supervisor = matches!(args.attention, AttentionArg::Supervisor);
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut out = std::fs::File::create(&args.out)?;
    use std::io::Write;
    for ex in &examples {
        let fr = forward_eval(&ckpt.params, &ckpt.model, &ex.seq, supervisor)?;
        let attention = if supervisor {
            fr.a_s.clone().expect("supervisor scores")
        } else {
            fr.a_m.clone()
        };
        let p_final = crate::evaluation::combine_probs(&attention, &fr.p);
        let record = Prediction {
            example_id: &ex.example_id,
            label: ex.label,
            verdict: argmax(&p_final) as u8,
            p_final,
            attention,
            expert_ce: fr
                .p
                .iter()
                .map(|p| cross_entropy(p, ex.label as usize))
                .collect(),
            expert_p: fr.p,
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    let manifest = RunManifest {
        run_id: format!("predict-{}-{}", &ckpt.hash[..8], args.split),
        command: command_echo,
        seed: 0,
        config_hash: ckpt.hash,
        config: serde_json::json!({ "split": args.split }),
        inputs: [
            (
                "checkpoint".to_string(),
                args.checkpoint.display().to_string(),
            ),
            ("cache_dir".to_string(), args.data.display().to_string()),
        ]
        .into(),
        artifacts: [(
            "predictions".to_string(),
            args.out.display().to_string(),
        )]
        .into(),
        stage1_done: false,
        stage2_done: false,
    };
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            write_manifest(parent, &manifest)?;
        }
    }
    println!(
        "wrote {} predictions to {}",
        examples.len(),
        args.out.display()
    );
    Ok(())
}
