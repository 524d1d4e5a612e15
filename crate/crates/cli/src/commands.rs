use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use chrono::Utc;
use dan_core::corpus::{build_vocab, encode, load_corpus, save_corpus, split, synth_generate, PolarityMix, QAPair, Split};
use dan_core::embeddings::{init_table, load_vectors};
use dan_core::gradcheck::{self, GradcheckOptions, GradcheckReport};
use dan_core::metrics::{render_table, score_task, MetricsReport, TableRow};
use dan_core::model::{
    build_model_with_embeddings, decode_tuples, load_checkpoint, save_checkpoint, Checkpoint, ExtractionTuple,
    ModelConfig, Task, Variant,
};
use dan_core::tensor::OpKind;
use dan_core::training::{evaluate, fit, predict_all, AdamConfig, EpochRecord, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::args::{
    Cli, Command, EvalArgs, GradcheckArgs, PredictArgs, Preset, ReplayArgs, ReportArgs, SplitChoice, SynthArgs,
    TrainArgs, TrainSettings,
};
use crate::manifest::{sibling_manifest, RunManifest};
use crate::Failure;

/// Environment variable naming a training config file.
pub const CONFIG_ENV: &str = "DAN_CONFIG";
const EVAL_CHUNK: usize = 256;

pub fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(a).map(drop),
        Command::Train(a) => train(a).map(drop),
        Command::Eval(a) => eval(a).map(drop),
        Command::Predict(a) => predict(a).map(drop),
        Command::Gradcheck(a) => gradcheck(a).map(drop),
        Command::Report(a) => report(a).map(drop),
        Command::Replay(a) => replay(a),
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

/// Loads a corpus and checks that every pair belongs to one task.
fn load_pairs(path: &Path, expected: Option<Task>) -> Result<(Vec<QAPair>, Task)> {
    let pairs = load_corpus(path)?;
    let Some(first) = pairs.first() else {
        return Err(Failure::Validation(format!("{} contains no pairs", path.display())).into());
    };
    let task = expected.unwrap_or(first.task);
    if let Some(p) = pairs.iter().find(|p| p.task != task) {
        return Err(Failure::Usage(format!(
            "{}: pair `{}` is a {} pair but {} was requested",
            path.display(),
            p.id,
            p.task,
            task
        ))
        .into());
    }
    Ok((pairs, task))
}

fn require_labels(pairs: &[QAPair], what: &str) -> Result<()> {
    let missing: Vec<&str> = pairs.iter().filter(|p| p.gold_labels.is_none()).map(|p| p.id.as_str()).collect();
    if !missing.is_empty() {
        return Err(Failure::Validation(format!(
            "{what} needs gold labels, but {} pair(s) have none (first: `{}`)",
            missing.len(),
            missing[0]
        ))
        .into());
    }
    Ok(())
}

// ---------------------------------------------------------------- synth

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub n: usize,
    pub task: Task,
    pub seed: u64,
    pub mix: [f64; 3],
    pub out: PathBuf,
}

pub fn synth(a: SynthArgs) -> Result<Vec<QAPair>> {
    let params = SynthParams {
        n: a.n,
        task: a.task,
        seed: a.seed,
        mix: a.mix.unwrap_or(PolarityMix::default().0),
        out: a.out,
    };
    let manifest = a.manifest.unwrap_or_else(|| sibling_manifest(&params.out));
    run_synth(&params, &manifest)
}

pub fn run_synth(p: &SynthParams, manifest_path: &Path) -> Result<Vec<QAPair>> {
    let started = Utc::now();
    let mix = PolarityMix::new(p.mix).map_err(|e| Failure::Usage(e.to_string()))?;
    let pairs = synth_generate(p.n, p.task, p.seed, mix)?;
    ensure_parent(&p.out)?;
    save_corpus(&p.out, &pairs)?;
    log::info!("wrote {} {} pairs to {}", pairs.len(), p.task, p.out.display());
    let mut m = RunManifest::new("synth", p, started)?;
    m.seed = Some(p.seed);
    m.outputs = vec![p.out.clone()];
    m.write(manifest_path)?;
    Ok(pairs)
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub corpus: PathBuf,
    pub out: PathBuf,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub split_seed: u64,
    pub min_count: usize,
    pub vectors: Option<PathBuf>,
    pub ngram_vectors: Option<PathBuf>,
    pub freeze_embeddings: bool,
}

/// Settings from `--config` or `$DAN_CONFIG`, overlaid by explicit flags.
pub fn layered_settings(config: Option<&Path>, flags: &TrainSettings) -> Result<TrainSettings> {
    let env_path = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
    let base = match config.map(Path::to_path_buf).or(env_path) {
        Some(path) => {
            let text = fs::read_to_string(&path).with_context(|| format!("reading config {}", path.display()))?;
            serde_json::from_str::<TrainSettings>(&text)
                .map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))?
        }
        None => TrainSettings::default(),
    };
    let f = flags.clone();
    Ok(TrainSettings {
        preset: f.preset.or(base.preset),
        task: f.task.or(base.task),
        variant: f.variant.or(base.variant),
        epochs: f.epochs.or(base.epochs),
        patience: f.patience.or(base.patience),
        batch: f.batch.or(base.batch),
        lr: f.lr.or(base.lr),
        dropout: f.dropout.or(base.dropout),
        d_e: f.d_e.or(base.d_e),
        blstm: f.blstm.or(base.blstm),
        tq: f.tq.or(base.tq),
        ta: f.ta.or(base.ta),
        seed: f.seed.or(base.seed),
        split_seed: f.split_seed.or(base.split_seed),
        min_count: f.min_count.or(base.min_count),
        clip_norm: f.clip_norm.or(base.clip_norm),
        vectors: f.vectors.or(base.vectors),
        ngram_vectors: f.ngram_vectors.or(base.ngram_vectors),
        freeze_embeddings: f.freeze_embeddings || base.freeze_embeddings,
    })
}

/// Fills every unset value from the preset (the published settings unless
/// `micro` is chosen).
pub fn resolve_train(s: &TrainSettings, task: Task, corpus: PathBuf, out: PathBuf) -> Result<TrainParams> {
    let base = match s.preset.unwrap_or(Preset::Full) {
        Preset::Full => ModelConfig::full(task),
        Preset::Micro => ModelConfig::micro(task),
    };
    let seed = s.seed.unwrap_or(0);
    let model = ModelConfig {
        variant: s.variant.unwrap_or(base.variant),
        task,
        embed_dim: s.d_e.unwrap_or(base.embed_dim),
        blstm_dim: s.blstm.unwrap_or(base.blstm_dim),
        question_len: s.tq.unwrap_or(base.question_len),
        answer_len: s.ta.unwrap_or(base.answer_len),
        dropout: s.dropout.unwrap_or(base.dropout),
        seed,
    };
    let defaults = TrainConfig::default();
    let train = TrainConfig {
        batch_size: s.batch.unwrap_or(defaults.batch_size),
        max_epochs: s.epochs.unwrap_or(defaults.max_epochs),
        patience: s.patience.unwrap_or(defaults.patience),
        seed,
        shuffle: true,
        adam: AdamConfig {
            lr: s.lr.unwrap_or(defaults.adam.lr),
            ..defaults.adam
        },
        clip_norm: s.clip_norm,
    };
    model.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    train.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    if s.ngram_vectors.is_some() && s.vectors.is_none() {
        return Err(Failure::Usage("--ngram-vectors needs --vectors".into()).into());
    }
    Ok(TrainParams {
        corpus,
        out,
        model,
        train,
        split_seed: s.split_seed.unwrap_or(seed),
        min_count: s.min_count.unwrap_or(1),
        vectors: s.vectors.clone(),
        ngram_vectors: s.ngram_vectors.clone(),
        freeze_embeddings: s.freeze_embeddings,
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub test: MetricsReport,
}

pub fn train(a: TrainArgs) -> Result<TrainOutcome> {
    let settings = layered_settings(a.config.as_deref(), &a.settings)?;
    let (_, task) = load_pairs(&a.corpus, settings.task)?;
    let params = resolve_train(&settings, task, a.corpus, a.out)?;
    let manifest = params.out.join("manifest.json");
    run_train(&params, &manifest)
}

pub fn run_train(p: &TrainParams, manifest_path: &Path) -> Result<TrainOutcome> {
    let started = Utc::now();
    let clock = Instant::now();
    let (pairs, _) = load_pairs(&p.corpus, Some(p.model.task))?;
    require_labels(&pairs, "training")?;
    let Split { train, valid, test } = split(&pairs, p.split_seed).map_err(|e| Failure::Validation(e.to_string()))?;
    let vocab = build_vocab(&train, p.min_count)?;
    let enc = |set: &[QAPair]| set.iter().map(|q| encode(q, &vocab, &p.model)).collect::<dan_core::Result<Vec<_>>>();
    let (train_x, valid_x, test_x) = (enc(&train)?, enc(&valid)?, enc(&test)?);
    log::info!(
        "{}: {} train / {} valid / {} test pairs, vocabulary {}",
        p.corpus.display(),
        train_x.len(),
        valid_x.len(),
        test_x.len(),
        vocab.len()
    );

    let table = match &p.vectors {
        Some(path) => {
            let vectors = load_vectors(path, p.ngram_vectors.as_deref(), p.model.embed_dim)?;
            Some(init_table(&vocab, Some(&vectors), p.model.embed_dim, p.model.seed)?)
        }
        None if p.freeze_embeddings => Some(init_table(&vocab, None, p.model.embed_dim, p.model.seed)?),
        None => None,
    }
    .map(|mut t| {
        t.trainable = !p.freeze_embeddings;
        t
    });
    let model = build_model_with_embeddings(&p.model, vocab.len(), table)?;

    fs::create_dir_all(&p.out).with_context(|| format!("creating {}", p.out.display()))?;
    let history_path = p.out.join("history.jsonl");
    let mut history = BufWriter::new(File::create(&history_path)?);
    let fitted = fit(model, &train_x, &valid_x, &p.train, &mut |rec, _| {
        serde_json::to_writer(&mut history, rec)?;
        writeln!(history).and_then(|()| history.flush()).map_err(|e| dan_core::Error::io(&history_path, e))?;
        Ok(())
    })?;
    drop(history);

    let best_score = fitted.history.iter().find(|r| r.epoch == fitted.best_epoch).map(|r| r.valid_avg_f1);
    let meta = serde_json::json!({
        "best_epoch": fitted.best_epoch,
        "valid_avg_f1": best_score,
        "split_seed": p.split_seed,
        "min_count": p.min_count,
        "train_pairs": train_x.len(),
    });
    let ckpt = Checkpoint::new(fitted.model, vocab, meta);
    let best_path = p.out.join("model.ckpt");
    save_checkpoint(&best_path, &ckpt)?;
    let named = match best_score {
        Some(f1) if f1.is_finite() => format!("model-epoch{:03}-f1-{f1:.4}.ckpt", fitted.best_epoch),
        _ => format!("model-epoch{:03}.ckpt", fitted.best_epoch),
    };
    fs::copy(&best_path, p.out.join(&named))?;

    let test_report = if test_x.is_empty() {
        score_task(p.model.task, &[])?
    } else {
        evaluate(&ckpt.model, &test_x, EVAL_CHUNK)?
    };
    write_json(&p.out.join("test_report.json"), &test_report)?;
    print!(
        "{}",
        render_table(
            p.model.task,
            &[TableRow::from_report(p.model.variant.display_name(), &test_report)]
        )
    );
    log::info!(
        "best epoch {} of {}, finished in {:.1}s",
        fitted.best_epoch,
        fitted.history.len(),
        clock.elapsed().as_secs_f64()
    );

    let mut m = RunManifest::new("train", p, started)?;
    m.seed = Some(p.model.seed);
    m.corpus = vec![p.corpus.clone()];
    m.checkpoint = Some(best_path.clone());
    m.outputs = vec![
        best_path.clone(),
        p.out.join(named),
        history_path,
        p.out.join("test_report.json"),
    ];
    m.write(manifest_path)?;
    Ok(TrainOutcome {
        checkpoint: best_path,
        history: fitted.history,
        best_epoch: fitted.best_epoch,
        test: test_report,
    })
}

// ---------------------------------------------------------------- eval

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalParams {
    pub checkpoint: PathBuf,
    pub corpus: PathBuf,
    pub split: SplitChoice,
    pub report_out: PathBuf,
    pub labels_as_predictions: bool,
    pub vocab_check: bool,
}

pub fn eval(a: EvalArgs) -> Result<MetricsReport> {
    let report_out = a.report_out.unwrap_or_else(|| {
        a.checkpoint
            .parent()
            .unwrap_or(Path::new("."))
            .join("eval_report.json")
    });
    let params = EvalParams {
        checkpoint: a.checkpoint,
        corpus: a.corpus,
        split: a.split,
        report_out,
        labels_as_predictions: a.labels_as_predictions,
        vocab_check: !a.no_vocab_check,
    };
    let manifest = a.manifest.unwrap_or_else(|| sibling_manifest(&params.report_out));
    run_eval(&params, &manifest)
}

fn meta_u64(ckpt: &Checkpoint, key: &str) -> Option<u64> {
    ckpt.manifest.meta.get(key).and_then(serde_json::Value::as_u64)
}

pub fn run_eval(p: &EvalParams, manifest_path: &Path) -> Result<MetricsReport> {
    let started = Utc::now();
    let ckpt = load_checkpoint(&p.checkpoint)?;
    let cfg = &ckpt.manifest.config;
    let (pairs, _) = load_pairs(&p.corpus, Some(cfg.task))?;
    require_labels(&pairs, "evaluation")?;

    let needs_split = p.vocab_check || p.split != SplitChoice::All;
    let parts = if needs_split {
        let seed = meta_u64(&ckpt, "split_seed").ok_or_else(|| {
            Failure::Usage("the checkpoint does not record its split seed; use --split all --no-vocab-check".into())
        })?;
        Some(split(&pairs, seed).map_err(|e| Failure::Validation(e.to_string()))?)
    } else {
        None
    };
    if p.vocab_check {
        let parts = parts.as_ref().expect("split computed when checking the vocabulary");
        let min_count = meta_u64(&ckpt, "min_count").unwrap_or(1) as usize;
        let rebuilt = build_vocab(&parts.train, min_count)?;
        if rebuilt.hash() != ckpt.manifest.vocab_hash {
            return Err(Failure::Usage(format!(
                "{} does not reproduce the checkpoint's vocabulary (hash {} vs {}); the model was trained on a \
                 different corpus or split. Pass --no-vocab-check to score it anyway.",
                p.corpus.display(),
                &rebuilt.hash()[..12],
                &ckpt.manifest.vocab_hash[..12.min(ckpt.manifest.vocab_hash.len())]
            ))
            .into());
        }
    }
    let chosen: &[QAPair] = match (p.split, &parts) {
        (SplitChoice::All, _) | (_, None) => &pairs,
        (SplitChoice::Train, Some(s)) => &s.train,
        (SplitChoice::Valid, Some(s)) => &s.valid,
        (SplitChoice::Test, Some(s)) => &s.test,
    };
    let examples = chosen
        .iter()
        .map(|q| encode(q, &ckpt.vocab, cfg))
        .collect::<dan_core::Result<Vec<_>>>()?;
    let gold: Vec<Vec<usize>> = examples.iter().map(|e| e.labels.clone().expect("labels checked")).collect();
    let preds = if p.labels_as_predictions {
        gold.clone()
    } else {
        predict_all(&ckpt.model, &examples, EVAL_CHUNK)?
    };
    let pairs: Vec<_> = preds.into_iter().zip(gold).collect();
    let report = score_task(cfg.task, &pairs)?;
    print!(
        "{}",
        render_table(cfg.task, &[TableRow::from_report(cfg.variant.display_name(), &report)])
    );
    write_json(&p.report_out, &report)?;

    let mut m = RunManifest::new("eval", p, started)?;
    m.seed = meta_u64(&ckpt, "split_seed");
    m.corpus = vec![p.corpus.clone()];
    m.checkpoint = Some(p.checkpoint.clone());
    m.outputs = vec![p.report_out.clone()];
    m.write(manifest_path)?;
    Ok(report)
}

// ---------------------------------------------------------------- predict

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictParams {
    pub checkpoint: PathBuf,
    pub input: PathBuf,
    pub out: PathBuf,
}

/// One line of the prediction file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub product_id: String,
    pub question: Vec<String>,
    pub labels: Vec<String>,
    pub tuples: Vec<ExtractionTuple>,
}

pub fn predict(a: PredictArgs) -> Result<Vec<Prediction>> {
    let params = PredictParams {
        checkpoint: a.checkpoint,
        input: a.input,
        out: a.out,
    };
    let manifest = a.manifest.unwrap_or_else(|| sibling_manifest(&params.out));
    run_predict(&params, &manifest)
}

pub fn run_predict(p: &PredictParams, manifest_path: &Path) -> Result<Vec<Prediction>> {
    let started = Utc::now();
    let ckpt = load_checkpoint(&p.checkpoint)?;
    let cfg = &ckpt.manifest.config;
    let (pairs, _) = load_pairs(&p.input, Some(cfg.task))?;
    let space = ckpt.model.label_space();
    let examples = pairs
        .iter()
        .map(|q| encode(q, &ckpt.vocab, cfg))
        .collect::<dan_core::Result<Vec<_>>>()?;
    let preds = predict_all(&ckpt.model, &examples, EVAL_CHUNK)?;

    ensure_parent(&p.out)?;
    let mut w = BufWriter::new(File::create(&p.out).with_context(|| format!("creating {}", p.out.display()))?);
    let mut out = Vec::with_capacity(examples.len());
    for (e, labels) in examples.iter().zip(preds) {
        let real = &labels[..e.question_tokens.len()];
        let rec = Prediction {
            id: e.id.clone(),
            product_id: e.product_id.clone(),
            question: e.question_tokens.clone(),
            labels: real.iter().map(|&l| space.name(l).unwrap_or("?").to_string()).collect(),
            tuples: decode_tuples(real, &e.question_tokens, &e.product_id, &space)?,
        };
        serde_json::to_writer(&mut w, &rec)?;
        writeln!(w)?;
        out.push(rec);
    }
    w.flush()?;
    log::info!("wrote predictions for {} questions to {}", out.len(), p.out.display());

    let mut m = RunManifest::new("predict", p, started)?;
    m.corpus = vec![p.input.clone()];
    m.checkpoint = Some(p.checkpoint.clone());
    m.outputs = vec![p.out.clone()];
    m.write(manifest_path)?;
    Ok(out)
}

// ---------------------------------------------------------------- gradcheck

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckParams {
    pub seed: u64,
    pub eps: f64,
    pub task: Task,
    pub out: PathBuf,
    /// Name of an op whose backward rule is deliberately corrupted.
    #[serde(default)]
    pub fault: Option<String>,
}

pub fn gradcheck(a: GradcheckArgs) -> Result<GradcheckReport> {
    let params = GradcheckParams {
        seed: a.seed,
        eps: a.eps,
        task: a.task,
        out: a.out,
        fault: a.inject_fault.map(|k| k.name().to_string()),
    };
    let manifest = a.manifest.unwrap_or_else(|| sibling_manifest(&params.out));
    run_gradcheck(&params, &manifest)
}

pub fn run_gradcheck(p: &GradcheckParams, manifest_path: &Path) -> Result<GradcheckReport> {
    let started = Utc::now();
    if !(p.eps > 0.0 && p.eps.is_finite()) {
        bail!(Failure::Usage(format!("--eps {} must be positive", p.eps)));
    }
    let fault = match &p.fault {
        Some(name) => Some(name.parse::<OpKind>().map_err(Failure::Usage)?),
        None => None,
    };
    let clock = Instant::now();
    let report = gradcheck::run(&GradcheckOptions {
        seed: p.seed,
        eps: p.eps,
        task: p.task,
        fault,
        ..GradcheckOptions::default()
    })?;
    println!("{:<16} {:>12}", "op", "max rel err");
    for o in &report.ops {
        println!("{:<16} {:>12.3e}", o.op, o.max_rel_err);
    }
    println!();
    println!("{:<16} {:<14} {:>12}", "variant", "layer", "max rel err");
    for (variant, layer, err) in report.layer_summary() {
        println!("{variant:<16} {layer:<14} {err:>12.3e}");
    }
    println!(
        "gradcheck {}: max rel err {:.3e} (tolerance {:.0e}) in {:.1}s",
        if report.passed { "passed" } else { "FAILED" },
        report.max_rel_err(),
        report.tolerance,
        clock.elapsed().as_secs_f64()
    );
    write_json(&p.out, &report)?;
    let mut m = RunManifest::new("gradcheck", p, started)?;
    m.seed = Some(p.seed);
    m.outputs = vec![p.out.clone()];
    m.write(manifest_path)?;
    if !report.passed {
        return Err(Failure::Numeric(format!("gradient check failed:\n  {}", report.failures().join("\n  "))).into());
    }
    Ok(report)
}

// ---------------------------------------------------------------- report

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportParams {
    pub out: PathBuf,
    pub variants: Vec<Variant>,
    pub seeds: Vec<u64>,
    /// Split seed when set explicitly; otherwise each run splits by its seed.
    pub split_seed: Option<u64>,
    /// Template for every run; its variant, seeds and output are replaced.
    pub base: TrainParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub variant: Variant,
    pub row: TableRow,
    pub per_seed: Vec<MetricsReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub task: Task,
    pub seeds: Vec<u64>,
    pub results: Vec<VariantResult>,
    pub table: String,
}

pub fn report(a: ReportArgs) -> Result<ComparisonReport> {
    let settings = layered_settings(a.config.as_deref(), &a.settings)?;
    if a.settings.seed.is_some() {
        bail!(Failure::Usage("report takes --seeds, not --seed".into()));
    }
    if a.seeds.is_empty() {
        bail!(Failure::Usage("--seeds must name at least one seed".into()));
    }
    let (_, task) = load_pairs(&a.corpus, settings.task)?;
    let base = resolve_train(&settings, task, a.corpus, a.out.clone())?;
    let params = ReportParams {
        out: a.out,
        variants: if a.variants.is_empty() {
            Variant::ALL.to_vec()
        } else {
            a.variants
        },
        seeds: a.seeds,
        split_seed: settings.split_seed,
        base,
    };
    let manifest = params.out.join("manifest.json");
    run_report(&params, &manifest)
}

pub fn run_report(p: &ReportParams, manifest_path: &Path) -> Result<ComparisonReport> {
    let started = Utc::now();
    let mut results = Vec::new();
    for &variant in &p.variants {
        let mut per_seed = Vec::new();
        for &seed in &p.seeds {
            let mut run = p.base.clone();
            run.model.variant = variant;
            run.model.seed = seed;
            run.train.seed = seed;
            run.split_seed = p.split_seed.unwrap_or(seed);
            run.out = p.out.join(variant.as_str()).join(format!("seed-{seed}"));
            log::info!("training {} with seed {seed}", variant.display_name());
            let outcome = run_train(&run, &run.out.join("manifest.json"))?;
            per_seed.push(outcome.test);
        }
        results.push(VariantResult {
            variant,
            row: TableRow::mean(variant.display_name(), &per_seed),
            per_seed,
        });
    }
    let rows: Vec<TableRow> = results.iter().map(|r| r.row.clone()).collect();
    let table = render_table(p.base.model.task, &rows);
    println!("\n{table}");
    let report = ComparisonReport {
        task: p.base.model.task,
        seeds: p.seeds.clone(),
        results,
        table: table.clone(),
    };
    write_json(&p.out.join("report.json"), &report)?;
    fs::write(p.out.join("table.txt"), &table)?;

    let mut m = RunManifest::new("report", p, started)?;
    m.corpus = vec![p.base.corpus.clone()];
    m.outputs = vec![p.out.join("report.json"), p.out.join("table.txt")];
    m.write(manifest_path)?;
    Ok(report)
}

// ---------------------------------------------------------------- replay

fn params<T: for<'de> Deserialize<'de>>(m: &RunManifest) -> Result<T> {
    serde_json::from_value(m.params.clone())
        .map_err(|e| Failure::Validation(format!("manifest parameters for `{}` are malformed: {e}", m.command)).into())
}

fn relocate(path: &Path, dir: &Path) -> PathBuf {
    dir.join(path.file_name().unwrap_or(path.as_os_str()))
}

/// Re-runs the recorded command with its outputs redirected into `out_dir`.
pub fn replay(a: ReplayArgs) -> Result<()> {
    let m = RunManifest::read(&a.manifest)?;
    let dir = &a.out_dir;
    fs::create_dir_all(dir)?;
    match m.command.as_str() {
        "synth" => {
            let mut p: SynthParams = params(&m)?;
            p.out = relocate(&p.out, dir);
            run_synth(&p, &sibling_manifest(&p.out)).map(drop)
        }
        "train" => {
            let mut p: TrainParams = params(&m)?;
            p.out = dir.clone();
            run_train(&p, &dir.join("manifest.json")).map(drop)
        }
        "eval" => {
            let mut p: EvalParams = params(&m)?;
            p.report_out = relocate(&p.report_out, dir);
            run_eval(&p, &sibling_manifest(&p.report_out)).map(drop)
        }
        "predict" => {
            let mut p: PredictParams = params(&m)?;
            p.out = relocate(&p.out, dir);
            run_predict(&p, &sibling_manifest(&p.out)).map(drop)
        }
        "gradcheck" => {
            let mut p: GradcheckParams = params(&m)?;
            p.out = relocate(&p.out, dir);
            run_gradcheck(&p, &sibling_manifest(&p.out)).map(drop)
        }
        "report" => {
            let mut p: ReportParams = params(&m)?;
            p.out = dir.clone();
            run_report(&p, &dir.join("manifest.json")).map(drop)
        }
        other => Err(Failure::Validation(format!("unknown command `{other}` in manifest")).into()),
    }
}
