use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ratt_core::corpus::{
    generate_synthetic, load_corpus, make_folds, save_corpus, undersample, FoldPlan, LabelSet,
    RelationInstance, SyntheticConfig, Vocab,
};
use ratt_core::evalstats::{aggregate_judgments, rationale_sweep, JudgmentRecord};
use ratt_core::interpret::{audit, write_audit};
use ratt_core::model::AttnLstm;
use ratt_core::training::{evaluate, init_model, train, train_model, TrainConfig};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::args::{
    CheckpointArgs, Cli, Command, ConfigArgs, DataArgs, GenSyntheticArgs, IngestArgs, JudgeReportArgs, SweepArgs,
    TrainArgs,
};
use crate::error::{CliError, CliResult};
use crate::ingest::read_sentences;
use crate::judge;

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const FOLDS_FILE: &str = "folds.json";
pub const CHECKPOINT_FILE: &str = "model.json";
pub const TRAIN_REPORT_FILE: &str = "train_report.json";
pub const EVAL_FILE: &str = "eval.json";
pub const AUDIT_FILE: &str = "audit.jsonl";
pub const AUDIT_SUMMARY_FILE: &str = "audit_summary.json";
pub const SWEEP_CSV_FILE: &str = "sweep.csv";
pub const SWEEP_JSON_FILE: &str = "sweep.json";
pub const JUDGE_REPORT_FILE: &str = "judge_report.json";

pub struct Context {
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
}

impl Context {
    pub fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    fs::create_dir_all(&cli.out_dir).map_err(CliError::file(&cli.out_dir))?;
    let ctx = Context {
        seed: cli.seed,
        out_dir: cli.out_dir,
    };
    match cli.command {
        Command::GenSynthetic(a) => gen_synthetic(&ctx, a),
        Command::Ingest(a) => ingest(&ctx, a),
        Command::Train(a) => train_cmd(&ctx, a),
        Command::Eval(a) => eval_cmd(&ctx, a),
        Command::Audit(a) => audit_cmd(&ctx, a),
        Command::Sweep(a) => sweep_cmd(&ctx, a),
        Command::JudgeServe(a) => judge::serve(&ctx, a),
        Command::JudgeReport(a) => judge_report(&ctx, a),
    }
}

/// Fails with the path in the message when `path` cannot be opened.
pub fn input(path: &Path) -> CliResult<&Path> {
    File::open(path).map_err(CliError::file(path))?;
    Ok(path)
}

fn load_instances(path: &Path, labels: &LabelSet) -> CliResult<Vec<RelationInstance>> {
    Ok(load_corpus(input(path)?, labels)?)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(CliError::file(path))?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::Core(ratt_core::Error::Ingest {
            path: path.to_owned(),
            line: e.line(),
            message: e.to_string(),
        })
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(ratt_core::Error::from)?;
    text.push('\n');
    fs::write(path, text).map_err(CliError::file(path))
}

fn gen_synthetic(ctx: &Context, a: GenSyntheticArgs) -> CliResult<()> {
    let mut cfg: SyntheticConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => SyntheticConfig::default(),
    };
    if let Some(n) = a.instances {
        cfg.instances = n;
    }
    if let Some(r) = a.distractor_rate {
        cfg.distractor_rate = r;
    }
    if let Some(r) = a.null_rate {
        cfg.null_rate = r;
    }
    let seed = ctx.seed.unwrap_or(1);
    let (labels, instances) = generate_synthetic(&cfg, seed)?;
    save_corpus(ctx.out(CORPUS_FILE), &instances, &labels)?;
    let plan = folds_for(&instances, seed)?;
    write_json(&ctx.out(FOLDS_FILE), &plan)?;
    println!("wrote {} instances with labels [{}]", instances.len(), labels.names.join(", "));
    Ok(())
}

fn folds_for(instances: &[RelationInstance], seed: u64) -> CliResult<FoldPlan> {
    let docs: Vec<&str> = instances.iter().map(|i| i.doc_id.as_str()).collect();
    Ok(make_folds(&docs, seed)?)
}

fn ingest(ctx: &Context, a: IngestArgs) -> CliResult<()> {
    let labels = LabelSet::new(a.labels.iter().cloned(), !a.exclude_null)?;
    let text = fs::read_to_string(&a.input).map_err(CliError::file(&a.input))?;
    let mut instances = read_sentences(&text, &a.input, &labels)?;
    let seed = ctx.seed.unwrap_or(1);
    if a.exclude_null {
        instances.retain(|i| !i.is_null());
    } else if !a.no_undersample {
        if !(a.undersample > 0.0) {
            return Err(CliError::Usage("--undersample must be positive".into()));
        }
        instances = undersample(&instances, a.undersample, seed)?;
    }
    for (k, inst) in instances.iter_mut().enumerate() {
        inst.id = k;
    }
    save_corpus(ctx.out(CORPUS_FILE), &instances, &labels)?;
    let plan = folds_for(&instances, seed)?;
    write_json(&ctx.out(FOLDS_FILE), &plan)?;
    let nulls = instances.iter().filter(|i| i.is_null()).count();
    println!("wrote {} instances ({nulls} no-relation)", instances.len());
    Ok(())
}

fn load_config(ctx: &Context, a: &ConfigArgs) -> CliResult<TrainConfig> {
    let mut cfg: TrainConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    if let Some(m) = a.mode {
        cfg.mode = m;
    }
    if let Some(g) = a.gamma {
        cfg.gamma = g;
    }
    if let Some(v) = a.lambda_attn {
        cfg.lambda_attn = v;
    }
    if let Some(v) = a.lambda_r {
        cfg.lambda_r = v;
    }
    if let Some(v) = a.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = a.max_epochs {
        cfg.max_epochs = v;
    }
    if let Some(v) = a.patience {
        cfg.patience = v;
    }
    if let Some(s) = ctx.seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

struct Splits {
    train: Vec<RelationInstance>,
    dev: Vec<RelationInstance>,
    test: Option<Vec<RelationInstance>>,
}

fn load_splits(d: &DataArgs, labels: &LabelSet) -> CliResult<Splits> {
    let corpus = load_instances(&d.corpus, labels)?;
    if let Some(fp) = &d.folds {
        let plan: FoldPlan = read_json(fp)?;
        let fold = plan.folds.get(d.fold).ok_or_else(|| {
            CliError::Usage(format!("fold {} out of range (plan has {})", d.fold, plan.fold_count()))
        })?;
        let (train, dev, test) = fold.select(&corpus);
        return Ok(Splits {
            train,
            dev,
            test: Some(test),
        });
    }
    let dev = match &d.dev {
        Some(p) => load_instances(p, labels)?,
        None => return Err(CliError::Usage("give --dev (or --folds to split --corpus)".into())),
    };
    let test = d.test.as_deref().map(|p| load_instances(p, labels)).transpose()?;
    Ok(Splits {
        train: corpus,
        dev,
        test,
    })
}

fn train_cmd(ctx: &Context, a: TrainArgs) -> CliResult<()> {
    let cfg = load_config(ctx, &a.config)?;
    let labels = cfg.label_set()?;
    let splits = load_splits(&a.data, &labels)?;
    let (model, mut report) = match &a.embeddings {
        None => train(&splits.train, &splits.dev, &cfg)?,
        Some(path) => {
            let (vocab, rows) = Vocab::load(input(path)?)?;
            let mut model = init_model(splits.train.iter().chain(&splits.dev), &cfg, vocab)?;
            if let Some(rows) = rows {
                model.set_word_embeddings(&rows)?;
            }
            train_model(model, &splits.train, &splits.dev, &cfg)?
        }
    };
    let ckpt = ctx.out(CHECKPOINT_FILE);
    model.save(&ckpt, cfg.seed)?;
    report.checkpoint = Some(CHECKPOINT_FILE.to_owned());
    write_json(&ctx.out(TRAIN_REPORT_FILE), &report)?;
    println!(
        "{:?}: best dev metric {:.4} at epoch {} of {}",
        report.mode,
        report.best_dev_metric,
        report.best_epoch,
        report.epochs.len()
    );
    if let Some(test) = &splits.test {
        let summary = evaluate(&model, test)?;
        write_json(&ctx.out(EVAL_FILE), &summary)?;
        println!("test metric {:.4}", summary.primary_metric());
    }
    Ok(())
}

fn load_for_checkpoint(a: &CheckpointArgs) -> CliResult<(AttnLstm, Vec<RelationInstance>)> {
    let model = AttnLstm::load(input(&a.checkpoint)?)?;
    let corpus = load_instances(&a.corpus, &model.labels)?;
    Ok((model, corpus))
}

fn eval_cmd(ctx: &Context, a: CheckpointArgs) -> CliResult<()> {
    let (model, corpus) = load_for_checkpoint(&a)?;
    let s = evaluate(&model, &corpus)?;
    write_json(&ctx.out(EVAL_FILE), &s)?;
    println!(
        "P {:.2} R {:.2} F {:.2} accuracy {:.2} ({} instances)",
        100.0 * s.precision,
        100.0 * s.recall,
        100.0 * s.f_score,
        100.0 * s.accuracy,
        s.counts.total
    );
    Ok(())
}

fn audit_cmd(ctx: &Context, a: CheckpointArgs) -> CliResult<()> {
    let (model, corpus) = load_for_checkpoint(&a)?;
    let (records, summary) = audit(&model, &corpus)?;
    let path = ctx.out(AUDIT_FILE);
    let file = File::create(&path).map_err(CliError::file(&path))?;
    let mut w = BufWriter::new(file);
    write_audit(&mut w, &records)?;
    w.flush().map_err(CliError::file(&path))?;
    write_json(&ctx.out(AUDIT_SUMMARY_FILE), &summary)?;
    let fmt = |v: Option<f64>| v.map_or("-".to_owned(), |x| format!("{x:.3}"));
    println!(
        "{} instances; faithfulness probes {} mass {}; plausibility probes {} mass {}",
        summary.instances,
        fmt(summary.faithfulness.all.probes_needed),
        fmt(summary.faithfulness.all.mass_needed),
        fmt(summary.plausibility.all.probes_needed),
        fmt(summary.plausibility.all.mass_needed)
    );
    Ok(())
}

fn sweep_cmd(ctx: &Context, a: SweepArgs) -> CliResult<()> {
    let cfg = load_config(ctx, &a.config)?;
    let labels = cfg.label_set()?;
    let splits = load_splits(&a.data, &labels)?;
    let test = splits
        .test
        .ok_or_else(|| CliError::Usage("sweep needs a test set (--test or --folds)".into()))?;
    let table = rationale_sweep(&splits.train, &splits.dev, &test, &a.gammas, &a.seeds, &cfg)?;
    let path = ctx.out(SWEEP_CSV_FILE);
    let file = File::create(&path).map_err(CliError::file(&path))?;
    let mut w = BufWriter::new(file);
    table.write_csv(&mut w)?;
    w.flush().map_err(CliError::file(&path))?;
    write_json(&ctx.out(SWEEP_JSON_FILE), &table)?;
    for s in &table.summary {
        println!(
            "gamma {:<5} metric {:.4} +/- {:.4}  attn loss {:.4} ({} runs)",
            s.gamma, s.metric_mean, s.metric_std, s.attn_loss_mean, s.runs
        );
    }
    if let Some(c) = table.cells.iter().find(|c| c.error.is_some()) {
        eprintln!(
            "warning: gamma {} seed {} failed: {}",
            c.gamma,
            c.seed,
            c.error.as_deref().unwrap_or_default()
        );
    }
    Ok(())
}

pub fn read_judgments(path: &Path) -> CliResult<Vec<JudgmentRecord>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(CliError::file(path)(e)),
    };
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            serde_json::from_str(l).map_err(|e| {
                CliError::Core(ratt_core::Error::Ingest {
                    path: path.to_owned(),
                    line: k + 1,
                    message: e.to_string(),
                })
            })
        })
        .collect()
}

fn judge_report(ctx: &Context, a: JudgeReportArgs) -> CliResult<()> {
    let records = read_judgments(input(&a.judgments)?)?;
    let report = aggregate_judgments(&records)?;
    write_json(&ctx.out(JUDGE_REPORT_FILE), &report)?;
    println!(
        "{} judgments: A better {:.1}%, B better {:.1}%, draw {:.1}%, p = {}",
        report.judgments,
        100.0 * report.system_a.better,
        100.0 * report.system_b.better,
        100.0 * report.draw,
        report.p_value.map_or("n/a".to_owned(), |p| format!("{p:.3e}"))
    );
    Ok(())
}
