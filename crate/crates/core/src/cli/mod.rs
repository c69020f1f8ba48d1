//! Command-line interface: `synth`, `preprocess`, `train`, `sample`, `eval`,
//! `plot` and `tasks`.

pub mod config;
pub mod corpus;
pub mod plot;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use ndarray::Array3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::{SamplerConfig, SamplerKind};
use crate::error::{Error, Result};
use crate::generation::{generate_batch, impute_composite, to_output_space, GenerateOptions};
use crate::metrics::{ks_test, mae, min_mae, min_rmse, rmse, EvalRow, ShiftSet};
use crate::model::{load_checkpoint, N_SLOTS};
use crate::signals::{preprocess, AlignedSegment, Modality, NormMode, NormTable, SignalSegment, UnitSpace};
use crate::synthdata::synth_trimodal;
use crate::tasks::{enumerate_tasks, ConditionKind, TaskSpec};
use crate::training::{degrade, read_log, train, Degradation, TrainOptions};

pub use config::{resolve_seed, DataConfig, RunConfig, ScheduleConfig};
pub use corpus::{Corpus, CORPUS_MAGIC};

const TRIMODAL: [Modality; 3] = [Modality::Ppg, Modality::Ecg, Modality::Bp];

#[derive(Debug, Parser)]
#[command(name = "unicardio", version, about = "Multi-modal cardiovascular signal diffusion model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the seed from the configuration.
    #[arg(long, env = "UNICARDIO_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic tri-modal corpus.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Output corpus (`.ucs` binary or `.csv`).
        #[arg(long)]
        out: PathBuf,
    },
    /// Filter, gate, split and normalize a raw tri-modal corpus.
    Preprocess {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run the curriculum on a preprocessed dataset directory.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Start from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Fine-tune on a single task; requires `--resume`.
        #[arg(long, requires = "resume")]
        resume_finetune: Option<String>,
        #[arg(long)]
        stop_after_phase: Option<usize>,
    },
    /// Generate signals for one task from a dataset split.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Preprocessed dataset directory.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        task: String,
        /// Sampler steps; defaults to the configured sampler.
        #[arg(long)]
        steps: Option<usize>,
        /// Ancestral sampling over every step instead of DDIM.
        #[arg(long)]
        ddpm: bool,
        #[arg(long, default_value_t = 0)]
        start: usize,
        #[arg(long, default_value_t = 1)]
        count: usize,
        /// Copy observed samples of an imputation condition into the output.
        #[arg(long)]
        composite: bool,
        /// Write per-step clean-signal estimates as CSV.
        #[arg(long)]
        dump_steps: Option<PathBuf>,
        /// Predictions corpus; ground truth goes next to it as `*.truth.ucs`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a predictions corpus against a target corpus.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// Sample sidecar; supplies the task name and gap masks.
        #[arg(long)]
        sidecar: Option<PathBuf>,
        #[arg(long)]
        task: Option<String>,
        /// Score only the missing samples of the imputation gaps.
        #[arg(long, requires = "sidecar")]
        masked_region_only: bool,
        /// Shift range of the min-metrics in seconds.
        #[arg(long, default_value_t = 1.0)]
        max_shift_s: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Emit SVG charts.
    Plot {
        /// Generated corpus (overlay chart).
        #[arg(long)]
        pred: Option<PathBuf>,
        /// Ground-truth corpus.
        #[arg(long)]
        target: Option<PathBuf>,
        #[arg(long)]
        sidecar: Option<PathBuf>,
        /// Step dump CSV (trajectory panels).
        #[arg(long)]
        steps: Option<PathBuf>,
        /// Training log CSV (loss curve).
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        segment: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// List the supported task identifiers.
    Tasks,
}

/// Written next to every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    pub version: String,
    pub outputs: Vec<String>,
    #[serde(default)]
    pub details: serde_json::Value,
}

impl Manifest {
    fn new(command: &str, seed: u64, cfg: &RunConfig, outputs: &[&Path], details: serde_json::Value) -> Self {
        Self {
            command: command.into(),
            seed,
            config_hash: cfg.hash(),
            version: env!("CARGO_PKG_VERSION").into(),
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
            details,
        }
    }

    fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

/// Per-run record of a `sample` invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSidecar {
    pub task: String,
    pub modality: Modality,
    pub unit_space: UnitSpace,
    pub sampler: SamplerConfig,
    pub seed: u64,
    pub nfe: usize,
    pub composite: bool,
    /// Dataset indices of the generated segments.
    pub segments: Vec<usize>,
    pub wall_clock_s: Vec<f64>,
    /// Missing sample indices of the masked condition, per segment.
    pub missing: Vec<Vec<usize>>,
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(v)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&std::fs::read_to_string(path)?).map_err(Into::into)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

pub fn write_corpus(path: &Path, corpus: &Corpus, names: &[Modality]) -> Result<()> {
    if is_csv(path) {
        std::fs::write(path, corpus.to_csv(names)?)?;
    } else {
        std::fs::write(path, corpus.to_bytes())?;
    }
    Ok(())
}

/// Reads either format. CSV carries no sampling rate, so `csv_fs` is used.
pub fn read_corpus(path: &Path, csv_fs: f64) -> Result<Corpus> {
    if is_csv(path) {
        Ok(Corpus::from_csv(&std::fs::read_to_string(path)?, csv_fs)?.0)
    } else {
        Corpus::from_bytes(&std::fs::read(path)?)
    }
}

fn space_of(mode: NormMode) -> UnitSpace {
    match mode {
        NormMode::Minmax => UnitSpace::Minmax,
        NormMode::Zscore => UnitSpace::Zscored,
    }
}

/// A preprocessed dataset directory: `{train,val,test}.ucs` plus `norm.json`.
pub struct DatasetDir {
    pub norm: NormTable,
    root: PathBuf,
}

impl DatasetDir {
    pub fn open(root: &Path) -> Result<Self> {
        Ok(Self {
            norm: read_json(&root.join("norm.json"))?,
            root: root.to_path_buf(),
        })
    }

    pub fn split(&self, name: &str) -> Result<Vec<AlignedSegment>> {
        if !["train", "val", "test"].contains(&name) {
            return Err(Error::param(format!("unknown split {name:?}")));
        }
        let corpus = Corpus::from_bytes(&std::fs::read(self.root.join(format!("{name}.ucs")))?)?;
        let spaces: Vec<(Modality, UnitSpace)> = TRIMODAL
            .iter()
            .map(|&m| (m, space_of(self.norm.get(m).expect("physical").0)))
            .collect();
        corpus.to_aligned(&spaces)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { common, out } => cmd_synth(&common, &out),
        Command::Preprocess { common, input, out_dir } => cmd_preprocess(&common, &input, &out_dir),
        Command::Train {
            common,
            data,
            out_dir,
            resume,
            resume_finetune,
            stop_after_phase,
        } => cmd_train(&common, &data, &out_dir, resume.as_deref(), resume_finetune.as_deref(), stop_after_phase),
        Command::Sample {
            common,
            checkpoint,
            data,
            split,
            task,
            steps,
            ddpm,
            start,
            count,
            composite,
            dump_steps,
            out,
        } => {
            let req = SampleRequest {
                checkpoint: &checkpoint,
                data: &data,
                split: &split,
                task: &task,
                steps,
                ddpm,
                start,
                count,
                composite,
                dump_steps: dump_steps.as_deref(),
                out: &out,
            };
            cmd_sample(&common, &req)
        }
        Command::Eval {
            pred,
            target,
            sidecar,
            task,
            masked_region_only,
            max_shift_s,
            out,
        } => cmd_eval(&pred, &target, sidecar.as_deref(), task, masked_region_only, max_shift_s, &out),
        Command::Plot {
            pred,
            target,
            sidecar,
            steps,
            log,
            segment,
            out,
        } => cmd_plot(pred.as_deref(), target.as_deref(), sidecar.as_deref(), steps.as_deref(), log.as_deref(), segment, &out),
        Command::Tasks => {
            let mut stdout = std::io::stdout().lock();
            for t in enumerate_tasks() {
                writeln!(stdout, "{}", t.name())?;
            }
            Ok(())
        }
    }
}

fn cmd_synth(common: &Common, out: &Path) -> Result<()> {
    let cfg = RunConfig::load(common.config.as_deref())?;
    let seed = resolve_seed(common.seed, cfg.data.synth.seed);
    let synth = crate::synthdata::SynthConfig {
        seed,
        ..cfg.data.synth.clone()
    };
    let records = synth_trimodal(&synth)?;
    write_corpus(out, &Corpus::from_aligned(&records, &TRIMODAL)?, &TRIMODAL)?;
    let details = serde_json::json!({ "n_segments": records.len(), "fs": synth.fs, "seq_len": synth.seq_len });
    Manifest::new("synth", seed, &cfg, &[out], details).write(&sibling(out, ".manifest.json"))?;
    log::info!("wrote {} segments to {}", records.len(), out.display());
    Ok(())
}

fn cmd_preprocess(common: &Common, input: &Path, out_dir: &Path) -> Result<()> {
    let cfg = RunConfig::load(common.config.as_deref())?;
    let seed = resolve_seed(common.seed, cfg.data.preprocess.split_seed);
    let pcfg = crate::signals::PreprocessConfig {
        split_seed: seed,
        ..cfg.data.preprocess.clone()
    };
    let corpus = read_corpus(input, cfg.data.synth.fs)?;
    let records = corpus.to_aligned(&TRIMODAL.map(|m| (m, UnitSpace::Raw)))?;
    let prepared = preprocess(records, &pcfg)?;
    std::fs::create_dir_all(out_dir)?;
    let mut outputs = Vec::new();
    for (name, recs) in [
        ("train", &prepared.split.train),
        ("val", &prepared.split.val),
        ("test", &prepared.split.test),
    ] {
        let path = out_dir.join(format!("{name}.ucs"));
        if recs.is_empty() {
            return Err(Error::param(format!("{name} split is empty; use more segments")));
        }
        write_corpus(&path, &Corpus::from_aligned(recs, &TRIMODAL)?, &TRIMODAL)?;
        outputs.push(path);
    }
    let norm = out_dir.join("norm.json");
    write_json(&norm, &prepared.norm)?;
    let gate = out_dir.join("gate_report.csv");
    std::fs::write(&gate, prepared.gate.to_csv())?;
    outputs.extend([norm, gate]);
    let refs: Vec<&Path> = outputs.iter().map(|p| p.as_path()).collect();
    let details = serde_json::json!({
        "n_in": prepared.gate.n_in,
        "n_kept": prepared.gate.n_kept,
        "train": prepared.split.train.len(),
        "val": prepared.split.val.len(),
        "test": prepared.split.test.len(),
    });
    Manifest::new("preprocess", seed, &cfg, &refs, details).write(&out_dir.join("manifest.json"))?;
    log::info!(
        "kept {}/{} segments (removal rate {:.3})",
        prepared.gate.n_kept,
        prepared.gate.n_in,
        prepared.gate.removal_rate()
    );
    Ok(())
}

fn cmd_train(
    common: &Common,
    data: &Path,
    out_dir: &Path,
    resume: Option<&Path>,
    finetune: Option<&str>,
    stop_after_phase: Option<usize>,
) -> Result<()> {
    let cfg = RunConfig::load(common.config.as_deref())?;
    let seed = resolve_seed(common.seed, cfg.seed);
    let dataset = DatasetDir::open(data)?;
    let train_set = dataset.split("train")?;
    let init = match resume {
        Some(p) => {
            let (ck_cfg, params) = load_checkpoint(p)?;
            if ck_cfg != cfg.model {
                return Err(Error::Config("checkpoint model config differs from the run config".into()));
            }
            Some(params)
        }
        None => None,
    };
    std::fs::create_dir_all(out_dir)?;
    let log_path = out_dir.join("train_log.csv");
    let opts = TrainOptions {
        checkpoint_dir: Some(out_dir.to_path_buf()),
        stop_after_phase,
        init,
        log_path: Some(log_path.clone()),
        fixed_task: finetune.map(TaskSpec::parse).transpose()?,
    };
    write_json(&out_dir.join("config.json"), &cfg)?;
    let outcome = train(&cfg.model, &cfg.curriculum(), &cfg.schedule.build()?, &train_set, seed, &opts)?;
    let final_ckpt = out_dir.join("final.uckpt");
    let details = serde_json::json!({
        "iterations": outcome.records.len(),
        "final_loss": outcome.records.last().map(|r| r.loss),
        "params_sha256": outcome.params.hash(),
    });
    Manifest::new("train", seed, &cfg, &[&final_ckpt, &log_path], details).write(&out_dir.join("manifest.json"))?;
    Ok(())
}

struct SampleRequest<'a> {
    checkpoint: &'a Path,
    data: &'a Path,
    split: &'a str,
    task: &'a str,
    steps: Option<usize>,
    ddpm: bool,
    start: usize,
    count: usize,
    composite: bool,
    dump_steps: Option<&'a Path>,
    out: &'a Path,
}

fn cmd_sample(common: &Common, req: &SampleRequest<'_>) -> Result<()> {
    let cfg = RunConfig::load(common.config.as_deref())?;
    let seed = resolve_seed(common.seed, cfg.sampler.seed);
    let task = TaskSpec::parse(req.task)?;
    let (model_cfg, params) = load_checkpoint(req.checkpoint)?;
    let sched = cfg.schedule.build()?;
    let mut sampler = SamplerConfig { seed, ..cfg.sampler };
    if req.ddpm {
        sampler.kind = SamplerKind::Ddpm;
        sampler.n_steps = sched.steps();
    }
    if let Some(n) = req.steps {
        sampler.n_steps = n;
    }
    let dataset = DatasetDir::open(req.data)?;
    let records = dataset.split(req.split)?;
    let end = req.start + req.count;
    if req.count == 0 || end > records.len() {
        return Err(Error::param(format!(
            "segments {}..{end} outside the {} split of {} segments",
            req.start,
            req.split,
            records.len()
        )));
    }
    let chosen = &records[req.start..end];
    let l = model_cfg.seq_len;
    let deg = Degradation::from(&cfg.curriculum);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut conds = Array3::zeros((chosen.len(), N_SLOTS, l));
    let mut masked_conditions = Vec::new();
    for (i, rec) in chosen.iter().enumerate() {
        let mut masked = None;
        for c in &task.conditions {
            let clean = rec
                .get(c.modality)
                .ok_or_else(|| Error::Format(format!("segment lacks {}", c.modality)))?;
            crate::error::check_len(l, clean.len())?;
            let d = degrade(clean, c.kind, &deg, &mut rng)?;
            if c.kind == ConditionKind::Masked {
                masked = Some((d.segment.clone(), d.mask.clone().expect("masked condition carries a mask")));
            }
            for (j, v) in d.segment.samples.iter().enumerate() {
                conds[[i, c.modality.index(), j]] = *v;
            }
        }
        masked_conditions.push(masked);
    }
    let opts = GenerateOptions {
        full_attention: cfg.ablations.disable_tam,
        record_steps: req.dump_steps.is_some(),
    };
    let t0 = Instant::now();
    let generated = generate_batch(&params, &model_cfg, &sched, &task, &conds, &sampler, opts)?;
    let per_segment = t0.elapsed().as_secs_f64() / chosen.len() as f64;
    let space = space_of(dataset.norm.get(task.target).expect("physical target").0);
    let mut preds = Vec::new();
    let mut truths = Vec::new();
    let mut missing = Vec::new();
    for (i, rec) in chosen.iter().enumerate() {
        let truth = rec.get(task.target).expect("physical target");
        let mut seg = SignalSegment::new(generated.samples.row(i).to_vec(), truth.fs, task.target, space);
        match &masked_conditions[i] {
            Some((cond, mask)) => {
                if cond.modality == task.target {
                    seg = impute_composite(&seg, cond, mask, req.composite)?;
                }
                missing.push(mask.missing_indices());
            }
            None => missing.push(Vec::new()),
        }
        preds.push(single(i, to_output_space(&seg, &dataset.norm)?));
        truths.push(single(i, to_output_space(truth, &dataset.norm)?));
    }
    write_corpus(req.out, &Corpus::from_aligned(&preds, &[task.target])?, &[task.target])?;
    let truth_path = sibling(req.out, ".truth.ucs");
    std::fs::write(&truth_path, Corpus::from_aligned(&truths, &[task.target])?.to_bytes())?;
    let sidecar = SampleSidecar {
        task: task.name(),
        modality: task.target,
        unit_space: preds[0].signals[0].unit_space,
        sampler,
        seed,
        nfe: generated.nfe,
        composite: req.composite,
        segments: (req.start..end).collect(),
        wall_clock_s: vec![per_segment; chosen.len()],
        missing,
    };
    let sidecar_path = sibling(req.out, ".json");
    write_json(&sidecar_path, &sidecar)?;
    let mut outputs: Vec<&Path> = vec![req.out, &truth_path, &sidecar_path];
    if let Some(p) = req.dump_steps {
        let mut text = String::from("segment,step,t,index,x0_hat\n");
        for (k, step) in generated.steps.iter().enumerate() {
            for (i, row) in step.x0_hat.outer_iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    text.push_str(&format!("{i},{k},{},{j},{v}\n", step.t));
                }
            }
        }
        std::fs::write(p, text)?;
        outputs.push(p);
    }
    let details = serde_json::json!({ "task": task.name(), "nfe": generated.nfe, "wall_clock_s_per_segment": per_segment });
    Manifest::new("sample", seed, &cfg, &outputs, details).write(&sibling(req.out, ".manifest.json"))?;
    log::info!("{} segments, NFE {}, {per_segment:.3} s per segment", chosen.len(), generated.nfe);
    Ok(())
}

fn single(id: usize, seg: SignalSegment) -> AlignedSegment {
    AlignedSegment {
        id,
        offset: 0,
        signals: vec![seg],
    }
}

/// Metric rows over every segment and modality column of two corpora.
pub fn evaluate(
    pred: &Corpus,
    target: &Corpus,
    task: &str,
    missing: Option<&[Vec<usize>]>,
    max_shift_s: f64,
) -> Result<Vec<EvalRow>> {
    if (pred.n_modalities, pred.seq_len, pred.n_segments())
        != (target.n_modalities, target.seq_len, target.n_segments())
    {
        return Err(Error::Format("prediction and target corpora differ in shape".into()));
    }
    let shifts = ShiftSet::one_second(target.fs() * max_shift_s);
    let names = if missing.is_some() {
        vec!["rmse", "mae", "ks"]
    } else {
        vec!["rmse", "mae", "min_rmse", "min_mae", "ks"]
    };
    let mut values = vec![Vec::new(); names.len()];
    for seg in 0..target.n_segments() {
        for k in 0..target.n_modalities {
            let mut a: Vec<f64> = pred.samples(seg, k).iter().map(|&v| v as f64).collect();
            let mut b: Vec<f64> = target.samples(seg, k).iter().map(|&v| v as f64).collect();
            if let Some(m) = missing {
                let idx = m
                    .get(seg)
                    .ok_or_else(|| Error::Format(format!("no gap mask for segment {seg}")))?;
                if idx.is_empty() {
                    continue;
                }
                a = idx.iter().map(|&i| a[i]).collect();
                b = idx.iter().map(|&i| b[i]).collect();
            }
            for (name, out) in names.iter().zip(values.iter_mut()) {
                out.push(match *name {
                    "rmse" => rmse(&a, &b)?,
                    "mae" => mae(&a, &b)?,
                    "min_rmse" => min_rmse(&a, &b, shifts)?,
                    "min_mae" => min_mae(&a, &b, shifts)?,
                    _ => ks_test(&a, &b)?,
                });
            }
        }
    }
    names
        .iter()
        .zip(&values)
        .map(|(name, v)| EvalRow::from_values(task, name, v))
        .collect()
}

fn cmd_eval(
    pred: &Path,
    target: &Path,
    sidecar: Option<&Path>,
    task: Option<String>,
    masked_region_only: bool,
    max_shift_s: f64,
    out: &Path,
) -> Result<()> {
    let side: Option<SampleSidecar> = sidecar.map(read_json).transpose()?;
    let task = task
        .or_else(|| side.as_ref().map(|s| s.task.clone()))
        .unwrap_or_else(|| "unspecified".into());
    let target = read_corpus(target, 1.0)?;
    let pred = read_corpus(pred, target.fs())?;
    let missing = match (&side, masked_region_only) {
        (Some(s), true) => Some(s.missing.as_slice()),
        _ => None,
    };
    let rows = evaluate(&pred, &target, &task, missing, max_shift_s)?;
    let mut text = format!("{}\n", EvalRow::CSV_HEADER);
    for r in &rows {
        text.push_str(&r.csv_row());
        text.push('\n');
    }
    std::fs::write(out, text)?;
    Ok(())
}

fn cmd_plot(
    pred: Option<&Path>,
    target: Option<&Path>,
    sidecar: Option<&Path>,
    steps: Option<&Path>,
    log: Option<&Path>,
    segment: usize,
    out: &Path,
) -> Result<()> {
    use plot::{render, Panel, Series};
    let side: Option<SampleSidecar> = sidecar.map(read_json).transpose()?;
    let truth: Option<Vec<f64>> = match target {
        Some(p) => {
            let c = read_corpus(p, 1.0)?;
            check_segment(&c, segment)?;
            Some(c.samples(segment, 0).iter().map(|&v| v as f64).collect())
        }
        None => None,
    };
    let svg = if let Some(p) = steps {
        let dump = read_step_dump(p, segment)?;
        let panels: Vec<Panel<'_>> = dump
            .iter()
            .map(|(t, x)| {
                let mut series = vec![Series { label: "estimate", values: x }];
                if let Some(tr) = &truth {
                    series.push(Series { label: "truth", values: tr });
                }
                Panel {
                    title: format!("t = {t}"),
                    series,
                    shade: None,
                }
            })
            .collect();
        render(&panels)
    } else if let Some(p) = log {
        let loss: Vec<f64> = read_log(p)?.iter().map(|r| r.loss).collect();
        render(&[Panel {
            title: "training loss".into(),
            series: vec![Series { label: "loss", values: &loss }],
            shade: None,
        }])
    } else if let Some(p) = pred {
        let c = read_corpus(p, 1.0)?;
        check_segment(&c, segment)?;
        let generated: Vec<f64> = c.samples(segment, 0).iter().map(|&v| v as f64).collect();
        let shade: Option<Vec<bool>> = side.as_ref().and_then(|s| s.missing.get(segment)).map(|m| {
            let mut v = vec![false; generated.len()];
            for &i in m {
                if let Some(x) = v.get_mut(i) {
                    *x = true;
                }
            }
            v
        });
        let mut series = Vec::new();
        if let Some(tr) = &truth {
            series.push(Series { label: "truth", values: tr });
        }
        series.push(Series { label: "generated", values: &generated });
        let title = side.as_ref().map_or_else(|| format!("segment {segment}"), |s| format!("{} segment {segment}", s.task));
        render(&[Panel {
            title,
            series,
            shade: shade.as_deref(),
        }])
    } else {
        return Err(Error::param("plot needs --pred, --steps or --log"));
    };
    std::fs::write(out, svg)?;
    Ok(())
}

fn check_segment(c: &Corpus, segment: usize) -> Result<()> {
    if segment >= c.n_segments() {
        return Err(Error::param(format!("segment {segment} of {}", c.n_segments())));
    }
    Ok(())
}

/// `(t, x0_hat)` per step for one segment of a step dump.
fn read_step_dump(path: &Path, segment: usize) -> Result<Vec<(usize, Vec<f64>)>> {
    let text = std::fs::read_to_string(path)?;
    let mut steps: Vec<(usize, Vec<f64>)> = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1).filter(|(_, l)| !l.is_empty()) {
        let bad = || Error::Format(format!("step dump line {}: {line:?}", n + 1));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(bad());
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| bad());
        if parse(f[0])? != segment {
            continue;
        }
        let (k, t, j) = (parse(f[1])?, parse(f[2])?, parse(f[3])?);
        let v: f64 = f[4].parse().map_err(|_| bad())?;
        if steps.len() <= k {
            steps.resize(k + 1, (t, Vec::new()));
        }
        let row = &mut steps[k].1;
        if row.len() <= j {
            row.resize(j + 1, f64::NAN);
        }
        row[j] = v;
    }
    if steps.is_empty() {
        return Err(Error::Format(format!("no steps for segment {segment}")));
    }
    Ok(steps)
}
