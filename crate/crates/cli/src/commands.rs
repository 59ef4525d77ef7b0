use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use hatcn::baseline::{extract_feature, write_feature_csv, MarginConfig};
use hatcn::data::{generate_synthetic, preprocess_to, read_csv_path, write_long_csv, Dataset, Label, SERIES_LENGTH};
use hatcn::explain::{explain, mean_frequency, ExplainSettings, ExplanationReport};
use hatcn::metrics::{Metrics, Summary};
use hatcn::plot::{class_frequency_plot, depth_sweep_plot, explanation_plot};
use hatcn::train::{
    audit_provenance, baseline_cross_validate, cross_validate, evaluate, predict_all, train, write_csv_rows, CvReport,
    CvTimings, SweepRow, TableRow,
};
use hatcn::{Checkpoint, CvConfig, Error, HatcnConfig, HatcnModel, Result, SynthConfig, TrainConfig, Variant};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::args::*;
use crate::settings::{parse_layers, pick, FileConfig};

const DEFAULT_CHANNELS: usize = 8;
const DEFAULT_KERNEL: usize = 50;
const DEFAULT_LAYERS: usize = 2;

fn out_dir(flag: Option<PathBuf>, file: &FileConfig, default: &str) -> Result<PathBuf> {
    let dir = pick(flag, file.path("out")?, PathBuf::from(default));
    fs::create_dir_all(&dir).map_err(|e| Error::Usage(format!("cannot create output directory {}: {e}", dir.display())))?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Raw dataset from `--data`, or the default synthetic cohort.
fn load_raw(flag: Option<PathBuf>, file: &FileConfig) -> Result<Dataset> {
    match flag.or(file.path("data")?) {
        Some(path) => read_csv_path(path),
        None => Ok(generate_synthetic(&SynthConfig::default())?.dataset),
    }
}

fn preprocess_all(raw: &Dataset, len: usize) -> Result<Dataset> {
    Ok(Dataset { series: raw.series.iter().map(|s| preprocess_to(s, len)).collect::<Result<_>>()? })
}

fn require(path: Option<PathBuf>, file: &FileConfig, key: &str) -> Result<PathBuf> {
    path.or(file.path(key)?).ok_or_else(|| Error::Usage(format!("--{key} is required")))
}

struct ModelChoice {
    variant: Variant,
    depths: Vec<usize>,
    channels: usize,
    kernel: usize,
}

fn model_choice(args: &ModelArgs, file: &FileConfig) -> Result<ModelChoice> {
    let variant: Variant = pick(args.model.clone(), file.string("model")?, "hatcn".into()).parse()?;
    let depths = match &args.layers {
        Some(s) => parse_layers(s)?,
        None => file.layers()?.unwrap_or(vec![DEFAULT_LAYERS]),
    };
    Ok(ModelChoice {
        variant,
        depths,
        channels: pick(args.channels, file.usize("channels")?, DEFAULT_CHANNELS),
        kernel: pick(args.kernel, file.usize("kernel")?, DEFAULT_KERNEL),
    })
}

fn train_config(args: &OptimArgs, file: &FileConfig, variant: Variant, seed: u64) -> Result<TrainConfig> {
    let d = TrainConfig::default();
    let cfg = TrainConfig {
        epochs: pick(args.epochs, file.usize("epochs")?, d.epochs),
        learning_rate: pick(args.lr, file.f64("lr")?, d.learning_rate),
        batch_size: pick(args.batch, file.usize("batch")?, d.batch_size),
        variant,
        seed,
        ..d
    };
    // the library accepts a zero rate for experiments; the tool does not
    if !(cfg.learning_rate > 0.0) {
        return Err(Error::Usage(format!("--lr must be positive, got {}", cfg.learning_rate)));
    }
    if cfg.epochs < 1 {
        return Err(Error::Usage("--epochs must be >= 1".into()));
    }
    cfg.validate().map_err(|e| Error::Usage(e.to_string()))?;
    Ok(cfg)
}

fn model_config(choice: &ModelChoice, layers: usize) -> Result<HatcnConfig> {
    let cfg = HatcnConfig::new(layers, choice.channels, choice.kernel, SERIES_LENGTH);
    cfg.validate().map_err(|e| Error::Usage(e.to_string()))?;
    Ok(cfg)
}

pub fn gen_data(args: GenDataArgs) -> Result<()> {
    let file = FileConfig::load(args.config.config.as_deref())?;
    let seed = pick(args.seed, file.u64("seed")?, SynthConfig::default().seed);
    let out = out_dir(args.out, &file, "data")?;
    let cohort = generate_synthetic(&SynthConfig { seed, ..SynthConfig::default() })?;
    let mut w = create(&out.join("dataset.csv"))?;
    write_long_csv(&cohort.dataset, &mut w)?;
    drop(w);
    write_json(&out.join("annotations.json"), &cohort.annotations)?;
    println!(
        "wrote {} series from {} subjects to {}",
        cohort.dataset.len(),
        cohort.dataset.subjects().len(),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct LossRow {
    epoch: usize,
    loss: f64,
}

pub fn train_cmd(args: TrainArgs) -> Result<()> {
    let file = FileConfig::load(args.config.config.as_deref())?;
    let choice = model_choice(&args.model, &file)?;
    let [layers] = choice.depths[..] else {
        return Err(Error::Usage("train takes a single --layers value".into()));
    };
    let seed = pick(args.seed, file.u64("seed")?, 1);
    let tcfg = train_config(&args.optim, &file, choice.variant, seed)?;
    let mcfg = model_config(&choice, layers)?;
    let out = out_dir(args.out, &file, "out")?;
    let checkpoint = pick(args.checkpoint, file.path("checkpoint")?, out.join("model.bin"));
    let ds = preprocess_all(&load_raw(args.data, &file)?, mcfg.input_length)?;
    let model = HatcnModel::new(mcfg, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let outcome = train(model, &ds.series, &tcfg)?;
    let ck = Checkpoint { model: outcome.model, variant: choice.variant, seed, epochs: tcfg.epochs as u64 };
    ck.save(&checkpoint)?;
    let rows: Vec<LossRow> = std::iter::once(outcome.initial_loss)
        .chain(outcome.loss_curve.iter().copied())
        .enumerate()
        .map(|(epoch, loss)| LossRow { epoch, loss })
        .collect();
    write_csv_rows(&rows, create(&out.join("loss.csv"))?)?;
    println!(
        "trained {} on {} series: loss {:.4} -> {:.4}; checkpoint {}",
        choice.variant.name(),
        ds.len(),
        outcome.initial_loss,
        outcome.loss_curve.last().copied().unwrap_or(f64::NAN),
        checkpoint.display()
    );
    Ok(())
}

pub fn eval_cmd(args: EvalArgs) -> Result<()> {
    let file = FileConfig::load(args.config.config.as_deref())?;
    let ck = Checkpoint::load(require(args.checkpoint, &file, "checkpoint")?)?;
    let out = out_dir(args.out, &file, "out")?;
    let ds = preprocess_all(&load_raw(args.data, &file)?, ck.model.config.input_length)?;
    let metrics = evaluate(&ck.model, &ds.series, ck.variant, 0.5)?;
    write_csv_rows(&predict_all(&ck.model, &ds.series, ck.variant, 0.5)?, create(&out.join("predictions.csv"))?)?;
    write_json(&out.join("eval.json"), &metrics)?;
    println!("{}", serde_json::to_string_pretty(&metrics)?);
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BaselineResult {
    pub per_fold: Vec<Metrics>,
    pub summary: Summary,
}

/// Deterministic cross-validation outcome (`metrics.json`).
#[derive(Debug, Serialize, Deserialize)]
pub struct MetricsDoc {
    pub reports: Vec<CvReport>,
    pub baseline: BaselineResult,
}

/// `results.json`: the metrics plus settings, the depth sweep and timings.
#[derive(Debug, Serialize, Deserialize)]
pub struct ResultsDoc {
    pub settings: CvSettings,
    pub metrics: MetricsDoc,
    pub sweep: Vec<SweepRow>,
    pub timings: Vec<CvTimings>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CvSettings {
    pub data: Option<PathBuf>,
    pub variant: Variant,
    pub depths: Vec<usize>,
    pub channels: usize,
    pub kernel_size: usize,
    pub folds: usize,
    pub repeats: usize,
    pub master_seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub jobs: usize,
}

pub fn cv_cmd(args: CvArgs) -> Result<()> {
    let file = FileConfig::load(args.config.config.as_deref())?;
    let choice = model_choice(&args.model, &file)?;
    let master_seed = pick(args.seed, file.u64("seed")?, 1);
    let tcfg = train_config(&args.optim, &file, choice.variant, master_seed)?;
    let folds = pick(args.folds, file.usize("folds")?, 10);
    let repeats = pick(args.repeats, file.usize("repeats")?, 5);
    let jobs = pick(args.jobs, file.usize("jobs")?, 1).max(1);
    if folds < 2 || repeats < 1 {
        return Err(Error::Usage(format!("need --folds >= 2 and --repeats >= 1, got {folds} and {repeats}")));
    }
    let configs = choice.depths.iter().map(|&k| model_config(&choice, k)).collect::<Result<Vec<_>>>()?;
    let out = out_dir(args.out, &file, "out")?;
    let data = args.data.or(file.path("data")?);
    let raw = load_raw(data.clone(), &file)?;
    let ds = preprocess_all(&raw, SERIES_LENGTH)?;

    let mut reports = Vec::new();
    let mut timings = Vec::new();
    let mut sweep = Vec::new();
    for model in configs {
        let cfg = CvConfig { model, train: tcfg.clone(), folds, repeats, master_seed, threshold: 0.5, jobs };
        let (report, timing) = cross_validate(&ds, &cfg)?;
        audit_provenance(&report)?;
        eprintln!(
            "{} K={}: accuracy {:.4} ± {:.4}, F1 {:.4} ({:.0}s)",
            choice.variant.name(),
            report.layers,
            report.summary.accuracy.mean,
            report.summary.accuracy.std,
            report.summary.f1.mean,
            timing.total_seconds
        );
        sweep.push(SweepRow {
            variant: choice.variant,
            depth: report.layers,
            accuracy_mean: report.summary.accuracy.mean,
            accuracy_std: report.summary.accuracy.std,
            f1_mean: report.summary.f1.mean,
            total_seconds: timing.total_seconds,
        });
        reports.push(report);
        timings.push(timing);
    }
    let (per_fold, summary) = baseline_cross_validate(&raw, folds, master_seed, &MarginConfig::default())?;
    let mut table: Vec<TableRow> =
        reports.iter().map(|r| TableRow::new(&format!("{}-K{}", r.variant.name(), r.layers), &r.summary)).collect();
    table.push(TableRow::new("rt90_5-margin", &summary));

    let metrics = MetricsDoc { reports, baseline: BaselineResult { per_fold, summary } };
    write_json(&out.join("metrics.json"), &metrics)?;
    write_csv_rows(&table, create(&out.join("table.csv"))?)?;
    write_csv_rows(&sweep, create(&out.join("sweep.csv"))?)?;
    let settings = CvSettings {
        data,
        variant: choice.variant,
        depths: choice.depths.clone(),
        channels: choice.channels,
        kernel_size: choice.kernel,
        folds,
        repeats,
        master_seed,
        epochs: tcfg.epochs,
        learning_rate: tcfg.learning_rate,
        batch_size: tcfg.batch_size,
        jobs,
    };
    write_json(&out.join("results.json"), &ResultsDoc { settings, metrics, sweep, timings })?;
    for row in &table {
        println!("{:<16} accuracy {:.4} ± {:.4}  F1 {:.4} ± {:.4}", row.model, row.accuracy_mean, row.accuracy_std, row.f1_mean, row.f1_std);
    }
    Ok(())
}

fn file_stem(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

#[derive(Serialize)]
struct MeanFreqRow {
    t: usize,
    healthy: f64,
    patient: f64,
}

pub fn explain_cmd(args: ExplainArgs) -> Result<()> {
    let file = FileConfig::load(args.config.config.as_deref())?;
    let ck = Checkpoint::load(require(args.checkpoint, &file, "checkpoint")?)?;
    let series_path = require(args.series, &file, "series")?;
    if ck.variant != Variant::Hatcn {
        return Err(Error::Usage("explanations need a checkpoint trained with --model hatcn".into()));
    }
    let defaults = ExplainSettings::default();
    let settings = ExplainSettings {
        layer_fraction: pick(args.layer_pct, file.f64("layer-pct")?, defaults.layer_fraction),
        step_fraction: pick(args.step_pct, file.f64("step-pct")?, defaults.step_fraction),
        ..defaults
    };
    for (name, p) in [("--layer-pct", settings.layer_fraction), ("--step-pct", settings.step_fraction)] {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Usage(format!("{name} must lie in (0, 1], got {p}")));
        }
    }
    let out = out_dir(args.out, &file, "out")?;
    let ds = preprocess_all(&read_csv_path(series_path)?, ck.model.config.input_length)?;
    let mut curves: [Vec<Vec<u32>>; 2] = [vec![], vec![]];
    for s in &ds.series {
        let e = explain(&ck.model, &s.values, &settings)?;
        let report = ExplanationReport::new(&s.id, &e);
        let stem = file_stem(&s.id);
        write_json(&out.join(format!("{stem}.explanation.json")), &report)?;
        let svg = explanation_plot(&format!("{} (p = {:.3})", s.id, report.probability), &s.values, &report.freq, &report.segments).to_svg();
        fs::write(out.join(format!("{stem}.explanation.svg")), svg)?;
        let segs: Vec<String> = report.segments.iter().map(|g| format!("[{}, {}]", g.start, g.end)).collect();
        println!("{}  p={:.4}  segments {}", s.id, report.probability, segs.join(" "));
        curves[usize::from(s.label == Label::Patient)].push(report.freq);
    }
    let healthy = mean_frequency(curves[0].iter().map(|c| c.as_slice()));
    let patient = mean_frequency(curves[1].iter().map(|c| c.as_slice()));
    let len = ck.model.config.input_length;
    let rows: Vec<MeanFreqRow> = (0..len)
        .map(|t| MeanFreqRow { t, healthy: healthy.get(t).copied().unwrap_or(0.0), patient: patient.get(t).copied().unwrap_or(0.0) })
        .collect();
    write_csv_rows(&rows, create(&out.join("class_mean_freq.csv"))?)?;
    let mut classes = Vec::new();
    if !healthy.is_empty() {
        classes.push(("healthy", healthy));
    }
    if !patient.is_empty() {
        classes.push(("patient", patient));
    }
    fs::write(out.join("class_mean_freq.svg"), class_frequency_plot("mean relevance frequency by class", &classes).to_svg())?;
    Ok(())
}

pub fn baseline_cmd(args: BaselineArgs) -> Result<()> {
    let file = FileConfig::load(args.config.config.as_deref())?;
    let folds = pick(args.folds, file.usize("folds")?, 10);
    let seed = pick(args.seed, file.u64("seed")?, 1);
    let out = out_dir(args.out, &file, "out")?;
    let raw = load_raw(args.data, &file)?;
    let features = raw.series.iter().map(extract_feature).collect::<Result<Vec<_>>>()?;
    write_feature_csv(&features, create(&out.join("features.csv"))?)?;
    let (per_fold, summary) = baseline_cross_validate(&raw, folds, seed, &MarginConfig::default())?;
    write_csv_rows(&[TableRow::new("rt90_5-margin", &summary)], create(&out.join("baseline_table.csv"))?)?;
    write_json(&out.join("baseline.json"), &BaselineResult { per_fold, summary })?;
    let censored = features.iter().filter(|f| f.censored).count();
    println!(
        "RT90-5 margin baseline over {folds} folds: accuracy {:.4} ± {:.4}, F1 {:.4} ({censored} censored of {})",
        summary.accuracy.mean,
        summary.accuracy.std,
        summary.f1.mean,
        features.len()
    );
    Ok(())
}

pub fn plot_cmd(args: PlotArgs) -> Result<()> {
    let file = FileConfig::load(args.config.config.as_deref())?;
    let dir = require(args.data, &file, "data")?;
    if !dir.is_dir() {
        return Err(Error::Data(format!("{} is not a directory", dir.display())));
    }
    let out = match args.out.or(file.path("out")?) {
        Some(o) => out_dir(Some(o), &file, "out")?,
        None => dir.clone(),
    };
    let mut rendered = 0;
    let results = dir.join("results.json");
    if results.exists() {
        let doc: ResultsDoc = serde_json::from_str(&fs::read_to_string(&results)?)
            .map_err(|e| Error::Data(format!("{}: {e}", results.display())))?;
        fs::write(out.join("sweep.svg"), depth_sweep_plot(&doc.sweep).to_svg())?;
        rendered += 1;
    }
    let mut entries: Vec<PathBuf> = fs::read_dir(&dir)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
    entries.sort();
    for path in entries {
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        let Some(stem) = name.strip_suffix(".explanation.json") else { continue };
        let report: ExplanationReport = serde_json::from_str(&fs::read_to_string(&path)?)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let plot = explanation_plot(&report.series_id, &[], &report.freq, &report.segments);
        fs::write(out.join(format!("{stem}.freq.svg")), plot.to_svg())?;
        rendered += 1;
    }
    if rendered == 0 {
        return Err(Error::Data(format!("nothing to plot in {} (expected results.json or *.explanation.json)", dir.display())));
    }
    println!("rendered {rendered} plot(s) into {}", out.display());
    Ok(())
}
