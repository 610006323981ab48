//! `gazeeg`: command-line front end for the fixation classification pipeline.
//!
//! Exit codes: 0 success, 1 usage or validation error, 2 runtime error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gazeeg::config::{ConfigError, PipelineConfig};
use gazeeg::dataset::{find_recordings, load_recording, Label};
use gazeeg::eeg::{load_epochs, save_epochs};
use gazeeg::eval::{process_recording, run_conditions, write_report, EvalError, EvalReport, PreparedData, Processed};
use gazeeg::features::{csp_fit, BlockKind, FeatureSet, GAZE_FEATURE};
use gazeeg::gaze::{detect_for_recording, Fixation, Saccade};
use gazeeg::learn::{named_grid, train, FittedModel};
use gazeeg::synth::{generate, write_dataset};
use ndarray::{Array2, Axis};
use rayon::prelude::*;

#[derive(Parser, Debug)]
#[command(name = "gazeeg", version, about = "Target vs. non-target fixation classification from eye tracking and EEG")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML config file; built-in defaults apply to missing keys.
    #[arg(long, visible_alias = "params", global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `-D synth.n_participants=4`. Repeatable.
    #[arg(short = 'D', long = "override", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Log level: error, warn, info, debug, trace.
    #[arg(long, global = true, default_value = "info")]
    log: String,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset with ground truth.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Detect fixations and saccades in one recording.
    Gaze {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Clean the EEG of one or more recordings and write labeled epochs.
    Eeg {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute a feature set from epoch files.
    Features {
        #[arg(long, num_args = 1.., required = true)]
        epochs: Vec<PathBuf>,
        #[arg(long, default_value = "fusion")]
        set: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grid-search and fit an SVM on a features file.
    Train {
        #[arg(long)]
        features: PathBuf,
        /// `default` (all 18 cells), `linear`, `rbf` or `poly`.
        #[arg(long, default_value = "default")]
        grid: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the within-/cross-user evaluation on recordings.
    Eval {
        #[arg(long, num_args = 1.., required = true)]
        data: Vec<PathBuf>,
        /// `all` or a comma-separated list such as `W->W,D->W`.
        #[arg(long)]
        conditions: Option<String>,
        /// Comma-separated feature sets.
        #[arg(long)]
        features: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rewrite report files from a `report.json`.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// synth, gaze, eeg, eval and report in one go.
    All {
        #[arg(long)]
        out: PathBuf,
    },
}

/// Errors the user can fix by changing the invocation or the config.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct Usage(String);

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<Usage>() || cause.is::<ConfigError>() {
            return 1;
        }
        if let Some(EvalError::Condition(_)) = cause.downcast_ref::<EvalError>() {
            return 1;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new().parse_filters(&cli.global.log).format_timestamp(None).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load_config(g: &Global) -> Result<PipelineConfig> {
    let mut overrides = g.overrides.clone();
    if let Some(s) = g.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(j) = g.jobs {
        overrides.push(format!("jobs={j}"));
    }
    Ok(PipelineConfig::load(g.config.as_deref(), &overrides)?)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.global)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build_global()
        .map_err(|e| anyhow!("thread pool: {e}"))?;
    match cli.command {
        Command::Synth { out } => cmd_synth(&cfg, &out),
        Command::Gaze { input, out } => cmd_gaze(&cfg, &input, &out),
        Command::Eeg { input, out } => cmd_eeg(&cfg, &input, &out),
        Command::Features { epochs, set, out } => cmd_features(&cfg, &epochs, &set, &out),
        Command::Train { features, grid, out } => cmd_train(&cfg, &features, &grid, &out),
        Command::Eval { data, conditions, features, out } => {
            let mut cfg = cfg;
            if let Some(c) = conditions {
                cfg.eval.conditions = split_list(&c);
            }
            if let Some(f) = features {
                cfg.eval.feature_sets = split_list(&f);
            }
            cfg.validate()?;
            cmd_eval(&cfg, &data, &out)
        }
        Command::Report { input, out } => cmd_report(&cfg, &input, &out),
        Command::All { out } => cmd_all(&cfg, &out),
    }
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',').map(|p| p.trim().to_string()).filter(|p| !p.is_empty()).collect()
}

fn parent_dir(p: &Path) -> PathBuf {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn dump(cfg: &PipelineConfig, dir: &Path) -> Result<()> {
    cfg.dump(dir).with_context(|| format!("writing effective config into {}", dir.display()))
}

fn timed<T>(stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let t = Instant::now();
    let r = f();
    log::info!("{stage}: {:.2} s", t.elapsed().as_secs_f64());
    r
}

fn cmd_synth(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let dirs = timed("synth", || {
        let ps = generate(&cfg.synth)?;
        Ok(write_dataset(&ps, out)?)
    })?;
    dump(cfg, out)?;
    log::info!("wrote {} participants to {}", dirs.len(), out.display());
    Ok(())
}

fn fixations_csv(fixations: &[Fixation], saccades: &[Saccade]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["kind", "onset_ms", "duration_ms", "x_px", "y_px", "samples", "trial_id"])?;
    let mut rows: Vec<(f64, Vec<String>)> = Vec::new();
    for f in fixations {
        rows.push((
            f.onset_ms,
            vec![
                "fixation".into(),
                format!("{:.3}", f.onset_ms),
                format!("{:.3}", f.duration_ms),
                format!("{:.2}", f.centroid_px[0]),
                format!("{:.2}", f.centroid_px[1]),
                f.sample_count.to_string(),
                f.trial_id.map(|t| t.to_string()).unwrap_or_default(),
            ],
        ));
    }
    for s in saccades {
        rows.push((
            s.onset_ms,
            vec![
                "saccade".into(),
                format!("{:.3}", s.onset_ms),
                format!("{:.3}", s.offset_ms - s.onset_ms),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
            ],
        ));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (_, r) in rows {
        w.write_record(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn cmd_gaze(cfg: &PipelineConfig, input: &Path, out: &Path) -> Result<()> {
    let rec = load_recording(input)?;
    let (fx, sc) = timed("gaze", || Ok(detect_for_recording(&rec, &cfg.gaze)?))?;
    write_file(out, fixations_csv(&fx, &sc)?)?;
    dump(cfg, &parent_dir(out))?;
    log::info!("{}: {} fixations, {} saccades", rec.participant_id, fx.len(), sc.len());
    Ok(())
}

fn write_file(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    fs::create_dir_all(parent_dir(path))?;
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn provenance(cfg: &PipelineConfig, what: &str) -> serde_json::Value {
    serde_json::json!({
        "tool": format!("gazeeg {}", env!("CARGO_PKG_VERSION")),
        "stage": what,
        "seed": cfg.seed,
        "config": serde_json::to_value(cfg).unwrap_or(serde_json::Value::Null),
    })
}

/// Loads every recording under each path and runs the per-recording stages in parallel.
fn process_all(cfg: &PipelineConfig, roots: &[PathBuf]) -> Result<Vec<Processed>> {
    let mut dirs = Vec::new();
    for r in roots {
        dirs.extend(find_recordings(r)?);
    }
    let pc = cfg.prepare_config();
    dirs.par_iter()
        .map(|d| {
            let rec = load_recording(d).with_context(|| format!("loading {}", d.display()))?;
            process_recording(&rec, &pc).with_context(|| format!("processing {}", d.display()))
        })
        .collect()
}

fn concat(processed: &[Processed]) -> Result<PreparedData> {
    Ok(PreparedData::concat(processed.iter().map(|p| p.data.clone()).collect())?)
}

fn cmd_eeg(cfg: &PipelineConfig, input: &Path, out: &Path) -> Result<()> {
    let processed = timed("eeg", || process_all(cfg, &[input.to_path_buf()]))?;
    let data = concat(&processed)?;
    fs::create_dir_all(parent_dir(out))?;
    save_epochs(&data.to_epoch_set(provenance(cfg, "eeg")), out)?;
    dump(cfg, &parent_dir(out))?;
    log::info!("wrote {} FRP and {} SRP epochs to {}", data.len(), data.len(), out.display());
    Ok(())
}

fn load_prepared(cfg: &PipelineConfig, files: &[PathBuf]) -> Result<PreparedData> {
    let parts = files
        .iter()
        .map(|f| {
            let set = load_epochs::<f64>(f).with_context(|| format!("reading {}", f.display()))?;
            Ok(PreparedData::from_epoch_set(&set, &cfg.srp)?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PreparedData::concat(parts)?)
}

const META_COLUMNS: [&str; 4] = ["participant", "trial_id", "domain", "label"];

/// Feature table for `set`. CSP, when requested, is fitted on every epoch
/// given; evaluation refits it inside each training fold.
fn feature_table(data: &PreparedData, set: &FeatureSet, cfg: &PipelineConfig) -> Result<(Vec<String>, Array2<f64>)> {
    let mut schema = Vec::new();
    let mut blocks = Vec::new();
    for b in &set.blocks {
        match b {
            BlockKind::Gaze => {
                schema.extend(data.gaze_schema.iter().cloned());
                blocks.push(data.gaze.clone());
            }
            BlockKind::Pyeeg => {
                schema.extend(data.pyeeg_schema.iter().cloned());
                blocks.push(data.pyeeg.clone());
            }
            BlockKind::Srp => {
                schema.extend(data.srp_schema.iter().cloned());
                blocks.push(data.srp.clone());
            }
            BlockKind::Csp15 => {
                let epochs: Vec<_> = data.frp.iter().map(|e| e.view()).collect();
                let n = cfg.eval.csp_components.min(data.channels.len());
                let csp = csp_fit(&epochs, &data.labels(), n)?;
                let mut m = Array2::zeros((data.len(), n));
                for (i, e) in data.frp.iter().enumerate() {
                    m.row_mut(i).assign(&ndarray::Array1::from(csp.transform(e.view())?));
                }
                schema.extend(csp.schema());
                blocks.push(m);
            }
        }
    }
    let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
    Ok((schema, ndarray::concatenate(Axis(1), &views)?))
}

fn cmd_features(cfg: &PipelineConfig, epochs: &[PathBuf], set: &str, out: &Path) -> Result<()> {
    let set: FeatureSet = set.parse().map_err(|e| Usage(format!("{e}")))?;
    let data = load_prepared(cfg, epochs)?;
    let (schema, x) = timed("features", || feature_table(&data, &set, cfg))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(META_COLUMNS.iter().map(|s| s.to_string()).chain(schema.iter().cloned()))?;
    for (s, row) in data.samples.iter().zip(x.outer_iter()) {
        let mut rec = vec![s.participant.clone(), s.trial_id.to_string(), s.domain.short().to_string(), s.label.as_str().to_string()];
        rec.extend(row.iter().map(|v| format!("{v:e}")));
        w.write_record(rec)?;
    }
    write_file(out, w.into_inner()?)?;
    dump(cfg, &parent_dir(out))?;
    log::info!("wrote {} rows x {} features ({}) to {}", data.len(), schema.len(), set.name, out.display());
    Ok(())
}

fn block_of(name: &str) -> BlockKind {
    if name == GAZE_FEATURE {
        BlockKind::Gaze
    } else if name.starts_with("csp_") {
        BlockKind::Csp15
    } else if name.contains(".srp_") {
        BlockKind::Srp
    } else {
        BlockKind::Pyeeg
    }
}

struct FeatureFile {
    schema: Vec<String>,
    labels: Vec<Label>,
    x: Array2<f64>,
}

fn read_features(path: &Path) -> Result<FeatureFile> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.len() <= META_COLUMNS.len() || header[..META_COLUMNS.len()] != META_COLUMNS {
        bail!(Usage(format!("{}: expected columns {} then features", path.display(), META_COLUMNS.join(","))));
    }
    let schema = header[META_COLUMNS.len()..].to_vec();
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        labels.push(match &rec[3] {
            "target" => Label::Target,
            "nontarget" => Label::Nontarget,
            other => bail!(Usage(format!("row {}: unknown label {other:?}", i + 2))),
        });
        for v in rec.iter().skip(META_COLUMNS.len()) {
            values.push(v.parse::<f64>().map_err(|e| Usage(format!("row {}: {e}", i + 2)))?);
        }
    }
    let x = Array2::from_shape_vec((labels.len(), schema.len()), values)?;
    Ok(FeatureFile { schema, labels, x })
}

fn cmd_train(cfg: &PipelineConfig, features: &Path, grid: &str, out: &Path) -> Result<()> {
    let cells = named_grid(grid).ok_or_else(|| Usage(format!("unknown grid {grid:?}; use default, linear, poly or rbf")))?;
    let f = read_features(features)?;
    let mut groups: Vec<(BlockKind, Vec<usize>)> = Vec::new();
    for (j, name) in f.schema.iter().enumerate() {
        let b = block_of(name);
        match groups.last_mut() {
            Some((k, cols)) if *k == b => cols.push(j),
            _ => groups.push((b, vec![j])),
        }
    }
    let mats: Vec<(String, Vec<String>, Array2<f64>)> = groups
        .iter()
        .map(|(b, cols)| (b.as_str().to_string(), cols.iter().map(|&j| f.schema[j].clone()).collect(), f.x.select(Axis(1), cols)))
        .collect();
    let blocks: Vec<_> = mats.iter().map(|(n, s, m)| (n.as_str(), s.as_slice(), m.view())).collect();
    let model: FittedModel<f64> = timed("train", || Ok(train(&blocks, &f.labels, &cells, cfg.eval.inner_folds, cfg.seed)?))?;
    if let Some(g) = &model.grid {
        if let Some(row) = g.table.iter().find(|r| r.spec == g.best) {
            log::info!("selected {} (inner CV accuracy {:.3})", g.best, row.mean_accuracy);
        }
    }
    let mut body = serde_json::to_string_pretty(&model)?;
    body.push('\n');
    write_file(out, body)?;
    dump(cfg, &parent_dir(out))?;
    Ok(())
}

fn evaluate(cfg: &PipelineConfig, data: &PreparedData, out: &Path) -> Result<()> {
    let rows = timed("eval", || Ok(run_conditions(data, &cfg.eval, cfg.seed)?))?;
    let report = EvalReport { seed: cfg.seed, config: serde_json::to_value(cfg)?, rows };
    let files = write_report(&report, out)?;
    dump(cfg, out)?;
    log::info!("wrote {} rows, {} files to {}", report.rows.len(), files.len(), out.display());
    Ok(())
}

fn cmd_eval(cfg: &PipelineConfig, data: &[PathBuf], out: &Path) -> Result<()> {
    let processed = timed("prepare", || process_all(cfg, data))?;
    evaluate(cfg, &concat(&processed)?, out)
}

fn cmd_report(cfg: &PipelineConfig, input: &Path, out: &Path) -> Result<()> {
    let report = gazeeg::eval::read_report(input).with_context(|| format!("reading {}", input.display()))?;
    write_report(&report, out)?;
    dump(cfg, out)?;
    Ok(())
}

fn cmd_all(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let t = Instant::now();
    fs::create_dir_all(out)?;
    dump(cfg, out)?;
    let data_dir = out.join("data");
    cmd_synth(cfg, &data_dir)?;
    let processed = timed("prepare", || process_all(cfg, &[data_dir.clone()]))?;
    let stage_dir = out.join("participants");
    for p in &processed {
        let dir = stage_dir.join(&p.participant);
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("fixations.csv"), fixations_csv(&p.fixations, &p.saccades)?)?;
        save_epochs(&p.data.to_epoch_set(provenance(cfg, "eeg")), dir.join("epochs.bin"))?;
        dump(cfg, &dir)?;
    }
    evaluate(cfg, &concat(&processed)?, &out.join("report"))?;
    log::info!("all: {:.2} s", t.elapsed().as_secs_f64());
    Ok(())
}
