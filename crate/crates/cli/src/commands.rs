use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rslicer_core::artifact::{self, Artifact, TaskBundle, TaskModels};
use rslicer_core::embedding::Backbone;
use rslicer_core::pipeline::{self, train_count};
use rslicer_core::projection::project_2d;
use rslicer_core::states::assign;
use rslicer_core::synthgen::generate;
use rslicer_core::tasks::{tune_anomaly, tune_classifier, tune_localizer};
use rslicer_core::telemetry::{self, build_windows, LabelSource};
use rslicer_core::{Corpus, EmbeddingSet, Error, FusionModel, RunConfig, StatePartition, StateSet, WindowLabel};

use crate::{Cli, Command, Task};

#[derive(Debug)]
pub struct CliError {
    pub code: &'static str,
    pub message: String,
}

impl<E: Into<Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        let e = e.into();
        CliError {
            code: e.code(),
            message: e.to_string(),
        }
    }
}

fn input_error(message: String) -> CliError {
    CliError { code: "input", message }
}

type Result<T> = std::result::Result<T, CliError>;

fn config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn out_path(out: Option<PathBuf>, cfg_dir: &str, name: &str) -> PathBuf {
    out.unwrap_or_else(|| Path::new(cfg_dir).join(name))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| input_error(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| input_error(format!("{}: {e}", dir.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| input_error(format!("{}: {e}", path.display())))
}

fn load<T: Artifact>(path: &Path) -> Result<T> {
    Ok(artifact::load(path)?)
}

fn save<T: Artifact>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| input_error(format!("{}: {e}", dir.display())))?;
    }
    Ok(artifact::save(path, value)?)
}

fn check_aligned(states: &StateSet, corpus: &Corpus) -> Result<()> {
    let ids_match = states.states.len() == corpus.len()
        && states
            .states
            .iter()
            .zip(&corpus.windows)
            .all(|(s, w)| s.window_id == w.window.window_id);
    if ids_match {
        Ok(())
    } else {
        Err(input_error(format!(
            "states ({} windows) do not match corpus ({} windows)",
            states.states.len(),
            corpus.len()
        )))
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Synth { config: c, out } => {
            let cfg = config(c.as_deref(), seed)?;
            let dir = out_path(out, &cfg.out_dir, "synth");
            let tel = generate(&cfg.scenario())?;
            telemetry::write_metrics(create(&dir.join("metrics.csv"))?, &tel.metrics)?;
            telemetry::write_traces(create(&dir.join("traces.jsonl"))?, &tel.spans)?;
            telemetry::write_logs(create(&dir.join("logs.jsonl"))?, &tel.logs)?;
            telemetry::write_fault_labels(create(&dir.join("labels.jsonl"))?, &tel.faults)?;
            telemetry::write_regimes(create(&dir.join("regimes.jsonl"))?, &tel.regimes)?;
            println!(
                "synth: {} metrics, {} spans, {} logs, {} faults -> {}",
                tel.metrics.len(),
                tel.spans.len(),
                tel.logs.len(),
                tel.faults.len(),
                dir.display()
            );
        }
        Command::Ingest {
            metrics,
            traces,
            logs,
            labels,
            regimes,
            config: c,
            out,
        } => {
            let cfg = config(c.as_deref(), seed)?;
            let (len, stride) = cfg.windowing()?;
            let metrics = telemetry::parse_metrics(open(&metrics)?)?;
            let spans = telemetry::parse_traces(open(&traces)?)?;
            let logs = telemetry::parse_logs(open(&logs)?)?;
            let source = LabelSource {
                faults: labels.map(|p| open(&p).map(telemetry::parse_fault_labels)).transpose()?.transpose()?,
                regimes: regimes.map(|p| open(&p).map(telemetry::parse_regimes)).transpose()?.transpose()?,
            };
            let corpus = build_windows(metrics, spans, logs, len, stride, &source)?;
            let path = out_path(out, &cfg.out_dir, "corpus.json");
            save(&path, &corpus)?;
            println!("ingest: {} windows -> {}", corpus.len(), path.display());
        }
        Command::Embed { corpus, config: c, out } => {
            let cfg = config(c.as_deref(), seed)?;
            let corpus: Corpus = load(&corpus)?;
            let set = pipeline::embed(&corpus, &cfg)?;
            let path = out_path(out, &cfg.out_dir, "embeddings.json");
            save(&path, &set)?;
            println!("embed: {} windows, dim {} -> {}", set.windows.len(), set.dim, path.display());
        }
        Command::Train { embeddings, config: c, out } => {
            let cfg = config(c.as_deref(), seed)?;
            let set: EmbeddingSet = load(&embeddings)?;
            let model = pipeline::train_model(&set, &cfg, |e| {
                println!(
                    "epoch {:>3} total {:.6} modal {:.6} temporal {:.6} anomaly {:.6}",
                    e.epoch, e.mean.total, e.mean.modal, e.mean.temporal, e.mean.anomaly
                );
            })?;
            let path = out_path(out, &cfg.out_dir, "fusion.json");
            save(&path, &model)?;
            println!("train: {} epochs -> {}", model.trace.len(), path.display());
        }
        Command::Fuse { embeddings, model, out } => {
            let set: EmbeddingSet = load(&embeddings)?;
            let model: FusionModel = load(&model)?;
            let states = pipeline::fuse_states(&set, &model)?;
            let path = out.unwrap_or_else(|| PathBuf::from("states.json"));
            save(&path, &states)?;
            println!("fuse: {} states -> {}", states.states.len(), path.display());
        }
        Command::Partition { states, config: c, out } => {
            let cfg = config(c.as_deref(), seed)?;
            let states: StateSet = load(&states)?;
            let part = pipeline::partition_states(&states.states, &cfg)?;
            let path = out_path(out, &cfg.out_dir, "partition.json");
            save(&path, &part)?;
            let diag: Vec<String> = part
                .diagnostics
                .iter()
                .map(|d| match d.silhouette {
                    Some(s) => format!("k={} silhouette={s:.4}", d.k),
                    None => format!("k={} silhouette=n/a", d.k),
                })
                .collect();
            println!("partition: K={} ({}) -> {}", part.k, diag.join(", "), path.display());
        }
        Command::Tune {
            task,
            states,
            partition,
            corpus,
            config: c,
            out,
        } => {
            let cfg = config(c.as_deref(), seed)?;
            let states: StateSet = load(&states)?;
            let partition: StatePartition = load(&partition)?;
            let corpus: Corpus = load(&corpus)?;
            check_aligned(&states, &corpus)?;
            let n_train = train_count(states.states.len(), cfg.train_fraction);
            let tc = cfg.task_config();
            let train = &states.states[..n_train];
            let models = match task {
                Task::Ad => TaskModels::Ad(tune_anomaly(&partition, train, &tc)?),
                Task::Cls => TaskModels::Cls(tune_classifier(&partition, train, &tc)?),
                Task::Loc => {
                    let backbone = Backbone::from_config(&states.backbone)?;
                    let idx: Vec<usize> = (0..n_train).collect();
                    TaskModels::Loc(tune_localizer(
                        &partition,
                        &corpus,
                        &states.states,
                        &idx,
                        &backbone,
                        &states.model.params,
                        &tc,
                    )?)
                }
            };
            let bundle = TaskBundle {
                partition,
                train_windows: n_train,
                models,
            };
            let path = out_path(out, &cfg.out_dir, "bundle.json");
            save(&path, &bundle)?;
            println!("tune: {} on {n_train} windows -> {}", task_name(task), path.display());
        }
        Command::Eval {
            task,
            bundle,
            states,
            corpus,
            truth,
            out,
        } => {
            let bundle: TaskBundle = load(&bundle)?;
            let states: StateSet = load(&states)?;
            let corpus: Corpus = load(&corpus)?;
            check_aligned(&states, &corpus)?;
            let faults = telemetry::parse_fault_labels(open(&truth)?)?;
            let truth: Vec<WindowLabel> = pipeline::truth_labels(&corpus, &faults);
            let n = states.states.len();
            if bundle.train_windows >= n {
                return Err(input_error("bundle leaves no held-out windows".into()));
            }
            let test = bundle.train_windows..n;
            let p = &bundle.partition;
            let report = match (&bundle.models, task) {
                (TaskModels::Ad(m), Task::Ad) => pipeline::evaluate_anomaly(m, p, &states.states, &truth, test)?,
                (TaskModels::Cls(m), Task::Cls) => {
                    pipeline::evaluate_classification(m, p, &states.states, &truth, test)?
                }
                (TaskModels::Loc(m), Task::Loc) => {
                    let backbone = Backbone::from_config(&states.backbone)?;
                    pipeline::evaluate_localization(m, p, &corpus, &backbone, &states.model.params, &truth, test)?
                }
                _ => {
                    return Err(input_error(format!(
                        "bundle was tuned for a different task than {}",
                        task_name(task)
                    )))
                }
            };
            let json = serde_json::to_string(&report).map_err(|e| input_error(e.to_string()))?;
            let path = out.unwrap_or_else(|| PathBuf::from("report.json"));
            let mut w = create(&path)?;
            writeln!(w, "{json}").map_err(|e| input_error(e.to_string()))?;
            w.flush().map_err(|e| input_error(e.to_string()))?;
            println!("{}", report.table_row());
            println!("{json}");
        }
        Command::Project {
            states,
            partition,
            config: c,
            out,
        } => {
            let states: StateSet = load(&states)?;
            let partition: StatePartition = match partition {
                Some(p) => load(&p)?,
                None => pipeline::partition_states(&states.states, &config(c.as_deref(), seed)?)?,
            };
            let vectors: Vec<Vec<f64>> = states.states.iter().map(|s| s.vector.clone()).collect();
            let proj = project_2d(&vectors)?;
            let path = out.unwrap_or_else(|| PathBuf::from("points.csv"));
            let mut w = create(&path)?;
            let io = |e: std::io::Error| input_error(e.to_string());
            writeln!(w, "x,y,window_id,label,cluster").map_err(io)?;
            for (s, (x, y)) in states.states.iter().zip(&proj.points) {
                let cluster = assign(&partition, &s.vector)?;
                writeln!(w, "{x},{y},{},{},{cluster}", s.window_id, point_label(s.label.as_ref())).map_err(io)?;
            }
            w.flush().map_err(io)?;
            println!(
                "project: {} points, explained {:.4}/{:.4} -> {}",
                proj.points.len(),
                proj.explained.0,
                proj.explained.1,
                path.display()
            );
        }
    }
    Ok(())
}

fn task_name(task: Task) -> &'static str {
    match task {
        Task::Ad => "ad",
        Task::Loc => "loc",
        Task::Cls => "cls",
    }
}

/// Failure type for anomalous windows, otherwise the regime when known.
fn point_label(label: Option<&WindowLabel>) -> String {
    match label {
        None => String::new(),
        Some(l) if l.anomalous => l.failure_type.clone().unwrap_or_else(|| "anomalous".into()),
        Some(l) => l.regime_id.map_or_else(|| "normal".into(), |r| format!("regime-{r}")),
    }
}
