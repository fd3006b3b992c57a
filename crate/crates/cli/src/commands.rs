use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use walkguide_core::annotation::{load_samples, parse_annotation, serialize_annotation, write_detections, write_samples};
use walkguide_core::domain::TriggerState;
use walkguide_core::engine::{read_frame, read_manifest, run_stream, write_frame_dir, EventBody, EventLog, StreamPaths};
use walkguide_core::error::{BackendError, EngineError};
use walkguide_core::hplanner::{build_backend, render_structured_response, BackendKind, HierarchicalResponse, MockTable};
use walkguide_core::metrics::{evaluate_text, gpt_score, trf_f1, EvalPair, F1Average, JudgeSample};
use walkguide_core::synth::{brightness_dataset, synthetic_stream};
use walkguide_core::tap::{
    accuracy, evaluate, grad_check, load_model, preprocess_frames, save_model, tap_train, FrameStore, TapModel,
};

use crate::config::CliConfig;
use crate::{AnnotateCommand, AverageChoice, BackendArgs, BackendChoice, Command, EvalCommand, RunArgs, SynthCommand, TapCommand};

/// Every backend request failed, so the results carry no information.
#[derive(Debug, thiserror::Error)]
#[error("all {0} backend requests failed")]
pub struct BackendFatal(usize);

/// 2 for failures of the external backend, 1 for everything else.
/// A misconfigured backend is a validation error.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    let fatal = |b: &BackendError| !matches!(b, BackendError::Config(_));
    let backend = err.chain().any(|e| {
        e.is::<BackendFatal>()
            || e.downcast_ref::<BackendError>().is_some_and(fatal)
            || matches!(e.downcast_ref::<EngineError>(), Some(EngineError::Backend(b)) if fatal(b))
    });
    if backend {
        2
    } else {
        1
    }
}

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run(args) => run(args),
        Command::Eval(cmd) => eval(cmd),
        Command::Tap(cmd) => tap(cmd),
        Command::Annotate(AnnotateCommand::Check { file }) => annotate_check(&file),
        Command::Synth(SynthCommand::Stream {
            out,
            count,
            fps,
            width,
            height,
            seed,
        }) => synth_stream(&out, count, fps, width, height, seed),
    }
}

fn apply_backend(config: &mut CliConfig, args: &BackendArgs) {
    if let Some(choice) = args.backend {
        config.engine.backend.kind = match choice {
            BackendChoice::Mock => BackendKind::Mock,
            BackendChoice::Http => BackendKind::Http,
        };
    }
    if let Some(path) = &args.mock_responses {
        config.engine.backend.mock_responses = Some(path.clone());
    }
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}:{}: malformed record", path.display(), i + 1)))
        .collect()
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(args: RunArgs) -> Result<()> {
    let mut config = CliConfig::load(args.config.as_deref())?;
    apply_backend(&mut config, &args.backend);
    config.validate()?;
    let paths = StreamPaths {
        frame_dir: args.frames,
        detections: args.detections,
        tap_model: args.tap_model,
        out: args.out,
    };
    let stdin = io::stdin();
    let mut lock = stdin.lock();
    let questions: Option<&mut dyn BufRead> = if args.interactive { Some(&mut lock) } else { None };
    let log = run_stream(&config.engine, &paths, questions)?;

    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &log.events {
        *counts.entry(e.kind()).or_insert(0) += 1;
    }
    for (kind, n) in &counts {
        println!("{kind}: {n}");
    }
    println!("log: {}", paths.out.display());
    for e in &log.events {
        if let EventBody::QaAnswered { question, answer } = &e.body {
            println!("[{} ms] Q: {question}\n[{} ms] A: {answer}", e.t, e.t);
        }
    }
    let failed = counts.get("BackendError").copied().unwrap_or(0);
    let answered: usize = ["ReminderEmitted", "ReminderSuppressed", "QaAnswered"]
        .iter()
        .map(|k| counts.get(k).copied().unwrap_or(0))
        .sum();
    if failed > 0 && answered == 0 {
        return Err(BackendFatal(failed).into());
    }
    Ok(())
}

fn read_levels(path: &Path) -> Result<Vec<TriggerState>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if text.trim_start().starts_with("{\"header\"") {
        let log = EventLog::from_jsonl(&text).map_err(|(line, msg)| anyhow::anyhow!("{}:{line}: {msg}", path.display()))?;
        return Ok(log
            .events
            .iter()
            .filter_map(|e| match e.body {
                EventBody::TapDecision { predicted, .. } => Some(predicted),
                _ => None,
            })
            .collect());
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| l.parse().with_context(|| format!("{}:{}: bad level", path.display(), i + 1)))
        .collect()
}

fn eval(cmd: EvalCommand) -> Result<()> {
    match cmd {
        EvalCommand::Text { pairs, out } => {
            let pairs: Vec<EvalPair> = read_jsonl(&pairs)?;
            let report = evaluate_text(&pairs)?;
            println!("pairs     {}", report.pairs.len());
            println!("rouge1_f1 {:.6}", report.rouge1_f1);
            println!("rouge2_f1 {:.6}", report.rouge2_f1);
            println!("rougeL_f1 {:.6}", report.rouge_l_f1);
            println!("tfidf     {:.6}", report.tfidf);
            if let Some(out) = out {
                write_json(&out, &report)?;
            }
            Ok(())
        }
        EvalCommand::Trf {
            pred,
            gt,
            average,
            config,
        } => {
            let config = CliConfig::load(config.as_deref())?;
            let average = match average {
                Some(AverageChoice::Macro) => F1Average::Macro,
                Some(AverageChoice::Micro) => F1Average::Micro,
                None => config.metrics.average,
            };
            let score = trf_f1(&read_levels(&pred)?, &read_levels(&gt)?, average)?;
            println!("trf_f1 {score:.6}");
            Ok(())
        }
        EvalCommand::Judge {
            samples,
            config,
            out,
            backend,
        } => {
            let mut config = CliConfig::load(config.as_deref())?;
            apply_backend(&mut config, &backend);
            config.engine.backend.validate()?;
            let samples: Vec<JudgeSample> = read_jsonl(&samples)?;
            let backend = build_backend(&config.engine.backend)?;
            let report = gpt_score(&samples, backend.as_ref(), &config.engine.prompt, config.engine.vlm_timeout_ms)?;
            let show = |r: Option<f64>| r.map_or("null".to_string(), |v| format!("{v:.6}"));
            println!("win_rate_a    {}", show(report.win_rate_a));
            println!("win_rate_b    {}", show(report.win_rate_b));
            println!("invalid_count {}", report.invalid_count);
            if let Some(out) = out {
                write_json(&out, &report)?;
            }
            let failed = report.comparisons.iter().filter(|c| c.error.is_some()).count();
            if failed == report.comparisons.len() {
                return Err(BackendFatal(failed).into());
            }
            Ok(())
        }
    }
}

fn load_store(dir: &Path, input_hw: usize, fps: f64) -> Result<FrameStore> {
    let mut store = FrameStore::new(input_hw);
    for entry in read_manifest(dir, fps)? {
        store.insert(&read_frame(dir, &entry)?);
    }
    Ok(store)
}

fn check_history(samples: &[walkguide_core::annotation::TapSample], n: usize, path: &Path) -> Result<()> {
    if let Some(s) = samples.iter().find(|s| s.frame_indices.len() != n || s.history_states.len() != n) {
        bail!(
            "{}: sample with {} frames does not match the model history of {n}",
            path.display(),
            s.frame_indices.len()
        );
    }
    Ok(())
}

fn tap(cmd: TapCommand) -> Result<()> {
    match cmd {
        TapCommand::Train {
            samples,
            frames,
            config,
            out,
            history,
            seed,
            epochs,
        } => {
            let mut config = CliConfig::load(config.as_deref())?;
            if let Some(seed) = seed {
                config.tap.seed = seed;
            }
            if let Some(epochs) = epochs {
                config.train.epochs = epochs;
            }
            config.validate()?;
            let sample_list = load_samples(&samples)?;
            check_history(&sample_list, config.tap.n_history, &samples)?;
            let store = load_store(&frames, config.tap.input_hw, config.engine.fps)?;
            let (model, report) = tap_train(&sample_list, &store, &config.tap, &config.train)?;
            save_model(&model, &out).with_context(|| format!("writing {}", out.display()))?;
            let history = history.unwrap_or_else(|| {
                let mut p = out.clone().into_os_string();
                p.push(".history.json");
                PathBuf::from(p)
            });
            write_json(&history, &report)?;
            let acc = accuracy(&model, &sample_list, &store)?;
            println!("epochs {}", report.loss_history.len());
            println!("final_loss {:.6}", report.loss_history.last().copied().unwrap_or(f64::NAN));
            println!("train_accuracy {acc:.6}");
            Ok(())
        }
        TapCommand::Gradcheck {
            config,
            seed,
            eps,
            tolerance,
        } => {
            let mut config = CliConfig::load(config.as_deref())?;
            if let Some(seed) = seed {
                config.tap.seed = seed;
            }
            config.tap.validate()?;
            let model = TapModel::new(&config.tap)?;
            let n = config.tap.n_history;
            let hw = config.tap.input_hw;
            let (samples, frames) = brightness_dataset(1, n, hw as u32, config.tap.seed, 0);
            let input = preprocess_frames(&frames, n, hw)?;
            let sample = &samples[0];
            let report = grad_check(&model, &input, &sample.history_states, sample.gt_state, eps)?;
            println!("parameters {}", report.parameters);
            println!("max_relative_error {:.3e}", report.max_relative_error);
            println!("worst {}[{}]", report.worst_tensor, report.worst_offset);
            if report.max_relative_error.is_nan() || report.max_relative_error >= tolerance {
                bail!("gradient check failed: {:.3e} >= {tolerance:.1e}", report.max_relative_error);
            }
            Ok(())
        }
        TapCommand::Eval { model, samples, frames } => {
            let model = load_model(&model).with_context(|| format!("loading model {}", model.display()))?;
            let sample_list = load_samples(&samples)?;
            check_history(&sample_list, model.config.n_history, &samples)?;
            let store = load_store(&frames, model.config.input_hw, 2.0)?;
            let predicted = evaluate(&model, &sample_list, &store)?;
            let gt: Vec<TriggerState> = sample_list.iter().map(|s| s.gt_state).collect();
            let hits = predicted.iter().zip(&gt).filter(|(p, g)| p == g).count();
            println!("samples {}", gt.len());
            println!("accuracy {:.6}", hits as f64 / gt.len() as f64);
            println!("trf_macro_f1 {:.6}", trf_f1(&predicted, &gt, F1Average::Macro)?);
            Ok(())
        }
        TapCommand::Synth {
            out,
            count,
            n_history,
            frame_size,
            seed,
            first_index,
        } => {
            if count == 0 || n_history == 0 || frame_size == 0 {
                bail!("count, n-history and frame-size must be positive");
            }
            let (samples, frames) = brightness_dataset(count, n_history, frame_size, seed, first_index);
            write_frame_dir(&out.join("frames"), &frames)?;
            write_samples(&out.join("samples.jsonl"), &samples)?;
            println!("samples {} frames {}", samples.len(), frames.len());
            Ok(())
        }
    }
}

fn annotate_check(path: &Path) -> Result<()> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let doc = parse_annotation(&text).with_context(|| format!("parsing {}", path.display()))?;
    let canonical = serialize_annotation(&doc);
    let again = parse_annotation(&canonical).context("re-parsing the canonical form")?;
    if again != doc || serialize_annotation(&again) != canonical {
        bail!("{}: serialization is not a fixpoint", path.display());
    }
    let counts: Vec<String> = doc.code_counts().iter().map(|(c, n)| format!("{c}:{n}")).collect();
    println!("events: {}", counts.join(" "));
    Ok(())
}

fn synth_stream(out: &Path, count: usize, fps: f64, width: u32, height: u32, seed: u64) -> Result<()> {
    if count == 0 || width == 0 || height == 0 || !(fps > 0.0) {
        bail!("count, width, height and fps must be positive");
    }
    let items = synthetic_stream(count, fps, width, height, seed);
    let frames: Vec<_> = items.iter().map(|i| i.frame.clone()).collect();
    write_frame_dir(&out.join("frames"), &frames)?;
    write_detections(&out.join("detections.jsonl"), items.iter().map(|i| &i.detections))?;
    let reply = render_structured_response(&HierarchicalResponse {
        location: "street".into(),
        weather: "sunny".into(),
        traffic: "medium".into(),
        scene: "A sidewalk with parked cars and a few pedestrians.".into(),
        instruction: "Keep walking straight, car at 2 o'clock.".into(),
    });
    let table = MockTable {
        fallback: Some(reply),
        ..MockTable::default()
    };
    write_json(&out.join("mock_responses.json"), &table)?;
    println!("frames {count} in {}", out.display());
    Ok(())
}
