use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use super::{
    emit_csv, emit_report, failed_record, score_sample, CellKey, ContextSize, EvalRecord,
    EvalReport, HarnessError, OfflineModel, RunConfig,
};
use crate::client::{
    Model, ModelCall, OpenAiClient, OracleModel, Recorder, ReplayModel, TranscriptStore,
};
use crate::prompt::{Method, PromptKit, PromptOrder, RenderedPrompt, Templates};
use crate::retriever::{Bm25, Retriever};
use crate::world::{derive_seed, generate_sample, load_samples, GenSpec, TaskId, TaskSample};

pub type SampleSets = BTreeMap<(TaskId, ContextSize), Vec<TaskSample>>;

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub records: Vec<EvalRecord>,
    pub report: EvalReport,
}

/// Applies `f` to every item on `workers` threads; output keeps input order.
fn parallel_map<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let next = AtomicUsize::new(0);
    let done: Mutex<Vec<(usize, R)>> = Mutex::new(Vec::with_capacity(items.len()));
    std::thread::scope(|scope| {
        for _ in 0..workers.clamp(1, items.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(i) else { break };
                let r = f(item);
                done.lock().unwrap_or_else(|e| e.into_inner()).push((i, r));
            });
        }
    });
    let mut done = done.into_inner().unwrap_or_else(|e| e.into_inner());
    done.sort_by_key(|(i, _)| *i);
    done.into_iter().map(|(_, r)| r).collect()
}

fn task_code(task: TaskId) -> u64 {
    match task {
        TaskId::Qa2 => 2,
        TaskId::Qa7 => 7,
        TaskId::Qa10 => 10,
    }
}

/// One sample set per (task, size), shared by every method and order.
pub fn prepare_samples(config: &RunConfig) -> Result<SampleSets, HarnessError> {
    let n = config.samples_per_cell;
    let mut sets = SampleSets::new();
    if let Some(dir) = &config.data_dir {
        for &task in &config.tasks {
            for &size in &config.context_sizes {
                let path = dir.join(format!("{task}_{size}.jsonl"));
                let mut samples = load_samples(&path, task)?;
                if samples.len() < n {
                    return Err(HarnessError::Config(format!(
                        "{} holds {} {task} samples, {n} needed",
                        path.display(),
                        samples.len()
                    )));
                }
                samples.truncate(n);
                sets.insert((task, size), samples);
            }
        }
        return Ok(sets);
    }
    let mut specs = Vec::new();
    for &task in &config.tasks {
        for &size in &config.context_sizes {
            let cell_seed = derive_seed(derive_seed(config.seed, task_code(task)), size.0 as u64);
            for i in 0..n {
                let mut spec = GenSpec::new(task, size.0, derive_seed(cell_seed, i as u64));
                spec.distractors = config.distractors.clone();
                specs.push(spec);
            }
        }
    }
    let workers = std::thread::available_parallelism().map_or(4, |n| n.get());
    let generated = parallel_map(&specs, workers, generate_sample);
    for (spec, sample) in specs.iter().zip(generated) {
        sets.entry((spec.task, ContextSize(spec.target_tokens)))
            .or_default()
            .push(sample?);
    }
    Ok(sets)
}

struct Job<'a> {
    key: CellKey,
    order: Option<PromptOrder>,
    index: usize,
    sample: &'a TaskSample,
}

fn build_prompt(
    kit: &PromptKit,
    config: &RunConfig,
    job: &Job<'_>,
) -> Result<RenderedPrompt, String> {
    let s = job.sample;
    let prompt = match (job.key.method, job.order) {
        (Method::Baseline, _) => kit.build_baseline(&s.input, &s.question),
        (Method::NaiveRag, _) => {
            let hits = Bm25::default()
                .retrieve(&s.input, &s.question, config.top_k)
                .map_err(|e| e.to_string())?;
            let snippets: Vec<&str> = hits.iter().map(|h| h.text.as_str()).collect();
            kit.build_rag(&snippets, &s.question)
        }
        (Method::Proposed, order) => kit.build_emulated_rag(
            &s.input,
            &s.question,
            order.unwrap_or(PromptOrder::Standard),
            config.include_example_tags,
        ),
    };
    prompt.map_err(|e| e.to_string())
}

pub fn prompt_kit(config: &RunConfig) -> Result<PromptKit, HarnessError> {
    let templates = match &config.templates {
        Some(path) => Templates::load(path)?,
        None => Templates::default(),
    };
    let kit = PromptKit::new(templates);
    Ok(if config.system_message {
        kit
    } else {
        kit.without_system_message()
    })
}

/// Scores every (task, size, method, order, sample) combination. Model
/// failures become flagged incorrect records; the output order never
/// depends on completion timing.
pub fn run_matrix(
    config: &RunConfig,
    samples: &SampleSets,
    model: &dyn Model,
) -> Result<RunOutcome, HarnessError> {
    let kit = prompt_kit(config)?;
    let mut jobs = Vec::new();
    for &task in &config.tasks {
        for &context_size in &config.context_sizes {
            let set = samples.get(&(task, context_size)).ok_or_else(|| {
                HarnessError::Config(format!("no samples for {task} at {context_size}"))
            })?;
            for &method in &config.methods {
                let key = CellKey {
                    task,
                    context_size,
                    method,
                };
                for order in config.orders_for(method) {
                    for (index, sample) in set.iter().enumerate().take(config.samples_per_cell) {
                        jobs.push(Job {
                            key,
                            order,
                            index,
                            sample,
                        });
                    }
                }
            }
        }
    }
    let records = parallel_map(&jobs, config.concurrency, |job| {
        let prompt = match build_prompt(&kit, config, job) {
            Ok(p) => p,
            Err(e) => return failed_record(job.key, job.order, job.index, job.sample, e),
        };
        let call = ModelCall {
            prompt: &prompt,
            params: config.params.for_method(job.key.method),
            sample: job.sample,
        };
        let started = Instant::now();
        let result = model.complete(&call);
        let latency_ms = started.elapsed().as_millis() as u64;
        let mut record = match result {
            Ok(text) => score_sample(job.key, job.order, job.index, job.sample, &text),
            Err(e) => failed_record(job.key, job.order, job.index, job.sample, e.to_string()),
        };
        record.latency_ms = latency_ms;
        record
    });
    let report = EvalReport::from_records(&records);
    Ok(RunOutcome { records, report })
}

pub fn build_model(config: &RunConfig) -> Result<Box<dyn Model>, HarnessError> {
    Ok(match &config.offline {
        Some(OfflineModel::Oracle) => Box::new(OracleModel),
        Some(OfflineModel::Replay(path)) => Box::new(ReplayModel::new(TranscriptStore::load(path)?)),
        None => Box::new(OpenAiClient::new(config.endpoint.clone().with_env_overrides())?),
    })
}

/// A complete run: writes `config.resolved`, `transcripts.log`,
/// `records.csv`, `records.jsonl` and the report files into `config.out`.
pub fn run_to_dir(config: &RunConfig) -> Result<RunOutcome, HarnessError> {
    let mut config = config.clone();
    if config.offline.is_none() {
        config.endpoint = config.endpoint.with_env_overrides();
    }
    config.normalize()?;
    let out = config.out.clone();
    fs::create_dir_all(&out)?;
    fs::write(out.join("config.resolved"), config.to_toml())?;
    let model = build_model(&config)?;
    let samples = prepare_samples(&config)?;
    let store = TranscriptStore::open(&out.join("transcripts.log"))?;
    let recorder = Recorder::new(model.as_ref(), &store);
    let outcome = run_matrix(&config, &samples, &recorder)?;
    emit_csv(&outcome.records, &out.join("records.csv"))?;
    write_jsonl(&outcome.records, &out.join("records.jsonl"))?;
    emit_report(&outcome.report, &out)?;
    Ok(outcome)
}

fn write_jsonl(records: &[EvalRecord], path: &Path) -> Result<(), HarnessError> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(std::io::Error::other)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
