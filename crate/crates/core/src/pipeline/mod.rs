//! Three-stage orchestration: forward translation to English, per-task
//! generation, reverse translation to the source language.
//!
//! English records bypass both translation stages. Reverse translation is
//! sentence-level; key-value summaries are translated key by key and value by
//! value and then re-serialized. Corpus runs checkpoint each completed record
//! and skip checkpointed ids on restart.

mod config;
mod segment;

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{BackendClient, BackendError, DecodingPolicy};
use crate::corpus::{
    append_result, load_corpus, write_results, CorpusError, DialogueRecord, Diagnostic, LanguageCode,
    PipelineResult, ResultsError, Stage, StageTrace, TaskKind, TaskOutput, TraceStatus,
};
use crate::postprocess::{clean_artifacts, parse_knv, strip_discourse_markers};
use crate::preprocess::{
    apply_language_tag, approx_token_count, normalize_text, render_dialogue, truncate_text, truncate_to_budget,
};
use crate::prompts::{TemplateError, TemplateSet};

pub use crate::sentences::sentence_split;
pub use config::{ConfigError, ConfigFile, EndpointSection, EndpointsSection, PipelineConfig, RetrySection, MOCK_URL};
use segment::SegmentPlan;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Templates(#[from] TemplateError),
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("checkpoint: {0}")]
    Checkpoint(ResultsError),
    #[error("output: {0}")]
    Output(ResultsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RunSummary {
    pub total: usize,
    pub processed: usize,
    pub skipped: usize,
    pub failed: usize,
    /// The run stopped early; no final output file was written.
    pub interrupted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Stop dispatching new records once this many have completed in this
    /// invocation, leaving the run as a crash would (checkpoint only).
    pub stop_after: Option<usize>,
}

pub struct Pipeline {
    config: PipelineConfig,
    templates: TemplateSet,
    forward: BackendClient,
    reverse: BackendClient,
    generator: BackendClient,
}

fn client(endpoint: &crate::client::BackendEndpoint, config: &PipelineConfig) -> BackendClient {
    BackendClient::new(endpoint.clone())
        .with_backoff(config.backoff)
        .with_language_codes(config.tags.codes.clone())
}

struct Forwarded {
    dialogue: String,
    questions: Vec<String>,
}

/// Mutable state for one record run.
struct RecordRun {
    diagnostics: Vec<Diagnostic>,
    traces: Vec<StageTrace>,
    truncated: bool,
}

impl RecordRun {
    fn diag(&mut self, stage: Stage, code: &str, message: impl Into<String>) {
        self.diagnostics.push(Diagnostic::new(stage, code, message));
    }

    fn trace(&mut self, stage: Stage, task: Option<TaskKind>, status: TraceStatus, started: Instant) -> &mut StageTrace {
        self.traces.push(StageTrace {
            stage,
            task,
            status,
            items: 0,
            input_chars: 0,
            output_chars: 0,
            truncated: false,
            duration: started.elapsed(),
        });
        self.traces.last_mut().expect("just pushed")
    }
}

fn chars(texts: &[String]) -> usize {
    texts.iter().map(|t| t.chars().count()).sum()
}

fn single_line(text: &str) -> String {
    normalize_text(text).split('\n').filter(|l| !l.is_empty()).collect::<Vec<_>>().join(" ")
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let templates = match &config.template_path {
            Some(path) => TemplateSet::load(path)?,
            None => TemplateSet::default(),
        };
        Ok(Self {
            forward: client(&config.translate_fwd, &config),
            reverse: client(&config.translate_rev, &config),
            generator: client(&config.generate, &config),
            templates,
            config,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    fn translation_policy(&self) -> DecodingPolicy {
        DecodingPolicy::greedy(self.config.budgets.translation_output_max)
    }

    fn tagged(&self, texts: &[String], src: LanguageCode, tgt: LanguageCode) -> Vec<String> {
        texts
            .iter()
            .map(|t| apply_language_tag(t, src, tgt, &self.config.tags).expect("bypass handles src == tgt"))
            .collect()
    }

    fn forward_stage(&self, record: &DialogueRecord, run: &mut RecordRun) -> Result<Forwarded, BackendError> {
        let started = Instant::now();
        let rendered = render_dialogue(record);
        let questions: Vec<String> = record.questions.iter().map(|q| single_line(q)).collect();
        if record.lang == LanguageCode::En {
            let t = run.trace(Stage::ForwardTranslate, None, TraceStatus::Bypass, started);
            t.input_chars = rendered.text.chars().count() + chars(&questions);
            t.output_chars = t.input_chars;
            return Ok(Forwarded {
                dialogue: rendered.text,
                questions,
            });
        }

        let budget = self.config.budgets.translation_input_max;
        let cut = truncate_to_budget(&rendered, budget, self.config.truncate_keep);
        if cut.truncated {
            run.truncated = true;
            run.diag(
                Stage::ForwardTranslate,
                "truncated",
                format!(
                    "dialogue of {} approx tokens cut to {} (kept {} of {} turns)",
                    rendered.approx_tokens, cut.rendered.approx_tokens, cut.kept_turns, cut.original_turns
                ),
            );
        }
        if cut.turn_split {
            run.diag(Stage::ForwardTranslate, "turn_split", "a single turn exceeded the budget and was cut mid-text");
        }
        let mut payloads = vec![cut.rendered.text];
        for (i, q) in questions.iter().enumerate() {
            if approx_token_count(q) > budget {
                run.truncated = true;
                run.diag(Stage::ForwardTranslate, "question_truncated", format!("question {} cut to the budget", i + 1));
                payloads.push(truncate_text(q, budget));
            } else {
                payloads.push(q.clone());
            }
        }
        let items = self.tagged(&payloads, record.lang, LanguageCode::En);
        let outcome = self
            .forward
            .translate(&items, record.lang, LanguageCode::En, self.translation_policy());
        let status = if outcome.is_ok() { TraceStatus::Ok } else { TraceStatus::Failed };
        let truncated = run.truncated;
        let t = run.trace(Stage::ForwardTranslate, None, status, started);
        t.items = items.len();
        t.input_chars = chars(&payloads);
        t.truncated = truncated;
        let mut translated = outcome?;
        t.output_chars = chars(&translated);
        let dialogue = normalize_text(&translated.remove(0));
        let questions = translated.iter().map(|q| single_line(q)).collect();
        Ok(Forwarded { dialogue, questions })
    }

    fn generate_task(
        &self,
        record: &DialogueRecord,
        task: TaskKind,
        forwarded: &Forwarded,
        run: &mut RecordRun,
    ) -> Option<String> {
        let started = Instant::now();
        let questions: Vec<Option<&str>> = if task == TaskKind::Qna {
            forwarded.questions.iter().map(|q| Some(q.as_str())).collect()
        } else {
            vec![None]
        };
        let policy = DecodingPolicy::greedy(self.config.budgets.generation_output_max);
        let mut prompt_chars = 0;
        let mut completions = Vec::with_capacity(questions.len());
        let mut failure = None;
        for question in &questions {
            let prompt = match self.templates.build_prompt(task, &forwarded.dialogue, *question, &record.id) {
                Ok(p) => p,
                Err(e) => {
                    failure = Some(("prompt_error", e.to_string()));
                    break;
                }
            };
            prompt_chars += prompt.chars().count();
            match self.generator.generate(&prompt, policy) {
                Ok(text) => completions.push(text),
                Err(e) => {
                    failure = Some(("backend_error", e.to_string()));
                    break;
                }
            }
        }
        let status = if failure.is_some() { TraceStatus::Failed } else { TraceStatus::Ok };
        let t = run.trace(Stage::Generate, Some(task), status, started);
        t.items = questions.len();
        t.input_chars = prompt_chars;
        t.output_chars = chars(&completions);
        if let Some((code, message)) = failure {
            run.diag(Stage::Generate, code, format!("{task}: {message}"));
            return None;
        }
        if completions.iter().any(|c| c.trim().is_empty()) {
            run.diag(Stage::Generate, "empty_generation", format!("{task}: backend returned an empty completion"));
        }
        Some(completions.join("\n\n"))
    }

    fn reverse_stage(
        &self,
        lang: LanguageCode,
        english: &[(TaskKind, String)],
        run: &mut RecordRun,
    ) -> Result<Vec<String>, BackendError> {
        let started = Instant::now();
        let rules = &self.config.artifacts;
        if lang == LanguageCode::En {
            let finals: Vec<String> = english.iter().map(|(_, text)| clean_artifacts(text, lang, rules)).collect();
            let t = run.trace(Stage::ReverseTranslate, None, TraceStatus::Bypass, started);
            t.input_chars = english.iter().map(|(_, e)| e.chars().count()).sum();
            t.output_chars = chars(&finals);
            return Ok(finals);
        }
        let mut items = Vec::new();
        let plans: Vec<SegmentPlan> = english
            .iter()
            .map(|(task, text)| {
                let cleaned = strip_discourse_markers(text, rules);
                match task {
                    TaskKind::SummaryKnv => SegmentPlan::for_knv(&cleaned, &mut items),
                    _ => SegmentPlan::for_text(&cleaned, &mut items),
                }
            })
            .collect();
        let outcome = if items.is_empty() {
            Ok(Vec::new())
        } else {
            let tagged = self.tagged(&items, LanguageCode::En, lang);
            self.reverse.translate(&tagged, LanguageCode::En, lang, self.translation_policy())
        };
        let status = if outcome.is_ok() { TraceStatus::Ok } else { TraceStatus::Failed };
        let t = run.trace(Stage::ReverseTranslate, None, status, started);
        t.items = items.len();
        t.input_chars = chars(&items);
        let translated: Vec<String> = outcome?.iter().map(|s| single_line(s)).collect();
        t.output_chars = chars(&translated);
        Ok(plans
            .iter()
            .map(|plan| clean_artifacts(&plan.render(&translated), lang, rules))
            .collect())
    }

    /// Runs all stages for one record. Backend failures never escape: they
    /// become diagnostics and leave the affected tasks without output.
    pub fn run_record(&self, record: &DialogueRecord) -> PipelineResult {
        let mut run = RecordRun {
            diagnostics: record.warnings(),
            traces: Vec::new(),
            truncated: false,
        };
        let tasks = record.ordered_tasks();
        let mut outputs = std::collections::BTreeMap::new();

        let forwarded = match self.forward_stage(record, &mut run) {
            Ok(f) => f,
            Err(e) => {
                run.diag(Stage::ForwardTranslate, "backend_error", e.to_string());
                for task in &tasks {
                    run.trace(Stage::Generate, Some(*task), TraceStatus::Skipped, Instant::now());
                    run.diag(Stage::Generate, "task_skipped", format!("{task}: forward translation failed"));
                }
                run.trace(Stage::ReverseTranslate, None, TraceStatus::Skipped, Instant::now());
                return self.finish(record, outputs, run);
            }
        };

        let mut english: Vec<(TaskKind, String)> = Vec::new();
        for task in &tasks {
            if let Some(text) = self.generate_task(record, *task, &forwarded, &mut run) {
                if *task == TaskKind::SummaryKnv {
                    for d in parse_knv(&text).diagnostics {
                        run.diag(
                            Stage::Generate,
                            &format!("knv_{}", d.code.as_str()),
                            format!("line {}: {}", d.line_no, d.raw_line),
                        );
                    }
                }
                english.push((*task, text));
            }
        }

        match self.reverse_stage(record.lang, &english, &mut run) {
            Ok(finals) => {
                for ((task, text), final_text) in english.into_iter().zip(finals) {
                    outputs.insert(
                        task,
                        TaskOutput {
                            english_intermediate: text,
                            final_text: Some(final_text),
                        },
                    );
                }
            }
            Err(e) => {
                run.diag(Stage::ReverseTranslate, "backend_error", e.to_string());
                for (task, text) in english {
                    run.diag(Stage::ReverseTranslate, "no_final", format!("{task}: reverse translation failed"));
                    outputs.insert(
                        task,
                        TaskOutput {
                            english_intermediate: text,
                            final_text: None,
                        },
                    );
                }
            }
        }
        self.finish(record, outputs, run)
    }

    fn finish(
        &self,
        record: &DialogueRecord,
        outputs: std::collections::BTreeMap<TaskKind, TaskOutput>,
        run: RecordRun,
    ) -> PipelineResult {
        PipelineResult {
            id: record.id.clone(),
            lang: record.lang,
            outputs,
            diagnostics: run.diagnostics,
            truncated: run.truncated,
            traces: run.traces,
        }
    }

    /// Loads `corpus` and runs it, writing ordered results to `out`.
    pub fn run_corpus(&self, corpus: impl AsRef<Path>, out: impl AsRef<Path>) -> Result<RunSummary, RunError> {
        let records = load_corpus(corpus)?;
        self.run_records(&records, out.as_ref(), RunOptions::default())
    }

    pub fn run_records(
        &self,
        records: &[DialogueRecord],
        out: &Path,
        options: RunOptions,
    ) -> Result<RunSummary, RunError> {
        let checkpoint = self.config.checkpoint_for(out);
        let mut done = checkpoint::load(&checkpoint).map_err(RunError::Checkpoint)?;
        let mut slots: Vec<Option<PipelineResult>> = records.iter().map(|r| done.remove(&r.id)).collect();
        let pending: Vec<usize> = (0..records.len()).filter(|&i| slots[i].is_none()).collect();
        let skipped = records.len() - pending.len();
        log::info!(
            "{} records: {} already checkpointed, {} to run with parallelism {}",
            records.len(),
            skipped,
            pending.len(),
            self.config.parallelism
        );

        let next = AtomicUsize::new(0);
        let completed = AtomicUsize::new(0);
        let failed = AtomicUsize::new(0);
        let finished: Mutex<Vec<(usize, PipelineResult)>> = Mutex::new(Vec::new());
        let append_lock = Mutex::new(());
        let write_error: Mutex<Option<ResultsError>> = Mutex::new(None);
        let workers = self.config.parallelism.min(pending.len()).max(1);
        let should_stop = || {
            write_error.lock().expect("poisoned").is_some()
                || options.stop_after.is_some_and(|n| completed.load(Ordering::SeqCst) >= n)
        };

        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    if should_stop() {
                        break;
                    }
                    let k = next.fetch_add(1, Ordering::SeqCst);
                    let Some(&idx) = pending.get(k) else { break };
                    let record = &records[idx];
                    let result = self.run_record(record);
                    if result.is_failed(&record.ordered_tasks()) {
                        // failed records are not checkpointed so a rerun retries them
                        failed.fetch_add(1, Ordering::SeqCst);
                    } else {
                        let _guard = append_lock.lock().expect("poisoned");
                        if let Err(e) = append_result(&checkpoint, &result) {
                            *write_error.lock().expect("poisoned") = Some(e);
                        }
                    }
                    log::debug!("record {} done", record.id);
                    finished.lock().expect("poisoned").push((idx, result));
                    completed.fetch_add(1, Ordering::SeqCst);
                });
            }
        });

        if let Some(e) = write_error.into_inner().expect("poisoned") {
            return Err(RunError::Checkpoint(e));
        }
        let finished = finished.into_inner().expect("poisoned");
        let mut summary = RunSummary {
            total: records.len(),
            processed: finished.len(),
            skipped,
            failed: failed.load(Ordering::SeqCst),
            interrupted: false,
        };
        for (idx, result) in finished {
            slots[idx] = Some(result);
        }
        if slots.iter().any(Option::is_none) {
            summary.interrupted = true;
            return Ok(summary);
        }
        let ordered: Vec<PipelineResult> = slots.into_iter().flatten().collect();
        write_results(out, &ordered).map_err(RunError::Output)?;
        Ok(summary)
    }
}

mod checkpoint {
    use std::collections::HashMap;
    use std::io::Write;
    use std::path::Path;

    use crate::corpus::{PipelineResult, ResultsError};

    /// Reads completed results keyed by id. A torn final line (from a crash
    /// mid-append) is dropped and the file rewritten without it.
    pub(super) fn load(path: &Path) -> Result<HashMap<String, PipelineResult>, ResultsError> {
        let io_err = |source| ResultsError::Io {
            path: path.to_path_buf(),
            source,
        };
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(HashMap::new()),
            Err(e) => return Err(io_err(e)),
        };
        let lines: Vec<&str> = text.split('\n').collect();
        let mut results = HashMap::new();
        let mut valid = Vec::new();
        let mut torn = false;
        for (idx, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<PipelineResult>(line) {
                Ok(result) => {
                    valid.push(*line);
                    results.entry(result.id.clone()).or_insert(result);
                }
                Err(_) if idx + 1 == lines.len() => torn = true,
                Err(e) => {
                    return Err(ResultsError::Parse {
                        path: path.to_path_buf(),
                        line: idx + 1,
                        message: e.to_string(),
                    })
                }
            }
        }
        if torn {
            log::warn!("{}: dropping torn final line", path.display());
            let tmp = path.with_extension("tmp");
            let mut file = std::fs::File::create(&tmp).map_err(io_err)?;
            for line in valid {
                writeln!(file, "{line}").map_err(io_err)?;
            }
            file.flush().map_err(io_err)?;
            std::fs::rename(&tmp, path).map_err(io_err)?;
        }
        Ok(results)
    }
}

/// Looks up record ids in a loaded result set.
pub fn index_results(results: &[PipelineResult]) -> HashMap<&str, &PipelineResult> {
    results.iter().map(|r| (r.id.as_str(), r)).collect()
}
