use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};

use serde::{Deserialize, Serialize};

use super::config::{Arm, RunAssets, RunConfig};
use super::manifest::{
    ItemStatus, RunManifest, WorkItem, ASSESSMENTS_FILE, ASSUMPTIONS, RECORDS_FILE, REJECTS_FILE,
};
use super::records::{AssessmentEntry, RunRecord};
use crate::error::{Error, Result};
use crate::llm_gateway::{Gateway, COT_MAX_TOKENS, FEW_SHOT_MAX_TOKENS};
use crate::prompt_builder::build_prompt;
use crate::response_parser::parse_completion;
use crate::self_assessor::Assessor;
use crate::triple_store::{load_triples, sample_triples, write_rejects, Triple, TripleFormat};
use crate::verbalizer::{QuestionForm, VerbalizedQuestion};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub run_id: String,
    pub complete: bool,
    pub executed_items: usize,
    pub failed_items: usize,
}

/// Starts a new run in `config.out_dir` using the configured backend.
pub fn run_experiment(config: &RunConfig) -> Result<RunSummary> {
    let gateway = Arc::new(Gateway::from_spec(&config.backend)?);
    run_with_gateway(config, gateway)
}

/// Starts a new run in `config.out_dir` against an explicit gateway.
pub fn run_with_gateway(config: &RunConfig, gateway: Arc<Gateway>) -> Result<RunSummary> {
    config.validate()?;
    let dir = config.out_dir.clone();
    if dir.as_os_str().is_empty() {
        return Err(Error::Config("out_dir is required".into()));
    }
    if dir.join(super::manifest::MANIFEST_FILE).exists() {
        return Err(Error::Config(format!(
            "{} already holds a run; resume it or choose another directory",
            dir.display()
        )));
    }
    let assets = RunAssets::load(&config.assets)?;
    let loaded = load_triples(&config.triples, TripleFormat::from_path(&config.triples), &assets.templates)?;
    for reject in &loaded.rejects {
        tracing::warn!(line = reject.line, reason = %reject.reason, "rejected triple");
    }
    let sampled = sample_triples(&loaded.triples, &config.sample)?;
    let questions = verbalize_all(&sampled, &assets)?;

    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_rejects(&dir.join(REJECTS_FILE), &loaded.rejects)?;

    let asset_hashes = assets.hashes();
    let backend_id = gateway.backend_id();
    let run_id = derive_run_id(config, &asset_hashes, &sampled, &backend_id);
    let items = config
        .arms
        .iter()
        .flat_map(|&arm| {
            sampled.iter().flat_map(move |t| {
                QuestionForm::BOTH.into_iter().map(move |form| WorkItem {
                    arm,
                    triple_id: t.id.clone(),
                    form,
                    status: ItemStatus::Pending,
                    records: 0,
                    error: None,
                })
            })
        })
        .collect();
    let mut manifest = RunManifest {
        run_id: run_id.clone(),
        harness_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        asset_hashes,
        backend_id,
        assumptions: ASSUMPTIONS.iter().map(|s| s.to_string()).collect(),
        expected_answers_per_arm: sampled.len() * QuestionForm::BOTH.len() * config.responses_per_question as usize,
        sampled_triples: sampled,
        rejects: loaded.rejects,
        items,
        counts: Vec::new(),
        complete: false,
    };
    manifest.refresh(&[]);
    let records_path = dir.join(RECORDS_FILE);
    fs::write(&records_path, b"").map_err(|e| Error::io(&records_path, e))?;
    manifest.save(&dir)?;

    execute(&dir, &mut manifest, &assets, &questions, gateway)
}

/// Re-runs the work items of an existing run that are not complete, with the
/// backend recorded in its manifest.
pub fn resume_run(dir: &Path) -> Result<RunSummary> {
    let manifest = RunManifest::load(dir)?;
    let gateway = Arc::new(Gateway::from_spec(&manifest.config.backend)?);
    resume_with_gateway(dir, gateway)
}

pub fn resume_with_gateway(dir: &Path, gateway: Arc<Gateway>) -> Result<RunSummary> {
    let mut manifest = RunManifest::load(dir)?;
    let records = load_records(dir)?;
    manifest.verify_records(dir, &records)?;
    let assets = checked_assets(dir, &manifest)?;
    if manifest.incomplete_items() == 0 {
        return Ok(RunSummary {
            dir: dir.to_path_buf(),
            run_id: manifest.run_id,
            complete: true,
            executed_items: 0,
            failed_items: 0,
        });
    }
    if gateway.backend_id() != manifest.backend_id {
        tracing::warn!(
            recorded = %manifest.backend_id,
            current = %gateway.backend_id(),
            "resuming with a different backend"
        );
    }
    let questions = verbalize_all(&manifest.sampled_triples, &assets)?;
    execute(dir, &mut manifest, &assets, &questions, gateway)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReassessSummary {
    pub assessed: usize,
    pub kept: usize,
}

/// Runs the self-assessment filter again over the final answers of every
/// filtered arm and appends the verdicts to `assessments.jsonl`. Reports
/// use the most recent verdict for each answer.
pub fn reassess(dir: &Path, gateway: Arc<Gateway>) -> Result<ReassessSummary> {
    let manifest = RunManifest::load(dir)?;
    let records = load_records(dir)?;
    manifest.verify_records(dir, &records)?;
    let assets = checked_assets(dir, &manifest)?;
    let assessor = Assessor::new(gateway, assets.assessment)?;
    let wall = manifest.config.wall_timestamps();
    let mut entries = Vec::new();
    for r in records.iter().filter(|r| r.arm.filtered() && r.is_final()) {
        let verdict = assessor.assess(&r.question, &r.final_answer)?;
        entries.push(AssessmentEntry {
            answer_id: r.answer_id(),
            verdict,
            assessed_at: wall.then(now),
        });
    }
    crate::jsonl::append(&dir.join(ASSESSMENTS_FILE), &entries)?;
    Ok(ReassessSummary {
        assessed: entries.len(),
        kept: entries.iter().filter(|e| e.verdict.keep).count(),
    })
}

pub fn load_records(dir: &Path) -> Result<Vec<RunRecord>> {
    let path = dir.join(RECORDS_FILE);
    crate::jsonl::read_all(&path).map_err(|e| Error::CorruptRun {
        path,
        reason: e.to_string(),
    })
}

/// Manifest plus records with the latest re-assessment verdicts applied.
pub fn load_run(dir: &Path) -> Result<(RunManifest, Vec<RunRecord>)> {
    let manifest = RunManifest::load(dir)?;
    let mut records = load_records(dir)?;
    manifest.verify_records(dir, &records)?;
    let overrides: HashMap<String, AssessmentEntry> = crate::jsonl::read_all::<AssessmentEntry>(&dir.join(ASSESSMENTS_FILE))?
        .into_iter()
        .map(|e| (e.answer_id.clone(), e))
        .collect();
    if !overrides.is_empty() {
        for r in records.iter_mut().filter(|r| r.arm.filtered() && r.is_final()) {
            if let Some(entry) = overrides.get(&r.answer_id()) {
                r.verdict = Some(entry.verdict.clone());
            }
        }
    }
    Ok((manifest, records))
}

fn checked_assets(dir: &Path, manifest: &RunManifest) -> Result<RunAssets> {
    let assets = RunAssets::load(&manifest.config.assets)?;
    if assets.hashes() != manifest.asset_hashes {
        return Err(Error::CorruptRun {
            path: dir.to_path_buf(),
            reason: "asset files changed since the run started".into(),
        });
    }
    Ok(assets)
}

type QuestionMap = BTreeMap<(String, QuestionForm), VerbalizedQuestion>;

fn verbalize_all(triples: &[Triple], assets: &RunAssets) -> Result<QuestionMap> {
    let mut out = BTreeMap::new();
    for t in triples {
        for form in QuestionForm::BOTH {
            out.insert((t.id.clone(), form), assets.templates.verbalize(t, form)?);
        }
    }
    Ok(out)
}

fn derive_run_id(
    config: &RunConfig,
    hashes: &super::config::AssetHashes,
    sampled: &[Triple],
    backend_id: &str,
) -> String {
    let mut echo = config.clone();
    echo.out_dir = PathBuf::new();
    let ids: Vec<&str> = sampled.iter().map(|t| t.id.as_str()).collect();
    let canon = serde_json::json!({
        "config": echo,
        "assets": hashes,
        "triples": ids,
        "backend": backend_id,
    });
    crate::sha256_hex(canon.to_string())[..16].to_string()
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

struct ItemContext<'a> {
    run_id: &'a str,
    responses: u32,
    wall: bool,
    assets: &'a RunAssets,
    gateway: &'a Gateway,
    assessor: Option<&'a Assessor>,
}

fn process_item(ctx: &ItemContext<'_>, arm: Arm, triple: &Triple, question: &VerbalizedQuestion) -> Result<Vec<RunRecord>> {
    let strategy = arm.strategy(question.form);
    let prompt = build_prompt(strategy, question, &ctx.assets.prompts)?;
    let prompt_hash = prompt.hash();
    let max_tokens = if strategy.is_chain_of_thought() {
        COT_MAX_TOKENS
    } else {
        FEW_SHOT_MAX_TOKENS
    };
    let markers = &ctx.assets.markers;
    let started_at = ctx.wall.then(now);
    let attempts = ctx.gateway.sample_answers_with_retry(&prompt.rendered, max_tokens, ctx.responses, |text| {
        parse_completion(text, strategy, markers).no_answer
    })?;

    let mut records = Vec::with_capacity(attempts.len());
    for attempt in attempts {
        let parsed = parse_completion(&attempt.text, strategy, markers);
        let mut record = RunRecord {
            run_id: ctx.run_id.to_string(),
            triple_id: triple.id.clone(),
            relation: triple.relation.clone(),
            head: triple.head.clone(),
            form: question.form,
            arm,
            strategy,
            sample_index: attempt.sample_index,
            attempt: attempt.attempt,
            temperature: attempt.temperature,
            question: question.text.clone(),
            prompt_hash: prompt_hash.clone(),
            backend_id: attempt.backend_id,
            salvaged: strategy.is_chain_of_thought() && !parsed.has_full_structure(strategy),
            raw_completion: attempt.text,
            final_answer: parsed.final_answer,
            no_answer: parsed.no_answer,
            transport_retries: attempt.transport_retries,
            verdict: None,
            started_at: started_at.clone(),
            finished_at: None,
        };
        if let (true, Some(assessor)) = (arm.filtered() && record.is_final(), ctx.assessor) {
            record.verdict = Some(assessor.assess(&record.question, &record.final_answer)?);
        }
        records.push(record);
    }
    let finished_at = ctx.wall.then(now);
    for r in &mut records {
        r.finished_at = finished_at.clone();
    }
    Ok(records)
}

/// Executes every non-complete item. Workers run items concurrently; this
/// thread commits their results strictly in item order, so the records file
/// does not depend on scheduling, and rewrites the manifest after each one.
fn execute(
    dir: &Path,
    manifest: &mut RunManifest,
    assets: &RunAssets,
    questions: &QuestionMap,
    gateway: Arc<Gateway>,
) -> Result<RunSummary> {
    let todo: Vec<usize> = (0..manifest.items.len())
        .filter(|&i| manifest.items[i].status != ItemStatus::Complete)
        .collect();
    let triples: HashMap<String, Triple> = manifest
        .sampled_triples
        .iter()
        .map(|t| (t.id.clone(), t.clone()))
        .collect();
    let jobs: Vec<(Arm, &Triple, &VerbalizedQuestion)> = todo
        .iter()
        .map(|&i| {
            let item = &manifest.items[i];
            let triple = triples.get(&item.triple_id).ok_or_else(|| Error::CorruptRun {
                path: dir.to_path_buf(),
                reason: format!("work item refers to unknown triple {}", item.triple_id),
            })?;
            let question = &questions[&(item.triple_id.clone(), item.form)];
            Ok((item.arm, triple, question))
        })
        .collect::<Result<_>>()?;
    let assessor = if jobs.iter().any(|(arm, _, _)| arm.filtered()) {
        Some(Assessor::new(gateway.clone(), assets.assessment.clone())?)
    } else {
        None
    };
    let run_id = manifest.run_id.clone();
    let ctx = ItemContext {
        run_id: &run_id,
        responses: manifest.config.responses_per_question,
        wall: manifest.config.wall_timestamps(),
        assets,
        gateway: &gateway,
        assessor: assessor.as_ref(),
    };

    let workers = gateway.limiter().max_in_flight().min(jobs.len()).max(1);
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let records_path = dir.join(RECORDS_FILE);
    let mut failed = 0;

    let fatal = std::thread::scope(|scope| -> Option<Error> {
        let (tx, rx) = mpsc::channel::<(usize, Result<Vec<RunRecord>>)>();
        for _ in 0..workers {
            let tx = tx.clone();
            let (jobs, next, stop, ctx) = (&jobs, &next, &stop, &ctx);
            scope.spawn(move || loop {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let pos = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(arm, triple, question)) = jobs.get(pos) else {
                    break;
                };
                let outcome = process_item(ctx, arm, triple, question);
                if tx.send((pos, outcome)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut buffered: BTreeMap<usize, Result<Vec<RunRecord>>> = BTreeMap::new();
        let mut commit = 0usize;
        for (pos, outcome) in rx {
            buffered.insert(pos, outcome);
            while let Some(outcome) = buffered.remove(&commit) {
                let item = &mut manifest.items[todo[commit]];
                match outcome {
                    Ok(records) => {
                        if let Err(e) = crate::jsonl::append(&records_path, &records) {
                            stop.store(true, Ordering::SeqCst);
                            return Some(e);
                        }
                        item.status = ItemStatus::Complete;
                        item.records = records.len();
                        item.error = None;
                    }
                    Err(e) => {
                        tracing::error!(arm = %item.arm, triple = %item.triple_id, form = %item.form, error = %e, "work item failed");
                        item.status = ItemStatus::Failed;
                        item.records = 0;
                        item.error = Some(e.to_string());
                        failed += 1;
                    }
                }
                if let Err(e) = manifest.save(dir) {
                    stop.store(true, Ordering::SeqCst);
                    return Some(e);
                }
                commit += 1;
            }
        }
        None
    });
    if let Some(e) = fatal {
        return Err(e);
    }

    let records = load_records(dir)?;
    manifest.refresh(&records);
    manifest.save(dir)?;
    Ok(RunSummary {
        dir: dir.to_path_buf(),
        run_id,
        complete: manifest.complete,
        executed_items: jobs.len(),
        failed_items: failed,
    })
}
