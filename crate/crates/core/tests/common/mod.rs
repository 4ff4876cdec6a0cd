#![allow(dead_code)]

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use negcomp_core::llm_gateway::{BackendError, CompletionRequest, FnBackend, RateLimit, RetryPolicy};
use negcomp_core::triple_store::{parse_triples, TripleFormat};
use negcomp_core::{Gateway, QuestionForm, TemplateRegistry, Triple};

/// Writes a TSV store with `count` triples for each relation.
pub fn write_triples(dir: &Path, per_relation: &[(&str, usize)]) -> PathBuf {
    let mut text = String::from("head\trelation\ttail\n");
    for (relation, count) in per_relation {
        for i in 0..*count {
            text.push_str(&format!("PersonX does task {i} for {relation}\t{relation}\ttail {i}\n"));
        }
    }
    let path = dir.join("triples.tsv");
    std::fs::write(&path, text).unwrap();
    path
}

pub fn read_triples(path: &Path) -> Vec<Triple> {
    let text = std::fs::read_to_string(path).unwrap();
    parse_triples(&text, TripleFormat::Tsv, &TemplateRegistry::default_templates()).triples
}

/// Maps every verbalized question text back to its triple and form.
pub fn question_index(triples: &[Triple]) -> HashMap<String, (String, QuestionForm)> {
    let registry = TemplateRegistry::default_templates();
    let mut out = HashMap::new();
    for t in triples {
        for form in QuestionForm::BOTH {
            let q = registry.verbalize(t, form).unwrap();
            out.insert(q.text, (t.id.clone(), form));
        }
    }
    out
}

/// The question of the final `Q:` block.
pub fn target_question(prompt: &str) -> Option<String> {
    prompt
        .lines()
        .rev()
        .find_map(|l| l.strip_prefix("Q:"))
        .map(|q| q.trim().to_string())
}

pub fn is_assessment(prompt: &str) -> bool {
    prompt.trim_end().ends_with("Verdict:")
}

/// The question/answer pair being judged in an assessment prompt.
pub fn assessment_target(prompt: &str) -> (String, String) {
    let lines: Vec<&str> = prompt.trim_end().lines().collect();
    let n = lines.len();
    let q = lines[n - 3].strip_prefix("Question:").unwrap().trim().to_string();
    let a = lines[n - 2].strip_prefix("Answer:").unwrap().trim().to_string();
    (q, a)
}

/// A well-formed completion for the prompt style `prompt` uses.
pub fn completion_for(prompt: &str, answer: &str) -> String {
    if prompt.trim_end().ends_with("Answer:") {
        format!(" {answer}")
    } else if prompt.contains("Negation logic:") {
        format!(
            "Standard question: What is it?\nReasoning: Some reasoning.\nStandard answer: something\nNegation logic: Anything else.\nAnswer: {answer}"
        )
    } else {
        format!("Reasoning: Some reasoning.\nAnswer: {answer}")
    }
}

pub type Answerer = dyn Fn(&str, QuestionForm, usize, f64) -> String + Send + Sync;
pub type Judge = dyn Fn(&str, &str) -> bool + Send + Sync;

/// Backend for synthetic worlds: `answer(triple_id, form, sample, temperature)`
/// produces each completion's answer, `judge(question, answer)` decides
/// assessment prompts.
pub fn world_backend(
    index: HashMap<String, (String, QuestionForm)>,
    answer: Box<Answerer>,
    judge: Box<Judge>,
) -> FnBackend {
    FnBackend::new("world", move |req: &CompletionRequest| {
        if is_assessment(&req.prompt) {
            let (q, a) = assessment_target(&req.prompt);
            return Ok(vec![if judge(&q, &a) { " Correct" } else { " Incorrect" }.to_string()]);
        }
        let question = target_question(&req.prompt).ok_or_else(|| BackendError::Malformed("no target".into()))?;
        let (triple_id, form) = index
            .get(&question)
            .cloned()
            .ok_or_else(|| BackendError::Unscripted(question.clone()))?;
        Ok((0..req.n as usize)
            .map(|i| completion_for(&req.prompt, &answer(&triple_id, form, i, req.temperature)))
            .collect())
    })
}

pub fn gateway(backend: FnBackend, max_in_flight: usize) -> Arc<Gateway> {
    Arc::new(Gateway::new(
        backend,
        RateLimit {
            max_in_flight,
            min_interval_ms: 0,
        },
        RetryPolicy {
            max_retries: 0,
            initial_backoff_ms: 1,
            max_backoff_ms: 1,
        },
    ))
}

/// JSON-lines mock script answering every prompt style with fixed text.
pub fn write_mock_script(dir: &Path) -> PathBuf {
    let lines = [
        r#"{"prompt_contains":"Verdict:","completions":[" Correct"]}"#,
        r#"{"prompt_contains":"Negation logic:","completions":["Standard question: What does PersonX want?\nReasoning: People who do tasks want rest.\nStandard answer: to rest\nNegation logic: Anything but resting.\nAnswer: to run a marathon","Standard question: q\nReasoning: r\nStandard answer: s\nNegation logic: n\nAnswer: to sing"]}"#,
        r#"{"prompt_contains":"Reasoning:","completions":["Reasoning: Tasks are tiring.\nAnswer: to rest"]}"#,
        r#"{"default":true,"completions":[" to rest"," to eat"," I don't know"]}"#,
        r#"{"default":true,"temperature":1.0,"completions":[" to sleep"]}"#,
    ];
    let path = dir.join("mock.jsonl");
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    path
}
