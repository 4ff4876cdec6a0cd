use std::collections::HashSet;
use std::path::Path;
use std::sync::Arc;

use negcomp_annotate::{router, AnnotationTask, ServiceConfig, INSTRUCTIONS};
use negcomp_core::experiment::{run_with_gateway, Arm};
use negcomp_core::llm_gateway::{FnBackend, RateLimit, RetryPolicy};
use negcomp_core::{krippendorff_alpha, AnnotationRecord, BackendSpec, Gateway, RunConfig, SampleSpec};
use reqwest::StatusCode;
use serde_json::json;

/// Creates a few-shot run with ten answers (5 triples × 2 forms × 1 response).
fn make_run(dir: &Path) -> std::path::PathBuf {
    let mut tsv = String::from("head\trelation\ttail\n");
    for i in 0..5 {
        tsv.push_str(&format!("PersonX visits place {i}\txWant\tto rest\n"));
    }
    let triples = dir.join("triples.tsv");
    std::fs::write(&triples, tsv).unwrap();
    let mut config = RunConfig::new(&triples, dir.join("run"), BackendSpec::scripted("unused"));
    config.arms = vec![Arm::FewShot];
    config.responses_per_question = 1;
    config.sample = SampleSpec {
        per_relation_count: 5,
        seed: 3,
        relations: None,
    };
    let backend = FnBackend::new("fixed", |req| Ok((0..req.n).map(|_| " to take a nap".to_string()).collect()));
    let gw = Arc::new(Gateway::new(backend, RateLimit::default(), RetryPolicy::default()));
    let summary = run_with_gateway(&config, gw).unwrap();
    assert!(summary.complete);
    summary.dir
}

async fn start(config: ServiceConfig) -> String {
    let store = Arc::new(config.open_store().unwrap());
    let app = router(store, config.token.clone(), config.ui_dir.clone());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    format!("http://{addr}")
}

async fn annotate_until_done(client: reqwest::Client, base: String, who: String) -> usize {
    let mut done = 0;
    loop {
        let resp = client
            .get(format!("{base}/api/tasks/next?annotator={who}"))
            .send()
            .await
            .unwrap();
        if resp.status() == StatusCode::NO_CONTENT {
            return done;
        }
        let task: AnnotationTask = resp.json().await.unwrap();
        assert_eq!(task.assigned_annotator, who);
        let label = if task.sentence.contains("not") { 1 } else { 4 };
        let resp = client
            .post(format!("{base}/api/labels"))
            .json(&json!({"annotator": who, "answer_id": task.answer_id, "label": label}))
            .send()
            .await
            .unwrap();
        assert_eq!(resp.status(), StatusCode::CREATED);
        done += 1;
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn three_annotators_complete_a_ten_answer_batch() {
    let dir = tempfile::tempdir().unwrap();
    let run = make_run(dir.path());
    let mut config = ServiceConfig::new(&run);
    config.required_annotators = 3;
    let base = start(config.clone()).await;
    let client = reqwest::Client::new();

    let progress: serde_json::Value = client.get(format!("{base}/api/progress")).send().await.unwrap().json().await.unwrap();
    assert_eq!(progress["answers"], 10);
    assert_eq!(progress["labels"], 0);
    let batch_id = progress["batch"].as_str().unwrap().to_string();

    let workers: Vec<_> = ["ann-a", "ann-b", "ann-c"]
        .into_iter()
        .map(|who| tokio::spawn(annotate_until_done(client.clone(), base.clone(), who.to_string())))
        .collect();
    for w in workers {
        assert_eq!(w.await.unwrap(), 10);
    }

    let export: Vec<AnnotationRecord> = client
        .get(format!("{base}/api/export?batch={batch_id}"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(export.len(), 30);
    let pairs: HashSet<_> = export.iter().map(|r| (&r.answer_id, &r.annotator_id)).collect();
    assert_eq!(pairs.len(), 30);
    let alpha = krippendorff_alpha(&export).unwrap();
    assert_eq!(alpha.n_units, 10);
    assert!((alpha.alpha - 1.0).abs() < 1e-12 || alpha.degenerate);

    let progress: serde_json::Value = client
        .get(format!("{base}/api/progress?batch={batch_id}"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(progress["complete"], 10);
    assert_eq!(progress["incomplete"], 0);
    assert_eq!(progress["per_annotator"]["ann-b"], 10);

    // The log on disk replays to the same export.
    let reopened = config.open_store().unwrap();
    assert_eq!(reopened.export(None).unwrap(), export);
    let on_disk: Vec<AnnotationRecord> = negcomp_core::jsonl::read_all(&run.join("labels.jsonl")).unwrap();
    assert_eq!(on_disk, export);
}

#[tokio::test]
async fn rejects_bad_submissions() {
    let dir = tempfile::tempdir().unwrap();
    let run = make_run(dir.path());
    let base = start(ServiceConfig::new(&run)).await;
    let client = reqwest::Client::new();
    let post = |body: serde_json::Value| client.post(format!("{base}/api/labels")).json(&body).send();

    let resp = client.get(format!("{base}/api/tasks/next?annotator=")).send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);

    let task: AnnotationTask = client
        .get(format!("{base}/api/tasks/next?annotator=ann"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(task.distinct_annotators, 0);
    assert_eq!(task.required_annotators, 9);
    let names: Vec<_> = task.options.iter().map(|o| o.code).collect();
    assert_eq!(names, [1, 2, 3, 4, 5]);

    let resp = post(json!({"annotator": "ann", "answer_id": task.answer_id, "label": 7})).await.unwrap();
    assert_eq!(resp.status(), StatusCode::UNPROCESSABLE_ENTITY);
    let resp = post(json!({"annotator": "ann", "answer_id": "missing", "label": 1})).await.unwrap();
    assert_eq!(resp.status(), StatusCode::NOT_FOUND);
    let resp = post(json!({"annotator": "other", "answer_id": task.answer_id, "label": 1})).await.unwrap();
    assert_eq!(resp.status(), StatusCode::CONFLICT);

    let resp = post(json!({"annotator": "ann", "answer_id": task.answer_id, "label": "sometimes_makes_sense"})).await.unwrap();
    assert_eq!(resp.status(), StatusCode::CREATED);
    let resp = post(json!({"annotator": "ann", "answer_id": task.answer_id, "label": 2})).await.unwrap();
    assert_eq!(resp.status(), StatusCode::CONFLICT);
    let export: Vec<AnnotationRecord> = client.get(format!("{base}/api/export")).send().await.unwrap().json().await.unwrap();
    assert_eq!(export.len(), 1);

    let resp = client.get(format!("{base}/api/export?batch=nope")).send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::NOT_FOUND);
    let resp = client.get(format!("{base}/api/progress?batch=nope")).send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn serves_instructions_verbatim_and_the_index_page() {
    let dir = tempfile::tempdir().unwrap();
    let run = make_run(dir.path());
    let base = start(ServiceConfig::new(&run)).await;
    let body = reqwest::get(format!("{base}/api/instructions")).await.unwrap().bytes().await.unwrap();
    assert_eq!(&body[..], INSTRUCTIONS.as_bytes());
    assert!(INSTRUCTIONS.contains("IMPORTANT: Please note the CANNOT, DO Not, and other negated cases."));
    let index = reqwest::get(format!("{base}/")).await.unwrap();
    assert_eq!(index.status(), StatusCode::OK);

    let ui = dir.path().join("ui");
    std::fs::create_dir_all(&ui).unwrap();
    std::fs::write(ui.join("index.html"), "<p>labeling ui</p>").unwrap();
    let mut config = ServiceConfig::new(&run);
    config.ui_dir = Some(ui);
    let base = start(config).await;
    let page = reqwest::get(format!("{base}/")).await.unwrap().text().await.unwrap();
    assert_eq!(page, "<p>labeling ui</p>");
}

#[tokio::test]
async fn token_gate() {
    let dir = tempfile::tempdir().unwrap();
    let run = make_run(dir.path());
    let mut config = ServiceConfig::new(&run);
    config.token = Some("s3cret".into());
    let base = start(config).await;
    let client = reqwest::Client::new();
    let resp = client.get(format!("{base}/api/progress")).send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::UNAUTHORIZED);
    let resp = client
        .get(format!("{base}/api/progress"))
        .header("x-annotation-token", "s3cret")
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
}

#[test]
fn batch_holds_only_retained_real_answers_and_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let run = make_run(dir.path());
    let a = negcomp_annotate::load_or_build_batch(&run, 5).unwrap();
    let b = negcomp_annotate::load_or_build_batch(&run, 99).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.items.len(), 10);
    assert!(a.items.iter().any(|i| i.sentence.contains("PersonX does not want to take a nap")));
}
