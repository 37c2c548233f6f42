#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::Arc;

use normloom::corpus::*;
use normloom::llm::{BackendError, BackendMode, ChatBackend, CompletionCache, CompletionRequest, Gateway};
use normloom::pipeline::{Pipeline, PipelineConfig};
use normloom::review::{Quotas, ReviewDesk, Reviewer};

mod scripted;
pub use scripted::*;

pub fn small_config() -> PipelineConfig {
    PipelineConfig {
        scenarios_per_norm: 2,
        situations_per_scenario: 1,
        parallelism: 4,
        ..PipelineConfig::default()
    }
}

pub struct Harness {
    pub store: Arc<Store>,
    pub desk: Arc<ReviewDesk>,
    pub pipeline: Pipeline,
    pub backend: Arc<ScriptedBackend>,
}

pub fn clock() -> Arc<dyn Clock> {
    Arc::new(FixedClock(EPOCH))
}

pub fn harness_with(store: Store, config: PipelineConfig, backend: ScriptedBackend) -> Harness {
    let store = Arc::new(store);
    let backend = Arc::new(backend);
    let gateway = Gateway::new(Some(backend.clone() as Arc<dyn ChatBackend>), CompletionCache::in_memory(), BackendMode::Record)
        .with_clock(clock());
    let desk = Arc::new(ReviewDesk::new(store.clone(), clock(), Quotas::default()));
    let pipeline = Pipeline::new(store.clone(), Arc::new(gateway), desk.clone(), config).unwrap();
    Harness { store, desk, pipeline, backend }
}

pub fn harness(config: PipelineConfig) -> Harness {
    harness_with(Store::in_memory(), config, ScriptedBackend::default())
}

pub fn tokens() -> HashMap<String, Reviewer> {
    let mut t = HashMap::new();
    for name in ["ann1", "ann2", "ann3"] {
        t.insert(format!("tok-{name}"), Reviewer::annotator(name));
    }
    t.insert("tok-judge".into(), Reviewer::adjudicator("judge"));
    t
}

/// Review service on an ephemeral port, running on its own runtime thread.
pub struct Service {
    pub base: String,
    _shutdown: tokio::sync::oneshot::Sender<()>,
}

pub fn spawn_service(desk: Arc<ReviewDesk>) -> Service {
    let (addr_tx, addr_rx) = std::sync::mpsc::channel();
    let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            addr_tx.send(listener.local_addr().unwrap()).unwrap();
            let app = normloom::review::router(desk, tokens());
            tokio::select! {
                r = normloom::review::serve(listener, app) => r.unwrap(),
                _ = stop_rx => {}
            }
        });
    });
    let addr = addr_rx.recv().unwrap();
    Service { base: format!("http://{addr}"), _shutdown: stop_tx }
}

pub struct Client {
    pub base: String,
    pub http: reqwest::blocking::Client,
}

impl Client {
    pub fn new(service: &Service) -> Self {
        Self { base: service.base.clone(), http: reqwest::blocking::Client::new() }
    }

    pub fn get(&self, path: &str, token: &str) -> (u16, serde_json::Value) {
        let r = self.http.get(format!("{}{path}", self.base)).bearer_auth(token).send().unwrap();
        let status = r.status().as_u16();
        (status, r.json().unwrap_or(serde_json::Value::Null))
    }

    pub fn post(&self, path: &str, token: &str, body: &serde_json::Value) -> (u16, serde_json::Value) {
        let r = self.http.post(format!("{}{path}", self.base)).bearer_auth(token).json(body).send().unwrap();
        let status = r.status().as_u16();
        (status, r.json().unwrap_or(serde_json::Value::Null))
    }
}

/// Deterministic reviewer behavior keyed on the item id, with occasional dissent.
pub fn scripted_verdict(view: &serde_json::Value, annotator: &str) -> serde_json::Value {
    use serde_json::json;
    let item = view["item_id"].as_str().unwrap();
    let h = fnv(item);
    let dissent = fnv(&format!("{item}/{annotator}")).is_multiple_of(7);
    match view["kind"].as_str().unwrap() {
        "norm_verification" => {
            let pass = !h.is_multiple_of(5) != dissent;
            json!({"factually_correct": pass, "in_category": pass, "culture_specific": true, "detailed": pass})
        }
        "situation_faithfulness" => json!({"entails": !h.is_multiple_of(4) != dissent}),
        "dialogue_quality" => {
            let g = fnv(&format!("{annotator}:{item}"));
            json!({
                "on_topic": !h.is_multiple_of(6) != dissent,
                "naturalness": 1 + g % 5,
                "nativeness": 1 + (g / 5) % 5,
                "coherence": 3 + (g / 25) % 3,
                "interestingness": 2 + (g / 75) % 4,
            })
        }
        "label_verification" => {
            let n = view["dialogue"].as_array().unwrap().len();
            let turns: Vec<serde_json::Value> = (0..n)
                .map(|i| {
                    if annotator == "ann2" && i == 0 && h.is_multiple_of(3) {
                        json!({"correct": "Violated"})
                    } else {
                        json!("confirm")
                    }
                })
                .collect();
            json!({ "turns": turns })
        }
        other => panic!("unexpected kind {other}"),
    }
}

/// Annotators pull tasks round-robin until the queue is dry, then the adjudicator settles
/// disputes. Returns the number of verdicts posted; panics on any non-200 submission.
pub fn review_everything(client: &Client) -> usize {
    let mut posted = 0;
    let annotators = ["ann1", "ann2", "ann3"];
    let mut dry = [false; 3];
    while !dry.iter().all(|d| *d) {
        for (i, a) in annotators.iter().enumerate() {
            if dry[i] {
                continue;
            }
            let token = format!("tok-{a}");
            let (status, view) = client.get(&format!("/tasks/next?annotator={a}"), &token);
            if status == 404 {
                dry[i] = true;
                continue;
            }
            assert_eq!(status, 200, "{view}");
            let body = scripted_verdict(&view, a);
            let (status, ack) = client.post(&format!("/tasks/{}/verdicts", view["task_id"].as_str().unwrap()), &token, &body);
            assert_eq!(status, 200, "{ack}");
            posted += 1;
        }
    }
    loop {
        let (status, view) = client.get("/tasks/next", "tok-judge");
        if status == 404 {
            break;
        }
        assert_eq!(view["state"], "adjudication", "{view}");
        let body = scripted_verdict(&view, "judge");
        let (status, ack) = client.post(&format!("/tasks/{}/verdicts", view["task_id"].as_str().unwrap()), "tok-judge", &body);
        assert_eq!(status, 200, "{ack}");
        posted += 1;
    }
    posted
}

/// Returns the same completion for every prompt.
pub struct FixedBackend(pub String);

impl ChatBackend for FixedBackend {
    fn name(&self) -> &str {
        "fixed"
    }

    fn call(&self, _: &CompletionRequest) -> Result<String, BackendError> {
        Ok(self.0.clone())
    }
}

pub fn gateway_for(backend: Arc<dyn ChatBackend>) -> Arc<Gateway> {
    Arc::new(Gateway::new(Some(backend), CompletionCache::in_memory(), BackendMode::Record).with_clock(clock()))
}

