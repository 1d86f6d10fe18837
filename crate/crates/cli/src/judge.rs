//! Blinded pairwise judging server.
//!
//! Each task shows one instance with the attention of both systems. Which
//! system is drawn on the left is decided per task by a seeded coin and kept
//! server-side; clients only ever see `left` and `right`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ratt_core::corpus::{FoldPlan, Span};
use ratt_core::evalstats::{aggregate_judgments, JudgmentRecord, Preference};
use ratt_core::interpret::{read_audit, AttentionAuditRecord};
use serde::{Deserialize, Serialize};

use crate::args::JudgeServeArgs;
use crate::commands::{read_json, read_judgments, write_json, Context};
use crate::error::{CliError, CliResult};

pub const JUDGMENTS_FILE: &str = "judgments.jsonl";
pub const TASKS_FILE: &str = "judge_tasks.json";

/// A task with its hidden side assignment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredTask {
    pub id: usize,
    pub doc_id: String,
    pub tokens: Vec<String>,
    pub source: Span,
    pub target: Span,
    pub label: String,
    pub attention_a: Vec<f64>,
    pub attention_b: Vec<f64>,
    pub a_on_left: bool,
}

#[derive(Serialize)]
struct Spans {
    source: Span,
    target: Span,
}

#[derive(Serialize)]
struct TaskView<'a> {
    id: usize,
    tokens: &'a [String],
    spans: Spans,
    label: &'a str,
    attention_left: &'a [f64],
    attention_right: &'a [f64],
}

impl StoredTask {
    fn view(&self) -> TaskView<'_> {
        let (left, right) = if self.a_on_left {
            (&self.attention_a, &self.attention_b)
        } else {
            (&self.attention_b, &self.attention_a)
        };
        TaskView {
            id: self.id,
            tokens: &self.tokens,
            spans: Spans {
                source: self.source,
                target: self.target,
            },
            label: &self.label,
            attention_left: left,
            attention_right: right,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Side {
    Left,
    Right,
    Draw,
}

/// What a client posts: verdicts in screen terms.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Submission {
    task_id: usize,
    sensible_left: bool,
    sensible_right: bool,
    #[serde(default)]
    preferred: Option<Side>,
    #[serde(default)]
    strength: Option<u8>,
    annotator: String,
    /// Repeating a key acknowledges without storing a second record.
    #[serde(default)]
    idempotency_key: Option<String>,
}

impl Submission {
    fn into_record(self, task: &StoredTask, timestamp: u64) -> JudgmentRecord {
        let (sa, sb) = if task.a_on_left {
            (self.sensible_left, self.sensible_right)
        } else {
            (self.sensible_right, self.sensible_left)
        };
        let preferred = self.preferred.map(|side| match (side, task.a_on_left) {
            (Side::Draw, _) => Preference::Draw,
            (Side::Left, true) | (Side::Right, false) => Preference::A,
            (Side::Left, false) | (Side::Right, true) => Preference::B,
        });
        JudgmentRecord {
            instance_id: task.id,
            system_a_sensible: sa,
            system_b_sensible: sb,
            preferred,
            strength: self.strength,
            annotator: self.annotator,
            timestamp,
        }
    }
}

struct Log {
    file: File,
    records: Vec<JudgmentRecord>,
    judged: HashSet<usize>,
    keys: HashMap<String, usize>,
}

struct AppState {
    tasks: Vec<StoredTask>,
    index: HashMap<usize, usize>,
    log: Mutex<Log>,
}

/// Pairs the two dumps by instance id and keeps instances both systems got
/// right with confidence above `min_confidence`.
pub fn eligible(
    a: &[AttentionAuditRecord],
    b: &[AttentionAuditRecord],
    min_confidence: f64,
) -> CliResult<Vec<(AttentionAuditRecord, AttentionAuditRecord)>> {
    let b_by_id: HashMap<usize, &AttentionAuditRecord> = b.iter().map(|r| (r.instance_id, r)).collect();
    let mut out = Vec::new();
    let mut shared = 0;
    for ra in a {
        let Some(&rb) = b_by_id.get(&ra.instance_id) else { continue };
        shared += 1;
        if ra.tokens != rb.tokens || ra.source != rb.source || ra.target != rb.target {
            return Err(CliError::Server(format!(
                "audit dumps disagree on instance {}; were they run on the same corpus?",
                ra.instance_id
            )));
        }
        let ok = |r: &AttentionAuditRecord| r.correct && r.confidence > min_confidence;
        if ok(ra) && ok(rb) {
            out.push((ra.clone(), rb.clone()));
        }
    }
    if shared == 0 {
        return Err(CliError::Server("the audit dumps share no instances".into()));
    }
    Ok(out)
}

/// Samples up to `per_fold` pairs from each fold's test documents (or from
/// the whole pool without a plan) and flips a coin for each task's sides.
pub fn build_tasks(
    pairs: Vec<(AttentionAuditRecord, AttentionAuditRecord)>,
    plan: Option<&FoldPlan>,
    per_fold: usize,
    seed: u64,
) -> Vec<StoredTask> {
    let mut groups: BTreeMap<usize, Vec<(AttentionAuditRecord, AttentionAuditRecord)>> = BTreeMap::new();
    let fold_of: Option<HashMap<&str, usize>> = plan.map(|p| {
        p.folds
            .iter()
            .enumerate()
            .flat_map(|(k, f)| f.test.iter().map(move |d| (d.as_str(), k)))
            .collect()
    });
    for pair in pairs {
        let group = match &fold_of {
            None => Some(0),
            Some(m) => m.get(pair.0.doc_id.as_str()).copied(),
        };
        if let Some(g) = group {
            groups.entry(g).or_default().push(pair);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tasks = Vec::new();
    for (_, mut members) in groups {
        members.sort_by_key(|(a, _)| a.instance_id);
        members.shuffle(&mut rng);
        for (a, b) in members.into_iter().take(per_fold) {
            tasks.push(StoredTask {
                id: a.instance_id,
                doc_id: a.doc_id,
                tokens: a.tokens,
                source: a.source,
                target: a.target,
                label: a.gold,
                attention_a: a.attention,
                attention_b: b.attention,
                a_on_left: rng.gen_bool(0.5),
            });
        }
    }
    tasks
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(serde_json::json!({ "error": message.into() }))).into_response()
}

#[derive(Deserialize)]
struct TaskQuery {
    limit: Option<usize>,
}

async fn get_tasks(State(state): State<Arc<AppState>>, Query(q): Query<TaskQuery>) -> Response {
    let limit = q.limit.unwrap_or(10);
    let judged = state.log.lock().expect("log lock").judged.clone();
    let views: Vec<TaskView<'_>> = state
        .tasks
        .iter()
        .filter(|t| !judged.contains(&t.id))
        .take(limit)
        .map(StoredTask::view)
        .collect();
    Json(views).into_response()
}

async fn post_judgment(State(state): State<Arc<AppState>>, body: String) -> Response {
    let sub: Submission = match serde_json::from_str(&body) {
        Ok(s) => s,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed judgment: {e}")),
    };
    let Some(&k) = state.index.get(&sub.task_id) else {
        return error(StatusCode::BAD_REQUEST, format!("unknown task {}", sub.task_id));
    };
    let task = &state.tasks[k];
    let mut log = state.log.lock().expect("log lock");
    if let Some(key) = &sub.idempotency_key {
        if log.keys.get(key) == Some(&task.id) {
            let remaining = state.tasks.len() - log.judged.len();
            return Json(serde_json::json!({ "accepted": true, "duplicate": true, "remaining": remaining }))
                .into_response();
        }
    }
    if log.judged.contains(&task.id) {
        return error(StatusCode::CONFLICT, format!("task {} already judged", task.id));
    }
    let key = sub.idempotency_key.clone();
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let record = sub.into_record(task, timestamp);
    if let Err(e) = record.validate() {
        return error(StatusCode::BAD_REQUEST, e.to_string());
    }
    let mut line = serde_json::to_string(&record).expect("record serializes");
    line.push('\n');
    if let Err(e) = log.file.write_all(line.as_bytes()).and_then(|_| log.file.flush()) {
        return error(StatusCode::INTERNAL_SERVER_ERROR, format!("could not persist judgment: {e}"));
    }
    log.judged.insert(task.id);
    if let Some(key) = key {
        log.keys.insert(key, task.id);
    }
    log.records.push(record);
    let remaining = state.tasks.len() - log.judged.len();
    Json(serde_json::json!({ "accepted": true, "remaining": remaining })).into_response()
}

async fn get_report(State(state): State<Arc<AppState>>) -> Response {
    let log = state.log.lock().expect("log lock");
    match aggregate_judgments(&log.records) {
        Ok(r) => Json(r).into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/tasks", get(get_tasks))
        .route("/api/judgments", post(post_judgment))
        .route("/api/report", get(get_report))
        .with_state(state)
}

fn read_dump(path: &Path) -> CliResult<Vec<AttentionAuditRecord>> {
    let text = fs::read_to_string(path).map_err(CliError::file(path))?;
    Ok(read_audit(&text)?)
}

fn open_log(path: PathBuf, tasks: &[StoredTask]) -> CliResult<Log> {
    let records = read_judgments(&path)?;
    let known: HashSet<usize> = tasks.iter().map(|t| t.id).collect();
    let judged = records
        .iter()
        .map(|r| r.instance_id)
        .filter(|id| known.contains(id))
        .collect();
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(CliError::file(&path))?;
    Ok(Log {
        file,
        records,
        judged,
        keys: HashMap::new(),
    })
}

pub fn serve(ctx: &Context, a: JudgeServeArgs) -> CliResult<()> {
    let dump_a = read_dump(&a.audit_a)?;
    let dump_b = read_dump(&a.audit_b)?;
    let plan: Option<FoldPlan> = a.folds.as_deref().map(read_json).transpose()?;
    let pairs = eligible(&dump_a, &dump_b, a.min_confidence)?;
    let tasks = build_tasks(pairs, plan.as_ref(), a.per_fold, ctx.seed.unwrap_or(1));
    write_json(&ctx.out(TASKS_FILE), &tasks)?;
    let log = open_log(ctx.out(JUDGMENTS_FILE), &tasks)?;
    let index = tasks.iter().enumerate().map(|(k, t)| (t.id, k)).collect();
    let state = Arc::new(AppState {
        tasks,
        index,
        log: Mutex::new(log),
    });

    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Server(e.to_string()))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((a.host.as_str(), a.port))
            .await
            .map_err(|e| CliError::Server(format!("cannot bind {}:{}: {e}", a.host, a.port)))?;
        let addr = listener.local_addr().map_err(|e| CliError::Server(e.to_string()))?;
        println!("serving {} tasks on http://{addr}", state.tasks.len());
        let _ = std::io::stdout().flush();
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| CliError::Server(e.to_string()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ratt_core::interpret::{InfluenceProfile, RankMetrics};

    fn record(id: usize, doc: &str, correct: bool, confidence: f64, att: Vec<f64>) -> AttentionAuditRecord {
        AttentionAuditRecord {
            instance_id: id,
            doc_id: doc.into(),
            tokens: vec!["a".into(), "b".into(), "c".into()],
            source: Span::new(0, 1),
            target: Span::new(2, 3),
            rationale: Some(Span::new(1, 2)),
            gold: "positive".into(),
            predicted: "positive".into(),
            confidence,
            correct,
            attention: att,
            influence: InfluenceProfile {
                influences: vec![0.0, 0.1, 0.0],
                top_index: 1,
                base_confidence: confidence,
                predicted_class: 0,
            },
            faithfulness: RankMetrics::at(&[0.2, 0.6, 0.2], 1),
            plausibility: None,
        }
    }

    #[test]
    fn filter_keeps_confident_agreement() {
        let a = vec![
            record(0, "d", true, 0.9, vec![0.2, 0.6, 0.2]),
            record(1, "d", true, 0.5, vec![0.2, 0.6, 0.2]),
            record(2, "d", false, 0.9, vec![0.2, 0.6, 0.2]),
            record(3, "d", true, 0.9, vec![0.2, 0.6, 0.2]),
        ];
        let b = vec![
            record(0, "d", true, 0.8, vec![0.3, 0.4, 0.3]),
            record(1, "d", true, 0.8, vec![0.3, 0.4, 0.3]),
            record(2, "d", true, 0.8, vec![0.3, 0.4, 0.3]),
        ];
        let pairs = eligible(&a, &b, 0.5).unwrap();
        assert_eq!(pairs.iter().map(|p| p.0.instance_id).collect::<Vec<_>>(), vec![0]);
        assert!(eligible(&a, &[], 0.5).is_err());
    }

    #[test]
    fn sides_map_back_to_systems() {
        let mut task = build_tasks(
            vec![(
                record(0, "d", true, 0.9, vec![0.2, 0.6, 0.2]),
                record(0, "d", true, 0.9, vec![0.3, 0.4, 0.3]),
            )],
            None,
            40,
            1,
        )
        .remove(0);
        for a_on_left in [true, false] {
            task.a_on_left = a_on_left;
            let sub = Submission {
                task_id: 0,
                sensible_left: true,
                sensible_right: false,
                preferred: Some(Side::Left),
                strength: Some(2),
                annotator: "x".into(),
                idempotency_key: None,
            };
            let r = sub.into_record(&task, 0);
            assert_eq!(r.system_a_sensible, a_on_left);
            assert_eq!(r.system_b_sensible, !a_on_left);
            let want = if a_on_left { Preference::A } else { Preference::B };
            assert_eq!(r.preferred, Some(want));
            assert!(r.validate().is_ok());
        }
    }
}
