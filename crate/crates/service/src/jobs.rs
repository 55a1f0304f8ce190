use std::collections::{BTreeMap, HashMap};
use std::panic::AssertUnwindSafe;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use fdem_cli::{invert, simulate, CliError, Dataset, Payload, RunConfig, RunKind};
use fdem_core::invert::{CancelToken, ProgressEvent};
use fdem_core::RunControl;
use serde::{Deserialize, Serialize};
use tokio::sync::{mpsc, watch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
    Cancelled,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed | JobState::Cancelled)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            JobState::Queued => "queued",
            JobState::Running => "running",
            JobState::Done => "done",
            JobState::Failed => "failed",
            JobState::Cancelled => "cancelled",
        }
    }
}

/// Counters only grow. `ell_total` sums the sweep lengths of the columns
/// that have reported so far.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub columns_completed: usize,
    pub columns_total: usize,
    pub ell_completed: usize,
    pub ell_total: usize,
    /// Gauss-Newton iterations over all columns and truncation indices.
    pub iterations: usize,
    pub residual_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobStatus {
    pub id: String,
    pub state: JobState,
    /// Bumped on every change; pass it back to the events endpoint.
    pub version: u64,
    pub progress: Progress,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Every column converged; set once the job is done.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub complete: Option<bool>,
}

/// Body of `POST /jobs`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobRequest {
    #[serde(default)]
    pub config: RunConfig,
    #[serde(default = "profile")]
    pub kind: RunKind,
    /// Dataset file contents. Without it the data are synthesized from
    /// `config` and the truth is kept for error reporting.
    #[serde(default)]
    pub data: Option<String>,
}

impl Default for JobRequest {
    fn default() -> Self {
        Self {
            config: RunConfig::default(),
            kind: RunKind::Profile,
            data: None,
        }
    }
}

fn profile() -> RunKind {
    RunKind::Profile
}

/// A request that passed validation.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: RunConfig,
    pub kind: RunKind,
    pub dataset: Option<Dataset>,
    pub columns: usize,
}

/// Rejected request; `field` is a dotted path into the request body.
#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub field: Option<String>,
    pub message: String,
}

impl Rejection {
    fn at(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: Some(field.into()),
            message: message.into(),
        }
    }

    fn from_cli(e: CliError) -> Self {
        let message = e.to_string();
        let field = match &e {
            CliError::Core(fdem_core::Error::Invalid { field, .. }) => Some(format!("config.{field}")),
            CliError::Config(msg) => msg
                .strip_prefix('`')
                .and_then(|rest| rest.split_once('`'))
                .map(|(f, _)| format!("config.{f}")),
            _ => None,
        };
        Self { field, message }
    }
}

impl JobRequest {
    pub fn prepare(self) -> Result<Prepared, Rejection> {
        let config = self.config;
        config.validate().map_err(Rejection::from_cli)?;
        let (dataset, columns) = match self.data {
            Some(text) => {
                let d = Dataset::parse(&text).map_err(|e| Rejection::at("data", e.to_string()))?;
                let n = d.columns.len();
                (Some(d), n)
            }
            None => {
                let disc = config.soil.discretization().map_err(Rejection::from_cli)?;
                config
                    .truth
                    .profiles(&disc, config.inversion.unknown)
                    .map_err(Rejection::from_cli)?;
                (None, config.truth.columns)
            }
        };
        if self.kind == RunKind::Profile && columns != 1 {
            return Err(Rejection::at(
                "kind",
                format!("a profile run takes one column, the data hold {columns}; use kind = \"section\""),
            ));
        }
        Ok(Prepared {
            config,
            kind: self.kind,
            dataset,
            columns,
        })
    }
}

struct Job {
    status: JobStatus,
    sweeps: BTreeMap<Option<usize>, (usize, usize)>,
    request: Option<Prepared>,
    result: Option<Arc<Payload>>,
    cancel: CancelToken,
}

pub struct JobCell {
    job: Mutex<Job>,
    events: watch::Sender<JobStatus>,
}

impl JobCell {
    fn new(status: JobStatus, request: Option<Prepared>, result: Option<Arc<Payload>>) -> Arc<Self> {
        let (events, _) = watch::channel(status.clone());
        Arc::new(Self {
            job: Mutex::new(Job {
                status,
                sweeps: BTreeMap::new(),
                request,
                result,
                cancel: CancelToken::new(),
            }),
            events,
        })
    }

    fn lock(&self) -> MutexGuard<'_, Job> {
        self.job.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn update(&self, f: impl FnOnce(&mut Job)) {
        let mut job = self.lock();
        f(&mut job);
        job.status.version += 1;
        self.events.send_replace(job.status.clone());
    }

    pub fn status(&self) -> JobStatus {
        self.lock().status.clone()
    }

    pub fn result(&self) -> Option<Arc<Payload>> {
        self.lock().result.clone()
    }

    pub fn subscribe(&self) -> watch::Receiver<JobStatus> {
        self.events.subscribe()
    }

    /// Request cancellation. A queued job is cancelled at once; a running
    /// one stops at its next outer iteration. Finished jobs are left alone.
    pub fn cancel(&self) {
        let state = {
            let job = self.lock();
            job.cancel.cancel();
            job.status.state
        };
        if state == JobState::Queued {
            self.update(|job| {
                if job.status.state == JobState::Queued {
                    job.status.state = JobState::Cancelled;
                    job.request = None;
                }
            });
        }
    }

    fn on_progress(&self, event: &ProgressEvent) {
        self.update(|job| {
            let p = &mut job.status.progress;
            match *event {
                ProgressEvent::Iteration { residual_norm, .. } => {
                    p.iterations += 1;
                    p.residual_norm = Some(residual_norm);
                }
                ProgressEvent::EllFinished {
                    column,
                    completed,
                    total,
                    ..
                } => {
                    let entry = job.sweeps.entry(column).or_default();
                    entry.0 = entry.0.max(completed);
                    entry.1 = total;
                    p.ell_completed = job.sweeps.values().map(|s| s.0).sum();
                    p.ell_total = job.sweeps.values().map(|s| s.1).sum();
                }
                ProgressEvent::ColumnFinished { completed, .. } => {
                    p.columns_completed = p.columns_completed.max(completed);
                }
            }
        });
    }
}

/// On-disk form of a finished job.
#[derive(Serialize, Deserialize)]
struct Stored {
    status: JobStatus,
    result: Payload,
}

/// Job table and the queue feeding the workers.
pub struct Jobs {
    table: Mutex<HashMap<String, Arc<JobCell>>>,
    queue: mpsc::UnboundedSender<String>,
    data_dir: Option<PathBuf>,
}

impl Jobs {
    /// Start `workers` workers on the current tokio runtime. Finished jobs
    /// found in `data_dir` are served again.
    pub fn start(workers: usize, data_dir: Option<PathBuf>) -> std::io::Result<Arc<Self>> {
        let mut table = HashMap::new();
        if let Some(dir) = &data_dir {
            std::fs::create_dir_all(dir)?;
            for (id, cell) in load_dir(dir)? {
                table.insert(id, cell);
            }
        }
        let (queue, rx) = mpsc::unbounded_channel();
        let jobs = Arc::new(Self {
            table: Mutex::new(table),
            queue,
            data_dir,
        });
        let rx = Arc::new(tokio::sync::Mutex::new(rx));
        for _ in 0..workers.max(1) {
            tokio::spawn(worker(jobs.clone(), rx.clone()));
        }
        Ok(jobs)
    }

    fn table(&self) -> MutexGuard<'_, HashMap<String, Arc<JobCell>>> {
        self.table.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn get(&self, id: &str) -> Option<Arc<JobCell>> {
        self.table().get(id).cloned()
    }

    pub fn submit(&self, request: Prepared) -> JobStatus {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let status = JobStatus {
            id: id.clone(),
            state: JobState::Queued,
            version: 0,
            progress: Progress {
                columns_total: request.columns,
                ..Progress::default()
            },
            error: None,
            complete: None,
        };
        self.table().insert(id.clone(), JobCell::new(status.clone(), Some(request), None));
        // The receiver lives as long as the workers, which never exit first.
        let _ = self.queue.send(id);
        status
    }

    fn run(&self, cell: &Arc<JobCell>) {
        let mut started = None;
        cell.update(|job| {
            if job.status.state == JobState::Queued {
                if let Some(request) = job.request.take() {
                    job.status.state = JobState::Running;
                    started = Some((request, job.cancel.clone()));
                }
            }
        });
        let Some((request, cancel)) = started else {
            return;
        };
        let listener = cell.clone();
        let control = RunControl::with_cancel(cancel).with_progress(move |e| listener.on_progress(e));
        let outcome = std::panic::catch_unwind(AssertUnwindSafe(|| execute(&request, &control)))
            .unwrap_or_else(|_| Err(Outcome::Failed("internal error: the run panicked".into())));
        match outcome {
            Ok(payload) => {
                let payload = Arc::new(payload);
                let finish = |status: &mut JobStatus| {
                    status.state = JobState::Done;
                    status.complete = Some(payload.complete());
                    status.progress.columns_completed = status.progress.columns_total;
                };
                // Saved before the state flips, so a done job is on disk.
                if let Some(dir) = &self.data_dir {
                    let mut status = cell.status();
                    finish(&mut status);
                    let stored = Stored {
                        status,
                        result: (*payload).clone(),
                    };
                    if let Err(e) = save(dir, &stored) {
                        eprintln!("saving job {}: {e}", stored.status.id);
                    }
                }
                cell.update(|job| {
                    finish(&mut job.status);
                    job.result = Some(payload.clone());
                });
            }
            Err(Outcome::Cancelled) => cell.update(|job| job.status.state = JobState::Cancelled),
            Err(Outcome::Failed(message)) => cell.update(|job| {
                job.status.state = JobState::Failed;
                job.status.error = Some(message);
            }),
        }
    }
}

enum Outcome {
    Cancelled,
    Failed(String),
}

fn execute(request: &Prepared, control: &RunControl) -> Result<Payload, Outcome> {
    let failed = |e: CliError| match e {
        CliError::Core(fdem_core::Error::Cancelled) => Outcome::Cancelled,
        e => Outcome::Failed(e.to_string()),
    };
    let (dataset, truth) = match &request.dataset {
        Some(d) => (d.clone(), None),
        None => {
            let s = simulate(&request.config).map_err(failed)?;
            (s.dataset, Some(s.truth))
        }
    };
    invert(&request.config, &dataset, truth, request.kind, control).map_err(failed)
}

async fn worker(jobs: Arc<Jobs>, rx: Arc<tokio::sync::Mutex<mpsc::UnboundedReceiver<String>>>) {
    loop {
        let Some(id) = rx.lock().await.recv().await else {
            return;
        };
        let Some(cell) = jobs.get(&id) else {
            continue;
        };
        let jobs = jobs.clone();
        let _ = tokio::task::spawn_blocking(move || jobs.run(&cell)).await;
    }
}

fn save(dir: &Path, stored: &Stored) -> std::io::Result<()> {
    let text = serde_json::to_string(stored).map_err(std::io::Error::other)?;
    let tmp = dir.join(format!("{}.json.tmp", stored.status.id));
    std::fs::write(&tmp, text)?;
    std::fs::rename(&tmp, dir.join(format!("{}.json", stored.status.id)))
}

fn load_dir(dir: &Path) -> std::io::Result<Vec<(String, Arc<JobCell>)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_none_or(|e| e != "json") {
            continue;
        }
        let text = std::fs::read_to_string(&path)?;
        match serde_json::from_str::<Stored>(&text) {
            Ok(s) => out.push((s.status.id.clone(), JobCell::new(s.status, None, Some(Arc::new(s.result))))),
            Err(e) => eprintln!("skipping {}: {e}", path.display()),
        }
    }
    Ok(out)
}
