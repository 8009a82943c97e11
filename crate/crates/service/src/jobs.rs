//! Asynchronous pipeline jobs on a fixed pool of worker threads.
//!
//! A job moves Pending -> Running -> Done | Failed and never backwards;
//! within Running, (stage, progress) only increases. Updates that would go
//! backwards (e.g. progress callbacks from workers finishing out of order)
//! are dropped. Job records live in memory; finished entries are in the
//! gallery.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::runner::{run, RunConfig, RunRequest, Stage};
use crate::store::{GalleryEntry, GalleryStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum JobState {
    Pending,
    Running { stage: Stage, progress: f64 },
    Done { entry: Box<GalleryEntry> },
    Failed { reason: String },
}

impl JobState {
    pub fn is_terminal(&self) -> bool {
        matches!(self, JobState::Done { .. } | JobState::Failed { .. })
    }

    fn phase(&self) -> u8 {
        match self {
            JobState::Pending => 0,
            JobState::Running { .. } => 1,
            JobState::Done { .. } | JobState::Failed { .. } => 2,
        }
    }

    /// Whether moving from `self` to `next` keeps the order.
    pub fn can_advance_to(&self, next: &JobState) -> bool {
        match (self, next) {
            (
                JobState::Running { stage: s0, progress: p0 },
                JobState::Running { stage: s1, progress: p1 },
            ) => (s1, *p1) > (s0, *p0) || (s1 == s0 && p1 == p0),
            _ => !self.is_terminal() && next.phase() > self.phase(),
        }
    }
}

/// Produces an unsaved gallery entry for a request.
pub trait JobRunner: Send + Sync {
    fn run(
        &self,
        request: &RunRequest,
        progress: &(dyn Fn(Stage, f64) + Sync),
    ) -> Result<GalleryEntry, String>;
}

/// The real pipeline.
pub struct PipelineRunner {
    pub config: RunConfig,
}

impl JobRunner for PipelineRunner {
    fn run(
        &self,
        request: &RunRequest,
        progress: &(dyn Fn(Stage, f64) + Sync),
    ) -> Result<GalleryEntry, String> {
        run(request, &self.config, progress)
            .map(|out| out.entry)
            .map_err(|e| e.to_string())
    }
}

struct Shared {
    jobs: RwLock<HashMap<String, JobState>>,
    store: Arc<GalleryStore>,
    runner: Arc<dyn JobRunner>,
}

impl Shared {
    fn advance(&self, id: &str, next: JobState) -> bool {
        let mut jobs = self.jobs.write().unwrap();
        match jobs.get_mut(id) {
            Some(state) if state.can_advance_to(&next) => {
                *state = next;
                true
            }
            _ => false,
        }
    }

    fn execute(&self, id: &str, request: &RunRequest) {
        self.advance(
            id,
            JobState::Running {
                stage: Stage::Prompting,
                progress: 0.0,
            },
        );
        let progress = |stage: Stage, progress: f64| {
            self.advance(
                id,
                JobState::Running {
                    stage,
                    progress: progress.clamp(0.0, 1.0),
                },
            );
        };
        let result = catch_unwind(AssertUnwindSafe(|| self.runner.run(request, &progress)))
            .unwrap_or_else(|_| Err("job panicked".to_owned()))
            .and_then(|mut entry| {
                progress(Stage::Storing, 0.0);
                entry.id = self.store.put(entry.clone()).map_err(|e| e.to_string())?;
                Ok(entry)
            });
        let last = match result {
            Ok(entry) => JobState::Done { entry: Box::new(entry) },
            Err(reason) => {
                log::warn!("job {id} failed: {reason}");
                JobState::Failed { reason }
            }
        };
        self.advance(id, last);
    }
}

type Queue = Arc<Mutex<Receiver<(String, RunRequest)>>>;

pub struct JobManager {
    shared: Arc<Shared>,
    sender: Mutex<Option<Sender<(String, RunRequest)>>>,
    workers: Vec<JoinHandle<()>>,
    next_id: AtomicU64,
}

impl JobManager {
    pub fn new(workers: usize, runner: Arc<dyn JobRunner>, store: Arc<GalleryStore>) -> Self {
        let shared = Arc::new(Shared {
            jobs: RwLock::new(HashMap::new()),
            store,
            runner,
        });
        let (tx, rx) = mpsc::channel();
        let queue: Queue = Arc::new(Mutex::new(rx));
        let workers = (0..workers.max(1))
            .map(|i| {
                let queue = Arc::clone(&queue);
                let shared = Arc::clone(&shared);
                std::thread::Builder::new()
                    .name(format!("gencolor-job-{i}"))
                    .spawn(move || loop {
                        let next = queue.lock().unwrap().recv();
                        let Ok((id, request)) = next else { break };
                        shared.execute(&id, &request);
                    })
                    .expect("spawn worker")
            })
            .collect();
        Self {
            shared,
            sender: Mutex::new(Some(tx)),
            workers,
            next_id: AtomicU64::new(1),
        }
    }

    /// Queues `request` and returns its job id immediately.
    pub fn submit(&self, request: RunRequest) -> String {
        let id = format!("job-{:06}", self.next_id.fetch_add(1, Ordering::Relaxed));
        self.shared.jobs.write().unwrap().insert(id.clone(), JobState::Pending);
        let sender = self.sender.lock().unwrap();
        let sent = sender.as_ref().map(|tx| tx.send((id.clone(), request.clone())));
        if !matches!(sent, Some(Ok(()))) {
            self.shared.advance(
                &id,
                JobState::Failed {
                    reason: "job manager is shutting down".to_owned(),
                },
            );
        }
        id
    }

    pub fn status(&self, id: &str) -> Option<JobState> {
        self.shared.jobs.read().unwrap().get(id).cloned()
    }

    /// Polls until the job is terminal or `timeout` passes.
    pub fn wait(&self, id: &str, timeout: Duration) -> Option<JobState> {
        let deadline = Instant::now() + timeout;
        loop {
            let state = self.status(id)?;
            if state.is_terminal() || Instant::now() >= deadline {
                return Some(state);
            }
            std::thread::sleep(Duration::from_millis(10));
        }
    }

    pub fn store(&self) -> &Arc<GalleryStore> {
        &self.shared.store
    }
}

impl Drop for JobManager {
    fn drop(&mut self) {
        self.sender.lock().unwrap().take();
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}
