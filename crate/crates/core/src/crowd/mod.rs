//! Two-worker annotation protocol with covert gold-standard screening.
//!
//! Every state change is an [`Event`]. [`Store::apply`] is the only code that
//! mutates state, so replaying a journal through it rebuilds the store exactly.
//! Commands ([`Store::next_task`], [`Store::submit_answer`], ...) validate,
//! decide, and then emit events.

mod events;
mod gold;
mod sim;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depth::Pixel;
use crate::error::{invalid, Result};
use crate::loss::{PairQuery, Relation};
use crate::pairs::PairRecord;
use crate::sampling::{Sampler, SamplerConfig};

pub use events::{read_events, Event};
pub use gold::{load_gold_bank, read_gold_bank, save_gold_bank, write_gold_bank, GoldRecord, GOLD_HEADER};
pub use sim::{gold_rejection_exact, gold_rejection_monte_carlo, simulate, SimConfig, SimReport, WorkerGroup};

pub type TaskId = u64;

/// Protocol refusals, kept apart so transports can map them to status codes.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CrowdError {
    #[error("unknown worker {0}")]
    UnknownWorker(String),
    #[error("worker {0} has been rejected")]
    WorkerRejected(String),
    #[error("unknown task {0}")]
    UnknownTask(TaskId),
    #[error("task {task} was not served to worker {worker}")]
    NotServed { worker: String, task: TaskId },
    #[error("worker {worker} already answered task {task}")]
    DuplicateAnswer { worker: String, task: TaskId },
    #[error("token {token} does not match the serving of task {task}")]
    BadToken { task: TaskId, token: u64 },
    #[error("duplicate image id {0}")]
    DuplicateImage(String),
    #[error("event rejected: {0}")]
    BadEvent(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Choice {
    Point1Closer,
    Point2Closer,
    HardToTell,
}

impl Choice {
    /// Key a worker presses: 1, 2 or 3.
    pub fn code(self) -> u8 {
        match self {
            Choice::Point1Closer => 1,
            Choice::Point2Closer => 2,
            Choice::HardToTell => 3,
        }
    }

    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            1 => Some(Choice::Point1Closer),
            2 => Some(Choice::Point2Closer),
            3 => Some(Choice::HardToTell),
            _ => None,
        }
    }

    pub fn is_decisive(self) -> bool {
        self != Choice::HardToTell
    }

    /// Relation of point 1 to point 2; `None` for hard-to-tell.
    pub fn relation(self) -> Option<Relation> {
        match self {
            Choice::Point1Closer => Some(Relation::Closer),
            Choice::Point2Closer => Some(Relation::Farther),
            Choice::HardToTell => None,
        }
    }

    pub fn from_relation(r: Relation) -> Self {
        match r {
            Relation::Closer => Choice::Point1Closer,
            Relation::Farther => Choice::Point2Closer,
            Relation::Equal => Choice::HardToTell,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageRef {
    pub id: String,
    pub width: usize,
    pub height: usize,
}

impl ImageRef {
    pub fn new(id: impl Into<String>, width: usize, height: usize) -> Self {
        Self {
            id: id.into(),
            width,
            height,
        }
    }

    fn contains(&self, p: Pixel) -> bool {
        p.row < self.height && p.col < self.width
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Normal,
    Gold,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskState {
    Open,
    PendingSecond,
    Accepted,
    Discarded,
}

/// One serving of a task to a worker. A void assignment no longer counts
/// towards the task's two slots but still blocks re-serving to that worker.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub worker: String,
    pub token: u64,
    pub answer: Option<Choice>,
    #[serde(default)]
    pub void: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub id: TaskId,
    pub image: ImageRef,
    pub p1: Pixel,
    pub p2: Pixel,
    pub kind: TaskKind,
    /// Present exactly when `kind` is gold.
    pub gold_answer: Option<Choice>,
    pub assignments: Vec<Assignment>,
    pub state: TaskState,
}

impl AnnotationTask {
    fn active(&self) -> impl Iterator<Item = &Assignment> {
        self.assignments.iter().filter(|a| !a.void)
    }

    fn served_to(&self, worker: &str) -> bool {
        self.assignments.iter().any(|a| a.worker == worker)
    }

    /// Agreed relation of an accepted task.
    pub fn consensus(&self) -> Option<Relation> {
        if self.state != TaskState::Accepted {
            return None;
        }
        self.active().next().and_then(|a| a.answer).and_then(Choice::relation)
    }

    fn check(&self) -> Result<()> {
        if !self.image.contains(self.p1) || !self.image.contains(self.p2) || self.p1 == self.p2 {
            return Err(invalid(format!("task {} has invalid points", self.id)));
        }
        if (self.kind == TaskKind::Gold) != self.gold_answer.is_some() {
            return Err(invalid(format!("task {} gold answer does not match its kind", self.id)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkerStatus {
    Active,
    Rejected,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerRecord {
    pub id: String,
    pub gold_answered: u64,
    pub gold_correct: u64,
    pub status: WorkerStatus,
    /// Task served and not yet answered; re-served on retry.
    pub outstanding: Option<(TaskId, u64)>,
}

impl WorkerRecord {
    pub fn gold_accuracy(&self) -> Option<f64> {
        (self.gold_answered > 0).then(|| self.gold_correct as f64 / self.gold_answered as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub worker: String,
    pub task: TaskId,
    pub choice: Choice,
    pub response_ms: u64,
    /// Milliseconds since the Unix epoch, as supplied by the caller.
    pub timestamp: u64,
}

fn default_p_gold() -> f64 {
    0.1
}
fn default_min_probes() -> u64 {
    20
}
fn default_min_accuracy() -> f64 {
    0.85
}
fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrowdConfig {
    #[serde(default = "default_p_gold")]
    pub p_gold: f64,
    /// Gold answers needed before the accuracy rule may reject.
    #[serde(default = "default_min_probes")]
    pub min_gold_probes: u64,
    #[serde(default = "default_min_accuracy")]
    pub min_gold_accuracy: f64,
    /// When false, gold answers are tallied but never reject.
    #[serde(default = "default_true")]
    pub gold_filter: bool,
    #[serde(default)]
    pub seed: u64,
}

impl Default for CrowdConfig {
    fn default() -> Self {
        Self {
            p_gold: default_p_gold(),
            min_gold_probes: default_min_probes(),
            min_gold_accuracy: default_min_accuracy(),
            gold_filter: true,
            seed: 0,
        }
    }
}

impl CrowdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_gold) {
            return Err(invalid(format!("p_gold {} outside [0, 1]", self.p_gold)));
        }
        if !(0.0..=1.0).contains(&self.min_gold_accuracy) {
            return Err(invalid(format!("gold accuracy {} outside [0, 1]", self.min_gold_accuracy)));
        }
        Ok(())
    }

    fn should_reject(&self, w: &WorkerRecord) -> bool {
        self.gold_filter
            && w.gold_answered >= self.min_gold_probes
            && w.gold_accuracy().is_some_and(|a| a < self.min_gold_accuracy)
    }
}

/// Everything the journal determines. Two stores built from the same events
/// compare equal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrowdState {
    pub config: CrowdConfig,
    pub tasks: Vec<AnnotationTask>,
    pub workers: BTreeMap<String, WorkerRecord>,
    pub answers: Vec<Answer>,
    /// Number of servings so far; the next serving's token.
    pub serves: u64,
    pub registrations: u64,
}

/// Lookup structures derived from [`CrowdState`].
#[derive(Default)]
struct Index {
    /// Normal tasks with no active assignment.
    fresh: BTreeSet<TaskId>,
    /// Normal tasks with exactly one active assignment.
    half: BTreeSet<TaskId>,
    gold: Vec<TaskId>,
    gold_served: HashMap<String, HashSet<TaskId>>,
    images: HashSet<String>,
}

/// Counts for monitoring.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrowdStats {
    pub tasks: usize,
    pub gold_tasks: usize,
    pub open: usize,
    pub pending_second: usize,
    pub accepted: usize,
    pub discarded: usize,
    pub workers: usize,
    pub rejected_workers: usize,
    pub answers: usize,
    pub median_response_ms: Option<u64>,
}

/// What a successful submission changed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitOutcome {
    pub task_state: TaskState,
    pub worker_status: WorkerStatus,
}

pub struct Store {
    state: CrowdState,
    index: Index,
    journal: Option<Box<dyn Write + Send>>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("state", &self.state).finish_non_exhaustive()
    }
}

fn mix(seed: u64, salt: u64, n: u64) -> ChaCha8Rng {
    let k = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ n.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    ChaCha8Rng::seed_from_u64(k)
}

const SALT_SERVE: u64 = 1;
const SALT_WORKER: u64 = 2;

impl Store {
    /// Empty store; with a journal, the configuration is its first line.
    pub fn new(config: CrowdConfig, journal: Option<Box<dyn Write + Send>>) -> Result<Self> {
        config.validate()?;
        let mut store = Self {
            state: CrowdState {
                config: config.clone(),
                tasks: Vec::new(),
                workers: BTreeMap::new(),
                answers: Vec::new(),
                serves: 0,
                registrations: 0,
            },
            index: Index::default(),
            journal,
        };
        store.write(&Event::Configured { config })?;
        Ok(store)
    }

    /// Rebuilds a store from journal events; the first must configure it.
    pub fn replay(events: impl IntoIterator<Item = Event>) -> Result<Self> {
        let mut it = events.into_iter();
        let config = match it.next() {
            Some(Event::Configured { config }) => config,
            _ => return Err(CrowdError::BadEvent("journal must start with a configuration".into()).into()),
        };
        let mut store = Self::new(config, None)?;
        for ev in it {
            store.apply(&ev)?;
        }
        Ok(store)
    }

    /// Store equal to the one `state` was taken from.
    pub fn from_state(state: CrowdState) -> Result<Self> {
        state.config.validate()?;
        let mut store = Self {
            state,
            index: Index::default(),
            journal: None,
        };
        for id in 0..store.state.tasks.len() as TaskId {
            let t = &store.state.tasks[id as usize];
            if t.id != id {
                return Err(CrowdError::BadEvent(format!("task at position {id} has id {}", t.id)).into());
            }
            if t.kind == TaskKind::Gold {
                store.index.gold.push(id);
                for a in &t.assignments {
                    store.index.gold_served.entry(a.worker.clone()).or_default().insert(id);
                }
            } else {
                store.index.images.insert(t.image.id.clone());
            }
            store.reindex(id);
        }
        Ok(store)
    }

    /// Appends future events to `journal`.
    pub fn attach_journal(&mut self, journal: Box<dyn Write + Send>) {
        self.journal = Some(journal);
    }

    pub fn state(&self) -> &CrowdState {
        &self.state
    }

    pub fn config(&self) -> &CrowdConfig {
        &self.state.config
    }

    pub fn task(&self, id: TaskId) -> Option<&AnnotationTask> {
        self.state.tasks.get(id as usize)
    }

    pub fn worker(&self, id: &str) -> Option<&WorkerRecord> {
        self.state.workers.get(id)
    }

    fn write(&mut self, ev: &Event) -> Result<()> {
        if let Some(j) = self.journal.as_mut() {
            serde_json::to_writer(&mut *j, ev)?;
            j.write_all(b"\n")?;
            j.flush()?;
        }
        Ok(())
    }

    /// Applies then journals; a rejected event leaves both untouched.
    fn emit(&mut self, ev: Event) -> Result<()> {
        self.apply(&ev)?;
        self.write(&ev)
    }

    fn reindex(&mut self, id: TaskId) {
        let t = &self.state.tasks[id as usize];
        self.index.fresh.remove(&id);
        self.index.half.remove(&id);
        if t.kind != TaskKind::Normal || !matches!(t.state, TaskState::Open | TaskState::PendingSecond) {
            return;
        }
        match t.active().count() {
            0 => {
                self.index.fresh.insert(id);
            }
            1 => {
                self.index.half.insert(id);
            }
            _ => {}
        }
    }

    fn bad(msg: impl Into<String>) -> crate::Error {
        CrowdError::BadEvent(msg.into()).into()
    }

    /// The single mutator. Validates fully before changing anything.
    pub fn apply(&mut self, ev: &Event) -> Result<()> {
        match ev {
            Event::Configured { .. } => Err(Self::bad("configuration may only open a journal")),
            Event::TaskCreated { task } => {
                task.check()?;
                if task.id != self.state.tasks.len() as TaskId {
                    return Err(Self::bad(format!("task id {} out of sequence", task.id)));
                }
                if !task.assignments.is_empty() || task.state != TaskState::Open {
                    return Err(Self::bad("new tasks start open and unassigned"));
                }
                if task.kind == TaskKind::Normal {
                    if !self.index.images.insert(task.image.id.clone()) {
                        return Err(CrowdError::DuplicateImage(task.image.id.clone()).into());
                    }
                } else {
                    self.index.gold.push(task.id);
                }
                self.state.tasks.push(task.clone());
                self.reindex(task.id);
                Ok(())
            }
            Event::WorkerRegistered { worker } => {
                if self.state.workers.contains_key(worker) {
                    return Err(Self::bad(format!("worker {worker} already registered")));
                }
                self.state.workers.insert(
                    worker.clone(),
                    WorkerRecord {
                        id: worker.clone(),
                        gold_answered: 0,
                        gold_correct: 0,
                        status: WorkerStatus::Active,
                        outstanding: None,
                    },
                );
                self.state.registrations += 1;
                Ok(())
            }
            Event::Served { worker, task, token } => {
                let w = self.active_worker(worker)?;
                if w.outstanding.is_some() {
                    return Err(Self::bad(format!("worker {worker} already holds a task")));
                }
                if *token != self.state.serves {
                    return Err(Self::bad(format!("token {token} out of sequence")));
                }
                let t = self.task(*task).ok_or(CrowdError::UnknownTask(*task))?;
                if t.served_to(worker) {
                    return Err(Self::bad(format!("task {task} already served to {worker}")));
                }
                if t.kind == TaskKind::Normal
                    && !(self.index.fresh.contains(task) || self.index.half.contains(task))
                {
                    return Err(Self::bad(format!("task {task} has no free slot")));
                }
                let gold = t.kind == TaskKind::Gold;
                self.state.tasks[*task as usize].assignments.push(Assignment {
                    worker: worker.clone(),
                    token: *token,
                    answer: None,
                    void: false,
                });
                self.state.workers.get_mut(worker).expect("checked").outstanding = Some((*task, *token));
                self.state.serves += 1;
                if gold {
                    self.index.gold_served.entry(worker.clone()).or_default().insert(*task);
                }
                self.reindex(*task);
                Ok(())
            }
            Event::Answered { answer } => {
                self.check_answer(answer, None)?;
                let id = answer.task;
                let task = &mut self.state.tasks[id as usize];
                let slot = task
                    .assignments
                    .iter_mut()
                    .find(|a| a.worker == answer.worker && !a.void)
                    .expect("checked");
                slot.answer = Some(answer.choice);
                let worker = self.state.workers.get_mut(&answer.worker).expect("checked");
                worker.outstanding = None;
                match task.kind {
                    TaskKind::Gold => {
                        worker.gold_answered += 1;
                        if task.gold_answer == Some(answer.choice) {
                            worker.gold_correct += 1;
                        }
                    }
                    TaskKind::Normal => {
                        let given: Vec<Choice> = task.active().filter_map(|a| a.answer).collect();
                        task.state = match given.as_slice() {
                            [_] => TaskState::PendingSecond,
                            [a, b] if a.is_decisive() && a == b => TaskState::Accepted,
                            _ => TaskState::Discarded,
                        };
                    }
                }
                self.state.answers.push(answer.clone());
                self.reindex(id);
                Ok(())
            }
            Event::WorkerRejected { worker } => {
                self.active_worker(worker)?;
                let w = self.state.workers.get_mut(worker).expect("checked");
                w.status = WorkerStatus::Rejected;
                w.outstanding = None;
                let mut touched = Vec::new();
                for t in self.state.tasks.iter_mut() {
                    if t.kind != TaskKind::Normal || !t.active().any(|a| &a.worker == worker) {
                        continue;
                    }
                    match t.state {
                        TaskState::Accepted => {
                            for a in t.assignments.iter_mut() {
                                a.void = true;
                            }
                            t.state = TaskState::Open;
                        }
                        TaskState::Open | TaskState::PendingSecond => {
                            for a in t.assignments.iter_mut().filter(|a| &a.worker == worker) {
                                a.void = true;
                            }
                            let answered = t.active().filter(|a| a.answer.is_some()).count();
                            t.state = if answered == 0 { TaskState::Open } else { TaskState::PendingSecond };
                        }
                        TaskState::Discarded => continue,
                    }
                    touched.push(t.id);
                }
                for id in touched {
                    self.reindex(id);
                }
                Ok(())
            }
        }
    }

    fn active_worker(&self, worker: &str) -> Result<&WorkerRecord> {
        let w = self
            .state
            .workers
            .get(worker)
            .ok_or_else(|| CrowdError::UnknownWorker(worker.to_string()))?;
        if w.status == WorkerStatus::Rejected {
            return Err(CrowdError::WorkerRejected(worker.to_string()).into());
        }
        Ok(w)
    }

    fn check_answer(&self, answer: &Answer, token: Option<u64>) -> Result<()> {
        self.active_worker(&answer.worker)?;
        let task = self.task(answer.task).ok_or(CrowdError::UnknownTask(answer.task))?;
        let slot = task.assignments.iter().find(|a| a.worker == answer.worker);
        match slot {
            None => Err(CrowdError::NotServed {
                worker: answer.worker.clone(),
                task: answer.task,
            }
            .into()),
            Some(a) if a.answer.is_some() => Err(CrowdError::DuplicateAnswer {
                worker: answer.worker.clone(),
                task: answer.task,
            }
            .into()),
            Some(a) if a.void => Err(CrowdError::NotServed {
                worker: answer.worker.clone(),
                task: answer.task,
            }
            .into()),
            Some(a) => match token {
                Some(t) if t != a.token => Err(CrowdError::BadToken { task: answer.task, token: t }.into()),
                _ => Ok(()),
            },
        }
    }

    /// Adds one normal task per image, its pair drawn by a sampler built from
    /// `sampler` with that image's size, plus one gold task per bank item.
    pub fn create_tasks(
        &mut self,
        images: &[ImageRef],
        sampler: &SamplerConfig,
        gold: &[(ImageRef, PairQuery)],
    ) -> Result<Vec<TaskId>> {
        if images.is_empty() {
            return Err(invalid("task creation needs at least one image"));
        }
        let mut seen = HashSet::new();
        for im in images {
            if !seen.insert(&im.id) || self.index.images.contains(&im.id) {
                return Err(CrowdError::DuplicateImage(im.id.clone()).into());
            }
        }
        let mut tasks = Vec::with_capacity(images.len() + gold.len());
        let mut next = self.state.tasks.len() as TaskId;
        for (k, im) in images.iter().enumerate() {
            let cfg = SamplerConfig {
                width: im.width,
                height: im.height,
                seed: mix(sampler.seed, 0, k as u64).random(),
                ..sampler.clone()
            };
            let (p1, p2) = Sampler::new(cfg)?.next_pair()?;
            tasks.push(Self::fresh_task(next, im.clone(), p1, p2, None));
            next += 1;
        }
        for (im, q) in gold {
            tasks.push(Self::fresh_task(next, im.clone(), q.i, q.j, Some(Choice::from_relation(q.r))));
            next += 1;
        }
        for t in &tasks {
            t.check()?;
        }
        self.add_tasks(tasks)
    }

    fn fresh_task(id: TaskId, image: ImageRef, p1: Pixel, p2: Pixel, gold: Option<Choice>) -> AnnotationTask {
        AnnotationTask {
            id,
            image,
            p1,
            p2,
            kind: if gold.is_some() { TaskKind::Gold } else { TaskKind::Normal },
            gold_answer: gold,
            assignments: Vec::new(),
            state: TaskState::Open,
        }
    }

    /// Adds pre-built tasks whose ids continue the current sequence.
    pub fn add_tasks(&mut self, tasks: Vec<AnnotationTask>) -> Result<Vec<TaskId>> {
        let mut ids = Vec::with_capacity(tasks.len());
        for task in tasks {
            ids.push(task.id);
            self.emit(Event::TaskCreated { task })?;
        }
        Ok(ids)
    }

    /// Issues a fresh opaque worker token.
    pub fn register_worker(&mut self) -> Result<String> {
        let mut n = self.state.registrations;
        let id = loop {
            let id = format!("w{:016x}", mix(self.state.config.seed, SALT_WORKER, n).random::<u64>());
            if !self.state.workers.contains_key(&id) {
                break id;
            }
            n += 1;
        };
        self.emit(Event::WorkerRegistered { worker: id.clone() })?;
        Ok(id)
    }

    /// Registers a worker under a caller-chosen id.
    pub fn register_named(&mut self, id: &str) -> Result<()> {
        self.emit(Event::WorkerRegistered { worker: id.to_string() })
    }

    /// The task this worker should answer next, with its single-use token.
    /// A served but unanswered task is returned again. `None` means no work.
    ///
    /// A gold task is drawn with probability `p_gold` when one remains that
    /// this worker has not seen; otherwise an open normal task, preferring
    /// tasks that already hold one answer.
    pub fn next_task(&mut self, worker: &str) -> Result<Option<(TaskId, u64)>> {
        let w = self.active_worker(worker)?;
        if let Some(held) = w.outstanding {
            return Ok(Some(held));
        }
        let token = self.state.serves;
        let mut rng = mix(self.state.config.seed, SALT_SERVE, token);
        let want_gold = rng.random::<f64>() < self.state.config.p_gold;
        let normal = self.pick_normal(worker);
        let pick = if want_gold {
            self.pick_gold(worker, &mut rng).or(normal)
        } else {
            normal
        };
        let Some(task) = pick else {
            return Ok(None);
        };
        self.emit(Event::Served {
            worker: worker.to_string(),
            task,
            token,
        })?;
        Ok(Some((task, token)))
    }

    fn pick_normal(&self, worker: &str) -> Option<TaskId> {
        let free = |id: &&TaskId| !self.state.tasks[**id as usize].served_to(worker);
        self.index
            .half
            .iter()
            .find(free)
            .or_else(|| self.index.fresh.iter().find(free))
            .copied()
    }

    fn pick_gold(&self, worker: &str, rng: &mut ChaCha8Rng) -> Option<TaskId> {
        let gold = &self.index.gold;
        if gold.is_empty() {
            return None;
        }
        let seen = self.index.gold_served.get(worker);
        let start = rng.random_range(0..gold.len());
        (0..gold.len())
            .map(|k| gold[(start + k) % gold.len()])
            .find(|id| seen.is_none_or(|s| !s.contains(id)))
    }

    /// Records an answer; a gold answer may reject its worker, which reverts
    /// every accepted task they contributed to.
    pub fn submit_answer(&mut self, answer: Answer, token: Option<u64>) -> Result<SubmitOutcome> {
        self.check_answer(&answer, token)?;
        let (task, worker) = (answer.task, answer.worker.clone());
        self.emit(Event::Answered { answer })?;
        let record = &self.state.workers[&worker];
        if self.state.config.should_reject(record) {
            self.emit(Event::WorkerRejected { worker: worker.clone() })?;
        }
        Ok(SubmitOutcome {
            task_state: self.state.tasks[task as usize].state,
            worker_status: self.state.workers[&worker].status,
        })
    }

    /// Accepted tasks in id order as pair records.
    pub fn export(&self) -> Vec<PairRecord> {
        self.state
            .tasks
            .iter()
            .filter_map(|t| {
                let r = t.consensus()?;
                Some(PairRecord {
                    image_id: t.image.id.clone(),
                    query: PairQuery::new(t.p1, t.p2, r).expect("task points validated"),
                })
            })
            .collect()
    }

    pub fn stats(&self) -> CrowdStats {
        let mut s = CrowdStats {
            tasks: self.state.tasks.len(),
            workers: self.state.workers.len(),
            answers: self.state.answers.len(),
            ..CrowdStats::default()
        };
        for t in &self.state.tasks {
            if t.kind == TaskKind::Gold {
                s.gold_tasks += 1;
                continue;
            }
            match t.state {
                TaskState::Open => s.open += 1,
                TaskState::PendingSecond => s.pending_second += 1,
                TaskState::Accepted => s.accepted += 1,
                TaskState::Discarded => s.discarded += 1,
            }
        }
        s.rejected_workers = self
            .state
            .workers
            .values()
            .filter(|w| w.status == WorkerStatus::Rejected)
            .count();
        let mut times: Vec<u64> = self.state.answers.iter().map(|a| a.response_ms).collect();
        if !times.is_empty() {
            let mid = times.len() / 2;
            s.median_response_ms = Some(*times.select_nth_unstable(mid).1);
        }
        s
    }

    /// Checks the protocol invariants; used by tests and after replay.
    pub fn verify(&self) -> Result<()> {
        for t in &self.state.tasks {
            if t.kind == TaskKind::Gold {
                continue;
            }
            let active: Vec<&Assignment> = t.active().collect();
            let answered: Vec<Choice> = active.iter().filter_map(|a| a.answer).collect();
            let workers: BTreeSet<&str> = t.assignments.iter().map(|a| a.worker.as_str()).collect();
            let ok = workers.len() == t.assignments.len()
                && active.len() <= 2
                && match t.state {
                    TaskState::Open => answered.is_empty(),
                    TaskState::PendingSecond => answered.len() == 1,
                    TaskState::Accepted => {
                        answered.len() == 2
                            && answered[0] == answered[1]
                            && answered[0].is_decisive()
                            && active
                                .iter()
                                .all(|a| self.state.workers[&a.worker].status == WorkerStatus::Active)
                    }
                    TaskState::Discarded => answered.len() == 2,
                };
            if !ok {
                return Err(Self::bad(format!("task {} violates the protocol: {t:?}", t.id)));
            }
        }
        for w in self.state.workers.values() {
            if self.state.config.should_reject(w) != (w.status == WorkerStatus::Rejected)
                && self.state.config.gold_filter
            {
                return Err(Self::bad(format!("worker {} status disagrees with the gold rule", w.id)));
            }
        }
        Ok(())
    }
}
