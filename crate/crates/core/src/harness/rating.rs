//! Human rating: task creation, the append-only store and aggregation.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{subsample, SampleSize};
use crate::mr::Example;

/// Raters per task.
pub const RATERS_PER_TASK: usize = 3;
pub const FLUENCY_RANGE: std::ops::RangeInclusive<u8> = 1..=5;

#[derive(Debug, Error)]
pub enum RatingError {
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("rater `{rater}` already rated task `{task}`")]
    Duplicate { task: String, rater: String },
    #[error("{0}")]
    Domain(String),
    #[error("store ledger line {line}: {msg}")]
    Ledger { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Accuracy,
    Fluency,
    Pairwise,
}

/// What the rater sees. Pairwise texts carry no system labels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TaskPayload {
    Accuracy { gold: String, predicted: String },
    Fluency { predicted: String },
    Pairwise { first: String, second: String },
}

impl TaskPayload {
    pub fn kind(&self) -> TaskKind {
        match self {
            TaskPayload::Accuracy { .. } => TaskKind::Accuracy,
            TaskPayload::Fluency { .. } => TaskKind::Fluency,
            TaskPayload::Pairwise { .. } => TaskKind::Pairwise,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingTask {
    pub id: String,
    pub payload: TaskPayload,
    /// Index of the rated example in the source corpus.
    pub example: usize,
    pub system: String,
    /// Pairwise only: whether the system output is shown first. Hidden
    /// from raters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_first: Option<bool>,
}

/// The rater-facing part of a task.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskView {
    pub id: String,
    #[serde(flatten)]
    pub payload: TaskPayload,
}

impl RatingTask {
    pub fn view(&self) -> TaskView {
        TaskView {
            id: self.id.clone(),
            payload: self.payload.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccuracyVote {
    Accurate,
    Inaccurate,
}

/// How the first text compares with the second.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preference {
    MuchBetter,
    Better,
    SlightlyBetter,
    AboutTheSame,
    SlightlyWorse,
    Worse,
    MuchWorse,
}

impl Preference {
    pub const ALL: [Preference; 7] = [
        Preference::MuchBetter,
        Preference::Better,
        Preference::SlightlyBetter,
        Preference::AboutTheSame,
        Preference::SlightlyWorse,
        Preference::Worse,
        Preference::MuchWorse,
    ];

    /// The same judgement with the two texts swapped.
    pub fn flipped(self) -> Self {
        Self::ALL[6 - self as usize]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RatingValue {
    Accuracy(AccuracyVote),
    Fluency(u8),
    Pairwise(Preference),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub task_id: String,
    pub rater: String,
    pub value: RatingValue,
}

/// Checks that `value` suits a task of `kind`.
pub fn check_domain(kind: TaskKind, value: RatingValue) -> Result<(), RatingError> {
    match (kind, value) {
        (TaskKind::Accuracy, RatingValue::Accuracy(_)) | (TaskKind::Pairwise, RatingValue::Pairwise(_)) => Ok(()),
        (TaskKind::Fluency, RatingValue::Fluency(v)) if FLUENCY_RANGE.contains(&v) => Ok(()),
        (TaskKind::Fluency, RatingValue::Fluency(v)) => Err(RatingError::Domain(format!("fluency {v} outside 1..=5"))),
        (kind, value) => Err(RatingError::Domain(format!("{value:?} is not a valid {kind:?} rating"))),
    }
}

/// Predictions of one system, aligned with the examples.
#[derive(Clone, Debug)]
pub struct SystemOutputs {
    pub name: String,
    pub predictions: Vec<String>,
}

/// Sample `n` examples and create, for each system, one accuracy, one
/// fluency and one pairwise (system against gold) task per example.
///
/// Pairwise order is drawn per task. Tasks are shuffled and given opaque
/// sequential ids.
pub fn create_rating_tasks(
    examples: &[Example],
    systems: &[SystemOutputs],
    n: usize,
    seed: u64,
) -> Result<Vec<RatingTask>, RatingError> {
    for s in systems {
        if s.predictions.len() != examples.len() {
            return Err(RatingError::Domain(format!(
                "system `{}` has {} predictions for {} examples",
                s.name,
                s.predictions.len(),
                examples.len()
            )));
        }
    }
    let indices: Vec<usize> = (0..examples.len()).collect();
    let chosen = subsample(&indices, SampleSize::Count(n), seed).map_err(|e| RatingError::Domain(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tasks = Vec::with_capacity(chosen.len() * systems.len() * 3);
    for &i in &chosen {
        let gold = &examples[i].reference;
        for s in systems {
            let pred = &s.predictions[i];
            let mut push = |payload, system_first| {
                tasks.push(RatingTask {
                    id: String::new(),
                    payload,
                    example: i,
                    system: s.name.clone(),
                    system_first,
                })
            };
            push(
                TaskPayload::Accuracy {
                    gold: gold.clone(),
                    predicted: pred.clone(),
                },
                None,
            );
            push(TaskPayload::Fluency { predicted: pred.clone() }, None);
            let system_first = rng.random_bool(0.5);
            let (first, second) = if system_first { (pred, gold) } else { (gold, pred) };
            push(
                TaskPayload::Pairwise {
                    first: first.clone(),
                    second: second.clone(),
                },
                Some(system_first),
            );
        }
    }
    tasks.shuffle(&mut rng);
    for (k, t) in tasks.iter_mut().enumerate() {
        t.id = format!("t{:05}", k + 1);
    }
    Ok(tasks)
}

/// `accurate` when at least two of the votes say so.
pub fn accuracy_verdict(votes: &[AccuracyVote]) -> bool {
    votes.iter().filter(|v| **v == AccuracyVote::Accurate).count() >= 2
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairwiseBucket {
    Level(Preference),
    NoMajority,
}

impl PairwiseBucket {
    pub fn all() -> impl Iterator<Item = PairwiseBucket> {
        Preference::ALL
            .into_iter()
            .map(PairwiseBucket::Level)
            .chain(std::iter::once(PairwiseBucket::NoMajority))
    }

    pub fn label(self) -> &'static str {
        match self {
            PairwiseBucket::Level(p) => match p {
                Preference::MuchBetter => "much better",
                Preference::Better => "better",
                Preference::SlightlyBetter => "slightly better",
                Preference::AboutTheSame => "about the same",
                Preference::SlightlyWorse => "slightly worse",
                Preference::Worse => "worse",
                Preference::MuchWorse => "much worse",
            },
            PairwiseBucket::NoMajority => "no majority",
        }
    }
}

/// The level chosen by a strict majority of the votes, if any.
pub fn pairwise_bucket(votes: &[Preference]) -> PairwiseBucket {
    for level in Preference::ALL {
        if 2 * votes.iter().filter(|v| **v == level).count() > votes.len() {
            return PairwiseBucket::Level(level);
        }
    }
    PairwiseBucket::NoMajority
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    /// Percent of complete accuracy tasks judged accurate.
    pub accuracy: Option<f64>,
    pub accuracy_tasks: usize,
    /// Mean of every fluency rating on complete tasks.
    pub fluency: Option<f64>,
    pub fluency_ratings: usize,
    /// Percent of complete pairwise tasks per bucket, from the system's
    /// side (system output compared with the other text).
    pub pairwise: BTreeMap<String, f64>,
    pub pairwise_tasks: usize,
    /// Tasks with fewer than three ratings, left out above.
    pub incomplete_tasks: usize,
}

/// Aggregate the ratings of `tasks`. Only tasks with exactly three ratings
/// count. Pairwise votes are turned to the system's perspective with the
/// hidden order key before the majority is taken.
pub fn aggregate(tasks: &[RatingTask], records: &[RatingRecord]) -> AggregateReport {
    let mut by_task: HashMap<&str, Vec<RatingValue>> = HashMap::new();
    for r in records {
        by_task.entry(r.task_id.as_str()).or_default().push(r.value);
    }
    let mut accurate = 0usize;
    let mut accuracy_tasks = 0usize;
    let mut fluency_sum = 0u64;
    let mut fluency_ratings = 0usize;
    let mut buckets: BTreeMap<PairwiseBucket, usize> = BTreeMap::new();
    let mut pairwise_tasks = 0usize;
    let mut incomplete = 0usize;
    for task in tasks {
        let values = by_task.get(task.id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        if values.len() != RATERS_PER_TASK {
            incomplete += 1;
            continue;
        }
        match task.payload.kind() {
            TaskKind::Accuracy => {
                let votes: Vec<AccuracyVote> = values
                    .iter()
                    .filter_map(|v| match v {
                        RatingValue::Accuracy(a) => Some(*a),
                        _ => None,
                    })
                    .collect();
                accuracy_tasks += 1;
                accurate += accuracy_verdict(&votes) as usize;
            }
            TaskKind::Fluency => {
                for v in values {
                    if let RatingValue::Fluency(f) = v {
                        fluency_sum += *f as u64;
                        fluency_ratings += 1;
                    }
                }
            }
            TaskKind::Pairwise => {
                let system_first = task.system_first.unwrap_or(true);
                let votes: Vec<Preference> = values
                    .iter()
                    .filter_map(|v| match v {
                        RatingValue::Pairwise(p) if system_first => Some(*p),
                        RatingValue::Pairwise(p) => Some(p.flipped()),
                        _ => None,
                    })
                    .collect();
                pairwise_tasks += 1;
                *buckets.entry(pairwise_bucket(&votes)).or_default() += 1;
            }
        }
    }
    let pct = |k: usize, n: usize| 100.0 * k as f64 / n as f64;
    AggregateReport {
        accuracy: (accuracy_tasks > 0).then(|| pct(accurate, accuracy_tasks)),
        accuracy_tasks,
        fluency: (fluency_ratings > 0).then(|| fluency_sum as f64 / fluency_ratings as f64),
        fluency_ratings,
        pairwise: if pairwise_tasks == 0 {
            BTreeMap::new()
        } else {
            PairwiseBucket::all()
                .map(|b| (b.label().to_string(), pct(buckets.get(&b).copied().unwrap_or(0), pairwise_tasks)))
                .collect()
        },
        pairwise_tasks,
        incomplete_tasks: incomplete,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "lowercase")]
enum LedgerEvent {
    Assign { task_id: String, rater: String },
    Rating(RatingRecord),
    /// The rater passed on the task; it is not a rating and frees the slot.
    Skip { task_id: String, rater: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub tasks: usize,
    pub closed: usize,
    pub ratings: usize,
    pub per_kind: BTreeMap<TaskKind, (usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitAck {
    pub task_id: String,
    pub ratings: usize,
    pub closed: bool,
}

/// Tasks plus an append-only JSON-lines ledger of assignments and ratings.
/// State is rebuilt by replaying the ledger.
#[derive(Debug)]
pub struct RatingStore {
    ledger: Option<PathBuf>,
    tasks: Vec<RatingTask>,
    index: HashMap<String, usize>,
    assigned: Vec<BTreeSet<String>>,
    skipped: Vec<BTreeSet<String>>,
    rated: Vec<BTreeMap<String, RatingValue>>,
    records: Vec<RatingRecord>,
}

const TASKS_FILE: &str = "tasks.json";
const LEDGER_FILE: &str = "ledger.jsonl";

impl RatingStore {
    pub fn in_memory(tasks: Vec<RatingTask>) -> Self {
        let index = tasks.iter().enumerate().map(|(i, t)| (t.id.clone(), i)).collect();
        let n = tasks.len();
        RatingStore {
            ledger: None,
            tasks,
            index,
            assigned: vec![BTreeSet::new(); n],
            skipped: vec![BTreeSet::new(); n],
            rated: vec![BTreeMap::new(); n],
            records: Vec::new(),
        }
    }

    /// New store in `dir` (created if needed); fails if one exists there.
    pub fn create(dir: impl AsRef<Path>, tasks: Vec<RatingTask>) -> Result<Self, RatingError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let tasks_path = dir.join(TASKS_FILE);
        if tasks_path.exists() {
            return Err(RatingError::Domain(format!("{} already holds a store", dir.display())));
        }
        std::fs::write(&tasks_path, serde_json::to_string_pretty(&tasks)?)?;
        File::create(dir.join(LEDGER_FILE))?;
        let mut store = Self::in_memory(tasks);
        store.ledger = Some(dir.join(LEDGER_FILE));
        Ok(store)
    }

    pub fn open(dir: impl AsRef<Path>) -> Result<Self, RatingError> {
        let dir = dir.as_ref();
        let tasks: Vec<RatingTask> = serde_json::from_str(&std::fs::read_to_string(dir.join(TASKS_FILE))?)?;
        let mut store = Self::in_memory(tasks);
        let ledger = dir.join(LEDGER_FILE);
        if ledger.exists() {
            for (i, line) in BufReader::new(File::open(&ledger)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let bad = |msg: String| RatingError::Ledger { line: i + 1, msg };
                let event: LedgerEvent = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
                store.apply(event).map_err(|e| bad(e.to_string()))?;
            }
        }
        store.ledger = Some(ledger);
        Ok(store)
    }

    pub fn tasks(&self) -> &[RatingTask] {
        &self.tasks
    }

    pub fn records(&self) -> &[RatingRecord] {
        &self.records
    }

    fn append(&self, event: &LedgerEvent) -> Result<(), RatingError> {
        if let Some(path) = &self.ledger {
            let mut f = OpenOptions::new().append(true).create(true).open(path)?;
            let mut line = serde_json::to_string(event)?;
            line.push('\n');
            f.write_all(line.as_bytes())?;
            f.sync_data()?;
        }
        Ok(())
    }

    fn validate(&self, event: &LedgerEvent) -> Result<usize, RatingError> {
        match event {
            LedgerEvent::Assign { task_id, rater } => {
                let i = *self.index.get(task_id).ok_or_else(|| RatingError::UnknownTask(task_id.clone()))?;
                if self.assigned[i].len() >= RATERS_PER_TASK || self.assigned[i].contains(rater) || self.skipped[i].contains(rater) {
                    return Err(RatingError::Domain(format!("task `{task_id}` cannot go to `{rater}`")));
                }
                Ok(i)
            }
            LedgerEvent::Rating(r) => {
                let i = *self.index.get(&r.task_id).ok_or_else(|| RatingError::UnknownTask(r.task_id.clone()))?;
                if self.rated[i].contains_key(&r.rater) {
                    return Err(RatingError::Duplicate {
                        task: r.task_id.clone(),
                        rater: r.rater.clone(),
                    });
                }
                if !self.assigned[i].contains(&r.rater) {
                    return Err(RatingError::Domain(format!(
                        "rater `{}` was not assigned task `{}`",
                        r.rater, r.task_id
                    )));
                }
                check_domain(self.tasks[i].payload.kind(), r.value)?;
                Ok(i)
            }
            LedgerEvent::Skip { task_id, rater } => {
                let i = *self.index.get(task_id).ok_or_else(|| RatingError::UnknownTask(task_id.clone()))?;
                if self.rated[i].contains_key(rater) {
                    return Err(RatingError::Duplicate {
                        task: task_id.clone(),
                        rater: rater.clone(),
                    });
                }
                if !self.assigned[i].contains(rater) {
                    return Err(RatingError::Domain(format!("rater `{rater}` was not assigned task `{task_id}`")));
                }
                Ok(i)
            }
        }
    }

    fn apply(&mut self, event: LedgerEvent) -> Result<(), RatingError> {
        let i = self.validate(&event)?;
        match event {
            LedgerEvent::Assign { rater, .. } => {
                self.assigned[i].insert(rater);
            }
            LedgerEvent::Rating(r) => {
                self.rated[i].insert(r.rater.clone(), r.value);
                self.records.push(r);
            }
            LedgerEvent::Skip { rater, .. } => {
                self.assigned[i].remove(&rater);
                self.skipped[i].insert(rater);
            }
        }
        Ok(())
    }

    /// Validate, persist, then update the in-memory state.
    fn commit(&mut self, event: LedgerEvent) -> Result<(), RatingError> {
        self.validate(&event)?;
        self.append(&event)?;
        self.apply(event)
    }

    /// The rater's unfinished task, else the first open task they have
    /// neither rated nor skipped, which is then assigned to them.
    pub fn next_task(&mut self, rater: &str) -> Result<Option<TaskView>, RatingError> {
        if rater.trim().is_empty() {
            return Err(RatingError::Domain("empty rater id".into()));
        }
        if let Some(i) = (0..self.tasks.len()).find(|&i| self.assigned[i].contains(rater) && !self.rated[i].contains_key(rater)) {
            return Ok(Some(self.tasks[i].view()));
        }
        let Some(i) = (0..self.tasks.len()).find(|&i| {
            self.assigned[i].len() < RATERS_PER_TASK && !self.assigned[i].contains(rater) && !self.skipped[i].contains(rater)
        })
        else {
            return Ok(None);
        };
        self.commit(LedgerEvent::Assign {
            task_id: self.tasks[i].id.clone(),
            rater: rater.to_string(),
        })?;
        Ok(Some(self.tasks[i].view()))
    }

    pub fn submit_rating(&mut self, record: RatingRecord) -> Result<SubmitAck, RatingError> {
        let task_id = record.task_id.clone();
        self.commit(LedgerEvent::Rating(record))?;
        self.ack(&task_id)
    }

    /// Current rating count of a task.
    pub fn ack(&self, task_id: &str) -> Result<SubmitAck, RatingError> {
        let i = *self.index.get(task_id).ok_or_else(|| RatingError::UnknownTask(task_id.to_string()))?;
        Ok(SubmitAck {
            task_id: task_id.to_string(),
            ratings: self.rated[i].len(),
            closed: self.rated[i].len() == RATERS_PER_TASK,
        })
    }

    /// Hand an assigned task back without rating it. The rater is not
    /// offered it again.
    pub fn skip_task(&mut self, task_id: &str, rater: &str) -> Result<(), RatingError> {
        self.commit(LedgerEvent::Skip {
            task_id: task_id.to_string(),
            rater: rater.to_string(),
        })
    }

    pub fn progress(&self) -> Progress {
        let mut per_kind: BTreeMap<TaskKind, (usize, usize)> = BTreeMap::new();
        let mut closed = 0;
        for (i, t) in self.tasks.iter().enumerate() {
            let e = per_kind.entry(t.payload.kind()).or_default();
            e.1 += 1;
            if self.rated[i].len() == RATERS_PER_TASK {
                e.0 += 1;
                closed += 1;
            }
        }
        Progress {
            tasks: self.tasks.len(),
            closed,
            ratings: self.records.len(),
            per_kind,
        }
    }

    /// Aggregates per system.
    pub fn report(&self) -> BTreeMap<String, AggregateReport> {
        let systems: BTreeSet<&str> = self.tasks.iter().map(|t| t.system.as_str()).collect();
        systems
            .into_iter()
            .map(|s| {
                let tasks: Vec<RatingTask> = self.tasks.iter().filter(|t| t.system == s).cloned().collect();
                (s.to_string(), aggregate(&tasks, &self.records))
            })
            .collect()
    }

    /// Every closed task has exactly three records from distinct raters.
    pub fn audit(&self) -> Result<(), RatingError> {
        let mut seen: HashMap<&str, BTreeSet<&str>> = HashMap::new();
        for r in &self.records {
            if !seen.entry(r.task_id.as_str()).or_default().insert(r.rater.as_str()) {
                return Err(RatingError::Duplicate {
                    task: r.task_id.clone(),
                    rater: r.rater.clone(),
                });
            }
        }
        for t in &self.tasks {
            let n = seen.get(t.id.as_str()).map_or(0, BTreeSet::len);
            if n > RATERS_PER_TASK {
                return Err(RatingError::Domain(format!("task `{}` has {n} ratings", t.id)));
            }
        }
        Ok(())
    }
}
