//! Synthetic workers driven through the real protocol.
//!
//! A worker answers hard-to-tell with probability `hard`, otherwise the wrong
//! point with probability `error`. Two such workers agree on a wrong answer
//! with conditional probability e² / (e² + (1 − e)²) among agreeing pairs.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use super::{Answer, Choice, CrowdConfig, ImageRef, Store, TaskKind, TaskState, WorkerStatus};
use crate::depth::Pixel;
use crate::error::{invalid, Result};
use crate::sampling::sample_unconstrained;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkerGroup {
    pub count: usize,
    pub error: f64,
    #[serde(default)]
    pub hard: f64,
}

fn default_gold_tasks() -> usize {
    200
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub groups: Vec<WorkerGroup>,
    /// Number of normal tasks.
    pub trials: usize,
    #[serde(default = "default_gold_tasks")]
    pub gold_tasks: usize,
    #[serde(default)]
    pub crowd: CrowdConfig,
    #[serde(default)]
    pub seed: u64,
}

impl SimConfig {
    /// `workers` identical workers.
    pub fn uniform(workers: usize, error: f64, hard: f64, trials: usize, seed: u64) -> Self {
        Self {
            groups: vec![WorkerGroup {
                count: workers,
                error,
                hard,
            }],
            trials,
            gold_tasks: default_gold_tasks(),
            crowd: CrowdConfig {
                seed,
                ..CrowdConfig::default()
            },
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(invalid("simulation needs at least one task"));
        }
        let workers: usize = self.groups.iter().map(|g| g.count).sum();
        if workers < 2 {
            return Err(invalid("simulation needs at least two workers"));
        }
        for g in &self.groups {
            for (name, v) in [("error", g.error), ("hard", g.hard)] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(invalid(format!("{name} rate {v} outside [0, 1]")));
                }
            }
        }
        self.crowd.validate()
    }

    /// Closed-form accepted error when every worker shares one error rate and
    /// nobody is filtered out.
    pub fn analytic_error(&self) -> Option<f64> {
        let e = self.groups.first()?.error;
        if self.crowd.gold_filter || self.groups.iter().any(|g| g.error != e) {
            return None;
        }
        let (a, b) = (e * e, (1.0 - e) * (1.0 - e));
        Some(a / (a + b))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub trials: usize,
    pub workers: usize,
    pub accepted: usize,
    pub discarded: usize,
    /// Tasks left open when no worker could take them.
    pub unresolved: usize,
    pub accepted_wrong: usize,
    pub accepted_error: Option<f64>,
    pub acceptance_rate: f64,
    pub analytic_error: Option<f64>,
    /// Binomial standard error of `accepted_error` around the analytic value.
    pub sigma: Option<f64>,
    pub z_score: Option<f64>,
    pub rejected_workers: usize,
    pub gold_answers: u64,
    /// Accepted error predicted from the pooled decisive gold error rate.
    pub gold_estimate: Option<f64>,
    pub median_response_ms: Option<u64>,
}

impl SimReport {
    pub fn within_sigmas(&self, k: f64) -> Option<bool> {
        self.z_score.map(|z| z.abs() <= k)
    }

    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("NA".to_string(), |v| format!("{v:.6}"));
        let mut s = String::new();
        s += &format!("trials={}\nworkers={}\n", self.trials, self.workers);
        s += &format!("accepted={}\ndiscarded={}\nunresolved={}\n", self.accepted, self.discarded, self.unresolved);
        s += &format!("accepted_wrong={}\n", self.accepted_wrong);
        s += &format!("accepted_error={}\n", opt(self.accepted_error));
        s += &format!("analytic_error={}\n", opt(self.analytic_error));
        s += &format!("sigma={}\nz_score={}\n", opt(self.sigma), opt(self.z_score));
        s += &format!("acceptance_rate={:.6}\n", self.acceptance_rate);
        s += &format!("rejected_workers={}\ngold_answers={}\n", self.rejected_workers, self.gold_answers);
        s += &format!("gold_estimate={}\n", opt(self.gold_estimate));
        s
    }
}

fn answer_for(truth: Choice, error: f64, hard: f64, rng: &mut ChaCha8Rng) -> Choice {
    if rng.random::<f64>() < hard {
        return Choice::HardToTell;
    }
    let wrong = match truth {
        Choice::Point1Closer => Choice::Point2Closer,
        Choice::Point2Closer => Choice::Point1Closer,
        Choice::HardToTell => Choice::Point1Closer,
    };
    if rng.random::<f64>() < error {
        wrong
    } else {
        truth
    }
}

fn random_ordered(rng: &mut ChaCha8Rng) -> Choice {
    if rng.random_bool(0.5) {
        Choice::Point1Closer
    } else {
        Choice::Point2Closer
    }
}

const SIM_SIDE: usize = 64;

/// Runs every task to completion with round-robin workers.
pub fn simulate(cfg: &SimConfig, journal: Option<Box<dyn Write + Send>>) -> Result<(SimReport, Store)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut store = Store::new(cfg.crowd.clone(), journal)?;
    let mut tasks = Vec::with_capacity(cfg.trials + cfg.gold_tasks);
    let mut truth = Vec::with_capacity(cfg.trials + cfg.gold_tasks);
    for k in 0..cfg.trials + cfg.gold_tasks {
        let gold = k >= cfg.trials;
        let image = if gold {
            ImageRef::new(format!("gold_{:06}", k - cfg.trials), SIM_SIDE, SIM_SIDE)
        } else {
            ImageRef::new(format!("sim_{k:06}"), SIM_SIDE, SIM_SIDE)
        };
        let (p1, p2) = sample_unconstrained(SIM_SIDE, SIM_SIDE, &mut rng);
        let t = random_ordered(&mut rng);
        truth.push(t);
        tasks.push(Store::fresh_task(k as u64, image, p1, p2, gold.then_some(t)));
    }
    store.add_tasks(tasks)?;

    let mut workers = Vec::new();
    for (g, group) in cfg.groups.iter().enumerate() {
        for k in 0..group.count {
            let id = format!("sim_g{g}_w{k:03}");
            store.register_named(&id)?;
            workers.push((id, group.error, group.hard));
        }
    }

    let timing = LogNormal::new((3400.0f64).ln(), 0.5).map_err(|e| invalid(e.to_string()))?;
    let mut clock = 0u64;
    loop {
        let mut progressed = false;
        for (id, error, hard) in &workers {
            if store.worker(id).is_some_and(|w| w.status == WorkerStatus::Rejected) {
                continue;
            }
            let Some((task, token)) = store.next_task(id)? else {
                continue;
            };
            progressed = true;
            let choice = answer_for(truth[task as usize], *error, *hard, &mut rng);
            let response_ms = timing.sample(&mut rng).round() as u64;
            clock += response_ms;
            store.submit_answer(
                Answer {
                    worker: id.clone(),
                    task,
                    choice,
                    response_ms,
                    timestamp: clock,
                },
                Some(token),
            )?;
        }
        if !progressed {
            break;
        }
    }

    let mut report = SimReport {
        trials: cfg.trials,
        workers: workers.len(),
        accepted: 0,
        discarded: 0,
        unresolved: 0,
        accepted_wrong: 0,
        accepted_error: None,
        acceptance_rate: 0.0,
        analytic_error: cfg.analytic_error(),
        sigma: None,
        z_score: None,
        rejected_workers: 0,
        gold_answers: 0,
        gold_estimate: None,
        median_response_ms: store.stats().median_response_ms,
    };
    for t in store.state().tasks.iter().filter(|t| t.kind == TaskKind::Normal) {
        match t.state {
            TaskState::Accepted => {
                report.accepted += 1;
                if t.consensus() != truth[t.id as usize].relation() {
                    report.accepted_wrong += 1;
                }
            }
            TaskState::Discarded => report.discarded += 1,
            TaskState::Open | TaskState::PendingSecond => report.unresolved += 1,
        }
    }
    report.acceptance_rate = report.accepted as f64 / cfg.trials as f64;
    if report.accepted > 0 {
        let observed = report.accepted_wrong as f64 / report.accepted as f64;
        report.accepted_error = Some(observed);
        if let Some(p) = report.analytic_error {
            let sigma = (p * (1.0 - p) / report.accepted as f64).sqrt();
            report.sigma = Some(sigma);
            report.z_score = Some(if sigma > 0.0 {
                (observed - p) / sigma
            } else if observed == p {
                0.0
            } else {
                f64::INFINITY
            });
        }
    }
    let (mut decisive, mut wrong) = (0u64, 0u64);
    for t in store.state().tasks.iter().filter(|t| t.kind == TaskKind::Gold) {
        for a in t.assignments.iter() {
            let Some(c) = a.answer else { continue };
            report.gold_answers += 1;
            if c.is_decisive() {
                decisive += 1;
                wrong += u64::from(Some(c) != t.gold_answer);
            }
        }
    }
    if decisive > 0 {
        let e = wrong as f64 / decisive as f64;
        let (a, b) = (e * e, (1.0 - e) * (1.0 - e));
        report.gold_estimate = Some(a / (a + b));
    }
    report.rejected_workers = store.stats().rejected_workers;
    Ok((report, store))
}

/// Fraction of `trials` single workers with gold accuracy `accuracy` that the
/// protocol rejects within `probes` gold answers.
pub fn gold_rejection_monte_carlo(accuracy: f64, probes: usize, trials: usize, crowd: &CrowdConfig, seed: u64) -> Result<f64> {
    if !(0.0..=1.0).contains(&accuracy) || trials == 0 {
        return Err(invalid("accuracy must lie in [0, 1] and trials be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rejected = 0usize;
    for trial in 0..trials {
        let cfg = CrowdConfig {
            p_gold: 1.0,
            gold_filter: true,
            seed: seed ^ trial as u64,
            ..crowd.clone()
        };
        let mut store = Store::new(cfg, None)?;
        let tasks = (0..probes)
            .map(|k| {
                let image = ImageRef::new(format!("gold_{k:04}"), SIM_SIDE, SIM_SIDE);
                Store::fresh_task(
                    k as u64,
                    image,
                    Pixel::new(0, 0),
                    Pixel::new(0, 1),
                    Some(Choice::Point1Closer),
                )
            })
            .collect();
        store.add_tasks(tasks)?;
        store.register_named("planted")?;
        while let Some((task, token)) = store.next_task("planted")? {
            let choice = if rng.random::<f64>() < accuracy {
                Choice::Point1Closer
            } else {
                Choice::Point2Closer
            };
            let answer = Answer {
                worker: "planted".into(),
                task,
                choice,
                response_ms: 0,
                timestamp: 0,
            };
            if store.submit_answer(answer, Some(token))?.worker_status == WorkerStatus::Rejected {
                rejected += 1;
                break;
            }
        }
    }
    Ok(rejected as f64 / trials as f64)
}

/// Exact probability of the same event by dynamic programming over the
/// running count of correct answers.
pub fn gold_rejection_exact(accuracy: f64, probes: usize, crowd: &CrowdConfig) -> f64 {
    let mut alive = vec![1.0f64];
    let mut rejected = 0.0;
    for n in 1..=probes {
        let mut next = vec![0.0; n + 1];
        for (c, p) in alive.iter().enumerate() {
            next[c] += p * (1.0 - accuracy);
            next[c + 1] += p * accuracy;
        }
        if n as u64 >= crowd.min_gold_probes {
            for (c, p) in next.iter_mut().enumerate() {
                if (c as f64 / n as f64) < crowd.min_gold_accuracy {
                    rejected += *p;
                    *p = 0.0;
                }
            }
        }
        alive = next;
    }
    rejected
}
