use std::cell::Cell;
use std::fmt::Write as _;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::objectives::{add_sample_gradient, check_tau};
use crate::oracle::{Oracle, DEFAULT_ENUMERATION_CAP};
use crate::policy::{GradientVector, TabularPolicy, Trajectory};
use crate::rng::SeededRng;

use super::data::OfflineDataset;

/// Column header of the training log CSV.
pub const TRAIN_LOG_HEADER: &str =
    "step,objective,grad_norm,w_mean,w_std,kl_to_teacher,chi2_to_ref,teacher_evals,wall_ms";

/// Shared trainer settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub steps: usize,
    /// Trajectories per step (mini-batch draws offline, fresh rollouts online).
    pub batch: usize,
    /// Advantage clip threshold; `None` disables clipping.
    pub tau: Option<f64>,
    pub seed: u64,
    /// Stop early once the mini-batch gradient norm falls below this.
    pub stop_grad_norm: f64,
    /// Compute exact KL / chi^2 every this many steps (0 disables).
    pub monitor_every: usize,
    pub enumeration_cap: u64,
    /// Record elapsed wall-clock time; when off, `wall_ms` is 0 so logs are
    /// byte-reproducible.
    pub record_wall_clock: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.5,
            steps: 500,
            batch: 64,
            tau: Some(10.0),
            seed: 0,
            stop_grad_norm: 1e-6,
            monitor_every: 1,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            record_wall_clock: false,
        }
    }
}

impl TrainConfig {
    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be > 0", self.lr)));
        }
        if self.batch == 0 {
            return Err(Error::Config("batch must be >= 1".into()));
        }
        check_tau(self.tau)
    }
}

/// Metrics of one step, measured at the pre-update parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    pub step: usize,
    /// Batch mean of the unclipped total advantage.
    pub objective: f64,
    pub grad_norm: f64,
    /// Mean of per-token `pi_theta(a_t|s_t) / pi_ref(a_t|s_t)` over the batch.
    pub w_mean: f64,
    pub w_std: f64,
    pub kl_to_teacher: Option<f64>,
    pub chi2_to_ref: Option<f64>,
    /// Cumulative live teacher evaluations on the update path.
    pub teacher_evals: u64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<TrainRecord>,
}

impl TrainLog {
    pub fn teacher_evals(&self) -> u64 {
        self.records.last().map_or(0, |r| r.teacher_evals)
    }

    pub fn to_csv(&self) -> String {
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        let mut out = String::from(TRAIN_LOG_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.step,
                r.objective,
                r.grad_norm,
                r.w_mean,
                r.w_std,
                opt(r.kl_to_teacher),
                opt(r.chi2_to_ref),
                r.teacher_evals,
                r.wall_ms
            );
        }
        out
    }
}

/// A teacher queried at training time, with an evaluation counter.
pub struct LiveTeacher<'a> {
    policy: &'a TabularPolicy,
    evals: Cell<u64>,
}

impl<'a> LiveTeacher<'a> {
    pub fn new(policy: &'a TabularPolicy) -> Self {
        Self {
            policy,
            evals: Cell::new(0),
        }
    }

    /// Per-token log-probs of one response; counts as one evaluation.
    pub fn logprobs(&self, prompt: usize, tokens: &[u32], out: &mut [f64]) {
        self.evals.set(self.evals.get() + 1);
        self.policy.token_logprobs_into(prompt, tokens, out);
    }

    pub fn evals(&self) -> u64 {
        self.evals.get()
    }
}

struct StepStats {
    grad: GradientVector,
    objective: f64,
    w_sum: f64,
    w_sq: f64,
    tokens: usize,
    student_lp: Vec<f64>,
    ref_lp: Vec<f64>,
}

impl StepStats {
    fn new(student: &TabularPolicy) -> Self {
        Self {
            grad: GradientVector::zeros(student.shape()),
            objective: 0.0,
            w_sum: 0.0,
            w_sq: 0.0,
            tokens: 0,
            student_lp: vec![0.0; student.horizon()],
            ref_lp: vec![0.0; student.horizon()],
        }
    }

    fn push(
        &mut self,
        student: &TabularPolicy,
        reference: &TabularPolicy,
        traj: &Trajectory,
        teacher_lp: &[f64],
        tau: Option<f64>,
    ) {
        self.objective += add_sample_gradient(
            student,
            traj,
            teacher_lp,
            tau,
            self.grad.values_mut(),
            &mut self.student_lp,
        );
        reference.token_logprobs_into(traj.prompt_id, &traj.tokens, &mut self.ref_lp);
        for (s, r) in self.student_lp.iter().zip(&self.ref_lp) {
            let w = (s - r).exp();
            self.w_sum += w;
            self.w_sq += w * w;
        }
        self.tokens += self.student_lp.len();
    }
}

struct Monitor<'a> {
    teacher: Option<&'a TabularPolicy>,
    reference: TabularPolicy,
    oracle: Oracle,
    every: usize,
    feasible: bool,
}

impl<'a> Monitor<'a> {
    fn new(teacher: Option<&'a TabularPolicy>, reference: &TabularPolicy, config: &TrainConfig) -> Self {
        let oracle = Oracle::with_cap(config.enumeration_cap);
        Self {
            teacher,
            feasible: oracle.check_feasible(reference.shape()).is_ok(),
            reference: reference.clone(),
            oracle,
            every: config.monitor_every,
        }
    }

    fn measure(&self, step: usize, student: &TabularPolicy) -> Result<(Option<f64>, Option<f64>)> {
        if !self.feasible || self.every == 0 || !step.is_multiple_of(self.every) {
            return Ok((None, None));
        }
        let kl = match self.teacher {
            Some(t) => Some(self.oracle.kl(student, t)?),
            None => None,
        };
        let chi2 = self.oracle.chi_squared(student, &self.reference)?;
        Ok((kl, Some(chi2)))
    }
}

fn run_steps(
    init: &TabularPolicy,
    config: &TrainConfig,
    monitor_teacher: Option<&TabularPolicy>,
    observer: &mut dyn FnMut(&TrainRecord, &TabularPolicy) -> Result<()>,
    mut fill_batch: impl FnMut(&TabularPolicy, &mut StepStats, &mut SeededRng) -> Result<u64>,
) -> Result<(TabularPolicy, TrainLog)> {
    config.validate()?;
    let reference = init.clone();
    let monitor = Monitor::new(monitor_teacher, &reference, config);
    let mut student = init.clone();
    let mut rng = SeededRng::new(config.seed);
    let mut log = TrainLog::default();
    let mut teacher_evals = 0u64;
    let start = Instant::now();
    for step in 0..config.steps {
        let mut stats = StepStats::new(&student);
        teacher_evals += fill_batch(&student, &mut stats, &mut rng)?;
        let n = config.batch as f64;
        let grad = stats.grad.clone().scaled(1.0 / n);
        if !grad.is_finite() {
            return Err(Error::NonFiniteGradient { step });
        }
        let grad_norm = grad.norm();
        let w_mean = stats.w_sum / stats.tokens as f64;
        let w_var = (stats.w_sq / stats.tokens as f64 - w_mean * w_mean).max(0.0);
        let (kl_to_teacher, chi2_to_ref) = monitor.measure(step, &student)?;
        log.records.push(TrainRecord {
            step,
            objective: stats.objective / n,
            grad_norm,
            w_mean,
            w_std: w_var.sqrt(),
            kl_to_teacher,
            chi2_to_ref,
            teacher_evals,
            wall_ms: if config.record_wall_clock {
                start.elapsed().as_secs_f64() * 1e3
            } else {
                0.0
            },
        });
        observer(log.records.last().expect("just pushed"), &student)?;
        if grad_norm < config.stop_grad_norm {
            break;
        }
        student.ascend(&grad, config.lr);
    }
    Ok((student, log))
}

/// Offline distillation on a precomputed dataset: each step resamples a
/// mini-batch and computes advantages from the stored teacher log-probs.
///
/// No teacher is consulted on the update path. `monitor_teacher`, when
/// given, is used only to log the exact KL to the teacher. Importance
/// weights and chi^2 are measured against `init`.
pub fn train_offline(
    init: &TabularPolicy,
    dataset: &OfflineDataset,
    config: &TrainConfig,
    monitor_teacher: Option<&TabularPolicy>,
) -> Result<(TabularPolicy, TrainLog)> {
    train_offline_observed(init, dataset, config, monitor_teacher, &mut |_, _| Ok(()))
}

/// [`train_offline`] that hands every step's record and pre-update policy to
/// `observer`; an observer error aborts training.
pub fn train_offline_observed(
    init: &TabularPolicy,
    dataset: &OfflineDataset,
    config: &TrainConfig,
    monitor_teacher: Option<&TabularPolicy>,
    observer: &mut dyn FnMut(&TrainRecord, &TabularPolicy) -> Result<()>,
) -> Result<(TabularPolicy, TrainLog)> {
    dataset.check_student(init)?;
    let sampler = dataset.sampler(init.prompt_set())?;
    let reference = init.clone();
    run_steps(init, config, monitor_teacher, observer, |student, stats, rng| {
        for _ in 0..config.batch {
            let rec = &dataset.records()[sampler.draw(rng)];
            let lp = rec.teacher_logprobs.as_deref().ok_or(Error::MissingTeacher)?;
            stats.push(student, &reference, rec, lp, config.tau);
        }
        Ok(0)
    })
}

/// Standard online distillation: every step draws fresh rollouts from the
/// current student and queries the live teacher once per rollout.
pub fn train_online(
    init: &TabularPolicy,
    teacher: &TabularPolicy,
    config: &TrainConfig,
) -> Result<(TabularPolicy, TrainLog)> {
    init.ensure_compatible(teacher)?;
    let live = LiveTeacher::new(teacher);
    let reference = init.clone();
    let mut teacher_lp = vec![0.0; init.horizon()];
    run_steps(
        init,
        config,
        Some(teacher),
        &mut |_, _| Ok(()),
        |student, stats, rng| {
            let before = live.evals();
            for _ in 0..config.batch {
                let q = student.prompt_set().sample(rng);
                let traj = student.sample_trajectory(q, rng)?;
                live.logprobs(q, &traj.tokens, &mut teacher_lp);
                stats.push(student, &reference, &traj, &teacher_lp, config.tau);
            }
            Ok(live.evals() - before)
        },
    )
}
