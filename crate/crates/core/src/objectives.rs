//! Per-token advantages, the online and offline distillation objectives, and
//! their exact and sampled gradients.
//!
//! Gradients follow the stop-gradient convention: the advantage
//! `A_t = log pi_T(a_t|s_t) - log pi_theta(a_t|s_t)` is a constant
//! coefficient on the score `grad log pi_theta(a_t|s_t)`, so the per-response
//! gradient is `f(x) = sum_t A_t grad log pi_theta(a_t|s_t)`. Then
//!
//! * `grad J_on  = E_{pi_theta}[f]`
//! * `grad J_off = E_{pi_ref}[f]`
//!
//! and both live in the student's parameter layout.

use crate::error::{Error, Result};
use crate::oracle::{Oracle, Visit};
use crate::pipeline::OfflineDataset;
use crate::policy::{GradientVector, TabularPolicy, Trajectory};
use crate::rng::SeededRng;

/// Advantages of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageProfile {
    pub per_token: Vec<f64>,
    pub total: f64,
    /// `per_token` clipped to `[-tau, tau]`, when a threshold was given.
    pub clipped: Option<Vec<f64>>,
}

impl AdvantageProfile {
    /// The coefficients actually used in a gradient: clipped if available.
    pub fn coefficients(&self) -> &[f64] {
        self.clipped.as_deref().unwrap_or(&self.per_token)
    }
}

pub(crate) fn check_tau(tau: Option<f64>) -> Result<()> {
    match tau {
        Some(t) if !(t > 0.0) => Err(Error::Config(format!("clip threshold {t} must be > 0"))),
        _ => Ok(()),
    }
}

#[inline]
pub(crate) fn clip(a: f64, tau: Option<f64>) -> f64 {
    match tau {
        Some(t) => a.clamp(-t, t),
        None => a,
    }
}

/// Per-token advantages of `traj`.
///
/// Stored teacher log-probs on the trajectory take precedence (offline
/// path); otherwise `teacher` is evaluated (online path).
pub fn advantages(
    student: &TabularPolicy,
    teacher: Option<&TabularPolicy>,
    traj: &Trajectory,
    tau: Option<f64>,
) -> Result<AdvantageProfile> {
    check_tau(tau)?;
    let student_lp = student.token_logprobs(traj)?;
    let teacher_lp = match (&traj.teacher_logprobs, teacher) {
        (Some(stored), _) => {
            if stored.len() != student_lp.len() {
                return Err(Error::LengthMismatch {
                    expected: student_lp.len(),
                    got: stored.len(),
                });
            }
            stored.clone()
        }
        (None, Some(teacher)) => {
            student.ensure_compatible(teacher)?;
            teacher.token_logprobs(traj)?
        }
        (None, None) => return Err(Error::MissingTeacher),
    };
    let per_token: Vec<f64> = teacher_lp.iter().zip(&student_lp).map(|(t, s)| t - s).collect();
    let total = per_token.iter().sum();
    let clipped = tau.map(|_| per_token.iter().map(|a| clip(*a, tau)).collect());
    Ok(AdvantageProfile {
        per_token,
        total,
        clipped,
    })
}

/// `J_on = E_{pi_theta}[sum_t A_t] = -KL(pi_theta || pi_T)`.
pub fn j_on_exact(oracle: &Oracle, student: &TabularPolicy, teacher: &TabularPolicy) -> Result<f64> {
    j_off_exact(oracle, student, teacher, student)
}

/// `J_off = E_{pi_ref}[sum_t A_t]`.
pub fn j_off_exact(
    oracle: &Oracle,
    student: &TabularPolicy,
    teacher: &TabularPolicy,
    reference: &TabularPolicy,
) -> Result<f64> {
    let mut acc = 0.0;
    oracle.walk(&[student, teacher, reference], |v| {
        acc += v.mass(2) * (v.seq_logprob(1) - v.seq_logprob(0));
    })?;
    Ok(acc)
}

/// Adds `scale * sum_t coef(t) * grad log pi_student(a_t|s_t)` for the
/// visited response; the student is policy 0 of the walk.
#[inline]
pub(crate) fn add_scores(
    student: &TabularPolicy,
    v: &Visit<'_>,
    out: &mut [f64],
    scale: f64,
    coef: impl Fn(usize) -> f64,
) {
    let groups = v.groups(0);
    for (t, &g) in groups.iter().enumerate() {
        let c = scale * coef(t);
        if c != 0.0 {
            student.add_token_score(out, g, v.tokens[t] as usize, c);
        }
    }
}

/// `E_{x~measure}[f(x)]` with advantages against `teacher`.
fn expected_f(
    oracle: &Oracle,
    student: &TabularPolicy,
    teacher: &TabularPolicy,
    measure: &TabularPolicy,
) -> Result<GradientVector> {
    let mut grad = GradientVector::zeros(student.shape());
    let out = grad.values_mut();
    oracle.walk(&[student, teacher, measure], |v| {
        let (s, t) = (v.token_logprobs(0), v.token_logprobs(1));
        add_scores(student, v, out, v.mass(2), |i| t[i] - s[i]);
    })?;
    Ok(grad)
}

/// `grad J_on = E_{pi_theta}[f]`, evaluated directly under the student.
pub fn grad_j_on_exact(oracle: &Oracle, student: &TabularPolicy, teacher: &TabularPolicy) -> Result<GradientVector> {
    expected_f(oracle, student, teacher, student)
}

/// `grad J_off = E_{pi_ref}[f]`.
pub fn grad_j_off_exact(
    oracle: &Oracle,
    student: &TabularPolicy,
    teacher: &TabularPolicy,
    reference: &TabularPolicy,
) -> Result<GradientVector> {
    expected_f(oracle, student, teacher, reference)
}

/// `E_{pi_ref}[w f]` with the sequence ratio `w = pi_theta / pi_ref`; the
/// importance-sampled route to `grad J_on`.
pub fn grad_j_on_importance_weighted(
    oracle: &Oracle,
    student: &TabularPolicy,
    teacher: &TabularPolicy,
    reference: &TabularPolicy,
) -> Result<GradientVector> {
    Ok(gradient_moments(oracle, student, teacher, reference)?.importance_weighted)
}

/// Every gradient moment of one `(student, teacher, reference)` triple,
/// gathered in a single enumeration pass.
#[derive(Debug, Clone)]
pub struct GradientMoments {
    /// `E_{pi_theta}[f]`
    pub on_policy: GradientVector,
    /// `E_{pi_ref}[f]`
    pub off_policy: GradientVector,
    /// `E_{pi_ref}[w f]`
    pub importance_weighted: GradientVector,
    /// `E_{pi_ref}[w]`
    pub mean_weight: f64,
}

impl GradientMoments {
    /// `Cov_{pi_ref}[w, f] = E[w f] - E[w] E[f]`.
    pub fn covariance(&self) -> GradientVector {
        let mut cov = self.importance_weighted.clone();
        cov.add_scaled(&self.off_policy, -self.mean_weight);
        cov
    }
}

pub fn gradient_moments(
    oracle: &Oracle,
    student: &TabularPolicy,
    teacher: &TabularPolicy,
    reference: &TabularPolicy,
) -> Result<GradientMoments> {
    let mut on = GradientVector::zeros(student.shape());
    let mut off = GradientVector::zeros(student.shape());
    let mut weighted = GradientVector::zeros(student.shape());
    let mut mean_weight = 0.0;
    {
        let (on_v, off_v, w_v) = (on.values_mut(), off.values_mut(), weighted.values_mut());
        oracle.walk(&[student, teacher, reference], |v| {
            let (s, t) = (v.token_logprobs(0), v.token_logprobs(1));
            let ref_mass = v.mass(2);
            let w = (v.seq_logprob(0) - v.seq_logprob(2)).exp();
            mean_weight += ref_mass * w;
            add_scores(student, v, on_v, v.mass(0), |i| t[i] - s[i]);
            add_scores(student, v, off_v, ref_mass, |i| t[i] - s[i]);
            add_scores(student, v, w_v, ref_mass * w, |i| t[i] - s[i]);
        })?;
    }
    Ok(GradientMoments {
        on_policy: on,
        off_policy: off,
        importance_weighted: weighted,
        mean_weight,
    })
}

/// `Cov_{pi_ref}[w, f]`; satisfies `grad J_off = grad J_on - Cov`.
pub fn covariance_term(
    oracle: &Oracle,
    student: &TabularPolicy,
    teacher: &TabularPolicy,
    reference: &TabularPolicy,
) -> Result<GradientVector> {
    Ok(gradient_moments(oracle, student, teacher, reference)?.covariance())
}

/// Total derivative of `J_off` with respect to the student logits, with no
/// stop-gradient: only `-log pi_theta` depends on `theta`, so it equals
/// `-E_{pi_ref}[sum_t grad log pi_theta(a_t|s_t)]`.
pub fn grad_j_off_total_derivative(
    oracle: &Oracle,
    student: &TabularPolicy,
    reference: &TabularPolicy,
) -> Result<GradientVector> {
    let mut grad = GradientVector::zeros(student.shape());
    let out = grad.values_mut();
    oracle.walk(&[student, reference], |v| {
        add_scores(student, v, out, -v.mass(1), |_| 1.0);
    })?;
    Ok(grad)
}

/// `grad_theta KL(pi_theta || pi_T) = E_{pi_theta}[(log pi_theta(x) - log pi_T(x)) grad log pi_theta(x)]`.
pub fn grad_kl_exact(oracle: &Oracle, student: &TabularPolicy, teacher: &TabularPolicy) -> Result<GradientVector> {
    let mut grad = GradientVector::zeros(student.shape());
    let out = grad.values_mut();
    oracle.walk(&[student, teacher], |v| {
        let ratio = v.seq_logprob(0) - v.seq_logprob(1);
        add_scores(student, v, out, v.mass(0) * ratio, |_| 1.0);
    })?;
    Ok(grad)
}

/// Adds `sum_t clip(A_t) grad log pi_student(a_t|s_t)` for one trajectory
/// into `out` and returns the unclipped total advantage.
///
/// `student_lp` receives the student's per-token log-probs.
pub(crate) fn add_sample_gradient(
    student: &TabularPolicy,
    traj: &Trajectory,
    teacher_lp: &[f64],
    tau: Option<f64>,
    out: &mut [f64],
    student_lp: &mut [f64],
) -> f64 {
    let shape = student.shape();
    let mut total = 0.0;
    for t in 0..student.horizon() {
        let g = shape.group(traj.prompt_id, t, &traj.tokens);
        let a = traj.tokens[t] as usize;
        let lp = student.group_logprobs(g)[a];
        student_lp[t] = lp;
        let adv = teacher_lp[t] - lp;
        total += adv;
        let c = clip(adv, tau);
        if c != 0.0 {
            student.add_token_score(out, g, a, c);
        }
    }
    total
}

/// Where sampled gradients draw their trajectories from.
#[derive(Debug, Clone, Copy)]
pub enum GradientSource<'a> {
    /// Fresh rollouts from the student, live teacher evaluation.
    Online,
    /// Fresh rollouts from a fixed policy, live teacher evaluation.
    Rollouts(&'a TabularPolicy),
    /// Records resampled with replacement from a precomputed dataset, using
    /// the stored teacher log-probs.
    Dataset(&'a OfflineDataset),
    /// Every record of a precomputed dataset once (`n_samples` is ignored).
    DatasetPass(&'a OfflineDataset),
}

/// Sample-mean gradient with per-entry standard errors.
#[derive(Debug, Clone)]
pub struct McGradient {
    pub mean: GradientVector,
    pub stderr: GradientVector,
    pub samples: usize,
    /// Mean unclipped total advantage.
    pub objective: f64,
    pub teacher_evals: u64,
}

/// Monte Carlo estimate of the (clipped) distillation gradient.
///
/// Prompts are drawn from `p(q)` for rollout sources. Dataset sources weight
/// each record by `p(q) / n_q` so the estimate targets the same
/// prompt-marginalized expectation when per-prompt counts are equal but
/// `p(q)` is not uniform.
pub fn grad_mc(
    student: &TabularPolicy,
    teacher: Option<&TabularPolicy>,
    source: GradientSource<'_>,
    n_samples: usize,
    tau: Option<f64>,
    rng: &mut SeededRng,
) -> Result<McGradient> {
    check_tau(tau)?;
    match source {
        GradientSource::Online | GradientSource::Rollouts(_) => {
            let teacher = teacher.ok_or(Error::MissingTeacher)?;
            student.ensure_compatible(teacher)?;
            let sampler = match source {
                GradientSource::Rollouts(p) => {
                    student.ensure_compatible(p)?;
                    p
                }
                _ => student,
            };
            if n_samples == 0 {
                return Err(Error::Config("n_samples must be >= 1".into()));
            }
            let mut acc = Accumulator::new(student);
            let mut teacher_lp = vec![0.0; student.horizon()];
            for _ in 0..n_samples {
                let q = student.prompt_set().sample(rng);
                let traj = sampler.sample_trajectory(q, rng)?;
                teacher.token_logprobs_into(q, &traj.tokens, &mut teacher_lp);
                acc.push(&traj, &teacher_lp, tau);
            }
            let mut out = acc.finish_plain();
            out.teacher_evals = n_samples as u64;
            Ok(out)
        }
        GradientSource::Dataset(data) => {
            data.check_student(student)?;
            if n_samples == 0 {
                return Err(Error::Config("n_samples must be >= 1".into()));
            }
            let sampler = data.sampler(student.prompt_set())?;
            let mut acc = Accumulator::new(student);
            for _ in 0..n_samples {
                let rec = &data.records()[sampler.draw(rng)];
                acc.push(rec, rec.teacher_logprobs.as_deref().unwrap_or_default(), tau);
            }
            Ok(acc.finish_plain())
        }
        GradientSource::DatasetPass(data) => {
            data.check_student(student)?;
            let prompts = student.prompt_set();
            let mut acc = StratifiedAccumulator::new(student, prompts.len());
            for rec in data.records() {
                acc.push(rec, tau);
            }
            acc.finish(prompts.weights())
        }
    }
}

struct Accumulator<'a> {
    student: &'a TabularPolicy,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    scratch: Vec<f64>,
    student_lp: Vec<f64>,
    objective: f64,
    n: usize,
}

impl<'a> Accumulator<'a> {
    fn new(student: &'a TabularPolicy) -> Self {
        let p = student.num_params();
        Self {
            student,
            sum: vec![0.0; p],
            sum_sq: vec![0.0; p],
            scratch: vec![0.0; p],
            student_lp: vec![0.0; student.horizon()],
            objective: 0.0,
            n: 0,
        }
    }

    fn push(&mut self, traj: &Trajectory, teacher_lp: &[f64], tau: Option<f64>) {
        self.objective += add_sample_gradient(
            self.student,
            traj,
            teacher_lp,
            tau,
            &mut self.scratch,
            &mut self.student_lp,
        );
        for ((s, q), x) in self.sum.iter_mut().zip(&mut self.sum_sq).zip(&mut self.scratch) {
            *s += *x;
            *q += *x * *x;
            *x = 0.0;
        }
        self.n += 1;
    }

    fn moments(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n as f64;
        let mean: Vec<f64> = self.sum.iter().map(|s| s / n).collect();
        let var: Vec<f64> = if self.n > 1 {
            self.sum_sq
                .iter()
                .zip(&mean)
                .map(|(q, m)| ((q - n * m * m) / (n - 1.0)).max(0.0))
                .collect()
        } else {
            vec![0.0; mean.len()]
        };
        (mean, var)
    }

    fn finish_plain(self) -> McGradient {
        let (mean, var) = self.moments();
        let n = self.n as f64;
        let shape = self.student.shape();
        McGradient {
            mean: GradientVector::from_values(shape, mean),
            stderr: GradientVector::from_values(shape, var.iter().map(|v| (v / n).sqrt()).collect()),
            samples: self.n,
            objective: self.objective / n,
            teacher_evals: 0,
        }
    }
}

struct StratifiedAccumulator<'a> {
    strata: Vec<Accumulator<'a>>,
    student: &'a TabularPolicy,
}

impl<'a> StratifiedAccumulator<'a> {
    fn new(student: &'a TabularPolicy, prompts: usize) -> Self {
        Self {
            strata: (0..prompts).map(|_| Accumulator::new(student)).collect(),
            student,
        }
    }

    fn push(&mut self, rec: &Trajectory, tau: Option<f64>) {
        let lp = rec.teacher_logprobs.as_deref().unwrap_or_default();
        self.strata[rec.prompt_id].push(rec, lp, tau);
    }

    fn finish(self, weights: &[f64]) -> Result<McGradient> {
        let p = self.student.num_params();
        let mut mean = vec![0.0; p];
        let mut var = vec![0.0; p];
        let mut objective = 0.0;
        let mut samples = 0;
        for (acc, &w) in self.strata.iter().zip(weights) {
            if acc.n == 0 {
                return Err(Error::Config(
                    "dataset has no records for a prompt with positive weight".into(),
                ));
            }
            let (m, v) = acc.moments();
            let n = acc.n as f64;
            for i in 0..p {
                mean[i] += w * m[i];
                var[i] += w * w * v[i] / n;
            }
            objective += w * acc.objective / n;
            samples += acc.n;
        }
        let shape = self.student.shape();
        Ok(McGradient {
            mean: GradientVector::from_values(shape, mean),
            stderr: GradientVector::from_values(shape, var.iter().map(|v| v.sqrt()).collect()),
            samples,
            objective,
            teacher_evals: 0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{InitSpec, PolicyShape, PromptSet, Vocab};

    fn two_point(p0: f64) -> TabularPolicy {
        let shape = PolicyShape::new(Vocab::new(2).unwrap(), 1, 0, 1).unwrap();
        TabularPolicy::from_conditionals(shape, PromptSet::uniform(1).unwrap(), |_| vec![p0, 1.0 - p0]).unwrap()
    }

    fn random(t: usize, k: usize, seed: u64) -> TabularPolicy {
        TabularPolicy::new(
            Vocab::new(2).unwrap(),
            t,
            k,
            PromptSet::weighted(&[1.0, 3.0]).unwrap(),
            InitSpec::SeededRandom { scale: 1.0, seed },
        )
        .unwrap()
    }

    #[test]
    fn advantage_two_point() {
        let student = two_point(0.5);
        let teacher = two_point(0.8);
        let traj = Trajectory::new(0, vec![0]);
        let a = advantages(&student, Some(&teacher), &traj, None).unwrap();
        assert!((a.per_token[0] - (0.8f64 / 0.5).ln()).abs() < 1e-15);
        assert!((a.per_token[0] - 0.470_004).abs() < 1e-6);
        assert!(a.clipped.is_none());
        let c = advantages(&student, Some(&teacher), &traj, Some(0.1)).unwrap();
        assert_eq!(c.clipped.unwrap(), vec![0.1]);
        let same = advantages(&teacher, Some(&teacher), &traj, None).unwrap();
        assert_eq!(same.total, 0.0);
    }

    #[test]
    fn advantage_paths_agree() {
        let student = random(3, 1, 1);
        let teacher = random(3, 2, 2);
        let mut rng = SeededRng::new(0);
        for _ in 0..20 {
            let traj = student.sample_trajectory(1, &mut rng).unwrap();
            let live = advantages(&student, Some(&teacher), &traj, None).unwrap();
            let stored = traj
                .clone()
                .with_teacher_logprobs(teacher.token_logprobs(&traj).unwrap())
                .unwrap();
            let offline = advantages(&student, None, &stored, None).unwrap();
            for (a, b) in live.per_token.iter().zip(&offline.per_token) {
                assert!((a - b).abs() < 1e-12);
            }
            assert!((live.total - live.per_token.iter().sum::<f64>()).abs() < 1e-12);
        }
        let traj = Trajectory::new(0, vec![0, 0, 0]);
        assert!(matches!(
            advantages(&student, None, &traj, None),
            Err(Error::MissingTeacher)
        ));
        assert!(advantages(&student, Some(&teacher), &traj, Some(0.0)).is_err());
    }

    #[test]
    fn j_on_is_negative_kl() {
        let o = Oracle::default();
        let s = random(3, 1, 3);
        let t = random(3, 2, 4);
        let j = j_on_exact(&o, &s, &t).unwrap();
        assert!((j + o.kl(&s, &t).unwrap()).abs() < 1e-10);
        assert!(j <= 0.0);
        assert_eq!(j_on_exact(&o, &t, &t).unwrap(), 0.0);
        let two = j_on_exact(&o, &two_point(0.8), &two_point(0.5)).unwrap();
        assert!((two + 0.192_745_2).abs() < 1e-6);
    }

    #[test]
    fn j_off_brute_force_nested_loops() {
        // V=2, T=2: explicit loops over prompt, a1, a2 without the walker
        let o = Oracle::default();
        let s = random(2, 1, 5);
        let t = random(2, 0, 6);
        let r = random(2, 1, 7);
        let mut expected = 0.0;
        for q in 0..2 {
            for a1 in 0..2u32 {
                for a2 in 0..2u32 {
                    let x = [a1, a2];
                    let lp = |p: &TabularPolicy, i: usize| {
                        let g = p.shape().group(q, i, &x);
                        p.group_probs(g)[x[i] as usize].ln()
                    };
                    let ref_p = (lp(&r, 0) + lp(&r, 1)).exp();
                    let adv = lp(&t, 0) - lp(&s, 0) + lp(&t, 1) - lp(&s, 1);
                    expected += r.prompt_set().weight(q) * ref_p * adv;
                }
            }
        }
        assert!((j_off_exact(&o, &s, &t, &r).unwrap() - expected).abs() < 1e-12);
        assert!((j_off_exact(&o, &s, &t, &s).unwrap() - j_on_exact(&o, &s, &t).unwrap()).abs() < 1e-12);
        assert_eq!(j_off_exact(&o, &t, &t, &r).unwrap(), 0.0);
    }

    #[test]
    fn grad_two_point_manual() {
        let o = Oracle::default();
        let (p, q) = (0.3, 0.8);
        let student = two_point(p);
        let teacher = two_point(q);
        let g = grad_j_on_exact(&o, &student, &teacher).unwrap();
        // two-term sum: x=0 with prob p, x=1 with prob 1-p
        let a0 = (q / p).ln();
        let a1 = ((1.0 - q) / (1.0 - p)).ln();
        let e0 = p * a0 * (1.0 - p) + (1.0 - p) * a1 * (-p);
        let e1 = p * a0 * (-(1.0 - p)) + (1.0 - p) * a1 * p;
        assert!((g.values()[0] - e0).abs() < 1e-14);
        assert!((g.values()[1] - e1).abs() < 1e-14);
        let zero = grad_j_on_exact(&o, &teacher, &teacher).unwrap();
        assert!(zero.max_abs() < 1e-12);
    }

    #[test]
    fn moments_identities() {
        let o = Oracle::default();
        let s = random(3, 1, 8);
        let t = random(3, 2, 9);
        let r = random(3, 0, 10);
        let m = gradient_moments(&o, &s, &t, &r).unwrap();
        assert!((m.mean_weight - 1.0).abs() < 1e-12);
        assert!(m.on_policy.max_abs_diff(&m.importance_weighted) < 1e-10);
        let rebuilt = &m.on_policy - &m.covariance();
        assert!(rebuilt.max_abs_diff(&m.off_policy) < 1e-10);
        let on = grad_j_on_exact(&o, &s, &t).unwrap();
        assert!(on.max_abs_diff(&m.on_policy) < 1e-14);
        let at_ref = covariance_term(&o, &r, &t, &r).unwrap();
        assert!(at_ref.max_abs() < 1e-12);
    }

    #[test]
    fn mc_zero_when_student_is_teacher() {
        let t = random(2, 1, 11);
        let mut rng = SeededRng::new(2);
        let g = grad_mc(&t, Some(&t), GradientSource::Online, 100, None, &mut rng).unwrap();
        assert!(g.mean.values().iter().all(|v| *v == 0.0));
        assert_eq!(g.teacher_evals, 100);
        assert!(grad_mc(&t, None, GradientSource::Online, 10, None, &mut rng).is_err());
    }
}
