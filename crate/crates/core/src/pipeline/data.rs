use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::policy::{check_logprobs, PromptSet, TabularPolicy, Trajectory};
use crate::rng::SeededRng;

fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

/// Teacher-generated `(prompt, response)` pairs for the SFT stage.
#[derive(Debug, Clone, PartialEq)]
pub struct SftDataset {
    pub records: Vec<(usize, Vec<u32>)>,
    pub teacher: String,
}

#[derive(Deserialize)]
struct SftLine {
    prompt_id: usize,
    tokens: Vec<u32>,
    teacher: String,
}

impl SftDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (q, x) in &self.records {
            let _ = writeln!(
                out,
                "{{\"prompt_id\":{q},\"tokens\":{},\"teacher\":{}}}",
                serde_json::to_string(x).expect("token list"),
                json_str(&self.teacher)
            );
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        let mut teacher: Option<String> = None;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let rec: SftLine = serde_json::from_str(line)?;
            match &teacher {
                Some(t) if *t != rec.teacher => return Err(Error::Config("mixed teacher labels in SFT data".into())),
                None => teacher = Some(rec.teacher.clone()),
                _ => {}
            }
            records.push((rec.prompt_id, rec.tokens));
        }
        Ok(Self {
            records,
            teacher: teacher.unwrap_or_default(),
        })
    }
}

/// Draws `n_per_prompt` i.i.d. responses per prompt from `teacher`.
pub fn generate_sft_data(
    teacher: &TabularPolicy,
    label: &str,
    n_per_prompt: usize,
    rng: &mut SeededRng,
) -> Result<SftDataset> {
    if n_per_prompt == 0 {
        return Err(Error::Config("n_per_prompt must be >= 1".into()));
    }
    let mut records = Vec::with_capacity(n_per_prompt * teacher.prompt_set().len());
    for q in 0..teacher.prompt_set().len() {
        for _ in 0..n_per_prompt {
            records.push((q, teacher.sample_trajectory(q, rng)?.tokens));
        }
    }
    Ok(SftDataset {
        records,
        teacher: label.to_string(),
    })
}

/// Rollouts with the teacher's per-token log-probs stored alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineDataset {
    records: Vec<Trajectory>,
    horizon: usize,
    pub rollout_policy: String,
    pub teacher: String,
}

#[derive(Deserialize)]
struct OfflineLine {
    prompt_id: usize,
    tokens: Vec<u32>,
    teacher_logprobs: Vec<f64>,
    teacher: String,
    rollout_policy: String,
}

impl OfflineDataset {
    pub fn new(records: Vec<Trajectory>, rollout_policy: &str, teacher: &str) -> Result<Self> {
        let horizon = records.first().map(|r| r.tokens.len()).unwrap_or(0);
        for r in &records {
            let lp = r.teacher_logprobs.as_ref().ok_or(Error::MissingTeacher)?;
            if r.tokens.len() != horizon || lp.len() != horizon {
                return Err(Error::LengthMismatch {
                    expected: horizon,
                    got: r.tokens.len().max(lp.len()),
                });
            }
            check_logprobs(lp)?;
        }
        Ok(Self {
            records,
            horizon,
            rollout_policy: rollout_policy.to_string(),
            teacher: teacher.to_string(),
        })
    }

    pub fn records(&self) -> &[Trajectory] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// The dataset is non-empty and every record is a valid trajectory for
    /// `student`.
    pub fn check_student(&self, student: &TabularPolicy) -> Result<()> {
        if self.records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for r in &self.records {
            student.check_trajectory(r)?;
        }
        Ok(())
    }

    /// Largest `|stored - recomputed|` teacher log-prob.
    pub fn audit(&self, teacher: &TabularPolicy) -> Result<f64> {
        let mut worst = 0.0f64;
        for r in &self.records {
            let fresh = teacher.token_logprobs(r)?;
            let stored = r.teacher_logprobs.as_ref().ok_or(Error::MissingTeacher)?;
            for (a, b) in stored.iter().zip(&fresh) {
                worst = worst.max((a - b).abs());
            }
        }
        Ok(worst)
    }

    /// Uniform-with-replacement record sampler, reweighted by `p(q) / n_q`
    /// when prompt weights are not proportional to per-prompt counts.
    pub fn sampler(&self, prompts: &PromptSet) -> Result<RecordSampler> {
        if self.records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut counts = vec![0usize; prompts.len()];
        for r in &self.records {
            prompts.check_id(r.prompt_id)?;
            counts[r.prompt_id] += 1;
        }
        let n = self.records.len() as f64;
        let proportional = counts
            .iter()
            .zip(prompts.weights())
            .all(|(&c, &w)| ((c as f64 / n) - w).abs() < 1e-12);
        if proportional {
            return Ok(RecordSampler::Uniform(self.records.len()));
        }
        if let Some(q) = counts.iter().position(|&c| c == 0) {
            return Err(Error::Config(format!("dataset has no records for prompt {q}")));
        }
        let mut acc = 0.0;
        let cdf = self
            .records
            .iter()
            .map(|r| {
                acc += prompts.weight(r.prompt_id) / counts[r.prompt_id] as f64;
                acc
            })
            .collect();
        Ok(RecordSampler::Weighted(cdf))
    }

    /// One JSON object per line; reals carry 17 significant digits.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let teacher = json_str(&self.teacher);
        let rollout = json_str(&self.rollout_policy);
        for r in &self.records {
            let lps: Vec<String> = r
                .teacher_logprobs
                .as_ref()
                .expect("validated on construction")
                .iter()
                .map(|x| fmt_real(*x))
                .collect();
            let _ = writeln!(
                out,
                "{{\"prompt_id\":{},\"tokens\":{},\"teacher_logprobs\":[{}],\"teacher\":{},\"rollout_policy\":{}}}",
                r.prompt_id,
                serde_json::to_string(&r.tokens).expect("token list"),
                lps.join(","),
                teacher,
                rollout
            );
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        let mut labels: Option<(String, String)> = None;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let rec: OfflineLine = serde_json::from_str(line)?;
            let these = (rec.rollout_policy, rec.teacher);
            match &labels {
                Some(l) if *l != these => return Err(Error::Config("mixed provenance labels in dataset".into())),
                None => labels = Some(these),
                _ => {}
            }
            records.push(Trajectory::new(rec.prompt_id, rec.tokens).with_teacher_logprobs(rec.teacher_logprobs)?);
        }
        let (rollout, teacher) = labels.unwrap_or_default();
        Self::new(records, &rollout, &teacher)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::cli::write_atomic(path, self.to_jsonl().as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(&text)
    }
}

/// Draws record indices for mini-batches.
#[derive(Debug, Clone)]
pub enum RecordSampler {
    Uniform(usize),
    Weighted(Vec<f64>),
}

impl RecordSampler {
    pub fn draw(&self, rng: &mut SeededRng) -> usize {
        match self {
            RecordSampler::Uniform(n) => rng.below(*n),
            RecordSampler::Weighted(cdf) => {
                let total = *cdf.last().expect("non-empty");
                let u = rng.uniform() * total;
                cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
            }
        }
    }
}

/// Samples `n_per_prompt` rollouts per prompt from `reference` and stores
/// the teacher's per-token log-probs. The teacher is evaluated exactly once
/// per record.
pub fn precompute_dataset(
    reference: &TabularPolicy,
    teacher: &TabularPolicy,
    labels: (&str, &str),
    n_per_prompt: usize,
    rng: &mut SeededRng,
) -> Result<OfflineDataset> {
    reference.ensure_compatible(teacher)?;
    if n_per_prompt == 0 {
        return Err(Error::Config("n_per_prompt must be >= 1".into()));
    }
    let mut records = Vec::with_capacity(n_per_prompt * reference.prompt_set().len());
    for q in 0..reference.prompt_set().len() {
        for _ in 0..n_per_prompt {
            let traj = reference.sample_trajectory(q, rng)?;
            let lp = teacher.token_logprobs(&traj)?;
            records.push(traj.with_teacher_logprobs(lp)?);
        }
    }
    OfflineDataset::new(records, labels.0, labels.1)
}
