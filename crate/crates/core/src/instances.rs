//! Seeded random problem instances for the randomized checks.

use crate::error::{Error, Result};
use crate::policy::{InitSpec, PolicyShape, PromptSet, TabularPolicy, Vocab};
use crate::rng::SeededRng;

/// Ranges random instances are drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSpec {
    pub vocab: Vec<usize>,
    pub horizon: Vec<usize>,
    pub max_prompts: usize,
    /// Standard deviation of the random logits.
    pub scale: f64,
}

impl Default for InstanceSpec {
    fn default() -> Self {
        Self {
            vocab: vec![2, 3],
            horizon: vec![1, 2, 3],
            max_prompts: 2,
            scale: 1.0,
        }
    }
}

/// A student, a reference policy in the student's class, and two teachers.
///
/// `teacher` drives the advantages; `teacher_alt` plays the mismatched
/// teacher in the consistency checks.
#[derive(Debug, Clone)]
pub struct Instance {
    pub student: TabularPolicy,
    pub reference: TabularPolicy,
    pub teacher: TabularPolicy,
    pub teacher_alt: TabularPolicy,
}

fn pick<T: Copy>(xs: &[T], rng: &mut SeededRng) -> T {
    xs[rng.below(xs.len())]
}

/// Draws one instance. Student and reference share an order; each teacher
/// gets its own random order.
pub fn random_instance(spec: &InstanceSpec, rng: &mut SeededRng) -> Result<Instance> {
    if spec.vocab.is_empty() || spec.horizon.is_empty() || spec.max_prompts == 0 {
        return Err(Error::Config("instance spec has an empty range".into()));
    }
    let vocab = Vocab::new(pick(&spec.vocab, rng))?;
    let horizon = pick(&spec.horizon, rng);
    if horizon == 0 {
        return Err(Error::ZeroHorizon);
    }
    let n_prompts = 1 + rng.below(spec.max_prompts);
    let raw: Vec<f64> = (0..n_prompts).map(|_| 0.2 + rng.uniform()).collect();
    let prompts = PromptSet::weighted(&raw)?;
    let student_order = rng.below(horizon);
    let teacher_order = rng.below(horizon);
    let alt_order = rng.below(horizon);
    let mut make = |order: usize| {
        let seed = rng.next_u64();
        TabularPolicy::new(
            vocab,
            horizon,
            order,
            prompts.clone(),
            InitSpec::SeededRandom {
                scale: spec.scale,
                seed,
            },
        )
    };
    let student = make(student_order)?;
    let reference = make(student_order)?;
    let teacher = make(teacher_order)?;
    let teacher_alt = make(alt_order)?;
    Ok(Instance {
        student,
        reference,
        teacher,
        teacher_alt,
    })
}

/// `n` instances; instance `i` depends only on `(seed, i)`.
pub fn instance_suite(spec: &InstanceSpec, n: usize, seed: u64) -> Result<Vec<Instance>> {
    let root = SeededRng::new(seed);
    (0..n)
        .map(|i| random_instance(spec, &mut root.fork(i as u64)))
        .collect()
}

/// A teacher that prefers `preferred` in every context: that token's logit
/// is raised by `bias`, and every logit gets `noise * N(0, 1)`.
pub fn biased_teacher(
    shape: &PolicyShape,
    prompts: &PromptSet,
    preferred: u32,
    bias: f64,
    noise: f64,
    seed: u64,
) -> Result<TabularPolicy> {
    let v = shape.vocab();
    if preferred as usize >= v {
        return Err(Error::TokenOutOfRange {
            token: preferred,
            vocab: v,
        });
    }
    let mut rng = SeededRng::new(seed);
    let mut logits = vec![0.0; shape.num_params()];
    for (i, l) in logits.iter_mut().enumerate() {
        *l = noise * rng.normal() + if i % v == preferred as usize { bias } else { 0.0 };
    }
    TabularPolicy::from_logits(shape.clone(), prompts.clone(), logits)
}
