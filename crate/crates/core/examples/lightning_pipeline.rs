//! The full offline procedure: SFT a reference on teacher samples, precompute
//! the teacher's log-probs on reference rollouts once, then distill with no
//! further teacher calls.

use lightning_opd::oracle::Oracle;
use lightning_opd::pipeline::{generate_sft_data, precompute_dataset, sft_fit, train_offline, SftConfig, TrainConfig};
use lightning_opd::{InitSpec, PromptSet, SeededRng, TabularPolicy, Vocab};

fn main() -> lightning_opd::Result<()> {
    let vocab = Vocab::new(3)?;
    let prompts = PromptSet::uniform(2)?;
    let teacher = TabularPolicy::new(
        vocab,
        3,
        1,
        prompts.clone(),
        InitSpec::SeededRandom { scale: 1.5, seed: 1 },
    )?;
    let base = TabularPolicy::new(vocab, 3, 1, prompts, InitSpec::Uniform)?;
    let oracle = Oracle::default();
    let mut rng = SeededRng::new(42);

    let sft_data = generate_sft_data(&teacher, "teacher", 500, &mut rng.fork(0))?;
    let reference = sft_fit(&base, &sft_data, SftConfig::default())?;
    println!("KL(base || teacher)      {:.5}", oracle.kl(&base, &teacher)?);
    println!("KL(reference || teacher) {:.5}", oracle.kl(&reference, &teacher)?);

    let dataset = precompute_dataset(&reference, &teacher, ("reference", "teacher"), 5000, &mut rng.fork(1))?;
    println!("dataset: {} records, one teacher evaluation each", dataset.len());

    let config = TrainConfig {
        steps: 300,
        ..TrainConfig::default().with_seed(rng.next_u64())
    };
    let (student, log) = train_offline(&reference, &dataset, &config, Some(&teacher))?;
    for r in log.records.iter().step_by(50) {
        println!(
            "step {:>3} objective {:>8.5} grad {:.4} w_mean {:.4} KL {:.5}",
            r.step,
            r.objective,
            r.grad_norm,
            r.w_mean,
            r.kl_to_teacher.unwrap_or(f64::NAN)
        );
    }
    println!("KL(student || teacher)   {:.5}", oracle.kl(&student, &teacher)?);
    println!("teacher evaluations during training: {}", log.teacher_evals());
    Ok(())
}
