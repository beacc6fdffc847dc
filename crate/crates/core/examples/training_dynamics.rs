//! Logs per-step training dynamics to CSV: objective, gradient norm, the
//! importance-weight statistics and the exact KL and chi-squared.

use lightning_opd::pipeline::{precompute_dataset, train_offline, TrainConfig};
use lightning_opd::{InitSpec, PromptSet, SeededRng, TabularPolicy, Vocab};

fn main() -> lightning_opd::Result<()> {
    let vocab = Vocab::new(3)?;
    let prompts = PromptSet::uniform(1)?;
    let teacher = TabularPolicy::new(
        vocab,
        3,
        1,
        prompts.clone(),
        InitSpec::SeededRandom { scale: 2.0, seed: 9 },
    )?;
    let reference = TabularPolicy::new(vocab, 3, 1, prompts, InitSpec::Uniform)?;
    let data = precompute_dataset(
        &reference,
        &teacher,
        ("uniform", "teacher"),
        4000,
        &mut SeededRng::new(3),
    )?;

    let config = TrainConfig {
        steps: 121,
        monitor_every: 20,
        ..TrainConfig::default()
    };
    let (_, log) = train_offline(&reference, &data, &config, Some(&teacher))?;
    let csv = log.to_csv();
    let mut lines = csv.lines();
    println!("{}", lines.next().unwrap_or_default());
    for (line, rec) in lines.zip(&log.records) {
        if rec.kl_to_teacher.is_some() {
            println!("{line}");
        }
    }

    let last = log.records.last().expect("at least one step");
    println!(
        "# the student drifted from its rollout policy: w_std {:.3}, chi2 {:.3}",
        last.w_std,
        last.chi2_to_ref.unwrap_or(f64::NAN)
    );
    Ok(())
}
