//! Trains an offline and an online student from the same initialization and
//! compares final KL and teacher-call budgets.

use lightning_opd::oracle::Oracle;
use lightning_opd::pipeline::{precompute_dataset, train_offline, train_online, TrainConfig};
use lightning_opd::{InitSpec, PromptSet, SeededRng, TabularPolicy, Vocab};

fn main() -> lightning_opd::Result<()> {
    let vocab = Vocab::new(2)?;
    let prompts = PromptSet::uniform(1)?;
    let make = |order, seed| {
        TabularPolicy::new(
            vocab,
            3,
            order,
            prompts.clone(),
            InitSpec::SeededRandom { scale: 1.0, seed },
        )
    };
    let teacher = make(2, 5)?;
    let oracle = Oracle::default();
    let config = TrainConfig {
        steps: 400,
        ..TrainConfig::default()
    };

    for order in [2, 0] {
        let init = make(order, 6)?;
        let data = precompute_dataset(&init, &teacher, ("init", "teacher"), 10_000, &mut SeededRng::new(1))?;
        let (off, off_log) = train_offline(&init, &data, &config, None)?;
        let (on, on_log) = train_online(&init, &teacher, &config)?;
        println!("student order {order} (teacher order 2)");
        println!(
            "  offline: KL {:.5} teacher evals {} (plus {} precomputed)",
            oracle.kl(&off, &teacher)?,
            off_log.teacher_evals(),
            data.len()
        );
        println!(
            "  online:  KL {:.5} teacher evals {}",
            oracle.kl(&on, &teacher)?,
            on_log.teacher_evals()
        );
    }
    Ok(())
}
