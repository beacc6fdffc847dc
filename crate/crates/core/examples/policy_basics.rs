//! Builds an order-1 policy, samples a few responses, scores them, and
//! round-trips the table through the text format.

use lightning_opd::policy::{read_policy, write_policy};
use lightning_opd::{InitSpec, PromptSet, SeededRng, TabularPolicy, Vocab};

fn main() -> lightning_opd::Result<()> {
    let prompts = PromptSet::weighted(&[1.0, 3.0])?;
    let policy = TabularPolicy::new(
        Vocab::new(3)?,
        4,
        1,
        prompts,
        InitSpec::SeededRandom { scale: 1.0, seed: 7 },
    )?;
    let shape = policy.shape();
    println!(
        "V={} T={} k={} prompts={} groups={} params={} responses/prompt={}",
        shape.vocab(),
        shape.horizon(),
        shape.order(),
        shape.prompts(),
        shape.num_groups(),
        shape.num_params(),
        shape.sequence_count()
    );

    let mut rng = SeededRng::new(0);
    for _ in 0..4 {
        let q = policy.prompt_set().sample(&mut rng);
        let traj = policy.sample_trajectory(q, &mut rng)?;
        let per_token: Vec<String> = policy
            .token_logprobs(&traj)?
            .iter()
            .map(|x| format!("{x:.3}"))
            .collect();
        println!(
            "prompt {q} tokens {:?} log-probs [{}] total {:.4}",
            traj.tokens,
            per_token.join(", "),
            policy.seq_logprob(&traj)?
        );
    }

    let text = write_policy(&policy);
    let back = read_policy(&text)?;
    println!(
        "text format: {} bytes, round trip exact: {}",
        text.len(),
        back == policy
    );
    Ok(())
}
