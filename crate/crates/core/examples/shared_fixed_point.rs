//! Compares where offline and online training settle, against the best KL
//! reachable in the student's class.
//!
//! With a full-capacity student all three coincide at zero. With an order-0
//! student facing an order-1 teacher they separate: the per-token surrogate
//! is not the KL gradient, and the offline fixed point depends on the
//! rollout policy.

use lightning_opd::diagnostics::{check_thm2_fixed_point, FixedPointConfig};
use lightning_opd::{InitSpec, PromptSet, TabularPolicy, Vocab};

fn main() -> lightning_opd::Result<()> {
    let vocab = Vocab::new(2)?;
    let prompts = PromptSet::uniform(1)?;
    let teacher = TabularPolicy::new(
        vocab,
        2,
        1,
        prompts.clone(),
        InitSpec::SeededRandom { scale: 1.0, seed: 100 },
    )?;

    for order in [1, 0] {
        let init = TabularPolicy::new(
            vocab,
            2,
            order,
            prompts.clone(),
            InitSpec::SeededRandom { scale: 1.0, seed: 200 },
        )?;
        let out = check_thm2_fixed_point(&init, &teacher, &init, &FixedPointConfig::default())?;
        println!(
            "order {order}: KL offline {:.6} online {:.6} best in class {:.6}",
            out.kl_offline, out.kl_online, out.eps_approx
        );
        for r in out.reports() {
            println!(
                "  {:<24} lhs {:.3e} threshold {:.0e} pass {}",
                r.name, r.lhs, r.rhs, r.pass
            );
        }
    }
    Ok(())
}
