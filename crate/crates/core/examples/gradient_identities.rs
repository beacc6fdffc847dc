//! The exact gradient identities on one instance: importance weighting
//! recovers the online gradient, the offline gradient differs from it by a
//! covariance, and the gap respects its bound.

use lightning_opd::diagnostics::{check_is_identity, check_thm1, check_thm3};
use lightning_opd::objectives::gradient_moments;
use lightning_opd::oracle::Oracle;
use lightning_opd::{InitSpec, PromptSet, TabularPolicy, Vocab};

fn policy(order: usize, seed: u64) -> lightning_opd::Result<TabularPolicy> {
    TabularPolicy::new(
        Vocab::new(3)?,
        3,
        order,
        PromptSet::uniform(1)?,
        InitSpec::SeededRandom { scale: 1.0, seed },
    )
}

fn main() -> lightning_opd::Result<()> {
    let o = Oracle::default();
    let (student, teacher, reference) = (policy(1, 11)?, policy(2, 12)?, policy(1, 13)?);

    let m = gradient_moments(&o, &student, &teacher, &reference)?;
    let cov = m.covariance();
    let mut recon = m.on_policy.clone();
    recon.add_scaled(&cov, -1.0);
    println!("|grad J_on|                       {:.6}", m.on_policy.norm());
    println!("|grad J_off|                      {:.6}", m.off_policy.norm());
    println!(
        "cosine(on, off)                   {:.6}",
        m.on_policy.cosine(&m.off_policy)
    );
    println!("E_ref[w]                          {:.15}", m.mean_weight);
    println!(
        "max |E_ref[w f] - grad J_on|      {:.3e}",
        m.importance_weighted.max_abs_diff(&m.on_policy)
    );
    println!(
        "max |grad J_on - Cov - grad J_off| {:.3e}",
        recon.max_abs_diff(&m.off_policy)
    );

    for r in [
        check_is_identity(&o, &student, &teacher, &reference)?,
        check_thm3(&o, &student, &teacher, &reference)?,
        check_thm1(&o, &student, &teacher, &reference)?,
    ] {
        println!("{:<26} lhs {:.4e} rhs {:.4e} pass {}", r.name, r.lhs, r.rhs, r.pass);
    }
    Ok(())
}
