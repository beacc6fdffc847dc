//! Exact expectations by enumeration: KL, chi-squared and the advantage
//! scales, plus what happens when the enumeration cap is hit.

use lightning_opd::oracle::{score_bound_g, Oracle};
use lightning_opd::{InitSpec, PromptSet, TabularPolicy, Vocab};

fn policy(order: usize, seed: u64) -> lightning_opd::Result<TabularPolicy> {
    TabularPolicy::new(
        Vocab::new(3)?,
        3,
        order,
        PromptSet::uniform(2)?,
        InitSpec::SeededRandom { scale: 1.0, seed },
    )
}

fn main() -> lightning_opd::Result<()> {
    let oracle = Oracle::default();
    let student = policy(1, 1)?;
    let teacher = policy(2, 2)?;
    let reference = policy(1, 3)?;

    let tables = oracle.enumerate_all(&student)?;
    for (q, t) in tables.iter().enumerate() {
        println!("prompt {q}: {} responses, total mass {:.15}", t.len(), t.total_mass());
    }

    println!("KL(student || teacher)     = {:.6}", oracle.kl(&student, &teacher)?);
    println!("KL(teacher || student)     = {:.6}", oracle.kl(&teacher, &student)?);
    println!(
        "chi2(student || reference) = {:.6}",
        oracle.chi_squared(&student, &reference)?
    );
    println!(
        "sigma_A                    = {:.6}",
        oracle.sigma_a(&student, &teacher, &reference)?
    );
    println!("G                          = {:.6}", score_bound_g(&student));

    match Oracle::with_cap(10).kl(&student, &teacher) {
        Ok(_) => println!("cap 10 was not enforced"),
        Err(e) => println!("cap 10: {e}"),
    }
    Ok(())
}
