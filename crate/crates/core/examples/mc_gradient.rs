//! Sampled gradients against the exact ones: the estimate from reference
//! rollouts targets the offline gradient, fresh student rollouts target the
//! online one, and clipping trades bias for variance.

use lightning_opd::objectives::{grad_j_off_exact, grad_j_on_exact, grad_mc, GradientSource};
use lightning_opd::oracle::Oracle;
use lightning_opd::pipeline::precompute_dataset;
use lightning_opd::{InitSpec, PromptSet, SeededRng, TabularPolicy, Vocab};

fn main() -> lightning_opd::Result<()> {
    let vocab = Vocab::new(3)?;
    let prompts = PromptSet::weighted(&[0.3, 0.7])?;
    let make = |seed| {
        TabularPolicy::new(
            vocab,
            2,
            1,
            prompts.clone(),
            InitSpec::SeededRandom { scale: 1.0, seed },
        )
    };
    let (student, teacher, reference) = (make(1)?, make(2)?, make(3)?);
    let o = Oracle::default();
    let exact_off = grad_j_off_exact(&o, &student, &teacher, &reference)?;
    let exact_on = grad_j_on_exact(&o, &student, &teacher)?;
    let data = precompute_dataset(&reference, &teacher, ("ref", "T"), 50_000, &mut SeededRng::new(0))?;

    let mut rng = SeededRng::new(1);
    let cases = [
        ("dataset pass", GradientSource::DatasetPass(&data), &exact_off),
        ("ref rollouts", GradientSource::Rollouts(&reference), &exact_off),
        ("online", GradientSource::Online, &exact_on),
    ];
    for (label, source, exact) in cases {
        let mc = grad_mc(&student, Some(&teacher), source, 100_000, None, &mut rng)?;
        let worst_z = mc
            .mean
            .values()
            .iter()
            .zip(exact.values())
            .zip(mc.stderr.values())
            .map(|((m, e), s)| if *s > 0.0 { (m - e).abs() / s } else { 0.0 })
            .fold(0.0, f64::max);
        println!(
            "{label:<13} n={:>6} cosine {:.5} worst |z| {:.2} teacher evals {}",
            mc.samples,
            mc.mean.cosine(exact),
            worst_z,
            mc.teacher_evals
        );
    }

    for tau in [0.1, 0.5, 2.0] {
        let mc = grad_mc(
            &student,
            None,
            GradientSource::DatasetPass(&data),
            0,
            Some(tau),
            &mut rng,
        )?;
        println!("tau {tau:<4} cosine to unclipped {:.5}", mc.mean.cosine(&exact_off));
    }
    Ok(())
}
