use lightning_opd::objectives::{grad_j_off_exact, grad_mc, GradientSource};
use lightning_opd::oracle::Oracle;
use lightning_opd::pipeline::{
    generate_sft_data, precompute_dataset, sft_fit, train_offline, train_offline_observed, train_online, SftConfig,
    TrainConfig,
};
use lightning_opd::{InitSpec, PromptSet, SeededRng, TabularPolicy, Vocab};

fn policy(order: usize, seed: u64) -> TabularPolicy {
    TabularPolicy::new(
        Vocab::new(2).unwrap(),
        2,
        order,
        PromptSet::uniform(1).unwrap(),
        InitSpec::SeededRandom { scale: 1.0, seed },
    )
    .unwrap()
}

fn convergence_config() -> TrainConfig {
    TrainConfig {
        lr: 0.5,
        steps: 500,
        batch: 64,
        tau: None,
        seed: 3,
        ..TrainConfig::default()
    }
}

#[test]
fn both_trainers_converge_at_full_capacity() {
    let o = Oracle::default();
    let teacher = policy(1, 1);
    let reference = policy(1, 2);
    let data = precompute_dataset(&reference, &teacher, ("ref", "T"), 10_000, &mut SeededRng::new(0)).unwrap();
    let config = convergence_config();
    let (off, log) = train_offline(&reference, &data, &config, Some(&teacher)).unwrap();
    assert!(o.kl(&off, &teacher).unwrap() < 0.01);
    assert!((log.records[0].w_mean - 1.0).abs() < 1e-10);
    for r in &log.records {
        assert!((0.5..=1.5).contains(&r.w_mean), "step {}: w_mean {}", r.step, r.w_mean);
        assert!(r.objective.is_finite() && r.grad_norm.is_finite() && r.w_std.is_finite());
    }
    let (on, log) = train_online(&reference, &teacher, &config).unwrap();
    assert!(o.kl(&on, &teacher).unwrap() < 0.01);
    assert_eq!(log.teacher_evals(), log.records.len() as u64 * 64);
}

#[test]
fn logged_kl_matches_the_oracle_at_checkpoints() {
    let o = Oracle::default();
    let teacher = policy(1, 1);
    let reference = policy(1, 2);
    let data = precompute_dataset(&reference, &teacher, ("ref", "T"), 1000, &mut SeededRng::new(0)).unwrap();
    let config = TrainConfig {
        steps: 60,
        ..convergence_config()
    };
    let mut checked = 0;
    train_offline_observed(&reference, &data, &config, Some(&teacher), &mut |rec, student| {
        if rec.step % 10 == 0 {
            let kl = o.kl(student, &teacher)?;
            let chi2 = o.chi_squared(student, &reference)?;
            assert!((rec.kl_to_teacher.unwrap() - kl).abs() < 1e-10);
            assert!((rec.chi2_to_ref.unwrap() - chi2).abs() < 1e-10);
            checked += 1;
        }
        Ok(())
    })
    .unwrap();
    assert_eq!(checked, 6);
}

#[test]
fn expected_minibatch_update_aligns_with_the_exact_gradient() {
    let o = Oracle::default();
    let teacher = policy(1, 1);
    let reference = policy(1, 2);
    let student = policy(1, 5);
    let data = precompute_dataset(&reference, &teacher, ("ref", "T"), 100_000, &mut SeededRng::new(1)).unwrap();
    let est = grad_mc(
        &student,
        None,
        GradientSource::Dataset(&data),
        100_000,
        None,
        &mut SeededRng::new(2),
    )
    .unwrap();
    let exact = grad_j_off_exact(&o, &student, &teacher, &reference).unwrap();
    assert!(est.mean.cosine(&exact) > 0.99);
}

#[test]
fn runs_are_bit_reproducible() {
    let teacher = policy(1, 1);
    let reference = policy(1, 2);
    let run = || {
        let data = precompute_dataset(&reference, &teacher, ("ref", "T"), 500, &mut SeededRng::new(7)).unwrap();
        let config = TrainConfig {
            steps: 50,
            ..TrainConfig::default()
        };
        let (off, off_log) = train_offline(&reference, &data, &config, Some(&teacher)).unwrap();
        let (on, on_log) = train_online(&reference, &teacher, &config).unwrap();
        (data.to_jsonl(), off, off_log.to_csv(), on, on_log.to_csv())
    };
    assert_eq!(run(), run());
}

#[test]
fn sft_data_follows_teacher_marginals() {
    let teacher = policy(1, 4);
    let n = 10_000;
    let data = generate_sft_data(&teacher, "T", n, &mut SeededRng::new(0)).unwrap();
    let p = teacher.group_probs(0)[0];
    let count = data.records.iter().filter(|(_, x)| x[0] == 0).count() as f64;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    assert!((count - n as f64 * p).abs() <= 3.0 * sd);
}

#[test]
fn sft_then_precompute_with_teacher_as_reference() {
    let teacher = policy(1, 4);
    let base = TabularPolicy::new(
        Vocab::new(2).unwrap(),
        2,
        1,
        PromptSet::uniform(1).unwrap(),
        InitSpec::Uniform,
    )
    .unwrap();
    let data = generate_sft_data(&teacher, "T", 5000, &mut SeededRng::new(0)).unwrap();
    let reference = sft_fit(&base, &data, SftConfig::default()).unwrap();
    assert!(Oracle::default().kl(&reference, &teacher).unwrap() < 0.01);
    let d = precompute_dataset(&reference, &reference, ("ref", "ref"), 100, &mut SeededRng::new(1)).unwrap();
    for rec in d.records() {
        assert_eq!(
            rec.teacher_logprobs.as_ref().unwrap(),
            &reference.token_logprobs(rec).unwrap()
        );
    }
    assert_eq!(d.len(), 100);
    assert_eq!(d.audit(&reference).unwrap(), 0.0);
}
