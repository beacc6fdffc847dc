//! Acceptance run: one line per criterion, non-zero exit if any fails.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use lightning_opd::cli::{cmd_ablate, cmd_dynamics, cmd_pipeline, cmd_verify, ExperimentConfig};
use lightning_opd::diagnostics::{
    check_corollary, check_is_identity, check_thm1, check_thm2_fixed_point, check_thm3, check_thm4,
    check_thm4_residual, check_thm5, verify_suite, FixedPointConfig, FixedPointOutcome, SuiteConfig, Thm5Regime,
};
use lightning_opd::instances::{biased_teacher, instance_suite, Instance, InstanceSpec};
use lightning_opd::objectives::{grad_j_off_exact, grad_mc, GradientSource};
use lightning_opd::oracle::Oracle;
use lightning_opd::pipeline::{
    consistency_ablation, precompute_dataset, train_offline_observed, AblationConfig, TrainConfig,
};
use lightning_opd::policy::PolicyShape;
use lightning_opd::{InitSpec, PromptSet, Result, SeededRng, TabularPolicy, Vocab};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn triples() -> Vec<Instance> {
    instance_suite(&InstanceSpec::default(), 200, 0).expect("instances")
}

fn policy(v: usize, t: usize, k: usize, prompts: &PromptSet, seed: u64) -> TabularPolicy {
    TabularPolicy::new(
        Vocab::new(v).unwrap(),
        t,
        k,
        prompts.clone(),
        InitSpec::SeededRandom { scale: 1.0, seed },
    )
    .unwrap()
}

fn is_identity(o: &Oracle) -> Result<Verdict> {
    let mut worst = 0.0f64;
    for i in triples() {
        worst = worst.max(check_is_identity(o, &i.student, &i.teacher, &i.reference)?.lhs);
    }
    Ok(verdict(
        worst < 1e-10,
        format!("max entrywise residual {worst:.2e} over 200 triples"),
    ))
}

fn corollary(o: &Oracle) -> Result<Verdict> {
    let mut worst = 0.0f64;
    for i in triples() {
        worst = worst.max(check_corollary(o, &i.reference, &i.teacher)?.lhs);
    }
    Ok(verdict(worst < 1e-10, format!("max gap at theta = ref {worst:.2e}")))
}

fn gap_bound(o: &Oracle) -> Result<Verdict> {
    let mut random_fail = 0;
    let mut min_slack = f64::INFINITY;
    for i in triples() {
        let r = check_thm1(o, &i.student, &i.teacher, &i.reference)?;
        random_fail += !r.pass as usize;
        min_slack = min_slack.min(r.slack);
    }
    // Offline training trajectory: V=3, T=3, order-1 student, order-2 teacher.
    let prompts = PromptSet::weighted(&[0.6, 0.4])?;
    let reference = policy(3, 3, 1, &prompts, 11);
    let teacher = policy(3, 3, 2, &prompts, 12);
    let data = precompute_dataset(&reference, &teacher, ("ref", "T"), 5000, &mut SeededRng::new(13))?;
    let config = TrainConfig {
        steps: 500,
        monitor_every: 0,
        seed: 14,
        ..TrainConfig::default()
    };
    let mut traj_fail = 0;
    let mut traj_min = f64::INFINITY;
    let mut steps = 0;
    train_offline_observed(&reference, &data, &config, None, &mut |_, student| {
        let r = check_thm1(o, student, &teacher, &reference)?;
        traj_fail += !r.pass as usize;
        traj_min = traj_min.min(r.slack);
        steps += 1;
        Ok(())
    })?;
    Ok(verdict(
        random_fail == 0 && traj_fail == 0 && steps == 500,
        format!(
            "random: {random_fail} violations, min slack {min_slack:.3e}; \
             training: {traj_fail} violations over {steps} steps, min slack {traj_min:.3e}"
        ),
    ))
}

fn covariance_identity(o: &Oracle) -> Result<Verdict> {
    let mut worst = 0.0f64;
    for i in triples() {
        worst = worst.max(check_thm3(o, &i.student, &i.teacher, &i.reference)?.lhs);
    }
    Ok(verdict(worst < 1e-10, format!("max entrywise residual {worst:.2e}")))
}

fn mismatched_teacher_bound(o: &Oracle) -> Result<Verdict> {
    let (mut gap_fail, mut res_fail) = (0, 0);
    let mut min_slack = f64::INFINITY;
    for i in triples() {
        let gap = check_thm4(o, &i.student, &i.teacher_alt, &i.teacher, &i.reference)?;
        gap_fail += !gap.pass as usize;
        min_slack = min_slack.min(gap.slack);
        for at in [&i.reference, &i.student] {
            let res = check_thm4_residual(o, at, &i.teacher_alt, &i.teacher, &i.reference)?;
            res_fail += !res.pass as usize;
            min_slack = min_slack.min(res.slack);
        }
    }
    Ok(verdict(
        gap_fail == 0 && res_fail == 0,
        format!("gap bound violations {gap_fail}, residual bound violations {res_fail} (at ref and at student), min slack {min_slack:.3e}"),
    ))
}

fn online_mismatch_at_init(o: &Oracle) -> Result<Verdict> {
    let mut fail = 0;
    let mut min_slack = f64::INFINITY;
    for i in triples() {
        let r = check_thm5(
            o,
            &i.reference,
            &i.teacher_alt,
            &i.teacher,
            &i.reference,
            Thm5Regime::default(),
        )?;
        fail += (!r.pass || !r.asserted) as usize;
        min_slack = min_slack.min(r.slack);
    }
    Ok(verdict(
        fail == 0,
        format!("violations {fail} at theta = ref, min slack {min_slack:.3e}"),
    ))
}

fn fixed_point_runs() -> Result<Vec<(FixedPointOutcome, Duration)>> {
    let prompts = PromptSet::uniform(1)?;
    (0..3u64)
        .map(|seed| {
            let start = Instant::now();
            let teacher = policy(2, 2, 1, &prompts, 100 + seed);
            let init = policy(2, 2, 0, &prompts, 200 + seed);
            let config = FixedPointConfig {
                seed,
                ..FixedPointConfig::default()
            };
            let out = check_thm2_fixed_point(&init, &teacher, &init, &config)?;
            Ok((out, start.elapsed()))
        })
        .collect()
}

fn shared_fixed_point(runs: &[(FixedPointOutcome, Duration)]) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for (seed, (o, took)) in runs.iter().enumerate() {
        pass &= o.shared.pass && o.floor.pass && *took < Duration::from_secs(120);
        parts.push(format!(
            "seed {seed}: KL off {:.5} on {:.5} eps {:.5}",
            o.kl_offline, o.kl_online, o.eps_approx
        ));
    }
    verdict(pass, parts.join("; "))
}

fn mc_fidelity() -> Result<Verdict> {
    let o = Oracle::default();
    let prompts = PromptSet::weighted(&[0.7, 0.3])?;
    let student = policy(3, 3, 1, &prompts, 21);
    let teacher = policy(3, 3, 2, &prompts, 22);
    let reference = policy(3, 3, 1, &prompts, 23);
    let exact = grad_j_off_exact(&o, &student, &teacher, &reference)?;
    let (mut inside, mut total) = (0usize, 0usize);
    for seed in 0..20u64 {
        let mut rng = SeededRng::new(1000 + seed);
        let data = precompute_dataset(&reference, &teacher, ("ref", "T"), 50_000, &mut rng)?;
        let est = grad_mc(&student, None, GradientSource::DatasetPass(&data), 0, None, &mut rng)?;
        for ((m, se), x) in est.mean.values().iter().zip(est.stderr.values()).zip(exact.values()) {
            total += 1;
            inside += ((m - x).abs() <= 4.0 * se + 1e-12) as usize;
        }
    }
    let frac = inside as f64 / total as f64;
    Ok(verdict(
        frac >= 0.99,
        format!(
            "{inside}/{total} entries within 4 SE ({:.4}), N = 10^5 per seed, 20 seeds",
            frac
        ),
    ))
}

fn ablation() -> Result<Verdict> {
    let prompts = PromptSet::uniform(1)?;
    let shape = PolicyShape::new(Vocab::new(2)?, 2, 1, 1)?;
    let base = TabularPolicy::new(Vocab::new(2)?, 2, 1, prompts.clone(), InitSpec::Uniform)?;
    let mut pass = true;
    let mut parts = Vec::new();
    for seed in 0..5u64 {
        let root = SeededRng::new(seed);
        let a = biased_teacher(&shape, &prompts, 0, 1.5, 0.5, root.fork(10).next_u64())?;
        let b = biased_teacher(&shape, &prompts, 1, 1.5, 0.5, root.fork(11).next_u64())?;
        let config = AblationConfig {
            seed,
            train: TrainConfig {
                seed,
                ..AblationConfig::default().train
            },
            ..AblationConfig::default()
        };
        let grid = consistency_ablation(&base, &a, &b, &config)?;
        let d = grid.diagonal_dominance(1e-3);
        let sd = grid.sigma_delta[0].min(grid.sigma_delta[1]);
        pass &= sd >= 0.5 && d.offline_holds && d.online_holds;
        parts.push(format!(
            "seed {seed}: min sigma_delta {sd:.2}, margins off {:+.3} on {:+.3}",
            d.offline_margin, d.online_margin
        ));
    }
    Ok(verdict(pass, parts.join("; ")))
}

fn zero_live_teacher(runs: &[(FixedPointOutcome, Duration)]) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for (o, _) in runs {
        let off_zero = o.offline_log.records.iter().all(|r| r.teacher_evals == 0);
        let batch = FixedPointConfig::default().train.batch as u64;
        let steps = o.online_log.records.len() as u64;
        let online_ok = o.online_log.teacher_evals() == steps * batch;
        pass &= off_zero && online_ok;
        parts.push(format!(
            "offline {} / online {} (= {steps} x {batch})",
            o.offline_log.teacher_evals(),
            o.online_log.teacher_evals()
        ));
    }
    verdict(pass, parts.join("; "))
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Result<Verdict> {
    let tmp = tempfile::tempdir().map_err(|e| lightning_opd::Error::Config(e.to_string()))?;
    let mut config = ExperimentConfig::default();
    config.verify.instances = 50;
    config.train.steps = 200;
    let mut compared = 0;
    let mut same = true;
    for run in ["a", "b"] {
        let root = tmp.path().join(run);
        cmd_verify(&config, &root.join("verify"))?;
        cmd_pipeline(&config, &root.join("pipeline"), true)?;
        cmd_ablate(&config, &root.join("ablate"))?;
        cmd_dynamics(&config, &root.join("dynamics"))?;
    }
    for cmd in ["verify", "pipeline", "ablate", "dynamics"] {
        let a = read_dir_bytes(&tmp.path().join("a").join(cmd));
        let b = read_dir_bytes(&tmp.path().join("b").join(cmd));
        compared += a.len();
        same &= !a.is_empty() && a == b;
    }
    let suite = |seed| {
        verify_suite(&SuiteConfig {
            instances: 50,
            seed,
            ..SuiteConfig::default()
        })
        .map(|s| serde_json::to_vec(&s.reports).unwrap())
    };
    same &= suite(5)? == suite(5)?;
    let fp = |seed| -> Result<String> {
        let (o, _) = fixed_point_runs()?.swap_remove(seed);
        Ok(format!(
            "{:?}{}{}",
            o.reports(),
            o.offline_log.to_csv(),
            o.online_log.to_csv()
        ))
    };
    same &= fp(1)? == fp(1)?;
    Ok(verdict(
        same,
        format!("{compared} report files byte-identical across reruns, plus suite and fixed-point reports"),
    ))
}

fn main() {
    let oracle = Oracle::default();
    let mut failures = 0;
    let mut report = |n: usize, name: &str, limit: Duration, f: &mut dyn FnMut() -> Result<Verdict>| {
        let start = Instant::now();
        let v = f().unwrap_or_else(|e| verdict(false, format!("error: {e}")));
        let took = start.elapsed();
        let pass = v.pass && took <= limit;
        failures += !pass as usize;
        println!(
            "[PRIMARY] criterion {n:>2} {name}: {} | {} | {:.2} s (limit {} s)",
            if pass { "PASS" } else { "FAIL" },
            v.detail,
            took.as_secs_f64(),
            limit.as_secs()
        );
    };
    let s = Duration::from_secs;
    report(1, "importance-sampling identity", s(10), &mut || is_identity(&oracle));
    report(2, "zero gap at initialization", s(5), &mut || corollary(&oracle));
    report(3, "gradient discrepancy bound", s(60), &mut || gap_bound(&oracle));
    report(4, "covariance identity", s(10), &mut || covariance_identity(&oracle));
    report(5, "mismatched-teacher bound", s(20), &mut || mismatched_teacher_bound(&oracle));
    report(6, "online mismatch bound at init", s(10), &mut || online_mismatch_at_init(&oracle));
    let mut runs = Vec::new();
    report(7, "shared fixed point", s(360), &mut || {
        runs = fixed_point_runs()?;
        Ok(shared_fixed_point(&runs))
    });
    report(8, "Monte Carlo gradient fidelity", s(120), &mut mc_fidelity);
    report(9, "teacher-consistency ablation", s(600), &mut ablation);
    report(10, "zero live-teacher evaluations", s(1), &mut || {
        if runs.is_empty() {
            return Ok(verdict(false, "criterion 7 runs unavailable"));
        }
        Ok(zero_live_teacher(&runs))
    });
    report(11, "determinism", s(600), &mut determinism);
    println!("acceptance: {} of 11 criteria failed", failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
