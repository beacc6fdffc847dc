use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::diagnostics::verify_suite;
use crate::error::{Error, Result};
use crate::instances::biased_teacher;
use crate::oracle::Oracle;
use crate::pipeline::{
    consistency_ablation, generate_sft_data, precompute_dataset, sft_fit, train_offline, train_online, AblationConfig,
    TrainConfig,
};
use crate::policy::{write_policy, InitSpec, PolicyShape, PromptSet, TabularPolicy, Vocab};
use crate::rng::SeededRng;

use super::config::ExperimentConfig;

/// Result of a command: whether its checks passed, a human-readable
/// summary and the same facts as JSON.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub passed: bool,
    pub summary: String,
    pub json: serde_json::Value,
}

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn prepare(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// The teacher and uniform base student of the `[instance]` section.
struct Setup {
    teacher: TabularPolicy,
    base: TabularPolicy,
}

/// Rejects instances past the enumeration cap before any table is allocated.
fn check_instance(config: &ExperimentConfig, vocab: Vocab, prompts: usize) -> Result<()> {
    let shape = PolicyShape::new(vocab, config.instance.horizon, 0, prompts)?;
    Oracle::with_cap(config.enumeration_cap).check_feasible(&shape)
}

fn setup(config: &ExperimentConfig) -> Result<Setup> {
    let inst = &config.instance;
    let vocab = Vocab::new(inst.vocab)?;
    let prompts = PromptSet::weighted(&inst.prompt_weights)?;
    check_instance(config, vocab, prompts.len())?;
    let base = TabularPolicy::new(
        vocab,
        inst.horizon,
        inst.student_order,
        prompts.clone(),
        InitSpec::Uniform,
    )?;
    let teacher = TabularPolicy::new(
        vocab,
        inst.horizon,
        inst.teacher_order,
        prompts,
        InitSpec::SeededRandom {
            scale: inst.teacher_scale,
            seed: SeededRng::new(config.seed).fork(1).next_u64(),
        },
    )?;
    Ok(Setup { teacher, base })
}

/// Stage 1: sample SFT data from the teacher and fit the reference policy.
fn stage_one(config: &ExperimentConfig, s: &Setup) -> Result<TabularPolicy> {
    let root = SeededRng::new(config.seed);
    let data = generate_sft_data(&s.teacher, "teacher", config.sft.per_prompt, &mut root.fork(2))?;
    sft_fit(&s.base, &data, config.sft_config())
}

/// Runs the randomized identity and bound suite.
pub fn cmd_verify(config: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let summary = verify_suite(&config.suite_config())?;
    prepare(out)?;
    write_json(&out.join("verify.json"), &summary.reports)?;
    let mut tally: BTreeMap<&str, (usize, usize, usize)> = BTreeMap::new();
    for r in &summary.reports {
        let e = tally.entry(&r.name).or_default();
        e.0 += 1;
        e.1 += r.pass as usize;
        e.2 += (!r.asserted) as usize;
    }
    let mut text = String::new();
    for (name, (runs, pass, desc)) in &tally {
        let _ = writeln!(text, "{name}: {pass}/{runs} pass ({desc} descriptive)");
    }
    for r in summary.failures() {
        let _ = writeln!(
            text,
            "FAIL {} instance {:?}: lhs {:e} rhs {:e} slack {:e}",
            r.name, r.instance, r.lhs, r.rhs, r.slack
        );
    }
    let passed = summary.all_pass();
    let _ = writeln!(text, "verify: {}", if passed { "all checks pass" } else { "FAILED" });
    Ok(Outcome {
        passed,
        summary: text,
        json: serde_json::to_value(&summary.reports)?,
    })
}

/// SFT, dataset precomputation, offline training; optionally an online run
/// from the same reference for comparison.
pub fn cmd_pipeline(config: &ExperimentConfig, out: &Path, compare_online: bool) -> Result<Outcome> {
    let s = setup(config)?;
    let oracle = Oracle::with_cap(config.enumeration_cap);
    let root = SeededRng::new(config.seed);
    let reference = stage_one(config, &s)?;
    let dataset = precompute_dataset(
        &reference,
        &s.teacher,
        ("reference", "teacher"),
        config.data.per_prompt,
        &mut root.fork(3),
    )?;
    let audit = dataset.audit(&s.teacher)?;
    let train = config.train_config();
    let (offline, off_log) = train_offline(&reference, &dataset, &train, Some(&s.teacher))?;

    prepare(out)?;
    write_atomic(&out.join("teacher.policy"), write_policy(&s.teacher).as_bytes())?;
    write_atomic(&out.join("reference.policy"), write_policy(&reference).as_bytes())?;
    dataset.write(&out.join("dataset.jsonl"))?;
    write_atomic(&out.join("student_offline.policy"), write_policy(&offline).as_bytes())?;
    write_atomic(&out.join("train_offline.csv"), off_log.to_csv().as_bytes())?;

    let kl_reference = oracle.kl(&reference, &s.teacher)?;
    let kl_offline = oracle.kl(&offline, &s.teacher)?;
    let mut text = format!(
        "reference KL to teacher: {kl_reference}\n\
         dataset records: {} (audit max |stored - recomputed| = {audit:e})\n\
         final KL offline: {kl_offline}\n\
         offline teacher evaluations on the update path: {}\n",
        dataset.len(),
        off_log.teacher_evals()
    );
    let mut json = json!({
        "kl_reference": kl_reference,
        "dataset_records": dataset.len(),
        "audit_max_abs_diff": audit,
        "kl_offline": kl_offline,
        "teacher_evals_offline": off_log.teacher_evals(),
    });
    if compare_online {
        let (online, on_log) = train_online(&reference, &s.teacher, &train)?;
        write_atomic(&out.join("student_online.policy"), write_policy(&online).as_bytes())?;
        write_atomic(&out.join("train_online.csv"), on_log.to_csv().as_bytes())?;
        let kl_online = oracle.kl(&online, &s.teacher)?;
        let _ = writeln!(
            text,
            "online teacher evaluations: {}\nsummary: kl_offline={kl_offline} kl_online={kl_online}",
            on_log.teacher_evals()
        );
        json["kl_online"] = json!(kl_online);
        json["teacher_evals_online"] = json!(on_log.teacher_evals());
    }
    write_json(&out.join("pipeline.json"), &json)?;
    Ok(Outcome {
        passed: true,
        summary: text,
        json,
    })
}

/// The 2x2 teacher-consistency grid for both trainers over several seeds.
pub fn cmd_ablate(config: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let inst = &config.instance;
    let ab = &config.ablate;
    let vocab = Vocab::new(inst.vocab)?;
    let prompts = PromptSet::weighted(&inst.prompt_weights)?;
    check_instance(config, vocab, prompts.len())?;
    let base = TabularPolicy::new(
        vocab,
        inst.horizon,
        inst.student_order,
        prompts.clone(),
        InitSpec::Uniform,
    )?;
    let teacher_shape = PolicyShape::new(vocab, inst.horizon, inst.teacher_order, prompts.len())?;
    prepare(out)?;
    let mut rows =
        String::from("seed,sigma_delta_a,sigma_delta_b,offline_margin,online_margin,offline_holds,online_holds\n");
    let mut text = String::new();
    let mut records = Vec::new();
    let mut all_hold = true;
    let mut degenerate = false;
    for k in 0..ab.seeds {
        let seed = config.seed.wrapping_add(k);
        let root = SeededRng::new(seed);
        let a = biased_teacher(
            &teacher_shape,
            &prompts,
            0,
            ab.teacher_bias,
            ab.teacher_noise,
            root.fork(10).next_u64(),
        )?;
        let b = if ab.identical_teachers {
            a.clone()
        } else {
            biased_teacher(
                &teacher_shape,
                &prompts,
                1,
                ab.teacher_bias,
                ab.teacher_noise,
                root.fork(11).next_u64(),
            )?
        };
        let cfg = AblationConfig {
            sft: config.sft_config(),
            sft_per_prompt: ab.sft_per_prompt,
            opd_per_prompt: ab.opd_per_prompt,
            train: TrainConfig {
                steps: ab.steps,
                monitor_every: 0,
                ..config.train_config()
            }
            .with_seed(seed),
            seed,
            enumeration_cap: config.enumeration_cap,
        };
        let grid = consistency_ablation(&base, &a, &b, &cfg)?;
        let d = grid.diagonal_dominance(ab.margin);
        degenerate |= d.degenerate;
        all_hold &= d.holds();
        write_atomic(&out.join(format!("ablation_seed{seed}.csv")), grid.to_csv().as_bytes())?;
        let _ = writeln!(
            rows,
            "{seed},{},{},{},{},{},{}",
            grid.sigma_delta[0],
            grid.sigma_delta[1],
            d.offline_margin,
            d.online_margin,
            d.offline_holds,
            d.online_holds
        );
        let _ = writeln!(
            text,
            "seed {seed}: sigma_delta = [{:.4}, {:.4}]  offline margin {:+.4e} ({})  online margin {:+.4e} ({})",
            grid.sigma_delta[0],
            grid.sigma_delta[1],
            d.offline_margin,
            if d.offline_holds { "holds" } else { "fails" },
            d.online_margin,
            if d.online_holds { "holds" } else { "fails" },
        );
        records.push(json!({
            "seed": seed,
            "sigma_delta": grid.sigma_delta,
            "offline_margin": d.offline_margin,
            "online_margin": d.online_margin,
            "offline_holds": d.offline_holds,
            "online_holds": d.online_holds,
            "cells": grid.cells.iter().map(|c| json!({
                "paradigm": c.paradigm.to_string(),
                "sft_teacher": grid.labels[c.sft_teacher],
                "opd_teacher": grid.labels[c.opd_teacher],
                "final_kl": c.final_kl,
                "teacher_evals": c.teacher_evals,
            })).collect::<Vec<_>>(),
        }));
    }
    write_atomic(&out.join("ablation_summary.csv"), rows.as_bytes())?;
    let passed = degenerate || all_hold;
    let verdict = if degenerate {
        "degenerate grid (identical teachers)"
    } else if all_hold {
        "diagonal dominance holds in every seed"
    } else {
        "diagonal dominance FAILED"
    };
    let _ = writeln!(text, "ablate: {verdict}");
    let json = json!({ "verdict": verdict, "seeds": records });
    write_json(&out.join("ablation.json"), &json)?;
    Ok(Outcome {
        passed,
        summary: text,
        json,
    })
}

/// Per-step importance-weight and KL traces for offline and online runs.
pub fn cmd_dynamics(config: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let s = setup(config)?;
    let root = SeededRng::new(config.seed);
    let reference = stage_one(config, &s)?;
    let dataset = precompute_dataset(
        &reference,
        &s.teacher,
        ("reference", "teacher"),
        config.data.per_prompt,
        &mut root.fork(3),
    )?;
    let train = config.train_config();
    let (_, off_log) = train_offline(&reference, &dataset, &train, Some(&s.teacher))?;
    let (_, on_log) = train_online(&reference, &s.teacher, &train)?;
    prepare(out)?;
    write_atomic(&out.join("dynamics_offline.csv"), off_log.to_csv().as_bytes())?;
    write_atomic(&out.join("dynamics_online.csv"), on_log.to_csv().as_bytes())?;
    let last_kl = |log: &crate::pipeline::TrainLog| log.records.iter().rev().find_map(|r| r.kl_to_teacher);
    let w0 = off_log.records.first().map(|r| r.w_mean);
    let text = format!(
        "offline: {} steps, w_mean at step 0 = {:?}, last logged KL = {:?}\n\
         online: {} steps, last logged KL = {:?}\n",
        off_log.records.len(),
        w0,
        last_kl(&off_log),
        on_log.records.len(),
        last_kl(&on_log)
    );
    Ok(Outcome {
        passed: true,
        summary: text,
        json: json!({
            "offline_steps": off_log.records.len(),
            "online_steps": on_log.records.len(),
            "w_mean_step0": w0,
            "kl_offline_last": last_kl(&off_log),
            "kl_online_last": last_kl(&on_log),
        }),
    })
}
