use lightning_opd::diagnostics::{
    check_thm1, check_thm2_fixed_point, check_thm5, eps_approx, error_decomposition, ApproxConfig, FixedPointConfig,
    Thm5Regime,
};
use lightning_opd::instances::{instance_suite, InstanceSpec};
use lightning_opd::objectives::grad_j_off_exact;
use lightning_opd::oracle::Oracle;
use lightning_opd::{InitSpec, PromptSet, TabularPolicy, Vocab};

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

#[test]
fn full_capacity_students_reach_the_teacher() {
    let teacher = policy(1, 30);
    let init = policy(1, 31);
    let out = check_thm2_fixed_point(&init, &teacher, &init, &FixedPointConfig::default()).unwrap();
    assert!(out.kl_offline < 1e-6, "{}", out.kl_offline);
    assert!(out.kl_online < 1e-6, "{}", out.kl_online);
    assert!(out.eps_approx < 1e-10);
    assert!(out.shared.pass && out.floor.pass);
}

#[test]
fn capacity_floor_is_monotone_in_order() {
    let o = Oracle::default();
    let cfg = ApproxConfig::default();
    for seed in 0..5 {
        let teacher = policy(1, 40 + seed);
        let k0 = eps_approx(&o, &policy(0, 0), &teacher, &cfg).unwrap().kl;
        let k1 = eps_approx(&o, &policy(1, 0), &teacher, &cfg).unwrap().kl;
        assert!(k1 <= k0 + 1e-12 && k1 < 1e-10);
    }
}

#[test]
fn restricted_students_stay_above_the_floor() {
    let o = Oracle::default();
    let teacher = policy(1, 50);
    let init = policy(0, 51);
    let out = check_thm2_fixed_point(&init, &teacher, &init, &FixedPointConfig::default()).unwrap();
    for student in [&out.offline, &out.online] {
        let d = error_decomposition(&o, student, &teacher, &init, &ApproxConfig::default()).unwrap();
        assert_eq!(d.floor_respected, Some(true));
        assert!((d.eps_approx.unwrap() - out.eps_approx).abs() < 1e-9);
    }
}

#[test]
fn gap_bound_holds_along_exact_ascent_from_the_reference() {
    let o = Oracle::default();
    for inst in instance_suite(&InstanceSpec::default(), 10, 8).unwrap() {
        let mut student = inst.reference.clone();
        for _ in 0..100 {
            let r = check_thm1(&o, &student, &inst.teacher, &inst.reference).unwrap();
            assert!(r.pass, "slack {}", r.slack);
            let g = grad_j_off_exact(&o, &student, &inst.teacher, &inst.reference).unwrap();
            student.ascend(&g, 0.5);
        }
    }
}

#[test]
fn online_mismatch_report_turns_descriptive_as_the_student_drifts() {
    let o = Oracle::default();
    let inst = &instance_suite(&InstanceSpec::default(), 1, 12).unwrap()[0];
    let mut student = inst.reference.clone();
    let mut asserted = Vec::new();
    for _ in 0..40 {
        let r = check_thm5(
            &o,
            &student,
            &inst.teacher_alt,
            &inst.teacher,
            &inst.reference,
            Thm5Regime::default(),
        )
        .unwrap();
        asserted.push(r.asserted);
        let g = grad_j_off_exact(&o, &student, &inst.teacher, &inst.reference).unwrap();
        student.ascend(&g, 0.5);
    }
    assert!(asserted[0]);
    assert!(!asserted[39]);
}
