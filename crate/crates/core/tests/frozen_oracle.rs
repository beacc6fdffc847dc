//! Values frozen from an independent autodiff implementation of the
//! stop-gradient surrogates on a fixed V=3, T=3, two-prompt instance.

use lightning_opd::objectives::{grad_j_off_exact, grad_j_on_exact, grad_kl_exact, j_off_exact, j_on_exact};
use lightning_opd::oracle::{score_bound_g, Oracle};
use lightning_opd::policy::PolicyShape;
use lightning_opd::{PromptSet, TabularPolicy, Vocab};

const GRAD_ON: [f64; 42] = [
    0.050267105440154426,
    -0.15668256849203238,
    0.10641546305187799,
    0.0056660681482026964,
    -0.01766113451207635,
    0.011995066363873656,
    0.0,
    0.0,
    0.0,
    0.0,
    0.0,
    0.0,
    -0.003052807118197283,
    0.0010146659061496153,
    0.002038141212047667,
    -0.01756769201170743,
    0.005838999138780356,
    0.011728692872927073,
    -0.008718094160108342,
    -0.0032072076077006694,
    0.011925301767809012,
    -0.06247754478362169,
    0.19474250812846797,
    -0.1322649633448462,
    -0.017928179594294623,
    0.055882136093251336,
    -0.037953956498956706,
    -0.006595408690370359,
    0.02055788899745179,
    -0.01396248030708144,
    -0.03795395649895671,
    0.11830248303776482,
    -0.08034852653880811,
    0.047841131626508444,
    -0.10859448393011571,
    0.06075335230360729,
    0.007929111519051455,
    -0.009806239257603013,
    0.001877127738551558,
    0.04562888636588136,
    -0.05643101067335472,
    0.010802124307473366,
];

const GRAD_OFF: [f64; 42] = [
    0.14803722065097624,
    -0.15347349582637734,
    0.005436275175401151,
    0.032518881121361934,
    -0.10136135299551072,
    0.06884247187414878,
    0.0,
    0.0,
    0.0,
    0.0,
    0.0,
    0.0,
    -0.035327604141328184,
    0.0008579079326691665,
    0.03446969620865902,
    -0.011210591633436996,
    0.007055739403871023,
    0.004154852229565974,
    0.0014249959300517792,
    -0.025431602604760958,
    0.024006606674709174,
    -0.2617945871067122,
    0.8160137323607304,
    -0.5542191452540183,
    -0.029509277655607572,
    0.09198041894275683,
    -0.06247114128714927,
    -0.2659161224031038,
    0.22958475482540522,
    0.036331367577698614,
    -0.09782507450813069,
    0.08445951130665266,
    0.013365563201478005,
    0.2724750511498185,
    -0.2793217305468327,
    0.0068466793970141555,
    0.052361701925610765,
    -0.07160240657262709,
    0.019240704647016306,
    0.019262793643179326,
    -0.02634105331646846,
    0.007078259673289132,
];

const GRAD_KL: [f64; 42] = [
    -0.019336525113967207,
    0.11437161884619519,
    -0.09503509373222808,
    -0.005018256013053415,
    0.0213890359585554,
    -0.016370779945501984,
    -0.002587634226117571,
    -0.014890806842140027,
    0.017478441068257574,
    -8.131516293641283e-19,
    -2.222614453595284e-18,
    1.2061749168901237e-18,
    0.0030528071181972903,
    -0.0010146659061496146,
    -0.0020381412120476674,
    0.01756769201170746,
    -0.005838999138780338,
    -0.011728692872927087,
    0.008718094160108353,
    0.0032072076077006707,
    -0.01192530176780901,
    0.11333009887226937,
    -0.16141914581738095,
    0.04808904694511175,
    0.017928179594294626,
    -0.055882136093251315,
    0.037953956498956734,
    0.006595408690370364,
    -0.020557888997451795,
    0.013962480307081429,
    0.11713564116591538,
    -0.13002510958813682,
    0.012889468422221462,
    -0.047841131626508444,
    0.10859448393011566,
    -0.06075335230360725,
    -0.007929111519051454,
    0.009806239257603017,
    -0.001877127738551564,
    -0.045628886365881395,
    0.05643101067335472,
    -0.010802124307473368,
];

fn fixed(order: usize, salt: usize) -> TabularPolicy {
    let shape = PolicyShape::new(Vocab::new(3).unwrap(), 3, order, 2).unwrap();
    let logits = (0..shape.num_params())
        .map(|i| ((i * 7 + salt) % 11) as f64 / 4.0 - 1.25)
        .collect();
    TabularPolicy::from_logits(shape, PromptSet::weighted(&[0.25, 0.75]).unwrap(), logits).unwrap()
}

struct Fixture {
    student: TabularPolicy,
    teacher: TabularPolicy,
    reference: TabularPolicy,
    alt: TabularPolicy,
}

fn fixture() -> Fixture {
    Fixture {
        student: fixed(1, 3),
        teacher: fixed(2, 5),
        reference: fixed(1, 8),
        alt: fixed(0, 2),
    }
}

fn close(got: f64, want: f64) {
    assert!(
        (got - want).abs() <= 1e-12 * want.abs().max(1.0),
        "got {got}, want {want}"
    );
}

fn close_all(got: &[f64], want: &[f64]) {
    assert_eq!(got.len(), want.len());
    for (g, w) in got.iter().zip(want) {
        close(*g, *w);
    }
}

#[test]
fn scalar_quantities() {
    let f = fixture();
    let o = Oracle::default();
    close(o.kl(&f.student, &f.teacher).unwrap(), 1.600508097961223);
    close(o.chi_squared(&f.student, &f.reference).unwrap(), 33.72356272799904);
    close(
        o.sigma_a(&f.student, &f.teacher, &f.reference).unwrap(),
        2.2519134738982656,
    );
    close(
        o.sigma_delta(&f.alt, &f.teacher, &f.reference).unwrap(),
        2.035102531310937,
    );
    close(j_on_exact(&o, &f.student, &f.teacher).unwrap(), -1.600508097961223);
    close(
        j_off_exact(&o, &f.student, &f.teacher, &f.reference).unwrap(),
        0.9382658881178986,
    );
    close(score_bound_g(&f.student), 1.1534651756987047);
}

#[test]
fn surrogate_gradients() {
    let f = fixture();
    let o = Oracle::default();
    let on = grad_j_on_exact(&o, &f.student, &f.teacher).unwrap();
    let off = grad_j_off_exact(&o, &f.student, &f.teacher, &f.reference).unwrap();
    close_all(on.values(), &GRAD_ON);
    close_all(off.values(), &GRAD_OFF);
    close((&on - &off).norm(), 0.9255555742469596);
}

#[test]
fn kl_gradient_is_not_the_negated_surrogate() {
    let f = fixture();
    let o = Oracle::default();
    let kl = grad_kl_exact(&o, &f.student, &f.teacher).unwrap();
    close_all(kl.values(), &GRAD_KL);
    let on = grad_j_on_exact(&o, &f.student, &f.teacher).unwrap();
    assert!((&kl + &on).max_abs() > 1e-2);
}
