//! The 2x2 teacher-consistency grid: SFT on teacher A or B, distill toward A
//! or B, both offline and online. Matched cells should end closest.

use lightning_opd::instances::biased_teacher;
use lightning_opd::pipeline::{consistency_ablation, AblationConfig, Paradigm};
use lightning_opd::{InitSpec, PolicyShape, PromptSet, TabularPolicy, Vocab};

fn main() -> lightning_opd::Result<()> {
    let vocab = Vocab::new(3)?;
    let prompts = PromptSet::uniform(2)?;
    let shape = PolicyShape::new(vocab, 3, 2, prompts.len())?;
    let a = biased_teacher(&shape, &prompts, 0, 1.5, 0.5, 1)?;
    let b = biased_teacher(&shape, &prompts, 2, 1.5, 0.5, 2)?;
    let base = TabularPolicy::new(vocab, 3, 2, prompts, InitSpec::Uniform)?;

    let grid = consistency_ablation(&base, &a, &b, &AblationConfig::default())?;
    println!(
        "sigma_delta under ref(A) {:.4}, ref(B) {:.4}",
        grid.sigma_delta[0], grid.sigma_delta[1]
    );
    for paradigm in [Paradigm::Offline, Paradigm::Online] {
        println!("{paradigm}:            OPD=A     OPD=B");
        for sft in 0..2 {
            println!(
                "  SFT={}      {:>9.5} {:>9.5}",
                grid.labels[sft],
                grid.cell(sft, 0, paradigm).final_kl,
                grid.cell(sft, 1, paradigm).final_kl
            );
        }
    }
    let d = grid.diagonal_dominance(1e-3);
    println!(
        "dominance offline {} (margin {:.4}) online {} (margin {:.4})",
        d.offline_holds, d.offline_margin, d.online_holds, d.online_margin
    );
    Ok(())
}
