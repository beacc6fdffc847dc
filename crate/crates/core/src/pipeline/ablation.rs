use std::fmt::{self, Write as _};

use crate::error::{Error, Result};
use crate::oracle::Oracle;
use crate::policy::TabularPolicy;
use crate::rng::SeededRng;

use super::data::{generate_sft_data, precompute_dataset};
use super::sft::{sft_fit, SftConfig};
use super::train::{train_offline, train_online, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Paradigm {
    Offline,
    Online,
}

impl fmt::Display for Paradigm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Paradigm::Offline => "offline",
            Paradigm::Online => "online",
        })
    }
}

#[derive(Debug, Clone)]
pub struct AblationConfig {
    pub sft: SftConfig,
    pub sft_per_prompt: usize,
    pub opd_per_prompt: usize,
    pub train: TrainConfig,
    pub seed: u64,
    pub enumeration_cap: u64,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            sft: SftConfig::default(),
            sft_per_prompt: 500,
            opd_per_prompt: 2000,
            train: TrainConfig {
                steps: 10,
                ..TrainConfig::default()
            },
            seed: 0,
            enumeration_cap: crate::oracle::DEFAULT_ENUMERATION_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationCell {
    /// Index of the teacher used for SFT (0 = A, 1 = B).
    pub sft_teacher: usize,
    /// Index of the teacher used for distillation.
    pub opd_teacher: usize,
    pub paradigm: Paradigm,
    /// Exact `KL(pi_final || pi_opd_teacher)`.
    pub final_kl: f64,
    pub teacher_evals: u64,
}

impl AblationCell {
    pub fn is_diagonal(&self) -> bool {
        self.sft_teacher == self.opd_teacher
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominanceSummary {
    pub degenerate: bool,
    /// Smallest `KL(off-diagonal) - KL(diagonal)` over OPD teachers, per paradigm.
    pub offline_margin: f64,
    pub online_margin: f64,
    pub offline_holds: bool,
    pub online_holds: bool,
}

impl DominanceSummary {
    pub fn holds(&self) -> bool {
        self.offline_holds && self.online_holds
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationGrid {
    pub labels: [String; 2],
    pub cells: Vec<AblationCell>,
    /// `sigma_Delta` between the two teachers measured under each SFT row's
    /// reference policy.
    pub sigma_delta: [f64; 2],
    pub degenerate: bool,
}

impl AblationGrid {
    pub fn cell(&self, sft: usize, opd: usize, paradigm: Paradigm) -> &AblationCell {
        self.cells
            .iter()
            .find(|c| c.sft_teacher == sft && c.opd_teacher == opd && c.paradigm == paradigm)
            .expect("grid is complete")
    }

    fn margin(&self, paradigm: Paradigm) -> f64 {
        (0..2)
            .map(|opd| self.cell(1 - opd, opd, paradigm).final_kl - self.cell(opd, opd, paradigm).final_kl)
            .fold(f64::INFINITY, f64::min)
    }

    /// For every OPD teacher, the consistent cell must beat the mismatched
    /// cell by more than `margin`, separately for each paradigm.
    pub fn diagonal_dominance(&self, margin: f64) -> DominanceSummary {
        let offline_margin = self.margin(Paradigm::Offline);
        let online_margin = self.margin(Paradigm::Online);
        DominanceSummary {
            degenerate: self.degenerate,
            offline_margin,
            online_margin,
            offline_holds: !self.degenerate && offline_margin > margin,
            online_holds: !self.degenerate && online_margin > margin,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# sigma_delta[{}]={} sigma_delta[{}]={}\n",
            self.labels[0], self.sigma_delta[0], self.labels[1], self.sigma_delta[1]
        );
        out.push_str("paradigm,sft_teacher,opd_teacher,diagonal,final_kl,teacher_evals\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                c.paradigm,
                self.labels[c.sft_teacher],
                self.labels[c.opd_teacher],
                c.is_diagonal(),
                c.final_kl,
                c.teacher_evals
            );
        }
        out
    }
}

/// Runs the 2x2 {SFT teacher} x {OPD teacher} grid for both trainers.
///
/// Row `i` fits a reference policy on data from teacher `i`, starting from
/// `student_base`. Each column then distills toward teacher `j`: offline from
/// a dataset of reference rollouts, online from the reference as init.
pub fn consistency_ablation(
    student_base: &TabularPolicy,
    teacher_a: &TabularPolicy,
    teacher_b: &TabularPolicy,
    config: &AblationConfig,
) -> Result<AblationGrid> {
    student_base.ensure_compatible(teacher_a)?;
    student_base.ensure_compatible(teacher_b)?;
    let oracle = Oracle::with_cap(config.enumeration_cap);
    oracle.check_feasible(student_base.shape())?;
    if config.sft_per_prompt == 0 || config.opd_per_prompt == 0 {
        return Err(Error::Config("dataset sizes must be >= 1".into()));
    }
    let teachers = [teacher_a, teacher_b];
    let labels = ["A".to_string(), "B".to_string()];
    let degenerate = teacher_a == teacher_b;
    let root = SeededRng::new(config.seed);
    let mut cells = Vec::with_capacity(8);
    let mut sigma_delta = [0.0; 2];
    for (row, sft_teacher) in teachers.iter().enumerate() {
        let mut rng = root.fork(row as u64);
        let data = generate_sft_data(sft_teacher, &labels[row], config.sft_per_prompt, &mut rng)?;
        let reference = sft_fit(student_base, &data, config.sft)?;
        sigma_delta[row] = oracle.sigma_delta(sft_teacher, teachers[1 - row], &reference)?;
        for (col, opd_teacher) in teachers.iter().enumerate() {
            let mut rng = root.fork(2 + 2 * row as u64 + col as u64);
            let dataset = precompute_dataset(
                &reference,
                opd_teacher,
                (&format!("ref_{}", labels[row]), &labels[col]),
                config.opd_per_prompt,
                &mut rng,
            )?;
            let train = TrainConfig {
                seed: config.train.seed ^ (row as u64 * 2 + col as u64),
                monitor_every: 0,
                ..config.train.clone()
            };
            let (off, off_log) = train_offline(&reference, &dataset, &train, None)?;
            cells.push(AblationCell {
                sft_teacher: row,
                opd_teacher: col,
                paradigm: Paradigm::Offline,
                final_kl: oracle.kl(&off, opd_teacher)?,
                teacher_evals: off_log.teacher_evals(),
            });
            let (on, on_log) = train_online(&reference, opd_teacher, &train)?;
            cells.push(AblationCell {
                sft_teacher: row,
                opd_teacher: col,
                paradigm: Paradigm::Online,
                final_kl: oracle.kl(&on, opd_teacher)?,
                teacher_evals: on_log.teacher_evals(),
            });
        }
    }
    Ok(AblationGrid {
        labels,
        cells,
        sigma_delta,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{InitSpec, PromptSet, Vocab};

    fn policy(seed: u64) -> TabularPolicy {
        TabularPolicy::new(
            Vocab::new(2).unwrap(),
            2,
            1,
            PromptSet::uniform(1).unwrap(),
            InitSpec::SeededRandom { scale: 1.0, seed },
        )
        .unwrap()
    }

    fn small() -> AblationConfig {
        AblationConfig {
            sft_per_prompt: 50,
            opd_per_prompt: 50,
            train: TrainConfig {
                steps: 5,
                batch: 8,
                ..TrainConfig::default()
            },
            ..AblationConfig::default()
        }
    }

    #[test]
    fn identical_teachers_give_a_degenerate_grid() {
        let t = policy(1);
        let grid = consistency_ablation(&policy(0), &t, &t, &small()).unwrap();
        assert!(grid.degenerate);
        assert_eq!(grid.sigma_delta, [0.0, 0.0]);
        let summary = grid.diagonal_dominance(0.0);
        assert!(!summary.holds());
        assert_eq!(grid.cells.len(), 8);
    }

    #[test]
    fn grid_csv_and_counters() {
        let grid = consistency_ablation(&policy(0), &policy(1), &policy(2), &small()).unwrap();
        let csv = grid.to_csv();
        assert!(csv.starts_with("# sigma_delta[A]="));
        assert_eq!(csv.lines().count(), 10);
        for c in &grid.cells {
            match c.paradigm {
                Paradigm::Offline => assert_eq!(c.teacher_evals, 0),
                Paradigm::Online => assert_eq!(c.teacher_evals, 40),
            }
            assert!(c.final_kl >= 0.0);
        }
    }
}
