//! Frequency ablation: the full model against variants without the
//! frequency loss and without the frequency branch, compared by the
//! log-spectral distance of their composites on held-out textures.

use std::fmt;

use crate::commands::load_dataset;
use crate::config::RunConfig;
use crate::error::Result;
use crate::io::dataset::synth_textures;
use crate::model::FusionMode;
use crate::tensor::Real;
use crate::train::{evaluate, Trainer};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Full,
    NoFreqLoss,
    NoFreqBranch,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Full, Variant::NoFreqLoss, Variant::NoFreqBranch];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoFreqLoss => "w/o fre loss",
            Variant::NoFreqBranch => "w/o fre branch",
        }
    }

    /// `base` with this variant's fusion mode and frequency weight.
    pub fn configure(self, base: &RunConfig) -> RunConfig {
        let mut cfg = base.clone();
        match self {
            Variant::Full => {}
            Variant::NoFreqLoss => cfg.weights.frequency = 0.0,
            Variant::NoFreqBranch => {
                cfg.weights.frequency = 0.0;
                cfg.generator.fusion = FusionMode::None;
            }
        }
        cfg
    }
}

#[derive(Clone, Debug)]
pub struct AblationConfig {
    /// Shared settings; `seed` is replaced per run.
    pub base: RunConfig,
    pub seeds: Vec<u64>,
    pub heldout_count: usize,
    pub heldout_seed: u64,
    /// Seed of the evaluation masks.
    pub eval_seed: u64,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            base: RunConfig::default(),
            seeds: (0..5).collect(),
            heldout_count: 16,
            heldout_seed: 1_000_003,
            eval_seed: 77,
        }
    }
}

/// Mean log-spectral distance per seed (rows) and variant (columns, in
/// [`Variant::ALL`] order).
#[derive(Clone, Debug, Default)]
pub struct AblationTable {
    pub seeds: Vec<u64>,
    pub lsd: Vec<[Real; 3]>,
}

impl AblationTable {
    /// Seeds where the full model beats the variant without the branch.
    pub fn full_wins(&self) -> usize {
        self.lsd.iter().filter(|r| r[0] < r[2]).count()
    }

    /// Mean rank (1 = lowest distance) of each variant across seeds. Ties
    /// share the average rank.
    pub fn mean_ranks(&self) -> [Real; 3] {
        let mut sum = [0.0; 3];
        for row in &self.lsd {
            for (i, s) in sum.iter_mut().enumerate() {
                let below = row.iter().filter(|&&v| v < row[i]).count() as Real;
                let equal = row.iter().filter(|&&v| v == row[i]).count() as Real;
                *s += below + (equal + 1.0) / 2.0;
            }
        }
        let n = self.lsd.len().max(1) as Real;
        sum.map(|s| s / n)
    }

    /// Full model below the no-branch variant on all but at most one seed, and
    /// the no-loss variant strictly between the two in mean rank.
    pub fn direction_holds(&self) -> bool {
        let r = self.mean_ranks();
        let needed = self.lsd.len().saturating_sub(1);
        self.full_wins() >= needed && r[0] < r[1] && r[1] < r[2]
    }
}

impl fmt::Display for AblationTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:>6}", "seed")?;
        for v in Variant::ALL {
            write!(f, " {:>16}", v.name())?;
        }
        writeln!(f)?;
        for (seed, row) in self.seeds.iter().zip(&self.lsd) {
            write!(f, "{seed:>6}")?;
            for v in row {
                write!(f, " {v:>16.6}")?;
            }
            writeln!(f)?;
        }
        write!(f, "{:>6}", "rank")?;
        for r in self.mean_ranks() {
            write!(f, " {r:>16.2}")?;
        }
        writeln!(f)
    }
}

/// Trains one variant for one seed in memory and returns the mean
/// log-spectral distance of its composites on the held-out set.
pub fn run_variant(cfg: &AblationConfig, variant: Variant, seed: u64) -> Result<Real> {
    let mut run = variant.configure(&cfg.base);
    run.seed = seed;
    let size = run.generator.input_size;
    let mut trainer = Trainer::new(run.clone(), load_dataset(&run)?)?;
    while trainer.step < run.iterations {
        trainer.train_step()?;
    }
    let heldout = synth_textures(cfg.heldout_seed, cfg.heldout_count, size)?;
    let report = evaluate(&trainer.generator, &trainer.gen_params, &heldout, &trainer.masks, cfg.eval_seed)?;
    Ok(report.mean_lsd())
}

/// Runs every variant for every seed. `progress` sees each finished cell.
pub fn run_ablation(cfg: &AblationConfig, mut progress: impl FnMut(u64, Variant, Real)) -> Result<AblationTable> {
    let mut table = AblationTable::default();
    for &seed in &cfg.seeds {
        let mut row = [0.0; 3];
        for (slot, v) in row.iter_mut().zip(Variant::ALL) {
            *slot = run_variant(cfg, v, seed)?;
            progress(seed, v, *slot);
        }
        table.seeds.push(seed);
        table.lsd.push(row);
    }
    Ok(table)
}

#[cfg(all(test, not(feature = "f32")))]
mod tests {
    use super::*;

    fn table(rows: &[[Real; 3]]) -> AblationTable {
        AblationTable {
            seeds: (0..rows.len() as u64).collect(),
            lsd: rows.to_vec(),
        }
    }

    #[test]
    fn ranks_average_ties() {
        let t = table(&[[1.0, 2.0, 3.0], [2.0, 2.0, 1.0]]);
        assert_eq!(t.mean_ranks(), [1.75, 2.25, 2.0]);
    }

    #[test]
    fn direction_needs_all_but_one_win() {
        let good = table(&[
            [1.0, 2.0, 3.0],
            [1.0, 2.0, 3.0],
            [1.0, 3.0, 2.0],
            [1.0, 2.0, 3.0],
            [3.0, 2.0, 1.0],
        ]);
        assert_eq!(good.full_wins(), 4);
        assert!(good.direction_holds());
        let mut bad = good.clone();
        bad.lsd[0] = [3.0, 2.0, 1.0];
        assert!(!bad.direction_holds());
    }

    #[test]
    fn variants_configure_fusion_and_weight() {
        let base = RunConfig::default();
        let c = Variant::NoFreqBranch.configure(&base);
        assert_eq!((c.generator.fusion, c.weights.frequency), (FusionMode::None, 0.0));
        let c = Variant::NoFreqLoss.configure(&base);
        assert_eq!((c.generator.fusion, c.weights.frequency), (FusionMode::Fscab, 0.0));
        assert_eq!(Variant::Full.configure(&base), base);
    }
}
