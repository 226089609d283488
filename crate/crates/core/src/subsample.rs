//! Subsample construction: random unit partition, consecutive time windows,
//! and evaluation of a panel statistic on every (block, window) cell.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::panel::{PanelData, SubsamplePlan};

/// A random partition of `0..n_units` into consecutive shuffled chunks of
/// size `b`; the last block holds the remainder when `b` does not divide N.
#[derive(Debug, Clone)]
pub struct UnitPartition {
    pub blocks: Vec<Vec<usize>>,
    pub block_size: usize,
}

/// Shuffle `0..n_units` with the seeded stream and slice into chunks of `b`.
pub fn partition_units(n_units: usize, b: usize, seed: u64) -> Result<UnitPartition> {
    if b < 1 || b > n_units {
        return Err(Error::InvalidBlockSize { b, n_units });
    }
    let mut order: Vec<usize> = (0..n_units).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let blocks = order.chunks(b).map(|c| c.to_vec()).collect();
    Ok(UnitPartition { blocks, block_size: b })
}

/// All q = T - l + 1 overlapping windows as zero-based `(start, end)` pairs,
/// end inclusive.
pub fn time_windows(n_periods: usize, l: usize) -> Result<Vec<(usize, usize)>> {
    if l < 1 || l > n_periods {
        return Err(Error::InvalidWindowLength { l, n_periods });
    }
    Ok((0..=n_periods - l).map(|k| (k, k + l - 1)).collect())
}

/// A statistic evaluated on a sub-panel: the units in `units` crossed with
/// the time range `[t_start, t_start + t_len)`. Must be reentrant and return
/// a finite vector for any sub-panel with at least one unit and period.
pub trait PanelStatistic: Sync {
    fn eval(&self, panel: &PanelData, units: &[usize], t_start: usize, t_len: usize) -> Vec<f64>;
}

/// Cell-wise mean of the observation vectors.
pub struct MeanStatistic;

impl PanelStatistic for MeanStatistic {
    fn eval(&self, panel: &PanelData, units: &[usize], t_start: usize, t_len: usize) -> Vec<f64> {
        let d = panel.dim();
        let mut acc = vec![0.0; d];
        for &n in units {
            for t in t_start..t_start + t_len {
                for (a, v) in acc.iter_mut().zip(panel.obs(n, t)) {
                    *a += v;
                }
            }
        }
        let cells = (units.len() * t_len) as f64;
        acc.iter_mut().for_each(|a| *a /= cells);
        acc
    }
}

impl<F> PanelStatistic for F
where
    F: Fn(&PanelData, &[usize], usize, usize) -> Vec<f64> + Sync,
{
    fn eval(&self, panel: &PanelData, units: &[usize], t_start: usize, t_len: usize) -> Vec<f64> {
        self(panel, units, t_start, t_len)
    }
}

/// Statistic outputs for every (block, window) cell, in block-major order.
#[derive(Debug, Clone)]
pub struct SubsampleStatistics {
    pub plan: SubsamplePlan,
    pub n_units: usize,
    pub n_periods: usize,
    pub dim: usize,
    /// Flat storage, `values[(i * q + k) * dim .. +dim]` for block i, window k.
    pub values: Vec<f64>,
    pub n_blocks: usize,
    pub n_windows: usize,
}

impl SubsampleStatistics {
    pub fn len(&self) -> usize {
        self.n_blocks * self.n_windows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn entry(&self, block: usize, window: usize) -> &[f64] {
        let base = (block * self.n_windows + window) * self.dim;
        &self.values[base..base + self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    /// Grand mean of the subsample statistics.
    pub fn mean(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        for v in self.iter() {
            for (a, x) in acc.iter_mut().zip(v) {
                *a += x;
            }
        }
        let m = self.len() as f64;
        acc.iter_mut().for_each(|a| *a /= m);
        acc
    }
}

/// Apply `statistic` to every subsample `{X_nt : n in I_i, k <= t <= k+l-1}`.
///
/// The remainder block, when present and included, is evaluated on its true
/// size. Cells are evaluated in parallel into disjoint slots, so the result
/// does not depend on scheduling.
pub fn evaluate_subsamples(
    panel: &PanelData,
    plan: &SubsamplePlan,
    statistic: &dyn PanelStatistic,
) -> Result<SubsampleStatistics> {
    plan.validate(panel)?;
    let partition = partition_units(panel.n_units(), plan.b, plan.partition_seed)?;
    let mut blocks = partition.blocks;
    if !plan.include_remainder_block && panel.n_units() % plan.b != 0 {
        blocks.pop();
    }
    let windows = time_windows(panel.n_periods(), plan.l)?;
    let q = windows.len();
    let dim = statistic
        .eval(panel, &blocks[0], windows[0].0, plan.l)
        .len();

    let cells: Vec<(usize, usize)> = (0..blocks.len())
        .flat_map(|i| (0..q).map(move |k| (i, k)))
        .collect();
    let results: Vec<Vec<f64>> = cells
        .par_iter()
        .map(|&(i, k)| statistic.eval(panel, &blocks[i], windows[k].0, plan.l))
        .collect();

    let mut values = Vec::with_capacity(blocks.len() * q * dim);
    for (idx, v) in results.iter().enumerate() {
        debug_assert_eq!(v.len(), dim);
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::StatisticFailure { block: idx / q, window: idx % q });
        }
        values.extend_from_slice(v);
    }
    Ok(SubsampleStatistics {
        plan: *plan,
        n_units: panel.n_units(),
        n_periods: panel.n_periods(),
        dim,
        values,
        n_blocks: blocks.len(),
        n_windows: q,
    })
}
