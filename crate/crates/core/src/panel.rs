//! Balanced panel data model, normalizing rates, and subsample plans.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A fully balanced N x T panel of d-dimensional observations.
///
/// Units and periods are indexed internally by `0..n_units` and
/// `0..n_periods`; the original integer labels from an input file are kept
/// only for export.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelData {
    n_units: usize,
    n_periods: usize,
    dim: usize,
    /// Row-major storage: `values[((n * n_periods) + t) * dim + j]`.
    values: Vec<f64>,
    unit_labels: Vec<i64>,
    time_labels: Vec<i64>,
}

impl PanelData {
    /// Build a panel from dense storage; every entry must be finite.
    pub fn from_values(n_units: usize, n_periods: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        assert!(n_units >= 1 && n_periods >= 1 && dim >= 1);
        assert_eq!(values.len(), n_units * n_periods * dim);
        for (idx, v) in values.iter().enumerate() {
            if !v.is_finite() {
                let cell = idx / dim;
                return Err(Error::NonFiniteValue {
                    unit: (cell / n_periods) as i64 + 1,
                    time: (cell % n_periods) as i64 + 1,
                });
            }
        }
        Ok(Self {
            n_units,
            n_periods,
            dim,
            values,
            unit_labels: (1..=n_units as i64).collect(),
            time_labels: (1..=n_periods as i64).collect(),
        })
    }

    /// Scalar panel helper used throughout the tests and the DGPs.
    pub fn from_fn(n_units: usize, n_periods: usize, dim: usize, mut f: impl FnMut(usize, usize) -> Vec<f64>) -> Result<Self> {
        let mut values = Vec::with_capacity(n_units * n_periods * dim);
        for n in 0..n_units {
            for t in 0..n_periods {
                let v = f(n, t);
                assert_eq!(v.len(), dim);
                values.extend_from_slice(&v);
            }
        }
        Self::from_values(n_units, n_periods, dim, values)
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    pub fn n_periods(&self) -> usize {
        self.n_periods
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Observation vector for (unit, period), zero-based indices.
    #[inline]
    pub fn obs(&self, unit: usize, period: usize) -> &[f64] {
        let base = ((unit * self.n_periods) + period) * self.dim;
        &self.values[base..base + self.dim]
    }

    /// Scalar observation for d=1 panels.
    #[inline]
    pub fn value(&self, unit: usize, period: usize) -> f64 {
        debug_assert_eq!(self.dim, 1);
        self.values[unit * self.n_periods + period]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Grand mean of one coordinate over all cells.
    pub fn grand_mean(&self, coordinate: usize) -> f64 {
        assert!(coordinate < self.dim);
        let cells = (self.n_units * self.n_periods) as f64;
        self.values
            .iter()
            .skip(coordinate)
            .step_by(self.dim)
            .sum::<f64>()
            / cells
    }

    /// Mean vector over all cells.
    pub fn mean(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        for cell in self.values.chunks_exact(self.dim) {
            for (a, v) in acc.iter_mut().zip(cell) {
                *a += v;
            }
        }
        let cells = (self.n_units * self.n_periods) as f64;
        acc.iter_mut().for_each(|a| *a /= cells);
        acc
    }

    /// Export back to long-format rows `(unit_label, time_label, values)`.
    pub fn to_rows(&self) -> Vec<(i64, i64, Vec<f64>)> {
        let mut rows = Vec::with_capacity(self.n_units * self.n_periods);
        for n in 0..self.n_units {
            for t in 0..self.n_periods {
                rows.push((self.unit_labels[n], self.time_labels[t], self.obs(n, t).to_vec()));
            }
        }
        rows
    }

    /// Keep a single coordinate, dropping the others.
    pub fn coordinate(&self, j: usize) -> PanelData {
        assert!(j < self.dim);
        let values = self.values.iter().skip(j).step_by(self.dim).copied().collect();
        PanelData {
            n_units: self.n_units,
            n_periods: self.n_periods,
            dim: 1,
            values,
            unit_labels: self.unit_labels.clone(),
            time_labels: self.time_labels.clone(),
        }
    }
}

/// Validate long-format rows into a balanced panel.
///
/// Unit and time labels may be arbitrary integers; they are relabeled to
/// contiguous internal indices preserving sorted label order.
pub fn validate_panel(rows: &[(i64, i64, Vec<f64>)]) -> Result<PanelData> {
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    let dim = rows[0].2.len();
    if dim == 0 {
        return Err(Error::EmptyInput);
    }
    let mut unit_labels: Vec<i64> = rows.iter().map(|r| r.0).collect();
    let mut time_labels: Vec<i64> = rows.iter().map(|r| r.1).collect();
    unit_labels.sort_unstable();
    unit_labels.dedup();
    time_labels.sort_unstable();
    time_labels.dedup();
    let unit_index: HashMap<i64, usize> = unit_labels.iter().enumerate().map(|(i, &u)| (u, i)).collect();
    let time_index: HashMap<i64, usize> = time_labels.iter().enumerate().map(|(i, &t)| (t, i)).collect();
    let n_units = unit_labels.len();
    let n_periods = time_labels.len();

    let mut values = vec![f64::NAN; n_units * n_periods * dim];
    let mut seen = vec![false; n_units * n_periods];
    for (unit, time, v) in rows {
        if v.len() != dim {
            return Err(Error::InconsistentWidth { expected: dim, got: v.len() });
        }
        let n = unit_index[unit];
        let t = time_index[time];
        if seen[n * n_periods + t] {
            return Err(Error::DuplicateCell { unit: *unit, time: *time });
        }
        seen[n * n_periods + t] = true;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteValue { unit: *unit, time: *time });
        }
        values[((n * n_periods) + t) * dim..((n * n_periods) + t) * dim + dim].copy_from_slice(v);
    }
    for n in 0..n_units {
        for t in 0..n_periods {
            if !seen[n * n_periods + t] {
                return Err(Error::MissingCell { unit: unit_labels[n], time: time_labels[t] });
            }
        }
    }
    Ok(PanelData { n_units, n_periods, dim, values, unit_labels, time_labels })
}

/// Read a long-format CSV with header `unit,time,v1[,v2,...]`.
pub fn read_panel_csv<R: Read>(reader: R) -> Result<PanelData> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        if record.len() < 3 {
            return Err(Error::InconsistentWidth { expected: 3, got: record.len() });
        }
        let unit: i64 = record[0]
            .trim()
            .parse()
            .map_err(|_| Error::DimensionMismatch(format!("bad unit label {:?}", &record[0])))?;
        let time: i64 = record[1]
            .trim()
            .parse()
            .map_err(|_| Error::DimensionMismatch(format!("bad time label {:?}", &record[1])))?;
        let mut vals = Vec::with_capacity(record.len() - 2);
        for field in record.iter().skip(2) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::DimensionMismatch(format!("bad value {field:?}")))?;
            vals.push(v);
        }
        rows.push((unit, time, vals));
    }
    validate_panel(&rows)
}

/// Read a panel CSV from a path.
pub fn read_panel_csv_path(path: &Path) -> Result<PanelData> {
    read_panel_csv(std::fs::File::open(path)?)
}

/// Monomial normalizing rate tau(m, s) = m^p * s^q.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSpec {
    pub unit_exponent: f64,
    pub period_exponent: f64,
}

impl RateSpec {
    pub fn new(unit_exponent: f64, period_exponent: f64) -> Result<Self> {
        if !(unit_exponent >= 0.0 && period_exponent >= 0.0 && unit_exponent + period_exponent > 0.0) {
            return Err(Error::InvalidRate { p: unit_exponent, q: period_exponent });
        }
        Ok(Self { unit_exponent, period_exponent })
    }

    /// sqrt(N): the mean / regression default.
    pub fn sqrt_units() -> Self {
        Self { unit_exponent: 0.5, period_exponent: 0.0 }
    }

    /// sqrt(N*T): the degenerate non-Gaussian case.
    pub fn sqrt_cells() -> Self {
        Self { unit_exponent: 0.5, period_exponent: 0.5 }
    }

    pub fn tau(&self, n_units: usize, n_periods: usize) -> f64 {
        (n_units as f64).powf(self.unit_exponent) * (n_periods as f64).powf(self.period_exponent)
    }
}

/// Subsample sizes (b, l) plus rate and partition seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsamplePlan {
    pub b: usize,
    pub l: usize,
    pub rate: RateSpec,
    pub partition_seed: u64,
    pub include_remainder_block: bool,
}

impl SubsamplePlan {
    pub fn new(b: usize, l: usize, rate: RateSpec, partition_seed: u64) -> Self {
        Self { b, l, rate, partition_seed, include_remainder_block: true }
    }

    pub fn validate(&self, panel: &PanelData) -> Result<()> {
        if self.b < 1 || self.b > panel.n_units() {
            return Err(Error::InvalidBlockSize { b: self.b, n_units: panel.n_units() });
        }
        if self.l < 1 || self.l > panel.n_periods() {
            return Err(Error::InvalidWindowLength { l: self.l, n_periods: panel.n_periods() });
        }
        Ok(())
    }

    /// N_b = ceil(N / b).
    pub fn n_blocks(&self, n_units: usize) -> usize {
        n_units.div_ceil(self.b)
    }

    /// q = T - l + 1.
    pub fn n_windows(&self, n_periods: usize) -> usize {
        n_periods - self.l + 1
    }

    pub fn tau_sub(&self) -> f64 {
        self.rate.tau(self.b, self.l)
    }
}
