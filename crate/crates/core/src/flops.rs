//! Analytic operation counts for evaluating a solution and its derivatives.
//!
//! Counting rules, per network pass:
//! - dense layer `n_in -> n_out`: `n_in * n_out` mults and `n_in * n_out`
//!   adds (the bias add completes the dot-product adds); activations in
//!   the value pass are not counted,
//! - first-derivative row: dense mults x2 and adds x4, plus 1 mult and
//!   1 add per tanh unit for the `1 - tanh^2` tangent factor,
//! - second-derivative row: dense mults x4 and adds x6, plus 3 mults and
//!   2 adds per tanh unit.
//!
//! A separable model makes one pass per 1-d coordinate and then merges
//! each grid point with `r (d - 1)` mults and `r (d - 1)` adds per output
//! component; the merge cost is doubled / quadrupled in the first / second
//! derivative rows. A monolithic network makes one pass per grid point.

use std::ops::{Add, Mul};

use crate::error::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OpCount {
    pub adds: u64,
    pub mults: u64,
}

impl OpCount {
    pub fn new(adds: u64, mults: u64) -> Self {
        Self { adds, mults }
    }

    pub fn flops(&self) -> u64 {
        self.adds + self.mults
    }
}

impl Add for OpCount {
    type Output = OpCount;
    fn add(self, o: OpCount) -> OpCount {
        OpCount::new(self.adds + o.adds, self.mults + o.mults)
    }
}

impl Mul<u64> for OpCount {
    type Output = OpCount;
    fn mul(self, k: u64) -> OpCount {
        OpCount::new(self.adds * k, self.mults * k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchKind {
    /// One network per axis with `rank * out_dim` outputs.
    Separable { rank: usize, out_dim: usize },
    /// One network on all `d` coordinates.
    Monolithic,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchSpec {
    pub kind: ArchKind,
    /// Grid points per axis; the length is the dimension `d`.
    pub points: Vec<usize>,
    /// Layer widths of one network, input first (tanh after every hidden layer).
    pub layers: Vec<usize>,
    /// Highest derivative row counted (0, 1 or 2).
    pub order: usize,
}

impl ArchSpec {
    /// Three 1 -> 64 -> 64 -> 64 -> 64 -> 32 axis networks, rank 32, on a 64^3 grid.
    pub fn separable_64_cubed() -> Self {
        Self {
            kind: ArchKind::Separable { rank: 32, out_dim: 1 },
            points: vec![64; 3],
            layers: vec![1, 64, 64, 64, 64, 32],
            order: 2,
        }
    }

    /// One 3 -> 128 (x6) -> 1 network on a 64^3 grid.
    pub fn monolithic_64_cubed() -> Self {
        Self {
            kind: ArchKind::Monolithic,
            points: vec![64; 3],
            layers: vec![3, 128, 128, 128, 128, 128, 128, 1],
            order: 2,
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let d = self.points.len();
        if d == 0 || self.points.contains(&0) {
            return Err(ConfigError::Model("need at least one point on every axis".into()));
        }
        if self.layers.len() < 2 || self.layers.contains(&0) {
            return Err(ConfigError::Network("need input and output widths, all non-zero".into()));
        }
        if self.order > 2 {
            return Err(ConfigError::Model(format!("derivative row {} is not counted", self.order)));
        }
        let (inp, out) = (self.layers[0], *self.layers.last().expect("checked"));
        match self.kind {
            ArchKind::Separable { rank, out_dim } => {
                if inp != 1 || out != rank * out_dim || rank == 0 {
                    return Err(ConfigError::Model(format!(
                        "axis networks map 1 -> rank * out_dim = {}, got {inp} -> {out}",
                        rank * out_dim
                    )));
                }
            }
            ArchKind::Monolithic => {
                if inp != d {
                    return Err(ConfigError::Model(format!("network input {inp} for a {d}-d grid")));
                }
            }
        }
        Ok(())
    }
}

/// Counts per row: value, then one row per derivative order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpTable {
    pub rows: Vec<OpCount>,
}

impl OpTable {
    pub fn total(&self) -> OpCount {
        self.rows.iter().fold(OpCount::default(), |a, &b| a + b)
    }
}

pub fn count_ops(spec: &ArchSpec) -> Result<OpTable, ConfigError> {
    spec.validate()?;
    let dense: u64 = spec.layers.windows(2).map(|w| (w[0] * w[1]) as u64).sum();
    let tanh_units: u64 = spec.layers[1..spec.layers.len() - 1].iter().map(|&w| w as u64).sum();
    let grid: u64 = spec.points.iter().map(|&n| n as u64).product();
    let (passes, merge) = match spec.kind {
        ArchKind::Separable { rank, out_dim } => {
            let per_point = (rank * (spec.points.len() - 1) * out_dim) as u64;
            (spec.points.iter().map(|&n| n as u64).sum(), OpCount::new(per_point, per_point) * grid)
        }
        ArchKind::Monolithic => (grid, OpCount::default()),
    };
    let net_row = |order: usize| match order {
        0 => OpCount::new(dense, dense),
        1 => OpCount::new(4 * dense + tanh_units, 2 * dense + tanh_units),
        _ => OpCount::new(6 * dense + 2 * tanh_units, 4 * dense + 3 * tanh_units),
    };
    let merge_factor = [1, 2, 4];
    let rows = (0..=spec.order)
        .map(|k| net_row(k) * passes + merge * merge_factor[k])
        .collect();
    Ok(OpTable { rows })
}

/// Total FLOPs of `separable` divided by those of `monolithic`.
pub fn cost_ratio(separable: &ArchSpec, monolithic: &ArchSpec) -> Result<f64, ConfigError> {
    let s = count_ops(separable)?.total().flops();
    let m = count_ops(monolithic)?.total().flops();
    Ok(s as f64 / m as f64)
}
