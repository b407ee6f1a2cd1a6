//! Benchmark problems: domains, residual operators, exact solutions,
//! initial/boundary data and collocation sampling.
//!
//! Axes are ordered spatial first, time last. A residual reads a fixed list
//! of partial derivatives ([`Term`]s) at one point and may emit several
//! residual components (Navier-Stokes: three vorticity equations plus the
//! divergence constraint).

mod exact;
mod problems;
mod sampling;

pub use exact::{AnalyticModel, Factor1d, FlowFields, FlowMixing, SeparableForm};
pub use problems::{BoundarySpec, PdeProblem};
pub use sampling::{axis_rng, boundary_batches, sample_factorized, BoundaryBatch, BoundaryKind, BoundaryPoints, Face};

use crate::error::{PdeError, ShapeError};

/// Axis-aligned box with an optional time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    bounds: Vec<(f64, f64)>,
    time_axis: Option<usize>,
}

impl Domain {
    pub fn new(bounds: Vec<(f64, f64)>, time_axis: Option<usize>) -> Result<Self, ShapeError> {
        if let Some((axis, &(lo, hi))) = bounds.iter().enumerate().find(|(_, (lo, hi))| lo.partial_cmp(hi) != Some(std::cmp::Ordering::Less)) {
            return Err(ShapeError::Other(format!("axis {axis} has an empty interval [{lo}, {hi}]")));
        }
        if matches!(time_axis, Some(t) if t >= bounds.len()) {
            return Err(ShapeError::Other("time axis out of range".into()));
        }
        Ok(Self { bounds, time_axis })
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn time_axis(&self) -> Option<usize> {
        self.time_axis
    }

    pub fn spatial_axes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.dim()).filter(move |&a| Some(a) != self.time_axis)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProblemId {
    Helmholtz3d,
    Kg3d,
    Kg4d,
    DiffusionNl3d,
    Diffusion6d,
    FlowMixing,
    PoissonLshape,
    Ns4d,
}

impl ProblemId {
    pub const ALL: [ProblemId; 8] = [
        ProblemId::Helmholtz3d,
        ProblemId::Kg3d,
        ProblemId::Kg4d,
        ProblemId::DiffusionNl3d,
        ProblemId::Diffusion6d,
        ProblemId::FlowMixing,
        ProblemId::PoissonLshape,
        ProblemId::Ns4d,
    ];

    pub const ALL_NAMES: [&'static str; 8] = [
        "helmholtz3d",
        "kg3d",
        "kg4d",
        "diffusion_nl3d",
        "diffusion6d",
        "flow_mixing",
        "poisson_lshape",
        "ns4d",
    ];

    pub fn name(self) -> &'static str {
        let i = Self::ALL.iter().position(|&p| p == self).expect("listed");
        Self::ALL_NAMES[i]
    }
}

impl std::fmt::Display for ProblemId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ProblemId {
    type Err = PdeError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL_NAMES
            .iter()
            .position(|&n| n == s)
            .map(|i| Self::ALL[i])
            .ok_or_else(|| PdeError::UnknownProblem(s.to_string()))
    }
}

/// One partial derivative `d^alpha u_component` read by a residual.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Term {
    pub component: usize,
    pub alpha: Vec<usize>,
}

/// Multipliers of the three loss groups.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub pde: f64,
    pub ic: f64,
    pub bc: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            pde: 1.0,
            ic: 1.0,
            bc: 1.0,
        }
    }
}
