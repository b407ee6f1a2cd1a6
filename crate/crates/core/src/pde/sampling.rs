//! Collocation sampling and initial/boundary batches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::problems::BoundarySpec;
use super::{Domain, PdeProblem};
use crate::error::{PdeError, ShapeError};
use crate::separable::{FactorizedBatch, PointBatch};

/// Stream tag for unstructured boundary points.
const OUTLINE_STREAM: u64 = 255;

/// Generator for one axis in one resampling round; streams are disjoint per
/// `(round, axis)` so axes never influence each other.
pub fn axis_rng(seed: u64, round: u64, axis: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((round << 8) | (axis & 0xff));
    rng
}

/// `counts[i]` i.i.d. uniform samples on each axis interval.
pub fn sample_factorized(domain: &Domain, counts: &[usize], seed: u64, round: u64) -> Result<FactorizedBatch, ShapeError> {
    if counts.len() != domain.dim() {
        return Err(ShapeError::Length {
            expected: domain.dim(),
            got: counts.len(),
        });
    }
    if counts.contains(&0) {
        return Err(ShapeError::Other("every axis needs at least one sample".into()));
    }
    let axes = domain
        .bounds()
        .iter()
        .zip(counts)
        .enumerate()
        .map(|(i, (&(lo, hi), &n))| {
            let mut rng = axis_rng(seed, round, i as u64);
            (0..n).map(|_| rng.random_range(lo..=hi)).collect()
        })
        .collect();
    FactorizedBatch::new(axes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    Initial,
    Boundary,
}

/// Domain face: `axis` pinned at its lower or upper bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Face {
    pub axis: usize,
    pub upper: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryPoints {
    /// The collocation axes with `face.axis` replaced by one coordinate.
    Face { face: Face, batch: FactorizedBatch },
    Scattered(PointBatch),
}

impl BoundaryPoints {
    pub fn len(&self) -> usize {
        match self {
            BoundaryPoints::Face { batch, .. } => batch.len(),
            BoundaryPoints::Scattered(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Points with regression targets, component-major (`targets[c * n + p]`).
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryBatch {
    pub kind: BoundaryKind,
    pub points: BoundaryPoints,
    pub targets: Vec<f64>,
}

/// Initial-condition and boundary batches for one collocation round.
///
/// Faces reuse the collocation samples of the unpinned axes. The L-shaped
/// outline draws `per_edge` uniform points on each of its six edges.
pub fn boundary_batches(
    problem: &PdeProblem,
    collocation: &FactorizedBatch,
    seed: u64,
    round: u64,
) -> Result<Vec<BoundaryBatch>, PdeError> {
    let domain = problem.domain();
    if collocation.dim() != domain.dim() {
        return Err(ShapeError::Length {
            expected: domain.dim(),
            got: collocation.dim(),
        }
        .into());
    }
    let m = problem.out_dim();
    let mut out = Vec::new();
    match problem.boundary() {
        BoundarySpec::Faces { ic, bc } => {
            let mut faces = Vec::new();
            if let (true, Some(t)) = (ic, domain.time_axis()) {
                faces.push((BoundaryKind::Initial, Face { axis: t, upper: false }));
            }
            if bc {
                for axis in domain.spatial_axes() {
                    for upper in [false, true] {
                        faces.push((BoundaryKind::Boundary, Face { axis, upper }));
                    }
                }
            }
            for (kind, face) in faces {
                let (lo, hi) = domain.bounds()[face.axis];
                let mut axes = collocation.axes().to_vec();
                axes[face.axis] = vec![if face.upper { hi } else { lo }];
                let batch = FactorizedBatch::new(axes)?;
                let n = batch.len();
                let mut targets = vec![0.0; n * m];
                let mut v = vec![0.0; m];
                batch.for_each_point(|p, x| {
                    match kind {
                        BoundaryKind::Initial => problem.initial_value(x, &mut v),
                        BoundaryKind::Boundary => problem.boundary_value(x, &mut v),
                    }
                    for (c, &val) in v.iter().enumerate() {
                        targets[c * n + p] = val;
                    }
                });
                out.push(BoundaryBatch {
                    kind,
                    points: BoundaryPoints::Face { face, batch },
                    targets,
                });
            }
        }
        BoundarySpec::Outline { per_edge } => {
            let points = l_shape_outline(per_edge, seed, round);
            let n = points.len();
            let mut targets = vec![0.0; n * m];
            let mut v = vec![0.0; m];
            for p in 0..n {
                problem.boundary_value(&points.point(p), &mut v);
                for (c, &val) in v.iter().enumerate() {
                    targets[c * n + p] = val;
                }
            }
            out.push(BoundaryBatch {
                kind: BoundaryKind::Boundary,
                points: BoundaryPoints::Scattered(points),
                targets,
            });
        }
    }
    Ok(out)
}

/// Uniform points on the six edges of `[-1,1]^2 \ (0,1]^2`.
fn l_shape_outline(per_edge: usize, seed: u64, round: u64) -> PointBatch {
    // (x0, y0) + s * (dx, dy) for s in [0, 1]
    const EDGES: [(f64, f64, f64, f64); 6] = [
        (-1.0, -1.0, 2.0, 0.0),
        (1.0, -1.0, 0.0, 1.0),
        (1.0, 0.0, -1.0, 0.0),
        (0.0, 0.0, 0.0, 1.0),
        (0.0, 1.0, -1.0, 0.0),
        (-1.0, 1.0, 0.0, -2.0),
    ];
    let mut rng = axis_rng(seed, round, OUTLINE_STREAM);
    let mut xs = Vec::with_capacity(6 * per_edge);
    let mut ys = Vec::with_capacity(6 * per_edge);
    for &(x0, y0, dx, dy) in &EDGES {
        for _ in 0..per_edge {
            let s: f64 = rng.random_range(0.0..=1.0);
            xs.push(x0 + s * dx);
            ys.push(y0 + s * dy);
        }
    }
    PointBatch::new(vec![xs, ys]).expect("equal lengths")
}
