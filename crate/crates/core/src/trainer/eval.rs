//! Error metrics against reference solutions on uniform grids.

use super::poisson::poisson_reference;
use crate::error::{PdeError, TrainError};
use crate::pde::{PdeProblem, ProblemId};
use crate::separable::{partial_batch, FactorizedBatch, FeatureSource};

/// `||pred - reference|| / ||reference||` (unsquared Euclidean ratio).
pub fn relative_l2(pred: &[f64], reference: &[f64]) -> Result<f64, TrainError> {
    check_len(pred, reference)?;
    let (mut num, mut den) = (0.0, 0.0);
    for (p, r) in pred.iter().zip(reference) {
        num += (p - r) * (p - r);
        den += r * r;
    }
    if den == 0.0 {
        return Err(TrainError::ZeroReference);
    }
    Ok((num / den).sqrt())
}

/// Root of the mean squared error.
pub fn rmse(pred: &[f64], reference: &[f64]) -> Result<f64, TrainError> {
    check_len(pred, reference)?;
    if pred.is_empty() {
        return Ok(0.0);
    }
    let sq: f64 = pred.iter().zip(reference).map(|(p, r)| (p - r) * (p - r)).sum();
    Ok((sq / pred.len() as f64).sqrt())
}

fn check_len(pred: &[f64], reference: &[f64]) -> Result<(), TrainError> {
    if pred.len() != reference.len() {
        return Err(crate::error::ShapeError::Length {
            expected: reference.len(),
            got: pred.len(),
        }
        .into());
    }
    Ok(())
}

/// Evaluation points per axis used when none is configured.
pub fn default_resolution(dim: usize) -> usize {
    match dim {
        0..=2 => 201,
        3 => 64,
        4 => 24,
        5 => 12,
        _ => 8,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub rel_l2: f64,
    pub rmse: f64,
    /// Relative error of the vorticity `curl u` (3-d velocity fields only).
    pub vorticity_rel_l2: Option<f64>,
    pub points: usize,
}

/// Reference values on a fixed uniform grid, computed once.
#[derive(Debug, Clone)]
pub struct Evaluator {
    batch: FactorizedBatch,
    reference: Vec<f64>,
    /// Flat node indices entering the metrics; `None` means all.
    nodes: Option<Vec<usize>>,
    vorticity: Option<Vec<f64>>,
}

impl Evaluator {
    /// Uniform grid with `resolution` inclusive points per axis. The
    /// L-shaped Poisson problem always uses its 201 x 201 oracle grid.
    pub fn new(problem: &PdeProblem, resolution: usize) -> Result<Self, TrainError> {
        let bounds = problem.domain().bounds();
        if problem.id() == ProblemId::PoissonLshape {
            let (batch, reference) = poisson_reference();
            let mut nodes = Vec::new();
            batch.for_each_point(|p, x| {
                if problem.mask(x) {
                    nodes.push(p);
                }
            });
            let reference = nodes.iter().map(|&p| reference[p]).collect();
            return Ok(Self {
                batch: batch.clone(),
                reference,
                nodes: Some(nodes),
                vorticity: None,
            });
        }
        if !problem.has_exact() {
            return Err(PdeError::NoAnalyticReference(problem.id().name()).into());
        }
        let batch = FactorizedBatch::uniform(bounds, &vec![resolution; bounds.len()])?;
        let reference = problem.exact_grid(&batch)?.into_data();
        let vorticity = match problem.id() {
            ProblemId::Ns4d => Some(vorticity(&problem.analytic_model()?, &batch)?),
            _ => None,
        };
        Ok(Self {
            batch,
            reference,
            nodes: None,
            vorticity,
        })
    }

    pub fn batch(&self) -> &FactorizedBatch {
        &self.batch
    }

    /// Reference values at the evaluated nodes, component-major.
    pub fn reference(&self) -> &[f64] {
        &self.reference
    }

    pub fn evaluate<S: FeatureSource>(&self, source: &S) -> Result<EvalReport, TrainError> {
        let grid = source.predict_grid(&self.batch)?;
        let pred: Vec<f64> = match &self.nodes {
            Some(nodes) => nodes.iter().map(|&p| grid.data()[p]).collect(),
            None => grid.into_data(),
        };
        let vorticity_rel_l2 = match &self.vorticity {
            Some(reference) => Some(relative_l2(&vorticity(source, &self.batch)?, reference)?),
            None => None,
        };
        Ok(EvalReport {
            rel_l2: relative_l2(&pred, &self.reference)?,
            rmse: rmse(&pred, &self.reference)?,
            vorticity_rel_l2,
            points: pred.len(),
        })
    }
}

/// `curl u` of a 3-component velocity over the first three axes,
/// component-major.
fn vorticity<S: FeatureSource>(source: &S, batch: &FactorizedBatch) -> Result<Vec<f64>, TrainError> {
    let d = batch.dim();
    let mut orders = vec![0; d];
    orders[..3].fill(1);
    let feats = source.eval_features(batch, &orders)?;
    let partial = |c: usize, axis: usize| -> Result<Vec<f64>, TrainError> {
        let mut alpha = vec![0; d];
        alpha[axis] = 1;
        Ok(partial_batch(&feats, &alpha)?.component(c).to_vec())
    };
    let mut out = Vec::with_capacity(3 * batch.len());
    for (a, b) in [(1, 2), (2, 0), (0, 1)] {
        // (1, 2) gives omega_x = d_y u_z - d_z u_y; the others follow cyclically
        let p = partial(b, a)?;
        let q = partial(a, b)?;
        out.extend(p.iter().zip(&q).map(|(p, q)| p - q));
    }
    Ok(out)
}
