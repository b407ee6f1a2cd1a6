//! Physics-informed loss on one collocation round.
//!
//! Every axis network is evaluated once on its collocation samples plus the
//! pinned face coordinates, at the axis's highest derivative order. Each
//! residual term is a merge of derivative slices; initial/boundary faces
//! merge order-0 slices with the pinned row in place of the face axis.

use crate::error::{EvalError, NonFiniteError, ShapeError, TrainError};
use crate::nets::{BatchTrace, JetBatch};
use crate::pde::{BoundaryBatch, BoundaryKind, BoundaryPoints, PdeProblem};
use crate::separable::{
    merge_factors, merge_factors_vjp, merge_zip, merge_zip_vjp, FactorizedBatch, FeatureSource, PointBatch,
    SeparableModel,
};
use crate::jet::Real;
use crate::tape::{Tape, Var};

/// Unweighted loss groups and the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTerms {
    pub total: f64,
    pub pde: f64,
    pub ic: f64,
    pub bc: f64,
}

/// Collocation grid, boundary data and cached coefficients for one round.
#[derive(Debug, Clone)]
pub struct LossBatch {
    collocation: FactorizedBatch,
    /// Per axis: collocation samples followed by pinned face coordinates.
    rows: Vec<Vec<f64>>,
    faces: Vec<FaceData>,
    outline: Option<(PointBatch, Vec<f64>)>,
    /// `n_coeffs` values per collocation node.
    coeffs: Vec<f64>,
    /// Collocation nodes inside the PDE mask; `None` when all are.
    inside: Option<Vec<bool>>,
    n_inside: usize,
    n_ic: usize,
    n_bc: usize,
}

#[derive(Debug, Clone)]
struct FaceData {
    kind: BoundaryKind,
    axis: usize,
    row: usize,
    targets: Vec<f64>,
}

impl LossBatch {
    pub fn new(problem: &PdeProblem, collocation: FactorizedBatch, boundaries: Vec<BoundaryBatch>) -> Result<Self, TrainError> {
        let d = problem.dim();
        if collocation.dim() != d {
            return Err(ShapeError::Length {
                expected: d,
                got: collocation.dim(),
            }
            .into());
        }
        collocation.check_bounds(problem.domain().bounds())?;
        let mut rows: Vec<Vec<f64>> = collocation.axes().to_vec();
        let mut faces = Vec::new();
        let mut outline = None;
        let (mut n_ic, mut n_bc) = (0, 0);
        for b in boundaries {
            let count = b.points.len();
            match b.kind {
                BoundaryKind::Initial => n_ic += count,
                BoundaryKind::Boundary => n_bc += count,
            }
            match b.points {
                BoundaryPoints::Face { face, batch } => {
                    let x = batch.axis(face.axis)[0];
                    let axis_rows = &mut rows[face.axis];
                    let row = match axis_rows[collocation.axis(face.axis).len()..].iter().position(|&v| v == x) {
                        Some(k) => collocation.axis(face.axis).len() + k,
                        None => {
                            axis_rows.push(x);
                            axis_rows.len() - 1
                        }
                    };
                    faces.push(FaceData {
                        kind: b.kind,
                        axis: face.axis,
                        row,
                        targets: b.targets,
                    });
                }
                BoundaryPoints::Scattered(points) => {
                    if outline.is_some() {
                        return Err(ShapeError::Other("at most one scattered boundary batch".into()).into());
                    }
                    outline = Some((points, b.targets));
                }
            }
        }
        let nc = problem.n_coeffs();
        let mut coeffs = vec![0.0; collocation.len() * nc];
        let mut inside = vec![true; collocation.len()];
        collocation.for_each_point(|p, x| {
            problem.coefficients(x, &mut coeffs[p * nc..(p + 1) * nc]);
            inside[p] = problem.mask(x);
        });
        let n_inside = inside.iter().filter(|&&b| b).count();
        let inside = (n_inside < collocation.len()).then_some(inside);
        Ok(Self {
            collocation,
            rows,
            faces,
            outline,
            coeffs,
            inside,
            n_inside,
            n_ic,
            n_bc,
        })
    }

    pub fn collocation(&self) -> &FactorizedBatch {
        &self.collocation
    }

    /// Coordinates fed to network `axis`.
    pub fn axis_rows(&self, axis: usize) -> &[f64] {
        &self.rows[axis]
    }

    pub fn outline(&self) -> Option<&PointBatch> {
        self.outline.as_ref().map(|(p, _)| p)
    }
}

/// Feature jets (and their cotangents) for one loss evaluation.
struct Features<'a> {
    rows: &'a [JetBatch],
    outline: Option<&'a [JetBatch]>,
    rank: usize,
    out_dim: usize,
}

struct Cotangents {
    rows: Vec<JetBatch>,
    outline: Option<Vec<JetBatch>>,
}

/// Loss value only, for any feature source (e.g. exact features).
pub fn total_loss<S: FeatureSource>(source: &S, problem: &PdeProblem, batch: &LossBatch) -> Result<LossTerms, TrainError> {
    let rows = (0..problem.dim())
        .map(|i| source.axis_features(i, batch.axis_rows(i), problem.orders()[i]))
        .collect::<Result<Vec<_>, _>>()?;
    let outline = match batch.outline() {
        Some(p) => Some(
            (0..problem.dim())
                .map(|i| source.axis_features(i, p.axis(i), 0))
                .collect::<Result<Vec<_>, _>>()?,
        ),
        None => None,
    };
    let feats = Features {
        rows: &rows,
        outline: outline.as_deref(),
        rank: source.rank(),
        out_dim: source.out_dim(),
    };
    Ok(assemble(&feats, problem, batch, false)?.0)
}

/// Loss and its gradient with respect to the concatenated parameters.
pub fn loss_and_grad(model: &SeparableModel, problem: &PdeProblem, batch: &LossBatch) -> Result<(LossTerms, Vec<f64>), TrainError> {
    let d = problem.dim();
    let mut rows = Vec::with_capacity(d);
    let mut traces: Vec<BatchTrace> = Vec::with_capacity(d);
    for i in 0..d {
        let (f, t) = model.axis_features_traced(i, batch.axis_rows(i), problem.orders()[i])?;
        rows.push(f);
        traces.push(t);
    }
    let mut outline_traces = Vec::new();
    let outline = match batch.outline() {
        Some(p) => {
            let mut feats = Vec::with_capacity(d);
            for i in 0..d {
                let (f, t) = model.axis_features_traced(i, p.axis(i), 0)?;
                feats.push(f);
                outline_traces.push(t);
            }
            Some(feats)
        }
        None => None,
    };
    let feats = Features {
        rows: &rows,
        outline: outline.as_deref(),
        rank: model.rank(),
        out_dim: model.out_dim(),
    };
    let (terms, bars) = assemble(&feats, problem, batch, true)?;
    let bars = bars.expect("requested");
    let mut grad = vec![0.0; model.param_count()];
    for (i, range) in model.param_ranges().into_iter().enumerate() {
        let g = &mut grad[range];
        model.backward_axis(i, &traces[i], &bars.rows[i], g);
        if let Some(ob) = &bars.outline {
            model.backward_axis(i, &outline_traces[i], &ob[i], g);
        }
    }
    Ok((terms, grad))
}

fn assemble(
    feats: &Features<'_>,
    problem: &PdeProblem,
    batch: &LossBatch,
    want_grad: bool,
) -> Result<(LossTerms, Option<Cotangents>), TrainError> {
    let d = problem.dim();
    let (r, m) = (feats.rank, feats.out_dim);
    let colloc = &batch.collocation;
    let dims = colloc.dims();
    let n = colloc.len();
    let mut bars = want_grad.then(|| Cotangents {
        rows: feats
            .rows
            .iter()
            .map(|f| JetBatch::zeros(f.order(), f.len(), f.width()))
            .collect(),
        outline: feats
            .outline
            .map(|o| o.iter().map(|f| JetBatch::zeros(0, f.len(), f.width())).collect()),
    });

    // Residual terms on the collocation grid.
    let terms = problem.terms();
    let mut term_factors: Vec<Vec<Vec<f64>>> = Vec::with_capacity(terms.len());
    let mut grids: Vec<Vec<f64>> = Vec::with_capacity(terms.len());
    for t in terms {
        let cols = t.component * r..(t.component + 1) * r;
        let factors: Vec<Vec<f64>> = (0..d)
            .map(|i| feats.rows[i].factor(t.alpha[i], 0..dims[i], cols.clone()))
            .collect();
        let refs: Vec<&[f64]> = factors.iter().map(Vec::as_slice).collect();
        grids.push(merge_factors(&refs, &dims, r));
        term_factors.push(factors);
    }
    let weights = problem.residual_weights();
    let nres = weights.len();
    let nc = problem.n_coeffs();
    let lam = problem.weights;
    let count = batch.n_inside.max(1) as f64;
    let mut pde_sum = 0.0;
    let mut grid_bars = if want_grad { vec![vec![0.0; n]; terms.len()] } else { Vec::new() };
    let mut g = vec![0.0; terms.len()];
    let mut res = vec![0.0; nres];
    let mut tape = Tape::with_capacity(256);
    let mut adj = Vec::new();
    for p in 0..n {
        if let Some(inside) = &batch.inside {
            if !inside[p] {
                continue;
            }
        }
        let coef = &batch.coeffs[p * nc..(p + 1) * nc];
        for (gi, grid) in g.iter_mut().zip(&grids) {
            *gi = grid[p];
        }
        if !want_grad {
            problem.residual_point(&g, coef, &mut res);
            for (w, v) in weights.iter().zip(&res) {
                pde_sum += w * v * v;
            }
            continue;
        }
        tape.clear();
        let vars: Vec<Var<'_>> = g.iter().map(|&v| tape.var(v)).collect();
        let mut out = vec![vars[0]; nres];
        problem.residual_point(&vars, coef, &mut out);
        let mut seeds = Vec::with_capacity(nres);
        for (w, v) in weights.iter().zip(&out) {
            let rv = v.value();
            pde_sum += w * rv * rv;
            seeds.push((*v, lam.pde * w * 2.0 * rv / count));
        }
        tape.vjp_into(&seeds, &mut adj);
        for (k, v) in vars.iter().enumerate() {
            grid_bars[k][p] = adj[v.index()];
        }
    }
    let pde = pde_sum / count;
    if let Some(b) = bars.as_mut() {
        for ((t, factors), gbar) in terms.iter().zip(&term_factors).zip(&grid_bars) {
            let refs: Vec<&[f64]> = factors.iter().map(Vec::as_slice).collect();
            let fb = merge_factors_vjp(&refs, &dims, r, gbar);
            let cols = t.component * r..(t.component + 1) * r;
            for (i, f) in fb.iter().enumerate() {
                b.rows[i].add_factor(t.alpha[i], 0..dims[i], cols.clone(), f);
            }
        }
    }

    // Initial and boundary faces.
    let (mut ic_sum, mut bc_sum) = (0.0, 0.0);
    for face in &batch.faces {
        let mut fdims = dims.clone();
        fdims[face.axis] = 1;
        let fn_ = fdims.iter().product::<usize>();
        let row_range = |i: usize| {
            if i == face.axis {
                face.row..face.row + 1
            } else {
                0..dims[i]
            }
        };
        let (norm, lam_k) = match face.kind {
            BoundaryKind::Initial => (batch.n_ic.max(1) as f64, lam.ic),
            BoundaryKind::Boundary => (batch.n_bc.max(1) as f64, lam.bc),
        };
        for c in 0..m {
            let cols = c * r..(c + 1) * r;
            let factors: Vec<Vec<f64>> = (0..d).map(|i| feats.rows[i].factor(0, row_range(i), cols.clone())).collect();
            let refs: Vec<&[f64]> = factors.iter().map(Vec::as_slice).collect();
            let pred = merge_factors(&refs, &fdims, r);
            let target = &face.targets[c * fn_..(c + 1) * fn_];
            let diff: Vec<f64> = pred.iter().zip(target).map(|(a, b)| a - b).collect();
            let sq: f64 = diff.iter().map(|v| v * v).sum();
            match face.kind {
                BoundaryKind::Initial => ic_sum += sq,
                BoundaryKind::Boundary => bc_sum += sq,
            }
            if let Some(b) = bars.as_mut() {
                let gbar: Vec<f64> = diff.iter().map(|v| lam_k * 2.0 * v / norm).collect();
                let fb = merge_factors_vjp(&refs, &fdims, r, &gbar);
                for (i, f) in fb.iter().enumerate() {
                    b.rows[i].add_factor(0, row_range(i), cols.clone(), f);
                }
            }
        }
    }
    if let (Some((points, targets)), Some(of)) = (&batch.outline, feats.outline) {
        let np = points.len();
        let norm = batch.n_bc.max(1) as f64;
        for c in 0..m {
            let cols = c * r..(c + 1) * r;
            let factors: Vec<Vec<f64>> = of.iter().map(|f| f.factor(0, 0..np, cols.clone())).collect();
            let refs: Vec<&[f64]> = factors.iter().map(Vec::as_slice).collect();
            let pred = merge_zip(&refs, np, r);
            let diff: Vec<f64> = pred.iter().zip(&targets[c * np..(c + 1) * np]).map(|(a, b)| a - b).collect();
            bc_sum += diff.iter().map(|v| v * v).sum::<f64>();
            if let Some(ob) = bars.as_mut().and_then(|b| b.outline.as_mut()) {
                let gbar: Vec<f64> = diff.iter().map(|v| lam.bc * 2.0 * v / norm).collect();
                for (i, f) in merge_zip_vjp(&refs, np, r, &gbar).iter().enumerate() {
                    ob[i].add_factor(0, 0..np, cols.clone(), f);
                }
            }
        }
    }
    let ic = if batch.n_ic > 0 { ic_sum / batch.n_ic as f64 } else { 0.0 };
    let bc = if batch.n_bc > 0 { bc_sum / batch.n_bc as f64 } else { 0.0 };
    let total = lam.pde * pde + lam.ic * ic + lam.bc * bc;
    if !total.is_finite() {
        return Err(EvalError::from(NonFiniteError(format!("loss (pde {pde}, ic {ic}, bc {bc})"))).into());
    }
    Ok((LossTerms { total, pde, ic, bc }, bars))
}
