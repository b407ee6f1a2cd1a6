//! Problem definitions and pointwise residual operators.

use std::f64::consts::PI;

use super::exact::{AnalyticModel, Factor1d, FlowMixing, SeparableForm};
use super::{Domain, LossWeights, ProblemId, Term};
use crate::error::{PdeError, ShapeError};
use crate::jet::Real;
use crate::separable::{FactorizedBatch, FeatureSource, SolutionGrid};

/// How boundary data is imposed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundarySpec {
    /// Factorized face batches; `ic` pins the time axis at its lower bound,
    /// `bc` covers both faces of every spatial axis.
    Faces { ic: bool, bc: bool },
    /// Unstructured points along the L-shaped outline.
    Outline { per_edge: usize },
}

#[derive(Debug, Clone, PartialEq)]
enum Physics {
    Helmholtz { k: f64, a: [f64; 3] },
    KleinGordon { space: usize },
    DiffusionNl { alpha: f64 },
    Diffusion6d,
    FlowMixing(FlowMixing),
    Poisson,
    NavierStokes { nu: f64, index: Box<NsIndex> },
}

/// Term positions for the Navier-Stokes residual, by component and
/// `(x, y, z, t)` derivative orders; `usize::MAX` marks unused entries.
#[derive(Debug, Clone, PartialEq)]
struct NsIndex([[[[[usize; 2]; 4]; 4]; 4]; 3]);

impl NsIndex {
    fn build() -> (Self, Vec<Term>) {
        let mut idx = [[[[[usize::MAX; 2]; 4]; 4]; 4]; 3];
        let mut terms = Vec::new();
        for (c, slot) in idx.iter_mut().enumerate() {
            for at in 0..2 {
                for ax in 0..4 {
                    for ay in 0..4 {
                        for az in 0..4 {
                            let s = ax + ay + az;
                            if (at == 0 && s <= 3) || (at == 1 && s == 1) {
                                slot[ax][ay][az][at] = terms.len();
                                terms.push(Term {
                                    component: c,
                                    alpha: vec![ax, ay, az, at],
                                });
                            }
                        }
                    }
                }
            }
        }
        (Self(idx), terms)
    }

    fn at(&self, c: usize, a: [usize; 4]) -> usize {
        let i = self.0[c][a[0]][a[1]][a[2]][a[3]];
        debug_assert_ne!(i, usize::MAX, "derivative {a:?} of component {c} not tracked");
        i
    }
}

/// A benchmark PDE with its data and loss weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PdeProblem {
    id: ProblemId,
    domain: Domain,
    out_dim: usize,
    orders: Vec<usize>,
    terms: Vec<Term>,
    residual_weights: Vec<f64>,
    boundary: BoundarySpec,
    exact: Option<SeparableForm>,
    physics: Physics,
    /// `lambda_pde`, `lambda_ic`, `lambda_bc`.
    pub weights: LossWeights,
}

fn term(component: usize, alpha: &[usize]) -> Term {
    Term {
        component,
        alpha: alpha.to_vec(),
    }
}

fn unit(d: usize, axis: usize, order: usize) -> Vec<usize> {
    let mut a = vec![0; d];
    a[axis] = order;
    a
}

fn poly(c: &[f64]) -> Factor1d {
    Factor1d::Poly(c.to_vec())
}

impl PdeProblem {
    /// The benchmark with the settings used throughout the experiments.
    pub fn new(id: ProblemId) -> Self {
        let one = Factor1d::one;
        let x = || poly(&[0.0, 1.0]);
        match id {
            ProblemId::Helmholtz3d => {
                let a = [4.0, 4.0, 3.0];
                let form = SeparableForm::new(vec![vec![a.iter().map(|&ai| Factor1d::sin(ai * PI)).collect()]]);
                let mut terms = vec![term(0, &[0, 0, 0])];
                terms.extend((0..3).map(|i| term(0, &unit(3, i, 2))));
                Self {
                    id,
                    domain: Domain::new(vec![(-1.0, 1.0); 3], None).expect("valid box"),
                    out_dim: 1,
                    orders: vec![2, 2, 2],
                    terms,
                    residual_weights: vec![1.0],
                    boundary: BoundarySpec::Faces { ic: false, bc: true },
                    exact: Some(form),
                    physics: Physics::Helmholtz { k: 1.0, a },
                    weights: LossWeights::default(),
                }
            }
            ProblemId::Kg3d | ProblemId::Kg4d => {
                let space = if id == ProblemId::Kg3d { 2 } else { 3 };
                let d = space + 1;
                let w = if space == 2 { 2.0 } else { 1.0 };
                // (x_1 + ... + x_s) cos(w t) + (x_1 ... x_s) sin(w t)
                let mut prods: Vec<Vec<Factor1d>> = (0..space)
                    .map(|i| {
                        let mut t: Vec<Factor1d> = (0..space).map(|k| if k == i { x() } else { one() }).collect();
                        t.push(Factor1d::cos(w));
                        t
                    })
                    .collect();
                let mut last: Vec<Factor1d> = (0..space).map(|_| x()).collect();
                last.push(Factor1d::sin(w));
                prods.push(last);
                let mut terms = vec![term(0, &vec![0; d]), term(0, &unit(d, space, 2))];
                terms.extend((0..space).map(|i| term(0, &unit(d, i, 2))));
                let mut bounds = vec![(-1.0, 1.0); space];
                bounds.push((0.0, 10.0));
                Self {
                    id,
                    domain: Domain::new(bounds, Some(space)).expect("valid box"),
                    out_dim: 1,
                    orders: vec![2; d],
                    terms,
                    residual_weights: vec![1.0],
                    boundary: BoundarySpec::Faces { ic: true, bc: true },
                    exact: Some(SeparableForm::new(vec![prods])),
                    physics: Physics::KleinGordon { space },
                    weights: LossWeights::default(),
                }
            }
            ProblemId::DiffusionNl3d => Self {
                id,
                domain: Domain::new(vec![(-1.0, 1.0), (-1.0, 1.0), (0.0, 1.0)], Some(2)).expect("valid box"),
                out_dim: 1,
                orders: vec![2, 2, 1],
                terms: vec![
                    term(0, &[0, 0, 0]),
                    term(0, &[0, 0, 1]),
                    term(0, &[1, 0, 0]),
                    term(0, &[0, 1, 0]),
                    term(0, &[2, 0, 0]),
                    term(0, &[0, 2, 0]),
                ],
                residual_weights: vec![1.0],
                boundary: BoundarySpec::Faces { ic: true, bc: true },
                exact: None,
                physics: Physics::DiffusionNl { alpha: 0.05 },
                weights: LossWeights::default(),
            },
            ProblemId::Diffusion6d => {
                // |x|^2 + 10 t
                let mut prods: Vec<Vec<Factor1d>> = (0..5)
                    .map(|i| (0..6).map(|k| if k == i { poly(&[0.0, 0.0, 1.0]) } else { one() }).collect())
                    .collect();
                prods.push((0..6).map(|k| if k == 5 { poly(&[0.0, 10.0]) } else { one() }).collect());
                let mut terms = vec![term(0, &unit(6, 5, 1))];
                terms.extend((0..5).map(|i| term(0, &unit(6, i, 2))));
                let mut bounds = vec![(-1.0, 1.0); 5];
                bounds.push((0.0, 1.0));
                Self {
                    id,
                    domain: Domain::new(bounds, Some(5)).expect("valid box"),
                    out_dim: 1,
                    orders: vec![2, 2, 2, 2, 2, 1],
                    terms,
                    residual_weights: vec![1.0],
                    boundary: BoundarySpec::Faces { ic: true, bc: true },
                    exact: Some(SeparableForm::new(vec![prods])),
                    physics: Physics::Diffusion6d,
                    weights: LossWeights::default(),
                }
            }
            ProblemId::FlowMixing => Self {
                id,
                domain: Domain::new(vec![(-4.0, 4.0), (-4.0, 4.0), (0.0, 4.0)], Some(2)).expect("valid box"),
                out_dim: 1,
                orders: vec![1, 1, 1],
                terms: vec![term(0, &[0, 0, 1]), term(0, &[1, 0, 0]), term(0, &[0, 1, 0])],
                residual_weights: vec![1.0],
                boundary: BoundarySpec::Faces { ic: true, bc: true },
                exact: None,
                physics: Physics::FlowMixing(FlowMixing {
                    vt_max: 0.385,
                    r_min: 1e-12,
                }),
                weights: LossWeights::default(),
            },
            ProblemId::PoissonLshape => Self {
                id,
                domain: Domain::new(vec![(-1.0, 1.0), (-1.0, 1.0)], None).expect("valid box"),
                out_dim: 1,
                orders: vec![2, 2],
                terms: vec![term(0, &[2, 0]), term(0, &[0, 2])],
                residual_weights: vec![1.0],
                boundary: BoundarySpec::Outline { per_edge: 64 },
                exact: None,
                physics: Physics::Poisson,
                weights: LossWeights {
                    pde: 1.0,
                    ic: 1.0,
                    bc: 100.0,
                },
            },
            ProblemId::Ns4d => {
                let nu = 0.05;
                let s = |f: f64| Factor1d::sin(f);
                let c = |f: f64| Factor1d::cos(f);
                let scaled = |amp: f64| Factor1d::Exp { rate: -9.0 * nu, amp };
                let form = SeparableForm::new(vec![
                    vec![vec![c(2.0), s(2.0), s(1.0), scaled(2.0)]],
                    vec![vec![s(2.0), c(2.0), s(1.0), scaled(-1.0)]],
                    vec![vec![s(2.0), s(2.0), c(1.0), scaled(-2.0)]],
                ]);
                let (index, terms) = NsIndex::build();
                let tau = 2.0 * PI;
                Self {
                    id,
                    domain: Domain::new(vec![(0.0, tau), (0.0, tau), (0.0, tau), (0.0, 5.0)], Some(3)).expect("valid box"),
                    out_dim: 3,
                    orders: vec![3, 3, 3, 1],
                    terms,
                    residual_weights: vec![1.0, 1.0, 1.0, 100.0],
                    boundary: BoundarySpec::Faces { ic: true, bc: true },
                    exact: Some(form),
                    physics: Physics::NavierStokes {
                        nu,
                        index: Box::new(index),
                    },
                    weights: LossWeights {
                        pde: 1.0,
                        ic: 10.0,
                        bc: 1.0,
                    },
                }
            }
        }
    }

    pub fn id(&self) -> ProblemId {
        self.id
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// Highest derivative order the residual reads along each axis.
    pub fn orders(&self) -> &[usize] {
        &self.orders
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// Weight of each residual component inside the PDE loss.
    pub fn residual_weights(&self) -> &[f64] {
        &self.residual_weights
    }

    pub fn n_residuals(&self) -> usize {
        self.residual_weights.len()
    }

    pub fn boundary(&self) -> BoundarySpec {
        self.boundary
    }

    /// Sets the number of outline points per edge (L-shaped domain only).
    pub fn set_outline_points(&mut self, per_edge: usize) {
        if let BoundarySpec::Outline { .. } = self.boundary {
            self.boundary = BoundarySpec::Outline { per_edge };
        }
    }

    /// Number of source values [`PdeProblem::coefficients`] writes.
    pub fn n_coeffs(&self) -> usize {
        match &self.physics {
            Physics::Helmholtz { .. } | Physics::KleinGordon { .. } => 1,
            Physics::FlowMixing(_) => 2,
            Physics::NavierStokes { .. } => 3,
            Physics::DiffusionNl { .. } | Physics::Diffusion6d | Physics::Poisson => 0,
        }
    }

    /// Source terms and variable coefficients at `x`.
    pub fn coefficients(&self, x: &[f64], out: &mut [f64]) {
        match &self.physics {
            Physics::Helmholtz { k, a } => out[0] = self.helmholtz_source(*k, a, x),
            Physics::KleinGordon { space } => {
                let form = self.exact.as_ref().expect("manufactured");
                let d = space + 1;
                let u = form.value(0, x);
                let mut f = form.derivative(0, &unit(d, *space, 2), x);
                for i in 0..*space {
                    f -= form.derivative(0, &unit(d, i, 2), x);
                }
                out[0] = f + u * u;
            }
            Physics::FlowMixing(fm) => {
                let (a, b) = fm.coefficients(x[0], x[1]);
                out[0] = a;
                out[1] = b;
            }
            Physics::NavierStokes { nu, .. } => {
                let (px, py, pz, t) = (x[0], x[1], x[2], x[3]);
                let e = (-18.0 * nu * t).exp();
                out[0] = -6.0 * e * (4.0 * py).sin() * (2.0 * pz).sin();
                out[1] = -6.0 * e * (4.0 * px).sin() * (2.0 * pz).sin();
                out[2] = 6.0 * e * (4.0 * px).sin() * (4.0 * py).sin();
            }
            Physics::DiffusionNl { .. } | Physics::Diffusion6d | Physics::Poisson => {}
        }
    }

    fn helmholtz_source(&self, k: f64, a: &[f64; 3], x: &[f64]) -> f64 {
        let u = (a[0] * PI * x[0]).sin() * (a[1] * PI * x[1]).sin() * (a[2] * PI * x[2]).sin();
        -(a[0] * PI).powi(2) * u - (a[1] * PI).powi(2) * u - (a[2] * PI).powi(2) * u + k * k * u
    }

    /// Residual components at one point from the term values `g` (aligned
    /// with [`PdeProblem::terms`]) and the point's coefficients.
    pub fn residual_point<T: Real>(&self, g: &[T], coef: &[f64], out: &mut [T]) {
        match &self.physics {
            Physics::Helmholtz { k, .. } => {
                out[0] = g[1] + g[2] + g[3] + g[0] * (k * k) - coef[0];
            }
            Physics::KleinGordon { space } => {
                let mut lap = g[2];
                for v in &g[3..2 + space] {
                    lap = lap + *v;
                }
                out[0] = g[1] - lap + g[0] * g[0] - coef[0];
            }
            Physics::DiffusionNl { alpha } => {
                let (u, u_t, u_x, u_y, u_xx, u_yy) = (g[0], g[1], g[2], g[3], g[4], g[5]);
                out[0] = u_t - ((u_x * u_x + u_y * u_y) + u * (u_xx + u_yy)) * *alpha;
            }
            Physics::Diffusion6d => {
                let mut lap = g[1];
                for v in &g[2..6] {
                    lap = lap + *v;
                }
                out[0] = g[0] - lap;
            }
            Physics::FlowMixing(_) => {
                out[0] = g[0] + g[1] * coef[0] + g[2] * coef[1];
            }
            Physics::Poisson => {
                out[0] = -(g[0] + g[1]) - 1.0;
            }
            Physics::NavierStokes { nu, index } => ns_residual(g, coef, *nu, index, out),
        }
    }

    /// Whether the PDE loss applies at `x` (false outside the L-shape).
    pub fn mask(&self, x: &[f64]) -> bool {
        match self.physics {
            Physics::Poisson => !(x[0] > 0.0 && x[1] > 0.0),
            _ => true,
        }
    }

    pub fn has_exact(&self) -> bool {
        self.exact.is_some() || matches!(self.physics, Physics::FlowMixing(_))
    }

    pub fn separable_form(&self) -> Option<&SeparableForm> {
        self.exact.as_ref()
    }

    /// Exact per-axis features of the manufactured solution.
    pub fn analytic_model(&self) -> Result<AnalyticModel, PdeError> {
        self.exact
            .clone()
            .map(|f| AnalyticModel::new(f, self.domain.bounds().to_vec()))
            .ok_or(PdeError::NotSeparable(self.id.name()))
    }

    /// Exact solution at one point, one value per component.
    pub fn exact_point(&self, x: &[f64]) -> Result<Vec<f64>, PdeError> {
        if let Some(form) = &self.exact {
            return Ok((0..self.out_dim).map(|c| form.value(c, x)).collect());
        }
        match &self.physics {
            Physics::FlowMixing(fm) => Ok(vec![fm.fields(x[0], x[1], x[2]).u]),
            _ => Err(PdeError::NoAnalyticReference(self.id.name())),
        }
    }

    /// Closed-form `d^alpha u_c` at `x`. Flow mixing supports the first
    /// derivatives its residual reads.
    pub fn exact_derivative(&self, c: usize, alpha: &[usize], x: &[f64]) -> Result<f64, PdeError> {
        if let Some(form) = &self.exact {
            return Ok(form.derivative(c, alpha, x));
        }
        match &self.physics {
            Physics::FlowMixing(fm) => {
                let f = fm.fields(x[0], x[1], x[2]);
                match alpha {
                    [0, 0, 0] => Ok(f.u),
                    [1, 0, 0] => Ok(f.u_x),
                    [0, 1, 0] => Ok(f.u_y),
                    [0, 0, 1] => Ok(f.u_t),
                    _ => Err(PdeError::NotSeparable(self.id.name())),
                }
            }
            _ => Err(PdeError::NoAnalyticReference(self.id.name())),
        }
    }

    /// Exact solution on a factorized grid. Separable solutions go through
    /// the same merge as a model, so exact features reproduce it bitwise.
    pub fn exact_grid(&self, batch: &FactorizedBatch) -> Result<SolutionGrid, PdeError> {
        if self.exact.is_some() {
            let model = self.analytic_model()?;
            return Ok(model.predict_grid(batch)?);
        }
        if !self.has_exact() {
            return Err(PdeError::NoAnalyticReference(self.id.name()));
        }
        batch.check_bounds(self.domain.bounds())?;
        let mut data = vec![0.0; batch.len() * self.out_dim];
        let n = batch.len();
        batch.for_each_point(|p, x| {
            let v = self.exact_point(x).expect("checked above");
            for (c, val) in v.into_iter().enumerate() {
                data[c * n + p] = val;
            }
        });
        Ok(SolutionGrid::new(batch.dims(), self.out_dim, data)?)
    }

    /// Every term's closed-form grid on `batch`.
    pub fn exact_term_grids(&self, batch: &FactorizedBatch) -> Result<Vec<Vec<f64>>, PdeError> {
        let n = batch.len();
        let mut grids = vec![vec![0.0; n]; self.terms.len()];
        let mut err = None;
        batch.for_each_point(|p, x| {
            for (grid, t) in grids.iter_mut().zip(&self.terms) {
                match self.exact_derivative(t.component, &t.alpha, x) {
                    Ok(v) => grid[p] = v,
                    Err(e) => err = Some(e),
                }
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(grids),
        }
    }

    /// Residual grids (one per residual component) from term grids aligned
    /// with [`PdeProblem::terms`]; masked-out nodes get 0.
    pub fn residual_grids(&self, term_grids: &[&[f64]], batch: &FactorizedBatch) -> Result<Vec<Vec<f64>>, PdeError> {
        if term_grids.len() != self.terms.len() {
            return Err(ShapeError::Length {
                expected: self.terms.len(),
                got: term_grids.len(),
            }
            .into());
        }
        let n = batch.len();
        if let Some(bad) = term_grids.iter().find(|g| g.len() != n) {
            return Err(ShapeError::Length {
                expected: n,
                got: bad.len(),
            }
            .into());
        }
        let mut out = vec![vec![0.0; n]; self.n_residuals()];
        let mut coef = vec![0.0; self.n_coeffs()];
        let mut g = vec![0.0; self.terms.len()];
        let mut r = vec![0.0; self.n_residuals()];
        batch.for_each_point(|p, x| {
            if !self.mask(x) {
                return;
            }
            self.coefficients(x, &mut coef);
            for (gi, grid) in g.iter_mut().zip(term_grids) {
                *gi = grid[p];
            }
            self.residual_point(&g, &coef, &mut r);
            for (o, &v) in out.iter_mut().zip(&r) {
                o[p] = v;
            }
        });
        Ok(out)
    }

    /// Initial data `u(x, t_0)` for every component.
    pub fn initial_value(&self, x: &[f64], out: &mut [f64]) {
        match &self.physics {
            Physics::DiffusionNl { .. } => out[0] = gaussian_bumps(x[0], x[1]),
            _ => self.fill_exact(x, out),
        }
    }

    /// Dirichlet data on the spatial boundary for every component.
    pub fn boundary_value(&self, x: &[f64], out: &mut [f64]) {
        match &self.physics {
            Physics::Helmholtz { .. } | Physics::DiffusionNl { .. } | Physics::Poisson => out.fill(0.0),
            _ => self.fill_exact(x, out),
        }
    }

    fn fill_exact(&self, x: &[f64], out: &mut [f64]) {
        let v = self.exact_point(x).expect("problem carries a closed form");
        out.copy_from_slice(&v);
    }
}

/// Initial condition of the nonlinear diffusion problem.
pub(crate) fn gaussian_bumps(x: f64, y: f64) -> f64 {
    0.25 * (-10.0 * ((x - 0.2).powi(2) + (y - 0.3).powi(2))).exp()
        + 0.4 * (-15.0 * ((x + 0.1).powi(2) + (y + 0.5).powi(2))).exp()
        + 0.3 * (-20.0 * ((x + 0.5).powi(2) + y * y)).exp()
}

/// Vorticity transport `w_t + (u.grad) w - (w.grad) u - nu lap w - F` for
/// `w = curl u`, plus `div u`.
fn ns_residual<T: Real>(g: &[T], force: &[f64], nu: f64, index: &NsIndex, out: &mut [T]) {
    let d = |c: usize, a: [usize; 4]| g[index.at(c, a)];
    let e = |l: usize, k: usize| {
        let mut a = [0; 4];
        a[l] += k;
        a
    };
    let plus = |mut a: [usize; 4], l: usize| {
        a[l] += 1;
        a
    };
    // curl component i of d^extra u
    let curl = |i: usize, extra: [usize; 4]| {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        d(k, plus(extra, j)) - d(j, plus(extra, k))
    };
    let zero = [0; 4];
    let w: Vec<T> = (0..3).map(|i| curl(i, zero)).collect();
    let u: Vec<T> = (0..3).map(|c| d(c, zero)).collect();
    for i in 0..3 {
        let w_t = curl(i, e(3, 1));
        let mut adv = u[0] * curl(i, e(0, 1));
        let mut stretch = w[0] * d(i, e(0, 1));
        let mut lap = curl(i, e(0, 2));
        for l in 1..3 {
            adv = adv + u[l] * curl(i, e(l, 1));
            stretch = stretch + w[l] * d(i, e(l, 1));
            lap = lap + curl(i, e(l, 2));
        }
        out[i] = w_t + adv - stretch - lap * nu - force[i];
    }
    out[3] = d(0, e(0, 1)) + d(1, e(1, 1)) + d(2, e(2, 1));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ns_term_table_covers_residual_reads() {
        let (index, terms) = NsIndex::build();
        assert_eq!(terms.len(), 3 * (20 + 3));
        for (k, t) in terms.iter().enumerate() {
            let a = [t.alpha[0], t.alpha[1], t.alpha[2], t.alpha[3]];
            assert_eq!(index.at(t.component, a), k);
        }
    }

    #[test]
    fn problem_ids_round_trip() {
        for id in ProblemId::ALL {
            assert_eq!(id.name().parse::<ProblemId>().unwrap(), id);
            let p = PdeProblem::new(id);
            assert_eq!(p.orders().len(), p.dim());
            for t in p.terms() {
                for (a, o) in t.alpha.iter().zip(p.orders()) {
                    assert!(a <= o, "{id}: term {t:?} exceeds orders");
                }
            }
        }
        let err = "heat".parse::<ProblemId>().unwrap_err().to_string();
        assert!(err.contains("helmholtz3d") && err.contains("ns4d"));
    }
}
