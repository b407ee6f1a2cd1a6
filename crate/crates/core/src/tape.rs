//! Scalar reverse-mode tape.
//!
//! Every [`Var`] is a node on a [`Tape`]; nodes are appended in evaluation
//! order so the tape is already topologically sorted and one reverse sweep
//! visits each node once. Jets of `Var`s ([`crate::jet::Jet<Var>`]) put
//! every Taylor coefficient on the tape, which differentiates through
//! tangent propagation (reverse-over-forward).

use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::TapeError;
use crate::jet::Real;

const NONE: u32 = u32::MAX;

#[derive(Clone, Copy, Debug)]
struct Node {
    parents: [u32; 2],
    partials: [f64; 2],
}

#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            nodes: RefCell::new(Vec::with_capacity(n)),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops every node while keeping the allocation.
    pub fn clear(&mut self) {
        self.nodes.get_mut().clear();
    }

    /// A new leaf (input or parameter).
    pub fn var(&self, value: f64) -> Var<'_> {
        self.push(value, [NONE, NONE], [0.0, 0.0])
    }

    fn push(&self, value: f64, parents: [u32; 2], partials: [f64; 2]) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let index = nodes.len();
        nodes.push(Node { parents, partials });
        Var {
            tape: self,
            index,
            value,
        }
    }

    fn unary(&self, a: Var<'_>, value: f64, da: f64) -> Var<'_> {
        self.push(value, [a.index as u32, NONE], [da, 0.0])
    }

    fn binary(&self, a: Var<'_>, b: Var<'_>, value: f64, da: f64, db: f64) -> Var<'_> {
        self.push(value, [a.index as u32, b.index as u32], [da, db])
    }

    /// Adjoints of every node for a single scalar output.
    pub fn gradient(&self, output: Var<'_>) -> Gradient {
        self.vjp(&[(output, 1.0)])
    }

    /// `backward` on a list of outputs; only a single scalar is accepted.
    pub fn backward(&self, outputs: &[Var<'_>]) -> Result<Gradient, TapeError> {
        match outputs {
            [out] => Ok(self.gradient(*out)),
            _ => Err(TapeError::NonScalarOutput(outputs.len())),
        }
    }

    /// Vector-Jacobian product: seeds each output with its cotangent and
    /// sweeps the tape once in reverse.
    pub fn vjp(&self, seeds: &[(Var<'_>, f64)]) -> Gradient {
        let nodes = self.nodes.borrow();
        let mut adjoints = vec![0.0; nodes.len()];
        let mut last = 0;
        for (v, s) in seeds {
            adjoints[v.index] += s;
            last = last.max(v.index + 1);
        }
        for i in (0..last).rev() {
            let a = adjoints[i];
            if a == 0.0 {
                continue;
            }
            let node = &nodes[i];
            for k in 0..2 {
                let p = node.parents[k];
                if p != NONE {
                    adjoints[p as usize] += a * node.partials[k];
                }
            }
        }
        Gradient { adjoints }
    }

    /// Reuses `buf` for the adjoint array.
    pub fn vjp_into(&self, seeds: &[(Var<'_>, f64)], buf: &mut Vec<f64>) {
        let nodes = self.nodes.borrow();
        buf.clear();
        buf.resize(nodes.len(), 0.0);
        let mut last = 0;
        for (v, s) in seeds {
            buf[v.index] += s;
            last = last.max(v.index + 1);
        }
        for i in (0..last).rev() {
            let a = buf[i];
            if a == 0.0 {
                continue;
            }
            let node = &nodes[i];
            for k in 0..2 {
                let p = node.parents[k];
                if p != NONE {
                    buf[p as usize] += a * node.partials[k];
                }
            }
        }
    }
}

/// Adjoint array produced by a reverse sweep, indexed by node.
#[derive(Debug, Clone)]
pub struct Gradient {
    adjoints: Vec<f64>,
}

impl Gradient {
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        self.adjoints.get(v.index).copied().unwrap_or(0.0)
    }

    pub fn wrt_all(&self, vars: &[Var<'_>]) -> Vec<f64> {
        vars.iter().map(|v| self.wrt(*v)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.adjoints
    }
}

/// A scalar recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    index: usize,
    value: f64,
}

impl<'t> Var<'t> {
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var(#{}: {})", self.index, self.value)
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Self) -> Self {
        self.tape.binary(self, rhs, self.value + rhs.value, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Self) -> Self {
        self.tape.binary(self, rhs, self.value - rhs.value, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Self) -> Self {
        self.tape
            .binary(self, rhs, self.value * rhs.value, rhs.value, self.value)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Self) -> Self {
        let q = self.value / rhs.value;
        self.tape.binary(self, rhs, q, 1.0 / rhs.value, -q / rhs.value)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Self {
        self.tape.unary(self, -self.value, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Self {
        self.tape.unary(self, self.value + rhs, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Self {
        self.tape.unary(self, self.value - rhs, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Self {
        self.tape.unary(self, self.value * rhs, rhs)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: f64) -> Self {
        self.tape.unary(self, self.value / rhs, 1.0 / rhs)
    }
}

impl<'t> Real for Var<'t> {
    fn value(&self) -> f64 {
        self.value
    }

    fn lift(&self, c: f64) -> Self {
        self.tape.var(c)
    }

    fn tanh(self) -> Self {
        let t = self.value.tanh();
        self.tape.unary(self, t, 1.0 - t * t)
    }

    fn exp(self) -> Self {
        let e = self.value.exp();
        self.tape.unary(self, e, e)
    }

    fn sin(self) -> Self {
        self.tape.unary(self, self.value.sin(), self.value.cos())
    }

    fn cos(self) -> Self {
        self.tape.unary(self, self.value.cos(), -self.value.sin())
    }

    fn sqrt(self) -> Self {
        let s = self.value.sqrt();
        self.tape.unary(self, s, 0.5 / s)
    }
}
