//! Reverse-mode tape (Wengert list).
//!
//! Every operation involving at least one recorded variable appends one node
//! holding at most two parent indices and the local partials w.r.t. them.
//! Parents always precede their children, so a single backward pass over the
//! node list in reverse order accumulates all adjoints.

use std::cell::{Cell, RefCell};
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use super::Scalar;

const NO_PARENT: u32 = u32::MAX;

#[derive(Clone, Copy)]
struct Node {
    parents: [u32; 2],
    partials: [f64; 2],
}

#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    first_non_finite: Cell<Option<u32>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            nodes: RefCell::new(Vec::with_capacity(n)),
            first_non_finite: Cell::new(None),
        }
    }

    /// Records a new independent input.
    pub fn var(&self, v: f64) -> Var<'_> {
        let idx = self.push(v, [NO_PARENT; 2], [0.0; 2]);
        Var {
            tape: Some(self),
            idx,
            val: v,
        }
    }

    pub fn vars(&self, values: &[f64]) -> Vec<Var<'_>> {
        values.iter().map(|&v| self.var(v)).collect()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index of the first recorded node whose value was NaN or infinite.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.first_non_finite.get().map(|i| i as usize)
    }

    /// Drops all recorded nodes, keeping the allocation.
    pub fn clear(&mut self) {
        self.nodes.get_mut().clear();
        self.first_non_finite.set(None);
    }

    #[inline]
    fn push(&self, val: f64, parents: [u32; 2], partials: [f64; 2]) -> u32 {
        let mut nodes = self.nodes.borrow_mut();
        let idx = nodes.len() as u32;
        if !val.is_finite() && self.first_non_finite.get().is_none() {
            self.first_non_finite.set(Some(idx));
        }
        nodes.push(Node { parents, partials });
        idx
    }

    /// Runs the reverse sweep seeded at `output`.
    pub fn gradient(&self, output: Var<'_>) -> Gradient {
        let nodes = self.nodes.borrow();
        let mut adjoint = vec![0.0; nodes.len()];
        if let Some(tape) = output.tape {
            debug_assert!(std::ptr::eq(tape, self), "output recorded on another tape");
            adjoint[output.idx as usize] = 1.0;
            for i in (0..=output.idx as usize).rev() {
                let a = adjoint[i];
                if a == 0.0 {
                    continue;
                }
                let node = nodes[i];
                for k in 0..2 {
                    let p = node.parents[k];
                    if p != NO_PARENT {
                        adjoint[p as usize] += a * node.partials[k];
                    }
                }
            }
        }
        Gradient { adjoint }
    }
}

/// Adjoints of every node after a reverse sweep.
pub struct Gradient {
    adjoint: Vec<f64>,
}

impl Gradient {
    /// Derivative of the swept output w.r.t. `v`; zero for constants.
    pub fn wrt(&self, v: &Var<'_>) -> f64 {
        if v.idx == NO_PARENT {
            0.0
        } else {
            self.adjoint[v.idx as usize]
        }
    }

    pub fn wrt_all(&self, vs: &[Var<'_>]) -> Vec<f64> {
        vs.iter().map(|v| self.wrt(v)).collect()
    }
}

/// A scalar recorded on a [`Tape`]; constants carry no tape.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: Option<&'t Tape>,
    idx: u32,
    val: f64,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.tape.is_some() {
            write!(f, "Var(#{} = {})", self.idx, self.val)
        } else {
            write!(f, "Var(const {})", self.val)
        }
    }
}

impl<'t> Var<'t> {
    /// Node index on the tape, `None` for constants.
    pub fn index(&self) -> Option<usize> {
        self.tape.map(|_| self.idx as usize)
    }

    #[inline]
    fn constant_val(val: f64) -> Self {
        Var {
            tape: None,
            idx: NO_PARENT,
            val,
        }
    }

    #[inline]
    fn unary(self, val: f64, d: f64) -> Self {
        match self.tape {
            None => Self::constant_val(val),
            Some(t) => Var {
                tape: Some(t),
                idx: t.push(val, [self.idx, NO_PARENT], [d, 0.0]),
                val,
            },
        }
    }

    #[inline]
    fn binary(self, o: Self, val: f64, da: f64, db: f64) -> Self {
        match (self.tape, o.tape) {
            (None, None) => Self::constant_val(val),
            (Some(_), None) => self.unary(val, da),
            (None, Some(_)) => o.unary(val, db),
            (Some(t), Some(_)) => Var {
                tape: Some(t),
                idx: t.push(val, [self.idx, o.idx], [da, db]),
                val,
            },
        }
    }
}

impl Add for Var<'_> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        self.binary(o, self.val + o.val, 1.0, 1.0)
    }
}

impl Sub for Var<'_> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        self.binary(o, self.val - o.val, 1.0, -1.0)
    }
}

impl Mul for Var<'_> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        self.binary(o, self.val * o.val, o.val, self.val)
    }
}

impl Div for Var<'_> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let inv = 1.0 / o.val;
        let v = self.val * inv;
        self.binary(o, v, inv, -v * inv)
    }
}

impl Neg for Var<'_> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.unary(-self.val, -1.0)
    }
}

impl Add<f64> for Var<'_> {
    type Output = Self;
    #[inline]
    fn add(self, o: f64) -> Self {
        self.unary(self.val + o, 1.0)
    }
}

impl Sub<f64> for Var<'_> {
    type Output = Self;
    #[inline]
    fn sub(self, o: f64) -> Self {
        self.unary(self.val - o, 1.0)
    }
}

impl Mul<f64> for Var<'_> {
    type Output = Self;
    #[inline]
    fn mul(self, o: f64) -> Self {
        self.unary(self.val * o, o)
    }
}

impl Div<f64> for Var<'_> {
    type Output = Self;
    #[inline]
    fn div(self, o: f64) -> Self {
        self.unary(self.val / o, 1.0 / o)
    }
}

impl AddAssign for Var<'_> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl SubAssign for Var<'_> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl MulAssign for Var<'_> {
    #[inline]
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}

impl Scalar for Var<'_> {
    #[inline]
    fn constant(v: f64) -> Self {
        Self::constant_val(v)
    }
    #[inline]
    fn value(&self) -> f64 {
        self.val
    }
    fn exp(self) -> Self {
        let e = self.val.exp();
        self.unary(e, e)
    }
    fn ln(self) -> Self {
        self.unary(self.val.ln(), 1.0 / self.val)
    }
    fn sqrt(self) -> Self {
        let s = self.val.sqrt();
        self.unary(s, 0.5 / s)
    }
    fn sin(self) -> Self {
        self.unary(self.val.sin(), self.val.cos())
    }
    fn cos(self) -> Self {
        self.unary(self.val.cos(), -self.val.sin())
    }
    fn tanh(self) -> Self {
        let t = self.val.tanh();
        self.unary(t, 1.0 - t * t)
    }
}
