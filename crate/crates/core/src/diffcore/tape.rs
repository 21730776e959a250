//! Append-only computation record and the scalar handle that writes into it.
//!
//! Every arithmetic operation on a [`Var`] that is attached to a [`Tape`]
//! appends one node holding at most two parent indices and the local partial
//! derivatives. Constants (and detached values) carry no tape reference and
//! never occupy a node, so arithmetic that only involves constants is as cheap
//! as plain `f64` math.
//!
//! Multi-output blocks whose backward pass is known in closed form (dense
//! network layers) can be recorded as a single [`CustomBackward`] entry instead
//! of thousands of scalar nodes.

use std::cell::RefCell;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};
use std::sync::atomic::{AtomicU64, Ordering};

use super::GradError;

const NONE: u32 = u32::MAX;

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone, Copy)]
struct Node {
    a: u32,
    b: u32,
    da: f64,
    db: f64,
}

/// Vector-Jacobian product of an opaque multi-output block.
///
/// `out_adj` holds the adjoints of the block outputs. Implementations add the
/// input adjoints into `in_adj` (same order as the recorded inputs) and may
/// accumulate into the tape's external gradient buffer `ext_adj`, which is how
/// parameters that live outside the record (network weights) receive gradients.
pub trait CustomBackward: Send {
    fn backward(&self, out_adj: &[f64], in_adj: &mut [f64], ext_adj: &mut [f64]);
}

struct CustomEntry {
    inputs: Vec<u32>,
    out_start: u32,
    out_end: u32,
    op: Box<dyn CustomBackward>,
}

/// A computation record. One per rollout lane; never shared across threads.
pub struct Tape {
    id: u64,
    nodes: RefCell<Vec<Node>>,
    customs: RefCell<Vec<CustomEntry>>,
    n_external: usize,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl std::fmt::Debug for Tape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tape")
            .field("id", &self.id)
            .field("len", &self.len())
            .field("customs", &self.customs.borrow().len())
            .field("n_external", &self.n_external)
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::with_external(0)
    }

    /// A record whose custom blocks may accumulate into `n` external gradient slots.
    pub fn with_external(n: usize) -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: RefCell::new(Vec::with_capacity(1 << 12)),
            customs: RefCell::new(Vec::new()),
            n_external: n,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_external(&self) -> usize {
        self.n_external
    }

    /// Registers an independent variable.
    pub fn input(&self, value: f64) -> Var<'_> {
        let idx = self.push(Node {
            a: NONE,
            b: NONE,
            da: 0.0,
            db: 0.0,
        });
        Var {
            tape: Some(self),
            idx,
            val: value,
        }
    }

    pub fn inputs(&self, values: &[f64]) -> Vec<Var<'_>> {
        values.iter().map(|&v| self.input(v)).collect()
    }

    /// Drops every recorded node. Requires that no `Var` borrows the tape.
    pub fn clear(&mut self) {
        self.nodes.get_mut().clear();
        self.customs.get_mut().clear();
    }

    fn push(&self, node: Node) -> u32 {
        let mut nodes = self.nodes.borrow_mut();
        let idx = nodes.len();
        assert!(idx < NONE as usize, "computation record overflow");
        nodes.push(node);
        idx as u32
    }

    fn unary(&self, a: u32, da: f64, val: f64) -> Var<'_> {
        let idx = self.push(Node {
            a,
            b: NONE,
            da,
            db: 0.0,
        });
        Var {
            tape: Some(self),
            idx,
            val,
        }
    }

    fn binary(&self, a: u32, da: f64, b: u32, db: f64, val: f64) -> Var<'_> {
        let idx = self.push(Node { a, b, da, db });
        Var {
            tape: Some(self),
            idx,
            val,
        }
    }

    /// Records an opaque block with the given input handles and output values.
    ///
    /// Inputs may be constants or belong to this tape; inputs from another
    /// record are rejected.
    pub fn custom<'t>(
        &'t self,
        inputs: &[Var<'t>],
        outputs: &[f64],
        op: Box<dyn CustomBackward>,
    ) -> Result<Vec<Var<'t>>, GradError> {
        let mut idx = Vec::with_capacity(inputs.len());
        for x in inputs {
            match x.tape {
                None => idx.push(NONE),
                Some(t) if t.id == self.id => idx.push(x.idx),
                Some(_) => return Err(GradError::ForeignRecord),
            }
        }
        let start = self.len() as u32;
        let outs: Vec<Var<'t>> = outputs.iter().map(|&v| self.input(v)).collect();
        let end = self.len() as u32;
        self.customs.borrow_mut().push(CustomEntry {
            inputs: idx,
            out_start: start,
            out_end: end,
            op,
        });
        Ok(outs)
    }

    /// Reverse accumulation from `output`; returns the adjoint of every node
    /// plus the external gradient buffer.
    pub fn backward(&self, output: Var<'_>) -> Result<Gradient, GradError> {
        let nodes = self.nodes.borrow();
        let customs = self.customs.borrow();
        let mut adj = vec![0.0; nodes.len()];
        let mut ext = vec![0.0; self.n_external];
        let out_idx = match output.tape {
            None => {
                return Ok(Gradient {
                    tape_id: self.id,
                    adj,
                    ext,
                })
            }
            Some(t) if t.id != self.id => return Err(GradError::ForeignRecord),
            Some(_) => output.idx as usize,
        };
        if !output.val.is_finite() {
            return Err(GradError::Fault { node: out_idx });
        }
        adj[out_idx] = 1.0;

        let mut pending = customs.len();
        while pending > 0 && customs[pending - 1].out_start as usize > out_idx {
            pending -= 1;
        }
        for i in (0..=out_idx).rev() {
            let a = adj[i];
            if a != 0.0 {
                if !a.is_finite() {
                    return Err(GradError::Fault { node: i });
                }
                let n = nodes[i];
                if n.a != NONE {
                    adj[n.a as usize] += n.da * a;
                }
                if n.b != NONE {
                    adj[n.b as usize] += n.db * a;
                }
            }
            while pending > 0 && customs[pending - 1].out_start as usize == i {
                let entry = &customs[pending - 1];
                let (s, e) = (entry.out_start as usize, entry.out_end as usize);
                if adj[s..e].iter().any(|&g| g != 0.0) {
                    let mut in_adj = vec![0.0; entry.inputs.len()];
                    entry.op.backward(&adj[s..e], &mut in_adj, &mut ext);
                    for (&k, g) in entry.inputs.iter().zip(in_adj) {
                        if !g.is_finite() {
                            return Err(GradError::Fault { node: s });
                        }
                        if k != NONE {
                            adj[k as usize] += g;
                        }
                    }
                }
                pending -= 1;
            }
        }
        if let Some(i) = ext.iter().position(|g| !g.is_finite()) {
            return Err(GradError::ExternalFault { slot: i });
        }
        Ok(Gradient {
            tape_id: self.id,
            adj,
            ext,
        })
    }

    /// ∂output/∂input for each of `inputs`. Constant inputs get 0.
    pub fn gradient(&self, output: Var<'_>, inputs: &[Var<'_>]) -> Result<Vec<f64>, GradError> {
        let g = self.backward(output)?;
        inputs.iter().map(|x| g.wrt(x)).collect()
    }
}

/// Result of one reverse sweep.
#[derive(Debug, Clone)]
pub struct Gradient {
    tape_id: u64,
    adj: Vec<f64>,
    ext: Vec<f64>,
}

impl Gradient {
    pub fn wrt(&self, x: &Var<'_>) -> Result<f64, GradError> {
        match x.tape {
            None => Ok(0.0),
            Some(t) if t.id != self.tape_id => Err(GradError::ForeignRecord),
            Some(_) => Ok(self.adj.get(x.idx as usize).copied().unwrap_or(0.0)),
        }
    }

    pub fn external(&self) -> &[f64] {
        &self.ext
    }

    pub fn into_external(self) -> Vec<f64> {
        self.ext
    }
}

/// A scalar participating in (at most) one computation record.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: Option<&'t Tape>,
    idx: u32,
    val: f64,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.tape {
            Some(_) => write!(f, "Var({} @{})", self.val, self.idx),
            None => write!(f, "Var({})", self.val),
        }
    }
}

impl<'t> Var<'t> {
    pub fn constant(val: f64) -> Self {
        Var {
            tape: None,
            idx: NONE,
            val,
        }
    }

    pub fn value(&self) -> f64 {
        self.val
    }

    pub fn is_constant(&self) -> bool {
        self.tape.is_none()
    }

    /// Same value, no gradient flow.
    pub fn detach(&self) -> Self {
        Var::constant(self.val)
    }

    fn map(self, val: f64, d: f64) -> Self {
        match self.tape {
            None => Var::constant(val),
            Some(t) => t.unary(self.idx, d, val),
        }
    }

    fn zip(self, other: Self, val: f64, da: f64, db: f64) -> Self {
        match (self.tape, other.tape) {
            (None, None) => Var::constant(val),
            (Some(t), None) => t.unary(self.idx, da, val),
            (None, Some(t)) => t.unary(other.idx, db, val),
            (Some(t), Some(u)) => {
                assert!(
                    t.id == u.id,
                    "operands belong to different computation records"
                );
                t.binary(self.idx, da, other.idx, db, val)
            }
        }
    }

    pub fn exp(self) -> Self {
        let e = self.val.exp();
        self.map(e, e)
    }

    pub fn ln(self) -> Self {
        self.map(self.val.ln(), 1.0 / self.val)
    }

    pub fn tanh(self) -> Self {
        let t = self.val.tanh();
        self.map(t, 1.0 - t * t)
    }

    pub fn sqrt(self) -> Self {
        let r = self.val.sqrt();
        self.map(r, 0.5 / r)
    }

    pub fn sin(self) -> Self {
        self.map(self.val.sin(), self.val.cos())
    }

    pub fn cos(self) -> Self {
        self.map(self.val.cos(), -self.val.sin())
    }

    /// Subgradient at 0 is +1.
    pub fn abs(self) -> Self {
        if self.val >= 0.0 {
            self.map(self.val, 1.0)
        } else {
            self.map(-self.val, -1.0)
        }
    }

    /// Ties route the derivative to `self`.
    pub fn min(self, other: Self) -> Self {
        if self.val <= other.val {
            self
        } else {
            other
        }
    }

    /// Ties route the derivative to `self`.
    pub fn max(self, other: Self) -> Self {
        if self.val >= other.val {
            self
        } else {
            other
        }
    }

    /// Values on a bound keep the derivative on `self`.
    pub fn clamp(self, lo: Self, hi: Self) -> Self {
        if self.val < lo.val {
            lo
        } else if self.val > hi.val {
            hi
        } else {
            self
        }
    }

    pub fn select(cond: bool, a: Self, b: Self) -> Self {
        if cond {
            a
        } else {
            b
        }
    }
}

impl PartialEq for Var<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.val == other.val
    }
}

impl PartialOrd for Var<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        self.val.partial_cmp(&other.val)
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Self) -> Self {
        self.zip(rhs, self.val + rhs.val, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Self) -> Self {
        self.zip(rhs, self.val - rhs.val, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Self) -> Self {
        self.zip(rhs, self.val * rhs.val, rhs.val, self.val)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Self) -> Self {
        let q = self.val / rhs.val;
        self.zip(rhs, q, 1.0 / rhs.val, -q / rhs.val)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Self {
        self.map(-self.val, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Self {
        self.map(self.val + rhs, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Self {
        self.map(self.val - rhs, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Self {
        self.map(self.val * rhs, rhs)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: f64) -> Self {
        self.map(self.val / rhs, 1.0 / rhs)
    }
}

impl<'t> Add<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        rhs + self
    }
}

impl<'t> Sub<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        rhs.map(self - rhs.val, -1.0)
    }
}

impl<'t> Mul<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        rhs * self
    }
}

impl<'t> Div<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        let q = self / rhs.val;
        rhs.map(q, -q / rhs.val)
    }
}

impl AddAssign for Var<'_> {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl SubAssign for Var<'_> {
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl MulAssign for Var<'_> {
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_derivative() {
        let t = Tape::new();
        let x = t.input(3.0);
        assert_eq!(t.gradient(x, &[x]).unwrap(), vec![1.0]);
    }

    #[test]
    fn square_derivative() {
        let t = Tape::new();
        let x = t.input(0.0);
        assert_eq!(t.gradient(x * x, &[x]).unwrap(), vec![0.0]);
        let t = Tape::new();
        let x = t.input(2.0);
        assert_eq!(t.gradient(x * x, &[x]).unwrap(), vec![4.0]);
    }

    #[test]
    fn exp_and_tanh_at_zero() {
        let t = Tape::new();
        let x = t.input(0.0);
        assert_eq!(t.gradient(x.exp(), &[x]).unwrap(), vec![1.0]);
        assert_eq!(t.gradient(x.tanh(), &[x]).unwrap(), vec![1.0]);
    }

    #[test]
    fn min_selects_first() {
        let t = Tape::new();
        let x = t.input(1.0);
        let y = t.input(2.0);
        assert_eq!(t.gradient(x.min(y), &[x, y]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(t.gradient(x.max(y), &[x, y]).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn ties_route_to_first_argument() {
        let t = Tape::new();
        let x = t.input(1.0);
        let y = t.input(1.0);
        assert_eq!(t.gradient(x.min(y), &[x, y]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(t.gradient(y.max(x), &[x, y]).unwrap(), vec![0.0, 1.0]);
        let lo = t.input(1.0);
        let hi = t.input(4.0);
        assert_eq!(
            t.gradient(x.clamp(lo, hi), &[x, lo, hi]).unwrap(),
            vec![1.0, 0.0, 0.0]
        );
    }

    #[test]
    fn clamp_outside_routes_to_bound() {
        let t = Tape::new();
        let x = t.input(5.0);
        let lo = t.input(0.0);
        let hi = t.input(4.0);
        assert_eq!(
            t.gradient(x.clamp(lo, hi), &[x, lo, hi]).unwrap(),
            vec![0.0, 0.0, 1.0]
        );
    }

    #[test]
    fn detach_blocks_gradient() {
        let t = Tape::new();
        let x = t.input(3.0);
        assert_eq!(t.gradient(x.detach() * x, &[x]).unwrap(), vec![3.0]);
        assert_eq!(t.gradient(x.detach(), &[x]).unwrap(), vec![0.0]);
        let t = Tape::new();
        let x = t.input(7.5);
        assert_eq!(x.detach().value(), 7.5);
    }

    #[test]
    fn nan_in_sweep_is_a_fault() {
        let t = Tape::new();
        let x = t.input(0.0);
        let y = x.sqrt() + x;
        match t.gradient(y, &[x]) {
            Err(GradError::Fault { .. }) => {}
            other => panic!("expected fault, got {other:?}"),
        }
    }

    #[test]
    fn foreign_inputs_are_rejected() {
        let t = Tape::new();
        let u = Tape::new();
        let x = t.input(1.0);
        let y = u.input(1.0);
        assert!(matches!(
            t.gradient(x * 2.0, &[y]),
            Err(GradError::ForeignRecord)
        ));
    }

    #[test]
    #[should_panic(expected = "different computation records")]
    fn mixing_records_panics() {
        let t = Tape::new();
        let u = Tape::new();
        let _ = t.input(1.0) + u.input(2.0);
    }

    struct Double;
    impl CustomBackward for Double {
        fn backward(&self, out_adj: &[f64], in_adj: &mut [f64], ext_adj: &mut [f64]) {
            in_adj[0] += 2.0 * out_adj[0] + 3.0 * out_adj[1];
            ext_adj[0] += out_adj[0];
        }
    }

    #[test]
    fn custom_block_backward() {
        let t = Tape::with_external(1);
        let x = t.input(1.5);
        let h = x * x;
        // outputs: [2h, 3h]
        let outs = t
            .custom(&[h], &[2.0 * h.value(), 3.0 * h.value()], Box::new(Double))
            .unwrap();
        let y = outs[0] + outs[1] * 2.0;
        let g = t.backward(y).unwrap();
        // dy/dh = 2 + 6 = 8, dh/dx = 3
        assert_eq!(g.wrt(&x).unwrap(), 24.0);
        assert_eq!(g.external(), &[1.0]);
    }
}
