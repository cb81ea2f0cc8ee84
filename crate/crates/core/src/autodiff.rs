//! Tape-based reverse-mode automatic differentiation over `f64` scalars.
//!
//! Every operation appends a node to an append-only [`Tape`] together with the
//! local partial derivatives with respect to its parents. Because nodes can only
//! reference nodes created before them, construction order is a topological
//! order and [`Tape::backward`] is a single reverse sweep.
//!
//! Vectors and matrices are plain slices of [`Var`] handles; [`Tape::matvec`]
//! records each output row as one node with one parent per weight and input.

use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: dimension mismatch, expected {expected}, got {got}")]
    DimensionMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },
    #[error("{op}: expected {expected} inputs, got {got}")]
    Arity {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("value #{index} does not belong to this tape (or was truncated away)")]
    NotOnTape { index: usize },
    #[error("value #{index} is not a leaf and cannot be overwritten")]
    NotALeaf { index: usize },
}

/// Handle to a node on a specific tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

impl Var {
    pub fn index(self) -> usize {
        self.index
    }
}

/// The operation that produced a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpTag {
    Leaf,
    Constant,
    Add,
    Sub,
    Mul,
    Dot,
    Tanh,
    Logistic,
    Relu,
    Identity,
    Logit,
}

/// Scalar operations accepted by [`Tape::forward_op`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarOp {
    Add,
    Sub,
    Mul,
    Tanh,
    Logistic,
    Relu,
    Identity,
}

impl ScalarOp {
    fn arity(self) -> usize {
        match self {
            ScalarOp::Add | ScalarOp::Sub | ScalarOp::Mul => 2,
            _ => 1,
        }
    }

    fn name(self) -> &'static str {
        match self {
            ScalarOp::Add => "add",
            ScalarOp::Sub => "sub",
            ScalarOp::Mul => "mul",
            ScalarOp::Tanh => "tanh",
            ScalarOp::Logistic => "logistic",
            ScalarOp::Relu => "relu",
            ScalarOp::Identity => "linear_identity",
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    data: f64,
    grad: f64,
    op: OpTag,
    parents_start: usize,
    parents_len: usize,
}

/// Marker returned by [`Tape::checkpoint`]; truncating to it drops every node
/// recorded afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Checkpoint {
    tape: u64,
    nodes: usize,
    parents: usize,
}

/// Accumulated gradients, indexed by node.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    tape: u64,
    grads: Vec<f64>,
}

impl Gradients {
    /// Gradient of the backward root with respect to `v` (0 for unrelated nodes).
    pub fn get(&self, v: Var) -> f64 {
        debug_assert_eq!(v.tape, self.tape);
        self.grads.get(v.index).copied().unwrap_or(0.0)
    }

    pub fn collect(&self, vars: &[Var]) -> Vec<f64> {
        vars.iter().map(|&v| self.get(v)).collect()
    }
}

/// Numerically stable logistic function.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    parents: Vec<(usize, f64)>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            parents: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, data: f64, op: OpTag, parents: &[(usize, f64)]) -> Var {
        let parents_start = self.parents.len();
        self.parents.extend_from_slice(parents);
        self.nodes.push(Node {
            data,
            grad: 0.0,
            op,
            parents_start,
            parents_len: parents.len(),
        });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn check(&self, v: Var) -> Result<usize, AutodiffError> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(AutodiffError::NotOnTape { index: v.index });
        }
        Ok(v.index)
    }

    /// A differentiable input (parameter or data).
    pub fn leaf(&mut self, x: f64) -> Var {
        self.push(x, OpTag::Leaf, &[])
    }

    pub fn leaves(&mut self, xs: &[f64]) -> Vec<Var> {
        xs.iter().map(|&x| self.leaf(x)).collect()
    }

    pub fn constant(&mut self, x: f64) -> Var {
        self.push(x, OpTag::Constant, &[])
    }

    /// Overwrite the value of a leaf. Nodes derived from it are not recomputed,
    /// so this is meant to be used right after truncating to a checkpoint that
    /// precedes every derived node.
    pub fn set_leaf(&mut self, v: Var, x: f64) -> Result<(), AutodiffError> {
        let i = self.check(v)?;
        if self.nodes[i].op != OpTag::Leaf {
            return Err(AutodiffError::NotALeaf { index: i });
        }
        self.nodes[i].data = x;
        Ok(())
    }

    pub fn value(&self, v: Var) -> f64 {
        self.nodes[v.index].data
    }

    /// Accumulated gradient stored on the node.
    pub fn grad(&self, v: Var) -> f64 {
        self.nodes[v.index].grad
    }

    pub fn op(&self, v: Var) -> OpTag {
        self.nodes[v.index].op
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            tape: self.id,
            nodes: self.nodes.len(),
            parents: self.parents.len(),
        }
    }

    pub fn truncate(&mut self, cp: Checkpoint) {
        assert_eq!(cp.tape, self.id, "checkpoint belongs to another tape");
        self.nodes.truncate(cp.nodes);
        self.parents.truncate(cp.parents);
    }

    pub fn reset_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad = 0.0;
        }
    }

    /// Record one scalar operation.
    pub fn forward_op(&mut self, op: ScalarOp, inputs: &[Var]) -> Result<Var, AutodiffError> {
        if inputs.len() != op.arity() {
            return Err(AutodiffError::Arity {
                op: op.name(),
                expected: op.arity(),
                got: inputs.len(),
            });
        }
        for &v in inputs {
            self.check(v)?;
        }
        Ok(match op {
            ScalarOp::Add => self.add(inputs[0], inputs[1]),
            ScalarOp::Sub => self.sub(inputs[0], inputs[1]),
            ScalarOp::Mul => self.mul(inputs[0], inputs[1]),
            ScalarOp::Tanh => self.tanh(inputs[0]),
            ScalarOp::Logistic => self.logistic(inputs[0]),
            ScalarOp::Relu => self.relu(inputs[0]),
            ScalarOp::Identity => self.identity(inputs[0]),
        })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let d = self.value(a) + self.value(b);
        self.push(d, OpTag::Add, &[(a.index, 1.0), (b.index, 1.0)])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let d = self.value(a) - self.value(b);
        self.push(d, OpTag::Sub, &[(a.index, 1.0), (b.index, -1.0)])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        self.push(x * y, OpTag::Mul, &[(a.index, y), (b.index, x)])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let y = self.value(a).tanh();
        self.push(y, OpTag::Tanh, &[(a.index, 1.0 - y * y)])
    }

    pub fn logistic(&mut self, a: Var) -> Var {
        let y = logistic(self.value(a));
        self.push(y, OpTag::Logistic, &[(a.index, y * (1.0 - y))])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let (y, d) = if x > 0.0 { (x, 1.0) } else { (0.0, 0.0) };
        self.push(y, OpTag::Relu, &[(a.index, d)])
    }

    pub fn identity(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.push(x, OpTag::Identity, &[(a.index, 1.0)])
    }

    /// `log(x / (1 - x))` with the argument clamped to `[eps, 1 - eps]`.
    /// Returns the node and whether clamping was applied; a clamped node has a
    /// zero local derivative.
    pub fn logit_clamped(&mut self, a: Var, eps: f64) -> (Var, bool) {
        let x = self.value(a);
        let c = x.clamp(eps, 1.0 - eps);
        let clamped = c != x || x.is_nan();
        let y = (c / (1.0 - c)).ln();
        let d = if clamped { 0.0 } else { 1.0 / (c * (1.0 - c)) };
        (self.push(y, OpTag::Logit, &[(a.index, d)]), clamped)
    }

    /// `bias + Σ w_j x_j` as a single node.
    pub fn dot_bias(&mut self, w: &[Var], x: &[Var], bias: Option<Var>) -> Result<Var, AutodiffError> {
        if w.len() != x.len() {
            return Err(AutodiffError::DimensionMismatch {
                op: "dot",
                expected: format!("{} inputs", w.len()),
                got: format!("{} inputs", x.len()),
            });
        }
        let mut acc = 0.0;
        let mut parents = Vec::with_capacity(2 * w.len() + 1);
        if let Some(b) = bias {
            acc += self.value(b);
            parents.push((b.index, 1.0));
        }
        for (&wj, &xj) in w.iter().zip(x) {
            let (wv, xv) = (self.value(wj), self.value(xj));
            acc += wv * xv;
            parents.push((wj.index, xv));
            parents.push((xj.index, wv));
        }
        Ok(self.push(acc, OpTag::Dot, &parents))
    }

    /// Row-major `rows × cols` matrix times a `cols` vector.
    pub fn matvec(&mut self, w: &[Var], rows: usize, cols: usize, x: &[Var]) -> Result<Vec<Var>, AutodiffError> {
        if w.len() != rows * cols || x.len() != cols {
            return Err(AutodiffError::DimensionMismatch {
                op: "matvec",
                expected: format!("{rows}x{cols} matrix with {cols}-vector"),
                got: format!("{} weights with {}-vector", w.len(), x.len()),
            });
        }
        (0..rows)
            .map(|r| self.dot_bias(&w[r * cols..(r + 1) * cols], x, None))
            .collect()
    }

    /// Reverse sweep from `root`. Gradients are added to the per-node `grad`
    /// fields, so repeated calls accumulate until [`Tape::reset_grads`].
    pub fn backward(&mut self, root: Var) -> Result<Gradients, AutodiffError> {
        let r = self.check(root)?;
        let mut adj = vec![0.0; r + 1];
        adj[r] = 1.0;
        for i in (0..=r).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let n = &self.nodes[i];
            for &(p, d) in &self.parents[n.parents_start..n.parents_start + n.parents_len] {
                adj[p] += a * d;
            }
        }
        for (n, a) in self.nodes.iter_mut().zip(&adj) {
            n.grad += a;
        }
        Ok(Gradients {
            tape: self.id,
            grads: self.nodes.iter().map(|n| n.grad).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_examples() {
        let mut t = Tape::new();
        let a = t.leaf(2.0);
        let b = t.leaf(3.0);
        let s = t.forward_op(ScalarOp::Add, &[a, b]).unwrap();
        assert_eq!(t.value(s), 5.0);
        let z = t.leaf(0.0);
        let th = t.forward_op(ScalarOp::Tanh, &[z]).unwrap();
        assert_eq!(t.value(th), 0.0);
        let lg = t.forward_op(ScalarOp::Logistic, &[z]).unwrap();
        assert_eq!(t.value(lg), 0.5);
    }

    #[test]
    fn square_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(3.0);
        let y = t.mul(x, x);
        let g = t.backward(y).unwrap();
        assert_eq!(g.get(x), 6.0);
    }

    #[test]
    fn tanh_gradient_at_origin() {
        let mut t = Tape::new();
        let x = t.leaf(0.0);
        let y = t.tanh(x);
        assert_eq!(t.backward(y).unwrap().get(x), 1.0);
    }

    #[test]
    fn grads_accumulate_until_reset() {
        let mut t = Tape::new();
        let x = t.leaf(3.0);
        let y = t.mul(x, x);
        t.backward(y).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.get(x), 12.0);
        t.reset_grads();
        assert_eq!(t.grad(x), 0.0);
        assert_eq!(t.backward(y).unwrap().get(x), 6.0);
    }

    #[test]
    fn arity_and_dimension_errors() {
        let mut t = Tape::new();
        let a = t.leaf(1.0);
        assert!(matches!(
            t.forward_op(ScalarOp::Add, &[a]),
            Err(AutodiffError::Arity { op: "add", .. })
        ));
        let w = t.leaves(&[1.0, 2.0, 3.0]);
        let err = t.matvec(&w, 2, 2, &[a, a]).unwrap_err();
        match err {
            AutodiffError::DimensionMismatch { op, .. } => assert_eq!(op, "matvec"),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn foreign_root_is_rejected() {
        let mut t1 = Tape::new();
        let mut t2 = Tape::new();
        let x = t2.leaf(1.0);
        t1.leaf(1.0);
        assert!(matches!(t1.backward(x), Err(AutodiffError::NotOnTape { .. })));
    }

    #[test]
    fn truncated_root_is_rejected() {
        let mut t = Tape::new();
        let x = t.leaf(1.0);
        let cp = t.checkpoint();
        let y = t.tanh(x);
        t.truncate(cp);
        assert!(t.backward(y).is_err());
        assert!(t.set_leaf(x, 2.0).is_ok());
        let y = t.tanh(x);
        assert_eq!(t.value(y), 2.0f64.tanh());
    }

    #[test]
    fn set_leaf_refuses_derived_nodes() {
        let mut t = Tape::new();
        let x = t.leaf(1.0);
        let y = t.tanh(x);
        assert!(matches!(t.set_leaf(y, 0.0), Err(AutodiffError::NotALeaf { .. })));
    }

    #[test]
    fn logit_clamps_and_inverts_logistic() {
        let mut t = Tape::new();
        let half = t.leaf(0.5);
        let (y, clamped) = t.logit_clamped(half, 1e-12);
        assert_eq!(t.value(y), 0.0);
        assert!(!clamped);
        let one = t.leaf(1.0);
        let (y, clamped) = t.logit_clamped(one, 1e-12);
        assert!(clamped);
        assert!(t.value(y).is_finite());
    }
}
