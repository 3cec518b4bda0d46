//! Dense tensors with reverse-mode automatic differentiation.
//!
//! Tensors are immutable during a forward pass; each operation records its
//! inputs and a backward closure on the output node. `backward()` on a
//! scalar loss walks the graph in reverse topological order and accumulates
//! gradients into every `requires_grad` leaf it reaches. Gradient
//! accumulation is additive; optimizer steps clear it explicitly.

mod adam;
mod grad_check;
mod kernels;
mod ops;

pub use adam::AdamState;
pub use grad_check::{check_gradients, op_suite, GradCheckReport};

use crate::scalar::Scalar;
use std::cell::RefCell;
use std::collections::HashSet;
use std::rc::Rc;

pub(crate) struct Node<F: Scalar> {
    shape: Vec<usize>,
    data: Vec<F>,
    grad: Option<Vec<F>>,
    requires_grad: bool,
    parents: Vec<Tensor<F>>,
    backward: Option<BackwardFn<F>>,
}

/// Context handed to a backward closure: the node's accumulated gradient,
/// its forward output, and its input tensors.
pub(crate) struct BackCtx<'a, F: Scalar> {
    pub grad: &'a [F],
    pub out: &'a [F],
    pub parents: &'a [Tensor<F>],
}

type BackwardFn<F> = Box<dyn Fn(&BackCtx<'_, F>)>;

/// Dense row-major tensor, cheaply cloneable (shared node).
pub struct Tensor<F: Scalar> {
    node: Rc<RefCell<Node<F>>>,
}

impl<F: Scalar> Clone for Tensor<F> {
    fn clone(&self) -> Self {
        Tensor { node: Rc::clone(&self.node) }
    }
}

impl<F: Scalar> Tensor<F> {
    /// Constant (non-differentiable) tensor.
    pub fn new(data: Vec<F>, shape: &[usize]) -> Self {
        Self::with_flags(data, shape, false)
    }

    /// Leaf tensor that accumulates gradients, e.g. a model parameter.
    pub fn param(data: Vec<F>, shape: &[usize]) -> Self {
        Self::with_flags(data, shape, true)
    }

    fn with_flags(data: Vec<F>, shape: &[usize], requires_grad: bool) -> Self {
        let numel: usize = shape.iter().product();
        assert_eq!(
            data.len(),
            numel,
            "tensor: data length {} does not match shape {:?}",
            data.len(),
            shape
        );
        Tensor {
            node: Rc::new(RefCell::new(Node {
                shape: shape.to_vec(),
                data,
                grad: None,
                requires_grad,
                parents: Vec::new(),
                backward: None,
            })),
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel: usize = shape.iter().product();
        Self::new(vec![F::zero(); numel], shape)
    }

    pub fn scalar(v: F) -> Self {
        Self::new(vec![v], &[])
    }

    pub(crate) fn from_op(
        data: Vec<F>,
        shape: &[usize],
        parents: Vec<Tensor<F>>,
        backward: BackwardFn<F>,
    ) -> Self {
        let requires_grad = parents.iter().any(|p| p.requires_grad());
        let numel: usize = shape.iter().product();
        debug_assert_eq!(data.len(), numel);
        if requires_grad {
            Tensor {
                node: Rc::new(RefCell::new(Node {
                    shape: shape.to_vec(),
                    data,
                    grad: None,
                    requires_grad: true,
                    parents,
                    backward: Some(backward),
                })),
            }
        } else {
            // constant subgraph: drop the recording so backward never walks it
            Self::with_flags(data, shape, false)
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        self.node.borrow().shape.clone()
    }

    pub fn numel(&self) -> usize {
        self.node.borrow().data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.node.borrow().requires_grad
    }

    pub fn to_vec(&self) -> Vec<F> {
        self.node.borrow().data.clone()
    }

    /// Value of a scalar (rank-0 or single-element) tensor.
    pub fn item(&self) -> F {
        let n = self.node.borrow();
        assert_eq!(n.data.len(), 1, "item: tensor has {} elements", n.data.len());
        n.data[0]
    }

    /// Runs `f` over the raw data without cloning.
    pub fn with_data<R>(&self, f: impl FnOnce(&[F]) -> R) -> R {
        f(&self.node.borrow().data)
    }

    /// Gradient accumulated so far, if any.
    pub fn grad(&self) -> Option<Vec<F>> {
        self.node.borrow().grad.clone()
    }

    /// Removes and returns the accumulated gradient.
    pub fn take_grad(&self) -> Option<Vec<F>> {
        self.node.borrow_mut().grad.take()
    }

    pub fn zero_grad(&self) {
        self.node.borrow_mut().grad = None;
    }

    /// In-place data mutation; used by the optimizer and finite differences.
    pub fn update_data(&self, f: impl FnOnce(&mut [F])) {
        f(&mut self.node.borrow_mut().data);
    }

    /// Adds `delta` to one element; finite-difference probing.
    pub fn nudge(&self, idx: usize, delta: F) {
        let mut n = self.node.borrow_mut();
        n.data[idx] = n.data[idx] + delta;
    }

    /// Copy of this tensor detached from the graph.
    pub fn detach(&self) -> Tensor<F> {
        let n = self.node.borrow();
        Tensor::new(n.data.clone(), &n.shape)
    }

    pub(crate) fn accumulate_grad(&self, contrib: &[F]) {
        let mut n = self.node.borrow_mut();
        debug_assert_eq!(contrib.len(), n.data.len());
        match &mut n.grad {
            Some(g) => {
                for (gi, ci) in g.iter_mut().zip(contrib) {
                    *gi = *gi + *ci;
                }
            }
            None => n.grad = Some(contrib.to_vec()),
        }
    }

    /// Scatter-adds `contrib` rows into grad rows `ids` without
    /// materializing a dense table-sized contribution.
    pub(crate) fn accumulate_grad_rows(&self, ids: &[usize], cols: usize, contrib: &[F]) {
        let mut n = self.node.borrow_mut();
        let len = n.data.len();
        let g = n.grad.get_or_insert_with(|| vec![F::zero(); len]);
        for (i, &id) in ids.iter().enumerate() {
            let dst = &mut g[id * cols..(id + 1) * cols];
            let src = &contrib[i * cols..(i + 1) * cols];
            for (d, s) in dst.iter_mut().zip(src) {
                *d = *d + *s;
            }
        }
    }

    pub(crate) fn accumulate_grad_at(&self, idxs: &[usize], vals: &[F]) {
        let mut n = self.node.borrow_mut();
        let len = n.data.len();
        let g = n.grad.get_or_insert_with(|| vec![F::zero(); len]);
        for (&i, &v) in idxs.iter().zip(vals) {
            g[i] = g[i] + v;
        }
    }

    fn ptr_id(&self) -> usize {
        Rc::as_ptr(&self.node) as *const () as usize
    }

    /// Reverse-mode gradient accumulation from a scalar loss.
    ///
    /// Every `requires_grad` tensor reachable from `self` ends up with a
    /// fully populated gradient; intermediate gradients are freed as the
    /// walk passes them.
    pub fn backward(&self) {
        {
            let n = self.node.borrow();
            assert!(
                n.shape.is_empty() || n.data.len() == 1,
                "backward: loss must be scalar, got shape {:?}",
                n.shape
            );
        }
        let order = self.topo_order();
        self.accumulate_grad(&[F::one()]);
        for t in order.iter().rev() {
            let is_leaf = {
                let node = t.node.borrow();
                match (&node.backward, &node.grad) {
                    (Some(bw), Some(grad)) => {
                        let ctx = BackCtx { grad, out: &node.data, parents: &node.parents };
                        bw(&ctx);
                        false
                    }
                    (Some(_), None) => false,
                    (None, _) => true,
                }
            };
            if !is_leaf {
                t.node.borrow_mut().grad = None;
            }
        }
    }

    /// Post-order over the `requires_grad` subgraph; reversed, it is a
    /// valid topological order (consumers before producers).
    fn topo_order(&self) -> Vec<Tensor<F>> {
        enum Visit<F: Scalar> {
            Enter(Tensor<F>),
            Exit(Tensor<F>),
        }
        let mut order = Vec::new();
        let mut visited: HashSet<usize> = HashSet::new();
        let mut stack = vec![Visit::Enter(self.clone())];
        while let Some(v) = stack.pop() {
            match v {
                Visit::Enter(t) => {
                    if !visited.insert(t.ptr_id()) {
                        continue;
                    }
                    stack.push(Visit::Exit(t.clone()));
                    for p in t.node.borrow().parents.iter() {
                        if p.requires_grad() && !visited.contains(&p.ptr_id()) {
                            stack.push(Visit::Enter(p.clone()));
                        }
                    }
                }
                Visit::Exit(t) => order.push(t),
            }
        }
        order
    }
}

impl<F: Scalar> std::fmt::Debug for Tensor<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let n = self.node.borrow();
        f.debug_struct("Tensor")
            .field("shape", &n.shape)
            .field("requires_grad", &n.requires_grad)
            .field("data", &n.data)
            .finish()
    }
}
