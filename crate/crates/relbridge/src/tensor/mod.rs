//! Dense f64 tensors with reverse-mode automatic differentiation.
//!
//! Tensors are rank 1..=3, row-major, and immutable once created; each op
//! records its inputs so [`backward`] can replay the chain rule from a scalar
//! loss. A differentiation graph belongs to one thread (tensors are `Rc`
//! backed and not `Send`); distinct graphs may live on distinct threads.

use std::cell::{Ref, RefCell};
use std::collections::hash_map::Entry;
use std::collections::{HashMap, HashSet};
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

pub mod adam;
pub mod ops;

pub use adam::{zero_grads, Adam, AdamHyper, Parameter};
pub use ops::{
    concat_last, concat_rows, embedding_lookup, softmax_cross_entropy, spmm, stack_mid,
};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

/// Dense f64 tensor participating in a differentiation graph.
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<Inner>,
}

struct Inner {
    id: u64,
    shape: Vec<usize>,
    values: RefCell<Vec<f64>>,
    requires_grad: bool,
    grad: RefCell<Option<Vec<f64>>>,
    node: Option<Node>,
}

pub(crate) struct Node {
    pub(crate) op: ops::Op,
    pub(crate) inputs: Vec<Tensor>,
}

fn checked_len(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.len() > 3 {
        return Err(Error::dim(
            "tensor",
            format!("rank must be 1..=3, got shape {shape:?}"),
        ));
    }
    if shape.contains(&0) {
        return Err(Error::dim(
            "tensor",
            format!("extents must be positive, got shape {shape:?}"),
        ));
    }
    Ok(shape.iter().product())
}

impl Tensor {
    /// Constant tensor from row-major values.
    pub fn new(shape: &[usize], values: Vec<f64>) -> Result<Tensor> {
        let n = checked_len(shape)?;
        if values.len() != n {
            return Err(Error::dim(
                "tensor",
                format!("shape {shape:?} implies {n} values, got {}", values.len()),
            ));
        }
        Ok(Self::raw(shape.to_vec(), values, false, None))
    }

    /// Leaf tensor that accumulates a gradient during [`backward`].
    pub fn new_trainable(shape: &[usize], values: Vec<f64>) -> Result<Tensor> {
        let t = Tensor::new(shape, values)?;
        Ok(Self::raw(t.shape().to_vec(), t.to_vec(), true, None))
    }

    pub fn zeros(shape: &[usize]) -> Result<Tensor> {
        let n = checked_len(shape)?;
        Ok(Self::raw(shape.to_vec(), vec![0.0; n], false, None))
    }

    pub fn scalar(v: f64) -> Tensor {
        Self::raw(vec![1], vec![v], false, None)
    }

    pub(crate) fn raw(
        shape: Vec<usize>,
        values: Vec<f64>,
        requires_grad: bool,
        node: Option<Node>,
    ) -> Tensor {
        Tensor {
            inner: Rc::new(Inner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                values: RefCell::new(values),
                requires_grad,
                grad: RefCell::new(None),
                node,
            }),
        }
    }

    /// Attach an op output to the graph; the result requires grad iff any
    /// input does, and only then keeps back-references to its inputs.
    pub(crate) fn from_op(
        shape: Vec<usize>,
        values: Vec<f64>,
        op: ops::Op,
        inputs: Vec<Tensor>,
    ) -> Tensor {
        let requires_grad = inputs.iter().any(|t| t.requires_grad());
        let node = requires_grad.then_some(Node { op, inputs });
        Self::raw(shape, values, requires_grad, node)
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn rank(&self) -> usize {
        self.inner.shape.len()
    }

    pub fn len(&self) -> usize {
        self.inner.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false // extents are validated positive
    }

    pub fn is_scalar(&self) -> bool {
        self.len() == 1
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub(crate) fn values(&self) -> Ref<'_, Vec<f64>> {
        self.inner.values.borrow()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.inner.values.borrow().clone()
    }

    /// Scalar value; panics on non-scalars (use only after shape checks).
    pub fn item(&self) -> f64 {
        assert!(self.is_scalar(), "item() on tensor of shape {:?}", self.shape());
        self.inner.values.borrow()[0]
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.grad.borrow().clone()
    }

    /// Reset the gradient buffer to zeros (present but empty of signal).
    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = Some(vec![0.0; self.len()]);
    }

    pub(crate) fn take_grad(&self) -> Option<Vec<f64>> {
        self.inner.grad.borrow_mut().take()
    }

    pub(crate) fn accumulate_grad(&self, delta: &[f64]) {
        let mut slot = self.inner.grad.borrow_mut();
        match slot.as_mut() {
            Some(g) => {
                for (a, b) in g.iter_mut().zip(delta) {
                    *a += b;
                }
            }
            None => *slot = Some(delta.to_vec()),
        }
    }

    /// Overwrite leaf values in place (optimizer updates between graphs).
    pub(crate) fn set_values(&self, values: Vec<f64>) {
        debug_assert_eq!(values.len(), self.len());
        *self.inner.values.borrow_mut() = values;
    }

    pub(crate) fn update_values(&self, f: impl FnOnce(&mut [f64])) {
        f(&mut self.inner.values.borrow_mut());
    }

    pub(crate) fn node(&self) -> Option<&Node> {
        self.inner.node.as_ref()
    }

    /// Extent of the last axis.
    pub fn last_dim(&self) -> usize {
        *self.inner.shape.last().expect("rank >= 1")
    }

    /// Product of all axes except the last.
    pub fn lead_len(&self) -> usize {
        self.len() / self.last_dim()
    }

    pub fn backward(&self) -> Result<()> {
        backward(self)
    }
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.inner.id)
            .field("shape", &self.inner.shape)
            .field("requires_grad", &self.inner.requires_grad)
            .field("values", &self.inner.values.borrow())
            .finish()
    }
}

/// Post-order over the graph rooted at `root` (inputs precede outputs).
fn topo_order(root: &Tensor) -> Vec<Tensor> {
    let mut order = Vec::new();
    let mut visited: HashSet<u64> = HashSet::new();
    let mut stack: Vec<(Tensor, bool)> = vec![(root.clone(), false)];
    while let Some((t, expanded)) = stack.pop() {
        if expanded {
            order.push(t);
            continue;
        }
        if !visited.insert(t.id()) {
            continue;
        }
        stack.push((t.clone(), true));
        if let Some(node) = t.node() {
            for input in &node.inputs {
                if !visited.contains(&input.id()) {
                    stack.push((input.clone(), false));
                }
            }
        }
    }
    order
}

/// Reverse-mode sweep from a scalar loss. Fills `grad` on every reachable
/// tensor with `requires_grad`, accumulating into any existing buffer, so a
/// parameter used twice collects both contributions.
pub fn backward(loss: &Tensor) -> Result<()> {
    if !loss.is_scalar() {
        return Err(Error::InvalidArgument(format!(
            "backward expects a scalar loss, got shape {:?}",
            loss.shape()
        )));
    }
    let order = topo_order(loss);
    let mut flows: HashMap<u64, Vec<f64>> = HashMap::new();
    flows.insert(loss.id(), vec![1.0]);
    for t in order.iter().rev() {
        let Some(flow) = flows.remove(&t.id()) else {
            continue;
        };
        if t.requires_grad() {
            t.accumulate_grad(&flow);
        }
        let Some(node) = t.node() else { continue };
        let input_grads = node.op.vjp(t, &node.inputs, &flow)?;
        for (input, grad) in node.inputs.iter().zip(input_grads) {
            let Some(grad) = grad else { continue };
            // Constants with no upstream graph cannot use a flow.
            if !input.requires_grad() && input.node().is_none() {
                continue;
            }
            match flows.entry(input.id()) {
                Entry::Occupied(mut e) => {
                    for (a, b) in e.get_mut().iter_mut().zip(&grad) {
                        *a += b;
                    }
                }
                Entry::Vacant(e) => {
                    e.insert(grad);
                }
            }
        }
    }
    Ok(())
}
