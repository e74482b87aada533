//! Dense `f64` tensors with a dynamically recorded reverse-mode graph.
//!
//! Every operation that has at least one gradient-tracking operand records a
//! node holding its operands and a backward rule. The graph lives exactly as
//! long as the tensors that reference it; dropping the loss frees it.
//!
//! Forward results are checked for NaN/Inf. A non-finite value produced from
//! finite inputs is reported as [`Error::Numerics`] rather than propagated.

mod conv;
mod norm;
mod ops;
mod spatial;

use std::cell::{Cell, Ref, RefCell};
use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;

use crate::error::{shape_err, Error, Result};

pub use conv::Conv2dSpec;

/// Gradient of the output w.r.t. each operand (`None` when an operand needs no gradient).
pub(crate) type Grads = Vec<Option<Vec<f64>>>;

/// Backward rule: receives the forward output and the upstream gradient.
pub(crate) type BackwardFn = Box<dyn Fn(&[f64], &[f64]) -> Grads>;

struct Node {
    op: &'static str,
    parents: Vec<Tensor>,
    backward: BackwardFn,
}

struct Inner {
    id: u64,
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    grad: RefCell<Option<Vec<f64>>>,
    node: Option<Node>,
}

/// Reference-counted handle to an immutable array plus its graph node.
///
/// Cloning is cheap and shares storage and gradient slot.
#[derive(Clone)]
pub struct Tensor(Rc<Inner>);

thread_local! {
    static NEXT_ID: Cell<u64> = const { Cell::new(0) };
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

fn next_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

/// Whether new operations are currently recorded.
pub fn is_grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

/// Run `f` without recording any graph nodes.
pub fn no_grad<T>(f: impl FnOnce() -> T) -> T {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            GRAD_ENABLED.with(|g| g.set(self.0));
        }
    }
    let _restore = Restore(GRAD_ENABLED.with(|g| g.replace(false)));
    f()
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    /// Constant tensor (no gradient tracking).
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        if numel(shape) != data.len() {
            return Err(shape_err!(
                "shape {:?} needs {} elements, got {}",
                shape,
                numel(shape),
                data.len()
            ));
        }
        Ok(Tensor::leaf(shape.to_vec(), data, false))
    }

    /// Gradient-tracking leaf.
    pub fn parameter(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        let t = Tensor::from_vec(shape, data)?;
        Ok(Tensor::leaf(t.shape().to_vec(), t.into_vec(), true))
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor::leaf(shape.to_vec(), vec![0.0; numel(shape)], false)
    }

    pub fn full(shape: &[usize], value: f64) -> Tensor {
        Tensor::leaf(shape.to_vec(), vec![value; numel(shape)], false)
    }

    pub fn scalar(value: f64) -> Tensor {
        Tensor::leaf(vec![1], vec![value], false)
    }

    fn leaf(shape: Vec<usize>, data: Vec<f64>, requires_grad: bool) -> Tensor {
        Tensor(Rc::new(Inner {
            id: next_id(),
            shape,
            data,
            requires_grad,
            grad: RefCell::new(None),
            node: None,
        }))
    }

    /// Build the result of an operation, recording a node when any operand
    /// tracks gradients and recording is enabled.
    pub(crate) fn from_op(
        op: &'static str,
        shape: Vec<usize>,
        data: Vec<f64>,
        parents: Vec<Tensor>,
        backward: BackwardFn,
    ) -> Result<Tensor> {
        debug_assert_eq!(numel(&shape), data.len(), "{op}: bad output size");
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerics(format!(
                "{op} produced non-finite value {} at flat index {pos}",
                data[pos]
            )));
        }
        let track = is_grad_enabled() && parents.iter().any(Tensor::requires_grad);
        let node = track.then(|| Node {
            op,
            parents,
            backward,
        });
        Ok(Tensor(Rc::new(Inner {
            id: next_id(),
            shape,
            data,
            requires_grad: track,
            grad: RefCell::new(None),
            node,
        })))
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn dims(&self) -> usize {
        self.0.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.0.data
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.data.clone()
    }

    /// Take the data, copying only if the storage is shared.
    pub fn into_vec(self) -> Vec<f64> {
        match Rc::try_unwrap(self.0) {
            Ok(inner) => inner.data,
            Err(rc) => rc.data.clone(),
        }
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.node.is_none()
    }

    /// Name of the operation that produced this tensor, if recorded.
    pub fn op_name(&self) -> Option<&'static str> {
        self.0.node.as_ref().map(|n| n.op)
    }

    /// Accumulated gradient (leaves only).
    pub fn grad(&self) -> Option<Ref<'_, Vec<f64>>> {
        let g = self.0.grad.borrow();
        if g.is_some() {
            Some(Ref::map(g, |g| g.as_ref().unwrap()))
        } else {
            None
        }
    }

    pub fn zero_grad(&self) {
        self.0.grad.borrow_mut().take();
    }

    /// Same values, cut from the graph.
    pub fn detach(&self) -> Tensor {
        Tensor::leaf(self.shape().to_vec(), self.to_vec(), false)
    }

    /// Single element of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.numel() != 1 {
            return Err(shape_err!("item() on tensor of shape {:?}", self.shape()));
        }
        Ok(self.0.data[0])
    }

    /// Row-major element at a multi-index.
    pub fn at(&self, index: &[usize]) -> f64 {
        assert_eq!(index.len(), self.dims(), "index rank mismatch");
        let mut flat = 0;
        for (i, (&ix, &ext)) in index.iter().zip(self.shape()).enumerate() {
            assert!(
                ix < ext,
                "index {ix} out of range for axis {i} (extent {ext})"
            );
            flat = flat * ext + ix;
        }
        self.0.data[flat]
    }

    /// Reverse-mode sweep from a scalar. Leaf gradients accumulate across calls.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(shape_err!(
                "backward() needs a scalar loss, got shape {:?}",
                self.shape()
            ));
        }
        if !self.requires_grad() {
            return Ok(());
        }
        let order = self.topological_order();
        let mut pending: HashMap<u64, Vec<f64>> = HashMap::new();
        pending.insert(self.id(), vec![1.0]);
        for t in order.iter().rev() {
            let Some(g) = pending.remove(&t.id()) else {
                continue;
            };
            match &t.0.node {
                None => {
                    let mut slot = t.0.grad.borrow_mut();
                    match slot.as_mut() {
                        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                        None => *slot = Some(g),
                    }
                }
                Some(node) => {
                    let grads = (node.backward)(t.data(), &g);
                    debug_assert_eq!(grads.len(), node.parents.len(), "{}", node.op);
                    for (parent, pg) in node.parents.iter().zip(grads) {
                        let Some(pg) = pg else { continue };
                        if !parent.requires_grad() {
                            continue;
                        }
                        debug_assert_eq!(pg.len(), parent.numel(), "{}", node.op);
                        match pending.get_mut(&parent.id()) {
                            Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, b)| *a += b),
                            None => {
                                pending.insert(parent.id(), pg);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Post-order DFS over gradient-tracking nodes; each node appears once.
    fn topological_order(&self) -> Vec<Tensor> {
        let mut order = Vec::new();
        let mut visited = std::collections::HashSet::new();
        let mut stack: Vec<(Tensor, bool)> = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if !visited.insert(t.id()) {
                continue;
            }
            stack.push((t.clone(), true));
            if let Some(node) = &t.0.node {
                for p in &node.parents {
                    if p.requires_grad() && !visited.contains(&p.id()) {
                        stack.push((p.clone(), false));
                    }
                }
            }
        }
        order
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preview: Vec<f64> = self.data().iter().take(8).copied().collect();
        f.debug_struct("Tensor")
            .field("shape", &self.shape())
            .field("requires_grad", &self.requires_grad())
            .field("op", &self.op_name())
            .field("data", &preview)
            .finish()
    }
}
