//! Dense `f64` tensors with reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is a cheap handle (`Arc`) onto a node in a computation
//! graph. Operations on tensors that require gradients record a backward
//! closure and their parents; [`Tensor::backward`] walks the graph in reverse
//! topological order and accumulates gradients into every reachable node.
//!
//! Leaf gradients accumulate across `backward` calls until cleared with
//! [`Tensor::zero_grad`] (or [`optim::zero_grads`]). Interior nodes get the
//! gradient of the most recent pass.
//!
//! Tensors built without any gradient-tracking parent carry no graph and can
//! be shared freely across threads.

mod error;
pub mod loss;
pub mod nn;
mod ops;
pub mod optim;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock, RwLockReadGuard};

pub use error::TensorError;
pub use loss::{bce_with_logits, cross_entropy, Reduction};
pub use nn::{
    attention, conv2d, embedding, layer_norm, maxpool2d, softmax, Activation, AttentionMask,
    LAYER_NORM_EPS,
};
pub use optim::{zero_grads, AdamState};
pub(crate) use ops::{matmul_bt_raw, sigmoid_scalar};

pub type Result<T> = std::result::Result<T, TensorError>;

/// Backward closure: receives the gradient of the output and the output
/// values, returns one optional gradient per parent (in parent order).
pub(crate) type BackwardFn = Box<dyn Fn(&[f64], &[f64]) -> Vec<Option<Vec<f64>>> + Send + Sync>;

static NEXT_ID: AtomicUsize = AtomicUsize::new(0);

struct GradFn {
    op: &'static str,
    parents: Vec<Tensor>,
    backward: BackwardFn,
}

struct Node {
    id: usize,
    shape: Vec<usize>,
    data: RwLock<Vec<f64>>,
    grad: Mutex<Option<Vec<f64>>>,
    requires_grad: bool,
    grad_fn: Option<GradFn>,
}

#[derive(Clone)]
pub struct Tensor(Arc<Node>);

fn check_shape(shape: &[usize], len: usize) -> Result<()> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(TensorError::InvalidShape(shape.to_vec()));
    }
    let expected: usize = shape.iter().product();
    if expected != len {
        return Err(TensorError::DataLength {
            shape: shape.to_vec(),
            len,
        });
    }
    Ok(())
}

impl Tensor {
    fn from_node(
        shape: Vec<usize>,
        data: Vec<f64>,
        requires_grad: bool,
        grad_fn: Option<GradFn>,
    ) -> Self {
        Tensor(Arc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            shape,
            data: RwLock::new(data),
            grad: Mutex::new(None),
            requires_grad,
            grad_fn,
        }))
    }

    /// Constant tensor (no gradient tracking).
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        check_shape(shape, data.len())?;
        Ok(Self::from_node(shape.to_vec(), data, false, None))
    }

    /// Trainable leaf tensor.
    pub fn parameter(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        check_shape(shape, data.len())?;
        Ok(Self::from_node(shape.to_vec(), data, true, None))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self::new(shape, vec![0.0; n]).expect("zeros: invalid shape")
    }

    pub fn scalar(value: f64) -> Self {
        Self::from_node(vec![1], vec![value], false, None)
    }

    /// Row-major matrix from nested rows. Panics on ragged input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        let data = rows.iter().flatten().copied().collect();
        Self::new(&[rows.len(), cols], data)
    }

    /// Record the result of an operation. Gradient tracking is enabled only
    /// if some parent requires it; otherwise the backward closure is dropped.
    pub(crate) fn from_op(
        op: &'static str,
        shape: Vec<usize>,
        data: Vec<f64>,
        parents: Vec<Tensor>,
        backward: impl Fn(&[f64], &[f64]) -> Vec<Option<Vec<f64>>> + Send + Sync + 'static,
    ) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        let requires_grad = parents.iter().any(Tensor::requires_grad);
        let grad_fn = requires_grad.then(|| GradFn {
            op,
            parents,
            backward: Box::new(backward),
        });
        Self::from_node(shape, data, requires_grad, grad_fn)
    }

    pub fn id(&self) -> usize {
        self.0.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn numel(&self) -> usize {
        self.0.shape.iter().product()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.grad_fn.is_none()
    }

    /// Name of the operation that produced this tensor, if any.
    pub fn op_name(&self) -> Option<&'static str> {
        self.0.grad_fn.as_ref().map(|g| g.op)
    }

    pub fn data(&self) -> RwLockReadGuard<'_, Vec<f64>> {
        self.0.data.read().expect("tensor data lock poisoned")
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.data().clone()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape());
        self.data()[0]
    }

    /// Element at a multi-index (row-major).
    pub fn at(&self, index: &[usize]) -> f64 {
        assert_eq!(index.len(), self.shape().len());
        let mut flat = 0;
        for (i, (&ix, &dim)) in index.iter().zip(self.shape()).enumerate() {
            assert!(ix < dim, "index {ix} out of range for axis {i} of size {dim}");
            flat = flat * dim + ix;
        }
        self.data()[flat]
    }

    /// In-place update of the values. Used by optimizers and initializers;
    /// never call it on a tensor whose graph is still awaiting `backward`.
    pub fn update_data(&self, f: impl FnOnce(&mut [f64])) {
        let mut guard = self.0.data.write().expect("tensor data lock poisoned");
        f(&mut guard);
    }

    pub fn set_data(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.numel() {
            return Err(TensorError::DataLength {
                shape: self.shape().to_vec(),
                len: values.len(),
            });
        }
        self.update_data(|d| d.copy_from_slice(values));
        Ok(())
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.grad.lock().expect("grad lock poisoned").clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.lock().expect("grad lock poisoned") = None;
    }

    /// Same values, cut from the graph.
    pub fn detach(&self) -> Tensor {
        Self::from_node(self.shape().to_vec(), self.to_vec(), false, None)
    }

    /// Reverse-mode sweep from a single-element tensor.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(TensorError::NonScalarBackward(self.shape().to_vec()));
        }
        if !self.requires_grad() {
            return Ok(());
        }

        let order = self.topological_order();
        let mut pending: HashMap<usize, Vec<f64>> = HashMap::new();
        pending.insert(self.id(), vec![1.0]);

        for node in order.iter().rev() {
            let Some(g) = pending.remove(&node.id()) else {
                continue;
            };
            if let Some(grad_fn) = &node.0.grad_fn {
                let parent_grads = {
                    let out = node.data();
                    (grad_fn.backward)(&g, &out)
                };
                debug_assert_eq!(parent_grads.len(), grad_fn.parents.len());
                for (parent, pg) in grad_fn.parents.iter().zip(parent_grads) {
                    let Some(pg) = pg else { continue };
                    if !parent.requires_grad() {
                        continue;
                    }
                    debug_assert_eq!(pg.len(), parent.numel(), "grad size from {}", grad_fn.op);
                    match pending.get_mut(&parent.id()) {
                        Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, b)| *a += b),
                        None => {
                            pending.insert(parent.id(), pg);
                        }
                    }
                }
            }
            let mut slot = node.0.grad.lock().expect("grad lock poisoned");
            match (&mut *slot, node.is_leaf()) {
                (Some(acc), true) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                _ => *slot = Some(g),
            }
        }
        Ok(())
    }

    /// Post-order over gradient-tracking nodes reachable from `self`.
    fn topological_order(&self) -> Vec<Tensor> {
        let mut order = Vec::new();
        let mut visited = HashSet::new();
        let mut stack: Vec<(Tensor, bool)> = vec![(self.clone(), false)];
        while let Some((node, expanded)) = stack.pop() {
            if expanded {
                order.push(node);
                continue;
            }
            if !visited.insert(node.id()) {
                continue;
            }
            stack.push((node.clone(), true));
            if let Some(grad_fn) = &node.0.grad_fn {
                for p in &grad_fn.parents {
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
        let data = self.data();
        let preview: Vec<f64> = data.iter().take(8).copied().collect();
        f.debug_struct("Tensor")
            .field("shape", &self.shape())
            .field("requires_grad", &self.requires_grad())
            .field("op", &self.op_name())
            .field("data", &preview)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(Tensor::new(&[2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::new(&[0, 2], vec![]).is_err());
        assert!(Tensor::new(&[], vec![1.0]).is_err());
    }

    #[test]
    fn backward_of_sum_is_ones() {
        let x = Tensor::parameter(&[2, 3], vec![0.5, -1.0, 2.0, 3.0, 0.0, 7.0]).unwrap();
        x.sum().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0; 6]);
    }

    #[test]
    fn backward_of_square_sum() {
        let x = Tensor::parameter(&[3], vec![1.0, 2.0, 3.0]).unwrap();
        x.mul(&x).unwrap().sum().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, 4.0, 6.0]);
    }

    #[test]
    fn leaf_grads_accumulate_until_zeroed() {
        let x = Tensor::parameter(&[2], vec![1.0, 2.0]).unwrap();
        x.sum().backward().unwrap();
        x.sum().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, 2.0]);
        x.zero_grad();
        x.sum().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn non_scalar_backward_is_an_error() {
        let x = Tensor::parameter(&[2], vec![1.0, 2.0]).unwrap();
        let y = x.scale(2.0);
        assert!(matches!(y.backward(), Err(TensorError::NonScalarBackward(_))));
    }

    #[test]
    fn diamond_graph_accumulates_both_paths() {
        // loss = sum(x*2 + x*3) => grad = 5
        let x = Tensor::parameter(&[2], vec![1.0, -4.0]).unwrap();
        let a = x.scale(2.0);
        let b = x.scale(3.0);
        a.add(&b).unwrap().sum().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![5.0, 5.0]);
    }

    #[test]
    fn constants_carry_no_graph() {
        let a = Tensor::new(&[2], vec![1.0, 2.0]).unwrap();
        let b = a.scale(3.0);
        assert!(!b.requires_grad());
        assert!(b.is_leaf());
    }

    #[test]
    fn frozen_tensors_are_send_and_sync() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<Tensor>();
    }
}
