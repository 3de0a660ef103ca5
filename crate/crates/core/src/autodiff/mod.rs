//! Tape-based reverse-mode automatic differentiation over dense tensors.
//!
//! Values are recorded on a [`Tape`] as primitives are applied; a reverse
//! sweep from a scalar produces gradients for every leaf created with
//! `requires_grad`. There is no broadcasting beyond scalar-vs-tensor for the
//! elementwise binary ops; batches are stacked into matrices instead.
//!
//! ```
//! use rpg_core::autodiff::{Tape, Tensor};
//!
//! let mut tape = Tape::<f64>::new();
//! let x = tape.var(Tensor::column(vec![1.0, 2.0, 3.0]).with_grad());
//! let sq = tape.square(x).unwrap();
//! let loss = tape.sum(sq).unwrap();
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(x).data(), &[2.0, 4.0, 6.0]);
//! ```

mod ops;
mod tape;
mod tensor;

use thiserror::Error;

pub use ops::{OpKind, LEAKY_SLOPE};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("unknown op kind `{0}`")]
    UnknownOp(String),
    #[error("{op}: expected {expected} inputs, got {found}")]
    Arity {
        op: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{op}: {detail}")]
    InvalidAttribute { op: &'static str, detail: String },
    #[error("invalid tensor shape {shape:?}")]
    InvalidShape { shape: Vec<usize> },
    #[error("shape {shape:?} needs {} elements, got {len}", shape.iter().product::<usize>())]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("loss must have a single element, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Tensor<f64> {
        Tensor::from_rows(rows)
    }

    #[test]
    fn matmul_hand_case() {
        let mut t = Tape::new();
        let a = t.constant(m(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let b = t.constant(m(&[&[1.0], &[1.0]]));
        let c = t.matmul(a, b).unwrap();
        assert_eq!(t.value(c).shape(), &[2, 1]);
        assert_eq!(t.value(c).data(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::<f64>::zeros(&[2, 3]));
        let b = t.constant(Tensor::<f64>::zeros(&[2, 3]));
        let err = t.matmul(a, b).unwrap_err();
        assert_eq!(
            err,
            AutodiffError::ShapeMismatch {
                op: "matmul",
                lhs: vec![2, 3],
                rhs: vec![2, 3]
            }
        );
        assert!(err.to_string().contains("matmul"));
    }

    #[test]
    fn add_rejects_non_scalar_broadcast() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::<f64>::zeros(&[2, 3]));
        let b = t.constant(Tensor::<f64>::zeros(&[2, 1]));
        assert!(matches!(t.add(a, b), Err(AutodiffError::ShapeMismatch { op: "add", .. })));
        let s = t.constant(Tensor::scalar(2.0));
        let c = t.add(a, s).unwrap();
        assert_eq!(t.value(c).data(), &[2.0; 6]);
    }

    #[test]
    fn tanh_range() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::<f64>::column(vec![0.0, -3.0, 5.0, -0.25, 0.5]));
        let y = t.tanh(x).unwrap();
        assert_eq!(t.value(y).data()[0], 0.0);
        assert!(t.value(y).data().iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn max_rows_hand_case() {
        let mut t = Tape::new();
        let x = t.constant(m(&[&[1.0, 5.0], &[4.0, 2.0]]));
        let y = t.max_rows(x).unwrap();
        assert_eq!(t.value(y).data(), &[5.0, 4.0]);
    }

    #[test]
    fn max_rows_ties_route_to_lowest_index() {
        let mut t = Tape::new();
        let x = t.var(m(&[&[3.0, 3.0, 1.0]]).with_grad());
        let y = t.max_rows(x).unwrap();
        let l = t.sum(y).unwrap();
        let g = t.backward(l).unwrap();
        assert_eq!(g.get(x).data(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn sum_of_squares_gradient() {
        let mut t = Tape::new();
        let x = t.var(Tensor::column(vec![1.0, 2.0, 3.0]).with_grad());
        let sq = t.square(x).unwrap();
        let l = t.sum(sq).unwrap();
        assert_eq!(t.backward(l).unwrap().get(x).data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn tanh_at_zero_weight_passes_input_through() {
        let mut t = Tape::new();
        let w = t.var(m(&[&[0.0, 0.0, 0.0]]).with_grad());
        let x = t.constant(Tensor::column(vec![0.5, -1.0, 2.0]));
        let wx = t.matmul(w, x).unwrap();
        let y = t.tanh(wx).unwrap();
        let l = t.sum(y).unwrap();
        let g = t.backward(l).unwrap().get(w);
        assert_eq!(g.data(), &[0.5, -1.0, 2.0]);
    }

    #[test]
    fn unreached_leaf_gets_zero_gradient() {
        let mut t = Tape::new();
        let x = t.var(Tensor::column(vec![1.0, 2.0]).with_grad());
        let unused = t.var(Tensor::<f64>::ones(&[2, 2]).with_grad());
        let l = t.sum(x).unwrap();
        let g = t.backward(l).unwrap();
        assert_eq!(g.get(unused), Tensor::zeros(&[2, 2]));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut t = Tape::new();
        let x = t.var(Tensor::column(vec![1.0, 2.0]).with_grad());
        assert!(matches!(t.backward(x), Err(AutodiffError::NonScalarLoss { .. })));
    }

    #[test]
    fn unknown_op_kind() {
        assert_eq!("tanh".parse::<OpKind>().unwrap(), OpKind::Tanh);
        assert!(matches!("softmax".parse::<OpKind>(), Err(AutodiffError::UnknownOp(_))));
    }

    #[test]
    fn constants_are_not_differentiated() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::column(vec![1.0, 2.0]));
        let b = t.tanh(a).unwrap();
        assert!(!t.requires_grad(b));
    }

    #[test]
    fn gather_duplicates_accumulate_in_backward() {
        let mut t = Tape::new();
        let x = t.var(m(&[&[1.0, 2.0]]).with_grad());
        let y = t.gather_cols(x, vec![0, 0, 1, 0]).unwrap();
        assert_eq!(t.value(y).data(), &[1.0, 1.0, 2.0, 1.0]);
        let l = t.sum(y).unwrap();
        assert_eq!(t.backward(l).unwrap().get(x).data(), &[3.0, 1.0]);
    }

    #[test]
    fn concat_and_slice_are_inverse() {
        let mut t = Tape::new();
        let a = t.constant(m(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let b = t.constant(m(&[&[5.0], &[6.0]]));
        let c = t.concat(&[a, b], 1).unwrap();
        assert_eq!(t.value(c).data(), &[1.0, 2.0, 5.0, 3.0, 4.0, 6.0]);
        let s = t.slice(c, 1, 2, 3).unwrap();
        assert_eq!(t.value(s), t.value(b));
        let d = t.concat(&[a, a], 0).unwrap();
        assert_eq!(t.value(d).shape(), &[4, 2]);
    }

    #[test]
    fn replay_is_bit_identical() {
        let mut t = Tape::new();
        let x = t.var(Tensor::column(vec![0.3_f32, -1.7, 2.2]).with_grad());
        let y = t.sigmoid(x).unwrap();
        let z = t.mul(y, x).unwrap();
        let n = t.norm(z).unwrap();
        let e = t.exp(n).unwrap();
        let replayed = t.replay().unwrap();
        assert_eq!(replayed.len(), t.len());
        for v in [x, y, z, n, e] {
            assert_eq!(replayed[v.index()].data(), t.value(v).data());
        }
    }
}
