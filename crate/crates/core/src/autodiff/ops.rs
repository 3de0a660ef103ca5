use std::fmt;
use std::str::FromStr;

use super::{AutodiffError, Tensor};
use crate::Real;

/// Negative-side slope of the leaky ReLU used throughout the model.
pub const LEAKY_SLOPE: f64 = 0.2;

/// Primitive operations understood by the tape.
///
/// Shape rules:
///
/// | kind | inputs | output |
/// |------|--------|--------|
/// | `MatMul` | `[m,k]`, `[k,n]` | `[m,n]` |
/// | `Add`/`Sub`/`Mul`/`Div` | equal shapes, or one operand with a single element | the non-scalar shape |
/// | `Scale`, `Tanh`, `Sigmoid`, `LeakyRelu`, `Exp`, `Sqrt`, `Square`, `ClampMin` | any | same |
/// | `Sum`, `Mean`, `Norm` | any | `[1]` |
/// | `MaxRows` | `[r,c]` | `[r,1]` |
/// | `Concat` | rank-2 tensors agreeing off `axis` | stacked along `axis` |
/// | `Slice` | rank-2 | `end - start` along `axis` |
/// | `Reshape` | any with equal element count | the requested shape |
/// | `GatherCols` | `[r,c]` | `[r, indices.len()]`, every index `< c` |
#[derive(Clone, Debug, PartialEq)]
pub enum OpKind {
    MatMul,
    Add,
    Sub,
    Mul,
    Div,
    Scale(f64),
    Tanh,
    Sigmoid,
    LeakyRelu,
    Exp,
    Sqrt,
    Square,
    ClampMin(f64),
    Sum,
    Mean,
    Norm,
    MaxRows,
    Concat { axis: usize },
    Slice { axis: usize, start: usize, end: usize },
    Reshape(Vec<usize>),
    GatherCols(Vec<usize>),
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::MatMul => "matmul",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Div => "div",
            OpKind::Scale(_) => "scale",
            OpKind::Tanh => "tanh",
            OpKind::Sigmoid => "sigmoid",
            OpKind::LeakyRelu => "leaky_relu",
            OpKind::Exp => "exp",
            OpKind::Sqrt => "sqrt",
            OpKind::Square => "square",
            OpKind::ClampMin(_) => "clamp_min",
            OpKind::Sum => "sum",
            OpKind::Mean => "mean",
            OpKind::Norm => "norm",
            OpKind::MaxRows => "max_rows",
            OpKind::Concat { .. } => "concat",
            OpKind::Slice { .. } => "slice",
            OpKind::Reshape(_) => "reshape",
            OpKind::GatherCols(_) => "gather_cols",
        }
    }

    fn arity(&self) -> Option<usize> {
        match self {
            OpKind::MatMul | OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::Div => Some(2),
            OpKind::Concat { .. } => None,
            _ => Some(1),
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parses the attribute-free kinds by name. Kinds carrying attributes
/// (`scale`, `clamp_min`, `concat`, `slice`, `reshape`, `gather_cols`) must be
/// built directly.
impl FromStr for OpKind {
    type Err = AutodiffError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "matmul" => OpKind::MatMul,
            "add" => OpKind::Add,
            "sub" => OpKind::Sub,
            "mul" => OpKind::Mul,
            "div" => OpKind::Div,
            "tanh" => OpKind::Tanh,
            "sigmoid" => OpKind::Sigmoid,
            "leaky_relu" => OpKind::LeakyRelu,
            "exp" => OpKind::Exp,
            "sqrt" => OpKind::Sqrt,
            "square" => OpKind::Square,
            "sum" => OpKind::Sum,
            "mean" => OpKind::Mean,
            "norm" => OpKind::Norm,
            "max_rows" => OpKind::MaxRows,
            other => return Err(AutodiffError::UnknownOp(other.to_string())),
        })
    }
}

fn mismatch<T: Real>(kind: &OpKind, a: &Tensor<T>, b: &Tensor<T>) -> AutodiffError {
    AutodiffError::ShapeMismatch {
        op: kind.name(),
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

fn require_rank2<T: Real>(kind: &OpKind, t: &Tensor<T>) -> Result<(usize, usize), AutodiffError> {
    t.dims2().ok_or_else(|| AutodiffError::ShapeMismatch {
        op: kind.name(),
        lhs: t.shape().to_vec(),
        rhs: vec![],
    })
}

#[derive(Clone, Copy)]
enum Broadcast {
    Same,
    RhsScalar,
    LhsScalar,
}

fn broadcast<T: Real>(kind: &OpKind, a: &Tensor<T>, b: &Tensor<T>) -> Result<Broadcast, AutodiffError> {
    if a.same_shape(b) {
        Ok(Broadcast::Same)
    } else if b.is_scalar() {
        Ok(Broadcast::RhsScalar)
    } else if a.is_scalar() {
        Ok(Broadcast::LhsScalar)
    } else {
        Err(mismatch(kind, a, b))
    }
}

fn binary<T: Real>(
    kind: &OpKind,
    a: &Tensor<T>,
    b: &Tensor<T>,
    f: impl Fn(T, T) -> T,
) -> Result<Tensor<T>, AutodiffError> {
    let (shape, data) = match broadcast(kind, a, b)? {
        Broadcast::Same => (
            a.shape().to_vec(),
            a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
        ),
        Broadcast::RhsScalar => {
            let y = b.item();
            (a.shape().to_vec(), a.data().iter().map(|&x| f(x, y)).collect())
        }
        Broadcast::LhsScalar => {
            let x = a.item();
            (b.shape().to_vec(), b.data().iter().map(|&y| f(x, y)).collect())
        }
    };
    Tensor::new(shape, data)
}

fn unary<T: Real>(a: &Tensor<T>, f: impl Fn(T) -> T) -> Tensor<T> {
    Tensor::new(a.shape().to_vec(), a.data().iter().map(|&x| f(x)).collect()).expect("same shape")
}

#[inline]
pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `c += a * b` for row-major `a: [m,k]`, `b: [k,n]`, `c: [m,n]`.
pub(crate) fn matmul_into<T: Real>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &a_ip) in a_row.iter().enumerate() {
            if a_ip == T::zero() {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (c_ij, &b_pj) in c_row.iter_mut().zip(b_row) {
                *c_ij = *c_ij + a_ip * b_pj;
            }
        }
    }
}

/// Column index of the maximum in each row, lowest index on ties.
pub(crate) fn row_argmax<T: Real>(data: &[T], rows: usize, cols: usize) -> Vec<usize> {
    (0..rows)
        .map(|r| {
            let row = &data[r * cols..(r + 1) * cols];
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

pub(crate) fn forward<T: Real>(kind: &OpKind, inputs: &[&Tensor<T>]) -> Result<Tensor<T>, AutodiffError> {
    if let Some(n) = kind.arity() {
        if inputs.len() != n {
            return Err(AutodiffError::Arity {
                op: kind.name(),
                expected: n,
                found: inputs.len(),
            });
        }
    } else if inputs.is_empty() {
        return Err(AutodiffError::Arity {
            op: kind.name(),
            expected: 1,
            found: 0,
        });
    }
    let a = inputs[0];
    match kind {
        OpKind::MatMul => {
            let b = inputs[1];
            let (m, k) = require_rank2(kind, a)?;
            let (k2, n) = require_rank2(kind, b).map_err(|_| mismatch(kind, a, b))?;
            if k != k2 {
                return Err(mismatch(kind, a, b));
            }
            let mut out = vec![T::zero(); m * n];
            matmul_into(a.data(), b.data(), &mut out, m, k, n);
            Ok(Tensor::matrix(m, n, out))
        }
        OpKind::Add => binary(kind, a, inputs[1], |x, y| x + y),
        OpKind::Sub => binary(kind, a, inputs[1], |x, y| x - y),
        OpKind::Mul => binary(kind, a, inputs[1], |x, y| x * y),
        OpKind::Div => binary(kind, a, inputs[1], |x, y| x / y),
        OpKind::Scale(c) => {
            let c = T::of(*c);
            Ok(unary(a, |x| x * c))
        }
        OpKind::Tanh => Ok(unary(a, |x| x.tanh())),
        OpKind::Sigmoid => Ok(unary(a, sigmoid)),
        OpKind::LeakyRelu => {
            let s = T::of(LEAKY_SLOPE);
            Ok(unary(a, |x| if x > T::zero() { x } else { x * s }))
        }
        OpKind::Exp => Ok(unary(a, |x| x.exp())),
        OpKind::Sqrt => Ok(unary(a, |x| x.sqrt())),
        OpKind::Square => Ok(unary(a, |x| x * x)),
        OpKind::ClampMin(c) => {
            let c = T::of(*c);
            Ok(unary(a, |x| if x > c { x } else { c }))
        }
        OpKind::Sum => Ok(Tensor::scalar(a.data().iter().copied().sum())),
        OpKind::Mean => {
            let s: T = a.data().iter().copied().sum();
            Ok(Tensor::scalar(s / T::of(a.numel() as f64)))
        }
        OpKind::Norm => {
            let s: T = a.data().iter().map(|&x| x * x).sum();
            Ok(Tensor::scalar(s.sqrt()))
        }
        OpKind::MaxRows => {
            let (r, c) = require_rank2(kind, a)?;
            let arg = row_argmax(a.data(), r, c);
            let data = arg.iter().enumerate().map(|(i, &j)| a.data()[i * c + j]).collect();
            Ok(Tensor::column(data))
        }
        OpKind::Concat { axis } => concat(kind, *axis, inputs),
        OpKind::Slice { axis, start, end } => {
            let (r, c) = require_rank2(kind, a)?;
            let extent = if *axis == 0 { r } else { c };
            if *axis > 1 || start >= end || *end > extent {
                return Err(AutodiffError::InvalidAttribute {
                    op: kind.name(),
                    detail: format!("range {start}..{end} on axis {axis} of shape {:?}", a.shape()),
                });
            }
            if *axis == 0 {
                Ok(Tensor::matrix(end - start, c, a.data()[start * c..end * c].to_vec()))
            } else {
                let w = end - start;
                let mut data = Vec::with_capacity(r * w);
                for i in 0..r {
                    data.extend_from_slice(&a.data()[i * c + start..i * c + end]);
                }
                Ok(Tensor::matrix(r, w, data))
            }
        }
        OpKind::Reshape(shape) => {
            let t = Tensor::new(shape.clone(), a.data().to_vec()).map_err(|_| AutodiffError::ShapeMismatch {
                op: kind.name(),
                lhs: a.shape().to_vec(),
                rhs: shape.clone(),
            })?;
            Ok(t)
        }
        OpKind::GatherCols(idx) => {
            let (r, c) = require_rank2(kind, a)?;
            if idx.is_empty() || idx.iter().any(|&j| j >= c) {
                return Err(AutodiffError::InvalidAttribute {
                    op: kind.name(),
                    detail: format!("column indices must be non-empty and < {c}"),
                });
            }
            let w = idx.len();
            let mut data = Vec::with_capacity(r * w);
            for i in 0..r {
                let row = &a.data()[i * c..(i + 1) * c];
                data.extend(idx.iter().map(|&j| row[j]));
            }
            Ok(Tensor::matrix(r, w, data))
        }
    }
}

fn concat<T: Real>(kind: &OpKind, axis: usize, inputs: &[&Tensor<T>]) -> Result<Tensor<T>, AutodiffError> {
    if axis > 1 {
        return Err(AutodiffError::InvalidAttribute {
            op: kind.name(),
            detail: format!("axis {axis} on rank-2 tensors"),
        });
    }
    let (r0, c0) = require_rank2(kind, inputs[0])?;
    for t in &inputs[1..] {
        let (r, c) = require_rank2(kind, t)?;
        if (axis == 0 && c != c0) || (axis == 1 && r != r0) {
            return Err(mismatch(kind, inputs[0], t));
        }
    }
    if axis == 0 {
        let rows = inputs.iter().map(|t| t.shape()[0]).sum();
        let data = inputs.iter().flat_map(|t| t.data().iter().copied()).collect();
        Ok(Tensor::matrix(rows, c0, data))
    } else {
        let cols: usize = inputs.iter().map(|t| t.shape()[1]).sum();
        let mut data = Vec::with_capacity(r0 * cols);
        for i in 0..r0 {
            for t in inputs {
                let c = t.shape()[1];
                data.extend_from_slice(&t.data()[i * c..(i + 1) * c]);
            }
        }
        Ok(Tensor::matrix(r0, cols, data))
    }
}

/// Vector-Jacobian products. `needs[i]` marks inputs whose gradient is
/// wanted; the returned vector holds one entry per input.
pub(crate) fn backward<T: Real>(
    kind: &OpKind,
    inputs: &[&Tensor<T>],
    output: &Tensor<T>,
    g: &[T],
    needs: &[bool],
) -> Vec<Option<Vec<T>>> {
    let a = inputs[0];
    let elementwise = |f: &dyn Fn(usize) -> T| -> Vec<Option<Vec<T>>> {
        vec![Some((0..g.len()).map(|i| g[i] * f(i)).collect())]
    };
    match kind {
        OpKind::MatMul => {
            let b = inputs[1];
            let (m, k) = a.dims2().expect("checked in forward");
            let n = b.shape()[1];
            let ga = needs[0].then(|| {
                let mut ga = vec![T::zero(); m * k];
                for i in 0..m {
                    let g_row = &g[i * n..(i + 1) * n];
                    for p in 0..k {
                        let b_row = &b.data()[p * n..(p + 1) * n];
                        let mut acc = T::zero();
                        for (&x, &y) in g_row.iter().zip(b_row) {
                            acc = acc + x * y;
                        }
                        ga[i * k + p] = acc;
                    }
                }
                ga
            });
            let gb = needs[1].then(|| {
                let mut gb = vec![T::zero(); k * n];
                for i in 0..m {
                    let g_row = &g[i * n..(i + 1) * n];
                    for p in 0..k {
                        let a_ip = a.data()[i * k + p];
                        if a_ip == T::zero() {
                            continue;
                        }
                        let gb_row = &mut gb[p * n..(p + 1) * n];
                        for (y, &x) in gb_row.iter_mut().zip(g_row) {
                            *y = *y + a_ip * x;
                        }
                    }
                }
                gb
            });
            vec![ga, gb]
        }
        OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::Div => {
            let b = inputs[1];
            let mode = if a.same_shape(b) {
                Broadcast::Same
            } else if b.is_scalar() {
                Broadcast::RhsScalar
            } else {
                Broadcast::LhsScalar
            };
            let av = |i: usize| match mode {
                Broadcast::LhsScalar => a.item(),
                _ => a.data()[i],
            };
            let bv = |i: usize| match mode {
                Broadcast::RhsScalar => b.item(),
                _ => b.data()[i],
            };
            // d out / d a, d out / d b at output position i
            let (da, db): (Box<dyn Fn(usize) -> T>, Box<dyn Fn(usize) -> T>) = match kind {
                OpKind::Add => (Box::new(|_| T::one()), Box::new(|_| T::one())),
                OpKind::Sub => (Box::new(|_| T::one()), Box::new(|_| -T::one())),
                OpKind::Mul => (Box::new(bv), Box::new(av)),
                _ => (
                    Box::new(move |i| T::one() / bv(i)),
                    Box::new(move |i| -av(i) / (bv(i) * bv(i))),
                ),
            };
            let reduce = |scalar: bool, d: &dyn Fn(usize) -> T| -> Vec<T> {
                if scalar {
                    vec![(0..g.len()).map(|i| g[i] * d(i)).sum()]
                } else {
                    (0..g.len()).map(|i| g[i] * d(i)).collect()
                }
            };
            let ga = needs[0].then(|| reduce(matches!(mode, Broadcast::LhsScalar), &*da));
            let gb = needs[1].then(|| reduce(matches!(mode, Broadcast::RhsScalar), &*db));
            vec![ga, gb]
        }
        OpKind::Scale(c) => {
            let c = T::of(*c);
            elementwise(&|_| c)
        }
        OpKind::Tanh => elementwise(&|i| {
            let y = output.data()[i];
            T::one() - y * y
        }),
        OpKind::Sigmoid => elementwise(&|i| {
            let y = output.data()[i];
            y * (T::one() - y)
        }),
        OpKind::LeakyRelu => {
            let s = T::of(LEAKY_SLOPE);
            elementwise(&|i| if a.data()[i] > T::zero() { T::one() } else { s })
        }
        OpKind::Exp => elementwise(&|i| output.data()[i]),
        OpKind::Sqrt => elementwise(&|i| T::of(0.5) / output.data()[i]),
        OpKind::Square => elementwise(&|i| T::of(2.0) * a.data()[i]),
        OpKind::ClampMin(c) => {
            let c = T::of(*c);
            elementwise(&|i| if a.data()[i] > c { T::one() } else { T::zero() })
        }
        OpKind::Sum => vec![Some(vec![g[0]; a.numel()])],
        OpKind::Mean => {
            let v = g[0] / T::of(a.numel() as f64);
            vec![Some(vec![v; a.numel()])]
        }
        OpKind::Norm => {
            let n = output.item();
            if n == T::zero() {
                vec![Some(vec![T::zero(); a.numel()])]
            } else {
                vec![Some(a.data().iter().map(|&x| g[0] * x / n).collect())]
            }
        }
        OpKind::MaxRows => {
            let (r, c) = a.dims2().expect("checked in forward");
            let arg = row_argmax(a.data(), r, c);
            let mut ga = vec![T::zero(); r * c];
            for (i, &j) in arg.iter().enumerate() {
                ga[i * c + j] = g[i];
            }
            vec![Some(ga)]
        }
        OpKind::Concat { axis } => {
            let (_, total_cols) = output.dims2().expect("rank-2");
            let mut out = Vec::with_capacity(inputs.len());
            let mut offset = 0;
            for (t, &need) in inputs.iter().zip(needs) {
                let (r, c) = t.dims2().expect("rank-2");
                let slice = if *axis == 0 {
                    g[offset * total_cols..(offset + r) * total_cols].to_vec()
                } else {
                    let mut s = Vec::with_capacity(r * c);
                    for i in 0..r {
                        s.extend_from_slice(&g[i * total_cols + offset..i * total_cols + offset + c]);
                    }
                    s
                };
                offset += if *axis == 0 { r } else { c };
                out.push(need.then_some(slice));
            }
            out
        }
        OpKind::Slice { axis, start, end } => {
            let (r, c) = a.dims2().expect("rank-2");
            let mut ga = vec![T::zero(); r * c];
            if *axis == 0 {
                ga[start * c..end * c].copy_from_slice(g);
            } else {
                let w = end - start;
                for i in 0..r {
                    ga[i * c + start..i * c + end].copy_from_slice(&g[i * w..(i + 1) * w]);
                }
            }
            vec![Some(ga)]
        }
        OpKind::Reshape(_) => vec![Some(g.to_vec())],
        OpKind::GatherCols(idx) => {
            let (r, c) = a.dims2().expect("rank-2");
            let w = idx.len();
            let mut ga = vec![T::zero(); r * c];
            for i in 0..r {
                for (k, &j) in idx.iter().enumerate() {
                    ga[i * c + j] = ga[i * c + j] + g[i * w + k];
                }
            }
            vec![Some(ga)]
        }
    }
}
