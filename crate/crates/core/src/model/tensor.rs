use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};

/// Floating-point element type. Training runs in `f32`; gradient
/// verification runs the same code in `f64`.
pub trait Scalar:
    Float + FromPrimitive + Sum + AddAssign + SubAssign + MulAssign + DivAssign + Default + Debug + Send + Sync + 'static
{
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("representable constant")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    pub shape: Vec<usize>,
    pub data: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![F::zero(); shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], v: F) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![v; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<F>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "shape/data mismatch");
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.shape)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<G: Scalar>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| G::from(*v).expect("finite cast")).collect(),
        }
    }
}

/// `x (rows×inner) · w (inner×cols) + bias`.
pub(crate) fn linear<F: Scalar>(x: &[F], rows: usize, inner: usize, w: &[F], cols: usize, bias: &[F]) -> Vec<F> {
    let mut out = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        out.extend_from_slice(bias);
    }
    for r in 0..rows {
        let xr = &x[r * inner..(r + 1) * inner];
        let orow = &mut out[r * cols..(r + 1) * cols];
        for (p, &xv) in xr.iter().enumerate() {
            if xv == F::zero() {
                continue;
            }
            let wrow = &w[p * cols..(p + 1) * cols];
            for (o, &wv) in orow.iter_mut().zip(wrow) {
                *o += xv * wv;
            }
        }
    }
    out
}

/// Backward of [`linear`]: accumulates `dw += xᵀ·dy`, `db += Σ dy` and
/// returns `dx = dy·wᵀ`.
pub(crate) fn linear_backward<F: Scalar>(
    x: &[F],
    dy: &[F],
    rows: usize,
    inner: usize,
    w: &[F],
    cols: usize,
    dw: &mut [F],
    db: &mut [F],
) -> Vec<F> {
    let mut dx = vec![F::zero(); rows * inner];
    for r in 0..rows {
        let dyr = &dy[r * cols..(r + 1) * cols];
        for (b, &d) in db.iter_mut().zip(dyr) {
            *b += d;
        }
        let xr = &x[r * inner..(r + 1) * inner];
        let dxr = &mut dx[r * inner..(r + 1) * inner];
        for p in 0..inner {
            let wrow = &w[p * cols..(p + 1) * cols];
            let dwrow = &mut dw[p * cols..(p + 1) * cols];
            let xv = xr[p];
            let mut acc = F::zero();
            for ((dwv, &wv), &d) in dwrow.iter_mut().zip(wrow).zip(dyr) {
                *dwv += xv * d;
                acc += wv * d;
            }
            dxr[p] = acc;
        }
    }
    dx
}

pub(crate) fn log_softmax_ce<F: Scalar>(logits: &[F], gold: usize) -> (F, Vec<F>) {
    let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let exps: Vec<F> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: F = exps.iter().copied().sum();
    let loss = sum.ln() + max - logits[gold];
    let probs = exps.into_iter().map(|e| e / sum).collect();
    (loss, probs)
}
