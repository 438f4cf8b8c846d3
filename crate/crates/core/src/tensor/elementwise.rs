use super::Tensor4;
use crate::error::{shape_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Mul,
    Gelu,
}

/// Exact-erf GELU: `0.5 x (1 + erf(x / sqrt 2))`.
#[inline]
pub fn gelu_scalar(x: f32) -> f32 {
    let x = x as f64;
    (0.5 * x * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))) as f32
}

pub fn gelu(input: &Tensor4) -> Tensor4 {
    let data = input.data().iter().map(|&x| gelu_scalar(x)).collect();
    Tensor4::from_vec(input.shape(), data).expect("same shape")
}

fn zip_with(a: &Tensor4, b: &Tensor4, f: impl Fn(f32, f32) -> f32) -> Result<Tensor4> {
    if a.shape() != b.shape() {
        return Err(shape_err!(
            "elementwise op on mismatched shapes {} and {}",
            a.shape(),
            b.shape()
        ));
    }
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor4::from_vec(a.shape(), data)
}

pub fn add(a: &Tensor4, b: &Tensor4) -> Result<Tensor4> {
    zip_with(a, b, |x, y| x + y)
}

pub fn mul(a: &Tensor4, b: &Tensor4) -> Result<Tensor4> {
    zip_with(a, b, |x, y| x * y)
}

/// Dispatches `op` over one (`Gelu`) or two (`Add`, `Mul`) inputs.
pub fn elementwise_map(op: ElementwiseOp, inputs: &[&Tensor4]) -> Result<Tensor4> {
    match (op, inputs) {
        (ElementwiseOp::Gelu, [x]) => Ok(gelu(x)),
        (ElementwiseOp::Add, [a, b]) => add(a, b),
        (ElementwiseOp::Mul, [a, b]) => mul(a, b),
        _ => Err(shape_err!("{op:?} got {} operands", inputs.len())),
    }
}
