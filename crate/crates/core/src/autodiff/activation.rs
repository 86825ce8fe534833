use super::tape::Op;
use super::{Scalar, Tape, Tensor, Var};
use crate::error::Result;

/// Slope of the negative half of [`Activation::LeakyRelu`].
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    LeakyRelu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
            Activation::LeakyRelu => {
                if x > T::zero() {
                    x
                } else {
                    x * T::from_f64(LEAKY_SLOPE)
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    pub(crate) fn backward<T: Scalar>(self, x: &[T], y: &[T], g: &[T]) -> Vec<T> {
        let zero = T::zero();
        let one = T::one();
        match self {
            Activation::Relu => x
                .iter()
                .zip(g)
                .map(|(&x, &g)| if x > zero { g } else { zero })
                .collect(),
            Activation::LeakyRelu => {
                let slope = T::from_f64(LEAKY_SLOPE);
                x.iter()
                    .zip(g)
                    .map(|(&x, &g)| if x > zero { g } else { g * slope })
                    .collect()
            }
            Activation::Tanh => y.iter().zip(g).map(|(&y, &g)| g * (one - y * y)).collect(),
            Activation::Sigmoid => y.iter().zip(g).map(|(&y, &g)| g * y * (one - y)).collect(),
        }
    }
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: Scalar> Tape<T> {
    pub fn activation(&mut self, x: Var, kind: Activation) -> Result<Var> {
        self.check(&[x])?;
        let xv = self.val(x);
        let out = Tensor::new(
            xv.shape().to_vec(),
            xv.data().iter().map(|&v| kind.apply(v)).collect(),
        )?;
        let rg = self.any_requires_grad(&[x]);
        Ok(self.push(out, Op::Activation(x, kind), rg))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::Relu)
    }

    pub fn leaky_relu(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::LeakyRelu)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::Tanh)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::Sigmoid)
    }
}
