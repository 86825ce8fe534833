use super::scalar::{gemm, Operand};
use super::tape::{Accumulator, Op};
use super::{Scalar, Tape, Tensor, Var};
use crate::error::{shape_err, Result};

impl<T: Scalar> Tape<T> {
    fn elementwise(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
        op: Op<T>,
    ) -> Result<Var> {
        self.check(&[a, b])?;
        let (av, bv) = (self.val(a), self.val(b));
        if av.shape() != bv.shape() {
            return shape_err(name, format!("{:?} vs {:?}", av.shape(), bv.shape()));
        }
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        let rg = self.any_requires_grad(&[a, b]);
        Ok(self.push(out, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Result<Var> {
        self.check(&[a])?;
        let av = self.val(a);
        let out = Tensor::new(
            av.shape().to_vec(),
            av.data().iter().map(|&x| x * c).collect(),
        )?;
        let rg = self.any_requires_grad(&[a]);
        Ok(self.push(out, Op::Scale(a, c), rg))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.check(&[a])?;
        let s = self.val(a).data().iter().fold(T::zero(), |acc, &x| acc + x);
        let rg = self.any_requires_grad(&[a]);
        Ok(self.push(Tensor::scalar(s), Op::Sum(a), rg))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        self.check(&[a])?;
        let v = self.val(a);
        let s = v.data().iter().fold(T::zero(), |acc, &x| acc + x) / T::from_f64(v.numel() as f64);
        let rg = self.any_requires_grad(&[a]);
        Ok(self.push(Tensor::scalar(s), Op::Mean(a), rg))
    }

    /// `a[m×k] · b[k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(&[a, b])?;
        let (av, bv) = (self.val(a), self.val(b));
        let (&[m, k], &[k2, n]) = (av.shape(), bv.shape()) else {
            return shape_err(
                "matmul",
                format!(
                    "expected matrices, got {:?} and {:?}",
                    av.shape(),
                    bv.shape()
                ),
            );
        };
        if k != k2 {
            return shape_err(
                "matmul",
                format!("inner extents differ: [{m}x{k}] · [{k2}x{n}]"),
            );
        }
        let mut out = vec![T::zero(); m * n];
        gemm(
            Operand::plain(av.data(), m, k),
            Operand::plain(bv.data(), k, n),
            T::zero(),
            &mut out,
        );
        let rg = self.any_requires_grad(&[a, b]);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), rg))
    }

    /// `x[m×n] + b[n]` broadcast over rows.
    pub fn add_row_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        self.check(&[x, b])?;
        let (xv, bv) = (self.val(x), self.val(b));
        let &[_, n] = xv.shape() else {
            return shape_err(
                "add_row_bias",
                format!("x must be 2-d, got {:?}", xv.shape()),
            );
        };
        if bv.numel() != n {
            return shape_err(
                "add_row_bias",
                format!("bias {:?} for width {n}", bv.shape()),
            );
        }
        let mut out = xv.data().to_vec();
        for row in out.chunks_mut(n) {
            row.iter_mut()
                .zip(bv.data())
                .for_each(|(o, &b)| *o = *o + b);
        }
        let out = Tensor::new(xv.shape().to_vec(), out)?;
        let rg = self.any_requires_grad(&[x, b]);
        Ok(self.push(out, Op::AddRowBias(x, b), rg))
    }

    /// `x[n×c×…] + b[c]` broadcast over batch and spatial axes.
    pub fn add_channel_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        self.check(&[x, b])?;
        let (xv, bv) = (self.val(x), self.val(b));
        if xv.shape().len() < 2 || xv.shape()[1] != bv.numel() {
            return shape_err(
                "add_channel_bias",
                format!("x {:?} with bias {:?}", xv.shape(), bv.shape()),
            );
        }
        let c = xv.shape()[1];
        let inner: usize = xv.shape()[2..].iter().product();
        let mut out = xv.data().to_vec();
        for (i, chunk) in out.chunks_mut(inner).enumerate() {
            let b = bv.data()[i % c];
            chunk.iter_mut().for_each(|o| *o = *o + b);
        }
        let out = Tensor::new(xv.shape().to_vec(), out)?;
        let rg = self.any_requires_grad(&[x, b]);
        Ok(self.push(out, Op::AddChannelBias(x, b), rg))
    }
}

pub(crate) fn matmul_backward<T: Scalar>(acc: &mut Accumulator<'_, T>, a: Var, b: Var, g: &[T]) {
    let tape = acc.tape;
    let (av, bv) = (tape.val(a), tape.val(b));
    let (m, k) = (av.shape()[0], av.shape()[1]);
    let n = bv.shape()[1];
    acc.add(a, || {
        let mut da = vec![T::zero(); m * k];
        gemm(
            Operand::plain(g, m, n),
            Operand::t(bv.data(), k, n),
            T::zero(),
            &mut da,
        );
        da
    });
    acc.add(b, || {
        let mut db = vec![T::zero(); k * n];
        gemm(
            Operand::t(av.data(), m, k),
            Operand::plain(g, m, n),
            T::zero(),
            &mut db,
        );
        db
    });
}

pub(crate) fn add_row_bias_backward<T: Scalar>(
    acc: &mut Accumulator<'_, T>,
    x: Var,
    b: Var,
    g: &[T],
) {
    let n = acc.tape.val(b).numel();
    acc.add(x, || g.to_vec());
    acc.add(b, || {
        let mut db = vec![T::zero(); n];
        for row in g.chunks(n) {
            db.iter_mut().zip(row).for_each(|(d, &v)| *d = *d + v);
        }
        db
    });
}

pub(crate) fn add_channel_bias_backward<T: Scalar>(
    acc: &mut Accumulator<'_, T>,
    x: Var,
    b: Var,
    g: &[T],
) {
    let shape = acc.tape.val(x).shape();
    let c = shape[1];
    let inner: usize = shape[2..].iter().product();
    acc.add(x, || g.to_vec());
    acc.add(b, || {
        let mut db = vec![T::zero(); c];
        for (i, chunk) in g.chunks(inner).enumerate() {
            db[i % c] = chunk.iter().fold(db[i % c], |s, &v| s + v);
        }
        db
    });
}
