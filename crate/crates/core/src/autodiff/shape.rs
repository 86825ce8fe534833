use super::tape::{Accumulator, Op};
use super::{Scalar, Tape, Tensor, Var};
use crate::error::{shape_err, Result};

const NORM_FLOOR: f64 = 1e-12;

impl<T: Scalar> Tape<T> {
    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        self.check(&[x])?;
        let out = self.val(x).clone().reshape(shape.to_vec())?;
        let rg = self.any_requires_grad(&[x]);
        Ok(self.push(out, Op::Reshape(x), rg))
    }

    /// Concatenate along axis 1; all other extents must agree.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(&[a, b])?;
        let (av, bv) = (self.val(a), self.val(b));
        let (sa, sb) = (av.shape(), bv.shape());
        if sa.len() < 2 || sa.len() != sb.len() || sa[0] != sb[0] || sa[2..] != sb[2..] {
            return shape_err("concat", format!("{sa:?} with {sb:?}"));
        }
        let n = sa[0];
        let inner: usize = sa[2..].iter().product();
        let (ka, kb) = (sa[1] * inner, sb[1] * inner);
        let mut out = Vec::with_capacity(av.numel() + bv.numel());
        for i in 0..n {
            out.extend_from_slice(&av.data()[i * ka..(i + 1) * ka]);
            out.extend_from_slice(&bv.data()[i * kb..(i + 1) * kb]);
        }
        let mut shape = sa.to_vec();
        shape[1] += sb[1];
        let out = Tensor::new(shape, out)?;
        let rg = self.any_requires_grad(&[a, b]);
        Ok(self.push(out, Op::Concat(a, b), rg))
    }

    /// `[n, c]` → `[n, c, h, w]` with each value repeated over the plane.
    pub fn broadcast_spatial(&mut self, x: Var, h: usize, w: usize) -> Result<Var> {
        self.check(&[x])?;
        let xv = self.val(x);
        let &[n, c] = xv.shape() else {
            return shape_err(
                "broadcast_spatial",
                format!("need [n, c], got {:?}", xv.shape()),
            );
        };
        let mut out = Vec::with_capacity(n * c * h * w);
        for &v in xv.data() {
            out.extend(std::iter::repeat_n(v, h * w));
        }
        let out = Tensor::new(vec![n, c, h, w], out)?;
        let rg = self.any_requires_grad(&[x]);
        Ok(self.push(out, Op::BroadcastSpatial(x), rg))
    }

    /// Scale each row of `x[n, d]` to unit Euclidean norm.
    pub fn normalize_rows(&mut self, x: Var) -> Result<Var> {
        self.check(&[x])?;
        let xv = self.val(x);
        let &[_, d] = xv.shape() else {
            return shape_err(
                "normalize_rows",
                format!("need [n, d], got {:?}", xv.shape()),
            );
        };
        let floor = T::from_f64(NORM_FLOOR);
        let mut norms = Vec::new();
        let mut out = xv.data().to_vec();
        for row in out.chunks_mut(d) {
            let norm = row
                .iter()
                .fold(T::zero(), |s, &v| s + v * v)
                .sqrt()
                .max(floor);
            row.iter_mut().for_each(|v| *v = *v / norm);
            norms.push(norm);
        }
        let out = Tensor::new(xv.shape().to_vec(), out)?;
        let rg = self.any_requires_grad(&[x]);
        Ok(self.push(out, Op::NormalizeRows { x, norms }, rg))
    }
}

pub(crate) fn concat_backward<T: Scalar>(acc: &mut Accumulator<'_, T>, a: Var, b: Var, g: &[T]) {
    let (sa, sb) = (acc.tape.val(a).shape(), acc.tape.val(b).shape());
    let inner: usize = sa[2..].iter().product();
    let (ka, kb) = (sa[1] * inner, sb[1] * inner);
    acc.add(a, || {
        g.chunks(ka + kb)
            .flat_map(|row| row[..ka].iter().copied())
            .collect()
    });
    acc.add(b, || {
        g.chunks(ka + kb)
            .flat_map(|row| row[ka..].iter().copied())
            .collect()
    });
}

pub(crate) fn broadcast_spatial_backward<T: Scalar>(acc: &mut Accumulator<'_, T>, x: Var, g: &[T]) {
    let plane = g.len() / acc.tape.val(x).numel();
    acc.add(x, || {
        g.chunks(plane)
            .map(|c| c.iter().fold(T::zero(), |s, &v| s + v))
            .collect()
    });
}

pub(crate) fn normalize_rows_backward<T: Scalar>(
    acc: &mut Accumulator<'_, T>,
    x: Var,
    y: &[T],
    norms: &[T],
    g: &[T],
) {
    let d = y.len() / norms.len();
    acc.add(x, || {
        let mut dx = Vec::with_capacity(y.len());
        for ((yr, gr), &norm) in y.chunks(d).zip(g.chunks(d)).zip(norms) {
            let dot = yr.iter().zip(gr).fold(T::zero(), |s, (&a, &b)| s + a * b);
            dx.extend(yr.iter().zip(gr).map(|(&yi, &gi)| (gi - yi * dot) / norm));
        }
        dx
    });
}
