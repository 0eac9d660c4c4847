//! Dense row-major f64 tensors and the small set of matrix kernels the tape needs.

use rayon::prelude::*;

/// Flat row-major tensor. Rank is almost always 1 or 2 here; a scalar is `[1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {:?} does not match data length {}",
            shape,
            data.len()
        );
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn scalar(x: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![x],
        }
    }

    pub fn filled(shape: &[usize], x: f64) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![x; len],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn scalar_value(&self) -> f64 {
        assert!(self.is_scalar(), "tensor of shape {:?} is not scalar", self.shape);
        self.data[0]
    }

    /// Rows of a rank-2 tensor; rank-1 tensors count as a single row.
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            1 => 1,
            2 => self.shape[0],
            _ => panic!("rows() on tensor of rank {}", self.shape.len()),
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape.len() {
            1 => self.shape[0],
            2 => self.shape[1],
            _ => panic!("cols() on tensor of rank {}", self.shape.len()),
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }
}

const PAR_FLOP_THRESHOLD: usize = 1 << 20;

/// `a (M×K) · bᵀ (N×K) -> M×N`. The workhorse: linear-layer forward.
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k) = (a.rows(), a.cols());
    let (n, kb) = (b.rows(), b.cols());
    assert_eq!(k, kb, "matmul_nt inner dims {} vs {}", k, kb);
    let mut out = vec![0.0; m * n];
    let work = m * n * k;
    let body = |r: usize, row_out: &mut [f64]| {
        let ar = &a.data[r * k..(r + 1) * k];
        for (j, o) in row_out.iter_mut().enumerate() {
            let br = &b.data[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for i in 0..k {
                acc += ar[i] * br[i];
            }
            *o = acc;
        }
    };
    if work >= PAR_FLOP_THRESHOLD {
        out.par_chunks_mut(n).enumerate().for_each(|(r, row)| body(r, row));
    } else {
        for (r, row) in out.chunks_mut(n).enumerate() {
            body(r, row);
        }
    }
    Tensor::from_vec(&[m, n], out)
}

/// `a (M×K) · b (K×N) -> M×N`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k) = (a.rows(), a.cols());
    let (kb, n) = (b.rows(), b.cols());
    assert_eq!(k, kb, "matmul inner dims {} vs {}", k, kb);
    let mut out = vec![0.0; m * n];
    let work = m * n * k;
    let body = |r: usize, row_out: &mut [f64]| {
        let ar = &a.data[r * k..(r + 1) * k];
        for (i, &av) in ar.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let br = &b.data[i * n..(i + 1) * n];
            for j in 0..n {
                row_out[j] += av * br[j];
            }
        }
    };
    if work >= PAR_FLOP_THRESHOLD {
        out.par_chunks_mut(n).enumerate().for_each(|(r, row)| body(r, row));
    } else {
        for (r, row) in out.chunks_mut(n).enumerate() {
            body(r, row);
        }
    }
    Tensor::from_vec(&[m, n], out)
}

/// `aᵀ (M×K from K×M) · b (K×N) -> M×N`; used for weight gradients.
pub fn matmul_tn(a: &Tensor, b: &Tensor) -> Tensor {
    let (k, m) = (a.rows(), a.cols());
    let (kb, n) = (b.rows(), b.cols());
    assert_eq!(k, kb, "matmul_tn inner dims {} vs {}", k, kb);
    let mut out = vec![0.0; m * n];
    for i in 0..k {
        let ar = &a.data[i * m..(i + 1) * m];
        let br = &b.data[i * n..(i + 1) * n];
        for (r, &av) in ar.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let row = &mut out[r * n..(r + 1) * n];
            for j in 0..n {
                row[j] += av * br[j];
            }
        }
    }
    Tensor::from_vec(&[m, n], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_variants_agree() {
        let a = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Tensor::from_vec(&[3, 2], vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let c = matmul(&a, &b);
        assert_eq!(c.data, vec![58.0, 64.0, 139.0, 154.0]);

        // a·bᵀ with b stored transposed must match.
        let bt = Tensor::from_vec(&[2, 3], vec![7.0, 9.0, 11.0, 8.0, 10.0, 12.0]);
        let c2 = matmul_nt(&a, &bt);
        assert_eq!(c.data, c2.data);

        // aᵀ·b with a stored transposed.
        let at = Tensor::from_vec(&[3, 2], vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        let c3 = matmul_tn(&at, &b);
        assert_eq!(c.data, c3.data);
    }

    #[test]
    fn row_access() {
        let t = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(t.row(1), &[3.0, 4.0]);
        assert_eq!(t.rows(), 2);
        assert_eq!(t.cols(), 2);
    }
}
