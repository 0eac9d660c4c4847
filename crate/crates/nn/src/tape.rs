//! Reverse-mode automatic differentiation over whole tensors.
//!
//! A `Tape` records a Wengert list of tensor operations; `backward` walks it in
//! reverse and accumulates adjoints for every node. Parameters are leaves
//! created with [`Tape::param`]; everything reachable from the loss gets a
//! gradient, untouched parameters read back as zero.
//!
//! Calling `backward` twice without [`Tape::clear_grads`] accumulates into the
//! existing gradients.

use crate::error::NnError;
use crate::tensor::{matmul, matmul_nt, matmul_tn, Tensor};

/// Handle to a node on a tape. Only valid for the tape that created it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(pub(crate) u32);

impl Var {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

// Sign/Step keep their parent and AddScalar its shift for completeness even
// though their backward rules never consult them.
#[allow(dead_code)]
#[derive(Debug)]
enum Op {
    Leaf { requires_grad: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Neg(Var),
    Exp(Var),
    Ln(Var),
    Sqrt(Var),
    Abs(Var),
    Relu(Var),
    /// softplus(βx)/β with stable branches; derivative is sigmoid(βx).
    SoftplusBeta(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Sin(Var),
    Cos(Var),
    Square(Var),
    Recip(Var),
    /// sign(x) with sign(0)=0. Derivative treated as zero (a.e. exact).
    Sign(Var),
    /// 1 if x > 0 else 0. Derivative treated as zero (a.e. exact).
    Step(Var),
    AddScalar(Var, f64),
    MulScalar(Var, f64),
    /// y = x·wᵀ + b with x: N×I, w: O×I, b: O.
    Linear { x: Var, w: Var, b: Var },
    ConcatCols(Vec<Var>),
    SliceCols { x: Var, from: usize, to: usize },
    GatherRows { x: Var, idx: Vec<usize> },
    /// Broadcast a 1×D row to N×D.
    RepeatRow { x: Var, n: usize },
    SumAll(Var),
    MeanAll(Var),
    /// N×D -> N×1 row sums.
    SumCols(Var),
    /// N×D -> N×1 row max; argmax cached for backward.
    MaxCols(Var, Vec<usize>),
    /// N×1 value per row picked by a fixed column index.
    TakeColPerRow { x: Var, cols: Vec<usize> },
    /// x: N×D plus c: N×1 broadcast along columns.
    AddColBroadcast { x: Var, c: Var },
    /// x: N×D times c: N×1 broadcast along columns.
    MulColBroadcast { x: Var, c: Var },
    /// R×S exclusive cumulative sum along each row.
    ExclusiveCumsumRows(Var),
    /// out[idx[i]] += x[i]; x: N×D -> out: n_out×D.
    ScatterSumRows { x: Var, idx: Vec<usize>, n_out: usize },
    Reshape { x: Var },
}

pub struct Tape {
    ops: Vec<Op>,
    vals: Vec<Tensor>,
    grads: Vec<Option<Tensor>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            ops: Vec::new(),
            vals: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.vals[v.index()]
    }

    fn push(&mut self, op: Op, val: Tensor) -> Var {
        let id = self.ops.len() as u32;
        self.ops.push(op);
        self.vals.push(val);
        Var(id)
    }

    /// Leaf that does not need a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf { requires_grad: false }, t)
    }

    /// Leaf parameter; `backward` will produce a gradient for it.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf { requires_grad: true }, t)
    }

    fn binary_shape_check(&self, a: Var, b: Var, what: &str) {
        assert_eq!(
            self.vals[a.index()].shape,
            self.vals[b.index()].shape,
            "{} shape mismatch",
            what
        );
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary_shape_check(a, b, "add");
        let v = Tensor {
            shape: self.vals[a.index()].shape.clone(),
            data: self.vals[a.index()]
                .data
                .iter()
                .zip(&self.vals[b.index()].data)
                .map(|(x, y)| x + y)
                .collect(),
        };
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary_shape_check(a, b, "sub");
        let v = Tensor {
            shape: self.vals[a.index()].shape.clone(),
            data: self.vals[a.index()]
                .data
                .iter()
                .zip(&self.vals[b.index()].data)
                .map(|(x, y)| x - y)
                .collect(),
        };
        self.push(Op::Sub(a, b), v)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary_shape_check(a, b, "mul");
        let v = Tensor {
            shape: self.vals[a.index()].shape.clone(),
            data: self.vals[a.index()]
                .data
                .iter()
                .zip(&self.vals[b.index()].data)
                .map(|(x, y)| x * y)
                .collect(),
        };
        self.push(Op::Mul(a, b), v)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.binary_shape_check(a, b, "div");
        let v = Tensor {
            shape: self.vals[a.index()].shape.clone(),
            data: self.vals[a.index()]
                .data
                .iter()
                .zip(&self.vals[b.index()].data)
                .map(|(x, y)| x / y)
                .collect(),
        };
        self.push(Op::Div(a, b), v)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let v = self.vals[a.index()].map(f);
        self.push(op, v)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(a, |x| -x, Op::Neg(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Ln(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, f64::sqrt, Op::Sqrt(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, f64::abs, Op::Abs(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(a))
    }

    pub fn softplus_beta(&mut self, a: Var, beta: f64) -> Var {
        self.unary(a, |x| softplus(beta * x) / beta, Op::SoftplusBeta(a, beta))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sin(&mut self, a: Var) -> Var {
        self.unary(a, f64::sin, Op::Sin(a))
    }

    pub fn cos(&mut self, a: Var) -> Var {
        self.unary(a, f64::cos, Op::Cos(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    pub fn recip(&mut self, a: Var) -> Var {
        self.unary(a, |x| 1.0 / x, Op::Recip(a))
    }

    pub fn sign(&mut self, a: Var) -> Var {
        self.unary(
            a,
            |x| {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            },
            Op::Sign(a),
        )
    }

    pub fn step(&mut self, a: Var) -> Var {
        self.unary(a, |x| if x > 0.0 { 1.0 } else { 0.0 }, Op::Step(a))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| x + c, Op::AddScalar(a, c))
    }

    pub fn mul_scalar(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| x * c, Op::MulScalar(a, c))
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let xv = &self.vals[x.index()];
        let wv = &self.vals[w.index()];
        let bv = &self.vals[b.index()];
        let (o, i) = (wv.rows(), wv.cols());
        assert_eq!(xv.cols(), i, "linear: input dim {} vs weight {}", xv.cols(), i);
        assert_eq!(bv.len(), o, "linear: bias dim");
        let mut y = matmul_nt(xv, wv);
        for r in 0..y.rows() {
            let row = y.row_mut(r);
            for (j, bj) in bv.data.iter().enumerate() {
                row[j] += bj;
            }
        }
        self.push(Op::Linear { x, w, b }, y)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let n = self.vals[parts[0].index()].rows();
        let total: usize = parts.iter().map(|p| self.vals[p.index()].cols()).sum();
        let mut data = vec![0.0; n * total];
        let mut off = 0;
        for p in parts {
            let t = &self.vals[p.index()];
            assert_eq!(t.rows(), n, "concat_cols: row mismatch");
            let c = t.cols();
            for r in 0..n {
                data[r * total + off..r * total + off + c].copy_from_slice(t.row(r));
            }
            off += c;
        }
        self.push(Op::ConcatCols(parts.to_vec()), Tensor::from_vec(&[n, total], data))
    }

    pub fn slice_cols(&mut self, x: Var, from: usize, to: usize) -> Var {
        let t = &self.vals[x.index()];
        let (n, c) = (t.rows(), t.cols());
        assert!(from < to && to <= c, "slice_cols out of range");
        let w = to - from;
        let mut data = Vec::with_capacity(n * w);
        for r in 0..n {
            data.extend_from_slice(&t.row(r)[from..to]);
        }
        self.push(Op::SliceCols { x, from, to }, Tensor::from_vec(&[n, w], data))
    }

    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Var {
        let t = &self.vals[x.index()];
        let c = t.cols();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            data.extend_from_slice(t.row(i));
        }
        self.push(
            Op::GatherRows { x, idx: idx.to_vec() },
            Tensor::from_vec(&[idx.len(), c], data),
        )
    }

    pub fn repeat_row(&mut self, x: Var, n: usize) -> Var {
        let t = &self.vals[x.index()];
        assert_eq!(t.rows(), 1, "repeat_row expects a single row");
        let c = t.cols();
        let mut data = Vec::with_capacity(n * c);
        for _ in 0..n {
            data.extend_from_slice(&t.data);
        }
        self.push(Op::RepeatRow { x, n }, Tensor::from_vec(&[n, c], data))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s: f64 = self.vals[a.index()].data.iter().sum();
        self.push(Op::SumAll(a), Tensor::scalar(s))
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let t = &self.vals[a.index()];
        let s: f64 = t.data.iter().sum();
        let m = s / t.len() as f64;
        self.push(Op::MeanAll(a), Tensor::scalar(m))
    }

    pub fn sum_cols(&mut self, a: Var) -> Var {
        let t = &self.vals[a.index()];
        let n = t.rows();
        let data: Vec<f64> = (0..n).map(|r| t.row(r).iter().sum()).collect();
        self.push(Op::SumCols(a), Tensor::from_vec(&[n, 1], data))
    }

    pub fn max_cols(&mut self, a: Var) -> Var {
        let t = &self.vals[a.index()];
        let n = t.rows();
        let mut data = Vec::with_capacity(n);
        let mut arg = Vec::with_capacity(n);
        for r in 0..n {
            let row = t.row(r);
            let (mut bi, mut bv) = (0usize, row[0]);
            for (i, &v) in row.iter().enumerate().skip(1) {
                if v > bv {
                    bv = v;
                    bi = i;
                }
            }
            data.push(bv);
            arg.push(bi);
        }
        self.push(Op::MaxCols(a, arg), Tensor::from_vec(&[n, 1], data))
    }

    pub fn take_col_per_row(&mut self, x: Var, cols: &[usize]) -> Var {
        let t = &self.vals[x.index()];
        let n = t.rows();
        assert_eq!(cols.len(), n, "take_col_per_row: index count");
        let data: Vec<f64> = cols.iter().enumerate().map(|(r, &c)| t.row(r)[c]).collect();
        self.push(
            Op::TakeColPerRow { x, cols: cols.to_vec() },
            Tensor::from_vec(&[n, 1], data),
        )
    }

    pub fn add_col_broadcast(&mut self, x: Var, c: Var) -> Var {
        let xv = &self.vals[x.index()];
        let cv = &self.vals[c.index()];
        assert_eq!(cv.cols(), 1, "add_col_broadcast: c must be N×1");
        assert_eq!(cv.rows(), xv.rows(), "add_col_broadcast: rows");
        let cols = xv.cols();
        let mut out = xv.clone();
        for r in 0..xv.rows() {
            let s = cv.data[r];
            for v in &mut out.row_mut(r)[..cols] {
                *v += s;
            }
        }
        self.push(Op::AddColBroadcast { x, c }, out)
    }

    pub fn mul_col_broadcast(&mut self, x: Var, c: Var) -> Var {
        let xv = &self.vals[x.index()];
        let cv = &self.vals[c.index()];
        assert_eq!(cv.cols(), 1, "mul_col_broadcast: c must be N×1");
        assert_eq!(cv.rows(), xv.rows(), "mul_col_broadcast: rows");
        let cols = xv.cols();
        let mut out = xv.clone();
        for r in 0..xv.rows() {
            let s = cv.data[r];
            for v in &mut out.row_mut(r)[..cols] {
                *v *= s;
            }
        }
        self.push(Op::MulColBroadcast { x, c }, out)
    }

    pub fn exclusive_cumsum_rows(&mut self, a: Var) -> Var {
        let t = &self.vals[a.index()];
        let (n, s) = (t.rows(), t.cols());
        let mut data = vec![0.0; n * s];
        for r in 0..n {
            let row = t.row(r);
            let mut acc = 0.0;
            for i in 0..s {
                data[r * s + i] = acc;
                acc += row[i];
            }
        }
        self.push(Op::ExclusiveCumsumRows(a), Tensor::from_vec(&[n, s], data))
    }

    pub fn scatter_sum_rows(&mut self, x: Var, idx: &[usize], n_out: usize) -> Var {
        let t = &self.vals[x.index()];
        assert_eq!(t.rows(), idx.len(), "scatter_sum_rows: index count");
        let c = t.cols();
        let mut data = vec![0.0; n_out * c];
        for (r, &o) in idx.iter().enumerate() {
            assert!(o < n_out, "scatter_sum_rows: index out of range");
            let src = t.row(r);
            let dst = &mut data[o * c..(o + 1) * c];
            for i in 0..c {
                dst[i] += src[i];
            }
        }
        self.push(
            Op::ScatterSumRows { x, idx: idx.to_vec(), n_out },
            Tensor::from_vec(&[n_out, c], data),
        )
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let t = &self.vals[x.index()];
        assert_eq!(
            t.len(),
            shape.iter().product::<usize>(),
            "reshape: element count mismatch"
        );
        let v = Tensor::from_vec(shape, t.data.clone());
        self.push(Op::Reshape { x }, v)
    }

    fn accum(grads: &mut [Option<Tensor>], v: Var, delta: Tensor) {
        match &mut grads[v.index()] {
            Some(g) => {
                for (a, b) in g.data.iter_mut().zip(&delta.data) {
                    *a += b;
                }
            }
            slot => *slot = Some(delta),
        }
    }

    /// Reverse sweep from a scalar loss. Gradients accumulate across calls.
    pub fn backward(&mut self, loss: Var) -> Result<(), NnError> {
        if !self.vals[loss.index()].is_scalar() {
            return Err(NnError::NonScalarBackward {
                shape: self.vals[loss.index()].shape.clone(),
            });
        }
        if self.grads.len() < self.ops.len() {
            self.grads.resize(self.ops.len(), None);
        }
        // Local adjoint buffer so repeated backward calls accumulate cleanly.
        let mut adj: Vec<Option<Tensor>> = vec![None; loss.index() + 1];
        adj[loss.index()] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.index()).rev() {
            let g = match adj[i].take() {
                Some(g) => g,
                None => continue,
            };
            match &self.ops[i] {
                Op::Leaf { requires_grad } => {
                    if *requires_grad {
                        Self::accum(&mut self.grads, Var(i as u32), g);
                    }
                }
                Op::Add(a, b) => {
                    Self::accum(&mut adj, *a, g.clone());
                    Self::accum(&mut adj, *b, g);
                }
                Op::Sub(a, b) => {
                    Self::accum(&mut adj, *a, g.clone());
                    let neg = g.map(|x| -x);
                    Self::accum(&mut adj, *b, neg);
                }
                Op::Mul(a, b) => {
                    let av = self.vals[a.index()].clone();
                    let bv = self.vals[b.index()].clone();
                    let da = Tensor {
                        shape: g.shape.clone(),
                        data: g.data.iter().zip(&bv.data).map(|(x, y)| x * y).collect(),
                    };
                    let db = Tensor {
                        shape: g.shape.clone(),
                        data: g.data.iter().zip(&av.data).map(|(x, y)| x * y).collect(),
                    };
                    Self::accum(&mut adj, *a, da);
                    Self::accum(&mut adj, *b, db);
                }
                Op::Div(a, b) => {
                    let av = self.vals[a.index()].clone();
                    let bv = self.vals[b.index()].clone();
                    let da = Tensor {
                        shape: g.shape.clone(),
                        data: g.data.iter().zip(&bv.data).map(|(x, y)| x / y).collect(),
                    };
                    let db = Tensor {
                        shape: g.shape.clone(),
                        data: g
                            .data
                            .iter()
                            .zip(av.data.iter().zip(&bv.data))
                            .map(|(x, (a, b))| -x * a / (b * b))
                            .collect(),
                    };
                    Self::accum(&mut adj, *a, da);
                    Self::accum(&mut adj, *b, db);
                }
                Op::Neg(a) => Self::accum(&mut adj, *a, g.map(|x| -x)),
                Op::Exp(a) => {
                    let out = &self.vals[i];
                    let da = Tensor {
                        shape: g.shape.clone(),
                        data: g.data.iter().zip(&out.data).map(|(x, y)| x * y).collect(),
                    };
                    Self::accum(&mut adj, *a, da);
                }
                Op::Ln(a) => {
                    let av = &self.vals[a.index()];
                    let da = Tensor {
                        shape: g.shape.clone(),
                        data: g.data.iter().zip(&av.data).map(|(x, y)| x / y).collect(),
                    };
                    Self::accum(&mut adj, *a, da);
                }
                Op::Sqrt(a) => {
                    let out = &self.vals[i];
                    let da = Tensor {
                        shape: g.shape.clone(),
                        data: g
                            .data
                            .iter()
                            .zip(&out.data)
                            .map(|(x, y)| x * 0.5 / y)
                            .collect(),
                    };
                    Self::accum(&mut adj, *a, da);
                }
                Op::Abs(a) => {
                    let av = &self.vals[a.index()];
                    let da = Tensor {
                        shape: g.shape.clone(),
                        data: g
                            .data
                            .iter()
                            .zip(&av.data)
                            .map(|(x, y)| x * sign_of(*y))
                            .collect(),
                    };
                    Self::accum(&mut adj, *a, da);
                }
                Op::Relu(a) => {
                    let av = &self.vals[a.index()];
                    let da = Tensor {
                        shape: g.shape.clone(),
                        data: g
                            .data
                            .iter()
                            .zip(&av.data)
                            .map(|(x, y)| if *y > 0.0 { *x } else { 0.0 })
                            .collect(),
                    };
                    Self::accum(&mut adj, *a, da);
                }
                Op::SoftplusBeta(a, beta) => {
                    let beta = *beta;
                    let av = &self.vals[a.index()];
                    let da = Tensor {
                        shape: g.shape.clone(),
                        data: g
                            .data
                            .iter()
                            .zip(&av.data)
                            .map(|(x, y)| x * sigmoid(beta * y))
                            .collect(),
                    };
                    Self::accum(&mut adj, *a, da);
                }
                Op::Sigmoid(a) => {
                    let out = &self.vals[i];
                    let da = Tensor {
                        shape: g.shape.clone(),
                        data: g
                            .data
                            .iter()
                            .zip(&out.data)
                            .map(|(x, y)| x * y * (1.0 - y))
                            .collect(),
                    };
                    Self::accum(&mut adj, *a, da);
                }
                Op::Tanh(a) => {
                    let out = &self.vals[i];
                    let da = Tensor {
                        shape: g.shape.clone(),
                        data: g
                            .data
                            .iter()
                            .zip(&out.data)
                            .map(|(x, y)| x * (1.0 - y * y))
                            .collect(),
                    };
                    Self::accum(&mut adj, *a, da);
                }
                Op::Sin(a) => {
                    let av = &self.vals[a.index()];
                    let da = Tensor {
                        shape: g.shape.clone(),
                        data: g
                            .data
                            .iter()
                            .zip(&av.data)
                            .map(|(x, y)| x * y.cos())
                            .collect(),
                    };
                    Self::accum(&mut adj, *a, da);
                }
                Op::Cos(a) => {
                    let av = &self.vals[a.index()];
                    let da = Tensor {
                        shape: g.shape.clone(),
                        data: g
                            .data
                            .iter()
                            .zip(&av.data)
                            .map(|(x, y)| -x * y.sin())
                            .collect(),
                    };
                    Self::accum(&mut adj, *a, da);
                }
                Op::Square(a) => {
                    let av = &self.vals[a.index()];
                    let da = Tensor {
                        shape: g.shape.clone(),
                        data: g
                            .data
                            .iter()
                            .zip(&av.data)
                            .map(|(x, y)| x * 2.0 * y)
                            .collect(),
                    };
                    Self::accum(&mut adj, *a, da);
                }
                Op::Recip(a) => {
                    let av = &self.vals[a.index()];
                    let da = Tensor {
                        shape: g.shape.clone(),
                        data: g
                            .data
                            .iter()
                            .zip(&av.data)
                            .map(|(x, y)| -x / (y * y))
                            .collect(),
                    };
                    Self::accum(&mut adj, *a, da);
                }
                Op::Sign(_) | Op::Step(_) => {}
                Op::AddScalar(a, _) => Self::accum(&mut adj, *a, g),
                Op::MulScalar(a, c) => {
                    let c = *c;
                    Self::accum(&mut adj, *a, g.map(|x| x * c));
                }
                Op::Linear { x, w, b } => {
                    let xv = self.vals[x.index()].clone();
                    let wv = self.vals[w.index()].clone();
                    // dx = g·w ; dw = gᵀ·x ; db = column sums of g
                    let dx = matmul(&g, &wv);
                    let dw = matmul_tn(&g, &xv);
                    let o = wv.rows();
                    let mut db = vec![0.0; o];
                    for r in 0..g.rows() {
                        let row = g.row(r);
                        for j in 0..o {
                            db[j] += row[j];
                        }
                    }
                    Self::accum(&mut adj, *x, dx);
                    Self::accum(&mut adj, *w, dw);
                    Self::accum(&mut adj, *b, Tensor::from_vec(&[o], db));
                }
                Op::ConcatCols(parts) => {
                    let parts = parts.clone();
                    let n = g.rows();
                    let mut off = 0;
                    for p in parts {
                        let c = self.vals[p.index()].cols();
                        let mut data = Vec::with_capacity(n * c);
                        for r in 0..n {
                            data.extend_from_slice(&g.row(r)[off..off + c]);
                        }
                        Self::accum(&mut adj, p, Tensor::from_vec(&[n, c], data));
                        off += c;
                    }
                }
                Op::SliceCols { x, from, to } => {
                    let (from, to) = (*from, *to);
                    let t = &self.vals[x.index()];
                    let (n, c) = (t.rows(), t.cols());
                    let mut data = vec![0.0; n * c];
                    for r in 0..n {
                        data[r * c + from..r * c + to].copy_from_slice(g.row(r));
                    }
                    Self::accum(&mut adj, *x, Tensor::from_vec(&[n, c], data));
                }
                Op::GatherRows { x, idx } => {
                    let idx = idx.clone();
                    let t = &self.vals[x.index()];
                    let (n, c) = (t.rows(), t.cols());
                    let mut data = vec![0.0; n * c];
                    for (r, &src) in idx.iter().enumerate() {
                        let grow = g.row(r);
                        let dst = &mut data[src * c..(src + 1) * c];
                        for j in 0..c {
                            dst[j] += grow[j];
                        }
                    }
                    Self::accum(&mut adj, *x, Tensor::from_vec(&[n, c], data));
                }
                Op::RepeatRow { x, n } => {
                    let c = g.cols();
                    let mut data = vec![0.0; c];
                    for r in 0..*n {
                        let row = g.row(r);
                        for j in 0..c {
                            data[j] += row[j];
                        }
                    }
                    Self::accum(&mut adj, *x, Tensor::from_vec(&[1, c], data));
                }
                Op::SumAll(a) => {
                    let t = &self.vals[a.index()];
                    let da = Tensor::filled(&t.shape, g.scalar_value());
                    Self::accum(&mut adj, *a, da);
                }
                Op::MeanAll(a) => {
                    let t = &self.vals[a.index()];
                    let da = Tensor::filled(&t.shape, g.scalar_value() / t.len() as f64);
                    Self::accum(&mut adj, *a, da);
                }
                Op::SumCols(a) => {
                    let t = &self.vals[a.index()];
                    let (n, c) = (t.rows(), t.cols());
                    let mut data = vec![0.0; n * c];
                    for r in 0..n {
                        let gv = g.data[r];
                        for j in 0..c {
                            data[r * c + j] = gv;
                        }
                    }
                    Self::accum(&mut adj, *a, Tensor::from_vec(&[n, c], data));
                }
                Op::MaxCols(a, arg) => {
                    let arg = arg.clone();
                    let t = &self.vals[a.index()];
                    let (n, c) = (t.rows(), t.cols());
                    let mut data = vec![0.0; n * c];
                    for (r, &am) in arg.iter().enumerate() {
                        data[r * c + am] = g.data[r];
                    }
                    Self::accum(&mut adj, *a, Tensor::from_vec(&[n, c], data));
                }
                Op::TakeColPerRow { x, cols } => {
                    let cols = cols.clone();
                    let t = &self.vals[x.index()];
                    let (n, c) = (t.rows(), t.cols());
                    let mut data = vec![0.0; n * c];
                    for (r, &cc) in cols.iter().enumerate() {
                        data[r * c + cc] = g.data[r];
                    }
                    Self::accum(&mut adj, *x, Tensor::from_vec(&[n, c], data));
                }
                Op::AddColBroadcast { x, c } => {
                    let n = g.rows();
                    let dc: Vec<f64> = (0..n).map(|r| g.row(r).iter().sum()).collect();
                    Self::accum(&mut adj, *x, g.clone());
                    Self::accum(&mut adj, *c, Tensor::from_vec(&[n, 1], dc));
                }
                Op::MulColBroadcast { x, c } => {
                    let xv = self.vals[x.index()].clone();
                    let cv = self.vals[c.index()].clone();
                    let (n, cols) = (xv.rows(), xv.cols());
                    let mut dx = vec![0.0; n * cols];
                    let mut dc = vec![0.0; n];
                    for r in 0..n {
                        let s = cv.data[r];
                        let grow = g.row(r);
                        let xrow = xv.row(r);
                        for j in 0..cols {
                            dx[r * cols + j] = grow[j] * s;
                            dc[r] += grow[j] * xrow[j];
                        }
                    }
                    Self::accum(&mut adj, *x, Tensor::from_vec(&[n, cols], dx));
                    Self::accum(&mut adj, *c, Tensor::from_vec(&[n, 1], dc));
                }
                Op::ExclusiveCumsumRows(a) => {
                    // y_i = Σ_{j<i} x_j  =>  dx_j = Σ_{i>j} g_i
                    let (n, s) = (g.rows(), g.cols());
                    let mut data = vec![0.0; n * s];
                    for r in 0..n {
                        let grow = g.row(r);
                        let mut acc = 0.0;
                        for i in (0..s).rev() {
                            data[r * s + i] = acc;
                            acc += grow[i];
                        }
                    }
                    Self::accum(&mut adj, *a, Tensor::from_vec(&[n, s], data));
                }
                Op::ScatterSumRows { x, idx, .. } => {
                    let idx = idx.clone();
                    let c = g.cols();
                    let mut data = Vec::with_capacity(idx.len() * c);
                    for &o in &idx {
                        data.extend_from_slice(g.row(o));
                    }
                    Self::accum(&mut adj, *x, Tensor::from_vec(&[idx.len(), c], data));
                }
                Op::Reshape { x } => {
                    let t = &self.vals[x.index()];
                    let da = Tensor::from_vec(&t.shape.clone(), g.data.clone());
                    Self::accum(&mut adj, *x, da);
                }
            }
        }
        Ok(())
    }

    /// Gradient of a parameter leaf after `backward`; zeros if never reached.
    pub fn grad(&self, v: Var) -> Tensor {
        match self.grads.get(v.index()).and_then(|g| g.as_ref()) {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.vals[v.index()].shape),
        }
    }

    pub fn clear_grads(&mut self) {
        self.grads.clear();
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

fn sign_of(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(build: impl Fn(&mut Tape, Var) -> Var, x0: Tensor, tol: f64) {
        let mut tape = Tape::new();
        let x = tape.param(x0.clone());
        let loss = build(&mut tape, x);
        tape.backward(loss).unwrap();
        let g = tape.grad(x);
        let h = 1e-6;
        for i in 0..x0.len() {
            let mut xp = x0.clone();
            xp.data[i] += h;
            let mut tp = Tape::new();
            let vp = tp.param(xp);
            let lp = build(&mut tp, vp);
            let mut xm = x0.clone();
            xm.data[i] -= h;
            let mut tm = Tape::new();
            let vm = tm.param(xm);
            let lm = build(&mut tm, vm);
            let fd = (tp.value(lp).scalar_value() - tm.value(lm).scalar_value()) / (2.0 * h);
            let err = (g.data[i] - fd).abs() / fd.abs().max(1.0);
            assert!(err < tol, "component {}: autodiff {} vs fd {}", i, g.data[i], fd);
        }
    }

    #[test]
    fn elementwise_chain() {
        let x0 = Tensor::from_vec(&[2, 3], vec![0.3, -0.4, 0.9, 1.3, -1.1, 0.2]);
        fd_check(
            |t, x| {
                let a = t.exp(x);
                let b = t.sin(a);
                let c = t.mul(b, a);
                let d = t.softplus_beta(c, 3.0);
                t.mean_all(d)
            },
            x0,
            1e-6,
        );
    }

    #[test]
    fn linear_and_concat() {
        let x0 = Tensor::from_vec(&[2, 2], vec![0.5, -0.2, 0.1, 0.8]);
        fd_check(
            |t, x| {
                let w = t.param(Tensor::from_vec(&[3, 4], (0..12).map(|i| 0.1 * i as f64 - 0.5).collect()));
                let b = t.param(Tensor::from_vec(&[3], vec![0.1, -0.2, 0.3]));
                let sq = t.square(x);
                let cat = t.concat_cols(&[x, sq]);
                let y = t.linear(cat, w, b);
                let y = t.tanh(y);
                t.sum_all(y)
            },
            x0,
            1e-6,
        );
    }

    #[test]
    fn reductions_and_broadcasts() {
        let x0 = Tensor::from_vec(&[3, 2], vec![0.5, 1.0, -0.4, 0.3, 2.0, -1.5]);
        fd_check(
            |t, x| {
                let m = t.max_cols(x);
                let s = t.sum_cols(x);
                let added = t.add_col_broadcast(x, m);
                let scaled = t.mul_col_broadcast(added, s);
                let flat = t.sum_cols(scaled);
                let c = t.exclusive_cumsum_rows(x);
                let cs = t.sum_all(c);
                let total = t.sum_all(flat);
                t.add(total, cs)
            },
            x0,
            1e-6,
        );
    }

    #[test]
    fn gather_scatter() {
        let x0 = Tensor::from_vec(&[4, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        fd_check(
            |t, x| {
                let g = t.gather_rows(x, &[2, 0, 2]);
                let s = t.scatter_sum_rows(g, &[1, 1, 0], 2);
                let sq = t.square(s);
                t.sum_all(sq)
            },
            x0,
            1e-6,
        );
    }

    #[test]
    fn backward_accumulates() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::scalar(3.0));
        let y = tape.square(x);
        tape.backward(y).unwrap();
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(x).scalar_value(), 12.0); // 2 * (2x)
    }

    #[test]
    fn non_scalar_backward_errors() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::from_vec(&[2], vec![1.0, 2.0]));
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn untouched_param_reads_zero() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::scalar(3.0));
        let unused = tape.param(Tensor::from_vec(&[2], vec![1.0, 1.0]));
        let y = tape.square(x);
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(unused).data, vec![0.0, 0.0]);
    }
}
