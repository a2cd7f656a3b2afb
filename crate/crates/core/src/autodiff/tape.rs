//! Reverse-mode automatic differentiation on a Wengert tape.
//!
//! Values are computed eagerly as operations are recorded, so a recorded
//! graph always carries its forward values. `backward` replays the tape in
//! reverse and accumulates gradients for every node, including leaves.
//!
//! All node values live in one flat arena (`buf`); each node stores an
//! offset and length into it. Gradients reuse the same layout, which keeps
//! a full backward pass to a single allocation.

use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`]. Only valid for the tape that created it
/// and only until that tape is cleared.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy)]
enum Op {
    Leaf,
    /// Elementwise a + b.
    Add(usize, usize),
    /// Elementwise a - b.
    Sub(usize, usize),
    /// Elementwise a * b (operands may alias).
    Mul(usize, usize),
    /// c * x for a constant c.
    Scale(usize, f64),
    /// x / c for a constant c. Kept distinct from Scale(1/c): true division
    /// is exact where multiplication by a rounded reciprocal is not.
    DivConst(usize, f64),
    /// x + c for a constant c; the constant is not needed for backward.
    AddConst(usize),
    Tanh(usize),
    /// Matrix-vector product W x, W row-major (m, n), x length n.
    MatVec(usize, usize),
    /// Transposed product W^T x, W row-major (m, n), x length m.
    MatVecT(usize, usize),
    /// [a; b] concatenation.
    Concat(usize, usize),
    /// Contiguous window of x starting at the stored offset.
    Slice(usize, usize),
    /// Scalar sum of all elements.
    Sum(usize),
    /// Scalar inner product (operands may alias).
    Dot(usize, usize),
}

#[derive(Debug, Clone, Copy)]
struct Meta {
    off: usize,
    len: usize,
    rows: usize,
    cols: usize,
}

/// Recorded computation with eagerly evaluated forward values.
#[derive(Debug, Default)]
pub struct Tape {
    ops: Vec<Op>,
    meta: Vec<Meta>,
    buf: Vec<f64>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drops all nodes but keeps allocated capacity for reuse.
    pub fn clear(&mut self) {
        self.ops.clear();
        self.meta.clear();
        self.buf.clear();
    }

    pub fn node_count(&self) -> usize {
        self.ops.len()
    }

    /// Forward value of a node.
    pub fn value(&self, v: Var) -> &[f64] {
        let m = self.meta[v.0];
        &self.buf[m.off..m.off + m.len]
    }

    /// (rows, cols) of a node; vectors are (len, 1).
    pub fn dims(&self, v: Var) -> (usize, usize) {
        let m = self.meta[v.0];
        (m.rows, m.cols)
    }

    pub fn len_of(&self, v: Var) -> usize {
        self.meta[v.0].len
    }

    fn push(&mut self, op: Op, len: usize, rows: usize, cols: usize) -> (Var, usize) {
        let off = self.buf.len();
        self.buf.resize(off + len, 0.0);
        self.ops.push(op);
        self.meta.push(Meta { off, len, rows, cols });
        (Var(self.ops.len() - 1), off)
    }

    /// Inserts a tensor as a leaf node.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        let (rows, cols) = t.dims2();
        let (v, off) = self.push(Op::Leaf, t.len(), rows, cols);
        self.buf[off..off + t.len()].copy_from_slice(t.data());
        v
    }

    /// Vector leaf straight from a slice.
    pub fn leaf_vector(&mut self, data: &[f64]) -> Var {
        let (v, off) = self.push(Op::Leaf, data.len(), data.len(), 1);
        self.buf[off..off + data.len()].copy_from_slice(data);
        v
    }

    /// Row-major matrix leaf straight from a slice.
    pub fn leaf_matrix(&mut self, rows: usize, cols: usize, data: &[f64]) -> Var {
        assert_eq!(rows * cols, data.len(), "matrix leaf data length mismatch");
        let (v, off) = self.push(Op::Leaf, data.len(), rows, cols);
        self.buf[off..off + data.len()].copy_from_slice(data);
        v
    }

    /// Single-element leaf.
    pub fn scalar(&mut self, value: f64) -> Var {
        self.leaf_vector(&[value])
    }

    fn binary_elementwise(&mut self, op: Op, a: Var, b: Var) -> Var {
        let (ma, mb) = (self.meta[a.0], self.meta[b.0]);
        assert_eq!(ma.len, mb.len, "elementwise operands must match in length");
        let (v, o) = self.push(op, ma.len, ma.rows, ma.cols);
        let (head, tail) = self.buf.split_at_mut(o);
        let (xa, xb) = (&head[ma.off..ma.off + ma.len], &head[mb.off..mb.off + mb.len]);
        match op {
            Op::Add(..) => {
                for i in 0..ma.len {
                    tail[i] = xa[i] + xb[i];
                }
            }
            Op::Sub(..) => {
                for i in 0..ma.len {
                    tail[i] = xa[i] - xb[i];
                }
            }
            Op::Mul(..) => {
                for i in 0..ma.len {
                    tail[i] = xa[i] * xb[i];
                }
            }
            _ => unreachable!(),
        }
        v
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary_elementwise(Op::Add(a.0, b.0), a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary_elementwise(Op::Sub(a.0, b.0), a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary_elementwise(Op::Mul(a.0, b.0), a, b)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let m = self.meta[x.0];
        let (v, o) = self.push(Op::Scale(x.0, c), m.len, m.rows, m.cols);
        let (head, tail) = self.buf.split_at_mut(o);
        let xs = &head[m.off..m.off + m.len];
        for i in 0..m.len {
            tail[i] = c * xs[i];
        }
        v
    }

    pub fn div_const(&mut self, x: Var, c: f64) -> Var {
        let m = self.meta[x.0];
        let (v, o) = self.push(Op::DivConst(x.0, c), m.len, m.rows, m.cols);
        let (head, tail) = self.buf.split_at_mut(o);
        let xs = &head[m.off..m.off + m.len];
        for i in 0..m.len {
            tail[i] = xs[i] / c;
        }
        v
    }

    pub fn add_const(&mut self, x: Var, c: f64) -> Var {
        let m = self.meta[x.0];
        let (v, o) = self.push(Op::AddConst(x.0), m.len, m.rows, m.cols);
        let (head, tail) = self.buf.split_at_mut(o);
        let xs = &head[m.off..m.off + m.len];
        for i in 0..m.len {
            tail[i] = xs[i] + c;
        }
        v
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let m = self.meta[x.0];
        let (v, o) = self.push(Op::Tanh(x.0), m.len, m.rows, m.cols);
        let (head, tail) = self.buf.split_at_mut(o);
        let xs = &head[m.off..m.off + m.len];
        for i in 0..m.len {
            tail[i] = xs[i].tanh();
        }
        v
    }

    /// y = W x with W of shape (m, n) and x of length n.
    pub fn matvec(&mut self, w: Var, x: Var) -> Var {
        let (mw, mx) = (self.meta[w.0], self.meta[x.0]);
        assert_eq!(mw.cols, mx.len, "matvec: W is {}x{}, x has length {}", mw.rows, mw.cols, mx.len);
        let (m, n) = (mw.rows, mw.cols);
        let (v, o) = self.push(Op::MatVec(w.0, x.0), m, m, 1);
        let (head, tail) = self.buf.split_at_mut(o);
        let ws = &head[mw.off..mw.off + m * n];
        let xs = &head[mx.off..mx.off + n];
        for i in 0..m {
            let row = &ws[i * n..(i + 1) * n];
            let mut acc = 0.0;
            for j in 0..n {
                acc += row[j] * xs[j];
            }
            tail[i] = acc;
        }
        v
    }

    /// y = W^T x with W of shape (m, n) and x of length m.
    pub fn matvec_t(&mut self, w: Var, x: Var) -> Var {
        let (mw, mx) = (self.meta[w.0], self.meta[x.0]);
        assert_eq!(mw.rows, mx.len, "matvec_t: W is {}x{}, x has length {}", mw.rows, mw.cols, mx.len);
        let (m, n) = (mw.rows, mw.cols);
        let (v, o) = self.push(Op::MatVecT(w.0, x.0), n, n, 1);
        let (head, tail) = self.buf.split_at_mut(o);
        let ws = &head[mw.off..mw.off + m * n];
        let xs = &head[mx.off..mx.off + m];
        for i in 0..m {
            let row = &ws[i * n..(i + 1) * n];
            let xi = xs[i];
            for j in 0..n {
                tail[j] += row[j] * xi;
            }
        }
        v
    }

    /// Vector concatenation [a; b].
    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let (ma, mb) = (self.meta[a.0], self.meta[b.0]);
        let len = ma.len + mb.len;
        let (v, o) = self.push(Op::Concat(a.0, b.0), len, len, 1);
        let (head, tail) = self.buf.split_at_mut(o);
        tail[..ma.len].copy_from_slice(&head[ma.off..ma.off + ma.len]);
        tail[ma.len..len].copy_from_slice(&head[mb.off..mb.off + mb.len]);
        v
    }

    /// Contiguous window x[start..start+len].
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Var {
        let m = self.meta[x.0];
        assert!(start + len <= m.len, "slice [{start}, {start}+{len}) out of bounds for length {}", m.len);
        let (v, o) = self.push(Op::Slice(x.0, start), len, len, 1);
        let (head, tail) = self.buf.split_at_mut(o);
        tail[..len].copy_from_slice(&head[m.off + start..m.off + start + len]);
        v
    }

    /// Scalar sum of all elements.
    pub fn sum(&mut self, x: Var) -> Var {
        let m = self.meta[x.0];
        let (v, o) = self.push(Op::Sum(x.0), 1, 1, 1);
        let (head, tail) = self.buf.split_at_mut(o);
        tail[0] = head[m.off..m.off + m.len].iter().sum();
        v
    }

    /// Scalar inner product of equal-length vectors (operands may alias).
    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let (ma, mb) = (self.meta[a.0], self.meta[b.0]);
        assert_eq!(ma.len, mb.len, "dot operands must match in length");
        let (v, o) = self.push(Op::Dot(a.0, b.0), 1, 1, 1);
        let (head, tail) = self.buf.split_at_mut(o);
        let (xa, xb) = (&head[ma.off..ma.off + ma.len], &head[mb.off..mb.off + mb.len]);
        let mut acc = 0.0;
        for i in 0..ma.len {
            acc += xa[i] * xb[i];
        }
        tail[0] = acc;
        v
    }

    /// Reverse pass from a scalar output. Returns per-node gradients.
    pub fn backward(&self, out: Var) -> Result<Gradients<'_>> {
        let mo = self.meta[out.0];
        if mo.len != 1 {
            return Err(Error::ShapeMismatch(format!(
                "backward requires a scalar output, got length {}",
                mo.len
            )));
        }
        let mut g = vec![0.0; self.buf.len()];
        g[mo.off] = 1.0;
        for id in (0..=out.0).rev() {
            let m = self.meta[id];
            let (go, len) = (m.off, m.len);
            match self.ops[id] {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    let (oa, ob) = (self.meta[a].off, self.meta[b].off);
                    for i in 0..len {
                        let gi = g[go + i];
                        g[oa + i] += gi;
                        g[ob + i] += gi;
                    }
                }
                Op::Sub(a, b) => {
                    let (oa, ob) = (self.meta[a].off, self.meta[b].off);
                    for i in 0..len {
                        let gi = g[go + i];
                        g[oa + i] += gi;
                        g[ob + i] -= gi;
                    }
                }
                Op::Mul(a, b) => {
                    let (oa, ob) = (self.meta[a].off, self.meta[b].off);
                    for i in 0..len {
                        let gi = g[go + i];
                        g[oa + i] += gi * self.buf[ob + i];
                        g[ob + i] += gi * self.buf[oa + i];
                    }
                }
                Op::Scale(x, c) => {
                    let ox = self.meta[x].off;
                    for i in 0..len {
                        g[ox + i] += c * g[go + i];
                    }
                }
                Op::DivConst(x, c) => {
                    let ox = self.meta[x].off;
                    for i in 0..len {
                        g[ox + i] += g[go + i] / c;
                    }
                }
                Op::AddConst(x) => {
                    let ox = self.meta[x].off;
                    for i in 0..len {
                        g[ox + i] += g[go + i];
                    }
                }
                Op::Tanh(x) => {
                    // Uses the stored output y: tanh'(z) = 1 - y^2.
                    let ox = self.meta[x].off;
                    for i in 0..len {
                        let y = self.buf[go + i];
                        g[ox + i] += g[go + i] * (1.0 - y * y);
                    }
                }
                Op::MatVec(w, x) => {
                    let (mw, mx) = (self.meta[w], self.meta[x]);
                    let (rows, cols) = (mw.rows, mw.cols);
                    for i in 0..rows {
                        let gi = g[go + i];
                        let wrow = mw.off + i * cols;
                        for j in 0..cols {
                            g[wrow + j] += gi * self.buf[mx.off + j];
                            g[mx.off + j] += gi * self.buf[wrow + j];
                        }
                    }
                }
                Op::MatVecT(w, x) => {
                    let (mw, mx) = (self.meta[w], self.meta[x]);
                    let (rows, cols) = (mw.rows, mw.cols);
                    for i in 0..rows {
                        let wrow = mw.off + i * cols;
                        let xi = self.buf[mx.off + i];
                        let mut acc = 0.0;
                        for j in 0..cols {
                            let gj = g[go + j];
                            g[wrow + j] += gj * xi;
                            acc += gj * self.buf[wrow + j];
                        }
                        g[mx.off + i] += acc;
                    }
                }
                Op::Concat(a, b) => {
                    let (ma, mb) = (self.meta[a], self.meta[b]);
                    for i in 0..ma.len {
                        g[ma.off + i] += g[go + i];
                    }
                    for i in 0..mb.len {
                        g[mb.off + i] += g[go + ma.len + i];
                    }
                }
                Op::Slice(x, start) => {
                    let mx = self.meta[x];
                    for i in 0..len {
                        g[mx.off + start + i] += g[go + i];
                    }
                }
                Op::Sum(x) => {
                    let mx = self.meta[x];
                    let gi = g[go];
                    for i in 0..mx.len {
                        g[mx.off + i] += gi;
                    }
                }
                Op::Dot(a, b) => {
                    let (ma, mb) = (self.meta[a], self.meta[b]);
                    let gi = g[go];
                    for i in 0..ma.len {
                        g[ma.off + i] += gi * self.buf[mb.off + i];
                        g[mb.off + i] += gi * self.buf[ma.off + i];
                    }
                }
            }
        }
        Ok(Gradients { tape: self, buf: g })
    }
}

/// Result of a backward pass; gradients share the tape's arena layout.
pub struct Gradients<'t> {
    tape: &'t Tape,
    buf: Vec<f64>,
}

impl Gradients<'_> {
    /// Gradient of the backward output with respect to `v`.
    pub fn wrt(&self, v: Var) -> &[f64] {
        let m = self.tape.meta[v.0];
        &self.buf[m.off..m.off + m.len]
    }
}
