//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] is built fresh for every forward pass. Nodes are appended in
//! evaluation order, so the tape is topologically sorted by construction and
//! [`Graph::backward`] is a single reverse sweep. Shapes must match exactly;
//! the only broadcasting is tensor-by-constant-scalar and the explicit
//! [`Graph::add_bias`].
//!
//! Ops accept an arbitrary number of leading (batch) axes where that is
//! meaningful, so the same graph code serves a single sequence or a minibatch.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::linalg;
use crate::tensor::Tensor;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    Tanh(Var),
    Abs(Var),
    Sqrt(Var),
    Sum(Var),
    Mean(Var),
    Concat(Vec<Var>),
    Slice { src: Var, start: usize },
    TensorDot(Var, Var),
    TensorDotInput(Var, Var),
    Design(Var, Var),
    BatchMatVec(Var, Var),
    Ridge { a: Var, b: Var, factors: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, or `None` if `v` does not
    /// influence the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Like [`Gradients::get`] but yields zeros for disconnected nodes.
    pub fn wrt(&self, v: Var) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[v.0]))
    }
}

fn split_last2(shape: &[usize]) -> Option<(&[usize], usize, usize)> {
    let n = shape.len();
    (n >= 2).then(|| (&shape[..n - 2], shape[n - 2], shape[n - 1]))
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + crate::math::exp(-x))
    } else {
        let e = crate::math::exp(x);
        e / (1.0 + e)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return shape_err(op, self.shape(a), self.shape(b));
        }
        Ok(())
    }

    fn zip(&mut self, a: Var, b: Var, op: Op, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let va = self.value(a);
        let vb = self.value(b);
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::from_parts(va.shape().to_vec(), data);
        Ok(self.push(out, op, &[a, b]))
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let out = self.value(a).map(f);
        self.push(out, op, &[a])
    }

    /// Matrix product of `a` (R x K) with `b` (K x N, or a K-vector).
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.is_empty() || sb.len() > 2 || sa[1] != sb[0] {
            return shape_err("matmul", sa, sb);
        }
        let (r, k) = (sa[0], sa[1]);
        let n = if sb.len() == 2 { sb[1] } else { 1 };
        let out_shape = if sb.len() == 2 { vec![r, n] } else { vec![r] };
        let mut out = vec![0.0; r * n];
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        if n == 1 {
            for (row, o) in out.iter_mut().enumerate() {
                *o = linalg::dot(&va[row * k..(row + 1) * k], vb);
            }
        } else {
            linalg::matmul_acc(va, vb, r, k, n, &mut out);
        }
        Ok(self.push(Tensor::from_parts(out_shape, out), Op::MatMul(a, b), &[a, b]))
    }

    /// `a · bᵀ` where `a` is (..., K) and `b` is (N x K); yields (..., N).
    /// With `b` a weight matrix stored as (out x in) this is the batched
    /// row-vector form of `W x`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.is_empty() || sb.len() != 2 || sa[sa.len() - 1] != sb[1] {
            return shape_err("matmul_t", sa, sb);
        }
        let (n, k) = (sb[0], sb[1]);
        let rows = self.value(a).leading();
        let mut shape = sa.to_vec();
        *shape.last_mut().unwrap() = n;
        let mut out = vec![0.0; rows * n];
        linalg::matmul_t(self.value(a).data(), self.value(b).data(), rows, k, n, &mut out);
        Ok(self.push(Tensor::from_parts(shape, out), Op::MatMulT(a, b), &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Add(a, b), "add", |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Sub(a, b), "sub", |x, y| x - y)
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Hadamard(a, b), "hadamard", |x, y| x * y)
    }

    /// Adds `bias` to every trailing block of `x`; `bias.shape` must equal the
    /// trailing axes of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(bias));
        if sb.len() > sx.len() || sx[sx.len() - sb.len()..] != *sb {
            return shape_err("add_bias", sx, sb);
        }
        let vb = self.value(bias).data();
        let block = vb.len().max(1);
        let mut out = self.value(x).clone();
        for chunk in out.data_mut().chunks_mut(block) {
            for (o, &b) in chunk.iter_mut().zip(vb) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddBias(x, bias), &[x, bias]))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, Op::Scale(a, s), |x| x * s)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, Op::AddScalar(a), |x| x + s)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), crate::math::tanh)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, Op::Abs(a), f64::abs)
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        if let Some(&bad) = self.value(a).data().iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::Domain { op: "sqrt", value: bad });
        }
        Ok(self.unary(a, Op::Sqrt(a), crate::math::sqrt))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        if v.is_empty() {
            return Err(Error::EmptySequence);
        }
        let m = v.data().iter().sum::<f64>() / v.len() as f64;
        Ok(self.push(Tensor::scalar(m), Op::Mean(a), &[a]))
    }

    /// Concatenates along the last axis; all other axes must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(Error::EmptySequence)?;
        let s0 = self.shape(first).to_vec();
        if s0.is_empty() {
            return shape_err("concat", &s0, &[]);
        }
        let lead = &s0[..s0.len() - 1];
        let mut total = 0;
        for &p in parts {
            let sp = self.shape(p);
            if sp.len() != s0.len() || sp[..sp.len() - 1] != *lead {
                return shape_err("concat", &s0, sp);
            }
            total += sp[sp.len() - 1];
        }
        let rows: usize = lead.iter().product();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                let v = self.value(p);
                let w = v.last_dim();
                data.extend_from_slice(&v.data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        Ok(self.push(Tensor::from_parts(shape, data), Op::Concat(parts.to_vec()), parts))
    }

    /// Columns `start..start + len` of the last axis.
    pub fn slice(&mut self, src: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(src);
        let w = *s.last().unwrap_or(&0);
        if s.is_empty() || start + len > w {
            return shape_err("slice", s, &[start, len]);
        }
        let mut shape = s.to_vec();
        *shape.last_mut().unwrap() = len;
        let v = self.value(src);
        let data = v
            .data()
            .chunks(w)
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        Ok(self.push(Tensor::from_parts(shape, data), Op::Slice { src, start }, &[src]))
    }

    /// Per-variable product along the variable axis: `u` is (D x M x M),
    /// `h` is (..., D, M); row `d` of the result is `u[d] · h[.., d, :]`.
    pub fn tensor_dot(&mut self, u: Var, h: Var) -> Result<Var> {
        let (su, sh) = (self.shape(u), self.shape(h));
        let ok = su.len() == 3 && su[1] == su[2] && split_last2(sh).is_some_and(|(_, d, m)| d == su[0] && m == su[1]);
        if !ok {
            return shape_err("tensor_dot", su, sh);
        }
        let (d, m) = (su[0], su[1]);
        let (vu, vh) = (self.value(u).data(), self.value(h).data());
        let batch = vh.len() / (d * m);
        let mut out = vec![0.0; vh.len()];
        let mut hk = vec![0.0; batch * m];
        let mut ok = vec![0.0; batch * m];
        for k in 0..d {
            gather_rows(vh, k, d, m, &mut hk);
            ok.iter_mut().for_each(|v| *v = 0.0);
            let umat_t = linalg::transpose(&vu[k * m * m..(k + 1) * m * m], m, m);
            linalg::matmul_acc(&hk, &umat_t, batch, m, m, &mut ok);
            scatter_rows(&ok, k, d, m, &mut out);
        }
        let shape = sh.to_vec();
        Ok(self.push(Tensor::from_parts(shape, out), Op::TensorDot(u, h), &[u, h]))
    }

    /// Per-variable input projection: `w` is (D x M), `x` is (..., D);
    /// yields (..., D, M) with row `d` equal to `w[d] * x[.., d]`.
    pub fn tensor_dot_input(&mut self, w: Var, x: Var) -> Result<Var> {
        let (sw, sx) = (self.shape(w), self.shape(x));
        if sw.len() != 2 || sx.is_empty() || sx[sx.len() - 1] != sw[0] {
            return shape_err("tensor_dot_input", sw, sx);
        }
        let (d, m) = (sw[0], sw[1]);
        let mut shape = sx.to_vec();
        shape.push(m);
        let (vw, vx) = (self.value(w).data(), self.value(x).data());
        let mut out = Vec::with_capacity(vx.len() * m);
        for (i, &xv) in vx.iter().enumerate() {
            let k = i % d;
            out.extend(vw[k * m..(k + 1) * m].iter().map(|&wv| wv * xv));
        }
        Ok(self.push(Tensor::from_parts(shape, out), Op::TensorDotInput(w, x), &[w, x]))
    }

    /// Least-squares design matrix `[h_prevᵀ | deltaᵀ]`: both inputs are
    /// (..., D, M); the result is (..., M, 2D).
    pub fn design(&mut self, h_prev: Var, delta: Var) -> Result<Var> {
        self.same_shape("design", h_prev, delta)?;
        let sh = self.shape(h_prev);
        let Some((lead, d, m)) = split_last2(sh) else {
            return shape_err("design", sh, &[]);
        };
        let mut shape = lead.to_vec();
        shape.extend([m, 2 * d]);
        let (vp, vd) = (self.value(h_prev).data(), self.value(delta).data());
        let batch = vp.len() / (d * m);
        let mut out = vec![0.0; vp.len() * 2];
        for b in 0..batch {
            let base = b * d * m;
            for row in 0..m {
                let orow = &mut out[(b * m + row) * 2 * d..(b * m + row + 1) * 2 * d];
                for j in 0..d {
                    orow[j] = vp[base + j * m + row];
                    orow[d + j] = vd[base + j * m + row];
                }
            }
        }
        Ok(self.push(Tensor::from_parts(shape, out), Op::Design(h_prev, delta), &[h_prev, delta]))
    }

    /// `a` (..., M, P) times `c` (..., P) per batch entry; yields (..., M).
    pub fn batch_matvec(&mut self, a: Var, c: Var) -> Result<Var> {
        let (sa, sc) = (self.shape(a), self.shape(c));
        let Some((lead, m, p)) = split_last2(sa) else {
            return shape_err("batch_matvec", sa, sc);
        };
        if sc.len() != sa.len() - 1 || sc[..sc.len() - 1] != *lead || sc[sc.len() - 1] != p {
            return shape_err("batch_matvec", sa, sc);
        }
        let mut shape = lead.to_vec();
        shape.push(m);
        let (va, vc) = (self.value(a).data(), self.value(c).data());
        let batch = vc.len() / p;
        let mut out = vec![0.0; batch * m];
        for b in 0..batch {
            let cv = &vc[b * p..(b + 1) * p];
            for r in 0..m {
                out[b * m + r] = linalg::dot(&va[(b * m + r) * p..(b * m + r + 1) * p], cv);
            }
        }
        Ok(self.push(Tensor::from_parts(shape, out), Op::BatchMatVec(a, c), &[a, c]))
    }

    /// Ridge least squares: per batch entry returns `c` minimizing
    /// `‖A c − b‖² + λ‖c‖²`, via Cholesky on `AᵀA + λI`.
    ///
    /// `a` is (..., M, P) and `b` is (..., M). Gradients are taken by implicit
    /// differentiation through the same factorization.
    pub fn ridge_solve(&mut self, a: Var, b: Var, lambda: f64) -> Result<Var> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::Domain { op: "ridge_solve lambda", value: lambda });
        }
        let (sa, sb) = (self.shape(a), self.shape(b));
        let Some((lead, m, p)) = split_last2(sa) else {
            return shape_err("ridge_solve", sa, sb);
        };
        if m == 0 || p == 0 || sb.len() != sa.len() - 1 || sb[..sb.len() - 1] != *lead || sb[sb.len() - 1] != m {
            return shape_err("ridge_solve", sa, sb);
        }
        let mut shape = lead.to_vec();
        shape.push(p);
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        let batch = vb.len() / m;
        let mut factors = vec![0.0; batch * p * p];
        let mut sol = vec![0.0; batch * p];
        for k in 0..batch {
            let ak = &va[k * m * p..(k + 1) * m * p];
            let bk = &vb[k * m..(k + 1) * m];
            let l = &mut factors[k * p * p..(k + 1) * p * p];
            linalg::regularized_gram(ak, m, p, lambda, l);
            linalg::cholesky(l, p)?;
            let x = &mut sol[k * p..(k + 1) * p];
            linalg::matmul_tn_acc(ak, bk, m, p, 1, x);
            linalg::cholesky_solve(l, p, x);
        }
        Ok(self.push(Tensor::from_parts(shape, sol), Op::Ridge { a, b, factors }, &[a, b]))
    }

    /// Reverse sweep from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let ls = self.value(loss);
        if ls.len() != 1 {
            return Err(Error::NonScalarLoss(ls.shape().to_vec()));
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(ls.shape(), 1.0));
        for i in (0..n).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        // Only nodes that can carry gradient keep one.
        for (g, node) in grads.iter_mut().zip(&self.nodes) {
            if !node.requires_grad {
                *g = None;
            }
        }
        Ok(Gradients { grads, shapes })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let gd = g.data();
        let out = node.value.data();
        let mut acc = |v: Var, f: &dyn Fn(&mut [f64])| {
            if !self.wants(v) {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| Tensor::zeros(self.shape(v)));
            f(slot.data_mut());
        };
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(a), self.shape(b));
                let (r, k) = (sa[0], sa[1]);
                let n = if sb.len() == 2 { sb[1] } else { 1 };
                let (va, vb) = (self.value(a).data(), self.value(b).data());
                acc(a, &|ga| {
                    // g · bᵀ
                    for row in 0..r {
                        for kk in 0..k {
                            ga[row * k + kk] += linalg::dot(&gd[row * n..(row + 1) * n], &vb[kk * n..(kk + 1) * n]);
                        }
                    }
                });
                acc(b, &|gb| linalg::matmul_tn_acc(va, gd, r, k, n, gb));
            }
            &Op::MatMulT(a, b) => {
                let sb = self.shape(b);
                let (n, k) = (sb[0], sb[1]);
                let rows = self.value(a).leading();
                let (va, vb) = (self.value(a).data(), self.value(b).data());
                acc(a, &|ga| linalg::matmul_acc(gd, vb, rows, n, k, ga));
                acc(b, &|gb| linalg::matmul_tn_acc(gd, va, rows, n, k, gb));
            }
            &Op::Add(a, b) => {
                acc(a, &|ga| add_into(ga, gd));
                acc(b, &|gb| add_into(gb, gd));
            }
            &Op::Sub(a, b) => {
                acc(a, &|ga| add_into(ga, gd));
                acc(b, &|gb| gb.iter_mut().zip(gd).for_each(|(o, g)| *o -= g));
            }
            &Op::Hadamard(a, b) => {
                let (va, vb) = (self.value(a).data(), self.value(b).data());
                acc(a, &|ga| ga.iter_mut().zip(gd).zip(vb).for_each(|((o, g), y)| *o += g * y));
                acc(b, &|gb| gb.iter_mut().zip(gd).zip(va).for_each(|((o, g), x)| *o += g * x));
            }
            &Op::AddBias(x, bias) => {
                acc(x, &|gx| add_into(gx, gd));
                let block = self.value(bias).len().max(1);
                acc(bias, &|gb| {
                    for chunk in gd.chunks(block) {
                        add_into(gb, chunk);
                    }
                });
            }
            &Op::Scale(a, s) => acc(a, &|ga| ga.iter_mut().zip(gd).for_each(|(o, g)| *o += g * s)),
            &Op::AddScalar(a) => acc(a, &|ga| add_into(ga, gd)),
            &Op::Sigmoid(a) => acc(a, &|ga| {
                ga.iter_mut().zip(gd).zip(out).for_each(|((o, g), y)| *o += g * y * (1.0 - y))
            }),
            &Op::Tanh(a) => acc(a, &|ga| {
                ga.iter_mut().zip(gd).zip(out).for_each(|((o, g), y)| *o += g * (1.0 - y * y))
            }),
            &Op::Abs(a) => {
                let va = self.value(a).data();
                acc(a, &|ga| {
                    ga.iter_mut().zip(gd).zip(va).for_each(|((o, g), x)| {
                        if *x > 0.0 {
                            *o += g;
                        } else if *x < 0.0 {
                            *o -= g;
                        }
                    })
                })
            }
            &Op::Sqrt(a) => acc(a, &|ga| {
                ga.iter_mut().zip(gd).zip(out).for_each(|((o, g), y)| {
                    // Subgradient 0 at the origin.
                    if *y > 0.0 {
                        *o += g * 0.5 / y;
                    }
                })
            }),
            &Op::Sum(a) => acc(a, &|ga| ga.iter_mut().for_each(|o| *o += gd[0])),
            &Op::Mean(a) => {
                let n = self.value(a).len() as f64;
                acc(a, &|ga| ga.iter_mut().for_each(|o| *o += gd[0] / n))
            }
            Op::Concat(parts) => {
                let total = node.value.last_dim();
                let rows = node.value.leading();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).last_dim();
                    acc(p, &|gp| {
                        for r in 0..rows {
                            add_into(&mut gp[r * w..(r + 1) * w], &gd[r * total + offset..r * total + offset + w]);
                        }
                    });
                    offset += w;
                }
            }
            &Op::Slice { src, start } => {
                let w = self.value(src).last_dim();
                let len = node.value.last_dim();
                acc(src, &|gs| {
                    for (r, grow) in gd.chunks(len.max(1)).enumerate() {
                        add_into(&mut gs[r * w + start..r * w + start + len], grow);
                    }
                });
            }
            &Op::TensorDot(u, h) => {
                let su = self.shape(u);
                let (d, m) = (su[0], su[1]);
                let (vu, vh) = (self.value(u).data(), self.value(h).data());
                let batch = vh.len() / (d * m);
                acc(u, &|gu| {
                    let (mut gk, mut hk) = (vec![0.0; batch * m], vec![0.0; batch * m]);
                    for k in 0..d {
                        gather_rows(gd, k, d, m, &mut gk);
                        gather_rows(vh, k, d, m, &mut hk);
                        linalg::matmul_tn_acc(&gk, &hk, batch, m, m, &mut gu[k * m * m..(k + 1) * m * m]);
                    }
                });
                acc(h, &|gh| {
                    let (mut gk, mut hk) = (vec![0.0; batch * m], vec![0.0; batch * m]);
                    for k in 0..d {
                        gather_rows(gd, k, d, m, &mut gk);
                        hk.iter_mut().for_each(|v| *v = 0.0);
                        linalg::matmul_acc(&gk, &vu[k * m * m..(k + 1) * m * m], batch, m, m, &mut hk);
                        for b in 0..batch {
                            let row = (b * d + k) * m;
                            add_into(&mut gh[row..row + m], &hk[b * m..(b + 1) * m]);
                        }
                    }
                });
            }
            &Op::TensorDotInput(w, x) => {
                let sw = self.shape(w);
                let (d, m) = (sw[0], sw[1]);
                let (vw, vx) = (self.value(w).data(), self.value(x).data());
                acc(w, &|gw| {
                    for (i, &xv) in vx.iter().enumerate() {
                        let k = i % d;
                        for (o, &g) in gw[k * m..(k + 1) * m].iter_mut().zip(&gd[i * m..(i + 1) * m]) {
                            *o += g * xv;
                        }
                    }
                });
                acc(x, &|gx| {
                    for (i, o) in gx.iter_mut().enumerate() {
                        let k = i % d;
                        *o += linalg::dot(&gd[i * m..(i + 1) * m], &vw[k * m..(k + 1) * m]);
                    }
                });
            }
            &Op::Design(hp, dl) => {
                let (_, d, m) = split_last2(self.shape(hp)).unwrap();
                let batch = self.value(hp).len() / (d * m);
                let scatter = |dst: &mut [f64], col0: usize| {
                    for b in 0..batch {
                        for row in 0..m {
                            let grow = &gd[(b * m + row) * 2 * d..(b * m + row + 1) * 2 * d];
                            for j in 0..d {
                                dst[b * d * m + j * m + row] += grow[col0 + j];
                            }
                        }
                    }
                };
                acc(hp, &|g| scatter(g, 0));
                acc(dl, &|g| scatter(g, d));
            }
            &Op::BatchMatVec(a, c) => {
                let (_, m, p) = split_last2(self.shape(a)).unwrap();
                let (va, vc) = (self.value(a).data(), self.value(c).data());
                let batch = vc.len() / p;
                acc(a, &|ga| {
                    for b in 0..batch {
                        for r in 0..m {
                            let g = gd[b * m + r];
                            for (o, &cv) in ga[(b * m + r) * p..(b * m + r + 1) * p].iter_mut().zip(&vc[b * p..(b + 1) * p]) {
                                *o += g * cv;
                            }
                        }
                    }
                });
                acc(c, &|gc| {
                    for b in 0..batch {
                        linalg::matmul_tn_acc(&va[b * m * p..(b + 1) * m * p], &gd[b * m..(b + 1) * m], m, p, 1, &mut gc[b * p..(b + 1) * p]);
                    }
                });
            }
            Op::Ridge { a, b, factors } => {
                let (a, b) = (*a, *b);
                let (_, m, p) = split_last2(self.shape(a)).unwrap();
                let (va, vb) = (self.value(a).data(), self.value(b).data());
                let batch = vb.len() / m;
                // v = G⁻¹ ḡ, Av, and the residual r = b − Ac per batch entry.
                let mut v = gd.to_vec();
                let mut av = vec![0.0; batch * m];
                let mut resid = vb.to_vec();
                for k in 0..batch {
                    let ak = &va[k * m * p..(k + 1) * m * p];
                    linalg::cholesky_solve(&factors[k * p * p..(k + 1) * p * p], p, &mut v[k * p..(k + 1) * p]);
                    for r in 0..m {
                        let arow = &ak[r * p..(r + 1) * p];
                        av[k * m + r] = linalg::dot(arow, &v[k * p..(k + 1) * p]);
                        resid[k * m + r] -= linalg::dot(arow, &out[k * p..(k + 1) * p]);
                    }
                }
                acc(b, &|gb| add_into(gb, &av));
                acc(a, &|ga| {
                    // ∂L/∂A = r vᵀ − (A v) cᵀ
                    for k in 0..batch {
                        for r in 0..m {
                            let (rr, avr) = (resid[k * m + r], av[k * m + r]);
                            let grow = &mut ga[(k * m + r) * p..(k * m + r + 1) * p];
                            for j in 0..p {
                                grow[j] += rr * v[k * p + j] - avr * out[k * p + j];
                            }
                        }
                    }
                });
            }
        }
    }
}

/// Copies row `k` of every (D x M) block in `src` into consecutive rows of `dst`.
fn gather_rows(src: &[f64], k: usize, d: usize, m: usize, dst: &mut [f64]) {
    for (b, out) in dst.chunks_mut(m).enumerate() {
        out.copy_from_slice(&src[(b * d + k) * m..(b * d + k + 1) * m]);
    }
}

/// Inverse of [`gather_rows`].
fn scatter_rows(src: &[f64], k: usize, d: usize, m: usize, dst: &mut [f64]) {
    for (b, row) in src.chunks(m).enumerate() {
        dst[(b * d + k) * m..(b * d + k + 1) * m].copy_from_slice(row);
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (o, s) in dst.iter_mut().zip(src) {
        *o += s;
    }
}
