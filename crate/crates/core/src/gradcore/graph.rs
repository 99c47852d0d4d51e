use super::params::{Gradients, ParamId, ParamStore};
use super::{GradError, Scalar, Tensor};

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<S> {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, S),
    AddScalar(Var),
    Softplus(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Square(Var),
    Sum(Var),
    RowSum(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    CrossEntropy(Var, Vec<usize>),
}

struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    param: Option<ParamId>,
}

/// Tape of one loss evaluation. Parameters are read from the borrowed store
/// and bound lazily; the tape is dropped after `backward`.
pub struct Graph<'p, S> {
    store: &'p ParamStore<S>,
    nodes: Vec<Node<S>>,
    bound: Vec<Option<Var>>,
}

fn shape_err(op: &'static str, detail: String) -> GradError {
    GradError::Shape { op, detail }
}

impl<'p, S: Scalar> Graph<'p, S> {
    pub fn new(store: &'p ParamStore<S>) -> Self {
        Self {
            store,
            nodes: Vec::with_capacity(1024),
            bound: vec![None; store.len()],
        }
    }

    pub fn store(&self) -> &'p ParamStore<S> {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>) -> Var {
        self.nodes.push(Node {
            value,
            op,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn item(&self, v: Var) -> S {
        self.nodes[v.0].value.item()
    }

    pub fn constant(&mut self, t: Tensor<S>) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Copy of `v`'s value with no path back to its inputs.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.nodes[v.0].value.clone();
        self.constant(t)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let v = self.push(self.store.get(id).clone(), Op::Leaf);
        self.nodes[v.0].param = Some(id);
        self.bound[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, GradError> {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k, n) = (av.rows(), av.cols(), bv.cols());
        if bv.rows() != k {
            return Err(shape_err(
                "matmul",
                format!("[{m}x{k}] . [{}x{n}]", bv.rows()),
            ));
        }
        let mut out = vec![S::zero(); m * n];
        let (a_s, b_s) = (av.values(), bv.values());
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let aip = a_s[i * k + p];
                if aip == S::zero() {
                    continue;
                }
                let brow = &b_s[p * n..(p + 1) * n];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += aip * b;
                }
            }
        }
        let t = Tensor::matrix(m, n, out)?;
        Ok(self.push(t, Op::MatMul(a, b)))
    }

    /// `a + b` where `b` is a single row broadcast over the rows of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var, GradError> {
        let (av, bv) = (self.value(a), self.value(b));
        if bv.rows() != 1 || bv.cols() != av.cols() {
            return Err(shape_err(
                "add_row",
                format!(
                    "[{}x{}] + [{}x{}]",
                    av.rows(),
                    av.cols(),
                    bv.rows(),
                    bv.cols()
                ),
            ));
        }
        let n = av.cols();
        let bs = bv.values();
        let vals = av
            .values()
            .iter()
            .enumerate()
            .map(|(i, &x)| x + bs[i % n])
            .collect();
        let t = Tensor::matrix(av.rows(), n, vals)?;
        Ok(self.push(t, Op::AddRow(a, b)))
    }

    /// `a ⊙ b` where `b` is a single row broadcast over the rows of `a`.
    pub fn mul_row(&mut self, a: Var, b: Var) -> Result<Var, GradError> {
        let (av, bv) = (self.value(a), self.value(b));
        if bv.rows() != 1 || bv.cols() != av.cols() {
            return Err(shape_err(
                "mul_row",
                format!(
                    "[{}x{}] * [{}x{}]",
                    av.rows(),
                    av.cols(),
                    bv.rows(),
                    bv.cols()
                ),
            ));
        }
        let n = av.cols();
        let bs = bv.values();
        let vals = av
            .values()
            .iter()
            .enumerate()
            .map(|(i, &x)| x * bs[i % n])
            .collect();
        let t = Tensor::matrix(av.rows(), n, vals)?;
        Ok(self.push(t, Op::MulRow(a, b)))
    }

    fn zip(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(S, S) -> S,
    ) -> Result<Tensor<S>, GradError> {
        let (av, bv) = (self.value(a), self.value(b));
        if !av.same_shape(bv) {
            return Err(shape_err(
                name,
                format!(
                    "[{}x{}] vs [{}x{}]",
                    av.rows(),
                    av.cols(),
                    bv.rows(),
                    bv.cols()
                ),
            ));
        }
        let vals = av
            .values()
            .iter()
            .zip(bv.values())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::matrix(av.rows(), av.cols(), vals)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, GradError> {
        let t = self.zip(a, b, "add", |x, y| x + y)?;
        Ok(self.push(t, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, GradError> {
        let t = self.zip(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(t, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, GradError> {
        let t = self.zip(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(t, Op::Mul(a, b)))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, GradError> {
        let t = self.zip(a, b, "div", |x, y| x / y)?;
        Ok(self.push(t, Op::Div(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: S) -> Var {
        let t = self.value(a).map(|x| x * c);
        self.push(t, Op::Scale(a, c))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -S::one())
    }

    pub fn add_scalar(&mut self, a: Var, c: S) -> Var {
        let t = self.value(a).map(|x| x + c);
        self.push(t, Op::AddScalar(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let t = self.value(a).map(Scalar::softplus);
        self.push(t, Op::Softplus(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let t = self.value(a).map(Scalar::sigmoid);
        self.push(t, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| x.tanh());
        self.push(t, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| x.exp());
        self.push(t, Op::Exp(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| x * x);
        self.push(t, Op::Square(a))
    }

    /// Sum of every element, as a 1x1 tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).values().iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// Per-row sum: `[m x n] -> [m x 1]`.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let vals = (0..av.rows())
            .map(|r| av.row_slice(r).iter().copied().sum())
            .collect();
        self.push(Tensor::column(vals), Op::RowSum(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, GradError> {
        let rows = self.value(parts[0]).rows();
        let mut cols = 0;
        for &p in parts {
            let pv = self.value(p);
            if pv.rows() != rows {
                return Err(shape_err(
                    "concat_cols",
                    format!("row count {} vs {rows}", pv.rows()),
                ));
            }
            cols += pv.cols();
        }
        let mut vals = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                vals.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        let t = Tensor::matrix(rows, cols, vals)?;
        Ok(self.push(t, Op::ConcatCols(parts.to_vec())))
    }

    /// Columns `start..end` of `a`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var, GradError> {
        let av = self.value(a);
        if start >= end || end > av.cols() {
            return Err(shape_err(
                "slice_cols",
                format!("{start}..{end} of {} columns", av.cols()),
            ));
        }
        let mut vals = Vec::with_capacity(av.rows() * (end - start));
        for r in 0..av.rows() {
            vals.extend_from_slice(&av.row_slice(r)[start..end]);
        }
        let t = Tensor::matrix(av.rows(), end - start, vals)?;
        Ok(self.push(t, Op::SliceCols(a, start)))
    }

    /// Summed softmax cross-entropy of each logit row against its target class.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var, GradError> {
        let lv = self.value(logits);
        let k = lv.cols();
        if targets.len() != lv.rows() || targets.iter().any(|&t| t >= k) {
            return Err(shape_err(
                "cross_entropy",
                format!("{} targets for {}x{k} logits", targets.len(), lv.rows()),
            ));
        }
        let mut total = S::zero();
        for (r, &t) in targets.iter().enumerate() {
            let row = lv.row_slice(r);
            total += log_sum_exp(row) - row[t];
        }
        Ok(self.push(
            Tensor::scalar(total),
            Op::CrossEntropy(logits, targets.to_vec()),
        ))
    }

    /// Reverse-mode sweep from a scalar loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients<S>, GradError> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(GradError::Argument(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<S>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![S::one()]);
        let mut out = Gradients::zeros_like(self.store).into_vec();

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if let Some(pid) = node.param {
                for (o, v) in out[pid.0].values_mut().iter_mut().zip(&g) {
                    *o += *v;
                }
                continue;
            }
            self.propagate(node, &g, &mut grads);
        }
        Ok(Gradients::from_vec(out))
    }

    fn propagate(&self, node: &Node<S>, g: &[S], grads: &mut [Option<Vec<S>>]) {
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                let (a_s, b_s) = (av.values(), bv.values());
                // dA = dC . B^T
                let ga = acc(grads, *a, m * k);
                for i in 0..m {
                    let grow = &g[i * n..(i + 1) * n];
                    for p in 0..k {
                        let brow = &b_s[p * n..(p + 1) * n];
                        let mut s = S::zero();
                        for (x, y) in grow.iter().zip(brow) {
                            s += *x * *y;
                        }
                        ga[i * k + p] += s;
                    }
                }
                // dB = A^T . dC
                let gb = acc(grads, *b, k * n);
                for i in 0..m {
                    let grow = &g[i * n..(i + 1) * n];
                    for p in 0..k {
                        let aip = a_s[i * k + p];
                        if aip == S::zero() {
                            continue;
                        }
                        for (o, x) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                            *o += aip * *x;
                        }
                    }
                }
            }
            Op::AddRow(a, b) => {
                let n = y.cols();
                add_into(acc(grads, *a, g.len()), g);
                let gb = acc(grads, *b, n);
                for (i, v) in g.iter().enumerate() {
                    gb[i % n] += *v;
                }
            }
            Op::MulRow(a, b) => {
                let n = y.cols();
                let (av, bv) = (self.value(*a).values(), self.value(*b).values());
                let ga = acc(grads, *a, g.len());
                for (i, v) in g.iter().enumerate() {
                    ga[i] += *v * bv[i % n];
                }
                let gb = acc(grads, *b, n);
                for (i, v) in g.iter().enumerate() {
                    gb[i % n] += *v * av[i];
                }
            }
            Op::Add(a, b) => {
                add_into(acc(grads, *a, g.len()), g);
                add_into(acc(grads, *b, g.len()), g);
            }
            Op::Sub(a, b) => {
                add_into(acc(grads, *a, g.len()), g);
                let gb = acc(grads, *b, g.len());
                for (o, v) in gb.iter_mut().zip(g) {
                    *o -= *v;
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).values(), self.value(*b).values());
                let ga = acc(grads, *a, g.len());
                for i in 0..g.len() {
                    ga[i] += g[i] * bv[i];
                }
                let gb = acc(grads, *b, g.len());
                for i in 0..g.len() {
                    gb[i] += g[i] * av[i];
                }
            }
            Op::Div(a, b) => {
                let bv = self.value(*b).values();
                let ga = acc(grads, *a, g.len());
                for i in 0..g.len() {
                    ga[i] += g[i] / bv[i];
                }
                let yv = y.values();
                let gb = acc(grads, *b, g.len());
                for i in 0..g.len() {
                    gb[i] -= g[i] * yv[i] / bv[i];
                }
            }
            Op::Scale(a, c) => {
                let ga = acc(grads, *a, g.len());
                for (o, v) in ga.iter_mut().zip(g) {
                    *o += *v * *c;
                }
            }
            Op::AddScalar(a) => add_into(acc(grads, *a, g.len()), g),
            Op::Softplus(a) => {
                let x = self.value(*a).values();
                let ga = acc(grads, *a, g.len());
                for i in 0..g.len() {
                    ga[i] += g[i] * x[i].sigmoid();
                }
            }
            Op::Sigmoid(a) => {
                let yv = y.values();
                let ga = acc(grads, *a, g.len());
                for i in 0..g.len() {
                    ga[i] += g[i] * yv[i] * (S::one() - yv[i]);
                }
            }
            Op::Tanh(a) => {
                let yv = y.values();
                let ga = acc(grads, *a, g.len());
                for i in 0..g.len() {
                    ga[i] += g[i] * (S::one() - yv[i] * yv[i]);
                }
            }
            Op::Exp(a) => {
                let yv = y.values();
                let ga = acc(grads, *a, g.len());
                for i in 0..g.len() {
                    ga[i] += g[i] * yv[i];
                }
            }
            Op::Square(a) => {
                let x = self.value(*a).values();
                let two = S::lit(2.0);
                let ga = acc(grads, *a, g.len());
                for i in 0..g.len() {
                    ga[i] += g[i] * two * x[i];
                }
            }
            Op::Sum(a) => {
                let len = self.value(*a).len();
                let ga = acc(grads, *a, len);
                for o in ga.iter_mut() {
                    *o += g[0];
                }
            }
            Op::RowSum(a) => {
                let av = self.value(*a);
                let n = av.cols();
                let ga = acc(grads, *a, av.len());
                for (i, o) in ga.iter_mut().enumerate() {
                    *o += g[i / n];
                }
            }
            Op::ConcatCols(parts) => {
                let rows = y.rows();
                let total = y.cols();
                let mut offset = 0;
                for p in parts {
                    let pc = self.value(*p).cols();
                    let gp = acc(grads, *p, rows * pc);
                    for r in 0..rows {
                        add_into(
                            &mut gp[r * pc..(r + 1) * pc],
                            &g[r * total + offset..r * total + offset + pc],
                        );
                    }
                    offset += pc;
                }
            }
            Op::SliceCols(a, start) => {
                let av = self.value(*a);
                let (n, w) = (av.cols(), y.cols());
                let ga = acc(grads, *a, av.len());
                for r in 0..y.rows() {
                    add_into(
                        &mut ga[r * n + start..r * n + start + w],
                        &g[r * w..(r + 1) * w],
                    );
                }
            }
            Op::CrossEntropy(logits, targets) => {
                let lv = self.value(*logits);
                let k = lv.cols();
                let ga = acc(grads, *logits, lv.len());
                for (r, &t) in targets.iter().enumerate() {
                    let row = lv.row_slice(r);
                    let lse = log_sum_exp(row);
                    for c in 0..k {
                        let p = (row[c] - lse).exp();
                        let target = if c == t { S::one() } else { S::zero() };
                        ga[r * k + c] += g[0] * (p - target);
                    }
                }
            }
        }
    }
}

fn acc<S: Scalar>(grads: &mut [Option<Vec<S>>], v: Var, len: usize) -> &mut Vec<S> {
    grads[v.0].get_or_insert_with(|| vec![S::zero(); len])
}

fn add_into<S: Scalar>(dst: &mut [S], src: &[S]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += *s;
    }
}

pub(crate) fn log_sum_exp<S: Scalar>(row: &[S]) -> S {
    let m = row.iter().copied().fold(S::neg_infinity(), S::max);
    m + row.iter().map(|&x| (x - m).exp()).sum::<S>().ln()
}

/// Row-wise softmax of plain values.
pub fn softmax<S: Scalar>(row: &[S]) -> Vec<S> {
    let lse = log_sum_exp(row);
    row.iter().map(|&x| (x - lse).exp()).collect()
}
