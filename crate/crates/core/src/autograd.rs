//! Tape-based reverse-mode differentiation over dense 2-D arrays.
//!
//! Every operation appends a node holding its forward value. `backward`
//! walks the tape once in reverse and returns gradients for every node that
//! the scalar loss depends on. Values are generic over `f32`/`f64` so the
//! same model code can be gradient-checked at both precisions.

use ndarray::{concatenate, s, Array2, Axis, NdFloat};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    /// `a (n×m) + b (1×m)` broadcast over rows.
    AddRow(Var, Var),
    Mul(Var, Var),
    /// `a (n×m) * c (n×1)` broadcast over columns.
    MulCol(Var, Var),
    Scale(Var, T),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Log(Var),
    Clamp(Var, T, T),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize, usize),
    SliceRows(Var, usize, usize),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    /// Row sums, `n×m -> n×1`.
    SumCols(Var),
    /// Sum of all entries, `-> 1×1`.
    Sum(Var),
    /// `out[i] = a[i, idx[i]]`, `n×m -> n×1`.
    Gather(Var, Vec<usize>),
    /// Row lookup into a table, `out[i] = table[ids[i], :]`.
    Embed(Var, Vec<usize>),
}

struct Node<T> {
    value: Array2<T>,
    op: Op<T>,
}

/// A single-use computation tape.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: NdFloat> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn lit<T: NdFloat>(x: f64) -> T {
    T::from(x).expect("literal fits the float type")
}

impl<T: NdFloat> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::with_capacity(1024) }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Array2<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Array2<T> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> T {
        let val = self.value(v);
        debug_assert_eq!(val.dim(), (1, 1));
        val[[0, 0]]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        self.push(value, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) - self.value(b);
        self.push(value, Op::Sub(a, b))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        assert_eq!(self.value(row).nrows(), 1, "add_row expects a 1×m bias");
        let value = self.value(a) + self.value(row);
        self.push(value, Op::AddRow(a, row))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) * self.value(b);
        self.push(value, Op::Mul(a, b))
    }

    pub fn mul_col(&mut self, a: Var, col: Var) -> Var {
        assert_eq!(self.value(col).ncols(), 1, "mul_col expects an n×1 column");
        let value = self.value(a) * self.value(col);
        self.push(value, Op::MulCol(a, col))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let value = self.value(a) * c;
        self.push(value, Op::Scale(a, c))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let one = T::one();
        let value = self.value(a).mapv(|x| one / (one + (-x).exp()));
        self.push(value, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| x.tanh());
        self.push(value, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let zero = T::zero();
        let value = self.value(a).mapv(|x| if x > zero { x } else { zero });
        self.push(value, Op::Relu(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| x.ln());
        self.push(value, Op::Log(a))
    }

    pub fn clamp(&mut self, a: Var, lo: T, hi: T) -> Var {
        let value = self.value(a).mapv(|x| if x.is_nan() { x } else { x.max(lo).min(hi) });
        self.push(value, Op::Clamp(a, lo, hi))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        if parts.len() == 1 {
            return parts[0];
        }
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let value = concatenate(Axis(1), &views).expect("concat_cols: row counts differ");
        self.push(value, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let value = self.value(a).slice(s![.., start..end]).to_owned();
        self.push(value, Op::SliceCols(a, start, end))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let value = self.value(a).slice(s![start..end, ..]).to_owned();
        self.push(value, Op::SliceRows(a, start, end))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let value = softmax_rows(self.value(a));
        self.push(value, Op::SoftmaxRows(a))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let value = log_softmax_rows(self.value(a));
        self.push(value, Op::LogSoftmaxRows(a))
    }

    pub fn sum_cols(&mut self, a: Var) -> Var {
        let value = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(value, Op::SumCols(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).sum();
        self.push(Array2::from_elem((1, 1), total), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len();
        let total = self.sum(a);
        self.scale(total, T::one() / lit::<T>(n as f64))
    }

    pub fn gather(&mut self, a: Var, idx: &[usize]) -> Var {
        let src = self.value(a);
        assert_eq!(src.nrows(), idx.len(), "gather: one index per row");
        let value = Array2::from_shape_fn((idx.len(), 1), |(i, _)| src[[i, idx[i]]]);
        self.push(value, Op::Gather(a, idx.to_vec()))
    }

    pub fn embed(&mut self, table: Var, ids: &[usize]) -> Var {
        let src = self.value(table);
        let dim = src.ncols();
        let mut value = Array2::zeros((ids.len(), dim));
        for (row, &id) in ids.iter().enumerate() {
            value.row_mut(row).assign(&src.row(id));
        }
        self.push(value, Op::Embed(table, ids.to_vec()))
    }

    /// Reverse sweep from a scalar (1×1) node.
    pub fn backward(&self, loss: Var) -> Gradients<T> {
        assert_eq!(self.value(loss).dim(), (1, 1), "backward needs a scalar loss");
        let mut grads: Vec<Option<Array2<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Array2::ones((1, 1)));

        for id in (0..=loss.0).rev() {
            let Some(dy) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let da = dy.dot(&self.value(*b).t());
                    let db = self.value(*a).t().dot(&dy);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, dy.clone());
                    accumulate(&mut grads, *b, dy.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, dy.mapv(|x| -x));
                    accumulate(&mut grads, *a, dy.clone());
                }
                Op::AddRow(a, row) => {
                    let drow = dy.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads, *row, drow);
                    accumulate(&mut grads, *a, dy.clone());
                }
                Op::Mul(a, b) => {
                    let da = &dy * self.value(*b);
                    let db = &dy * self.value(*a);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::MulCol(a, col) => {
                    let da = &dy * self.value(*col);
                    let dcol = (&dy * self.value(*a)).sum_axis(Axis(1)).insert_axis(Axis(1));
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *col, dcol);
                }
                Op::Scale(a, c) => accumulate(&mut grads, *a, &dy * *c),
                Op::Sigmoid(a) => {
                    let one = T::one();
                    let mut da = dy.clone();
                    da.zip_mut_with(&node.value, |d, &y| *d = *d * y * (one - y));
                    accumulate(&mut grads, *a, da);
                }
                Op::Tanh(a) => {
                    let one = T::one();
                    let mut da = dy.clone();
                    da.zip_mut_with(&node.value, |d, &y| *d = *d * (one - y * y));
                    accumulate(&mut grads, *a, da);
                }
                Op::Relu(a) => {
                    let zero = T::zero();
                    let mut da = dy.clone();
                    da.zip_mut_with(self.value(*a), |d, &x| {
                        if x <= zero {
                            *d = zero
                        }
                    });
                    accumulate(&mut grads, *a, da);
                }
                Op::Log(a) => accumulate(&mut grads, *a, &dy / self.value(*a)),
                Op::Clamp(a, lo, hi) => {
                    let zero = T::zero();
                    let mut da = dy.clone();
                    da.zip_mut_with(self.value(*a), |d, &x| {
                        if x < *lo || x > *hi {
                            *d = zero
                        }
                    });
                    accumulate(&mut grads, *a, da);
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let width = self.value(*p).ncols();
                        let part = dy.slice(s![.., start..start + width]).to_owned();
                        accumulate(&mut grads, *p, part);
                        start += width;
                    }
                }
                Op::SliceCols(a, start, end) => {
                    let mut da = Array2::zeros(self.value(*a).raw_dim());
                    da.slice_mut(s![.., *start..*end]).assign(&dy);
                    accumulate(&mut grads, *a, da);
                }
                Op::SliceRows(a, start, end) => {
                    let mut da = Array2::zeros(self.value(*a).raw_dim());
                    da.slice_mut(s![*start..*end, ..]).assign(&dy);
                    accumulate(&mut grads, *a, da);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let dot = (&dy * y).sum_axis(Axis(1)).insert_axis(Axis(1));
                    let da = y * &(&dy - &dot);
                    accumulate(&mut grads, *a, da);
                }
                Op::LogSoftmaxRows(a) => {
                    let p = node.value.mapv(|x| x.exp());
                    let total = dy.sum_axis(Axis(1)).insert_axis(Axis(1));
                    let da = &dy - &(&p * &total);
                    accumulate(&mut grads, *a, da);
                }
                Op::SumCols(a) => {
                    let shape = self.value(*a).raw_dim();
                    let da = dy.broadcast(shape).expect("column broadcast").to_owned();
                    accumulate(&mut grads, *a, da);
                }
                Op::Sum(a) => {
                    let da = Array2::from_elem(self.value(*a).raw_dim(), dy[[0, 0]]);
                    accumulate(&mut grads, *a, da);
                }
                Op::Gather(a, idx) => {
                    let mut da = Array2::zeros(self.value(*a).raw_dim());
                    for (i, &j) in idx.iter().enumerate() {
                        da[[i, j]] = dy[[i, 0]];
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::Embed(table, ids) => {
                    let mut da = Array2::zeros(self.value(*table).raw_dim());
                    for (row, &id) in ids.iter().enumerate() {
                        let mut target = da.row_mut(id);
                        target += &dy.row(row);
                    }
                    accumulate(&mut grads, *table, da);
                }
            }
            grads[id] = Some(dy);
        }
        Gradients { grads }
    }
}

fn accumulate<T: NdFloat>(grads: &mut [Option<Array2<T>>], v: Var, delta: Array2<T>) {
    match &mut grads[v.0] {
        Some(existing) => *existing += &delta,
        slot @ None => *slot = Some(delta),
    }
}

/// Gradients produced by [`Graph::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Array2<T>>>,
}

impl<T: NdFloat> Gradients<T> {
    /// Gradient of the loss with respect to `v`, `None` when `v` does not
    /// influence the loss.
    pub fn get(&self, v: Var) -> Option<&Array2<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient or zeros shaped like the node's value.
    pub fn get_or_zeros(&self, graph: &Graph<T>, v: Var) -> Array2<T> {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Array2::zeros(graph.value(v).raw_dim()))
    }
}

pub fn softmax_rows<T: NdFloat>(a: &Array2<T>) -> Array2<T> {
    let mut out = a.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(T::neg_infinity(), T::max);
        row.mapv_inplace(|x| (x - max).exp());
        let total = row.sum();
        row.mapv_inplace(|x| x / total);
    }
    out
}

pub fn log_softmax_rows<T: NdFloat>(a: &Array2<T>) -> Array2<T> {
    let mut out = a.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(T::neg_infinity(), T::max);
        let lse = row.iter().map(|&x| (x - max).exp()).fold(T::zero(), |acc, x| acc + x).ln() + max;
        row.mapv_inplace(|x| x - lse);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn numeric_grad(f: impl Fn(&Array2<f64>) -> f64, x: &Array2<f64>) -> Array2<f64> {
        let h = 1e-6;
        let mut out = Array2::zeros(x.raw_dim());
        for idx in 0..x.len() {
            let mut plus = x.clone();
            let mut minus = x.clone();
            plus.as_slice_mut().unwrap()[idx] += h;
            minus.as_slice_mut().unwrap()[idx] -= h;
            out.as_slice_mut().unwrap()[idx] = (f(&plus) - f(&minus)) / (2.0 * h);
        }
        out
    }

    fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    // Composite expression touching most ops.
    fn composite(g: &mut Graph<f64>, x: Var, w: Var) -> Var {
        let h = g.matmul(x, w);
        let t = g.tanh(h);
        let s = g.sigmoid(h);
        let r = g.relu(h);
        let m = g.mul(t, s);
        let c = g.concat_cols(&[m, r]);
        let left = g.slice_cols(c, 0, 2);
        let right = g.slice_cols(c, 2, 4);
        let d = g.sub(left, right);
        let col = g.sum_cols(d);
        let e = g.mul_col(left, col);
        let top = g.slice_rows(e, 0, 2);
        let sm = g.softmax_rows(top);
        let ls = g.log_softmax_rows(top);
        let picked = g.gather(ls, &[0, 1]);
        let clamped = g.clamp(sm, 1e-7, 1.0 - 1e-7);
        let lg = g.log(clamped);
        let a = g.sum(picked);
        let b = g.mean(lg);
        let total = g.add(a, b);
        g.scale(total, 0.5)
    }

    #[test]
    fn composite_gradient_matches_central_differences() {
        let x0 = array![[0.3, -0.2, 0.5], [0.1, 0.4, -0.6], [-0.7, 0.2, 0.9]];
        let w0 = array![[0.2, -0.5, 0.3, 0.1], [0.7, 0.1, -0.4, 0.2], [-0.3, 0.6, 0.2, -0.1]];

        let eval = |x: &Array2<f64>, w: &Array2<f64>| {
            let mut g = Graph::new();
            let xv = g.leaf(x.clone());
            let wv = g.leaf(w.clone());
            let out = composite(&mut g, xv, wv);
            g.scalar(out)
        };

        let mut g = Graph::new();
        let xv = g.leaf(x0.clone());
        let wv = g.leaf(w0.clone());
        let out = composite(&mut g, xv, wv);
        let grads = g.backward(out);

        let nx = numeric_grad(|x| eval(x, &w0), &x0);
        let nw = numeric_grad(|w| eval(&x0, w), &w0);
        assert!(max_abs_diff(&grads.get_or_zeros(&g, xv), &nx) < 1e-7);
        assert!(max_abs_diff(&grads.get_or_zeros(&g, wv), &nw) < 1e-7);
    }

    #[test]
    fn embed_scatters_into_table_rows() {
        let table = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let mut g = Graph::new();
        let t = g.leaf(table);
        let rows = g.embed(t, &[2, 0, 2]);
        assert_eq!(g.value(rows), &array![[5.0, 6.0], [1.0, 2.0], [5.0, 6.0]]);
        let total = g.sum(rows);
        let grads = g.backward(total);
        assert_eq!(grads.get(t).unwrap(), &array![[1.0, 1.0], [0.0, 0.0], [2.0, 2.0]]);
    }

    #[test]
    fn unused_leaf_has_no_gradient() {
        let mut g = Graph::<f64>::new();
        let a = g.leaf(array![[1.0]]);
        let b = g.leaf(array![[2.0]]);
        let out = g.scale(a, 3.0);
        let grads = g.backward(out);
        assert_eq!(grads.get(a).unwrap()[[0, 0]], 3.0);
        assert!(grads.get(b).is_none());
    }

    #[test]
    fn log_softmax_is_stable_for_large_logits() {
        let out = log_softmax_rows(&array![[1000.0_f64, 0.0]]);
        assert!(out.iter().all(|x| x.is_finite()));
        assert!((out[[0, 0]]).abs() < 1e-12);
    }
}
