//! A small matrix-valued reverse-mode tape.
//!
//! Every node holds a dense row-major matrix. Parameter leaves remember their
//! offset in the flat parameter vector so that [`Tape::accumulate_param_grads`]
//! can scatter gradients straight into a flat buffer.

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix shape does not match data length");
        Self { rows, cols, data }
    }

    pub fn row_vector(data: Vec<f64>) -> Self {
        let cols = data.len();
        Self::from_vec(1, cols, data)
    }

    pub fn scalar(v: f64) -> Self {
        Self::from_vec(1, 1, vec![v])
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Mat {
        Mat::from_vec(self.rows, self.cols, self.data.iter().map(|&x| f(x)).collect())
    }

    fn add_assign(&mut self, other: &Mat) {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// `self · other`
    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self · otherᵀ`
    pub fn matmul_bt(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.cols, "matmul_bt shape mismatch");
        let mut out = Mat::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..other.rows {
                out.data[i * other.rows + j] = dot(a, other.row(j));
            }
        }
        out
    }

    /// `selfᵀ · other`
    pub fn matmul_at(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows, "matmul_at shape mismatch");
        let mut out = Mat::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let arow = self.row(k);
            let brow = other.row(k);
            for (i, &a) in arow.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const NORM_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Const,
    Param { offset: usize },
    MatMul(usize, usize),
    MatMulBt(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    AddRow(usize, usize),
    Mul(usize, usize),
    MulCol(usize, usize),
    ScaleBy(usize, usize),
    Scale(usize, f64),
    AddConst(usize),
    Tanh(usize),
    Sigmoid(usize),
    Gelu(usize),
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    RepeatRows(usize),
    GatherRows(usize, Vec<usize>),
    SliceCols(usize, usize),
    MeanRows(usize),
    SoftmaxRows(usize),
    NormRows(usize),
    Transpose(usize),
    LogSoftmaxPick(usize, usize),
    SumAll(usize),
}

#[derive(Debug, Clone)]
struct Node {
    value: Mat,
    op: Op,
}

#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node recorded after `mark`.
    pub fn truncate(&mut self, mark: usize) {
        self.nodes.truncate(mark);
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        debug_assert_eq!(m.data.len(), 1);
        m.data[0]
    }

    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Const)
    }

    /// Leaf whose gradient is scattered into the flat buffer at `offset`.
    pub fn param(&mut self, value: Mat, offset: usize) -> Var {
        self.push(value, Op::Param { offset })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a.0, b.0))
    }

    /// `a · bᵀ`
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul_bt(self.value(b));
        self.push(v, Op::MatMulBt(a.0, b.0))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut v = self.value(a).clone();
        assert_eq!(
            (v.rows, v.cols),
            (self.value(b).rows, self.value(b).cols),
            "add shape mismatch"
        );
        v.add_assign(self.value(b));
        self.push(v, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!((x.rows, x.cols), (y.rows, y.cols), "sub shape mismatch");
        let data = x.data.iter().zip(&y.data).map(|(p, q)| p - q).collect();
        let v = Mat::from_vec(x.rows, x.cols, data);
        self.push(v, Op::Sub(a.0, b.0))
    }

    /// Adds a `1×c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (x, r) = (self.value(a), self.value(row));
        assert_eq!((r.rows, r.cols), (1, x.cols), "add_row shape mismatch");
        let mut v = x.clone();
        for chunk in v.data.chunks_mut(x.cols) {
            for (o, b) in chunk.iter_mut().zip(&r.data) {
                *o += b;
            }
        }
        self.push(v, Op::AddRow(a.0, row.0))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!((x.rows, x.cols), (y.rows, y.cols), "mul shape mismatch");
        let data = x.data.iter().zip(&y.data).map(|(p, q)| p * q).collect();
        let v = Mat::from_vec(x.rows, x.cols, data);
        self.push(v, Op::Mul(a.0, b.0))
    }

    /// Scales row `i` of `a` by `col[i]`, where `col` is `r×1`.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Var {
        let (x, c) = (self.value(a), self.value(col));
        assert_eq!((c.rows, c.cols), (x.rows, 1), "mul_col shape mismatch");
        let mut v = x.clone();
        for (chunk, s) in v.data.chunks_mut(x.cols.max(1)).zip(&c.data) {
            for o in chunk.iter_mut() {
                *o *= s;
            }
        }
        self.push(v, Op::MulCol(a.0, col.0))
    }

    /// Multiplies `a` by the `1×1` node `s`.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Var {
        let k = self.scalar(s);
        let v = self.value(a).map(|x| x * k);
        self.push(v, Op::ScaleBy(a.0, s.0))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a).map(|x| x * k);
        self.push(v, Op::Scale(a.0, k))
    }

    pub fn add_const(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a).map(|x| x + k);
        self.push(v, Op::AddConst(a.0))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a.0))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(gelu);
        self.push(v, Op::Gelu(a.0))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|p| self.value(*p).cols).sum();
        let mut v = Mat::zeros(rows, cols);
        for r in 0..rows {
            let mut c0 = 0;
            for p in parts {
                let m = self.value(*p);
                assert_eq!(m.rows, rows, "concat_cols row mismatch");
                v.data[r * cols + c0..r * cols + c0 + m.cols].copy_from_slice(m.row(r));
                c0 += m.cols;
            }
        }
        self.push(v, Op::ConcatCols(parts.iter().map(|p| p.0).collect()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let m = self.value(*p);
            assert_eq!(m.cols, cols, "concat_rows column mismatch");
            data.extend_from_slice(&m.data);
            rows += m.rows;
        }
        let v = Mat::from_vec(rows, cols, data);
        self.push(v, Op::ConcatRows(parts.iter().map(|p| p.0).collect()))
    }

    /// Stacks `n` copies of the `1×c` row `a`.
    pub fn repeat_rows(&mut self, a: Var, n: usize) -> Var {
        let x = self.value(a);
        assert_eq!(x.rows, 1, "repeat_rows expects a row vector");
        let mut data = Vec::with_capacity(n * x.cols);
        for _ in 0..n {
            data.extend_from_slice(&x.data);
        }
        let v = Mat::from_vec(n, x.cols, data);
        self.push(v, Op::RepeatRows(a.0))
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let x = self.value(a);
        let mut data = Vec::with_capacity(idx.len() * x.cols);
        for &i in idx {
            data.extend_from_slice(x.row(i));
        }
        let v = Mat::from_vec(idx.len(), x.cols, data);
        self.push(v, Op::GatherRows(a.0, idx.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        assert!(start + len <= x.cols, "slice_cols out of range");
        let mut data = Vec::with_capacity(x.rows * len);
        for r in 0..x.rows {
            data.extend_from_slice(&x.row(r)[start..start + len]);
        }
        let v = Mat::from_vec(x.rows, len, data);
        self.push(v, Op::SliceCols(a.0, start))
    }

    /// Column means, `1×c`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut v = Mat::zeros(1, x.cols);
        for r in 0..x.rows {
            for (o, b) in v.data.iter_mut().zip(x.row(r)) {
                *o += b;
            }
        }
        let inv = 1.0 / x.rows as f64;
        v.data.iter_mut().for_each(|o| *o *= inv);
        self.push(v, Op::MeanRows(a.0))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut v = x.clone();
        for chunk in v.data.chunks_mut(x.cols) {
            let m = chunk.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for o in chunk.iter_mut() {
                *o = (*o - m).exp();
                s += *o;
            }
            chunk.iter_mut().for_each(|o| *o /= s);
        }
        self.push(v, Op::SoftmaxRows(a.0))
    }

    /// Per-row standardization without affine parameters.
    pub fn norm_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut v = x.clone();
        for chunk in v.data.chunks_mut(x.cols) {
            let (m, inv) = row_stats(chunk);
            chunk.iter_mut().for_each(|o| *o = (*o - m) * inv);
        }
        self.push(v, Op::NormRows(a.0))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a.0))
    }

    /// `log softmax(a)[idx]` for a `1×m` row.
    pub fn log_softmax_pick(&mut self, a: Var, idx: usize) -> Var {
        let x = self.value(a);
        assert_eq!(x.rows, 1, "log_softmax_pick expects a row vector");
        let lse = log_sum_exp(&x.data);
        let v = Mat::scalar(x.data[idx] - lse);
        self.push(v, Op::LogSoftmaxPick(a.0, idx))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let v = Mat::scalar(self.value(a).data.iter().sum());
        self.push(v, Op::SumAll(a.0))
    }

    /// Runs the reverse sweep from the scalar `root` and returns the gradient
    /// of every node (None where the root does not depend on it).
    pub fn gradients(&self, root: Var) -> Vec<Option<Mat>> {
        assert_eq!(self.value(root).data.len(), 1, "backward root must be scalar");
        let mut grads: Vec<Option<Mat>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Mat::scalar(1.0));
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        grads
    }

    /// Adds `d root / d param` into `out` for every parameter leaf.
    pub fn accumulate_param_grads(&self, root: Var, out: &mut [f64]) {
        let grads = self.gradients(root);
        for (node, g) in self.nodes.iter().zip(grads) {
            if let (Op::Param { offset }, Some(g)) = (&node.op, g) {
                for (o, d) in out[*offset..*offset + g.data.len()].iter_mut().zip(&g.data) {
                    *o += d;
                }
            }
        }
    }

    fn propagate(&self, i: usize, g: &Mat, grads: &mut [Option<Mat>]) {
        let out = &self.nodes[i].value;
        match &self.nodes[i].op {
            Op::Const | Op::Param { .. } => {}
            Op::MatMul(a, b) => {
                let da = g.matmul_bt(&self.nodes[*b].value);
                let db = self.nodes[*a].value.matmul_at(g);
                accumulate(grads, *a, da);
                accumulate(grads, *b, db);
            }
            Op::MatMulBt(a, b) => {
                let da = g.matmul(&self.nodes[*b].value);
                let db = g.matmul_at(&self.nodes[*a].value);
                accumulate(grads, *a, da);
                accumulate(grads, *b, db);
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.map(|x| -x));
            }
            Op::AddRow(a, row) => {
                let mut dr = Mat::zeros(1, g.cols);
                for r in 0..g.rows {
                    for (o, d) in dr.data.iter_mut().zip(g.row(r)) {
                        *o += d;
                    }
                }
                accumulate(grads, *a, g.clone());
                accumulate(grads, *row, dr);
            }
            Op::Mul(a, b) => {
                let (x, y) = (&self.nodes[*a].value, &self.nodes[*b].value);
                let da = zip_map(g, y, |d, q| d * q);
                let db = zip_map(g, x, |d, p| d * p);
                accumulate(grads, *a, da);
                accumulate(grads, *b, db);
            }
            Op::MulCol(a, col) => {
                let (x, c) = (&self.nodes[*a].value, &self.nodes[*col].value);
                let mut da = g.clone();
                let mut dc = Mat::zeros(c.rows, 1);
                for r in 0..g.rows {
                    let s = c.data[r];
                    dc.data[r] = dot(g.row(r), x.row(r));
                    da.data[r * g.cols..(r + 1) * g.cols].iter_mut().for_each(|o| *o *= s);
                }
                accumulate(grads, *a, da);
                accumulate(grads, *col, dc);
            }
            Op::ScaleBy(a, s) => {
                let k = self.nodes[*s].value.data[0];
                let ds = dot(&g.data, &self.nodes[*a].value.data);
                accumulate(grads, *a, g.map(|x| x * k));
                accumulate(grads, *s, Mat::scalar(ds));
            }
            Op::Scale(a, k) => accumulate(grads, *a, g.map(|x| x * k)),
            Op::AddConst(a) => accumulate(grads, *a, g.clone()),
            Op::Tanh(a) => accumulate(grads, *a, zip_map(g, out, |d, y| d * (1.0 - y * y))),
            Op::Sigmoid(a) => accumulate(grads, *a, zip_map(g, out, |d, y| d * y * (1.0 - y))),
            Op::Gelu(a) => {
                let x = &self.nodes[*a].value;
                accumulate(grads, *a, zip_map(g, x, |d, p| d * gelu_grad(p)));
            }
            Op::ConcatCols(parts) => {
                let mut c0 = 0;
                for p in parts {
                    let w = self.nodes[*p].value.cols;
                    let mut dp = Mat::zeros(g.rows, w);
                    for r in 0..g.rows {
                        dp.data[r * w..(r + 1) * w].copy_from_slice(&g.row(r)[c0..c0 + w]);
                    }
                    accumulate(grads, *p, dp);
                    c0 += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for p in parts {
                    let len = self.nodes[*p].value.data.len();
                    let m = &self.nodes[*p].value;
                    accumulate(
                        grads,
                        *p,
                        Mat::from_vec(m.rows, m.cols, g.data[start..start + len].to_vec()),
                    );
                    start += len;
                }
            }
            Op::RepeatRows(a) => {
                let mut da = Mat::zeros(1, g.cols);
                for r in 0..g.rows {
                    for (o, d) in da.data.iter_mut().zip(g.row(r)) {
                        *o += d;
                    }
                }
                accumulate(grads, *a, da);
            }
            Op::GatherRows(a, idx) => {
                let x = &self.nodes[*a].value;
                let mut da = Mat::zeros(x.rows, x.cols);
                for (r, &src) in idx.iter().enumerate() {
                    for (o, d) in da.data[src * x.cols..(src + 1) * x.cols].iter_mut().zip(g.row(r)) {
                        *o += d;
                    }
                }
                accumulate(grads, *a, da);
            }
            Op::SliceCols(a, start) => {
                let x = &self.nodes[*a].value;
                let mut da = Mat::zeros(x.rows, x.cols);
                for r in 0..g.rows {
                    da.data[r * x.cols + start..r * x.cols + start + g.cols].copy_from_slice(g.row(r));
                }
                accumulate(grads, *a, da);
            }
            Op::MeanRows(a) => {
                let x = &self.nodes[*a].value;
                let inv = 1.0 / x.rows as f64;
                let mut da = Mat::zeros(x.rows, x.cols);
                for chunk in da.data.chunks_mut(x.cols) {
                    for (o, d) in chunk.iter_mut().zip(&g.data) {
                        *o = d * inv;
                    }
                }
                accumulate(grads, *a, da);
            }
            Op::SoftmaxRows(a) => {
                let mut da = Mat::zeros(out.rows, out.cols);
                for r in 0..out.rows {
                    let (y, d) = (out.row(r), g.row(r));
                    let s = dot(y, d);
                    for c in 0..out.cols {
                        da.data[r * out.cols + c] = y[c] * (d[c] - s);
                    }
                }
                accumulate(grads, *a, da);
            }
            Op::NormRows(a) => {
                let x = &self.nodes[*a].value;
                let n = x.cols as f64;
                let mut da = Mat::zeros(x.rows, x.cols);
                for r in 0..x.rows {
                    let (_, inv) = row_stats(x.row(r));
                    let (y, d) = (out.row(r), g.row(r));
                    let md = d.iter().sum::<f64>() / n;
                    let mdy = dot(d, y) / n;
                    for c in 0..x.cols {
                        da.data[r * x.cols + c] = inv * (d[c] - md - y[c] * mdy);
                    }
                }
                accumulate(grads, *a, da);
            }
            Op::Transpose(a) => accumulate(grads, *a, g.transpose()),
            Op::LogSoftmaxPick(a, idx) => {
                let x = &self.nodes[*a].value;
                let lse = log_sum_exp(&x.data);
                let gv = g.data[0];
                let data = x
                    .data
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| gv * (f64::from(u8::from(j == *idx)) - (v - lse).exp()))
                    .collect();
                accumulate(grads, *a, Mat::from_vec(1, x.cols, data));
            }
            Op::SumAll(a) => {
                let x = &self.nodes[*a].value;
                accumulate(grads, *a, Mat::from_vec(x.rows, x.cols, vec![g.data[0]; x.data.len()]));
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Mat>], i: usize, g: Mat) {
    match &mut grads[i] {
        Some(acc) => acc.add_assign(&g),
        slot => *slot = Some(g),
    }
}

fn zip_map(a: &Mat, b: &Mat, f: impl Fn(f64, f64) -> f64) -> Mat {
    Mat::from_vec(
        a.rows,
        a.cols,
        a.data.iter().zip(&b.data).map(|(x, y)| f(*x, *y)).collect(),
    )
}

fn row_stats(row: &[f64]) -> (f64, f64) {
    let n = row.len() as f64;
    let m = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, 1.0 / (var + NORM_EPS).sqrt())
}

/// Max-shifted `log Σ exp(x)`.
pub fn log_sum_exp(x: &[f64]) -> f64 {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}
