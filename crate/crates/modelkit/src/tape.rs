//! Minimal reverse-mode automatic differentiation over row-major f64
//! matrices. One tape is built per example; parameter gradients are read
//! back after [`Tape::backward`].

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Tensor {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Tensor {
        assert_eq!(rows * cols, data.len(), "shape mismatch");
        Tensor { rows, cols, data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

pub type NodeId = usize;

enum Op {
    Leaf,
    Param(usize),
    Embed { table: NodeId, ids: Vec<usize> },
    MatMul(NodeId, NodeId),
    MatMulBt(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    MulRow(NodeId, NodeId),
    Relu(NodeId),
    Scale(NodeId, f64),
    Softmax(NodeId),
    Normalize { x: NodeId, inv_std: Vec<f64> },
    SliceCols { x: NodeId, start: usize },
    ConcatCols(Vec<NodeId>),
    CrossEntropy { logits: NodeId, targets: Vec<usize>, probs: Tensor },
}

struct Node {
    value: Tensor,
    op: Op,
}

pub struct Tape {
    nodes: Vec<Node>,
    param_count: usize,
}

const LN_EPS: f64 = 1e-5;

impl Tape {
    pub fn new(param_count: usize) -> Tape {
        Tape {
            nodes: Vec::new(),
            param_count,
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn param(&mut self, index: usize, value: &Tensor) -> NodeId {
        assert!(index < self.param_count);
        self.push(value.clone(), Op::Param(index))
    }

    pub fn embed(&mut self, table: NodeId, ids: &[usize]) -> NodeId {
        let t = &self.nodes[table].value;
        let mut out = Tensor::zeros(ids.len(), t.cols);
        for (r, &id) in ids.iter().enumerate() {
            out.row_mut(r).copy_from_slice(t.row(id));
        }
        self.push(out, Op::Embed { table, ids: ids.to_vec() })
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (&self.nodes[a].value, &self.nodes[b].value);
        assert_eq!(av.cols, bv.rows, "matmul shape");
        let mut out = Tensor::zeros(av.rows, bv.cols);
        for i in 0..av.rows {
            let orow = &mut out.data[i * bv.cols..(i + 1) * bv.cols];
            for (k, &x) in av.row(i).iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                for (o, &y) in orow.iter_mut().zip(bv.row(k)) {
                    *o += x * y;
                }
            }
        }
        self.push(out, Op::MatMul(a, b))
    }

    /// `a · bᵀ`.
    pub fn matmul_bt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (&self.nodes[a].value, &self.nodes[b].value);
        assert_eq!(av.cols, bv.cols, "matmul_bt shape");
        let mut out = Tensor::zeros(av.rows, bv.rows);
        for i in 0..av.rows {
            for j in 0..bv.rows {
                out.data[i * bv.rows + j] = dot(av.row(i), bv.row(j));
            }
        }
        self.push(out, Op::MatMulBt(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut out = self.nodes[a].value.clone();
        out.add_assign(&self.nodes[b].value);
        self.push(out, Op::Add(a, b))
    }

    /// Adds a `1 × cols` row to every row of `a`.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let mut out = self.nodes[a].value.clone();
        let r = &self.nodes[row].value;
        assert_eq!(r.cols, out.cols);
        for i in 0..out.rows {
            for (o, &b) in out.row_mut(i).iter_mut().zip(&r.data) {
                *o += b;
            }
        }
        self.push(out, Op::AddRow(a, row))
    }

    /// Multiplies every row of `a` elementwise by a `1 × cols` row.
    pub fn mul_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let mut out = self.nodes[a].value.clone();
        let r = &self.nodes[row].value;
        assert_eq!(r.cols, out.cols);
        for i in 0..out.rows {
            for (o, &b) in out.row_mut(i).iter_mut().zip(&r.data) {
                *o *= b;
            }
        }
        self.push(out, Op::MulRow(a, row))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let mut out = self.nodes[a].value.clone();
        for v in &mut out.data {
            *v = v.max(0.0);
        }
        self.push(out, Op::Relu(a))
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let mut out = self.nodes[a].value.clone();
        for v in &mut out.data {
            *v *= s;
        }
        self.push(out, Op::Scale(a, s))
    }

    /// Row softmax. With `causal`, entry `(i, j)` for `j > i` is masked out.
    pub fn softmax(&mut self, a: NodeId, causal: bool) -> NodeId {
        let mut out = self.nodes[a].value.clone();
        for i in 0..out.rows {
            let row = out.row_mut(i);
            let limit = if causal { (i + 1).min(row.len()) } else { row.len() };
            let max = row[..limit].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in &mut row[..limit] {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in &mut row[..limit] {
                *v /= sum;
            }
            for v in &mut row[limit..] {
                *v = 0.0;
            }
        }
        self.push(out, Op::Softmax(a))
    }

    /// Per-row standardization to zero mean and unit variance.
    pub fn normalize(&mut self, x: NodeId) -> NodeId {
        let mut out = self.nodes[x].value.clone();
        let mut inv_std = Vec::with_capacity(out.rows);
        for i in 0..out.rows {
            let row = out.row_mut(i);
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            for v in row.iter_mut() {
                *v = (*v - mean) * inv;
            }
            inv_std.push(inv);
        }
        self.push(out, Op::Normalize { x, inv_std })
    }

    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> NodeId {
        let n = self.normalize(x);
        let g = self.mul_row(n, gain);
        self.add_row(g, bias)
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let v = &self.nodes[x].value;
        assert!(start + len <= v.cols);
        let mut out = Tensor::zeros(v.rows, len);
        for i in 0..v.rows {
            out.row_mut(i).copy_from_slice(&v.row(i)[start..start + len]);
        }
        self.push(out, Op::SliceCols { x, start })
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let rows = self.nodes[parts[0]].value.rows;
        let cols: usize = parts.iter().map(|&p| self.nodes[p].value.cols).sum();
        let mut out = Tensor::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let v = &self.nodes[p].value;
            assert_eq!(v.rows, rows);
            for i in 0..rows {
                out.data[i * cols + offset..i * cols + offset + v.cols].copy_from_slice(v.row(i));
            }
            offset += v.cols;
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    /// Summed negative log-likelihood of `targets` under row-softmax of
    /// `logits`, as a `1 × 1` node.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[usize]) -> NodeId {
        let probs = row_softmax(&self.nodes[logits].value);
        assert_eq!(probs.rows, targets.len());
        let mut nll = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            nll -= probs.data[i * probs.cols + t].max(f64::MIN_POSITIVE).ln();
        }
        self.push(
            Tensor::from_vec(1, 1, vec![nll]),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        )
    }

    /// Backpropagates from the scalar node `root`; returns one gradient per
    /// parameter index (`None` when the parameter was not used).
    pub fn backward(&self, root: NodeId) -> Vec<Option<Tensor>> {
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root] = Some(Tensor::from_vec(1, 1, vec![1.0]));
        let mut params: Vec<Option<Tensor>> = (0..self.param_count).map(|_| None).collect();
        for id in (0..=root).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Leaf => {}
                Op::Param(p) => accumulate(&mut params[*p], g),
                Op::Embed { table, ids } => {
                    let t = &self.nodes[*table].value;
                    let mut d = Tensor::zeros(t.rows, t.cols);
                    for (r, &tok) in ids.iter().enumerate() {
                        for (o, &v) in d.row_mut(tok).iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    accumulate(&mut grads[*table], d);
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    let mut da = Tensor::zeros(av.rows, av.cols);
                    for i in 0..av.rows {
                        for k in 0..av.cols {
                            da.data[i * av.cols + k] = dot(g.row(i), bv.row(k));
                        }
                    }
                    let mut db = Tensor::zeros(bv.rows, bv.cols);
                    for i in 0..av.rows {
                        for (k, &x) in av.row(i).iter().enumerate() {
                            if x == 0.0 {
                                continue;
                            }
                            for (o, &y) in db.row_mut(k).iter_mut().zip(g.row(i)) {
                                *o += x * y;
                            }
                        }
                    }
                    accumulate(&mut grads[*a], da);
                    accumulate(&mut grads[*b], db);
                }
                Op::MatMulBt(a, b) => {
                    let (av, bv) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    let mut da = Tensor::zeros(av.rows, av.cols);
                    let mut db = Tensor::zeros(bv.rows, bv.cols);
                    for i in 0..av.rows {
                        for j in 0..bv.rows {
                            let c = g.data[i * bv.rows + j];
                            if c == 0.0 {
                                continue;
                            }
                            for (o, &y) in da.row_mut(i).iter_mut().zip(bv.row(j)) {
                                *o += c * y;
                            }
                            for (o, &x) in db.row_mut(j).iter_mut().zip(av.row(i)) {
                                *o += c * x;
                            }
                        }
                    }
                    accumulate(&mut grads[*a], da);
                    accumulate(&mut grads[*b], db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[*a], g.clone());
                    accumulate(&mut grads[*b], g);
                }
                Op::AddRow(a, row) => {
                    let mut dr = Tensor::zeros(1, g.cols);
                    for i in 0..g.rows {
                        for (o, &v) in dr.data.iter_mut().zip(g.row(i)) {
                            *o += v;
                        }
                    }
                    accumulate(&mut grads[*row], dr);
                    accumulate(&mut grads[*a], g);
                }
                Op::MulRow(a, row) => {
                    let av = &self.nodes[*a].value;
                    let rv = &self.nodes[*row].value;
                    let mut da = g.clone();
                    let mut dr = Tensor::zeros(1, g.cols);
                    for i in 0..g.rows {
                        for j in 0..g.cols {
                            da.data[i * g.cols + j] *= rv.data[j];
                            dr.data[j] += g.data[i * g.cols + j] * av.data[i * g.cols + j];
                        }
                    }
                    accumulate(&mut grads[*a], da);
                    accumulate(&mut grads[*row], dr);
                }
                Op::Relu(a) => {
                    let mut da = g;
                    for (d, &y) in da.data.iter_mut().zip(&node.value.data) {
                        if y <= 0.0 {
                            *d = 0.0;
                        }
                    }
                    accumulate(&mut grads[*a], da);
                }
                Op::Scale(a, s) => {
                    let mut da = g;
                    for d in &mut da.data {
                        *d *= s;
                    }
                    accumulate(&mut grads[*a], da);
                }
                Op::Softmax(a) => {
                    let p = &node.value;
                    let mut da = Tensor::zeros(p.rows, p.cols);
                    for i in 0..p.rows {
                        let (pr, gr) = (p.row(i), g.row(i));
                        let s = dot(pr, gr);
                        for (o, (&pv, &gv)) in da.row_mut(i).iter_mut().zip(pr.iter().zip(gr)) {
                            *o = pv * (gv - s);
                        }
                    }
                    accumulate(&mut grads[*a], da);
                }
                Op::Normalize { x, inv_std } => {
                    let y = &node.value;
                    let n = y.cols as f64;
                    let mut dx = Tensor::zeros(y.rows, y.cols);
                    for i in 0..y.rows {
                        let (yr, gr) = (y.row(i), g.row(i));
                        let mean_g = gr.iter().sum::<f64>() / n;
                        let mean_gy = dot(gr, yr) / n;
                        for (o, (&yv, &gv)) in dx.row_mut(i).iter_mut().zip(yr.iter().zip(gr)) {
                            *o = inv_std[i] * (gv - mean_g - yv * mean_gy);
                        }
                    }
                    accumulate(&mut grads[*x], dx);
                }
                Op::SliceCols { x, start } => {
                    let xv = &self.nodes[*x].value;
                    let mut dx = Tensor::zeros(xv.rows, xv.cols);
                    for i in 0..g.rows {
                        dx.row_mut(i)[*start..*start + g.cols].copy_from_slice(g.row(i));
                    }
                    accumulate(&mut grads[*x], dx);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let cols = self.nodes[p].value.cols;
                        let mut dp = Tensor::zeros(g.rows, cols);
                        for i in 0..g.rows {
                            dp.row_mut(i).copy_from_slice(&g.row(i)[offset..offset + cols]);
                        }
                        offset += cols;
                        accumulate(&mut grads[p], dp);
                    }
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    probs,
                } => {
                    let upstream = g.data[0];
                    let mut dl = probs.clone();
                    for (i, &t) in targets.iter().enumerate() {
                        dl.data[i * dl.cols + t] -= 1.0;
                    }
                    for v in &mut dl.data {
                        *v *= upstream;
                    }
                    accumulate(&mut grads[*logits], dl);
                }
            }
        }
        params
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(existing) => existing.add_assign(&g),
        None => *slot = Some(g),
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn row_softmax(t: &Tensor) -> Tensor {
    let mut out = t.clone();
    for i in 0..out.rows {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numeric_check(build: impl Fn(&mut Tape, &[Tensor]) -> NodeId, params: Vec<Tensor>) {
        let mut tape = Tape::new(params.len());
        let root = build(&mut tape, &params);
        let grads = tape.backward(root);
        let h = 1e-6;
        for (pi, p) in params.iter().enumerate() {
            let g = grads[pi].as_ref().expect("gradient");
            for k in 0..p.len() {
                let eval = |delta: f64| {
                    let mut ps = params.clone();
                    ps[pi].data[k] += delta;
                    let mut t = Tape::new(ps.len());
                    let r = build(&mut t, &ps);
                    t.value(r).data[0]
                };
                let num = (eval(h) - eval(-h)) / (2.0 * h);
                assert!((num - g.data[k]).abs() < 1e-6 * (1.0 + num.abs()), "param {pi}[{k}]: {num} vs {}", g.data[k]);
            }
        }
    }

    #[test]
    fn attention_block_gradients() {
        let a = Tensor::from_vec(3, 4, (0..12).map(|i| (i as f64 * 0.37).sin()).collect());
        let w = Tensor::from_vec(4, 4, (0..16).map(|i| (i as f64 * 0.71).cos() * 0.5).collect());
        let gain = Tensor::from_vec(1, 4, vec![1.0, 0.9, 1.1, 0.8]);
        let bias = Tensor::from_vec(1, 4, vec![0.1, -0.2, 0.0, 0.3]);
        numeric_check(
            |t, p| {
                let x = t.param(0, &p[0]);
                let w = t.param(1, &p[1]);
                let g = t.param(2, &p[2]);
                let b = t.param(3, &p[3]);
                let n = t.layer_norm(x, g, b);
                let q = t.matmul(n, w);
                let s = t.matmul_bt(q, n);
                let s = t.scale(s, 0.5);
                let pr = t.softmax(s, true);
                let o = t.matmul(pr, n);
                let h1 = t.slice_cols(o, 0, 2);
                let h2 = t.slice_cols(o, 2, 2);
                let c = t.concat_cols(&[h2, h1]);
                let r = t.relu(c);
                let y = t.add(r, x);
                t.cross_entropy(y, &[1, 3, 0])
            },
            vec![a, w, gain, bias],
        );
    }

    #[test]
    fn embedding_gradients() {
        let table = Tensor::from_vec(5, 3, (0..15).map(|i| (i as f64 * 0.3).sin()).collect());
        numeric_check(
            |t, p| {
                let e = t.param(0, &p[0]);
                let x = t.embed(e, &[4, 1, 4]);
                t.cross_entropy(x, &[0, 2, 1])
            },
            vec![table],
        );
    }

    #[test]
    fn causal_softmax_masks_future() {
        let mut t = Tape::new(0);
        let x = t.constant(Tensor::from_vec(2, 2, vec![0.0, 5.0, 1.0, 1.0]));
        let p = t.softmax(x, true);
        assert_eq!(t.value(p).data, vec![1.0, 0.0, 0.5, 0.5]);
    }
}
