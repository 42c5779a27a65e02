//! Reverse-mode differentiation over 2-D f64 arrays.
//!
//! A [`Tape`] records every operation of one forward pass. Parameters are
//! borrowed from a [`Params`] store, never copied; their gradients come back
//! indexed by parameter id.

use ndarray::{s, Array2, ArrayView2, Axis};

pub const LN_EPS: f64 = 1e-5;
pub const LOG_FLOOR: f64 = 1e-12;

/// Named parameter tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Params {
    pub names: Vec<String>,
    pub values: Vec<Array2<f64>>,
}

impl Params {
    pub fn push(&mut self, name: impl Into<String>, value: Array2<f64>) -> usize {
        self.names.push(name.into());
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn count(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

/// Which score entries a row-softmax may use.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mask {
    None,
    /// Row `i` sees columns `j ≤ i + offset`.
    Causal { offset: usize },
    /// Every row sees columns `j < limit`.
    Prefix { limit: usize },
}

impl Mask {
    fn allows(self, i: usize, j: usize) -> bool {
        match self {
            Mask::None => true,
            Mask::Causal { offset } => j <= i + offset,
            Mask::Prefix { limit } => j < limit,
        }
    }
}

enum Op {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Softmax(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Array2<f64>, inv_std: Vec<f64> },
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    /// `Σ_i −w_i · ln max(p[i, target_i], floor)`
    NegLogPick { p: Var, targets: Vec<usize>, weights: Vec<f64> },
}

struct Node {
    value: Option<Array2<f64>>,
    op: Op,
}

pub struct Tape<'p> {
    params: &'p Params,
    nodes: Vec<Node>,
}

fn mm(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    a.dot(&b)
}

fn accumulate(slot: &mut Option<Array2<f64>>, g: Array2<f64>) {
    match slot {
        Some(acc) => *acc += &g,
        None => *slot = Some(g),
    }
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p Params) -> Self {
        Self { params, nodes: Vec::new() }
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value: Some(value), op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        match &self.nodes[v.0].op {
            Op::Param(id) => &self.params.values[*id],
            _ => self.nodes[v.0].value.as_ref().expect("value present"),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Input without a gradient of interest.
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn param(&mut self, id: usize) -> Var {
        self.nodes.push(Node { value: None, op: Op::Param(id) });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = mm(self.value(a).view(), self.value(b).view());
        self.push(v, Op::MatMul(a, b))
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = mm(self.value(a).view(), self.value(b).t());
        self.push(v, Op::MatMulT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    /// Adds the `1 × n` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::AddRow(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a) * s;
        self.push(v, Op::Scale(a, s))
    }

    /// Row-wise softmax. Masked entries are exactly 0.
    pub fn softmax(&mut self, a: Var, mask: Mask) -> Var {
        let v = softmax_rows(self.value(a), mask);
        self.push(v, Op::Softmax(a))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let xv = self.value(x);
        let (rows, cols) = xv.dim();
        let mut xhat = Array2::zeros((rows, cols));
        let mut inv_std = Vec::with_capacity(rows);
        for (i, row) in xv.rows().into_iter().enumerate() {
            let mean = row.sum() / cols as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + LN_EPS).sqrt();
            inv_std.push(is);
            for (j, v) in row.iter().enumerate() {
                xhat[[i, j]] = (v - mean) * is;
            }
        }
        let out = &(&xhat * self.value(gain)) + self.value(bias);
        self.push(out, Op::LayerNorm { x, gain, bias, xhat, inv_std })
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).slice(s![start..start + len, ..]).to_owned();
        self.push(v, Op::SliceRows(a, start))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).slice(s![.., start..start + len]).to_owned();
        self.push(v, Op::SliceCols(a, start))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("matching row counts");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let v = ndarray::concatenate(Axis(0), &views).expect("matching column counts");
        self.push(v, Op::ConcatRows(parts.to_vec()))
    }

    /// Weighted negative log-likelihood of probability rows; a `1 × 1`
    /// result.
    pub fn neg_log_pick(&mut self, p: Var, targets: &[usize], weights: &[f64]) -> Var {
        let pv = self.value(p);
        let total: f64 = targets
            .iter()
            .zip(weights)
            .enumerate()
            .map(|(i, (&t, &w))| -w * pv[[i, t]].max(LOG_FLOOR).ln())
            .sum();
        self.push(
            Array2::from_elem((1, 1), total),
            Op::NegLogPick { p, targets: targets.to_vec(), weights: weights.to_vec() },
        )
    }

    /// Gradients of the scalar `out` with respect to every parameter, by
    /// parameter id. Parameters not reached get `None`.
    pub fn backward(&self, out: Var) -> Vec<Option<Array2<f64>>> {
        let mut grads: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut pgrads: Vec<Option<Array2<f64>>> = (0..self.params.len()).map(|_| None).collect();
        grads[out.0] = Some(Array2::ones(self.value(out).dim()));
        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::Param(id) => accumulate(&mut pgrads[*id], g),
                Op::MatMul(a, b) => {
                    let ga = mm(g.view(), self.value(*b).t());
                    let gb = mm(self.value(*a).t(), g.view());
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::MatMulT(a, b) => {
                    let ga = mm(g.view(), self.value(*b).view());
                    let gb = mm(g.t(), self.value(*a).view());
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[b.0], g.clone());
                    accumulate(&mut grads[a.0], g);
                }
                Op::AddRow(a, b) => {
                    let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads[b.0], gb);
                    accumulate(&mut grads[a.0], g);
                }
                Op::Scale(a, s) => accumulate(&mut grads[a.0], g * *s),
                Op::Softmax(a) => {
                    let y = self.value(Var(i));
                    let mut ga = &g * y;
                    for (mut row, yrow) in ga.rows_mut().into_iter().zip(y.rows()) {
                        let dot = row.sum();
                        row.zip_mut_with(&yrow, |r, &yv| *r -= yv * dot);
                    }
                    accumulate(&mut grads[a.0], ga);
                }
                Op::LayerNorm { x, gain, bias, xhat, inv_std } => {
                    let gain_v = self.value(*gain);
                    accumulate(&mut grads[bias.0], g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    accumulate(&mut grads[gain.0], (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)));
                    let gh = &g * gain_v;
                    let n = xhat.ncols() as f64;
                    let mut gx = Array2::zeros(xhat.dim());
                    for r in 0..xhat.nrows() {
                        let ghr = gh.row(r);
                        let xr = xhat.row(r);
                        let m1 = ghr.sum() / n;
                        let m2 = ghr.dot(&xr) / n;
                        for c in 0..xhat.ncols() {
                            gx[[r, c]] = inv_std[r] * (ghr[c] - m1 - xr[c] * m2);
                        }
                    }
                    accumulate(&mut grads[x.0], gx);
                }
                Op::SliceRows(a, start) => {
                    let mut ga = Array2::zeros(self.value(*a).dim());
                    ga.slice_mut(s![*start..*start + g.nrows(), ..]).assign(&g);
                    accumulate(&mut grads[a.0], ga);
                }
                Op::SliceCols(a, start) => {
                    let mut ga = Array2::zeros(self.value(*a).dim());
                    ga.slice_mut(s![.., *start..*start + g.ncols()]).assign(&g);
                    accumulate(&mut grads[a.0], ga);
                }
                Op::ConcatCols(parts) => {
                    let mut at = 0;
                    for p in parts {
                        let w = self.value(*p).ncols();
                        accumulate(&mut grads[p.0], g.slice(s![.., at..at + w]).to_owned());
                        at += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut at = 0;
                    for p in parts {
                        let h = self.value(*p).nrows();
                        accumulate(&mut grads[p.0], g.slice(s![at..at + h, ..]).to_owned());
                        at += h;
                    }
                }
                Op::NegLogPick { p, targets, weights } => {
                    let pv = self.value(*p);
                    let mut gp = Array2::zeros(pv.dim());
                    for (r, (&t, &w)) in targets.iter().zip(weights).enumerate() {
                        if pv[[r, t]] > LOG_FLOOR {
                            gp[[r, t]] = -w * g[[0, 0]] / pv[[r, t]];
                        }
                    }
                    accumulate(&mut grads[p.0], gp);
                }
            }
        }
        pgrads
    }
}

/// Row-wise softmax with masking; stable via the row maximum over allowed
/// entries. A row with no allowed entry is all zeros.
pub fn softmax_rows(a: &Array2<f64>, mask: Mask) -> Array2<f64> {
    let mut out = Array2::zeros(a.dim());
    for (i, row) in a.rows().into_iter().enumerate() {
        let mut max = f64::NEG_INFINITY;
        for (j, &v) in row.iter().enumerate() {
            if mask.allows(i, j) && v > max {
                max = v;
            }
        }
        if max == f64::NEG_INFINITY {
            continue;
        }
        let mut sum = 0.0;
        for (j, &v) in row.iter().enumerate() {
            if mask.allows(i, j) {
                let e = (v - max).exp();
                out[[i, j]] = e;
                sum += e;
            }
        }
        out.row_mut(i).mapv_inplace(|e| e / sum);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn numeric_grad(params: &mut Params, id: usize, f: &dyn Fn(&Params) -> f64) -> Array2<f64> {
        let h = 1e-6;
        let mut g = Array2::zeros(params.values[id].dim());
        for idx in 0..g.len() {
            let (r, c) = (idx / g.ncols(), idx % g.ncols());
            let orig = params.values[id][[r, c]];
            params.values[id][[r, c]] = orig + h;
            let up = f(params);
            params.values[id][[r, c]] = orig - h;
            let down = f(params);
            params.values[id][[r, c]] = orig;
            g[[r, c]] = (up - down) / (2.0 * h);
        }
        g
    }

    #[test]
    fn every_op_differentiates() {
        let mut params = Params::default();
        let a = params.push("a", array![[0.3, -0.2, 0.5], [0.1, 0.4, -0.6]]);
        let b = params.push("b", array![[0.2, -0.1], [0.7, 0.3], [-0.4, 0.5]]);
        let g = params.push("g", array![[1.1, 0.9, 1.3]]);
        let bias = params.push("bias", array![[0.05, -0.02, 0.01]]);
        let forward = |p: &Params| -> (f64, Vec<Option<Array2<f64>>>) {
            let mut t = Tape::new(p);
            let (va, vb, vg, vbias) = (t.param(a), t.param(b), t.param(g), t.param(bias));
            let ln = t.layer_norm(va, vg, vbias);
            let ab = t.matmul(ln, vb);
            let sc = t.matmul_t(ab, ab);
            let sc = t.scale(sc, 0.7);
            let att = t.softmax(sc, Mask::Causal { offset: 0 });
            let mixed = t.matmul(att, va);
            let left = t.slice_cols(mixed, 0, 2);
            let right = t.slice_cols(mixed, 2, 1);
            let cat = t.concat_cols(&[right, left]);
            let top = t.slice_rows(cat, 0, 1);
            let stacked = t.concat_rows(&[cat, top]);
            let sum = t.add(stacked, stacked);
            let sum = t.add_row(sum, vbias);
            let p = t.softmax(sum, Mask::None);
            let loss = t.neg_log_pick(p, &[2, 0, 1], &[0.5, 1.5, 1.0]);
            let value = t.value(loss)[[0, 0]];
            (value, t.backward(loss))
        };
        let (_, grads) = forward(&params);
        for id in 0..params.len() {
            let num = numeric_grad(&mut params, id, &|p| forward(p).0);
            let ana = grads[id].as_ref().unwrap();
            for (x, y) in ana.iter().zip(num.iter()) {
                assert!((x - y).abs() <= 1e-7 * (1.0 + y.abs()), "{}: {x} vs {y}", params.names[id]);
            }
        }
    }

    #[test]
    fn masked_softmax() {
        let a = array![[1.0, 2.0, 3.0], [0.0, 0.0, 9.0]];
        let c = softmax_rows(&a, Mask::Causal { offset: 0 });
        assert_eq!(c[[0, 0]], 1.0);
        assert_eq!(c[[0, 1]], 0.0);
        assert!((c[[1, 0]] - 0.5).abs() < 1e-15);
        let p = softmax_rows(&a, Mask::Prefix { limit: 2 });
        assert_eq!(p[[1, 2]], 0.0);
        for row in softmax_rows(&a, Mask::None).rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unreached_params_have_no_gradient() {
        let mut params = Params::default();
        let a = params.push("a", array![[1.0]]);
        params.push("unused", array![[2.0]]);
        let mut t = Tape::new(&params);
        let va = t.param(a);
        let y = t.scale(va, 3.0);
        let g = t.backward(y);
        assert_eq!(g[0].as_ref().unwrap()[[0, 0]], 3.0);
        assert!(g[1].is_none());
    }
}
