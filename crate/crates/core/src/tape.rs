//! Reverse-mode differentiation over dense matrices.
//!
//! Every operation appends a node holding its value; `backward` walks the
//! nodes in reverse recording order and accumulates adjoints. Leaves created
//! with [`Tape::param`] are reported by name.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{diag_scale, gemm, gemm_nt, gemm_tn, spmm, DenseMatrix, SparseMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// A sparse operand together with its transpose, shared across tapes.
#[derive(Clone, Debug)]
pub struct SparseOperand {
    pub matrix: Arc<SparseMatrix<f64>>,
    pub transpose: Arc<SparseMatrix<f64>>,
}

impl SparseOperand {
    pub fn new(matrix: SparseMatrix<f64>) -> Self {
        let transpose = matrix.transpose();
        Self {
            matrix: Arc::new(matrix),
            transpose: Arc::new(transpose),
        }
    }

    pub fn transposed(&self) -> Self {
        Self {
            matrix: self.transpose.clone(),
            transpose: self.matrix.clone(),
        }
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    SpMM(SparseOperand, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    DiagScale(Arc<Vec<f64>>, Var),
    SumRows(Var),
    SumCols(Var),
    SumAll(Var),
    BroadcastRows(Var),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Arc<Vec<usize>>),
    LogSigmoid(Var),
}

struct Node {
    value: DenseMatrix,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(String, Var)>,
}

pub type Gradients = BTreeMap<String, DenseMatrix>;

fn mismatch(op: &'static str, a: &DenseMatrix, b: &DenseMatrix) -> Error {
    Error::DimensionMismatch {
        op,
        left: a.shape(),
        right: b.shape(),
    }
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

    fn push(&mut self, value: DenseMatrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &DenseMatrix {
        &self.nodes[v.0].value
    }

    pub fn constant(&mut self, value: DenseMatrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn param(&mut self, name: &str, value: DenseMatrix) -> Var {
        let v = self.push(value, Op::Leaf);
        self.params.push((name.to_string(), v));
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = gemm(self.value(a), self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn spmm(&mut self, s: &SparseOperand, x: Var) -> Result<Var> {
        let value = spmm(&s.matrix, self.value(x))?;
        Ok(self.push(value, Op::SpMM(s.clone(), x)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        Ok(self.push(value, Op::Sub(a, b)))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).hadamard(self.value(b))?;
        Ok(self.push(value, Op::Hadamard(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).scale(factor);
        self.push(value, Op::Scale(a, factor))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.push(value, Op::Relu(a))
    }

    /// Which ReLU inputs are positive, over every ReLU on the tape in order.
    /// Two evaluations with different patterns lie on different linear
    /// pieces of the network.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(a) => Some(a),
                _ => None,
            })
            .flat_map(|a| self.value(a).as_slice().iter().map(|&x| x > 0.0))
            .collect()
    }

    /// Row `i` of `a` scaled by `d[i]`.
    pub fn diag_scale(&mut self, d: Arc<Vec<f64>>, a: Var) -> Result<Var> {
        let value = diag_scale(&d, self.value(a))?;
        Ok(self.push(value, Op::DiagScale(d, a)))
    }

    /// `r × c → 1 × c`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let value = self.value(a).sum_rows();
        self.push(value, Op::SumRows(a))
    }

    /// `r × c → r × 1`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let data = (0..x.rows()).map(|r| x.row(r).iter().sum()).collect();
        let value = DenseMatrix::from_vec(x.rows(), 1, data).expect("shape");
        self.push(value, Op::SumCols(a))
    }

    /// `r × c → 1 × 1`.
    pub fn sum_all(&mut self, a: Var) -> Var {
        let value = DenseMatrix::filled(1, 1, self.value(a).sum());
        self.push(value, Op::SumAll(a))
    }

    /// `1 × c → n × c`.
    pub fn broadcast_rows(&mut self, a: Var, n: usize) -> Result<Var> {
        let x = self.value(a);
        if x.rows() != 1 {
            return Err(Error::DimensionMismatch {
                op: "broadcast_rows",
                left: x.shape(),
                right: (1, x.cols()),
            });
        }
        let mut data = Vec::with_capacity(n * x.cols());
        for _ in 0..n {
            data.extend_from_slice(x.row(0));
        }
        let value = DenseMatrix::from_vec(n, x.cols(), data).expect("shape");
        Ok(self.push(value, Op::BroadcastRows(a)))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).rows();
        for &p in parts {
            if self.value(p).rows() != rows {
                return Err(mismatch("concat_cols", self.value(parts[0]), self.value(p)));
            }
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let value = DenseMatrix::from_vec(rows, cols, data).expect("shape");
        Ok(self.push(value, Op::ConcatCols(parts.to_vec())))
    }

    pub fn gather_rows(&mut self, a: Var, index: Arc<Vec<usize>>) -> Result<Var> {
        let x = self.value(a);
        if let Some(&bad) = index.iter().find(|&&i| i >= x.rows()) {
            return Err(Error::DimensionMismatch {
                op: "gather_rows",
                left: x.shape(),
                right: (bad, x.cols()),
            });
        }
        let mut data = Vec::with_capacity(index.len() * x.cols());
        for &i in index.iter() {
            data.extend_from_slice(x.row(i));
        }
        let value = DenseMatrix::from_vec(index.len(), x.cols(), data).expect("shape");
        Ok(self.push(value, Op::GatherRows(a, index)))
    }

    /// Elementwise `log σ(x)`, computed stably.
    pub fn log_sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(log_sigmoid);
        self.push(value, Op::LogSigmoid(a))
    }

    /// Adjoints of every named parameter with respect to the scalar `output`.
    /// Parameters recorded more than once have their adjoints summed.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out = self.value(output);
        if out.shape() != (1, 1) {
            return Err(Error::DimensionMismatch {
                op: "backward",
                left: out.shape(),
                right: (1, 1),
            });
        }
        let mut adj: Vec<Option<DenseMatrix>> = vec![None; output.0 + 1];
        adj[output.0] = Some(DenseMatrix::filled(1, 1, 1.0));
        for i in (0..=output.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            self.propagate(i, &g, &mut adj)?;
            adj[i] = Some(g);
        }
        let mut grads = Gradients::new();
        for (name, v) in &self.params {
            let value = self.value(*v);
            let g = match adj.get(v.0).and_then(|g| g.clone()) {
                Some(g) => g,
                None => DenseMatrix::zeros(value.rows(), value.cols()),
            };
            if !g.is_finite() {
                return Err(Error::NonFiniteGradient(name.clone()));
            }
            match grads.get_mut(name) {
                Some(acc) => acc.add_assign(&g)?,
                None => {
                    grads.insert(name.clone(), g);
                }
            }
        }
        Ok(grads)
    }

    fn propagate(&self, i: usize, g: &DenseMatrix, adj: &mut [Option<DenseMatrix>]) -> Result<()> {
        let mut accumulate = |v: Var, delta: DenseMatrix| -> Result<()> {
            match &mut adj[v.0] {
                Some(acc) => acc.add_assign(&delta),
                slot => {
                    *slot = Some(delta);
                    Ok(())
                }
            }
        };
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                accumulate(*a, gemm_nt(g, self.value(*b))?)?;
                accumulate(*b, gemm_tn(self.value(*a), g)?)?;
            }
            Op::SpMM(s, x) => accumulate(*x, spmm(&s.transpose, g)?)?,
            Op::Add(a, b) => {
                accumulate(*a, g.clone())?;
                accumulate(*b, g.clone())?;
            }
            Op::Sub(a, b) => {
                accumulate(*a, g.clone())?;
                accumulate(*b, g.scale(-1.0))?;
            }
            Op::Hadamard(a, b) => {
                accumulate(*a, g.hadamard(self.value(*b))?)?;
                accumulate(*b, g.hadamard(self.value(*a))?)?;
            }
            Op::Scale(a, f) => accumulate(*a, g.scale(*f))?,
            Op::Relu(a) => {
                let mask = self.value(*a).map(|x| if x > 0.0 { 1.0 } else { 0.0 });
                accumulate(*a, g.hadamard(&mask)?)?;
            }
            Op::DiagScale(d, a) => accumulate(*a, diag_scale(d, g)?)?,
            Op::SumRows(a) => {
                let rows = self.value(*a).rows();
                let mut data = Vec::with_capacity(rows * g.cols());
                for _ in 0..rows {
                    data.extend_from_slice(g.row(0));
                }
                accumulate(*a, DenseMatrix::from_vec(rows, g.cols(), data)?)?;
            }
            Op::SumCols(a) => {
                let (rows, cols) = self.value(*a).shape();
                let data = (0..rows)
                    .flat_map(|r| std::iter::repeat_n(g.get(r, 0), cols))
                    .collect();
                accumulate(*a, DenseMatrix::from_vec(rows, cols, data)?)?;
            }
            Op::SumAll(a) => {
                let (rows, cols) = self.value(*a).shape();
                accumulate(*a, DenseMatrix::filled(rows, cols, g.get(0, 0)))?;
            }
            Op::BroadcastRows(a) => accumulate(*a, g.sum_rows())?,
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let cols = self.value(p).cols();
                    let mut piece = DenseMatrix::zeros(g.rows(), cols);
                    for r in 0..g.rows() {
                        piece
                            .row_mut(r)
                            .copy_from_slice(&g.row(r)[offset..offset + cols]);
                    }
                    offset += cols;
                    accumulate(p, piece)?;
                }
            }
            Op::GatherRows(a, index) => {
                let (rows, cols) = self.value(*a).shape();
                let mut scattered = DenseMatrix::zeros(rows, cols);
                for (k, &r) in index.iter().enumerate() {
                    for (o, v) in scattered.row_mut(r).iter_mut().zip(g.row(k)) {
                        *o += v;
                    }
                }
                accumulate(*a, scattered)?;
            }
            Op::LogSigmoid(a) => {
                // d/dx log σ(x) = σ(−x)
                let d = self.value(*a).map(|x| sigmoid(-x));
                accumulate(*a, g.hadamard(&d)?)?;
            }
        }
        Ok(())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, data: &[f64]) -> DenseMatrix {
        DenseMatrix::from_vec(rows, cols, data.to_vec()).unwrap()
    }

    /// Central differences of `f` with respect to every entry of `x`.
    fn numeric(x: &DenseMatrix, f: &dyn Fn(&DenseMatrix) -> f64) -> DenseMatrix {
        let eps = 1e-6;
        let mut out = DenseMatrix::zeros(x.rows(), x.cols());
        for i in 0..x.len() {
            let mut hi = x.clone();
            hi.as_mut_slice()[i] += eps;
            let mut lo = x.clone();
            lo.as_mut_slice()[i] -= eps;
            out.as_mut_slice()[i] = (f(&hi) - f(&lo)) / (2.0 * eps);
        }
        out
    }

    fn assert_close(a: &DenseMatrix, b: &DenseMatrix, tol: f64) {
        assert_eq!(a.shape(), b.shape());
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!(
                (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs())),
                "{x} vs {y}"
            );
        }
    }

    #[test]
    fn affine_gradients_are_exact() {
        let x = m(2, 3, &[1.0, -2.0, 0.5, 3.0, 1.5, -1.0]);
        let w = m(3, 1, &[0.2, -0.7, 1.1]);
        let build = |w: &DenseMatrix| {
            let mut t = Tape::new();
            let xv = t.constant(x.clone());
            let wv = t.param("w", w.clone());
            let y = t.matmul(xv, wv).unwrap();
            let s = t.sum_all(y);
            (t, s)
        };
        let (t, s) = build(&w);
        let g = t.backward(s).unwrap();
        // d/dw Σ xw = column sums of x
        assert_eq!(g["w"], m(3, 1, &[4.0, -0.5, -0.5]));
        let num = numeric(&w, &|w| {
            let (t, s) = build(w);
            t.value(s).get(0, 0)
        });
        assert_close(&g["w"], &num, 1e-9);
    }

    #[test]
    fn composite_ops_match_finite_differences() {
        let sparse = SparseOperand::new(
            SparseMatrix::from_triplets(3, 2, vec![(0, 0, 2.0), (1, 1, -1.0), (2, 0, 0.5)])
                .unwrap(),
        );
        let d = Arc::new(vec![1.0, 2.0, 3.0]);
        let idx = Arc::new(vec![2, 0, 2]);
        let a0 = m(2, 2, &[0.3, -0.4, 0.9, 0.1]);
        let f = |a: &DenseMatrix| {
            let mut t = Tape::new();
            let av = t.param("a", a.clone());
            let s = t.spmm(&sparse, av).unwrap(); // 3×2
            let r = t.relu(s);
            let ds = t.diag_scale(d.clone(), r).unwrap();
            let h = t.hadamard(ds, s).unwrap();
            let pooled = t.sum_rows(h); // 1×2
            let b = t.broadcast_rows(pooled, 3).unwrap();
            let c = t.concat_cols(&[b, s]).unwrap(); // 3×4
            let gth = t.gather_rows(c, idx.clone()).unwrap();
            let sc = t.sum_cols(gth);
            let ls = t.log_sigmoid(sc);
            let sub = t.sub(ls, sc).unwrap();
            let sc2 = t.scale(sub, 0.5);
            let out = t.sum_all(sc2);
            (t, out)
        };
        let (t, out) = f(&a0);
        let g = t.backward(out).unwrap();
        let num = numeric(&a0, &|a| {
            let (t, o) = f(a);
            t.value(o).get(0, 0)
        });
        assert_close(&g["a"], &num, 1e-7);
    }

    #[test]
    fn unused_param_gets_zero_buffer() {
        let mut t = Tape::new();
        let a = t.param("used", m(1, 1, &[2.0]));
        t.param("frozen", m(2, 2, &[1.0; 4]));
        let s = t.sum_all(a);
        let g = t.backward(s).unwrap();
        assert_eq!(g["frozen"], DenseMatrix::zeros(2, 2));
        assert_eq!(g["used"], m(1, 1, &[1.0]));
    }

    #[test]
    fn reused_param_accumulates() {
        let mut t = Tape::new();
        let a1 = t.param("w", m(1, 1, &[3.0]));
        let a2 = t.param("w", m(1, 1, &[3.0]));
        let p = t.hadamard(a1, a2).unwrap();
        let s = t.sum_all(p);
        assert_eq!(t.backward(s).unwrap()["w"], m(1, 1, &[6.0]));
    }

    #[test]
    fn relu_pattern_lists_positive_inputs_of_every_relu() {
        let mut t = Tape::new();
        let a = t.param("a", m(1, 3, &[-1.0, 0.0, 2.0]));
        let r = t.relu(a);
        let b = t.scale(r, -1.0);
        t.relu(b);
        assert_eq!(
            t.relu_pattern(),
            vec![false, false, true, false, false, false]
        );
    }

    #[test]
    fn relu_gradient_is_zero_at_zero() {
        let mut t = Tape::new();
        let a = t.param("a", m(1, 3, &[-1.0, 0.0, 1.0]));
        let r = t.relu(a);
        let s = t.sum_all(r);
        assert_eq!(t.backward(s).unwrap()["a"], m(1, 3, &[0.0, 0.0, 1.0]));
    }

    #[test]
    fn non_scalar_output_is_rejected() {
        let mut t = Tape::new();
        let a = t.param("a", m(1, 2, &[1.0, 2.0]));
        assert!(t.backward(a).is_err());
    }

    #[test]
    fn stable_log_sigmoid() {
        assert!((log_sigmoid(0.0) + std::f64::consts::LN_2).abs() < 1e-15);
        assert!(log_sigmoid(800.0).abs() < 1e-300);
        assert!((log_sigmoid(-800.0) + 800.0).abs() < 1e-9);
        assert!((sigmoid(3.0) + sigmoid(-3.0) - 1.0).abs() < 1e-15);
    }
}
