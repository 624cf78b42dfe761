//! Tape-based reverse-mode automatic differentiation.
//!
//! Ops are recorded in execution order during the forward pass and replayed
//! in reverse to accumulate adjoints into each tensor's grad slot. A tape and
//! its tensors are confined to one thread; independent tapes may run in
//! parallel.
//!
//! All math is 64-bit. Unary ops are defined on inputs where the result is
//! finite (`exp` overflows around 710; callers that need exp of large values
//! go through the max-subtracted softmax / log-sum-exp paths instead).

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a tensor living on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(usize);

#[derive(Debug, Clone)]
enum Op {
    MatMul { a: TensorId, b: TensorId, out: TensorId },
    MatVec { m: TensorId, v: TensorId, out: TensorId },
    Add { a: TensorId, b: TensorId, out: TensorId },
    Sub { a: TensorId, b: TensorId, out: TensorId },
    Mul { a: TensorId, b: TensorId, out: TensorId },
    Sigmoid { x: TensorId, out: TensorId },
    Tanh { x: TensorId, out: TensorId },
    Exp { x: TensorId, out: TensorId },
    Log { x: TensorId, out: TensorId },
    Scale { x: TensorId, c: f64, out: TensorId },
    AddScalar { x: TensorId, out: TensorId },
    Sum { x: TensorId, out: TensorId },
    Pick { x: TensorId, index: usize, out: TensorId },
    Row { x: TensorId, index: usize, out: TensorId },
    StackRows { rows: Vec<TensorId>, out: TensorId },
    Softmax { x: TensorId, out: TensorId },
}

/// Ordered record of executed primitive ops plus the arena of their tensors.
pub struct Tape {
    nodes: Vec<Tensor>,
    ops: Vec<Op>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            ops: Vec::new(),
        }
    }

    /// Register an input tensor (parameter or constant). Leaves record no op;
    /// gradients accumulate into them during backward.
    pub fn leaf(&mut self, t: Tensor) -> TensorId {
        let id = TensorId(self.nodes.len());
        self.nodes.push(t);
        id
    }

    pub fn tensor(&self, id: TensorId) -> &Tensor {
        &self.nodes[id.0]
    }

    pub fn data(&self, id: TensorId) -> &[f64] {
        self.nodes[id.0].data()
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        self.nodes[id.0].shape()
    }

    /// Value of a scalar node.
    pub fn value(&self, id: TensorId) -> Result<f64> {
        self.nodes[id.0].item()
    }

    /// Gradient accumulated into `id` by the last backward pass.
    pub fn grad(&self, id: TensorId) -> Option<&[f64]> {
        self.nodes[id.0].grad()
    }

    fn push(&mut self, t: Tensor, op: impl FnOnce(TensorId) -> Op) -> TensorId {
        let out = TensorId(self.nodes.len());
        self.nodes.push(t);
        let op = op(out);
        self.ops.push(op);
        out
    }

    // ── forward ops ──────────────────────────────────────────────────

    /// `[m,k] x [k,n] -> [m,n]` matrix product.
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: sa,
                rhs: sb,
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut data = vec![0.0; m * n];
        let (da, db) = (self.data(a), self.data(b));
        for i in 0..m {
            for p in 0..k {
                let aip = da[i * k + p];
                for j in 0..n {
                    data[i * n + j] += aip * db[p * n + j];
                }
            }
        }
        let t = Tensor::new(vec![m, n], data)?;
        Ok(self.push(t, |out| Op::MatMul { a, b, out }))
    }

    /// `[r,c] x [c] -> [r]` matrix-vector product.
    pub fn matvec(&mut self, m: TensorId, v: TensorId) -> Result<TensorId> {
        let (sm, sv) = (self.shape(m).to_vec(), self.shape(v).to_vec());
        if sm.len() != 2 || sv.len() != 1 || sm[1] != sv[0] {
            return Err(Error::ShapeMismatch {
                op: "matvec",
                lhs: sm,
                rhs: sv,
            });
        }
        let (r, c) = (sm[0], sm[1]);
        let (dm, dv) = (self.data(m), self.data(v));
        let mut data = vec![0.0; r];
        for i in 0..r {
            let mut acc = 0.0;
            for j in 0..c {
                acc += dm[i * c + j] * dv[j];
            }
            data[i] = acc;
        }
        Ok(self.push(Tensor::vector(data), |out| Op::MatVec { m, v, out }))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: TensorId,
        b: TensorId,
        f: impl Fn(f64, f64) -> f64,
        op: impl FnOnce(TensorId) -> Op,
    ) -> Result<TensorId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::ShapeMismatch {
                op: name,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let data: Vec<f64> = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.shape(a).to_vec();
        let t = Tensor::new(shape, data)?;
        Ok(self.push(t, op))
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary("add", a, b, |x, y| x + y, |out| Op::Add { a, b, out })
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary("sub", a, b, |x, y| x - y, |out| Op::Sub { a, b, out })
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary("mul", a, b, |x, y| x * y, |out| Op::Mul { a, b, out })
    }

    fn unary(
        &mut self,
        x: TensorId,
        f: impl Fn(f64) -> f64,
        op: impl FnOnce(TensorId) -> Op,
    ) -> TensorId {
        let data: Vec<f64> = self.data(x).iter().map(|&v| f(v)).collect();
        let shape = self.shape(x).to_vec();
        let t = Tensor::new(shape, data).expect("unary preserves shape");
        self.push(t, op)
    }

    pub fn sigmoid(&mut self, x: TensorId) -> TensorId {
        self.unary(x, |v| 1.0 / (1.0 + (-v).exp()), |out| Op::Sigmoid { x, out })
    }

    pub fn tanh(&mut self, x: TensorId) -> TensorId {
        self.unary(x, f64::tanh, |out| Op::Tanh { x, out })
    }

    pub fn exp(&mut self, x: TensorId) -> TensorId {
        self.unary(x, f64::exp, |out| Op::Exp { x, out })
    }

    /// Natural log; requires strictly positive input.
    pub fn log(&mut self, x: TensorId) -> Result<TensorId> {
        if let Some(v) = self.data(x).iter().find(|v| **v <= 0.0) {
            return Err(Error::Domain(format!("log of nonpositive value {v}")));
        }
        Ok(self.unary(x, f64::ln, |out| Op::Log { x, out }))
    }

    /// Scalar-tensor product `c * x`.
    pub fn scale(&mut self, x: TensorId, c: f64) -> TensorId {
        self.unary(x, |v| c * v, |out| Op::Scale { x, c, out })
    }

    /// Scalar-tensor sum `x + c`.
    pub fn add_scalar(&mut self, x: TensorId, c: f64) -> TensorId {
        self.unary(x, |v| v + c, |out| Op::AddScalar { x, out })
    }

    /// Reduce all entries to a scalar sum (shape `[1]`).
    pub fn sum(&mut self, x: TensorId) -> TensorId {
        let s: f64 = self.data(x).iter().sum();
        self.push(Tensor::scalar(s), |out| Op::Sum { x, out })
    }

    /// Select one entry of a 1-D tensor as a scalar.
    pub fn pick(&mut self, x: TensorId, index: usize) -> Result<TensorId> {
        if self.shape(x).len() != 1 || index >= self.data(x).len() {
            return Err(Error::Domain(format!(
                "pick index {index} out of range for shape {:?}",
                self.shape(x)
            )));
        }
        let v = self.data(x)[index];
        Ok(self.push(Tensor::scalar(v), |out| Op::Pick { x, index, out }))
    }

    /// Extract row `index` of a 2-D tensor as a 1-D tensor.
    pub fn row(&mut self, x: TensorId, index: usize) -> Result<TensorId> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 || index >= s[0] {
            return Err(Error::Domain(format!(
                "row index {index} out of range for shape {s:?}"
            )));
        }
        let cols = s[1];
        let data = self.data(x)[index * cols..(index + 1) * cols].to_vec();
        Ok(self.push(Tensor::vector(data), |out| Op::Row { x, index, out }))
    }

    /// Stack equal-length 1-D tensors into a `[k, n]` matrix.
    pub fn stack_rows(&mut self, rows: &[TensorId]) -> Result<TensorId> {
        if rows.is_empty() {
            return Err(Error::EmptyInput("stack_rows"));
        }
        let n = self.data(rows[0]).len();
        let mut data = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            if self.shape(r).len() != 1 || self.data(r).len() != n {
                return Err(Error::ShapeMismatch {
                    op: "stack_rows",
                    lhs: vec![n],
                    rhs: self.shape(r).to_vec(),
                });
            }
            data.extend_from_slice(self.data(r));
        }
        let t = Tensor::new(vec![rows.len(), n], data)?;
        let rows = rows.to_vec();
        Ok(self.push(t, |out| Op::StackRows { rows, out }))
    }

    /// Numerically stable softmax of a 1-D tensor (max subtraction).
    pub fn softmax(&mut self, x: TensorId) -> Result<TensorId> {
        if self.shape(x).len() != 1 {
            return Err(Error::ShapeMismatch {
                op: "softmax",
                lhs: self.shape(x).to_vec(),
                rhs: vec![0],
            });
        }
        let d = self.data(x);
        let m = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = d.iter().map(|&v| (v - m).exp()).collect();
        let s: f64 = e.iter().sum();
        let data: Vec<f64> = e.iter().map(|&v| v / s).collect();
        Ok(self.push(Tensor::vector(data), |out| Op::Softmax { x, out }))
    }

    // ── backward ─────────────────────────────────────────────────────

    /// Reverse sweep seeding `d out = 1`. `out` must be scalar. All grad
    /// slots are cleared first, so repeated calls are reproducible bitwise.
    pub fn backward(&mut self, out: TensorId) -> Result<()> {
        if !self.nodes[out.0].is_scalar() {
            return Err(Error::ShapeMismatch {
                op: "backward",
                lhs: self.nodes[out.0].shape().to_vec(),
                rhs: vec![1],
            });
        }
        for node in &mut self.nodes {
            node.clear_grad();
        }
        self.nodes[out.0].grad_mut()[0] = 1.0;

        for i in (0..self.ops.len()).rev() {
            let op = self.ops[i].clone();
            self.backward_op(&op);
        }
        Ok(())
    }

    fn out_grad(&self, out: TensorId) -> Option<Vec<f64>> {
        self.nodes[out.0].grad().map(|g| g.to_vec())
    }

    fn accumulate(&mut self, id: TensorId, contrib: &[f64]) {
        let grad = self.nodes[id.0].grad_mut();
        for (g, c) in grad.iter_mut().zip(contrib) {
            *g += c;
        }
    }

    fn backward_op(&mut self, op: &Op) {
        match *op {
            Op::MatMul { a, b, out } => {
                let Some(g) = self.out_grad(out) else { return };
                let (m, k) = (self.shape(a)[0], self.shape(a)[1]);
                let n = self.shape(b)[1];
                // dA = dC . B^T
                let db = self.data(b).to_vec();
                let mut da = vec![0.0; m * k];
                for i in 0..m {
                    for p in 0..k {
                        let mut acc = 0.0;
                        for j in 0..n {
                            acc += g[i * n + j] * db[p * n + j];
                        }
                        da[i * k + p] = acc;
                    }
                }
                self.accumulate(a, &da);
                // dB = A^T . dC
                let dat = self.data(a).to_vec();
                let mut dbg = vec![0.0; k * n];
                for p in 0..k {
                    for i in 0..m {
                        let aip = dat[i * k + p];
                        for j in 0..n {
                            dbg[p * n + j] += aip * g[i * n + j];
                        }
                    }
                }
                self.accumulate(b, &dbg);
            }
            Op::MatVec { m, v, out } => {
                let Some(g) = self.out_grad(out) else { return };
                let (r, c) = (self.shape(m)[0], self.shape(m)[1]);
                let dv = self.data(v).to_vec();
                // dM = outer(g, v)
                let mut dm = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        dm[i * c + j] = g[i] * dv[j];
                    }
                }
                self.accumulate(m, &dm);
                // dv = M^T . g
                let dmat = self.data(m).to_vec();
                let mut dvg = vec![0.0; c];
                for i in 0..r {
                    for j in 0..c {
                        dvg[j] += dmat[i * c + j] * g[i];
                    }
                }
                self.accumulate(v, &dvg);
            }
            Op::Add { a, b, out } => {
                let Some(g) = self.out_grad(out) else { return };
                self.accumulate(a, &g);
                self.accumulate(b, &g);
            }
            Op::Sub { a, b, out } => {
                let Some(g) = self.out_grad(out) else { return };
                self.accumulate(a, &g);
                let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                self.accumulate(b, &neg);
            }
            Op::Mul { a, b, out } => {
                let Some(g) = self.out_grad(out) else { return };
                let da: Vec<f64> = g.iter().zip(self.data(b)).map(|(gi, bi)| gi * bi).collect();
                let db: Vec<f64> = g.iter().zip(self.data(a)).map(|(gi, ai)| gi * ai).collect();
                self.accumulate(a, &da);
                self.accumulate(b, &db);
            }
            Op::Sigmoid { x, out } => {
                let Some(g) = self.out_grad(out) else { return };
                // d/dx sigmoid = s(1-s)
                let dx: Vec<f64> = g
                    .iter()
                    .zip(self.data(out))
                    .map(|(gi, s)| gi * s * (1.0 - s))
                    .collect();
                self.accumulate(x, &dx);
            }
            Op::Tanh { x, out } => {
                let Some(g) = self.out_grad(out) else { return };
                // d/dx tanh = 1 - t^2
                let dx: Vec<f64> = g
                    .iter()
                    .zip(self.data(out))
                    .map(|(gi, t)| gi * (1.0 - t * t))
                    .collect();
                self.accumulate(x, &dx);
            }
            Op::Exp { x, out } => {
                let Some(g) = self.out_grad(out) else { return };
                let dx: Vec<f64> = g.iter().zip(self.data(out)).map(|(gi, e)| gi * e).collect();
                self.accumulate(x, &dx);
            }
            Op::Log { x, out } => {
                let Some(g) = self.out_grad(out) else { return };
                let dx: Vec<f64> = g.iter().zip(self.data(x)).map(|(gi, v)| gi / v).collect();
                self.accumulate(x, &dx);
            }
            Op::Scale { x, c, out } => {
                let Some(g) = self.out_grad(out) else { return };
                let dx: Vec<f64> = g.iter().map(|gi| c * gi).collect();
                self.accumulate(x, &dx);
            }
            Op::AddScalar { x, out } => {
                let Some(g) = self.out_grad(out) else { return };
                self.accumulate(x, &g);
            }
            Op::Sum { x, out } => {
                let Some(g) = self.out_grad(out) else { return };
                let dx = vec![g[0]; self.nodes[x.0].numel()];
                self.accumulate(x, &dx);
            }
            Op::Pick { x, index, out } => {
                let Some(g) = self.out_grad(out) else { return };
                let mut dx = vec![0.0; self.nodes[x.0].numel()];
                dx[index] = g[0];
                self.accumulate(x, &dx);
            }
            Op::Row { x, index, out } => {
                let Some(g) = self.out_grad(out) else { return };
                let cols = self.shape(x)[1];
                let mut dx = vec![0.0; self.nodes[x.0].numel()];
                dx[index * cols..(index + 1) * cols].copy_from_slice(&g);
                self.accumulate(x, &dx);
            }
            Op::StackRows { ref rows, out } => {
                let Some(g) = self.out_grad(out) else { return };
                let n = self.nodes[rows[0].0].numel();
                for (i, &r) in rows.iter().enumerate() {
                    self.accumulate(r, &g[i * n..(i + 1) * n]);
                }
            }
            Op::Softmax { x, out } => {
                let Some(g) = self.out_grad(out) else { return };
                // dx_i = s_i (g_i - sum_j g_j s_j)
                let s = self.data(out).to_vec();
                let dot: f64 = g.iter().zip(&s).map(|(gi, si)| gi * si).sum();
                let dx: Vec<f64> = g
                    .iter()
                    .zip(&s)
                    .map(|(gi, si)| si * (gi - dot))
                    .collect();
                self.accumulate(x, &dx);
            }
        }
    }
}

// ── gradient checking ────────────────────────────────────────────────

/// Compare analytic gradients of a scalar-valued tensor program against
/// central finite differences. Returns the max over all parameter entries of
/// `|analytic - numeric| / max(1, |analytic|, |numeric|)`.
pub fn grad_check<F>(f: F, params: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[TensorId]) -> Result<TensorId>,
{
    if eps <= 0.0 {
        return Err(Error::Config(format!("grad_check eps must be > 0, got {eps}")));
    }

    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let ids: Vec<TensorId> = perturbed.iter().map(|p| tape.leaf(p.clone())).collect();
        let out = f(&mut tape, &ids)?;
        tape.value(out)
    };

    // analytic pass
    let mut tape = Tape::new();
    let ids: Vec<TensorId> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let out = f(&mut tape, &ids)?;
    tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = ids
        .iter()
        .map(|&id| {
            tape.grad(id)
                .map(|g| g.to_vec())
                .unwrap_or_else(|| vec![0.0; tape.tensor(id).numel()])
        })
        .collect();

    let mut work: Vec<Tensor> = params.to_vec();
    let mut max_rel: f64 = 0.0;
    for pi in 0..params.len() {
        for j in 0..params[pi].numel() {
            let orig = work[pi].data()[j];
            work[pi].data_mut()[j] = orig + eps;
            let plus = eval(&work)?;
            work[pi].data_mut()[j] = orig - eps;
            let minus = eval(&work)?;
            work[pi].data_mut()[j] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[pi][j];
            let rel = (a - numeric).abs() / 1.0_f64.max(a.abs()).max(numeric.abs());
            max_rel = max_rel.max(rel);
        }
    }
    Ok(max_rel)
}
