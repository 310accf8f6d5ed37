use super::tensor::{matmul, matmul_nt, matmul_tn, Real, Tensor};
use super::AutodiffError;

/// Additive mask entry that removes a position from a softmax row.
pub const MASK_VALUE: f64 = -1e9;

/// Handle to a node recorded in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    Scale(Var, T),
    Concat {
        parts: Vec<Var>,
        axis: Axis,
    },
    Slice {
        src: Var,
        axis: Axis,
        start: usize,
    },
    Softmax(Var),
    LayerNorm {
        x: Var,
        gamma: Option<Var>,
        beta: Option<Var>,
        xhat: Tensor<T>,
        inv_std: Vec<T>,
    },
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    Mean {
        src: Var,
        axis: Axis,
    },
    Max {
        src: Var,
        axis: Axis,
        argmax: Vec<usize>,
    },
    Sum(Var),
    Mse {
        pred: Var,
        target: Tensor<T>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Tensor<T>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    grad: Option<Tensor<T>>,
}

/// Recorded computation. Nodes are appended in evaluation order, so the
/// record is topologically sorted and acyclic by construction.
///
/// ```
/// use kgat::autodiff::{Graph, Tensor};
///
/// let mut g = Graph::<f64>::new();
/// let x = g.param(Tensor::scalar(3.0));
/// let zero = Tensor::scalar(0.0);
/// let loss = g.mse_loss(x, &zero).unwrap();
/// g.backward(loss).unwrap();
/// assert_eq!(g.grad(x).unwrap().item(), 6.0);
/// ```
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    track_kinks: bool,
    kink_signature: u64,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape2(t: &Tensor<impl Real>) -> (usize, usize) {
    (t.rows(), t.cols())
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            track_kinks: false,
            kink_signature: 0xcbf2_9ce4_8422_2325,
        }
    }

    /// Record which side of every relu/max kink the forward pass landed on.
    /// The gradient checker uses this to skip coordinates whose finite
    /// difference crosses a kink.
    pub fn with_kink_tracking() -> Self {
        Graph {
            track_kinks: true,
            ..Self::new()
        }
    }

    pub fn kink_signature(&self) -> u64 {
        self.kink_signature
    }

    fn note_kink(&mut self, bit: u64) {
        if self.track_kinks {
            self.kink_signature = (self.kink_signature ^ bit).wrapping_mul(0x0100_0000_01b3);
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, parents: &[Var]) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a trainable leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    /// Clear accumulated leaf gradients.
    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), AutodiffError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(AutodiffError::shapes(op, sa, sb));
        }
        Ok(())
    }

    fn binary(&mut self, a: Var, b: Var, op: Op<T>, f: impl Fn(T, T) -> T) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        let data = x
            .data()
            .iter()
            .zip(y.data())
            .map(|(&p, &q)| f(p, q))
            .collect();
        let out = Tensor::new(x.shape().to_vec(), data).expect("same shape");
        self.push(out, op, &[a, b])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (x, y) = (self.value(a), self.value(b));
        if x.cols() != y.rows() {
            return Err(AutodiffError::shapes("matmul", x.shape(), y.shape()));
        }
        let out = matmul(x, y);
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.push(out, Op::Transpose(a), &[a])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("add", a, b)?;
        Ok(self.binary(a, b, Op::Add(a, b), |p, q| p + q))
    }

    /// Add a `1 × n` row to every row of `a` (bias broadcast).
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, AutodiffError> {
        let (x, r) = (self.value(a), self.value(row));
        if r.rows() != 1 || r.cols() != x.cols() {
            return Err(AutodiffError::shapes("add_row", x.shape(), r.shape()));
        }
        let (m, n) = shape2(x);
        let out = Tensor::from_fn(m, n, |i, j| x.get(i, j) + r.get(0, j));
        Ok(self.push(out, Op::AddRow(a, row), &[a, row]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("sub", a, b)?;
        Ok(self.binary(a, b, Op::Sub(a, b), |p, q| p - q))
    }

    /// Element-wise product.
    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("hadamard", a, b)?;
        Ok(self.binary(a, b, Op::Hadamard(a, b), |p, q| p * q))
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Var {
        let out = self.value(a).map(|x| x * factor);
        self.push(out, Op::Scale(a, factor), &[a])
    }

    pub fn concat(&mut self, parts: &[Var], axis: Axis) -> Result<Var, AutodiffError> {
        let first = parts
            .first()
            .ok_or(AutodiffError::Empty("concat"))
            .map(|&p| shape2(self.value(p)))?;
        let out = match axis {
            Axis::Rows => {
                let mut data = Vec::new();
                let mut rows = 0;
                for &p in parts {
                    let t = self.value(p);
                    if t.cols() != first.1 {
                        return Err(AutodiffError::shapes(
                            "concat(rows)",
                            self.value(parts[0]).shape(),
                            t.shape(),
                        ));
                    }
                    rows += t.rows();
                    data.extend_from_slice(t.data());
                }
                Tensor::matrix(rows, first.1, data)?
            }
            Axis::Cols => {
                let mut cols = 0;
                for &p in parts {
                    let t = self.value(p);
                    if t.rows() != first.0 {
                        return Err(AutodiffError::shapes(
                            "concat(cols)",
                            self.value(parts[0]).shape(),
                            t.shape(),
                        ));
                    }
                    cols += t.cols();
                }
                let mut data = Vec::with_capacity(first.0 * cols);
                for i in 0..first.0 {
                    for &p in parts {
                        data.extend_from_slice(self.value(p).row(i));
                    }
                }
                Tensor::matrix(first.0, cols, data)?
            }
        };
        Ok(self.push(
            out,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            parts,
        ))
    }

    /// `len` consecutive rows or columns starting at `start`.
    pub fn slice(
        &mut self,
        src: Var,
        axis: Axis,
        start: usize,
        len: usize,
    ) -> Result<Var, AutodiffError> {
        let x = self.value(src);
        let (m, n) = shape2(x);
        let limit = if axis == Axis::Rows { m } else { n };
        if start + len > limit {
            return Err(AutodiffError::Slice {
                shape: x.shape().to_vec(),
                start,
                len,
            });
        }
        let out = match axis {
            Axis::Rows => Tensor::from_fn(len, n, |i, j| x.get(start + i, j)),
            Axis::Cols => Tensor::from_fn(m, len, |i, j| x.get(i, start + j)),
        };
        Ok(self.push(out, Op::Slice { src, axis, start }, &[src]))
    }

    /// Split into consecutive pieces of the given sizes.
    pub fn split(
        &mut self,
        src: Var,
        axis: Axis,
        sizes: &[usize],
    ) -> Result<Vec<Var>, AutodiffError> {
        let mut start = 0;
        let mut out = Vec::with_capacity(sizes.len());
        for &len in sizes {
            out.push(self.slice(src, axis, start, len)?);
            start += len;
        }
        Ok(out)
    }

    /// Row-wise softmax of `x + mask`, stabilized by subtracting the row
    /// maximum. Mask entries are 0 or [`MASK_VALUE`]; a row in which every
    /// entry is masked is an error.
    pub fn softmax_rows(&mut self, x: Var, mask: Option<&Tensor<T>>) -> Result<Var, AutodiffError> {
        let xv = self.value(x);
        let (m, n) = shape2(xv);
        if let Some(mask) = mask {
            if mask.shape() != xv.shape() {
                return Err(AutodiffError::shapes(
                    "softmax mask",
                    xv.shape(),
                    mask.shape(),
                ));
            }
        }
        let masked_threshold = T::of(MASK_VALUE / 2.0);
        let mut out = Tensor::zeros(m, n);
        for i in 0..m {
            if let Some(mask) = mask {
                if mask.row(i).iter().all(|&v| v <= masked_threshold) {
                    return Err(AutodiffError::MaskedRow { row: i });
                }
            }
            let z: Vec<T> = (0..n)
                .map(|j| xv.get(i, j) + mask.map_or(T::zero(), |mk| mk.get(i, j)))
                .collect();
            let max = z.iter().copied().fold(T::neg_infinity(), T::max);
            let e: Vec<T> = z.iter().map(|&v| (v - max).exp()).collect();
            let total: T = e.iter().copied().sum();
            for (j, &ev) in e.iter().enumerate() {
                out.set(i, j, ev / total);
            }
        }
        Ok(self.push(out, Op::Softmax(x), &[x]))
    }

    /// Per-row normalization to zero mean and unit (population) variance,
    /// followed by an optional affine `γ ⊙ x̂ + β` with `1 × n` parameters.
    pub fn layer_norm(
        &mut self,
        x: Var,
        gamma: Option<Var>,
        beta: Option<Var>,
        eps: f64,
    ) -> Result<Var, AutodiffError> {
        let xv = self.value(x);
        let (m, n) = shape2(xv);
        for p in [gamma, beta].into_iter().flatten() {
            let pv = self.value(p);
            if pv.rows() != 1 || pv.cols() != n {
                return Err(AutodiffError::shapes("layer_norm", xv.shape(), pv.shape()));
            }
        }
        let nf = T::of(n as f64);
        let mut xhat = Tensor::zeros(m, n);
        let mut inv_std = Vec::with_capacity(m);
        for i in 0..m {
            let row = xv.row(i);
            let mean = row.iter().copied().sum::<T>() / nf;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nf;
            let inv = T::one() / (var + T::of(eps)).sqrt();
            inv_std.push(inv);
            for j in 0..n {
                xhat.set(i, j, (row[j] - mean) * inv);
            }
        }
        let mut out = xhat.clone();
        if let Some(g) = gamma {
            let gv = self.value(g);
            for i in 0..m {
                for j in 0..n {
                    out.set(i, j, out.get(i, j) * gv.get(0, j));
                }
            }
        }
        if let Some(b) = beta {
            let bv = self.value(b);
            for i in 0..m {
                for j in 0..n {
                    out.set(i, j, out.get(i, j) + bv.get(0, j));
                }
            }
        }
        let parents: Vec<Var> = [Some(x), gamma, beta].into_iter().flatten().collect();
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            &parents,
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self
            .value(x)
            .map(|v| if v > T::zero() { v } else { T::zero() });
        if self.track_kinks {
            let bits: Vec<u64> = self
                .value(x)
                .data()
                .iter()
                .map(|&v| u64::from(v > T::zero()))
                .collect();
            for b in bits {
                self.note_kink(b);
            }
        }
        self.push(out, Op::Relu(x), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| T::one() / (T::one() + (-v).exp()));
        self.push(out, Op::Sigmoid(x), &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.tanh());
        self.push(out, Op::Tanh(x), &[x])
    }

    /// Rows of `table` selected by `ids`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var, AutodiffError> {
        let t = self.value(table);
        let (v, d) = shape2(t);
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(AutodiffError::Index { index: bad, len: v });
        }
        let mut data = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            data.extend_from_slice(t.row(i));
        }
        let out = Tensor::matrix(ids.len(), d, data)?;
        Ok(self.push(
            out,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            &[table],
        ))
    }

    /// Mean over rows (`1 × n` result) or over columns (`m × 1`).
    pub fn mean(&mut self, src: Var, axis: Axis) -> Result<Var, AutodiffError> {
        let x = self.value(src);
        let (m, n) = shape2(x);
        if m == 0 || n == 0 {
            return Err(AutodiffError::Empty("mean"));
        }
        let out = match axis {
            Axis::Rows => {
                let mf = T::of(m as f64);
                Tensor::from_fn(1, n, |_, j| (0..m).map(|i| x.get(i, j)).sum::<T>() / mf)
            }
            Axis::Cols => {
                let nf = T::of(n as f64);
                Tensor::from_fn(m, 1, |i, _| x.row(i).iter().copied().sum::<T>() / nf)
            }
        };
        Ok(self.push(out, Op::Mean { src, axis }, &[src]))
    }

    /// Maximum over rows or columns; the gradient flows to the first maximizer.
    pub fn max(&mut self, src: Var, axis: Axis) -> Result<Var, AutodiffError> {
        let x = self.value(src);
        let (m, n) = shape2(x);
        if m == 0 || n == 0 {
            return Err(AutodiffError::Empty("max"));
        }
        let argmax_of = |vals: &mut dyn Iterator<Item = T>| {
            let mut best = (0, T::neg_infinity());
            for (k, v) in vals.enumerate() {
                if v > best.1 {
                    best = (k, v);
                }
            }
            best.0
        };
        let (out, argmax) = match axis {
            Axis::Rows => {
                let arg: Vec<usize> = (0..n)
                    .map(|j| argmax_of(&mut (0..m).map(|i| x.get(i, j))))
                    .collect();
                (Tensor::from_fn(1, n, |_, j| x.get(arg[j], j)), arg)
            }
            Axis::Cols => {
                let arg: Vec<usize> = (0..m)
                    .map(|i| argmax_of(&mut x.row(i).iter().copied()))
                    .collect();
                (Tensor::from_fn(m, 1, |i, _| x.get(i, arg[i])), arg)
            }
        };
        if self.track_kinks {
            for &k in &argmax {
                self.note_kink(k as u64);
            }
        }
        Ok(self.push(out, Op::Max { src, axis, argmax }, &[src]))
    }

    pub fn sum(&mut self, src: Var) -> Var {
        let total: T = self.value(src).data().iter().copied().sum();
        self.push(Tensor::scalar(total), Op::Sum(src), &[src])
    }

    /// Mean squared error against a constant target of the same shape.
    pub fn mse_loss(&mut self, pred: Var, target: &Tensor<T>) -> Result<Var, AutodiffError> {
        let p = self.value(pred);
        if p.shape() != target.shape() {
            return Err(AutodiffError::shapes("mse_loss", p.shape(), target.shape()));
        }
        let n = T::of(p.numel() as f64);
        let total: T = p
            .data()
            .iter()
            .zip(target.data())
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum();
        Ok(self.push(
            Tensor::scalar(total / n),
            Op::Mse {
                pred,
                target: target.clone(),
            },
            &[pred],
        ))
    }

    /// Mean cross-entropy of `m × C` logits against class indices.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var, AutodiffError> {
        let x = self.value(logits);
        let (m, c) = shape2(x);
        if targets.len() != m {
            return Err(AutodiffError::shapes(
                "cross_entropy",
                x.shape(),
                &[targets.len()],
            ));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= c) {
            return Err(AutodiffError::Index { index: bad, len: c });
        }
        let mut probs = Tensor::zeros(m, c);
        let mut total = T::zero();
        for i in 0..m {
            let row = x.row(i);
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
            for j in 0..c {
                probs.set(i, j, (row[j] - lse).exp());
            }
            total += lse - row[targets[i]];
        }
        let mean = total / T::of(m as f64);
        Ok(self.push(
            Tensor::scalar(mean),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            &[logits],
        ))
    }

    /// Reverse pass from a scalar. Gradients accumulate into trainable
    /// leaves across calls until [`Graph::zero_grad`].
    pub fn backward(&mut self, loss: Var) -> Result<(), AutodiffError> {
        let shape = self.value(loss).shape().to_vec();
        if self.value(loss).numel() != 1 {
            return Err(AutodiffError::NonScalarLoss { shape });
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        let mut grads: Vec<Option<Tensor<T>>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Tensor::new(shape, vec![T::one()])?);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                let leaf = &mut self.nodes[idx];
                match &mut leaf.grad {
                    Some(acc) => acc.add_assign(&g),
                    None => leaf.grad = Some(g),
                }
                continue;
            }
            for (parent, pg) in self.local_grads(idx, &g) {
                if !self.nodes[parent.0].requires_grad {
                    continue;
                }
                match &mut grads[parent.0] {
                    Some(acc) => acc.add_assign(&pg),
                    slot @ None => *slot = Some(pg),
                }
            }
        }
        Ok(())
    }

    /// Vector-Jacobian products of node `idx` for each of its parents.
    fn local_grads(&self, idx: usize, g: &Tensor<T>) -> Vec<(Var, Tensor<T>)> {
        let node = &self.nodes[idx];
        let val = |v: Var| &self.nodes[v.0].value;
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => vec![],
            Op::MatMul(a, b) => {
                let mut out = Vec::new();
                if needs(*a) {
                    out.push((*a, matmul_nt(g, val(*b))));
                }
                if needs(*b) {
                    out.push((*b, matmul_tn(val(*a), g)));
                }
                out
            }
            Op::Transpose(a) => vec![(*a, g.transpose())],
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::AddRow(a, row) => {
                let (m, n) = shape2(g);
                let r = Tensor::from_fn(1, n, |_, j| (0..m).map(|i| g.get(i, j)).sum());
                vec![(*a, g.clone()), (*row, r)]
            }
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.map(|v| -v))],
            Op::Hadamard(a, b) => {
                let elementwise = |other: &Tensor<T>| {
                    let data = g
                        .data()
                        .iter()
                        .zip(other.data())
                        .map(|(&p, &q)| p * q)
                        .collect();
                    Tensor::new(g.shape().to_vec(), data).expect("same shape")
                };
                let mut out = Vec::new();
                if needs(*a) {
                    out.push((*a, elementwise(val(*b))));
                }
                if needs(*b) {
                    out.push((*b, elementwise(val(*a))));
                }
                out
            }
            Op::Scale(a, f) => vec![(*a, g.map(|v| v * *f))],
            Op::Concat { parts, axis } => {
                let mut offset = 0;
                let mut out = Vec::with_capacity(parts.len());
                for &p in parts {
                    let (pm, pn) = shape2(val(p));
                    let piece = match axis {
                        Axis::Rows => Tensor::from_fn(pm, pn, |i, j| g.get(offset + i, j)),
                        Axis::Cols => Tensor::from_fn(pm, pn, |i, j| g.get(i, offset + j)),
                    };
                    offset += if *axis == Axis::Rows { pm } else { pn };
                    out.push((p, piece));
                }
                out
            }
            Op::Slice { src, axis, start } => {
                let mut full = Tensor::zeros_like(val(*src));
                let (gm, gn) = shape2(g);
                for i in 0..gm {
                    for j in 0..gn {
                        match axis {
                            Axis::Rows => full.set(start + i, j, g.get(i, j)),
                            Axis::Cols => full.set(i, start + j, g.get(i, j)),
                        }
                    }
                }
                vec![(*src, full)]
            }
            Op::Softmax(x) => {
                let y = &node.value;
                let (m, n) = shape2(y);
                let mut dx = Tensor::zeros(m, n);
                for i in 0..m {
                    let dot: T = (0..n).map(|j| g.get(i, j) * y.get(i, j)).sum();
                    for j in 0..n {
                        dx.set(i, j, y.get(i, j) * (g.get(i, j) - dot));
                    }
                }
                vec![(*x, dx)]
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let (m, n) = shape2(xhat);
                let nf = T::of(n as f64);
                let mut out = Vec::new();
                // gradient w.r.t. x̂
                let dxhat = match gamma {
                    Some(gm) => {
                        let gv = val(*gm);
                        Tensor::from_fn(m, n, |i, j| g.get(i, j) * gv.get(0, j))
                    }
                    None => g.clone(),
                };
                if needs(*x) {
                    let mut dx = Tensor::zeros(m, n);
                    for i in 0..m {
                        let sum_d: T = (0..n).map(|j| dxhat.get(i, j)).sum();
                        let sum_dx: T = (0..n).map(|j| dxhat.get(i, j) * xhat.get(i, j)).sum();
                        for j in 0..n {
                            let v = inv_std[i] / nf
                                * (nf * dxhat.get(i, j) - sum_d - xhat.get(i, j) * sum_dx);
                            dx.set(i, j, v);
                        }
                    }
                    out.push((*x, dx));
                }
                if let Some(gm) = gamma {
                    let dg = Tensor::from_fn(1, n, |_, j| {
                        (0..m).map(|i| g.get(i, j) * xhat.get(i, j)).sum()
                    });
                    out.push((*gm, dg));
                }
                if let Some(b) = beta {
                    let db = Tensor::from_fn(1, n, |_, j| (0..m).map(|i| g.get(i, j)).sum());
                    out.push((*b, db));
                }
                out
            }
            Op::Relu(x) => {
                let xv = val(*x);
                let data = g
                    .data()
                    .iter()
                    .zip(xv.data())
                    .map(|(&d, &v)| if v > T::zero() { d } else { T::zero() })
                    .collect();
                vec![(*x, Tensor::new(g.shape().to_vec(), data).expect("shape"))]
            }
            Op::Sigmoid(x) => {
                let y = &node.value;
                let data = g
                    .data()
                    .iter()
                    .zip(y.data())
                    .map(|(&d, &s)| d * s * (T::one() - s))
                    .collect();
                vec![(*x, Tensor::new(g.shape().to_vec(), data).expect("shape"))]
            }
            Op::Tanh(x) => {
                let y = &node.value;
                let data = g
                    .data()
                    .iter()
                    .zip(y.data())
                    .map(|(&d, &t)| d * (T::one() - t * t))
                    .collect();
                vec![(*x, Tensor::new(g.shape().to_vec(), data).expect("shape"))]
            }
            Op::Gather { table, ids } => {
                let mut dt = Tensor::zeros_like(val(*table));
                let d = dt.cols();
                for (r, &id) in ids.iter().enumerate() {
                    for j in 0..d {
                        let v = dt.get(id, j) + g.get(r, j);
                        dt.set(id, j, v);
                    }
                }
                vec![(*table, dt)]
            }
            Op::Mean { src, axis } => {
                let (m, n) = shape2(val(*src));
                let dx = match axis {
                    Axis::Rows => {
                        let mf = T::of(m as f64);
                        Tensor::from_fn(m, n, |_, j| g.get(0, j) / mf)
                    }
                    Axis::Cols => {
                        let nf = T::of(n as f64);
                        Tensor::from_fn(m, n, |i, _| g.get(i, 0) / nf)
                    }
                };
                vec![(*src, dx)]
            }
            Op::Max { src, axis, argmax } => {
                let mut dx = Tensor::zeros_like(val(*src));
                match axis {
                    Axis::Rows => {
                        for (j, &i) in argmax.iter().enumerate() {
                            dx.set(i, j, g.get(0, j));
                        }
                    }
                    Axis::Cols => {
                        for (i, &j) in argmax.iter().enumerate() {
                            dx.set(i, j, g.get(i, 0));
                        }
                    }
                }
                vec![(*src, dx)]
            }
            Op::Sum(src) => {
                let s = g.item();
                vec![(
                    *src,
                    Tensor::full(val(*src).rows(), val(*src).cols(), s).reshaped(val(*src)),
                )]
            }
            Op::Mse { pred, target } => {
                let p = val(*pred);
                let scale = g.item() * T::of(2.0) / T::of(p.numel() as f64);
                let data = p
                    .data()
                    .iter()
                    .zip(target.data())
                    .map(|(&a, &b)| (a - b) * scale)
                    .collect();
                vec![(*pred, Tensor::new(p.shape().to_vec(), data).expect("shape"))]
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let (m, c) = shape2(probs);
                let scale = g.item() / T::of(m as f64);
                let mut dx = probs.clone();
                for (i, &t) in targets.iter().enumerate() {
                    dx.set(i, t, dx.get(i, t) - T::one());
                }
                for i in 0..m {
                    for j in 0..c {
                        dx.set(i, j, dx.get(i, j) * scale);
                    }
                }
                vec![(*logits, dx)]
            }
        }
    }
}

impl<T: Real> Tensor<T> {
    fn reshaped(mut self, like: &Tensor<T>) -> Tensor<T> {
        debug_assert_eq!(self.numel(), like.numel());
        self = Tensor::new(like.shape().to_vec(), self.into_data()).expect("same numel");
        self
    }
}
