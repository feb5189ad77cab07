//! Reverse-mode gradient tape over batched matrices.
//!
//! Nodes are appended in evaluation order, so the node list is already a
//! topological order; `backward` walks it once in reverse.

use super::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    /// `x * w + b`, `b` a `1 x out` row.
    Affine {
        x: NodeId,
        w: NodeId,
        b: NodeId,
    },
    Tanh(NodeId),
    Concat(NodeId, NodeId),
    /// Each row (interleaved complex block) scaled to unit average power;
    /// keeps the per-row scale `1/sqrt(p)`.
    NormalizeRows {
        x: NodeId,
        scale: Vec<f64>,
    },
    /// `x + c` for a constant `c` (channel noise).
    AddConst(NodeId),
    /// Straight-through node: forward value supplied by the caller; the
    /// input receives the upstream gradient times `pass` (all ones when
    /// absent); the optional scalar leaf receives `sum(upstream * dfactor)`.
    StraightThrough {
        x: NodeId,
        pass: Option<Vec<f64>>,
        distance: Option<(NodeId, Vec<f64>)>,
    },
    /// Batch mean of per-row mean squared error; a `1 x 1` value.
    Mse {
        pred: NodeId,
        target: NodeId,
    },
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Matrix,
}

/// Gradients indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Matrix> {
        self.grads[id.0].as_ref()
    }

    pub fn take(&mut self, id: NodeId) -> Option<Matrix> {
        self.grads[id.0].take()
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Matrix) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    pub fn leaf(&mut self, value: Matrix) -> NodeId {
        self.push(Op::Leaf, value)
    }

    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> NodeId {
        let (wv, bv) = (self.value(w), self.value(b));
        assert_eq!(bv.shape(), (1, wv.cols()), "bias shape");
        let out = self.value(x).matmul_bias(wv, Some(bv.data()));
        self.push(Op::Affine { x, w, b }, out)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let out = self.value(x).map(f64::tanh);
        self.push(Op::Tanh(x), out)
    }

    pub fn concat(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = self.value(a).hcat(self.value(b));
        self.push(Op::Concat(a, b), out)
    }

    /// Returns `None` when some row has zero (or non-finite) power.
    pub fn normalize_rows(&mut self, x: NodeId) -> Option<NodeId> {
        let xv = self.value(x);
        let k = xv.cols() as f64 / 2.0;
        let mut out = xv.clone();
        let mut scale = Vec::with_capacity(xv.rows());
        for r in 0..xv.rows() {
            let p = xv.row(r).iter().map(|v| v * v).sum::<f64>() / k;
            if !(p > 0.0) || !p.is_finite() {
                return None;
            }
            let s = 1.0 / p.sqrt();
            out.row_mut(r).iter_mut().for_each(|v| *v *= s);
            scale.push(s);
        }
        Some(self.push(Op::NormalizeRows { x, scale }, out))
    }

    pub fn add_const(&mut self, x: NodeId, c: &Matrix) -> NodeId {
        let mut out = self.value(x).clone();
        out.add_assign(c);
        self.push(Op::AddConst(x), out)
    }

    pub fn straight_through(
        &mut self,
        x: NodeId,
        forward: Matrix,
        pass: Option<Vec<f64>>,
        distance: Option<(NodeId, Vec<f64>)>,
    ) -> NodeId {
        assert_eq!(
            self.value(x).shape(),
            forward.shape(),
            "straight-through shape"
        );
        if let Some(p) = &pass {
            assert_eq!(p.len(), forward.data().len());
        }
        if let Some((d, f)) = &distance {
            assert_eq!(self.value(*d).shape(), (1, 1));
            assert_eq!(f.len(), forward.data().len());
        }
        self.push(Op::StraightThrough { x, pass, distance }, forward)
    }

    pub fn mse(&mut self, pred: NodeId, target: NodeId) -> NodeId {
        let (p, t) = (self.value(pred), self.value(target));
        assert_eq!(p.shape(), t.shape(), "mse shapes");
        let total: f64 = p
            .data()
            .iter()
            .zip(t.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let loss = total / p.data().len() as f64;
        self.push(Op::Mse { pred, target }, Matrix::from_vec(1, 1, vec![loss]))
    }

    /// Backpropagates from a `1 x 1` output with seed gradient 1.
    pub fn backward(&self, output: NodeId) -> Gradients {
        assert_eq!(self.value(output).shape(), (1, 1), "backward from a scalar");
        self.backward_with(output, Matrix::from_vec(1, 1, vec![1.0]))
    }

    /// Backpropagates an arbitrary upstream gradient from `output`.
    pub fn backward_with(&self, output: NodeId, seed: Matrix) -> Gradients {
        assert_eq!(self.value(output).shape(), seed.shape());
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(seed);
        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::Affine { x, w, b } => {
                    let wv = self.value(*w);
                    accumulate(&mut grads, *x, g.matmul(&wv.transpose()));
                    accumulate(&mut grads, *w, self.value(*x).t_matmul(&g));
                    accumulate(
                        &mut grads,
                        *b,
                        Matrix::from_vec(1, g.cols(), g.column_sums()),
                    );
                }
                Op::Tanh(x) => {
                    let mut dx = g;
                    for (d, y) in dx.data_mut().iter_mut().zip(node.value.data()) {
                        *d *= 1.0 - y * y;
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Concat(a, b) => {
                    let ac = self.value(*a).cols();
                    let bc = self.value(*b).cols();
                    let mut ga = Matrix::zeros(g.rows(), ac);
                    let mut gb = Matrix::zeros(g.rows(), bc);
                    for r in 0..g.rows() {
                        ga.row_mut(r).copy_from_slice(&g.row(r)[..ac]);
                        gb.row_mut(r).copy_from_slice(&g.row(r)[ac..]);
                    }
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::NormalizeRows { x, scale } => {
                    // out = x s, s = (sum x^2 / k)^(-1/2):
                    // dx = s g - (s^3 / k) x <g, x>
                    let xv = self.value(*x);
                    let k = xv.cols() as f64 / 2.0;
                    let mut dx = Matrix::zeros(xv.rows(), xv.cols());
                    for r in 0..xv.rows() {
                        let s = scale[r];
                        let (xr, gr) = (xv.row(r), g.row(r));
                        let dot: f64 = xr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        let c = s * s * s / k * dot;
                        for ((d, &xi), &gi) in dx.row_mut(r).iter_mut().zip(xr).zip(gr) {
                            *d = s * gi - c * xi;
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::AddConst(x) => accumulate(&mut grads, *x, g),
                Op::StraightThrough { x, pass, distance } => {
                    if let Some((d, factor)) = distance {
                        let dd: f64 = g.data().iter().zip(factor).map(|(a, b)| a * b).sum();
                        accumulate(&mut grads, *d, Matrix::from_vec(1, 1, vec![dd]));
                    }
                    let mut dx = g;
                    if let Some(p) = pass {
                        for (v, m) in dx.data_mut().iter_mut().zip(p) {
                            *v *= m;
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Mse { pred, target } => {
                    let (p, t) = (self.value(*pred), self.value(*target));
                    let scale = 2.0 * g.get(0, 0) / p.data().len() as f64;
                    let data = p
                        .data()
                        .iter()
                        .zip(t.data())
                        .map(|(a, b)| scale * (a - b))
                        .collect();
                    let dp = Matrix::from_vec(p.rows(), p.cols(), data);
                    let dt = dp.map(|v| -v);
                    accumulate(&mut grads, *pred, dp);
                    accumulate(&mut grads, *target, dt);
                }
            }
        }
        Gradients { grads }
    }
}

fn accumulate(grads: &mut [Option<Matrix>], id: NodeId, g: Matrix) {
    match &mut grads[id.0] {
        Some(acc) => acc.add_assign(&g),
        slot => *slot = Some(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shared_input_accumulates() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::from_vec(1, 2, vec![0.3, -0.4]));
        let c = t.concat(x, x);
        let zero = t.leaf(Matrix::zeros(1, 4));
        let l = t.mse(c, zero);
        let g = t.backward(l);
        // d/dx of (2 x0^2 + 2 x1^2) / 4 = x
        let gx = g.get(x).unwrap();
        assert!((gx.get(0, 0) - 0.3).abs() < 1e-15);
        assert!((gx.get(0, 1) + 0.4).abs() < 1e-15);
    }

    #[test]
    fn zero_power_row_is_rejected() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 0.0]));
        assert!(t.normalize_rows(x).is_none());
    }

    #[test]
    fn straight_through_passes_identity() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::from_vec(1, 3, vec![0.2, 0.7, -1.1]));
        let s = t.straight_through(x, Matrix::from_vec(1, 3, vec![0.0, 1.0, -1.0]), None, None);
        let g = t.backward_with(s, Matrix::from_vec(1, 3, vec![1.0; 3]));
        assert_eq!(g.get(x).unwrap().data(), &[1.0, 1.0, 1.0]);
    }
}
