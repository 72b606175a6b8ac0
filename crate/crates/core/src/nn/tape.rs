//! Minimal reverse-mode differentiation over dense matrices.
//!
//! Every model runs its forward pass on a [`Tape`]; plain evaluation reads
//! the recorded values and training calls [`Tape::backward`].

use crate::linalg::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Scale(usize, f64),
    Hadamard(usize, usize),
    Transpose(usize),
    Tanh(usize),
    Relu(usize),
    Sigmoid(usize),
    SoftmaxRows(usize),
    Sum(usize),
}

#[derive(Debug, Default)]
pub struct Tape {
    values: Vec<Mat>,
    ops: Vec<Op>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.values.push(value);
        self.ops.push(op);
        Var(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn leaf(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.values[v.0]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::MatMul(a.0, b.0))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a.0, b.0))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        self.push(v, Op::Scale(a.0, c))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).component_mul(self.value(b));
        self.push(v, Op::Hadamard(a.0, b.0))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a.0))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a.0))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a.0))
    }

    /// Row-wise softmax, shifted by the row maximum.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let v = softmax_rows(self.value(a));
        self.push(v, Op::SoftmaxRows(a.0))
    }

    /// Sum of all entries as a `1 x 1` matrix.
    pub fn sum(&mut self, a: Var) -> Var {
        let v = Mat::from_element(1, 1, self.value(a).sum());
        self.push(v, Op::Sum(a.0))
    }

    /// Gradients of the scalar `out` with respect to every node.
    pub fn backward(&self, out: Var) -> Gradients {
        let mut grads: Vec<Option<Mat>> = vec![None; self.values.len()];
        let shape = self.values[out.0].shape();
        grads[out.0] = Some(Mat::from_element(shape.0, shape.1, 1.0));
        for idx in (0..=out.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let y = &self.values[idx];
            match self.ops[idx] {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let ga = &g * self.values[b].transpose();
                    let gb = self.values[a].transpose() * &g;
                    accumulate(&mut grads, a, ga);
                    accumulate(&mut grads, b, gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, a, g.clone());
                    accumulate(&mut grads, b, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, a, g.clone());
                    accumulate(&mut grads, b, -g.clone());
                }
                Op::Scale(a, c) => accumulate(&mut grads, a, &g * c),
                Op::Hadamard(a, b) => {
                    let ga = g.component_mul(&self.values[b]);
                    let gb = g.component_mul(&self.values[a]);
                    accumulate(&mut grads, a, ga);
                    accumulate(&mut grads, b, gb);
                }
                Op::Transpose(a) => accumulate(&mut grads, a, g.transpose()),
                Op::Tanh(a) => accumulate(&mut grads, a, g.zip_map(y, |g, y| g * (1.0 - y * y))),
                Op::Relu(a) => {
                    let ga = g.zip_map(&self.values[a], |g, x| if x > 0.0 { g } else { 0.0 });
                    accumulate(&mut grads, a, ga);
                }
                Op::Sigmoid(a) => accumulate(&mut grads, a, g.zip_map(y, |g, y| g * y * (1.0 - y))),
                Op::SoftmaxRows(a) => {
                    let mut ga = Mat::zeros(y.nrows(), y.ncols());
                    for r in 0..y.nrows() {
                        let dot: f64 = (0..y.ncols()).map(|c| g[(r, c)] * y[(r, c)]).sum();
                        for c in 0..y.ncols() {
                            ga[(r, c)] = y[(r, c)] * (g[(r, c)] - dot);
                        }
                    }
                    accumulate(&mut grads, a, ga);
                }
                Op::Sum(a) => {
                    let (r, c) = self.values[a].shape();
                    accumulate(&mut grads, a, Mat::from_element(r, c, g[(0, 0)]));
                }
            }
            grads[idx] = Some(g);
        }
        Gradients(grads)
    }
}

/// Result of [`Tape::backward`]; nodes that do not influence the output have
/// no gradient.
#[derive(Debug)]
pub struct Gradients(Vec<Option<Mat>>);

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Mat> {
        self.0.get(v.0).and_then(Option::as_ref)
    }
}

fn accumulate(grads: &mut [Option<Mat>], idx: usize, g: Mat) {
    match &mut grads[idx] {
        Some(acc) => *acc += g,
        slot => *slot = Some(g),
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn softmax_rows(m: &Mat) -> Mat {
    let mut out = m.clone();
    for r in 0..m.nrows() {
        let max = m.row(r).max();
        let mut total = 0.0;
        for c in 0..m.ncols() {
            let e = (m[(r, c)] - max).exp();
            out[(r, c)] = e;
            total += e;
        }
        for c in 0..m.ncols() {
            out[(r, c)] /= total;
        }
    }
    out
}
