use rand::Rng;

use crate::linalg::Matrix;
use crate::objectives::{LayerNorm, SboParams};

/// Named access to every parameter tensor, in a fixed order.
pub trait Tensors {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>);
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>);

    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        self.visit("", &mut out);
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = Vec::new();
        self.visit_mut("", &mut out);
        out
    }

    fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// A copy with every parameter set to zero, for gradient accumulation.
    fn zeroed(&self) -> Self
    where
        Self: Clone + Sized,
    {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    /// `self += scale * other`, tensor by tensor.
    fn add_scaled(&mut self, scale: f64, other: &Self)
    where
        Self: Sized,
    {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            crate::linalg::axpy(scale, b, a);
        }
    }
}

pub(crate) fn tensor_name(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

impl Tensors for Matrix {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        out.push((prefix.to_string(), self.data()));
    }
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        out.push((prefix.to_string(), self.data_mut()));
    }
}

impl Tensors for Vec<f64> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        out.push((prefix.to_string(), self));
    }
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        out.push((prefix.to_string(), self));
    }
}

impl Tensors for LayerNorm {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        out.push((tensor_name(prefix, "gain"), &self.gain));
        out.push((tensor_name(prefix, "bias"), &self.bias));
    }
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        out.push((tensor_name(prefix, "gain"), &mut self.gain));
        out.push((tensor_name(prefix, "bias"), &mut self.bias));
    }
}

impl Tensors for SboParams {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        for (name, t) in SboParams::tensors(self) {
            out.push((tensor_name(prefix, name), t));
        }
    }
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        for (name, t) in SboParams::tensors_mut(self) {
            out.push((tensor_name(prefix, name), t));
        }
    }
}

/// `y = W x + b` applied to each row, with `W` stored `[out x in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl Linear {
    pub fn init<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        Linear {
            w: Matrix::random(output, input, (input as f64).powf(-0.5), rng),
            b: vec![0.0; output],
        }
    }

    pub fn forward(&self, x: &Matrix) -> Matrix {
        let mut y = x.matmul_t(&self.w);
        for r in 0..y.rows() {
            crate::linalg::axpy(1.0, &self.b, y.row_mut(r));
        }
        y
    }

    /// Returns `dx`; accumulates into `grad`.
    pub fn backward(&self, x: &Matrix, dy: &Matrix, grad: &mut Linear) -> Matrix {
        grad.w.add_assign(&dy.t_matmul(x));
        for r in 0..dy.rows() {
            crate::linalg::axpy(1.0, dy.row(r), &mut grad.b);
        }
        dy.matmul(&self.w)
    }
}

impl Tensors for Linear {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        self.w.visit(&tensor_name(prefix, "w"), out);
        self.b.visit(&tensor_name(prefix, "b"), out);
    }
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        self.w.visit_mut(&tensor_name(prefix, "w"), out);
        self.b.visit_mut(&tensor_name(prefix, "b"), out);
    }
}

