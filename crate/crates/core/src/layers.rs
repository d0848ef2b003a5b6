//! Parameterized building blocks shared by the encoder and fusion network.

use ndarray::{Array2, NdFloat};
use rand::Rng;

use crate::autograd::{Graph, Var};
use crate::params::{xavier_uniform, Binder, ParamId, ParamStore};

/// Affine map `x W + b`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Dense {
    pub fn new<T: NdFloat, R: Rng + ?Sized>(store: &mut ParamStore<T>, name: &str, input: usize, output: usize, rng: &mut R) -> Self {
        let w = store.add(format!("{name}.w"), xavier_uniform(input, output, rng));
        let b = store.add(format!("{name}.b"), Array2::zeros((1, output)));
        Self { w, b, input, output }
    }

    /// Square layer initialized to the identity with zero bias; draws no randomness.
    pub fn identity<T: NdFloat>(store: &mut ParamStore<T>, name: &str, size: usize) -> Self {
        let w = store.add(format!("{name}.w"), Array2::eye(size));
        let b = store.add(format!("{name}.b"), Array2::zeros((1, size)));
        Self { w, b, input: size, output: size }
    }

    pub fn forward<T: NdFloat>(&self, g: &mut Graph<T>, p: &mut Binder<'_, T>, x: Var) -> Var {
        let w = p.var(g, self.w);
        let b = p.var(g, self.b);
        let xw = g.matmul(x, w);
        g.add_row(xw, b)
    }
}

/// Dense layers each followed by ReLU.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ReluStack {
    pub layers: Vec<Dense>,
}

impl ReluStack {
    pub fn new<T: NdFloat, R: Rng + ?Sized>(store: &mut ParamStore<T>, name: &str, input: usize, widths: &[usize], rng: &mut R) -> Self {
        let mut layers = Vec::with_capacity(widths.len());
        let mut prev = input;
        for (i, &w) in widths.iter().enumerate() {
            layers.push(Dense::new(store, &format!("{name}.{i}"), prev, w, rng));
            prev = w;
        }
        Self { layers }
    }

    pub fn output(&self, input: usize) -> usize {
        self.layers.last().map_or(input, |l| l.output)
    }

    pub fn forward<T: NdFloat>(&self, g: &mut Graph<T>, p: &mut Binder<'_, T>, mut x: Var) -> Var {
        for l in &self.layers {
            let z = l.forward(g, p, x);
            x = g.relu(z);
        }
        x
    }
}
