//! Named parameter tensors, binding onto a graph, and the Adam optimizer.

use ndarray::{Array2, NdFloat};
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::autograd::{Gradients, Graph, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Param<T> {
    pub name: String,
    pub value: Array2<T>,
}

/// Flat store of every trainable tensor of a model.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
}

impl<T: NdFloat> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Array2<T>) -> ParamId {
        let name = name.into();
        debug_assert!(self.find(&name).is_none(), "duplicate parameter {name}");
        self.params.push(Param { name, value });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Array2<T> {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Array2<T> {
        &mut self.params[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn zeros_like(&self) -> Vec<Array2<T>> {
        self.params.iter().map(|p| Array2::zeros(p.value.raw_dim())).collect()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Converts every tensor to another float precision.
    pub fn cast<U: NdFloat>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: p.value.mapv(|x| U::from(x).expect("float cast")),
                })
                .collect(),
        }
    }
}

/// Lazily binds parameters as graph leaves so each tensor appears once per tape.
pub struct Binder<'s, T> {
    store: &'s ParamStore<T>,
    bound: Vec<Option<Var>>,
}

impl<'s, T: NdFloat> Binder<'s, T> {
    pub fn new(store: &'s ParamStore<T>) -> Self {
        Self { store, bound: vec![None; store.len()] }
    }

    pub fn store(&self) -> &'s ParamStore<T> {
        self.store
    }

    pub fn var(&mut self, graph: &mut Graph<T>, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let v = graph.leaf(self.store.get(id).clone());
        self.bound[id.0] = Some(v);
        v
    }

    /// Per-parameter gradients aligned with the store; unused parameters get zeros.
    pub fn collect(&self, grads: &Gradients<T>) -> Vec<Array2<T>> {
        self.bound
            .iter()
            .zip(self.store.params.iter())
            .map(|(v, p)| match v.and_then(|v| grads.get(v)) {
                Some(g) => g.clone(),
                None => Array2::zeros(p.value.raw_dim()),
            })
            .collect()
    }
}

pub fn global_norm<T: NdFloat>(grads: &[Array2<T>]) -> T {
    grads
        .iter()
        .flat_map(|g| g.iter())
        .fold(T::zero(), |acc, &x| acc + x * x)
        .sqrt()
}

/// Rescales gradients so their joint L2 norm is at most `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm<T: NdFloat>(grads: &mut [Array2<T>], max_norm: T) -> T {
    let norm = global_norm(grads);
    if norm > max_norm && norm > T::zero() {
        let factor = max_norm / norm;
        for g in grads.iter_mut() {
            g.mapv_inplace(|x| x * factor);
        }
    }
    norm
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Adam<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    step: u64,
    m: Vec<Array2<T>>,
    v: Vec<Array2<T>>,
}

impl<T: NdFloat> Adam<T> {
    pub fn new(store: &ParamStore<T>, lr: T, beta1: T, beta2: T) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps: T::from(1e-8).unwrap(),
            step: 0,
            m: store.zeros_like(),
            v: store.zeros_like(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &[Array2<T>]) {
        assert_eq!(grads.len(), store.len(), "one gradient per parameter");
        self.step += 1;
        let one = T::one();
        let t = self.step as i32;
        let bc1 = one - self.beta1.powi(t);
        let bc2 = one - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (i, g) in grads.iter().enumerate() {
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            ndarray::Zip::from(&mut *m).and(&mut *v).and(g).for_each(|m, v, &g| {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
            });
            let value = store.get_mut(ParamId(i));
            ndarray::Zip::from(value).and(&*m).and(&*v).for_each(|p, &m, &v| {
                let mhat = m / bc1;
                let vhat = v / bc2;
                *p = *p - lr * mhat / (vhat.sqrt() + eps);
            });
        }
    }
}

pub fn xavier_uniform<T: NdFloat, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<T> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("valid bound");
    Array2::from_shape_simple_fn((rows, cols), || T::from(dist.sample(rng)).unwrap())
}

pub fn normal<T: NdFloat, R: Rng + ?Sized>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Array2<T> {
    let dist = Normal::new(0.0, std).expect("valid std");
    Array2::from_shape_simple_fn((rows, cols), || T::from(dist.sample(rng)).unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn clipping_caps_global_norm() {
        let mut grads = vec![array![[3.0_f64, 0.0]], array![[0.0], [4.0]]];
        let before = clip_global_norm(&mut grads, 1.0);
        assert!((before - 5.0).abs() < 1e-12);
        assert!((global_norm(&grads) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn clipping_leaves_small_gradients() {
        let mut grads = vec![array![[0.3_f64, 0.4]]];
        clip_global_norm(&mut grads, 1.0);
        assert_eq!(grads[0], array![[0.3, 0.4]]);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut store = ParamStore::<f64>::new();
        let id = store.add("w", array![[1.0, -1.0]]);
        let mut adam = Adam::new(&store, 0.1, 0.9, 0.98);
        adam.step(&mut store, &[array![[2.0, -0.5]]]);
        let w = store.get(id);
        assert!((w[[0, 0]] - 0.9).abs() < 1e-6);
        assert!((w[[0, 1]] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn binder_binds_each_param_once() {
        let mut store = ParamStore::<f64>::new();
        let id = store.add("w", array![[2.0]]);
        let mut g = Graph::new();
        let mut b = Binder::new(&store);
        let v1 = b.var(&mut g, id);
        let v2 = b.var(&mut g, id);
        assert_eq!(v1, v2);
        let prod = g.mul(v1, v2);
        let out = g.sum(prod);
        let grads = g.backward(out);
        assert_eq!(b.collect(&grads)[0][[0, 0]], 4.0);
    }
}
