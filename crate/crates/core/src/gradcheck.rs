//! Central finite-difference reference gradients.

use ndarray::{Array2, NdFloat};

use crate::params::{ParamId, ParamStore};

/// `(f(θ + h e_i) - f(θ - h e_i)) / 2h` for every scalar of every parameter.
pub fn fd_gradients<T: NdFloat>(store: &ParamStore<T>, f: impl Fn(&ParamStore<T>) -> T, h: f64) -> Vec<Array2<T>> {
    let h = T::from(h).unwrap();
    let two_h = h + h;
    let mut work = store.clone();
    let mut out = Vec::with_capacity(store.len());
    for i in 0..store.len() {
        let id = ParamId(i);
        let shape = store.get(id).raw_dim();
        let mut grad = Array2::zeros(shape);
        for idx in ndarray::indices(grad.raw_dim()) {
            let orig = work.get(id)[idx];
            work.get_mut(id)[idx] = orig + h;
            let plus = f(&work);
            work.get_mut(id)[idx] = orig - h;
            let minus = f(&work);
            work.get_mut(id)[idx] = orig;
            grad[idx] = (plus - minus) / two_h;
        }
        out.push(grad);
    }
    out
}

/// `‖a - n‖ / (‖a‖ + ‖n‖)`, or 0 when both are zero.
pub fn relative_error<T: NdFloat>(a: &Array2<T>, n: &Array2<T>) -> f64 {
    let norm = |x: &Array2<T>| x.iter().map(|v| v.to_f64().unwrap().powi(2)).sum::<f64>().sqrt();
    let diff = a.iter().zip(n).map(|(x, y)| (x.to_f64().unwrap() - y.to_f64().unwrap()).powi(2)).sum::<f64>().sqrt();
    let scale = norm(a) + norm(n);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}
