//! Loss terms of the mixed objective and the two embedding perturbations.
//!
//! Perturbations are lists of per-step `B × D` arrays matching
//! [`Forward::perturbations`], normalized per example over all its steps.

use ndarray::{Array2, NdFloat};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::network::{Batch, Forward, Network};
use crate::params::{Binder, ParamStore};

pub type Perturbation<T> = Vec<Array2<T>>;

/// Value, parameter gradients, and gradient with respect to the embedded inputs.
#[derive(Clone, Debug)]
pub struct TermOutput<T> {
    pub value: T,
    pub grads: Vec<Array2<T>>,
    pub input_grads: Perturbation<T>,
}

fn labels_of<T>(batch: &Batch<T>) -> Result<Vec<usize>> {
    batch.labels.iter().map(|l| l.ok_or_else(|| Error::Invalid("supervised loss on an unlabelled example".into()))).collect()
}

/// `-mean log clamp(p_y, 1e-7, 1 - 1e-7)`.
pub fn cross_entropy<T: NdFloat>(g: &mut Graph<T>, out: &Forward, labels: &[usize]) -> Var {
    let eps = T::from(1e-7).unwrap();
    let clamped = g.clamp(out.probs, eps, T::one() - eps);
    let logs = g.log(clamped);
    let picked = g.gather(logs, labels);
    let m = g.mean(picked);
    g.scale(m, -T::one())
}

/// Mean over rows of `KL(p0 || q)` where `p0` is a constant. Written as
/// `Σ p0 (log p0 - log q)` so that `q = p0` gives exactly zero.
pub fn kl_divergence<T: NdFloat>(g: &mut Graph<T>, p0: &Array2<T>, log_p0: &Array2<T>, log_q: Var) -> Var {
    let n = T::from(p0.nrows()).unwrap();
    let lp0 = g.leaf(log_p0.clone());
    let diff = g.sub(lp0, log_q);
    let p = g.leaf(p0.clone());
    let terms = g.mul(p, diff);
    let total = g.sum(terms);
    g.scale(total, T::one() / n)
}

fn run<T: NdFloat>(
    net: &Network<T>,
    store: &ParamStore<T>,
    batch: &Batch<T>,
    perturbation: Option<&[Array2<T>]>,
    dropout: Option<&Array2<T>>,
    term: impl FnOnce(&mut Graph<T>, &Forward) -> Result<Var>,
) -> Result<TermOutput<T>> {
    let mut g = Graph::new();
    let mut p = Binder::new(store);
    let out = net.forward(&mut g, &mut p, batch, perturbation, dropout)?;
    let loss = term(&mut g, &out)?;
    let value = g.scalar(loss);
    let grads = g.backward(loss);
    Ok(TermOutput { value, grads: p.collect(&grads), input_grads: out.perturbations.iter().map(|&r| grads.get_or_zeros(&g, r)).collect() })
}

/// Supervised term. `store` is passed separately so that finite-difference
/// checks can evaluate perturbed copies of the weights.
pub fn loss_ml<T: NdFloat>(net: &Network<T>, store: &ParamStore<T>, batch: &Batch<T>, dropout: Option<&Array2<T>>) -> Result<TermOutput<T>> {
    let labels = labels_of(batch)?;
    run(net, store, batch, None, dropout, |g, out| Ok(cross_entropy(g, out, &labels)))
}

/// Supervised term at `e + r_adv`, with `r_adv` held constant.
pub fn loss_at<T: NdFloat>(
    net: &Network<T>,
    store: &ParamStore<T>,
    batch: &Batch<T>,
    r_adv: &[Array2<T>],
    dropout: Option<&Array2<T>>,
) -> Result<TermOutput<T>> {
    let labels = labels_of(batch)?;
    run(net, store, batch, Some(r_adv), dropout, |g, out| Ok(cross_entropy(g, out, &labels)))
}

/// Eval-mode clean distribution `(p0, log p0)`, used as the VAT target.
pub fn clean_distribution<T: NdFloat>(net: &Network<T>, store: &ParamStore<T>, batch: &Batch<T>) -> Result<(Array2<T>, Array2<T>)> {
    let mut g = Graph::new();
    let mut p = Binder::new(store);
    let out = net.forward(&mut g, &mut p, batch, None, None)?;
    let lp = g.value(out.log_probs).clone();
    Ok((lp.mapv(|x| x.exp()), lp))
}

/// `KL(p0 || f(e + r_vadv))` averaged over the batch, eval-mode head.
pub fn loss_vat<T: NdFloat>(
    net: &Network<T>,
    store: &ParamStore<T>,
    batch: &Batch<T>,
    r_vadv: &[Array2<T>],
    target: &(Array2<T>, Array2<T>),
) -> Result<TermOutput<T>> {
    run(net, store, batch, Some(r_vadv), None, |g, out| Ok(kl_divergence(g, &target.0, &target.1, out.log_probs)))
}

/// Per-example L2 norms over all steps.
pub fn example_norms<T: NdFloat>(r: &[Array2<T>]) -> Vec<T> {
    let bsz = r.first().map_or(0, |x| x.nrows());
    (0..bsz).map(|b| r.iter().map(|x| x.row(b).iter().map(|&v| v * v).fold(T::zero(), |a, v| a + v)).fold(T::zero(), |a, v| a + v).sqrt()).collect()
}

/// Scales each example of `g` to norm `scale`; examples with a zero gradient
/// get `fallback` (or zero). Returns the rescaled tensor and whether any
/// example was degenerate.
fn normalize<T: NdFloat>(g: &[Array2<T>], scale: T, fallback: Option<&[Array2<T>]>) -> (Perturbation<T>, bool) {
    let norms = example_norms(g);
    let mut out: Vec<Array2<T>> = g.to_vec();
    let mut degenerate = false;
    for (b, &n) in norms.iter().enumerate() {
        for (t, step) in out.iter_mut().enumerate() {
            let mut row = step.row_mut(b);
            if n > T::zero() && n.is_finite() {
                row.mapv_inplace(|v| v * scale / n);
            } else if let Some(f) = fallback {
                row.assign(&f[t].row(b));
            } else {
                row.fill(T::zero());
            }
        }
        degenerate |= !(n > T::zero() && n.is_finite());
    }
    (out, degenerate)
}

/// `r_adv = ε g / ‖g‖` with `g` the gradient of the supervised loss with
/// respect to the embedded inputs (the loss-increasing direction). A zero
/// gradient yields a zero perturbation.
pub fn adv_perturbation<T: NdFloat>(input_grads: &[Array2<T>], epsilon: T) -> Perturbation<T> {
    normalize(input_grads, epsilon, None).0
}

#[derive(Clone, Debug)]
pub struct VatPerturbation<T> {
    pub r: Perturbation<T>,
    /// Set when some example's power-iteration gradient vanished and the
    /// previous direction was kept.
    pub degenerate: bool,
}

/// Power-iteration estimate of the KL-maximizing direction, scaled to `ε`.
/// Labels are ignored.
pub fn vat_perturbation<T: NdFloat, R: Rng + ?Sized>(
    net: &Network<T>,
    store: &ParamStore<T>,
    batch: &Batch<T>,
    target: &(Array2<T>, Array2<T>),
    xi: T,
    epsilon: T,
    iterations: usize,
    rng: &mut R,
) -> Result<VatPerturbation<T>> {
    let d = net.config.embed_dim;
    let raw: Vec<Array2<T>> = batch
        .masks
        .iter()
        .map(|m| {
            Array2::from_shape_fn((batch.len(), d), |(b, _)| {
                let z: f64 = StandardNormal.sample(rng);
                T::from(z).unwrap() * m[[b, 0]]
            })
        })
        .collect();
    let (mut delta, mut degenerate) = normalize(&raw, T::one(), None);
    for _ in 0..iterations {
        let probe: Vec<Array2<T>> = delta.iter().map(|x| x.mapv(|v| v * xi)).collect();
        let out = loss_vat(net, store, batch, &probe, target)?;
        let (next, bad) = normalize(&out.input_grads, T::one(), Some(&delta));
        degenerate |= bad;
        delta = next;
    }
    if degenerate {
        log::warn!("VAT power iteration hit a zero gradient; kept the previous direction");
    }
    Ok(VatPerturbation { r: delta.into_iter().map(|x| x.mapv(|v| v * epsilon)).collect(), degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Label;
    use crate::gradcheck::{fd_gradients, relative_error};
    use crate::network::{Example, FeatureLayout, NetworkConfig};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn config() -> NetworkConfig {
        NetworkConfig {
            vocab_size: 10,
            embed_dim: 3,
            hidden: 3,
            tweet_features: 4,
            user_features: 2,
            ek_dim: 2,
            ek_width: 2,
            layout: FeatureLayout::Split { tweet: vec![3, 4], user: vec![2, 3], cross_stitch: true, early_text_fusion: true },
            attention: true,
            head_width: 4,
            dropout: 0.0,
            freeze_embeddings: false,
        }
    }

    fn examples(n: usize, seed: u64, cfg: &NetworkConfig) -> Vec<Example> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| Example {
                tweet_id: i.to_string(),
                ids: (0..rng.random_range(1..5)).map(|_| rng.random_range(1..cfg.vocab_size)).collect(),
                tweet: (0..cfg.tweet_features).map(|_| rng.random_range(-1.0..1.0)).collect(),
                user: (0..cfg.user_features).map(|_| rng.random_range(-1.0..1.0)).collect(),
                ek: (0..cfg.ek_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                label: Some(Label::from_index(i % 2)),
            })
            .collect()
    }

    fn setup<T: NdFloat>(seed: u64) -> (Network<T>, Batch<T>) {
        let cfg = config();
        let mut net = Network::<f64>::new(cfg.clone(), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        for id in net.store.ids().collect::<Vec<_>>() {
            if net.store.name(id).ends_with(".b") {
                net.store.get_mut(id).mapv_inplace(|x| x + rng.random_range(0.05..0.3));
            }
        }
        let ex = examples(3, seed, &cfg);
        let refs: Vec<&Example> = ex.iter().collect();
        (net.cast(), Batch::new(&refs).unwrap())
    }

    fn check_grads<T: NdFloat>(net: &Network<T>, analytic: &[Array2<T>], f: impl Fn(&ParamStore<T>) -> T, h: f64, tol: f64) {
        let numeric = fd_gradients(&net.store, f, h);
        for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
            let err = relative_error(a, n);
            assert!(err < tol, "{}: {err}", net.store.name(crate::params::ParamId(i)));
        }
    }

    /// 32-bit analytic gradients against a 64-bit finite-difference reference
    /// taken at the same (f32-rounded) weights; f32 differencing alone is
    /// dominated by cancellation for the smaller parameter groups.
    fn check_f32(net: &Network<f32>, analytic: &[Array2<f32>], f: impl Fn(&ParamStore<f64>) -> f64) {
        let numeric = fd_gradients(&net.store.cast::<f64>(), f, 1e-6);
        for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
            let err = relative_error(&a.mapv(f64::from), n);
            assert!(err < 1e-3, "{}: {err}", net.store.name(crate::params::ParamId(i)));
        }
    }

    fn fixed_r<T: NdFloat>(batch: &Batch<T>, d: usize, seed: u64) -> Perturbation<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<Array2<T>> =
            batch.masks.iter().map(|m| Array2::from_shape_fn((batch.len(), d), |(b, _)| T::from(rng.random_range(-1.0..1.0)).unwrap() * m[[b, 0]])).collect();
        adv_perturbation(&raw, T::from(0.5).unwrap())
    }

    #[test]
    fn ml_gradient_f64() {
        let (net, batch) = setup::<f64>(1);
        let out = loss_ml(&net, &net.store, &batch, None).unwrap();
        check_grads(&net, &out.grads, |s| loss_ml(&net, s, &batch, None).unwrap().value, 1e-5, 1e-6);
    }

    #[test]
    fn ml_gradient_f32() {
        let (net, batch) = setup::<f32>(1);
        let out = loss_ml(&net, &net.store, &batch, None).unwrap();
        let (wide, b64) = (net.cast::<f64>(), setup::<f64>(1).1);
        check_f32(&net, &out.grads, |s| loss_ml(&wide, s, &b64, None).unwrap().value);
    }

    #[test]
    fn at_gradient_f64_and_f32() {
        let (net, batch) = setup::<f64>(2);
        let r = fixed_r(&batch, 3, 9);
        let out = loss_at(&net, &net.store, &batch, &r, None).unwrap();
        check_grads(&net, &out.grads, |s| loss_at(&net, s, &batch, &r, None).unwrap().value, 1e-5, 1e-6);

        let (net, batch) = setup::<f32>(2);
        let r = fixed_r(&batch, 3, 9);
        let out = loss_at(&net, &net.store, &batch, &r, None).unwrap();
        let (wide, b64) = (net.cast::<f64>(), setup::<f64>(2).1);
        let r64: Perturbation<f64> = r.iter().map(|x| x.mapv(f64::from)).collect();
        check_f32(&net, &out.grads, |s| loss_at(&wide, s, &b64, &r64, None).unwrap().value);
    }

    #[test]
    fn vat_gradient_f64_and_f32() {
        let (net, batch) = setup::<f64>(3);
        let target = clean_distribution(&net, &net.store, &batch).unwrap();
        let r = fixed_r(&batch, 3, 4);
        let out = loss_vat(&net, &net.store, &batch, &r, &target).unwrap();
        check_grads(&net, &out.grads, |s| loss_vat(&net, s, &batch, &r, &target).unwrap().value, 1e-5, 1e-6);

        let (net, batch) = setup::<f32>(3);
        let target = clean_distribution(&net, &net.store, &batch).unwrap();
        let r = fixed_r(&batch, 3, 4);
        let out = loss_vat(&net, &net.store, &batch, &r, &target).unwrap();
        let (wide, b64) = (net.cast::<f64>(), setup::<f64>(3).1);
        let r64: Perturbation<f64> = r.iter().map(|x| x.mapv(f64::from)).collect();
        let t64 = (target.0.mapv(f64::from), target.1.mapv(f64::from));
        check_f32(&net, &out.grads, |s| loss_vat(&wide, s, &b64, &r64, &t64).unwrap().value);
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let (net, batch) = setup::<f64>(4);
        let zero: Perturbation<f64> = batch.masks.iter().map(|_| Array2::zeros((batch.len(), 3))).collect();
        let out = loss_at(&net, &net.store, &batch, &zero, None).unwrap();
        let h = 1e-5;
        for t in 0..batch.steps() {
            for b in 0..batch.len() {
                for d in 0..3 {
                    let mut plus = zero.clone();
                    plus[t][[b, d]] = h;
                    let mut minus = zero.clone();
                    minus[t][[b, d]] = -h;
                    let fp = loss_at(&net, &net.store, &batch, &plus, None).unwrap().value;
                    let fm = loss_at(&net, &net.store, &batch, &minus, None).unwrap().value;
                    let num = (fp - fm) / (2.0 * h);
                    assert!((num - out.input_grads[t][[b, d]]).abs() < 1e-7);
                }
            }
        }
    }

    #[test]
    fn cross_entropy_reference_values() {
        let mut g = Graph::<f64>::new();
        let probs = g.leaf(array![[0.5, 0.5], [0.5, 0.5]]);
        let fake = Forward { logits: probs, log_probs: probs, probs, perturbations: vec![], attention: None };
        let l = cross_entropy(&mut g, &fake, &[0, 1]);
        assert!((g.scalar(l) - std::f64::consts::LN_2).abs() < 1e-12);

        let mut g = Graph::<f64>::new();
        let probs = g.leaf(array![[1.0, 0.0], [0.0, 1.0]]);
        let perfect = Forward { logits: probs, log_probs: probs, probs, perturbations: vec![], attention: None };
        let l = cross_entropy(&mut g, &perfect, &[0, 1]);
        assert!(g.scalar(l) < 1e-6);

        let mut g = Graph::<f64>::new();
        let probs = g.leaf(array![[0.9, 0.1], [0.2, 0.8]]);
        let hand = Forward { logits: probs, log_probs: probs, probs, perturbations: vec![], attention: None };
        let l = cross_entropy(&mut g, &hand, &[0, 0]);
        let expected = -(0.9f64.ln() + 0.2f64.ln()) / 2.0;
        assert!((g.scalar(l) - expected).abs() < 1e-12);
    }

    #[test]
    fn kl_reference_value() {
        let mut g = Graph::<f64>::new();
        let p0 = array![[0.8, 0.2]];
        let lq = g.leaf(array![[0.6f64.ln(), 0.4f64.ln()]]);
        let kl = kl_divergence(&mut g, &p0, &p0.mapv(f64::ln), lq);
        let expected = 0.8 * (0.8f64 / 0.6).ln() + 0.2 * (0.2f64 / 0.4).ln();
        assert!((g.scalar(kl) - expected).abs() < 1e-12);
    }

    #[test]
    fn perturbation_norms_and_degenerate_cases() {
        let (net, batch) = setup::<f64>(5);
        let ml = loss_ml(&net, &net.store, &batch, None).unwrap();
        let r = adv_perturbation(&ml.input_grads, 2.0);
        for n in example_norms(&r) {
            assert!((n - 2.0).abs() < 1e-9);
        }
        let zero: Perturbation<f64> = ml.input_grads.iter().map(|x| Array2::zeros(x.raw_dim())).collect();
        assert!(adv_perturbation(&zero, 2.0).iter().all(|x| x.iter().all(|&v| v == 0.0)));

        let target = clean_distribution(&net, &net.store, &batch).unwrap();
        let v = vat_perturbation(&net, &net.store, &batch, &target, 1e-6, 1.0, 1, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        for n in example_norms(&v.r) {
            assert!((n - 1.0).abs() < 1e-9);
        }
        let v2 = vat_perturbation(&net, &net.store, &batch, &target, 1e-6, 1.0, 1, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(v.r, v2.r);
        // Padding positions receive no perturbation.
        for (t, step) in v.r.iter().enumerate() {
            for b in 0..batch.len() {
                if batch.masks[t][[b, 0]] == 0.0 {
                    assert!(step.row(b).iter().all(|&x| x == 0.0));
                }
            }
        }
    }

    #[test]
    fn zero_epsilon_reduces_terms() {
        let (net, batch) = setup::<f64>(6);
        let ml = loss_ml(&net, &net.store, &batch, None).unwrap();
        let r = adv_perturbation(&ml.input_grads, 0.0);
        assert_eq!(loss_at(&net, &net.store, &batch, &r, None).unwrap().value, ml.value);
        let target = clean_distribution(&net, &net.store, &batch).unwrap();
        let v = vat_perturbation(&net, &net.store, &batch, &target, 1e-6, 0.0, 1, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(loss_vat(&net, &net.store, &batch, &v.r, &target).unwrap().value, 0.0);
    }

    #[test]
    fn adversarial_direction_increases_loss() {
        let (net, batch) = setup::<f64>(7);
        let ml = loss_ml(&net, &net.store, &batch, None).unwrap();
        let r = adv_perturbation(&ml.input_grads, 1e-3);
        let at = loss_at(&net, &net.store, &batch, &r, None).unwrap();
        let neg: Perturbation<f64> = r.iter().map(|x| -x).collect();
        let below = loss_at(&net, &net.store, &batch, &neg, None).unwrap();
        assert!(at.value > ml.value && below.value < ml.value);
    }

    #[test]
    fn unlabelled_example_rejected_by_supervised_terms() {
        let cfg = config();
        let mut ex = examples(1, 0, &cfg);
        ex[0].label = None;
        let net = Network::<f64>::new(cfg, 0).unwrap();
        let batch = Batch::new(&[&ex[0]]).unwrap();
        assert!(loss_ml(&net, &net.store, &batch, None).is_err());
        let target = clean_distribution(&net, &net.store, &batch).unwrap();
        assert!(vat_perturbation(&net, &net.store, &batch, &target, 1e-6, 1.0, 1, &mut ChaCha8Rng::seed_from_u64(0)).is_ok());
    }

    #[test]
    fn vat_direction_matches_grid_search() {
        // Two classes make the KL Hessian rank one in input space, so a single
        // power iteration already lands on the maximizing direction.
        let mut cfg = config();
        cfg.embed_dim = 2;
        let net = Network::<f64>::new(cfg.clone(), 12).unwrap();
        let mut ex = examples(1, 3, &cfg);
        ex[0].ids = vec![4];
        let batch = Batch::new(&[&ex[0]]).unwrap();
        let target = clean_distribution(&net, &net.store, &batch).unwrap();
        let v = vat_perturbation(&net, &net.store, &batch, &target, 1e-6, 1.0, 1, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let dir = [v.r[0][[0, 0]], v.r[0][[0, 1]]];
        let eps = 1e-2;
        let (mut best, mut best_kl) = ([0.0, 0.0], f64::MIN);
        for k in 0..3600 {
            let th = k as f64 / 3600.0 * std::f64::consts::PI;
            let cand = [th.cos(), th.sin()];
            let r = vec![array![[eps * cand[0], eps * cand[1]]]];
            let kl = loss_vat(&net, &net.store, &batch, &r, &target).unwrap().value;
            if kl > best_kl {
                best_kl = kl;
                best = cand;
            }
        }
        let cos = (dir[0] * best[0] + dir[1] * best[1]).abs();
        assert!(cos > 0.99, "{cos}");
    }
}
