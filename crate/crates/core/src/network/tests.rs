use ndarray::{array, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::features::Normalizer;
use crate::gradcheck::{fd_gradients, relative_error};

fn tiny(layout: FeatureLayout, attention: bool) -> NetworkConfig {
    NetworkConfig {
        vocab_size: 12,
        embed_dim: 4,
        hidden: 3,
        tweet_features: 26,
        user_features: 8,
        ek_dim: 5,
        ek_width: 3,
        layout,
        attention,
        head_width: 6,
        dropout: 0.3,
        freeze_embeddings: false,
    }
}

fn split(cs: bool, early: bool) -> FeatureLayout {
    FeatureLayout::Split { tweet: vec![4, 5], user: vec![3, 4], cross_stitch: cs, early_text_fusion: early }
}

fn random_example(rng: &mut ChaCha8Rng, len: usize, cfg: &NetworkConfig) -> Example {
    Example {
        tweet_id: format!("t{}", rng.random::<u32>()),
        ids: (0..len).map(|_| rng.random_range(1..cfg.vocab_size)).collect(),
        tweet: (0..cfg.tweet_features).map(|_| rng.random_range(-2.0..2.0)).collect(),
        user: (0..cfg.user_features).map(|_| rng.random_range(-2.0..2.0)).collect(),
        ek: (0..cfg.ek_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
        label: Some(if rng.random::<bool>() { Label::Fake } else { Label::Genuine }),
    }
}

fn batch_of(cfg: &NetworkConfig, lens: &[usize], seed: u64) -> (Vec<Example>, Batch<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ex: Vec<Example> = lens.iter().map(|&l| random_example(&mut rng, l, cfg)).collect();
    let refs: Vec<&Example> = ex.iter().collect();
    let b = Batch::new(&refs).unwrap();
    (ex, b)
}

fn nll<T: NdFloat>(net: &Network<T>, store: &ParamStore<T>, batch: &Batch<T>) -> (T, Vec<Array2<T>>) {
    let mut g = Graph::new();
    let mut p = Binder::new(store);
    let out = net.forward(&mut g, &mut p, batch, None, None).unwrap();
    let labels: Vec<usize> = batch.labels.iter().map(|l| l.unwrap()).collect();
    let picked = g.gather(out.log_probs, &labels);
    let m = g.mean(picked);
    let loss = g.scale(m, -T::one());
    let value = g.scalar(loss);
    let grads = g.backward(loss);
    (value, p.collect(&grads))
}

#[test]
fn cross_stitch_identity_is_bitwise() {
    let a = [0.1, -2.5, 3.0];
    let b = [7.25, 1e-9];
    let (a2, b2) = cross_stitch(&a, &b, &Array2::eye(5), &[0.0; 5]).unwrap();
    assert_eq!(a2, a);
    assert_eq!(b2, b);
}

#[test]
fn cross_stitch_swap_exchanges_paths() {
    let a = [1.0, 2.0];
    let b = [3.0, 4.0];
    let w = array![[0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0], [1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]];
    let (a2, b2) = cross_stitch(&a, &b, &w, &[0.0; 4]).unwrap();
    assert_eq!(a2, b);
    assert_eq!(b2, a);
}

#[test]
fn cross_stitch_rejects_wrong_size() {
    assert!(matches!(cross_stitch(&[1.0], &[2.0], &Array2::eye(3), &[0.0; 3]), Err(Error::Shape { .. })));
    assert!(matches!(cross_stitch(&[1.0], &[2.0], &Array2::eye(2), &[0.0; 3]), Err(Error::Shape { .. })));
}

#[test]
fn identity_cross_stitch_matches_no_cross_stitch() {
    for early in [false, true] {
        let on = Network::<f64>::new(tiny(split(true, early), true), 3).unwrap();
        let off = Network::<f64>::new(tiny(split(false, early), true), 3).unwrap();
        let (_, b) = batch_of(&on.config, &[4, 2, 6], 9);
        assert_eq!(on.probabilities(&b).unwrap(), off.probabilities(&b).unwrap());
    }
}

#[test]
fn eval_is_deterministic() {
    let net = Network::<f64>::new(tiny(split(true, true), true), 1).unwrap();
    let (_, b) = batch_of(&net.config, &[5, 3], 2);
    let p1 = net.predict(&b).unwrap();
    let p2 = net.predict(&b).unwrap();
    assert_eq!(p1, p2);
}

#[test]
fn zero_weights_give_uniform_fake() {
    let mut net = Network::<f64>::new(tiny(split(true, true), true), 1).unwrap();
    for id in net.store.ids().collect::<Vec<_>>() {
        net.store.get_mut(id).fill(0.0);
    }
    let (_, b) = batch_of(&net.config, &[3, 7], 4);
    for p in net.predict(&b).unwrap() {
        assert_eq!(p.probabilities, [0.5, 0.5]);
        assert_eq!(p.label, Label::Fake);
        assert_eq!(p.confidence, 0.5);
    }
}

#[test]
fn head_bias_shift_leaves_probabilities() {
    let mut net = Network::<f64>::new(tiny(FeatureLayout::Joined { widths: vec![8] }, true), 5).unwrap();
    let (_, b) = batch_of(&net.config, &[4, 4, 1], 6);
    let before = net.probabilities(&b).unwrap();
    let bias = net.modules.head_out.b;
    net.store.get_mut(bias).mapv_inplace(|x| x + 123.0);
    let after = net.probabilities(&b).unwrap();
    for (x, y) in before.iter().zip(&after) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn ablation_rows_build_and_run() {
    let base = tiny(FeatureLayout::Joined { widths: vec![4] }, false);
    let rows = NetworkConfig::ablation_rows(&base);
    assert_eq!(rows.len(), 6);
    for (name, cfg) in rows {
        let net = Network::<f64>::new(cfg, 0).unwrap();
        let (_, b) = batch_of(&net.config, &[3, 5], 1);
        let preds = net.predict(&b).unwrap();
        assert_eq!(preds.len(), 2, "{name}");
    }
}

#[test]
fn standard_config_validates() {
    let cfg = NetworkConfig::standard(1000, 64);
    cfg.validate().unwrap();
    assert_eq!(cfg, NetworkConfig::ablation_rows(&cfg)[5].1);
}

#[test]
fn invalid_configs_rejected() {
    let mut cfg = tiny(split(true, true), true);
    cfg.dropout = 1.0;
    assert!(cfg.validate().is_err());
    let cfg = tiny(FeatureLayout::Split { tweet: vec![], user: vec![2], cross_stitch: false, early_text_fusion: false }, true);
    assert!(Network::<f64>::new(cfg, 0).is_err());
}

#[test]
fn wrong_feature_width_is_shape_error() {
    let net = Network::<f64>::new(tiny(split(true, true), true), 0).unwrap();
    let (mut ex, _) = batch_of(&net.config, &[3], 0);
    ex[0].tweet.pop();
    let b = Batch::<f64>::new(&[&ex[0]]).unwrap();
    assert!(matches!(net.predict(&b), Err(Error::Shape { .. })));
    ex[0].ids = vec![];
    assert!(Batch::<f64>::new(&[&ex[0]]).is_err());
}

#[test]
fn batch_padding_layout() {
    let cfg = tiny(split(true, true), true);
    let (ex, b) = batch_of(&cfg, &[2, 4], 0);
    assert_eq!(b.steps(), 4);
    assert_eq!(b.ids[3], vec![0, ex[1].ids[3]]);
    assert_eq!(b.length(0), 2);
    assert_eq!(b.length(1), 4);
    assert_eq!(b.masks[2][[0, 0]], 0.0);
}

#[test]
fn padding_does_not_change_predictions() {
    // An example classified alone must match the same example in a padded batch.
    let net = Network::<f64>::new(tiny(split(true, true), true), 8).unwrap();
    let (ex, b) = batch_of(&net.config, &[2, 7], 3);
    let joint = net.probabilities(&b).unwrap();
    let alone = net.probabilities(&Batch::new(&[&ex[0]]).unwrap()).unwrap();
    for j in 0..2 {
        assert!((joint[[0, j]] - alone[[0, j]]).abs() < 1e-12);
    }
}

#[test]
fn end_to_end_gradients_match_finite_differences() {
    for (layout, att) in [(split(true, true), true), (split(true, false), false), (FeatureLayout::Joined { widths: vec![4, 3] }, true)] {
        let mut net = Network::<f64>::new(tiny(layout, att), 11).unwrap();
        // Zero biases put ReLUs exactly on their kink for all-zero inputs.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for id in net.store.ids().collect::<Vec<_>>() {
            if net.store.name(id).ends_with(".b") {
                net.store.get_mut(id).mapv_inplace(|x| x + rng.random_range(0.05..0.3));
            }
        }
        let (_, b) = batch_of(&net.config, &[3, 2], 5);
        let (_, analytic) = nll(&net, &net.store, &b);
        let numeric = fd_gradients(&net.store, |s| nll(&net, s, &b).0, 1e-5);
        for (id, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
            let err = relative_error(a, n);
            assert!(err < 1e-6, "{}: {err}", net.store.name(ParamId(id)));
        }
    }
}

#[test]
fn perturbation_gradient_vanishes_on_padding() {
    let net = Network::<f64>::new(tiny(split(true, true), true), 2).unwrap();
    let (_, b) = batch_of(&net.config, &[2, 5], 7);
    let mut g = Graph::new();
    let mut p = Binder::new(&net.store);
    let out = net.forward(&mut g, &mut p, &b, None, None).unwrap();
    let s = g.sum(out.log_probs);
    let grads = g.backward(s);
    for (t, r) in out.perturbations.iter().enumerate() {
        let gr = grads.get_or_zeros(&g, *r);
        let row0: f64 = gr.row(0).iter().map(|x| x.abs()).sum();
        let row1: f64 = gr.row(1).iter().map(|x| x.abs()).sum();
        assert_eq!(row0 == 0.0, t >= 2, "step {t}");
        assert!(row1 > 0.0);
    }
}

#[test]
fn dropout_mask_scaling() {
    let net = Network::<f64>::new(tiny(split(true, true), true), 0).unwrap();
    let mask = net.dropout_mask(400, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let keep = 1.0 / 0.7;
    assert!(mask.iter().all(|&x| x == 0.0 || x == keep));
    let frac = mask.iter().filter(|&&x| x == 0.0).count() as f64 / mask.len() as f64;
    assert!((frac - 0.3).abs() < 0.03, "{frac}");
    let mut cfg = net.config.clone();
    cfg.dropout = 0.0;
    let net = Network::<f64>::new(cfg, 0).unwrap();
    assert!(net.dropout_mask(4, &mut ChaCha8Rng::seed_from_u64(1)).is_none());
}

#[test]
fn tie_goes_to_fake() {
    assert_eq!(Prediction::from_probabilities([0.5, 0.5]).label, Label::Fake);
    assert_eq!(Prediction::from_probabilities([0.3, 0.7]).label, Label::Genuine);
    assert_eq!(Prediction::from_probabilities([0.3, 0.7]).confidence, 0.7);
}

#[test]
fn checkpoint_roundtrip_and_schema_check() {
    let texts = ["virus spreads fast", "masks help stop the virus", "fast cure claims"];
    let vocab = crate::encoder::Vocabulary::build(texts.iter().copied(), 12).unwrap();
    let mut cfg = tiny(split(true, true), true);
    cfg.vocab_size = vocab.len();
    let net = Network::<f64>::new(cfg, 4).unwrap();
    let norm_t = Normalizer { mean: vec![0.0; 26], std: vec![1.0; 26] };
    let norm_u = Normalizer { mean: vec![0.0; 8], std: vec![1.0; 8] };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    Checkpoint::new(&net, vocab.clone(), norm_t, norm_u).save(&path).unwrap();
    let ck = Checkpoint::load(&path).unwrap();
    assert_eq!(ck.vocab.id("virus"), vocab.id("virus"));
    let restored = ck.network().unwrap();
    let (_, b) = batch_of(&net.config, &[3, 1], 2);
    assert_eq!(net.probabilities(&b).unwrap(), restored.probabilities(&b).unwrap());

    let mut raw: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    raw["feature_schema_version"] = "tf10-uf8-v0".into();
    std::fs::write(&path, raw.to_string()).unwrap();
    assert!(matches!(Checkpoint::load(&path), Err(Error::Schema { .. })));
}

#[test]
fn checkpoint_rejects_mismatched_tensors() {
    let net = Network::<f64>::new(tiny(split(true, true), true), 4).unwrap();
    let mut cfg = net.config.clone();
    cfg.head_width = 7;
    assert!(matches!(Network::from_params(cfg, net.store.clone()), Err(Error::Shape { .. })));
}

#[test]
fn f32_network_tracks_f64() {
    let net = Network::<f64>::new(tiny(split(true, true), true), 6).unwrap();
    let (ex, b) = batch_of(&net.config, &[4, 2], 1);
    let refs: Vec<&Example> = ex.iter().collect();
    let p64 = net.probabilities(&b).unwrap();
    let p32 = net.cast::<f32>().probabilities(&Batch::new(&refs).unwrap()).unwrap();
    for (a, b) in p64.iter().zip(&p32) {
        assert!((a - *b as f64).abs() < 1e-5);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn probabilities_are_a_distribution(seed in any::<u64>(), lens in prop::collection::vec(1usize..6, 1..4)) {
        let net = Network::<f64>::new(tiny(split(true, true), true), seed).unwrap();
        let (_, b) = batch_of(&net.config, &lens, seed ^ 0x55);
        let probs = net.probabilities(&b).unwrap();
        for row in probs.rows() {
            prop_assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
            prop_assert!((row.sum() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn argmax_ignores_positive_rescaling(p0 in 0.0f64..1.0, c in 1e-3f64..1e3) {
        let p = [p0, 1.0 - p0];
        let a = Prediction::from_probabilities(p).label;
        let b = Prediction::from_probabilities([p[0] * c, p[1] * c]).label;
        prop_assert_eq!(a, b);
    }
}
