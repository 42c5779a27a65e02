use ndarray::Array2;
use phaco_lssat::tape::{softmax_rows, Tape};
use phaco_lssat::train::sequence_loss;
use phaco_lssat::{LabeledSequence, LsSat, LsSatConfig, Mask, SelfStack, StreamState};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

fn random(rows: usize, cols: usize, rng: &mut Xoshiro256PlusPlus) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

fn tiny() -> LsSatConfig {
    LsSatConfig { raw_dim: 32, kappa: 4, heads: 2, n_self: 1, n_cross: 1, tau: 2, phases: 3, literal: false }
}

/// Largest relative error between tape gradients and central differences
/// over every entry of every tensor.
fn worst_gradient_error(cfg: LsSatConfig, seed: u64) -> f64 {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut model = LsSat::new(cfg, seed).unwrap();
    // move off the init so biases and norms get non-trivial gradients
    for v in model.params_mut().values.iter_mut() {
        v.mapv_inplace(|x| x + 0.1 * rng.random_range(-1.0..1.0));
    }
    let seq = LabeledSequence { features: random(3, cfg.raw_dim, &mut rng), labels: vec![0, 2, 1] };
    let weights = [0.7, 1.4, 0.9];
    let loss = |m: &LsSat| {
        let mut t = Tape::new(m.params());
        let l = sequence_loss(m, &mut t, &seq, &weights);
        t.value(l)[[0, 0]]
    };
    let grads = {
        let mut t = Tape::new(model.params());
        let l = sequence_loss(&model, &mut t, &seq, &weights);
        t.backward(l)
    };
    let h = 1e-5;
    let mut worst = 0.0f64;
    for id in 0..model.params().len() {
        let g = grads[id].as_ref().expect("every tensor reaches the loss");
        for idx in 0..g.len() {
            let (r, c) = (idx / g.ncols(), idx % g.ncols());
            let orig = model.params().values[id][[r, c]];
            model.params_mut().values[id][[r, c]] = orig + h;
            let up = loss(&model);
            model.params_mut().values[id][[r, c]] = orig - h;
            let down = loss(&model);
            model.params_mut().values[id][[r, c]] = orig;
            let num = (up - down) / (2.0 * h);
            let ana = g[[r, c]];
            let rel = (ana - num).abs() / ana.abs().max(num.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    worst
}

#[test]
fn gradients_match_finite_differences() {
    let worst = worst_gradient_error(tiny(), 3);
    assert!(worst <= 1e-4, "max relative error {worst}");
}

#[test]
fn gradients_match_with_deeper_stacks() {
    let cfg = LsSatConfig { n_self: 2, n_cross: 2, tau: 3, ..tiny() };
    let worst = worst_gradient_error(cfg, 8);
    assert!(worst <= 1e-4, "max relative error {worst}");
}

#[test]
fn literal_self_attention_is_the_bare_formula() {
    let cfg = LsSatConfig { literal: true, ..tiny() };
    let m = LsSat::new(cfg, 0).unwrap();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(1);
    let s = random(9, 8, &mut rng);
    let got = m.self_attention_masked(SelfStack::Long, 0, &s, Mask::None).unwrap().out;
    let scores = s.dot(&s.t()) / 8f64.sqrt();
    let want = softmax_rows(&scores, Mask::None).dot(&s);
    let worst = got.iter().zip(want.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst <= 1e-12, "{worst}");
}

#[test]
fn prefix_replay_reproduces_predictions() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(5);
    let cfg = LsSatConfig { raw_dim: 16, kappa: 2, heads: 2, n_self: 2, n_cross: 1, tau: 4, phases: 3, literal: false };
    let m = LsSat::new(cfg, 2).unwrap();
    for _ in 0..50 {
        let n = rng.random_range(2..14);
        let cut = rng.random_range(1..n);
        let raw = random(n, 16, &mut rng);
        let mut full = StreamState::new(&m);
        for row in raw.rows() {
            full.push(&row.to_vec()).unwrap();
        }
        let mut prefix = StreamState::new(&m);
        for row in raw.rows().into_iter().take(cut) {
            prefix.push(&row.to_vec()).unwrap();
        }
        assert_eq!(prefix.history(), &full.history()[..cut]);
        // batch evaluation of the prefix alone agrees with the full run
        let batch = m.predict_sequence(&raw.slice(ndarray::s![..cut, ..]).to_owned()).unwrap();
        let whole = m.predict_sequence(&raw).unwrap();
        for i in 0..cut {
            for k in 0..3 {
                assert!((batch[[i, k]] - whole[[i, k]]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn every_attention_matrix_is_row_stochastic() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(6);
    let m = LsSat::new(LsSatConfig { raw_dim: 64, kappa: 4, heads: 4, n_self: 1, n_cross: 1, tau: 5, phases: 4, literal: false }, 1).unwrap();
    for _ in 0..20 {
        let lr = random(rng.random_range(5..30), 16, &mut rng);
        let sr = random(5, 16, &mut rng);
        let mut all = m.self_attention_block(SelfStack::Long, 0, &lr).unwrap().attn;
        all.extend(m.self_attention_block(SelfStack::Short, 0, &sr).unwrap().attn);
        all.extend(m.long_short_cross(0, &sr, &lr).unwrap().attn);
        let q: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        all.extend(m.spatiotemporal_cross(0, &q, &sr).unwrap().attn);
        for a in &all {
            for row in a.rows() {
                assert!((row.sum() - 1.0).abs() <= 1e-6);
                assert!(row.iter().all(|v| *v >= 0.0));
            }
        }
    }
}
