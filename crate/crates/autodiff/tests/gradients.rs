//! Every tape operation against central finite differences.

use autodiff::check::{finite_diff_check, Coordinates};
use autodiff::{Tape, Tensor, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-6;
const TOL: f64 = 1e-4;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Weighted sum with fixed pseudo-random weights so that every output
/// element contributes a distinct gradient.
fn project(tape: &mut Tape, y: Var) -> autodiff::Result<Var> {
    let shape = tape.shape(y).to_vec();
    let w = tape.constant(Tensor::from_fn(&shape, |i| ((i as f64) * 0.7).sin() + 1.1));
    let p = tape.mul(y, w)?;
    Ok(tape.sum(p))
}

fn check<F>(params: Vec<Tensor>, f: F) -> f64
where
    F: FnMut(&mut Tape, &[Var]) -> autodiff::Result<Var>,
{
    let report = finite_diff_check(&params, STEP, Coordinates::All, f).unwrap();
    report.max_rel_error
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn matmul_and_dense(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = vec![random(&[3, 4], &mut rng), random(&[4, 2], &mut rng), random(&[2, 3, 4], &mut rng)];
        let err = check(p, |t, v| {
            let a = t.matmul(v[0], v[1])?;
            let b = t.dense(v[2], v[1])?;
            let pa = project(t, a)?;
            let pb = project(t, b)?;
            t.add(pa, pb)
        });
        prop_assert!(err <= TOL, "{err}");
    }

    #[test]
    fn bmm_both_layouts(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = vec![random(&[2, 3, 4], &mut rng), random(&[2, 4, 5], &mut rng), random(&[2, 5, 4], &mut rng)];
        let err = check(p, |t, v| {
            let a = t.bmm(v[0], v[1], false)?;
            let b = t.bmm(v[0], v[2], true)?;
            let pa = project(t, a)?;
            let pb = project(t, b)?;
            t.add(pa, pb)
        });
        prop_assert!(err <= TOL, "{err}");
    }

    #[test]
    fn elementwise(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = vec![random(&[2, 5], &mut rng), random(&[2, 5], &mut rng), random(&[5], &mut rng)];
        let err = check(p, |t, v| {
            let s = t.add(v[0], v[1])?;
            let m = t.mul(s, v[1])?;
            let b = t.add_bias(m, v[2])?;
            let g = t.gelu(b);
            let sc = t.scale(g, -1.7);
            let sq = t.mul(sc, sc)?;
            let mean = t.mean(sq);
            let pr = project(t, sc)?;
            t.add(mean, pr)
        });
        prop_assert!(err <= TOL, "{err}");
    }

    #[test]
    fn softmax_layer_norm(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = vec![random(&[3, 6], &mut rng), random(&[6], &mut rng), random(&[6], &mut rng)];
        let err = check(p, |t, v| {
            let n = t.layer_norm(v[0], v[1], v[2], 1e-5)?;
            let s = t.softmax(n);
            project(t, s)
        });
        prop_assert!(err <= TOL, "{err}");
    }

    #[test]
    fn layout_ops(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = vec![random(&[2, 3, 4], &mut rng), random(&[7, 4], &mut rng)];
        let err = check(p, |t, v| {
            let h = t.split_heads(v[0], 2)?;
            let h = t.scale(h, 1.5);
            let m = t.merge_heads(h, 2)?;
            let r = t.reshape(m, &[6, 4])?;
            let e = t.embedding(v[1], &[0, 3, 3, 6, 1, 0], &[6])?;
            let s = t.mul(r, e)?;
            project(t, s)
        });
        prop_assert!(err <= TOL, "{err}");
    }

    #[test]
    fn complex_and_power(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = vec![random(&[2, 3, 2], &mut rng), random(&[2, 2], &mut rng)];
        let err = check(p, |t, v| {
            let x = t.power_normalize(v[0], 1e-12)?;
            let y = t.complex_mul(x, v[1])?;
            project(t, y)
        });
        prop_assert!(err <= TOL, "{err}");
    }

    #[test]
    fn softmax_cross_entropy(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = vec![random(&[2, 3, 5], &mut rng)];
        let targets = [1usize, 4, 0, 2, 2, 3];
        let q = [1.0, 1.0, 0.0, 1.0, 1.0, 0.0];
        let mask = [true, true, true, true, false, true];
        let err = check(p, |t, v| {
            let s = t.softmax(v[0]);
            let picked = t.pick(s, &targets)?;
            t.binary_cross_entropy(picked, &q, &mask, 2, 1e-12, 1.0 - 1e-12)
        });
        prop_assert!(err <= TOL, "{err}");
    }
}

#[test]
fn relu_away_from_kink() {
    let x = Tensor::new(vec![4], vec![-1.0, -0.3, 0.4, 2.0]).unwrap();
    let err = check(vec![x], |t, v| {
        let r = t.relu(v[0]);
        project(t, r)
    });
    assert!(err <= 1e-8);
}
