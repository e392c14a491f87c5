//! Central finite-difference verification of tape gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Which coordinates of each parameter tensor to perturb.
#[derive(Debug, Clone, Copy)]
pub enum Coordinates {
    All,
    /// Up to `per_tensor` distinct coordinates per tensor, chosen by `seed`.
    Sample {
        per_tensor: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone)]
pub struct Mismatch {
    pub tensor: usize,
    pub coord: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct FdReport {
    /// Worst relative error over all checked coordinates.
    pub max_rel_error: f64,
    /// Worst relative error per parameter tensor.
    pub per_tensor: Vec<f64>,
    pub checked: usize,
    pub worst: Option<Mismatch>,
}

/// `|a - n| / max(|a|, |n|, 1e-12)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

/// Compares the tape gradient of `f` against central differences
/// `(f(p + h) - f(p - h)) / 2h` at the selected coordinates.
///
/// `f` builds a scalar loss from the parameters bound on the tape it is
/// given; it must be deterministic.
pub fn finite_diff_check<F>(params: &[Tensor], step: f64, coords: Coordinates, mut f: F) -> Result<FdReport>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| grads.get_or_zeros(v, p.shape()))
        .collect();
    drop(tape);

    let mut work = params.to_vec();
    let mut eval = |work: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = work.iter().map(|p| tape.constant(p.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        tape.value(loss).item()
    };

    let mut report = FdReport {
        max_rel_error: 0.0,
        per_tensor: vec![0.0; params.len()],
        checked: 0,
        worst: None,
    };
    for t in 0..params.len() {
        let n = params[t].len();
        let picked: Vec<usize> = match coords {
            Coordinates::All => (0..n).collect(),
            Coordinates::Sample { per_tensor, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (t as u64).wrapping_mul(0x9e37_79b9));
                let mut v = sample(&mut rng, n, per_tensor.min(n)).into_vec();
                v.sort_unstable();
                v
            }
        };
        for c in picked {
            let orig = work[t].data()[c];
            work[t].data_mut()[c] = orig + step;
            let up = eval(&work)?;
            work[t].data_mut()[c] = orig - step;
            let down = eval(&work)?;
            work[t].data_mut()[c] = orig;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic[t].data()[c];
            let err = relative_error(a, numeric);
            report.checked += 1;
            report.per_tensor[t] = report.per_tensor[t].max(err);
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some(Mismatch {
                    tensor: t,
                    coord: c,
                    analytic: a,
                    numeric,
                    rel_error: err,
                });
            }
        }
    }
    Ok(report)
}
