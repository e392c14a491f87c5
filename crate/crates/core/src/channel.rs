//! Physical layer: Rayleigh fading, the RIS reflection cascade, receiver
//! derotation, additive noise and the imperfect-CSI model.
//!
//! The received block for one sentence is `y = Δ·x + n`, where
//! `Δ = h1 + Σ_n γ_n e^{jφ_n} h2n h3n` is held constant over the block.

use std::f64::consts::{FRAC_1_SQRT_2, TAU};

use autodiff::{Tape, Tensor, Var};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from, stream};

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_phase(theta: f64) -> f64 {
    let w = theta.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Amplitude and phase in `[0, 2π)`.
pub fn polar(c: Complex64) -> (f64, f64) {
    (c.norm(), wrap_phase(c.arg()))
}

/// Circularly symmetric complex Gaussian with unit variance.
fn cn_unit<R: Rng>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
}

/// One draw of the direct link and the two cascade links of an `N`-element
/// surface.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    direct: Complex64,
    tx_ris: Vec<Complex64>,
    ris_rx: Vec<Complex64>,
}

impl ChannelRealization {
    pub fn new(direct: Complex64, tx_ris: Vec<Complex64>, ris_rx: Vec<Complex64>) -> Result<Self> {
        if tx_ris.len() != ris_rx.len() {
            return Err(Error::Contract(format!(
                "cascade lengths differ: {} vs {}",
                tx_ris.len(),
                ris_rx.len()
            )));
        }
        Ok(ChannelRealization { direct, tx_ris, ris_rx })
    }

    /// Builds a realization from amplitudes and phases.
    pub fn from_polar(direct: (f64, f64), tx_ris: &[(f64, f64)], ris_rx: &[(f64, f64)]) -> Result<Self> {
        let c = |(a, p): (f64, f64)| Complex64::from_polar(a, p);
        Self::new(
            c(direct),
            tx_ris.iter().copied().map(c).collect(),
            ris_rx.iter().copied().map(c).collect(),
        )
    }

    pub fn elements(&self) -> usize {
        self.tx_ris.len()
    }

    /// `h1`.
    pub fn direct(&self) -> Complex64 {
        self.direct
    }

    /// `h2`, transmitter to surface.
    pub fn tx_ris(&self) -> &[Complex64] {
        &self.tx_ris
    }

    /// `h3`, surface to receiver.
    pub fn ris_rx(&self) -> &[Complex64] {
        &self.ris_rx
    }

    pub fn direct_phase(&self) -> f64 {
        polar(self.direct).1
    }

    /// `|h1| + (1/N) Σ |h2n||h3n|`, the gain magnitude under alignment.
    pub fn aligned_magnitude(&self) -> f64 {
        let n = self.elements().max(1) as f64;
        self.direct.norm()
            + self
                .tx_ris
                .iter()
                .zip(&self.ris_rx)
                .map(|(a, b)| a.norm() * b.norm())
                .sum::<f64>()
                / n
    }
}

/// Per-element amplitude and phase of the surface.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionConfig {
    gamma: Vec<f64>,
    phi: Vec<f64>,
}

impl ReflectionConfig {
    pub fn new(gamma: Vec<f64>, phi: Vec<f64>) -> Result<Self> {
        if gamma.len() != phi.len() {
            return Err(Error::Contract("amplitude and phase counts differ".into()));
        }
        if let Some(g) = gamma.iter().find(|g| !(0.0..=1.0).contains(*g)) {
            return Err(Error::Contract(format!("amplitude {g} outside [0, 1]")));
        }
        if let Some(p) = phi.iter().find(|p| !(0.0..TAU).contains(*p)) {
            return Err(Error::Contract(format!("phase {p} outside [0, 2π)")));
        }
        Ok(ReflectionConfig { gamma, phi })
    }

    /// All amplitudes zero: the surface reflects nothing.
    pub fn off(n: usize) -> Self {
        ReflectionConfig {
            gamma: vec![0.0; n],
            phi: vec![0.0; n],
        }
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    /// Same phases with every amplitude replaced by `gamma`.
    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::Contract(format!("amplitude {gamma} outside [0, 1]")));
        }
        self.gamma.iter_mut().for_each(|g| *g = gamma);
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    variance: f64,
}

impl NoiseModel {
    pub fn new(variance: f64) -> Result<Self> {
        if !(variance >= 0.0 && variance.is_finite()) {
            return Err(Error::Contract(format!("noise variance {variance}")));
        }
        Ok(NoiseModel { variance })
    }

    pub fn from_snr_db(snr_db: f64) -> Result<Self> {
        Self::new(snr_to_sigma(snr_db))
    }

    /// Total complex variance `σ²`; each real component carries `σ²/2`.
    pub fn variance(&self) -> f64 {
        self.variance
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsiErrorModel {
    epsilon: f64,
}

impl CsiErrorModel {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::Contract(format!("CSI error scale {epsilon}")));
        }
        Ok(CsiErrorModel { epsilon })
    }

    pub fn perfect() -> Self {
        CsiErrorModel { epsilon: 0.0 }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// Draws `h1`, `h2` and `h3` i.i.d. CN(0, 1), in that order.
pub fn sample_channels(n: usize, seed: u64) -> Result<ChannelRealization> {
    if n == 0 {
        return Err(Error::Contract("surface needs at least one element".into()));
    }
    let mut rng = rng_from(seed);
    let direct = cn_unit(&mut rng);
    let tx_ris = (0..n).map(|_| cn_unit(&mut rng)).collect();
    let ris_rx = (0..n).map(|_| cn_unit(&mut rng)).collect();
    ChannelRealization::new(direct, tx_ris, ris_rx)
}

/// Co-phases every cascade term with the direct path:
/// `φ_n = θ1 − θ2n − θ3n`, `γ_n = 1/N`.
pub fn align_phases(channels: &ChannelRealization) -> ReflectionConfig {
    let n = channels.elements();
    let theta1 = channels.direct_phase();
    let phi = channels
        .tx_ris
        .iter()
        .zip(&channels.ris_rx)
        .map(|(h2, h3)| wrap_phase(theta1 - polar(*h2).1 - polar(*h3).1))
        .collect();
    ReflectionConfig {
        gamma: vec![1.0 / n as f64; n],
        phi,
    }
}

/// `Δ = h1 + Σ_n γ_n e^{jφ_n} h2n h3n`.
pub fn effective_gain(channels: &ChannelRealization, reflection: &ReflectionConfig) -> Result<Complex64> {
    if reflection.gamma.len() != channels.elements() {
        return Err(Error::Contract(format!(
            "{} reflection elements for {} channel elements",
            reflection.gamma.len(),
            channels.elements()
        )));
    }
    let mut delta = channels.direct;
    for n in 0..channels.elements() {
        let coeff = Complex64::from_polar(reflection.gamma[n], reflection.phi[n]);
        delta += coeff * channels.tx_ris[n] * channels.ris_rx[n];
    }
    Ok(delta)
}

/// `ĥ = h(1 + e)` for every coefficient, `e ~ CN(0, ε²)`, drawn in the
/// order `h1, h2, h3`.
pub fn perturb_csi(channels: &ChannelRealization, csi: CsiErrorModel, seed: u64) -> ChannelRealization {
    let mut rng = rng_from(seed);
    let eps = csi.epsilon;
    let mut perturb = |h: Complex64| h * (Complex64::new(1.0, 0.0) + cn_unit(&mut rng) * eps);
    let direct = perturb(channels.direct);
    let tx_ris = channels.tx_ris.iter().map(|&h| perturb(h)).collect();
    let ris_rx = channels.ris_rx.iter().map(|&h| perturb(h)).collect();
    ChannelRealization { direct, tx_ris, ris_rx }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseBenchReport {
    pub elements: usize,
    pub trials: usize,
    pub random_configs: usize,
    pub mean_aligned_gain: f64,
    pub mean_direct_gain: f64,
    /// Mean of `|Δ(aligned)| / |h1|`.
    pub mean_gain_ratio: f64,
    /// Random configurations whose `|Δ|` exceeded alignment by more than
    /// rounding.
    pub beat_count: usize,
}

/// Compares phase alignment against `random_configs` uniformly random
/// phase vectors (same `γ = 1/N`) on each of `trials` realizations.
pub fn phase_bench(n: usize, trials: usize, random_configs: usize, seed: u64) -> Result<PhaseBenchReport> {
    if trials == 0 {
        return Err(Error::Contract("trials must be at least 1".into()));
    }
    let mut aligned_sum = 0.0;
    let mut direct_sum = 0.0;
    let mut ratio_sum = 0.0;
    let mut beat_count = 0;
    for t in 0..trials {
        let ch = sample_channels(n, derive_seed(seed, &[stream::BENCH, t as u64]))?;
        let aligned = effective_gain(&ch, &align_phases(&ch))?.norm();
        let direct = ch.direct.norm();
        aligned_sum += aligned;
        direct_sum += direct;
        ratio_sum += aligned / direct;
        let mut rng = rng_from(derive_seed(seed, &[stream::BENCH, t as u64, 1]));
        for _ in 0..random_configs {
            let phi = (0..n).map(|_| rng.random_range(0.0..TAU)).collect();
            let random = ReflectionConfig {
                gamma: vec![1.0 / n as f64; n],
                phi,
            };
            if effective_gain(&ch, &random)?.norm() > aligned * (1.0 + 1e-12) {
                beat_count += 1;
            }
        }
    }
    let k = trials as f64;
    Ok(PhaseBenchReport {
        elements: n,
        trials,
        random_configs,
        mean_aligned_gain: aligned_sum / k,
        mean_direct_gain: direct_sum / k,
        mean_gain_ratio: ratio_sum / k,
        beat_count,
    })
}

/// Noise variance for a transmit SNR in dB, relative to unit symbol power.
pub fn snr_to_sigma(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

fn complex_rows(values: &[Complex64]) -> Tensor {
    Tensor::from_fn(&[values.len(), 2], |i| {
        let c = values[i / 2];
        if i % 2 == 0 {
            c.re
        } else {
            c.im
        }
    })
}

/// Noise block `[rows×M×2]`; row `r` is drawn from `seeds[r]` with
/// `σ²/2` per real component.
pub fn noise_block(rows: usize, symbols: usize, noise: NoiseModel, seeds: &[u64]) -> Result<Tensor> {
    if seeds.len() != rows {
        return Err(Error::Contract(format!("{} noise seeds for {rows} rows", seeds.len())));
    }
    let sd = (noise.variance / 2.0).sqrt();
    let mut data = Vec::with_capacity(rows * symbols * 2);
    for &s in seeds {
        let mut rng = rng_from(s);
        for _ in 0..symbols * 2 {
            let z: f64 = rng.sample(StandardNormal);
            data.push(sd * z);
        }
    }
    Ok(Tensor::new(vec![rows, symbols, 2], data)?)
}

/// `y = Δ_r·x_r + n_r` for each row `r` of `x[B×M×2]`.
///
/// Gains and noise enter the tape as constants, so gradients flow to `x`
/// only.
pub fn apply_channel(
    tape: &mut Tape,
    x: Var,
    gains: &[Complex64],
    noise: NoiseModel,
    noise_seeds: &[u64],
) -> Result<Var> {
    let shape = tape.shape(x).to_vec();
    if shape.len() != 3 || shape[2] != 2 || gains.len() != shape[0] {
        return Err(Error::Contract(format!(
            "channel input {shape:?} with {} gains",
            gains.len()
        )));
    }
    let g = tape.constant(complex_rows(gains));
    let faded = tape.complex_mul(x, g)?;
    if noise.variance == 0.0 {
        return Ok(faded);
    }
    let n = tape.constant(noise_block(shape[0], shape[1], noise, noise_seeds)?);
    Ok(tape.add(faded, n)?)
}

/// Multiplies row `r` of `y[B×M×2]` by `e^{−jθ_r}`.
pub fn derotate(tape: &mut Tape, y: Var, thetas: &[f64]) -> Result<Var> {
    let rot: Vec<Complex64> = thetas.iter().map(|&t| Complex64::from_polar(1.0, -t)).collect();
    let r = tape.constant(complex_rows(&rot));
    Ok(tape.complex_mul(y, r)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_phase_range() {
        for t in [-1e-18, -TAU, 0.0, TAU, 7.0, -7.0, 1e9] {
            let w = wrap_phase(t);
            assert!((0.0..TAU).contains(&w), "{t} -> {w}");
        }
    }

    #[test]
    fn reflection_bounds() {
        assert!(ReflectionConfig::new(vec![1.2], vec![0.0]).is_err());
        assert!(ReflectionConfig::new(vec![0.5], vec![TAU]).is_err());
        assert!(ReflectionConfig::new(vec![0.5], vec![0.1, 0.2]).is_err());
        assert!(ReflectionConfig::new(vec![0.5, 1.0], vec![0.1, 6.0]).is_ok());
    }

    #[test]
    fn snr_conversion() {
        assert_eq!(snr_to_sigma(0.0), 1.0);
        assert!((snr_to_sigma(10.0) - 0.1).abs() < 1e-15);
        assert!((snr_to_sigma(7.0) - 0.199_526_231_496_887_9).abs() < 1e-12);
    }

    #[test]
    fn polar_views_agree() {
        let ch = sample_channels(4, 11).unwrap();
        for h in std::iter::once(ch.direct()).chain(ch.tx_ris().iter().copied()) {
            let (a, p) = polar(h);
            assert!(a >= 0.0 && (0.0..TAU).contains(&p));
            let back = Complex64::from_polar(a, p);
            assert!((back - h).norm() <= 1e-12);
        }
    }
}
