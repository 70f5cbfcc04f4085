//! Image-quality metrics, reward functions, and the pre-filters applied
//! before scoring (thresholding, Perona-Malik anisotropic diffusion), plus
//! the adversarial reward term backed by a small discriminator network.

use alloc::format;
use alloc::vec::Vec;
use libm::{exp, log, log10};

use crate::beamform::BModeImage;
use crate::nn::{backward_trace, forward, forward_trace, init_params, Activation, Adam, MlpSpec};
use crate::rng::Rng;
use crate::Error;

/// PSNR reported for a zero-error comparison.
pub const PSNR_CAP_DB: f64 = 100.0;

fn check_same_shape(a: &BModeImage, b: &BModeImage) -> crate::Result<()> {
    if !a.same_shape(b) {
        return Err(Error::Dimension {
            what: "image shapes",
            expected: a.data().len(),
            got: b.data().len(),
        });
    }
    Ok(())
}

/// Mean squared error.
pub fn mse(a: &BModeImage, b: &BModeImage) -> crate::Result<f64> {
    check_same_shape(a, b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.data().len() as f64)
}

/// Mean absolute error.
pub fn mae(a: &BModeImage, b: &BModeImage) -> crate::Result<f64> {
    check_same_shape(a, b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| if x > y { x - y } else { y - x })
        .sum();
    Ok(sum / a.data().len() as f64)
}

/// Peak signal-to-noise ratio for unit data range, capped at
/// [`PSNR_CAP_DB`] when the error is exactly zero.
pub fn psnr(a: &BModeImage, b: &BModeImage) -> crate::Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok(10.0 * log10(1.0 / m))
}

const SSIM_WINDOW: usize = 7;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// Mean local SSIM with a 7x7 uniform window over all fully interior window
/// positions; data range 1.
pub fn ssim(a: &BModeImage, b: &BModeImage) -> crate::Result<f64> {
    check_same_shape(a, b)?;
    let rows = a.num_scanlines();
    let cols = a.num_depth_samples();
    if rows < SSIM_WINDOW || cols < SSIM_WINDOW {
        return Err(Error::Dimension {
            what: "image smaller than ssim window",
            expected: SSIM_WINDOW,
            got: rows.min(cols),
        });
    }
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for r0 in 0..=(rows - SSIM_WINDOW) {
        for c0 in 0..=(cols - SSIM_WINDOW) {
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for r in r0..r0 + SSIM_WINDOW {
                for c in c0..c0 + SSIM_WINDOW {
                    let x = a.at(r, c);
                    let y = b.at(r, c);
                    sa += x;
                    sb += y;
                    saa += x * x;
                    sbb += y * y;
                    sab += x * y;
                }
            }
            let mu_a = sa / n;
            let mu_b = sb / n;
            let var_a = saa / n - mu_a * mu_a;
            let var_b = sbb / n - mu_b * mu_b;
            let cov = sab / n - mu_a * mu_b;
            let s = ((2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2));
            total += s;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Reconstruction reward: negated squared L2 norm of the pixel difference
/// (sum over pixels, not the mean).
pub fn reward_mse(s: &BModeImage, truth: &BModeImage) -> crate::Result<f64> {
    check_same_shape(s, truth)?;
    let sum: f64 = s
        .data()
        .iter()
        .zip(truth.data())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum();
    Ok(-sum)
}

/// Zeroes every pixel below the threshold; others pass through unchanged.
pub fn threshold_filter(img: &BModeImage, thresh: f64) -> BModeImage {
    let data: Vec<f64> = img
        .data()
        .iter()
        .map(|&v| if v < thresh { 0.0 } else { v })
        .collect();
    BModeImage::from_data(img.num_scanlines(), img.num_depth_samples(), data)
        .expect("thresholding preserves the [0, 1] range")
}

/// Explicit Perona-Malik scheme parameters. The step size must not exceed
/// 0.25 for the 4-neighbor stencil to be stable.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionConfig {
    pub iterations: usize,
    /// Conduction coefficient kappa in g(d) = exp(-(d/kappa)^2).
    pub kappa: f64,
    pub step_size: f64,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        DiffusionConfig {
            iterations: 5,
            kappa: 0.1,
            step_size: 0.2,
        }
    }
}

impl DiffusionConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if self.iterations < 1 {
            return Err(Error::InvalidConfig("diffusion iterations must be >= 1".into()));
        }
        if !(self.kappa > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "diffusion kappa must be > 0, got {}",
                self.kappa
            )));
        }
        if !(self.step_size > 0.0 && self.step_size <= 0.25) {
            return Err(Error::InvalidConfig(format!(
                "diffusion step size must be in (0, 0.25], got {}",
                self.step_size
            )));
        }
        Ok(())
    }
}

/// Perona-Malik anisotropic diffusion: explicit 4-neighbor iterations in
/// flux form with exponential conduction `exp(-(d/kappa)^2)` and reflective
/// boundaries. Flux antisymmetry conserves the pixel sum.
pub fn anisotropic_diffusion(img: &BModeImage, cfg: &DiffusionConfig) -> BModeImage {
    cfg.validate().expect("diffusion config validated by caller");
    let rows = img.num_scanlines();
    let cols = img.num_depth_samples();
    let mut cur = img.data().to_vec();
    let inv_k2 = 1.0 / (cfg.kappa * cfg.kappa);
    let g = |d: f64| exp(-d * d * inv_k2);
    for _ in 0..cfg.iterations {
        let mut next = cur.clone();
        // Horizontal edges (within a row), then vertical edges: each flux is
        // added on one side and removed on the other.
        for r in 0..rows {
            for c in 0..cols.saturating_sub(1) {
                let a = cur[r * cols + c];
                let b = cur[r * cols + c + 1];
                let d = b - a;
                let flux = cfg.step_size * g(d) * d;
                next[r * cols + c] += flux;
                next[r * cols + c + 1] -= flux;
            }
        }
        for r in 0..rows.saturating_sub(1) {
            for c in 0..cols {
                let a = cur[r * cols + c];
                let b = cur[(r + 1) * cols + c];
                let d = b - a;
                let flux = cfg.step_size * g(d) * d;
                next[r * cols + c] += flux;
                next[(r + 1) * cols + c] -= flux;
            }
        }
        cur = next;
    }
    for v in &mut cur {
        *v = v.clamp(0.0, 1.0);
    }
    BModeImage::from_data(rows, cols, cur).expect("diffusion preserves the [0, 1] range")
}

/// Weight and learning setup for the adversarial reward term.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvRewardConfig {
    /// Weight of the discriminator penalty in the combined reward.
    pub lambda_d: f64,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
}

impl Default for AdvRewardConfig {
    fn default() -> Self {
        AdvRewardConfig {
            lambda_d: 1e-5,
            hidden: alloc::vec![128],
            learning_rate: 1e-3,
        }
    }
}

impl AdvRewardConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.lambda_d >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "lambda_d must be >= 0, got {}",
                self.lambda_d
            )));
        }
        if self.hidden.is_empty() || self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::InvalidConfig("discriminator needs nonempty hidden sizes".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("discriminator learning rate must be > 0".into()));
        }
        Ok(())
    }
}

const PENALTY_EPSILON: f64 = 1e-12;

/// Sigmoid-output MLP scoring downsampled reconstructions as real (fully
/// sampled) vs fake (subsampled), updated online with one binary
/// cross-entropy step per environment step.
#[derive(Debug, Clone)]
pub struct Discriminator {
    spec: MlpSpec,
    params: Vec<f64>,
    opt: Adam,
}

impl Discriminator {
    pub fn new(input_dim: usize, cfg: &AdvRewardConfig, rng: &mut Rng) -> crate::Result<Self> {
        cfg.validate()?;
        let spec = MlpSpec::with_hidden(input_dim, &cfg.hidden, 1, Activation::Sigmoid)?;
        let params = init_params(&spec, rng);
        let opt = Adam::new(cfg.learning_rate, spec.param_count());
        Ok(Discriminator { spec, params, opt })
    }

    #[cfg(test)]
    pub(crate) fn with_params(spec: MlpSpec, params: Vec<f64>, learning_rate: f64) -> Self {
        let opt = Adam::new(learning_rate, spec.param_count());
        Discriminator { spec, params, opt }
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    /// D(x), the probability the input is a full reconstruction.
    pub fn score(&self, encoded: &[f64]) -> crate::Result<f64> {
        Ok(forward(&self.spec, &self.params, encoded)?[0])
    }

    /// Non-saturating penalty `-log(D(x) + eps)`.
    pub fn penalty(&self, encoded: &[f64]) -> crate::Result<f64> {
        Ok(-log(self.score(encoded)? + PENALTY_EPSILON))
    }

    /// One binary cross-entropy step on a (real, fake) pair; returns the
    /// pre-step loss.
    pub fn update_pair(&mut self, real: &[f64], fake: &[f64]) -> crate::Result<f64> {
        let mut grads = alloc::vec![0.0; self.spec.param_count()];
        let mut loss = 0.0;
        for (input, label) in [(real, 1.0), (fake, 0.0)] {
            let trace = forward_trace(&self.spec, &self.params, input)?;
            let y = trace.output()[0].clamp(1e-7, 1.0 - 1e-7);
            loss += -(label * log(y) + (1.0 - label) * log(1.0 - y)) / 2.0;
            // d/dy of the averaged BCE.
            let dy = (-(label / y) + (1.0 - label) / (1.0 - y)) / 2.0;
            backward_trace(&self.spec, &self.params, &trace, &[dy], &mut grads);
        }
        self.opt.step(&mut self.params, &grads);
        Ok(loss)
    }

}

/// Combined reward of the in-vivo style pipeline: SSIM of the pre-filtered
/// images minus `lambda_d` times the discriminator penalty on the
/// subsampled reconstruction. The discriminator takes one update per call
/// with the full reconstruction as the real sample.
pub fn reward_ssim_adversarial(
    s_encoded: &[f64],
    truth_encoded: &[f64],
    ssim_value: f64,
    lambda_d: f64,
    disc: &mut Discriminator,
) -> crate::Result<f64> {
    let penalty = disc.penalty(s_encoded)?;
    disc.update_pair(truth_encoded, s_encoded)?;
    Ok(ssim_value - lambda_d * penalty)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn img(rows: usize, cols: usize, data: Vec<f64>) -> BModeImage {
        BModeImage::from_data(rows, cols, data).unwrap()
    }

    fn uniform_img(rows: usize, cols: usize, v: f64) -> BModeImage {
        img(rows, cols, vec![v; rows * cols])
    }

    #[test]
    fn metric_identities() {
        let a = img(8, 8, (0..64).map(|i| i as f64 / 64.0).collect());
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert_eq!(mae(&a, &a).unwrap(), 0.0);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP_DB);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_offset_metrics() {
        let a = uniform_img(8, 8, 0.4);
        let b = uniform_img(8, 8, 0.5);
        assert!((mse(&a, &b).unwrap() - 0.01).abs() < 1e-12);
        assert!((mae(&a, &b).unwrap() - 0.1).abs() < 1e-12);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn mse_dominates_mae_squared() {
        let mut rng = Rng::seed_from_u64(7);
        for _ in 0..20 {
            let a = img(7, 7, (0..49).map(|_| rng.next_f64()).collect());
            let b = img(7, 7, (0..49).map(|_| rng.next_f64()).collect());
            let m = mse(&a, &b).unwrap();
            let l1 = mae(&a, &b).unwrap();
            assert!(m >= l1 * l1 - 1e-12);
        }
    }

    #[test]
    fn metrics_reject_shape_mismatch() {
        let a = uniform_img(8, 8, 0.0);
        let b = uniform_img(8, 7, 0.0);
        assert!(mse(&a, &b).is_err());
        assert!(ssim(&a, &b).is_err());
    }

    #[test]
    fn ssim_constant_images_match_closed_form() {
        let c = 0.3;
        let d = 0.2;
        let a = uniform_img(9, 9, c);
        let b = uniform_img(9, 9, c + d);
        let got = ssim(&a, &b).unwrap();
        let want = (2.0 * c * (c + d) + SSIM_C1) / (c * c + (c + d) * (c + d) + SSIM_C1);
        assert!((got - want).abs() < 1e-12, "got {got}, want {want}");
    }

    #[test]
    fn ssim_is_symmetric() {
        let mut rng = Rng::seed_from_u64(8);
        let a = img(8, 9, (0..72).map(|_| rng.next_f64()).collect());
        let b = img(8, 9, (0..72).map(|_| rng.next_f64()).collect());
        let ab = ssim(&a, &b).unwrap();
        let ba = ssim(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-12);
        assert!((-1.0..=1.0).contains(&ab));
    }

    #[test]
    fn reward_mse_examples() {
        let a = uniform_img(4, 4, 0.5);
        assert_eq!(reward_mse(&a, &a).unwrap(), 0.0);
        let mut data = vec![0.0; 16];
        data[5] = 1.0;
        let b = img(4, 4, data);
        let zero = uniform_img(4, 4, 0.0);
        assert_eq!(reward_mse(&b, &zero).unwrap(), -1.0);
        let mut rng = Rng::seed_from_u64(9);
        for _ in 0..10 {
            let x = img(4, 4, (0..16).map(|_| rng.next_f64()).collect());
            let y = img(4, 4, (0..16).map(|_| rng.next_f64()).collect());
            assert!(reward_mse(&x, &y).unwrap() <= 0.0);
        }
    }

    #[test]
    fn threshold_filter_rules() {
        let a = img(2, 2, vec![0.05, 0.3, 1.0, 0.0]);
        let t0 = threshold_filter(&a, 0.0);
        assert_eq!(t0.data(), a.data());
        let t = threshold_filter(&a, 0.1);
        assert_eq!(t.data(), &[0.0, 0.3, 1.0, 0.0]);
        let again = threshold_filter(&t, 0.1);
        assert_eq!(again.data(), t.data());
        // Exactly 1.0 survives threshold 1.0, everything below is zeroed.
        let high = threshold_filter(&a, 1.0);
        assert_eq!(high.data(), &[0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn diffusion_constant_image_is_fixed_point() {
        let a = uniform_img(6, 6, 0.37);
        let out = anisotropic_diffusion(&a, &DiffusionConfig::default());
        assert_eq!(out.data(), a.data());
    }

    #[test]
    fn diffusion_conserves_pixel_sum_per_iteration() {
        let mut rng = Rng::seed_from_u64(10);
        let a = img(10, 12, (0..120).map(|_| rng.next_f64()).collect());
        let before: f64 = a.data().iter().sum();
        let mut cfg = DiffusionConfig::default();
        for iters in 1..=5 {
            cfg.iterations = iters;
            let out = anisotropic_diffusion(&a, &cfg);
            let after: f64 = out.data().iter().sum();
            assert!(
                (after - before).abs() < 1e-9 * iters as f64,
                "iters {iters}: drift {}",
                after - before
            );
        }
    }

    #[test]
    fn diffusion_smooths_a_step_edge() {
        let mut data = vec![0.0; 64];
        for r in 0..8 {
            for c in 4..8 {
                data[r * 8 + c] = 1.0;
            }
        }
        let a = img(8, 8, data);
        let tv = |im: &BModeImage| -> f64 {
            let mut t = 0.0;
            for r in 0..8 {
                for c in 0..7 {
                    t += (im.at(r, c + 1) - im.at(r, c)).abs();
                }
            }
            for r in 0..7 {
                for c in 0..8 {
                    t += (im.at(r + 1, c) - im.at(r, c)).abs();
                }
            }
            t
        };
        let mut cfg = DiffusionConfig {
            kappa: 0.5,
            ..DiffusionConfig::default()
        };
        let mut last_tv = tv(&a);
        for iters in 1..=4 {
            cfg.iterations = iters;
            let out = anisotropic_diffusion(&a, &cfg);
            let now = tv(&out);
            assert!(now <= last_tv + 1e-12, "iters {iters}: tv {now} > {last_tv}");
            last_tv = now;
        }
    }

    #[test]
    fn diffusion_config_validation() {
        assert!(DiffusionConfig::default().validate().is_ok());
        assert!(DiffusionConfig {
            step_size: 0.3,
            ..DiffusionConfig::default()
        }
        .validate()
        .is_err());
        assert!(DiffusionConfig {
            iterations: 0,
            ..DiffusionConfig::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn penalty_is_one_at_inverse_e() {
        // Zero-weight net whose output bias sets sigmoid(z) = 1/e.
        let spec = MlpSpec::with_hidden(4, &[3], 1, Activation::Sigmoid).unwrap();
        let mut params = vec![0.0; spec.param_count()];
        let z = -log(core::f64::consts::E - 1.0);
        let pc = spec.param_count();
        params[pc - 1] = z;
        let disc = Discriminator::with_params(spec, params, 1e-3);
        let p = disc.penalty(&[0.0; 4]).unwrap();
        assert!((p - 1.0).abs() < 1e-9, "penalty {p}");
    }

    #[test]
    fn lambda_zero_reduces_to_ssim() {
        let mut rng = Rng::seed_from_u64(11);
        let cfg = AdvRewardConfig {
            hidden: vec![8],
            ..AdvRewardConfig::default()
        };
        let mut disc = Discriminator::new(4, &cfg, &mut rng).unwrap();
        let s_enc = [0.1, 0.2, 0.3, 0.4];
        let t_enc = [0.1, 0.25, 0.3, 0.4];
        let r = reward_ssim_adversarial(&s_enc, &t_enc, 0.87, 0.0, &mut disc).unwrap();
        assert_eq!(r, 0.87);
    }

    #[test]
    fn discriminator_separates_toy_classes() {
        let mut rng = Rng::seed_from_u64(12);
        let cfg = AdvRewardConfig {
            hidden: vec![16],
            learning_rate: 5e-3,
            ..AdvRewardConfig::default()
        };
        let dim = 8;
        let mut disc = Discriminator::new(dim, &cfg, &mut rng).unwrap();
        let sample = |rng: &mut Rng, real: bool| -> Vec<f64> {
            (0..dim)
                .map(|_| {
                    let center = if real { 0.7 } else { 0.3 };
                    (center + 0.1 * rng.normal()).clamp(0.0, 1.0)
                })
                .collect()
        };
        for _ in 0..500 {
            let real = sample(&mut rng, true);
            let fake = sample(&mut rng, false);
            disc.update_pair(&real, &fake).unwrap();
        }
        let mut correct = 0;
        let trials = 200;
        for _ in 0..trials {
            if disc.score(&sample(&mut rng, true)).unwrap() > 0.5 {
                correct += 1;
            }
            if disc.score(&sample(&mut rng, false)).unwrap() < 0.5 {
                correct += 1;
            }
        }
        let acc = correct as f64 / (2 * trials) as f64;
        assert!(acc >= 0.95, "accuracy {acc}");
    }

    #[test]
    fn discriminator_update_reduces_loss_on_repeated_pair() {
        let mut rng = Rng::seed_from_u64(13);
        let cfg = AdvRewardConfig {
            hidden: vec![8],
            learning_rate: 1e-2,
            ..AdvRewardConfig::default()
        };
        let mut disc = Discriminator::new(4, &cfg, &mut rng).unwrap();
        let real = [0.9, 0.8, 0.9, 0.7];
        let fake = [0.1, 0.2, 0.1, 0.3];
        let first = disc.update_pair(&real, &fake).unwrap();
        let mut last = first;
        for _ in 0..50 {
            last = disc.update_pair(&real, &fake).unwrap();
        }
        assert!(last < first, "loss {last} !< {first}");
    }
}
